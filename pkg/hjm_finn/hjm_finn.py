#!/usr/bin/env python3
# -*- coding: utf-8 -*-

from csv import DictWriter
from json import JSONDecodeError
import io
import json
import logging
import os

import click

from hjm_finn import bench, finn_trainer, market_data, mc_engine
from hjm_finn.exceptions import FinnError, InvalidConfigurationError
from hjm_finn.hjm_core import CapletContract, integration_matrix
from hjm_finn.pricing_api import FinnPricer
from hjm_finn.utils import ensure_dir_exists, write_file
from hjm_finn.vol_model import (
    DEFAULT_CAP_M,
    DEFAULT_ESTIMATION_TENORS,
    VolModel,
    estimate_vol_model,
)

DEFAULT_K = 10
DEFAULT_TAU_MAX = 5.0
DEFAULT_PRESET = 'desk'
DEFAULT_TEST_SIZE = 1000
DEFAULT_BENCH_SEED = 11
LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR']


def read_config(file_path, command):
    """Retorna la sección del comando; sin archivo no hay configuración."""
    if not file_path:
        return {}
    try:
        with open(file_path) as config_data:
            return json.load(config_data).get(command, {})
    except JSONDecodeError:
        raise InvalidConfigurationError(
            "El formato del archivo de configuración es inválido"
        )
    except OSError as err:
        raise InvalidConfigurationError(f"No se pudo leer la configuración: {err}")


def resolve(value, config, key, default=None, cast=float):
    """Precedencia: opción de línea de comandos, luego configuración, luego default."""
    if value is not None:
        return value
    raw = config.get(key, default)
    if raw is None:
        return None
    if cast in (int, float) and not market_data.is_finite_number(raw):
        raise InvalidConfigurationError(f"El valor de {key} no es numérico: {raw}")
    return cast(float(raw)) if cast is int else cast(raw)


def resolve_flag(value, config, key):
    return bool(value or config.get(key, False))


def validate_required(value, key):
    if value is None or value == '':
        raise InvalidConfigurationError(f"La clave {key} no existe")
    return value


def validate_positive(value, key):
    if not value > 0:
        raise InvalidConfigurationError(f"{key} debe ser positivo")
    return value


def validate_grid(k_count, tau_max):
    if k_count < 2:
        raise InvalidConfigurationError("La grilla necesita al menos 2 nodos")
    validate_positive(tau_max, 'tau_max')
    return market_data.TenorGrid(k_count, tau_max)


def validate_preset(name):
    if name not in finn_trainer.PRESETS:
        raise InvalidConfigurationError(
            f"Preset desconocido: {name}. Opciones: {', '.join(sorted(finn_trainer.PRESETS))}"
        )
    return name


def validate_fraction(value, key):
    if not 0.0 <= value <= 1.0:
        raise InvalidConfigurationError(f"{key} debe estar entre 0 y 1")
    return value


def validate_output_path(file_path, key):
    """Crea el directorio contenedor; el path no puede ser un directorio."""
    validate_required(file_path, key)
    if os.path.isdir(file_path):
        raise InvalidConfigurationError(f'Error: el path ingresado para {key} es un directorio')
    ensure_dir_exists(os.path.split(file_path)[0])
    return file_path


def contract_from_options(tau1, delta, strike, config):
    return CapletContract(
        validate_required(resolve(tau1, config, 'tau1'), 'tau1'),
        validate_required(resolve(delta, config, 'delta'), 'delta'),
        validate_required(resolve(strike, config, 'strike'), 'strike'),
    )


def config_option(function):
    return click.option(
        '--config',
        default=None,
        type=click.Path(exists=True),
        help='Archivo JSON con una sección por comando',
    )(function)


def contract_options(function):
    for name in ('--strike', '--delta', '--tau1'):
        function = click.option(name, type=float)(function)
    return function


@click.group()
@click.option('--log-level', default='WARNING', type=click.Choice(LOG_LEVELS))
@click.pass_context
def cli(ctx, log_level):
    logging.basicConfig(level=getattr(logging, log_level))


@cli.command()
@click.option('--data', type=str, help='Serie de parámetros Svensson (CSV o TSV)')
@click.option('--k', type=int)
@click.option('--tau-max', type=float)
@click.option('--eps', type=float)
@click.option('--percent', default=False, is_flag=True,
              help='Use este flag si las betas del archivo están en porcentaje')
@click.option('--bounds-from', type=str,
              help='Dataset JSON previo cuyas cotas de cuantiles se reutilizan')
@click.option('--out', type=str)
@config_option
@click.pass_context
def ingest(ctx, data, k, tau_max, eps, percent, bounds_from, out, config):
    try:
        config = read_config(file_path=config, command=ctx.command.name)
        data = validate_required(resolve(data, config, 'data', cast=str), 'data')
        out = validate_output_path(resolve(out, config, 'out', 'curves.json', cast=str), 'out')
        grid = validate_grid(
            resolve(k, config, 'k', DEFAULT_K, cast=int),
            resolve(tau_max, config, 'tau_max', DEFAULT_TAU_MAX),
        )
        eps = validate_positive(resolve(eps, config, 'eps', market_data.DEFAULT_EPS), 'eps')
        bounds = None
        if bounds_from or config.get('bounds_from'):
            previous = market_data.CurveDataset.read_json(bounds_from or config['bounds_from'])
            bounds = previous.filter_report.bounds

        dataset = market_data.ingest(
            data, grid, eps=eps, percent=resolve_flag(percent, config, 'percent'), bounds=bounds
        )
        dataset.write_json(out)
        click.echo(json.dumps(dataset.filter_report.to_dict(), indent=2))

    except FinnError as err:
        click.echo(err)
        ctx.exit(1)


@cli.command('estimate-vol')
@click.option('--data', type=str)
@click.option('--matrix', default=False, is_flag=True,
              help='Use este flag si el archivo es una matriz fecha x plazo')
@click.option('--constant-vol', default=False, is_flag=True,
              help='Volatilidad no proporcional al nivel de tasas')
@click.option('--cap-m', type=float)
@click.option('--eps', type=float)
@click.option('--percent', default=False, is_flag=True)
@click.option('--out', type=str)
@config_option
@click.pass_context
def estimate_vol(ctx, data, matrix, constant_vol, cap_m, eps, percent, out, config):
    try:
        config = read_config(file_path=config, command=ctx.command.name)
        data = validate_required(resolve(data, config, 'data', cast=str), 'data')
        out = validate_output_path(resolve(out, config, 'out', 'vol.json', cast=str), 'out')
        cap_m = validate_positive(resolve(cap_m, config, 'cap_m', DEFAULT_CAP_M), 'cap_m')
        eps = validate_positive(resolve(eps, config, 'eps', market_data.DEFAULT_EPS), 'eps')
        percent = resolve_flag(percent, config, 'percent')

        if resolve_flag(matrix, config, 'matrix'):
            tenors, levels = market_data.read_rate_matrix(data, percent=percent)
        else:
            tenors, levels = market_data.svensson_rate_matrix(
                data, config.get('tenors', DEFAULT_ESTIMATION_TENORS), percent=percent
            )
        vols = estimate_vol_model(
            levels,
            tenors,
            proportional=not resolve_flag(constant_vol, config, 'constant_vol'),
            eps=eps,
            cap_m=cap_m,
        )
        vols.write_json(out)
        click.echo(json.dumps(vols.to_dict(), indent=2))

    except FinnError as err:
        click.echo(err)
        ctx.exit(1)


@cli.command()
@click.option('--data', type=str, help='Dataset JSON generado por ingest')
@click.option('--vol', type=str, help='Modelo de volatilidad generado por estimate-vol')
@click.option('--k', type=int)
@click.option('--tau-max', type=float)
@click.option('--preset', type=click.Choice(sorted(finn_trainer.PRESETS)))
@click.option('--seed', type=int)
@click.option('--zero-strike-fraction', type=float)
@click.option('--out', type=str)
@click.option('--history', type=str, help='CSV con las pérdidas por época')
@config_option
@click.pass_context
def train(ctx, data, vol, k, tau_max, preset, seed, zero_strike_fraction, out, history,
          config):
    try:
        config = read_config(file_path=config, command=ctx.command.name)
        data = validate_required(resolve(data, config, 'data', cast=str), 'data')
        vol = validate_required(resolve(vol, config, 'vol', cast=str), 'vol')
        out = validate_output_path(resolve(out, config, 'out', 'model.json', cast=str), 'out')
        history = resolve(history, config, 'history', cast=str)
        if history:
            validate_output_path(history, 'history')
        grid = validate_grid(
            resolve(k, config, 'k', DEFAULT_K, cast=int),
            resolve(tau_max, config, 'tau_max', DEFAULT_TAU_MAX),
        )
        seed = resolve(seed, config, 'seed', 0, cast=int)

        if 'regimes' in config and preset is None:
            schedule = finn_trainer.TrainSchedule.from_list(config['regimes'])
        else:
            schedule = finn_trainer.TrainSchedule.from_preset(
                validate_preset(resolve(preset, config, 'preset', DEFAULT_PRESET, cast=str))
            )
        sampler_data = dict(config.get('sampler', {}))
        if zero_strike_fraction is not None:
            sampler_data['zero_strike_fraction'] = zero_strike_fraction
        sampler = finn_trainer.SamplerConfig.from_dict(sampler_data)
        validate_fraction(sampler.zero_strike_fraction, 'zero_strike_fraction')

        dataset = market_data.CurveDataset.read_json(data)
        vols = VolModel.read_json(vol)
        result = finn_trainer.train(
            dataset, vols, grid, schedule, sampler, seed=seed,
            loss_weights=config.get('loss_weights'),
        )
        result.network.save(out)
        if history:
            write_file(finn_trainer.HISTORY_HEADER, result.history_rows(), history)
        click.echo(json.dumps(result.network.training, indent=2))

    except FinnError as err:
        click.echo(err)
        ctx.exit(1)


@cli.command('mc-price')
@click.option('--curve', type=str, help='Curva JSON')
@click.option('--vol', type=str)
@contract_options
@click.option('--k', type=int)
@click.option('--tau-max', type=float)
@click.option('--paths', type=int)
@click.option('--dt', type=float)
@click.option('--seed', type=int)
@click.option('--antithetic', default=False, is_flag=True)
@click.option('--workers', type=int)
@config_option
@click.pass_context
def mc_price(ctx, curve, vol, tau1, delta, strike, k, tau_max, paths, dt, seed,
             antithetic, workers, config):
    try:
        config = read_config(file_path=config, command=ctx.command.name)
        curve = validate_required(resolve(curve, config, 'curve', cast=str), 'curve')
        vol = validate_required(resolve(vol, config, 'vol', cast=str), 'vol')
        grid = validate_grid(
            resolve(k, config, 'k', DEFAULT_K, cast=int),
            resolve(tau_max, config, 'tau_max', DEFAULT_TAU_MAX),
        )
        contract = contract_from_options(tau1, delta, strike, config)
        cfg = mc_engine.McConfig(
            n_paths=resolve(paths, config, 'paths', mc_engine.DEFAULT_PATHS, cast=int),
            dt=resolve(dt, config, 'dt', mc_engine.DEFAULT_DT),
            seed=resolve(seed, config, 'seed', 0, cast=int),
            antithetic=resolve_flag(antithetic, config, 'antithetic'),
            workers=resolve(workers, config, 'workers', 1, cast=int),
        )

        curve0, _ = market_data.load_curve_file(curve, grid)
        result = mc_engine.simulate_price(
            curve0, VolModel.read_json(vol), integration_matrix(grid), contract, cfg
        )
        click.echo(json.dumps(result.to_dict(), indent=2))

    except FinnError as err:
        click.echo(err)
        ctx.exit(1)


def quote_contract(ctx, model, curve, tau1, delta, strike, config):
    config = read_config(file_path=config, command=ctx.command.name)
    model = validate_required(resolve(model, config, 'model', cast=str), 'model')
    curve = validate_required(resolve(curve, config, 'curve', cast=str), 'curve')
    contract = contract_from_options(tau1, delta, strike, config)
    pricer = FinnPricer.load(model)
    curve0, params = market_data.load_curve_file(curve, pricer.grid)
    return pricer, pricer.price(curve0, params, contract)


@cli.command()
@click.option('--model', type=str, help='Checkpoint generado por train')
@click.option('--curve', type=str)
@contract_options
@config_option
@click.pass_context
def price(ctx, model, curve, tau1, delta, strike, config):
    try:
        _, quote = quote_contract(ctx, model, curve, tau1, delta, strike, config)
        click.echo(json.dumps(quote.to_dict(), indent=2))

    except FinnError as err:
        click.echo(err)
        ctx.exit(1)


@cli.command()
@click.option('--model', type=str)
@click.option('--curve', type=str)
@contract_options
@config_option
@click.pass_context
def greeks(ctx, model, curve, tau1, delta, strike, config):
    try:
        pricer, quote = quote_contract(ctx, model, curve, tau1, delta, strike, config)
        logging.info(f'Precio {quote.price}, theta {quote.theta}')
        output = io.StringIO()
        writer = DictWriter(output, fieldnames=['tau', 'delta'])
        writer.writeheader()
        writer.writerows(
            {'tau': float(tau), 'delta': float(value)}
            for tau, value in zip(pricer.grid.nodes, quote.curve_deltas)
        )
        click.echo(output.getvalue(), nl=False)

    except FinnError as err:
        click.echo(err)
        ctx.exit(1)


@cli.command('bench')
@click.option('--model', 'models', type=str, multiple=True,
              help='Checkpoint a comparar; se puede repetir, uno por K')
@click.option('--data', type=str)
@click.option('--vol', type=str, help='Por defecto, el modelo de volatilidad del checkpoint')
@click.option('--n', type=int)
@click.option('--paths', type=int)
@click.option('--dt', type=float)
@click.option('--seed', type=int)
@click.option('--workers', type=int)
@click.option('--out', type=str)
@click.option('--max-mae', type=float)
@config_option
@click.pass_context
def bench_command(ctx, models, data, vol, n, paths, dt, seed, workers, out, max_mae, config):
    try:
        config = read_config(file_path=config, command=ctx.command.name)
        models = list(models) or list(config.get('models', []))
        if not models:
            raise InvalidConfigurationError("La clave models no existe")
        data = validate_required(resolve(data, config, 'data', cast=str), 'data')
        out = validate_required(resolve(out, config, 'out', 'results', cast=str), 'out')
        if os.path.isfile(out):
            raise InvalidConfigurationError('Error: el path ingresado para out es un archivo')
        n = resolve(n, config, 'n', DEFAULT_TEST_SIZE, cast=int)
        seed = resolve(seed, config, 'seed', DEFAULT_BENCH_SEED, cast=int)
        max_mae = resolve(max_mae, config, 'max_mae')
        mc_cfg = mc_engine.McConfig(
            n_paths=resolve(paths, config, 'paths', mc_engine.DEFAULT_PATHS, cast=int),
            dt=resolve(dt, config, 'dt', mc_engine.DEFAULT_DT),
            seed=seed,
            workers=resolve(workers, config, 'workers', 1, cast=int),
        )
        sampler = finn_trainer.SamplerConfig.from_dict(config.get('sampler', {}))
        vol = resolve(vol, config, 'vol', cast=str)

        dataset = market_data.CurveDataset.read_json(data)
        reports = []
        for model_path in models:
            pricer = FinnPricer.load(model_path)
            vols = VolModel.read_json(vol) if vol else pricer.network.vol_model
            if vols is None:
                raise InvalidConfigurationError(
                    f'El checkpoint {model_path} no trae modelo de volatilidad; use --vol'
                )
            reports.append(bench.run_benchmark(pricer, dataset, vols, mc_cfg, n, seed, sampler))

        bench.emit_tables(reports, out)
        click.echo(json.dumps([report.timing_row() for report in reports], indent=2))

        failing = [r for r in reports if max_mae is not None and r.mae > max_mae]
        if failing:
            click.echo(
                f"MAE por encima de {max_mae} para K={', '.join(str(r.k) for r in failing)}"
            )
            ctx.exit(1)

    except FinnError as err:
        click.echo(err)
        ctx.exit(1)
