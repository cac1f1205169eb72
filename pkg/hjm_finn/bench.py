from dataclasses import dataclass, field
import logging
import math
import os

import numpy as np

from hjm_finn.exceptions import DataFileError, SimulationError
from hjm_finn.finn_trainer import SamplerConfig, draw_contracts
from hjm_finn.mc_engine import MonteCarloPricer
from hjm_finn.utils import TEST_SET_STREAM, ensure_dir_exists, make_rng, write_file

TIMING_REPEATS = 5
FINN_WARMUP = 1

ERROR_HEADER = ['k', 'mae', 'n_contracts']
TIMING_HEADER = ['k', 'mc_s', 'finn_s', 'speedup', 'mae']
SCATTER_HEADER = ['k', 'finn_price', 'mc_price', 'strike', 'tau1', 'delta']
LOSSES_HEADER = ['k', 'pde', 'bc', 'zs']


@dataclass
class BenchReport:
    """
    Resultado de la comparación entre la red y Monte Carlo para una grilla.

    Attributes
    ----------
    k : int
        Cantidad de nodos de la grilla
    mae : float
        Promedio de |FINN - MC| por unidad de nocional
    mc_time_per_contract : float
        Segundos por contrato de Monte Carlo
    finn_time_per_contract : float
        Segundos por contrato de la red
    n_contracts : int
    scatter : list
        Filas con el precio de cada motor por contrato
    final_losses : dict
        Pérdidas finales guardadas en el checkpoint, si existen
    """
    k: int
    mae: float
    mc_time_per_contract: float
    finn_time_per_contract: float
    n_contracts: int
    scatter: list = field(default_factory=list)
    final_losses: dict = None

    @property
    def speedup(self):
        if self.finn_time_per_contract <= 0:
            return math.inf
        return self.mc_time_per_contract / self.finn_time_per_contract

    def timing_row(self):
        return {
            'k': self.k,
            'mc_s': self.mc_time_per_contract,
            'finn_s': self.finn_time_per_contract,
            'speedup': self.speedup,
            'mae': self.mae,
        }


def make_test_set(dataset, cfg, n, seed):
    """
    n contratos con sus curvas, sorteados con un flujo aleatorio disjunto
    del de entrenamiento. Los strikes salen de los nodos de Chebyshev sin
    clones de strike cero.
    """
    if n == 0:
        return []
    rng = make_rng(seed, TEST_SET_STREAM)
    return list(draw_contracts(dataset, cfg, n, rng).items(dataset.grid))


def run_benchmark(model, dataset, vols, mc_cfg, n, seed, sampler_cfg=None,
                  repeats=TIMING_REPEATS, mc_repeats=1):
    """
    Valúa el set de prueba con la red y con Monte Carlo, mide ambos motores
    y arma el BenchReport.

    Parameters
    ----------
    model : FinnPricer
    dataset : CurveDataset
        Se rediscretiza sobre la grilla del modelo
    vols : VolModel
    mc_cfg : McConfig
    n : int
        Tamaño del set de prueba
    seed : int
    repeats : int
        Repeticiones medidas de la red, luego de una pasada de calentamiento
    mc_repeats : int
        Repeticiones medidas de Monte Carlo

    Raises
    ------
    SimulationError
        si Monte Carlo falla en algún contrato
    """
    grid = model.grid
    dataset = dataset.regrid(grid)
    test_set = make_test_set(dataset, sampler_cfg or SamplerConfig(), n, seed)
    if not test_set:
        final_losses = model.network.training.get('final_losses')
        return BenchReport(grid.k_count, 0.0, 0.0, 0.0, 0, [], final_losses)

    logging.info(f'K={grid.k_count}: valuando {len(test_set)} contratos con la red')
    finn_prices, finn_time = model.run(test_set, repeats=repeats, warmup=FINN_WARMUP)

    logging.info(f'K={grid.k_count}: valuando {len(test_set)} contratos con Monte Carlo')
    mc_pricer = MonteCarloPricer(grid, vols, mc_cfg, integration=model.integration)
    try:
        mc_prices, mc_time = mc_pricer.run(test_set, repeats=mc_repeats)
    except SimulationError as err:
        logging.error(f'Falló Monte Carlo para K={grid.k_count}: {err}')
        raise

    finn_prices = np.asarray(finn_prices)
    mc_prices = np.asarray(mc_prices)
    scatter = [
        {
            'k': grid.k_count,
            'finn_price': float(finn),
            'mc_price': float(mc),
            'strike': contract.strike,
            'tau1': contract.tau1,
            'delta': contract.delta,
        }
        for finn, mc, (_, _, contract) in zip(finn_prices, mc_prices, test_set)
    ]
    count = len(test_set)
    return BenchReport(
        k=grid.k_count,
        mae=float(np.mean(np.abs(finn_prices - mc_prices))),
        mc_time_per_contract=mc_time / count,
        finn_time_per_contract=finn_time / count,
        n_contracts=count,
        scatter=scatter,
        final_losses=model.network.training.get('final_losses'),
    )


def emit_tables(reports, out_dir):
    """
    Escribe error.csv, timing.csv, scatter.csv y losses.csv en `out_dir`,
    una fila por grilla (o por contrato en scatter.csv).

    Raises
    ------
    DataFileError
        si no se puede escribir en el directorio
    """
    if isinstance(reports, BenchReport):
        reports = [reports]
    try:
        ensure_dir_exists(out_dir)
        write_file(
            ERROR_HEADER,
            [{'k': r.k, 'mae': r.mae, 'n_contracts': r.n_contracts} for r in reports],
            os.path.join(out_dir, 'error.csv'),
        )
        write_file(TIMING_HEADER, [r.timing_row() for r in reports],
                   os.path.join(out_dir, 'timing.csv'))
        write_file(SCATTER_HEADER, [row for r in reports for row in r.scatter],
                   os.path.join(out_dir, 'scatter.csv'))
        write_file(
            LOSSES_HEADER,
            [{'k': r.k, **r.final_losses} for r in reports if r.final_losses],
            os.path.join(out_dir, 'losses.csv'),
        )
    except OSError as err:
        raise DataFileError(f'No se pudieron escribir las tablas en {out_dir}: {err}')
    return [os.path.join(out_dir, name)
            for name in ('error.csv', 'timing.csv', 'scatter.csv', 'losses.csv')]
