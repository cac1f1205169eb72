from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math
import time

import numpy as np

from hjm_finn.exceptions import InvalidConfigurationError, SimulationError
from hjm_finn.hjm_core import caplet_payoff, caplet_payoffs, drift_from_sigma
from hjm_finn.pricer_base import CapletPricer
from hjm_finn.utils import MONTE_CARLO_STREAM, make_rng
from hjm_finn.vol_model import N_FACTORS, local_vol, negative_rate_policy

DEFAULT_PATHS = 10000
DEFAULT_DT = 0.01
DEFAULT_BLOCK_SIZE = 2000
MAX_REJECTED_FRACTION = 0.01

__all__ = [
    'McConfig',
    'McResult',
    'MonteCarloPricer',
    'negative_rate_policy',
    'simulate_price',
]


@dataclass(frozen=True)
class McConfig:
    """
    Parámetros de la simulación.

    Attributes
    ----------
    n_paths : int
        Cantidad de trayectorias
    dt : float
        Paso de tiempo máximo en años
    seed : int
        Semilla; cada bloque de trayectorias usa un flujo derivado de
        (seed, índice de bloque)
    antithetic : bool
        Usa pares de trayectorias con incrementos opuestos
    workers : int
        Hilos para repartir los bloques
    block_size : int
        Trayectorias por bloque
    """
    n_paths: int = DEFAULT_PATHS
    dt: float = DEFAULT_DT
    seed: int = 0
    antithetic: bool = False
    workers: int = 1
    block_size: int = DEFAULT_BLOCK_SIZE

    def __post_init__(self):
        if self.n_paths < 2:
            raise InvalidConfigurationError('Se necesitan al menos 2 trayectorias')
        if not self.dt > 0:
            raise InvalidConfigurationError('El paso de tiempo debe ser positivo')
        if self.workers < 1 or self.block_size < 1:
            raise InvalidConfigurationError('workers y block_size deben ser positivos')
        if self.antithetic and (self.n_paths % 2 or self.block_size % 2):
            raise InvalidConfigurationError(
                'Con variables antitéticas n_paths y block_size deben ser pares'
            )


@dataclass(frozen=True)
class McResult:
    price: float
    std_error: float
    elapsed: float
    rejected: int = 0

    def to_dict(self):
        return {
            'price': self.price,
            'std_error': self.std_error,
            'elapsed_s': self.elapsed,
            'rejected': self.rejected,
        }


def time_steps(tau1, dt):
    """Pasos de tiempo hasta tau1; el último se acorta para terminar exactamente en tau1."""
    if tau1 <= 0:
        return np.zeros(0)
    count = max(1, math.ceil(tau1 / dt - 1e-9))
    steps = np.full(count, float(dt))
    steps[-1] = tau1 - dt * (count - 1)
    return steps


def fd_slope(rates, spacing):
    """
    Derivada en el plazo: centrada en el interior, unilateral de orden 2 en
    los extremos. Con dos nodos sólo queda la diferencia de primer orden.
    """
    edge_order = 2 if np.shape(rates)[-1] > 2 else 1
    return np.gradient(rates, spacing, axis=-1, edge_order=edge_order)


def _block_sizes(cfg):
    full, rest = divmod(cfg.n_paths, cfg.block_size)
    return [cfg.block_size] * full + ([rest] if rest else [])


def _simulate_block(curve0, vols, integration, contract, steps, rng, size, antithetic):
    nodes = integration.grid.nodes
    spacing = integration.grid.spacing
    rates = np.tile(curve0.rates, (size, 1))
    short_prev = rates[:, 0].copy()
    discount = np.zeros(size)

    with np.errstate(all='ignore'):
        for step in steps:
            if antithetic:
                half = rng.standard_normal((size // 2, N_FACTORS))
                shocks = np.concatenate([half, -half])
            else:
                shocks = rng.standard_normal((size, N_FACTORS))
            sigma = local_vol(vols, nodes, rates)
            drift = drift_from_sigma(fd_slope(rates, spacing), sigma, integration)
            diffusion = np.einsum('pn,pnk->pk', shocks, sigma)
            rates = rates + drift * step + math.sqrt(step) * diffusion

            short_rate = rates[:, 0]
            discount += 0.5 * step * (short_prev + short_rate)
            short_prev = short_rate

        finite = np.all(np.isfinite(rates), axis=1) & np.isfinite(discount)
        values = np.full(size, np.nan)
        values[finite] = (
            caplet_payoffs(rates[finite], integration, contract.delta, contract.strike)
            * np.exp(-discount[finite])
        )
    return values


def simulate_price(curve0, vols, integration, contract, cfg):
    """
    Precio Monte Carlo de un caplet por Euler-Maruyama sobre la dinámica de
    Musiela discretizada con volatilidad local.

    Parameters
    ----------
    curve0 : DiscreteCurve
        Curva inicial, estrictamente positiva
    vols : VolModel
    integration : IntegrationMatrix
    contract : CapletContract
    cfg : McConfig

    Raises
    ------
    SimulationError
        si más del 1% de las trayectorias dejan de ser finitas
    """
    start = time.perf_counter()
    contract.check_grid(integration.grid)
    if contract.tau1 <= 0:
        price = caplet_payoff(curve0, integration, contract)
        return McResult(price, 0.0, time.perf_counter() - start)

    steps = time_steps(contract.tau1, cfg.dt)
    sizes = _block_sizes(cfg)

    def run_block(index):
        rng = make_rng(cfg.seed, MONTE_CARLO_STREAM, index)
        return _simulate_block(
            curve0, vols, integration, contract, steps, rng, sizes[index], cfg.antithetic
        )

    if cfg.workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
            blocks = list(executor.map(run_block, range(len(sizes))))
    else:
        blocks = [run_block(index) for index in range(len(sizes))]

    if cfg.antithetic:
        samples = np.concatenate([
            0.5 * (block[:block.size // 2] + block[block.size // 2:]) for block in blocks
        ])
    else:
        samples = np.concatenate(blocks)

    rejected = int(sum(np.count_nonzero(np.isnan(block)) for block in blocks))
    if rejected > MAX_REJECTED_FRACTION * cfg.n_paths:
        raise SimulationError(
            f'{rejected} de {cfg.n_paths} trayectorias divergieron para {contract}'
        )
    if rejected:
        logging.warning(f'Se descartaron {rejected} trayectorias no finitas')

    samples = samples[np.isfinite(samples)]
    price = float(np.mean(samples))
    std_error = 0.0
    if samples.size > 1:
        std_error = float(np.std(samples, ddof=1) / math.sqrt(samples.size))
    return McResult(price, std_error, time.perf_counter() - start, rejected)


class MonteCarloPricer(CapletPricer):
    """
    Valuador de referencia por Monte Carlo. Todos los contratos usan la
    misma semilla, de modo que comparten números aleatorios.
    """

    def __init__(self, grid, vols, cfg, *args, **kwargs):
        self.vols = vols
        self.cfg = cfg
        super(MonteCarloPricer, self).__init__(grid, *args, **kwargs)

    def simulate(self, curve, contract):
        self.check_item(curve, contract)
        return simulate_price(curve, self.vols, self.integration, contract, self.cfg)

    def price_contract(self, curve, svensson, contract):
        return self.simulate(curve, contract).price
