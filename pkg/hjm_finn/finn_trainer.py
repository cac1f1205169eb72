from dataclasses import dataclass, field
import logging
import math

import numpy as np
import torch
from torch import nn
from torch.nn import functional

from hjm_finn.exceptions import EmptyDatasetError, InvalidConfigurationError, TrainingDivergedError
from hjm_finn.hjm_core import (
    CapletContract,
    caplet_payoff_rows,
    drift_from_sigma,
    integration_matrix,
    zero_strike_rows,
)
from hjm_finn.market_data import DiscreteCurve, SvenssonParams, svensson_dtau
from hjm_finn.neural import (
    DEFAULT_WEIGHT_DECAY,
    DTYPE,
    FinnNetwork,
    NormStats,
    adam_step,
    evaluate_with_derivs,
    forward,
    grad_params,
    make_optimizer,
    set_learning_rate,
    tau1_index,
)
from hjm_finn.utils import TRAINING_STREAM, chebyshev_nodes, make_rng
from hjm_finn.vol_model import local_vol

LOSS_TERMS = ['pde', 'bc', 'zs']
HISTORY_HEADER = ['epoch', 'pde', 'bc', 'zs', 'lr']


@dataclass(frozen=True)
class SamplerConfig:
    """
    Dominio de muestreo de las características del contrato.

    Attributes
    ----------
    tau1_range : tuple
        Rango de tau1 en años
    delta_range : tuple
        Rango del período de devengamiento
    strike_nodes : int
        Cantidad de nodos de Chebyshev para el strike
    strike_range : tuple
        Intervalo de los nodos de strike
    zero_strike_fraction : float
        Fracción del lote que se clona con strike 0
    seed : int
        Semilla usada cuando no se provee un generador
    """
    tau1_range: tuple = (0.0, 5.0)
    delta_range: tuple = (1.0 / 3.0, 0.75)
    strike_nodes: int = 16
    strike_range: tuple = (0.0, 0.07)
    zero_strike_fraction: float = 1.0 / 3.0
    seed: int = 0

    def __post_init__(self):
        for name in ('tau1_range', 'delta_range', 'strike_range'):
            lower, upper = (float(v) for v in getattr(self, name))
            if not upper > lower:
                raise InvalidConfigurationError(f'Rango inválido para {name}: {lower}, {upper}')
            object.__setattr__(self, name, (lower, upper))
        if self.tau1_range[0] < 0 or self.delta_range[0] <= 0 or self.strike_range[0] < 0:
            raise InvalidConfigurationError(
                'Los rangos de tau1, delta y strike deben ser positivos'
            )
        if self.strike_nodes < 1:
            raise InvalidConfigurationError('Se necesita al menos un nodo de strike')
        if not 0.0 <= self.zero_strike_fraction <= 1.0:
            raise InvalidConfigurationError('zero_strike_fraction debe estar en [0, 1]')

    def strikes(self):
        return chebyshev_nodes(self.strike_nodes, *self.strike_range)

    def check_grid(self, grid):
        if not self.tau1_range[0] + self.delta_range[0] < grid.tau_max:
            raise InvalidConfigurationError(
                f'No hay contratos admisibles con tau1 + delta <= {grid.tau_max}'
            )
        return self

    @classmethod
    def from_dict(cls, data):
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        try:
            return cls(**kwargs)
        except TypeError as err:
            raise InvalidConfigurationError(f'Configuración de muestreo inválida: {err}')


@dataclass(frozen=True)
class Regime:
    epochs: int
    learning_rate: float
    batch_size: int
    batches_per_epoch: int

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.batches_per_epoch < 1:
            raise InvalidConfigurationError(f'Régimen inválido: {self}')
        if not self.learning_rate > 0:
            raise InvalidConfigurationError('La tasa de aprendizaje debe ser positiva')


PRESETS = {
    'desk': [(3000, 1e-4, 100, 10), (1000, 1e-5, 100, 10), (500, 1e-6, 500, 2)],
    'full': [(15000, 1e-4, 100, 10), (5000, 1e-5, 100, 10), (2500, 1e-6, 500, 2)],
}


@dataclass(frozen=True)
class TrainSchedule:
    """Regímenes de entrenamiento que se recorren en orden."""
    regimes: tuple = ()

    @classmethod
    def from_preset(cls, name):
        if name not in PRESETS:
            raise InvalidConfigurationError(
                f'Preset desconocido: {name}. Opciones: {sorted(PRESETS)}'
            )
        return cls(tuple(Regime(*regime) for regime in PRESETS[name]))

    @classmethod
    def from_list(cls, regimes):
        return cls(tuple(Regime(*regime) for regime in regimes))

    @property
    def total_epochs(self):
        return sum(regime.epochs for regime in self.regimes)


@dataclass
class LossBreakdown:
    pde: float
    bc: float
    zs: float

    @property
    def total(self):
        return self.pde + self.bc + self.zs

    def to_dict(self):
        return {'pde': self.pde, 'bc': self.bc, 'zs': self.zs}


@dataclass
class EpochRecord:
    epoch: int
    regime: int
    losses: LossBreakdown
    learning_rate: float

    def to_row(self):
        return {'epoch': self.epoch, **self.losses.to_dict(), 'lr': self.learning_rate}


@dataclass
class TrainingBatch:
    """
    Lote de entrenamiento en forma de arreglos. Las filas con
    `zero_strike` verdadero son clones con strike 0.
    """
    record_index: np.ndarray
    rates: np.ndarray
    params: np.ndarray
    tau1: np.ndarray
    delta: np.ndarray
    strike: np.ndarray
    zero_strike: np.ndarray = None

    def __post_init__(self):
        if self.zero_strike is None:
            self.zero_strike = np.zeros(len(self.record_index), dtype=bool)

    def __len__(self):
        return len(self.record_index)

    def inputs(self, tau1=None):
        """Entradas de la red (B, K + 9); `tau1` reemplaza la columna de tau1."""
        tau1 = self.tau1 if tau1 is None else np.full(self.tau1.shape, float(tau1))
        columns = np.column_stack([tau1, self.delta, self.strike])
        return torch.as_tensor(
            np.concatenate([self.rates, self.params, columns], axis=1), dtype=DTYPE
        )

    def subset(self, mask):
        return TrainingBatch(
            self.record_index[mask], self.rates[mask], self.params[mask],
            self.tau1[mask], self.delta[mask], self.strike[mask], self.zero_strike[mask],
        )

    def items(self, grid):
        """Tuplas (curva, svensson, contrato) de cada fila."""
        for index in range(len(self)):
            yield (
                DiscreteCurve(grid, self.rates[index]),
                SvenssonParams(*self.params[index]),
                CapletContract(self.tau1[index], self.delta[index], self.strike[index]),
            )


def _uniform_open_below(rng, lower, upper, size):
    # (lower, upper]: tau1 nunca es 0 en los puntos interiores
    return lower + (upper - lower) * (1.0 - rng.random(size))


def draw_contracts(dataset, cfg, n, rng):
    """
    n sorteos iid de (curva, tau1, delta, strike) sin clones. (tau1, delta)
    es uniforme sobre la región admisible tau1 + delta <= tau_max.
    """
    if not len(dataset):
        raise EmptyDatasetError('El dataset no contiene curvas')
    cfg.check_grid(dataset.grid)
    tau_max = dataset.grid.tau_max

    tau1 = np.empty(0)
    delta = np.empty(0)
    while tau1.size < n:
        missing = n - tau1.size
        tau1_draw = _uniform_open_below(rng, *cfg.tau1_range, missing)
        delta_draw = _uniform_open_below(rng, *cfg.delta_range, missing)
        keep = tau1_draw + delta_draw <= tau_max
        tau1 = np.concatenate([tau1, tau1_draw[keep]])
        delta = np.concatenate([delta, delta_draw[keep]])

    index = rng.integers(len(dataset), size=n)
    strike = rng.choice(cfg.strikes(), size=n)
    return TrainingBatch(
        record_index=index,
        rates=dataset.rates_matrix()[index],
        params=dataset.params_matrix()[index],
        tau1=tau1,
        delta=delta,
        strike=strike,
    )


def sample_batch(dataset, cfg, n, rng=None):
    """
    Lote de entrenamiento: n sorteos más ceil(fracción * n) clones con strike
    0 que conservan curva, tau1 y delta.

    Parameters
    ----------
    dataset : CurveDataset
    cfg : SamplerConfig
    n : int
        Cantidad de sorteos
    rng : np.random.Generator
        Generador a avanzar; por defecto uno nuevo derivado de cfg.seed
    """
    rng = make_rng(cfg.seed, TRAINING_STREAM) if rng is None else rng
    batch = draw_contracts(dataset, cfg, n, rng)
    clones = math.ceil(cfg.zero_strike_fraction * n)
    if not clones:
        return batch

    chosen = np.sort(rng.choice(n, size=clones, replace=False))
    zeros = batch.subset(chosen)
    zeros.strike = np.zeros(clones)
    zeros.zero_strike = np.ones(clones, dtype=bool)
    return TrainingBatch(
        np.concatenate([batch.record_index, zeros.record_index]),
        np.concatenate([batch.rates, zeros.rates]),
        np.concatenate([batch.params, zeros.params]),
        np.concatenate([batch.tau1, zeros.tau1]),
        np.concatenate([batch.delta, zeros.delta]),
        np.concatenate([batch.strike, zeros.strike]),
        np.concatenate([batch.zero_strike, zeros.zero_strike]),
    )


def record_slopes(dataset):
    """Pendiente analítica df/dtau de cada curva del dataset en los nodos, (n, K)."""
    nodes = dataset.grid.nodes
    return np.array([svensson_dtau(p, nodes) for p, _ in dataset.records])


class ZeroStrikeClosedForm(nn.Module):
    """
    Evaluador con la misma disposición de entradas que la red que retorna
    P(tau1) - P(tau1 + delta) sobre la grilla discreta. Es diferenciable en
    las tasas y en tau1, de modo que sirve para verificar el residuo de la
    EDP sin entrenar.
    """

    def __init__(self, integration):
        super().__init__()
        grid = integration.grid
        self.k_count = grid.k_count
        self.spacing = grid.spacing
        self.register_buffer('nodes', torch.as_tensor(grid.nodes, dtype=DTYPE))
        self.register_buffer('weights', torch.as_tensor(integration.weights, dtype=DTYPE))

    def tenor_weights(self, tau):
        index = torch.clamp(
            torch.floor(tau.detach() / self.spacing).long(), 0, self.k_count - 2
        )
        step = tau - self.nodes[index]
        frac = step / self.spacing
        left = functional.one_hot(index, self.k_count).to(DTYPE)
        right = functional.one_hot(index + 1, self.k_count).to(DTYPE)
        return (self.weights[index]
                + left * (step * (1.0 - 0.5 * frac)).unsqueeze(-1)
                + right * (0.5 * step * frac).unsqueeze(-1))

    def forward(self, x):
        rates = x[..., :self.k_count]
        tau1 = x[..., tau1_index(self.k_count)]
        delta = x[..., tau1_index(self.k_count) + 1]
        near = torch.exp(-(rates * self.tenor_weights(tau1)).sum(-1))
        far = torch.exp(-(rates * self.tenor_weights(tau1 + delta)).sum(-1))
        return near - far


def pde_residuals(fn, inputs, slopes, vols, integration, create_graph=False):
    """
    Residuo -dV/dtau1 + mu . D_f V + 1/2 sum_n sigma_n' D_f^2 V sigma_n - r V
    para un lote de entradas (B, K + 9).

    La volatilidad local y la deriva de Musiela se calculan con las tasas de
    entrada y se tratan como constantes; sólo las componentes de tasas y
    tau1 llevan derivadas.
    """
    k_count = integration.grid.k_count
    inputs = torch.as_tensor(inputs, dtype=DTYPE)
    rates = inputs[:, :k_count].detach().numpy()
    sigma = local_vol(vols, integration.grid.nodes, rates)
    drift = torch.as_tensor(drift_from_sigma(slopes, sigma, integration), dtype=DTYPE)

    evaluation = evaluate_with_derivs(fn, inputs, sigma, k_count, create_graph=create_graph)
    d_tau = evaluation.grad_inputs[:, tau1_index(k_count)]
    d_rates = evaluation.grad_inputs[:, :k_count]
    short_rate = inputs[:, 0]
    return (
        -d_tau
        + (drift * d_rates).sum(-1)
        + 0.5 * evaluation.hvp_results.sum(-1)
        - short_rate * evaluation.value
    )


def _single_row(curve, svensson, contract):
    return TrainingBatch(
        record_index=np.zeros(1, dtype=int),
        rates=curve.rates.reshape(1, -1),
        params=svensson.as_array().reshape(1, -1),
        tau1=np.array([contract.tau1]),
        delta=np.array([contract.delta]),
        strike=np.array([contract.strike]),
    )


def pde_residual(net, curve, svensson, contract, vols, integration):
    """Residuo de la EDP en un único punto interior (tau1 > 0)."""
    if not contract.tau1 > 0:
        raise InvalidConfigurationError('El residuo de la EDP requiere tau1 > 0')
    row = _single_row(curve, svensson, contract)
    slope = svensson_dtau(svensson, integration.grid.nodes).reshape(1, -1)
    return float(pde_residuals(net, row.inputs(), slope, vols, integration)[0])


def boundary_targets(batch, integration):
    return torch.as_tensor(
        caplet_payoff_rows(batch.rates, integration, batch.delta, batch.strike), dtype=DTYPE
    )


def zero_strike_targets(batch, integration):
    return torch.as_tensor(
        zero_strike_rows(batch.rates, integration, batch.tau1, batch.delta), dtype=DTYPE
    )


def boundary_loss(net, curve, svensson, contract, integration=None):
    """(V(tau1 = 0) - pago del caplet)^2; ignora el tau1 del contrato."""
    integration = integration or integration_matrix(curve.grid)
    row = _single_row(curve, svensson, contract)
    with torch.no_grad():
        value = forward(net, row.inputs(tau1=0.0))
    return float(((value - boundary_targets(row, integration)) ** 2)[0])


def zero_strike_loss(net, curve, svensson, tau1, delta, integration=None):
    """(V(tau1, f; delta, strike 0) - (P(tau1) - P(tau1 + delta)))^2."""
    integration = integration or integration_matrix(curve.grid)
    row = _single_row(curve, svensson, CapletContract(tau1, delta, 0.0))
    with torch.no_grad():
        value = forward(net, row.inputs())
    return float(((value - zero_strike_targets(row, integration)) ** 2)[0])


class FinnTrainer:
    """
    Ciclo de entrenamiento de la red sobre la pérdida de tres términos.

    Attributes
    ----------
    dataset : CurveDataset
        Curvas históricas, discretizadas sobre la grilla de entrenamiento
    vols : VolModel
    integration : IntegrationMatrix
    sampler : SamplerConfig
    loss_weights : dict
        Pesos de los términos pde, bc y zs en el objetivo
    weight_decay : float

    Methods
    -------
    batch_losses(network, batch, create_graph)
        Retorna los tres términos de la pérdida como tensores
    fit(schedule, seed)
        Recorre los regímenes y retorna la red y el historial
    """

    def __init__(self, dataset, vols, grid, sampler=None, loss_weights=None,
                 weight_decay=DEFAULT_WEIGHT_DECAY):
        if not len(dataset):
            raise EmptyDatasetError('El dataset no contiene curvas')
        self.dataset = dataset.regrid(grid)
        self.vols = vols
        self.grid = grid
        self.integration = integration_matrix(grid)
        self.sampler = (sampler or SamplerConfig()).check_grid(grid)
        self.loss_weights = {term: 1.0 for term in LOSS_TERMS}
        self.loss_weights.update(loss_weights or {})
        self.weight_decay = weight_decay
        self.slopes = record_slopes(self.dataset)

    def batch_losses(self, network, batch, create_graph=True):
        residuals = pde_residuals(
            network, batch.inputs(), self.slopes[batch.record_index], self.vols,
            self.integration, create_graph=create_graph,
        )
        pde = (residuals ** 2).mean()

        boundary = forward(network, batch.inputs(tau1=0.0))
        bc = ((boundary - boundary_targets(batch, self.integration)) ** 2).mean()

        zeros = batch.subset(batch.zero_strike)
        if len(zeros):
            anchor = forward(network, zeros.inputs())
            zs = ((anchor - zero_strike_targets(zeros, self.integration)) ** 2).mean()
        else:
            zs = torch.zeros((), dtype=DTYPE)
        return {'pde': pde, 'bc': bc, 'zs': zs}

    def objective(self, terms):
        return sum(self.loss_weights[term] * terms[term] for term in LOSS_TERMS)

    def fit(self, schedule, seed=0, network=None):
        """
        Entrena la red recorriendo los regímenes en orden. Cada época sortea
        lotes nuevos; el generador de muestreo se deriva de la semilla.

        Raises
        ------
        TrainingDivergedError
            si algún término de la pérdida deja de ser finito
        """
        if network is None:
            norm_stats = NormStats.from_dataset(self.dataset)
            network = FinnNetwork.build(self.grid, norm_stats, self.vols, seed=seed)
        rng = make_rng(seed, TRAINING_STREAM)
        history = []
        if not schedule.regimes:
            return network, history

        optimizer = make_optimizer(
            network, schedule.regimes[0].learning_rate, weight_decay=self.weight_decay
        )
        params = list(network.parameters())
        epoch = 0
        for regime_index, regime in enumerate(schedule.regimes):
            set_learning_rate(optimizer, regime.learning_rate)
            for _ in range(regime.epochs):
                epoch += 1
                sums = dict.fromkeys(LOSS_TERMS, 0.0)
                for batch_index in range(regime.batches_per_epoch):
                    batch = sample_batch(self.dataset, self.sampler, regime.batch_size, rng)
                    terms = {}

                    def loss_fn():
                        terms.update(self.batch_losses(network, batch))
                        return self.objective(terms)

                    _, grads = grad_params(network, loss_fn)
                    for term in LOSS_TERMS:
                        value = float(terms[term].detach())
                        if not math.isfinite(value):
                            raise TrainingDivergedError(epoch, batch_index, term)
                        sums[term] += value
                    adam_step(optimizer, params, grads)

                losses = LossBreakdown(
                    **{term: sums[term] / regime.batches_per_epoch for term in LOSS_TERMS}
                )
                history.append(EpochRecord(epoch, regime_index, losses, regime.learning_rate))
                logging.info(
                    f'Época {epoch} (régimen {regime_index}): pde={losses.pde:.3e} '
                    f'bc={losses.bc:.3e} zs={losses.zs:.3e} lr={regime.learning_rate:g}'
                )

        network.training.update({
            'seed': int(seed),
            'epochs': epoch,
            'final_losses': history[-1].losses.to_dict(),
            'sampler': {
                'zero_strike_fraction': self.sampler.zero_strike_fraction,
                'strike_nodes': self.sampler.strike_nodes,
            },
        })
        return network, history


@dataclass
class TrainingResult:
    network: FinnNetwork
    history: list = field(default_factory=list)

    def history_rows(self):
        return [record.to_row() for record in self.history]


def train(dataset, vols, grid, schedule, sampler_cfg=None, seed=0, loss_weights=None,
          weight_decay=DEFAULT_WEIGHT_DECAY):
    """
    Entrena una red nueva y retorna un TrainingResult con la red final y el
    historial de pérdidas por época. Determinístico dada la semilla.
    """
    trainer = FinnTrainer(dataset, vols, grid, sampler_cfg, loss_weights, weight_decay)
    network, history = trainer.fit(schedule, seed=seed)
    return TrainingResult(network, history)
