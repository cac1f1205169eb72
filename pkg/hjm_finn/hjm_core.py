from dataclasses import dataclass

import numpy as np

from hjm_finn.exceptions import ContractError
from hjm_finn.market_data import DiscreteCurve
from hjm_finn.vol_model import local_vol, sigma_tilde

# holgura para plazos que caen sobre tau_max por redondeo
TENOR_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class IntegrationMatrix:
    """
    Matriz de integración trapezoidal C de forma (K, K): la fila i integra
    desde el nodo 0 hasta el nodo i.
    """
    grid: object
    weights: np.ndarray


@dataclass(frozen=True)
class CapletContract:
    """
    Características del contrato Xi = (tau1, delta, strike).

    Attributes
    ----------
    tau1 : float
        Años hasta la fecha de liquidación
    delta : float
        Longitud del período de devengamiento
    strike : float
        Tasa de ejercicio L_E en decimal
    """
    tau1: float
    delta: float
    strike: float

    def __post_init__(self):
        values = np.array([self.tau1, self.delta, self.strike], dtype=float)
        if not np.all(np.isfinite(values)):
            raise ContractError('Las características del contrato deben ser finitas')
        if self.tau1 < 0:
            raise ContractError('tau1 no puede ser negativo')
        if self.delta <= 0:
            raise ContractError('delta debe ser positivo')
        if self.strike < 0:
            raise ContractError('El strike no puede ser negativo')

    def check_grid(self, grid):
        if self.tau1 + self.delta > grid.tau_max + TENOR_TOLERANCE:
            raise ContractError(
                f'tau1 + delta = {self.tau1 + self.delta} excede el horizonte '
                f'de la grilla ({grid.tau_max})'
            )
        return self

    def to_dict(self):
        return {'tau1': float(self.tau1), 'delta': float(self.delta), 'strike': float(self.strike)}

    @classmethod
    def from_dict(cls, data):
        return cls(float(data['tau1']), float(data['delta']), float(data['strike']))


@dataclass(frozen=True, eq=False)
class DriftVector:
    values: np.ndarray


def integration_matrix(grid):
    k_count = grid.k_count
    spacing = grid.spacing
    weights = np.zeros((k_count, k_count))
    for i in range(1, k_count):
        weights[i, :i + 1] = spacing
        weights[i, 0] = weights[i, i] = 0.5 * spacing
    weights.setflags(write=False)
    return IntegrationMatrix(grid, weights)


def tenor_weights(integration, tau):
    """
    Vector de pesos w(tau) tal que w . f aproxima la integral de f entre 0 y
    tau: filas completas de C en los nodos más un panel trapezoidal parcial,
    con f interpolada linealmente dentro del panel, para plazos fuera de la
    grilla. Acepta un escalar (retorna (K,)) o un arreglo (retorna (n, K)).

    Raises
    ------
    ContractError
        si algún plazo cae fuera de [0, tau_max]
    """
    grid = integration.grid
    nodes = grid.nodes
    scalar = np.ndim(tau) == 0
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(tau < -TENOR_TOLERANCE) or np.any(tau > grid.tau_max + TENOR_TOLERANCE):
        raise ContractError(f'Plazo fuera del rango [0, {grid.tau_max}]')
    tau = np.clip(tau, 0.0, grid.tau_max)

    index = np.clip(np.searchsorted(nodes, tau, side='right') - 1, 0, grid.k_count - 2)
    step = tau - nodes[index]
    frac = step / grid.spacing

    weights = integration.weights[index].copy()
    rows = np.arange(tau.size)
    weights[rows, index] += step * (1.0 - 0.5 * frac)
    weights[rows, index + 1] += 0.5 * step * frac
    return weights[0] if scalar else weights


def _rates(curve):
    return curve.rates if isinstance(curve, DiscreteCurve) else np.asarray(curve, dtype=float)


def bond_price(curve, integration, tau):
    """P(tau) = exp(-integral de f entre 0 y tau). `curve` puede ser una matriz de trayectorias."""
    return np.exp(-(_rates(curve) @ tenor_weights(integration, tau).T))


def libor(curve, integration, tau_a, tau_b):
    if not tau_b > tau_a:
        raise ContractError('El intervalo de la LIBOR es degenerado')
    ratio = bond_price(curve, integration, tau_a) / bond_price(curve, integration, tau_b)
    return (ratio - 1.0) / (tau_b - tau_a)


def drift_rates(rates, slope, vols, integration):
    """
    Deriva de Musiela vectorizada: slope + sum_n sigma_n * C sigma_n, con la
    volatilidad local aplicada en cada plazo dentro y fuera de la integral.
    `rates` y `slope` tienen forma (..., K).
    """
    if not vols.proportional:
        # la integral de sigma no depende del estado
        grid = integration.grid
        integral = vols.integrated_on(grid, integration)
        convexity = np.sum(sigma_tilde(vols, grid.nodes) * integral, axis=0)
        return np.asarray(slope, dtype=float) + np.broadcast_to(convexity, np.shape(rates))
    sigma = local_vol(vols, integration.grid.nodes, rates)
    return drift_from_sigma(slope, sigma, integration)


def drift_from_sigma(slope, sigma, integration):
    """Igual que `drift_rates` pero con las volatilidades (..., 3, K) ya evaluadas."""
    integral = sigma @ integration.weights.T
    return np.asarray(slope, dtype=float) + np.sum(sigma * integral, axis=-2)


def musiela_drift(curve, slope, vols, integration):
    return DriftVector(drift_rates(curve.rates, slope, vols, integration))


def caplet_payoffs(rates, integration, delta, strike):
    """delta * P(delta) * max{L(0, delta) - strike, 0} para cada fila de `rates`."""
    bond = bond_price(rates, integration, delta)
    rate = (1.0 / bond - 1.0) / delta
    return delta * bond * np.maximum(rate - strike, 0.0)


def caplet_payoff(curve, integration, contract):
    """Valor del caplet en la fecha de liquidación, por unidad de nocional."""
    contract.check_grid(integration.grid)
    return float(caplet_payoffs(curve.rates, integration, contract.delta, contract.strike))


def zero_strike_value(curve, integration, tau1, delta):
    """Forma cerrada del caplet de strike cero: P(tau1) - P(tau1 + delta)."""
    if delta <= 0:
        raise ContractError('delta debe ser positivo')
    return bond_price(curve, integration, tau1) - bond_price(curve, integration, tau1 + delta)


def bond_price_rows(rates, integration, tau):
    """P(tau_i) sobre la curva i: un plazo por fila de `rates`, forma (n,)."""
    weights = np.atleast_2d(tenor_weights(integration, np.asarray(tau, dtype=float)))
    return np.exp(-np.sum(np.atleast_2d(rates) * weights, axis=-1))


def caplet_payoff_rows(rates, integration, delta, strike):
    """Como `caplet_payoffs` pero con delta y strike propios de cada fila."""
    delta = np.asarray(delta, dtype=float)
    if np.any(delta <= 0):
        raise ContractError('delta debe ser positivo')
    bond = bond_price_rows(rates, integration, delta)
    rate = (1.0 / bond - 1.0) / delta
    return delta * bond * np.maximum(rate - np.asarray(strike, dtype=float), 0.0)


def zero_strike_rows(rates, integration, tau1, delta):
    tau1 = np.asarray(tau1, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if np.any(delta <= 0):
        raise ContractError('delta debe ser positivo')
    return (bond_price_rows(rates, integration, tau1)
            - bond_price_rows(rates, integration, tau1 + delta))
