from dataclasses import dataclass
import json
import logging

import numpy as np
from numpy.polynomial import chebyshev

from hjm_finn.exceptions import DataFileError, InvalidConfigurationError, VolEstimationError
from hjm_finn.market_data import DEFAULT_EPS

ANNUALIZATION = 252
N_FACTORS = 3
CHEBYSHEV_DEGREE = 3
DEFAULT_CAP_M = 0.4
DEFAULT_ESTIMATION_TENORS = np.arange(1.0, 31.0)


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Matriz de segundos momentos anualizada (tasa² por año) de los cambios diarios."""
    entries: np.ndarray
    proportional: bool = False

    @property
    def dim(self):
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class PcaFactors:
    """
    Los tres factores principales.

    Attributes
    ----------
    eigenvalues : np.ndarray
        lambda_1 >= lambda_2 >= lambda_3 >= 0
    loadings : np.ndarray
        Autovectores unitarios, forma (3, dim)
    """
    eigenvalues: np.ndarray
    loadings: np.ndarray

    @property
    def adjusted(self):
        return np.sqrt(self.eigenvalues)[:, None] * self.loadings


@dataclass(frozen=True, eq=False)
class VolModel:
    """
    Estructura de volatilidad de 3 factores como polinomios de Chebyshev de
    grado 3.

    Attributes
    ----------
    coeffs : np.ndarray
        Coeficientes c_{n,j}, forma (3, 4)
    fit_domain : tuple
        Dominio de estimación [tau_lo, tau_hi], mapeado a [-1, 1]
    cap_m : float
        Tope M del escalamiento local min{sqrt(f), M}
    proportional : bool
        Si las volatilidades son proporcionales (se escalan con sqrt(f))
    eigenvalues : np.ndarray
        Autovalores de origen, sólo como registro
    """
    coeffs: np.ndarray
    fit_domain: tuple
    cap_m: float = DEFAULT_CAP_M
    proportional: bool = True
    eigenvalues: np.ndarray = None

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.shape != (N_FACTORS, CHEBYSHEV_DEGREE + 1):
            raise VolEstimationError(
                f'Se esperaban coeficientes de forma (3, 4), se recibió {coeffs.shape}'
            )
        if not self.cap_m > 0:
            raise InvalidConfigurationError('El tope M debe ser positivo')
        lower, upper = (float(v) for v in self.fit_domain)
        if not upper > lower:
            raise VolEstimationError('Dominio de ajuste inválido')
        object.__setattr__(self, 'coeffs', coeffs)
        object.__setattr__(self, 'fit_domain', (lower, upper))
        eigenvalues = np.zeros(N_FACTORS) if self.eigenvalues is None else self.eigenvalues
        object.__setattr__(self, 'eigenvalues', np.array(eigenvalues, dtype=float))

    def mapped(self, tau):
        lower, upper = self.fit_domain
        x = 2.0 * (np.asarray(tau, dtype=float) - lower) / (upper - lower) - 1.0
        return np.clip(x, -1.0, 1.0)

    def integrated_on(self, grid, integration):
        """
        Integral de sigma_tilde desde 0 hasta cada nodo, shape (3, K). Sólo
        tiene sentido precalcularla para la variante no proporcional, donde no
        depende del estado.
        """
        return sigma_tilde(self, grid.nodes) @ integration.weights.T

    def to_dict(self):
        return {
            'coeffs': self.coeffs.tolist(),
            'fit_domain': list(self.fit_domain),
            'cap_m': float(self.cap_m),
            'proportional': bool(self.proportional),
            'eigenvalues': self.eigenvalues.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                coeffs=data['coeffs'],
                fit_domain=tuple(data['fit_domain']),
                cap_m=float(data.get('cap_m', DEFAULT_CAP_M)),
                proportional=bool(data.get('proportional', True)),
                eigenvalues=data.get('eigenvalues'),
            )
        except KeyError as err:
            raise DataFileError(f'Falta la clave {err} en el modelo de volatilidad')

    def write_json(self, file_path):
        with open(file_path, 'w') as archivo:
            json.dump(self.to_dict(), archivo, indent=2)

    @classmethod
    def read_json(cls, file_path):
        try:
            with open(file_path) as archivo:
                return cls.from_dict(json.load(archivo))
        except (OSError, json.JSONDecodeError) as err:
            raise DataFileError(f'No se pudo leer el modelo de volatilidad {file_path}: {err}')


def negative_rate_policy(f):
    """
    Tasas usadas para el escalamiento sqrt(f): se acotan en 0. El estado
    simulado no se modifica.
    """
    return np.maximum(np.asarray(f, dtype=float), 0.0)


def daily_changes(levels, proportional=False, eps=DEFAULT_EPS):
    """
    Cambios diarios de una matriz fecha x plazo. En la variante proporcional
    cada cambio se divide por sqrt del nivel al inicio del intervalo y se
    descartan los intervalos con algún nivel inicial <= eps.
    """
    levels = np.asarray(levels, dtype=float)
    changes = np.diff(levels, axis=0)
    if not proportional:
        return changes

    start = levels[:-1]
    keep = np.all(start > eps, axis=1)
    if not np.all(keep):
        logging.warning(
            f'Se descartaron {int((~keep).sum())} cambios diarios con tasas menores a {eps}'
        )
    return changes[keep] / np.sqrt(start[keep])


def covariance(changes, annualization=ANNUALIZATION, proportional=False):
    """
    Segundo momento no centrado, anualizado, de las filas de `changes`.

    Raises
    ------
    VolEstimationError
        si hay menos de dos filas
    """
    x = np.atleast_2d(np.asarray(changes, dtype=float))
    if x.shape[0] < 2:
        raise VolEstimationError('Se necesitan al menos 2 cambios para estimar la covarianza')
    entries = annualization * (x.T @ x) / x.shape[0]
    return CovMatrix(0.5 * (entries + entries.T), proportional)


def pca_top3(c):
    """
    Tres mayores pares propios de la covarianza. Cada autovector se orienta
    de modo que su componente de mayor magnitud sea positiva.
    """
    if c.dim < N_FACTORS:
        raise VolEstimationError('La covarianza debe tener al menos 3 plazos')
    try:
        values, vectors = np.linalg.eigh(c.entries)
    except np.linalg.LinAlgError as err:
        raise VolEstimationError(f'El cálculo de autovalores no convergió: {err}')

    order = np.argsort(values)[::-1][:N_FACTORS]
    eigenvalues = np.clip(values[order], 0.0, None)
    loadings = vectors[:, order].T.copy()
    for n in range(N_FACTORS):
        if loadings[n, np.argmax(np.abs(loadings[n]))] < 0:
            loadings[n] = -loadings[n]
    return PcaFactors(eigenvalues, loadings)


def fit_chebyshev(factors, tenors, cap_m=DEFAULT_CAP_M, proportional=True):
    """
    Ajuste por mínimos cuadrados de un polinomio de Chebyshev de grado 3 a
    cada factor ajustado, con argumento 2 tau / tau_max - 1 sobre [0, tau_max].
    """
    tenors = np.asarray(tenors, dtype=float)
    if np.unique(tenors).size < CHEBYSHEV_DEGREE + 1:
        raise VolEstimationError('Se necesitan al menos 4 plazos distintos para el ajuste')
    tau_max = float(tenors.max())
    x = 2.0 * tenors / tau_max - 1.0
    coeffs = chebyshev.chebfit(x, factors.adjusted.T, CHEBYSHEV_DEGREE)
    return VolModel(
        coeffs=coeffs.T,
        fit_domain=(0.0, tau_max),
        cap_m=cap_m,
        proportional=proportional,
        eigenvalues=factors.eigenvalues,
    )


def sigma_tilde(v, tau):
    """Volatilidades de los tres factores en tau, forma (3,) + shape(tau)."""
    return chebyshev.chebval(v.mapped(tau), v.coeffs.T)


def local_vol(v, tau, f):
    """
    Volatilidad local sigma_tilde(tau) * min{sqrt(max(f, 0)), M}.

    Con `tau` y `f` de forma (..., K) retorna (..., 3, K); con escalares
    retorna un vector de 3 componentes.
    """
    base = sigma_tilde(v, tau)
    f = np.asarray(f, dtype=float)
    if v.proportional:
        scale = np.minimum(np.sqrt(negative_rate_policy(f)), v.cap_m)
    else:
        scale = np.ones_like(f)
    if f.ndim == 0:
        return base * scale
    return base * np.expand_dims(scale, -2)


def estimate_vol_model(levels, tenors, proportional=True, eps=DEFAULT_EPS,
                       cap_m=DEFAULT_CAP_M, annualization=ANNUALIZATION):
    """Cambios diarios, covarianza, PCA y ajuste de Chebyshev en un solo paso."""
    changes = daily_changes(levels, proportional=proportional, eps=eps)
    cov = covariance(changes, annualization=annualization, proportional=proportional)
    factors = pca_top3(cov)
    logging.info(f'Autovalores principales: {factors.eigenvalues.tolist()}')
    return fit_chebyshev(factors, tenors, cap_m=cap_m, proportional=proportional)
