from dataclasses import dataclass, field
from functools import cached_property
import csv
import json
import logging
import math

import numpy as np
import pandas as pd

from hjm_finn.exceptions import (
    DataFileError,
    EmptyDatasetError,
    GridMismatchError,
    InvalidConfigurationError,
    InvalidParametersError,
)

DATASET_VERSION = 1
DEFAULT_EPS = 0.005
SVENSSON_COLUMNS = ['BETA0', 'BETA1', 'BETA2', 'BETA3', 'TAU1', 'TAU2']
PARAM_FIELDS = ['beta0', 'beta1', 'beta2', 'beta3', 'tau1', 'tau2']
QUANTILE_LEVELS = (0.05, 0.95)


@dataclass(frozen=True)
class SvenssonParams:
    """
    Parámetros Svensson de la curva forward instantánea para una fecha.

    Attributes
    ----------
    beta0, beta1, beta2, beta3 : float
        Niveles de tasa en decimal anual
    tau1, tau2 : float
        Escalas de decaimiento en años, estrictamente positivas
    date : str
        Etiqueta de la fecha de observación
    """
    beta0: float
    beta1: float
    beta2: float
    beta3: float
    tau1: float
    tau2: float
    date: str = ''

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise InvalidParametersError(
                f'Parámetros Svensson no finitos para la fecha {self.date}'
            )
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise InvalidParametersError(
                f'tau1 y tau2 deben ser positivos (fecha {self.date})'
            )

    def as_array(self):
        return np.array([getattr(self, name) for name in PARAM_FIELDS], dtype=float)

    def to_dict(self):
        data = {name: float(getattr(self, name)) for name in PARAM_FIELDS}
        data['date'] = self.date
        return data

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                *[float(data[name]) for name in PARAM_FIELDS],
                date=str(data.get('date', '')),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise InvalidParametersError(f'Parámetros Svensson incompletos: {err}')


@dataclass(frozen=True)
class TenorGrid:
    """Grilla equiespaciada de K plazos sobre [0, tau_max], con el nodo 0 incluido."""
    k_count: int
    tau_max: float

    def __post_init__(self):
        if int(self.k_count) != self.k_count or self.k_count < 2:
            raise InvalidConfigurationError('La grilla necesita al menos 2 nodos')
        if not self.tau_max > 0:
            raise InvalidConfigurationError('tau_max debe ser positivo')

    @cached_property
    def nodes(self):
        nodes = np.linspace(0.0, float(self.tau_max), int(self.k_count))
        nodes.setflags(write=False)
        return nodes

    @property
    def spacing(self):
        return float(self.tau_max) / (int(self.k_count) - 1)

    def to_dict(self):
        return {'k_count': int(self.k_count), 'tau_max': float(self.tau_max)}

    @classmethod
    def from_dict(cls, data):
        return cls(int(data['k_count']), float(data['tau_max']))


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    """
    Curva forward discretizada: el vector de estado f de la EDP.
    rates[0] es la tasa corta r.
    """
    grid: TenorGrid
    rates: np.ndarray

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float)
        if rates.shape != (self.grid.k_count,):
            raise InvalidParametersError(
                f'Se esperaban {self.grid.k_count} tasas, se recibieron {rates.shape}'
            )
        if not np.all(np.isfinite(rates)):
            raise InvalidParametersError('La curva contiene tasas no finitas')
        rates.setflags(write=False)
        object.__setattr__(self, 'rates', rates)

    @property
    def short_rate(self):
        return float(self.rates[0])

    def to_dict(self):
        return {'grid': self.grid.to_dict(), 'rates': self.rates.tolist()}


@dataclass
class FilterReport:
    """Cantidad de filas descartadas en cada etapa de filtrado, y las cotas usadas."""
    rows_in: int = 0
    dropped_invalid: int = 0
    dropped_quantile: int = 0
    dropped_positivity: int = 0
    rows_out: int = 0
    bounds: dict = field(default_factory=dict)

    @property
    def total_dropped(self):
        return self.dropped_invalid + self.dropped_quantile + self.dropped_positivity

    def to_dict(self):
        return {
            'rows_in': self.rows_in,
            'dropped_invalid': self.dropped_invalid,
            'dropped_quantile': self.dropped_quantile,
            'dropped_positivity': self.dropped_positivity,
            'rows_out': self.rows_out,
            'bounds': {k: [float(lo), float(hi)] for k, (lo, hi) in self.bounds.items()},
        }

    @classmethod
    def from_dict(cls, data):
        report = cls(**{k: int(v) for k, v in data.items() if k != 'bounds'})
        report.bounds = {k: (float(v[0]), float(v[1])) for k, v in data.get('bounds', {}).items()}
        return report


@dataclass
class CurveDataset:
    """
    Conjunto de curvas históricas filtradas.

    Attributes
    ----------
    grid : TenorGrid
        Grilla sobre la que se discretizaron las curvas
    records : list
        Lista de tuplas (SvenssonParams, DiscreteCurve)
    filter_report : FilterReport
        Conteo de filas descartadas por etapa
    """
    grid: TenorGrid
    records: list
    filter_report: FilterReport = field(default_factory=FilterReport)

    def __len__(self):
        return len(self.records)

    def params_matrix(self):
        return np.array([p.as_array() for p, _ in self.records])

    def rates_matrix(self):
        return np.array([c.rates for _, c in self.records])

    def regrid(self, grid):
        """Rediscretiza los parámetros Svensson sobre otra grilla."""
        if grid == self.grid:
            return self
        records = [(p, discretize(p, grid)) for p, _ in self.records]
        return CurveDataset(grid, records, self.filter_report)

    def to_dict(self):
        return {
            'version': DATASET_VERSION,
            'grid': self.grid.to_dict(),
            'records': [
                {'params': p.to_dict(), 'rates': c.rates.tolist()}
                for p, c in self.records
            ],
            'filter_report': self.filter_report.to_dict(),
        }

    def write_json(self, file_path):
        with open(file_path, 'w') as archivo:
            json.dump(self.to_dict(), archivo)

    @classmethod
    def from_dict(cls, data):
        if data.get('version') != DATASET_VERSION:
            raise DataFileError(
                f"Versión de dataset no soportada: {data.get('version')}"
            )
        grid = TenorGrid.from_dict(data['grid'])
        records = [
            (SvenssonParams.from_dict(r['params']), DiscreteCurve(grid, r['rates']))
            for r in data['records']
        ]
        if not records:
            raise EmptyDatasetError('El dataset no contiene curvas')
        return cls(grid, records, FilterReport.from_dict(data.get('filter_report', {})))

    @classmethod
    def read_json(cls, file_path):
        try:
            with open(file_path) as archivo:
                return cls.from_dict(json.load(archivo))
        except (OSError, json.JSONDecodeError, KeyError) as err:
            raise DataFileError(f'No se pudo leer el dataset {file_path}: {err}')


def _svensson_terms(p, tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise InvalidParametersError('El plazo debe ser no negativo')
    x1 = tau / p.tau1
    x2 = tau / p.tau2
    return tau, x1, x2, np.exp(-x1), np.exp(-x2)


def _checked(value, p):
    if not np.all(np.isfinite(value)):
        raise InvalidParametersError(
            f'Evaluación no finita de la curva Svensson (fecha {p.date})'
        )
    return float(value) if np.ndim(value) == 0 else value


def svensson_forward(p, tau):
    """
    Tasa forward instantánea Svensson en el plazo tau (escalar o arreglo).

    Parameters
    ----------
    p : SvenssonParams
    tau : float o np.ndarray
        Plazo en años, no negativo
    """
    _, x1, x2, e1, e2 = _svensson_terms(p, tau)
    value = p.beta0 + (p.beta1 + p.beta2 * x1) * e1 + p.beta3 * x2 * e2
    return _checked(value, p)


def svensson_dtau(p, tau):
    """Derivada analítica de la curva Svensson respecto del plazo."""
    _, x1, x2, e1, e2 = _svensson_terms(p, tau)
    value = (
        (-p.beta1 / p.tau1 + (p.beta2 / p.tau1) * (1.0 - x1)) * e1
        + (p.beta3 / p.tau2) * (1.0 - x2) * e2
    )
    return _checked(value, p)


def discretize(p, grid):
    return DiscreteCurve(grid, svensson_forward(p, grid.nodes))


def _find_header_row(file_path):
    # los archivos GSW traen notas antes del encabezado
    try:
        with open(file_path, encoding='utf-8') as archivo:
            for index, line in enumerate(archivo):
                first = line.replace('\t', ',').split(',')[0].strip().strip('"')
                if first == 'Date':
                    return index
    except (OSError, UnicodeDecodeError) as err:
        raise DataFileError(f'No se pudo leer el archivo {file_path}: {err}')
    raise DataFileError(f'El archivo {file_path} no tiene una fila de encabezado Date')


def read_delimited(file_path):
    """
    Lee un archivo de texto delimitado (coma o tabulación, autodetectado)
    con encabezado que comienza en la columna Date. Todas las celdas se leen
    como texto.
    """
    header_row = _find_header_row(file_path)
    try:
        frame = pd.read_csv(
            file_path,
            sep=None,
            engine='python',
            skiprows=header_row,
            dtype=str,
            encoding='utf-8',
            skipinitialspace=True,
        )
    except (OSError, pd.errors.ParserError) as err:
        raise DataFileError(f'No se pudo leer el archivo {file_path}: {err}')
    frame.columns = [str(c).strip() for c in frame.columns]
    return frame


def clean_svensson_frame(frame, percent=False):
    """
    Etapa (a): descarta filas con celdas faltantes o no numéricas, o con
    escalas de decaimiento no positivas. Retorna el frame numérico y la
    cantidad de filas descartadas.
    """
    missing = [c for c in ['Date'] + SVENSSON_COLUMNS if c not in frame.columns]
    if missing:
        raise DataFileError(f'Faltan columnas en el archivo: {missing}')

    numeric = frame[SVENSSON_COLUMNS].apply(pd.to_numeric, errors='coerce')
    numeric.insert(0, 'Date', frame['Date'].astype(str).str.strip())
    valid = numeric[SVENSSON_COLUMNS].notna().all(axis=1)
    valid &= np.isfinite(numeric[SVENSSON_COLUMNS]).all(axis=1)
    valid &= (numeric['TAU1'] > 0) & (numeric['TAU2'] > 0)

    cleaned = numeric.loc[valid].reset_index(drop=True)
    if percent:
        betas = ['BETA0', 'BETA1', 'BETA2', 'BETA3']
        cleaned[betas] = cleaned[betas] / 100.0
    return cleaned, int((~valid).sum())


def quantile_bounds(frame):
    """Cotas [q05, q95] por parámetro (cuantil empírico con interpolación lineal)."""
    lower, upper = QUANTILE_LEVELS
    return {
        column: (float(frame[column].quantile(lower)), float(frame[column].quantile(upper)))
        for column in SVENSSON_COLUMNS
    }


def params_from_row(row):
    return SvenssonParams(
        *[float(row[column]) for column in SVENSSON_COLUMNS], date=str(row['Date'])
    )


def ingest(file_path, grid, eps=DEFAULT_EPS, percent=False, bounds=None):
    """
    Lee una serie de parámetros Svensson, la filtra y discretiza cada curva.

    Parameters
    ----------
    file_path : str
        Archivo delimitado con columnas Date, BETA0..BETA3, TAU1, TAU2
    grid : TenorGrid
        Grilla de plazos de valuación
    eps : float
        Tasa mínima admitida en cualquier nodo
    percent : bool
        Si las betas del archivo están expresadas en porcentaje
    bounds : dict, opcional
        Cotas de cuantiles persistidas de una ingesta anterior; si se
        omiten se calculan sobre las filas válidas

    Raises
    ------
    DataFileError
        si el archivo no puede leerse
    EmptyDatasetError
        si ninguna fila sobrevive a los filtros
    """
    frame = read_delimited(file_path)
    report = FilterReport(rows_in=len(frame))

    cleaned, report.dropped_invalid = clean_svensson_frame(frame, percent=percent)
    if report.dropped_invalid:
        logging.warning(f'Se descartaron {report.dropped_invalid} filas incompletas o inválidas')

    report.bounds = dict(bounds) if bounds else quantile_bounds(cleaned)
    inside = pd.Series(True, index=cleaned.index)
    for column, (lower, upper) in report.bounds.items():
        inside &= (cleaned[column] >= lower) & (cleaned[column] <= upper)
    report.dropped_quantile = int((~inside).sum())
    if report.dropped_quantile:
        logging.warning(f'Se descartaron {report.dropped_quantile} filas fuera de los cuantiles')

    records = []
    for _, row in cleaned.loc[inside].iterrows():
        params = params_from_row(row)
        curve = discretize(params, grid)
        if np.any(curve.rates < eps):
            report.dropped_positivity += 1
            continue
        records.append((params, curve))
    if report.dropped_positivity:
        logging.warning(
            f'Se descartaron {report.dropped_positivity} curvas con tasas menores a {eps}'
        )

    report.rows_out = len(records)
    if not records:
        raise EmptyDatasetError(f'No quedan curvas luego de filtrar {file_path}')
    return CurveDataset(grid, records, report)


def write_svensson_csv(dataset, file_path):
    """Exporta los parámetros del dataset con el mismo formato que lee `ingest`."""
    header = ['Date'] + SVENSSON_COLUMNS
    with open(file_path, 'w', newline='') as archivo:
        writer = csv.writer(archivo)
        writer.writerow(header)
        for params, _ in dataset.records:
            writer.writerow([params.date] + [repr(v) for v in params.as_array()])


def _tenor_from_column(column):
    label = column.upper()
    if label.startswith('SVENF'):
        label = label[len('SVENF'):]
    try:
        return float(label)
    except ValueError:
        return None


def read_rate_matrix(file_path, percent=False):
    """
    Lee una matriz fecha x plazo de tasas forward. Las columnas de plazo se
    reconocen por encabezado numérico (años) o con el formato GSW SVENFxx;
    las filas incompletas se descartan.

    Returns
    -------
    tuple
        (tenors, levels) con levels de forma (n_fechas, n_plazos) en orden
        cronológico del archivo
    """
    frame = read_delimited(file_path)
    columns = {c: _tenor_from_column(c) for c in frame.columns if c != 'Date'}
    columns = {c: t for c, t in columns.items() if t is not None}
    if len(columns) < 2:
        raise DataFileError(f'El archivo {file_path} no tiene columnas de plazo')

    ordered = sorted(columns, key=columns.get)
    numeric = frame[ordered].apply(pd.to_numeric, errors='coerce').dropna()
    dropped = len(frame) - len(numeric)
    if dropped:
        logging.warning(f'Se descartaron {dropped} filas incompletas de la matriz de tasas')
    levels = numeric.to_numpy(dtype=float)
    if percent:
        levels = levels / 100.0
    return np.array([columns[c] for c in ordered]), levels


def svensson_rate_matrix(file_path, tenors, percent=False):
    """Evalúa la serie Svensson, filtrada sólo en la etapa (a), sobre los plazos dados."""
    frame = read_delimited(file_path)
    cleaned, dropped = clean_svensson_frame(frame, percent=percent)
    if dropped:
        logging.warning(f'Se descartaron {dropped} filas incompletas o inválidas')
    levels = np.array([
        svensson_forward(params_from_row(row), tenors) for _, row in cleaned.iterrows()
    ])
    return np.asarray(tenors, dtype=float), levels


def load_curve_file(file_path, grid):
    """
    Lee una curva desde JSON. Acepta {"svensson": {...}}, que se discretiza
    sobre `grid`, o {"grid": {...}, "rates": [...], "svensson": {...}}.

    Returns
    -------
    tuple
        (DiscreteCurve, SvenssonParams)
    """
    try:
        with open(file_path) as archivo:
            data = json.load(archivo)
    except (OSError, json.JSONDecodeError) as err:
        raise DataFileError(f'No se pudo leer la curva {file_path}: {err}')
    if 'svensson' not in data:
        raise DataFileError(f'La curva {file_path} no tiene la clave svensson')

    params = SvenssonParams.from_dict(data['svensson'])
    if 'rates' not in data:
        return discretize(params, grid), params

    curve_grid = TenorGrid.from_dict(data['grid']) if 'grid' in data else grid
    if curve_grid != grid:
        raise GridMismatchError(
            f'La curva usa K={curve_grid.k_count}, tau_max={curve_grid.tau_max}; '
            f'se esperaba K={grid.k_count}, tau_max={grid.tau_max}'
        )
    return DiscreteCurve(grid, data['rates']), params


def is_finite_number(value):
    try:
        return math.isfinite(float(value))
    except (TypeError, ValueError):
        return False
