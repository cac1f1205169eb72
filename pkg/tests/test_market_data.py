import json
import os
import tempfile
import unittest

import numpy as np

from hjm_finn.exceptions import (
    DataFileError,
    EmptyDatasetError,
    GridMismatchError,
    InvalidConfigurationError,
    InvalidParametersError,
)
from hjm_finn.market_data import (
    CurveDataset,
    SvenssonParams,
    TenorGrid,
    discretize,
    ingest,
    load_curve_file,
    read_rate_matrix,
    svensson_dtau,
    svensson_forward,
    svensson_rate_matrix,
    write_svensson_csv,
)

HEADER = 'Date,BETA0,BETA1,BETA2,BETA3,TAU1,TAU2\n'
WIDE_BOUNDS = {
    'BETA0': (-1.0, 1.0), 'BETA1': (-1.0, 1.0), 'BETA2': (-1.0, 1.0),
    'BETA3': (-1.0, 1.0), 'TAU1': (0.0, 100.0), 'TAU2': (0.0, 100.0),
}


def generic_params():
    return SvenssonParams(0.02, 0.01, 0.005, -0.004, 2.0, 1.0, date='2019-01-02')


def write_text(directory, name, text):
    file_path = os.path.join(directory, name)
    with open(file_path, 'w', encoding='utf-8') as archivo:
        archivo.write(text)
    return file_path


class SvenssonTestCase(unittest.TestCase):

    def test_forward_at_zero(self):
        """En tau = 0 la curva vale beta0 + beta1"""
        p = generic_params()
        assert abs(svensson_forward(p, 0.0) - (p.beta0 + p.beta1)) < 1e-15

    def test_forward_flat_curve(self):
        """Con beta1 = beta2 = beta3 = 0 la curva es constante"""
        p = SvenssonParams(0.03, 0.0, 0.0, 0.0, 1.0, 1.0)
        assert svensson_forward(p, 2.5) == 0.03

    def test_forward_matches_formula(self):
        """Comparar contra la fórmula evaluada a mano"""
        p = SvenssonParams(0.02, 0.01, 0.005, 0.0, 2.0, 1.0)
        expected = 0.02 + (0.01 + 0.005 * 1.0) * np.exp(-1.0)
        assert abs(svensson_forward(p, 2.0) - expected) < 1e-15

    def test_forward_vectorized(self):
        p = generic_params()
        taus = np.array([0.0, 0.5, 3.0])
        values = svensson_forward(p, taus)
        assert values.shape == (3,)
        for tau, value in zip(taus, values):
            assert value == svensson_forward(p, float(tau))

    def test_negative_tenor(self):
        with self.assertRaises(InvalidParametersError):
            svensson_forward(generic_params(), -0.1)

    def test_non_finite_evaluation(self):
        """Una escala diminuta desborda la exponencial"""
        p = SvenssonParams(0.02, 0.01, 1e300, 0.0, 1e-300, 1.0)
        with self.assertRaises(InvalidParametersError):
            svensson_forward(p, 1.0)

    def test_invalid_decay(self):
        with self.assertRaises(InvalidParametersError):
            SvenssonParams(0.02, 0.01, 0.0, 0.0, 0.0, 1.0)
        with self.assertRaises(InvalidParametersError):
            SvenssonParams(float('nan'), 0.01, 0.0, 0.0, 1.0, 1.0)

    def test_dtau_flat_curve(self):
        p = SvenssonParams(0.03, 0.0, 0.0, 0.0, 1.5, 0.7)
        assert svensson_dtau(p, 1.3) == 0.0

    def test_dtau_at_zero(self):
        """En tau = 0 la pendiente es -beta1 / tau1 cuando beta2 = beta3 = 0"""
        p = SvenssonParams(0.0, 0.01, 0.0, 0.0, 1.0, 1.0)
        assert abs(svensson_dtau(p, 0.0) + 0.01) < 1e-15

    def test_dtau_matches_finite_differences(self):
        """La derivada analítica coincide con diferencias centradas"""
        rng = np.random.default_rng(3)
        h = 1e-6
        for _ in range(100):
            p = SvenssonParams(
                rng.uniform(0.0, 0.08), rng.uniform(-0.05, 0.05), rng.uniform(-0.1, 0.1),
                rng.uniform(-0.1, 0.1), rng.uniform(0.3, 5.0), rng.uniform(0.3, 15.0),
            )
            tau = rng.uniform(0.01, 10.0)
            numeric = (svensson_forward(p, tau + h) - svensson_forward(p, tau - h)) / (2 * h)
            analytic = svensson_dtau(p, tau)
            assert abs(numeric - analytic) <= 1e-6 * max(abs(analytic), 1e-4)


class GridTestCase(unittest.TestCase):

    def test_nodes(self):
        grid = TenorGrid(5, 5.0)
        assert grid.nodes.tolist() == [0.0, 1.25, 2.5, 3.75, 5.0]
        assert grid.spacing == 1.25

    def test_invalid_grid(self):
        with self.assertRaises(InvalidConfigurationError):
            TenorGrid(1, 5.0)
        with self.assertRaises(InvalidConfigurationError):
            TenorGrid(10, 0.0)

    def test_discretize_flat(self):
        curve = discretize(SvenssonParams(0.03, 0.0, 0.0, 0.0, 1.0, 1.0), TenorGrid(5, 5.0))
        assert curve.rates.tolist() == [0.03] * 5

    def test_discretize_short_rate(self):
        p = generic_params()
        curve = discretize(p, TenorGrid(10, 5.0))
        assert curve.short_rate == svensson_forward(p, 0.0)

    def test_discretize_pointwise(self):
        p = generic_params()
        grid = TenorGrid(25, 5.0)
        curve = discretize(p, grid)
        for k, tau in enumerate(grid.nodes):
            assert abs(curve.rates[k] - svensson_forward(p, float(tau))) < 1e-16


class IngestTestCase(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.grid = TenorGrid(10, 5.0)

    def tearDown(self):
        self.directory.cleanup()

    def test_identical_rows(self):
        """Con filas idénticas los cuantiles son degenerados y no se descarta nada"""
        rows = ''.join(f'2019-01-{i:03d},0.03,-0.01,0.01,0.005,1.5,8.0\n' for i in range(100))
        file_path = write_text(self.directory.name, 'gsw.csv', HEADER + rows)

        dataset = ingest(file_path, self.grid)

        report = dataset.filter_report
        assert len(dataset) == 100
        assert report.total_dropped == 0
        assert report.rows_in == report.rows_out == 100

    def test_quantile_filter(self):
        """Una fila con beta0 por encima del percentil 95 se descarta en la etapa b"""
        rows = ''.join(f'd{i},0.03,-0.01,0.01,0.005,1.5,8.0\n' for i in range(20))
        rows += 'outlier,0.09,-0.01,0.01,0.005,1.5,8.0\n'
        file_path = write_text(self.directory.name, 'gsw.csv', HEADER + rows)

        dataset = ingest(file_path, self.grid)

        assert dataset.filter_report.dropped_quantile == 1
        assert 'outlier' not in [p.date for p, _ in dataset.records]
        assert dataset.filter_report.bounds['BETA0'] == (0.03, 0.03)

    def test_positivity_filter(self):
        """Una curva con tasa negativa en algún nodo se descarta en la etapa c"""
        rows = 'buena,0.03,-0.01,0.01,0.005,1.5,8.0\nnegativa,0.03,-0.05,0.0,0.0,1.5,8.0\n'
        file_path = write_text(self.directory.name, 'gsw.csv', HEADER + rows)

        dataset = ingest(file_path, self.grid, bounds=WIDE_BOUNDS)

        report = dataset.filter_report
        assert report.dropped_positivity == 1
        assert report.rows_in == report.rows_out + report.total_dropped
        assert all(np.all(c.rates >= 0.005) for _, c in dataset.records)

    def test_invalid_rows(self):
        """Filas con celdas vacías o no numéricas se descartan en la etapa a"""
        rows = ('a,0.03,-0.01,0.01,0.005,1.5,8.0\n'
                'b,,-0.01,0.01,0.005,1.5,8.0\n'
                'c,0.03,NA,0.01,0.005,1.5,8.0\n'
                'd,0.03,-0.01,0.01,0.005,-1.0,8.0\n')
        file_path = write_text(self.directory.name, 'gsw.csv', HEADER + rows)

        dataset = ingest(file_path, self.grid, bounds=WIDE_BOUNDS)

        report = dataset.filter_report
        assert report.dropped_invalid == 3
        assert report.rows_in == 4
        assert report.rows_in == report.rows_out + report.total_dropped

    def test_gsw_notes_tab_and_percent(self):
        """Archivo con notas previas, separado por tabulaciones y betas en porcentaje"""
        text = ('Nota: parámetros de la curva\n'
                + HEADER.replace(',', '\t')
                + '2019-01-02\t3.0\t-1.0\t1.0\t0.5\t1.5\t8.0\n')
        file_path = write_text(self.directory.name, 'gsw.tsv', text)

        dataset = ingest(file_path, self.grid, percent=True)

        params, curve = dataset.records[0]
        assert abs(params.beta0 - 0.03) < 1e-15
        assert params.tau1 == 1.5
        assert abs(curve.short_rate - 0.02) < 1e-15

    def test_empty_dataset(self):
        rows = 'negativa,0.01,-0.05,0.0,0.0,1.5,8.0\n'
        file_path = write_text(self.directory.name, 'gsw.csv', HEADER + rows)

        with self.assertRaises(EmptyDatasetError):
            ingest(file_path, self.grid)

    def test_unreadable_file(self):
        with self.assertRaises(DataFileError):
            ingest(os.path.join(self.directory.name, 'no-existe.csv'), self.grid)

    def test_missing_header(self):
        file_path = write_text(self.directory.name, 'gsw.csv', 'foo,bar\n1,2\n')
        with self.assertRaises(DataFileError):
            ingest(file_path, self.grid)

    def test_idempotent_with_persisted_bounds(self):
        """Re-ingestar el dataset exportado con las cotas guardadas no descarta nada"""
        rng = np.random.default_rng(5)
        rows = ''.join(
            f'd{i},{rng.uniform(0.02, 0.05)!r},{rng.uniform(-0.01, 0.0)!r},'
            f'{rng.uniform(-0.01, 0.01)!r},{rng.uniform(0.0, 0.01)!r},'
            f'{rng.uniform(1.0, 3.0)!r},{rng.uniform(5.0, 10.0)!r}\n'
            for i in range(60)
        )
        file_path = write_text(self.directory.name, 'gsw.csv', HEADER + rows)
        first = ingest(file_path, self.grid)
        assert first.filter_report.dropped_quantile > 0

        exported = os.path.join(self.directory.name, 'filtrado.csv')
        write_svensson_csv(first, exported)
        second = ingest(exported, self.grid, bounds=first.filter_report.bounds)

        assert second.filter_report.total_dropped == 0
        assert len(second) == len(first)
        assert np.allclose(second.rates_matrix(), first.rates_matrix(), rtol=0, atol=1e-15)


class DatasetSerializationTestCase(unittest.TestCase):

    def setUp(self):
        grid = TenorGrid(10, 5.0)
        p = generic_params()
        self.dataset = CurveDataset(grid, [(p, discretize(p, grid))])

    def test_round_trip(self):
        data = json.loads(json.dumps(self.dataset.to_dict()))
        restored = CurveDataset.from_dict(data)
        assert restored.grid == self.dataset.grid
        assert np.array_equal(restored.rates_matrix(), self.dataset.rates_matrix())
        assert restored.records[0][0] == self.dataset.records[0][0]

    def test_unknown_version(self):
        data = self.dataset.to_dict()
        data['version'] = 99
        with self.assertRaises(DataFileError):
            CurveDataset.from_dict(data)

    def test_regrid(self):
        regridded = self.dataset.regrid(TenorGrid(25, 5.0))
        assert regridded.rates_matrix().shape == (1, 25)
        assert regridded.records[0][1].rates[0] == self.dataset.records[0][1].rates[0]


class RateMatrixTestCase(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.directory.cleanup()

    def test_gsw_columns(self):
        """Las columnas SVENFxx se ordenan por plazo; las filas incompletas se descartan"""
        text = ('Date,SVENF02,SVENF01,SVENF03\n'
                '2019-01-02,3.1,3.0,3.2\n'
                '2019-01-03,,3.0,3.2\n'
                '2019-01-04,3.2,3.1,3.3\n')
        file_path = write_text(self.directory.name, 'fwd.csv', text)

        tenors, levels = read_rate_matrix(file_path, percent=True)

        assert tenors.tolist() == [1.0, 2.0, 3.0]
        assert levels.shape == (2, 3)
        assert np.allclose(levels[0], [0.030, 0.031, 0.032], rtol=0, atol=1e-15)

    def test_no_tenor_columns(self):
        file_path = write_text(self.directory.name, 'fwd.csv', 'Date,foo\n2019-01-02,1\n')
        with self.assertRaises(DataFileError):
            read_rate_matrix(file_path)

    def test_from_svensson_series(self):
        """Cada fila válida de la serie se evalúa sobre los plazos pedidos"""
        text = HEADER + (
            '2019-01-02,3.0,-1.0,1.0,0.5,1.5,4.0\n'
            '2019-01-03,3.1,-1.0,1.0,0.5,0.0,4.0\n'
            '2019-01-04,3.2,-1.1,1.0,0.5,1.5,4.0\n'
        )
        file_path = write_text(self.directory.name, 'feds.csv', text)

        tenors, levels = svensson_rate_matrix(file_path, [1.0, 2.0, 5.0, 10.0], percent=True)

        assert tenors.tolist() == [1.0, 2.0, 5.0, 10.0]
        assert levels.shape == (2, 4)
        expected = svensson_forward(SvenssonParams(0.032, -0.011, 0.01, 0.005, 1.5, 4.0), tenors)
        assert np.allclose(levels[1], expected, rtol=0, atol=1e-15)


class CurveFileTestCase(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.grid = TenorGrid(10, 5.0)

    def tearDown(self):
        self.directory.cleanup()

    def test_svensson_only(self):
        p = generic_params()
        file_path = write_text(self.directory.name, 'curve.json',
                               json.dumps({'svensson': p.to_dict()}))

        curve, params = load_curve_file(file_path, self.grid)

        assert params == p
        assert np.array_equal(curve.rates, discretize(p, self.grid).rates)

    def test_grid_mismatch(self):
        p = generic_params()
        other = TenorGrid(25, 5.0)
        data = {'grid': other.to_dict(), 'rates': discretize(p, other).rates.tolist(),
                'svensson': p.to_dict()}
        file_path = write_text(self.directory.name, 'curve.json', json.dumps(data))

        with self.assertRaises(GridMismatchError):
            load_curve_file(file_path, self.grid)

    def test_missing_svensson(self):
        file_path = write_text(self.directory.name, 'curve.json', json.dumps({'rates': []}))
        with self.assertRaises(DataFileError):
            load_curve_file(file_path, self.grid)
