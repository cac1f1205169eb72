import math
import unittest

import numpy as np

from hjm_finn.exceptions import ContractError
from hjm_finn.hjm_core import (
    CapletContract,
    bond_price,
    bond_price_rows,
    caplet_payoff,
    caplet_payoff_rows,
    caplet_payoffs,
    drift_from_sigma,
    drift_rates,
    integration_matrix,
    libor,
    musiela_drift,
    tenor_weights,
    zero_strike_rows,
    zero_strike_value,
)
from hjm_finn.market_data import DiscreteCurve, TenorGrid
from hjm_finn.vol_model import VolModel, sigma_tilde


def flat_curve(grid, rate=0.03):
    return DiscreteCurve(grid, np.full(grid.k_count, rate))


def constant_vols(value, proportional=False):
    coeffs = np.zeros((3, 4))
    coeffs[:, 0] = value
    return VolModel(coeffs, (0.0, 30.0), proportional=proportional)


class IntegrationMatrixTestCase(unittest.TestCase):

    def setUp(self):
        self.grid = TenorGrid(11, 5.0)
        self.integration = integration_matrix(self.grid)

    def test_first_row_is_zero(self):
        assert np.array_equal(self.integration.weights[0], np.zeros(11))

    def test_constant_integrand(self):
        """La integral de una constante es c * tau en cada nodo"""
        values = self.integration.weights @ np.full(11, 0.04)
        assert np.allclose(values, 0.04 * self.grid.nodes, rtol=0, atol=1e-15)

    def test_linear_integrand(self):
        """La regla trapezoidal es exacta para integrandos lineales"""
        values = self.integration.weights @ self.grid.nodes
        assert np.allclose(values, 0.5 * self.grid.nodes ** 2, rtol=0, atol=1e-13)

    def test_read_only(self):
        with self.assertRaises(ValueError):
            self.integration.weights[1, 1] = 3.0


class TenorWeightsTestCase(unittest.TestCase):

    def setUp(self):
        self.grid = TenorGrid(11, 5.0)
        self.integration = integration_matrix(self.grid)

    def test_rows_at_nodes(self):
        for i, tau in enumerate(self.grid.nodes):
            assert np.allclose(tenor_weights(self.integration, tau),
                               self.integration.weights[i], rtol=0, atol=1e-15)

    def test_between_nodes_linear(self):
        """Fuera de los nodos integra exactamente la interpolación lineal"""
        for tau in (0.2, 1.3, 3.77, 4.99):
            value = tenor_weights(self.integration, tau) @ self.grid.nodes
            assert abs(value - 0.5 * tau ** 2) < 1e-13

    def test_vector_shape(self):
        weights = tenor_weights(self.integration, np.array([0.5, 1.0, 2.25]))
        assert weights.shape == (3, 11)

    def test_out_of_range(self):
        with self.assertRaises(ContractError):
            tenor_weights(self.integration, 5.1)
        with self.assertRaises(ContractError):
            tenor_weights(self.integration, -0.1)


class BondTestCase(unittest.TestCase):

    def setUp(self):
        self.grid = TenorGrid(21, 5.0)
        self.integration = integration_matrix(self.grid)
        self.curve = flat_curve(self.grid)

    def test_flat_bond(self):
        for tau in (0.0, 0.5, 1.1, 5.0):
            value = bond_price(self.curve, self.integration, tau)
            assert abs(value - math.exp(-0.03 * tau)) < 1e-14

    def test_flat_libor(self):
        expected = (math.exp(0.03 * 0.5) - 1.0) / 0.5
        assert abs(libor(self.curve, self.integration, 1.0, 1.5) - expected) < 1e-12

    def test_degenerate_libor(self):
        with self.assertRaises(ContractError):
            libor(self.curve, self.integration, 1.0, 1.0)

    def test_path_matrix(self):
        rates = np.array([np.full(21, 0.01), np.full(21, 0.05)])
        values = bond_price(rates, self.integration, 2.0)
        assert np.allclose(values, np.exp([-0.02, -0.1]), rtol=1e-14)

    def test_rows(self):
        """Un plazo distinto por fila"""
        rates = np.array([np.full(21, 0.01), np.full(21, 0.05)])
        values = bond_price_rows(rates, self.integration, [1.0, 3.0])
        assert np.allclose(values, np.exp([-0.01, -0.15]), rtol=1e-14)


class DriftTestCase(unittest.TestCase):

    def setUp(self):
        self.grid = TenorGrid(11, 5.0)
        self.integration = integration_matrix(self.grid)

    def test_zero_vol(self):
        """Sin volatilidad la deriva es la pendiente"""
        slope = np.linspace(-0.01, 0.01, 11)
        drift = drift_rates(np.full(11, 0.03), slope, constant_vols(0.0), self.integration)
        assert np.array_equal(drift, slope)

    def test_constant_vol(self):
        """Con tres factores constantes sigma la deriva es 3 sigma^2 tau"""
        drift = drift_rates(np.full(11, 0.03), np.zeros(11), constant_vols(0.01), self.integration)
        assert np.allclose(drift, 3 * 0.01 ** 2 * self.grid.nodes, rtol=0, atol=1e-17)

    def test_constant_variant_precomputed(self):
        """La integral precalculada coincide con la convolución por estado"""
        coeffs = np.array([[0.010, 0.002, -0.001, 0.0005],
                           [0.004, -0.003, 0.001, 0.0],
                           [0.002, 0.0, 0.0015, -0.0005]])
        vols = VolModel(coeffs, (0.0, 30.0), proportional=False)
        rates = np.array([np.full(11, 0.02), np.linspace(0.01, 0.04, 11)])
        slope = np.full((2, 11), 0.001)
        sigma = np.broadcast_to(sigma_tilde(vols, self.grid.nodes), (2, 3, 11))
        expected = drift_from_sigma(slope, sigma, self.integration)
        drift = drift_rates(rates, slope, vols, self.integration)
        assert drift.shape == (2, 11)
        assert np.allclose(drift, expected, rtol=1e-14, atol=1e-18)

    def test_batch_shape(self):
        rates = np.full((4, 11), 0.03)
        drift = drift_rates(rates, np.zeros((4, 11)), constant_vols(0.01, True), self.integration)
        assert drift.shape == (4, 11)

    def test_drift_vector(self):
        curve = flat_curve(self.grid)
        drift = musiela_drift(curve, np.zeros(11), constant_vols(0.0), self.integration)
        assert np.array_equal(drift.values, np.zeros(11))


class CapletTestCase(unittest.TestCase):

    def setUp(self):
        self.grid = TenorGrid(21, 5.0)
        self.integration = integration_matrix(self.grid)
        self.curve = flat_curve(self.grid)

    def test_zero_strike_payoff(self):
        """Con strike cero el pago es 1 - P(delta)"""
        contract = CapletContract(0.0, 0.5, 0.0)
        expected = 1.0 - math.exp(-0.03 * 0.5)
        assert abs(caplet_payoff(self.curve, self.integration, contract) - expected) < 1e-14

    def test_out_of_the_money(self):
        contract = CapletContract(0.0, 0.5, 0.05)
        assert caplet_payoff(self.curve, self.integration, contract) == 0.0

    def test_in_the_money(self):
        bond = math.exp(-0.03 * 0.25)
        rate = (1.0 / bond - 1.0) / 0.25
        expected = 0.25 * bond * (rate - 0.01)
        value = caplet_payoffs(self.curve.rates, self.integration, 0.25, 0.01)
        assert abs(value - expected) < 1e-14

    def test_rows_match_scalar(self):
        rates = np.array([np.full(21, 0.02), np.full(21, 0.04)])
        values = caplet_payoff_rows(rates, self.integration, [0.5, 1.0], [0.01, 0.03])
        expected = [
            caplet_payoffs(rates[0], self.integration, 0.5, 0.01),
            caplet_payoffs(rates[1], self.integration, 1.0, 0.03),
        ]
        assert np.allclose(values, expected, rtol=1e-14, atol=0)

    def test_rows_bad_delta(self):
        with self.assertRaises(ContractError):
            caplet_payoff_rows(np.full((1, 21), 0.02), self.integration, [0.0], [0.01])

    def test_zero_strike_value(self):
        expected = math.exp(-0.03 * 1.0) - math.exp(-0.03 * 1.5)
        assert abs(zero_strike_value(self.curve, self.integration, 1.0, 0.5) - expected) < 1e-14

    def test_zero_strike_rows(self):
        rates = np.full((2, 21), 0.03)
        values = zero_strike_rows(rates, self.integration, [1.0, 2.0], [0.5, 0.25])
        expected = [
            math.exp(-0.03) - math.exp(-0.045),
            math.exp(-0.06) - math.exp(-0.0675),
        ]
        assert np.allclose(values, expected, rtol=1e-13, atol=0)

    def test_zero_strike_bad_delta(self):
        with self.assertRaises(ContractError):
            zero_strike_value(self.curve, self.integration, 1.0, 0.0)


class ContractTestCase(unittest.TestCase):

    def test_valid(self):
        contract = CapletContract(1.0, 0.5, 0.02)
        assert contract.check_grid(TenorGrid(11, 5.0)) is contract

    def test_invalid_values(self):
        for values in ((-0.1, 0.5, 0.02), (1.0, 0.0, 0.02), (1.0, 0.5, -0.01),
                       (float('nan'), 0.5, 0.02)):
            with self.assertRaises(ContractError):
                CapletContract(*values)

    def test_beyond_horizon(self):
        with self.assertRaises(ContractError):
            CapletContract(4.8, 0.5, 0.02).check_grid(TenorGrid(11, 5.0))

    def test_on_horizon(self):
        CapletContract(4.5, 0.5, 0.02).check_grid(TenorGrid(11, 5.0))

    def test_dict_round_trip(self):
        contract = CapletContract(1.0, 0.5, 0.02)
        assert CapletContract.from_dict(contract.to_dict()) == contract
