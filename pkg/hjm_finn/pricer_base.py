import time

import numpy as np

from hjm_finn.exceptions import GridMismatchError
from hjm_finn.hjm_core import integration_matrix


class CapletPricer:
    """
    Clase que representa un valuador de caplets sobre la curva forward
    discretizada del modelo HJM.


    Attributes
    ----------
    grid : TenorGrid
        Grilla de plazos sobre la que trabaja el valuador
    integration : IntegrationMatrix
        Matriz trapezoidal precalculada para la grilla

    Methods
    -------
    price_contract(curve, svensson, contract)
        Retorna el precio de un contrato por unidad de nocional

    price_many(items)
        Recibe un iterable de tuplas (curva, svensson, contrato) y devuelve
        una lista con los precios

    run(items, repeats, warmup)
        Valúa todos los contratos midiendo el tiempo de cada repetición
    """

    def __init__(self, grid, *args, **kwargs):
        """
        Parameters
        ----------
        grid : TenorGrid
            Grilla de plazos. Las curvas a valuar deben usar la misma grilla.
        """
        self.grid = grid
        self.integration = kwargs.get('integration') or integration_matrix(grid)

    def check_item(self, curve, contract):
        """
        Verifica que la curva use la grilla del valuador y que el contrato
        entre en el horizonte.

        Raises
        ------
        GridMismatchError
            si la grilla de la curva difiere de la del valuador
        ContractError
            si tau1 + delta excede tau_max
        """
        if curve.grid != self.grid:
            raise GridMismatchError(
                f'La curva usa K={curve.grid.k_count}, el valuador K={self.grid.k_count}'
            )
        contract.check_grid(self.grid)

    def price_contract(self, curve, svensson, contract):
        """
        Retorna el precio del caplet por unidad de nocional.

        Parameters
        ----------
        curve : DiscreteCurve
            Curva forward actual
        svensson : SvenssonParams
            Parámetros de la curva
        contract : CapletContract
            Características del contrato
        Raises
        ------
        NotImplementedError
            si la subclase no implementa el método
        """

        raise NotImplementedError

    def price_many(self, items):
        return [self.price_contract(*item) for item in items]

    def run(self, items, repeats=1, warmup=0):
        """
        Valúa todos los contratos `warmup + repeats` veces y retorna los
        precios de la última pasada junto con la mediana del tiempo total de
        las repeticiones medidas (las de calentamiento se descartan).

        Parameters
        ----------
        items : list
            Tuplas (curva, svensson, contrato)
        repeats : int
            Repeticiones medidas
        warmup : int
            Repeticiones descartadas
        """
        items = list(items)
        prices = []
        times = []
        for repetition in range(warmup + repeats):
            start = time.perf_counter()
            prices = self.price_many(items)
            elapsed = time.perf_counter() - start
            if repetition >= warmup:
                times.append(elapsed)
        return prices, float(np.median(times)) if times else 0.0
