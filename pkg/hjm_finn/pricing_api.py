from dataclasses import dataclass
import time

import numpy as np
import torch

from hjm_finn.neural import DTYPE, FinnNetwork, forward, grad_inputs, tau1_index
from hjm_finn.pricer_base import CapletPricer


@dataclass(frozen=True, eq=False)
class PriceQuote:
    """
    Precio y griegas de un caplet.

    Attributes
    ----------
    price : float
        Valor por unidad de nocional
    theta : float
        Decaimiento temporal -dV/dtau1 (por año); es dV/dt
    dv_dtau1 : float
        Derivada respecto del tiempo a la liquidación, con el signo opuesto
    curve_deltas : np.ndarray
        dV/df_k en cada nodo de la grilla
    eval_time : float
        Segundos de la evaluación (ida y vuelta)
    """
    price: float
    theta: float
    dv_dtau1: float
    curve_deltas: np.ndarray
    eval_time: float

    def to_dict(self):
        return {
            'price': self.price,
            'theta': self.theta,
            'dv_dtau1': self.dv_dtau1,
            'curve_deltas': self.curve_deltas.tolist(),
            'eval_time': self.eval_time,
        }


def contract_inputs(items):
    """Matriz de entradas (B, K + 9) para tuplas (curva, svensson, contrato)."""
    rows = [
        np.concatenate([
            curve.rates,
            svensson.as_array(),
            [contract.tau1, contract.delta, contract.strike],
        ])
        for curve, svensson, contract in items
    ]
    return torch.as_tensor(np.array(rows), dtype=DTYPE)


class FinnPricer(CapletPricer):
    """
    Valuador basado en la red entrenada. Una pasada hacia adelante da el
    precio y una pasada reversa da theta y los deltas de curva.
    """

    def __init__(self, network, *args, **kwargs):
        self.network = network.eval()
        super(FinnPricer, self).__init__(network.grid, *args, **kwargs)

    @classmethod
    def load(cls, file_path):
        """
        Raises
        ------
        CheckpointVersionError
            si la versión del checkpoint no es soportada
        """
        return cls(FinnNetwork.load(file_path))

    def _quotes(self, items):
        items = list(items)
        for curve, _, contract in items:
            self.check_item(curve, contract)
        if not items:
            return [], 0.0
        start = time.perf_counter()
        values, grads = grad_inputs(self.network, contract_inputs(items))
        elapsed = time.perf_counter() - start

        k_count = self.grid.k_count
        values = values.detach().numpy()
        grads = grads.numpy()
        per_item = elapsed / len(items)
        quotes = [
            PriceQuote(
                price=float(values[i]),
                theta=-float(grads[i, tau1_index(k_count)]),
                dv_dtau1=float(grads[i, tau1_index(k_count)]),
                curve_deltas=grads[i, :k_count].copy(),
                eval_time=per_item,
            )
            for i in range(len(items))
        ]
        return quotes, elapsed

    def price(self, curve, svensson, contract):
        return self._quotes([(curve, svensson, contract)])[0][0]

    def batch_price(self, items):
        """Retorna (cotizaciones, tiempo total) para una lista homogénea."""
        return self._quotes(items)

    def price_contract(self, curve, svensson, contract):
        return self.price_many([(curve, svensson, contract)])[0]

    def price_many(self, items):
        # sólo precios, una única pasada vectorizada sin gradientes
        items = list(items)
        if not items:
            return []
        for curve, _, contract in items:
            self.check_item(curve, contract)
        with torch.no_grad():
            values = forward(self.network, contract_inputs(items))
        return values.numpy().tolist()


def load_model(file_path):
    return FinnPricer.load(file_path)


def price(model, curve, svensson, contract):
    """
    Precio, theta y deltas de curva de un caplet.

    Raises
    ------
    GridMismatchError
        si la curva no usa la grilla del modelo
    ContractError
        si el contrato excede el horizonte de la grilla
    """
    return model.price(curve, svensson, contract)


def batch_price(model, items):
    return model.batch_price(items)[0]
