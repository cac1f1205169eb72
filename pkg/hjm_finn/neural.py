from dataclasses import dataclass
import json
import logging

import numpy as np
import torch
from torch import nn

from hjm_finn.exceptions import CheckpointVersionError, DataFileError, InvalidParametersError
from hjm_finn.market_data import PARAM_FIELDS, TenorGrid
from hjm_finn.vol_model import VolModel

CHECKPOINT_VERSION = 1
DTYPE = torch.float64
HIDDEN_WIDTH = 500
HIDDEN_LAYERS = 3
N_SVENSSON = len(PARAM_FIELDS)
CONTRACT_FIELDS = ['tau1', 'delta', 'strike']
EXTRA_INPUTS = N_SVENSSON + len(CONTRACT_FIELDS)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
DEFAULT_WEIGHT_DECAY = 1e-5


def input_layout(k_count):
    """Orden de las entradas: (f_1..f_K, beta0..beta3, tau1_sv, tau2_sv, tau1, delta, strike)."""
    rates = [f'f_{k}' for k in range(k_count)]
    svensson = ['beta0', 'beta1', 'beta2', 'beta3', 'tau1_sv', 'tau2_sv']
    return rates + svensson + CONTRACT_FIELDS


def tau1_index(k_count):
    return k_count + N_SVENSSON


@dataclass
class EvalWithDerivs:
    """
    Valor de la red con sus derivadas respecto de las entradas.

    Attributes
    ----------
    value : torch.Tensor
        V en cada punto, forma (B,)
    grad_inputs : torch.Tensor
        dV/dX, forma (B, K + 9)
    hvp_results : torch.Tensor
        sigma_n' D_f^2 V sigma_n por factor, forma (B, N)
    """
    value: torch.Tensor
    grad_inputs: torch.Tensor
    hvp_results: torch.Tensor


@dataclass
class NormStats:
    """Estadísticas de normalización horneadas en la red."""
    k_count: int
    beta_mean: np.ndarray
    beta_std: np.ndarray
    tau_max: float

    @classmethod
    def from_dataset(cls, dataset):
        params = dataset.params_matrix()
        std = params.std(axis=0)
        return cls(
            k_count=dataset.grid.k_count,
            beta_mean=params.mean(axis=0),
            beta_std=np.where(std > 0, std, 1.0),
            tau_max=float(dataset.grid.tau_max),
        )

    def shift(self):
        return np.concatenate([np.zeros(self.k_count), self.beta_mean, np.zeros(3)])

    def scale(self):
        return np.concatenate([
            np.ones(self.k_count), self.beta_std, [self.tau_max, self.tau_max, 1.0]
        ])


class InputNormalization(nn.Module):
    """
    Primera capa de la red: z-scores para los parámetros Svensson, división
    por tau_max para tau1 y delta, identidad para las tasas y el strike.
    """

    def __init__(self, shift, scale):
        super().__init__()
        scale = torch.as_tensor(scale, dtype=DTYPE)
        if torch.any(scale <= 0):
            raise InvalidParametersError('Las escalas de normalización deben ser positivas')
        self.register_buffer('shift', torch.as_tensor(shift, dtype=DTYPE))
        self.register_buffer('scale', scale)

    def forward(self, x):
        return (x - self.shift) / self.scale


class FinnNetwork(nn.Module):
    """
    Red feed-forward con normalización de entradas, capas ocultas SiLU y
    salida softplus (precio siempre no negativo).

    Attributes
    ----------
    layer_sizes : list
        Tamaños [K + 9, 500, 500, 500, 1]
    grid : TenorGrid
        Grilla de plazos con la que se entrenó la red
    vol_model : VolModel
        Estructura de volatilidad usada en el entrenamiento
    training : dict
        Metadatos del entrenamiento (semilla, pérdidas finales)
    """

    def __init__(self, layer_sizes, shift, scale, grid, vol_model=None, training=None):
        super().__init__()
        self.layer_sizes = [int(size) for size in layer_sizes]
        if self.layer_sizes[0] != grid.k_count + EXTRA_INPUTS or self.layer_sizes[-1] != 1:
            raise InvalidParametersError(f'Tamaños de capa inválidos: {self.layer_sizes}')
        self.grid = grid
        self.vol_model = vol_model
        self.training = dict(training or {})
        self.normalization = InputNormalization(shift, scale)
        self.layers = nn.ModuleList([
            nn.Linear(n_in, n_out, dtype=DTYPE)
            for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        ])
        self.hidden_activation = nn.SiLU()
        self.output_activation = nn.Softplus()

    @classmethod
    def build(cls, grid, norm_stats, vol_model=None, seed=0,
              hidden_width=HIDDEN_WIDTH, hidden_layers=HIDDEN_LAYERS):
        """Red nueva con inicialización uniforme escalada por fan-in y semilla fija."""
        sizes = [grid.k_count + EXTRA_INPUTS] + [hidden_width] * hidden_layers + [1]
        logging.info(f'Inicializando la red {sizes} con semilla {seed}')
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            network = cls(sizes, norm_stats.shift(), norm_stats.scale(), grid, vol_model,
                          {'seed': int(seed)})
        return network

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    def forward(self, x):
        if x.shape[-1] != self.n_inputs:
            raise InvalidParametersError(
                f'Se esperaban {self.n_inputs} entradas, se recibieron {x.shape[-1]}'
            )
        hidden = self.normalization(x)
        for layer in self.layers[:-1]:
            hidden = self.hidden_activation(layer(hidden))
        return self.output_activation(self.layers[-1](hidden)).squeeze(-1)

    def to_checkpoint(self):
        return {
            'version': CHECKPOINT_VERSION,
            'layer_sizes': self.layer_sizes,
            'weights': [layer.weight.detach().tolist() for layer in self.layers],
            'biases': [layer.bias.detach().tolist() for layer in self.layers],
            'norm_stats': {
                'shift': self.normalization.shift.tolist(),
                'scale': self.normalization.scale.tolist(),
            },
            'input_layout': input_layout(self.grid.k_count),
            'grid': self.grid.to_dict(),
            'vol_model': self.vol_model.to_dict() if self.vol_model else None,
            'training': self.training,
        }

    @classmethod
    def from_checkpoint(cls, data):
        if data.get('version') != CHECKPOINT_VERSION:
            raise CheckpointVersionError(
                f"Versión de checkpoint no soportada: {data.get('version')}"
            )
        grid = TenorGrid.from_dict(data['grid'])
        if data.get('input_layout', input_layout(grid.k_count)) != input_layout(grid.k_count):
            raise CheckpointVersionError('El orden de entradas del checkpoint no es el esperado')
        vol_model = VolModel.from_dict(data['vol_model']) if data.get('vol_model') else None
        network = cls(
            data['layer_sizes'],
            data['norm_stats']['shift'],
            data['norm_stats']['scale'],
            grid,
            vol_model,
            data.get('training'),
        )
        with torch.no_grad():
            for layer, weight, bias in zip(network.layers, data['weights'], data['biases']):
                layer.weight.copy_(torch.tensor(weight, dtype=DTYPE))
                layer.bias.copy_(torch.tensor(bias, dtype=DTYPE))
        return network

    def save(self, file_path):
        with open(file_path, 'w') as archivo:
            json.dump(self.to_checkpoint(), archivo)

    @classmethod
    def load(cls, file_path):
        try:
            with open(file_path) as archivo:
                data = json.load(archivo)
        except (OSError, json.JSONDecodeError) as err:
            raise DataFileError(f'No se pudo leer el checkpoint {file_path}: {err}')
        return cls.from_checkpoint(data)


def _as_leaf(x):
    x = torch.as_tensor(x, dtype=DTYPE)
    if x.requires_grad and x.is_leaf:
        return x
    return x.detach().clone().requires_grad_(True)


def forward(network, x):
    """Precio V(X) para un punto (K + 9,) o un lote (B, K + 9)."""
    return network(torch.as_tensor(x, dtype=DTYPE))


def grad_inputs(fn, x, create_graph=False):
    """
    Gradiente exacto de `fn` respecto de cada entrada, incluida la capa de
    normalización. Retorna (valores, gradientes).
    """
    x = _as_leaf(x)
    value = fn(x)
    grads, = torch.autograd.grad(value.sum(), x, create_graph=create_graph)
    return value, grads


def _directional_hessians(grads, x, dirs, k_count, create_graph):
    results = []
    for n in range(dirs.shape[-2]):
        direction = dirs[..., n, :]
        slope = (grads[..., :k_count] * direction).sum()
        if not slope.requires_grad:
            results.append(torch.zeros(grads.shape[:-1], dtype=DTYPE))
            continue
        second, = torch.autograd.grad(
            slope, x, create_graph=create_graph, retain_graph=True, allow_unused=True
        )
        if second is None:
            results.append(torch.zeros(grads.shape[:-1], dtype=DTYPE))
            continue
        results.append((second[..., :k_count] * direction).sum(-1))
    return torch.stack(results, dim=-1)


def evaluate_with_derivs(fn, x, dirs, k_count, create_graph=False):
    """
    Valor, gradiente y formas cuadráticas sigma_n' D_f^2 V sigma_n sin
    materializar el hessiano: para cada factor se deriva s = D_f V . sigma_n
    respecto de f y se vuelve a contraer con sigma_n.

    Parameters
    ----------
    fn : callable
        Función de lote (B, K + 9) -> (B,), normalmente la red
    x : torch.Tensor
        Puntos de evaluación
    dirs : torch.Tensor
        Direcciones en el subespacio de tasas, forma (B, N, K); se tratan
        como constantes
    k_count : int
        Cantidad de tasas al comienzo de cada entrada
    create_graph : bool
        Conserva el grafo para derivar luego respecto de los parámetros
    """
    x = _as_leaf(x)
    dirs = torch.as_tensor(dirs, dtype=DTYPE).detach()
    value = fn(x)
    grads, = torch.autograd.grad(value.sum(), x, create_graph=True)
    hvps = _directional_hessians(grads, x, dirs, k_count, create_graph)
    if not create_graph:
        return EvalWithDerivs(value.detach(), grads.detach(), hvps.detach())
    return EvalWithDerivs(value, grads, hvps)


def hvp(fn, x, dirs, k_count, create_graph=False):
    """Sólo las formas cuadráticas por factor de `evaluate_with_derivs`."""
    return evaluate_with_derivs(fn, x, dirs, k_count, create_graph).hvp_results


def grad_params(network, loss_fn):
    """
    Gradiente exacto de la pérdida escalar `loss_fn()` respecto de cada peso
    y sesgo, incluyendo los caminos de segundo orden cuando la pérdida
    contiene derivadas de la red respecto de sus entradas.
    """
    params = list(network.parameters())
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return loss, [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]


def make_optimizer(network, learning_rate, weight_decay=DEFAULT_WEIGHT_DECAY):
    """Adam con decaimiento de pesos desacoplado (lambda * lr * theta)."""
    return torch.optim.AdamW(
        network.parameters(),
        lr=learning_rate,
        betas=ADAM_BETAS,
        eps=ADAM_EPS,
        weight_decay=weight_decay,
    )


def set_learning_rate(optimizer, learning_rate):
    for group in optimizer.param_groups:
        group['lr'] = learning_rate


def adam_step(optimizer, params, grads):
    for param, grad in zip(params, grads):
        param.grad = grad.detach()
    optimizer.step()
    optimizer.zero_grad(set_to_none=True)
