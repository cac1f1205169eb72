from csv import DictWriter
import os

import numpy as np

TRAINING_STREAM = 0
TEST_SET_STREAM = 1
MONTE_CARLO_STREAM = 2


def make_rng(seed, *stream):
    """
    Retorna un generador de numpy derivado de la semilla y de una clave de
    flujo, de manera que entrenamiento, set de prueba y Monte Carlo usen
    secuencias disjuntas para una misma semilla.
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.default_rng(sequence)


def chebyshev_nodes(count, lower, upper):
    """Nodos de Chebyshev de primera especie sobre [lower, upper], en orden ascendente."""
    nodes = np.polynomial.chebyshev.chebpts1(int(count))
    return 0.5 * (lower + upper) + 0.5 * (upper - lower) * nodes


def write_file(header, rows, file_path):
    with open(file_path, 'w', newline='') as archivo:
        writer = DictWriter(archivo, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)


def ensure_dir_exists(directory):
    if directory and not os.path.exists(directory):
        os.makedirs(directory)
