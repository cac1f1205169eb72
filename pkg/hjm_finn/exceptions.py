class FinnError(Exception):
    """Clase base para las excepciones de este módulo."""
    pass


class InvalidConfigurationError(FinnError):
    """La configuración o los parámetros de línea de comandos son inválidos."""
    pass


class InvalidParametersError(FinnError):
    """Parámetros Svensson inválidos o evaluación no finita de la curva."""
    pass


class DataFileError(FinnError):
    """El archivo de entrada no se puede leer o no tiene el formato esperado."""
    pass


class EmptyDatasetError(FinnError):
    """No quedan curvas luego de aplicar los filtros."""
    pass


class VolEstimationError(FinnError):
    """Falla en la estimación de la estructura de volatilidad."""
    pass


class ContractError(FinnError):
    """El contrato no es compatible con la grilla de plazos."""
    pass


class SimulationError(FinnError):
    """Demasiadas trayectorias Monte Carlo divergentes."""
    pass


class TrainingDivergedError(FinnError):
    """La función de pérdida dejó de ser finita durante el entrenamiento."""

    def __init__(self, epoch, batch, term):
        self.epoch = epoch
        self.batch = batch
        self.term = term
        super(TrainingDivergedError, self).__init__(
            f'Pérdida no finita en la época {epoch}, lote {batch}, término {term}'
        )


class GridMismatchError(FinnError):
    """La grilla de la curva no coincide con la del modelo."""
    pass


class CheckpointVersionError(FinnError):
    """La versión del checkpoint no es soportada."""
    pass
