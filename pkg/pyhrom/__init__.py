__version__ = '0.1.0'

from .exceptions import HromError, HromValidationError, HromDomainError, HromConfigError, HromStateError, \
    HromOptimizationError, HromSimulationError, HromFormatError  # noqa: F401
from .numerics import RandomStream, thin_svd, frobenius_norm  # noqa: F401
from .container import HromContainer  # noqa: F401
from .datasets import SnapshotMatrix  # noqa: F401
from .models import Variant, HybridAutoencoder, KoopmanModel, LSTMNet, build_model  # noqa: F401
from .training import TrainConfig, TrainReport, train_autoencoder, ensemble_train  # noqa: F401
from .evaluation import MetricReport, SharpnessConfig  # noqa: F401
from .surrogate import LSTMConfig  # noqa: F401
from .results import ResultTable  # noqa: F401
from .experiment import ExperimentKind, ExperimentConfig, run_experiment  # noqa: F401
