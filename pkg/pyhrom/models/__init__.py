from pyhrom.models.hybrid import Variant, ArchConfig, ParameterCount, HybridAutoencoder, build_model, \
    count_parameters, hybrid_encode, hybrid_decode, reconstruct
from pyhrom.models.koopman import KoopmanConfig, KoopmanModel, koopman_features, koopman_decode, koopman_forecast, \
    build_koopman, train_koopman
from pyhrom.models.lstm import LSTMCell, LSTMNet, lstm_step, build_lstm
from pyhrom.models.pod import PODBasis, compute_pod

__all__ = ['Variant', 'ArchConfig', 'ParameterCount', 'HybridAutoencoder', 'build_model', 'count_parameters',
           'hybrid_encode', 'hybrid_decode', 'reconstruct', 'KoopmanConfig', 'KoopmanModel', 'koopman_features',
           'koopman_decode', 'koopman_forecast', 'build_koopman', 'train_koopman', 'LSTMCell', 'LSTMNet', 'lstm_step',
           'build_lstm', 'PODBasis', 'compute_pod']
