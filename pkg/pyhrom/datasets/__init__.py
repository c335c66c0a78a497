from pyhrom.datasets.burgers import BurgersConfig, burgers_solution, burgers_initial_condition, burgers_trajectory, \
    generate_burgers, TRAIN_RE, TEST_RE
from pyhrom.datasets.ks import KSConfig, ks_initial_condition, simulate_ks, generate_ks
from pyhrom.datasets.snapshots import SnapshotMatrix, standardize, destandardize, split_dataset, add_noise, \
    ShuffledRatio, ByParameter, ByTime
from pyhrom.datasets.wave import WaveConfig, gen_traveling_wave, generate_wave

__all__ = ['SnapshotMatrix', 'standardize', 'destandardize', 'split_dataset', 'add_noise', 'ShuffledRatio',
           'ByParameter', 'ByTime', 'KSConfig', 'ks_initial_condition', 'simulate_ks', 'generate_ks',
           'BurgersConfig', 'burgers_solution', 'burgers_initial_condition', 'burgers_trajectory',
           'generate_burgers', 'TRAIN_RE', 'TEST_RE', 'WaveConfig', 'gen_traveling_wave', 'generate_wave']
