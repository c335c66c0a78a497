import json
import os
import pathlib
from typing import List

import numpy as np
from pytest import fixture

from pyhrom.datasets.snapshots import SnapshotMatrix, ShuffledRatio, split_dataset, standardize
from pyhrom.numerics import RandomStream

path_examples = os.path.join(pathlib.Path(__file__).parent.absolute(), 'examples')

parameter_count_files = [os.path.join(path_examples, 'parameter-counts', 'ks-variants.json')]
reference_magnitude_files = [os.path.join(path_examples, 'reference-magnitudes', 'ks-1024.json')]
burgers_split_files = [os.path.join(path_examples, 'splits', 'burgers.json')]
window_count_files = [os.path.join(path_examples, 'splits', 'windows.json')]


def pytest_generate_tests(metafunc):
    if "parameter_count_case" in metafunc.fixturenames:
        test_suite = _build_test_cases(parameter_count_files)
        ids = [test['title'] for test in test_suite]
        metafunc.parametrize("parameter_count_case", test_suite, ids=ids)
    if "reference_magnitude_case" in metafunc.fixturenames:
        test_suite = _build_test_cases(reference_magnitude_files)
        ids = [test['title'] for test in test_suite]
        metafunc.parametrize("reference_magnitude_case", test_suite, ids=ids)
    if "burgers_split_case" in metafunc.fixturenames:
        test_suite = _build_test_cases(burgers_split_files)
        ids = [test['title'] for test in test_suite]
        metafunc.parametrize("burgers_split_case", test_suite, ids=ids)
    if "window_count_case" in metafunc.fixturenames:
        test_suite = _build_test_cases(window_count_files)
        ids = [test['title'] for test in test_suite]
        metafunc.parametrize("window_count_case", test_suite, ids=ids)


def _build_test_cases(files: List[str]) -> List[dict]:
    test_suite = []
    for file in files:
        with open(file, 'r') as f:
            test_suite.extend(json.load(f))
    return test_suite


def low_rank_snapshots(m: int = 60, features: int = 24, rank: int = 3, seed: int = 0, noise: float = 0.0,
                       n_components: int = 1) -> SnapshotMatrix:
    """ Standardized snapshots of an exactly rank-``rank`` field (plus optional noise), split 7:3. """

    stream = RandomStream(seed)
    data = stream.normal(size=(m, rank)) @ stream.normal(size=(rank, features))
    if noise:
        data = data + noise * stream.normal(size=data.shape)
    train_idx, test_idx = split_dataset(m, ShuffledRatio(0.7, seed))
    return standardize(SnapshotMatrix(data, n_components, train_idx, test_idx))


def travelling_snapshots(m: int = 80, features: int = 16, seed: int = 0) -> SnapshotMatrix:
    """ Nonlinear, smooth snapshots ``tanh(sin(x - c t))``, standardized and split 7:3. """

    x = np.linspace(0.0, 2 * np.pi, features, endpoint=False)
    t = np.linspace(0.0, 3.0, m)
    data = np.tanh(2.0 * np.sin(x[None, :] - 1.3 * t[:, None]))
    train_idx, test_idx = split_dataset(m, ShuffledRatio(0.7, seed))
    return standardize(SnapshotMatrix(data, 1, train_idx, test_idx, times=t))


@fixture
def stream() -> RandomStream:
    return RandomStream(1234)


@fixture
def snapshots() -> SnapshotMatrix:
    return low_rank_snapshots()
