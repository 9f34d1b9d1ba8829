import numpy as np
import pytest

from avtenet.synthdata import GenerationConfig, generate_dataset

ACCEPTANCE_LINES = []


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


SMALL_COUNTS = {"RvRa": 6, "RvFa": 6, "FvRa": 6, "FvFa": 6}


def small_config(seed: int = 42) -> GenerationConfig:
    return GenerationConfig(train_counts=dict(SMALL_COUNTS), n_test_real=6, n_test_fake=6,
                            n_train_subjects=5, n_test_subjects=3, global_seed=seed)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("small-corpus")
    return generate_dataset(root, small_config())


@pytest.fixture
def rng():
    return np.random.default_rng(0)
