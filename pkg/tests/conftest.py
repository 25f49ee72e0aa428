import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tcfa.features import FeatureMatrix  # noqa: E402
from tcfa.pipeline import extract_corpus  # noqa: E402
from tcfa.synthdata import PhantomConfig, generate_corpus  # noqa: E402


@pytest.fixture(scope="session")
def small_corpus():
    cfg = PhantomConfig(size=200, tcfa_fraction=0.2, seed=3)
    samples, manifest = generate_corpus(cfg)
    return cfg, samples, manifest


@pytest.fixture(scope="session")
def small_features(small_corpus):
    return extract_corpus(small_corpus[1])


def random_matrix(rng, n, f, lo=0.0, hi=1.0):
    y = np.r_[np.zeros(n // 2, int), np.ones(n - n // 2, int)]
    rng.shuffle(y)
    return FeatureMatrix([f"s{i}" for i in range(n)], y, rng.uniform(lo, hi, (n, f)), [f"F{j + 1}" for j in range(f)])


@pytest.fixture(scope="session")
def default_split():
    """Default phantom corpus at master seed 42, split and normalized as the pipeline does."""
    from dataclasses import replace

    from tcfa.evaluation import SplitSpec, prepare_top_n, rank_training_features, stratified_split
    from tcfa.pipeline import derive_seed

    samples, _ = generate_corpus(replace(PhantomConfig(), seed=derive_seed(42, "generate")))
    m = extract_corpus(samples)
    tr, te = stratified_split(m.labels, SplitSpec(seed=derive_seed(42, "split")))
    train, test = m.subset(tr), m.subset(te)
    ranking = rank_training_features(train)
    a, b, _ = prepare_top_n(train, test, ranking, 105)
    return {"train": train, "test": test, "ranking": ranking, "train_n": a, "test_n": b}


ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
