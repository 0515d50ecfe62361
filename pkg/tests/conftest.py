from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from landscape_mh.models import IsingModel, PottsModel, TabularModel, load_tabular, reference_chain

DATA = Path(__file__).parent / "data"


def random_tabular(rng, n, extra=0.3, spread=5.0):
    """Connected random model: a random spanning tree plus extra edges."""
    energies = rng.uniform(0.0, spread, n).round(3)
    order = rng.permutation(n)
    edges = {}
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        edges[min(a, b), max(a, b)] = float(rng.uniform(0.2, 2.0))
    for _ in range(int(extra * n)):
        a, b = rng.choice(n, 2, replace=False)
        edges.setdefault((int(min(a, b)), int(max(a, b))), float(rng.uniform(0.2, 2.0)))
    return TabularModel(energies.tolist(), [(a, b, r) for (a, b), r in sorted(edges.items())], name=f"random{n}")


def corpus_models():
    """Every enumerable model the corpus-wide checks run on."""
    return [
        reference_chain("two-state"),
        reference_chain("three-state"),
        reference_chain("double-well"),
        IsingModel.hypercube(2),
        IsingModel.complete(4),
        PottsModel(3, 2),
        load_tabular(DATA / "ring6.tab"),
        load_tabular(DATA / "star5.tab"),
    ]


@pytest.fixture(scope="session")
def corpus():
    return corpus_models()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
