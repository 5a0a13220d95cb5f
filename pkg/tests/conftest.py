import itertools

import numpy as np
import pytest

from gnnonline.data import write_bundle
from gnnonline.graph import build_graph
from gnnonline.synthetic import planted_citation_bundle


def central_diff(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of ``x`` (modified in place, restored)."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 0.0) -> float:
    """Norm-wise relative error; 0 when both are exactly zero.

    ``floor`` bounds the denominator from below so an identically zero
    gradient is judged against rounding noise, not against itself.
    """
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def away_from_kink(x: np.ndarray, margin: float = 1e-4) -> np.ndarray:
    """Push entries within ``margin`` of zero out to ``+-2*margin``."""
    near = np.abs(x) < margin
    return np.where(near, np.where(x < 0, -2 * margin, 2 * margin), x)


def random_graph(n: int, p: float, rng: np.random.Generator):
    pairs = [(i, j) for i, j in itertools.combinations(range(n), 2) if rng.random() < p]
    return build_graph(n, np.array(pairs, dtype=np.int64).reshape(-1, 2))


def dense_adjacency(g) -> np.ndarray:
    a = np.zeros((g.num_nodes, g.num_nodes))
    for u, v in g.edges():
        a[u, v] = a[v, u] = 1.0
    return a


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_bundle():
    return planted_citation_bundle(num_nodes=240, num_classes=3, num_features=48, avg_degree=4.0,
                                   seed=7, name="toy")


@pytest.fixture(scope="session")
def toy_bundle_dir(tmp_path_factory, toy_bundle):
    """The toy bundle on disk with predefined masks (60 train / 100 test)."""
    root = tmp_path_factory.mktemp("bundles")
    b = toy_bundle
    order = np.random.default_rng(0).permutation(b.num_nodes)
    train, rest = np.sort(order[:60]), order[60:]
    test = np.sort(rest[:100])
    # features are already row-normalized; loading normalizes again, which is idempotent
    write_bundle(root / "toy", "toy", b.features, b.labels, b.edges, b.num_classes,
                 train_mask=train, test_mask=test)
    return root


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
