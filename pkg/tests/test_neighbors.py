import numpy as np
import pytest

from sphfsi import available_backends
from sphfsi.errors import DomainEscapeError, StaleGridError
from sphfsi.neighbors import Domain, rebuild

BACKENDS = available_backends()


def brute_force(pos, r_c, domain):
    """O(N^2) all-pairs oracle with minimum-image distances."""
    n = len(pos)
    ext = domain.extent
    pairs = set()
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = pos[i] - pos[j]
            for ax in range(domain.dim):
                if domain.periodic[ax]:
                    d[ax] -= ext[ax] * np.rint(d[ax] / ext[ax])
            if np.linalg.norm(d) < r_c:
                pairs.add((i, j))
    return pairs


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("periodic", [(False, False), (True, False), (True, True)])
def test_matches_brute_force_random_clouds(backend, periodic):
    rng = np.random.default_rng(42)
    for trial in range(10):
        n = rng.integers(2, 120)
        pos = rng.uniform(0.0, 1.0, (n, 2))
        r_c = rng.uniform(0.05, 0.45)
        dom = Domain.create([0, 0], [1, 1], periodic)
        if any(periodic) and 2 * r_c > 1.0:
            r_c = 0.45
        grid = rebuild(pos, r_c, dom, backend_name=backend)
        got = set(zip(grid.pairs.rows.tolist(), grid.pairs.cols.tolist()))
        assert got == brute_force(pos, r_c, dom), f"trial {trial}"


@pytest.mark.parametrize("backend", BACKENDS)
def test_matches_brute_force_3d(backend):
    rng = np.random.default_rng(7)
    for periodic in [(False,) * 3, (True, False, True)]:
        pos = rng.uniform(0.0, 1.0, (80, 3))
        dom = Domain.create([0] * 3, [1] * 3, periodic)
        grid = rebuild(pos, 0.3, dom, backend_name=backend)
        got = set(zip(grid.pairs.rows.tolist(), grid.pairs.cols.tolist()))
        assert got == brute_force(pos, 0.3, dom)


@pytest.mark.parametrize("backend", BACKENDS)
def test_tiny_periodic_box_two_cells(backend):
    # box barely wide enough (2 cells per axis) exercises wrapped-cell dedup
    rng = np.random.default_rng(3)
    r_c = 0.4
    dom = Domain.create([0, 0], [1, 1], [True, True])
    pos = rng.uniform(0.0, 1.0, (40, 2))
    grid = rebuild(pos, r_c, dom, backend_name=backend)
    got = list(zip(grid.pairs.rows.tolist(), grid.pairs.cols.tolist()))
    assert len(got) == len(set(got)), "duplicate pairs"
    assert set(got) == brute_force(pos, r_c, dom)


def test_pair_distance_thresholds():
    dom = Domain.create([0, 0], [10, 10])
    r_c = 1.0
    near = rebuild(np.array([[1.0, 1.0], [1.0 + 0.9 * r_c, 1.0]]), r_c, dom)
    cols, _, _ = near.neighbors(0)
    assert cols.tolist() == [1]
    far = rebuild(np.array([[1.0, 1.0], [1.0 + 1.1 * r_c, 1.0]]), r_c, dom)
    assert len(far.neighbors(0)[0]) == 0
    # exact r_c separation is excluded (strict inequality)
    edge = rebuild(np.array([[1.0, 1.0], [1.0 + r_c, 1.0]]), r_c, dom)
    assert len(edge.neighbors(0)[0]) == 0


def test_periodic_wrapped_distance():
    r_c = 0.2
    L = 2.5 * r_c
    dom = Domain.create([0, 0], [L, 1.0], [True, False])
    pos = np.array([[0.1 * r_c, 0.5], [L - 0.1 * r_c, 0.5]])
    grid = rebuild(pos, r_c, dom)
    cols, dx, dist = grid.neighbors(0)
    assert cols.tolist() == [1]
    assert dist[0] == pytest.approx(0.2 * r_c)
    assert grid.neighbors(1)[0].tolist() == [0]


def test_single_particle_and_empty_lists():
    dom = Domain.create([0, 0], [1, 1])
    grid = rebuild(np.array([[0.5, 0.5]]), 0.2, dom)
    assert len(grid.neighbors(0)[0]) == 0


def test_neighbor_order_is_ascending():
    rng = np.random.default_rng(11)
    pos = rng.uniform(0, 1, (60, 2))
    dom = Domain.create([0, 0], [1, 1])
    grid = rebuild(pos, 0.3, dom)
    for i in range(60):
        cols, _, _ = grid.neighbors(i)
        assert np.all(np.diff(cols) > 0)


def test_stale_grid_detected():
    dom = Domain.create([0, 0], [1, 1])
    pos = np.random.default_rng(0).uniform(0, 1, (10, 2))
    grid = rebuild(pos, 0.3, dom, generation=5)
    grid.check_current(5)
    with pytest.raises(StaleGridError):
        grid.check_current(6)
    with pytest.raises(StaleGridError):
        grid.neighbors(0, generation=4)


def test_domain_escape_raises():
    dom = Domain.create([0, 0], [1, 1])
    pos = np.array([[0.5, 0.5], [5.0, 0.5]])
    with pytest.raises(DomainEscapeError):
        rebuild(pos, 0.1, dom)
    # within the configured margin: fine
    rebuild(np.array([[0.5, 0.5], [1.05, 0.5]]), 0.1, dom)


def test_nonfinite_positions_rejected():
    dom = Domain.create([0, 0], [1, 1])
    with pytest.raises(ValueError):
        rebuild(np.array([[0.5, np.nan]]), 0.1, dom)


def test_wrap_examples():
    L = 1.0
    dom = Domain.create([0, 0], [L, L], [True, False])
    dx = 0.01
    wrapped = dom.wrap(np.array([[L + 0.1 * dx, 0.5]]))
    assert wrapped[0, 0] == pytest.approx(0.1 * dx)
    inside = np.array([[0.3, 0.4]])
    assert np.array_equal(dom.wrap(inside), inside)


@pytest.mark.parametrize("backend", BACKENDS)
def test_query_points_match_brute_force(backend):
    rng = np.random.default_rng(5)
    pos = rng.uniform(0, 1, (100, 2))
    q = rng.uniform(0, 1, (30, 2))
    dom = Domain.create([0, 0], [1, 1], [True, False])
    r_c = 0.25
    grid = rebuild(pos, r_c, dom, backend_name=backend)
    table = grid.query_points(q)
    got = set(zip(table.rows.tolist(), table.cols.tolist()))
    expect = set()
    for a in range(len(q)):
        for j in range(len(pos)):
            d = q[a] - pos[j]
            d[0] -= np.rint(d[0] / 1.0)
            if np.linalg.norm(d) < r_c:
                expect.add((a, j))
    assert got == expect
