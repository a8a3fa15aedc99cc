import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from rdex_csop import benchmarks as bm
from rdex_csop.constraints import mean_violation, mean_violation_batch
from rdex_csop.problem import RawEvaluation

NAMES = bm.list_problems()


def test_registry_names():
    assert set(NAMES) == {
        "sphere-linear-ineq", "sphere-eq", "rosenbrock-cubic-line", "rastrigin-box-linear", "mixed-eq-ineq",
    }


@pytest.mark.parametrize("name", NAMES)
def test_stored_optimizer_checks_out(name):
    assert bm.verify_optimum(bm.get_problem(name, bm.default_dim(name)))


def test_unknown_and_unsupported():
    with pytest.raises(bm.UnknownProblem):
        bm.get_problem("nope", 3)
    with pytest.raises(bm.UnsupportedDimension):
        bm.get_problem("rosenbrock-cubic-line", 3)
    with pytest.raises(bm.UnsupportedDimension):
        bm.get_problem("mixed-eq-ineq", 2)
    with pytest.raises(bm.UnsupportedDimension):
        bm.get_problem("sphere-eq", 0)


def test_rastrigin_edge_minimiser():
    e = bm.get_problem("rastrigin-box-linear", 3)
    t = e.known_optimizer[0]
    assert 0.99 < t < 1.0
    grid = np.linspace(0.5, 5.12, 200_001)
    vals = grid**2 - 10 * np.cos(2 * np.pi * grid) + 10
    assert vals.min() >= e.known_optimum_f - 1e-9


def _box_points(entry, data, n):
    lo, hi = entry.spec.lower, entry.spec.upper
    u = np.array(data.draw(st.lists(st.floats(0, 1), min_size=n * entry.spec.dim, max_size=n * entry.spec.dim)))
    return lo + u.reshape(n, -1) * (hi - lo)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(NAMES), st.integers(2, 6), st.data())
def test_outputs_finite_and_batch_consistent(name, D, data):
    try:
        entry = bm.get_problem(name, D)
    except bm.UnsupportedDimension:
        assume(False)
    X = _box_points(entry, data, 5)
    f, g, h = entry.spec.batch_evaluator(X)
    assert np.all(np.isfinite(f)) and np.all(np.isfinite(g)) and np.all(np.isfinite(h))
    phis = mean_violation_batch(g, h)
    for i, x in enumerate(X):
        fi, gi, hi = entry.spec.evaluator(x)
        assert fi == pytest.approx(f[i], rel=1e-12, abs=1e-12)
        assert mean_violation(RawEvaluation(fi, gi, hi)) == pytest.approx(phis[i], abs=1e-12)


def _onto_equality(entry, x, slack):
    """Nudge ``x`` so the equality residual equals ``slack`` (within the tolerance)."""
    x = x.copy()
    if entry.spec.name == "sphere-eq":
        x += (1.0 + slack - x.sum()) / x.size
    else:
        x[1] = 1.0 + slack - x[0]
    return np.clip(x, entry.spec.lower, entry.spec.upper)


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(NAMES), st.floats(-1e-4, 1e-4), st.data())
def test_no_feasible_point_beats_relaxed_optimum(name, slack, data):
    entry = bm.get_problem(name, bm.default_dim(name))
    x = _box_points(entry, data, 1)[0]
    if entry.spec.n_eq:
        x = _onto_equality(entry, x, slack)
    f, g, h = entry.spec.evaluator(x)
    phi = mean_violation(RawEvaluation(f, g, h))
    assume(phi == 0.0)
    assert f >= entry.relaxed_optimum_f - 1e-9


def test_relaxed_optimum_attained_on_equality_problems():
    e = bm.get_problem("sphere-eq", 4)
    x = np.full(4, (1 - 1e-4) / 4)
    f, g, h = e.spec.evaluator(x)
    assert mean_violation(RawEvaluation(f, g, h)) == 0.0
    assert f == pytest.approx(e.relaxed_optimum_f, abs=1e-15)
    assert e.known_optimum_f - e.relaxed_optimum_f == pytest.approx(5e-5, rel=1e-3)
