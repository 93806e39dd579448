import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ctoqw import passage, trajectory
from ctoqw.errors import ModelError, PreconditionError
from ctoqw.model import SitedState
from ctoqw.superop import SuperOp
from oracles import (
    dwell_integral_oracle,
    gamblers_ruin_return,
    jump_chain_expected_visits,
    jump_chain_hit_probability,
    passage_partial_oracle,
)
from strategies import random_density


def test_path_operator_scalar_two_site(two_site):
    op = passage.path_operator(two_site, [0, 1], [1.0])
    assert op[0, 0] == pytest.approx(math.exp(-0.5), abs=1e-14)


def test_path_operator_empty_path_is_identity(coherent):
    assert_allclose(passage.path_operator(coherent, [1], []), np.eye(2))


def test_path_operator_spin_first_leg(spin_small):
    t1 = 0.7
    op = passage.path_operator(spin_small, [0, 1], [t1])
    expected = math.exp(-t1 / 2.0) * np.array([[2.0], [1.0]]) / math.sqrt(5.0)
    assert_allclose(op, expected, atol=1e-14)


def test_path_operator_missing_jump_raises(two_site):
    with pytest.raises(ModelError):
        passage.path_operator(two_site, [0, 0], [1.0])


def test_propagated_path_operator(two_site):
    op = passage.propagated_path_operator(two_site, [0, 1], [1.0], 2.5)
    assert op[0, 0] == pytest.approx(math.exp(-0.5) * math.exp(-0.75), abs=1e-14)


def test_dwell_integral_scalar():
    y = passage.dwell_integral([[-0.5]], [[1.0]])
    assert y[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_dwell_integral_uniform_decay(spin_small):
    rho = random_density(np.random.default_rng(1), 2)
    y = passage.dwell_integral(spin_small.effective(1), rho)
    assert_allclose(y, rho, atol=1e-12)


def test_dwell_integral_coherent_trace(coherent):
    g = coherent.effective(1)
    y = passage.dwell_integral(g, np.eye(2))
    res = np.linalg.norm(g @ y + y @ g.conj().T + np.eye(2))
    assert res < 1e-12
    assert np.trace(y).real == pytest.approx(2.0, abs=1e-12)
    assert_allclose(y, dwell_integral_oracle(g, np.eye(2)), atol=1e-8)


def test_dwell_integral_divergent_raises():
    with pytest.raises(PreconditionError) as err:
        passage.dwell_integral(np.array([[1j]]), [[1.0]])
    assert "eigenvalue" in str(err.value)


def test_jump_kernel_two_site(two_site):
    kernels = passage.jump_kernel(two_site)
    j01 = kernels[(0, 1)]
    assert j01.apply([[1.0]])[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_jump_kernel_drift_weights(biased_small):
    kernels = passage.jump_kernel(biased_small)
    assert kernels[(0, 1)].apply([[1.0]])[0, 0] == pytest.approx(0.75, abs=1e-12)
    assert kernels[(0, -1)].apply([[1.0]])[0, 0] == pytest.approx(0.25, abs=1e-12)


def test_jump_kernel_cp_and_substochastic(spin_small):
    kernels = passage.jump_kernel(spin_small)
    rho = random_density(np.random.default_rng(2), 2)
    total = 0.0
    for (src, dst), ker in kernels.items():
        assert ker.choi_min_eigenvalue() >= -1e-9
        if src == 1:
            total += float(np.trace(ker.apply(rho)).real)
    assert total <= 1.0 + 1e-9


def test_first_passage_two_site_certain(two_site):
    p, diag = passage.first_passage_map(two_site, 0, 0)
    assert p.apply([[1.0]])[0, 0].real == pytest.approx(1.0, abs=1e-12)
    assert diag["spectral_radius"] == pytest.approx(0.0, abs=1e-12)


def test_first_passage_drift_return(biased_small):
    p, _ = passage.first_passage_map(biased_small, 0, 0)
    got = passage.reach_probability(p, [[1.0]])
    oracle = jump_chain_hit_probability(biased_small, 0, 0)
    assert got == pytest.approx(oracle, abs=1e-10)
    assert got == pytest.approx(gamblers_ruin_return(0.75), abs=1e-4)


def test_first_passage_spin_sure_and_unsure(spin_small):
    p, _ = passage.first_passage_map(spin_small, 1, 1)
    assert passage.reach_probability(p, np.diag([0.0, 1.0])) == pytest.approx(
        1.0, abs=1e-9
    )
    # window 8 truncates the tail, biasing the through-tail branch down
    v = passage.reach_probability(p, np.diag([1.0, 0.0]))
    assert v == pytest.approx(1.0 / 3.0, abs=2e-3)
    assert v < 1.0 - 1e-3


def test_first_passage_series_matches_solve(biased_small):
    direct, _ = passage.first_passage_map(biased_small, 0, 0)
    series, diag = passage.first_passage_map(biased_small, 0, 0, force_series=True, tol=1e-12)
    assert diag["method"] == "series"
    assert np.max(np.abs(direct.matrix - series.matrix)) < 1e-9


def test_first_passage_series_budget_error(biased_small):
    from ctoqw.errors import ConvergenceError

    with pytest.raises(ConvergenceError):
        passage.first_passage_map(
            biased_small, 0, 0, force_series=True, tol=1e-12, max_iter=3
        )


def test_first_passage_cp_certificates(two_site, biased_small, spin_small, coherent):
    cases = [(two_site, 0, 0), (biased_small, 0, 0), (spin_small, 1, 1), (coherent, 1, 1)]
    for m, i, j in cases:
        p, diag = passage.first_passage_map(m, i, j)
        assert p.choi_min_eigenvalue() >= -1e-9
        assert p.trace_increase_defect() <= 1e-9


def test_partial_sums_monotone_bounded(spin_small):
    kernels = passage.jump_kernel(spin_small)
    taboo = passage._taboo_kernel(spin_small, 1, kernels)
    start = np.zeros((taboo.dim, 4), dtype=complex)
    for (src, dst), ker in kernels.items():
        if src == 1 and dst in taboo.offsets:
            start[taboo.offsets[dst], :] += ker.matrix
    rho = random_density(np.random.default_rng(3), 2)
    acc = np.zeros((4, 4), dtype=complex)
    carry = start.copy()
    traces = []
    for _ in range(200):
        acc = acc + taboo.into_taboo @ carry
        carry = taboo.matrix @ carry
        out = passage._apply_mat(acc, rho, 2)
        traces.append(float(np.trace(out).real))
    diffs = np.diff(traces)
    assert np.all(diffs >= -1e-12)
    assert traces[-1] <= 1.0 + 1e-9


def test_passage_oracle_equivalence_small_paths(two_site, spin_small, coherent):
    # restrict the passage machinery to paths with at most three jumps and
    # compare against brute-force quadrature over the same paths
    for m, i, j, rho in (
        (two_site, 0, 0, np.array([[1.0]])),
        (spin_small, 1, 1, random_density(np.random.default_rng(4), 2)),
        (coherent, 1, 1, random_density(np.random.default_rng(5), 2)),
        (spin_small, 0, 1, np.array([[1.0]])),
    ):
        kernels = passage.jump_kernel(m)
        taboo = passage._taboo_kernel(m, j, kernels)
        di, dj = m.dim(i), m.dim(j)
        if i == j:
            start = np.zeros((taboo.dim, di * di), dtype=complex)
            for (src, dst), ker in kernels.items():
                if src == i and dst in taboo.offsets:
                    start[taboo.offsets[dst], :] += ker.matrix
            # jump counts: m taboo steps plus entry and exit -> m + 2
            acc = taboo.into_taboo @ start  # 2 jumps
            acc = acc + taboo.into_taboo @ taboo.matrix @ start  # 3 jumps
        else:
            start = np.zeros((taboo.dim, di * di), dtype=complex)
            start[taboo.offsets[i], :] = np.eye(di * di)
            acc = taboo.into_taboo @ start  # 1 jump
            acc = acc + taboo.into_taboo @ taboo.matrix @ start  # 2
            acc = acc + taboo.into_taboo @ taboo.matrix @ taboo.matrix @ start  # 3
        restricted = passage._apply_mat(acc, rho, dj)
        oracle = passage_partial_oracle(m, i, j, rho, max_jumps=3, q=48)
        assert np.max(np.abs(restricted - oracle)) < 1e-6


def test_expected_occupation_recurrent_infinite(two_site):
    assert passage.expected_occupation(two_site, 0, 0, [[1.0]]) == math.inf


def test_expected_occupation_drift(biased_small):
    value = passage.expected_occupation(biased_small, 0, 0, [[1.0]])
    oracle = jump_chain_expected_visits(biased_small, 0)  # unit mean dwell
    assert value == pytest.approx(oracle, abs=1e-9)
    assert value == pytest.approx(2.0, abs=1e-3)  # window-8 truncation bias


def test_expected_occupation_spin_finite_and_mc(spin_small):
    rho = np.diag([1.0, 0.0])
    value = passage.expected_occupation(spin_small, 1, 1, rho)
    assert np.isfinite(value)
    init = SitedState(1, rho)
    reports = trajectory.estimate(
        spin_small, init, 80.0, 4000, seed=71,
        queries=[{"kind": "occupation", "vertex": 1}],
    )
    point = reports[0].points[0]
    assert abs(point.estimate - value) <= 3 * point.stderr + 1e-3


def test_expected_occupation_off_diagonal(spin_small):
    # starting next door: occupation at 1 picks up the arrival distribution
    value = passage.expected_occupation(spin_small, 0, 1, [[1.0]])
    assert np.isfinite(value) and value > 0


def test_reach_probability_validates_state(two_site):
    p, _ = passage.first_passage_map(two_site, 0, 0)
    with pytest.raises(PreconditionError):
        passage.reach_probability(p, [[2.0]])


def test_reach_probability_clamps_tiny_overshoot():
    mat = (1.0 + 5e-10) * np.eye(1)
    p = SuperOp(1, 1, mat)
    assert passage.reach_probability(p, [[1.0]]) == 1.0
