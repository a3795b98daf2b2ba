import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st_
from scipy.stats import betabinom

from cegmon.bn import DiscreteBN
from cegmon.dirichlet import (BetaState, DirichletState, beta_binomial, bn_log_marginal_likelihood,
                              log_marginal_likelihood, observe, posterior_state, predictive, reference_prior,
                              stage_log_ml)
from cegmon.tree import StagedTree, Staging, VariableSpec, EventTree
from oracles import gamma_log_ml, random_rows, random_staged_tree, sequential_log_ml, staged_log_ml


def one_stage(alpha, counts=None):
    s = DirichletState.from_prior([alpha])
    return s if counts is None else s.with_counts([counts])


@pytest.mark.parametrize("alpha,counts,expected", [
    ((1, 1), (0, 0), 0.0),
    ((1, 1), (1, 0), -math.log(2)),
    ((1, 1), (2, 1), math.log(1 / 12)),
])
def test_log_ml_examples(alpha, counts, expected):
    assert log_marginal_likelihood(one_stage(alpha, counts)) == pytest.approx(expected, abs=1e-12)


def test_bn_log_ml_single_root():
    bn = DiscreteBN([VariableSpec("A", ("a", "b"))], priors={"A": [[1, 1]]}, counts={"A": [[2, 1]]})
    assert bn_log_marginal_likelihood(bn) == pytest.approx(math.log(1 / 12), abs=1e-12)
    assert bn_log_marginal_likelihood(DiscreteBN([VariableSpec("A", ("a", "b"))])) == 0.0


@pytest.mark.parametrize("alpha,counts,expected", [
    ((1, 1), (0, 0), (0.5, 0.5)),
    ((1, 1), (2, 0), (0.75, 0.25)),
    ((1, 1, 1), (0, 0, 3), (1 / 6, 1 / 6, 4 / 6)),
])
def test_predictive_examples(alpha, counts, expected):
    np.testing.assert_allclose(predictive(one_stage(alpha, counts), 0), expected, atol=1e-15)


def test_observe():
    s = one_stage((1, 1, 1))
    s = observe(observe(s, 0, 0), 0, 0)
    np.testing.assert_array_equal(s.counts[0], [2, 0, 0])
    with pytest.raises(IndexError):
        observe(s, 0, 3)
    with pytest.raises(IndexError):
        observe(s, 1, 0)


def test_state_arrays_read_only():
    s = one_stage((1, 1), (2, 1))
    with pytest.raises(ValueError):
        s.alpha[0][0] = 5.0


def test_reference_prior_chds(chds_ahc):
    prior = reference_prior(StagedTree(chds_ahc.tree, chds_ahc.staging), 3)
    np.testing.assert_allclose(prior.alpha[0], [1.5, 1.5])
    # X_l cut: ternary florets, stage (HH,HL,LH) pools three situations
    np.testing.assert_allclose(prior.alpha[3], [3.0, 3.0, 3.0])
    np.testing.assert_allclose(prior.alpha[4], [1.0, 1.0, 1.0])


def test_reference_prior_small_cases():
    t = EventTree([VariableSpec("A", ("a", "b")), VariableSpec("B", ("x", "y"))])
    st = StagedTree(t, Staging((((0,),), ((1, 2),))))
    prior = reference_prior(st, 2)
    np.testing.assert_allclose(prior.alpha[1], [2.0, 2.0])
    np.testing.assert_allclose(prior.alpha[0], [1.0, 1.0])
    with pytest.raises(ValueError):
        reference_prior(st, 0)


def test_sequential_decomposition_by_hand():
    # (1/2)(2/3)(1/4)
    assert sequential_log_ml([(1, 1)], [0, 0, 0], [0, 0, 1]) == pytest.approx(math.log(1 / 12))


@settings(max_examples=50, deadline=None)
@given(st_.integers(0, 2**32 - 1))
def test_product_of_predictives_equals_closed_form(seed):
    rng = np.random.default_rng(seed)
    st = random_staged_tree(rng, probabilities=False)
    rows = random_rows(rng, st.tree, int(rng.integers(0, 60)))
    state = posterior_state(st, rows)
    # predictive-then-observe chain through the library API
    chain = DirichletState.from_prior(st.priors)
    total = 0.0
    for row in rows:
        s = 0
        for d, j in enumerate(row):
            u = int(st.stage_of[s])
            total += math.log(predictive(chain, u)[j])
            chain = observe(chain, u, int(j))
            s = st.tree.children(s)[j]
    assert total == pytest.approx(log_marginal_likelihood(state), abs=1e-10)
    assert log_marginal_likelihood(state) == pytest.approx(staged_log_ml(st, st.priors, rows), abs=1e-10)
    for a, b in zip(chain.counts, state.counts):
        np.testing.assert_array_equal(a, b)


@settings(max_examples=30, deadline=None)
@given(st_.integers(0, 2**32 - 1))
def test_log_ml_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    st = random_staged_tree(rng, probabilities=False)
    rows = random_rows(rng, st.tree, 40)
    a = log_marginal_likelihood(posterior_state(st, rows))
    b = log_marginal_likelihood(posterior_state(st, rows[rng.permutation(len(rows))]))
    assert a == pytest.approx(b, abs=1e-10)


@given(st_.lists(st_.floats(0.05, 20), min_size=2, max_size=5), st_.data())
def test_predictive_strictly_inside_simplex(alpha, data):
    counts = data.draw(st_.lists(st_.integers(0, 1000), min_size=len(alpha), max_size=len(alpha)))
    p = predictive(one_stage(alpha, counts), 0)
    assert np.all(p > 0) and np.all(p < 1)
    assert abs(p.sum() - 1) < 1e-12


@given(st_.lists(st_.floats(0.5, 30), min_size=2, max_size=4), st_.data())
def test_stage_log_ml_matches_lgamma_oracle(alpha, data):
    counts = data.draw(st_.lists(st_.integers(0, 500), min_size=len(alpha), max_size=len(alpha)))
    assert stage_log_ml(np.array(alpha), np.array(counts)) == pytest.approx(gamma_log_ml(alpha, counts), abs=1e-9)


def test_beta_binomial_examples():
    for k in range(3):
        assert beta_binomial(BetaState(1, 1), 2, k) == pytest.approx(1 / 3, abs=1e-14)
    assert beta_binomial(BetaState(2, 1), 1, 1) == pytest.approx(2 / 3, abs=1e-14)
    assert beta_binomial(BetaState(0.7, 3.2), 0, 0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        beta_binomial(BetaState(1, 1), 2, 3)
    with pytest.raises(ValueError):
        BetaState(0, 1)


@given(st_.floats(0.05, 50), st_.floats(0.05, 50), st_.integers(0, 50))
def test_beta_binomial_normalises_and_matches_scipy(a, b, n):
    probs = [beta_binomial(BetaState(a, b), n, k) for k in range(n + 1)]
    assert abs(sum(probs) - 1) < 1e-10
    np.testing.assert_allclose(probs, betabinom.pmf(np.arange(n + 1), n, a, b), rtol=1e-9, atol=1e-300)
