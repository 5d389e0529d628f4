import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relmatch import numerics as nx
from relmatch.errors import ContractError, ParameterError
from relmatch.numerics import Param, Var
from relmatch.objective import ScoreMatrices, _direction, branch_loss, contrastive_loss, soft_targets


def _scores(g, l=None):
    return ScoreMatrices(Var(np.asarray(g, float)), Var(np.asarray(g if l is None else l, float)))


def test_soft_target_examples():
    T = soft_targets([[1, 1, 0], [1, 0, 0], [0, 0, 1], [1, 1, 0]])
    assert T[0, 3] == pytest.approx(1.0, abs=1e-15)
    assert T[1, 2] == 0.0
    assert T[0, 1] == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert np.array_equal(T, T.T) and np.all(np.diag(T) == 1.0)


def test_soft_targets_reject_empty_label():
    with pytest.raises(ContractError):
        soft_targets([[1, 0], [0, 0]])


def test_loss_examples():
    total, br = contrastive_loss(_scores([[0.7]]), np.ones((1, 1)))
    assert total.item() == 0.0 and br == {"global": 0.0, "local": 0.0}
    total, br = contrastive_loss(_scores(np.full((2, 2), 0.3)), np.ones((2, 2)))
    assert abs(br["global"] - math.log(2)) <= 1e-12 and abs(total.item() - 2 * math.log(2)) <= 1e-12
    total, _ = contrastive_loss(_scores(np.diag([1000.0, 1000.0])), np.eye(2), tau3=1.0)
    assert total.item() <= 1e-6


def test_loss_rejects_bad_tau_and_no_branch():
    with pytest.raises(ParameterError):
        contrastive_loss(_scores(np.zeros((2, 2))), np.eye(2), tau3=0.0)
    with pytest.raises(ContractError):
        contrastive_loss(_scores(np.zeros((2, 2))), np.eye(2), use_global=False, use_local=False)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.floats(-50, 50))
def test_shift_invariance_entropy_bound_and_symmetry(seed, B, c):
    rng = np.random.default_rng(seed)
    labels = (rng.uniform(size=(B, 4)) < 0.5).astype(float)
    labels[labels.sum(1) == 0, 0] = 1
    T = soft_targets(labels)
    X = rng.normal(size=(B, B))
    base = branch_loss(Var(X), T).item()
    assert abs(branch_loss(Var(X + c), T).item() - base) <= 1e-9
    rows = -(np.log(nx.softmax_array(X, axis=1)) * T / T.sum(1, keepdims=True)).sum() / B
    Tr = T / T.sum(1, keepdims=True)
    assert rows >= -(Tr * np.log(np.where(Tr > 0, Tr, 1))).sum() / B - 1e-12
    _, br = contrastive_loss(_scores(X, X), T)
    assert br["global"] == br["local"]


def test_entropy_bound_attained_when_prediction_equals_target():
    T = soft_targets([[1, 1], [1, 0], [0.5, 1]])
    Tr = T / T.sum(1, keepdims=True)
    ce = _direction(Var(np.log(Tr)), T, 1.0, 1, True).item()
    assert abs(ce + (Tr * np.log(Tr)).sum() / 3) <= 1e-12


def test_gradient_matches_closed_form():
    rng = np.random.default_rng(7)
    for _ in range(20):
        B, tau = 4, rng.uniform(0.5, 2.0)
        labels = (rng.uniform(size=(B, 3)) < 0.5).astype(float)
        labels[labels.sum(1) == 0, 0] = 1
        T = soft_targets(labels)
        X = Param(rng.normal(size=(B, B)), "X")
        with nx.Tape() as t:
            loss = branch_loss(X, T, tau)
        nx.backward(t, loss)
        Tr, Tc = T / T.sum(1, keepdims=True), T / T.sum(0, keepdims=True)
        Pr, Pc = nx.softmax_array(X.value / tau, axis=1), nx.softmax_array(X.value / tau, axis=0)
        expect = 0.5 * ((Pr - Tr) + (Pc - Tc)) / (B * tau)
        assert np.abs(X.grad - expect).max() <= 1e-12
        assert nx.grad_check(lambda: branch_loss(X, T, tau), [X]).max_rel_error <= 1e-6


def test_unnormalized_targets_option_differs():
    T = soft_targets([[1, 0], [1, 1], [0, 1]])
    X = Var(np.random.default_rng(0).normal(size=(3, 3)))
    assert branch_loss(X, T, normalize=False).item() != branch_loss(X, T).item()
