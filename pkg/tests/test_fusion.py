import numpy as np
import pytest
from helpers import random_batch, random_spec

from fedatsim import (
    Batch,
    CurvContext,
    FusionPayload,
    curv_penalty,
    fedavg_fuse,
    fedcurv_fuse,
    fisher_diag,
    loss_and_grads,
    param_count,
)


def test_payload_validation(rng):
    p = rng.normal(size=4)
    with pytest.raises(ValueError):
        FusionPayload(params=p, shard_size=0)
    with pytest.raises(ValueError):
        FusionPayload(params=p, shard_size=3, fisher_diag=np.zeros(5))
    with pytest.raises(ValueError, match="non-negative"):
        FusionPayload(params=p, shard_size=3, fisher_diag=np.array([1.0, -1.0, 0.0, 2.0]))
    with pytest.raises(ValueError):
        FusionPayload(params=p, shard_size=3, fisher_diag=np.array([1.0, np.inf, 0.0, 2.0]))


def test_fedavg_worked_example():
    fused = fedavg_fuse(
        [
            FusionPayload(params=np.array([1.0, 3.0]), shard_size=1),
            FusionPayload(params=np.array([5.0, 7.0]), shard_size=3),
        ]
    )
    assert np.array_equal(fused, [4.0, 6.0])


def test_fedavg_matches_weighted_mean_oracle(rng):
    for _ in range(40):
        k = int(rng.integers(1, 8))
        dim = int(rng.integers(1, 60))
        mats = rng.normal(size=(k, dim))
        sizes = rng.integers(1, 500, size=k)
        fused = fedavg_fuse(
            [FusionPayload(params=mats[i], shard_size=int(sizes[i])) for i in range(k)]
        )
        want = (mats * sizes[:, None]).sum(axis=0) / sizes.sum()
        assert np.abs(fused - want).max() < 1e-12


def test_fedavg_equal_sizes_is_plain_mean(rng):
    mats = rng.normal(size=(5, 9))
    fused = fedavg_fuse([FusionPayload(params=m, shard_size=17) for m in mats])
    assert np.allclose(fused, mats.mean(axis=0), atol=1e-14)


def test_fedavg_errors():
    with pytest.raises(ValueError, match="empty"):
        fedavg_fuse([])
    with pytest.raises(ValueError, match="differ in length"):
        fedavg_fuse(
            [
                FusionPayload(params=np.zeros(3), shard_size=1),
                FusionPayload(params=np.zeros(4), shard_size=1),
            ]
        )


def test_fedcurv_fuses_identically_and_broadcasts(rng):
    mats = rng.normal(size=(3, 6))
    fishers = rng.uniform(0.0, 1.0, size=(3, 6))
    payloads = [
        FusionPayload(params=mats[i], shard_size=i + 1, fisher_diag=fishers[i]) for i in range(3)
    ]
    fused, broadcast = fedcurv_fuse(payloads)
    assert np.array_equal(fused, fedavg_fuse(payloads))
    assert len(broadcast) == 3
    for (anchor, fisher), i in zip(broadcast, range(3)):
        assert np.array_equal(anchor, mats[i])
        assert np.array_equal(fisher, fishers[i])


def test_fedcurv_requires_fishers(rng):
    payloads = [
        FusionPayload(params=np.zeros(3), shard_size=1, fisher_diag=np.ones(3)),
        FusionPayload(params=np.zeros(3), shard_size=1),
    ]
    with pytest.raises(ValueError, match="missing fisher"):
        fedcurv_fuse(payloads)


def test_fisher_diag_matches_per_sample_loop(rng):
    # Oracle: mean over samples of the squared single-sample loss gradient.
    for _ in range(6):
        spec = random_spec(rng)
        params = rng.normal(scale=0.7, size=param_count(spec))
        batch = random_batch(rng, spec, n=9)
        got = fisher_diag(params, spec, batch)
        acc = np.zeros(param_count(spec))
        for i in range(len(batch)):
            one = Batch(batch.inputs[i : i + 1], batch.labels[i : i + 1])
            _, grads = loss_and_grads(params, spec, one)
            acc += grads.param_grad**2
        assert np.abs(got - acc / len(batch)).max() < 1e-10


def test_fisher_diag_nonnegative_and_rejects_empty(rng):
    spec = random_spec(rng)
    params = rng.normal(size=param_count(spec))
    batch = random_batch(rng, spec, n=12)
    assert fisher_diag(params, spec, batch).min() >= 0.0
    with pytest.raises(ValueError, match="non-empty"):
        fisher_diag(params, spec, Batch(np.zeros((0, spec.input_dim)), np.zeros(0, dtype=int)))


def test_curv_penalty_hand_example():
    ctx = CurvContext(
        lam=1.0, anchors=[(np.array([0.0, 1.0]), np.array([2.0, 3.0]))]
    )
    value, grad = curv_penalty(np.array([1.0, 2.0]), ctx)
    # value = 2*(1-0)^2 + 3*(2-1)^2 = 5; grad = 2 * fisher * diff = (4, 6)
    assert value == pytest.approx(5.0, abs=1e-15)
    assert np.allclose(grad, [4.0, 6.0], atol=1e-15)


def test_curv_penalty_sums_over_anchors(rng):
    theta = rng.normal(size=5)
    anchors = [(rng.normal(size=5), rng.uniform(0, 2, size=5)) for _ in range(3)]
    value, grad = curv_penalty(theta, CurvContext(lam=0.5, anchors=anchors))
    want_v = sum(float(f @ (theta - a) ** 2) for a, f in anchors)
    want_g = sum(2.0 * f * (theta - a) for a, f in anchors)
    assert value == pytest.approx(want_v, rel=1e-13)
    assert np.allclose(grad, want_g, atol=1e-13)


def test_curv_penalty_gradient_matches_finite_differences(rng):
    theta = rng.normal(size=6)
    anchors = [(rng.normal(size=6), rng.uniform(0, 2, size=6)) for _ in range(2)]
    ctx = CurvContext(lam=1.0, anchors=anchors)
    _, grad = curv_penalty(theta, ctx)
    h = 1e-6
    for i in range(6):
        plus, minus = theta.copy(), theta.copy()
        plus[i] += h
        minus[i] -= h
        fd = (curv_penalty(plus, ctx)[0] - curv_penalty(minus, ctx)[0]) / (2 * h)
        assert abs(grad[i] - fd) < 1e-6


def test_curv_penalty_zero_at_anchor(rng):
    anchor = rng.normal(size=4)
    ctx = CurvContext(lam=1.0, anchors=[(anchor, rng.uniform(0, 1, size=4))])
    value, grad = curv_penalty(anchor.copy(), ctx)
    assert value == 0.0
    assert np.array_equal(grad, np.zeros(4))


def test_curv_penalty_shape_mismatch(rng):
    ctx = CurvContext(lam=1.0, anchors=[(np.zeros(3), np.zeros(3))])
    with pytest.raises(ValueError, match="shapes"):
        curv_penalty(np.zeros(4), ctx)
