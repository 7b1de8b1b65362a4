"""Matcher network: exact mask semantics, equivariance, gradients, losses."""

import math

import numpy as np
import pytest
import torch

from satsched.features import D_SAT, D_TASK, time_embedding
from satsched.model import (
    Matcher,
    MatcherConfig,
    full_scale_config,
    infer_assignment,
    loss_assignment,
    loss_feasibility,
    loss_time,
    torch_time_embedding,
    total_loss,
    toy_config,
)

torch.manual_seed(0)


def make_inputs(b=2, ns=3, nt=7, seed=1, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    return {
        "sat": torch.randn(b, ns, D_SAT, generator=g, dtype=dtype),
        "task": torch.randn(b, nt, D_TASK, generator=g, dtype=dtype),
        "sensor_code": torch.randint(0, 2, (b, ns), generator=g),
        "status_code": torch.randint(0, 4, (b, nt), generator=g),
        "t": torch.tensor([5.0] * b, dtype=dtype),
    }


def tiny_model(seed=0, dtype=torch.float32, **cfg):
    torch.manual_seed(seed)
    defaults = dict(width=16, depth=1, heads=2, time_dim=4, constraint_hidden=8)
    defaults.update(cfg)
    m = Matcher(MatcherConfig(**defaults))
    return m.to(dtype)


# -- configuration ---------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        MatcherConfig(width=10, heads=4)
    with pytest.raises(ValueError):
        MatcherConfig(time_dim=5)
    with pytest.raises(ValueError):
        MatcherConfig(width=8, time_dim=8)
    assert toy_config().width == 64
    big = full_scale_config()
    assert (big.width, big.depth, big.heads) == (512, 12, 16)


def test_time_embedding_matches_reference():
    t = torch.tensor([0.0, 1.0, 37.0, 3599.0], dtype=torch.float64)
    emb = torch_time_embedding(t, 12).numpy()
    for row, tv in zip(emb, t.tolist()):
        assert np.allclose(row, time_embedding(tv, 12), atol=1e-12)


# -- forward contracts -------------------------------------------------------------


def test_output_shapes():
    m = tiny_model()
    out = m(**make_inputs(b=2, ns=3, nt=7))
    assert out["A"].shape == (2, 3, 8)
    assert out["s_hat"].shape == (2, 3, 7)
    assert out["t_hat"].shape == (2, 3, 7)
    assert out["h_T"].shape == (2, 7, 16)
    assert out["h_S"].shape == (2, 3, 16)
    for v in out.values():
        assert torch.isfinite(v).all()


def test_constraint_head_is_pure_and_pairwise():
    m = tiny_model()
    x = make_inputs()
    s1, t1 = m.constraint_forward(x["sat"], x["task"])
    s2, t2 = m.constraint_forward(x["sat"], x["task"])
    assert torch.equal(s1, s2) and torch.equal(t1, t2)
    # Each pair depends only on its own rows: editing task 3 leaves the
    # other columns bit-identical.
    x2 = {k: v.clone() for k, v in x.items()}
    x2["task"][:, 3, :] += 1.0
    s3, _ = m.constraint_forward(x2["sat"], x2["task"])
    keep = [j for j in range(7) if j != 3]
    assert torch.equal(s1[:, :, keep], s3[:, :, keep])
    assert not torch.equal(s1[:, :, 3], s3[:, :, 3])


def test_zero_mask_is_bit_exact():
    """With w = b = 0 the masked forward equals the mask-free forward
    bit for bit (the mask contributes only signed zeros)."""
    m = tiny_model()
    assert m.mask_w.item() == 0.0 and m.mask_b.item() == 0.0
    x = make_inputs()
    with torch.no_grad():
        a = m(**x, use_mask=True)
        b = m(**x, use_mask=False)
    for k in a:
        assert torch.equal(a[k], b[k]), k


def test_nonzero_mask_changes_attention():
    m = tiny_model()
    x = make_inputs()
    with torch.no_grad():
        base = m(**x)["A"]
        m.mask_w.fill_(5.0)
        steered = m(**x)["A"]
    assert not torch.allclose(base, steered)


def test_task_permutation_equivariance():
    m = tiny_model(dtype=torch.float64)
    x = make_inputs(dtype=torch.float64)
    perm = torch.randperm(7, generator=torch.Generator().manual_seed(3))
    xp = dict(x)
    xp["task"] = x["task"][:, perm, :]
    xp["status_code"] = x["status_code"][:, perm]
    with torch.no_grad():
        out, outp = m(**x), m(**xp)
    tol = dict(rtol=0.0, atol=1e-12)
    assert torch.allclose(outp["s_hat"], out["s_hat"][:, :, perm], **tol)
    assert torch.allclose(outp["h_T"], out["h_T"][:, perm, :], **tol)
    assert torch.allclose(outp["A"][:, :, 0], out["A"][:, :, 0], **tol)
    assert torch.allclose(outp["A"][:, :, 1:], out["A"][:, :, 1:][:, :, perm], **tol)


def test_satellite_permutation_equivariance():
    m = tiny_model(dtype=torch.float64)
    x = make_inputs(dtype=torch.float64)
    perm = torch.randperm(3, generator=torch.Generator().manual_seed(4))
    xp = dict(x)
    xp["sat"] = x["sat"][:, perm, :]
    xp["sensor_code"] = x["sensor_code"][:, perm]
    with torch.no_grad():
        out, outp = m(**x), m(**xp)
    tol = dict(rtol=0.0, atol=1e-12)
    assert torch.allclose(outp["A"], out["A"][:, perm, :], **tol)
    assert torch.allclose(outp["s_hat"], out["s_hat"][:, perm, :], **tol)
    assert torch.allclose(outp["h_T"], out["h_T"], **tol)  # tasks untouched


def test_non_finite_inputs_rejected():
    m = tiny_model()
    x = make_inputs()
    x["sat"][0, 0, 0] = float("nan")
    with pytest.raises(ValueError):
        m(**x)


# -- gradient correctness ------------------------------------------------------------


def batch_loss(m, x, labels):
    out = m(**x)
    l_s = loss_feasibility(out["s_hat"], labels["s"])
    l_t = loss_time(out["t_hat"], labels["t_off"], labels["s"])
    l_a = loss_assignment(out["A"], labels["a"])
    return total_loss(l_s, l_t, l_a)


def test_finite_difference_gradients():
    """Central differences vs autograd on a width-8 configuration: every
    parameter tensor sampled, max relative error <= 1e-4."""
    m = tiny_model(seed=2, dtype=torch.float64, width=8, heads=2, time_dim=4,
                   constraint_hidden=8)
    x = make_inputs(b=2, ns=2, nt=3, dtype=torch.float64, seed=5)
    g = torch.Generator().manual_seed(7)
    labels = {
        "s": torch.randint(0, 2, (2, 2, 3), generator=g).double(),
        "t_off": torch.rand(2, 2, 3, generator=g).double() * 10,
        "a": torch.randint(0, 4, (2, 2), generator=g),
    }

    loss = batch_loss(m, x, labels)
    loss.backward()

    eps = 1e-4
    rng = np.random.default_rng(11)
    worst = 0.0
    for name, p in m.named_parameters():
        assert p.grad is not None, f"{name} missing grad"
        flat = p.detach().view(-1)
        idxs = rng.choice(flat.numel(), size=min(6, flat.numel()), replace=False)
        for idx in idxs:
            with torch.no_grad():
                orig = flat[idx].item()
                flat[idx] = orig + eps
                up = batch_loss(m, x, labels).item()
                flat[idx] = orig - eps
                down = batch_loss(m, x, labels).item()
                flat[idx] = orig
            fd = (up - down) / (2 * eps)
            an = p.grad.view(-1)[idx].item()
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
            worst = max(worst, rel)
            assert rel <= 1e-4, f"{name}[{idx}]: fd={fd} analytic={an} rel={rel}"
    assert worst <= 1e-4


# -- loss oracles ----------------------------------------------------------------------


def test_feasibility_loss_oracles():
    z = torch.zeros(2, 3)
    ones = torch.ones(2, 3)
    assert loss_feasibility(z, ones).item() == pytest.approx(math.log(2), rel=1e-6)
    assert loss_feasibility(20 * ones, ones).item() < 1e-8
    matched = torch.tensor([[20.0, -20.0], [-20.0, 20.0]])
    labels = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
    assert loss_feasibility(matched, labels).item() < 1e-8


def test_feasibility_loss_equals_double_sum():
    g = torch.Generator().manual_seed(9)
    s_hat = torch.randn(4, 5, generator=g)
    s_tilde = torch.randint(0, 2, (4, 5), generator=g).float()
    manual = 0.0
    for i in range(4):
        for j in range(5):
            p = torch.sigmoid(s_hat[i, j])
            y = s_tilde[i, j]
            manual += -(y * torch.log(p) + (1 - y) * torch.log(1 - p)).item()
    manual /= 20
    assert loss_feasibility(s_hat, s_tilde).item() == pytest.approx(manual, rel=1e-5)


def test_time_loss_oracles():
    t_hat = torch.tensor([[1.0, 7.0], [2.0, 5.0]])
    none = torch.zeros(2, 2)
    l = loss_time(t_hat, torch.zeros(2, 2), none)
    assert l.item() == 0.0  # empty-mask convention
    mask = torch.tensor([[1.0, 0.0], [0.0, 0.0]])
    t_tilde = torch.tensor([[4.0, 0.0], [0.0, 0.0]])
    assert loss_time(t_hat, t_tilde, mask).item() == pytest.approx(9.0)  # err 3 s
    exact = loss_time(t_tilde, t_tilde, mask)
    assert exact.item() == 0.0
    # Values at unsupervised pairs cannot matter.
    t_hat2 = t_hat.clone()
    t_hat2[mask == 0] = 1e6
    assert loss_time(t_hat2, t_tilde, mask).item() == pytest.approx(9.0)


def test_assignment_loss_oracles():
    n_t = 6
    uniform = torch.zeros(3, 1 + n_t)
    target = torch.tensor([0, 2, 6])
    assert loss_assignment(uniform, target).item() == pytest.approx(
        math.log(1 + n_t), rel=1e-6
    )
    onehot = torch.full((3, 1 + n_t), -10.0)
    for i, c in enumerate(target.tolist()):
        onehot[i, c] = 10.0
    assert loss_assignment(onehot, target).item() < 1e-8


def test_assignment_null_targets_null_column():
    """For a null target, raising only the null column's score lowers the
    loss; raising a task column raises it."""
    a = torch.zeros(1, 5)
    target = torch.tensor([0])
    base = loss_assignment(a, target).item()
    up_null = a.clone()
    up_null[0, 0] = 2.0
    assert loss_assignment(up_null, target).item() < base
    up_task = a.clone()
    up_task[0, 3] = 2.0
    assert loss_assignment(up_task, target).item() > base


def test_total_loss_arithmetic():
    one = torch.tensor(1.0)
    two = torch.tensor(2.0)
    three = torch.tensor(3.0)
    assert total_loss(one, two, three).item() == pytest.approx(6.0)
    assert total_loss(one, two, three, 0.5, 0.5, 0.5).item() == pytest.approx(3.0)
    assert total_loss(one, two, three, 0.0, 0.0, 0.0).item() == 0.0


# -- inference ------------------------------------------------------------------------


def test_infer_all_infeasible_is_null():
    a = np.random.default_rng(0).normal(size=(3, 6))
    s_hat = np.full((3, 5), -10.0)
    assert infer_assignment(a, s_hat, tau_s=0.5).tolist() == [0, 0, 0]


def test_infer_single_feasible_wins_regardless_of_score():
    a = np.zeros((2, 5))
    a[:, 1] = 100.0  # tempting but infeasible task 0
    s_hat = np.full((2, 4), -10.0)
    s_hat[0, 2] = 10.0
    s_hat[1, 3] = 10.0
    assert infer_assignment(a, s_hat).tolist() == [3, 4]


def test_infer_tie_breaks_to_lowest_task():
    a = np.zeros((1, 4))  # identical scores everywhere
    s_hat = np.full((1, 3), 10.0)
    assert infer_assignment(a, s_hat).tolist() == [1]


def test_infer_threshold_strictness():
    s_hat = np.zeros((1, 2))  # sigmoid exactly 0.5: NOT above the threshold
    a = np.zeros((1, 3))
    assert infer_assignment(a, s_hat, tau_s=0.5).tolist() == [0]
    assert infer_assignment(a, s_hat, tau_s=0.49).tolist() == [1]


def test_infer_shape_validation():
    with pytest.raises(ValueError):
        infer_assignment(np.zeros((2, 4)), np.zeros((2, 4)))


def test_infer_matches_bruteforce_on_random_instances():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        ns, nt = rng.integers(1, 5), rng.integers(1, 7)
        a = rng.normal(size=(ns, nt + 1))
        s_hat = rng.normal(size=(ns, nt))
        tau = float(rng.uniform(0.2, 0.8))
        got = infer_assignment(a, s_hat, tau)
        for i in range(ns):
            feas = [j for j in range(nt) if 1 / (1 + math.exp(-s_hat[i, j])) > tau]
            if not feas:
                assert got[i] == 0
            else:
                best = max(feas, key=lambda j: (a[i, j + 1], -j))
                assert got[i] == best + 1


def test_infer_accepts_torch_tensors():
    m = tiny_model()
    x = make_inputs(b=1)
    out = m(**x)
    a = infer_assignment(out["A"][0], out["s_hat"][0], tau_s=0.5)
    assert a.shape == (3,)
    assert ((a >= 0) & (a <= 7)).all()
