import math

import numpy as np
import pytest

from pepforge.core.denoiser import Denoiser
from pepforge.core.errors import GraphStateError, MaskingError, RangeError, ShapeError
from pepforge.core.layers import (
    AttentionParams,
    ModelParams,
    REBlockParams,
    attention,
    gated_adaln,
    layer_norm,
    timestep_embed,
)
from pepforge.core.tensor import Tensor, log_softmax, numerical_grad, relative_error, softmax
from pepforge.generation.schedule import cosine_schedule
from pepforge.generation.sequence_diffusion import blosum_to_stochastic, build_transitions, seq_loss
from pepforge.generation.structure_diffusion import wrapped_smooth_l1, wrapped_smooth_l1_tensor
from pepforge.utils.blosum import blosum62_matrix
from pepforge.utils.config import ModelConfig

TOL = 1e-4


def _check(loss_fn, *params):
    for p in params:
        p.grad = None
    loss_fn().backward()
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numerical_grad(loss_fn, p)
        assert relative_error(analytic, numeric) < TOL, p.name


def _tiny_cfg() -> ModelConfig:
    return ModelConfig(blocks=1, hidden=8, heads=2, ff=16)


def _pocket(rng, m=4):
    angles = rng.uniform(-math.pi, math.pi, (1, m, 8))
    aa = np.eye(20)[rng.integers(0, 20, m)][None]
    return angles, aa


def test_elementwise_and_reduction_grads():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True, name="x")
    w = rng.normal(size=(4, 2))

    def loss():
        h = (x @ w).tanh() + (x * x).mean(axis=1, keepdims=True).sqrt()
        return (log_softmax(h, axis=-1) * 0.3 + softmax(h, axis=0).exp()).sum()

    _check(loss, x)


def test_gated_adaln_grads():
    rng = np.random.default_rng(1)
    params = ModelParams()
    block = REBlockParams.create(params, "re", hidden=4, cond_dim=3, ff=8, rng=rng)
    h = Tensor(rng.normal(size=(2, 5, 4)), requires_grad=True, name="h")
    cond = Tensor(rng.normal(size=(2, 5, 3)), requires_grad=True, name="cond")
    weights = rng.normal(size=(2, 5, 4))

    def loss():
        return (gated_adaln(h, cond, block) * weights).sum()

    _check(loss, h, cond, block.cond_proj.w, block.cond_proj.b)


def test_attention_grads_and_masking():
    rng = np.random.default_rng(2)
    params = ModelParams()
    att = AttentionParams.create(params, "att", hidden=4, heads=2, rng=rng, kv_dim=6)
    q = Tensor(rng.normal(size=(5, 4)), requires_grad=True, name="q")
    kv = Tensor(rng.normal(size=(3, 6)), requires_grad=True, name="kv")
    mask = np.array([True, True, False])
    weights = rng.normal(size=(5, 4))

    def loss():
        return (attention(q, kv, mask, att) * weights).sum()

    _check(loss, q, kv, att.w_q, att.w_k, att.w_v, att.w_o)
    assert np.allclose(kv.grad[2], 0.0)
    _, w = attention(q, kv, mask, att, return_weights=True)
    assert np.all(w[..., 2] == 0.0)
    assert np.allclose(w.sum(axis=-1), 1.0)


def test_fully_masked_softmax_is_rejected():
    x = Tensor(np.zeros((2, 3)))
    with pytest.raises(MaskingError):
        softmax(x, mask=np.array([[True, False, False], [False, False, False]]))


def test_backward_twice_is_a_graph_error():
    x = Tensor(np.ones(3), requires_grad=True)
    y = (x * 2.0).sum()
    y.backward()
    assert np.allclose(x.grad, 2.0)
    with pytest.raises(GraphStateError):
        y.backward()


def test_structure_denoiser_grads():
    rng = np.random.default_rng(3)
    model = Denoiser("structure", _tiny_cfg(), T=10, seed=0)
    noisy = rng.uniform(-math.pi, math.pi, (1, 3, 8))
    poc_a, poc_aa = _pocket(rng)
    weights = rng.normal(size=(1, 3, 8))

    def loss():
        return (model(noisy, [4], poc_a, poc_aa) * weights).sum()

    P = model.params
    _check(loss, P["pep.in.w"], P["pep.re.cond_proj.w"], P["block0.cross.w_k"], P["poc.cond.w"], P["out.w"])


def test_sequence_denoiser_grads():
    rng = np.random.default_rng(4)
    model = Denoiser("sequence", _tiny_cfg(), T=10, seed=0)
    noisy = np.eye(20)[rng.integers(0, 20, 3)][None]
    cond = rng.uniform(-math.pi, math.pi, (1, 3, 8))
    poc_a, poc_aa = _pocket(rng)
    weights = rng.normal(size=(1, 3, 20))

    def loss():
        return (model(noisy, [7], poc_a, poc_aa, pep_cond=cond) * weights).sum()

    P = model.params
    _check(loss, P["pep.cond.w"], P["block0.self.w_q"], P["poc.in.w"], P["out.b"])


def test_denoiser_ignores_masked_pocket_residues():
    rng = np.random.default_rng(5)
    model = Denoiser("structure", _tiny_cfg(), T=10, seed=0)
    noisy = rng.uniform(-math.pi, math.pi, (1, 3, 8))
    poc_a, poc_aa = _pocket(rng, m=4)
    mask = np.array([[True, True, True, False]])
    base = model(noisy, [2], poc_a, poc_aa, pocket_mask=mask).data
    poc_a2 = poc_a.copy()
    poc_a2[0, 3] += 1.0
    moved = model(noisy, [2], poc_a2, poc_aa, pocket_mask=mask).data
    assert np.allclose(base, moved)


@pytest.mark.parametrize("kind", ["structure", "sequence"])
def test_denoiser_output_ignores_pocket_order(kind):
    rng = np.random.default_rng(8)
    model = Denoiser(kind, _tiny_cfg(), T=10, seed=2)
    if kind == "structure":
        noisy, cond = rng.uniform(-math.pi, math.pi, (1, 4, 8)), None
    else:
        noisy, cond = np.eye(20)[rng.integers(0, 20, 4)][None], rng.uniform(-math.pi, math.pi, (1, 4, 8))
    poc_a, poc_aa = _pocket(rng, m=6)
    mask = np.array([[True, True, False, True, True, True]])
    perm = np.array([4, 0, 5, 2, 1, 3])
    base = model(noisy, [6], poc_a, poc_aa, pep_cond=cond, pocket_mask=mask).data
    shuffled = model(noisy, [6], poc_a[:, perm], poc_aa[:, perm], pep_cond=cond, pocket_mask=mask[:, perm]).data
    assert np.allclose(base, shuffled, atol=1e-12)


def test_structure_loss_tensor_matches_numpy_and_grads():
    rng = np.random.default_rng(6)
    pred = Tensor(rng.normal(0.0, 0.5, (2, 4)), requires_grad=True, name="pred")
    target = pred.data + np.array([0.05, -0.1, 0.6, -1.0])
    mask = np.array([[1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 0.0, 0.0]])

    def loss():
        return wrapped_smooth_l1_tensor(target, pred, 0.1 * math.pi, mask)

    assert loss().item() == pytest.approx(wrapped_smooth_l1(target, pred.data, 0.1 * math.pi, mask))
    _check(loss, pred)


@pytest.mark.parametrize("step", [1, 3])
def test_sequence_loss_grads(step):
    rng = np.random.default_rng(7)
    M = build_transitions(blosum_to_stochastic(blosum62_matrix(), 50.0), cosine_schedule(5))
    logits = Tensor(rng.normal(size=(1, 4, 20)), requires_grad=True, name="logits")
    a0 = rng.integers(0, 20, (1, 4))
    a_t = rng.integers(0, 20, (1, 4))

    def loss():
        return seq_loss(logits, a0, a_t, np.array([step]), M)

    _check(loss, logits)


def test_layer_norm_grads_and_statistics():
    rng = np.random.default_rng(8)
    h = Tensor(rng.normal(2.0, 3.0, size=(3, 6)), requires_grad=True, name="h")
    weights = rng.normal(size=(3, 6))
    out = layer_norm(h).data
    assert np.allclose(out.mean(axis=-1), 0.0)
    assert np.allclose(out.std(axis=-1), 1.0, atol=1e-4)
    _check(lambda: (layer_norm(h) * weights).sum(), h)
    with pytest.raises(ShapeError):
        layer_norm(Tensor(np.ones((2, 1))))


def test_timestep_embedding():
    a, b = timestep_embed(3, 16, 10), timestep_embed(4, 16, 10)
    assert a.shape == (16,)
    assert np.all(np.abs(a) <= 1.0)
    assert not np.allclose(a, b)
    assert np.allclose(timestep_embed(3, 16, 10), a)
    with pytest.raises(RangeError):
        timestep_embed(10, 16, 10)


def test_params_state_restores_values():
    model = Denoiser("structure", _tiny_cfg(), T=10, seed=0)
    restored = ModelParams.from_state(model.params.to_state())
    assert restored.num_parameters() == model.params.num_parameters()
    other = Denoiser("structure", _tiny_cfg(), T=10, seed=1)
    other.params.load_state(model.params.to_state())
    assert np.array_equal(other.params["out.w"].data, model.params["out.w"].data)
    with pytest.raises(ShapeError):
        Denoiser("sequence", _tiny_cfg(), T=10, seed=0).params.load_state(model.params.to_state())
