"""Mask construction, attention forward, and mask-property checks."""

import math

import numpy as np
import pytest

from amcnet import autodiff as ad
from amcnet.attention import (
    MASK_SENTINEL,
    AttentionConfig,
    AttentionParams,
    attention_weights,
    build_mask,
    multi_head_attention,
)
from amcnet.errors import ConfigError, ShapeError

from conftest import gradcheck, projection_loss


def make_params(cfg, rng, scale=0.5):
    dk = cfg.d_head
    t = lambda shape: ad.Tensor(rng.uniform(-scale, scale, shape), requires_grad=True)
    return AttentionParams(
        wq=[t((cfg.d_model, dk)) for _ in range(cfg.n_heads)],
        bq=[t(dk) for _ in range(cfg.n_heads)],
        wk=[t((cfg.d_model, dk)) for _ in range(cfg.n_heads)],
        bk=[t(dk) for _ in range(cfg.n_heads)],
        wv=[t((cfg.d_model, dk)) for _ in range(cfg.n_heads)],
        bv=[t(dk) for _ in range(cfg.n_heads)],
        wo=t((cfg.d_model, cfg.d_model)),
        bo=t(cfg.d_model),
    )


class TestBuildMask:
    def test_causal_l3(self):
        mask = build_mask("causal", 3)
        allowed = (mask == 0.0).astype(int)
        assert np.array_equal(allowed, [[1, 0, 0], [1, 1, 0], [1, 1, 1]])

    def test_sparse_window_exceeds_length(self):
        mask = build_mask("sparse", 3, window=8)
        assert np.all(mask == 0.0)

    def test_sparse_tridiagonal(self):
        mask = build_mask("sparse", 5, window=2)
        allowed = mask == 0.0
        i, j = np.indices((5, 5))
        assert np.array_equal(allowed, np.abs(i - j) <= 1)

    def test_forbidden_sentinel_value(self):
        mask = build_mask("causal", 4)
        assert mask[0, 3] == MASK_SENTINEL

    def test_diagonal_always_allowed(self):
        for variant in ("baseline", "causal", "sparse"):
            mask = build_mask(variant, 7, window=2)
            assert np.all(np.diag(mask) == 0.0)

    def test_zero_length_rejected(self):
        with pytest.raises(ShapeError):
            build_mask("baseline", 0)

    def test_cache_returns_shared_readonly(self):
        a = build_mask("sparse", 6, window=4)
        b = build_mask("sparse", 6, window=4)
        assert a is b
        assert not a.flags.writeable


class TestConfig:
    def test_head_divisibility(self):
        with pytest.raises(ConfigError):
            AttentionConfig(d_model=64, n_heads=5)

    def test_window_must_be_even(self):
        with pytest.raises(ConfigError):
            AttentionConfig(window=3)

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            AttentionConfig(variant="full")


def scalar_attention_oracle(x, p, d_head):
    """Single-head attention evaluated with plain Python loops."""
    bsz, length, d = x.shape
    wq, bq = p.wq[0].data, p.bq[0].data
    wk, bk = p.wk[0].data, p.bk[0].data
    wv, bv = p.wv[0].data, p.bv[0].data
    out = np.zeros((bsz, length, d))
    for b in range(bsz):
        q = [[sum(x[b][i][m] * wq[m][n] for m in range(d)) + bq[n] for n in range(d_head)] for i in range(length)]
        k = [[sum(x[b][i][m] * wk[m][n] for m in range(d)) + bk[n] for n in range(d_head)] for i in range(length)]
        v = [[sum(x[b][i][m] * wv[m][n] for m in range(d)) + bv[n] for n in range(d_head)] for i in range(length)]
        for i in range(length):
            scores = [sum(q[i][n] * k[j][n] for n in range(d_head)) / math.sqrt(d_head) for j in range(length)]
            mx = max(scores)
            exps = [math.exp(s - mx) for s in scores]
            z = sum(exps)
            weights = [e / z for e in exps]
            head = [sum(weights[j] * v[j][n] for j in range(length)) for n in range(d_head)]
            for m in range(d):
                out[b, i, m] = sum(head[n] * p.wo.data[n][m] for n in range(d_head)) + p.bo.data[m]
    return out


class TestMultiHeadAttention:
    def test_length_one_reduces_to_value_projection(self, rng):
        cfg = AttentionConfig(variant="baseline", d_model=8, n_heads=2, attn_dropout=0.0)
        p = make_params(cfg, rng)
        x = rng.standard_normal((3, 1, 8))
        out = multi_head_attention(ad.Tensor(x), p, cfg, mode="eval")
        values = np.concatenate(
            [x @ p.wv[i].data + p.bv[i].data for i in range(cfg.n_heads)], axis=-1
        )
        expected = values @ p.wo.data + p.bo.data
        assert np.allclose(out.data, expected, atol=1e-12)

    def test_wide_sparse_equals_baseline(self, rng):
        for trial in range(10):
            d_rng = np.random.default_rng(trial)
            x = d_rng.standard_normal((2, 6, 8))
            base_cfg = AttentionConfig(variant="baseline", d_model=8, n_heads=2, attn_dropout=0.0)
            p = make_params(base_cfg, d_rng)
            sparse_cfg = AttentionConfig(variant="sparse", d_model=8, n_heads=2, window=12, attn_dropout=0.0)
            out_base = multi_head_attention(ad.Tensor(x), p, base_cfg, mode="eval")
            out_sparse = multi_head_attention(ad.Tensor(x), p, sparse_cfg, mode="eval")
            assert np.max(np.abs(out_base.data - out_sparse.data)) < 1e-9

    def test_matches_scalar_oracle(self, rng):
        cfg = AttentionConfig(variant="baseline", d_model=4, n_heads=1, attn_dropout=0.0)
        p = make_params(cfg, rng)
        # hand-set small integer projections so the oracle arithmetic is exact
        for group in (p.wq, p.wk, p.wv):
            group[0].data = np.round(group[0].data * 4)
        p.wo.data = np.round(p.wo.data * 4)
        x = np.round(rng.uniform(-2, 2, (1, 4, 4)))
        out = multi_head_attention(ad.Tensor(x), p, cfg, mode="eval")
        expected = scalar_attention_oracle(x, p, cfg.d_head)
        assert np.max(np.abs(out.data - expected)) < 1e-12

    def test_output_shape_for_any_head_count(self, rng):
        for heads in (1, 2, 4, 8):
            cfg = AttentionConfig(d_model=16, n_heads=heads, attn_dropout=0.0)
            p = make_params(cfg, rng)
            x = rng.standard_normal((2, 5, 16))
            out = multi_head_attention(ad.Tensor(x), p, cfg, mode="eval")
            assert out.shape == x.shape

    def test_wrong_feature_dim(self, rng):
        cfg = AttentionConfig(d_model=8, n_heads=2)
        p = make_params(cfg, rng)
        with pytest.raises(ShapeError):
            multi_head_attention(ad.Tensor(np.zeros((1, 4, 6))), p, cfg, mode="eval")

    def test_gradients_flow(self, rng):
        cfg = AttentionConfig(variant="sparse", d_model=4, n_heads=2, window=2, attn_dropout=0.0)
        p = make_params(cfg, rng)
        x = ad.Tensor(rng.standard_normal((2, 5, 4)), requires_grad=True)
        proj = rng.standard_normal((2, 5, 4))
        checked = [x, p.wq[0], p.wk[1], p.wv[0], p.bq[1], p.wo, p.bo]
        err = gradcheck(
            lambda: projection_loss(multi_head_attention(x, p, cfg, mode="eval"), proj), checked
        )
        assert err < 1e-5


class TestVariantProperties:
    def test_causal_future_invariance(self, rng):
        cfg = AttentionConfig(variant="causal", d_model=8, n_heads=2, attn_dropout=0.0)
        p = make_params(cfg, rng)
        for trial in range(10):
            t_rng = np.random.default_rng(100 + trial)
            x = t_rng.standard_normal((1, 7, 8))
            pos = int(t_rng.integers(0, 6))
            out = multi_head_attention(ad.Tensor(x), p, cfg, mode="eval").data
            perturbed = x.copy()
            perturbed[:, pos + 1 :, :] += t_rng.standard_normal(perturbed[:, pos + 1 :, :].shape) * 5.0
            out_p = multi_head_attention(ad.Tensor(perturbed), p, cfg, mode="eval").data
            assert np.max(np.abs(out[:, : pos + 1] - out_p[:, : pos + 1])) < 1e-9

    def test_sparse_locality(self, rng):
        cfg = AttentionConfig(variant="sparse", d_model=8, n_heads=2, window=4, attn_dropout=0.0)
        p = make_params(cfg, rng)
        half = cfg.window // 2
        for trial in range(10):
            t_rng = np.random.default_rng(200 + trial)
            x = t_rng.standard_normal((1, 9, 8))
            pos = int(t_rng.integers(0, 9))
            out = multi_head_attention(ad.Tensor(x), p, cfg, mode="eval").data
            perturbed = x.copy()
            far = np.abs(np.arange(9) - pos) > half
            perturbed[:, far, :] += t_rng.standard_normal((1, int(far.sum()), 8)) * 5.0
            out_p = multi_head_attention(ad.Tensor(perturbed), p, cfg, mode="eval").data
            assert np.max(np.abs(out[:, pos] - out_p[:, pos])) < 1e-9

    def test_length_one_three_way_agreement(self, rng):
        x = rng.standard_normal((2, 1, 8))
        base = AttentionConfig(variant="baseline", d_model=8, n_heads=2, attn_dropout=0.0)
        p = make_params(base, rng)
        outs = []
        for variant in ("baseline", "causal", "sparse"):
            cfg = AttentionConfig(variant=variant, d_model=8, n_heads=2, attn_dropout=0.0)
            outs.append(multi_head_attention(ad.Tensor(x), p, cfg, mode="eval").data)
        assert np.array_equal(outs[0], outs[1])
        assert np.array_equal(outs[0], outs[2])


class TestAttentionWeights:
    def test_causal_first_row_is_self_only(self, rng):
        cfg = AttentionConfig(variant="causal", d_model=8, n_heads=2, attn_dropout=0.0)
        p = make_params(cfg, rng)
        w = attention_weights(ad.Tensor(rng.standard_normal((1, 5, 8))), p, cfg).data
        assert np.allclose(w[:, :, 0, 0], 1.0)
        assert np.all(w[:, :, 0, 1:] == 0.0)

    def test_zero_projections_give_uniform_rows(self, rng):
        cfg = AttentionConfig(variant="baseline", d_model=8, n_heads=2, attn_dropout=0.0)
        p = make_params(cfg, rng)
        for group in (p.wq, p.wk, p.bq, p.bk):
            for t in group:
                t.data = np.zeros_like(t.data)
        w = attention_weights(ad.Tensor(rng.standard_normal((2, 6, 8))), p, cfg).data
        assert np.allclose(w, 1.0 / 6.0)

    def test_sparse_support(self, rng):
        cfg = AttentionConfig(variant="sparse", d_model=8, n_heads=2, window=2, attn_dropout=0.0)
        p = make_params(cfg, rng)
        w = attention_weights(ad.Tensor(rng.standard_normal((1, 5, 8))), p, cfg).data
        row = w[0, 0, 2]
        assert row[0] < 1e-6 and row[4] < 1e-6
        assert np.all(row[1:4] > 0.0)

    def test_rows_stochastic_and_forbidden_tiny(self, rng):
        for variant in ("baseline", "causal", "sparse"):
            cfg = AttentionConfig(variant=variant, d_model=8, n_heads=4, window=4, attn_dropout=0.0)
            p = make_params(cfg, rng)
            w = attention_weights(ad.Tensor(rng.standard_normal((2, 6, 8))), p, cfg).data
            assert np.allclose(w.sum(axis=-1), 1.0, atol=1e-9)
            forbidden = build_mask(variant, 6, cfg.window) != 0.0
            assert np.all(w[:, :, forbidden] < 1e-6)
