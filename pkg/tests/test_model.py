"""Model forward ops against scalar oracles; hand gradients against
central finite differences; checkpoint round-trip."""

import dataclasses

import numpy as np
import pytest

from gadview import (DataError, ModelParams, LossGrads, SamplerConfig,
                     backward_full, batch_backward, batch_forward,
                     decode_view, discriminate, encode_target, encode_view,
                     encode_view_batch, forward_full, from_edges, init_params,
                     load_checkpoint, pair_logit, readout, sample_view,
                     save_checkpoint, stream)
from gadview.model import Gradients, relu, score_sigmoid, sigmoid, softplus
from gadview.training import contrastive_loss, generative_loss
from gadview.views import SubgraphView
from gadview.graph import normalize_adjacency


def make_params(d_in, d_hidden, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    return ModelParams(
        w_enc=scale * rng.standard_normal((d_in, d_hidden)),
        w_dec=scale * rng.standard_normal((d_hidden, d_in)),
        w_s=scale * rng.standard_normal((d_hidden, d_hidden)))


def anonymized_view(graph, target, k, seed):
    return sample_view(graph, target, SamplerConfig(k=k), stream(seed, target))


def manual_view(nodes, adj, features, target):
    """Hand-built view; features NOT zeroed unless caller did it."""
    return SubgraphView(target=target, nodes=np.asarray(nodes),
                        adj_norm=normalize_adjacency(adj),
                        features=np.asarray(features, dtype=np.float64))


def test_sigmoid_softplus_stability():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(1.0) == pytest.approx(0.7310585786300049)
    assert score_sigmoid(-800.0) > 0.0
    assert score_sigmoid(800.0) < 1.0
    assert score_sigmoid(0.0) == 0.5
    assert softplus(800.0) == pytest.approx(800.0)
    assert softplus(-800.0) >= 0.0
    assert softplus(0.0) == pytest.approx(np.log(2.0))


def test_encode_anonymized_singleton_is_zero():
    params = make_params(2, 3)
    view = manual_view([5], np.zeros((1, 1), dtype=bool), np.zeros((1, 2)), 5)
    assert np.array_equal(encode_view(params, view), np.zeros((1, 3)))


def test_encode_zero_weights_gives_zero():
    g = from_edges(2, [(0, 1)], np.random.default_rng(0).random((2, 3)))
    view = anonymized_view(g, 0, 2, seed=1)
    params = ModelParams(w_enc=np.zeros((3, 4)), w_dec=np.zeros((4, 3)),
                         w_s=np.zeros((4, 4)))
    assert np.array_equal(encode_view(params, view), np.zeros((2, 4)))


def test_encode_view_matches_scalar_oracle():
    rng = np.random.default_rng(2)
    feats = rng.standard_normal((2, 3))
    feats[-1] = 0.0
    adj = np.array([[False, True], [True, False]])
    view = manual_view([1, 0], adj, feats, 0)
    params = make_params(3, 2, seed=5)
    got = encode_view(params, view)
    am = view.adj_norm.matrix
    expect = np.zeros((2, 2))
    for i in range(2):
        for jj in range(2):
            acc = 0.0
            for k_ in range(2):
                for d_ in range(3):
                    acc += am[i, k_] * feats[k_, d_] * params.w_enc[d_, jj]
            expect[i, jj] = max(acc, 0.0)
    assert np.allclose(got, expect, atol=1e-12)


def test_encode_target_basics():
    params = make_params(3, 3, seed=1)
    assert np.array_equal(encode_target(params, np.zeros(3)), np.zeros(3))
    ident = ModelParams(w_enc=np.eye(3), w_dec=np.eye(3), w_s=np.eye(3))
    x = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(encode_target(ident, x), [1.0, 0.0, 0.5])


def test_encode_target_collapse_equivalence():
    # a 1-node NON-anonymized view reduces the view encoder to the
    # target encoder: the normalized adjacency is [[1]]
    rng = np.random.default_rng(3)
    x = rng.standard_normal(4)
    params = make_params(4, 3, seed=2)
    view = manual_view([0], np.zeros((1, 1), dtype=bool), x.reshape(1, -1), 0)
    assert np.allclose(encode_target(params, x),
                       encode_view(params, view)[0], atol=1e-14)


def test_decode_view_cases():
    params = make_params(3, 2, seed=4)
    adjm = normalize_adjacency(np.zeros((1, 1), dtype=bool))
    assert np.array_equal(
        decode_view(params, np.zeros((1, 2)), adjm), np.zeros((1, 3)))
    h = np.random.default_rng(1).random((1, 2))
    got = decode_view(params, h, adjm)
    assert np.allclose(got, relu(h @ params.w_dec), atol=1e-14)


def test_decode_view_scalar_oracle():
    rng = np.random.default_rng(6)
    h = rng.standard_normal((2, 2))
    adj = np.array([[False, True], [True, False]])
    am = normalize_adjacency(adj)
    params = make_params(3, 2, seed=7)
    got = decode_view(params, h, am)
    expect = np.zeros((2, 3))
    for i in range(2):
        for d_ in range(3):
            acc = 0.0
            for k_ in range(2):
                for j in range(2):
                    acc += am.matrix[i, k_] * h[k_, j] * params.w_dec[j, d_]
            expect[i, d_] = max(acc, 0.0)
    assert np.allclose(got, expect, atol=1e-12)


def test_readout_cases():
    row = np.array([[1.0, 2.0]])
    assert np.array_equal(readout(row), [1.0, 2.0])
    u = np.array([1.0, -3.0])
    assert np.allclose(readout(np.stack([u, -u])), [0.0, 0.0])
    m = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 9.0]])
    assert np.allclose(readout(m), [3.0, 5.0])


def test_discriminate_cases():
    params = make_params(3, 3, seed=8)
    g = np.random.default_rng(2).random(3)
    assert discriminate(params, np.zeros(3), g) == 0.5
    zero_ws = ModelParams(w_enc=np.eye(3), w_dec=np.eye(3), w_s=np.zeros((3, 3)))
    assert discriminate(zero_ws, g, g) == 0.5
    ident = ModelParams(w_enc=np.eye(3), w_dec=np.eye(3), w_s=np.eye(3))
    unit = np.array([1.0, 0.0, 0.0])
    assert discriminate(ident, unit, unit) == pytest.approx(0.7310585786300049)


def test_discriminate_strictly_inside_unit_interval():
    params = make_params(2, 2, seed=9, scale=50.0)
    h = np.full(2, 30.0)
    g = np.full(2, 30.0)
    s = discriminate(params, h, g)
    assert 0.0 < s < 1.0


def test_discriminate_transpose_symmetry():
    rng = np.random.default_rng(10)
    params = make_params(3, 4, seed=11)
    h, g = rng.standard_normal(4), rng.standard_normal(4)
    swapped = ModelParams(w_enc=params.w_enc, w_dec=params.w_dec,
                          w_s=params.w_s.T)
    assert discriminate(params, h, g) == pytest.approx(
        discriminate(swapped, g, h), abs=1e-15)


def build_instance(seed, d=3, d_hidden=2, k=2, nonneg=False):
    """Random tiny graph + params + sampled views for gradient checks."""
    rng = np.random.default_rng(seed)
    n = max(k + 2, 4)
    feats = rng.random((n, d)) if nonneg else rng.standard_normal((n, d))
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < 0.7]
    if not edges:
        edges = [(0, 1)]
    g = from_edges(n, edges, feats)
    params = make_params(d, d_hidden, seed=seed + 1000)
    cfg = SamplerConfig(k=k)
    t = int(rng.integers(0, n))
    other = int((t + 1) % n)
    v1 = sample_view(g, t, cfg, stream(seed, 0))
    v2 = sample_view(g, t, cfg, stream(seed, 1))
    n1 = sample_view(g, other, cfg, stream(seed, 2))
    n2 = sample_view(g, other, cfg, stream(seed, 3))
    return g, params, t, (v1, v2, n1, n2)


def total_loss(params, x_t, views, alpha, beta):
    _, out = forward_full(params, x_t, *views)
    l_gen, _ = generative_loss(x_t.reshape(1, -1),
                               out.recon1.reshape(1, -1),
                               out.recon2.reshape(1, -1))
    l_con, _ = contrastive_loss(np.array([out.logit1]), np.array([out.logit2]),
                                np.array([out.neg_logit1]),
                                np.array([out.neg_logit2]))
    return alpha * l_con + beta * l_gen


def analytic_grads(params, x_t, views, alpha, beta):
    trace, out = forward_full(params, x_t, *views)
    _, (d_r1, d_r2) = generative_loss(x_t.reshape(1, -1),
                                      out.recon1.reshape(1, -1),
                                      out.recon2.reshape(1, -1))
    _, (d_l1, d_l2, d_n1, d_n2) = contrastive_loss(
        np.array([out.logit1]), np.array([out.logit2]),
        np.array([out.neg_logit1]), np.array([out.neg_logit2]))
    lg = LossGrads(d_recon1=beta * d_r1[0], d_recon2=beta * d_r2[0],
                   d_logit1=alpha * float(d_l1[0]),
                   d_logit2=alpha * float(d_l2[0]),
                   d_neg_logit1=alpha * float(d_n1.ravel()[0]),
                   d_neg_logit2=alpha * float(d_n2.ravel()[0]))
    return backward_full(trace, lg)


def relu_kink_margin(params, x_t, views):
    """Smallest |pre-activation| across every ReLU in the forward pass."""
    margins = [np.inf]
    z_t = x_t @ params.w_enc
    margins.append(np.min(np.abs(z_t)) if z_t.size else np.inf)
    for v in views:
        am = v.adj_norm.matrix
        z = (am @ v.features) @ params.w_enc
        margins.append(np.min(np.abs(z)) if z.size else np.inf)
        y = (am @ relu(z)) @ params.w_dec
        margins.append(np.min(np.abs(y[-1, :])) if y.size else np.inf)
    return min(margins)


def finite_difference_check(seed, alpha=1.0, beta=0.6, eps=1e-5, d=3,
                            d_hidden=2, k=2):
    g, params, t, views = build_instance(seed, d=d, d_hidden=d_hidden, k=k)
    x_t = g.features[t]
    if relu_kink_margin(params, x_t, views) < 1e-3:
        return None  # too close to a ReLU kink for central differences
    grads = analytic_grads(params, x_t, views, alpha, beta)
    worst = 0.0
    for field in ("w_enc", "w_dec", "w_s"):
        mat = getattr(params, field)
        ana = getattr(grads, "g_" + field)
        num = np.zeros_like(mat)
        for idx in np.ndindex(mat.shape):
            bump = np.zeros_like(mat)
            bump[idx] = eps
            up = dataclasses.replace(params, **{field: mat + bump})
            dn = dataclasses.replace(params, **{field: mat - bump})
            num[idx] = (total_loss(up, x_t, views, alpha, beta)
                        - total_loss(dn, x_t, views, alpha, beta)) / (2 * eps)
        denom = max(np.max(np.abs(num)), np.max(np.abs(ana)), 1e-8)
        worst = max(worst, float(np.max(np.abs(num - ana)) / denom))
    return worst


def test_gradients_match_finite_differences():
    checked = 0
    seed = 0
    while checked < 12:
        worst = finite_difference_check(seed)
        seed += 1
        if worst is None:
            continue
        assert worst < 1e-4, f"seed {seed - 1}: rel err {worst}"
        checked += 1


def test_gradients_generative_only_head():
    checked = 0
    seed = 100
    while checked < 4:
        worst = finite_difference_check(seed, alpha=0.0, beta=1.0)
        seed += 1
        if worst is None:
            continue
        assert worst < 1e-4
        checked += 1


def test_gradients_contrastive_only_head():
    checked = 0
    seed = 200
    while checked < 4:
        worst = finite_difference_check(seed, alpha=1.0, beta=0.0)
        seed += 1
        if worst is None:
            continue
        assert worst < 1e-4
        checked += 1


def test_zero_upstream_gives_zero_gradients():
    g, params, t, views = build_instance(31)
    trace, out = forward_full(params, g.features[t], *views)
    lg = LossGrads(d_recon1=np.zeros_like(out.recon1),
                   d_recon2=np.zeros_like(out.recon2))
    grads = backward_full(trace, lg)
    assert not grads.g_w_enc.any()
    assert not grads.g_w_dec.any()
    assert not grads.g_w_s.any()


def test_ws_gradient_zero_when_discriminator_inputs_vanish():
    # zero target features and zero views: h and all g are zero vectors
    d, dh = 3, 2
    params = make_params(d, dh, seed=12)
    zero_view = manual_view([0], np.zeros((1, 1), dtype=bool),
                            np.zeros((1, d)), 0)
    trace, out = forward_full(params, np.zeros(d), zero_view, zero_view,
                              zero_view, zero_view)
    lg = LossGrads(d_recon1=np.ones(d), d_recon2=np.ones(d),
                   d_logit1=1.0, d_logit2=1.0,
                   d_neg_logit1=1.0, d_neg_logit2=1.0)
    grads = backward_full(trace, lg)
    assert not grads.g_w_s.any()


def test_trace_consumed_once():
    g, params, t, views = build_instance(33)
    trace, out = forward_full(params, g.features[t], *views)
    lg = LossGrads(d_recon1=np.ones_like(out.recon1),
                   d_recon2=np.ones_like(out.recon2))
    backward_full(trace, lg)
    with pytest.raises(RuntimeError):
        backward_full(trace, lg)


def test_forward_zero_params():
    g, _, t, views = build_instance(34)
    d = g.n_features
    params = ModelParams(w_enc=np.zeros((d, 2)), w_dec=np.zeros((2, d)),
                         w_s=np.zeros((2, 2)))
    _, out = forward_full(params, g.features[t], *views)
    assert out.s1 == out.s2 == out.s_neg1 == out.s_neg2 == 0.5
    assert not out.recon1.any() and not out.recon2.any()


def test_forward_identical_views_agree():
    g, params, t, views = build_instance(35)
    v1, _, n1, n2 = views
    _, out = forward_full(params, g.features[t], v1, v1, n1, n2)
    assert out.s1 == out.s2
    assert np.array_equal(out.recon1, out.recon2)


def test_forward_outputs_ranges():
    for seed in range(36, 42):
        g, params, t, views = build_instance(seed)
        _, out = forward_full(params, g.features[t], *views)
        for s in (out.s1, out.s2, out.s_neg1, out.s_neg2):
            assert 0.0 < s < 1.0
        assert np.all(out.recon1 >= 0.0) and np.all(out.recon2 >= 0.0)


def test_anonymization_leakage():
    # perturbing the target's parent-graph features must change h_t but
    # never the anonymized views' reconstructions or readouts
    g, params, t, views = build_instance(43)
    x = g.features[t]
    x_bumped = x + 1.7
    trace_a, out_a = forward_full(params, x, *views)
    trace_b, out_b = forward_full(params, x_bumped, *views)
    assert np.array_equal(out_a.recon1, out_b.recon1)
    assert np.array_equal(out_a.recon2, out_b.recon2)
    assert np.array_equal(trace_a.views[0].g, trace_b.views[0].g)
    assert np.array_equal(trace_a.views[1].g, trace_b.views[1].g)
    if relu(x_bumped @ params.w_enc).any():
        assert not np.array_equal(trace_a.h, trace_b.h)


def test_pair_logit_matches_discriminate():
    params = make_params(3, 4, seed=13)
    rng = np.random.default_rng(3)
    h, gv = rng.standard_normal(4), rng.standard_normal(4)
    assert discriminate(params, h, gv) == pytest.approx(
        sigmoid(pair_logit(params, h, gv)), abs=1e-15)


def test_init_params_glorot_bounds():
    params = init_params(30, 20, np.random.default_rng(0))
    bound = np.sqrt(6.0 / 50.0)
    assert params.w_enc.shape == (30, 20)
    assert np.max(np.abs(params.w_enc)) <= bound
    assert np.max(np.abs(params.w_s)) <= np.sqrt(6.0 / 40.0)
    # not degenerate
    assert np.std(params.w_enc) > bound / 4


def test_checkpoint_round_trip(tmp_path):
    params = make_params(5, 3, seed=14)
    path = tmp_path / "checkpoint"
    save_checkpoint(path, params, "abc123")
    back, cfg_hash = load_checkpoint(path)
    assert cfg_hash == "abc123"
    assert np.array_equal(back.w_enc, params.w_enc)
    assert np.array_equal(back.w_dec, params.w_dec)
    assert np.array_equal(back.w_s, params.w_s)


def test_checkpoint_rejects_unknown_version(tmp_path):
    params = make_params(4, 2, seed=15)
    path = tmp_path / "checkpoint"
    with open(path, "wb") as fh:
        np.savez(fh, version=np.int64(999),
                 d_in=np.int64(4), d_hidden=np.int64(2),
                 w_enc=params.w_enc, w_dec=params.w_dec, w_s=params.w_s,
                 config_hash=np.bytes_(b"x"))
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_rejects_shape_mismatch(tmp_path):
    params = make_params(4, 2, seed=16)
    path = tmp_path / "checkpoint"
    with open(path, "wb") as fh:
        np.savez(fh, version=np.int64(1),
                 d_in=np.int64(9), d_hidden=np.int64(2),
                 w_enc=params.w_enc, w_dec=params.w_dec, w_s=params.w_s,
                 config_hash=np.bytes_(b"x"))
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    import zipfile

    params = make_params(4, 2, seed=17)
    path = tmp_path / "checkpoint"
    save_checkpoint(path, params, "x")
    raw = path.read_bytes()
    path.write_bytes(raw[:60])
    with pytest.raises((ValueError, OSError, EOFError, zipfile.BadZipFile)):
        load_checkpoint(path)


def test_batch_matches_per_target():
    # the vectorized batch path must agree with summed per-target runs
    # within the documented 1e-10 reduction tolerance
    rng = np.random.default_rng(50)
    d, dh, k, b = 4, 3, 3, 5
    n = 12
    feats = rng.standard_normal((n, d))
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < 0.5]
    g = from_edges(n, edges, feats)
    params = make_params(d, dh, seed=51)
    cfg = SamplerConfig(k=k)
    targets = np.array([0, 3, 5, 7, 9])
    ch1 = [sample_view(g, int(t), cfg, stream(60, int(t), 0)) for t in targets]
    ch2 = [sample_view(g, int(t), cfg, stream(60, int(t), 1)) for t in targets]
    assign = np.array([[1, 2, 3, 4, 0]])
    x_t = g.features[targets]
    trace = batch_forward(params, x_t, ch1, ch2, assign)
    d_r = (rng.standard_normal((b, d)), rng.standard_normal((b, d)))
    d_l = (rng.standard_normal(b), rng.standard_normal(b))
    d_nl = (rng.standard_normal((1, b)), rng.standard_normal((1, b)))

    from gadview.model import Gradients as G
    total = G.zeros(params)
    for i in range(b):
        j = int(assign[0, i])
        tr, out = forward_full(params, x_t[i], ch1[i], ch2[i], ch1[j], ch2[j])
        assert np.allclose(out.recon1, trace.channels[0].recon[i], atol=1e-12)
        assert np.allclose(out.recon2, trace.channels[1].recon[i], atol=1e-12)
        assert out.logit1 == pytest.approx(trace.logits[0][i], abs=1e-12)
        assert out.logit2 == pytest.approx(trace.logits[1][i], abs=1e-12)
        assert out.neg_logit1 == pytest.approx(trace.neg_logits[0][0, i], abs=1e-12)
        assert out.neg_logit2 == pytest.approx(trace.neg_logits[1][0, i], abs=1e-12)
        lg = LossGrads(d_recon1=d_r[0][i], d_recon2=d_r[1][i],
                       d_logit1=float(d_l[0][i]), d_logit2=float(d_l[1][i]),
                       d_neg_logit1=float(d_nl[0][0, i]),
                       d_neg_logit2=float(d_nl[1][0, i]))
        total.add_(backward_full(tr, lg))

    batch_grads = batch_backward(trace, d_recon=d_r, d_logits=d_l,
                                 d_neg_logits=d_nl)
    for f in ("g_w_enc", "g_w_dec", "g_w_s"):
        assert np.allclose(getattr(batch_grads, f), getattr(total, f),
                           rtol=1e-10, atol=1e-12)


def test_encode_view_batch_matches_single():
    rng = np.random.default_rng(52)
    g = from_edges(8, [(i, (i + 1) % 8) for i in range(8)] + [(0, 4), (2, 6)],
                   rng.standard_normal((8, 3)))
    params = make_params(3, 2, seed=53)
    cfg = SamplerConfig(k=3)
    views = [sample_view(g, t, cfg, stream(61, t)) for t in range(8)]
    vb = encode_view_batch(params, views, keep_trace=False)
    for i, v in enumerate(views):
        emb = encode_view(params, v)
        assert np.allclose(vb.g[i], readout(emb), atol=1e-12)
        recon = decode_view(params, emb, v.adj_norm)[-1, :]
        assert np.allclose(vb.recon[i], recon, atol=1e-12)


def test_batch_trace_consumed_once():
    rng = np.random.default_rng(54)
    g = from_edges(6, [(i, j) for i in range(6) for j in range(i + 1, 6)],
                   rng.standard_normal((6, 3)))
    params = make_params(3, 2, seed=55)
    cfg = SamplerConfig(k=2)
    targets = np.array([0, 1, 2])
    ch1 = [sample_view(g, int(t), cfg, stream(62, int(t), 0)) for t in targets]
    ch2 = [sample_view(g, int(t), cfg, stream(62, int(t), 1)) for t in targets]
    trace = batch_forward(params, g.features[targets], ch1, ch2,
                          np.array([[1, 2, 0]]))
    zr = (np.zeros((3, 3)), np.zeros((3, 3)))
    zl = (np.zeros(3), np.zeros(3))
    zn = (np.zeros((1, 3)), np.zeros((1, 3)))
    batch_backward(trace, zr, zl, zn)
    with pytest.raises(RuntimeError):
        batch_backward(trace, zr, zl, zn)


def test_gradients_accumulate():
    z = Gradients.zeros(make_params(2, 2))
    g1 = Gradients(g_w_enc=np.ones((2, 2)), g_w_dec=np.ones((2, 2)),
                   g_w_s=np.ones((2, 2)))
    z.add_(g1)
    z.add_(g1)
    assert np.array_equal(z.g_w_enc, 2 * np.ones((2, 2)))
