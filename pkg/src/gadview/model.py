"""Encoder/decoder/discriminator model with hand-derived gradients.

One GCN layer encodes a view's anonymized features, a mirrored GCN layer
decodes them back to feature space, and a bilinear form scores the
agreement between a target's own-feature embedding and a view's pooled
summary. All reverse-mode gradients are derived by hand; there is no
autodiff dependency. ReLU uses the subgradient 0 at 0, and every
probability is backed by its logit so losses can use stable log-sigmoid
forms.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json

import numpy as np

from .graph import NormalizedAdj
from .views import SubgraphView

CHECKPOINT_VERSION = 1


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    """log(1 + exp(x)) without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


_SCORE_FLOOR = np.finfo(np.float64).tiny
_SCORE_CEIL = float(np.nextafter(1.0, 0.0))


def score_sigmoid(x):
    """sigmoid clamped to the open unit interval.

    Reported discrimination scores must stay strictly inside (0, 1);
    a saturated logit would otherwise underflow to an exact 0 or 1.
    """
    return np.clip(sigmoid(x), _SCORE_FLOOR, _SCORE_CEIL)


def relu(x):
    return np.maximum(x, 0.0)


@dataclasses.dataclass
class ModelParams:
    """The three trainable matrices."""

    w_enc: np.ndarray   # (D, D')
    w_dec: np.ndarray   # (D', D)
    w_s: np.ndarray     # (D', D')

    @property
    def d_in(self) -> int:
        return self.w_enc.shape[0]

    @property
    def d_hidden(self) -> int:
        return self.w_enc.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.w_enc.copy(), self.w_dec.copy(), self.w_s.copy())

    def validate(self) -> None:
        d, dh = self.w_enc.shape
        if self.w_dec.shape != (dh, d) or self.w_s.shape != (dh, dh):
            raise ValueError("parameter shapes are inconsistent")
        for m in (self.w_enc, self.w_dec, self.w_s):
            if not np.all(np.isfinite(m)):
                raise ValueError("parameters must be finite")


@dataclasses.dataclass
class Gradients:
    g_w_enc: np.ndarray
    g_w_dec: np.ndarray
    g_w_s: np.ndarray

    @staticmethod
    def zeros(params: ModelParams) -> "Gradients":
        return Gradients(np.zeros_like(params.w_enc),
                         np.zeros_like(params.w_dec),
                         np.zeros_like(params.w_s))

    def add_(self, other: "Gradients") -> "Gradients":
        self.g_w_enc += other.g_w_enc
        self.g_w_dec += other.g_w_dec
        self.g_w_s += other.g_w_s
        return self


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(d_in: int, d_hidden: int, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform initialization of all three matrices."""
    return ModelParams(w_enc=glorot(rng, d_in, d_hidden),
                       w_dec=glorot(rng, d_hidden, d_in),
                       w_s=glorot(rng, d_hidden, d_hidden))


# ---------------------------------------------------------------------------
# per-target ops


def encode_view(params: ModelParams, view: SubgraphView) -> np.ndarray:
    """Node embeddings (K, D') of one view: relu((A~ X) W_enc)."""
    return relu((view.adj_norm.matrix @ view.features) @ params.w_enc)


def encode_target(params: ModelParams, x_t: np.ndarray) -> np.ndarray:
    """Target embedding (D',) from the original (non-anonymized) features."""
    return relu(x_t @ params.w_enc)


def decode_view(params: ModelParams, embeddings: np.ndarray,
                adj_norm: NormalizedAdj) -> np.ndarray:
    """Reconstructed features (K, D): relu((A~ H) W_dec)."""
    return relu((adj_norm.matrix @ embeddings) @ params.w_dec)


def readout(embeddings: np.ndarray) -> np.ndarray:
    """Mean-pool a view's node embeddings into one summary vector."""
    return embeddings.mean(axis=0)


def pair_logit(params: ModelParams, h: np.ndarray, g: np.ndarray) -> float:
    return float(h @ params.w_s @ g)


def discriminate(params: ModelParams, h: np.ndarray, g: np.ndarray) -> float:
    """Agreement score sigmoid(h W_s g), strictly inside (0, 1)."""
    return float(score_sigmoid(pair_logit(params, h, g)))


@dataclasses.dataclass
class _ViewTrace:
    adjm: np.ndarray
    p: np.ndarray        # A~ X
    z: np.ndarray        # pre-activation P W_enc
    q: np.ndarray        # A~ H
    y: np.ndarray        # pre-activation Q W_dec
    g: np.ndarray        # readout of relu(z)


@dataclasses.dataclass
class _NegTrace:
    p: np.ndarray
    z: np.ndarray
    g: np.ndarray


@dataclasses.dataclass
class ForwardTrace:
    """Intermediates cached by forward_full; consumed once by backward_full."""

    params: ModelParams
    x_t: np.ndarray
    z_t: np.ndarray
    h: np.ndarray
    views: tuple[_ViewTrace, _ViewTrace]
    negs: tuple[_NegTrace, _NegTrace]
    consumed: bool = False


@dataclasses.dataclass
class ForwardOutputs:
    """Reconstruction rows, pair probabilities, and their logits."""

    recon1: np.ndarray
    recon2: np.ndarray
    s1: float
    s2: float
    s_neg1: float
    s_neg2: float
    logit1: float
    logit2: float
    neg_logit1: float
    neg_logit2: float


@dataclasses.dataclass
class LossGrads:
    """Upstream gradients of forward_full outputs.

    Contrastive gradients are taken with respect to the pair logits, not
    the saturating probabilities.
    """

    d_recon1: np.ndarray
    d_recon2: np.ndarray
    d_logit1: float = 0.0
    d_logit2: float = 0.0
    d_neg_logit1: float = 0.0
    d_neg_logit2: float = 0.0


def _trace_view(params: ModelParams, view: SubgraphView) -> _ViewTrace:
    adjm = view.adj_norm.matrix
    p = adjm @ view.features
    z = p @ params.w_enc
    hmat = relu(z)
    q = adjm @ hmat
    y = q @ params.w_dec
    return _ViewTrace(adjm=adjm, p=p, z=z, q=q, y=y, g=hmat.mean(axis=0))


def _trace_neg(params: ModelParams, view: SubgraphView) -> _NegTrace:
    p = view.adj_norm.matrix @ view.features
    z = p @ params.w_enc
    return _NegTrace(p=p, z=z, g=relu(z).mean(axis=0))


def forward_full(params: ModelParams, x_t: np.ndarray,
                 view1: SubgraphView, view2: SubgraphView,
                 neg_view1: SubgraphView, neg_view2: SubgraphView,
                 ) -> tuple[ForwardTrace, ForwardOutputs]:
    """Full forward pass for one target: both views plus both negatives."""
    z_t = x_t @ params.w_enc
    h = relu(z_t)
    v1 = _trace_view(params, view1)
    v2 = _trace_view(params, view2)
    n1 = _trace_neg(params, neg_view1)
    n2 = _trace_neg(params, neg_view2)
    hw = h @ params.w_s
    logits = [float(hw @ t.g) for t in (v1, v2, n1, n2)]
    trace = ForwardTrace(params=params, x_t=np.asarray(x_t, dtype=np.float64),
                         z_t=z_t, h=h, views=(v1, v2), negs=(n1, n2))
    outputs = ForwardOutputs(
        recon1=relu(v1.y[-1, :]), recon2=relu(v2.y[-1, :]),
        s1=float(score_sigmoid(logits[0])), s2=float(score_sigmoid(logits[1])),
        s_neg1=float(score_sigmoid(logits[2])), s_neg2=float(score_sigmoid(logits[3])),
        logit1=logits[0], logit2=logits[1],
        neg_logit1=logits[2], neg_logit2=logits[3])
    return trace, outputs


def backward_full(trace: ForwardTrace, loss_grads: LossGrads) -> Gradients:
    """Hand-derived reverse pass over one target's forward_full trace."""
    if trace.consumed:
        raise RuntimeError("forward trace already consumed by a backward pass")
    trace.consumed = True
    params = trace.params
    grads = Gradients.zeros(params)
    d_h = np.zeros_like(trace.h)

    for vt, d_recon, lam in ((trace.views[0], loss_grads.d_recon1, loss_grads.d_logit1),
                             (trace.views[1], loss_grads.d_recon2, loss_grads.d_logit2)):
        k = vt.z.shape[0]
        # generative head: only the target (last) row of X^ carries loss
        d_y = np.zeros_like(vt.y)
        d_y[-1, :] = (vt.y[-1, :] > 0) * np.asarray(d_recon, dtype=np.float64)
        grads.g_w_dec += vt.q.T @ d_y
        d_q = d_y @ params.w_dec.T
        d_hmat = vt.adjm.T @ d_q
        # contrastive head: logit = h W_s g with g the row mean of H
        d_g = lam * (trace.h @ params.w_s)
        d_hmat += d_g[None, :] / k
        d_z = (vt.z > 0) * d_hmat
        grads.g_w_enc += vt.p.T @ d_z
        grads.g_w_s += lam * np.outer(trace.h, vt.g)
        d_h += lam * (params.w_s @ vt.g)

    for nt, lam in ((trace.negs[0], loss_grads.d_neg_logit1),
                    (trace.negs[1], loss_grads.d_neg_logit2)):
        k = nt.z.shape[0]
        d_g = lam * (trace.h @ params.w_s)
        d_z = (nt.z > 0) * (d_g[None, :] / k)
        grads.g_w_enc += nt.p.T @ d_z
        grads.g_w_s += lam * np.outer(trace.h, nt.g)
        d_h += lam * (params.w_s @ nt.g)

    d_z_t = (trace.z_t > 0) * d_h
    grads.g_w_enc += np.outer(trace.x_t, d_z_t)
    return grads


# ---------------------------------------------------------------------------
# batched kernels
#
# The trainer and scorer vectorize across a batch of targets: all view
# rows are stacked so each W_enc / W_dec product is one GEMM, readouts
# become segment means, and each view's encoding is reused where it
# appears as another target's negative. Only the target row of the
# reconstruction is decoded (nothing else is consumed downstream).
# Equivalence with the per-target ops above is pinned by tests.


@dataclasses.dataclass
class ViewBatch:
    """Stacked encodings of one view channel across a batch."""

    sizes: np.ndarray        # (B,) view sizes
    starts: np.ndarray       # (B,) row offsets into the stacks
    g: np.ndarray            # (B, D') readouts
    y_last: np.ndarray       # (B, D) pre-activation target-row decode
    recon: np.ndarray        # (B, D) reconstructed target rows
    w_last: np.ndarray | None = None   # (sum K,) last-row adjacency weights
    p_stack: np.ndarray | None = None  # (sum K, D)
    z_stack: np.ndarray | None = None  # (sum K, D')
    q_last: np.ndarray | None = None   # (B, D')


def encode_view_batch(params: ModelParams, batch: list[SubgraphView],
                      keep_trace: bool) -> ViewBatch:
    """Encode + target-row decode of many views with stacked GEMMs."""
    sizes = np.array([v.size for v in batch], dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    p_stack = np.concatenate([v.adj_norm.matrix @ v.features for v in batch], axis=0)
    w_last = np.concatenate([v.adj_norm.matrix[-1, :] for v in batch])
    z_stack = p_stack @ params.w_enc
    h_stack = relu(z_stack)
    g = np.add.reduceat(h_stack, starts, axis=0) / sizes[:, None]
    q_last = np.add.reduceat(h_stack * w_last[:, None], starts, axis=0)
    y_last = q_last @ params.w_dec
    return ViewBatch(sizes=sizes, starts=starts, g=g, y_last=y_last,
                     recon=relu(y_last),
                     w_last=w_last if keep_trace else None,
                     p_stack=p_stack if keep_trace else None,
                     z_stack=z_stack if keep_trace else None,
                     q_last=q_last if keep_trace else None)


@dataclasses.dataclass
class BatchTrace:
    """Everything the batched backward pass needs."""

    params: ModelParams
    x_t: np.ndarray                       # (B, D) original target rows
    z_t: np.ndarray                       # (B, D')
    h: np.ndarray                         # (B, D')
    u: np.ndarray                         # (B, D') = h W_s
    channels: tuple[ViewBatch, ViewBatch]
    neg_assign: np.ndarray                # (ratio, B) partner indices
    logits: tuple[np.ndarray, np.ndarray]        # (B,) per channel
    neg_logits: tuple[np.ndarray, np.ndarray]    # (ratio, B) per channel
    consumed: bool = False


def batch_forward(params: ModelParams, x_targets: np.ndarray,
                  channel1: list[SubgraphView], channel2: list[SubgraphView],
                  neg_assign: np.ndarray) -> BatchTrace:
    """Vectorized forward over a batch; negatives reuse in-batch encodings.

    ``neg_assign`` holds, per negative round, the index of the partner
    whose channel-j view serves as each target's channel-j negative.
    """
    z_t = x_targets @ params.w_enc
    h = relu(z_t)
    u = h @ params.w_s
    vb1 = encode_view_batch(params, channel1, keep_trace=True)
    vb2 = encode_view_batch(params, channel2, keep_trace=True)
    logits = (np.einsum("bd,bd->b", u, vb1.g), np.einsum("bd,bd->b", u, vb2.g))
    neg_logits = (np.einsum("bd,rbd->rb", u, vb1.g[neg_assign]),
                  np.einsum("bd,rbd->rb", u, vb2.g[neg_assign]))
    return BatchTrace(params=params, x_t=x_targets, z_t=z_t, h=h, u=u,
                      channels=(vb1, vb2), neg_assign=neg_assign,
                      logits=logits, neg_logits=neg_logits)


def batch_backward(trace: BatchTrace,
                   d_recon: tuple[np.ndarray, np.ndarray],
                   d_logits: tuple[np.ndarray, np.ndarray],
                   d_neg_logits: tuple[np.ndarray, np.ndarray]) -> Gradients:
    """Reverse pass matching batch_forward; sums gradients over the batch."""
    if trace.consumed:
        raise RuntimeError("batch trace already consumed by a backward pass")
    trace.consumed = True
    params = trace.params
    grads = Gradients.zeros(params)
    d_h = np.zeros_like(trace.h)

    for ch in (0, 1):
        vb = trace.channels[ch]
        lam = np.asarray(d_logits[ch], dtype=np.float64)
        lam_neg = np.asarray(d_neg_logits[ch], dtype=np.float64)
        d_y_last = (vb.y_last > 0) * d_recon[ch]
        grads.g_w_dec += vb.q_last.T @ d_y_last
        d_q_last = d_y_last @ params.w_dec.T
        d_g = lam[:, None] * trace.u
        gmix = lam[:, None] * vb.g
        for m in range(trace.neg_assign.shape[0]):
            part = trace.neg_assign[m]
            np.add.at(d_g, part, lam_neg[m][:, None] * trace.u)
            gmix += lam_neg[m][:, None] * vb.g[part]
        d_h_stack = (np.repeat(d_g / vb.sizes[:, None], vb.sizes, axis=0)
                     + vb.w_last[:, None] * np.repeat(d_q_last, vb.sizes, axis=0))
        d_z_stack = (vb.z_stack > 0) * d_h_stack
        grads.g_w_enc += vb.p_stack.T @ d_z_stack
        grads.g_w_s += trace.h.T @ gmix
        d_h += gmix @ params.w_s.T

    d_z_t = (trace.z_t > 0) * d_h
    grads.g_w_enc += trace.x_t.T @ d_z_t
    return grads


# ---------------------------------------------------------------------------
# checkpoint I/O
#
# A checkpoint is an npz archive written to the exact requested filename
# (no forced suffix): format version, both dimensions, the three
# matrices, and the hash of the producing run configuration.


def config_hash(config_dict: dict) -> str:
    blob = json.dumps(config_dict, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path, params: ModelParams, cfg_hash: str) -> None:
    params.validate()
    with open(path, "wb") as fh:
        np.savez(fh, version=np.int64(CHECKPOINT_VERSION),
                 d_in=np.int64(params.d_in), d_hidden=np.int64(params.d_hidden),
                 w_enc=params.w_enc, w_dec=params.w_dec, w_s=params.w_s,
                 config_hash=np.bytes_(cfg_hash.encode("ascii")))


def load_checkpoint(path) -> tuple[ModelParams, str]:
    with np.load(path, allow_pickle=False) as z:
        if int(z["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {int(z['version'])}")
        params = ModelParams(w_enc=z["w_enc"], w_dec=z["w_dec"], w_s=z["w_s"])
        d_in, d_hidden = int(z["d_in"]), int(z["d_hidden"])
        if params.w_enc.shape != (d_in, d_hidden):
            raise ValueError("checkpoint shape header disagrees with matrices")
        params.validate()
        cfg_hash = bytes(z["config_hash"]).decode("ascii")
    return params, cfg_hash
