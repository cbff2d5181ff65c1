"""Joint generative + contrastive training loop.

The batch loss is

    l_total = alpha * l_con + beta * l_gen

where l_gen averages the squared reconstruction error of the anonymized
target rows (normalized by batch size and feature dimension) over both
view channels, and l_con is the binary discrimination loss of positive
(target, own view) pairs against negative (target, other target's view)
pairs, also averaged over both channels. Contrastive terms are computed
from logits via softplus, never from saturated probabilities.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .graph import DataError, Graph, NumericError
from .model import (BatchTrace, Gradients, ModelParams, batch_backward,
                    batch_forward, init_params, softplus, sigmoid)
from .views import SamplerConfig, negative_assignment, sample_view_pair, stream

# rng stream channels; every consumable stream is stream(CHANNEL, seed, ...)
INIT_STREAM = 0
TRAIN_VIEW_STREAM = 1
SCORE_VIEW_STREAM = 2
TRAIN_NEG_STREAM = 3
SCORE_NEG_STREAM = 4
SHUFFLE_STREAM = 5


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Every knob of a training/scoring run in one serializable record."""

    k: int = 4
    d_hidden: int = 64
    alpha: float = 1.0
    beta: float = 0.6
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 300
    rounds: int = 256
    negative_ratio: int = 1
    restart_prob: float = 0.15
    seed: int = 0

    def validate(self) -> None:
        if self.k < 1 or self.d_hidden < 1:
            raise ValueError("k and d_hidden must be positive")
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ValueError("need alpha >= 0, beta >= 0, alpha + beta > 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.negative_ratio < 1:
            raise ValueError("negative_ratio must be >= 1")
        if self.negative_ratio > self.batch_size - 1:
            raise ValueError("negative_ratio needs batch_size-1 distinct partners")
        if not 0.0 < self.restart_prob < 1.0:
            raise ValueError("restart_prob must lie strictly in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(k=self.k, restart_prob=self.restart_prob,
                             rng_seed=self.seed)


def init_for(graph: Graph, cfg: RunConfig) -> ModelParams:
    """Glorot initialization from the run seed (epoch-0 state of train)."""
    return init_params(graph.n_features, cfg.d_hidden, stream(INIT_STREAM, cfg.seed))


def generative_loss(x_targets: np.ndarray, recon1: np.ndarray, recon2: np.ndarray,
                    ) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Reconstruction loss over both views and its gradients.

    Returns the scalar loss and the gradients with respect to each
    view's reconstructed target rows.
    """
    b, d = x_targets.shape
    diff1 = recon1 - x_targets
    diff2 = recon2 - x_targets
    scale = 1.0 / (b * d)
    loss = 0.5 * scale * (float((diff1 * diff1).sum()) + float((diff2 * diff2).sum()))
    return loss, (scale * diff1, scale * diff2)


def contrastive_loss(logit1, logit2, neg_logit1, neg_logit2):
    """Discrimination loss from pair logits and its per-logit gradients.

    Positive logits are (B,); negative logits may be (B,) or (ratio, B),
    in which case the negative term averages over the ratio axis.
    Returns (loss, (d_logit1, d_logit2, d_neg_logit1, d_neg_logit2)).
    """
    a1, a2 = np.asarray(logit1, float), np.asarray(logit2, float)
    n1, n2 = np.atleast_2d(np.asarray(neg_logit1, float)), \
        np.atleast_2d(np.asarray(neg_logit2, float))
    b = a1.shape[0]
    ratio = n1.shape[0]
    loss = 0.0
    grads = []
    for a, n in ((a1, n1), (a2, n2)):
        loss += 0.25 * (softplus(-a).mean() + softplus(n).mean())
        grads.append((sigmoid(a) - 1.0) / (4.0 * b))
        grads.append(sigmoid(n) / (4.0 * b * ratio))
    d1, dn1, d2, dn2 = grads
    dn1 = dn1.reshape(np.shape(neg_logit1))
    dn2 = dn2.reshape(np.shape(neg_logit2))
    return float(loss), (d1, d2, dn1, dn2)


def combined_loss(l_gen: float, l_con: float, cfg: RunConfig) -> float:
    return cfg.alpha * l_con + cfg.beta * l_gen


@dataclasses.dataclass
class AdamState:
    """First/second moment accumulators and step counter."""

    m: Gradients
    v: Gradients
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def fresh(params: ModelParams) -> "AdamState":
        return AdamState(m=Gradients.zeros(params), v=Gradients.zeros(params))


def adam_step(params: ModelParams, grads: Gradients, state: AdamState,
              lr: float) -> tuple[ModelParams, AdamState]:
    """One Adam update; functional (inputs are not mutated)."""
    for name, g in (("w_enc", grads.g_w_enc), ("w_dec", grads.g_w_dec),
                    ("w_s", grads.g_w_s)):
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t

    def upd(w, m, v, g):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        w = w - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        return w, m, v

    w_enc, m1, v1 = upd(params.w_enc, state.m.g_w_enc, state.v.g_w_enc, grads.g_w_enc)
    w_dec, m2, v2 = upd(params.w_dec, state.m.g_w_dec, state.v.g_w_dec, grads.g_w_dec)
    w_s, m3, v3 = upd(params.w_s, state.m.g_w_s, state.v.g_w_s, grads.g_w_s)
    return (ModelParams(w_enc, w_dec, w_s),
            AdamState(m=Gradients(m1, m2, m3), v=Gradients(v1, v2, v3), t=t,
                      beta1=state.beta1, beta2=state.beta2, eps=state.eps))


@dataclasses.dataclass
class BatchLossReport:
    l_gen: float
    l_con: float
    l_total: float
    l_gen_views: tuple[float, float]
    l_con_views: tuple[float, float]


@dataclasses.dataclass
class EpochStats:
    epoch: int
    l_gen: float
    l_con: float
    l_total: float


def _sample_batch(graph: Graph, cfg: RunConfig, scfg: SamplerConfig,
                  targets: np.ndarray, view_stream: int, tag: int):
    pairs = [sample_view_pair(graph, int(t), scfg,
                              stream(view_stream, cfg.seed, tag, int(t)))
             for t in targets]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def _batch_step(graph: Graph, params: ModelParams, cfg: RunConfig,
                scfg: SamplerConfig, targets: np.ndarray, epoch: int,
                batch_index: int) -> tuple[BatchLossReport, Gradients]:
    ch1, ch2 = _sample_batch(graph, cfg, scfg, targets, TRAIN_VIEW_STREAM, epoch)
    x_t = graph.features[targets]
    assign = negative_assignment(len(targets),
                                 stream(TRAIN_NEG_STREAM, cfg.seed, epoch, batch_index),
                                 cfg.negative_ratio)
    trace = batch_forward(params, x_t, ch1, ch2, assign)
    recon = (trace.channels[0].recon, trace.channels[1].recon)
    l_gen, (gg1, gg2) = generative_loss(x_t, recon[0], recon[1])
    l_con, (gc1, gc2, gn1, gn2) = contrastive_loss(
        trace.logits[0], trace.logits[1], trace.neg_logits[0], trace.neg_logits[1])
    l_total = combined_loss(l_gen, l_con, cfg)
    report = BatchLossReport(
        l_gen=l_gen, l_con=l_con, l_total=l_total,
        l_gen_views=tuple(
            float(((r - x_t) ** 2).sum() / x_t.size) for r in recon),
        l_con_views=tuple(
            float(0.5 * (softplus(-np.asarray(a)).mean() + softplus(n).mean()))
            for a, n in ((trace.logits[0], trace.neg_logits[0]),
                         (trace.logits[1], trace.neg_logits[1]))))
    grads = batch_backward(trace,
                           d_recon=(cfg.beta * gg1, cfg.beta * gg2),
                           d_logits=(cfg.alpha * gc1, cfg.alpha * gc2),
                           d_neg_logits=(cfg.alpha * gn1, cfg.alpha * gn2))
    return report, grads


def train(graph: Graph, cfg: RunConfig,
          ) -> tuple[ModelParams, list[EpochStats]]:
    """Train on every node of ``graph`` for ``cfg.epochs`` epochs.

    Returns the final parameters and one loss record per epoch
    (batch-size-weighted means). Deterministic for a fixed seed.
    """
    cfg.validate()
    if graph.n_nodes < 2:
        raise DataError("training needs at least 2 nodes")
    params = init_for(graph, cfg)
    state = AdamState.fresh(params)
    scfg = cfg.sampler_config()
    history: list[EpochStats] = []
    n = graph.n_nodes
    for epoch in range(cfg.epochs):
        perm = stream(SHUFFLE_STREAM, cfg.seed, epoch).permutation(n)
        sums = np.zeros(3)
        counted = 0
        for batch_index, lo in enumerate(range(0, n, cfg.batch_size)):
            targets = perm[lo:lo + cfg.batch_size]
            if targets.shape[0] < 2:   # a trailing singleton cannot be contrasted
                continue
            report, grads = _batch_step(graph, params, cfg, scfg, targets,
                                        epoch, batch_index)
            if not np.isfinite(report.l_total):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            params, state = adam_step(params, grads, state, cfg.lr)
            sums += np.array([report.l_gen, report.l_con, report.l_total]) \
                * targets.shape[0]
            counted += targets.shape[0]
        if counted == 0:
            raise DataError("no trainable batch (all batches below 2 targets)")
        history.append(EpochStats(epoch=epoch, l_gen=float(sums[0] / counted),
                                  l_con=float(sums[1] / counted),
                                  l_total=float(sums[2] / counted)))
    params.validate()
    return params, history


def write_loss_log(path, history: list[EpochStats]) -> None:
    """TSV loss log: one `epoch l_gen l_con l_total` line per epoch."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in history:
            fh.write(f"{row.epoch}\t{row.l_gen!r}\t{row.l_con!r}\t{row.l_total!r}\n")
