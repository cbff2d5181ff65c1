"""Multi-round anomaly scoring.

Each round re-samples two fresh views per node plus a negative
assignment over the whole node population, producing a generative raw
score (reconstruction error of the anonymized target row) and a
contrastive raw score (negative-pair probability minus positive-pair
probability). Raw scores are rescaled per round, the per-round scaled
scores are averaged over R rounds, and the final score combines the two
channels as alpha * scaled_con + beta * scaled_gen.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .graph import DataError, Graph, NumericError
from .model import ModelParams, encode_view_batch, relu, score_sigmoid
from .training import (RunConfig, SCORE_NEG_STREAM, SCORE_VIEW_STREAM,
                       _sample_batch)
from .views import random_derangement, stream

MODES = ("full", "gen-only", "con-only", "unweighted", "unscaled")

_CHUNK = 256   # nodes encoded per stacked GEMM; caps transient memory


def generative_raw(x_i: np.ndarray, recon1: np.ndarray, recon2: np.ndarray) -> float:
    """Raw generative score of one node: mean squared-L2 error over views."""
    d1 = recon1 - x_i
    d2 = recon2 - x_i
    return 0.5 * (float(d1 @ d1) + float(d2 @ d2))


def contrastive_raw(s1: float, s2: float, s_neg1: float, s_neg2: float) -> float:
    """Raw contrastive score of one node: mean (negative - positive) gap."""
    for s in (s1, s2, s_neg1, s_neg2):
        if not 0.0 < s < 1.0:
            raise DataError("discrimination scores must lie strictly in (0, 1)")
    return 0.5 * ((s_neg1 - s1) + (s_neg2 - s2))


def scale_scores(raw: np.ndarray, kind: str) -> np.ndarray:
    """Rescale raw scores of one round into [0, 1].

    ``gen`` applies population min-max (an all-equal population maps to
    zeros); ``con`` applies the affine map (x+1)/2, clamped.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if kind == "gen":
        lo, hi = raw.min(), raw.max()
        if hi == lo:
            return np.zeros_like(raw)
        return (raw - lo) / (hi - lo)
    if kind == "con":
        return np.clip((raw + 1.0) / 2.0, 0.0, 1.0)
    raise ValueError(f"unknown scaling kind {kind!r}")


@dataclasses.dataclass
class ScoreTable:
    """Per-node anomaly scores averaged over rounds."""

    final: np.ndarray
    scaled_gen: np.ndarray
    scaled_con: np.ndarray
    raw_gen: np.ndarray
    raw_con: np.ndarray
    rounds_used: int
    alpha: float
    beta: float

    @property
    def n(self) -> int:
        return self.final.shape[0]


def _mode_weights(cfg: RunConfig, mode: str) -> tuple[float, float]:
    if mode in ("full", "unscaled"):
        return cfg.alpha, cfg.beta
    if mode == "gen-only":
        return 0.0, cfg.beta
    if mode == "con-only":
        return cfg.alpha, 0.0
    if mode == "unweighted":
        return 1.0, 1.0
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def score_all(graph: Graph, params: ModelParams, cfg: RunConfig,
              rounds: int | None = None, mode: str = "full",
              scale_per_round: bool = True,
              round_seeds: list[int] | None = None) -> ScoreTable:
    """Score every node of ``graph`` over multiple evaluation rounds.

    Parameters
    ----------
    rounds : int, optional
        Override for ``cfg.rounds``.
    mode : str
        One of ``full``, ``gen-only``, ``con-only``, ``unweighted``
        (both weights forced to 1) or ``unscaled`` (raw scores combined
        without rescaling).
    scale_per_round : bool
        Rescale within each round before averaging (default); when
        false, raw scores are averaged first and rescaled once.
    round_seeds : list of int, optional
        Explicit per-round seed tags (defaults to 0..R-1); rounds with
        equal tags resample identical views.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    n = graph.n_nodes
    if n < 2:
        raise DataError("scoring needs at least 2 nodes")
    r_count = cfg.rounds if rounds is None else rounds
    if round_seeds is None:
        round_seeds = list(range(r_count))
    elif len(round_seeds) != r_count:
        raise ValueError("round_seeds must supply one tag per round")
    alpha_eff, beta_eff = _mode_weights(cfg, mode)
    scaled = mode != "unscaled"
    scfg = cfg.sampler_config()

    # target-side quantities do not change across rounds
    h = relu(graph.features @ params.w_enc)
    u = h @ params.w_s
    x = graph.features
    nodes = np.arange(n)

    raw_gen_sum = np.zeros(n)
    raw_con_sum = np.zeros(n)
    scaled_gen_sum = np.zeros(n)
    scaled_con_sum = np.zeros(n)

    for tag in round_seeds:
        gen_err = np.zeros(n)
        logits = [np.zeros(n), np.zeros(n)]
        g_all = [np.zeros((n, cfg.d_hidden)), np.zeros((n, cfg.d_hidden))]
        for lo in range(0, n, _CHUNK):
            chunk = nodes[lo:lo + _CHUNK]
            ch1, ch2 = _sample_batch(graph, cfg, scfg, chunk,
                                     SCORE_VIEW_STREAM, int(tag))
            for ci, views in enumerate((ch1, ch2)):
                vb = encode_view_batch(params, views, keep_trace=False)
                diff = vb.recon - x[chunk]
                gen_err[chunk] += 0.5 * (diff * diff).sum(axis=1)
                logits[ci][chunk] = np.einsum("bd,bd->b", u[chunk], vb.g)
                g_all[ci][chunk] = vb.g
        assign = random_derangement(n, stream(SCORE_NEG_STREAM, cfg.seed, int(tag)))
        raw_con = np.zeros(n)
        for ci in range(2):
            s_pos = score_sigmoid(logits[ci])
            s_neg = score_sigmoid(np.einsum("bd,bd->b", u, g_all[ci][assign]))
            raw_con += 0.5 * (s_neg - s_pos)
        raw_gen_sum += gen_err
        raw_con_sum += raw_con
        if scale_per_round:
            scaled_gen_sum += scale_scores(gen_err, "gen") if scaled else gen_err
            scaled_con_sum += scale_scores(raw_con, "con") if scaled else raw_con

    raw_gen = raw_gen_sum / len(round_seeds)
    raw_con = raw_con_sum / len(round_seeds)
    if scale_per_round:
        scaled_gen = scaled_gen_sum / len(round_seeds)
        scaled_con = scaled_con_sum / len(round_seeds)
    else:
        scaled_gen = scale_scores(raw_gen, "gen") if scaled else raw_gen
        scaled_con = scale_scores(raw_con, "con") if scaled else raw_con
    final = alpha_eff * scaled_con + beta_eff * scaled_gen
    if not (np.all(np.isfinite(final)) and np.all(np.isfinite(raw_gen))):
        raise NumericError("non-finite anomaly scores")
    return ScoreTable(final=final, scaled_gen=scaled_gen, scaled_con=scaled_con,
                      raw_gen=raw_gen, raw_con=raw_con,
                      rounds_used=len(round_seeds),
                      alpha=alpha_eff, beta=beta_eff)


def write_scores(path, table: ScoreTable) -> None:
    """TSV score table sorted by node id, one node per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# node_id\tfinal\tscaled_gen\tscaled_con\traw_gen\traw_con\n")
        for i in range(table.n):
            cols = (table.final[i], table.scaled_gen[i], table.scaled_con[i],
                    table.raw_gen[i], table.raw_con[i])
            fh.write(str(i) + "\t" + "\t".join(repr(float(c)) for c in cols) + "\n")


def read_scores(path) -> ScoreTable:
    """Inverse of :func:`write_scores` (alpha/beta/rounds are not stored)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 columns")
            rows.append([float(v) for v in parts])
    if not rows:
        raise DataError(f"{path}: empty score table")
    arr = np.array(rows, dtype=np.float64)
    if np.any(arr[:, 0].astype(np.int64) != np.arange(arr.shape[0])):
        raise DataError(f"{path}: node ids must be dense and sorted")
    return ScoreTable(final=arr[:, 1], scaled_gen=arr[:, 2], scaled_con=arr[:, 3],
                      raw_gen=arr[:, 4], raw_con=arr[:, 5],
                      rounds_used=0, alpha=float("nan"), beta=float("nan"))
