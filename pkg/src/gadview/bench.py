"""Benchmark construction and evaluation: anomaly injection, ROC/AUC.

Ground-truth anomalies are synthesized with the standard two-type
protocol for attributed graphs:

* structural: q groups of ``clique_size`` nodes are each fully
  interconnected (edges only; features untouched),
* attributive: further nodes get their feature row replaced by the row
  of the most feature-distant node among ``candidate_pool`` uniformly
  sampled candidates.

All injected nodes are distinct and labeled 1.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .graph import DataError, Graph, NumericError, from_edges
from .views import stream

TOY_STREAM = 6


@dataclasses.dataclass(frozen=True)
class InjectionConfig:
    """Parameters of the anomaly injection protocol.

    The benchmark convention injects equal numbers of both anomaly
    types; leave ``n_attr`` at None to derive it as
    ``n_cliques * clique_size``. Explicit unbalanced counts are allowed.
    """

    clique_size: int = 15
    n_cliques: int = 1
    n_attr: int | None = None
    candidate_pool: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.n_cliques < 0 or self.clique_size < 0:
            raise ValueError("clique counts must be >= 0")
        if self.n_cliques > 0 and self.clique_size < 2:
            raise ValueError("a clique needs at least 2 nodes")
        if self.n_attr is not None and self.n_attr < 0:
            raise ValueError("n_attr must be >= 0")
        if self.candidate_pool < 1:
            raise ValueError("candidate_pool must be >= 1")

    @property
    def attr_count(self) -> int:
        return self.n_cliques * self.clique_size if self.n_attr is None else self.n_attr

    def to_dict(self) -> dict:
        return {"clique_size": self.clique_size, "n_cliques": self.n_cliques,
                "n_attr": self.attr_count, "candidate_pool": self.candidate_pool,
                "seed": self.seed}


@dataclasses.dataclass
class Manifest:
    """Record of what the injection changed.

    cliques: per clique, the member node ids.
    swaps: per attributive anomaly, ``(node, source_node)`` meaning the
        node's feature row was replaced by source_node's original row.
    """

    cliques: list[list[int]] = dataclasses.field(default_factory=list)
    swaps: list[tuple[int, int]] = dataclasses.field(default_factory=list)

    def anomaly_nodes(self) -> list[int]:
        out = [v for clique in self.cliques for v in clique]
        out.extend(node for node, _ in self.swaps)
        return out


def inject_anomalies(graph: Graph, cfg: InjectionConfig,
                     rng: np.random.Generator) -> tuple[Graph, Manifest]:
    """Inject synthetic anomalies and label them.

    Returns a new labeled graph (the input is never mutated) plus the
    manifest of planted cliques and feature swaps. Structural anomalies
    only gain edges; attributive anomalies only change features; the two
    node sets are disjoint. Feature-swap distances are measured against
    the pre-injection feature matrix.
    """
    n = graph.n_nodes
    if graph.labels is not None:
        raise DataError("refusing to inject into an already-labeled graph")
    n_struct = cfg.n_cliques * cfg.clique_size
    total = n_struct + cfg.attr_count
    if total > n:
        raise DataError(f"cannot inject {total} anomalies into {n} nodes")
    manifest = Manifest()
    labels = np.zeros(n, dtype=np.int8)
    if total == 0:
        return graph.with_labels(labels), manifest

    chosen = rng.choice(n, size=total, replace=False)
    struct_nodes = chosen[:n_struct].reshape(cfg.n_cliques, cfg.clique_size) \
        if n_struct else np.empty((0, cfg.clique_size), dtype=np.int64)
    attr_nodes = chosen[n_struct:]

    edges = graph.edge_set()
    for clique in struct_nodes:
        members = sorted(int(v) for v in clique)
        manifest.cliques.append(members)
        for i, u in enumerate(members):
            for v in members[i + 1:]:
                edges.add((u, v))

    original = graph.features       # snapshot; swaps never see each other
    features = graph.features.copy()
    pool = min(cfg.candidate_pool, n - 1)
    for v in attr_nodes:
        v = int(v)
        cand = rng.choice(n - 1, size=pool, replace=False)
        cand[cand >= v] += 1        # uniform over all nodes except v
        dist = np.linalg.norm(original[cand] - original[v], axis=1)
        source = int(cand[int(np.argmax(dist))])
        features[v] = original[source]
        manifest.swaps.append((v, source))

    labels[chosen] = 1
    return from_edges(n, edges, features, labels), manifest


def write_manifest(path, manifest: Manifest) -> None:
    """TSV manifest: `STRUCT clique_idx node` and `ATTR node source` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        for ci, members in enumerate(manifest.cliques):
            for v in members:
                fh.write(f"STRUCT\t{ci}\t{v}\n")
        for node, source in manifest.swaps:
            fh.write(f"ATTR\t{node}\t{source}\n")


def read_manifest(path) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing {path}")
    manifest = Manifest()
    cliques: dict[int, list[int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 columns")
            kind, a, b = parts[0], int(parts[1]), int(parts[2])
            if kind == "STRUCT":
                cliques.setdefault(a, []).append(b)
            elif kind == "ATTR":
                manifest.swaps.append((a, b))
            else:
                raise DataError(f"{path}:{lineno}: unknown row kind {kind!r}")
    manifest.cliques = [cliques[i] for i in sorted(cliques)]
    return manifest


@dataclasses.dataclass
class RocCurve:
    """ROC curve over unique score thresholds, from (0,0) to (1,1)."""

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> RocCurve:
    """Tie-aware ROC curve and AUC.

    Tied scores form a single threshold step, so the trapezoidal area of
    the stored curve equals the rank statistic with half credit for
    ties: the probability that a random anomaly outranks a random normal
    node.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be aligned vectors")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    pos = int(labels.sum())
    neg = labels.shape[0] - pos
    if pos == 0 or neg == 0:
        raise DataError("AUC needs both an anomaly and a normal node")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    is_pos = labels[order] == 1
    # last index of every tie group
    last = np.nonzero(np.append(s[:-1] != s[1:], True))[0]
    cum_tp = np.cumsum(is_pos)[last]
    cum_fp = np.cumsum(~is_pos)[last]
    tpr = np.concatenate(([0.0], cum_tp / pos))
    fpr = np.concatenate(([0.0], cum_fp / neg))
    thresholds = np.concatenate(([np.inf], s[last]))
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(thresholds=thresholds, tpr=tpr, fpr=fpr, auc=auc)


def write_roc(path, curve: RocCurve) -> None:
    """TSV curve: one `threshold fpr tpr` line per point."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# threshold\tfpr\ttpr\n")
        for t, f, r in zip(curve.thresholds, curve.fpr, curve.tpr):
            fh.write(f"{float(t)!r}\t{float(f)!r}\t{float(r)!r}\n")


@dataclasses.dataclass
class ToyBenchmark:
    """A planted-anomaly fixture plus everything needed to audit it."""

    graph: Graph        # labeled, post-injection
    manifest: Manifest
    clean: Graph        # pre-injection background


def make_toy_benchmark(n: int, seed: int, d: int = 32, clusters: int = 4,
                       clique_size: int = 5, n_cliques: int = 1,
                       n_attr: int | None = 5, candidate_pool: int = 10,
                       p_in: float | None = None, p_out: float | None = None,
                       ) -> ToyBenchmark:
    """Small deterministic planted-anomaly benchmark.

    The background is a sparse per-cluster Erdos-Renyi graph whose
    feature clusters coincide with its edge clusters (denser inside than
    across), so attribute swaps genuinely contradict their context.
    Cluster prototypes are sparse, nonnegative, and equal-norm: the
    decoder's rectified output can actually reach them, and no cluster
    is penalized for sheer feature magnitude.

    Parameters
    ----------
    n : int
        Node count.
    seed : int
        Fixture seed; identical seeds reproduce identical benchmarks.
    d, clusters : int
        Feature dimension and cluster count.
    clique_size, n_cliques, n_attr, candidate_pool :
        Injection protocol knobs (see :class:`InjectionConfig`).
    p_in, p_out : float, optional
        Within/across-cluster edge probabilities; defaults target mean
        within-degree about 6 and cross-degree about 1.
    """
    if n < clusters:
        raise ValueError("need at least one node per cluster")
    rng = stream(TOY_STREAM, seed)
    csize = n / clusters
    if p_in is None:
        p_in = min(1.0, 6.0 / max(1.0, csize - 1.0))
    if p_out is None:
        p_out = 1.0 / n
    member = np.arange(n) % clusters
    rng.shuffle(member)
    means = rng.uniform(1.0, 4.0, size=(clusters, d))
    means *= rng.random((clusters, d)) < 0.3
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    if np.any(norms == 0.0):   # an all-masked prototype row cannot be rescaled
        raise NumericError("degenerate cluster prototype; use a larger d")
    means *= 6.0 / norms
    features = np.maximum(
        0.0, means[member] + rng.normal(0.0, 0.1, size=(n, d)))
    same = member[:, None] == member[None, :]
    prob = np.where(same, p_in, p_out)
    draw = rng.random((n, n))
    iu, ju = np.triu_indices(n, k=1)
    mask = draw[iu, ju] < prob[iu, ju]
    clean = from_edges(n, zip(iu[mask].tolist(), ju[mask].tolist()), features)
    cfg = InjectionConfig(clique_size=clique_size, n_cliques=n_cliques,
                          n_attr=n_attr, candidate_pool=candidate_pool, seed=seed)
    graph, manifest = inject_anomalies(clean, cfg, rng)
    return ToyBenchmark(graph=graph, manifest=manifest, clean=clean)
