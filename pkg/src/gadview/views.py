"""Contextual subgraph views sampled by random walk with restart.

Each training/scoring example observes a target node through small
subgraphs ("views") gathered by a restarting random walk around it. The
target sits at the last position of every view and its feature row is
zeroed (anonymized) so downstream modules see only its context.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .graph import (DataError, Graph, NormalizedAdj, normalize_adjacency,
                    subgraph)


def stream(*key: int) -> np.random.Generator:
    """Deterministic generator for a namespaced integer key.

    Every independently consumable random stream in the pipeline is
    derived as ``stream(channel, seed, ...)`` so runs are reproducible
    and per-target streams are independent of iteration order.
    """
    return np.random.default_rng(list(key))


@dataclasses.dataclass(frozen=True)
class SamplerConfig:
    """Knobs of the view sampler.

    k: nodes per view (the walk stops after k distinct visits).
    restart_prob: probability of teleporting back to the target per step.
    max_steps: walk-step budget; short walks yield smaller views.
    rng_seed: base seed recorded for provenance.
    """

    k: int = 4
    restart_prob: float = 0.15
    max_steps: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("view size k must be >= 1")
        if not 0.0 < self.restart_prob < 1.0:
            raise ValueError("restart_prob must lie strictly in (0, 1)")
        if self.max_steps is not None and self.max_steps < self.k:
            raise ValueError("max_steps must be at least k")

    @property
    def step_budget(self) -> int:
        return 10 * self.k if self.max_steps is None else self.max_steps


@dataclasses.dataclass(frozen=True)
class SubgraphView:
    """One sampled view: target last, target feature row zeroed."""

    target: int
    nodes: np.ndarray          # (K,) parent-graph ids, target at [-1]
    adj_norm: NormalizedAdj    # (K, K) normalized induced adjacency
    features: np.ndarray       # (K, D) with features[-1, :] == 0

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def validate(self) -> None:
        if self.nodes[-1] != self.target:
            raise DataError("target must occupy the last slot")
        if np.any(self.features[-1] != 0.0):
            raise DataError("target row must be anonymized (all zero)")
        if self.adj_norm.matrix.shape != (self.size, self.size):
            raise DataError("adjacency shape mismatch")


def _walk_distinct(graph: Graph, target: int, cfg: SamplerConfig,
                   rng: np.random.Generator) -> list[int]:
    """First-visit order of distinct nodes reached by RWR from target."""
    if cfg.k == 1 or graph.degree(target) == 0:
        return [target]
    budget = cfg.step_budget
    # one batched draw per kind keeps the per-step cost low
    coins = rng.random(budget)
    picks = rng.random(budget)
    seen = {target}
    order = [target]
    current = target
    for step in range(budget):
        if coins[step] < cfg.restart_prob:
            current = target
            continue
        nbrs = graph.neighbors(current)
        if nbrs.size == 0:          # unreachable in a symmetric graph; guard anyway
            current = target
            continue
        j = min(int(picks[step] * nbrs.size), nbrs.size - 1)
        current = int(nbrs[j])
        if current not in seen:
            seen.add(current)
            order.append(current)
            if len(order) == cfg.k:
                break
    return order


def sample_view(graph: Graph, target: int, cfg: SamplerConfig,
                rng: np.random.Generator) -> SubgraphView:
    """Sample one anonymized view of ``target``.

    The walk steps to a uniformly random neighbor, restarting at the
    target with probability ``cfg.restart_prob`` per step, and collects
    the first ``cfg.k`` distinct visited nodes (the target counts). If
    the step budget runs out first the view is simply smaller; it is
    never padded. Node order is first-visit order with the target moved
    to the last slot.
    """
    order = _walk_distinct(graph, target, cfg, rng)
    nodes = np.array([v for v in order if v != target] + [target], dtype=np.int64)
    feats, adj = subgraph(graph, nodes)
    feats[-1, :] = 0.0
    return SubgraphView(target=target, nodes=nodes,
                        adj_norm=normalize_adjacency(adj, source=f"target:{target}"),
                        features=feats)


def sample_view_pair(graph: Graph, target: int, cfg: SamplerConfig,
                     rng: np.random.Generator) -> tuple[SubgraphView, SubgraphView]:
    """Two independent views of the same target from one stream."""
    return sample_view(graph, target, cfg, rng), sample_view(graph, target, cfg, rng)


def random_derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random permutation of ``range(n)`` without fixed points."""
    if n < 2:
        raise DataError("a derangement needs at least 2 elements")
    idx = np.arange(n)
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == idx):
            return perm


def negative_assignment(n: int, rng: np.random.Generator,
                        ratio: int = 1) -> np.ndarray:
    """``(ratio, n)`` partner indices; each row a derangement.

    Rows are mutually distinct per column, so with ratio > 1 every
    target receives that many different partners.
    """
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    if ratio > n - 1:
        raise DataError("ratio cannot exceed n-1 distinct partners")
    rows = [random_derangement(n, rng)]
    attempts = 0
    while len(rows) < ratio:
        cand = random_derangement(n, rng)
        if all(not np.any(cand == prev) for prev in rows):
            rows.append(cand)
        else:
            attempts += 1
            if attempts > 1000:
                raise RuntimeError("could not draw distinct negative partners")
    return np.stack(rows)


def sample_negative_views(batch_views: list[tuple[SubgraphView, SubgraphView]],
                          rng: np.random.Generator,
                          ) -> list[tuple[SubgraphView, SubgraphView]]:
    """Assign every target another target's view pair as its negative.

    The assignment is a fixed-point-free permutation of the batch, so no
    target is ever contrasted against its own views. Raises on batches
    of fewer than two targets.
    """
    if len(batch_views) < 2:
        raise DataError("negative sampling needs a batch of at least 2 targets")
    perm = random_derangement(len(batch_views), rng)
    return [batch_views[j] for j in perm]
