"""Attributed-graph container, TSV dataset I/O, and adjacency normalization.

A dataset directory holds three tab-separated files:

``edges.tsv``
    One undirected edge per line as ``u<TAB>v`` with 0-based node ids.
    Blank lines and lines starting with ``#`` are ignored. Duplicate and
    reversed declarations collapse to a single undirected edge.
``features.tsv``
    Line ``i`` holds the D tab-separated real feature values of node ``i``.
    The number of lines defines the node count N.
``labels.tsv`` (optional)
    One ``0`` or ``1`` per line, N lines; ``1`` marks an anomaly.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """A dataset directory or file violates the format contract."""


class NumericError(ArithmeticError):
    """A computation produced non-finite numbers."""


@dataclasses.dataclass(frozen=True)
class Graph:
    """Undirected attributed graph stored as CSR neighbor lists.

    Parameters
    ----------
    indptr : numpy.ndarray
        ``(N+1,)`` int64 row pointers into ``indices``.
    indices : numpy.ndarray
        Flattened neighbor lists, sorted per node; every undirected edge
        appears in both directions. Self-loops are never stored.
    features : numpy.ndarray
        ``(N, D)`` float64 feature matrix.
    labels : numpy.ndarray or None
        Optional ``(N,)`` int8 binary anomaly flags.
    """

    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_edges(self) -> int:
        """Number of undirected edges."""
        return self.indices.shape[0] // 2

    def neighbors(self, node: int) -> np.ndarray:
        """Sorted neighbor ids of ``node`` (a read-only view)."""
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    def degree(self, node: int) -> int:
        return int(self.indptr[node + 1] - self.indptr[node])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edge_set(self) -> set[tuple[int, int]]:
        """All edges as ``(u, v)`` tuples with ``u < v``."""
        out = set()
        for u in range(self.n_nodes):
            for v in self.neighbors(u):
                if u < v:
                    out.add((u, int(v)))
        return out

    def with_features(self, features: np.ndarray) -> "Graph":
        """Copy of the graph with a replacement feature matrix."""
        if features.shape != self.features.shape:
            raise ValueError("replacement features must keep the same shape")
        return Graph(self.indptr, self.indices, np.asarray(features, dtype=np.float64),
                     self.labels)

    def with_labels(self, labels: np.ndarray) -> "Graph":
        """Copy of the graph with anomaly labels attached."""
        labels = np.asarray(labels, dtype=np.int8)
        if labels.shape != (self.n_nodes,):
            raise ValueError("labels must be one flag per node")
        return Graph(self.indptr, self.indices, self.features, labels)

    def validate(self) -> None:
        """Check the structural invariants; raise ``DataError`` on violation."""
        n = self.n_nodes
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0:
            raise DataError("malformed CSR index")
        if not np.all(np.diff(self.indptr) >= 0):
            raise DataError("CSR row pointers must be nondecreasing")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n):
            raise DataError("neighbor id out of range")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features must be finite")
        for u in range(n):
            nbrs = self.neighbors(u)
            if np.any(nbrs == u):
                raise DataError(f"self-loop stored at node {u}")
            if nbrs.size > 1 and not np.all(np.diff(nbrs) > 0):
                raise DataError(f"neighbor list of node {u} not sorted/unique")
        # symmetry: every (u, v) must have the reverse entry
        for u in range(n):
            for v in self.neighbors(u):
                row = self.neighbors(int(v))
                at = np.searchsorted(row, u)
                if at >= row.size or row[at] != u:
                    raise DataError(f"edge {u}->{v} lacks its reverse")
        if self.labels is not None:
            if self.labels.shape != (n,):
                raise DataError("label count must match node count")
            if not np.isin(self.labels, (0, 1)).all():
                raise DataError("labels must be 0 or 1")


def from_edges(n_nodes: int, edges, features: np.ndarray,
               labels: np.ndarray | None = None) -> Graph:
    """Build a :class:`Graph` from an undirected edge list.

    Parameters
    ----------
    n_nodes : int
        Node count; every endpoint must be in ``[0, n_nodes)``.
    edges : iterable of (int, int)
        Undirected edges; duplicates and reversed copies are merged.
    features : numpy.ndarray
        ``(n_nodes, D)`` real matrix.
    labels : numpy.ndarray, optional
        Binary anomaly flags.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != n_nodes:
        raise DataError("features must be a 2-D matrix with one row per node")
    if not np.all(np.isfinite(features)):
        raise DataError("features must be finite")
    pairs = set()
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise DataError(f"self-loop {u}-{v} not allowed")
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise DataError(f"edge {u}-{v} references a node outside 0..{n_nodes - 1}")
        pairs.add((min(u, v), max(u, v)))
    both = np.empty((2 * len(pairs), 2), dtype=np.int64)
    if pairs:
        arr = np.array(sorted(pairs), dtype=np.int64)
        both[: len(pairs)] = arr
        both[len(pairs):] = arr[:, ::-1]
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(indptr, both[:, 0] + 1, 1)
    indptr = np.cumsum(indptr)
    g = Graph(indptr, both[:, 1].copy(), features,
              None if labels is None else np.asarray(labels, dtype=np.int8))
    g.validate()
    return g


def _read_edge_file(path: Path) -> list[tuple[int, int]]:
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'u<TAB>v', got {line!r}")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-integer node id") from exc
    return edges


def load_graph(dir_path) -> Graph:
    """Load a dataset directory into a :class:`Graph`.

    Parameters
    ----------
    dir_path : path-like
        Directory containing ``edges.tsv`` and ``features.tsv``
        (``labels.tsv`` optional).

    Returns
    -------
    Graph

    Raises
    ------
    DataError
        On missing files, ragged or non-finite features, ids outside
        ``0..N-1``, self-loops, or labels outside {0, 1}.
    """
    d = Path(dir_path)
    feat_path = d / "features.tsv"
    edge_path = d / "edges.tsv"
    if not feat_path.is_file():
        raise DataError(f"missing {feat_path}")
    if not edge_path.is_file():
        raise DataError(f"missing {edge_path}")
    rows = []
    width = None
    with open(feat_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line and lineno == 1:
                raise DataError(f"{feat_path}: empty feature file")
            if not line:
                continue
            vals = line.split("\t")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataError(f"{feat_path}:{lineno}: ragged row "
                                f"({len(vals)} values, expected {width})")
            try:
                rows.append([float(v) for v in vals])
            except ValueError as exc:
                raise DataError(f"{feat_path}:{lineno}: non-numeric value") from exc
    features = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise DataError(f"{feat_path}: non-finite feature value")
    n = features.shape[0]

    labels = None
    lab_path = d / "labels.tsv"
    if lab_path.is_file():
        raw = [ln.strip() for ln in open(lab_path, encoding="utf-8") if ln.strip()]
        if len(raw) != n:
            raise DataError(f"{lab_path}: {len(raw)} labels for {n} nodes")
        if any(v not in ("0", "1") for v in raw):
            raise DataError(f"{lab_path}: labels must be 0 or 1")
        labels = np.array([int(v) for v in raw], dtype=np.int8)

    return from_edges(n, _read_edge_file(edge_path), features, labels)


def save_graph(graph: Graph, dir_path) -> None:
    """Write ``graph`` as a dataset directory (inverse of :func:`load_graph`).

    Feature values are written with shortest round-tripping decimal
    representations, so ``load_graph(save_graph(g))`` reproduces the edge
    set and feature matrix bit-exactly.
    """
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "edges.tsv", "w", encoding="utf-8") as fh:
        for u, v in sorted(graph.edge_set()):
            fh.write(f"{u}\t{v}\n")
    with open(d / "features.tsv", "w", encoding="utf-8") as fh:
        for row in graph.features:
            fh.write("\t".join(repr(float(x)) for x in row) + "\n")
    if graph.labels is not None:
        with open(d / "labels.tsv", "w", encoding="utf-8") as fh:
            fh.writelines(f"{int(v)}\n" for v in graph.labels)


@dataclasses.dataclass(frozen=True)
class NormalizedAdj:
    """Symmetrically normalized adjacency of a (sub)graph.

    ``matrix`` is dense ``(K, K)`` float64 holding
    ``D^{-1/2} (A + I) D^{-1/2}`` where ``D`` is the degree matrix of
    ``A + I``. ``source`` names the subgraph it normalizes.
    """

    matrix: np.ndarray
    source: str = ""


def normalize_adjacency(adj: np.ndarray, source: str = "") -> NormalizedAdj:
    """Symmetric degree normalization with self-loops added.

    Parameters
    ----------
    adj : numpy.ndarray
        ``(K, K)`` boolean/0-1 symmetric adjacency without self-loops.
    source : str
        Identifier recorded on the result.

    Returns
    -------
    NormalizedAdj
        Symmetric matrix with spectral radius at most 1.
    """
    a = np.asarray(adj, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DataError("adjacency must be square")
    if not np.array_equal(a, a.T):
        raise DataError("adjacency must be symmetric")
    if np.any(np.diag(a) != 0.0):
        raise DataError("adjacency must have a zero diagonal")
    a = a + np.eye(a.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return NormalizedAdj(matrix=a * inv_sqrt[:, None] * inv_sqrt[None, :],
                         source=source)


def subgraph(graph: Graph, nodes) -> tuple[np.ndarray, np.ndarray]:
    """Induced subgraph on ``nodes`` in the given order.

    Parameters
    ----------
    graph : Graph
    nodes : sequence of int
        Distinct node ids; output rows follow this order.

    Returns
    -------
    (features, adj)
        ``features`` is a ``(K, D)`` copy; ``adj`` is the dense boolean
        ``(K, K)`` induced adjacency.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    k = nodes.shape[0]
    if k and (nodes.min() < 0 or nodes.max() >= graph.n_nodes):
        raise DataError("subgraph node id out of range")
    pos = {int(v): i for i, v in enumerate(nodes)}
    if len(pos) != k:
        raise DataError("subgraph nodes must be distinct")
    adj = np.zeros((k, k), dtype=bool)
    for i, v in enumerate(nodes):
        for w in graph.neighbors(int(v)):
            j = pos.get(int(w))
            if j is not None:
                adj[i, j] = True
    return graph.features[nodes].copy(), adj
