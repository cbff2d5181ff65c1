"""Converters from published raw formats into dataset directories.

Citation benchmarks are commonly distributed as two plain-text files:
a ``.content`` file with ``<paper_id> <tab-separated features> <class>``
lines and a ``.cites`` file with ``<cited> <tab> <citing>`` lines. The
converter maps paper ids to dense 0-based node ids in file order and
writes the ``edges.tsv``/``features.tsv`` pair this package loads
(class labels are discarded; anomaly labels come from injection).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .graph import DataError, from_edges, save_graph


def convert_linqs(content_path, cites_path, out_dir) -> dict:
    """Convert a LINQS-style citation dataset to a dataset directory.

    Returns a summary dict with node/feature/edge counts and the number
    of citation lines skipped (unknown ids or self-citations).
    """
    content_path, cites_path = Path(content_path), Path(cites_path)
    if not content_path.is_file():
        raise DataError(f"missing {content_path}")
    if not cites_path.is_file():
        raise DataError(f"missing {cites_path}")

    index: dict[str, int] = {}
    rows = []
    with open(content_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.strip().split("\t")
            if len(parts) < 3:
                raise DataError(f"{content_path}:{lineno}: expected id, features, class")
            pid = parts[0]
            if pid in index:
                raise DataError(f"{content_path}:{lineno}: duplicate id {pid!r}")
            if rows and len(parts) - 2 != len(rows[0]):
                raise DataError(f"{content_path}:{lineno}: inconsistent feature count")
            index[pid] = len(rows)
            try:
                rows.append([float(v) for v in parts[1:-1]])
            except ValueError as exc:
                raise DataError(f"{content_path}:{lineno}: non-numeric feature") from exc
    features = np.array(rows, dtype=np.float64)

    edges = []
    skipped = 0
    with open(cites_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.strip().split("\t")
            if len(parts) != 2:
                raise DataError(f"{cites_path}:{lineno}: expected two ids")
            u, v = index.get(parts[0]), index.get(parts[1])
            if u is None or v is None or u == v:
                skipped += 1      # dangling reference or self-citation
                continue
            edges.append((u, v))

    graph = from_edges(len(rows), edges, features)
    save_graph(graph, out_dir)
    return {"nodes": graph.n_nodes, "features": graph.n_features,
            "edges": graph.n_edges, "skipped": skipped}
