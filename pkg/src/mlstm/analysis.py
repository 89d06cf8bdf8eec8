"""Clustering, neighbour queries and export of learned user embeddings."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParseError
from .ingestion import BENIGN, VANDAL
from .model import forward_user
from .numerics import DTYPE

NOISE = -1


@dataclass
class UserEmbedding:
    user_id: str
    label: str | None
    vector: np.ndarray


def embed_users(params, aspect_list):
    """The fused embedding of every user (final step of each sequence)."""
    return [UserEmbedding(a.user_id, a.label, forward_user(a, params).s) for a in aspect_list]


def _matrix(points):
    if not points:
        return np.zeros((0, 0), dtype=DTYPE)
    X = np.stack([np.asarray(p.vector, dtype=DTYPE) for p in points])
    if X.ndim != 2:
        raise DimensionError("embeddings must all have the same dimension")
    if not np.all(np.isfinite(X)):
        raise ValueError("embeddings contain non-finite entries")
    return X


@dataclass
class ClusteringResult:
    """``cluster_ids[i]`` belongs to ``user_ids[i]`` (input order); -1 is noise."""

    user_ids: list
    labels: list
    cluster_ids: list
    eps: float
    min_pts: int

    @property
    def n_clusters(self):
        return len({c for c in self.cluster_ids if c != NOISE})

    def members(self):
        groups = {}
        for uid, cid in zip(self.user_ids, self.cluster_ids):
            if cid != NOISE:
                groups.setdefault(cid, []).append(uid)
        return groups

    def composition(self):
        """Per cluster, a Counter of user labels."""
        comp = {}
        for label, cid in zip(self.labels, self.cluster_ids):
            if cid != NOISE:
                comp.setdefault(cid, Counter())[label] += 1
        return comp

    def summary(self):
        comp = self.composition()
        pure_v = [c for c in comp.values() if set(c) == {VANDAL}]
        pure_b = [c for c in comp.values() if set(c) == {BENIGN}]
        mixed = [c for c in comp.values() if c[VANDAL] and c[BENIGN]]
        return {
            "clusters": len(comp),
            "clustered_users": sum(sum(c.values()) for c in comp.values()),
            "noise": self.cluster_ids.count(NOISE),
            "vandal_only_clusters": len(pure_v),
            "vandals_in_vandal_only": sum(c[VANDAL] for c in pure_v),
            "benign_only_clusters": len(pure_b),
            "benign_in_benign_only": sum(c[BENIGN] for c in pure_b),
            "mixed_clusters": len(mixed),
            "mixed_vandal_majority": sum(c[VANDAL] > c[BENIGN] for c in mixed),
            "mixed_benign_majority": sum(c[BENIGN] > c[VANDAL] for c in mixed),
        }


def dbscan(points, eps, min_pts):
    """Classic DBSCAN with Euclidean distance and closed neighbourhoods (d <= eps).

    A point's neighbourhood includes itself. Points are visited in
    ascending ``user_id`` order, so cluster numbering and the assignment of
    border points reachable from several clusters do not depend on input
    order. With ``eps=0`` clusters are groups of bit-identical vectors.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    n = len(points)
    if n == 0:
        return ClusteringResult([], [], [], eps, min_pts)
    X = _matrix(points)
    order = sorted(range(n), key=lambda i: points[i].user_id)
    X = X[order]

    def neighbours(i):
        diff = X - X[i]
        return np.flatnonzero(np.sqrt(np.einsum("ij,ij->i", diff, diff)) <= eps)

    cluster = np.full(n, NOISE, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    next_id = 0
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        nbrs = neighbours(i)
        if len(nbrs) < min_pts:
            continue
        cluster[i] = next_id
        queue = list(nbrs)
        k = 0
        while k < len(queue):
            j = queue[k]
            k += 1
            if cluster[j] == NOISE:
                cluster[j] = next_id
            if visited[j]:
                continue
            visited[j] = True
            nbrs_j = neighbours(j)
            if len(nbrs_j) >= min_pts:
                queue.extend(nbrs_j)
        next_id += 1

    cluster_ids = [NOISE] * n
    for pos, i in enumerate(order):
        cluster_ids[i] = int(cluster[pos])
    return ClusteringResult([p.user_id for p in points], [p.label for p in points],
                            cluster_ids, eps, min_pts)


def cosine_similarity(a, b):
    """Cosine similarity; 0.0 if either vector is zero."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def cosine_neighbors(points, query_id, k):
    """Top-``k`` users most cosine-similar to ``query_id`` (query excluded).

    Ties are broken by ascending user_id.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    query = next((p for p in points if p.user_id == query_id), None)
    if query is None:
        raise KeyError(f"unknown user {query_id!r}")
    scored = [(p.user_id, cosine_similarity(query.vector, p.vector))
              for p in points if p.user_id != query_id]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


EMBEDDING_HEADER = ("user_id", "label")


def export_embeddings(points, destination):
    """Write a TSV (header + one row per user, 17 significant digits); returns the row count."""
    dim = len(points[0].vector) if points else 0
    lines = ["\t".join(EMBEDDING_HEADER + tuple(f"e{i}" for i in range(dim)))]
    for p in points:
        if len(p.vector) != dim:
            raise DimensionError("embeddings must all have the same dimension")
        lines.append("\t".join([p.user_id, p.label or ""] + [f"{v:.17g}" for v in p.vector]))
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return len(points)


def parse_embeddings(lines, source=None):
    points = []
    dim = None
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if lineno == 1:
            header = line.split("\t")
            if tuple(header[:2]) != EMBEDDING_HEADER:
                raise ParseError("missing user_id/label header", lineno, source)
            dim = len(header) - 2
            continue
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != dim + 2:
            raise ParseError(f"expected {dim + 2} fields, found {len(parts)}", lineno, source)
        try:
            vec = np.array([float(v) for v in parts[2:]], dtype=DTYPE)
        except ValueError as exc:
            raise ParseError(f"bad number: {exc}", lineno, source) from None
        points.append(UserEmbedding(parts[0], parts[1] or None, vec))
    return points


def read_embeddings(path):
    with open(path, encoding="utf-8") as fh:
        return parse_embeddings(fh, source=str(path))


def cluster_report(result):
    lines = ["user_id\tcluster_id\tlabel"]
    for uid, cid, label in zip(result.user_ids, result.cluster_ids, result.labels):
        lines.append(f"{uid}\t{cid}\t{label or ''}")
    return "\n".join(lines) + "\n"
