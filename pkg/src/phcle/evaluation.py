"""Read-only analyses of a trained model: neighbor retrieval, correlation
matrices, average-linkage ordering, and attribute-based description."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import format_float

# Vectors shorter than this are treated as zero and get similarity 0.
NORM_FLOOR = 1e-12


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between two vectors; 0 if either is (near) zero."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError(f"vectors of length {u.size} and {v.size}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu < NORM_FLOOR or nv < NORM_FLOOR:
        return 0.0
    return float(u @ v) / (nu * nv)


def _edit_distance(a: str, b: str) -> int:
    # Classic two-row Levenshtein.
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


def _unknown_label_error(name: str, candidates) -> ValueError:
    ranked = sorted(candidates, key=lambda c: (_edit_distance(name, c), c))[:5]
    hint = ", ".join(ranked) if ranked else "(vocabulary is empty)"
    return ValueError(f"label {name!r} unknown; nearest names: {hint}")


def _label_column(model, vocab, name):
    try:
        return vocab.label_index(name)
    except ValueError:
        raise _unknown_label_error(name, vocab.labels) from None


def _column_similarities(W: np.ndarray, query: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(W, axis=0)
    qnorm = float(np.linalg.norm(query))
    sims = np.zeros(W.shape[1])
    if qnorm < NORM_FLOOR:
        return sims
    ok = norms >= NORM_FLOOR
    sims[ok] = (query @ W[:, ok]) / (qnorm * norms[ok])
    return sims


def retrieve_labels(model, vocab, query: str, topk: int = 5) -> list[tuple[str, float]]:
    """The ``topk`` labels most similar to ``query`` (query excluded),
    sorted by descending cosine with ties broken by vocabulary order."""
    if topk < 0:
        raise ValueError("topk must be >= 0")
    qi = _label_column(model, vocab, query)
    sims = _column_similarities(model.W, model.W[:, qi])
    order = sorted(
        (j for j in range(len(vocab.labels)) if j != qi),
        key=lambda j: (-sims[j], j),
    )
    return [(vocab.labels[j], float(sims[j])) for j in order[:topk]]


def correlation_matrix(model, vocab, subset) -> np.ndarray:
    """Pairwise cosine similarities between the given labels' vectors.

    Exactly symmetric, with a unit diagonal wherever the vector norm is
    nonzero (zero vectors give zero rows, matching
    :func:`cosine_similarity`).
    """
    subset = list(subset)
    idx = [_label_column(model, vocab, name) for name in subset]
    cols = model.W[:, idx] if idx else np.zeros((model.dim, 0))
    norms = np.linalg.norm(cols, axis=0)
    ok = norms >= NORM_FLOOR
    N = np.zeros_like(cols)
    N[:, ok] = cols[:, ok] / norms[ok]
    M = N.T @ N
    M = 0.5 * (M + M.T)
    for i in range(len(idx)):
        M[i, i] = 1.0 if ok[i] else 0.0
    return M


def cluster_order(corr: np.ndarray, clusters: int) -> tuple[list[int], list[int]]:
    """Average-linkage agglomeration on distance ``1 - corr``.

    Returns ``(order, assignment)``: the dendrogram leaf order and the
    cluster id of every point when exactly ``clusters`` groups remain.
    Merges pick the pair with the smallest average pairwise distance,
    breaking ties by the smallest (min member index) pair; the merged
    group lists the lower-indexed side first, and assignment ids number
    the groups by their smallest member. Fully deterministic.
    """
    corr = np.asarray(corr, dtype=np.float64)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ValueError(f"correlation matrix must be square, got {corr.shape}")
    n = corr.shape[0]
    if not 1 <= clusters <= n:
        raise ValueError(f"cluster count must be in 1..{n}, got {clusters}")
    dist = 1.0 - corr

    groups: list[list[int]] = [[i] for i in range(n)]
    snapshot = [list(g) for g in groups] if clusters == n else None
    while len(groups) > 1:
        best = None
        best_key = None
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                ga, gb = groups[a], groups[b]
                d = float(np.mean(dist[np.ix_(ga, gb)]))
                lo, hi = sorted((min(ga), min(gb)))
                key = (d, lo, hi)
                if best_key is None or key < best_key:
                    best_key = key
                    best = (a, b)
        a, b = best
        if min(groups[a]) > min(groups[b]):
            a, b = b, a
        merged = groups[a] + groups[b]
        groups = [g for i, g in enumerate(groups) if i not in (a, b)]
        groups.append(merged)
        if len(groups) == clusters:
            snapshot = [list(g) for g in groups]

    order = list(groups[0]) if n else []
    assignment = [0] * n
    for cluster_id, g in enumerate(sorted(snapshot, key=min)):
        for i in g:
            assignment[i] = cluster_id
    return order, assignment


@dataclass(frozen=True)
class EmbeddingDescription:
    """Related labels with similarity percentages, plus the top attributes."""

    related: tuple[tuple[str, float], ...]
    attributes: tuple[tuple[str, float], ...]


def describe_embedding(model, vocab, w_star, coverage: float = 0.8, top_attrs: int = 6) -> EmbeddingDescription:
    """Describe an arbitrary vector in the label space.

    Related labels: cosine similarities to every label vector, negatives
    clamped to 0; the shortest descending-similarity prefix whose mass
    reaches ``coverage`` of the total is reported with percentages that
    sum to 100. Attributes: the ``top_attrs`` highest scores ``w* . U``.
    """
    w = np.asarray(w_star, dtype=np.float64).ravel()
    if w.size != model.dim:
        raise ValueError(f"vector has length {w.size}, model dimension is {model.dim}")
    if not np.isfinite(w).all():
        raise ValueError("vector contains non-finite entries")
    if not 0.0 <= coverage <= 1.0:
        raise ValueError("coverage must lie in [0, 1]")
    if top_attrs < 0:
        raise ValueError("top_attrs must be >= 0")

    sims = np.maximum(_column_similarities(model.W, w), 0.0)
    order = sorted(range(len(vocab.labels)), key=lambda j: (-sims[j], j))
    eligible = [j for j in order if sims[j] > 0.0]
    related: list[tuple[str, float]] = []
    if eligible:
        cum = np.cumsum(sims[eligible])
        total = float(cum[-1])
        target = coverage * total
        reached = np.nonzero(cum >= target)[0]
        cut = int(reached[0]) if reached.size else len(eligible) - 1
        prefix_sum = float(cum[cut])
        related = [
            (vocab.labels[j], 100.0 * float(sims[j]) / prefix_sum) for j in eligible[: cut + 1]
        ]

    scores = w @ model.U
    attr_order = sorted(range(len(vocab.attributes)), key=lambda j: (-scores[j], j))
    attributes = [(vocab.attributes[j], float(scores[j])) for j in attr_order[:top_attrs]]
    return EmbeddingDescription(related=tuple(related), attributes=tuple(attributes))


def correlation_to_tsv(labels, corr: np.ndarray) -> str:
    """Correlation matrix as TSV with a header row and column of names."""
    labels = list(labels)
    corr = np.asarray(corr, dtype=np.float64)
    if corr.shape != (len(labels), len(labels)):
        raise ValueError(f"matrix shape {corr.shape} does not match {len(labels)} labels")
    lines = ["\t".join(["label", *labels])]
    for i, name in enumerate(labels):
        lines.append("\t".join([name, *(format_float(v) for v in corr[i])]))
    return "\n".join(lines) + "\n"
