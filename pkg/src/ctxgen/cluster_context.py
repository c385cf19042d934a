"""Word-clustering context extraction.

Embeddings are grouped with Lloyd's k-means (k-means++ seeding, Euclidean
distance); a sentence's context is the cluster whose center has the highest
cosine similarity to the accumulated sentence vector, encoded as a
bag-of-words over the cluster's top representative tokens.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import ContextVector, Vocabulary
from .embedding import EmbeddingSpace, accumulate
from .errors import ConfigurationError, ZeroVectorError

COSINE = "cosine"
EUCLIDEAN = "euclidean"


@dataclass
class ClusterModel:
    """k cluster centers plus member tokens and top representatives."""

    centers: np.ndarray  # (k, dim)
    members: list[np.ndarray]  # token ids per center, ascending
    top_words: list[list[int]]  # per center, ids by descending closeness
    n_top: int
    space_checksum: str
    wcss_history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.centers)


def _pairwise_sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(points**2, axis=1)[:, None]
        + np.sum(centers**2, axis=1)[None, :]
        - 2.0 * points @ centers.T
    )
    return np.maximum(sq, 0.0)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = np.empty((k, points.shape[1]), dtype=points.dtype)
    centers[0] = points[rng.integers(n)]
    closest = _pairwise_sq_dists(points, centers[:1]).ravel()
    for j in range(1, k):
        probs = closest / closest.sum() if closest.sum() > 0 else None
        idx = rng.choice(n, p=probs)
        centers[j] = points[idx]
        closest = np.minimum(closest, _pairwise_sq_dists(points, centers[j : j + 1]).ravel())
    return centers


def _rank_by_closeness(
    ids: np.ndarray, points: np.ndarray, center: np.ndarray, metric: str
) -> list[int]:
    if metric == EUCLIDEAN or np.linalg.norm(center) == 0.0:
        key = np.linalg.norm(points - center, axis=1)
    else:
        norms = np.linalg.norm(points, axis=1)
        sims = points @ center / (np.maximum(norms, 1e-300) * np.linalg.norm(center))
        key = -sims
    order = np.lexsort((ids, key))  # closeness first, then lower id on ties
    return [int(ids[i]) for i in order]


def kmeans(
    space: EmbeddingSpace,
    k: int = 100,
    max_iters: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
    n_top: int = 5,
    spherical: bool = False,
    top_metric: str = COSINE,
) -> ClusterModel:
    """Cluster the embedding space with Lloyd's algorithm.

    Seeding is k-means++ from ``seed``; iteration stops when no center moves
    more than ``tol`` or after ``max_iters`` rounds.  A cluster left empty is
    re-seeded to the point currently farthest from its own assigned center.
    ``spherical=True`` normalizes vectors before clustering.
    """
    ids = space.covered_ids
    if len(ids) < k:
        raise ConfigurationError(f"{len(ids)} embeddable tokens < k={k}")
    if top_metric not in (COSINE, EUCLIDEAN):
        raise ConfigurationError(f"unknown top-word metric {top_metric!r}")
    points = space.vectors[ids].copy()
    if spherical:
        norms = np.linalg.norm(points, axis=1, keepdims=True)
        points /= np.maximum(norms, 1e-300)

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, k, rng)
    wcss_history = []
    labels = np.zeros(len(points), dtype=np.intp)
    for _ in range(max_iters):
        dists = _pairwise_sq_dists(points, centers)
        labels = np.argmin(dists, axis=1)
        wcss_history.append(float(dists[np.arange(len(points)), labels].sum()))

        new_centers = centers.copy()
        for j in range(k):
            mask = labels == j
            if mask.any():
                new_centers[j] = points[mask].mean(axis=0)
        empties = [j for j in range(k) if not (labels == j).any()]
        if empties:
            # Steal the point farthest from its assigned center, one per
            # empty cluster, never the same point twice.
            point_dists = dists[np.arange(len(points)), labels].copy()
            for j in empties:
                far = int(np.argmax(point_dists))
                new_centers[j] = points[far]
                point_dists[far] = -np.inf
        movement = np.linalg.norm(new_centers - centers, axis=1).max()
        centers = new_centers
        if movement < tol:
            break

    dists = _pairwise_sq_dists(points, centers)
    labels = np.argmin(dists, axis=1)
    wcss_history.append(float(dists[np.arange(len(points)), labels].sum()))

    members = []
    top_words = []
    for j in range(k):
        mask = labels == j
        member_ids = ids[mask]
        members.append(member_ids)
        ranked = _rank_by_closeness(member_ids, points[mask], centers[j], top_metric)
        top_words.append(ranked[: min(n_top, len(ranked))])

    return ClusterModel(
        centers=centers,
        members=members,
        top_words=top_words,
        n_top=n_top,
        space_checksum=space.checksum(),
        wcss_history=wcss_history,
    )


def center_similarities(vec: np.ndarray, model: ClusterModel) -> np.ndarray:
    """Cosine of ``vec`` against every center; zero-norm centers get -inf."""
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ZeroVectorError("accumulated sentence vector has zero norm")
    center_norms = np.linalg.norm(model.centers, axis=1)
    sims = np.full(model.k, -np.inf)
    ok = center_norms > 0
    sims[ok] = model.centers[ok] @ vec / (center_norms[ok] * norm)
    return sims


def nearest_center(sentence, space: EmbeddingSpace, model: ClusterModel) -> int:
    """Index of the center most cosine-similar to the accumulated sentence.

    Equivalently the minimum cosine distance; ties break to the lowest
    center index.
    """
    return int(np.argmax(center_similarities(accumulate(sentence, space), model)))


def context_of(
    sentence,
    space: EmbeddingSpace,
    model: ClusterModel,
    vocab: Vocabulary,
    n_top: int | None = None,
) -> ContextVector:
    """Bag-of-words context over the nearest cluster's top tokens."""
    j = nearest_center(sentence, space, model)
    if n_top is None or n_top == model.n_top:
        chosen = model.top_words[j]
    else:
        ranked = _rank_by_closeness(
            model.members[j], space.vectors[model.members[j]], model.centers[j], COSINE
        )
        chosen = ranked[: min(n_top, len(ranked))]
    return ContextVector.bag_of_words(chosen, vocab.size)


def save_clusters(model: ClusterModel, path: str) -> None:
    """Write header ``k dim n_top checksum`` then 3 lines per center."""
    with open(path, "w", encoding="utf-8") as fh:
        dim = model.centers.shape[1]
        fh.write(f"{model.k} {dim} {model.n_top} {model.space_checksum}\n")
        for j in range(model.k):
            fh.write(" ".join(f"{x:.9g}" for x in model.centers[j]) + "\n")
            fh.write(" ".join(str(int(i)) for i in model.members[j]) + "\n")
            fh.write(" ".join(str(int(i)) for i in model.top_words[j]) + "\n")


def load_clusters(path: str) -> ClusterModel:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise ConfigurationError(f"{path} is not a cluster model file")
        k, dim, n_top, checksum = int(header[0]), int(header[1]), int(header[2]), header[3]
        centers = np.zeros((k, dim), dtype=np.float64)
        members = []
        top_words = []
        for j in range(k):
            centers[j] = [float(x) for x in fh.readline().split()]
            members.append(np.array([int(i) for i in fh.readline().split()], dtype=np.int64))
            top_words.append([int(i) for i in fh.readline().split()])
    return ClusterModel(
        centers=centers,
        members=members,
        top_words=top_words,
        n_top=n_top,
        space_checksum=checksum,
    )
