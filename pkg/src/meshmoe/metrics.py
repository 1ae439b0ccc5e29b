"""Task metrics: instance accuracy, retrieval mAP/NDCG, segmentation accuracy.

Retrieval relevance is binary same-class membership.  AP divides the sum
of precision@k at relevant ranks (k <= cutoff) by min(total relevant,
cutoff); NDCG uses binary gains with a log2(k+1) discount.  Queries with
no relevant items score 0 in both, keeping every metric in [0, 1].
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class RetrievalResult:
    query_id: str
    ranked_ids: list          # excludes the query, no duplicates
    relevance: np.ndarray     # binary flags per rank

    def __post_init__(self):
        self.relevance = np.asarray(self.relevance, dtype=np.int64)
        if len(self.ranked_ids) != len(self.relevance):
            raise ValueError("relevance flags must match ranked ids")
        if self.query_id in self.ranked_ids:
            raise ValueError("ranking may not contain the query itself")
        if len(set(self.ranked_ids)) != len(self.ranked_ids):
            raise ValueError("duplicate ids in ranking")


def mean_instance_accuracy(predictions, targets) -> float:
    predictions = np.asarray(predictions)
    targets = np.asarray(targets)
    if predictions.shape != targets.shape:
        raise ValueError("predictions and targets must have equal length")
    if predictions.size == 0:
        raise ValueError("empty input")
    return float(np.mean(predictions == targets))


def average_precision(relevance, cutoff: int, total_relevant: int | None = None) -> float:
    """AP = sum of precision@k over relevant k <= cutoff, over the capped count."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    relevance = np.asarray(relevance, dtype=np.int64)
    if total_relevant is None:
        total_relevant = int(relevance.sum())
    if total_relevant == 0:
        return 0.0
    hits = 0
    score = 0.0
    for k, flag in enumerate(relevance[:cutoff], start=1):
        if flag:
            hits += 1
            score += hits / k
    return score / min(total_relevant, cutoff)


def mean_average_precision(results: list, cutoff: int) -> float:
    if not results:
        raise ValueError("no retrieval results")
    return float(np.mean([average_precision(r.relevance, cutoff) for r in results]))


def dcg(relevance, cutoff: int) -> float:
    relevance = np.asarray(relevance, dtype=np.float64)[:cutoff]
    if relevance.size == 0:
        return 0.0
    discounts = np.log2(np.arange(2, relevance.size + 2))
    return float((relevance / discounts).sum())


def ndcg_single(relevance, cutoff: int, total_relevant: int | None = None) -> float:
    relevance = np.asarray(relevance, dtype=np.int64)
    if total_relevant is None:
        total_relevant = int(relevance.sum())
    ideal = np.ones(min(total_relevant, cutoff), dtype=np.float64)
    idcg = dcg(ideal, cutoff)
    if idcg == 0.0:
        return 0.0
    return dcg(relevance, cutoff) / idcg


def ndcg(results: list, cutoff: int) -> float:
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    if not results:
        raise ValueError("no retrieval results")
    return float(np.mean([ndcg_single(r.relevance, cutoff) for r in results]))


def face_accuracy(predicted, truth) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError("label arrays must have equal length")
    if predicted.size == 0:
        raise ValueError("empty input")
    return float(np.mean(predicted == truth))


def edge_accuracy(predicted, truth, lengths) -> float:
    """Length-weighted fraction of correctly labeled edges."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    lengths = np.asarray(lengths, dtype=np.float64)
    if not (predicted.shape == truth.shape == lengths.shape):
        raise ValueError("label and length arrays must have equal length")
    if predicted.size == 0:
        raise ValueError("empty input")
    if np.any(lengths <= 0.0):
        raise ValueError("edge lengths must be positive")
    return float((lengths * (predicted == truth)).sum() / lengths.sum())


def rank_by_distance(query_id: str, query_descriptor: np.ndarray,
                     corpus: dict) -> list:
    """Sort corpus ids by Euclidean distance ascending, ties by mesh_id.

    `corpus` maps mesh_id to descriptor; the query id is excluded.
    Returns [(mesh_id, distance), ...].
    """
    entries = []
    for mesh_id in corpus:
        if mesh_id == query_id:
            continue
        distance = float(np.linalg.norm(np.asarray(corpus[mesh_id]) - query_descriptor))
        entries.append((distance, mesh_id))
    entries.sort()
    return [(mesh_id, distance) for distance, mesh_id in entries]


def retrieval_results(descriptors: dict, labels: dict) -> list:
    """All-queries RetrievalResult list from descriptor and label maps."""
    results = []
    for query_id in sorted(descriptors):
        ranking = rank_by_distance(query_id, np.asarray(descriptors[query_id]),
                                   descriptors)
        ranked_ids = [mesh_id for mesh_id, _ in ranking]
        relevance = [int(labels[mesh_id] == labels[query_id]) for mesh_id in ranked_ids]
        results.append(RetrievalResult(query_id=query_id, ranked_ids=ranked_ids,
                                       relevance=relevance))
    return results
