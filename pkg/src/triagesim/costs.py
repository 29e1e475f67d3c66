"""Per-developer, per-topic fixing-cost matrix.

Observed entries are plain means of historical fixing days. Missing
entries are filled by neighborhood collaborative filtering over the
developers' observed cost rows, then by topic means, then by the global
mean. Everything is clamped to at least one day; the solvers consume
whole days, so ``integer_days`` ceils on the way out.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

CF_NEIGHBORHOOD = 5
MIN_COST_DAYS = 1.0


class EmptyHistoryError(ValueError):
    """No (developer, topic, fixing time) observations at all."""


@dataclass
class CostMatrix:
    developers: List[str]
    topic_count: int
    values: np.ndarray  # D x K, float days, all >= 1
    imputed_mask: np.ndarray  # D x K bool, True where not directly observed

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.developers), self.topic_count):
            raise ValueError("matrix shape does not match developers and topics")
        if self.values.shape != self.imputed_mask.shape:
            raise ValueError("mask shape does not match matrix")
        if np.isnan(self.values).any():
            raise ValueError("matrix has missing entries after imputation")
        if (self.values < MIN_COST_DAYS).any():
            raise ValueError("matrix has entries below one day")

    def cost(self, developer: str, topic: int) -> float:
        return float(self.values[self.developers.index(developer), topic])

    def integer_days(self, developer: str, topic: int) -> int:
        return int(math.ceil(self.cost(developer, topic)))

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "cost-matrix/1",
                "developers": self.developers,
                "topic_count": self.topic_count,
                "values": self.values.tolist(),
                "imputed_mask": self.imputed_mask.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "CostMatrix":
        doc = json.loads(text)
        if doc.get("format") != "cost-matrix/1":
            raise ValueError("unrecognized cost matrix document")
        return cls(
            developers=doc["developers"],
            topic_count=doc["topic_count"],
            values=np.array(doc["values"]),
            imputed_mask=np.array(doc["imputed_mask"], dtype=bool),
        )


def _cosine_over_common(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity restricted to entries both rows observed."""
    common = ~np.isnan(a) & ~np.isnan(b)
    if not common.any():
        return 0.0
    u, v = a[common], b[common]
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v / (nu * nv))


def build_cost_matrix(
    developers: Sequence[str],
    topic_count: int,
    history: Sequence[Tuple[str, int, float]],
    neighborhood: int = CF_NEIGHBORHOOD,
) -> CostMatrix:
    """Mean observed days per (developer, topic), imputed where unseen.

    ``history`` rows are (developer id, topic index, fixing days).
    """
    developers = list(developers)
    index = {dev: i for i, dev in enumerate(developers)}
    sums = np.zeros((len(developers), topic_count))
    counts = np.zeros((len(developers), topic_count))
    for dev, topic, days in history:
        if dev not in index:
            continue
        if not 0 <= topic < topic_count:
            raise ValueError(f"topic {topic} out of range")
        if days <= 0:
            raise ValueError("fixing days must be positive")
        sums[index[dev], topic] += days
        counts[index[dev], topic] += 1
    if counts.sum() == 0:
        raise EmptyHistoryError("no usable fixing-time observations")

    observed = counts > 0
    values = np.full_like(sums, np.nan)
    values[observed] = sums[observed] / counts[observed]

    global_mean = float(np.nanmean(values))
    col_counts = observed.sum(axis=0)
    topic_means = np.where(
        col_counts > 0,
        np.nansum(np.where(observed, values, 0.0), axis=0)
        / np.maximum(col_counts, 1),
        np.nan,
    )  # nan where no developer saw the topic

    filled = values.copy()
    for d in range(len(developers)):
        for k in range(topic_count):
            if observed[d, k]:
                continue
            filled[d, k] = _impute(values, observed, d, k, neighborhood)
            if np.isnan(filled[d, k]):
                filled[d, k] = topic_means[k]
            if np.isnan(filled[d, k]):
                filled[d, k] = global_mean

    filled = np.maximum(filled, MIN_COST_DAYS)
    return CostMatrix(
        developers=developers,
        topic_count=topic_count,
        values=filled,
        imputed_mask=~observed,
    )


def _impute(
    values: np.ndarray, observed: np.ndarray, d: int, k: int, neighborhood: int
) -> float:
    """Similarity-weighted mean of the top neighbors that observed topic k."""
    sims = []
    for other in range(values.shape[0]):
        if other == d or not observed[other, k]:
            continue
        sim = _cosine_over_common(values[d], values[other])
        if sim > 0.0:
            sims.append((sim, other))
    sims.sort(key=lambda pair: (-pair[0], pair[1]))
    top = sims[:neighborhood]
    if not top:
        return float("nan")
    weight = sum(sim for sim, _ in top)
    return sum(sim * values[other, k] for sim, other in top) / weight
