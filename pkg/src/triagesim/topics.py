"""Topic modeling for fixing-cost estimation: collapsed Gibbs LDA plus
automatic topic-count selection.

The sampler runs a fixed burn-in followed by a fixed number of averaged
sweeps under a seeded generator, so a (seed, corpus order) pair fully
determines the fitted distributions. Topic-count selection minimizes the
symmetric KL divergence between the singular-value distribution of the
topic-word matrix and the topic mass induced by document lengths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

DEFAULT_BURN_IN = 500
DEFAULT_SAMPLES = 100
NORMALIZATION_TOL = 1e-9


class DegenerateCorpusError(ValueError):
    """Fewer distinct tokens than requested topics."""


@dataclass
class TopicModel:
    k: int
    vocabulary: Dict[str, int]
    topic_word: np.ndarray  # K x V, rows sum to 1
    doc_topic: np.ndarray  # D x K, rows sum to 1
    alpha: float
    beta: float
    seed: int

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError("topic count must be >= 2")
        for name, mat in (("topic_word", self.topic_word), ("doc_topic", self.doc_topic)):
            if mat.size and np.abs(mat.sum(axis=1) - 1.0).max() > NORMALIZATION_TOL:
                raise ValueError(f"{name} rows are not normalized")

    def infer_doc_topics(self, tokens: List[str], iterations: int = 30) -> np.ndarray:
        """Fold a new document in against the frozen topic-word matrix."""
        idxs = [self.vocabulary[t] for t in tokens if t in self.vocabulary]
        theta = np.full(self.k, 1.0 / self.k)
        if not idxs:
            return theta
        word_probs = self.topic_word[:, idxs]  # K x n
        for _ in range(iterations):
            resp = word_probs * theta[:, None]
            total = resp.sum(axis=0)
            total[total == 0.0] = 1.0
            resp /= total
            theta = (resp.sum(axis=1) + self.alpha) / (len(idxs) + self.k * self.alpha)
        return theta / theta.sum()

    def topic_of(self, tokens: List[str]) -> int:
        theta = self.infer_doc_topics(tokens)
        return int(np.argmax(theta))

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "topic-model/1",
                "k": self.k,
                "vocabulary": self.vocabulary,
                "topic_word": self.topic_word.tolist(),
                "doc_topic": self.doc_topic.tolist(),
                "alpha": self.alpha,
                "beta": self.beta,
                "seed": self.seed,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "TopicModel":
        doc = json.loads(text)
        if doc.get("format") != "topic-model/1":
            raise ValueError("unrecognized topic model document")
        return cls(
            k=doc["k"],
            vocabulary=doc["vocabulary"],
            topic_word=np.array(doc["topic_word"]),
            doc_topic=np.array(doc["doc_topic"]),
            alpha=doc["alpha"],
            beta=doc["beta"],
            seed=doc["seed"],
        )


def fit_topics(
    documents: Sequence[List[str]],
    k: int,
    alpha: Optional[float] = None,
    beta: float = 0.01,
    burn_in: int = DEFAULT_BURN_IN,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> TopicModel:
    """Collapsed Gibbs sampling with a fixed iteration budget and seed."""
    if not documents:
        raise ValueError("empty corpus")
    if alpha is None:
        alpha = 50.0 / k

    vocabulary: Dict[str, int] = {}
    docs_idx: List[List[int]] = []
    for tokens in documents:
        row = []
        for tok in tokens:
            if tok not in vocabulary:
                vocabulary[tok] = len(vocabulary)
            row.append(vocabulary[tok])
        docs_idx.append(row)
    V = len(vocabulary)
    if V < k:
        raise DegenerateCorpusError(f"{V} distinct tokens < {k} topics")

    rng = np.random.RandomState(seed)
    D = len(docs_idx)
    n_dk = np.zeros((D, k))
    n_kw = np.zeros((k, V))
    n_k = np.zeros(k)
    z: List[np.ndarray] = []
    for d, row in enumerate(docs_idx):
        zs = rng.randint(0, k, size=len(row))
        z.append(zs)
        for w, t in zip(row, zs):
            n_dk[d, t] += 1
            n_kw[t, w] += 1
            n_k[t] += 1

    phi_acc = np.zeros((k, V))
    theta_acc = np.zeros((D, k))
    kept = 0
    for sweep in range(burn_in + samples):
        for d, row in enumerate(docs_idx):
            zs = z[d]
            for pos, w in enumerate(row):
                t = zs[pos]
                n_dk[d, t] -= 1
                n_kw[t, w] -= 1
                n_k[t] -= 1
                probs = (n_dk[d] + alpha) * (n_kw[:, w] + beta) / (n_k + V * beta)
                probs /= probs.sum()
                t = rng.choice(k, p=probs)
                zs[pos] = t
                n_dk[d, t] += 1
                n_kw[t, w] += 1
                n_k[t] += 1
        if sweep >= burn_in:
            phi_acc += (n_kw + beta) / (n_k[:, None] + V * beta)
            theta_acc += (n_dk + alpha) / (
                n_dk.sum(axis=1, keepdims=True) + k * alpha
            )
            kept += 1

    phi = phi_acc / kept
    phi /= phi.sum(axis=1, keepdims=True)
    theta = theta_acc / kept
    theta /= theta.sum(axis=1, keepdims=True)
    return TopicModel(
        k=k, vocabulary=vocabulary, topic_word=phi, doc_topic=theta,
        alpha=alpha, beta=beta, seed=seed,
    )


def _symmetric_kl(p: np.ndarray, q: np.ndarray, eps: float = 1e-12) -> float:
    p = np.clip(p, eps, None)
    q = np.clip(q, eps, None)
    p = p / p.sum()
    q = q / q.sum()
    return float(np.sum(p * np.log(p / q)) + np.sum(q * np.log(q / p)))


def topic_count_divergence(model: TopicModel, documents: Sequence[List[str]]) -> float:
    """Divergence between topic-word singular values and length-weighted topic mass."""
    singular = np.sort(np.linalg.svd(model.topic_word, compute_uv=False))[::-1]
    lengths = np.array([float(len(doc)) for doc in documents])
    mass = lengths @ model.doc_topic
    mass = np.sort(mass)[::-1]
    return _symmetric_kl(singular, mass)


def select_topic_count(
    documents: Sequence[List[str]],
    candidates: Sequence[int] = tuple(range(2, 9)),
    seed: int = 0,
    burn_in: int = 100,
    samples: int = 20,
    **fit_kwargs,
) -> Tuple[int, Dict[int, float]]:
    """Pick the candidate topic count with minimal divergence."""
    divergences: Dict[int, float] = {}
    for k in candidates:
        try:
            model = fit_topics(
                documents, k, burn_in=burn_in, samples=samples, seed=seed, **fit_kwargs
            )
        except DegenerateCorpusError:
            continue
        divergences[k] = topic_count_divergence(model, documents)
    if not divergences:
        raise DegenerateCorpusError("no candidate topic count is feasible")
    best = min(divergences, key=lambda k: (divergences[k], k))
    return best, divergences
