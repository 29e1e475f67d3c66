"""Bug-report text processing and the developer-suitability classifier.

Preprocessing merges summary and description, lowercases, strips
punctuation, drops tokens containing digits, removes stop words, maps
word forms through a bundled static lemma table, and discards tokens
longer than 20 characters. Everything is deterministic; no external NLP
service is involved.

Suitability is a one-vs-rest linear classifier over TF-IDF features with
L2 regularization at strength equivalent to C = 1000.
"""

from __future__ import annotations

import json
import re
from importlib import resources as importlib_resources
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from sklearn.svm import LinearSVC

MAX_TOKEN_LEN = 20
SCORE_SHIFT_EPS = 1e-3

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_DIGIT_RE = re.compile(r"\d")


class SingleClassCorpusError(ValueError):
    pass


class EmptyVocabularyError(ValueError):
    pass


class UntrainedModelError(RuntimeError):
    pass


def _load_resource(name: str) -> List[str]:
    text = importlib_resources.files("triagesim.resources").joinpath(name).read_text()
    return [line.strip() for line in text.splitlines() if line.strip()]


STOP_WORDS = frozenset(_load_resource("stopwords.txt"))
LEMMA_TABLE: Dict[str, str] = dict(
    line.split() for line in _load_resource("lemmas.txt")
)


def preprocess(summary: str, description: str) -> List[str]:
    """Merged, cleaned, lemmatized token list for one bug report."""
    merged = f"{summary} {description}".lower()
    out: List[str] = []
    for token in _TOKEN_RE.findall(merged):
        if _DIGIT_RE.search(token):
            continue
        if token in STOP_WORDS:
            continue
        token = LEMMA_TABLE.get(token, token)
        if len(token) > MAX_TOKEN_LEN:
            continue
        out.append(token)
    return out


class TfidfSpace:
    """Vocabulary + smoothed idf weights with l2-normalized document vectors."""

    def __init__(self, vocabulary: Dict[str, int], idf: np.ndarray):
        self.vocabulary = vocabulary
        self.idf = idf

    @classmethod
    def fit(cls, documents: Sequence[List[str]]) -> "TfidfSpace":
        vocabulary: Dict[str, int] = {}
        for tokens in documents:
            for tok in tokens:
                if tok not in vocabulary:
                    vocabulary[tok] = len(vocabulary)
        if not vocabulary:
            raise EmptyVocabularyError("no tokens survive preprocessing")
        df = np.zeros(len(vocabulary))
        for tokens in documents:
            for idx in {vocabulary[t] for t in tokens}:
                df[idx] += 1
        n = len(documents)
        idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
        return cls(vocabulary, idf)

    def transform(self, documents: Sequence[List[str]]) -> np.ndarray:
        X = np.zeros((len(documents), len(self.vocabulary)))
        for row, tokens in enumerate(documents):
            for tok in tokens:
                idx = self.vocabulary.get(tok)
                if idx is not None:
                    X[row, idx] += 1.0
        X *= self.idf
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return X / norms


class SuitabilityModel:
    """Per-developer decision scores for bug text.

    ``scores`` shifts the raw one-vs-rest decisions per bug so the
    minimum is strictly positive; the downstream objective divides by
    the per-bug maximum, so the shift keeps every weight in (0, 1] and
    leaves the developer ordering untouched.
    """

    def __init__(
        self,
        space: TfidfSpace,
        classes: List[str],
        coef: np.ndarray,
        intercept: np.ndarray,
        C: float,
    ):
        self.space = space
        self.classes = classes
        self.coef = coef
        self.intercept = intercept
        self.C = C

    @classmethod
    def train(
        cls,
        documents: Sequence[List[str]],
        labels: Sequence[str],
        C: float = 1000.0,
        space: "TfidfSpace" = None,
    ) -> "SuitabilityModel":
        if len(documents) != len(labels):
            raise ValueError("documents and labels must align")
        classes = sorted(set(labels))
        if len(classes) < 2:
            raise SingleClassCorpusError(f"need >= 2 classes, got {classes}")
        if space is None:
            space = TfidfSpace.fit(documents)
        X = space.transform(documents)
        # primal squared-hinge solver: deterministic for a fixed input order
        clf = LinearSVC(C=C, dual=False, tol=1e-9, max_iter=100_000)
        clf.fit(X, list(labels))
        coef = clf.coef_
        intercept = clf.intercept_
        if len(classes) == 2:
            # liblinear emits a single separating row for the binary case
            coef = np.vstack([-coef[0], coef[0]])
            intercept = np.array([-intercept[0], intercept[0]])
        return cls(space, classes, coef, intercept, C)

    def decision(self, tokens: List[str]) -> Dict[str, float]:
        if self.coef is None:
            raise UntrainedModelError("model has no fitted weights")
        x = self.space.transform([tokens])[0]
        raw = self.coef @ x + self.intercept
        return dict(zip(self.classes, raw.tolist()))

    def scores(self, tokens: List[str]) -> Dict[str, float]:
        raw = self.decision(tokens)
        shift = -min(raw.values()) + SCORE_SHIFT_EPS
        return {dev: value + shift for dev, value in raw.items()}

    def predict(self, tokens: List[str]) -> str:
        raw = self.decision(tokens)
        return sorted(raw, key=lambda d: (-raw[d], d))[0]

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "suitability-model/1",
                "C": self.C,
                "classes": self.classes,
                "vocabulary": self.space.vocabulary,
                "idf": self.space.idf.tolist(),
                "coef": self.coef.tolist(),
                "intercept": self.intercept.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SuitabilityModel":
        doc = json.loads(text)
        if doc.get("format") != "suitability-model/1":
            raise ValueError("unrecognized suitability model document")
        space = TfidfSpace(doc["vocabulary"], np.array(doc["idf"]))
        return cls(
            space,
            doc["classes"],
            np.array(doc["coef"]),
            np.array(doc["intercept"]),
            doc["C"],
        )
