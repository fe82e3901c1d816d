"""Synthetic-oracle benchmark and quality/diversity metrics."""
from __future__ import annotations

import bisect
import math
import warnings
from collections import Counter
from dataclasses import dataclass, fields

import numpy as np

from moegan import tensor as T
from moegan.generator import GeneratorParams, generate_hard
from moegan.objectives import mle_loss
from moegan.rng import make_generator

METRIC_COLUMNS = ("iteration", "nll_oracle", "nll_gen", "bleu2", "bleu3", "bleu4", "bleu5",
                  "loss_d", "loss_g", "fsa", "wall_seconds")


# ---------------------------------------------------------------- oracle


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_softmax(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class OracleModel:
    """Single-layer LSTM language model with every parameter drawn from N(0, 1)."""

    embedding: np.ndarray  # (|V|, E)
    w: np.ndarray  # (E + H, 4H), gates [input | forget | cell | output]
    b: np.ndarray  # (4H,)
    w_out: np.ndarray  # (H, |V|)
    b_out: np.ndarray  # (|V|,)
    start: np.ndarray  # (E,)
    seed: int = 0

    def __post_init__(self):
        for f in ("embedding", "w", "b", "w_out", "b_out", "start"):
            getattr(self, f).setflags(write=False)

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_out.shape[0]

    def initial(self, n: int):
        h = np.zeros((n, self.hidden_size))
        x = np.broadcast_to(self.start.astype(np.float64), (n, self.start.shape[0]))
        return x, h, h.copy()

    def step(self, x, h, c):
        """One recurrence; returns ``(log_probs, h, c)``."""
        hs = self.hidden_size
        z = np.concatenate([x, h], axis=1) @ self.w.astype(np.float64) + self.b
        i = _sigmoid(z[:, :hs])
        f = _sigmoid(z[:, hs:2 * hs])
        g = np.tanh(z[:, 2 * hs:3 * hs])
        o = _sigmoid(z[:, 3 * hs:])
        c = f * c + i * g
        h = o * np.tanh(c)
        return _log_softmax(h @ self.w_out.astype(np.float64) + self.b_out), h, c

    def log_probs(self, tokens) -> np.ndarray:
        """``log p(x_t | x_<t)`` for every position, shape ``(n, L)``."""
        tokens = np.atleast_2d(np.asarray(tokens))
        if tokens.min() < 0 or tokens.max() >= self.vocab_size:
            raise ValueError(f"token id out of range [0, {self.vocab_size})")
        n, length = tokens.shape
        x, h, c = self.initial(n)
        out = np.empty((n, length))
        for t in range(length):
            logp, h, c = self.step(x, h, c)
            out[:, t] = logp[np.arange(n), tokens[:, t]]
            x = self.embedding[tokens[:, t]].astype(np.float64)
        return out

    def to_entries(self) -> dict[str, np.ndarray]:
        return {
            "oracle.embedding": self.embedding, "oracle.w": self.w, "oracle.b": self.b,
            "oracle.w_out": self.w_out, "oracle.b_out": self.b_out, "oracle.start": self.start,
            "meta.oracle_seed": np.array([self.seed], dtype=np.uint64),
        }

    @classmethod
    def from_entries(cls, entries: dict[str, np.ndarray]) -> OracleModel:
        try:
            return cls(*(np.asarray(entries[f"oracle.{k}"], dtype=np.float32)
                         for k in ("embedding", "w", "b", "w_out", "b_out", "start")),
                       seed=int(entries.get("meta.oracle_seed", [0])[0]))
        except KeyError as exc:
            raise ValueError(f"not an oracle checkpoint: missing {exc}") from None


def build_oracle(vocab_size: int, hidden_size: int = 32, seed: int = 0, emb_dim: int | None = None) -> OracleModel:
    if vocab_size < 1 or hidden_size < 1:
        raise ValueError("oracle sizes must be >= 1")
    emb_dim = emb_dim or hidden_size
    rng = make_generator(seed, "oracle")

    def normal(*shape):
        return rng.standard_normal(shape).astype(np.float32)

    return OracleModel(
        embedding=normal(vocab_size, emb_dim),
        w=normal(emb_dim + hidden_size, 4 * hidden_size),
        b=normal(4 * hidden_size),
        w_out=normal(hidden_size, vocab_size),
        b_out=normal(vocab_size),
        start=normal(emb_dim),
        seed=seed,
    )


def oracle_generate(oracle: OracleModel, n: int, length: int, seed: int = 0,
                    stream: str = "oracle-sample") -> np.ndarray:
    """Ancestral sampling: ``(n, length)`` token ids.

    ``stream`` names the random stream, so one seed can give disjoint
    train and test corpora.
    """
    if n < 1 or length < 1:
        raise ValueError("n and length must be >= 1")
    rng = make_generator(seed, stream)
    tokens = np.empty((n, length), dtype=np.int64)
    x, h, c = oracle.initial(n)
    for t in range(length):
        logp, h, c = oracle.step(x, h, c)
        cdf = np.cumsum(np.exp(logp), axis=1)
        u = rng.random(n) * cdf[:, -1]
        tokens[:, t] = np.minimum((cdf < u[:, None]).sum(axis=1), oracle.vocab_size - 1)
        x = oracle.embedding[tokens[:, t]].astype(np.float64)
    return tokens


# ---------------------------------------------------------------- NLL metrics


def nll_oracle(oracle, corpus) -> float:
    """Mean per-token negative log-likelihood of ``corpus`` under ``oracle``.

    ``oracle`` is anything with ``log_probs(tokens) -> (n, L)``.
    """
    corpus = np.asarray(corpus)
    if corpus.size == 0:
        raise ValueError("empty corpus")
    return float(-np.mean(oracle.log_probs(corpus)))


def nll_gen(gen: GeneratorParams, corpus) -> float:
    corpus = np.asarray(corpus)
    if corpus.size == 0:
        raise ValueError("empty corpus")
    with T.no_grad():
        return float(mle_loss(gen, corpus).data)


def quality_diversity_sum(nll_oracle_value: float, nll_gen_value: float) -> float:
    return nll_oracle_value + nll_gen_value


# ---------------------------------------------------------------- BLEU


def _ngrams(tokens, n):
    return zip(*(tokens[i:] for i in range(n)))


class BleuReference:
    """Reference statistics pooled over a whole corpus.

    Each hypothesis is scored against every reference at once: clipped
    counts use the per-n-gram maximum over references, and the brevity
    penalty uses the closest reference length (shorter wins ties).
    """

    def __init__(self, references, max_n: int = 5):
        if max_n < 2:
            raise ValueError("max_n must be >= 2")
        refs = [tuple(r) for r in references]
        if not refs:
            raise ValueError("empty reference corpus")
        self.max_n = max_n
        self.max_counts: list[dict] = [dict() for _ in range(max_n + 1)]
        for ref in refs:
            for n in range(1, max_n + 1):
                table = self.max_counts[n]
                for gram, count in Counter(_ngrams(ref, n)).items():
                    if count > table.get(gram, 0):
                        table[gram] = count
        self.lengths = sorted({len(r) for r in refs})

    def add(self, reference) -> None:
        ref = tuple(reference)
        for n in range(1, self.max_n + 1):
            table = self.max_counts[n]
            for gram, count in Counter(_ngrams(ref, n)).items():
                if count > table.get(gram, 0):
                    table[gram] = count
        if len(ref) not in self.lengths:
            bisect.insort(self.lengths, len(ref))

    def closest_length(self, length: int) -> int:
        i = bisect.bisect_left(self.lengths, length)
        candidates = self.lengths[max(0, i - 1):i + 1]
        return min(candidates, key=lambda r: (abs(r - length), r))

    def precisions(self, hyp) -> list[float]:
        hyp = tuple(hyp)
        out = []
        for n in range(1, self.max_n + 1):
            counts = Counter(_ngrams(hyp, n))
            total = sum(counts.values())
            table = self.max_counts[n]
            matched = sum(min(c, table.get(g, 0)) for g, c in counts.items())
            if n == 1:
                out.append(matched / total if total else 0.0)
            else:
                out.append((matched + 1) / (total + 1))
        return out

    def score(self, hyp) -> dict[int, float]:
        """BLEU-2..max_n of one hypothesis."""
        hyp = tuple(hyp)
        if not hyp:
            warnings.warn("empty hypothesis scores 0", stacklevel=2)
            return {n: 0.0 for n in range(2, self.max_n + 1)}
        ref_len = self.closest_length(len(hyp))
        bp = 1.0 if len(hyp) >= ref_len else math.exp(1.0 - ref_len / len(hyp))
        p = self.precisions(hyp)
        out = {}
        for n in range(2, self.max_n + 1):
            if min(p[:n]) <= 0:
                out[n] = 0.0
            else:
                out[n] = bp * math.exp(sum(math.log(v) for v in p[:n]) / n)
        return out


def bleu(hypotheses, references, max_n: int = 5, reference: BleuReference | None = None) -> dict[int, float]:
    """Corpus BLEU-2..max_n: the mean of per-hypothesis scores."""
    hyps = [tuple(h) for h in hypotheses]
    if not hyps:
        raise ValueError("empty hypothesis corpus")
    ref = reference if reference is not None else BleuReference(references, max_n)
    totals = {n: 0.0 for n in range(2, max_n + 1)}
    for h in hyps:
        for n, v in ref.score(h).items():
            totals[n] += v
    return {n: v / len(hyps) for n, v in totals.items()}


# ---------------------------------------------------------------- evaluation rows


@dataclass
class MetricsRow:
    iteration: int
    nll_oracle: float | None
    nll_gen: float
    bleu2: float
    bleu3: float
    bleu4: float
    bleu5: float
    loss_d: float | None = None
    loss_g: float | None = None
    fsa: float | None = None
    wall_seconds: float = 0.0

    def values(self) -> list:
        return [getattr(self, f.name) for f in fields(self)]

    def csv_fields(self) -> list[str]:
        out = []
        for v in self.values():
            if v is None:
                out.append("")
            elif isinstance(v, int):
                out.append(str(v))
            else:
                out.append(repr(float(v)))
        return out

    @classmethod
    def from_values(cls, values) -> MetricsRow:
        vals = [None if (v is None or (isinstance(v, float) and math.isnan(v))) else v for v in values]
        vals[0] = int(vals[0])
        return cls(*vals)

    def as_floats(self) -> list[float]:
        return [float("nan") if v is None else float(v) for v in self.values()]


def csv_header() -> str:
    return ",".join(METRIC_COLUMNS)


class Evaluator:
    """Computes a metrics row for a generator snapshot.

    Generated samples come from a stream keyed by ``(seed, iteration)``, so
    evaluation never consumes training randomness.
    """

    def __init__(self, test_corpus, seq_len: int, oracle=None, n_samples: int = 1000, seed: int = 0,
                 max_n: int = 5):
        self.test_corpus = np.asarray(test_corpus)
        if self.test_corpus.size == 0:
            raise ValueError("empty test corpus")
        self.seq_len = seq_len
        self.oracle = oracle
        self.n_samples = n_samples
        self.seed = seed
        self.reference = BleuReference(self.test_corpus.tolist(), max_n)

    def samples(self, gen: GeneratorParams, iteration: int) -> np.ndarray:
        rng = make_generator(self.seed, "eval", iteration)
        return generate_hard(gen, self.seq_len, rng, batch_size=self.n_samples)

    def __call__(self, gen: GeneratorParams, iteration: int) -> MetricsRow:
        samples = self.samples(gen, iteration)
        scores = bleu(samples.tolist(), None, reference=self.reference)
        return MetricsRow(
            iteration=iteration,
            nll_oracle=nll_oracle(self.oracle, samples) if self.oracle is not None else None,
            nll_gen=nll_gen(gen, self.test_corpus),
            bleu2=scores[2], bleu3=scores[3], bleu4=scores[4], bleu5=scores[5],
        )
