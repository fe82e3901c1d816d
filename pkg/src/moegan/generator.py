"""Mixture-of-experts recurrent generator with Gumbel-Softmax outputs.

Each expert is a GRU. At every step the experts' new hidden states are
averaged into one representation, projected by a shared output matrix and
normalised into a token distribution. Training-time rollouts feed back the
relaxed sample times the embedding matrix, so the whole sequence stays
differentiable; evaluation-time rollouts emit hard Gumbel-Max tokens.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from moegan import tensor as T
from moegan.tensor import Tensor

LOG_FLOOR = 1e-20
UNIFORM_EPS = 1e-10


@dataclass
class ExpertParams:
    w_x: Tensor  # (d_emb, 3D)
    w_h: Tensor  # (D, 3D)
    b_x: Tensor  # (3D,)
    b_h: Tensor  # (3D,)

    @property
    def hidden_dim(self) -> int:
        return self.w_h.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_x.shape[0]


@dataclass
class GeneratorParams:
    embedding: Tensor  # (|V|, d_emb)
    experts: list[ExpertParams]
    w_out: Tensor  # (|V|, D)
    start: Tensor  # (d_emb,)
    shared_experts: bool = field(default=False)

    def __post_init__(self):
        if not self.experts:
            raise ValueError("generator needs at least one expert")
        dims = {(e.input_dim, e.hidden_dim) for e in self.experts}
        if len(dims) != 1:
            raise ValueError(f"experts disagree on dimensions: {sorted(dims)}")
        if self.w_out.shape[0] != self.embedding.shape[0]:
            raise ValueError("output projection rows must equal the vocabulary size")

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def n_experts(self) -> int:
        return len(self.experts)

    @property
    def hidden_dim(self) -> int:
        return self.experts[0].hidden_dim

    @property
    def emb_dim(self) -> int:
        return self.embedding.shape[1]

    def named_parameters(self) -> dict[str, Tensor]:
        out = {"gen.embedding": self.embedding, "gen.start": self.start, "gen.w_out": self.w_out}
        seen: set[int] = set()
        for i, expert in enumerate(self.experts):
            if id(expert) in seen:
                continue
            seen.add(id(expert))
            for part in ("w_x", "w_h", "b_x", "b_h"):
                out[f"gen.expert{i}.{part}"] = getattr(expert, part)
        return out


def _param(data, name, dtype):
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True, name=name, dtype=dtype)


def init_generator(vocab_size: int, n_experts: int = 2, emb_dim: int = 32, hidden_dim: int = 32,
                   rng: np.random.Generator | None = None, share_experts: bool = False,
                   dtype=np.float32) -> GeneratorParams:
    if n_experts < 1:
        raise ValueError("n_experts must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    bound = 1.0 / math.sqrt(hidden_dim)

    def uniform(shape):
        return rng.uniform(-bound, bound, size=shape)

    def make_expert(i):
        return ExpertParams(
            w_x=_param(uniform((emb_dim, 3 * hidden_dim)), f"gen.expert{i}.w_x", dtype),
            w_h=_param(uniform((hidden_dim, 3 * hidden_dim)), f"gen.expert{i}.w_h", dtype),
            b_x=_param(uniform(3 * hidden_dim), f"gen.expert{i}.b_x", dtype),
            b_h=_param(uniform(3 * hidden_dim), f"gen.expert{i}.b_h", dtype),
        )

    embedding = _param(rng.normal(size=(vocab_size, emb_dim)), "gen.embedding", dtype)
    if share_experts:
        shared = make_expert(0)
        experts = [shared] * n_experts
    else:
        experts = [make_expert(i) for i in range(n_experts)]
    w_out = _param(uniform((vocab_size, hidden_dim)), "gen.w_out", dtype)
    start = _param(rng.normal(size=emb_dim), "gen.start", dtype)
    return GeneratorParams(embedding, experts, w_out, start, shared_experts=share_experts)


# ---------------------------------------------------------------- single step


def expert_step(expert: ExpertParams, h, x_emb) -> tuple[Tensor, Tensor]:
    """One GRU update; the new hidden state is also the emitted representation."""
    h = T.as_tensor(h)
    x_emb = T.as_tensor(x_emb)
    squeeze = h.ndim == 1
    if squeeze:
        h = T.reshape(h, (1, -1))
        x_emb = T.reshape(x_emb, (1, -1))
    if h.shape[-1] != expert.hidden_dim or x_emb.shape[-1] != expert.input_dim:
        raise T.ShapeError("expert_step", f"h {h.shape} / x {x_emb.shape} do not fit expert "
                                          f"(d_in={expert.input_dim}, D={expert.hidden_dim})")
    h_new = T.gru_cell(x_emb, h, expert.w_x, expert.w_h, expert.b_x, expert.b_h)
    if squeeze:
        h_new = T.reshape(h_new, (-1,))
    return h_new, h_new


def aggregate(representations) -> Tensor:
    """Arithmetic mean of the experts' representations."""
    reps = [T.as_tensor(r) for r in representations]
    if not reps:
        raise ValueError("aggregate needs at least one representation")
    if len({r.shape for r in reps}) != 1:
        raise T.ShapeError("aggregate", f"mixed shapes {[r.shape for r in reps]}")
    if len(reps) == 1:
        return reps[0]
    total = reps[0]
    for r in reps[1:]:
        total = T.add(total, r)
    return T.scale(total, 1.0 / len(reps))


def token_logits(params: GeneratorParams, y) -> Tensor:
    y = T.as_tensor(y)
    if y.shape[-1] != params.hidden_dim:
        raise T.ShapeError("token_distribution", f"representation dim {y.shape[-1]} != {params.hidden_dim}")
    if y.ndim == 1:
        return T.reshape(T.matmul(T.reshape(y, (1, -1)), T.transpose(params.w_out)), (-1,))
    return T.matmul(y, T.transpose(params.w_out))


def token_distribution(params: GeneratorParams, y) -> Tensor:
    return T.softmax(token_logits(params, y), axis=-1)


# ---------------------------------------------------------------- Gumbel machinery


def gumbel_noise(shape, rng, eps: float = UNIFORM_EPS) -> np.ndarray:
    """Standard Gumbel draws ``-log(-log u)`` with ``u`` clamped to [eps, 1 - eps]."""
    if isinstance(shape, int):
        if shape < 1:
            raise ValueError("need at least one draw")
        shape = (shape,)
    u = np.clip(rng.random(shape), eps, 1.0 - eps)
    return -np.log(-np.log(u))


def _perturbed_logits(pi: np.ndarray, g) -> np.ndarray:
    pi = np.asarray(pi)
    dtype = pi.dtype if pi.dtype in (np.float32, np.float64) else np.float64
    return np.log(np.maximum(pi, dtype.type(LOG_FLOOR))) + np.asarray(g, dtype=dtype)


def gumbel_max(pi, g) -> np.ndarray:
    """One-hot of ``argmax(g + log pi)`` along the last axis (lowest index on ties)."""
    pi = pi.data if isinstance(pi, Tensor) else np.asarray(pi)
    scores = _perturbed_logits(pi, g)
    idx = np.argmax(scores, axis=-1)
    out = np.zeros_like(scores)
    np.put_along_axis(out, idx[..., None], 1, axis=-1)
    return out


def gumbel_softmax(pi, g, tau: float) -> Tensor:
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    pi = T.as_tensor(pi)
    noise = Tensor(np.asarray(g, dtype=pi.dtype), dtype=pi.dtype)
    return T.softmax(T.scale(T.add(T.log(pi, floor=LOG_FLOOR), noise), 1.0 / tau), axis=-1)


def temperature(tau: float, iteration: int, decay: float = 0.0, floor: float = 1e-3) -> float:
    """Optional exponential anneal; ``decay = 0`` keeps ``tau`` fixed."""
    if decay == 0.0:
        return tau
    return max(floor, tau * math.exp(-decay * iteration))


# ---------------------------------------------------------------- rollouts


def _initial(params: GeneratorParams, batch: int):
    dtype = params.embedding.dtype
    ones = Tensor(np.ones((batch, 1), dtype=dtype), dtype=dtype)
    x = T.matmul(ones, T.reshape(params.start, (1, -1)))
    h0 = Tensor(np.zeros((batch, params.hidden_dim), dtype=dtype), dtype=dtype)
    return x, [h0] * params.n_experts


def _advance(params: GeneratorParams, x, hidden):
    new_hidden = [expert_step(expert, h, x)[1] for expert, h in zip(params.experts, hidden)]
    return aggregate(new_hidden), new_hidden


def generate_soft(params: GeneratorParams, length: int, tau: float, rng, batch_size: int | None = None) -> Tensor:
    """Relaxed rollout: returns ``(B, L, |V|)`` (or ``(L, |V|)`` without a batch)."""
    if length < 1:
        raise ValueError("length must be >= 1")
    batch = batch_size or 1
    x, hidden = _initial(params, batch)
    rows = []
    for _ in range(length):
        y, hidden = _advance(params, x, hidden)
        pi = token_distribution(params, y)
        y_hat = gumbel_softmax(pi, gumbel_noise((batch, params.vocab_size), rng), tau)
        rows.append(T.reshape(y_hat, (batch, 1, params.vocab_size)))
        x = T.matmul(y_hat, params.embedding)
    out = T.concat(rows, axis=1)
    return out if batch_size is not None else T.reshape(out, (length, params.vocab_size))


def generate_hard(params: GeneratorParams, length: int, rng, batch_size: int | None = None) -> np.ndarray:
    """Gumbel-Max rollout returning token ids ``(B, L)`` (or ``(L,)``)."""
    if length < 1:
        raise ValueError("length must be >= 1")
    batch = batch_size or 1
    tokens = np.zeros((batch, length), dtype=np.int64)
    with T.no_grad():
        x, hidden = _initial(params, batch)
        for t in range(length):
            y, hidden = _advance(params, x, hidden)
            pi = token_distribution(params, y).data
            scores = _perturbed_logits(pi, gumbel_noise((batch, params.vocab_size), rng))
            tokens[:, t] = np.argmax(scores, axis=-1)
            x = Tensor(params.embedding.data[tokens[:, t]], dtype=params.embedding.dtype)
    return tokens if batch_size is not None else tokens[0]


def check_tokens(tokens, vocab_size: int) -> np.ndarray:
    tokens = np.asarray(tokens)
    if tokens.size == 0:
        raise ValueError("empty token sequence")
    if not np.issubdtype(tokens.dtype, np.integer):
        raise ValueError("token ids must be integers")
    if tokens.min() < 0 or tokens.max() >= vocab_size:
        raise ValueError(f"token id out of range [0, {vocab_size})")
    return tokens


def sequence_log_likelihood(params: GeneratorParams, tokens) -> Tensor:
    """Teacher-forced per-token mean log-probability, one value per sequence."""
    tokens = check_tokens(tokens, params.vocab_size)
    single = tokens.ndim == 1
    if single:
        tokens = tokens[None]
    batch, length = tokens.shape
    x, hidden = _initial(params, batch)
    states = []
    for t in range(length):
        y, hidden = _advance(params, x, hidden)
        states.append(T.reshape(y, (batch, 1, params.hidden_dim)))
        if t + 1 < length:
            x = T.matmul(T.one_hot(tokens[:, t], params.vocab_size, dtype=params.embedding.dtype), params.embedding)
    logp = T.log_softmax(token_logits(params, T.concat(states, axis=1)), axis=-1)  # (B, L, V)
    picked = T.sum(T.mul(logp, T.one_hot(tokens, params.vocab_size, dtype=logp.dtype)), axis=-1)
    per_seq = T.mean(picked, axis=1)
    return T.reshape(per_seq, ()) if single else per_seq
