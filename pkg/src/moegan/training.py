"""Optimisation: Adam, gradient clipping, MLE pretraining and the
alternating adversarial loop."""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from moegan import checkpoint as ckpt
from moegan import kernels
from moegan import tensor as T
from moegan.evaluation import METRIC_COLUMNS, MetricsRow
from moegan.features import FeatureNetParams, copy_to_auxiliary, init_feature_net
from moegan.generator import GeneratorParams, generate_soft, init_generator, temperature
from moegan.objectives import (LossReport, discriminator_loss, fsa_distance, generator_loss, mle_loss,
                               relativistic_gap)
from moegan.rng import Streams


class NonFiniteLossError(FloatingPointError):
    pass


class ScopeError(RuntimeError):
    """A gradient map contained parameters outside the network being updated."""


@dataclass
class TrainConfig:
    seed: int = 0
    n_experts: int = 2
    share_experts: bool = False
    emb_dim: int = 32
    hidden_dim: int = 32
    tau: float = 1.0
    tau_decay: float = 0.0
    g_steps: int = 1
    d_steps: int = 5
    pretrain_epochs: int = 50
    batch_size: int = 64
    lr_pretrain: float = 1e-2
    lr_gen_adv: float = 1e-4
    lr_disc: float = 1e-4
    clip_norm: float = 5.0
    clip_mode: str = "global"
    fsa_weight: float = 1.0
    max_iterations: int = 200
    eval_interval: int = 10
    eval_samples: int = 1000
    disc_emb_dim: int = 64
    disc_channels: int = 300
    disc_windows: tuple[int, ...] = (2, 3, 4, 5)
    feature_dim: int = 100
    mle_only: bool = False
    record_wall_time: bool = False

    def __post_init__(self):
        self.disc_windows = tuple(int(k) for k in self.disc_windows)
        if self.g_steps < 1 or self.d_steps < 1:
            raise ValueError("g_steps and d_steps must be >= 1")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        for name in ("lr_pretrain", "lr_gen_adv", "lr_disc"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")
        if self.clip_mode not in ("global", "per_tensor"):
            raise ValueError(f"clip_mode must be 'global' or 'per_tensor', got {self.clip_mode!r}")
        if self.n_experts < 1 or self.batch_size < 1 or self.eval_interval < 1:
            raise ValueError("n_experts, batch_size and eval_interval must be >= 1")
        if self.pretrain_epochs < 0 or self.max_iterations < 0:
            raise ValueError("pretrain_epochs and max_iterations must be >= 0")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["disc_windows"] = list(self.disc_windows)
        return out

    @classmethod
    def from_dict(cls, values: dict) -> TrainConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in known})


# ---------------------------------------------------------------- optimiser


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def _grad_array(grads, name, param):
    g = grads.get(name)
    if g is None:
        return np.zeros_like(param.data)
    g = g.data if isinstance(g, T.Tensor) else np.asarray(g)
    if g.shape != param.shape:
        raise T.ShapeError("adam_step", f"gradient for {name} has shape {g.shape}, parameter {param.shape}")
    return g


def adam_step(state: AdamState, params: dict[str, T.Tensor], grads: dict, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """Bias-corrected Adam, updating ``params`` in place."""
    for name in grads:
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name}")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = _grad_array(grads, name, p)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        if not p.data.flags.c_contiguous:
            p.data = np.ascontiguousarray(p.data)
        kernels.adam_update(p.data.reshape(-1), g.reshape(-1), m.reshape(-1), state.v[name].reshape(-1),
                            lr, beta1, beta2, eps, c1, c2)
    return state


def global_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        arr = g.data if isinstance(g, T.Tensor) else np.asarray(g)
        total += kernels.sum_squares(arr)
    return math.sqrt(total)


def clip_global_norm(grads: dict, threshold: float = 5.0, mode: str = "global") -> dict:
    """Rescale so the L2 norm is at most ``threshold``.

    ``mode="global"`` uses one norm over every tensor; ``"per_tensor"`` clips
    each tensor on its own.
    """
    if not threshold > 0:
        raise ValueError("clip threshold must be positive")
    arrays = {k: (g.data if isinstance(g, T.Tensor) else np.asarray(g)) for k, g in grads.items()}
    if mode == "per_tensor":
        out = {}
        for k, a in arrays.items():
            n = math.sqrt(kernels.sum_squares(a))
            out[k] = a * a.dtype.type(threshold / n) if n > threshold else a
        return out
    norm = global_norm(arrays)
    if norm <= threshold:
        return arrays
    factor = threshold / norm
    return {k: a * a.dtype.type(factor) for k, a in arrays.items()}


# ---------------------------------------------------------------- MLE pretraining


def _check_finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NonFiniteLossError(f"non-finite {what}: {value}")
    return value


def _check_scope(grads: dict, allowed: dict, what: str) -> None:
    foreign = [k for k in grads if k not in allowed]
    if foreign:
        raise ScopeError(f"{what} gradient map contains foreign parameters: {foreign[:5]}")


def mle_step(gen: GeneratorParams, batch: np.ndarray, state: AdamState, lr: float, clip_norm: float,
             clip_mode: str = "global") -> float:
    params = gen.named_parameters()
    with T.Tape():
        loss = mle_loss(gen, batch)
        value = _check_finite(float(loss.data), "MLE loss")
        grads = T.backward(loss, params)
    _check_scope(grads, params, "MLE")
    adam_step(state, params, clip_global_norm(grads, clip_norm, clip_mode), lr)
    return value


def pretrain(gen: GeneratorParams, corpus, config: TrainConfig, rng, state: AdamState | None = None) -> list[float]:
    """``config.pretrain_epochs`` epochs of shuffled minibatch MLE; returns the
    mean minibatch loss of each epoch."""
    corpus = np.asarray(corpus)
    if corpus.size == 0:
        raise ValueError("empty corpus")
    state = state if state is not None else AdamState()
    log = []
    for _ in range(config.pretrain_epochs):
        order = rng.permutation(len(corpus))
        losses = [mle_step(gen, corpus[order[i:i + config.batch_size]], state, config.lr_pretrain,
                           config.clip_norm, config.clip_mode)
                  for i in range(0, len(corpus), config.batch_size)]
        log.append(float(np.mean(losses)))
    return log


# ---------------------------------------------------------------- adversarial loop


def params_digest(params: dict[str, T.Tensor]) -> str:
    import hashlib

    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name].data).tobytes())
    return h.hexdigest()


class Trainer:
    """Holds the full experiment state: networks, optimiser moments, random
    streams, iteration counter and metrics history."""

    def __init__(self, config: TrainConfig, corpus, vocab_size: int,
                 evaluator: Callable[[GeneratorParams, int], MetricsRow] | None = None):
        self.config = config
        self.corpus = np.asarray(corpus, dtype=np.int64)
        if self.corpus.ndim != 2 or self.corpus.shape[0] == 0:
            raise ValueError("corpus must be a non-empty (n, L) token array")
        if self.corpus.min() < 0 or self.corpus.max() >= vocab_size:
            raise ValueError(f"corpus token ids fall outside vocabulary of size {vocab_size}")
        self.vocab_size = vocab_size
        self.seq_len = self.corpus.shape[1]
        self.evaluator = evaluator
        self.streams = Streams(config.seed)
        init = self.streams["init"]
        self.gen = init_generator(vocab_size, config.n_experts, config.emb_dim, config.hidden_dim, init,
                                  share_experts=config.share_experts)
        self.disc = init_feature_net(vocab_size, init, emb_dim=config.disc_emb_dim,
                                     channels=config.disc_channels, windows=config.disc_windows,
                                     feature_dim=config.feature_dim)
        self.opt_pre = AdamState()
        self.opt_gen = AdamState()
        self.opt_disc = AdamState()
        self.iteration = 0
        self.pretrained = False
        self.pretrain_log: list[float] = []
        self.history: list[MetricsRow] = []
        self.aux: FeatureNetParams | None = None
        self.on_generator_grads: Callable[[dict], None] | None = None
        self._clock_start = time.perf_counter()

    # -- sampling

    def sample_real(self) -> np.ndarray:
        n = len(self.corpus)
        if n < self.config.batch_size:
            raise ValueError(f"corpus of {n} sequences is smaller than batch size {self.config.batch_size}")
        idx = self.streams["data"].choice(n, size=self.config.batch_size, replace=False)
        return self.corpus[np.sort(idx)]

    @property
    def tau(self) -> float:
        return temperature(self.config.tau, self.iteration, self.config.tau_decay)

    # -- steps

    def pretrain(self) -> list[float]:
        self.pretrain_log = pretrain(self.gen, self.corpus, self.config, self.streams["data"], self.opt_pre)
        self.pretrained = True
        return self.pretrain_log

    def generator_step(self, aux: FeatureNetParams) -> tuple[float, float, float]:
        cfg = self.config
        real = self.sample_real()
        params = self.gen.named_parameters()
        disc = self.disc.constant_view()
        with T.Tape():
            fake = generate_soft(self.gen, self.seq_len, self.tau, self.streams["gumbel"], cfg.batch_size)
            delta = relativistic_gap(disc, real, fake)
            if cfg.fsa_weight != 0:
                fsa = fsa_distance(aux, real, fake)
            else:
                with T.no_grad():
                    fsa = fsa_distance(aux, real, fake.detach())
            loss = generator_loss(delta, fsa, cfg.fsa_weight)
            value = _check_finite(float(loss.data), "generator loss")
            grads = T.backward(loss, params)
        _check_scope(grads, params, "generator")
        if self.on_generator_grads is not None:
            self.on_generator_grads(grads)
        adam_step(self.opt_gen, params, clip_global_norm(grads, cfg.clip_norm, cfg.clip_mode), cfg.lr_gen_adv)
        return value, float(fsa.data), float(np.mean(delta.data))

    def discriminator_step(self) -> tuple[float, float]:
        cfg = self.config
        real = self.sample_real()
        with T.no_grad():
            fake = generate_soft(self.gen, self.seq_len, self.tau, self.streams["gumbel"], cfg.batch_size).detach()
        params = self.disc.named_parameters()
        with T.Tape():
            delta = relativistic_gap(self.disc, real, fake)
            loss = discriminator_loss(delta)
            value = _check_finite(float(loss.data), "discriminator loss")
            grads = T.backward(loss, params)
        _check_scope(grads, params, "discriminator")
        adam_step(self.opt_disc, params, clip_global_norm(grads, cfg.clip_norm, cfg.clip_mode), cfg.lr_disc)
        return value, float(np.mean(delta.data))

    def adversarial_iteration(self) -> LossReport:
        self.aux = copy_to_auxiliary(self.disc)
        loss_g = fsa = gap = float("nan")
        for _ in range(self.config.g_steps):
            loss_g, fsa, gap = self.generator_step(self.aux)
        loss_d = float("nan")
        for _ in range(self.config.d_steps):
            loss_d, gap = self.discriminator_step()
        return LossReport(loss_d=loss_d, loss_g=loss_g, fsa=fsa, mean_gap=gap)

    def mle_iteration(self) -> None:
        """Baseline iteration: ``g_steps`` further MLE updates at the pretraining rate."""
        cfg = self.config
        for _ in range(cfg.g_steps):
            mle_step(self.gen, self.sample_real(), self.opt_pre, cfg.lr_pretrain, cfg.clip_norm, cfg.clip_mode)

    # -- driver

    def _evaluate(self, report: LossReport | None) -> MetricsRow | None:
        if self.evaluator is None:
            return None
        row = self.evaluator(self.gen, self.iteration)
        if report is not None:
            row.loss_d, row.loss_g, row.fsa = report.loss_d, report.loss_g, report.fsa
        row.wall_seconds = (time.perf_counter() - self._clock_start) if self.config.record_wall_time else 0.0
        self.history.append(row)
        return row

    def run(self, on_eval: Callable[[MetricsRow | None, Trainer], None] | None = None,
            on_iteration_start: Callable[[Trainer], None] | None = None) -> list[MetricsRow]:
        """Pretrain (once) then iterate to ``max_iterations``, evaluating after
        pretraining, every ``eval_interval`` iterations and at the end."""
        cfg = self.config
        if not self.pretrained:
            if on_iteration_start is not None:
                on_iteration_start(self)
            self.pretrain()
            row = self._evaluate(None)
            if on_eval is not None:
                on_eval(row, self)
        while self.iteration < cfg.max_iterations:
            if on_iteration_start is not None:
                on_iteration_start(self)
            report = None
            if cfg.mle_only:
                self.mle_iteration()
            else:
                report = self.adversarial_iteration()
            self.iteration += 1
            if self.iteration % cfg.eval_interval == 0 or self.iteration == cfg.max_iterations:
                row = self._evaluate(report)
                if on_eval is not None:
                    on_eval(row, self)
        return self.history

    # -- persistence

    def state_entries(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name, p in {**self.gen.named_parameters(), **self.disc.named_parameters()}.items():
            out[name] = p.data.copy()
        for label, opt in (("pre", self.opt_pre), ("gen", self.opt_gen), ("disc", self.opt_disc)):
            out[f"meta.adam.{label}.t"] = np.array([opt.t], dtype=np.uint64)
            for name in sorted(opt.m):
                out[f"adam.{label}.m.{name}"] = opt.m[name].copy()
                out[f"adam.{label}.v.{name}"] = opt.v[name].copy()
        out.update(self.streams.state_arrays())
        out["meta.iteration"] = np.array([self.iteration], dtype=np.uint64)
        out["meta.pretrained"] = np.array([int(self.pretrained)], dtype=np.uint64)
        out["meta.vocab_size"] = np.array([self.vocab_size], dtype=np.uint64)
        out["meta.seq_len"] = np.array([self.seq_len], dtype=np.uint64)
        out["meta.config"] = ckpt.encode_json(self.config.to_dict())
        out["meta.pretrain_log"] = ckpt.encode_floats(self.pretrain_log)
        rows = np.array([r.as_floats() for r in self.history], dtype=np.float64).reshape(-1, len(METRIC_COLUMNS))
        out["meta.history"] = ckpt.encode_floats(rows)
        return out

    def load_entries(self, entries: dict[str, np.ndarray]) -> None:
        for name, p in {**self.gen.named_parameters(), **self.disc.named_parameters()}.items():
            if name not in entries:
                raise ckpt.CheckpointError(f"checkpoint lacks parameter {name}")
            if entries[name].shape != p.shape:
                raise ckpt.CheckpointError(f"{name}: checkpoint shape {entries[name].shape} != model {p.shape}")
            p.data[...] = entries[name]
        for label, opt in (("pre", self.opt_pre), ("gen", self.opt_gen), ("disc", self.opt_disc)):
            opt.t = int(entries.get(f"meta.adam.{label}.t", [0])[0])
            opt.m.clear()
            opt.v.clear()
            prefix = f"adam.{label}.m."
            for key in entries:
                if key.startswith(prefix):
                    name = key[len(prefix):]
                    opt.m[name] = entries[key].astype(np.float32)
                    opt.v[name] = entries[f"adam.{label}.v.{name}"].astype(np.float32)
        self.streams.load_state_arrays(entries)
        self.iteration = int(entries["meta.iteration"][0])
        self.pretrained = bool(entries["meta.pretrained"][0])
        self.pretrain_log = ckpt.decode_floats(entries["meta.pretrain_log"]).tolist()
        rows = ckpt.decode_floats(entries["meta.history"]).reshape(-1, len(METRIC_COLUMNS))
        self.history = [MetricsRow.from_values(list(r)) for r in rows]

    def save(self, path) -> None:
        ckpt.save(path, self.state_entries())


def models_from_entries(entries: dict[str, np.ndarray]) -> tuple[TrainConfig, GeneratorParams, FeatureNetParams]:
    """Rebuild the configuration and both networks from checkpoint entries."""
    try:
        config = TrainConfig.from_dict(ckpt.decode_json(entries["meta.config"]))
        vocab_size = int(entries["meta.vocab_size"][0])
    except KeyError as exc:
        raise ckpt.CheckpointError(f"not a training checkpoint: missing {exc}") from None
    rng = np.random.default_rng(0)
    gen = init_generator(vocab_size, config.n_experts, config.emb_dim, config.hidden_dim, rng,
                         share_experts=config.share_experts)
    disc = init_feature_net(vocab_size, rng, emb_dim=config.disc_emb_dim, channels=config.disc_channels,
                            windows=config.disc_windows, feature_dim=config.feature_dim)
    for name, p in {**gen.named_parameters(), **disc.named_parameters()}.items():
        if name not in entries:
            raise ckpt.CheckpointError(f"checkpoint lacks parameter {name}")
        if entries[name].shape != p.shape:
            raise ckpt.CheckpointError(f"{name}: checkpoint shape {entries[name].shape} != model {p.shape}")
        p.data[...] = entries[name]
    return config, gen, disc


def train(config: TrainConfig, corpus, vocab_size: int, evaluator=None, on_eval=None) -> list[MetricsRow]:
    """Pretrain, then alternate adversarial iterations until ``max_iterations``."""
    trainer = Trainer(config, corpus, vocab_size, evaluator)
    return trainer.run(on_eval=on_eval)
