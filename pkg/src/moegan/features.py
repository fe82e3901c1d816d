"""Convolutional text encoder shared by the comparative discriminator and the
frozen auxiliary encoder.

Pathway: one-hot or relaxed rows -> embedding -> valid convolutions per
window -> max-over-time -> ReLU -> concat -> highway -> linear feature.
The discriminator adds a scalar logit head on top of the feature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from moegan import tensor as T
from moegan.tensor import Tensor

PAD_ID = 0


@dataclass
class FeatureNetParams:
    embedding: Tensor  # (|V|, E)
    conv_w: list[Tensor]  # per window: (K, E, C)
    conv_b: list[Tensor]  # per window: (C,)
    gate_w: Tensor  # (P, P) highway gate
    gate_b: Tensor
    transform_w: Tensor  # (P, P) highway transform
    transform_b: Tensor
    proj_w: Tensor  # (P, F)
    proj_b: Tensor
    head_w: Tensor  # (F, 1)
    head_b: Tensor  # (1,)
    windows: tuple[int, ...]
    prefix: str = "disc"
    frozen: bool = False

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def pooled_dim(self) -> int:
        return sum(w.shape[2] for w in self.conv_w)

    @property
    def feature_dim(self) -> int:
        return self.proj_w.shape[1]

    def named_parameters(self) -> dict[str, Tensor]:
        out = {f"{self.prefix}.embedding": self.embedding}
        for k, w, b in zip(self.windows, self.conv_w, self.conv_b):
            out[f"{self.prefix}.conv{k}.w"] = w
            out[f"{self.prefix}.conv{k}.b"] = b
        for name in ("gate_w", "gate_b", "transform_w", "transform_b", "proj_w", "proj_b", "head_w", "head_b"):
            out[f"{self.prefix}.{name}"] = getattr(self, name)
        return out

    def constant_view(self) -> FeatureNetParams:
        """Same arrays wrapped as non-trainable tensors (no copy)."""
        return _map(self, lambda t: Tensor(t.data, name=t.name, dtype=t.dtype), self.prefix, self.frozen)


def _map(params: FeatureNetParams, fn, prefix: str, frozen: bool) -> FeatureNetParams:
    return FeatureNetParams(
        embedding=fn(params.embedding),
        conv_w=[fn(w) for w in params.conv_w],
        conv_b=[fn(b) for b in params.conv_b],
        gate_w=fn(params.gate_w),
        gate_b=fn(params.gate_b),
        transform_w=fn(params.transform_w),
        transform_b=fn(params.transform_b),
        proj_w=fn(params.proj_w),
        proj_b=fn(params.proj_b),
        head_w=fn(params.head_w),
        head_b=fn(params.head_b),
        windows=params.windows,
        prefix=prefix,
        frozen=frozen,
    )


def init_feature_net(vocab_size: int, rng: np.random.Generator | None = None, emb_dim: int = 64,
                     channels: int = 300, windows=(2, 3, 4, 5), feature_dim: int = 100,
                     dtype=np.float32, prefix: str = "disc") -> FeatureNetParams:
    rng = rng if rng is not None else np.random.default_rng(0)
    windows = tuple(int(k) for k in windows)
    pooled = channels * len(windows)

    def param(data, name):
        return Tensor(np.asarray(data, dtype=dtype), requires_grad=True, name=f"{prefix}.{name}", dtype=dtype)

    def uniform(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    conv_w = [param(uniform((k, emb_dim, channels), k * emb_dim), f"conv{k}.w") for k in windows]
    conv_b = [param(uniform(channels, k * emb_dim), f"conv{k}.b") for k in windows]
    return FeatureNetParams(
        embedding=param(rng.normal(size=(vocab_size, emb_dim)), "embedding"),
        conv_w=conv_w,
        conv_b=conv_b,
        gate_w=param(uniform((pooled, pooled), pooled), "gate_w"),
        gate_b=param(uniform(pooled, pooled), "gate_b"),
        transform_w=param(uniform((pooled, pooled), pooled), "transform_w"),
        transform_b=param(uniform(pooled, pooled), "transform_b"),
        proj_w=param(uniform((pooled, feature_dim), pooled), "proj_w"),
        proj_b=param(uniform(feature_dim, pooled), "proj_b"),
        head_w=param(uniform((feature_dim, 1), feature_dim), "head_w"),
        head_b=param(uniform(1, feature_dim), "head_b"),
        windows=windows,
        prefix=prefix,
    )


def _as_rows(params: FeatureNetParams, seq) -> tuple[Tensor, bool]:
    """Sequence -> (B, T, |V|) rows of one-hot (hard) or probability (soft) vectors."""
    if isinstance(seq, Tensor) or (isinstance(seq, np.ndarray) and np.issubdtype(seq.dtype, np.floating)):
        rows = T.as_tensor(seq)
        if rows.shape[-1] != params.vocab_size:
            raise T.ShapeError("embed_input", f"soft rows have width {rows.shape[-1]}, vocabulary is {params.vocab_size}")
        single = rows.ndim == 2
        if single:
            rows = T.reshape(rows, (1,) + rows.shape)
        if rows.shape[1] == 0:
            raise ValueError("empty sequence")
        return rows, single
    ids = np.asarray(seq)
    if ids.size == 0:
        raise ValueError("empty sequence")
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValueError("token ids must be integers")
    if ids.min() < 0 or ids.max() >= params.vocab_size:
        raise ValueError(f"token id out of range [0, {params.vocab_size})")
    single = ids.ndim == 1
    if single:
        ids = ids[None]
    return T.one_hot(ids, params.vocab_size, dtype=params.embedding.dtype), single


def _left_pad(params: FeatureNetParams, rows: Tensor) -> Tensor:
    need = max(params.windows) - rows.shape[1]
    if need <= 0:
        return rows
    pad = np.zeros((rows.shape[0], need, params.vocab_size), dtype=rows.dtype)
    pad[:, :, PAD_ID] = 1
    return T.concat([Tensor(pad, dtype=rows.dtype), rows], axis=1)


def embed_input(params: FeatureNetParams, seq) -> Tensor:
    """(B, T, E) embedded rows, left-padded with the pad token to the widest window.

    A single unbatched sequence gives (T, E).
    """
    rows, single = _as_rows(params, seq)
    rows = _left_pad(params, rows)
    out = T.matmul(rows, params.embedding)
    return T.reshape(out, out.shape[1:]) if single else out


def extract_features(params: FeatureNetParams, embedded) -> Tensor:
    embedded = T.as_tensor(embedded)
    single = embedded.ndim == 2
    if single:
        embedded = T.reshape(embedded, (1,) + embedded.shape)
    pooled = [T.conv_max_pool(embedded, w, b) for w, b in zip(params.conv_w, params.conv_b)]
    flat = T.relu(T.concat(pooled, axis=1) if len(pooled) > 1 else pooled[0])
    gate = T.sigmoid(T.add(T.matmul(flat, params.gate_w), params.gate_b))
    transform = T.relu(T.add(T.matmul(flat, params.transform_w), params.transform_b))
    highway = T.add(T.mul(gate, transform), T.mul(T.sub(1.0, gate), flat))
    feats = T.add(T.matmul(highway, params.proj_w), params.proj_b)
    return T.reshape(feats, (params.feature_dim,)) if single else feats


def features(params: FeatureNetParams, seq) -> Tensor:
    return extract_features(params, embed_input(params, seq))


def logit(params: FeatureNetParams, seq) -> Tensor:
    """Scalar discriminator score per sequence: ``(B,)`` or ``()``."""
    feats = features(params, seq)
    single = feats.ndim == 1
    if single:
        feats = T.reshape(feats, (1, -1))
    out = T.reshape(T.add(T.matmul(feats, params.head_w), params.head_b), (feats.shape[0],))
    return T.reshape(out, ()) if single else out


def copy_to_auxiliary(disc: FeatureNetParams) -> FeatureNetParams:
    """Deep value copy marked non-trainable; later discriminator updates do not reach it."""
    def frozen(t: Tensor) -> Tensor:
        name = "aux." + t.name.split(".", 1)[1] if t.name else None
        return Tensor(t.data.copy(), requires_grad=False, name=name, dtype=t.dtype)

    return _map(disc, frozen, "aux", True)
