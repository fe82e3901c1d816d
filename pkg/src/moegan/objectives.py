"""Scalar training objectives: MLE, feature statistics alignment, and the
relativistic discriminator / generator losses."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from moegan import tensor as T
from moegan.features import FeatureNetParams, features, logit
from moegan.generator import GeneratorParams, sequence_log_likelihood
from moegan.tensor import Tensor


@dataclass
class LossReport:
    loss_d: float
    loss_g: float
    fsa: float
    mean_gap: float

    def __post_init__(self):
        for name in ("loss_d", "loss_g", "fsa", "mean_gap"):
            if not math.isfinite(getattr(self, name)):
                raise FloatingPointError(f"non-finite {name}: {getattr(self, name)}")
        if self.fsa < 0:
            raise ValueError("fsa distance cannot be negative")


def _non_empty(batch, what: str):
    if batch is None or (hasattr(batch, "shape") and (len(batch.shape) == 0 or batch.shape[0] == 0)) \
            or (not hasattr(batch, "shape") and len(batch) == 0):
        raise ValueError(f"empty {what} batch")


def mle_loss(gen: GeneratorParams, batch) -> Tensor:
    """Mean negative per-token log-likelihood over the batch."""
    batch = np.asarray(batch)
    _non_empty(batch, "MLE")
    if batch.ndim == 1:
        batch = batch[None]
    return T.neg(T.mean(sequence_log_likelihood(gen, batch)))


def centroid_distance(real_feats, fake_feats) -> Tensor:
    """Euclidean distance between the batch means of two feature matrices."""
    real_feats, fake_feats = T.as_tensor(real_feats), T.as_tensor(fake_feats)
    _non_empty(real_feats, "real")
    _non_empty(fake_feats, "fake")
    return T.l2_norm(T.sub(T.mean(real_feats, axis=0), T.mean(fake_feats, axis=0)))


def fsa_distance(aux: FeatureNetParams, real, fake) -> Tensor:
    """Feature statistics alignment under the frozen encoder.

    Real features are computed without recording; the result is differentiable
    only through ``fake``.
    """
    _non_empty(real, "real")
    _non_empty(fake, "fake")
    with T.no_grad():
        real_feats = features(aux, real).detach()
    return centroid_distance(real_feats, features(aux, fake))


def gap_from_logits(h_real, h_fake) -> Tensor:
    h_real, h_fake = T.as_tensor(h_real), T.as_tensor(h_fake)
    if h_real.shape != h_fake.shape:
        raise T.ShapeError("relativistic_gap", f"real batch {h_real.shape} vs fake batch {h_fake.shape}")
    return T.sub(h_real, h_fake)


def relativistic_gap(disc: FeatureNetParams, real, fake) -> Tensor:
    """Per-pair ``H(real_j) - H(fake_j)``, paired by batch position."""
    n_real = len(real) if not isinstance(real, Tensor) else real.shape[0]
    n_fake = len(fake) if not isinstance(fake, Tensor) else fake.shape[0]
    if n_real != n_fake:
        raise T.ShapeError("relativistic_gap", f"batch sizes differ: {n_real} vs {n_fake}")
    return gap_from_logits(logit(disc, real), logit(disc, fake))


def discriminator_loss(delta) -> Tensor:
    """``-mean(log sigmoid(delta))``."""
    delta = T.as_tensor(delta)
    if delta.data.size == 0:
        raise ValueError("empty gap vector")
    return T.neg(T.mean(T.log_sigmoid(delta)))


def generator_loss(delta, fsa, fsa_weight: float = 1.0) -> Tensor:
    """``-L_D(delta) + fsa_weight * fsa``."""
    adversarial = T.neg(discriminator_loss(delta))
    fsa = T.as_tensor(fsa)
    if fsa_weight != 1.0:
        fsa = T.scale(fsa, fsa_weight)
    return T.add(adversarial, T.reshape(fsa, ()))
