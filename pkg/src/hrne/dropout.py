"""Inverted dropout and the bookkeeping of where masks are applied."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .numerics import DTYPE

# Every place a mask may be drawn. Each is the input or output boundary of an
# LSTM layer; recurrent h/c paths have no site by construction.
SITES = ("enc1.input", "enc1.output", "enc2.output", "dec.input", "dec.output")


def _check_rate(rate):
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")


def dropout_apply(rng, rate: float, v, mode: str = "train"):
    """Zero each entry with probability ``rate`` and rescale survivors by 1/(1-rate).

    In ``infer`` mode (or with rate 0) ``v`` is returned unchanged.
    """
    _check_rate(rate)
    if mode not in ("train", "infer"):
        raise ConfigError(f"dropout mode must be 'train' or 'infer', got {mode!r}")
    v = np.asarray(v, dtype=DTYPE)
    if mode == "infer" or rate == 0.0:
        return v
    keep = rng.random(v.shape) >= rate
    return v * keep / (1.0 - rate)


class Dropout:
    """Mask source handed to the model's forward pass.

    ``mask(site, shape)`` returns an inverted-dropout mask or ``None`` when
    dropout is inactive. Requested sites are logged in ``self.sites``.
    """

    def __init__(self, rate: float, rng=None, mode: str = "train"):
        _check_rate(rate)
        self.rate = rate
        self.rng = rng
        self.mode = mode
        self.sites: list[str] = []

    @property
    def active(self) -> bool:
        return self.mode == "train" and self.rate > 0.0

    def mask(self, site: str, shape):
        if site not in SITES:
            raise ConfigError(f"unknown dropout site {site!r}")
        self.sites.append(site)
        if not self.active:
            return None
        keep = self.rng.random(shape) >= self.rate
        return keep / (1.0 - self.rate)


def apply_mask(v, mask):
    return v if mask is None else v * mask
