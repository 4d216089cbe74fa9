"""Natural-scene statistics behind the BRISQUE feature vector.

The pipeline per scale is: luminance plane -> MSCN coefficients -> GGD fit
of the coefficients and AGGD fits of the four neighbour-product fields.
Two scales (the plane and its 2x2 block average) give 36 features.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..core_io import Image
from ..distort import pyr_down
from ..errors import DegenerateDims, DegenerateInput, OneSidedData, UnscorableImage

WINDOW_RADIUS = 3
WINDOW_SIGMA = 7.0 / 6.0
DEFAULT_C = 1.0
MIN_SAMPLES = 100
MIN_VARIANCE = 1e-12
MIN_FEATURE_DIM = 16
N_FEATURES = 36

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# shape grid for moment-ratio inversion
ALPHA_MIN = 0.2
ALPHA_MAX = 10.0
ALPHA_STEP = 0.001

ORIENTATIONS = ("H", "V", "D1", "D2")


@dataclass(frozen=True)
class GgdParams:
    alpha: float
    sigma: float

    @property
    def variance(self) -> float:
        return self.sigma**2


@dataclass(frozen=True)
class AggdParams:
    alpha: float
    sigma_left: float
    sigma_right: float
    eta: float


class Products(NamedTuple):
    H: np.ndarray
    V: np.ndarray
    D1: np.ndarray
    D2: np.ndarray


def to_luma(img: Image) -> np.ndarray:
    if img.channels == 1:
        return img.channel(0).copy()
    r, g, b = (img.channel(k) for k in range(3))
    return r * LUMA_WEIGHTS[0] + g * LUMA_WEIGHTS[1] + b * LUMA_WEIGHTS[2]


@functools.lru_cache(maxsize=None)
def gaussian_taps(radius: int = WINDOW_RADIUS, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _correlate_axis(arr: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Zero-padded 1-D correlation along ``axis``; output has the input's shape."""
    r = len(taps) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(arr, pad)
    n = arr.shape[axis]
    out = np.zeros_like(arr)
    for k, t in enumerate(taps):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(k, k + n)
        out += t * padded[tuple(sl)]
    return out


def _gaussian_filter(arr: np.ndarray, taps: np.ndarray) -> np.ndarray:
    return _correlate_axis(_correlate_axis(arr, taps, 0), taps, 1)


def _local_stats(arr: np.ndarray):
    # shift by the minimum so constant planes give exactly zero deviations
    taps = gaussian_taps()
    base = arr.min()
    shifted = arr - base
    norm = _gaussian_filter(np.ones_like(arr), taps)
    mu = _gaussian_filter(shifted, taps) / norm
    second = _gaussian_filter(shifted * shifted, taps) / norm
    sigma = np.sqrt(np.maximum(second - mu * mu, 0.0))
    return base, shifted, mu, sigma


def local_mean_std(plane):
    """Gaussian-weighted local mean and standard deviation.

    Window weights falling outside the plane are dropped and the remainder
    renormalised.
    """
    base, _, mu, sigma = _local_stats(np.asarray(plane, dtype=np.float64))
    return mu + base, sigma


def mscn(plane, c: float = DEFAULT_C) -> np.ndarray:
    """Mean-subtracted contrast-normalised coefficients ``(I - mu) / (sigma + c)``."""
    arr = np.asarray(plane, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
        raise DegenerateDims(f"mscn needs a plane of at least 2x2, got shape {arr.shape}")
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("plane contains non-finite values")
    _, shifted, mu, sigma = _local_stats(arr)
    return (shifted - mu) / (sigma + c)


def pairwise_products(m) -> Products:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
        raise DegenerateDims(f"pairwise products need at least 2x2, got shape {arr.shape}")
    return Products(
        H=arr[:, :-1] * arr[:, 1:],
        V=arr[:-1, :] * arr[1:, :],
        D1=arr[:-1, :-1] * arr[1:, 1:],
        D2=arr[:-1, 1:] * arr[1:, :-1],
    )


# ---------------------------------------------------------------------------
# moment-ratio inversion
# ---------------------------------------------------------------------------


def moment_ratio(alpha: float) -> float:
    """``E[|x|]^2 / E[x^2]`` of a zero-mean GGD with shape ``alpha``."""
    # lgamma keeps Gamma(1/alpha) finite near alpha = 0.2
    return math.exp(
        2.0 * math.lgamma(2.0 / alpha) - math.lgamma(1.0 / alpha) - math.lgamma(3.0 / alpha)
    )


@functools.lru_cache(maxsize=1)
def ratio_grid():
    n = int(round((ALPHA_MAX - ALPHA_MIN) / ALPHA_STEP)) + 1
    alphas = ALPHA_MIN + ALPHA_STEP * np.arange(n)
    ratios = np.array([moment_ratio(a) for a in alphas])
    alphas.setflags(write=False)
    ratios.setflags(write=False)
    return alphas, ratios


def invert_ratio(target: float) -> float:
    """Grid shape whose moment ratio is nearest ``target``; ties go to the smaller shape."""
    alphas, ratios = ratio_grid()
    # argmin returns the first minimum, i.e. the smaller alpha on ties
    return float(alphas[int(np.argmin(np.abs(ratios - target)))])


def _samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < MIN_SAMPLES:
        raise DegenerateInput(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DegenerateInput("samples contain non-finite values")
    if x.var() <= MIN_VARIANCE:
        raise DegenerateInput("sample variance is ~zero")
    return x


def fit_ggd(samples) -> GgdParams:
    x = _samples(samples)
    second = float(np.mean(x * x))
    ratio = float(np.mean(np.abs(x))) ** 2 / second
    return GgdParams(alpha=invert_ratio(ratio), sigma=math.sqrt(second))


def fit_aggd(samples) -> AggdParams:
    x = _samples(samples)
    left = x[x < 0]
    right = x[x > 0]
    if left.size == 0 or right.size == 0:
        raise OneSidedData("AGGD fit needs both negative and positive samples")
    sl = math.sqrt(float(np.mean(left * left)))
    sr = math.sqrt(float(np.mean(right * right)))
    r_hat = float(np.mean(np.abs(x))) ** 2 / float(np.mean(x * x))
    # (g^3+1)(g+1)/(g^2+1)^2 with g = sl/sr, written symmetrically in sl, sr
    # so that mirrored data yields a bit-identical estimate
    correction = (sl**3 + sr**3) * (sl + sr) / (sl**2 + sr**2) ** 2
    alpha = invert_ratio(r_hat * correction)
    g1, g2, g3 = (math.gamma(k / alpha) for k in (1.0, 2.0, 3.0))
    eta = (sr - sl) * math.sqrt(g1 / g3) * g2 / g1
    return AggdParams(alpha=alpha, sigma_left=sl, sigma_right=sr, eta=eta)


# ---------------------------------------------------------------------------
# feature vector
# ---------------------------------------------------------------------------


def scale_features(plane, c: float = DEFAULT_C) -> list:
    """The 18 features of a single scale."""
    m = mscn(plane, c)
    ggd = fit_ggd(m)
    feats = [ggd.alpha, ggd.variance]
    for field in pairwise_products(m):
        a = fit_aggd(field)
        feats += [a.alpha, a.eta, a.sigma_left**2, a.sigma_right**2]
    return feats


def brisque_features(plane, c: float = DEFAULT_C) -> np.ndarray:
    """36-element feature vector: 18 from the plane, 18 from its 2x2 block average.

    Raises :class:`UnscorableImage` when a fit is degenerate, e.g. for a
    constant plane, or when the half-scale plane is too small to fit (planes
    under ~22x22 pixels).
    """
    arr = np.asarray(plane, dtype=np.float64)
    if arr.ndim != 2 or min(arr.shape) < MIN_FEATURE_DIM:
        raise DegenerateDims(
            f"feature extraction needs at least {MIN_FEATURE_DIM}x{MIN_FEATURE_DIM}, got {arr.shape}"
        )
    try:
        feats = scale_features(arr, c) + scale_features(pyr_down(arr), c)
    except DegenerateInput as exc:
        raise UnscorableImage(str(exc)) from exc
    out = np.asarray(feats, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise UnscorableImage("non-finite feature value")
    return out


def image_features(img: Image, c: float = DEFAULT_C) -> np.ndarray:
    return brisque_features(to_luma(img), c)
