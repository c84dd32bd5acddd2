"""Dense two-frame optical flow by polynomial expansion (Farneback).

Each frame is locally approximated by ``f(p + s) ~ s'As + b's + c``. If the
next frame is the previous one shifted by ``d`` then ``b_next = b_prev - 2Ad``,
so ``d`` follows from a least-squares solve pooled over a box window. The
estimate is refined coarse to fine over a Gaussian pyramid.

All borders replicate the nearest edge pixel.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import FlowField, Frame
from .errors import ContractError

_BLUR5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass(frozen=True)
class FlowParams:
    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    window_size: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ContractError("pyramid_levels must be >= 1")
        if not 0.0 < self.pyramid_scale < 1.0:
            raise ContractError("pyramid_scale must lie in (0, 1)")
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ContractError("window_size must be an odd positive integer")
        if self.iterations < 1:
            raise ContractError("iterations must be >= 1")
        if self.poly_n < 1 or self.poly_n % 2 == 0:
            raise ContractError("poly_n must be an odd positive integer")
        if not self.poly_sigma > 0.0:
            raise ContractError("poly_sigma must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class PolyExpansion:
    """Per-pixel quadratic coefficients, each an ``[H, W]`` array.

    ``A = [[a11, a12], [a12, a22]]``, ``b = (b1, b2)`` with the first axis
    horizontal (x, columns) and the second vertical (y, rows).
    """

    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    c: np.ndarray

    @property
    def height(self) -> int:
        return self.c.shape[0]

    @property
    def width(self) -> int:
        return self.c.shape[1]

    @property
    def A(self) -> np.ndarray:
        return np.stack(
            [np.stack([self.a11, self.a12], -1), np.stack([self.a12, self.a22], -1)], -2
        )

    @property
    def b(self) -> np.ndarray:
        return np.stack([self.b1, self.b2], -1)


def _luma(image) -> np.ndarray:
    return image.luma if isinstance(image, Frame) else np.asarray(image, dtype=np.float64)


def _correlate_rows(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate along axis 1 with edge replication; ``kernel`` has odd length."""
    r = len(kernel) // 2
    padded = np.pad(img, ((0, 0), (r, r)), mode="edge")
    width = img.shape[1]
    out = np.zeros_like(img, dtype=np.float64)
    for t, w in enumerate(kernel):
        out += w * padded[:, t:t + width]
    return out


def _correlate_cols(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return _correlate_rows(img.T, kernel).T


def blur5(img: np.ndarray) -> np.ndarray:
    return _correlate_cols(_correlate_rows(img, _BLUR5), _BLUR5)


def resample_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize with pixel centres aligned; samples outside clamp to the edge."""
    src_h, src_w = img.shape
    ys = (np.arange(height) + 0.5) * (src_h / height) - 0.5
    xs = (np.arange(width) + 0.5) * (src_w / width) - 0.5
    return _sample(img, np.broadcast_to(xs, (height, width)), np.broadcast_to(ys[:, None], (height, width)))


def _sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = img.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xs).astype(np.intp), w - 1)
    y0 = np.minimum(np.floor(ys).astype(np.intp), h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def gaussian_pyramid(frame: Frame, levels: int, scale: float, min_size: int = 1) -> list[Frame]:
    """Level 0 is ``frame``; level i has size ``round(dim * scale**i)``.

    Levels whose smaller side would drop below ``min_size`` are omitted.
    """
    if levels < 1:
        raise ContractError("levels must be >= 1")
    if not 0.0 < scale < 1.0:
        raise ContractError("scale must lie in (0, 1)")
    pyramid = [frame]
    for i in range(1, levels):
        h = _round_half_up(frame.height * scale ** i)
        w = _round_half_up(frame.width * scale ** i)
        if min(h, w) < max(min_size, 1):
            break
        smoothed = blur5(pyramid[-1].luma)
        luma = np.clip(resample_bilinear(smoothed, h, w), 0.0, 1.0)
        pyramid.append(Frame(luma, index=frame.index))
    return pyramid


def _applicability(poly_n: int, poly_sigma: float) -> tuple[np.ndarray, np.ndarray]:
    r = poly_n // 2
    t = np.arange(-r, r + 1, dtype=np.float64)
    return t, np.exp(-(t * t) / (2.0 * poly_sigma * poly_sigma))


def polynomial_expansion(frame, poly_n: int = 5, poly_sigma: float = 1.1) -> PolyExpansion:
    """Weighted least-squares quadratic fit around every pixel.

    The Gaussian applicability is separable and the basis
    ``{1, x, y, x^2, y^2, xy}`` is nearly orthogonal under it, so the fit
    reduces to six separable correlations followed by a fixed 3x3 solve for
    the ``{1, x^2, y^2}`` block; ``x``, ``y`` and ``xy`` decouple.
    """
    img = _luma(frame)
    if poly_n < 1 or poly_n % 2 == 0:
        raise ContractError("poly_n must be an odd positive integer")
    if min(img.shape) < poly_n:
        raise ContractError(f"frame {img.shape} smaller than poly_n={poly_n}")
    t, g = _applicability(poly_n, poly_sigma)
    m0, m2, m4 = g.sum(), (g * t * t).sum(), (g * t ** 4).sum()

    # rows first: x-moments of orders 0, 1, 2
    r0 = _correlate_rows(img, g)
    r1 = _correlate_rows(img, g * t)
    r2 = _correlate_rows(img, g * t * t)
    p1 = _correlate_cols(r0, g)
    px = _correlate_cols(r1, g)
    py = _correlate_cols(r0, g * t)
    pxx = _correlate_cols(r2, g)
    pyy = _correlate_cols(r0, g * t * t)
    pxy = _correlate_cols(r1, g * t)

    gram = np.array([
        [m0 * m0, m0 * m2, m0 * m2],
        [m0 * m2, m0 * m4, m2 * m2],
        [m0 * m2, m2 * m2, m0 * m4],
    ])
    inv = np.linalg.inv(gram)
    c = inv[0, 0] * p1 + inv[0, 1] * pxx + inv[0, 2] * pyy
    a11 = inv[1, 0] * p1 + inv[1, 1] * pxx + inv[1, 2] * pyy
    a22 = inv[2, 0] * p1 + inv[2, 1] * pxx + inv[2, 2] * pyy
    b1 = px / (m0 * m2)
    b2 = py / (m0 * m2)
    a12 = pxy / (m2 * m2) / 2.0
    return PolyExpansion(a11=a11, a12=a12, a22=a22, b1=b1, b2=b2, c=c)


def box_sum(img: np.ndarray, window: int) -> np.ndarray:
    """Separable running sum over a ``window`` x ``window`` neighbourhood."""
    r = window // 2
    padded = np.pad(img, r, mode="edge")
    h, w = img.shape
    cs = np.cumsum(np.pad(padded, ((0, 0), (1, 0))), axis=1)
    rows = cs[:, window:window + w] - cs[:, :w]
    cs = np.cumsum(np.pad(rows, ((1, 0), (0, 0))), axis=0)
    return cs[window:window + h] - cs[:h]


def _update_flow(e1: PolyExpansion, e2: PolyExpansion, flow: np.ndarray, window: int) -> np.ndarray:
    h, w = e1.c.shape
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    u, v = flow[..., 0], flow[..., 1]
    xs, ys = gx + u, gy + v
    a11 = 0.5 * (e1.a11 + _sample(e2.a11, xs, ys))
    a12 = 0.5 * (e1.a12 + _sample(e2.a12, xs, ys))
    a22 = 0.5 * (e1.a22 + _sample(e2.a22, xs, ys))
    db1 = -0.5 * (_sample(e2.b1, xs, ys) - e1.b1) + a11 * u + a12 * v
    db2 = -0.5 * (_sample(e2.b2, xs, ys) - e1.b2) + a12 * u + a22 * v

    g11 = box_sum(a11 * a11 + a12 * a12, window)
    g12 = box_sum(a11 * a12 + a12 * a22, window)
    g22 = box_sum(a12 * a12 + a22 * a22, window)
    h1 = box_sum(a11 * db1 + a12 * db2, window)
    h2 = box_sum(a12 * db1 + a22 * db2, window)

    damping = 1e-3 * (g11 + g22) / 2.0 + 1e-12
    g11 = g11 + damping
    g22 = g22 + damping
    det = g11 * g22 - g12 * g12
    out = np.empty_like(flow)
    out[..., 0] = (g22 * h1 - g12 * h2) / det
    out[..., 1] = (g11 * h2 - g12 * h1) / det
    return out


def farneback_flow(prev: Frame, next: Frame, params: FlowParams | None = None) -> FlowField:
    """Flow from ``prev`` to ``next``: ``next(p + d(p)) ~ prev(p)``."""
    params = params or FlowParams()
    if prev.shape != next.shape:
        raise ContractError(f"frame shapes differ: {prev.shape} vs {next.shape}")
    if min(prev.shape) < params.poly_n:
        raise ContractError(f"frame {prev.shape} smaller than poly_n={params.poly_n}")
    pyr1 = gaussian_pyramid(prev, params.pyramid_levels, params.pyramid_scale, params.poly_n)
    pyr2 = gaussian_pyramid(next, params.pyramid_levels, params.pyramid_scale, params.poly_n)

    flow = None
    for level in range(len(pyr1) - 1, -1, -1):
        f1, f2 = pyr1[level], pyr2[level]
        if flow is None:
            flow = np.zeros(f1.shape + (2,))
        else:
            up = np.empty(f1.shape + (2,))
            for ch in range(2):
                up[..., ch] = resample_bilinear(flow[..., ch], *f1.shape) / params.pyramid_scale
            flow = up
        e1 = polynomial_expansion(f1, params.poly_n, params.poly_sigma)
        e2 = polynomial_expansion(f2, params.poly_n, params.poly_sigma)
        for _ in range(params.iterations):
            flow = _update_flow(e1, e2, flow, params.window_size)
    return FlowField(flow)


def flow_magnitude(field: FlowField) -> np.ndarray:
    return np.hypot(field.u, field.v)


def motion_fraction(field: FlowField, eps: float = 0.5) -> float:
    """Fraction of pixels whose flow magnitude is strictly above ``eps``."""
    if eps < 0:
        raise ContractError("eps must be non-negative")
    return float(np.count_nonzero(flow_magnitude(field) > eps)) / (field.width * field.height)


def motion_gate(fraction: float, low: float = 0.10, high: float = 0.70) -> bool:
    """True when ``low < fraction < high``."""
    if not 0.0 <= low < high <= 1.0:
        raise ContractError(f"gate thresholds must satisfy 0 <= low < high <= 1, got {low}, {high}")
    return bool(low < fraction < high)
