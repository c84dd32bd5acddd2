"""Mean-shift grouping of moving pixels into motion blobs.

Every moving pixel contributes a feature ``(x/hs, y/hs, u/hr, v/hr)``. Each
pixel's feature is shifted to the mean of all moving-pixel features inside
the unit ball around it (flat kernel) until it stops moving. Converged modes
closer than ``merge_radius`` are chained together (single linkage), and each
chain is split into 4-connected pixel components.

Blob text format, one blob per line::

    blob_id size mean_x mean_y mean_u mean_v y,x0,len y,x0,len ...

where each ``y,x0,len`` run covers pixels ``x0 .. x0+len-1`` of row ``y``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .data import FlowField
from .errors import ContractError, FormatError
from .ingest import atomic_write


@dataclass(frozen=True)
class MeanShiftParams:
    spatial_bandwidth: float = 8.0
    range_bandwidth: float = 1.5
    max_iterations: int = 50
    convergence_tol: float = 1e-3
    merge_radius: float = 0.5
    min_blob_size: int = 25

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ContractError(f"{name} must be positive, got {value}")

    @property
    def scale(self) -> np.ndarray:
        hs, hr = self.spatial_bandwidth, self.range_bandwidth
        return np.array([hs, hs, hr, hr])

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class ModeField:
    """Converged modes of the masked pixels, listed in raster order.

    ``modes[i]`` is ``(x, y, u, v)`` for the i-th ``True`` pixel of ``mask``.
    """

    mask: np.ndarray
    modes: np.ndarray

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        ys, xs = np.nonzero(self.mask)
        return xs, ys


@dataclass(eq=False)
class Blob:
    id: int
    pixels: np.ndarray  # (N, 2) int, columns (x, y), raster order
    mode: tuple[float, float, float, float]

    @property
    def size(self) -> int:
        return len(self.pixels)

    @property
    def xs(self) -> np.ndarray:
        return self.pixels[:, 0]

    @property
    def ys(self) -> np.ndarray:
        return self.pixels[:, 1]

    def mask(self, height: int, width: int) -> np.ndarray:
        out = np.zeros((height, width), dtype=bool)
        out[self.ys, self.xs] = True
        return out


def moving_mask(field: FlowField, eps: float) -> np.ndarray:
    return np.hypot(field.u, field.v) > eps


def features(field: FlowField, mask: np.ndarray, params: MeanShiftParams) -> np.ndarray:
    """Normalised ``(x, y, u, v)`` features of masked pixels in raster order."""
    ys, xs = np.nonzero(mask)
    raw = np.column_stack([xs, ys, field.u[ys, xs], field.v[ys, xs]]).astype(np.float64)
    return raw / params.scale


def _shift_group(seeds: np.ndarray, cand: np.ndarray) -> np.ndarray:
    diff = cand[None, :, :] - seeds[:, None, :]
    sq = diff * diff
    d2 = ((sq[..., 0] + sq[..., 1]) + sq[..., 2]) + sq[..., 3]
    inside = d2 <= 1.0
    counts = inside.sum(axis=1)
    sums = np.where(inside[..., None], cand[None, :, :], 0.0).sum(axis=1)
    out = seeds.copy()
    hit = counts > 0
    out[hit] = sums[hit] / counts[hit, None]
    return out


def mean_shift_modes(field: FlowField, mask: np.ndarray, params: MeanShiftParams | None = None) -> ModeField:
    """Run flat-kernel mean shift from every masked pixel.

    Points are bucketed on a unit grid over the normalised spatial axes, so
    a seed only needs the points of the 3x3 cells around it.
    """
    params = params or MeanShiftParams()
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (field.height, field.width):
        raise ContractError(f"mask shape {mask.shape} does not match flow {field.height}x{field.width}")
    if not mask.any():
        raise ContractError("mean shift needs at least one masked pixel")
    points = features(field, mask, params)
    cells = np.floor(points[:, :2]).astype(np.int64)
    buckets: dict[tuple[int, int], list[int]] = {}
    for i, (cx, cy) in enumerate(cells.tolist()):
        buckets.setdefault((cx, cy), []).append(i)
    buckets_arr = {key: np.asarray(val, dtype=np.intp) for key, val in buckets.items()}

    seeds = points.copy()
    active = np.arange(len(points))
    for _ in range(params.max_iterations):
        if active.size == 0:
            break
        current = seeds[active]
        seed_cells = np.floor(current[:, :2]).astype(np.int64)
        keys, inverse = np.unique(seed_cells, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        updated = np.empty_like(current)
        for g, (cx, cy) in enumerate(keys.tolist()):
            members = np.nonzero(inverse == g)[0]
            near = [buckets_arr[(cx + dx, cy + dy)] for dy in (-1, 0, 1) for dx in (-1, 0, 1)
                    if (cx + dx, cy + dy) in buckets_arr]
            if not near:
                updated[members] = current[members]
                continue
            cand_idx = np.sort(np.concatenate(near))
            updated[members] = _shift_group(current[members], points[cand_idx])
        step = np.sqrt(((updated - current) ** 2).sum(axis=1))
        seeds[active] = updated
        active = active[step >= params.convergence_tol]
    return ModeField(mask=mask, modes=seeds * params.scale)


def _cluster_modes(normalised: np.ndarray, radius: float) -> np.ndarray:
    n = len(normalised)
    pairs = cKDTree(normalised).query_pairs(radius, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    return connected_components(graph, directed=False)[1]


def _pixel_components(mask: np.ndarray, cluster: np.ndarray) -> np.ndarray:
    """Split each mode cluster into 4-connected pieces; returns a component id per masked pixel."""
    n = int(mask.sum())
    node = np.full(mask.shape, -1, dtype=np.int64)
    node[mask] = np.arange(n)
    label = np.full(mask.shape, -1, dtype=np.int64)
    label[mask] = cluster
    rows, cols = [], []
    # horizontal neighbours
    same = (node[:, :-1] >= 0) & (node[:, 1:] >= 0) & (label[:, :-1] == label[:, 1:])
    rows.append(node[:, :-1][same])
    cols.append(node[:, 1:][same])
    # vertical neighbours
    same = (node[:-1, :] >= 0) & (node[1:, :] >= 0) & (label[:-1, :] == label[1:, :])
    rows.append(node[:-1, :][same])
    cols.append(node[1:, :][same])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    graph = coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    return connected_components(graph, directed=False)[1]


def extract_blobs(modes: ModeField, params: MeanShiftParams | None = None) -> list[Blob]:
    """Group converged modes into blobs numbered 1.. in raster order of their first pixel."""
    params = params or MeanShiftParams()
    xs, ys = modes.coords()
    n = len(xs)
    if n == 0:
        return []
    cluster = _cluster_modes(modes.modes / params.scale, params.merge_radius)
    comp = _pixel_components(modes.mask, cluster)
    ncomp = comp.max() + 1
    sizes = np.bincount(comp, minlength=ncomp)
    first = np.full(ncomp, n, dtype=np.int64)
    np.minimum.at(first, comp, np.arange(n))
    keep = [c for c in np.argsort(first, kind="stable") if sizes[c] >= params.min_blob_size]
    blobs = []
    for blob_id, c in enumerate(keep, start=1):
        members = np.nonzero(comp == c)[0]
        pixels = np.column_stack([xs[members], ys[members]]).astype(np.int64)
        mode = tuple(float(m) for m in modes.modes[members].mean(axis=0))
        blobs.append(Blob(blob_id, pixels, mode))
    return blobs


def group_motion(field: FlowField, eps: float, params: MeanShiftParams | None = None) -> list[Blob]:
    mask = moving_mask(field, eps)
    if not mask.any():
        return []
    return extract_blobs(mean_shift_modes(field, mask, params), params)


# --------------------------------------------------------------------------
# serialisation


def _runs(pixels: np.ndarray) -> list[tuple[int, int, int]]:
    runs = []
    for x, y in pixels.tolist():
        if runs and runs[-1][0] == y and runs[-1][1] + runs[-1][2] == x:
            y0, x0, length = runs[-1]
            runs[-1] = (y0, x0, length + 1)
        else:
            runs.append((y, x, 1))
    return runs


def format_blobs(blobs) -> str:
    lines = []
    for b in blobs:
        head = " ".join([str(b.id), str(b.size)] + [repr(float(m)) for m in b.mode])
        body = " ".join(f"{y},{x0},{n}" for y, x0, n in _runs(b.pixels))
        lines.append(f"{head} {body}\n" if body else f"{head}\n")
    return "".join(lines)


def parse_blobs(text: str, name: str = "<blobs>") -> list[Blob]:
    blobs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            blob_id, size = int(tokens[0]), int(tokens[1])
            mode = tuple(float(t) for t in tokens[2:6])
            pixels = []
            for run in tokens[6:]:
                y, x0, n = (int(p) for p in run.split(","))
                pixels.extend((x, y) for x in range(x0, x0 + n))
        except (ValueError, IndexError):
            raise FormatError(f"{name}:{lineno}: malformed blob record") from None
        if len(mode) != 4 or len(pixels) != size:
            raise FormatError(f"{name}:{lineno}: size field disagrees with run list")
        blobs.append(Blob(blob_id, np.asarray(pixels, dtype=np.int64).reshape(-1, 2), mode))
    return blobs


def write_blobs(blobs, path) -> None:
    atomic_write(path, format_blobs(blobs).encode("utf-8"))


def read_blobs(path) -> list[Blob]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_blobs(fh.read(), str(path))
