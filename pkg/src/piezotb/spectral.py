"""Band energies, spectral gaps, Fermi projections, and gap maps.

k-grids are uniform on [0, 2pi) with a fixed per-axis offset
(0.5, 0.5/sqrt(2), ...) in index units so that symmetry points never sit
exactly on a vertex; aligned mode drops the offset for tests that need
Dirac points on-grid.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import GapClosedError
from .loops import TWO_PI, Loop
from .model import _as_symbol

__all__ = [
    "k_axis",
    "k_grid",
    "GapReport",
    "BandRanges",
    "band_energies",
    "fermi_projection",
    "spectral_distance",
    "gapless_predicate_uniaxial",
    "margin_predicate_uniaxial",
    "band_ranges",
    "GapMap",
    "gap_map",
    "min_gap_along_loop",
]

DEFAULT_GAP_TOLERANCE = 1e-6
_LOCAL_GAP_TOL = 1e-9


def axis_offset(axis: int) -> float:
    """Index-unit grid offset for torus axis `axis` (0-based; t axis = d)."""
    return 0.5 / np.sqrt(axis + 1.0)


def k_axis(n: int, axis: int = 0, aligned: bool = False) -> np.ndarray:
    """Uniform grid of n points on [0, 2pi) for one torus axis."""
    if n < 1:
        raise ValueError("grid size must be positive")
    off = 0.0 if aligned else axis_offset(axis)
    return (np.arange(n) + off) * (TWO_PI / n)


def k_grid(n: int, d: int, aligned: bool = False) -> np.ndarray:
    """Flat (n^d, d) grid over the d-torus using the per-axis offsets."""
    axes = [k_axis(n, axis=i, aligned=aligned) for i in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, d)


@dataclass
class GapReport:
    """Distance from the Fermi energy to the sampled spectrum."""

    min_distance: float
    argmin_k: np.ndarray
    gapped: bool
    tolerance: float
    argmin_t: float | None = None


@dataclass(frozen=True)
class BandRanges:
    """Per-band energy intervals, sorted by lower edge."""

    intervals: tuple[tuple[float, float], ...]


def band_energies(model_or_symbol, k, q):
    """Band energies (E-, E+) = h0 -+ |h|; broadcasts over k and q."""
    symbol = _as_symbol(model_or_symbol)
    h0, h = symbol.components(k, q)
    ah = np.linalg.norm(h, axis=-1)
    return h0 - ah, h0 + ah


def fermi_projection(model_or_symbol, k, q, tol: float = _LOCAL_GAP_TOL):
    """Lower-band eigenprojection 1/2 (I - sum_j (h_j/|h|) Sigma_j).

    The projection is independent of h0.  Raises GapClosedError when the
    local gap |h| vanishes at the requested point.
    """
    symbol = _as_symbol(model_or_symbol)
    _, h = symbol.components(k, q)
    ah = np.linalg.norm(h, axis=-1)
    if np.any(ah <= tol):
        raise GapClosedError(
            f"local gap |h| <= {tol} at sampled point(s)", k=k, q=q)
    u = h / ah[..., None]
    eye = np.eye(symbol.dim)
    return 0.5 * (eye - np.einsum("...s,sij->...ij", u, symbol.sigmas))


def _distance_field(symbol, ks, q, fermi_energy):
    lo, hi = band_energies(symbol, ks, q)
    return np.minimum(np.abs(lo - fermi_energy), np.abs(hi - fermi_energy))


def _refine_minimum(symbol, q, fermi_energy, k0, step, rounds, width=2):
    """Pattern search around a coarse argmin; handles conical and flat minima.

    The stencil moves at the current step while it keeps improving and the
    step halves only on failure, which follows curved valleys of the band
    distance instead of stalling in them.
    """
    d = symbol.model.d
    rel = np.stack(np.meshgrid(*([np.arange(-width, width + 1)] * d),
                               indexing="ij"), axis=-1).reshape(-1, d).astype(float)
    best_k = np.asarray(k0, float)
    best = float(_distance_field(symbol, best_k, q, fermi_energy))
    step *= 0.5
    floor = step / 2.0 ** rounds
    evaluations = 0
    while step > floor and evaluations < 24:
        cand = best_k + step * rel
        dist = _distance_field(symbol, cand, q, fermi_energy)
        i = int(np.argmin(dist))
        evaluations += 1
        if dist[i] < best * (1 - 1e-12):
            best = float(dist[i])
            best_k = cand[i]
        else:
            step *= 0.5
    best, best_k = _newton_polish(symbol, q, fermi_energy, best_k, best)
    return best, best_k % TWO_PI


def _newton_polish(symbol, q, fermi_energy, k0, best):
    """Descend onto the band minimum from a localized starting point.

    With the Fermi energy at the symmetry point of a chiral model
    (h0 = 0 = E_F) the distance is |h| and Levenberg-Marquardt on the
    smooth component vector handles degenerate band touchings; otherwise a
    scalar Gauss-Newton step on the nearest-band residual is used.  Only
    genuine improvements of the distance are ever accepted.
    """
    h0_val, _ = symbol.components(np.asarray(k0, float), q)
    if abs(float(h0_val) - 0.0) < 1e-12 and abs(fermi_energy) < 1e-12:
        return _marquardt_polish(symbol, q, k0, best)
    return _scalar_newton_polish(symbol, q, fermi_energy, k0, best)


def _marquardt_polish(symbol, q, k0, best, iters: int = 25):
    k = np.asarray(k0, float).copy()
    best_k = k.copy()
    damping = 1e-4
    eye = np.eye(symbol.model.d)
    for _ in range(iters):
        _, h = symbol.components(k, q)
        _, dh = symbol.component_k_gradient(k, q)   # (d, 2m+1)
        jac = dh.T                                  # (2m+1, d)
        grad = jac.T @ h
        if float(np.linalg.norm(grad)) < 1e-15:
            break
        step = -np.linalg.solve(jac.T @ jac + damping * eye, grad)
        k_new = k + step
        _, h_new = symbol.components(k_new, q)
        d_new = float(np.linalg.norm(h_new))
        if d_new < best:
            best, best_k = d_new, k_new.copy()
            k = k_new
            damping = max(damping / 3.0, 1e-12)
            if best < 1e-14:
                break
        else:
            damping *= 10.0
            if damping > 1e6:
                break
    return best, best_k


def _scalar_newton_polish(symbol, q, fermi_energy, k0, best, iters: int = 10):
    k = np.asarray(k0, float).copy()
    best_k = k.copy()
    for _ in range(iters):
        h0, h = symbol.components(k, q)
        dh0, dh = symbol.component_k_gradient(k, q)
        ah = float(np.linalg.norm(h))
        if ah < 1e-14:
            break
        r_lo = float(h0) - ah - fermi_energy
        r_hi = float(h0) + ah - fermi_energy
        sign = 1.0 if abs(r_hi) < abs(r_lo) else -1.0
        r = r_hi if sign > 0 else r_lo
        grad = dh0 + sign * (dh @ h) / ah
        denom = float(grad @ grad)
        if denom < 1e-18:
            break
        k_new = k - r * grad / denom
        d_new = float(_distance_field(symbol, k_new, q, fermi_energy))
        if d_new >= best:
            break
        best, best_k = d_new, k_new.copy()
        k = k_new
    return best, best_k


class _GridEvaluator:
    """Distance field on a fixed k-grid with the q-independent phases cached."""

    def __init__(self, symbol, n_k, aligned):
        self.symbol = symbol
        self.ks = k_grid(n_k, symbol.model.d, aligned=aligned)
        phases = np.exp(-1j * (self.ks @ symbol._n.T))      # (K, T)
        self._phc = phases[:, :, None] * symbol._projs[None, :, :]

    def distances(self, q, fermi_energy):
        coefs = np.stack([c(q) for c in self.symbol._coeffs])
        hc = np.einsum("ktc,t->kc", self._phc, coefs)
        h0 = hc[:, 0].real
        ah = np.linalg.norm(hc[:, 1:].real, axis=-1)
        return np.minimum(np.abs(h0 - ah - fermi_energy),
                          np.abs(h0 + ah - fermi_energy))

    def minimum(self, q, fermi_energy):
        dist = self.distances(q, fermi_energy)
        i = int(np.argmin(dist))
        return float(dist[i]), self.ks[i]


def _coarse_minimum(symbol, q, fermi_energy, n_k, aligned):
    ks = k_grid(n_k, symbol.model.d, aligned=aligned)
    dist = _distance_field(symbol, ks, q, fermi_energy)
    i = int(np.argmin(dist))
    return float(dist[i]), ks[i]


def spectral_distance(model_or_symbol, q, fermi_energy: float = 0.0,
                      n_k: int = 128, *, aligned: bool = False,
                      tolerance: float = DEFAULT_GAP_TOLERANCE,
                      refine: bool = True, refine_rounds: int = 9) -> GapReport:
    """Minimum distance from the Fermi energy to the bands over a k-grid.

    The coarse grid minimum is sharpened by a pattern search plus a
    Gauss-Newton polish so that gapless parameter points report distances
    well below any sensible classification threshold.
    """
    if n_k < 8:
        raise ValueError("n_k must be at least 8")
    symbol = _as_symbol(model_or_symbol)
    q = np.asarray(q, dtype=float)
    best, best_k = _coarse_minimum(symbol, q, fermi_energy, n_k, aligned)
    if refine:
        best, best_k = _refine_minimum(symbol, q, fermi_energy, best_k,
                                       TWO_PI / n_k, refine_rounds)
    return GapReport(best, best_k, best > tolerance, tolerance)


def gapless_predicate_uniaxial(q) -> bool:
    """Exact gaplessness test for the uniaxial preset (q0 = 1, E_F = 0).

    Gapless iff q3 = 0 and ||q1| - |q2|| <= 1 <= |q1| + |q2|.  The q0 = 0
    branch of the gapless set lies outside the preset box and is not covered.
    """
    q1, q2, q3 = (float(v) for v in q)
    return q3 == 0.0 and abs(abs(q1) - abs(q2)) <= 1.0 <= abs(q1) + abs(q2)


def margin_predicate_uniaxial(q, g: float) -> bool:
    """Membership in the margin region where the gap exceeds g (uniaxial, E_F=0)."""
    if g <= 0:
        raise ValueError("gap margin g must be positive")
    q1, q2, q3 = (float(v) for v in q)
    return (q2 < q1 - 1.0 - g / 2.0
            or q2 > q1 + 1.0 + g / 2.0
            or q2 < -q1 + 1.0 - g / 2.0
            or abs(q3) > g / 2.0)


def band_ranges(model_or_symbol, q, n_k: int = 128,
                aligned: bool = False) -> BandRanges:
    """Per-band [min, max] energy intervals over a k-grid."""
    symbol = _as_symbol(model_or_symbol)
    ks = k_grid(n_k, symbol.model.d, aligned=aligned)
    lo, hi = band_energies(symbol, ks, np.asarray(q, float))
    intervals = sorted([(float(lo.min()), float(lo.max())),
                        (float(hi.min()), float(hi.max()))])
    return BandRanges(tuple(intervals))


@dataclass
class GapMap:
    """Gap scan over a parameter box; rows are row-major over the cell grid."""

    axes: list[np.ndarray]
    cells: np.ndarray           # (n_cells, n_params)
    min_distance: np.ndarray    # (n_cells,)
    gapped: np.ndarray          # (n_cells,) bool
    tolerance: float
    fermi_energy: float
    n_k: int

    def to_csv(self, fh) -> None:
        n_params = self.cells.shape[1]
        header = ",".join(f"q{i + 1}" for i in range(n_params))
        fh.write(header + ",min_distance,gapped\n")
        for row, dist, g in zip(self.cells, self.min_distance, self.gapped):
            vals = ",".join(f"{v:.17g}" for v in row)
            fh.write(f"{vals},{dist:.17g},{'true' if g else 'false'}\n")


def gap_map(model_or_symbol, region, resolution, fermi_energy: float = 0.0,
            n_k: int = 128, tolerance: float = 1e-3, *, aligned: bool = False,
            refine: bool = True, refine_below: float = 0.25,
            threads: int | None = None) -> GapMap:
    """Per-cell spectral distance over a box in parameter space.

    `region` is a sequence of (lo, hi) per parameter axis and `resolution`
    the number of grid values per axis (endpoints included; a single-value
    axis uses lo).  Local refinement runs only for cells whose coarse
    distance falls below `refine_below`; cells above it keep the coarse
    value, which exceeds any classification threshold by construction.
    Results are deterministic and independent of the thread count: cells
    are computed independently and placed by index.
    """
    symbol = _as_symbol(model_or_symbol)
    region = [tuple(map(float, ax)) for ax in region]
    resolution = [int(r) for r in resolution]
    if len(region) != symbol.model.n_params or len(resolution) != len(region):
        raise ValueError("region/resolution do not match the parameter count")
    if any(r < 1 for r in resolution):
        raise ValueError("resolution entries must be positive")
    box = symbol.model.admissible_box
    if box is not None:
        for (lo, hi), (blo, bhi) in zip(region, box):
            if lo > hi or lo < blo - 1e-12 or hi > bhi + 1e-12:
                raise ValueError(
                    f"region axis [{lo}, {hi}] outside admissible box [{blo}, {bhi}]")
    axes = [np.linspace(lo, hi, r) for (lo, hi), r in zip(region, resolution)]
    mesh = np.meshgrid(*axes, indexing="ij")
    cells = np.stack(mesh, axis=-1).reshape(-1, len(axes))

    evaluator = _GridEvaluator(symbol, n_k, aligned)

    def cell_distance(i):
        best, best_k = evaluator.minimum(cells[i], fermi_energy)
        if refine and best < refine_below:
            best, _ = _refine_minimum(symbol, cells[i], fermi_energy, best_k,
                                      TWO_PI / n_k, rounds=9)
        return best

    n_cells = len(cells)
    dist = np.empty(n_cells)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, val in zip(range(n_cells), pool.map(cell_distance,
                                                       range(n_cells),
                                                       chunksize=64)):
                dist[i] = val
    else:
        for i in range(n_cells):
            dist[i] = cell_distance(i)
    return GapMap(axes, cells, dist, dist > tolerance, tolerance,
                  fermi_energy, n_k)


def min_gap_along_loop(model_or_symbol, loop: Loop, fermi_energy: float = 0.0,
                       n_k: int = 64, n_t: int | None = None, *,
                       aligned: bool = False,
                       tolerance: float = DEFAULT_GAP_TOLERANCE,
                       refine: bool = True) -> GapReport:
    """Minimum spectral distance over the loop samples."""
    symbol = _as_symbol(model_or_symbol)
    n_t = n_t or loop.sample_count
    ts = np.arange(n_t) * TWO_PI / n_t
    qs = loop(ts)                              # (n_t, N)
    ks = k_grid(n_k, symbol.model.d, aligned=aligned)
    dist = _distance_field(symbol, ks[None, :, :], qs[:, None, :], fermi_energy)
    it, ik = np.unravel_index(int(np.argmin(dist)), dist.shape)
    best, best_k = float(dist[it, ik]), ks[ik]
    if refine:
        best, best_k = _refine_minimum(symbol, qs[it], fermi_energy, best_k,
                                       TWO_PI / n_k, rounds=9)
    return GapReport(best, best_k, best > tolerance, tolerance,
                     argmin_t=float(ts[it]))
