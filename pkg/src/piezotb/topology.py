"""Sphere parametrization, pole cells, Chern numbers, sections, Kato unitary.

Coordinates on the (d+1)-torus are ordered (k_1, ..., k_d, t).  A plane
(j, n) with 1 <= j < n <= d+1 is the embedded 2-torus spanned by axes j and
n, oriented by (e_j, e_n); the remaining coordinates are frozen at the
basepoint.  With this orientation the polarization components sit in the
last column of the Chern matrix, Delta_P_j = C_{j, d+1}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import (DegenerateEmbeddingError, GapClosedError,
                     NotConnectableError, ResolutionError)
from .loops import TWO_PI, Loop
from .model import _as_symbol
from .spectral import k_axis, min_gap_along_loop

__all__ = [
    "SphereAngles",
    "sphere_angles",
    "unit_vector",
    "PoleCell",
    "PoleCellSet",
    "pole_cells",
    "chern_winding",
    "chern_plaquette",
    "plaquette_chern_numbers",
    "occupied_state",
    "projector_field",
    "ChernMatrix",
    "chern_matrix",
    "chern_report",
    "TrivialityVerdict",
    "triviality_check",
    "local_section",
    "kato_intertwiner",
]

_AZIMUTH_TOL = 1e-9
# Principal-value edge increments are ambiguous only when they reach pi
# exactly; near-pi increments occur legitimately next to half-winding lines
# of the azimuthal field and keep plaquette sums exact.
_EDGE_LIMIT = np.pi * (1.0 - 1e-9)


# -- spherical parametrization --------------------------------------------


@dataclass(frozen=True)
class SphereAngles:
    """Angles (theta_1..theta_{2m-1}, phi) of a unit direction on S^{2m}."""

    theta: tuple[float, ...]      # polar angles in [0, pi]
    phi: float                    # azimuth in (-pi, pi]
    pole: str | None = None       # set when the azimuth is undefined


def sphere_angles(h, tol: float = _AZIMUTH_TOL) -> SphereAngles:
    """Angles of h/|h| on S^{2m} for a (2m+1)-component field value.

    theta_j = atan2(sqrt(h_1^2+..+h_{2m+1-j}^2), h_{2m+2-j}); phi is the
    two-argument arctangent of (h_2, h_1).  Raises GapClosedError at h = 0;
    flags the azimuth as undefined when (h_1, h_2) = (0, 0).
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or len(h) < 3 or len(h) % 2 == 0:
        raise ValueError("h must be a flat vector with 2m+1 components")
    norm = float(np.linalg.norm(h))
    if norm <= tol:
        raise GapClosedError("cannot parametrize the zero vector", q=h)
    m = (len(h) - 1) // 2
    cumulative = np.sqrt(np.cumsum(h * h))    # partial norms sqrt(h1^2+..+hj^2)
    thetas = tuple(float(np.arctan2(cumulative[2 * m - j], h[2 * m + 1 - j]))
                   for j in range(1, 2 * m))
    r12 = float(np.hypot(h[0], h[1]))
    if r12 <= tol:
        rest = float(np.linalg.norm(h[:-1]))
        if rest <= tol:
            pole = "north" if h[-1] > 0 else "south"
        else:
            pole = "azimuth-undefined"
        return SphereAngles(thetas, 0.0, pole)
    return SphereAngles(thetas, float(np.arctan2(h[1], h[0])), None)


def unit_vector(angles: SphereAngles) -> np.ndarray:
    """Inverse map: the unit vector on S^{2m} with the given angles."""
    thetas = np.asarray(angles.theta, dtype=float)
    m = (len(thetas) + 1) // 2
    out = np.empty(2 * m + 1)
    # prefix[r] = sin(th_1) ... sin(th_r), prefix[0] = 1
    prefix = np.concatenate([[1.0], np.cumprod(np.sin(thetas))])
    for r in range(2 * m - 1):                # components 2m+1 down to 3
        out[2 * m - r] = prefix[r] * np.cos(thetas[r])
    out[1] = prefix[2 * m - 1] * np.sin(angles.phi)
    out[0] = prefix[2 * m - 1] * np.cos(angles.phi)
    return out


# -- torus embeddings ------------------------------------------------------


def _generic_basepoint(d: int) -> np.ndarray:
    return np.pi * np.array([1.0 / np.sqrt(p) for p in (2, 3, 5, 7, 11, 13)][: d + 1])


def _plane_axes(plane, d):
    j, n = plane
    if not (1 <= j < n <= d + 1):
        raise ValueError(f"plane {plane} is not valid for d = {d}")
    return j - 1, n - 1


def _embedded_field(symbol, loop, plane, basepoint, n_grid, shift=0.0):
    """h components on the embedded 2-torus; optionally shifted by half a cell."""
    d = symbol.model.d
    ax, ay = _plane_axes(plane, d)
    x = k_axis(n_grid, axis=ax) + shift * TWO_PI / n_grid
    y = k_axis(n_grid, axis=ay) + shift * TWO_PI / n_grid
    X, Y = np.meshgrid(x, y, indexing="ij")
    coords = []
    for axis in range(d + 1):
        if axis == ax:
            coords.append(X)
        elif axis == ay:
            coords.append(Y)
        else:
            coords.append(np.full_like(X, basepoint[axis]))
    k = np.stack(coords[:d], axis=-1)
    tvals = coords[d]
    q = loop(tvals)
    _, h = symbol.components(k, q)
    return h


def torus_field(symbol, loop, n_k: int, n_t: int | None = None):
    """h components of a loop field on the full (d+1)-torus grid.

    Returns (k_axes, t_axis, h) with h of shape (n_k, ..., n_k, n_t, 2m+1).
    """
    symbol = _as_symbol(symbol)
    d = symbol.model.d
    n_t = n_t or n_k
    k_axes = [k_axis(n_k, axis=i) for i in range(d)]
    t_ax = k_axis(n_t, axis=d)
    mesh = np.meshgrid(*k_axes, t_ax, indexing="ij")
    k = np.stack(mesh[:d], axis=-1)
    q = loop(mesh[d])
    _, h = symbol.components(k, q)
    return k_axes, t_ax, h


# -- pole cells and winding Chern numbers ----------------------------------


@dataclass(frozen=True)
class PoleCell:
    """A plaquette carrying nonzero winding and its pole classification.

    `winding` uses the flux convention: the sum over north cells equals the
    plane's Chern number and the sum over south cells its negative.
    """

    index: tuple[int, int]
    winding: int
    pole: str                 # "north" or "south"
    h3_center: float


@dataclass
class PoleCellSet:
    """Nonzero-winding plaquettes of one plane embedding."""

    plane: tuple[int, int]
    basepoint: np.ndarray
    n_grid: int
    cells: list[PoleCell] = field(default_factory=list)

    @property
    def north(self) -> list[PoleCell]:
        return [c for c in self.cells if c.pole == "north"]

    @property
    def south(self) -> list[PoleCell]:
        return [c for c in self.cells if c.pole == "south"]

    def north_total(self) -> int:
        return sum(c.winding for c in self.north)

    def south_total(self) -> int:
        return sum(c.winding for c in self.south)


def _principal(x):
    return (x + np.pi) % TWO_PI - np.pi


def pole_cells(model_or_symbol, loop: Loop, plane, basepoint=None,
               n_grid: int = 64, tol: float = _AZIMUTH_TOL) -> PoleCellSet:
    """Plaquette windings of the azimuthal field on an embedded 2-torus.

    The azimuth arg(h1 + i h2) is differenced with principal-value edge
    increments; an increment at the wrap ambiguity (magnitude pi) raises a
    ResolutionError asking the caller to refine.  A vertex with
    |(h1, h2)| < tol raises DegenerateEmbeddingError and the caller is
    expected to shift the basepoint.
    """
    symbol = _as_symbol(model_or_symbol)
    if symbol.model.m != 1:
        raise ValueError("pole-cell detection is implemented for m = 1 only")
    d = symbol.model.d
    basepoint = _generic_basepoint(d) if basepoint is None \
        else np.asarray(basepoint, dtype=float)
    h = _embedded_field(symbol, loop, plane, basepoint, n_grid)
    r12 = np.hypot(h[..., 0], h[..., 1])
    if float(r12.min()) <= tol:
        i, j = np.unravel_index(int(np.argmin(r12)), r12.shape)
        raise DegenerateEmbeddingError(
            f"azimuthal field vanishes at vertex {(i, j)} of plane {plane}")
    phi = np.arctan2(h[..., 1], h[..., 0])
    ex = _principal(np.roll(phi, -1, axis=0) - phi)
    ey = _principal(np.roll(phi, -1, axis=1) - phi)
    if max(float(np.abs(ex).max()), float(np.abs(ey).max())) > _EDGE_LIMIT:
        raise ResolutionError(
            f"azimuth edge increment at the wrap ambiguity on plane {plane}; "
            "refine the grid")
    circulation = ex + np.roll(ey, -1, axis=0) - np.roll(ex, -1, axis=1) - ey
    # Flux convention: counter-clockwise azimuth circulation around a north
    # cell contributes -1 to the Chern number, so flip the sign here.
    winding = -np.rint(circulation / TWO_PI).astype(int)
    cellset = PoleCellSet(tuple(plane), basepoint, n_grid)
    nonzero = np.argwhere(winding != 0)
    if len(nonzero):
        hc = _embedded_field(symbol, loop, plane, basepoint, n_grid, shift=0.5)
        for i, j in nonzero:
            h3 = float(hc[i, j, 2])
            if abs(h3) <= tol:
                raise ResolutionError(
                    f"winding cell {(i, j)} on plane {plane} has no pole margin")
            cellset.cells.append(PoleCell((int(i), int(j)), int(winding[i, j]),
                                          "north" if h3 > 0 else "south", h3))
    return cellset


def chern_winding(model_or_symbol, loop: Loop, plane, basepoint=None,
                  n_grid: int = 64, retries: int = 5, seed: int = 0) -> int:
    """Chern number of one plane from the azimuth winding around north cells.

    The north-cell sum is cross-checked against the negated south-cell sum;
    a mismatch doubles the grid (twice) before giving up.  Degenerate
    embeddings retry with random shifted basepoints, which is justified by
    the embedding independence of the Chern numbers.
    """
    symbol = _as_symbol(model_or_symbol)
    d = symbol.model.d
    rng = np.random.default_rng(seed)
    last_error = None
    for attempt in range(retries):
        if attempt == 0 and basepoint is not None:
            bp = np.asarray(basepoint, dtype=float)
        elif attempt == 0:
            bp = _generic_basepoint(d)
        else:
            bp = rng.uniform(-np.pi, np.pi, d + 1)
        n = n_grid
        for _ in range(3):
            try:
                cells = pole_cells(symbol, loop, plane, bp, n)
            except DegenerateEmbeddingError as exc:
                last_error = exc
                break
            except ResolutionError as exc:
                last_error = exc
                n *= 2
                continue
            c_north = cells.north_total()
            c_south = -cells.south_total()
            if c_north == c_south:
                return int(c_north)
            last_error = ResolutionError(
                f"north/south winding sums disagree on plane {plane}: "
                f"{c_north} vs {c_south} at n_grid={n}")
            n *= 2
    raise ResolutionError(
        f"chern_winding failed on plane {plane} after {retries} basepoints: "
        f"{last_error}")


# -- plaquette (link/field-strength) Chern numbers --------------------------


def occupied_state(h) -> np.ndarray:
    """Normalized lower-band eigenvector of h.sigma for m = 1 fields.

    Chooses the larger projector column per point; the local gauge is
    irrelevant to link products.
    """
    h = np.asarray(h, dtype=float)
    ah = np.linalg.norm(h, axis=-1)
    if np.any(ah <= _AZIMUTH_TOL):
        raise GapClosedError("field vanishes; no occupied state")
    u = h / ah[..., None]
    u1, u2, u3 = u[..., 0], u[..., 1], u[..., 2]
    north = u3 >= 0
    psi = np.empty(u3.shape + (2,), dtype=complex)
    # column 1 of P for u3 >= 0, column 0 otherwise, both times 2
    psi[..., 0] = np.where(north, -(u1 - 1j * u2), 1.0 - u3)
    psi[..., 1] = np.where(north, 1.0 + u3, -(u1 + 1j * u2))
    psi /= np.linalg.norm(psi, axis=-1)[..., None]
    return psi


def _link_phases(psi, axis, tol=1e-12):
    ov = np.sum(psi.conj() * np.roll(psi, -1, axis=axis), axis=-1)
    mag = np.abs(ov)
    if float(mag.min()) <= tol:
        raise ResolutionError("vanishing link overlap; refine the grid")
    return ov / mag


def plaquette_chern_numbers(psi, axis_x: int, axis_y: int) -> np.ndarray:
    """Link/field-strength Chern numbers per slice of a state field.

    `psi` has shape (..., r) over a torus grid; the plaquette field strength
    is accumulated over the (axis_x, axis_y) plane and the result is an
    integer array over the remaining axes.
    """
    ux = _link_phases(psi, axis_x)
    uy = _link_phases(psi, axis_y)
    fluxes = np.angle(ux * np.roll(uy, -1, axis=axis_x)
                      * np.conj(np.roll(ux, -1, axis=axis_y)) * np.conj(uy))
    total = fluxes.sum(axis=(axis_x, axis_y)) / TWO_PI
    rounded = np.rint(total)
    if float(np.abs(total - rounded).max()) > 1e-6:
        raise ResolutionError("plaquette flux sum is not an integer")
    return rounded.astype(int)


def chern_plaquette(projectors) -> int:
    """Chern number of a projector field on a 2-torus grid.

    Works for any constant rank; links are determinants of frame overlaps.
    The result is an exact integer by construction.
    """
    p = np.asarray(projectors)
    if p.ndim != 4 or p.shape[-1] != p.shape[-2]:
        raise ValueError("expected a projector field of shape (n, n, r, r)")
    ranks = np.rint(np.trace(p, axis1=-2, axis2=-1).real).astype(int)
    if ranks.min() != ranks.max():
        raise ValueError("projector rank is not constant on the grid")
    rank = int(ranks.flat[0])
    if rank == 0:
        return 0
    _, vecs = np.linalg.eigh(p)
    frame = vecs[..., p.shape[-1] - rank:]            # (n, n, r, rank)

    def link(axis):
        rolled = np.roll(frame, -1, axis=axis)
        ov = np.einsum("xyir,xyis->xyrs", frame.conj(), rolled)
        det = np.linalg.det(ov)
        mag = np.abs(det)
        if float(mag.min()) <= 1e-12:
            raise ResolutionError("vanishing link overlap; refine the grid")
        return det / mag

    ux, uy = link(0), link(1)
    fluxes = np.angle(ux * np.roll(uy, -1, axis=0)
                      * np.conj(np.roll(ux, -1, axis=1)) * np.conj(uy))
    total = fluxes.sum() / TWO_PI
    if abs(total - round(total)) > 1e-6:
        raise ResolutionError("plaquette flux sum is not an integer")
    return int(round(total))


def projector_field(model_or_symbol, loop: Loop, plane, basepoint=None,
                    n_grid: int = 64) -> np.ndarray:
    """Fermi projector field on an embedded 2-torus (for the plaquette oracle)."""
    symbol = _as_symbol(model_or_symbol)
    d = symbol.model.d
    basepoint = _generic_basepoint(d) if basepoint is None \
        else np.asarray(basepoint, dtype=float)
    h = _embedded_field(symbol, loop, plane, basepoint, n_grid)
    ah = np.linalg.norm(h, axis=-1)
    if float(ah.min()) <= _AZIMUTH_TOL:
        raise GapClosedError("loop field is gapless on the embedded torus")
    u = h / ah[..., None]
    eye = np.eye(symbol.dim)
    return 0.5 * (eye - np.einsum("...s,sij->...ij", u, symbol.sigmas))


# -- the Chern matrix -------------------------------------------------------


@dataclass(frozen=True)
class ChernMatrix:
    """Antisymmetric integer matrix of first Chern numbers.

    The last column holds the quantized polarization, Delta_P_j = C[j, d+1];
    the upper-left block is the magneto-transport sector.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("Chern matrix must be square")
        if not np.issubdtype(m.dtype, np.integer):
            raise ValueError("Chern matrix entries must be integers")
        if np.any(m != -m.T):
            raise ValueError("Chern matrix must be antisymmetric")
        object.__setattr__(self, "matrix", m)

    @property
    def delta_p(self) -> np.ndarray:
        return self.matrix[:-1, -1].copy()

    @property
    def omega_b(self) -> np.ndarray:
        return self.matrix[:-1, :-1].copy()


def _all_planes(d):
    return [(j, n) for j in range(1, d + 2) for n in range(j + 1, d + 2)]


def chern_matrix(model_or_symbol, loop: Loop, n_grid: int = 64,
                 n_basepoints: int = 3, seed: int = 0,
                 threads: int | None = None, gap_check: bool = True) -> ChernMatrix:
    """All plane Chern numbers C_{j,n}, each replicated over random basepoints.

    Every plane is evaluated at `n_basepoints` random embeddings which must
    agree exactly; disagreement raises ResolutionError with diagnostics.
    """
    symbol = _as_symbol(model_or_symbol)
    d = symbol.model.d
    if gap_check:
        report = min_gap_along_loop(symbol, loop)
        if not report.gapped:
            raise GapClosedError(
                f"loop is not gapped: min distance {report.min_distance:.3e} "
                f"at t = {report.argmin_t:.3f}",
                k=report.argmin_k, t=report.argmin_t)
    rng = np.random.default_rng(seed)
    planes = _all_planes(d)
    tasks = []
    for plane in planes:
        for bp in rng.uniform(-np.pi, np.pi, (n_basepoints, d + 1)):
            tasks.append((plane, bp))

    def run(task):
        plane, bp = task
        return chern_winding(symbol, loop, plane, basepoint=bp, n_grid=n_grid,
                             seed=seed + 1)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(run, tasks))
    else:
        values = [run(t) for t in tasks]

    c = np.zeros((d + 1, d + 1), dtype=int)
    for idx, plane in enumerate(planes):
        vals = values[idx * n_basepoints:(idx + 1) * n_basepoints]
        if len(set(vals)) != 1:
            raise ResolutionError(
                f"basepoint disagreement on plane {plane}: values {vals}")
        j, n = plane
        c[j - 1, n - 1] = vals[0]
        c[n - 1, j - 1] = -vals[0]
    return ChernMatrix(c)


def chern_report(model_or_symbol, loop: Loop, n_grid: int = 64,
                 n_basepoints: int = 3, seed: int = 0,
                 threads: int | None = None) -> dict:
    """Chern matrix plus per-plane diagnostics, as a JSON-ready document."""
    symbol = _as_symbol(model_or_symbol)
    d = symbol.model.d
    matrix = chern_matrix(symbol, loop, n_grid=n_grid,
                          n_basepoints=n_basepoints, seed=seed,
                          threads=threads)
    rng = np.random.default_rng(seed)
    per_plane = {}
    for plane in _all_planes(d):
        bps = rng.uniform(-np.pi, np.pi, (n_basepoints, d + 1))
        try:
            cells = pole_cells(symbol, loop, plane, bps[0], n_grid)
        except (DegenerateEmbeddingError, ResolutionError):
            cells = pole_cells(symbol, loop, plane, None, n_grid)
        j, n = plane
        per_plane[f"{j},{n}"] = {
            "chern": int(matrix.matrix[j - 1, n - 1]),
            "basepoints_tried": n_basepoints,
            "north_cells": len(cells.north),
            "south_cells": len(cells.south),
        }
    return {
        "n_grid": n_grid,
        "planes": per_plane,
        "matrix": matrix.matrix.tolist(),
        "delta_p": matrix.delta_p.tolist(),
    }


# -- triviality certificate -------------------------------------------------


@dataclass(frozen=True)
class TrivialityVerdict:
    trivial: bool
    witness: str

    @property
    def verdict(self) -> str:
        return "trivial" if self.trivial else "undetermined"


def triviality_check(model_or_symbol, loop: Loop, n_grid: int = 32,
                     tol: float = _AZIMUTH_TOL) -> TrivialityVerdict:
    """Certify bundle triviality when a pole variety is empty on the grid.

    Sufficient certificates: h3 of one sign everywhere (the opposite pole
    variety is empty), or the azimuthal components bounded below by a
    sampled Lipschitz margin (both empty).  Anything else is reported
    undetermined.
    """
    symbol = _as_symbol(model_or_symbol)
    _, _, h = torus_field(symbol, loop, n_grid)
    ah = np.linalg.norm(h, axis=-1)
    if float(ah.min()) <= tol:
        raise GapClosedError("loop field is gapless; poles are undefined")
    h3min = float(h[..., 2].min())
    h3max = float(h[..., 2].max())
    if h3min > tol:
        return TrivialityVerdict(True, f"south pole variety empty: h3 >= {h3min:.3g}")
    if h3max < -tol:
        return TrivialityVerdict(True, f"north pole variety empty: h3 <= {h3max:.3g}")
    # both-empty certificate: no point of the torus can reach (h1, h2) = 0
    # if the vertex minimum exceeds the sampled slope times half a cell
    azim = h[..., :2]
    r12min = float(np.linalg.norm(azim, axis=-1).min())
    margin = 0.0
    for axis in range(azim.ndim - 1):
        slopes = np.linalg.norm(np.roll(azim, -1, axis=axis) - azim, axis=-1)
        margin += 0.5 * 1.25 * float(slopes.max())
    if r12min > margin:
        return TrivialityVerdict(
            True, f"both pole varieties empty: |(h1,h2)| >= {r12min:.3g} "
                  f"with grid margin {margin:.3g}")
    return TrivialityVerdict(False, "north and south pole varieties both meet the grid")


# -- local sections and the intertwining unitary ----------------------------


def local_section(angles: SphereAngles, chart: str,
                  tol: float = 1e-6) -> np.ndarray:
    """Normalized section of the occupied line bundle in one chart (m = 1).

    Psi_N = (e^{-i phi} sin(theta/2), -cos(theta/2)); Psi_S = e^{+i phi} Psi_N.
    Chart N requires theta < pi - tol, chart S requires theta > tol.
    """
    if chart not in ("N", "S"):
        raise ValueError("chart must be 'N' or 'S'")
    if len(angles.theta) != 1:
        raise ValueError("local sections are defined for m = 1")
    theta = angles.theta[0]
    phi = angles.phi
    if chart == "N" and theta >= np.pi - tol:
        raise ValueError("north chart does not extend to the south pole")
    if chart == "S" and theta <= tol:
        raise ValueError("south chart does not extend to the north pole")
    psi = np.array([np.exp(-1j * phi) * np.sin(theta / 2),
                    -np.cos(theta / 2)])
    if chart == "S":
        psi = np.exp(1j * phi) * psi
    return psi


def kato_intertwiner(p, p_prime, tol: float = 1e-12) -> np.ndarray:
    """Unitary U with U p U^dagger = p' for projections with ||p' - p|| < 1.

    U = (p' p + (1 - p')(1 - p)) (1 - (p' - p)^2)^{-1/2}.
    """
    p = np.asarray(p, dtype=complex)
    pp = np.asarray(p_prime, dtype=complex)
    if p.shape != pp.shape or p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("projections must be square matrices of equal size")
    diff = pp - p
    distance = float(np.linalg.norm(diff, 2))
    if distance >= 1.0:
        raise NotConnectableError(
            f"projection distance {distance:.6f} >= 1; not connectable")
    eye = np.eye(p.shape[0])
    s = eye - diff @ diff
    w, v = np.linalg.eigh(s)
    w = np.clip(w, tol, None)
    inv_sqrt = (v * (1.0 / np.sqrt(w))) @ v.conj().T
    return (pp @ p + (eye - pp) @ (eye - p)) @ inv_sqrt
