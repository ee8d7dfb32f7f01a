"""Closed loops in parameter space with group operations.

Loops are parametrized on [0, 2pi); rescaling to a physical period happens
only inside the dynamical-polarization solver.  Evaluators are vectorized:
they map an array of parameter times (...,) to points (..., n_params).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "Loop",
    "generator_eta",
    "reverse",
    "repeat",
    "concat_with_path",
    "perturb",
    "polyline_path",
    "lifted_segment",
    "loop_from_document",
]

TWO_PI = 2.0 * np.pi
_CLOSURE_TOL = 1e-9

# Smoothness tags, coarsest to finest.
C0 = "C0"
PIECEWISE_C1 = "piecewise-C1"
C1 = "C1"
SMOOTH = "C-infinity"


class Loop:
    """Closed map t in [0, 2pi) -> parameter point, with optional derivative."""

    def __init__(self, evaluator: Callable, n_params: int,
                 smoothness: str = C0, derivative: Callable | None = None,
                 sample_count: int = 256):
        self._evaluator = evaluator
        self.n_params = int(n_params)
        self.smoothness = smoothness
        self._derivative = derivative
        self.sample_count = int(sample_count)
        gap = self.closure_gap()
        if gap > _CLOSURE_TOL:
            raise ValueError(f"loop endpoint gap {gap:.3e} exceeds {_CLOSURE_TOL}")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float) % TWO_PI
        out = np.asarray(self._evaluator(t), dtype=float)
        if out.shape != t.shape + (self.n_params,):
            raise ValueError("loop evaluator returned a wrong shape")
        return out

    def derivative(self, t) -> np.ndarray:
        """dq/dt; analytic when attached, else a central difference."""
        t = np.asarray(t, dtype=float) % TWO_PI
        if self._derivative is not None:
            return np.asarray(self._derivative(t), dtype=float)
        h = 1e-6
        return (self((t + h) % TWO_PI) - self((t - h) % TWO_PI)) / (2 * h)

    @property
    def has_analytic_derivative(self) -> bool:
        return self._derivative is not None

    def samples(self, n: int | None = None) -> np.ndarray:
        n = n or self.sample_count
        return self(np.arange(n) * TWO_PI / n)

    def closure_gap(self) -> float:
        a = np.asarray(self._evaluator(np.asarray(0.0)), float)
        b = np.asarray(self._evaluator(np.asarray(TWO_PI * (1 - 1e-12))), float)
        return float(np.linalg.norm(a - b))


def generator_eta(index: int, eps: float) -> Loop:
    """Fundamental circles around (1,0,0) resp. (0,1,0) in the stagger plane.

    eta_1(t) = (1 + eps cos t, 0, -eps sin t),
    eta_2(t) = (0, 1 + eps cos t, -eps sin t), with 0 < eps < 1.
    """
    if index not in (1, 2):
        raise ValueError("generator index must be 1 or 2")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")

    def ev(t):
        radial = 1.0 + eps * np.cos(t)
        stagger = -eps * np.sin(t)
        zero = np.zeros_like(t)
        cols = (radial, zero, stagger) if index == 1 else (zero, radial, stagger)
        return np.stack(cols, axis=-1)

    def dv(t):
        dr = -eps * np.sin(t)
        ds = -eps * np.cos(t)
        zero = np.zeros_like(t)
        cols = (dr, zero, ds) if index == 1 else (zero, dr, ds)
        return np.stack(cols, axis=-1)

    return Loop(ev, 3, smoothness=SMOOTH, derivative=dv)


def reverse(loop: Loop) -> Loop:
    """Time-reversed loop t -> loop(2pi - t); the group inverse."""
    dv = None
    if loop.has_analytic_derivative:
        dv = lambda t: -loop.derivative((TWO_PI - t) % TWO_PI)
    return Loop(lambda t: loop((TWO_PI - t) % TWO_PI), loop.n_params,
                smoothness=loop.smoothness, derivative=dv,
                sample_count=loop.sample_count)


def repeat(loop: Loop, n: int) -> Loop:
    """Traverse the loop n times within [0, 2pi)."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"repeat count must be a positive integer, got {n!r}")
    n = int(n)
    dv = None
    if loop.has_analytic_derivative:
        dv = lambda t: n * loop.derivative((n * t) % TWO_PI)
    smoothness = loop.smoothness
    if loop.has_analytic_derivative:
        seam = np.linalg.norm(loop.derivative(np.asarray(0.0))
                              - loop.derivative(np.asarray(TWO_PI * (1 - 1e-12))))
        if seam > 1e-8:
            smoothness = PIECEWISE_C1
    else:
        smoothness = PIECEWISE_C1
    return Loop(lambda t: loop((n * t) % TWO_PI), loop.n_params,
                smoothness=smoothness, derivative=dv,
                sample_count=loop.sample_count)


def polyline_path(points) -> Callable:
    """Vectorized path u in [0, 1] -> piecewise-linear through the points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 1:
        raise ValueError("polyline needs a (P, n_params) array of points")
    if len(pts) == 1:
        return lambda u: np.broadcast_to(pts[0], np.shape(u) + pts[0].shape).copy()
    segs = len(pts) - 1

    def path(u):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        x = u * segs
        i = np.minimum(x.astype(int), segs - 1)
        frac = (x - i)[..., None]
        return (1 - frac) * pts[i] + frac * pts[i + 1]

    return path


def lifted_segment(p0, p1, lift: float = 0.5, lift_axis: int = 2) -> Callable:
    """Straight segment p0 -> p1 with a sine bump of height `lift` on one axis.

    The bump keeps connectors between the fundamental circles away from the
    gapless set, which any straight segment in the stagger-free plane crosses.
    """
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)

    def path(u):
        u = np.asarray(u, dtype=float)
        out = (1 - u[..., None]) * p0 + u[..., None] * p1
        out[..., lift_axis] += lift * np.sin(np.pi * u)
        return out

    return path


def concat_with_path(a: Loop, b: Loop, connector: Callable | None = None) -> Loop:
    """Class sum of two loops: a, then connector, then b, then connector back.

    The connector is a vectorized path u in [0,1] -> point with endpoints
    a(0) and b(0) (checked to 1e-9).  With connector None the basepoints must
    coincide and the loops are concatenated directly.  Gappedness of the
    connector is not assumed; downstream computations check the whole loop.
    """
    if a.n_params != b.n_params:
        raise ValueError("loops live in different parameter spaces")
    base_a = a(np.asarray(0.0))
    base_b = b(np.asarray(0.0))

    if connector is None:
        if np.linalg.norm(base_a - base_b) > _CLOSURE_TOL:
            raise ValueError("basepoints differ; supply a connector path")

        def ev(t):
            t = np.asarray(t, dtype=float)
            first = t < np.pi
            out = np.empty(t.shape + (a.n_params,), dtype=float)
            out[first] = a(2 * t[first])
            out[~first] = b(2 * (t[~first] - np.pi))
            return out

        return Loop(ev, a.n_params, smoothness=PIECEWISE_C1,
                    sample_count=max(a.sample_count, b.sample_count))

    c0 = np.asarray(connector(np.asarray(0.0)), float)
    c1 = np.asarray(connector(np.asarray(1.0)), float)
    if np.linalg.norm(c0 - base_a) > _CLOSURE_TOL or np.linalg.norm(c1 - base_b) > _CLOSURE_TOL:
        raise ValueError("connector endpoints do not match the loop basepoints")

    quarter = np.pi / 2

    def ev(t):
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (a.n_params,), dtype=float)
        seg = np.minimum((t / quarter).astype(int), 3)
        s0, s1, s2, s3 = (seg == 0), (seg == 1), (seg == 2), (seg == 3)
        out[s0] = a(4 * t[s0])
        out[s1] = connector((t[s1] - quarter) / quarter)
        out[s2] = b(4 * (t[s2] - np.pi))
        out[s3] = connector(1 - (t[s3] - 3 * quarter) / quarter)
        return out

    return Loop(ev, a.n_params, smoothness=PIECEWISE_C1,
                sample_count=2 * max(a.sample_count, b.sample_count))


def perturb(loop: Loop, amplitude: float, modes: int = 3, seed: int = 0) -> Loop:
    """Add a seeded smooth trigonometric displacement of sup-norm <= amplitude.

    Callers must re-verify gappedness of the perturbed loop downstream.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    if modes < 1:
        raise ValueError("need at least one mode")
    rng = np.random.default_rng(seed)
    ac = rng.standard_normal((loop.n_params, modes))
    bs = rng.standard_normal((loop.n_params, modes))
    bound = float((np.abs(ac) + np.abs(bs)).sum(axis=1).max())
    scale = amplitude / bound if amplitude > 0 and bound > 0 else 0.0
    ks = np.arange(1, modes + 1, dtype=float)

    def displacement(t):
        mt = np.multiply.outer(t, ks)
        return scale * (np.einsum("...m,pm->...p", np.cos(mt), ac)
                        + np.einsum("...m,pm->...p", np.sin(mt), bs))

    def ev(t):
        return loop(t) + displacement(t)

    dv = None
    if loop.has_analytic_derivative:
        def dv(t):
            mt = np.multiply.outer(t, ks)
            ddisp = scale * (np.einsum("...m,pm->...p", -np.sin(mt) * ks, ac)
                             + np.einsum("...m,pm->...p", np.cos(mt) * ks, bs))
            return loop.derivative(t) + ddisp

    return Loop(ev, loop.n_params, smoothness=loop.smoothness,
                derivative=dv, sample_count=loop.sample_count)


def loop_from_document(doc: dict) -> Loop:
    """Build a loop from a config document.

    Supported types: {"type": "eta1"|"eta2", "eps": e}, a Fourier series
    {"type": "fourier", "constant": [...], "cos": [[...]], "sin": [[...]]},
    a closed polyline {"type": "polyline", "points": [[...], ...]}, and
    {"type": "constant", "point": [...]}.
    """
    if not isinstance(doc, dict) or "type" not in doc:
        raise ValueError("loop document needs a 'type' field")
    kind = doc["type"]
    if kind in ("eta1", "eta2"):
        return generator_eta(1 if kind == "eta1" else 2, float(doc.get("eps", 0.5)))
    if kind == "constant":
        point = np.asarray(doc["point"], dtype=float)

        def ev(t):
            return np.broadcast_to(point, np.shape(t) + point.shape).copy()

        return Loop(ev, len(point), smoothness=SMOOTH,
                    derivative=lambda t: np.zeros(np.shape(t) + point.shape))
    if kind == "fourier":
        const = np.asarray(doc["constant"], dtype=float)
        cos_c = np.asarray(doc.get("cos", np.zeros((len(const), 0))), dtype=float)
        sin_c = np.asarray(doc.get("sin", np.zeros((len(const), 0))), dtype=float)
        modes = max(cos_c.shape[1] if cos_c.size else 0,
                    sin_c.shape[1] if sin_c.size else 0)
        cos_c = np.pad(cos_c, ((0, 0), (0, modes - (cos_c.shape[1] if cos_c.size else 0))))
        sin_c = np.pad(sin_c, ((0, 0), (0, modes - (sin_c.shape[1] if sin_c.size else 0))))
        ks = np.arange(1, modes + 1, dtype=float)

        def ev(t):
            out = np.broadcast_to(const, np.shape(t) + const.shape).copy()
            if modes:
                mt = np.multiply.outer(t, ks)
                out = out + np.einsum("...m,pm->...p", np.cos(mt), cos_c) \
                    + np.einsum("...m,pm->...p", np.sin(mt), sin_c)
            return out

        def dv(t):
            out = np.zeros(np.shape(t) + const.shape)
            if modes:
                mt = np.multiply.outer(t, ks)
                out = np.einsum("...m,pm->...p", -np.sin(mt) * ks, cos_c) \
                    + np.einsum("...m,pm->...p", np.cos(mt) * ks, sin_c)
            return out

        return Loop(ev, len(const), smoothness=SMOOTH, derivative=dv)
    if kind == "polyline":
        pts = np.asarray(doc["points"], dtype=float)
        if pts.ndim != 2:
            raise ValueError("polyline points must form a (P, n_params) array")
        closed = np.vstack([pts, pts[:1]])
        path = polyline_path(closed)
        return Loop(lambda t: path(t / TWO_PI), pts.shape[1],
                    smoothness=C0 if len(pts) > 1 else SMOOTH)
    raise ValueError(f"unknown loop type {kind!r}")
