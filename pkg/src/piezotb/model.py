"""Lattice geometry, parameter-dependent hopping models, and Bloch symbols.

A hopping model is a finite list of displacement terms ``(n, c(q), B)`` with
``n`` in Z^d, a scalar coefficient ``c(q)`` from a small expression set and a
constant matrix factor ``B``.  Its Bloch symbol is the trigonometric
polynomial ``H(k; q) = sum_n c_n(q) exp(-i k.n) B_n`` which, for a valid
two-band model, decomposes as ``H = h0*I + sum_j h_j Sigma_j`` on the
anticommuting basis returned by :func:`clifford_basis`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Callable, Sequence

import numpy as np

from .errors import SymbolProjectionError

__all__ = [
    "pauli_matrices",
    "clifford_basis",
    "LatticeGeometry",
    "Coefficient",
    "HoppingTerm",
    "HoppingModel",
    "BlochSymbol",
    "uniaxial_model",
    "nn_graphene_model",
    "model_from_document",
    "eval_symbol",
    "symbol_k_gradient",
    "MODEL_PRESETS",
    "UNIAXIAL_BOX",
]

_ID2 = np.eye(2, dtype=complex)
_S1 = np.array([[0, 1], [1, 0]], dtype=complex)
_S2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
_S3 = np.array([[1, 0], [0, -1]], dtype=complex)

#: Admissible parameter box of the uniaxial preset (q1, q2, q3).
UNIAXIAL_BOX = ((0.0, 2.0), (0.0, 2.0), (-1.0, 1.0))


def pauli_matrices():
    """Return (identity, sigma1, sigma2, sigma3) as fresh 2x2 complex arrays."""
    return _ID2.copy(), _S1.copy(), _S2.copy(), _S3.copy()


def _kron_chain(factors):
    return reduce(np.kron, factors)


def clifford_basis(m: int) -> list[np.ndarray]:
    """Hermitian anticommuting matrices Sigma_1..Sigma_{2m+1} of size 2^m.

    Built as Pauli tensor products: Sigma_{2i-1} and Sigma_{2i} carry sigma1
    resp. sigma2 in slot i padded with sigma3 to the right, and
    Sigma_{2m+1} = sigma3^{(x) m}.  Entrywise conjugation satisfies
    conj(Sigma_j) = (-1)**(j+1) Sigma_j.
    """
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool) or m < 1:
        raise ValueError(f"Clifford rank must be a positive integer, got {m!r}")
    sigmas = []
    for i in range(1, m + 1):
        for s in (_S1, _S2):
            sigmas.append(_kron_chain([_ID2] * (i - 1) + [s] + [_S3] * (m - i)))
    sigmas.append(_kron_chain([_S3] * m))
    return sigmas


@dataclass(frozen=True)
class LatticeGeometry:
    """Bravais lattice data; lengths in units of the lattice constant."""

    dimension: int
    basis: np.ndarray                     # (d, d), rows are basis vectors
    nn_vectors: np.ndarray | None = None  # honeycomb nearest-neighbor vectors

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.shape != (self.dimension, self.dimension):
            raise ValueError("basis must be a (d, d) array of row vectors")
        if abs(np.linalg.det(basis)) < 1e-12:
            raise ValueError("lattice basis vectors are linearly dependent")
        object.__setattr__(self, "basis", basis)
        if self.nn_vectors is not None:
            object.__setattr__(self, "nn_vectors", np.asarray(self.nn_vectors, float))

    @property
    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.basis)))

    @classmethod
    def honeycomb(cls, a: float = 1.0) -> "LatticeGeometry":
        """Honeycomb lattice: gamma_1,2 = (a/2)(3, +-sqrt(3)), |V| = 3 sqrt(3)/2 a^2."""
        rt3 = np.sqrt(3.0)
        basis = 0.5 * a * np.array([[3.0, +rt3], [3.0, -rt3]])
        nn = 0.5 * a * np.array([[2.0, 0.0], [-1.0, +rt3], [-1.0, -rt3]])
        return cls(2, basis, nn)


_COEF_KINDS = ("const", "q", "cos", "sin")


@dataclass(frozen=True)
class Coefficient:
    """Scalar coefficient drawn from a fixed expression set over q.

    kind "const" evaluates to ``scale``; "q", "cos", "sin" evaluate to
    ``scale * f(q_index)`` with a 1-based parameter index.
    """

    kind: str = "const"
    index: int = 0
    scale: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.kind not in _COEF_KINDS:
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        if self.kind != "const" and self.index < 1:
            raise ValueError("parameter index is 1-based and must be >= 1")

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.ndim == 0:
            raise ValueError("q must have shape (..., n_params)")
        if self.kind == "const":
            return np.full(q.shape[:-1], self.scale, dtype=complex)
        x = q[..., self.index - 1]
        if self.kind == "q":
            val = x
        elif self.kind == "cos":
            val = np.cos(x)
        else:
            val = np.sin(x)
        return self.scale * val

    def to_document(self) -> dict:
        doc = {"kind": self.kind, "scale": [self.scale.real, self.scale.imag]}
        if self.kind != "const":
            doc["index"] = self.index
        return doc

    @classmethod
    def from_document(cls, doc: dict) -> "Coefficient":
        scale = doc.get("scale", [1.0, 0.0])
        return cls(doc.get("kind", "const"), doc.get("index", 0),
                   complex(scale[0], scale[1]))


@dataclass(frozen=True)
class HoppingTerm:
    """One displacement term: coefficient(q) * exp(-i k.n) * matrix."""

    displacement: tuple[int, ...]
    matrix: np.ndarray
    coefficient: Coefficient = Coefficient()

    def __post_init__(self):
        object.__setattr__(self, "displacement",
                           tuple(int(n) for n in self.displacement))
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=complex))


class HoppingModel:
    """Finite-support hopping model on Z^d with 2^m internal components."""

    def __init__(self, d: int, m: int, n_params: int,
                 terms: Sequence[HoppingTerm], name: str | None = None,
                 admissible_box: tuple | None = None):
        if d < 1 or m < 1 or n_params < 0:
            raise ValueError("d, m must be positive and n_params non-negative")
        self.d = int(d)
        self.m = int(m)
        self.n_params = int(n_params)
        self.name = name
        self.admissible_box = admissible_box
        dim = 2 ** self.m
        terms = tuple(terms)
        if not terms:
            raise ValueError("a hopping model needs at least one term")
        for t in terms:
            if len(t.displacement) != self.d:
                raise ValueError(f"displacement {t.displacement} is not in Z^{d}")
            if t.matrix.shape != (dim, dim):
                raise ValueError(f"matrix factor must be {dim}x{dim}")
            if t.coefficient.kind != "const" and t.coefficient.index > n_params:
                raise ValueError("coefficient refers to a parameter beyond n_params")
        self.terms = terms
        self._symbol: BlochSymbol | None = None

    @property
    def dim(self) -> int:
        return 2 ** self.m

    def displacements(self) -> np.ndarray:
        return np.array([t.displacement for t in self.terms], dtype=int)

    def max_displacement(self) -> int:
        return int(np.abs(self.displacements()).max())

    def block(self, n, q) -> np.ndarray:
        """Total matrix M_n(q) summed over the terms at displacement n."""
        n = tuple(int(v) for v in n)
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for t in self.terms:
            if t.displacement == n:
                out += complex(t.coefficient(np.asarray(q, float))) * t.matrix
        return out

    def hermiticity_defect(self, q) -> float:
        """max over displacements n of ||M_n(q) - M_{-n}(q)^dagger||_inf."""
        defect = 0.0
        seen = set()
        for t in self.terms:
            n = t.displacement
            if n in seen:
                continue
            seen.add(n)
            neg = tuple(-v for v in n)
            seen.add(neg)
            diff = self.block(n, q) - self.block(neg, q).conj().T
            defect = max(defect, float(np.abs(diff).max()))
        return defect

    def bloch(self) -> "BlochSymbol":
        if self._symbol is None:
            self._symbol = BlochSymbol(self)
        return self._symbol

    def to_document(self) -> dict:
        if self.name is not None:
            return {"name": self.name}
        return {
            "d": self.d,
            "m": self.m,
            "n_params": self.n_params,
            "terms": [
                {
                    "n": list(t.displacement),
                    "matrix": [[[z.real, z.imag] for z in row] for row in t.matrix],
                    "coefficient": t.coefficient.to_document(),
                }
                for t in self.terms
            ],
        }


class BlochSymbol:
    """Evaluator for H(k; q) = h0*I + sum_j h_j(k; q) Sigma_j and its k-gradient.

    All evaluators broadcast: k has shape (..., d), q has shape (..., n_params)
    and the leading axes must be mutually broadcastable.  h0 is carried but
    ignored by the spectral-projection code (the eigenprojections do not
    depend on it).
    """

    def __init__(self, model: HoppingModel):
        self.model = model
        self.dim = model.dim
        self.sigmas = np.stack(clifford_basis(model.m))  # (2m+1, r, r)
        self._n = model.displacements().astype(float)    # (T, d)
        self._bases = np.stack([t.matrix for t in model.terms])
        self._coeffs = [t.coefficient for t in model.terms]
        # Projection constants: column 0 -> h0, columns 1.. -> h_j.
        cols = [np.trace(self._bases, axis1=1, axis2=2) / self.dim]
        for s in self.sigmas:
            cols.append(np.einsum("tij,ji->t", self._bases, s) / self.dim)
        self._projs = np.stack(cols, axis=1)             # (T, 2m+2)
        self._validate_two_band()

    # -- evaluation ------------------------------------------------------

    def _weights(self, k, q) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if k.shape[-1:] != (self.model.d,):
            raise ValueError(f"k must have shape (..., {self.model.d})")
        phases = np.exp(-1j * (k @ self._n.T))
        coefs = np.stack([c(q) for c in self._coeffs], axis=-1)
        return phases * coefs

    def components(self, k, q, *, tol: float = 1e-10):
        """Clifford components (h0, h) of the symbol; h has 2m+1 entries."""
        hc = np.einsum("...t,tc->...c", self._weights(k, q), self._projs)
        scale = max(1.0, float(np.abs(hc.real).max()))
        imag = float(np.abs(hc.imag).max())
        if imag > tol * scale:
            raise SymbolProjectionError(
                f"Clifford components have imaginary part {imag:.2e}; "
                "the model is not of two-band form")
        return hc[..., 0].real, hc[..., 1:].real

    def matrix(self, k, q) -> np.ndarray:
        """Assembled Hermitian matrix H(k; q) with shape (..., 2^m, 2^m)."""
        return np.einsum("...t,tij->...ij", self._weights(k, q), self._bases)

    def k_gradient(self, k, q) -> np.ndarray:
        """Analytic derivatives dH/dk_j, shape (..., d, 2^m, 2^m)."""
        dw = self._weights(k, q)[..., None] * (-1j * self._n)
        return np.einsum("...td,tij->...dij", dw, self._bases)

    def component_k_gradient(self, k, q, *, tol: float = 1e-10):
        """Clifford components (dh0, dh) of the k-gradient, axes (..., d[, 2m+1])."""
        dw = self._weights(k, q)[..., None] * (-1j * self._n)
        dhc = np.einsum("...td,tc->...dc", dw, self._projs)
        scale = max(1.0, float(np.abs(dhc.real).max()))
        if float(np.abs(dhc.imag).max()) > tol * scale:
            raise SymbolProjectionError("k-gradient components are not real")
        return dhc[..., 0].real, dhc[..., 1:].real

    # -- validation ------------------------------------------------------

    def _validate_two_band(self, samples: int = 8):
        rng = np.random.default_rng(171717)
        ks = rng.uniform(-np.pi, np.pi, (samples, self.model.d))
        qs = rng.uniform(-1.5, 1.5, (samples, self.model.n_params))
        mats = self.matrix(ks, qs)
        h0, h = self.components(ks, qs)
        rebuilt = h0[..., None, None] * np.eye(self.dim) \
            + np.einsum("...s,sij->...ij", h, self.sigmas)
        defect = float(np.abs(mats - rebuilt).max())
        if defect > 1e-9 * max(1.0, float(np.abs(mats).max())):
            raise SymbolProjectionError(
                f"symbol deviates from span{{I, Sigma_j}} by {defect:.2e}")


# -- presets and documents ------------------------------------------------


def uniaxial_model(q0: float = 1.0) -> HoppingModel:
    """Strained honeycomb nearest-neighbor model with stagger; q = (q1, q2, q3).

    Symbol: h1 = q0 + q1 cos k1 + q2 cos k2, h2 = q1 sin k1 + q2 sin k2,
    h3 = q3, h0 = 0.  The default q0 = 1 fixes the energy scale; the analytic
    gapless and margin predicates in :mod:`piezotb.spectral` assume q0 = 1.
    """
    upper = np.array([[0, 1], [0, 0]], dtype=complex)
    lower = np.array([[0, 0], [1, 0]], dtype=complex)
    terms = [
        HoppingTerm((0, 0), _S1, Coefficient("const", scale=q0)),
        HoppingTerm((0, 0), _S3, Coefficient("q", 3)),
        HoppingTerm((1, 0), upper, Coefficient("q", 1)),
        HoppingTerm((-1, 0), lower, Coefficient("q", 1)),
        HoppingTerm((0, 1), upper, Coefficient("q", 2)),
        HoppingTerm((0, -1), lower, Coefficient("q", 2)),
    ]
    name = "uniaxial" if q0 == 1.0 else None
    box = UNIAXIAL_BOX if q0 == 1.0 else None
    return HoppingModel(2, 1, 3, terms, name=name, admissible_box=box)


def nn_graphene_model() -> HoppingModel:
    """Nearest-neighbor honeycomb model without stagger; q = (q1, q2)."""
    upper = np.array([[0, 1], [0, 0]], dtype=complex)
    lower = np.array([[0, 0], [1, 0]], dtype=complex)
    terms = [
        HoppingTerm((0, 0), _S1),
        HoppingTerm((1, 0), upper, Coefficient("q", 1)),
        HoppingTerm((-1, 0), lower, Coefficient("q", 1)),
        HoppingTerm((0, 1), upper, Coefficient("q", 2)),
        HoppingTerm((0, -1), lower, Coefficient("q", 2)),
    ]
    return HoppingModel(2, 1, 2, terms, name="nn-graphene",
                        admissible_box=((0.0, 2.0), (0.0, 2.0)))


MODEL_PRESETS: dict[str, Callable[[], HoppingModel]] = {
    "uniaxial": uniaxial_model,
    "nn-graphene": nn_graphene_model,
}


def model_from_document(doc) -> HoppingModel:
    """Build a model from a preset name or a structured document."""
    if isinstance(doc, str):
        name = doc
        if name not in MODEL_PRESETS:
            raise ValueError(f"unknown model preset {name!r}")
        return MODEL_PRESETS[name]()
    if "name" in doc:
        return model_from_document(doc["name"])
    try:
        terms = []
        for td in doc["terms"]:
            matrix = np.array([[complex(re, im) for re, im in row]
                               for row in td["matrix"]])
            coef = Coefficient.from_document(td.get("coefficient", {}))
            terms.append(HoppingTerm(tuple(td["n"]), matrix, coef))
        return HoppingModel(doc["d"], doc["m"], doc["n_params"], terms)
    except (KeyError, TypeError, IndexError) as exc:
        raise ValueError(f"malformed model document: {exc}") from exc


def _as_symbol(model_or_symbol) -> BlochSymbol:
    if isinstance(model_or_symbol, BlochSymbol):
        return model_or_symbol
    return model_or_symbol.bloch()


def eval_symbol(model_or_symbol, k, q):
    """Evaluate a symbol: returns (h0, h, H) at the given (k, q)."""
    symbol = _as_symbol(model_or_symbol)
    h0, h = symbol.components(k, q)
    return h0, h, symbol.matrix(k, q)


def symbol_k_gradient(model_or_symbol, k, q) -> np.ndarray:
    """Analytic k-derivatives dH/dk_j of the symbol, shape (..., d, 2^m, 2^m)."""
    return _as_symbol(model_or_symbol).k_gradient(k, q)
