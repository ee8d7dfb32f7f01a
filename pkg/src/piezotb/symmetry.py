"""Discrete symmetries of two-band models and their classification.

All matrix relations are exact: the Clifford matrices have entries in
{0, +-1, +-i}, so products and comparisons incur no rounding.  Symbol-level
symmetry checks reduce the antiunitary operator identities to these matrix
relations plus reality of the Clifford components (parity acts as
k -> -k and complex conjugation as entrywise conjugation with k -> -k,
which cancel pointwise for trigonometric-polynomial symbols).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import MethodDisagreementError
from .model import _as_symbol, clifford_basis, pauli_matrices
from .spectral import k_grid

__all__ = [
    "theta_matrix",
    "upsilon_matrix",
    "clifford_relation_failures",
    "verify_symmetry_relations",
    "SymmetryVerdict",
    "symmetry_class",
    "certify_model_symmetry",
    "check_inversion",
]


def _odd_sigma_product(m: int) -> np.ndarray:
    sigmas = clifford_basis(m)
    return reduce(np.matmul, sigmas[0::2])


def theta_matrix(m: int) -> np.ndarray:
    """Particle-hole operator for odd m: the product of odd-indexed Sigmas.

    Unitary with Theta^2 = (-1)^nu and Theta Sigma_j = (-1)^j Sigma_j Theta,
    nu = (m+1)//2.
    """
    if m % 2 != 1:
        raise ValueError("theta_matrix requires odd m")
    return _odd_sigma_product(m)


def upsilon_matrix(m: int) -> np.ndarray:
    """Time-reversal operator for even m: the product of odd-indexed Sigmas.

    Unitary with Upsilon^2 = (-1)^nu and
    Upsilon Sigma_j = (-1)^(j+1) Sigma_j Upsilon, nu = (m+1)//2.
    """
    if m % 2 != 0 or m < 2:
        raise ValueError("upsilon_matrix requires even m >= 2")
    return _odd_sigma_product(m)


def clifford_relation_failures(sigmas) -> list[tuple]:
    """Violated relations of a candidate Clifford set, as (index..., name).

    Checks hermiticity, tracelessness, unit squares, pairwise
    anticommutators and the conjugation parity conj(S_j) = (-1)^(j+1) S_j.
    Comparisons are exact.
    """
    sigmas = [np.asarray(s) for s in sigmas]
    dim = sigmas[0].shape[0]
    eye = np.eye(dim)
    failures = []
    for j, s in enumerate(sigmas, start=1):
        if not np.array_equal(s, s.conj().T):
            failures.append((j, "hermiticity"))
        if np.trace(s) != 0:
            failures.append((j, "traceless"))
        if not np.array_equal(s @ s, eye):
            failures.append((j, "square"))
        if not np.array_equal(s.conj(), (-1.0) ** (j + 1) * s):
            failures.append((j, "conjugation-parity"))
    for i in range(len(sigmas)):
        for j in range(i + 1, len(sigmas)):
            anti = sigmas[i] @ sigmas[j] + sigmas[j] @ sigmas[i]
            if np.any(anti != 0):
                failures.append((i + 1, j + 1, "anticommutation"))
    return failures


def verify_symmetry_relations(m: int) -> dict:
    """Check every Clifford and involution relation for rank m, exactly.

    Returns a report with the number of relations checked, the worst
    residual (0.0 when everything is exact) and any failures.
    """
    sigmas = clifford_basis(m)
    dim = 2 ** m
    eye = np.eye(dim)
    nu = (m + 1) // 2
    failures = list(clifford_relation_failures(sigmas))
    checked = 4 * len(sigmas) + len(sigmas) * (len(sigmas) - 1) // 2
    residual = 0.0

    # product identity Sigma_1 ... Sigma_2m = i^m Sigma_{2m+1}
    prod = reduce(np.matmul, sigmas[:-1])
    if not np.array_equal(prod, (1j) ** m * sigmas[-1]):
        failures.append((2 * m + 1, "product-identity"))
    checked += 1

    op = theta_matrix(m) if m % 2 else upsilon_matrix(m)
    name = "theta" if m % 2 else "upsilon"
    if not np.array_equal(op @ op.conj().T, eye):
        failures.append((name, "unitarity"))
    if not np.array_equal(op @ op, (-1.0) ** nu * eye):
        failures.append((name, "involution-sign"))
    checked += 2
    for j, s in enumerate(sigmas, start=1):
        sign = (-1.0) ** j if m % 2 else (-1.0) ** (j + 1)
        if not np.array_equal(op @ s, sign * (s @ op)):
            failures.append((name, j, "commutation-sign"))
        checked += 1
    if failures:
        residual = 1.0
    return {"m": m, "nu": nu, "relations_checked": checked,
            "max_residual": residual, "passed": not failures,
            "failures": failures}


@dataclass(frozen=True)
class SymmetryVerdict:
    """Altland-Zirnbauer verdict for a two-band model of rank m."""

    m: int
    nu: int
    ph: int          # particle-hole sign, 0 when absent
    tr: int          # time-reversal sign, 0 when absent
    cartan: str

    def to_document(self) -> dict:
        return {"m": self.m, "nu": self.nu, "ph": self.ph, "tr": self.tr,
                "cartan": self.cartan}


def symmetry_class(m: int) -> SymmetryVerdict:
    """Cartan label from the parities of m and nu, certified on the matrices.

    Rows: (m even, nu even) -> TR +1, AI; (even, odd) -> TR -1, AII;
    (odd, even) -> PH +1, D; (odd, odd) -> PH -1, C.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    nu = (m + 1) // 2
    sign = (-1) ** nu
    if m % 2 == 0:
        verdict = SymmetryVerdict(m, nu, 0, sign, "AI" if sign == 1 else "AII")
        op = upsilon_matrix(m)
    else:
        verdict = SymmetryVerdict(m, nu, sign, 0, "D" if sign == 1 else "C")
        op = theta_matrix(m)
    # certify the table sign against the explicit involution
    square = op @ op
    actual = int(np.real(square[0, 0]))
    if not np.array_equal(square, actual * np.eye(2 ** m)) or actual != sign:
        raise MethodDisagreementError(
            f"involution sign {actual} disagrees with table sign {sign} at m={m}")
    return verdict


def certify_model_symmetry(model_or_symbol, n_samples: int = 20,
                           seed: int = 0, tol: float = 1e-10) -> dict:
    """Symbol-level antiunitary symmetry check for a two-band model.

    Requires h0 = 0 (models with a scalar part are reported unclassified).
    For odd m certifies Theta H(k) Theta* = -conj(H(k)), the particle-hole
    identity; for even m certifies Upsilon H(k) Upsilon* = +conj(H(k)), the
    time-reversal identity.
    """
    symbol = _as_symbol(model_or_symbol)
    m = symbol.model.m
    rng = np.random.default_rng(seed)
    ks = rng.uniform(-np.pi, np.pi, (n_samples, symbol.model.d))
    qs = rng.uniform(-1.5, 1.5, (n_samples, symbol.model.n_params))
    h0, _ = symbol.components(ks, qs)
    if float(np.abs(h0).max()) > tol:
        return {"classified": False, "reason": "h0 is not identically zero",
                "max_h0": float(np.abs(h0).max())}
    mats = symbol.matrix(ks, qs)
    if m % 2:
        op, kind, sign = theta_matrix(m), "particle-hole", -1.0
    else:
        op, kind, sign = upsilon_matrix(m), "time-reversal", +1.0
    transformed = np.einsum("ij,sjk,kl->sil", op, mats, op.conj().T)
    residual = float(np.abs(transformed - sign * mats.conj()).max())
    return {"classified": residual <= tol, "kind": kind,
            "sign": (-1) ** ((m + 1) // 2),
            "max_residual": residual}


def check_inversion(model_or_symbol, q, n_k: int = 64,
                    tol: float = 1e-10) -> bool:
    """Whether sigma_1 H(-k; q) sigma_1 = H(k; q) on a k-grid (m = 1).

    True for the strained honeycomb models exactly when the stagger
    vanishes and the hoppings are real.
    """
    symbol = _as_symbol(model_or_symbol)
    if symbol.model.m != 1:
        raise ValueError("the inversion check is defined for m = 1")
    q = np.asarray(q, dtype=float)
    ks = k_grid(n_k, symbol.model.d)
    _, s1, _, _ = pauli_matrices()
    plus = symbol.matrix(ks, q)
    minus = symbol.matrix(-ks, q)
    residual = float(np.abs(s1 @ minus @ s1 - plus).max())
    return residual < tol
