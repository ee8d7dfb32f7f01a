"""Shared fixtures and model builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from piezotb import (Coefficient, HoppingModel, HoppingTerm, generator_eta,
                     pauli_matrices, uniaxial_model)

ID2, S1, S2, S3 = pauli_matrices()


def random_two_band_model(rng, n_params: int = 2, n_pairs: int = 4,
                          max_range: int = 2) -> HoppingModel:
    """Random Hermitian-closed m=1 model with mixed coefficient kinds.

    Real coefficient scales keep the Hermiticity closure M_{-n} = M_n^dagger
    for every q.
    """
    dim = 2
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    terms = [HoppingTerm((0, 0), (a + a.conj().T) / 2)]
    kinds = ("const", "q", "cos", "sin")
    pairs = 0
    while pairs < n_pairs:
        n = tuple(int(v) for v in rng.integers(-max_range, max_range + 1, 2))
        if n == (0, 0):
            continue
        mat = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        mat /= np.abs(mat).max()
        kind = str(rng.choice(kinds))
        index = 0 if kind == "const" else int(rng.integers(1, n_params + 1))
        coef = Coefficient(kind, index, complex(rng.uniform(-1.0, 1.0)))
        terms.append(HoppingTerm(n, mat, coef))
        terms.append(HoppingTerm(tuple(-v for v in n), mat.conj().T, coef))
        pairs += 1
    return HoppingModel(2, 1, n_params, terms)


def qwz_model() -> HoppingModel:
    """Reference half-filled map u = (sin k1, sin k2, q1 + cos k1 + cos k2)."""
    half_i = Coefficient("const", scale=0.5j)
    neg_half_i = Coefficient("const", scale=-0.5j)
    half = Coefficient("const", scale=0.5)
    terms = [
        HoppingTerm((1, 0), S1, half_i),
        HoppingTerm((-1, 0), S1, neg_half_i),
        HoppingTerm((0, 1), S2, half_i),
        HoppingTerm((0, -1), S2, neg_half_i),
        HoppingTerm((0, 0), S3, Coefficient("q", 1)),
        HoppingTerm((1, 0), S3, half),
        HoppingTerm((-1, 0), S3, half),
        HoppingTerm((0, 1), S3, half),
        HoppingTerm((0, -1), S3, half),
    ]
    return HoppingModel(2, 1, 1, terms)


@pytest.fixture(scope="session")
def uniaxial():
    return uniaxial_model()


@pytest.fixture(scope="session")
def uniaxial_symbol(uniaxial):
    return uniaxial.bloch()


@pytest.fixture(scope="session")
def eta1():
    return generator_eta(1, 0.5)


@pytest.fixture(scope="session")
def eta2():
    return generator_eta(2, 0.5)
