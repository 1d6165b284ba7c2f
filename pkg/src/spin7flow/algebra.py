"""Pointwise Spin(7) linear algebra.

Everything here acts on a single point or, through leading batch axes, on
every node of a field at once.  A 4-form ``Phi`` is assumed admissible
(in the GL(8)-orbit of the Cayley form) and ``g`` is its induced metric.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from . import tensor as tc
from .tensor import DIM, TensorError, pull, frame, perm_sign

ADMISSIBLE_TOL = 1e-6


class AdmissibilityError(ValueError):
    """Raised when a 4-form is not in the orbit of the Cayley form."""


# ---------------------------------------------------------------------------
# the Cayley form

def _octonion_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Cayley-Dickson doubling: (a1, a2)(b1, b2) = (a1 b1 - b2* a2, b2 a1 + a2 b1*)
    n = len(a)
    if n == 1:
        return a * b
    h = n // 2
    a1, a2, b1, b2 = a[:h], a[h:], b[:h], b[h:]

    def conj(x):
        return np.concatenate([x[:1], -x[1:]])

    return np.concatenate([
        _octonion_product(a1, b1) - _octonion_product(conj(b2), a2),
        _octonion_product(b2, a1) + _octonion_product(a2, conj(b1)),
    ])


@lru_cache(maxsize=1)
def _cayley() -> np.ndarray:
    E = np.eye(DIM)
    # phi_ijk = <e_i e_j, e_k> on the imaginary units 1..7
    phi = np.zeros((7, 7, 7))
    for i in range(7):
        for j in range(7):
            phi[i, j] = _octonion_product(E[i + 1], E[j + 1])[1:]
    Phi = np.zeros((DIM,) * 4)
    for i, j, k in itertools.combinations(range(7), 3):
        if phi[i, j, k] != 0:
            Phi[0, i + 1, j + 1, k + 1] = phi[i, j, k]
    # the 7-dimensional star of phi fills the components without a 0 index
    for I in itertools.combinations(range(7), 3):
        J = tuple(x for x in range(7) if x not in I)
        Phi[tuple(j + 1 for j in J)] = perm_sign(I + J) * phi[I]
    Phi = tc.expand_form(tc.compress_form(Phi, 4), 4)
    # pin the sign convention: Λ²₇ must be the -6 eigenspace of the Φ-contraction
    w = np.linalg.eigvalsh(Phi.reshape(64, 64))
    if np.sum(np.isclose(w, 6.0)) == 7:
        Phi = -Phi
    Phi.setflags(write=False)
    return Phi


def standard_cayley_form() -> np.ndarray:
    """The Cayley 4-form Φ₀ on ℝ⁸; its induced metric is the identity."""
    return _cayley().copy()


# ---------------------------------------------------------------------------
# transport and the induced metric

def transport(Phi: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Pullback ``Φ(u,v,w,z) -> Φ(Mu,Mv,Mw,Mz)``; requires ``det M > 0``."""
    M = np.asarray(M, dtype=float)
    if M.shape[-2:] != (DIM, DIM):
        raise TensorError(f"transport needs 8x8 matrices, got {M.shape}")
    det = np.linalg.det(M)
    if np.any(det <= 0) or np.any(np.abs(det) < 1e-14):
        raise TensorError("transport needs an invertible, orientation-preserving matrix")
    return pull(np.asarray(Phi, dtype=float), M, 4)


@lru_cache(maxsize=1)
def _metric_tables():
    seven = range(7)
    splits223 = []
    for a in itertools.combinations(seven, 2):
        rest = [x for x in seven if x not in a]
        for b in itertools.combinations(rest, 2):
            t = tuple(x for x in rest if x not in b)
            splits223.append((a, b, t, perm_sign(a + b + t)))
    splits34 = []
    for t in itertools.combinations(seven, 3):
        q = tuple(x for x in seven if x not in t)
        splits34.append((t, q, perm_sign(t + q)))
    a = np.array([s[0] for s in splits223])
    b = np.array([s[1] for s in splits223])
    t = np.array([s[2] for s in splits223])
    sg = np.array([s[3] for s in splits223], dtype=float)
    t3 = np.array([s[0] for s in splits34])
    q4 = np.array([s[1] for s in splits34])
    sg34 = np.array([s[2] for s in splits34], dtype=float)
    return a, b, t, sg, t3, q4, sg34


_METRIC_CONST = 7.0 ** 3 / 6.0 ** (7.0 / 3.0)


def _quadratic_many(Phi: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """``g_Φ(v, v)`` for every node of ``Phi`` (N,8,8,8,8) and every row of ``vecs`` (V,8)."""
    a, b, t, sg, t3, q4, sg34 = _metric_tables()
    out = np.empty((Phi.shape[0], len(vecs)))
    skip = np.argmax(np.abs(vecs), axis=1)
    for r in np.unique(skip):
        sel = np.nonzero(skip == r)[0]
        C = np.array([x for x in range(DIM) if x != r])
        PC = Phi[:, :, C][:, :, :, C][:, :, :, :, C]
        gam = np.einsum("vp,npjkl->nvjkl", vecs[sel], PC)
        Q4 = PC[:, C][:, q4[:, 0], q4[:, 1], q4[:, 2], q4[:, 3]]
        # omega_i = e_i ⌟ v ⌟ Φ on the complement frame is gam[..., i, :, :]
        wa = gam[..., a[:, 0], a[:, 1]]
        wb = gam[..., b[:, 0], b[:, 1]] * (sg * gam[..., t[:, 0], t[:, 1], t[:, 2]])[..., None, :]
        B = np.einsum("nvis,nvjs->nvij", wa, wb, optimize=True)
        A = np.einsum("nvs,ns->nv", gam[..., t3[:, 0], t3[:, 1], t3[:, 2]] * sg34, Q4)
        scale = np.max(np.abs(gam), axis=(2, 3, 4))
        if np.any(np.abs(A) <= 1e-13 * scale ** 2) or not np.all(np.isfinite(A)):
            raise AdmissibilityError("A(v) vanishes: the 4-form is not admissible")
        q2 = -_METRIC_CONST * np.cbrt(np.linalg.det(B)) / A ** 3
        if np.any(q2 <= 0):
            raise AdmissibilityError("g(v,v)^2 is not positive: the 4-form is not admissible")
        out[:, sel] = np.sqrt(q2)
    return out


def metric_quadratic(Phi: np.ndarray, v: np.ndarray) -> float:
    """``g_Φ(v, v)`` from the B/A determinant formula for a single point.

    The frame completing ``v`` is the standard basis minus the direction of
    the largest component of ``v``.  Orientation of that frame flips the
    signs of ``det B`` and ``A`` together, so only their ratio is tested.
    """
    Phi = tc.as_tensor(Phi, 4)
    v = np.asarray(v, dtype=float)
    if v.shape != (DIM,) or not np.any(v):
        raise TensorError("metric_quadratic needs a nonzero vector")
    return float(_quadratic_many(Phi[None], v[None])[0, 0])


def induced_metric(Phi: np.ndarray) -> np.ndarray:
    """Metric determined by an admissible 4-form (batched), by polarization."""
    Phi = np.asarray(Phi, dtype=float)
    batch = Phi.shape[:-4]
    E = np.eye(DIM)
    pairs = list(itertools.combinations(range(DIM), 2))
    vecs = np.concatenate([E, np.array([E[i] + E[j] for i, j in pairs])])
    Q = _quadratic_many(Phi.reshape((-1,) + (DIM,) * 4), vecs)
    g = np.zeros((Q.shape[0], DIM, DIM))
    d = Q[:, :DIM]
    g[:, np.arange(DIM), np.arange(DIM)] = d
    for n, (i, j) in enumerate(pairs):
        off = 0.5 * (Q[:, DIM + n] - d[:, i] - d[:, j])
        g[:, i, j] = off
        g[:, j, i] = off
    if np.min(np.linalg.eigvalsh(g)) <= 0:
        raise AdmissibilityError("polarized metric is not positive definite")
    return g.reshape(batch + (DIM, DIM))


def frame_form(Phi: np.ndarray, g: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(Phi_F, F, E)``: Φ in a g-orthonormal frame plus the frame maps."""
    if g is None:
        g = induced_metric(Phi)
    F, E = frame(g)
    return pull(Phi, F, 4), F, E


# ---------------------------------------------------------------------------
# contractions

def phi_contract2(beta: np.ndarray, Phi: np.ndarray, ginv: np.ndarray | None = None) -> np.ndarray:
    """``β^{ab} Φ_{abij}`` (indices raised with ``ginv`` when given)."""
    if ginv is not None:
        beta = np.einsum("...pq,...pa,...qb->...ab", beta, ginv, ginv)
    return np.einsum("...ab,...abij->...ij", beta, Phi)


def raise_first(A: np.ndarray, ginv: np.ndarray | None) -> np.ndarray:
    """``A_i^p = A_{iq} g^{qp}``."""
    return A if ginv is None else np.einsum("...iq,...qp->...ip", A, ginv)


def _ginv(g):
    return None if g is None else np.linalg.inv(g)


def project_2form(beta, Phi, g=None):
    """Split a 2-form into its Λ²₇ and Λ²₂₁ parts."""
    beta = np.asarray(beta, dtype=float)
    if not tc.is_antisymmetric(beta, 2, atol=1e-10):
        raise TensorError("project_2form needs an antisymmetric input")
    c = phi_contract2(beta, Phi, _ginv(g))
    b7 = 0.25 * beta - 0.125 * c
    return b7, beta - b7


def pi7(beta, Phi, ginv=None):
    """Λ²₇ projection of the antisymmetric part of ``beta``."""
    b = tc.skew2(np.asarray(beta, dtype=float))
    return 0.25 * b - 0.125 * phi_contract2(b, Phi, ginv)


def lambda7_residual(beta, Phi, ginv=None) -> np.ndarray:
    """``β^{ab}Φ_{abij} + 6β_{ij}``, zero exactly on Λ²₇."""
    return phi_contract2(beta, Phi, ginv) + 6.0 * beta


def vector_to_3form(X, Phi, ginv=None):
    """``(X ⌟ Φ)_{ijk} = X^l Φ_{lijk}``."""
    Xu = X if ginv is None else np.einsum("...a,...ab->...b", X, ginv)
    return np.einsum("...l,...lijk->...ijk", Xu, Phi)


def decompose_3form(gamma, Phi, g=None):
    """Return ``(X, γ₄₈)`` with ``γ = X ⌟ Φ + γ₄₈`` (X as a covector)."""
    gamma = np.asarray(gamma, dtype=float)
    if not tc.is_antisymmetric(gamma, 3, atol=1e-10):
        raise TensorError("decompose_3form needs an antisymmetric input")
    ginv = _ginv(g)
    if ginv is None:
        X = np.einsum("...ijk,...lijk->...l", gamma, Phi) / 42.0
    else:
        X = np.einsum("...ijk,...lpqr,...ip,...jq,...kr->...l", gamma, Phi, ginv, ginv, ginv) / 42.0
    return X, gamma - vector_to_3form(X, Phi, ginv)


# ---------------------------------------------------------------------------
# diamond operator

def diamond(A, Phi, g=None) -> np.ndarray:
    """``(A⋄Φ)_{ijkl} = A_i^pΦ_{pjkl} + A_j^pΦ_{ipkl} + A_k^pΦ_{ijpl} + A_l^pΦ_{ijkp}``."""
    A = raise_first(np.asarray(A, dtype=float), _ginv(g))
    return (np.einsum("...ip,...pjkl->...ijkl", A, Phi)
            + np.einsum("...jp,...ipkl->...ijkl", A, Phi)
            + np.einsum("...kp,...ijpl->...ijkl", A, Phi)
            + np.einsum("...lp,...ijkp->...ijkl", A, Phi))


def diamond_adjoint(sigma, Phi) -> np.ndarray:
    """Adjoint of ``A ↦ A⋄Φ`` for the full-sum inner products (orthonormal frame)."""
    return 4.0 * np.einsum("...ijkl,...pjkl->...ip", sigma, Phi)


def split_2tensor(A, Phi):
    """Orthonormal-frame split of a 2-tensor into (trace part, A₃₅, A₇, A₂₁)."""
    A = np.asarray(A, dtype=float)
    tr = np.einsum("...ii->...", A)
    I = np.eye(DIM)
    A1 = tr[..., None, None] * I / DIM
    A35 = tc.sym2(A) - A1
    A7, A21 = project_2form(tc.skew2(A), Phi)
    return A1, A35, A7, A21


def diamond_inverse(sigma, Phi, g=None, tol: float = 1e-9):
    """The unique ``A ∈ S² ⊕ Λ²₇`` with ``A⋄Φ = σ``.

    The diamond map is diagonal on the pieces of a 2-tensor:
    ``⟨A⋄Φ, B⋄Φ⟩ = 84 trA trB + 96⟨A₃₅,B₃₅⟩ + 384⟨A₇,B₇⟩``, so the adjoint
    followed by the inverse weights inverts it on its image.  A σ with an
    Ω⁴₂₇ part (relative size above ``tol``) is rejected.
    """
    A, resid = _diamond_solve(sigma, Phi, g)
    scale = np.sqrt(np.max(tc.norm_sq(np.asarray(sigma, dtype=float), rank=4), initial=0.0))
    if np.max(resid, initial=0.0) > tol * max(scale, 1.0):
        raise TensorError("4-form has a component outside the image of the diamond map")
    return A


def _diamond_solve(sigma, Phi, g=None):
    sigma = np.asarray(sigma, dtype=float)
    if g is not None:
        F, E = frame(g)
        sF = pull(sigma, F, 4)
        PF = pull(Phi, F, 4)
    else:
        sF, PF = sigma, Phi
    Y = diamond_adjoint(sF, PF)
    Y1, Y35, Y7, _ = split_2tensor(Y, PF)
    A = Y1 / (84.0 * DIM) + Y35 / 96.0 + Y7 / 384.0
    resid = np.sqrt(tc.norm_sq(diamond(A, PF) - sF, rank=4))
    if g is not None:
        A = pull(A, E, 2)
    return A, resid


def decompose_4form(sigma, Phi, g=None):
    """Split a 4-form into its Ω⁴₁, Ω⁴₇, Ω⁴₂₇ and Ω⁴₃₅ pieces."""
    sigma = np.asarray(sigma, dtype=float)
    if not tc.is_antisymmetric(sigma, 4, atol=1e-10):
        raise TensorError("decompose_4form needs an antisymmetric input")
    plus = 0.5 * (sigma + tc.hodge_star(sigma, g, 4))
    s35 = sigma - plus
    A, _ = _diamond_solve(plus, Phi, g)
    ginv = _ginv(g)
    gm = np.broadcast_to(np.eye(DIM), A.shape) if g is None else g
    tr = np.einsum("...ij,...ij->...", A, np.eye(DIM) if ginv is None else ginv)
    A1 = tr[..., None, None] * gm / DIM
    s1 = diamond(A1, Phi, g)
    s7 = diamond(tc.skew2(A), Phi, g)
    return s1, s7, plus - s1 - s7, s35


# ---------------------------------------------------------------------------
# vector <-> torsion-type maps

def iota(X, Phi, g=None):
    """``ι(X)_{i;jk} = X_k g_{ij} − X_j g_{ik} + X^p Φ_{pijk}`` (Λ¹ → Λ¹⊗Λ²₇)."""
    X = np.asarray(X, dtype=float)
    gm = np.eye(DIM) if g is None else g
    ginv = _ginv(g)
    return (np.einsum("...k,...ij->...ijk", X, gm) - np.einsum("...j,...ik->...ijk", X, gm)
            + vector_to_3form(X, Phi, ginv))


def rho(gamma, g=None):
    """``ρ(γ)_j = γ_{i;ji}`` (trace over the first and last slots)."""
    if g is None:
        return np.einsum("...iji->...j", gamma)
    return np.einsum("...ijk,...ik->...j", gamma, np.linalg.inv(g))


# ---------------------------------------------------------------------------
# identity checks

def lambda2_basis() -> np.ndarray:
    """Orthonormal basis (Frobenius) of antisymmetric 8x8 matrices, shape (28,8,8)."""
    out = []
    for i, j in itertools.combinations(range(DIM), 2):
        b = np.zeros((DIM, DIM))
        b[i, j], b[j, i] = 1 / np.sqrt(2), -1 / np.sqrt(2)
        out.append(b)
    return np.array(out)


@lru_cache(maxsize=1)
def _lambda7_basis():
    w, V = np.linalg.eigh(_cayley().reshape(64, 64))
    B = V[:, np.isclose(w, -6.0)].T.reshape(7, DIM, DIM)
    B.setflags(write=False)
    return B


def lambda7_basis() -> np.ndarray:
    """Fixed orthonormal basis of Λ²₇ for Φ₀, shape (7, 8, 8)."""
    return _lambda7_basis().copy()


def verify_contraction_identities(Phi, g=None) -> dict:
    """Residuals of the pointwise identities, measured in a g-orthonormal frame.

    In the frame the components of an admissible form are O(1), so the
    returned maxima are relative residuals.
    """
    Phi = np.asarray(Phi, dtype=float)
    if g is None:
        try:
            g = induced_metric(Phi)
        except AdmissibilityError:
            return {k: np.inf for k in ("six_six_four", "forty_two", "three_three_six",
                                        "self_dual", "pi7_eigen", "pi21_eigen", "antisymmetry")}
    PF, _, _ = frame_form(Phi, g)
    I = np.eye(DIM)
    b = PF.shape[:-4]
    P2 = PF.reshape(b + (64, 64))
    lhs = P2 @ np.swapaxes(P2, -1, -2)
    rhs = (6 * np.einsum("ia,jb->ijab", I, I) - 6 * np.einsum("ib,ja->ijab", I, I)).reshape(64, 64) - 4 * P2
    r1 = np.abs(lhs - rhs).max()
    P3 = PF.reshape(b + (DIM, DIM ** 3))
    r2 = np.abs(P3 @ np.swapaxes(P3, -1, -2) - 42 * I).max()
    r3 = np.abs(np.sum(P2 * P2, axis=(-2, -1)) - 336).max() / 336
    r4 = np.abs(tc.hodge_star(PF, None, 4) - PF).max()
    L2 = lambda2_basis().reshape(28, 64)
    M = L2 @ P2 @ L2.T
    P7 = 0.25 * np.eye(28) - 0.125 * M
    P21 = np.eye(28) - P7
    r5 = np.abs(M @ P7 + 6 * P7).max()
    r6 = np.abs(M @ P21 - 2 * P21).max()
    ranks_ok = 0.0
    if PF.ndim == 4:
        ranks_ok = float(abs(np.linalg.matrix_rank(P7, 1e-8) - 7) + abs(np.linalg.matrix_rank(P21, 1e-8) - 21))
    r7 = np.abs(PF - tc.expand_form(tc.compress_form(PF, 4), 4)).max()
    return {"six_six_four": float(r1), "forty_two": float(r2), "three_three_six": float(r3),
            "self_dual": float(r4), "pi7_eigen": float(r5) + ranks_ok, "pi21_eigen": float(r6) + ranks_ok,
            "antisymmetry": float(r7)}


def admissibility_residual(Phi, g=None) -> float:
    """Largest contraction-identity residual; ``< ADMISSIBLE_TOL`` means admissible."""
    return float(max(verify_contraction_identities(Phi, g).values()))


def is_admissible(Phi, tol: float = ADMISSIBLE_TOL) -> bool:
    return admissibility_residual(Phi) < tol


def spin7_element(beta21: np.ndarray) -> np.ndarray:
    """``exp(β₂₁)`` for a Λ²₂₁ matrix: an element of the stabilizer of Φ₀."""
    return expm(np.asarray(beta21, dtype=float))
