"""Principal symbols at the flat model point ``(Φ₀, δ)``.

States ``(h, X)`` live in the 43-dimensional space ``S² ⊕ Λ²₇``.  Coordinates
refer to a fixed Frobenius-orthonormal basis: 36 elements of ``S²``
(``E_ii`` and ``(E_ij + E_ji)/√2``) followed by the 7 elements of
``algebra.lambda7_basis()``.  Because the basis is orthonormal, the inner
product ``⟨h, h'⟩ + ⟨X, X'⟩`` is the Euclidean one on coordinates and the
adjoint of a map is its transpose.

Symbols use the substitution ``∂ ↦ ξ``; second-order symbols are quadratic
and first-order ones linear in ``ξ``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import algebra as al
from . import tensor as tc
from .fields import make_rng

STATE_DIM = 43
SYM_DIM = 36
RANK_THRESHOLD = 1e-8
GAP_TOL = 1e-6


class SymbolError(ValueError):
    """Raised for ``ξ = 0`` or a numerically ambiguous rank decision."""


# ---------------------------------------------------------------------------
# states and coordinates

@lru_cache(maxsize=None)
def _sym_basis() -> np.ndarray:
    out = []
    for i in range(tc.DIM):
        for j in range(i, tc.DIM):
            e = np.zeros((tc.DIM, tc.DIM))
            if i == j:
                e[i, i] = 1.0
            else:
                e[i, j] = e[j, i] = 1.0 / np.sqrt(2.0)
            out.append(e)
    return np.array(out)


@lru_cache(maxsize=None)
def _state_basis() -> np.ndarray:
    return np.concatenate([_sym_basis(), al.lambda7_basis()])


def state_basis() -> np.ndarray:
    """The 43 basis 2-tensors, shape (43, 8, 8)."""
    return _state_basis().copy()


def _phi():
    return al.standard_cayley_form()


def coords_of(A: np.ndarray) -> np.ndarray:
    """Orthogonal projection of a 2-tensor onto ``S² ⊕ Λ²₇``, in coordinates."""
    return np.einsum("kij,...ij->...k", _state_basis(), A)


def tensor_of(v: np.ndarray) -> np.ndarray:
    """The 2-tensor ``h + X`` with coordinates ``v``."""
    return np.einsum("k,kij->ij", np.asarray(v, dtype=float), _state_basis())


@dataclass
class SymbolState:
    """An element ``(h, X)`` of ``S² ⊕ Λ²₇``; ``X`` is stored by its 7 coordinates."""

    h: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        if self.h.shape != (tc.DIM, tc.DIM) or not np.allclose(self.h, self.h.T, atol=1e-12):
            raise ValueError("h must be a symmetric 8x8 matrix")
        if self.X.shape != (7,):
            raise ValueError("X must be given by 7 coordinates")

    @property
    def X_matrix(self) -> np.ndarray:
        return np.einsum("k,kij->ij", self.X, al.lambda7_basis())

    @property
    def coords(self) -> np.ndarray:
        return np.concatenate([np.einsum("kij,ij->k", _sym_basis(), self.h), self.X])

    @classmethod
    def from_coords(cls, v) -> "SymbolState":
        v = np.asarray(v, dtype=float)
        if v.shape != (STATE_DIM,):
            raise ValueError("expected 43 coordinates")
        h = np.einsum("k,kij->ij", v[:SYM_DIM], _sym_basis())
        return cls(h, v[SYM_DIM:])

    @classmethod
    def from_matrices(cls, h, X) -> "SymbolState":
        X = np.asarray(X, dtype=float)
        if np.abs(al.lambda7_residual(X, _phi())).max() > 1e-10:
            raise ValueError("X is not in Λ²₇")
        return cls(h, np.einsum("kij,ij->k", al.lambda7_basis(), X))


def random_state(rng: np.random.Generator) -> SymbolState:
    return SymbolState.from_coords(rng.standard_normal(STATE_DIM))


def _split(v) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(v, SymbolState):
        return v.h, v.X_matrix
    s = SymbolState.from_coords(v)
    return s.h, s.X_matrix


def _xi(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (tc.DIM,):
        raise SymbolError("ξ must be a covector with 8 components")
    if not np.linalg.norm(xi) > 0:
        raise SymbolError("ξ must be nonzero")
    return xi


def _matrix(fn, xi) -> np.ndarray:
    """Matrix of the linear map ``(h, X) ↦ fn(ξ, h, X)``; the state index comes last."""
    cols = [fn(xi, *_split(e)) for e in np.eye(STATE_DIM)]
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# symbols of the geometric operators, as printed

def dt_apply(xi, h, X) -> np.ndarray:
    """``σ(DT)_{m;ib} = ¼(ξ_b h_im − ξ_i h_mb + ξ_j h_mq Φ_ibjq) + ξ_m X_ib``."""
    Phi = _phi()
    out = 0.25 * (np.einsum("b,im->mib", xi, h) - np.einsum("i,mb->mib", xi, h)
                  + np.einsum("j,mq,ibjq->mib", xi, h, Phi))
    return out + np.einsum("m,ib->mib", xi, X)


def t8_apply(xi, h, X) -> np.ndarray:
    """``σ(DT₈)_k = σ(DT)_{m;km}``."""
    return np.einsum("mkm->k", dt_apply(xi, h, X))


def divt_apply(xi, h, X) -> np.ndarray:
    """``σ(D Div T)_ib = ¼(ξ_mξ_b h_im − ξ_mξ_i h_mb + ξ_mξ_j h_mq Φ_ibjq) + |ξ|² X_ib``."""
    Phi = _phi()
    w = h @ xi
    out = 0.25 * (np.outer(w, xi) - np.outer(xi, w) + np.einsum("j,q,ibjq->ib", xi, w, Phi))
    return out + (xi @ xi) * X


def liet8g_apply(xi, h, X) -> np.ndarray:
    """``σ(D L_{T₈}g)_li = ¼(ξ_lξ_m h_im + ξ_iξ_m h_lm − 2ξ_iξ_l tr h) + ξ_lξ_m X_im + ξ_iξ_m X_lm``."""
    w = h @ xi
    u = X @ xi
    out = 0.25 * (np.outer(xi, w) + np.outer(w, xi) - 2 * np.trace(h) * np.outer(xi, xi))
    return out + np.outer(xi, u) + np.outer(u, xi)


def ric_apply(xi, h, X) -> np.ndarray:
    """``σ(D Ric)_ij = −|ξ|² h_ij − ξ_iξ_j tr h + ξ_iξ_a h_aj + ξ_aξ_j h_ia``."""
    w = h @ xi
    return -(xi @ xi) * h - np.trace(h) * np.outer(xi, xi) + np.outer(xi, w) + np.outer(w, xi)


def scalar_apply(xi, h, X) -> float:
    """``σ(DR) = −2|ξ|² tr h + 2ξ_jξ_a h_ja``."""
    return -2 * (xi @ xi) * np.trace(h) + 2 * xi @ h @ xi


def symbol_DT(xi) -> np.ndarray:
    """``σ_ξ(DT)`` as an array of shape (8, 8, 8, 43)."""
    return _matrix(dt_apply, _xi(xi))


def symbol_T8(xi) -> np.ndarray:
    return _matrix(t8_apply, _xi(xi))


def symbol_DivT(xi) -> np.ndarray:
    """``σ_ξ(D Div T)`` as an array of shape (8, 8, 43)."""
    return _matrix(divt_apply, _xi(xi))


def symbol_LieT8g(xi) -> np.ndarray:
    return _matrix(liet8g_apply, _xi(xi))


def symbol_Ric(xi) -> np.ndarray:
    return _matrix(ric_apply, _xi(xi))


def symbol_Scalar(xi) -> np.ndarray:
    """``σ_ξ(DR)`` as a row of length 43."""
    return _matrix(scalar_apply, _xi(xi))


# ---------------------------------------------------------------------------
# δ* and the Bianchi maps

def delta_star_apply(xi, W) -> np.ndarray:
    """The 2-tensor ``½(ξ_jW_k + ξ_kW_j) + ⅛(ξ_jW_k − ξ_kW_j − ξ_aW_bΦ_abjk)``."""
    W = np.asarray(W, dtype=float)
    h = 0.5 * (np.outer(xi, W) + np.outer(W, xi))
    return h + b2_apply(xi, W)


def b2_apply(xi, W) -> np.ndarray:
    """``B₂(W)_ij = ⅛(ξ_iW_j − ξ_jW_i − ξ_aW_bΦ_abij)``, the symbol of ``W ↦ (∇W)₇``."""
    return 0.125 * (np.outer(xi, W) - np.outer(W, xi) - np.einsum("a,b,abij->ij", xi, W, _phi()))


def b1_apply(xi, h) -> np.ndarray:
    """``B₁(h)_k = ξ_a h_ak − ½ξ_k tr h``."""
    return xi @ h - 0.5 * np.trace(h) * xi


def btilde_apply(xi, h, X) -> np.ndarray:
    """``B̃(h, X)_k = ½ξ_i h_ik − 2ξ_m X_km``."""
    return 0.5 * xi @ h - 2 * X @ xi


def btilde_from_definition(xi, h, X) -> np.ndarray:
    """``B̃ = B₁(h) − 2σ(DT₈)(h, X)``."""
    return b1_apply(xi, h) - 2 * t8_apply(xi, h, X)


def btilde_star_apply(xi, Y) -> np.ndarray:
    """``B̃*(Y) = (¼(ξ_iY_j + ξ_jY_i), ¼(ξ_iY_j − ξ_jY_i − ξ_aY_bΦ_abij))`` as one 2-tensor."""
    Y = np.asarray(Y, dtype=float)
    h = 0.25 * (np.outer(xi, Y) + np.outer(Y, xi))
    X = 0.25 * (np.outer(xi, Y) - np.outer(Y, xi) - np.einsum("a,b,abij->ij", xi, Y, _phi()))
    return h + X


def symbol_delta_star(xi) -> np.ndarray:
    """``σ_ξ(δ*)``: vectors → states, a 43x8 matrix."""
    xi = _xi(xi)
    return np.stack([coords_of(delta_star_apply(xi, W)) for W in np.eye(tc.DIM)], axis=1)


@dataclass
class BianchiMaps:
    B1: np.ndarray        # 8 x 36
    B2: np.ndarray        # 7 x 8, into Λ²₇ coordinates
    Btilde: np.ndarray    # 8 x 43
    Btilde_star: np.ndarray  # 43 x 8


def bianchi_maps(xi) -> BianchiMaps:
    xi = _xi(xi)
    B1 = np.stack([b1_apply(xi, e) for e in _sym_basis()], axis=1)
    L7 = al.lambda7_basis()
    B2 = np.stack([np.einsum("kij,ij->k", L7, b2_apply(xi, W)) for W in np.eye(tc.DIM)], axis=1)
    Bt = _matrix(btilde_apply, xi)
    Bts = np.stack([coords_of(btilde_star_apply(xi, Y)) for Y in np.eye(tc.DIM)], axis=1)
    return BianchiMaps(B1, B2, Bt, Bts)


# ---------------------------------------------------------------------------
# the operators L and L̃

@dataclass
class SymbolOperator:
    """A linear endomorphism of ``S² ⊕ Λ²₇`` in state coordinates."""

    xi: np.ndarray
    matrix: np.ndarray
    leak: float = 0.0  # size of the part of the output lying outside S² ⊕ Λ²₇

    def __call__(self, s: SymbolState) -> SymbolState:
        return SymbolState.from_coords(self.matrix @ s.coords)


def _operator(fn, xi) -> SymbolOperator:
    cols, leak = [], 0.0
    for e in np.eye(STATE_DIM):
        out = fn(xi, *_split(e))
        c = coords_of(out)
        leak = max(leak, float(np.abs(out - tensor_of(c)).max()))
        cols.append(c)
    return SymbolOperator(xi.copy(), np.stack(cols, axis=1), leak)


def l_apply(xi, h, X) -> np.ndarray:
    """The closed form of ``σ_ξ(L)(h, X)``."""
    x2 = xi @ xi
    w, u = h @ xi, X @ xi
    S = x2 * h - 0.5 * (np.outer(xi, w) + np.outer(w, xi)) + 2 * (np.outer(xi, u) + np.outer(u, xi))
    K = 0.5 * (np.outer(w, xi) - np.outer(xi, w) + np.einsum("k,q,ijkq->ij", xi, w, _phi())) + 2 * x2 * X
    return S + K


def l_compositional(xi, h, X, a=1.0, b=2.0, c=2.0) -> np.ndarray:
    """``−a σ(Ric) + b σ(L_{T₈}g) + c σ(Div T)``."""
    return -a * ric_apply(xi, h, X) + b * liet8g_apply(xi, h, X) + c * divt_apply(xi, h, X)


def deturck_vector_apply(xi, h, X, a=1.0, b=2.0) -> np.ndarray:
    """Symbol of ``W = a·W̃ − 2b·T₈`` with ``D W̃ = 2 div h − ∇ tr h``."""
    return a * (2 * xi @ h - np.trace(h) * xi) - 2 * b * t8_apply(xi, h, X)


def ltilde_compositional(xi, h, X, a=1.0, b=2.0, c=2.0) -> np.ndarray:
    """``σ(L) + σ(δ*)(σ(W))``: the DeTurck term ``L_WΦ`` has top part ``(sym ∇W + (∇W)₇)⋄Φ``."""
    W = deturck_vector_apply(xi, h, X, a, b)
    return l_compositional(xi, h, X, a, b, c) + delta_star_apply(xi, W)


def ltilde_apply(xi, h, X) -> np.ndarray:
    """The closed form of ``σ_ξ(L̃)(h, X)``."""
    x2 = xi @ xi
    w, u = h @ xi, X @ xi
    Phi = _phi()
    out = x2 * h + 2 * x2 * X
    out = out + 0.375 * (np.outer(w, xi) - np.outer(xi, w) + np.einsum("a,b,abij->ij", xi, w, Phi))
    out = out + 0.5 * (np.outer(u, xi) - np.outer(xi, u) + np.einsum("a,b,abij->ij", xi, u, Phi))
    return out


def assemble_symbol_L(xi, route: str = "closed") -> SymbolOperator:
    """``σ_ξ(L)``; ``route`` is ``"closed"`` or ``"compositional"``."""
    xi = _xi(xi)
    fn = {"closed": l_apply, "compositional": l_compositional}[route]
    return _operator(fn, xi)


def assemble_symbol_Ltilde(xi, route: str = "closed") -> SymbolOperator:
    xi = _xi(xi)
    fn = {"closed": ltilde_apply, "compositional": ltilde_compositional}[route]
    return _operator(fn, xi)


def assemble_symbol_family(xi, a: float, b: float, c: float, deturck: bool = True) -> SymbolOperator:
    """Symbol of the ``(a, b, c)`` family, optionally with the DeTurck term ``W = aW̃ − 2bT₈``."""
    xi = _xi(xi)
    if deturck:
        return _operator(lambda x, h, X: ltilde_compositional(x, h, X, a, b, c), xi)
    return _operator(lambda x, h, X: l_compositional(x, h, X, a, b, c), xi)


def reformulation_residual(xi, s: SymbolState) -> float:
    """Compare ``σ_ξ(L)(s)`` with its expression through ``B̃`` and ``B₂``; relative max error."""
    xi = _xi(xi)
    h, X = s.h, s.X_matrix
    direct = l_apply(xi, h, X)
    Bt = btilde_apply(xi, h, X)
    x2 = xi @ xi
    u = X @ xi
    sym_part = x2 * h - np.outer(xi, Bt) - np.outer(Bt, xi)
    seven = (2 * x2 * X - 8 * b2_apply(xi, Bt) + 2 * np.outer(u, xi) - 2 * np.outer(xi, u)
             + 2 * np.einsum("k,q,kqij->ij", xi, u, _phi()))
    err = max(np.abs(tc.sym2(direct) - sym_part).max(), np.abs(tc.skew2(direct) - seven).max())
    return float(err / max(np.abs(direct).max(), 1e-300))


# ---------------------------------------------------------------------------
# kernel and ellipticity

def _rank(M: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
    """Rank by singular-value thresholding at ``1e-8·s_max``, with a gap check."""
    U, s, Vt = np.linalg.svd(M)
    smax = s[0] if s.size else 0.0
    if smax == 0:
        return 0, s, Vt
    keep = s > RANK_THRESHOLD * smax
    r = int(keep.sum())
    lo = s[r - 1] if r > 0 else smax
    hi = s[r] if r < s.size else 0.0
    if (lo - hi) / smax < GAP_TOL:
        raise SymbolError("numerically ambiguous rank")
    return r, s, Vt


def nullity(M: np.ndarray) -> int:
    return M.shape[1] - _rank(M)[0]


def subspace_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Spectral-norm distance between the orthogonal projectors onto span(A) and span(B)."""
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    return float(np.linalg.norm(qa @ qa.T - qb @ qb.T, 2))


@dataclass
class KernelReport:
    nullity: int
    basis: np.ndarray  # 43 x nullity, orthonormal columns
    distance_to_delta_star: float
    equals_image_of_delta_star: bool


def kernel_analysis(op: SymbolOperator, xi=None, tol: float = 1e-9) -> KernelReport:
    xi = _xi(op.xi if xi is None else xi)
    r, _, Vt = _rank(op.matrix)
    basis = Vt[r:].T
    D = symbol_delta_star(xi)
    if basis.shape[1] != D.shape[1]:
        dist = np.inf
    else:
        dist = subspace_distance(basis, D)
    return KernelReport(STATE_DIM - r, basis, dist, bool(dist < tol))


def joint_kernel_nullity(xi) -> int:
    """Dimension of ``ker σ_ξ(L) ∩ ker B̃``."""
    xi = _xi(xi)
    M = np.vstack([assemble_symbol_L(xi).matrix, bianchi_maps(xi).Btilde])
    return nullity(M)


def ellipticity_check(op: SymbolOperator, xi=None) -> float:
    """``min ⟨σ(s), s⟩ / (|ξ|²|s|²)`` over nonzero states."""
    xi = _xi(op.xi if xi is None else xi)
    S = 0.5 * (op.matrix + op.matrix.T)
    return float(np.linalg.eigvalsh(S)[0] / (xi @ xi))


def random_unit_covectors(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal((n, tc.DIM))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def symbol_report(samples: int = 100, seed: int = 0) -> dict:
    """Per-ξ nullities, coercivity minima and residuals over random unit ξ."""
    rng = make_rng(seed)
    rows = []
    for xi in random_unit_covectors(samples, rng):
        L = assemble_symbol_L(xi)
        K = kernel_analysis(L)
        bm = bianchi_maps(xi)
        Lt = assemble_symbol_Ltilde(xi)
        rows.append({
            "xi": xi.tolist(),
            "nullity_L": K.nullity,
            "kernel_distance": K.distance_to_delta_star,
            "nullity_Btilde": nullity(bm.Btilde),
            "rank_delta_star": tc.DIM - nullity(symbol_delta_star(xi)),
            "joint_nullity": joint_kernel_nullity(xi),
            "coercivity": ellipticity_check(Lt),
            "reformulation": reformulation_residual(xi, random_state(rng)),
        })
    return {
        "samples": samples,
        "seed": seed,
        "min_coercivity": min(r["coercivity"] for r in rows),
        "nullities_L": sorted({r["nullity_L"] for r in rows}),
        "rows": rows,
    }


def coercivity_sweep(coeffs, samples: int = 50, seed: int = 0) -> list[dict]:
    """Experimental: minimum coercivity of the DeTurck-modified ``(a, b, c)`` symbol.

    Nothing is asserted about the result; the sufficient conditions on the
    coefficients are not known in closed form.
    """
    rng = make_rng(seed)
    xis = random_unit_covectors(samples, rng)
    out = []
    for a, b, c in coeffs:
        m = min(ellipticity_check(assemble_symbol_family(xi, a, b, c)) for xi in xis)
        out.append({"a": a, "b": b, "c": c, "min_coercivity": m})
    return out
