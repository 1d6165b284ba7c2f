"""Tensor fields on a flat torus that vary along one or two coordinates.

Values are arrays of shape ``(n,)*k + (8,)*rank``: ``k`` leading grid axes
(the active coordinates ``0..k-1`` of the eight) followed by tensor slots.
Derivatives along the six or seven inactive coordinates vanish identically,
but every contraction is still fully 8-dimensional.

Geometric quantities derived from a 4-form field live in ``Geometry``,
which caches them.  Tensors there are stored in coordinates with all
indices down; formulas written for orthonormal frames are evaluated on
frame components (``pull`` by ``F = g^{-1/2}``) and pulled back with
``E = g^{1/2}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from . import algebra as al
from . import tensor as tc
from .tensor import DIM, pull

SCHEMES = ("spectral", "fd4")


@dataclass(frozen=True)
class Grid:
    """Periodic grid with ``n`` points on ``[0, 2π)`` along each active coordinate."""

    active_dims: int = 1
    n: int = 64
    scheme: str = "spectral"

    def __post_init__(self):
        if self.active_dims not in (1, 2):
            raise ValueError("active_dims must be 1 or 2")
        if self.n < 4:
            raise ValueError("n must be at least 4")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")

    @property
    def spacing(self) -> float:
        return 2 * np.pi / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.active_dims

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.active_dims

    def coords(self) -> list[np.ndarray]:
        """Meshgrid of the active coordinates."""
        x = np.arange(self.n) * self.spacing
        return list(np.meshgrid(*([x] * self.active_dims), indexing="ij"))

    def with_scheme(self, scheme: str) -> "Grid":
        return Grid(self.active_dims, self.n, scheme)


@dataclass(frozen=True)
class GridField:
    """A sampled tensor field: ``values`` has shape ``grid.shape + (8,)*rank``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        k = self.grid.active_dims
        if v.shape[:k] != self.grid.shape or any(s != DIM for s in v.shape[k:]):
            raise ValueError(f"values of shape {v.shape} do not fit grid {self.grid}")
        if v.ndim - k > tc.MAX_RANK:
            raise ValueError("rank exceeds 5")
        object.__setattr__(self, "values", v)

    @property
    def rank(self) -> int:
        return self.values.ndim - self.grid.active_dims


# ---------------------------------------------------------------------------
# differentiation

def derivative(values: np.ndarray, direction: int, grid: Grid) -> np.ndarray:
    """Partial derivative along coordinate ``direction`` (0-based, 0..7)."""
    if not 0 <= direction < DIM:
        raise ValueError(f"direction must be in 0..{DIM - 1}")
    values = np.asarray(values, dtype=float)
    if direction >= grid.active_dims:
        return np.zeros_like(values)
    n, h = grid.n, grid.spacing
    if grid.scheme == "spectral":
        k = np.fft.rfftfreq(n, d=1.0 / n)
        mult = 1j * k
        if n % 2 == 0:
            mult[-1] = 0.0
        shape = [1] * values.ndim
        shape[direction] = len(k)
        spec = np.fft.rfft(values, axis=direction) * mult.reshape(shape)
        return np.fft.irfft(spec, n=n, axis=direction)
    r = lambda s: np.roll(values, -s, axis=direction)
    return (-r(2) + 8 * r(1) - 8 * r(-1) + r(-2)) / (12 * h)


def gradient(values: np.ndarray, grid: Grid) -> np.ndarray:
    """All 8 partials, with the new index placed first among the tensor slots."""
    values = np.asarray(values, dtype=float)
    k = grid.active_dims
    out = np.zeros(values.shape[:k] + (DIM,) + values.shape[k:])
    for m in range(k):
        out[(slice(None),) * k + (m,)] = derivative(values, m, grid)
    return out


def christoffels(g: np.ndarray, grid: Grid, ginv: np.ndarray | None = None) -> np.ndarray:
    """Levi-Civita symbols ``Γ[..., k, i, j] = Γ^k_{ij}``."""
    if ginv is None:
        ginv = np.linalg.inv(g)
    dg = gradient(g, grid)  # dg[..., m, i, j] = ∂_m g_ij
    low = 0.5 * (np.einsum("...ijl->...ijl", dg) + np.einsum("...jil->...ijl", dg)
                 - np.einsum("...lij->...ijl", dg))
    return np.einsum("...kl,...ijl->...kij", ginv, low)


def covariant_derivative(t: np.ndarray, Gam: np.ndarray, grid: Grid, rank: int) -> np.ndarray:
    """``∇_m t_{a...}`` with the new index first; ``t`` has ``rank`` tensor slots."""
    out = gradient(t, grid)
    lead = t.ndim - rank
    G = Gam.reshape(Gam.shape[:-3] + (DIM, DIM * DIM))  # G[..., p, (m a)] = Γ^p_{ma}
    for s in range(rank):
        c = tc.slot_matmul(t, G, s, rank)  # slot s now holds (m a) flattened
        c = c.reshape(c.shape[:lead + s] + (DIM, DIM) + c.shape[lead + s + 1:])
        out -= np.moveaxis(c, lead + s, lead)
    return out


def riemann(Gam: np.ndarray, g: np.ndarray, grid: Grid) -> np.ndarray:
    """``R_{ijkl} = ⟨R(e_i, e_j)e_k, e_l⟩`` with ``R(X,Y) = ∇_X∇_Y − ∇_Y∇_X − ∇_[X,Y]``."""
    dG = gradient(Gam, grid)  # dG[..., i, l, j, k] = ∂_i Γ^l_jk
    R = (np.einsum("...iljk->...ijkl", dG) - np.einsum("...jlik->...ijkl", dG)
         + np.einsum("...lip,...pjk->...ijkl", Gam, Gam)
         - np.einsum("...ljp,...pik->...ijkl", Gam, Gam))
    return np.einsum("...ijkm,...ml->...ijkl", R, g)


def ricci_from_christoffels(Gam: np.ndarray, grid: Grid) -> np.ndarray:
    """``Ric_{jk} = R_{ljkl}`` straight from Γ, without building the full Rm."""
    dG = gradient(Gam, grid)
    return (np.einsum("...iijk->...jk", dG) - np.einsum("...jiik->...jk", dG)
            + np.einsum("...iip,...pjk->...jk", Gam, Gam)
            - np.einsum("...ijp,...pik->...jk", Gam, Gam))


def lie_derivative_form(W: np.ndarray, t: np.ndarray, grid: Grid, rank: int) -> np.ndarray:
    """Coordinate Lie derivative of a covariant tensor along the vector ``W^p``."""
    dt_ = gradient(t, grid)
    dW = gradient(W, grid)  # dW[..., a, p] = ∂_a W^p
    slots = tc._LETTERS[:rank]
    out = np.einsum(f"...p,...p{slots}->...{slots}", W, dt_)
    for s in range(rank):
        tin = slots[:s] + "p" + slots[s + 1:]
        out += np.einsum(f"...{slots[s]}p,...{tin}->...{slots}", dW, t)
    return out


def exterior_derivative_4form(Phi: np.ndarray, grid: Grid) -> np.ndarray:
    """``(dΦ)_{mijkl} = ∂_mΦ_{ijkl} − ∂_iΦ_{mjkl} + ∂_jΦ_{mikl} − ∂_kΦ_{mijl} + ∂_lΦ_{mijk}``."""
    D = gradient(Phi, grid)
    return (D - np.einsum("...imjkl->...mijkl", D) + np.einsum("...jmikl->...mijkl", D)
            - np.einsum("...kmijl->...mijkl", D) + np.einsum("...lmijk->...mijkl", D))


# ---------------------------------------------------------------------------
# test fields

def _fourier_matrix_field(grid: Grid, modes: int, rng: np.random.Generator) -> np.ndarray:
    """Random general 8x8-valued trigonometric polynomial with ``modes`` wave numbers."""
    xs = grid.coords()
    S = np.zeros(grid.shape + (DIM, DIM))
    for m in range(1, modes + 1):
        for x in xs:
            a = rng.standard_normal((DIM, DIM)) / m ** 2
            b = rng.standard_normal((DIM, DIM)) / m ** 2
            S += np.cos(m * x)[..., None, None] * a + np.sin(m * x)[..., None, None] * b
        if grid.active_dims == 2:
            c = rng.standard_normal((DIM, DIM)) / m ** 2
            S += np.cos(m * (xs[0] + xs[1]))[..., None, None] * c
    return S


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator used for every random tensor."""
    return np.random.Generator(np.random.Philox(seed))


def flat_field(grid: Grid) -> GridField:
    Phi = al.standard_cayley_form()
    return GridField(grid, np.broadcast_to(Phi, grid.shape + Phi.shape).copy())


def transported_field(grid: Grid, M: np.ndarray) -> GridField:
    """Φ(x) = transport(Φ₀, M(x)) for a field of matrices (or one constant matrix)."""
    M = np.broadcast_to(M, grid.shape + (DIM, DIM))
    return GridField(grid, al.transport(al.standard_cayley_form(), M))


def perturbed_field(grid: Grid, eps: float = 1e-2, seed: int = 0, modes: int = 3) -> GridField:
    """Φ(x) = transport(Φ₀, exp(ε S(x))) with ``S`` a random trigonometric matrix field."""
    S = _fourier_matrix_field(grid, modes, make_rng(seed))
    return transported_field(grid, expm(eps * S))


def diffeomorphism_field(grid: Grid, amp: float = 0.3, seed: int = 0, modes: int = 2) -> GridField:
    """Pullback of Φ₀ by ψ(x) = x + f(x)w: torsion-free, with nonconstant components."""
    rng = make_rng(seed)
    xs = grid.coords()
    k = grid.active_dims
    f = np.zeros(grid.shape)
    df = np.zeros(grid.shape + (DIM,))
    for m in range(1, modes + 1):
        for d, x in enumerate(xs):
            a, b = rng.standard_normal(2) / m ** 2
            f += a * np.cos(m * x) + b * np.sin(m * x)
            df[..., d] += m * (-a * np.sin(m * x) + b * np.cos(m * x))
    w = rng.standard_normal(DIM)
    w[:k] = 0.0  # keeps det(Dψ) = 1
    w *= amp / np.linalg.norm(w)
    M = np.eye(DIM) + np.einsum("i,...j->...ij", w, df)
    return transported_field(grid, M)


def random_vector_field(grid: Grid, seed: int = 0, modes: int = 2, amp: float = 1.0) -> np.ndarray:
    rng = make_rng(seed)
    xs = grid.coords()
    W = np.zeros(grid.shape + (DIM,))
    for m in range(1, modes + 1):
        for x in xs:
            a, b = amp * rng.standard_normal((2, DIM)) / m ** 2
            W += np.cos(m * x)[..., None] * a + np.sin(m * x)[..., None] * b
    return W


# ---------------------------------------------------------------------------
# geometry of a 4-form field

def tstar(T: np.ndarray) -> np.ndarray:
    """``(T*T)_{ij} = 8T_{b;il}T_{j;lb} − 8T_{j;il}T_{b;lb} + 2T_{i;lb}T_{j;lb}`` (frame)."""
    return (8 * np.einsum("...bil,...jlb->...ij", T, T)
            - 8 * np.einsum("...jil,...blb->...ij", T, T)
            + 2 * np.einsum("...ilb,...jlb->...ij", T, T))


class Geometry:
    """Lazily computed geometry of a 4-form field.

    Attribute names ending in ``_F`` hold orthonormal-frame components;
    the rest are coordinate components with indices down.
    """

    def __init__(self, field: GridField, g: np.ndarray | None = None):
        if field.rank != 4:
            raise ValueError("Geometry needs a 4-form field")
        self.field = field
        self.grid = field.grid
        self.Phi = field.values
        if g is not None:
            self.__dict__["g"] = g

    # metric ---------------------------------------------------------------
    @cached_property
    def g(self) -> np.ndarray:
        return al.induced_metric(self.Phi)

    @cached_property
    def ginv(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.g))

    @cached_property
    def _frames(self):
        return tc.frame(self.g)

    @property
    def F(self) -> np.ndarray:
        return self._frames[0]

    @property
    def E(self) -> np.ndarray:
        return self._frames[1]

    def to_frame(self, t, rank):
        return pull(t, self.F, rank)

    def from_frame(self, t, rank):
        return pull(t, self.E, rank)

    @cached_property
    def Phi_F(self) -> np.ndarray:
        return self.to_frame(self.Phi, 4)

    @cached_property
    def volume(self) -> float:
        return float(np.sum(self.sqrt_det) * self.grid.cell_volume)

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(f * self.sqrt_det) * self.grid.cell_volume)

    # connection -------------------------------------------------------------
    @cached_property
    def Gamma(self) -> np.ndarray:
        return christoffels(self.g, self.grid, self.ginv)

    def nabla(self, t: np.ndarray, rank: int) -> np.ndarray:
        return covariant_derivative(t, self.Gamma, self.grid, rank)

    @cached_property
    def nabla_Phi(self) -> np.ndarray:
        return self.nabla(self.Phi, 4)

    @cached_property
    def nabla_Phi_F(self) -> np.ndarray:
        return self.to_frame(self.nabla_Phi, 5)

    # torsion ----------------------------------------------------------------
    @cached_property
    def T_F(self) -> np.ndarray:
        """``T_{m;ab} = (1/96)(∇_mΦ_{ajkl})Φ_{bjkl}`` in the frame."""
        b = self.grid.shape
        dP = self.nabla_Phi_F.reshape(b + (DIM * DIM, DIM ** 3))
        P = self.Phi_F.reshape(b + (DIM, DIM ** 3))
        return (dP @ np.swapaxes(P, -1, -2)).reshape(b + (DIM,) * 3) / 96.0

    @cached_property
    def T(self) -> np.ndarray:
        return self.from_frame(self.T_F, 3)

    @cached_property
    def T8_F(self) -> np.ndarray:
        return al.rho(self.T_F)

    @cached_property
    def T8(self) -> np.ndarray:
        return np.einsum("...j,...ja->...a", self.T8_F, self.E)

    @cached_property
    def T48_F(self) -> np.ndarray:
        return self.T_F + al.iota(self.T8_F, self.Phi_F) / 7.0

    @cached_property
    def torsion_norm_sq(self) -> np.ndarray:
        return np.sum(self.T_F ** 2, axis=(-3, -2, -1))

    @cached_property
    def nabla_T(self) -> np.ndarray:
        return self.nabla(self.T, 3)

    @cached_property
    def nabla_T_F(self) -> np.ndarray:
        return self.to_frame(self.nabla_T, 4)

    @cached_property
    def div_T_F(self) -> np.ndarray:
        """``(Div T)_{jk} = ∇_mT_{m;jk}``."""
        return np.einsum("...mmjk->...jk", self.nabla_T_F)

    @cached_property
    def div_T(self) -> np.ndarray:
        return self.from_frame(self.div_T_F, 2)

    @cached_property
    def nabla_T8_F(self) -> np.ndarray:
        return self.to_frame(self.nabla(self.T8, 1), 2)

    @cached_property
    def lie_T8_g_F(self) -> np.ndarray:
        d = self.nabla_T8_F
        return d + np.swapaxes(d, -1, -2)

    @cached_property
    def tstar_F(self) -> np.ndarray:
        return tstar(self.T_F)

    # curvature --------------------------------------------------------------
    @cached_property
    def Rm(self) -> np.ndarray:
        return riemann(self.Gamma, self.g, self.grid)

    @cached_property
    def Rm_F(self) -> np.ndarray:
        return self.to_frame(self.Rm, 4)

    @cached_property
    def Ric(self) -> np.ndarray:
        if "Rm" in self.__dict__:
            return np.einsum("...lijm,...lm->...ij", self.Rm, self.ginv)
        return ricci_from_christoffels(self.Gamma, self.grid)

    @cached_property
    def Ric_F(self) -> np.ndarray:
        return self.to_frame(self.Ric, 2)

    @cached_property
    def scalar(self) -> np.ndarray:
        return np.einsum("...ij,...ij->...", self.Ric, self.ginv)

    @cached_property
    def dPhi(self) -> np.ndarray:
        return exterior_derivative_4form(self.Phi, self.grid)

    def vector_up(self, W: np.ndarray) -> np.ndarray:
        return np.einsum("...ab,...b->...a", self.ginv, W)


# ---------------------------------------------------------------------------
# identities that need derivatives

def ricci_via_torsion_F(geo: Geometry) -> np.ndarray:
    """``R_ij = 4∇_iT_{a;ja} − 4∇_aT_{i;ja} − 8T_{i;jb}T_{a;ba} + 8T_{a;jb}T_{i;ba}`` (frame)."""
    T, dT = geo.T_F, geo.nabla_T_F
    return (4 * np.einsum("...iaja->...ij", dT) - 4 * np.einsum("...aija->...ij", dT)
            - 8 * np.einsum("...ijb,...aba->...ij", T, T)
            + 8 * np.einsum("...ajb,...iba->...ij", T, T))


def ricci_via_torsion(geo: Geometry) -> np.ndarray:
    return geo.from_frame(ricci_via_torsion_F(geo), 2)


def scalar_via_torsion(geo: Geometry) -> np.ndarray:
    """``R = 8 Div T₈ + 8|T₈|² + 8T_{a;jb}T_{j;ba}``."""
    T = geo.T_F
    div8 = np.einsum("...ii->...", geo.nabla_T8_F)
    return (8 * div8 + 8 * np.sum(geo.T8_F ** 2, axis=-1)
            + 8 * np.einsum("...ajb,...jba->...", T, T))


def bianchi_lhs_rhs_F(geo: Geometry) -> tuple[np.ndarray, np.ndarray]:
    T, dT, R, P = geo.T_F, geo.nabla_T_F, geo.Rm_F, geo.Phi_F
    lhs = dT - np.swapaxes(dT, -4, -3)
    rhs = (2 * np.einsum("...iam,...jmb->...ijab", T, T)
           - 2 * np.einsum("...jam,...imb->...ijab", T, T)
           + 0.25 * np.einsum("...jiab->...ijab", R)
           - 0.125 * np.einsum("...jimn,...mnab->...ijab", R, P))
    return lhs, rhs


def bianchi_residual(geo: Geometry, curvature_from: Geometry | None = None) -> dict:
    """Max residuals of the Spin(7)-Bianchi identity and of ``R_{ijkl}Φ_{ajkl} = 0``.

    ``curvature_from`` lets the curvature come from a different field (a
    negative control).
    """
    cur = geo if curvature_from is None else curvature_from
    T, dT, R, P = geo.T_F, geo.nabla_T_F, cur.Rm_F, geo.Phi_F
    lhs = dT - np.swapaxes(dT, -4, -3)
    rhs = (2 * np.einsum("...iam,...jmb->...ijab", T, T)
           - 2 * np.einsum("...jam,...imb->...ijab", T, T)
           + 0.25 * np.einsum("...jiab->...ijab", R)
           - 0.125 * np.einsum("...jimn,...mnab->...ijab", R, P))
    rphi = np.einsum("...ijkl,...ajkl->...ia", R, P)
    return {"bianchi": float(np.abs(lhs - rhs).max()), "r_phi": float(np.abs(rphi).max()),
            "scale": float(max(np.abs(R).max(), np.abs(dT).max()))}


def torsion_checks(geo: Geometry) -> dict:
    """Reconstruction, Λ²₇ membership and Ω⁴₇ membership of ∇Φ."""
    P, dP, T = geo.Phi_F, geo.nabla_Phi_F, geo.T_F
    recon = np.stack([al.diamond(T[..., m, :, :], P) for m in range(DIM)], axis=-5)
    scale = max(float(np.sqrt(np.max(np.sum(dP ** 2, axis=(-5, -4, -3, -2, -1))))), 1e-300)
    lam = lambda x: np.abs(al.lambda7_residual(x, P[..., None, :, :, :, :])).max()
    pieces = [al.decompose_4form(dP[..., m, :, :, :, :], P) for m in range(DIM)]
    other = max(float(np.abs(p[0]).max() + np.abs(p[2]).max() + np.abs(p[3]).max()) for p in pieces)
    tscale = max(float(np.abs(T).max()), 1e-300)
    return {
        "reconstruction": float(np.sqrt(np.max(np.sum((dP - recon) ** 2, axis=(-5, -4, -3, -2, -1))))) / scale,
        "torsion_lambda7": float(lam(T)) / tscale,
        "torsion_antisym": float(np.abs(T + np.swapaxes(T, -1, -2)).max()) / tscale,
        "divT_lambda7": float(np.abs(al.lambda7_residual(geo.div_T_F, P)).max())
        / max(float(np.abs(geo.div_T_F).max()), 1e-300),
        "nabla_phi_outside_7": other / scale,
        "nabla_phi_contraction": float(np.abs(np.einsum("...mijkl,...ijkl->...m", dP, P)).max()) / scale,
    }


def torsion_split_F(T: np.ndarray, Phi_F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(T₈, T₄₈)`` with ``T = −ι(T₈)/7 + T₄₈`` and ``ρ(T₄₈) = 0``."""
    T8 = al.rho(T)
    return T8, T + al.iota(T8, Phi_F) / 7.0


def lie_derivative_structure(W: np.ndarray, geo: Geometry) -> np.ndarray:
    """Direct coordinate Lie derivative ``L_WΦ`` of the 4-form (W as a covector)."""
    return lie_derivative_form(geo.vector_up(W), geo.Phi, geo.grid, 4)


def lie_derivative_metric(W: np.ndarray, geo: Geometry) -> np.ndarray:
    """``(L_Wg)_{ij} = ∇_iW_j + ∇_jW_i``."""
    d = geo.nabla(W, 1)
    return d + np.swapaxes(d, -1, -2)


def lie_diamond_form_F(W: np.ndarray, geo: Geometry) -> np.ndarray:
    """Frame 2-tensor ``½L_Wg + T(W) + (∇W)₇`` whose diamond with Φ is ``L_WΦ``."""
    WF = np.einsum("...j,...ja->...a", W, geo.F)
    dW = geo.to_frame(geo.nabla(W, 1), 2)
    TW = np.einsum("...m,...mab->...ab", WF, geo.T_F)
    return 0.5 * (dW + np.swapaxes(dW, -1, -2)) + TW + al.pi7(dW, geo.Phi_F)
