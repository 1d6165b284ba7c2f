"""The negative gradient flow of the torsion energy and related diagnostics.

A variation of a Spin(7)-structure is ``∂Φ = A⋄Φ`` with ``A = h + X``,
``h`` symmetric and ``X ∈ Λ²₇``.  Right-hand sides are returned as the
2-tensor ``A`` in coordinates; ``rhs_form`` turns it into the 4-form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import expm

from . import algebra as al
from . import tensor as tc
from .fields import Geometry, GridField, christoffels, make_rng

DEFAULT_CFL = 0.1


class DriftError(RuntimeError):
    """The evolved 4-form left the admissible orbit beyond the allowed drift."""


@dataclass(frozen=True)
class FlowConfig:
    """Coefficients of ``(−a·Ric + b·L_{T₈}g + c·Div T + l.o.t.)⋄Φ`` and stepping options.

    ``skew_tstar`` adds the Λ²₇ projection of the skew part of ``T*T`` to
    the right-hand side; by default only its symmetric part enters, which
    is what makes the flow an exact gradient flow.
    """

    coeff_a: float = 1.0
    coeff_b: float = 2.0
    coeff_c: float = 2.0
    dt: float | None = None
    steps: int = 0
    deturck: bool = False
    include_lot: bool = True
    drift_threshold: float = 1e-5
    skew_tstar: bool = False
    cfl: float = DEFAULT_CFL

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if not self.drift_threshold > 0:
            raise ValueError("drift_threshold must be positive")


# ---------------------------------------------------------------------------
# energy

@dataclass
class EnergyReport:
    E: float
    torsion_norm_sq_field: np.ndarray
    volume: float


def energy(field: GridField, geo: Geometry | None = None) -> EnergyReport:
    """``E = ½∫|T|² vol`` by the rectangle rule (spectrally accurate on the torus)."""
    geo = geo or Geometry(field)
    t2 = geo.torsion_norm_sq
    return EnergyReport(0.5 * geo.integrate(t2), t2, geo.volume)


# ---------------------------------------------------------------------------
# right-hand sides

def _frame_rhs(geo: Geometry, cfg: FlowConfig) -> np.ndarray:
    a, b, c = cfg.coeff_a, cfg.coeff_b, cfg.coeff_c
    A = -a * geo.Ric_F + b * geo.lie_T8_g_F + c * geo.div_T_F
    if cfg.include_lot:
        TT = geo.tstar_F
        A = A + tc.sym2(TT) - geo.torsion_norm_sq[..., None, None] * np.eye(tc.DIM)
        if cfg.skew_tstar:
            A = A + al.pi7(TT, geo.Phi_F)
    return A


def gradient_rhs(field: GridField, cfg: FlowConfig = FlowConfig(), geo: Geometry | None = None) -> np.ndarray:
    """Coordinate 2-tensor ``A`` with ``∂ₜΦ = A⋄Φ`` for the (a, b, c) family."""
    geo = geo or Geometry(field)
    return geo.from_frame(_frame_rhs(geo, cfg), 2)


def deturck_vector(geo: Geometry, background: Geometry, cfg: FlowConfig = FlowConfig()) -> np.ndarray:
    """``W = a·W̃ − 2b·T₈`` as a covector, with ``W̃^k = g^{ij}(Γ^k_{ij} − Γ̃^k_{ij})``.

    For the gradient flow ``(a, b) = (1, 2)`` this is ``W̃ − 4T₈``.
    """
    Gt = christoffels(background.g, background.grid, background.ginv)
    Wt = np.einsum("...ij,...kij->...k", geo.ginv, geo.Gamma - Gt)
    Wt = np.einsum("...kl,...l->...k", geo.g, Wt)
    return cfg.coeff_a * Wt - 2 * cfg.coeff_b * geo.T8


def _frame_deturck_correction(geo: Geometry, W: np.ndarray, include_lot: bool) -> np.ndarray:
    dW = geo.to_frame(geo.nabla(W, 1), 2)
    corr = tc.sym2(dW) + al.pi7(dW, geo.Phi_F)
    if include_lot:
        WF = np.einsum("...j,...ja->...a", W, geo.F)
        corr = corr + np.einsum("...m,...mab->...ab", WF, geo.T_F)
    return corr


def deturck_rhs(field: GridField, background: GridField, cfg: FlowConfig = FlowConfig(),
                geo: Geometry | None = None, background_geo: Geometry | None = None) -> np.ndarray:
    """Right-hand side of the DeTurck-modified flow ``L(Φ) + L_WΦ``.

    ``L_WΦ = (½L_Wg + T(W) + (∇W)₇)⋄Φ``; the ``T(W)`` term is lower order
    and follows ``include_lot``.
    """
    geo = geo or Geometry(field)
    bg = background_geo or Geometry(background)
    W = deturck_vector(geo, bg, cfg)
    A = _frame_rhs(geo, cfg) + _frame_deturck_correction(geo, W, cfg.include_lot)
    return geo.from_frame(A, 2)


def rhs_form(A: np.ndarray, geo: Geometry) -> np.ndarray:
    """The 4-form ``A⋄Φ`` for a coordinate 2-tensor ``A``."""
    return geo.from_frame(al.diamond(geo.to_frame(A, 2), geo.Phi_F), 4)


def metric_velocity(A: np.ndarray) -> np.ndarray:
    """``∂ₜg = 2h`` for ``∂ₜΦ = (h + X)⋄Φ``."""
    return 2.0 * tc.sym2(A)


def metric_velocity_gf(geo: Geometry) -> np.ndarray:
    """The closed-form ``∂ₜg`` along the gradient flow, from Ric, L_{T₈}g and T."""
    T = geo.T_F
    out = (-2 * geo.Ric_F + 4 * geo.lie_T8_g_F
           + 8 * np.einsum("...bil,...jlb->...ij", T, T) + 8 * np.einsum("...bjl,...ilb->...ij", T, T)
           - 8 * np.einsum("...jil,...blb->...ij", T, T) - 8 * np.einsum("...ijl,...blb->...ij", T, T)
           + 4 * np.einsum("...ilb,...jlb->...ij", T, T)
           - 2 * geo.torsion_norm_sq[..., None, None] * np.eye(tc.DIM))
    return geo.from_frame(out, 2)


# ---------------------------------------------------------------------------
# stepping

def stable_dt(geo: Geometry, cfl: float = DEFAULT_CFL) -> float:
    """``C·h²/max(1, max|Ric| + max|T|²)``."""
    h = geo.grid.spacing
    ric = float(np.abs(geo.Ric_F).max())
    t2 = float(np.sqrt(geo.torsion_norm_sq).max()) ** 2
    return cfl * h * h / max(1.0, ric + t2)


def _rhs_field(field: GridField, cfg: FlowConfig, background: Geometry | None, geo: Geometry | None = None):
    geo = geo or Geometry(field)
    if cfg.deturck:
        A = deturck_rhs(field, background.field, cfg, geo, background)
    else:
        A = gradient_rhs(field, cfg, geo)
    return rhs_form(A, geo)


def drift(field: GridField, geo: Geometry | None = None) -> float:
    """Largest contraction-identity residual over the grid (orthonormal frame)."""
    geo = geo or Geometry(field)
    try:
        return al.admissibility_residual(field.values, geo.g)
    except al.AdmissibilityError:
        return math.inf


def step(field: GridField, cfg: FlowConfig, dt: float | None = None,
         background: Geometry | None = None, geo: Geometry | None = None) -> GridField:
    """One classical RK4 step of ``∂ₜΦ = A(Φ)⋄Φ``; the metric is recomputed from Φ at each stage."""
    dt = cfg.dt if dt is None else dt
    if dt is None:
        raise ValueError("step needs a time step")
    if cfg.deturck and background is None:
        background = Geometry(field)
    P0 = field.values
    grid = field.grid
    k1 = _rhs_field(field, cfg, background, geo)
    k2 = _rhs_field(GridField(grid, P0 + 0.5 * dt * k1), cfg, background)
    k3 = _rhs_field(GridField(grid, P0 + 0.5 * dt * k2), cfg, background)
    k4 = _rhs_field(GridField(grid, P0 + dt * k3), cfg, background)
    return GridField(grid, P0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


@dataclass
class StepRecord:
    t: float
    E: float
    max_T: float
    max_Ric: float
    drift: float
    volume: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _record(t: float, geo: Geometry) -> StepRecord:
    return StepRecord(
        t=t,
        E=0.5 * geo.integrate(geo.torsion_norm_sq),
        max_T=float(np.sqrt(geo.torsion_norm_sq).max()),
        max_Ric=float(np.sqrt(np.sum(geo.Ric_F ** 2, axis=(-2, -1))).max()),
        drift=drift(geo.field, geo),
        volume=geo.volume,
    )


def run_flow(field: GridField, cfg: FlowConfig, background: GridField | None = None,
             callback: Callable[[StepRecord], None] | None = None) -> tuple[GridField, list[StepRecord]]:
    """Evolve for ``cfg.steps`` RK4 steps, recording one ``StepRecord`` per state.

    The time step is ``cfg.dt`` or, if unset, the stability heuristic at the
    initial state.  Raises ``DriftError`` once the admissibility residual
    exceeds ``cfg.drift_threshold``.
    """
    geo = Geometry(field)
    bg = None
    if cfg.deturck:
        bg = Geometry(background) if background is not None else Geometry(field)
    dt = cfg.dt if cfg.dt is not None else stable_dt(geo, cfg.cfl)
    records = [_record(0.0, geo)]
    if callback:
        callback(records[-1])
    for n in range(1, cfg.steps + 1):
        field = step(field, cfg, dt, bg, geo)
        geo = Geometry(field)
        rec = _record(n * dt, geo)
        records.append(rec)
        if callback:
            callback(rec)
        if not rec.drift < cfg.drift_threshold:
            raise DriftError(f"admissibility drift {rec.drift:.3e} exceeds {cfg.drift_threshold:.1e} "
                             f"at step {n}")
    return field, records


def records_to_jsonl(records: list[StepRecord]) -> str:
    return "".join(json.dumps(r.as_dict()) + "\n" for r in records)


def metric_two_route(field: GridField, cfg: FlowConfig, dts=(2e-3, 1e-3, 5e-4)) -> dict:
    """Compare ``g(Φ(t+dt))`` with ``g(t) + dt·∂ₜg`` from the closed-form display.

    Returns the max errors per ``dt`` and the observed orders between
    consecutive halvings (expected 2).
    """
    geo = Geometry(field)
    gdot = metric_velocity_gf(geo)
    errs = []
    for dt in dts:
        nxt = step(field, cfg, dt, geo=geo)
        g1 = al.induced_metric(nxt.values)
        errs.append(float(np.abs(g1 - geo.g - dt * gdot).max()))
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(dts[i] / dts[i + 1]) for i in range(len(dts) - 1)]
    return {"dts": list(dts), "errors": errs, "orders": orders}


# ---------------------------------------------------------------------------
# first variation

def variation_formula(geo: Geometry, A: np.ndarray) -> float:
    """``∫h·(½Ric − L_{T₈}g − 4T_{b;al}T_{m;lb} + 4T_{m;al}T_{b;lb} − T_{a;lb}T_{m;lb} + ½|T|²g) − ∫X·Div T``."""
    T = geo.T_F
    G = (0.5 * geo.Ric_F - geo.lie_T8_g_F
         - 4 * np.einsum("...bal,...mlb->...am", T, T)
         + 4 * np.einsum("...mal,...blb->...am", T, T)
         - np.einsum("...alb,...mlb->...am", T, T)
         + 0.5 * geo.torsion_norm_sq[..., None, None] * np.eye(tc.DIM))
    AF = geo.to_frame(A, 2)
    dens = np.sum(tc.sym2(AF) * G, axis=(-2, -1)) - np.sum(tc.skew2(AF) * geo.div_T_F, axis=(-2, -1))
    return geo.integrate(dens)


def transport_along(field: GridField, A: np.ndarray, s: float, geo: Geometry | None = None) -> GridField:
    """``transport(Φ, exp(s g⁻¹Aᵀ))``: an admissible curve with velocity ``A⋄Φ`` at ``s = 0``."""
    geo = geo or Geometry(field)
    N = np.einsum("...pq,...iq->...pi", geo.ginv, A)
    return GridField(field.grid, al.transport(field.values, expm(s * N)))


def random_direction(field: GridField, seed: int = 0, modes: int = 2, geo: Geometry | None = None) -> np.ndarray:
    """Random smooth ``A = h + X`` with ``X`` in Λ²₇ of the field at every node."""
    geo = geo or Geometry(field)
    grid = field.grid
    rng = make_rng(seed)
    xs = grid.coords()
    R = np.zeros(grid.shape + (tc.DIM, tc.DIM))
    for m in range(1, modes + 1):
        for x in xs:
            a, b = rng.standard_normal((2, tc.DIM, tc.DIM)) / m ** 2
            R += np.cos(m * x)[..., None, None] * a + np.sin(m * x)[..., None, None] * b
    AF = tc.sym2(R) + al.pi7(R, geo.Phi_F)
    return geo.from_frame(AF, 2)


def variation_check(field: GridField, direction: np.ndarray, s: float = 1e-5) -> tuple[float, float, float]:
    """Central difference (Richardson-extrapolated) of E against the first-variation integral."""
    geo = Geometry(field)

    def fd(step_s):
        ep = energy(transport_along(field, direction, step_s, geo)).E
        em = energy(transport_along(field, direction, -step_s, geo)).E
        return (ep - em) / (2 * step_s)

    fd_value = (4 * fd(s / 2) - fd(s)) / 3
    formula = variation_formula(geo, direction)
    denom = max(abs(formula), abs(fd_value))
    rel = abs(fd_value - formula) / denom if denom > 0 else 0.0
    return fd_value, formula, rel


# ---------------------------------------------------------------------------
# scaling

def rescale(field: GridField, c: float) -> GridField:
    if not c > 0:
        raise ValueError("scale factor must be positive")
    return GridField(field.grid, c ** 4 * field.values)


def scaling_report(field: GridField, c: float) -> dict:
    """Relative errors of ``g̃ = c²g``, ``T̃ = c²T``, ``E(c⁴Φ) = c⁶E`` and ``|∇̃ʲT̃| = c^{−(1+j)}|∇ʲT|``."""
    g0, g1 = Geometry(field), Geometry(rescale(field, c))

    def rel(x, y):
        return float(np.abs(x - y).max() / max(np.abs(y).max(), 1e-300))

    E0, E1 = energy(field, g0).E, energy(rescale(field, c), g1).E
    nT0 = np.sqrt(g0.torsion_norm_sq)
    nT1 = np.sqrt(g1.torsion_norm_sq)
    ndT0 = np.sqrt(np.sum(g0.nabla_T_F ** 2, axis=(-4, -3, -2, -1)))
    ndT1 = np.sqrt(np.sum(g1.nabla_T_F ** 2, axis=(-4, -3, -2, -1)))
    return {
        "metric": rel(g1.g, c ** 2 * g0.g),
        "torsion": rel(g1.T, c ** 2 * g0.T),
        "energy": abs(E1 - c ** 6 * E0) / max(abs(c ** 6 * E0), 1e-300),
        "torsion_norm": rel(nT1, nT0 / c),
        "nabla_torsion_norm": rel(ndT1, ndT0 / c ** 2),
    }


# ---------------------------------------------------------------------------
# solitons

@dataclass
class SolitonData:
    field: GridField
    Y: np.ndarray
    lam: float

    @classmethod
    def trivial(cls, field: GridField, lam: float = 0.0) -> "SolitonData":
        return cls(field, np.zeros(field.grid.shape + (tc.DIM,)), lam)


def soliton_residual(s: SolitonData, cfg: FlowConfig = FlowConfig()) -> dict:
    """Residuals of ``GF(Φ) = λΦ + L_YΦ`` and of its symmetric, Λ²₇ and trace consequences.

    ``full`` is the 4-form residual, ``metric`` and ``divT`` its S² and Λ²₇
    parts as 2-tensors, ``trace`` the integrated identity
    ``λ·Vol + 3∫|T|²`` (zero for a soliton), and ``trace_pointwise`` the
    max of ``|−4 Div T₈ − 6|T|² − 2λ − Div Y|``.  ``consistency`` is the
    difference between the full residual and the diamond of the two parts.
    """
    geo = Geometry(s.field)
    P = geo.Phi_F
    A = _frame_rhs(geo, cfg)
    Y = s.Y
    YF = np.einsum("...j,...ja->...a", Y, geo.F)
    dY = geo.to_frame(geo.nabla(Y, 1), 2)
    lie_part = tc.sym2(dY) + np.einsum("...m,...mab->...ab", YF, geo.T_F) + al.pi7(dY, P)
    I = np.eye(tc.DIM)
    R = A - s.lam / 4.0 * I - lie_part  # residual 2-tensor; the 4-form residual is R⋄Φ
    full = al.diamond(R, P)
    sym_res = tc.sym2(R)
    skew_res = al.pi7(R, P)
    cons = np.abs(full - al.diamond(sym_res + skew_res, P)).max()
    divY = np.einsum("...ii->...", dY)
    div8 = np.einsum("...ii->...", geo.nabla_T8_F)
    t2 = geo.torsion_norm_sq
    pointwise = -4 * div8 - 6 * t2 - 2 * s.lam - divY
    vol = geo.volume
    trace = s.lam * vol + 3 * geo.integrate(t2)
    return {
        "full": float(np.abs(full).max()),
        "metric": float(np.abs(sym_res).max()),
        "divT": float(0.5 * np.abs(skew_res).max()),
        "trace": float(trace),
        "trace_pointwise": float(np.abs(pointwise).max()),
        "consistency": float(cons),
        "volume": vol,
        "expander_obstructed": bool(s.lam > 0 and trace != 0.0),
    }
