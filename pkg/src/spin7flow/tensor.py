"""Dense tensor algebra over an 8-dimensional real vector space.

Tensors are plain ``numpy`` arrays.  A tensor of rank ``r`` has ``r`` trailing
axes of length 8; any leading axes are treated as batch axes (grid nodes),
so most functions here act node-wise on whole fields.  All slots are
covariant; raising happens only through an explicit inverse metric.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

DIM = 8
MAX_RANK = 5

_LETTERS = "abcdefghijklmnopqrstuvw"


class TensorError(ValueError):
    """Raised for shape, rank or symmetry violations."""


def as_tensor(t, rank: int | None = None) -> np.ndarray:
    """Validate a single (unbatched) tensor and return it as a float array."""
    arr = np.asarray(t, dtype=float)
    if arr.ndim > MAX_RANK:
        raise TensorError(f"rank {arr.ndim} exceeds the maximum rank {MAX_RANK}")
    if any(s != DIM for s in arr.shape):
        raise TensorError(f"every axis must have length {DIM}, got shape {arr.shape}")
    if rank is not None and arr.ndim != rank:
        raise TensorError(f"expected rank {rank}, got {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise TensorError("tensor has non-finite components")
    return arr


def check_metric(g, atol: float = 1e-12) -> np.ndarray:
    """Validate a (possibly batched) metric: symmetric and positive definite."""
    g = np.asarray(g, dtype=float)
    if g.shape[-2:] != (DIM, DIM):
        raise TensorError(f"metric must end in ({DIM}, {DIM}), got {g.shape}")
    if np.max(np.abs(g - np.swapaxes(g, -1, -2)), initial=0.0) > atol * max(1.0, np.abs(g).max()):
        raise TensorError("metric is not symmetric")
    if np.min(np.linalg.eigvalsh(g)) <= 0:
        raise TensorError("metric is not positive definite")
    return g


def identity() -> np.ndarray:
    return np.eye(DIM)


def basis_vector(i: int) -> np.ndarray:
    e = np.zeros(DIM)
    e[i] = 1.0
    return e


def perm_sign(p) -> int:
    p = list(p)
    sign = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


# ---------------------------------------------------------------------------
# index helpers

def _slots(rank: int, offset: int = 0) -> str:
    return _LETTERS[offset:offset + rank]


def slot_matmul(t: np.ndarray, P: np.ndarray, slot: int, rank: int) -> np.ndarray:
    """Contract one tensor slot with the first index of ``P``.

    ``out[..., a, ...] = t[..., y, ...] P[..., y, a]`` where the slot sits at
    position ``slot`` of the trailing ``rank`` axes.  ``P`` may be
    ``(8, m)`` or batched like ``t``; the result slot then has length ``m``.
    """
    lead = t.ndim - rank
    ax = lead + slot
    moved = np.moveaxis(t, ax, -1)
    rest = moved.shape[lead:-1]
    flat = moved.reshape(moved.shape[:lead] + (-1, moved.shape[-1]))
    out = np.matmul(flat, P)
    batch = out.shape[:-2]
    out = out.reshape(batch + rest + (P.shape[-1],))
    return np.moveaxis(out, -1, len(batch) + slot)


def pull(t: np.ndarray, P: np.ndarray, rank: int) -> np.ndarray:
    """Contract every one of the trailing ``rank`` slots with ``P``.

    ``out[..., a, b, ...] = t[..., i, j, ...] P[..., i, a] P[..., j, b] ...``.
    With ``P = M`` this is the pullback of a covariant tensor by the linear
    map ``M``; with an orthonormal frame ``F`` (columns) it gives frame
    components.  ``P`` may carry the same batch axes as ``t``.
    """
    t = np.asarray(t, dtype=float)
    for s in range(rank):
        t = slot_matmul(t, P, s, rank)
    return t


def inverse_metric(g: np.ndarray) -> np.ndarray:
    return np.linalg.inv(g)


def frame(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(F, E)`` with ``F = g^{-1/2}`` and ``E = g^{1/2}``.

    Columns of ``F`` are a positively oriented g-orthonormal frame and
    ``E^T E = g``; ``pull(t, F)`` gives frame components and ``pull(t_F, E)``
    maps them back.
    """
    w, V = np.linalg.eigh(g)
    sq = np.sqrt(w)
    F = np.einsum("...ik,...k,...jk->...ij", V, 1.0 / sq, V)
    E = np.einsum("...ik,...k,...jk->...ij", V, sq, V)
    return F, E


# ---------------------------------------------------------------------------
# contraction and (anti)symmetrization

def contract(t1, t2, pairs, g=None) -> np.ndarray:
    """Metric contraction of ``t1`` and ``t2`` over the given slot pairs.

    ``pairs`` is a list of ``(slot_in_t1, slot_in_t2)``.  Free slots of ``t1``
    come first in the result, followed by free slots of ``t2``.
    """
    t1 = as_tensor(t1)
    t2 = as_tensor(t2)
    r1, r2 = t1.ndim, t2.ndim
    for a, b in pairs:
        if not (0 <= a < r1 and 0 <= b < r2):
            raise TensorError(f"slot pair {(a, b)} out of range for ranks {(r1, r2)}")
    if len({a for a, _ in pairs}) != len(pairs) or len({b for _, b in pairs}) != len(pairs):
        raise TensorError("a slot may be contracted only once")
    out_rank = r1 + r2 - 2 * len(pairs)
    if out_rank > MAX_RANK:
        raise TensorError(f"result rank {out_rank} exceeds {MAX_RANK}")
    ginv = np.eye(DIM) if g is None else inverse_metric(check_metric(g))
    s1 = list(_slots(r1))
    s2 = list(_slots(r2, r1))
    operands = [t1, t2]
    subs = []
    for a, b in pairs:
        u, v = s1[a], s2[b]
        if g is None:
            s2[b] = u
        else:
            subs.append(u + v)
            operands.append(ginv)
    free = [c for i, c in enumerate(s1) if i not in {a for a, _ in pairs}]
    free += [c for i, c in enumerate(s2) if i not in {b for _, b in pairs}]
    spec = ",".join(["".join(s1), "".join(s2)] + subs) + "->" + "".join(free)
    return np.einsum(spec, *operands)


def _perm_stack(t: np.ndarray, rank: int, signed: bool) -> np.ndarray:
    lead = t.ndim - rank
    out = np.zeros_like(t)
    for p in itertools.permutations(range(rank)):
        axes = tuple(range(lead)) + tuple(lead + q for q in p)
        term = np.transpose(t, axes)
        out += perm_sign(p) * term if signed else term
    return out / math.factorial(rank)


def antisymmetrize(t, rank: int | None = None) -> np.ndarray:
    """Full antisymmetrization with ``1/rank!`` normalization."""
    t = np.asarray(t, dtype=float)
    rank = t.ndim if rank is None else rank
    if rank < 2:
        raise TensorError("antisymmetrize needs rank >= 2")
    return _perm_stack(t, rank, signed=True)


def symmetrize(t, rank: int | None = None) -> np.ndarray:
    """Full symmetrization with ``1/rank!`` normalization."""
    t = np.asarray(t, dtype=float)
    rank = t.ndim if rank is None else rank
    if rank < 2:
        raise TensorError("symmetrize needs rank >= 2")
    return _perm_stack(t, rank, signed=False)


def is_antisymmetric(t: np.ndarray, rank: int, atol: float = 1e-12) -> bool:
    lead = t.ndim - rank
    scale = max(1.0, float(np.abs(t).max(initial=0.0)))
    for i in range(rank - 1):
        axes = list(range(t.ndim))
        axes[lead + i], axes[lead + i + 1] = axes[lead + i + 1], axes[lead + i]
        if np.abs(t + np.transpose(t, axes)).max(initial=0.0) > atol * scale:
            return False
    return True


def sym2(t: np.ndarray) -> np.ndarray:
    return 0.5 * (t + np.swapaxes(t, -1, -2))


def skew2(t: np.ndarray) -> np.ndarray:
    return 0.5 * (t - np.swapaxes(t, -1, -2))


# ---------------------------------------------------------------------------
# norms

def inner(t1, t2, g=None, rank: int | None = None) -> np.ndarray:
    """Full-sum inner product ``t1_{i..} t2_{j..} g^{ij}...`` (batched)."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if t1.shape != t2.shape:
        raise TensorError(f"rank/shape mismatch: {t1.shape} vs {t2.shape}")
    rank = t1.ndim if rank is None else rank
    if g is not None:
        F, _ = frame(np.asarray(g, dtype=float))
        t1 = pull(t1, F, rank)
        t2 = pull(t2, F, rank)
    axes = tuple(range(t1.ndim - rank, t1.ndim))
    return np.sum(t1 * t2, axis=axes)


def norm_sq(t, g=None, rank: int | None = None) -> np.ndarray:
    return inner(t, t, g, rank)


# ---------------------------------------------------------------------------
# exterior algebra

@lru_cache(maxsize=None)
def form_index(k: int) -> tuple[tuple[tuple[int, ...], ...], np.ndarray, np.ndarray]:
    """Sorted k-subsets of {0..7} and the full-index -> (subset, sign) map.

    Returns ``(combos, which, sign)`` where ``which`` and ``sign`` have shape
    ``(8,)*k``; a full antisymmetric tensor equals ``sign * c[which]`` for its
    compressed components ``c``.
    """
    combos = tuple(itertools.combinations(range(DIM), k))
    lookup = {c: n for n, c in enumerate(combos)}
    which = np.zeros((DIM,) * k, dtype=np.intp)
    sign = np.zeros((DIM,) * k)
    for idx in itertools.product(range(DIM), repeat=k):
        if len(set(idx)) < k:
            continue
        order = sorted(range(k), key=lambda q: idx[q])
        which[idx] = lookup[tuple(sorted(idx))]
        sign[idx] = perm_sign(order)
    return combos, which, sign


def compress_form(form: np.ndarray, k: int) -> np.ndarray:
    """Components on sorted index sets, shape ``batch + (C(8,k),)``."""
    combos, _, _ = form_index(k)
    cols = tuple(np.array(c) for c in zip(*combos))
    return form[(Ellipsis,) + cols]


def expand_form(values: np.ndarray, k: int) -> np.ndarray:
    _, which, sign = form_index(k)
    return sign * values[..., which]


@lru_cache(maxsize=None)
def _star_table(k: int) -> tuple[np.ndarray, np.ndarray]:
    combos, _, _ = form_index(k)
    comp, _, _ = form_index(DIM - k)
    lookup = {c: n for n, c in enumerate(comp)}
    src = np.zeros(len(comp), dtype=np.intp)
    sgn = np.zeros(len(comp))
    for n, I in enumerate(combos):
        J = tuple(x for x in range(DIM) if x not in I)
        src[lookup[J]] = n
        sgn[lookup[J]] = perm_sign(I + J)
    return src, sgn


def hodge_star(form, g=None, k: int | None = None) -> np.ndarray:
    """Hodge star of a k-form (3 <= k <= 5) for the metric ``g``.

    Orientation is the standard one, ``e^0 ^ ... ^ e^7 > 0``.
    """
    form = np.asarray(form, dtype=float)
    k = form.ndim if k is None else k
    if not 3 <= k <= 5:
        raise TensorError("hodge_star supports 3 <= k <= 5 so the result has rank <= 5")
    if not is_antisymmetric(form, k, atol=1e-10):
        raise TensorError("hodge_star needs an antisymmetric input")
    if g is not None:
        F, E = frame(np.asarray(g, dtype=float))
        form = pull(form, F, k)
    src, sgn = _star_table(k)
    out = expand_form(sgn * compress_form(form, k)[..., src], DIM - k)
    if g is not None:
        out = pull(out, E, DIM - k)
    return out


def wedge(a, b, p: int | None = None, q: int | None = None) -> np.ndarray:
    """Wedge product of a p-form and a q-form (components fully antisymmetric)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = a.ndim if p is None else p
    q = b.ndim if q is None else q
    if p + q > MAX_RANK:
        raise TensorError(f"wedge result rank {p + q} exceeds {MAX_RANK}")
    if p + q > DIM:
        return np.zeros(a.shape[:a.ndim - p] + (DIM,) * (p + q))
    prod = np.einsum(f"...{_slots(p)},...{_slots(q, p)}->...{_slots(p + q)}", a, b)
    if p + q < 2:
        return prod
    coef = math.factorial(p + q) / (math.factorial(p) * math.factorial(q))
    return coef * antisymmetrize(prod, p + q)


def interior(v, form, k: int | None = None) -> np.ndarray:
    """Interior product into the first slot: ``(v ⌟ form)_{j..} = v^i form_{ij..}``."""
    form = np.asarray(form, dtype=float)
    k = form.ndim if k is None else k
    if k < 1:
        raise TensorError("interior product needs a form of degree >= 1")
    rest = _slots(k - 1, 1)
    return np.einsum(f"...a,...a{rest}->...{rest}", np.asarray(v, dtype=float), form)


def exterior_power_basis(k: int) -> np.ndarray:
    """Orthonormal basis of Λ^k (full-sum inner product), shape ``(C(8,k),) + (8,)*k``."""
    combos, _, _ = form_index(k)
    eye = np.eye(len(combos)) / math.sqrt(math.factorial(k))
    return expand_form(eye, k)
