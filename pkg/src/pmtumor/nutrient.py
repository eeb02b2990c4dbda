"""Quasi-static elliptic nutrient solvers for the in vitro and in vivo settings.

In vitro the tumor sits in a liquid that holds the nutrient at c_B, so

    -d2c + psi(n) c = 0        on every connected patch of {n > 0},
    c = c_B                    elsewhere,

solved patch by patch with Dirichlet data c_B on the first node outside each
patch.  In vivo the vasculature relaxes c toward c_B outside the tumor,

    -d2c + psi(n) c = (c_B - c) * 1{n = 0},

solved over the whole domain with far-field Dirichlet values c_B at the two
endpoints.  Both systems are strictly diagonally dominant M-matrix problems,
so 0 <= c <= c_B holds discretely and a Thomas sweep solves them directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from .core import Grid1D

__all__ = [
    "linear_consumption",
    "InVitro",
    "InVivo",
    "NutrientModel",
    "support_mask",
    "support_components",
    "solve_vitro",
    "solve_vivo",
    "thomas_solve",
]

# Support threshold relative to the density scale; far below any physical
# density, far above rounding noise.
SUPPORT_REL_TOL = 1e-8


def linear_consumption(n: np.ndarray) -> np.ndarray:
    """psi(n) = n, the consumption law used by every stock experiment."""
    return np.asarray(n, dtype=float)


@dataclass(frozen=True)
class InVitro:
    """Tumor surrounded by liquid held at c_b; consumption psi(n) inside."""

    c_b: float
    psi: Callable[[np.ndarray], np.ndarray] = linear_consumption

    def __post_init__(self):
        if self.c_b <= 0:
            raise ValueError("c_b must be positive")


@dataclass(frozen=True)
class InVivo:
    """Avascular in vivo setting: relaxation toward c_b outside the tumor."""

    c_b: float
    psi: Callable[[np.ndarray], np.ndarray] = linear_consumption

    def __post_init__(self):
        if self.c_b <= 0:
            raise ValueError("c_b must be positive")


NutrientModel = Union[InVitro, InVivo]


def support_mask(n: np.ndarray, tol_supp: float) -> np.ndarray:
    """Nodes strictly above the support threshold."""
    if tol_supp < 0:
        raise ValueError("tol_supp must be >= 0")
    return np.asarray(n, dtype=float) > tol_supp


def support_components(mask: np.ndarray) -> List[Tuple[int, int]]:
    """Inclusive (start, stop) index ranges of the mask's True runs."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    stops = np.concatenate((idx[breaks], [idx[-1]]))
    return list(zip(starts.tolist(), stops.tolist()))


def _support_tol(n: np.ndarray, tol_supp: Optional[float]) -> float:
    if tol_supp is not None:
        return tol_supp
    peak = float(np.max(n)) if n.size else 0.0
    return SUPPORT_REL_TOL * peak


def _consumption(model: NutrientModel, n: np.ndarray) -> np.ndarray:
    psi = np.asarray(model.psi(n), dtype=float)
    if np.any(psi < 0):
        raise ValueError("consumption rate psi(n) must be nonnegative")
    return psi


def solve_vitro(
    n: np.ndarray,
    model: InVitro,
    grid: Grid1D,
    tol_supp: Optional[float] = None,
) -> np.ndarray:
    """Nutrient field for the in vitro model at the given density.

    Each connected support patch is solved independently with Dirichlet c_b on
    its neighbor nodes; a patch that touches a wall sees liquid at c_b beyond
    the wall.  Outside the patches c = c_b exactly.
    """
    if not isinstance(model, InVitro):
        raise TypeError("solve_vitro needs an InVitro model")
    n = np.asarray(n, dtype=float)
    c = np.full(n.size, model.c_b)
    mask = support_mask(n, _support_tol(n, tol_supp))
    inv_dx2 = 1.0 / grid.dx**2
    for lo, hi in support_components(mask):
        size = hi - lo + 1
        psi = _consumption(model, n[lo : hi + 1])
        diag = 2.0 * inv_dx2 + psi
        off = np.full(size - 1, -inv_dx2)
        rhs_vec = np.zeros(size)
        rhs_vec[0] += model.c_b * inv_dx2
        rhs_vec[-1] += model.c_b * inv_dx2
        c[lo : hi + 1] = thomas_solve(off, diag, off, rhs_vec)
    return c


def solve_vivo(
    n: np.ndarray,
    model: InVivo,
    grid: Grid1D,
    tol_supp: Optional[float] = None,
) -> np.ndarray:
    """Nutrient field for the avascular in vivo model at the given density.

    One full-domain solve; the no-tumor indicator is 1 minus the support mask
    and the two endpoints carry the far field c = c_b.
    """
    if not isinstance(model, InVivo):
        raise TypeError("solve_vivo needs an InVivo model")
    n = np.asarray(n, dtype=float)
    size = n.size
    mask = support_mask(n, _support_tol(n, tol_supp))
    outside = (~mask).astype(float)
    psi = _consumption(model, n)
    inv_dx2 = 1.0 / grid.dx**2

    diag = 2.0 * inv_dx2 + psi + outside
    lower = np.full(size - 1, -inv_dx2)
    upper = np.full(size - 1, -inv_dx2)
    rhs_vec = outside * model.c_b
    # far-field Dirichlet rows
    diag[0] = 1.0
    upper[0] = 0.0
    rhs_vec[0] = model.c_b
    diag[-1] = 1.0
    lower[-1] = 0.0
    rhs_vec[-1] = model.c_b
    return thomas_solve(lower, diag, upper, rhs_vec)


def thomas_solve(lower, diag, upper, rhs) -> np.ndarray:
    """Direct tridiagonal solve (forward elimination, back substitution).

    ``lower`` and ``upper`` hold the n-1 off-diagonal entries.  The systems
    solved here are strictly diagonally dominant, so no pivoting is needed;
    a vanishing pivot raises.
    """
    a = np.asarray(lower, dtype=float)
    b = np.array(diag, dtype=float, copy=True)
    cc = np.asarray(upper, dtype=float)
    d = np.array(rhs, dtype=float, copy=True)
    size = b.size
    if a.size != size - 1 or cc.size != size - 1 or d.size != size:
        raise ValueError("inconsistent tridiagonal system sizes")
    for i in range(1, size):
        if b[i - 1] == 0.0:
            raise np.linalg.LinAlgError(f"zero pivot at row {i - 1}")
        w = a[i - 1] / b[i - 1]
        b[i] -= w * cc[i - 1]
        d[i] -= w * d[i - 1]
    if b[-1] == 0.0:
        raise np.linalg.LinAlgError(f"zero pivot at row {size - 1}")
    x = np.empty(size)
    x[-1] = d[-1] / b[-1]
    for i in range(size - 2, -1, -1):
        x[i] = (d[i] - cc[i] * x[i + 1]) / b[i]
    return x
