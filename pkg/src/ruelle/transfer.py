"""The Ruelle operator on memory-m grids, pressure traces and RPF eigendata.

A memory-m grid holds a function of the first m coordinates as a dense
vector of length N^m in lexicographic word order. The operator

    (L_f phi)(x) = sum_a p(a) exp(f(a x)) phi(a x)

maps the grid to itself once f is evaluated at (a, x_1, ..., x_m, pad, ...),
which is exact for potentials of memory <= m + 1 and is the truncation f_{m+1}
otherwise; ``truncation_bound`` on results records ||f_{m+1} - f||_inf, the
pressure error allowed by the Lipschitz bound |p(f) - p(g)| <= ||f - g||.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ruelle.configuration import (
    DEFAULT_ENUMERATION_CAP,
    Configuration,
    EnumerationCapError,
    pad_to,
    shift,
    word_array,
    word_index,
)
from ruelle.potentials import Potential, truncation_gap
from ruelle.state_space import PROBABILITY, StateSpace

log = logging.getLogger(__name__)

DEFAULT_GRID_CAP = 1 << 22
LINEAR_DOMAIN_LIMIT = 200.0


class TransferError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CylinderFunction:
    """A function of the first ``memory`` coordinates.

    With ``log_scale`` set, ``values`` are logarithms and the function is
    ``exp(values + log_scale)``.
    """

    space: StateSpace
    memory: int
    values: np.ndarray
    log_scale: float | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.space.size**self.memory:
            raise TransferError(f"memory-{self.memory} grid needs {self.space.size ** self.memory} values, got {values.size}")
        if self.log_scale is None and np.isnan(values).any():
            raise TransferError("cylinder function values contain NaN")
        if self.log_scale is not None and not np.all(np.isfinite(values)):
            raise TransferError("log-domain values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, space: StateSpace, memory: int, c: float = 1.0) -> "CylinderFunction":
        return cls(space, memory, np.full(space.size**memory, float(c)))

    @classmethod
    def from_words(cls, space: StateSpace, memory: int, fn) -> "CylinderFunction":
        """Tabulate ``fn(words) -> values`` on every word of length ``memory``."""
        return cls(space, memory, fn(word_array(space.size, memory)))

    @classmethod
    def indicator(cls, space: StateSpace, memory: int, coordinate: int, point: int) -> "CylinderFunction":
        if not 1 <= coordinate <= memory:
            raise TransferError("indicator coordinate must lie within the memory window")
        words = word_array(space.size, memory)
        return cls(space, memory, (words[:, coordinate - 1] == point).astype(float))

    @property
    def is_log(self) -> bool:
        return self.log_scale is not None

    def linear(self) -> np.ndarray:
        if self.log_scale is None:
            return self.values
        return np.exp(self.values + self.log_scale)

    def log_values(self) -> np.ndarray:
        if self.log_scale is not None:
            return self.values + self.log_scale
        with np.errstate(divide="ignore"):
            return np.log(self.values)

    def lift(self, memory: int) -> "CylinderFunction":
        """The same function on a finer grid."""
        if memory < self.memory:
            raise TransferError("cannot lift to a coarser grid")
        if memory == self.memory:
            return self
        extra = self.space.size ** (memory - self.memory)
        return CylinderFunction(self.space, memory, np.repeat(self.values, extra), self.log_scale)

    def __call__(self, words: np.ndarray, pad: int) -> np.ndarray:
        idx = word_index(pad_to(np.asarray(words, dtype=np.int64), pad, self.memory), self.space.size)
        if self.log_scale is None:
            return self.values[idx]
        return np.exp(self.values[idx] + self.log_scale)


# ---------------------------------------------------------------------------
# the grid operator

@dataclass(frozen=True)
class GridOperator:
    """Structured form of L_f on the memory-m grid.

    ``exponents[a, v] = log p(a) + f(a v pad)`` and ``source[a, v]`` is the grid
    index of the word (a, v_1, ..., v_{m-1}), so
    (L phi)[v] = sum_a exp(exponents[a, v]) phi[source[a, v]].
    """

    space: StateSpace
    memory: int
    pad: int
    exponents: np.ndarray
    source: np.ndarray
    convention: str

    @property
    def size(self) -> int:
        return self.space.size**self.memory

    def matvec(self, phi: np.ndarray) -> np.ndarray:
        # sum over the alphabet in fixed index order keeps reruns bit-stable
        return np.sum(np.exp(self.exponents) * phi[self.source], axis=0)

    def rmatvec(self, nu: np.ndarray) -> np.ndarray:
        """nu -> nu L, the dual action on grid marginals."""
        contrib = np.exp(self.exponents) * nu[None, :]
        return np.bincount(self.source.ravel(), weights=contrib.ravel(), minlength=self.size)

    def log_matvec(self, log_phi: np.ndarray) -> np.ndarray:
        terms = self.exponents + log_phi[self.source]
        top = terms.max(axis=0)
        return top + np.log(np.sum(np.exp(terms - top), axis=0))

    def dense(self) -> np.ndarray:
        mat = np.zeros((self.size, self.size))
        cols = np.broadcast_to(np.arange(self.size), self.source.shape)
        np.add.at(mat, (cols.ravel(), self.source.ravel()), np.exp(self.exponents).ravel())
        return mat


def grid_operator(
    f: Potential,
    memory: int,
    pad: int = 0,
    convention: str = PROBABILITY,
    cap: int = DEFAULT_GRID_CAP,
) -> GridOperator:
    space = f.space
    n = space.size
    if memory < 0:
        raise TransferError("memory must be nonnegative")
    if n ** (memory + 1) > cap:
        raise EnumerationCapError(f"grid of {n}^{memory + 1} evaluations exceeds cap {cap}")
    if not 0 <= pad < n:
        raise TransferError(f"pad index {pad} outside alphabet")
    words = word_array(n, memory + 1, cap=cap)
    fvals = f.evaluate_words(words, pad).reshape(n, n**memory)
    exponents = space.log_weights(convention)[:, None] + fvals
    grid = np.arange(n**memory)
    if memory == 0:
        source = np.zeros((n, 1), dtype=np.int64)
    else:
        source = np.arange(n)[:, None] * n ** (memory - 1) + grid[None, :] // n
    exponents.setflags(write=False)
    source.setflags(write=False)
    return GridOperator(space, memory, pad, exponents, source, convention)


def transfer_matrix(f: Potential, memory: int, pad: int = 0, convention: str = PROBABILITY) -> np.ndarray:
    """Dense N^m x N^m matrix of L_f on the memory-m grid."""
    return grid_operator(f, memory, pad, convention).dense()


def apply(
    f: Potential,
    phi: CylinderFunction,
    pad: int = 0,
    convention: str = PROBABILITY,
    log_domain: bool | None = None,
) -> CylinderFunction:
    """One application of L_f to a grid function.

    Log-domain input stays in the log domain (log-sum-exp over the alphabet);
    it requires a positive phi.
    """
    if not f.space.same_as(phi.space):
        raise TransferError("potential and function live on different alphabets")
    op = grid_operator(f, phi.memory, pad, convention)
    if log_domain is None:
        log_domain = phi.is_log
    if log_domain:
        out = op.log_matvec(phi.log_values())
        top = float(out.max())
        return CylinderFunction(phi.space, phi.memory, out - top, top)
    return CylinderFunction(phi.space, phi.memory, op.matvec(phi.linear()))


def _log_iterates(op: GridOperator, n: int):
    """Yield (k, shifted log L^k 1, cumulative normalizer) for k = 1..n."""
    logs = np.zeros(op.size)
    total = 0.0
    for k in range(1, n + 1):
        logs = op.log_matvec(logs)
        top = float(logs.max())
        logs = logs - top
        total += top
        yield k, logs, total


def iterate_log(
    f: Potential,
    n: int,
    m: int,
    pad: int = 0,
    convention: str = PROBABILITY,
) -> tuple[CylinderFunction, list[float]]:
    """log L_f^n(1) on the memory-m grid plus the per-step normalizers.

    The function equals ``values + sum(normalizers)``.
    """
    if n < 1:
        raise TransferError("n must be >= 1")
    op = grid_operator(f, m, pad, convention)
    norms = []
    logs = np.zeros(op.size)
    for _, logs, total in _log_iterates(op, n):
        norms.append(total - sum(norms))
    return CylinderFunction(f.space, m, logs, math.fsum(norms)), norms


# ---------------------------------------------------------------------------
# pressure

def trend_label(values, tol: float | None = None) -> str:
    """'decreasing', 'increasing', 'constant' or 'mixed' for a finite sequence.

    Steps within ``tol`` (default: a few ulps of the largest entry) count as flat.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return "constant"
    if tol is None:
        tol = 64 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(v))))
    d = np.diff(v)
    if np.all(np.abs(d) <= tol):
        return "constant"
    if np.all(d <= tol):
        return "decreasing"
    if np.all(d >= -tol):
        return "increasing"
    return "mixed"


def fitted_trend(values) -> str:
    """Sign of the least-squares slope of ``values`` against their index."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return "constant"
    slope = np.polyfit(np.arange(v.size, dtype=float), v, 1)[0]
    scale = 64 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(v))))
    if abs(slope) <= scale:
        return "constant"
    return "decreasing" if slope < 0 else "increasing"


@dataclass(frozen=True)
class PressureTrace:
    base_point: Configuration
    entries: list  # (n, p_n)
    final_estimate: float
    cauchy_gap: float
    memory: int
    convention: str
    truncation_bound: float
    abs_trend: str = ""  # fitted slope of |p_n| over the whole trace
    abs_shape: str = ""  # step-by-step label of |p_n| over the second half

    def csv_rows(self) -> list[tuple]:
        rows, prev = [], None
        for n, p in self.entries:
            rows.append((n, p, float("nan") if prev is None else abs(p - prev)))
            prev = p
        return rows


def grid_point(x: Configuration, m: int) -> int:
    return int(word_index(np.array([x.head(m)], dtype=np.int64).reshape(1, m), x.space.size)[0])


def pressure_trace(
    f: Potential,
    n_max: int,
    x: Configuration,
    m: int,
    pad: int | None = None,
    convention: str = PROBABILITY,
) -> PressureTrace:
    """p_n = (1/n) log L_f^n(1)(sigma^n x) for n = 1..n_max.

    The grid pad defaults to the pad of ``x``, so sigma^n x is represented
    exactly once its prefix is consumed.
    """
    if n_max < 2:
        raise TransferError("n_max must be >= 2")
    if not f.space.same_as(x.space):
        raise TransferError("base point lives on a different alphabet")
    pad = x.pad if pad is None else pad
    op = grid_operator(f, m, pad, convention)
    entries = []
    for n, logs, total in _log_iterates(op, n_max):
        point = grid_point(shift(x, n), m)
        entries.append((n, float((logs[point] + total) / n)))
    gap = abs(entries[-1][1] - entries[-2][1])
    bound = 0.0 if f.memory is not None and f.memory <= m + 1 else truncation_gap(f, m + 1, pad)
    mags = [abs(p) for _, p in entries]
    return PressureTrace(
        x, entries, entries[-1][1], gap, m, convention, bound, fitted_trend(mags), trend_label(mags[len(mags) // 2 :])
    )


# ---------------------------------------------------------------------------
# RPF eigendata

@dataclass(frozen=True, eq=False)
class RpfSolution:
    """Perron data of L_f on a memory-m grid.

    ``h`` is normalized so that sum(h * nu) = 1 and ``nu`` (the marginal of
    the eigenmeasure on words of length m) sums to one.
    """

    lam: float
    log_lambda: float
    h: CylinderFunction
    nu: np.ndarray
    residual_right: float
    residual_left: float
    iterations: int
    converged: bool
    memory: int
    pad: int
    convention: str
    warnings: tuple = ()
    potential: str = ""

    @property
    def mu(self) -> np.ndarray:
        """Marginal of the equilibrium measure h nu on words of length m."""
        m = self.h.linear() * self.nu
        return m / m.sum()


def _power(step, x0: np.ndarray, norm, tol: float, max_iter: int):
    x = x0 / norm(x0)
    lam_prev = None
    history = []
    for it in range(1, max_iter + 1):
        y = step(x)
        lam = norm(y)
        x_new = y / lam
        change = float(np.abs(x_new - x).max() / np.abs(x_new).max())
        x = x_new
        history.append(lam)
        if lam_prev is not None and change < tol and abs(lam - lam_prev) <= tol * lam:
            return x, lam, it, True, history
        lam_prev = lam
    return x, lam, max_iter, False, history


def _period_two(history: list[float]) -> bool:
    if len(history) < 6:
        return False
    h = np.array(history[-6:])
    odd_even = np.abs(h[2:] - h[:-2]).max()
    step = np.abs(np.diff(h)).min()
    return bool(step > 100 * max(odd_even, 1e-300))


def rpf_solve(
    f: Potential,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    memory: int | None = None,
    pad: int = 0,
    convention: str = PROBABILITY,
) -> RpfSolution:
    """Power iteration for (lambda_f, h_f, nu_f) on the memory-k grid.

    ``memory`` defaults to the potential's memory (at least 1). Iteration
    starts from the all-ones vector and stops once the sup-normalized iterate
    and the eigenvalue both change by less than ``tol``.
    """
    if tol <= 0:
        raise TransferError("tol must be positive")
    if memory is None:
        if f.memory is None:
            raise TransferError(f"{f.name!r} has infinite range; pass a grid memory (solves f_(memory+1))")
        memory = max(f.memory, 1)
    op = grid_operator(f, memory, pad, convention)
    shift_ = float(op.exponents.max())
    scaled = GridOperator(op.space, op.memory, op.pad, op.exponents - shift_, op.source, convention)
    warnings = []
    if np.any(np.exp(scaled.exponents) == 0.0):
        warnings.append("reducible: an admissible transition has zero weight")

    ones = np.ones(op.size)
    sup = lambda v: float(np.abs(v).max())  # noqa: E731
    l1 = lambda v: float(np.abs(v).sum())  # noqa: E731
    h, lam_r, it_r, ok_r, hist_r = _power(scaled.matvec, ones, sup, tol, max_iter)
    nu, lam_l, it_l, ok_l, hist_l = _power(scaled.rmatvec, ones, l1, tol, max_iter)
    for ok, hist in ((ok_r, hist_r), (ok_l, hist_l)):
        if not ok and _period_two(hist):
            warnings.append("non-primitive: period-2 oscillation in normalizers")
    if not (ok_r and ok_l):
        warnings.append(f"power iteration did not converge within {max_iter} steps")
        log.warning("rpf_solve(%s): %s", f.name, warnings[-1])

    nu = nu / nu.sum()
    h = h / float(h @ nu)
    res_r = sup(scaled.matvec(h) - lam_r * h) / (lam_r * sup(h))
    res_l = sup(scaled.rmatvec(nu) - lam_r * nu) / (lam_r * sup(nu))
    log_lam = math.log(lam_r) + shift_
    return RpfSolution(
        lam=math.exp(log_lam),
        log_lambda=log_lam,
        h=CylinderFunction(f.space, memory, h),
        nu=nu,
        residual_right=res_r,
        residual_left=res_l,
        iterations=max(it_r, it_l),
        converged=ok_r and ok_l,
        memory=memory,
        pad=pad,
        convention=convention,
        warnings=tuple(warnings),
        potential=f.name,
    )


def _on_grid(phi: CylinderFunction, memory: int) -> CylinderFunction:
    if phi.memory > memory:
        raise TransferError(f"function of memory {phi.memory} does not fit the memory-{memory} grid")
    return phi.lift(memory)


def duality_residual(sol: RpfSolution, f: Potential, phi: CylinderFunction) -> float:
    """|sum nu L_f(phi) - lambda sum nu phi| on the solution grid."""
    phi = _on_grid(phi, sol.memory)
    lphi = apply(f, phi, sol.pad, sol.convention, log_domain=False).linear()
    return float(abs(sol.nu @ lphi - sol.lam * (sol.nu @ phi.linear())))


@dataclass(frozen=True)
class OperatorNormReport:
    lam: float
    ratio_at_one: float
    max_ratio: float
    sup_gap: float
    distance_bound: float
    max_distance_ratio: float
    samples: int

    @property
    def norm_ok(self) -> bool:
        return self.max_ratio <= self.lam + 1e-10 * max(1.0, self.lam)

    @property
    def distance_ok(self) -> bool:
        return self.max_distance_ratio <= self.distance_bound + 1e-10 * max(1.0, self.lam)


def operator_norm_check(
    f: Potential,
    g: Potential,
    sol_f: RpfSolution,
    phis: list[CylinderFunction] | None = None,
    samples: int = 100,
    seed: int = 0,
) -> OperatorNormReport:
    """Check ||L_f|| = lambda_f on L^1(nu_f) and ||L_g - L_f|| <= lambda_f (e^{||g-f||} - 1).

    Both operators act on the solution's grid; the L^1 norms use nu_f.
    """
    m = sol_f.memory
    for pot in (f, g):
        if pot.memory is None or pot.memory > m + 1:
            raise TransferError(f"{pot.name!r} does not act exactly on the memory-{m} grid")
    space = f.space
    if phis is None:
        rng = np.random.default_rng(seed)
        phis = [CylinderFunction(space, m, rng.uniform(-1, 1, space.size**m)) for _ in range(samples)]
    phis = [_on_grid(p, m) for p in phis]
    op_f = grid_operator(f, m, sol_f.pad, sol_f.convention)
    op_g = grid_operator(g, m, sol_f.pad, sol_f.convention)
    nu = sol_f.nu
    l1 = lambda v: float(nu @ np.abs(v))  # noqa: E731

    one = np.ones(op_f.size)
    ratio_one = l1(op_f.matvec(one)) / l1(one)
    ratios, dists = [], []
    for p in phis:
        v = p.linear()
        norm = l1(v)
        if norm == 0:
            continue
        ratios.append(l1(op_f.matvec(v)) / norm)
        dists.append(l1(op_g.matvec(v) - op_f.matvec(v)) / norm)
    # exponents differ only by g - f on the same (a, v) cells
    gap = float(np.abs(op_g.exponents - op_f.exponents).max())
    return OperatorNormReport(
        lam=sol_f.lam,
        ratio_at_one=ratio_one,
        max_ratio=max(ratios, default=ratio_one),
        sup_gap=gap,
        distance_bound=sol_f.lam * math.expm1(gap),
        max_distance_ratio=max(dists, default=0.0),
        samples=len(ratios),
    )
