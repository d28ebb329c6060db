"""Studies built on the transfer operator and the kernels.

Bowen constants, the pressure Lipschitz bound, thermodynamic marginals,
variational entropy, equilibrium marginals of truncations, limsup
eigenfunctions, and the closed form for the long-range XY-type chain.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ruelle.configuration import Configuration, word_array
from ruelle.kernels import CylinderSet, ProbeTrace, kernel_marginal
from ruelle.potentials import (
    Potential,
    evaluate_on_tails,
    make_long_range,
    make_table,
    sup_distance,
    tail_candidates,
    truncate_local,
    zeta,
    zeta_tail,
)
from ruelle.state_space import COUNTING, PROBABILITY, make_finite_alphabet
from ruelle.transfer import (
    CylinderFunction,
    RpfSolution,
    _log_iterates,
    grid_operator,
    pressure_trace,
    rpf_solve,
    trend_label,
)

BOWEN_GROWTH_THRESHOLD = 0.10
BOWEN_RULE = "heuristic: diverging if D(n_max) > 1.10 * D(n_max/2), else bounded"


class AnalysisError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Bowen constant

@dataclass(frozen=True)
class BowenEstimate:
    entries: list  # (n, D_n)
    verdict: str  # bounded-trend, diverging-trend or inconclusive
    rule: str
    tail_count: int
    sampled: list  # n values whose prefixes were sampled

    @property
    def values(self) -> list[float]:
        return [d for _, d in self.entries]


def _bowen_prefixes(size: int, n: int, cap: int, samples: int, rng) -> tuple[np.ndarray, bool]:
    if size**n <= cap:
        return word_array(size, n), False
    drawn = rng.integers(size, size=(samples, n))
    constant = np.repeat(np.arange(size)[:, None], n, axis=1)
    return np.concatenate([constant, drawn]), True


def bowen_estimate(
    f: Potential,
    n_max: int,
    tails: Sequence[Configuration] | None = None,
    seed: int = 0,
    *,
    random_tails: int = 32,
    n_list: Iterable[int] | None = None,
    prefix_cap: int = 1 << 14,
    prefix_samples: int = 4096,
) -> BowenEstimate:
    """D_n = max over shared prefixes w in M^n and tail pairs of |S_n f(w.t) - S_n f(w.t')|.

    Prefixes are enumerated while N^n <= ``prefix_cap``; beyond that the
    constant words plus ``prefix_samples`` seeded random words are used.
    Default tails are the pure-pad tails plus ``random_tails`` seeded ones.
    """
    if n_max < 1:
        raise AnalysisError("n_max must be >= 1")
    if tails is None:
        tails = tail_candidates(f.space, random_tails, seed=seed)
    tails = list(tails)
    if len(tails) < 2:
        raise AnalysisError("need at least two tails")
    ns = sorted(set(n_list)) if n_list is not None else list(range(1, n_max + 1))
    if ns[-1] != n_max:
        ns.append(n_max)
    if n_max // 2 >= 1 and n_max // 2 not in ns:
        ns = sorted(set(ns) | {n_max // 2})
    rng = np.random.default_rng(seed)
    entries, sampled = [], []
    for n in ns:
        prefixes, was_sampled = _bowen_prefixes(f.space.size, n, prefix_cap, prefix_samples, rng)
        sums = evaluate_on_tails(f, prefixes, tails, n_birkhoff=n)
        entries.append((n, float((sums.max(axis=1) - sums.min(axis=1)).max())))
        if was_sampled:
            sampled.append(n)
    d = dict(entries)
    if n_max < 2:
        verdict = "inconclusive"
    else:
        hi, lo = d[n_max], d[n_max // 2]
        verdict = "diverging-trend" if hi > (1 + BOWEN_GROWTH_THRESHOLD) * lo and hi > 0 else "bounded-trend"
    return BowenEstimate(entries, verdict, BOWEN_RULE, len(tails), sampled)


# ---------------------------------------------------------------------------
# pressure Lipschitz bound

@dataclass(frozen=True)
class LipschitzReport:
    p_f: float
    p_g: float
    pressure_gap: float
    sup_norm: float
    slack: float  # sup_norm - pressure_gap, nonnegative when the bound holds

    def holds(self, tol: float = 1e-9) -> bool:
        return self.slack >= -tol


def pressure_lipschitz_check(
    f: Potential,
    g: Potential,
    n: int,
    m: int,
    x: Configuration,
    *,
    convention: str = PROBABILITY,
    probe_memory: int | None = None,
) -> LipschitzReport:
    """Compare |p_n(f; x) - p_n(g; x)| with ||f - g||_inf.

    The norm is exact for finite-memory pairs and a sampled lower bound
    otherwise (then evaluated on prefixes of length ``probe_memory``).
    """
    p_f = pressure_trace(f, n, x, m, convention=convention).final_estimate
    p_g = pressure_trace(g, n, x, m, convention=convention).final_estimate
    norm = sup_distance(f, g, memory=probe_memory if probe_memory is not None else m + 1, pad=x.pad)
    gap = abs(p_f - p_g)
    return LipschitzReport(p_f, p_g, gap, norm, norm - gap)


# ---------------------------------------------------------------------------
# marginals

@dataclass(frozen=True, eq=False)
class MarginalMeasure:
    """A probability vector on M^m words in lexicographic order."""

    memory: int
    mass: np.ndarray
    provenance: dict = field(default_factory=dict)
    space: object = None

    def __post_init__(self):
        mass = np.array(self.mass, dtype=float).reshape(-1)
        if np.any(mass < 0):
            raise AnalysisError("marginal mass must be nonnegative")
        total = mass.sum()
        if abs(total - 1.0) > 1e-12:
            raise AnalysisError(f"marginal mass sums to {total!r}")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    @property
    def alphabet_size(self) -> int:
        if self.space is not None:
            return self.space.size
        return int(round(self.mass.size ** (1.0 / self.memory))) if self.memory else 1

    def marginalize(self, m: int) -> "MarginalMeasure":
        """Sum out coordinates m+1..memory."""
        if not 0 <= m <= self.memory:
            raise AnalysisError("can only marginalize to a shorter memory")
        n = self.alphabet_size
        mass = self.mass.reshape(n**m, n ** (self.memory - m)).sum(axis=1)
        return MarginalMeasure(m, mass / mass.sum(), {**self.provenance, "marginalized_to": m}, self.space)

    def cylinder_probability(self, cyl: CylinderSet) -> float:
        if cyl.max_coordinate > self.memory:
            raise AnalysisError("cylinder reaches beyond the marginal memory")
        words = word_array(self.alphabet_size, self.memory)
        return float(self.mass @ cyl(words, 0))

    def integrate(self, f: Potential, pad: int = 0) -> float:
        if f.memory is None or f.memory > self.memory:
            raise AnalysisError(f"{f.name!r} is not a function of the first {self.memory} coordinates")
        words = word_array(f.space.size, self.memory)
        return float(self.mass @ f.evaluate_words(words, pad))


def total_variation(mu: MarginalMeasure, nu: MarginalMeasure) -> float:
    m = min(mu.memory, nu.memory)
    return 0.5 * float(np.abs(mu.marginalize(m).mass - nu.marginalize(m).mass).sum())


def thermodynamic_marginal(
    f: Potential, n: int, m: int, y: Configuration, *, convention: str = PROBABILITY
) -> MarginalMeasure:
    """mass(w) = K_n([x_1..x_m = w], y)."""
    mass = kernel_marginal(f, n, m, y, convention=convention)
    prov = {"construction": "kernel", "potential": f.name, "n": n, "boundary": (y.prefix, y.pad)}
    return MarginalMeasure(m, mass / mass.sum(), prov, f.space)


def phase_gap_probe(
    f: Potential, y1: Configuration, y2: Configuration, n_list: Sequence[int], m: int
) -> ProbeTrace:
    """Total variation between the memory-m thermodynamic marginals from two boundaries.

    A gap that persists in n is evidence of several eigenprobabilities,
    not a certificate.
    """
    entries = []
    for n in n_list:
        gap = total_variation(thermodynamic_marginal(f, n, m, y1), thermodynamic_marginal(f, n, m, y2))
        entries.append((n, gap, 0.0))
    vals = [v for _, v, _ in entries]
    return ProbeTrace("phase_gap", entries, trend_label(vals))


# ---------------------------------------------------------------------------
# variational entropy

@dataclass(frozen=True)
class EntropyEstimate:
    value: float  # an upper bound for h(mu)
    argmin_candidate: str
    candidate_count: int
    objectives: list  # (name, -int g dmu + log lambda_g)


def default_candidates(space, memory: int, include: Sequence[Potential] = ()) -> list[Potential]:
    """Combinations of cylinder indicators of memory <= 2 (capped by ``memory``).

    Coefficients run over {-1, 0, 1} when that grid has at most 729 points;
    otherwise each indicator alone with coefficients +-1 and +-0.5.
    """
    k = min(2, memory)
    cells = space.size**k
    cands = []
    if 3**cells <= 729:
        for coeffs in itertools.product((-1.0, 0.0, 1.0), repeat=cells):
            if any(coeffs):
                cands.append(make_table(space, k, coeffs, name=f"cyl{k}{list(coeffs)}"))
    else:
        for j in range(cells):
            for c in (-1.0, -0.5, 0.5, 1.0):
                vals = np.zeros(cells)
                vals[j] = c
                cands.append(make_table(space, k, vals, name=f"cyl{k}[{j}]*{c}"))
    return cands + list(include)


def entropy_estimate(
    mu: MarginalMeasure, candidates: Sequence[Potential], *, convention: str = PROBABILITY, pad: int = 0
) -> EntropyEstimate:
    """min over candidates g (and g = 0) of -int g dmu + log lambda_g."""
    objectives = [("zero", 0.0)]
    for g in candidates:
        if g.memory is None or g.memory > mu.memory:
            raise AnalysisError(f"candidate {g.name!r} has memory beyond the marginal's {mu.memory}")
        sol = rpf_solve(g, memory=max(g.memory, 1), pad=pad, convention=convention)
        if not sol.converged:
            raise AnalysisError(f"rpf_solve did not converge for candidate {g.name!r}")
        objectives.append((g.name, -mu.integrate(g, pad) + sol.log_lambda))
    name, value = min(objectives, key=lambda t: t[1])
    return EntropyEstimate(value, name, len(objectives), objectives)


# ---------------------------------------------------------------------------
# equilibrium states of truncations

@dataclass(frozen=True, eq=False)
class EquilibriumStep:
    m: int
    solution: RpfSolution
    marginal: MarginalMeasure
    entropy: EntropyEstimate
    integral: float
    defect: float
    cylinder_probabilities: list


def _equilibrium_step(f, m, cylinders, candidates, pad, convention) -> EquilibriumStep:
    fm = truncate_local(f, m, pad, estimate_gap=False)
    sol = rpf_solve(fm, memory=max(m, 1), pad=pad, convention=convention)
    mu = MarginalMeasure(
        sol.memory, sol.mu, {"construction": "h*nu", "potential": f.name, "m": m, "pad": pad}, f.space
    )
    cands = default_candidates(f.space, sol.memory) if candidates is None else list(candidates)
    cands = [g for g in cands if g.memory is not None and g.memory <= sol.memory] + [fm]
    ent = entropy_estimate(mu, cands, convention=convention, pad=pad)
    integral = mu.integrate(fm, pad)
    defect = abs(ent.value + integral - sol.log_lambda)
    probs = [mu.cylinder_probability(c) for c in cylinders]
    return EquilibriumStep(m, sol, mu, ent, integral, defect, probs)


def equilibrium_pipeline(
    f: Potential,
    memory_list: Sequence[int],
    report_cylinders: Sequence[CylinderSet] = (),
    *,
    candidates: Sequence[Potential] | None = None,
    pad: int = 0,
    convention: str = PROBABILITY,
    workers: int = 1,
) -> list[EquilibriumStep]:
    """For each m: f_m, its Perron data, mu_{f_m} = h nu and the variational defect.

    The candidate family always gains f_m itself. Steps are independent and
    returned in the order of ``memory_list`` whatever the worker count.
    """
    ms = list(memory_list)
    if ms != sorted(ms) or len(set(ms)) != len(ms):
        raise AnalysisError("memory_list must be strictly ascending")
    for c in report_cylinders:
        if c.max_coordinate > max(ms[0], 1):
            raise AnalysisError("report cylinders must fit in the smallest memory")
    run = lambda m: _equilibrium_step(f, m, report_cylinders, candidates, pad, convention)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, ms))
    return [run(m) for m in ms]


# ---------------------------------------------------------------------------
# limsup eigenfunction

@dataclass(frozen=True, eq=False)
class LimsupReport:
    running_max: CylinderFunction
    sup_trace: list  # (n, ||L^n 1 / lambda^n||_inf)
    residual_trace: list  # (n, ||L g_n - lambda g_n|| / ||g_n||)
    residual: float
    lam: float
    burn_in: int


def limsup_eigenfunction(
    f: Potential,
    n_max: int,
    m: int,
    lam: float | RpfSolution | None,
    *,
    burn_in: int | None = None,
    pad: int = 0,
    convention: str = PROBABILITY,
) -> LimsupReport:
    """Track g_n = L^n(1) / lambda^n on the memory-m grid.

    Reports the sup-norm trace, the pointwise running max of g_n for
    n > burn_in, and the eigen-residual of each iterate.
    """
    if lam is None:
        raise AnalysisError("an eigenvalue estimate is required")
    log_lam = lam.log_lambda if isinstance(lam, RpfSolution) else math.log(float(lam))
    burn_in = n_max // 2 if burn_in is None else burn_in
    if not 0 <= burn_in < n_max:
        raise AnalysisError("burn_in must lie in [0, n_max)")
    op = grid_operator(f, m, pad, convention)
    lam_v = math.exp(log_lam)
    sup_trace, res_trace = [], []
    running = None
    g = np.ones(op.size)
    for n, logs, total in _log_iterates(op, n_max):
        g = np.exp(logs + (total - n * log_lam))
        sup_trace.append((n, float(g.max())))
        res_trace.append((n, float(np.abs(op.matvec(g) - lam_v * g).max() / g.max())))
        if n > burn_in:
            running = g if running is None else np.maximum(running, g)
    return LimsupReport(
        CylinderFunction(f.space, m, running), sup_trace, res_trace, res_trace[-1][1], lam_v, burn_in
    )


# ---------------------------------------------------------------------------
# long-range closed form

@dataclass(frozen=True, eq=False)
class XYReport:
    gamma: float
    m: int
    zeta: float
    alpha: np.ndarray  # alpha_1..alpha_m
    h: CylinderFunction
    candidates: dict  # convention -> lambda
    residuals: dict  # (weights convention, lambda convention) -> exact residual
    grid_residuals: dict  # weights convention -> naive memory-m grid residual
    closes_under: list  # lambda conventions whose eigenrelation closes with the implemented weights
    implemented_convention: str
    sign_log_exact: bool
    sign_product_error: float

    @property
    def named_convention(self) -> str | None:
        return self.closes_under[0] if len(self.closes_under) == 1 else None


def xy_closed_form(gamma: float, m: int, *, tol: float = 1e-8, allow_wide: bool = False) -> XYReport:
    """h(x) = exp(sum_n alpha_n x_n), alpha_n = sum_{j>n} j^-gamma, on {-1, +1} with f = sum_k x_k k^-gamma.

    The eigen-ratio (L h)(x) / h(x) = sum_a p(a) exp(f(ax) + log h(ax) - log h(x))
    is evaluated on every configuration (w, p, p, ...) with w in M^m. The log
    ratio of h telescopes, with the pad tail contributing exactly -p alpha_{m+1},
    so the check holds without truncation error. The naive residual of the
    truncated h on the memory-m grid is reported alongside.
    """
    if gamma <= 1.5 and not allow_wide:
        raise AnalysisError("gamma must exceed 3/2 (pass allow_wide=True to override)")
    if gamma <= 1:
        raise AnalysisError("gamma must exceed 1")
    if m < 1:
        raise AnalysisError("m must be >= 1")
    space = make_finite_alphabet([-1, 1])
    f = make_long_range(space, gamma)
    z = zeta(gamma)
    alpha = np.array([zeta_tail(gamma, n) for n in range(1, m + 2)])  # alpha_1..alpha_{m+1}
    words = word_array(2, m)
    spins = space.scalar_coords[words]
    # row sums rather than a BLAS product so negating w negates the result bit for bit
    log_h = np.sum(spins * alpha[:m], axis=1)
    h = CylinderFunction(space, m, log_h - log_h.max(), float(log_h.max()))

    lam = {PROBABILITY: math.cosh(z), COUNTING: 2 * math.cosh(z)}
    residuals, grid_res, ratios = {}, {}, {}
    for conv in (PROBABILITY, COUNTING):
        logw = space.log_weights(conv)
        per_pad = []
        for pad in range(2):
            p = space.scalar_coords[pad]
            terms = []
            for a in range(2):
                ext = np.concatenate([np.full((words.shape[0], 1), a), words], axis=1)
                s_a = space.scalar_coords[a]
                dlog = alpha[0] * s_a + spins @ (alpha[1:] - alpha[:m]) - p * alpha[m]
                terms.append(logw[a] + f.evaluate_words(ext, pad) + dlog)
            per_pad.append(np.logaddexp(terms[0], terms[1]))
        ratios[conv] = np.exp(np.concatenate(per_pad))
        for lconv, value in lam.items():
            residuals[(conv, lconv)] = float(np.abs(ratios[conv] - value).max() / value)
        op = grid_operator(f, m, 0, conv)
        hv = h.linear()
        grid_res[conv] = float(np.abs(op.matvec(hv) - lam[conv] * hv).max() / (lam[conv] * hv.max()))

    closes = [lconv for lconv in lam if residuals[(PROBABILITY, lconv)] < tol]
    flipped = spins[::-1]  # word index reversal maps w to -w on {-1, +1}
    log_neg = np.sum(flipped * alpha[:m], axis=1)
    sign_log = bool(np.array_equal(log_neg, -log_h))
    prod_err = float(np.abs(np.exp(log_neg) * np.exp(log_h) - 1.0).max())
    return XYReport(
        gamma, m, z, alpha[:m], h, lam, residuals, grid_res, closes, PROBABILITY, sign_log, prod_err
    )

