"""Specification kernels K_n(phi, x) = L^n(phi)(sigma^n x) / L^n(1)(sigma^n x) and probes.

Kernels are exact sums over all words a in M^n placed in front of sigma^n x.
Numerator and denominator share one running log-sum-exp shift. Beyond the
enumeration cap a stratified, seeded sampler reports a standard error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from ruelle.configuration import (
    DEFAULT_ENUMERATION_CAP,
    Configuration,
    EnumerationCapError,
    pad_to,
    shift,
    word_blocks,
    word_index,
)
from ruelle.potentials import Potential, tail_candidates
from ruelle.state_space import PROBABILITY
from ruelle.transfer import trend_label

Observable = Callable[[np.ndarray, int], np.ndarray]


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class CylinderSet:
    """{x : x_i = a for every (i, a) in constraints}; coordinates are 1-based."""

    constraints: tuple

    def __post_init__(self):
        cons = tuple((int(i), int(a)) for i, a in self.constraints)
        coords = [i for i, _ in cons]
        if len(set(coords)) != len(coords) or any(i < 1 for i in coords):
            raise KernelError("cylinder coordinates must be distinct and >= 1")
        object.__setattr__(self, "constraints", cons)

    @classmethod
    def single(cls, i: int, a: int) -> "CylinderSet":
        return cls(((i, a),))

    @classmethod
    def from_word(cls, word: Sequence[int]) -> "CylinderSet":
        return cls(tuple((k + 1, a) for k, a in enumerate(word)))

    @property
    def max_coordinate(self) -> int:
        return max((i for i, _ in self.constraints), default=0)

    def __call__(self, words: np.ndarray, pad: int) -> np.ndarray:
        w = pad_to(np.asarray(words, dtype=np.int64), pad, self.max_coordinate)
        hit = np.ones(w.shape[0], dtype=bool)
        for i, a in self.constraints:
            hit &= w[:, i - 1] == a
        return hit.astype(float)


def as_observable(phi) -> Observable:
    if callable(phi):
        return phi
    c = float(phi)
    return lambda words, pad: np.full(np.shape(words)[0], c)


def tail_observable(g: Observable, n: int) -> Observable:
    """x -> g(sigma^n x), a function of the coordinates beyond n."""
    g = as_observable(g)

    def psi(words, pad):
        w = np.asarray(words)
        return g(pad_to(w, pad, max(n, w.shape[1]))[:, n:], pad)

    return psi


@dataclass(frozen=True)
class KernelValue:
    n: int
    boundary: Configuration
    value: float
    log_numerator: float  # log |numerator|
    log_denominator: float
    stderr: float = 0.0
    sampled: bool = False
    observable: object = None


class _Accumulator:
    """Running sums of exp(l - shift) * phi with a common, rising shift."""

    def __init__(self, bins: int | None = None):
        self.shift = -math.inf
        self.num = 0.0
        self.den = 0.0
        self.bins = None if bins is None else np.zeros(bins)

    def add(self, logs: np.ndarray, phi: np.ndarray | None = None, bin_index: np.ndarray | None = None):
        top = float(logs.max())
        if top > self.shift:
            scale = math.exp(self.shift - top) if self.shift > -math.inf else 0.0
            self.num *= scale
            self.den *= scale
            if self.bins is not None:
                self.bins *= scale
            self.shift = top
        w = np.exp(logs - self.shift)
        self.den += float(w.sum())
        if phi is not None:
            self.num += float(w @ phi)
        if bin_index is not None:
            self.bins += np.bincount(bin_index, weights=w, minlength=self.bins.size)


def _kernel_batches(f: Potential, n: int, x: Configuration, convention: str, cap: int, block: int = 1 << 17):
    """Yield (configuration words, pad, log weights) for every a in M^n."""
    if not f.space.same_as(x.space):
        raise KernelError("boundary lives on a different alphabet")
    tail = shift(x, n)
    tail_words = np.array(tail.prefix, dtype=np.int64)
    logw = f.space.log_weights(convention)
    for words in word_blocks(f.space.size, n, block=block, cap=cap):
        full = np.empty((words.shape[0], n + tail_words.size), dtype=np.int64)
        full[:, :n] = words
        full[:, n:] = tail_words
        logs = f.birkhoff_words(full, tail.pad, n) + logw[words].sum(axis=1)
        yield full, tail.pad, logs


def _sampled_kernel(f, n, phi, x, samples, seed, convention) -> KernelValue:
    """Stratified by the first letter with proportional allocation."""
    if seed is None:
        raise KernelError("sampled kernels need a seed")
    rng = np.random.default_rng(seed)
    space = f.space
    tail = shift(x, n)
    tail_words = np.array(tail.prefix, dtype=np.int64)
    logw = space.log_weights(convention)
    probs = space.weights
    strata = []
    for a in range(space.size):
        k = max(2, int(round(samples * probs[a])))
        words = rng.choice(space.size, size=(k, n), p=probs)
        words[:, 0] = a
        full = np.concatenate([words, np.broadcast_to(tail_words, (k, tail_words.size))], axis=1)
        # importance weight relative to the a priori product sampler
        logs = f.birkhoff_words(full, tail.pad, n) + logw[words].sum(axis=1) - np.log(probs[words]).sum(axis=1)
        strata.append((probs[a], logs, phi(full, tail.pad)))
    top = max(float(l.max()) for _, l, _ in strata)
    num = den = 0.0
    for p, logs, vals in strata:
        w = np.exp(logs - top)
        num += p * float(np.mean(w * vals))
        den += p * float(np.mean(w))
    ratio = num / den
    var = 0.0
    for p, logs, vals in strata:
        resid = np.exp(logs - top) * (vals - ratio)
        var += p**2 * float(np.var(resid, ddof=1)) / resid.size
    with np.errstate(divide="ignore"):
        log_num = math.log(abs(num)) + top if num else -math.inf
    return KernelValue(n, x, ratio, log_num, math.log(den) + top, math.sqrt(var) / den, True, phi)


def kernel_value(
    f: Potential,
    n: int,
    phi,
    x: Configuration,
    *,
    cap: int = DEFAULT_ENUMERATION_CAP,
    samples: int | None = None,
    seed: int | None = None,
    convention: str = PROBABILITY,
) -> KernelValue:
    """K_n(phi, x), exact when N^n <= cap, else sampled if ``samples`` is given."""
    if n < 0:
        raise KernelError("n must be nonnegative")
    phi = as_observable(phi)
    if f.space.size**n > cap:
        if not samples:
            raise EnumerationCapError(f"{f.space.size}^{n} words exceeds cap {cap}; enable sampling")
        return _sampled_kernel(f, n, phi, x, samples, seed, convention)
    acc = _Accumulator()
    for full, pad, logs in _kernel_batches(f, n, x, convention, cap):
        acc.add(logs, phi(full, pad))
    value = acc.num / acc.den
    log_num = math.log(abs(acc.num)) + acc.shift if acc.num else -math.inf
    return KernelValue(n, x, value, log_num, math.log(acc.den) + acc.shift, observable=phi)


def kernel_marginal(
    f: Potential, n: int, m: int, x: Configuration, *, cap: int = DEFAULT_ENUMERATION_CAP, convention: str = PROBABILITY
) -> np.ndarray:
    """K_n([x_1..x_m = w], x) for every word w of length m <= n, in one pass."""
    if not 0 <= m <= n:
        raise KernelError("marginal memory must satisfy 0 <= m <= n")
    acc = _Accumulator(bins=f.space.size**m)
    for full, _, logs in _kernel_batches(f, n, x, convention, cap):
        acc.add(logs, bin_index=word_index(full[:, :m], f.space.size))
    return acc.bins / acc.den


# ---------------------------------------------------------------------------
# exact identities

def dlr_residual(
    f: Potential, n: int, r: int, phi, x: Configuration, *, cap: int = DEFAULT_ENUMERATION_CAP, convention: str = PROBABILITY
) -> float:
    """|K_{n+r}(phi, x) - K_{n+r}(K_n(phi, .), x)|.

    K_n(phi, y) depends on y only through sigma^n y, so the inner kernel is
    tabulated once per word (y_{n+1}, ..., y_{n+r}).
    """
    if n < 1 or r < 1:
        raise KernelError("n and r must be >= 1")
    phi = as_observable(phi)
    size = f.space.size
    outer_tail = shift(x, n + r)
    inner = np.empty(size**r)
    for idx, t in enumerate(word_blocks(size, r, block=size**r, cap=cap).__next__()):
        y = Configuration(f.space, (0,) * n + tuple(int(v) for v in t) + outer_tail.prefix, outer_tail.pad)
        inner[idx] = kernel_value(f, n, phi, y, cap=cap, convention=convention).value

    def psi(words, pad):
        w = pad_to(np.asarray(words), pad, n + r)
        return inner[word_index(w[:, n : n + r], size)]

    direct = kernel_value(f, n + r, phi, x, cap=cap, convention=convention).value
    nested = kernel_value(f, n + r, psi, x, cap=cap, convention=convention).value
    return abs(direct - nested)


def properness_check(
    f: Potential, n: int, psi, x: Configuration, *, tol: float = 1e-12, cap: int = DEFAULT_ENUMERATION_CAP, convention: str = PROBABILITY
) -> float:
    """|K_n(psi, x) - psi(x)| for psi measurable with respect to coordinates > n.

    Raises when psi varies with the first n coordinates on the enumerated
    configurations (a, sigma^n x).
    """
    psi = as_observable(psi)
    lo, hi = math.inf, -math.inf
    for full, pad, _ in _kernel_batches(f, n, x, convention, cap):
        vals = psi(full, pad)
        lo, hi = min(lo, float(vals.min())), max(hi, float(vals.max()))
    if hi - lo > tol * max(1.0, abs(hi), abs(lo)):
        raise KernelError(f"observable depends on the first {n} coordinates (spread {hi - lo:g})")
    here = float(psi(x.words(max(len(x), n)), x.pad)[0])
    return abs(kernel_value(f, n, psi, x, cap=cap, convention=convention).value - here)


# ---------------------------------------------------------------------------
# probes

@dataclass(frozen=True)
class ProbeTrace:
    """A diagnostic across an index (i or depth); rows are (index, value, stderr)."""

    kind: str
    entries: list
    trend: str
    power_slope: float | None = None
    exp_rate: float | None = None
    witnesses: list | None = None

    @property
    def values(self) -> list[float]:
        return [v for _, v, _ in self.entries]

    def csv_rows(self) -> list[tuple]:
        return list(self.entries)


def _fit_rates(index, values) -> tuple[float | None, float | None]:
    idx = np.asarray(index, dtype=float)
    val = np.asarray(values, dtype=float)
    ok = val > 0
    if ok.sum() < 3:
        return None, None
    lv = np.log(val[ok])
    power = float(np.polyfit(np.log(idx[ok]), lv, 1)[0])
    rate = float(np.polyfit(idx[ok], lv, 1)[0])
    return power, rate


def strong_non_null_probe(
    f: Potential,
    i_max: int,
    a: int,
    boundaries: Iterable[Configuration],
    *,
    cap: int = DEFAULT_ENUMERATION_CAP,
    samples: int | None = None,
    seed: int | None = None,
    convention: str = PROBABILITY,
) -> ProbeTrace:
    """inf over boundaries of K_i(C_i(a), x) for i = 1..i_max.

    A vanishing infimum is only ever reported as a decay trend with fitted
    power-law and exponential rates.
    """
    boundaries = list(boundaries)
    if not boundaries:
        raise KernelError("need at least one boundary configuration")
    entries, witnesses = [], []
    for i in range(1, i_max + 1):
        best = None
        for x in boundaries:
            kv = kernel_value(f, i, CylinderSet.single(i, a), x, cap=cap, samples=samples, seed=seed, convention=convention)
            if best is None or kv.value < best.value:
                best = kv
        entries.append((i, best.value, best.stderr))
        witnesses.append(best.boundary)
    vals = [v for _, v, _ in entries]
    power, rate = _fit_rates(range(1, i_max + 1), vals)
    return ProbeTrace("strong_non_null", entries, trend_label(vals), power, rate, witnesses)


def quasilocality_probe(
    f: Potential, n: int, phi, x: Configuration, depth: int, tail_set: Iterable[Configuration], *, cap: int = DEFAULT_ENUMERATION_CAP
) -> float:
    """max over tail_set of |K_n(phi, x) - K_n(phi, x')|; x' must agree with x up to ``depth``."""
    phi = as_observable(phi)
    base = kernel_value(f, n, phi, x, cap=cap).value
    worst = 0.0
    for y in tail_set:
        if y.head(depth) != x.head(depth):
            raise KernelError("tail configuration disagrees with the base point within the depth")
        worst = max(worst, abs(kernel_value(f, n, phi, y, cap=cap).value - base))
    return worst


def quasilocality_trace(
    f: Potential,
    n: int,
    phi,
    x: Configuration,
    depths: Sequence[int],
    *,
    random_tails: int = 8,
    seed: int = 0,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> ProbeTrace:
    """Oscillation of K_n(phi, .) over configurations agreeing with x up to each depth.

    Tail sets are nested (the set for depth d holds every modification at
    depths >= d), so the trace is nonincreasing by construction.
    """
    depths = sorted(depths)
    tails = tail_candidates(f.space, random_tails, seed=seed)
    phi = as_observable(phi)
    base = kernel_value(f, n, phi, x, cap=cap).value
    per_depth = []
    for d in depths:
        per_depth.append(max(abs(kernel_value(f, n, phi, x.with_tail(d, t), cap=cap).value - base) for t in tails))
    entries = []
    running = 0.0
    for d, osc in reversed(list(zip(depths, per_depth))):
        running = max(running, osc)
        entries.append((d, running, 0.0))
    entries.reverse()
    vals = [v for _, v, _ in entries]
    power, rate = _fit_rates(depths, vals)
    return ProbeTrace("quasilocality", entries, trend_label(vals), power, rate)


@dataclass(frozen=True)
class RatioEstimate:
    c_estimate: float
    worst_pair: tuple | None
    undefined_pairs: list


def uniqueness_ratio_probe(
    f: Potential,
    cylinder: CylinderSet,
    n: int,
    pairs: Iterable[tuple[Configuration, Configuration]],
    *,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> RatioEstimate:
    """min over pairs (both orders) of K_n(F, x) / K_n(F, y).

    Supports the uniqueness hypothesis K_n(F, x) >= c K_n(F, y) on the
    sample; it can refute but never certify it.
    """
    if n < cylinder.max_coordinate:
        raise KernelError("n must reach the largest constrained coordinate of the cylinder")
    cache: dict = {}

    def k(z: Configuration) -> float:
        key = (z.prefix, z.pad)
        if key not in cache:
            cache[key] = kernel_value(f, n, cylinder, z, cap=cap).value
        return cache[key]

    best, worst, undefined = math.inf, None, []
    for x, y in pairs:
        for p, q in ((x, y), (y, x)):
            kq = k(q)
            if kq == 0.0:
                undefined.append((p, q))
                continue
            ratio = k(p) / kq
            if ratio < best:
                best, worst = ratio, (p, q)
    return RatioEstimate(best, worst, undefined)
