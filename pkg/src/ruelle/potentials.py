"""Potentials f: M^N -> R, Birkhoff sums, local truncations and variation moduli.

A potential is evaluated on batches of eventually constant configurations:
an integer array ``words`` of shape ``(K, L)`` plus a pad index ``pad``
stands for the K points ``(w_1, ..., w_L, pad, pad, ...)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from ruelle.configuration import (
    DEFAULT_ENUMERATION_CAP,
    Configuration,
    EnumerationCapError,
    pad_to,
    word_array,
    word_index,
)
from ruelle.state_space import StateSpace

Evaluator = Callable[[np.ndarray, int], np.ndarray]


class PotentialError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Potential:
    """A continuous potential with locality metadata.

    ``memory`` is the smallest k such that f depends on x_1..x_k only, or
    ``None`` when f has infinite range. ``sup_norm`` is an upper bound on
    ``max |f|``. ``birkhoff`` optionally overrides the generic Birkhoff sum
    with a faster exact routine.
    """

    name: str
    space: StateSpace
    evaluator: Evaluator
    memory: int | None
    sup_norm: float
    params: dict = field(default_factory=dict)
    birkhoff: Callable[[np.ndarray, int, int], np.ndarray] | None = None
    truncation_gap: float | None = None

    def __call__(self, words: np.ndarray, pad: int) -> np.ndarray:
        return self.evaluate_words(words, pad)

    def evaluate_words(self, words: np.ndarray, pad: int) -> np.ndarray:
        words = np.asarray(words, dtype=np.int64)
        if words.ndim != 2:
            raise PotentialError("words must be a 2-d index array")
        if self.memory is not None:
            words = pad_to(words, pad, self.memory)
        return np.asarray(self.evaluator(words, pad), dtype=float)

    def birkhoff_words(self, words: np.ndarray, pad: int, n: int) -> np.ndarray:
        """S_n f at every configuration of the batch."""
        words = np.asarray(words, dtype=np.int64)
        if n <= 0:
            return np.zeros(words.shape[0])
        if self.birkhoff is not None:
            return self.birkhoff(words, pad, n)
        width = words.shape[1]
        total = np.zeros(words.shape[0])
        for j in range(min(n, width)):
            total += self.evaluate_words(words[:, j:], pad)
        if n > width:
            fixed = self.evaluate_words(np.zeros((1, 0), dtype=np.int64), pad)[0]
            total += (n - width) * fixed
        return total

    @property
    def is_local(self) -> bool:
        return self.memory is not None


def _check_space(f: Potential, space: StateSpace) -> None:
    if not f.space.same_as(space):
        raise PotentialError(f"potential {f.name!r} is defined on a different alphabet")


def evaluate(f: Potential, x: Configuration) -> float:
    _check_space(f, x.space)
    return float(f.evaluate_words(x.words(), x.pad)[0])


def birkhoff_sum(f: Potential, x: Configuration, n: int) -> float:
    """S_n f(x) = f(x) + f(sigma x) + ... + f(sigma^{n-1} x)."""
    if n < 0:
        raise PotentialError("n must be nonnegative")
    _check_space(f, x.space)
    return float(f.birkhoff_words(x.words(), x.pad, n)[0])


# ---------------------------------------------------------------------------
# zeta and tail sums

def _em_tail(s: float, start: int) -> tuple[float, float]:
    """Euler-Maclaurin estimate of sum_{k>=start} k^-s and its error bound."""
    n = float(start)
    est = n ** (1 - s) / (s - 1) + 0.5 * n**-s + s * n ** (-s - 1) / 12.0
    est -= s * (s + 1) * (s + 2) * n ** (-s - 3) / 720.0
    # First omitted term bounds the remainder: x^-s has derivatives of alternating sign.
    err = s * (s + 1) * (s + 2) * (s + 3) * (s + 4) * n ** (-s - 5) / 30240.0
    return est, err


def zeta_tail(s: float, n: int, tol: float = 1e-14) -> float:
    """sum_{k>n} k^-s with certified absolute error below ``tol``."""
    if not s > 1:
        raise PotentialError(f"zeta tail diverges for s={s} <= 1")
    if tol <= 0:
        raise PotentialError("tol must be positive")
    start = n + 1
    cut = max(start, 8)
    while True:
        est, err = _em_tail(s, cut)
        if err < tol / 2:
            break
        cut *= 2
    head = math.fsum(k**-s for k in range(start, cut))
    return head + est


def zeta(s: float, tol: float = 1e-14) -> float:
    """Riemann zeta for real s > 1, error below ``tol``."""
    return zeta_tail(s, 0, tol)


# ---------------------------------------------------------------------------
# constructors

def make_constant(space: StateSpace, c: float) -> Potential:
    c = float(c)
    return Potential(
        "constant", space, lambda w, pad: np.full(w.shape[0], c), 0, abs(c), {"c": c}
    )


def make_single_site(space: StateSpace, beta: float) -> Potential:
    """f(x) = beta * x_1 on a scalar alphabet."""
    c = float(beta) * space.scalar_coords
    return Potential(
        "single_site", space, lambda w, pad: c[w[:, 0]], 1, float(np.abs(c).max()), {"beta": float(beta)}
    )


def make_ising(space: StateSpace, beta: float) -> Potential:
    """Nearest-neighbour coupling f(x) = beta <x_1, x_2>.

    On {-1,+1} this is the Ising potential beta x_1 x_2; on a circle it is the
    XY coupling beta cos(theta_1 - theta_2).
    """
    coupling = float(beta) * (space.coords @ space.coords.T)
    return Potential(
        "ising", space, lambda w, pad: coupling[w[:, 0], w[:, 1]], 2, float(np.abs(coupling).max()), {"beta": float(beta)}
    )


def make_table(space: StateSpace, memory: int, values, name: str = "table") -> Potential:
    """Finite-memory potential given by its values on all words of length ``memory``."""
    values = np.array(values, dtype=float).reshape(-1)
    if memory < 0 or values.size != space.size**memory:
        raise PotentialError(f"table needs {space.size}**{memory} values, got {values.size}")
    values.setflags(write=False)
    size = space.size

    def evaluator(w, pad):
        return values[word_index(w[:, :memory], size)]

    return Potential(name, space, evaluator, memory, float(np.abs(values).max()), {"memory": memory})


def random_table(space: StateSpace, memory: int, seed: int, scale: float = 1.0) -> Potential:
    """Seeded finite-memory potential with values uniform in [-scale, scale]."""
    rng = np.random.default_rng(seed)
    values = rng.uniform(-scale, scale, size=space.size**memory)
    f = make_table(space, memory, values, name="random_table")
    f.params.update({"seed": seed, "scale": scale})
    return f


def make_geometric(space: StateSpace, beta: float, theta: float) -> Potential:
    """f(x) = beta * sum_k theta^(k-1) x_k, a Holder potential for 0 < theta < 1."""
    if not 0 < theta < 1:
        raise PotentialError("theta must lie in (0, 1)")
    c = float(beta) * space.scalar_coords

    def evaluator(w, pad):
        width = w.shape[1]
        if width == 0:
            return np.full(w.shape[0], c[pad] / (1 - theta))
        powers = theta ** np.arange(width)
        return c[w] @ powers + c[pad] * theta**width / (1 - theta)

    return Potential(
        "geometric", space, evaluator, None, float(np.abs(c).max()) / (1 - theta),
        {"beta": float(beta), "theta": float(theta)},
    )


def make_long_range(space: StateSpace, gamma: float, tol: float = 1e-15) -> Potential:
    """f(x) = sum_k x_k / k^gamma; the pad tail is summed in closed form."""
    if not gamma > 1:
        raise PotentialError(f"long-range potential needs gamma > 1, got {gamma}")
    c = space.scalar_coords
    z = zeta(gamma, tol)
    tails: dict[int, float] = {}

    def tail(m: int) -> float:
        if m not in tails:
            tails[m] = zeta_tail(gamma, m, tol)
        return tails[m]

    def evaluator(w, pad):
        width = w.shape[1]
        if width == 0:
            return np.full(w.shape[0], c[pad] * z)
        coeff = np.arange(1, width + 1, dtype=float) ** -gamma
        return c[w] @ coeff + c[pad] * tail(width)

    return Potential(
        "long_range", space, evaluator, None, float(np.abs(c).max()) * z, {"gamma": float(gamma)}
    )


# Double Hofbauer ------------------------------------------------------------

def _run_lengths_from_start(w: np.ndarray, pad: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """First symbol, length of its initial run, and whether the run is infinite."""
    k, width = w.shape
    if width == 0:
        return np.full(k, pad), np.full(k, -1), np.ones(k, dtype=bool)
    first = w[:, 0]
    same = w == first[:, None]
    run = np.cumprod(same, axis=1).sum(axis=1)
    infinite = (run == width) & (first == pad)
    return first, run, infinite


def make_double_hofbauer(space: StateSpace, gamma: float, delta: float, strict: bool = False) -> Potential:
    """Double Hofbauer potential on {0,1}^N (point index 0 is symbol 0).

    Values: -gamma log(n/(n-1)) on L_n = [0^n 1], -delta log(n/(n-1)) on
    R_n = [1^n 0] for n >= 2; -log zeta(gamma) on L_1, -log zeta(delta) on R_1;
    0 at the fixed points 0^inf and 1^inf.
    """
    if space.size != 2:
        raise PotentialError("Double Hofbauer lives on a two-letter alphabet")
    if not (gamma > 1 and delta > 1):
        raise PotentialError(f"Double Hofbauer needs gamma, delta > 1 (got {gamma}, {delta})")
    if strict and not delta < gamma:
        raise PotentialError("strict mode requires delta < gamma")
    gamma, delta = float(gamma), float(delta)
    first_l = -math.log(zeta(gamma))
    first_r = -math.log(zeta(delta))
    exps = np.array([gamma, delta])
    firsts = np.array([first_l, first_r])

    def value(symbol: np.ndarray, run: np.ndarray, infinite: np.ndarray) -> np.ndarray:
        out = np.zeros(symbol.shape[0])
        finite = ~infinite
        r = run[finite].astype(float)
        s = symbol[finite]
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(r >= 2, -exps[s] * np.log(r / np.maximum(r - 1, 1)), firsts[s])
        out[finite] = v
        return out

    def evaluator(w, pad):
        return value(*_run_lengths_from_start(w, pad))

    def birkhoff(w, pad, n):
        k, width = w.shape
        total = np.zeros(k)
        if width:
            # run[:, j] = length of the run starting at position j, computed right to left
            run = np.empty((k, width), dtype=np.int64)
            infinite = np.empty((k, width), dtype=bool)
            last = w[:, width - 1]
            infinite[:, width - 1] = last == pad
            run[:, width - 1] = 1
            for j in range(width - 2, -1, -1):
                same = w[:, j] == w[:, j + 1]
                run[:, j] = np.where(same, run[:, j + 1] + 1, 1)
                infinite[:, j] = same & infinite[:, j + 1]
            for j in range(min(n, width)):
                total += value(w[:, j], run[:, j], infinite[:, j])
        # shifts past the prefix land on the fixed point pad^inf, where f = 0
        return total

    sup = max(abs(first_l), abs(first_r), gamma * math.log(2), delta * math.log(2))
    return Potential(
        "double_hofbauer", space, evaluator, None, sup,
        {"gamma": gamma, "delta": delta, "strict": strict}, birkhoff=birkhoff,
    )


def shifted(f: Potential, c: float) -> Potential:
    """f + c."""
    c = float(c)
    birk = None
    if f.birkhoff is not None:
        birk = lambda w, pad, n: f.birkhoff(w, pad, n) + n * c  # noqa: E731
    return Potential(
        f"{f.name}+const", f.space, lambda w, pad: f.evaluator(w, pad) + c, f.memory,
        f.sup_norm + abs(c), {**f.params, "shift": c}, birkhoff=birk,
    )


# ---------------------------------------------------------------------------
# truncation and variation

class VariationEstimate(NamedTuple):
    k: int
    value: float
    method: str  # "exhaustive" or "sampled"
    seed: int | None
    trials: int
    lower_bound: bool


def tail_candidates(space: StateSpace, random_tails: int = 0, length: int = 24, seed: int | None = None) -> list[Configuration]:
    """Every pure-pad tail, followed by seeded random tails."""
    tails = [Configuration(space, (), p) for p in range(space.size)]
    if random_tails:
        if seed is None:
            raise ValueError("random tails need a seed")
        rng = np.random.default_rng(seed)
        for _ in range(random_tails):
            prefix = rng.choice(space.size, size=length, p=space.weights)
            tails.append(Configuration(space, tuple(prefix), int(rng.integers(space.size))))
    return tails


def _tail_batch(prefixes: np.ndarray, tails: list[Configuration]) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate every prefix with every tail; rows grouped by prefix."""
    k, n = prefixes.shape
    tail_len = max(len(t) for t in tails)
    block = np.empty((k, len(tails), n + tail_len), dtype=np.int64)
    pads = np.array([t.pad for t in tails])
    block[:, :, :n] = prefixes[:, None, :]
    for j, t in enumerate(tails):
        block[:, j, n:] = np.array(t.head(tail_len), dtype=np.int64)
    return block, pads


def evaluate_on_tails(f: Potential, prefixes: np.ndarray, tails: list[Configuration], n_birkhoff: int | None = None) -> np.ndarray:
    """f (or S_n f) at prefix.tail for each prefix row and tail; shape (K, T)."""
    block, pads = _tail_batch(prefixes, tails)
    out = np.empty(block.shape[:2])
    for j, pad in enumerate(pads):
        if n_birkhoff is None:
            out[:, j] = f.evaluate_words(block[:, j, :], int(pad))
        else:
            out[:, j] = f.birkhoff_words(block[:, j, :], int(pad), n_birkhoff)
    return out


def variation_estimate(
    f: Potential,
    k: int,
    method: str = "exhaustive",
    *,
    random_tails: int = 8,
    trials: int = 2000,
    seed: int | None = 0,
    cap: int = 1 << 16,
) -> VariationEstimate:
    """Lower bound on var_k(f) = sup{|f(x) - f(y)| : x_i = y_i, i <= k}.

    Shared prefixes are enumerated (``exhaustive``) or drawn at random
    (``sampled``); tails come from :func:`tail_candidates`.
    """
    if k < 1:
        raise PotentialError("k must be >= 1")
    if f.memory is not None and f.memory <= k:
        return VariationEstimate(k, 0.0, "exhaustive", None, 0, False)
    size = f.space.size
    if method == "exhaustive":
        if size**k > cap:
            raise EnumerationCapError(f"{size}^{k} prefixes exceeds the variation cap {cap}")
        prefixes = word_array(size, k)
        used = 0
    elif method == "sampled":
        if seed is None:
            raise ValueError("sampled variation needs a seed")
        rng = np.random.default_rng(seed)
        prefixes = rng.integers(size, size=(trials, k))
        used = trials
    else:
        raise PotentialError(f"unknown method {method!r}")
    tails = tail_candidates(f.space, random_tails, seed=seed)
    vals = evaluate_on_tails(f, prefixes, tails)
    value = float((vals.max(axis=1) - vals.min(axis=1)).max())
    return VariationEstimate(k, value, method, seed, used, True)


def truncation_gap(f: Potential, m: int, pad: int, *, random_tails: int = 8, seed: int = 0, cap: int = 1 << 16) -> float:
    """Estimate of ||f_m - f||_inf, max over prefixes and tail candidates."""
    if f.memory is not None and f.memory <= m:
        return 0.0
    size = f.space.size
    if size**m <= cap:
        prefixes = word_array(size, m)
    else:
        rng = np.random.default_rng(seed)
        prefixes = rng.integers(size, size=(cap, m))
    tails = tail_candidates(f.space, random_tails, seed=seed)
    vals = evaluate_on_tails(f, prefixes, tails)
    base = f.evaluate_words(prefixes, pad)
    return float(np.abs(vals - base[:, None]).max())


def truncate_local(f: Potential, m: int, pad: int = 0, *, estimate_gap: bool = True) -> Potential:
    """f_m(x) = f(x_1, ..., x_m, pad, pad, ...)."""
    if m < 0:
        raise PotentialError("m must be nonnegative")
    if not 0 <= pad < f.space.size:
        raise PotentialError(f"pad index {pad} outside alphabet")
    if f.memory is not None and f.memory <= m:
        return f

    def evaluator(w, _pad):
        return f.evaluate_words(w[:, :m], pad)

    gap = truncation_gap(f, m, pad) if estimate_gap else None
    return Potential(
        f"{f.name}|{m}", f.space, evaluator, m, f.sup_norm,
        {**f.params, "truncated_at": m, "truncation_pad": pad}, truncation_gap=gap,
    )


def sup_distance(f: Potential, g: Potential, memory: int | None = None, pad: int = 0, *, random_tails: int = 8, seed: int = 0) -> float:
    """||f - g||_inf: exact when both have finite memory, a lower bound otherwise."""
    _check_space(f, g.space)
    if f.memory is not None and g.memory is not None:
        k = max(f.memory, g.memory)
        words = word_array(f.space.size, k)
        return float(np.abs(f.evaluate_words(words, pad) - g.evaluate_words(words, pad)).max())
    if memory is None:
        raise PotentialError("an infinite-range comparison needs a probe memory")
    prefixes = word_array(f.space.size, memory)
    tails = tail_candidates(f.space, random_tails, seed=seed)
    return float(np.abs(evaluate_on_tails(f, prefixes, tails) - evaluate_on_tails(g, prefixes, tails)).max())


def hofbauer_class(x: Configuration) -> tuple[str, int]:
    """('L', n), ('R', n) or ('fixed', symbol) for a configuration on {0,1}."""
    first, run, infinite = _run_lengths_from_start(x.words(), x.pad)
    if infinite[0]:
        return ("fixed", int(first[0]))
    return ("L" if first[0] == 0 else "R", int(run[0]))
