"""Time sets as finite unions of closed intervals, and density sequences.

A :class:`TimeSet` stands in for the measurable control support ``E`` in
``[0, horizon]``.  Everything the rest of the package needs from it reduces
to lengths of intersections and exponentially weighted lengths, both of
which are available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TimeSet",
    "DensitySequence",
    "DensityReport",
    "measure",
    "shift",
    "exp_weight_integral",
    "build_density_sequence",
    "verify_density_sequence",
]


@dataclass(frozen=True)
class TimeSet:
    """Sorted union of disjoint closed intervals inside ``[0, horizon]``.

    Overlapping or touching input intervals are merged.  An empty set is
    allowed (a shift can push every component out of range) and is reported
    through :attr:`is_empty`.
    """

    intervals: np.ndarray
    horizon: float

    def __post_init__(self):
        iv = np.asarray(self.intervals, dtype=float).reshape(-1, 2)
        horizon = float(self.horizon)
        if not np.isfinite(horizon) or horizon < 0:
            raise ValueError(f"horizon must be a nonnegative finite number, got {horizon}")
        if np.any(~np.isfinite(iv)):
            raise ValueError("interval endpoints must be finite")
        if np.any(iv[:, 1] < iv[:, 0]):
            raise ValueError("every interval needs start <= end")
        if np.any(iv[:, 0] < 0) or np.any(iv[:, 1] > horizon):
            raise ValueError(f"intervals must lie inside [0, {horizon}]")
        iv = iv[iv[:, 1] > iv[:, 0]]
        iv = iv[np.argsort(iv[:, 0], kind="stable")]
        merged: list[list[float]] = []
        for a, b in iv:
            if merged and a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        arr = np.array(merged, dtype=float).reshape(-1, 2)
        arr.setflags(write=False)
        object.__setattr__(self, "intervals", arr)
        object.__setattr__(self, "horizon", horizon)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]], horizon: float | None = None) -> "TimeSet":
        """Build from ``[[start, end], ...]``; horizon defaults to the last end."""
        arr = np.asarray(list(pairs), dtype=float).reshape(-1, 2)
        if horizon is None:
            horizon = float(arr[:, 1].max()) if len(arr) else 0.0
        return cls(arr, horizon)

    @classmethod
    def full(cls, horizon: float) -> "TimeSet":
        return cls(np.array([[0.0, horizon]]), horizon)

    @property
    def is_empty(self) -> bool:
        return len(self.intervals) == 0

    @property
    def measure(self) -> float:
        return float(np.sum(self.intervals[:, 1] - self.intervals[:, 0]))

    def clip(self, a: float, b: float) -> np.ndarray:
        """Components of ``E ∩ [a, b]`` with positive length, as an ``(n, 2)`` array."""
        lo = np.maximum(self.intervals[:, 0], a)
        hi = np.minimum(self.intervals[:, 1], b)
        keep = hi > lo
        return np.column_stack([lo[keep], hi[keep]])

    def measure_in(self, a: float, b: float) -> float:
        c = self.clip(a, b)
        return float(np.sum(c[:, 1] - c[:, 0]))

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=bool)
        for a, b in self.intervals:
            out |= (t >= a) & (t <= b)
        return out

    def to_list(self) -> list[list[float]]:
        return [[float(a), float(b)] for a, b in self.intervals]

    def __len__(self):
        return len(self.intervals)


def measure(E: TimeSet) -> float:
    """Lebesgue measure of ``E``."""
    return E.measure


def shift(E: TimeSet, delta: float) -> TimeSet:
    """The set ``{t : t + delta in E}`` clipped to ``[0, horizon - delta]``."""
    delta = float(delta)
    if delta < 0:
        raise ValueError("shift amount must be nonnegative")
    if delta > E.horizon:
        raise ValueError(f"shift {delta} exceeds the horizon {E.horizon}")
    if delta == 0.0:
        return E
    new_horizon = E.horizon - delta
    iv = E.intervals - delta
    lo = np.clip(iv[:, 0], 0.0, new_horizon)
    hi = np.clip(iv[:, 1], 0.0, new_horizon)
    keep = hi > lo
    return TimeSet(np.column_stack([lo[keep], hi[keep]]), new_horizon)


def exp_weight_integral(E: TimeSet, window: tuple[float, float], mu):
    """Closed form of ``∫_{E ∩ [a, b]} exp(-mu (b - t)) dt``.

    ``mu`` may be a scalar or an array of nonnegative rates; the result has
    the same shape.  Each component ``[c, d]`` contributes
    ``exp(-mu (b - d)) (1 - exp(-mu (d - c))) / mu``, and ``d - c`` when
    ``mu == 0``.
    """
    a, b = float(window[0]), float(window[1])
    if b < a:
        raise ValueError("window must satisfy a <= b")
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise ValueError("rates must be nonnegative")
    comps = E.clip(a, b)
    out = np.zeros(mu.shape)
    if len(comps) == 0:
        return out if out.ndim else float(out)
    safe = np.where(mu > 0, mu, 1.0)
    for c, d in comps:
        length = d - c
        decay = np.exp(-mu * (b - d))
        # -expm1 keeps full relative accuracy when mu * length is small
        piece = np.where(mu > 0, decay * (-np.expm1(-mu * length)) / safe, length)
        out = out + piece
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DensitySequence:
    """Finite prefix ``t_1 < ... < t_n < t_tilde`` with certified ``rho`` and ``C0``.

    ``gaps[i] = t_{i+2} - t_{i+1}`` is stored separately from ``points`` so
    that shifting the sequence leaves the gaps bitwise unchanged.  ``span``
    is ``t_tilde - t_1`` (also shift-invariant) and ``delta0`` is the ``t_1``
    of the unshifted sequence.
    """

    t_tilde: float
    points: np.ndarray
    gaps: np.ndarray
    span: float
    rho: float
    c0: float
    delta0: float
    offset: float = 0.0
    anchor: tuple[float, float] | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("points", "gaps"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_points(cls, points, t_tilde: float, E: TimeSet,
                    rho: float | None = None, c0: float | None = None) -> "DensitySequence":
        """Wrap a hand-made sequence.

        ``rho`` and ``C0`` are measured on ``E`` unless given explicitly, in
        which case :func:`verify_density_sequence` may well reject them.
        """
        pts = np.asarray(points, dtype=float)
        gaps = np.diff(pts)
        m_rho, m_c0 = _measure_rho_c0(pts, gaps, E)
        rho = m_rho if rho is None else float(rho)
        c0 = m_c0 if c0 is None else float(c0)
        return cls(float(t_tilde), pts, gaps, float(t_tilde) - float(pts[0]), rho, c0, float(pts[0]))

    @property
    def depth(self) -> int:
        return len(self.points)

    @property
    def max_stages(self) -> int:
        """Number of complete ``I_N ∪ J_N`` pairs the prefix supports."""
        return (len(self.points) - 1) // 2

    def stage_windows(self, n: int) -> tuple[tuple[float, float], tuple[float, float]]:
        """``I_N = [t_{2N-1}, t_{2N}]`` and ``J_N = [t_{2N}, t_{2N+1}]`` (1-based ``n``)."""
        if not 1 <= n <= self.max_stages:
            raise IndexError(f"stage {n} not covered by a prefix of depth {self.depth}")
        p = self.points
        return (p[2 * n - 2], p[2 * n - 1]), (p[2 * n - 1], p[2 * n])

    def shifted(self, delta: float) -> "DensitySequence":
        """``t_{N,delta} = t_N - delta``; gaps, span, rho, C0 and delta0 carried over."""
        delta = float(delta)
        if delta < 0:
            raise ValueError("shift amount must be nonnegative")
        if delta > self.points[0] + 1e-15:
            raise ValueError(f"shift {delta} exceeds t_1 = {self.points[0]}")
        if delta == 0.0:
            return self
        anchor = None if self.anchor is None else (self.anchor[0] - delta, self.anchor[1] - delta)
        return DensitySequence(
            self.t_tilde - delta, self.points - delta, self.gaps, self.span,
            self.rho, self.c0, self.delta0, self.offset + delta, anchor,
        )


@dataclass
class DensityReport:
    increasing: bool
    density: bool
    ratio: bool
    gaps_consistent: bool
    tightest_rho: float
    tightest_c0: float
    failures: list[tuple[str, int]]

    @property
    def ok(self) -> bool:
        return self.increasing and self.density and self.ratio and self.gaps_consistent


def _measure_rho_c0(points: np.ndarray, gaps: np.ndarray, E: TimeSet) -> tuple[float, float]:
    if len(gaps) == 0:
        return 1.0, 1.0
    dens = np.array([E.measure_in(points[i], points[i + 1]) for i in range(len(gaps))]) / gaps
    rho = float(min(1.0, dens.min()))
    c0 = float(max(1.0, np.max(gaps[:-1] / gaps[1:]))) if len(gaps) > 1 else 1.0
    return rho, c0


def _pick_component(E: TimeSet, anchor) -> tuple[float, float]:
    if E.is_empty:
        raise ValueError("time set has no component of positive length")
    if anchor is None or anchor == "longest":
        lengths = E.intervals[:, 1] - E.intervals[:, 0]
        k = int(np.argmax(lengths))
    elif isinstance(anchor, (int, np.integer)):
        k = int(anchor)
        if not 0 <= k < len(E):
            raise ValueError(f"anchor index {k} out of range for {len(E)} components")
    else:
        raise ValueError(f"unknown anchor policy {anchor!r}")
    c, d = E.intervals[k]
    return float(c), float(d)


def build_density_sequence(
    E: TimeSet,
    q: float = 0.5,
    depth: int = 16,
    anchor=None,
    start_fraction: float = 0.5,
    margin: float = 0.0,
    lambda1: float = np.pi**2,
    t1: float | None = None,
) -> DensitySequence:
    """Geometric density sequence inside one component ``[c, d]`` of ``E``.

    ``t_tilde = d - margin``, ``t_1 = c + (d - c) * start_fraction`` and
    ``t_i = t_tilde - (t_tilde - t_1) q**(i-1)``.  ``t_1`` is pulled towards
    ``t_tilde`` when needed so that ``t_tilde - t_1 <= min(lambda1, 1)``.

    Parameters
    ----------
    E : TimeSet
    q : float
        Contraction ratio in (0, 1); the certified ``C0`` is ``1/q``.
    depth : int
        Number of points in the finite prefix.
    anchor : None, "longest" or int
        Component selection; index into ``E.intervals`` when an int.
    start_fraction, margin : float
        Placement of ``t_1`` and ``t_tilde`` within the component.
    lambda1 : float
        First Dirichlet eigenvalue entering the side condition.
    t1 : float, optional
        Explicit first point; overrides ``start_fraction``.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    if depth < 2:
        raise ValueError("depth must be at least 2")
    if not 0.0 <= start_fraction < 1.0:
        raise ValueError("start_fraction must lie in [0, 1)")
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    c, d = _pick_component(E, anchor)
    t_tilde = d - margin
    if t1 is None:
        t1 = c + (d - c) * start_fraction
    cap = min(lambda1, 1.0)
    if t_tilde - t1 > cap:
        t1 = t_tilde - cap
    span = t_tilde - t1
    if not span > 0 or t1 < c:
        raise ValueError(
            f"cannot place a density sequence in [{c}, {d}] with margin {margin}"
        )
    powers = q ** np.arange(depth, dtype=float)
    points = t_tilde - span * powers
    points[0] = t1
    gaps = span * powers[:-1] * (1.0 - q)
    if not (np.all(np.diff(points) > 0) and points[-1] < t_tilde):
        raise ValueError(f"depth {depth} with q = {q} exceeds double-precision resolution near t_tilde")
    # the prefix lies inside [c, d] and is geometric: rho = 1 and C0 = 1/q exactly
    return DensitySequence(t_tilde, points, gaps, span, 1.0, 1.0 / q, float(t1), 0.0, (c, d))


def verify_density_sequence(seq: DensitySequence, E: TimeSet, rel_tol: float = 1e-12) -> DensityReport:
    """Check monotonicity, proportional density and bounded gap ratios on the prefix.

    Reports the offending indices (0-based, counted from ``t_1``) and the
    tightest ``rho`` and ``C0`` that the prefix actually supports.
    """
    pts, gaps = seq.points, seq.gaps
    failures: list[tuple[str, int]] = []
    increasing = True
    for i in range(len(pts) - 1):
        if not pts[i + 1] > pts[i]:
            increasing = False
            failures.append(("increasing", i))
    if not pts[-1] < seq.t_tilde:
        increasing = False
        failures.append(("below_t_tilde", len(pts) - 1))
    consistent = len(gaps) == len(pts) - 1 and bool(
        np.allclose(gaps, np.diff(pts), rtol=1e-9, atol=1e-14 * max(1.0, abs(seq.t_tilde)))
    )
    if not consistent:
        failures.append(("gaps", -1))
    masses = np.array([E.measure_in(pts[i], pts[i + 1]) for i in range(len(gaps))])
    dens = masses / gaps
    # endpoints carry absolute rounding error, which dominates on the tiny late gaps
    atol = 8.0 * np.finfo(float).eps * max(1.0, abs(seq.t_tilde))
    density = True
    for i, m in enumerate(masses):
        if m < seq.rho * gaps[i] * (1.0 - rel_tol) - atol:
            density = False
            failures.append(("density", i))
    ratios = gaps[:-1] / gaps[1:] if len(gaps) > 1 else np.array([1.0])
    ratio = True
    for i, v in enumerate(ratios):
        if v > seq.c0 * (1.0 + rel_tol):
            ratio = False
            failures.append(("ratio", i))
    return DensityReport(
        increasing=increasing,
        density=density,
        ratio=ratio,
        gaps_consistent=consistent,
        tightest_rho=float(min(1.0, dens.min())) if len(dens) else 1.0,
        tightest_c0=float(ratios.max()),
        failures=failures,
    )
