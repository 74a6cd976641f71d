"""One-dimensional contrast expansion on ``(a, b)`` with one inclusion ``(p, q)``.

Two paths are provided:

* an exact path for ``f = 0`` in rational arithmetic (``fractions.Fraction``),
  where every term is piecewise linear with breakpoints ``a, p, q, b``;
* a grid path for piecewise-linear ``f``, using 1D P1 elements and the same
  expansion engine as the 2D code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np
import scipy.sparse as sp

from ._series import DofLayout, ExpansionEngine
from .errors import ConfigError, ConsistencyError, PreconditionError


def _exact(x):
    if isinstance(x, Rational):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"cannot convert {x!r} to an exact number")


@dataclass(frozen=True)
class PiecewiseLinear1D:
    """Continuous piecewise-linear function given by breakpoints and values."""

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        if len(self.breakpoints) != len(self.values) or len(self.breakpoints) < 2:
            raise ValueError("need matching breakpoints and values (at least two)")
        if any(b <= a for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    def __call__(self, x):
        bp, v = self.breakpoints, self.values
        if x < bp[0] or x > bp[-1]:
            raise ValueError(f"x={x} outside [{bp[0]}, {bp[-1]}]")
        for k in range(len(bp) - 1):
            if x <= bp[k + 1]:
                t = (x - bp[k]) / (bp[k + 1] - bp[k])
                return v[k] + t * (v[k + 1] - v[k])
        return v[-1]

    def slopes(self):
        bp, v = self.breakpoints, self.values
        return tuple((v[k + 1] - v[k]) / (bp[k + 1] - bp[k]) for k in range(len(bp) - 1))

    def pieces(self):
        """``(slope, intercept)`` per cell, i.e. ``value = slope * x + intercept``."""
        bp, v = self.breakpoints, self.values
        return tuple((s, v[k] - s * bp[k]) for k, s in enumerate(self.slopes()))

    def __add__(self, other):
        self._check(other)
        return PiecewiseLinear1D(self.breakpoints, tuple(a + b for a, b in zip(self.values, other.values)))

    def __sub__(self, other):
        self._check(other)
        return PiecewiseLinear1D(self.breakpoints, tuple(a - b for a, b in zip(self.values, other.values)))

    def scale(self, s):
        return PiecewiseLinear1D(self.breakpoints, tuple(s * a for a in self.values))

    def _check(self, other):
        if tuple(self.breakpoints) != tuple(other.breakpoints):
            raise ValueError("breakpoints differ")

    def max_abs(self):
        return max(abs(v) for v in self.values)

    def h1_seminorm_sq(self):
        bp = self.breakpoints
        return sum(s * s * (bp[k + 1] - bp[k]) for k, s in enumerate(self.slopes()))

    def l2_norm_sq(self):
        bp, v = self.breakpoints, self.values
        # exact for linear pieces: h/3 (u0^2 + u0 u1 + u1^2)
        return sum((bp[k + 1] - bp[k]) * (v[k] ** 2 + v[k] * v[k + 1] + v[k + 1] ** 2) / 3
                   for k in range(len(bp) - 1))


@dataclass(frozen=True)
class Interval1DSpec:
    """Bar ``(a, b)`` with coefficient ``eta`` on ``(p, q)`` and 1 elsewhere.

    ``source`` is ``None`` (zero), a constant, or a :class:`PiecewiseLinear1D`
    whose breakpoints cover ``[a, b]``.
    """

    a: object
    b: object
    p: object
    q: object
    eta: object
    u_a: object = 0
    u_b: object = 0
    source: object = None

    def __post_init__(self):
        if not (self.a < self.p < self.q < self.b):
            raise ConfigError("need a < p < q < b", "/interval")
        if not self.eta > 1:
            raise ConfigError(f"contrast must exceed 1, got {self.eta}", "/eta")

    @property
    def source_is_zero(self):
        s = self.source
        if s is None:
            return True
        if isinstance(s, PiecewiseLinear1D):
            return all(v == 0 for v in s.values)
        return s == 0

    def exact(self):
        """Same spec with every number converted to ``Fraction``."""
        return Interval1DSpec(*(map(_exact, (self.a, self.b, self.p, self.q, self.eta, self.u_a, self.u_b))),
                              source=self.source)

    def breakpoints(self):
        return (self.a, self.p, self.q, self.b)


def bar_example(eta=10):
    """Bar ``(-2, 2)``, inclusion ``(-1, 1)``, ``u(-2) = 0``, ``u(2) = 4``, no source."""
    return Interval1DSpec(-2, 2, -1, 1, eta, 0, 4)


def exact_solution_1d(spec: Interval1DSpec) -> PiecewiseLinear1D:
    """Closed form ``u(x) = u_a + (u_b - u_a) int_a^x 1/kappa / int_a^b 1/kappa`` for ``f = 0``."""
    if not spec.source_is_zero:
        raise PreconditionError("closed form needs f = 0; use the grid path")
    s = spec.exact()
    w = (s.p - s.a, (s.q - s.p) / s.eta, s.b - s.q)  # int 1/kappa over the three cells
    total = sum(w)
    cum = (0, w[0], w[0] + w[1], total)
    vals = tuple(s.u_a + (s.u_b - s.u_a) * c / total for c in cum)
    return PiecewiseLinear1D(s.breakpoints(), vals)


@dataclass
class Series1D:
    terms: list
    constants: list
    spec: Interval1DSpec = field(repr=False, default=None)

    def partial_sum(self, eta, J):
        acc = self.terms[0]
        for j in range(1, J + 1):
            acc = acc + self.terms[j].scale(Fraction(1) / Fraction(eta) ** j if isinstance(eta, (Rational,))
                                            else eta ** (-j))
        return acc


def expansion_terms_1d(spec: Interval1DSpec, J: int) -> Series1D:
    """Exact terms ``u_0..u_J`` (and balancing constants ``c_0..c_J``) for ``f = 0``.

    Each term is piecewise linear on ``a, p, q, b``. Inside the inclusion the
    slope of ``u_{j+1}`` equals the outer slope of ``u_j`` (flux continuity),
    the term is fixed to mean zero there, extended linearly to zero at ``a`` and
    ``b``, and then shifted by ``c chi`` so that the fluxes at ``p`` and ``q`` balance.
    """
    if not spec.source_is_zero:
        raise PreconditionError("exact path needs f = 0; use expansion_terms_1d_grid")
    s = spec.exact()
    a, p, q, b = s.breakpoints()
    la, lb = p - a, b - q
    A = 1 / la + 1 / lb  # int (chi')^2
    c0 = (s.u_a / la + s.u_b / lb) / A
    u0 = PiecewiseLinear1D((a, p, q, b), (s.u_a, c0, c0, s.u_b))
    terms, consts = [u0], [c0]
    for _ in range(J):
        prev = terms[-1]
        left, _, right = prev.slopes()
        if left != right:
            raise ConsistencyError(f"unbalanced fluxes {left} != {right}")
        mid = (p + q) / 2
        tp, tq = left * (p - mid), left * (q - mid)  # mean-zero tilde term on the inclusion
        # u = tilde + c chi; balance slope on the left with slope on the right
        c = ((-tp) / la - tq / lb) / A
        up, uq = tp + c, tq + c
        nxt = PiecewiseLinear1D((a, p, q, b), (Fraction(0), up, uq, Fraction(0)))
        sl = nxt.slopes()
        if sl[0] != sl[2]:
            raise ConsistencyError("compatibility residual is not zero")
        terms.append(nxt)
        consts.append(c)
    return Series1D(terms, consts, s)


@dataclass(frozen=True)
class Comparison1D:
    eta: object
    max_errors: tuple
    h1_errors: tuple

    def ratios(self):
        e = self.max_errors
        return tuple(e[k + 1] / e[k] for k in range(len(e) - 1) if e[k] != 0)


def compare_1d(spec: Interval1DSpec, J_max: int, etas) -> list:
    """Max-norm and H1-seminorm errors of the partial sums for each contrast (exact path)."""
    out = []
    for eta in etas:
        sp_eta = Interval1DSpec(spec.a, spec.b, spec.p, spec.q, eta, spec.u_a, spec.u_b, spec.source)
        exact = exact_solution_1d(sp_eta)
        series = expansion_terms_1d(sp_eta, J_max)
        e = Fraction(eta) if not isinstance(eta, Fraction) else eta
        maxe, h1e = [], []
        for J in range(J_max + 1):
            diff = exact - series.partial_sum(e, J)
            maxe.append(diff.max_abs())
            h1e.append(diff.h1_seminorm_sq())
        out.append(Comparison1D(eta, tuple(maxe), tuple(float(v) ** 0.5 for v in h1e)))
    return out


# ---------------------------------------------------------------------------
# grid path
# ---------------------------------------------------------------------------

def _grid(spec, n_cells):
    a, p, q, b = (float(v) for v in spec.breakpoints())
    L = b - a
    pts = [a, p, q, b]
    for lo, hi in zip(pts, pts[1:]):
        k = max(1, int(round(n_cells * (hi - lo) / L)))
        pts.extend(np.linspace(lo, hi, k + 1)[1:-1].tolist())
    return np.unique(np.array(pts))


def _assemble_1d(x, in_inclusion):
    h = np.diff(x)
    n = len(x)
    K0 = sp.lil_matrix((n, n))
    K1 = sp.lil_matrix((n, n))
    Mlump = np.zeros(n)
    for k, hk in enumerate(h):
        loc = np.array([[1.0, -1.0], [-1.0, 1.0]]) / hk
        tgt = K1 if in_inclusion[k] else K0
        for i in range(2):
            for j in range(2):
                tgt[k + i, k + j] += loc[i, j]
        Mlump[k] += hk / 2
        Mlump[k + 1] += hk / 2
    return K0.tocsr(), K1.tocsr(), Mlump


def _load_1d(x, source):
    """Exact load for a piecewise-linear source whose breakpoints are grid nodes."""
    n = len(x)
    F = np.zeros(n)
    if source is None or (not isinstance(source, PiecewiseLinear1D) and source == 0):
        return F
    if isinstance(source, PiecewiseLinear1D):
        fv = np.array([float(source(float(v))) for v in x])
    else:
        fv = np.full(n, float(source))
    h = np.diff(x)
    # int f phi_i for linear f on each cell: h/6 (2 f_i + f_j)
    F[:-1] += h / 6 * (2 * fv[:-1] + fv[1:])
    F[1:] += h / 6 * (fv[:-1] + 2 * fv[1:])
    return F


@dataclass
class GridSeries1D:
    x: np.ndarray
    terms: list
    constants: list
    engine: ExpansionEngine = field(repr=False, default=None)
    load: np.ndarray = field(repr=False, default=None)

    def partial_sum(self, eta, J):
        return sum(float(eta) ** (-j) * self.terms[j] for j in range(J + 1))

    def direct(self, eta, u_a, u_b):
        return self.engine.direct(self.load, np.array([u_a, u_b], dtype=float), eta)


def expansion_terms_1d_grid(spec: Interval1DSpec, J: int, n_cells=64) -> GridSeries1D:
    """Terms on a P1 grid that contains ``a, p, q, b``; handles piecewise-linear sources.

    When the source has breakpoints, include them in the grid by passing a
    source whose breakpoints are a subset of the generated nodes.
    """
    x = _grid(spec, n_cells)
    if isinstance(spec.source, PiecewiseLinear1D):
        x = np.unique(np.concatenate([x, np.array([float(v) for v in spec.source.breakpoints])]))
    p, q = float(spec.p), float(spec.q)
    mids = 0.5 * (x[:-1] + x[1:])
    inc = (mids > p) & (mids < q)
    K0, K1, Ml = _assemble_1d(x, inc)
    n = len(x)
    closure = np.flatnonzero((x >= p - 1e-14) & (x <= q + 1e-14))
    iface = np.array([closure[0], closure[-1]])
    layout = DofLayout(n=n, outer=np.array([0, n - 1]), closures=(closure,), interfaces=(iface,))
    eng = ExpansionEngine(K0, K1, layout, [np.ones((len(closure), 1))], Ml)
    F = _load_1d(x, spec.source)
    g = np.array([float(spec.u_a), float(spec.u_b)])
    terms, coefs, _ = eng.expand(F, g, J)
    return GridSeries1D(x, terms, [c.copy() for c in coefs], eng, F)
