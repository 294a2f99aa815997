"""Stability boundaries and regions of second-order reduced models.

The boundary of the present-period region of attraction is the stable
manifold of the neighbouring saddle.  It is traced by integrating backward in
time from the saddle, seeded a small step along its stable eigenvector.  For
undamped models the same set is the energy level through the saddle, which
gives an independent check.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .dynamics import (
    InconclusiveError,
    IntegratorConfig,
    Outcome,
    SettleCriteria,
    Trajectory,
    classify_outcome,
    integrate,
)
from .equilibria import EquilibriumKind, EquilibriumPoint, bounding_ueps, principal_sep
from .models import SwingModel

TWO_PI = 2.0 * math.pi

EXIT_NAMES = {
    K.EXIT_LEFT: "left",
    K.EXIT_RIGHT: "right",
    K.EXIT_BOTTOM: "bottom",
    K.EXIT_TOP: "top",
    K.CLOSED: "closed",
    K.ARC_LIMIT: "arc_limit",
    K.STEP_LIMIT: "step_limit",
    K.STALLED: "stalled",
}
WINDOW_EXITS = ("left", "right", "bottom", "top")


class Window(NamedTuple):
    d_lo: float
    d_hi: float
    w_lo: float
    w_hi: float

    @property
    def area(self) -> float:
        return (self.d_hi - self.d_lo) * (self.w_hi - self.w_lo)

    def contains(self, d, w):
        return (d >= self.d_lo) & (d <= self.d_hi) & (w >= self.w_lo) & (w <= self.w_hi)


def reference_window(sep: float, omega_span: float = 0.1) -> Window:
    return Window(sep - TWO_PI, sep + TWO_PI, -omega_span, omega_span)


@dataclass
class EnergyFunction:
    """V = 1/2 T omega_n w^2 + int_sep^delta (P_E - P_M), zero at the SEP."""

    model: SwingModel
    sep: float

    def potential(self, delta):
        m = self.model
        return (m.p_e_integral(delta) - m.p_e_integral(self.sep)) - m.p_m * (np.asarray(delta) - self.sep)

    def __call__(self, delta, omega_e):
        m = self.model
        return 0.5 * m.t_jeq * m.omega_n * np.asarray(omega_e) ** 2 + self.potential(delta)

    def rate(self, delta, omega_e):
        """dV/dt along trajectories, -omega_n D(delta) w^2."""
        return -self.model.omega_n * self.model.d_eq(delta) * np.asarray(omega_e) ** 2


@dataclass
class BoundaryPolyline:
    """Boundary pieces as (N, 2) arrays of (delta, omega_e)."""

    branches: dict[str, np.ndarray]
    uep: EquilibriumPoint
    window: Window
    exits: dict[str, str] = field(default_factory=dict)
    eps: float | None = None

    @property
    def branch_plus(self) -> np.ndarray:
        return self.branches["plus"]

    @property
    def branch_minus(self) -> np.ndarray:
        return self.branches["minus"]

    def points(self) -> np.ndarray:
        return np.vstack(list(self.branches.values()))

    def write_csv(self, fh: IO[str], header: Sequence[str] = ()) -> None:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "omega_e", "branch"])
        for name, pts in self.branches.items():
            for d, om in pts:
                w.writerow([repr(float(d)), repr(float(om)), name])


def _stable_direction(model: SwingModel, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit stable and unstable eigenvectors of a saddle."""
    vals, vecs = np.linalg.eig(model.jacobian(delta))
    if not (np.all(np.abs(vals.imag) == 0) and vals.real.min() < 0 < vals.real.max()):
        raise ValueError(f"equilibrium at {delta:.6f} is not a saddle (eigenvalues {vals})")
    vecs = vecs.real
    s = vecs[:, int(np.argmin(vals.real))]
    u = vecs[:, int(np.argmax(vals.real))]
    return s / np.linalg.norm(s), u / np.linalg.norm(u)


def trace_stability_boundary(
    model: SwingModel,
    uep: EquilibriumPoint,
    window: Window,
    eps: float = 1e-4,
    dt: float = 1e-4,
    spacing: float = 2e-3,
    max_arc: float = 200.0,
    max_time: float = 200.0,
    close_tol: float = 1e-2,
) -> BoundaryPolyline:
    """Both branches of the saddle's stable manifold, by reverse-time RK4.

    Each branch stops when it leaves ``window``, returns to the saddle
    (a closed boundary), or exceeds ``max_arc``/``max_time``.
    """
    if uep.kind is not EquilibriumKind.UEP:
        raise ValueError(f"boundary tracing needs a saddle, got {uep.kind.value}")
    s, _ = _stable_direction(model, uep.delta)
    p = model.params()
    win = np.array(window, dtype=float)
    max_steps = int(round(max_time / dt))
    cap = int(max_arc / spacing) + 16
    branches, exits = {}, {}
    for name, sign in (("plus", 1.0), ("minus", -1.0)):
        d0 = uep.delta + sign * eps * s[0]
        w0 = sign * eps * s[1]
        buf = np.empty((cap, 2))
        n, reason, arc = K.trace_reverse(d0, w0, p, dt, max_steps, win, spacing, max_arc, uep.delta, 0.0, close_tol, buf)
        if arc < 10 * eps:
            raise RuntimeError(f"branch {name} did not leave the saddle neighbourhood; increase eps")
        branches[name] = np.vstack([[uep.delta, 0.0], buf[:n]])
        exits[name] = EXIT_NAMES[reason]
    return BoundaryPolyline(branches, uep, window, exits, eps)


def energy_level_boundary(ef: EnergyFunction, uep: EquilibriumPoint, window: Window, resolution: int = 1000) -> BoundaryPolyline:
    """Contour V = V(UEP) of an undamped model on a ``resolution``^2 grid."""
    import contourpy

    if not ef.model.undamped:
        raise ValueError("the energy level set bounds the region only for undamped models")
    d = np.linspace(window.d_lo, window.d_hi, resolution)
    w = np.linspace(window.w_lo, window.w_hi, resolution)
    dd, ww = np.meshgrid(d, w)
    z = ef(dd, ww)
    level = float(ef(uep.delta, 0.0))
    gen = contourpy.contour_generator(dd, ww, z, name="serial")
    lines = gen.lines(level)
    branches = {f"level_{i}": np.asarray(line) for i, line in enumerate(lines)}
    return BoundaryPolyline(branches, uep, window, {k: "contour" for k in branches})


def densify(poly: np.ndarray, step: float) -> np.ndarray:
    """Insert points so that consecutive spacing is at most ``step``."""
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 2:
        return poly
    seg = np.diff(poly, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    parts = [poly[:1]]
    for a, v, ln in zip(poly[:-1], seg, lens):
        k = max(1, int(math.ceil(ln / step)))
        t = np.arange(1, k + 1)[:, None] / k
        parts.append(a + t * v)
    return np.vstack(parts)


def hausdorff(a: np.ndarray, b: np.ndarray, step: float = 1e-4) -> float:
    """Symmetric Hausdorff distance between two polylines (densified)."""
    a, b = densify(a, step), densify(b, step)
    da = cKDTree(b).query(a)[0].max()
    db = cKDTree(a).query(b)[0].max()
    return float(max(da, db))


def directed_distance(a: np.ndarray, b: np.ndarray, step: float = 1e-4) -> float:
    """Largest distance from a point of ``a`` to the polyline ``b``."""
    return float(cKDTree(densify(b, step)).query(np.asarray(a))[0].max())


def eps_sensitivity(model: SwingModel, uep: EquilibriumPoint, window: Window, eps: float = 1e-4, **kw) -> float:
    """Worst displacement of the traced boundary when ``eps`` is doubled."""
    b1 = trace_stability_boundary(model, uep, window, eps, **kw)
    b2 = trace_stability_boundary(model, uep, window, 2 * eps, **kw)
    return max(directed_distance(b2.branches[k], b1.branches[k]) for k in ("plus", "minus"))


# --- forward-simulation membership ----------------------------------------------


class _AutonomousRunner:
    columns = ("delta", "omega_e")

    def __init__(self, model: SwingModel):
        self.model = model
        self.p = model.params()

    def initial(self, state0, mode):
        d, w = state0
        return np.array([float(d), float(w)])

    def run(self, y, mode, dt, n, stride, step0, out, n_out, settle):
        d, w, i, n_out, status, _ = K.swing_run(y[0], y[1], self.p, dt, n, stride, step0, out, n_out, settle, 0)
        return np.array([d, w]), i, n_out, status

    def jump(self, y, before, after):
        return y

    def derived(self, traj: Trajectory):
        d = traj.states[:, 0]
        return {"p_e": self.model.p_e(d), "d_eq": self.model.d_eq(d)}


@dataclass(frozen=True)
class AutonomousSwing:
    """A fixed-topology swing model usable with :func:`dynamics.integrate`."""

    model: SwingModel

    def make_runner(self):
        return _AutonomousRunner(self.model)


def is_stable_point(
    model: SwingModel,
    state,
    sep: float | None = None,
    dt: float = 1e-4,
    horizon: float = 20.0,
    extended_horizon: float = 60.0,
    criteria: SettleCriteria = SettleCriteria(),
) -> Outcome:
    """Forward-simulate from ``state`` (no events) and classify."""
    sep = principal_sep(model).delta if sep is None else sep
    for t_end in (horizon, extended_horizon):
        cfg = IntegratorConfig(dt=dt, t_end=round(t_end / dt) * dt, record_stride=100)
        traj = integrate(AutonomousSwing(model), tuple(state), cfg, settle=criteria, sep_delta=sep)
        try:
            return classify_outcome(traj, sep, criteria)
        except InconclusiveError:
            last = t_end
    raise InconclusiveError(f"state {tuple(state)} unresolved after {last:.0f} s")


def lin_frequency(model: SwingModel, sep: float) -> float:
    """Small-signal angular frequency sqrt(omega_n P_E'(sep) / T) in rad/s."""
    return math.sqrt(max(model.omega_n * float(model.p_e_prime(sep)) / model.t_jeq, 1e-12))


def state_scale(model: SwingModel, sep: float) -> float:
    """Factor turning omega_e (p.u.) into angle-like units near the SEP."""
    return model.omega_n / lin_frequency(model, sep)


def stratified_samples(window: Window, n: int = 10_000, seed: int = 0) -> np.ndarray:
    """One uniform point per cell of a sqrt(n) x sqrt(n) grid over ``window``."""
    side = int(round(math.sqrt(n)))
    if side * side != n:
        raise ValueError("sample count must be a perfect square")
    rng = np.random.default_rng(seed)
    i, j = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    u = (i.ravel() + rng.random(n)) / side
    v = (j.ravel() + rng.random(n)) / side
    return np.column_stack([window.d_lo + u * (window.d_hi - window.d_lo), window.w_lo + v * (window.w_hi - window.w_lo)])


class Membership(NamedTuple):
    labels: np.ndarray  # period index, -9999 diverged, 9999 undecided
    stable: np.ndarray  # bool, present-period convergence
    undecided: int


def membership(
    model: SwingModel,
    samples: np.ndarray,
    sep: float | None = None,
    dt: float = 1e-3,
    max_time: float = 60.0,
    capture: float = 0.05,
) -> Membership:
    """Present-period region membership of many initial states.

    Damped models are simulated until the state enters a small box around
    some SEP translate (``capture`` rad wide in angle, matching width in
    scaled frequency).  Undamped models have no attracting set, so the
    closed level set through the nearest saddle decides instead.
    """
    sep = principal_sep(model).delta if sep is None else sep
    samples = np.asarray(samples, dtype=float)
    if model.undamped:
        lo, hi = bounding_ueps(model, sep)
        ef = EnergyFunction(model, sep)
        level = min(float(ef(lo.delta, 0.0)), float(ef(hi.delta, 0.0)))
        d, w = samples[:, 0], samples[:, 1]
        inside = (ef(d, w) < level) & (d > lo.delta) & (d < hi.delta)
        labels = np.where(inside, 0, 9999)
        return Membership(labels, inside, 0)
    cap_w = capture / state_scale(model, sep)
    labels = K.swing_membership(
        samples[:, 0].copy(), samples[:, 1].copy(), model.params(), dt, int(round(max_time / dt)),
        sep, capture, cap_w, 8 * math.pi,
    )
    return Membership(labels, labels == 0, int(np.sum(labels == 9999)))


class AreaComparison(NamedTuple):
    area_a: float
    area_b: float
    fraction_a: float
    fraction_b: float
    only_b: np.ndarray  # samples stable for b but not for a (non-containment witnesses)
    undecided: int


def compare_areas(model_a: SwingModel, model_b: SwingModel, window: Window, n: int = 10_000, seed: int = 0, **kw) -> AreaComparison:
    """Stable-set areas of two models on the same stratified samples."""
    pts = stratified_samples(window, n, seed)
    ma = membership(model_a, pts, **kw)
    mb = membership(model_b, pts, **kw)
    fa, fb = float(ma.stable.mean()), float(mb.stable.mean())
    return AreaComparison(fa * window.area, fb * window.area, fa, fb, pts[mb.stable & ~ma.stable], ma.undecided + mb.undecided)


def write_membership_csv(samples: np.ndarray, labels: np.ndarray, fh: IO[str], header: Sequence[str] = ()) -> None:
    for line in header:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["delta", "omega_e", "label"])
    for (d, om), lab in zip(samples, labels):
        w.writerow([repr(float(d)), repr(float(om)), int(lab)])


# --- boundary validation ---------------------------------------------------------


class ValidationResult(NamedTuple):
    inside_ok: int
    inside_total: int
    outside_ok: int
    outside_total: int

    @property
    def fraction(self) -> float:
        total = self.inside_total + self.outside_total
        return (self.inside_ok + self.outside_ok) / total if total else float("nan")


def offset_probes(boundary: BoundaryPolyline, model: SwingModel, sep: float, offset: float = 0.02,
                  per_branch: int = 60, min_uep_distance: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Points ``offset`` scaled-units inside and outside each traced branch.

    Units: delta in rad, omega_e multiplied by :func:`state_scale`.  The
    inside of each branch is the side that the saddle's unstable direction
    towards the SEP points into.  Probes that land outside the window or
    closer to another part of the boundary than the offset are dropped.
    """
    scale = state_scale(model, sep)
    _, u = _stable_direction(model, boundary.uep.delta)
    u = np.array([u[0], u[1] * scale])
    if u[0] * (sep - boundary.uep.delta) < 0:
        u = -u
    all_pts = np.vstack([densify(b * [1.0, scale], offset / 10) for b in (boundary.branch_plus, boundary.branch_minus)])
    tree = cKDTree(all_pts)
    inside, outside = [], []
    for name in ("plus", "minus"):
        pts = boundary.branches[name] * [1.0, scale]
        tang = np.gradient(pts, axis=0)
        nrm = np.column_stack([-tang[:, 1], tang[:, 0]])
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        # orient by the unstable direction at the seed
        k0 = min(3, len(pts) - 1)
        side = 1.0 if np.dot(nrm[k0], u) > 0 else -1.0
        far = np.hypot(pts[:, 0] - boundary.uep.delta, pts[:, 1]) > min_uep_distance
        idx = np.flatnonzero(far)
        if idx.size == 0:
            continue
        pick = idx[np.linspace(0, idx.size - 1, min(per_branch, idx.size)).astype(int)]
        for k in pick:
            for sgn, bucket in ((side, inside), (-side, outside)):
                q = pts[k] + sgn * offset * nrm[k]
                if tree.query(q)[0] < 0.75 * offset:
                    continue
                d, w = q[0], q[1] / scale
                if boundary.window.contains(d, w):
                    bucket.append((d, w))
    return np.array(inside).reshape(-1, 2), np.array(outside).reshape(-1, 2)


def validate_boundary(boundary: BoundaryPolyline, model: SwingModel, sep: float | None = None,
                      offset: float = 0.02, per_branch: int = 60, dt: float = 1e-4) -> ValidationResult:
    sep = principal_sep(model).delta if sep is None else sep
    ins, outs = offset_probes(boundary, model, sep, offset, per_branch)
    ok_in = sum(is_stable_point(model, q, sep, dt).stable for q in ins)
    ok_out = sum(not is_stable_point(model, q, sep, dt).stable for q in outs)
    return ValidationResult(ok_in, len(ins), ok_out, len(outs))


def level_set_between(boundary: BoundaryPolyline, lo: float, hi: float) -> np.ndarray:
    """Contour points with ``lo < delta <= hi`` (the part enclosing one SEP)."""
    pts = boundary.points()
    return pts[(pts[:, 0] > lo) & (pts[:, 0] <= hi)]
