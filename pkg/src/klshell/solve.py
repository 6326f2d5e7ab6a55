"""Newton load stepping and Crisfield cylindrical arc-length continuation.

Material history and thickness warm starts are committed only after a step
converges; rejected or failed steps leave the model state untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .errors import MaterialFailureError, NonConvergenceError, SolverError
from .model import ArcLengthSettings, AssembledModel, NewtonSettings


@dataclass
class StepRecord:
    step: int
    lam: float
    monitors: dict
    iterations: int
    n_plastic: int
    residual_norm: float


@dataclass
class SolutionHistory:
    """Append-only record of converged steps."""

    records: list = field(default_factory=list)
    residual_trace: list = field(default_factory=list)

    def append(self, rec):
        if self.records and rec.step <= self.records[-1].step:
            raise ValueError("step index must increase")
        self.records.append(rec)

    @property
    def lambdas(self):
        return np.array([r.lam for r in self.records])

    def monitor_series(self, name):
        return np.array([r.monitors[name] for r in self.records])

    @property
    def total_iterations(self):
        return sum(r.iterations for r in self.records)


def convergence_exponent(trace, pairs=3):
    """Least-squares convergence-order fit from a residual-norm trace.

    Fits log r_{k+1} = a + q log r_k over the last ``pairs`` reductions;
    quadratic Newton gives q close to 2.
    """
    r = np.asarray([t for t in trace if t > 0.0])
    if r.size < pairs + 1:
        raise ValueError("trace too short for the requested fit")
    x = np.log(r[-pairs - 1:-1])
    y = np.log(r[-pairs:])
    dx = x - x.mean()
    return float((dx @ (y - y.mean())) / (dx @ dx))


def _factorize(K):
    try:
        return splu(K)
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc


def _residual(am, R_int, lam):
    return (R_int - lam * am.f_ext)[am.free]


def newton_step(am: AssembledModel, u, lam, settings: NewtonSettings,
                trace=None):
    """Equilibrate at fixed load level ``lam`` starting from ``u``.

    Returns (u, iterations, pendings, n_plastic, residual_norm).  The
    iteration count is the number of linear solves.
    """
    u = u.copy()
    ref = None
    du_norm = np.inf
    pend = None
    fscale = max(abs(lam) * np.linalg.norm(am.f_ext), 1e-30)
    for it in range(settings.max_iterations + 1):
        K, R, pend, n_plastic = am.assemble(u)
        res = _residual(am, R, lam)
        norm = float(np.linalg.norm(res))
        if trace is not None:
            trace.append(norm)
        if ref is None:
            ref = max(norm, 1e-300)
        u_norm = np.linalg.norm(u[am.free]) + 1e-300
        if (norm <= settings.residual_tol * ref
                or norm <= 1e-13 * fscale
                or du_norm <= settings.displacement_tol * u_norm):
            return u, it, pend, n_plastic, norm
        if it == settings.max_iterations:
            break
        du = _factorize(K).solve(-res)
        if not np.all(np.isfinite(du)):
            raise SolverError("non-finite Newton correction")
        u[am.free] += du
        du_norm = float(np.linalg.norm(du))
    raise NonConvergenceError(
        f"Newton did not converge in {settings.max_iterations} iterations "
        f"(residual {norm:.3e}, reference {ref:.3e})",
        residual_norm=norm, iterations=settings.max_iterations)


def newton_run(am: AssembledModel, settings: NewtonSettings, lam_max=1.0,
               on_step=None):
    """Proportional load stepping to ``lam_max`` in equal increments."""
    history = SolutionHistory()
    u = np.zeros(am.n_dof)
    u_prev = None
    lam_prev = 0.0
    dlam = lam_max / settings.increments
    for step in range(1, settings.increments + 1):
        lam = step * dlam
        pred = u.copy()
        extrapolated = settings.predictor == "extrapolate" and u_prev is not None
        if extrapolated:
            pred[am.free] += (u - u_prev)[am.free] * (lam - lam_prev) / dlam
        trace = []
        try:
            u_new, its, pend, n_plastic, rnorm = newton_step(
                am, pred, lam, settings, trace=trace)
        except (NonConvergenceError, SolverError, MaterialFailureError):
            if not extrapolated:
                raise
            # the extrapolation is only an accelerator; fall back to the
            # last converged state as predictor before giving up
            trace = []
            u_new, its, pend, n_plastic, rnorm = newton_step(
                am, u.copy(), lam, settings, trace=trace)
        am.commit(pend)
        u_prev, lam_prev = u, lam - dlam
        u = u_new
        rec = StepRecord(step, lam, am.monitor_values(u), its, n_plastic, rnorm)
        history.append(rec)
        history.residual_trace.append(trace)
        if on_step:
            on_step(rec, u)
    return history, u


def arc_length_run(am: AssembledModel, settings: ArcLengthSettings,
                   on_step=None):
    """Cylindrical (Crisfield) continuation with the external load pattern
    scaled by the load factor.

    The constraint is ||du|| = radius per step; the quadratic root is
    selected by the larger inner product with the accumulated increment;
    complex roots or non-convergence reject the step and halve the radius.
    """
    history = SolutionHistory()
    u = np.zeros(am.n_dof)
    lam = 0.0
    du_prev = None
    radius = settings.initial_radius
    f_free = am.f_ext[am.free]
    step = 0
    retries = 0
    while step < settings.max_steps:
        saved_state = am.section_states()
        try:
            result = _arc_step(am, u, lam, radius, du_prev, f_free, settings)
        except (NonConvergenceError, SolverError, MaterialFailureError):
            result = None
        if result is None:
            am.restore(saved_state)
            retries += 1
            if retries > settings.max_retries:
                raise NonConvergenceError(
                    f"arc-length step {step + 1} failed after "
                    f"{settings.max_retries} radius reductions", step=step + 1)
            radius *= 0.5
            continue
        u, lam, its, pend, n_plastic, rnorm, du_prev = result
        am.commit(pend)
        retries = 0
        step += 1
        rec = StepRecord(step, lam, am.monitor_values(u), its, n_plastic, rnorm)
        history.append(rec)
        if on_step:
            on_step(rec, u)
        # radius adaptation toward the target iteration count
        if its > 0:
            radius *= np.sqrt(settings.desired_iterations / its)
        lo, hi = settings.radius_bounds
        radius = min(max(radius, lo), hi)
        if settings.stop_lambda is not None and abs(lam) >= settings.stop_lambda:
            break
        if settings.stop_displacement is not None:
            name, comp, limit = settings.stop_displacement
            if abs(rec.monitors[name][comp]) >= abs(limit):
                break
    return history, u


def _arc_step(am, u, lam, radius, du_prev, f_free, settings):
    # tangential predictor
    K, R, _, _ = am.assemble(u)
    lu = _factorize(K)
    du_t = lu.solve(f_free)
    nt = np.linalg.norm(du_t)
    if not np.isfinite(nt) or nt == 0.0:
        raise SolverError("degenerate tangential solution")
    dlam = radius / nt
    if du_prev is not None and du_t @ du_prev < 0.0:
        dlam = -dlam
    du = dlam * du_t

    ref = None
    delta = np.inf
    for it in range(1, settings.max_iterations + 1):
        u_trial = u.copy()
        u_trial[am.free] += du
        K, R, pend, n_plastic = am.assemble(u_trial)
        res = _residual(am, R, lam + dlam)
        norm = float(np.linalg.norm(res))
        if ref is None:
            ref = max(norm, 1e-300)
        if (norm <= settings.residual_tol * ref
                or delta <= settings.displacement_tol * np.linalg.norm(du)
                or norm <= 1e-13 * max(
                    np.linalg.norm((lam + dlam) * f_free), 1e-30)):
            return u_trial, lam + dlam, it - 1, pend, n_plastic, norm, du
        lu = _factorize(K)
        du_r = lu.solve(-res)
        du_f = lu.solve(f_free)
        a = du_f @ du_f
        b = 2.0 * du_f @ (du + du_r)
        c = (du + du_r) @ (du + du_r) - radius * radius
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            raise NonConvergenceError("complex arc-length roots")
        sq = np.sqrt(disc)
        cands = [(-b + sq) / (2.0 * a), (-b - sq) / (2.0 * a)]
        best = None
        for dl in cands:
            du_c = du + du_r + dl * du_f
            score = du_c @ du
            if best is None or score > best[0]:
                best = (score, du_c, dl)
        delta = float(np.linalg.norm(best[1] - du))
        du = best[1]
        dlam += best[2]
    raise NonConvergenceError("arc-length corrector did not converge",
                              iterations=settings.max_iterations)
