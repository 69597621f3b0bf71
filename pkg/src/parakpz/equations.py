"""Instantiations of the paracontrolled linear solver.

Naming: X = slope tree (d_x of the linear tree), Xp = d_x quad tree,
Xc = d_x cubic tree.  Each solve assembles the forcing callback R and the
derivative callback F so that R(u) + F(u) < X + (X o d_x u) reproduces the
classical right-hand side exactly on the grid (the paraproduct splits
telescope back to plain products), while isolating the terms that stay
bounded in the rough limit.

Equations:
  - solve_rhe: the exponentially-factored heat equation for w^P; the full
    multiplicative-noise solution is w = w^P exp(base + quad + cubic).
  - solve_rhe_backward: terminal-value version on rescale/translated data.
  - solve_sharp: the remainder equation for h# with the fixed forcing Z.
  - solve_kolmogorov: backward generator equation with drift d_x(quad+base)
    read at reversed times.
  - solve_YR: the auxiliary gradient-flow field, returned as cubic + Y^P.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .noise import EnhancedData
from .paraproducts import (
    TimeSmoother,
    heat_apply,
    make_time_smoother,
    para_lower_values,
    para_modified,
    resonant_values,
)
from .solver import (
    LinearProblem,
    ParaFunction,
    SolveReport,
    solve_linear,
)
from .spaces import TimeField
from .spectral import (
    DyadicPartition,
    GridField,
    derivative_multiplier,
    make_dyadic_partition,
)

__all__ = [
    "solve_rhe",
    "solve_rhe_backward",
    "solve_sharp",
    "solve_kolmogorov",
    "solve_YR",
    "truncate_data",
    "reverse_field",
]


def _dx(grid, frames: np.ndarray) -> np.ndarray:
    mult = derivative_multiplier(grid)
    return grid.to_values(mult[None] * grid.to_coeffs(frames))


def truncate_data(data: EnhancedData, t_end: float) -> EnhancedData:
    """Restrict an EnhancedData family to the mesh window [0, t_end]."""
    m = int(round(t_end / data.dt))
    if not (0 < m < len(data.mesh)):
        raise ValueError(f"t_end={t_end} outside the data horizon")
    if abs(m * data.dt - t_end) > 1e-9 * max(data.dt, 1.0):
        raise ValueError("t_end must sit on the time mesh")
    kw = {name: getattr(data, name).restrict(0, m)
          for name in ("base", "quad", "cubic", "quart_res", "quart_sq",
                       "ctrl", "slope", "mixed_res")}
    return replace(data, mesh=data.mesh[:m + 1], **kw)


def reverse_field(f: TimeField) -> TimeField:
    """Read a field at reversed times: out(t_i) = f(T - t_i)."""
    return f.like(f.frames[::-1])


def _setup(data: EnhancedData, part, sm):
    if part is None:
        part = make_dyadic_partition(data.grid)
    if sm is None:
        sm = make_time_smoother(data.dt, part)
    return part, sm


def solve_rhe(data: EnhancedData, w0: GridField,
              part: DyadicPartition | None = None,
              sm: TimeSmoother | None = None, beta: float = 1.0,
              tol: float = 1e-8) -> tuple[ParaFunction, SolveReport]:
    """Paracontrolled solve of the factored multiplicative heat equation.

    Right-hand side (classical form, smooth case):
        w^P (X Xc + Xp Xc + Xp^2/2 + Xc^2/2) + (X + Xp + Xc) d_x w^P.
    """
    part, sm = _setup(data, part, sm)
    grid = data.grid
    x = data.slope.frames
    xp = _dx(grid, data.quad.frames)
    xcu = _dx(grid, data.cubic.frames)
    smooth_coef = 0.5 * xp ** 2 + 0.5 * xcu ** 2 + xp * xcu
    x_coeffs = grid.to_coeffs(x)
    has_slope = bool(np.any(x))

    def forcing(pf: ParaFunction) -> TimeField:
        uf = pf.u.frames
        du = _dx(grid, uf)
        out = uf * smooth_coef + (xp + xcu) * du
        if has_slope:
            prod = xcu * uf
            out = out + prod * x - para_lower_values(grid.to_coeffs(prod),
                                                     x_coeffs, part)
            out = out + para_lower_values(x_coeffs, grid.to_coeffs(du), part)
        return pf.u.like(out)

    def derivative(pf: ParaFunction) -> TimeField:
        return pf.u.like(xcu * pf.u.frames + _dx(grid, pf.u.frames))

    problem = LinearProblem(forcing=forcing, derivative=derivative, u0=w0,
                            beta=beta)
    return solve_linear(problem, data, part=part, sm=sm, tol=tol)


def solve_rhe_backward(data: EnhancedData, g: GridField, t_end: float,
                       tau: float = 0.0, lam: float = 1.0,
                       part: DyadicPartition | None = None,
                       tol: float = 1e-8) -> tuple[ParaFunction, SolveReport]:
    """Terminal-value solve: returns Z with Z(t_end) = g on [0, t_end].

    The substitution v(r) = Z(t_end - r) turns the terminal problem into a
    forward solve whose coefficients are the family's trees read at times
    t_end - r after the rescale/translate step; the returned fields are
    flipped back to the terminal clock (frame i is time mesh[i], terminal
    frame last).
    """
    from .noise import rescale_translate
    d2 = data if (tau == 0.0 and lam == 1.0) else rescale_translate(
        data, tau, lam, part=part)
    if t_end < d2.mesh[-1] - 1e-12:
        d2 = truncate_data(d2, t_end)
    rev = _reverse_data(d2)
    part2 = make_dyadic_partition(rev.grid) if part is None else part
    sm = make_time_smoother(rev.dt, part2)
    pf, report = solve_rhe(rev, g, part=part2, sm=sm, tol=tol)
    flipped = ParaFunction(
        u=pf.u.like(pf.u.frames[::-1]),
        u_prime=pf.u_prime.like(pf.u_prime.frames[::-1]),
        u_sharp=pf.u_sharp.like(pf.u_sharp.frames[::-1]),
        controller=pf.controller, beta=pf.beta)
    return flipped, report


def _reverse_data(data: EnhancedData) -> EnhancedData:
    kw = {name: reverse_field(data.tree(name))
          for name in ("base", "quad", "cubic", "quart_res", "quart_sq",
                       "ctrl", "slope", "mixed_res")}
    return replace(data, **kw)


def assemble_sharp_forcing(data: EnhancedData, hP: TimeField,
                           hprime: TimeField,
                           part: DyadicPartition | None = None,
                           sm: TimeSmoother | None = None) -> TimeField:
    """The fixed forcing Z of the remainder equation for h#."""
    part, sm = _setup(data, part, sm)
    grid = data.grid
    x = data.slope.frames
    x_coeffs = grid.to_coeffs(x)
    xp = _dx(grid, data.quad.frames)
    xcu = _dx(grid, data.cubic.frames)
    dhp = _dx(grid, hP.frames)

    # forcings of the two quartic trees (their defining right-hand sides)
    quart_forcing = (resonant_values(grid.to_coeffs(xcu), x_coeffs, part)
                     + data.c_dbl) + (0.5 * xp ** 2 - data.c_dbl)

    lower_quartic = para_lower_values(x_coeffs, grid.to_coeffs(xcu), part)
    smooth = xp * xcu + 0.5 * xcu ** 2 + 0.5 * dhp ** 2 + (xp + xcu) * dhp
    lower_grad = para_lower_values(x_coeffs, grid.to_coeffs(dhp), part)

    ctrl_smoothed = para_modified(hprime, data.ctrl, sm, part)
    res_ctrl = resonant_values(
        x_coeffs, grid.to_coeffs(_dx(grid, ctrl_smoothed.frames)), part)
    # heat commutator: h' < (L ctrl) - L(h' << ctrl); L ctrl = slope exactly
    lower_heat = para_lower_values(grid.to_coeffs(hprime.frames), x_coeffs,
                                   part)
    heat_comm = lower_heat - heat_apply(ctrl_smoothed).frames

    return hP.like(quart_forcing + lower_quartic + smooth + lower_grad
                   + res_ctrl + heat_comm)


def solve_sharp(data: EnhancedData, hP: TimeField, hprime: TimeField,
                u0: GridField, part: DyadicPartition | None = None,
                sm: TimeSmoother | None = None, beta: float = 1.0,
                tol: float = 1e-8) -> tuple[ParaFunction, SolveReport]:
    """Remainder equation: L h# = Z + X o d_x h#, h#(0) = u0."""
    part, sm = _setup(data, part, sm)
    z = assemble_sharp_forcing(data, hP, hprime, part, sm)

    def forcing(pf: ParaFunction) -> TimeField:
        return z

    problem = LinearProblem(forcing=forcing, derivative=None, u0=u0,
                            beta=beta)
    return solve_linear(problem, data, part=part, sm=sm, tol=tol)


def solve_kolmogorov(data: EnhancedData, f: TimeField, phi0: GridField,
                     tau: float, part: DyadicPartition | None = None,
                     beta: float = 1.0,
                     tol: float = 1e-8) -> tuple[ParaFunction, SolveReport]:
    """Backward generator equation on [0, tau] with terminal value phi0.

    Solves (d_t + Lap/2 + d_x U d_x) phi = f, phi(tau) = phi0, where the
    drift potential U at backward time s is the sum of the linear and quad
    trees at time T - s.  Internally v(r) = phi(tau - r) is a forward solve
    on the window [T - tau, T] of the data; the returned fields are flipped
    back (frame i is time mesh[i] of [0, tau], terminal frame last).
    """
    from .noise import rescale_translate
    horizon = float(data.mesh[-1])
    if not (0 < tau <= horizon + 1e-12):
        raise ValueError(f"tau={tau} outside (0, {horizon}]")
    shift = horizon - tau
    d2 = rescale_translate(data, shift, 1.0, part=part) if shift > 0 else data
    part2 = make_dyadic_partition(d2.grid) if part is None else part
    sm = make_time_smoother(d2.dt, part2)
    grid = d2.grid
    x = d2.slope.frames
    x_coeffs = grid.to_coeffs(x)
    xp = _dx(grid, d2.quad.frames)
    f_rev = f.frames[::-1]

    def forcing(pf: ParaFunction) -> TimeField:
        du = _dx(grid, pf.u.frames)
        upper = para_lower_values(x_coeffs, grid.to_coeffs(du), part2)
        return pf.u.like(-f_rev + xp * du + upper)

    def derivative(pf: ParaFunction) -> TimeField:
        return pf.u.like(_dx(grid, pf.u.frames))

    problem = LinearProblem(forcing=forcing, derivative=derivative, u0=phi0,
                            beta=beta)
    pf, report = solve_linear(problem, d2, part=part2, sm=sm, tol=tol)
    flipped = ParaFunction(
        u=pf.u.like(pf.u.frames[::-1]),
        u_prime=pf.u_prime.like(pf.u_prime.frames[::-1]),
        u_sharp=pf.u_sharp.like(pf.u_sharp.frames[::-1]),
        controller=pf.controller, beta=pf.beta)
    return flipped, report


def solve_YR(data: EnhancedData, part: DyadicPartition | None = None,
             sm: TimeSmoother | None = None,
             tol: float = 1e-8) -> tuple[TimeField, ParaFunction, SolveReport]:
    """The auxiliary gradient field: returns (Y^R, Y^P, report).

    Classical form: L Y^R = Xp^2/2 + X Xp + (X + Xp) d_x Y^R, zero start;
    decomposed as Y^R = cubic + Y^P with Y^P paracontrolled.
    """
    part, sm = _setup(data, part, sm)
    grid = data.grid
    x = data.slope.frames
    x_coeffs = grid.to_coeffs(x)
    xp = _dx(grid, data.quad.frames)
    xcu = _dx(grid, data.cubic.frames)
    xc_coeffs = grid.to_coeffs(xcu)
    fixed = (0.5 * xp ** 2 + xp * xcu
             + xcu * x - para_lower_values(xc_coeffs, x_coeffs, part))

    def forcing(pf: ParaFunction) -> TimeField:
        du = _dx(grid, pf.u.frames)
        upper = para_lower_values(x_coeffs, grid.to_coeffs(du), part)
        return pf.u.like(fixed + xp * du + upper)

    def derivative(pf: ParaFunction) -> TimeField:
        return pf.u.like(xcu + _dx(grid, pf.u.frames))

    zero = GridField(grid, values=np.zeros(grid.num_points, dtype=complex))
    problem = LinearProblem(forcing=forcing, derivative=derivative, u0=zero)
    pf, report = solve_linear(problem, data, part=part, sm=sm, tol=tol)
    yr = data.cubic + pf.u
    return yr, pf, report
