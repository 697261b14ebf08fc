"""Limited-memory quasi-Newton minimizer with Armijo backtracking."""

from dataclasses import dataclass

import numpy as np


@dataclass
class LBFGSResult:
    x: np.ndarray
    fun: float
    n_iters: int
    energies: list  # accepted energies, monotone non-increasing
    converged: bool


def lbfgs_minimize(fun_and_grad, x0, max_iters=1000, history=10,
                   grad_tol=1e-6, armijo_c=1e-4, shrink=0.5, max_ls=40,
                   ftol=1e-10):
    """Minimize a smooth function from `x0`.

    `fun_and_grad(x)` returns (f, g). Uses the two-loop recursion with a
    memory of `history` curvature pairs and a backtracking line search with
    the Armijo condition. Never accepts an increase; if a non-finite value is
    encountered the last finite iterate is returned. Stops when the gradient
    norm drops below `grad_tol` or an accepted step improves the objective by
    less than `ftol * (1 + |f|)` (stagnation near a flat minimum, where the
    backtracking search otherwise burns evaluations on rounding noise).
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun_and_grad(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise ValueError("objective not finite at the initial point")
    s_list, y_list = [], []
    energies = [f]
    converged = False
    it = 0
    for it in range(max_iters):
        gnorm = np.linalg.norm(g)
        if gnorm < grad_tol:
            converged = True
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(s_list), reversed(y_list)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            alphas.append((a, rho))
            q -= a * y
        if s_list:
            gamma = (s_list[-1] @ y_list[-1]) / (y_list[-1] @ y_list[-1])
            q *= gamma
        for (a, rho), s, y in zip(reversed(alphas), s_list, y_list):
            b = rho * (y @ q)
            q += (a - b) * s
        p = -q
        if g @ p >= 0:  # not a descent direction; fall back
            p = -g
        slope = g @ p
        step = 1.0
        accepted = False
        for _ in range(max_ls):
            x_new = x + step * p
            f_new, g_new = fun_and_grad(x_new)
            if np.isfinite(f_new) and np.all(np.isfinite(g_new)) \
                    and f_new <= f + armijo_c * step * slope:
                accepted = True
                break
            step *= shrink
        if not accepted:
            break
        s = x_new - x
        y = g_new - g
        if s @ y > 1e-10:
            s_list.append(s)
            y_list.append(y)
            if len(s_list) > history:
                s_list.pop(0)
                y_list.pop(0)
        improvement = f - f_new
        x, f, g = x_new, f_new, g_new
        energies.append(f)
        if improvement < ftol * (1.0 + abs(f)):
            converged = True
            break
    return LBFGSResult(x=x, fun=f, n_iters=it, energies=energies, converged=converged)
