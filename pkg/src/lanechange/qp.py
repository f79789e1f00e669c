"""Dense primal active-set solver for small strictly convex QPs.

Solves  min 0.5 z'Hz + g'z  s.t.  Gz <= h  from a feasible start. Each
working-set subproblem is solved exactly through its KKT system, so the
returned point satisfies stationarity and complementarity to machine
precision, which receding-horizon control tests rely on.
"""

from __future__ import annotations

import numpy as np

__all__ = ["QpError", "solve_qp", "kkt_residual"]

_FEAS_TOL = 1e-9
_ZERO_STEP = 1e-12
_MULT_TOL = 1e-11
_MAX_ITERS = 300


class QpError(RuntimeError):
    pass


def _eqp_step(H, grad, G_w):
    """Newton step restricted to the working set (G_w p = 0) and multipliers."""
    n = H.shape[0]
    m = G_w.shape[0]
    if m == 0:
        return np.linalg.solve(H, -grad), np.empty(0)
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = G_w.T
    K[n:, :n] = G_w
    rhs = np.concatenate([-grad, np.zeros(m)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    return sol[:n], sol[n:]


def _polish(H, g, G, h, work, z, lam):
    """One exact equality-constrained solve at the final working set, with a
    round of iterative refinement, to push the KKT residual to round-off."""
    n = H.shape[0]
    mw = len(work)
    if mw == 0:
        z_new = np.linalg.solve(H, -g)
        return z_new, lam
    G_w = G[work]
    K = np.zeros((n + mw, n + mw))
    K[:n, :n] = H
    K[:n, n:] = G_w.T
    K[n:, :n] = G_w
    rhs = np.concatenate([-g, h[work]])
    try:
        sol = np.linalg.solve(K, rhs)
        sol += np.linalg.solve(K, rhs - K @ sol)
    except np.linalg.LinAlgError:
        return z, lam
    return sol[:n], sol[n:]


def solve_qp(H: np.ndarray, g: np.ndarray, G: np.ndarray, h: np.ndarray,
             z0: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Returns (z, mu, iterations) with mu the full multiplier vector
    (zero on inactive constraints). z0 must be feasible."""
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    G = np.asarray(G, dtype=float) if G is not None else np.zeros((0, H.shape[0]))
    h = np.asarray(h, dtype=float) if h is not None else np.zeros(0)
    z = np.asarray(z0, dtype=float).copy()
    m = G.shape[0]
    slack = G @ z - h if m else np.zeros(0)
    if m and slack.max() > _FEAS_TOL * max(1.0, np.abs(h).max()):
        raise QpError(f"infeasible start (violation {slack.max():.3e})")

    work: list[int] = [i for i in range(m) if slack[i] > -_FEAS_TOL]
    # keep the initial working set linearly independent
    if work:
        keep: list[int] = []
        for i in work:
            rows = G[keep + [i]]
            if np.linalg.matrix_rank(rows) == len(keep) + 1:
                keep.append(i)
        work = keep

    for it in range(1, _MAX_ITERS + 1):
        grad = H @ z + g
        G_w = G[work] if work else np.zeros((0, H.shape[0]))
        p, lam = _eqp_step(H, grad, G_w)
        if np.linalg.norm(p) <= _ZERO_STEP * max(1.0, np.linalg.norm(z)):
            if len(work) == 0 or lam.min() >= -_MULT_TOL * max(1.0, np.abs(lam).max()):
                z, lam = _polish(H, g, G, h, work, z, lam)
                mu = np.zeros(m)
                for idx, ci in enumerate(work):
                    mu[ci] = max(lam[idx], 0.0) if len(lam) else 0.0
                return z, mu, it
            work.pop(int(np.argmin(lam)))
            continue
        # longest feasible step toward the EQP minimizer; directional
        # derivatives at rounding level (exactly dependent rows) never block
        alpha = 1.0
        blocker = -1
        if m:
            others = [i for i in range(m) if i not in work]
            if others:
                Gp = G[others] @ p
                room = h[others] - G[others] @ z
                thresh = 1e-11 * max(1.0, float(np.linalg.norm(p)))
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratios = np.where(Gp > thresh, room / Gp, np.inf)
                k = int(np.argmin(ratios))
                if ratios[k] < alpha:
                    alpha = max(ratios[k], 0.0)
                    blocker = others[k]
        z = z + alpha * p
        if blocker >= 0:
            rows = G[work + [blocker]]
            if np.linalg.matrix_rank(rows) == len(work) + 1:
                work.append(blocker)
            # a dependent blocker at alpha=0 would stall; the multiplier drop
            # branch above resolves it on the next pass
    raise QpError("active-set iteration limit reached")


def kkt_residual(H, g, G, h, z, mu) -> float:
    """Max-norm KKT residual (stationarity, primal feasibility,
    complementarity, dual feasibility)."""
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    z = np.asarray(z, dtype=float)
    if G is None or len(G) == 0:
        return float(np.abs(H @ z + g).max())
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    mu = np.asarray(mu, dtype=float)
    stat = np.abs(H @ z + g + G.T @ mu).max()
    primal = max(0.0, (G @ z - h).max())
    comp = np.abs(mu * (G @ z - h)).max()
    dual = max(0.0, -(mu.min()))
    return float(max(stat, primal, comp, dual))
