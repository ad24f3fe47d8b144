"""Reference computations for the Gromov-Wasserstein machinery.

``gw_cost`` is the literal quadruple-loop oracle (sequential (i,j,k,l)
order, pure Python) every faster path is judged against. The algebraic
identity A - B = n^2 m^2 (Sigma_C^2 + Sigma_D^2) and the uniform-plan
error bound (n-1)/n^2 + (m-1)/m^2 are checked from first principles here.
``gw_bruteforce_perm`` enumerates permutation plans exhaustively;
``gw_entropic`` is the iterative comparator (annealed Sinkhorn scaling on
a linearized cost with multi-start refinement).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError, ValidationError
from .tensors import seq_sum


@dataclass
class TransportPlan:
    gamma: np.ndarray          # [n x m] nonnegative masses
    a: np.ndarray              # row marginals, length n
    b: np.ndarray              # column marginals, length m

    def validate(self, tol: float = 1e-12) -> "TransportPlan":
        g = np.asarray(self.gamma, dtype=np.float64)
        if g.ndim != 2:
            raise ShapeError("transport plan must be a matrix")
        if (g < 0).any():
            raise ValidationError("transport plan has negative mass")
        rows = np.array([seq_sum(g[i]) for i in range(g.shape[0])])
        cols = np.array([seq_sum(g[:, k]) for k in range(g.shape[1])])
        if np.max(np.abs(rows - self.a)) > tol:
            raise ValidationError(f"row marginals off by {np.max(np.abs(rows - self.a)):.3e}")
        if np.max(np.abs(cols - self.b)) > tol:
            raise ValidationError(f"column marginals off by {np.max(np.abs(cols - self.b)):.3e}")
        return self


@dataclass
class BoundCheckRecord:
    n: int
    m: int
    gw_uniform: float
    approx_uniform: float
    bound: float
    identity_residual: float   # relative to A
    mu_C: float
    mu_D: float
    var_C: float
    var_D: float

    @property
    def abs_err(self) -> float:
        return abs(self.gw_uniform - self.approx_uniform)

    @property
    def holds(self) -> bool:
        return self.abs_err <= self.bound + 1e-12


def as_square_matrix(M, name: str = "matrix") -> list[list[float]]:
    A = np.asarray(M, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {A.shape}")
    return A.tolist()


def uniform_plan(n: int, m: int) -> TransportPlan:
    if n < 1 or m < 1:
        raise ParameterError("uniform_plan needs n, m >= 1")
    return TransportPlan(
        gamma=np.full((n, m), 1.0 / (n * m)),
        a=np.full(n, 1.0 / n),
        b=np.full(m, 1.0 / m),
    )


def gw_cost(C, D, plan: TransportPlan) -> float:
    """Exact quadruple-loop evaluation of sum |C_ij - D_kl|^2 g_ik g_jl.

    Pure Python, strictly sequential in (i, j, k, l); this is the oracle
    and is deliberately O(n^2 m^2).
    """
    Cl = as_square_matrix(C, "C")
    Dl = as_square_matrix(D, "D")
    g = np.asarray(plan.gamma, dtype=np.float64)
    n, m = len(Cl), len(Dl)
    if g.shape != (n, m):
        raise ShapeError(f"plan shape {g.shape} does not match ({n}, {m})")
    gl = g.tolist()
    return sum(
        (t := cij - Dk[l]) * t * gik * gj[l]
        for i in range(n)
        for gi in (gl[i],)
        for Ci in (Cl[i],)
        for j in range(n)
        for cij in (Ci[j],)
        for gj in (gl[j],)
        for k in range(m)
        for gik in (gi[k],)
        for Dk in (Dl[k],)
        for l in range(m)
    )


def row_mean_features(M) -> list[float]:
    A = np.asarray(M, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError("row_mean_features expects a matrix")
    n = A.shape[1]
    return [seq_sum(A[i]) / n for i in range(A.shape[0])]


def feature_approx_cost(C, D, plan: TransportPlan, absolute: bool = False) -> float:
    """Feature-compressed relaxation under a given plan.

    Default is the signed-product form
    sum (f_C(i)-f_D(k)) (f_C(j)-f_D(l)) g_ik g_jl, which factorizes exactly
    into (sum_{ik} (f_C(i)-f_D(k)) g_ik)^2; the quadruple loop agrees to
    rounding and the tests cross-check it. `absolute=True` evaluates the
    |.||.| variant instead (same factorization with absolute differences);
    the two differ whenever feature differences change sign, and the bound
    analysis uses the signed form only.
    """
    Cl = as_square_matrix(C, "C")
    Dl = as_square_matrix(D, "D")
    g = np.asarray(plan.gamma, dtype=np.float64)
    n, m = len(Cl), len(Dl)
    if g.shape != (n, m):
        raise ShapeError(f"plan shape {g.shape} does not match ({n}, {m})")
    fC = row_mean_features(Cl)
    fD = row_mean_features(Dl)
    gl = g.tolist()
    delta = 0.0
    for i in range(n):
        gi = gl[i]
        fi = fC[i]
        for k in range(m):
            d = fi - fD[k]
            if absolute and d < 0.0:
                d = -d
            delta += d * gi[k]
    return delta * delta


def rms_variance(M) -> tuple[float, float]:
    """(global mean, RMS variance): mean over all entries of (x - mu)^2."""
    A = np.asarray(M, dtype=np.float64)
    flat = A.ravel()
    count = flat.size
    mu = seq_sum(flat) / count
    var = seq_sum((flat - mu) * (flat - mu)) / count
    return mu, var


def identity_terms(C, D) -> tuple[float, float, float]:
    """(A, B, residual) of the expansion identity, with A and B evaluated
    by literal quadruple loops and residual = |(A-B) - n^2 m^2 (var_C + var_D)|."""
    Cl = as_square_matrix(C, "C")
    Dl = as_square_matrix(D, "D")
    n, m = len(Cl), len(Dl)
    A = sum(
        (t := cij - Dk[l]) * t
        for i in range(n)
        for Ci in (Cl[i],)
        for j in range(n)
        for cij in (Ci[j],)
        for k in range(m)
        for Dk in (Dl[k],)
        for l in range(m)
    )
    fC = row_mean_features(Cl)
    fD = row_mean_features(Dl)
    B = sum(
        (fC[i] - fD[k]) * (fC[j] - fD[l])
        for i in range(n)
        for j in range(n)
        for k in range(m)
        for l in range(m)
    )
    _, var_C = rms_variance(Cl)
    _, var_D = rms_variance(Dl)
    residual = abs((A - B) - (n * n) * (m * m) * (var_C + var_D))
    return A, B, residual


def identity_residual(C, D) -> float:
    """|(A - B) - n^2 m^2 (Sigma_C^2 + Sigma_D^2)|; ~0 for any matrices."""
    return identity_terms(C, D)[2]


def _require_row_stochastic(M, name: str) -> list[list[float]]:
    rows = as_square_matrix(M, name)
    for i, row in enumerate(rows):
        if any(x < 0.0 for x in row):
            raise ValidationError(f"{name} row {i} has a negative entry")
        s = seq_sum(row)
        if abs(s - 1.0) > 1e-12:
            raise ValidationError(f"{name} row {i} sums to {s!r}, not 1")
    return rows


def check_bound(C, D, include_identity: bool = True) -> BoundCheckRecord:
    """Uniform-plan error bound record for row-stochastic inputs.

    bound = (n-1)/n^2 + (m-1)/m^2 and |gw_uniform - approx_uniform| must
    not exceed it; the record also carries the expansion-identity residual
    (relative to A) and the global means/variances of both matrices.
    `include_identity=False` skips the two quadruple identity loops
    (reported residual 0.0) for bound-only sweeps.
    """
    Cl = _require_row_stochastic(C, "C")
    Dl = _require_row_stochastic(D, "D")
    n, m = len(Cl), len(Dl)
    plan = uniform_plan(n, m)
    gw_u = gw_cost(Cl, Dl, plan)
    approx_u = feature_approx_cost(Cl, Dl, plan)
    if include_identity:
        A, _, residual = identity_terms(Cl, Dl)
    else:
        A, residual = 1.0, 0.0
    mu_C, var_C = rms_variance(Cl)
    mu_D, var_D = rms_variance(Dl)
    return BoundCheckRecord(
        n=n,
        m=m,
        gw_uniform=gw_u,
        approx_uniform=approx_u,
        bound=(n - 1) / (n * n) + (m - 1) / (m * m),
        identity_residual=residual / max(abs(A), 1e-300),
        mu_C=mu_C,
        mu_D=mu_D,
        var_C=var_C,
        var_D=var_D,
    )


def worst_case_row_variance(n: int) -> float:
    """RMS variance of the one-hot row-stochastic matrix: (n-1)/n^2."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    return (n - 1) / (n * n)


def one_hot_matrix(n: int, column: int = 0) -> list[list[float]]:
    """Row-stochastic matrix with all mass in one column (the worst case)."""
    return [[1.0 if j == column else 0.0 for j in range(n)] for _ in range(n)]


def _perm_cost_reduced(Cl, Dl, perm) -> float:
    """gw cost of the permutation plan (1/n) P: (1/n^2) sum (C_ij - D_p(i)p(j))^2."""
    n = len(Cl)
    total = 0.0
    for i in range(n):
        Ci = Cl[i]
        Dpi = Dl[perm[i]]
        for j in range(n):
            d = Ci[j] - Dpi[perm[j]]
            total += d * d
    return total / (n * n)


def permutation_plan(perm, n: int) -> TransportPlan:
    gamma = np.zeros((n, n))
    for i, k in enumerate(perm):
        gamma[i, k] = 1.0 / n
    return TransportPlan(gamma=gamma, a=np.full(n, 1.0 / n), b=np.full(n, 1.0 / n))


def gw_bruteforce_perm(C, D) -> tuple[float, list[int]]:
    """Minimum gw_cost over all n! permutation plans (1/n) P.

    An upper bound on the true GW optimum: the quadratic objective may
    attain its minimum off the permutation vertices. Lexicographically
    smallest permutation wins ties; n = m <= 8 enforced.
    """
    Cl = as_square_matrix(C, "C")
    Dl = as_square_matrix(D, "D")
    n, m = len(Cl), len(Dl)
    if n != m:
        raise ParameterError(f"brute force needs n = m, got {n} vs {m}")
    if n > 8:
        raise ParameterError(f"brute force capped at n = 8, got {n}")
    best_cost = None
    best_perm = None
    for perm in itertools.permutations(range(n)):
        c = _perm_cost_reduced(Cl, Dl, perm)
        if best_cost is None or c < best_cost:
            best_cost = c
            best_perm = perm
    exact = gw_cost(Cl, Dl, permutation_plan(best_perm, n))
    return exact, list(best_perm)


@dataclass
class EntropicResult:
    cost: float                # exact quadruple-loop cost of the returned plan
    plan: TransportPlan
    converged: bool
    epsilon: float             # final regularization actually used


def _sinkhorn(T: np.ndarray, eps: float, a: np.ndarray, b: np.ndarray,
              max_iters: int = 1000, marginal_tol: float = 1e-12) -> np.ndarray:
    """Entropic scaling iterations on the min-shifted kernel exp(-(T - min T)/eps).

    The shift rescales u and v only, leaving the balanced plan unchanged.
    The kernel is floored at 1e-300 so extreme spreads cannot produce
    empty rows; any residual marginal error is repaired by feasibility
    rounding afterwards.
    """
    K = np.maximum(np.exp(-(T - T.min()) / eps), 1e-300)
    u = np.ones_like(a)
    v = np.ones_like(b)
    for it in range(max_iters):
        v = b / (K.T @ u)
        u = a / (K @ v)
        if it % 10 == 9:
            P = u[:, None] * K * v[None, :]
            if np.max(np.abs(P.sum(axis=0) - b)) < marginal_tol:
                break
    return _round_to_feasible(u[:, None] * K * v[None, :], a, b)


def _round_to_feasible(g: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project a nonnegative almost-coupling onto the transport polytope
    (scale rows, scale columns, then add the rank-one residual)."""
    g = np.where(np.isfinite(g), g, 0.0)
    g = np.maximum(g, 0.0)
    rows = g.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(rows > 0, np.minimum(1.0, a / rows), 1.0)
    g = g * r[:, None]
    cols = g.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(cols > 0, np.minimum(1.0, b / cols), 1.0)
    g = g * c[None, :]
    err_a = a - g.sum(axis=1)
    err_b = b - g.sum(axis=0)
    total = err_a.sum()
    if total > 0:
        g = g + np.outer(err_a, err_b) / total
    return g


def _linearized_cost(Csq_a: np.ndarray, Dsq_b: np.ndarray, Cn: np.ndarray,
                     Dn: np.ndarray, g: np.ndarray) -> np.ndarray:
    """T(g)_ik = sum_jl (C_ij - D_kl)^2 g_jl, via the marginal expansion."""
    return Csq_a[:, None] + Dsq_b[None, :] - 2.0 * (Cn @ g @ Dn.T)


def _plan_cost_fast(Cn: np.ndarray, Dn: np.ndarray, g: np.ndarray) -> float:
    a = g.sum(axis=1)
    b = g.sum(axis=0)
    return float(a @ (Cn * Cn) @ a + b @ (Dn * Dn) @ b - 2.0 * np.sum((Cn @ g @ Dn.T) * g))


def _round_to_perm(g: np.ndarray) -> list[int]:
    """Greedy max-mass assignment of a square plan to a permutation."""
    n = g.shape[0]
    gg = g.copy()
    perm = [0] * n
    for _ in range(n):
        i, k = np.unravel_index(int(np.argmax(gg)), gg.shape)
        perm[i] = int(k)
        gg[i, :] = -np.inf
        gg[:, k] = -np.inf
    return perm


def _local_search(Cl, Dl, perm: list[int]) -> tuple[float, list[int]]:
    """Best-improvement 2-swap + 3-cycle descent on permutation plans.

    Best-improvement (full neighborhood scan, steepest step) gives the
    global optimum a far larger attraction basin than first-improvement
    on these quadratic assignment landscapes.
    """
    n = len(Cl)
    perm = list(perm)
    best = _perm_cost_reduced(Cl, Dl, perm)
    while True:
        step_cost = best
        step_perm = None
        for i in range(n):
            for j in range(i + 1, n):
                perm[i], perm[j] = perm[j], perm[i]
                c = _perm_cost_reduced(Cl, Dl, perm)
                perm[i], perm[j] = perm[j], perm[i]
                if c < step_cost - 1e-15:
                    step_cost = c
                    step_perm = list(perm)
                    step_perm[i], step_perm[j] = step_perm[j], step_perm[i]
        for (i, j, k) in itertools.combinations(range(n), 3):
            for rot in ((j, k, i), (k, i, j)):
                q = list(perm)
                q[i], q[j], q[k] = perm[rot[0]], perm[rot[1]], perm[rot[2]]
                c = _perm_cost_reduced(Cl, Dl, q)
                if c < step_cost - 1e-15:
                    step_cost = c
                    step_perm = q
        if step_perm is None:
            return best, perm
        best = step_cost
        perm = step_perm


def gw_entropic(C, D, a=None, b=None, epsilon: float | None = None,
                max_outer: int = 200, tol: float = 1e-7,
                restarts: int = 24, seed: int = 0) -> EntropicResult:
    """Entropic GW: alternate a linearized cost with Sinkhorn scaling.

    The solver anneals the regularization down to `epsilon` (default
    0.05 x the larger entry range of C and D), from three structured
    starts (uniform plan, sorted-feature matching, identity when square).
    In the small-regularization regime (epsilon below half the data
    spread, uniform marginals, n = m) it additionally refines greedy
    permutation roundings and `restarts` seeded random permutations by
    2-swap/3-cycle descent and returns the cheapest candidate; at large
    epsilon the refinement is skipped so the smooth entropic plan itself
    is returned (epsilon -> inf yields the uniform plan). The reported
    cost is always the exact quadruple-loop gw_cost of the returned plan;
    non-convergence of the scaling iterations is flagged, never raised.
    """
    from .rng import Rng

    Cl = as_square_matrix(C, "C")
    Dl = as_square_matrix(D, "D")
    Cn = np.asarray(Cl)
    Dn = np.asarray(Dl)
    n, m = len(Cl), len(Dl)
    a = np.full(n, 1.0 / n) if a is None else np.asarray(a, dtype=np.float64)
    b = np.full(m, 1.0 / m) if b is None else np.asarray(b, dtype=np.float64)
    if a.shape != (n,) or b.shape != (m,):
        raise ShapeError("marginal lengths do not match the matrices")
    spread = max(float(np.ptp(Cn)) if Cn.size else 0.0,
                 float(np.ptp(Dn)) if Dn.size else 0.0, 1e-12)
    if epsilon is None:
        epsilon = 0.05 * spread
    if epsilon <= 0:
        raise ParameterError("epsilon must be > 0")

    Csq_a = (Cn * Cn) @ a
    Dsq_b = (Dn * Dn) @ b
    ladder = [x for x in (0.3 * spread, 0.08 * spread) if x > epsilon] + [epsilon]

    uniform = np.outer(a, b)
    inits = [uniform]
    fC = np.argsort(-Cn.mean(axis=1), kind="stable")
    fD = np.argsort(-Dn.mean(axis=1), kind="stable")
    P = np.zeros((n, m))
    for r in range(min(n, m)):
        P[fC[r], fD[r]] = a[fC[r]]
    inits.append(0.9 * P + 0.1 * uniform)
    if n == m:
        inits.append(0.9 * np.diag(a) + 0.1 * uniform)

    candidates: list[tuple[np.ndarray, bool]] = []   # (plan, converged flag)
    for g0 in inits:
        g = g0.copy()
        converged = False
        for eps in ladder:
            converged = False
            for _ in range(max_outer):
                T = _linearized_cost(Csq_a, Dsq_b, Cn, Dn, g)
                g_new = _sinkhorn(T, eps, a, b)
                delta = float(np.max(np.abs(g_new - g)))
                g = g_new
                if delta < tol:
                    converged = True
                    break
        candidates.append((g, converged))

    # Vertex refinement belongs to the small-regularization regime only: at
    # epsilon comparable to the data spread the entropic objective is
    # entropy-dominated and the honest answer is the smooth plan itself
    # (epsilon -> inf must return the uniform plan).
    refine = (
        n == m
        and epsilon < 0.5 * spread
        and np.max(np.abs(a - 1.0 / n)) < 1e-12
        and np.max(np.abs(b - 1.0 / m)) < 1e-12
    )
    if refine:
        perm_seeds = [_round_to_perm(g) for g, _ in candidates]
        # spectral alignment: match nodes by leading-eigenvector order
        # (sign-ambiguous, so seed both orientations)
        wC, vC = np.linalg.eigh(Cn)
        wD, vD = np.linalg.eigh(Dn)
        lead_C = vC[:, int(np.argmax(np.abs(wC)))]
        lead_D = vD[:, int(np.argmax(np.abs(wD)))]
        orderD = np.argsort(-lead_D, kind="stable")
        for orientation in (lead_C, -lead_C):
            orderC = np.argsort(-orientation, kind="stable")
            perm = [0] * n
            for r in range(n):
                perm[int(orderC[r])] = int(orderD[r])
            perm_seeds.append(perm)
        rng = Rng(seed)
        for _ in range(max(0, restarts)):
            perm = list(range(n))
            rng.shuffle(perm)
            perm_seeds.append(perm)
        seen = set()
        best_perm = None
        best_perm_cost = None
        for p0 in perm_seeds:
            c_opt, p_opt = _local_search(Cl, Dl, p0)
            if best_perm_cost is None or c_opt < best_perm_cost:
                best_perm_cost, best_perm = c_opt, p_opt
            key = tuple(p_opt)
            if key not in seen:
                seen.add(key)
                candidates.append((np.asarray(permutation_plan(p_opt, n).gamma), True))
        # iterated local search: seeded double-transposition kicks escape
        # basins the multi-start missed
        if best_perm is not None and n >= 4:
            for _ in range(12):
                kicked = list(best_perm)
                i, j = rng.randint(0, n - 1), rng.randint(0, n - 1)
                k2, l2 = rng.randint(0, n - 1), rng.randint(0, n - 1)
                kicked[i], kicked[j] = kicked[j], kicked[i]
                kicked[k2], kicked[l2] = kicked[l2], kicked[k2]
                c_opt, p_opt = _local_search(Cl, Dl, kicked)
                if c_opt < best_perm_cost:
                    best_perm_cost, best_perm = c_opt, p_opt
                key = tuple(p_opt)
                if key not in seen:
                    seen.add(key)
                    candidates.append((np.asarray(permutation_plan(p_opt, n).gamma), True))

    best = None
    for g, conv in candidates:
        score = _plan_cost_fast(Cn, Dn, g)
        if best is None or score < best[0]:
            best = (score, g, conv)

    _, g_best, conv_best = best
    plan = TransportPlan(gamma=g_best, a=a, b=b).validate(tol=1e-8)
    return EntropicResult(
        cost=gw_cost(Cl, Dl, plan),
        plan=plan,
        converged=conv_best,
        epsilon=epsilon,
    )
