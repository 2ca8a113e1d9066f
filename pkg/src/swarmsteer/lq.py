"""Closed-form steering for linear dynamics with quadratic costs.

With linear drift, quadratic interaction and state costs, and Gaussian
endpoint distributions, the optimal feedback is affine and the problem
reduces to matrix ODEs: a Riccati equation for the value curvature, a
mirrored Riccati for its time-reversed companion, and a linear two-point
boundary problem for the means and bias terms.  The two curvature flows
carry split boundary data (the covariance is pinned at both ends while the
curvature is pinned at neither), which is resolved by a damped Newton
iteration on the initial curvature; covariances then follow from the
algebraic identity ``eps * inv(Sigma) = Pi + H``.

All integration is fixed-step RK4: curvatures on a mesh twice as fine as
the reporting mesh so the mean system can take half-step stage values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LqSpec",
    "LqSolution",
    "CovariancePath",
    "ConvergenceError",
    "solve_covariance",
    "solve_means",
    "solve_lq",
    "lq_policy",
    "riccati_residual",
    "companion_residual",
    "lyapunov_residual",
    "mean_residual",
    "identity_gap",
    "propagate_covariance",
]


class ConvergenceError(RuntimeError):
    """Boundary matching failed or a trajectory left the feasible cone."""


def _spd_check(mat: np.ndarray, name: str):
    sym = 0.5 * (mat + mat.T)
    try:
        np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not symmetric positive definite") from None


@dataclass(frozen=True)
class LqSpec:
    """Linear dynamics, quadratic couplings and Gaussian endpoints.

    Shapes: ``A`` (L, d, d), ``Abar`` (L, L, d, d) symmetric in both the
    species pair and each matrix, ``sigma`` (d, p), ``Q`` (L, d, d) PSD,
    ``means0/means1`` (L, d), ``covs0/covs1`` (L, d, d) SPD.
    """

    A: np.ndarray
    Abar: np.ndarray
    sigma: np.ndarray
    Q: np.ndarray
    eps: float
    means0: np.ndarray
    covs0: np.ndarray
    means1: np.ndarray
    covs1: np.ndarray

    def __post_init__(self):
        for name in ("A", "Abar", "sigma", "Q", "means0", "covs0", "means1", "covs1"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        count, dim = self.A.shape[0], self.A.shape[1]
        if self.A.shape != (count, dim, dim):
            raise ValueError(f"A has shape {self.A.shape}")
        if self.Abar.shape != (count, count, dim, dim):
            raise ValueError(f"Abar has shape {self.Abar.shape}, "
                             f"expected ({count}, {count}, {dim}, {dim})")
        if self.sigma.ndim != 2 or self.sigma.shape[0] != dim:
            raise ValueError(f"sigma has shape {self.sigma.shape}")
        if self.Q.shape != (count, dim, dim):
            raise ValueError(f"Q has shape {self.Q.shape}")
        if self.eps <= 0:
            raise ValueError(f"noise intensity must be positive, got {self.eps}")
        for l in range(count):
            for m in range(count):
                if not np.allclose(self.Abar[l, m], self.Abar[l, m].T, atol=1e-12):
                    raise ValueError(f"Abar[{l}][{m}] is not symmetric")
                if not np.allclose(self.Abar[l, m], self.Abar[m, l], atol=1e-12):
                    raise ValueError(f"Abar[{l}][{m}] differs from Abar[{m}][{l}]")
        for l in range(count):
            _spd_check(self.covs0[l], f"initial covariance of species {l}")
            _spd_check(self.covs1[l], f"target covariance of species {l}")
            if not _controllable(self.closed_drift(l), self.sigma):
                raise ValueError(f"(A - sum Abar, sigma) of species {l} is uncontrollable")

    @property
    def count(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def closed_drift(self, ell: int) -> np.ndarray:
        """Drift matrix of the interaction-compensated dynamics."""
        return self.A[ell] - self.Abar[ell].sum(axis=0)

    @property
    def noise_matrix(self) -> np.ndarray:
        return self.sigma @ self.sigma.T


def _controllable(a: np.ndarray, b: np.ndarray) -> bool:
    dim = a.shape[0]
    blocks = [b]
    for _ in range(dim - 1):
        blocks.append(a @ blocks[-1])
    svals = np.linalg.svd(np.hstack(blocks), compute_uv=False)
    return svals[-1] > 1e-10 * svals[0] if svals[0] > 0 else False


def _vech(mat: np.ndarray) -> np.ndarray:
    idx = np.triu_indices(mat.shape[0])
    return mat[idx]


def _unvech(vec: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros((dim, dim))
    idx = np.triu_indices(dim)
    out[idx] = vec
    return out + np.triu(out, 1).T


@dataclass
class CovariancePath:
    """Curvature pair and covariance on the fine mesh (4*mesh+1 points)."""

    ts: np.ndarray      # fine mesh times
    Pi: np.ndarray      # (nf, d, d)
    H: np.ndarray       # (nf, d, d)
    Sigma: np.ndarray   # (nf, d, d)
    mismatch: float


def _integrate_curvatures(spec: LqSpec, ell: int, pi0: np.ndarray,
                          n_fine: int) -> tuple[np.ndarray, np.ndarray] | None:
    """RK4 for the curvature pair from t=0; None on blow-up."""
    a_cl = spec.closed_drift(ell)
    noise = spec.noise_matrix
    q = spec.Q[ell]
    h = 1.0 / n_fine

    def rhs(state):
        pi, hh = state
        dpi = pi @ noise @ pi - q - a_cl.T @ pi - pi @ a_cl
        dhh = -hh @ noise @ hh + q - a_cl.T @ hh - hh @ a_cl
        return dpi, dhh

    pis = np.empty((n_fine + 1,) + pi0.shape)
    hhs = np.empty_like(pis)
    pis[0] = pi0
    hhs[0] = spec.eps * np.linalg.inv(spec.covs0[ell]) - pi0
    for k in range(n_fine):
        state = (pis[k], hhs[k])
        k1 = rhs(state)
        k2 = rhs((state[0] + 0.5 * h * k1[0], state[1] + 0.5 * h * k1[1]))
        k3 = rhs((state[0] + 0.5 * h * k2[0], state[1] + 0.5 * h * k2[1]))
        k4 = rhs((state[0] + h * k3[0], state[1] + h * k3[1]))
        pis[k + 1] = pis[k] + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        hhs[k + 1] = hhs[k] + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        pis[k + 1] = 0.5 * (pis[k + 1] + pis[k + 1].T)
        hhs[k + 1] = 0.5 * (hhs[k + 1] + hhs[k + 1].T)
        if not (np.all(np.isfinite(pis[k + 1])) and np.all(np.isfinite(hhs[k + 1]))) \
                or max(np.abs(pis[k + 1]).max(), np.abs(hhs[k + 1]).max()) > 1e10:
            return None
    return pis, hhs


def solve_covariance(spec: LqSpec, ell: int, mesh: int = 400) -> CovariancePath:
    """Curvature pair and covariance for one species.

    The initial curvature is the unknown of a boundary-matching problem:
    integrating both curvature flows forward must land their sum on
    ``eps * inv(covs1)``.  A damped Newton iteration with finite-difference
    Jacobian solves it; the covariance then follows pointwise from the
    inverse of the curvature sum.

    Raises
    ------
    ConvergenceError
        If no starting point drives the boundary mismatch below tolerance,
        or the resulting covariance loses positive definiteness.
    """
    n_fine = 4 * mesh
    n_coarse = min(max(mesh, 100), n_fine)
    dim = spec.dim
    target = spec.eps * np.linalg.inv(spec.covs1[ell])
    target = 0.5 * (target + target.T)
    tol = 1e-11 * max(1.0, np.abs(target).max())
    base = spec.eps * np.linalg.inv(spec.covs0[ell])
    base = 0.5 * (base + base.T)

    def newton(vec, nsteps, iters):
        """Damped Newton on the boundary mismatch; returns (vec, paths, norm)."""

        def mismatch(pi0_vec):
            out = _integrate_curvatures(spec, ell, _unvech(pi0_vec, dim), nsteps)
            if out is None:
                return None, None
            return _vech(out[0][-1] + out[1][-1] - target), out

        res, paths = mismatch(vec)
        if res is None:
            return None
        norm = np.abs(res).max()
        for _ in range(iters):
            if norm < tol:
                break
            jac = np.empty((res.size, res.size))
            step = 1e-7 * (1.0 + np.abs(vec).max())
            failed = False
            for j in range(res.size):
                trial = vec.copy()
                trial[j] += step
                res_j, _ = mismatch(trial)
                if res_j is None:
                    failed = True
                    break
                jac[:, j] = (res_j - res) / step
            if failed:
                break
            try:
                delta = np.linalg.solve(jac, -res)
            except np.linalg.LinAlgError:
                break
            lam, improved = 1.0, False
            while lam > 1e-8:
                res_new, paths_new = mismatch(vec + lam * delta)
                if res_new is not None and np.abs(res_new).max() < norm:
                    vec = vec + lam * delta
                    res, paths, norm = res_new, paths_new, np.abs(res_new).max()
                    improved = True
                    break
                lam *= 0.5
            if not improved:
                break
        return vec, paths, norm

    best = None
    for frac in (0.5, 0.35, 0.65, 0.2, 0.8, 0.05, 0.95):
        # locate the initial curvature cheaply, then polish at full resolution
        coarse = newton(_vech(frac * base), n_coarse, iters=100)
        vec = coarse[0] if coarse is not None else _vech(frac * base)
        refined = newton(vec, n_fine, iters=100)
        if refined is None:
            continue
        _, paths, norm = refined
        if norm < tol:
            best = (paths, norm)
            break
        if best is None or norm < best[1]:
            best = (paths, norm)
    if best is None or best[1] >= tol:
        achieved = best[1] if best is not None else float("inf")
        raise ConvergenceError(
            f"boundary matching for species {ell} stalled at mismatch {achieved:.3e}")

    (pis, hhs), norm = best
    ts = np.linspace(0.0, 1.0, n_fine + 1)
    sigmas = np.empty_like(pis)
    for k in range(n_fine + 1):
        total = pis[k] + hhs[k]
        try:
            np.linalg.cholesky(0.5 * (total + total.T))
        except np.linalg.LinAlgError:
            raise ConvergenceError(
                f"covariance of species {ell} lost positive definiteness "
                f"at mesh point {k} (t={ts[k]:.4f})") from None
        sig = spec.eps * np.linalg.inv(total)
        sigmas[k] = 0.5 * (sig + sig.T)
    return CovariancePath(ts=ts, Pi=pis, H=hhs, Sigma=sigmas, mismatch=norm)


def _mean_system(spec: LqSpec, pis_fine: np.ndarray) -> np.ndarray:
    """Time-varying matrix of the stacked (bias, mean) linear system.

    State ordering: all bias vectors n_l first, then all means m_l.
    """
    count, dim = spec.count, spec.dim
    noise = spec.noise_matrix
    nf = pis_fine.shape[1]
    size = 2 * count * dim
    sys = np.zeros((nf, size, size))
    for l in range(count):
        a_fb = spec.closed_drift(l)[None] - noise[None] @ pis_fine[l]   # (nf, d, d)
        rn = slice(l * dim, (l + 1) * dim)
        rm = slice(count * dim + l * dim, count * dim + (l + 1) * dim)
        sys[:, rn, rn] -= np.transpose(a_fb, (0, 2, 1))
        sys[:, rm, rm] += a_fb
        sys[:, rm, rn] += noise[None]
        for m in range(count):
            cn = slice(m * dim, (m + 1) * dim)
            cm = slice(count * dim + m * dim, count * dim + (m + 1) * dim)
            sys[:, rn, cn] -= spec.Abar[l, m][None]
            sys[:, rn, cm] += (pis_fine[l] @ spec.Abar[l, m]
                               + spec.Abar[l, m][None] @ pis_fine[m])
            sys[:, rm, cm] += spec.Abar[l, m][None]
    return sys


def _rk4_linear(sys_half: np.ndarray, z0: np.ndarray, nsteps: int) -> np.ndarray:
    """Fixed-step RK4 for z' = S(t) z; ``sys_half`` holds 2*nsteps+1 samples."""
    h = 1.0 / nsteps
    out = np.empty((nsteps + 1,) + z0.shape)
    out[0] = z0
    for k in range(nsteps):
        s0, s_half, s1 = sys_half[2 * k], sys_half[2 * k + 1], sys_half[2 * k + 2]
        z = out[k]
        k1 = s0 @ z
        k2 = s_half @ (z + 0.5 * h * k1)
        k3 = s_half @ (z + 0.5 * h * k2)
        k4 = s1 @ (z + h * k3)
        out[k + 1] = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return out


def solve_means(spec: LqSpec, cov_paths: list, mesh: int = 400):
    """Bias and mean trajectories for all species jointly.

    The stacked system is linear and homogeneous, so the two-point boundary
    data reduce to one linear solve against the fundamental matrix over the
    horizon: the unknown initial biases must map the pinned initial means
    onto the pinned terminal means.  Integration runs at half the reporting
    step with stage values from the fine curvature mesh.

    Returns ``(n, m)`` with shapes (L, mesh+1, d).
    """
    count, dim = spec.count, spec.dim
    pis_fine = np.stack([cp.Pi for cp in cov_paths])
    sys_fine = _mean_system(spec, pis_fine)
    size = 2 * count * dim

    fundamental = _rk4_linear(sys_fine, np.eye(size), 2 * mesh)[-1]
    map_mn = fundamental[count * dim:, :count * dim]
    map_mm = fundamental[count * dim:, count * dim:]
    m0 = spec.means0.reshape(-1)
    m1 = spec.means1.reshape(-1)
    svals = np.linalg.svd(map_mn, compute_uv=False)
    if svals[0] == 0 or svals[-1] < 1e-12 * svals[0]:
        raise ConvergenceError("boundary map of the mean system is singular "
                               "(mean dynamics uncontrollable)")
    n0 = np.linalg.solve(map_mn, m1 - map_mm @ m0)

    traj_half = _rk4_linear(sys_fine, np.concatenate([n0, m0]), 2 * mesh)
    traj = traj_half[::2]
    n = traj[:, :count * dim].reshape(mesh + 1, count, dim).transpose(1, 0, 2)
    m = traj[:, count * dim:].reshape(mesh + 1, count, dim).transpose(1, 0, 2)
    return n, m, traj_half


@dataclass
class LqSolution:
    """Mesh trajectories of curvatures, covariances, biases and means."""

    spec: LqSpec
    ts: np.ndarray       # (mesh+1,)
    Pi: np.ndarray       # (L, mesh+1, d, d)
    H: np.ndarray
    Sigma: np.ndarray
    n: np.ndarray        # (L, mesh+1, d)
    m: np.ndarray
    fine: list           # per-species CovariancePath on the quarter-step mesh
    mean_fine: np.ndarray           # (2*mesh+1, 2*L*d) stacked (n, m) path
    boundary_mismatch: np.ndarray   # (L,) curvature-sum mismatch at t=1
    mean_boundary_error: float

    @property
    def mesh(self) -> int:
        return self.ts.size - 1


def solve_lq(spec: LqSpec, mesh: int = 400) -> LqSolution:
    """Full solve: per-species covariance stage, then the joint mean stage."""
    cov_paths = [solve_covariance(spec, l, mesh) for l in range(spec.count)]
    n, m, mean_fine = solve_means(spec, cov_paths, mesh)
    ts = np.linspace(0.0, 1.0, mesh + 1)
    take = slice(0, 4 * mesh + 1, 4)
    return LqSolution(
        spec=spec,
        ts=ts,
        Pi=np.stack([cp.Pi[take] for cp in cov_paths]),
        H=np.stack([cp.H[take] for cp in cov_paths]),
        Sigma=np.stack([cp.Sigma[take] for cp in cov_paths]),
        n=n,
        m=m,
        fine=cov_paths,
        mean_fine=mean_fine,
        boundary_mismatch=np.array([cp.mismatch for cp in cov_paths]),
        mean_boundary_error=float(np.abs(m[:, -1] - spec.means1).max()),
    )


def lq_policy(sol: LqSolution, ell: int, t: float, x) -> np.ndarray:
    """Affine feedback ``sigma^T (-Pi(t) x + n(t))`` for species ``ell``.

    Mesh quantities are interpolated linearly in time; ``x`` may be a
    single state (d,) or a batch (N, d).
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"policy is defined on [0, 1], got t={t}")
    mesh = sol.mesh
    pos = t * mesh
    k = min(int(pos), mesh - 1)
    frac = pos - k
    pi_t = (1 - frac) * sol.Pi[ell, k] + frac * sol.Pi[ell, k + 1]
    n_t = (1 - frac) * sol.n[ell, k] + frac * sol.n[ell, k + 1]
    x = np.asarray(x, dtype=float)
    return (-x @ pi_t.T + n_t) @ sol.spec.sigma


def _stencil_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """Sixth-order seven-point derivative at interior mesh points.

    High order keeps the differentiation truncation well below the solver
    error even where the curvature flow is steep.
    """
    return (-values[:-6] + 9 * values[1:-5] - 45 * values[2:-4]
            + 45 * values[4:-2] - 9 * values[5:-1] + values[6:]) / (60 * h)


def _max_spectral(mats: np.ndarray) -> float:
    return float(max(np.linalg.norm(m, 2) for m in mats))


def riccati_residual(sol: LqSolution, ell: int) -> float:
    """Max spectral defect of the curvature flow over the stored mesh.

    Differentiation uses the fine integration mesh, where the stencil
    truncation stays negligible even in the steep boundary layers.
    """
    spec = sol.spec
    h = 1.0 / (4 * sol.mesh)
    a_cl, noise, q = spec.closed_drift(ell), spec.noise_matrix, spec.Q[ell]
    pi = sol.fine[ell].Pi
    rhs = pi @ noise @ pi - q - np.einsum("ab,kbc->kac", a_cl.T, pi) - pi @ a_cl
    return _max_spectral(_stencil_derivative(pi, h) - rhs[3:-3])


def companion_residual(sol: LqSolution, ell: int) -> float:
    """Max spectral defect of the time-reversed curvature flow."""
    spec = sol.spec
    h = 1.0 / (4 * sol.mesh)
    a_cl, noise, q = spec.closed_drift(ell), spec.noise_matrix, spec.Q[ell]
    hh = sol.fine[ell].H
    rhs = -hh @ noise @ hh + q - np.einsum("ab,kbc->kac", a_cl.T, hh) - hh @ a_cl
    return _max_spectral(_stencil_derivative(hh, h) - rhs[3:-3])


def lyapunov_residual(sol: LqSolution, ell: int) -> float:
    """Max spectral defect of the covariance flow over the stored mesh.

    Noncircular: the stored covariance comes from the curvature identity,
    not from integrating this equation.
    """
    spec = sol.spec
    h = 1.0 / (4 * sol.mesh)
    noise = spec.noise_matrix
    a_fb = spec.closed_drift(ell)[None] - noise[None] @ sol.fine[ell].Pi
    sig = sol.fine[ell].Sigma
    rhs = a_fb @ sig + sig @ np.transpose(a_fb, (0, 2, 1)) + spec.eps * noise[None]
    return _max_spectral(_stencil_derivative(sig, h) - rhs[3:-3])


def mean_residual(sol: LqSolution) -> float:
    """Max defect of the stacked bias/mean system over the stored mesh."""
    spec = sol.spec
    h = 1.0 / (2 * sol.mesh)
    count = spec.count
    pis_half = np.stack([sol.fine[l].Pi[::2] for l in range(count)])
    sys = _mean_system(spec, pis_half)
    z = sol.mean_fine
    rhs = np.einsum("kab,kb->ka", sys, z)
    return float(np.abs(_stencil_derivative(z, h) - rhs[3:-3]).max())


def identity_gap(sol: LqSolution, ell: int) -> float:
    """Max spectral gap of eps * inv(Sigma) - Pi - H on the reporting mesh."""
    spec = sol.spec
    gaps = spec.eps * np.linalg.inv(sol.Sigma[ell]) - sol.Pi[ell] - sol.H[ell]
    return _max_spectral(gaps)


def propagate_covariance(sol: LqSolution, ell: int) -> np.ndarray:
    """Independently integrate the covariance flow from its initial value.

    RK4 on the reporting mesh with half-step stage values taken from the
    fine curvature path; lets tests confirm the identity-derived covariance
    against a directly propagated one.
    """
    spec = sol.spec
    mesh = sol.mesh
    noise = spec.noise_matrix
    a_fb_fine = (spec.closed_drift(ell)[None] - noise[None] @ sol.fine[ell].Pi)[::2]
    h = 1.0 / mesh
    out = np.empty((mesh + 1, spec.dim, spec.dim))
    out[0] = spec.covs0[ell]

    def rhs(a_fb, sig):
        return a_fb @ sig + sig @ a_fb.T + spec.eps * noise

    for k in range(mesh):
        a0, a_half, a1 = a_fb_fine[2 * k], a_fb_fine[2 * k + 1], a_fb_fine[2 * k + 2]
        sig = out[k]
        k1 = rhs(a0, sig)
        k2 = rhs(a_half, sig + 0.5 * h * k1)
        k3 = rhs(a_half, sig + 0.5 * h * k2)
        k4 = rhs(a1, sig + h * k3)
        out[k + 1] = sig + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = 0.5 * (out[k + 1] + out[k + 1].T)
    return out
