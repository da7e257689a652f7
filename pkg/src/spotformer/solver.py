"""Per-frame convex program of the loudspeaker spotformer.

For a windowed reference frame ``S_ref`` (N_t x L) find the real frame ``S``
minimising

    sum_k alpha_k || L_k^H conj(s_k) ||_2          (energy in the region)

subject to, for every control point p,

    sum_k w_pk^2 | v_pk^T s_k - m_pk |^2 <= d       (perceptual distortion)

where ``s_k`` is bin k of the zero-padded DFT of ``S``. Because ``S`` is real
only bins 0..N/2 are kept, interior bins counted twice.

Two solvers are provided. :func:`solve_frame` is a primal log-barrier method
that works directly on the N_t*L real samples: the Hessian of every per-bin
term is assembled through its Toeplitz (``n - m``) and Hankel (``n + m``)
kernels with FFTs and the Newton system is solved by dense Cholesky.
:func:`solve_frame_conic` hands the unfolded, full-spectrum problem to a
generic conic solver through cvxpy and is used for cross-checking.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .framing import FrameGrid, dft_matrix

log = logging.getLogger(__name__)

D_FLOOR = 1e-12

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE_NUMERICS = "infeasible_numerics"


@dataclass
class FrameProblem:
    grid: FrameGrid
    ref_frame: np.ndarray      # (N_t, L), windowed
    ref_spectra: np.ndarray    # (N, L)
    factors: np.ndarray        # (N/2+1, L, r)
    transfer: np.ndarray       # (P, N, L)
    maskers: np.ndarray        # (P, N)
    weights: np.ndarray        # (P, N)
    alpha: np.ndarray          # (N,)
    d: float

    @property
    def n_loudspeakers(self) -> int:
        return self.ref_frame.shape[1]

    @property
    def n_points(self) -> int:
        return self.transfer.shape[0]

    @property
    def budget(self) -> float:
        """Distortion budget actually used (d = 0 is replaced by a tiny floor)."""
        return max(float(self.d), D_FLOOR)


@dataclass
class SolverOptions:
    rtol: float = 1e-6
    mu: float = 20.0
    max_newton: int = 300
    newton_tol: float = 1e-7
    # centering accuracy for intermediate barrier parameters; the last
    # centering always runs to newton_tol so the gap bound theta/tau holds
    center_tol: float = 1.0
    tau0_scale: float = 1.0
    # relative residual of the CG solve of each Newton system (inexact
    # Newton while centering loosely, tight in the last centering)
    pcg_tol: float = 1e-4
    pcg_tol_final: float = 1e-8
    pcg_maxiter: int = 20


@dataclass
class FrameSolution:
    frame: np.ndarray
    objective: float
    max_constraint_residual: float
    solver_status: str
    reference_objective: float = float("nan")
    distortions: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0


def _half(problem: FrameProblem):
    K = problem.grid.n_bins
    return (problem.transfer[:, :K], problem.maskers[:, :K],
            problem.weights[:, :K], problem.alpha[:K])


def objective_value(problem: FrameProblem, frame) -> float:
    grid = problem.grid
    spec = np.fft.rfft(np.asarray(frame, dtype=float), n=grid.fft_len, axis=0)
    y = np.einsum("klr,kl->kr", problem.factors.conj(), spec.conj())
    norms = np.linalg.norm(y, axis=1)
    return float(np.sum(grid.fold_weights() * problem.alpha[:grid.n_bins] * norms))


def constraint_values(problem: FrameProblem, frame) -> np.ndarray:
    """Distortion at every control point for ``frame``."""
    grid = problem.grid
    V, m, w, _ = _half(problem)
    spec = np.fft.rfft(np.asarray(frame, dtype=float), n=grid.fft_len, axis=0)
    e = np.einsum("pkl,kl->pk", V, spec) - m
    return np.sum(grid.fold_weights() * w ** 2 * np.abs(e) ** 2, axis=1)


class _Barrier:
    """Barrier function of the folded problem over (S, t)."""

    def __init__(self, problem: FrameProblem):
        grid = problem.grid
        self.grid = grid
        self.N = grid.fft_len
        self.Nt = grid.frame_len
        self.L = problem.n_loudspeakers
        V, m, w, alpha = _half(problem)
        c = grid.fold_weights()
        self.active = np.flatnonzero(alpha > 0)
        self.cost = (c * alpha)[self.active]
        F = problem.factors[self.active]
        # q_k = s^H Rt s equals ||L^H conj(s)||^2 with Rt = conj(L L^H)
        self.Rt = np.conj(F @ np.conj(np.swapaxes(F, -1, -2)))
        self.V = V
        self.A = c * w ** 2
        self.ref = np.asarray(problem.ref_frame, dtype=float)
        self.ref_spec = np.fft.rfft(self.ref, n=self.N, axis=0)
        self.r0 = np.einsum("pkl,kl->pk", V, self.ref_spec) - m
        self.d = problem.budget
        n = np.arange(self.Nt)
        self.diff_idx = (n[:, None] - n[None, :]) % self.N
        self.sum_idx = (n[:, None] + n[None, :]) % self.N
        self.factor = None
        self.n_factor = 0

    def spectrum(self, S):
        return np.fft.rfft(S, n=self.N, axis=0)

    def evaluate(self, S, t):
        """Quantities at (S, t); returns None outside the barrier domain."""
        spec = self.spectrum(S)
        sa = spec[self.active]
        Rs = np.einsum("kab,kb->ka", self.Rt, sa)
        q = np.maximum(np.einsum("ka,ka->k", sa.conj(), Rs).real, 0.0)
        Qs = t * t - q
        e = np.einsum("pkl,kl->pk", self.V, spec - self.ref_spec) + self.r0
        D = np.sum(self.A * np.abs(e) ** 2, axis=1)
        Qc = self.d - D
        if np.any(t <= 0) or np.any(Qs <= 0) or np.any(Qc <= 0):
            return None
        return dict(spec=spec, Rs=Rs, q=q, Qs=Qs, e=e, D=D, Qc=Qc)

    def value(self, tau, t, ev):
        return (tau * float(self.cost @ t) - float(np.sum(np.log(ev["Qs"])))
                - float(np.sum(np.log(ev["Qc"]))))

    def to_time(self, G):
        """Gradient w.r.t. S of a function whose per-bin complex gradient is G (K, L).

        Returns sum_k Re(G_k exp(+2j pi k n / N)) for n < N_t.
        """
        n = np.arange(self.Nt)[:, None]
        N = self.N
        full = np.fft.irfft(G, n=N, axis=0)[: self.Nt] * N
        # irfft counts interior bins twice and the two end bins once
        ends = G[0].real[None, :] + G[-1].real[None, :] * np.where(n % 2, -1.0, 1.0)
        return 0.5 * (full + ends)

    def hessian_terms(self, tau, t, ev):
        """Per-bin Hessian kernels and gradients of the t-eliminated barrier."""
        L, K = self.L, self.grid.n_bins
        act = self.active
        q, Qs, Rs = ev["q"], ev["Qs"], ev["Rs"]
        gq = 2.0 * Rs                                   # (Ka, L)
        g_t = tau * self.cost - 2.0 * t / Qs
        tq = t * t + q
        G_full = np.zeros((K, L), dtype=complex)
        G_elim = np.zeros((K, L), dtype=complex)
        G_full[act] = gq / Qs[:, None]
        G_elim[act] = gq * (1.0 / Qs + t * g_t / tq)[:, None]

        M = np.zeros((K, L, L), dtype=complex)
        Nn = np.zeros((K, L, L), dtype=complex)
        inv = (1.0 / Qs)[:, None, None]
        rk = (0.5 / (Qs * tq))[:, None, None]
        M[act] = 2.0 * inv * self.Rt - rk * np.einsum("ka,kb->kab", gq, gq.conj())
        Nn[act] = -rk * np.einsum("ka,kb->kab", gq.conj(), gq.conj())

        Qc, e = ev["Qc"], ev["e"]
        gD = 2.0 * (self.A * e)[:, :, None] * self.V.conj()       # (P, K, L)
        G_con = np.sum(gD / Qc[:, None, None], axis=0)
        G_full += G_con
        G_elim += G_con
        M += np.einsum("pk,pka,pkb->kab", 2.0 * self.A / Qc[:, None], self.V.conj(), self.V)
        U = np.stack([self.to_time(gD[p]).T.ravel() for p in range(gD.shape[0])], axis=1)
        U /= Qc[None, :]
        return dict(M=M, N=Nn, U=U, g_elim=self.to_time(G_elim).T.ravel(),
                    g_full=self.to_time(G_full).T.ravel(), g_t=g_t, gq=gq, tq=tq, Qs=Qs)

    def assemble(self, hs) -> np.ndarray:
        """Dense Hessian in S (channel-major ordering)."""
        N, L, Nt, K = self.N, self.L, self.Nt, self.grid.n_bins
        Mpad = np.zeros((N, L, L), dtype=complex)
        Mpad[:K] = hs["M"]
        Npad = np.zeros((N, L, L), dtype=complex)
        Npad[:K] = hs["N"]
        toep = np.ascontiguousarray((np.fft.ifft(Mpad, axis=0) * N).real.transpose(1, 2, 0))
        hank = np.ascontiguousarray(np.fft.fft(Npad, axis=0).real.transpose(1, 2, 0))
        H = np.empty((L * Nt, L * Nt))
        for a in range(L):
            for b in range(a, L):
                blk = toep[a, b][self.diff_idx] + hank[a, b][self.sum_idx]
                H[a * Nt:(a + 1) * Nt, b * Nt:(b + 1) * Nt] = blk
                if b != a:
                    H[b * Nt:(b + 1) * Nt, a * Nt:(a + 1) * Nt] = blk.T
        U = hs["U"]
        H += U @ U.T
        return H

    def matvec(self, hs, x):
        """Hessian-vector product through the per-bin kernels, without forming H."""
        X = self.spectrum(x.reshape(self.L, self.Nt).T)
        Y = np.einsum("kab,kb->ka", hs["M"], X) + np.conj(np.einsum("kab,kb->ka", hs["N"], X))
        return self.to_time(Y).T.ravel() + hs["U"] @ (hs["U"].T @ x)

    def factorize(self, hs):
        H = self.assemble(hs)
        scale = np.sqrt(np.maximum(np.diag(H), np.finfo(float).tiny))
        inv = 1.0 / scale
        H *= inv[:, None]
        H *= inv[None, :]
        ridge = 0.0
        for _ in range(6):
            try:
                cf = cho_factor(H if ridge == 0 else H + ridge * np.eye(H.shape[0]),
                                check_finite=False)
                return cf, inv
            except LinAlgError:
                ridge = 1e-12 if ridge == 0 else ridge * 100
        return None

    def _precond(self, r):
        cf, inv = self.factor
        return cho_solve(cf, r * inv, check_finite=False) * inv

    def _pcg(self, hs, b, tol, maxiter):
        x = self._precond(b)
        r = b - self.matvec(hs, x)
        bnorm = np.linalg.norm(b)
        z = self._precond(r)
        p = z
        rz = r @ z
        for _ in range(maxiter):
            if np.linalg.norm(r) <= tol * bnorm:
                return x
            Ap = self.matvec(hs, p)
            pAp = p @ Ap
            if pAp <= 0:
                return None
            a = rz / pAp
            x = x + a * p
            r = r - a * Ap
            z = self._precond(r)
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        return x if np.linalg.norm(r) <= tol * bnorm else None

    def newton(self, tau, S, t, ev, pcg_tol=1e-10, pcg_maxiter=20):
        """Newton step (dS, dt) and squared decrement, or None on breakdown.

        The Newton system is solved by conjugate gradients preconditioned with
        the last Cholesky factor; it is refactored when CG stalls.
        """
        L, Nt = self.L, self.Nt
        hs = self.hessian_terms(tau, t, ev)
        dS_vec = None
        if self.factor is not None:
            dS_vec = self._pcg(hs, -hs["g_elim"], pcg_tol, pcg_maxiter)
        if dS_vec is None:
            self.factor = self.factorize(hs)
            self.n_factor += 1
            if self.factor is None:
                return None
            dS_vec = self._pcg(hs, -hs["g_elim"], pcg_tol, pcg_maxiter)
            if dS_vec is None:
                dS_vec = -self._precond(hs["g_elim"])
        dS = dS_vec.reshape(L, Nt).T
        dspec = self.spectrum(dS)[self.active]
        gq, tq, Qs, g_t = hs["gq"], hs["tq"], hs["Qs"], hs["g_t"]
        dq = np.real(np.einsum("ka,ka->k", gq.conj(), dspec))
        h_tt = 2.0 * tq / Qs ** 2
        dt = -(g_t - 2.0 * t * dq / Qs ** 2) / h_tt
        lam2 = -(hs["g_full"] @ dS_vec + g_t @ dt)
        return dS, dt, lam2


def _initial_t(q, scale):
    return 1.25 * np.sqrt(q) + 1e-3 * scale + np.finfo(float).tiny


def solve_frame(problem: FrameProblem, options: SolverOptions | None = None) -> FrameSolution:
    """Solve one frame with the structured barrier method.

    The reference frame is strictly feasible (zero distortion), so the method
    starts there and every iterate stays feasible.
    """
    opts = options or SolverOptions()
    bar = _Barrier(problem)
    S = bar.ref.copy()
    ref_obj = objective_value(problem, S)
    ref_dist = constraint_values(problem, S)
    if bar.active.size == 0 or ref_obj <= 0.0:
        return FrameSolution(frame=S, objective=ref_obj, max_constraint_residual=0.0,
                             solver_status=OPTIMAL, reference_objective=ref_obj,
                             distortions=ref_dist)

    spec = bar.spectrum(S)[bar.active]
    q0 = np.einsum("ka,kab,kb->k", spec.conj(), bar.Rt, spec).real
    t = _initial_t(np.maximum(q0, 0), np.sqrt(np.max(q0)))
    ev = bar.evaluate(S, t)
    if ev is None:
        return FrameSolution(frame=S, objective=ref_obj, max_constraint_residual=float(
            max(0.0, np.max(ref_dist) - problem.budget)), solver_status=INFEASIBLE_NUMERICS,
            reference_objective=ref_obj, distortions=ref_dist)

    theta = 2.0 * bar.active.size + problem.n_points
    tau = opts.tau0_scale * theta / ref_obj
    status = MAX_ITER
    iters = 0
    best = S
    final = False
    while iters < opts.max_newton:
        final = final or theta / tau <= opts.rtol * max(objective_value(problem, S), 1e-3 * ref_obj)
        tol = opts.newton_tol if final else max(opts.center_tol, opts.newton_tol)
        # centering
        while iters < opts.max_newton:
            step = bar.newton(tau, S, t, ev, opts.pcg_tol_final if final else opts.pcg_tol,
                              opts.pcg_maxiter)
            iters += 1
            if step is None:
                status = INFEASIBLE_NUMERICS
                break
            dS, dt, lam2 = step
            if lam2 / 2 <= tol:
                break
            f0 = bar.value(tau, t, ev)
            a = 1.0
            accepted = False
            while a > 1e-12:
                cand = bar.evaluate(S + a * dS, t + a * dt)
                if cand is not None and bar.value(tau, t + a * dt, cand) <= f0 - 0.01 * a * lam2:
                    accepted = True
                    break
                a *= 0.5
            if not accepted:
                break
            S = S + a * dS
            t = t + a * dt
            ev = cand
        if status == INFEASIBLE_NUMERICS:
            break
        best = S
        obj = objective_value(problem, S)
        if theta / tau <= opts.rtol * max(obj, 1e-3 * ref_obj):
            status = OPTIMAL
            break
        tau *= opts.mu

    S = best
    dist = constraint_values(problem, S)
    obj = objective_value(problem, S)
    if obj > ref_obj:
        # never hand back something worse than the feasible reference
        S, obj, dist = bar.ref.copy(), ref_obj, ref_dist
    return FrameSolution(frame=S, objective=obj,
                         max_constraint_residual=float(max(0.0, np.max(dist) - problem.budget)),
                         solver_status=status, reference_objective=ref_obj,
                         distortions=dist, iterations=iters)


def solve_frame_conic(problem: FrameProblem, solver: str = "CLARABEL", **solver_kwargs) -> FrameSolution:
    """Full-spectrum formulation through cvxpy; slow, meant for small checks."""
    import cvxpy as cp

    grid = problem.grid
    N, Nt, L = grid.fft_len, grid.frame_len, problem.n_loudspeakers
    W = dft_matrix(grid)
    S = cp.Variable((Nt, L))
    spec = W @ S
    K = grid.n_bins
    terms = []
    for k in range(N):
        if problem.alpha[k] <= 0:
            continue
        Lk = problem.factors[k] if k < K else np.conj(problem.factors[N - k])
        terms.append(problem.alpha[k] * cp.norm(Lk.conj().T @ cp.conj(spec[k, :]), 2))
    objective = cp.sum(cp.hstack(terms)) if terms else cp.Constant(0.0)
    cons = []
    d = problem.budget
    for p in range(problem.n_points):
        received = cp.sum(cp.multiply(problem.transfer[p], spec), axis=1)
        cons.append(cp.sum_squares(cp.multiply(problem.weights[p], received - problem.maskers[p])) <= d)
    prob = cp.Problem(cp.Minimize(objective), cons)
    prob.solve(solver=solver, **solver_kwargs)
    frame = np.asarray(S.value) if S.value is not None else np.asarray(problem.ref_frame)
    dist = constraint_values(problem, frame)
    status = OPTIMAL if prob.status == cp.OPTIMAL else (
        MAX_ITER if prob.status == cp.OPTIMAL_INACCURATE else INFEASIBLE_NUMERICS)
    return FrameSolution(frame=frame, objective=objective_value(problem, frame),
                         max_constraint_residual=float(max(0.0, np.max(dist) - d)),
                         solver_status=status,
                         reference_objective=objective_value(problem, problem.ref_frame),
                         distortions=dist)
