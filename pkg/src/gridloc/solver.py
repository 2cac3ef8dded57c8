"""Fixed-parameter ADMM for the joint l1/l2,1 direct-localization problem.

The row-sparse location coefficients and the per-station angle coefficients
are updated by linearized proximal steps with closed-form shrinkage, followed
by dual ascent on the stacked measurement constraint.

Step-size convention: AdmmParams.tau1/tau2 are fractions of the stable
proximal step 1/lam_max(op^H op); the realized steps are
tau1 / max_m lam_max(A_m^H A_m) and tau2 / max_m lam_max(B_m^H B_m), and the
shrinkage thresholds are lambda1 = step1/rho, lambda2 = step2/rho. This keeps
one (rho, tau1, tau2) setting usable across scene sizes; tau <= 1 guarantees
the Taylor quadratic majorizes the true coupling term.

All update functions accept a single stacked vector or a batch with one
leading axis, and scalar parameters or per-batch-element parameter arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError
from .scene import Dictionary

DIVERGENCE_THRESHOLD = 1e6


def prox_group_rows(C, lam1):
    """Row-wise group soft-threshold over the last axis.

    Each row is scaled by (||row|| - lam1)/||row|| when its l2 norm exceeds
    lam1 and zeroed otherwise. Rows are independent; lam1 may broadcast
    against the row-norm array.
    """
    norms = np.linalg.norm(C, axis=-1)
    scale = np.clip(norms - lam1, 0.0, None) / np.where(norms > 0, norms, 1.0)
    return C * scale[..., None]


def prox_l1_weighted(d, lam2, weights):
    """Entrywise magnitude soft-threshold with per-entry threshold lam2*weights.

    weights is the per-station weight vector already expanded to the angle
    layout (see DictionaryOps.expand_weights). Reduces to the real
    three-branch shrinkage on real inputs; maps 0 to 0.
    """
    thresh = np.asarray(lam2) * np.asarray(weights) if np.ndim(lam2) == 0 \
        else np.asarray(lam2)[..., None] * np.asarray(weights)
    mag = np.abs(d)
    scale = np.clip(mag - thresh, 0.0, None) / np.where(mag > 0, mag, 1.0)
    return d * scale


def _lam_max_psd(G, iters=500, tol=1e-14):
    """Largest eigenvalue of a Hermitian PSD matrix by power iteration.

    Deterministic (fixed all-ones start) so dictionary setup is reproducible
    bit-for-bit.
    """
    v = np.ones(G.shape[0]) / np.sqrt(G.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = G @ v
        new = np.linalg.norm(w)
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - lam) <= tol * max(new, 1.0):
            lam = new
            break
        lam = new
    return float(np.real(np.vdot(v, G @ v)))


class DictionaryOps:
    """Matrix-free application of the block dictionaries plus solver caches.

    mode 'gram' (reference) computes the x/z-space gradients through
    precomputed per-station normal-equation products (A^H A, A^H B, B^H B),
    so one iteration costs O(M K^2 + ...) as advertised; mode 'matvec'
    applies the factors two-sided in O(sum N_m (K + L_m)) and is preferred
    for training loops. Both produce identical iterates up to rounding.
    """

    def __init__(self, dictionary: Dictionary, mode: str = "gram"):
        if mode not in ("gram", "matvec"):
            raise ValueError(f"unknown ops mode: {mode!r}")
        self.dictionary = dictionary
        self.mode = mode
        self.a_blocks = dictionary.a_blocks
        self.b_blocks = dictionary.b_blocks
        self.num_stations = dictionary.num_stations
        self.num_cells = dictionary.num_cells
        self.x_slices = dictionary.x_slices
        self.y_slices = dictionary.y_slices
        self.z_slices = dictionary.z_slices
        self.x_length = dictionary.num_stations * dictionary.num_cells
        self.y_length = dictionary.signal_length
        self.z_length = dictionary.angle_length

        self.gram_a = tuple(a.conj().T @ a for a in self.a_blocks)
        self.gram_b = tuple(b.conj().T @ b for b in self.b_blocks)
        self.cross_ab = tuple(a.conj().T @ b for a, b in zip(self.a_blocks, self.b_blocks))
        self.lam_max_a = max(_lam_max_psd(g) for g in self.gram_a)
        self.lam_max_b = max(_lam_max_psd(g) for g in self.gram_b)

    @property
    def x_step_scale(self):
        return 1.0 / self.lam_max_a

    @property
    def z_step_scale(self):
        return 1.0 / self.lam_max_b

    def apply_a(self, x):
        parts = [x[..., sl] @ a.T for sl, a in zip(self.x_slices, self.a_blocks)]
        return np.concatenate(parts, axis=-1)

    def apply_ah(self, v):
        parts = [v[..., sl] @ a.conj() for sl, a in zip(self.y_slices, self.a_blocks)]
        return np.concatenate(parts, axis=-1)

    def apply_b(self, z):
        parts = [z[..., sl] @ b.T for sl, b in zip(self.z_slices, self.b_blocks)]
        return np.concatenate(parts, axis=-1)

    def apply_bh(self, v):
        parts = [v[..., sl] @ b.conj() for sl, b in zip(self.y_slices, self.b_blocks)]
        return np.concatenate(parts, axis=-1)

    def residual(self, x, z, y):
        """Primal residual A x + B z - y in stacked signal space."""
        return self.apply_a(x) + self.apply_b(z) - y

    def xspace_gradient(self, x, z, s, y, rho):
        """g1 = A^H (A x + B z - y + s/rho)."""
        rr = _col(1.0 / np.asarray(rho))
        if self.mode == "matvec":
            return self.apply_ah(self.residual(x, z, y) + s * rr)
        parts = []
        for m in range(self.num_stations):
            v = s[..., self.y_slices[m]] * rr - y[..., self.y_slices[m]]
            parts.append(x[..., self.x_slices[m]] @ self.gram_a[m].T
                         + z[..., self.z_slices[m]] @ self.cross_ab[m].T
                         + v @ self.a_blocks[m].conj())
        return np.concatenate(parts, axis=-1)

    def zspace_gradient(self, x, z, s, y, rho):
        """g2 = B^H (B z + A x - y + s/rho); the caller passes the updated x."""
        rr = _col(1.0 / np.asarray(rho))
        if self.mode == "matvec":
            return self.apply_bh(self.residual(x, z, y) + s * rr)
        parts = []
        for m in range(self.num_stations):
            v = s[..., self.y_slices[m]] * rr - y[..., self.y_slices[m]]
            parts.append(z[..., self.z_slices[m]] @ self.gram_b[m].T
                         + x[..., self.x_slices[m]] @ self.cross_ab[m].conj()
                         + v @ self.b_blocks[m].conj())
        return np.concatenate(parts, axis=-1)

    def expand_weights(self, weights):
        """Per-station weights (..., M) -> per-entry thresholds (..., sum L_m)."""
        w = np.asarray(weights, dtype=float)
        counts = self.dictionary.angle_counts
        return np.repeat(w, counts, axis=-1)

    def rows_view(self, x):
        """Station-major vector (..., M*K) -> row matrix (..., K, M)."""
        lead = x.shape[:-1]
        return np.swapaxes(x.reshape(*lead, self.num_stations, self.num_cells), -1, -2)

    def rows_to_vec(self, rows):
        lead = rows.shape[:-2]
        return np.swapaxes(rows, -1, -2).reshape(*lead, self.x_length)


def _col(v):
    """Scalars pass through; per-batch parameter arrays gain a broadcast axis."""
    v = np.asarray(v)
    return v if v.ndim == 0 else v[..., None]


@dataclass(frozen=True)
class AdmmParams:
    """Solver tunables: penalty rho, step fractions tau1/tau2, station weights."""

    rho: float
    tau1: float
    tau2: float
    weights: tuple

    def __post_init__(self):
        if np.any(np.asarray(self.rho) <= 0) or np.any(np.asarray(self.tau1) <= 0) \
                or np.any(np.asarray(self.tau2) <= 0):
            raise ValueError("rho, tau1, tau2 must be strictly positive")
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(w <= 0):
            raise ValueError("weights must be a 1-D positive vector")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @classmethod
    def default(cls, num_stations, rho=5.0, tau1=0.5, tau2=0.5):
        """The fixed-parameter baseline settings with unit station weights."""
        return cls(rho=rho, tau1=tau1, tau2=tau2, weights=(1.0,) * num_stations)


@dataclass(frozen=True)
class AdmmState:
    """Iterates: location coefficients x, angle coefficients z, dual s."""

    x: np.ndarray
    z: np.ndarray
    s: np.ndarray
    iteration: int = 0

    @classmethod
    def zero(cls, ops: DictionaryOps, batch_shape=()):
        return cls(
            x=np.zeros((*batch_shape, ops.x_length), dtype=complex),
            z=np.zeros((*batch_shape, ops.z_length), dtype=complex),
            s=np.zeros((*batch_shape, ops.y_length), dtype=complex),
        )


@dataclass
class SolveTrace:
    """Per-iteration NMSE and primal-residual norms; optional g1/g2 internals."""

    nmse: np.ndarray
    primal_residual: np.ndarray
    internals: list = field(default_factory=list)

    def __len__(self):
        return len(self.nmse)


def realized_steps(params, ops: DictionaryOps):
    """(step1, step2, lambda1, lambda2) actually used by the updates."""
    step1 = np.asarray(params.tau1) * ops.x_step_scale
    step2 = np.asarray(params.tau2) * ops.z_step_scale
    return step1, step2, step1 / np.asarray(params.rho), step2 / np.asarray(params.rho)


def x_update(state: AdmmState, params, ops: DictionaryOps, y):
    """One linearized proximal step on the location coefficients."""
    g1 = ops.xspace_gradient(state.x, state.z, state.s, y, params.rho)
    step1, _, lam1, _ = realized_steps(params, ops)
    c = state.x - _col(step1) * g1
    rows = prox_group_rows(ops.rows_view(c), _col(lam1))
    return ops.rows_to_vec(rows)


def z_update(state: AdmmState, params, ops: DictionaryOps, y):
    """One weighted soft-threshold step on the angle coefficients.

    Reads state.x as the freshly updated value (Gauss-Seidel order).
    """
    g2 = ops.zspace_gradient(state.x, state.z, state.s, y, params.rho)
    _, step2, _, lam2 = realized_steps(params, ops)
    d = state.z - _col(step2) * g2
    w = ops.expand_weights(params.weights)
    return prox_l1_weighted(d, lam2, w)


def dual_update(state: AdmmState, params, ops: DictionaryOps, y):
    """s + rho * (A x + B z - y) with the already-updated primal iterates."""
    r = ops.residual(state.x, state.z, y)
    return state.s + _col(np.asarray(params.rho)) * r


def nmse(y, x, z, ops: DictionaryOps):
    """Single-sample reconstruction ratio ||y - A x - B z||^2 / ||y||^2.

    Defined as 0 when y and the reconstruction residual are both zero.
    """
    r = ops.residual(x, z, y)
    num = np.sum(np.abs(r) ** 2, axis=-1)
    den = np.sum(np.abs(y) ** 2, axis=-1)
    return num / np.where(den > 0, den, 1.0)


def admm_round(state: AdmmState, params, ops: DictionaryOps, y, keep_internals=False):
    """One full iteration: x step, z step (with new x), dual ascent.

    Returns (new_state, residual, internals); the residual is reused by the
    caller for the NMSE trace.
    """
    x_new = x_update(state, params, ops, y)
    mid = replace(state, x=x_new)
    z_new = z_update(mid, params, ops, y)
    r = ops.residual(x_new, z_new, y)
    s_new = state.s + _col(np.asarray(params.rho)) * r
    internals = None
    if keep_internals:
        internals = {
            "g1": ops.xspace_gradient(state.x, state.z, state.s, y, params.rho),
            "g2": ops.zspace_gradient(x_new, state.z, state.s, y, params.rho),
        }
    new = AdmmState(x=x_new, z=z_new, s=s_new, iteration=state.iteration + 1)
    return new, r, internals


def solve(y, ops: DictionaryOps, params: AdmmParams, iterations: int,
          state: AdmmState | None = None,
          divergence_threshold: float = DIVERGENCE_THRESHOLD,
          keep_internals: bool = False):
    """Run a fixed number of ADMM iterations from a zero (or warm) start.

    y may be a stacked vector (sum N_m,) or a batch (T, sum N_m); batched
    solves share the parameters and run in lockstep. Returns the final
    AdmmState and a SolveTrace with one NMSE entry per iteration. Aborts
    with DivergenceError if any sample's NMSE exceeds the guard or turns
    non-finite.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    y = np.asarray(y, dtype=complex)
    if state is None:
        state = AdmmState.zero(ops, batch_shape=y.shape[:-1])
    y2 = np.sum(np.abs(y) ** 2, axis=-1)
    den = np.where(y2 > 0, y2, 1.0)
    nmse_trace = np.empty((iterations, *y.shape[:-1]))
    res_trace = np.empty_like(nmse_trace)
    internals = []
    for i in range(iterations):
        state, r, extra = admm_round(state, params, ops, y, keep_internals=keep_internals)
        if keep_internals:
            internals.append(extra)
        r2 = np.sum(np.abs(r) ** 2, axis=-1)
        nm = r2 / den
        if not np.all(np.isfinite(nm)):
            raise DivergenceError(f"non-finite NMSE at iteration {i}", iteration=i)
        if np.any(nm > divergence_threshold):
            raise DivergenceError(
                f"NMSE {float(np.max(nm)):.3e} exceeded the divergence guard "
                f"{divergence_threshold:.1e} at iteration {i}", iteration=i)
        nmse_trace[i] = nm
        res_trace[i] = np.sqrt(r2)
    return state, SolveTrace(nmse_trace, res_trace, internals)
