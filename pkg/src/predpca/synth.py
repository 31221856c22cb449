"""Ground-truth state-space generators and ambiguity-invariant metrics.

Systems follow ``x_{t+1} = B psi(x_t) + z_t`` and ``s_t = A psi(x_t) + omega_t``.
The linear family uses ``psi(x) = x``; the nonlinear family uses
``psi(x) = C (rho(R x + r) - m)`` with ``m`` the Gaussian mean of ``rho(R x + r)``
so that bases are centered.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.optimize import linear_sum_assignment

from .errors import ParameterError

BURN_IN = 1000
GH_POINTS = 64


# --------------------------------------------------------------------------
# odd nonlinearities: value, first and third derivative
# --------------------------------------------------------------------------

def _tanh(x):
    return np.tanh(x)


def _tanh_d1(x):
    return 1.0 - np.tanh(x) ** 2


def _tanh_d3(x):
    t = np.tanh(x)
    return (1.0 - t ** 2) * (6.0 * t ** 2 - 2.0)


RHO = {
    "tanh": (_tanh, _tanh_d1, _tanh_d3),
    "identity": (lambda x: np.asarray(x, dtype=float), lambda x: np.ones_like(x, dtype=float),
                 lambda x: np.zeros_like(x, dtype=float)),
    "sin": (np.sin, np.cos, lambda x: -np.cos(x)),
}


def _rho(name):
    try:
        return RHO[name]
    except KeyError:
        raise ParameterError(f"unknown nonlinearity {name!r}; choose from {sorted(RHO)}") from None


def gauss_hermite(n=GH_POINTS):
    """Nodes and weights for expectations over a unit Gaussian."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / np.sqrt(2.0 * np.pi)


def rho_statistics(rho="tanh", n=GH_POINTS):
    """Gaussian averages ``(E[rho^2], E[rho'], E[rho'''])`` for ``xi ~ N(0, 1)``."""
    f, d1, d3 = _rho(rho)
    x, w = gauss_hermite(n)
    return float(w @ f(x) ** 2), float(w @ d1(x)), float(w @ d3(x))


def linearization_sigmas(rho, N_x, N_psi):
    """Order of the linearization error for states and bases.

    ``sigma_x = sqrt((E rho^2 - (E rho')^2) N_x / N_psi + (E rho''')^2 / N_x)``
    and ``sigma_psi = sqrt((E rho^2 - (E rho')^2) / N_psi)``; both vanish for a
    linear ``rho``.
    """
    m2, d1, d3 = rho_statistics(rho)
    gap = max(m2 - d1 ** 2, 0.0)
    sigma_x = np.sqrt(gap * N_x / N_psi + d3 ** 2 / N_x)
    sigma_psi = np.sqrt(gap / N_psi)
    return float(sigma_x), float(sigma_psi)


# --------------------------------------------------------------------------
# ground truth
# --------------------------------------------------------------------------

@dataclass
class GroundTruth:
    A: np.ndarray
    B: np.ndarray
    Sigma_z: np.ndarray
    Sigma_omega: np.ndarray
    kind: str = "linear"
    rho: str = "identity"
    C: np.ndarray = None
    R: np.ndarray = None
    r: np.ndarray = None
    offset: np.ndarray = None
    seed: int = 0
    info: dict = field(default_factory=dict)

    @property
    def n_x(self):
        return self.B.shape[0]

    @property
    def n_psi(self):
        return self.A.shape[1]

    @property
    def n_s(self):
        return self.A.shape[0]

    def bases(self, X):
        """Map state rows to basis rows."""
        X = np.atleast_2d(X)
        if self.kind == "linear":
            return X.copy()
        f = _rho(self.rho)[0]
        return (f(X @ self.R.T + self.r) - self.offset) @ self.C.T

    def sigma_psi(self):
        """Stationary basis covariance (exact for linear systems, I by construction)."""
        if self.kind == "linear":
            return np.eye(self.n_x)
        return self.info["Sigma_psi"]

    def to_arrays(self):
        arrays = {"A": self.A, "B": self.B, "Sigma_z": self.Sigma_z, "Sigma_omega": self.Sigma_omega}
        if self.kind != "linear":
            arrays.update(C=self.C, R=self.R, r=self.r, offset=self.offset,
                          Sigma_psi=self.info["Sigma_psi"])
        return arrays

    def meta(self):
        out = {"kind": self.kind, "rho": self.rho, "seed": int(self.seed)}
        out.update({k: v for k, v in self.info.items() if not isinstance(v, np.ndarray)})
        return out

    @classmethod
    def from_arrays(cls, arrays, meta):
        info = {k: v for k, v in meta.items() if k not in ("kind", "rho", "seed")}
        if "Sigma_psi" in arrays:
            info["Sigma_psi"] = arrays["Sigma_psi"]
        return cls(arrays["A"], arrays["B"], arrays["Sigma_z"], arrays["Sigma_omega"],
                   meta["kind"], meta["rho"], arrays.get("C"), arrays.get("R"),
                   arrays.get("r"), arrays.get("offset"), meta.get("seed", 0), info)


def _orthonormal_columns(rng, n, k):
    Q, R = np.linalg.qr(rng.standard_normal((n, k)))
    return Q * np.sign(np.diag(R))


def _sqrt_psd(S):
    w, V = np.linalg.eigh((S + S.T) / 2)
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.T


def _noise_cov(rng, n_s, total, profile):
    if total == 0:
        return np.zeros((n_s, n_s))
    if profile == "isotropic":
        return np.eye(n_s) * (total / n_s)
    if profile == "anisotropic":
        U = _orthonormal_columns(rng, n_s, n_s)
        d = 1.0 / np.arange(1, n_s + 1) ** 2
        d *= total / d.sum()
        return (U * d) @ U.T
    raise ParameterError(f"unknown noise profile {profile!r}")


def gen_linear(N_x, N_s, spectral_radius=0.9, noise_ratio=1.0, seed=0, noise="isotropic",
               sv_floor=0.6):
    """Random stable linear system with unit stationary state covariance.

    ``A`` has orthonormal columns. ``B = U diag(g) V^T`` with random
    orthogonal ``U, V`` and singular values ``g`` uniform in
    ``[sv_floor, 1] * spectral_radius`` (so the spectral radius is at most
    ``spectral_radius``); ``Sigma_z = I - B B^T`` then makes the stationary
    state covariance exactly ``I``. Every state direction keeps a
    predictable share of at least ``(sv_floor * spectral_radius)^2``.
    The observation noise has ``tr[Sigma_omega] = noise_ratio * tr[A A^T]``.
    """
    if not 1 <= N_x <= N_s:
        raise ParameterError("need 1 <= N_x <= N_s")
    if not 0 < spectral_radius < 1:
        raise ParameterError("spectral_radius must lie in (0, 1)")
    if not 0 < sv_floor <= 1:
        raise ParameterError("sv_floor must lie in (0, 1]")
    if noise_ratio < 0:
        raise ParameterError("noise_ratio must be non-negative")
    rng = np.random.default_rng(seed)
    A = _orthonormal_columns(rng, N_s, N_x)
    g = spectral_radius * np.sort(rng.uniform(sv_floor, 1.0, N_x))[::-1]
    U = _orthonormal_columns(rng, N_x, N_x)
    V = _orthonormal_columns(rng, N_x, N_x)
    B = (U * g) @ V.T
    Sigma_z = (U * (1.0 - g ** 2)) @ U.T
    Sigma_z = (Sigma_z + Sigma_z.T) / 2
    Sigma_omega = _noise_cov(rng, N_s, noise_ratio * N_x, noise)
    return GroundTruth(A, B, Sigma_z, Sigma_omega, "linear", "identity", seed=seed,
                       info={"spectral_radius": spectral_radius, "noise_ratio": noise_ratio,
                             "noise": noise})


def _gaussian_offset(f, R, r):
    # E[f(R_i x + r_i)] for x ~ N(0, I): R_i x + r_i ~ N(r_i, |R_i|^2)
    xi, w = gauss_hermite()
    scale = np.linalg.norm(R, axis=1)
    return f(r[:, None] + scale[:, None] * xi[None, :]) @ w


def conditioning_ratio(C, R):
    """``min eig(R^T C^T C R) / max eig(C C^T)``."""
    CR = C @ R
    return float(np.linalg.eigvalsh(CR.T @ CR)[0] / np.linalg.eigvalsh(C @ C.T)[-1])


def gen_nonlinear(N_x, N_psi, N_s, rho="tanh", seed=0, spectral_radius=0.9, noise_ratio=1.0,
                  pilot=20000, max_tries=100):
    """Random nonlinear system with ``psi(x) = C (rho(R x + r) - m)``.

    ``R`` and ``r`` are drawn from ``N(0, 1/N_x)``, ``C`` has entries of
    order ``N_psi^{-1/2}`` and ``A`` orthonormal columns. The transition
    ``B = G M`` composes a scaled random rotation ``G`` with the least-squares
    readout ``M`` of ``x`` from ``psi(x)``. A pilot run then rescales the state
    so its stationary covariance is the identity. Draws of ``C`` whose
    conditioning ratio is not above 1 are rejected.

    ``R``, ``r`` and ``C`` come from separate child streams of ``seed``, so
    for a fixed seed the first ``n`` rows of ``R`` and entries of ``r`` are
    the same for every ``N_psi >= n``. Sweeps over ``N_psi`` therefore add
    features rather than redraw them.
    """
    if not 1 <= N_x <= N_psi <= N_s:
        raise ParameterError("need 1 <= N_x <= N_psi <= N_s")
    f = _rho(rho)[0]
    r_seq, rr_seq, c_seq, g_seq, main_seq = np.random.SeedSequence(seed).spawn(5)
    rng = np.random.default_rng(main_seq)
    c_rng = np.random.default_rng(c_seq)
    R = np.random.default_rng(r_seq).standard_normal((N_psi, N_x)) / np.sqrt(N_x)
    r = np.random.default_rng(rr_seq).standard_normal(N_psi) / np.sqrt(N_x)
    for attempt in range(max_tries):
        C = c_rng.standard_normal((N_psi, N_psi)) / np.sqrt(N_psi)
        if rho == "identity" or conditioning_ratio(C, R) > 1.0:
            break
    else:
        raise ParameterError("could not draw a well-conditioned mapping; increase N_psi / N_x")
    A = _orthonormal_columns(rng, N_s, N_psi)
    offset = _gaussian_offset(f, R, r)

    X = rng.standard_normal((pilot, N_x))
    Psi = (f(X @ R.T + r) - offset) @ C.T
    M = np.linalg.lstsq(Psi, X, rcond=None)[0].T
    G = spectral_radius * _orthonormal_columns(np.random.default_rng(g_seq), N_x, N_x)
    B = G @ M
    Sigma_z = (1.0 - spectral_radius ** 2) * np.eye(N_x)
    gt = GroundTruth(A, B, Sigma_z, np.zeros((N_s, N_s)), "nonlinear", rho, C, R, r, offset,
                     seed, {})

    # rescale coordinates so the stationary state covariance is I
    traj = simulate(gt, pilot, seed=int(rng.integers(2 ** 31)))
    Sx = np.cov(traj.states.T, bias=True).reshape(N_x, N_x)
    S = np.linalg.inv(_sqrt_psd(Sx))
    S_inv = np.linalg.inv(S)
    gt.R = R @ S_inv
    gt.B = S @ B
    gt.Sigma_z = S @ Sigma_z @ S.T
    gt.Sigma_z = (gt.Sigma_z + gt.Sigma_z.T) / 2
    traj = simulate(gt, pilot, seed=int(rng.integers(2 ** 31)))
    Sigma_psi = traj.bases.T @ traj.bases / pilot
    total = noise_ratio * float(np.trace(A @ Sigma_psi @ A.T))
    gt.Sigma_omega = _noise_cov(rng, N_s, total, "isotropic")
    gt.info = {"Sigma_psi": Sigma_psi, "spectral_radius": spectral_radius,
               "noise_ratio": noise_ratio, "conditioning_ratio": conditioning_ratio(C, gt.R),
               "draws": attempt + 1}
    return gt


@dataclass
class Trajectory:
    states: np.ndarray
    bases: np.ndarray
    observations: np.ndarray
    clean: np.ndarray  # observations without observation noise

    def __iter__(self):
        # unpacks as (states, observations)
        return iter((self.states, self.observations))


def simulate(gt, T, seed=0, burn_in=BURN_IN):
    """Run the system for ``burn_in + T`` steps and keep the last ``T``."""
    if T < 1:
        raise ParameterError("T must be >= 1")
    rng = np.random.default_rng(seed)
    n_x = gt.n_x
    total = burn_in + T
    z = rng.standard_normal((total, n_x)) @ _sqrt_psd(gt.Sigma_z)
    states = np.empty((total, n_x))
    x = np.zeros(n_x)
    if gt.kind == "linear":
        B = gt.B
        for t in range(total):
            states[t] = x
            x = B @ x + z[t]
    else:
        f = _rho(gt.rho)[0]
        BC = gt.B @ gt.C
        R, r, m = gt.R, gt.r, gt.offset
        for t in range(total):
            states[t] = x
            x = BC @ (f(R @ x + r) - m) + z[t]
    states = states[burn_in:]
    bases = gt.bases(states)
    clean = bases @ gt.A.T
    noise = rng.standard_normal((T, gt.n_s)) @ _sqrt_psd(gt.Sigma_omega)
    return Trajectory(states, bases, clean + noise, clean)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

def subspace_angle(U, V):
    """Principal angles (radians, ascending) between the column spans."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    return np.sort(linalg.subspace_angles(U, V))


def spectrum_distance(M_hat, M_true):
    """Distance between eigenvalue multisets under the best one-to-one matching.

    Eigenvalues may be complex; the matching minimizes the summed squared
    moduli of differences and the result is the square root of that sum.
    Shorter spectra are padded with zeros.
    """
    a = np.linalg.eigvals(np.atleast_2d(M_hat))
    b = np.linalg.eigvals(np.atleast_2d(M_true))
    n = max(a.size, b.size)
    a = np.concatenate([a, np.zeros(n - a.size)])
    b = np.concatenate([b, np.zeros(n - b.size)])
    cost = np.abs(a[:, None] - b[None, :]) ** 2
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].sum()))


def singular_value_distance(M_hat, M_true):
    a = np.linalg.svd(np.atleast_2d(M_hat), compute_uv=False)
    b = np.linalg.svd(np.atleast_2d(M_true), compute_uv=False)
    n = max(a.size, b.size)
    a = np.concatenate([a, np.zeros(n - a.size)])
    b = np.concatenate([b, np.zeros(n - b.size)])
    return float(np.linalg.norm(a - b))


def relative_frobenius(M_hat, M_true):
    denom = np.linalg.norm(M_true)
    return float(np.linalg.norm(M_hat - M_true) / denom) if denom > 0 else float(np.linalg.norm(M_hat))


def procrustes_ratio(M_hat, M_true):
    """Squared Frobenius error ratio after the best orthogonal left alignment.

    Labeled separately from the invariant metrics; it resolves only an
    orthogonal ambiguity.
    """
    M_hat = np.atleast_2d(M_hat)
    M_true = np.atleast_2d(M_true)
    Omega, _ = linalg.orthogonal_procrustes(M_hat.T, M_true.T)
    aligned = Omega.T @ M_hat
    return float(np.linalg.norm(aligned - M_true) ** 2 / np.linalg.norm(M_true) ** 2)


def canonical_correlations(X, Y):
    """Canonical correlations between the columns of two row-aligned series."""
    X = np.asarray(X, dtype=float) - np.mean(X, axis=0)
    Y = np.asarray(Y, dtype=float) - np.mean(Y, axis=0)
    Qx = np.linalg.qr(X)[0]
    Qy = np.linalg.qr(Y)[0]
    return np.clip(np.linalg.svd(Qx.T @ Qy, compute_uv=False), 0.0, 1.0)


def aligned_mse(X_hat, X):
    """Mean squared error after least-squares linear alignment of ``X_hat`` onto ``X``."""
    coef = np.linalg.lstsq(X_hat, X, rcond=None)[0]
    return float(np.mean((X_hat @ coef - X) ** 2))


# --------------------------------------------------------------------------
# categorical sequences (synthetic analog of the digit experiments)
# --------------------------------------------------------------------------

def categorical_templates(n_states=10, N_s=40, seed=0, offset=1.0):
    """One random prototype row per state, shifted by ``offset`` so the mean is nonzero."""
    if n_states < 2 or N_s < n_states:
        raise ParameterError("need 2 <= n_states <= N_s")
    return np.random.default_rng(seed).standard_normal((n_states, N_s)) + offset


def categorical_sequence(templates, T, noise=0.5, p_replace=0.1, seed=0):
    """Cyclic state sequence ``c_{t+1} = c_t + 1 (mod n)`` rendered through the templates.

    With probability ``p_replace`` a step shows a random state instead; the
    cycle continues from the shown state. Returns ``(observations, labels)``.
    """
    n = templates.shape[0]
    rng = np.random.default_rng(seed)
    c = np.empty(T, dtype=int)
    if T:
        c[0] = rng.integers(n)
    jumps = rng.random(T) < p_replace
    rand = rng.integers(n, size=T)
    for t in range(1, T):
        c[t] = rand[t] if jumps[t] else (c[t - 1] + 1) % n
    obs = templates[c] + noise * rng.standard_normal((T, templates.shape[1]))
    return obs, c
