"""
MMSE channel estimation for inter-AP and equivalent user-AP links.

Inter-AP links are observed through a pilot coupling A = W^T kron U^H. The
coupling that minimizes the MSE water-fills the pilot budget over the
eigen-directions of R_ap; the nearest Kronecker product of that design gives
the RF factors actually used on air. User-AP links are estimated after the
analog front-end from orthonormal uplink pilots.
"""

import logging
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from models.estimation_models import CouplingDesign, EquivalentEstimate, InterApEstimate
from utils.errors import DomainError, NoSignalDirectionError, PilotContaminationError
from utils.linalg import complex_normal, eigh_descending, herm, hermitian_part, unvec, vec

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10


def waterfill(eigvals, rho: float, sigma2: float, budget: float,
              budget_slots: Optional[int] = None, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Allocate pilot power over eigen-directions to minimize sum 1/(1/lambda + rho x / sigma2).

    Args:
        eigvals: Eigenvalues sorted in descending order.
        rho: Pilot power.
        sigma2: Noise power.
        budget: Total allocation, sum(x) = budget.
        budget_slots: Maximum number of active directions (N_rf^2).
        rank_tol: Directions with lambda <= rank_tol * lambda_1 are rank-null.

    Returns:
        Allocation x aligned with ``eigvals``.

    Raises:
        NoSignalDirectionError: No eigenvalue carries signal energy.
        DomainError: Invalid budget, noise or ordering.
    """
    lam = np.asarray(eigvals, dtype=np.float64)
    if budget <= 0 or sigma2 <= 0 or rho <= 0:
        raise DomainError("Water-filling needs positive budget, pilot power and noise",
                          {"budget": budget, "rho": rho, "sigma2": sigma2})
    if lam.size == 0 or not np.isfinite(lam).all() or lam[0] <= np.finfo(np.float64).tiny:
        raise NoSignalDirectionError("No eigen-direction carries signal energy",
                                     {"largest_eigenvalue": float(lam[0]) if lam.size else None})
    if np.any(np.diff(lam) > rank_tol * lam[0]):
        raise DomainError("Eigenvalues must be sorted in descending order")

    n_active = int(np.count_nonzero(lam > rank_tol * lam[0]))
    if budget_slots is not None:
        n_active = min(n_active, int(budget_slots))

    snr = rho / sigma2
    y = 1.0 / lam[:n_active]
    x = np.zeros_like(lam)
    while n_active > 0:
        level = (snr * budget + np.sum(y[:n_active])) / n_active
        alloc = (level - y[:n_active]) / snr
        if np.all(alloc >= 0):
            x[:n_active] = alloc
            break
        n_active -= 1

    if n_active < int(np.count_nonzero(lam > rank_tol * lam[0])):
        logger.debug(f"Water-filling kept {n_active} of {lam.size} eigen-directions")
    return x


def coupling_mse(R: np.ndarray, A: np.ndarray, rho: float, sigma2: float) -> float:
    """Trace of the MMSE error covariance for coupling A (non-inverse form)."""
    return float(np.real(np.trace(interap_error_covariance(R, A, rho, sigma2))))


def optimal_coupling(R_ap: np.ndarray, rho: float, sigma2: float, n_rf: int,
                     eig: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> CouplingDesign:
    """MSE-optimal pilot coupling A = Sigma_A U_R^H and its Kronecker RF factors.

    Args:
        R_ap: (n^2, n^2) covariance of vec(H_ap).
        rho: Pilot power.
        sigma2: Noise power.
        n_rf: RF chains; the budget is n_rf^2.
        eig: Optional precomputed (eigvals descending, eigvecs).

    Returns:
        CouplingDesign
    """
    n_sq = R_ap.shape[-1]
    n = int(round(np.sqrt(n_sq)))
    if n * n != n_sq or n_rf > n:
        raise DomainError("R_ap must be n^2 x n^2 with n_rf <= n", {"shape": R_ap.shape, "n_rf": n_rf})

    eigvals, eigvecs = eig if eig is not None else eigh_descending(R_ap)
    eigvals = np.clip(eigvals, 0.0, None)
    slots = n_rf * n_rf
    allocation = waterfill(eigvals, rho, sigma2, float(slots), budget_slots=slots)

    sigma_a = np.zeros((slots, n_sq))
    sigma_a[np.arange(slots), np.arange(slots)] = np.sqrt(allocation[:slots])
    coupling = sigma_a @ herm(eigvecs)
    w_est, u_est, residual = kron_factorize(coupling, n, n_rf)

    return CouplingDesign(
        eigvals=eigvals, eigvecs=eigvecs, allocation=allocation, sigma_a=sigma_a,
        coupling=coupling, w_est=w_est, u_est=u_est, kron_residual=residual,
    )


def vanloan_rearrange(A: np.ndarray, b_shape: Tuple[int, int], c_shape: Tuple[int, int]) -> np.ndarray:
    """Rearrange A so that ||A - B kron C|| = ||A~ - vec(B) vec(C)^T|| for every B, C.

    Args:
        A: (m1 * m2, n1 * n2) matrix.
        b_shape: (m1, n1), shape of the left factor.
        c_shape: (m2, n2), shape of the right factor.
    """
    m1, n1 = b_shape
    m2, n2 = c_shape
    if A.shape != (m1 * m2, n1 * n2):
        raise DomainError(f"Cannot rearrange {A.shape} into {b_shape} kron {c_shape} blocks")
    return A.reshape(m1, m2, n1, n2).transpose(2, 0, 3, 1).reshape(n1 * m1, n2 * m2)


def kron_factorize(A: np.ndarray, n: int, n_rf: int) -> Tuple[np.ndarray, np.ndarray, float]:
    """Nearest Kronecker product A ~ W^T kron U^H via rank-1 SVD of the rearrangement.

    Returns:
        (W_est (n x n_rf), U_est (n x n_rf), Frobenius residual)
    """
    rearranged = vanloan_rearrange(A, (n_rf, n), (n_rf, n))
    left, singular, right_h = scipy.linalg.svd(rearranged, full_matrices=False)
    scale = np.sqrt(singular[0])
    b = unvec(scale * left[:, 0], n_rf, n)         # W^T
    c = unvec(scale * right_h[0, :], n_rf, n)      # U^H
    residual = float(np.sqrt(np.sum(singular[1:] ** 2)))
    return b.T, herm(c), residual


def simulate_interap_pilot(H: np.ndarray, W: np.ndarray, U: np.ndarray, rho: float,
                           sigma_tau: float, rng: np.random.Generator) -> np.ndarray:
    """Decorrelated inter-AP pilot observation sqrt(rho) U^H H W + N (batched)."""
    clean = np.sqrt(rho) * (herm(U) @ H @ W)
    noise = complex_normal(rng, clean.shape, sigma_tau ** 2) if sigma_tau > 0 else 0.0
    return clean + noise


def interap_error_covariance(R: np.ndarray, A: np.ndarray, rho: float, sigma2: float) -> np.ndarray:
    """C = R - rho R A^H (rho A R A^H + sigma2 I)^-1 A R, valid for singular R."""
    if sigma2 <= 0:
        raise DomainError("Noise power must be positive", {"sigma2": sigma2})
    AR = A @ R
    M = rho * AR @ herm(A) + sigma2 * np.eye(A.shape[-2])
    return hermitian_part(R - rho * herm(AR) @ np.linalg.solve(M, AR))


def mmse_interap(Y_tilde: np.ndarray, R_ap: np.ndarray, A: np.ndarray, rho: float,
                 sigma2: float) -> InterApEstimate:
    """MMSE estimate of H from the decorrelated pilot; leading axes are batch.

    Args:
        Y_tilde: (..., n_rf, n_rf) pilot observation.
        R_ap: (..., n^2, n^2) covariance of vec(H).
        A: (..., n_rf^2, n^2) coupling realized on air.
        rho: Pilot power.
        sigma2: Noise power.
    """
    if sigma2 <= 0:
        raise DomainError("Noise power must be positive", {"sigma2": sigma2})
    n = int(round(np.sqrt(R_ap.shape[-1])))
    AR = A @ R_ap
    M = rho * AR @ herm(A) + sigma2 * np.eye(A.shape[-2])
    y = vec(Y_tilde)[..., None]
    h_hat = np.sqrt(rho) * herm(AR) @ np.linalg.solve(M, y)
    C = hermitian_part(R_ap - rho * herm(AR) @ np.linalg.solve(M, AR))
    return InterApEstimate(H_hat=unvec(h_hat[..., 0], n, n), C=C)


def equivalent_covariance(analog: np.ndarray, R_link: np.ndarray) -> np.ndarray:
    """Congruence analog^H R analog (broadcast over leading axes)."""
    return hermitian_part(herm(analog) @ R_link @ analog)


def check_pilots(pilots: np.ndarray, n_users: int) -> None:
    """Validate that ``n_users`` can share the pilot rows without contamination."""
    tau = pilots.shape[-1]
    if pilots.shape[0] != n_users or tau < n_users:
        raise PilotContaminationError(
            f"{n_users} users need orthogonal pilots of length >= {n_users}, got {pilots.shape}",
            {"users": n_users, "tau": tau},
        )
    if not np.allclose(pilots @ herm(pilots), np.eye(n_users), atol=1e-10):
        raise DomainError("Pilot rows must be orthonormal")


def simulate_user_pilot(links: np.ndarray, analog: np.ndarray, pilots: np.ndarray, rho: float,
                        sigma_tau: float, rng: np.random.Generator) -> np.ndarray:
    """Received pilot block sum_u sqrt(rho) (analog^H link_u) phi_u^T + N.

    Args:
        links: (users, ..., n) channels; trailing batch axes index APs.
        analog: (..., n, n_rf) analog matrices matching the batch axes.
        pilots: (users, tau) orthonormal pilot rows.

    Returns:
        (..., n_rf, tau) observation.
    """
    check_pilots(pilots, links.shape[0])
    eq = np.einsum("...na,u...n->u...a", np.conj(analog), links)
    clean = np.sqrt(rho) * np.einsum("u...a,ut->...at", eq, pilots)
    noise = complex_normal(rng, clean.shape, sigma_tau ** 2) if sigma_tau > 0 else 0.0
    return clean + noise


def mmse_equivalent(Y: np.ndarray, pilots: np.ndarray, R_eq: np.ndarray, rho: float,
                    sigma2: float) -> EquivalentEstimate:
    """MMSE estimates of every user's equivalent channel from one pilot block.

    Args:
        Y: (..., n_rf, tau) observation.
        pilots: (users, tau) pilot rows phi_u.
        R_eq: (users, ..., n_rf, n_rf) equivalent covariances.
        rho: Pilot power.
        sigma2: Noise power.

    Returns:
        EquivalentEstimate with arrays indexed (users, ...).
    """
    if sigma2 <= 0:
        raise DomainError("Noise power must be positive", {"sigma2": sigma2})
    n_rf = R_eq.shape[-1]
    overlap = np.abs(pilots @ herm(pilots)) ** 2        # |phi_v^T phi_u^*|^2
    Q = rho * np.einsum("vu,v...ab->u...ab", overlap, R_eq) + sigma2 * np.eye(n_rf)
    despread = np.einsum("...at,ut->u...a", Y, np.conj(pilots))
    est = np.sqrt(rho) * (R_eq @ np.linalg.solve(Q, despread[..., None]))[..., 0]
    R_hat = hermitian_part(rho * R_eq @ np.linalg.solve(Q, herm(R_eq)))
    R_tilde = hermitian_part(R_eq - R_hat)
    return EquivalentEstimate(est=est, R_eq=R_eq, R_hat=R_hat, R_tilde=R_tilde)


def nmse(est: np.ndarray, truth: np.ndarray) -> float:
    """Normalized squared error ||est - truth||^2 / ||truth||^2."""
    energy = float(np.sum(np.abs(truth) ** 2))
    if energy <= 0:
        raise DomainError("NMSE is undefined for an all-zero reference")
    return float(np.sum(np.abs(np.asarray(est) - truth) ** 2)) / energy


def estimate_interap_links(H_ap: np.ndarray, R_ap: np.ndarray, rho: float, sigma2: float,
                           n_rf: int, rng: np.random.Generator, full_digital: bool = False,
                           factors: Optional[Tuple[np.ndarray, np.ndarray]] = None
                           ) -> Tuple[InterApEstimate, np.ndarray, np.ndarray]:
    """Design the coupling and estimate every inter-AP link of a (N_T, N_R) grid.

    Full-digital estimation observes vec(H) directly (W = U = I). Passing
    ``factors`` reuses RF factors designed earlier for the same covariances.

    Returns:
        (InterApEstimate indexed (N_T, N_R), W_est, U_est each (N_T, N_R, n, n_rf))
    """
    n_t, n_r, n, _ = H_ap.shape
    width = n if full_digital else n_rf
    if factors is not None:
        w_est, u_est = factors
        width = w_est.shape[-1]
    else:
        w_est = np.zeros((n_t, n_r, n, width), dtype=np.complex128)
        u_est = np.zeros_like(w_est)
        for m in range(n_t):
            for z in range(n_r):
                if full_digital:
                    w_est[m, z] = np.eye(n)
                    u_est[m, z] = np.eye(n)
                else:
                    design = optimal_coupling(R_ap[m, z], rho, sigma2, n_rf)
                    w_est[m, z] = design.w_est
                    u_est[m, z] = design.u_est
    coupling = np.einsum("mzab,mzcd->mzbdac", w_est, np.conj(u_est)).reshape(
        n_t, n_r, width * width, n * n)
    Y = simulate_interap_pilot(H_ap, w_est, u_est, rho, np.sqrt(sigma2), rng)
    return mmse_interap(Y, R_ap, coupling, rho, sigma2), w_est, u_est


def interap_posterior_mean(Y_tilde: np.ndarray, R_ap: np.ndarray, A: np.ndarray, rho: float,
                           sigma2: float) -> np.ndarray:
    """MMSE estimate of H alone, skipping the n^2 x n^2 error covariance."""
    n = int(round(np.sqrt(R_ap.shape[-1])))
    AR = A @ R_ap
    M = rho * AR @ herm(A) + sigma2 * np.eye(A.shape[-2])
    h_hat = np.sqrt(rho) * herm(AR) @ np.linalg.solve(M, vec(Y_tilde)[..., None])
    return unvec(h_hat[..., 0], n, n)


def full_digital_posterior_mean(Y: np.ndarray, eigvals: np.ndarray, eigvecs: np.ndarray,
                                rho: float, sigma2: float) -> np.ndarray:
    """MMSE estimate of H from sqrt(rho) H + N using the eigendecomposition of R_ap."""
    n = Y.shape[-1]
    lam = np.clip(eigvals, 0.0, None)
    gain = np.sqrt(rho) * lam / (rho * lam + sigma2)
    h_hat = eigvecs @ (gain * (herm(eigvecs) @ vec(Y)))
    return unvec(h_hat, n, n)
