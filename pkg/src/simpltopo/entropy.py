"""Sigmoid/latent-variable algebra and the two volume-feasibility projections.

Densities live in [0, 1] element-wise and are represented either directly
(``rho``) or through a latent field ``psi`` with ``rho = sigmoid(psi)``. All
integrals assume the uniform element measure of a structured mesh, so they
reduce to ``element_area * sum(...)``.
"""

import numpy as np

__all__ = [
    "sigmoid",
    "inv_sigmoid",
    "softplus",
    "fermi_dirac_entropy",
    "bregman_div",
    "bregman_volume_correct",
    "l2_volume_correct",
    "interior_margin",
]

_BISECT_WIDTH = 1e-12
_BISECT_MAX_ITERS = 200


def sigmoid(x):
    """Numerically stable logistic function.

    Evaluated through ``exp(-|x|)`` so it never overflows; saturates to exact
    0.0 / 1.0 only once the exponential underflows. Accepts +-inf, rejects NaN.
    """
    x = np.asarray(x, dtype=float)
    if np.isnan(x).any():
        raise ValueError("sigmoid input contains NaN")
    t = np.exp(-np.abs(x))
    lo = t / (1.0 + t)
    out = np.where(x < 0, lo, 1.0 - lo)
    return out if out.ndim else float(out)


def inv_sigmoid(p):
    """Logit: inverse of ``sigmoid`` on the open interval (0, 1).

    Raises ValueError outside the open interval; callers that may hold
    saturated densities should track the latent variable instead.
    """
    p = np.asarray(p, dtype=float)
    if np.isnan(p).any() or np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("inv_sigmoid requires values strictly inside (0, 1)")
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)


def softplus(x):
    """Overflow-free ``log(1 + exp(x))`` = ``max(x, 0) + log1p(exp(-|x|))``."""
    x = np.asarray(x, dtype=float)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out if out.ndim else float(out)


def fermi_dirac_entropy(rho, element_area):
    """Integral of ``rho ln rho + (1-rho) ln(1-rho)`` with 0 ln 0 = 0.

    Returns +inf outside the box [0, 1] (the effective domain boundary).
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0) or np.any(rho > 1.0):
        return np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(rho > 0.0, rho * np.log(rho), 0.0)
        b = np.where(rho < 1.0, (1.0 - rho) * np.log1p(-rho), 0.0)
    return element_area * float(np.sum(a + b))


def bregman_div(psi_a, psi_b, element_area):
    """Fermi-Dirac Bregman divergence between densities given in latent form.

    Computed as ``integral of sigmoid(a)(a-b) + softplus(b) - softplus(a)``,
    which equals the density-form integrand
    ``rho ln(rho/q) + (1-rho) ln((1-rho)/(1-q))`` without ever forming the
    unstable logarithms of nearly saturated densities. The second argument
    must be finite; the first may sit at +-inf (saturated limits).
    """
    a = np.asarray(psi_a, dtype=float)
    b = np.asarray(psi_b, dtype=float)
    if np.isnan(a).any() or np.isnan(b).any() or np.isinf(b).any():
        raise ValueError("bregman_div requires finite second argument and no NaNs")
    finite = np.isfinite(a)
    af = np.where(finite, a, 0.0)
    terms = sigmoid(af) * (af - b) + softplus(b) - softplus(af)
    # Saturated limits: rho=1 contributes softplus(b) - b, rho=0 contributes softplus(b).
    terms = np.where(a == np.inf, softplus(b) - b, terms)
    terms = np.where(a == -np.inf, softplus(b), terms)
    return element_area * float(np.sum(terms))


def interior_margin(psi):
    """Element-wise ``min(rho, 1 - rho)`` evaluated stably as sigmoid(-|psi|)."""
    return sigmoid(-np.abs(np.asarray(psi, dtype=float)))


def _bisect(volume, lo, hi, tol):
    """Bisection for the monotone increasing mean-volume residual ``volume``.

    Stops when the bracket is narrower than _BISECT_WIDTH and the residual is
    within ``tol``; an exact-residual hit returns immediately.
    """
    f_lo, f_hi = volume(lo), volume(hi)
    if f_lo > 0.0 or f_hi < 0.0:
        raise AssertionError(
            f"volume bracket lost its sign change: f({lo})={f_lo}, f({hi})={f_hi}")
    mid, f_mid = lo, f_lo
    for _ in range(_BISECT_MAX_ITERS):
        mid = 0.5 * (lo + hi)
        f_mid = volume(mid)
        if abs(f_mid) <= tol and hi - lo <= _BISECT_WIDTH:
            return mid
        if f_mid == 0.0:
            return mid
        if f_mid < 0.0:
            lo = mid
        else:
            hi = mid
    if abs(f_mid) > tol:
        raise AssertionError(
            f"volume bisection stalled at residual {f_mid:.3e} (tol {tol:.3e})")
    return mid


def bregman_volume_correct(psi_half, theta, mesh, tol=1e-10):
    """Shift a latent field by the scalar that restores the volume fraction.

    Finds mu with ``mean(sigmoid(psi_half + mu)) = theta`` by bisection on
    the bracket ``[logit(theta) - max(psi_half), logit(theta) - min(psi_half)]``
    and returns ``(mu, psi_half + mu)``. This is the entropy (Bregman)
    projection of ``sigmoid(psi_half)`` onto the admissible set. ``tol`` is
    relative to the domain volume.
    """
    psi_half = np.asarray(psi_half, dtype=float)
    if not 0.0 < theta < 1.0:
        raise ValueError(f"volume fraction must be in (0, 1), got {theta}")
    if not np.isfinite(psi_half).all():
        raise ValueError("bregman_volume_correct requires a finite latent field")
    if psi_half.shape != (mesh.num_elements,):
        raise ValueError(
            f"expected {mesh.num_elements} element values, got shape {psi_half.shape}")

    def residual(mu):
        return float(np.mean(sigmoid(psi_half + mu))) - theta

    if abs(residual(0.0)) <= tol:
        return 0.0, psi_half.copy()

    pivot = inv_sigmoid(theta)
    lo = pivot - float(psi_half.max())
    hi = pivot - float(psi_half.min())
    if hi - lo <= _BISECT_WIDTH:
        mu = 0.5 * (lo + hi)
        return mu, psi_half + mu
    mu = _bisect(residual, lo, hi, tol)
    return mu, psi_half + mu


def l2_volume_correct(v, theta, mesh, tol=1e-10):
    """Clamped-shift projection onto the admissible set in the L2 sense.

    Returns ``clip(v + c, 0, 1)`` with the scalar c chosen by bisection on
    ``[theta - max(v), theta - min(v)]`` so the volume fraction equals theta
    within ``tol`` (relative to the domain volume).
    """
    v = np.asarray(v, dtype=float)
    if not 0.0 < theta < 1.0:
        raise ValueError(f"volume fraction must be in (0, 1), got {theta}")
    if v.shape != (mesh.num_elements,):
        raise ValueError(
            f"expected {mesh.num_elements} element values, got shape {v.shape}")

    def residual(c):
        return float(np.mean(np.clip(v + c, 0.0, 1.0))) - theta

    if abs(residual(0.0)) <= tol:
        return np.clip(v, 0.0, 1.0)

    lo = theta - float(v.max())
    hi = theta - float(v.min())
    if hi - lo <= _BISECT_WIDTH:
        c = 0.5 * (lo + hi)
    else:
        c = _bisect(residual, lo, hi, tol)
    return np.clip(v + c, 0.0, 1.0)
