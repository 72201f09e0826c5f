"""Fundamental solutions and radial kernel stacks.

3D Helmholtz kernel G_k(r) = exp(ikr)/(4 pi r), its derivatives, the
smoothed difference kernel psi(r) = G_kp(r) - G_ks(r) (finite at r = 0),
and the elastic fundamental solution built from them:

    Gamma_kl = (1/(omega^2 rho)) * (ks^2 G_ks delta_kl - d_k d_l psi).

2D counterparts use the Hankel kernel (i/4) H0^(1)(kr); Bessel J0, Y0,
J1, Y1 are evaluated in-repo by ascending series below x = 12 and by the
Hankel asymptotic expansion (truncated at its smallest term) above.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "WaveParams",
    "helmholtz_g3",
    "helmholtz_g3_derivs",
    "diff_kernel",
    "kupradze_gamma",
    "kupradze_gamma_derivs",
    "kupradze_gamma2",
    "kupradze_gamma2_derivs",
    "hankel_kernel",
    "bessel_j0",
    "bessel_y0",
    "bessel_j1",
    "bessel_y1",
]

FOURPI = 4.0 * np.pi
EULER_GAMMA = 0.57721566490153286061
# r * max(kp, ks) below which the difference kernel switches to its series
PSI_SERIES_SWITCH = 0.5
_PSI_SERIES_TERMS = 20
_BESSEL_SWITCH = 12.0


@dataclass(frozen=True)
class WaveParams:
    """Material and frequency parameters of the elastic medium.

    kappa_p and kappa_s are the compressional and shear wavenumbers
    omega * sqrt(rho / (lam + 2 mu)) and omega * sqrt(rho / mu).
    """

    omega: float = 1.0
    rho: float = 1.0
    mu: float = 1.0
    lam: float = 2.0

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.lam + 2.0 * self.mu <= 0:
            raise ValueError("lam + 2 mu must be positive")

    @cached_property
    def kappa_p(self) -> float:
        return self.omega * np.sqrt(self.rho / (self.lam + 2.0 * self.mu))

    @cached_property
    def kappa_s(self) -> float:
        return self.omega * np.sqrt(self.rho / self.mu)


# ---- 3D Helmholtz radial stacks ----


def helmholtz_g3(kappa: float | complex, r) -> np.ndarray | complex:
    """Helmholtz kernel exp(i kappa r) / (4 pi r); kappa = 0 is Laplace."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    out = np.exp(1j * kappa * r) / (FOURPI * r)
    return out if out.ndim else complex(out)


def helmholtz_g3_derivs(kappa: float | complex, x, y):
    """Value, gradient and Hessian of G_kappa(|x - y|) in x.

    Parameters
    ----------
    x, y : (..., 3) arrays (broadcastable)

    Returns
    -------
    value : (...) complex
    grad : (..., 3) complex
    hess : (..., 3, 3) complex
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    r = np.linalg.norm(d, axis=-1)
    if np.any(r <= 0):
        raise ValueError("x and y must be distinct")
    g = _g_radial(kappa, r, 2)
    rhat = d / r[..., None]
    grad = g[1][..., None] * rhat
    hess = _hess_from_radial(g[1], g[2], r, rhat)
    return g[0], grad, hess


def _g_radial(kappa: complex, r: np.ndarray, order: int) -> list[np.ndarray]:
    """Radial derivatives [G, G', ..., G^(order)] of exp(ikr)/(4 pi r)."""
    t = 1j * kappa * np.asarray(r, dtype=float)
    e = np.exp(t) / (FOURPI * r)
    # Q polynomials: Q0=1, Q1=t-1, Q2=t^2-2t+2, Q3=t^3-3t^2+6t-6
    out = [e]
    if order >= 1:
        out.append(e * (t - 1.0) / r)
    if order >= 2:
        out.append(e * (t * t - 2.0 * t + 2.0) / r**2)
    if order >= 3:
        out.append(e * (t**3 - 3.0 * t * t + 6.0 * t - 6.0) / r**3)
    if order >= 4:
        raise ValueError("order must be <= 3")
    return out


def _hess_from_radial(f1, f2, r, rhat):
    """Hessian of f(|x-y|) in x from radial derivatives f', f''."""
    eye = np.eye(rhat.shape[-1])
    a = f1 / r  # (...,)
    b = f2 - a
    return a[..., None, None] * eye + b[..., None, None] * (
        rhat[..., :, None] * rhat[..., None, :]
    )


def _third_from_radial(f1, f2, f3, r, rhat):
    """Third derivative tensor d_k d_l d_m f(|x-y|)."""
    eye = np.eye(rhat.shape[-1])
    c1 = f2 / r - f1 / r**2
    c2 = f3 - 3.0 * f2 / r + 3.0 * f1 / r**2
    sym = (
        eye[..., :, :, None] * rhat[..., None, None, :]
        + eye[..., :, None, :] * rhat[..., None, :, None]
        + eye[..., None, :, :] * rhat[..., :, None, None]
    )
    outer3 = (
        rhat[..., :, None, None]
        * rhat[..., None, :, None]
        * rhat[..., None, None, :]
    )
    return c1[..., None, None, None] * sym + c2[..., None, None, None] * outer3


# ---- difference kernel ----


def _psi_series_coeffs(kp: float, ks: float, nterms: int) -> np.ndarray:
    """Power series psi(r) = sum c_m r^m, c_m = i^{m+1}(kp^{m+1}-ks^{m+1})
    / (4 pi (m+1)!)."""
    m = np.arange(nterms)
    fact = np.cumprod(np.concatenate(([1.0], np.arange(2, nterms + 1))))  # (m+1)!
    return (1j) ** (m + 1) * (kp ** (m + 1) - ks ** (m + 1)) / (FOURPI * fact)


def _psi_stack(kp: float, ks: float, r: np.ndarray, order: int) -> list[np.ndarray]:
    """Radial derivatives [psi, psi', ..., psi^(order)] of the smoothed
    difference kernel, series below the switch radius and a direct
    difference of Helmholtz stacks above it."""
    r = np.asarray(r, dtype=float)
    kmax = max(abs(kp), abs(ks))
    small = kmax * r < PSI_SERIES_SWITCH
    out = [np.zeros(r.shape, dtype=complex) for _ in range(order + 1)]
    if np.any(small):
        rs = r[small]
        c = _psi_series_coeffs(kp, ks, _PSI_SERIES_TERMS)
        m = np.arange(_PSI_SERIES_TERMS, dtype=float)
        for d in range(order + 1):
            # termwise derivative: m(m-1)...(m-d+1) c_m r^(m-d)
            coef = c.copy()
            for j in range(d):
                coef = coef * (m - j)
            # coef is exactly zero for m < d, the factor (m - m) kills it
            pw = np.maximum(m - d, 0.0)
            vals = coef * rs[..., None] ** pw
            out[d][small] = vals.sum(axis=-1)
    big = ~small
    if np.any(big):
        rb = r[big]
        gp = _g_radial(kp, rb, order)
        gs = _g_radial(ks, rb, order)
        for d in range(order + 1):
            out[d][big] = gp[d] - gs[d]
    return out


def diff_kernel(kappa_p: float, kappa_s: float, r) -> np.ndarray | complex:
    """Smoothed difference kernel psi(r) = G_kp(r) - G_ks(r).

    Finite at r = 0 with psi(0) = i (kp - ks) / (4 pi); evaluated by
    series for r * max(kp, ks) below the switch radius.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    out = _psi_stack(kappa_p, kappa_s, np.atleast_1d(r), 0)[0]
    return out.reshape(r.shape) if r.ndim else complex(out[0])


# ---- Kupradze tensor ----


def kupradze_gamma(params: WaveParams, x, y) -> np.ndarray:
    """Elastic fundamental solution Gamma(x, y), shape (..., 3, 3)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    r = np.linalg.norm(d, axis=-1)
    if np.any(r <= 0):
        raise ValueError("x and y must be distinct")
    rhat = d / r[..., None]
    ks = params.kappa_s
    gs = _g_radial(ks, r, 0)[0]
    psi = _psi_stack(params.kappa_p, ks, r, 2)
    hess = _hess_from_radial(psi[1], psi[2], r, rhat)
    scale = 1.0 / (params.omega**2 * params.rho)
    return scale * (ks**2 * gs[..., None, None] * np.eye(3) - hess)


def kupradze_gamma_derivs(params: WaveParams, x, y):
    """Gamma and its x-derivatives; dgamma[..., k, l, m] = d_m Gamma_kl."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    r = np.linalg.norm(d, axis=-1)
    if np.any(r <= 0):
        raise ValueError("x and y must be distinct")
    rhat = d / r[..., None]
    ks = params.kappa_s
    gs = _g_radial(ks, r, 1)
    psi = _psi_stack(params.kappa_p, ks, r, 3)
    hess = _hess_from_radial(psi[1], psi[2], r, rhat)
    third = _third_from_radial(psi[1], psi[2], psi[3], r, rhat)
    scale = 1.0 / (params.omega**2 * params.rho)
    eye = np.eye(3)
    gamma = scale * (ks**2 * gs[0][..., None, None] * eye - hess)
    grad_gs = gs[1][..., None] * rhat  # (..., m)
    dgamma = scale * (
        ks**2 * eye[..., :, :, None] * grad_gs[..., None, None, :] - third
    )
    return gamma, dgamma


# ---- Bessel / Hankel ----


def _hankel_asymptotic(nu: int, x: np.ndarray) -> np.ndarray:
    """H_nu^(1)(x) for x > switch by the large-argument expansion,
    truncated elementwise at its smallest term."""
    s = np.zeros_like(x, dtype=complex)
    term = np.ones_like(x, dtype=complex)
    smallest = np.full_like(x, np.inf, dtype=float)
    for k in range(40):
        mag = np.abs(term)
        take = mag < smallest
        s = np.where(take, s + term, s)
        smallest = np.where(take, mag, smallest)
        term = term * 1j * (4.0 * nu * nu - (2 * k + 1) ** 2) / (8.0 * (k + 1) * x)
    phase = x - 0.5 * np.pi * nu - 0.25 * np.pi
    return np.sqrt(2.0 / (np.pi * x)) * np.exp(1j * phase) * s


def _hankel01(x: np.ndarray):
    """H0^(1)(x) and H1^(1)(x) for x > 0, piecewise series/asymptotic."""
    x = np.asarray(x, dtype=float)
    h0 = np.empty(x.shape, dtype=complex)
    h1 = np.empty(x.shape, dtype=complex)
    small = x <= _BESSEL_SWITCH
    if np.any(small):
        j0, y0, j1, y1 = _bessel_series(x[small])
        h0[small] = j0 + 1j * y0
        h1[small] = j1 + 1j * y1
    big = ~small
    if np.any(big):
        h0[big] = _hankel_asymptotic(0, x[big])
        h1[big] = _hankel_asymptotic(1, x[big])
    return h0, h1


def _bessel_series(x: np.ndarray):
    """Ascending series J0, Y0, J1, Y1 for 0 < x <= 12."""
    x = np.asarray(x, dtype=float)
    x2 = 0.25 * x * x
    j0 = np.ones_like(x)
    sy0 = np.zeros_like(x)
    t0 = np.ones_like(x)
    j1s = np.ones_like(x)  # sum for J1/(x/2)
    sy1 = np.ones_like(x)  # sum_k (-1)^k (H_k + H_{k+1}) x2^k/(k!(k+1)!)
    t1 = np.ones_like(x)
    hk = 0.0
    for k in range(1, 32):
        t0 = -t0 * x2 / (k * k)
        j0 = j0 + t0
        hk += 1.0 / k
        sy0 = sy0 - hk * t0  # (-1)^{k+1} H_k x2^k/(k!)^2
        t1 = -t1 * x2 / (k * (k + 1))
        j1s = j1s + t1
        sy1 = sy1 + (2.0 * hk + 1.0 / (k + 1.0)) * t1
    lg = np.log(0.5 * x) + EULER_GAMMA
    y0 = (2.0 / np.pi) * (lg * j0 + sy0)
    j1 = 0.5 * x * j1s
    y1 = (2.0 / np.pi) * (lg * j1 - 1.0 / x) - (x / (2.0 * np.pi)) * sy1
    return j0, y0, j1, y1


def bessel_j0(x) -> np.ndarray | float:
    """Bessel J0 for x >= 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be nonnegative")
    xs = np.atleast_1d(x)
    out = np.ones(xs.shape)
    pos = xs > 0
    if np.any(pos):
        h0, _ = _hankel01(xs[pos])
        out[pos] = h0.real
    return out.reshape(x.shape) if x.ndim else float(out[0])


def bessel_y0(x) -> np.ndarray | float:
    """Bessel Y0 for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    h0, _ = _hankel01(np.atleast_1d(x))
    out = h0.imag
    return out.reshape(x.shape) if x.ndim else float(out[0])


def bessel_j1(x) -> np.ndarray | float:
    """Bessel J1 for x >= 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be nonnegative")
    xs = np.atleast_1d(x)
    out = np.zeros(xs.shape)
    pos = xs > 0
    if np.any(pos):
        _, h1 = _hankel01(xs[pos])
        out[pos] = h1.real
    return out.reshape(x.shape) if x.ndim else float(out[0])


def bessel_y1(x) -> np.ndarray | float:
    """Bessel Y1 for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    _, h1 = _hankel01(np.atleast_1d(x))
    out = h1.imag
    return out.reshape(x.shape) if x.ndim else float(out[0])


def hankel_kernel(kappa: float, r) -> np.ndarray | complex:
    """2D Helmholtz kernel (i/4) H0^(1)(kappa r)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    h0, _ = _hankel01(np.atleast_1d(kappa * r))
    out = 0.25j * h0
    return out.reshape(r.shape) if r.ndim else complex(out[0])


# ---- 2D radial stacks ----


def _g2_radial(kappa: float, r: np.ndarray, order: int) -> list[np.ndarray]:
    """[G2, G2', G2''] for G2(r) = (i/4) H0^(1)(kappa r).

    G2' = -(i kappa / 4) H1, G2'' = -(i kappa^2/4)(H0 - H1/(kappa r)).
    """
    r = np.asarray(r, dtype=float)
    h0, h1 = _hankel01(kappa * r)
    out = [0.25j * h0]
    if order >= 1:
        out.append(-0.25j * kappa * h1)
    if order >= 2:
        out.append(-0.25j * kappa * kappa * (h0 - h1 / (kappa * r)))
    if order >= 3:
        x = kappa * r
        out.append(0.25j * kappa**3 * (h1 + h0 / x - 2.0 * h1 / (x * x)))
    if order >= 4:
        raise ValueError("order must be <= 3")
    return out


PSI2_SERIES_SWITCH = 2.0


def _psi2_stack(kp: float, ks: float, r: np.ndarray, order: int) -> list[np.ndarray]:
    """Radial derivatives of the 2D difference kernel
    psi2(r) = (i/4)(H0(kp r) - H0(ks r)).

    Below the switch the direct Hankel difference cancels (the 1/r^2
    parts of the second derivatives nearly annihilate), so the split
    series is recomposed there instead.
    """
    r = np.asarray(r, dtype=float)
    small = max(abs(kp), abs(ks)) * r < PSI2_SERIES_SWITCH
    out = [np.zeros(r.shape, dtype=complex) for _ in range(order + 1)]
    if np.any(small):
        rs = r[small]
        lg = np.log(np.where(rs > 0, rs, 1.0))
        for d, (a, b) in enumerate(_psi2_split(kp, ks, rs, order)):
            out[d][small] = a + b * lg
    big = ~small
    if np.any(big):
        gp = _g2_radial(kp, r[big], order)
        gs = _g2_radial(ks, r[big], order)
        for d in range(order + 1):
            out[d][big] = gp[d] - gs[d]
    return out


def _g2_series_coeffs(kappa: float, nterms: int):
    """Coefficients of G2 = a(r) + b(r) ln r with a, b even power series:
    a_k, b_k multiply r^(2k)."""
    k = np.arange(nterms, dtype=float)
    fact = np.ones(nterms)
    for i in range(1, nterms):
        fact[i] = fact[i - 1] * i
    jk = (-1.0) ** k * kappa ** (2 * k) / (4.0**k * fact**2)  # J0 coeffs
    hk = np.concatenate(([0.0], np.cumsum(1.0 / np.arange(1, nterms))))
    lk = np.log(0.5 * kappa) + EULER_GAMMA
    b = -jk / (2.0 * np.pi)
    a = (0.25j - lk / (2.0 * np.pi)) * jk + hk * jk / (2.0 * np.pi)
    return a.astype(complex), b.astype(complex)


def _psi2_split(kp: float, ks: float, r: np.ndarray, order: int):
    """Split radial derivatives of psi2 as (smooth, logcoef) pairs:
    psi2^(m)(r) = A_m(r) + B_m(r) ln r, all parts smooth at r = 0
    (the ln-free 1/r parts cancel in the p-s difference)."""
    n = 24
    ap, bp = _g2_series_coeffs(kp, n)
    as_, bs = _g2_series_coeffs(ks, n)
    a = ap - as_
    b = bp - bs  # b[0] = 0: no 1/r remnant in derivatives
    r = np.asarray(r, dtype=float)
    k = np.arange(n, dtype=float)
    r2k = r[..., None] ** (2 * k)
    out = []
    # order 0: A0 = sum a_k r^2k, B0 = sum b_k r^2k
    A0 = r2k @ a
    B0 = r2k @ b
    out.append((A0, B0))
    if order >= 1:
        # f' = a' + b' ln r + b/r; b0 = 0 so b/r = sum_{k>=1} b_k r^(2k-1)
        r2km1 = np.zeros_like(r2k)
        r2km1[..., 1:] = r[..., None] ** (2 * k[1:] - 1)
        A1 = r2km1 @ (2 * k * a + b)
        B1 = r2km1 @ (2 * k * b)
        out.append((A1, B1))
    if order >= 2:
        r2km2 = np.zeros_like(r2k)
        r2km2[..., 1:] = r[..., None] ** (2 * k[1:] - 2)
        # f'' = a'' + b'' ln r + 2 b'/r - b/r^2
        # with b0 = 0: coefficient of r^(2k-2) is 2k(2k-1)a_k + (4k-1)b_k
        A2 = r2km2 @ (2 * k * (2 * k - 1) * a + (4 * k - 1) * b)
        B2 = r2km2 @ (2 * k * (2 * k - 1) * b)
        out.append((A2, B2))
    if order >= 3:
        raise ValueError("order must be <= 2")
    return out


def _g2_split(kappa: float, r: np.ndarray):
    """G2(r) = a(r) + b(r) ln r value split (both parts smooth)."""
    n = 24
    a, b = _g2_series_coeffs(kappa, n)
    r = np.asarray(r, dtype=float)
    k = np.arange(n, dtype=float)
    r2k = r[..., None] ** (2 * k)
    return r2k @ a, r2k @ b


def kupradze_gamma2(params: WaveParams, x, y) -> np.ndarray:
    """Plane-strain elastic fundamental solution, shape (..., 2, 2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    r = np.linalg.norm(d, axis=-1)
    if np.any(r <= 0):
        raise ValueError("x and y must be distinct")
    rhat = d / r[..., None]
    ks = params.kappa_s
    gs = _g2_radial(ks, r, 0)[0]
    psi = _psi2_stack(params.kappa_p, ks, r, 2)
    hess = _hess_from_radial(psi[1], psi[2], r, rhat)
    scale = 1.0 / (params.omega**2 * params.rho)
    return scale * (ks**2 * gs[..., None, None] * np.eye(2) - hess)


def kupradze_gamma2_derivs(params: WaveParams, x, y):
    """Plane-strain Gamma and its x-derivatives, d_m Gamma_kl at
    [..., k, l, m].  The third radial derivative is formed as a plain
    Hankel difference, so keep x away from y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    r = np.linalg.norm(d, axis=-1)
    if np.any(r <= 0):
        raise ValueError("x and y must be distinct")
    rhat = d / r[..., None]
    kp, ks = params.kappa_p, params.kappa_s
    gs = _g2_radial(ks, r, 1)
    psi = _psi2_stack(kp, ks, r, 2)
    psi3 = _g2_radial(kp, r, 3)[3] - _g2_radial(ks, r, 3)[3]
    hess = _hess_from_radial(psi[1], psi[2], r, rhat)
    third = _third_from_radial(psi[1], psi[2], psi3, r, rhat)
    scale = 1.0 / (params.omega**2 * params.rho)
    eye = np.eye(2)
    gamma = scale * (ks**2 * gs[0][..., None, None] * eye - hess)
    grad_gs = gs[1][..., None] * rhat
    dgamma = scale * (
        ks**2 * eye[..., :, :, None] * grad_gs[..., None, None, :] - third
    )
    return gamma, dgamma
