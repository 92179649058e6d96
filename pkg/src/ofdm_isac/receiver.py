"""Receive chain: AoA search, per-path beamforming, pilot demodulation and ML delay estimation.

The AoA spectrum is accumulated noncoherently over subcarriers: a coherent
sum of a(psi)^H y_m across m is attenuated by the delay phase ramp
exp(-j 2 pi m df tau) of every path. Strong paths are removed by projection
before the next peak is searched, so the sidelobes of a strong path cannot
mask a weak one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import FewerPeaksThanPaths, InfeasibleSensing
from .model import ChannelResponse, SystemConfig, Waveform, steering_vector, subcarrier_indices

# z-score of the peak excess over the noise floor below which a peak is flagged
LOW_CONFIDENCE_Z = 5.0
# delay-profile peaks refined per path, after a fine rescan of every strong grid peak
MAX_DELAY_CANDIDATES = 2
FINE_POINTS = 33


@dataclass(frozen=True)
class RxSnapshot:
    y: np.ndarray          # M x N_r
    pilots: np.ndarray     # length M, unit modulus
    waveform: Waveform

    def __post_init__(self):
        if not np.allclose(np.abs(self.pilots), 1.0, atol=1e-12):
            raise ValueError("pilot symbols must be unit-modulus")


@dataclass(frozen=True)
class AoaEstimate:
    aoa: float
    spectrum: float
    low_confidence: bool


@dataclass(frozen=True)
class PathEstimate:
    aoa_hat: float
    b_hat: complex
    tau_hat: float
    concentrated_likelihood_value: float


def default_pilots(num_subcarriers: int) -> np.ndarray:
    return np.ones(num_subcarriers, dtype=np.complex128)


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_rx(channel: ChannelResponse, waveform: Waveform, pilots, data_symbols,
                noise_seed, config: SystemConfig) -> RxSnapshot:
    """y_m = sqrt(P_m) h_m (u_m s_r,m + (1 - u_m) s_c,m) + w_m with w_m ~ CN(0, noise I).

    ``data_symbols=None`` draws unit-variance complex Gaussian symbols from the
    same seeded generator after the noise.
    """
    rng = np.random.default_rng(noise_seed)
    M, n_r = channel.h.shape
    noise = complex_normal(rng, (M, n_r), config.noise_power)
    if data_symbols is None:
        data_symbols = complex_normal(rng, M)
    pilots = np.asarray(pilots, dtype=np.complex128)
    u = waveform.assignment
    sym = np.where(u == 1, pilots, np.asarray(data_symbols, dtype=np.complex128))
    y = np.sqrt(waveform.power)[:, None] * channel.h * sym[:, None] + noise
    return RxSnapshot(y=y, pilots=pilots, waveform=waveform)


def _cos_distance(a, b):
    """Distance between direction cosines on the circle of period 2."""
    d = np.abs(np.asarray(a) - np.asarray(b)) % 2.0
    return np.minimum(d, 2.0 - d)


def _steer_cos(c, n_r):
    return np.exp(-1j * np.pi * np.arange(n_r)[None, :] * np.atleast_1d(c)[:, None])  # G x N_r


def _spectrum(cov, cosines=None, steer=None):
    """a^H R a / N_r for each cosine (R is the sample covariance sum)."""
    a = _steer_cos(cosines, cov.shape[0]) if steer is None else steer
    return np.real(np.sum((a.conj() @ cov) * a, axis=1)) / cov.shape[0]


def estimate_aoa(snapshot: RxSnapshot, config: SystemConfig, num_paths: int,
                 grid_size: int | None = None, refine_sweeps: int = 3) -> list[AoaEstimate]:
    """Successive matched-filter peak search on a circular cos(psi) grid.

    Each round takes the strongest local maximum away from the directions
    already found, refines it by quadratic interpolation of the three
    neighbouring samples and projects its steering vector out of the data.
    The exclusion radius is 0.75 * 2/N_r: true paths are at least 2/N_r
    apart, but an estimate may sit slightly off its path.

    ``refine_sweeps`` alternating-projection passes then re-maximise each
    direction with all other estimated directions projected out, which
    removes the cross-path terms of the noncoherent spectrum.
    Raises FewerPeaksThanPaths when no admissible peak remains.
    """
    y = snapshot.y
    M, n_r = y.shape
    grid_size = grid_size or 64 * n_r
    step = 2.0 / grid_size
    grid = -1.0 + step * np.arange(grid_size)
    steer = _steer_cos(grid, n_r)
    sep = 0.75 * 2.0 / n_r
    full_cov = y.T @ y.conj()  # sum_m y_m y_m^H
    cov = full_cov
    chosen: list[float] = []
    for _ in range(num_paths):
        s = _spectrum(cov, steer=steer)
        left, right = np.roll(s, 1), np.roll(s, -1)
        cand = (s >= left) & (s >= right) & (s > 0)
        for c in chosen:
            cand &= _cos_distance(grid, c) >= sep
        if not cand.any():
            raise FewerPeaksThanPaths(f"found {len(chosen)} peaks, {num_paths} paths requested")
        i = int(np.flatnonzero(cand)[np.argmax(s[cand])])
        denom = left[i] - 2 * s[i] + right[i]
        delta = 0.5 * (left[i] - right[i]) / denom if denom < 0 else 0.0
        c_hat = grid[i] + float(np.clip(delta, -0.5, 0.5)) * step
        chosen.append((c_hat + 1.0) % 2.0 - 1.0)
        proj = _null_projector(chosen[-1:], n_r)
        cov = proj @ cov @ proj.conj().T

    for _ in range(refine_sweeps if num_paths > 1 else min(refine_sweeps, 1)):
        for p in range(num_paths):
            others = chosen[:p] + chosen[p + 1:]
            chosen[p] = _refine_direction(full_cov, chosen[p], others, 0.5 / n_r)

    floor = M * config.noise_power
    spread = config.noise_power * math.sqrt(M)
    found = []
    for p, c in enumerate(chosen):
        proj = _null_projector(chosen[:p] + chosen[p + 1:], n_r)
        peak = float(_spectrum(proj @ full_cov @ proj.conj().T, c)[0])
        low = (peak - floor) / spread < LOW_CONFIDENCE_Z
        aoa = float(np.arccos(np.clip(c, -1 + 1e-12, 1 - 1e-12)))
        found.append(AoaEstimate(aoa, peak, bool(low)))
    return found


def _null_projector(cosines, n_r):
    if not cosines:
        return np.eye(n_r, dtype=np.complex128)
    A = _steer_cos(np.asarray(cosines), n_r).T  # N_r x K
    return np.eye(n_r) - A @ np.linalg.pinv(A)


def _refine_direction(cov, c0, others, half_width):
    """Maximise the projected beam power a^H Q R Q a / a^H Q a near c0."""
    n_r = cov.shape[0]
    Q = _null_projector(others, n_r)
    R = Q @ cov @ Q.conj().T

    def neg(c):
        a = _steer_cos(c, n_r)[0]
        qa = Q @ a
        return -float(np.real(a.conj() @ R @ a) / max(np.real(a.conj() @ qa), 1e-300))

    res = minimize_scalar(neg, bounds=(c0 - half_width, c0 + half_width), method="bounded",
                          options={"xatol": 1e-9})
    c = float(res.x) if res.fun <= neg(c0) else c0
    return (c + 1.0) % 2.0 - 1.0


def extract_and_demodulate(snapshot: RxSnapshot, aoa_hat: float, all_aoas=None,
                           method: str = "mf") -> np.ndarray:
    """Beamform towards ``aoa_hat``, strip the pilots and zero non-sensing subcarriers.

    ``method="mf"`` uses a(psi)^H / sqrt(N_r). ``method="zf"`` nulls the other
    estimated directions in ``all_aoas`` (which must contain ``aoa_hat``); its
    output keeps the same signal scaling sqrt(P_m N_r) b_p.
    """
    y = snapshot.y
    n_r = y.shape[1]
    if method == "mf":
        w = steering_vector(aoa_hat, n_r) / math.sqrt(n_r)
    elif method == "zf":
        aoas = list(all_aoas if all_aoas is not None else [aoa_hat])
        k = int(np.argmin(np.abs(np.asarray(aoas) - aoa_hat)))
        A = np.stack([steering_vector(a, n_r) for a in aoas], axis=1)
        gram_inv = np.linalg.inv(A.conj().T @ A)
        w = math.sqrt(n_r) * (A @ gram_inv[:, k])
    else:
        raise ValueError(f"unknown extraction method {method!r}")
    out = (y @ w.conj()) * snapshot.pilots.conj()
    return np.where(snapshot.waveform.assignment == 1, out, 0.0)


def jpcde_mle(y_tilde, waveform: Waveform, config: SystemConfig, oversample: int = 8,
              aoa_hat: float = float("nan")) -> PathEstimate:
    """Concentrated ML estimate of (tau, b) from one demodulated path signal.

    The profile |sum_m u_m sqrt(P_m N_r) e^{+j 2 pi m df tau} y_m|^2 is
    evaluated on a grid of spacing 1/(oversample M df) by zero-padded FFT and
    refined by bounded scalar search inside the bracketing cells.
    """
    M = config.num_subcarriers
    if oversample < 4:
        raise ValueError("delay grid must place at least 4 points in the mainlobe (oversample >= 4)")
    u, p = waveform.assignment, waveform.power
    if np.count_nonzero((u == 1) & (p > 0)) < 2:
        raise InfeasibleSensing("ML delay estimation needs at least two powered sensing subcarriers")
    n_r = config.num_rx_antennas
    df = config.subcarrier_spacing
    c = np.where(u == 1, np.sqrt(p * n_r), 0.0)
    x = c * np.asarray(y_tilde)
    m = subcarrier_indices(M)
    norm = n_r * float(np.sum(p[u == 1]))

    K = oversample * M
    z = np.zeros(K, dtype=np.complex128)
    np.add.at(z, (np.arange(1, M + 1)) % K, x)
    profile = np.abs(K * np.fft.ifft(z)) ** 2  # profile[k] at tau = k / (K df)

    active = np.flatnonzero(x != 0)
    xa, ma = x[active], m[active]

    def corr(tau):
        return np.sum(xa * np.exp(2j * np.pi * ma * df * tau))

    # Sparse sensing sets give many fringes of almost equal height, so every
    # strong grid peak is rescanned on a fine local grid before refinement.
    left, right = np.roll(profile, 1), np.roll(profile, -1)
    peaks = np.flatnonzero((profile >= left) & (profile >= right) & (profile >= 0.9 * profile.max()))
    cell = 1.0 / (K * df)
    offsets = np.linspace(-1.0, 1.0, FINE_POINTS) * cell
    taus = (peaks[:, None] * cell + offsets[None, :]).ravel()
    fine = np.abs(np.exp(2j * np.pi * df * np.outer(taus, ma)) @ xa) ** 2
    fine = fine.reshape(peaks.size, FINE_POINTS)
    # neighbouring fringes can differ by less than the sampling loss of the fine
    # grid, so each fringe is ranked by its parabolic-interpolated height
    j = np.clip(np.argmax(fine, axis=1), 1, FINE_POINTS - 2)
    rows = np.arange(peaks.size)
    lo, mid, hi = fine[rows, j - 1], fine[rows, j], fine[rows, j + 1]
    curv = hi - 2 * mid + lo
    with np.errstate(divide="ignore", invalid="ignore"):
        per_peak = np.where(curv < 0, mid - (hi - lo) ** 2 / (8 * curv), mid)
    top = peaks[np.argsort(-per_peak, kind="stable")][:MAX_DELAY_CANDIDATES]
    best_tau, best_val = 0.0, -1.0
    for k0 in top:
        res = minimize_scalar(lambda t: -abs(corr(t)) ** 2, bounds=((k0 - 1) * cell, (k0 + 1) * cell),
                              method="bounded", options={"xatol": 1e-4 / (M * df)})
        tau, val = (float(res.x), -res.fun) if -res.fun >= profile[k0] else (k0 * cell, profile[k0])
        if val > best_val:
            best_tau, best_val = tau, val
    tau = best_tau % (1.0 / df)
    b_hat = complex(corr(tau) / norm)
    return PathEstimate(aoa_hat, b_hat, tau, float(abs(corr(tau)) ** 2 / norm))


def estimate_paths(snapshot: RxSnapshot, config: SystemConfig, num_paths: int,
                   method: str = "mf", grid_size: int | None = None,
                   oversample: int = 8) -> list[PathEstimate]:
    """Full receive chain for ``num_paths`` paths (order of detection)."""
    aoas = [e.aoa for e in estimate_aoa(snapshot, config, num_paths, grid_size)]
    out = []
    for a in aoas:
        yt = extract_and_demodulate(snapshot, a, aoas, method)
        out.append(jpcde_mle(yt, snapshot.waveform, config, oversample, aoa_hat=a))
    return out
