"""
Data reduction: crater profile, linewidth, finesse and clipping fits.

Nonlinear fits use Levenberg-Marquardt (``scipy.optimize.least_squares``,
method "lm") with analytic Jacobians. One-sigma uncertainties come from the
local quadratic model at the optimum, cov = s^2 (J^T J)^-1 with
s^2 = SSR / (m - p).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import constants, stats
from scipy.optimize import least_squares
from scipy.signal import find_peaks

from fpcavity.layered_media import InvalidInputError

MAX_ITERATIONS = 200
STEP_TOLERANCE = 1e-10


class CalibrationError(RuntimeError):
    """The three resonances needed for frequency calibration were not found."""


@dataclass(frozen=True)
class ScanTrace:
    """Reflection signal against a piezo-proxy abscissa (arbitrary, locally linear units)."""

    abscissa: np.ndarray
    signal: np.ndarray
    sideband_spacing: float = 5.0  # GHz

    def __post_init__(self):
        x = np.asarray(self.abscissa, dtype=float)
        y = np.asarray(self.signal, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise InvalidInputError("abscissa and signal must be 1-D arrays of equal length")
        if len(x) < 64:
            raise InvalidInputError("a scan trace needs at least 64 samples")
        if not self.sideband_spacing > 0:
            raise InvalidInputError("sideband spacing must be positive")
        order = np.argsort(x)
        object.__setattr__(self, "abscissa", x[order])
        object.__setattr__(self, "signal", y[order])


@dataclass
class FitResult:
    params: dict
    sigmas: dict
    rms: float
    converged: bool
    iterations: int
    metadata: dict = field(default_factory=dict)

    @property
    def reliable(self) -> bool:
        return self.converged

    def __getitem__(self, key):
        return self.params[key]

    def as_dict(self) -> dict:
        doc = {"converged": self.converged, "reliable": self.reliable, "iterations": self.iterations,
               "rms": self.rms}
        for k, v in self.params.items():
            doc[k] = v
            if k in self.sigmas:
                doc[f"{k}_sigma"] = self.sigmas[k]
        doc.update(self.metadata)
        return doc

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(_plain(self.as_dict()), indent=2, sort_keys=True) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _levenberg_marquardt(residual: Callable, jacobian: Callable, p0: np.ndarray, names: Sequence[str],
                         x_scale=1.0) -> FitResult:
    res = least_squares(residual, p0, jac=jacobian, method="lm", xtol=STEP_TOLERANCE, ftol=1e-15,
                        gtol=1e-15, max_nfev=MAX_ITERATIONS * (len(p0) + 1), x_scale=x_scale)
    m, p = len(res.fun), len(p0)
    ssr = float(res.fun @ res.fun)
    dof = max(m - p, 1)
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * ssr / dof
        sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        sig = np.full(p, np.nan)
    converged = bool(res.status > 0)
    return FitResult(
        params={n: float(v) for n, v in zip(names, res.x)},
        sigmas={n: float(s) for n, s in zip(names, sig)},
        rms=float(np.sqrt(ssr / m)),
        converged=converged,
        iterations=int(res.nfev),
        metadata={"solver": "levenberg-marquardt"},
    )


# --- crater ------------------------------------------------------------------------------


def crater_model(r, R_cav: float, depth: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return -depth * np.exp(-(r**2) / (2 * R_cav * depth))


def fit_crater(r, z) -> FitResult:
    """Gaussian crater fit z(r) = -d exp(-r^2/(2 R_cav d)); r and z in um.

    Seeds: d from -min(z), R_cav from the second-difference curvature at the
    minimum.
    """
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    if r.shape != z.shape or len(r) < 8:
        raise InvalidInputError("crater fit needs at least 8 (r, z) points")
    order = np.argsort(r)
    r, z = r[order], z[order]
    i = int(np.clip(np.argmin(z), 1, len(r) - 2))
    d0 = -z.min()
    h1, h2 = r[i] - r[i - 1], r[i + 1] - r[i]
    curv = 2 * (h1 * z[i + 1] - (h1 + h2) * z[i] + h2 * z[i - 1]) / (h1 * h2 * (h1 + h2))
    if not d0 > 0:
        raise InvalidInputError("crater profile must dip below zero")
    R0 = 1 / curv if curv > 0 else (r.max() - r.min()) ** 2 / d0

    def residual(p):
        return crater_model(r, *p) - z

    def jac(p):
        R, d = p
        e = np.exp(-(r**2) / (2 * R * d))
        dR = -d * e * r**2 / (2 * R**2 * d)
        dd = -e - d * e * r**2 / (2 * R * d**2)
        return np.column_stack([dR, dd])

    return _levenberg_marquardt(residual, jac, np.array([R0, d0]), ["R_cav", "depth"])


def fit_circle(r, z, r_max: float | None = None) -> FitResult:
    """Circle through the crater bottom: (r - r0)^2 + (z - z0)^2 = R^2, points with |r| <= r_max."""
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    if r_max is not None:
        keep = np.abs(r) <= r_max
        r, z = r[keep], z[keep]
    if len(r) < 3:
        raise InvalidInputError("circle fit needs at least 3 points")
    # algebraic (Kasa) seed
    A = np.column_stack([r, z, np.ones_like(r)])
    b = r**2 + z**2
    c, *_ = np.linalg.lstsq(A, b, rcond=None)
    r0, z0 = c[0] / 2, c[1] / 2
    R0 = np.sqrt(c[2] + r0**2 + z0**2)

    def residual(p):
        return np.hypot(r - p[0], z - p[1]) - p[2]

    def jac(p):
        dist = np.hypot(r - p[0], z - p[1])
        return np.column_stack([-(r - p[0]) / dist, -(z - p[1]) / dist, -np.ones_like(r)])

    result = _levenberg_marquardt(residual, jac, np.array([r0, z0, R0]), ["r0", "z0", "R"])
    result.params["R_cav"] = result.params["R"]
    return result


# --- linewidth --------------------------------------------------------------------------


def lorentzian_triplet(x, offset, amp_lo, amp_mid, amp_hi, x_lo, x_mid, x_hi, width):
    """Offset plus three Lorentzians of common FWHM ``width``."""
    x = np.asarray(x, dtype=float)
    hw2 = (width / 2) ** 2
    out = np.full_like(x, offset)
    for a, c in ((amp_lo, x_lo), (amp_mid, x_mid), (amp_hi, x_hi)):
        out = out + a * hw2 / ((x - c) ** 2 + hw2)
    return out


def _triplet_jacobian(x, p):
    offset, a_lo, a_mid, a_hi, c_lo, c_mid, c_hi, width = p
    hw = width / 2
    J = np.empty((len(x), 8))
    J[:, 0] = 1.0
    dwidth = np.zeros_like(x)
    for k, (a, c) in enumerate(((a_lo, c_lo), (a_mid, c_mid), (a_hi, c_hi))):
        u = x - c
        den = u**2 + hw**2
        shape = hw**2 / den
        J[:, 1 + k] = shape
        J[:, 4 + k] = a * hw**2 * 2 * u / den**2
        dwidth += a * (hw * u**2 / den**2)
    J[:, 7] = dwidth
    return J


def _seed_triplet(x, y):
    base = np.median(y)
    dev = y - base
    sign = -1.0 if abs(dev.min()) > abs(dev.max()) else 1.0
    peaks, props = find_peaks(sign * dev, prominence=0)
    if len(peaks) < 3:
        raise CalibrationError("fewer than three resonances found in the trace")
    top = peaks[np.argsort(props["prominences"])[-3:]]
    top = np.sort(top)
    amps = dev[top]
    # width from the half-maximum crossing of the central feature
    mid = top[1]
    half = 0.5 * sign * dev[mid]
    j = mid
    while j < len(x) - 1 and sign * dev[j] > half:
        j += 1
    k = mid
    while k > 0 and sign * dev[k] > half:
        k -= 1
    width = max(x[j] - x[k], 2 * np.median(np.diff(x)))
    return np.array([base, amps[0], amps[1], amps[2], x[top[0]], x[top[1]], x[top[2]], width])


def fit_linewidth(trace: ScanTrace, wavelength: float) -> FitResult:
    """Sideband-calibrated triple-Lorentzian fit of a cavity scan.

    The abscissa is converted to frequency so that the fitted outer-peak
    separation equals twice ``trace.sideband_spacing``. Returns the linewidth
    ``delta_nu`` (GHz) and Q = nu / delta_nu with nu = c / ``wavelength`` (nm).
    """
    x = trace.abscissa
    # work on normalized coordinates so the fit is invariant under affine rescaling
    x_c, x_s = x.mean(), np.ptp(x)
    y_s = np.max(np.abs(trace.signal)) or 1.0
    u = (x - x_c) / x_s
    v = trace.signal / y_s
    p0 = _seed_triplet(u, v)

    def residual(p):
        return lorentzian_triplet(u, *p) - v

    def jac(p):
        return _triplet_jacobian(u, p)

    raw = _levenberg_marquardt(residual, jac, p0, ["offset", "amp_lo", "amp_mid", "amp_hi",
                                                   "x_lo", "x_mid", "x_hi", "width"])
    p = raw.params
    s = raw.sigmas
    separation = p["x_hi"] - p["x_lo"]
    if not separation > 0:
        raise CalibrationError("sideband separation collapsed during the fit")
    ghz_per_unit = 2 * trace.sideband_spacing / separation
    delta_nu = abs(p["width"]) * ghz_per_unit
    rel = np.hypot(s["width"] / abs(p["width"]),
                   np.hypot(s["x_hi"], s["x_lo"]) / separation)
    nu = constants.c / (wavelength * 1e-9) / 1e9  # GHz
    Q = nu / delta_nu
    return FitResult(
        params={"delta_nu": delta_nu, "Q": Q, "center": float(p["x_mid"] * x_s + x_c),
                "calibration_GHz_per_unit": float(ghz_per_unit / x_s)},
        sigmas={"delta_nu": delta_nu * rel, "Q": Q * rel},
        rms=raw.rms * y_s,
        converged=raw.converged,
        iterations=raw.iterations,
        metadata={"solver": "levenberg-marquardt", "wavelength_nm": wavelength,
                  "sideband_spacing_GHz": trace.sideband_spacing},
    )


def synthetic_scan(delta_nu: float, sideband_spacing: float = 5.0, samples: int = 801,
                   span: float = 3.0, units_per_GHz: float = 1.0, offset: float = 1.0,
                   depth: float = 0.6, sideband_depth: float = 0.2, noise: float = 0.0,
                   rng: np.random.Generator | None = None, center: float = 0.0) -> ScanTrace:
    """Reflection dip with two sidebands; ``span`` is in units of the sideband spacing."""
    f = np.linspace(-span * sideband_spacing, span * sideband_spacing, samples)
    y = lorentzian_triplet(f, offset, -sideband_depth, -depth, -sideband_depth,
                           -sideband_spacing, 0.0, sideband_spacing, delta_nu)
    if noise:
        rng = rng or np.random.default_rng()
        y = y + rng.normal(0.0, noise, size=y.shape)
    return ScanTrace(center + f * units_per_GHz, y, sideband_spacing)


def q_histogram(values, bin_size: float = 200.0) -> tuple[np.ndarray, np.ndarray]:
    """Counts and bin edges of Q values with fixed-width bins aligned to multiples of ``bin_size``."""
    v = np.asarray(values, dtype=float)
    lo = np.floor(v.min() / bin_size) * bin_size
    hi = (np.floor(v.max() / bin_size) + 1) * bin_size
    edges = np.arange(lo, hi + bin_size / 2, bin_size)
    counts, edges = np.histogram(v, edges)
    return counts, edges


# --- finesse ------------------------------------------------------------------------------


def fit_finesse(series, q_max_linear: int) -> FitResult:
    """OLS fit Q = F q_air + Q0 over points with q_air <= ``q_max_linear``."""
    data = np.asarray(series, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise InvalidInputError("series must be a list of (q_air, Q) pairs")
    data = data[data[:, 0] <= q_max_linear]
    if len(data) < 2:
        raise InvalidInputError("need at least two points in the linear region")
    q, Q = data[:, 0], data[:, 1]
    X = np.column_stack([q, np.ones_like(q)])
    coef, *_ = np.linalg.lstsq(X, Q, rcond=None)
    resid = Q - X @ coef
    n = len(q)
    if n > 2:
        cov = np.linalg.inv(X.T @ X) * float(resid @ resid) / (n - 2)
        sig = np.sqrt(np.diag(cov))
    else:
        sig = np.array([np.nan, np.nan])
    rel_residual = float(np.max(np.abs(resid) / np.abs(Q)))
    return FitResult(
        params={"finesse": float(coef[0]), "Q0": float(coef[1])},
        sigmas={"finesse": float(sig[0]), "Q0": float(sig[1])},
        rms=float(np.sqrt(np.mean(resid**2))),
        converged=True,
        iterations=1,
        metadata={"solver": "ordinary-least-squares", "points": n, "max_relative_residual": rel_residual,
                  "q_max_linear": q_max_linear},
    )


# --- clipping ------------------------------------------------------------------------------


def clipping_simulator(assembly, wavelength: float) -> Callable:
    """Q(q_air) including clipping as a function of (D, theta), for ``fit_clipping``.

    The 1-D stack part of the loss budget does not depend on D or theta and
    is computed once per q_air.
    """
    from fpcavity.gaussian_cavity import beam_waist_curved
    from fpcavity.loss_models import ClippingGeometry, assemble_budget, clipping_loss

    cache = {}

    def base(q):
        if q not in cache:
            tuned = assembly.tuned(wavelength, q)
            b = assemble_budget(tuned, wavelength, q, include_clipping=False)
            w = beam_waist_curved(wavelength, assembly.crater.R_cav, tuned.clipping_length / 1000.0)
            cache[q] = (b.L_sim, b.cavity_length, w)
        return cache[q]

    def simulate(D: float, theta: float, q_air) -> np.ndarray:
        out = []
        geom = ClippingGeometry(D, assembly.crater.R_cav, theta, assembly.crater.depth)
        for q in np.atleast_1d(q_air):
            L_sim, L_cav, w = base(int(q))
            out.append(4 * np.pi * L_cav / wavelength / (L_sim + clipping_loss(geom, w)))
        return np.array(out)

    return simulate


def fit_clipping(series, simulator: Callable, D_range: Sequence[float], theta_range: Sequence[float],
                 fit_offset: bool = False, confidence: float = 0.95) -> FitResult:
    """Grid-search MMSE estimate of the mirror extent D (um) and tilt theta (deg).

    ``simulator(D, theta, q_air)`` returns simulated Q values. With
    ``fit_offset`` a rigid offset Q_exp = Q_sim - dQ0 is profiled out in
    closed form at every grid cell. The confidence region is the set of grid
    cells with MSE <= MSE_min (1 + chi2_conf(k) / DOF), k the number of free
    parameters. Residuals are weighted uniformly.
    """
    data = np.asarray(series, dtype=float)
    q, Q = data[:, 0].astype(int), data[:, 1]
    D_grid = np.asarray(D_range, dtype=float)
    t_grid = np.asarray(theta_range, dtype=float)
    mse = np.empty((len(D_grid), len(t_grid)))
    offsets = np.zeros_like(mse)
    for i, D in enumerate(D_grid):
        for j, th in enumerate(t_grid):
            sim = simulator(D, th, q)
            off = float(np.mean(sim - Q)) if fit_offset else 0.0
            offsets[i, j] = off
            mse[i, j] = np.mean((sim - off - Q) ** 2)
    i, j = np.unravel_index(np.argmin(mse), mse.shape)
    k = int(len(D_grid) > 1) + int(len(t_grid) > 1) + int(fit_offset)
    dof = max(len(Q) - k, 1)
    threshold = mse[i, j] * (1 + stats.chi2.ppf(confidence, max(k, 1)) / dof)
    region = mse <= threshold
    Ds = D_grid[np.any(region, axis=1)]
    ts = t_grid[np.any(region, axis=0)]
    on_boundary = (len(D_grid) > 1 and i in (0, len(D_grid) - 1)) or (len(t_grid) > 1 and j in (0, len(t_grid) - 1))
    params = {"D": float(D_grid[i]), "theta": float(t_grid[j])}
    if fit_offset:
        params["delta_Q0"] = float(offsets[i, j])
    return FitResult(
        params=params,
        sigmas={},
        rms=float(np.sqrt(mse[i, j])),
        converged=True,
        iterations=int(mse.size),
        metadata={
            "solver": "grid-mmse",
            "D_interval": (float(Ds.min()), float(Ds.max())),
            "theta_interval": (float(ts.min()), float(ts.max())),
            "confidence": confidence,
            "mse_threshold": float(threshold),
            "boundary_warning": bool(on_boundary),
            "weighting": "uniform",
            "mse_surface": mse,
            "region": region,
        },
    )


# --- quality-factor bookkeeping ------------------------------------------------------------


def delta_q0(Q_exp, Q_sim):
    """Rigid offset dQ0 = Q_sim - Q_exp, element-wise for series."""
    e = np.asarray(Q_exp, dtype=float)
    s = np.asarray(Q_sim, dtype=float)
    if np.any(e <= 0) or np.any(s <= 0):
        raise InvalidInputError("quality factors must be positive")
    out = s - e
    return float(out) if out.ndim == 0 else out


def delta_q0_series(q_air, Q_exp, Q_sim) -> dict:
    """Per-point offsets and their mean for a series at one wavelength."""
    offsets = np.atleast_1d(delta_q0(Q_exp, Q_sim))
    return {"q_air": np.asarray(q_air), "delta_Q0": offsets, "mean": float(offsets.mean()),
            "std": float(offsets.std(ddof=1)) if len(offsets) > 1 else 0.0}


def loss_chain(Q_ideal: float, Q_scatter: float, Q_exp: float, wavelength: float | None = None,
               cavity_length: float | None = None) -> dict:
    """Split Q_ideal -> Q_scatter -> Q_exp into a scattering drop and the offset dQ0.

    With ``wavelength`` and ``cavity_length`` (both nm) the steps are also
    expressed as round-trip losses, L = 4 pi L_cav / (lambda Q).
    """
    for v in (Q_ideal, Q_scatter, Q_exp):
        if not v > 0:
            raise InvalidInputError("quality factors must be positive")
    out = {
        "Q_ideal": Q_ideal,
        "Q_scatter": Q_scatter,
        "Q_exp": Q_exp,
        "scatter_drop": Q_ideal - Q_scatter,
        "delta_Q0": delta_q0(Q_exp, Q_scatter),
        "total_drop": Q_ideal - Q_exp,
    }
    if wavelength is not None and cavity_length is not None:
        k = 4 * np.pi * cavity_length / wavelength
        out["scatter_loss"] = k * (1 / Q_scatter - 1 / Q_ideal)
        out["residual_loss"] = k * (1 / Q_exp - 1 / Q_scatter)
    return out


# --- ingestion -------------------------------------------------------------------------------


def _read_columns(path, required: Sequence[str]) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        missing = [c for c in required if c not in names]
        if missing:
            raise InvalidInputError(f"{path}: missing column(s) {', '.join(missing)}; found {names}")
        rows = list(reader)
    return {c: np.array([float(r[c]) for r in rows]) for c in required}


def load_trace(path, sideband_spacing: float = 5.0) -> ScanTrace:
    cols = _read_columns(path, ["abscissa", "signal"])
    return ScanTrace(cols["abscissa"], cols["signal"], sideband_spacing)


def load_crater(path) -> tuple[np.ndarray, np.ndarray]:
    cols = _read_columns(path, ["r_um", "z_um"])
    return cols["r_um"], cols["z_um"]


def load_series(path) -> np.ndarray:
    cols = _read_columns(path, ["q_air", "Q"])
    return np.column_stack([cols["q_air"], cols["Q"]])
