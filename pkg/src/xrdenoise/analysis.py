"""Projected scans, peak fits, correlation lengths, PDF fits and score summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from .frames import Frame

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
HWHM_PER_SIGMA = math.sqrt(2.0 * math.log(2.0))
XI_CONVENTION = "xi = 1 / HWHM[1/A], HWHM = sigma * sqrt(2 ln 2) * 2 pi / lattice"


class AnalysisError(ValueError):
    pass


# ----------------------------------------------------------------------------
# Scans


@dataclass
class ScanProjection:
    axis: str
    coords: np.ndarray
    intensities: np.ndarray
    errors: np.ndarray | None = None
    window: dict = field(default_factory=dict)
    background: tuple[float, float] | None = None  # (slope, intercept) when subtracted

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.intensities = np.asarray(self.intensities, dtype=np.float64)
        if self.coords.shape != self.intensities.shape:
            raise AnalysisError("scan coords and intensities differ in length")
        d = np.diff(self.coords)
        if len(d) and not (np.all(d > 0) or np.all(d < 0)):
            raise AnalysisError("scan coordinates must be strictly monotone")
        if not np.all(np.isfinite(self.intensities)):
            raise AnalysisError("scan intensities must be finite")

    def write_csv(self, path) -> None:
        errs = self.errors if self.errors is not None else np.full_like(self.intensities, np.nan)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["coordinate", "intensity", "error"])
            for q, v, e in zip(self.coords, self.intensities, errs):
                writer.writerow([repr(float(q)), repr(float(v)), repr(float(e))])


def _stack_geometry(frames: Sequence[Frame]):
    if not frames:
        raise AnalysisError("empty frame stack")
    axes = frames[0].axes
    if any(f.axes is None for f in frames) or axes is None:
        raise AnalysisError("projection needs reciprocal-axes metadata on every frame")
    if any(f.axes.rows != axes.rows or f.axes.cols != axes.cols for f in frames):
        raise AnalysisError("frames in a stack must share in-frame axes")
    if len(frames) > 1 and any(f.axes.stack is None for f in frames):
        raise AnalysisError("multi-frame stacks need a stack axis on every frame")
    return axes


def project_scan(
    frames: Sequence[Frame], q0: dict | Sequence[float], axis: str, windows: dict, counting_errors: bool = False
) -> ScanProjection:
    """1D scan along ``axis`` through ``q0``: mean over the transverse window.

    ``q0`` maps labels to coordinates (or is an (h, k, l) triple) and
    ``windows`` gives the half-width of the integration window along each
    transverse axis. Dead pixels are left out of the means. With
    ``counting_errors`` each point carries sqrt(N) / n_pixels.
    """
    if not isinstance(q0, dict):
        q0 = dict(zip(("h", "k", "l"), q0))
    axes = _stack_geometry(frames)
    h, w = frames[0].shape
    coords = {axes.rows.label: axes.rows.coords(h), axes.cols.label: axes.cols.coords(w)}
    if axes.stack is not None:
        coords[axes.stack.label] = np.array([f.axes.stack.origin for f in frames])
    else:
        # a lone frame without a stack axis: collapse the missing axis
        missing = ({"h", "k", "l"} - set(coords)).pop()
        coords[missing] = np.array([q0.get(missing, 0.0)])
    if axis not in coords:
        raise AnalysisError(f"unknown scan axis {axis!r}")
    for label, c in coords.items():
        lo, hi = c.min(), c.max()
        pad = abs(c[1] - c[0]) / 2 if len(c) > 1 else abs(windows.get(label, 0.0))
        if label in q0 and not (lo - pad <= q0[label] <= hi + pad):
            raise AnalysisError(f"Q0 {label}={q0[label]} lies outside the covered range [{lo}, {hi}]")

    data = np.stack([np.asarray(f.intensities, dtype=np.float64) for f in frames])  # (K, H, W)
    live = np.stack([f.live for f in frames])
    # order dimensions as (stack, rows, cols) with labels
    dim_labels = [axes.stack.label if axes.stack is not None else ({"h", "k", "l"} - {axes.rows.label, axes.cols.label}).pop(), axes.rows.label, axes.cols.label]
    sel = []
    for d, label in enumerate(dim_labels):
        c = coords[label]
        if label == axis:
            sel.append(np.ones(len(c), dtype=bool))
        else:
            half = windows.get(label)
            if half is None:
                raise AnalysisError(f"missing integration window for axis {label!r}")
            m = np.abs(c - q0[label]) <= half + 1e-12
            if not m.any():
                m = np.abs(c - q0[label]) == np.abs(c - q0[label]).min()
            sel.append(m)
    sub = data[np.ix_(*sel)]
    sub_live = live[np.ix_(*sel)]
    scan_dim = dim_labels.index(axis)
    other = tuple(d for d in range(3) if d != scan_dim)
    n_live = sub_live.sum(axis=other)
    total = np.where(sub_live, sub, 0.0).sum(axis=other)
    if np.any(n_live == 0):
        raise AnalysisError("integration window contains no live pixels at some scan point")
    mean = total / n_live
    c = coords[axis]
    order = np.argsort(c)
    errors = np.sqrt(np.maximum(total, 0.0)) / n_live if counting_errors else None
    return ScanProjection(
        axis,
        c[order],
        mean[order],
        None if errors is None else errors[order],
        {k: v for k, v in windows.items() if k != axis},
    )


def subtract_background(scan: ScanProjection, flank_fraction: float = 0.25) -> ScanProjection:
    """Fit a line to the outer ``flank_fraction`` of points on each side and subtract it."""
    if not 0 < flank_fraction <= 0.4:
        raise AnalysisError("flank fraction must lie in (0, 0.4]")
    n = len(scan.coords)
    if n < 8:
        raise AnalysisError("background subtraction needs at least 8 points")
    k = max(2, int(round(flank_fraction * n)))
    idx = np.r_[0:k, n - k : n]
    q, v = scan.coords[idx], scan.intensities[idx]
    if np.ptp(q) == 0:
        raise AnalysisError("degenerate flanks: all coordinates equal")
    slope, intercept = np.polyfit(q, v, 1)
    return replace(scan, intensities=scan.intensities - (slope * scan.coords + intercept), background=(float(slope), float(intercept)))


# ----------------------------------------------------------------------------
# Gaussian peak fits


@dataclass
class PeakFit:
    amplitude: float
    center: float
    sigma: float
    offset: float
    errors: tuple[float, float, float, float] = (np.nan, np.nan, np.nan, np.nan)
    converged: bool = False
    iterations: int = 0

    @property
    def fwhm(self) -> float:
        return FWHM_PER_SIGMA * self.sigma

    def model(self, q):
        return gaussian_model(np.asarray(q, dtype=np.float64), self.amplitude, self.center, self.sigma, self.offset)


def gaussian_model(q, amplitude, center, sigma, offset):
    return amplitude * np.exp(-0.5 * ((q - center) / sigma) ** 2) + offset


def _curvature_errors(fun, p, n_points):
    """Parameter errors from the numerical Hessian of the residual sum of squares."""
    p = np.asarray(p, dtype=np.float64)
    k = len(p)
    steps = 1e-4 * np.maximum(np.abs(p), 1e-8)
    hess = np.empty((k, k))
    f0 = fun(p)
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = steps[i]
            ej[j] = steps[j]
            if i == j:
                val = (fun(p + ei) - 2 * f0 + fun(p - ei)) / steps[i] ** 2
            else:
                val = (fun(p + ei + ej) - fun(p + ei - ej) - fun(p - ei + ej) + fun(p - ei - ej)) / (4 * steps[i] * steps[j])
            hess[i, j] = hess[j, i] = val
    dof = max(n_points - k, 1)
    s2 = f0 / dof
    try:
        cov = 2.0 * s2 * np.linalg.inv(hess)
    except np.linalg.LinAlgError:
        return (np.nan,) * k
    return tuple(float(np.sqrt(d)) if d >= 0 else np.nan for d in np.diag(cov))


def _half_max_sigma(q, y, step):
    """Width guess from the points above half maximum, at least one sampling step."""
    above = y - y.min() >= 0.5 * np.ptp(y)
    fwhm = np.ptp(q[above]) + step if np.ptp(y) > 0 else np.ptp(q) / 2
    return max(fwhm / FWHM_PER_SIGMA, step)


def fit_gaussian_1d(scan: ScanProjection, max_iter: int = 2000, rtol: float = 1e-8) -> PeakFit:
    """Least-squares Gaussian + constant fit by Nelder-Mead simplex search.

    Parameters are searched in units of their starting scale (data range for
    amplitude and offset, scan span for centre and width), so ``rtol`` bounds
    the simplex diameter relative to those scales.
    """
    q, y = scan.coords, scan.intensities
    if len(q) < 5:
        raise AnalysisError("Gaussian fit needs at least 5 points")
    span = float(np.ptp(q))
    yrange = float(np.ptp(y))
    step = float(np.min(np.abs(np.diff(q))))
    start = np.array([yrange, q[np.argmax(y)], _half_max_sigma(q, y, step), float(y.min())])
    scale = np.array([yrange if yrange > 0 else 1.0, span, span, yrange if yrange > 0 else 1.0])

    def ssr(p):
        a, c, s, b = p
        # a spike far narrower than the sampling fits one point and means nothing
        if abs(s) < 0.1 * step:
            return np.inf
        r = gaussian_model(q, a, c, abs(s), b) - y
        return float(r @ r)

    def obj(u):
        return ssr(start + scale * u)

    fatol = 1e-30 + (rtol * (yrange if yrange > 0 else 1.0)) ** 2 * 1e-4
    used = 0
    u = np.zeros(4)
    converged = False
    for _ in range(3):  # restart from the optimum until the simplex stops moving
        res = optimize.minimize(
            obj, u, method="Nelder-Mead",
            options=dict(xatol=rtol, fatol=fatol, maxiter=max(max_iter - used, 1), maxfev=10 * max_iter, adaptive=False),
        )
        used += res.nit
        moved = np.max(np.abs(res.x - u))
        u = res.x
        # the function-value test can sit below the rounding floor of the SSR;
        # a simplex collapsed to rtol in parameter space counts as converged
        spread = np.max(np.ptp(res.final_simplex[0], axis=0))
        converged = bool(res.success) or spread <= rtol
        if not converged or moved <= rtol or used >= max_iter:
            break
    a, c, s, b = start + scale * u
    s = abs(s)
    p = np.array([a, c, s, b])
    errors = _curvature_errors(ssr, p, len(q)) if converged else (np.nan,) * 4
    converged = converged and s > 0 and np.isfinite(p).all()
    return PeakFit(float(a), float(c), float(s), float(b), errors, converged, used)


# ----------------------------------------------------------------------------
# Physical quantities


def correlation_length(fit: PeakFit, lattice: float) -> float:
    """Inverse HWHM in 1/Angstrom of a fit in r.l.u. on an axis with lattice constant ``lattice``."""
    if not fit.converged:
        raise AnalysisError("correlation length needs a converged fit")
    if lattice <= 0:
        raise AnalysisError("lattice constant must be positive")
    hwhm = fit.sigma * HWHM_PER_SIGMA * 2.0 * math.pi / lattice
    return 1.0 / hwhm


def correlation_length_error(fit: PeakFit, lattice: float) -> float:
    return correlation_length(fit, lattice) * fit.errors[2] / fit.sigma


def integrated_intensity(fit: PeakFit) -> float:
    """Amplitude times FWHM."""
    if not fit.converged:
        raise AnalysisError("integrated intensity needs a converged fit")
    return fit.amplitude * fit.fwhm


def integrated_intensity_error(fit: PeakFit) -> float:
    w = integrated_intensity(fit)
    ea, es = fit.errors[0], fit.errors[2]
    return abs(w) * math.sqrt((ea / fit.amplitude) ** 2 + (es / fit.sigma) ** 2) if fit.amplitude else float("nan")


@dataclass
class CorrelationReport:
    xi_a: float | None
    xi_c: float | None
    w_b: float | None
    ratios: dict = field(default_factory=dict)  # name -> (value, error) or None
    errors: dict = field(default_factory=dict)
    convention: str = XI_CONVENTION

    def rows(self):
        for name in ("xi_a", "xi_c", "w_b"):
            r = self.ratios.get(name)
            yield name, getattr(self, name), self.errors.get(name), (None if r is None else r[0]), (None if r is None else r[1])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["quantity", "hc_value", "hc_error", "do_over_hc", "ratio_error", "convention"])
            for name, val, err, ratio, rerr in self.rows():
                writer.writerow([name, _fmt(val), _fmt(err), _fmt(ratio), _fmt(rerr), self.convention])


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and not math.isfinite(v)) else repr(float(v))


def _ratio(a, ea, b, eb):
    r = a / b
    return r, abs(r) * math.sqrt((ea / a) ** 2 + (eb / b) ** 2)


def ratio_report(hc_fits: dict, do_fits: dict, lattice_a: float, lattice_c: float) -> CorrelationReport:
    """DO/HC ratios of xi_a (h scan), xi_c (l scan) and w_b (k scan).

    ``hc_fits`` and ``do_fits`` map axis labels ``h``, ``l``, ``k`` to PeakFits.
    Ratios involving an unconverged fit are reported as absent.
    """
    quantities = {
        "xi_a": ("h", lambda f: correlation_length(f, lattice_a), lambda f: correlation_length_error(f, lattice_a)),
        "xi_c": ("l", lambda f: correlation_length(f, lattice_c), lambda f: correlation_length_error(f, lattice_c)),
        "w_b": ("k", integrated_intensity, integrated_intensity_error),
    }
    values, errors, ratios = {}, {}, {}
    for name, (axis, val, err) in quantities.items():
        hc, do = hc_fits.get(axis), do_fits.get(axis)
        values[name] = val(hc) if hc is not None and hc.converged else None
        errors[name] = err(hc) if values[name] is not None else None
        if hc is None or do is None or not (hc.converged and do.converged):
            ratios[name] = None
            continue
        ratios[name] = _ratio(val(do), err(do), val(hc), err(hc))
    return CorrelationReport(values["xi_a"], values["xi_c"], values["w_b"], ratios, errors)


# ----------------------------------------------------------------------------
# Probability-density fits

PDF_MODELS = ("poisson", "gaussian", "skew_gaussian", "poisson_conv_gaussian")


@dataclass
class PdfFit:
    model: str
    params: dict
    reduced_chi2: float
    converged: bool
    edges: np.ndarray = field(repr=False, default=None)
    counts: np.ndarray = field(repr=False, default=None)

    def bin_probabilities(self, edges=None) -> np.ndarray:
        return _bin_probs(self.model, self.params, self.edges if edges is None else edges)

    def total_mass(self) -> float:
        """Model probability over (effectively) its whole support."""
        p = self.params
        if self.model == "gaussian":
            lo, hi = p["mu"] - 40 * p["sigma"], p["mu"] + 40 * p["sigma"]
        elif self.model == "skew_gaussian":
            lo, hi = p["mu"] - 40 * p["omega"], p["mu"] + 40 * p["omega"]
        else:
            lam, s = p["lam"], p["scale"]
            g = p.get("width", 0.0)
            kmax = lam + 40 * math.sqrt(lam) + 40
            lo, hi = -40 * g - 0.5 * abs(s), s * kmax + 40 * g
            lo, hi = min(lo, hi), max(lo, hi)
        return float(_bin_probs(self.model, p, np.array([lo, hi]))[0])


def histogram_edges(values: np.ndarray) -> np.ndarray:
    """Freedman-Diaconis bins; integer-valued data gets unit-multiple bins centred on integers."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    q75, q25 = np.percentile(values, [75, 25])
    iqr = q75 - q25
    width = 2 * iqr / len(values) ** (1 / 3) if iqr > 0 else 0.0
    if np.all(values == np.round(values)):
        width = max(1.0, math.ceil(width)) if width > 0 else 1.0
        n = int(math.floor((hi - lo) / width)) + 1
        return lo - 0.5 + width * np.arange(n + 1)
    if width <= 0:
        width = (hi - lo) / 10 if hi > lo else 1.0
    n = max(1, int(math.ceil((hi - lo) / width)))
    n = min(n, 10_000)
    return np.linspace(lo, hi, n + 1)


def _poisson_support(lam):
    """Integers carrying all but ~1e-30 of the Poisson(lam) mass."""
    half = 12 * math.sqrt(lam + 1) + 12
    k = np.arange(max(0, int(lam - half)), int(math.ceil(lam + half)) + 1)
    return k, stats.poisson.pmf(k, lam)


def _bin_probs(model, p, edges):
    edges = np.asarray(edges, dtype=np.float64)
    if model == "gaussian":
        cdf = stats.norm.cdf(edges, p["mu"], p["sigma"])
        return np.diff(cdf)
    if model == "skew_gaussian":
        cdf = stats.skewnorm.cdf(edges, p["alpha"], p["mu"], p["omega"])
        return np.diff(cdf)
    lam, s = p["lam"], p["scale"]
    k, pmf = _poisson_support(lam)
    pos = s * k
    if model == "poisson":
        # lattice masses at s*k, assigned to the bin [e_i, e_{i+1}) containing them
        idx = np.searchsorted(edges, pos, side="right") - 1
        out = np.zeros(len(edges) - 1)
        ok = (idx >= 0) & (idx < len(out))
        np.add.at(out, idx[ok], pmf[ok])
        return out
    g = p["width"]
    cdf = stats.norm.cdf((edges[None, :] - pos[:, None]) / g)
    keep = pmf > 1e-15
    return pmf[keep] @ np.diff(cdf[keep], axis=1)


def _start_params(model, values):
    mean, var = float(values.mean()), float(values.var())
    std = math.sqrt(var) if var > 0 else 1.0
    if model == "gaussian":
        return {"mu": mean, "sigma": std}
    if model == "skew_gaussian":
        return {"mu": mean, "omega": std, "alpha": 0.0}
    scale = var / mean if mean > 0 and var > 0 else 1.0
    if np.all(values == np.round(values)):
        scale = 1.0
    lam = mean / scale if scale else mean
    if model == "poisson":
        return {"lam": max(lam, 1e-3), "scale": scale}
    # split the variance between counting and a smoothing kernel
    return {"lam": max(lam, 1e-3), "scale": scale, "width": 0.3 * std}


_FREE = {
    "gaussian": ("mu", "sigma"),
    "skew_gaussian": ("mu", "omega", "alpha"),
    "poisson": ("lam", "scale"),
    "poisson_conv_gaussian": ("lam", "scale", "width"),
}
_POSITIVE = {"sigma", "omega", "lam", "width"}
# beyond this the lattice models are indistinguishable from a Gaussian and
# the Poisson support gets expensive
LAM_MAX = 1000.0


def _minimize_density(model, names, p0, edges, counts, max_iter):
    x0 = np.array([p0[k] for k in names])
    scales = np.where(np.abs(x0) > 0, np.abs(x0), 1.0)

    def unpack(u):
        p = dict(p0)
        for name, val in zip(names, x0 + scales * u):
            p[name] = abs(val) if name in _POSITIVE else val
        return p

    def obj(u):
        p = unpack(u)
        if any(p[k] == 0 for k in _POSITIVE if k in p) or p.get("scale", 1.0) == 0:
            return np.inf
        if p.get("lam", 0.0) > LAM_MAX:
            return np.inf
        r = n * _bin_probs(model, p, edges) - counts
        return float(np.sum(r * r * inv_var))

    n = counts.sum()
    inv_var = 1.0 / np.maximum(counts, 1.0)
    res = optimize.minimize(
        obj, np.zeros(len(names)), method="Nelder-Mead",
        options=dict(xatol=1e-6, fatol=1e-4, maxiter=max_iter, maxfev=max_iter),
    )
    return res, unpack


def fit_pdf(frame, model: str, max_iter: int = 1500) -> PdfFit:
    """Fit a model density to the histogram of live pixel values.

    Weighted least squares (Nelder-Mead) between bin counts and the model's
    bin probabilities, with Poisson variances ``max(count, 1)``; the minimum
    divided by the degrees of freedom is reported as the reduced chi-square.
    """
    if model not in PDF_MODELS:
        raise AnalysisError(f"unknown PDF model {model!r}")
    if isinstance(frame, Frame):
        values = np.asarray(frame.intensities, dtype=np.float64)[frame.live]
    else:
        values = np.asarray(frame, dtype=np.float64).ravel()
    if values.size == 0:
        raise AnalysisError("empty histogram")
    edges = histogram_edges(values)
    counts, _ = np.histogram(values, bins=edges)
    n = counts.sum()
    names = _FREE[model]
    p0 = _start_params(model, values)
    if model == "poisson" and np.all(values == np.round(values)):
        names = ("lam",)  # integer data: unit lattice
    starts = [p0]
    if model == "poisson_conv_gaussian":
        # the pure lattice fit is the zero-width limit; also try several kernel widths
        lattice = fit_pdf(values, "poisson", max_iter).params
        std = math.sqrt(float(values.var())) or 1.0
        starts = [dict(lattice, width=f * abs(lattice["scale"])) for f in (0.02, 0.25)]
        starts.append(dict(p0, width=0.3 * std))

    best = None
    for start in starts:
        res, unpack = _minimize_density(model, names, start, edges, counts, max_iter)
        if best is None or res.fun < best[0].fun:
            best = (res, unpack)
    res, unpack = best
    params = unpack(res.x)
    expected = n * _bin_probs(model, params, edges)
    var = np.maximum(counts, 1.0)
    dof = max(len(counts) - len(names), 1)
    chi2 = float(np.sum((counts - expected) ** 2 / var) / dof)
    return PdfFit(model, params, chi2, bool(res.success), edges, counts)


# ----------------------------------------------------------------------------
# Score aggregation


@dataclass
class ScoreSummary:
    psnr_mu: float
    psnr_sigma: float
    psnr_median: float
    mssim_median: float
    quality_median: float
    n: int
    psnr_fit_ok: bool
    hist_edges: np.ndarray = field(repr=False, default=None)
    hist_counts: np.ndarray = field(repr=False, default=None)
    fit_amplitude: float = float("nan")

    def as_dict(self) -> dict:
        return dict(
            n=self.n,
            psnr_mu=self.psnr_mu,
            psnr_sigma=self.psnr_sigma,
            psnr_median=self.psnr_median,
            psnr_fit_ok=self.psnr_fit_ok,
            mssim_median=self.mssim_median,
            quality_median=self.quality_median,
        )


def fit_histogram_gaussian(values: np.ndarray):
    """Gaussian (amplitude, mu, sigma) least-squares fit to a density histogram."""
    values = np.sort(np.asarray(values, dtype=np.float64))  # order-independent sums
    edges = histogram_edges(values) if np.ptp(values) > 0 else None
    if edges is None or len(edges) < 4:
        return None
    counts, _ = np.histogram(values, bins=edges)
    centres = 0.5 * (edges[1:] + edges[:-1])
    density = counts / (counts.sum() * np.diff(edges))
    mu0, sd0 = float(values.mean()), float(values.std())
    peak0 = 1 / (sd0 * math.sqrt(2 * math.pi))
    x0 = np.array([peak0, mu0, sd0])
    scale = np.array([peak0, sd0, sd0])

    def obj(u):
        a, mu, sd = x0 + scale * u
        if sd == 0:
            return np.inf
        r = a * np.exp(-0.5 * ((centres - mu) / sd) ** 2) - density
        return float(r @ r)

    res = optimize.minimize(obj, np.zeros(3), method="Nelder-Mead", options=dict(xatol=1e-9, fatol=1e-16, maxiter=4000))
    a, mu, sd = x0 + scale * res.x
    if not (res.success and np.isfinite(mu) and abs(sd) > 0):
        return None
    return float(a), float(mu), float(abs(sd)), edges, counts


def aggregate_scores(rows: Sequence[dict]) -> ScoreSummary:
    """PSNR: mean of a Gaussian fitted to the histogram; MSSIM and quality: medians.

    Falls back to the PSNR median (``psnr_fit_ok`` False) for fewer than 10
    rows or a degenerate histogram.
    """
    if not rows:
        raise AnalysisError("no metric rows to aggregate")
    psnr = np.array([float(r["psnr_db"]) for r in rows])
    ms = np.array([float(r["mssim"]) for r in rows])
    qual = np.array([float(r["quality"]) for r in rows])
    med = float(np.median(psnr))
    fit = fit_histogram_gaussian(psnr) if len(rows) >= 10 else None
    if fit is None:
        edges = np.array([med - 0.5, med + 0.5])
        counts = np.array([len(psnr)])
        return ScoreSummary(med, float(psnr.std()), med, float(np.median(ms)), float(np.median(qual)), len(rows), False, edges, counts)
    a, mu, sd, edges, counts = fit
    return ScoreSummary(mu, sd, med, float(np.median(ms)), float(np.median(qual)), len(rows), True, edges, counts, a)
