//! Density-of-states estimators and their cross-checks.
//!
//! Four limit processes for `∫ e^{-tλ} dν_P`:
//! ball averages of the heat trace, the `ε`-cutoff `ε·Tr(e^{-tP} χ_{[ε,∞)}(M_w))`,
//! the `s`-family `(s−1)·Tr(e^{-tP} M_w^s)` and the Dixmier side built from
//! the eigenvalues of `M_w^{1/2} e^{-tP} M_w^{1/2}`. Also DOS functionals
//! `∫ f dν_P` for Chebyshev-expanded `f` and a KPM histogram.

use std::collections::BTreeMap;

use faer::{Mat, Side};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{ball_indicator, radius_for_epsilon, LatticeGeometry, WeightField};
use crate::numeric::{least_squares, mean, pairwise_sum};
use crate::operators::{
    chebyshev_apply, chebyshev_diagonal, heat_diagonal, spectral_bounds, ProbeEnsemble, SparseHermitianOperator,
    N_EXACT,
};
use crate::seqspace::{dixmier_estimate, ExtendedLimitSurrogate};

/// Relative spread of the final approximants accepted as converged.
pub const CONVERGENCE_SPREAD: f64 = 1e-2;
/// Number of trailing approximants averaged by the R and ε families.
pub const TAIL_POINTS: usize = 3;
const BATCHES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    BallAverage,
    Epsilon,
    SLimit,
    Dixmier,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::BallAverage => "ball-average",
            Estimator::Epsilon => "epsilon",
            Estimator::SLimit => "s-limit",
            Estimator::Dixmier => "dixmier",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub method: Estimator,
    pub value: f64,
    /// `(parameter, approximant)`: parameter is `R`, `ε`, `s` or `N`.
    pub approximants: Vec<(f64, f64)>,
    pub converged: bool,
    /// Relative spread (or fit residual) behind the convergence flag.
    pub spread: f64,
    /// Absolute finite-volume error estimate.
    pub error_estimate: f64,
    /// For the ε family: every cutoff mask equals a ball indicator.
    pub mask_witness: Option<bool>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EstimatorResult {
    fn new(method: Estimator, value: f64, approximants: Vec<(f64, f64)>) -> Self {
        Self {
            method,
            value,
            approximants,
            converged: false,
            spread: f64::NAN,
            error_estimate: f64::NAN,
            mask_witness: None,
            diagnostics: BTreeMap::new(),
        }
    }
}

/// Largest admissible averaging radius: a quarter of the shortest axis.
pub fn max_ball_radius(geom: &LatticeGeometry) -> f64 {
    geom.extents().iter().copied().min().unwrap_or(0) as f64 / 4.0
}

fn tail_summary(values: &[f64]) -> (f64, f64) {
    let k = values.len().min(TAIL_POINTS);
    let tail = &values[values.len() - k..];
    let value = mean(tail);
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if value != 0.0 { (hi - lo) / value.abs() } else { hi - lo };
    (value, spread)
}

/// Standard error of the mean from contiguous batch means, which absorbs
/// short-range correlations between neighbouring sites.
fn batch_standard_error(values: &[f64]) -> f64 {
    let batches = BATCHES.min(values.len() / 2);
    if batches < 2 {
        return f64::NAN;
    }
    let size = values.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&values[b * size..(b + 1) * size])).collect();
    let m = mean(&means);
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

fn check_t(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::param(format!("t must be ≥ 0, got {t}")));
    }
    Ok(())
}

/// `(1/|B(x₀,R)|) Tr(e^{-tP} M_{χ_B(R)})` over increasing radii.
pub fn ball_average_heat_trace(
    op: &SparseHermitianOperator,
    geom: &LatticeGeometry,
    t: f64,
    radii: &[f64],
) -> Result<EstimatorResult> {
    check_t(t)?;
    let diag = heat_diagonal(op, t)?;
    ball_average_from_diagonal(&diag, geom, radii)
}

/// Ball averages of a precomputed per-site diagonal.
pub fn ball_average_from_diagonal(diag: &[f64], geom: &LatticeGeometry, radii: &[f64]) -> Result<EstimatorResult> {
    if radii.is_empty() {
        return Err(Error::param("at least one radius is required"));
    }
    if diag.len() != geom.n_sites() {
        return Err(Error::param("operator and geometry sizes differ"));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) || radii[0] < 0.0 {
        return Err(Error::param("radii must be non-negative and strictly increasing"));
    }
    let limit = max_ball_radius(geom);
    if let Some(r) = radii.iter().find(|&&r| r > limit) {
        return Err(Error::geometry(format!(
            "radius {r} exceeds the guard-banded limit {limit} (a quarter of the box)"
        )));
    }
    let approximants: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| {
            let inside: Vec<f64> = ball_indicator(geom, r)
                .iter()
                .zip(diag)
                .filter(|(b, _)| **b)
                .map(|(_, d)| *d)
                .collect();
            (r, pairwise_sum(&inside) / inside.len() as f64)
        })
        .collect();
    let vals: Vec<f64> = approximants.iter().map(|a| a.1).collect();
    let (value, spread) = tail_summary(&vals);
    let largest: Vec<f64> = ball_indicator(geom, radii[radii.len() - 1])
        .iter()
        .zip(diag)
        .filter(|(b, _)| **b)
        .map(|(_, d)| *d)
        .collect();
    let batch_se = batch_standard_error(&largest);
    let mut res = EstimatorResult::new(Estimator::BallAverage, value, approximants);
    res.converged = radii.len() >= 2 && spread < CONVERGENCE_SPREAD;
    res.spread = spread;
    res.error_estimate = (spread * value.abs()).max(if batch_se.is_nan() { 0.0 } else { batch_se });
    res.diagnostics.insert("largest_ball_volume".into(), largest.len() as f64);
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedStability {
    pub difference: f64,
    pub combined_error: f64,
    pub agree: bool,
}

/// Two runs agree when `|v₁ − v₂| ≤ 3·√(e₁² + e₂²)`.
pub fn seed_stability(a: &EstimatorResult, b: &EstimatorResult) -> SeedStability {
    let difference = (a.value - b.value).abs();
    let combined_error = (a.error_estimate.powi(2) + b.error_estimate.powi(2)).sqrt();
    SeedStability {
        difference,
        combined_error,
        agree: difference <= 3.0 * combined_error,
    }
}

/// `ε·Tr(e^{-tP} χ_{[ε,∞)}(M_w))` over a decreasing `ε` grid.
pub fn epsilon_formula(
    op: &SparseHermitianOperator,
    geom: &LatticeGeometry,
    weights: &WeightField,
    t: f64,
    eps_grid: &[f64],
) -> Result<EstimatorResult> {
    check_t(t)?;
    if eps_grid.is_empty() {
        return Err(Error::param("ε grid is empty"));
    }
    if eps_grid.windows(2).any(|w| !(w[1] < w[0])) || eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::param("ε grid must be positive and strictly decreasing"));
    }
    if weights.len() != geom.n_sites() || op.dim() != geom.n_sites() {
        return Err(Error::param("operator, weights and geometry sizes differ"));
    }
    let diag = heat_diagonal(op, t)?;
    let mut witness = true;
    let mut approximants = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let mask = weights.level_mask(eps);
        let inside: Vec<f64> = mask.iter().zip(&diag).filter(|(b, _)| **b).map(|(_, d)| *d).collect();
        if inside.is_empty() {
            return Err(Error::param(format!("ε = {eps} leaves an empty mask")));
        }
        witness &= radius_for_epsilon(geom, eps).is_some_and(|r| ball_indicator(geom, r) == mask);
        approximants.push((eps, eps * pairwise_sum(&inside)));
    }
    let vals: Vec<f64> = approximants.iter().map(|a| a.1).collect();
    let (value, spread) = tail_summary(&vals);
    let mut res = EstimatorResult::new(Estimator::Epsilon, value, approximants);
    res.converged = eps_grid.len() >= 2 && spread < CONVERGENCE_SPREAD;
    res.spread = spread;
    res.error_estimate = spread * value.abs();
    res.mask_witness = Some(witness);
    Ok(res)
}

/// `ε = 1/(2R+2)` grid matching the given radii on a chain.
pub fn chain_epsilon_grid(radii: &[f64]) -> Vec<f64> {
    radii.iter().map(|r| 1.0 / (2.0 * r + 2.0)).collect()
}

/// Fit of `y(x) ≈ a·(1 − floor^x) + b·x + c·x²` returning `(a, max relative
/// residual)`.
///
/// For `Tr(A B^s)` with `‖B‖ = 1` and spectrum of `B` bounded below by
/// `floor` on a finite box, `(s−1)·Tr(A B^s) = s∫ r^{s−2}·rF(r) dr` with
/// `F(r) = Tr(A χ_{[r,1]}(B))`; a `c/r` tail of `F` cut off at `floor` gives
/// the `1 − floor^{s−1}` factor. With `floor = 0` this is a quadratic
/// extrapolation to `x = 0`.
pub fn truncation_aware_extrapolation(xs: &[f64], ys: &[f64], floor: f64) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData("extrapolation needs at least two points".into()));
    }
    let n_terms = if xs.len() >= 4 { 3 } else { 2 };
    let rows: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            let lead = if floor > 0.0 { 1.0 - floor.powf(x) } else { 1.0 };
            [lead, x, x * x][..n_terms].to_vec()
        })
        .collect();
    let coef = least_squares(&rows, ys);
    let scale = coef[0].abs().max(ys.iter().fold(0.0f64, |m, y| m.max(y.abs()))).max(f64::MIN_POSITIVE);
    let residual = rows
        .iter()
        .zip(ys)
        .map(|(r, y)| (r.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>() - y).abs())
        .fold(0.0, f64::max)
        / scale;
    Ok((coef[0], residual))
}

/// `(s−1)·Tr(e^{-tP} M_w^s)` over `s` decreasing to 1, extrapolated to `s = 1`.
pub fn s_limit_formula(op: &SparseHermitianOperator, weights: &WeightField, t: f64, s_grid: &[f64]) -> Result<EstimatorResult> {
    check_t(t)?;
    if s_grid.len() < 2 {
        return Err(Error::param("s grid needs at least two points"));
    }
    if s_grid.iter().any(|s| !(*s > 1.0 && *s <= 2.0)) || s_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("s grid must lie in (1, 2] and decrease"));
    }
    if weights.len() != op.dim() {
        return Err(Error::param("weights and operator sizes differ"));
    }
    if weights.values.iter().any(|w| !(*w > 0.0 && *w <= 1.0)) {
        return Err(Error::param("weights must lie in (0, 1]"));
    }
    let diag = heat_diagonal(op, t)?;
    let approximants: Vec<(f64, f64)> = s_grid
        .iter()
        .map(|&s| {
            let terms: Vec<f64> = weights.values.iter().zip(&diag).map(|(w, d)| w.powf(s) * d).collect();
            (s, (s - 1.0) * pairwise_sum(&terms))
        })
        .collect();
    let floor = weights.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let xs: Vec<f64> = s_grid.iter().map(|s| s - 1.0).collect();
    let ys: Vec<f64> = approximants.iter().map(|a| a.1).collect();
    let (value, residual) = truncation_aware_extrapolation(&xs, &ys, floor)?;
    let mut res = EstimatorResult::new(Estimator::SLimit, value, approximants);
    res.converged = residual < CONVERGENCE_SPREAD;
    res.spread = residual;
    res.error_estimate = residual * value.abs();
    res.diagnostics.insert("weight_floor".into(), floor);
    for &s in s_grid {
        res.diagnostics.insert(format!("truncation_factor_s={s}"), floor.powf(s - 1.0));
    }
    Ok(res)
}

/// Dixmier estimate of the eigenvalues of `M_w^{1/2} e^{-tP} M_w^{1/2}`.
///
/// Eigenvalues below `min(w)·‖e^{-tP}‖` are dropped: on a finite box they
/// come from the box edge rather than from the `1/k` tail.
pub fn dixmier_side(
    op: &SparseHermitianOperator,
    weights: &WeightField,
    t: f64,
    surrogate: ExtendedLimitSurrogate,
) -> Result<EstimatorResult> {
    check_t(t)?;
    surrogate.validate()?;
    if op.dim() > N_EXACT {
        return Err(Error::Capability(format!(
            "the Dixmier side needs all eigenvalues; dimension {} exceeds {N_EXACT}, use a smaller box",
            op.dim()
        )));
    }
    if weights.len() != op.dim() {
        return Err(Error::param("weights and operator sizes differ"));
    }
    let n = op.dim();
    let heat = op.dense_heat(t)?;
    let root: Vec<f64> = weights.values.iter().map(|w| w.max(0.0).sqrt()).collect();
    let sym = Mat::<f64>::from_fn(n, n, |i, j| root[i] * heat[(i, j)] * root[j]);
    let mut eig = sym
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::param(format!("eigenvalue solver failed: {e:?}")))?;
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sys = op.eigensystem()?;
    let heat_norm = (-t * sys.values[0]).exp();
    let floor = weights.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let threshold = floor * heat_norm * (1.0 - 1e-12);
    let retained: Vec<f64> = eig.iter().copied().take_while(|&v| v >= threshold).collect();
    let est = dixmier_estimate(&retained, surrogate)?;
    let approximants: Vec<(f64, f64)> = est.means.iter().enumerate().map(|(k, m)| (k as f64, *m)).collect();
    let mut res = EstimatorResult::new(Estimator::Dixmier, est.value, approximants);
    res.converged = est.converged;
    res.spread = if est.value != 0.0 { est.spread / est.value.abs() } else { est.spread };
    res.error_estimate = est.spread;
    res.diagnostics.insert("retained_eigenvalues".into(), retained.len() as f64);
    res.diagnostics.insert("total_eigenvalues".into(), n as f64);
    res.diagnostics.insert("window_spread".into(), est.spread);
    Ok(res)
}

/// Chebyshev series `Σ c_k T_k((λ − center)/half_width)` on `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevSeries {
    pub lower: f64,
    pub upper: f64,
    pub coefficients: Vec<f64>,
}

impl ChebyshevSeries {
    pub fn new(lower: f64, upper: f64, coefficients: Vec<f64>) -> Result<Self> {
        if !(upper > lower) || coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("Chebyshev series needs lower < upper and finite coefficients"));
        }
        Ok(Self {
            lower,
            upper,
            coefficients,
        })
    }

    pub fn constant(c: f64, lower: f64, upper: f64) -> Result<Self> {
        Self::new(lower, upper, vec![c])
    }

    /// Interpolant of `f` at the `degree + 1` Chebyshev–Gauss nodes.
    pub fn from_fn(f: impl Fn(f64) -> f64, lower: f64, upper: f64, degree: usize) -> Result<Self> {
        let m = degree + 1;
        let center = 0.5 * (lower + upper);
        let half = 0.5 * (upper - lower);
        let pi = std::f64::consts::PI;
        let samples: Vec<f64> = (0..m)
            .map(|j| f(center + half * (pi * (j as f64 + 0.5) / m as f64).cos()))
            .collect();
        let coefficients = (0..m)
            .map(|k| {
                let s: f64 = samples
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (pi * k as f64 * (j as f64 + 0.5) / m as f64).cos())
                    .sum();
                s * if k == 0 { 1.0 } else { 2.0 } / m as f64
            })
            .collect();
        Self::new(lower, upper, coefficients)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        let y = (lambda - self.center()) / self.half_width();
        let (mut t0, mut t1) = (1.0, y);
        let mut acc = self.coefficients[0];
        for &c in &self.coefficients[1..] {
            acc += c * t1;
            let t2 = 2.0 * y * t1 - t0;
            t0 = t1;
            t1 = t2;
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosFunctionalResult {
    pub value: f64,
    pub radius: f64,
    pub ball_volume: usize,
    pub warning: Option<String>,
}

/// `(1/|B(x₀,R)|)·Tr(f(P) M_{χ_B(R)})` with `f` a Chebyshev series whose
/// interval contains the spectral bounds of `P`. `R` defaults to the
/// guard-banded maximum.
pub fn dos_functional(
    op: &SparseHermitianOperator,
    geom: &LatticeGeometry,
    f: &ChebyshevSeries,
    radius: Option<f64>,
) -> Result<DosFunctionalResult> {
    if op.dim() != geom.n_sites() {
        return Err(Error::param("operator and geometry sizes differ"));
    }
    let bounds = spectral_bounds(op);
    let slack = 1e-9 * (f.upper - f.lower);
    if f.lower > bounds.lower + slack || f.upper < bounds.upper - slack {
        return Err(Error::param(format!(
            "series interval [{}, {}] must contain the spectral bounds [{}, {}]",
            f.lower, f.upper, bounds.lower, bounds.upper
        )));
    }
    let radius = radius.unwrap_or_else(|| max_ball_radius(geom));
    if radius > max_ball_radius(geom) {
        return Err(Error::geometry(format!("radius {radius} exceeds the guard-banded limit")));
    }
    let probe = 256;
    let peak = (0..=probe)
        .map(|i| f.eval(f.lower + (f.upper - f.lower) * i as f64 / probe as f64).abs())
        .fold(0.0, f64::max);
    let on_spectrum = (0..=probe)
        .map(|i| f.eval(bounds.lower + (bounds.upper - bounds.lower) * i as f64 / probe as f64).abs())
        .fold(0.0, f64::max);
    let warning = (on_spectrum <= 1e-12 * peak.max(f64::MIN_POSITIVE)).then(|| {
        let msg = "f vanishes on the spectral bounds; the functional is ≈ 0".to_string();
        warn!("{msg}");
        msg
    });
    let diag = chebyshev_diagonal(op, f.center(), f.half_width(), &f.coefficients);
    let inside: Vec<f64> = ball_indicator(geom, radius)
        .iter()
        .zip(&diag)
        .filter(|(b, _)| **b)
        .map(|(_, d)| *d)
        .collect();
    Ok(DosFunctionalResult {
        value: pairwise_sum(&inside) / inside.len() as f64,
        radius,
        ball_volume: inside.len(),
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosMetadata {
    pub kernel: String,
    pub n_moments: usize,
    pub n_probes: usize,
    pub seed: u64,
    /// Total mass is 1 per site.
    pub normalization: String,
    pub interval: (f64, f64),
}

/// Histogram plus sampled Laplace transform of a spectral measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosMeasure {
    pub bin_edges: Vec<f64>,
    pub masses: Vec<f64>,
    /// Standard error of each mass across probes.
    pub mass_std_errors: Vec<f64>,
    pub laplace_samples: Vec<(f64, f64)>,
    /// Undamped Chebyshev moments `μ_n` of the measure.
    pub moments: Vec<f64>,
    pub metadata: DosMetadata,
}

impl DosMeasure {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `∫ e^{-tλ} dν` from the undamped moments.
    pub fn laplace_transform(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.metadata.interval;
        let f = ChebyshevSeries::from_fn(|x| (-t * x).exp(), lo, hi, self.moments.len() - 1)?;
        Ok(f.coefficients.iter().zip(&self.moments).map(|(c, m)| c * m).sum())
    }

    pub fn with_laplace_samples(mut self, ts: &[f64]) -> Result<Self> {
        self.laplace_samples = ts.iter().map(|&t| Ok((t, self.laplace_transform(t)?))).collect::<Result<_>>()?;
        Ok(self)
    }
}

fn jackson(n_moments: usize) -> Vec<f64> {
    let m = n_moments as f64 + 1.0;
    let pi = std::f64::consts::PI;
    (0..n_moments)
        .map(|k| {
            let k = k as f64;
            ((m - k) * (pi * k / m).cos() + (pi * k / m).sin() / (pi / m).tan()) / m
        })
        .collect()
}

/// Jackson-damped kernel polynomial estimate of the per-site spectral
/// measure, binned into `n_bins` equal bins over the (padded) spectral
/// interval or the given interval.
pub fn kpm_dos_histogram(
    op: &SparseHermitianOperator,
    geom: &LatticeGeometry,
    n_moments: usize,
    probes: ProbeEnsemble,
    n_bins: usize,
    interval: Option<(f64, f64)>,
) -> Result<DosMeasure> {
    if n_moments < 64 {
        return Err(Error::param(format!("KPM needs at least 64 moments, got {n_moments}")));
    }
    if op.dim() != geom.n_sites() {
        return Err(Error::param("operator and geometry sizes differ"));
    }
    if probes.n_probes < 1 || n_bins < 1 {
        return Err(Error::param("KPM needs at least one probe and one bin"));
    }
    let (lo, hi) = match interval {
        Some((a, b)) if b > a => (a, b),
        Some(_) => return Err(Error::param("KPM interval must be increasing")),
        None => {
            let b = spectral_bounds(op);
            let pad = 0.01 * (b.upper - b.lower).max(1e-12);
            (b.lower - pad, b.upper + pad)
        }
    };
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let n = op.dim();
    let per_probe: Vec<Vec<f64>> = (0..probes.n_probes)
        .into_par_iter()
        .map(|j| {
            let z = probes.probe(j, n);
            let mut moments = Vec::with_capacity(n_moments);
            let mut prev = z.clone();
            moments.push(dot(&z, &prev));
            let mut cur = chebyshev_apply(op, center, half, &[0.0, 1.0], &z);
            for k in 1..n_moments {
                moments.push(dot(&z, &cur));
                if k + 1 < n_moments {
                    let mut next = chebyshev_apply(op, center, half, &[0.0, 2.0], &cur);
                    next.iter_mut().zip(&prev).for_each(|(a, p)| *a -= p);
                    prev = std::mem::replace(&mut cur, next);
                }
            }
            moments.iter().map(|m| m / n as f64).collect()
        })
        .collect();
    let g = jackson(n_moments);
    let edges: Vec<f64> = (0..=n_bins).map(|i| lo + (hi - lo) * i as f64 / n_bins as f64).collect();
    let theta: Vec<f64> = edges.iter().map(|e| ((e - center) / half).clamp(-1.0, 1.0).acos()).collect();
    let bin_masses = |mu: &[f64]| -> Vec<f64> {
        (0..n_bins)
            .map(|b| {
                let (t1, t2) = (theta[b], theta[b + 1]);
                let mut acc = g[0] * mu[0] * (t1 - t2);
                for k in 1..n_moments {
                    let kf = k as f64;
                    acc += 2.0 * g[k] * mu[k] * ((kf * t1).sin() - (kf * t2).sin()) / kf;
                }
                acc / std::f64::consts::PI
            })
            .collect()
    };
    let probe_masses: Vec<Vec<f64>> = per_probe.iter().map(|mu| bin_masses(mu)).collect();
    let np = probes.n_probes as f64;
    let moments: Vec<f64> = (0..n_moments)
        .map(|k| per_probe.iter().map(|mu| mu[k]).sum::<f64>() / np)
        .collect();
    let masses = bin_masses(&moments);
    let mass_std_errors = (0..n_bins)
        .map(|b| {
            if probes.n_probes < 2 {
                return f64::NAN;
            }
            let m = masses[b];
            let var = probe_masses.iter().map(|p| (p[b] - m).powi(2)).sum::<f64>() / (np - 1.0);
            (var / np).sqrt()
        })
        .collect();
    Ok(DosMeasure {
        bin_edges: edges,
        masses,
        mass_std_errors,
        laplace_samples: Vec::new(),
        moments,
        metadata: DosMetadata {
            kernel: "jackson".into(),
            n_moments,
            n_probes: probes.n_probes,
            seed: probes.seed,
            normalization: "per-site".into(),
            interval: (lo, hi),
        },
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
