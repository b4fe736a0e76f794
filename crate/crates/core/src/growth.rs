//! Volume-growth profiles `r ↦ |B(x₀,r)|` and the growth conditions checked
//! on them: Property (D), the Grimaldi ratio, the shifted-surface condition
//! and the partial sums of Condition1.
//!
//! Everything is evaluated in log space so that exponential profiles with
//! radii in the thousands stay finite.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{fit_line, log_add_exp};

/// Half-width `δ` of the band of decay exponents treated as undecided.
pub const DECAY_MARGIN: f64 = 0.05;
/// Cauchy test: last dyadic block must add less than this fraction.
pub const CAUCHY_FRACTION: f64 = 1e-3;
/// Bound on `|S'/S|` at `Rmax` for the derivative condition.
pub const DERIVATIVE_LIMIT: f64 = 0.05;
pub const DEFAULT_K: usize = 1024;
pub const DEFAULT_RMAX: f64 = 1024.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedProfile {
    r0: f64,
    step: f64,
    volume: Vec<f64>,
    surface: Vec<f64>,
    surface_prime: Vec<f64>,
}

impl TabulatedProfile {
    fn interp(&self, data: &[f64], r: f64) -> f64 {
        let x = (r - self.r0) / self.step;
        let last = data.len() - 1;
        if x <= 0.0 {
            return data[0];
        }
        if x >= last as f64 {
            // exact hit on the final node is fine; beyond is out of range
            return if x - last as f64 <= 1e-9 { data[last] } else { f64::NAN };
        }
        let i = x.floor() as usize;
        let f = x - i as f64;
        data[i] * (1.0 - f) + data[i + 1] * f
    }

    pub fn max_radius(&self) -> f64 {
        self.r0 + self.step * (self.volume.len() - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Representation {
    Power { d: f64, c: f64 },
    StretchedExp { alpha: f64, c: f64 },
    Exp { rate: f64 },
    Table(TabulatedProfile),
}

/// Volume function `V(r)` together with `S = V'` and `S'`.
///
/// `V(r) = V(0)` and `S(r) = 0` for `r < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthProfile {
    repr: Representation,
}

/// Config-level description of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileSpec {
    Power {
        d: f64,
        #[serde(default = "one")]
        c: f64,
    },
    StretchedExp {
        alpha: f64,
        #[serde(default = "one")]
        c: f64,
    },
    Exp {
        rate: f64,
    },
    Table {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

impl ProfileSpec {
    pub fn build(&self) -> Result<GrowthProfile> {
        match self {
            ProfileSpec::Power { d, c } => GrowthProfile::power(*d, *c),
            ProfileSpec::StretchedExp { alpha, c } => GrowthProfile::stretched_exp(*alpha, *c),
            ProfileSpec::Exp { rate } => GrowthProfile::exp(*rate),
            ProfileSpec::Table { path } => GrowthProfile::from_csv(path),
        }
    }
}

impl GrowthProfile {
    /// `V(r) = c·r^d`.
    pub fn power(d: f64, c: f64) -> Result<Self> {
        if !(d >= 0.0 && c > 0.0 && d.is_finite() && c.is_finite()) {
            return Err(Error::param(format!("power profile needs d ≥ 0, c > 0 (got d={d}, c={c})")));
        }
        Ok(Self {
            repr: Representation::Power { d, c },
        })
    }

    /// `V(r) = c·exp(r^α)`.
    pub fn stretched_exp(alpha: f64, c: f64) -> Result<Self> {
        if !(alpha > 0.0 && c > 0.0 && alpha.is_finite() && c.is_finite()) {
            return Err(Error::param(format!(
                "stretched-exp profile needs alpha > 0, c > 0 (got alpha={alpha}, c={c})"
            )));
        }
        Ok(Self {
            repr: Representation::StretchedExp { alpha, c },
        })
    }

    /// `V(r) = exp(rate·r)`. Negative rates are accepted here and rejected by
    /// the checks as non-monotone.
    pub fn exp(rate: f64) -> Result<Self> {
        if !rate.is_finite() {
            return Err(Error::param("exp profile needs a finite rate"));
        }
        Ok(Self {
            repr: Representation::Exp { rate },
        })
    }

    /// Tabulated profile on a uniform grid, checked for discrete consistency
    /// `|V(r+h) − V(r) − ∫S| ≤ tol·max(V(r+h), 1)` (trapezoid rule).
    pub fn from_table(r: &[f64], volume: &[f64], surface: &[f64], surface_prime: &[f64], tol: f64) -> Result<Self> {
        let n = r.len();
        if n < 2 || volume.len() != n || surface.len() != n || surface_prime.len() != n {
            return Err(Error::geometry("table needs ≥ 2 rows and equal-length r, V, S, Sprime columns"));
        }
        let step = r[1] - r[0];
        if !(step > 0.0) {
            return Err(Error::geometry("table radii must be increasing"));
        }
        for (i, w) in r.windows(2).enumerate() {
            if ((w[1] - w[0]) - step).abs() > 1e-9 * step.max(1.0) {
                return Err(Error::geometry(format!("table grid is not uniform at row {}", i + 1)));
            }
        }
        if volume.iter().chain(surface).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::geometry("table V and S must be finite and non-negative"));
        }
        for i in 0..n - 1 {
            let integral = 0.5 * step * (surface[i] + surface[i + 1]);
            let gap = (volume[i + 1] - volume[i] - integral).abs();
            if gap > tol * volume[i + 1].max(1.0) {
                return Err(Error::geometry(format!(
                    "table V and S inconsistent between r={} and r={} (gap {gap:.3e})",
                    r[i],
                    r[i + 1]
                )));
            }
        }
        Ok(Self {
            repr: Representation::Table(TabulatedProfile {
                r0: r[0],
                step,
                volume: volume.to_vec(),
                surface: surface.to_vec(),
                surface_prime: surface_prime.to_vec(),
            }),
        })
    }

    /// Reads CSV columns `r,V,S,Sprime`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::config("profile.path", format!("missing column `{name}`")))
        };
        let (ir, iv, is, ip) = (col("r")?, col("V")?, col("S")?, col("Sprime")?);
        let mut cols: [Vec<f64>; 4] = Default::default();
        for rec in rdr.records() {
            let rec = rec?;
            for (dst, idx) in cols.iter_mut().zip([ir, iv, is, ip]) {
                let s = rec.get(idx).unwrap_or("").trim();
                dst.push(
                    s.parse()
                        .map_err(|_| Error::config("profile.path", format!("bad number `{s}`")))?,
                );
            }
        }
        Self::from_table(&cols[0], &cols[1], &cols[2], &cols[3], 1e-2)
    }

    /// Largest radius at which the profile is defined.
    pub fn max_radius(&self) -> f64 {
        match &self.repr {
            Representation::Table(t) => t.max_radius(),
            _ => f64::INFINITY,
        }
    }

    pub fn log_volume(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match &self.repr {
            Representation::Power { d, c } => {
                if *d == 0.0 {
                    c.ln()
                } else {
                    c.ln() + d * r.ln()
                }
            }
            Representation::StretchedExp { alpha, c } => c.ln() + r.powf(*alpha),
            Representation::Exp { rate } => rate * r,
            Representation::Table(t) => t.interp(&t.volume, r).ln(),
        }
    }

    pub fn log_surface(&self, r: f64) -> f64 {
        if r < 0.0 {
            return f64::NEG_INFINITY;
        }
        match &self.repr {
            Representation::Power { d, c } => {
                if *d == 0.0 {
                    f64::NEG_INFINITY
                } else if *d == 1.0 {
                    c.ln()
                } else {
                    (c * d).ln() + (d - 1.0) * r.ln()
                }
            }
            Representation::StretchedExp { alpha, c } => {
                (c * alpha).ln() + (alpha - 1.0) * r.ln() + r.powf(*alpha)
            }
            Representation::Exp { rate } => {
                if *rate <= 0.0 {
                    // S = rate·V is not a surface measure when rate ≤ 0
                    f64::NEG_INFINITY
                } else {
                    rate.ln() + rate * r
                }
            }
            Representation::Table(t) => t.interp(&t.surface, r).ln(),
        }
    }

    /// Logarithmic derivative `S'(r)/S(r)`.
    pub fn surface_log_derivative(&self, r: f64) -> f64 {
        match &self.repr {
            Representation::Power { d, .. } => {
                if *d == 1.0 || *d == 0.0 {
                    0.0
                } else {
                    (d - 1.0) / r
                }
            }
            Representation::StretchedExp { alpha, .. } => (alpha - 1.0) / r + alpha * r.powf(alpha - 1.0),
            Representation::Exp { rate } => *rate,
            Representation::Table(t) => t.interp(&t.surface_prime, r) / t.interp(&t.surface, r),
        }
    }

    pub fn volume(&self, r: f64) -> f64 {
        self.log_volume(r).exp()
    }

    pub fn surface(&self, r: f64) -> f64 {
        self.log_surface(r).exp()
    }

    pub fn surface_derivative(&self, r: f64) -> f64 {
        if r < 0.0 {
            return 0.0;
        }
        match &self.repr {
            Representation::Table(t) => t.interp(&t.surface_prime, r),
            _ => self.surface(r) * self.surface_log_derivative(r),
        }
    }

    fn check_domain(&self, r: f64) -> Result<()> {
        if r > self.max_radius() + 1e-9 {
            return Err(Error::geometry(format!(
                "radius {r} beyond tabulated range {}",
                self.max_radius()
            )));
        }
        Ok(())
    }

    fn check_monotone(&self, rmax: f64) -> Result<()> {
        self.check_domain(rmax)?;
        let steps = (2.0 * rmax).ceil().max(1.0) as usize;
        let mut prev = self.log_volume(0.0);
        for i in 1..=steps {
            let r = rmax * i as f64 / steps as f64;
            let cur = self.log_volume(r);
            if cur.is_nan() || cur < prev - 1e-12 * prev.abs().max(1.0) {
                return Err(Error::geometry(format!("volume profile is not non-decreasing near r={r}")));
            }
            prev = cur;
        }
        Ok(())
    }
}

/// `S(k)/V(k)` for `k = 1..=K`.
pub fn surface_ratio_sequence(profile: &GrowthProfile, k_max: usize) -> Result<Vec<f64>> {
    if k_max < 1 {
        return Err(Error::param("K must be at least 1"));
    }
    profile.check_domain(k_max as f64)?;
    (1..=k_max)
        .map(|k| {
            let lv = profile.log_volume(k as f64);
            if lv == f64::NEG_INFINITY || lv.is_nan() {
                return Err(Error::geometry(format!("V({k}) = 0")));
            }
            Ok((profile.log_surface(k as f64) - lv).exp())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailVerdict {
    Summable,
    Divergent,
    Inconclusive,
}

/// Finite-data summability evidence for a series of non-negative terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailClassification {
    pub verdict: TailVerdict,
    /// Fitted exponent `β` of `term(k) ~ k^β` on `k ∈ [K/2, K]`.
    pub decay_exponent: f64,
    /// Share of the total contributed by the last dyadic block `(K/2, K]`.
    pub last_block_fraction: f64,
}

/// Classifies `Σ_k term(k)` from `(k, ln term(k))` samples, `k ≥ 1`.
///
/// Summable when the fitted decay beats `k^{-1-2δ}` or the last dyadic
/// block adds less than [`CAUCHY_FRACTION`] of the total; divergent when the
/// decay is slower than `k^{-1+2δ}`; inconclusive in between. On squared
/// ratios this is the `k^{-1/2∓δ}` rule for the ratios themselves.
pub fn classify_series(log_terms: &[(f64, f64)]) -> TailClassification {
    let inconclusive = TailClassification {
        verdict: TailVerdict::Inconclusive,
        decay_exponent: f64::NAN,
        last_block_fraction: f64::NAN,
    };
    let Some(&(k_last, _)) = log_terms.last() else {
        return inconclusive;
    };
    if log_terms.len() < 16 {
        return inconclusive;
    }
    let half = k_last / 2.0;
    let max_log = log_terms
        .iter()
        .map(|t| t.1)
        .filter(|l| l.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if max_log == f64::NEG_INFINITY {
        // all terms vanish
        return TailClassification {
            verdict: TailVerdict::Summable,
            decay_exponent: f64::NEG_INFINITY,
            last_block_fraction: 0.0,
        };
    }
    let (mut total, mut block) = (0.0, 0.0);
    for &(k, l) in log_terms {
        let v = (l - max_log).exp();
        total += v;
        if k > half {
            block += v;
        }
    }
    let last_block_fraction = block / total;

    let (xs, ys): (Vec<f64>, Vec<f64>) = log_terms
        .iter()
        .filter(|(k, l)| *k >= half && l.is_finite())
        .map(|(k, l)| (k.ln(), *l))
        .unzip();
    let decay_exponent = if xs.len() >= 2 {
        fit_line(&xs, &ys).1
    } else {
        f64::NEG_INFINITY
    };

    let verdict = if decay_exponent < -(1.0 + 2.0 * DECAY_MARGIN) || last_block_fraction < CAUCHY_FRACTION {
        TailVerdict::Summable
    } else if decay_exponent > -(1.0 - 2.0 * DECAY_MARGIN) {
        TailVerdict::Divergent
    } else {
        TailVerdict::Inconclusive
    };
    TailClassification {
        verdict,
        decay_exponent,
        last_block_fraction,
    }
}

fn log_sum(logs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = logs.clone().filter(|l| l.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + logs.map(|l| (l - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyDReport {
    /// `Σ_{k≤K} (S(k)/V(k))²`.
    pub ell2_partial_sum: f64,
    pub ell2_tail_verdict: TailVerdict,
    pub ell2_tail: TailClassification,
    /// `S'(R)/S(R)` at `R = Rmax/4, Rmax/2, Rmax`.
    pub derivative_ratios: [(f64, f64); 3],
    /// `S'(Rmax)/S(Rmax)`.
    pub derivative_ratio_limit: f64,
    /// Slope of `|S'/S|` against `R` over the three sample radii.
    pub derivative_trend_slope: f64,
    pub derivative_condition: bool,
    pub passes: bool,
    pub k_cutoff: usize,
    pub r_max: f64,
}

pub fn check_property_d(profile: &GrowthProfile, k_cutoff: usize, r_max: f64) -> Result<PropertyDReport> {
    if k_cutoff < 16 {
        return Err(Error::param(format!("Property (D) check needs K ≥ 16, got {k_cutoff}")));
    }
    if !(r_max >= k_cutoff as f64) {
        return Err(Error::param(format!("Rmax ({r_max}) must be at least K ({k_cutoff})")));
    }
    profile.check_monotone(r_max)?;

    let log_terms: Vec<(f64, f64)> = (1..=k_cutoff)
        .map(|k| {
            let r = k as f64;
            let lv = profile.log_volume(r);
            if lv == f64::NEG_INFINITY {
                return Err(Error::geometry(format!("V({k}) = 0")));
            }
            Ok((r, 2.0 * (profile.log_surface(r) - lv)))
        })
        .collect::<Result<_>>()?;
    let ell2_partial_sum = log_sum(log_terms.iter().map(|t| t.1)).exp();
    let ell2_tail = classify_series(&log_terms);

    let radii = [r_max / 4.0, r_max / 2.0, r_max];
    let derivative_ratios = radii.map(|r| (r, profile.surface_log_derivative(r)));
    let mags = derivative_ratios.map(|(_, v)| v.abs());
    let (_, derivative_trend_slope) = fit_line(&radii, &mags);
    let non_increasing = mags.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
    let derivative_condition = mags.iter().all(|m| m.is_finite()) && non_increasing && mags[2] < DERIVATIVE_LIMIT;

    Ok(PropertyDReport {
        ell2_partial_sum,
        ell2_tail_verdict: ell2_tail.verdict,
        ell2_tail,
        derivative_ratios,
        derivative_ratio_limit: derivative_ratios[2].1,
        derivative_trend_slope,
        derivative_condition,
        passes: ell2_tail.verdict == TailVerdict::Summable && derivative_condition,
        k_cutoff,
        r_max,
    })
}

/// `min_{R ∈ [Rmax/2, Rmax], step 0.5} V(R−r)/V(R+r)`.
pub fn check_grimaldi_ratio(profile: &GrowthProfile, r: f64, r_max: f64) -> Result<f64> {
    if !(r >= 0.0) || !(r_max > 2.0 * r) {
        return Err(Error::param(format!("Grimaldi ratio needs Rmax > 2r ≥ 0 (r={r}, Rmax={r_max})")));
    }
    profile.check_domain(r_max + r)?;
    let steps = (r_max / 2.0 / 0.5).floor() as usize;
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        let big_r = (r_max / 2.0 + 0.5 * i as f64).min(r_max);
        let denom = profile.log_volume(big_r + r);
        if denom == f64::NEG_INFINITY {
            return Err(Error::geometry(format!("V({}) = 0", big_r + r)));
        }
        best = best.min((profile.log_volume(big_r - r) - denom).exp());
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub partial_sum: f64,
    pub verdict: TailVerdict,
    pub tail: TailClassification,
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil() as usize;
    (0..=n).map(|j| (lo + step * j as f64).min(hi)).collect()
}

/// `Σ_{k=1}^{K} (sup_{s∈[0,h]} S(k+s) / V(k))²`, sup on a grid of step
/// `min(h/8, 0.125)`.
pub fn shifted_surface_condition(profile: &GrowthProfile, h: f64, k_cutoff: usize) -> Result<SeriesReport> {
    if !(h > 0.0) {
        return Err(Error::param(format!("shift h must be positive, got {h}")));
    }
    if k_cutoff < 1 {
        return Err(Error::param("K must be at least 1"));
    }
    profile.check_domain(k_cutoff as f64 + h)?;
    let shifts = grid(0.0, h, (h / 8.0).min(0.125));
    let log_terms: Vec<(f64, f64)> = (1..=k_cutoff)
        .map(|k| {
            let r = k as f64;
            let lv = profile.log_volume(r);
            if lv == f64::NEG_INFINITY {
                return Err(Error::geometry(format!("V({k}) = 0")));
            }
            let ls = shifts
                .iter()
                .map(|s| profile.log_surface(r + s))
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((r, 2.0 * (ls - lv)))
        })
        .collect::<Result<_>>()?;
    Ok(SeriesReport {
        partial_sum: log_sum(log_terms.iter().map(|t| t.1)).exp(),
        verdict: classify_series(&log_terms).verdict,
        tail: classify_series(&log_terms),
    })
}

/// `Σ_{k=0}^{K} sup_{s∈[-1,2]} S((k+s)r₀)² / (1 + V((k−1)r₀))²`, sup on a
/// grid of step 0.125, with `V` clamped to `V(0)` below zero.
pub fn condition1_partial_sum(profile: &GrowthProfile, r0: f64, k_cutoff: usize) -> Result<SeriesReport> {
    if !(r0 > 0.0 && r0 <= 1.0) {
        return Err(Error::param(format!("r0 must lie in (0, 1], got {r0}")));
    }
    profile.check_domain((k_cutoff as f64 + 2.0) * r0)?;
    let shifts = grid(-1.0, 2.0, 0.125);
    let log_terms: Vec<(f64, f64)> = (0..=k_cutoff)
        .map(|k| {
            let kf = k as f64;
            let ls = shifts
                .iter()
                .map(|s| profile.log_surface((kf + s) * r0))
                .fold(f64::NEG_INFINITY, f64::max);
            let denom = log_add_exp(0.0, profile.log_volume((kf - 1.0) * r0));
            (kf, 2.0 * (ls - denom))
        })
        .collect();
    let tail = classify_series(&log_terms[1..]);
    Ok(SeriesReport {
        partial_sum: log_sum(log_terms.iter().map(|t| t.1)).exp(),
        verdict: tail.verdict,
        tail,
    })
}

/// `w = 1/(1 + V(distance))`.
pub fn weight_at(profile: &GrowthProfile, distance: f64) -> f64 {
    (-log_add_exp(0.0, profile.log_volume(distance))).exp()
}
