//! Singular-value sequences and the quasinorms and traces built on them.
//!
//! A [`SingularSequence`] is a finite, non-increasing, non-negative list
//! standing for `μ(T)` of an operator or `μ(x)` of a sequence. On top of it
//! this module provides the Lorentz quasinorms `‖·‖_{p,q}`, log-Cesàro means
//! `M_N = (1/log(2+N)) Σ_{k≤N} λ(k)`, a Dixmier-trace estimate with explicit
//! extended-limit surrogates, and the direct sum of left-disjoint families.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, CompensatedSum};

/// Non-increasing, non-negative finite sequence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SingularSequence(Vec<f64>);

impl SingularSequence {
    /// Validates that `values` is already non-increasing and non-negative.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("singular values must be finite and non-negative"));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::param("singular values must be non-increasing"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `|values|` sorted non-increasingly.
pub fn decreasing_rearrangement(values: &[f64]) -> SingularSequence {
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| b.total_cmp(a));
    SingularSequence(abs)
}

/// Lorentz exponents; either may be `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiNormParams {
    pub p: f64,
    pub q: f64,
}

impl QuasiNormParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p > 0.0) || !(q > 0.0) {
            return Err(Error::param(format!("Lorentz exponents must be positive, got p={p}, q={q}")));
        }
        Ok(Self { p, q })
    }

    /// Weak-`ℓ_p`, i.e. `(p, ∞)`.
    pub fn weak(p: f64) -> Result<Self> {
        Self::new(p, f64::INFINITY)
    }
}

/// Finite-truncation value of `‖μ‖_{p,q}`.
///
/// For finite `q` this is `(Σ (k+1)^{q/p-1} μ(k)^q)^{1/q}` (with `q/∞ = 0`
/// covering `ℓ_{∞,q}`); for `q = ∞` it is `sup_k (k+1)^{1/p} μ(k)`.
pub fn lorentz_quasinorm(seq: &SingularSequence, params: QuasiNormParams) -> f64 {
    let QuasiNormParams { p, q } = params;
    let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
    if q.is_infinite() {
        return seq
            .values()
            .iter()
            .enumerate()
            .map(|(k, &mu)| ((k + 1) as f64).powf(inv_p) * mu)
            .fold(0.0, f64::max);
    }
    let exponent = q * inv_p - 1.0;
    let mut sum = CompensatedSum::new();
    for (k, &mu) in seq.values().iter().enumerate() {
        if mu > 0.0 {
            sum.add(((k + 1) as f64).powf(exponent) * mu.powf(q));
        }
    }
    sum.value().powf(1.0 / q)
}

/// Orders an eigenvalue list for Dixmier sums: descending `|λ|`, ties by
/// descending signed value, then by input position.
pub fn order_eigenvalues(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (values[i], values[j]);
        b.abs()
            .total_cmp(&a.abs())
            .then_with(|| b.total_cmp(&a))
            .then_with(|| i.cmp(&j))
    });
    idx.into_iter().map(|i| values[i]).collect()
}

/// `M_N = (1/ln(2+N)) Σ_{k=0}^{N} λ(k)` for every `N`.
pub fn log_cesaro_means(seq: &[f64]) -> Vec<f64> {
    let mut sum = CompensatedSum::new();
    seq.iter()
        .enumerate()
        .map(|(n, &x)| {
            sum.add(x);
            sum.value() / (2.0 + n as f64).ln()
        })
        .collect()
}

/// Computable stand-ins for a (non-constructive) extended limit `ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExtendedLimitSurrogate {
    LastValue,
    /// Mean over the trailing `fraction` of the means.
    TailMean { fraction: f64 },
    /// Value at the last dyadic index; converged when the last two dyadic
    /// means agree within `tolerance`.
    DyadicAgreement { tolerance: f64 },
    /// Least-squares fit of `a + b/L (+ c/L²)`, `L = ln(2+N)`, over the
    /// diagnostic window; the value is the intercept `a`.
    LogExtrapolation { order: u8 },
}

impl Default for ExtendedLimitSurrogate {
    fn default() -> Self {
        ExtendedLimitSurrogate::LogExtrapolation { order: 1 }
    }
}

impl ExtendedLimitSurrogate {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::TailMean { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
                Err(Error::param(format!("tail-mean fraction must lie in (0,1], got {fraction}")))
            }
            Self::DyadicAgreement { tolerance } if !(tolerance > 0.0) => {
                Err(Error::param("dyadic-agreement tolerance must be positive"))
            }
            Self::LogExtrapolation { order } if !(1..=2).contains(&order) => {
                Err(Error::param(format!("log-extrapolation order must be 1 or 2, got {order}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::LastValue => "last-value".into(),
            Self::TailMean { fraction } => format!("tail-mean({fraction})"),
            Self::DyadicAgreement { tolerance } => format!("dyadic-agreement({tolerance})"),
            Self::LogExtrapolation { order } => format!("log-extrapolation({order})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DixmierEstimate {
    pub value: f64,
    pub means: Vec<f64>,
    pub converged: bool,
    /// max − min of the means over the diagnostic window.
    pub spread: f64,
    /// Tolerance the convergence flag was judged against.
    pub tolerance: f64,
    pub surrogate: ExtendedLimitSurrogate,
}

pub const MIN_DIXMIER_LEN: usize = 16;
const WINDOW_FRACTION: f64 = 0.2;

/// Dixmier estimate with the default tolerance `10⁻²·max(1, |value|)`.
pub fn dixmier_estimate(seq: &[f64], surrogate: ExtendedLimitSurrogate) -> Result<DixmierEstimate> {
    dixmier_estimate_with_tolerance(seq, surrogate, None)
}

/// Dixmier estimate of an eigenvalue sequence (already ordered, see
/// [`order_eigenvalues`]).
///
/// The diagnostic window is the last 20% of indices. For the plain
/// surrogates the means over that window (which contains its dyadic
/// subsequence) must agree within the tolerance; for log-extrapolation the
/// fit residual over the window must.
pub fn dixmier_estimate_with_tolerance(
    seq: &[f64],
    surrogate: ExtendedLimitSurrogate,
    tolerance: Option<f64>,
) -> Result<DixmierEstimate> {
    surrogate.validate()?;
    if seq.len() < MIN_DIXMIER_LEN {
        return Err(Error::InsufficientData(format!(
            "Dixmier estimate needs at least {MIN_DIXMIER_LEN} terms, got {}",
            seq.len()
        )));
    }
    let means = log_cesaro_means(seq);
    let n = means.len();
    let win_len = ((WINDOW_FRACTION * n as f64).ceil() as usize).clamp(3, n);
    let window = &means[n - win_len..];
    let spread = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - window.iter().cloned().fold(f64::INFINITY, f64::min);

    let (value, deviation) = match surrogate {
        ExtendedLimitSurrogate::LastValue => (means[n - 1], spread),
        ExtendedLimitSurrogate::TailMean { fraction } => {
            let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
            (numeric::mean(&means[n - k..]), spread)
        }
        ExtendedLimitSurrogate::DyadicAgreement { .. } => {
            let mut j = usize::BITS - 1 - (n - 1).leading_zeros();
            if (1usize << j) > n - 1 {
                j -= 1;
            }
            let last = means[1 << j];
            let prev = means[1 << (j - 1)];
            (last, (last - prev).abs())
        }
        ExtendedLimitSurrogate::LogExtrapolation { order } => {
            let offset = n - win_len;
            let rows: Vec<Vec<f64>> = (0..win_len)
                .map(|i| {
                    let x = 1.0 / (2.0 + (offset + i) as f64).ln();
                    (0..=order as i32).map(|p| x.powi(p)).collect()
                })
                .collect();
            let coef = numeric::least_squares(&rows, window);
            let residual = rows
                .iter()
                .zip(window)
                .map(|(r, m)| (r.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>() - m).abs())
                .fold(0.0, f64::max);
            (coef[0], residual)
        }
    };

    let tolerance = match (tolerance, surrogate) {
        (Some(t), _) => t,
        (None, ExtendedLimitSurrogate::DyadicAgreement { tolerance }) => tolerance,
        (None, _) => 1e-2 * value.abs().max(1.0),
    };
    Ok(DixmierEstimate {
        value,
        means,
        converged: deviation <= tolerance,
        spread,
        tolerance,
        surrogate,
    })
}

#[derive(PartialEq)]
struct HeapItem {
    value: f64,
    part: usize,
    pos: usize,
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.part.cmp(&self.part))
    }
}

/// Singular values of a direct sum: k-way merge of the parts.
pub fn direct_sum_singular_values(parts: &[SingularSequence]) -> SingularSequence {
    let total = parts.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(total);
    let mut heap: BinaryHeap<HeapItem> = parts
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_empty())
        .map(|(part, p)| HeapItem {
            value: p.values()[0],
            part,
            pos: 0,
        })
        .collect();
    while let Some(HeapItem { value, part, pos }) = heap.pop() {
        out.push(value);
        if let Some(&next) = parts[part].values().get(pos + 1) {
            heap.push(HeapItem {
                value: next,
                part,
                pos: pos + 1,
            });
        }
    }
    SingularSequence(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `‖X‖_{∞,1} ≤ ‖X‖_{q,∞} ζ(1+1/q)` on a finite sequence.
pub fn zeta_inequality_check(seq: &SingularSequence, q: f64) -> Result<ZetaReport> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::param(format!("q must be a positive real, got {q}")));
    }
    let mut lhs = CompensatedSum::new();
    for (k, &mu) in seq.values().iter().enumerate() {
        lhs.add(mu / (k + 1) as f64);
    }
    let lhs = lhs.value();
    let rhs = lorentz_quasinorm(seq, QuasiNormParams::weak(q)?) * numeric::zeta(1.0 + 1.0 / q);
    Ok(ZetaReport {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
    })
}

/// Reads a sequence either as one value per line or as a CSV with a `mu`
/// column. Blank lines and `#` comments are skipped.
pub fn read_sequence(path: &Path) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path)?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .collect();
    let Some(first) = lines.first() else {
        return Ok(Vec::new());
    };
    if first.split(',').any(|h| h.trim() == "mu") {
        let body = lines.join("\n");
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let col = rdr
            .headers()?
            .iter()
            .position(|h| h.trim() == "mu")
            .expect("header checked above");
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            out.push(parse_value(rec.get(col).unwrap_or(""))?);
        }
        return Ok(out);
    }
    lines.iter().map(|l| parse_value(l)).collect()
}

fn parse_value(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::param(format!("cannot parse `{}` as a number", s.trim())))
}

/// Writes one value per line.
pub fn write_sequence(path: &Path, values: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in values {
        writeln!(f, "{v:e}")?;
    }
    f.flush()?;
    Ok(())
}
