//! Weighted supertraces of graded Dirac pairs and the zero-mode index.

use faer::{c64, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::dostrace::ball_average_from_diagonal;
use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeGeometry, Metric, WeightField};
use crate::numeric::pairwise_sum;
use crate::operators::GradedDiracPair;
use crate::seqspace::{dixmier_estimate, ExtendedLimitSurrogate};

/// Relative singular-value cutoff for zero modes.
pub const ZERO_MODE_CUTOFF: f64 = 1e-8;
/// Singular values within this factor of the cutoff make the count ambiguous.
pub const AMBIGUITY_FACTOR: f64 = 10.0;
/// Below this magnitude the t-scan reports absolute rather than relative deviation.
pub const ABSOLUTE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SupertraceMode {
    BallAverage { radii: Vec<f64> },
    Dixmier { weights: WeightField, surrogate: ExtendedLimitSurrogate },
}

impl SupertraceMode {
    pub fn name(&self) -> &'static str {
        match self {
            SupertraceMode::BallAverage { .. } => "ball-average",
            SupertraceMode::Dixmier { .. } => "dixmier",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupertraceResult {
    pub mode: String,
    pub t_values: Vec<f64>,
    /// Weighted supertrace per `t`, normalized per site.
    pub values: Vec<f64>,
    /// Unweighted `Tr(η e^{-tD²})` per `t`.
    pub raw_values: Vec<f64>,
    pub max_relative_deviation: f64,
}

/// The torus geometry matching the pair's site ordering.
pub fn pair_geometry(pair: &GradedDiracPair) -> Result<LatticeGeometry> {
    LatticeGeometry::new(&[pair.lx(), pair.ly()], Metric::Euclidean, Boundary::Periodic)
}

/// Eigen-data of both squares, with the `S⁻` eigenvectors pushed into the
/// site space through the embedding.
struct SquareSpectra {
    plus_values: Vec<f64>,
    plus_vectors: Mat<c64>,
    minus_values: Vec<f64>,
    minus_vectors: Mat<c64>,
}

fn hermitian_eigen(m: &Mat<c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::param(format!("eigendecomposition failed: {e:?}")))?;
    let vals = (0..m.nrows()).map(|i| evd.S().column_vector()[i].re).collect();
    Ok((vals, evd.U().to_owned()))
}

impl SquareSpectra {
    fn new(pair: &GradedDiracPair) -> Result<Self> {
        let (plus_values, plus_vectors) = hermitian_eigen(&pair.square_plus())?;
        let (minus_values, v) = hermitian_eigen(&pair.square_minus())?;
        Ok(Self {
            plus_values,
            plus_vectors,
            minus_values,
            minus_vectors: pair.embedding() * &v,
        })
    }

    /// Site diagonals of `e^{-tD₋D₊}` and `J e^{-tD₊D₋} J*`.
    fn diagonals(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let diag = |vals: &[f64], vecs: &Mat<c64>| -> Vec<f64> {
            let heat: Vec<f64> = vals.iter().map(|l| (-t * l).exp()).collect();
            (0..vecs.nrows())
                .map(|x| {
                    let terms: Vec<f64> = (0..vecs.ncols()).map(|k| vecs[(x, k)].norm_sqr() * heat[k]).collect();
                    pairwise_sum(&terms)
                })
                .collect()
        };
        (
            diag(&self.plus_values, &self.plus_vectors),
            diag(&self.minus_values, &self.minus_vectors),
        )
    }

    /// Eigenvalues of `M_w^{1/2} (V e^{-tΛ} V*) M_w^{1/2}`, descending, above
    /// `min(w)·e^{-t·λmin}`.
    fn weighted_eigenvalues(vals: &[f64], vecs: &Mat<c64>, weights: &[f64], t: f64) -> Result<Vec<f64>> {
        let n = vecs.nrows();
        let heat: Vec<f64> = vals.iter().map(|l| (-t * l).exp()).collect();
        let root: Vec<f64> = weights.iter().map(|w| w.max(0.0).sqrt()).collect();
        let scaled = Mat::<c64>::from_fn(n, vecs.ncols(), |x, k| vecs[(x, k)] * (root[x] * heat[k].sqrt()));
        let m = &scaled * scaled.adjoint();
        let (mut eig, _) = hermitian_eigen(&m)?;
        eig.sort_by(|a, b| b.total_cmp(a));
        let norm = heat.iter().cloned().fold(0.0, f64::max);
        let floor = weights.iter().cloned().fold(f64::INFINITY, f64::min) * norm * (1.0 - 1e-12);
        Ok(eig.into_iter().take_while(|v| *v >= floor).collect())
    }
}

fn max_relative_deviation(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64;
    if scale > ABSOLUTE_FLOOR {
        (hi - lo) / scale
    } else {
        hi - lo
    }
}

/// `Tr(e^{-tD₋D₊}M_g) − Tr(J e^{-tD₊D₋}J* M_g)` per site for each `t`, with
/// `g` the ball indicator (averaged over the ball) or the weight `w` (through
/// a Dixmier estimate of each square).
pub fn supertrace_weighted(
    pair: &GradedDiracPair,
    ts: &[f64],
    geom: &LatticeGeometry,
    mode: &SupertraceMode,
) -> Result<SupertraceResult> {
    if ts.is_empty() || ts.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::param("t values must be finite and ≥ 0"));
    }
    if geom.n_sites() != pair.n_plus() {
        return Err(Error::param(format!(
            "geometry has {} sites but the pair acts on {}",
            geom.n_sites(),
            pair.n_plus()
        )));
    }
    let spectra = SquareSpectra::new(pair)?;
    let mut values = Vec::with_capacity(ts.len());
    let mut raw_values = Vec::with_capacity(ts.len());
    for &t in ts {
        let (plus, minus) = spectra.diagonals(t);
        let diff: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| a - b).collect();
        raw_values.push(pairwise_sum(&diff));
        let value = match mode {
            SupertraceMode::BallAverage { radii } => ball_average_from_diagonal(&diff, geom, radii)?.value,
            SupertraceMode::Dixmier { weights, surrogate } => {
                if weights.len() != geom.n_sites() {
                    return Err(Error::param("weights and geometry sizes differ"));
                }
                let side = |vals: &[f64], vecs: &Mat<c64>| -> Result<f64> {
                    let eig = SquareSpectra::weighted_eigenvalues(vals, vecs, &weights.values, t)?;
                    Ok(dixmier_estimate(&eig, *surrogate)?.value)
                };
                side(&spectra.plus_values, &spectra.plus_vectors)?
                    - side(&spectra.minus_values, &spectra.minus_vectors)?
            }
        };
        values.push(value);
    }
    Ok(SupertraceResult {
        mode: mode.name().into(),
        t_values: ts.to_vec(),
        max_relative_deviation: max_relative_deviation(&values),
        values,
        raw_values,
    })
}

/// Spread of the weighted supertrace over `t`: relative to the mean
/// magnitude, or absolute when all values are below `1e-9`.
///
/// Only graded pairs are accepted:
///
/// ```compile_fail
/// use dostrace::lattice::{Boundary, LatticeGeometry, Metric};
/// use dostrace::operators::{build_schrodinger, Potential};
/// use dostrace::roeindex::{t_independence_scan, SupertraceMode};
///
/// let g = LatticeGeometry::new(&[6, 6], Metric::Euclidean, Boundary::Periodic).unwrap();
/// let h = build_schrodinger(&g, &Potential::IidUniform { a: 0.0, b: 1.0, seed: 1 }).unwrap();
/// let mode = SupertraceMode::BallAverage { radii: vec![1.0] };
/// let _ = t_independence_scan(&h, &g, &[0.5, 1.0, 2.0], &mode);
/// ```
pub fn t_independence_scan(
    pair: &GradedDiracPair,
    geom: &LatticeGeometry,
    ts: &[f64],
    mode: &SupertraceMode,
) -> Result<f64> {
    if ts.len() < 3 {
        return Err(Error::param(format!("t scan needs at least 3 values, got {}", ts.len())));
    }
    Ok(supertrace_weighted(pair, ts, geom, mode)?.max_relative_deviation)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroModeIndex {
    pub index: i64,
    pub kernel_plus: usize,
    pub kernel_minus: usize,
    /// A singular value lies within a factor 10 of the cutoff.
    pub ambiguous: bool,
}

/// `dim ker D₊ − dim ker D₋` from the singular values of `D₊`.
pub fn zero_mode_index(pair: &GradedDiracPair) -> Result<ZeroModeIndex> {
    let sv = pair
        .d_plus()
        .singular_values()
        .map_err(|e| Error::param(format!("SVD failed: {e:?}")))?;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    let cutoff = ZERO_MODE_CUTOFF * top;
    let rank = sv.iter().filter(|s| **s > cutoff).count();
    let ambiguous = sv
        .iter()
        .any(|&s| s > cutoff / AMBIGUITY_FACTOR && s < cutoff * AMBIGUITY_FACTOR);
    let kernel_plus = pair.n_plus() - rank;
    let kernel_minus = pair.n_minus() - rank;
    Ok(ZeroModeIndex {
        index: kernel_plus as i64 - kernel_minus as i64,
        kernel_plus,
        kernel_minus,
        ambiguous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::weight_field;
    use crate::operators::{build_hofstadter_dirac, Flux};

    fn pair(l: usize, p: u32, q: u32) -> GradedDiracPair {
        build_hofstadter_dirac(l, l, Flux::new(p, q).unwrap()).unwrap()
    }

    #[test]
    fn zero_mode_examples() {
        for (l, p, q, want) in [(6, 0, 1, 0), (6, 1, 6, 6), (4, 1, 2, 8), (6, 1, 3, 12)] {
            let z = zero_mode_index(&pair(l, p, q)).unwrap();
            assert_eq!(z.index, want, "L={l} flux {p}/{q}");
            assert!(!z.ambiguous);
        }
    }

    #[test]
    fn raw_supertrace_is_the_index() {
        let pr = pair(6, 1, 6);
        let g = pair_geometry(&pr).unwrap();
        let mode = SupertraceMode::BallAverage { radii: vec![0.0, 1.0, 1.5] };
        let r = supertrace_weighted(&pr, &[0.1, 0.5, 1.0, 2.0, 5.0], &g, &mode).unwrap();
        for raw in &r.raw_values {
            assert!((raw - 6.0).abs() < 1e-10, "{raw}");
        }
        for v in &r.values {
            assert!((v - 1.0 / 6.0).abs() < 5e-2 / 6.0);
        }
        assert!(r.max_relative_deviation < 1e-2);
    }

    #[test]
    fn flux_free_pair_cancels() {
        let pr = pair(6, 0, 1);
        let g = pair_geometry(&pr).unwrap();
        let ts = [0.5, 1.0, 2.0];
        let ball = SupertraceMode::BallAverage { radii: vec![1.0, 1.5] };
        let r = supertrace_weighted(&pr, &ts, &g, &ball).unwrap();
        assert!(r.values.iter().all(|v| v.abs() < 1e-6));
        assert!(t_independence_scan(&pr, &g, &ts, &ball).unwrap() < 1e-6);
        // the Dixmier side needs a longer retained spectrum than 6×6 or large t offer
        let big = pair(16, 0, 1);
        let gb = pair_geometry(&big).unwrap();
        let dix = SupertraceMode::Dixmier { weights: weight_field(&gb), surrogate: ExtendedLimitSurrogate::LastValue };
        let d = supertrace_weighted(&big, &[0.05, 0.1, 0.2], &gb, &dix).unwrap();
        assert!(d.values.iter().all(|v| v.abs() < 1e-6), "{d:?}");
    }

    #[test]
    fn ball_average_approaches_flux_density() {
        let pr = pair(12, 1, 4);
        let g = pair_geometry(&pr).unwrap();
        let idx = zero_mode_index(&pr).unwrap().index as f64;
        let mode = SupertraceMode::BallAverage { radii: vec![1.0, 2.0, 3.0] };
        let r = supertrace_weighted(&pr, &[1.0], &g, &mode).unwrap();
        assert!((r.values[0] - idx / 144.0).abs() < 5e-2 * idx / 144.0);
    }

    #[test]
    fn scan_rejects_short_lists_and_wrong_geometry() {
        let pr = pair(4, 1, 2);
        let g = pair_geometry(&pr).unwrap();
        let mode = SupertraceMode::BallAverage { radii: vec![1.0] };
        assert!(t_independence_scan(&pr, &g, &[1.0, 2.0], &mode).is_err());
        let wrong = LatticeGeometry::new(&[5, 4], Metric::Euclidean, Boundary::Periodic).unwrap();
        assert!(supertrace_weighted(&pr, &[1.0], &wrong, &mode).is_err());
    }
}
