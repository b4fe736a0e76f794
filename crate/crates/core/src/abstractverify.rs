//! Matrix testbeds for the abstract trace identities.
//!
//! Checks at the level of finite matrices: the Dixmier trace of
//! `W^{1/2}e^{-tP}W^{1/2}` against the `ε`-cutoff formula with
//! `W = diag(1/(k+1))`, the `s ↔ ε` bridge for diagonal pairs, and randomized
//! checks of the weak-Schatten product inequality, the `ζ` bound and the
//! Duhamel formula.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dostrace::{truncation_aware_extrapolation, CONVERGENCE_SPREAD};
use crate::error::{Error, Result};
use crate::numeric::{mean, pairwise_sum};
use crate::operators::duhamel_residual;
use crate::seqspace::{
    decreasing_rearrangement, dixmier_estimate, lorentz_quasinorm, zeta_inequality_check, ExtendedLimitSurrogate,
    QuasiNormParams, SingularSequence,
};

/// Largest dimension of the dense matrix models.
pub const MAX_MODEL_DIM: usize = 10_000;
/// Largest matrix size for the randomized inequality checks.
pub const MAX_FUZZ_DIM: usize = 512;
/// Relative slack before a fuzz trial counts as a violation.
pub const VIOLATION_SLACK: f64 = 1e-10;

/// Self-adjoint `P` for the main-theorem model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MatrixSpec {
    /// Periodic chain Laplacian.
    FreeLaplacian,
    /// Wishart draw `G Gᵀ/n` with standard normal `G`.
    RandomSym { seed: u64 },
    Zero,
    Scalar { c: f64 },
}

impl MatrixSpec {
    pub fn name(&self) -> String {
        match self {
            MatrixSpec::FreeLaplacian => "free-laplacian".into(),
            MatrixSpec::RandomSym { seed } => format!("random-sym({seed})"),
            MatrixSpec::Zero => "zero".into(),
            MatrixSpec::Scalar { c } => format!("scalar({c})"),
        }
    }
}

/// Dense `e^{-tP}` together with its operator norm.
fn heat_matrix(spec: MatrixSpec, n: usize, t: f64) -> Result<(Mat<f64>, f64)> {
    match spec {
        MatrixSpec::Zero => Ok((Mat::identity(n, n), 1.0)),
        MatrixSpec::Scalar { c } => {
            let s = (-t * c).exp();
            Ok((Mat::from_fn(n, n, |i, j| if i == j { s } else { 0.0 }), s))
        }
        MatrixSpec::FreeLaplacian => {
            // circulant: h(d) = (1/n) Σ_k e^{-t(2 − 2cos θ_k)} cos(θ_k d)
            let tau = 2.0 * std::f64::consts::PI / n as f64;
            let cos: Vec<f64> = (0..n).map(|j| (tau * j as f64).cos()).collect();
            let modes: Vec<f64> = cos.iter().map(|c| (-t * (2.0 - 2.0 * c)).exp()).collect();
            let h: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|d| {
                    let terms: Vec<f64> = (0..n).map(|k| modes[k] * cos[(k * d) % n]).collect();
                    pairwise_sum(&terms) / n as f64
                })
                .collect();
            Ok((Mat::from_fn(n, n, |i, j| h[(i + n - j) % n]), 1.0))
        }
        MatrixSpec::RandomSym { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = wishart(&mut rng, n);
            let eig = p
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::param(format!("eigendecomposition failed: {e:?}")))?;
            let u = eig.U();
            let vals: Vec<f64> = (0..n).map(|i| (-t * eig.S().column_vector()[i]).exp()).collect();
            let scaled = Mat::from_fn(n, n, |i, j| u[(i, j)] * vals[j]);
            let norm = vals.iter().cloned().fold(0.0, f64::max);
            Ok((&scaled * u.transpose(), norm))
        }
    }
}

fn wishart(rng: &mut ChaCha8Rng, n: usize) -> Mat<f64> {
    let g = Mat::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let mut p = &g * g.transpose();
    p *= faer::Scale(1.0 / n as f64);
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainTheoremReport {
    pub n: usize,
    pub t: f64,
    pub spec: MatrixSpec,
    pub dixmier_value: f64,
    pub dixmier_converged: bool,
    /// Eigenvalues kept above the truncation floor.
    pub retained: usize,
    pub epsilon_value: f64,
    /// `(ε, ε·Tr(e^{-tP} χ_{[ε,∞)}(W)))` with `ε = 1/m`.
    pub epsilon_approximants: Vec<(f64, f64)>,
    pub gap: f64,
}

/// Both sides of the trace identity with `W = diag(1/(k+1))`.
///
/// The `ε` family uses `ε = 1/m` for `m = n/8, n/4, n/2, n`, where
/// `χ_{[ε,∞)}(W)` projects onto the first `m` coordinates.
pub fn matrix_model_main_theorem(n: usize, spec: MatrixSpec, t: f64) -> Result<MainTheoremReport> {
    if n < 256 {
        return Err(Error::param(format!("matrix model needs n ≥ 256, got {n}")));
    }
    if n > MAX_MODEL_DIM {
        return Err(Error::Capability(format!(
            "matrix model is dense; n = {n} exceeds {MAX_MODEL_DIM}"
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::param(format!("t must be ≥ 0, got {t}")));
    }
    let (heat, norm) = heat_matrix(spec, n, t)?;
    let root: Vec<f64> = (0..n).map(|k| 1.0 / ((k + 1) as f64).sqrt()).collect();
    let sym = Mat::<f64>::from_fn(n, n, |i, j| root[i] * heat[(i, j)] * root[j]);
    let mut eig = sym
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::param(format!("eigenvalue solver failed: {e:?}")))?;
    drop(sym);
    eig.sort_by(|a, b| b.total_cmp(a));
    let threshold = norm / n as f64 * (1.0 - 1e-12);
    let retained: Vec<f64> = eig.into_iter().take_while(|&v| v >= threshold).collect();
    let dix = dixmier_estimate(&retained, ExtendedLimitSurrogate::default())?;

    let diag: Vec<f64> = (0..n).map(|k| heat[(k, k)]).collect();
    let epsilon_approximants: Vec<(f64, f64)> = [n / 8, n / 4, n / 2, n]
        .iter()
        .map(|&m| (1.0 / m as f64, pairwise_sum(&diag[..m]) / m as f64))
        .collect();
    let epsilon_value = mean(&epsilon_approximants[1..].iter().map(|a| a.1).collect::<Vec<_>>());
    Ok(MainTheoremReport {
        n,
        t,
        spec,
        dixmier_value: dix.value,
        dixmier_converged: dix.converged,
        retained: retained.len(),
        epsilon_value,
        epsilon_approximants,
        gap: (dix.value - epsilon_value).abs(),
    })
}

/// Diagonal operator in the `s ↔ ε` bridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DiagonalSpec {
    Identity,
    /// `1/(k+1)`, a truncation of an infinite sequence.
    Harmonic,
    /// `1/(k+1)` for `k < rank`, zero beyond.
    FiniteRank { rank: usize },
    /// `limit + amplitude/√(k+1)`, convergent to `limit`.
    Convergent { limit: f64, amplitude: f64 },
    Values { values: Vec<f64> },
}

impl DiagonalSpec {
    pub fn entries(&self, n: usize) -> Result<Vec<f64>> {
        Ok(match self {
            DiagonalSpec::Identity => vec![1.0; n],
            DiagonalSpec::Harmonic => (0..n).map(|k| 1.0 / (k + 1) as f64).collect(),
            DiagonalSpec::FiniteRank { rank } => (0..n)
                .map(|k| if k < *rank { 1.0 / (k + 1) as f64 } else { 0.0 })
                .collect(),
            DiagonalSpec::Convergent { limit, amplitude } => {
                (0..n).map(|k| limit + amplitude / ((k + 1) as f64).sqrt()).collect()
            }
            DiagonalSpec::Values { values } => {
                if values.len() != n {
                    return Err(Error::param(format!("expected {n} diagonal values, got {}", values.len())));
                }
                values.clone()
            }
        })
    }

    /// Whether the finite diagonal stands for an infinite sequence cut at `n`.
    fn is_truncation(&self) -> bool {
        matches!(self, DiagonalSpec::Harmonic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeReport {
    pub n: usize,
    pub s_value: f64,
    pub s_converged: bool,
    pub s_approximants: Vec<(f64, f64)>,
    pub eps_value: f64,
    pub eps_converged: bool,
    pub eps_approximants: Vec<(f64, f64)>,
    pub gap: f64,
    /// `‖B‖`; the formulas run on `B/‖B‖` and are rescaled back.
    pub scale: f64,
    /// `(r, F(r))` with `F(r) = Tr(A χ_{[r,1]}(B/‖B‖))`.
    pub counting_samples: Vec<(f64, f64)>,
}

/// `lim (s−1)Tr(A B^s)` against `lim ε Tr(A χ_{[ε,∞)}(B))` for diagonal `A, B`.
pub fn s_vs_epsilon_bridge(
    n: usize,
    a_spec: &DiagonalSpec,
    b_spec: &DiagonalSpec,
    s_grid: &[f64],
    eps_grid: &[f64],
) -> Result<BridgeReport> {
    if n == 0 {
        return Err(Error::param("bridge needs n ≥ 1"));
    }
    let a = a_spec.entries(n)?;
    let b = b_spec.entries(n)?;
    if a.iter().chain(&b).any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::param("A and B must be positive semidefinite"));
    }
    let scale = b.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::param("B must be nonzero"));
    }
    if s_grid.len() < 2 || s_grid.iter().any(|s| !(*s > 1.0)) || s_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("s grid needs ≥ 2 decreasing values above 1"));
    }
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0)) || eps_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("ε grid must be positive and strictly decreasing"));
    }
    let b: Vec<f64> = b.iter().map(|x| x / scale).collect();

    let s_approximants: Vec<(f64, f64)> = s_grid
        .iter()
        .map(|&s| {
            let terms: Vec<f64> = a.iter().zip(&b).filter(|(_, y)| **y > 0.0).map(|(x, y)| x * y.powf(s)).collect();
            (s, scale.powf(s) * (s - 1.0) * pairwise_sum(&terms))
        })
        .collect();
    let floor = if b_spec.is_truncation() {
        b.iter().cloned().filter(|y| *y > 0.0).fold(f64::INFINITY, f64::min)
    } else {
        0.0
    };
    let xs: Vec<f64> = s_grid.iter().map(|s| s - 1.0).collect();
    let ys: Vec<f64> = s_approximants.iter().map(|p| p.1).collect();
    let (s_value, residual) = truncation_aware_extrapolation(&xs, &ys, floor)?;

    let counting = |r: f64| -> f64 {
        let terms: Vec<f64> = a.iter().zip(&b).filter(|(_, y)| **y >= r).map(|(x, _)| *x).collect();
        pairwise_sum(&terms)
    };
    let eps_approximants: Vec<(f64, f64)> = eps_grid.iter().map(|&e| (e, e * counting(e / scale))).collect();
    let tail: Vec<f64> = eps_approximants.iter().rev().take(3).map(|p| p.1).collect();
    let eps_value = mean(&tail);
    let eps_spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - tail.iter().cloned().fold(f64::INFINITY, f64::min);

    // r = 1/m for m = 10³, 10^3.5, … up to n
    let counting_samples = (0..)
        .map(|j| (1e3 * 10f64.powf(0.5 * j as f64)).round())
        .take_while(|m| *m <= n as f64)
        .map(|m| (1.0 / m, counting(1.0 / m)))
        .collect();
    Ok(BridgeReport {
        n,
        s_value,
        s_converged: residual < CONVERGENCE_SPREAD,
        s_approximants,
        eps_value,
        eps_converged: eps_grid.len() >= 2 && eps_spread <= CONVERGENCE_SPREAD * eps_value.abs().max(1e-12),
        eps_approximants,
        gap: (s_value - eps_value).abs(),
        scale,
        counting_samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest LHS/RHS seen.
    pub worst_ratio: f64,
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn psd_power(a: &Mat<f64>, r: f64) -> Result<Mat<f64>> {
    let n = a.nrows();
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::param(format!("eigendecomposition failed: {e:?}")))?;
    let u = eig.U();
    let vals: Vec<f64> = (0..n).map(|i| eig.S().column_vector()[i].max(0.0).powf(r)).collect();
    let scaled = Mat::from_fn(n, n, |i, j| u[(i, j)] * vals[j]);
    Ok(&scaled * u.transpose())
}

fn singular_sequence(m: &Mat<f64>) -> Result<SingularSequence> {
    let sv = m
        .singular_values()
        .map_err(|e| Error::param(format!("SVD failed: {e:?}")))?;
    Ok(decreasing_rearrangement(&sv))
}

/// `(‖AB‖_{r,∞}^r, e·‖A^r B^r‖_{1,∞})` for PSD `A, B`.
pub fn alt_inequality_sides(a: &Mat<f64>, b: &Mat<f64>, r: f64) -> Result<(f64, f64)> {
    if !(r > 1.0) {
        return Err(Error::param(format!("r must exceed 1, got {r}")));
    }
    let lhs = lorentz_quasinorm(&singular_sequence(&(a * b))?, QuasiNormParams::weak(r)?).powf(r);
    let prod = &psd_power(a, r)? * &psd_power(b, r)?;
    let rhs = std::f64::consts::E * lorentz_quasinorm(&singular_sequence(&prod)?, QuasiNormParams::weak(1.0)?);
    Ok((lhs, rhs))
}

/// Random Wishart pairs of size `1..=n_max`; one RNG stream per trial.
pub fn alt_inequality_fuzz(n_max: usize, trials: usize, r: f64, seed: u64) -> Result<FuzzReport> {
    if !(r > 1.0) {
        return Err(Error::param(format!("r must exceed 1, got {r}")));
    }
    if trials < 100 {
        return Err(Error::param(format!("at least 100 trials are required, got {trials}")));
    }
    if n_max == 0 || n_max > MAX_FUZZ_DIM {
        return Err(Error::param(format!("n_max must lie in 1..={MAX_FUZZ_DIM}, got {n_max}")));
    }
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let n = rng.random_range(1..=n_max);
            let a = wishart(&mut rng, n);
            let b = wishart(&mut rng, n);
            let (lhs, rhs) = alt_inequality_sides(&a, &b, r)?;
            Ok(lhs / rhs)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(&ratios))
}

fn summarize(ratios: &[f64]) -> FuzzReport {
    FuzzReport {
        trials: ratios.len(),
        violations: ratios.iter().filter(|x| **x > 1.0 + VIOLATION_SLACK).count(),
        worst_ratio: ratios.iter().cloned().fold(0.0, f64::max),
    }
}

/// `‖μ‖_{∞,1} ≤ ζ(1+1/q)·‖μ‖_{q,∞}` on random decreasing sequences.
///
/// Half the trials draw `|N(0,1)|` entries; the other half perturb the
/// extremal profile `(k+1)^{-1/q}`.
pub fn zeta_inequality_fuzz(n_max: usize, trials: usize, q: f64, seed: u64) -> Result<FuzzReport> {
    if trials < 100 || n_max == 0 {
        return Err(Error::param("at least 100 trials and n_max ≥ 1 are required"));
    }
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let n = rng.random_range(1..=n_max);
            let values: Vec<f64> = if trial % 2 == 0 {
                (0..n).map(|_| rng.sample::<f64, _>(StandardNormal).abs()).collect()
            } else {
                (0..n)
                    .map(|k| ((k + 1) as f64).powf(-1.0 / q) * (1.0 - 0.1 * rng.random::<f64>()))
                    .collect()
            };
            let report = zeta_inequality_check(&decreasing_rearrangement(&values), q)?;
            Ok(if report.rhs > 0.0 { report.lhs / report.rhs } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    Ok(summarize(&ratios))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuhamelFuzzReport {
    pub trials: usize,
    pub n: usize,
    pub nodes: usize,
    pub max_residual: f64,
}

/// Duhamel residuals for random symmetric `P = (A + Aᵀ)/2` and general `W`,
/// both with standard normal entries.
pub fn duhamel_fuzz(trials: usize, n: usize, t: f64, nodes: usize, seed: u64) -> Result<DuhamelFuzzReport> {
    if trials == 0 || n == 0 {
        return Err(Error::param("Duhamel fuzz needs at least one trial of size ≥ 1"));
    }
    let residuals: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let a = Mat::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
            let p = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
            let w = Mat::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
            duhamel_residual(&p, &w, t, nodes)
        })
        .collect::<Result<_>>()?;
    Ok(DuhamelFuzzReport {
        trials,
        n,
        nodes,
        max_residual: residuals.iter().cloned().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn free_laplacian_model_matches_fourier_value() {
        let r = matrix_model_main_theorem(4096, MatrixSpec::FreeLaplacian, 1.0).unwrap();
        // e^{-2}I₀(2) from the scaled Bessel routine
        let oracle = crate::numeric::scaled_bessel_i(0, 2.0)[0];
        assert!((r.epsilon_value - oracle).abs() < 1e-10, "{}", r.epsilon_value);
        assert!((r.dixmier_value - oracle).abs() < 5e-2 * oracle, "{r:?}");
        assert!(r.gap < 5e-2 * oracle);
    }

    #[test]
    fn trivial_and_scalar_models() {
        let zero = matrix_model_main_theorem(1024, MatrixSpec::Zero, 1.0).unwrap();
        assert_eq!(zero.epsilon_value, 1.0);
        assert!((zero.dixmier_value - 1.0).abs() < 1e-2);
        let c = matrix_model_main_theorem(1024, MatrixSpec::Scalar { c: 0.7 }, 2.0).unwrap();
        let want = (-1.4f64).exp();
        assert!((c.epsilon_value - want).abs() < 1e-14);
        assert!((c.dixmier_value - want).abs() < 1e-2 * want);
        assert!(matrix_model_main_theorem(128, MatrixSpec::Zero, 1.0).is_err());
    }

    #[test]
    fn random_model_sides_agree() {
        let r = matrix_model_main_theorem(512, MatrixSpec::RandomSym { seed: 4 }, 1.0).unwrap();
        assert!(r.gap < 5e-2 * r.epsilon_value, "{r:?}");
    }

    #[test]
    fn bridge_examples() {
        let s_grid = [1.4, 1.2, 1.1, 1.05];
        let eps: Vec<f64> = [1e-2, 1e-3, 1e-4, 1e-5].to_vec();
        let r = s_vs_epsilon_bridge(100_000, &DiagonalSpec::Identity, &DiagonalSpec::Harmonic, &s_grid, &eps).unwrap();
        assert!((r.s_value - 1.0).abs() < 2e-2 && (r.eps_value - 1.0).abs() < 2e-2, "{r:?}");
        assert!(r.gap < 2e-2);
        // F(r) = ⌊1/r⌋
        for (x, f) in &r.counting_samples {
            assert_eq!(*f, (1.0 / x).round());
            assert!((x * f - 1.0).abs() < 1e-2);
        }
        assert!(r.counting_samples.len() >= 5);

        let conv = DiagonalSpec::Convergent { limit: 0.6, amplitude: 0.3 };
        let c = s_vs_epsilon_bridge(100_000, &conv, &DiagonalSpec::Harmonic, &s_grid, &eps).unwrap();
        // Cesàro oracle: mean of the first m entries of a
        let a = conv.entries(100_000).unwrap();
        let m = 100_000;
        let cesaro = a.iter().sum::<f64>() / m as f64;
        assert!((c.eps_approximants[3].1 - cesaro).abs() < 1e-12);
        assert!((c.eps_value - 0.6).abs() < 2e-2 && (c.s_value - 0.6).abs() < 2e-2, "{c:?}");

        let f = s_vs_epsilon_bridge(100_000, &DiagonalSpec::Identity, &DiagonalSpec::FiniteRank { rank: 10 }, &s_grid, &eps)
            .unwrap();
        assert!(f.s_value.abs() < 1e-2 && f.eps_value.abs() < 1e-2, "{f:?}");
    }

    #[test]
    fn bridge_rescales_unnormalized_b() {
        let s_grid = [1.4, 1.2, 1.1, 1.05];
        let eps = [1e-1, 1e-2, 1e-3];
        let n = 10_000;
        let b = DiagonalSpec::Values { values: (0..n).map(|k| 4.0 / (k + 1) as f64).collect() };
        let r = s_vs_epsilon_bridge(n, &DiagonalSpec::Identity, &b, &s_grid, &eps).unwrap();
        assert_eq!(r.scale, 4.0);
        // ε·#{k : 4/(k+1) ≥ ε} = ε⌊4/ε⌋
        for (e, v) in &r.eps_approximants {
            assert!((v - e * (4.0 / e).floor()).abs() < 1e-12);
        }
    }

    #[test]
    fn alt_identity_and_rank_one() {
        let n = 7;
        let id = Mat::<f64>::identity(n, n);
        let (lhs, rhs) = alt_inequality_sides(&id, &id, 2.0).unwrap();
        assert!((lhs - n as f64).abs() < 1e-12 && (rhs - std::f64::consts::E * n as f64).abs() < 1e-12);
        let v = [1.0, -2.0, 0.5];
        let p = Mat::<f64>::from_fn(3, 3, |i, j| v[i] * v[j]);
        let (lhs, rhs) = alt_inequality_sides(&p, &p, 2.0).unwrap();
        // AB = ‖v‖²·vvᵀ has the single singular value ‖v‖⁴
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        assert!((lhs - norm2.powi(4)).abs() < 1e-9 * norm2.powi(4));
        assert!(lhs <= rhs);
        assert!(alt_inequality_sides(&p, &p, 1.0).is_err());
    }

    #[test]
    fn alt_fuzz_has_no_violations() {
        for r in [1.5, 2.0, 3.0] {
            let rep = alt_inequality_fuzz(32, 200, r, 1).unwrap();
            assert_eq!(rep.violations, 0, "r={r} {rep:?}");
            assert!(rep.worst_ratio > 0.0 && rep.worst_ratio <= 1.0);
        }
        assert!(alt_inequality_fuzz(8, 50, 2.0, 1).is_err());
    }

    #[test]
    fn duhamel_fuzz_residuals_are_small() {
        let r = duhamel_fuzz(20, 16, 1.0, 32, 5).unwrap();
        assert!(r.max_residual < 1e-8, "{r:?}");
        assert_eq!(r, duhamel_fuzz(20, 16, 1.0, 32, 5).unwrap());
    }

    #[test]
    fn fuzz_is_deterministic() {
        assert_eq!(alt_inequality_fuzz(16, 100, 2.0, 9).unwrap(), alt_inequality_fuzz(16, 100, 2.0, 9).unwrap());
        assert_eq!(zeta_inequality_fuzz(64, 100, 1.0, 9).unwrap(), zeta_inequality_fuzz(64, 100, 1.0, 9).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn alt_holds_for_random_pairs(seed in any::<u64>(), n in 1usize..12, r in 1.05f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = wishart(&mut rng, n);
            let b = wishart(&mut rng, n);
            let (lhs, rhs) = alt_inequality_sides(&a, &b, r).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + VIOLATION_SLACK));
        }

        #[test]
        fn zeta_fuzz_clean(seed in any::<u64>(), q in 0.3f64..3.0) {
            let rep = zeta_inequality_fuzz(128, 100, q, seed).unwrap();
            prop_assert_eq!(rep.violations, 0);
        }
    }
}
