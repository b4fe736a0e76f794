//! Sparse self-adjoint lattice operators, the heat semigroup `e^{-tP}`
//! (dense eigendecomposition or certified Chebyshev expansion), weighted
//! heat traces, commutators with multipliers and a graded Dirac pair built
//! from the magnetic (Hofstadter) Laplacian.

use std::io::Write as _;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use faer::{c64, Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeGeometry};
use crate::numeric::{gauss_legendre, pairwise_sum, scaled_bessel_i};

/// Largest dimension handled by dense diagonalization.
pub const N_EXACT: usize = 4096;
/// Cap on the Chebyshev degree of the heat expansion.
pub const MAX_CHEBYSHEV_DEGREE: usize = 4096;
pub const MIN_PROBES: usize = 8;
/// Default absolute tolerance for heat applications.
pub const DEFAULT_HEAT_TOL: f64 = 1e-10;
/// Largest dimension for the dense Duhamel check.
pub const DUHAMEL_MAX_DIM: usize = 128;
/// Matvecs below this size stay on one thread.
const PAR_THRESHOLD: usize = 1 << 14;

/// Compressed sparse row matrix with real entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// entries that sum to exactly zero are dropped.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(i, j, v) in &sorted {
            if i >= n_rows || j >= n_cols {
                return Err(Error::param(format!("entry ({i},{j}) outside {n_rows}×{n_cols}")));
            }
            if !v.is_finite() {
                return Err(Error::param(format!("entry ({i},{j}) is not finite")));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut rows = Vec::with_capacity(sorted.len());
        let mut k = 0;
        while k < sorted.len() {
            let (i, j, mut v) = sorted[k];
            k += 1;
            while k < sorted.len() && sorted[k].0 == i && sorted[k].1 == j {
                v += sorted[k].2;
                k += 1;
            }
            if v != 0.0 {
                rows.push(i);
                col_idx.push(j);
                values.push(v);
            }
        }
        for &i in &rows {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            acc += self.values[k] * x[self.col_idx[k]];
        }
        acc
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        if self.n_rows >= PAR_THRESHOLD {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row_dot(i, x));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row_dot(i, x));
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.entries() {
            m[(i, j)] = v;
        }
        m
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && self.entries().all(|(i, j, v)| self.get(j, i) == v)
    }

    pub fn is_antisymmetric(&self) -> bool {
        self.n_rows == self.n_cols && self.entries().all(|(i, j, v)| self.get(j, i) == -v)
    }

    /// Matrix Market coordinate format; symmetric matrices store the lower
    /// triangle only.
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let symmetric = self.is_symmetric();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let kind = if symmetric { "symmetric" } else { "general" };
        writeln!(out, "%%MatrixMarket matrix coordinate real {kind}")?;
        let stored: Vec<_> = self.entries().filter(|(i, j, _)| !symmetric || j <= i).collect();
        writeln!(out, "{} {} {}", self.n_rows, self.n_cols, stored.len())?;
        for (i, j, v) in stored {
            writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsMethod {
    Exact,
    Lanczos,
    Gershgorin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    pub lower: f64,
    pub upper: f64,
    pub method: BoundsMethod,
}

impl SpectralBounds {
    pub fn contains(&self, lambda: f64) -> bool {
        lambda >= self.lower && lambda <= self.upper
    }
}

/// Nearest-neighbour coupling pattern on a box, used to colour sites so
/// that diagonals of low-degree polynomials need few matvecs.
#[derive(Debug, Clone, PartialEq)]
struct BoxPattern {
    extents: Vec<usize>,
    periodic: bool,
}

/// Real symmetric operator in CSR form with lazily cached spectral data.
#[derive(Debug, Clone)]
pub struct SparseHermitianOperator {
    matrix: CsrMatrix,
    pattern: Option<BoxPattern>,
    bounds: OnceLock<SpectralBounds>,
    eigen: OnceLock<Arc<Eigensystem>>,
}

impl PartialEq for SparseHermitianOperator {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl SparseHermitianOperator {
    pub fn from_csr(matrix: CsrMatrix) -> Result<Self> {
        if !matrix.is_symmetric() {
            return Err(Error::param("operator matrix is not symmetric"));
        }
        Ok(Self {
            matrix,
            pattern: None,
            bounds: OnceLock::new(),
            eigen: OnceLock::new(),
        })
    }

    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        Self::from_csr(CsrMatrix::from_triplets(n, n, triplets)?)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let t: Vec<_> = diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(diag.len(), &t)
    }

    pub fn scaled_identity(n: usize, c: f64) -> Result<Self> {
        Self::from_diagonal(&vec![c; n])
    }

    /// Dense symmetric input; entries below `1e-300` in magnitude are dropped.
    pub fn from_dense(m: &Mat<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::param("dense operator must be square"));
        }
        let mut t = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let v = m[(i, j)];
                if v.abs() > 1e-300 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn dim(&self) -> usize {
        self.matrix.n_rows
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.matvec(x)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        self.matrix.to_dense()
    }

    /// `P + diag(shift)`, keeping the coupling pattern.
    pub fn add_diagonal(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim() {
            return Err(Error::param("diagonal shift has the wrong length"));
        }
        let mut t: Vec<_> = self.matrix.entries().collect();
        t.extend(shift.iter().enumerate().map(|(i, &v)| (i, i, v)));
        let mut op = Self::from_triplets(self.dim(), &t)?;
        op.pattern = self.pattern.clone();
        Ok(op)
    }

    /// Cached dense eigendecomposition. Capability error above [`N_EXACT`].
    pub fn eigensystem(&self) -> Result<Arc<Eigensystem>> {
        if let Some(e) = self.eigen.get() {
            return Ok(e.clone());
        }
        if self.dim() > N_EXACT {
            return Err(Error::Capability(format!(
                "dimension {} exceeds the exact-diagonalization limit {N_EXACT}; use a smaller box",
                self.dim()
            )));
        }
        let dense = self.to_dense();
        let evd = dense
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::param(format!("eigendecomposition failed: {e:?}")))?;
        let values = (0..self.dim()).map(|i| evd.S().column_vector()[i]).collect();
        let sys = Arc::new(Eigensystem {
            values,
            vectors: evd.U().to_owned(),
        });
        Ok(self.eigen.get_or_init(|| sys).clone())
    }

    pub fn has_cached_eigensystem(&self) -> bool {
        self.eigen.get().is_some()
    }

    /// Gershgorin interval.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.dim() {
            let mut d = 0.0;
            let mut r = 0.0;
            for (j, v) in self.matrix.row(i) {
                if i == j {
                    d = v;
                } else {
                    r += v.abs();
                }
            }
            lo = lo.min(d - r);
            hi = hi.max(d + r);
        }
        if self.dim() == 0 {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }

    /// `e^{-tP}` as a dense matrix (exact path).
    pub fn dense_heat(&self, t: f64) -> Result<Mat<f64>> {
        let sys = self.eigensystem()?;
        let n = self.dim();
        let u = &sys.vectors;
        let scaled = Mat::<f64>::from_fn(n, n, |i, k| u[(i, k)] * (-t * sys.values[k]).exp());
        Ok(&scaled * u.transpose())
    }
}

/// `-Δ` on the geometry: diagonal `2d`, `-1` per nearest-neighbour bond.
/// Periodic wrap on axes of extent 2 doubles the bond; extent 1 adds no
/// off-diagonal entry.
pub fn build_lattice_laplacian(geom: &LatticeGeometry) -> SparseHermitianOperator {
    let n = geom.n_sites();
    let deg = 2.0 * geom.dim() as f64;
    let mut t = Vec::with_capacity(n * (2 * geom.dim() + 1));
    for s in 0..n {
        t.push((s, s, deg));
        for nb in geom.neighbors(s) {
            if nb != s {
                t.push((s, nb, -1.0));
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(n, n, &t).expect("lattice entries are in range");
    debug_assert!(matrix.is_symmetric());
    SparseHermitianOperator {
        matrix,
        pattern: Some(BoxPattern {
            extents: geom.extents().to_vec(),
            periodic: geom.boundary() == Boundary::Periodic,
        }),
        bounds: OnceLock::new(),
        eigen: OnceLock::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Potential {
    /// Independent uniform values on `[a, b]`, one counter-based stream per site.
    IidUniform { a: f64, b: f64, seed: u64 },
    /// `V(x) = values[(Σ_i x_i) mod len]`.
    Periodic { values: Vec<f64> },
    Constant { c: f64 },
}

impl Potential {
    pub fn values(&self, geom: &LatticeGeometry) -> Result<Vec<f64>> {
        let n = geom.n_sites();
        match self {
            Potential::IidUniform { a, b, seed } => {
                if !(b >= a) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::param(format!("uniform potential needs b ≥ a (a={a}, b={b})")));
                }
                Ok((0..n).map(|s| a + (b - a) * site_uniform(*seed, s as u64)).collect())
            }
            Potential::Periodic { values } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::param("periodic potential table must be non-empty and finite"));
                }
                Ok((0..n)
                    .map(|s| values[geom.coords(s).iter().sum::<usize>() % values.len()])
                    .collect())
            }
            Potential::Constant { c } => {
                if !c.is_finite() {
                    return Err(Error::param("constant potential must be finite"));
                }
                Ok(vec![*c; n])
            }
        }
    }
}

/// Uniform `[0, 1)` draw keyed by `(seed, site)`, independent of iteration order.
pub fn site_uniform(seed: u64, site: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(site);
    rng.random::<f64>()
}

/// `-Δ + M_V`.
pub fn build_schrodinger(geom: &LatticeGeometry, potential: &Potential) -> Result<SparseHermitianOperator> {
    let v = potential.values(geom)?;
    build_lattice_laplacian(geom).add_diagonal(&v)
}

/// Spectral enclosure, cached on the operator.
pub fn spectral_bounds(op: &SparseHermitianOperator) -> SpectralBounds {
    *op.bounds.get_or_init(|| compute_bounds(op))
}

fn compute_bounds(op: &SparseHermitianOperator) -> SpectralBounds {
    let (g_lo, g_hi) = op.gershgorin();
    if let Some(sys) = op.eigen.get() {
        let lo = sys.values.first().copied().unwrap_or(0.0);
        let hi = sys.values.last().copied().unwrap_or(0.0);
        let pad = 1e-10 * (hi - lo).abs().max(1.0);
        return SpectralBounds {
            lower: lo - pad,
            upper: hi + pad,
            method: BoundsMethod::Exact,
        };
    }
    let gersh = SpectralBounds {
        lower: g_lo,
        upper: g_hi,
        method: BoundsMethod::Gershgorin,
    };
    let Some((theta_lo, r_lo, theta_hi, r_hi)) = lanczos_extremes(op, 64) else {
        return gersh;
    };
    let width = (theta_hi - theta_lo).max(1e-12 * theta_hi.abs().max(1.0));
    // unconverged extremes are not trusted
    if r_lo > 0.01 * width || r_hi > 0.01 * width {
        return gersh;
    }
    let lower = (theta_lo - r_lo - 0.01 * width).max(g_lo);
    let upper = (theta_hi + r_hi + 0.01 * width).min(g_hi);
    if upper - lower < g_hi - g_lo {
        SpectralBounds {
            lower,
            upper,
            method: BoundsMethod::Lanczos,
        }
    } else {
        gersh
    }
}

/// Extreme Ritz values and residual norms after `steps` Lanczos steps with
/// full reorthogonalization.
fn lanczos_extremes(op: &SparseHermitianOperator, steps: usize) -> Option<(f64, f64, f64, f64)> {
    let n = op.dim();
    if n == 0 {
        return None;
    }
    let m = steps.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_2005);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    q.iter_mut().for_each(|x| *x /= norm);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha = Vec::with_capacity(m);
    let mut beta: Vec<f64> = Vec::with_capacity(m);
    for k in 0..m {
        let mut w = op.apply(&basis[k]);
        let a: f64 = w.iter().zip(&basis[k]).map(|(x, y)| x * y).sum();
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        beta.push(b);
        if k + 1 == m || b < 1e-12 * a.abs().max(1.0) {
            break;
        }
        w.iter_mut().for_each(|x| *x /= b);
        basis.push(w);
    }
    let k = alpha.len();
    let tri = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let evd = tri.self_adjoint_eigen(Side::Lower).ok()?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let last = beta[k - 1];
    let res = |idx: usize| (last * u[(k - 1, idx)]).abs();
    Some((s[0], res(0), s[k - 1], res(k - 1)))
}

/// Chebyshev expansion of `e^{-tλ}` on `[lower, upper]` with a certified
/// sup-norm error.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevHeat {
    pub center: f64,
    pub half_width: f64,
    pub coefficients: Vec<f64>,
    /// Bound on `sup |e^{-tλ} − p(λ)|` over the interval.
    pub error_bound: f64,
}

impl ChebyshevHeat {
    pub fn new(t: f64, bounds: SpectralBounds, tol: f64) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::param(format!("heat time must be ≥ 0, got {t}")));
        }
        if !(tol > 0.0) {
            return Err(Error::param(format!("tolerance must be positive, got {tol}")));
        }
        let center = 0.5 * (bounds.lower + bounds.upper);
        let half_width = (0.5 * (bounds.upper - bounds.lower)).max(1e-14);
        let prefactor = (-t * (center - half_width)).exp();
        let b = scaled_bessel_i(MAX_CHEBYSHEV_DEGREE + 1, t * half_width);
        // tail[m] = 2 Σ_{k>m} b_k
        let mut tail = vec![0.0; b.len()];
        for k in (0..b.len() - 1).rev() {
            tail[k] = tail[k + 1] + 2.0 * b[k + 1];
        }
        let m = (0..=MAX_CHEBYSHEV_DEGREE)
            .find(|&m| prefactor * tail[m] <= tol)
            .ok_or_else(|| {
                Error::Capability(format!(
                    "heat expansion at t={t} on [{}, {}] needs degree above {MAX_CHEBYSHEV_DEGREE}",
                    bounds.lower, bounds.upper
                ))
            })?;
        let degree = (2 * m).min(MAX_CHEBYSHEV_DEGREE).max(m);
        let coefficients: Vec<f64> = (0..=degree)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let mult = if k == 0 { 1.0 } else { 2.0 };
                prefactor * mult * sign * b[k]
            })
            .collect();
        Ok(Self {
            center,
            half_width,
            coefficients,
            error_bound: prefactor * tail[degree],
        })
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        let y = (lambda - self.center) / self.half_width;
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

    /// `p(P) v` by the three-term recurrence.
    pub fn apply(&self, op: &SparseHermitianOperator, v: &[f64]) -> Vec<f64> {
        chebyshev_apply(op, self.center, self.half_width, &self.coefficients, v)
    }
}

/// `Σ_k c_k T_k((P − center)/half_width) v`.
pub fn chebyshev_apply(
    op: &SparseHermitianOperator,
    center: f64,
    half_width: f64,
    coefficients: &[f64],
    v: &[f64],
) -> Vec<f64> {
    let n = v.len();
    let mut acc: Vec<f64> = v.iter().map(|x| coefficients[0] * x).collect();
    if coefficients.len() == 1 {
        return acc;
    }
    let mut prev = v.to_vec();
    let mut cur = op.apply(v);
    cur.iter_mut()
        .zip(v)
        .for_each(|(c, x)| *c = (*c - center * x) / half_width);
    let mut next = vec![0.0; n];
    for (k, &c) in coefficients.iter().enumerate().skip(1) {
        acc.iter_mut().zip(&cur).for_each(|(a, x)| *a += c * x);
        if k + 1 == coefficients.len() {
            break;
        }
        op.matrix.matvec_into(&cur, &mut next);
        for i in 0..n {
            next[i] = 2.0 * (next[i] - center * cur[i]) / half_width - prev[i];
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatMethod {
    ExactEig,
    Chebyshev,
}

/// Applies `e^{-tP}` by the chosen method.
#[derive(Debug, Clone, Copy)]
pub struct HeatApplier<'a> {
    op: &'a SparseHermitianOperator,
    method: HeatMethod,
}

impl<'a> HeatApplier<'a> {
    pub fn new(op: &'a SparseHermitianOperator, method: HeatMethod) -> Result<Self> {
        if method == HeatMethod::ExactEig && op.dim() > N_EXACT {
            return Err(Error::Capability(format!(
                "exact heat path limited to N ≤ {N_EXACT}, got {}",
                op.dim()
            )));
        }
        Ok(Self { op, method })
    }

    /// Exact below [`N_EXACT`], Chebyshev above.
    pub fn auto(op: &'a SparseHermitianOperator) -> Self {
        let method = if op.dim() <= N_EXACT {
            HeatMethod::ExactEig
        } else {
            HeatMethod::Chebyshev
        };
        Self { op, method }
    }

    pub fn method(&self) -> HeatMethod {
        self.method
    }

    pub fn operator(&self) -> &SparseHermitianOperator {
        self.op
    }

    pub fn chebyshev(&self, t: f64, tol: f64) -> Result<ChebyshevHeat> {
        ChebyshevHeat::new(t, spectral_bounds(self.op), tol)
    }

    /// `e^{-tP} v` with `‖error‖ ≤ tol·‖v‖`.
    pub fn apply(&self, t: f64, v: &[f64], tol: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::param(format!("heat time must be ≥ 0, got {t}")));
        }
        if v.len() != self.op.dim() {
            return Err(Error::param("vector length does not match the operator"));
        }
        if t == 0.0 {
            return Ok(v.to_vec());
        }
        match self.method {
            HeatMethod::ExactEig => {
                let sys = self.op.eigensystem()?;
                let u = &sys.vectors;
                let n = v.len();
                let coeff: Vec<f64> = (0..n)
                    .map(|k| {
                        let c: f64 = (0..n).map(|i| u[(i, k)] * v[i]).sum();
                        c * (-t * sys.values[k]).exp()
                    })
                    .collect();
                Ok((0..n)
                    .map(|i| (0..n).map(|k| u[(i, k)] * coeff[k]).sum())
                    .collect())
            }
            HeatMethod::Chebyshev => Ok(self.chebyshev(t, tol)?.apply(self.op, v)),
        }
    }

    /// Diagonal of `e^{-tP}`, entrywise within `tol`.
    pub fn diagonal(&self, t: f64, tol: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::param(format!("heat time must be ≥ 0, got {t}")));
        }
        let n = self.op.dim();
        if t == 0.0 {
            return Ok(vec![1.0; n]);
        }
        match self.method {
            HeatMethod::ExactEig => {
                let sys = self.op.eigensystem()?;
                let mut diag = vec![0.0; n];
                for k in 0..n {
                    let w = (-t * sys.values[k]).exp();
                    let col = sys.vectors.col(k);
                    for (d, u) in diag.iter_mut().zip(col.iter()) {
                        *d += w * u * u;
                    }
                }
                Ok(diag)
            }
            HeatMethod::Chebyshev => {
                let cheb = self.chebyshev(t, tol)?;
                Ok(chebyshev_diagonal(self.op, cheb.center, cheb.half_width, &cheb.coefficients))
            }
        }
    }
}

pub fn heat_apply(applier: &HeatApplier<'_>, t: f64, v: &[f64], tol: f64) -> Result<Vec<f64>> {
    applier.apply(t, v, tol)
}

/// Diagonal of `Σ_k c_k T_k((P − center)/half_width)` by probing with sums
/// of unit vectors whose sites are further apart than the polynomial degree.
/// Exact for the polynomial when the operator has nearest-neighbour box
/// couplings; falls back to single unit vectors otherwise.
pub fn chebyshev_diagonal(op: &SparseHermitianOperator, center: f64, half_width: f64, coefficients: &[f64]) -> Vec<f64> {
    let n = op.dim();
    let reach = coefficients.len();
    let (periods, extents) = match &op.pattern {
        Some(p) => (
            p.extents
                .iter()
                .map(|&l| {
                    if p.periodic {
                        (reach..=l).find(|q| l % q == 0).unwrap_or(l)
                    } else {
                        reach.min(l)
                    }
                })
                .collect::<Vec<_>>(),
            p.extents.clone(),
        ),
        None => (vec![n], vec![n]),
    };
    let n_colors: usize = periods.iter().product();
    let color_of = |site: usize| -> usize {
        let mut rem = site;
        let mut coords = vec![0; extents.len()];
        for a in (0..extents.len()).rev() {
            coords[a] = rem % extents[a];
            rem /= extents[a];
        }
        coords.iter().zip(&periods).fold(0, |acc, (c, q)| acc * q + c % q)
    };
    let colors: Vec<usize> = (0..n).map(color_of).collect();
    let per_color: Vec<Vec<(usize, f64)>> = (0..n_colors)
        .into_par_iter()
        .map(|c| {
            let probe: Vec<f64> = colors.iter().map(|&k| if k == c { 1.0 } else { 0.0 }).collect();
            let y = chebyshev_apply(op, center, half_width, coefficients, &probe);
            (0..n).filter(|&s| colors[s] == c).map(|s| (s, y[s])).collect()
        })
        .collect();
    let mut diag = vec![0.0; n];
    for (s, v) in per_color.into_iter().flatten() {
        diag[s] = v;
    }
    diag
}

/// Diagonal of `e^{-tP}`: exact below [`N_EXACT`], certified Chebyshev
/// probing above.
pub fn heat_diagonal(op: &SparseHermitianOperator, t: f64) -> Result<Vec<f64>> {
    HeatApplier::auto(op).diagonal(t, DEFAULT_HEAT_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    #[default]
    Rademacher,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeEnsemble {
    pub n_probes: usize,
    pub seed: u64,
    #[serde(default)]
    pub kind: ProbeKind,
}

impl ProbeEnsemble {
    /// Probe `index`, deterministic in `(seed, index)`.
    pub fn probe(&self, index: usize, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        match self.kind {
            ProbeKind::Rademacher => (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect(),
            ProbeKind::Gaussian => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TraceMode {
    Exact,
    Stochastic(ProbeEnsemble),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub value: f64,
    pub std_error: f64,
}

fn check_field(op: &SparseHermitianOperator, g: &[f64]) -> Result<()> {
    if g.len() != op.dim() {
        return Err(Error::param(format!("weight has {} entries, operator dimension {}", g.len(), op.dim())));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("weight must be finite"));
    }
    Ok(())
}

/// `Tr(e^{-tP} M_g)`.
pub fn weighted_heat_trace(op: &SparseHermitianOperator, t: f64, g: &[f64], mode: TraceMode) -> Result<TraceEstimate> {
    check_field(op, g)?;
    match mode {
        TraceMode::Exact => {
            let diag = heat_diagonal(op, t)?;
            let terms: Vec<f64> = diag.iter().zip(g).map(|(d, w)| d * w).collect();
            Ok(TraceEstimate {
                value: pairwise_sum(&terms),
                std_error: 0.0,
            })
        }
        TraceMode::Stochastic(ens) => {
            if ens.n_probes < MIN_PROBES {
                return Err(Error::param(format!(
                    "stochastic trace needs at least {MIN_PROBES} probes, got {}",
                    ens.n_probes
                )));
            }
            let applier = HeatApplier::new(op, HeatMethod::Chebyshev)?;
            let cheb = (t > 0.0).then(|| applier.chebyshev(t, DEFAULT_HEAT_TOL)).transpose()?;
            let samples: Vec<f64> = (0..ens.n_probes)
                .into_par_iter()
                .map(|j| {
                    let z = ens.probe(j, op.dim());
                    let y = match &cheb {
                        Some(c) => c.apply(op, &z),
                        None => z.clone(),
                    };
                    let terms: Vec<f64> = z.iter().zip(&y).zip(g).map(|((a, b), w)| a * w * b).collect();
                    pairwise_sum(&terms)
                })
                .collect();
            let m = samples.len() as f64;
            let mean = pairwise_sum(&samples) / m;
            let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (m - 1.0);
            Ok(TraceEstimate {
                value: mean,
                std_error: (var / m).sqrt(),
            })
        }
    }
}

/// `[P, M_w]` with entries `P_xy (w_y − w_x)`.
pub fn commutator_with_multiplier(op: &SparseHermitianOperator, field: &[f64]) -> Result<CsrMatrix> {
    check_field(op, field)?;
    let t: Vec<_> = op
        .matrix
        .entries()
        .map(|(i, j, v)| (i, j, v * (field[j] - field[i])))
        .collect();
    CsrMatrix::from_triplets(op.dim(), op.dim(), &t)
}

fn spectral_norm(m: &Mat<f64>) -> Result<f64> {
    let s = m
        .singular_values()
        .map_err(|e| Error::param(format!("SVD failed: {e:?}")))?;
    Ok(s.into_iter().fold(0.0, f64::max))
}

/// `‖[e^{-tP}, W] + ∫₀ᵗ e^{-sP}[P,W]e^{-(t−s)P} ds‖₂` with Gauss–Legendre
/// quadrature on `nodes` points, evaluated in the eigenbasis of `P`.
pub fn duhamel_residual(p: &Mat<f64>, w: &Mat<f64>, t: f64, nodes: usize) -> Result<f64> {
    let n = p.nrows();
    if p.ncols() != n || w.nrows() != n || w.ncols() != n {
        return Err(Error::param("P and W must be square of the same size"));
    }
    if n > DUHAMEL_MAX_DIM {
        return Err(Error::Capability(format!("dense Duhamel check limited to N ≤ {DUHAMEL_MAX_DIM}")));
    }
    if nodes < 8 {
        return Err(Error::param("Duhamel quadrature needs at least 8 nodes"));
    }
    if !(t >= 0.0) {
        return Err(Error::param(format!("t must be ≥ 0, got {t}")));
    }
    for i in 0..n {
        for j in 0..i {
            if (p[(i, j)] - p[(j, i)]).abs() > 1e-12 * (p[(i, j)].abs() + p[(j, i)].abs()).max(1e-300) {
                return Err(Error::param("P must be symmetric"));
            }
        }
    }
    let evd = p
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::param(format!("eigendecomposition failed: {e:?}")))?;
    let u = evd.U();
    let lam: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i]).collect();
    let commutator = p * w - w * p;
    let wt = u.transpose() * w * u;
    let ct = u.transpose() * &commutator * u;
    let (x, qw) = gauss_legendre(nodes);
    let half = 0.5 * t;
    let diff = Mat::<f64>::from_fn(n, n, |i, j| {
        let lhs = ((-t * lam[i]).exp() - (-t * lam[j]).exp()) * wt[(i, j)];
        let integral: f64 = x
            .iter()
            .zip(&qw)
            .map(|(xi, wi)| {
                let s = half * (xi + 1.0);
                half * wi * (-s * lam[i] - (t - s) * lam[j]).exp()
            })
            .sum::<f64>()
            * ct[(i, j)];
        lhs + integral
    });
    spectral_norm(&diff)
}

/// `‖e^{-tP}[P, M_w]‖₁` (sum of singular values) on the finite box.
pub fn trace_norm_diagnostic(op: &SparseHermitianOperator, t: f64, field: &[f64]) -> Result<f64> {
    let c = commutator_with_multiplier(op, field)?;
    if c.nnz() == 0 {
        return Ok(0.0);
    }
    let heat = op.dense_heat(t)?;
    let prod = &heat * c.to_dense();
    let s = prod
        .singular_values()
        .map_err(|e| Error::param(format!("SVD failed: {e:?}")))?;
    let mut sorted = s;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(pairwise_sum(&sorted))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceNormTrend {
    pub sizes: [usize; 2],
    pub values: [f64; 2],
    /// `value(larger)/value(smaller)`; near 1 when the norm has stabilized.
    pub ratio: f64,
}

pub fn trace_norm_trend(
    small: (&SparseHermitianOperator, &[f64]),
    large: (&SparseHermitianOperator, &[f64]),
    t: f64,
) -> Result<TraceNormTrend> {
    let a = trace_norm_diagnostic(small.0, t, small.1)?;
    let b = trace_norm_diagnostic(large.0, t, large.1)?;
    Ok(TraceNormTrend {
        sizes: [small.0.dim(), large.0.dim()],
        values: [a, b],
        ratio: b / a,
    })
}

/// Rational flux `p/q` per plaquette, in units of `2π`, stored reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flux {
    pub p: u32,
    pub q: u32,
}

impl Flux {
    pub fn new(p: u32, q: u32) -> Result<Self> {
        if q == 0 {
            return Err(Error::param("flux denominator must be positive"));
        }
        let p = p % q;
        let g = gcd(p, q);
        Ok(Self { p: p / g, q: q / g })
    }

    pub fn value(&self) -> f64 {
        self.p as f64 / self.q as f64
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

/// Graded pair `D₊ : S⁺ → S⁻`, `D₋ = D₊*`.
///
/// `S⁺` is the site space `ℂ^N` of an `Lx × Ly` torus; `S⁻ = ℂ^{N−Φ}` is
/// realized inside the site space by an isometry `J`, so site multipliers act
/// on `S⁻` as `J* M_g J`. With `H` the magnetic Laplacian, `Π` the projector
/// on its lowest `Φ = p·Lx·Ly/q` eigenvectors and `J` an orthonormal basis of
/// `Range(1−Π)`, `D₊ = J*(H + c)^{1/2}` with `c = 1 − λmin(H)`. Then
/// `ker D₊ = Range Π`, `ker D₋ = 0`, and `D₋D₊ = (H + c)(1 − Π)`.
#[derive(Debug, Clone)]
pub struct GradedDiracPair {
    d_plus: Mat<c64>,
    embedding: Mat<c64>,
    lx: usize,
    ly: usize,
    flux: Flux,
}

impl GradedDiracPair {
    pub fn lx(&self) -> usize {
        self.lx
    }

    pub fn ly(&self) -> usize {
        self.ly
    }

    pub fn flux(&self) -> Flux {
        self.flux
    }

    /// `dim S⁺` (number of sites).
    pub fn n_plus(&self) -> usize {
        self.d_plus.ncols()
    }

    pub fn n_minus(&self) -> usize {
        self.d_plus.nrows()
    }

    pub fn d_plus(&self) -> &Mat<c64> {
        &self.d_plus
    }

    pub fn d_minus(&self) -> Mat<c64> {
        self.d_plus.adjoint().to_owned()
    }

    /// Isometry `J : S⁻ → ℂ^N`.
    pub fn embedding(&self) -> &Mat<c64> {
        &self.embedding
    }

    /// `D₋D₊` on `S⁺`.
    pub fn square_plus(&self) -> Mat<c64> {
        self.d_plus.adjoint() * &self.d_plus
    }

    /// `D₊D₋` on `S⁻`.
    pub fn square_minus(&self) -> Mat<c64> {
        &self.d_plus * self.d_plus.adjoint()
    }

    /// Grading `η`: `+1` on `S⁺`, `−1` on `S⁻`.
    pub fn grading(&self) -> Vec<i8> {
        let mut g = vec![1i8; self.n_plus()];
        g.extend(std::iter::repeat_n(-1i8, self.n_minus()));
        g
    }

    /// Expected index `p·Lx·Ly/q`.
    pub fn flux_count(&self) -> usize {
        self.flux.p as usize * self.lx * self.ly / self.flux.q as usize
    }
}

/// Magnetic Laplacian `4 − (T_x + T_x* + T_y + T_y*)` on the `Lx × Ly` torus
/// in Landau gauge: `T_x ψ(x,y) = ψ(x+1,y)`,
/// `T_y ψ(x,y) = e^{2πiφx} ψ(x,y+1)`. Site index is `x·Ly + y`.
pub fn hofstadter_hamiltonian(lx: usize, ly: usize, flux: Flux) -> Result<Mat<c64>> {
    if lx == 0 || ly == 0 {
        return Err(Error::param("torus extents must be positive"));
    }
    if lx % flux.q as usize != 0 {
        return Err(Error::Gauge(format!(
            "flux {}/{} needs q to divide Lx = {lx} for a periodic Landau gauge",
            flux.p, flux.q
        )));
    }
    let n = lx * ly;
    if n > N_EXACT {
        return Err(Error::Capability(format!("torus with {n} sites exceeds {N_EXACT}")));
    }
    let idx = |x: usize, y: usize| (x % lx) * ly + (y % ly);
    let mut h = Mat::<c64>::zeros(n, n);
    for x in 0..lx {
        for y in 0..ly {
            let s = idx(x, y);
            h[(s, s)] += c64::new(4.0, 0.0);
            let phase = 2.0 * std::f64::consts::PI * flux.value() * x as f64;
            let hops = [
                (idx(x + 1, y), c64::new(-1.0, 0.0)),
                (idx(x, y + 1), c64::new(-phase.cos(), -phase.sin())),
            ];
            for (target, amp) in hops {
                h[(s, target)] += amp;
                h[(target, s)] += amp.conj();
            }
        }
    }
    Ok(h)
}

pub fn build_hofstadter_dirac(lx: usize, ly: usize, flux: Flux) -> Result<GradedDiracPair> {
    let h = hofstadter_hamiltonian(lx, ly, flux)?;
    let n = lx * ly;
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::param(format!("eigendecomposition failed: {e:?}")))?;
    let lam: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i].re).collect();
    let u = evd.U();
    let phi = flux.p as usize * n / flux.q as usize;
    let shift = 1.0 - lam[0];
    let root = Mat::<c64>::from_fn(n, n, |i, k| u[(i, k)] * (lam[k] + shift).sqrt());
    let sqrt_h = &root * u.adjoint();
    let embedding = u.subcols(phi, n - phi).to_owned();
    let d_plus = embedding.adjoint() * &sqrt_h;
    Ok(GradedDiracPair {
        d_plus,
        embedding,
        lx,
        ly,
        flux,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Metric;
    use proptest::prelude::*;
    use rand::Rng;

    fn chain(n: usize, boundary: Boundary) -> LatticeGeometry {
        LatticeGeometry::new(&[n], Metric::Euclidean, boundary).unwrap()
    }

    fn sorted_eigs(op: &SparseHermitianOperator) -> Vec<f64> {
        op.eigensystem().unwrap().values.clone()
    }

    #[test]
    fn laplacian_examples() {
        let op = build_lattice_laplacian(&chain(3, Boundary::Dirichlet));
        let dense = op.to_dense();
        let want = [[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(dense[(i, j)], want[i][j]);
            }
        }
        let e = sorted_eigs(&op);
        for (k, v) in e.iter().enumerate() {
            let oracle = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / 4.0).cos();
            assert!((v - oracle).abs() < 1e-12);
        }
        let p = build_lattice_laplacian(&chain(4, Boundary::Periodic));
        for (v, w) in sorted_eigs(&p).iter().zip([0.0, 2.0, 2.0, 4.0]) {
            assert!((v - w).abs() < 1e-12);
        }
        let g = LatticeGeometry::new(&[5, 4, 3], Metric::GraphL1, Boundary::Periodic).unwrap();
        let op = build_lattice_laplacian(&g);
        let ones = vec![1.0; g.n_sites()];
        assert!(op.apply(&ones).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn schrodinger_examples() {
        let g = chain(16, Boundary::Periodic);
        let free = build_lattice_laplacian(&g);
        let shifted = build_schrodinger(&g, &Potential::Constant { c: 0.7 }).unwrap();
        for (a, b) in sorted_eigs(&free).iter().zip(sorted_eigs(&shifted)) {
            assert!((a + 0.7 - b).abs() < 1e-12);
        }
        let zero = build_schrodinger(&g, &Potential::IidUniform { a: 0.0, b: 0.0, seed: 3 }).unwrap();
        assert_eq!(zero, free);

        let g8 = chain(8, Boundary::Periodic);
        let pot = Potential::IidUniform { a: 0.0, b: 1.0, seed: 7 };
        let a = build_schrodinger(&g8, &pot).unwrap();
        let b = build_schrodinger(&g8, &pot).unwrap();
        let bits = |op: &SparseHermitianOperator| op.matrix().entries().map(|(i, j, v)| (i, j, v.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let diag = a.matrix().diagonal();
        assert!(diag.iter().all(|d| (2.0..3.0).contains(d)));
        // the draw at a site does not depend on the box it sits in
        assert_eq!(site_uniform(7, 3), pot.values(&chain(100, Boundary::Periodic)).unwrap()[3]);
        assert!(build_schrodinger(&g8, &Potential::IidUniform { a: 1.0, b: 0.0, seed: 1 }).is_err());

        let periodic = build_schrodinger(&g8, &Potential::Periodic { values: vec![0.0, 1.0] }).unwrap();
        let d = periodic.matrix().diagonal();
        assert_eq!(d[..4], [2.0, 3.0, 2.0, 3.0]);
    }

    #[test]
    fn spectral_bound_examples() {
        let g = chain(256, Boundary::Periodic);
        let op = build_lattice_laplacian(&g);
        let b = spectral_bounds(&op);
        assert!(b.lower <= 0.0 && b.upper >= 4.0, "{b:?}");
        let shifted = build_schrodinger(&g, &Potential::Constant { c: 1.5 }).unwrap();
        let s = spectral_bounds(&shifted);
        assert!((s.lower - b.lower - 1.5).abs() < 0.05 && (s.upper - b.upper - 1.5).abs() < 0.05);

        let g64 = chain(64, Boundary::Periodic);
        let rnd = build_schrodinger(&g64, &Potential::IidUniform { a: -1.0, b: 3.0, seed: 11 }).unwrap();
        let rb = spectral_bounds(&rnd);
        let fresh = rnd.clone();
        let exact = sorted_eigs(&fresh);
        assert!(exact.iter().all(|l| rb.contains(*l)), "{rb:?} vs [{}, {}]", exact[0], exact[63]);
    }

    #[test]
    fn chebyshev_matches_exact_heat() {
        let g = chain(256, Boundary::Periodic);
        let op = build_lattice_laplacian(&g);
        let cheb = HeatApplier::new(&op, HeatMethod::Chebyshev).unwrap();
        let plan = cheb.chebyshev(1.0, 1e-10).unwrap();
        assert!((20..=40).contains(&plan.degree()), "degree {}", plan.degree());
        let exact = HeatApplier::new(&op, HeatMethod::ExactEig).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..256).map(|_| rng.random::<f64>() - 0.5).collect();
        let a = cheb.apply(1.0, &v, 1e-10).unwrap();
        let b = exact.apply(1.0, &v, 1e-10).unwrap();
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-10 * vn, "{err}");
        assert_eq!(cheb.apply(0.0, &v, 1e-10).unwrap(), v);
        assert!(cheb.apply(-1.0, &v, 1e-10).is_err());
    }

    #[test]
    fn heat_on_eigenvector() {
        let n = 64;
        let op = build_lattice_laplacian(&chain(n, Boundary::Periodic));
        let k = 5.0;
        let v: Vec<f64> = (0..n)
            .map(|x| (2.0 * std::f64::consts::PI * k * x as f64 / n as f64).cos())
            .collect();
        let lam = 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k / n as f64).cos();
        for method in [HeatMethod::Chebyshev, HeatMethod::ExactEig] {
            let y = HeatApplier::new(&op, method).unwrap().apply(0.8, &v, 1e-11).unwrap();
            for (a, b) in y.iter().zip(&v) {
                assert!((a - (-0.8 * lam).exp() * b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn probing_diagonal_matches_exact() {
        for (extents, periodic) in [(vec![512], true), (vec![300], false), (vec![24, 20], true)] {
            let boundary = if periodic { Boundary::Periodic } else { Boundary::Dirichlet };
            let g = LatticeGeometry::new(&extents, Metric::Euclidean, boundary).unwrap();
            let op = build_schrodinger(&g, &Potential::IidUniform { a: 0.0, b: 1.0, seed: 2 }).unwrap();
            let cheb = HeatApplier::new(&op, HeatMethod::Chebyshev).unwrap().diagonal(1.3, 1e-11).unwrap();
            let exact = HeatApplier::new(&op, HeatMethod::ExactEig).unwrap().diagonal(1.3, 1e-11).unwrap();
            for (a, b) in cheb.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-10, "{extents:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn weighted_trace_examples() {
        let g = chain(128, Boundary::Periodic);
        let op = build_lattice_laplacian(&g);
        let ones = vec![1.0; 128];
        let tr = weighted_heat_trace(&op, 0.0, &ones, TraceMode::Exact).unwrap();
        assert_eq!(tr.value, 128.0);
        assert_eq!(tr.std_error, 0.0);

        let ens = ProbeEnsemble { n_probes: 4, seed: 1, kind: ProbeKind::Rademacher };
        assert!(weighted_heat_trace(&op, 1.0, &ones, TraceMode::Stochastic(ens)).is_err());
        let mut bad = ones.clone();
        bad[3] = f64::NAN;
        assert!(weighted_heat_trace(&op, 1.0, &bad, TraceMode::Exact).is_err());
    }

    #[test]
    fn ball_trace_tracks_lattice_dos() {
        let n = 4096;
        let g = chain(n, Boundary::Periodic);
        let op = build_lattice_laplacian(&g);
        let oracle: f64 = (0..n)
            .map(|k| (-(2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())).exp())
            .sum::<f64>()
            / n as f64;
        assert!((oracle - 0.30851).abs() < 1e-5);
        for r in [64.0, 512.0] {
            let mask: Vec<f64> = crate::lattice::ball_indicator(&g, r)
                .into_iter()
                .map(|b| if b { 1.0 } else { 0.0 })
                .collect();
            let vol = mask.iter().sum::<f64>();
            let tr = weighted_heat_trace(&op, 1.0, &mask, TraceMode::Exact).unwrap();
            assert!((tr.value / vol - oracle).abs() < 1e-9);
            let ens = ProbeEnsemble { n_probes: 256, seed: 9, kind: ProbeKind::Rademacher };
            let st = weighted_heat_trace(&op, 1.0, &mask, TraceMode::Stochastic(ens)).unwrap();
            assert!((st.value - tr.value).abs() < 3.0 * st.std_error, "{st:?} vs {}", tr.value);
        }
    }

    #[test]
    fn stochastic_trace_is_unbiased() {
        let g = chain(48, Boundary::Periodic);
        let op = build_schrodinger(&g, &Potential::IidUniform { a: 0.0, b: 2.0, seed: 4 }).unwrap();
        let w: Vec<f64> = (0..48).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let exact = weighted_heat_trace(&op, 0.7, &w, TraceMode::Exact).unwrap().value;
        for seed in 0..50 {
            let ens = ProbeEnsemble { n_probes: 32, seed, kind: ProbeKind::Rademacher };
            let st = weighted_heat_trace(&op, 0.7, &w, TraceMode::Stochastic(ens)).unwrap();
            assert!((st.value - exact).abs() <= 4.0 * st.std_error, "seed {seed}: {st:?} vs {exact}");
        }
        // Gaussian probes: pooled over the same 50 seeds
        let runs: Vec<TraceEstimate> = (0..50)
            .map(|seed| {
                let ens = ProbeEnsemble { n_probes: 32, seed, kind: ProbeKind::Gaussian };
                weighted_heat_trace(&op, 0.7, &w, TraceMode::Stochastic(ens)).unwrap()
            })
            .collect();
        let pooled = runs.iter().map(|r| r.value).sum::<f64>() / 50.0;
        let pooled_se = runs.iter().map(|r| r.std_error * r.std_error).sum::<f64>().sqrt() / 50.0;
        assert!((pooled - exact).abs() <= 4.0 * pooled_se, "{pooled} ± {pooled_se} vs {exact}");
    }

    #[test]
    fn ball_trace_equals_per_column_diagonal() {
        let g = LatticeGeometry::new(&[16, 16], Metric::Euclidean, Boundary::Periodic).unwrap();
        let op = build_schrodinger(&g, &Potential::IidUniform { a: 0.0, b: 1.0, seed: 21 }).unwrap();
        let mask = crate::lattice::ball_indicator(&g, 5.0);
        let weights: Vec<f64> = mask.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
        let tr = weighted_heat_trace(&op, 0.9, &weights, TraceMode::Exact).unwrap().value;
        let heat = HeatApplier::new(&op, HeatMethod::ExactEig).unwrap();
        let mut direct = 0.0;
        for s in (0..g.n_sites()).filter(|&s| mask[s]) {
            let mut e = vec![0.0; g.n_sites()];
            e[s] = 1.0;
            direct += heat.apply(0.9, &e, 1e-12).unwrap()[s];
        }
        assert!((tr - direct).abs() < 1e-10 * direct);
    }

    #[test]
    fn commutator_examples() {
        let g = chain(3, Boundary::Dirichlet);
        let op = build_lattice_laplacian(&g);
        let c = commutator_with_multiplier(&op, &[1.0, 0.5, 1.0 / 3.0]).unwrap();
        // direct 3×3: P_xy (w_y − w_x) on the two bonds
        let want = [(0, 1, 0.5), (1, 0, -0.5), (1, 2, 1.0 / 6.0), (2, 1, -1.0 / 6.0)];
        assert_eq!(c.nnz(), 4);
        for (i, j, v) in want {
            assert!((c.get(i, j) - v).abs() < 1e-15);
        }
        assert!(c.is_antisymmetric());
        let zero = commutator_with_multiplier(&op, &[0.3; 3]).unwrap();
        assert_eq!(zero.nnz(), 0);
        let diag = SparseHermitianOperator::from_diagonal(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(commutator_with_multiplier(&diag, &[1.0, 0.5, 0.2]).unwrap().nnz(), 0);
    }

    #[test]
    fn duhamel_examples() {
        let p = Mat::<f64>::from_fn(2, 2, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let w = Mat::<f64>::from_fn(2, 2, |i, j| if i != j { 1.0 } else { 0.0 });
        let r = duhamel_residual(&p, &w, 1.0, 32).unwrap();
        assert!(r < 1e-10, "{r}");
        // closed form off-diagonal of [e^{-tP}, W]
        let off = (-1.0f64).exp() - (-2.0f64).exp();
        assert!((off - 0.23254).abs() < 1e-5);
        let id = Mat::<f64>::identity(2, 2);
        assert!(duhamel_residual(&p, &id, 1.0, 8).unwrap() < 1e-15);
        let p2 = Mat::<f64>::from_fn(3, 3, |i, j| [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]][i][j]);
        let w2 = &p2 * &p2;
        assert!(duhamel_residual(&p2, &w2, 0.6, 16).unwrap() < 1e-12);
        assert!(duhamel_residual(&p, &w, 1.0, 4).is_err());
        let big = Mat::<f64>::identity(200, 200);
        assert!(matches!(duhamel_residual(&big, &big, 1.0, 8), Err(Error::Capability(_))));
    }

    #[test]
    fn duhamel_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let a = Mat::<f64>::from_fn(16, 16, |_, _| rng.sample::<f64, _>(StandardNormal));
            let p = (&a + a.transpose()) * faer::Scale(0.5);
            let w = Mat::<f64>::from_fn(16, 16, |_, _| rng.sample::<f64, _>(StandardNormal));
            assert!(duhamel_residual(&p, &w, 1.0, 32).unwrap() < 1e-8);
        }
    }

    #[test]
    fn trace_norm_examples() {
        let small = chain(512, Boundary::Periodic);
        let large = chain(1024, Boundary::Periodic);
        let ps = build_lattice_laplacian(&small);
        let pl = build_lattice_laplacian(&large);
        assert_eq!(trace_norm_diagnostic(&ps, 1.0, &vec![2.0; 512]).unwrap(), 0.0);
        let ws = crate::lattice::weight_field(&small).values;
        let wl = crate::lattice::weight_field(&large).values;
        let trend = trace_norm_trend((&ps, &ws), (&pl, &wl), 1.0).unwrap();
        assert!(trend.ratio < 1.2 && trend.ratio > 0.0, "{trend:?}");

        // Dirichlet Laplacian has λmin > 0, so the diagnostic decays to 0
        let d = chain(64, Boundary::Dirichlet);
        let pd = build_lattice_laplacian(&d);
        let wd = crate::lattice::weight_field(&d).values;
        let vals: Vec<f64> = [1.0, 10.0, 100.0, 1000.0, 10000.0]
            .iter()
            .map(|&t| trace_norm_diagnostic(&pd, t, &wd).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
        assert!(vals[4] < 1e-6 * vals[0]);
    }

    #[test]
    fn matrix_market_export() {
        let op = build_lattice_laplacian(&chain(3, Boundary::Dirichlet));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.mtx");
        op.matrix().write_matrix_market(&path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines[0], "%%MatrixMarket matrix coordinate real symmetric");
        assert_eq!(lines[1], "3 3 5");
        assert_eq!(lines[2], "1 1 2e0");
        assert_eq!(lines[3], "2 1 -1e0");
    }

    #[test]
    fn hofstadter_pair_structure() {
        let zero = build_hofstadter_dirac(4, 4, Flux::new(0, 1).unwrap()).unwrap();
        assert_eq!(zero.n_minus(), zero.n_plus());
        let pair = build_hofstadter_dirac(6, 6, Flux::new(1, 6).unwrap()).unwrap();
        assert_eq!(pair.flux_count(), 6);
        assert_eq!((pair.n_plus(), pair.n_minus()), (36, 30));
        assert_eq!(pair.grading().iter().filter(|&&g| g < 0).count(), 30);
        let j = pair.embedding();
        let jj = j.adjoint() * j;
        for a in 0..30 {
            for b in 0..30 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((jj[(a, b)] - c64::new(want, 0.0)).norm() < 1e-12);
            }
        }
        assert!(matches!(
            build_hofstadter_dirac(5, 4, Flux::new(1, 2).unwrap()),
            Err(Error::Gauge(_))
        ));
        assert_eq!(Flux::new(2, 12).unwrap(), Flux { p: 1, q: 6 });
    }

    #[test]
    fn hofstadter_hamiltonian_is_hermitian_with_flux_per_plaquette() {
        let flux = Flux::new(1, 3).unwrap();
        let h = hofstadter_hamiltonian(6, 5, flux).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                assert!((h[(i, j)] - h[(j, i)].conj()).norm() < 1e-15);
            }
        }
        // hopping product around the plaquette at (x,y) = (2,1)
        let idx = |x: usize, y: usize| (x % 6) * 5 + (y % 5);
        let hop = |a: usize, b: usize| -h[(a, b)];
        let loop_phase = hop(idx(2, 1), idx(3, 1)) * hop(idx(3, 1), idx(3, 2)) * hop(idx(3, 2), idx(2, 2)) * hop(idx(2, 2), idx(2, 1));
        let angle = loop_phase.im.atan2(loop_phase.re);
        assert!((angle.abs() - 2.0 * std::f64::consts::PI / 3.0).abs() < 1e-12, "{angle}");
    }

    #[test]
    fn supersymmetric_spectra() {
        for (l, p, q) in [(6, 1, 6), (4, 1, 2), (4, 0, 1), (6, 1, 3)] {
            let pair = build_hofstadter_dirac(l, l, Flux::new(p, q).unwrap()).unwrap();
            let mut a = pair.square_plus().self_adjoint_eigenvalues(Side::Lower).unwrap();
            let mut b = pair.square_minus().self_adjoint_eigenvalues(Side::Lower).unwrap();
            a.retain(|v| *v > 1e-8);
            b.retain(|v| *v > 1e-8);
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn operator_is_hermitian(seed in 0u64..1000, n in 2usize..40, c in -2.0..2.0f64) {
            let g = LatticeGeometry::new(&[n, 3], Metric::Euclidean, Boundary::Periodic).unwrap();
            let op = build_schrodinger(&g, &Potential::IidUniform { a: c, b: c + 1.0, seed }).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let u: Vec<f64> = (0..op.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
            let v: Vec<f64> = (0..op.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
            let lhs: f64 = u.iter().zip(op.apply(&v)).map(|(a, b)| a * b).sum();
            let rhs: f64 = op.apply(&u).iter().zip(&v).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
            prop_assert!(op.matrix().is_symmetric());
        }

        #[test]
        fn heat_semigroup(seed in 0u64..1000, t1 in 0.0..2.0f64, t2 in 0.0..2.0f64) {
            let g = LatticeGeometry::new(&[40], Metric::Euclidean, Boundary::Dirichlet).unwrap();
            let op = build_schrodinger(&g, &Potential::IidUniform { a: 0.0, b: 1.0, seed }).unwrap();
            let heat = HeatApplier::new(&op, HeatMethod::Chebyshev).unwrap();
            let tol = 1e-10;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..40).map(|_| rng.random::<f64>() - 0.5).collect();
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let twice = heat.apply(t1, &heat.apply(t2, &v, tol).unwrap(), tol).unwrap();
            let once = heat.apply(t1 + t2, &v, tol).unwrap();
            let err = twice.iter().zip(&once).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(err <= 2.0 * tol * vn + 1e-14);
        }
    }
}
