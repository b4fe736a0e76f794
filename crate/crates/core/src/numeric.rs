//! Small numerical helpers shared across modules: compensated summation,
//! least squares for a handful of unknowns, Gauss–Legendre rules, scaled
//! modified Bessel functions and the Riemann zeta function.

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Fixed-order pairwise summation. The result depends only on the order of
/// `xs`, never on thread scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        let mut s = CompensatedSum::new();
        xs.iter().for_each(|&x| s.add(x));
        return s.value();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Least-squares solution of `design * coef ≈ rhs` via Householder QR.
/// `design` is given row-major as `rows[i][j]`.
pub fn least_squares(rows: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let m = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    assert!(m >= n && n > 0, "least squares needs at least as many rows as unknowns");
    // column scaling keeps badly scaled bases (e.g. 1/log N) well conditioned
    let scale: Vec<f64> = (0..n)
        .map(|j| {
            let s = rows.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let a = Mat::<f64>::from_fn(m, n, |i, j| rows[i][j] / scale[j]);
    let b = Mat::<f64>::from_fn(m, 1, |i, _| rhs[i]);
    let x = a.qr().solve_lstsq(&b);
    (0..n).map(|j| x[(j, 0)] / scale[j]).collect()
}

/// Ordinary least-squares line `y ≈ intercept + slope * x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Exponentially scaled modified Bessel functions `e^{-z} I_k(z)` for
/// `k = 0..=kmax`, `z ≥ 0`, by Miller's backward recurrence normalized with
/// `I_0 + 2 Σ I_k = e^z`.
pub fn scaled_bessel_i(kmax: usize, z: f64) -> Vec<f64> {
    assert!(z >= 0.0 && z.is_finite());
    let mut out = vec![0.0; kmax + 1];
    if z == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = kmax.max(z.ceil() as usize) + 40 + (12.0 * z.sqrt()).ceil() as usize;
    let mut next = 0.0_f64; // I_{k+1}
    let mut cur = 1e-300_f64; // I_k
    let mut norm = 0.0_f64;
    let mut vals = vec![0.0; kmax + 1];
    for k in (1..=start).rev() {
        let prev = (2.0 * k as f64 / z) * cur + next;
        next = cur;
        cur = prev;
        // cur now holds I_{k-1}
        if k - 1 <= kmax {
            vals[k - 1] = cur;
        }
        norm += if k - 1 == 0 { cur } else { 2.0 * cur };
        if cur.abs() > 1e250 {
            let r = 1e-250;
            cur *= r;
            next *= r;
            norm *= r;
            vals.iter_mut().for_each(|v| *v *= r);
        }
    }
    for (o, v) in out.iter_mut().zip(&vals) {
        *o = v / norm;
    }
    out
}

const BERNOULLI_2K: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Riemann zeta for real `s > 1`, Euler–Maclaurin with ten correction terms.
pub fn zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta requires s > 1");
    const M: usize = 16;
    let mf = M as f64;
    let mut head = CompensatedSum::new();
    for n in (1..M).rev() {
        head.add((n as f64).powf(-s));
    }
    let mut total = head.value() + mf.powf(1.0 - s) / (s - 1.0) + 0.5 * mf.powf(-s);
    // rising product s(s+1)...(s+2k-2) / (2k)!
    let mut rising = s;
    let mut factorial = 2.0;
    let mut power = mf.powf(-s - 1.0);
    for (k, b) in BERNOULLI_2K.iter().enumerate() {
        if k > 0 {
            let j = 2 * (k as u32 + 1);
            rising *= (s + j as f64 - 3.0) * (s + j as f64 - 2.0);
            factorial *= ((j - 1) * j) as f64;
            power /= mf * mf;
        }
        total += b / factorial * rising * power;
    }
    total
}

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
