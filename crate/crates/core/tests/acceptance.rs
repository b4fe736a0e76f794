//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use faer::Mat;

use dostrace::abstractverify::{alt_inequality_fuzz, duhamel_fuzz, s_vs_epsilon_bridge, zeta_inequality_fuzz, DiagonalSpec};
use dostrace::dostrace::{ball_average_heat_trace, dixmier_side, epsilon_formula, seed_stability};
use dostrace::growth::{check_property_d, ProfileSpec, DEFAULT_K, DEFAULT_RMAX};
use dostrace::lattice::{ball_volume, weight_field, Boundary, LatticeGeometry, Metric};
use dostrace::operators::{build_hofstadter_dirac, build_lattice_laplacian, build_schrodinger, duhamel_residual, Flux, Potential};
use dostrace::roeindex::{pair_geometry, supertrace_weighted, zero_mode_index, SupertraceMode};
use dostrace::seqspace::{dixmier_estimate, ExtendedLimitSurrogate};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// (1/N) Σ_k exp(-t(2 - 2cos(2πk/N))), summed directly.
fn ring_oracle(n: usize, t: f64) -> f64 {
    (0..n)
        .map(|k| (-t * (2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())).exp())
        .sum::<f64>()
        / n as f64
}

fn three_way() -> Outcome {
    let g = LatticeGeometry::new(&[4096], Metric::Euclidean, Boundary::Periodic).map_err(|e| e.to_string())?;
    let op = build_lattice_laplacian(&g);
    let w = weight_field(&g);
    let radii = [128.0, 256.0, 512.0, 1024.0];
    let eps: Vec<f64> = radii.iter().map(|&r| 1.0 / (1.0 + ball_volume(&g, r) as f64)).collect();
    let mut detail = Vec::new();
    let mut ok = true;
    for t in [0.5, 1.0, 2.0] {
        let oracle = ring_oracle(4096, t);
        let ball = ball_average_heat_trace(&op, &g, t, &radii).map_err(|e| e.to_string())?;
        let cut = epsilon_formula(&op, &g, &w, t, &eps).map_err(|e| e.to_string())?;
        let dix = dixmier_side(&op, &w, t, ExtendedLimitSurrogate::default()).map_err(|e| e.to_string())?;
        let rel = |v: f64| (v - oracle).abs() / oracle;
        ok &= rel(ball.value) < 0.02 && rel(cut.value) < 0.02 && rel(dix.value) < 0.05;
        detail.push(format!(
            "t={t}: ball {:.1e} eps {:.1e} dixmier {:.1e}",
            rel(ball.value),
            rel(cut.value),
            rel(dix.value)
        ));
    }
    check(ok, format!("relative errors {}", detail.join("; ")))
}

fn bridge() -> Outcome {
    let r = s_vs_epsilon_bridge(
        100_000,
        &DiagonalSpec::Identity,
        &DiagonalSpec::Harmonic,
        &[1.4, 1.2, 1.1, 1.05],
        &[1e-2, 1e-3, 1e-4, 1e-5],
    )
    .map_err(|e| e.to_string())?;
    check(
        (r.s_value - 1.0).abs() <= 0.02 && (r.eps_value - 1.0).abs() <= 0.02,
        format!("s-family {:.4}, eps-family {:.4}", r.s_value, r.eps_value),
    )
}

fn property_d() -> Outcome {
    let cases = [
        (ProfileSpec::Power { d: 3.0, c: 1.0 }, true),
        (ProfileSpec::StretchedExp { alpha: 0.4, c: 1.0 }, true),
        (ProfileSpec::Exp { rate: 2.0 }, false),
    ];
    let mut verdicts = Vec::new();
    let mut ok = true;
    for (spec, expected) in cases {
        let profile = spec.build().map_err(|e| e.to_string())?;
        let rep = check_property_d(&profile, DEFAULT_K, DEFAULT_RMAX).map_err(|e| e.to_string())?;
        ok &= rep.passes == expected;
        verdicts.push(format!("{spec:?} -> {}", rep.passes));
    }
    check(ok, verdicts.join(", "))
}

fn duhamel() -> Outcome {
    let p = Mat::from_fn(2, 2, |i, j| [[0.0, 1.0], [1.0, 0.0]][i][j]);
    let w = Mat::from_fn(2, 2, |i, j| [[1.0, 0.0], [0.0, 0.0]][i][j]);
    let small = duhamel_residual(&p, &w, 1.0, 32).map_err(|e| e.to_string())?;
    let fuzz = duhamel_fuzz(100, 16, 1.0, 32, 7).map_err(|e| e.to_string())?;
    check(
        small < 1e-10 && fuzz.max_residual < 1e-8,
        format!("2x2 residual {small:.1e}, worst of 100 16x16 {:.1e}", fuzz.max_residual),
    )
}

fn fuzzing() -> Outcome {
    let mut worst = Vec::new();
    let mut violations = 0;
    for r in [1.5, 2.0, 3.0] {
        let rep = alt_inequality_fuzz(64, 1000, r, 11).map_err(|e| e.to_string())?;
        violations += rep.violations;
        worst.push(format!("alt r={r} {:.3}", rep.worst_ratio));
    }
    for q in [0.5, 1.0, 2.0] {
        let rep = zeta_inequality_fuzz(64, 1000, q, 13).map_err(|e| e.to_string())?;
        violations += rep.violations;
        worst.push(format!("zeta q={q} {:.3}", rep.worst_ratio));
    }
    check(violations == 0, format!("{violations} violations; worst ratios {}", worst.join(", ")))
}

fn roe_index() -> Outcome {
    let pair = build_hofstadter_dirac(6, 6, Flux::new(1, 6).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let zm = zero_mode_index(&pair).map_err(|e| e.to_string())?;
    let geom = pair_geometry(&pair).map_err(|e| e.to_string())?;
    let mode = SupertraceMode::BallAverage { radii: vec![1.0, 1.5] };
    let st = supertrace_weighted(&pair, &[0.5, 1.0, 2.0], &geom, &mode).map_err(|e| e.to_string())?;
    let per_site_ok = st.values.iter().all(|v| (v - 1.0 / 6.0).abs() <= 0.05 / 6.0);
    check(
        zm.index == 6 && !zm.ambiguous && per_site_ok && st.max_relative_deviation < 1e-2,
        format!(
            "index {}, per-site {:?}, t-deviation {:.1e}",
            zm.index, st.values, st.max_relative_deviation
        ),
    )
}

fn dixmier_units() -> Outcome {
    let n = 1_000_000usize;
    let harmonic: Vec<f64> = (0..n).map(|k| 1.0 / (k + 1) as f64).collect();
    let squared: Vec<f64> = (0..n).map(|k| 1.0 / ((k + 1) as f64).powi(2)).collect();
    let a = dixmier_estimate(&harmonic, ExtendedLimitSurrogate::default()).map_err(|e| e.to_string())?;
    let b = dixmier_estimate(&squared, ExtendedLimitSurrogate::default()).map_err(|e| e.to_string())?;
    let bound = 2.0 / (2.0 + n as f64).ln();
    check(
        (a.value - 1.0).abs() <= 1e-2 && b.value <= bound,
        format!("harmonic {:.5}, squared {:.2e} (bound {bound:.3e})", a.value, b.value),
    )
}

fn seed_stability_check() -> Outcome {
    let g = LatticeGeometry::new(&[4096], Metric::Euclidean, Boundary::Periodic).map_err(|e| e.to_string())?;
    let radii = [128.0, 256.0, 512.0, 1024.0];
    let run = |seed| {
        let op = build_schrodinger(&g, &Potential::IidUniform { a: 0.0, b: 1.0, seed })?;
        ball_average_heat_trace(&op, &g, 1.0, &radii)
    };
    let a = run(1).map_err(|e| e.to_string())?;
    let b = run(2).map_err(|e| e.to_string())?;
    let s = seed_stability(&a, &b);
    check(
        s.agree,
        format!(
            "values {:.5} / {:.5}, difference {:.1e}, combined error {:.1e}",
            a.value, b.value, s.difference, s.combined_error
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_dostrace"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("DOSTRACE_OUT")
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&status.stderr)))
    }
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [&[&str]; 3] = [
        &["dos", "--geom", "d=1,N=4096,periodic", "--t", "1", "--potential", "iid-uniform", "--seed", "5", "--estimators", "ball-average,epsilon", "--kpm"],
        &["verify", "alt", "--trials", "1000", "--r", "1.5,2,3"],
        &["index", "--lx", "6", "--ly", "6", "--flux", "1/6"],
    ];
    let mut compared = 0;
    for (i, args) in runs.iter().enumerate() {
        let a = root.path().join(format!("{i}a"));
        let b = root.path().join(format!("{i}b"));
        run_cli(&a, &[args, &["--workers", "1"][..]].concat())?;
        run_cli(&b, &[args, &["--workers", "2"][..]].concat())?;
        for name in ["results.csv", "histogram.csv"] {
            let (pa, pb) = (a.join(name), b.join(name));
            if !pa.exists() {
                continue;
            }
            let (x, y) = (std::fs::read(&pa).map_err(|e| e.to_string())?, std::fs::read(&pb).map_err(|e| e.to_string())?);
            if x != y {
                return Err(format!("{} differs between repeated runs of {args:?}", name));
            }
            compared += 1;
        }
    }
    check(compared == 4, format!("{compared} CSV files byte-identical across repeated runs"))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("three-way heat trace agreement", Duration::from_secs(120), three_way),
        ("s/epsilon bridge", Duration::from_secs(30), bridge),
        ("growth classification", Duration::from_secs(5), property_d),
        ("duhamel residual", Duration::from_secs(10), duhamel),
        ("inequality fuzzing", Duration::from_secs(120), fuzzing),
        ("magnetic index", Duration::from_secs(60), roe_index),
        ("dixmier unit properties", Duration::from_secs(10), dixmier_units),
        ("seed stability", Duration::from_secs(60), seed_stability_check),
        ("determinism", Duration::from_secs(600), determinism),
    ];
    let mut failures = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if elapsed <= *budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over time budget")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!(
            "{status} [{}] {name}: {detail} ({:.1}s / {}s)",
            i + 1,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
