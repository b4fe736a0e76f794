//! One function per subcommand: config in, artifacts out.

use std::path::PathBuf;

use serde_json::{json, Map, Value};

use super::config::Config;
use super::output::{num, Artifacts, Table};
use crate::abstractverify::{
    alt_inequality_fuzz, duhamel_fuzz, matrix_model_main_theorem, s_vs_epsilon_bridge, zeta_inequality_fuzz,
    DiagonalSpec, MatrixSpec,
};
use crate::dostrace::{
    ball_average_heat_trace, dixmier_side, epsilon_formula, kpm_dos_histogram, max_ball_radius, s_limit_formula,
    EstimatorResult,
};
use crate::error::{Error, Result};
use crate::growth::{
    check_grimaldi_ratio, check_property_d, shifted_surface_condition, ProfileSpec, DEFAULT_K, DEFAULT_RMAX,
};
use crate::lattice::{ball_volume, weight_field, Boundary, GeometrySpec, LatticeGeometry, Metric, DEFAULT_SITE_CAP};
use crate::operators::{
    build_hofstadter_dirac, build_lattice_laplacian, build_schrodinger, Flux, Potential, ProbeEnsemble, ProbeKind,
    SparseHermitianOperator,
};
use crate::roeindex::{pair_geometry, supertrace_weighted, zero_mode_index, SupertraceMode};
use crate::seqspace::{
    decreasing_rearrangement, dixmier_estimate, lorentz_quasinorm, read_sequence, zeta_inequality_check,
    ExtendedLimitSurrogate, QuasiNormParams,
};

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn surrogate(cfg: &Config, prefix: &str) -> Result<ExtendedLimitSurrogate> {
    let key = format!("{prefix}.surrogate");
    let fraction = cfg.f64_or(&format!("{prefix}.tail_fraction"), 0.2)?;
    let s = match cfg.str_or(&key, "log-extrapolation")?.as_str() {
        "log-extrapolation" => ExtendedLimitSurrogate::LogExtrapolation { order: 1 },
        "last-value" => ExtendedLimitSurrogate::LastValue,
        "tail-mean" => ExtendedLimitSurrogate::TailMean { fraction },
        "dyadic-agreement" => ExtendedLimitSurrogate::DyadicAgreement { tolerance: 1e-2 },
        other => return Err(Error::config(key, format!("unknown surrogate {other:?}"))),
    };
    s.validate().map_err(|e| Error::config(format!("{prefix}.tail_fraction"), e.to_string()))?;
    Ok(s)
}

fn estimator_table() -> Table {
    Table::new(&["estimator", "parameter", "value", "std_error", "converged"])
}

// ---------------------------------------------------------------- propd

pub fn propd(cfg: &Config) -> Result<Artifacts> {
    let kind = cfg.str_or("profile.kind", "power")?;
    let c = cfg.f64_or("profile.c", 1.0)?;
    let spec = match kind.as_str() {
        "power" => ProfileSpec::Power { d: cfg.f64_or("profile.d", 3.0)?, c },
        "stretched-exp" => ProfileSpec::StretchedExp { alpha: cfg.f64_or("profile.alpha", 0.5)?, c },
        "exp" => ProfileSpec::Exp { rate: cfg.f64_or("profile.rate", 1.0)? },
        "table" => ProfileSpec::Table {
            path: cfg
                .str_opt("profile.path")?
                .map(PathBuf::from)
                .ok_or_else(|| Error::config("profile.path", "required for a tabulated profile"))?,
        },
        other => return Err(Error::config("profile.kind", format!("unknown profile kind {other:?}"))),
    };
    let profile = spec
        .build()
        .map_err(|e| match e {
            Error::Parameter(msg) => Error::config("profile", msg),
            other => other,
        })?;
    let k = cfg.usize_or("propd.k", DEFAULT_K)?;
    let r_max = cfg.f64_or("propd.rmax", DEFAULT_RMAX as f64)?;
    let report = check_property_d(&profile, k, r_max)?;
    let grimaldi_r = cfg.f64_or("propd.grimaldi_r", 1.0)?;
    let grimaldi = check_grimaldi_ratio(&profile, grimaldi_r, r_max)?;
    let shift_h = cfg.f64_or("propd.shift_h", 1.0)?;
    let shifted = shifted_surface_condition(&profile, shift_h, k)?;

    let mut t = estimator_table();
    let verdict = |v: &crate::growth::TailVerdict| to_json(v).as_str().unwrap_or("").to_string();
    t.push(vec![
        "ell2-surface-ratio".into(),
        k.to_string(),
        num(report.ell2_partial_sum),
        String::new(),
        (verdict(&report.ell2_tail_verdict) == "summable").to_string(),
    ]);
    for (r, ratio) in report.derivative_ratios {
        t.push(vec!["surface-log-derivative".into(), num(r), num(ratio), String::new(), report.derivative_condition.to_string()]);
    }
    t.push(vec!["grimaldi-ratio".into(), num(grimaldi_r), num(grimaldi), String::new(), "true".into()]);
    t.push(vec![
        "shifted-surface-series".into(),
        num(shift_h),
        num(shifted.partial_sum),
        String::new(),
        (verdict(&shifted.verdict) == "summable").to_string(),
    ]);
    t.push(vec!["property-d".into(), k.to_string(), (report.passes as u8).to_string(), String::new(), report.passes.to_string()]);

    let mut rep = Map::new();
    rep.insert("profile".into(), to_json(&spec));
    rep.insert("property_d".into(), to_json(&report));
    rep.insert("passes".into(), json!(report.passes));
    rep.insert("grimaldi_ratio".into(), json!({"r": grimaldi_r, "r_max": r_max, "value": grimaldi}));
    rep.insert("shifted_surface".into(), to_json(&shifted));
    Ok(Artifacts {
        summary: vec![format!(
            "property-d profile={kind} passes={} ell2_tail={} derivative_limit={:.6e}",
            report.passes,
            verdict(&report.ell2_tail_verdict),
            report.derivative_ratio_limit
        )],
        results: Some(t),
        report: rep,
        ..Default::default()
    })
}

// ---------------------------------------------------------------- dos

pub fn geometry(cfg: &Config) -> Result<LatticeGeometry> {
    let dim = cfg.usize_or("geometry.dim", 1)?;
    let extents: Vec<usize> = cfg
        .f64_list_or("geometry.extents", &[4096.0])?
        .into_iter()
        .map(|x| {
            if x >= 1.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::config("geometry.extents", format!("extent must be a positive integer, got {x}")))
            }
        })
        .collect::<Result<_>>()?;
    let metric: Metric = enum_key(cfg, "geometry.metric", "euclidean")?;
    let boundary: Boundary = enum_key(cfg, "geometry.boundary", "periodic")?;
    if dim == 0 {
        return Err(Error::config("geometry.dim", "dimension must be at least 1"));
    }
    GeometrySpec { dim, extents, metric, boundary }.build(DEFAULT_SITE_CAP)
}

fn enum_key<T: serde::de::DeserializeOwned>(cfg: &Config, key: &str, default: &str) -> Result<T> {
    let raw = cfg.str_or(key, default)?;
    serde_json::from_value(Value::String(raw.clone()))
        .map_err(|_| Error::config(key, format!("unrecognized value {raw:?}")))
}

fn potential(cfg: &Config) -> Result<Option<Potential>> {
    let seed = cfg.u64_or("potential.seed", cfg.u64_or("seed", 0)?)?;
    Ok(match cfg.str_or("potential.kind", "none")?.as_str() {
        "none" => None,
        "iid-uniform" => Some(Potential::IidUniform {
            a: cfg.f64_or("potential.a", 0.0)?,
            b: cfg.f64_or("potential.b", 1.0)?,
            seed,
        }),
        "constant" => Some(Potential::Constant { c: cfg.f64_or("potential.c", 0.0)? }),
        "periodic" => Some(Potential::Periodic {
            values: cfg
                .f64_list_opt("potential.values")?
                .ok_or_else(|| Error::config("potential.values", "required for a periodic potential"))?,
        }),
        other => return Err(Error::config("potential.kind", format!("unknown potential {other:?}"))),
    })
}

/// Per-site heat trace of the free periodic Laplacian from its Fourier modes.
pub fn free_torus_oracle(geom: &LatticeGeometry, t: f64) -> f64 {
    geom.extents()
        .iter()
        .map(|&l| {
            (0..l)
                .map(|k| (-t * (2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / l as f64).cos())).exp())
                .sum::<f64>()
                / l as f64
        })
        .product()
}

const ALL_ESTIMATORS: [&str; 4] = ["ball-average", "epsilon", "s-limit", "dixmier"];

fn default_radii(geom: &LatticeGeometry) -> Vec<f64> {
    let top = max_ball_radius(geom);
    let mut radii: Vec<f64> = [0.125, 0.25, 0.5, 1.0].iter().map(|f| (f * top).floor()).collect();
    *radii.last_mut().unwrap() = top;
    radii.dedup();
    radii.retain(|r| *r > 0.0 || top == 0.0);
    radii
}

pub fn dos(cfg: &Config) -> Result<Artifacts> {
    let geom = geometry(cfg)?;
    let pot = potential(cfg)?;
    let op: SparseHermitianOperator = match &pot {
        None => build_lattice_laplacian(&geom),
        Some(p) => build_schrodinger(&geom, p)?,
    };
    let ts = cfg.f64_list_or("dos.t", &[1.0])?;
    if ts.is_empty() || ts.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::config("dos.t", "t values must be ≥ 0"));
    }
    let mut names = cfg.str_list_or("dos.estimators", &["all"])?;
    if names.iter().any(|n| n == "all") {
        names = ALL_ESTIMATORS.iter().map(|s| s.to_string()).collect();
    }
    if let Some(bad) = names.iter().find(|n| !ALL_ESTIMATORS.contains(&n.as_str())) {
        return Err(Error::config("dos.estimators", format!("unknown estimator {bad:?}")));
    }
    let radii = match cfg.f64_list_opt("dos.radii")? {
        Some(r) => r,
        None => default_radii(&geom),
    };
    let eps: Vec<f64> = radii.iter().map(|&r| 1.0 / (1.0 + ball_volume(&geom, r) as f64)).collect();
    let s_grid = cfg.f64_list_or("dos.s_grid", &[1.4, 1.2, 1.1, 1.05])?;
    let sur = surrogate(cfg, "dos")?;
    let weights = weight_field(&geom);
    let oracle_available = pot.is_none() && geom.boundary() == Boundary::Periodic;

    let mut table = estimator_table();
    let mut summary = Vec::new();
    let mut runs = Vec::new();
    for &t in &ts {
        let oracle = oracle_available.then(|| free_torus_oracle(&geom, t));
        for name in &names {
            let res: EstimatorResult = match name.as_str() {
                "ball-average" => ball_average_heat_trace(&op, &geom, t, &radii)?,
                "epsilon" => epsilon_formula(&op, &geom, &weights, t, &eps)?,
                "s-limit" => s_limit_formula(&op, &weights, t, &s_grid)?,
                _ => dixmier_side(&op, &weights, t, sur)?,
            };
            table.push(vec![
                name.clone(),
                num(t),
                num(res.value),
                num(res.error_estimate),
                res.converged.to_string(),
            ]);
            let rel = oracle.map(|o| (res.value - o).abs() / o);
            summary.push(match rel {
                Some(r) => format!("{name} t={t} value={:.6} converged={} rel_error={r:.3e}", res.value, res.converged),
                None => format!("{name} t={t} value={:.6} converged={}", res.value, res.converged),
            });
            runs.push(json!({
                "t": t,
                "oracle": oracle,
                "relative_error": rel,
                "result": to_json(&res),
            }));
        }
    }
    let mut rep = Map::new();
    rep.insert(
        "geometry".into(),
        json!({"extents": geom.extents(), "metric": to_json(&geom.metric()), "boundary": to_json(&geom.boundary())}),
    );
    rep.insert("potential".into(), pot.as_ref().map(to_json).unwrap_or(Value::Null));
    rep.insert("radii".into(), json!(radii));
    rep.insert("epsilon_grid".into(), json!(eps));
    rep.insert("s_grid".into(), json!(s_grid));
    rep.insert("surrogate".into(), json!(sur.name()));
    rep.insert("estimates".into(), Value::Array(runs));

    let mut histogram = None;
    if cfg.bool_or("dos.kpm", false)? {
        let probes = ProbeEnsemble {
            n_probes: cfg.usize_or("dos.kpm_probes", 16)?,
            seed: cfg.u64_or("seed", 0)?,
            kind: ProbeKind::Rademacher,
        };
        let measure = kpm_dos_histogram(
            &op,
            &geom,
            cfg.usize_or("dos.kpm_moments", 256)?,
            probes,
            cfg.usize_or("dos.kpm_bins", 64)?,
            None,
        )?
        .with_laplace_samples(&ts)?;
        let mut h = Table::new(&["bin_lo", "bin_hi", "mass"]);
        for (i, m) in measure.masses.iter().enumerate() {
            h.push(vec![num(measure.bin_edges[i]), num(measure.bin_edges[i + 1]), num(*m)]);
        }
        summary.push(format!(
            "kpm moments={} probes={} total_mass={:.6}",
            measure.metadata.n_moments,
            measure.metadata.n_probes,
            measure.total_mass()
        ));
        rep.insert("kpm".into(), to_json(&measure));
        histogram = Some(h);
    }
    Ok(Artifacts {
        results: Some(table),
        histogram,
        report: rep,
        summary,
    })
}

// ---------------------------------------------------------------- sequences

fn sequence(cfg: &Config, prefix: &str) -> Result<(String, Vec<f64>)> {
    let input_key = format!("{prefix}.input");
    if let Some(path) = cfg.str_opt(&input_key)? {
        let values = read_sequence(std::path::Path::new(&path))
            .map_err(|e| Error::config(input_key.clone(), e.to_string()))?;
        return Ok((path, values));
    }
    let n = cfg.usize_or(&format!("{prefix}.n"), 1_000_000)?;
    let kind = cfg.str_or(&format!("{prefix}.sequence"), "harmonic")?;
    let values = match kind.as_str() {
        "harmonic" => (0..n).map(|k| 1.0 / (k + 1) as f64).collect(),
        "harmonic-squared" => (0..n).map(|k| 1.0 / ((k + 1) as f64).powi(2)).collect(),
        "constant" => vec![1.0; n],
        other => {
            return Err(Error::config(format!("{prefix}.sequence"), format!("unknown sequence {other:?}")))
        }
    };
    Ok((kind, values))
}

pub fn dixmier(cfg: &Config) -> Result<Artifacts> {
    let (source, values) = sequence(cfg, "dixmier")?;
    let sur = surrogate(cfg, "dixmier")?;
    let est = dixmier_estimate(&crate::seqspace::order_eigenvalues(&values), sur)?;
    let mut t = estimator_table();
    t.push(vec![
        "dixmier".into(),
        values.len().to_string(),
        num(est.value),
        num(est.spread),
        est.converged.to_string(),
    ]);
    let dyadic: Vec<(usize, f64)> = (0..)
        .map(|j| (1usize << j) - 1)
        .take_while(|&i| i < est.means.len())
        .map(|i| (i, est.means[i]))
        .collect();
    let mut rep = Map::new();
    rep.insert("source".into(), json!(source));
    rep.insert("length".into(), json!(values.len()));
    rep.insert("value".into(), json!(est.value));
    rep.insert("converged".into(), json!(est.converged));
    rep.insert("spread".into(), json!(est.spread));
    rep.insert("tolerance".into(), json!(est.tolerance));
    rep.insert("surrogate".into(), json!(sur.name()));
    rep.insert("dyadic_means".into(), json!(dyadic));
    Ok(Artifacts {
        summary: vec![format!(
            "dixmier source={source} n={} value={:.6} converged={}",
            values.len(),
            est.value,
            est.converged
        )],
        results: Some(t),
        report: rep,
        ..Default::default()
    })
}

pub fn seq(cfg: &Config) -> Result<Artifacts> {
    let (source, values) = sequence(cfg, "seq")?;
    let seqn = decreasing_rearrangement(&values);
    let p = cfg.f64_or("seq.p", 1.0)?;
    let q = cfg.f64_or("seq.q", f64::INFINITY)?;
    let params = QuasiNormParams::new(p, q).map_err(|e| Error::config("seq.p", e.to_string()))?;
    let norm = lorentz_quasinorm(&seqn, params);
    let zq = cfg.f64_or("seq.zeta_q", 1.0)?;
    let zeta = zeta_inequality_check(&seqn, zq).map_err(|e| Error::config("seq.zeta_q", e.to_string()))?;
    let mut t = Table::new(&["quantity", "parameter", "value"]);
    t.push(vec!["lorentz-quasinorm".into(), format!("p={p};q={q}"), num(norm)]);
    t.push(vec!["zeta-lhs".into(), format!("q={zq}"), num(zeta.lhs)]);
    t.push(vec!["zeta-rhs".into(), format!("q={zq}"), num(zeta.rhs)]);
    t.push(vec!["zeta-holds".into(), format!("q={zq}"), zeta.holds.to_string()]);
    let mut rep = Map::new();
    rep.insert("source".into(), json!(source));
    rep.insert("length".into(), json!(values.len()));
    rep.insert("quasinorm".into(), json!({"p": to_json(&p), "q": to_json(&q), "value": norm}));
    rep.insert("zeta".into(), to_json(&zeta));
    Ok(Artifacts {
        summary: vec![
            format!("lorentz-quasinorm p={p} q={q} value={norm:.6e}"),
            format!("zeta q={zq} lhs={:.6e} rhs={:.6e} holds={}", zeta.lhs, zeta.rhs, zeta.holds),
        ],
        results: Some(t),
        report: rep,
        ..Default::default()
    })
}

// ---------------------------------------------------------------- verify

fn diagonal_spec(cfg: &Config, key: &str, default: &str) -> Result<DiagonalSpec> {
    Ok(match cfg.str_or(key, default)?.as_str() {
        "identity" => DiagonalSpec::Identity,
        "harmonic" => DiagonalSpec::Harmonic,
        s if s.starts_with("finite-rank:") => DiagonalSpec::FiniteRank {
            rank: s["finite-rank:".len()..]
                .parse()
                .map_err(|_| Error::config(key, format!("bad rank in {s:?}")))?,
        },
        s if s.starts_with("convergent:") => {
            let limit = s["convergent:".len()..]
                .parse()
                .map_err(|_| Error::config(key, format!("bad limit in {s:?}")))?;
            DiagonalSpec::Convergent { limit, amplitude: 0.3 }
        }
        other => return Err(Error::config(key, format!("unknown diagonal spec {other:?}"))),
    })
}

pub fn verify(cfg: &Config, testbed: &str) -> Result<Artifacts> {
    let seed = cfg.u64_or("seed", 1)?;
    let mut t = Table::new(&["testbed", "parameter", "metric", "value"]);
    let mut rep = Map::new();
    let mut summary = Vec::new();
    rep.insert("testbed".into(), json!(testbed));
    match testbed {
        "alt" | "zeta" => {
            let trials = cfg.usize_or("verify.trials", 1000)?;
            let n_max = cfg.usize_or("verify.n_max", 64)?;
            let (key, default): (&str, &[f64]) = if testbed == "alt" {
                ("verify.r", &[2.0])
            } else {
                ("verify.q", &[1.0])
            };
            let mut runs = Vec::new();
            for x in cfg.f64_list_or(key, default)? {
                let r = if testbed == "alt" {
                    alt_inequality_fuzz(n_max, trials, x, seed)
                } else {
                    zeta_inequality_fuzz(n_max, trials, x, seed)
                }
                .map_err(|e| Error::config(key, e.to_string()))?;
                let label = format!("{}={x}", &key["verify.".len()..]);
                t.push(vec![testbed.into(), label.clone(), "violations".into(), r.violations.to_string()]);
                t.push(vec![testbed.into(), label.clone(), "worst_ratio".into(), num(r.worst_ratio)]);
                summary.push(format!(
                    "{testbed} {label} trials={} violations={} worst_ratio={:.6}",
                    r.trials, r.violations, r.worst_ratio
                ));
                runs.push(json!({"parameter": x, "report": to_json(&r)}));
            }
            rep.insert("runs".into(), Value::Array(runs));
        }
        "main" => {
            let n = cfg.usize_or("verify.n", 4096)?;
            let time = cfg.f64_or("verify.t", 1.0)?;
            let spec = match cfg.str_or("verify.spec", "free-laplacian")?.as_str() {
                "free-laplacian" => MatrixSpec::FreeLaplacian,
                "random-sym" => MatrixSpec::RandomSym { seed },
                "zero" => MatrixSpec::Zero,
                "scalar" => MatrixSpec::Scalar { c: cfg.f64_or("verify.c", 1.0)? },
                other => return Err(Error::config("verify.spec", format!("unknown spec {other:?}"))),
            };
            let r = matrix_model_main_theorem(n, spec, time)?;
            let label = format!("n={n};t={time}");
            for (m, v) in [("dixmier", r.dixmier_value), ("epsilon", r.epsilon_value), ("gap", r.gap)] {
                t.push(vec!["main".into(), label.clone(), m.into(), num(v)]);
            }
            summary.push(format!(
                "main spec={} dixmier={:.6} epsilon={:.6} gap={:.3e}",
                spec.name(),
                r.dixmier_value,
                r.epsilon_value,
                r.gap
            ));
            rep.insert("report".into(), to_json(&r));
        }
        "bridge" => {
            let n = cfg.usize_or("verify.n", 100_000)?;
            let a = diagonal_spec(cfg, "verify.a", "identity")?;
            let b = diagonal_spec(cfg, "verify.b", "harmonic")?;
            let s_grid = cfg.f64_list_or("verify.s_grid", &[1.4, 1.2, 1.1, 1.05])?;
            let eps = cfg.f64_list_or("verify.eps_grid", &[1e-2, 1e-3, 1e-4, 1e-5])?;
            let r = s_vs_epsilon_bridge(n, &a, &b, &s_grid, &eps)?;
            for (m, v) in [("s_value", r.s_value), ("eps_value", r.eps_value), ("gap", r.gap), ("scale", r.scale)] {
                t.push(vec!["bridge".into(), format!("n={n}"), m.into(), num(v)]);
            }
            summary.push(format!(
                "bridge s_value={:.6} eps_value={:.6} gap={:.3e}",
                r.s_value, r.eps_value, r.gap
            ));
            rep.insert("report".into(), to_json(&r));
        }
        "duhamel" => {
            let r = duhamel_fuzz(
                cfg.usize_or("verify.trials", 100)?,
                cfg.usize_or("verify.n", 16)?,
                cfg.f64_or("verify.t", 1.0)?,
                cfg.usize_or("verify.nodes", 32)?,
                seed,
            )?;
            t.push(vec!["duhamel".into(), format!("n={};nodes={}", r.n, r.nodes), "max_residual".into(), num(r.max_residual)]);
            summary.push(format!("duhamel trials={} max_residual={:.3e}", r.trials, r.max_residual));
            rep.insert("report".into(), to_json(&r));
        }
        other => {
            return Err(Error::config(
                "verify",
                format!("unknown testbed {other:?} (alt, zeta, bridge, main, duhamel)"),
            ))
        }
    }
    Ok(Artifacts {
        results: Some(t),
        report: rep,
        summary,
        ..Default::default()
    })
}

// ---------------------------------------------------------------- index

fn parse_flux(raw: &str) -> Result<Flux> {
    let bad = || Error::config("index.flux", format!("expected p/q, got {raw:?}"));
    let (p, q) = raw.split_once('/').ok_or_else(bad)?;
    Flux::new(p.trim().parse().map_err(|_| bad())?, q.trim().parse().map_err(|_| bad())?)
        .map_err(|e| Error::config("index.flux", e.to_string()))
}

pub fn index(cfg: &Config) -> Result<Artifacts> {
    let lx = cfg.usize_or("index.lx", 6)?;
    let ly = cfg.usize_or("index.ly", lx)?;
    let flux = parse_flux(&cfg.str_or("index.flux", "1/6")?)?;
    let ts = cfg.f64_list_or("index.t", &[0.5, 1.0, 2.0])?;
    let pair = build_hofstadter_dirac(lx, ly, flux)?;
    let geom = pair_geometry(&pair)?;
    let mode = match cfg.str_or("index.mode", "ball-average")?.as_str() {
        "ball-average" => SupertraceMode::BallAverage {
            radii: match cfg.f64_list_opt("index.radii")? {
                Some(r) => r,
                None => default_radii(&geom),
            },
        },
        "dixmier" => SupertraceMode::Dixmier {
            weights: weight_field(&geom),
            surrogate: surrogate(cfg, "index")?,
        },
        other => return Err(Error::config("index.mode", format!("unknown mode {other:?}"))),
    };
    let st = supertrace_weighted(&pair, &ts, &geom, &mode)?;
    let zm = zero_mode_index(&pair)?;
    let mut t = Table::new(&["t", "supertrace", "mode", "deviation"]);
    for (tv, v) in st.t_values.iter().zip(&st.values) {
        t.push(vec![num(*tv), num(*v), st.mode.clone(), num(st.max_relative_deviation)]);
    }
    let density = zm.index as f64 / (lx * ly) as f64;
    let mut rep = Map::new();
    rep.insert("lx".into(), json!(lx));
    rep.insert("ly".into(), json!(ly));
    rep.insert("flux".into(), json!({"p": flux.p, "q": flux.q}));
    rep.insert("zero_mode_index".into(), to_json(&zm));
    rep.insert("index_density".into(), json!(density));
    rep.insert("supertrace".into(), to_json(&st));
    Ok(Artifacts {
        summary: vec![
            format!("zero-mode-index value={} ambiguous={}", zm.index, zm.ambiguous),
            format!(
                "supertrace mode={} per_site={:?} density={density:.6} deviation={:.3e}",
                st.mode, st.values, st.max_relative_deviation
            ),
        ],
        results: Some(t),
        report: rep,
        ..Default::default()
    })
}
