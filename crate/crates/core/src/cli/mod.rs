//! Command-line front end: argument parsing, config layering, artifact output.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use self::config::{parse_value, Config};
use self::output::{write_artifacts, Artifacts, Provenance};
use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CAPABILITY: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "DOSTRACE_OUT";

#[derive(Debug, Parser)]
#[command(name = "dostrace", version, about = "Weighted traces, density of states and index estimates on lattices")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the growth conditions for a volume profile.
    Propd(PropdArgs),
    /// Heat-trace estimators on a lattice operator.
    Dos(DosArgs),
    /// Dixmier trace of a singular-value sequence.
    Dixmier(DixmierArgs),
    /// Randomized and model-based checks of the trace identities.
    Verify(VerifyArgs),
    /// Weighted supertrace and zero-mode index of a magnetic Dirac pair.
    Index(IndexArgs),
    /// Quasinorm and zeta-inequality diagnostics for a sequence.
    Seq(SeqArgs),
}

#[derive(Debug, Args)]
struct PropdArgs {
    /// power, stretched-exp, exp or table.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    path: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    rmax: Option<f64>,
}

#[derive(Debug, Args)]
struct DosArgs {
    /// Geometry shorthand such as `d=1,N=4096,periodic` or `d=2,N=64,max,open`.
    #[arg(long)]
    geom: Option<String>,
    /// Comma-separated heat times.
    #[arg(long)]
    t: Option<String>,
    /// `all` or a comma list of ball-average, epsilon, s-limit, dixmier.
    #[arg(long)]
    estimators: Option<String>,
    /// none, iid-uniform, constant or periodic.
    #[arg(long)]
    potential: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated ball radii.
    #[arg(long)]
    radii: Option<String>,
    /// Also compute a KPM density-of-states histogram.
    #[arg(long)]
    kpm: bool,
}

#[derive(Debug, Args)]
struct DixmierArgs {
    #[arg(long)]
    input: Option<String>,
    /// harmonic, harmonic-squared or constant.
    #[arg(long)]
    sequence: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    surrogate: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// alt, zeta, bridge, main or duhamel.
    testbed: String,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    spec: Option<String>,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[arg(long)]
    lx: Option<usize>,
    #[arg(long)]
    ly: Option<usize>,
    /// Flux per plaquette as `p/q`.
    #[arg(long)]
    flux: Option<String>,
    #[arg(long)]
    t: Option<String>,
    /// ball-average or dixmier.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Debug, Args)]
struct SeqArgs {
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    sequence: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
}

/// Collects explicit flags as `(key, value)` overrides.
struct Flags(Vec<(&'static str, toml::Value)>);

impl Flags {
    fn num<T: Into<f64>>(&mut self, key: &'static str, v: Option<T>) {
        if let Some(v) = v {
            self.0.push((key, toml::Value::Float(v.into())));
        }
    }

    fn int(&mut self, key: &'static str, v: Option<usize>) {
        if let Some(v) = v {
            self.0.push((key, toml::Value::Integer(v as i64)));
        }
    }

    fn string(&mut self, key: &'static str, v: Option<String>) {
        if let Some(v) = v {
            self.0.push((key, toml::Value::String(v)));
        }
    }

    fn raw(&mut self, key: &'static str, v: Option<String>) {
        if let Some(v) = v {
            self.0.push((key, parse_value(&v)));
        }
    }
}

/// Expands `d=2,N=64,max,open` into geometry keys.
fn geometry_shorthand(raw: &str, flags: &mut Flags) -> Result<()> {
    let mut dim = None;
    let mut extent = None;
    for token in raw.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match token.split_once('=') {
            Some(("d", v)) => dim = Some(v.parse::<usize>().map_err(|_| Error::config("geometry.dim", format!("bad dimension {v:?}")))?),
            Some(("N", v)) | Some(("L", v)) => {
                extent = Some(v.parse::<usize>().map_err(|_| Error::config("geometry.extents", format!("bad extent {v:?}")))?)
            }
            Some((k, _)) => return Err(Error::config("geometry", format!("unknown geometry field {k:?}"))),
            None => match token {
                "periodic" | "open" => flags.string("geometry.boundary", Some(token.into())),
                "euclidean" | "max" | "manhattan" => flags.string("geometry.metric", Some(token.into())),
                other => return Err(Error::config("geometry", format!("unknown geometry token {other:?}"))),
            },
        }
    }
    let dim = dim.unwrap_or(1);
    flags.int("geometry.dim", Some(dim));
    if let Some(n) = extent {
        flags.0.push((
            "geometry.extents",
            toml::Value::Array(vec![toml::Value::Integer(n as i64); dim]),
        ));
    }
    Ok(())
}

fn command_flags(cmd: Command) -> Result<(&'static str, Option<String>, Flags)> {
    let mut f = Flags(Vec::new());
    let mut testbed = None;
    let name = match cmd {
        Command::Propd(a) => {
            f.string("profile.kind", a.profile);
            f.num("profile.d", a.d);
            f.num("profile.c", a.c);
            f.num("profile.alpha", a.alpha);
            f.num("profile.rate", a.rate);
            f.string("profile.path", a.path);
            f.int("propd.k", a.k);
            f.num("propd.rmax", a.rmax);
            "propd"
        }
        Command::Dos(a) => {
            if let Some(g) = &a.geom {
                geometry_shorthand(g, &mut f)?;
            }
            f.raw("dos.t", a.t);
            f.string("dos.estimators", a.estimators);
            f.string("potential.kind", a.potential);
            f.int("seed", a.seed.map(|s| s as usize));
            f.raw("dos.radii", a.radii);
            if a.kpm {
                f.0.push(("dos.kpm", toml::Value::Boolean(true)));
            }
            "dos"
        }
        Command::Dixmier(a) => {
            f.string("dixmier.input", a.input);
            f.string("dixmier.sequence", a.sequence);
            f.int("dixmier.n", a.n);
            f.string("dixmier.surrogate", a.surrogate);
            "dixmier"
        }
        Command::Verify(a) => {
            testbed = Some(a.testbed);
            f.int("verify.trials", a.trials);
            f.raw("verify.r", a.r);
            f.raw("verify.q", a.q);
            f.int("verify.n", a.n);
            f.int("verify.n_max", a.n_max);
            f.int("seed", a.seed.map(|s| s as usize));
            f.num("verify.t", a.t);
            f.string("verify.spec", a.spec);
            "verify"
        }
        Command::Index(a) => {
            f.int("index.lx", a.lx);
            f.int("index.ly", a.ly);
            f.string("index.flux", a.flux);
            f.raw("index.t", a.t);
            f.string("index.mode", a.mode);
            "index"
        }
        Command::Seq(a) => {
            f.string("seq.input", a.input);
            f.string("seq.sequence", a.sequence);
            f.int("seq.n", a.n);
            f.num("seq.p", a.p);
            f.num("seq.q", a.q);
            "seq"
        }
    };
    Ok((name, testbed, f))
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Parameter(_) | Error::Geometry(_) | Error::InsufficientData(_) | Error::Gauge(_) => {
            EXIT_INVALID
        }
        Error::Capability(_) => EXIT_CAPABILITY,
        _ => EXIT_FAILURE,
    }
}

fn execute(cli: Cli) -> Result<Vec<String>> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let (name, testbed, flags) = command_flags(cli.command)?;
    for (k, v) in flags.0 {
        cfg.set(k, v)?;
    }
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(w) = cli.workers {
        cfg.set("workers", toml::Value::Integer(w as i64))?;
    }
    if let Some(o) = &cli.out {
        cfg.set("output.dir", toml::Value::String(o.display().to_string()))?;
    }
    let out_dir = match std::env::var_os(OUT_ENV) {
        Some(d) if cli.out.is_none() => PathBuf::from(d),
        _ => PathBuf::from(cfg.str_or("output.dir", "out")?),
    };
    // Dense factorizations split their work by thread count, which changes
    // the last bits of the result; keep them sequential so output does not
    // depend on `workers`.
    faer::set_global_parallelism(faer::Par::Seq);
    let default_workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let workers = cfg.usize_or("workers", default_workers)?.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;

    let artifacts: Artifacts = pool.install(|| match name {
        "propd" => commands::propd(&cfg),
        "dos" => commands::dos(&cfg),
        "dixmier" => commands::dixmier(&cfg),
        "verify" => commands::verify(&cfg, testbed.as_deref().unwrap_or_default()),
        "index" => commands::index(&cfg),
        _ => commands::seq(&cfg),
    })?;

    // Output location and thread count do not change results, so they stay
    // out of the provenance hash.
    let mut hashed = cfg.clone();
    hashed.remove("output.dir");
    hashed.remove("workers");
    let command = match &testbed {
        Some(t) => format!("{name} {t}"),
        None => name.to_string(),
    };
    let hash = hashed.hash();
    let prov = Provenance {
        command: &command,
        config_hash: &hash,
        config: serde_json::to_value(hashed.entries()).unwrap_or(Value::Null),
    };
    write_artifacts(&out_dir, &artifacts, &prov)?;
    let mut lines = artifacts.summary;
    lines.push(format!("artifacts written to {}", out_dir.display()));
    Ok(lines)
}

/// Runs the CLI on the given arguments and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
