//! `phi4sim` — run one integrator configuration or a whole experiment preset.
//!
//! Settings come from flags and, optionally, a `key = value` file given with
//! `--config`; flags win over the file. Exit status: 0 clean, 2 bad
//! configuration, 3 divergence, 4 solver failure, 5 I/O.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use phi4_core::harness::{self, InitialKind, OutputFormat, RunConfig, RunReport, Scheme, PRESETS};
use phi4_core::Error;

#[derive(Debug, Default, Parser)]
#[command(name = "phi4sim", version, about = "Structure-preserving integrators for the 1+1 phi^4 wave equation")]
struct Cli {
    /// newton | bddv | msilcc | midpoint0d
    #[arg(long)]
    scheme: Option<String>,
    /// Initial amplitude A.
    #[arg(long, allow_negative_numbers = true)]
    amplitude: Option<f64>,
    /// Quadratic coupling r (any sign).
    #[arg(long, allow_negative_numbers = true)]
    r: Option<f64>,
    /// Quartic coupling λ ≥ 0.
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Lattice sites N (even for the light-cone schemes).
    #[arg(long)]
    sites: Option<usize>,
    /// Run length in units of L.
    #[arg(long)]
    duration: Option<f64>,
    /// Record every k-th row (the last row is always recorded).
    #[arg(long)]
    record_every: Option<u64>,
    /// Cell-solver residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Cell-solver iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Spatial period L.
    #[arg(long)]
    length: Option<f64>,
    /// sine | homogeneous
    #[arg(long)]
    initial: Option<String>,
    /// Output file, or directory for --preset. Without it a single run
    /// prints its CSV to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    /// Run a named experiment batch instead of a single configuration.
    #[arg(long)]
    preset: Option<String>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
    /// Solve the sites of a row in parallel (output is unchanged).
    #[arg(long)]
    parallel: bool,
    /// Also write φ on every recorded row.
    #[arg(long)]
    snapshots: bool,
    /// Read settings from a `key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
}

const KEYS: [&str; 17] = [
    "scheme",
    "amplitude",
    "r",
    "lambda",
    "sites",
    "duration",
    "record-every",
    "tol",
    "max-iter",
    "length",
    "initial",
    "out",
    "format",
    "preset",
    "force",
    "parallel",
    "snapshots",
];

/// Parses `key = value` lines; `#` starts a comment. Keys are the long flag
/// names (`record-every` and `record_every` both work).
fn parse_config_file(text: &str, path: &Path) -> Result<BTreeMap<String, (usize, String)>, Error> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{lineno}: expected key = value", path.display())))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("{}:{lineno}: unknown key '{}'", path.display(), k.trim())));
        }
        out.insert(key, (lineno, v.trim().to_string()));
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(origin: &str, value: &str) -> Result<T, Error> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{origin}: cannot parse '{value}'")))
}

fn parse_bool(origin: &str, value: &str) -> Result<bool, Error> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{origin}: expected true or false, got '{value}'"))),
    }
}

/// Fills unset flags from the config file.
fn merge_file(cli: &mut Cli, path: &Path) -> Result<(), Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    for (key, (line, v)) in parse_config_file(&text, path)? {
        let origin = format!("{}:{line}: {key}", path.display());
        let o = origin.as_str();
        match key.as_str() {
            "scheme" => cli.scheme = cli.scheme.take().or(Some(v)),
            "amplitude" => cli.amplitude = cli.amplitude.or(Some(parse_value(o, &v)?)),
            "r" => cli.r = cli.r.or(Some(parse_value(o, &v)?)),
            "lambda" => cli.lambda = cli.lambda.or(Some(parse_value(o, &v)?)),
            "sites" => cli.sites = cli.sites.or(Some(parse_value(o, &v)?)),
            "duration" => cli.duration = cli.duration.or(Some(parse_value(o, &v)?)),
            "record-every" => cli.record_every = cli.record_every.or(Some(parse_value(o, &v)?)),
            "tol" => cli.tol = cli.tol.or(Some(parse_value(o, &v)?)),
            "max-iter" => cli.max_iter = cli.max_iter.or(Some(parse_value(o, &v)?)),
            "length" => cli.length = cli.length.or(Some(parse_value(o, &v)?)),
            "initial" => cli.initial = cli.initial.take().or(Some(v)),
            "out" => cli.out = cli.out.take().or(Some(PathBuf::from(v))),
            "format" => cli.format = cli.format.take().or(Some(v)),
            "preset" => cli.preset = cli.preset.take().or(Some(v)),
            "force" => cli.force |= parse_bool(o, &v)?,
            "parallel" => cli.parallel |= parse_bool(o, &v)?,
            "snapshots" => cli.snapshots |= parse_bool(o, &v)?,
            _ => unreachable!("key list checked by the parser"),
        }
    }
    Ok(())
}

fn flag<T: std::str::FromStr<Err = Error>>(name: &str, v: &Option<String>) -> Result<Option<T>, Error> {
    v.as_deref()
        .map(|s| s.parse::<T>().map_err(|e| Error::Config(format!("--{name}: {e}"))))
        .transpose()
}

fn build_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    if let Some(s) = flag::<Scheme>("scheme", &cli.scheme)? {
        cfg.scheme = s;
    }
    if let Some(f) = flag::<OutputFormat>("format", &cli.format)? {
        cfg.format = f;
    }
    if let Some(i) = flag::<InitialKind>("initial", &cli.initial)? {
        cfg.initial = i;
    }
    cfg.amplitude = cli.amplitude.unwrap_or(cfg.amplitude);
    cfg.r = cli.r.unwrap_or(cfg.r);
    cfg.lambda = cli.lambda.unwrap_or(cfg.lambda);
    cfg.n_sites = cli.sites.unwrap_or(cfg.n_sites);
    cfg.duration_over_l = cli.duration.unwrap_or(cfg.duration_over_l);
    cfg.record_every = cli.record_every.unwrap_or(cfg.record_every);
    cfg.length = cli.length.unwrap_or(cfg.length);
    cfg.solver.tol_residual = cli.tol.unwrap_or(cfg.solver.tol_residual);
    cfg.solver.max_iter = cli.max_iter.unwrap_or(cfg.solver.max_iter);
    cfg.out = cli.out.clone();
    cfg.force = cli.force;
    cfg.parallel = cli.parallel;
    cfg.snapshots = cli.snapshots;
    cfg.validate()?;
    Ok(cfg)
}

fn summarize(rep: &RunReport) -> String {
    let status = match &rep.outcome {
        harness::Outcome::Completed => "completed".to_string(),
        harness::Outcome::Diverged { t_over_l, .. } => format!("diverged at t/L = {t_over_l:.4}"),
        harness::Outcome::SolverFailure { message } => format!("solver failure: {message}"),
    };
    let mut s = format!("{}: {status}, {} rows", rep.config.scheme.name(), rep.rows_computed);
    if let Some(d) = rep.energy_relative_deviation() {
        s += &format!(", energy deviation {d:.3e}");
    }
    s
}

fn execute(mut cli: Cli) -> Result<(), Error> {
    if let Some(path) = cli.config.clone() {
        merge_file(&mut cli, &path)?;
    }
    let cfg = build_config(&cli)?;
    if let Some(name) = cli.preset.as_deref() {
        if !PRESETS.contains(&name) {
            return Err(Error::Config(format!("--preset: unknown preset '{name}' (one of: {})", PRESETS.join(", "))));
        }
        let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(name));
        let reports = harness::run_preset(name, &RunConfig { out: None, ..cfg }, &dir)?;
        eprintln!("{name}: {} runs written to {}", reports.len(), dir.display());
        return Ok(());
    }
    let report = harness::run(&cfg)?;
    if cfg.out.is_none() {
        print!("{}", harness::records_csv(&report));
    }
    eprintln!("{}", summarize(&report));
    match harness::outcome_error(&report) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phi4sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_lines() {
        let text = "# comment\nscheme = bddv\n\nrecord_every=4  # trailing\n";
        let m = parse_config_file(text, Path::new("x.cfg")).unwrap();
        assert_eq!(m["scheme"], (2, "bddv".to_string()));
        assert_eq!(m["record-every"], (4, "4".to_string()));
        let err = parse_config_file("scheme = bddv\nbogus = 1\n", Path::new("x.cfg")).unwrap_err();
        assert!(err.to_string().contains("x.cfg:2"), "{err}");
        assert!(parse_config_file("just words\n", Path::new("x.cfg")).is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "scheme = bddv\namplitude = 3\nsites = 64\n").unwrap();
        let mut cli = Cli {
            amplitude: Some(5.0),
            ..Cli::default()
        };
        merge_file(&mut cli, &path).unwrap();
        let cfg = build_config(&cli).unwrap();
        assert_eq!(cfg.scheme, Scheme::Bddv);
        assert_eq!(cfg.amplitude, 5.0);
        assert_eq!(cfg.n_sites, 64);
    }

    #[test]
    fn bad_values_name_their_origin() {
        let cli = Cli {
            scheme: Some("euler".into()),
            ..Cli::default()
        };
        let e = build_config(&cli).unwrap_err();
        assert!(e.to_string().contains("--scheme"));
        assert_eq!(e.exit_code(), 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "amplitude = ten\n").unwrap();
        let e = merge_file(&mut Cli::default(), &path).unwrap_err();
        assert!(e.to_string().contains("run.cfg:1"), "{e}");
    }
}
