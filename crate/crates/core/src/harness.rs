//! Run orchestration: configuration, the per-scheme time loops with their
//! diagnostics, CSV/JSON output and the experiment presets.
//!
//! Output is deterministic: records depend only on the configuration, and
//! CSV floats are written with 17 significant digits. Wall-clock time only
//! appears in the JSON metadata.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bddv::{bddv_init, bddv_step};
use crate::diagnostics::{
    bddv_energy, bddv_residuals, bddv_stress_tensor, charges, energy_histogram, fill_residuals, msilcc_charges,
    msilcc_residuals, newton_energy, newton_residuals, newton_stress_tensor, Branch, DiagnosticsRecord, PeakTracker,
};
use crate::error::{Error, Result};
use crate::model::{parity, GridSpec, InitialData, PotentialParams, ZetaRow};
use crate::msilcc::{midpoint_step_mech, msilcc_init, msilcc_step, virtual_row_before};
use crate::newton::{newton_init, newton_step, DIVERGENCE_BOUND};
use crate::nlsolve::SolverSettings;
use crate::reference::{klein_gordon_mode, CnSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Newton,
    Bddv,
    Msilcc,
    Midpoint0d,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Newton, Scheme::Bddv, Scheme::Msilcc, Scheme::Midpoint0d];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Newton => "newton",
            Scheme::Bddv => "bddv",
            Scheme::Msilcc => "msilcc",
            Scheme::Midpoint0d => "midpoint0d",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}' (newton, bddv, msilcc, midpoint0d)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Config(format!("unknown format '{s}' (csv, json)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    Sine,
    Homogeneous,
}

impl FromStr for InitialKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(InitialKind::Sine),
            "homogeneous" => Ok(InitialKind::Homogeneous),
            _ => Err(Error::Config(format!("unknown initial data '{s}' (sine, homogeneous)"))),
        }
    }
}

/// Default spatial period. Nothing fixes `L` a priori; this value is the
/// calibration documented in the README (acceptance section).
pub const DEFAULT_LENGTH: f64 = 1.3;

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub amplitude: f64,
    pub r: f64,
    pub lambda: f64,
    pub n_sites: usize,
    /// Spatial period `L`.
    pub length: f64,
    pub duration_over_l: f64,
    pub record_every: u64,
    pub solver: SolverSettings,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub force: bool,
    pub initial: InitialKind,
    pub parallel: bool,
    /// Also write `φ` on every recorded row to `<out>.fields.csv`.
    pub snapshots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scheme: Scheme::Msilcc,
            amplitude: 10.0,
            r: 1.0,
            lambda: 1.0,
            n_sites: 128,
            length: DEFAULT_LENGTH,
            duration_over_l: 1.0,
            record_every: 1,
            solver: SolverSettings::default(),
            out: None,
            format: OutputFormat::Csv,
            force: false,
            initial: InitialKind::Sine,
            parallel: false,
            snapshots: false,
        }
    }
}

impl RunConfig {
    pub fn potential(&self) -> PotentialParams {
        PotentialParams::new(self.r, self.lambda)
    }

    pub fn initial_data(&self) -> InitialData {
        match self.initial {
            InitialKind::Sine => InitialData::Sine {
                amplitude: self.amplitude,
            },
            InitialKind::Homogeneous => InitialData::Homogeneous {
                amplitude: self.amplitude,
            },
        }
    }

    /// Lattice for the scheme: aligned for Newton and the 0+1 midpoint rule
    /// (time step `L/N`), light-cone otherwise.
    pub fn grid(&self) -> Result<GridSpec> {
        match self.scheme {
            Scheme::Newton | Scheme::Midpoint0d => GridSpec::aligned(self.n_sites, self.length),
            Scheme::Bddv | Scheme::Msilcc => GridSpec::lightcone(self.n_sites, self.length),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::Config(format!("amplitude must be finite, got {}", self.amplitude)));
        }
        if !(self.duration_over_l > 0.0 && self.duration_over_l.is_finite()) {
            return Err(Error::Config(format!("duration must be positive, got {}", self.duration_over_l)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record-every must be at least 1".into()));
        }
        self.potential().validate()?;
        self.solver.validate().map_err(Error::Config)?;
        self.grid()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Diverged { row: i64, t_over_l: f64, value: f64 },
    SolverFailure { message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SolverStats {
    pub total_iterations: u64,
    pub max_iterations: usize,
}

/// Per-row state of the 0+1 run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MechRecord {
    pub n: i64,
    pub time: f64,
    pub t_over_l: f64,
    pub q: f64,
    pub p: f64,
    pub energy: f64,
    pub q_exact: Option<f64>,
}

/// `φ` on one recorded row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSnapshot {
    pub n: i64,
    pub time: f64,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub grid: GridSpec,
    pub records: Vec<DiagnosticsRecord>,
    pub mech: Vec<MechRecord>,
    /// Largest `|φ − reference|` over each recorded row, when an exact
    /// solution is known for the data.
    pub ref_error: Vec<Option<f64>>,
    #[serde(skip)]
    pub snapshots: Vec<FieldSnapshot>,
    pub outcome: Outcome,
    pub solver_stats: SolverStats,
    pub rows_computed: i64,
}

impl RunReport {
    pub fn diverged(&self) -> bool {
        matches!(self.outcome, Outcome::Diverged { .. })
    }

    /// Recorded energies (the `energy` column), skipping blanks.
    pub fn energies(&self) -> Vec<f64> {
        if self.config.scheme == Scheme::Midpoint0d {
            return self.mech.iter().map(|m| m.energy).collect();
        }
        self.records.iter().filter_map(|r| r.energy).collect()
    }

    /// `(max E − min E) / mean E` over the recorded energies.
    pub fn energy_relative_deviation(&self) -> Option<f64> {
        let e = self.energies();
        if e.is_empty() {
            return None;
        }
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let (lo, hi) = e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        Some(if mean != 0.0 { (hi - lo) / mean.abs() } else { hi - lo })
    }

    /// Largest `Δε⁰`, `Δε¹` over records with `t/L ≤ until`.
    pub fn delta_peak_until(&self, until: f64) -> [Option<f64>; 2] {
        let mut out = [None, None];
        for r in self.records.iter().filter(|r| r.t_over_l <= until + 1e-12) {
            for (slot, v) in out.iter_mut().zip([r.delta0, r.delta1]) {
                if let Some(v) = v {
                    *slot = Some(slot.map_or(v, |s: f64| s.max(v)));
                }
            }
        }
        out
    }

    pub fn max_ref_error(&self) -> Option<f64> {
        self.ref_error.iter().flatten().copied().reduce(f64::max)
    }
}

// --------------------------------------------------------------- driver

/// The last few rows, addressed by time index.
struct RowWindow<R> {
    rows: VecDeque<(i64, R)>,
    capacity: usize,
}

impl<R> RowWindow<R> {
    fn new(capacity: usize) -> Self {
        RowWindow {
            rows: VecDeque::with_capacity(capacity + 1),
            capacity,
        }
    }

    fn push(&mut self, n: i64, row: R) {
        self.rows.push_back((n, row));
        if self.rows.len() > self.capacity {
            self.rows.pop_front();
        }
    }

    fn get(&self, n: i64) -> Option<&R> {
        let first = self.rows.front()?.0;
        if n < first {
            return None;
        }
        self.rows.get((n - first) as usize).map(|(_, r)| r)
    }

    fn newest(&self) -> i64 {
        self.rows.back().map_or(i64::MIN, |(n, _)| *n)
    }
}

trait Stepper {
    type Row;
    /// Rows past `n` needed before row `n` can be recorded.
    const LAG: i64;
    fn advance(&mut self) -> Result<(i64, Self::Row)>;
    fn record(&self, w: &RowWindow<Self::Row>, n: i64) -> DiagnosticsRecord;
    fn phi<'a>(&self, row: &'a Self::Row) -> &'a [f64];
    fn stats(&self) -> SolverStats {
        SolverStats::default()
    }
}

fn base_record(grid: &GridSpec, n: i64) -> DiagnosticsRecord {
    let time = grid.time(n);
    DiagnosticsRecord {
        n,
        time,
        t_over_l: time / grid.length,
        parity: parity(n),
        ..DiagnosticsRecord::default()
    }
}

/// Exact `φ(x, t)` for the configured data, if one is known.
fn reference_solution(cfg: &RunConfig) -> Option<Box<dyn Fn(f64, f64) -> f64 + Sync>> {
    let p = cfg.potential();
    match cfg.initial {
        InitialKind::Homogeneous => {
            let sol = CnSolution::new(cfg.amplitude, &p).ok()?;
            Some(Box::new(move |_x, t| sol.value(t)))
        }
        InitialKind::Sine if p.lambda == 0.0 && p.r >= 0.0 => {
            let (a, l, r) = (cfg.amplitude, cfg.length, p.r);
            Some(Box::new(move |x, t| klein_gordon_mode(a, l, r, x, t)))
        }
        InitialKind::Sine => None,
    }
}

fn drive<S: Stepper>(
    cfg: &RunConfig,
    grid: &GridSpec,
    mut stepper: S,
    initial: Vec<(i64, S::Row)>,
) -> RunReport {
    let end = grid.rows_for(cfg.duration_over_l);
    let every = cfg.record_every as i64;
    let reference = reference_solution(cfg);
    let mut window = RowWindow::new(5);
    for (n, row) in initial {
        window.push(n, row);
    }
    let mut next_record = 0i64;
    let mut records = Vec::new();
    let mut ref_error = Vec::new();
    let mut snapshots = Vec::new();
    let mut peaks = PeakTracker::default();
    let outcome = loop {
        while next_record <= end && next_record + S::LAG <= window.newest() {
            let n = next_record;
            next_record += 1;
            if n % every != 0 && n != end {
                continue;
            }
            let mut rec = stepper.record(&window, n);
            peaks.update(&mut rec);
            records.push(rec);
            let phi = stepper.phi(window.get(n).expect("recorded row is in the window"));
            let xs: Vec<f64> = (0..phi.len()).map(|j| grid.x(n, j)).collect();
            ref_error.push(reference.as_ref().map(|f| {
                phi.iter()
                    .zip(&xs)
                    .map(|(v, &x)| (v - f(x, grid.time(n))).abs())
                    .fold(0.0, f64::max)
            }));
            if cfg.snapshots {
                snapshots.push(FieldSnapshot {
                    n,
                    time: grid.time(n),
                    x: xs,
                    phi: phi.to_vec(),
                });
            }
        }
        if next_record > end {
            break Outcome::Completed;
        }
        match stepper.advance() {
            Ok((n, row)) => window.push(n, row),
            Err(Error::Diverged { row, value, .. }) => {
                let mut rec = base_record(grid, row);
                rec.diverged = true;
                peaks.update(&mut rec);
                records.push(rec);
                ref_error.push(None);
                break Outcome::Diverged {
                    row,
                    t_over_l: grid.time(row) / grid.length,
                    value,
                };
            }
            Err(e) => {
                break Outcome::SolverFailure {
                    message: e.to_string(),
                }
            }
        }
    };
    RunReport {
        config: cfg.clone(),
        grid: *grid,
        records,
        mech: Vec::new(),
        ref_error,
        snapshots,
        outcome,
        solver_stats: stepper.stats(),
        rows_computed: window.newest(),
    }
}

struct NewtonRun {
    state: crate::newton::NewtonState,
}

impl Stepper for NewtonRun {
    type Row = Vec<f64>;
    const LAG: i64 = 1;

    fn advance(&mut self) -> Result<(i64, Vec<f64>)> {
        self.state = newton_step(&self.state)?;
        Ok((self.state.rows.time_index, self.state.rows.curr.clone()))
    }

    fn record(&self, w: &RowWindow<Vec<f64>>, n: i64) -> DiagnosticsRecord {
        let (g, p) = (&self.state.grid, &self.state.p);
        let mut rec = base_record(g, n);
        let (prev, curr, next) = (w.get(n - 1), w.get(n), w.get(n + 1));
        if let (Some(curr), Some(next)) = (curr, next) {
            let t = newton_stress_tensor(curr, curr, next, g.delta, p, Branch::Plus);
            let (q0, q1) = charges(&t, g.delta);
            rec.e_plus = Some(q0);
            rec.q0 = Some(q0);
            rec.q1 = Some(q1);
            if let Some(prev) = prev {
                let em = newton_energy(prev, curr, next, g.delta, p, Branch::Minus);
                rec.e_minus = Some(em);
                rec.energy = Some(0.5 * (q0 + em));
                fill_residuals(&mut rec, &newton_residuals(prev, curr, next, g.delta, p));
            }
        }
        rec
    }

    fn phi<'a>(&self, row: &'a Vec<f64>) -> &'a [f64] {
        row
    }
}

struct BddvRun {
    state: crate::bddv::BddvState,
}

impl Stepper for BddvRun {
    type Row = Vec<f64>;
    const LAG: i64 = 1;

    fn advance(&mut self) -> Result<(i64, Vec<f64>)> {
        self.state = bddv_step(&self.state)?;
        Ok((self.state.rows.time_index, self.state.rows.curr.clone()))
    }

    fn record(&self, w: &RowWindow<Vec<f64>>, n: i64) -> DiagnosticsRecord {
        let (g, p) = (&self.state.grid, &self.state.p);
        let mut rec = base_record(g, n);
        let sigma = parity(n);
        let (prev, curr, next) = (w.get(n - 1), w.get(n), w.get(n + 1));
        if let (Some(curr), Some(next)) = (curr, next) {
            let t = bddv_stress_tensor(curr, curr, next, sigma, g.delta, p, Branch::Plus);
            let (q0, q1) = charges(&t, std::f64::consts::SQRT_2 * g.delta);
            rec.energy = Some(q0);
            rec.e_plus = Some(q0);
            rec.q0 = Some(q0);
            rec.q1 = Some(q1);
            if let Some(prev) = prev {
                rec.e_minus = Some(bddv_energy(prev, curr, next, sigma, g.delta, p, Branch::Minus));
                fill_residuals(&mut rec, &bddv_residuals(prev, curr, next, sigma, g.delta, p));
            }
        }
        rec
    }

    fn phi<'a>(&self, row: &'a Vec<f64>) -> &'a [f64] {
        row
    }
}

struct MsilccRun {
    state: crate::msilcc::MsilccState,
    stats: SolverStats,
}

impl MsilccRun {
    fn absorb(&mut self) {
        self.stats.total_iterations += self.state.stats.total_iterations as u64;
        self.stats.max_iterations = self.stats.max_iterations.max(self.state.stats.max_iterations);
    }
}

impl Stepper for MsilccRun {
    type Row = ZetaRow;
    const LAG: i64 = 2;

    fn advance(&mut self) -> Result<(i64, ZetaRow)> {
        self.state = msilcc_step(&self.state)?;
        self.absorb();
        Ok((self.state.curr.time_index, self.state.curr.clone()))
    }

    fn record(&self, w: &RowWindow<ZetaRow>, n: i64) -> DiagnosticsRecord {
        let (g, p) = (&self.state.grid, &self.state.p);
        let mut rec = base_record(g, n);
        if let (Some(a), Some(b), Some(c)) = (w.get(n - 1), w.get(n), w.get(n + 1)) {
            let (q0, q1) = msilcc_charges(a, b, c, g.delta, p);
            rec.energy = Some(q0);
            rec.q0 = Some(q0);
            rec.q1 = Some(q1);
        }
        if let (Some(a), Some(b), Some(c), Some(d), Some(e)) =
            (w.get(n - 2), w.get(n - 1), w.get(n), w.get(n + 1), w.get(n + 2))
        {
            fill_residuals(&mut rec, &msilcc_residuals([a, b, c, d, e], g.delta, p));
        }
        rec
    }

    fn phi<'a>(&self, row: &'a ZetaRow) -> &'a [f64] {
        &row.phi
    }

    fn stats(&self) -> SolverStats {
        self.stats
    }
}

fn run_mech(cfg: &RunConfig, grid: &GridSpec) -> RunReport {
    let p = cfg.potential();
    let dt = grid.dt();
    let end = grid.rows_for(cfg.duration_over_l);
    let every = cfg.record_every as i64;
    let exact = CnSolution::new(cfg.amplitude, &p).ok();
    let (mut q, mut m) = (cfg.amplitude, 0.0);
    let mut mech = Vec::new();
    let mut outcome = Outcome::Completed;
    let mut last = 0;
    for n in 0..=end {
        if n > 0 {
            match midpoint_step_mech(q, m, dt, &p) {
                Ok((q1, m1)) if q1.abs() <= DIVERGENCE_BOUND => (q, m) = (q1, m1),
                Ok((q1, _)) => {
                    outcome = Outcome::Diverged {
                        row: n,
                        t_over_l: grid.time(n) / grid.length,
                        value: q1.abs(),
                    };
                    break;
                }
                Err(e) => {
                    outcome = Outcome::SolverFailure {
                        message: e.to_string(),
                    };
                    break;
                }
            }
        }
        last = n;
        if n % every == 0 || n == end {
            let t = grid.time(n);
            mech.push(MechRecord {
                n,
                time: t,
                t_over_l: t / grid.length,
                q,
                p: m,
                energy: 0.5 * m * m + p.v(q),
                q_exact: exact.map(|s| s.value(t)),
            });
        }
    }
    let ref_error = mech.iter().map(|r| r.q_exact.map(|e| (r.q - e).abs())).collect();
    RunReport {
        config: cfg.clone(),
        grid: *grid,
        records: Vec::new(),
        mech,
        ref_error,
        snapshots: Vec::new(),
        outcome,
        solver_stats: SolverStats::default(),
        rows_computed: last,
    }
}

/// Runs the configured simulation in memory. Errors are configuration
/// errors and failures while building the initial rows; divergence and
/// solver failures during the run end it early and are reported in
/// [`RunReport::outcome`].
pub fn simulate(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let p = cfg.potential();
    let init = cfg.initial_data();
    let report = match cfg.scheme {
        Scheme::Newton => {
            let mut state = newton_init(&init, &grid, &p)?;
            state.parallel = cfg.parallel;
            let rows = vec![(0, state.rows.prev.clone()), (1, state.rows.curr.clone())];
            drive(cfg, &grid, NewtonRun { state }, rows)
        }
        Scheme::Bddv => {
            let mut state = bddv_init(&init, &grid, &p)?;
            state.parallel = cfg.parallel;
            let rows = vec![(0, state.rows.prev.clone()), (1, state.rows.curr.clone())];
            drive(cfg, &grid, BddvRun { state }, rows)
        }
        Scheme::Msilcc => {
            let mut state = msilcc_init(&init, &grid, &p, &cfg.solver)?;
            state.parallel = cfg.parallel;
            let rows = vec![
                (-1, virtual_row_before(&state.prev, &state.curr)),
                (0, state.prev.clone()),
                (1, state.curr.clone()),
            ];
            let mut run = MsilccRun {
                state,
                stats: SolverStats::default(),
            };
            run.absorb();
            drive(cfg, &grid, run, rows)
        }
        Scheme::Midpoint0d => run_mech(cfg, &grid),
    };
    Ok(report)
}

// --------------------------------------------------------------- output

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub const FIELD_COLUMNS: &str = "n,t_over_L,E,E_plus,E_minus,Q0,Q1,eps0_max,eps1_max,eps0_peak,eps1_peak,delta0,delta1,delta0_peak,delta1_peak,ref_error,parity,diverged";
pub const MECH_COLUMNS: &str = "n,t_over_L,q,p,E,q_exact,abs_error";

/// The record table as CSV text.
pub fn records_csv(report: &RunReport) -> String {
    let mut s = String::new();
    if report.config.scheme == Scheme::Midpoint0d {
        s.push_str(MECH_COLUMNS);
        s.push('\n');
        for (r, e) in report.mech.iter().zip(&report.ref_error) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.n,
                num(r.t_over_l),
                num(r.q),
                num(r.p),
                num(r.energy),
                opt(r.q_exact),
                opt(*e)
            );
        }
        return s;
    }
    s.push_str(FIELD_COLUMNS);
    s.push('\n');
    for (r, e) in report.records.iter().zip(&report.ref_error) {
        let cols = [
            r.energy,
            r.e_plus,
            r.e_minus,
            r.q0,
            r.q1,
            r.eps0_max,
            r.eps1_max,
            r.eps0_peak,
            r.eps1_peak,
            r.delta0,
            r.delta1,
            r.delta0_peak,
            r.delta1_peak,
            *e,
        ]
        .map(opt)
        .join(",");
        let _ = writeln!(s, "{},{},{},{},{}", r.n, num(r.t_over_l), cols, r.parity, u8::from(r.diverged));
    }
    s
}

fn snapshots_csv(report: &RunReport) -> String {
    let mut s = String::from("n,t_over_L,j,x,phi\n");
    for snap in &report.snapshots {
        for (j, (x, v)) in snap.x.iter().zip(&snap.phi).enumerate() {
            let _ = writeln!(s, "{},{},{},{},{}", snap.n, num(snap.time / report.grid.length), j, num(*x), num(*v));
        }
    }
    s
}

#[derive(Serialize)]
struct Metadata<'a> {
    program: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    grid: &'a GridSpec,
    outcome: &'a Outcome,
    solver_stats: &'a SolverStats,
    rows_computed: i64,
    records: usize,
    runtime_seconds: f64,
}

fn metadata<'a>(report: &'a RunReport, runtime: f64) -> Metadata<'a> {
    Metadata {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: &report.config,
        grid: &report.grid,
        outcome: &report.outcome,
        solver_stats: &report.solver_stats,
        rows_computed: report.rows_computed,
        records: report.records.len().max(report.mech.len()),
        runtime_seconds: runtime,
    }
}

/// Creates `path`, refusing to replace an existing file unless `force`.
fn create(path: &Path, force: bool) -> Result<BufWriter<File>> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    match opts.open(path) {
        Ok(f) => Ok(BufWriter::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::OutputExists(path.to_path_buf())),
        Err(e) => Err(io(e)),
    }
}

fn write_text(path: &Path, text: &str, force: bool) -> Result<()> {
    let mut w = create(path, force)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// Paths written by [`run`] for an output path.
pub fn output_paths(cfg: &RunConfig, out: &Path) -> Vec<PathBuf> {
    let mut v = vec![out.to_path_buf()];
    if cfg.format == OutputFormat::Csv {
        v.push(sibling(out, ".meta.json"));
    }
    if cfg.snapshots {
        v.push(sibling(out, ".fields.csv"));
    }
    v
}

/// Writes the report for `cfg` to its output path. With CSV format the
/// records go to `out` and metadata to `out.meta.json`; with JSON format a
/// single document holds both.
pub fn write_report(report: &RunReport, runtime: f64) -> Result<()> {
    let cfg = &report.config;
    let Some(out) = cfg.out.as_deref() else {
        return Ok(());
    };
    let paths = output_paths(cfg, out);
    if !cfg.force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Error::OutputExists(p.clone()));
        }
    }
    let meta = metadata(report, runtime);
    match cfg.format {
        OutputFormat::Csv => {
            write_text(out, &records_csv(report), cfg.force)?;
            write_text(&paths[1], &(serde_json::to_string_pretty(&meta)? + "\n"), cfg.force)?;
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                metadata: Metadata<'a>,
                records: &'a [DiagnosticsRecord],
                mech: &'a [MechRecord],
                ref_error: &'a [Option<f64>],
            }
            let doc = Doc {
                metadata: meta,
                records: &report.records,
                mech: &report.mech,
                ref_error: &report.ref_error,
            };
            write_text(out, &(serde_json::to_string_pretty(&doc)? + "\n"), cfg.force)?;
        }
    }
    if cfg.snapshots {
        write_text(paths.last().expect("snapshot path"), &snapshots_csv(report), cfg.force)?;
    }
    Ok(())
}

/// Simulates and writes the outputs.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    if let Some(out) = cfg.out.as_deref() {
        if !cfg.force {
            cfg.validate()?;
            if let Some(p) = output_paths(cfg, out).iter().find(|p| p.exists()) {
                return Err(Error::OutputExists(p.clone()));
            }
        }
    }
    let start = Instant::now();
    let report = simulate(cfg)?;
    write_report(&report, start.elapsed().as_secs_f64())?;
    Ok(report)
}

/// Maps a finished report to the error its outcome stands for, if any.
pub fn outcome_error(report: &RunReport) -> Option<Error> {
    match &report.outcome {
        Outcome::Completed => None,
        Outcome::Diverged { row, value, .. } => Some(Error::Diverged {
            row: *row,
            value: *value,
            bound: DIVERGENCE_BOUND,
        }),
        Outcome::SolverFailure { message } => Some(Error::Singular {
            row: report.rows_computed + 1,
            site: 0,
            detail: message.clone(),
        }),
    }
}

// -------------------------------------------------------------- presets

pub const PRESETS: [&str; 6] = [
    "energy-vs-time",
    "error-vs-amplitude",
    "error-vs-time",
    "r-scan",
    "jacobi-compare",
    "field-snapshots",
];

const PDE_SCHEMES: [Scheme; 3] = [Scheme::Newton, Scheme::Bddv, Scheme::Msilcc];

/// `per_decade` log-spaced points from `lo` to `hi`, both included.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let steps = (decades * per_decade as f64).round() as usize;
    (0..=steps)
        .map(|i| lo * 10f64.powf(decades * i as f64 / steps as f64))
        .collect()
}

/// Member runs of a preset. Output paths are placed under `dir`.
pub fn preset(name: &str, base: &RunConfig, dir: &Path) -> Result<Vec<RunConfig>> {
    let with = |scheme: Scheme, f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        c.scheme = scheme;
        f(&mut c);
        c
    };
    let file = |parts: String| Some(dir.join(format!("{parts}.csv")));
    let configs: Vec<RunConfig> = match name {
        "energy-vs-time" | "error-vs-time" => PDE_SCHEMES
            .iter()
            .map(|&s| {
                with(s, &|c| {
                    c.amplitude = 10.0;
                    c.duration_over_l = 100.0;
                    c.record_every = 256;
                    c.out = file(format!("{}", s.name()));
                })
            })
            .collect(),
        "error-vs-amplitude" => log_grid(0.1, 100.0, 32)
            .into_iter()
            .flat_map(|a| {
                PDE_SCHEMES.map(|s| {
                    with(s, &|c| {
                        c.amplitude = a;
                        c.duration_over_l = 1.0;
                        c.out = file(format!("{}_A{a:.6e}", s.name()));
                    })
                })
            })
            .collect(),
        "r-scan" => {
            let pos = log_grid(0.1, 100.0, 32);
            let mut rs: Vec<f64> = pos.iter().rev().map(|r| -r).collect();
            rs.extend((1..20).map(|i| -0.1 + 0.01 * i as f64));
            rs.extend(pos);
            rs.into_iter()
                .flat_map(|r| {
                    PDE_SCHEMES.map(|s| {
                        with(s, &|c| {
                            c.r = r;
                            c.amplitude = 10.0;
                            c.duration_over_l = 1.0;
                            c.out = file(format!("{}_r{r:+.6e}", s.name()));
                        })
                    })
                })
                .collect()
        }
        "jacobi-compare" => Scheme::ALL
            .iter()
            .map(|&s| {
                with(s, &|c| {
                    c.initial = InitialKind::Homogeneous;
                    c.amplitude = 1.0;
                    c.duration_over_l = 1.0;
                    c.out = file(s.name().to_string());
                })
            })
            .collect(),
        "field-snapshots" => [0.1, 1.0, 10.0, 30.0]
            .iter()
            .map(|&a| {
                with(Scheme::Msilcc, &|c| {
                    c.amplitude = a;
                    c.duration_over_l = 1.0;
                    c.record_every = 4;
                    c.snapshots = true;
                    c.out = file(format!("msilcc_A{a:.6e}"));
                })
            })
            .collect(),
        _ => {
            return Err(Error::Config(format!(
                "unknown preset '{name}' (one of: {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(configs)
}

pub const SUMMARY_COLUMNS: &str =
    "scheme,amplitude,r,lambda,n_sites,duration_over_L,outcome,end_t_over_L,delta0_peak,delta1_peak,energy_rel_dev,ref_error_max";

fn summary_line(rep: &RunReport) -> String {
    let c = &rep.config;
    let last_recorded = (rep.records.last().map(|r| r.t_over_l))
        .or(rep.mech.last().map(|m| m.t_over_l))
        .unwrap_or(0.0);
    let (status, end) = match &rep.outcome {
        Outcome::Completed => ("completed", last_recorded),
        Outcome::Diverged { t_over_l, .. } => ("diverged", *t_over_l),
        Outcome::SolverFailure { .. } => ("solver_failure", rep.grid.time(rep.rows_computed) / rep.grid.length),
    };
    let peaks = rep.delta_peak_until(f64::INFINITY);
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        c.scheme.name(),
        num(c.amplitude),
        num(c.r),
        num(c.lambda),
        c.n_sites,
        num(c.duration_over_l),
        status,
        num(end),
        opt(peaks[0]),
        opt(peaks[1]),
        opt(rep.energy_relative_deviation()),
        opt(rep.max_ref_error())
    )
}

/// Runs every member of a preset (in parallel) and writes
/// `<dir>/summary.csv`, plus `<dir>/energy_histogram.csv` for
/// `energy-vs-time`.
pub fn run_preset(name: &str, base: &RunConfig, dir: &Path) -> Result<Vec<RunReport>> {
    let configs = preset(name, base, dir)?;
    let summary_path = dir.join("summary.csv");
    let histogram_path = dir.join("energy_histogram.csv");
    if !base.force {
        for p in configs.iter().filter_map(|c| c.out.as_ref()).chain([&summary_path]) {
            if p.exists() {
                return Err(Error::OutputExists(p.clone()));
            }
        }
    }
    let reports: Vec<RunReport> = configs.par_iter().map(run).collect::<Result<_>>()?;
    let mut summary = String::from(SUMMARY_COLUMNS);
    summary.push('\n');
    for rep in &reports {
        summary.push_str(&summary_line(rep));
        summary.push('\n');
    }
    write_text(&summary_path, &summary, base.force)?;
    if name == "energy-vs-time" {
        let energies = reports
            .iter()
            .find(|r| r.config.scheme == Scheme::Msilcc)
            .map(|r| r.energies())
            .unwrap_or_default();
        let counts = energy_histogram(&energies, 128, 0.999, 1.001);
        let mut s = String::from("bin_lo,bin_hi,count\n");
        let width = 0.002 / 128.0;
        for (k, c) in counts.iter().enumerate() {
            let lo = 0.999 + width * k as f64;
            let _ = writeln!(s, "{},{},{}", num(lo), num(lo + width), c);
        }
        write_text(&histogram_path, &s, base.force)?;
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(scheme: Scheme, a: f64, n: usize, dur: f64) -> RunConfig {
        RunConfig {
            scheme,
            amplitude: a,
            n_sites: n,
            duration_over_l: dur,
            ..RunConfig::default()
        }
    }

    #[test]
    fn zero_amplitude_gives_zero_diagnostics() {
        let rep = simulate(&cfg(Scheme::Msilcc, 0.0, 16, 0.5)).unwrap();
        assert_eq!(rep.outcome, Outcome::Completed);
        for r in &rep.records {
            for v in [r.energy, r.q0, r.q1, r.eps0_max, r.delta0].into_iter().flatten() {
                assert_eq!(v, 0.0);
            }
            assert!(!r.diverged);
        }
    }

    #[test]
    fn window_addressing() {
        let mut w = RowWindow::new(3);
        for n in -1..5 {
            w.push(n, n * 10);
        }
        assert_eq!(w.get(1), None);
        assert_eq!(w.get(2), Some(&20));
        assert_eq!(w.get(4), Some(&40));
        assert_eq!(w.get(5), None);
        assert_eq!(w.newest(), 4);
    }

    #[test]
    fn records_cover_the_requested_rows() {
        for scheme in [Scheme::Newton, Scheme::Bddv, Scheme::Msilcc, Scheme::Midpoint0d] {
            let mut c = cfg(scheme, 1.0, 16, 1.0);
            c.record_every = 5;
            let rep = simulate(&c).unwrap();
            let end = c.grid().unwrap().rows_for(1.0);
            let ns: Vec<i64> = if scheme == Scheme::Midpoint0d {
                rep.mech.iter().map(|r| r.n).collect()
            } else {
                rep.records.iter().map(|r| r.n).collect()
            };
            assert_eq!(ns.first(), Some(&0));
            assert_eq!(ns.last(), Some(&end));
            assert!(ns.windows(2).all(|w| w[1] - w[0] <= 5));
        }
    }

    #[test]
    fn peaks_are_monotone() {
        let rep = simulate(&cfg(Scheme::Bddv, 5.0, 32, 1.0)).unwrap();
        let peaks: Vec<f64> = rep.records.iter().filter_map(|r| r.delta0_peak).collect();
        assert!(peaks.len() > 10);
        assert!(peaks.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(Scheme::Msilcc, 1.0, 15, 1.0).validate().is_err());
        assert!(cfg(Scheme::Newton, 1.0, 15, 1.0).validate().is_ok());
        assert!(cfg(Scheme::Newton, 1.0, 16, 0.0).validate().is_err());
        let mut c = cfg(Scheme::Newton, 1.0, 16, 1.0);
        c.lambda = -1.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!("euler".parse::<Scheme>().is_err());
        assert_eq!("bddv".parse::<Scheme>().unwrap(), Scheme::Bddv);
    }

    #[test]
    fn csv_has_header_and_blank_cells() {
        let rep = simulate(&cfg(Scheme::Msilcc, 1.0, 8, 0.2)).unwrap();
        let text = records_csv(&rep);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(FIELD_COLUMNS));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), FIELD_COLUMNS.split(',').count());
        // residuals of row 0 need row −2
        assert_eq!(first[7], "");
        assert!(!first[2].is_empty());
    }

    #[test]
    fn presets_are_well_formed() {
        let base = RunConfig::default();
        let dir = Path::new("out");
        let amp = preset("error-vs-amplitude", &base, dir).unwrap();
        let a: Vec<f64> = amp.iter().map(|c| c.amplitude).collect();
        assert!((a[0] - 0.1).abs() < 1e-12 && (a[a.len() - 1] - 100.0).abs() < 1e-9);
        assert_eq!(amp.len(), 97 * 3);
        let rs = preset("r-scan", &base, dir).unwrap();
        assert!(rs.iter().any(|c| (c.r + 100.0).abs() < 1e-9));
        assert!(rs.iter().any(|c| c.r.abs() < 0.1));
        assert!(preset("nope", &base, dir).is_err());
        let outs: std::collections::HashSet<_> = rs.iter().map(|c| c.out.clone()).collect();
        assert_eq!(outs.len(), rs.len());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.1, 100.0, 32);
        assert_eq!(g.len(), 97);
        assert!((g[32] - 1.0).abs() < 1e-12);
    }
}
