//! Multi-symplectic centered-box scheme on the light-cone lattice.
//!
//! The state is `ζ = (φ, ψ⁰, ψ¹, γ)`. A cell of row `n` is the diamond with
//! bottom `ζ_{n−1}^j`, top `ζ_{n+1}^j` and side vertices `ζ_n^j`,
//! `ζ_n^{j+σ_n}`. Midpoint rules along both light-cone directions turn
//! `M⁰∂₀ζ + M¹∂₁ζ = ∇H(ζ)` into
//!
//! ```text
//! M⁰(ζ_T − ζ_B) + M¹(ζ_R − ζ_L) = √2δ·∇H(⟨ζ⟩),   ⟨ζ⟩ = (ζ_B + ζ_L + ζ_R + ζ_T)/4,
//! ```
//!
//! four equations for the four unknowns `ζ_T`, solved cell by cell.
//!
//! The 0+1 special case is the implicit midpoint rule,
//! [`midpoint_step_mech`].

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::exec::map_sites;
use crate::model::{
    parity, wrap, GridSpec, InitialData, LatticeFamily, PotentialParams, ZetaRow,
};
use crate::newton::DIVERGENCE_BOUND;
use crate::nlsolve::{lm_solve, solve_dense, LmProblem, SolveError, SolverSettings};

/// Values that can be averaged pairwise.
pub trait Midpoint: Copy {
    fn mid(&self, other: &Self) -> Self;
    fn diff(&self, other: &Self, delta: f64) -> Self;
}

impl Midpoint for f64 {
    #[inline]
    fn mid(&self, other: &Self) -> Self {
        0.5 * (self + other)
    }
    #[inline]
    fn diff(&self, other: &Self, delta: f64) -> Self {
        (self - other) / delta
    }
}

impl<const K: usize> Midpoint for [f64; K] {
    #[inline]
    fn mid(&self, other: &Self) -> Self {
        std::array::from_fn(|i| 0.5 * (self[i] + other[i]))
    }
    #[inline]
    fn diff(&self, other: &Self, delta: f64) -> Self {
        std::array::from_fn(|i| (self[i] - other[i]) / delta)
    }
}

/// Four vertices of a light-cone square. The same shape appears on the dual
/// lattice (cells around a vertex), so the rules below serve both.
///
/// Direction `Ď₀` points from `right` to `top` (up-left), `Ď₁` from `left`
/// to `top` (up-right).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diamond<X> {
    pub bottom: X,
    pub left: X,
    pub right: X,
    pub top: X,
}

impl<X: Midpoint> Diamond<X> {
    /// Midpoint of the edge reached by a `+δ` step along `Ď_μ`.
    pub fn plus(&self, mu: usize) -> X {
        if mu == 0 {
            self.top.mid(&self.left)
        } else {
            self.top.mid(&self.right)
        }
    }

    /// Midpoint of the opposite edge.
    pub fn minus(&self, mu: usize) -> X {
        if mu == 0 {
            self.right.mid(&self.bottom)
        } else {
            self.left.mid(&self.bottom)
        }
    }

    /// Midpoint rule `Ď_μ`.
    pub fn d(&self, mu: usize, delta: f64) -> X {
        self.plus(mu).diff(&self.minus(mu), delta)
    }

    /// Average `⟨·⟩_{Ď_μ}` (the mean of both edge midpoints). In 1+1
    /// dimensions it is the full four-vertex average for either `μ`.
    pub fn average(&self, mu: usize) -> X {
        self.plus(mu).mid(&self.minus(mu))
    }

    /// `Ď_μ f` for a nonlinear function: `f` is evaluated on edge
    /// midpoints.
    pub fn apply(&self, mu: usize, delta: f64, f: impl Fn(&X) -> f64) -> f64 {
        (f(&self.plus(mu)) - f(&self.minus(mu))) / delta
    }
}

impl<X> Diamond<X> {
    pub fn map<Y>(&self, f: impl Fn(&X) -> Y) -> Diamond<Y> {
        Diamond {
            bottom: f(&self.bottom),
            left: f(&self.left),
            right: f(&self.right),
            top: f(&self.top),
        }
    }
}

/// Site offsets of the left and right vertices of the cell labelled `j` on
/// a row of parity `sigma` (vertex `j` itself is one of them).
#[inline]
pub fn side_offsets(sigma: i32) -> (i64, i64) {
    let s = sigma as i64;
    ((s - 1) / 2, (s + 1) / 2)
}

/// The cell of row `curr` labelled `j`, with `top` taken from `next`.
pub fn cell_of(prev: &ZetaRow, curr: &ZetaRow, next: &ZetaRow, j: usize) -> Diamond<[f64; 4]> {
    let n = curr.len();
    let (lo, ro) = side_offsets(curr.parity());
    Diamond {
        bottom: prev.get(j),
        left: curr.get(wrap(j, lo, n)),
        right: curr.get(wrap(j, ro, n)),
        top: next.get(j),
    }
}

/// Known data of one cell solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKnown {
    pub bottom: [f64; 4],
    pub left: [f64; 4],
    pub right: [f64; 4],
}

impl CellKnown {
    /// Knowns `{ζ_{n−1}^j, ζ_n^j, ζ_n^{j+σ_n}}` of the cell labelled `j`.
    pub fn from_rows(prev: &ZetaRow, curr: &ZetaRow, j: usize) -> Self {
        let n = curr.len();
        let (lo, ro) = side_offsets(curr.parity());
        CellKnown {
            bottom: prev.get(j),
            left: curr.get(wrap(j, lo, n)),
            right: curr.get(wrap(j, ro, n)),
        }
    }
}

// Rows of the residual, in the conventional equation order:
//   1: ψ⁰_T − ψ⁰_B + ψ¹_R − ψ¹_L + √2δ·V′(φ̄)
//   2: φ_T − φ_B + γ_R − γ_L − √2δ·ψ̄⁰
//   3: γ_T − γ_B + φ_R − φ_L + √2δ·ψ̄¹
//   4: ψ¹_T − ψ¹_B + ψ⁰_R − ψ⁰_L + √2δ·Ṽ′(γ̄)
// i.e. rows (−1, 1, 1, −1)·[M⁰Δ_t + M¹Δ_x − √2δ∇H].
const TIME_FIELD: [usize; 4] = [1, 0, 3, 2];
const SPACE_FIELD: [usize; 4] = [2, 3, 0, 1];

/// `G(ζ̄)` with `res = E_t(ζ_T − ζ_B) + E_x(ζ_R − ζ_L) + √2δ·G(ζ̄)`.
#[inline]
fn source(avg: &[f64; 4], p: &PotentialParams) -> [f64; 4] {
    [p.dv(avg[0]), -avg[1], avg[2], p.dv_aux(avg[3])]
}

/// Diagonal of `∂G/∂ζ̄` (entry `i` couples to field `i`).
#[inline]
fn source_diag(avg: &[f64; 4], p: &PotentialParams) -> [f64; 4] {
    [p.d2v(avg[0]), -1.0, 1.0, p.d2v_aux(avg[3])]
}

fn quad_avg(b: &[f64; 4], l: &[f64; 4], r: &[f64; 4], t: &[f64; 4]) -> [f64; 4] {
    std::array::from_fn(|i| 0.25 * (b[i] + l[i] + r[i] + t[i]))
}

/// Residual of the four cell equations for the top vertex `u = ζ_{n+1}^j`.
pub fn msilcc_cell_residual(u: &[f64; 4], known: &CellKnown, delta: f64, p: &PotentialParams) -> [f64; 4] {
    let CellKnown { bottom, left, right } = known;
    let avg = quad_avg(bottom, left, right, u);
    let g = source(&avg, p);
    let h = SQRT_2 * delta;
    std::array::from_fn(|i| {
        let (tf, sf) = (TIME_FIELD[i], SPACE_FIELD[i]);
        (u[tf] - bottom[tf]) + (right[sf] - left[sf]) + h * g[i]
    })
}

/// `∂(residual_i)/∂(u_k)`.
pub fn msilcc_cell_jacobian(u: &[f64; 4], known: &CellKnown, delta: f64, p: &PotentialParams) -> [[f64; 4]; 4] {
    let avg = quad_avg(&known.bottom, &known.left, &known.right, u);
    let dg = source_diag(&avg, p);
    let h = SQRT_2 * delta / 4.0;
    let mut jac = [[0.0; 4]; 4];
    for i in 0..4 {
        jac[i][TIME_FIELD[i]] += 1.0;
        jac[i][i] += h * dg[i];
    }
    jac
}

/// Sensitivities of the residual to the known vertices:
/// `(∂res/∂ζ_B, ∂res/∂ζ_L, ∂res/∂ζ_R)`.
pub fn msilcc_cell_known_jacobians(
    u: &[f64; 4],
    known: &CellKnown,
    delta: f64,
    p: &PotentialParams,
) -> [[[f64; 4]; 4]; 3] {
    let avg = quad_avg(&known.bottom, &known.left, &known.right, u);
    let dg = source_diag(&avg, p);
    let h = SQRT_2 * delta / 4.0;
    let mut out = [[[0.0; 4]; 4]; 3];
    for i in 0..4 {
        out[0][i][TIME_FIELD[i]] -= 1.0;
        out[1][i][SPACE_FIELD[i]] -= 1.0;
        out[2][i][SPACE_FIELD[i]] += 1.0;
        for m in &mut out {
            m[i][i] += h * dg[i];
        }
    }
    out
}

struct CellProblem<'a> {
    known: &'a CellKnown,
    delta: f64,
    p: &'a PotentialParams,
}

impl LmProblem<4> for CellProblem<'_> {
    fn residual(&self, x: &[f64; 4]) -> [f64; 4] {
        msilcc_cell_residual(x, self.known, self.delta, self.p)
    }
    fn jacobian(&self, x: &[f64; 4]) -> [[f64; 4]; 4] {
        msilcc_cell_jacobian(x, self.known, self.delta, self.p)
    }
}

/// Initial cell: the bottom vertex is eliminated through
/// `(ζ_B + ζ_T)/2 = (ζ_L + ζ_R)/2`, so the cell average is the known
/// spatial average and the system is linear in `ζ_T`.
struct InitialCellProblem<'a> {
    left: [f64; 4],
    right: [f64; 4],
    delta: f64,
    p: &'a PotentialParams,
}

impl InitialCellProblem<'_> {
    fn known(&self, x: &[f64; 4]) -> CellKnown {
        CellKnown {
            bottom: std::array::from_fn(|i| self.left[i] + self.right[i] - x[i]),
            left: self.left,
            right: self.right,
        }
    }
}

impl LmProblem<4> for InitialCellProblem<'_> {
    fn residual(&self, x: &[f64; 4]) -> [f64; 4] {
        msilcc_cell_residual(x, &self.known(x), self.delta, self.p)
    }
    fn jacobian(&self, _x: &[f64; 4]) -> [[f64; 4]; 4] {
        // ∂B/∂T = −1 and the average does not depend on T
        let mut jac = [[0.0; 4]; 4];
        for (i, row) in jac.iter_mut().enumerate() {
            row[TIME_FIELD[i]] = 2.0;
        }
        jac
    }
}

/// Iteration counts of the last step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub total_iterations: usize,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsilccState {
    pub prev: ZetaRow,
    pub curr: ZetaRow,
    pub grid: GridSpec,
    pub p: PotentialParams,
    pub solver: SolverSettings,
    pub bound: f64,
    pub parallel: bool,
    pub stats: StepStats,
}

/// Smallest residual the cell equations can resolve at `u`: a few ulps of
/// the largest term entering any equation. An absolute tolerance below it
/// is unreachable for large fields, and a solve that stalls there has
/// converged as far as floating point allows.
fn roundoff_floor(u: &[f64], known: &CellKnown, delta: f64, p: &PotentialParams) -> f64 {
    let u: [f64; 4] = std::array::from_fn(|i| u[i]);
    let CellKnown { bottom, left, right } = known;
    let g = source(&quad_avg(bottom, left, right, &u), p);
    let h = SQRT_2 * delta;
    (0..4)
        .map(|i| {
            let (tf, sf) = (TIME_FIELD[i], SPACE_FIELD[i]);
            u[tf].abs() + bottom[tf].abs() + right[sf].abs() + left[sf].abs() + (h * g[i]).abs()
        })
        .fold(0.0, f64::max)
        * 16.0
        * f64::EPSILON
}

fn cell_failure(err: SolveError, row: i64, site: usize) -> Error {
    match err {
        SolveError::MaxIterations { norm, iterations, .. } => Error::NonConvergence {
            row,
            site,
            residual: norm,
            iterations,
        },
        SolveError::SingularNormalEquations { norm } => Error::Singular {
            row,
            site,
            detail: format!("singular cell system (|r| = {norm:e})"),
        },
    }
}

fn collect_row(
    solved: Vec<std::result::Result<([f64; 4], usize), Error>>,
    time_index: i64,
) -> Result<(ZetaRow, StepStats)> {
    let mut row = ZetaRow::zeros(solved.len(), time_index);
    let mut stats = StepStats::default();
    for (j, cell) in solved.into_iter().enumerate() {
        let (z, it) = cell?;
        row.set(j, z);
        stats.total_iterations += it;
        stats.max_iterations = stats.max_iterations.max(it);
    }
    Ok((row, stats))
}

fn check_row(row: &ZetaRow, bound: f64) -> Result<()> {
    let worst = row.max_abs();
    if !(worst <= bound) {
        return Err(Error::Diverged {
            row: row.time_index,
            value: worst,
            bound,
        });
    }
    Ok(())
}

/// Samples row 0 (`γ = 0`, `ψ⁰ = ∂₀φ`, `ψ¹ = −D₁φ` with a midpoint
/// difference of the initial data over one site spacing) and solves the
/// initial cells for row 1.
pub fn msilcc_init(
    init: &InitialData,
    grid: &GridSpec,
    p: &PotentialParams,
    solver: &SolverSettings,
) -> Result<MsilccState> {
    grid.require(LatticeFamily::Lightcone)?;
    let n = grid.n_sites;
    let l = grid.length;
    let h = grid.dx();
    let mut row0 = ZetaRow::zeros(n, 0);
    for j in 0..n {
        let x = grid.x(0, j);
        let d1phi = (init.phi(x + 0.5 * h, l) - init.phi(x - 0.5 * h, l)) / h;
        row0.set(j, [init.phi(x, l), init.dphi_dt(x, l), -d1phi, 0.0]);
    }
    let (lo, ro) = side_offsets(row0.parity());
    let solved = map_sites(n, false, |j| {
        let problem = InitialCellProblem {
            left: row0.get(wrap(j, lo, n)),
            right: row0.get(wrap(j, ro, n)),
            delta: grid.delta,
            p,
        };
        lm_solve(&problem, row0.get(j), solver)
            .map(|s| (s.x, s.iterations))
            .map_err(|e| cell_failure(e, 1, j))
    });
    let (row1, stats) = collect_row(solved, 1)?;
    check_row(&row1, DIVERGENCE_BOUND)?;
    Ok(MsilccState {
        prev: row0,
        curr: row1,
        grid: *grid,
        p: *p,
        solver: *solver,
        bound: DIVERGENCE_BOUND,
        parallel: false,
        stats,
    })
}

pub fn msilcc_init_sine(a: f64, grid: &GridSpec, p: &PotentialParams, solver: &SolverSettings) -> Result<MsilccState> {
    msilcc_init(&InitialData::Sine { amplitude: a }, grid, p, solver)
}

/// The row `−1` implied by the initial closure:
/// `ζ_{−1}^j = ζ_0^j + ζ_0^{j+σ_0} − ζ_1^j`.
pub fn virtual_row_before(row0: &ZetaRow, row1: &ZetaRow) -> ZetaRow {
    let n = row0.len();
    let (lo, ro) = side_offsets(row0.parity());
    let mut out = ZetaRow::zeros(n, row0.time_index - 1);
    for j in 0..n {
        let (a, b, t) = (row0.get(wrap(j, lo, n)), row0.get(wrap(j, ro, n)), row1.get(j));
        out.set(j, std::array::from_fn(|i| a[i] + b[i] - t[i]));
    }
    out
}

/// Advances one row, solving every cell independently.
pub fn msilcc_step(state: &MsilccState) -> Result<MsilccState> {
    let n = state.grid.n_sites;
    let next_index = state.curr.time_index + 1;
    let solved = map_sites(n, state.parallel, |j| {
        let known = CellKnown::from_rows(&state.prev, &state.curr, j);
        let problem = CellProblem {
            known: &known,
            delta: state.grid.delta,
            p: &state.p,
        };
        match lm_solve(&problem, state.curr.get(j), &state.solver) {
            Ok(s) => Ok((s.x, s.iterations)),
            Err(SolveError::MaxIterations { best, norm, iterations })
                if norm <= roundoff_floor(&best, &known, state.grid.delta, &state.p) =>
            {
                Ok((std::array::from_fn(|i| best[i]), iterations))
            }
            Err(e) => Err(cell_failure(e, next_index, j)),
        }
    });
    let (next, stats) = collect_row(solved, next_index)?;
    check_row(&next, state.bound)?;
    Ok(MsilccState {
        prev: state.curr.clone(),
        curr: next,
        stats,
        ..state.clone()
    })
}

/// Linearised step: given tangent rows at `n−1`, `n` and the solved row
/// `n+1` (`next`), returns the tangent row at `n+1`.
pub fn tangent_step(
    prev: &ZetaRow,
    curr: &ZetaRow,
    next: &ZetaRow,
    dprev: &ZetaRow,
    dcurr: &ZetaRow,
    delta: f64,
    p: &PotentialParams,
) -> Result<ZetaRow> {
    let n = curr.len();
    let mut out = ZetaRow::zeros(n, next.time_index);
    for j in 0..n {
        let known = CellKnown::from_rows(prev, curr, j);
        let dknown = CellKnown::from_rows(dprev, dcurr, j);
        let u = next.get(j);
        let jt = msilcc_cell_jacobian(&u, &known, delta, p);
        let [jb, jl, jr] = msilcc_cell_known_jacobians(&u, &known, delta, p);
        let rhs: [f64; 4] = std::array::from_fn(|i| {
            -(0..4)
                .map(|k| jb[i][k] * dknown.bottom[k] + jl[i][k] * dknown.left[k] + jr[i][k] * dknown.right[k])
                .sum::<f64>()
        });
        let du = solve_dense(jt, rhs).ok_or_else(|| Error::Singular {
            row: next.time_index,
            site: j,
            detail: "singular cell Jacobian in tangent step".into(),
        })?;
        out.set(j, du);
    }
    Ok(out)
}

struct MidpointProblem<'a> {
    q: f64,
    p: f64,
    delta: f64,
    pot: &'a PotentialParams,
}

impl LmProblem<2> for MidpointProblem<'_> {
    fn residual(&self, x: &[f64; 2]) -> [f64; 2] {
        let (q1, p1) = (x[0], x[1]);
        [
            p1 - self.p + self.delta * self.pot.dv(0.5 * (q1 + self.q)),
            q1 - self.q - 0.5 * self.delta * (p1 + self.p),
        ]
    }
    fn jacobian(&self, x: &[f64; 2]) -> [[f64; 2]; 2] {
        [
            [0.5 * self.delta * self.pot.d2v(0.5 * (x[0] + self.q)), 1.0],
            [1.0, -0.5 * self.delta],
        ]
    }
}

/// One implicit-midpoint step of `q̇ = p`, `ṗ = −V′(q)`:
/// `p_n − p_{n+1} = δ·V′((q_{n+1}+q_n)/2)`, `q_{n+1} − q_n = δ·(p_{n+1}+p_n)/2`.
pub fn midpoint_step_mech(q: f64, p_mom: f64, delta: f64, pot: &PotentialParams) -> Result<(f64, f64)> {
    let problem = MidpointProblem {
        q,
        p: p_mom,
        delta,
        pot,
    };
    let settings = SolverSettings {
        tol_residual: 1e-13,
        ..SolverSettings::default()
    };
    // explicit Euler predictor
    let guess = [q + delta * p_mom, p_mom - delta * pot.dv(q)];
    let s = lm_solve(&problem, guess, &settings).map_err(|e| cell_failure(e, 0, 0))?;
    Ok((s.x[0], s.x[1]))
}

impl MsilccState {
    pub fn parity(&self) -> i32 {
        parity(self.curr.time_index)
    }
}
