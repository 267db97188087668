//! Explicit leapfrog ("Newton") scheme on the aligned lattice.
//!
//! With one-sided differences `D±` in time and space and `dt = dx = δ`, the
//! discrete equation of motion `D₀⁺D₀⁻φ − D₁⁺D₁⁻φ + V′(φ) = 0` solves to
//!
//! ```text
//! φ_{n+1}^j = −φ_{n−1}^j + φ_n^{j+1} + φ_n^{j−1} − δ²·V′(φ_n^j).
//! ```

use crate::error::{Error, Result};
use crate::exec::map_sites;
use crate::model::{wrap, GridSpec, InitialData, LatticeFamily, PotentialParams, ScalarRows};

/// Default overflow bound on `|φ|`.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonState {
    pub rows: ScalarRows,
    pub grid: GridSpec,
    pub p: PotentialParams,
    pub bound: f64,
    pub parallel: bool,
}

/// Forward spatial difference `(φ^{j+1} − φ^j)/δ`, periodic.
pub fn d_plus(row: &[f64], j: usize, delta: f64) -> f64 {
    (row[wrap(j, 1, row.len())] - row[j]) / delta
}

/// Backward spatial difference `(φ^j − φ^{j−1})/δ`, periodic.
pub fn d_minus(row: &[f64], j: usize, delta: f64) -> f64 {
    (row[j] - row[wrap(j, -1, row.len())]) / delta
}

/// Forward time difference between rows `n` and `n+1`.
pub fn d0_plus(curr: &[f64], next: &[f64], j: usize, delta: f64) -> f64 {
    (next[j] - curr[j]) / delta
}

/// Backward time difference between rows `n−1` and `n`.
pub fn d0_minus(prev: &[f64], curr: &[f64], j: usize, delta: f64) -> f64 {
    (curr[j] - prev[j]) / delta
}

/// Samples row 0 and bootstraps row 1 with a second-order Taylor step
/// using the discrete Laplacian.
pub fn newton_init(init: &InitialData, grid: &GridSpec, p: &PotentialParams) -> Result<NewtonState> {
    grid.require(LatticeFamily::Aligned)?;
    let n = grid.n_sites;
    let d = grid.delta;
    let row0: Vec<f64> = (0..n).map(|j| init.phi(grid.x(0, j), grid.length)).collect();
    let row1 = (0..n)
        .map(|j| {
            let lap = (d_plus(&row0, j, d) - d_minus(&row0, j, d)) / d;
            row0[j] + d * init.dphi_dt(grid.x(0, j), grid.length)
                + 0.5 * d * d * (lap - p.dv(row0[j]))
        })
        .collect();
    Ok(NewtonState {
        rows: ScalarRows {
            prev: row0,
            curr: row1,
            time_index: 1,
        },
        grid: *grid,
        p: *p,
        bound: DIVERGENCE_BOUND,
        parallel: false,
    })
}

/// Sine initial data of amplitude `a`.
pub fn newton_init_sine(a: f64, grid: &GridSpec, p: &PotentialParams) -> Result<NewtonState> {
    newton_init(&InitialData::Sine { amplitude: a }, grid, p)
}

fn next_row(prev: &[f64], curr: &[f64], delta: f64, p: &PotentialParams, parallel: bool) -> Vec<f64> {
    let n = curr.len();
    let d2 = delta * delta;
    map_sites(n, parallel, |j| {
        -prev[j] + curr[wrap(j, 1, n)] + curr[wrap(j, -1, n)] - d2 * p.dv(curr[j])
    })
}

/// Advances one row.
pub fn newton_step(state: &NewtonState) -> Result<NewtonState> {
    let next = next_row(
        &state.rows.prev,
        &state.rows.curr,
        state.grid.delta,
        &state.p,
        state.parallel,
    );
    check_bound(&next, state.bound, state.rows.time_index + 1)?;
    Ok(NewtonState {
        rows: ScalarRows {
            prev: state.rows.curr.clone(),
            curr: next,
            time_index: state.rows.time_index + 1,
        },
        ..state.clone()
    })
}

pub(crate) fn check_bound(row: &[f64], bound: f64, time_index: i64) -> Result<()> {
    let worst = row
        .iter()
        .fold(0.0f64, |m, v| if v.abs() > m || v.is_nan() { v.abs() } else { m });
    if !(worst <= bound) {
        return Err(Error::Diverged {
            row: time_index,
            value: worst,
            bound,
        });
    }
    Ok(())
}

/// Residual of the discrete equation of motion at `(n, j)`, multiplied by
/// `δ²`.
pub fn eom_residual(prev: &[f64], curr: &[f64], next: &[f64], j: usize, delta: f64, p: &PotentialParams) -> f64 {
    let n = curr.len();
    (next[j] - 2.0 * curr[j] + prev[j]) - (curr[wrap(j, 1, n)] - 2.0 * curr[j] + curr[wrap(j, -1, n)])
        + delta * delta * p.dv(curr[j])
}
