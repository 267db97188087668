//! Boyanovsky–Destri–de Vega scheme on the light-cone lattice.
//!
//! Site `j` of row `n+1` sits above the cell spanned by `φ_n^j` and
//! `φ_n^{j+σ_n}`. The update
//!
//! ```text
//! φ_{n+1}^j = −φ_{n−1}^j + (u + v) / (1 + δ²/8·(2r + λ(u² + v²))),
//! u = φ_n^j, v = φ_n^{j+σ_n}
//! ```
//!
//! is the exact root of the residual `R` below, which makes the discrete
//! total energy an exact invariant.

use crate::error::{Error, Result};
use crate::exec::map_sites;
use crate::model::{parity, wrap, GridSpec, InitialData, LatticeFamily, PotentialParams, ScalarRows};
use crate::newton::{check_bound, DIVERGENCE_BOUND};

#[derive(Debug, Clone, PartialEq)]
pub struct BddvState {
    pub rows: ScalarRows,
    pub grid: GridSpec,
    pub p: PotentialParams,
    pub bound: f64,
    pub parallel: bool,
}

/// `1 + δ²/8·(2r + λ(u² + v²))`.
#[inline]
pub fn denominator(u: f64, v: f64, delta: f64, p: &PotentialParams) -> f64 {
    1.0 + delta * delta / 8.0 * (2.0 * p.r + p.lambda * (u * u + v * v))
}

/// Row 0 sampled at its sites, row 1 from a second-order Taylor expansion
/// in time at the staggered row-1 positions.
pub fn bddv_init(init: &InitialData, grid: &GridSpec, p: &PotentialParams) -> Result<BddvState> {
    grid.require(LatticeFamily::Lightcone)?;
    let n = grid.n_sites;
    let l = grid.length;
    let row0 = (0..n).map(|j| init.phi(grid.x(0, j), l)).collect();
    let t1 = grid.time(1);
    let row1 = (0..n).map(|j| init.taylor(grid.x(1, j), t1, l, p)).collect();
    Ok(BddvState {
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

pub fn bddv_init_sine(a: f64, grid: &GridSpec, p: &PotentialParams) -> Result<BddvState> {
    bddv_init(&InitialData::Sine { amplitude: a }, grid, p)
}

/// Advances one row.
pub fn bddv_step(state: &BddvState) -> Result<BddvState> {
    let rows = &state.rows;
    let n = rows.curr.len();
    let sigma = rows.parity() as i64;
    let delta = state.grid.delta;
    let next: Vec<Result<f64>> = map_sites(n, state.parallel, |j| {
        let u = rows.curr[j];
        let v = rows.curr[wrap(j, sigma, n)];
        let den = denominator(u, v, delta, &state.p);
        if !(den > 0.0) {
            return Err(Error::Singular {
                row: rows.time_index + 1,
                site: j,
                detail: format!("update denominator {den} is not positive"),
            });
        }
        Ok(-rows.prev[j] + (u + v) / den)
    });
    let next = next.into_iter().collect::<Result<Vec<f64>>>()?;
    check_bound(&next, state.bound, rows.time_index + 1)?;
    Ok(BddvState {
        rows: ScalarRows {
            prev: rows.curr.clone(),
            curr: next,
            time_index: rows.time_index + 1,
        },
        ..state.clone()
    })
}

/// `R = (φ_{n+1}^j + φ_{n−1}^j)·den(u, v) − u − v` for the cell of row `n`
/// (parity `σ_n`) labelled `j`.
pub fn bddv_residual_r(
    prev: &[f64],
    curr: &[f64],
    next: &[f64],
    sigma: i32,
    j: usize,
    delta: f64,
    p: &PotentialParams,
) -> f64 {
    let u = curr[j];
    let v = curr[wrap(j, sigma as i64, curr.len())];
    (next[j] + prev[j]) * denominator(u, v, delta, p) - u - v
}

/// Light-cone one-sided derivatives `(Ď₀±, Ď₁±)` of the cell of row `n`
/// labelled `j`; `plus` selects the upper (`n+1`) triangle.
///
/// `Ď₀` runs along `(∂₀ − ∂₁)/√2`, `Ď₁` along `(∂₀ + ∂₁)/√2`.
pub fn bddv_lightcone_derivs(
    prev: &[f64],
    curr: &[f64],
    next: &[f64],
    sigma: i32,
    j: usize,
    delta: f64,
    plus: bool,
) -> (f64, f64) {
    let n = curr.len();
    let s = sigma as i64;
    let right = curr[wrap(j, (s + 1) / 2, n)];
    let left = curr[wrap(j, (s - 1) / 2, n)];
    if plus {
        ((next[j] - right) / delta, (next[j] - left) / delta)
    } else {
        ((left - prev[j]) / delta, (right - prev[j]) / delta)
    }
}

impl BddvState {
    pub fn parity(&self) -> i32 {
        parity(self.rows.time_index)
    }
}
