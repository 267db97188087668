//! Discrete stress-energy tensors, local conservation residuals `ε⁰`, `ε¹`,
//! charges `Q⁰`, `Q¹` and the normalised error metric `Δ`.
//!
//! Tensor fields are Cartesian (`T^{μν}` with `μ, ν ∈ {t, x}`); the
//! light-cone tensor `Ť` of the multi-symplectic scheme is mapped back
//! through the rotation before summation. Charges are `Q^μ = h·Σ T^{μ0}`
//! summed left to right, with `h = δ` on the aligned lattice and `√2δ` on
//! the light-cone lattice.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use serde::Serialize;

use crate::bddv::{bddv_lightcone_derivs, denominator};
use crate::model::{
    dot4, dwh_matrices_1p1, hamiltonian, hamiltonian_nonquad, hamiltonian_nonquad_grad, mat_vec, wrap, Mat4,
    PotentialParams, ZetaRow,
};
use crate::msilcc::{cell_of, Diamond};
use crate::newton::{d_minus, d_plus};

/// A residual divided by the largest term entering it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaMetric {
    pub raw_residual: f64,
    pub scale: f64,
    pub value: f64,
}

/// `max|residual| / max|summand|`; zero when every summand vanishes.
pub fn delta_normalize(residual: &[f64], summands: &[f64]) -> DeltaMetric {
    let raw = max_abs(residual);
    let scale = max_abs(summands);
    let value = if scale > 0.0 { raw / scale } else { 0.0 };
    DeltaMetric {
        raw_residual: raw,
        scale,
        value,
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.abs() > m || x.is_nan() { x.abs() } else { m })
}

/// Which one-sided rule a tensor is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

pub type Tensor2 = [[f64; 2]; 2];

/// Cartesian tensor components, one entry per site or cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorField {
    pub t00: Vec<f64>,
    pub t01: Vec<f64>,
    pub t10: Vec<f64>,
    pub t11: Vec<f64>,
}

impl TensorField {
    fn with_capacity(n: usize) -> Self {
        TensorField {
            t00: Vec::with_capacity(n),
            t01: Vec::with_capacity(n),
            t10: Vec::with_capacity(n),
            t11: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: Tensor2) {
        self.t00.push(t[0][0]);
        self.t01.push(t[0][1]);
        self.t10.push(t[1][0]);
        self.t11.push(t[1][1]);
    }

    pub fn len(&self) -> usize {
        self.t00.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t00.is_empty()
    }

    pub fn get(&self, j: usize) -> Tensor2 {
        [[self.t00[j], self.t01[j]], [self.t10[j], self.t11[j]]]
    }
}

/// `(Q⁰, Q¹) = spacing·Σ_j (T⁰⁰, T¹⁰)`, summed sequentially.
pub fn charges(field: &TensorField, spacing: f64) -> (f64, f64) {
    let q0: f64 = field.t00.iter().sum();
    let q1: f64 = field.t10.iter().sum();
    (spacing * q0, spacing * q1)
}

/// Residual fields and the terms they are built from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResidualField {
    pub eps0: Vec<f64>,
    pub eps1: Vec<f64>,
    pub summands0: Vec<f64>,
    pub summands1: Vec<f64>,
}

impl ResidualField {
    pub fn delta0(&self) -> DeltaMetric {
        delta_normalize(&self.eps0, &self.summands0)
    }

    pub fn delta1(&self) -> DeltaMetric {
        delta_normalize(&self.eps1, &self.summands1)
    }
}

fn scalar_tensor(kinetic: f64, potential: f64, t01: f64) -> Tensor2 {
    [[kinetic + potential, t01], [t01, kinetic - potential]]
}

// ---------------------------------------------------------------- Newton

/// `T±` on the aligned lattice at row `n` (`curr`): the `+` branch uses
/// `curr`/`next`, the `−` branch `prev`/`curr`.
pub fn newton_stress_tensor(
    prev: &[f64],
    curr: &[f64],
    next: &[f64],
    delta: f64,
    p: &PotentialParams,
    branch: Branch,
) -> TensorField {
    let n = curr.len();
    let mut out = TensorField::with_capacity(n);
    for j in 0..n {
        let (d0, d1) = match branch {
            Branch::Plus => ((next[j] - curr[j]) / delta, d_plus(curr, j, delta)),
            Branch::Minus => ((curr[j] - prev[j]) / delta, d_minus(curr, j, delta)),
        };
        out.push(scalar_tensor(0.5 * (d0 * d0 + d1 * d1), p.v(curr[j]), -d0 * d1));
    }
    out
}

/// `ε₊` at row `n`: `D₀⁻T₊^{μ0} + D₁⁻T₊^{μ1}`.
pub fn newton_residuals(prev: &[f64], curr: &[f64], next: &[f64], delta: f64, p: &PotentialParams) -> ResidualField {
    let below = newton_stress_tensor(prev, prev, curr, delta, p, Branch::Plus);
    let here = newton_stress_tensor(prev, curr, next, delta, p, Branch::Plus);
    let n = curr.len();
    let mut out = ResidualField::default();
    for j in 0..n {
        let (t, b, w) = (here.get(j), below.get(j), here.get(wrap(j, -1, n)));
        for mu in 0..2 {
            let terms = [t[mu][0] / delta, -b[mu][0] / delta, t[mu][1] / delta, -w[mu][1] / delta];
            let eps = (terms[0] + terms[1]) + (terms[2] + terms[3]);
            let (e, s) = if mu == 0 {
                (&mut out.eps0, &mut out.summands0)
            } else {
                (&mut out.eps1, &mut out.summands1)
            };
            e.push(eps);
            s.extend_from_slice(&terms);
        }
    }
    out
}

/// `E± = δ·Σ T±⁰⁰`.
pub fn newton_energy(prev: &[f64], curr: &[f64], next: &[f64], delta: f64, p: &PotentialParams, branch: Branch) -> f64 {
    charges(&newton_stress_tensor(prev, curr, next, delta, p, branch), delta).0
}

// ------------------------------------------------------------------ BDdV

/// `T±` of the cells of row `n` (`curr`, parity `sigma`), indexed by cell
/// label. The `+` branch takes the upper triangle (`curr`, `next`), the `−`
/// branch the lower one (`prev`, `curr`).
pub fn bddv_stress_tensor(
    prev: &[f64],
    curr: &[f64],
    next: &[f64],
    sigma: i32,
    delta: f64,
    p: &PotentialParams,
    branch: Branch,
) -> TensorField {
    let n = curr.len();
    let plus = branch == Branch::Plus;
    let mut out = TensorField::with_capacity(n);
    for j in 0..n {
        let (d0, d1) = bddv_lightcone_derivs(prev, curr, next, sigma, j, delta, plus);
        let u = curr[j];
        let v = curr[wrap(j, sigma as i64, n)];
        let a = if plus { next[j] } else { prev[j] };
        let s = u * u + v * v;
        let pot = (p.r * (2.0 * a * a + s) + p.lambda * a * a * s) / 8.0;
        out.push(scalar_tensor(0.5 * (d0 * d0 + d1 * d1), pot, 0.5 * (d0 * d0 - d1 * d1)));
    }
    out
}

/// Cells of row `n` that share vertex `(n, j)`: `(left, right)` labels.
#[inline]
fn vertex_cells(j: usize, sigma: i32, n: usize) -> (usize, usize) {
    let s = sigma as i64;
    (wrap(j, -(1 + s) / 2, n), wrap(j, (1 - s) / 2, n))
}

/// `ε₊` at the vertices of row `n`:
/// `√2·ε^μ = Ď₀⁻(T^{μ0} − T^{μ1}) + Ď₁⁻(T^{μ0} + T^{μ1})`, where the dual
/// differences run from the cell below the vertex to its left and right
/// neighbours on row `n`.
pub fn bddv_residuals(
    prev: &[f64],
    curr: &[f64],
    next: &[f64],
    sigma: i32,
    delta: f64,
    p: &PotentialParams,
) -> ResidualField {
    let below = bddv_stress_tensor(prev, prev, curr, -sigma, delta, p, Branch::Plus);
    let here = bddv_stress_tensor(prev, curr, next, sigma, delta, p, Branch::Plus);
    let n = curr.len();
    let h = SQRT_2 * delta;
    let mut out = ResidualField::default();
    for j in 0..n {
        let (lj, rj) = vertex_cells(j, sigma, n);
        let (l, r, b) = (here.get(lj), here.get(rj), below.get(j));
        for mu in 0..2 {
            let diff = |t: &Tensor2| t[mu][0] - t[mu][1];
            let sum = |t: &Tensor2| t[mu][0] + t[mu][1];
            let terms = [diff(&l) / h, -diff(&b) / h, sum(&r) / h, -sum(&b) / h];
            let eps = (terms[0] + terms[1]) + (terms[2] + terms[3]);
            let (e, s) = if mu == 0 {
                (&mut out.eps0, &mut out.summands0)
            } else {
                (&mut out.eps1, &mut out.summands1)
            };
            e.push(eps);
            s.extend_from_slice(&terms);
        }
    }
    out
}

/// `E± = √2δ·Σ T±⁰⁰` over the cells of row `n`.
pub fn bddv_energy(
    prev: &[f64],
    curr: &[f64],
    next: &[f64],
    sigma: i32,
    delta: f64,
    p: &PotentialParams,
    branch: Branch,
) -> f64 {
    charges(&bddv_stress_tensor(prev, curr, next, sigma, delta, p, branch), SQRT_2 * delta).0
}

/// The update residual `R` of every cell of row `n`, for checking
/// `T₊⁰⁰ − T₋⁰⁰ = (φ_{n+1} − φ_{n−1})·R/δ²`.
pub fn bddv_update_residuals(prev: &[f64], curr: &[f64], next: &[f64], sigma: i32, delta: f64, p: &PotentialParams) -> Vec<f64> {
    let n = curr.len();
    (0..n)
        .map(|j| {
            let (u, v) = (curr[j], curr[wrap(j, sigma as i64, n)]);
            (next[j] + prev[j]) * denominator(u, v, delta, p) - u - v
        })
        .collect()
}

// ---------------------------------------------------------------- MSILCC

/// `M̌⁰ = (M⁰ − M¹)/√2`, `M̌¹ = (M⁰ + M¹)/√2`: the structure matrices in
/// light-cone coordinates, `M̌^ν Ď_ν ζ = ∇H(⟨ζ⟩)`.
pub fn lightcone_matrices() -> (Mat4, Mat4) {
    let (m0, m1) = dwh_matrices_1p1();
    let mut a = [[0.0; 4]; 4];
    let mut b = [[0.0; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            a[i][k] = FRAC_1_SQRT_2 * (m0[i][k] - m1[i][k]);
            b[i][k] = FRAC_1_SQRT_2 * (m0[i][k] + m1[i][k]);
        }
    }
    (a, b)
}

/// `ω̌^ν(u, v) = ⟨M̌^ν u, v⟩`.
pub fn omega(nu: usize, u: &[f64; 4], v: &[f64; 4]) -> f64 {
    let (a, b) = lightcone_matrices();
    dot4(&mat_vec(if nu == 0 { &a } else { &b }, u), v)
}

/// Cell data entering `Ť`: `[⟨ζ⟩, Ď₀ζ, Ď₁ζ]` flattened.
pub type Jet = [f64; 12];

pub fn cell_jet(cell: &Diamond<[f64; 4]>, delta: f64) -> Jet {
    let (a, d0, d1) = (cell.average(0), cell.d(0, delta), cell.d(1, delta));
    let mut z = [0.0; 12];
    z[..4].copy_from_slice(&a);
    z[4..8].copy_from_slice(&d0);
    z[8..].copy_from_slice(&d1);
    z
}

fn split(z: &Jet) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let part = |k: usize| -> [f64; 4] { std::array::from_fn(|i| z[4 * k + i]) };
    (part(0), part(1), part(2))
}

/// Light-cone tensor
/// `Ť^{μν} = ½[ω̌^ν(Ď^μζ, ⟨ζ⟩) − η̌^{μν}ω̌^κ(Ď_κζ, ⟨ζ⟩)] + η̌^{μν}H(⟨ζ⟩)`,
/// with `η̌^{01} = η̌^{10} = 1`, `η̌^{00} = η̌^{11} = 0` (so `Ď^0 = Ď_1`).
pub fn lightcone_tensor(z: &Jet, p: &PotentialParams) -> Tensor2 {
    let (a, d0, d1) = split(z);
    let (m0, m1) = lightcone_matrices();
    let w0 = dot4(&mat_vec(&m0, &d0), &a);
    let w1 = dot4(&mat_vec(&m1, &d1), &a);
    let h = hamiltonian(&a, p);
    [
        [0.5 * dot4(&mat_vec(&m0, &d1), &a), -0.5 * w0 + h],
        [-0.5 * w1 + h, 0.5 * dot4(&mat_vec(&m1, &d0), &a)],
    ]
}

/// `T = J⁻¹ Ť J⁻ᵀ` for `x̌⁰ = (t − x)/√2`, `x̌¹ = (t + x)/√2`.
pub fn cartesian_tensor(tc: &Tensor2) -> Tensor2 {
    let [[a, b], [c, d]] = *tc;
    [
        [0.5 * (a + b + c + d), 0.5 * (-a + b - c + d)],
        [0.5 * (-a - b + c + d), 0.5 * (a - b - c + d)],
    ]
}

/// `ε = J⁻¹ ε̌`.
pub fn cartesian_vector(v: [f64; 2]) -> [f64; 2] {
    [FRAC_1_SQRT_2 * (v[0] + v[1]), FRAC_1_SQRT_2 * (v[1] - v[0])]
}

/// Cartesian tensor of every cell of row `n`.
pub fn msilcc_stress_tensor(prev: &ZetaRow, curr: &ZetaRow, next: &ZetaRow, delta: f64, p: &PotentialParams) -> TensorField {
    let n = curr.len();
    let mut out = TensorField::with_capacity(n);
    for j in 0..n {
        let jet = cell_jet(&cell_of(prev, curr, next, j), delta);
        out.push(cartesian_tensor(&lightcone_tensor(&jet, p)));
    }
    out
}

/// The four cells around vertex `(n, j)`, `rows = [n−2, …, n+2]`, as a dual
/// diamond.
pub fn dual_cells(rows: [&ZetaRow; 5], j: usize) -> Diamond<Diamond<[f64; 4]>> {
    let n = rows[2].len();
    let (lj, rj) = vertex_cells(j, rows[2].parity(), n);
    Diamond {
        bottom: cell_of(rows[0], rows[1], rows[2], j),
        left: cell_of(rows[1], rows[2], rows[3], lj),
        right: cell_of(rows[1], rows[2], rows[3], rj),
        top: cell_of(rows[2], rows[3], rows[4], j),
    }
}

fn chain_rule_defect(plus: &[f64; 4], minus: &[f64; 4], at: &[f64; 4], delta: f64, p: &PotentialParams) -> f64 {
    let g = hamiltonian_nonquad_grad(at, p);
    let step: [f64; 4] = std::array::from_fn(|i| plus[i] - minus[i]);
    (hamiltonian_nonquad(plus, p) - hamiltonian_nonquad(minus, p) - dot4(&g, &step)) / delta
}

/// Light-cone component `ε̌^μ` at vertex `(n, j)`:
/// `Ď^μ H_I(⟨ζ⟩) − dH_I(⟨⟨ζ⟩⟩)[Ď^μ⟨ζ⟩]`, built from the averages of the
/// four surrounding cells. Only the non-quadratic part `H_I` contributes.
pub fn msilcc_residual_exact(rows: [&ZetaRow; 5], j: usize, mu: usize, delta: f64, p: &PotentialParams) -> f64 {
    let avg = dual_cells(rows, j).map(|c| c.average(0));
    let nu = 1 - mu;
    chain_rule_defect(&avg.plus(nu), &avg.minus(nu), &avg.average(0), delta, p)
}

/// Single-cell estimator of [`msilcc_residual_exact`] for the cell of row
/// `n` labelled `j`: `Ď^μ H_I(ζ) − dH_I(⟨ζ⟩)[Ď^μζ]`.
pub fn msilcc_residual_estimator(
    prev: &ZetaRow,
    curr: &ZetaRow,
    next: &ZetaRow,
    j: usize,
    mu: usize,
    delta: f64,
    p: &PotentialParams,
) -> f64 {
    let c = cell_of(prev, curr, next, j);
    let nu = 1 - mu;
    chain_rule_defect(&c.plus(nu), &c.minus(nu), &c.average(0), delta, p)
}

/// `Ď_νŤ^{μν}` at vertex `(n, j)` evaluated term by term on the dual
/// diamond (products by the midpoint rule, i.e. the quadratic Leibniz
/// rule). Cross-check of [`msilcc_residual_exact`].
pub fn msilcc_divergence_direct(rows: [&ZetaRow; 5], j: usize, delta: f64, p: &PotentialParams) -> [f64; 2] {
    let jets = dual_cells(rows, j).map(|c| cell_jet(c, delta));
    std::array::from_fn(|mu| (0..2).map(|nu| jets.apply(nu, delta, |z| lightcone_tensor(z, p)[mu][nu])).sum())
}

/// Cartesian `ε` at every vertex of row `n`, from the closed form.
/// Summands are the Cartesian tensor entries of the four surrounding cells
/// divided by `δ`.
pub fn msilcc_residuals(rows: [&ZetaRow; 5], delta: f64, p: &PotentialParams) -> ResidualField {
    let n = rows[2].len();
    let lower = msilcc_stress_tensor(rows[0], rows[1], rows[2], delta, p);
    let here = msilcc_stress_tensor(rows[1], rows[2], rows[3], delta, p);
    let upper = msilcc_stress_tensor(rows[2], rows[3], rows[4], delta, p);
    let mut out = ResidualField::default();
    for j in 0..n {
        let lc = [
            msilcc_residual_exact(rows, j, 0, delta, p),
            msilcc_residual_exact(rows, j, 1, delta, p),
        ];
        let [e0, e1] = cartesian_vector(lc);
        out.eps0.push(e0);
        out.eps1.push(e1);
        let (lj, rj) = vertex_cells(j, rows[2].parity(), n);
        for t in [lower.get(j), here.get(lj), here.get(rj), upper.get(j)] {
            out.summands0.extend([t[0][0] / delta, t[0][1] / delta]);
            out.summands1.extend([t[1][0] / delta, t[1][1] / delta]);
        }
    }
    out
}

/// Estimator field on the cells of row `n` (Cartesian).
pub fn msilcc_estimator_field(prev: &ZetaRow, curr: &ZetaRow, next: &ZetaRow, delta: f64, p: &PotentialParams) -> (Vec<f64>, Vec<f64>) {
    (0..curr.len())
        .map(|j| {
            let lc = [0, 1].map(|mu| msilcc_residual_estimator(prev, curr, next, j, mu, delta, p));
            let [a, b] = cartesian_vector(lc);
            (a, b)
        })
        .unzip()
}

/// `E = √2δ·Σ T⁰⁰` over the cells of row `n`.
pub fn msilcc_charges(prev: &ZetaRow, curr: &ZetaRow, next: &ZetaRow, delta: f64, p: &PotentialParams) -> (f64, f64) {
    charges(&msilcc_stress_tensor(prev, curr, next, delta, p), SQRT_2 * delta)
}

/// `Ď_ν ω̌^ν(dζ, dζ′)` on the cell of row `n` labelled `j`, for two tangent
/// fields given on rows `n−1..n+1`.
pub fn multisymplectic_defect(a: [&ZetaRow; 3], b: [&ZetaRow; 3], j: usize, delta: f64) -> f64 {
    let ca = cell_of(a[0], a[1], a[2], j);
    let cb = cell_of(b[0], b[1], b[2], j);
    let join = |x: &[f64; 4], y: &[f64; 4]| -> [f64; 8] { std::array::from_fn(|i| if i < 4 { x[i] } else { y[i - 4] }) };
    let pair = Diamond {
        bottom: join(&ca.bottom, &cb.bottom),
        left: join(&ca.left, &cb.left),
        right: join(&ca.right, &cb.right),
        top: join(&ca.top, &cb.top),
    };
    let (m0, m1) = lightcone_matrices();
    (0..2)
        .map(|nu| {
            let m = if nu == 0 { &m0 } else { &m1 };
            pair.apply(nu, delta, |z| {
                let u: [f64; 4] = std::array::from_fn(|i| z[i]);
                let v: [f64; 4] = std::array::from_fn(|i| z[i + 4]);
                dot4(&mat_vec(m, &u), &v)
            })
        })
        .sum()
}

// ----------------------------------------------------------- bookkeeping

/// Histogram of `values / mean(values)` over `bins` uniform bins on
/// `[lo, hi]`; out-of-range values are dropped.
pub fn energy_histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    if values.is_empty() || bins == 0 {
        return counts;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let x = v / mean;
        if (lo..=hi).contains(&x) {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    counts
}

/// One recorded time row.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub n: i64,
    pub time: f64,
    pub t_over_l: f64,
    pub energy: Option<f64>,
    pub e_plus: Option<f64>,
    pub e_minus: Option<f64>,
    pub q0: Option<f64>,
    pub q1: Option<f64>,
    pub eps0_max: Option<f64>,
    pub eps1_max: Option<f64>,
    pub eps0_peak: Option<f64>,
    pub eps1_peak: Option<f64>,
    pub delta0: Option<f64>,
    pub delta1: Option<f64>,
    pub delta0_peak: Option<f64>,
    pub delta1_peak: Option<f64>,
    pub parity: i32,
    pub diverged: bool,
}

/// Running maxima of the residual columns.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PeakTracker {
    eps: [Option<f64>; 2],
    delta: [Option<f64>; 2],
}

fn bump(slot: &mut Option<f64>, v: Option<f64>) -> Option<f64> {
    if let Some(v) = v {
        *slot = Some(slot.map_or(v, |s| if v > s || v.is_nan() { v } else { s }));
    }
    *slot
}

impl PeakTracker {
    /// Folds the row maxima of `rec` into the peaks and writes them back.
    pub fn update(&mut self, rec: &mut DiagnosticsRecord) {
        rec.eps0_peak = bump(&mut self.eps[0], rec.eps0_max);
        rec.eps1_peak = bump(&mut self.eps[1], rec.eps1_max);
        rec.delta0_peak = bump(&mut self.delta[0], rec.delta0);
        rec.delta1_peak = bump(&mut self.delta[1], rec.delta1);
    }

    pub fn delta_peak(&self) -> [Option<f64>; 2] {
        self.delta
    }
}

/// Copies residual maxima and `Δ` values into a record.
pub fn fill_residuals(rec: &mut DiagnosticsRecord, res: &ResidualField) {
    let (d0, d1) = (res.delta0(), res.delta1());
    rec.eps0_max = Some(d0.raw_residual);
    rec.eps1_max = Some(d1.raw_residual);
    rec.delta0 = Some(d0.value);
    rec.delta1 = Some(d1.value);
}
