//! Continuum model: potential, lattices, initial data, exact energy and the
//! four-field De Donder–Weyl form of the 1+1 λφ⁴ equation
//!
//! ```text
//! ∂₀²φ − ∂₁²φ + V′(φ) = 0,    V(φ) = r/2·φ² + λ/4·φ⁴
//! ```
//!
//! on a periodic interval of length `L`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 4×4 real matrix, row major.
pub type Mat4 = [[f64; 4]; 4];

/// Coefficients of `V(φ) = r/2·φ² + λ/4·φ⁴` and of the auxiliary
/// potential `Ṽ(γ) = r̃/2·γ² + λ̃/4·γ⁴` of the extra field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    pub r: f64,
    pub lambda: f64,
    pub r_tilde: f64,
    pub lambda_tilde: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        Self::new(1.0, 1.0)
    }
}

impl PotentialParams {
    /// `V` with the given coefficients and a free auxiliary field.
    pub fn new(r: f64, lambda: f64) -> Self {
        Self {
            r,
            lambda,
            r_tilde: 0.0,
            lambda_tilde: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.r, self.lambda, self.r_tilde, self.lambda_tilde];
        if all.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("potential coefficients must be finite".into()));
        }
        if self.lambda < 0.0 || self.lambda_tilde < 0.0 {
            return Err(Error::Config(
                "quartic coefficients must be non-negative".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn v(&self, phi: f64) -> f64 {
        let p2 = phi * phi;
        0.5 * self.r * p2 + 0.25 * self.lambda * p2 * p2
    }

    #[inline]
    pub fn dv(&self, phi: f64) -> f64 {
        phi * (self.r + self.lambda * phi * phi)
    }

    #[inline]
    pub fn d2v(&self, phi: f64) -> f64 {
        self.r + 3.0 * self.lambda * phi * phi
    }

    /// Non-quadratic part of `V`: `λ/4·φ⁴`.
    #[inline]
    pub fn v_nonquad(&self, phi: f64) -> f64 {
        let p2 = phi * phi;
        0.25 * self.lambda * p2 * p2
    }

    #[inline]
    pub fn dv_nonquad(&self, phi: f64) -> f64 {
        self.lambda * phi * phi * phi
    }

    #[inline]
    pub fn v_aux(&self, gamma: f64) -> f64 {
        let g2 = gamma * gamma;
        0.5 * self.r_tilde * g2 + 0.25 * self.lambda_tilde * g2 * g2
    }

    #[inline]
    pub fn dv_aux(&self, gamma: f64) -> f64 {
        gamma * (self.r_tilde + self.lambda_tilde * gamma * gamma)
    }

    #[inline]
    pub fn d2v_aux(&self, gamma: f64) -> f64 {
        self.r_tilde + 3.0 * self.lambda_tilde * gamma * gamma
    }

    #[inline]
    pub fn v_aux_nonquad(&self, gamma: f64) -> f64 {
        let g2 = gamma * gamma;
        0.25 * self.lambda_tilde * g2 * g2
    }

    #[inline]
    pub fn dv_aux_nonquad(&self, gamma: f64) -> f64 {
        self.lambda_tilde * gamma * gamma * gamma
    }

    /// `true` when the Hamiltonian density is purely quadratic.
    pub fn is_linear(&self) -> bool {
        self.lambda == 0.0 && self.lambda_tilde == 0.0
    }
}

/// `V(φ) = r/2·φ² + λ/4·φ⁴`.
pub fn potential_value(phi: f64, p: &PotentialParams) -> f64 {
    p.v(phi)
}

/// `V′(φ) = r·φ + λ·φ³`.
pub fn potential_deriv(phi: f64, p: &PotentialParams) -> f64 {
    p.dv(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeFamily {
    /// Square cells aligned with the (x, t) axes; `dt = dx = δ`.
    Aligned,
    /// Square cells aligned with the light cone; staggered rows,
    /// `dt = δ/√2`, site spacing `√2·δ`.
    Lightcone,
}

impl LatticeFamily {
    pub fn name(self) -> &'static str {
        match self {
            LatticeFamily::Aligned => "aligned",
            LatticeFamily::Lightcone => "lightcone",
        }
    }
}

/// Periodic lattice geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub family: LatticeFamily,
    pub n_sites: usize,
    pub delta: f64,
    pub length: f64,
}

impl GridSpec {
    /// Aligned lattice of `n` sites spanning `length` (`δ = L/N`).
    pub fn aligned(n: usize, length: f64) -> Result<Self> {
        let g = GridSpec {
            family: LatticeFamily::Aligned,
            n_sites: n,
            delta: length / n as f64,
            length,
        };
        g.validate()?;
        Ok(g)
    }

    /// Light-cone lattice of `n` sites per row spanning `length`
    /// (`δ = L/(√2·N)`).
    pub fn lightcone(n: usize, length: f64) -> Result<Self> {
        let g = GridSpec {
            family: LatticeFamily::Lightcone,
            n_sites: n,
            delta: length / (SQRT_2 * n as f64),
            length,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::Config(format!(
                "length must be positive, got {}",
                self.length
            )));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!(
                "spacing must be positive, got {}",
                self.delta
            )));
        }
        if self.n_sites < 4 {
            return Err(Error::Config(format!(
                "need at least 4 sites, got {}",
                self.n_sites
            )));
        }
        let span = match self.family {
            LatticeFamily::Aligned => self.n_sites as f64 * self.delta,
            LatticeFamily::Lightcone => {
                if self.n_sites % 2 != 0 {
                    return Err(Error::Config(format!(
                        "light-cone lattice needs an even site count, got {}",
                        self.n_sites
                    )));
                }
                SQRT_2 * self.n_sites as f64 * self.delta
            }
        };
        if (span - self.length).abs() > 1e-12 * self.length {
            return Err(Error::Config(format!(
                "grid span {span} does not match length {}",
                self.length
            )));
        }
        Ok(())
    }

    pub fn require(&self, family: LatticeFamily) -> Result<()> {
        if self.family != family {
            return Err(Error::WrongLattice {
                expected: family.name(),
                found: self.family.name(),
            });
        }
        Ok(())
    }

    /// Time step between consecutive rows.
    pub fn dt(&self) -> f64 {
        match self.family {
            LatticeFamily::Aligned => self.delta,
            LatticeFamily::Lightcone => self.delta / SQRT_2,
        }
    }

    /// Distance between neighbouring sites of one row.
    pub fn dx(&self) -> f64 {
        match self.family {
            LatticeFamily::Aligned => self.delta,
            LatticeFamily::Lightcone => SQRT_2 * self.delta,
        }
    }

    pub fn time(&self, n: i64) -> f64 {
        n as f64 * self.dt()
    }

    /// Position of site `j` on row `n`. Light-cone rows with `σ_n = +1`
    /// are shifted by half a site to the left.
    pub fn x(&self, n: i64, j: usize) -> f64 {
        match self.family {
            LatticeFamily::Aligned => j as f64 * self.delta,
            LatticeFamily::Lightcone => {
                let shift = (1.0 + parity(n) as f64) / 4.0;
                SQRT_2 * self.delta * (j as f64 - shift)
            }
        }
    }

    /// Number of rows needed to reach `t = duration_over_l · L`.
    pub fn rows_for(&self, duration_over_l: f64) -> i64 {
        (duration_over_l * self.length / self.dt() - 1e-9).ceil().max(0.0) as i64
    }
}

/// Row parity `σ_n = 2(n mod 2) − 1`.
#[inline]
pub fn parity(n: i64) -> i32 {
    2 * n.rem_euclid(2) as i32 - 1
}

/// Periodic index `j + offset` on a row of `n` sites.
#[inline]
pub fn wrap(j: usize, offset: i64, n: usize) -> usize {
    (j as i64 + offset).rem_euclid(n as i64) as usize
}

/// One time-row of the four-field state `ζ = (φ, ψ⁰, ψ¹, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaRow {
    pub phi: Vec<f64>,
    pub psi0: Vec<f64>,
    pub psi1: Vec<f64>,
    pub gamma: Vec<f64>,
    pub time_index: i64,
}

impl ZetaRow {
    pub fn zeros(n: usize, time_index: i64) -> Self {
        ZetaRow {
            phi: vec![0.0; n],
            psi0: vec![0.0; n],
            psi1: vec![0.0; n],
            gamma: vec![0.0; n],
            time_index,
        }
    }

    pub fn from_sites(sites: &[[f64; 4]], time_index: i64) -> Self {
        let mut row = Self::zeros(sites.len(), time_index);
        for (j, z) in sites.iter().enumerate() {
            row.set(j, *z);
        }
        row
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn parity(&self) -> i32 {
        parity(self.time_index)
    }

    #[inline]
    pub fn get(&self, j: usize) -> [f64; 4] {
        [self.phi[j], self.psi0[j], self.psi1[j], self.gamma[j]]
    }

    #[inline]
    pub fn set(&mut self, j: usize, z: [f64; 4]) {
        self.phi[j] = z[0];
        self.psi0[j] = z[1];
        self.psi1[j] = z[2];
        self.gamma[j] = z[3];
    }

    pub fn max_abs(&self) -> f64 {
        self.phi
            .iter()
            .chain(&self.psi0)
            .chain(&self.psi1)
            .chain(&self.gamma)
            .fold(0.0, |m, v| if v.abs() > m || v.is_nan() { v.abs() } else { m })
    }
}

/// Two consecutive rows of a scalar field (`curr` is row `time_index`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarRows {
    pub prev: Vec<f64>,
    pub curr: Vec<f64>,
    pub time_index: i64,
}

impl ScalarRows {
    pub fn parity(&self) -> i32 {
        parity(self.time_index)
    }
}

/// Initial data at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialData {
    /// `φ = A·sin(2πx/L)`, `∂₀φ = 0`.
    Sine { amplitude: f64 },
    /// `φ = A`, `∂₀φ = 0`: the homogeneous Jacobi-cn oscillation.
    Homogeneous { amplitude: f64 },
}

impl InitialData {
    pub fn amplitude(&self) -> f64 {
        match *self {
            InitialData::Sine { amplitude } | InitialData::Homogeneous { amplitude } => amplitude,
        }
    }

    pub fn phi(&self, x: f64, length: f64) -> f64 {
        match *self {
            InitialData::Sine { amplitude } => initial_condition_sine(amplitude, length, x).0,
            InitialData::Homogeneous { amplitude } => amplitude,
        }
    }

    pub fn dphi_dt(&self, _x: f64, _length: f64) -> f64 {
        0.0
    }

    pub fn d2phi_dx2(&self, x: f64, length: f64) -> f64 {
        match *self {
            InitialData::Sine { amplitude } => {
                let k = 2.0 * PI / length;
                -k * k * amplitude * (k * x).sin()
            }
            InitialData::Homogeneous { .. } => 0.0,
        }
    }

    /// `∂₀²φ` at `t = 0` from the equation of motion.
    pub fn d2phi_dt2(&self, x: f64, length: f64, p: &PotentialParams) -> f64 {
        self.d2phi_dx2(x, length) - p.dv(self.phi(x, length))
    }

    /// Second-order Taylor sample `φ(x, t)` for small `t`.
    pub fn taylor(&self, x: f64, t: f64, length: f64, p: &PotentialParams) -> f64 {
        self.phi(x, length)
            + t * self.dphi_dt(x, length)
            + 0.5 * t * t * self.d2phi_dt2(x, length, p)
    }

    /// Exact continuum energy of the data.
    pub fn energy(&self, length: f64, p: &PotentialParams) -> f64 {
        match *self {
            InitialData::Sine { amplitude } => exact_initial_energy(amplitude, length, p),
            InitialData::Homogeneous { amplitude } => length * p.v(amplitude),
        }
    }
}

/// `(A·sin(2πx/L), 0)`.
pub fn initial_condition_sine(amplitude: f64, length: f64, x: f64) -> (f64, f64) {
    (amplitude * (2.0 * PI * x / length).sin(), 0.0)
}

/// Energy of the sine initial data:
/// `A²π²/L + r·A²L/4 + 3λ·A⁴L/32`.
pub fn exact_initial_energy(amplitude: f64, length: f64, p: &PotentialParams) -> f64 {
    let a2 = amplitude * amplitude;
    a2 * PI * PI / length + p.r * a2 * length / 4.0 + 3.0 * p.lambda * a2 * a2 * length / 32.0
}

/// Cartesian → light-cone coordinates:
/// `x̌⁰ = (x⁰ − x¹)/√2`, `x̌¹ = √2·x¹ + x̌⁰`.
pub fn lightcone_map(x0: f64, x1: f64) -> (f64, f64) {
    let c0 = (x0 - x1) / SQRT_2;
    (c0, SQRT_2 * x1 + c0)
}

/// Inverse of [`lightcone_map`].
pub fn lightcone_unmap(c0: f64, c1: f64) -> (f64, f64) {
    let x1 = (c1 - c0) / SQRT_2;
    (SQRT_2 * c0 + x1, x1)
}

/// The non-degenerate `M⁰`, `M¹` of the four-field system
/// `ζ = (φ, ψ⁰, ψ¹, γ)`, with `M^μ ∂_μ ζ = ∇H(ζ)`.
pub fn dwh_matrices_1p1() -> (Mat4, Mat4) {
    let m0 = [
        [0.0, -1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
    ];
    let m1 = [
        [0.0, 0.0, -1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
    ];
    (m0, m1)
}

/// Hamiltonian density `H = ½ψ⁰² − ½ψ¹² + V(φ) + Ṽ(γ)`.
pub fn hamiltonian(z: &[f64; 4], p: &PotentialParams) -> f64 {
    0.5 * z[1] * z[1] - 0.5 * z[2] * z[2] + p.v(z[0]) + p.v_aux(z[3])
}

/// `∇H = (V′(φ), ψ⁰, −ψ¹, Ṽ′(γ))`.
pub fn hamiltonian_grad(z: &[f64; 4], p: &PotentialParams) -> [f64; 4] {
    [p.dv(z[0]), z[1], -z[2], p.dv_aux(z[3])]
}

/// Non-quadratic part of `H`.
pub fn hamiltonian_nonquad(z: &[f64; 4], p: &PotentialParams) -> f64 {
    p.v_nonquad(z[0]) + p.v_aux_nonquad(z[3])
}

pub fn hamiltonian_nonquad_grad(z: &[f64; 4], p: &PotentialParams) -> [f64; 4] {
    [p.dv_nonquad(z[0]), 0.0, 0.0, p.dv_aux_nonquad(z[3])]
}

/// `∂₀²φ − ∂₁²φ + V′(φ)` from caller-supplied derivative estimates.
pub fn continuum_residual(phi: f64, phi_tt: f64, phi_xx: f64, p: &PotentialParams) -> f64 {
    phi_tt - phi_xx + p.dv(phi)
}

pub(crate) fn mat_vec(m: &Mat4, v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
    }
    out
}

pub(crate) fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}
