//! Reference solutions: linear modes, the homogeneous Jacobi-cn oscillation
//! and an adaptive Dormand–Prince integrator for `φ̈ = −V′(φ)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::PotentialParams;

/// `A·sin(2πx/L)·cos(2πt/L)`, the second eigenmode of `□φ = 0`.
pub fn linear_mode(amplitude: f64, length: f64, x: f64, t: f64) -> f64 {
    let k = 2.0 * PI / length;
    amplitude * (k * x).sin() * (k * t).cos()
}

/// Standing Klein–Gordon mode `A·sin(kx)·cos(ωt)`, `ω = √(k² + r)`,
/// the exact solution of the linearised equation.
pub fn klein_gordon_mode(amplitude: f64, length: f64, r: f64, x: f64, t: f64) -> f64 {
    let k = 2.0 * PI / length;
    let w = (k * k + r).sqrt();
    amplitude * (k * x).sin() * (w * t).cos()
}

/// Jacobi amplitude functions `(sn, cn, dn)(u | m)` with parameter `m = k²`,
/// by the arithmetic-geometric mean and descending Landen transformation.
pub fn jacobi_sn_cn_dn(u: f64, m: f64) -> Result<(f64, f64, f64)> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::Modulus(m));
    }
    if m == 0.0 {
        return Ok((u.sin(), u.cos(), 1.0));
    }
    // reduce u modulo the real period 4K
    let k = elliptic_k(m)?;
    let period = 4.0 * k;
    let u = u - period * (u / period).round();

    const MAX: usize = 16;
    let mut a = [0.0; MAX + 1];
    let mut c = [0.0; MAX + 1];
    a[0] = 1.0;
    let mut b = (1.0 - m).sqrt();
    c[0] = m.sqrt();
    let mut steps = 0;
    while steps < MAX && c[steps].abs() > f64::EPSILON * a[steps] {
        let (an, bn) = (a[steps], b);
        a[steps + 1] = 0.5 * (an + bn);
        c[steps + 1] = 0.5 * (an - bn);
        b = (an * bn).sqrt();
        steps += 1;
    }
    let mut phi = (1u64 << steps) as f64 * a[steps] * u;
    for i in (1..=steps).rev() {
        phi = 0.5 * (phi + (c[i] / a[i] * phi.sin()).asin());
    }
    let (sn, cn) = (phi.sin(), phi.cos());
    let dn = (1.0 - m * sn * sn).sqrt();
    Ok((sn, cn, dn))
}

/// Complete elliptic integral of the first kind `K(m) = π/(2·AGM(1, √(1−m)))`.
pub fn elliptic_k(m: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::Modulus(m));
    }
    let (mut a, mut b) = (1.0f64, (1.0 - m).sqrt());
    while (a - b).abs() > f64::EPSILON * a {
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    Ok(PI / (2.0 * a))
}

/// Homogeneous solution `φ(t) = A·cn(ωt, k)` of `φ̈ + rφ + λφ³ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnSolution {
    pub amplitude: f64,
    pub omega: f64,
    /// Parameter `m = k²`.
    pub m: f64,
}

impl CnSolution {
    pub fn new(amplitude: f64, p: &PotentialParams) -> Result<Self> {
        let w2 = p.r + p.lambda * amplitude * amplitude;
        if !(w2 > 0.0) {
            return Err(Error::Config(format!(
                "cn solution needs r + λA² > 0, got {w2}"
            )));
        }
        let m = p.lambda * amplitude * amplitude / (2.0 * w2);
        if !(0.0..1.0).contains(&m) {
            return Err(Error::Modulus(m));
        }
        Ok(CnSolution {
            amplitude,
            omega: w2.sqrt(),
            m,
        })
    }

    /// Real period `4K(k)/ω`.
    pub fn period(&self) -> f64 {
        4.0 * elliptic_k(self.m).expect("validated modulus") / self.omega
    }

    pub fn value(&self, t: f64) -> f64 {
        let (_, cn, _) = jacobi_sn_cn_dn(self.omega * t, self.m).expect("validated modulus");
        self.amplitude * cn
    }

    /// `φ̇ = −A·ω·sn·dn`.
    pub fn velocity(&self, t: f64) -> f64 {
        let (sn, _, dn) = jacobi_sn_cn_dn(self.omega * t, self.m).expect("validated modulus");
        -self.amplitude * self.omega * sn * dn
    }
}

/// `A·cn(ωt, k)` for the given potential.
pub fn cn_value(amplitude: f64, p: &PotentialParams, t: f64) -> Result<f64> {
    Ok(CnSolution::new(amplitude, p)?.value(t))
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `φ̈ = −V′(φ)` from `t = 0` to `t` with adaptive
/// Dormand–Prince 5(4) steps at local tolerance `tol` (mixed
/// absolute/relative).
pub fn ode_oracle(phi0: f64, dphi0: f64, p: &PotentialParams, t: f64, tol: f64) -> Result<(f64, f64)> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let f = |y: [f64; 2]| [y[1], -p.dv(y[0])];
    let mut y = [phi0, dphi0];
    let (sign, end) = (t.signum(), t.abs());
    let mut s = 0.0;
    let mut h = (end * 1e-3).max(1e-6).min(end);
    while s < end {
        if h < 1e-14 * end.max(1.0) {
            return Err(Error::StepUnderflow(s));
        }
        let h_try = h.min(end - s);
        let hs = sign * h_try;
        let mut k = [[0.0; 2]; 7];
        for i in 0..7 {
            let mut yi = y;
            for (kj, aij) in k.iter().zip(&A[i]).take(i) {
                yi[0] += hs * aij * kj[0];
                yi[1] += hs * aij * kj[1];
            }
            k[i] = f(yi);
        }
        let mut y5 = y;
        let mut err = 0.0f64;
        for d in 0..2 {
            let mut inc5 = 0.0;
            let mut inc4 = 0.0;
            for i in 0..7 {
                inc5 += B5[i] * k[i][d];
                inc4 += B4[i] * k[i][d];
            }
            y5[d] += hs * inc5;
            let scale = tol * (1.0 + y[d].abs().max(y5[d].abs()));
            err = err.max((hs * (inc5 - inc4)).abs() / scale);
        }
        if err <= 1.0 {
            s += h_try;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = h_try * factor;
    }
    Ok((y[0], y[1]))
}
