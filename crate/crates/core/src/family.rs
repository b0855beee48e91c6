//! Measure/basis families and their tilted orthogonal bases.
//!
//! Every family fixes a time-varying probability measure `nu_t` and basis
//! functions `g_n(t, x)` with `<g_n, g_m>_{nu_t} = lambda_n^2 delta_nm`. The
//! coefficient convention is `c_n(t) = <f, g_n>_{nu_t}` (conjugate-linear in
//! the second slot), and the reconstruction is `sum_n lambda_n^{-2} c_n g_n`.

use crate::error::{HippoError, Result};
use crate::polys;
use crate::quad::Rule;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LegtScaling {
    /// `lambda_n = 1`.
    Orthonormal,
    /// `lambda_n = (2n+1)^{1/2} (-1)^n`, the Legendre Memory Unit scaling.
    Lmu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    /// Uniform sliding window `[t - theta, t]`, Legendre basis.
    Legt { theta: f64, scaling: LegtScaling },
    /// Exponentially decaying past with generalized Laguerre basis and tilt `beta`.
    Lagt { alpha: f64, beta: f64 },
    /// Uniform over all history `[0, t]`, scaled Legendre basis.
    Legs,
    /// Uniform sliding window with the Fourier basis.
    Fourt { theta: f64 },
    /// Decoupled per-frequency recurrence.
    Fru { theta: f64, freqs: Vec<u32> },
    /// Sliding window with the tilted Chebyshev basis.
    Chebt { theta: f64 },
}

impl Family {
    pub fn legt(theta: f64, scaling: LegtScaling) -> Result<Self> {
        let f = Family::Legt { theta, scaling };
        f.validate()?;
        Ok(f)
    }

    pub fn lagt(alpha: f64, beta: f64) -> Result<Self> {
        let f = Family::Lagt { alpha, beta };
        f.validate()?;
        Ok(f)
    }

    pub fn fourt(theta: f64) -> Result<Self> {
        let f = Family::Fourt { theta };
        f.validate()?;
        Ok(f)
    }

    pub fn fru(theta: f64, freqs: Vec<u32>) -> Result<Self> {
        let f = Family::Fru { theta, freqs };
        f.validate()?;
        Ok(f)
    }

    pub fn chebt(theta: f64) -> Result<Self> {
        let f = Family::Chebt { theta };
        f.validate()?;
        Ok(f)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Legt { .. } => "legt",
            Family::Lagt { .. } => "lagt",
            Family::Legs => "legs",
            Family::Fourt { .. } => "fourt",
            Family::Fru { .. } => "fru",
            Family::Chebt { .. } => "chebt",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HippoError::InvalidParameter(m));
        match self {
            Family::Legt { theta, .. }
            | Family::Fourt { theta }
            | Family::Chebt { theta } => {
                if !(*theta > 0.0 && theta.is_finite()) {
                    return bad(format!("theta must be positive, got {theta}"));
                }
            }
            Family::Fru { theta, freqs } => {
                if !(*theta > 0.0 && theta.is_finite()) {
                    return bad(format!("theta must be positive, got {theta}"));
                }
                let mut sorted = freqs.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != freqs.len() {
                    return bad("FRU frequencies must be distinct".into());
                }
            }
            Family::Lagt { alpha, beta } => {
                if !(*alpha > -1.0 && *alpha < 1.0) {
                    return bad(format!("LagT alpha must lie in (-1, 1), got {alpha}"));
                }
                if !(*beta > 0.0 && beta.is_finite()) {
                    return bad(format!("LagT beta must be positive, got {beta}"));
                }
            }
            Family::Legs => {}
        }
        Ok(())
    }

    /// Whether coefficients are complex.
    pub fn is_complex(&self) -> bool {
        matches!(self, Family::Fourt { .. } | Family::Fru { .. })
    }

    /// Per-index scaling `lambda_n`.
    pub fn lambda(&self, n: usize) -> f64 {
        match self {
            Family::Legt {
                scaling: LegtScaling::Lmu,
                ..
            } => {
                let s = ((2 * n + 1) as f64).sqrt();
                if n.is_multiple_of(2) {
                    s
                } else {
                    -s
                }
            }
            _ => 1.0,
        }
    }

    /// Closed support of the measure at time `t` (the lower end may be `-inf`).
    pub fn support(&self, t: f64) -> (f64, f64) {
        match self {
            Family::Legs => (0.0, t),
            Family::Lagt { .. } => (f64::NEG_INFINITY, t),
            Family::Legt { theta, .. }
            | Family::Fourt { theta }
            | Family::Fru { theta, .. }
            | Family::Chebt { theta } => (t - theta, t),
        }
    }

    pub fn in_support(&self, t: f64, x: f64) -> bool {
        let (lo, hi) = self.support(t);
        x >= lo && x <= hi
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if matches!(self, Family::Legs) && !(t > 0.0) {
            return Err(HippoError::Domain(format!("LegS requires t > 0, got {t}")));
        }
        Ok(())
    }

    /// Evaluates `g_n(t, x)` including `lambda_n` and any tilt.
    ///
    /// Polynomial families return their polynomial value outside the support;
    /// tilted families (LagT, ChebT) return zero there.
    pub fn basis_eval(&self, t: f64, n: usize, x: f64) -> Result<Complex64> {
        self.check_time(t)?;
        let mut buf = vec![Complex64::new(0.0, 0.0); n + 1];
        self.basis_all(t, x, &mut buf)?;
        Ok(buf[n])
    }

    /// Fills `out[n] = g_n(t, x)` for all `n < out.len()`.
    pub fn basis_all(&self, t: f64, x: f64, out: &mut [Complex64]) -> Result<()> {
        self.check_time(t)?;
        let n_max = out.len();
        if let Family::Fru { freqs, .. } = self {
            if n_max > freqs.len() {
                return Err(HippoError::InvalidParameter(format!(
                    "FRU has {} frequencies, asked for {n_max}",
                    freqs.len()
                )));
            }
        }
        let mut real = vec![0.0; n_max];
        match self {
            Family::Legs => {
                polys::legendre_all(2.0 * x / t - 1.0, &mut real);
                for (n, v) in real.iter_mut().enumerate() {
                    *v *= ((2 * n + 1) as f64).sqrt();
                }
            }
            Family::Legt { theta, .. } => {
                polys::legendre_all(2.0 * (x - t) / theta + 1.0, &mut real);
                for (n, v) in real.iter_mut().enumerate() {
                    *v *= self.lambda(n) * ((2 * n + 1) as f64).sqrt();
                }
            }
            Family::Lagt { alpha, beta } => {
                let u = t - x;
                if u < 0.0 {
                    real.iter_mut().for_each(|v| *v = 0.0);
                } else if u == 0.0 && *alpha < 0.0 {
                    return Err(HippoError::Domain(
                        "LagT basis with alpha < 0 diverges at x = t".into(),
                    ));
                } else {
                    let lag = LagtConsts::new(*alpha, *beta);
                    polys::laguerre_all(*alpha, u, &mut real);
                    let log_tilt = if u == 0.0 {
                        if *alpha == 0.0 {
                            0.0
                        } else {
                            f64::NEG_INFINITY
                        }
                    } else {
                        alpha * u.ln()
                    } - 0.5 * (1.0 - beta) * u
                        + 0.5 * lag.ln_zeta;
                    for (n, v) in real.iter_mut().enumerate() {
                        let scale = (log_tilt - lag.ln_lambda(n)).exp();
                        let prod = *v * scale;
                        *v = if prod.is_nan() && scale == 0.0 { 0.0 } else { prod };
                    }
                }
            }
            Family::Chebt { theta } => {
                let s = (x - t) / theta + 1.0;
                if s <= 0.0 || s >= 1.0 {
                    real.iter_mut().for_each(|v| *v = 0.0);
                } else {
                    polys::chebyshev_all(2.0 * s - 1.0, &mut real);
                    let chi = 1.0 / (8f64.sqrt() * (s * (1.0 - s)).sqrt());
                    for (n, v) in real.iter_mut().enumerate() {
                        let norm = if n == 0 { 1.0 } else { 2f64.sqrt() };
                        *v *= norm * chi;
                    }
                }
            }
            Family::Fourt { theta } => {
                for (n, o) in out.iter_mut().enumerate() {
                    *o = Complex64::from_polar(1.0, -2.0 * PI * n as f64 * (t - x) / theta);
                }
                return Ok(());
            }
            Family::Fru { theta, freqs } => {
                for (o, fr) in out.iter_mut().zip(freqs) {
                    *o = Complex64::from_polar(1.0, -2.0 * PI * *fr as f64 * x / theta);
                }
                return Ok(());
            }
        }
        for (o, v) in out.iter_mut().zip(real) {
            *o = Complex64::new(v, 0.0);
        }
        Ok(())
    }

    /// Quadrature rule for `integral phi d nu_t` with roughly `nodes` points.
    ///
    /// LagT uses `u = s^p` with `p >= 2 / (1 - |alpha|)`, grading the mesh
    /// towards the `u^{-alpha}` and `u^{alpha}` endpoint singularities, and
    /// truncates the tail at `u = max(150, 60 / beta)`. Nodes closer to `t` than
    /// its floating-point resolution are dropped, which limits accuracy as
    /// `alpha` approaches -1. ChebT uses a cosine map so that products of basis
    /// functions with the measure density are smooth.
    pub fn measure_rule(&self, t: f64, nodes: usize) -> Result<Rule> {
        self.check_time(t)?;
        let order = 16;
        let panels = nodes.div_ceil(order).max(1);
        match self {
            Family::Lagt { alpha, beta } => {
                let lag = LagtConsts::new(*alpha, *beta);
                let u_max = f64::max(150.0, 60.0 / beta);
                let p = (2.0 / (1.0 - alpha.abs())).ceil().max(4.0);
                let base = Rule::composite(0.0, u_max.powf(p.recip()), panels, order);
                let mut rule = Rule {
                    nodes: Vec::with_capacity(base.len()),
                    weights: Vec::with_capacity(base.len()),
                };
                for (s, w) in base.nodes.iter().zip(&base.weights) {
                    let u = s.powf(p);
                    if t - u >= t {
                        // lost below the resolution of t; the weight is negligible
                        continue;
                    }
                    let ln_density = -lag.ln_zeta - alpha * u.ln() - beta * u;
                    rule.nodes.push(t - u);
                    rule.weights.push(w * p * s.powf(p - 1.0) * ln_density.exp());
                }
                Ok(rule)
            }
            Family::Chebt { theta } => {
                let base = Rule::composite(0.0, PI, panels, order);
                let mut rule = Rule {
                    nodes: Vec::with_capacity(base.len()),
                    weights: Vec::with_capacity(base.len()),
                };
                for (phi, w) in base.nodes.iter().zip(&base.weights) {
                    let s = 0.5 * (1.0 - phi.cos());
                    rule.nodes.push(t - theta + theta * s);
                    rule.weights.push(w * 2.0 / PI * phi.sin().powi(2));
                }
                Ok(rule)
            }
            _ => {
                let (lo, hi) = self.support(t);
                let mut rule = Rule::composite(lo, hi, panels, order);
                let len = hi - lo;
                rule.weights.iter_mut().for_each(|w| *w /= len);
                Ok(rule)
            }
        }
    }
}

/// Constants of the tilted generalized Laguerre family.
#[derive(Debug, Clone)]
pub(crate) struct LagtConsts {
    /// `ln zeta`, `zeta = Gamma(1 - alpha) beta^(alpha - 1)`.
    pub ln_zeta: f64,
    pub alpha: f64,
}

impl LagtConsts {
    pub fn new(alpha: f64, beta: f64) -> Self {
        let ln_zeta = ln_gamma(1.0 - alpha) + (alpha - 1.0) * beta.ln();
        LagtConsts { ln_zeta, alpha }
    }

    /// `ln` of the Laguerre norm `(Gamma(n+alpha+1) / Gamma(n+1))^{1/2}`.
    pub fn ln_lambda(&self, n: usize) -> f64 {
        lagt_ln_lambda(self.alpha, n)
    }
}

pub(crate) fn lagt_ln_lambda(alpha: f64, n: usize) -> f64 {
    0.5 * (ln_gamma(n as f64 + alpha + 1.0) - ln_gamma(n as f64 + 1.0))
}

/// `binom(n + alpha, n) = Gamma(n+alpha+1) / (Gamma(n+1) Gamma(alpha+1))`.
pub(crate) fn binom_shifted(n: usize, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 1.0;
    }
    (ln_gamma(n as f64 + alpha + 1.0) - ln_gamma(n as f64 + 1.0)).exp() / gamma(alpha + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram(family: &Family, t: f64, n: usize, nodes: usize) -> Vec<Vec<Complex64>> {
        let rule = family.measure_rule(t, nodes).unwrap();
        let mut acc = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        let mut g = vec![Complex64::new(0.0, 0.0); n];
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            family.basis_all(t, *x, &mut g).unwrap();
            for i in 0..n {
                for j in 0..n {
                    acc[i][j] += g[i] * g[j].conj() * *w;
                }
            }
        }
        acc
    }

    #[test]
    fn legs_basis_examples() {
        let f = Family::Legs;
        assert!((f.basis_eval(2.0, 0, 1.0).unwrap().re - 1.0).abs() < 1e-15);
        assert!((f.basis_eval(2.0, 1, 2.0).unwrap().re - 3f64.sqrt()).abs() < 1e-15);
        assert!(matches!(f.basis_eval(0.0, 1, 0.0), Err(HippoError::Domain(_))));
    }

    #[test]
    fn legt_shifted_basis_oracle() {
        let f = Family::legt(1.0, LegtScaling::Orthonormal).unwrap();
        // shifted argument 2(x - t)/theta + 1 = -1 at x = 0, P_2(-1) = 1
        let v = f.basis_eval(1.0, 2, 0.0).unwrap().re;
        assert!((v - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn gram_matrices_are_diagonal_lambda_squared() {
        let families = vec![
            Family::Legs,
            Family::legt(2.0, LegtScaling::Orthonormal).unwrap(),
            Family::legt(2.0, LegtScaling::Lmu).unwrap(),
            Family::lagt(0.0, 1.0).unwrap(),
            Family::lagt(0.5, 0.7).unwrap(),
            Family::lagt(-0.5, 2.0).unwrap(),
            Family::lagt(0.3, 1.5).unwrap(),
            Family::fourt(1.5).unwrap(),
            Family::fru(3.0, (0..16).collect()).unwrap(),
            Family::chebt(2.0).unwrap(),
        ];
        for fam in families {
            let t = 3.0;
            let g = gram(&fam, t, 16, 4096);
            for i in 0..16 {
                for j in 0..16 {
                    let want = if i == j { fam.lambda(i).powi(2) } else { 0.0 };
                    let tol = 1e-6 * fam.lambda(i).abs().max(1.0) * fam.lambda(j).abs().max(1.0);
                    assert!(
                        (g[i][j] - want).norm() < tol,
                        "{} ({i},{j}) = {}",
                        fam.name(),
                        g[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn tilted_families_vanish_outside_support() {
        let lag = Family::lagt(0.3, 1.0).unwrap();
        assert_eq!(lag.basis_eval(1.0, 2, 1.5).unwrap().re, 0.0);
        let cheb = Family::chebt(1.0).unwrap();
        assert_eq!(cheb.basis_eval(1.0, 2, -0.5).unwrap().re, 0.0);
        assert_eq!(cheb.basis_eval(1.0, 2, 1.0).unwrap().re, 0.0);
    }

    #[test]
    fn lagt_negative_alpha_rejects_endpoint() {
        let lag = Family::lagt(-0.5, 1.0).unwrap();
        assert!(lag.basis_eval(1.0, 0, 1.0).is_err());
        assert!(lag.basis_eval(1.0, 0, 0.999).is_ok());
    }

    #[test]
    fn lagt_far_past_clamps_to_zero() {
        let lag = Family::lagt(0.0, 0.5).unwrap();
        let v = lag.basis_eval(0.0, 40, -5000.0).unwrap();
        assert!(v.re.is_finite());
    }

    #[test]
    fn validation() {
        assert!(Family::legt(0.0, LegtScaling::Lmu).is_err());
        assert!(Family::lagt(1.0, 1.0).is_err());
        assert!(Family::lagt(0.0, 0.0).is_err());
        assert!(Family::fru(1.0, vec![1, 1]).is_err());
        assert!(Family::chebt(-1.0).is_err());
    }

    #[test]
    fn shifted_binomial() {
        assert_eq!(binom_shifted(3, 0.0), 1.0);
        assert!((binom_shifted(3, 1.0) - 4.0).abs() < 1e-12);
        assert!((binom_shifted(2, 0.5) - 1.875).abs() < 1e-12);
    }
}
