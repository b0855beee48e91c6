//! Classical orthogonal polynomials evaluated by three-term recurrence.
//!
//! Every evaluator here is total on the reals. Laguerre values are allowed to
//! overflow to infinity for very large arguments; callers multiply by a
//! decaying tilt and clamp the product.

use crate::error::{HippoError, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Legendre polynomial `P_n(x)`.
pub fn legendre(n: usize, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Fills `out[j] = P_j(x)` for `j < out.len()`.
pub fn legendre_all(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = x;
    for k in 1..out.len() - 1 {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

/// Derivative `P_n'(x)` via `P_{k+1}' = (k+1) P_k + x P_k'`.
pub fn legendre_deriv(n: usize, x: f64) -> f64 {
    let (mut p, mut dp) = (1.0, 0.0);
    let mut p_prev = 0.0;
    for k in 0..n {
        let kf = k as f64;
        let dnext = (kf + 1.0) * p + x * dp;
        let pnext = if k == 0 {
            x
        } else {
            ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0)
        };
        p_prev = p;
        p = pnext;
        dp = dnext;
    }
    dp
}

/// Generalized Laguerre polynomial `L_n^{(alpha)}(x)`.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let (mut l0, mut l1) = (1.0, 1.0 + alpha - x);
    for k in 1..n {
        let l2 = laguerre_next(k, alpha, x, l0, l1);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// One recurrence step; once a value has overflowed the sequence saturates at
/// alternating infinities instead of producing `inf - inf`.
fn laguerre_next(k: usize, alpha: f64, x: f64, l0: f64, l1: f64) -> f64 {
    let kf = k as f64;
    if l1.is_infinite() {
        return -l1;
    }
    let v = ((2.0 * kf + 1.0 + alpha - x) * l1 - (kf + alpha) * l0) / (kf + 1.0);
    if v.is_nan() {
        return f64::INFINITY.copysign((2.0 * kf + 1.0 + alpha - x) * l1);
    }
    v
}

/// Fills `out[j] = L_j^{(alpha)}(x)`.
pub fn laguerre_all(alpha: f64, x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = 1.0 + alpha - x;
    for k in 1..out.len() - 1 {
        out[k + 1] = laguerre_next(k, alpha, x, out[k - 1], out[k]);
    }
}

/// Chebyshev polynomial of the first kind `T_n(x)`.
pub fn chebyshev(n: usize, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let (mut t0, mut t1) = (1.0, x);
    for _ in 1..n {
        let t2 = 2.0 * x * t1 - t0;
        t0 = t1;
        t1 = t2;
    }
    t1
}

pub fn chebyshev_all(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = x;
    for k in 1..out.len() - 1 {
        out[k + 1] = 2.0 * x * out[k] - out[k - 1];
    }
}

/// Basis selector for the raw (unshifted, unscaled) families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisId {
    Legendre,
    GenLaguerre(f64),
    ChebyshevT,
    /// `e^{2 pi i n x}`; the degree argument is the mode index.
    Fourier,
}

impl BasisId {
    pub fn gen_laguerre(alpha: f64) -> Result<Self> {
        if !(alpha > -1.0) {
            return Err(HippoError::InvalidParameter(format!(
                "Laguerre alpha must exceed -1, got {alpha}"
            )));
        }
        Ok(BasisId::GenLaguerre(alpha))
    }

    pub fn eval(&self, n: usize, x: f64) -> Complex64 {
        match *self {
            BasisId::Legendre => legendre(n, x).into(),
            BasisId::GenLaguerre(a) => laguerre(n, a, x).into(),
            BasisId::ChebyshevT => chebyshev(n, x).into(),
            BasisId::Fourier => Complex64::from_polar(1.0, 2.0 * PI * n as f64 * x),
        }
    }
}
