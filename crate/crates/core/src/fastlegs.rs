//! Linear-time kernels for the scaled Legendre recurrence.
//!
//! The LegS matrix factors as `A = D1 (L + D0) D2` with `L` the all-ones lower
//! triangle (diagonal included), so `A v` is one prefix sum and `(I - delta A) x = y`
//! is a single forward sweep.

use crate::error::{HippoError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LegsFactors {
    pub d1: Vec<f64>,
    pub d0: Vec<f64>,
    pub d2: Vec<f64>,
}

impl LegsFactors {
    pub fn new(n: usize) -> Self {
        let d1: Vec<f64> = (0..n).map(|i| ((2 * i + 1) as f64).sqrt()).collect();
        let d0 = (0..n)
            .map(|i| (i + 1) as f64 / (2 * i + 1) as f64 - 1.0)
            .collect();
        LegsFactors {
            d2: d1.clone(),
            d1,
            d0,
        }
    }

    pub fn dim(&self) -> usize {
        self.d1.len()
    }
}

/// `out = A v`.
pub fn legs_matvec(fac: &LegsFactors, v: &[f64], out: &mut [f64]) {
    let mut s = 0.0;
    for n in 0..fac.dim() {
        let w = fac.d2[n] * v[n];
        s += w;
        out[n] = fac.d1[n] * (s + fac.d0[n] * w);
    }
}

/// Pivot threshold for `1 - delta (n+1)`.
fn is_singular_pivot(p: f64) -> bool {
    p.abs() <= 4.0 * f64::EPSILON
}

/// Solves `(I - delta A) x = y` into `out`. `out` may alias nothing; see
/// [`legs_solve_in_place`] for the in-place form.
pub fn legs_solve(fac: &LegsFactors, delta: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
    out.copy_from_slice(y);
    legs_solve_in_place(fac, delta, out)
}

/// Solves `(I - delta A) x = y`, overwriting `y` with `x`.
pub fn legs_solve_in_place(fac: &LegsFactors, delta: f64, y: &mut [f64]) -> Result<()> {
    let mut s = 0.0;
    for n in 0..fac.dim() {
        let pivot = 1.0 - delta * (n + 1) as f64;
        if is_singular_pivot(pivot) {
            return Err(HippoError::Singular { index: n });
        }
        let x = (y[n] + delta * fac.d1[n] * s) / pivot;
        s += fac.d2[n] * x;
        y[n] = x;
    }
    Ok(())
}

/// Solves `(I - delta A) x = (I - eps A) c + w B f` into `out`.
#[allow(clippy::too_many_arguments)]
pub fn legs_affine_step(
    fac: &LegsFactors,
    b: &[f64],
    delta: f64,
    eps: f64,
    w: f64,
    c: &[f64],
    f: f64,
    out: &mut [f64],
) -> Result<()> {
    let wf = w * f;
    let mut s = 0.0;
    for n in 0..fac.dim() {
        let wn = fac.d2[n] * c[n];
        s += wn;
        let ac = fac.d1[n] * (s + fac.d0[n] * wn);
        out[n] = c[n] - eps * ac + b[n] * wf;
    }
    legs_solve_in_place(fac, delta, out)
}

/// One LegS GBT step written into `out`:
/// `(I + alpha/(k+1) A) c' = (I - (1-alpha)/k A) c + (1/k) B f`,
/// and at `k = 0` the injection `(I + alpha A) c' = B f`.
pub fn legs_gbt_fast_into(
    fac: &LegsFactors,
    b: &[f64],
    alpha: f64,
    k: usize,
    c: &[f64],
    f: f64,
    out: &mut [f64],
) -> Result<()> {
    let delta = -alpha / (k + 1) as f64;
    if k == 0 {
        for (o, bn) in out.iter_mut().zip(b) {
            *o = bn * f;
        }
        return legs_solve_in_place(fac, delta, out);
    }
    let kf = k as f64;
    legs_affine_step(fac, b, delta, (1.0 - alpha) / kf, 1.0 / kf, c, f, out)
}

pub fn legs_gbt_fast(
    fac: &LegsFactors,
    b: &[f64],
    alpha: f64,
    k: usize,
    c: &[f64],
    f: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; fac.dim()];
    legs_gbt_fast_into(fac, b, alpha, k, c, f, &mut out)?;
    Ok(out)
}

/// Streaming LegS state with preallocated buffers; `step` does not allocate.
#[derive(Debug, Clone)]
pub struct LegsStepper {
    fac: LegsFactors,
    b: Vec<f64>,
    alpha: f64,
    c: Vec<f64>,
    scratch: Vec<f64>,
    k: usize,
}

impl LegsStepper {
    pub fn new(n: usize, alpha: f64) -> Self {
        let fac = LegsFactors::new(n);
        LegsStepper {
            b: fac.d1.clone(),
            fac,
            alpha,
            c: vec![0.0; n],
            scratch: vec![0.0; n],
            k: 0,
        }
    }

    /// Resumes from coefficients `c` at step index `k`.
    pub fn with_state(n: usize, alpha: f64, c: &[f64], k: usize) -> Self {
        let mut s = LegsStepper::new(n, alpha);
        s.c.copy_from_slice(c);
        s.k = k;
        s
    }

    pub fn step(&mut self, f: f64) -> Result<()> {
        legs_gbt_fast_into(&self.fac, &self.b, self.alpha, self.k, &self.c, f, &mut self.scratch)?;
        std::mem::swap(&mut self.c, &mut self.scratch);
        self.k += 1;
        Ok(())
    }

    pub fn coefs(&self) -> &[f64] {
        &self.c
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// The cumsum/cumprod form of the solve. Underflows for large `N`.
#[cfg(test)]
pub(crate) fn legs_solve_cumprod(fac: &LegsFactors, delta: f64, y: &[f64]) -> Vec<f64> {
    let n = fac.dim();
    let mut prod = Vec::with_capacity(n);
    let mut acc = 1.0;
    let mut beta = Vec::with_capacity(n);
    for i in 0..n {
        let piv = 1.0 - delta * (i + 1) as f64;
        acc *= (1.0 + delta * i as f64) / piv;
        prod.push(acc);
        beta.push(fac.d2[i] * y[i] / piv);
    }
    let mut running = 0.0;
    let s: Vec<f64> = (0..n)
        .map(|i| {
            running += beta[i] / prod[i];
            running * prod[i]
        })
        .collect();
    (0..n)
        .map(|i| (s[i] - if i == 0 { 0.0 } else { s[i - 1] }) / fac.d2[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::legs_matrices;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(n: usize, delta: f64, y: &[f64]) -> Vec<f64> {
        let (a, _) = legs_matrices(n);
        let m = DMatrix::identity(n, n) - a * delta;
        m.lu().solve(&DVector::from_column_slice(y)).unwrap().as_slice().to_vec()
    }

    /// The displayed formula evaluated densely.
    fn dense_step(n: usize, alpha: f64, k: usize, c: &[f64], f: f64) -> Vec<f64> {
        let (a, b) = legs_matrices(n);
        let id = DMatrix::<f64>::identity(n, n);
        let c = DVector::from_column_slice(c);
        let (lhs, rhs) = if k == 0 {
            (&id + &a * alpha, &b * f)
        } else {
            let kf = k as f64;
            (
                &id + &a * (alpha / (kf + 1.0)),
                (&id - &a * ((1.0 - alpha) / kf)) * c + &b * (f / kf),
            )
        };
        lhs.lu().solve(&rhs).unwrap().as_slice().to_vec()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }

    #[test]
    fn factors_reconstruct_dense_matrix() {
        for n in [1, 3, 8, 33] {
            let fac = LegsFactors::new(n);
            let (a, _) = legs_matrices(n);
            for i in 0..n {
                for k in 0..n {
                    let l = if k < i { 1.0 } else if k == i { 1.0 + fac.d0[i] } else { 0.0 };
                    let v = fac.d1[i] * l * fac.d2[k];
                    assert!((v - a[(i, k)]).abs() < 1e-14 * a[(i, k)].abs().max(1.0));
                }
            }
        }
        let fac = LegsFactors::new(8);
        let fixture = [0.0, -1.0 / 3.0, -2.0 / 5.0, -3.0 / 7.0, -4.0 / 9.0, -5.0 / 11.0, -6.0 / 13.0, -7.0 / 15.0];
        for (d, want) in fac.d0.iter().zip(fixture) {
            assert!((d - want).abs() < 1e-15);
        }
    }

    #[test]
    fn matvec_examples() {
        let fac = LegsFactors::new(5);
        let mut out = vec![0.0; 5];
        legs_matvec(&fac, &[0.0, 0.0, 0.0, 0.0, 1.0], &mut out);
        for (i, v) in out.iter().enumerate() {
            let want = if i == 4 { 5.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-14);
        }
        legs_matvec(&fac, &[0.0; 5], &mut out);
        assert!(out.iter().all(|v| *v == 0.0));

        let fac = LegsFactors::new(3);
        let mut out = vec![0.0; 3];
        legs_matvec(&fac, &[1.0, 1.0, 1.0], &mut out);
        let (a, _) = legs_matrices(3);
        let oracle = a * DVector::from_element(3, 1.0);
        for i in 0..3 {
            assert!((out[i] - oracle[i]).abs() < 1e-14);
        }
        assert!((out[1] - (3f64.sqrt() + 2.0)).abs() < 1e-14);
        assert!((out[2] - (5f64.sqrt() + 15f64.sqrt() + 3.0)).abs() < 1e-14);
    }

    #[test]
    fn solve_examples() {
        let fac = LegsFactors::new(4);
        let y = [1.0, -2.0, 0.5, 3.0];
        let mut x = [0.0; 4];
        legs_solve(&fac, 0.0, &y, &mut x).unwrap();
        assert_eq!(x, y);
        let fac1 = LegsFactors::new(1);
        let mut x1 = [0.0];
        legs_solve(&fac1, 0.25, &[1.0], &mut x1).unwrap();
        assert!((x1[0] - 4.0 / 3.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut x = vec![0.0; 64];
        legs_solve(&LegsFactors::new(64), -0.01, &y, &mut x).unwrap();
        assert!(rel_err(&x, &dense_solve(64, -0.01, &y)) < 1e-10);
    }

    #[test]
    fn singular_guard_names_index() {
        let fac = LegsFactors::new(16);
        let y = vec![1.0; 16];
        let mut x = vec![0.0; 16];
        for n in 0..16 {
            let delta = 1.0 / (n + 1) as f64;
            let err = legs_solve(&fac, delta, &y, &mut x).unwrap_err();
            assert_eq!(err, HippoError::Singular { index: n });
        }
    }

    #[test]
    fn cumprod_form_matches_sequential_up_to_128() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 8, 32, 128] {
            let fac = LegsFactors::new(n);
            for delta in [-0.005, -1e-4, 0.003] {
                let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut x = vec![0.0; n];
                legs_solve(&fac, delta, &y, &mut x).unwrap();
                assert!(rel_err(&legs_solve_cumprod(&fac, delta, &y), &x) < 1e-9, "n={n} delta={delta}");
            }
        }
    }

    #[test]
    fn gbt_fast_matches_dense_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [4, 64, 512] {
            let fac = LegsFactors::new(n);
            for alpha in [0.0, 0.5, 1.0] {
                for k in [1, 10, 1_000_000] {
                    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let f = rng.random_range(-1.0..1.0);
                    let fast = legs_gbt_fast(&fac, &fac.d1, alpha, k, &c, f).unwrap();
                    let dense = dense_step(n, alpha, k, &c, f);
                    assert!(rel_err(&fast, &dense) < 1e-10, "n={n} alpha={alpha} k={k}");
                }
            }
        }
    }

    #[test]
    fn gbt_fast_examples() {
        let fac = LegsFactors::new(1);
        assert_eq!(legs_gbt_fast(&fac, &[1.0], 0.0, 1, &[0.0], 1.0).unwrap(), vec![1.0]);
        let fac = LegsFactors::new(6);
        let out = legs_gbt_fast(&fac, &fac.d1, 0.5, 7, &[0.0; 6], 0.0).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stepper_tracks_constant_input() {
        // the explicit input weight 1/k leaves an O(alpha/k) bias for alpha > 0
        for (alpha, tol) in [(0.0, 1e-12), (0.5, 3e-3), (1.0, 5e-3)] {
            let mut s = LegsStepper::new(8, alpha);
            for _ in 0..10_000 {
                s.step(1.0).unwrap();
            }
            let c = s.coefs();
            let dev: f64 = ((c[0] - 1.0).powi(2) + c[1..].iter().map(|v| v * v).sum::<f64>()).sqrt();
            assert!(dev < tol, "alpha={alpha} dev={dev}");
            assert_eq!(s.k(), 10_000);
        }
    }

    proptest! {
        #[test]
        fn solve_inverts_shifted_matvec(
            n in 1usize..40,
            delta in -2.0f64..0.0,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fac = LegsFactors::new(n);
            let mut ax = vec![0.0; n];
            legs_matvec(&fac, &x, &mut ax);
            let y: Vec<f64> = x.iter().zip(&ax).map(|(xi, a)| xi - delta * a).collect();
            let mut back = vec![0.0; n];
            legs_solve(&fac, delta, &y, &mut back).unwrap();
            prop_assert!(rel_err(&back, &x) < 1e-9);
        }
    }
}
