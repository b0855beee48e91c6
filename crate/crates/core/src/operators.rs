//! Continuous-time generators `dc/dt = F(t) c + G(t) f` for each family.

use crate::error::{HippoError, Result};
use crate::family::{binom_shifted, lagt_ln_lambda, Family, LegtScaling};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    ConstantReal {
        f: DMatrix<f64>,
        g: DVector<f64>,
    },
    ConstantComplex {
        f: DMatrix<Complex64>,
        g: DVector<Complex64>,
    },
    /// `dc/dt = -(1/t) A c + (1/t) B f`. `a` is stored with the positive sign.
    ScaledByInvT {
        a: DMatrix<f64>,
        b: DVector<f64>,
    },
    /// `F = 0`, `G(t)_n = exp(2 pi i freqs[n] t / theta) / theta`.
    FourierRecurrent { freqs: Vec<u32>, theta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub family: Family,
    pub dynamics: Dynamics,
}

impl Generator {
    /// Builds the generator of `family` at dimension `n`.
    ///
    /// FRU takes its dimension from the frequency list; `n` must agree with it.
    pub fn for_family(family: &Family, n: usize) -> Result<Generator> {
        match family {
            Family::Legt { theta, scaling } => build_legt(n, *theta, *scaling),
            Family::Lagt { alpha, beta } => build_lagt(n, *alpha, *beta),
            Family::Legs => build_legs(n),
            Family::Fourt { theta } => build_fourier_translated(n, *theta),
            Family::Fru { theta, freqs } => {
                if freqs.len() != n {
                    return Err(HippoError::LengthMismatch {
                        left: n,
                        right: freqs.len(),
                    });
                }
                build_fru(freqs, *theta)
            }
            Family::Chebt { theta } => build_chebyshev(n, *theta),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.dynamics {
            Dynamics::ConstantReal { g, .. } => g.len(),
            Dynamics::ConstantComplex { g, .. } => g.len(),
            Dynamics::ScaledByInvT { b, .. } => b.len(),
            Dynamics::FourierRecurrent { freqs, .. } => freqs.len(),
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(
            self.dynamics,
            Dynamics::ConstantComplex { .. } | Dynamics::FourierRecurrent { .. }
        )
    }

    pub fn is_constant(&self) -> bool {
        matches!(
            self.dynamics,
            Dynamics::ConstantReal { .. } | Dynamics::ConstantComplex { .. }
        )
    }

    /// `(F(t), G(t))` promoted to complex. LegS requires `t > 0`.
    pub fn at(&self, t: f64) -> Result<(DMatrix<Complex64>, DVector<Complex64>)> {
        let c = |x: &f64| Complex64::new(*x, 0.0);
        Ok(match &self.dynamics {
            Dynamics::ConstantReal { f, g } => (f.map(|x| c(&x)), g.map(|x| c(&x))),
            Dynamics::ConstantComplex { f, g } => (f.clone(), g.clone()),
            Dynamics::ScaledByInvT { a, b } => {
                if !(t > 0.0) {
                    return Err(HippoError::Domain(format!("LegS dynamics need t > 0, got {t}")));
                }
                (a.map(|x| c(&(-x / t))), b.map(|x| c(&(x / t))))
            }
            Dynamics::FourierRecurrent { freqs, theta } => {
                let n = freqs.len();
                (DMatrix::zeros(n, n), fru_input(freqs, *theta, t))
            }
        })
    }

    /// Serializable export with both sign conventions (`A = -F`, `B = G`).
    ///
    /// LegS exports the `1/t`-free matrices; time-varying FRU exports `G(0)`.
    pub fn export(&self) -> GeneratorExport {
        let (f, g) = match &self.dynamics {
            Dynamics::ScaledByInvT { a, b } => (a.map(|x| Complex64::new(-x, 0.0)), b.map(Complex64::from)),
            _ => self.at(0.0).expect("only LegS rejects t = 0"),
        };
        let rows = |m: &DMatrix<Complex64>, sign: f64| -> Vec<Vec<Entry>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| Entry::new(m[(i, j)] * sign, self.is_complex())).collect())
                .collect()
        };
        let col = |v: &DVector<Complex64>| -> Vec<Entry> {
            v.iter().map(|x| Entry::new(*x, self.is_complex())).collect()
        };
        let kind = match self.dynamics {
            Dynamics::ConstantReal { .. } => "constant_real",
            Dynamics::ConstantComplex { .. } => "constant_complex",
            Dynamics::ScaledByInvT { .. } => "scaled_by_inv_t",
            Dynamics::FourierRecurrent { .. } => "time_varying",
        };
        GeneratorExport {
            family: self.family.name(),
            n: self.dim(),
            kind,
            params: self.family.clone(),
            f: rows(&f, 1.0),
            g: col(&g),
            a: rows(&f, -1.0),
            b: col(&g),
        }
    }
}

/// A matrix entry, real or `[re, im]`.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn new(z: Complex64, complex: bool) -> Self {
        // avoid emitting -0.0
        let clean = |x: f64| if x == 0.0 { 0.0 } else { x };
        if complex {
            Entry::Complex([clean(z.re), clean(z.im)])
        } else {
            Entry::Real(clean(z.re))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneratorExport {
    pub family: &'static str,
    #[serde(rename = "N")]
    pub n: usize,
    pub kind: &'static str,
    pub params: Family,
    #[serde(rename = "F")]
    pub f: Vec<Vec<Entry>>,
    #[serde(rename = "G")]
    pub g: Vec<Entry>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Entry>>,
    #[serde(rename = "B")]
    pub b: Vec<Entry>,
}

pub(crate) fn fru_input(freqs: &[u32], theta: f64, t: f64) -> DVector<Complex64> {
    DVector::from_iterator(
        freqs.len(),
        freqs
            .iter()
            .map(|fr| Complex64::from_polar(1.0 / theta, 2.0 * PI * *fr as f64 * t / theta)),
    )
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 {
        return Err(HippoError::InvalidParameter("dimension must be at least 1".into()));
    }
    Ok(())
}

pub fn build_legt(n: usize, theta: f64, scaling: LegtScaling) -> Result<Generator> {
    check_dim(n)?;
    let family = Family::legt(theta, scaling)?;
    let sign = |p: usize| if p.is_multiple_of(2) { 1.0 } else { -1.0 };
    let (a, b) = match scaling {
        LegtScaling::Lmu => (
            DMatrix::from_fn(n, n, |i, k| {
                let r = (2 * i + 1) as f64 / theta;
                if i >= k {
                    sign(i - k) * r
                } else {
                    r
                }
            }),
            DVector::from_fn(n, |i, _| (2 * i + 1) as f64 / theta * sign(i)),
        ),
        LegtScaling::Orthonormal => (
            DMatrix::from_fn(n, n, |i, k| {
                let r = ((2 * i + 1) as f64).sqrt() * ((2 * k + 1) as f64).sqrt() / theta;
                if k <= i {
                    r
                } else {
                    sign(k - i) * r
                }
            }),
            DVector::from_fn(n, |i, _| ((2 * i + 1) as f64).sqrt() / theta),
        ),
    };
    Ok(Generator {
        family,
        dynamics: Dynamics::ConstantReal { f: -a, g: b },
    })
}

pub fn build_lagt(n: usize, alpha: f64, beta: f64) -> Result<Generator> {
    check_dim(n)?;
    let family = Family::lagt(alpha, beta)?;
    let lam: Vec<f64> = (0..n).map(|i| lagt_ln_lambda(alpha, i).exp()).collect();
    let diag = (1.0 + beta) / 2.0;
    let f = DMatrix::from_fn(n, n, |i, k| {
        let m = match i.cmp(&k) {
            std::cmp::Ordering::Equal => diag,
            std::cmp::Ordering::Greater => 1.0,
            std::cmp::Ordering::Less => 0.0,
        };
        if alpha == 0.0 {
            -m
        } else {
            -m * lam[k] / lam[i]
        }
    });
    let pre = if alpha == 0.0 && beta == 1.0 {
        1.0
    } else {
        beta.powf((1.0 - alpha) / 2.0) / gamma(1.0 - alpha).sqrt()
    };
    let g = DVector::from_fn(n, |i, _| {
        if alpha == 0.0 {
            pre
        } else {
            pre * binom_shifted(i, alpha) / lam[i]
        }
    });
    Ok(Generator {
        family,
        dynamics: Dynamics::ConstantReal { f, g },
    })
}

/// LegS matrices `(A, B)` with the positive sign.
pub fn legs_matrices(n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let a = DMatrix::from_fn(n, n, |i, k| match i.cmp(&k) {
        std::cmp::Ordering::Greater => ((2 * i + 1) as f64).sqrt() * ((2 * k + 1) as f64).sqrt(),
        std::cmp::Ordering::Equal => (i + 1) as f64,
        std::cmp::Ordering::Less => 0.0,
    });
    let b = DVector::from_fn(n, |i, _| ((2 * i + 1) as f64).sqrt());
    (a, b)
}

pub fn build_legs(n: usize) -> Result<Generator> {
    check_dim(n)?;
    let (a, b) = legs_matrices(n);
    Ok(Generator {
        family: Family::Legs,
        dynamics: Dynamics::ScaledByInvT { a, b },
    })
}

pub fn build_fourier_translated(n: usize, theta: f64) -> Result<Generator> {
    check_dim(n)?;
    let family = Family::fourt(theta)?;
    let f = DMatrix::from_fn(n, n, |i, k| {
        if i == k {
            Complex64::new(-1.0, 2.0 * PI * i as f64) / theta
        } else {
            Complex64::new(-1.0 / theta, 0.0)
        }
    });
    let g = DVector::from_element(n, Complex64::new(1.0 / theta, 0.0));
    Ok(Generator {
        family,
        dynamics: Dynamics::ConstantComplex { f, g },
    })
}

pub fn build_fru(freqs: &[u32], theta: f64) -> Result<Generator> {
    let family = Family::fru(theta, freqs.to_vec())?;
    Ok(Generator {
        family,
        dynamics: Dynamics::FourierRecurrent {
            freqs: freqs.to_vec(),
            theta,
        },
    })
}

/// Staircase matrix of the Chebyshev derivative: `M[n][k] = n` for
/// `k = n-1, n-3, ... >= 1`, and `n / sqrt 2` in column 0 when `n` is odd.
fn chebyshev_staircase(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 1..n {
        let mut k = i as isize - 1;
        while k >= 1 {
            m[(i, k as usize)] = i as f64;
            k -= 2;
        }
        if i % 2 == 1 {
            m[(i, 0)] = i as f64 / 2f64.sqrt();
        }
    }
    m
}

pub fn build_chebyshev(n: usize, theta: f64) -> Result<Generator> {
    check_dim(n)?;
    let family = Family::chebt(theta)?;
    let f = chebyshev_staircase(n) * (-4.0 / theta);
    let pre = 2f64.powf(1.5) / PI / theta;
    let g = DVector::from_fn(n, |i, _| if i == 0 { pre } else { pre * 2f64.sqrt() });
    Ok(Generator {
        family,
        dynamics: Dynamics::ConstantReal { f, g },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn real_parts(gen: &Generator) -> (DMatrix<f64>, DVector<f64>) {
        match &gen.dynamics {
            Dynamics::ConstantReal { f, g } => (-f.clone(), g.clone()),
            Dynamics::ScaledByInvT { a, b } => (a.clone(), b.clone()),
            _ => panic!("not real"),
        }
    }

    #[test]
    fn legt_examples() {
        let (a, b) = real_parts(&build_legt(2, 1.0, LegtScaling::Lmu).unwrap());
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -3.0, 3.0]));
        assert_eq!(b, DVector::from_vec(vec![1.0, -3.0]));
        let (a, b) = real_parts(&build_legt(2, 1.0, LegtScaling::Orthonormal).unwrap());
        let s3 = 3f64.sqrt();
        assert_relative_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, -s3, s3, 3.0]), epsilon = 1e-15);
        assert_relative_eq!(b, DVector::from_vec(vec![1.0, s3]), epsilon = 1e-15);
        let (a, b) = real_parts(&build_legt(1, 2.0, LegtScaling::Lmu).unwrap());
        assert_eq!(a[(0, 0)], 0.5);
        assert_eq!(b[0], 0.5);
        assert!(build_legt(0, 1.0, LegtScaling::Lmu).is_err());
    }

    #[test]
    fn legt_scalings_are_conjugate() {
        let n = 12;
        let (f_lmu, g_lmu) = real_parts(&build_legt(n, 1.7, LegtScaling::Lmu).unwrap());
        let (f_ort, g_ort) = real_parts(&build_legt(n, 1.7, LegtScaling::Orthonormal).unwrap());
        let fam = Family::legt(1.7, LegtScaling::Lmu).unwrap();
        let lam = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| fam.lambda(i)));
        let lam_inv = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| 1.0 / fam.lambda(i)));
        assert_relative_eq!(f_lmu, &lam * &f_ort * &lam_inv, epsilon = 1e-12, max_relative = 1e-12);
        assert_relative_eq!(g_lmu, &lam * &g_ort, epsilon = 1e-12, max_relative = 1e-12);
    }

    #[test]
    fn lagt_examples() {
        let (a, b) = real_parts(&build_lagt(3, 0.0, 1.0).unwrap());
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
        // bit-exact reduction at alpha = 0, beta = 1
        assert_eq!(a, want);
        assert_eq!(b, DVector::from_element(3, 1.0));
        let (a, b) = real_parts(&build_lagt(1, 0.0, 1.0).unwrap());
        assert_eq!((a[(0, 0)], b[0]), (1.0, 1.0));
        assert!(build_lagt(2, 1.0, 1.0).is_err());
        assert!(build_lagt(2, 0.3, -1.0).is_err());
    }

    #[test]
    fn lagt_general_matches_formula_oracle() {
        // direct evaluation with the explicit gamma values for alpha = 0.5, beta = 2
        let (a, b) = real_parts(&build_lagt(2, 0.5, 2.0).unwrap());
        let sqrt_pi = PI.sqrt();
        let lam = [(sqrt_pi / 2.0).sqrt(), (3.0 * sqrt_pi / 4.0).sqrt()];
        let m = [[1.5, 0.0], [1.0, 1.5]];
        for i in 0..2 {
            for k in 0..2 {
                assert_relative_eq!(a[(i, k)], m[i][k] * lam[k] / lam[i], epsilon = 1e-13);
            }
        }
        let pre = 2f64.powf(0.25) / sqrt_pi.sqrt();
        assert_relative_eq!(b[0], pre / lam[0], epsilon = 1e-13);
        assert_relative_eq!(b[1], pre * 1.5 / lam[1], epsilon = 1e-13);
    }

    #[test]
    fn legs_examples() {
        let (a, b) = real_parts(&build_legs(3).unwrap());
        let (s3, s5, s15) = (3f64.sqrt(), 5f64.sqrt(), 15f64.sqrt());
        assert_relative_eq!(
            a,
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, s3, 2.0, 0.0, s5, s15, 3.0]),
            epsilon = 1e-15
        );
        assert_relative_eq!(b, DVector::from_vec(vec![1.0, s3, s5]), epsilon = 1e-15);
        let (a, _) = real_parts(&build_legs(4).unwrap());
        let row: Vec<f64> = (0..4).map(|k| a[(3, k)]).collect();
        let oracle: Vec<f64> = (0..4)
            .map(|k| if k < 3 { (7.0 * (2 * k + 1) as f64).sqrt() } else { 4.0 })
            .collect();
        for (x, y) in row.iter().zip(&oracle) {
            assert_relative_eq!(*x, *y, epsilon = 1e-14);
        }
        assert_relative_eq!(row[1], 21f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn legs_is_lower_triangular_with_diagonal_one_to_n() {
        let (a, _) = legs_matrices(20);
        for i in 0..20 {
            assert_eq!(a[(i, i)], (i + 1) as f64);
            for k in i + 1..20 {
                assert_eq!(a[(i, k)], 0.0);
            }
        }
    }

    #[test]
    fn fourier_examples() {
        let gen = build_fourier_translated(2, 1.0).unwrap();
        let (f, g) = gen.at(0.0).unwrap();
        assert_eq!(f[(0, 0)], Complex64::new(-1.0, 0.0));
        assert_eq!(f[(0, 1)], Complex64::new(-1.0, 0.0));
        assert_eq!(f[(1, 0)], Complex64::new(-1.0, 0.0));
        assert_eq!(f[(1, 1)], Complex64::new(-1.0, 2.0 * PI));
        assert_eq!(g, DVector::from_element(2, Complex64::new(1.0, 0.0)));
        let (f, _) = build_fourier_translated(3, 2.0).unwrap().at(0.0).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                if i != k {
                    assert_eq!(f[(i, k)], Complex64::new(-0.5, 0.0));
                }
            }
        }
    }

    #[test]
    fn fru_has_zero_state_matrix() {
        let gen = build_fru(&[0, 3, 7], 2.0).unwrap();
        let (f, g) = gen.at(0.3).unwrap();
        assert!(f.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        assert_relative_eq!(g[1].re, (2.0 * PI * 3.0 * 0.3 / 2.0).cos() / 2.0, epsilon = 1e-15);
        assert!(build_fru(&[1, 1], 1.0).is_err());
    }

    #[test]
    fn chebyshev_examples() {
        let (a, b) = real_parts(&build_chebyshev(3, 1.0).unwrap());
        let r = 2f64.sqrt().recip();
        assert_relative_eq!(
            a,
            DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, r, 0.0, 0.0, 0.0, 2.0, 0.0]) * 4.0,
            epsilon = 1e-15
        );
        let pre = 2f64.powf(1.5) / PI;
        assert_relative_eq!(b, DVector::from_vec(vec![pre, pre * 2f64.sqrt(), pre * 2f64.sqrt()]), epsilon = 1e-15);
        let (a, b) = real_parts(&build_chebyshev(1, 1.0).unwrap());
        assert_eq!(a[(0, 0)], 0.0);
        assert_relative_eq!(b[0], pre, epsilon = 1e-15);
        let (a, _) = real_parts(&build_chebyshev(4, 1.0).unwrap());
        let row: Vec<f64> = (0..4).map(|k| a[(3, k)]).collect();
        let want = [4.0 * 3.0 * r, 0.0, 12.0, 0.0];
        for (x, y) in row.iter().zip(&want) {
            assert_relative_eq!(*x, *y, epsilon = 1e-14);
        }
    }

    #[test]
    fn export_json_shapes() {
        let e = build_fourier_translated(2, 1.0).unwrap().export();
        let v = serde_json::to_value(&e).unwrap();
        assert_eq!(v["N"], 2);
        assert_eq!(v["F"][1][1][1].as_f64().unwrap(), 2.0 * PI);
        assert_eq!(v["A"][0][0][0].as_f64().unwrap(), 1.0);
        let v = serde_json::to_value(build_legs(2).unwrap().export()).unwrap();
        assert_eq!(v["A"][1][1].as_f64().unwrap(), 2.0);
        assert_eq!(v["family"], "legs");
    }

    /// Quadrature oracle `c_n(t) = <f, g_n>_{nu_t}`.
    fn project(fam: &Family, t: f64, n: usize, f: &dyn Fn(f64) -> f64) -> DVector<Complex64> {
        let rule = fam.measure_rule(t, 40_000).unwrap();
        let mut c = DVector::zeros(n);
        let mut g = vec![Complex64::new(0.0, 0.0); n];
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            fam.basis_all(t, *x, &mut g).unwrap();
            let fx = f(*x);
            for i in 0..n {
                c[i] += g[i].conj() * fx * *w;
            }
        }
        c
    }

    fn rk4_matches_projection(gen: &Generator, t0: f64, f: &dyn Fn(f64) -> f64, edge: bool) {
        let n = gen.dim();
        let fam = &gen.family;
        let theta = match fam {
            Family::Fourt { theta } => *theta,
            _ => 0.0,
        };
        let rhs = |t: f64, c: &DVector<Complex64>| -> DVector<Complex64> {
            let (fm, g) = gen.at(t).unwrap();
            let mut d = fm * c + g * Complex64::from(f(t));
            if edge {
                let corr = (c.sum() - f(t - theta)) / theta;
                d.iter_mut().for_each(|v| *v += corr);
            }
            d
        };
        let mut c = project(fam, t0, n, f);
        let dt = 1e-4;
        let steps = ((5.0 - t0) / dt).round() as usize;
        let mut t = t0;
        let (h, h2, h6, two) = (Complex64::from(dt), Complex64::from(dt / 2.0), Complex64::from(dt / 6.0), Complex64::from(2.0));
        for k in 1..=steps {
            let k1 = rhs(t, &c);
            let k2 = rhs(t + dt / 2.0, &(&c + &k1 * h2));
            let k3 = rhs(t + dt / 2.0, &(&c + &k2 * h2));
            let k4 = rhs(t + dt, &(&c + &k3 * h));
            c += (k1 + (k2 + k3) * two + k4) * h6;
            t = t0 + k as f64 * dt;
            if k % (steps / 5) == 0 {
                let want = project(fam, t, n, f);
                for i in 0..n {
                    let tol = 2e-3 * fam.lambda(i).abs();
                    assert!(
                        (c[i] - want[i]).norm() < tol,
                        "{} t={t} n={i}: {} vs {}",
                        fam.name(),
                        c[i],
                        want[i]
                    );
                }
            }
        }
    }

    fn causal_sin(x: f64) -> f64 {
        if x >= 0.0 {
            x.sin()
        } else {
            0.0
        }
    }

    #[test]
    fn generators_reproduce_projections() {
        let sin = |x: f64| x.sin();
        rk4_matches_projection(&build_legt(8, 1.0, LegtScaling::Orthonormal).unwrap(), 0.0, &sin, false);
        rk4_matches_projection(&build_legt(8, 1.0, LegtScaling::Lmu).unwrap(), 0.0, &sin, false);
        rk4_matches_projection(&build_lagt(8, 0.0, 1.0).unwrap(), 0.0, &causal_sin, false);
        rk4_matches_projection(&build_lagt(8, 0.5, 2.0).unwrap(), 0.0, &causal_sin, false);
        rk4_matches_projection(&build_lagt(8, -0.5, 0.5).unwrap(), 0.0, &causal_sin, false);
        rk4_matches_projection(&build_legs(8).unwrap(), 0.01, &sin, false);
        rk4_matches_projection(&build_fourier_translated(8, 2.0).unwrap(), 0.0, &sin, true);
        rk4_matches_projection(&build_fru(&[0, 1, 2, 3, 5, 8, 13, 21], 10.0).unwrap(), 0.0, &causal_sin, false);
        rk4_matches_projection(&build_chebyshev(8, 10.0).unwrap(), 0.0, &causal_sin, false);
    }
}
