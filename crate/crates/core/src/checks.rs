//! Executable checks of the operators' theoretical properties.

use crate::approx::{compress_and_score, gen_sine_mix, projection_error, sine_mix};
use crate::discretize::{run_stream, Record, SchemeSpec, StepPolicy};
use crate::error::{HippoError, Result};
use crate::family::{Family, LegtScaling};
use crate::fastlegs::{legs_gbt_fast, legs_matvec, LegsFactors};
use crate::operators::legs_matrices;
use crate::signal::Signal;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub parameter: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub measurements: Vec<Measurement>,
    pub fitted: Option<Fit>,
    pub pass: bool,
    pub threshold: String,
    /// Set when the ordering the check tests is undefined for the input.
    pub degenerate: bool,
}

impl CheckReport {
    fn new(name: &str, threshold: impl Into<String>) -> Self {
        CheckReport {
            name: name.to_string(),
            measurements: Vec::new(),
            fitted: None,
            pass: false,
            threshold: threshold.into(),
            degenerate: false,
        }
    }

    fn measure(&mut self, parameter: impl Into<String>, value: f64) {
        self.measurements.push(Measurement {
            parameter: parameter.into(),
            value,
        });
    }

    pub fn value(&self, parameter: &str) -> Option<f64> {
        self.measurements.iter().find(|m| m.parameter == parameter).map(|m| m.value)
    }

    /// One human-readable status line.
    pub fn summary(&self) -> String {
        let vals: Vec<String> = self
            .measurements
            .iter()
            .map(|m| format!("{}={:.4e}", m.parameter, m.value))
            .collect();
        let fit = self.fitted.map(|f| format!(" slope={:.4}", f.slope)).unwrap_or_default();
        format!(
            "{} {}: {}{} [{}]",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            vals.join(" "),
            fit,
            self.threshold
        )
    }
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn legs_final(signal: &Signal, n: usize, alpha: f64) -> Result<DVector<f64>> {
    let gen = crate::operators::build_legs(n)?;
    let scheme = SchemeSpec::gbt(alpha, StepPolicy::IndexBased)?;
    let run = run_stream(&gen, &scheme, signal, Record::Final)?;
    Ok(run.last().c.as_real().expect("LegS is real").clone())
}

fn relative_deviation(signal: &Signal, factor: usize, n: usize, alpha: f64) -> Result<f64> {
    let full = legs_final(signal, n, alpha)?;
    let sub = legs_final(&signal.subsample(factor)?, n, alpha)?;
    let scale = full.norm();
    let diff = (&full - &sub).norm();
    Ok(if scale == 0.0 { diff } else { diff / scale })
}

/// LegS coefficients of `f` after `M` steps against those of `h_k = f_{factor k}`
/// after `M / factor` steps (bilinear, index-based). Passes when the relative
/// deviation is at most 5% and smaller than on the same signal at half resolution.
pub fn check_equivariance(signal: &Signal, factor: usize, n: usize) -> Result<CheckReport> {
    check_equivariance_with(signal, factor, n, 0.5)
}

/// [`check_equivariance`] with an arbitrary GBT parameter.
pub fn check_equivariance_with(signal: &Signal, factor: usize, n: usize, alpha: f64) -> Result<CheckReport> {
    if !matches!(signal, Signal::Uniform { .. }) {
        return Err(HippoError::InvalidParameter("equivariance needs a uniform signal".into()));
    }
    if factor == 0 || !signal.len().is_multiple_of(factor) || signal.is_empty() {
        return Err(HippoError::InvalidParameter(format!(
            "length {} is not divisible by factor {factor}",
            signal.len()
        )));
    }
    let mut rep = CheckReport::new("equivariance", "deviation <= 0.05 and shrinking as resolution doubles");
    let dev = relative_deviation(signal, factor, n, alpha)?;
    rep.measure("length", signal.len() as f64);
    rep.measure("deviation", dev);
    let half = signal.subsample(2)?;
    let shrinks = if dev == 0.0 {
        true
    } else if half.len() % factor == 0 && half.len() >= factor {
        let dev_half = relative_deviation(&half, factor, n, alpha)?;
        rep.measure("deviation_half_length", dev_half);
        dev < dev_half
    } else {
        false
    };
    rep.pass = dev <= 0.05 && shrinks;
    Ok(rep)
}

/// `J(l) = (I - A/l) ... (I - A/(k0+1)) B / k0` for every `l` in `ells`,
/// computed as one right-to-left matrix-vector chain.
pub fn gradient_chain(n: usize, k0: usize, ells: &[usize]) -> Result<Vec<DVector<f64>>> {
    if k0 < 1 {
        return Err(HippoError::InvalidParameter("k0 must be at least 1".into()));
    }
    if let Some(l) = ells.iter().find(|l| **l <= k0) {
        return Err(HippoError::InvalidParameter(format!("l = {l} must exceed k0 = {k0}")));
    }
    let fac = LegsFactors::new(n);
    let mut v: Vec<f64> = fac.d1.iter().map(|b| b / k0 as f64).collect();
    let mut av = vec![0.0; n];
    let mut order: Vec<usize> = (0..ells.len()).collect();
    order.sort_by_key(|i| ells[*i]);
    let mut out = vec![DVector::zeros(n); ells.len()];
    let mut j = k0;
    for idx in order {
        while j < ells[idx] {
            j += 1;
            legs_matvec(&fac, &v, &mut av);
            let s = 1.0 / j as f64;
            v.iter_mut().zip(&av).for_each(|(x, a)| *x -= s * a);
        }
        out[idx] = DVector::from_column_slice(&v);
    }
    Ok(out)
}

/// Fits the exponent of `||J(l)||` against `l`; passes when it lies in [-1.2, -0.8].
pub fn check_gradient_norm(n: usize, k0: usize, ells: &[usize]) -> Result<CheckReport> {
    if ells.len() < 4 {
        return Err(HippoError::InvalidParameter("slope fitting needs at least 4 points".into()));
    }
    if k0 < 2 {
        return Err(HippoError::InvalidParameter("k0 must be at least 2".into()));
    }
    let js = gradient_chain(n, k0, ells)?;
    let mut rep = CheckReport::new("gradient_norm", "log-log slope in [-1.2, -0.8]");
    let xs: Vec<f64> = ells.iter().map(|l| (*l as f64).ln()).collect();
    let ys: Vec<f64> = js.iter().map(|j| j.norm().ln()).collect();
    for (l, j) in ells.iter().zip(&js) {
        rep.measure(format!("norm_l{l}"), j.norm());
    }
    let (slope, intercept) = fit_slope(&xs, &ys);
    rep.fitted = Some(Fit { slope, intercept });
    rep.pass = (-1.2..=-0.8).contains(&slope);
    Ok(rep)
}

/// LegS with forward Euler, backward Euler and bilinear steps; passes when
/// bilinear has the smallest reconstruction MSE. Constant input is degenerate.
pub fn compare_discretizations(signal: &Signal, n: usize) -> Result<CheckReport> {
    if !matches!(signal, Signal::Uniform { .. }) {
        return Err(HippoError::InvalidParameter("comparison needs a uniform signal".into()));
    }
    let mut rep = CheckReport::new("discretization", "bilinear MSE below forward and backward Euler");
    let mut errs = [0.0; 3];
    for (e, (name, alpha)) in errs
        .iter_mut()
        .zip([("mse_euler", 0.0), ("mse_backward_euler", 1.0), ("mse_bilinear", 0.5)])
    {
        let scheme = SchemeSpec::gbt(alpha, StepPolicy::IndexBased)?;
        *e = compress_and_score(&Family::Legs, &scheme, signal, n)?.mse;
        rep.measure(name, *e);
    }
    let v = signal.values();
    if v.iter().all(|x| *x == v[0]) {
        rep.degenerate = true;
        rep.pass = true;
    } else {
        rep.pass = errs[2] < errs[0] && errs[2] < errs[1];
    }
    Ok(rep)
}

const DECAY_NODES: usize = 16_384;

/// Projection error of `|sin x|` on `[0, 50]`; passes when every
/// `err(N) / err(4N)` for `N` in {8, 16, 32} lies in [1.6, 3.0].
pub fn check_error_decay_lipschitz() -> Result<CheckReport> {
    let mut rep = CheckReport::new("error_decay_lipschitz", "err(N)/err(4N) in [1.6, 3.0] for N in {8,16,32}");
    let f = |x: f64| x.sin().abs();
    let mut ok = true;
    for n in [8usize, 16, 32] {
        let e = projection_error(&Family::Legs, 50.0, n, DECAY_NODES, f)?;
        let e4 = projection_error(&Family::Legs, 50.0, 4 * n, DECAY_NODES, f)?;
        rep.measure(format!("err_N{n}"), e);
        rep.measure(format!("ratio_N{n}"), e / e4);
        ok &= (1.6..=3.0).contains(&(e / e4));
    }
    rep.pass = ok;
    Ok(rep)
}

/// Projection error of the sine mixture on `[0, 100]`; passes when every
/// `err(2N) / err(N)` for `N` in {4, 8, 16} is at most 0.5.
pub fn check_error_decay_smooth() -> Result<CheckReport> {
    let mut rep = CheckReport::new("error_decay_smooth", "err(2N)/err(N) <= 0.5 for N in {4,8,16}");
    let mut ok = true;
    for n in [4usize, 8, 16] {
        let e = projection_error(&Family::Legs, 100.0, n, DECAY_NODES, sine_mix)?;
        let e2 = projection_error(&Family::Legs, 100.0, 2 * n, DECAY_NODES, sine_mix)?;
        rep.measure(format!("err_N{n}"), e);
        rep.measure(format!("ratio_N{n}"), e2 / e);
        ok &= e2 / e <= 0.5;
    }
    rep.pass = ok;
    Ok(rep)
}

/// LegT with `theta = frac * T` on a uniform signal: the reconstruction error
/// on `[0, 0.8 T]` against the error inside the window `[T - theta, T]`.
pub fn check_legt_window(signal: &Signal, n: usize, frac: f64) -> Result<CheckReport> {
    let dt = match signal {
        Signal::Uniform { dt, .. } => *dt,
        _ => return Err(HippoError::InvalidParameter("window check needs a uniform signal".into())),
    };
    let total = signal.end_time();
    let theta = frac * total;
    let fam = Family::legt(theta, LegtScaling::Lmu)?;
    let scheme = SchemeSpec::gbt(0.5, StepPolicy::Fixed(dt))?;
    let score = compress_and_score(&fam, &scheme, signal, n)?;
    let region = |lo: f64, hi: f64| {
        let (mut s, mut c) = (0.0, 0usize);
        for ((x, a), b) in score.grid.iter().zip(&score.truth).zip(&score.recon) {
            if *x >= lo && *x <= hi {
                s += (a - b).powi(2);
                c += 1;
            }
        }
        s / c.max(1) as f64
    };
    let outside = region(0.0, 0.8 * total);
    let inside = region(total - theta, total);
    let mut rep = CheckReport::new("legt_window", "error on [0, 0.8T] >= 5x error on [T - theta, T]");
    rep.measure("theta", theta);
    rep.measure("mse_early", outside);
    rep.measure("mse_window", inside);
    rep.measure("ratio", outside / inside);
    rep.pass = outside >= 5.0 * inside;
    Ok(rep)
}

/// Quadrature Gram matrices of every family against `lambda_n^2 I`, `n, m < 16`.
pub fn check_orthonormality() -> Result<CheckReport> {
    let n = 16;
    let families = [
        Family::legt(2.0, LegtScaling::Lmu)?,
        Family::legt(2.0, LegtScaling::Orthonormal)?,
        Family::lagt(0.0, 1.0)?,
        Family::lagt(0.5, 0.5)?,
        Family::Legs,
        Family::fourt(2.0)?,
        Family::fru(2.0, (0..16).collect())?,
        Family::chebt(2.0)?,
    ];
    let mut rep = CheckReport::new("orthonormality", "max |G - lambda^2 I| / (|lambda_n lambda_m|) <= 1e-6");
    let mut worst = 0.0f64;
    for fam in &families {
        let t = 3.0;
        let rule = fam.measure_rule(t, 4096)?;
        let mut gram = DMatrix::<Complex64>::zeros(n, n);
        let mut g = vec![Complex64::new(0.0, 0.0); n];
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            fam.basis_all(t, *x, &mut g)?;
            for i in 0..n {
                for j in 0..n {
                    gram[(i, j)] += g[i] * g[j].conj() * *w;
                }
            }
        }
        let mut err = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { fam.lambda(i).powi(2) } else { 0.0 };
                let scale = (fam.lambda(i) * fam.lambda(j)).abs();
                err = err.max((gram[(i, j)] - want).norm() / scale);
            }
        }
        rep.measure(format!("max_err_{}", family_tag(fam)), err);
        worst = worst.max(err);
    }
    rep.pass = worst <= 1e-6;
    Ok(rep)
}

fn family_tag(fam: &Family) -> String {
    match fam {
        Family::Legt { scaling, .. } => format!("legt_{}", if *scaling == LegtScaling::Lmu { "lmu" } else { "ortho" }),
        Family::Lagt { alpha, beta } => format!("lagt_{alpha}_{beta}"),
        other => other.name().to_string(),
    }
}

/// Fast LegS step against the dense solve over `N` in {4, 64, 512},
/// `alpha` in {0, 0.5, 1} and `k` in {1, 10, 10^6}.
pub fn check_fast_path(seed: u64) -> Result<CheckReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rep = CheckReport::new("fast_path", "relative error <= 1e-10");
    let mut worst = 0.0f64;
    for n in [4usize, 64, 512] {
        let fac = LegsFactors::new(n);
        let (a, b) = legs_matrices(n);
        for alpha in [0.0, 0.5, 1.0] {
            for k in [1usize, 10, 1_000_000] {
                let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                let f: f64 = rng.random_range(-1.0..1.0);
                let fast = DVector::from_vec(legs_gbt_fast(&fac, b.as_slice(), alpha, k, c.as_slice(), f)?);
                let state = crate::discretize::CoefState::real(c, k, k as f64);
                let dense = crate::discretize::legs_step(&a, &b, alpha, &state, f)?;
                let dense = dense.c.as_real().expect("real").clone();
                worst = worst.max((&fast - &dense).norm() / dense.norm());
            }
        }
    }
    rep.measure("max_relative_error", worst);
    rep.pass = worst <= 1e-10;
    Ok(rep)
}

pub type CheckFn = Box<dyn Fn() -> Result<CheckReport> + Send + Sync>;

/// Every check with its default configuration, in a fixed order.
pub fn default_checks(seed: u64) -> Vec<(&'static str, CheckFn)> {
    vec![
        ("equivariance", Box::new(|| check_equivariance(&gen_sine_mix(4096, 100.0)?, 2, 16))),
        ("gradient_norm", Box::new(|| check_gradient_norm(32, 50, &[100, 300, 1000, 3000, 10000]))),
        ("discretization", Box::new(|| compare_discretizations(&gen_sine_mix(1000, 100.0)?, 64))),
        ("error_decay_lipschitz", Box::new(check_error_decay_lipschitz)),
        ("error_decay_smooth", Box::new(check_error_decay_smooth)),
        ("legt_window", Box::new(|| check_legt_window(&gen_sine_mix(1000, 100.0)?, 32, 0.1))),
        ("orthonormality", Box::new(check_orthonormality)),
        ("fast_path", Box::new(move || check_fast_path(seed))),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_fit_is_exact_on_lines() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 0.5).collect();
        let (s, i) = fit_slope(&x, &y);
        assert!((s + 2.0).abs() < 1e-14 && (i - 0.5).abs() < 1e-14);
    }

    #[test]
    fn single_factor_chain_matches_dense_product() {
        let k0 = 7;
        let j = gradient_chain(5, k0, &[8]).unwrap();
        let (a, b) = legs_matrices(5);
        let want = (DMatrix::<f64>::identity(5, 5) - a / 8.0) * (b / k0 as f64);
        assert!((&j[0] - want).norm() < 1e-14);
    }

    #[test]
    fn scalar_chain_telescopes_to_inverse_l() {
        let ells = [60, 100, 1000, 10_000];
        let js = gradient_chain(1, 50, &ells).unwrap();
        for (l, j) in ells.iter().zip(&js) {
            assert!((j[0] - 1.0 / *l as f64).abs() < 1e-12 / *l as f64 * 100.0);
            assert!((j[0] * *l as f64 - 1.0).abs() < 1e-12);
        }
        let rep = check_gradient_norm(1, 50, &ells).unwrap();
        assert!((rep.fitted.unwrap().slope + 1.0).abs() < 1e-10);
        assert!(rep.pass);
    }

    #[test]
    fn gradient_check_needs_four_points() {
        assert!(check_gradient_norm(4, 5, &[10, 20, 30]).is_err());
        assert!(check_gradient_norm(4, 50, &[10, 20, 30, 40]).is_err());
    }

    #[test]
    fn equivariance_examples() {
        let s = gen_sine_mix(1024, 100.0).unwrap();
        let rep = check_equivariance(&s, 1, 8).unwrap();
        assert_eq!(rep.value("deviation"), Some(0.0));
        assert!(rep.pass);
        let c = Signal::uniform(1.0, vec![1.0; 4096]).unwrap();
        let rep = check_equivariance_with(&c, 2, 16, 0.0).unwrap();
        assert_eq!(rep.value("deviation"), Some(0.0));
        // the implicit part leaves an O(1/k) offset from e_0 that depends on k
        let rep = check_equivariance(&c, 2, 16).unwrap();
        assert!(rep.value("deviation").unwrap() <= 5e-3);
        assert!(check_equivariance(&s, 3, 8).is_err());
    }

    #[test]
    fn equivariance_is_reproducible() {
        let s = gen_sine_mix(2048, 100.0).unwrap();
        assert_eq!(check_equivariance(&s, 2, 16).unwrap(), check_equivariance(&s, 2, 16).unwrap());
    }

    #[test]
    fn constant_signal_comparison_is_degenerate() {
        let s = Signal::uniform(0.1, vec![2.0; 500]).unwrap();
        let rep = compare_discretizations(&s, 8).unwrap();
        assert!(rep.degenerate && rep.pass);
    }

    #[test]
    fn report_serializes() {
        let rep = check_gradient_norm(1, 2, &[3, 4, 5, 6]).unwrap();
        let v = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["name"], "gradient_norm");
        assert!(v["fitted"]["slope"].is_number());
        assert!(rep.summary().starts_with("PASS"));
    }
}
