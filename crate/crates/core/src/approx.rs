//! Online function approximation: signals, streaming compression and reconstruction.

use crate::discretize::{run_stream, Coefs, Record, SchemeSpec, StepPolicy};
use crate::error::{HippoError, Result};
use crate::family::Family;
use crate::operators::Generator;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;
use std::time::Instant;

pub use crate::signal::Signal;

/// Values of a reconstruction on a grid. Points outside the measure's support
/// evaluate to zero and are flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub values: Vec<f64>,
    pub outside: Vec<bool>,
}

/// `sum_n lambda_n^{-2} c_n g_n(t, x)` for every `x`, without support masking.
pub fn synthesize(family: &Family, c: &DVector<Complex64>, t: f64, xs: &[f64]) -> Result<Vec<Complex64>> {
    let n = c.len();
    let inv_sq: Vec<f64> = (0..n).map(|i| family.lambda(i).powi(-2)).collect();
    let mut g = vec![Complex64::new(0.0, 0.0); n];
    xs.iter()
        .map(|x| {
            family.basis_all(t, *x, &mut g)?;
            Ok((0..n).map(|i| c[i] * g[i] * inv_sq[i]).sum())
        })
        .collect()
}

/// Reconstructs a real input from its coefficients.
///
/// Fourier-type families hold only non-negative frequencies of a real signal,
/// so every nonzero frequency is counted twice and the real part is kept.
pub fn reconstruct(family: &Family, c: &Coefs, t: f64, xs: &[f64]) -> Result<Reconstruction> {
    let mut c = c.to_complex();
    match family {
        Family::Fourt { .. } => c.iter_mut().skip(1).for_each(|v| *v *= 2.0),
        Family::Fru { freqs, .. } => {
            for (v, fr) in c.iter_mut().zip(freqs) {
                if *fr != 0 {
                    *v *= 2.0;
                }
            }
        }
        _ => {}
    }
    let outside: Vec<bool> = xs.iter().map(|x| !family.in_support(t, *x)).collect();
    let inside: Vec<f64> = xs.iter().map(|x| if family.in_support(t, *x) { *x } else { t }).collect();
    let raw = synthesize(family, &c, t, &inside)?;
    let values = raw
        .iter()
        .zip(&outside)
        .map(|(v, out)| if *out { 0.0 } else { v.re })
        .collect();
    Ok(Reconstruction { values, outside })
}

pub fn mse(truth: &[f64], approx: &[f64]) -> Result<f64> {
    if truth.len() != approx.len() {
        return Err(HippoError::LengthMismatch {
            left: truth.len(),
            right: approx.len(),
        });
    }
    if truth.is_empty() {
        return Err(HippoError::Empty);
    }
    Ok(truth.iter().zip(approx).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64)
}

const NOISE_COMPONENTS: usize = 256;
const REANCHOR: usize = 4096;

/// Band-limited white noise: a sum of random-phase sinusoids with frequencies
/// uniform in `(0, band_hz]`, rescaled to unit sample variance.
pub fn gen_whitenoise(length: usize, dt: f64, band_hz: f64, seed: u64) -> Result<Signal> {
    if !(band_hz > 0.0) || !(dt > 0.0) {
        return Err(HippoError::InvalidParameter("band and dt must be positive".into()));
    }
    if band_hz * dt >= 0.5 {
        return Err(HippoError::InvalidParameter(format!(
            "band {band_hz} Hz is above the Nyquist rate of dt = {dt}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = (2.0 / NOISE_COMPONENTS as f64).sqrt();
    let comps: Vec<(f64, f64)> = (0..NOISE_COMPONENTS)
        .map(|_| {
            let freq = band_hz * (1.0 - rng.random::<f64>());
            let phase = 2.0 * PI * rng.random::<f64>();
            (freq, phase)
        })
        .collect();
    let rot: Vec<Complex64> = comps
        .iter()
        .map(|(fr, _)| Complex64::from_polar(1.0, 2.0 * PI * fr * dt))
        .collect();
    let mut phasors = vec![Complex64::new(0.0, 0.0); NOISE_COMPONENTS];
    let mut values = Vec::with_capacity(length);
    for i in 0..length {
        if i % REANCHOR == 0 {
            let t = i as f64 * dt;
            for (p, (fr, ph)) in phasors.iter_mut().zip(&comps) {
                *p = Complex64::from_polar(1.0, 2.0 * PI * fr * t + ph);
            }
        }
        values.push(amp * phasors.iter().map(|p| p.im).sum::<f64>());
        for (p, r) in phasors.iter_mut().zip(&rot) {
            *p *= r;
        }
    }
    if length > 1 {
        let mean = values.iter().sum::<f64>() / length as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (length - 1) as f64;
        let scale = var.sqrt().recip();
        values.iter_mut().for_each(|v| *v *= scale);
    }
    Signal::uniform(dt, values)
}

/// `sin(x)/4 + sin(x/3)/2 + sin(x/7)`.
pub fn sine_mix(x: f64) -> f64 {
    0.25 * x.sin() + 0.5 * (x / 3.0).sin() + (x / 7.0).sin()
}

/// `length` uniform samples of [`sine_mix`] on `[0, x_max]`, both ends included.
pub fn gen_sine_mix(length: usize, x_max: f64) -> Result<Signal> {
    if length < 2 {
        return Err(HippoError::InvalidParameter("sine mixture needs at least 2 samples".into()));
    }
    let dt = x_max / (length - 1) as f64;
    Signal::uniform(dt, (0..length).map(|i| sine_mix(i as f64 * dt)).collect())
}

/// Quadrature coefficients `c_n = <f, g_n>_{nu_t}`, `n < n_coef`.
pub fn project(family: &Family, t: f64, n_coef: usize, nodes: usize, f: impl Fn(f64) -> f64) -> Result<DVector<Complex64>> {
    let rule = family.measure_rule(t, nodes)?;
    let mut c = DVector::zeros(n_coef);
    let mut g = vec![Complex64::new(0.0, 0.0); n_coef];
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        family.basis_all(t, *x, &mut g)?;
        let fx = f(*x) * w;
        for i in 0..n_coef {
            c[i] += g[i].conj() * fx;
        }
    }
    Ok(c)
}

/// `||f - P_N f||` in `L2(nu_t)` for the quadrature projection onto `n_coef` terms.
pub fn projection_error(family: &Family, t: f64, n_coef: usize, nodes: usize, f: impl Fn(f64) -> f64) -> Result<f64> {
    let c = project(family, t, n_coef, nodes, &f)?;
    let rule = family.measure_rule(t, nodes)?;
    let approx = synthesize(family, &c, t, &rule.nodes)?;
    let err: f64 = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .zip(&approx)
        .map(|((x, w), a)| w * (f(*x) - a.re).powi(2) + w * a.im.powi(2))
        .sum();
    Ok(err.sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct Score {
    pub family: String,
    pub scheme: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub length: usize,
    pub mse: f64,
    pub wall_seconds: f64,
    pub steps_per_second: f64,
    #[serde(skip)]
    pub final_c: Coefs,
    #[serde(skip)]
    pub grid: Vec<f64>,
    #[serde(skip)]
    pub truth: Vec<f64>,
    #[serde(skip)]
    pub recon: Vec<f64>,
}

/// Time of the final state, evaluation grid and held truth, all in the frame the
/// family's measure uses (LegS counts from the first sample, index-based LegS
/// counts in steps for timestamped input).
pub fn reconstruction_frame(family: &Family, scheme: &SchemeSpec, signal: &Signal) -> (f64, Vec<f64>, Vec<f64>) {
    let values = signal.values();
    match (family, scheme.step, signal) {
        (Family::Legs, StepPolicy::IndexBased, Signal::Timestamped { .. }) => {
            let grid = (0..values.len()).map(|i| i as f64 + 0.5).collect();
            (values.len() as f64, grid, values.to_vec())
        }
        (Family::Legs, _, _) => {
            let o = signal.origin();
            let grid = signal.eval_grid().iter().map(|x| x - o).collect::<Vec<_>>();
            let truth = values[..grid.len()].to_vec();
            (signal.end_time() - o, grid, truth)
        }
        _ => {
            let grid = signal.eval_grid();
            let truth = values[..grid.len()].to_vec();
            (signal.end_time(), grid, truth)
        }
    }
}

/// Streams `signal` through the family's recurrence, then reconstructs on the
/// signal's own grid and scores the result.
pub fn compress_and_score(family: &Family, scheme: &SchemeSpec, signal: &Signal, n: usize) -> Result<Score> {
    let gen = Generator::for_family(family, n)?;
    let start = Instant::now();
    let run = run_stream(&gen, scheme, signal, Record::Final)?;
    let wall = start.elapsed().as_secs_f64();
    let state = run.last().clone();
    let (t, grid, truth) = reconstruction_frame(family, scheme, signal);
    let recon = reconstruct(family, &state.c, t, &grid)?.values;
    let err = mse(&truth, &recon)?;
    Ok(Score {
        family: family.name().to_string(),
        scheme: scheme.label(),
        n,
        length: signal.len(),
        mse: err,
        wall_seconds: wall,
        steps_per_second: state.k as f64 / wall.max(1e-12),
        final_c: state.c,
        grid,
        truth,
        recon,
    })
}
