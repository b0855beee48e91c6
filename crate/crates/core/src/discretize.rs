//! Discrete recurrences `c_{k+1} = A_bar c_k + B_bar f_k` from a generator.

use crate::error::{HippoError, Result};
use crate::fastlegs::{legs_affine_step, legs_gbt_fast_into, LegsFactors};
use crate::operators::{fru_input, Dynamics, Generator};
use crate::signal::Signal;
use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

/// Real or complex scalar with `f64` modulus.
pub trait Scalar: ComplexField<RealField = f64> + Copy {}
impl<T: ComplexField<RealField = f64> + Copy> Scalar for T {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Generalized bilinear transform with weight `alpha` on the implicit end.
    Gbt(f64),
    Zoh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPolicy {
    Fixed(f64),
    Timestamped,
    /// LegS only: the step index replaces time.
    IndexBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchemeSpec {
    pub method: Method,
    pub step: StepPolicy,
}

impl SchemeSpec {
    pub fn new(method: Method, step: StepPolicy) -> Result<Self> {
        if let Method::Gbt(a) = method {
            if !(0.0..=1.0).contains(&a) {
                return Err(HippoError::InvalidParameter(format!("GBT alpha must lie in [0, 1], got {a}")));
            }
        }
        if let StepPolicy::Fixed(dt) = step {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(HippoError::InvalidParameter(format!("dt must be positive, got {dt}")));
            }
        }
        if method == Method::Zoh && step == StepPolicy::IndexBased {
            return Err(HippoError::InvalidParameter("ZOH has no index-based form".into()));
        }
        Ok(SchemeSpec { method, step })
    }

    pub fn gbt(alpha: f64, step: StepPolicy) -> Result<Self> {
        SchemeSpec::new(Method::Gbt(alpha), step)
    }

    pub fn validate_for(&self, gen: &Generator) -> Result<()> {
        let is_legs = matches!(gen.dynamics, Dynamics::ScaledByInvT { .. });
        if self.step == StepPolicy::IndexBased && !is_legs {
            return Err(HippoError::InvalidParameter(
                "index-based stepping needs the LegS generator".into(),
            ));
        }
        if self.method == Method::Zoh && !gen.is_constant() {
            return Err(HippoError::InvalidParameter(
                "ZOH needs a time-invariant generator".into(),
            ));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let m = match self.method {
            Method::Gbt(0.0) => "euler".to_string(),
            Method::Gbt(1.0) => "backward-euler".to_string(),
            Method::Gbt(0.5) => "bilinear".to_string(),
            Method::Gbt(a) => format!("gbt({a})"),
            Method::Zoh => "zoh".to_string(),
        };
        let s = match self.step {
            StepPolicy::Fixed(dt) => format!("fixed({dt})"),
            StepPolicy::Timestamped => "timestamped".to_string(),
            StepPolicy::IndexBased => "indexed".to_string(),
        };
        format!("{m}/{s}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coefs {
    Real(DVector<f64>),
    Complex(DVector<Complex64>),
}

impl Coefs {
    pub fn len(&self) -> usize {
        match self {
            Coefs::Real(c) => c.len(),
            Coefs::Complex(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_complex(&self) -> DVector<Complex64> {
        match self {
            Coefs::Real(c) => c.map(Complex64::from),
            Coefs::Complex(c) => c.clone(),
        }
    }

    pub fn as_real(&self) -> Option<&DVector<f64>> {
        match self {
            Coefs::Real(c) => Some(c),
            Coefs::Complex(_) => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Coefs::Real(c) => c.iter().all(|v| v.is_finite()),
            Coefs::Complex(c) => c.iter().all(|v| v.is_finite()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefState {
    pub c: Coefs,
    pub k: usize,
    pub t: f64,
}

impl CoefState {
    pub fn zeros(gen: &Generator) -> Self {
        let n = gen.dim();
        let c = if gen.is_complex() {
            Coefs::Complex(DVector::zeros(n))
        } else {
            Coefs::Real(DVector::zeros(n))
        };
        CoefState { c, k: 0, t: 0.0 }
    }

    pub fn real(c: DVector<f64>, k: usize, t: f64) -> Self {
        CoefState { c: Coefs::Real(c), k, t }
    }

    fn advance(&self, c: Coefs, dt: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(HippoError::Domain("coefficients became non-finite".into()));
        }
        Ok(CoefState {
            c,
            k: self.k + 1,
            t: self.t + dt,
        })
    }
}

/// `I + s F`.
fn shifted<T: Scalar>(f: &DMatrix<T>, s: f64) -> DMatrix<T> {
    let mut m = f * T::from_real(s);
    for i in 0..m.nrows() {
        m[(i, i)] += T::one();
    }
    m
}

fn solve<T: Scalar>(lhs: DMatrix<T>, rhs: &DVector<T>) -> Result<DVector<T>> {
    lhs.lu().solve(rhs).ok_or(HippoError::SingularDense)
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(HippoError::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

fn gbt_dense<T: Scalar>(f: &DMatrix<T>, g: &DVector<T>, alpha: f64, dt: f64, c: &DVector<T>, u: f64) -> Result<DVector<T>> {
    let lhs = shifted(f, -(dt * alpha));
    let rhs = shifted(f, dt * (1.0 - alpha)) * c + g * T::from_real(dt * u);
    solve(lhs, &rhs)
}

/// `(A_bar, B_bar)` of the GBT map for a constant generator.
pub fn gbt_matrices<T: Scalar>(f: &DMatrix<T>, g: &DVector<T>, alpha: f64, dt: f64) -> Result<(DMatrix<T>, DVector<T>)> {
    let lu = shifted(f, -(dt * alpha)).lu();
    let a = lu.solve(&shifted(f, dt * (1.0 - alpha))).ok_or(HippoError::SingularDense)?;
    let b = lu.solve(&(g * T::from_real(dt))).ok_or(HippoError::SingularDense)?;
    Ok((a, b))
}

fn one_norm<T: Scalar>(m: &DMatrix<T>) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|v| v.modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring of a Taylor series.
///
/// The series is truncated once the next term falls below `tol / 2^s` relative
/// to the partial sum, where `2^s` is the scaling factor.
pub fn matrix_exp<T: Scalar>(m: &DMatrix<T>, tol: f64) -> DMatrix<T> {
    let n = m.nrows();
    let norm = one_norm(m);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = m * T::from_real(0.5f64.powi(squarings));
    let term_tol = (tol * 0.5f64.powi(squarings)).max(f64::EPSILON * 0.25);
    let mut result = DMatrix::<T>::identity(n, n);
    let mut term = DMatrix::<T>::identity(n, n);
    for j in 1..=100 {
        term = &term * &scaled * T::from_real(1.0 / j as f64);
        result += &term;
        if one_norm(&term) <= term_tol * one_norm(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// `(e^{dt F}, integral_0^dt e^{tau F} dtau G)`.
pub fn zoh_matrices<T: Scalar>(f: &DMatrix<T>, g: &DVector<T>, dt: f64) -> Result<(DMatrix<T>, DVector<T>)> {
    let n = f.nrows();
    let tol = 1e-15;
    let a = matrix_exp(&(f * T::from_real(dt)), tol);
    let lu = f.clone().lu();
    let diag: Vec<f64> = lu.u().diagonal().iter().map(|v| v.modulus()).collect();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if hi > 0.0 && lo > 1e-8 * hi {
        if let Some(b) = lu.solve(&((&a - DMatrix::<T>::identity(n, n)) * g)) {
            return Ok((a, b));
        }
    }
    let mut aug = DMatrix::<T>::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(f * T::from_real(dt)));
    aug.view_mut((0, n), (n, 1)).copy_from(&(g * T::from_real(dt)));
    let e = matrix_exp(&aug, tol);
    Ok((a, e.view((0, n), (n, 1)).column(0).into_owned()))
}

fn constant_parts(gen: &Generator) -> Result<()> {
    if !gen.is_constant() {
        return Err(HippoError::InvalidParameter("operation needs a time-invariant generator".into()));
    }
    Ok(())
}

/// Applies a per-scalar-type map to the state's coefficients.
fn map_const(
    gen: &Generator,
    state: &CoefState,
    real: impl FnOnce(&DMatrix<f64>, &DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
    complex: impl FnOnce(&DMatrix<Complex64>, &DVector<Complex64>, &DVector<Complex64>) -> Result<DVector<Complex64>>,
) -> Result<Coefs> {
    constant_parts(gen)?;
    match (&gen.dynamics, &state.c) {
        (Dynamics::ConstantReal { f, g }, Coefs::Real(c)) => Ok(Coefs::Real(real(f, g, c)?)),
        (Dynamics::ConstantComplex { f, g }, Coefs::Complex(c)) => Ok(Coefs::Complex(complex(f, g, c)?)),
        (Dynamics::ConstantComplex { f, g }, Coefs::Real(c)) => {
            Ok(Coefs::Complex(complex(f, g, &c.map(Complex64::from))?))
        }
        _ => Err(HippoError::InvalidParameter("complex state for a real generator".into())),
    }
}

/// One GBT step. Constant generators use the dense solve; LegS uses its
/// continuous `1/t` form at the state's time (the injection rule at `t = 0`);
/// FRU steps its decoupled recurrence with `G(t)`.
pub fn gbt_step(gen: &Generator, alpha: f64, dt: f64, state: &CoefState, f: f64) -> Result<CoefState> {
    check_dt(dt)?;
    let c = match &gen.dynamics {
        Dynamics::ScaledByInvT { a, b } => {
            let c = state.c.as_real().ok_or(HippoError::InvalidParameter("LegS state is real".into()))?;
            Coefs::Real(legs_continuous_dense(a, b, alpha, state.t, dt, c, f)?)
        }
        Dynamics::FourierRecurrent { freqs, theta } => {
            let c = state.c.to_complex();
            let g = fru_input(freqs, *theta, state.t);
            Coefs::Complex(c + g * Complex64::from(dt * f))
        }
        _ => map_const(
            gen,
            state,
            |fm, g, c| gbt_dense(fm, g, alpha, dt, c, f),
            |fm, g, c| gbt_dense(fm, g, alpha, dt, c, f),
        )?,
    };
    state.advance(c, dt)
}

fn legs_continuous_dense(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    alpha: f64,
    t: f64,
    dt: f64,
    c: &DVector<f64>,
    f: f64,
) -> Result<DVector<f64>> {
    if t == 0.0 {
        return solve(shifted(a, alpha), &(b * f));
    }
    let lhs = shifted(a, alpha * dt / (t + dt));
    let rhs = shifted(a, -((1.0 - alpha) * dt / t)) * c + b * (dt / t * f);
    solve(lhs, &rhs)
}

/// Forward Euler: `c' = (I + dt F) c + dt G f`.
pub fn euler_step(gen: &Generator, dt: f64, state: &CoefState, f: f64) -> Result<CoefState> {
    check_dt(dt)?;
    fn go<T: Scalar>(fm: &DMatrix<T>, g: &DVector<T>, dt: f64, c: &DVector<T>, u: f64) -> Result<DVector<T>> {
        Ok(shifted(fm, dt) * c + g * T::from_real(dt * u))
    }
    let c = map_const(gen, state, |fm, g, c| go(fm, g, dt, c, f), |fm, g, c| go(fm, g, dt, c, f))?;
    state.advance(c, dt)
}

/// Backward Euler: `(I - dt F) c' = c + dt G f`.
pub fn backward_euler_step(gen: &Generator, dt: f64, state: &CoefState, f: f64) -> Result<CoefState> {
    check_dt(dt)?;
    fn go<T: Scalar>(fm: &DMatrix<T>, g: &DVector<T>, dt: f64, c: &DVector<T>, u: f64) -> Result<DVector<T>> {
        let rhs = c + g * T::from_real(dt * u);
        solve(shifted(fm, -dt), &rhs)
    }
    let c = map_const(gen, state, |fm, g, c| go(fm, g, dt, c, f), |fm, g, c| go(fm, g, dt, c, f))?;
    state.advance(c, dt)
}

/// Bilinear (Tustin): `(I - dt/2 F) c' = (I + dt/2 F) c + dt G f`.
pub fn bilinear_step(gen: &Generator, dt: f64, state: &CoefState, f: f64) -> Result<CoefState> {
    check_dt(dt)?;
    fn go<T: Scalar>(fm: &DMatrix<T>, g: &DVector<T>, dt: f64, c: &DVector<T>, u: f64) -> Result<DVector<T>> {
        let h = dt * 0.5;
        let rhs = shifted(fm, h) * c + g * T::from_real(dt * u);
        solve(shifted(fm, -h), &rhs)
    }
    let c = map_const(gen, state, |fm, g, c| go(fm, g, dt, c, f), |fm, g, c| go(fm, g, dt, c, f))?;
    state.advance(c, dt)
}

/// Zero-order hold: `c' = e^{dt F} c + (integral_0^dt e^{tau F} dtau) G f`.
pub fn zoh_step(gen: &Generator, dt: f64, state: &CoefState, f: f64) -> Result<CoefState> {
    check_dt(dt)?;
    fn go<T: Scalar>(fm: &DMatrix<T>, g: &DVector<T>, dt: f64, c: &DVector<T>, u: f64) -> Result<DVector<T>> {
        let (a, b) = zoh_matrices(fm, g, dt)?;
        Ok(a * c + b * T::from_real(u))
    }
    let c = map_const(gen, state, |fm, g, c| go(fm, g, dt, c, f), |fm, g, c| go(fm, g, dt, c, f))?;
    state.advance(c, dt)
}

/// Index-form LegS GBT step, dense:
/// `(I + alpha/(k+1) A) c' = (I - (1-alpha)/k A) c + (1/k) B f`.
///
/// At `k = 0` the state carries no history and the sample is injected as
/// `(I + alpha A) c' = B f`. The step index advances by one and `t` by one unit.
pub fn legs_step(a: &DMatrix<f64>, b: &DVector<f64>, alpha: f64, state: &CoefState, f: f64) -> Result<CoefState> {
    let c = state.c.as_real().ok_or(HippoError::InvalidParameter("LegS state is real".into()))?;
    let next = if state.k == 0 {
        solve(shifted(a, alpha), &(b * f))?
    } else {
        let k = state.k as f64;
        let lhs = shifted(a, alpha / (k + 1.0));
        let rhs = shifted(a, -((1.0 - alpha) / k)) * c + b * (f / k);
        solve(lhs, &rhs)?
    };
    state.advance(Coefs::Real(next), 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    Final,
    All,
}

/// States after each step (or only the last one).
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub states: Vec<CoefState>,
}

impl Run {
    pub fn last(&self) -> &CoefState {
        self.states.last().expect("runs hold at least one state")
    }
}

struct Recorder {
    record: Record,
    states: Vec<CoefState>,
}

impl Recorder {
    fn new(record: Record) -> Self {
        Recorder { record, states: Vec::new() }
    }

    fn push(&mut self, s: CoefState) {
        if self.record == Record::Final {
            self.states.clear();
        }
        self.states.push(s);
    }

    fn finish(self, fallback: CoefState) -> Run {
        let mut states = self.states;
        if states.is_empty() {
            states.push(fallback);
        }
        Run { states }
    }
}

/// Step sizes and input samples for a run: `(dt_i, f_i)`, plus the start time.
fn schedule(scheme: &SchemeSpec, signal: &Signal) -> Result<(f64, Vec<f64>)> {
    match (scheme.step, signal) {
        (StepPolicy::Fixed(dt), Signal::Uniform { values, .. }) => Ok((0.0, vec![dt; values.len()])),
        (StepPolicy::Fixed(_), Signal::Timestamped { .. }) => Err(HippoError::InvalidParameter(
            "fixed-step schemes need a uniform signal".into(),
        )),
        (_, Signal::Uniform { dt, values }) => Ok((0.0, vec![*dt; values.len()])),
        (_, Signal::Timestamped { times, .. }) => {
            let dts: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
            Ok((times[0], dts))
        }
    }
}

/// Folds the discretized dynamics over `signal`.
///
/// Uniform signals consume every sample and end at `M dt`. Timestamped signals
/// take `M - 1` steps, the step from `t_i` to `t_{i+1}` holding `f_i`; LegS
/// measures time from the first sample. Index-based LegS runs advance `t` by the
/// signal's `dt` per step (one unit for timestamped input).
pub fn run_stream(gen: &Generator, scheme: &SchemeSpec, signal: &Signal, record: Record) -> Result<Run> {
    scheme.validate_for(gen)?;
    if signal.is_empty() {
        return Err(HippoError::Empty);
    }
    if let Signal::Timestamped { times, values } = signal {
        Signal::timestamped(times.clone(), values.clone())?;
    }
    let values = signal.values();
    let mut rec = Recorder::new(record);
    let init = CoefState::zeros(gen);

    if let Dynamics::ScaledByInvT { b, .. } = &gen.dynamics {
        return run_legs_fast(gen.dim(), b, scheme, signal, rec);
    }

    let (t0, dts) = schedule(scheme, signal)?;
    let mut state = CoefState { t: t0, ..init };
    let uniform_dt = match (scheme.step, signal) {
        (StepPolicy::Fixed(dt), _) => Some(dt),
        (_, Signal::Uniform { dt, .. }) => Some(*dt),
        _ => None,
    };

    if let (Some(dt), true) = (uniform_dt, gen.is_constant()) {
        match (&gen.dynamics, scheme.method) {
            (Dynamics::ConstantReal { f, g }, method) => {
                let (a, b) = discrete_matrices(f, g, method, dt)?;
                let c = state.c.as_real().expect("real generator starts real").clone();
                run_cached(&a, &b, c, dt, t0, values, &mut rec, Coefs::Real);
            }
            (Dynamics::ConstantComplex { f, g }, method) => {
                let (a, b) = discrete_matrices(f, g, method, dt)?;
                run_cached(&a, &b, state.c.to_complex(), dt, t0, values, &mut rec, Coefs::Complex);
            }
            _ => unreachable!("constant generators only"),
        }
        let fallback = rec.states.last().cloned().unwrap_or(state);
        return Ok(rec.finish(fallback));
    }

    for (i, (dt, f)) in dts.iter().zip(values).enumerate() {
        state = match scheme.method {
            Method::Gbt(alpha) => gbt_step(gen, alpha, *dt, &state, *f),
            Method::Zoh => zoh_step(gen, *dt, &state, *f),
        }
        .map_err(|e| e.at_step(i))?;
        rec.push(state.clone());
    }
    Ok(rec.finish(state))
}

fn discrete_matrices<T: Scalar>(f: &DMatrix<T>, g: &DVector<T>, method: Method, dt: f64) -> Result<(DMatrix<T>, DVector<T>)> {
    match method {
        Method::Gbt(alpha) => gbt_matrices(f, g, alpha, dt),
        Method::Zoh => zoh_matrices(f, g, dt),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_cached<T: Scalar>(
    a: &DMatrix<T>,
    b: &DVector<T>,
    mut c: DVector<T>,
    dt: f64,
    t0: f64,
    values: &[f64],
    rec: &mut Recorder,
    wrap: impl Fn(DVector<T>) -> Coefs,
) {
    let mut next = c.clone();
    let last = values.len() - 1;
    for (i, f) in values.iter().enumerate() {
        next.gemv(T::one(), a, &c, T::zero());
        next.axpy(T::from_real(*f), b, T::one());
        std::mem::swap(&mut c, &mut next);
        if rec.record == Record::All || i == last {
            rec.push(CoefState {
                c: wrap(c.clone()),
                k: i + 1,
                t: t0 + (i + 1) as f64 * dt,
            });
        }
    }
}

fn run_legs_fast(n: usize, b: &DVector<f64>, scheme: &SchemeSpec, signal: &Signal, mut rec: Recorder) -> Result<Run> {
    let alpha = match scheme.method {
        Method::Gbt(a) => a,
        Method::Zoh => unreachable!("rejected by validate_for"),
    };
    let fac = LegsFactors::new(n);
    let b = b.as_slice();
    let mut c = vec![0.0; n];
    let mut next = vec![0.0; n];
    let values = signal.values();

    let (dts, unit) = match scheme.step {
        StepPolicy::IndexBased => {
            let unit = match signal {
                Signal::Uniform { dt, .. } => *dt,
                Signal::Timestamped { .. } => 1.0,
            };
            (None, unit)
        }
        _ => (Some(schedule(scheme, signal)?.1), 0.0),
    };
    let steps = dts.as_ref().map_or(values.len(), |d| d.len());
    let mut t = 0.0;
    for i in 0..steps {
        let f = values[i];
        let res = match &dts {
            None => legs_gbt_fast_into(&fac, b, alpha, i, &c, f, &mut next),
            Some(d) => {
                let dt = d[i];
                if t == 0.0 {
                    next.iter_mut().zip(b).for_each(|(o, bn)| *o = bn * f);
                    crate::fastlegs::legs_solve_in_place(&fac, -alpha, &mut next)
                } else {
                    legs_affine_step(&fac, b, -(alpha * dt / (t + dt)), (1.0 - alpha) * dt / t, dt / t, &c, f, &mut next)
                }
            }
        };
        res.map_err(|e| e.at_step(i))?;
        std::mem::swap(&mut c, &mut next);
        t = match &dts {
            None => (i + 1) as f64 * unit,
            Some(d) => t + d[i],
        };
        if rec.record == Record::All || i + 1 == steps {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(HippoError::Domain("coefficients became non-finite".into()).at_step(i));
            }
            rec.push(CoefState::real(DVector::from_column_slice(&c), i + 1, t));
        }
    }
    Ok(rec.finish(CoefState::real(DVector::from_vec(c), 0, 0.0)))
}
