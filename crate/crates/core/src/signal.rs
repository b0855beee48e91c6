use crate::error::{HippoError, Result};

/// A sampled input function.
///
/// Sample `i` of a uniform signal sits at `i * dt` and is held over
/// `[i dt, (i+1) dt)`. Timestamped samples are held until the next timestamp.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Uniform { dt: f64, values: Vec<f64> },
    Timestamped { times: Vec<f64>, values: Vec<f64> },
}

fn check_finite(values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(HippoError::Domain(format!("sample {i} is not finite")));
    }
    Ok(())
}

impl Signal {
    pub fn uniform(dt: f64, values: Vec<f64>) -> Result<Signal> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(HippoError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        check_finite(&values)?;
        Ok(Signal::Uniform { dt, values })
    }

    pub fn timestamped(times: Vec<f64>, values: Vec<f64>) -> Result<Signal> {
        if times.len() != values.len() {
            return Err(HippoError::LengthMismatch {
                left: times.len(),
                right: values.len(),
            });
        }
        check_finite(&times)?;
        check_finite(&values)?;
        if let Some(i) = (1..times.len()).find(|&i| times[i] <= times[i - 1]) {
            return Err(HippoError::NonIncreasingTimestamps { index: i });
        }
        Ok(Signal::Timestamped { times, values })
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Signal::Uniform { values, .. } | Signal::Timestamped { values, .. } => values,
        }
    }

    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.values().is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        match self {
            Signal::Uniform { dt, .. } => i as f64 * dt,
            Signal::Timestamped { times, .. } => times[i],
        }
    }

    /// Time of the first sample.
    pub fn origin(&self) -> f64 {
        match self {
            Signal::Uniform { .. } => 0.0,
            Signal::Timestamped { times, .. } => times.first().copied().unwrap_or(0.0),
        }
    }

    /// Time reached after the whole signal has been consumed.
    pub fn end_time(&self) -> f64 {
        match self {
            Signal::Uniform { dt, values } => values.len() as f64 * dt,
            Signal::Timestamped { times, .. } => times.last().copied().unwrap_or(0.0),
        }
    }

    /// Midpoints of the held intervals, one per consumed sample. The last
    /// timestamped sample is never held and has no point.
    pub fn eval_grid(&self) -> Vec<f64> {
        match self {
            Signal::Uniform { dt, values } => (0..values.len()).map(|i| (i as f64 + 0.5) * dt).collect(),
            Signal::Timestamped { times, .. } => times.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
        }
    }

    /// Keeps every `factor`-th sample. Uniform signals keep their time axis
    /// (the spacing grows by `factor`).
    pub fn subsample(&self, factor: usize) -> Result<Signal> {
        if factor == 0 {
            return Err(HippoError::InvalidParameter("factor must be positive".into()));
        }
        let pick = |v: &[f64]| v.iter().step_by(factor).copied().collect::<Vec<_>>();
        Ok(match self {
            Signal::Uniform { dt, values } => Signal::Uniform {
                dt: dt * factor as f64,
                values: pick(values),
            },
            Signal::Timestamped { times, values } => Signal::Timestamped {
                times: pick(times),
                values: pick(values),
            },
        })
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Signal> {
        if values.len() != self.len() {
            return Err(HippoError::LengthMismatch {
                left: values.len(),
                right: self.len(),
            });
        }
        Ok(match self {
            Signal::Uniform { dt, .. } => Signal::Uniform { dt: *dt, values },
            Signal::Timestamped { times, .. } => Signal::Timestamped {
                times: times.clone(),
                values,
            },
        })
    }
}
