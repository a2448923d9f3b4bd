//! DDPM noise schedule and forward (noising) process.

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{fl, Scalar};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("timestep {got} outside [1, {t_train}]")]
    TimestepOutOfRange { got: usize, t_train: usize },
}

/// Linear-beta DDPM schedule. `alpha_bar(t)` is the cumulative product of
/// `1 - beta` up to timestep `t`, with `alpha_bar(0) = 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub t_train: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    #[serde(skip)]
    alpha_bars: Vec<f64>,
    #[serde(skip)]
    betas: Vec<f64>,
}

impl PartialEq for NoiseSchedule {
    fn eq(&self, other: &Self) -> bool {
        self.t_train == other.t_train
            && self.beta_start == other.beta_start
            && self.beta_end == other.beta_end
    }
}

impl NoiseSchedule {
    pub fn linear(beta_start: f64, beta_end: f64, t_train: usize) -> Self {
        assert!(t_train >= 1);
        let mut betas = Vec::with_capacity(t_train);
        for i in 0..t_train {
            let frac = if t_train == 1 {
                0.0
            } else {
                i as f64 / (t_train - 1) as f64
            };
            betas.push(beta_start + frac * (beta_end - beta_start));
        }
        let mut alpha_bars = Vec::with_capacity(t_train);
        let mut prod = 1.0;
        for &beta in &betas {
            prod *= 1.0 - beta;
            alpha_bars.push(prod);
        }
        NoiseSchedule {
            t_train,
            beta_start,
            beta_end,
            alpha_bars,
            betas,
        }
    }

    /// Rebuild the derived tables after deserialization.
    pub fn rehydrate(&mut self) {
        *self = NoiseSchedule::linear(self.beta_start, self.beta_end, self.t_train);
    }

    /// `beta_t` for `t` in `[1, t_train]`.
    pub fn beta(&self, t: usize) -> f64 {
        assert!((1..=self.t_train).contains(&t));
        self.betas[t - 1]
    }

    /// Cumulative `alpha_bar_t`; `t = 0` returns 1 (no noise).
    pub fn alpha_bar(&self, t: usize) -> f64 {
        assert!(t <= self.t_train, "t {t} > T {}", self.t_train);
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }
}

/// Closed-form forward noising: `x_t = sqrt(a_bar_t) x0 + sqrt(1 - a_bar_t) eps`.
pub fn ddpm_forward<F: Scalar>(
    x0: &Array3<F>,
    t: usize,
    eps: &Array3<F>,
    schedule: &NoiseSchedule,
) -> Result<Array3<F>, ScheduleError> {
    if t < 1 || t > schedule.t_train {
        return Err(ScheduleError::TimestepOutOfRange {
            got: t,
            t_train: schedule.t_train,
        });
    }
    let a = schedule.alpha_bar(t);
    let signal = fl::<F>(a.sqrt());
    let noise = fl::<F>((1.0 - a).sqrt());
    Ok(x0 * signal + &(eps * noise))
}
