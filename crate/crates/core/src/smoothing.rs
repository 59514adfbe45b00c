//! Symmetric exponential moving-average (sEMA) smoothing.
//!
//! Sample `k` of a series is replaced by the kernel-weighted mean
//!
//! ```text
//! x̄(k) = (1/Z) Σ_{j=k−D}^{k+D} x(j) · exp(−|k−j| / Δ),   Δ = T / dt
//! ```
//!
//! over a symmetric window whose half-width `D = min(⌊3Δ⌋, k−1, N−k)` (1-based
//! `k`) shrinks towards the ends, so the first and last samples pass through
//! unchanged.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory_io::Trajectory;

#[derive(Debug, Error, PartialEq)]
pub enum SmoothingError {
    #[error("cannot smooth an empty series")]
    EmptySeries,
    #[error("need at least 2 samples to differentiate, got {0}")]
    SeriesTooShort(usize),
    #[error("smoothing width and time step must be positive")]
    InvalidWidth,
}

/// Smoothing widths in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub t_x: f64,
    pub t_v: f64,
    pub t_a: f64,
    pub dt: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            t_x: 0.5,
            t_v: 1.0,
            t_a: 4.0,
            dt: crate::DT,
        }
    }
}

/// Largest half-width `⌊3Δ⌋`. The small epsilon keeps `0.5/0.1` from landing
/// on 4.999… and losing a sample.
fn max_radius(delta: f64) -> usize {
    (3.0 * delta + 1e-9).floor() as usize
}

pub fn sema_smooth(series: &[f64], t: f64, dt: f64) -> Result<Vec<f64>, SmoothingError> {
    if series.is_empty() {
        return Err(SmoothingError::EmptySeries);
    }
    if !(t > 0.0 && dt > 0.0 && t.is_finite() && dt.is_finite()) {
        return Err(SmoothingError::InvalidWidth);
    }
    let n = series.len();
    let delta = t / dt;
    let d_max = max_radius(delta).min(n / 2);
    let kernel: Vec<f64> = (0..=d_max).map(|j| (-(j as f64) / delta).exp()).collect();

    Ok((0..n)
        .map(|k| {
            let d = d_max.min(k).min(n - 1 - k);
            let mut num = series[k];
            let mut z = 1.0;
            for (j, w) in kernel.iter().enumerate().take(d + 1).skip(1) {
                num += w * (series[k - j] + series[k + j]);
                z += 2.0 * w;
            }
            num / z
        })
        .collect())
}

/// Central differences inside, one-sided differences at both ends.
pub fn differentiate(series: &[f64], dt: f64) -> Result<Vec<f64>, SmoothingError> {
    let n = series.len();
    if n < 2 {
        return Err(SmoothingError::SeriesTooShort(n));
    }
    Ok((0..n)
        .map(|k| match k {
            0 => (series[1] - series[0]) / dt,
            k if k == n - 1 => (series[n - 1] - series[n - 2]) / dt,
            k => (series[k + 1] - series[k - 1]) / (2.0 * dt),
        })
        .collect())
}

/// Recompute velocity and acceleration from raw positions, then smooth all
/// three with their own widths. The trajectory's own velocity/acceleration
/// columns are discarded.
pub fn smooth_trajectory(traj: &Trajectory, cfg: &SmoothingConfig) -> Result<Trajectory, SmoothingError> {
    let v_raw = differentiate(&traj.positions, cfg.dt)?;
    let a_raw = differentiate(&v_raw, cfg.dt)?;
    Ok(Trajectory {
        positions: sema_smooth(&traj.positions, cfg.t_x, cfg.dt)?,
        velocities: sema_smooth(&v_raw, cfg.t_v, cfg.dt)?,
        accelerations: sema_smooth(&a_raw, cfg.t_a, cfg.dt)?,
        ..traj.clone()
    })
}

/// Fraction of samples with `|a| > limit`.
pub fn exceedance_fraction<'a>(values: impl IntoIterator<Item = &'a f64>, limit: f64) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for v in values {
        total += 1;
        if v.abs() > limit {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}
