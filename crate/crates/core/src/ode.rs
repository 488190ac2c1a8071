//! Fixed-step classical Runge-Kutta integration on a uniform time grid.

use crate::{Error, Result};

/// Uniform time grid `t0, t0 + h, ..., tf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    tf: f64,
    step: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// The number of steps is `round((tf - t0) / step)`; the step must divide the
    /// horizon to within 1e-9 relative.
    pub fn new(t0: f64, tf: f64, step: f64) -> Result<Self> {
        if !(t0.is_finite() && tf.is_finite() && step.is_finite()) || step <= 0.0 || tf <= t0 {
            return Err(Error::Domain(format!("invalid time grid t0={t0} tf={tf} h={step}")));
        }
        let ratio = (tf - t0) / step;
        let n_steps = ratio.round() as usize;
        if n_steps == 0 || (ratio - n_steps as f64).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Domain(format!(
                "step {step} does not divide horizon [{t0}, {tf}]"
            )));
        }
        Ok(Self { t0, tf, step, n_steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid points (`n_steps + 1`).
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.tf
        } else {
            self.t0 + k as f64 * self.step
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn duration(&self) -> f64 {
        self.tf - self.t0
    }
}

/// Integrates `x' = f(t, x)` with classical RK4, calling `record(k, t, x)` at
/// every grid point including the initial one.
pub fn rk4<F, R>(grid: &TimeGrid, x0: &[f64], mut f: F, mut record: R) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    R: FnMut(usize, f64, &[f64]),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let h = grid.step();
    record(0, grid.t0(), &x);
    for k in 0..grid.n_steps() {
        let t = grid.time(k);
        f(t, &x, &mut k1)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        f(t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        f(t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        f(t + h, &tmp, &mut k4)?;
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_next = grid.time(k + 1);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: t_next });
        }
        record(k + 1, t_next, &x);
    }
    Ok(())
}

/// Trapezoid rule over (possibly non-uniform) sample times.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(times.len(), values.len());
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}
