//! Synthetic measurements and least-squares identification, used to compare
//! excitation designs by the spread of the resulting estimates.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::models::BlackBoxModel;
use crate::ode::TimeGrid;
use crate::par::map_indexed;
use crate::signal::SignalSpec;
use crate::{Error, Result};

/// A noisy output record together with the input that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub label: String,
    pub input: SignalSpec,
    pub grid: TimeGrid,
    /// `m` rows, one column per grid point.
    pub y: DMatrix<f64>,
    pub noise_std: f64,
    pub seed: u64,
}

impl Measurement {
    pub fn n_points(&self) -> usize {
        self.y.len()
    }

    pub fn duration(&self) -> f64 {
        self.grid.duration()
    }
}

/// `simulate(theta_star, input)` plus i.i.d. Gaussian noise drawn from a
/// ChaCha8 stream seeded with `seed`.
pub fn synthesize_measurements(
    model: &dyn BlackBoxModel,
    theta_star: &[f64],
    input: &SignalSpec,
    grid: &TimeGrid,
    noise_std: f64,
    seed: u64,
    label: impl Into<String>,
) -> Result<Measurement> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::Domain(format!("noise standard deviation {noise_std}")));
    }
    let mut y = model.simulate(theta_star, input, grid)?;
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::Domain(e.to_string()))?;
        for v in y.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(Measurement { label: label.into(), input: input.clone(), grid: *grid, y, noise_std, seed })
}

/// Least-squares estimate with linearized standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub label: String,
    pub theta: Vec<f64>,
    /// `None` when `J^T J` is singular; see `unidentifiable`.
    pub std: Option<Vec<f64>>,
    /// Eigenvectors of `J^T J` with (numerically) zero eigenvalue.
    pub unidentifiable: Vec<Vec<f64>>,
    pub rss: f64,
    pub n_points: usize,
    /// Sum of the dataset durations.
    pub duration: f64,
    pub iterations: usize,
}

fn residuals(model: &dyn BlackBoxModel, data: &[Measurement], theta: &[f64]) -> Result<DVector<f64>> {
    let mut r = Vec::with_capacity(data.iter().map(Measurement::n_points).sum());
    for d in data {
        let sim = model.simulate(theta, &d.input, &d.grid)?;
        if sim.shape() != d.y.shape() {
            return Err(Error::Dimension(format!("simulation is {:?}, data {:?}", sim.shape(), d.y.shape())));
        }
        r.extend(d.y.iter().zip(sim.iter()).map(|(m, s)| m - s));
    }
    Ok(DVector::from_vec(r))
}

/// Central finite-difference Jacobian of the simulated outputs (not of the
/// residuals), relative step 1e-6.
fn jacobian(model: &dyn BlackBoxModel, data: &[Measurement], theta: &[f64]) -> Result<DMatrix<f64>> {
    let cols = map_indexed(theta.len(), |k| -> Result<DVector<f64>> {
        let h = (1e-6 * theta[k].abs()).max(1e-9);
        let mut up = theta.to_vec();
        let mut dn = theta.to_vec();
        up[k] += h;
        dn[k] -= h;
        // residual = y - sim, so d sim = -(d residual)
        let ru = residuals(model, data, &up)?;
        let rd = residuals(model, data, &dn)?;
        Ok((rd - ru) / (2.0 * h))
    });
    let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&cols))
}

/// Information matrix `J^T J` of the outputs at `theta` for the given datasets.
pub fn information_matrix(model: &dyn BlackBoxModel, data: &[Measurement], theta: &[f64]) -> Result<DMatrix<f64>> {
    let j = jacobian(model, data, theta)?;
    Ok(j.transpose() * j)
}

/// `sigma2 (J^T J)^-1`; `None` if singular.
pub fn linearized_covariance(
    model: &dyn BlackBoxModel,
    data: &[Measurement],
    theta: &[f64],
    sigma2: f64,
) -> Result<Option<DMatrix<f64>>> {
    Ok(information_matrix(model, data, theta)?.try_inverse().map(|inv| inv * sigma2))
}

/// Levenberg-Marquardt minimization of the summed squared output residuals
/// over all datasets, starting at `theta0` and kept inside `boxes`.
pub fn least_squares_fit(
    model: &dyn BlackBoxModel,
    data: &[Measurement],
    theta0: &[f64],
    boxes: &[(f64, f64)],
    label: impl Into<String>,
) -> Result<EstimateReport> {
    if data.is_empty() {
        return Err(Error::Data("no datasets".into()));
    }
    let p = theta0.len();
    if boxes.len() != p || p != model.q() {
        return Err(Error::Dimension(format!(
            "{} start values, {} bounds, model has {} parameters",
            p,
            boxes.len(),
            model.q()
        )));
    }
    if theta0.iter().zip(boxes).any(|(t, (lo, hi))| t < lo || t > hi) {
        return Err(Error::Domain(format!("start value {theta0:?} outside the bounds")));
    }
    let n: usize = data.iter().map(Measurement::n_points).sum();
    let mut theta = theta0.to_vec();
    let mut r = residuals(model, data, &theta)?;
    let mut rss = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for it in 0..200 {
        iterations = it + 1;
        let j = jacobian(model, data, &theta)?;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for k in 0..p {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .zip(boxes)
                .map(|((t, s), (lo, hi))| (t + s).clamp(*lo, *hi))
                .collect();
            match residuals(model, data, &cand) {
                Ok(rc) if rc.norm_squared() < rss => {
                    let new_rss = rc.norm_squared();
                    let rel_change = (rss - new_rss) / rss.max(1e-300);
                    let step_size = cand.iter().zip(&theta).map(|(a, b)| ((a - b) / b.abs().max(1e-12)).abs()).fold(0.0, f64::max);
                    theta = cand;
                    r = rc;
                    rss = new_rss;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = rel_change > 1e-14 && step_size > 1e-12;
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !improved {
            break;
        }
    }

    let j = jacobian(model, data, &theta)?;
    let jtj = j.transpose() * &j;
    let eig = SymmetricEigen::new(jtj.clone());
    let max_eig = eig.eigenvalues.amax();
    let unidentifiable: Vec<Vec<f64>> = (0..p)
        .filter(|&k| eig.eigenvalues[k] <= 1e-12 * max_eig.max(1e-300))
        .map(|k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    let std = if unidentifiable.is_empty() && n > p {
        let sigma2 = rss / (n - p) as f64;
        jtj.try_inverse().map(|inv| (0..p).map(|k| (sigma2 * inv[(k, k)]).max(0.0).sqrt()).collect())
    } else {
        None
    };
    Ok(EstimateReport {
        label: label.into(),
        theta,
        std,
        unidentifiable,
        rss,
        n_points: n,
        duration: data.iter().map(Measurement::duration).sum(),
        iterations,
    })
}

/// Writes `dataset, total_time, <name>_mean, <name>_std, ...`, one row per report.
pub fn write_estimates_csv(w: impl Write, reports: &[EstimateReport], params: &[String]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["dataset".to_string(), "total_time".to_string()];
    for p in params {
        header.push(format!("{p}_mean"));
        header.push(format!("{p}_std"));
    }
    wr.write_record(&header)?;
    for r in reports {
        if r.theta.len() != params.len() {
            return Err(Error::Dimension(format!("{} estimates for {} names", r.theta.len(), params.len())));
        }
        let mut rec = vec![r.label.clone(), format!("{}", r.duration)];
        for k in 0..params.len() {
            rec.push(format!("{:e}", r.theta[k]));
            rec.push(r.std.as_ref().map_or_else(String::new, |s| format!("{:e}", s[k])));
        }
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
