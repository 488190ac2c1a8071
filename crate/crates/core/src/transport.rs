//! Non-intrusive sensitivity estimation from parameter/output samples.
//!
//! The parameter axis `theta_j` is split into bins; within each bin the
//! conditional output distribution is summarized by its first two moments and
//! compared to the unconditional one with the Bures (Gaussian Wasserstein-2)
//! distance
//!
//! ```text
//! W_B^2 = |mu_1 - mu_2|^2 + tr S_1 + tr S_2 - 2 tr (S_1^1/2 S_2 S_1^1/2)^1/2
//! xi_B  = sum_b p_b W_B^2(y, y | bin b)
//! ```
//!
//! The mean part alone, normalized by the total variance, is a first-order
//! Sobol index estimate.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lpv::check_psd;
use crate::models::BlackBoxModel;
use crate::ode::TimeGrid;
use crate::par::map_indexed;
use crate::pce::ParameterEnsemble;
use crate::signal::Input;
use crate::{Error, Result};

/// Total output variance at or below this value makes the normalized indices
/// undefined.
pub const TRACE_EPS: f64 = 1e-14;

/// Draws `n_s` i.i.d. parameter vectors (rows) from `ensemble`.
///
/// The generator is ChaCha8 seeded from `seed`; samples are drawn row by row,
/// parameter by parameter, so the output is bit-reproducible.
pub fn sample_parameters(ensemble: &ParameterEnsemble, n_s: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n_s < 2 {
        return Err(Error::Domain(format!("need at least 2 samples, got {n_s}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = ensemble.q();
    let mut out = DMatrix::zeros(n_s, q);
    for i in 0..n_s {
        for (j, m) in ensemble.marginals().iter().enumerate() {
            out[(i, j)] = m.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Sample mean and population covariance (`1/N` normalization) of the rows
/// of `values`.
pub fn empirical_moments(values: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = values.nrows();
    if n == 0 {
        return Err(Error::Data("no samples".into()));
    }
    let rows: Vec<usize> = (0..n).collect();
    Ok(moments_of(values, &rows))
}

fn moments_of(values: &DMatrix<f64>, rows: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let m = values.ncols();
    let n = rows.len() as f64;
    let mut mu = DVector::zeros(m);
    for &r in rows {
        for c in 0..m {
            mu[c] += values[(r, c)];
        }
    }
    mu /= n;
    let mut cov = DMatrix::zeros(m, m);
    for &r in rows {
        for a in 0..m {
            let da = values[(r, a)] - mu[a];
            for b in 0..=a {
                cov[(a, b)] += da * (values[(r, b)] - mu[b]);
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    cov /= n;
    (mu, cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinStrategy {
    /// Edges at empirical quantiles; bin counts differ by at most one.
    #[default]
    Equiprobable,
    /// Uniform edges over the sample range; empty bins are merged into a
    /// neighbour.
    Equiwidth,
}

/// Default bin count `max(2, floor(sqrt(n_s)))`, capped at 100 and at `n_s`.
pub fn default_bins(n_s: usize) -> usize {
    ((n_s as f64).sqrt().floor() as usize).clamp(2, 100).min(n_s)
}

/// Partition of the samples along one parameter axis.
///
/// Bins are contiguous in the value-sorted order `order`; bin `b` holds
/// `order[bounds[b]..bounds[b + 1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinPartition {
    pub order: Vec<usize>,
    pub bounds: Vec<usize>,
    /// Bin id of every sample, in the original sample order.
    pub assignment: Vec<usize>,
    /// `p_b = N_b / N_s`.
    pub weights: Vec<f64>,
    /// Number of empty equiwidth bins merged away.
    pub merged: usize,
}

impl BinPartition {
    pub fn n_bins(&self) -> usize {
        self.weights.len()
    }

    pub fn bin(&self, b: usize) -> &[usize] {
        &self.order[self.bounds[b]..self.bounds[b + 1]]
    }
}

pub fn partition_bins(column: &[f64], m: usize, strategy: BinStrategy) -> Result<BinPartition> {
    let n = column.len();
    if m < 2 {
        return Err(Error::Domain(format!("need at least 2 bins, got {m}")));
    }
    if m > n {
        return Err(Error::Domain(format!("{m} bins for {n} samples")));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("parameter samples".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));

    let (bounds, merged) = match strategy {
        BinStrategy::Equiprobable => ((0..=m).map(|b| b * n / m).collect::<Vec<_>>(), 0),
        BinStrategy::Equiwidth => {
            let lo = column[order[0]];
            let hi = column[order[n - 1]];
            let width = (hi - lo) / m as f64;
            let mut counts = vec![0usize; m];
            for &v in column {
                let b = if width > 0.0 { (((v - lo) / width) as usize).min(m - 1) } else { 0 };
                counts[b] += 1;
            }
            let mut bounds = vec![0];
            let mut acc = 0;
            let mut merged = 0;
            for c in counts {
                if c == 0 {
                    merged += 1;
                    continue;
                }
                acc += c;
                bounds.push(acc);
            }
            (bounds, merged)
        }
    };
    let n_bins = bounds.len() - 1;
    let mut assignment = vec![0; n];
    for b in 0..n_bins {
        for &i in &order[bounds[b]..bounds[b + 1]] {
            assignment[i] = b;
        }
    }
    let weights = (0..n_bins).map(|b| (bounds[b + 1] - bounds[b]) as f64 / n as f64).collect();
    if merged > 0 {
        log::debug!("equiwidth binning merged {merged} empty bins");
    }
    Ok(BinPartition { order, bounds, assignment, weights, merged })
}

/// Squared Bures distance and its mean and covariance parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuresDistance {
    pub w2: f64,
    pub mean_part: f64,
    pub cov_part: f64,
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

fn bures_cov(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> f64 {
    if s1.nrows() == 1 {
        let d = s1[(0, 0)].max(0.0).sqrt() - s2[(0, 0)].max(0.0).sqrt();
        return d * d;
    }
    let r1 = sqrt_psd(s1);
    let cross = sqrt_psd(&(&r1 * s2 * &r1));
    (s1.trace() + s2.trace() - 2.0 * cross.trace()).max(0.0)
}

pub fn bures_distance(
    mu1: &DVector<f64>,
    s1: &DMatrix<f64>,
    mu2: &DVector<f64>,
    s2: &DMatrix<f64>,
) -> Result<BuresDistance> {
    let m = mu1.len();
    if mu2.len() != m || s1.shape() != (m, m) || s2.shape() != (m, m) {
        return Err(Error::Dimension("Bures distance operands disagree in size".into()));
    }
    check_psd(s1, "first covariance")?;
    check_psd(s2, "second covariance")?;
    let mean_part = (mu1 - mu2).norm_squared();
    let cov_part = bures_cov(s1, s2);
    Ok(BuresDistance { w2: mean_part + cov_part, mean_part, cov_part })
}

/// Sensitivity of the outputs to one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OtIndices {
    /// `sum_b p_b W_B^2`, squared output units.
    pub xi_b: f64,
    /// `xi_b / (2 tr Sigma_y)`.
    pub iota_b: f64,
    /// `sum_b p_b |mu_b - mu|^2 / tr Sigma_y`.
    pub iota_s: f64,
    /// Unnormalized first-order measure per output, `sqrt(sum_b p_b (mu_b,i - mu_i)^2)`.
    pub s: Vec<f64>,
    /// False when the total variance is below [`TRACE_EPS`]; the normalized
    /// indices are then reported as zero.
    pub defined: bool,
}

/// Indices from outputs `y` (rows = samples) and a partition of one parameter.
/// Sums run in the partition's sorted order, so permuting the samples does not
/// change the result.
pub fn indices_from_partition(y: &DMatrix<f64>, part: &BinPartition) -> Result<OtIndices> {
    if y.nrows() != part.assignment.len() {
        return Err(Error::Dimension(format!(
            "{} output samples, partition of {}",
            y.nrows(),
            part.assignment.len()
        )));
    }
    let m = y.ncols();
    let (mu, cov) = moments_of(y, &part.order);
    let tr = cov.trace();
    let mut xi = 0.0;
    let mut adv = 0.0;
    let mut s_sq = vec![0.0; m];
    for (b, p) in part.weights.iter().enumerate() {
        let (mu_b, cov_b) = moments_of(y, part.bin(b));
        let diff = &mu_b - &mu;
        let mean_part = diff.norm_squared();
        xi += p * (mean_part + bures_cov(&cov, &cov_b));
        adv += p * mean_part;
        for (s, d) in s_sq.iter_mut().zip(diff.iter()) {
            *s += p * d * d;
        }
    }
    let defined = tr > TRACE_EPS;
    let (iota_b, iota_s) = if defined { (xi / (2.0 * tr), adv / tr) } else { (0.0, 0.0) };
    Ok(OtIndices { xi_b: xi, iota_b, iota_s, s: s_sq.into_iter().map(f64::sqrt).collect(), defined })
}

/// Indices of parameter `j` from a sample set; fails on zero output variance.
pub fn ot_sensitivity(
    theta: &DMatrix<f64>,
    y: &DMatrix<f64>,
    j: usize,
    m_bins: usize,
    strategy: BinStrategy,
) -> Result<OtIndices> {
    if theta.nrows() != y.nrows() {
        return Err(Error::Dimension(format!("{} parameter rows, {} output rows", theta.nrows(), y.nrows())));
    }
    if j >= theta.ncols() {
        return Err(Error::Dimension(format!("parameter {j} of {}", theta.ncols())));
    }
    let col: Vec<f64> = theta.column(j).iter().copied().collect();
    let part = partition_bins(&col, m_bins, strategy)?;
    let idx = indices_from_partition(y, &part)?;
    if !idx.defined {
        return Err(Error::ZeroVariance);
    }
    Ok(idx)
}

/// Settings of the non-intrusive engine.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportConfig {
    pub n_samples: usize,
    /// Bin count; `None` selects [`default_bins`].
    pub bins: Option<usize>,
    pub strategy: BinStrategy,
    pub seed: u64,
    /// Indices are evaluated at every `stride`-th grid point (and the last).
    pub stride: usize,
}

impl TransportConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self { n_samples, bins: None, strategy: BinStrategy::Equiprobable, seed, stride: 1 }
    }

    pub fn n_bins(&self) -> usize {
        self.bins.unwrap_or_else(|| default_bins(self.n_samples))
    }
}

/// Grid indices visited with a given stride, always including the last point.
pub fn strided_indices(len: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

/// Per-time transport indices along a simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportTrajectory {
    pub times: Vec<f64>,
    /// `indices[k][j]` for time `times[k]` and parameter `j`.
    pub indices: Vec<Vec<OtIndices>>,
    pub n_outputs: usize,
}

impl TransportTrajectory {
    /// Unnormalized first-order sensitivity `S` (`m x q`) at time index `k`.
    pub fn s_matrix(&self, k: usize) -> DMatrix<f64> {
        let q = self.indices[k].len();
        DMatrix::from_fn(self.n_outputs, q, |i, j| self.indices[k][j].s[i])
    }

    /// `iota_S` of parameter `j` over time.
    pub fn iota_s(&self, j: usize) -> Vec<f64> {
        self.indices.iter().map(|row| row[j].iota_s).collect()
    }

    /// Writes `t, parameter, xi_B, iota_B, iota_S, S_unnormalized`. For several
    /// outputs the last column is the Euclidean norm across outputs.
    pub fn write_csv(&self, w: impl Write, params: &[String]) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "parameter", "xi_B", "iota_B", "iota_S", "S_unnormalized"])?;
        for (t, row) in self.times.iter().zip(&self.indices) {
            if row.len() != params.len() {
                return Err(Error::Dimension(format!("{} parameter names for {} parameters", params.len(), row.len())));
            }
            for (name, idx) in params.iter().zip(row) {
                let s = idx.s.iter().map(|v| v * v).sum::<f64>().sqrt();
                wr.write_record([
                    format!("{t}"),
                    name.clone(),
                    format!("{:e}", idx.xi_b),
                    format!("{:e}", idx.iota_b),
                    format!("{:e}", idx.iota_s),
                    format!("{s:e}"),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Simulated outputs for a fixed parameter sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub seed: u64,
    pub theta: DMatrix<f64>,
    /// `outputs[s]` is the `m x len` output of sample `s`.
    pub outputs: Vec<DMatrix<f64>>,
}

impl SampleSet {
    /// Runs `model` once per parameter row (in parallel when enabled).
    pub fn simulate(
        model: &dyn BlackBoxModel,
        theta: DMatrix<f64>,
        seed: u64,
        u: &dyn Input,
        grid: &TimeGrid,
    ) -> Result<Self> {
        let n = theta.nrows();
        let runs = map_indexed(n, |s| {
            let row: Vec<f64> = theta.row(s).iter().copied().collect();
            model.simulate(&row, u, grid)
        });
        let outputs = runs
            .into_iter()
            .enumerate()
            .map(|(sample, r)| r.map_err(|e| Error::Simulation { sample, source: Box::new(e) }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { seed, theta, outputs })
    }

    pub fn n_samples(&self) -> usize {
        self.theta.nrows()
    }

    /// Output samples at grid index `k` (rows = samples).
    pub fn outputs_at(&self, k: usize) -> DMatrix<f64> {
        let m = self.outputs[0].nrows();
        DMatrix::from_fn(self.n_samples(), m, |s, i| self.outputs[s][(i, k)])
    }

    /// Transport indices at the grid indices `at`, with one partition per
    /// parameter shared by all time points. Times with zero output variance
    /// are reported with `defined == false`.
    pub fn indices(&self, times: &[f64], at: &[usize], m_bins: usize, strategy: BinStrategy) -> Result<TransportTrajectory> {
        let q = self.theta.ncols();
        let parts = (0..q)
            .map(|j| {
                let col: Vec<f64> = self.theta.column(j).iter().copied().collect();
                partition_bins(&col, m_bins, strategy)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut indices = Vec::with_capacity(at.len());
        for &k in at {
            let y = self.outputs_at(k);
            let row = parts.iter().map(|p| indices_from_partition(&y, p)).collect::<Result<Vec<_>>>()?;
            indices.push(row);
        }
        Ok(TransportTrajectory {
            times: at.iter().map(|&k| times[k]).collect(),
            indices,
            n_outputs: self.outputs[0].nrows(),
        })
    }

    /// Writes one row per sample: `seed, sample, theta..., y...` with outputs
    /// at the grid indices `at`.
    pub fn write_csv(&self, w: impl Write, params: &[String], times: &[f64], at: &[usize]) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let m = self.outputs[0].nrows();
        let mut header = vec!["seed".to_string(), "sample".to_string()];
        header.extend(params.iter().cloned());
        for &k in at {
            for i in 0..m {
                header.push(format!("y{i}@{}", times[k]));
            }
        }
        wr.write_record(&header)?;
        for s in 0..self.n_samples() {
            let mut rec = vec![self.seed.to_string(), s.to_string()];
            rec.extend(self.theta.row(s).iter().map(|v| format!("{v:e}")));
            for &k in at {
                for i in 0..m {
                    rec.push(format!("{:e}", self.outputs[s][(i, k)]));
                }
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Samples `ensemble`, simulates `model` once per sample and evaluates the
/// transport indices along the trajectory.
pub fn nonintrusive_sensitivity_trajectory(
    model: &dyn BlackBoxModel,
    u: &dyn Input,
    ensemble: &ParameterEnsemble,
    grid: &TimeGrid,
    cfg: &TransportConfig,
) -> Result<(SampleSet, TransportTrajectory)> {
    if ensemble.q() != model.q() {
        return Err(Error::Dimension(format!("model has {} parameters, ensemble {}", model.q(), ensemble.q())));
    }
    let theta = sample_parameters(ensemble, cfg.n_samples, cfg.seed)?;
    let set = SampleSet::simulate(model, theta, cfg.seed, u, grid)?;
    let times = grid.times();
    let at = strided_indices(times.len(), cfg.stride);
    let traj = set.indices(&times, &at, cfg.n_bins(), cfg.strategy)?;
    if !traj.indices.iter().flatten().any(|idx| idx.defined) {
        return Err(Error::ZeroVariance);
    }
    Ok((set, traj))
}
