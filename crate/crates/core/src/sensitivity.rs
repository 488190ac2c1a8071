//! Sensitivity trajectories from chaos coefficients.
//!
//! For output `i` and parameter `j`, `S_ij(t) = sqrt(sum_k v_j[k] Y_ik(t)^2)`
//! where `v_j` carries the basis norms of the terms selected for `j`: those
//! depending on `theta_j` only (first order) or at all (total order).

use std::io::Write;

use nalgebra::DMatrix;

use crate::ode::trapezoid;
use crate::pce::ChaosBasis;
use crate::{Error, Result};

/// Variances at or below this value (squared output units) leave normalized
/// indices undefined.
pub const VARIANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SensitivityKind {
    FirstOrder,
    TotalOrder,
}

/// Per-parameter basis-term selections.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSets {
    pub first_order: Vec<Vec<usize>>,
    pub total_order: Vec<Vec<usize>>,
    /// `v_j`: basis norm on members of the first-order set, zero elsewhere.
    pub first_selection: Vec<Vec<f64>>,
    pub total_selection: Vec<Vec<f64>>,
    ell: usize,
}

impl IndexSets {
    pub fn q(&self) -> usize {
        self.first_order.len()
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn selection(&self, kind: SensitivityKind) -> &[Vec<f64>] {
        match kind {
            SensitivityKind::FirstOrder => &self.first_selection,
            SensitivityKind::TotalOrder => &self.total_selection,
        }
    }
}

pub fn build_index_sets(basis: &ChaosBasis) -> IndexSets {
    let q = basis.q();
    let ell = basis.len();
    let mut first_order = vec![Vec::new(); q];
    let mut total_order = vec![Vec::new(); q];
    for (k, mi) in basis.indices().iter().enumerate() {
        let active: Vec<usize> = (0..q).filter(|&j| mi.depends_on(j)).collect();
        for &j in &active {
            total_order[j].push(k);
        }
        if let [j] = active[..] {
            first_order[j].push(k);
        }
    }
    let select = |sets: &[Vec<usize>]| -> Vec<Vec<f64>> {
        sets.iter()
            .map(|set| {
                let mut v = vec![0.0; ell];
                for &k in set {
                    v[k] = basis.norms()[k];
                }
                v
            })
            .collect()
    };
    IndexSets {
        first_selection: select(&first_order),
        total_selection: select(&total_order),
        first_order,
        total_order,
        ell,
    }
}

/// `S` (`m x q`) from one column of output coefficients (`m * ell` entries).
pub fn sensitivity_at(y: &[f64], sets: &IndexSets, kind: SensitivityKind) -> Result<DMatrix<f64>> {
    let ell = sets.ell();
    if y.len() % ell != 0 {
        return Err(Error::Dimension(format!(
            "{} output coefficients is not a multiple of the basis length {ell}",
            y.len()
        )));
    }
    let m = y.len() / ell;
    let sel = sets.selection(kind);
    Ok(DMatrix::from_fn(m, sets.q(), |i, j| {
        let block = &y[i * ell..(i + 1) * ell];
        block.iter().zip(&sel[j]).map(|(c, v)| v * c * c).sum::<f64>().sqrt()
    }))
}

/// Sensitivity matrices for every column of `y` (`m * ell` rows, one column
/// per time step).
pub fn sensitivity_trajectory(y: &DMatrix<f64>, sets: &IndexSets, kind: SensitivityKind) -> Result<Vec<DMatrix<f64>>> {
    y.column_iter()
        .map(|col| sensitivity_at(col.as_slice(), sets, kind))
        .collect()
}

/// Variance of every output from one column of coefficients.
pub fn output_variance(y: &[f64], basis: &ChaosBasis) -> Result<Vec<f64>> {
    let ell = basis.len();
    if y.len() % ell != 0 {
        return Err(Error::Dimension(format!(
            "{} output coefficients is not a multiple of the basis length {ell}",
            y.len()
        )));
    }
    Ok(y.chunks_exact(ell)
        .map(|c| c[1..].iter().zip(&basis.norms()[1..]).map(|(v, n)| n * v * v).sum())
        .collect())
}

/// Normalized indices `SU_ij = S_ij^2 / V(y_i)`, with a per-output flag telling
/// whether the variance exceeded [`VARIANCE_EPS`]. Undefined rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolIndices {
    pub values: DMatrix<f64>,
    pub defined: Vec<bool>,
}

pub fn normalized_sobol(s: &DMatrix<f64>, total_variance: &[f64]) -> Result<SobolIndices> {
    if total_variance.len() != s.nrows() {
        return Err(Error::Dimension(format!(
            "{} variances for {} outputs",
            total_variance.len(),
            s.nrows()
        )));
    }
    let defined: Vec<bool> = total_variance.iter().map(|v| *v > VARIANCE_EPS).collect();
    let values = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| {
        if defined[i] {
            s[(i, j)] * s[(i, j)] / total_variance[i]
        } else {
            0.0
        }
    });
    Ok(SobolIndices { values, defined })
}

/// `max(0, S - S_min)` elementwise.
pub fn effective_sensitivity(s: &DMatrix<f64>, s_min: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.shape() != s_min.shape() {
        return Err(Error::Dimension(format!("S is {:?}, S_min is {:?}", s.shape(), s_min.shape())));
    }
    Ok(s.zip_map(s_min, |a, b| (a - b).max(0.0)))
}

/// Trapezoid time integral of `|dS_ij|`.
pub fn impact_score(times: &[f64], ds: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = ds.first().ok_or_else(|| Error::Dimension("empty sensitivity series".into()))?;
    if ds.len() != times.len() {
        return Err(Error::Dimension(format!("{} times for {} samples", times.len(), ds.len())));
    }
    let (m, q) = first.shape();
    let mut out = DMatrix::zeros(m, q);
    let mut series = vec![0.0; times.len()];
    for i in 0..m {
        for j in 0..q {
            for (k, d) in ds.iter().enumerate() {
                series[k] = d[(i, j)].abs();
            }
            out[(i, j)] = trapezoid(times, &series);
        }
    }
    Ok(out)
}

/// Time-indexed sensitivity, threshold, effective sensitivity and normalized
/// index of every (output, parameter) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTrajectory {
    pub kind: SensitivityKind,
    pub times: Vec<f64>,
    pub s: Vec<DMatrix<f64>>,
    pub s_min: Vec<DMatrix<f64>>,
    pub ds: Vec<DMatrix<f64>>,
    pub su: Vec<SobolIndices>,
}

impl SensitivityTrajectory {
    /// Assembles the trajectory from surrogate output coefficients `y`
    /// (`m * ell` rows, one column per entry of `times`).
    pub fn from_coefficients(
        basis: &ChaosBasis,
        times: &[f64],
        y: &DMatrix<f64>,
        s_min: Vec<DMatrix<f64>>,
        kind: SensitivityKind,
    ) -> Result<Self> {
        if y.ncols() != times.len() || s_min.len() != times.len() {
            return Err(Error::Dimension(format!(
                "{} times, {} coefficient columns, {} thresholds",
                times.len(),
                y.ncols(),
                s_min.len()
            )));
        }
        let sets = build_index_sets(basis);
        let s = sensitivity_trajectory(y, &sets, kind)?;
        let ds = s.iter().zip(&s_min).map(|(a, b)| effective_sensitivity(a, b)).collect::<Result<_>>()?;
        let su = s
            .iter()
            .zip(y.column_iter())
            .map(|(sk, col)| normalized_sobol(sk, &output_variance(col.as_slice(), basis)?))
            .collect::<Result<_>>()?;
        Ok(Self { kind, times: times.to_vec(), s, s_min, ds, su })
    }

    pub fn impact(&self) -> Result<DMatrix<f64>> {
        impact_score(&self.times, &self.ds)
    }

    /// Writes `t, output, parameter, S, S_min, dS, SU` rows. `SU` is empty where
    /// the output variance is below [`VARIANCE_EPS`].
    pub fn write_csv(&self, w: impl Write, outputs: &[String], params: &[String]) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "output", "parameter", "S", "S_min", "dS", "SU"])?;
        for k in 0..self.times.len() {
            let (m, q) = self.s[k].shape();
            if outputs.len() != m || params.len() != q {
                return Err(Error::Dimension(format!(
                    "{} output names and {} parameter names for a {m}x{q} sensitivity",
                    outputs.len(),
                    params.len()
                )));
            }
            for i in 0..m {
                for j in 0..q {
                    let su = if self.su[k].defined[i] { format!("{:e}", self.su[k].values[(i, j)]) } else { String::new() };
                    wr.write_record([
                        format!("{}", self.times[k]),
                        outputs[i].clone(),
                        params[j].clone(),
                        format!("{:e}", self.s[k][(i, j)]),
                        format!("{:e}", self.s_min[k][(i, j)]),
                        format!("{:e}", self.ds[k][(i, j)]),
                        su,
                    ])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}
