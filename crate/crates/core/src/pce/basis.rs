use nalgebra::DMatrix;

use super::ensemble::ParameterEnsemble;
use super::multi_index::{build_multi_index_set, MultiIndex};
use super::quadrature::QuadratureGrid;
use crate::{Error, Result};

/// Truncated multivariate orthogonal basis `phi(theta)` of length `ell`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosBasis {
    ensemble: ParameterEnsemble,
    degree: usize,
    indices: Vec<MultiIndex>,
    norms: Vec<f64>,
}

impl ChaosBasis {
    pub fn new(ensemble: ParameterEnsemble, degree: usize) -> Result<Self> {
        let indices = build_multi_index_set(ensemble.q(), degree)?;
        let families: Vec<_> = ensemble.marginals().iter().map(|m| m.family()).collect();
        let norms = indices
            .iter()
            .map(|mi| {
                mi.degrees()
                    .iter()
                    .zip(&families)
                    .map(|(&a, fam)| fam.norm(a as usize))
                    .product()
            })
            .collect();
        Ok(Self { ensemble, degree, indices, norms })
    }

    pub fn ensemble(&self) -> &ParameterEnsemble {
        &self.ensemble
    }

    pub fn q(&self) -> usize {
        self.ensemble.q()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions `ell`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// `E[phi_i^2]` for every basis function; `norms()[0] == 1`.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Evaluates `phi(theta)`, rejecting values outside a uniform support.
    pub fn eval(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.ensemble.check_support(theta)?;
        let mut out = vec![0.0; self.len()];
        self.eval_into(theta, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation into `out` (length `ell`).
    pub fn eval_into(&self, theta: &[f64], out: &mut [f64]) {
        let q = self.q();
        let stride = self.degree + 1;
        let mut table = vec![0.0; q * stride];
        for (j, m) in self.ensemble.marginals().iter().enumerate() {
            m.family()
                .eval_all(m.to_standard(theta[j]), &mut table[j * stride..(j + 1) * stride]);
        }
        for (o, mi) in out.iter_mut().zip(&self.indices) {
            *o = mi
                .degrees()
                .iter()
                .enumerate()
                .map(|(j, &a)| table[j * stride + a as usize])
                .product();
        }
    }

    /// Reconstructs `phi(theta)^T coeffs`.
    pub fn reconstruct(&self, coeffs: &[f64], theta: &[f64]) -> Result<f64> {
        if coeffs.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} coefficients for a basis of length {}",
                coeffs.len(),
                self.len()
            )));
        }
        let phi = self.eval(theta)?;
        Ok(phi.iter().zip(coeffs).map(|(p, c)| p * c).sum())
    }

    /// Gram matrix `E[phi phi^T]` assembled by quadrature.
    pub fn gram(&self, grid: &QuadratureGrid) -> DMatrix<f64> {
        let l = self.len();
        let mut g = DMatrix::zeros(l, l);
        let mut phi = vec![0.0; l];
        for (x, w) in grid.iter() {
            self.eval_into(x, &mut phi);
            for a in 0..l {
                let wa = w * phi[a];
                for b in 0..l {
                    g[(a, b)] += wa * phi[b];
                }
            }
        }
        g
    }
}

/// Galerkin projection of `f: theta -> R^k` onto the basis.
///
/// Returns the `k x ell` coefficient matrix `(G^-1 sum_i w_i phi(theta_i) f(theta_i)^T)^T`.
pub fn project(
    basis: &ChaosBasis,
    grid: &QuadratureGrid,
    k: usize,
    f: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<DMatrix<f64>> {
    if grid.q() != basis.q() {
        return Err(Error::Dimension(format!(
            "grid has {} dimensions, basis has {}",
            grid.q(),
            basis.q()
        )));
    }
    if grid.order_per_dim() < basis.degree() + 1 {
        log::warn!(
            "quadrature order {} < degree + 1 = {}: projection exactness is not guaranteed",
            grid.order_per_dim(),
            basis.degree() + 1
        );
    }
    let l = basis.len();
    let mut acc = DMatrix::zeros(k, l);
    let mut phi = vec![0.0; l];
    for (i, (x, w)) in grid.iter().enumerate() {
        let fx = f(x);
        if fx.len() != k {
            return Err(Error::Dimension(format!("integrand returned {} values, expected {k}", fx.len())));
        }
        if fx.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("integrand at quadrature node {i}")));
        }
        basis.eval_into(x, &mut phi);
        for (r, fr) in fx.iter().enumerate() {
            for a in 0..l {
                acc[(r, a)] += w * fr * phi[a];
            }
        }
    }
    for (a, n) in basis.norms().iter().enumerate() {
        acc.column_mut(a).unscale_mut(*n);
    }
    Ok(acc)
}

/// Mean and variance of a scalar PCE with coefficients `coeffs`.
pub fn pce_moments(basis: &ChaosBasis, coeffs: &[f64]) -> Result<(f64, f64)> {
    if coeffs.len() != basis.len() {
        return Err(Error::Dimension(format!(
            "{} coefficients for a basis of length {}",
            coeffs.len(),
            basis.len()
        )));
    }
    let var = coeffs[1..]
        .iter()
        .zip(&basis.norms()[1..])
        .map(|(c, n)| n * c * c)
        .sum();
    Ok((coeffs[0], var))
}
