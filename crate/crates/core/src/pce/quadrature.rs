use nalgebra::{DMatrix, SymmetricEigen};

use super::ensemble::{Marginal, ParameterEnsemble};
use super::poly::PolyFamily;
use crate::{Error, Result};

const MAX_NODES: usize = 50_000_000;

/// Tensor-product quadrature rule on the physical parameter scale.
///
/// Nodes are stored row-major (`n_nodes x q`); weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    q: usize,
    order_per_dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn order_per_dim(&self) -> usize {
        self.order_per_dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.q..(i + 1) * self.q]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.nodes.chunks_exact(self.q).zip(self.weights.iter().copied())
    }

    /// Ordered (deterministic) quadrature of a scalar integrand.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// Gauss-Legendre rule for the uniform probability measure on `[-1, 1]`:
/// `(nodes, weights)` with weights summing to one.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut x, _) = golub_welsch(n, |k| {
        let k = k as f64;
        k * k / (4.0 * k * k - 1.0)
    });
    // Newton polish on P_n, then closed-form weights.
    let mut w = vec![0.0; n];
    let mut buf = vec![0.0; n + 1];
    for (xi, wi) in x.iter_mut().zip(w.iter_mut()) {
        for _ in 0..3 {
            PolyFamily::Legendre.eval_all(*xi, &mut buf);
            let dp = n as f64 * (*xi * buf[n] - buf[n - 1]) / (*xi * *xi - 1.0);
            *xi -= buf[n] / dp;
        }
        PolyFamily::Legendre.eval_all(*xi, &mut buf);
        let dp = n as f64 * (*xi * buf[n] - buf[n - 1]) / (*xi * *xi - 1.0);
        *wi = 1.0 / ((1.0 - *xi * *xi) * dp * dp);
    }
    symmetrize(&mut x, &mut w);
    (x, w)
}

/// Gauss-Hermite rule for the standard normal measure (probabilists' convention).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut x, _) = golub_welsch(n, |k| k as f64);
    let mut w = vec![0.0; n];
    let mut buf = vec![0.0; n + 1];
    let n_fact: f64 = (1..=n).map(|k| k as f64).product();
    for (xi, wi) in x.iter_mut().zip(w.iter_mut()) {
        for _ in 0..3 {
            PolyFamily::Hermite.eval_all(*xi, &mut buf);
            // He_n' = n He_{n-1}
            *xi -= buf[n] / (n as f64 * buf[n - 1]);
        }
        PolyFamily::Hermite.eval_all(*xi, &mut buf);
        *wi = n_fact / ((n * n) as f64 * buf[n - 1] * buf[n - 1]);
    }
    symmetrize(&mut x, &mut w);
    (x, w)
}

/// Eigen-decomposition of the Jacobi matrix of a symmetric monic recurrence
/// with `alpha_k = 0` and `beta_k` given. Returns sorted nodes and weights.
fn golub_welsch(n: usize, beta: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be >= 1");
    if n == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = beta(k).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Enforces exact mirror symmetry of a symmetric rule and normalizes weights.
fn symmetrize(x: &mut [f64], w: &mut [f64]) {
    let n = x.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let xm = 0.5 * (x[j] - x[i]);
        let wm = 0.5 * (w[i] + w[j]);
        x[i] = -xm;
        x[j] = xm;
        w[i] = wm;
        w[j] = wm;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|wi| *wi /= s);
}

fn univariate(m: &Marginal, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (z, w) = match m.family() {
        PolyFamily::Legendre => gauss_legendre(order),
        PolyFamily::Hermite => gauss_hermite(order),
    };
    (z.into_iter().map(|zi| m.from_standard(zi)).collect(), w)
}

/// Tensor product of univariate Gauss rules matched to each marginal.
///
/// The first parameter varies slowest in the node ordering.
pub fn gauss_quadrature(ensemble: &ParameterEnsemble, order_per_dim: usize) -> Result<QuadratureGrid> {
    if order_per_dim == 0 {
        return Err(Error::Domain("quadrature order must be >= 1".into()));
    }
    let q = ensemble.q();
    let total = (0..q).try_fold(1usize, |acc, _| acc.checked_mul(order_per_dim));
    let total = match total {
        Some(t) if t <= MAX_NODES => t,
        _ => {
            return Err(Error::Size(format!(
                "tensor grid of order {order_per_dim} in {q} dimensions exceeds {MAX_NODES} nodes"
            )))
        }
    };
    let rules: Vec<_> = ensemble.marginals().iter().map(|m| univariate(m, order_per_dim)).collect();
    let mut nodes = Vec::with_capacity(total * q);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; q];
    for _ in 0..total {
        let mut w = 1.0;
        for (j, &k) in idx.iter().enumerate() {
            nodes.push(rules[j].0[k]);
            w *= rules[j].1[k];
        }
        weights.push(w);
        for j in (0..q).rev() {
            idx[j] += 1;
            if idx[j] < order_per_dim {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(QuadratureGrid { q, order_per_dim, nodes, weights })
}
