use std::collections::HashSet;

use rand::Rng;
use rand_distr::StandardNormal;

use super::poly::PolyFamily;
use crate::{Error, Result};

/// Marginal distribution of a single uncertain parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    Uniform { lower: f64, upper: f64 },
    /// `std` is a standard deviation, not a variance.
    Gaussian { mean: f64, std: f64 },
}

impl Marginal {
    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::Domain(format!(
                "uniform marginal requires finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self::Uniform { lower, upper })
    }

    pub fn gaussian(mean: f64, std: f64) -> Result<Self> {
        if !(mean.is_finite() && std.is_finite() && std > 0.0) {
            return Err(Error::Domain(format!(
                "gaussian marginal requires std > 0, got N({mean}, {std})"
            )));
        }
        Ok(Self::Gaussian { mean, std })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Uniform { lower, upper } => 0.5 * (lower + upper),
            Self::Gaussian { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Uniform { lower, upper } => (upper - lower).powi(2) / 12.0,
            Self::Gaussian { std, .. } => std * std,
        }
    }

    pub fn family(&self) -> PolyFamily {
        match self {
            Self::Uniform { .. } => PolyFamily::Legendre,
            Self::Gaussian { .. } => PolyFamily::Hermite,
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        match *self {
            // a few ulps of slack so quadrature nodes mapped back and forth stay inside
            Self::Uniform { lower, upper } => {
                let tol = 1e-12 * (upper - lower).max(lower.abs().max(upper.abs()));
                x >= lower - tol && x <= upper + tol
            }
            Self::Gaussian { .. } => x.is_finite(),
        }
    }

    /// Maps a physical value to the standard variable of the polynomial family:
    /// `[-1, 1]` for uniform marginals, zero mean / unit std for Gaussian ones.
    pub fn to_standard(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform { lower, upper } => (2.0 * x - lower - upper) / (upper - lower),
            Self::Gaussian { mean, std } => (x - mean) / std,
        }
    }

    pub fn from_standard(&self, z: f64) -> f64 {
        match *self {
            Self::Uniform { lower, upper } => 0.5 * (lower + upper) + 0.5 * (upper - lower) * z,
            Self::Gaussian { mean, std } => mean + std * z,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
            Self::Gaussian { mean, std } => mean + std * rng.sample::<f64, _>(StandardNormal),
        }
    }
}

/// The `q` uncertain parameters with their (mutually independent) marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterEnsemble {
    marginals: Vec<Marginal>,
    names: Vec<String>,
}

impl ParameterEnsemble {
    pub fn new<S: Into<String>>(params: impl IntoIterator<Item = (S, Marginal)>) -> Result<Self> {
        let (names, marginals): (Vec<String>, Vec<Marginal>) =
            params.into_iter().map(|(n, m)| (n.into(), m)).unzip();
        if marginals.is_empty() {
            return Err(Error::Dimension("ensemble needs at least one parameter".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Config(format!("duplicate parameter name `{n}`")));
            }
        }
        Ok(Self { marginals, names })
    }

    pub fn q(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn means(&self) -> Vec<f64> {
        self.marginals.iter().map(Marginal::mean).collect()
    }

    pub fn check_support(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.q() {
            return Err(Error::Dimension(format!(
                "parameter vector has length {}, ensemble has {}",
                theta.len(),
                self.q()
            )));
        }
        for ((x, m), name) in theta.iter().zip(&self.marginals).zip(&self.names) {
            if !m.in_support(*x) {
                return Err(Error::Domain(format!("{name} = {x} outside support of {m:?}")));
            }
        }
        Ok(())
    }
}
