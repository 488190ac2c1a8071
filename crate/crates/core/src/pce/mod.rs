//! Multivariate orthogonal polynomial machinery.
//!
//! Parameters are described by independent marginals ([`Marginal`]). Uniform
//! marginals pair with Legendre polynomials, Gaussian marginals with
//! probabilists' Hermite polynomials. The basis is truncated at a total degree
//! and ordered graded-lexicographically with the constant term first, so
//! `phi[0] == 1` always holds.
//!
//! Polynomials are orthogonal but not normalized; [`ChaosBasis::norms`]
//! carries `E[phi_i^2]`.

mod basis;
mod ensemble;
mod multi_index;
mod poly;
mod quadrature;

pub use basis::{pce_moments, project, ChaosBasis};
pub use ensemble::{Marginal, ParameterEnsemble};
pub use multi_index::{basis_size, build_multi_index_set, MultiIndex};
pub use poly::PolyFamily;
pub use quadrature::{gauss_hermite, gauss_legendre, gauss_quadrature, QuadratureGrid};
