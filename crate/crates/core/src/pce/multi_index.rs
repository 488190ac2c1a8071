use crate::{Error, Result};

/// Upper bound on basis sizes accepted by [`build_multi_index_set`].
const MAX_BASIS_SIZE: u64 = 5_000_000;

/// Per-parameter polynomial degrees of one multivariate basis function.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(degrees: Vec<u32>) -> Self {
        Self(degrees)
    }

    pub fn degrees(&self) -> &[u32] {
        &self.0
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// True when the basis function depends on parameter `j`.
    pub fn depends_on(&self, j: usize) -> bool {
        self.0[j] > 0
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }
}

/// Number of multi-indices of total degree `<= d` in `q` variables, `(q+d)! / (q! d!)`.
pub fn basis_size(q: usize, d: usize) -> Result<usize> {
    let overflow = || Error::Size(format!("basis size for q = {q}, d = {d} overflows"));
    // C(q+d, d) computed incrementally; every partial product is itself a binomial.
    let mut c: u64 = 1;
    for i in 1..=d as u64 {
        c = c
            .checked_mul(q as u64 + i)
            .ok_or_else(overflow)?
            / i;
    }
    if c > MAX_BASIS_SIZE {
        return Err(Error::Size(format!(
            "basis for q = {q}, d = {d} has {c} terms (limit {MAX_BASIS_SIZE})"
        )));
    }
    usize::try_from(c).map_err(|_| overflow())
}

/// All multi-indices of total degree `<= d`, graded by total degree and in
/// descending lexicographic order within a grade. The zero index comes first.
pub fn build_multi_index_set(q: usize, d: usize) -> Result<Vec<MultiIndex>> {
    if q == 0 {
        return Err(Error::Dimension("multi-index set needs q >= 1".into()));
    }
    let size = basis_size(q, d)?;
    let mut out = Vec::with_capacity(size);
    let mut current = vec![0u32; q];
    for total in 0..=d as u32 {
        compositions(total, 0, &mut current, &mut out);
    }
    debug_assert_eq!(out.len(), size);
    Ok(out)
}

fn compositions(remaining: u32, pos: usize, current: &mut [u32], out: &mut Vec<MultiIndex>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex(current.to_vec()));
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        compositions(remaining - k, pos + 1, current, out);
    }
    current[pos] = 0;
}
