/// Univariate orthogonal polynomial family matched to a marginal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyFamily {
    /// Legendre polynomials, orthogonal under the uniform measure on `[-1, 1]`.
    Legendre,
    /// Probabilists' Hermite polynomials, orthogonal under the standard normal.
    Hermite,
}

impl PolyFamily {
    /// Writes `p_0(z) ..= p_n(z)` into `out[..=n]` by the three-term recurrence.
    pub fn eval_all(self, z: f64, out: &mut [f64]) {
        let n = out.len();
        if n == 0 {
            return;
        }
        out[0] = 1.0;
        if n == 1 {
            return;
        }
        out[1] = z;
        for k in 1..n - 1 {
            let kf = k as f64;
            out[k + 1] = match self {
                Self::Legendre => ((2.0 * kf + 1.0) * z * out[k] - kf * out[k - 1]) / (kf + 1.0),
                Self::Hermite => z * out[k] - kf * out[k - 1],
            };
        }
    }

    pub fn eval(self, n: usize, z: f64) -> f64 {
        let mut buf = vec![0.0; n + 1];
        self.eval_all(z, &mut buf);
        buf[n]
    }

    /// `E[p_n^2]` under the family's probability measure.
    pub fn norm(self, n: usize) -> f64 {
        match self {
            Self::Legendre => 1.0 / (2.0 * n as f64 + 1.0),
            Self::Hermite => (1..=n).map(|k| k as f64).product(),
        }
    }
}
