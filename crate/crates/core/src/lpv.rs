//! Intrusive Galerkin surrogates of stochastic linear parameter-varying systems.
//!
//! For `x' = A(θ)x + B(θ)u + E(θ) + ω`, `y = C(θ)x + D(θ)u + F(θ) + ν` the
//! conditional means are expanded as `Φ_n(θ)^T X(t)` with `Φ_n = I_n ⊗ φ`, so
//! coefficients are grouped per physical state (state-major). Projection gives
//! a deterministic LTI system in the coefficients
//!
//! ```text
//! X' = A'X + B'u + E',   Y = C'X + D'u + F',   X(0) = X0
//! A' = G_n^-1 E[Φ_n A Φ_n^T]   E' = G_n^-1 E[Φ_n (E + ω̄)]   ...
//! ```
//!
//! The effect of process and measurement noise is propagated separately at the
//! parameter means and enters the design as the minimal sensitivity threshold.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::ode::{rk4, TimeGrid};
use crate::pce::{ChaosBasis, Marginal, ParameterEnsemble, QuadratureGrid};
use crate::signal::Input;
use crate::{Error, Result};

/// System matrices of an LPV model evaluated at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct LpvMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DVector<f64>,
    pub f: DVector<f64>,
    pub x0: DVector<f64>,
    pub process_mean: DVector<f64>,
    pub process_cov: DMatrix<f64>,
    pub meas_mean: DVector<f64>,
    pub meas_cov: DMatrix<f64>,
}

impl LpvMatrices {
    /// Noise-free system with zero offsets and zero initial state.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Self {
        let (n, l, m) = (a.nrows(), b.ncols(), c.nrows());
        Self {
            a,
            b,
            c,
            d: DMatrix::zeros(m, l),
            e: DVector::zeros(n),
            f: DVector::zeros(m),
            x0: DVector::zeros(n),
            process_mean: DVector::zeros(n),
            process_cov: DMatrix::zeros(n, n),
            meas_mean: DVector::zeros(m),
            meas_cov: DMatrix::zeros(m, m),
        }
    }

    fn check(&self, n: usize, m: usize, l: usize) -> Result<()> {
        let shapes = [
            ("A", self.a.shape(), (n, n)),
            ("B", self.b.shape(), (n, l)),
            ("C", self.c.shape(), (m, n)),
            ("D", self.d.shape(), (m, l)),
            ("E", self.e.shape(), (n, 1)),
            ("F", self.f.shape(), (m, 1)),
            ("x0", self.x0.shape(), (n, 1)),
            ("process mean", self.process_mean.shape(), (n, 1)),
            ("process covariance", self.process_cov.shape(), (n, n)),
            ("measurement mean", self.meas_mean.shape(), (m, 1)),
            ("measurement covariance", self.meas_cov.shape(), (m, m)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::Dimension(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        Ok(())
    }

    fn all_finite(&self) -> bool {
        [&self.a, &self.b, &self.c, &self.d, &self.process_cov, &self.meas_cov]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
            && [&self.e, &self.f, &self.x0, &self.process_mean, &self.meas_mean]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

type MatrixFn = dyn Fn(&[f64]) -> LpvMatrices + Send + Sync;

/// Parameter-dependent LPV system with `n` states, `m` outputs and `l` inputs.
pub struct LpvSystem {
    n: usize,
    m: usize,
    l: usize,
    q: usize,
    matrices: Box<MatrixFn>,
}

impl std::fmt::Debug for LpvSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LpvSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("l", &self.l)
            .field("q", &self.q)
            .finish_non_exhaustive()
    }
}

impl LpvSystem {
    pub fn new(
        n: usize,
        m: usize,
        l: usize,
        q: usize,
        matrices: impl Fn(&[f64]) -> LpvMatrices + Send + Sync + 'static,
    ) -> Self {
        Self { n, m, l, q, matrices: Box::new(matrices) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Evaluates and validates the matrices at `theta`.
    pub fn eval(&self, theta: &[f64]) -> Result<LpvMatrices> {
        if theta.len() != self.q {
            return Err(Error::Dimension(format!(
                "system takes {} parameters, got {}",
                self.q,
                theta.len()
            )));
        }
        let mats = (self.matrices)(theta);
        mats.check(self.n, self.m, self.l)?;
        if !mats.all_finite() {
            return Err(Error::NonFinite(format!("system matrices at theta = {theta:?}")));
        }
        Ok(mats)
    }

    /// Direct simulation of the noise-free conditional mean at fixed `theta`.
    pub fn simulate(&self, theta: &[f64], u: &dyn Input, grid: &TimeGrid) -> Result<DMatrix<f64>> {
        let mats = self.eval(theta)?;
        check_input(u, self.l)?;
        let mut y = DMatrix::zeros(self.m, grid.len());
        let mut ubuf = vec![0.0; self.l];
        let drift = &mats.e + &mats.process_mean;
        let offset = &mats.f + &mats.meas_mean;
        rk4(
            grid,
            mats.x0.as_slice(),
            |t, x, dx| {
                u.eval_into(t, &mut ubuf);
                for i in 0..self.n {
                    let mut acc = drift[i];
                    for k in 0..self.n {
                        acc += mats.a[(i, k)] * x[k];
                    }
                    for k in 0..self.l {
                        acc += mats.b[(i, k)] * ubuf[k];
                    }
                    dx[i] = acc;
                }
                Ok(())
            },
            |k, t, x| {
                let mut uk = vec![0.0; self.l];
                u.eval_into(t, &mut uk);
                for i in 0..self.m {
                    let mut acc = offset[i];
                    for j in 0..self.n {
                        acc += mats.c[(i, j)] * x[j];
                    }
                    for j in 0..self.l {
                        acc += mats.d[(i, j)] * uk[j];
                    }
                    y[(i, k)] = acc;
                }
            },
        )?;
        Ok(y)
    }
}

pub(crate) fn check_input(u: &dyn Input, l: usize) -> Result<()> {
    if u.dim() != l {
        return Err(Error::Dimension(format!("input has dimension {}, system expects {l}", u.dim())));
    }
    Ok(())
}

/// Deterministic Galerkin surrogate in the chaos coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSystem {
    n: usize,
    m: usize,
    l: usize,
    pub ap: DMatrix<f64>,
    pub bp: DMatrix<f64>,
    pub ep: DVector<f64>,
    pub cp: DMatrix<f64>,
    pub dp: DMatrix<f64>,
    pub fp: DVector<f64>,
    pub x0: DVector<f64>,
    basis: ChaosBasis,
}

/// Nodes processed per block matrix product during projection.
const CHUNK: usize = 2048;

/// Projects `sys` onto `basis` using the quadrature rule `grid`.
pub fn build_surrogate(sys: &LpvSystem, basis: &ChaosBasis, grid: &QuadratureGrid) -> Result<SurrogateSystem> {
    if basis.q() != sys.q() || grid.q() != sys.q() {
        return Err(Error::Dimension(format!(
            "system has {} parameters, basis {}, grid {}",
            sys.q(),
            basis.q(),
            grid.q()
        )));
    }
    if grid.order_per_dim() < basis.degree() + 1 {
        log::warn!(
            "quadrature order {} is below degree + 1 = {}; surrogate matrices may be inexact",
            grid.order_per_dim(),
            basis.degree() + 1
        );
    }
    let (n, m, l) = (sys.n(), sys.m(), sys.l());
    let ell = basis.len();

    // E[M_ik phi phi^T] blocks, allocated on first nonzero entry.
    let mut a_blocks: Vec<Option<DMatrix<f64>>> = vec![None; n * n];
    let mut c_blocks: Vec<Option<DMatrix<f64>>> = vec![None; m * n];
    let mut bp = DMatrix::zeros(n * ell, l);
    let mut dp = DMatrix::zeros(m * ell, l);
    let mut ep = DVector::zeros(n * ell);
    let mut fp = DVector::zeros(m * ell);
    let mut x0 = DVector::zeros(n * ell);

    let mut phi_row = vec![0.0; ell];
    let mut start = 0;
    while start < grid.len() {
        let end = (start + CHUNK).min(grid.len());
        let nc = end - start;
        let mut phi = DMatrix::zeros(nc, ell);
        let mut mats = Vec::with_capacity(nc);
        for r in 0..nc {
            let node = grid.node(start + r);
            basis.eval_into(node, &mut phi_row);
            for (a, v) in phi_row.iter().enumerate() {
                phi[(r, a)] = *v;
            }
            let mat = sys
                .eval(node)
                .map_err(|e| Error::NonFinite(format!("quadrature node {}: {e}", start + r)))?;
            mats.push(mat);
        }
        let w = &grid.weights()[start..end];

        let accumulate = |blocks: &mut Vec<Option<DMatrix<f64>>>, rows: usize, entry: &dyn Fn(&LpvMatrices, usize, usize) -> f64| {
            for i in 0..rows {
                for k in 0..n {
                    let vals: Vec<f64> = mats.iter().map(|mt| entry(mt, i, k)).collect();
                    if vals.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    let mut scaled = phi.clone();
                    for (r, mut row) in scaled.row_iter_mut().enumerate() {
                        row *= w[r] * vals[r];
                    }
                    let block = blocks[i * n + k].get_or_insert_with(|| DMatrix::zeros(ell, ell));
                    block.gemm_tr(1.0, &scaled, &phi, 1.0);
                }
            }
        };
        accumulate(&mut a_blocks, n, &|mt, i, k| mt.a[(i, k)]);
        accumulate(&mut c_blocks, m, &|mt, i, k| mt.c[(i, k)]);

        for (r, mt) in mats.iter().enumerate() {
            let phir = phi.row(r);
            let wr = w[r];
            for a in 0..ell {
                let wp = wr * phir[a];
                if wp == 0.0 {
                    continue;
                }
                for i in 0..n {
                    for col in 0..l {
                        bp[(i * ell + a, col)] += wp * mt.b[(i, col)];
                    }
                    ep[i * ell + a] += wp * (mt.e[i] + mt.process_mean[i]);
                    x0[i * ell + a] += wp * mt.x0[i];
                }
                for i in 0..m {
                    for col in 0..l {
                        dp[(i * ell + a, col)] += wp * mt.d[(i, col)];
                    }
                    fp[i * ell + a] += wp * (mt.f[i] + mt.meas_mean[i]);
                }
            }
        }
        start = end;
    }

    let assemble = |blocks: &[Option<DMatrix<f64>>], rows: usize| {
        let mut out = DMatrix::zeros(rows * ell, n * ell);
        for i in 0..rows {
            for k in 0..n {
                if let Some(b) = &blocks[i * n + k] {
                    out.view_mut((i * ell, k * ell), (ell, ell)).copy_from(b);
                }
            }
        }
        out
    };
    let mut ap = assemble(&a_blocks, n);
    let mut cp = assemble(&c_blocks, m);

    // left-multiply by G^-1 (diagonal, block-repeated)
    let norms = basis.norms();
    let unscale_rows = |mat: &mut DMatrix<f64>| {
        for (r, mut row) in mat.row_iter_mut().enumerate() {
            row /= norms[r % ell];
        }
    };
    unscale_rows(&mut ap);
    unscale_rows(&mut bp);
    unscale_rows(&mut cp);
    unscale_rows(&mut dp);
    for v in [&mut ep, &mut fp, &mut x0] {
        for (r, x) in v.iter_mut().enumerate() {
            *x /= norms[r % ell];
        }
    }
    let s = SurrogateSystem { n, m, l, ap, bp, ep, cp, dp, fp, x0, basis: basis.clone() };
    if !s.is_finite() {
        return Err(Error::NonFinite("surrogate matrices".into()));
    }
    Ok(s)
}

impl SurrogateSystem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Number of basis functions per state/output.
    pub fn ell(&self) -> usize {
        self.basis.len()
    }

    /// Surrogate state dimension `n * ell`.
    pub fn n_states(&self) -> usize {
        self.n * self.ell()
    }

    /// Surrogate output dimension `m * ell`.
    pub fn n_outputs(&self) -> usize {
        self.m * self.ell()
    }

    pub fn basis(&self) -> &ChaosBasis {
        &self.basis
    }

    fn is_finite(&self) -> bool {
        [&self.ap, &self.bp, &self.cp, &self.dp].iter().all(|m| m.iter().all(|v| v.is_finite()))
            && [&self.ep, &self.fp, &self.x0].iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Precomputes the one-step RK4 map for step `h`.
    pub fn propagator(&self, h: f64) -> Propagator {
        Propagator::new(&self.ap, &self.bp, &self.ep, h)
    }

    /// Output coefficients `Y(t)` only (rows: `m * ell`, columns: grid points).
    pub fn simulate_outputs(&self, prop: &Propagator, u: &dyn Input, grid: &TimeGrid) -> Result<DMatrix<f64>> {
        let mut y = DMatrix::zeros(self.n_outputs(), grid.len());
        self.run(prop, u, grid, |k, x, uk| {
            let mut col = y.column_mut(k);
            col.gemv(1.0, &self.cp, x, 0.0);
            col.gemv(1.0, &self.dp, uk, 1.0);
            col += &self.fp;
        })?;
        Ok(y)
    }

    fn run(
        &self,
        prop: &Propagator,
        u: &dyn Input,
        grid: &TimeGrid,
        mut record: impl FnMut(usize, &DVector<f64>, &DVector<f64>),
    ) -> Result<()> {
        check_input(u, self.l)?;
        if (prop.h - grid.step()).abs() > 1e-15 * grid.step() {
            return Err(Error::Dimension(format!(
                "propagator built for h = {}, grid step is {}",
                prop.h,
                grid.step()
            )));
        }
        let h = grid.step();
        let mut x = self.x0.clone();
        let mut next = DVector::zeros(x.len());
        let mut u0 = DVector::zeros(self.l);
        let mut um = DVector::zeros(self.l);
        let mut u1 = DVector::zeros(self.l);
        u.eval_into(grid.t0(), u0.as_mut_slice());
        record(0, &x, &u0);
        for k in 0..grid.n_steps() {
            let t = grid.time(k);
            u.eval_into(t + 0.5 * h, um.as_mut_slice());
            u.eval_into(grid.time(k + 1), u1.as_mut_slice());
            next.copy_from(&prop.offset);
            next.gemv(1.0, &prop.state, &x, 1.0);
            next.gemv(1.0, &prop.in_start, &u0, 1.0);
            next.gemv(1.0, &prop.in_mid, &um, 1.0);
            next.gemv(1.0, &prop.in_end, &u1, 1.0);
            std::mem::swap(&mut x, &mut next);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { time: grid.time(k + 1) });
            }
            std::mem::swap(&mut u0, &mut u1);
            record(k + 1, &x, &u0);
        }
        Ok(())
    }
}

/// Classical RK4 step of an LTI system written as an affine map:
/// `x+ = P x + G0 u(t) + Gm u(t + h/2) + G1 u(t + h) + e`.
#[derive(Debug, Clone)]
pub struct Propagator {
    h: f64,
    state: DMatrix<f64>,
    in_start: DMatrix<f64>,
    in_mid: DMatrix<f64>,
    in_end: DMatrix<f64>,
    offset: DVector<f64>,
}

impl Propagator {
    pub fn new(a: &DMatrix<f64>, b: &DMatrix<f64>, e: &DVector<f64>, h: f64) -> Self {
        let n = a.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let ha = a * h;
        let ha2 = &ha * &ha;
        let ha3 = &ha2 * &ha;
        let ha4 = &ha3 * &ha;
        let state = &id + &ha + &ha2 * 0.5 + &ha3 * (1.0 / 6.0) + &ha4 * (1.0 / 24.0);
        let g_start = (&id + &ha + &ha2 * 0.5 + &ha3 * 0.25) * (h / 6.0);
        let g_mid = (&id * 4.0 + &ha * 2.0 + &ha2 * 0.5) * (h / 6.0);
        let g_end = &id * (h / 6.0);
        let offset = (&g_start + &g_mid + &g_end) * e;
        Self {
            h,
            in_start: &g_start * b,
            in_mid: &g_mid * b,
            in_end: &g_end * b,
            state,
            offset,
        }
    }
}

/// Surrogate state and output coefficients on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateTrajectory {
    pub times: Vec<f64>,
    /// `n * ell` rows, one column per grid point.
    pub x: DMatrix<f64>,
    /// `m * ell` rows, one column per grid point.
    pub y: DMatrix<f64>,
}

pub fn simulate_surrogate(s: &SurrogateSystem, u: &dyn Input, grid: &TimeGrid) -> Result<SurrogateTrajectory> {
    let prop = s.propagator(grid.step());
    let mut xs = DMatrix::zeros(s.n_states(), grid.len());
    let mut ys = DMatrix::zeros(s.n_outputs(), grid.len());
    s.run(&prop, u, grid, |k, x, uk| {
        xs.set_column(k, x);
        let mut col = ys.column_mut(k);
        col.gemv(1.0, &s.cp, x, 0.0);
        col.gemv(1.0, &s.dp, uk, 1.0);
        col += &s.fp;
    })?;
    Ok(SurrogateTrajectory { times: grid.times(), x: xs, y: ys })
}

/// Output trajectory `y(t, θ) = Φ_m(θ)^T Y(t)`, one row per output.
pub fn reconstruct_output(s: &SurrogateSystem, traj: &SurrogateTrajectory, theta: &[f64]) -> Result<DMatrix<f64>> {
    let phi = s.basis.eval(theta)?;
    let ell = s.ell();
    if traj.y.nrows() != s.n_outputs() {
        return Err(Error::Dimension(format!(
            "trajectory has {} output coefficients, surrogate {}",
            traj.y.nrows(),
            s.n_outputs()
        )));
    }
    let mut out = DMatrix::zeros(s.m, traj.y.ncols());
    for i in 0..s.m {
        let block = traj.y.rows(i * ell, ell);
        for (k, col) in block.column_iter().enumerate() {
            out[(i, k)] = col.iter().zip(&phi).map(|(y, p)| y * p).sum();
        }
    }
    Ok(out)
}

/// Output standard deviation due to process and measurement noise, propagated at
/// `theta_bar`. Returns `sigma_y` with one row per output and one column per grid point.
///
/// Integrates `V' = AV + VA^T + Σ_w`, `V(0) = 0` with RK4 (symmetrizing every
/// step) and forms `sigma_y^2 = diag(C V C^T) + diag Σ_ν`.
pub fn output_noise_std(sys: &LpvSystem, theta_bar: &[f64], grid: &TimeGrid) -> Result<DMatrix<f64>> {
    let mats = sys.eval(theta_bar)?;
    check_psd(&mats.process_cov, "process covariance")?;
    check_psd(&mats.meas_cov, "measurement covariance")?;
    let n = sys.n();
    let m = sys.m();
    let a = &mats.a;
    let sw = &mats.process_cov;
    let mut sigma = DMatrix::zeros(m, grid.len());
    let mut err = None;
    rk4(
        grid,
        &vec![0.0; n * n],
        |_, v, dv| {
            let vm = DMatrix::from_column_slice(n, n, v);
            let av = a * &vm;
            let rhs = &av + av.transpose() + sw;
            dv.copy_from_slice(rhs.as_slice());
            Ok(())
        },
        |k, _, v| {
            let mut vm = DMatrix::from_column_slice(n, n, v);
            vm = (&vm + vm.transpose()) * 0.5;
            let cvc = &mats.c * &vm * mats.c.transpose();
            for i in 0..m {
                let var = cvc[(i, i)] + mats.meas_cov[(i, i)];
                if var < -1e-12 && err.is_none() {
                    err = Some(Error::Data(format!("negative output variance {var} at step {k}")));
                }
                sigma[(i, k)] = var.max(0.0).sqrt();
            }
        },
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(sigma),
    }
}

/// Minimal sensitivity threshold `S_min(t) = sigma_y(t) 1_q^T`, one `m x q`
/// matrix per grid point.
pub fn noise_to_minimal_sensitivity(
    sys: &LpvSystem,
    theta_bar: &[f64],
    grid: &TimeGrid,
    q: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let sigma = output_noise_std(sys, theta_bar, grid)?;
    Ok(sigma
        .column_iter()
        .map(|col| DMatrix::from_fn(sys.m(), q, |i, _| col[i]))
        .collect())
}

/// Symmetry and positive-semidefiniteness check of a covariance matrix.
pub(crate) fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let asym = (m - m.transpose()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if asym > 1e-9 * scale {
        return Err(Error::Data(format!("{what} is not symmetric (max asymmetry {asym:e})")));
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    let sym = (m + m.transpose()) * 0.5;
    let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
    if min_eig < -1e-9 * scale {
        return Err(Error::Data(format!("{what} is indefinite (min eigenvalue {min_eig:e})")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Surrogate container file
// ---------------------------------------------------------------------------

const FILE_MAGIC: &str = "# excite surrogate v1";

impl SurrogateSystem {
    /// Writes the surrogate as a plain-text matrix container:
    ///
    /// ```text
    /// # excite surrogate v1
    /// dims <n> <m> <l> <ell> <q> <degree>
    /// param <name> uniform <lower> <upper>       (one line per parameter)
    /// param <name> gaussian <mean> <std>
    /// matrix <name> <rows> <cols>                 (Ap Bp Ep Cp Dp Fp X0)
    /// <row-major values, one matrix row per line>
    /// ```
    ///
    /// Values use Rust's shortest round-trip float formatting, so a write/read
    /// cycle is bit-exact.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let mut s = String::new();
        let ens = self.basis.ensemble();
        writeln!(s, "{FILE_MAGIC}").unwrap();
        writeln!(s, "dims {} {} {} {} {} {}", self.n, self.m, self.l, self.ell(), ens.q(), self.basis.degree()).unwrap();
        for (name, m) in ens.names().iter().zip(ens.marginals()) {
            match m {
                Marginal::Uniform { lower, upper } => writeln!(s, "param {name} uniform {lower:?} {upper:?}"),
                Marginal::Gaussian { mean, std } => writeln!(s, "param {name} gaussian {mean:?} {std:?}"),
            }
            .unwrap();
        }
        let ep = DMatrix::from_column_slice(self.ep.len(), 1, self.ep.as_slice());
        let fp = DMatrix::from_column_slice(self.fp.len(), 1, self.fp.as_slice());
        let x0 = DMatrix::from_column_slice(self.x0.len(), 1, self.x0.as_slice());
        for (name, mat) in [
            ("Ap", &self.ap),
            ("Bp", &self.bp),
            ("Ep", &ep),
            ("Cp", &self.cp),
            ("Dp", &self.dp),
            ("Fp", &fp),
            ("X0", &x0),
        ] {
            writeln!(s, "matrix {name} {} {}", mat.nrows(), mat.ncols()).unwrap();
            for row in mat.row_iter() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(s, "{}", line.join(" ")).unwrap();
            }
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Data("unexpected end of surrogate file".into()))?
                .map_err(Error::from)
        };
        if next()?.trim() != FILE_MAGIC {
            return Err(Error::Data("not a surrogate file (bad header)".into()));
        }
        let dims = parse_usizes(&next()?, "dims", 6)?;
        let (n, m, l, ell, q, degree) = (dims[0], dims[1], dims[2], dims[3], dims[4], dims[5]);
        let mut params = Vec::with_capacity(q);
        for _ in 0..q {
            let line = next()?;
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 5 || tok[0] != "param" {
                return Err(Error::Data(format!("bad parameter line `{line}`")));
            }
            let a = parse_f64(tok[3])?;
            let b = parse_f64(tok[4])?;
            let marginal = match tok[2] {
                "uniform" => Marginal::uniform(a, b)?,
                "gaussian" => Marginal::gaussian(a, b)?,
                other => return Err(Error::Data(format!("unknown distribution `{other}`"))),
            };
            params.push((tok[1].to_string(), marginal));
        }
        let basis = ChaosBasis::new(ParameterEnsemble::new(params)?, degree)?;
        if basis.len() != ell {
            return Err(Error::Data(format!("basis length {} does not match header ell = {ell}", basis.len())));
        }
        let mut read_matrix = |name: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            let header = parse_usizes_named(&next()?, name)?;
            if header != [rows, cols] {
                return Err(Error::Data(format!("matrix {name} is {header:?}, expected [{rows}, {cols}]")));
            }
            let mut mat = DMatrix::zeros(rows, cols);
            for r in 0..rows {
                let line = next()?;
                let vals: Vec<f64> = line.split_whitespace().map(parse_f64).collect::<Result<_>>()?;
                if vals.len() != cols {
                    return Err(Error::Data(format!("matrix {name} row {r} has {} values", vals.len())));
                }
                for (c, v) in vals.into_iter().enumerate() {
                    mat[(r, c)] = v;
                }
            }
            Ok(mat)
        };
        let ap = read_matrix("Ap", n * ell, n * ell)?;
        let bp = read_matrix("Bp", n * ell, l)?;
        let ep = read_matrix("Ep", n * ell, 1)?.column(0).into_owned();
        let cp = read_matrix("Cp", m * ell, n * ell)?;
        let dp = read_matrix("Dp", m * ell, l)?;
        let fp = read_matrix("Fp", m * ell, 1)?.column(0).into_owned();
        let x0 = read_matrix("X0", n * ell, 1)?.column(0).into_owned();
        Ok(Self { n, m, l, ap, bp, ep, cp, dp, fp, x0, basis })
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Data(format!("bad number `{s}`")))
}

fn parse_usizes(line: &str, key: &str, count: usize) -> Result<Vec<usize>> {
    let tok: Vec<&str> = line.split_whitespace().collect();
    if tok.len() != count + 1 || tok[0] != key {
        return Err(Error::Data(format!("expected `{key}` line with {count} values, got `{line}`")));
    }
    tok[1..]
        .iter()
        .map(|t| t.parse().map_err(|_| Error::Data(format!("bad integer `{t}`"))))
        .collect()
}

fn parse_usizes_named(line: &str, name: &str) -> Result<Vec<usize>> {
    let tok: Vec<&str> = line.split_whitespace().collect();
    if tok.len() != 4 || tok[0] != "matrix" || tok[1] != name {
        return Err(Error::Data(format!("expected `matrix {name} <rows> <cols>`, got `{line}`")));
    }
    tok[2..]
        .iter()
        .map(|t| t.parse().map_err(|_| Error::Data(format!("bad integer `{t}`"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::SpringDamper;
    use crate::pce::gauss_quadrature;
    use approx::assert_abs_diff_eq;

    fn spring_surrogate(degree: usize, meas_std: f64) -> (LpvSystem, SurrogateSystem) {
        let sys = SpringDamper::new(meas_std).lpv();
        let basis = ChaosBasis::new(SpringDamper::ensemble(), degree).unwrap();
        let grid = gauss_quadrature(basis.ensemble(), degree + 2).unwrap();
        let s = build_surrogate(&sys, &basis, &grid).unwrap();
        (sys, s)
    }

    fn sine(t: f64) -> f64 {
        (2.0 * std::f64::consts::PI * 0.5 * t).sin()
    }

    fn two_param_ensemble() -> ParameterEnsemble {
        ParameterEnsemble::new([("a", Marginal::uniform(1.0, 2.0).unwrap()), ("b", Marginal::gaussian(0.5, 0.1).unwrap())])
            .unwrap()
    }

    #[test]
    fn constant_a_gives_block_diagonal() {
        let a0 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]);
        let a_copy = a0.clone();
        let sys = LpvSystem::new(2, 1, 1, 2, move |th| {
            LpvMatrices::new(a_copy.clone(), DMatrix::from_element(2, 1, th[0]), DMatrix::from_row_slice(1, 2, &[1.0, th[1]]))
        });
        let basis = ChaosBasis::new(two_param_ensemble(), 2).unwrap();
        let grid = gauss_quadrature(basis.ensemble(), 4).unwrap();
        let s = build_surrogate(&sys, &basis, &grid).unwrap();
        let ell = basis.len();
        for i in 0..2 {
            for k in 0..2 {
                for r in 0..ell {
                    for c in 0..ell {
                        let v = s.ap[(i * ell + r, k * ell + c)];
                        let want = if r == c { a0[(i, k)] } else { 0.0 };
                        assert_abs_diff_eq!(v, want, epsilon = 1e-10);
                    }
                }
            }
        }
        assert!(s.x0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn spring_damper_dimensions() {
        let (_, s) = spring_surrogate(3, 0.0);
        assert_eq!(s.ell(), 10);
        assert_eq!(s.n_states(), 10);
        assert_eq!(s.n_outputs(), 10);
        assert_eq!((s.ap.nrows(), s.bp.ncols(), s.cp.nrows()), (10, 1, 10));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let sys = SpringDamper::new(0.0).lpv();
        let basis = ChaosBasis::new(two_param_ensemble(), 1).unwrap();
        let three = ParameterEnsemble::new([
            ("a", Marginal::uniform(0.0, 1.0).unwrap()),
            ("b", Marginal::uniform(0.0, 1.0).unwrap()),
            ("c", Marginal::uniform(0.0, 1.0).unwrap()),
        ])
        .unwrap();
        let grid = gauss_quadrature(&three, 2).unwrap();
        assert!(matches!(build_surrogate(&sys, &basis, &grid), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_input_stays_at_zero() {
        let (_, s) = spring_surrogate(3, 0.0);
        let g = TimeGrid::new(0.0, 2.0, 1e-2).unwrap();
        let tr = simulate_surrogate(&s, &|_: f64| 0.0, &g).unwrap();
        assert!(tr.y.iter().all(|v| *v == 0.0));
        let y = reconstruct_output(&s, &tr, &[2.1, 0.95]).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn narrow_distribution_matches_direct_simulation() {
        let sys = SpringDamper::new(0.0).lpv();
        let ens = ParameterEnsemble::new([
            ("c", Marginal::uniform(2.0 - 1e-9, 2.0 + 1e-9).unwrap()),
            ("d", Marginal::uniform(1.0 - 1e-9, 1.0 + 1e-9).unwrap()),
        ])
        .unwrap();
        let basis = ChaosBasis::new(ens, 2).unwrap();
        let grid = gauss_quadrature(basis.ensemble(), 3).unwrap();
        let s = build_surrogate(&sys, &basis, &grid).unwrap();
        let g = TimeGrid::new(0.0, 5.0, 1e-3).unwrap();
        let tr = simulate_surrogate(&s, &sine, &g).unwrap();
        let direct = sys.simulate(&[2.0, 1.0], &sine, &g).unwrap();
        for k in 0..g.len() {
            assert_abs_diff_eq!(tr.y[(0, k)], direct[(0, k)], epsilon = 1e-8);
        }
    }

    #[test]
    fn reconstruction_at_mean_is_mean_channel_for_degree_one() {
        let (_, s) = spring_surrogate(1, 0.0);
        let g = TimeGrid::new(0.0, 3.0, 1e-2).unwrap();
        let tr = simulate_surrogate(&s, &sine, &g).unwrap();
        let y = reconstruct_output(&s, &tr, &[2.0, 1.0]).unwrap();
        for k in 0..g.len() {
            assert_abs_diff_eq!(y[(0, k)], tr.y[(0, k)], epsilon = 1e-14);
        }
    }

    #[test]
    fn reconstruction_tracks_direct_simulation_at_corner() {
        let (sys, s) = spring_surrogate(3, 0.0);
        let g = TimeGrid::new(0.0, 10.0, 1e-3).unwrap();
        let u = |t: f64| 1.0 + (2.0 * std::f64::consts::PI * 1.5 * t).sin();
        let tr = simulate_surrogate(&s, &u, &g).unwrap();
        let y = reconstruct_output(&s, &tr, &[2.2, 1.1]).unwrap();
        let direct = sys.simulate(&[2.2, 1.1], &u, &g).unwrap();
        let amp = direct.amax();
        let err = (&y - &direct).amax();
        assert!(err <= 0.02 * amp, "error {err}, amplitude {amp}");
    }

    #[test]
    fn mean_channel_matches_monte_carlo() {
        use rand::SeedableRng;
        let (sys, s) = spring_surrogate(3, 0.0);
        let g = TimeGrid::new(0.0, 3.0, 1e-2).unwrap();
        let tr = simulate_surrogate(&s, &sine, &g).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let ens = SpringDamper::ensemble();
        let n = 4000;
        let k = 150;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let th: Vec<f64> = ens.marginals().iter().map(|m| m.sample(&mut rng)).collect();
                sys.simulate(&th, &sine, &g).unwrap()[(0, k)]
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((tr.y[(0, k)] - mean).abs() < 4.0 * sd / (n as f64).sqrt() + 1e-6);
    }

    #[test]
    fn linear_dependence_is_reproduced_exactly() {
        // A constant and B linear in θ make the output linear in θ, so degree 1 is exact
        let sys = LpvSystem::new(1, 1, 1, 2, |th| {
            LpvMatrices::new(
                DMatrix::from_element(1, 1, -1.5),
                DMatrix::from_element(1, 1, th[0] + 2.0 * th[1]),
                DMatrix::from_element(1, 1, 1.0),
            )
        });
        let basis = ChaosBasis::new(two_param_ensemble(), 1).unwrap();
        let grid = gauss_quadrature(basis.ensemble(), 2).unwrap();
        let s = build_surrogate(&sys, &basis, &grid).unwrap();
        let g = TimeGrid::new(0.0, 4.0, 1e-2).unwrap();
        let tr = simulate_surrogate(&s, &sine, &g).unwrap();
        for th in [[1.1, 0.2], [1.9, 0.9], [1.5, 0.5]] {
            let y = reconstruct_output(&s, &tr, &th).unwrap();
            let direct = sys.simulate(&th, &sine, &g).unwrap();
            assert!((&y - &direct).amax() < 1e-10);
        }
    }

    #[test]
    fn surrogate_is_linear_in_the_input() {
        let (_, s) = spring_surrogate(2, 0.0);
        let g = TimeGrid::new(0.0, 3.0, 1e-2).unwrap();
        let u1 = |t: f64| t.sin();
        let u2 = |t: f64| (3.0 * t).cos();
        let y1 = simulate_surrogate(&s, &u1, &g).unwrap().y;
        let y2 = simulate_surrogate(&s, &u2, &g).unwrap().y;
        let y12 = simulate_surrogate(&s, &|t: f64| 2.0 * u1(t) - 0.5 * u2(t), &g).unwrap().y;
        assert!((y12 - (y1 * 2.0 - y2 * 0.5)).amax() < 1e-12);
    }

    #[test]
    fn measurement_noise_sets_constant_threshold() {
        let sys = SpringDamper::new(0.007f64.sqrt()).lpv();
        let g = TimeGrid::new(0.0, 2.0, 1e-2).unwrap();
        let smin = noise_to_minimal_sensitivity(&sys, &[2.0, 1.0], &g, 2).unwrap();
        assert_eq!(smin.len(), g.len());
        for s in &smin {
            assert_eq!(s.shape(), (1, 2));
            assert_abs_diff_eq!(s[(0, 1)], 0.0837, epsilon = 1e-4);
        }
        let quiet = SpringDamper::new(0.0).lpv();
        assert!(output_noise_std(&quiet, &[2.0, 1.0], &g).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn process_noise_variance_matches_lyapunov_solution() {
        // x' = -a x + w, V(t) = q / (2a) (1 - exp(-2at))
        let (a, q) = (1.5, 0.4);
        let sys = LpvSystem::new(1, 1, 1, 1, move |_| {
            let mut m = LpvMatrices::new(
                DMatrix::from_element(1, 1, -a),
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 1.0),
            );
            m.process_cov[(0, 0)] = q;
            m
        });
        let g = TimeGrid::new(0.0, 3.0, 1e-2).unwrap();
        let sigma = output_noise_std(&sys, &[0.0], &g).unwrap();
        for k in 0..g.len() {
            let t = g.time(k);
            let want = (q / (2.0 * a) * (1.0 - (-2.0 * a * t).exp())).sqrt();
            assert_abs_diff_eq!(sigma[(0, k)], want, epsilon = 1e-8);
        }
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let sys = LpvSystem::new(1, 1, 1, 1, |_| {
            let mut m = LpvMatrices::new(
                DMatrix::from_element(1, 1, -1.0),
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 1.0),
            );
            m.meas_cov[(0, 0)] = -1.0;
            m
        });
        let g = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
        assert!(output_noise_std(&sys, &[0.0], &g).is_err());
    }

    #[test]
    fn divergence_reports_time() {
        let sys = LpvSystem::new(1, 1, 1, 1, |_| {
            LpvMatrices::new(
                DMatrix::from_element(1, 1, 400.0),
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 1.0),
            )
        });
        let ens = ParameterEnsemble::new([("a", Marginal::uniform(0.0, 1.0).unwrap())]).unwrap();
        let basis = ChaosBasis::new(ens, 1).unwrap();
        let s = build_surrogate(&sys, &basis, &gauss_quadrature(basis.ensemble(), 2).unwrap()).unwrap();
        let g = TimeGrid::new(0.0, 100.0, 0.1).unwrap();
        match simulate_surrogate(&s, &|_: f64| 1.0, &g) {
            Err(Error::Divergence { time }) => assert!(time > 0.0 && time <= 100.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn file_round_trip_is_exact() {
        let (_, s) = spring_surrogate(3, 0.0);
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let back = SurrogateSystem::read_from(&buf[..]).unwrap();
        assert_eq!(back, s);
        let mut bad = buf.clone();
        bad[0] = b'x';
        assert!(SurrogateSystem::read_from(&bad[..]).is_err());
        let truncated = &buf[..buf.len() / 2];
        assert!(SurrogateSystem::read_from(truncated).is_err());
    }

    // For d x' = -c x + u driven by sin(wt), s_c lags the input by 2 atan(wd/c)
    // and s_d by the same angle minus a quarter period. The squared
    // sensitivities peak a quarter period after each, repeating every half period.
    #[test]
    fn sobol_peaks_follow_analytic_phase_lag() {
        use crate::sensitivity::{build_index_sets, sensitivity_trajectory, SensitivityKind};
        use crate::signal::SignalSpec;
        use std::f64::consts::PI;
        let (_, s) = spring_surrogate(3, 0.0);
        let grid = TimeGrid::new(0.0, 10.0, 1e-3).unwrap();
        let u = SignalSpec::Sinusoid { u0: 1.0, f: 0.5, phase: 0.0 };
        let tr = simulate_surrogate(&s, &u, &grid).unwrap();
        let sens = sensitivity_trajectory(&tr.y, &build_index_sets(s.basis()), SensitivityKind::FirstOrder).unwrap();
        let window: Vec<usize> = (0..grid.len()).filter(|&k| grid.time(k) >= 9.0 - 1e-12).collect();
        let argmax = |j: usize| {
            let k = *window.iter().max_by(|&&a, &&b| sens[a][(0, j)].total_cmp(&sens[b][(0, j)])).unwrap();
            grid.time(k)
        };
        let w = PI;
        let lag = 2.0 * (w * 1.0 / 2.0f64).atan();
        let tc = 9.0 + ((lag + PI / 2.0) / w).rem_euclid(1.0);
        let td = 9.0 + (lag / w).rem_euclid(1.0);
        assert!((argmax(0) - tc).abs() < 0.01, "S_c peak {} vs {tc}", argmax(0));
        assert!((argmax(1) - td).abs() < 0.01, "S_d peak {} vs {td}", argmax(1));
    }
}
