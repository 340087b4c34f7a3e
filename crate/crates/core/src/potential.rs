//! Initial potentials `u0` and their uniform-grid tabulation.
//!
//! Two closed-form families are provided. The single-soliton profile
//!
//! ```text
//! u0(x) = -2 c e^{-2ax} / (1 + (c^2 / 4p^2) e^{-4px})
//! ```
//!
//! and a multisoliton profile parameterized by a square matrix `A` (all
//! eigenvalues in the open right half plane) and vectors `b`, `c`:
//!
//! ```text
//! u0(x) = -2 c [ e^{2xA} + N e^{-2xA*} Q ]^{-1} b
//! ```
//!
//! where `Q` and `N` solve the Lyapunov equations `QA + A*Q = c*c` and
//! `AN + NA* = bb*`. This is the solution of the reflectionless inverse
//! problem whose left kernel is `c e^{-alpha A} b`: the right tail decays
//! with coefficients `b_j c_j` while the left tail carries the (generally
//! much larger) right-side norming constants. The evaluation is split at
//! the sign of `x` into two algebraically equal factorizations in which
//! every matrix exponential decays, so it neither overflows nor cancels.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

type C64 = Complex64;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("invalid potential parameters: {0}")]
    InvalidParams(String),
    #[error("matrix parameter has an eigenvalue with real part {0:.3e} <= 0")]
    UnstableMatrix(f64),
    #[error("Lyapunov solve failed: {0}")]
    LyapunovSolve(String),
    #[error("Lyapunov residual {residual:.3e} exceeds 1e-12 * |rhs| = {bound:.3e}")]
    LyapunovResidual { residual: f64, bound: f64 },
    #[error("potential evaluates to a non-real value at x = {x}: imaginary part {im:.3e}")]
    NonRealValue { x: f64, im: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("tabulated potential covers [{have_lo}, {have_hi}] but the grid needs [{need_lo}, {need_hi}]")]
    TableDomain {
        have_lo: f64,
        have_hi: f64,
        need_lo: f64,
        need_hi: f64,
    },
}

/// Parameters of the single-soliton profile.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SolitonParams {
    pub c: f64,
    pub a: f64,
    pub p: f64,
}

impl Default for SolitonParams {
    fn default() -> Self {
        SolitonParams { c: 2.0, a: 1.0, p: 1.0 }
    }
}

impl SolitonParams {
    pub fn new(c: f64, a: f64, p: f64) -> Result<Self, PotentialError> {
        if !(c.is_finite() && a.is_finite() && p.is_finite()) {
            return Err(PotentialError::InvalidParams("non-finite soliton parameter".into()));
        }
        if a <= 0.0 {
            return Err(PotentialError::InvalidParams(format!("decay rate a = {a} must be > 0")));
        }
        if p == 0.0 {
            return Err(PotentialError::InvalidParams("p must be nonzero".into()));
        }
        Ok(SolitonParams { c, a, p })
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Evaluate the single-soliton profile. The denominator is folded into the
/// exponent through `softplus`, so large `|x|` underflows to zero instead of
/// overflowing.
pub fn eval_soliton(params: &SolitonParams, x: f64) -> f64 {
    let SolitonParams { c, a, p } = *params;
    if c == 0.0 {
        return 0.0;
    }
    let t = (c * c / (4.0 * p * p)).ln() - 4.0 * p * x;
    -2.0 * c * (-2.0 * a * x - softplus(t)).exp()
}

/// Which side of the Lyapunov equation the unknown multiplies `A` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapunovSide {
    /// `X A + A* X = rhs`
    Left,
    /// `A X + X A* = rhs`
    Right,
}

/// Solve a small Lyapunov equation densely through its Kronecker form and
/// verify the residual against `1e-12 * |rhs|`.
pub fn solve_lyapunov(
    a: &DMatrix<C64>,
    rhs: &DMatrix<C64>,
    side: LyapunovSide,
) -> Result<DMatrix<C64>, PotentialError> {
    let n = a.nrows();
    if !a.is_square() || rhs.nrows() != n || rhs.ncols() != n {
        return Err(PotentialError::LyapunovSolve("dimension mismatch".into()));
    }
    let eye = DMatrix::<C64>::identity(n, n);
    let op = match side {
        LyapunovSide::Left => a.transpose().kronecker(&eye) + eye.kronecker(&a.adjoint()),
        LyapunovSide::Right => eye.kronecker(a) + a.map(|z| z.conj()).kronecker(&eye),
    };
    let vec_rhs = DVector::from_column_slice(rhs.as_slice());
    let lu = op.lu();
    let vec_x = lu
        .solve(&vec_rhs)
        .ok_or_else(|| PotentialError::LyapunovSolve("Kronecker system is singular".into()))?;
    let x = DMatrix::from_column_slice(n, n, vec_x.as_slice());
    let residual = match side {
        LyapunovSide::Left => &x * a + a.adjoint() * &x - rhs,
        LyapunovSide::Right => a * &x + &x * a.adjoint() - rhs,
    };
    let res = residual.norm();
    let bound = 1e-12 * rhs.norm();
    if res > bound && res != 0.0 {
        return Err(PotentialError::LyapunovResidual { residual: res, bound });
    }
    Ok(x)
}

fn is_diagonal(m: &DMatrix<C64>) -> bool {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] != C64::new(0.0, 0.0) {
                return false;
            }
        }
    }
    true
}

/// Matrix exponential with a fast path for diagonal matrices.
fn mat_exp(m: &DMatrix<C64>) -> DMatrix<C64> {
    if is_diagonal(m) {
        let n = m.nrows();
        let mut out = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = m[(i, i)].exp();
        }
        out
    } else {
        m.exp()
    }
}

/// Closed-form inverse of the scaled Cauchy matrix
/// `M_ij = conj(w_i) w_j / (conj(s_i) + s_j)` (the Lyapunov solution for
/// diagonal `A = diag(s)` and rank-one right-hand side built from `w`).
/// Entry-wise products of ratios, so the relative accuracy is O(n*eps)
/// even when `M` itself is badly conditioned. Requires pairwise distinct
/// nodes and nonzero weights; returns `None` otherwise.
fn scaled_cauchy_inverse(s: &[C64], w: &[C64]) -> Option<DMatrix<C64>> {
    let n = s.len();
    let x: Vec<C64> = s.iter().map(|z| z.conj()).collect(); // row nodes
    let y: Vec<C64> = s.to_vec(); // column nodes
    for i in 0..n {
        if w[i].norm() == 0.0 {
            return None;
        }
        for j in 0..n {
            if i != j && (s[i] - s[j]).norm() <= 1e-12 * (s[i].norm() + s[j].norm()) {
                return None;
            }
        }
    }
    // Inverse of the plain Cauchy matrix C_ij = 1/(x_i + y_j):
    //   (C^{-1})_ij = prod_k (x_j + y_k)(x_k + y_i)
    //                 / [ (x_j + y_i) * prod_{k!=j} (x_j - x_k)
    //                                 * prod_{k!=i} (y_i - y_k) ]
    let mut inv = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut val = C64::new(1.0, 0.0) / (x[j] + y[i]);
            for k in 0..n {
                val *= (x[j] + y[k]) * (x[k] + y[i]);
            }
            for k in 0..n {
                if k != j {
                    val /= x[j] - x[k];
                }
                if k != i {
                    val /= y[i] - y[k];
                }
            }
            // Undo the diagonal scaling M = D_{conj(w)} C D_w.
            inv[(i, j)] = val / (w[i] * w[j].conj());
        }
    }
    Some(inv)
}

/// Invert the Lyapunov solution `Q`, preferring the exact Cauchy form when
/// `A` is diagonal with distinct entries and the weights are nonzero.
fn invert_norming_matrix(
    a: &DMatrix<C64>,
    w: &DVector<C64>,
    q: &DMatrix<C64>,
) -> Result<DMatrix<C64>, PotentialError> {
    let n = q.nrows();
    let candidate = if is_diagonal(a) {
        let s: Vec<C64> = (0..n).map(|i| a[(i, i)]).collect();
        scaled_cauchy_inverse(&s, w.as_slice())
    } else {
        None
    };
    let inv = match candidate {
        Some(m) => m,
        None => q.clone().try_inverse().ok_or_else(|| {
            PotentialError::InvalidParams(
                "norming matrix Q is numerically singular (zero or repeated modes?)".into(),
            )
        })?,
    };
    let residual = (&inv * q - DMatrix::<C64>::identity(n, n)).norm();
    if !(residual <= 1e-6 * (n as f64)) {
        return Err(PotentialError::InvalidParams(format!(
            "norming matrix Q is too ill-conditioned to invert (residual {residual:.3e})"
        )));
    }
    Ok(inv)
}

/// Parameters of the multisoliton profile. Construction validates the
/// spectrum of `A`, precomputes the two Lyapunov solutions, and inverts `Q`
/// once for the negative-axis factorization.
#[derive(Debug, Clone)]
pub struct MultisolitonParams {
    a: DMatrix<C64>,
    b: DVector<C64>,
    c: DVector<C64>,
    q: DMatrix<C64>,
    n_mat: DMatrix<C64>,
    qinv: DMatrix<C64>,
}

impl MultisolitonParams {
    pub fn new(
        a: DMatrix<C64>,
        b: DVector<C64>,
        c: DVector<C64>,
    ) -> Result<Self, PotentialError> {
        let n = a.nrows();
        if n == 0 || !a.is_square() || b.len() != n || c.len() != n {
            return Err(PotentialError::InvalidParams(
                "A must be square and b, c must match its dimension".into(),
            ));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(PotentialError::InvalidParams("non-finite matrix parameter".into()));
        }
        // Eigenvalues of the real 2n x 2n embedding [[Re, -Im], [Im, Re]] are
        // those of A together with their conjugates, so the half-plane test
        // carries over.
        let mut embed = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                embed[(i, j)] = a[(i, j)].re;
                embed[(i, j + n)] = -a[(i, j)].im;
                embed[(i + n, j)] = a[(i, j)].im;
                embed[(i + n, j + n)] = a[(i, j)].re;
            }
        }
        let min_re = embed
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min);
        if !(min_re > 0.0) {
            return Err(PotentialError::UnstableMatrix(min_re));
        }
        let c_conj = c.map(|z| z.conj());
        let rhs_q = &c_conj * c.transpose();
        let q = solve_lyapunov(&a, &rhs_q, LyapunovSide::Left)?;
        let rhs_n = &b * b.adjoint();
        let n_mat = solve_lyapunov(&a, &rhs_n, LyapunovSide::Right)?;
        let qinv = invert_norming_matrix(&a, &c, &q)?;
        Ok(MultisolitonParams { a, b, c, q, n_mat, qinv })
    }

    /// Build from real data (the common case).
    pub fn from_real(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Result<Self, PotentialError> {
        Self::new(
            a.map(|v| C64::new(v, 0.0)),
            b.map(|v| C64::new(v, 0.0)),
            c.map(|v| C64::new(v, 0.0)),
        )
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn q(&self) -> &DMatrix<C64> {
        &self.q
    }

    pub fn n_mat(&self) -> &DMatrix<C64> {
        &self.n_mat
    }

    /// Left reflection kernel of the profile, `c e^{-alpha A} b`.
    pub fn left_kernel(&self, alpha: f64) -> Result<f64, PotentialError> {
        let e = mat_exp(&self.a.map(|z| z * C64::new(-alpha, 0.0)));
        let val = (self.c.transpose() * e * &self.b)[(0, 0)];
        real_part(val, alpha)
    }
}

fn real_part(val: C64, x: f64) -> Result<f64, PotentialError> {
    if val.im.abs() > 1e-10 * (1.0 + val.re.abs()) {
        return Err(PotentialError::NonRealValue { x, im: val.im });
    }
    Ok(val.re)
}

/// Evaluate the multisoliton profile at one point,
///
/// ```text
/// u0(x) = -2 c [ e^{2xA} + N e^{-2xA*} Q ]^{-1} b,
/// ```
///
/// through the factorization matching the sign of `x`:
///
/// ```text
/// x >= 0:  u0 = -2 (c E) [ I + (E N E*)(E* Q E) ]^{-1} (E b),  E = e^{-xA}
/// x <  0:  u0 = -2 (c Q^{-1}) F* [ F Q^{-1} F* + N ]^{-1} b,   F = e^{2xA}
/// ```
///
/// Both brackets stay bounded and well conditioned because every
/// exponential decays on its half-axis.
pub fn eval_multisoliton(params: &MultisolitonParams, x: f64) -> Result<f64, PotentialError> {
    let a = &params.a;
    let n = a.nrows();
    let val = if x >= 0.0 {
        let e = mat_exp(&a.map(|z| z * C64::new(-x, 0.0)));
        let ed = e.adjoint();
        let bracket =
            DMatrix::<C64>::identity(n, n) + (&e * &params.n_mat * &ed) * (&ed * &params.q * &e);
        let rhs = &e * &params.b;
        let sol = bracket
            .lu()
            .solve(&rhs)
            .ok_or_else(|| PotentialError::LyapunovSolve(format!("singular resolvent at x = {x}")))?;
        (params.c.transpose() * &e * sol)[(0, 0)] * C64::new(-2.0, 0.0)
    } else {
        let f = mat_exp(&a.map(|z| z * C64::new(2.0 * x, 0.0)));
        let fd = f.adjoint();
        let bracket = &f * &params.qinv * &fd + &params.n_mat;
        let sol = bracket
            .lu()
            .solve(&params.b)
            .ok_or_else(|| PotentialError::LyapunovSolve(format!("singular resolvent at x = {x}")))?;
        (params.c.transpose() * &params.qinv * fd * sol)[(0, 0)] * C64::new(-2.0, 0.0)
    };
    real_part(val, x)
}

/// A potential given by samples at arbitrary (sorted, strictly increasing)
/// abscissae; values are interpolated linearly onto the working grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampledTable {
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
}

impl SampledTable {
    pub fn new(xs: Vec<f64>, us: Vec<f64>) -> Result<Self, PotentialError> {
        if xs.len() != us.len() || xs.len() < 2 {
            return Err(PotentialError::InvalidParams(
                "table needs at least two samples with matching lengths".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PotentialError::InvalidParams("table abscissae must be strictly increasing".into()));
        }
        if xs.iter().chain(us.iter()).any(|v| !v.is_finite()) {
            return Err(PotentialError::InvalidParams("non-finite table entry".into()));
        }
        Ok(SampledTable { xs, us })
    }

    fn interp(&self, x: f64) -> f64 {
        let n = self.xs.len();
        // Exact node hits reproduce the stored sample bit for bit, so a
        // synthesized table round-trips through resampling unchanged.
        let pos = self.xs.partition_point(|&t| t < x);
        for j in pos.saturating_sub(1)..=pos.min(n - 1) {
            if (x - self.xs[j]).abs() <= 1e-9 * (1.0 + self.xs[j].abs()) {
                return self.us[j];
            }
        }
        let hi = pos.clamp(1, n - 1);
        let lo = hi - 1;
        let t = (x - self.xs[lo]) / (self.xs[hi] - self.xs[lo]);
        self.us[lo] * (1.0 - t) + self.us[hi] * t
    }
}

/// The supported potential families.
#[derive(Debug, Clone)]
pub enum PotentialModel {
    Zero,
    Soliton(SolitonParams),
    Multisoliton(MultisolitonParams),
    Table(SampledTable),
}

/// Uniform samples of `u0` on `x_i = i*h`, `i = -nx..=nx`, `h = L/nx`,
/// together with midpoint values and the recorded truncation level.
#[derive(Debug, Clone)]
pub struct PotentialGrid {
    l: f64,
    nx: usize,
    h: f64,
    samples: Vec<f64>,
    half: Vec<f64>,
    truncation: f64,
}

impl PotentialGrid {
    /// Wrap raw node samples (`2*nx + 1` values for `i = -nx..=nx`);
    /// midpoint values are filled in by interpolation.
    pub fn from_samples(l: f64, nx: usize, samples: Vec<f64>) -> Result<Self, PotentialError> {
        let half = midpoint_values(&samples);
        Self::assemble(l, nx, samples, half)
    }

    /// Wrap node samples together with exact midpoint samples
    /// (`2*nx` values at `x_i + h/2` for `i = -nx..nx`). Midpoint accuracy
    /// matters: the half-panel quadrature corrections lean on it, and
    /// interpolation degrades visibly once the potential oscillates near
    /// the grid scale.
    pub fn from_samples_with_midpoints(
        l: f64,
        nx: usize,
        samples: Vec<f64>,
        half: Vec<f64>,
    ) -> Result<Self, PotentialError> {
        if half.len() + 1 != samples.len() || half.iter().any(|v| !v.is_finite()) {
            return Err(PotentialError::InvalidGrid(format!(
                "expected {} finite midpoint samples, got {}",
                samples.len().max(1) - 1,
                half.len()
            )));
        }
        Self::assemble(l, nx, samples, half)
    }

    fn assemble(l: f64, nx: usize, samples: Vec<f64>, half: Vec<f64>) -> Result<Self, PotentialError> {
        check_grid(l, nx)?;
        if samples.len() != 2 * nx + 1 {
            return Err(PotentialError::InvalidGrid(format!(
                "expected {} samples, got {}",
                2 * nx + 1,
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(PotentialError::InvalidGrid("non-finite sample".into()));
        }
        let h = l / nx as f64;
        let truncation = samples[0].abs().max(samples[2 * nx].abs());
        Ok(PotentialGrid { l, nx, h, samples, half, truncation })
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn x(&self, i: i64) -> f64 {
        i as f64 * self.h
    }

    /// Sample at node `i` (zero outside `[-nx, nx]`, matching the compact
    /// support of the potential).
    #[inline]
    pub fn u(&self, i: i64) -> f64 {
        let n = self.nx as i64;
        if i < -n || i > n {
            0.0
        } else {
            self.samples[(i + n) as usize]
        }
    }

    /// Interpolated value at `x_i + h/2`, valid for `i = -nx..=nx-1`.
    #[inline]
    pub fn u_half(&self, i: i64) -> f64 {
        let n = self.nx as i64;
        debug_assert!((-n..n).contains(&i));
        self.half[(i + n) as usize]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

fn check_grid(l: f64, nx: usize) -> Result<(), PotentialError> {
    if !(l.is_finite() && l > 0.0) {
        return Err(PotentialError::InvalidGrid(format!("L = {l} must be positive and finite")));
    }
    if nx < 2 {
        return Err(PotentialError::InvalidGrid(format!("nx = {nx} must be at least 2")));
    }
    Ok(())
}

/// Four-point cubic interpolation of the midpoints, with samples outside the
/// grid taken as zero (consistent with compact support). Built from the
/// samples alone so tabulated and closed-form potentials behave identically.
fn midpoint_values(samples: &[f64]) -> Vec<f64> {
    let m = samples.len();
    let at = |j: i64| -> f64 {
        if j < 0 || j as usize >= m {
            0.0
        } else {
            samples[j as usize]
        }
    };
    (0..m - 1)
        .map(|i| {
            let i = i as i64;
            (-at(i - 1) + 9.0 * at(i) + 9.0 * at(i + 1) - at(i + 2)) / 16.0
        })
        .collect()
}

/// Sample a potential model on the uniform grid over `[-L, L]`, at nodes
/// and midpoints alike.
pub fn tabulate(model: &PotentialModel, l: f64, nx: usize) -> Result<PotentialGrid, PotentialError> {
    check_grid(l, nx)?;
    let h = l / nx as f64;
    let n = nx as i64;
    // 2i covers the nodes, 2i+1 the midpoints.
    let points = || (-2 * n..=2 * n).map(|i| i as f64 * h / 2.0);
    let mut all = Vec::with_capacity(4 * nx + 1);
    match model {
        PotentialModel::Zero => all.resize(4 * nx + 1, 0.0),
        PotentialModel::Soliton(p) => {
            for x in points() {
                all.push(eval_soliton(p, x));
            }
        }
        PotentialModel::Multisoliton(p) => {
            for x in points() {
                all.push(eval_multisoliton(p, x)?);
            }
        }
        PotentialModel::Table(t) => {
            let (lo, hi) = (t.xs[0], t.xs[t.xs.len() - 1]);
            let slack = 1e-9 * (1.0 + l);
            if lo > -l + slack || hi < l - slack {
                return Err(PotentialError::TableDomain {
                    have_lo: lo,
                    have_hi: hi,
                    need_lo: -l,
                    need_hi: l,
                });
            }
            for x in points() {
                all.push(t.interp(x.clamp(lo, hi)));
            }
        }
    }
    let samples: Vec<f64> = all.iter().copied().step_by(2).collect();
    let half: Vec<f64> = all.iter().copied().skip(1).step_by(2).collect();
    PotentialGrid::from_samples_with_midpoints(l, nx, samples, half)
}
