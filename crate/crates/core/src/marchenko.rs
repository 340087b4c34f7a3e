//! Back-substitution from the auxiliary kernels to the two Marchenko
//! kernels.
//!
//! On the grid, the defining Volterra identities couple each kernel sample
//! to samples strictly closer to the support edge, so a single backward
//! sweep per side recovers everything. The left kernel lives on `[0, 2L]`
//! (its argument is `x + y` with both points inside the support), the right
//! one on `[-2L, 0]`.

use crate::potential::PotentialGrid;
use crate::volterra::{KernelKind, KernelTriangle, Side};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarchenkoError {
    #[error("expected a {expected:?} triangle, got {got:?}")]
    WrongKind { expected: KernelKind, got: KernelKind },
    #[error("triangle was solved on a different grid than the supplied potential")]
    GridMismatch,
    #[error(
        "back-substitution unstable: 1 + (h/2)*K(0,0) = {value:.3e} <= 0; decrease h or \
         shrink the potential"
    )]
    Unstable { value: f64 },
    #[error("reference kernel vanishes on the whole support; relative error undefined")]
    DegenerateReference,
}

/// One Marchenko kernel, sampled uniformly over its support.
///
/// `values[k]` is the kernel at argument `k*h` (left side) or `-k*h`
/// (right side), for `k = 0..=2*nx`.
#[derive(Debug, Clone)]
pub struct MarchenkoKernel {
    side: Side,
    h: f64,
    values: Vec<f64>,
}

impl MarchenkoKernel {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sample argument for index `k` (signed by side).
    pub fn alpha(&self, k: usize) -> f64 {
        match self.side {
            Side::Left => k as f64 * self.h,
            Side::Right => -(k as f64) * self.h,
        }
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at the far edge of the support (`2L` or `-2L`).
    pub fn edge(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }
}

fn check_inputs(
    tri: &KernelTriangle,
    pot: &PotentialGrid,
    expected: KernelKind,
) -> Result<(), MarchenkoError> {
    if tri.kind() != expected {
        return Err(MarchenkoError::WrongKind {
            expected,
            got: tri.kind(),
        });
    }
    if !tri.matches_grid(pot) {
        return Err(MarchenkoError::GridMismatch);
    }
    Ok(())
}

/// Recover the left Marchenko kernel from the solved `KBar` pair.
pub fn recover_left(
    kbar: &KernelTriangle,
    pot: &PotentialGrid,
) -> Result<MarchenkoKernel, MarchenkoError> {
    check_inputs(kbar, pot, KernelKind::KBar)?;
    let n = pot.nx() as i64;
    let h = pot.h();
    let center = 1.0 + 0.5 * h * kbar.query(0, 0).0;
    if center <= 0.0 {
        return Err(MarchenkoError::Unstable { value: center });
    }
    let sz = (2 * n + 1) as usize;
    let mut om = vec![0.0f64; sz];
    om[sz - 1] = -kbar.query(n, n).1;
    for sigma in (0..2 * n).rev() {
        // Collocate the defining identity at (x_m, x_{m+k}) with
        // x_m + x_{m+k} = sigma*h; the trapezoid over [x_m, +inf) touches
        // only kernel samples at arguments > sigma*h, already known.
        let m = sigma / 2;
        let k = sigma - 2 * m;
        let p = 2 * n - sigma;
        let mut acc = 0.0f64;
        for l in 1..p {
            acc += kbar.query(m, m + l).0 * om[(sigma + l) as usize];
        }
        acc += 0.5 * kbar.query(m, m + p).0 * om[sz - 1];
        let denom = 1.0 + 0.5 * h * kbar.query(m, m).0;
        om[sigma as usize] = (-kbar.query(m, m + k).1 - h * acc) / denom;
    }
    Ok(MarchenkoKernel {
        side: Side::Left,
        h,
        values: om,
    })
}

/// Recover the right Marchenko kernel from the solved `M` pair.
pub fn recover_right(
    m_tri: &KernelTriangle,
    pot: &PotentialGrid,
) -> Result<MarchenkoKernel, MarchenkoError> {
    check_inputs(m_tri, pot, KernelKind::M)?;
    let n = pot.nx() as i64;
    let h = pot.h();
    let center = 1.0 + 0.5 * h * m_tri.query(0, 0).0;
    if center <= 0.0 {
        return Err(MarchenkoError::Unstable { value: center });
    }
    let sz = (2 * n + 1) as usize;
    let mut om = vec![0.0f64; sz];
    om[sz - 1] = m_tri.query(-n, -n).1;
    for q in (0..2 * n).rev() {
        // Mirror sweep at (x_{-m}, x_{-m-k}), argument -q*h.
        let m = q / 2;
        let k = q - 2 * m;
        let p = 2 * n - q;
        let mut acc = 0.0f64;
        for l in 1..p {
            acc += m_tri.query(-m, -m - l).0 * om[(q + l) as usize];
        }
        acc += 0.5 * m_tri.query(-m, -m - p).0 * om[sz - 1];
        let denom = 1.0 + 0.5 * h * m_tri.query(-m, -m).0;
        om[q as usize] = (m_tri.query(-m, -m - k).1 - h * acc) / denom;
    }
    Ok(MarchenkoKernel {
        side: Side::Right,
        h,
        values: om,
    })
}

/// Max-norm relative error of the recovered kernel against a reference
/// function of the sample argument.
pub fn relative_error(
    kernel: &MarchenkoKernel,
    reference: impl Fn(f64) -> f64,
) -> Result<f64, MarchenkoError> {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for k in 0..kernel.len() {
        let r = reference(kernel.alpha(k));
        num = num.max((kernel.value(k) - r).abs());
        den = den.max(r.abs());
    }
    if den == 0.0 {
        return Err(MarchenkoError::DegenerateReference);
    }
    Ok(num / den)
}

/// Sup-norm residual of the recovered kernel substituted back into the
/// discrete defining identity, re-assembled independently of the sweep
/// order. Diagnostic for tests.
pub fn residual_sup(kernel: &MarchenkoKernel, tri: &KernelTriangle, pot: &PotentialGrid) -> f64 {
    let n = pot.nx() as i64;
    let h = kernel.h();
    let sz = kernel.len();
    let mut worst = 0.0f64;
    for sigma in 0..2 * n {
        let m = sigma / 2;
        let k = sigma - 2 * m;
        let p = 2 * n - sigma;
        let (sign_m, node_up, node_dn) = match kernel.side() {
            Side::Left => {
                let (u, _) = tri.query(m, m);
                (1.0, u, tri.query(m, m + k).1)
            }
            Side::Right => {
                let (u, _) = tri.query(-m, -m);
                (-1.0, u, tri.query(-m, -m - k).1)
            }
        };
        let mut quad = 0.5 * node_up * kernel.value(sigma as usize)
            + 0.5
                * match kernel.side() {
                    Side::Left => tri.query(m, m + p).0,
                    Side::Right => tri.query(-m, -m - p).0,
                }
                * kernel.value(sz - 1);
        for l in (1..p).rev() {
            let up = match kernel.side() {
                Side::Left => tri.query(m, m + l).0,
                Side::Right => tri.query(-m, -m - l).0,
            };
            quad += up * kernel.value((sigma + l) as usize);
        }
        let res = sign_m * node_dn + kernel.value(sigma as usize) + h * quad;
        worst = worst.max(res.abs());
    }
    worst
}
