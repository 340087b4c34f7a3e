//! Scattering-matrix entries from the solved auxiliary kernels.
//!
//! The transmission coefficient `T` and the two reflection coefficients `L`
//! (left) and `R` (right) are rational in eight building blocks: four double
//! integrals `a_l1..a_l4` over the left kernel pair and four mirrored ones
//! `a_r1..a_r4` over the right pair.  For a real potential the four kernel
//! pairs collapse onto two (`up`/`dn` swaps with signs), so only the `KBar`
//! and `M` triangles are needed, and the eight coefficients obey
//! `a_l1 = conj(a_l4)`, `a_l3 = -conj(a_l2)`, `a_r4 = conj(a_r1)`,
//! `a_r3 = -conj(a_r2)`.
//!
//! Each double integral factorizes: the inner integral over the potential
//! support does not depend on the spectral parameter, so it is precomputed
//! per z-offset once; evaluating a given `lambda` then costs four short
//! oscillatory sums.  All abscissas are grid-aligned (odd offsets stop halfway
//! between nodes, where the kernels' bisector-midpoint values are tabulated),
//! so no interpolation enters.  The integrands vanish identically outside
//! `z in [0, 4L]` for the diagonal-type coefficients and `z in [-2L, 2L]`
//! for the shifted-type ones, which is where the sums are truncated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potential::PotentialGrid;
use crate::volterra::{KernelKind, KernelTriangle};
use crate::C64;

/// Failures of the scattering-entry evaluation.
#[derive(Debug, Error)]
pub enum ScatteringError {
    /// A triangle of the wrong kind was supplied.
    #[error("expected the {expected:?} kernel triangle, got {got:?}")]
    WrongKind { expected: KernelKind, got: KernelKind },
    /// The triangle was solved on a different grid than the potential.
    #[error("kernel triangle was solved on a different grid than the potential")]
    GridMismatch,
    /// A scattering denominator vanished (no spectral abscissa attached).
    #[error("scattering denominator vanishes (magnitude {magnitude:.3e})")]
    DenominatorVanishes { magnitude: f64 },
    /// A scattering denominator vanished at a specific spectral abscissa,
    /// flagging the proximity of a real spectral singularity.
    #[error(
        "denominator magnitude {magnitude:.3e} at lambda = {lambda}: \
         near a real spectral singularity"
    )]
    SpectralSingularity { lambda: f64, magnitude: f64 },
}

/// The scattering entries at one abscissa plus the consistency report:
/// absolute differences between the left-form and right-form expressions of
/// each entry (both are second-order perturbations of the same limit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringEntries {
    pub t: C64,
    pub l: C64,
    pub r: C64,
    pub disc_t: f64,
    pub disc_l: f64,
    pub disc_r: f64,
}

/// Everything computed at one spectral abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringSample {
    pub lambda: f64,
    /// `a_l1..a_l4`.
    pub a_left: [C64; 4],
    /// `a_r1..a_r4`.
    pub a_right: [C64; 4],
    pub t: C64,
    pub l: C64,
    pub r: C64,
    pub disc_t: f64,
    pub disc_l: f64,
    pub disc_r: f64,
}

fn check_triangle(
    pot: &PotentialGrid,
    tri: &KernelTriangle,
    expected: KernelKind,
) -> Result<(), ScatteringError> {
    if tri.kind() != expected {
        return Err(ScatteringError::WrongKind { expected, got: tri.kind() });
    }
    if !tri.matches_grid(pot) {
        return Err(ScatteringError::GridMismatch);
    }
    Ok(())
}

/// Inner integrals of the diagonal-type left coefficients, indexed by the
/// offset `k` with `z = k*h`, `k = 0..=4n`:
/// `ld[k] = int u0(y) * kbar_dn(y, y + z) dy` by composite trapezoid.
fn left_diagonal_inner(pot: &PotentialGrid, kbar: &KernelTriangle) -> Vec<f64> {
    let n = pot.nx() as i64;
    let h = pot.h();
    let sum_at = |k: i64| -> f64 {
        let mut acc = 0.0;
        for i in -n..=n {
            let w = if i == -n || i == n { 0.5 } else { 1.0 };
            acc += w * pot.u(i) * kbar.query(i, i + k).1;
        }
        acc * h
    };
    map_offsets(0, 4 * n, sum_at)
}

/// Inner integrals of the shifted-type left coefficients, indexed by
/// `k + 2n` with `z = k*h`, `k = -2n..=2n`:
/// `lu[k] = int_{-L}^{z/2} u0(y) * kbar_up(y, z - y) dy`.
///
/// For odd `k` the upper limit `z/2` falls halfway between nodes `m` and
/// `m + 1` (`m = (k-1)/2`); the last half panel uses the tabulated
/// bisector-midpoint value of the kernel, giving the node `m` a net weight
/// of `3h/4`.
fn left_shifted_inner(pot: &PotentialGrid, kbar: &KernelTriangle) -> Vec<f64> {
    let n = pot.nx() as i64;
    let h = pot.h();
    let sum_at = |k: i64| -> f64 {
        let mut acc = 0.0;
        if k % 2 == 0 {
            let top = k / 2;
            if top > -n {
                for i in -n..=top {
                    let w = if i == -n || i == top { 0.5 } else { 1.0 };
                    acc += w * pot.u(i) * kbar.query(i, k - i).0;
                }
                acc *= h;
            }
        } else {
            let m = (k - 1) / 2;
            let edge = pot.u(m) * kbar.query(m, m + 1).0;
            if m > -n {
                for i in -n..m {
                    let w = if i == -n { 0.5 } else { 1.0 };
                    acc += w * pot.u(i) * kbar.query(i, k - i).0;
                }
                acc += 0.5 * edge;
                acc *= h;
            }
            let half = pot.u_half(m) * kbar.off_half[(m + n) as usize];
            acc += 0.25 * h * (edge + half);
        }
        acc
    };
    map_offsets(-2 * n, 2 * n, sum_at)
}

/// Mirror of [`left_diagonal_inner`] over the right kernel pair:
/// `rd[k] = int u0(y) * m_dn(y, y - z) dy`, `z = k*h`, `k = 0..=4n`.
fn right_diagonal_inner(pot: &PotentialGrid, m: &KernelTriangle) -> Vec<f64> {
    let n = pot.nx() as i64;
    let h = pot.h();
    let sum_at = |k: i64| -> f64 {
        let mut acc = 0.0;
        for i in -n..=n {
            let w = if i == -n || i == n { 0.5 } else { 1.0 };
            acc += w * pot.u(i) * m.query(i, i - k).1;
        }
        acc * h
    };
    map_offsets(0, 4 * n, sum_at)
}

/// Mirror of [`left_shifted_inner`]:
/// `ru[k] = int_{z/2}^{L} u0(y) * m_up(y, z - y) dy`, `z = k*h`,
/// `k = -2n..=2n`; for odd `k` the lower limit sits between `mu - 1` and
/// `mu` (`mu = (k+1)/2`).
fn right_shifted_inner(pot: &PotentialGrid, m: &KernelTriangle) -> Vec<f64> {
    let n = pot.nx() as i64;
    let h = pot.h();
    let sum_at = |k: i64| -> f64 {
        let mut acc = 0.0;
        if k % 2 == 0 {
            let bottom = k / 2;
            if bottom < n {
                for i in bottom..=n {
                    let w = if i == bottom || i == n { 0.5 } else { 1.0 };
                    acc += w * pot.u(i) * m.query(i, k - i).0;
                }
                acc *= h;
            }
        } else {
            let mu = (k + 1) / 2;
            let edge = pot.u(mu) * m.query(mu, mu - 1).0;
            if mu < n {
                for i in mu + 1..=n {
                    let w = if i == n { 0.5 } else { 1.0 };
                    acc += w * pot.u(i) * m.query(i, k - i).0;
                }
                acc += 0.5 * edge;
                acc *= h;
            }
            let half = pot.u_half(mu - 1) * m.off_half[(mu - 1 + n) as usize];
            acc += 0.25 * h * (edge + half);
        }
        acc
    };
    map_offsets(-2 * n, 2 * n, sum_at)
}

/// Evaluates `sum_at` over `k = lo..=hi`, in parallel when available.
#[cfg(feature = "parallel")]
fn map_offsets(lo: i64, hi: i64, sum_at: impl Fn(i64) -> f64 + Sync + Send) -> Vec<f64> {
    use rayon::prelude::*;
    (lo..=hi).into_par_iter().map(sum_at).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_offsets(lo: i64, hi: i64, sum_at: impl Fn(i64) -> f64 + Sync + Send) -> Vec<f64> {
    (lo..=hi).map(sum_at).collect()
}

/// Trapezoid transform `h * sum_k w_k e^(i*lambda*z_k) f[k]` with
/// `z_k = (k0 + k) * h` and half weights at both ends.
fn oscillatory_sum(f: &[f64], k0: i64, h: f64, lambda: f64) -> C64 {
    let last = f.len() - 1;
    let mut acc = C64::new(0.0, 0.0);
    for (idx, &fk) in f.iter().enumerate() {
        if fk == 0.0 {
            continue;
        }
        let w = if idx == 0 || idx == last { 0.5 } else { 1.0 };
        let z = (k0 + idx as i64) as f64 * h;
        acc += w * fk * C64::from_polar(1.0, lambda * z);
    }
    acc * h
}

/// Fourier-type transform `int e^(2*i*lambda*y) u0(y) dy` by trapezoid.
fn potential_transform(pot: &PotentialGrid, lambda: f64) -> C64 {
    let n = pot.nx() as i64;
    let h = pot.h();
    let mut acc = C64::new(0.0, 0.0);
    for i in -n..=n {
        let u = pot.u(i);
        if u == 0.0 {
            continue;
        }
        let w = if i == -n || i == n { 0.5 } else { 1.0 };
        acc += w * u * C64::from_polar(1.0, 2.0 * lambda * pot.x(i));
    }
    acc * h
}

fn left_four(uhat: C64, osc_ld: C64, osc_lu: C64) -> [C64; 4] {
    let a_l4 = C64::new(1.0, 0.0) - osc_ld;
    let a_l2 = -(uhat + osc_lu);
    [a_l4.conj(), a_l2, -a_l2.conj(), a_l4]
}

fn right_four(uhat: C64, osc_rd: C64, osc_ru: C64) -> [C64; 4] {
    let a_r1 = C64::new(1.0, 0.0) + osc_rd;
    let a_r2 = uhat + osc_ru;
    [a_r1, a_r2, -a_r2.conj(), a_r1.conj()]
}

/// One-shot evaluation of `a_l1..a_l4` at a single abscissa.  Building the
/// inner integrals dominates the cost; prefer [`ScatteringEvaluator`] for
/// more than a handful of abscissas.
pub fn coefficients_left(
    pot: &PotentialGrid,
    kbar: &KernelTriangle,
    lambda: f64,
) -> Result<[C64; 4], ScatteringError> {
    check_triangle(pot, kbar, KernelKind::KBar)?;
    let ld = left_diagonal_inner(pot, kbar);
    let lu = left_shifted_inner(pot, kbar);
    let n = pot.nx() as i64;
    let h = pot.h();
    Ok(left_four(
        potential_transform(pot, lambda),
        oscillatory_sum(&ld, 0, h, lambda),
        oscillatory_sum(&lu, -2 * n, h, lambda),
    ))
}

/// One-shot evaluation of `a_r1..a_r4` at a single abscissa.
pub fn coefficients_right(
    pot: &PotentialGrid,
    m: &KernelTriangle,
    lambda: f64,
) -> Result<[C64; 4], ScatteringError> {
    check_triangle(pot, m, KernelKind::M)?;
    let rd = right_diagonal_inner(pot, m);
    let ru = right_shifted_inner(pot, m);
    let n = pot.nx() as i64;
    let h = pot.h();
    Ok(right_four(
        potential_transform(pot, lambda),
        oscillatory_sum(&rd, 0, h, lambda),
        oscillatory_sum(&ru, -2 * n, h, lambda),
    ))
}

/// Forms `T`, `L`, `R` from the eight coefficients, using the left-form
/// expressions, and reports the absolute discrepancy against the right-form
/// ones.  Fails when either denominator is below `1e-12`.
pub fn scattering_entries(
    a_left: &[C64; 4],
    a_right: &[C64; 4],
) -> Result<ScatteringEntries, ScatteringError> {
    let a_l4 = a_left[3];
    let a_r1 = a_right[0];
    let magnitude = a_l4.norm().min(a_r1.norm());
    if magnitude < 1e-12 {
        return Err(ScatteringError::DenominatorVanishes { magnitude });
    }
    let t = C64::new(1.0, 0.0) / a_l4;
    let l = a_left[1] / a_l4;
    let r = -a_left[2] / a_l4;
    let t_right = C64::new(1.0, 0.0) / a_r1;
    let l_right = -a_right[1] / a_r1;
    let r_right = a_right[2] / a_r1;
    Ok(ScatteringEntries {
        t,
        l,
        r,
        disc_t: (t - t_right).norm(),
        disc_l: (l - l_right).norm(),
        disc_r: (r - r_right).norm(),
    })
}

/// Precomputed inner integrals of all eight coefficients; evaluating one
/// spectral abscissa afterwards costs four short oscillatory sums.
/// Evaluations at distinct abscissas are independent.
#[derive(Debug, Clone)]
pub struct ScatteringEvaluator {
    n: i64,
    h: f64,
    u: Vec<f64>,
    xs: Vec<f64>,
    inner_ld: Vec<f64>,
    inner_lu: Vec<f64>,
    inner_rd: Vec<f64>,
    inner_ru: Vec<f64>,
}

impl ScatteringEvaluator {
    /// Builds the inner integrals from the two kernel triangles of a real
    /// potential (`KBar` on the left, `M` on the right).
    pub fn new(
        pot: &PotentialGrid,
        kbar: &KernelTriangle,
        m: &KernelTriangle,
    ) -> Result<Self, ScatteringError> {
        check_triangle(pot, kbar, KernelKind::KBar)?;
        check_triangle(pot, m, KernelKind::M)?;
        let n = pot.nx() as i64;
        Ok(Self {
            n,
            h: pot.h(),
            u: pot.samples().to_vec(),
            xs: (-n..=n).map(|i| pot.x(i)).collect(),
            inner_ld: left_diagonal_inner(pot, kbar),
            inner_lu: left_shifted_inner(pot, kbar),
            inner_rd: right_diagonal_inner(pot, m),
            inner_ru: right_shifted_inner(pot, m),
        })
    }

    fn uhat(&self, lambda: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let last = self.u.len() - 1;
        for (idx, &u) in self.u.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            let w = if idx == 0 || idx == last { 0.5 } else { 1.0 };
            acc += w * u * C64::from_polar(1.0, 2.0 * lambda * self.xs[idx]);
        }
        acc * self.h
    }

    /// All eight coefficients and the scattering entries at one abscissa.
    pub fn eval(&self, lambda: f64) -> Result<ScatteringSample, ScatteringError> {
        let uhat = self.uhat(lambda);
        let a_left = left_four(
            uhat,
            oscillatory_sum(&self.inner_ld, 0, self.h, lambda),
            oscillatory_sum(&self.inner_lu, -2 * self.n, self.h, lambda),
        );
        let a_right = right_four(
            uhat,
            oscillatory_sum(&self.inner_rd, 0, self.h, lambda),
            oscillatory_sum(&self.inner_ru, -2 * self.n, self.h, lambda),
        );
        let entries = scattering_entries(&a_left, &a_right).map_err(|e| match e {
            ScatteringError::DenominatorVanishes { magnitude } => {
                ScatteringError::SpectralSingularity { lambda, magnitude }
            }
            other => other,
        })?;
        Ok(ScatteringSample {
            lambda,
            a_left,
            a_right,
            t: entries.t,
            l: entries.l,
            r: entries.r,
            disc_t: entries.disc_t,
            disc_l: entries.disc_l,
            disc_r: entries.disc_r,
        })
    }

    /// Evaluates a whole grid of abscissas (in parallel when available).
    #[cfg(feature = "parallel")]
    pub fn eval_grid(&self, lambdas: &[f64]) -> Result<Vec<ScatteringSample>, ScatteringError> {
        use rayon::prelude::*;
        lambdas.par_iter().map(|&l| self.eval(l)).collect()
    }

    /// Evaluates a whole grid of abscissas (in parallel when available).
    #[cfg(not(feature = "parallel"))]
    pub fn eval_grid(&self, lambdas: &[f64]) -> Result<Vec<ScatteringSample>, ScatteringError> {
        lambdas.iter().map(|&l| self.eval(l)).collect()
    }
}
