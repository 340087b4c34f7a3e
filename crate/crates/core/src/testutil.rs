//! Shared fixtures for the unit tests.

use crate::potential::{MultisolitonParams, PotentialGrid};
use nalgebra::{DMatrix, DVector};

/// A sum of smooth bumps that vanish identically outside their supports,
/// so every support statement holds exactly on the grid.
pub(crate) fn bump_potential(l: f64, nx: usize, bumps: &[(f64, f64, f64)]) -> PotentialGrid {
    let h = l / nx as f64;
    let n = nx as i64;
    let samples: Vec<f64> = (-n..=n).map(|i| eval_bumps(i as f64 * h, bumps)).collect();
    PotentialGrid::from_samples(l, nx, samples).unwrap()
}

pub(crate) fn eval_bumps(x: f64, bumps: &[(f64, f64, f64)]) -> f64 {
    let mut v = 0.0;
    for &(center, width, amp) in bumps {
        let t = (x - center) / width;
        if t.abs() < 1.0 {
            v += amp * (1.0 - 1.0 / (1.0 - t * t)).exp();
        }
    }
    v
}

/// The four-term reflectionless profile used across the error tables:
/// decays {1,2,3,4}, kernel amplitudes {2,2,-2,-2}.
pub(crate) fn four_soliton() -> MultisolitonParams {
    MultisolitonParams::from_real(
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])),
        DVector::from_vec(vec![1.0, 2.0, -2.0, -1.0]),
        DVector::from_vec(vec![2.0, 1.0, 1.0, 2.0]),
    )
    .unwrap()
}
