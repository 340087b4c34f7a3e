//! Direct scattering data for the focusing nonlinear Schrödinger equation
//! with compactly supported, real, reflectionless initial potentials.
//!
//! The computation proceeds in stages, each of which is usable on its own:
//!
//! 1. [`potential`] — evaluate and sample the initial potential `u0` on a
//!    uniform grid over `[-L, L]` (closed-form single-soliton profiles and
//!    matrix-parameterized multisoliton profiles built from a pair of
//!    Lyapunov solves, plus tabulated data).
//! 2. [`volterra`] — solve the coupled Volterra systems for the four
//!    auxiliary kernel pairs on their triangular domains by second-order
//!    collocation, including the constant extensions outside `[-L, L]`.
//! 3. [`marchenko`] — recover the left and right Marchenko kernels from the
//!    auxiliary kernels by a backward substitution along anti-diagonals.
//! 4. [`pencil`] — fit a finite exponential sum to uniform samples of a
//!    Marchenko kernel with a Hankel matrix pencil, giving decay exponents
//!    (bound states) and polynomial coefficients (norming constants).
//! 5. [`scatmat`] — evaluate the entries of the scattering matrix
//!    (transmission and the two reflection coefficients) from the kernels.
//!
//! [`pipeline`] chains the stages behind a single serializable
//! configuration and is what the command line front end drives.

pub mod marchenko;
pub mod pencil;
pub mod pipeline;
pub mod potential;
pub mod scatmat;
pub mod volterra;

#[cfg(test)]
pub(crate) mod testutil;

pub use marchenko::{recover_left, recover_right, MarchenkoKernel};
pub use pencil::{
    fit_exponential_sum, to_spectral_data, ExponentialSumModel, PencilOptions, SampleSeries,
    SpectralData,
};
pub use pipeline::{
    convergence_table, run_pipeline, ConvergenceRow, EmitFlags, LambdaGrid, MatrixSpec,
    PencilConfig, PipelineError, PipelineOutput, PotentialSpec, ReferenceKernel, RunConfig,
};
pub use potential::{tabulate, PotentialGrid, PotentialModel};
pub use scatmat::{ScatteringEvaluator, ScatteringSample};
pub use volterra::{solve_auxiliary, KernelKind, KernelTriangle, Side};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
