//! Configuration-driven driver chaining every stage: potential sampling,
//! auxiliary-kernel solves, Marchenko recovery, exponential-sum fitting,
//! spectral data, and the scattering table.
//!
//! # Configuration schema
//!
//! [`RunConfig`] (de)serializes as JSON. Every field has a default, unknown
//! fields are rejected, and [`RunConfig::resolved`] returns the
//! fully-resolved copy (auto values filled in) that a run actually uses:
//!
//! ```json
//! {
//!   "potential": {"model": "multisoliton",
//!                 "a": [1.0, 2.0, 3.0, 4.0],
//!                 "b": [1.0, 2.0, -2.0, -1.0],
//!                 "c": [2.0, 1.0, 1.0, 2.0]},
//!   "l": 15.0,
//!   "nx": 600,
//!   "pencil": {"n": 25, "stride": 0, "order_tol": 1e-5, "cluster_eps": 1e-6},
//!   "lambda": {"min": -5.0, "max": 5.0, "count": 201},
//!   "out": "out",
//!   "emit": {"kernels": false, "omega": true, "spectral": true, "scattering": true},
//!   "truncation_tol": 1e-12
//! }
//! ```
//!
//! Other potentials: `{"model": "zero"}`,
//! `{"model": "soliton", "c": 2.0, "a": 1.0, "p": 1.0}`, and
//! `{"model": "table", "path": "u0.txt"}` where the file holds two
//! whitespace-separated columns `x u` (one sample per line, `#` comments
//! allowed). A multisoliton `"a"` may also be a full row-major matrix
//! (`[[...], ...]`) instead of a diagonal.
//!
//! `pencil.stride = 0` picks the sampling stride automatically so that the
//! `2n` fitted samples span most of the kernel support, shrinking the block
//! size `n` when the grid is too small to supply `2n` samples.
//!
//! Stages always compute both the left and the right kernel. The spectral
//! data is built from the left fit; the right kernel is then fitted on the
//! left fit's nodes, which yields the right norming constants and doubles
//! as the bound-state cross-check: if the right kernel were not explained
//! by the same exponents, the fit would leave a large relative residual,
//! and that residual is reported as a warning. (Recovering the nodes
//! directly from right-side data instead would be ill-posed whenever the
//! norming-constant spread makes some mode a negligible fraction of the
//! right kernel, as happens already for the reference four-mode spectrum.)

use crate::marchenko::{recover_left, recover_right, MarchenkoKernel};
use crate::pencil::{
    fit_exponential_sum, recover_coefficients, to_spectral_data, ExponentialSumModel,
    PencilOptions, SampleSeries, SpectralData,
};
use crate::potential::{
    tabulate, MultisolitonParams, PotentialGrid, PotentialModel, SampledTable,
    SolitonParams,
};
use crate::scatmat::{ScatteringEvaluator, ScatteringSample};
use crate::volterra::{solve_auxiliary, KernelKind, KernelTriangle};
use crate::C64;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Driver failure: either the configuration is invalid (nothing ran) or a
/// computational stage failed.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("stage {stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

fn stage<T, E: std::fmt::Display>(name: &'static str, r: Result<T, E>) -> Result<T, PipelineError> {
    r.map_err(|e| PipelineError::Stage { stage: name, message: e.to_string() })
}

/// A square matrix in a config: either its diagonal or full rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn to_matrix(&self) -> Result<DMatrix<f64>, String> {
        match self {
            MatrixSpec::Diagonal(d) => {
                if d.is_empty() {
                    return Err("matrix diagonal must not be empty".into());
                }
                Ok(DMatrix::from_diagonal(&DVector::from_vec(d.clone())))
            }
            MatrixSpec::Full(rows) => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(format!("matrix rows must form a nonempty square, got {n} rows"));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            MatrixSpec::Diagonal(d) => d.len(),
            MatrixSpec::Full(rows) => rows.len(),
        }
    }
}

/// The potential family of a run, in config form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `u0 = 0`.
    Zero,
    /// Single-soliton profile `-2c e^{-2ax} / (1 + (c/2p)^2 e^{-4px})`.
    Soliton {
        #[serde(default = "default_soliton_c")]
        c: f64,
        #[serde(default = "default_one")]
        a: f64,
        #[serde(default = "default_one")]
        p: f64,
    },
    /// Matrix-parameterized multisoliton (real `A`, `b`, `c`).
    Multisoliton { a: MatrixSpec, b: Vec<f64>, c: Vec<f64> },
    /// Samples read from a two-column `x u` text file.
    Table { path: String },
}

fn default_soliton_c() -> f64 {
    2.0
}

fn default_one() -> f64 {
    1.0
}

impl PotentialSpec {
    /// Structural validation that needs no file access.
    fn check(&self) -> Result<(), String> {
        match self {
            PotentialSpec::Zero | PotentialSpec::Soliton { .. } => Ok(()),
            PotentialSpec::Multisoliton { a, b, c } => {
                let n = a.dim();
                if b.len() != n || c.len() != n {
                    return Err(format!(
                        "multisoliton dimensions disagree: A is {n}x{n}, b has {}, c has {}",
                        b.len(),
                        c.len()
                    ));
                }
                Ok(())
            }
            PotentialSpec::Table { path } => {
                if path.is_empty() {
                    return Err("table path must not be empty".into());
                }
                Ok(())
            }
        }
    }

    /// Builds the evaluatable model, reading the table file if needed.
    /// All failures here are configuration errors.
    pub fn build(&self) -> Result<PotentialModel, PipelineError> {
        let cfg = PipelineError::Config;
        match self {
            PotentialSpec::Zero => Ok(PotentialModel::Zero),
            PotentialSpec::Soliton { c, a, p } => SolitonParams::new(*c, *a, *p)
                .map(PotentialModel::Soliton)
                .map_err(|e| cfg(e.to_string())),
            PotentialSpec::Multisoliton { a, b, c } => {
                self.check().map_err(cfg)?;
                let a = a.to_matrix().map_err(cfg)?;
                MultisolitonParams::from_real(
                    a,
                    DVector::from_vec(b.clone()),
                    DVector::from_vec(c.clone()),
                )
                .map(PotentialModel::Multisoliton)
                .map_err(|e| PipelineError::Config(e.to_string()))
            }
            PotentialSpec::Table { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| PipelineError::Config(format!("table {path}: {e}")))?;
                parse_table(&text)
                    .map(PotentialModel::Table)
                    .map_err(|e| PipelineError::Config(format!("table {path}: {e}")))
            }
        }
    }
}

/// Parses two-column `x u` text; blank lines and `#` comments are skipped.
fn parse_table(text: &str) -> Result<SampledTable, String> {
    let mut xs = Vec::new();
    let mut us = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut cols = body.split_whitespace();
        let parse = |field: Option<&str>| -> Result<f64, String> {
            field
                .ok_or_else(|| format!("line {}: expected two columns", lineno + 1))?
                .parse::<f64>()
                .map_err(|e| format!("line {}: {e}", lineno + 1))
        };
        xs.push(parse(cols.next())?);
        us.push(parse(cols.next())?);
        if cols.next().is_some() {
            return Err(format!("line {}: expected two columns", lineno + 1));
        }
    }
    SampledTable::new(xs, us).map_err(|e| e.to_string())
}

/// Exponential-sum fit settings. `stride = 0` means automatic: the fit uses
/// `2n` kernel samples spaced `stride` grid steps apart, with `stride` close
/// to `nx/n` and `n` shrunk when the grid cannot supply `2n` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PencilConfig {
    /// Hankel block size (the fit sees `2n` samples).
    pub n: usize,
    /// Sampling stride in grid steps; `0` = automatic.
    pub stride: usize,
    /// Relative singular-value cutoff for the model-order estimate.
    pub order_tol: f64,
    /// Relative clustering radius for repeated pencil eigenvalues.
    pub cluster_eps: f64,
}

impl Default for PencilConfig {
    fn default() -> Self {
        // The order cutoff sits in the measured gap between the smallest
        // true singular value of kernel data on the default sampling window
        // (>= 1.4e-5 of sigma_1 for the reference spectra) and the
        // quadrature-noise floor (< 1.2e-7 of sigma_1 for nx >= 200).
        PencilConfig { n: 25, stride: 0, order_tol: 1e-5, cluster_eps: 1e-6 }
    }
}

impl PencilConfig {
    fn options(&self) -> PencilOptions {
        PencilOptions { order_tol: self.order_tol, cluster_eps: self.cluster_eps }
    }
}

/// Equispaced spectral abscissas `lambda` for the scattering table.
/// `count = 1` evaluates at `min` alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid { min: -5.0, max: 5.0, count: 201 }
    }
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|k| self.min + k as f64 * step).collect()
    }
}

/// Which artifacts a front end should write (the driver itself only uses
/// `kernels`, to decide whether the solved triangles are kept in the
/// output).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitFlags {
    pub kernels: bool,
    pub omega: bool,
    pub spectral: bool,
    pub scattering: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        EmitFlags { kernels: false, omega: true, spectral: true, scattering: true }
    }
}

/// Everything one run needs. See the module docs for the JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    /// Half-width of the support interval `[-L, L]`.
    pub l: f64,
    /// Number of grid steps per half-interval (`h = L/nx`).
    pub nx: usize,
    pub pencil: PencilConfig,
    pub lambda: LambdaGrid,
    /// Output directory for front ends; unused by the driver itself.
    pub out: String,
    pub emit: EmitFlags,
    /// Warn when `|u0|` at the support edge exceeds this.
    pub truncation_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            potential: PotentialSpec::Zero,
            l: 15.0,
            nx: 600,
            pencil: PencilConfig::default(),
            lambda: LambdaGrid::default(),
            out: "out".into(),
            emit: EmitFlags::default(),
            truncation_tol: 1e-12,
        }
    }
}

impl RunConfig {
    /// Validates every invariant that can be checked without file access:
    /// `nx >= 2`, positive finite sizes and tolerances, a sane lambda grid,
    /// consistent potential dimensions, and a pencil window that fits the
    /// kernel support. All problems are reported at once.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut problems = Vec::new();
        if !(self.l.is_finite() && self.l > 0.0) {
            problems.push(format!("l must be positive and finite, got {}", self.l));
        }
        if self.nx < 2 {
            problems.push(format!("nx must be at least 2, got {}", self.nx));
        }
        if self.pencil.n < 2 {
            problems.push(format!("pencil.n must be at least 2, got {}", self.pencil.n));
        }
        for (name, value) in [
            ("pencil.order_tol", self.pencil.order_tol),
            ("pencil.cluster_eps", self.pencil.cluster_eps),
            ("truncation_tol", self.truncation_tol),
        ] {
            if !(value.is_finite() && value > 0.0) {
                problems.push(format!("{name} must be positive and finite, got {value}"));
            }
        }
        if self.pencil.stride > 0 && 2 * self.pencil.n * self.pencil.stride > 2 * self.nx {
            problems.push(format!(
                "pencil window exceeds the kernel support: need 2*n*stride <= 2*nx, \
                 got 2*{}*{} > {}",
                self.pencil.n,
                self.pencil.stride,
                2 * self.nx
            ));
        }
        if !(self.lambda.min.is_finite() && self.lambda.max.is_finite()) {
            problems.push("lambda bounds must be finite".into());
        } else if self.lambda.count == 0 {
            problems.push("lambda.count must be at least 1".into());
        } else if self.lambda.count > 1 && !(self.lambda.min < self.lambda.max) {
            problems.push(format!(
                "lambda needs min < max for count > 1, got [{}, {}]",
                self.lambda.min, self.lambda.max
            ));
        }
        if let Err(e) = self.potential.check() {
            problems.push(e);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Config(problems.join("; ")))
        }
    }

    /// Validates and returns the configuration with automatic values filled
    /// in (currently the pencil stride and, if the grid is small, the pencil
    /// block size). This resolved copy is what runs and what front ends echo
    /// next to their outputs.
    pub fn resolved(&self) -> Result<RunConfig, PipelineError> {
        self.validate()?;
        let mut r = self.clone();
        if r.pencil.stride == 0 {
            r.pencil.stride = (r.nx / r.pencil.n).max(1);
            let max_n = r.nx / r.pencil.stride;
            r.pencil.n = r.pencil.n.min(max_n);
        }
        debug_assert!(2 * r.pencil.n * r.pencil.stride <= 2 * r.nx);
        Ok(r)
    }
}

/// All artifacts of one run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// The resolved configuration the run used.
    pub config: RunConfig,
    /// The sampled potential.
    pub grid: PotentialGrid,
    /// Solved auxiliary triangles (`KBar`, `M`), kept only when
    /// `emit.kernels` is set (they dominate the memory footprint).
    pub kernels: Option<(KernelTriangle, KernelTriangle)>,
    pub omega_left: MarchenkoKernel,
    pub omega_right: MarchenkoKernel,
    /// Exponential-sum fit of the left kernel.
    pub left_model: ExponentialSumModel,
    /// Right-kernel coefficients refitted on the left model's nodes.
    pub right_model: ExponentialSumModel,
    pub spectral: SpectralData,
    /// One row per lambda grid point.
    pub scattering: Vec<ScatteringSample>,
    /// Non-fatal diagnostics from all stages, in stage order.
    pub warnings: Vec<String>,
}

/// Uniformly subsamples a Marchenko kernel into the series the fit sees:
/// `2n` values spaced `stride` grid steps apart. The left kernel is sampled
/// from its first index (abscissas `k*stride*h >= 0`). The right kernel is
/// sampled from index `stride` (abscissas `-(k+1)*stride*h < 0`): its
/// endpoint value is a violent cancellation of the exponential modes for
/// spectra with a wide norming-constant spread, so that single sample can
/// carry orders of magnitude more absolute quadrature error than the rest
/// of the series and would dominate the coefficient least squares.
fn subsample(
    kernel: &MarchenkoKernel,
    pencil: &PencilConfig,
    skip_first: bool,
) -> Result<SampleSeries, String> {
    let count = 2 * pencil.n;
    let offset = usize::from(skip_first);
    let need = (count - 1 + offset) * pencil.stride;
    if need >= kernel.len() {
        return Err(format!(
            "pencil window needs kernel index {need}, support ends at {}",
            kernel.len() - 1
        ));
    }
    let delta = pencil.stride as f64 * kernel.h();
    let alpha0 = if skip_first { -delta } else { 0.0 };
    let values: Vec<f64> =
        (0..count).map(|k| kernel.value((k + offset) * pencil.stride)).collect();
    SampleSeries::from_real(delta, alpha0, &values).map_err(|e| e.to_string())
}

/// Bound-state cross-check: relative misfit of the right kernel fitted on
/// the left bound states. Quadrature error keeps this small; a spectrum the
/// right kernel does not share would leave an order-one residual.
fn cross_validate(right_model: &ExponentialSumModel, right_series: &SampleSeries) -> Vec<String> {
    const RESIDUAL_TOL: f64 = 0.1;
    let norm = right_series.values().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let rel = right_model.residual / norm.max(1e-300);
    if rel > RESIDUAL_TOL {
        vec![format!(
            "bound-state cross-check: the right kernel is poorly explained by the left \
             bound states (relative misfit {rel:.3e})"
        )]
    } else {
        Vec::new()
    }
}

fn empty_spectral(with_right: bool) -> SpectralData {
    SpectralData {
        exponents: Vec::new(),
        bound_states: Vec::new(),
        multiplicities: Vec::new(),
        norming_left: Vec::new(),
        norming_right: with_right.then(Vec::new),
        warnings: Vec::new(),
    }
}

fn solve_both_triangles(
    grid: &PotentialGrid,
) -> (
    Result<KernelTriangle, crate::volterra::VolterraError>,
    Result<KernelTriangle, crate::volterra::VolterraError>,
) {
    #[cfg(feature = "parallel")]
    {
        rayon::join(
            || solve_auxiliary(grid, KernelKind::KBar),
            || solve_auxiliary(grid, KernelKind::M),
        )
    }
    #[cfg(not(feature = "parallel"))]
    {
        (solve_auxiliary(grid, KernelKind::KBar), solve_auxiliary(grid, KernelKind::M))
    }
}

/// Runs every stage on one configuration. Stage failures carry the stage
/// name (`potential`, `volterra`, `marchenko`, `pencil`, `scattering`);
/// anything wrong with the configuration itself (including an unreadable
/// table file) is a [`PipelineError::Config`].
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutput, PipelineError> {
    let config = config.resolved()?;
    let mut warnings = Vec::new();

    let model = config.potential.build()?;
    let grid = stage("potential", tabulate(&model, config.l, config.nx))?;
    if grid.truncation() > config.truncation_tol {
        warnings.push(format!(
            "potential magnitude {:.3e} at the support edge exceeds the truncation \
             tolerance {:.1e}; results assume compact support on [-L, L]",
            grid.truncation(),
            config.truncation_tol
        ));
    }

    let (kbar, m) = solve_both_triangles(&grid);
    let kbar = stage("volterra", kbar)?;
    let m = stage("volterra", m)?;

    let omega_left = stage("marchenko", recover_left(&kbar, &grid))?;
    let omega_right = stage("marchenko", recover_right(&m, &grid))?;

    let left_series = stage("pencil", subsample(&omega_left, &config.pencil, false))?;
    let right_series = stage("pencil", subsample(&omega_right, &config.pencil, true))?;
    let options = config.pencil.options();
    let left_model =
        stage("pencil", fit_exponential_sum(&left_series, config.pencil.n, &options))?;
    for w in &left_model.warnings {
        warnings.push(format!("left kernel fit: {w}"));
    }

    let (right_model, spectral) = if left_model.is_empty() {
        warnings.push(
            "left kernel is numerically zero; no bound states were recovered".to_string(),
        );
        // An empty right fit confirms the picture; a nonempty one is worth
        // a warning (asymmetric data should be impossible for real u0).
        let right_fit = fit_exponential_sum(&right_series, config.pencil.n, &options);
        let right_model = match right_fit {
            Ok(fit) if !fit.is_empty() => {
                warnings.push(format!(
                    "right kernel fit found {} term(s) although the left kernel is zero",
                    fit.terms.len()
                ));
                fit
            }
            Ok(fit) => fit,
            Err(e) => {
                warnings.push(format!("right kernel fit failed on zero-left data: {e}"));
                ExponentialSumModel {
                    delta: right_series.delta(),
                    alpha0: right_series.alpha0(),
                    terms: Vec::new(),
                    residual: 0.0,
                    condition: 1.0,
                    warnings: Vec::new(),
                }
            }
        };
        (right_model, empty_spectral(true))
    } else {
        let nodes: Vec<(C64, usize)> =
            left_model.terms.iter().map(|t| (t.node, t.multiplicity)).collect();
        let right_model = stage("pencil", recover_coefficients(&nodes, &right_series))?;
        for w in &right_model.warnings {
            warnings.push(format!("right kernel fit: {w}"));
        }
        warnings.extend(cross_validate(&right_model, &right_series));
        let spectral = stage("pencil", to_spectral_data(&left_model, Some(&right_model)))?;
        warnings.extend(spectral.warnings.iter().cloned());
        (right_model, spectral)
    };

    let evaluator = stage("scattering", ScatteringEvaluator::new(&grid, &kbar, &m))?;
    let scattering = stage("scattering", evaluator.eval_grid(&config.lambda.values()))?;

    let kernels = config.emit.kernels.then_some((kbar, m));
    Ok(PipelineOutput {
        config,
        grid,
        kernels,
        omega_left,
        omega_right,
        left_model,
        right_model,
        spectral,
        scattering,
        warnings,
    })
}

/// Analytic reference kernels available to convergence studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKernel {
    /// `c_fit * e^{-a*alpha}` with the amplitude fitted by least squares to
    /// a run at twice the finest requested grid (the decay rate is the
    /// soliton's `a` parameter).
    Soliton,
    /// The multisoliton closed form `c * e^{-alpha*A} * b`.
    Multisoliton,
}

/// One row of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    /// Grid parameter `nx` of this run.
    pub n: usize,
    /// Sup-norm relative error of the recovered left kernel.
    pub relative_error: f64,
    /// Previous error divided by this one (`None` on the first row).
    pub ratio: Option<f64>,
}

/// Recovers the left kernel at one grid size.
fn left_kernel_at(
    potential: &PotentialSpec,
    l: f64,
    nx: usize,
) -> Result<MarchenkoKernel, PipelineError> {
    let model = potential.build()?;
    let grid = stage("potential", tabulate(&model, l, nx))?;
    let kbar = stage("volterra", solve_auxiliary(&grid, KernelKind::KBar))?;
    stage("marchenko", recover_left(&kbar, &grid))
}

/// Least-squares amplitude of `amp * e^{-decay*alpha}` against the kernel.
fn fit_amplitude(kernel: &MarchenkoKernel, decay: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..kernel.len() {
        let e = (-decay * kernel.alpha(k)).exp();
        num += kernel.value(k) * e;
        den += e * e;
    }
    num / den
}

/// Runs the left-kernel recovery at every `nx` in `n_list` and reports the
/// sup-norm relative error against the chosen analytic reference, plus the
/// error ratio between consecutive rows (second-order collocation gives
/// ratios near 4 when `nx` doubles).
pub fn convergence_table(
    config: &RunConfig,
    n_list: &[usize],
    reference: ReferenceKernel,
) -> Result<Vec<ConvergenceRow>, PipelineError> {
    if n_list.is_empty() {
        return Err(PipelineError::Config("convergence needs at least one grid size".into()));
    }
    if let Some(&bad) = n_list.iter().find(|&&n| n < 2) {
        return Err(PipelineError::Config(format!("every nx must be at least 2, got {bad}")));
    }
    let config = RunConfig { nx: *n_list.iter().max().unwrap(), ..config.clone() };
    config.validate()?;

    let reference_fn: Box<dyn Fn(f64) -> f64> = match (reference, &config.potential) {
        (ReferenceKernel::Multisoliton, PotentialSpec::Multisoliton { .. }) => {
            let params = match config.potential.build()? {
                PotentialModel::Multisoliton(p) => p,
                _ => unreachable!("multisoliton spec builds a multisoliton model"),
            };
            Box::new(move |alpha: f64| {
                params.left_kernel(alpha).expect("kernel abscissas lie in the support")
            })
        }
        (ReferenceKernel::Soliton, PotentialSpec::Soliton { a, .. }) => {
            let decay = *a;
            let fine = left_kernel_at(&config.potential, config.l, 2 * config.nx)?;
            let amp = fit_amplitude(&fine, decay);
            Box::new(move |alpha: f64| amp * (-decay * alpha).exp())
        }
        (kind, _) => {
            return Err(PipelineError::Config(format!(
                "reference {kind:?} does not match the configured potential"
            )));
        }
    };

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(n_list.len());
    for &nx in n_list {
        let kernel = left_kernel_at(&config.potential, config.l, nx)?;
        let err = stage("marchenko", crate::marchenko::relative_error(&kernel, &reference_fn))?;
        let ratio = rows.last().map(|prev| prev.relative_error / err);
        rows.push(ConvergenceRow { n: nx, relative_error: err, ratio });
    }
    Ok(rows)
}
