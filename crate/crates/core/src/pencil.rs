//! Identification of monomial-exponential sums from equispaced samples.
//!
//! A kernel section sampled as `s_k = S(alpha0 + k*delta)` that is secretly a
//! finite sum `S = sum_j p_j(k) z_j^k` (with polynomial factors `p_j` of
//! degree `m_j - 1`) leaves its nodes `z_j` as generalized eigenvalues of the
//! pencil built from two shifted Hankel matrices of the samples.  This module
//! implements that identification: Hankel assembly, order estimation by
//! singular-value thresholding, the SVD-reduced pencil eigensolve, greedy
//! clustering of repeated nodes, and a least-squares coefficient recovery on
//! the Casorati (confluent Vandermonde) matrix.  A final step converts the
//! fitted model into spectral data: decay exponents `s_j = -ln(z_j)/delta`,
//! bound states `i*s_j`, and norming constants rescaled from the sample index
//! to the natural abscissa.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::C64;

/// Failures of the sample-fitting stage.
#[derive(Debug, Error)]
pub enum PencilError {
    /// The sample vector violates the even-length-at-least-4 contract.
    #[error("sample series needs an even number (>= 4) of values, got {len}")]
    BadSeriesLength { len: usize },
    /// Non-positive or non-finite sampling data.
    #[error("sample spacing must be positive and finite, got {delta}")]
    BadSpacing { delta: f64 },
    /// A sample (or the first abscissa) is NaN or infinite.
    #[error("non-finite sample data at index {index}")]
    NonFinite { index: usize },
    /// Requested Hankel block shape is not 1 <= m <= n.
    #[error("Hankel block {n}x{m} invalid: need 1 <= m <= n")]
    BadShape { n: usize, m: usize },
    /// The series is too short for the requested block or system.
    #[error("operation needs {needed} samples, series has {len}")]
    InsufficientSamples { needed: usize, len: usize },
    /// Order estimation window exceeds half the series length.
    #[error("order window n = {n} exceeds half the series length {len}")]
    BadWindow { n: usize, len: usize },
    /// The pencil matrix lost column rank; the order should be re-estimated.
    #[error(
        "pencil matrix is rank deficient (sigma_min/sigma_max = {ratio:.3e}); \
         re-estimate the model order"
    )]
    RankDeficient { ratio: f64 },
    /// The dense eigensolver did not converge.
    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,
    /// Coefficient recovery was asked to run without any nodes.
    #[error("coefficient recovery needs at least one node")]
    NoNodes,
    /// Spectral mapping was asked to run on a model with no terms.
    #[error("model has no terms to map to spectral data")]
    EmptyModel,
    /// The two models disagree on sampling spacing.
    #[error("left/right models use different spacings ({left} vs {right})")]
    MismatchedSpacing { left: f64, right: f64 },
    /// A left node has no matching right node (or multiplicities differ).
    #[error("no right-side node matches the left node {left} (nearest: {right})")]
    NodeMismatch { left: C64, right: C64 },
}

/// Equispaced samples `values[k] = S(alpha0 + k*delta)`.
///
/// The right-side kernel is sampled on descending abscissas; callers encode
/// that by interpreting index `k` as abscissa `alpha0 - k*delta` and saying so
/// when mapping coefficients (see [`to_spectral_data`]).  The spacing stored
/// here is always positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSeries {
    delta: f64,
    alpha0: f64,
    values: Vec<C64>,
}

impl SampleSeries {
    /// Wraps complex samples, checking the length/spacing invariants.
    pub fn new(delta: f64, alpha0: f64, values: Vec<C64>) -> Result<Self, PencilError> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(PencilError::BadSpacing { delta });
        }
        if !alpha0.is_finite() {
            return Err(PencilError::NonFinite { index: 0 });
        }
        if values.len() < 4 || values.len() % 2 != 0 {
            return Err(PencilError::BadSeriesLength { len: values.len() });
        }
        for (index, v) in values.iter().enumerate() {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(PencilError::NonFinite { index });
            }
        }
        Ok(Self { delta, alpha0, values })
    }

    /// Wraps real samples.
    pub fn from_real(delta: f64, alpha0: f64, values: &[f64]) -> Result<Self, PencilError> {
        Self::new(
            delta,
            alpha0,
            values.iter().map(|&v| C64::new(v, 0.0)).collect(),
        )
    }

    /// Number of samples (even, at least 4).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false for a constructed series; present for API completeness.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sampling spacing.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// First abscissa.
    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    /// Raw samples.
    pub fn values(&self) -> &[C64] {
        &self.values
    }

    fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// One node of a fitted model: `z`, its multiplicity `m`, and the `m`
/// coefficients of the polynomial factor in the sample index `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTerm {
    pub node: C64,
    pub multiplicity: usize,
    /// Coefficients `c_s` of `sum_s c_s k^s z^k`, `s = 0..multiplicity`.
    pub coefficients: Vec<C64>,
}

/// A fitted monomial-exponential sum together with fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialSumModel {
    /// Sampling spacing the fit was performed at.
    pub delta: f64,
    /// First abscissa of the fitted samples.
    pub alpha0: f64,
    /// Fitted terms, ordered by decreasing node modulus.
    pub terms: Vec<ModelTerm>,
    /// L2 norm of the misfit over all samples.
    pub residual: f64,
    /// Condition number of the coefficient least-squares system.
    pub condition: f64,
    /// Non-fatal diagnostics (ill conditioning, discarded terms, ...).
    pub warnings: Vec<String>,
}

impl ExponentialSumModel {
    /// Total order `M = sum of multiplicities`.
    pub fn order(&self) -> usize {
        self.terms.iter().map(|t| t.multiplicity).sum()
    }

    /// True when the model has no terms (all-zero input data).
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Evaluates the model at sample index `k`.
    pub fn evaluate_index(&self, k: usize) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for term in &self.terms {
            let zk = term.node.powu(k as u32);
            for (s, &c) in term.coefficients.iter().enumerate() {
                acc += c * monomial(k, s) * zk;
            }
        }
        acc
    }
}

/// Spectral data recovered from the kernel models: decay exponents, bound
/// states, and norming constants on the kernel's natural abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    /// Decay exponents `s_j = -ln(z_j)/delta`, `Re s_j > 0`.
    pub exponents: Vec<C64>,
    /// Bound states `i * s_j` (upper half plane).
    pub bound_states: Vec<C64>,
    /// Node multiplicities.
    pub multiplicities: Vec<usize>,
    /// Left norming constants per term, `multiplicity` entries each.
    pub norming_left: Vec<Vec<C64>>,
    /// Right norming constants, present when a right model was supplied.
    pub norming_right: Option<Vec<Vec<C64>>>,
    /// Non-fatal diagnostics (rejected non-decaying terms, ...).
    pub warnings: Vec<String>,
}

/// Tolerances of the fitting driver.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PencilOptions {
    /// Relative singular-value cutoff for the order estimate.
    pub order_tol: f64,
    /// Relative clustering radius for repeated eigenvalues.
    pub cluster_eps: f64,
}

impl Default for PencilOptions {
    fn default() -> Self {
        Self { order_tol: 1e-8, cluster_eps: 1e-6 }
    }
}

/// `k^s` with the `0^0 = 1` convention used by the Casorati columns.
fn monomial(k: usize, s: usize) -> f64 {
    if s == 0 { 1.0 } else { (k as f64).powi(s as i32) }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn factorial(s: usize) -> f64 {
    (1..=s).map(|i| i as f64).product()
}

/// Builds the two shifted Hankel blocks `S0[i][j] = s[i+j]`,
/// `S1[i][j] = s[i+j+1]` of shape `n x m`.
pub fn build_hankel(
    series: &SampleSeries,
    n: usize,
    m: usize,
) -> Result<(DMatrix<C64>, DMatrix<C64>), PencilError> {
    if m == 0 || m > n {
        return Err(PencilError::BadShape { n, m });
    }
    // The shifted block reaches index n + m - 1.
    if n + m > series.len() {
        return Err(PencilError::InsufficientSamples { needed: n + m, len: series.len() });
    }
    let v = series.values();
    let s0 = DMatrix::from_fn(n, m, |i, j| v[i + j]);
    let s1 = DMatrix::from_fn(n, m, |i, j| v[i + j + 1]);
    Ok((s0, s1))
}

/// Estimates the model order as the number of singular values of the square
/// `n x n` Hankel block exceeding `tol` times the largest one.  Series whose
/// samples all sit below an absolute floor of `1e-14` report order zero.
pub fn estimate_order(series: &SampleSeries, n: usize, tol: f64) -> Result<usize, PencilError> {
    if n == 0 || 2 * n > series.len() {
        return Err(PencilError::BadWindow { n, len: series.len() });
    }
    let scale = series.values()[..2 * n]
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.norm()));
    if scale < 1e-14 {
        return Ok(0);
    }
    let (s0, _) = build_hankel(series, n, n)?;
    let sv = s0.svd(false, false).singular_values;
    let top = sv[0];
    if top < 1e-14 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > tol * top).count())
}

/// Solves the Hankel pencil: with the thin SVD `S0 = U S V*`, the nodes are
/// the eigenvalues of `S^-1 U* S1 V`.  Fails when `S0` has lost column rank
/// (smallest over largest singular value below `1e-12`).
pub fn solve_pencil(s0: &DMatrix<C64>, s1: &DMatrix<C64>) -> Result<Vec<C64>, PencilError> {
    let (n, m) = s0.shape();
    if s1.shape() != (n, m) || m == 0 || m > n {
        return Err(PencilError::BadShape { n, m });
    }
    let svd = s0.clone().svd(true, true);
    let sv = &svd.singular_values;
    let ratio = sv[m - 1] / sv[0];
    if !(ratio >= 1e-12) {
        return Err(PencilError::RankDeficient { ratio });
    }
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let scale = DMatrix::from_diagonal(&DVector::from_iterator(
        m,
        sv.iter().map(|&s| C64::new(1.0 / s, 0.0)),
    ));
    let reduced = scale * u.adjoint() * s1 * v_t.adjoint();
    let eigs = reduced.eigenvalues().ok_or(PencilError::EigenFailure)?;
    Ok(eigs.iter().copied().collect())
}

/// Greedily clusters eigenvalues whose relative distance is below `eps`;
/// each cluster contributes its centroid as the node and its size as the
/// multiplicity.  Output is sorted by decreasing node modulus.
pub fn cluster_multiplicities(eigs: &[C64], eps: f64) -> Vec<(C64, usize)> {
    let eps = eps.max(0.0);
    let mut sorted: Vec<C64> = eigs.to_vec();
    sorted.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(a.arg().total_cmp(&b.arg()))
    });
    let mut sums: Vec<(C64, usize)> = Vec::new();
    for &z in &sorted {
        let mut placed = false;
        for (sum, count) in sums.iter_mut() {
            let mean = *sum / *count as f64;
            let scale = mean.norm().max(z.norm()).max(1e-30);
            if (z - mean).norm() <= eps * scale {
                *sum += z;
                *count += 1;
                placed = true;
                break;
            }
        }
        if !placed {
            sums.push((z, 1));
        }
    }
    let mut nodes: Vec<(C64, usize)> = sums
        .into_iter()
        .map(|(sum, count)| (sum / count as f64, count))
        .collect();
    nodes.sort_by(|a, b| {
        b.0.norm()
            .total_cmp(&a.0.norm())
            .then(a.0.arg().total_cmp(&b.0.arg()))
    });
    nodes
}

/// Solves the overdetermined Casorati system for the polynomial coefficients
/// of each node, in the least-squares sense, over all samples.  The column
/// for node `j` and power `s` holds `k^s z_j^k`, rows `k = 0..len`.
pub fn recover_coefficients(
    nodes: &[(C64, usize)],
    series: &SampleSeries,
) -> Result<ExponentialSumModel, PencilError> {
    if nodes.is_empty() {
        return Err(PencilError::NoNodes);
    }
    let order: usize = nodes.iter().map(|&(_, m)| m).sum();
    let rows = series.len();
    if rows < order {
        return Err(PencilError::InsufficientSamples { needed: order, len: rows });
    }
    let mut casorati = DMatrix::<C64>::zeros(rows, order);
    let mut col = 0;
    for &(z, mult) in nodes {
        let mut zk = C64::new(1.0, 0.0);
        for k in 0..rows {
            for s in 0..mult {
                casorati[(k, col + s)] = zk * monomial(k, s);
            }
            zk *= z;
        }
        col += mult;
    }
    let rhs = DVector::from_column_slice(series.values());
    let svd = casorati.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smallest = sv[order - 1];
    let condition = if smallest > 0.0 { sv[0] / smallest } else { f64::INFINITY };
    let solution = svd
        .solve(&rhs, sv[0] * 1e-15)
        .map_err(|_| PencilError::EigenFailure)?;
    let residual = (&casorati * &solution - &rhs).norm();

    let mut warnings = Vec::new();
    if condition > 1e12 {
        warnings.push(format!(
            "ill-conditioned coefficient system (condition {condition:.3e}); \
             coefficients may be inaccurate"
        ));
    }
    let mut terms = Vec::with_capacity(nodes.len());
    let mut off = 0;
    for &(node, multiplicity) in nodes {
        terms.push(ModelTerm {
            node,
            multiplicity,
            coefficients: solution.as_slice()[off..off + multiplicity].to_vec(),
        });
        off += multiplicity;
    }
    Ok(ExponentialSumModel {
        delta: series.delta(),
        alpha0: series.alpha0(),
        terms,
        residual,
        condition,
        warnings,
    })
}

/// Full fitting driver: order estimate on the `n x n` Hankel block, pencil
/// eigensolve on the `n x M` blocks, clustering, and coefficient recovery.
/// All-zero data yields an empty model rather than an error.
pub fn fit_exponential_sum(
    series: &SampleSeries,
    n: usize,
    options: &PencilOptions,
) -> Result<ExponentialSumModel, PencilError> {
    let order = estimate_order(series, n, options.order_tol)?;
    if order == 0 {
        return Ok(ExponentialSumModel {
            delta: series.delta(),
            alpha0: series.alpha0(),
            terms: Vec::new(),
            residual: series.l2_norm(),
            condition: 1.0,
            warnings: Vec::new(),
        });
    }
    let (s0, s1) = build_hankel(series, n, order)?;
    let eigs = solve_pencil(&s0, &s1)?;
    let nodes = cluster_multiplicities(&eigs, options.cluster_eps);
    recover_coefficients(&nodes, series)
}

/// Converts the polynomial-in-`k` coefficients of one term into norming
/// constants on the abscissa `alpha = alpha0 + sign*delta*k`: with
/// `S(alpha) = sum_s G_s alpha^s/s! * exp(-sign*s_j*alpha)`, returns the
/// `G_s`.  The substitution `k = sign*(alpha - alpha0)/delta` is expanded
/// binomially, which is exact.
fn norming_constants(term: &ModelTerm, s_j: C64, delta: f64, alpha0: f64, sign: f64) -> Vec<C64> {
    let mult = term.multiplicity;
    let mut out = Vec::with_capacity(mult);
    // exp factor from z^k = exp(-s_j * (alpha - alpha0) * sign^2 ...):
    // left (sign = +1): z^k = exp(-s_j (alpha - alpha0)) = e^{s_j a0} e^{-s_j a}
    // right (sign = -1): z^k = exp(-s_j (alpha0 - alpha)) = e^{-s_j a0} e^{s_j a}
    let shift = (s_j * (sign * alpha0)).exp();
    for s in 0..mult {
        let mut coeff = C64::new(0.0, 0.0);
        for (t, &c) in term.coefficients.iter().enumerate().skip(s) {
            // k^t = (sign*(alpha - alpha0)/delta)^t expands to alpha^s terms
            // with weight sign^t * binom(t,s) * (-alpha0)^(t-s) / delta^t;
            // sign^t * (-1)^(t-s) folds into the two factors below.
            let signed = if sign > 0.0 { -alpha0 } else { alpha0 };
            let sign_t = if sign > 0.0 { 1.0 } else { (-1.0f64).powi(s as i32) };
            coeff += c * binomial(t, s) * signed.powi((t - s) as i32) * sign_t
                / delta.powi(t as i32);
        }
        out.push(coeff * factorial(s) * shift);
    }
    out
}

/// Maps fitted kernel models to spectral data.  The left model is mandatory;
/// a right model, when supplied, must share the spacing and nodes (within a
/// relative `1e-6`) and contributes the right norming constants.  Terms whose
/// decay exponent has a non-positive real part are rejected with a warning.
pub fn to_spectral_data(
    left: &ExponentialSumModel,
    right: Option<&ExponentialSumModel>,
) -> Result<SpectralData, PencilError> {
    if left.terms.is_empty() {
        return Err(PencilError::EmptyModel);
    }
    if let Some(r) = right {
        if (r.delta - left.delta).abs() > 1e-12 * left.delta {
            return Err(PencilError::MismatchedSpacing { left: left.delta, right: r.delta });
        }
    }
    let delta = left.delta;
    let mut data = SpectralData {
        exponents: Vec::new(),
        bound_states: Vec::new(),
        multiplicities: Vec::new(),
        norming_left: Vec::new(),
        norming_right: right.map(|_| Vec::new()),
        warnings: Vec::new(),
    };
    for term in &left.terms {
        let s_j = -term.node.ln() / delta;
        if s_j.re <= 0.0 {
            data.warnings.push(format!(
                "discarded non-decaying term with node {} (exponent {})",
                term.node, s_j
            ));
            continue;
        }
        let right_term = match right {
            None => None,
            Some(r) => {
                let nearest = r
                    .terms
                    .iter()
                    .min_by(|a, b| {
                        (a.node - term.node).norm().total_cmp(&(b.node - term.node).norm())
                    })
                    .ok_or(PencilError::NodeMismatch {
                        left: term.node,
                        right: C64::new(f64::NAN, f64::NAN),
                    })?;
                let scale = term.node.norm().max(nearest.node.norm()).max(1e-30);
                if (nearest.node - term.node).norm() > 1e-6 * scale
                    || nearest.multiplicity != term.multiplicity
                {
                    return Err(PencilError::NodeMismatch {
                        left: term.node,
                        right: nearest.node,
                    });
                }
                Some(nearest)
            }
        };
        data.exponents.push(s_j);
        data.bound_states.push(C64::new(0.0, 1.0) * s_j);
        data.multiplicities.push(term.multiplicity);
        data.norming_left
            .push(norming_constants(term, s_j, delta, left.alpha0, 1.0));
        if let (Some(list), Some(rt)) = (data.norming_right.as_mut(), right_term) {
            let r = right.expect("right model present");
            list.push(norming_constants(rt, s_j, delta, r.alpha0, -1.0));
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real_series(delta: f64, alpha0: f64, values: Vec<f64>) -> SampleSeries {
        SampleSeries::from_real(delta, alpha0, &values).unwrap()
    }

    /// Samples of `sum_j c_j z_j^k` for `k = 0..count`.
    fn synth_simple(nodes: &[C64], coeffs: &[C64], count: usize) -> Vec<C64> {
        (0..count)
            .map(|k| {
                nodes
                    .iter()
                    .zip(coeffs)
                    .map(|(z, c)| c * z.powu(k as u32))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn hankel_blocks_match_direct_indexing() {
        let series = real_series(1.0, 0.0, vec![1.0, 0.5, 0.25, 0.125]);
        let (s0, s1) = build_hankel(&series, 2, 2).unwrap();
        assert_eq!(s0[(0, 0)].re, 1.0);
        assert_eq!(s0[(0, 1)].re, 0.5);
        assert_eq!(s0[(1, 0)].re, 0.5);
        assert_eq!(s0[(1, 1)].re, 0.25);
        assert_eq!(s1[(0, 0)].re, 0.5);
        assert_eq!(s1[(0, 1)].re, 0.25);
        assert_eq!(s1[(1, 0)].re, 0.25);
        assert_eq!(s1[(1, 1)].re, 0.125);
        assert!(matches!(
            build_hankel(&series, 3, 2),
            Err(PencilError::InsufficientSamples { needed: 5, len: 4 })
        ));
        assert!(matches!(
            build_hankel(&series, 1, 2),
            Err(PencilError::BadShape { .. })
        ));
    }

    #[test]
    fn zero_series_reports_order_zero_and_empty_model() {
        let series = real_series(0.5, 0.0, vec![0.0; 12]);
        assert_eq!(estimate_order(&series, 6, 1e-8).unwrap(), 0);
        let model = fit_exponential_sum(&series, 6, &PencilOptions::default()).unwrap();
        assert!(model.is_empty());
        assert_eq!(model.order(), 0);
        assert_eq!(model.residual, 0.0);
    }

    #[test]
    fn geometric_series_is_identified_exactly() {
        let values: Vec<f64> = (0..16).map(|k| 3.0 * 0.5f64.powi(k)).collect();
        let series = real_series(1.0, 0.0, values);
        assert_eq!(estimate_order(&series, 8, 1e-8).unwrap(), 1);
        let (s0, s1) = build_hankel(&series, 8, 1).unwrap();
        let eigs = solve_pencil(&s0, &s1).unwrap();
        assert_eq!(eigs.len(), 1);
        assert!((eigs[0] - C64::new(0.5, 0.0)).norm() < 1e-10);
        let model = recover_coefficients(&[(eigs[0], 1)], &series).unwrap();
        assert!((model.terms[0].coefficients[0] - C64::new(3.0, 0.0)).norm() < 1e-10);
        assert!(model.residual <= 1e-12);
        assert!(model.warnings.is_empty());
    }

    #[test]
    fn double_node_gets_multiplicity_two() {
        let values: Vec<f64> = (0..16).map(|k| (1.0 + k as f64) * 0.5f64.powi(k)).collect();
        let series = real_series(1.0, 0.0, values);
        assert_eq!(estimate_order(&series, 8, 1e-8).unwrap(), 2);
        let (s0, s1) = build_hankel(&series, 8, 2).unwrap();
        let eigs = solve_pencil(&s0, &s1).unwrap();
        // A defective eigenvalue splits at the square root of machine
        // precision; both computed values stay within the cluster radius.
        for e in &eigs {
            assert!((e - C64::new(0.5, 0.0)).norm() < 1e-6, "eig {e}");
        }
        let nodes = cluster_multiplicities(&eigs, 1e-6);
        assert_eq!(nodes.len(), 1);
        assert_eq!(nodes[0].1, 2);
        let model = recover_coefficients(&nodes, &series).unwrap();
        let c = &model.terms[0].coefficients;
        assert!((c[0] - C64::new(1.0, 0.0)).norm() < 1e-8);
        assert!((c[1] - C64::new(1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn clustering_merges_close_and_keeps_separated_eigenvalues() {
        let close = [C64::new(0.5, 0.0), C64::new(0.5000000001, 0.0)];
        let merged = cluster_multiplicities(&close, 1e-6);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].1, 2);
        assert!((merged[0].0.re - 0.50000000005).abs() < 1e-12);

        let apart = [C64::new(0.5, 0.0), C64::new(0.25, 0.0)];
        let kept = cluster_multiplicities(&apart, 1e-6);
        assert_eq!(kept.len(), 2);
        assert_eq!((kept[0].1, kept[1].1), (1, 1));
        assert!(kept[0].0.norm() > kept[1].0.norm(), "sorted by modulus");
    }

    #[test]
    fn four_term_sum_reproduces_its_construction() {
        // Sum of four decaying exponentials with rates 1..4 and amplitudes
        // (2, 2, -2, -2), sampled at spacing 1/4.
        let delta = 0.25;
        let rates = [1.0, 2.0, 3.0, 4.0];
        let amps = [2.0, 2.0, -2.0, -2.0];
        let values: Vec<f64> = (0..50)
            .map(|k| {
                rates
                    .iter()
                    .zip(&amps)
                    .map(|(a, c): (&f64, &f64)| c * (-a * delta * k as f64).exp())
                    .sum()
            })
            .collect();
        let series = real_series(delta, 0.0, values);
        assert_eq!(estimate_order(&series, 25, 1e-8).unwrap(), 4);

        let model = fit_exponential_sum(&series, 25, &PencilOptions::default()).unwrap();
        assert_eq!(model.order(), 4);
        assert_eq!(model.terms.len(), 4);
        for (term, (a, c)) in model.terms.iter().zip(rates.iter().zip(&amps)) {
            let want = (-a * delta).exp();
            assert!((term.node - C64::new(want, 0.0)).norm() < 1e-8, "node for rate {a}");
            assert!(
                (term.coefficients[0] - C64::new(*c, 0.0)).norm() < 1e-8,
                "amplitude for rate {a}"
            );
        }

        let data = to_spectral_data(&model, None).unwrap();
        for (j, (exp, bs)) in data.exponents.iter().zip(&data.bound_states).enumerate() {
            let a = rates[j];
            assert!((exp - C64::new(a, 0.0)).norm() < 1e-8);
            assert!((bs - C64::new(0.0, a)).norm() < 1e-8);
            assert!((data.norming_left[j][0] - C64::new(amps[j], 0.0)).norm() < 1e-8);
        }
        assert!(data.norming_right.is_none());
        assert!(data.warnings.is_empty());
    }

    #[test]
    fn six_nodes_with_a_complex_pair_are_recovered() {
        let nodes = [
            C64::new(0.9, 0.0),
            C64::new(-0.7, 0.0),
            C64::from_polar(0.55, 0.9),
            C64::from_polar(0.55, -0.9),
            C64::new(0.32, 0.0),
            C64::from_polar(0.18, 2.2),
        ];
        let coeffs = [
            C64::new(1.5, -0.4),
            C64::new(-0.8, 0.0),
            C64::new(0.6, 0.7),
            C64::new(0.6, -0.7),
            C64::new(2.0, 0.0),
            C64::new(-0.5, 1.0),
        ];
        let values = synth_simple(&nodes, &coeffs, 32);
        let norm = values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let series = SampleSeries::new(0.5, 0.0, values).unwrap();
        let model = fit_exponential_sum(&series, 16, &PencilOptions::default()).unwrap();
        assert_eq!(model.order(), 6);
        for (z, c) in nodes.iter().zip(&coeffs) {
            let term = model
                .terms
                .iter()
                .min_by(|a, b| (a.node - z).norm().total_cmp(&(b.node - z).norm()))
                .unwrap();
            assert!((term.node - z).norm() < 1e-8, "node {z}");
            assert!((term.coefficients[0] - c).norm() < 1e-8, "coefficient at {z}");
        }
        assert!(model.residual <= 1e-10 * norm);
    }

    #[test]
    fn dropping_the_first_sample_shifts_coefficients_by_one_node_power() {
        let nodes = [C64::new(0.85, 0.0), C64::new(0.6, 0.0), C64::new(0.35, 0.0)];
        let coeffs = [C64::new(1.0, 0.0), C64::new(-2.0, 0.0), C64::new(0.5, 0.0)];
        let delta = 0.4;
        let all = synth_simple(&nodes, &coeffs, 26);
        let series_a = SampleSeries::new(delta, 0.0, all[..24].to_vec()).unwrap();
        let series_b = SampleSeries::new(delta, delta, all[1..25].to_vec()).unwrap();
        let opts = PencilOptions::default();
        let model_a = fit_exponential_sum(&series_a, 12, &opts).unwrap();
        let model_b = fit_exponential_sum(&series_b, 12, &opts).unwrap();
        assert_eq!(model_a.order(), 3);
        assert_eq!(model_b.order(), 3);
        for (ta, tb) in model_a.terms.iter().zip(&model_b.terms) {
            assert!((ta.node - tb.node).norm() < 1e-8, "shift moved a node");
            let expected = ta.coefficients[0] * ta.node;
            let got = tb.coefficients[0];
            assert!(
                (got - expected).norm() < 1e-8 * expected.norm(),
                "coefficient should pick up one factor of the node"
            );
        }
        // The norming constants refer to the abscissa, not the index, so the
        // two fits must agree on them.
        let data_a = to_spectral_data(&model_a, None).unwrap();
        let data_b = to_spectral_data(&model_b, None).unwrap();
        for (ga, gb) in data_a.norming_left.iter().zip(&data_b.norming_left) {
            assert!((ga[0] - gb[0]).norm() < 1e-7 * ga[0].norm());
        }
    }

    #[test]
    fn offset_samples_recover_the_same_constants() {
        // Double node with known abscissa-space constants: the kernel section
        // (G0 + G1*a) e^(-1.3 a) sampled from a0 = 0.75 must map back to
        // (G0, G1) through the binomial re-expansion.
        let (g0, g1, rate) = (0.8, -0.5, 1.3);
        let (delta, alpha0) = (0.5, 0.75);
        let values: Vec<f64> = (0..24)
            .map(|k| {
                let a = alpha0 + delta * k as f64;
                (g0 + g1 * a) * (-rate * a).exp()
            })
            .collect();
        let series = real_series(delta, alpha0, values);
        let model = fit_exponential_sum(&series, 12, &PencilOptions::default()).unwrap();
        assert_eq!(model.order(), 2);
        assert_eq!(model.terms.len(), 1);
        let data = to_spectral_data(&model, None).unwrap();
        assert!((data.exponents[0] - C64::new(rate, 0.0)).norm() < 1e-7);
        let g = &data.norming_left[0];
        // G_s = s! * (coefficient of a^s), so G = (g0, 1! * g1).
        assert!((g[0] - C64::new(g0, 0.0)).norm() < 1e-7, "got {}", g[0]);
        assert!((g[1] - C64::new(g1, 0.0)).norm() < 1e-7, "got {}", g[1]);
    }

    #[test]
    fn growing_terms_are_rejected_with_a_warning() {
        let values: Vec<f64> = (0..12).map(|k| 1.25f64.powi(k)).collect();
        let series = real_series(1.0, 0.0, values);
        let model = fit_exponential_sum(&series, 6, &PencilOptions::default()).unwrap();
        assert_eq!(model.order(), 1);
        let data = to_spectral_data(&model, None).unwrap();
        assert!(data.exponents.is_empty());
        assert_eq!(data.warnings.len(), 1);
        assert!(data.warnings[0].contains("non-decaying"));
    }

    #[test]
    fn right_constants_come_from_matched_nodes() {
        let nodes = [C64::new(0.8, 0.0), C64::new(0.5, 0.0)];
        let left_c = [C64::new(2.0, 0.0), C64::new(-1.0, 0.0)];
        let right_c = [C64::new(0.7, 0.0), C64::new(1.1, 0.0)];
        let left =
            SampleSeries::new(1.0, 0.0, synth_simple(&nodes, &left_c, 16)).unwrap();
        let right =
            SampleSeries::new(1.0, 0.0, synth_simple(&nodes, &right_c, 16)).unwrap();
        let left_model = fit_exponential_sum(&left, 8, &PencilOptions::default()).unwrap();
        // The right model reuses the left nodes; only its coefficients are
        // solved for, so the node-match validation passes bitwise.
        let left_nodes: Vec<(C64, usize)> = left_model
            .terms
            .iter()
            .map(|t| (t.node, t.multiplicity))
            .collect();
        let right_model = recover_coefficients(&left_nodes, &right).unwrap();
        let data = to_spectral_data(&left_model, Some(&right_model)).unwrap();
        let gr = data.norming_right.as_ref().unwrap();
        assert!((data.norming_left[0][0] - left_c[0]).norm() < 1e-8);
        assert!((gr[0][0] - right_c[0]).norm() < 1e-8);
        assert!((gr[1][0] - right_c[1]).norm() < 1e-8);

        // A genuinely different right node must be refused.
        let mut detuned = right_model.clone();
        detuned.terms[0].node += C64::new(1e-3, 0.0);
        assert!(matches!(
            to_spectral_data(&left_model, Some(&detuned)),
            Err(PencilError::NodeMismatch { .. })
        ));
    }

    #[test]
    fn empty_model_cannot_be_mapped() {
        let series = real_series(1.0, 0.0, vec![0.0; 8]);
        let model = fit_exponential_sum(&series, 4, &PencilOptions::default()).unwrap();
        assert!(matches!(
            to_spectral_data(&model, None),
            Err(PencilError::EmptyModel)
        ));
    }
}
