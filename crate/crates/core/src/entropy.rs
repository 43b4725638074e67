//! Entropies, coherence quantifiers and the entropic identities of the
//! addition channel. All logarithms are natural.

use num_complex::Complex64;

use crate::channel::{check_alpha, classical_mix_raw, quantum_add_raw};
use crate::error::{Error, Result};
use crate::matcore::{
    commutator, hermitian_eig, hermitian_eigenvalues, matrix_log, max_abs, trace_norm,
    ComplexMatrix, DensityMatrix, DEFAULT_CLIP_EPS,
};
use crate::channel::dephase;

/// ρ-weight on the near-kernel of τ above which `S(ρ‖τ)` is declared infinite.
pub const SUPPORT_WEIGHT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyValue {
    /// Nats.
    pub value: f64,
    /// Eigenvalues below the clip threshold, treated as exact zeros.
    pub clip_events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelEntropyValue {
    /// Nats; `f64::INFINITY` when `support_violation` is set.
    pub value: f64,
    pub support_violation: bool,
    pub clip_events: usize,
}

impl RelEntropyValue {
    pub fn is_finite(&self) -> bool {
        !self.support_violation
    }
}

/// `Σ λ ln λ` over eigenvalues at or above `clip_eps`; the rest count as
/// `0 ln 0 = 0`.
pub(crate) fn neg_entropy_of_spectrum(eigs: &[f64], clip_eps: f64) -> (f64, usize) {
    let mut acc = 0.0;
    let mut clipped = 0;
    for &l in eigs {
        if l < clip_eps {
            clipped += 1;
        } else {
            acc += l * l.ln();
        }
    }
    (acc, clipped)
}

/// `-Σ λ ln λ` of an arbitrary Hermitian PSD operator (trace not assumed 1).
pub fn entropy_raw(m: &ComplexMatrix, clip_eps: f64) -> EntropyValue {
    let (neg, clip_events) = neg_entropy_of_spectrum(&hermitian_eigenvalues(m), clip_eps);
    EntropyValue {
        value: -neg,
        clip_events,
    }
}

pub fn von_neumann_entropy(rho: &DensityMatrix) -> EntropyValue {
    entropy_raw(rho.matrix(), DEFAULT_CLIP_EPS)
}

pub fn von_neumann_entropy_with(rho: &DensityMatrix, clip_eps: f64) -> EntropyValue {
    entropy_raw(rho.matrix(), clip_eps)
}

/// `tr[a (ln a - ln b)]` for Hermitian PSD operators of equal size.
///
/// Eigen-directions of `b` below `clip_eps` are dropped when `a` puts at most
/// [`SUPPORT_WEIGHT_TOL`] weight on them and make the result infinite
/// otherwise.
pub fn relative_entropy_raw(a: &ComplexMatrix, b: &ComplexMatrix, clip_eps: f64) -> Result<RelEntropyValue> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "relative entropy of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (a_term, mut clip_events) = neg_entropy_of_spectrum(&hermitian_eigenvalues(a), clip_eps);
    let eb = hermitian_eig(b)?;
    let mut cross = 0.0;
    for (j, &mu) in eb.eigenvalues.iter().enumerate() {
        let v = eb.eigenvectors.column(j);
        let weight = (v.adjoint() * a * v)[(0, 0)].re;
        if mu < clip_eps {
            clip_events += 1;
            if weight > SUPPORT_WEIGHT_TOL {
                return Ok(RelEntropyValue {
                    value: f64::INFINITY,
                    support_violation: true,
                    clip_events,
                });
            }
        } else {
            cross += weight * mu.ln();
        }
    }
    Ok(RelEntropyValue {
        value: a_term - cross,
        support_violation: false,
        clip_events,
    })
}

/// `S(ρ‖τ) = tr[ρ(ln ρ - ln τ)]`.
pub fn relative_entropy(rho: &DensityMatrix, tau: &DensityMatrix) -> Result<RelEntropyValue> {
    relative_entropy_raw(rho.matrix(), tau.matrix(), DEFAULT_CLIP_EPS)
}

/// `h(α) = -α ln α - (1-α) ln(1-α)`.
pub fn binary_entropy(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let term = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    Ok(term(alpha) + term(1.0 - alpha))
}

/// `e^{S(ρ)}`.
pub fn exp_entropy(rho: &DensityMatrix) -> f64 {
    von_neumann_entropy(rho).value.exp()
}

/// Relative entropy of coherence `S(Δρ) - S(ρ)`.
pub fn rel_entropy_coherence(rho: &DensityMatrix) -> f64 {
    let (diag_neg, _) = neg_entropy_of_spectrum(&rho.diagonal_probabilities(), DEFAULT_CLIP_EPS);
    let s_rho = von_neumann_entropy(rho).value;
    // Clamp rounding noise of a diagonal input; C_r is nonnegative.
    (-diag_neg - s_rho).max(0.0)
}

/// `Σ_{i≠j} |ρ_ij|`.
pub fn l1_coherence(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    let n = rho.dim();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += m[(i, j)].norm();
            }
        }
    }
    total
}

/// Both sides of `S(mix) = S(ρ⊞σ ‖ mix) + S(ρ⊞σ)` for one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseEpCheck {
    /// `|S(mix) - S(ρ⊞σ‖mix) - S(ρ⊞σ)|`; infinite if the relative entropy is.
    pub residual: f64,
    pub entropy_mixture: f64,
    pub entropy_added: f64,
    pub relative_entropy: f64,
    /// Clipped eigenvalues across the three evaluations. Nonzero means the
    /// mixture is (numerically) rank deficient.
    pub clip_events: usize,
    pub support_violation: bool,
}

pub fn reverse_ep_residual(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64) -> Result<ReverseEpCheck> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", rho.dim(), sigma.dim())));
    }
    check_alpha(alpha)?;
    let added = quantum_add_raw(rho.matrix(), sigma.matrix(), alpha);
    let mix = classical_mix_raw(rho.matrix(), sigma.matrix(), alpha);
    let s_mix = entropy_raw(&mix, DEFAULT_CLIP_EPS);
    let s_add = entropy_raw(&added, DEFAULT_CLIP_EPS);
    let rel = relative_entropy_raw(&added, &mix, DEFAULT_CLIP_EPS)?;
    Ok(ReverseEpCheck {
        residual: (s_mix.value - rel.value - s_add.value).abs(),
        entropy_mixture: s_mix.value,
        entropy_added: s_add.value,
        relative_entropy: rel.value,
        clip_events: s_mix.clip_events,
        support_violation: rel.support_violation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutatorTrace {
    /// `|tr([ρ,σ] ln(αρ + (1-α)σ))|`.
    pub value: f64,
    pub clip_events: usize,
}

/// The trace term the reverse equality needs to vanish.
pub fn commutator_trace_term(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64) -> Result<CommutatorTrace> {
    check_alpha(alpha)?;
    let comm = commutator(rho.matrix(), sigma.matrix())?;
    let log = matrix_log(&classical_mix_raw(rho.matrix(), sigma.matrix(), alpha), DEFAULT_CLIP_EPS)?;
    let tr: Complex64 = (comm * log.matrix).trace();
    Ok(CommutatorTrace {
        value: tr.norm(),
        clip_events: log.clip_events,
    })
}

/// Max entry of `[K,ρ] + ((1-α)/α)[K,σ]` with `K = ln(αρ + (1-α)σ)`.
///
/// The operator identity holds because `K` commutes with the mixture; the
/// harness reports this residual without asserting it.
pub fn log_commutation_residual(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Err(Error::OutOfRange("log commutation residual needs alpha > 0".into()));
    }
    let k = matrix_log(&classical_mix_raw(rho.matrix(), sigma.matrix(), alpha), DEFAULT_CLIP_EPS)?.matrix;
    let lhs = commutator(&k, rho.matrix())?;
    let rhs = commutator(&k, sigma.matrix())? * Complex64::new((1.0 - alpha) / alpha, 0.0);
    Ok(max_abs(&(lhs + rhs)))
}

/// `S(ρ‖τ) - ½‖ρ - τ‖₁²`; `+∞` on a support violation.
pub fn pinsker_margin(rho: &DensityMatrix, tau: &DensityMatrix) -> Result<f64> {
    let rel = relative_entropy(rho, tau)?;
    if rel.support_violation {
        return Ok(f64::INFINITY);
    }
    let dist = trace_norm(&(rho.matrix() - tau.matrix()));
    Ok(rel.value - 0.5 * dist * dist)
}

/// `S(Δρ)` where `Δ` dephases in the computational basis.
pub fn dephased_entropy(rho: &DensityMatrix) -> Result<f64> {
    Ok(von_neumann_entropy(&dephase(rho, None)?).value)
}
