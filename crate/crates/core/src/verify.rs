//! Named theorem suites over randomized ensembles.
//!
//! Each instance draws everything it needs from a ChaCha stream seeded by
//! `derive_seed(spec.seed, index)`, so any instance can be replayed from its
//! seed alone. Every check records a margin (positive is good) compared
//! against a per-theorem threshold; instances that hit a numerical edge case
//! (clipped logarithms, support violations, optimizer non-convergence) are
//! counted as flagged rather than failed.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    classical_mix_raw, lemma_commutation_residual, quantum_add_raw, random_io, random_sio,
    random_sio_shared_permutation,
};
use crate::cqa::{
    convexity_margin, cqa, cr_upper_bound, direct_sum_cqa, grid_resolution, l1_upper_bound,
    monotonicity_margin, pinsker_lower_bound, uncertainty_relation, Solver, SolverOptions,
};
use crate::entropy::{
    commutator_trace_term, entropy_raw, exp_entropy, log_commutation_residual, reverse_ep_residual,
    von_neumann_entropy,
};
use crate::error::{Error, Result};
use crate::io::MatrixRecord;
use crate::matcore::{
    commutator, derive_seed, pauli_x, pauli_z, random_hermitian, rng_from_seed, sample_density,
    trace_norm, ComplexMatrix, DensityMatrix, HermitianObservable, StateKind, DEFAULT_CLIP_EPS,
};

/// Strictness of the corollary is required above this commutator norm.
pub const STRICT_COMMUTATOR_NORM: f64 = 1e-3;
pub const STRICT_GAP: f64 = 1e-6;
/// Coherence (largest off-diagonal modulus) above which faithfulness demands
/// a positive value.
pub const FAITHFUL_OFFDIAG: f64 = 1e-2;
pub const FAITHFUL_POSITIVE: f64 = 1e-8;
pub const DIRECT_SUM_WEIGHTS: [f64; 3] = [0.3, 0.5, 0.7];
pub const GRID_DIRECT_SUM_TOL: f64 = 5e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    Epi,
    ReverseEp,
    Corollary,
    LemmaSio,
    Monotonicity,
    DirectSum,
    UpperBoundCr,
    UpperBoundL1,
    PinskerLower,
    Uncertainty,
    Faithfulness,
    Convexity,
}

impl TheoremId {
    pub const ALL: [TheoremId; 12] = [
        Self::Epi,
        Self::ReverseEp,
        Self::Corollary,
        Self::LemmaSio,
        Self::Monotonicity,
        Self::DirectSum,
        Self::UpperBoundCr,
        Self::UpperBoundL1,
        Self::PinskerLower,
        Self::Uncertainty,
        Self::Faithfulness,
        Self::Convexity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Epi => "epi",
            Self::ReverseEp => "reverse_ep",
            Self::Corollary => "corollary",
            Self::LemmaSio => "lemma_sio",
            Self::Monotonicity => "monotonicity",
            Self::DirectSum => "direct_sum",
            Self::UpperBoundCr => "upper_bound_cr",
            Self::UpperBoundL1 => "upper_bound_l1",
            Self::PinskerLower => "pinsker_lower",
            Self::Uncertainty => "uncertainty",
            Self::Faithfulness => "faithfulness",
            Self::Convexity => "convexity",
        }
    }

    /// The statement being checked and the meaning of its margin.
    pub fn claim(self) -> &'static str {
        match self {
            Self::Epi => "S(ρ⊞σ) ≥ αS(ρ) + (1-α)S(σ), and the same for e^S; margin = smaller slack",
            Self::ReverseEp => {
                "S(αρ+(1-α)σ) = S(ρ⊞σ ‖ αρ+(1-α)σ) + S(ρ⊞σ), with tr([ρ,σ] ln(αρ+(1-α)σ)) = 0; margin = -residual"
            }
            Self::Corollary => "S(ρ⊞σ) ≤ S(αρ+(1-α)σ), strict for noncommuting inputs; margin = entropy gap",
            Self::LemmaSio => "Λ(ρ⊞σ) = Λ(ρ)⊞Λ(σ) for strictly incoherent Λ and diagonal σ; margin = -residual",
            Self::Monotonicity => "C_α(Λ(ρ)) ≤ C_α(ρ) for incoherent Λ; margin = C_α(ρ) - C_α(Λ(ρ))",
            Self::DirectSum => {
                "C_α(pρ₁ ⊕ (1-p)ρ₂) = pC_α(ρ₁) + (1-p)C_α(ρ₂); margin = -residual"
            }
            Self::UpperBoundCr => "C_α(ρ) ≤ h(α)/√2 · √C_r(ρ); margin = bound - C_α",
            Self::UpperBoundL1 => "C_α(ρ) ≤ h(α)/√2 · √C_l1(ρ); margin = bound - C_α",
            Self::PinskerLower => "C_α(ρ) ≥ ½α(1-α)‖[ρ, σ*]‖₁² at the minimizer σ*; margin = C_α - bound",
            Self::Uncertainty => {
                "√C_α^A(ρ) + √C_α^B(ρ) ≥ κ‖[[σ^A,σ^B],ρ]‖₁; margin = lhs - rhs with κ = √(α(1-α))/(2√2)"
            }
            Self::Faithfulness => {
                "C_α(ρ) = 0 iff ρ is incoherent; margin = -C_α on diagonal states, C_α on coherent ones"
            }
            Self::Convexity => {
                "C_α(λρ₁+(1-λ)ρ₂) ≤ λC_α(ρ₁) + (1-λ)C_α(ρ₂); margin = right side - left side"
            }
        }
    }

    /// Whether instances run the CQA optimizer.
    pub fn uses_solver(self) -> bool {
        !matches!(self, Self::Epi | Self::ReverseEp | Self::Corollary | Self::LemmaSio)
    }

    /// Smallest passing margin for the given ensemble and solver.
    pub fn threshold(self, kind: StateKind, opts: &SolverOptions) -> f64 {
        match self {
            Self::Epi | Self::Corollary | Self::LemmaSio => -1e-9,
            Self::ReverseEp => -1e-8,
            Self::Monotonicity | Self::Convexity => -10.0 * opts.tol,
            Self::DirectSum => {
                if opts.solver == Solver::Grid {
                    -GRID_DIRECT_SUM_TOL
                } else {
                    -10.0 * opts.tol
                }
            }
            Self::UpperBoundCr | Self::UpperBoundL1 | Self::Uncertainty => -1e-6,
            Self::PinskerLower => -1e-8,
            Self::Faithfulness => {
                if kind == StateKind::Diagonal {
                    -1e-10
                } else {
                    FAITHFUL_POSITIVE
                }
            }
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownTheorem(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub dims: Vec<usize>,
    pub n_samples: usize,
    pub state_kind: StateKind,
    pub alpha_list: Vec<f64>,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(dims: Vec<usize>, n_samples: usize, state_kind: StateKind, alpha_list: Vec<f64>, seed: u64) -> Self {
        Self {
            dims,
            n_samples,
            state_kind,
            alpha_list,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidEnsemble("n_samples must be at least 1".into()));
        }
        if self.dims.is_empty() || self.alpha_list.is_empty() {
            return Err(Error::InvalidEnsemble("dims and alpha_list must be non-empty".into()));
        }
        if let Some(d) = self.dims.iter().find(|d| **d < 2) {
            return Err(Error::InvalidEnsemble(format!("dimension {d} < 2")));
        }
        if let Some(a) = self.alpha_list.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidEnsemble(format!("alpha {a} not in [0,1]")));
        }
        Ok(())
    }

    pub fn n_instances(&self) -> usize {
        self.dims.len() * self.alpha_list.len() * self.n_samples
    }

    /// Instance `index` in dims × alphas × samples order.
    pub fn instance(&self, theorem: TheoremId, index: usize) -> Instance {
        let per_dim = self.alpha_list.len() * self.n_samples;
        Instance {
            theorem,
            seed: derive_seed(self.seed, index as u64),
            dim: self.dims[index / per_dim],
            alpha: self.alpha_list[(index % per_dim) / self.n_samples],
            kind: self.state_kind,
        }
    }
}

/// Everything needed to reproduce one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub theorem: TheoremId,
    pub seed: u64,
    pub dim: usize,
    pub alpha: f64,
    pub kind: StateKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Flagged,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Flagged => "flagged",
        }
    }
}

/// Margin of one instance plus the intermediate quantities a replay shows.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub margin: f64,
    pub status: Status,
    /// Second margin reported alongside the first (the ½√(α(1−α))
    /// uncertainty margin).
    pub secondary: Option<f64>,
    pub notes: Vec<String>,
    pub quantities: BTreeMap<String, f64>,
    pub matrices: BTreeMap<String, ComplexMatrix>,
}

impl Evaluation {
    fn new(margin: f64) -> Self {
        Self {
            margin,
            status: Status::Pass,
            secondary: None,
            notes: Vec::new(),
            quantities: BTreeMap::new(),
            matrices: BTreeMap::new(),
        }
    }

    fn q(mut self, name: &str, value: f64) -> Self {
        self.quantities.insert(name.to_string(), value);
        self
    }

    fn m(mut self, name: &str, matrix: &ComplexMatrix) -> Self {
        self.matrices.insert(name.to_string(), matrix.clone());
        self
    }

    fn judge(mut self, threshold: f64, extra_fail: bool, flagged: bool) -> Self {
        self.status = if flagged {
            Status::Flagged
        } else if self.margin.is_nan() || self.margin < threshold || extra_fail {
            Status::Fail
        } else {
            Status::Pass
        };
        self
    }
}

fn draw_state(d: usize, kind: StateKind, rng: &mut ChaCha8Rng) -> Result<DensityMatrix> {
    sample_density(d, kind, rng)
}

fn entropic_pair(inst: &Instance, rng: &mut ChaCha8Rng) -> Result<(DensityMatrix, DensityMatrix, ComplexMatrix, ComplexMatrix)> {
    let rho = draw_state(inst.dim, inst.kind, rng)?;
    let sigma = draw_state(inst.dim, inst.kind, rng)?;
    let added = quantum_add_raw(rho.matrix(), sigma.matrix(), inst.alpha);
    let mix = classical_mix_raw(rho.matrix(), sigma.matrix(), inst.alpha);
    Ok((rho, sigma, added, mix))
}

/// Observables for the uncertainty suite: `σ_x`, `σ_z` on qubits, random
/// Hermitian pairs otherwise.
fn uncertainty_observables(d: usize, rng: &mut ChaCha8Rng) -> Result<(HermitianObservable, HermitianObservable)> {
    if d == 2 {
        Ok((HermitianObservable::new(pauli_x())?, HermitianObservable::new(pauli_z())?))
    } else {
        Ok((
            HermitianObservable::new(random_hermitian(d, rng))?,
            HermitianObservable::new(random_hermitian(d, rng))?,
        ))
    }
}

/// Evaluates one instance.
pub fn evaluate(inst: &Instance, opts: &SolverOptions) -> Result<Evaluation> {
    let mut rng = rng_from_seed(inst.seed);
    let (d, alpha) = (inst.dim, inst.alpha);
    let threshold = inst.theorem.threshold(inst.kind, opts);
    let clip = DEFAULT_CLIP_EPS;
    let eval = match inst.theorem {
        TheoremId::Epi => {
            let (rho, sigma, added, mix) = entropic_pair(inst, &mut rng)?;
            let (s_rho, s_sigma) = (von_neumann_entropy(&rho).value, von_neumann_entropy(&sigma).value);
            let s_add = entropy_raw(&added, clip).value;
            let linear = s_add - alpha * s_rho - (1.0 - alpha) * s_sigma;
            let power = s_add.exp() - alpha * exp_entropy(&rho) - (1.0 - alpha) * exp_entropy(&sigma);
            Evaluation::new(linear.min(power))
                .q("entropy_rho", s_rho)
                .q("entropy_sigma", s_sigma)
                .q("entropy_added", s_add)
                .q("entropy_mixture", entropy_raw(&mix, clip).value)
                .q("margin_entropy", linear)
                .q("margin_entropy_power", power)
                .m("rho", rho.matrix())
                .m("sigma", sigma.matrix())
                .m("added", &added)
                .m("mixture", &mix)
                .judge(threshold, false, false)
        }
        TheoremId::ReverseEp => {
            let (rho, sigma, added, mix) = entropic_pair(inst, &mut rng)?;
            let check = reverse_ep_residual(&rho, &sigma, alpha)?;
            let trace = commutator_trace_term(&rho, &sigma, alpha)?;
            let mut e = Evaluation::new(-check.residual)
                .q("residual", check.residual)
                .q("entropy_mixture", check.entropy_mixture)
                .q("entropy_added", check.entropy_added)
                .q("relative_entropy", check.relative_entropy)
                .q("commutator_trace_term", trace.value)
                .q("clip_events", (check.clip_events + trace.clip_events) as f64)
                .m("rho", rho.matrix())
                .m("sigma", sigma.matrix())
                .m("added", &added)
                .m("mixture", &mix);
            if alpha > 0.0 {
                e = e.q("log_commutation_residual", log_commutation_residual(&rho, &sigma, alpha)?);
            }
            let pathological = check.clip_events > 0 || trace.clip_events > 0 || check.support_violation;
            if pathological {
                e.notes.push("rank-deficient mixture: logarithm clipped".into());
            }
            e.judge(threshold, trace.value > 1e-9, pathological)
        }
        TheoremId::Corollary => {
            let (rho, sigma, added, mix) = entropic_pair(inst, &mut rng)?;
            let s_add = entropy_raw(&added, clip).value;
            let s_mix = entropy_raw(&mix, clip).value;
            let gap = s_mix - s_add;
            let comm_norm = trace_norm(&commutator(rho.matrix(), sigma.matrix())?);
            let strict_required = comm_norm > STRICT_COMMUTATOR_NORM && (0.1..=0.9).contains(&alpha);
            let mut e = Evaluation::new(gap)
                .q("entropy_added", s_add)
                .q("entropy_mixture", s_mix)
                .q("commutator_norm", comm_norm)
                .m("rho", rho.matrix())
                .m("sigma", sigma.matrix())
                .m("added", &added)
                .m("mixture", &mix);
            let not_strict = strict_required && gap <= STRICT_GAP;
            if not_strict {
                e.notes.push(format!("gap {gap:e} not above {STRICT_GAP:e}"));
            }
            e.judge(threshold, not_strict, false)
        }
        TheoremId::LemmaSio => {
            let rho = draw_state(d, inst.kind, &mut rng)?;
            let sigma = draw_state(d, StateKind::Diagonal, &mut rng)?;
            let n_kraus = rng.random_range(1..=d);
            let sio = random_sio(d, n_kraus, rng.random())?;
            let shared = random_sio_shared_permutation(d, n_kraus, rng.random())?;
            let io = random_io(d, rng.random())?;
            let residual = lemma_commutation_residual(&rho, &sigma, &sio, alpha)?;
            // recorded only: the single-permutation subclass and general IO
            let shared_residual = lemma_commutation_residual(&rho, &sigma, &shared, alpha)?;
            let io_residual = lemma_commutation_residual(&rho, &sigma, &io, alpha)?;
            Evaluation::new(-residual)
                .q("residual", residual)
                .q("shared_permutation_residual", shared_residual)
                .q("io_residual", io_residual)
                .q("n_kraus", n_kraus as f64)
                .m("rho", rho.matrix())
                .m("sigma", sigma.matrix())
                .judge(threshold, false, false)
        }
        TheoremId::Monotonicity => {
            let rho = draw_state(d, inst.kind, &mut rng)?;
            let n_kraus = rng.random_range(1..=d);
            let sio = random_sio(d, n_kraus, rng.random())?;
            let check = monotonicity_margin(&rho, &sio, alpha, opts)?;
            let out = sio.apply(&rho)?;
            Evaluation::new(check.margin)
                .q("cqa_input", check.before.value)
                .q("cqa_output", check.after.value)
                .m("rho", rho.matrix())
                .m("channel_output", out.matrix())
                .m("minimizer_input", &check.before.minimizer.to_matrix())
                .m("minimizer_output", &check.after.minimizer.to_matrix())
                .judge(threshold, false, !(check.before.converged && check.after.converged))
        }
        TheoremId::DirectSum => {
            let rho1 = draw_state(d, inst.kind, &mut rng)?;
            let rho2 = draw_state(d, inst.kind, &mut rng)?;
            let p = DIRECT_SUM_WEIGHTS[rng.random_range(0..DIRECT_SUM_WEIGHTS.len())];
            let rep = direct_sum_cqa(&rho1, &rho2, p, alpha, opts)?;
            let converged = rep.component_1.converged
                && rep.component_2.converged
                && rep.unrestricted.as_ref().is_none_or(|u| u.converged);
            let mut e = Evaluation::new(-rep.residual)
                .q("p", p)
                .q("residual", rep.residual)
                .q("joint", rep.joint_value)
                .q("block_minimum", rep.block.value)
                .q("cqa_1", rep.component_1.value)
                .q("cqa_2", rep.component_2.value)
                .m("rho1", rho1.matrix())
                .m("rho2", rho2.matrix());
            if let Some(u) = &rep.unrestricted {
                e = e.q("unrestricted_minimum", u.value);
            }
            e.judge(threshold, false, !converged)
        }
        TheoremId::UpperBoundCr | TheoremId::UpperBoundL1 | TheoremId::PinskerLower => {
            let rho = draw_state(d, inst.kind, &mut rng)?;
            let r = cqa(&rho, alpha, opts)?;
            let (margin, bound) = match inst.theorem {
                TheoremId::UpperBoundCr => {
                    let b = cr_upper_bound(&rho, alpha)?;
                    (b - r.value, b)
                }
                TheoremId::UpperBoundL1 => {
                    let b = l1_upper_bound(&rho, alpha)?;
                    (b - r.value, b)
                }
                _ => {
                    let b = pinsker_lower_bound(&rho, &r.minimizer, alpha)?;
                    (r.value - b, b)
                }
            };
            Evaluation::new(margin)
                .q("cqa", r.value)
                .q("bound", bound)
                .q("path_gap", r.path_gap)
                .m("rho", rho.matrix())
                .m("minimizer", &r.minimizer.to_matrix())
                .judge(threshold, false, !r.converged)
        }
        TheoremId::Uncertainty => {
            let rho = draw_state(d, inst.kind, &mut rng)?;
            let (a, b) = uncertainty_observables(d, &mut rng)?;
            if alpha == 0.0 || alpha == 1.0 {
                // both sides vanish at the endpoints
                let mut e = Evaluation::new(0.0).m("rho", rho.matrix());
                e.secondary = Some(0.0);
                e.judge(threshold, false, false)
            } else {
                let rep = uncertainty_relation(&rho, &a, &b, alpha, opts)?;
                let converged = rep.cqa_a.result.converged && rep.cqa_b.result.converged;
                let mut e = Evaluation::new(rep.margin_derived)
                    .q("lhs", rep.lhs)
                    .q("rhs_paper", rep.rhs_paper)
                    .q("rhs_derived", rep.rhs_derived)
                    .q("margin_paper", rep.margin_paper)
                    .q("cqa_a", rep.cqa_a.result.value)
                    .q("cqa_b", rep.cqa_b.result.value)
                    .m("rho", rho.matrix())
                    .m("observable_a", a.matrix())
                    .m("observable_b", b.matrix())
                    .m("sigma_a", &rep.sigma_a)
                    .m("sigma_b", &rep.sigma_b);
                e.secondary = Some(rep.margin_paper);
                if rep.cqa_a.degenerate_spectrum || rep.cqa_b.degenerate_spectrum {
                    e.notes.push("degenerate observable spectrum".into());
                }
                e.judge(threshold, false, !converged)
            }
        }
        TheoremId::Faithfulness => {
            let rho = draw_state(d, inst.kind, &mut rng)?;
            let r = cqa(&rho, alpha, opts)?;
            let coherence = rho.max_off_diagonal();
            let e = Evaluation::new(if inst.kind == StateKind::Diagonal { -r.value } else { r.value })
                .q("cqa", r.value)
                .q("max_off_diagonal", coherence)
                .m("rho", rho.matrix())
                .m("minimizer", &r.minimizer.to_matrix());
            if inst.kind == StateKind::Diagonal {
                e.judge(threshold, false, !r.converged)
            } else {
                // the converse direction only binds for coherent states and
                // a nondegenerate addition
                let binds = coherence > FAITHFUL_OFFDIAG && alpha > 0.0 && alpha < 1.0;
                let vanished = binds && r.value <= FAITHFUL_POSITIVE;
                e.judge(f64::NEG_INFINITY, vanished, !r.converged)
            }
        }
        TheoremId::Convexity => {
            let rho1 = draw_state(d, inst.kind, &mut rng)?;
            let rho2 = draw_state(d, inst.kind, &mut rng)?;
            let lambda: f64 = rng.random();
            let check = convexity_margin(&rho1, &rho2, lambda, alpha, opts)?;
            let converged = check.mixture.converged && check.component_1.converged && check.component_2.converged;
            Evaluation::new(check.margin)
                .q("lambda", lambda)
                .q("cqa_mixture", check.mixture.value)
                .q("cqa_1", check.component_1.value)
                .q("cqa_2", check.component_2.value)
                .m("rho1", rho1.matrix())
                .m("rho2", rho2.matrix())
                .judge(threshold, false, !converged)
        }
    };
    Ok(eval)
}

/// Per-instance CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub index: usize,
    pub instance_seed: u64,
    pub dim: usize,
    pub alpha: f64,
    pub margin: f64,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub secondary_margin: Option<f64>,
}

/// Summary of a margin column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub n_negative: usize,
}

impl MarginSummary {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count().max(1);
        Self {
            min: values.clone().fold(f64::INFINITY, f64::min),
            mean: values.clone().sum::<f64>() / n as f64,
            max: values.clone().fold(f64::NEG_INFINITY, f64::max),
            n_negative: values.filter(|v| *v < 0.0).count(),
        }
    }
}

/// The uncertainty suite's record of the ½√(α(1−α)) margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondaryReport {
    pub name: String,
    pub summary: MarginSummary,
    /// Instances with a negative secondary margin, i.e. where the stated
    /// constant would fail.
    pub n_violations: usize,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem_id: TheoremId,
    pub claim: String,
    pub ensemble: EnsembleSpec,
    pub solver: Solver,
    pub tol: f64,
    pub threshold: f64,
    pub n_pass: usize,
    pub n_fail: usize,
    pub n_flagged: usize,
    pub worst_margin: f64,
    pub worst_instance_seed: u64,
    pub margins: MarginSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub secondary: Option<SecondaryReport>,
    pub runtime_ms: u64,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.n_fail == 0
    }

    /// JSON with the runtime field removed; identical for identical specs.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("runtime_ms");
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {} worst_margin={:.16e} pass={} fail={} flagged={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.theorem_id,
            self.worst_margin,
            self.n_pass,
            self.n_fail,
            self.n_flagged
        )
    }
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub report: TheoremReport,
    pub instances: Vec<InstanceRecord>,
}

fn check_solver_support(theorem: TheoremId, spec: &EnsembleSpec, opts: &SolverOptions) -> Result<()> {
    if theorem.uses_solver() && opts.solver == Solver::Grid {
        for &d in &spec.dims {
            grid_resolution(d, opts.grid_step)?;
        }
    }
    Ok(())
}

/// Runs a suite on the global rayon pool.
pub fn run_suite(theorem: TheoremId, spec: &EnsembleSpec, opts: &SolverOptions) -> Result<TheoremReport> {
    Ok(run_suite_detailed(theorem, spec, opts, None)?.report)
}

/// Runs a suite, optionally on a dedicated pool of `workers` threads, and
/// keeps the per-instance records.
pub fn run_suite_detailed(
    theorem: TheoremId,
    spec: &EnsembleSpec,
    opts: &SolverOptions,
    workers: Option<usize>,
) -> Result<SuiteRun> {
    spec.validate()?;
    check_solver_support(theorem, spec, opts)?;
    let start = Instant::now();
    let work = || -> Result<Vec<InstanceRecord>> {
        (0..spec.n_instances())
            .into_par_iter()
            .map(|index| {
                let inst = spec.instance(theorem, index);
                let e = evaluate(&inst, opts)?;
                Ok(InstanceRecord {
                    index,
                    instance_seed: inst.seed,
                    dim: inst.dim,
                    alpha: inst.alpha,
                    margin: e.margin,
                    status: e.status,
                    secondary_margin: e.secondary,
                })
            })
            .collect()
    };
    let instances = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::OutOfRange(format!("worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let count = |s: Status| instances.iter().filter(|r| r.status == s).count();
    let worst = instances
        .iter()
        .min_by(|a, b| {
            let key = |r: &InstanceRecord| if r.margin.is_nan() { f64::NEG_INFINITY } else { r.margin };
            key(a).total_cmp(&key(b)).then(a.index.cmp(&b.index))
        })
        .expect("ensemble is non-empty");
    let secondary = (theorem == TheoremId::Uncertainty).then(|| {
        let summary = MarginSummary::of(instances.iter().filter_map(|r| r.secondary_margin));
        SecondaryReport {
            name: "margin_paper".into(),
            n_violations: summary.n_negative,
            statement: if summary.n_negative == 0 {
                "the constant ½√(α(1-α)) held on every instance".into()
            } else {
                format!("the constant ½√(α(1-α)) failed on {} instances", summary.n_negative)
            },
            summary,
        }
    });
    let report = TheoremReport {
        theorem_id: theorem,
        claim: theorem.claim().to_string(),
        ensemble: spec.clone(),
        solver: opts.solver,
        tol: opts.tol,
        threshold: theorem.threshold(spec.state_kind, opts),
        n_pass: count(Status::Pass),
        n_fail: count(Status::Fail),
        n_flagged: count(Status::Flagged),
        worst_margin: worst.margin,
        worst_instance_seed: worst.instance_seed,
        margins: MarginSummary::of(instances.iter().map(|r| r.margin)),
        secondary,
        runtime_ms: start.elapsed().as_millis() as u64,
    };
    Ok(SuiteRun { report, instances })
}

/// Writes per-instance margins as CSV with 17 significant digits.
pub fn write_instances_csv<W: Write>(mut w: W, records: &[InstanceRecord]) -> std::io::Result<()> {
    let secondary = records.iter().any(|r| r.secondary_margin.is_some());
    write!(w, "instance_seed,dim,alpha,margin,status")?;
    if secondary {
        write!(w, ",margin_paper")?;
    }
    writeln!(w)?;
    for r in records {
        write!(w, "{},{},{:.16e},{:.16e},{}", r.instance_seed, r.dim, r.alpha, r.margin, r.status.as_str())?;
        if secondary {
            match r.secondary_margin {
                Some(v) => write!(w, ",{v:.16e}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Full record of one instance for offline inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayDump {
    pub instance: Instance,
    pub margin: f64,
    pub status: Status,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub secondary_margin: Option<f64>,
    pub notes: Vec<String>,
    pub quantities: BTreeMap<String, f64>,
    pub matrices: BTreeMap<String, MatrixRecord>,
}

/// Re-evaluates one instance from its seed.
pub fn replay(inst: &Instance, opts: &SolverOptions) -> Result<ReplayDump> {
    if inst.dim < 2 || !(0.0..=1.0).contains(&inst.alpha) {
        return Err(Error::InvalidEnsemble(format!("dim {} alpha {}", inst.dim, inst.alpha)));
    }
    let e = evaluate(inst, opts)?;
    let matrices = e
        .matrices
        .iter()
        .map(|(k, m)| Ok((k.clone(), MatrixRecord::from_matrix(m)?)))
        .collect::<Result<_>>()?;
    Ok(ReplayDump {
        instance: *inst,
        margin: e.margin,
        status: e.status,
        threshold: inst.theorem.threshold(inst.kind, opts),
        secondary_margin: e.secondary,
        notes: e.notes,
        quantities: e.quantities,
        matrices,
    })
}

/// Finds the instance of `spec` with the given seed.
pub fn locate_instance(theorem: TheoremId, spec: &EnsembleSpec, instance_seed: u64) -> Option<Instance> {
    (0..spec.n_instances())
        .map(|i| spec.instance(theorem, i))
        .find(|inst| inst.seed == instance_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dims: Vec<usize>, n: usize, kind: StateKind, alphas: Vec<f64>) -> EnsembleSpec {
        EnsembleSpec::new(dims, n, kind, alphas, 7)
    }

    #[test]
    fn registry_is_exhaustive_and_round_trips() {
        let ids: Vec<&str> = TheoremId::ALL.iter().map(|t| t.as_str()).collect();
        assert_eq!(
            ids,
            [
                "epi",
                "reverse_ep",
                "corollary",
                "lemma_sio",
                "monotonicity",
                "direct_sum",
                "upper_bound_cr",
                "upper_bound_l1",
                "pinsker_lower",
                "uncertainty",
                "faithfulness",
                "convexity"
            ]
        );
        let mut claims = std::collections::BTreeSet::new();
        for t in TheoremId::ALL {
            assert_eq!(t.as_str().parse::<TheoremId>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.as_str()));
            assert!(claims.insert(t.claim()), "duplicate claim for {t}");
        }
        assert!(matches!("nosuch".parse::<TheoremId>(), Err(Error::UnknownTheorem(_))));
    }

    #[test]
    fn ensemble_validation() {
        assert!(spec(vec![2], 0, StateKind::PureHaar, vec![0.5]).validate().is_err());
        assert!(spec(vec![1], 1, StateKind::PureHaar, vec![0.5]).validate().is_err());
        assert!(spec(vec![2], 1, StateKind::PureHaar, vec![1.5]).validate().is_err());
        assert!(spec(vec![2], 1, StateKind::PureHaar, vec![]).validate().is_err());
    }

    #[test]
    fn instance_layout() {
        let s = spec(vec![2, 3], 4, StateKind::GinibreMixed, vec![0.25, 0.75]);
        assert_eq!(s.n_instances(), 16);
        let i = s.instance(TheoremId::Epi, 13);
        assert_eq!((i.dim, i.alpha), (3, 0.75));
        assert_eq!(i.seed, derive_seed(7, 13));
        let seeds: std::collections::HashSet<u64> = (0..16).map(|k| s.instance(TheoremId::Epi, k).seed).collect();
        assert_eq!(seeds.len(), 16);
    }

    #[test]
    fn counts_add_up_and_reports_are_deterministic() {
        let s = spec(vec![2, 3], 5, StateKind::GinibreMixed, vec![0.3, 0.6]);
        for t in [TheoremId::Epi, TheoremId::ReverseEp, TheoremId::Corollary, TheoremId::LemmaSio] {
            let a = run_suite(t, &s, &SolverOptions::default()).unwrap();
            let b = run_suite(t, &s, &SolverOptions::default()).unwrap();
            assert_eq!(a.n_pass + a.n_fail + a.n_flagged, s.n_instances());
            assert_eq!(a.canonical_json(), b.canonical_json());
            if t != TheoremId::LemmaSio {
                assert!(a.passed(), "{}", a.summary_line());
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = spec(vec![2], 6, StateKind::PureHaar, vec![0.5]);
        let opts = SolverOptions::new(Solver::NelderMead);
        let one = run_suite_detailed(TheoremId::UpperBoundCr, &s, &opts, Some(1)).unwrap();
        let two = run_suite_detailed(TheoremId::UpperBoundCr, &s, &opts, Some(2)).unwrap();
        assert_eq!(one.instances, two.instances);
        assert_eq!(one.report.canonical_json(), two.report.canonical_json());
    }

    #[test]
    fn corollary_on_diagonal_states_is_exact() {
        let s = spec(vec![2, 3, 4], 20, StateKind::Diagonal, vec![0.2, 0.5]);
        let run = run_suite_detailed(TheoremId::Corollary, &s, &SolverOptions::default(), None).unwrap();
        assert!(run.instances.iter().all(|r| r.margin.abs() <= 1e-12));
    }

    #[test]
    fn reverse_ep_flags_rank_deficient_mixtures() {
        let s = spec(vec![4], 5, StateKind::PureHaar, vec![0.5]);
        let rep = run_suite(TheoremId::ReverseEp, &s, &SolverOptions::default()).unwrap();
        assert_eq!(rep.n_flagged, 5);
    }

    #[test]
    fn replay_reproduces_worst_margin() {
        let s = spec(vec![2, 3], 10, StateKind::GinibreMixed, vec![0.4]);
        let rep = run_suite(TheoremId::Epi, &s, &SolverOptions::default()).unwrap();
        let inst = locate_instance(TheoremId::Epi, &s, rep.worst_instance_seed).unwrap();
        let dump = replay(&inst, &SolverOptions::default()).unwrap();
        assert_eq!(dump.margin, rep.worst_margin);
        for key in ["rho", "sigma", "added", "mixture"] {
            assert!(dump.matrices.contains_key(key));
        }
        for key in ["entropy_added", "entropy_mixture"] {
            assert!(dump.quantities.contains_key(key));
        }
    }

    #[test]
    fn grid_dimension_limits_are_errors() {
        let s = spec(vec![5], 1, StateKind::PureHaar, vec![0.5]);
        let err = run_suite(TheoremId::UpperBoundCr, &s, &SolverOptions::grid(1e-3));
        assert!(matches!(err, Err(Error::UnsupportedSolver(_))));
    }

    #[test]
    fn csv_format() {
        let recs = vec![InstanceRecord {
            index: 0,
            instance_seed: 42,
            dim: 2,
            alpha: 0.5,
            margin: -1.0 / 3.0,
            status: Status::Pass,
            secondary_margin: None,
        }];
        let mut out = Vec::new();
        write_instances_csv(&mut out, &recs).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("instance_seed,dim,alpha,margin,status"));
        let row = lines.next().unwrap();
        assert_eq!(row, "42,2,5.0000000000000000e-1,-3.3333333333333331e-1,pass");
        let margin: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(margin, -1.0 / 3.0);
    }

    #[test]
    fn uncertainty_report_carries_both_margins() {
        let s = spec(vec![2], 4, StateKind::PureHaar, vec![0.5]);
        let rep = run_suite(TheoremId::Uncertainty, &s, &SolverOptions::grid(1e-3)).unwrap();
        let sec = rep.secondary.expect("secondary margins recorded");
        assert_eq!(sec.name, "margin_paper");
        assert!(rep.margins.min.is_finite() && sec.summary.min.is_finite());
    }
}
