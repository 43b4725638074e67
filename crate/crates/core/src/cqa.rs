//! The coherence of quantum addition,
//!
//! `C_α(ρ) = min_{σ diagonal} S(ρ ⊞_α σ ‖ αρ + (1-α)σ)`,
//!
//! evaluated by minimizing over the probability simplex that parametrizes
//! diagonal `σ`. Three solvers are available: an exhaustive lattice
//! ([`Solver::Grid`], the reference), Nelder–Mead on softmax logits, and
//! multistart Nelder–Mead. Every solver also evaluates two anchor points,
//! the uniform distribution and the diagonal of `ρ` itself; the latter is
//! the point the `C_r` upper bound is built on.
//!
//! Inside the optimizer the objective is evaluated as the entropy
//! difference `S(mix) - S(ρ⊞σ)`, which needs eigenvalues only. The relative
//! entropy itself is recomputed at the reported minimizer and the gap
//! between the two routes is returned as a diagnostic.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{check_alpha, classical_mix_raw, quantum_add_raw, IncoherentChannel};
use crate::entropy::{
    binary_entropy, l1_coherence, neg_entropy_of_spectrum, rel_entropy_coherence, relative_entropy_raw,
};
use crate::error::{Error, Result};
use crate::matcore::{
    commutator, derive_seed, direct_sum, hermitian_eig, hermitian_eigenvalues, random_simplex_point,
    real_diagonal, rng_from_seed, trace_norm, ComplexMatrix, DensityMatrix, HermitianObservable,
    DEFAULT_CLIP_EPS,
};

pub const DEFAULT_TOL: f64 = 1e-6;
/// Candidates within this of the best value count as ties.
pub const DEFAULT_TIE_TOL: f64 = 1e-12;
pub const DEFAULT_STARTS: usize = 20;
/// Upper limit on lattice points for the grid solver.
pub const GRID_POINT_LIMIT: u64 = 2_000_000;
pub const MAX_GRID_DIM: usize = 16;
/// Eigenvalue gap below which an observable's eigenbasis is not unique.
pub const DEGENERACY_TOL: f64 = 1e-8;

const SIMPLEX_SUM_TOL: f64 = 1e-12;
const DISTINCT_TOL: f64 = 1e-9;
const LOGIT_FLOOR: f64 = 1e-12;

/// A point of the probability simplex; the diagonal of an incoherent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    weights: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidProbability("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidProbability(format!("weight {w} is negative or not finite")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(Error::InvalidProbability(format!("weights sum to {total}")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(d: usize) -> Self {
        Self {
            weights: vec![1.0 / d as f64; d],
        }
    }

    /// Softmax of `(logits, 0)`: `d - 1` free coordinates, last logit pinned.
    pub fn from_logits(logits: &[f64]) -> Self {
        let top = logits.iter().copied().fold(0.0f64, f64::max);
        let mut weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        weights.push((-top).exp());
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { weights }
    }

    /// Inverse of [`from_logits`](Self::from_logits); zero weights are floored
    /// at `1e-12`.
    pub fn logits(&self) -> Vec<f64> {
        let last = self.weights.last().copied().unwrap_or(1.0).max(LOGIT_FLOOR).ln();
        self.weights[..self.weights.len() - 1]
            .iter()
            .map(|w| w.max(LOGIT_FLOOR).ln() - last)
            .collect()
    }

    /// Rescales nonnegative raw weights onto the simplex.
    fn normalized(mut raw: Vec<f64>) -> Self {
        raw.iter_mut().for_each(|w| *w = w.max(0.0));
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            raw.iter_mut().for_each(|w| *w /= total);
            Self { weights: raw }
        } else {
            Self::uniform(raw.len())
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        real_diagonal(&self.weights)
    }

    pub fn to_state(&self) -> Result<DensityMatrix> {
        DensityMatrix::diagonal(&self.weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Grid,
    NelderMead,
    Multistart,
}

impl Solver {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Grid => "grid",
            Self::NelderMead => "nelder_mead",
            Self::Multistart => "multistart",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Self::Grid),
            "nm" | "nelder_mead" | "nelder-mead" => Ok(Self::NelderMead),
            "multistart" => Ok(Self::Multistart),
            other => Err(Error::UnsupportedSolver(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub solver: Solver,
    /// Nelder–Mead stops once the objective spread over the simplex is at
    /// most `tol`.
    pub tol: f64,
    /// Lattice spacing for [`Solver::Grid`]; `None` picks a per-dimension
    /// default (see [`default_grid_step`]).
    pub grid_step: Option<f64>,
    pub n_starts: usize,
    /// Objective evaluations per Nelder–Mead run; 0 means `1000·d`.
    pub max_evals: usize,
    /// Seed for the random multistart points.
    pub seed: u64,
    pub tie_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            solver: Solver::NelderMead,
            tol: DEFAULT_TOL,
            grid_step: None,
            n_starts: DEFAULT_STARTS,
            max_evals: 0,
            seed: 0,
            tie_tol: DEFAULT_TIE_TOL,
        }
    }
}

impl SolverOptions {
    pub fn new(solver: Solver) -> Self {
        Self {
            solver,
            ..Self::default()
        }
    }

    pub fn grid(step: f64) -> Self {
        Self {
            solver: Solver::Grid,
            grid_step: Some(step),
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_grid_step(mut self, step: Option<f64>) -> Self {
        self.grid_step = step;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::UnsupportedSolver(format!("tolerance {} must be positive", self.tol)));
        }
        if self.solver == Solver::Multistart && self.n_starts < 2 {
            return Err(Error::UnsupportedSolver("multistart needs at least 2 starts".into()));
        }
        Ok(())
    }
}

/// Default lattice spacing per simplex dimension.
pub fn default_grid_step(d: usize) -> f64 {
    match d {
        0..=2 => 1e-3,
        3 => 5e-3,
        4 => 2e-2,
        5 => 5e-2,
        _ => 0.1,
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Lattice resolution `n` (points are `k/n`) and point count for a
/// `d`-outcome simplex.
pub fn grid_resolution(d: usize, step: Option<f64>) -> Result<(u32, u64)> {
    if d > MAX_GRID_DIM {
        return Err(Error::UnsupportedSolver(format!(
            "grid solver supports d <= {MAX_GRID_DIM}, got {d}"
        )));
    }
    let step = step.unwrap_or_else(|| default_grid_step(d));
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::UnsupportedSolver(format!("grid step {step} not in (0,1]")));
    }
    let n = (1.0 / step).round().max(1.0);
    if n > u32::MAX as f64 {
        return Err(Error::UnsupportedSolver(format!("grid step {step} too small")));
    }
    let n = n as u32;
    let count = binomial(n as u64 + d as u64 - 1, d as u64 - 1);
    if count > GRID_POINT_LIMIT {
        return Err(Error::UnsupportedSolver(format!(
            "grid with step {step} on a {d}-outcome simplex has {count} points (limit {GRID_POINT_LIMIT})"
        )));
    }
    Ok((n, count))
}

/// Calls `f` on every composition of `n` into `d` nonnegative parts, in
/// lexicographic order.
fn for_each_composition(n: u32, d: usize, mut f: impl FnMut(&[u32])) {
    let mut parts = vec![0u32; d];
    fn rec(parts: &mut [u32], idx: usize, left: u32, f: &mut dyn FnMut(&[u32])) {
        if idx + 1 == parts.len() {
            parts[idx] = left;
            f(parts);
            return;
        }
        for k in 0..=left {
            parts[idx] = k;
            rec(parts, idx + 1, left - k, f);
        }
    }
    if d == 0 {
        return;
    }
    rec(&mut parts, 0, n, &mut f);
}

/// `S(A⊞B ‖ αA + (1-α)B)` with `B = scale·diag(q)` and `A` an arbitrary
/// (possibly sub-normalized) PSD block of the same trace as `B`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AdditionDeficit<'a> {
    pub a: &'a ComplexMatrix,
    pub alpha: f64,
    pub scale: f64,
}

impl AdditionDeficit<'_> {
    fn sigma(&self, q: &[f64]) -> ComplexMatrix {
        real_diagonal(&q.iter().map(|w| w * self.scale).collect::<Vec<_>>())
    }

    /// Entropy-difference route.
    pub fn eval(&self, q: &[f64]) -> f64 {
        let b = self.sigma(q);
        let added = quantum_add_raw(self.a, &b, self.alpha);
        let mix = classical_mix_raw(self.a, &b, self.alpha);
        let (x, _) = neg_entropy_of_spectrum(&hermitian_eigenvalues(&added), DEFAULT_CLIP_EPS);
        let (y, _) = neg_entropy_of_spectrum(&hermitian_eigenvalues(&mix), DEFAULT_CLIP_EPS);
        x - y
    }

    /// Relative-entropy route.
    pub fn eval_relative(&self, q: &[f64]) -> Result<crate::entropy::RelEntropyValue> {
        let b = self.sigma(q);
        relative_entropy_raw(
            &quantum_add_raw(self.a, &b, self.alpha),
            &classical_mix_raw(self.a, &b, self.alpha),
            DEFAULT_CLIP_EPS,
        )
    }
}

/// Candidate minimizers within `tie_tol` of the running best.
struct Candidates {
    tie_tol: f64,
    best: f64,
    items: Vec<(f64, Vec<f64>)>,
}

impl Candidates {
    fn new(tie_tol: f64) -> Self {
        Self {
            tie_tol,
            best: f64::INFINITY,
            items: Vec::new(),
        }
    }

    fn offer(&mut self, value: f64, q: &[f64]) {
        if !value.is_finite() || value > self.best + self.tie_tol {
            return;
        }
        if value < self.best {
            self.best = value;
            let cut = self.best + self.tie_tol;
            self.items.retain(|(v, _)| *v <= cut);
        }
        self.items.push((value, q.to_vec()));
    }

    /// Lexicographically largest weight vector among the ties, its value, and
    /// the number of distinct tied points.
    fn select(self) -> Option<(f64, Vec<f64>, usize)> {
        let lex = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        };
        let mut items = self.items;
        items.sort_by(|(_, a), (_, b)| lex(a, b));
        let multiplicity = if items.is_empty() {
            0
        } else {
            1 + items
                .windows(2)
                .filter(|w| w[0].1.iter().zip(&w[1].1).any(|(x, y)| (x - y).abs() > DISTINCT_TOL))
                .count()
        };
        items
            .pop()
            .map(|(v, q)| (v, q, multiplicity))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Downhill simplex with the standard coefficients (1, 2, ½, ½). Stops when
/// the spread of objective values over the simplex is at most `ftol`.
pub(crate) fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    ftol: f64,
    max_evals: usize,
) -> NelderMeadOutcome {
    let m = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if m == 0 {
        let v = eval(x0, &mut evals);
        return NelderMeadOutcome {
            x: vec![],
            f: v,
            evals,
            converged: true,
        };
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(m + 1);
    let f0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), f0));
    for i in 0..m {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[m].1 - simplex[0].1 <= ftol {
            converged = true;
            break;
        }
        if evals >= max_evals {
            break;
        }
        let centroid: Vec<f64> = (0..m)
            .map(|j| simplex[..m].iter().map(|(x, _)| x[j]).sum::<f64>() / m as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[m].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[m] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[m - 1].1 {
            simplex[m] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[m].1 {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < simplex[m].1.min(fr) {
            simplex[m] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&best) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            *v = eval(x, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    NelderMeadOutcome {
        x,
        f,
        evals,
        converged,
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub weights: Vec<f64>,
    pub value: f64,
    pub n_evals: usize,
    pub converged: bool,
    pub multiplicity: usize,
}

/// Minimizes `objective` over the `d`-outcome simplex with the configured
/// solver. `anchors` are always evaluated.
pub(crate) fn minimize_over_simplex(
    objective: &dyn Fn(&[f64]) -> f64,
    d: usize,
    opts: &SolverOptions,
    anchors: &[ProbabilityVector],
) -> Result<Minimum> {
    opts.validate()?;
    let mut cands = Candidates::new(opts.tie_tol);
    let mut n_evals = 0usize;
    for a in anchors {
        cands.offer(objective(a.weights()), a.weights());
        n_evals += 1;
    }
    let max_evals = if opts.max_evals == 0 { 1000 * d } else { opts.max_evals };
    let run_nm = |start: &ProbabilityVector, cands: &mut Candidates, n_evals: &mut usize| {
        let out = nelder_mead(
            |x| objective(ProbabilityVector::from_logits(x).weights()),
            &start.logits(),
            1.0,
            opts.tol,
            max_evals,
        );
        *n_evals += out.evals;
        let q = ProbabilityVector::from_logits(&out.x);
        cands.offer(out.f, q.weights());
        out.converged
    };
    let converged = match opts.solver {
        Solver::Grid => {
            let (n, _) = grid_resolution(d, opts.grid_step)?;
            let mut q = vec![0.0; d];
            for_each_composition(n, d, |parts| {
                for (w, &k) in q.iter_mut().zip(parts) {
                    *w = k as f64 / n as f64;
                }
                cands.offer(objective(&q), &q);
                n_evals += 1;
            });
            true
        }
        Solver::NelderMead => run_nm(&ProbabilityVector::uniform(d), &mut cands, &mut n_evals),
        Solver::Multistart => {
            let mut starts: Vec<ProbabilityVector> = anchors.to_vec();
            let mut k = 0u64;
            while starts.len() < opts.n_starts {
                let mut rng = rng_from_seed(derive_seed(opts.seed, k));
                starts.push(ProbabilityVector::normalized(random_simplex_point(d, &mut rng)));
                k += 1;
            }
            starts.truncate(opts.n_starts);
            let mut any = false;
            for s in &starts {
                any |= run_nm(s, &mut cands, &mut n_evals);
            }
            any
        }
    };
    let (value, weights, multiplicity) = cands
        .select()
        .ok_or_else(|| Error::UnsupportedSolver("objective produced no finite value".into()))?;
    Ok(Minimum {
        weights,
        value,
        n_evals,
        converged,
        multiplicity,
    })
}

/// Both evaluation routes of the CQA objective at one diagonal `σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    /// `S(ρ⊞σ ‖ αρ + (1-α)σ)`.
    pub relative_entropy_path: f64,
    /// `S(αρ + (1-α)σ) - S(ρ⊞σ)`.
    pub entropy_difference_path: f64,
    pub support_violation: bool,
}

impl ObjectiveValue {
    pub fn value(&self) -> f64 {
        self.entropy_difference_path
    }

    pub fn path_gap(&self) -> f64 {
        (self.relative_entropy_path - self.entropy_difference_path).abs()
    }
}

fn check_prob_dim(rho: &DensityMatrix, q: &ProbabilityVector) -> Result<()> {
    if rho.dim() == q.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{}-dim state with a {}-outcome distribution",
            rho.dim(),
            q.dim()
        )))
    }
}

pub fn cqa_objective(rho: &DensityMatrix, q: &ProbabilityVector, alpha: f64) -> Result<ObjectiveValue> {
    check_prob_dim(rho, q)?;
    check_alpha(alpha)?;
    let f = AdditionDeficit {
        a: rho.matrix(),
        alpha,
        scale: 1.0,
    };
    let rel = f.eval_relative(q.weights())?;
    Ok(ObjectiveValue {
        relative_entropy_path: rel.value,
        entropy_difference_path: f.eval(q.weights()),
        support_violation: rel.support_violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqaResult {
    /// Nats.
    pub value: f64,
    pub minimizer: ProbabilityVector,
    pub alpha: f64,
    pub solver: Solver,
    pub n_evals: usize,
    pub converged: bool,
    /// Distinct candidate minimizers within the tie tolerance.
    pub multiplicity: usize,
    /// `|relative-entropy route - entropy-difference route|` at the minimizer.
    pub path_gap: f64,
}

fn dephased_anchor(rho: &DensityMatrix) -> ProbabilityVector {
    ProbabilityVector::normalized(rho.diagonal_probabilities())
}

/// `C_α(ρ)`.
pub fn cqa(rho: &DensityMatrix, alpha: f64, opts: &SolverOptions) -> Result<CqaResult> {
    check_alpha(alpha)?;
    let d = rho.dim();
    let f = AdditionDeficit {
        a: rho.matrix(),
        alpha,
        scale: 1.0,
    };
    let anchors = [ProbabilityVector::uniform(d), dephased_anchor(rho)];
    let min = minimize_over_simplex(&|q: &[f64]| f.eval(q), d, opts, &anchors)?;
    let rel = f.eval_relative(&min.weights)?;
    let path_gap = if rel.support_violation {
        f64::INFINITY
    } else {
        (rel.value - min.value).abs()
    };
    Ok(CqaResult {
        value: min.value,
        minimizer: ProbabilityVector { weights: min.weights },
        alpha,
        solver: opts.solver,
        n_evals: min.n_evals,
        converged: min.converged,
        multiplicity: min.multiplicity,
        path_gap,
    })
}

/// Orthonormal eigenbasis of an observable as matrix columns, in ascending
/// eigenvalue order, with the largest-modulus component of each vector made
/// real and positive. The flag reports a degenerate spectrum.
pub fn eigenbasis(obs: &HermitianObservable) -> Result<(ComplexMatrix, bool)> {
    let eig = hermitian_eig(obs.matrix())?;
    let mut v = eig.eigenvectors;
    for j in 0..v.ncols() {
        let (_, pivot) = v.column(j).iter().enumerate().fold((0.0f64, Complex64::new(1.0, 0.0)), |acc, (_, z)| {
            if z.norm() > acc.0 {
                (z.norm(), *z)
            } else {
                acc
            }
        });
        let phase = pivot.conj() / pivot.norm();
        for i in 0..v.nrows() {
            v[(i, j)] *= phase;
        }
    }
    let scale = eig.eigenvalues.iter().map(|l| l.abs()).fold(1.0f64, f64::max);
    let degenerate = eig.eigenvalues.windows(2).any(|w| w[1] - w[0] < DEGENERACY_TOL * scale);
    Ok((v, degenerate))
}

#[derive(Debug, Clone)]
pub struct BasisCqa {
    /// Minimizer expressed in the observable's eigenbasis.
    pub result: CqaResult,
    /// Eigenvectors as columns.
    pub basis: ComplexMatrix,
    pub degenerate_spectrum: bool,
}

impl BasisCqa {
    /// The minimizing incoherent state rotated back to the computational basis.
    pub fn minimizer_state(&self) -> ComplexMatrix {
        &self.basis * self.result.minimizer.to_matrix() * self.basis.adjoint()
    }
}

/// CQA with coherence measured in the eigenbasis of `obs`.
pub fn cqa_in_basis(
    rho: &DensityMatrix,
    obs: &HermitianObservable,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<BasisCqa> {
    if obs.dim() != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{}-dim observable with a {}-dim state",
            obs.dim(),
            rho.dim()
        )));
    }
    let (basis, degenerate_spectrum) = eigenbasis(obs)?;
    let rotated = DensityMatrix::new(basis.adjoint() * rho.matrix() * &basis)?;
    Ok(BasisCqa {
        result: cqa(&rotated, alpha, opts)?,
        basis,
        degenerate_spectrum,
    })
}

/// `½α(1-α)‖[ρ, diag(q)]‖₁²`, the Pinsker lower bound on the objective at `q`.
pub fn pinsker_lower_bound(rho: &DensityMatrix, q: &ProbabilityVector, alpha: f64) -> Result<f64> {
    check_prob_dim(rho, q)?;
    check_alpha(alpha)?;
    let n = trace_norm(&commutator(rho.matrix(), &q.to_matrix())?);
    Ok(0.5 * alpha * (1.0 - alpha) * n * n)
}

/// `h(α)/√2 · √C_r(ρ)`.
pub fn cr_upper_bound(rho: &DensityMatrix, alpha: f64) -> Result<f64> {
    Ok(binary_entropy(alpha)? / std::f64::consts::SQRT_2 * rel_entropy_coherence(rho).sqrt())
}

/// `h(α)/√2 · √C_l1(ρ)`.
pub fn l1_upper_bound(rho: &DensityMatrix, alpha: f64) -> Result<f64> {
    Ok(binary_entropy(alpha)? / std::f64::consts::SQRT_2 * l1_coherence(rho).sqrt())
}

#[derive(Debug, Clone)]
pub struct UncertaintyReport {
    /// `√C_A + √C_B`.
    pub lhs: f64,
    /// `½√(α(1-α)) ‖[[σ^A,σ^B],ρ]‖₁`.
    pub rhs_paper: f64,
    /// `√(α(1-α))/(2√2) ‖[[σ^A,σ^B],ρ]‖₁`.
    pub rhs_derived: f64,
    pub margin_paper: f64,
    pub margin_derived: f64,
    pub nested_commutator_norm: f64,
    pub cqa_a: BasisCqa,
    pub cqa_b: BasisCqa,
    /// `σ^A`, `σ^B` in the computational basis.
    pub sigma_a: ComplexMatrix,
    pub sigma_b: ComplexMatrix,
}

impl UncertaintyReport {
    pub fn minimizer_a(&self) -> &ProbabilityVector {
        &self.cqa_a.result.minimizer
    }

    pub fn minimizer_b(&self) -> &ProbabilityVector {
        &self.cqa_b.result.minimizer
    }
}

pub fn uncertainty_relation(
    rho: &DensityMatrix,
    a: &HermitianObservable,
    b: &HermitianObservable,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<UncertaintyReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::OutOfRange(format!("uncertainty relation needs alpha in (0,1), got {alpha}")));
    }
    let cqa_a = cqa_in_basis(rho, a, alpha, opts)?;
    let cqa_b = cqa_in_basis(rho, b, alpha, opts)?;
    let sigma_a = cqa_a.minimizer_state();
    let sigma_b = cqa_b.minimizer_state();
    let nested = commutator(&commutator(&sigma_a, &sigma_b)?, rho.matrix())?;
    let norm = trace_norm(&nested);
    let coherent = (alpha * (1.0 - alpha)).sqrt();
    let rhs_paper = 0.5 * coherent * norm;
    let rhs_derived = coherent * norm / (2.0 * std::f64::consts::SQRT_2);
    let lhs = cqa_a.result.value.max(0.0).sqrt() + cqa_b.result.value.max(0.0).sqrt();
    Ok(UncertaintyReport {
        lhs,
        rhs_paper,
        rhs_derived,
        margin_paper: lhs - rhs_paper,
        margin_derived: lhs - rhs_derived,
        nested_commutator_norm: norm,
        cqa_a,
        cqa_b,
        sigma_a,
        sigma_b,
    })
}

/// Minimum over the block-diagonal family `σ = p·diag(q₁) ⊕ (1-p)·diag(q₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMinimum {
    pub value: f64,
    pub q1: ProbabilityVector,
    pub q2: ProbabilityVector,
    pub n_evals: usize,
}

#[derive(Debug, Clone)]
pub struct DirectSumReport {
    pub p: f64,
    pub alpha: f64,
    /// Minimization over the whole `(d₁+d₂)`-outcome simplex. `None` when the
    /// solver cannot handle that dimension.
    pub unrestricted: Option<CqaResult>,
    pub block: BlockMinimum,
    pub component_1: CqaResult,
    pub component_2: CqaResult,
    /// `min(unrestricted, block)`.
    pub joint_value: f64,
    /// `|joint - p·C(ρ₁) - (1-p)·C(ρ₂)|`.
    pub residual: f64,
}

impl DirectSumReport {
    /// `block - unrestricted`; positive when the unrestricted search finds a
    /// minimizer outside the block family.
    pub fn block_gap(&self) -> Option<f64> {
        self.unrestricted.as_ref().map(|u| self.block.value - u.value)
    }
}

fn block_minimum(
    rho: &DensityMatrix,
    weight: f64,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<(ProbabilityVector, f64, usize)> {
    let d = rho.dim();
    let scaled = rho.matrix() * Complex64::new(weight, 0.0);
    let f = AdditionDeficit {
        a: &scaled,
        alpha,
        scale: weight,
    };
    let anchors = [ProbabilityVector::uniform(d), dephased_anchor(rho)];
    let min = minimize_over_simplex(&|q: &[f64]| f.eval(q), d, opts, &anchors)?;
    Ok((ProbabilityVector { weights: min.weights }, min.value, min.n_evals))
}

/// CQA of `p·ρ₁ ⊕ (1-p)·ρ₂` next to `p·C(ρ₁) + (1-p)·C(ρ₂)`.
///
/// The block-family minimum separates into one minimization per block
/// because relative entropy is additive over direct sums.
pub fn direct_sum_cqa(
    rho1: &DensityMatrix,
    rho2: &DensityMatrix,
    p: f64,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<DirectSumReport> {
    check_alpha(alpha)?;
    let joint = direct_sum(rho1, rho2, p)?;
    let component_1 = cqa(rho1, alpha, opts)?;
    let component_2 = cqa(rho2, alpha, opts)?;

    let (q1, v1, e1) = block_minimum(rho1, p, alpha, opts)?;
    let (q2, v2, e2) = block_minimum(rho2, 1.0 - p, alpha, opts)?;
    let block = BlockMinimum {
        value: v1 + v2,
        q1,
        q2,
        n_evals: e1 + e2,
    };

    let unrestricted = match cqa(&joint, alpha, opts) {
        Ok(r) => Some(r),
        Err(Error::UnsupportedSolver(_)) if opts.solver == Solver::Grid => {
            // caller's step is too fine for the joint simplex; fall back to
            // the default lattice for that dimension
            match cqa(&joint, alpha, &opts.with_grid_step(None)) {
                Ok(r) => Some(r),
                Err(Error::UnsupportedSolver(_)) => None,
                Err(e) => return Err(e),
            }
        }
        Err(e) => return Err(e),
    };
    let joint_value = unrestricted
        .as_ref()
        .map_or(block.value, |u| u.value.min(block.value));
    let residual = (joint_value - p * component_1.value - (1.0 - p) * component_2.value).abs();
    Ok(DirectSumReport {
        p,
        alpha,
        unrestricted,
        block,
        component_1,
        component_2,
        joint_value,
        residual,
    })
}

pub fn direct_sum_residual(
    rho1: &DensityMatrix,
    rho2: &DensityMatrix,
    p: f64,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    Ok(direct_sum_cqa(rho1, rho2, p, alpha, opts)?.residual)
}

#[derive(Debug, Clone)]
pub struct MonotonicityCheck {
    /// `C_α(ρ) - C_α(Λ(ρ))`.
    pub margin: f64,
    pub before: CqaResult,
    pub after: CqaResult,
}

pub fn monotonicity_margin(
    rho: &DensityMatrix,
    ch: &IncoherentChannel,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<MonotonicityCheck> {
    let before = cqa(rho, alpha, opts)?;
    let after = cqa(&ch.apply(rho)?, alpha, opts)?;
    Ok(MonotonicityCheck {
        margin: before.value - after.value,
        before,
        after,
    })
}

#[derive(Debug, Clone)]
pub struct ConvexityCheck {
    /// `λC(ρ₁) + (1-λ)C(ρ₂) - C(λρ₁ + (1-λ)ρ₂)`.
    pub margin: f64,
    pub mixture: CqaResult,
    pub component_1: CqaResult,
    pub component_2: CqaResult,
}

pub fn convexity_margin(
    rho1: &DensityMatrix,
    rho2: &DensityMatrix,
    lambda: f64,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<ConvexityCheck> {
    let mixed = crate::channel::classical_mix(rho1, rho2, lambda)?;
    let mixture = cqa(&mixed, alpha, opts)?;
    let component_1 = cqa(rho1, alpha, opts)?;
    let component_2 = cqa(rho2, alpha, opts)?;
    Ok(ConvexityCheck {
        margin: lambda * component_1.value + (1.0 - lambda) * component_2.value - mixture.value,
        mixture,
        component_1,
        component_2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::random_sio;
    use crate::matcore::{pauli_x, pauli_z, random_density, StateKind};

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbabilityVector::new(vec![0.6, 0.5]).is_err());
        assert!(ProbabilityVector::new(vec![1.1, -0.1]).is_err());
        assert!(ProbabilityVector::new(vec![]).is_err());
        let q = ProbabilityVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let back = ProbabilityVector::from_logits(&q.logits());
        for (a, b) in q.weights().iter().zip(back.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(ProbabilityVector::from_logits(&[0.0, 0.0]), ProbabilityVector::uniform(3));
    }

    #[test]
    fn grid_enumeration_counts() {
        let mut count = 0;
        for_each_composition(4, 3, |p| {
            assert_eq!(p.iter().sum::<u32>(), 4);
            count += 1;
        });
        assert_eq!(count, 15);
        assert_eq!(grid_resolution(2, Some(1e-4)).unwrap(), (10_000, 10_001));
        assert_eq!(grid_resolution(3, Some(5e-3)).unwrap(), (200, 20_301));
        assert!(matches!(grid_resolution(4, Some(1e-4)), Err(Error::UnsupportedSolver(_))));
        assert!(grid_resolution(17, None).is_err());
    }

    #[test]
    fn nelder_mead_on_a_quadratic() {
        let out = nelder_mead(|x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2), &[0.0, 0.0], 1.0, 1e-14, 10_000);
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] + 2.0).abs() < 1e-5);
        let one_d = nelder_mead(|x| (x[0] - 0.3).powi(2), &[2.0], 1.0, 1e-16, 10_000);
        assert!((one_d.x[0] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn objective_cases() {
        let diag = DensityMatrix::diagonal(&[0.3, 0.7]).unwrap();
        let q = ProbabilityVector::new(vec![0.9, 0.1]).unwrap();
        assert_eq!(cqa_objective(&diag, &q, 0.4).unwrap().value(), 0.0);

        let rho = random_density(3, StateKind::PureHaar, 1).unwrap();
        let q = ProbabilityVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        for alpha in [0.0, 1.0] {
            let v = cqa_objective(&rho, &q, alpha).unwrap();
            assert_eq!(v.value(), 0.0);
            assert!(v.relative_entropy_path.abs() < 1e-12);
        }

        let v = cqa_objective(&DensityMatrix::plus(), &ProbabilityVector::new(vec![0.3, 0.7]).unwrap(), 0.5).unwrap();
        assert!(v.value() > 0.0);
        assert!(v.path_gap() < 1e-9);
    }

    #[test]
    fn objective_routes_agree_on_full_rank_mixtures() {
        for seed in 0..100 {
            let d = 2 + (seed % 3) as usize;
            let rho = random_density(d, StateKind::GinibreMixed, seed).unwrap();
            let mut rng = rng_from_seed(seed);
            let q = ProbabilityVector::normalized(random_simplex_point(d, &mut rng));
            let v = cqa_objective(&rho, &q, 0.3 + 0.004 * seed as f64).unwrap();
            assert!(v.path_gap() < 1e-8, "seed {seed}: {v:?}");
        }
    }

    #[test]
    fn cqa_of_diagonal_states_vanishes() {
        for solver in [Solver::Grid, Solver::NelderMead, Solver::Multistart] {
            let rho = random_density(3, StateKind::Diagonal, 4).unwrap();
            let r = cqa(&rho, 0.5, &SolverOptions::new(solver)).unwrap();
            assert!(r.value.abs() <= 1e-10, "{solver}: {}", r.value);
            assert!(r.converged);
        }
    }

    #[test]
    fn cqa_of_plus_matches_grid() {
        let plus = DensityMatrix::plus();
        let grid = cqa(&plus, 0.5, &SolverOptions::grid(1e-4)).unwrap();
        let nm = cqa(&plus, 0.5, &SolverOptions::new(Solver::NelderMead)).unwrap();
        assert!((nm.value - grid.value).abs() < 1e-5);
        assert!(grid.path_gap < 1e-9);
    }

    #[test]
    fn maximally_mixed_diagonal_is_a_zero_of_the_objective() {
        // I/d commutes with every state, so the objective vanishes there.
        for seed in 0..20 {
            let rho = random_density(2 + seed % 3, StateKind::PureHaar, seed as u64).unwrap();
            let v = cqa_objective(&rho, &ProbabilityVector::uniform(rho.dim()), 0.37).unwrap();
            assert_eq!(v.value(), 0.0);
        }
    }

    #[test]
    fn upper_bound_holds_on_random_states() {
        for seed in 0..60u64 {
            let d = 2 + (seed % 2) as usize;
            let rho = random_density(d, StateKind::PureHaar, seed).unwrap();
            let alpha = 0.1 * (1 + seed % 9) as f64;
            let r = cqa(&rho, alpha, &SolverOptions::new(Solver::NelderMead)).unwrap();
            assert!(r.value <= cr_upper_bound(&rho, alpha).unwrap() + 1e-6);
            assert!(r.value <= l1_upper_bound(&rho, alpha).unwrap() + 1e-6);
            assert!(r.value >= pinsker_lower_bound(&rho, &r.minimizer, alpha).unwrap() - 1e-8);
        }
    }

    #[test]
    fn tie_breaking_prefers_lexicographically_largest() {
        // every q is a minimizer for a diagonal state
        let rho = DensityMatrix::diagonal(&[0.4, 0.6]).unwrap();
        let r = cqa(&rho, 0.5, &SolverOptions::grid(0.1)).unwrap();
        assert_eq!(r.minimizer.weights(), &[1.0, 0.0]);
        assert!(r.multiplicity > 1);
    }

    #[test]
    fn basis_rotation() {
        let rho = random_density(2, StateKind::GinibreMixed, 3).unwrap();
        let z = HermitianObservable::new(pauli_z()).unwrap();
        let opts = SolverOptions::grid(1e-3);
        // σ_z's ascending eigenbasis is (|1⟩, |0⟩): a relabelling only
        let in_z = cqa_in_basis(&rho, &z, 0.3, &opts).unwrap();
        let direct = cqa(&rho, 0.3, &opts).unwrap();
        assert!((in_z.result.value - direct.value).abs() < 1e-15);
        let diag_obs = HermitianObservable::new(real_diagonal(&[1.0, 2.0])).unwrap();
        let in_diag = cqa_in_basis(&rho, &diag_obs, 0.3, &opts).unwrap();
        assert_eq!(in_diag.result, direct);

        let x = HermitianObservable::new(pauli_x()).unwrap();
        let r = cqa_in_basis(&DensityMatrix::plus(), &x, 0.5, &opts).unwrap();
        assert!(r.result.value.abs() < 1e-12);
        let degenerate = HermitianObservable::new(ComplexMatrix::identity(2, 2)).unwrap();
        assert!(cqa_in_basis(&rho, &degenerate, 0.5, &opts).unwrap().degenerate_spectrum);
    }

    #[test]
    fn eigenbasis_phase_convention() {
        let (v, degenerate) = eigenbasis(&HermitianObservable::new(pauli_x()).unwrap()).unwrap();
        assert!(!degenerate);
        for j in 0..2 {
            let top = v.column(j).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(v
                .column(j)
                .iter()
                .any(|z| z.norm() > top - 1e-12 && z.im.abs() < 1e-15 && z.re > 0.0));
        }
    }

    #[test]
    fn uncertainty_with_identical_observables() {
        let rho = random_density(2, StateKind::PureHaar, 8).unwrap();
        let x = HermitianObservable::new(pauli_x()).unwrap();
        let rep = uncertainty_relation(&rho, &x, &x, 0.5, &SolverOptions::grid(1e-3)).unwrap();
        assert_eq!(rep.minimizer_a(), rep.minimizer_b());
        assert!(rep.rhs_paper < 1e-15 && rep.rhs_derived < 1e-15);
        assert!(uncertainty_relation(&rho, &x, &x, 0.0, &SolverOptions::default()).is_err());
    }

    #[test]
    fn direct_sum_of_diagonal_states() {
        let a = DensityMatrix::diagonal(&[0.2, 0.8]).unwrap();
        let b = DensityMatrix::diagonal(&[0.5, 0.5]).unwrap();
        let rep = direct_sum_cqa(&a, &b, 0.4, 0.5, &SolverOptions::grid(1e-2)).unwrap();
        assert!(rep.residual < 1e-12);
    }

    #[test]
    fn direct_sum_of_plus_states() {
        let plus = DensityMatrix::plus();
        let rep = direct_sum_cqa(&plus, &plus, 0.5, 0.5, &SolverOptions::grid(1e-3)).unwrap();
        assert!(rep.residual < 5e-4, "{rep:?}");
        assert!(rep.unrestricted.is_some());
    }

    #[test]
    fn monotonicity_special_channels() {
        let rho = random_density(3, StateKind::PureHaar, 6).unwrap();
        let opts = SolverOptions::new(Solver::Multistart);
        let deph = monotonicity_margin(&rho, &IncoherentChannel::dephasing(3), 0.5, &opts).unwrap();
        assert!(deph.after.value.abs() < 1e-12 && deph.margin >= -1e-12);
        let id = monotonicity_margin(&rho, &IncoherentChannel::identity(3), 0.5, &opts).unwrap();
        assert_eq!(id.margin, 0.0);
        let sio = random_sio(3, 2, 1).unwrap();
        assert!(monotonicity_margin(&rho, &sio, 0.5, &opts).unwrap().margin > -1e-5);
    }

    #[test]
    fn cqa_is_invariant_under_diagonal_phases() {
        let rho = random_density(3, StateKind::GinibreMixed, 31).unwrap();
        let phases = nalgebra::DVector::from_vec(vec![
            Complex64::from_polar(1.0, 0.3),
            Complex64::from_polar(1.0, -1.1),
            Complex64::from_polar(1.0, 2.0),
        ]);
        let u = ComplexMatrix::from_diagonal(&phases);
        let opts = SolverOptions::grid(2e-2);
        let a = cqa(&rho, 0.4, &opts).unwrap();
        let b = cqa(&rho.conjugate(&u).unwrap(), 0.4, &opts).unwrap();
        assert!((a.value - b.value).abs() < 1e-9);
        assert_eq!(a.minimizer, b.minimizer);
    }

    #[test]
    fn solver_errors() {
        let rho = random_density(5, StateKind::PureHaar, 0).unwrap();
        assert!(matches!(
            cqa(&rho, 0.5, &SolverOptions::grid(1e-3)),
            Err(Error::UnsupportedSolver(_))
        ));
        assert!("bogus".parse::<Solver>().is_err());
        assert_eq!("nm".parse::<Solver>().unwrap(), Solver::NelderMead);
        assert!(cqa(&rho, 0.5, &SolverOptions::default().with_tol(0.0)).is_err());
    }
}
