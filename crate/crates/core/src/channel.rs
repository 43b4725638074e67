//! The qudit addition channel and incoherent operations.
//!
//! `ρ ⊞_α σ = αρ + (1-α)σ - i√(α(1-α))[ρ, σ]` is computed in closed form by
//! [`quantum_add`]. Two independent routes reproduce it: the Kraus
//! representation `K_n = √α I⊗⟨n| + i√(1-α) ⟨n|⊗I` ([`quantum_add_via_kraus`])
//! and the partial swap `U_α = √α I + i√(1-α) S` followed by a partial trace
//! ([`quantum_add_via_partial_swap`]).

use std::fmt;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{
    self, commutator, complex_gaussian, max_abs_diff, partial_trace_second, rng_from_seed, tensor,
    ComplexMatrix, DensityMatrix, ONE, ZERO,
};

/// Completeness tolerance for Kraus sets.
pub const KRAUS_TOL: f64 = 1e-10;
/// Tolerance for "maps basis projectors to diagonal states".
pub const INCOHERENCE_TOL: f64 = 1e-10;

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("alpha = {alpha} not in [0,1]")))
    }
}

fn check_same_dim(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "states of dimension {} and {}",
            a.dim(),
            b.dim()
        )))
    }
}

/// Closed form on arbitrary square operators of equal size.
///
/// The entropy and CQA layers call this on sub-normalized blocks, so no
/// state invariants are assumed.
pub fn quantum_add_raw(a: &ComplexMatrix, b: &ComplexMatrix, alpha: f64) -> ComplexMatrix {
    let coherent = (alpha * (1.0 - alpha)).sqrt();
    let comm = a * b - b * a;
    a * Complex64::new(alpha, 0.0) + b * Complex64::new(1.0 - alpha, 0.0)
        - comm * Complex64::new(0.0, coherent)
}

/// `αa + (1-α)b`.
pub fn classical_mix_raw(a: &ComplexMatrix, b: &ComplexMatrix, alpha: f64) -> ComplexMatrix {
    a * Complex64::new(alpha, 0.0) + b * Complex64::new(1.0 - alpha, 0.0)
}

/// `ρ ⊞_α σ`.
pub fn quantum_add(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64) -> Result<DensityMatrix> {
    check_same_dim(rho, sigma)?;
    check_alpha(alpha)?;
    DensityMatrix::new(quantum_add_raw(rho.matrix(), sigma.matrix(), alpha))
}

/// Classical mixture `αρ + (1-α)σ`.
pub fn classical_mix(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64) -> Result<DensityMatrix> {
    check_same_dim(rho, sigma)?;
    check_alpha(alpha)?;
    DensityMatrix::new(classical_mix_raw(rho.matrix(), sigma.matrix(), alpha))
}

/// Two-qudit swap `S = Σ_ij |i⟩⟨j| ⊗ |j⟩⟨i|`.
pub fn swap_operator(d: usize) -> ComplexMatrix {
    let mut s = ComplexMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            s[(j * d + i, i * d + j)] = ONE;
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct PartialSwap {
    pub d: usize,
    pub alpha: f64,
    pub unitary: ComplexMatrix,
}

impl PartialSwap {
    pub fn new(d: usize, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if d == 0 {
            return Err(Error::OutOfRange("partial swap on a zero-dimensional space".into()));
        }
        let n = d * d;
        let unitary = ComplexMatrix::identity(n, n) * Complex64::new(alpha.sqrt(), 0.0)
            + swap_operator(d) * Complex64::new(0.0, (1.0 - alpha).sqrt());
        Ok(Self { d, alpha, unitary })
    }

    pub fn unitarity_defect(&self) -> f64 {
        matcore::unitarity_defect(&self.unitary)
    }
}

/// A CPTP map in Kraus form, `ρ ↦ Σ K ρ K^dagger`.
#[derive(Debug, Clone)]
pub struct KrausSet {
    operators: Vec<ComplexMatrix>,
    input_dim: usize,
    output_dim: usize,
}

impl KrausSet {
    /// Checks shapes and completeness `Σ K^dagger K = I` to [`KRAUS_TOL`].
    pub fn new(operators: Vec<ComplexMatrix>) -> Result<Self> {
        let first = operators
            .first()
            .ok_or_else(|| Error::OutOfRange("empty Kraus set".into()))?;
        let (output_dim, input_dim) = first.shape();
        if let Some(bad) = operators.iter().find(|k| k.shape() != (output_dim, input_dim)) {
            return Err(Error::DimensionMismatch(format!(
                "Kraus operators of shapes {:?} and {:?}",
                first.shape(),
                bad.shape()
            )));
        }
        let set = Self {
            operators,
            input_dim,
            output_dim,
        };
        let defect = set.completeness_defect();
        if defect > KRAUS_TOL {
            return Err(Error::NotTracePreserving(defect));
        }
        Ok(set)
    }

    pub fn identity(d: usize) -> Self {
        Self {
            operators: vec![ComplexMatrix::identity(d, d)],
            input_dim: d,
            output_dim: d,
        }
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Max entry of `Σ K^dagger K - I`.
    pub fn completeness_defect(&self) -> f64 {
        let sum = self
            .operators
            .iter()
            .fold(ComplexMatrix::zeros(self.input_dim, self.input_dim), |acc, k| {
                acc + k.adjoint() * k
            });
        max_abs_diff(&sum, &ComplexMatrix::identity(self.input_dim, self.input_dim))
    }

    /// `Σ K m K^dagger` on a raw operator.
    pub fn apply_raw(&self, m: &ComplexMatrix) -> ComplexMatrix {
        self.operators
            .iter()
            .fold(ComplexMatrix::zeros(self.output_dim, self.output_dim), |acc, k| {
                acc + k * m * k.adjoint()
            })
    }
}

/// `Σ K ρ K^dagger`.
pub fn apply_channel(ch: &KrausSet, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != ch.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "channel on dimension {} applied to a {}-dim state",
            ch.input_dim,
            rho.dim()
        )));
    }
    DensityMatrix::new(ch.apply_raw(rho.matrix()))
}

/// Kraus operators `K_n = √α I⊗⟨n| + i√(1-α) ⟨n|⊗I` of the addition channel,
/// mapping `C^d ⊗ C^d → C^d`.
pub fn addition_kraus(d: usize, alpha: f64) -> Result<KrausSet> {
    check_alpha(alpha)?;
    let id = ComplexMatrix::identity(d, d);
    let ops = (0..d)
        .map(|n| {
            let mut bra = ComplexMatrix::zeros(1, d);
            bra[(0, n)] = ONE;
            id.kronecker(&bra) * Complex64::new(alpha.sqrt(), 0.0)
                + bra.kronecker(&id) * Complex64::new(0.0, (1.0 - alpha).sqrt())
        })
        .collect();
    KrausSet::new(ops)
}

/// `Σ_n K_n (ρ ⊗ σ) K_n^dagger`.
pub fn quantum_add_via_kraus(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    alpha: f64,
) -> Result<DensityMatrix> {
    check_same_dim(rho, sigma)?;
    let kraus = addition_kraus(rho.dim(), alpha)?;
    DensityMatrix::new(kraus.apply_raw(&tensor(rho.matrix(), sigma.matrix())))
}

/// `tr₂[U_α (ρ ⊗ σ) U_α^dagger]`.
pub fn quantum_add_via_partial_swap(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    alpha: f64,
) -> Result<DensityMatrix> {
    check_same_dim(rho, sigma)?;
    let u = PartialSwap::new(rho.dim(), alpha)?.unitary;
    let joint = &u * tensor(rho.matrix(), sigma.matrix()) * u.adjoint();
    DensityMatrix::new(partial_trace_second(&joint, rho.dim())?)
}

/// Removes coherences in the computational basis, or in the basis given by
/// the columns of a unitary.
pub fn dephase(rho: &DensityMatrix, basis: Option<&ComplexMatrix>) -> Result<DensityMatrix> {
    let d = rho.dim();
    match basis {
        None => DensityMatrix::diagonal(&rho.diagonal_probabilities()),
        Some(u) => {
            if u.shape() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "basis {:?} for a {d}-dim state",
                    u.shape()
                )));
            }
            let defect = matcore::unitarity_defect(u);
            if defect > 1e-9 {
                return Err(Error::NotUnitary(defect));
            }
            let rotated = u.adjoint() * rho.matrix() * u;
            let diag = ComplexMatrix::from_diagonal(&rotated.diagonal().map(|z| Complex64::new(z.re, 0.0)));
            DensityMatrix::new(u * diag * u.adjoint())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncoherentKind {
    /// Kraus operators `Σ_k d_k |π(k)⟩⟨k|` with `π` a permutation.
    PermutationSio,
    /// Complete dephasing `{|k⟩⟨k|}`.
    Dephase,
    /// Incoherent but not strictly incoherent.
    GeneralIo,
}

impl fmt::Display for IncoherentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PermutationSio => "permutation_sio",
            Self::Dephase => "dephase",
            Self::GeneralIo => "general_io",
        })
    }
}

/// A Kraus set every operator of which sends diagonal states to diagonal
/// states.
#[derive(Debug, Clone)]
pub struct IncoherentChannel {
    kraus: KrausSet,
    kind: IncoherentKind,
}

impl IncoherentChannel {
    /// Verifies incoherence on every basis projector `|k⟩⟨k|`.
    pub fn new(kraus: KrausSet, kind: IncoherentKind) -> Result<Self> {
        if kraus.input_dim != kraus.output_dim {
            return Err(Error::DimensionMismatch(
                "incoherent channels here are endomorphisms".into(),
            ));
        }
        let d = kraus.input_dim;
        for (idx, k) in kraus.operators.iter().enumerate() {
            for col in 0..d {
                // K|k⟩⟨k|K^dagger is the outer product of column k with itself
                let c = k.column(col);
                for a in 0..d {
                    for b in 0..d {
                        if a != b && (c[a] * c[b].conj()).norm() > INCOHERENCE_TOL {
                            return Err(Error::NotIncoherent(idx));
                        }
                    }
                }
            }
        }
        Ok(Self { kraus, kind })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            kraus: KrausSet::identity(d),
            kind: IncoherentKind::PermutationSio,
        }
    }

    /// Complete dephasing channel.
    pub fn dephasing(d: usize) -> Self {
        let ops = (0..d)
            .map(|k| {
                let mut p = ComplexMatrix::zeros(d, d);
                p[(k, k)] = ONE;
                p
            })
            .collect();
        Self {
            kraus: KrausSet {
                operators: ops,
                input_dim: d,
                output_dim: d,
            },
            kind: IncoherentKind::Dephase,
        }
    }

    /// Unitary channel `|k⟩ ↦ |perm[k]⟩`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let d = perm.len();
        let mut seen = vec![false; d];
        for &p in perm {
            if p >= d || std::mem::replace(&mut seen[p], true) {
                return Err(Error::OutOfRange(format!("{perm:?} is not a permutation")));
            }
        }
        let mut u = ComplexMatrix::zeros(d, d);
        for (k, &p) in perm.iter().enumerate() {
            u[(p, k)] = ONE;
        }
        Self::new(KrausSet::new(vec![u])?, IncoherentKind::PermutationSio)
    }

    pub fn kraus(&self) -> &KrausSet {
        &self.kraus
    }

    pub fn kind(&self) -> IncoherentKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.kraus.input_dim
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        apply_channel(&self.kraus, rho)
    }
}

/// Random strictly incoherent channel with `n_kraus` operators
/// `K_i = Σ_k d_ik |π_i(k)⟩⟨k|`.
///
/// Permutations are uniform and drawn independently per operator;
/// coefficients are complex Gaussians rescaled per column so that
/// `Σ_i |d_ik|² = 1`.
pub fn random_sio(d: usize, n_kraus: usize, seed: u64) -> Result<IncoherentChannel> {
    sio_from_seed(d, n_kraus, seed, false)
}

/// As [`random_sio`] with one permutation shared by every operator,
/// `K_i = Σ_k d_ik |π(k)⟩⟨k|`: a permutation after a Schur multiplier.
pub fn random_sio_shared_permutation(d: usize, n_kraus: usize, seed: u64) -> Result<IncoherentChannel> {
    sio_from_seed(d, n_kraus, seed, true)
}

fn sio_from_seed(d: usize, n_kraus: usize, seed: u64, shared: bool) -> Result<IncoherentChannel> {
    if d < 2 || n_kraus == 0 {
        return Err(Error::OutOfRange(format!(
            "random_sio needs d >= 2 and n_kraus >= 1 (got d={d}, n_kraus={n_kraus})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut draw = || {
        let mut p: Vec<usize> = (0..d).collect();
        p.shuffle(&mut rng);
        p
    };
    let perms: Vec<Vec<usize>> = if shared {
        vec![draw(); n_kraus]
    } else {
        (0..n_kraus).map(|_| draw()).collect()
    };
    let mut coeffs: Vec<Vec<Complex64>> = (0..n_kraus)
        .map(|_| (0..d).map(|_| complex_gaussian(&mut rng)).collect())
        .collect();
    for k in 0..d {
        let norm = coeffs.iter().map(|row| row[k].norm_sqr()).sum::<f64>().sqrt();
        for row in coeffs.iter_mut() {
            row[k] /= norm;
        }
    }
    let ops = perms
        .iter()
        .zip(&coeffs)
        .map(|(perm, row)| {
            let mut k_op = ComplexMatrix::zeros(d, d);
            for k in 0..d {
                k_op[(perm[k], k)] = row[k];
            }
            k_op
        })
        .collect();
    IncoherentChannel::new(KrausSet::new(ops)?, IncoherentKind::PermutationSio)
}

/// Random incoherent channel outside the strictly incoherent class:
/// `K_i = |g(i)⟩⟨u_i|` with `⟨u_i|` the rows of a Haar unitary and `g`
/// a random relabelling.
pub fn random_io(d: usize, seed: u64) -> Result<IncoherentChannel> {
    if d < 2 {
        return Err(Error::OutOfRange(format!("random_io needs d >= 2, got {d}")));
    }
    let mut rng = rng_from_seed(seed);
    let u = matcore::random_unitary(d, &mut rng);
    let ops = (0..d)
        .map(|i| {
            let target = rng.random_range(0..d);
            let mut k_op = ComplexMatrix::from_element(d, d, ZERO);
            k_op.row_mut(target).copy_from(&u.row(i));
            k_op
        })
        .collect();
    IncoherentChannel::new(KrausSet::new(ops)?, IncoherentKind::GeneralIo)
}

/// Max-entry residual of `Λ(ρ) ⊞_α Λ(σ) = Λ(ρ ⊞_α σ)` for diagonal `σ`.
pub fn lemma_commutation_residual(
    rho: &DensityMatrix,
    sigma_incoh: &DensityMatrix,
    ch: &IncoherentChannel,
    alpha: f64,
) -> Result<f64> {
    check_same_dim(rho, sigma_incoh)?;
    check_alpha(alpha)?;
    let off = sigma_incoh.max_off_diagonal();
    if off > matcore::STATE_TOL {
        return Err(Error::NotDiagonal(off));
    }
    if ch.dim() != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "channel on dimension {} with {}-dim states",
            ch.dim(),
            rho.dim()
        )));
    }
    let k = ch.kraus();
    let lhs = quantum_add_raw(&k.apply_raw(rho.matrix()), &k.apply_raw(sigma_incoh.matrix()), alpha);
    let rhs = k.apply_raw(&quantum_add_raw(rho.matrix(), sigma_incoh.matrix(), alpha));
    Ok(max_abs_diff(&lhs, &rhs))
}

/// `-i√(α(1-α))[ρ,σ]`, the coherent part of the addition.
pub fn coherent_term(rho: &DensityMatrix, sigma: &DensityMatrix, alpha: f64) -> Result<ComplexMatrix> {
    check_alpha(alpha)?;
    Ok(commutator(rho.matrix(), sigma.matrix())? * Complex64::new(0.0, -(alpha * (1.0 - alpha)).sqrt()))
}
