//! Dense complex linear algebra for small qudit systems.
//!
//! Everything here works on `nalgebra::DMatrix<Complex64>`. States are kept
//! behind the [`DensityMatrix`] newtype, which enforces Hermiticity, unit
//! trace and positivity on construction; the free functions operate on raw
//! [`ComplexMatrix`] values so that the channel and entropy layers can also
//! feed them sub-normalized blocks and commutators.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Tolerance for the Hermitian / unit-trace / PSD invariants of a state.
pub const STATE_TOL: f64 = 1e-10;
/// Eigenvalues below this are treated as zero by logarithms and entropies.
pub const DEFAULT_CLIP_EPS: f64 = 1e-12;
/// Negative eigenvalues smaller than this in magnitude are solver noise and
/// are left in place rather than triggering a reconstruction.
const NEGATIVE_NOISE: f64 = 1e-14;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest entry modulus of `a - b`.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest entry modulus of `m`.
pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry modulus of `m - m^dagger`.
pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(M + M^dagger) / 2`.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).unscale(2.0)
}

/// Largest entry modulus of `U U^dagger - I`.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let n = u.nrows();
    max_abs_diff(&(u * u.adjoint()), &ComplexMatrix::identity(n, n))
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Traces out the second factor of a `d² × d²` operator on `C^d ⊗ C^d`.
pub fn partial_trace_second(m: &ComplexMatrix, d: usize) -> Result<ComplexMatrix> {
    if d == 0 || m.nrows() != d * d || m.ncols() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "partial trace expects a {0}x{0} matrix, got {1}x{2}",
            d * d,
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(ComplexMatrix::from_fn(d, d, |i, j| {
        (0..d).map(|k| m[(i * d + k, j * d + k)]).sum()
    }))
}

/// `[a, b] = ab - ba`.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "commutator of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a * b - b * a)
}

/// Diagonal matrix with real entries.
pub fn real_diagonal(values: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| Complex64::new(v, 0.0)),
    ))
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// A qudit state: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates `m` against the state invariants at [`STATE_TOL`].
    ///
    /// The input is replaced by its Hermitian part before the positivity
    /// check; eigenvalues in `[-STATE_TOL, 0)` are clipped to zero and the
    /// trace renormalized.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(m, STATE_TOL)
    }

    /// As [`DensityMatrix::new`] with a caller-chosen tolerance for the
    /// Hermitian, trace and positivity checks. Used for external input
    /// where a looser tolerance applies; the stored state is renormalized
    /// to unit trace either way.
    pub fn with_tolerance(m: ComplexMatrix, tol: f64) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square and non-empty, got {:?}",
                m.shape()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::OutOfRange("non-finite matrix entry".into()));
        }
        let defect = hermiticity_defect(&m);
        if defect > tol {
            return Err(Error::NotHermitian(defect));
        }
        let mut h = hermitian_part(&m);
        let trace = h.trace().re;
        if (trace - 1.0).abs() > tol {
            return Err(Error::TraceNotUnit(trace));
        }
        let eig = SymmetricEigen::new(h.clone());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -tol {
            return Err(Error::NotPositive(min));
        }
        if min < -NEGATIVE_NOISE {
            let clipped = eig.eigenvalues.map(|v| v.max(0.0));
            let total: f64 = clipped.sum();
            let vals = clipped.map(|v| Complex64::new(v / total, 0.0));
            let v = &eig.eigenvectors;
            h = hermitian_part(&(v * ComplexMatrix::from_diagonal(&vals) * v.adjoint()));
        } else if (trace - 1.0).abs() > f64::EPSILON * h.nrows() as f64 {
            h.unscale_mut(trace);
        }
        Ok(Self { matrix: h })
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) nonzero vector.
    pub fn pure(psi: &DVector<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::OutOfRange("pure state from a zero vector".into()));
        }
        let v = psi.unscale(norm);
        Self::new(&v * v.adjoint())
    }

    /// Diagonal state with the given probabilities.
    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        Self::new(real_diagonal(probabilities))
    }

    /// Computational basis projector `|k⟩⟨k|`.
    pub fn basis(d: usize, k: usize) -> Result<Self> {
        if k >= d {
            return Err(Error::OutOfRange(format!("basis index {k} >= dimension {d}")));
        }
        let mut p = vec![0.0; d];
        p[k] = 1.0;
        Self::diagonal(&p)
    }

    /// `I/d`.
    pub fn maximally_mixed(d: usize) -> Result<Self> {
        Self::diagonal(&vec![1.0 / d as f64; d])
    }

    /// `|+⟩⟨+|` on a qubit.
    pub fn plus() -> Self {
        let h = Complex64::new(0.5, 0.0);
        Self {
            matrix: ComplexMatrix::from_element(2, 2, h),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Real diagonal of the matrix.
    pub fn diagonal_probabilities(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// Largest off-diagonal entry modulus.
    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max(self.matrix[(i, j)].norm());
                }
            }
        }
        worst
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.max_off_diagonal() <= tol
    }

    /// `U ρ U^dagger`; `u` must be unitary to [`STATE_TOL`].
    pub fn conjugate(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.nrows() != self.dim() || !u.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "conjugating a {}-dim state by a {:?} matrix",
                self.dim(),
                u.shape()
            )));
        }
        let defect = unitarity_defect(u);
        if defect > 1e-9 {
            return Err(Error::NotUnitary(defect));
        }
        Self::new(u * &self.matrix * u.adjoint())
    }
}

impl fmt::Display for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.matrix)
    }
}

/// Hermitian operator used as an observable.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianObservable {
    matrix: ComplexMatrix,
}

impl HermitianObservable {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "observable must be square, got {:?}",
                m.shape()
            )));
        }
        let defect = hermiticity_defect(&m);
        if defect > STATE_TOL {
            return Err(Error::NotHermitian(defect));
        }
        Ok(Self {
            matrix: hermitian_part(&m),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }
}

/// Spectral decomposition `M = V diag(λ) V^dagger` with ascending `λ`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// `V f(Λ) V^dagger`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let diag = DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&l| Complex64::new(f(l), 0.0)),
        );
        v * ComplexMatrix::from_diagonal(&diag) * v.adjoint()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map(|l| l)
    }
}

/// Full eigendecomposition of a Hermitian matrix (Hermitian to `1e-8`).
pub fn hermitian_eig(m: &ComplexMatrix) -> Result<EigenDecomposition> {
    let defect = hermiticity_defect(m);
    if defect > 1e-8 {
        return Err(Error::NotHermitian(defect));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = ComplexMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        eig.eigenvectors[(i, order[j])]
    });
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues only, unsorted. The caller guarantees Hermiticity; only the
/// lower triangle is read.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    m.symmetric_eigenvalues().iter().copied().collect()
}

/// Natural matrix logarithm of a PSD matrix together with the number of
/// eigenvalues that were raised to the clip threshold.
#[derive(Debug, Clone)]
pub struct ClippedLog {
    pub matrix: ComplexMatrix,
    pub clip_events: usize,
}

/// `V diag(ln max(λ, clip_eps)) V^dagger`.
pub fn matrix_log(m: &ComplexMatrix, clip_eps: f64) -> Result<ClippedLog> {
    let eig = hermitian_eig(m)?;
    let clip_events = eig.eigenvalues.iter().filter(|&&l| l < clip_eps).count();
    let matrix = hermitian_part(&eig.map(|l| l.max(clip_eps).ln()));
    Ok(ClippedLog {
        matrix,
        clip_events,
    })
}

/// Sum of singular values.
///
/// Hermitian and anti-Hermitian inputs (commutators of Hermitian matrices)
/// go through the eigenvalue route; everything else through an SVD.
pub fn trace_norm(m: &ComplexMatrix) -> f64 {
    if m.is_square() {
        let scale = max_abs(m).max(1.0);
        if hermiticity_defect(m) <= 1e-13 * scale {
            return hermitian_eigenvalues(&hermitian_part(m))
                .iter()
                .map(|l| l.abs())
                .sum();
        }
        let rotated = m * I;
        if hermiticity_defect(&rotated) <= 1e-13 * scale {
            return hermitian_eigenvalues(&hermitian_part(&rotated))
                .iter()
                .map(|l| l.abs())
                .sum();
        }
    }
    m.clone().svd(false, false).singular_values.sum()
}

/// Block-diagonal state `p·a ⊕ (1-p)·b`.
pub fn direct_sum(a: &DensityMatrix, b: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange(format!("direct-sum weight {p} not in [0,1]")));
    }
    let (da, db) = (a.dim(), b.dim());
    let mut m = ComplexMatrix::zeros(da + db, da + db);
    m.view_mut((0, 0), (da, da)).copy_from(&(a.matrix() * Complex64::new(p, 0.0)));
    m.view_mut((da, da), (db, db))
        .copy_from(&(b.matrix() * Complex64::new(1.0 - p, 0.0)));
    DensityMatrix::new(m)
}

/// Ensembles of random states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    /// Projector onto a normalized complex Gaussian vector.
    PureHaar,
    /// `G G^dagger / tr(G G^dagger)` with `G` a square complex Ginibre matrix.
    GinibreMixed,
    /// Uniform point of the probability simplex placed on the diagonal.
    Diagonal,
}

impl StateKind {
    pub const ALL: [StateKind; 3] = [Self::PureHaar, Self::GinibreMixed, Self::Diagonal];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::PureHaar => "pure_haar",
            Self::GinibreMixed => "ginibre_mixed",
            Self::Diagonal => "diagonal",
        }
    }
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure_haar" | "pure" | "haar" => Ok(Self::PureHaar),
            "ginibre_mixed" | "ginibre" | "mixed" => Ok(Self::GinibreMixed),
            "diagonal" | "incoherent" => Ok(Self::Diagonal),
            other => Err(Error::InvalidEnsemble(format!("unknown state kind `{other}`"))),
        }
    }
}

/// Deterministic RNG for one task.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of the `index`-th task stream derived from a base seed (SplitMix64
/// finalizer over both words).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn ginibre_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Uniform point on the probability simplex (normalized `Exp(1)` draws).
pub fn random_simplex_point<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

/// Haar-distributed unitary from the QR decomposition of a Ginibre matrix,
/// with the phases of `R`'s diagonal absorbed into `Q`.
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let qr = ginibre_matrix(d, d, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = q;
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { ONE };
        for i in 0..d {
            u[(i, j)] *= phase;
        }
    }
    u
}

/// Random Hermitian matrix `(G + G^dagger)/2`.
pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    hermitian_part(&ginibre_matrix(d, d, rng))
}

pub fn sample_density<R: Rng + ?Sized>(d: usize, kind: StateKind, rng: &mut R) -> Result<DensityMatrix> {
    if d < 2 {
        return Err(Error::OutOfRange(format!("state dimension {d} < 2")));
    }
    match kind {
        StateKind::PureHaar => {
            let psi = DVector::from_fn(d, |_, _| complex_gaussian(rng));
            DensityMatrix::pure(&psi)
        }
        StateKind::GinibreMixed => {
            let g = ginibre_matrix(d, d, rng);
            let w = &g * g.adjoint();
            let t = w.trace();
            DensityMatrix::new(w.unscale(t.re))
        }
        StateKind::Diagonal => DensityMatrix::diagonal(&random_simplex_point(d, rng)),
    }
}

/// Random state of the given kind, reproducible from `seed`.
pub fn random_density(d: usize, kind: StateKind, seed: u64) -> Result<DensityMatrix> {
    sample_density(d, kind, &mut rng_from_seed(seed))
}
