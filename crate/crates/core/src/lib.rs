//! Qudit quantum addition, the coherence of quantum addition (CQA), and a
//! randomized checker for the entropic and coherence-theoretic identities
//! built on them.

pub mod channel;
pub mod cqa;
pub mod entropy;
pub mod error;
pub mod io;
pub mod matcore;
pub mod verify;

pub use cqa::{CqaResult, ProbabilityVector, Solver, SolverOptions};
pub use error::{Error, Result};
pub use io::MatrixRecord;
pub use matcore::{ComplexMatrix, DensityMatrix, HermitianObservable, StateKind};
pub use verify::{EnsembleSpec, TheoremId, TheoremReport};
