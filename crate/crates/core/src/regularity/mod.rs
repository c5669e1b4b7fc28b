//! Regularity constants of a design matrix: sparse eigenvalues, restricted
//! isometry and orthogonality constants, mutual incoherence, and the
//! q-restricted eigenvalue modulus with its sufficient conditions.

pub mod conditions;
pub mod rec;
pub mod spectral;

pub use conditions::{check_sufficient_conditions, ConditionOutcome, SufficientConditions, Verdict};
pub use rec::{rec_modulus_estimate, Certification, RecEstimate, RecParams, SearchConfig};
pub use spectral::{
    mutual_incoherence, normalize_columns, restricted_isometry_constant, restricted_orthogonality_constant,
    rip_constants, sparse_eigenvalues, sparse_eigenvalues_sampled, RipConstants, SparseEigen, DEFAULT_BUDGET,
};
