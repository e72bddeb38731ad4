//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by model construction, evolution and estimation.
#[derive(Debug, Error)]
pub enum AqsError {
    /// Spin graph violates a structural rule (site out of range, self-loop,
    /// locality bound, ...).
    #[error("invalid spin graph: {0}")]
    InvalidGraph(String),

    /// A matrix that must be Hermitian is not, beyond tolerance.
    #[error("matrix is not Hermitian: max |M - M†| = {deviation:.3e} exceeds {tolerance:.3e}")]
    NotHermitian { deviation: f64, tolerance: f64 },

    /// Operands or states of incompatible dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionError(String),

    /// Gadget penalty gap must be positive.
    #[error("invalid penalty gap: delta = {0} must be > 0")]
    InvalidGap(f64),

    /// Gadget operator breaks a contract (not an involution, gap too small
    /// for the requested accuracy, wrong dimension).
    #[error("invalid gadget operator: {0}")]
    InvalidGadgetOperator(String),

    /// Schedule parameter outside its domain.
    #[error("invalid schedule parameter: {0}")]
    InvalidPathParameter(String),

    /// Initial state handed to the adiabatic sweep is not a ground state of
    /// the initial Hamiltonian.
    #[error("initial state is not in the ground subspace (fidelity {fidelity:.6})")]
    BadInitialState { fidelity: f64 },

    /// State fails its normalization or positivity contract.
    #[error("invalid quantum state: {0}")]
    BadState(String),

    /// Bath parameters cannot be realised by the noise model.
    #[error("unphysical bath parameters: {0}")]
    Unphysical(String),

    /// Probed observable does not commute with the register Hamiltonian.
    #[error("observable does not commute with the register Hamiltonian: \
             ‖[A, H]‖ = {commutator_norm:.3e} exceeds {tolerance:.3e}")]
    ObservableNotCommuting { commutator_norm: f64, tolerance: f64 },

    /// Ground-space structure of the coupled system could not be certified.
    #[error("probe lemma precondition cannot be restored: {0}")]
    LemmaUnverifiable(String),

    /// Fringe data carries no oscillation to fit.
    #[error("signal is degenerate (no resolvable oscillation): {0}")]
    DegenerateSignal(String),

    /// No fit start converged; carries the best model found anyway.
    #[error("damped cosine fit failed to converge (best residual {residual:.3e})")]
    FitFailed {
        best: crate::estimation::FitModel,
        residual: f64,
    },

    /// Configuration rejected before running.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A pipeline stage failed; tags the underlying error with the stage.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<AqsError>,
    },

    /// Dataset file malformed.
    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
