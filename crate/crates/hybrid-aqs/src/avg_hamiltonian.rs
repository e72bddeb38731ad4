//! Piecewise-constant pulse sequences realising sums and commutators of
//! drive Hamiltonians to first order.
//!
//! With only `±A` and `±B` available as generators, alternating short
//! segments reproduce `exp(-i(A+B)t)` (segment error `O(t²/n)`), and the
//! four-segment cycle `A, B, -A, -B` with segment duration `√(t/n)`
//! reproduces `exp([-iA, -iB] t)`, i.e. evolution under the effective
//! Hamiltonian `-i[A, B]`, with error `O(t^{3/2}/√n)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::AqsError;
use crate::operator::HermitianOperator;

/// Generators with durations, applied in list order.
#[derive(Debug, Clone)]
pub struct PulseSequence {
    segments: Vec<(HermitianOperator, f64)>,
    total_time: f64,
}

impl PulseSequence {
    pub fn new(segments: Vec<(HermitianOperator, f64)>) -> Result<Self, AqsError> {
        if segments.is_empty() {
            return Err(AqsError::InvalidPathParameter(
                "pulse sequence needs at least one segment".into(),
            ));
        }
        let dim = segments[0].0.dim();
        let mut total_time = 0.0;
        for (h, dur) in &segments {
            if h.dim() != dim {
                return Err(AqsError::DimensionError(format!(
                    "segment dimension {} differs from {}",
                    h.dim(),
                    dim
                )));
            }
            if !(dur.is_finite() && *dur >= 0.0) {
                return Err(AqsError::InvalidPathParameter(format!(
                    "segment duration {dur} must be non-negative and finite"
                )));
            }
            total_time += dur;
        }
        Ok(Self {
            segments,
            total_time,
        })
    }

    pub fn segments(&self) -> &[(HermitianOperator, f64)] {
        &self.segments
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    /// Wall-clock duration: the sum of all segment durations.
    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn dim(&self) -> usize {
        self.segments[0].0.dim()
    }
}

fn check_pair(a: &HermitianOperator, b: &HermitianOperator, t: f64, n: usize) -> Result<(), AqsError> {
    if a.dim() != b.dim() {
        return Err(AqsError::DimensionError(format!(
            "generators of dimension {} and {} cannot alternate",
            a.dim(),
            b.dim()
        )));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(AqsError::InvalidPathParameter(format!(
            "target time {t} must be non-negative and finite"
        )));
    }
    if n == 0 {
        return Err(AqsError::InvalidPathParameter(
            "cycle count must be at least 1".into(),
        ));
    }
    Ok(())
}

/// `2n` alternating segments of duration `t/n` approximating
/// `exp(-i(A+B)t)`; exact when `[A, B] = 0`.
pub fn sum_sequence(
    a: &HermitianOperator,
    b: &HermitianOperator,
    t: f64,
    n: usize,
) -> Result<PulseSequence, AqsError> {
    check_pair(a, b, t, n)?;
    let dt = t / n as f64;
    let mut segments = Vec::with_capacity(2 * n);
    for _ in 0..n {
        segments.push((a.clone(), dt));
        segments.push((b.clone(), dt));
    }
    PulseSequence::new(segments)
}

/// `4n` segments cycling `A, B, -A, -B`, each of duration `√(t/n)`,
/// approximating `exp([-iA, -iB] t)`; collapses to the identity when
/// `[A, B] = 0`.
pub fn commutator_sequence(
    a: &HermitianOperator,
    b: &HermitianOperator,
    t: f64,
    n: usize,
) -> Result<PulseSequence, AqsError> {
    check_pair(a, b, t, n)?;
    let tau = (t / n as f64).sqrt();
    let neg_a = a.scaled(-1.0);
    let neg_b = b.scaled(-1.0);
    let mut segments = Vec::with_capacity(4 * n);
    for _ in 0..n {
        segments.push((a.clone(), tau));
        segments.push((b.clone(), tau));
        segments.push((neg_a.clone(), tau));
        segments.push((neg_b.clone(), tau));
    }
    PulseSequence::new(segments)
}

/// Ordered product `exp(-i H_1 τ_1) · exp(-i H_2 τ_2) · ...` with the first
/// segment leftmost. To read the list as a time-ordered pulse program,
/// traverse it from the back.
pub fn sequence_exponential(seq: &PulseSequence) -> DMatrix<Complex64> {
    let dim = seq.dim();
    let mut u = DMatrix::<Complex64>::identity(dim, dim);
    for (h, dur) in seq.segments() {
        u *= h.evolution_unitary(*dur);
    }
    u
}
