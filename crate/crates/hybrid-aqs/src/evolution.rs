//! Adiabatic interpolation and closed-system time evolution.
//!
//! The sweep Hamiltonian is `H(s) = (1-s)·H_I + s·H_T` with a monotone
//! schedule `s(t/T)`. Evolution uses piecewise-constant step propagators
//! `exp(-i H(t_mid) Δt)` built from exact eigendecompositions, which keeps
//! every step exactly unitary regardless of step count.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::AqsError;
use crate::operator::HermitianOperator;

/// Norm / trace slack accepted when validating states.
pub const STATE_TOL: f64 = 1e-9;

/// How the schedule progresses from 0 to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulePath {
    Linear,
}

impl SchedulePath {
    /// `s(x)` for `x = t / T ∈ [0, 1]`.
    pub fn s(&self, x: f64) -> f64 {
        match self {
            SchedulePath::Linear => x,
        }
    }
}

/// Sweep duration, step count and path shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub total_time: f64,
    pub n_steps: usize,
    pub path: SchedulePath,
}

impl Schedule {
    pub fn new(total_time: f64, n_steps: usize, path: SchedulePath) -> Result<Self, AqsError> {
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(AqsError::InvalidPathParameter(format!(
                "total time must be positive and finite, got {total_time}"
            )));
        }
        if n_steps == 0 {
            return Err(AqsError::InvalidPathParameter(
                "schedule needs at least one step".into(),
            ));
        }
        Ok(Self {
            total_time,
            n_steps,
            path,
        })
    }
}

/// Pure state vector or density matrix.
#[derive(Debug, Clone)]
pub enum QuantumState {
    Vector(DVector<Complex64>),
    Density(DMatrix<Complex64>),
}

impl QuantumState {
    /// Validates `‖ψ‖ = 1` within [`STATE_TOL`].
    pub fn vector(v: DVector<Complex64>) -> Result<Self, AqsError> {
        let norm = v.norm();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(AqsError::BadState(format!(
                "state vector norm {norm} deviates from 1"
            )));
        }
        Ok(QuantumState::Vector(v))
    }

    /// Validates hermiticity, unit trace and positivity within [`STATE_TOL`].
    pub fn density(rho: DMatrix<Complex64>) -> Result<Self, AqsError> {
        let op = HermitianOperator::new(rho).map_err(|e| match e {
            AqsError::NotHermitian { deviation, .. } => {
                AqsError::BadState(format!("density matrix not Hermitian ({deviation:.3e})"))
            }
            other => other,
        })?;
        let trace = op.matrix().trace().re;
        if (trace - 1.0).abs() > STATE_TOL {
            return Err(AqsError::BadState(format!(
                "density matrix trace {trace} deviates from 1"
            )));
        }
        let min_eig = op.spectral_decomposition().eigenvalues[0];
        if min_eig < -STATE_TOL {
            return Err(AqsError::BadState(format!(
                "density matrix has negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(QuantumState::Density(op.into_matrix()))
    }

    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Vector(v) => v.len(),
            QuantumState::Density(m) => m.nrows(),
        }
    }

    pub fn to_density(&self) -> DMatrix<Complex64> {
        match self {
            QuantumState::Vector(v) => v * v.adjoint(),
            QuantumState::Density(m) => m.clone(),
        }
    }

    /// Applies a unitary: `Uψ` or `UρU†`. No validation; `u` must be unitary.
    pub fn apply_unitary(&self, u: &DMatrix<Complex64>) -> Self {
        match self {
            QuantumState::Vector(v) => QuantumState::Vector(u * v),
            QuantumState::Density(m) => QuantumState::Density(u * m * u.adjoint()),
        }
    }

    pub fn expectation(&self, op: &HermitianOperator) -> f64 {
        match self {
            QuantumState::Vector(v) => op.expectation(v),
            QuantumState::Density(m) => op.expectation_density(m),
        }
    }

    /// `⟨ψ|P|ψ⟩` or `tr(ρP)` for a projector `P`.
    pub fn projector_weight(&self, projector: &DMatrix<Complex64>) -> f64 {
        match self {
            QuantumState::Vector(v) => (v.adjoint() * projector * v)[(0, 0)].re,
            QuantumState::Density(m) => (projector * m).trace().re,
        }
    }
}

/// `(1-s)·H_I + s·H_T` for `s ∈ [0, 1]`.
pub fn interpolate(
    h_initial: &HermitianOperator,
    h_target: &HermitianOperator,
    s: f64,
) -> Result<HermitianOperator, AqsError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(AqsError::InvalidPathParameter(format!(
            "interpolation parameter s = {s} outside [0, 1]"
        )));
    }
    h_initial.scaled(1.0 - s).add(&h_target.scaled(s))
}

/// Evolves a state under a time-dependent Hamiltonian from `t0` to `t1`
/// with `n_steps` equal steps, sampling the Hamiltonian at each midpoint.
pub fn evolve_closed<F>(
    state: &QuantumState,
    hamiltonian_at: F,
    t0: f64,
    t1: f64,
    n_steps: usize,
) -> Result<QuantumState, AqsError>
where
    F: Fn(f64) -> HermitianOperator,
{
    if n_steps == 0 || !(t1 - t0).is_finite() || t1 < t0 {
        return Err(AqsError::InvalidPathParameter(format!(
            "bad evolution window [{t0}, {t1}] with {n_steps} steps"
        )));
    }
    let dt = (t1 - t0) / n_steps as f64;
    let mut current = state.clone();
    for k in 0..n_steps {
        let t_mid = t0 + (k as f64 + 0.5) * dt;
        let h = hamiltonian_at(t_mid);
        if h.dim() != current.dim() {
            return Err(AqsError::DimensionError(format!(
                "Hamiltonian dimension {} does not match state dimension {}",
                h.dim(),
                current.dim()
            )));
        }
        current = current.apply_unitary(&h.evolution_unitary(dt));
    }
    Ok(current)
}

/// Scans the sweep on a uniform `resolution`-point grid over `s ∈ [0, 1]`
/// and returns the smallest gap between the (degeneracy-grouped) ground
/// level and the first distinct level above it, with its location.
pub fn min_gap(
    h_initial: &HermitianOperator,
    h_target: &HermitianOperator,
    resolution: usize,
) -> Result<(f64, f64), AqsError> {
    if resolution < 2 {
        return Err(AqsError::InvalidPathParameter(format!(
            "gap scan needs at least 2 grid points, got {resolution}"
        )));
    }
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..resolution {
        let s = i as f64 / (resolution - 1) as f64;
        let h = interpolate(h_initial, h_target, s)?;
        // a fully degenerate spectrum has no level to climb to: gap 0
        let gap = h.ground_gap().unwrap_or(0.0);
        if gap < best.0 {
            best = (gap, s);
        }
    }
    Ok(best)
}

/// Weight of a state in the ground subspace of `h`.
pub fn ground_subspace_fidelity(state: &QuantumState, h: &HermitianOperator) -> f64 {
    state.projector_weight(&h.ground_projector())
}

/// Sweeps `initial` from `h_initial` to `h_target` along the schedule and
/// reports the evolved state with its fidelity to the target ground
/// subspace. `initial` must itself lie in the ground subspace of
/// `h_initial`.
pub fn adiabatic_prepare(
    h_initial: &HermitianOperator,
    h_target: &HermitianOperator,
    schedule: &Schedule,
    initial: &QuantumState,
) -> Result<(QuantumState, f64), AqsError> {
    if h_initial.dim() != h_target.dim() || h_initial.dim() != initial.dim() {
        return Err(AqsError::DimensionError(format!(
            "initial {}, target {} and state {} dimensions must agree",
            h_initial.dim(),
            h_target.dim(),
            initial.dim()
        )));
    }
    let fid0 = ground_subspace_fidelity(initial, h_initial);
    if fid0 < 1.0 - STATE_TOL {
        return Err(AqsError::BadInitialState { fidelity: fid0 });
    }
    let total = schedule.total_time;
    let path = schedule.path;
    let ham = |t: f64| {
        let s = path.s((t / total).clamp(0.0, 1.0));
        interpolate(h_initial, h_target, s).expect("s clamped to [0, 1]")
    };
    let evolved = evolve_closed(initial, ham, 0.0, total, schedule.n_steps)?;
    let fidelity = ground_subspace_fidelity(&evolved, h_target);
    Ok((evolved, fidelity))
}
