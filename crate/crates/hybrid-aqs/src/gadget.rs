//! Perturbative mediator gadget generating an effective three-body
//! coupling.
//!
//! Three system qubits and one mediator qubit (the last tensor factor)
//! carry a strong penalty `H_p = Δ|1⟩⟨1|_m` and a structured perturbation
//! `V` built from single-qubit involutions `A_1, A_2, A_3`. For
//! `Δ ≥ ε⁻³` the low-energy physics of `H_p + V` reproduces
//! `y + J·A_1⊗A_2⊗A_3` up to an error that shrinks linearly in `ε`,
//! certified here through the order-(z-Δ)⁻² self-energy expansion
//!
//! `Σ₋(z) = V₀₀ + V₀₁V₁₀/(z-Δ) + V₀₁V₁₁V₁₀/(z-Δ)²`
//!
//! evaluated across the low-energy window `|z| ≤ 2|J| + ε`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::AqsError;
use crate::operator::{embed_single_qubit, ket0_projector, ket1_projector, sigma_x, HermitianOperator};

/// Accuracy constant of the gadget guarantee: errors stay below `C·ε`.
pub const C_GADGET: f64 = 10.0;

/// Default number of evaluation points across the low-energy window.
pub const DEFAULT_GRID_POINTS: usize = 21;

const INVOLUTION_TOL: f64 = 1e-12;

/// Couplings, accuracy target and operator content of one gadget instance.
#[derive(Debug, Clone)]
pub struct GadgetSpec {
    coupling: f64,
    epsilon: f64,
    delta: f64,
    a_ops: [HermitianOperator; 3],
    background: HermitianOperator,
}

impl GadgetSpec {
    /// Validates `ε > 0`, `Δ ≥ ε⁻³`, and that every `A_i` is a 2×2
    /// Hermitian involution. `background` is an optional 8-dimensional term
    /// acting on the three system qubits (`y` in the construction).
    pub fn new(
        coupling: f64,
        epsilon: f64,
        delta: f64,
        a_ops: [HermitianOperator; 3],
        background: Option<HermitianOperator>,
    ) -> Result<Self, AqsError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(AqsError::InvalidGadgetOperator(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(AqsError::InvalidGap(delta));
        }
        let floor = epsilon.powi(-3);
        if delta < floor * (1.0 - 1e-12) {
            return Err(AqsError::InvalidGadgetOperator(format!(
                "penalty gap {delta} below the required epsilon^-3 = {floor}"
            )));
        }
        if !coupling.is_finite() {
            return Err(AqsError::InvalidGadgetOperator(format!(
                "coupling must be finite, got {coupling}"
            )));
        }
        for (i, a) in a_ops.iter().enumerate() {
            if a.dim() != 2 {
                return Err(AqsError::InvalidGadgetOperator(format!(
                    "A_{} must be 2x2, got dimension {}",
                    i + 1,
                    a.dim()
                )));
            }
            let sq = a.matmul(a);
            let dev = (&sq - DMatrix::<Complex64>::identity(2, 2)).norm();
            if dev > INVOLUTION_TOL {
                return Err(AqsError::InvalidGadgetOperator(format!(
                    "A_{} is not an involution: ‖A² - 1‖ = {dev:.3e}",
                    i + 1
                )));
            }
        }
        let background = background.unwrap_or_else(|| HermitianOperator::zeros(8));
        if background.dim() != 8 {
            return Err(AqsError::InvalidGadgetOperator(format!(
                "background term must act on the three system qubits (dimension 8), got {}",
                background.dim()
            )));
        }
        Ok(Self {
            coupling,
            epsilon,
            delta,
            a_ops,
            background,
        })
    }

    /// The canonical instance: `A_i = Z`, no background, `Δ = ε⁻³`.
    pub fn pauli_z(coupling: f64, epsilon: f64) -> Result<Self, AqsError> {
        let z = || HermitianOperator::new(crate::operator::sigma_z()).unwrap();
        Self::new(coupling, epsilon, epsilon.powi(-3), [z(), z(), z()], None)
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Half-width of the low-energy window: `|z| ≤ 2|J| + ε`.
    pub fn z_range(&self) -> f64 {
        2.0 * self.coupling.abs() + self.epsilon
    }

    /// The effective Hamiltonian the gadget is meant to produce:
    /// `y + J·A_1⊗A_2⊗A_3` on the three system qubits.
    pub fn target(&self) -> HermitianOperator {
        let triple = self.a_ops[0]
            .matrix()
            .kronecker(self.a_ops[1].matrix())
            .kronecker(self.a_ops[2].matrix());
        let m = self.background.matrix() + triple * Complex64::new(self.coupling, 0.0);
        HermitianOperator::new(m).expect("sum of Hermitian terms")
    }
}

/// `H_p = Δ·|1⟩⟨1|` on the mediator, embedded in the 16-dimensional space.
pub fn build_penalty(delta: f64) -> Result<HermitianOperator, AqsError> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(AqsError::InvalidGap(delta));
    }
    let m = DMatrix::<Complex64>::identity(8, 8).kronecker(&ket1_projector())
        * Complex64::new(delta, 0.0);
    HermitianOperator::new(m)
}

/// The perturbation
/// `V = y + Δ^{1/3}|0⟩⟨0|_m − Δ^{1/3}A₁A₂ + (Δ^{2/3}/√2)(A₂−A₁)σx_m
///    + J·A₃(1 − Δ^{2/3}|1⟩⟨1|_m)`
/// on the 16-dimensional space (system qubits 1–3, then the mediator).
pub fn build_perturbation(spec: &GadgetSpec) -> Result<HermitianOperator, AqsError> {
    let d13 = spec.delta.cbrt();
    let d23 = d13 * d13;
    let id8 = DMatrix::<Complex64>::identity(8, 8);
    let id2 = DMatrix::<Complex64>::identity(2, 2);

    let a1 = embed_single_qubit(spec.a_ops[0].matrix(), 0, 3);
    let a2 = embed_single_qubit(spec.a_ops[1].matrix(), 1, 3);
    let a3 = embed_single_qubit(spec.a_ops[2].matrix(), 2, 3);

    let mut v = spec.background.matrix().kronecker(&id2);
    v += id8.kronecker(&ket0_projector()) * Complex64::new(d13, 0.0);
    v -= (&a1 * &a2).kronecker(&id2) * Complex64::new(d13, 0.0);
    v += (&a2 - &a1).kronecker(&sigma_x()) * Complex64::new(d23 / 2f64.sqrt(), 0.0);
    v += a3.kronecker(&(&id2 - ket1_projector() * Complex64::new(d23, 0.0)))
        * Complex64::new(spec.coupling, 0.0);
    HermitianOperator::new(v)
}

/// Self-energy expansion at real energy `z`, an operator on the three
/// system qubits, plus a flag telling whether `z` lies inside the window
/// where the expansion is certified. Out-of-window values are still
/// computed.
pub fn self_energy(z: f64, spec: &GadgetSpec) -> Result<(HermitianOperator, bool), AqsError> {
    let v = build_perturbation(spec)?;
    let denom = z - spec.delta;
    if denom == 0.0 {
        return Err(AqsError::InvalidPathParameter(
            "self-energy pole: z coincides with the penalty gap".into(),
        ));
    }
    let (v00, v01, v10, v11) = mediator_blocks(v.matrix());
    let second = &v01 * &v10 / Complex64::new(denom, 0.0);
    let third = &v01 * &v11 * &v10 / Complex64::new(denom * denom, 0.0);
    let sigma = HermitianOperator::new(v00 + second + third)?;
    Ok((sigma, z.abs() <= spec.z_range()))
}

/// Splits a 16×16 matrix into mediator blocks; the mediator is the last
/// (fastest-varying) tensor factor, so block `(a, b)` reads rows `2i+a`,
/// columns `2j+b`.
fn mediator_blocks(
    v: &DMatrix<Complex64>,
) -> (
    DMatrix<Complex64>,
    DMatrix<Complex64>,
    DMatrix<Complex64>,
    DMatrix<Complex64>,
) {
    let block = |a: usize, b: usize| DMatrix::from_fn(8, 8, |i, j| v[(2 * i + a, 2 * j + b)]);
    (block(0, 0), block(0, 1), block(1, 0), block(1, 1))
}

/// Outcome of a gadget verification run.
#[derive(Debug, Clone, Serialize)]
pub struct GadgetReport {
    pub epsilon: f64,
    pub delta: f64,
    pub coupling: f64,
    pub grid_points: usize,
    /// `max_z ‖Σ₋(z) − (y + J·A₁A₂A₃)‖₂` over the window grid.
    pub max_error: f64,
    /// Max absolute mismatch between the 8 lowest eigenvalues of `H_p + V`
    /// and the spectrum of the target, both sorted.
    pub spectrum_deviation: f64,
    /// Smallest mediator-ground weight among the 8 lowest eigenvectors.
    pub min_mediator_weight: f64,
    /// `max_error ≤ C_GADGET · ε`.
    pub pass: bool,
}

/// Evaluates the self-energy across `grid_points` evenly spaced energies
/// spanning the low-energy window and compares the low spectrum of
/// `H_p + V` against the target.
pub fn verify_gadget(spec: &GadgetSpec, grid_points: usize) -> Result<GadgetReport, AqsError> {
    if grid_points < 2 {
        return Err(AqsError::InvalidPathParameter(format!(
            "self-energy grid needs at least 2 points, got {grid_points}"
        )));
    }
    let target = spec.target();
    let zr = spec.z_range();

    let mut max_error: f64 = 0.0;
    for i in 0..grid_points {
        let z = -zr + 2.0 * zr * i as f64 / (grid_points - 1) as f64;
        let (sigma, in_range) = self_energy(z, spec)?;
        debug_assert!(in_range);
        let diff = sigma.matrix() - target.matrix();
        let err = HermitianOperator::new(diff)?.spectral_norm();
        max_error = max_error.max(err);
    }

    let total = build_penalty(spec.delta)?.add(&build_perturbation(spec)?)?;
    let dec = total.spectral_decomposition();
    let target_eigs = &target.spectral_decomposition().eigenvalues;
    let mut spectrum_deviation: f64 = 0.0;
    for k in 0..8 {
        spectrum_deviation = spectrum_deviation.max((dec.eigenvalues[k] - target_eigs[k]).abs());
    }

    // weight of each low eigenvector on the mediator-|0⟩ sector
    let mut min_mediator_weight: f64 = 1.0;
    for k in 0..8 {
        let col = dec.eigenvectors.column(k);
        let w: f64 = (0..8).map(|r| col[2 * r].norm_sqr()).sum();
        min_mediator_weight = min_mediator_weight.min(w);
    }

    Ok(GadgetReport {
        epsilon: spec.epsilon,
        delta: spec.delta,
        coupling: spec.coupling,
        grid_points,
        max_error,
        spectrum_deviation,
        min_mediator_weight,
        pass: max_error <= C_GADGET * spec.epsilon,
    })
}
