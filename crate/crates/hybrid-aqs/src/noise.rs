//! Open-system propagation under independent per-qubit Ohmic baths.
//!
//! Each qubit couples to its own bosonic bath through
//! `D = λ(cos α·σz + sin α·σx)`. In the weak-coupling Born-Markov limit
//! the reduced dynamics is a Lindblad equation whose jump operators are
//! the components of `D` between eigenspaces of the current Hamiltonian,
//! with rates fixed by the Ohmic spectral density and detailed balance.
//! The generator is rebuilt in the instantaneous eigenbasis at every
//! macro-step of the sweep and exponentiated exactly, which keeps the map
//! completely positive and trace preserving per step.
//!
//! The coupling strength λ and mixing angle α are solved from target
//! decoherence times through
//!
//! `1/T1 = λ² sin²α · 2πΔ_q · coth(βΔ_q/2)`
//! `1/T2 = 1/(2T1) + λ² cos²α · 4π/β`
//!
//! so a decoupled qubit prepared excited relaxes with the configured T1
//! and its coherence decays with the configured T2.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::AqsError;
use crate::evolution::QuantumState;
use crate::operator::{embed_single_qubit, sigma_x, sigma_z, HermitianOperator};

/// One-sided Ohmic spectral density with a hard cutoff:
/// `J(ω) = ω·Θ(ω)·Θ(ω_c − ω)` (ħ = 1).
pub fn ohmic_density(omega: f64, omega_c: f64) -> f64 {
    if omega > 0.0 && omega < omega_c {
        omega
    } else {
        0.0
    }
}

/// Bose occupation at inverse temperature β.
pub fn bose_occupation(omega: f64, beta: f64) -> f64 {
    1.0 / ((beta * omega).exp_m1())
}

/// Golden-rule rate at Bohr frequency ω: emission `2πJ(ω)(N(ω)+1)` for
/// ω > 0, absorption `2πJ(|ω|)N(|ω|)` for ω < 0, and the dephasing limit
/// `2π/β` at ω = 0. All three branches are the single smooth function
/// `2πω/(1 − e^{−βω})`, zero outside the cutoff window.
pub fn transition_rate(omega: f64, beta: f64, omega_c: f64) -> f64 {
    if omega.abs() > omega_c {
        return 0.0;
    }
    let x = beta * omega;
    if x.abs() < 1e-6 {
        // ω/(1 − e^{−βω}) → (1/β)(1 + βω/2 + O(β²ω²))
        2.0 * std::f64::consts::PI * (1.0 + 0.5 * x) / beta
    } else {
        2.0 * std::f64::consts::PI * omega / (-(-x).exp_m1())
    }
}

/// `λ(cos α·σz + sin α·σx)` on one qubit.
pub fn coupling_operator(lambda: f64, alpha: f64) -> DMatrix<Complex64> {
    sigma_z() * Complex64::new(lambda * alpha.cos(), 0.0)
        + sigma_x() * Complex64::new(lambda * alpha.sin(), 0.0)
}

/// Forward formula: relaxation rate 1/T1 produced by (λ, α) on a qubit of
/// splitting Δ_q at inverse temperature β.
pub fn relaxation_rate(lambda: f64, alpha: f64, beta: f64, delta_q: f64) -> f64 {
    let s2 = alpha.sin() * alpha.sin();
    lambda * lambda * s2 * 2.0 * std::f64::consts::PI * delta_q / (0.5 * beta * delta_q).tanh()
}

/// Forward formula: total decoherence rate 1/T2 = 1/(2T1) + Γφ.
pub fn decoherence_rate(lambda: f64, alpha: f64, beta: f64, delta_q: f64) -> f64 {
    let c2 = alpha.cos() * alpha.cos();
    0.5 * relaxation_rate(lambda, alpha, beta, delta_q)
        + lambda * lambda * c2 * 4.0 * std::f64::consts::PI / beta
}

/// Inverts the forward rate formulas for `λ > 0, α ∈ [0, π/2]`.
/// Times and β in internal units. `T1 = ∞` (pure dephasing) and
/// `T2 = 2T1` (no pure dephasing) are both admissible limits.
pub fn solve_coupling(t1: f64, t2: f64, beta: f64, delta_q: f64) -> Result<(f64, f64), AqsError> {
    if !(t1 > 0.0 && t2 > 0.0) {
        return Err(AqsError::Unphysical(format!(
            "decoherence times must be positive, got T1 = {t1}, T2 = {t2}"
        )));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(AqsError::Unphysical(format!(
            "inverse temperature must be positive and finite, got {beta}"
        )));
    }
    if !(delta_q > 0.0) {
        return Err(AqsError::Unphysical(format!(
            "qubit splitting must be positive, got {delta_q}"
        )));
    }
    let inv_t1 = if t1.is_finite() { 1.0 / t1 } else { 0.0 };
    let inv_t2 = if t2.is_finite() { 1.0 / t2 } else { 0.0 };
    let pure_dephasing = inv_t2 - 0.5 * inv_t1;
    if pure_dephasing < -1e-12 * inv_t2.max(inv_t1) {
        return Err(AqsError::Unphysical(format!(
            "T2 = {t2} exceeds the 2·T1 = {} bound",
            2.0 * t1
        )));
    }
    let u = inv_t1 / (2.0 * std::f64::consts::PI * delta_q / (0.5 * beta * delta_q).tanh());
    let v = pure_dephasing.max(0.0) * beta / (4.0 * std::f64::consts::PI);
    let lambda = (u + v).sqrt();
    let alpha = u.sqrt().atan2(v.sqrt());
    Ok((lambda, alpha))
}

/// One qubit's bath: target decoherence times plus the derived coupling.
/// All quantities in internal units (callers convert physical units first).
#[derive(Debug, Clone)]
pub struct BathSpec {
    t1: f64,
    t_phi: f64,
    beta: f64,
    omega_c: f64,
    delta_q: f64,
    lambda: f64,
    alpha: f64,
}

impl BathSpec {
    /// `t_phi` is the pure-dephasing time; the total coherence time obeys
    /// `1/T2 = 1/(2T1) + 1/T_φ`. Requires the cutoff above the reference
    /// splitting.
    pub fn new(t1: f64, t_phi: f64, beta: f64, omega_c: f64, delta_q: f64) -> Result<Self, AqsError> {
        if !(t_phi > 0.0) {
            return Err(AqsError::Unphysical(format!(
                "pure dephasing time must be positive, got {t_phi}"
            )));
        }
        if !(omega_c > delta_q) {
            return Err(AqsError::Unphysical(format!(
                "bath cutoff {omega_c} must lie above the qubit splitting {delta_q}"
            )));
        }
        let inv_t2 = if t1.is_finite() { 0.5 / t1 } else { 0.0 }
            + if t_phi.is_finite() { 1.0 / t_phi } else { 0.0 };
        let t2 = if inv_t2 > 0.0 { 1.0 / inv_t2 } else { f64::INFINITY };
        let (lambda, alpha) = solve_coupling(t1, t2, beta, delta_q)?;
        // round-trip guard: the inversion must reproduce the targets
        if t1.is_finite() {
            let rt = relaxation_rate(lambda, alpha, beta, delta_q);
            if (rt - 1.0 / t1).abs() > 1e-9 / t1 {
                return Err(AqsError::Unphysical(format!(
                    "coupling inversion failed to reproduce T1 = {t1}"
                )));
            }
        }
        if t2.is_finite() {
            let rt = decoherence_rate(lambda, alpha, beta, delta_q);
            if (rt - 1.0 / t2).abs() > 1e-9 / t2 {
                return Err(AqsError::Unphysical(format!(
                    "coupling inversion failed to reproduce T2 = {t2}"
                )));
            }
        }
        Ok(Self {
            t1,
            t_phi,
            beta,
            omega_c,
            delta_q,
            lambda,
            alpha,
        })
    }

    /// A bath that does not couple at all; the open propagator reduces to
    /// the unitary one.
    pub fn decoupled(beta: f64, omega_c: f64) -> Self {
        Self {
            t1: f64::INFINITY,
            t_phi: f64::INFINITY,
            beta,
            omega_c,
            delta_q: 0.0,
            lambda: 0.0,
            alpha: 0.0,
        }
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn t_phi(&self) -> f64 {
        self.t_phi
    }

    /// Total coherence time implied by (T1, T_φ).
    pub fn t2(&self) -> f64 {
        let inv = if self.t1.is_finite() { 0.5 / self.t1 } else { 0.0 }
            + if self.t_phi.is_finite() { 1.0 / self.t_phi } else { 0.0 };
        if inv > 0.0 {
            1.0 / inv
        } else {
            f64::INFINITY
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn omega_c(&self) -> f64 {
        self.omega_c
    }

    pub fn delta_q(&self) -> f64 {
        self.delta_q
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn coupling_matrix(&self) -> DMatrix<Complex64> {
        coupling_operator(self.lambda, self.alpha)
    }
}

/// Independent baths, one per qubit, plus the Lamb-shift toggle.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    baths: Vec<BathSpec>,
    lamb_shift_enabled: bool,
}

impl NoiseModel {
    pub fn new(baths: Vec<BathSpec>, lamb_shift_enabled: bool) -> Result<Self, AqsError> {
        if baths.is_empty() {
            return Err(AqsError::Unphysical("need at least one bath".into()));
        }
        Ok(Self {
            baths,
            lamb_shift_enabled,
        })
    }

    /// Same bath on every qubit.
    pub fn uniform(n_qubits: usize, bath: BathSpec, lamb_shift_enabled: bool) -> Result<Self, AqsError> {
        Self::new(vec![bath; n_qubits.max(1)], lamb_shift_enabled)
    }

    pub fn n_qubits(&self) -> usize {
        self.baths.len()
    }

    pub fn baths(&self) -> &[BathSpec] {
        &self.baths
    }

    pub fn lamb_shift_enabled(&self) -> bool {
        self.lamb_shift_enabled
    }
}

/// Cauchy principal value of `∫_a^b f(ω')/(ω − ω') dω'` by singularity
/// subtraction and composite Simpson quadrature. Valid for ω strictly
/// inside or outside (a, b); `f` must be smooth on [a, b].
fn pv_integral<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, omega: f64) -> f64 {
    const N: usize = 2048; // even
    let fw = f(omega);
    let h = (b - a) / N as f64;
    let near = 1e-9 * omega.abs().max(1.0);
    let integrand = |w: f64| {
        if (omega - w).abs() < near {
            // removable point: limit is −f'(ω)
            let d = 1e-6 * omega.abs().max(1.0);
            -(f(omega + d) - f(omega - d)) / (2.0 * d)
        } else {
            (f(w) - fw) / (omega - w)
        }
    };
    let mut acc = integrand(a) + integrand(b);
    for k in 1..N {
        let w = a + k as f64 * h;
        acc += integrand(w) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let smooth = acc * h / 3.0;
    smooth + fw * ((omega - a).abs() / (omega - b).abs()).ln()
}

/// Lamb-shift coefficient `S(ω) = (1/2π)·P∫_{−ω_c}^{ω_c} γ(ω')/(ω−ω') dω'`
/// with γ the in-window rate function. The correction enters the effective
/// Hamiltonian as `Σ_ω S(ω)·A†(ω)A(ω)`.
pub fn lamb_shift_coefficient(omega: f64, beta: f64, omega_c: f64) -> f64 {
    // keep the log kernel finite if a transition sits exactly at the cutoff
    let w = if (omega.abs() - omega_c).abs() < 1e-9 {
        omega.signum() * (omega_c + 1e-9)
    } else {
        omega
    };
    let gamma_in = |wp: f64| {
        let x = beta * wp;
        if x.abs() < 1e-6 {
            2.0 * std::f64::consts::PI * (1.0 + 0.5 * x) / beta
        } else {
            2.0 * std::f64::consts::PI * wp / (-(-x).exp_m1())
        }
    };
    pv_integral(gamma_in, -omega_c, omega_c, w) / (2.0 * std::f64::consts::PI)
}

/// Jump operators of one coupling operator in the eigenbasis of the
/// current Hamiltonian: entries of `V†DV` grouped by Bohr frequency with
/// the secular approximation between non-degenerate frequencies.
fn jump_operators(
    d_eig: &DMatrix<Complex64>,
    groups: &[(f64, std::ops::Range<usize>)],
    tol: f64,
) -> Vec<(f64, DMatrix<Complex64>)> {
    let dim = d_eig.nrows();
    // Bohr frequencies ω = E_col − E_row over all eigenvalue-group pairs
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(groups.len() * groups.len());
    for (i, (ei, _)) in groups.iter().enumerate() {
        for (j, (ej, _)) in groups.iter().enumerate() {
            pairs.push((ej - ei, i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut out: Vec<(f64, DMatrix<Complex64>)> = Vec::new();
    let mut members: Vec<(f64, usize, usize)> = Vec::new();
    let flush = |members: &mut Vec<(f64, usize, usize)>, out: &mut Vec<(f64, DMatrix<Complex64>)>| {
        if members.is_empty() {
            return;
        }
        let omega = members.iter().map(|m| m.0).sum::<f64>() / members.len() as f64;
        let mut a = DMatrix::<Complex64>::zeros(dim, dim);
        for &(_, gi, gj) in members.iter() {
            for r in groups[gi].1.clone() {
                for c in groups[gj].1.clone() {
                    a[(r, c)] = d_eig[(r, c)];
                }
            }
        }
        if a.iter().any(|z| z.norm_sqr() > 0.0) {
            out.push((omega, a));
        }
        members.clear();
    };
    let mut last = f64::NEG_INFINITY;
    for p in pairs {
        if !members.is_empty() && (p.0 - last).abs() > tol {
            flush(&mut members, &mut out);
        }
        last = p.0;
        members.push(p);
    }
    flush(&mut members, &mut out);
    out
}

/// Liouvillian of the current macro-step, expressed in the eigenbasis of
/// `h`. Returns the eigenvector matrix and the generator acting on
/// column-stacked density matrices.
fn step_generator(
    h: &HermitianOperator,
    noise: &NoiseModel,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>), AqsError> {
    let n = noise.n_qubits();
    let dim = h.dim();
    if dim != 1usize << n {
        return Err(AqsError::DimensionError(format!(
            "noise model covers {n} qubits but the Hamiltonian has dimension {dim}"
        )));
    }
    let dec = h.spectral_decomposition();
    let v = dec.eigenvectors.clone();
    let groups = h.eigenvalue_groups();
    let tol = h.degeneracy_tolerance();
    let id = DMatrix::<Complex64>::identity(dim, dim);

    let mut h_eff = DMatrix::<Complex64>::from_diagonal(
        &DVector::from_iterator(dim, dec.eigenvalues.iter().map(|&e| Complex64::new(e, 0.0))),
    );
    let mut dissipator = DMatrix::<Complex64>::zeros(dim * dim, dim * dim);

    for (k, bath) in noise.baths().iter().enumerate() {
        if bath.lambda() == 0.0 {
            continue;
        }
        let d_full = embed_single_qubit(&bath.coupling_matrix(), k, n);
        let d_eig = v.adjoint() * &d_full * &v;
        for (omega, a) in jump_operators(&d_eig, &groups, tol) {
            let ad_a = a.adjoint() * &a;
            let gamma = transition_rate(omega, bath.beta(), bath.omega_c());
            if gamma > 0.0 {
                let sandwich = a.conjugate().kronecker(&a);
                let anticom =
                    id.kronecker(&ad_a) + ad_a.transpose().kronecker(&id);
                dissipator += (sandwich - anticom * Complex64::new(0.5, 0.0))
                    * Complex64::new(gamma, 0.0);
            }
            if noise.lamb_shift_enabled() {
                let s = lamb_shift_coefficient(omega, bath.beta(), bath.omega_c());
                h_eff += ad_a * Complex64::new(s, 0.0);
            }
        }
    }

    let minus_i = Complex64::new(0.0, -1.0);
    let liouvillian = (id.kronecker(&h_eff) - h_eff.transpose().kronecker(&id)) * minus_i
        + dissipator;
    Ok((v, liouvillian))
}

/// Integrates the Lindblad equation across `[t0, t1]` in `n_steps`
/// macro-steps. The Hamiltonian is sampled at each step midpoint, the
/// generator is rebuilt in its eigenbasis, and the step map is the exact
/// exponential of the frozen Liouvillian. Vector states are promoted to
/// density matrices.
pub fn evolve_open<F>(
    state: &QuantumState,
    hamiltonian: F,
    noise: &NoiseModel,
    t0: f64,
    t1: f64,
    n_steps: usize,
) -> Result<QuantumState, AqsError>
where
    F: Fn(f64) -> HermitianOperator,
{
    if n_steps == 0 {
        return Err(AqsError::InvalidPathParameter(
            "open evolution needs at least one step".into(),
        ));
    }
    if !(t1 >= t0) {
        return Err(AqsError::InvalidPathParameter(format!(
            "evolution interval is reversed: [{t0}, {t1}]"
        )));
    }
    let dim = state.dim();
    if dim != 1usize << noise.n_qubits() {
        return Err(AqsError::DimensionError(format!(
            "state dimension {dim} does not match {} noisy qubits",
            noise.n_qubits()
        )));
    }
    let mut rho = state.to_density();
    let dt = (t1 - t0) / n_steps as f64;
    for k in 0..n_steps {
        let tm = t0 + (k as f64 + 0.5) * dt;
        let h = hamiltonian(tm);
        if h.dim() != dim {
            return Err(AqsError::DimensionError(format!(
                "Hamiltonian dimension {} does not match state dimension {dim}",
                h.dim()
            )));
        }
        let (v, liouvillian) = step_generator(&h, noise)?;
        let prop = (liouvillian * Complex64::new(dt, 0.0)).exp();
        let rho_eig = v.adjoint() * &rho * &v;
        let stacked = DVector::from_iterator(dim * dim, rho_eig.iter().cloned());
        let advanced = &prop * stacked;
        let rho_eig = DMatrix::from_iterator(dim, dim, advanced.iter().cloned());
        rho = &v * rho_eig * v.adjoint();
        // scrub roundoff asymmetry; trace and positivity are left to the map
        rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    }
    QuantumState::density(rho)
}

/// Draws per-qubit (T1, T_φ) pairs from independent normals truncated at
/// 3σ (and at zero). Draw order is qubit-major, T1 before T_φ, so a fixed
/// seed reproduces the exact sequence. Units follow the supplied means.
pub fn sample_bath_parameters<R: Rng + ?Sized>(
    rng: &mut R,
    n_qubits: usize,
    t1_mean: f64,
    t1_sd: f64,
    tphi_mean: f64,
    tphi_sd: f64,
) -> Vec<(f64, f64)> {
    (0..n_qubits)
        .map(|_| {
            (
                truncated_normal(rng, t1_mean, t1_sd),
                truncated_normal(rng, tphi_mean, tphi_sd),
            )
        })
        .collect()
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    let dist = Normal::new(mean, sd).expect("finite parameters");
    loop {
        let x = dist.sample(rng);
        if (x - mean).abs() <= 3.0 * sd && x > 0.0 {
            return x;
        }
    }
}
