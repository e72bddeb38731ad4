//! End-to-end experiment pipeline: JSON config → seeded model build →
//! gap scan → adiabatic preparation (closed or open) → probe scan →
//! damped-cosine fit → ground-energy estimate, with flat-file artifacts.
//!
//! All randomness flows from one master seed through fixed substreams
//! (graph draw, bath draw, per-point shot draws), so toggling one source
//! of randomness never shifts the draws of another.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::AqsError;
use crate::estimation::{estimate_observable, fit_damped_cosine, FitResult};
use crate::evolution::{
    adiabatic_prepare, ground_subspace_fidelity, interpolate, min_gap, QuantumState, Schedule,
    SchedulePath,
};
use crate::measurement::{
    attach_probe, run_scan, verify_ground_lemma, CoupledSystem, LemmaReport, ProbeSpec,
    RamseyDataset,
};
use crate::noise::{evolve_open, sample_bath_parameters, BathSpec, NoiseModel};
use crate::operator::HermitianOperator;
use crate::spin_model::{build_hamiltonian, Pauli, PauliTerm, SpinGraph};
use crate::units::UnitSystem;

/// Substream for drawing the random target graph.
pub const GRAPH_STREAM_DOMAIN: u64 = 1;

/// Substream for drawing per-qubit bath parameters. Shot draws use the
/// measurement module's domain 3; the fit consumes no randomness.
pub const BATH_STREAM_DOMAIN: u64 = 2;

/// Grid points for the minimum-gap scan over the sweep parameter.
pub const GAP_SCAN_RESOLUTION: usize = 512;

/// Reference level splitting (in units of the base energy scale) at which
/// each bath's coupling is matched to its drawn (T1, T_φ) pair.
pub const BATH_REFERENCE_SPLITTING: f64 = 1.0;

const SCAN_CSV_HEADER: &str = "t_index,t_seconds,shots,successes,p0_exact,p0_hat";
const PLOT_CSV_HEADER: &str = "t_seconds,p0_exact,p0_hat,fit_curve";

fn substream(seed: u64, domain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(domain << 32);
    rng
}

fn stage<T>(name: &'static str, result: Result<T, AqsError>) -> Result<T, AqsError> {
    result.map_err(|e| AqsError::Stage {
        stage: name,
        source: Box::new(e),
    })
}

// ---------------------------------------------------------------------------
// Configuration

/// Where the target spin graph comes from: a seeded random draw on a fixed
/// vertex/edge layout, or an explicit graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    Random {
        n_vertices: usize,
        edges: Vec<[usize; 2]>,
    },
    Explicit(SpinGraph),
}

/// Initial Hamiltonian of the sweep; the default is a uniform transverse
/// field, whose ground state is a product state that is easy to prepare.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSource {
    TransverseField { strength: f64 },
    Explicit(SpinGraph),
}

impl Default for InitialSource {
    fn default() -> Self {
        Self::TransverseField { strength: 1.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Probe splitting in units of the base energy scale. When absent the
    /// splitting defaults to `1 + Σ|c|` over the target coefficients, which
    /// clears the whole spectrum of the target Hamiltonian.
    #[serde(default)]
    pub delta_over_omega0: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathConfig {
    #[default]
    Linear,
}

impl PathConfig {
    pub fn schedule_path(self) -> SchedulePath {
        match self {
            PathConfig::Linear => SchedulePath::Linear,
        }
    }
}

fn default_total_time_us() -> f64 {
    0.4
}
fn default_steps() -> usize {
    6000
}
fn default_macro_steps() -> usize {
    240
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Sweep duration. Longer is more adiabatic but, with noise enabled,
    /// also more thermalized; at millikelvin temperatures the thermal state
    /// is nearly uniform, so over-long sweeps erase the ground signal.
    #[serde(default = "default_total_time_us")]
    pub total_time_us: f64,
    /// Unitary steps for the closed sweep.
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Generator rebuilds for the open (noisy) sweep.
    #[serde(default = "default_macro_steps")]
    pub open_macro_steps: usize,
    #[serde(default)]
    pub path: PathConfig,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            total_time_us: default_total_time_us(),
            steps: default_steps(),
            open_macro_steps: default_macro_steps(),
            path: PathConfig::Linear,
        }
    }
}

fn default_periods() -> f64 {
    2.0
}
fn default_n_points() -> usize {
    40
}
fn default_shots() -> u64 {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Explicit scan window; when absent the window spans `periods` cycles
    /// of the coarse frequency `δ + ⟨A⟩` taken in the prepared state.
    #[serde(default)]
    pub t_max_us: Option<f64>,
    #[serde(default = "default_periods")]
    pub periods: f64,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    #[serde(default = "default_shots")]
    pub shots: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            t_max_us: None,
            periods: default_periods(),
            n_points: default_n_points(),
            shots: default_shots(),
        }
    }
}

fn default_true() -> bool {
    true
}
fn default_temperature_mk() -> f64 {
    20.0
}
fn default_cutoff() -> f64 {
    20.0
}
fn default_t1_mean() -> f64 {
    1.0
}
fn default_t1_sd() -> f64 {
    0.1
}
fn default_tphi_mean() -> f64 {
    1.3
}
fn default_tphi_sd() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(rename = "temperature_mK", default = "default_temperature_mk")]
    pub temperature_mk: f64,
    #[serde(default = "default_cutoff")]
    pub omega_c_over_omega0: f64,
    #[serde(rename = "T1_mean_us", default = "default_t1_mean")]
    pub t1_mean_us: f64,
    #[serde(rename = "T1_sd_us", default = "default_t1_sd")]
    pub t1_sd_us: f64,
    #[serde(rename = "Tphi_mean_us", default = "default_tphi_mean")]
    pub tphi_mean_us: f64,
    #[serde(rename = "Tphi_sd_us", default = "default_tphi_sd")]
    pub tphi_sd_us: f64,
    #[serde(default = "default_true")]
    pub lamb_shift: bool,
    /// Separate seed for the bath draw; defaults to the master seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            temperature_mk: default_temperature_mk(),
            omega_c_over_omega0: default_cutoff(),
            t1_mean_us: default_t1_mean(),
            t1_sd_us: default_t1_sd(),
            tphi_mean_us: default_tphi_mean(),
            tphi_sd_us: default_tphi_sd(),
            lamb_shift: true,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Order-of-magnitude frequency hint handed to the fit, in units of the
    /// base energy scale.
    #[serde(default)]
    pub omega_hint_over_omega0: Option<f64>,
}

fn default_omega0_mhz() -> f64 {
    25.0
}

/// Full experiment description. Field names carry their units; energies and
/// frequencies are in units of the base scale `ω0 = 2π·f MHz`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_omega0_mhz")]
    pub omega0_mhz: f64,
    pub target_graph: GraphSource,
    #[serde(default)]
    pub initial_graph: InitialSource,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, AqsError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, AqsError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String, AqsError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagnosticCode {
    InvalidGraph,
    InvalidProbe,
    InvalidSchedule,
    InvalidScan,
    Unphysical,
    CutoffTooLow,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub message: String,
}

fn diag(code: DiagnosticCode, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        code,
        message: message.into(),
    }
}

/// Structural and physical checks; an empty list means the config is
/// runnable. Nothing is thrown: every problem found becomes a diagnostic.
pub fn validate_config(config: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    if !(config.omega0_mhz.is_finite() && config.omega0_mhz > 0.0) {
        out.push(diag(
            DiagnosticCode::Unphysical,
            format!("base frequency {} MHz must be positive", config.omega0_mhz),
        ));
    }

    let sched = &config.schedule;
    if !(sched.total_time_us.is_finite() && sched.total_time_us > 0.0) {
        out.push(diag(
            DiagnosticCode::InvalidSchedule,
            format!("sweep duration {} us must be positive", sched.total_time_us),
        ));
    }
    if sched.steps == 0 || sched.open_macro_steps == 0 {
        out.push(diag(
            DiagnosticCode::InvalidSchedule,
            "sweep needs at least one step",
        ));
    }

    let scan = &config.scan;
    if scan.n_points < 6 {
        out.push(diag(
            DiagnosticCode::InvalidScan,
            format!("{} scan points cannot support a 5-parameter fit", scan.n_points),
        ));
    }
    if scan.shots == 0 {
        out.push(diag(DiagnosticCode::InvalidScan, "scan needs at least one shot"));
    }
    if let Some(t) = scan.t_max_us {
        if !(t.is_finite() && t > 0.0) {
            out.push(diag(
                DiagnosticCode::InvalidScan,
                format!("scan window {t} us must be positive"),
            ));
        }
    } else if !(scan.periods.is_finite() && scan.periods > 0.0) {
        out.push(diag(
            DiagnosticCode::InvalidScan,
            format!("scan period count {} must be positive", scan.periods),
        ));
    }

    if let Some(d) = config.probe.delta_over_omega0 {
        if !(d.is_finite() && d > 0.0) {
            out.push(diag(
                DiagnosticCode::InvalidProbe,
                format!("probe splitting {d} must be positive"),
            ));
        }
    }

    let target = match build_target_graph(config) {
        Ok(g) => Some(g),
        Err(e) => {
            out.push(diag(DiagnosticCode::InvalidGraph, e.to_string()));
            None
        }
    };
    if let Some(t) = &target {
        if let Err(e) = build_initial_graph(config, t.n_vertices()) {
            out.push(diag(DiagnosticCode::InvalidGraph, e.to_string()));
        }
    }

    // the probed frequency is s0 + δ; a non-positive value makes the fringe
    // frequency ambiguous under the sign-blind cosine
    if let (Some(t), Some(d)) = (&target, config.probe.delta_over_omega0) {
        if d.is_finite() && d > 0.0 {
            if let Ok(h) = build_hamiltonian(t) {
                let s0 = h.ground_state().0;
                if s0 + d <= 0.0 {
                    out.push(diag(
                        DiagnosticCode::InvalidProbe,
                        format!(
                            "probe splitting {d} does not clear the ground energy {s0}; \
                             the fringe frequency would be non-positive"
                        ),
                    ));
                }
            }
        }
    }

    let noise = &config.noise;
    if noise.enabled {
        if !(noise.temperature_mk.is_finite() && noise.temperature_mk > 0.0) {
            out.push(diag(
                DiagnosticCode::Unphysical,
                format!("bath temperature {} mK must be positive", noise.temperature_mk),
            ));
        }
        for (name, mean, sd) in [
            ("T1", noise.t1_mean_us, noise.t1_sd_us),
            ("T_phi", noise.tphi_mean_us, noise.tphi_sd_us),
        ] {
            if !(mean.is_finite() && mean > 0.0) {
                out.push(diag(
                    DiagnosticCode::Unphysical,
                    format!("{name} mean {mean} us must be positive; as drawn it would imply T2 > 2*T1"),
                ));
            } else if !(sd.is_finite() && sd >= 0.0) {
                out.push(diag(
                    DiagnosticCode::Unphysical,
                    format!("{name} spread {sd} us must be non-negative"),
                ));
            } else if mean - 3.0 * sd <= 0.0 {
                out.push(diag(
                    DiagnosticCode::Unphysical,
                    format!("{name} window {mean} ± 3·{sd} us reaches non-positive times"),
                ));
            }
        }
        if !(noise.omega_c_over_omega0.is_finite()
            && noise.omega_c_over_omega0 > BATH_REFERENCE_SPLITTING)
        {
            out.push(diag(
                DiagnosticCode::Unphysical,
                format!(
                    "bath cutoff {} must lie above the reference splitting {}",
                    noise.omega_c_over_omega0, BATH_REFERENCE_SPLITTING
                ),
            ));
        }
        // the dissipator silently drops any transition above the cutoff
        if let Some(t) = &target {
            if let Ok(spread) = coupled_spectral_spread(config, t) {
                if noise.omega_c_over_omega0 < spread {
                    out.push(diag(
                        DiagnosticCode::CutoffTooLow,
                        format!(
                            "bath cutoff {} lies below the largest transition frequency {spread:.3}",
                            noise.omega_c_over_omega0
                        ),
                    ));
                }
            }
        }
    }

    out
}

fn coupled_spectral_spread(
    config: &ExperimentConfig,
    target: &SpinGraph,
) -> Result<f64, AqsError> {
    let h_st = build_hamiltonian(target)?;
    let delta = resolve_delta(config, target);
    let probe = ProbeSpec::new(delta)?;
    let h2 = CoupledSystem::build(&h_st, &probe, &h_st)?.h2().clone();
    let groups = h2.eigenvalue_groups();
    let lo = groups.first().map(|g| g.0).unwrap_or(0.0);
    let hi = groups.last().map(|g| g.0).unwrap_or(0.0);
    Ok(hi - lo)
}

// ---------------------------------------------------------------------------
// Model construction

/// Draws the random target graph: per vertex a Z and an X local term, per
/// listed edge a ZZ and an XX coupling, all coefficients uniform in
/// [−1, 1]. Draw order is vertices ascending (Z before X), then edges in
/// the given order (ZZ before XX), so a fixed seed pins every coefficient.
pub fn random_target_graph(
    n_vertices: usize,
    edges: &[[usize; 2]],
    rng: &mut impl Rng,
) -> Result<SpinGraph, AqsError> {
    let mut local = Vec::with_capacity(2 * n_vertices);
    for v in 0..n_vertices {
        local.push(PauliTerm::new(rng.gen_range(-1.0..=1.0), &[(v, Pauli::Z)])?);
        local.push(PauliTerm::new(rng.gen_range(-1.0..=1.0), &[(v, Pauli::X)])?);
    }
    let mut edge_terms = Vec::with_capacity(2 * edges.len());
    for &[a, b] in edges {
        edge_terms.push(PauliTerm::new(
            rng.gen_range(-1.0..=1.0),
            &[(a, Pauli::Z), (b, Pauli::Z)],
        )?);
        edge_terms.push(PauliTerm::new(
            rng.gen_range(-1.0..=1.0),
            &[(a, Pauli::X), (b, Pauli::X)],
        )?);
    }
    SpinGraph::new(n_vertices, local, edge_terms)
}

/// Uniform transverse field `-strength·Σ X_i`; its ground state is the
/// unique all-plus product state for positive strength.
pub fn transverse_field_graph(n_vertices: usize, strength: f64) -> Result<SpinGraph, AqsError> {
    if !(strength.is_finite() && strength != 0.0) {
        return Err(AqsError::Config(format!(
            "transverse field strength {strength} must be finite and non-zero"
        )));
    }
    let local = (0..n_vertices)
        .map(|v| PauliTerm::new(-strength, &[(v, Pauli::X)]))
        .collect::<Result<Vec<_>, _>>()?;
    SpinGraph::new(n_vertices, local, Vec::new())
}

fn build_target_graph(config: &ExperimentConfig) -> Result<SpinGraph, AqsError> {
    match &config.target_graph {
        GraphSource::Random { n_vertices, edges } => {
            let mut rng = substream(config.seed, GRAPH_STREAM_DOMAIN);
            random_target_graph(*n_vertices, edges, &mut rng)
        }
        GraphSource::Explicit(g) => Ok(g.clone()),
    }
}

fn build_initial_graph(config: &ExperimentConfig, n_vertices: usize) -> Result<SpinGraph, AqsError> {
    let g = match &config.initial_graph {
        InitialSource::TransverseField { strength } => {
            transverse_field_graph(n_vertices, *strength)?
        }
        InitialSource::Explicit(g) => g.clone(),
    };
    if g.n_vertices() != n_vertices {
        return Err(AqsError::Config(format!(
            "initial graph has {} vertices but the target has {n_vertices}",
            g.n_vertices()
        )));
    }
    Ok(g)
}

fn resolve_delta(config: &ExperimentConfig, target: &SpinGraph) -> f64 {
    config
        .probe
        .delta_over_omega0
        .unwrap_or(1.0 + target.coefficient_l1())
}

/// Everything the pipeline stages share: built operators, the coupled
/// probe system, and the (optional) per-qubit noise model over the full
/// register including the probe.
pub struct Experiment {
    pub units: UnitSystem,
    pub target_graph: SpinGraph,
    pub initial_graph: SpinGraph,
    pub h_target: HermitianOperator,
    pub h_initial: HermitianOperator,
    pub probe: ProbeSpec,
    pub system: CoupledSystem,
    pub noise: Option<NoiseModel>,
    /// Per-qubit (T1, T_φ) draws in microseconds, probe last.
    pub bath_draws_us: Vec<(f64, f64)>,
    pub s0_true: f64,
}

pub fn build_experiment(config: &ExperimentConfig) -> Result<Experiment, AqsError> {
    if !(config.omega0_mhz.is_finite() && config.omega0_mhz > 0.0) {
        return Err(AqsError::Config(format!(
            "base frequency {} MHz must be positive",
            config.omega0_mhz
        )));
    }
    let units = UnitSystem::from_mhz(config.omega0_mhz);
    let target_graph = build_target_graph(config)?;
    let initial_graph = build_initial_graph(config, target_graph.n_vertices())?;
    let h_target = build_hamiltonian(&target_graph)?;
    let h_initial = build_hamiltonian(&initial_graph)?;
    let probe = ProbeSpec::new(resolve_delta(config, &target_graph))?;
    // observable fixed to the target Hamiltonian: the scan measures s0
    let system = CoupledSystem::build(&h_target, &probe, &h_target)?;
    let s0_true = h_target.ground_state().0;

    let (noise, bath_draws_us) = if config.noise.enabled {
        let nc = &config.noise;
        if !(nc.temperature_mk.is_finite() && nc.temperature_mk > 0.0) {
            return Err(AqsError::Unphysical(format!(
                "bath temperature {} mK must be positive",
                nc.temperature_mk
            )));
        }
        let beta = units.beta_from_mk(nc.temperature_mk);
        let n_qubits = target_graph.n_vertices() + 1;
        let mut rng = substream(nc.seed.unwrap_or(config.seed), BATH_STREAM_DOMAIN);
        let draws = sample_bath_parameters(
            &mut rng,
            n_qubits,
            nc.t1_mean_us,
            nc.t1_sd_us,
            nc.tphi_mean_us,
            nc.tphi_sd_us,
        );
        let baths = draws
            .iter()
            .map(|&(t1_us, tphi_us)| {
                BathSpec::new(
                    units.time_from_us(t1_us),
                    units.time_from_us(tphi_us),
                    beta,
                    nc.omega_c_over_omega0,
                    BATH_REFERENCE_SPLITTING,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        (Some(NoiseModel::new(baths, nc.lamb_shift)?), draws)
    } else {
        (None, Vec::new())
    };

    Ok(Experiment {
        units,
        target_graph,
        initial_graph,
        h_target,
        h_initial,
        probe,
        system,
        noise,
        bath_draws_us,
        s0_true,
    })
}

/// Per-qubit bath summary for reporting (times in microseconds).
#[derive(Debug, Clone, Serialize)]
pub struct BathSummary {
    pub t1_us: f64,
    pub tphi_us: f64,
    pub lambda: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildSummary {
    pub n_vertices: usize,
    pub coefficient_l1: f64,
    pub s0_true: f64,
    pub delta: f64,
    pub omega_true: f64,
    pub system_dim: usize,
    pub noise_enabled: bool,
    pub baths: Vec<BathSummary>,
}

impl Experiment {
    pub fn summary(&self) -> BuildSummary {
        let baths = match &self.noise {
            Some(model) => model
                .baths()
                .iter()
                .zip(&self.bath_draws_us)
                .map(|(b, &(t1_us, tphi_us))| BathSummary {
                    t1_us,
                    tphi_us,
                    lambda: b.lambda(),
                    alpha: b.alpha(),
                })
                .collect(),
            None => Vec::new(),
        };
        BuildSummary {
            n_vertices: self.target_graph.n_vertices(),
            coefficient_l1: self.target_graph.coefficient_l1(),
            s0_true: self.s0_true,
            delta: self.probe.delta(),
            omega_true: self.system.omega(),
            system_dim: self.system.system_dim(),
            noise_enabled: self.noise.is_some(),
            baths,
        }
    }
}

// ---------------------------------------------------------------------------
// Pipeline stages

/// Sweeps the full register (system ⊗ probe) from the initial to the target
/// Hamiltonian; the probe term is constant along the sweep, so the probe
/// stays in its ground state except for noise. Returns the prepared state
/// and its fidelity to the target ground subspace.
pub fn prepare_state(
    exp: &Experiment,
    config: &ExperimentConfig,
) -> Result<(QuantumState, f64), AqsError> {
    let h_i = attach_probe(&exp.h_initial, &exp.probe);
    let h_t = exp.system.h1().clone();
    let total = exp.units.time_from_us(config.schedule.total_time_us);
    let path = config.schedule.path.schedule_path();
    let (_, ground) = h_i.ground_state();
    let start = QuantumState::vector(ground.column(0).into_owned())?;

    match &exp.noise {
        None => {
            let schedule = Schedule::new(total, config.schedule.steps, path)?;
            adiabatic_prepare(&h_i, &h_t, &schedule, &start)
        }
        Some(noise) => {
            if !(total.is_finite() && total > 0.0) {
                return Err(AqsError::InvalidPathParameter(format!(
                    "sweep duration must be positive, got {total}"
                )));
            }
            let ham = |t: f64| {
                let s = path.s((t / total).clamp(0.0, 1.0));
                interpolate(&h_i, &h_t, s).expect("s clamped to [0, 1]")
            };
            let evolved = evolve_open(
                &start,
                ham,
                noise,
                0.0,
                total,
                config.schedule.open_macro_steps,
            )?;
            let fidelity = ground_subspace_fidelity(&evolved, &h_t);
            Ok((evolved, fidelity))
        }
    }
}

/// Scan window in internal time units: explicit when configured, otherwise
/// `periods` cycles of the coarse frequency `δ + ⟨A⟩` in the prepared state.
pub fn scan_window(
    exp: &Experiment,
    config: &ExperimentConfig,
    prepared: &QuantumState,
) -> Result<f64, AqsError> {
    if let Some(us) = config.scan.t_max_us {
        let t = exp.units.time_from_us(us);
        if !(t.is_finite() && t > 0.0) {
            return Err(AqsError::Config(format!("scan window {us} us must be positive")));
        }
        return Ok(t);
    }
    let observable_full = exp.system.observable().kron(&HermitianOperator::identity(2));
    let coarse = exp.probe.delta() + prepared.expectation(&observable_full);
    if !(coarse.is_finite() && coarse.abs() > 1e-9) {
        return Err(AqsError::Config(format!(
            "cannot infer a scan window from coarse frequency {coarse}"
        )));
    }
    Ok(config.scan.periods * std::f64::consts::TAU / coarse.abs())
}

/// Prepares the register and runs the probe scan with the same call
/// sequence as [`run_full`], so a standalone scan reproduces the full
/// pipeline's dataset bit for bit. Also returns the preparation fidelity.
pub fn run_scan_stage(
    exp: &Experiment,
    config: &ExperimentConfig,
) -> Result<(RamseyDataset, f64), AqsError> {
    let (prepared, prep_fidelity) = prepare_state(exp, config)?;
    let t_max = scan_window(exp, config, &prepared)?;
    let dataset = run_scan(
        &exp.system,
        &prepared,
        t_max,
        config.scan.n_points,
        config.scan.shots,
        config.seed,
        exp.noise.as_ref(),
    )?;
    Ok((dataset, prep_fidelity))
}

// ---------------------------------------------------------------------------
// Scan table serialization

/// One scan row as written to (and read back from) the dataset CSV.
/// Times are in seconds so the file stands on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub t_index: usize,
    pub t_seconds: f64,
    pub shots: u64,
    pub successes: u64,
    pub p0_exact: f64,
    pub p0_hat: f64,
}

/// Renders a scan as CSV text, one row per point, times in seconds.
pub fn scan_csv_text(dataset: &RamseyDataset, units: &UnitSystem) -> String {
    let mut out = String::from(SCAN_CSV_HEADER);
    for p in dataset.points() {
        out.push('\n');
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            p.t_index,
            units.time_to_seconds(p.t),
            p.shots,
            p.successes,
            p.p0_exact,
            p.p0_hat()
        ));
    }
    out.push('\n');
    out
}

fn parse_scan_line(line: &str) -> Result<ScanRow, AqsError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 6 {
        return Err(AqsError::Dataset(format!(
            "expected 6 comma-separated fields, got {} in {line:?}",
            fields.len()
        )));
    }
    let bad = |what: &str| AqsError::Dataset(format!("bad {what} in row {line:?}"));
    Ok(ScanRow {
        t_index: fields[0].trim().parse().map_err(|_| bad("t_index"))?,
        t_seconds: fields[1].trim().parse().map_err(|_| bad("t_seconds"))?,
        shots: fields[2].trim().parse().map_err(|_| bad("shots"))?,
        successes: fields[3].trim().parse().map_err(|_| bad("successes"))?,
        p0_exact: fields[4].trim().parse().map_err(|_| bad("p0_exact"))?,
        p0_hat: fields[5].trim().parse().map_err(|_| bad("p0_hat"))?,
    })
}

/// Parses scan CSV text (header plus rows) back into rows.
pub fn parse_scan_csv(text: &str) -> Result<Vec<ScanRow>, AqsError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == SCAN_CSV_HEADER => {}
        other => {
            return Err(AqsError::Dataset(format!(
                "expected header {SCAN_CSV_HEADER:?}, got {other:?}"
            )))
        }
    }
    let rows = lines.map(parse_scan_line).collect::<Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Err(AqsError::Dataset("dataset has no rows".into()));
    }
    Ok(rows)
}

/// Reads a dataset CSV produced by [`run_full`] or the scan subcommand.
pub fn read_scan_csv(path: &Path) -> Result<Vec<ScanRow>, AqsError> {
    parse_scan_csv(&fs::read_to_string(path)?)
}

/// Fits the damped cosine to a scan table in seconds-space. Both the
/// pipeline and the standalone fit subcommand come through here with rows
/// that round-tripped through CSV text, so they see bit-identical inputs.
pub fn fit_rows(rows: &[ScanRow], omega_hint_rad_per_s: Option<f64>) -> Result<FitResult, AqsError> {
    let times: Vec<f64> = rows.iter().map(|r| r.t_seconds).collect();
    let values: Vec<f64> = rows.iter().map(|r| r.p0_hat).collect();
    fit_damped_cosine(&times, &values, omega_hint_rad_per_s)
}

// ---------------------------------------------------------------------------
// Full pipeline

/// Flat result record; energies and frequencies are in units of the base
/// scale, times in the artifacts are in seconds.
#[derive(Debug, Clone, Serialize)]
pub struct ResultSummary {
    pub omega_hat: f64,
    pub a0_hat: f64,
    pub s0_true: f64,
    pub rel_error: f64,
    pub min_gap: f64,
    pub prep_fidelity: f64,
    pub omega_true: f64,
    pub delta: f64,
    pub seed: u64,
    pub noise_enabled: bool,
    pub lemma_holds: bool,
    pub lemma_shifted: bool,
    pub fit_residual: f64,
    pub fit_converged: bool,
    pub fit_starts_tried: usize,
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub summary: ResultSummary,
    pub lemma: LemmaReport,
    pub fit: FitResult,
    pub scan_path: PathBuf,
    pub result_path: PathBuf,
    pub plot_path: PathBuf,
}

/// Runs the whole pipeline and writes `scan.csv`, `result.json` and
/// `plot.csv` under `out_dir`. On a stage failure the artifacts written so
/// far are kept and `result.json` records the failed stage instead.
pub fn run_full(config: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts, AqsError> {
    fs::create_dir_all(out_dir)?;
    match run_full_inner(config, out_dir) {
        Ok(artifacts) => Ok(artifacts),
        Err(e) => {
            let stage_name = match &e {
                AqsError::Stage { stage, .. } => stage,
                _ => "run",
            };
            let marker = serde_json::json!({
                "status": "failed",
                "stage": stage_name,
                "error": e.to_string(),
            });
            if let Ok(text) = serde_json::to_string_pretty(&marker) {
                let _ = fs::write(out_dir.join("result.json"), text + "\n");
            }
            Err(e)
        }
    }
}

fn run_full_inner(config: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts, AqsError> {
    let exp = stage("build", build_experiment(config))?;
    let (gap, _) = stage(
        "gap",
        min_gap(&exp.h_initial, &exp.h_target, GAP_SCAN_RESOLUTION),
    )?;
    let (prepared, prep_fidelity) = stage("prepare", prepare_state(&exp, config))?;
    let lemma = stage(
        "lemma",
        verify_ground_lemma(&exp.h_target, &exp.probe, exp.system.observable()),
    )?;

    let t_max = stage("scan", scan_window(&exp, config, &prepared))?;
    let dataset = stage(
        "scan",
        run_scan(
            &exp.system,
            &prepared,
            t_max,
            config.scan.n_points,
            config.scan.shots,
            config.seed,
            exp.noise.as_ref(),
        ),
    )?;

    let scan_path = out_dir.join("scan.csv");
    let csv_text = scan_csv_text(&dataset, &exp.units);
    fs::write(&scan_path, &csv_text)?;

    // reparse the text we just wrote so the fit sees exactly what a later
    // standalone `fit` on the saved file will see
    let rows = stage("fit", parse_scan_csv(&csv_text))?;
    let omega0 = exp.units.omega0_rad_per_s();
    let hint = config.fit.omega_hint_over_omega0.map(|h| h * omega0);
    let fit = stage("fit", fit_rows(&rows, hint))?;
    let delta = exp.probe.delta();
    let a0_hat = stage("fit", estimate_observable(&fit, delta * omega0))? / omega0;
    let omega_hat = fit.model.omega / omega0;
    let omega_true = exp.system.omega();
    let rel_error = ((omega_hat - omega_true) / omega_true).abs();

    let summary = ResultSummary {
        omega_hat,
        a0_hat,
        s0_true: exp.s0_true,
        rel_error,
        min_gap: gap,
        prep_fidelity,
        omega_true,
        delta,
        seed: config.seed,
        noise_enabled: exp.noise.is_some(),
        lemma_holds: lemma.holds,
        lemma_shifted: lemma.shifted,
        fit_residual: fit.residual_norm,
        fit_converged: fit.converged,
        fit_starts_tried: fit.starts_tried,
    };

    let result_path = out_dir.join("result.json");
    fs::write(&result_path, serde_json::to_string_pretty(&summary)? + "\n")?;

    let plot_path = out_dir.join("plot.csv");
    let mut plot = String::from(PLOT_CSV_HEADER);
    for row in &rows {
        plot.push('\n');
        plot.push_str(&format!(
            "{},{},{},{}",
            row.t_seconds,
            row.p0_exact,
            row.p0_hat,
            fit.model.eval(row.t_seconds)
        ));
    }
    plot.push('\n');
    fs::write(&plot_path, plot)?;

    Ok(RunArtifacts {
        summary,
        lemma,
        fit,
        scan_path,
        result_path,
        plot_path,
    })
}
