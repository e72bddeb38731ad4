//! Damped-cosine fringe fitting.
//!
//! Shot-frequency data from a Ramsey scan is reduced to the fringe
//! frequency by nonlinear least squares on
//!
//! `p(t) = offset + amplitude · e^{−t/τ} · cos(ω t + phase)`.
//!
//! The optimizer is a Levenberg-Marquardt iteration with the analytic
//! Jacobian, restarted from a small deterministic grid: the top
//! periodogram peaks of the mean-subtracted data (plus an optional
//! caller hint) for ω, data mean and half-range for the offset and
//! amplitude, the scan window for τ, and two phase seeds. The returned
//! model is the lowest-residual start, ties broken toward the lower
//! frequency, canonicalized to `amplitude ≥ 0`, `ω ≥ 0`, `τ > 0`.
//!
//! Time units are whatever the caller supplies; ω comes back in the
//! reciprocal unit, and the estimate of the coupled observable is
//! `â0 = ω̂ − δ` with δ expressed in the same unit.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::AqsError;

/// Iteration budget per start.
const MAX_ITERS: usize = 200;
/// Relative step-size convergence threshold.
const STEP_TOL: f64 = 1e-10;
/// Gradient-norm convergence threshold.
const GRAD_TOL: f64 = 1e-12;
/// Relative SSE-reduction convergence threshold, sqrt of machine epsilon
/// as in classic least-squares solvers. Below this the descent is crawling
/// along a direction the data cannot resolve (typically the decay time of
/// an effectively undamped signal).
const SSE_TOL: f64 = 1.5e-8;
const STALL_TOL: f64 = 1e-6;
/// Inner damping retries per iteration: enough for `mu` to climb from its
/// floor to where the trust region genuinely contracts (4^30 spans the
/// full useful range), so a stalled descent is detected rather than
/// abandoned with a still-large rejected step.
const MAX_RETRIES: usize = 30;

/// Parameters of `p(t) = offset + amplitude · exp(-t/tau) · cos(omega·t + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitModel {
    pub offset: f64,
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
    pub tau: f64,
}

impl FitModel {
    pub fn eval(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (-t / self.tau).exp() * (self.omega * t + self.phase).cos()
    }

    fn from_params(p: &[f64; 5]) -> Self {
        Self {
            offset: p[0],
            amplitude: p[1],
            omega: p[2],
            phase: p[3],
            tau: p[4],
        }
    }

    /// Equivalent parameters with `amplitude ≥ 0`, `ω ≥ 0` and the phase
    /// wrapped to (−π, π].
    fn canonicalized(mut self) -> Self {
        if self.amplitude < 0.0 {
            self.amplitude = -self.amplitude;
            self.phase += std::f64::consts::PI;
        }
        if self.omega < 0.0 {
            self.omega = -self.omega;
            self.phase = -self.phase;
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        self.phase -= two_pi * (self.phase / two_pi).round();
        self
    }
}

/// Fit outcome: the selected model plus diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub model: FitModel,
    /// √(Σ residual²) of the selected model.
    pub residual_norm: f64,
    /// The selected start met the step or gradient threshold.
    pub converged: bool,
    /// Variance estimates per parameter (offset, amplitude, ω, phase, τ)
    /// from the normal equations at the optimum; NaN when singular.
    pub covariance_diag: [f64; 5],
    pub starts_tried: usize,
}

/// `â0 = ω̂ − δ` (ħ = 1); δ must be in the units ω̂ was fitted in.
pub fn estimate_observable(fit: &FitResult, delta: f64) -> Result<f64, AqsError> {
    if !fit.converged {
        return Err(AqsError::FitFailed {
            best: fit.model.clone(),
            residual: fit.residual_norm,
        });
    }
    Ok(fit.model.omega - delta)
}

/// Dominant-frequency candidates: angular frequencies of the `k` largest
/// periodogram bins of the mean-subtracted signal, assuming the uniform
/// spacing the scan produces. Sorted by descending power.
pub fn periodogram_peaks(times: &[f64], values: &[f64], k: usize) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return Vec::new();
    }
    let span = times[n - 1] - times[0];
    if !(span > 0.0) {
        return Vec::new();
    }
    let dt = span / (n - 1) as f64;
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new(); // (power, omega)
    for m in 1..=n / 2 {
        let omega = 2.0 * std::f64::consts::PI * m as f64 / (n as f64 * dt);
        let (mut re, mut im) = (0.0, 0.0);
        for (j, &y) in values.iter().enumerate() {
            let phase = omega * j as f64 * dt;
            re += (y - mean) * phase.cos();
            im -= (y - mean) * phase.sin();
        }
        bins.push((re * re + im * im, omega));
    }
    bins.sort_by(|a, b| b.0.total_cmp(&a.0));
    bins.into_iter().take(k).map(|b| b.1).collect()
}

fn sum_of_squares(model: &FitModel, times: &[f64], values: &[f64]) -> f64 {
    times
        .iter()
        .zip(values)
        .map(|(&t, &y)| {
            let r = y - model.eval(t);
            r * r
        })
        .sum()
}

/// Residual vector and analytic Jacobian of the residuals
/// (r_i = y_i − p(t_i), so ∂r/∂θ = −∂p/∂θ).
fn residuals_and_jacobian(
    p: &[f64; 5],
    times: &[f64],
    values: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = times.len();
    let [c0, c1, omega, phi, tau] = *p;
    let mut r = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, 5);
    for i in 0..n {
        let t = times[i];
        let damp = (-t / tau).exp();
        let arg = omega * t + phi;
        let (sin, cos) = arg.sin_cos();
        r[i] = values[i] - (c0 + c1 * damp * cos);
        j[(i, 0)] = -1.0;
        j[(i, 1)] = -damp * cos;
        j[(i, 2)] = c1 * t * damp * sin;
        j[(i, 3)] = c1 * damp * sin;
        j[(i, 4)] = -c1 * (t / (tau * tau)) * damp * cos;
    }
    (r, j)
}

struct StartOutcome {
    params: [f64; 5],
    sse: f64,
    converged: bool,
}

/// One Levenberg-Marquardt descent from the given start. Converged means
/// any of: vanished gradient, a relative step below `STEP_TOL`, a relative
/// SSE reduction below `SSE_TOL`, or a trust-region stall where even a
/// step of relative size below `STALL_TOL` no longer improves (the typical
/// terminal state when the data carry shot noise, since near the optimum
/// real SSE gains fall under f64 resolution).
fn lm_descent(
    start: [f64; 5],
    times: &[f64],
    values: &[f64],
    tau_floor: f64,
    omega_cap: f64,
) -> StartOutcome {
    let mut p = start;
    let mut sse = sum_of_squares(&FitModel::from_params(&p), times, values);
    let mut mu = 1e-3;
    let mut converged = false;

    for _ in 0..MAX_ITERS {
        let (r, j) = residuals_and_jacobian(&p, times, values);
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        if jtr.norm() < GRAD_TOL {
            converged = true;
            break;
        }
        let mut accepted = false;
        let mut last_rejected_step = f64::INFINITY;
        for _ in 0..MAX_RETRIES {
            let mut damped = jtj.clone();
            for d in 0..5 {
                // Marquardt scaling keeps the step scale-equivariant
                damped[(d, d)] += mu * jtj[(d, d)].max(1e-30);
            }
            let Some(step) = damped.lu().solve(&(-&jtr)) else {
                mu *= 4.0;
                continue;
            };
            let mut cand = p;
            for d in 0..5 {
                cand[d] += step[d];
            }
            if !(cand[4] > tau_floor)
                || !(cand[2].abs() <= omega_cap)
                || !cand.iter().all(|x| x.is_finite())
            {
                mu *= 4.0;
                continue;
            }
            let rel_step = (0..5)
                .map(|d| (step[d] / (p[d].abs() + 1e-30)).abs())
                .fold(0.0, f64::max);
            let cand_sse = sum_of_squares(&FitModel::from_params(&cand), times, values);
            if cand_sse <= sse {
                let gained = sse - cand_sse;
                p = cand;
                sse = cand_sse;
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                if rel_step < STEP_TOL || gained <= SSE_TOL * sse.max(f64::MIN_POSITIVE) {
                    converged = true;
                }
                break;
            }
            last_rejected_step = rel_step;
            mu *= 4.0;
        }
        if !accepted && last_rejected_step < STALL_TOL {
            converged = true;
        }
        if converged || !accepted {
            break;
        }
    }
    StartOutcome {
        params: p,
        sse,
        converged,
    }
}

/// Least-squares fit of the damped cosine. `times` must be strictly
/// increasing and `values` the matching success frequencies (or any
/// bounded signal). The optional hint joins the frequency start grid.
pub fn fit_damped_cosine(
    times: &[f64],
    values: &[f64],
    omega_hint: Option<f64>,
) -> Result<FitResult, AqsError> {
    let n = times.len();
    if n != values.len() {
        return Err(AqsError::Dataset(format!(
            "{} times vs {} values",
            n,
            values.len()
        )));
    }
    if n < 6 {
        return Err(AqsError::Dataset(format!(
            "fit needs at least 6 points for 5 parameters, got {n}"
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(AqsError::Dataset("delays must be strictly increasing".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let maxv = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let minv = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if maxv - minv <= 1e-12 * (1.0 + mean.abs()) {
        return Err(AqsError::DegenerateSignal(
            "signal has no visible oscillation to fit".into(),
        ));
    }

    let t_max = times[n - 1];
    let tau_floor = 1e-6 * t_max;
    let amplitude0 = 0.5 * (maxv - minv);
    // sampled fringes carry no information above the Nyquist frequency;
    // a fitted frequency out there is an alias of one inside the band
    let min_dt = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let omega_cap = 1.05 * std::f64::consts::PI / min_dt;

    let mut omegas = periodogram_peaks(times, values, 3);
    if let Some(hint) = omega_hint {
        if hint.is_finite() && hint > 0.0 {
            omegas.push(hint);
        }
    }
    omegas.retain(|w| w.is_finite() && *w > 0.0 && *w <= omega_cap);
    omegas.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * b.abs());
    if omegas.is_empty() {
        return Err(AqsError::DegenerateSignal(
            "no frequency candidate survived initialization".into(),
        ));
    }

    let mut outcomes: Vec<StartOutcome> = Vec::new();
    for &omega0 in &omegas {
        for phi0 in [0.0, std::f64::consts::FRAC_PI_2] {
            let start = [mean, amplitude0, omega0, phi0, t_max];
            outcomes.push(lm_descent(start, times, values, tau_floor, omega_cap));
        }
    }
    let starts_tried = outcomes.len();

    // deterministic selection: lowest residual, ties to the lower frequency
    outcomes.sort_by(|a, b| {
        a.sse
            .total_cmp(&b.sse)
            .then(a.params[2].abs().total_cmp(&b.params[2].abs()))
    });
    let best = &outcomes[0];
    let model = FitModel::from_params(&best.params).canonicalized();
    let residual_norm = best.sse.sqrt();

    let covariance_diag = {
        let (_, j) = residuals_and_jacobian(&best.params, times, values);
        let jtj = j.transpose() * &j;
        let dof = (n as f64 - 5.0).max(1.0);
        match jtj.try_inverse() {
            Some(inv) => {
                let s2 = best.sse / dof;
                [0, 1, 2, 3, 4].map(|d| s2 * inv[(d, d)])
            }
            None => [f64::NAN; 5],
        }
    };

    if !best.converged {
        return Err(AqsError::FitFailed {
            best: model,
            residual: residual_norm,
        });
    }
    Ok(FitResult {
        model,
        residual_norm,
        converged: true,
        covariance_diag,
        starts_tried,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    fn sample(model: &FitModel, n: usize, t_max: f64) -> (Vec<f64>, Vec<f64>) {
        let times: Vec<f64> = (1..=n).map(|i| t_max * i as f64 / n as f64).collect();
        let values = times.iter().map(|&t| model.eval(t)).collect();
        (times, values)
    }

    #[test]
    fn noiseless_synthetic_cosine_is_recovered() {
        let omega = 3.7;
        let truth = FitModel {
            offset: 0.5,
            amplitude: 0.5,
            omega,
            phase: 0.0,
            tau: 1e3 / omega,
        };
        let (times, values) = sample(&truth, 40, 2.0 * 2.0 * PI / omega);
        let fit = fit_damped_cosine(&times, &values, None).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.model.omega, omega, max_relative = 1e-6);
        assert_relative_eq!(fit.model.offset, 0.5, max_relative = 1e-4);
        assert_relative_eq!(fit.model.amplitude, 0.5, max_relative = 1e-4);
        assert!(fit.residual_norm < 1e-8);
    }

    #[test]
    fn phase_and_decay_are_recovered_when_identifiable() {
        let truth = FitModel {
            offset: 0.48,
            amplitude: 0.4,
            omega: 2.2,
            phase: 1.1,
            tau: 4.0,
        };
        // window long enough that the decay is visible
        let (times, values) = sample(&truth, 60, 12.0);
        let fit = fit_damped_cosine(&times, &values, None).unwrap();
        assert_relative_eq!(fit.model.omega, 2.2, max_relative = 1e-8);
        assert_relative_eq!(fit.model.phase, 1.1, max_relative = 1e-6);
        assert_relative_eq!(fit.model.tau, 4.0, max_relative = 1e-6);
    }

    #[test]
    fn constant_signal_is_degenerate() {
        let times: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let values = vec![1.0; 20];
        assert!(matches!(
            fit_damped_cosine(&times, &values, None),
            Err(AqsError::DegenerateSignal(_))
        ));
    }

    #[test]
    fn too_few_points_rejected() {
        let times = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let values = vec![0.1, 0.9, 0.2, 0.8, 0.3];
        assert!(matches!(
            fit_damped_cosine(&times, &values, None),
            Err(AqsError::Dataset(_))
        ));
    }

    #[test]
    fn shot_noise_leaves_frequency_within_a_percent() {
        let omega = 5.3;
        let truth = FitModel {
            offset: 0.5,
            amplitude: 0.45,
            omega,
            phase: 0.1,
            tau: 8.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (times, clean) = sample(&truth, 40, 2.0 * 2.0 * PI / omega);
        let noisy: Vec<f64> = clean
            .iter()
            .map(|&p| {
                let k = (0..50)
                    .filter(|_| rng.gen_range(0.0..1.0) < p.clamp(0.0, 1.0))
                    .count();
                k as f64 / 50.0
            })
            .collect();
        let fit = fit_damped_cosine(&times, &noisy, None).unwrap();
        assert!(
            (fit.model.omega - omega).abs() / omega < 0.01,
            "estimated {} vs true {omega}",
            fit.model.omega
        );
    }

    #[test]
    fn scale_equivariance_between_unit_systems() {
        let omega = 4.1;
        let truth = FitModel {
            offset: 0.5,
            amplitude: 0.5,
            omega,
            phase: 0.4,
            tau: 6.0,
        };
        let (times, values) = sample(&truth, 48, 9.0);
        let fit_a = fit_damped_cosine(&times, &values, None).unwrap();

        // the same signal recorded in seconds-like units
        let c = 6.366e-9;
        let scaled: Vec<f64> = times.iter().map(|t| t * c).collect();
        let fit_b = fit_damped_cosine(&scaled, &values, None).unwrap();
        assert_relative_eq!(fit_b.model.omega, fit_a.model.omega / c, max_relative = 1e-9);
        assert_relative_eq!(fit_b.model.tau, fit_a.model.tau * c, max_relative = 1e-6);
    }

    #[test]
    fn returned_residual_beats_every_start() {
        let truth = FitModel {
            offset: 0.5,
            amplitude: 0.4,
            omega: 3.0,
            phase: 0.7,
            tau: 5.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (times, clean) = sample(&truth, 40, 8.0);
        let values: Vec<f64> = clean
            .iter()
            .map(|&p| p + rng.gen_range(-0.05..0.05))
            .collect();
        let fit = fit_damped_cosine(&times, &values, None).unwrap();

        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let maxv = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let minv = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let t_max = *times.last().unwrap();
        for omega0 in periodogram_peaks(&times, &values, 3) {
            for phi0 in [0.0, PI / 2.0] {
                let start = FitModel {
                    offset: mean,
                    amplitude: 0.5 * (maxv - minv),
                    omega: omega0,
                    phase: phi0,
                    tau: t_max,
                };
                let start_sse = sum_of_squares(&start, &times, &values);
                assert!(fit.residual_norm * fit.residual_norm <= start_sse + 1e-12);
            }
        }
    }

    #[test]
    fn hint_rescues_a_sparse_grid() {
        // very few oscillations in the window: the periodogram grid is
        // coarse, an accurate hint must still lead to the right answer
        let omega = 0.9;
        let truth = FitModel {
            offset: 0.5,
            amplitude: 0.5,
            omega,
            phase: 0.0,
            tau: 50.0,
        };
        let (times, values) = sample(&truth, 40, 1.5 * 2.0 * PI / omega);
        let fit = fit_damped_cosine(&times, &values, Some(1.05 * omega)).unwrap();
        assert_relative_eq!(fit.model.omega, omega, max_relative = 1e-6);
    }

    #[test]
    fn observable_estimate_inverts_the_frequency_relation() {
        let fit = FitResult {
            model: FitModel {
                offset: 0.5,
                amplitude: 0.5,
                omega: 2.7,
                phase: 0.0,
                tau: 10.0,
            },
            residual_norm: 0.0,
            converged: true,
            covariance_diag: [0.0; 5],
            starts_tried: 1,
        };
        assert_relative_eq!(estimate_observable(&fit, 1.0).unwrap(), 1.7);
        assert_relative_eq!(estimate_observable(&fit, 0.0).unwrap(), 2.7);

        let unconverged = FitResult {
            converged: false,
            ..fit
        };
        assert!(matches!(
            estimate_observable(&unconverged, 1.0),
            Err(AqsError::FitFailed { .. })
        ));
    }

    #[test]
    fn canonical_form_flips_signs_into_range() {
        let raw = FitModel {
            offset: 0.5,
            amplitude: -0.4,
            omega: -3.0,
            phase: 0.2,
            tau: 5.0,
        };
        let canon = raw.clone().canonicalized();
        assert!(canon.amplitude > 0.0 && canon.omega > 0.0);
        assert!(canon.phase > -PI && canon.phase <= PI + 1e-12);
        for t in [0.0, 0.7, 1.9, 4.2] {
            assert_relative_eq!(canon.eval(t), raw.eval(t), max_relative = 1e-12);
        }
    }
}
