//! Unit conversions between laboratory quantities and internal units.
//!
//! Internally `ħ = 1`, energies and angular frequencies are in units of the
//! reference frequency `ω0`, times in `1/ω0`, and thermal exponents use the
//! dimensionless inverse temperature `β = ħω0 / (kB T)`.

/// Reduced Planck constant, J·s (2019 SI, h exact).
pub const HBAR: f64 = 6.62607015e-34 / (2.0 * std::f64::consts::PI);

/// Boltzmann constant, J/K (2019 SI, exact).
pub const KB: f64 = 1.380649e-23;

/// Fixes the reference frequency and converts between unit systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem {
    omega0_rad_per_s: f64,
}

impl UnitSystem {
    /// Reference frequency given as an ordinary frequency in MHz, so
    /// `ω0 = 2π · f`.
    pub fn from_mhz(f_mhz: f64) -> Self {
        assert!(f_mhz > 0.0, "reference frequency must be positive");
        Self {
            omega0_rad_per_s: 2.0 * std::f64::consts::PI * f_mhz * 1e6,
        }
    }

    pub fn omega0_rad_per_s(&self) -> f64 {
        self.omega0_rad_per_s
    }

    /// Laboratory seconds to internal time (units of `1/ω0`).
    pub fn time_from_seconds(&self, seconds: f64) -> f64 {
        seconds * self.omega0_rad_per_s
    }

    pub fn time_to_seconds(&self, internal: f64) -> f64 {
        internal / self.omega0_rad_per_s
    }

    pub fn time_from_us(&self, us: f64) -> f64 {
        self.time_from_seconds(us * 1e-6)
    }

    /// Dimensionless inverse temperature `β = ħω0 / (kB T)`; multiplying an
    /// internal energy by it gives the thermal exponent.
    pub fn beta_from_mk(&self, temperature_mk: f64) -> f64 {
        assert!(temperature_mk > 0.0, "temperature must be positive");
        HBAR * self.omega0_rad_per_s / (KB * temperature_mk * 1e-3)
    }

    /// Angular frequency in rad/s to internal units of `ω0`.
    pub fn frequency_from_rad_per_s(&self, rad_per_s: f64) -> f64 {
        rad_per_s / self.omega0_rad_per_s
    }
}
