//! Dimensionless unit system of the two-electron Hamiltonian.
//!
//! Lengths are measured in `x0`, energies in `E_d = ħ²/(m_e x0²)`. A trap
//! potential in these units is `v(x) = -e φ(x) / E_d`, with `φ` the
//! electrostatic potential in volts. Everything inside the solver is
//! dimensionless; conversion to GHz, mV or nm happens only at the edges.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// CODATA 2018 electron mass (kg).
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
/// CODATA 2018 elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// CODATA 2018 reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// CODATA 2018 vacuum permittivity (F/m).
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

/// Length unit used throughout the two-body model (nm).
pub const DEFAULT_X0_NM: f64 = 123.0;

#[derive(Debug, Error, PartialEq)]
pub enum UnitsError {
    #[error("length unit must be positive and finite, got {0} nm")]
    InvalidLength(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    /// Length unit (nm).
    pub x0_nm: f64,
    /// Energy unit `ħ²/(m_e x0²)` (J).
    pub energy_j: f64,
    /// GHz per dimensionless energy unit, `E_d / (2πħ)`.
    pub freq_unit_ghz: f64,
    /// Dimensionless Coulomb strength `e²/(4π ε0 x0 E_d)`.
    pub kappa: f64,
}

impl UnitSystem {
    pub fn derive(x0_nm: f64) -> Result<Self, UnitsError> {
        derive_units(x0_nm)
    }

    /// Length unit in metres.
    pub fn x0_m(&self) -> f64 {
        self.x0_nm * 1e-9
    }

    /// Dimensionless potential energy per millivolt of electrostatic
    /// potential: `v = -mv_to_energy() * φ[mV]`.
    pub fn mv_to_energy(&self) -> f64 {
        ELEMENTARY_CHARGE * 1e-3 / self.energy_j
    }

    pub fn energy_to_ghz(&self, e: f64) -> f64 {
        energy_to_ghz(e, self)
    }

    pub fn ghz_to_energy(&self, f_ghz: f64) -> f64 {
        f_ghz / self.freq_unit_ghz
    }
}

impl Default for UnitSystem {
    fn default() -> Self {
        derive_units(DEFAULT_X0_NM).expect("default length unit is valid")
    }
}

pub fn derive_units(x0_nm: f64) -> Result<UnitSystem, UnitsError> {
    if !(x0_nm.is_finite() && x0_nm > 0.0) {
        return Err(UnitsError::InvalidLength(x0_nm));
    }
    let x0 = x0_nm * 1e-9;
    let energy_j = HBAR * HBAR / (ELECTRON_MASS * x0 * x0);
    let freq_unit_ghz = energy_j / (2.0 * std::f64::consts::PI * HBAR) * 1e-9;
    let kappa =
        ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY * x0 * energy_j);
    Ok(UnitSystem {
        x0_nm,
        energy_j,
        freq_unit_ghz,
        kappa,
    })
}

/// Converts a dimensionless energy (or energy difference) to a cyclic
/// frequency in GHz.
pub fn energy_to_ghz(e: f64, units: &UnitSystem) -> f64 {
    e * units.freq_unit_ghz
}
