//! Coupled-oscillator picture of the two electrons: equilibrium geometry,
//! Coulomb-renormalized frequencies, exchange coupling and the closed-form
//! ZZ estimate. Also the resonator coupling estimate for a single electron.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::electrostatics::PotentialProfile;
use crate::units::{ELECTRON_MASS, ELEMENTARY_CHARGE};

#[derive(Debug, Error, PartialEq)]
pub enum EffectiveError {
    #[error("equilibrium search diverged after {iterations} iterations (residual {residual:.3e})")]
    Divergence { iterations: usize, residual: f64 },
    #[error("curvature {curvature} at {x} does not trap")]
    NotATrap { x: f64, curvature: f64 },
    #[error("resonance pole: denominator {0:.3e} vanishes")]
    ResonancePole(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub x_left: f64,
    pub x_right: f64,
    pub d: f64,
    /// Max |stationarity residual| at the solution.
    pub residual: f64,
}

/// Solves v'(x_L) = -κ/d² and v'(x_R) = κ/d² by damped Newton iteration
/// from the given seeds (usually the bare well minima).
pub fn equilibrium_positions(
    profile: &PotentialProfile,
    kappa: f64,
    seeds: (f64, f64),
) -> Result<Equilibrium, EffectiveError> {
    let (lo, hi) = profile.range();
    let eval = |xl: f64, xr: f64| {
        let d = xr - xl;
        let (_, dl, cl) = profile.local_fit(xl);
        let (_, dr, cr) = profile.local_fit(xr);
        let f = kappa / (d * d);
        let c = 2.0 * kappa / (d * d * d);
        ([dl + f, dr - f], [[cl + c, -c], [-c, cr + c]])
    };
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
    let (mut xl, mut xr) = seeds;
    let max_iter = 200;
    let mut res = f64::INFINITY;
    for it in 0..max_iter {
        let (r, j) = eval(xl, xr);
        res = norm(r);
        let scale = 1.0 + kappa.abs() / ((xr - xl) * (xr - xl));
        if res <= 1e-12 * scale {
            return Ok(Equilibrium {
                x_left: xl,
                x_right: xr,
                d: xr - xl,
                residual: res,
            });
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(EffectiveError::Divergence {
                iterations: it,
                residual: res,
            });
        }
        let sl = -(j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let sr = -(-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let (nl, nr) = (xl + t * sl, xr + t * sr);
            if nr - nl > 0.0 && nl >= lo && nr <= hi {
                let (rn, _) = eval(nl, nr);
                if norm(rn) < res {
                    xl = nl;
                    xr = nr;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let scale = 1.0 + kappa.abs() / ((xr - xl) * (xr - xl));
    // the piecewise fit can stall a hair above the target
    if res <= 1e-9 * scale {
        return Ok(Equilibrium {
            x_left: xl,
            x_right: xr,
            d: xr - xl,
            residual: res,
        });
    }
    Err(EffectiveError::Divergence {
        iterations: max_iter,
        residual: res,
    })
}

/// Coupled-oscillator parameters at the equilibrium (dimensionless).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub x_left: f64,
    pub x_right: f64,
    pub d: f64,
    /// Bare curvatures v''(x_L), v''(x_R).
    pub curvature_left: f64,
    pub curvature_right: f64,
    pub omega_c: f64,
    pub omega_left: f64,
    pub omega_right: f64,
    pub g: f64,
    /// Mixing angle with tan 2θ = 2g/Δ.
    pub theta: f64,
}

pub fn effective_params(
    profile: &PotentialProfile,
    eq: &Equilibrium,
    kappa: f64,
) -> Result<EffectiveParams, EffectiveError> {
    let (_, _, cl) = profile.local_fit(eq.x_left);
    let (_, _, cr) = profile.local_fit(eq.x_right);
    effective_from_curvatures(cl, cr, eq, kappa)
}

pub fn effective_from_curvatures(
    curvature_left: f64,
    curvature_right: f64,
    eq: &Equilibrium,
    kappa: f64,
) -> Result<EffectiveParams, EffectiveError> {
    let wc2 = coulomb_frequency_sq(kappa, eq.d);
    let wl2 = curvature_left + wc2;
    let wr2 = curvature_right + wc2;
    if !(wl2 > 0.0) {
        return Err(EffectiveError::NotATrap {
            x: eq.x_left,
            curvature: wl2,
        });
    }
    if !(wr2 > 0.0) {
        return Err(EffectiveError::NotATrap {
            x: eq.x_right,
            curvature: wr2,
        });
    }
    let (wl, wr) = (wl2.sqrt(), wr2.sqrt());
    let g = exchange_coupling(wc2, wl, wr);
    Ok(EffectiveParams {
        x_left: eq.x_left,
        x_right: eq.x_right,
        d: eq.d,
        curvature_left,
        curvature_right,
        omega_c: wc2.sqrt(),
        omega_left: wl,
        omega_right: wr,
        g,
        theta: 0.5 * (2.0 * g).atan2(wl - wr),
    })
}

/// ω_C² = 2κ/d³.
pub fn coulomb_frequency_sq(kappa: f64, d: f64) -> f64 {
    2.0 * kappa / (d * d * d)
}

/// g = ω_C² / (2√(ω^L ω^R)).
pub fn exchange_coupling(omega_c_sq: f64, omega_left: f64, omega_right: f64) -> f64 {
    omega_c_sq / (2.0 * (omega_left * omega_right).sqrt())
}

/// Hybridized mode frequencies (Ω+, Ω−).
pub fn hybrid_modes(omega_left: f64, omega_right: f64, g: f64) -> (f64, f64) {
    let delta = omega_left - omega_right;
    let root = (4.0 * g * g + delta * delta).sqrt();
    let sum = omega_left + omega_right;
    (0.5 * (sum + root), 0.5 * (sum - root))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaEstimate {
    pub zeta: f64,
    /// Leading order in g: 2g²/(Δ − β^R) − 2g²/(Δ + β^L).
    pub small_angle: f64,
}

/// ζ = √2 g (tan(θ_R/2) − tan(θ_L/2)) with tan θ_L = 2√2 g/(Δ + β^L) and
/// tan θ_R = 2√2 g/(Δ − β^R).
pub fn effective_zeta(g: f64, detuning: f64, beta_left: f64, beta_right: f64) -> Result<ZetaEstimate, EffectiveError> {
    let den_l = detuning + beta_left;
    let den_r = detuning - beta_right;
    let scale = g.abs().max(detuning.abs()).max(beta_left.abs()).max(beta_right.abs());
    for den in [den_l, den_r] {
        if den.abs() < 1e-9 * scale || den == 0.0 {
            return Err(EffectiveError::ResonancePole(den));
        }
    }
    if g == 0.0 {
        return Ok(ZetaEstimate {
            zeta: 0.0,
            small_angle: 0.0,
        });
    }
    let s = 2.0 * std::f64::consts::SQRT_2 * g;
    let theta_l = (s / den_l).atan();
    let theta_r = (s / den_r).atan();
    let zeta = std::f64::consts::SQRT_2 * g * ((theta_r / 2.0).tan() - (theta_l / 2.0).tan());
    let small_angle = 2.0 * g * g / den_r - 2.0 * g * g / den_l;
    Ok(ZetaEstimate { zeta, small_angle })
}

/// Inputs of the single-electron resonator coupling estimate (SI units,
/// resonator frequency in GHz).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    pub f_rf_ghz: f64,
    pub z_rf_ohm: f64,
    pub dalpha_dx_per_m: f64,
    pub omega_e_rad_s: f64,
}

/// e f_RF ∂α/∂x √(Z_RF/(m_e ω_e)), returned in MHz.
pub fn resonator_coupling(p: &ResonatorParams) -> f64 {
    ELEMENTARY_CHARGE
        * p.f_rf_ghz
        * 1e9
        * p.dalpha_dx_per_m
        * (p.z_rf_ohm / (ELECTRON_MASS * p.omega_e_rad_s)).sqrt()
        * 1e-6
}
