//! Entanglement, densities and spectroscopic observables of the two-body
//! eigenstates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ci::TwoBodySpectrum;
use crate::dvr::DvrGrid;
use crate::hartree::HartreeBasis;
use crate::units::UnitSystem;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("state norm is {0}, expected 1")]
    NotNormalized(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need {need} {what}, have {have}")]
    InsufficientStates {
        what: &'static str,
        need: usize,
        have: usize,
    },
    #[error("sweep has {0} points, need at least 3")]
    ShortSweep(usize),
    #[error("gap minimum at the sweep boundary (lambda = {0}); widen the sweep")]
    MinimumAtBoundary(f64),
}

#[derive(Clone, Debug)]
pub struct SchmidtDecomposition {
    /// Descending, non-negative.
    pub singular_values: Vec<f64>,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

pub const NORM_TOL: f64 = 1e-10;

pub fn schmidt(c: &DMatrix<f64>) -> Result<SchmidtDecomposition, AnalysisError> {
    let norm = c.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(AnalysisError::NotNormalized(norm));
    }
    let svd = c.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Ok(SchmidtDecomposition {
        singular_values: order.iter().map(|&p| svd.singular_values[p]).collect(),
        left: DMatrix::from_fn(u.nrows(), order.len(), |r, p| u[(r, order[p])]),
        right: DMatrix::from_fn(vt.ncols(), order.len(), |r, p| vt[(order[p], r)]),
    })
}

/// Σ_p -σ_p² log₂ σ_p², dropping σ_p² below 1e-15.
pub fn von_neumann_entropy(d: &SchmidtDecomposition) -> f64 {
    entropy_of_weights(d.singular_values.iter().map(|s| s * s))
}

pub fn entropy_of_weights(weights: impl IntoIterator<Item = f64>) -> f64 {
    weights
        .into_iter()
        .filter(|&w| w >= 1e-15)
        .map(|w| -w * w.log2())
        .sum::<f64>()
        .max(0.0)
}

pub fn entanglement_entropy(c: &DMatrix<f64>) -> Result<f64, AnalysisError> {
    Ok(von_neumann_entropy(&schmidt(c)?))
}

/// Particle density on the DVR nodes of both wells, left grid first.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Density {
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
}

pub fn particle_density(
    c: &DMatrix<f64>,
    basis: &HartreeBasis,
    left: &DvrGrid,
    right: &DvrGrid,
) -> Result<Density, AnalysisError> {
    let (bl, br) = (&basis.b_left, &basis.b_right);
    if c.shape() != (bl.ncols(), br.ncols()) || bl.nrows() != left.len() || br.nrows() != right.len() {
        return Err(AnalysisError::Shape(format!(
            "state {}x{}, orbitals {}x{} and {}x{}, grids {} and {}",
            c.nrows(),
            c.ncols(),
            bl.nrows(),
            bl.ncols(),
            br.nrows(),
            br.ncols(),
            left.len(),
            right.len()
        )));
    }
    let norm = c.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(AnalysisError::NotNormalized(norm));
    }
    // reduced one-particle matrices in the orbital basis
    let rho_l = c * c.transpose();
    let rho_r = c.transpose() * c;
    let on_grid = |b: &DMatrix<f64>, r: &DMatrix<f64>, dx: f64| -> Vec<f64> {
        let br = b * r;
        (0..b.nrows())
            .map(|a| (br.row(a).dot(&b.row(a)) / dx).max(0.0))
            .collect()
    };
    let mut x = left.x.clone();
    x.extend_from_slice(&right.x);
    let mut rho = on_grid(bl, &rho_l, left.dx);
    rho.extend(on_grid(br, &rho_r, right.dx));
    Ok(Density { x, rho })
}

/// Spectroscopic quantities in GHz (entropies in bits).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralObservables {
    pub omega_left: f64,
    pub omega_right: f64,
    pub beta_left: f64,
    pub beta_right: f64,
    /// ω^L − ω^R.
    pub detuning: f64,
    /// E4 − E2 − E1 + E0.
    pub zeta: f64,
    /// E_n − E_0.
    pub energies: Vec<f64>,
    pub entropies: Vec<f64>,
}

pub fn spectral_observables(
    spectrum: &TwoBodySpectrum,
    basis: &HartreeBasis,
    units: &UnitSystem,
) -> Result<SpectralObservables, AnalysisError> {
    if spectrum.len() < 6 {
        return Err(AnalysisError::InsufficientStates {
            what: "two-body eigenstates",
            need: 6,
            have: spectrum.len(),
        });
    }
    let levels = basis.eps_left.len().min(basis.eps_right.len());
    if levels < 3 {
        return Err(AnalysisError::InsufficientStates {
            what: "Hartree levels per well",
            need: 3,
            have: levels,
        });
    }
    let ghz = |e: f64| units.energy_to_ghz(e);
    let (el, er) = (&basis.eps_left, &basis.eps_right);
    let omega_left = ghz(el[1] - el[0]);
    let omega_right = ghz(er[1] - er[0]);
    let beta_left = ghz((el[2] - el[1]) - (el[1] - el[0]));
    let beta_right = ghz((er[2] - er[1]) - (er[1] - er[0]));
    let e = &spectrum.energies;
    let entropies = spectrum
        .coefficients
        .iter()
        .map(entanglement_entropy)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SpectralObservables {
        omega_left,
        omega_right,
        beta_left,
        beta_right,
        detuning: omega_left - omega_right,
        zeta: ghz((e[4] - e[2]) - (e[1] - e[0])),
        energies: e.iter().map(|&x| ghz(x - e[0])).collect(),
        entropies,
    })
}

/// Eigenstate with the largest weight on the product state |i j⟩; ties go
/// to the lower energy.
pub fn state_for_product(spectrum: &TwoBodySpectrum, i: usize, j: usize) -> usize {
    let mut best = (0, -1.0);
    for (n, c) in spectrum.coefficients.iter().enumerate() {
        let w = c[(i, j)] * c[(i, j)];
        if w > best.1 + 1e-12 {
            best = (n, w);
        }
    }
    best.0
}

/// Product state |i j⟩ with the largest weight in eigenstate n.
pub fn dominant_product(spectrum: &TwoBodySpectrum, n: usize) -> (usize, usize) {
    let c = &spectrum.coefficients[n];
    let k = c.iamax_full();
    (k.0, k.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapCoupling {
    pub lambda_star: f64,
    /// Half the minimum gap.
    pub g: f64,
    pub gap_min: f64,
}

/// Vertex of the parabola through three points.
pub fn parabola_vertex(p: [(f64, f64); 3]) -> (f64, f64) {
    let [(x0, y0), (x1, y1), (x2, y2)] = p;
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if a <= 0.0 || !a.is_finite() {
        return (x1, y1);
    }
    let b = d01 - a * (x0 + x1);
    let xv = (-b / (2.0 * a)).clamp(x0, x2);
    let yv = y0 + d01 * (xv - x0) + a * (xv - x0) * (xv - x1);
    (xv, yv)
}

/// Locates the avoided crossing in a sweep of `(λ, E2 − E1)` samples,
/// sorted by λ, and returns λ* with g = gap(λ*)/2.
pub fn extract_gap_coupling(sweep: &[(f64, f64)]) -> Result<GapCoupling, AnalysisError> {
    if sweep.len() < 3 {
        return Err(AnalysisError::ShortSweep(sweep.len()));
    }
    let k = sweep
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(k, _)| k)
        .expect("non-empty");
    if k == 0 || k == sweep.len() - 1 {
        return Err(AnalysisError::MinimumAtBoundary(sweep[k].0));
    }
    let (lambda_star, gap) = parabola_vertex([sweep[k - 1], sweep[k], sweep[k + 1]]);
    let gap = gap.max(0.0);
    Ok(GapCoupling {
        lambda_star,
        g: gap / 2.0,
        gap_min: gap,
    })
}
