//! Self-consistent Hartree orbitals for two distinguishable electrons, one
//! per well.
//!
//! Each electron moves in its bare potential plus the mean field of the
//! other electron's ground orbital. Only the ground orbital feeds the mean
//! field; the excited orbitals of the converged Fock operators form the
//! truncated single-particle basis used by the CI step.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dvr::CoulombDiagonal;
use crate::linalg::lowest_eigenpairs;

#[derive(Debug, Error, PartialEq)]
pub enum HartreeError {
    #[error("{well} well has {points} grid points, cannot keep {requested} orbitals")]
    TooManyOrbitals {
        well: &'static str,
        points: usize,
        requested: usize,
    },
    #[error("interaction matrix is {rows}x{cols}, grids have {left} and {right} points")]
    Shape {
        rows: usize,
        cols: usize,
        left: usize,
        right: usize,
    },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("eigensolver failed (non-finite Fock matrix)")]
    Eigensolver,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScfSettings {
    /// Highest kept orbital index in the left well (N^L).
    pub n_left: usize,
    pub n_right: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ScfSettings {
    fn default() -> Self {
        Self {
            n_left: 5,
            n_right: 5,
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HartreeBasis {
    /// Orbital coefficients on the left grid, one column per orbital.
    pub b_left: DMatrix<f64>,
    pub b_right: DMatrix<f64>,
    pub eps_left: Vec<f64>,
    pub eps_right: Vec<f64>,
    /// Mean-field potential felt on each grid at convergence.
    pub mean_field_left: Vec<f64>,
    pub mean_field_right: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the 50 % mixing fallback was switched on.
    pub mixed: bool,
}

fn solve_well(h: &DMatrix<f64>, mean_field: &[f64], count: usize) -> Result<(Vec<f64>, DMatrix<f64>), HartreeError> {
    let mut f = h.clone();
    for (i, &m) in mean_field.iter().enumerate() {
        f[(i, i)] += m;
    }
    let e = lowest_eigenpairs(&f, count).ok_or(HartreeError::Eigensolver)?;
    Ok((e.values, e.vectors))
}

/// Mean field on the grid of one well from the ground orbital of the other.
/// `u` is indexed `[(left point, right point)]`.
fn mean_field(u: &DMatrix<f64>, other_ground: &[f64], for_left: bool) -> Vec<f64> {
    let w: Vec<f64> = other_ground.iter().map(|c| c * c).collect();
    let w = DVector::from_vec(w);
    if for_left {
        (u * w).as_slice().to_vec()
    } else {
        (u.transpose() * w).as_slice().to_vec()
    }
}

fn max_shift(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Iterates the coupled Fock equations from f = h until the kept
/// eigenvalues move by less than `tol` between iterations.
///
/// If the eigenvalue change grows for 10 iterations in a row the mean field
/// is mixed 50/50 with the previous one from then on. Running out of
/// iterations is not an error; the last iterate is returned with
/// `converged = false`.
pub fn scf_solve(
    h_left: &DMatrix<f64>,
    h_right: &DMatrix<f64>,
    u: &CoulombDiagonal,
    settings: &ScfSettings,
) -> Result<HartreeBasis, HartreeError> {
    let (kl, kr) = (h_left.nrows(), h_right.nrows());
    let (nl, nr) = (settings.n_left + 1, settings.n_right + 1);
    if nl > kl {
        return Err(HartreeError::TooManyOrbitals {
            well: "left",
            points: kl,
            requested: nl,
        });
    }
    if nr > kr {
        return Err(HartreeError::TooManyOrbitals {
            well: "right",
            points: kr,
            requested: nr,
        });
    }
    if u.u.shape() != (kl, kr) {
        return Err(HartreeError::Shape {
            rows: u.u.nrows(),
            cols: u.u.ncols(),
            left: kl,
            right: kr,
        });
    }
    if !(settings.tol > 0.0) {
        return Err(HartreeError::InvalidTolerance(settings.tol));
    }

    let mut mf_l = vec![0.0; kl];
    let mut mf_r = vec![0.0; kr];
    let (mut eps_l, mut b_l) = solve_well(h_left, &mf_l, nl)?;
    let (mut eps_r, mut b_r) = solve_well(h_right, &mf_r, nr)?;

    let mut mixed = false;
    let mut last_delta = f64::INFINITY;
    let mut rising = 0usize;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iter {
        iterations += 1;
        let g_r: Vec<f64> = b_r.column(0).iter().copied().collect();
        let g_l: Vec<f64> = b_l.column(0).iter().copied().collect();
        let mut new_l = mean_field(&u.u, &g_r, true);
        let mut new_r = mean_field(&u.u, &g_l, false);
        if mixed {
            for (n, o) in new_l.iter_mut().zip(&mf_l) {
                *n = 0.5 * (*n + o);
            }
            for (n, o) in new_r.iter_mut().zip(&mf_r) {
                *n = 0.5 * (*n + o);
            }
        }
        mf_l = new_l;
        mf_r = new_r;
        let (el, bl) = solve_well(h_left, &mf_l, nl)?;
        let (er, br) = solve_well(h_right, &mf_r, nr)?;
        let delta = max_shift(&el, &eps_l).max(max_shift(&er, &eps_r));
        eps_l = el;
        eps_r = er;
        b_l = bl;
        b_r = br;
        if delta < settings.tol {
            converged = true;
            break;
        }
        if delta > last_delta {
            rising += 1;
            if rising >= 10 {
                mixed = true;
            }
        } else {
            rising = 0;
        }
        last_delta = delta;
    }

    Ok(HartreeBasis {
        b_left: b_l,
        b_right: b_r,
        eps_left: eps_l,
        eps_right: eps_r,
        mean_field_left: mf_l,
        mean_field_right: mf_r,
        iterations,
        converged,
        mixed,
    })
}

/// Energy of the Hartree product of the two ground orbitals,
/// ⟨h^L⟩ + ⟨h^R⟩ + ⟨u⟩.
pub fn hartree_energy(h_left: &DMatrix<f64>, h_right: &DMatrix<f64>, u: &CoulombDiagonal, basis: &HartreeBasis) -> f64 {
    let gl = basis.b_left.column(0);
    let gr = basis.b_right.column(0);
    let el = gl.dot(&(h_left * gl));
    let er = gr.dot(&(h_right * gr));
    let wl = gl.map(|c| c * c);
    let wr = gr.map(|c| c * c);
    el + er + wl.dot(&(&u.u * wr))
}
