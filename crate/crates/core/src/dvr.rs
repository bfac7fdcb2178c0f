//! Sinc-DVR grids for the two wells and the matrix elements of the
//! one-body and interaction operators on them.
//!
//! The two grids share the spacing and meet at the barrier: the left grid
//! stops one step short of `x_b`, the right grid starts on it. Each
//! electron's basis therefore ends at an infinite wall at the barrier.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::electrostatics::{Barrier, PotentialProfile};

#[derive(Debug, Error, PartialEq)]
pub enum DvrError {
    #[error("grid spacing must be positive, got {0}")]
    InvalidSpacing(f64),
    #[error("{well:?} grid has {points} points, need at least {min}")]
    TooFewPoints { well: Well, points: usize, min: usize },
    #[error("grid point {x} outside potential range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("shielding parameter must be positive, got {0}")]
    InvalidShielding(f64),
}

pub const MIN_POINTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Well {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DvrGrid {
    pub x: Vec<f64>,
    pub dx: f64,
    pub well: Well,
}

impl DvrGrid {
    /// Index of the last point (the grid has `k() + 1` points).
    pub fn k(&self) -> usize {
        self.x.len() - 1
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// How far each grid reaches beyond its well minimum on the outer side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Margins {
    /// Out to where the potential first exceeds the barrier top, or to the
    /// end of the profile.
    Auto,
    /// Explicit distances beyond the left and right minima.
    Fixed { left: f64, right: f64 },
}

/// Outer grid ends `(lo, hi)` chosen by `margins`.
pub fn grid_extent(profile: &PotentialProfile, barrier: &Barrier, margins: Margins) -> (f64, f64) {
    let (p_lo, p_hi) = profile.range();
    match margins {
        Margins::Fixed { left, right } => ((barrier.x_min_l - left).max(p_lo), (barrier.x_min_r + right).min(p_hi)),
        Margins::Auto => {
            let lo = profile
                .x
                .iter()
                .zip(&profile.v)
                .rev()
                .find(|&(&x, &v)| x < barrier.x_min_l && v >= barrier.v_b)
                .map_or(p_lo, |(&x, _)| x);
            let hi = profile
                .x
                .iter()
                .zip(&profile.v)
                .find(|&(&x, &v)| x > barrier.x_min_r && v >= barrier.v_b)
                .map_or(p_hi, |(&x, _)| x);
            (lo, hi)
        }
    }
}

/// Spacing that puts about `points` nodes in the wider of the two wells.
pub fn spacing_for_points(x_b: f64, extent: (f64, f64), points: usize) -> f64 {
    let span = (x_b - extent.0).max(extent.1 - x_b);
    span / points.max(2) as f64
}

/// Builds the left and right grids on `[lo, x_b)` and `[x_b, hi]`.
///
/// Spans are rounded outward to a whole number of steps, but never past
/// the sampled range of the potential.
pub fn build_grids(
    profile: &PotentialProfile,
    x_b: f64,
    dx: f64,
    extent: (f64, f64),
) -> Result<(DvrGrid, DvrGrid), DvrError> {
    if !(dx.is_finite() && dx > 0.0) {
        return Err(DvrError::InvalidSpacing(dx));
    }
    let (p_lo, p_hi) = profile.range();
    let slack = 1e-9 * dx;
    let steps = |span: f64, limit: f64| {
        let mut n = (span / dx - 1e-9).ceil().max(0.0) as usize;
        while n > 0 && n as f64 * dx > limit + slack {
            n -= 1;
        }
        n
    };
    let n_l = steps(x_b - extent.0, x_b - p_lo);
    let n_r = steps(extent.1 - x_b, p_hi - x_b);
    let left: Vec<f64> = (1..=n_l).rev().map(|k| x_b - k as f64 * dx).collect();
    let right: Vec<f64> = (0..=n_r).map(|k| x_b + k as f64 * dx).collect();
    for (well, pts) in [(Well::Left, &left), (Well::Right, &right)] {
        if pts.len() < MIN_POINTS {
            return Err(DvrError::TooFewPoints {
                well,
                points: pts.len(),
                min: MIN_POINTS,
            });
        }
    }
    Ok((
        DvrGrid {
            x: left,
            dx,
            well: Well::Left,
        },
        DvrGrid {
            x: right,
            dx,
            well: Well::Right,
        },
    ))
}

/// Grid with `n` points starting at `x0`, for use outside the double-well
/// setting (single-well tests, brute-force references).
pub fn uniform_grid(x0: f64, dx: f64, n: usize, well: Well) -> DvrGrid {
    DvrGrid {
        x: (0..n).map(|k| x0 + k as f64 * dx).collect(),
        dx,
        well,
    }
}

pub fn kinetic_matrix(grid: &DvrGrid) -> DMatrix<f64> {
    let n = grid.len();
    let inv = 1.0 / (grid.dx * grid.dx);
    DMatrix::from_fn(n, n, |a, b| {
        if a == b {
            PI * PI / 6.0 * inv
        } else {
            let d = a.abs_diff(b);
            let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
            sign * inv / (d * d) as f64
        }
    })
}

pub fn potential_diagonal(grid: &DvrGrid, profile: &PotentialProfile) -> Result<Vec<f64>, DvrError> {
    let (lo, hi) = profile.range();
    let tol = 1e-9 * grid.dx;
    grid.x
        .iter()
        .map(|&x| {
            if x < lo - tol || x > hi + tol {
                Err(DvrError::OutOfRange { x, lo, hi })
            } else {
                Ok(profile.interpolate(x))
            }
        })
        .collect()
}

pub fn potential_matrix(grid: &DvrGrid, profile: &PotentialProfile) -> Result<DMatrix<f64>, DvrError> {
    Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
        potential_diagonal(grid, profile)?,
    )))
}

/// h = t + diag(v).
pub fn one_body_hamiltonian(grid: &DvrGrid, profile: &PotentialProfile) -> Result<DMatrix<f64>, DvrError> {
    let v = potential_diagonal(grid, profile)?;
    Ok(hamiltonian_from_values(grid, &v))
}

/// h = t + diag(f(x)) for an analytic potential.
pub fn one_body_hamiltonian_fn(grid: &DvrGrid, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let v: Vec<f64> = grid.x.iter().map(|&x| f(x)).collect();
    hamiltonian_from_values(grid, &v)
}

fn hamiltonian_from_values(grid: &DvrGrid, v: &[f64]) -> DMatrix<f64> {
    let mut h = kinetic_matrix(grid);
    for (i, &vi) in v.iter().enumerate() {
        h[(i, i)] += vi;
    }
    h
}

/// Pointwise two-electron interaction u(x_L, x_R).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Interaction {
    /// κ / √((x_L − x_R)² + ε²).
    SoftCoulomb {
        kappa: f64,
        epsilon: f64,
    },
    /// c (x_L − a)(x_R − b): the quadratic-order part of a repulsion
    /// expanded about the points a and b.
    Bilinear {
        c: f64,
        a: f64,
        b: f64,
    },
    None,
}

impl Interaction {
    pub fn soft_coulomb(kappa: f64, epsilon: f64) -> Result<Self, DvrError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(DvrError::InvalidShielding(epsilon));
        }
        Ok(Self::SoftCoulomb { kappa, epsilon })
    }

    #[inline]
    pub fn eval(&self, xl: f64, xr: f64) -> f64 {
        match *self {
            Self::SoftCoulomb { kappa, epsilon } => {
                let d = xl - xr;
                kappa / (d * d + epsilon * epsilon).sqrt()
            }
            Self::Bilinear { c, a, b } => c * (xl - a) * (xr - b),
            Self::None => 0.0,
        }
    }
}

/// Interaction sampled on the grid pair: `u[(γ, δ)] = u(x^L_γ, x^R_δ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoulombDiagonal {
    pub u: DMatrix<f64>,
    pub interaction: Interaction,
}

pub fn interaction_diagonal(left: &DvrGrid, right: &DvrGrid, interaction: Interaction) -> CoulombDiagonal {
    let u = DMatrix::from_fn(left.len(), right.len(), |g, d| interaction.eval(left.x[g], right.x[d]));
    CoulombDiagonal { u, interaction }
}

pub fn coulomb_diagonal(
    left: &DvrGrid,
    right: &DvrGrid,
    kappa: f64,
    epsilon: f64,
) -> Result<CoulombDiagonal, DvrError> {
    Ok(interaction_diagonal(
        left,
        right,
        Interaction::soft_coulomb(kappa, epsilon)?,
    ))
}
