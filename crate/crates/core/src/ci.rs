//! Configuration interaction in the product basis of Hartree orbitals.
//!
//! Pair index convention: product state |i j⟩ (left orbital i, right
//! orbital j) sits at row `i * (N^R + 1) + j`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::dvr::CoulombDiagonal;
use crate::linalg::full_eigen;

#[derive(Debug, Error, PartialEq)]
pub enum CiError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("eigensolver failed (non-finite CI matrix)")]
    Eigensolver,
}

/// `Bᵀ h B`.
pub fn transform_one_body(h: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, CiError> {
    if h.nrows() != h.ncols() || h.nrows() != b.nrows() {
        return Err(CiError::Shape(format!(
            "operator {}x{} with coefficients {}x{}",
            h.nrows(),
            h.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let m = b.transpose() * h * b;
    Ok((&m + m.transpose()) * 0.5)
}

/// Two-body matrix elements u_{ij,kl} stored as a square matrix over pair
/// indices: `u[(i * nr + j, k * nr + l)]`.
pub fn transform_two_body(
    u: &CoulombDiagonal,
    b_left: &DMatrix<f64>,
    b_right: &DMatrix<f64>,
) -> Result<DMatrix<f64>, CiError> {
    if u.u.nrows() != b_left.nrows() || u.u.ncols() != b_right.nrows() {
        return Err(CiError::Shape(format!(
            "interaction {}x{} with orbital grids {} and {}",
            u.u.nrows(),
            u.u.ncols(),
            b_left.nrows(),
            b_right.nrows()
        )));
    }
    let (nl, nr) = (b_left.ncols(), b_right.ncols());
    // pair products P[(α, i*n + k)] = B_αi B_αk
    let pairs = |b: &DMatrix<f64>, n: usize| DMatrix::from_fn(b.nrows(), n * n, |a, c| b[(a, c / n)] * b[(a, c % n)]);
    let pl = pairs(b_left, nl);
    let pr = pairs(b_right, nr);
    // m[(i*nl + k, j*nr + l)] = Σ_αβ P^L_α,ik u_αβ P^R_β,jl
    let m = pl.transpose() * &u.u * pr;
    let dim = nl * nr;
    let mut t = DMatrix::zeros(dim, dim);
    for i in 0..nl {
        for k in 0..nl {
            for j in 0..nr {
                for l in 0..nr {
                    t[(i * nr + j, k * nr + l)] = m[(i * nl + k, j * nr + l)];
                }
            }
        }
    }
    Ok((&t + t.transpose()) * 0.5)
}

/// H_{ij,kl} = h^L_ik δ_jl + δ_ik h^R_jl + u_{ij,kl}.
pub fn assemble_ci(h_left: &DMatrix<f64>, h_right: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>, CiError> {
    let (nl, nr) = (h_left.nrows(), h_right.nrows());
    if h_left.ncols() != nl || h_right.ncols() != nr || u.shape() != (nl * nr, nl * nr) {
        return Err(CiError::Shape(format!(
            "one-body {}x{} and {}x{}, two-body {}x{}",
            nl,
            h_left.ncols(),
            nr,
            h_right.ncols(),
            u.nrows(),
            u.ncols()
        )));
    }
    let mut h = u.clone();
    for i in 0..nl {
        for j in 0..nr {
            let p = i * nr + j;
            for k in 0..nl {
                h[(p, k * nr + j)] += h_left[(i, k)];
            }
            for l in 0..nr {
                h[(p, i * nr + l)] += h_right[(j, l)];
            }
        }
    }
    Ok(h)
}

#[derive(Clone, Debug)]
pub struct TwoBodySpectrum {
    /// Ascending eigenvalues.
    pub energies: Vec<f64>,
    /// `coefficients[n][(i, j)] = C_{ij,n}`.
    pub coefficients: Vec<DMatrix<f64>>,
    /// (N^L + 1, N^R + 1).
    pub dims: (usize, usize),
}

impl TwoBodySpectrum {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Σ_ij C_ij,m C_ij,n.
    pub fn overlap(&self, m: usize, other: &TwoBodySpectrum, n: usize) -> f64 {
        self.coefficients[m].dot(&other.coefficients[n])
    }
}

pub fn diagonalize_ci(h: &DMatrix<f64>, dims: (usize, usize)) -> Result<TwoBodySpectrum, CiError> {
    let (nl, nr) = dims;
    if h.shape() != (nl * nr, nl * nr) {
        return Err(CiError::Shape(format!(
            "CI matrix {}x{} for basis {}x{}",
            h.nrows(),
            h.ncols(),
            nl,
            nr
        )));
    }
    let e = full_eigen(h).ok_or(CiError::Eigensolver)?;
    let coefficients = (0..e.values.len())
        .map(|n| DMatrix::from_fn(nl, nr, |i, j| e.vectors[(i * nr + j, n)]))
        .collect();
    Ok(TwoBodySpectrum {
        energies: e.values,
        coefficients,
        dims,
    })
}
