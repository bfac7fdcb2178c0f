use serde::{Deserialize, Serialize};

use super::ElectrostaticsError;

/// Dimensionless confinement potential sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialProfile {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PotentialProfile {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self, ElectrostaticsError> {
        let bad = |m: String| Err(ElectrostaticsError::InvalidProfile(m));
        if x.len() != v.len() {
            return bad(format!("{} positions for {} values", x.len(), v.len()));
        }
        if x.len() < 3 {
            return bad("need at least three samples".into());
        }
        let dx = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
        if !(dx > 0.0) {
            return bad("positions must increase".into());
        }
        for (i, w) in x.windows(2).enumerate() {
            if (w[1] - w[0] - dx).abs() > 1e-9 * dx.max(1.0) {
                return bad(format!("non-uniform spacing at sample {i}"));
            }
        }
        if v.iter().any(|y| !y.is_finite()) {
            return bad("non-finite potential value".into());
        }
        Ok(Self { x, v })
    }

    /// Samples `f` at `n` uniform points on [a, b].
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self, ElectrostaticsError> {
        let dx = (b - a) / (n.max(2) - 1) as f64;
        let x: Vec<f64> = (0..n).map(|i| a + i as f64 * dx).collect();
        let v = x.iter().map(|&t| f(t)).collect();
        Self::new(x, v)
    }

    pub fn spacing(&self) -> f64 {
        (self.x[self.x.len() - 1] - self.x[0]) / (self.x.len() - 1) as f64
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Cubic Hermite interpolation with central-difference slopes (one-sided
    /// at the ends), clamped to the end values outside the range.
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.x.len();
        let t = (x - self.x[0]) / self.spacing();
        if t <= 0.0 {
            return self.v[0];
        }
        if t >= (n - 1) as f64 {
            return self.v[n - 1];
        }
        let i = (t.floor() as usize).min(n - 2);
        let f = t - i as f64;
        let slope = |k: usize| -> f64 {
            if k == 0 {
                self.v[1] - self.v[0]
            } else if k == n - 1 {
                self.v[n - 1] - self.v[n - 2]
            } else {
                0.5 * (self.v[k + 1] - self.v[k - 1])
            }
        };
        let (p0, p1, m0, m1) = (self.v[i], self.v[i + 1], slope(i), slope(i + 1));
        let f2 = f * f;
        let f3 = f2 * f;
        (2.0 * f3 - 3.0 * f2 + 1.0) * p0 + (f3 - 2.0 * f2 + f) * m0 + (-2.0 * f3 + 3.0 * f2) * p1 + (f3 - f2) * m1
    }

    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            x: self.x.clone(),
            v: self.v.iter().map(|y| y + offset).collect(),
        }
    }

    /// Value, first and second derivative from a least-squares parabola
    /// through the seven samples nearest `x`.
    pub fn local_fit(&self, x: f64) -> (f64, f64, f64) {
        let n = self.x.len();
        let half = 3usize.min((n - 1) / 2);
        let t = ((x - self.x[0]) / self.spacing()).round();
        let c = (t.max(0.0) as usize).clamp(half, n - 1 - half);
        // normal equations for a + b s + c s², s = x_k - x
        let mut m = [[0.0f64; 3]; 3];
        let mut r = [0.0f64; 3];
        for k in c - half..=c + half {
            let s = self.x[k] - x;
            let basis = [1.0, s, s * s];
            for a in 0..3 {
                r[a] += basis[a] * self.v[k];
                for b in 0..3 {
                    m[a][b] += basis[a] * basis[b];
                }
            }
        }
        let mat = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
        let rhs = nalgebra::Vector3::from_column_slice(&r);
        let sol = mat.lu().solve(&rhs).unwrap_or_else(nalgebra::Vector3::zeros);
        (sol[0], sol[1], 2.0 * sol[2])
    }
}

/// Potential at `x`, refusing positions outside the sampled range.
pub fn interpolate_potential(profile: &PotentialProfile, x: f64) -> Result<f64, ElectrostaticsError> {
    let (lo, hi) = profile.range();
    let tol = 1e-9 * profile.spacing();
    if !(x >= lo - tol && x <= hi + tol) {
        return Err(ElectrostaticsError::OutOfRange { x, lo, hi });
    }
    Ok(profile.interpolate(x))
}

/// Double-well landmarks of a potential profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub x_b: f64,
    pub v_b: f64,
    pub x_min_l: f64,
    pub x_min_r: f64,
}

/// Vertex offset (in samples) of the parabola through three points.
fn vertex_offset(a: f64, b: f64, c: f64) -> f64 {
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        0.0
    } else {
        (0.5 * (a - c) / den).clamp(-0.5, 0.5)
    }
}

/// Extremum pairs shallower than this fraction of the profile's value span
/// are treated as flat shoulders rather than separate wells.
const MIN_RELATIVE_PROMINENCE: f64 = 1e-6;

/// Interior local extrema in order, with adjacent pairs shallower than
/// `tol` removed (shallowest first).
fn significant_extrema(v: &[f64], tol: f64) -> Vec<(usize, bool)> {
    let n = v.len();
    let mut ext: Vec<(usize, bool)> = (1..n - 1)
        .filter_map(|i| {
            if v[i] < v[i - 1] && v[i] <= v[i + 1] {
                Some((i, true))
            } else if v[i] > v[i - 1] && v[i] >= v[i + 1] {
                Some((i, false))
            } else {
                None
            }
        })
        .collect();
    loop {
        let shallowest = ext
            .windows(2)
            .enumerate()
            .map(|(k, w)| (k, (v[w[0].0] - v[w[1].0]).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match shallowest {
            Some((k, d)) if d < tol => {
                ext.drain(k..k + 2);
            }
            _ => return ext,
        }
    }
}

/// Locates the two wells and the barrier between them.
///
/// The profile must have exactly two interior local minima with exactly
/// one interior local maximum between them. Ripples whose depth is below
/// a millionth of the profile's value span are ignored.
pub fn find_barrier(profile: &PotentialProfile) -> Result<Barrier, ElectrostaticsError> {
    let v = &profile.v;
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let ext = significant_extrema(v, MIN_RELATIVE_PROMINENCE * (hi - lo));
    let minima: Vec<usize> = ext.iter().filter(|e| e.1).map(|e| e.0).collect();
    let maxima_between =
        |a: usize, b: usize| -> Vec<usize> { ext.iter().filter(|e| !e.1 && e.0 > a && e.0 < b).map(|e| e.0).collect() };
    if minima.len() != 2 {
        let maxima = if minima.len() >= 2 {
            maxima_between(minima[0], minima[minima.len() - 1]).len()
        } else {
            0
        };
        return Err(ElectrostaticsError::NotDoubleWell {
            minima: minima.len(),
            maxima,
        });
    }
    let maxima = maxima_between(minima[0], minima[1]);
    if maxima.len() != 1 {
        return Err(ElectrostaticsError::NotDoubleWell {
            minima: 2,
            maxima: maxima.len(),
        });
    }
    let dx = profile.spacing();
    let refine = |i: usize| profile.x[i] + dx * vertex_offset(v[i - 1], v[i], v[i + 1]);
    let x_b = refine(maxima[0]);
    Ok(Barrier {
        x_b,
        v_b: profile.interpolate(x_b),
        x_min_l: refine(minima[0]),
        x_min_r: refine(minima[1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_uniform() {
        assert!(PotentialProfile::new(vec![0.0, 1.0, 3.0], vec![0.0; 3]).is_err());
        assert!(PotentialProfile::new(vec![0.0, 1.0], vec![0.0; 3]).is_err());
        assert!(PotentialProfile::new(vec![2.0, 1.0, 0.0], vec![0.0; 3]).is_err());
    }

    #[test]
    fn quartic_double_well() {
        let p = PotentialProfile::from_fn(-2.0, 2.0, 401, |x| (x * x - 1.0).powi(2)).unwrap();
        let b = find_barrier(&p).unwrap();
        assert!(b.x_b.abs() < 1e-12);
        assert!((b.x_min_l + 1.0).abs() < 1e-4 && (b.x_min_r - 1.0).abs() < 1e-4);
        assert!((b.v_b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_well_is_rejected() {
        let p = PotentialProfile::from_fn(-2.0, 2.0, 101, |x| x * x).unwrap();
        assert!(matches!(
            find_barrier(&p),
            Err(ElectrostaticsError::NotDoubleWell { minima: 1, .. })
        ));
        let p = PotentialProfile::from_fn(-4.0, 4.0, 401, |x| (3.0 * x).cos()).unwrap();
        assert!(find_barrier(&p).is_err());
    }

    #[test]
    fn shallow_shoulder_is_ignored() {
        let f = |x: f64| (x * x - 1.0).powi(2) + 1e-9 * (40.0 * x).sin();
        let p = PotentialProfile::from_fn(-2.0, 2.0, 2001, f).unwrap();
        let b = find_barrier(&p).unwrap();
        assert!(b.x_b.abs() < 0.01);
        let p = PotentialProfile::from_fn(-2.0, 2.0, 401, |x| (x * x - 1.0).powi(2) * (x * x - 0.2).powi(2)).unwrap();
        assert!(find_barrier(&p).is_err());
    }

    #[test]
    fn local_fit_recovers_quadratic() {
        let p = PotentialProfile::from_fn(-1.0, 1.0, 201, |x| 3.0 - 2.0 * x + 5.0 * x * x).unwrap();
        for &x in &[-0.993, -0.31, 0.0, 0.4567, 0.999] {
            let (v, d1, d2) = p.local_fit(x);
            assert!((v - (3.0 - 2.0 * x + 5.0 * x * x)).abs() < 1e-10);
            assert!((d1 - (-2.0 + 10.0 * x)).abs() < 1e-9);
            assert!((d2 - 10.0).abs() < 1e-7);
        }
    }

    #[test]
    fn interpolation_is_exact_for_lines_and_clamped() {
        let p = PotentialProfile::from_fn(0.0, 1.0, 11, |x| 2.0 * x).unwrap();
        assert!((p.interpolate(0.33) - 0.66).abs() < 1e-12);
        assert!((p.interpolate(0.0) - 0.0).abs() < 1e-15);
        assert_eq!(p.interpolate(-1.0), 0.0);
        assert_eq!(p.interpolate(5.0), 2.0);
    }

    #[test]
    fn interpolation_is_exact_for_interior_quadratics() {
        let p = PotentialProfile::from_fn(-1.0, 1.0, 21, |x| 1.0 + x - 3.0 * x * x).unwrap();
        for &x in &[-0.87, -0.3, 0.01, 0.55, 0.86] {
            assert!((p.interpolate(x) - (1.0 + x - 3.0 * x * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_matches_samples() {
        let p = PotentialProfile::from_fn(0.0, 3.0, 31, |x| x.sin()).unwrap();
        for (x, v) in p.x.iter().zip(&p.v) {
            assert!((p.interpolate(*x) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn checked_interpolation_rejects_outside() {
        let p = PotentialProfile::from_fn(-1.0, 1.0, 21, |x| x).unwrap();
        assert!((interpolate_potential(&p, 0.25).unwrap() - 0.25).abs() < 1e-12);
        assert!(interpolate_potential(&p, 1.0).is_ok());
        assert!(matches!(
            interpolate_potential(&p, 1.01),
            Err(ElectrostaticsError::OutOfRange { .. })
        ));
        assert!(interpolate_potential(&p, f64::NAN).is_err());
    }
}
