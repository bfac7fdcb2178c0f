//! Voltage search: cost functions, finite-difference gradients, ADAM and
//! the linear interpolation between configurations.

mod pipeline;
mod sweep;

pub use pipeline::{evaluate_profile, pipeline_evaluate, Evaluation, Pipeline, PipelineError, PipelineSettings};
pub use sweep::{effective_zeta_along, find_config_ii, sweep, ConfigII, SweepPoint, SweepRecord, TRACKED_STATES};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::SpectralObservables;

#[derive(Debug, Error, PartialEq)]
pub enum OptimizerError {
    #[error("voltage {index} is {value} mV, outside ±{bound} mV")]
    VoltageOutOfRange { index: usize, value: f64, bound: f64 },
    #[error("invalid optimizer setting: {0}")]
    InvalidConfig(String),
    #[error("cost undefined at the starting point: {0}")]
    InvalidStart(String),
    #[error("cost undefined on both sides of coordinate {0}")]
    Stencil(usize),
}

pub const VOLTAGE_BOUND_MV: f64 = 1000.0;

/// Hand-tuned config-I starting point for the default geometry (mV). It
/// comes from matching well curvature, quartic and cubic terms of the
/// assembled profile to the targets; the full pipeline puts it within a
/// few tenths of a GHz of the config-I targets.
pub const CONFIG_I_SEED_MV: [f64; 7] = [248.22, -24.24, 421.91, -619.40, 230.25, -31.80, 39.41];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltageVector {
    pub v: Vec<f64>,
    pub label: String,
}

impl VoltageVector {
    pub fn new(v: Vec<f64>, label: impl Into<String>) -> Result<Self, OptimizerError> {
        for (index, &value) in v.iter().enumerate() {
            if !value.is_finite() || value.abs() > VOLTAGE_BOUND_MV {
                return Err(OptimizerError::VoltageOutOfRange {
                    index,
                    value,
                    bound: VOLTAGE_BOUND_MV,
                });
            }
        }
        Ok(Self { v, label: label.into() })
    }
}

/// V(λ) = (1 − λ) V_I + λ V_III.
pub fn parametrize(v_i: &[f64], v_iii: &[f64], lambda: f64) -> Vec<f64> {
    v_i.iter()
        .zip(v_iii)
        .map(|(&a, &b)| {
            if lambda == 0.0 {
                a
            } else if lambda == 1.0 {
                b
            } else {
                (1.0 - lambda) * a + lambda * b
            }
        })
        .collect()
}

/// Frequency and anharmonicity targets in GHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigITargets {
    pub omega_left_ghz: f64,
    pub omega_right_ghz: f64,
    pub beta_left_ghz: f64,
    pub beta_right_ghz: f64,
}

impl Default for ConfigITargets {
    fn default() -> Self {
        Self {
            omega_left_ghz: 11.0,
            omega_right_ghz: 9.0,
            beta_left_ghz: 1.0,
            beta_right_ghz: -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigIIITargets {
    /// Targets for S_1..S_5 in bits.
    pub entropies: [f64; 5],
    pub beta_left_ghz: f64,
    pub beta_right_ghz: f64,
    pub detuning_ghz: f64,
}

impl Default for ConfigIIITargets {
    fn default() -> Self {
        Self {
            entropies: [0.0, 0.0, 1.5, 1.0, 1.5],
            beta_left_ghz: 1.0,
            beta_right_ghz: -1.0,
            detuning_ghz: -1.0,
        }
    }
}

/// (ω^L − 11)² + (ω^R − 9)² + (β^L − 1)² + (β^R + 1)² in GHz² for the
/// default targets.
pub fn cost_config_i(obs: &SpectralObservables, t: &ConfigITargets) -> f64 {
    (obs.omega_left - t.omega_left_ghz).powi(2)
        + (obs.omega_right - t.omega_right_ghz).powi(2)
        + (obs.beta_left - t.beta_left_ghz).powi(2)
        + (obs.beta_right - t.beta_right_ghz).powi(2)
}

/// Σ_{n=1..5} (S_n − target_n)² + (β^L − 1)² + (β^R + 1)² + (Δ + 1)².
pub fn cost_config_iii(obs: &SpectralObservables, t: &ConfigIIITargets) -> f64 {
    let s: f64 = t
        .entropies
        .iter()
        .enumerate()
        .map(|(k, target)| (obs.entropies.get(k + 1).copied().unwrap_or(0.0) - target).powi(2))
        .sum();
    s + (obs.beta_left - t.beta_left_ghz).powi(2)
        + (obs.beta_right - t.beta_right_ghz).powi(2)
        + (obs.detuning - t.detuning_ghz).powi(2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub g: Vec<f64>,
    /// True if any coordinate fell back to a one-sided difference.
    pub one_sided: bool,
}

/// Central differences, falling back to a one-sided difference against
/// `f0` for coordinates where one stencil point is undefined.
pub fn fd_gradient<E>(
    cost: &(dyn Fn(&[f64]) -> Result<f64, E> + Sync),
    v: &[f64],
    f0: f64,
    h: f64,
) -> Result<Gradient, OptimizerError> {
    use rayon::prelude::*;
    let parts: Vec<Result<(f64, bool), OptimizerError>> = (0..v.len())
        .into_par_iter()
        .map(|i| {
            let mut p = v.to_vec();
            p[i] += h;
            let fp = cost(&p).ok().filter(|x| x.is_finite());
            p[i] = v[i] - h;
            let fm = cost(&p).ok().filter(|x| x.is_finite());
            match (fp, fm) {
                (Some(a), Some(b)) => Ok(((a - b) / (2.0 * h), false)),
                (Some(a), None) => Ok(((a - f0) / h, true)),
                (None, Some(b)) => Ok(((f0 - b) / h, true)),
                (None, None) => Err(OptimizerError::Stencil(i)),
            }
        })
        .collect();
    let mut g = Vec::with_capacity(v.len());
    let mut one_sided = false;
    for p in parts {
        let (gi, o) = p?;
        g.push(gi);
        one_sided |= o;
    }
    Ok(Gradient { g, one_sided })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Initial ADAM step size (mV).
    pub learning_rate_mv: f64,
    /// Multiplies the step size after every iteration.
    pub lr_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_iters: usize,
    pub cost_tol: f64,
    pub fd_step_mv: f64,
    /// Extra runs from randomly perturbed seeds.
    pub restarts: usize,
    pub restart_spread_mv: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate_mv: 0.1,
            lr_decay: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_iters: 2000,
            cost_tol: 1e-3,
            fd_step_mv: 1e-3,
            restarts: 0,
            restart_spread_mv: 20.0,
            seed: 1,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::InvalidConfig(m.into()));
        if !(self.learning_rate_mv > 0.0) {
            return bad("learning_rate_mv must be positive");
        }
        if !(self.fd_step_mv > 0.0) {
            return bad("fd_step_mv must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("ADAM moment parameters must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub cost: f64,
    pub voltages_mv: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamResult {
    /// Lowest-cost iterate seen.
    pub best: Vec<f64>,
    pub best_cost: f64,
    pub history: Vec<IterRecord>,
    pub converged: bool,
    /// Why the run stopped early, if it did.
    pub failure: Option<String>,
}

/// ADAM on a cost defined through fallible evaluations.
///
/// Gradients are central differences. An iteration whose gradient needed a
/// one-sided difference takes a 10× shorter step; an update that lands on
/// an undefined point is retried with shorter steps before giving up.
pub fn adam_minimize<E: std::fmt::Display>(
    cost: &(dyn Fn(&[f64]) -> Result<f64, E> + Sync),
    v0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<AdamResult, OptimizerError> {
    cfg.validate()?;
    let f0 = match cost(v0) {
        Ok(f) if f.is_finite() => f,
        Ok(f) => return Err(OptimizerError::InvalidStart(format!("cost is {f}"))),
        Err(e) => return Err(OptimizerError::InvalidStart(e.to_string())),
    };
    let mut result = AdamResult {
        best: v0.to_vec(),
        best_cost: f0,
        history: vec![IterRecord {
            iter: 0,
            cost: f0,
            voltages_mv: v0.to_vec(),
        }],
        converged: f0 < cfg.cost_tol,
        failure: None,
    };
    if result.converged {
        return Ok(result);
    }
    let n = v0.len();
    let mut x = v0.to_vec();
    let mut fx = f0;
    let mut m = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut lr = cfg.learning_rate_mv;
    for t in 1..=cfg.max_iters {
        let grad = match fd_gradient(cost, &x, fx, cfg.fd_step_mv) {
            Ok(g) => g,
            Err(e) => {
                result.failure = Some(e.to_string());
                break;
            }
        };
        if grad.g.iter().any(|g| !g.is_finite()) {
            result.failure = Some("non-finite gradient".into());
            break;
        }
        let b1t = 1.0 - cfg.adam_beta1.powi(t as i32);
        let b2t = 1.0 - cfg.adam_beta2.powi(t as i32);
        let mut step = vec![0.0; n];
        for i in 0..n {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * grad.g[i];
            s[i] = cfg.adam_beta2 * s[i] + (1.0 - cfg.adam_beta2) * grad.g[i] * grad.g[i];
            step[i] = lr * (m[i] / b1t) / ((s[i] / b2t).sqrt() + cfg.adam_eps);
        }
        let mut scale = if grad.one_sided { 0.1 } else { 1.0 };
        let mut next = None;
        for _ in 0..4 {
            let cand: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a - scale * d).collect();
            match cost(&cand) {
                Ok(f) if f.is_finite() => {
                    next = Some((cand, f));
                    break;
                }
                Ok(_) => {
                    result.failure = Some(format!("cost became non-finite at iteration {t}"));
                    return Ok(result);
                }
                Err(_) => scale *= 0.1,
            }
        }
        let Some((cand, f)) = next else {
            result.failure = Some(format!("no valid update at iteration {t}"));
            break;
        };
        x = cand;
        fx = f;
        result.history.push(IterRecord {
            iter: t,
            cost: f,
            voltages_mv: x.clone(),
        });
        if f < result.best_cost {
            result.best_cost = f;
            result.best = x.clone();
        }
        if f < cfg.cost_tol {
            result.converged = true;
            break;
        }
        lr *= cfg.lr_decay;
    }
    Ok(result)
}

/// Runs ADAM from `v0` and from `cfg.restarts` uniformly perturbed copies
/// (±`restart_spread_mv`, seeded), keeping the best run. Restarts whose
/// starting point is undefined are skipped.
pub fn adam_with_restarts<E: std::fmt::Display>(
    cost: &(dyn Fn(&[f64]) -> Result<f64, E> + Sync),
    v0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<AdamResult, OptimizerError> {
    let mut best = adam_minimize(cost, v0, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.restarts {
        if best.converged {
            break;
        }
        let start: Vec<f64> = v0
            .iter()
            .map(|v| v + rng.gen_range(-cfg.restart_spread_mv..=cfg.restart_spread_mv))
            .collect();
        if let Ok(r) = adam_minimize(cost, &start, cfg) {
            if r.best_cost < best.best_cost {
                best = r;
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(wl: f64, wr: f64, bl: f64, br: f64, s: [f64; 6]) -> SpectralObservables {
        SpectralObservables {
            omega_left: wl,
            omega_right: wr,
            beta_left: bl,
            beta_right: br,
            detuning: wl - wr,
            zeta: 0.0,
            energies: vec![0.0; 6],
            entropies: s.to_vec(),
        }
    }

    #[test]
    fn cost_i_examples() {
        let t = ConfigITargets::default();
        assert_eq!(cost_config_i(&obs(11.0, 9.0, 1.0, -1.0, [0.0; 6]), &t), 0.0);
        let c = cost_config_i(&obs(11.1, 9.0, 1.0, -1.0, [0.0; 6]), &t);
        assert!((c - 0.01).abs() < 1e-12);
        assert!(cost_config_i(&obs(9.0, 10.0, 1.0, -1.0, [0.0; 6]), &t) > 0.0);
    }

    #[test]
    fn cost_iii_examples() {
        let t = ConfigIIITargets::default();
        let met = obs(9.0, 10.0, 1.0, -1.0, [0.0, 0.0, 0.0, 1.5, 1.0, 1.5]);
        assert!(cost_config_iii(&met, &t).abs() < 1e-15);
        let sep = obs(9.0, 10.0, 1.0, -1.0, [0.0; 6]);
        assert!((cost_config_iii(&sep, &t) - 5.5).abs() < 1e-12);
        let cfg_i = obs(11.0, 9.0, 1.0, -1.0, [0.0, 0.0, 0.0, 1.5, 1.0, 1.5]);
        assert!((cost_config_iii(&cfg_i, &t) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn parametrize_is_affine() {
        let a = [1.0, -2.0, 3.5];
        let b = [2.0, 0.0, -1.5];
        assert_eq!(parametrize(&a, &b, 0.0), a.to_vec());
        assert_eq!(parametrize(&a, &b, 1.0), b.to_vec());
        assert_eq!(parametrize(&a, &b, 0.5), vec![1.5, -1.0, 1.0]);
        assert_eq!(parametrize(&a, &a, 0.37), a.to_vec());
    }

    #[test]
    fn voltage_bounds() {
        assert!(VoltageVector::new(vec![0.0, 999.0], "x").is_ok());
        assert!(VoltageVector::new(vec![0.0, 1001.0], "x").is_err());
        assert!(VoltageVector::new(vec![f64::NAN], "x").is_err());
    }

    fn quad(c: &[f64]) -> impl Fn(&[f64]) -> Result<f64, String> + Sync + '_ {
        move |v: &[f64]| Ok(v.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum())
    }

    #[test]
    fn gradient_of_quadratic() {
        let c = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0, 2.0];
        let f = quad(&c);
        let v = [0.3; 7];
        let g = fd_gradient(&f, &v, f(&v).unwrap(), 0.01).unwrap();
        for i in 0..7 {
            assert!((g.g[i] - 2.0 * (v[i] - c[i])).abs() < 1e-6);
        }
        assert!(!g.one_sided);
        let at_min = fd_gradient(&f, &c, 0.0, 0.01).unwrap();
        assert!(at_min.g.iter().all(|x| x.abs() < 1e-9));
        let f3 = |v: &[f64]| f(v).map(|x| 3.0 * x);
        let g3 = fd_gradient(&f3, &v, 3.0 * f(&v).unwrap(), 0.01).unwrap();
        for i in 0..7 {
            assert!((g3.g[i] - 3.0 * g.g[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_falls_back_to_one_sided() {
        let f = |v: &[f64]| {
            if v[0] > 1.0 {
                Err("wall".to_string())
            } else {
                Ok(v[0] * v[0])
            }
        };
        let g = fd_gradient(&f, &[1.0], 1.0, 1e-3).unwrap();
        assert!(g.one_sided);
        assert!((g.g[0] - 2.0).abs() < 2e-3);
        let never = |_: &[f64]| Err::<f64, _>("no".to_string());
        assert!(fd_gradient(&never, &[1.0], 1.0, 1e-3).is_err());
    }

    #[test]
    fn adam_on_quadratic() {
        let c = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0, 2.0];
        let f = quad(&c);
        let cfg = OptimizerConfig {
            learning_rate_mv: 0.05,
            lr_decay: 0.999,
            max_iters: 20_000,
            cost_tol: 1e-14,
            fd_step_mv: 1e-3,
            ..Default::default()
        };
        let r = adam_minimize(&f, &[0.0; 7], &cfg).unwrap();
        for (x, c) in r.best.iter().zip(&c) {
            assert!((x - c).abs() < 1e-6);
        }
        assert!(r.history.iter().all(|h| h.cost >= r.best_cost));
    }

    #[test]
    fn adam_returns_start_when_converged() {
        let c = [1.0, 2.0];
        let f = quad(&c);
        let r = adam_minimize(&f, &c, &OptimizerConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.best, c.to_vec());
        assert_eq!(r.history.len(), 1);
    }

    #[test]
    fn adam_rejects_bad_start_and_config() {
        let f = |_: &[f64]| Err::<f64, _>("bad".to_string());
        assert!(matches!(
            adam_minimize(&f, &[0.0], &OptimizerConfig::default()),
            Err(OptimizerError::InvalidStart(_))
        ));
        let g = quad(&[0.0]);
        let cfg = OptimizerConfig {
            learning_rate_mv: 0.0,
            ..Default::default()
        };
        assert!(adam_minimize(&g, &[1.0], &cfg).is_err());
    }

    #[test]
    fn restarts_never_worse() {
        let c = [5.0, -5.0];
        let f = quad(&c);
        let cfg = OptimizerConfig {
            max_iters: 50,
            restarts: 3,
            ..Default::default()
        };
        let single = adam_minimize(
            &f,
            &[0.0, 0.0],
            &OptimizerConfig {
                restarts: 0,
                ..cfg.clone()
            },
        )
        .unwrap();
        let multi = adam_with_restarts(&f, &[0.0, 0.0], &cfg).unwrap();
        assert!(multi.best_cost <= single.best_cost);
    }
}
