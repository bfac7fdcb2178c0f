//! Evaluation along V(λ) with eigenstate tracking, and location of the
//! avoided crossing between the first two excited states.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::parametrize;
use super::pipeline::{Evaluation, Pipeline, PipelineError};
use crate::analysis::{extract_gap_coupling, SpectralObservables};
use crate::ci::TwoBodySpectrum;
use crate::effective::{effective_zeta, ZetaEstimate};

/// Number of low eigenstates followed across the sweep.
pub const TRACKED_STATES: usize = 6;
const MIN_OVERLAP: f64 = 0.5;
const MAX_REFINE_DEPTH: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub observables: SpectralObservables,
    /// `tracking[m]` is the energy index of the state continuing the m-th
    /// state of the first valid point.
    pub tracking: Vec<usize>,
    /// Smallest |overlap| used to link this point to the previous one.
    pub min_overlap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub lambda: f64,
    pub voltages_mv: Vec<f64>,
    pub result: Result<SweepPoint, String>,
}

impl SweepRecord {
    pub fn point(&self) -> Option<&SweepPoint> {
        self.result.as_ref().ok()
    }
}

/// Greedy maximum-overlap matching of `prev` states onto `cur` states.
/// Returns (assignment, smallest matched |overlap|).
fn match_states(prev: &TwoBodySpectrum, prev_ids: &[usize], cur: &TwoBodySpectrum) -> (Vec<usize>, f64) {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (m, &p) in prev_ids.iter().enumerate() {
        for n in 0..cur.len() {
            pairs.push((prev.overlap(p, cur, n).abs(), m, n));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut assign = vec![usize::MAX; prev_ids.len()];
    let mut used = vec![false; cur.len()];
    let mut worst = f64::INFINITY;
    for (o, m, n) in pairs {
        if assign[m] == usize::MAX && !used[n] {
            assign[m] = n;
            used[n] = true;
            worst = worst.min(o);
        }
    }
    (assign, worst)
}

/// Links `cur` to `prev`, inserting intermediate evaluations while the
/// overlap stays below 0.5. Intermediate points are not reported.
fn link(
    pipeline: &Pipeline,
    v_i: &[f64],
    v_iii: &[f64],
    (l0, prev, ids): (f64, &TwoBodySpectrum, &[usize]),
    (l1, cur): (f64, &TwoBodySpectrum),
    depth: usize,
) -> (Vec<usize>, f64) {
    let (assign, worst) = match_states(prev, ids, cur);
    if worst >= MIN_OVERLAP || depth >= MAX_REFINE_DEPTH {
        return (assign, worst);
    }
    let lm = 0.5 * (l0 + l1);
    match pipeline.evaluate(&parametrize(v_i, v_iii, lm)) {
        Ok(mid) => {
            let (mid_ids, w1) = link(pipeline, v_i, v_iii, (l0, prev, ids), (lm, &mid.spectrum), depth + 1);
            let (out, w2) = link(
                pipeline,
                v_i,
                v_iii,
                (lm, &mid.spectrum, &mid_ids),
                (l1, cur),
                depth + 1,
            );
            (out, w1.min(w2))
        }
        Err(_) => (assign, worst),
    }
}

type Sample = (f64, Vec<f64>, Result<std::sync::Arc<Evaluation>, PipelineError>);

/// Evaluates V(λ) on every grid value; failures are recorded per point.
pub fn sweep(pipeline: &Pipeline, v_i: &[f64], v_iii: &[f64], lambdas: &[f64]) -> Vec<SweepRecord> {
    let mut order: Vec<f64> = lambdas.to_vec();
    order.sort_by(f64::total_cmp);
    let evals: Vec<Sample> = order
        .par_iter()
        .map(|&l| {
            let v = parametrize(v_i, v_iii, l);
            let e = pipeline.evaluate(&v);
            (l, v, e)
        })
        .collect();
    let mut records = Vec::with_capacity(evals.len());
    let mut prev: Option<(f64, std::sync::Arc<Evaluation>, Vec<usize>)> = None;
    for (lambda, voltages_mv, e) in evals {
        let result = match e {
            Ok(ev) => {
                let (tracking, min_overlap) = match &prev {
                    None => ((0..TRACKED_STATES.min(ev.spectrum.len())).collect(), 1.0),
                    Some((l0, p, ids)) => {
                        link(pipeline, v_i, v_iii, (*l0, &p.spectrum, ids), (lambda, &ev.spectrum), 0)
                    }
                };
                prev = Some((lambda, ev.clone(), tracking.clone()));
                Ok(SweepPoint {
                    observables: ev.observables.clone(),
                    tracking,
                    min_overlap,
                })
            }
            Err(err) => Err(err.to_string()),
        };
        records.push(SweepRecord {
            lambda,
            voltages_mv,
            result,
        });
    }
    records
}

#[derive(Clone, Debug)]
pub struct ConfigII {
    pub lambda_star: f64,
    /// Half the minimum E2 − E1 gap (GHz).
    pub g_ghz: f64,
    pub voltages_mv: Vec<f64>,
    pub observables: SpectralObservables,
}

/// Finds the E2 − E1 minimum on the I → III segment (0 ≤ λ ≤ 1) of a sweep
/// and re-evaluates the pipeline at the parabolic estimate of its position.
/// Crossings reached only by extrapolating past either configuration are
/// not config II.
pub fn find_config_ii(
    pipeline: &Pipeline,
    v_i: &[f64],
    v_iii: &[f64],
    records: &[SweepRecord],
) -> Result<ConfigII, PipelineError> {
    let gaps: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| (0.0..=1.0).contains(&r.lambda))
        .filter_map(|r| {
            r.point()
                .map(|p| (r.lambda, p.observables.energies[2] - p.observables.energies[1]))
        })
        .collect();
    let gc = extract_gap_coupling(&gaps).map_err(|e| PipelineError::Analysis(e.to_string()))?;
    let voltages_mv = parametrize(v_i, v_iii, gc.lambda_star);
    let ev = pipeline.evaluate(&voltages_mv)?;
    Ok(ConfigII {
        lambda_star: gc.lambda_star,
        g_ghz: gc.g,
        voltages_mv,
        observables: ev.observables.clone(),
    })
}

/// Effective-model ζ at every valid sweep point, using the frequencies and
/// anharmonicities of that point and a fixed coupling `g_ghz`.
pub fn effective_zeta_along(records: &[SweepRecord], g_ghz: f64) -> Vec<Option<ZetaEstimate>> {
    records
        .iter()
        .map(|r| {
            r.point().and_then(|p| {
                let o = &p.observables;
                effective_zeta(g_ghz, o.detuning, o.beta_left, o.beta_right).ok()
            })
        })
        .collect()
}
