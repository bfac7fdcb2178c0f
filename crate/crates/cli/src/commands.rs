//! The four subcommands.

use std::path::Path;
use std::sync::Arc;

use heliqsim_core::analysis::{dominant_product, particle_density, SpectralObservables};
use heliqsim_core::electrostatics::{
    compute_coupling_table, Barrier, CouplingCache, CouplingTable, ElectrostaticsError,
};
use heliqsim_core::optimizer::{
    adam_with_restarts, cost_config_i, cost_config_iii, effective_zeta_along, find_config_ii, sweep, Evaluation,
    IterRecord, OptimizerError, Pipeline, PipelineError, VoltageVector, CONFIG_I_SEED_MV, TRACKED_STATES,
};
use serde::Serialize;

use crate::config::{RunConfig, SweepGrid};
use crate::output::{ensure_dir, num, read_voltages, write_json, write_text, write_voltages, Csv};
use crate::CliError;

fn electrostatics_err(e: ElectrostaticsError) -> CliError {
    match e {
        ElectrostaticsError::InvalidGeometry(_) => CliError::Config(e.to_string()),
        other => CliError::Electrostatics(other.to_string()),
    }
}

fn pipeline_err(e: PipelineError) -> CliError {
    match e {
        PipelineError::Potential(m) => CliError::Config(m),
        other => CliError::InvalidWell(other.to_string()),
    }
}

/// Loads the coupling table from the cache or solves for it.
fn coupling_table(cfg: &RunConfig) -> Result<CouplingTable, CliError> {
    let units = cfg.units()?;
    let cache = CouplingCache::new(cfg.cache_dir());
    if let Some(t) = cache.get(&cfg.geometry, &units) {
        println!("cache hit: {}", cache.path_for(&t.meta.geometry_hash).display());
        return Ok(t);
    }
    println!("solving {} Laplace problems", cfg.geometry.n_electrodes + 1);
    cache
        .get_or_compute(&cfg.geometry, &units, &cfg.laplace)
        .map_err(electrostatics_err)
}

fn pipeline(cfg: &RunConfig) -> Result<Pipeline, CliError> {
    let table = coupling_table(cfg)?;
    Ok(Pipeline::new(Arc::new(table), cfg.units()?, cfg.pipeline.clone()))
}

fn check_voltages(p: &Pipeline, v: &[f64], label: &str) -> Result<(), CliError> {
    if v.len() != p.n_electrodes() {
        return Err(CliError::Config(format!(
            "{label}: {} voltages for {} electrodes",
            v.len(),
            p.n_electrodes()
        )));
    }
    VoltageVector::new(v.to_vec(), label).map_err(|e| CliError::Config(format!("{label}: {e}")))?;
    Ok(())
}

pub fn solve_laplace(cfg: &RunConfig, hash: &str) -> Result<(), CliError> {
    let units = cfg.units()?;
    ensure_dir(&cfg.output_dir)?;
    let cache = CouplingCache::new(cfg.cache_dir());
    let table = match cache.get(&cfg.geometry, &units) {
        Some(t) => {
            println!("cache hit: {}", cache.path_for(&t.meta.geometry_hash).display());
            t
        }
        None => {
            let t = compute_coupling_table(&cfg.geometry, &units, &cfg.laplace).map_err(electrostatics_err)?;
            ensure_dir(&cfg.cache_dir())?;
            t.write_csv(&cache.path_for(&t.meta.geometry_hash))
                .map_err(electrostatics_err)?;
            t
        }
    };
    let out = cfg.output_dir.join("coupling.csv");
    table.write_csv(&out).map_err(electrostatics_err)?;
    println!("config hash: {hash}");
    println!("geometry hash: {}", table.meta.geometry_hash);
    println!("electrodes: {}, samples: {}", table.n_electrodes(), table.x.len());
    println!("grid spacing: {} nm", table.meta.grid_spacing_nm);
    println!("laplace residual: {:.3e}", table.meta.solve_residual);
    println!("partition-of-unity residual: {:.3e}", table.partition_error());
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct GridDoc {
    left_points: usize,
    right_points: usize,
    dx_x0: f64,
    left_range_x0: [f64; 2],
    right_range_x0: [f64; 2],
}

#[derive(Serialize)]
struct HartreeDoc {
    iterations: usize,
    /// Orbital energies relative to the lowest orbital of each well.
    eps_left_ghz: Vec<f64>,
    eps_right_ghz: Vec<f64>,
}

#[derive(Serialize)]
struct StateDoc {
    n: usize,
    energy_ghz: f64,
    entropy_bits: f64,
    dominant_product: [usize; 2],
    /// `coefficients[i][j]` multiplies |i j⟩.
    coefficients: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SpectrumDoc<'a> {
    config_hash: &'a str,
    voltages_mv: &'a [f64],
    barrier: Barrier,
    grid: GridDoc,
    hartree: HartreeDoc,
    observables: &'a SpectralObservables,
    states: Vec<StateDoc>,
}

fn spectrum_doc<'a>(
    hash: &'a str,
    v: &'a [f64],
    e: &'a Evaluation,
    cfg: &RunConfig,
) -> Result<SpectrumDoc<'a>, CliError> {
    let units = cfg.units()?;
    let rel = |eps: &[f64]| eps.iter().map(|x| units.energy_to_ghz(x - eps[0])).collect::<Vec<_>>();
    let sp = &e.spectrum;
    let states = (0..sp.len())
        .map(|n| {
            let c = &sp.coefficients[n];
            let (i, j) = dominant_product(sp, n);
            StateDoc {
                n,
                energy_ghz: e.observables.energies[n],
                entropy_bits: e.observables.entropies[n],
                dominant_product: [i, j],
                coefficients: (0..c.nrows()).map(|r| c.row(r).iter().copied().collect()).collect(),
            }
        })
        .collect();
    Ok(SpectrumDoc {
        config_hash: hash,
        voltages_mv: v,
        barrier: e.barrier,
        grid: GridDoc {
            left_points: e.left.len(),
            right_points: e.right.len(),
            dx_x0: e.left.dx,
            left_range_x0: [e.left.x[0], e.left.x[e.left.len() - 1]],
            right_range_x0: [e.right.x[0], e.right.x[e.right.len() - 1]],
        },
        hartree: HartreeDoc {
            iterations: e.hartree.iterations,
            eps_left_ghz: rel(&e.hartree.eps_left),
            eps_right_ghz: rel(&e.hartree.eps_right),
        },
        observables: &e.observables,
        states,
    })
}

fn orbital_csv(hash: &str, x: &[f64], dx: f64, b: &nalgebra::DMatrix<f64>) -> Csv {
    let mut header = vec!["x".to_string()];
    header.extend((0..b.ncols()).map(|k| format!("rho_{k}")));
    let mut csv = Csv::new(hash, &header);
    csv.comment("Hartree orbital densities |phi_k(x)|^2, x in units of x0");
    for (a, &xa) in x.iter().enumerate() {
        let mut row = vec![num(xa)];
        row.extend((0..b.ncols()).map(|k| num(b[(a, k)] * b[(a, k)] / dx)));
        csv.row(&row);
    }
    csv
}

pub fn spectrum(cfg: &RunConfig, hash: &str, voltages: &Path) -> Result<(), CliError> {
    let v = read_voltages(voltages)?;
    let p = pipeline(cfg)?;
    check_voltages(&p, &v, "voltages")?;
    let e = p.evaluate(&v).map_err(pipeline_err)?;
    ensure_dir(&cfg.output_dir)?;
    let dir = &cfg.output_dir;
    write_json(&dir.join("spectrum.json"), &spectrum_doc(hash, &v, &e, cfg)?)?;
    orbital_csv(hash, &e.left.x, e.left.dx, &e.hartree.b_left).write(&dir.join("orbitals_left.csv"))?;
    orbital_csv(hash, &e.right.x, e.right.dx, &e.hartree.b_right).write(&dir.join("orbitals_right.csv"))?;
    let n_states = TRACKED_STATES.min(e.spectrum.len());
    let densities = (0..n_states)
        .map(|n| particle_density(&e.spectrum.coefficients[n], &e.hartree, &e.left, &e.right))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|err| CliError::InvalidWell(err.to_string()))?;
    let mut header = vec!["x".to_string()];
    header.extend((0..n_states).map(|n| format!("rho_state_{n}")));
    let mut csv = Csv::new(hash, &header);
    csv.comment("one-particle densities of the two-body eigenstates, x in units of x0");
    for a in 0..densities[0].x.len() {
        let mut row = vec![num(densities[0].x[a])];
        row.extend(densities.iter().map(|d| num(d.rho[a])));
        csv.row(&row);
    }
    csv.write(&dir.join("density.csv"))?;
    let o = &e.observables;
    println!("omega_L {:.4} GHz  omega_R {:.4} GHz", o.omega_left, o.omega_right);
    println!(
        "beta_L {:.4} GHz  beta_R {:.4} GHz  zeta {:.4} GHz",
        o.beta_left, o.beta_right, o.zeta
    );
    for n in 0..n_states {
        let (i, j) = dominant_product(&e.spectrum, n);
        println!("E{n} {:>10.4} GHz  S {:.4}  ~|{i}{j}>", o.energies[n], o.entropies[n]);
    }
    println!("wrote {}", dir.join("spectrum.json").display());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Target {
    #[value(name = "I")]
    I,
    #[value(name = "III")]
    Iii,
}

impl Target {
    fn label(self) -> &'static str {
        match self {
            Target::I => "I",
            Target::Iii => "III",
        }
    }
}

#[derive(Serialize)]
struct LogHeader<'a> {
    config_hash: &'a str,
    target: &'a str,
    seed_mv: &'a [f64],
}

#[derive(Serialize)]
struct OptimizeSummary<'a> {
    config_hash: &'a str,
    target: &'a str,
    seed_mv: &'a [f64],
    voltages_mv: &'a [f64],
    best_cost: f64,
    cost_tol: f64,
    converged: bool,
    iterations: usize,
    failure: Option<&'a str>,
    observables: Option<&'a SpectralObservables>,
}

pub fn optimize(cfg: &RunConfig, hash: &str, target: Target, seed: Option<&Path>) -> Result<(), CliError> {
    let p = pipeline(cfg)?;
    let seed = match seed {
        Some(path) => read_voltages(path)?,
        None => match target {
            Target::I => CONFIG_I_SEED_MV.to_vec(),
            Target::Iii => {
                let path = cfg.output_dir.join("voltages_I.csv");
                if !path.exists() {
                    return Err(CliError::Config(format!(
                        "target III starts from the config-I optimum: run --target I first or pass --seed-voltages ({} not found)",
                        path.display()
                    )));
                }
                read_voltages(&path)?
            }
        },
    };
    check_voltages(&p, &seed, "seed voltages")?;
    let (ti, tiii) = (cfg.targets_i, cfg.targets_iii);
    let cost = |v: &[f64]| -> Result<f64, String> {
        VoltageVector::new(v.to_vec(), "candidate").map_err(|e| e.to_string())?;
        let e = p.evaluate(v).map_err(|e| e.to_string())?;
        Ok(match target {
            Target::I => cost_config_i(&e.observables, &ti),
            Target::Iii => cost_config_iii(&e.observables, &tiii),
        })
    };
    let result = adam_with_restarts(&cost, &seed, &cfg.optimizer).map_err(|e| match e {
        OptimizerError::InvalidStart(m) => CliError::InvalidWell(format!("seed voltages: {m}")),
        other => CliError::Config(other.to_string()),
    })?;
    let label = target.label();
    ensure_dir(&cfg.output_dir)?;
    let dir = &cfg.output_dir;
    write_voltages(&dir.join(format!("voltages_{label}.csv")), hash, label, &result.best)?;
    let mut log = serde_json::to_string(&LogHeader {
        config_hash: hash,
        target: label,
        seed_mv: &seed,
    })
    .expect("log header serializes");
    log.push('\n');
    for rec in &result.history {
        log.push_str(&serde_json::to_string::<IterRecord>(rec).expect("iteration record serializes"));
        log.push('\n');
    }
    write_text(&dir.join(format!("optimize_{label}.jsonl")), &log)?;
    let best_eval = p.evaluate(&result.best).ok();
    write_json(
        &dir.join(format!("optimize_{label}.json")),
        &OptimizeSummary {
            config_hash: hash,
            target: label,
            seed_mv: &seed,
            voltages_mv: &result.best,
            best_cost: result.best_cost,
            cost_tol: cfg.optimizer.cost_tol,
            converged: result.converged,
            iterations: result.history.len() - 1,
            failure: result.failure.as_deref(),
            observables: best_eval.as_ref().map(|e| &e.observables),
        },
    )?;
    println!(
        "target {label}: best cost {:.6e} after {} iterations",
        result.best_cost,
        result.history.len() - 1
    );
    if let Some(e) = &best_eval {
        let o = &e.observables;
        println!(
            "omega_L {:.4} omega_R {:.4} beta_L {:.4} beta_R {:.4} GHz",
            o.omega_left, o.omega_right, o.beta_left, o.beta_right
        );
        println!(
            "entropies {}",
            o.entropies
                .iter()
                .take(6)
                .map(|s| format!("{s:.3}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
    }
    println!(
        "voltages_mv {}",
        result
            .best
            .iter()
            .map(|x| format!("{x:.6}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    if result.converged {
        Ok(())
    } else {
        Err(CliError::Shortfall(format!(
            "cost {:.6e} above tolerance {:.1e}{}",
            result.best_cost,
            cfg.optimizer.cost_tol,
            result.failure.map(|f| format!(" ({f})")).unwrap_or_default()
        )))
    }
}

#[derive(Serialize)]
struct ConfigIIDoc<'a> {
    config_hash: &'a str,
    lambda_star: f64,
    g_ghz: f64,
    voltages_mv: &'a [f64],
    observables: &'a SpectralObservables,
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn sweep_cmd(cfg: &RunConfig, hash: &str, vi: &Path, viii: &Path, grid: SweepGrid) -> Result<(), CliError> {
    let v_i = read_voltages(vi)?;
    let v_iii = read_voltages(viii)?;
    let p = pipeline(cfg)?;
    check_voltages(&p, &v_i, "V_I")?;
    check_voltages(&p, &v_iii, "V_III")?;
    let lambdas = grid.values();
    let records = sweep(&p, &v_i, &v_iii, &lambdas);
    ensure_dir(&cfg.output_dir)?;
    let dir = &cfg.output_dir;
    let config_ii = find_config_ii(&p, &v_i, &v_iii, &records);
    let zeta_eff = match &config_ii {
        Ok(c) => {
            write_json(
                &dir.join("config_ii.json"),
                &ConfigIIDoc {
                    config_hash: hash,
                    lambda_star: c.lambda_star,
                    g_ghz: c.g_ghz,
                    voltages_mv: &c.voltages_mv,
                    observables: &c.observables,
                },
            )?;
            write_voltages(&dir.join("voltages_II.csv"), hash, "II", &c.voltages_mv)?;
            let mut table = Csv::new(hash, &["electrode".into(), "I".into(), "II".into(), "III".into()]);
            table.comment("electrode voltages (mV) of the three configurations");
            for k in 0..v_i.len() {
                table.row(&[
                    format!("V{}", k + 1),
                    format!("{:?}", v_i[k]),
                    format!("{:?}", c.voltages_mv[k]),
                    format!("{:?}", v_iii[k]),
                ]);
            }
            table.write(&dir.join("voltages_table.csv"))?;
            println!(
                "config II: lambda* {:.5}, g {:.5} GHz, S1 {:.4}, S2 {:.4}",
                c.lambda_star, c.g_ghz, c.observables.entropies[1], c.observables.entropies[2]
            );
            effective_zeta_along(&records, c.g_ghz)
        }
        Err(e) => {
            eprintln!("no avoided crossing located: {e}");
            vec![None; records.len()]
        }
    };
    let mut header = vec!["lambda".to_string()];
    header.extend((1..TRACKED_STATES).map(|n| format!("E{n}_ghz")));
    header.extend((0..TRACKED_STATES).map(|n| format!("S{n}")));
    for h in [
        "omega_left_ghz",
        "omega_right_ghz",
        "beta_left_ghz",
        "beta_right_ghz",
        "detuning_ghz",
        "zeta_ci_ghz",
        "zeta_eff_ghz",
        "min_overlap",
        "tracking",
        "error",
    ] {
        header.push(h.into());
    }
    let mut csv = Csv::new(hash, &header);
    csv.comment("energies relative to E0; tracking lists the energy index continuing each state of the first point");
    let mut failures = 0;
    for (r, z) in records.iter().zip(&zeta_eff) {
        let mut row = vec![format!("{:?}", r.lambda)];
        match &r.result {
            Ok(pt) => {
                let o = &pt.observables;
                row.extend((1..TRACKED_STATES).map(|n| num(o.energies[n])));
                row.extend((0..TRACKED_STATES).map(|n| num(o.entropies[n])));
                row.extend(
                    [
                        o.omega_left,
                        o.omega_right,
                        o.beta_left,
                        o.beta_right,
                        o.detuning,
                        o.zeta,
                    ]
                    .map(num),
                );
                row.push(z.map(|z| num(z.zeta)).unwrap_or_default());
                row.push(num(pt.min_overlap));
                row.push(pt.tracking.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" "));
                row.push(String::new());
            }
            Err(msg) => {
                failures += 1;
                row.extend(std::iter::repeat_n(String::new(), header.len() - 2));
                row.push(csv_quote(msg));
            }
        }
        csv.row(&row);
    }
    csv.write(&dir.join("sweep.csv"))?;
    println!(
        "sweep: {} points, {} failed; wrote {}",
        records.len(),
        failures,
        dir.join("sweep.csv").display()
    );
    Ok(())
}
