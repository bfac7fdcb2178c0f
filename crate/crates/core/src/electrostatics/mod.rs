//! Electrode-to-channel coupling constants and the one-dimensional
//! confinement potential built from them.
//!
//! The channel cross-section is solved as a 2D Dirichlet problem. Each
//! electrode (and, separately, the grounded metal) is raised to unit
//! potential with everything else at zero; the solution sampled along the
//! helium surface is the coupling constant α_i(x).

mod laplace;
mod profile;

pub use laplace::SolveReport;
pub use profile::{find_barrier, interpolate_potential, Barrier, PotentialProfile};

use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::units::UnitSystem;
use laplace::{Multigrid, NodeGrid};

#[derive(Debug, Error)]
pub enum ElectrostaticsError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("laplace solve for {problem} did not converge (residual {residual:.3e})")]
    NonConvergence { problem: String, residual: f64 },
    #[error("not a double well: {minima} interior minima, {maxima} maxima between the outer pair")]
    NotDoubleWell { minima: usize, maxima: usize },
    #[error("voltage vector has {got} entries, table has {expected} electrodes")]
    VoltageLength { expected: usize, got: usize },
    #[error("invalid potential profile: {0}")]
    InvalidProfile(String),
    #[error("position {x} outside the profile range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("malformed coupling table: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Cross-section of the helium channel and its surroundings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceGeometry {
    pub channel_width_um: f64,
    pub channel_depth_um: f64,
    pub electrode_width_nm: f64,
    pub electrode_gap_nm: f64,
    pub n_electrodes: usize,
    pub grid_spacing_nm: f64,
    /// Lateral extent of the top ground plane beyond each channel wall.
    pub ground_extent_um: f64,
    /// Height of the vacuum box above the channel opening.
    pub vacuum_height_um: f64,
}

impl Default for DeviceGeometry {
    fn default() -> Self {
        Self {
            channel_width_um: 3.0,
            channel_depth_um: 0.5,
            electrode_width_nm: 200.0,
            electrode_gap_nm: 200.0,
            n_electrodes: 7,
            grid_spacing_nm: 5.0,
            ground_extent_um: 1.0,
            vacuum_height_um: 1.5,
        }
    }
}

impl DeviceGeometry {
    pub fn validate(&self) -> Result<(), ElectrostaticsError> {
        let bad = |m: String| Err(ElectrostaticsError::InvalidGeometry(m));
        let lengths = [
            ("channel_width_um", self.channel_width_um),
            ("channel_depth_um", self.channel_depth_um),
            ("electrode_width_nm", self.electrode_width_nm),
            ("grid_spacing_nm", self.grid_spacing_nm),
            ("ground_extent_um", self.ground_extent_um),
            ("vacuum_height_um", self.vacuum_height_um),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.electrode_gap_nm.is_finite() && self.electrode_gap_nm >= 0.0) {
            return bad(format!(
                "electrode_gap_nm must be non-negative, got {}",
                self.electrode_gap_nm
            ));
        }
        if self.n_electrodes == 0 {
            return bad("n_electrodes must be at least 1".into());
        }
        let span = self.array_span_nm();
        let width = self.channel_width_um * 1e3;
        if span > width + 1e-9 {
            return bad(format!("electrode array ({span} nm) wider than channel ({width} nm)"));
        }
        let h = self.grid_spacing_nm;
        if self.electrode_width_nm < 2.0 * h {
            return bad(format!(
                "grid spacing {h} nm does not resolve {} nm electrodes",
                self.electrode_width_nm
            ));
        }
        for (name, v) in [
            ("channel_width_um", width / 2.0),
            ("channel_depth_um", self.channel_depth_um * 1e3),
            ("ground_extent_um", self.ground_extent_um * 1e3),
            ("vacuum_height_um", self.vacuum_height_um * 1e3),
        ] {
            if v < 2.0 * h {
                return bad(format!("{name} spans fewer than two grid cells"));
            }
        }
        Ok(())
    }

    pub fn array_span_nm(&self) -> f64 {
        let n = self.n_electrodes as f64;
        n * self.electrode_width_nm + (n - 1.0) * self.electrode_gap_nm
    }

    /// Electrode centres in nm, channel centre at zero.
    pub fn electrode_centers_nm(&self) -> Vec<f64> {
        let pitch = self.electrode_width_nm + self.electrode_gap_nm;
        let mid = (self.n_electrodes as f64 - 1.0) / 2.0;
        (0..self.n_electrodes).map(|e| (e as f64 - mid) * pitch).collect()
    }

    /// Hex SHA-256 of the geometry together with the length unit.
    pub fn hash(&self, x0_nm: f64) -> String {
        let key = serde_json::json!({ "geometry": self, "x0_nm": x0_nm });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaplaceSettings {
    /// Target for max |4u - Σ neighbours| at free nodes.
    pub tolerance: f64,
    pub max_cycles: usize,
}

impl Default for LaplaceSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-13,
            max_cycles: 200,
        }
    }
}

/// Dirichlet data for one solve: a potential per electrode plus the ground.
#[derive(Clone, Debug)]
pub struct BoundaryValues {
    pub electrodes: Vec<f64>,
    pub ground: f64,
}

/// Node potentials of one cross-section solve.
#[derive(Clone, Debug)]
pub struct FieldSolution {
    pub nx: usize,
    pub nz: usize,
    pub spacing_nm: f64,
    /// x coordinate of column 0 in nm.
    pub x_origin_nm: f64,
    /// Row index of the helium surface.
    pub surface_row: usize,
    /// Column indices of the two channel walls.
    pub wall_cols: (usize, usize),
    pub u: Vec<f64>,
    pub report: SolveReport,
}

impl FieldSolution {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.u[j * self.nx + i]
    }

    /// (x in nm, potential) along the helium surface between the walls.
    pub fn surface_cut(&self) -> Vec<(f64, f64)> {
        (self.wall_cols.0..=self.wall_cols.1)
            .map(|i| {
                (
                    self.x_origin_nm + i as f64 * self.spacing_nm,
                    self.at(i, self.surface_row),
                )
            })
            .collect()
    }
}

struct Discretization {
    nx: usize,
    nz: usize,
    h: f64,
    x0: f64,
    wall_l: usize,
    wall_r: usize,
    surface: usize,
}

impl Discretization {
    fn new(g: &DeviceGeometry) -> Self {
        let h = g.grid_spacing_nm;
        let half_w = g.channel_width_um * 1e3 / 2.0;
        let half_box = half_w + g.ground_extent_um * 1e3;
        let cells_x = (2.0 * half_box / h).round() as usize;
        let wall_l = ((half_box - half_w) / h).round() as usize;
        let wall_r = cells_x - wall_l;
        let surface = (g.channel_depth_um * 1e3 / h).round() as usize;
        let cells_z = ((g.channel_depth_um + g.vacuum_height_um) * 1e3 / h).round() as usize;
        Self {
            nx: cells_x + 1,
            nz: cells_z + 1,
            h,
            x0: -(cells_x as f64) * h / 2.0,
            wall_l,
            wall_r,
            surface,
        }
    }

    fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.h
    }

    /// Whether a node belongs to the grounded metal (outer box, top plane,
    /// channel walls, bottom outside the channel).
    fn is_ground(&self, i: usize, j: usize) -> bool {
        i == 0 || i == self.nx - 1 || j == self.nz - 1 || (j <= self.surface && (i <= self.wall_l || i >= self.wall_r))
    }

    fn is_fixed(&self, i: usize, j: usize) -> bool {
        j == 0 || self.is_ground(i, j)
    }
}

/// Piecewise-linear potential along the channel bottom. Electrode faces
/// are flat; gaps interpolate between their neighbours and the end strips
/// interpolate to the grounded wall.
struct BottomProfile {
    knots: Vec<(f64, Option<usize>)>,
}

impl BottomProfile {
    fn new(g: &DeviceGeometry) -> Self {
        let half_w = g.channel_width_um * 1e3 / 2.0;
        let hw = g.electrode_width_nm / 2.0;
        let mut knots = vec![(-half_w, None)];
        for (e, c) in g.electrode_centers_nm().into_iter().enumerate() {
            knots.push((c - hw, Some(e)));
            knots.push((c + hw, Some(e)));
        }
        knots.push((half_w, None));
        Self { knots }
    }

    fn value(&self, x: f64, bv: &BoundaryValues) -> f64 {
        let val = |o: Option<usize>| o.map_or(bv.ground, |e| bv.electrodes[e]);
        let k = &self.knots;
        if x <= k[0].0 {
            return val(k[0].1);
        }
        for w in k.windows(2) {
            let ((xa, oa), (xb, ob)) = (w[0], w[1]);
            if x <= xb {
                let (va, vb) = (val(oa), val(ob));
                if xb - xa <= 0.0 {
                    return vb;
                }
                let t = (x - xa) / (xb - xa);
                return va + t * (vb - va);
            }
        }
        val(k[k.len() - 1].1)
    }
}

/// Solves the cross-section for the given Dirichlet data.
pub fn solve_boundary_problem(
    geometry: &DeviceGeometry,
    bv: &BoundaryValues,
    settings: &LaplaceSettings,
) -> Result<FieldSolution, ElectrostaticsError> {
    geometry.validate()?;
    if bv.electrodes.len() != geometry.n_electrodes {
        return Err(ElectrostaticsError::InvalidGeometry(format!(
            "{} electrode potentials for {} electrodes",
            bv.electrodes.len(),
            geometry.n_electrodes
        )));
    }
    let d = Discretization::new(geometry);
    let bottom = BottomProfile::new(geometry);
    let mut fixed = vec![false; d.nx * d.nz];
    let mut u = vec![0.0; d.nx * d.nz];
    for j in 0..d.nz {
        for i in 0..d.nx {
            let k = j * d.nx + i;
            if d.is_ground(i, j) {
                fixed[k] = true;
                u[k] = bv.ground;
            } else if d.is_fixed(i, j) {
                fixed[k] = true;
                u[k] = bottom.value(d.x(i), bv);
            }
        }
    }
    let mut mg = Multigrid::new(NodeGrid {
        nx: d.nx,
        nz: d.nz,
        fixed,
    });
    let report = mg.solve(&mut u, settings.tolerance, settings.max_cycles);
    Ok(FieldSolution {
        nx: d.nx,
        nz: d.nz,
        spacing_nm: d.h,
        x_origin_nm: d.x0,
        surface_row: d.surface,
        wall_cols: (d.wall_l, d.wall_r),
        u,
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub geometry_hash: String,
    pub x0_nm: f64,
    pub grid_spacing_nm: f64,
    /// Worst converged stencil residual over all solves.
    pub solve_residual: f64,
    /// Electrode centres in units of x0.
    pub electrode_centers: Vec<f64>,
    /// Electrode width in units of x0.
    pub electrode_width: f64,
}

/// Coupling constants sampled along the helium surface.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingTable {
    /// Positions in units of x0, uniform and increasing.
    pub x: Vec<f64>,
    /// `alpha[e][s]` for electrode e at sample s.
    pub alpha: Vec<Vec<f64>>,
    pub alpha_ground: Vec<f64>,
    pub meta: TableMeta,
}

impl CouplingTable {
    pub fn n_electrodes(&self) -> usize {
        self.alpha.len()
    }

    /// max_s |Σ_e α_e + α_ground - 1|.
    pub fn partition_error(&self) -> f64 {
        (0..self.x.len())
            .map(|s| {
                let sum: f64 = self.alpha.iter().map(|a| a[s]).sum::<f64>() + self.alpha_ground[s];
                (sum - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ElectrostaticsError> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "# config_hash={}", self.meta.geometry_hash)?;
        let mut header = vec!["x".to_string()];
        header.extend((1..=self.n_electrodes()).map(|e| format!("alpha_{e}")));
        header.push("alpha_ground".into());
        writeln!(out, "{}", header.join(","))?;
        for s in 0..self.x.len() {
            let mut row = vec![format!("{:.14e}", self.x[s])];
            row.extend(self.alpha.iter().map(|a| format!("{:.14e}", a[s])));
            row.push(format!("{:.14e}", self.alpha_ground[s]));
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        let sidecar =
            serde_json::to_string_pretty(&self.meta).map_err(|e| ElectrostaticsError::Parse(e.to_string()))?;
        fs::write(sidecar_path(path), sidecar)?;
        Ok(())
    }

    /// Reads a table written by [`CouplingTable::write_csv`]. The JSON
    /// sidecar is optional; without it the metadata is mostly empty.
    pub fn read_csv(path: &Path) -> Result<Self, ElectrostaticsError> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut header: Option<Vec<String>> = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            match &header {
                None => header = Some(fields.iter().map(|s| s.to_string()).collect()),
                Some(h) => {
                    if fields.len() != h.len() {
                        return Err(ElectrostaticsError::Parse(format!(
                            "line {}: {} fields, header has {}",
                            lineno + 1,
                            fields.len(),
                            h.len()
                        )));
                    }
                    let row = fields
                        .iter()
                        .map(|f| f.parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| ElectrostaticsError::Parse(format!("line {}: {e}", lineno + 1)))?;
                    rows.push(row);
                }
            }
        }
        let header = header.ok_or_else(|| ElectrostaticsError::Parse("missing header".into()))?;
        let n = header.len();
        if n < 3 || header[0] != "x" || header[n - 1] != "alpha_ground" {
            return Err(ElectrostaticsError::Parse(format!(
                "expected header x,alpha_1..alpha_n,alpha_ground, got {}",
                header.join(",")
            )));
        }
        for (e, name) in header[1..n - 1].iter().enumerate() {
            if *name != format!("alpha_{}", e + 1) {
                return Err(ElectrostaticsError::Parse(format!("unexpected column {name}")));
            }
        }
        let col = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<f64>>();
        let x = col(0);
        let alpha = (1..n - 1).map(col).collect();
        let alpha_ground = col(n - 1);
        let sidecar = sidecar_path(path);
        let meta = if sidecar.exists() {
            serde_json::from_str(&fs::read_to_string(&sidecar)?)
                .map_err(|e| ElectrostaticsError::Parse(format!("{}: {e}", sidecar.display())))?
        } else {
            TableMeta {
                geometry_hash: String::new(),
                x0_nm: f64::NAN,
                grid_spacing_nm: f64::NAN,
                solve_residual: f64::NAN,
                electrode_centers: Vec::new(),
                electrode_width: f64::NAN,
            }
        };
        Ok(Self {
            x,
            alpha,
            alpha_ground,
            meta,
        })
    }
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Solves one unit problem per electrode plus the ground problem.
pub fn compute_coupling_table(
    geometry: &DeviceGeometry,
    units: &UnitSystem,
    settings: &LaplaceSettings,
) -> Result<CouplingTable, ElectrostaticsError> {
    geometry.validate()?;
    let n = geometry.n_electrodes;
    let problems: Vec<usize> = (0..=n).collect();
    let solutions: Vec<(usize, FieldSolution)> = problems
        .par_iter()
        .map(|&p| {
            let bv = BoundaryValues {
                electrodes: (0..n).map(|e| if e == p { 1.0 } else { 0.0 }).collect(),
                ground: if p == n { 1.0 } else { 0.0 },
            };
            solve_boundary_problem(geometry, &bv, settings).map(|s| (p, s))
        })
        .collect::<Result<_, _>>()?;
    let mut residual = 0.0f64;
    let mut alpha = vec![Vec::new(); n];
    let mut alpha_ground = Vec::new();
    let mut x = Vec::new();
    for (p, sol) in solutions {
        if !sol.report.converged {
            let problem = if p == n {
                "ground".to_string()
            } else {
                format!("electrode {}", p + 1)
            };
            return Err(ElectrostaticsError::NonConvergence {
                problem,
                residual: sol.report.residual,
            });
        }
        residual = residual.max(sol.report.residual);
        let cut = sol.surface_cut();
        if x.is_empty() {
            x = cut.iter().map(|&(xn, _)| xn / units.x0_nm).collect();
        }
        let vals: Vec<f64> = cut.into_iter().map(|(_, v)| v).collect();
        if p == n {
            alpha_ground = vals;
        } else {
            alpha[p] = vals;
        }
    }
    Ok(CouplingTable {
        x,
        alpha,
        alpha_ground,
        meta: TableMeta {
            geometry_hash: geometry.hash(units.x0_nm),
            x0_nm: units.x0_nm,
            grid_spacing_nm: geometry.grid_spacing_nm,
            solve_residual: residual,
            electrode_centers: geometry
                .electrode_centers_nm()
                .into_iter()
                .map(|c| c / units.x0_nm)
                .collect(),
            electrode_width: geometry.electrode_width_nm / units.x0_nm,
        },
    })
}

/// On-disk cache of coupling tables keyed by geometry hash.
#[derive(Clone, Debug)]
pub struct CouplingCache {
    dir: PathBuf,
}

impl CouplingCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("coupling_{hash}.csv"))
    }

    /// Cached table for this geometry and length unit, if present and
    /// readable.
    pub fn get(&self, geometry: &DeviceGeometry, units: &UnitSystem) -> Option<CouplingTable> {
        let hash = geometry.hash(units.x0_nm);
        CouplingTable::read_csv(&self.path_for(&hash))
            .ok()
            .filter(|t| t.meta.geometry_hash == hash)
    }

    /// Returns the cached table or computes and stores it.
    pub fn get_or_compute(
        &self,
        geometry: &DeviceGeometry,
        units: &UnitSystem,
        settings: &LaplaceSettings,
    ) -> Result<CouplingTable, ElectrostaticsError> {
        if let Some(t) = self.get(geometry, units) {
            return Ok(t);
        }
        let table = compute_coupling_table(geometry, units, settings)?;
        fs::create_dir_all(&self.dir)?;
        table.write_csv(&self.path_for(&geometry.hash(units.x0_nm)))?;
        Ok(table)
    }
}

/// v(x) = -(e/E_d) Σ_i α_i(x) V_i with V in mV.
pub fn assemble_potential(
    table: &CouplingTable,
    voltages_mv: &[f64],
    units: &UnitSystem,
) -> Result<PotentialProfile, ElectrostaticsError> {
    if voltages_mv.len() != table.n_electrodes() {
        return Err(ElectrostaticsError::VoltageLength {
            expected: table.n_electrodes(),
            got: voltages_mv.len(),
        });
    }
    let scale = units.mv_to_energy();
    let v = (0..table.x.len())
        .map(|s| {
            -scale
                * table
                    .alpha
                    .iter()
                    .zip(voltages_mv)
                    .map(|(a, &vm)| a[s] * vm)
                    .sum::<f64>()
        })
        .collect();
    PotentialProfile::new(table.x.clone(), v)
}
