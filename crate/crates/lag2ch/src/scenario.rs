//! Scenario files, simulation driving and CSV/JSON artifact output.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "grid": { "n": 600, "dxi": 0.05, "xi0": -15.0 },
//!   "scenario": { "type": "peakon_pair", "p": 1.0, "x1": -2.5, "x2": 2.5,
//!                 "rho_const": 0.0 },
//!   "sim": { "dt": 1e-3, "t_end": 2.0, "mode": "resolve",
//!            "output_every": 100 },
//!   "outputs": { "dir": "out", "which": ["diag", "char", "field", "atoms"] }
//! }
//! ```
//!
//! Scenario types: `peakon_pair`, `smooth` (Gaussian velocity, optional
//! Gaussian density bump) and `eulerian_tables` (sampled `u`/`rho` plus
//! optional energy atoms). Unknown keys are rejected. All floating output is
//! printed with 17 significant digits so files round-trip bit-exactly.

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{LagrangianState, SystemState};
use crate::eulerian::{characteristics_export, e_distance, interpolants, push_to_eulerian};
use crate::greens::build_kernels;
use crate::grid::{Ghost, Grid, GridFunction};
use crate::initdata::{
    lagrangian_from_eulerian, peakon_pair, smooth_init, AtomicMeasure, EulerianInit, Profile,
};
use crate::timeint::{simulate, Mode, SimConfig, SimOutcome, Trajectory};
use crate::{Error, Result, MAX_KERNEL_N};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub grid: GridCfg,
    pub scenario: ScenarioCfg,
    pub sim: SimCfg,
    pub outputs: OutputsCfg,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    pub n: usize,
    pub dxi: f64,
    pub xi0: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum ScenarioCfg {
    #[serde(rename = "peakon_pair")]
    PeakonPair {
        p: f64,
        x1: f64,
        x2: f64,
        rho_const: f64,
    },
    #[serde(rename = "smooth")]
    Smooth {
        u_amp: f64,
        u_center: f64,
        u_width: f64,
        rho_inf: f64,
        #[serde(default)]
        rho_bump: Option<BumpCfg>,
    },
    #[serde(rename = "eulerian_tables")]
    EulerianTables {
        x: Vec<f64>,
        u: Vec<f64>,
        #[serde(default)]
        rho: Option<Vec<f64>>,
        rho_inf: f64,
        #[serde(default)]
        atoms: Vec<AtomCfg>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpCfg {
    pub amp: f64,
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomCfg {
    pub x: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimCfg {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub mode: Option<String>,
    pub output_every: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsCfg {
    pub dir: String,
    pub which: Vec<String>,
}

pub fn load_scenario(path: &Path) -> Result<ScenarioFile> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "scenario not found: {}",
            path.display()
        )));
    }
    let text = fs::read_to_string(path)?;
    let cfg: ScenarioFile = serde_json::from_str(&text)?;
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ScenarioFile) -> Result<()> {
    let g = &cfg.grid;
    Grid::new(g.n, g.dxi, g.xi0)?;
    if g.n > MAX_KERNEL_N {
        return Err(Error::Config(format!(
            "grid.n = {} exceeds the kernel cap {MAX_KERNEL_N}",
            g.n
        )));
    }
    if let Some(mode) = &cfg.sim.mode {
        parse_mode(mode)?;
    }
    if !(cfg.sim.dt > 0.0) {
        return Err(Error::Config(format!(
            "sim.dt = {}, need dt > 0",
            cfg.sim.dt
        )));
    }
    if !(cfg.sim.t_end >= 0.0) {
        return Err(Error::Config(format!(
            "sim.t_end = {}, need t_end >= 0",
            cfg.sim.t_end
        )));
    }
    if cfg.sim.output_every == 0 {
        return Err(Error::Config("sim.output_every must be >= 1".into()));
    }
    for w in &cfg.outputs.which {
        if !matches!(w.as_str(), "diag" | "char" | "field" | "atoms") {
            return Err(Error::Config(format!(
                "outputs.which contains unknown artifact {w:?} \
                 (expected diag, char, field, atoms)"
            )));
        }
    }
    Ok(())
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "resolve" => Ok(Mode::Resolve),
        "propagate" => Ok(Mode::Propagate),
        other => Err(Error::Config(format!(
            "sim.mode = {other:?}, expected \"resolve\" or \"propagate\""
        ))),
    }
}

/// Build the initial Lagrangian state for a scenario.
pub fn build_initial_state(cfg: &ScenarioFile) -> Result<(Grid, LagrangianState)> {
    let grid = Grid::new(cfg.grid.n, cfg.grid.dxi, cfg.grid.xi0)?;
    let state = match &cfg.scenario {
        ScenarioCfg::PeakonPair {
            p,
            x1,
            x2,
            rho_const,
        } => peakon_pair(*p, *x1, *x2, *rho_const, &grid)?,
        ScenarioCfg::Smooth {
            u_amp,
            u_center,
            u_width,
            rho_inf,
            rho_bump,
        } => {
            let u0 = Profile::Gaussian {
                amp: *u_amp,
                center: *u_center,
                width: *u_width,
            };
            let rbar0 = match rho_bump {
                Some(b) => Profile::Gaussian {
                    amp: b.amp,
                    center: b.center,
                    width: b.width,
                },
                None => Profile::Zero,
            };
            smooth_init(&u0, &rbar0, *rho_inf, &grid)?
        }
        ScenarioCfg::EulerianTables {
            x,
            u,
            rho,
            rho_inf,
            atoms,
        } => {
            if x.len() != u.len() {
                return Err(Error::Config(format!(
                    "scenario.x has {} entries, scenario.u has {}",
                    x.len(),
                    u.len()
                )));
            }
            let u0 = Profile::Table {
                x: x.clone(),
                v: u.clone(),
            };
            let rbar0 = match rho {
                Some(r) => {
                    if r.len() != x.len() {
                        return Err(Error::Config(format!(
                            "scenario.rho has {} entries, scenario.x has {}",
                            r.len(),
                            x.len()
                        )));
                    }
                    Profile::Table {
                        x: x.clone(),
                        v: r.iter().map(|v| v - rho_inf).collect(),
                    }
                }
                None => Profile::Zero,
            };
            let am = AtomicMeasure::new(atoms.iter().map(|a| (a.x, a.mass)).collect())?;
            let init = EulerianInit::new(u0, rbar0, *rho_inf, am)?;
            lagrangian_from_eulerian(&init, &grid)?
        }
    };
    Ok((grid, state))
}

fn sim_config(cfg: &ScenarioFile) -> Result<SimConfig> {
    let mode = match &cfg.sim.mode {
        Some(m) => parse_mode(m)?,
        None => Mode::default_for(cfg.grid.n),
    };
    SimConfig::new(cfg.sim.dt, cfg.sim.t_end, mode, cfg.sim.output_every)
}

/// 17-significant-digit rendering, the round-trip float format used in every
/// artifact.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug)]
pub struct RunSummary {
    pub outcome: SimOutcome,
    pub written: Vec<PathBuf>,
}

/// Run a scenario and write the requested CSV artifacts. Diagnostics are
/// written even when the simulation aborts.
pub fn run_scenario(cfg: &ScenarioFile) -> Result<RunSummary> {
    validate(cfg)?;
    let (grid, state) = build_initial_state(cfg)?;
    let kernels = build_kernels(&grid, &clamped(&state))?;
    let init = SystemState {
        state,
        kernels,
        t: 0.0,
    };
    let sim = sim_config(cfg)?;
    let traj = simulate(&sim, &init)?;
    let dir = PathBuf::from(&cfg.outputs.dir);
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    for which in &cfg.outputs.which {
        let path = dir.join(format!("{which}.csv"));
        match which.as_str() {
            "diag" => write_diag(&path, &traj)?,
            "char" => write_char(&path, &traj)?,
            "field" => write_field(&path, &grid, &traj)?,
            "atoms" => write_atoms(&path, &grid, &traj)?,
            _ => unreachable!("validated earlier"),
        }
        written.push(path);
    }
    Ok(RunSummary {
        outcome: traj.outcome,
        written,
    })
}

fn clamped(state: &LagrangianState) -> GridFunction {
    let dy = state.dy();
    GridFunction::new(
        dy.values.iter().map(|v| v.max(0.0)).collect(),
        Ghost::Const {
            left: 1.0,
            right: 1.0,
        },
    )
}

fn write_diag(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "t,H_inf,I,minDy,maxh,residB")?;
    for d in &traj.diags {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(d.t),
            fmt_f64(d.h_inf),
            fmt_f64(d.momentum),
            fmt_f64(d.min_dy),
            fmt_f64(d.max_h),
            fmt_f64(d.bid_residual)
        )?;
    }
    Ok(())
}

fn write_char(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "t,j,y")?;
    let stride = (traj.states[0].n() / 64).max(1);
    for (t, j, y) in characteristics_export(traj, stride) {
        writeln!(w, "{},{},{}", fmt_f64(t), j, fmt_f64(y))?;
    }
    Ok(())
}

fn field_samples(grid: &Grid) -> Vec<f64> {
    (0..grid.n).map(|j| grid.xi(j)).collect()
}

fn write_field(path: &Path, grid: &Grid, traj: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "t,x,u,rho,edens")?;
    let xs = field_samples(grid);
    for (k, state) in traj.states.iter().enumerate() {
        let (field, _) = push_to_eulerian(state, &xs)?;
        for s in 0..xs.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(traj.times[k]),
                fmt_f64(field.x[s]),
                fmt_f64(field.u[s]),
                fmt_f64(field.rho[s]),
                fmt_f64(field.energy_density[s])
            )?;
        }
    }
    Ok(())
}

fn write_atoms(path: &Path, grid: &Grid, traj: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "t,x,mass")?;
    let xs = field_samples(grid);
    for (k, state) in traj.states.iter().enumerate() {
        let (_, atoms) = push_to_eulerian(state, &xs)?;
        for (x, mass) in atoms {
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(traj.times[k]),
                fmt_f64(x),
                fmt_f64(mass)
            )?;
        }
    }
    Ok(())
}

/// Self-convergence study: rerun the scenario on refined grids and measure
/// the distances between consecutive interpolated solutions at `t_end`.
#[derive(Debug, Serialize)]
pub struct ConvergeReport {
    pub levels: Vec<LevelInfo>,
    pub distances: Vec<f64>,
    pub orders: Vec<f64>,
    pub monotone: bool,
}

#[derive(Debug, Serialize)]
pub struct LevelInfo {
    pub n: usize,
    pub dxi: f64,
}

pub fn converge_scenario(cfg: &ScenarioFile, levels: usize) -> Result<ConvergeReport> {
    if levels < 3 {
        return Err(Error::Config(format!("need >= 3 levels, got {levels}")));
    }
    let mut infos = Vec::new();
    let mut finals = Vec::new();
    for lvl in 0..levels {
        let factor = 1 << lvl;
        let n = cfg.grid.n * factor;
        if n > MAX_KERNEL_N {
            return Err(Error::Config(format!(
                "level {lvl} needs n = {n}, beyond the kernel cap {MAX_KERNEL_N}"
            )));
        }
        let dxi = cfg.grid.dxi / factor as f64;
        let mut level_cfg = cfg.clone();
        level_cfg.grid = GridCfg {
            n,
            dxi,
            xi0: cfg.grid.xi0,
        };
        let (grid, state) = build_initial_state(&level_cfg)?;
        let kernels = build_kernels(&grid, &clamped(&state))?;
        let init = SystemState {
            state,
            kernels,
            t: 0.0,
        };
        let mut sim = sim_config(&level_cfg)?;
        sim.output_every = usize::MAX / 2; // final snapshot only
        let traj = simulate(&sim, &init)?;
        if let SimOutcome::Aborted { reason, t } = &traj.outcome {
            return Err(Error::Config(format!(
                "level {lvl} aborted at t = {t}: {reason}"
            )));
        }
        infos.push(LevelInfo { n, dxi });
        finals.push(interpolants(traj.last_state(), None));
    }
    let lo = cfg.grid.xi0;
    let hi = cfg.grid.xi0 + (cfg.grid.n as f64) * cfg.grid.dxi;
    let samples = cfg.grid.n * (1 << levels);
    let mut distances = Vec::new();
    for pair in finals.windows(2) {
        distances.push(e_distance(&pair[0], &pair[1], lo, hi, samples));
    }
    let mut orders = Vec::new();
    for pair in distances.windows(2) {
        orders.push((pair[0] / pair[1]).log2());
    }
    let monotone = distances.windows(2).all(|d| d[1] <= d[0]);
    Ok(ConvergeReport {
        levels: infos,
        distances,
        orders,
        monotone,
    })
}

/// Coefficient spec for the kernel dump command: `constant:<v>`,
/// `table:<path>` (newline-separated values, length n) or `fig3` (the
/// stepped example coefficient).
pub fn parse_coeff(spec: &str, grid: &Grid) -> Result<GridFunction> {
    let vals: Vec<f64> = if spec == "fig3" {
        (0..grid.n).map(|j| fig3_coeff(grid.xi(j))).collect()
    } else if let Some(v) = spec.strip_prefix("constant:") {
        let c: f64 = v
            .parse()
            .map_err(|_| Error::Config(format!("bad constant coefficient {v:?}")))?;
        vec![c; grid.n]
    } else if let Some(path) = spec.strip_prefix("table:") {
        let text = fs::read_to_string(path)?;
        let vals: std::result::Result<Vec<f64>, _> = text
            .split_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect();
        let vals = vals.map_err(|e| Error::Config(format!("bad table entry: {e}")))?;
        if vals.len() != grid.n {
            return Err(Error::Config(format!(
                "table has {} values, grid has n = {}",
                vals.len(),
                grid.n
            )));
        }
        vals
    } else {
        return Err(Error::Config(format!(
            "coefficient spec {spec:?} not recognized (constant:<v>, table:<path>, fig3)"
        )));
    };
    for (j, &v) in vals.iter().enumerate() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::NegativeCoefficient(j));
        }
    }
    Ok(GridFunction::new(
        vals,
        Ghost::Const {
            left: 1.0,
            right: 1.0,
        },
    ))
}

/// Stepped coefficient used for the kernel plateau illustration:
/// 2 on (-1, 0.5], 0 on (0.5, 1], 4 on (1, 1.5], 1 elsewhere.
pub fn fig3_coeff(x: f64) -> f64 {
    if x > -1.0 && x <= 0.5 {
        2.0
    } else if x > 0.5 && x <= 1.0 {
        0.0
    } else if x > 1.0 && x <= 1.5 {
        4.0
    } else {
        1.0
    }
}

/// Build kernels for a coefficient and dump them as CSV
/// (`i,j,g,k,gamma,kappa`, row-major). Returns the identity residual.
pub fn dump_greens(grid: &Grid, a: &GridFunction, out: &Path) -> Result<f64> {
    let ks = build_kernels(grid, a)?;
    let mut w = BufWriter::new(fs::File::create(out)?);
    writeln!(w, "i,j,g,k,gamma,kappa")?;
    for i in 0..grid.n {
        for j in 0..grid.n {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                i,
                j,
                fmt_f64(ks.g[(i, j)]),
                fmt_f64(ks.k[(i, j)]),
                fmt_f64(ks.gamma[(i, j)]),
                fmt_f64(ks.kappa[(i, j)])
            )?;
        }
    }
    Ok(ks.identity_residual())
}
