//! Fixed-step RK4 time integration with step-halving rejection and invariant
//! monitoring.
//!
//! Two kernel handling modes:
//!
//! * `resolve`  - the kernels are rebuilt from the current `D+y` at every
//!   stage (they are a function of the state, so this is exact for the
//!   semi-discrete flow); the factored form keeps each RHS evaluation O(n).
//! * `propagate` - the four dense kernels are carried as additional ODE
//!   variables and advanced with the same RK4 tableau, following the closed
//!   system. O(n^3) per RHS via matrix products.
//!
//! For exact flows the two coincide; their numerical agreement is one of the
//! acceptance checks.

use crate::dynamics::{
    compute_rq, compute_rq_factored, kernel_rhs, momentum, state_rhs_with_rq, validate_set_b,
    KernelDeriv, LagrangianState, StateDeriv, SystemState,
};
use crate::greens::{assemble_kernels, build_kernels, shoot_pair, KernelSet};
use crate::grid::{Ghost, GridFunction, Mat};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Propagate,
    Resolve,
}

impl Mode {
    /// Dense kernel propagation is O(n^3) per step; default to it only on
    /// small grids.
    pub fn default_for(n: usize) -> Mode {
        if n > 512 {
            Mode::Resolve
        } else {
            Mode::Propagate
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub mode: Mode,
    /// Base steps between stored snapshots.
    pub output_every: usize,
    pub max_halvings: usize,
    /// Factor of the energy-identity tolerance `factor * (1 + H_inf)^2`
    /// applied when admitting initial data.
    pub bid_tol_factor: f64,
    /// Keep the kernel set of the final state in the trajectory.
    pub keep_final_kernels: bool,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64, mode: Mode, output_every: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("sim.dt = {dt}, need dt > 0")));
        }
        if !(t_end >= 0.0) || !t_end.is_finite() {
            return Err(Error::Config(format!(
                "sim.t_end = {t_end}, need t_end >= 0"
            )));
        }
        if output_every == 0 {
            return Err(Error::Config("sim.output_every must be >= 1".into()));
        }
        Ok(SimConfig {
            dt,
            t_end,
            mode,
            output_every,
            max_halvings: 10,
            bid_tol_factor: 1e-8,
            keep_final_kernels: false,
        })
    }
}

/// Per-snapshot diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotDiag {
    pub t: f64,
    pub h_inf: f64,
    pub momentum: f64,
    pub min_dy: f64,
    pub max_h: f64,
    pub bid_residual: f64,
    /// Kernel identity residual; exact by construction in resolve mode,
    /// reported drift in propagate mode.
    pub kernel_residual: f64,
    /// Largest kernel magnitude on the window boundary rows/columns
    /// (monitors tail growth in propagate mode).
    pub kernel_tail: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimOutcome {
    Completed,
    Aborted { reason: String, t: f64 },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<LagrangianState>,
    pub diags: Vec<SnapshotDiag>,
    pub outcome: SimOutcome,
    /// Present when the run was configured with `keep_final_kernels`.
    pub final_kernels: Option<KernelSet>,
}

impl Trajectory {
    pub fn last_state(&self) -> &LagrangianState {
        self.states
            .last()
            .expect("trajectory holds at least the initial state")
    }
}

fn eps_neg(state: &LagrangianState) -> f64 {
    let dy = state.dy();
    1e-12 * dy.values.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
}

/// Coefficient for kernel construction: `D+y` clamped at zero (stages may
/// undershoot by rejection-level amounts).
fn clamped_dy(state: &LagrangianState) -> GridFunction {
    let dy = state.dy();
    GridFunction::new(
        dy.values.iter().map(|v| v.max(0.0)).collect(),
        Ghost::Const {
            left: 1.0,
            right: 1.0,
        },
    )
}

fn resolve_rhs(state: &LagrangianState) -> Result<StateDeriv> {
    let a = clamped_dy(state);
    let pair = shoot_pair(&state.grid, &a)?;
    let (r, q) = compute_rq_factored(state, &pair);
    Ok(state_rhs_with_rq(state, &r, &q))
}

fn combine_rk4(
    base: &LagrangianState,
    dt: f64,
    k1: &StateDeriv,
    k2: &StateDeriv,
    k3: &StateDeriv,
    k4: &StateDeriv,
) -> LagrangianState {
    let n = base.n();
    let mut sum = StateDeriv {
        dzeta: vec![0.0; n],
        du: vec![0.0; n],
        dh: vec![0.0; n],
        drbar: vec![0.0; n],
    };
    for j in 0..n {
        sum.dzeta[j] = k1.dzeta[j] + 2.0 * k2.dzeta[j] + 2.0 * k3.dzeta[j] + k4.dzeta[j];
        sum.du[j] = k1.du[j] + 2.0 * k2.du[j] + 2.0 * k3.du[j] + k4.du[j];
        sum.dh[j] = k1.dh[j] + 2.0 * k2.dh[j] + 2.0 * k3.dh[j] + k4.dh[j];
        sum.drbar[j] = k1.drbar[j] + 2.0 * k2.drbar[j] + 2.0 * k3.drbar[j] + k4.drbar[j];
    }
    base.axpy(dt / 6.0, &sum)
}

fn rk4_state_only(state: &LagrangianState, dt: f64) -> Result<LagrangianState> {
    let k1 = resolve_rhs(state)?;
    let s2 = state.axpy(0.5 * dt, &k1);
    let k2 = resolve_rhs(&s2)?;
    let s3 = state.axpy(0.5 * dt, &k2);
    let k3 = resolve_rhs(&s3)?;
    let s4 = state.axpy(dt, &k3);
    let k4 = resolve_rhs(&s4)?;
    Ok(combine_rk4(state, dt, &k1, &k2, &k3, &k4))
}

fn mat_axpy(base: &Mat, f: f64, d: &Mat) -> Mat {
    let mut out = base.clone();
    for (o, x) in out.data_mut().iter_mut().zip(d.data()) {
        *o += f * x;
    }
    out
}

fn kernels_axpy(base: &KernelSet, f: f64, d: &KernelDeriv, a: GridFunction) -> KernelSet {
    KernelSet {
        dxi: base.dxi,
        g: mat_axpy(&base.g, f, &d.dg),
        k: mat_axpy(&base.k, f, &d.dk),
        gamma: mat_axpy(&base.gamma, f, &d.dgamma),
        kappa: mat_axpy(&base.kappa, f, &d.dkappa),
        a,
        wronskian_value: f64::NAN,
        edges: None,
    }
}

fn propagate_rhs(
    state: &LagrangianState,
    kernels: &KernelSet,
) -> Result<(StateDeriv, KernelDeriv)> {
    let (r, q) = compute_rq(state, kernels)?;
    let sd = state_rhs_with_rq(state, &r, &q);
    let du = state.u.fwd_diff(&state.grid);
    let kd = kernel_rhs(kernels, &du)?;
    Ok((sd, kd))
}

fn rk4_coupled(
    state: &LagrangianState,
    kernels: &KernelSet,
    dt: f64,
) -> Result<(LagrangianState, KernelSet)> {
    let (s1, m1) = propagate_rhs(state, kernels)?;
    let st2 = state.axpy(0.5 * dt, &s1);
    let ks2 = kernels_axpy(kernels, 0.5 * dt, &m1, st2.dy());
    let (s2, m2) = propagate_rhs(&st2, &ks2)?;
    let st3 = state.axpy(0.5 * dt, &s2);
    let ks3 = kernels_axpy(kernels, 0.5 * dt, &m2, st3.dy());
    let (s3, m3) = propagate_rhs(&st3, &ks3)?;
    let st4 = state.axpy(dt, &s3);
    let ks4 = kernels_axpy(kernels, dt, &m3, st4.dy());
    let (s4, m4) = propagate_rhs(&st4, &ks4)?;
    let new_state = combine_rk4(state, dt, &s1, &s2, &s3, &s4);
    let w = dt / 6.0;
    let comb = |b: &Mat, d1: &Mat, d2: &Mat, d3: &Mat, d4: &Mat| {
        let mut out = b.clone();
        let od = out.data_mut();
        for (i, o) in od.iter_mut().enumerate() {
            *o += w * (d1.data()[i] + 2.0 * d2.data()[i] + 2.0 * d3.data()[i] + d4.data()[i]);
        }
        out
    };
    let new_kernels = KernelSet {
        dxi: kernels.dxi,
        g: comb(&kernels.g, &m1.dg, &m2.dg, &m3.dg, &m4.dg),
        k: comb(&kernels.k, &m1.dk, &m2.dk, &m3.dk, &m4.dk),
        gamma: comb(
            &kernels.gamma,
            &m1.dgamma,
            &m2.dgamma,
            &m3.dgamma,
            &m4.dgamma,
        ),
        kappa: comb(
            &kernels.kappa,
            &m1.dkappa,
            &m2.dkappa,
            &m3.dkappa,
            &m4.dkappa,
        ),
        a: new_state.dy(),
        wronskian_value: f64::NAN,
        edges: None,
    };
    Ok((new_state, new_kernels))
}

/// One RK4 step of the full system. In resolve mode the kernels of the
/// returned state are rebuilt from the stepped `D+y`.
pub fn rk4_step(sys: &SystemState, dt: f64, mode: Mode) -> Result<SystemState> {
    match mode {
        Mode::Resolve => {
            let state = rk4_state_only(&sys.state, dt)?;
            let a = clamped_dy(&state);
            let kernels = build_kernels(&state.grid, &a)?;
            Ok(SystemState {
                state,
                kernels,
                t: sys.t + dt,
            })
        }
        Mode::Propagate => {
            let (state, kernels) = rk4_coupled(&sys.state, &sys.kernels, dt)?;
            Ok(SystemState {
                state,
                kernels,
                t: sys.t + dt,
            })
        }
    }
}

enum StepState {
    ResolveOnly(LagrangianState),
    WithKernels(LagrangianState, KernelSet),
}

impl StepState {
    fn state(&self) -> &LagrangianState {
        match self {
            StepState::ResolveOnly(s) => s,
            StepState::WithKernels(s, _) => s,
        }
    }
}

fn try_step(cur: &StepState, dt: f64) -> Result<StepState> {
    Ok(match cur {
        StepState::ResolveOnly(s) => StepState::ResolveOnly(rk4_state_only(s, dt)?),
        StepState::WithKernels(s, k) => {
            let (ns, nk) = rk4_coupled(s, k, dt)?;
            StepState::WithKernels(ns, nk)
        }
    })
}

fn acceptable(state: &LagrangianState, tol: f64) -> bool {
    if !state.is_finite() {
        return false;
    }
    let dy = state.dy();
    dy.values.iter().fold(f64::INFINITY, |m, v| m.min(*v)) >= -tol
}

/// Advance over one base step, halving on rejection. Depth-limited; at the
/// limit a mildly negative `D+y` (above -1e-6) is tolerated, anything worse
/// aborts.
fn advance(cur: StepState, dt: f64, t: f64, depth: usize, max_depth: usize) -> Result<StepState> {
    let tol = eps_neg(cur.state());
    match try_step(&cur, dt) {
        Ok(next) if acceptable(next.state(), tol) => Ok(next),
        outcome => {
            if depth >= max_depth {
                return match outcome {
                    Ok(next) => {
                        let dy = next.state().dy();
                        let min_dy = dy.values.iter().fold(f64::INFINITY, |m, v| m.min(*v));
                        if next.state().is_finite() && min_dy >= -1e-6 {
                            Ok(next)
                        } else if !next.state().is_finite() {
                            Err(Error::NonFiniteState(t))
                        } else {
                            Err(Error::StepHalvingExhausted { t, min_dy })
                        }
                    }
                    Err(e) => Err(e),
                };
            }
            let half = dt / 2.0;
            let mid = advance(cur, half, t, depth + 1, max_depth)?;
            advance(mid, half, t + half, depth + 1, max_depth)
        }
    }
}

fn diag_for(state: &LagrangianState, kernels: &KernelSet, t: f64) -> SnapshotDiag {
    let dy = state.dy();
    let h = state.h();
    let n = kernels.n();
    let mut tail = 0.0_f64;
    for m in [&kernels.g, &kernels.k, &kernels.gamma, &kernels.kappa] {
        for i in 0..n {
            tail = tail
                .max(m[(i, 0)].abs())
                .max(m[(i, n - 1)].abs())
                .max(m[(0, i)].abs())
                .max(m[(n - 1, i)].abs());
        }
    }
    let rep = validate_set_b(state, None);
    SnapshotDiag {
        t,
        h_inf: state.h_inf(),
        momentum: momentum(state),
        min_dy: dy.values.iter().fold(f64::INFINITY, |m, v| m.min(*v)),
        max_h: h.values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)),
        bid_residual: rep.bid_residual,
        kernel_residual: kernels.identity_residual(),
        kernel_tail: tail,
    }
}

/// Integrate to `t_end` with snapshots every `output_every` base steps.
/// Aborts are recorded in the trajectory outcome; the initial state must
/// satisfy the solution-set conditions.
pub fn simulate(config: &SimConfig, init: &SystemState) -> Result<Trajectory> {
    let state0 = &init.state;
    let rep = validate_set_b(state0, None);
    if !rep.finite {
        return Err(Error::InvalidInit("non-finite initial state".into()));
    }
    let bid_tol = config.bid_tol_factor * (1.0 + rep.h_inf) * (1.0 + rep.h_inf);
    if rep.bid_residual > bid_tol {
        return Err(Error::InvalidInit(format!(
            "energy identity residual {} exceeds tolerance {bid_tol}",
            rep.bid_residual
        )));
    }
    if rep.min_dy < -rep.eps_neg {
        return Err(Error::InvalidInit(format!("negative D+y: {}", rep.min_dy)));
    }
    let mut traj = Trajectory {
        times: vec![init.t],
        states: vec![state0.clone()],
        diags: vec![diag_for(state0, &init.kernels, init.t)],
        outcome: SimOutcome::Completed,
        final_kernels: None,
    };
    let mut cur = match config.mode {
        Mode::Resolve => StepState::ResolveOnly(state0.clone()),
        Mode::Propagate => StepState::WithKernels(state0.clone(), init.kernels.clone()),
    };
    let mut t = init.t;
    let t_end = init.t + config.t_end;
    let mut step_count = 0usize;
    while t < t_end - 1e-12 * config.dt.max(1.0) {
        let dt = config.dt.min(t_end - t);
        match advance(cur, dt, t, 0, config.max_halvings) {
            Ok(next) => {
                cur = next;
                t += dt;
                step_count += 1;
                let at_end = t >= t_end - 1e-12 * config.dt.max(1.0);
                if step_count.is_multiple_of(config.output_every) || at_end {
                    let (state, kernels) = snapshot_kernels(&cur)?;
                    traj.times.push(t);
                    traj.diags.push(diag_for(&state, &kernels, t));
                    traj.states.push(state);
                    if at_end && config.keep_final_kernels {
                        traj.final_kernels = Some(kernels);
                    }
                }
            }
            Err(e) => {
                traj.outcome = SimOutcome::Aborted {
                    reason: e.to_string(),
                    t,
                };
                return Ok(traj);
            }
        }
    }
    if config.keep_final_kernels && traj.final_kernels.is_none() {
        let (_, kernels) = snapshot_kernels(&cur)?;
        traj.final_kernels = Some(kernels);
    }
    Ok(traj)
}

/// Materialize (state, kernels) for diagnostics at a snapshot.
fn snapshot_kernels(cur: &StepState) -> Result<(LagrangianState, KernelSet)> {
    match cur {
        StepState::ResolveOnly(s) => {
            let a = clamped_dy(s);
            let pair = shoot_pair(&s.grid, &a)?;
            Ok((s.clone(), assemble_kernels(&s.grid, &a, &pair)))
        }
        StepState::WithKernels(s, k) => Ok((s.clone(), k.clone())),
    }
}
