//! Construction of valid Lagrangian initial data from Eulerian data
//! `(u0, rho0, mu0)`, where the energy measure `mu0` has an absolutely
//! continuous part with density `u0^2 + u0x^2 + (rho0 - rho_inf)^2` and an
//! optional purely atomic singular part.
//!
//! The particle labels come from the generalized inverse of
//! `F(x) = mu((-inf, x)) + x`: each atom of mass `a` opens a flat plateau of
//! label-length `a` in `y`, on which the energy density is pinned to
//! `h = 1/2` (the identity `2 (D+y) h = u^2 (D+y)^2 + (D+u)^2 + rbar^2`
//! leaves `h` free exactly there). Everywhere else `h` solves that identity,
//! so constructed states are members of the invariant solution set up to
//! rounding.

use crate::dynamics::LagrangianState;
use crate::grid::{Ghost, Grid, GridFunction};
use crate::{Error, Result};

/// Threshold below which a profile value counts as outside the support
/// (used to size the integration table).
const SUPPORT_EPS: f64 = 1e-12;
/// Largest admissible energy density at the window's image endpoints. The
/// truncated tail mass is of the same order, far below the conservation
/// budgets of the time integrator.
const TAIL_DENSITY_TOL: f64 = 1e-7;
/// Required distance between energy atoms and the window's image endpoints.
const WINDOW_MARGIN: f64 = 1.0;
/// Cells with `D+y` at or below this are treated as collapsed plateaus.
const PLATEAU_EPS: f64 = 1e-12;

/// Purely atomic singular energy: `(position, mass)` pairs.
#[derive(Debug, Clone, Default)]
pub struct AtomicMeasure {
    pub atoms: Vec<(f64, f64)>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        for win in atoms.windows(2) {
            if !(win[1].0 > win[0].0) {
                return Err(Error::InvalidInit(
                    "atom positions must be strictly increasing".into(),
                ));
            }
        }
        for &(x, m) in &atoms {
            if !x.is_finite() || !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidInit(format!(
                    "invalid atom (x = {x}, mass = {m})"
                )));
            }
        }
        Ok(AtomicMeasure { atoms })
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }
}

/// Scalar profile on the line, evaluable together with its derivative.
/// Tables interpolate linearly and vanish outside their nodes.
#[derive(Debug, Clone)]
pub enum Profile {
    Zero,
    /// Sum of peaked exponentials `amp * exp(-|x - center|)`.
    Peakons(Vec<(f64, f64)>),
    Gaussian {
        amp: f64,
        center: f64,
        width: f64,
    },
    Table {
        x: Vec<f64>,
        v: Vec<f64>,
    },
}

impl Profile {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Peakons(ps) => ps
                .iter()
                .map(|&(amp, c)| amp * (-(x - c).abs()).exp())
                .sum(),
            Profile::Gaussian { amp, center, width } => {
                let z = (x - center) / width;
                amp * (-z * z).exp()
            }
            Profile::Table { x: xs, v } => {
                if xs.is_empty() || x <= xs[0] || x >= *xs.last().unwrap() {
                    return 0.0;
                }
                let k = xs.partition_point(|&p| p <= x) - 1;
                let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
                v[k] + t * (v[k + 1] - v[k])
            }
        }
    }

    pub fn slope(&self, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Peakons(ps) => ps
                .iter()
                .map(|&(amp, c)| {
                    // subgradient midpoint 0 exactly at the peak
                    -amp * (x - c).signum() * (-(x - c).abs()).exp()
                })
                .sum(),
            Profile::Gaussian { amp, center, width } => {
                let z = (x - center) / width;
                -2.0 * z / width * amp * (-z * z).exp()
            }
            Profile::Table { x: xs, v } => {
                if xs.is_empty() || x <= xs[0] || x >= *xs.last().unwrap() {
                    return 0.0;
                }
                let k = xs.partition_point(|&p| p <= x) - 1;
                (v[k + 1] - v[k]) / (xs[k + 1] - xs[k])
            }
        }
    }

    /// Interval outside of which the profile magnitude stays below the
    /// support threshold; `None` when identically negligible.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Profile::Zero => None,
            Profile::Peakons(ps) => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &(amp, c) in ps {
                    if amp.abs() <= SUPPORT_EPS {
                        continue;
                    }
                    let radius = (amp.abs() / SUPPORT_EPS).ln();
                    lo = lo.min(c - radius);
                    hi = hi.max(c + radius);
                }
                (lo < hi).then_some((lo, hi))
            }
            Profile::Gaussian { amp, center, width } => {
                if amp.abs() <= SUPPORT_EPS {
                    return None;
                }
                let radius = width.abs() * (amp.abs() / SUPPORT_EPS).ln().sqrt();
                Some((center - radius, center + radius))
            }
            Profile::Table { x: xs, v } => {
                if xs.is_empty() || v.iter().all(|y| y.abs() <= SUPPORT_EPS) {
                    None
                } else {
                    Some((xs[0], *xs.last().unwrap()))
                }
            }
        }
    }

    /// Points where the profile is not smooth (integration breakpoints).
    fn kinks(&self) -> Vec<f64> {
        match self {
            Profile::Peakons(ps) => ps.iter().map(|p| p.1).collect(),
            Profile::Table { x, .. } => x.clone(),
            _ => Vec::new(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Profile::Zero => true,
            Profile::Peakons(ps) => ps.iter().all(|p| p.0.is_finite() && p.1.is_finite()),
            Profile::Gaussian { amp, center, width } => {
                amp.is_finite() && center.is_finite() && width.is_finite() && *width != 0.0
            }
            Profile::Table { x, v } => {
                x.len() == v.len()
                    && x.windows(2).all(|w| w[1] > w[0])
                    && x.iter().chain(v.iter()).all(|y| y.is_finite())
            }
        }
    }
}

/// Eulerian initial data: velocity, density deviation `rho0 - rho_inf`,
/// asymptotic density, and the atomic part of the energy measure.
#[derive(Debug, Clone)]
pub struct EulerianInit {
    pub u0: Profile,
    pub rbar0: Profile,
    pub rho_inf: f64,
    pub atoms: AtomicMeasure,
}

impl EulerianInit {
    pub fn new(u0: Profile, rbar0: Profile, rho_inf: f64, atoms: AtomicMeasure) -> Result<Self> {
        if !u0.is_finite() || !rbar0.is_finite() {
            return Err(Error::InvalidInit("non-finite profile".into()));
        }
        if !rho_inf.is_finite() || rho_inf < 0.0 {
            return Err(Error::InvalidInit(format!("rho_inf = {rho_inf}")));
        }
        Ok(EulerianInit {
            u0,
            rbar0,
            rho_inf,
            atoms,
        })
    }
}

/// Cumulative measure table: fine nodes, the a.c. cumulative at each node,
/// and the atomic jump sitting exactly at each node (zero for most).
struct CumulativeMeasure {
    nodes: Vec<f64>,
    /// `F_lo[k] = nodes[k] + M(nodes[k]) + (atom mass strictly left)`
    f_lo: Vec<f64>,
    /// jump at the node itself
    jump: Vec<f64>,
}

impl CumulativeMeasure {
    /// Trapezoid cumulative of the density plus analytic atom jumps, on a
    /// grid 4x finer than the target label spacing, with kinks and atom
    /// positions inserted as exact nodes.
    fn build(init: &EulerianInit, span: (f64, f64), fine_step: f64) -> Self {
        let (lo, hi) = span;
        let mut nodes: Vec<f64> = Vec::new();
        let count = ((hi - lo) / fine_step).ceil() as usize + 1;
        for k in 0..=count {
            nodes.push(lo + k as f64 * (hi - lo) / count as f64);
        }
        for k in init.u0.kinks().into_iter().chain(init.rbar0.kinks()) {
            if k > lo && k < hi {
                nodes.push(k);
            }
        }
        for &(x, _) in &init.atoms.atoms {
            nodes.push(x);
        }
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let q = |x: f64| {
            let u = init.u0.value(x);
            let ux = init.u0.slope(x);
            let r = init.rbar0.value(x);
            u * u + ux * ux + r * r
        };
        let m = nodes.len();
        let mut cum_ac = vec![0.0; m];
        let mut qk = q(nodes[0]);
        for k in 1..m {
            let qk1 = q(nodes[k]);
            cum_ac[k] = cum_ac[k - 1] + 0.5 * (qk + qk1) * (nodes[k] - nodes[k - 1]);
            qk = qk1;
        }
        let mut jump = vec![0.0; m];
        for &(x, mass) in &init.atoms.atoms {
            let k = nodes.partition_point(|&p| p < x - 1e-14);
            jump[k] += mass;
        }
        let mut f_lo = vec![0.0; m];
        let mut atoms_left = 0.0;
        for k in 0..m {
            f_lo[k] = nodes[k] + cum_ac[k] + atoms_left;
            atoms_left += jump[k];
        }
        CumulativeMeasure { nodes, f_lo, jump }
    }

    /// Generalized inverse `y(xi) = sup { x : F(x) < xi }`.
    fn invert(&self, xi: f64) -> f64 {
        let m = self.nodes.len();
        if xi <= self.f_lo[0] {
            return xi; // no mass to the left of the table
        }
        let last = self.f_lo[m - 1] + self.jump[m - 1];
        if xi > last {
            return self.nodes[m - 1] + (xi - last);
        }
        // largest k with f_lo[k] < xi
        let k = self.f_lo.partition_point(|&f| f < xi) - 1;
        let f_hi = self.f_lo[k] + self.jump[k];
        if xi <= f_hi {
            return self.nodes[k]; // inside the atom's plateau
        }
        // inside the segment (nodes[k], nodes[k+1]); F is linear there
        let span_f = self.f_lo[k + 1] - f_hi;
        let span_x = self.nodes[k + 1] - self.nodes[k];
        self.nodes[k] + (xi - f_hi) / span_f * span_x
    }
}

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn gauss8(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut s = 0.0;
    for (node, w) in GL8_NODES.iter().zip(&GL8_WEIGHTS) {
        s += w * f(mid + half * node);
    }
    s * half
}

fn tail_density(init: &EulerianInit, x: f64) -> f64 {
    let u = init.u0.value(x);
    let ux = init.u0.slope(x);
    let r = init.rbar0.value(x);
    u * u + ux * ux + r * r
}

/// The window covers the image interval `[y_lo, y_hi]` in Eulerian space;
/// the data must have decayed there and atoms must sit well inside.
fn window_check(init: &EulerianInit, y_lo: f64, y_hi: f64) -> Result<()> {
    let q_lo = tail_density(init, y_lo);
    let q_hi = tail_density(init, y_hi);
    if q_lo > TAIL_DENSITY_TOL || q_hi > TAIL_DENSITY_TOL {
        return Err(Error::WindowTooSmall(format!(
            "energy density at the window image endpoints [{y_lo:.3}, {y_hi:.3}] is \
             ({q_lo:.3e}, {q_hi:.3e}), above {TAIL_DENSITY_TOL:.0e}; widen the window"
        )));
    }
    for &(x, m) in &init.atoms.atoms {
        if m > 0.0 && (x < y_lo + WINDOW_MARGIN || x > y_hi - WINDOW_MARGIN) {
            return Err(Error::WindowTooSmall(format!(
                "atom at x = {x} is within {WINDOW_MARGIN} of the window image \
                 [{y_lo:.3}, {y_hi:.3}]"
            )));
        }
    }
    Ok(())
}

/// Energy density obeying the solution-set identity: solved from the
/// primitive variables where the cell is open, `1/2` on collapsed cells.
fn init_energy_density(grid: &Grid, y: &[f64], u: &GridFunction, rbar: &GridFunction) -> Vec<f64> {
    let n = grid.n;
    let dxi = grid.dxi;
    let du = u.fwd_diff(grid);
    let mut h = vec![0.0; n];
    for j in 0..n {
        let a = (y[j + 1] - y[j]) / dxi;
        if a > PLATEAU_EPS {
            let uj = u.values[j];
            let duj = du.values[j];
            let rj = rbar.values[j];
            h[j] = 0.5 * (uj * uj * a + (duj * duj + rj * rj) / a);
        } else {
            h[j] = 0.5;
        }
    }
    h
}

fn cumulative(grid: &Grid, h: &[f64]) -> GridFunction {
    let mut cum = vec![0.0; grid.n];
    let mut acc = 0.0;
    for (c, hj) in cum.iter_mut().zip(h) {
        *c = acc;
        acc += grid.dxi * hj;
    }
    // the right ghost pins the asymptotic total so the last cell's D+H
    // reproduces its energy density exactly
    GridFunction::new(
        cum,
        Ghost::Const {
            left: 0.0,
            right: acc,
        },
    )
}

/// Full Eulerian-to-Lagrangian transform via the generalized inverse of the
/// cumulative measure.
pub fn lagrangian_from_eulerian(init: &EulerianInit, grid: &Grid) -> Result<LagrangianState> {
    let mut span_lo = grid.xi0 - 1.0;
    let mut span_hi = grid.xi_end() + 1.0;
    for s in [init.u0.support(), init.rbar0.support()]
        .into_iter()
        .flatten()
    {
        span_lo = span_lo.min(s.0 - 1.0);
        span_hi = span_hi.max(s.1 + 1.0);
    }
    let cm = CumulativeMeasure::build(init, (span_lo, span_hi), grid.dxi / 4.0);
    window_check(init, cm.invert(grid.xi0), cm.invert(grid.xi_end()))?;
    let n = grid.n;
    // include xi_n so the last cell stretch is available
    let y: Vec<f64> = (0..=n)
        .map(|j| cm.invert(grid.xi0 + j as f64 * grid.dxi))
        .collect();
    let zeta = GridFunction::new((0..n).map(|j| y[j] - grid.xi(j)).collect(), Ghost::Clamp);
    let u = GridFunction::new((0..n).map(|j| init.u0.value(y[j])).collect(), Ghost::ZERO);
    // cell average of the pulled-back density deviation: the label integral
    // of (rbar0 o y) y_xi over a cell equals the x-integral of rbar0 over the
    // cell image, which vanishes on plateaus
    let rbar_fn = |x: f64| init.rbar0.value(x);
    let rbar = GridFunction::new(
        (0..n)
            .map(|j| gauss8(&rbar_fn, y[j], y[j + 1]) / grid.dxi)
            .collect(),
        Ghost::ZERO,
    );
    let h = init_energy_density(grid, &y, &u, &rbar);
    let h_cum = cumulative(grid, &h);
    Ok(LagrangianState {
        grid: *grid,
        zeta,
        u,
        h_cum,
        rbar,
        rho_inf: init.rho_inf,
    })
}

/// Shortcut for smooth data: keep the labels Eulerian (`y = id`), sample
/// pointwise, and accumulate the energy of the identity relabeling.
pub fn smooth_init(
    u0: &Profile,
    rbar0: &Profile,
    rho_inf: f64,
    grid: &Grid,
) -> Result<LagrangianState> {
    let init = EulerianInit::new(u0.clone(), rbar0.clone(), rho_inf, AtomicMeasure::default())?;
    window_check(&init, grid.xi0, grid.xi_end())?;
    let n = grid.n;
    let zeta = GridFunction::new(vec![0.0; n], Ghost::Clamp);
    let u = GridFunction::new((0..n).map(|j| u0.value(grid.xi(j))).collect(), Ghost::ZERO);
    let rbar = GridFunction::new(
        (0..n).map(|j| rbar0.value(grid.xi(j))).collect(),
        Ghost::ZERO,
    );
    let du = u.fwd_diff(grid);
    let h: Vec<f64> = (0..n)
        .map(|j| {
            let (uj, dj, rj) = (u.values[j], du.values[j], rbar.values[j]);
            0.5 * (uj * uj + dj * dj + rj * rj)
        })
        .collect();
    let h_cum = cumulative(grid, &h);
    Ok(LagrangianState {
        grid: *grid,
        zeta,
        u,
        h_cum,
        rbar,
        rho_inf,
    })
}

/// Peakon-antipeakon initial data `u0 = p e^{-|x-x1|} - p e^{-|x-x2|}` with a
/// constant background density.
pub fn peakon_pair(
    p: f64,
    x1: f64,
    x2: f64,
    rho_const: f64,
    grid: &Grid,
) -> Result<LagrangianState> {
    if !(x1 < x2) {
        return Err(Error::InvalidInit(format!("need x1 < x2, got {x1}, {x2}")));
    }
    let init = EulerianInit::new(
        Profile::Peakons(vec![(p, x1), (-p, x2)]),
        Profile::Zero,
        rho_const,
        AtomicMeasure::default(),
    )?;
    lagrangian_from_eulerian(&init, grid)
}
