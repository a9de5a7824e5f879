//! Interpolation of grid solutions to continuum functions and pushforward
//! to Eulerian fields.
//!
//! Node quantities (`zeta, u, H, Q`) interpolate piecewise linearly with
//! slope `D+V` on each cell; the density deviation is piecewise constant;
//! `R` uses the shifted form whose node values are `R_{j-1}`. Energy moves to
//! Eulerian space by conservative binning of the cell masses `dxi h_j`
//! through `x = y(xi)`; collapsed cells deposit their mass as point atoms, so
//! the total is preserved exactly through wave breaking.

use crate::dynamics::LagrangianState;
use crate::grid::{Grid, GridFunction};
use crate::timeint::Trajectory;
use crate::{Error, Result};

/// Width below which a cell image counts as a point atom in the pushforward.
const ATOM_WIDTH_EPS: f64 = 1e-12;

/// Piecewise linear function on the grid cells `[xi_j, xi_{j+1})`, extended
/// by its end values.
#[derive(Debug, Clone)]
pub struct PiecewiseLinear {
    pub xi0: f64,
    pub dxi: f64,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl PiecewiseLinear {
    fn cell(&self, xi: f64) -> usize {
        let j = ((xi - self.xi0) / self.dxi).floor();
        (j.max(0.0) as usize).min(self.values.len() - 1)
    }

    pub fn eval(&self, xi: f64) -> f64 {
        let j = self.cell(xi);
        let local = xi - (self.xi0 + j as f64 * self.dxi);
        self.values[j] + local * self.slopes[j]
    }

    pub fn slope_at(&self, xi: f64) -> f64 {
        self.slopes[self.cell(xi)]
    }
}

/// Piecewise constant function on the grid cells.
#[derive(Debug, Clone)]
pub struct PiecewiseConstant {
    pub xi0: f64,
    pub dxi: f64,
    pub values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn eval(&self, xi: f64) -> f64 {
        let j = ((xi - self.xi0) / self.dxi).floor();
        let j = (j.max(0.0) as usize).min(self.values.len() - 1);
        self.values[j]
    }
}

/// Interpolants of one Lagrangian snapshot.
#[derive(Debug, Clone)]
pub struct InterpolantSet {
    pub zeta: PiecewiseLinear,
    pub u: PiecewiseLinear,
    pub h_cum: PiecewiseLinear,
    pub rbar: PiecewiseConstant,
    pub q: Option<PiecewiseLinear>,
    pub r: Option<PiecewiseLinear>,
}

impl InterpolantSet {
    /// `y(xi) = xi + zeta(xi)`, monotone nondecreasing for valid states.
    pub fn y(&self, xi: f64) -> f64 {
        xi + self.zeta.eval(xi)
    }
}

fn node_interpolant(grid: &Grid, v: &GridFunction) -> PiecewiseLinear {
    PiecewiseLinear {
        xi0: grid.xi0,
        dxi: grid.dxi,
        values: v.values.clone(),
        slopes: v.fwd_diff(grid).values,
    }
}

/// Interpolants for a state; pass the forcing pair to also interpolate
/// `Q` (node form) and `R` (shifted form with `R(xi_j) = R_{j-1}`).
pub fn interpolants(
    state: &LagrangianState,
    rq: Option<(&GridFunction, &GridFunction)>,
) -> InterpolantSet {
    let grid = &state.grid;
    let (r, q) = match rq {
        Some((r, q)) => {
            let qi = node_interpolant(grid, q);
            let rd = r.bwd_diff(grid);
            let ri = PiecewiseLinear {
                xi0: grid.xi0,
                dxi: grid.dxi,
                values: (0..grid.n).map(|j| r.at(j as isize - 1)).collect(),
                slopes: rd.values,
            };
            (Some(ri), Some(qi))
        }
        None => (None, None),
    };
    InterpolantSet {
        zeta: node_interpolant(grid, &state.zeta),
        u: node_interpolant(grid, &state.u),
        h_cum: node_interpolant(grid, &state.h_cum),
        rbar: PiecewiseConstant {
            xi0: grid.xi0,
            dxi: grid.dxi,
            values: state.rbar.values.clone(),
        },
        q,
        r,
    }
}

/// Eulerian samples of the solution.
#[derive(Debug, Clone)]
pub struct EulerianField {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Density; NaN where the map is singular (plateau cells).
    pub rho: Vec<f64>,
    /// Energy density per x-cell from conservative binning; excludes atoms.
    pub energy_density: Vec<f64>,
    pub rho_inf: f64,
}

/// Point masses of energy sitting on collapsed cells: `(x, mass)`.
pub type EnergyAtoms = Vec<(f64, f64)>;

/// Push the state to Eulerian space on a uniform sample grid `xs` (treated
/// as cell centers of width `xs[1] - xs[0]`).
pub fn push_to_eulerian(
    state: &LagrangianState,
    xs: &[f64],
) -> Result<(EulerianField, EnergyAtoms)> {
    if xs.len() < 2 {
        return Err(Error::DimensionMismatch(
            "need at least 2 sample points".into(),
        ));
    }
    let dx = xs[1] - xs[0];
    if !(dx > 0.0) || xs.windows(2).any(|w| (w[1] - w[0] - dx).abs() > 1e-9 * dx) {
        return Err(Error::DimensionMismatch(
            "sample positions must be uniform and increasing".into(),
        ));
    }
    let n = state.n();
    let grid = &state.grid;
    let dy = state.dy();
    let eps = 1e-12 * dy.values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if dy.values.iter().any(|&a| a < -eps) {
        return Err(Error::InvalidInit(format!(
            "non-monotone particle map (min D+y = {})",
            dy.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
        )));
    }
    // node positions, weakly increasing
    let mut y = state.y_values();
    y.push(y[n - 1] + grid.dxi * dy.values[n - 1].max(0.0));
    for j in 0..n {
        if y[j + 1] < y[j] {
            y[j + 1] = y[j]; // flatten rejection-level undershoots
        }
    }
    // velocity via the leftmost preimage of each sample
    let h = state.h();
    let mut u_out = vec![0.0; xs.len()];
    let mut rho_out = vec![0.0; xs.len()];
    for (s, &x) in xs.iter().enumerate() {
        if x <= y[0] {
            u_out[s] = state.u.values[0];
            rho_out[s] = state.rho_inf;
            continue;
        }
        if x >= y[n] {
            u_out[s] = *state.u.values.last().unwrap();
            rho_out[s] = state.rho_inf;
            continue;
        }
        // first node with y[j] > x; the preimage lies in cell j-1
        let j = y.partition_point(|&p| p <= x);
        let j = j.saturating_sub(1).min(n - 1);
        let a = dy.values[j].max(0.0);
        if a * grid.dxi > ATOM_WIDTH_EPS {
            let xi = grid.xi(j) + (x - y[j]) / a;
            let du = (state.u.at(j as isize + 1) - state.u.values[j]) / grid.dxi;
            u_out[s] = state.u.values[j] + (xi - grid.xi(j)) * du;
            rho_out[s] = state.rbar.values[j] / a + state.rho_inf;
        } else {
            // x hits a plateau: leftmost label, singular density
            u_out[s] = state.u.values[j];
            rho_out[s] = f64::NAN;
        }
    }
    // conservative energy binning
    let mut edens = vec![0.0; xs.len()];
    let mut atoms: EnergyAtoms = Vec::new();
    let x_lo = xs[0] - 0.5 * dx;
    let nbins = xs.len();
    let mut deposit = |xa: f64, xb: f64, mass: f64| {
        if mass == 0.0 {
            return;
        }
        let width = xb - xa;
        let b0 = (((xa - x_lo) / dx).floor().max(0.0) as usize).min(nbins - 1);
        let b1 = (((xb - x_lo) / dx).floor().max(0.0) as usize).min(nbins - 1);
        if b0 == b1 || width <= 0.0 {
            edens[b0] += mass / dx;
            return;
        }
        for b in b0..=b1 {
            let lo = (x_lo + b as f64 * dx).max(xa);
            let hi = (x_lo + (b + 1) as f64 * dx).min(xb);
            if hi > lo {
                edens[b] += mass * (hi - lo) / width / dx;
            }
        }
    };
    for j in 0..n {
        let mass = grid.dxi * h.values[j];
        let width = y[j + 1] - y[j];
        if width <= ATOM_WIDTH_EPS {
            if mass != 0.0 {
                // merge with a previous atom at the same position
                if let Some(last) = atoms.last_mut() {
                    if (last.0 - y[j]).abs() <= ATOM_WIDTH_EPS {
                        last.1 += mass;
                        continue;
                    }
                }
                atoms.push((y[j], mass));
            }
        } else {
            deposit(y[j], y[j + 1], mass);
        }
    }
    Ok((
        EulerianField {
            x: xs.to_vec(),
            u: u_out,
            rho: rho_out,
            energy_density: edens,
            rho_inf: state.rho_inf,
        },
        atoms,
    ))
}

/// Characteristics table `(t, label index, position)` for a strided subset
/// of labels.
pub fn characteristics_export(traj: &Trajectory, stride: usize) -> Vec<(f64, usize, f64)> {
    let stride = stride.max(1);
    let mut rows = Vec::new();
    for (k, state) in traj.states.iter().enumerate() {
        let t = traj.times[k];
        let y = state.y_values();
        for (j, yj) in y.iter().enumerate().step_by(stride) {
            rows.push((t, j, *yj));
        }
    }
    rows
}

/// Distance between two interpolated solutions in the norm
/// `|zeta|_V + |u|_H1 + |H|_V + |rbar|_L2` of the differences, measured on a
/// uniform evaluation grid over `[lo, hi]` (sup norms over the samples, L2
/// norms by midpoint quadrature).
pub fn e_distance(a: &InterpolantSet, b: &InterpolantSet, lo: f64, hi: f64, samples: usize) -> f64 {
    assert!(samples >= 2 && hi > lo);
    let m = samples;
    let dxi = (hi - lo) / m as f64;
    let mut sup_zeta = 0.0_f64;
    let mut sup_h = 0.0_f64;
    let mut l2_dzeta = 0.0;
    let mut l2_u = 0.0;
    let mut l2_du = 0.0;
    let mut l2_dh = 0.0;
    let mut l2_rbar = 0.0;
    for k in 0..=m {
        let xi = lo + k as f64 * dxi;
        sup_zeta = sup_zeta.max((a.zeta.eval(xi) - b.zeta.eval(xi)).abs());
        sup_h = sup_h.max((a.h_cum.eval(xi) - b.h_cum.eval(xi)).abs());
    }
    for k in 0..m {
        let xi = lo + (k as f64 + 0.5) * dxi;
        let du = a.u.eval(xi) - b.u.eval(xi);
        l2_u += du * du;
        let ds = a.u.slope_at(xi) - b.u.slope_at(xi);
        l2_du += ds * ds;
        let dz = a.zeta.slope_at(xi) - b.zeta.slope_at(xi);
        l2_dzeta += dz * dz;
        let dh = a.h_cum.slope_at(xi) - b.h_cum.slope_at(xi);
        l2_dh += dh * dh;
        let dr = a.rbar.eval(xi) - b.rbar.eval(xi);
        l2_rbar += dr * dr;
    }
    let l2 = |s: f64| (s * dxi).sqrt();
    (sup_zeta + l2(l2_dzeta)) + ((l2_u + l2_du) * dxi).sqrt() + (sup_h + l2(l2_dh)) + l2(l2_rbar)
}
