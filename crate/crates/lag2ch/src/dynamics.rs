//! Right-hand sides of the closed semi-discrete system, the conserved
//! functionals, and the solution-set validity checks.
//!
//! State tuple: `zeta` (particle displacement, `y_j = xi_j + zeta_j`),
//! `u` (Lagrangian velocity), `h_cum` (cumulative energy `H`), `rbar`
//! (density deviation), plus the asymptotic density `rho_inf`. During
//! evolution the energy density is always read as `h = D+H`; the scheme
//! never divides by `D+y` after initialization, which is what lets it run
//! through cell collapse.

use rayon::prelude::*;

use crate::greens::{KernelSet, ShotPair};
use crate::grid::{kernel_apply, Ghost, Grid, GridFunction, Mat, NormKind};
use crate::{Error, Result};

/// Lagrangian state over one grid window.
#[derive(Debug, Clone)]
pub struct LagrangianState {
    pub grid: Grid,
    pub zeta: GridFunction,
    pub u: GridFunction,
    pub h_cum: GridFunction,
    pub rbar: GridFunction,
    pub rho_inf: f64,
}

impl LagrangianState {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// Rest state `y = id`, `u = 0` on the given grid.
    pub fn quiescent(grid: Grid, rho_inf: f64) -> Self {
        let n = grid.n;
        LagrangianState {
            grid,
            zeta: GridFunction::new(vec![0.0; n], Ghost::Clamp),
            u: GridFunction::zeros(n),
            h_cum: GridFunction::zeros(n),
            rbar: GridFunction::zeros(n),
            rho_inf,
        }
    }

    /// Particle positions `y_j = xi_j + zeta_j`.
    pub fn y_values(&self) -> Vec<f64> {
        (0..self.n())
            .map(|j| self.grid.xi(j) + self.zeta.values[j])
            .collect()
    }

    /// Cell stretch `D+y = 1 + D+zeta` (ghost value 1).
    pub fn dy(&self) -> GridFunction {
        let d = self.zeta.fwd_diff(&self.grid);
        let vals = d.values.iter().map(|z| 1.0 + z).collect();
        GridFunction::new(
            vals,
            Ghost::Const {
                left: 1.0,
                right: 1.0,
            },
        )
    }

    /// Energy density `h = D+H`.
    pub fn h(&self) -> GridFunction {
        self.h_cum.fwd_diff(&self.grid)
    }

    /// Total energy `H_inf` (the cumulative energy saturates inside the
    /// window when the data is supported there).
    pub fn h_inf(&self) -> f64 {
        *self.h_cum.values.last().unwrap()
    }

    pub fn is_finite(&self) -> bool {
        self.zeta.values.iter().all(|v| v.is_finite())
            && self.u.values.iter().all(|v| v.is_finite())
            && self.h_cum.values.iter().all(|v| v.is_finite())
            && self.rbar.values.iter().all(|v| v.is_finite())
    }

    /// `base + factor * delta`, fieldwise; ghost policies carry over (the
    /// asymptotic constants are invariants of the flow).
    pub fn axpy(&self, factor: f64, delta: &StateDeriv) -> LagrangianState {
        let lift = |v: &GridFunction, d: &[f64]| {
            GridFunction::new(
                v.values
                    .iter()
                    .zip(d)
                    .map(|(a, b)| a + factor * b)
                    .collect(),
                v.ghost,
            )
        };
        LagrangianState {
            grid: self.grid,
            zeta: lift(&self.zeta, &delta.dzeta),
            u: lift(&self.u, &delta.du),
            h_cum: lift(&self.h_cum, &delta.dh),
            rbar: lift(&self.rbar, &delta.drbar),
            rho_inf: self.rho_inf,
        }
    }

    pub fn max_abs_diff(&self, other: &LagrangianState) -> f64 {
        let d = |a: &GridFunction, b: &GridFunction| {
            a.values
                .iter()
                .zip(&b.values)
                .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
        };
        d(&self.zeta, &other.zeta)
            .max(d(&self.u, &other.u))
            .max(d(&self.h_cum, &other.h_cum))
            .max(d(&self.rbar, &other.rbar))
    }
}

/// Time derivative of the state tuple.
#[derive(Debug, Clone)]
pub struct StateDeriv {
    pub dzeta: Vec<f64>,
    pub du: Vec<f64>,
    pub dh: Vec<f64>,
    pub drbar: Vec<f64>,
}

/// State plus the kernels it currently carries.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub state: LagrangianState,
    pub kernels: KernelSet,
    pub t: f64,
}

/// Energy density from the primitive variables,
/// `h_i = (u_i^2 a_i + (D+u_i)^2 / a_i + rbar_i^2 / a_i) / 2`, `a = D+y`.
/// Only valid at initialization time; cells with `a_i <= 0` are an error
/// unless the dividing numerators vanish there.
pub fn h_from_primitives(state: &LagrangianState) -> Result<GridFunction> {
    let a = state.dy();
    let du = state.u.fwd_diff(&state.grid);
    let n = state.n();
    let mut h = vec![0.0; n];
    for j in 0..n {
        let aj = a.values[j];
        let uj = state.u.values[j];
        let duj = du.values[j];
        let rj = state.rbar.values[j];
        if aj > 0.0 {
            h[j] = 0.5 * (uj * uj * aj + (duj * duj + rj * rj) / aj);
        } else if duj == 0.0 && rj == 0.0 {
            h[j] = 0.0;
        } else {
            return Err(Error::DegenerateCell(j));
        }
    }
    Ok(GridFunction::new(h, Ghost::ZERO))
}

fn rq_sources(state: &LagrangianState) -> (GridFunction, GridFunction) {
    let du = state.u.fwd_diff(&state.grid);
    let h = state.h();
    let n = state.n();
    let mut w = vec![0.0; n];
    let mut f = vec![0.0; n];
    for j in 0..n {
        w[j] = state.u.values[j] * du.values[j];
        f[j] = h.values[j] + state.rho_inf * state.rbar.values[j];
    }
    (
        GridFunction::new(w, Ghost::ZERO),
        GridFunction::new(f, Ghost::ZERO),
    )
}

/// Nonlocal forcing pair from dense kernels:
/// `Q_j = dxi sum_i [g_ij u_i D+u_i + kappa_ij (h_i + rho_inf rbar_i)]`,
/// `R_j` the same with `gamma, k`.
pub fn compute_rq(
    state: &LagrangianState,
    kernels: &KernelSet,
) -> Result<(GridFunction, GridFunction)> {
    if kernels.n() != state.n() {
        return Err(Error::DimensionMismatch(format!(
            "kernels {}x{} vs state n {}",
            kernels.n(),
            kernels.n(),
            state.n()
        )));
    }
    let (w, f) = rq_sources(state);
    let dxi = state.grid.dxi;
    let gw = kernel_apply(&kernels.g, &w, dxi)?;
    let kf = kernel_apply(&kernels.kappa, &f, dxi)?;
    let cw = kernel_apply(&kernels.gamma, &w, dxi)?;
    let kkf = kernel_apply(&kernels.k, &f, dxi)?;
    let n = state.n();
    let mut q = vec![0.0; n];
    let mut r = vec![0.0; n];
    for j in 0..n {
        q[j] = gw.values[j] + kf.values[j];
        r[j] = cw.values[j] + kkf.values[j];
    }
    Ok((
        GridFunction::new(r, Ghost::ZERO),
        GridFunction::new(q, Ghost::ZERO),
    ))
}

/// Same forcing pair evaluated from the factored homogeneous solutions in
/// O(n) via anchored prefix/suffix sums. Mathematically identical to
/// [`compute_rq`] on kernels assembled from the same shot pair.
pub fn compute_rq_factored(
    state: &LagrangianState,
    pair: &ShotPair,
) -> (GridFunction, GridFunction) {
    let n = state.n();
    let dxi = state.grid.dxi;
    let (w, f) = rq_sources(state);
    let w = &w.values;
    let f = &f.values;
    // Suffix accumulators anchored at the scale of state j:
    //   bh[j] = sum_{i>j}  g-_i w_i  (relative scale),
    //   dh[j] = sum_{i>=j} gamma-_i f_i.
    let mut bh = vec![0.0; n];
    let mut dh = vec![0.0; n];
    {
        let mut b_next = 0.0;
        let mut d_next = 0.0;
        for j in (0..n).rev() {
            let fac = (pair.scale_minus(j + 1) - pair.scale_minus(j)).exp();
            let b = if j + 1 < n {
                fac * (pair.g_mant_minus(j + 1) * w[j + 1] + b_next)
            } else {
                0.0
            };
            let d = fac * (pair.c_mant_minus(j as isize) * f[j] + d_next);
            bh[j] = b;
            dh[j] = d;
            b_next = b;
            d_next = d;
        }
    }
    // Forward pass: ah = sum_{i<=j} g+_i w_i, ch = sum_{i<j} gamma+_i f_i,
    // both anchored at the scale of state j.
    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut ah = 0.0;
    let mut ch = 0.0;
    for j in 0..n {
        if j > 0 {
            let fac = (pair.scale_plus(j - 1) - pair.scale_plus(j)).exp();
            ah = ah * fac + pair.g_mant_plus(j) * w[j];
            // the gamma+ mantissa of cell j-1 already lives at the scale of
            // state j, so it enters without a factor
            ch = ch * fac + pair.c_mant_plus(j as isize - 1) * f[j - 1];
        } else {
            ah = pair.g_mant_plus(0) * w[0];
            ch = 0.0;
        }
        let wh = pair.wronskian_mant(j);
        let em = (pair.scale_minus(j + 1) - pair.scale_minus(j)).exp();
        let ep = (pair.scale_plus(j + 1) - pair.scale_plus(j)).exp();
        let gm = pair.g_mant_minus(j);
        let gp = pair.g_mant_plus(j);
        // gamma mantissas live one state later; fold their scale offset in.
        let cm = pair.c_mant_minus(j as isize) * em;
        let cp = pair.c_mant_plus(j as isize) * ep;
        let g_w = (gm * ah + gp * bh[j]) / wh;
        let kap_f = -(gm * ch + gp * dh[j]) / wh;
        let gam_w = (cm * ah + cp * bh[j]) / wh;
        let k_f = -(cm * ch + cp * dh[j]) / wh;
        q[j] = dxi * (g_w + kap_f);
        r[j] = dxi * (gam_w + k_f);
    }
    (
        GridFunction::new(r, Ghost::ZERO),
        GridFunction::new(q, Ghost::ZERO),
    )
}

/// State derivative given precomputed forcing:
/// `zeta' = u`, `u' = -Q`, `H_j' = -u_j R_{j-1}`, `rbar' = -rho_inf D+u`.
pub fn state_rhs_with_rq(
    state: &LagrangianState,
    r: &GridFunction,
    q: &GridFunction,
) -> StateDeriv {
    let n = state.n();
    let du = state.u.fwd_diff(&state.grid);
    let mut dh = vec![0.0; n];
    for j in 0..n {
        dh[j] = -state.u.values[j] * r.at(j as isize - 1);
    }
    StateDeriv {
        dzeta: state.u.values.clone(),
        du: q.values.iter().map(|v| -v).collect(),
        dh,
        drbar: du.values.iter().map(|v| -state.rho_inf * v).collect(),
    }
}

/// State derivative of the closed system using the carried dense kernels.
pub fn state_rhs(sys: &SystemState) -> Result<StateDeriv> {
    let (r, q) = compute_rq(&sys.state, &sys.kernels)?;
    Ok(state_rhs_with_rq(&sys.state, &r, &q))
}

/// Time derivatives of the four kernels under the flow `(D+y)' = D+u`:
/// `g' = -(G D G + Gamma D Kappa)` and the three analogues, with
/// `D = dxi diag(D+u)`.
pub struct KernelDeriv {
    pub dg: Mat,
    pub dk: Mat,
    pub dgamma: Mat,
    pub dkappa: Mat,
}

pub fn kernel_rhs(kernels: &KernelSet, dpu: &GridFunction) -> Result<KernelDeriv> {
    let n = kernels.n();
    if dpu.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "D+u length {} vs kernel n {n}",
            dpu.len()
        )));
    }
    let d: Vec<f64> = dpu.values.iter().map(|v| v * kernels.dxi).collect();
    let prod2 = |x1: &Mat, y1: &Mat, x2: &Mat, y2: &Mat| -> Mat {
        let mut out = Mat::zeros(n);
        out.data_mut()
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| {
                for m in 0..n {
                    let c1 = x1[(i, m)] * d[m];
                    let c2 = x2[(i, m)] * d[m];
                    if c1 == 0.0 && c2 == 0.0 {
                        continue;
                    }
                    let r1 = y1.row(m);
                    let r2 = y2.row(m);
                    for j in 0..n {
                        row[j] -= c1 * r1[j] + c2 * r2[j];
                    }
                }
            });
        out
    };
    let (g, k, gm, kp) = (&kernels.g, &kernels.k, &kernels.gamma, &kernels.kappa);
    Ok(KernelDeriv {
        dg: prod2(g, g, gm, kp),
        dk: prod2(k, k, kp, gm),
        dgamma: prod2(gm, k, g, gm),
        dkappa: prod2(kp, g, k, kp),
    })
}

/// Discrete total energy carried by the window, `H_{n-1} - H_0` (the
/// telescoped sum of `dxi h_j` over interior cells). The fixed right ghost
/// of `H` would make the full ghost-closed sum constant by construction, so
/// the drift-sensitive reading stops at the last node.
pub fn hamiltonian(state: &LagrangianState) -> f64 {
    state.h_inf() - state.h_cum.values[0]
}

/// Energy recomputed from the primitive variables, for cross-checking;
/// degenerate cells contribute the `D+H` value instead of dividing.
pub fn hamiltonian_primitive(state: &LagrangianState) -> f64 {
    let a = state.dy();
    let du = state.u.fwd_diff(&state.grid);
    let h = state.h();
    let mut total = 0.0;
    for j in 0..state.n() {
        let aj = a.values[j];
        if aj > 1e-12 {
            let uj = state.u.values[j];
            let duj = du.values[j];
            let rj = state.rbar.values[j];
            total += 0.5 * (uj * uj * aj + (duj * duj + rj * rj) / aj);
        } else {
            total += h.values[j];
        }
    }
    total * state.grid.dxi
}

/// Translation invariant `I = dxi sum_j u_j (D+y)_j`.
pub fn momentum(state: &LagrangianState) -> f64 {
    let a = state.dy();
    state.grid.dxi
        * state
            .u
            .values
            .iter()
            .zip(&a.values)
            .map(|(u, a)| u * a)
            .sum::<f64>()
}

/// Default tolerance for the energy identity residual.
pub fn bid_tolerance(h_inf: f64) -> f64 {
    1e-8 * (1.0 + h_inf) * (1.0 + h_inf)
}

/// Validity report for the invariant solution set.
#[derive(Debug, Clone)]
pub struct SetBReport {
    /// max over j of `|2 (D+y)_j (D+H)_j - u_j^2 (D+y)_j^2 - (D+u_j)^2 - rbar_j^2|`
    pub bid_residual: f64,
    pub bid_tol: f64,
    pub min_dy: f64,
    pub min_dh: f64,
    pub min_dy_plus_dh: f64,
    pub eps_neg: f64,
    pub finite: bool,
    pub h_inf: f64,
    /// `dxi sum |u_j| |D+u_j|` (bounded by `h_inf`)
    pub udu_sum: f64,
    pub u_max: f64,
    /// max over j of `|rbar_j| - sqrt(2 (D+y)_j (D+H)_j)`, clamped at 0
    pub rbar_bound_excess: f64,
    pub kernel_identity: Option<f64>,
    pub kernel_symmetry: Option<(f64, f64, f64)>,
}

impl SetBReport {
    pub fn ok(&self) -> bool {
        self.finite
            && self.bid_residual <= self.bid_tol
            && self.min_dy >= -self.eps_neg
            && self.min_dh >= -self.eps_neg
            && self.min_dy_plus_dh > 0.0
            && self.udu_sum <= self.h_inf + 1e-9 * (1.0 + self.h_inf)
            && self.u_max <= (2.0 * self.h_inf).sqrt() + 1e-6
            && self.rbar_bound_excess <= 1e-6 * (1.0 + self.h_inf)
    }
}

/// Residual report for the solution-set membership conditions, the kernel
/// identities, and the derived a priori bounds.
pub fn validate_set_b(state: &LagrangianState, kernels: Option<&KernelSet>) -> SetBReport {
    let grid = &state.grid;
    let a = state.dy();
    let h = state.h();
    let du = state.u.fwd_diff(grid);
    let n = state.n();
    let mut bid = 0.0_f64;
    let mut min_dy = f64::INFINITY;
    let mut min_dh = f64::INFINITY;
    let mut min_sum = f64::INFINITY;
    let mut udu = 0.0;
    let mut rb_excess = 0.0_f64;
    for j in 0..n {
        let aj = a.values[j];
        let hj = h.values[j];
        let uj = state.u.values[j];
        let duj = du.values[j];
        let rj = state.rbar.values[j];
        bid = bid.max((2.0 * aj * hj - uj * uj * aj * aj - duj * duj - rj * rj).abs());
        min_dy = min_dy.min(aj);
        min_dh = min_dh.min(hj);
        min_sum = min_sum.min(aj + hj);
        udu += uj.abs() * duj.abs();
        let cap = (2.0 * aj.max(0.0) * hj.max(0.0)).sqrt();
        rb_excess = rb_excess.max(rj.abs() - cap);
    }
    let h_inf = state.h_inf();
    let dy_scale = a.values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    SetBReport {
        bid_residual: bid,
        bid_tol: bid_tolerance(h_inf),
        min_dy,
        min_dh,
        min_dy_plus_dh: min_sum,
        eps_neg: 1e-12 * dy_scale,
        finite: state.is_finite(),
        h_inf,
        udu_sum: grid.dxi * udu,
        u_max: state.u.norm(grid, NormKind::LInf).unwrap_or(f64::INFINITY),
        rbar_bound_excess: rb_excess.max(0.0),
        kernel_identity: kernels.map(|k| k.identity_residual()),
        kernel_symmetry: kernels.map(|k| k.symmetry_residual()),
    }
}

/// Residual of the first-order relation tying `R, Q` to the sources:
/// `-D-R + (D+y) Q = u D+u` and `(D+y) R - D+Q = h + rho_inf rbar`.
/// Edge rows use the kernel edge extension when present.
pub fn rq_relation_residual(
    state: &LagrangianState,
    kernels: &KernelSet,
    r: &GridFunction,
    q: &GridFunction,
) -> f64 {
    let n = state.n();
    let dxi = state.grid.dxi;
    let a = state.dy();
    let h = state.h();
    let du = state.u.fwd_diff(&state.grid);
    let (w, f) = {
        let mut w = vec![0.0; n];
        let mut f = vec![0.0; n];
        for j in 0..n {
            w[j] = state.u.values[j] * du.values[j];
            f[j] = h.values[j] + state.rho_inf * state.rbar.values[j];
        }
        (w, f)
    };
    // R_{-1} and Q_n from the kernel edge extension applied to the sources.
    let (r_left, q_right) = match &kernels.edges {
        Some(e) => {
            let mut rl = 0.0;
            let mut qr = 0.0;
            for i in 0..n {
                rl += e.gamma_left[i] * w[i] + e.k_left[i] * f[i];
                qr += e.g_right[i] * w[i] + e.kappa_right[i] * f[i];
            }
            (rl * dxi, qr * dxi)
        }
        None => (0.0, 0.0),
    };
    let jlo = if kernels.edges.is_some() { 0 } else { 1 };
    let jhi = if kernels.edges.is_some() { n } else { n - 1 };
    let mut worst = 0.0_f64;
    for j in jlo..jhi {
        let rm1 = if j == 0 { r_left } else { r.values[j - 1] };
        let qp1 = if j == n - 1 { q_right } else { q.values[j + 1] };
        let res1 = -(r.values[j] - rm1) / dxi + a.values[j] * q.values[j] - w[j];
        let res2 = a.values[j] * r.values[j] - (qp1 - q.values[j]) / dxi - f[j];
        worst = worst.max(res1.abs()).max(res2.abs());
    }
    worst
}
