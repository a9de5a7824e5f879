//! Fundamental solutions of the discrete momentum operator.
//!
//! For a nonnegative coefficient sequence `a` (in the dynamics, `a = D+y`),
//! the operator pair
//!
//! ```text
//! (A_a w)_j = a_j w_j - D-(D+ w_j / a_j)
//! (B_a w)_j = a_j w_j - D+(D- w_j / a_j)
//! ```
//!
//! admits four coupled kernels `g, k, gamma, kappa` satisfying
//!
//! ```text
//! [ -D_j-   a_j  ] [ gamma_ij  k_ij     ]    1  [ delta_ij  0        ]
//! [  a_j   -D_j+ ] [ g_ij      kappa_ij ] =  -- [ 0         delta_ij ]
//! ```
//!
//! They are built here from two homogeneous solutions obtained by
//! transfer-matrix shooting: one decaying to the right, one to the left,
//! seeded at the window edges with the decaying/growing eigenvectors of the
//! asymptotic (`a = 1`) transfer matrix. The growing magnitudes are kept in a
//! mantissa + log-scale representation so that arbitrarily wide windows never
//! overflow; final kernel entries are scale-free because the construction
//! divides by the Wronskian of the two solutions.

use rayon::prelude::*;

use crate::grid::{Ghost, Grid, GridFunction, Mat};
use crate::{Error, Result};

/// How often the propagated 2-vector is renormalized to unit max-norm.
const RENORM_EVERY: usize = 64;
/// Relative threshold below which the Wronskian counts as degenerate.
const WRONSKIAN_REL_TOL: f64 = 1e-12;

/// 2x2 one-step propagator of the homogeneous problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub m: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferForm {
    /// `A_j`, stepping `(g_j, gamma_{j-1})` to `(g_{j+1}, gamma_j)`.
    Forward,
    /// `B_j`, stepping `(g_{j+1}, -gamma_j)` to `(g_j, -gamma_{j-1})`.
    Backward,
}

impl TransferMatrix {
    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }
}

pub fn transfer_matrix(a_j: f64, dxi: f64, form: TransferForm) -> Result<TransferMatrix> {
    if a_j < 0.0 || !a_j.is_finite() {
        return Err(Error::NegativeCoefficient(0));
    }
    let e = a_j * dxi;
    let m = match form {
        TransferForm::Forward => [[1.0 + e * e, e], [e, 1.0]],
        TransferForm::Backward => [[1.0, e], [e, 1.0 + e * e]],
    };
    Ok(TransferMatrix { m })
}

/// Eigenvalues `(lambda-, lambda+)` of the transfer matrix,
/// `lambda+- = 1 + (a dxi)^2/2 +- (a dxi / 2) sqrt(4 + (a dxi)^2)`.
pub fn transfer_eigs(a_j: f64, dxi: f64) -> (f64, f64) {
    let e = a_j * dxi;
    let root = (4.0 + e * e).sqrt();
    let plus = 1.0 + 0.5 * e * e + 0.5 * e * root;
    // lambda- = 1/lambda+ exactly in the algebra; dividing keeps the product
    // at 1 to rounding instead of cancelling in the subtraction.
    (1.0 / plus, plus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Seeded at the left edge; the returned pair decays as `j -> -inf`.
    Left,
    /// Seeded at the right edge; the returned pair decays as `j -> +inf`.
    Right,
}

/// One homogeneous solution in mantissa/log-scale form. State `t` in `0..=n`
/// owns the pair `(g_t, gamma_{t-1})`; its true values are the stored
/// mantissas times `exp(s[t])`.
#[derive(Debug, Clone)]
pub struct Shot {
    g: Vec<f64>,
    c: Vec<f64>,
    s: Vec<f64>,
}

impl Shot {
    /// Mantissa of `g_t`, `t` in `0..=n`.
    #[inline]
    fn g_mant(&self, t: usize) -> f64 {
        self.g[t]
    }

    /// Mantissa of `gamma_j`, `j` in `-1..=n-1` (owned by state `j + 1`).
    #[inline]
    fn c_mant_at(&self, j: isize) -> f64 {
        self.c[(j + 1) as usize]
    }

    #[inline]
    fn scale(&self, t: usize) -> f64 {
        self.s[t]
    }
}

/// Both homogeneous solutions plus per-state Wronskian mantissas.
#[derive(Debug, Clone)]
pub struct ShotPair {
    pub n: usize,
    pub dxi: f64,
    minus: Shot,
    plus: Shot,
    /// `wh[t] = gm_t * cp_t - gp_t * cm_t` (state-`t` mantissas); the true
    /// Wronskian is `wh[t] * exp(sm[t] + sp[t])`, constant over `t`.
    wh: Vec<f64>,
}

fn seed(dxi: f64, side: Side) -> [f64; 2] {
    let (lm, lp) = transfer_eigs(1.0, dxi);
    match side {
        // r+ : eigenvector of the asymptotic matrix for lambda+; a solution
        // proportional to it grows to the right, i.e. decays to the left.
        Side::Left => [1.0 / (1.0 + lm).sqrt(), 1.0 / (1.0 + lp).sqrt()],
        // r- : eigenvector for lambda-, decaying to the right.
        Side::Right => [1.0 / (1.0 + lp).sqrt(), -1.0 / (1.0 + lm).sqrt()],
    }
}

fn shoot(grid: &Grid, a: &GridFunction, side: Side) -> Result<Shot> {
    let n = grid.n;
    if a.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "coefficient length {} vs grid n {}",
            a.len(),
            n
        )));
    }
    for (j, &aj) in a.values.iter().enumerate() {
        if !(aj >= 0.0) || !aj.is_finite() {
            return Err(Error::NegativeCoefficient(j));
        }
    }
    let dxi = grid.dxi;
    let mut g = vec![0.0; n + 1];
    let mut c = vec![0.0; n + 1];
    let mut s = vec![0.0; n + 1];
    let mut v = seed(dxi, side);
    let mut logscale = 0.0_f64;
    let record = |t: usize, v: [f64; 2], ls: f64, g: &mut [f64], c: &mut [f64], s: &mut [f64]| {
        g[t] = v[0];
        c[t] = v[1];
        s[t] = ls;
    };
    let renorm = |v: &mut [f64; 2], ls: &mut f64| {
        let m = v[0].abs().max(v[1].abs());
        if m > 0.0 {
            v[0] /= m;
            v[1] /= m;
            *ls += m.ln();
        }
    };
    match side {
        Side::Left => {
            record(0, v, logscale, &mut g, &mut c, &mut s);
            for j in 0..n {
                let e = a.values[j] * dxi;
                v = [(1.0 + e * e) * v[0] + e * v[1], e * v[0] + v[1]];
                if (j + 1) % RENORM_EVERY == 0 || v[0].abs().max(v[1].abs()) > 1e120 {
                    renorm(&mut v, &mut logscale);
                }
                record(j + 1, v, logscale, &mut g, &mut c, &mut s);
            }
        }
        Side::Right => {
            record(n, v, logscale, &mut g, &mut c, &mut s);
            for step in 0..n {
                let j = n - 1 - step;
                let e = a.values[j] * dxi;
                // inverse of the forward matrix (det = 1)
                v = [v[0] - e * v[1], -e * v[0] + (1.0 + e * e) * v[1]];
                if (step + 1) % RENORM_EVERY == 0 || v[0].abs().max(v[1].abs()) > 1e120 {
                    renorm(&mut v, &mut logscale);
                }
                record(j, v, logscale, &mut g, &mut c, &mut s);
            }
        }
    }
    Ok(Shot { g, c, s })
}

/// Shoot both homogeneous solutions and check the Wronskian.
pub fn shoot_pair(grid: &Grid, a: &GridFunction) -> Result<ShotPair> {
    let minus = shoot(grid, a, Side::Right)?;
    let plus = shoot(grid, a, Side::Left)?;
    let n = grid.n;
    let mut wh = vec![0.0; n + 1];
    for t in 0..=n {
        let t1 = minus.g_mant(t) * plus.c[t];
        let t2 = plus.g_mant(t) * minus.c[t];
        wh[t] = t1 - t2;
        if wh[t].abs() <= WRONSKIAN_REL_TOL * (t1.abs() + t2.abs()) {
            return Err(Error::DegenerateWronskian);
        }
    }
    Ok(ShotPair {
        n,
        dxi: grid.dxi,
        minus,
        plus,
        wh,
    })
}

impl ShotPair {
    /// Mantissa of the right-decaying `g` at index `j` in `0..=n`.
    #[inline]
    pub fn g_mant_minus(&self, j: usize) -> f64 {
        self.minus.g_mant(j)
    }

    /// Mantissa of the left-decaying `g` at index `j` in `0..=n`.
    #[inline]
    pub fn g_mant_plus(&self, j: usize) -> f64 {
        self.plus.g_mant(j)
    }

    /// Mantissa of the right-decaying `gamma` at cell `j` in `-1..=n-1`;
    /// its log scale is `scale_minus(j + 1)`.
    #[inline]
    pub fn c_mant_minus(&self, j: isize) -> f64 {
        self.minus.c_mant_at(j)
    }

    /// Mantissa of the left-decaying `gamma` at cell `j` in `-1..=n-1`;
    /// its log scale is `scale_plus(j + 1)`.
    #[inline]
    pub fn c_mant_plus(&self, j: isize) -> f64 {
        self.plus.c_mant_at(j)
    }

    /// Log scale owning state `t` of the right-decaying solution.
    #[inline]
    pub fn scale_minus(&self, t: usize) -> f64 {
        self.minus.scale(t)
    }

    /// Log scale owning state `t` of the left-decaying solution.
    #[inline]
    pub fn scale_plus(&self, t: usize) -> f64 {
        self.plus.scale(t)
    }

    /// Wronskian mantissa anchored at state `t`; the true Wronskian is this
    /// times `exp(scale_minus(t) + scale_plus(t))`.
    #[inline]
    pub fn wronskian_mant(&self, t: usize) -> f64 {
        self.wh[t]
    }

    /// `g_{i,j}` for `i` in the window and `j` in `0..=n`.
    pub fn g(&self, i: usize, j: isize) -> f64 {
        debug_assert!(j >= 0);
        let (m, p, w) = (&self.minus, &self.plus, &self.wh);
        if j >= i as isize {
            let j = j as usize;
            (m.g_mant(j) * p.g_mant(i) / w[i]) * (m.scale(j) - m.scale(i)).exp()
        } else {
            let j = j as usize;
            (p.g_mant(j) * m.g_mant(i) / w[i]) * (p.scale(j) - p.scale(i)).exp()
        }
    }

    /// `gamma_{i,j}` for `j` in `-1..=n-1`.
    pub fn gamma(&self, i: usize, j: isize) -> f64 {
        let (m, p, w) = (&self.minus, &self.plus, &self.wh);
        if j >= i as isize {
            let t = (j + 1) as usize;
            (m.c_mant_at(j) * p.g_mant(i) / w[i]) * (m.scale(t) - m.scale(i)).exp()
        } else {
            let t = (j + 1) as usize;
            (p.c_mant_at(j) * m.g_mant(i) / w[i]) * (p.scale(t) - p.scale(i)).exp()
        }
    }

    /// `k_{i,j}` for `j` in `-1..=n-1` (the `j = n` value is not needed).
    pub fn k(&self, i: usize, j: isize) -> f64 {
        let (m, p, w) = (&self.minus, &self.plus, &self.wh);
        let ti = i + 1;
        if j > i as isize {
            let t = (j + 1) as usize;
            -(m.c_mant_at(j) * p.c_mant_at(i as isize) / w[ti]) * (m.scale(t) - m.scale(ti)).exp()
        } else {
            let t = (j + 1) as usize;
            -(p.c_mant_at(j) * m.c_mant_at(i as isize) / w[ti]) * (p.scale(t) - p.scale(ti)).exp()
        }
    }

    /// `kappa_{i,j}` for `j` in `0..=n`.
    pub fn kappa(&self, i: usize, j: isize) -> f64 {
        let (m, p, w) = (&self.minus, &self.plus, &self.wh);
        let ti = i + 1;
        if j > i as isize {
            let j = j as usize;
            -(m.g_mant(j) * p.c_mant_at(i as isize) / w[ti]) * (m.scale(j) - m.scale(ti)).exp()
        } else {
            let j = j as usize;
            -(p.g_mant(j) * m.c_mant_at(i as isize) / w[ti]) * (p.scale(j) - p.scale(ti)).exp()
        }
    }

    fn normalized_window(&self, side: Side) -> (GridFunction, GridFunction) {
        let shot = match side {
            Side::Left => &self.plus,
            Side::Right => &self.minus,
        };
        normalized_window_of(shot, self.n)
    }
}

/// Window view of a shot, peak-normalized so the largest magnitude among all
/// returned entries is 1.
fn normalized_window_of(shot: &Shot, n: usize) -> (GridFunction, GridFunction) {
    let mut lmax = f64::NEG_INFINITY;
    for t in 0..=n {
        let gm = shot.g_mant(t).abs();
        let cm = shot.c[t].abs();
        let s = shot.scale(t);
        if gm > 0.0 {
            lmax = lmax.max(gm.ln() + s);
        }
        if cm > 0.0 {
            lmax = lmax.max(cm.ln() + s);
        }
    }
    let rescale = |mant: f64, s: f64| -> f64 {
        if mant == 0.0 {
            0.0
        } else {
            mant.signum() * (mant.abs().ln() + s - lmax).exp()
        }
    };
    let mut gv = vec![0.0; n];
    let mut cv = vec![0.0; n];
    for j in 0..n {
        gv[j] = rescale(shot.g_mant(j), shot.scale(j));
        cv[j] = rescale(shot.c_mant_at(j as isize), shot.scale(j + 1));
    }
    (
        GridFunction::new(gv, Ghost::ZERO),
        GridFunction::new(cv, Ghost::ZERO),
    )
}

/// Homogeneous solution decaying on the requested side, as plain sequences
/// `(g, gamma)` over the window, peak-normalized. The overall scale of a
/// single solution is arbitrary; kernels built from the pair are scale-free.
pub fn shoot_decaying(
    grid: &Grid,
    a: &GridFunction,
    side: Side,
) -> Result<(GridFunction, GridFunction)> {
    let shot = shoot(grid, a, side)?;
    Ok(normalized_window_of(&shot, grid.n))
}

/// Discrete Wronskian `W = gm_at * cp_at - gp_at * cm_at` of two homogeneous
/// solutions sampled at a common index.
pub fn wronskian(
    gm: &GridFunction,
    cm: &GridFunction,
    gp: &GridFunction,
    cp: &GridFunction,
    at: usize,
) -> Result<f64> {
    let t1 = gm.values[at] * cp.values[at];
    let t2 = gp.values[at] * cm.values[at];
    let w = t1 - t2;
    if w.abs() <= WRONSKIAN_REL_TOL * (t1.abs() + t2.abs()) {
        return Err(Error::DegenerateWronskian);
    }
    Ok(w)
}

/// Extension values just outside the window, needed to evaluate the kernel
/// identity at the boundary rows.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEdges {
    /// `g_{i,n}`
    pub g_right: Vec<f64>,
    /// `gamma_{i,-1}`
    pub gamma_left: Vec<f64>,
    /// `k_{i,-1}`
    pub k_left: Vec<f64>,
    /// `kappa_{i,n}`
    pub kappa_right: Vec<f64>,
}

/// The four kernels on the window, the coefficient they were built from (or
/// last validated against) and the Wronskian normalization.
#[derive(Debug, Clone)]
pub struct KernelSet {
    pub dxi: f64,
    pub g: Mat,
    pub k: Mat,
    pub gamma: Mat,
    pub kappa: Mat,
    pub a: GridFunction,
    /// Wronskian of the peak-normalized homogeneous pair; NaN for kernel sets
    /// not produced by shooting (the kernels themselves are normalization
    /// independent).
    pub wronskian_value: f64,
    pub edges: Option<KernelEdges>,
}

impl KernelSet {
    pub fn n(&self) -> usize {
        self.g.n()
    }

    /// Max residual of the four defining relations over all columns. With
    /// edge extensions present the boundary rows are included; otherwise the
    /// check is restricted to the interior rows that do not reference values
    /// outside the window.
    pub fn identity_residual(&self) -> f64 {
        let n = self.n();
        let dxi = self.dxi;
        let a = &self.a;
        let inv = 1.0 / dxi;
        let mut worst = 0.0_f64;
        for i in 0..n {
            let (jlo, jhi) = if self.edges.is_some() {
                (0, n)
            } else {
                (1, n - 1)
            };
            for j in jlo..jhi {
                let gm1 = if j == 0 {
                    self.edges.as_ref().map(|e| e.gamma_left[i]).unwrap_or(0.0)
                } else {
                    self.gamma[(i, j - 1)]
                };
                let km1 = if j == 0 {
                    self.edges.as_ref().map(|e| e.k_left[i]).unwrap_or(0.0)
                } else {
                    self.k[(i, j - 1)]
                };
                let gp1 = if j + 1 == n {
                    self.edges.as_ref().map(|e| e.g_right[i]).unwrap_or(0.0)
                } else {
                    self.g[(i, j + 1)]
                };
                let kp1 = if j + 1 == n {
                    self.edges.as_ref().map(|e| e.kappa_right[i]).unwrap_or(0.0)
                } else {
                    self.kappa[(i, j + 1)]
                };
                let aj = a.values[j];
                let delta = if i == j { inv } else { 0.0 };
                let r1 = aj * self.g[(i, j)] - (self.gamma[(i, j)] - gm1) * inv - delta;
                let r2 = aj * self.gamma[(i, j)] - (gp1 - self.g[(i, j)]) * inv;
                let r3 = aj * self.kappa[(i, j)] - (self.k[(i, j)] - km1) * inv;
                let r4 = aj * self.k[(i, j)] - (kp1 - self.kappa[(i, j)]) * inv - delta;
                worst = worst
                    .max(r1.abs())
                    .max(r2.abs())
                    .max(r3.abs())
                    .max(r4.abs());
            }
        }
        worst
    }

    /// `(|g - g^T|, |k - k^T|, |gamma^T + kappa|)` max entrywise gaps.
    pub fn symmetry_residual(&self) -> (f64, f64, f64) {
        let n = self.n();
        let sg = self.g.asymmetry();
        let sk = self.k.asymmetry();
        let mut sx = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                sx = sx.max((self.gamma[(j, i)] + self.kappa[(i, j)]).abs());
            }
        }
        (sg, sk, sx)
    }
}

/// Build the kernels for a nonnegative coefficient sequence. The asymptotic
/// closure always assumes `a = 1` outside the window, which is exact when the
/// coefficient actually settles to 1 there and exponentially accurate
/// otherwise.
pub fn build_kernels(grid: &Grid, a: &GridFunction) -> Result<KernelSet> {
    let pair = shoot_pair(grid, a)?;
    Ok(assemble_kernels(grid, a, &pair))
}

/// Dense assembly from an existing shot pair.
pub fn assemble_kernels(grid: &Grid, a: &GridFunction, pair: &ShotPair) -> KernelSet {
    let n = grid.n;
    let mut g = Mat::zeros(n);
    let mut k = Mat::zeros(n);
    let mut gamma = Mat::zeros(n);
    let mut kappa = Mat::zeros(n);
    let fill = |m: &mut Mat, f: &(dyn Fn(usize, isize) -> f64 + Sync)| {
        m.data_mut()
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| {
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = f(i, j as isize);
                }
            });
    };
    fill(&mut g, &|i, j| pair.g(i, j));
    fill(&mut k, &|i, j| pair.k(i, j));
    fill(&mut gamma, &|i, j| pair.gamma(i, j));
    fill(&mut kappa, &|i, j| pair.kappa(i, j));
    let edges = KernelEdges {
        g_right: (0..n).map(|i| pair.g(i, n as isize)).collect(),
        gamma_left: (0..n).map(|i| pair.gamma(i, -1)).collect(),
        k_left: (0..n).map(|i| pair.k(i, -1)).collect(),
        kappa_right: (0..n).map(|i| pair.kappa(i, n as isize)).collect(),
    };
    // Report the Wronskian of the peak-normalized pair at the window center.
    let c = n / 2;
    let (gmn, cmn) = pair.normalized_window(Side::Right);
    let (gpn, cpn) = pair.normalized_window(Side::Left);
    let wronskian_value = gmn.values[c] * cpn.values[c] - gpn.values[c] * cmn.values[c];
    KernelSet {
        dxi: grid.dxi,
        g,
        k,
        gamma,
        kappa,
        a: a.clone(),
        wronskian_value,
        edges: Some(edges),
    }
}

/// Closed-form constant-coefficient kernel
/// `g_j = (4 + dxi^2)^(-1/2) (1 + dxi^2/2 + (dxi/2) sqrt(4 + dxi^2))^(-|j|)`.
pub fn constant_greens(dxi: f64, j: i64) -> f64 {
    let root = (4.0 + dxi * dxi).sqrt();
    let lambda_plus = 1.0 + 0.5 * dxi * dxi + 0.5 * dxi * root;
    lambda_plus.powi(-(j.abs() as i32)) / root
}

/// Single kernel column by an independent banded linear solve; thin wrapper
/// over the oracle machinery so tests can cross-check the shooting path.
pub fn dense_solve_column(grid: &Grid, a: &GridFunction, i: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    crate::reference::solve_g_column(grid, a, i)
}
