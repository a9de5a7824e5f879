//! Uniform label grid, finite differences, window-restricted norms and the
//! kernel summation primitive shared by every other module.
//!
//! The infinite lattice of the semi-discrete scheme is truncated to a window
//! of `n` cells. Every grid function carries an explicit ghost policy telling
//! the difference operators what the sequence looks like outside the window,
//! so truncation stays an explicit modeling choice rather than an implicit
//! zero fill.

use crate::{Error, Result};

/// Uniform grid `xi_j = xi0 + j * dxi`, `j = 0..n-1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub dxi: f64,
    pub xi0: f64,
}

impl Grid {
    pub fn new(n: usize, dxi: f64, xi0: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("n = {n}, need n >= 3")));
        }
        if !(dxi > 0.0) || !dxi.is_finite() {
            return Err(Error::InvalidGrid(format!("dxi = {dxi}, need dxi > 0")));
        }
        if !xi0.is_finite() {
            return Err(Error::InvalidGrid(format!("xi0 = {xi0}")));
        }
        Ok(Grid { n, dxi, xi0 })
    }

    #[inline]
    pub fn xi(&self, j: usize) -> f64 {
        self.xi0 + j as f64 * self.dxi
    }

    /// Coordinate of the right window edge `xi_n` (one past the last node).
    #[inline]
    pub fn xi_end(&self) -> f64 {
        self.xi0 + self.n as f64 * self.dxi
    }
}

/// Out-of-window extension of a grid function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ghost {
    /// Fixed asymptotic constants on each side.
    Const { left: f64, right: f64 },
    /// Repeat the first/last window value (used for `zeta` and `H`, whose
    /// asymptotic plateaus move with the solution).
    Clamp,
}

impl Ghost {
    pub const ZERO: Ghost = Ghost::Const {
        left: 0.0,
        right: 0.0,
    };
}

/// A real sequence attached to the grid window plus its ghost policy.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<f64>,
    pub ghost: Ghost,
}

impl GridFunction {
    pub fn new(values: Vec<f64>, ghost: Ghost) -> Self {
        GridFunction { values, ghost }
    }

    pub fn zeros(n: usize) -> Self {
        GridFunction::new(vec![0.0; n], Ghost::ZERO)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn left_ghost(&self) -> f64 {
        match self.ghost {
            Ghost::Const { left, .. } => left,
            Ghost::Clamp => *self.values.first().unwrap_or(&0.0),
        }
    }

    pub fn right_ghost(&self) -> f64 {
        match self.ghost {
            Ghost::Const { right, .. } => right,
            Ghost::Clamp => *self.values.last().unwrap_or(&0.0),
        }
    }

    /// Value at signed index `j`, using ghosts outside `0..n-1`.
    #[inline]
    pub fn at(&self, j: isize) -> f64 {
        if j < 0 {
            self.left_ghost()
        } else if (j as usize) < self.values.len() {
            self.values[j as usize]
        } else {
            self.right_ghost()
        }
    }

    /// Forward difference `(D+ v)_j = (v_{j+1} - v_j) / dxi`.
    pub fn fwd_diff(&self, grid: &Grid) -> GridFunction {
        let n = self.values.len();
        let mut out = vec![0.0; n];
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = (self.at(j as isize + 1) - self.values[j]) / grid.dxi;
        }
        GridFunction::new(out, Ghost::ZERO)
    }

    /// Backward difference `(D- v)_j = (v_j - v_{j-1}) / dxi`.
    pub fn bwd_diff(&self, grid: &Grid) -> GridFunction {
        let n = self.values.len();
        let mut out = vec![0.0; n];
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = (self.values[j] - self.at(j as isize - 1)) / grid.dxi;
        }
        GridFunction::new(out, Ghost::ZERO)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Window-restricted norm. `H1` and `Vd` apply `D+` with the ghost
    /// policy, so they are meaningful for sequences that settle to their
    /// ghost constants inside the window.
    pub fn norm(&self, grid: &Grid, kind: NormKind) -> Result<f64> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("norm input"));
        }
        let dxi = grid.dxi;
        let val = match kind {
            NormKind::L1 => self.values.iter().map(|v| v.abs()).sum::<f64>() * dxi,
            NormKind::L2 => (self.values.iter().map(|v| v * v).sum::<f64>() * dxi).sqrt(),
            NormKind::LInf => self.max_abs(),
            NormKind::H1 => {
                let d = self.fwd_diff(grid);
                let s: f64 = self
                    .values
                    .iter()
                    .zip(&d.values)
                    .map(|(v, dv)| v * v + dv * dv)
                    .sum();
                (s * dxi).sqrt()
            }
            NormKind::Vd => {
                let d = self.fwd_diff(grid);
                self.max_abs() + d.norm(grid, NormKind::L2)?
            }
        };
        Ok(val)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    LInf,
    H1,
    Vd,
}

/// Dense square matrix in row-major order; `K[(i, j)]` is centered at row
/// index `i` and evaluated at column index `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    n: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Max entrywise deviation from the own transpose.
    pub fn asymmetry(&self) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Kernel action `(K * f)_j = dxi * sum_i K[(i, j)] f_i`.
pub fn kernel_apply(kernel: &Mat, f: &GridFunction, dxi: f64) -> Result<GridFunction> {
    let n = kernel.n();
    if f.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "kernel is {n}x{n}, sequence has length {}",
            f.len()
        )));
    }
    let mut out = vec![0.0; n];
    for i in 0..n {
        let fi = f.values[i];
        if fi == 0.0 {
            continue;
        }
        let row = kernel.row(i);
        for (o, k) in out.iter_mut().zip(row) {
            *o += k * fi;
        }
    }
    for o in &mut out {
        *o *= dxi;
    }
    Ok(GridFunction::new(out, Ghost::ZERO))
}

/// Row operator norm `sup_i (dxi * sum_j |K[(i,j)]|^p)^(1/p)`; columns when
/// `transpose` is set. `p = inf` gives the plain sup of absolute entries.
pub fn kernel_norm(kernel: &Mat, dxi: f64, p: f64, transpose: bool) -> f64 {
    let n = kernel.n();
    if p.is_infinite() {
        return kernel.max_abs();
    }
    let mut worst = 0.0_f64;
    for a in 0..n {
        let mut s = 0.0;
        for b in 0..n {
            let v = if transpose {
                kernel[(b, a)]
            } else {
                kernel[(a, b)]
            };
            s += v.abs().powf(p);
        }
        worst = worst.max((dxi * s).powf(1.0 / p));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, dxi: f64) -> Grid {
        Grid::new(n, dxi, 0.0).unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(Grid::new(2, 0.1, 0.0).is_err());
        assert!(Grid::new(8, 0.0, 0.0).is_err());
        assert!(Grid::new(8, -1.0, 0.0).is_err());
        assert!(Grid::new(8, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn fwd_diff_of_constant_is_zero() {
        let g = grid(16, 0.25);
        let v = GridFunction::new(
            vec![3.5; 16],
            Ghost::Const {
                left: 3.5,
                right: 3.5,
            },
        );
        let d = v.fwd_diff(&g);
        assert!(d.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fwd_diff_of_identity_is_one() {
        let g = grid(16, 0.25);
        // xi_j itself, ghosts extending linearly: emulate by Const ghosts one
        // step beyond the window values.
        let vals: Vec<f64> = (0..16).map(|j| g.xi(j)).collect();
        let v = GridFunction::new(
            vals,
            Ghost::Const {
                left: g.xi0 - g.dxi,
                right: g.xi_end(),
            },
        );
        let d = v.fwd_diff(&g);
        for &x in &d.values {
            assert!((x - 1.0).abs() < 1e-13);
        }
        let b = v.bwd_diff(&g);
        for &x in &b.values {
            assert!((x - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn fwd_diff_spike_hand_value() {
        let g = grid(3, 0.5);
        let v = GridFunction::new(vec![0.0, 1.0, 0.0], Ghost::ZERO);
        let d = v.fwd_diff(&g);
        assert_eq!(d.values, vec![2.0, -2.0, 0.0]);
    }

    #[test]
    fn product_rule_exact() {
        let g = grid(32, 0.125);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = GridFunction::new(
            (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            Ghost::ZERO,
        );
        let w = GridFunction::new(
            (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            Ghost::ZERO,
        );
        let vw = GridFunction::new(
            v.values.iter().zip(&w.values).map(|(a, b)| a * b).collect(),
            Ghost::ZERO,
        );
        let dv = v.fwd_diff(&g);
        let dw = w.fwd_diff(&g);
        let dvw = vw.fwd_diff(&g);
        for j in 0..32 {
            let rhs = dv.values[j] * w.at(j as isize + 1) + v.values[j] * dw.values[j];
            assert!((dvw.values[j] - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn summation_by_parts() {
        // dxi (sum (D+a) b + sum a (D-b)) = a_{n+1} b_n - a_m b_{m-1} for
        // compactly supported a, b: with zero ghosts both boundary terms die.
        let g = grid(64, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut av = vec![0.0; 64];
        let mut bv = vec![0.0; 64];
        for j in 8..56 {
            av[j] = rng.gen_range(-2.0..2.0);
            bv[j] = rng.gen_range(-2.0..2.0);
        }
        let a = GridFunction::new(av, Ghost::ZERO);
        let b = GridFunction::new(bv, Ghost::ZERO);
        let da = a.fwd_diff(&g);
        let db = b.bwd_diff(&g);
        let mut s = 0.0;
        for j in 0..64 {
            s += da.values[j] * b.values[j] + a.values[j] * db.values[j];
        }
        s *= g.dxi;
        let scale: f64 = a.max_abs() * b.max_abs();
        assert!(s.abs() <= 1e-12 * scale.max(1.0), "defect {s}");
    }

    #[test]
    fn norms_zero_and_spike() {
        let g = grid(9, 1.0);
        let z = GridFunction::zeros(9);
        for kind in [
            NormKind::L1,
            NormKind::L2,
            NormKind::LInf,
            NormKind::H1,
            NormKind::Vd,
        ] {
            assert_eq!(z.norm(&g, kind).unwrap(), 0.0);
        }
        let mut sv = vec![0.0; 9];
        sv[4] = 1.0;
        let s = GridFunction::new(sv, Ghost::ZERO);
        assert_eq!(s.norm(&g, NormKind::L1).unwrap(), 1.0);
        assert_eq!(s.norm(&g, NormKind::L2).unwrap(), 1.0);
        assert_eq!(s.norm(&g, NormKind::LInf).unwrap(), 1.0);
    }

    #[test]
    fn norm_rejects_non_finite() {
        let g = grid(4, 1.0);
        let v = GridFunction::new(vec![0.0, f64::NAN, 0.0, 0.0], Ghost::ZERO);
        assert!(matches!(v.norm(&g, NormKind::L2), Err(Error::NonFinite(_))));
    }

    #[test]
    fn sobolev_bound_on_random_decaying_sequences() {
        let g = grid(128, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let vals: Vec<f64> = (0..128)
                .map(|j| {
                    let x = (j as f64 - 64.0) * g.dxi;
                    rng.gen_range(-1.0..1.0) * (-x.abs()).exp()
                })
                .collect();
            let v = GridFunction::new(vals, Ghost::ZERO);
            let linf = v.norm(&g, NormKind::LInf).unwrap();
            let h1 = v.norm(&g, NormKind::H1).unwrap();
            assert!(
                linf <= h1 / 2.0_f64.sqrt() + 1e-12,
                "sup {linf} exceeds {h1}/sqrt(2)"
            );
        }
    }

    #[test]
    fn kernel_apply_delta_and_zero() {
        let g = grid(12, 0.5);
        let mut ident = Mat::zeros(12);
        for i in 0..12 {
            ident[(i, i)] = 1.0 / g.dxi;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = GridFunction::new(
            (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            Ghost::ZERO,
        );
        let out = kernel_apply(&ident, &f, g.dxi).unwrap();
        for j in 0..12 {
            assert!((out.values[j] - f.values[j]).abs() < 1e-14);
        }
        let zero = Mat::zeros(12);
        let out = kernel_apply(&zero, &f, g.dxi).unwrap();
        assert!(out.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn kernel_apply_dimension_mismatch() {
        let k = Mat::zeros(4);
        let f = GridFunction::zeros(5);
        assert!(kernel_apply(&k, &f, 1.0).is_err());
    }

    #[test]
    fn young_inequality_random_draws() {
        // |K * f|_r <= |K|_q^(q/r) |K^T|_q^(1-q/r) |f|_p, 1 + 1/r = 1/p + 1/q.
        let n = 8;
        let g = grid(n, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let inf = f64::INFINITY;
        for (r, p, q) in [
            (2.0_f64, 2.0_f64, 1.0_f64),
            (inf, 2.0, 2.0),
            (inf, 1.0, inf),
        ] {
            for _ in 0..100 {
                let mut k = Mat::zeros(n);
                for i in 0..n {
                    for j in 0..n {
                        k[(i, j)] = rng.gen_range(-1.0..1.0);
                    }
                }
                let f = GridFunction::new(
                    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    Ghost::ZERO,
                );
                let h = kernel_apply(&k, &f, g.dxi).unwrap();
                let lhs = if r.is_infinite() {
                    h.norm(&g, NormKind::LInf).unwrap()
                } else {
                    h.norm(&g, NormKind::L2).unwrap()
                };
                let nf = if p.is_infinite() {
                    f.norm(&g, NormKind::LInf).unwrap()
                } else if p == 1.0 {
                    f.norm(&g, NormKind::L1).unwrap()
                } else {
                    f.norm(&g, NormKind::L2).unwrap()
                };
                let exponent = if q.is_infinite() && r.is_infinite() {
                    1.0
                } else if r.is_infinite() {
                    0.0
                } else {
                    q / r
                };
                let rhs = kernel_norm(&k, g.dxi, q, false).powf(exponent)
                    * kernel_norm(&k, g.dxi, q, true).powf(1.0 - exponent)
                    * nf;
                assert!(
                    lhs <= rhs * (1.0 + 1e-12) + 1e-300,
                    "Young violated: lhs {lhs} rhs {rhs} (r={r}, p={p}, q={q})"
                );
            }
        }
    }
}
