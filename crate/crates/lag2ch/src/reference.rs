//! Independent slow oracles used by the test suite: a tridiagonal
//! linear-system route to the kernels (no shooting), adaptive quadrature for
//! continuum energies, and a finite-difference derivative checker.
//!
//! The kernel oracle assembles, for each center `i`, the first-order relations
//!
//! ```text
//! a_j g_j - (gamma_j - gamma_{j-1})/dxi = delta_ij/dxi
//! a_j gamma_j - (g_{j+1} - g_j)/dxi    = 0
//! ```
//!
//! over the window, closed at the edges by requiring the boundary pair to be
//! parallel to the decaying/growing eigenvector of the asymptotic transfer
//! matrix. Interleaving the unknowns makes the system tridiagonal; it is
//! solved by LU with partial pivoting, which handles `a_j = 0` rows without
//! special-casing. No code is shared with the shooting construction.

use rayon::prelude::*;

use crate::greens::{transfer_eigs, KernelEdges, KernelSet};
use crate::grid::{Grid, GridFunction, Mat};
use crate::{Error, Result};

/// Tridiagonal solve with partial pivoting (LAPACK `gttrf`/`gtts2` scheme).
/// `dl`, `d`, `du` are the sub-, main and super-diagonal; `b` is overwritten
/// with the solution.
fn solve_tridiag(dl: &mut [f64], d: &mut [f64], du: &mut [f64], b: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut swapped = vec![false; n.saturating_sub(1)];
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                return Err(Error::SingularSystem(format!("zero pivot at row {i}")));
            }
            let fact = dl[i] / d[i];
            dl[i] = fact;
            d[i + 1] -= fact * du[i];
            if i + 2 < n {
                du2[i] = 0.0;
            }
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            dl[i] = fact;
            let tmp = du[i];
            du[i] = d[i + 1];
            d[i + 1] = tmp - fact * d[i + 1];
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] *= -fact;
            }
            swapped[i] = true;
        }
    }
    if d[n - 1] == 0.0 {
        return Err(Error::SingularSystem("zero pivot at last row".into()));
    }
    for i in 0..n - 1 {
        if swapped[i] {
            let tmp = b[i];
            b[i] = b[i + 1];
            b[i + 1] = tmp - dl[i] * b[i];
        } else {
            b[i + 1] -= dl[i] * b[i];
        }
    }
    b[n - 1] /= d[n - 1];
    if n > 1 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
    Ok(())
}

fn check_coeff(grid: &Grid, a: &GridFunction) -> Result<()> {
    if a.len() != grid.n {
        return Err(Error::DimensionMismatch(format!(
            "coefficient length {} vs grid n {}",
            a.len(),
            grid.n
        )));
    }
    for (j, &aj) in a.values.iter().enumerate() {
        if !(aj >= 0.0) || !aj.is_finite() {
            return Err(Error::NegativeCoefficient(j));
        }
    }
    Ok(())
}

struct ColumnSolution {
    /// primary sequence on `0..n-1`
    main: Vec<f64>,
    /// companion sequence on `0..n-1`
    comp: Vec<f64>,
    /// extension values: (main at `n` or `-1`, comp at `-1` or `n`)
    main_ext: f64,
    comp_ext: f64,
}

/// Solve one `(g, gamma)` column. Unknowns interleaved as
/// `[gamma_{-1}, g_0, gamma_0, g_1, ..., gamma_{n-1}, g_n]`.
fn solve_gg_column(grid: &Grid, a: &GridFunction, center: usize) -> Result<ColumnSolution> {
    let n = grid.n;
    let dxi = grid.dxi;
    let (lm, lp) = transfer_eigs(1.0, dxi);
    let rplus = [1.0 / (1.0 + lm).sqrt(), 1.0 / (1.0 + lp).sqrt()];
    let rminus = [1.0 / (1.0 + lp).sqrt(), -1.0 / (1.0 + lm).sqrt()];
    let m = 2 * n + 2;
    let mut dl = vec![0.0; m - 1];
    let mut d = vec![0.0; m];
    let mut du = vec![0.0; m - 1];
    let mut b = vec![0.0; m];
    let inv = 1.0 / dxi;
    // row 0: (g_0, gamma_{-1}) parallel to r+
    d[0] = -rplus[0];
    du[0] = rplus[1];
    for j in 0..n {
        let aj = a.values[j];
        // row 2j+1: a_j g_j + gamma_{j-1}/dxi - gamma_j/dxi = delta/dxi
        let r = 2 * j + 1;
        dl[r - 1] = inv;
        d[r] = aj;
        du[r] = -inv;
        if j == center {
            b[r] = inv;
        }
        // row 2j+2: a_j gamma_j + g_j/dxi - g_{j+1}/dxi = 0
        let r = 2 * j + 2;
        dl[r - 1] = inv;
        d[r] = aj;
        if r < m - 1 {
            du[r] = -inv;
        }
    }
    // row 2n+1: (g_n, gamma_{n-1}) parallel to r-
    let r = m - 1;
    dl[r - 1] = -rminus[0];
    d[r] = rminus[1];
    solve_tridiag(&mut dl, &mut d, &mut du, &mut b)?;
    let main: Vec<f64> = (0..n).map(|j| b[2 * j + 1]).collect();
    let comp: Vec<f64> = (0..n).map(|j| b[2 * j + 2]).collect();
    Ok(ColumnSolution {
        main,
        comp,
        main_ext: b[m - 1],
        comp_ext: b[0],
    })
}

/// Solve one `(k, kappa)` column. Unknowns interleaved as
/// `[k_{-1}, kappa_0, k_0, kappa_1, ..., k_{n-1}, kappa_n]`.
fn solve_kk_column(grid: &Grid, a: &GridFunction, center: usize) -> Result<ColumnSolution> {
    let n = grid.n;
    let dxi = grid.dxi;
    let (lm, lp) = transfer_eigs(1.0, dxi);
    let rplus = [1.0 / (1.0 + lm).sqrt(), 1.0 / (1.0 + lp).sqrt()];
    let rminus = [1.0 / (1.0 + lp).sqrt(), -1.0 / (1.0 + lm).sqrt()];
    let m = 2 * n + 2;
    let mut dl = vec![0.0; m - 1];
    let mut d = vec![0.0; m];
    let mut du = vec![0.0; m - 1];
    let mut b = vec![0.0; m];
    let inv = 1.0 / dxi;
    // row 0: (kappa_0, k_{-1}) parallel to r+
    d[0] = -rplus[0];
    du[0] = rplus[1];
    for j in 0..n {
        let aj = a.values[j];
        // row 2j+1: a_j kappa_j + k_{j-1}/dxi - k_j/dxi = 0
        let r = 2 * j + 1;
        dl[r - 1] = inv;
        d[r] = aj;
        du[r] = -inv;
        // row 2j+2: a_j k_j + kappa_j/dxi - kappa_{j+1}/dxi = delta/dxi
        let r = 2 * j + 2;
        dl[r - 1] = inv;
        d[r] = aj;
        if r < m - 1 {
            du[r] = -inv;
        }
        if j == center {
            b[r] = inv;
        }
    }
    // row 2n+1: (kappa_n, k_{n-1}) parallel to r-
    let r = m - 1;
    dl[r - 1] = -rminus[0];
    d[r] = rminus[1];
    solve_tridiag(&mut dl, &mut d, &mut du, &mut b)?;
    // kappa_j at 2j+1, k_j at 2j+2
    let comp: Vec<f64> = (0..n).map(|j| b[2 * j + 1]).collect();
    let main: Vec<f64> = (0..n).map(|j| b[2 * j + 2]).collect();
    Ok(ColumnSolution {
        main,
        comp,
        main_ext: b[0],
        comp_ext: b[m - 1],
    })
}

/// One `(g, gamma)` column of the kernel by the linear-system route.
pub fn solve_g_column(
    grid: &Grid,
    a: &GridFunction,
    center: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_coeff(grid, a)?;
    let sol = solve_gg_column(grid, a, center)?;
    Ok((sol.main, sol.comp))
}

/// Full kernel set by per-column linear solves; agrees with the shooting
/// construction but shares no code path with it. `wronskian_value` is NaN
/// because this route never forms the homogeneous pair.
pub fn oracle_kernels(grid: &Grid, a: &GridFunction) -> Result<KernelSet> {
    check_coeff(grid, a)?;
    let n = grid.n;
    let gg: Vec<ColumnSolution> = (0..n)
        .into_par_iter()
        .map(|i| solve_gg_column(grid, a, i))
        .collect::<Result<_>>()?;
    let kk: Vec<ColumnSolution> = (0..n)
        .into_par_iter()
        .map(|i| solve_kk_column(grid, a, i))
        .collect::<Result<_>>()?;
    let mut g = Mat::zeros(n);
    let mut k = Mat::zeros(n);
    let mut gamma = Mat::zeros(n);
    let mut kappa = Mat::zeros(n);
    for i in 0..n {
        g.row_mut(i).copy_from_slice(&gg[i].main);
        gamma.row_mut(i).copy_from_slice(&gg[i].comp);
        k.row_mut(i).copy_from_slice(&kk[i].main);
        kappa.row_mut(i).copy_from_slice(&kk[i].comp);
    }
    let edges = KernelEdges {
        g_right: gg.iter().map(|s| s.main_ext).collect(),
        gamma_left: gg.iter().map(|s| s.comp_ext).collect(),
        k_left: kk.iter().map(|s| s.main_ext).collect(),
        kappa_right: kk.iter().map(|s| s.comp_ext).collect(),
    };
    Ok(KernelSet {
        dxi: grid.dxi,
        g,
        k,
        gamma,
        kappa,
        a: a.clone(),
        wronskian_value: f64::NAN,
        edges: Some(edges),
    })
}

/// Adaptive Simpson quadrature to absolute tolerance `tol` on `[a, b]`.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// Knobs for the oracle routines.
#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    /// Absolute tolerance of the adaptive quadrature.
    pub quad_tol: f64,
    /// Sampling refinement factor relative to a target grid.
    pub refine_factor: usize,
    /// Step of the central finite difference.
    pub fd_eps: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            quad_tol: 1e-12,
            refine_factor: 4,
            fd_eps: 1e-5,
        }
    }
}

impl OracleConfig {
    pub fn validated(self) -> Result<Self> {
        if self.quad_tol > 0.0 && self.refine_factor >= 1 && self.fd_eps > 0.0 {
            Ok(self)
        } else {
            Err(Error::Config("oracle parameters must be positive".into()))
        }
    }
}

/// Continuum reference energy
/// `1/2 int (u^2 + u_x^2) dx + 1/2 int (rho - rho_inf)^2 dx`
/// by adaptive quadrature; `kinks` lists points where the integrand is not
/// smooth so each smooth piece is integrated separately.
pub fn oracle_energy(
    u: &dyn Fn(f64) -> f64,
    ux: &dyn Fn(f64) -> f64,
    rbar: &dyn Fn(f64) -> f64,
    domain: (f64, f64),
    kinks: &[f64],
) -> Result<f64> {
    oracle_energy_with(&OracleConfig::default(), u, ux, rbar, domain, kinks)
}

pub fn oracle_energy_with(
    cfg: &OracleConfig,
    u: &dyn Fn(f64) -> f64,
    ux: &dyn Fn(f64) -> f64,
    rbar: &dyn Fn(f64) -> f64,
    domain: (f64, f64),
    kinks: &[f64],
) -> Result<f64> {
    let (lo, hi) = domain;
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::NonFinite("oracle_energy domain"));
    }
    let density = |x: f64| {
        let uu = u(x);
        let uxx = ux(x);
        let rr = rbar(x);
        0.5 * (uu * uu + uxx * uxx + rr * rr)
    };
    let mut pts: Vec<f64> = vec![lo];
    for &k in kinks {
        if k > lo && k < hi {
            pts.push(k);
        }
    }
    pts.push(hi);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut total = 0.0;
    for win in pts.windows(2) {
        total += adaptive_simpson(&density, win[0], win[1], cfg.quad_tol);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("oracle_energy result"));
    }
    Ok(total)
}

/// Relative error between a central finite difference of `path` at 0 and the
/// claimed derivative. `path(s)` must return same-length vectors.
pub fn fd_check(path: &dyn Fn(f64) -> Vec<f64>, analytic: &[f64], eps: f64) -> f64 {
    let fp = path(eps);
    let fm = path(-eps);
    let scale = analytic
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let mut worst = 0.0_f64;
    for i in 0..analytic.len() {
        let fd = (fp[i] - fm[i]) / (2.0 * eps);
        worst = worst.max((fd - analytic[i]).abs());
    }
    worst / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::{build_kernels, constant_greens};
    use crate::grid::Ghost;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tridiag_solver_vs_dense_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.gen_range(3..24);
            let dl: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let du: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            // dense reference with full pivoted elimination
            let mut full = vec![vec![0.0; n + 1]; n];
            for i in 0..n {
                full[i][i] = d[i];
                if i > 0 {
                    full[i][i - 1] = dl[i - 1];
                }
                if i + 1 < n {
                    full[i][i + 1] = du[i];
                }
                full[i][n] = b[i];
            }
            let mut ok = true;
            for c in 0..n {
                let p = (c..n)
                    .max_by(|&x, &y| full[x][c].abs().partial_cmp(&full[y][c].abs()).unwrap())
                    .unwrap();
                if full[p][c].abs() < 1e-13 {
                    ok = false;
                    break;
                }
                full.swap(c, p);
                for r in c + 1..n {
                    let f = full[r][c] / full[c][c];
                    for cc in c..=n {
                        full[r][cc] -= f * full[c][cc];
                    }
                }
            }
            if !ok {
                continue;
            }
            let mut xref = vec![0.0; n];
            for r in (0..n).rev() {
                let mut s = full[r][n];
                for c in r + 1..n {
                    s -= full[r][c] * xref[c];
                }
                xref[r] = s / full[r][r];
            }
            let mut dl2 = dl.clone();
            let mut d2 = d.clone();
            let mut du2 = du.clone();
            let mut x = b.clone();
            solve_tridiag(&mut dl2, &mut d2, &mut du2, &mut x).unwrap();
            for i in 0..n {
                assert!(
                    (x[i] - xref[i]).abs() < 1e-9 * (1.0 + xref[i].abs()),
                    "n={n} i={i}: {} vs {}",
                    x[i],
                    xref[i]
                );
            }
        }
    }

    #[test]
    fn oracle_matches_constant_closed_form() {
        let n = 64;
        let grid = Grid::new(n, 0.5, -16.0).unwrap();
        let a = GridFunction::new(
            vec![1.0; n],
            Ghost::Const {
                left: 1.0,
                right: 1.0,
            },
        );
        let ks = oracle_kernels(&grid, &a).unwrap();
        for i in 0..n {
            for j in 0..n {
                let exact = constant_greens(0.5, j as i64 - i as i64);
                assert!((ks.g[(i, j)] - exact).abs() < 1e-10);
                assert!((ks.k[(i, j)] - exact).abs() < 1e-10);
            }
        }
        assert!(ks.identity_residual() < 1e-9);
    }

    #[test]
    fn oracle_zero_cell_stays_finite_with_plateau() {
        let n = 48;
        let grid = Grid::new(n, 0.5, -12.0).unwrap();
        let mut av = vec![1.0; n];
        av[20] = 0.0;
        let a = GridFunction::new(
            av,
            Ghost::Const {
                left: 1.0,
                right: 1.0,
            },
        );
        let ks = oracle_kernels(&grid, &a).unwrap();
        assert!(ks.g.data().iter().all(|v| v.is_finite()));
        for i in 0..n {
            assert!((ks.g[(i, 21)] - ks.g[(i, 20)]).abs() < 1e-12);
        }
        assert!(ks.identity_residual() < 1e-9);
    }

    #[test]
    fn oracle_agrees_with_shooting() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 64;
        let grid = Grid::new(n, 0.7, -22.4).unwrap();
        for _ in 0..10 {
            let mut av: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.2)).collect();
            av[rng.gen_range(16..48)] = 0.0;
            let a = GridFunction::new(
                av,
                Ghost::Const {
                    left: 1.0,
                    right: 1.0,
                },
            );
            let ks_shoot = build_kernels(&grid, &a).unwrap();
            let ks_solve = oracle_kernels(&grid, &a).unwrap();
            assert!(ks_shoot.g.max_abs_diff(&ks_solve.g) < 1e-8);
            assert!(ks_shoot.k.max_abs_diff(&ks_solve.k) < 1e-8);
            assert!(ks_shoot.gamma.max_abs_diff(&ks_solve.gamma) < 1e-8);
            assert!(ks_shoot.kappa.max_abs_diff(&ks_solve.kappa) < 1e-8);
        }
    }

    #[test]
    fn energy_oracle_examples() {
        // zero
        let z = oracle_energy(&|_| 0.0, &|_| 0.0, &|_| 0.0, (-5.0, 5.0), &[]).unwrap();
        assert!(z.abs() < 1e-14);
        // unit peakon: 1/2 int e^{-2|x|} (1 + 1) dx = 1
        let e = oracle_energy(
            &|x: f64| (-x.abs()).exp(),
            &|x: f64| -x.signum() * (-x.abs()).exp(),
            &|_| 0.0,
            (-40.0, 40.0),
            &[0.0],
        )
        .unwrap();
        assert!((e - 1.0).abs() < 1e-8, "peakon energy {e}");
        // antisymmetric pair at distance 5: 2(1 - e^{-5})
        let (x1, x2) = (-2.5, 2.5);
        let u = move |x: f64| (-(x - x1).abs()).exp() - (-(x - x2).abs()).exp();
        let ux = move |x: f64| {
            -(x - x1).signum() * (-(x - x1).abs()).exp()
                + (x - x2).signum() * (-(x - x2).abs()).exp()
        };
        let e = oracle_energy(&u, &ux, &|_| 0.0, (-45.0, 45.0), &[x1, x2]).unwrap();
        let exact = 2.0 * (1.0 - (-5.0_f64).exp());
        assert!((e - exact).abs() < 1e-8, "pair energy {e} vs {exact}");
    }

    #[test]
    fn fd_check_linear_map_is_exact() {
        let path = |s: f64| vec![2.0 * s, -3.0 * s + 1.0];
        let err = fd_check(&path, &[2.0, -3.0], 1e-4);
        assert!(err < 1e-12);
    }
}
