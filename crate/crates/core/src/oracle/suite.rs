//! The self-contained oracle suite behind `uotnet validate`.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    analytic_fr_cost, analytic_ot_cost_translation, convergence_order, discrete_ot_cost, fd_check, fd_jet,
    fr_path_cost, fv_integrate_continuity, fv_integrate_with, gaussian_grid_measure, manufactured, random_points,
    Check, FdTolerance, FvScheme, OracleReport,
};
use crate::fieldnet::{Activation, FieldNetwork, OutputHead};
use crate::geometry::TangentFrame;
use crate::problems::GridShape;
use crate::residuals::{continuity_residual, hj_residual};
use crate::Result;

/// Random small tanh network: input dimension `1 + d` with `d ∈ 1..=3`, one or
/// two hidden layers of width 3 to 12, linear or softplus head.
pub fn random_network(seed: u64) -> FieldNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let d = rng.random_range(1..=3);
    let mut dims = vec![d + 1];
    for _ in 0..rng.random_range(1..=2) {
        dims.push(rng.random_range(3..=12));
    }
    dims.push(1);
    let head = if rng.random_bool(0.5) {
        OutputHead::Linear
    } else {
        OutputHead::Softplus
    };
    let mut net = FieldNetwork::new(&dims, Activation::Tanh, head, seed).expect("valid dims");
    // non-zero biases so no layer is odd-symmetric about the origin
    net.update_params(|p, _| {
        if *p == 0.0 {
            *p = rng.random_range(-0.5..0.5);
        }
    });
    net
}

/// Jet components of `networks` random networks at `points` random points
/// each against central differences.
pub fn fd_suite(networks: usize, points: usize, tol: FdTolerance) -> Result<OracleReport> {
    let mut report = OracleReport::default();
    for k in 0..networks {
        let net = random_network(k as u64);
        let pts = random_points(net.spatial_dim(), points, 1000 + k as u64);
        let r = fd_check(&net, pts.view(), tol)?;
        for c in r.checks {
            report.push(Check {
                name: format!("fd net{k} {}", c.name),
                ..c
            });
        }
    }
    Ok(report)
}

/// `|r_c|` and `|r_hj|` of the two manufactured solutions at `n` random points.
pub fn manufactured_suite(n: usize, tol: f64) -> Result<OracleReport> {
    let mut report = OracleReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let frame = TangentFrame::euclidean(2);
    let (mut worst_gc, mut worst_gh, mut worst_tc, mut worst_th) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n {
        let t: f64 = rng.random();
        let x = [rng.random::<f64>(), rng.random::<f64>()];

        let eta = 2.0;
        let profile = manufactured::translation(1.0, &[0.5, 0.5], 0.01, &[0.0, 0.0], 0.0, &x).0;
        let (rho, phi) = manufactured::pure_growth_profile(&profile, 1.0, eta, t);
        worst_gc = worst_gc.max(continuity_residual(&rho, &phi, &frame, eta)?.abs());
        worst_gh = worst_gh.max(hj_residual(&phi, &frame, eta)?.abs());

        let (rho, phi) = manufactured::translation(1.0, &[0.4, 0.4], 0.01, &[0.2, 0.2], t, &x);
        worst_tc = worst_tc.max(continuity_residual(&rho, &phi, &frame, 0.0)?.abs());
        worst_th = worst_th.max(hj_residual(&phi, &frame, 0.0)?.abs());
    }
    report.push(Check::new("manufactured growth |r_c|", worst_gc, 0.0, tol));
    report.push(Check::new("manufactured growth |r_hj|", worst_gh, 0.0, tol));
    report.push(Check::new("manufactured translation |r_c|", worst_tc, 0.0, tol));
    report.push(Check::new("manufactured translation |r_hj|", worst_th, 0.0, tol));
    Ok(report)
}

/// Gradient error ratio between `h` and `h/2` on a fixed random network.
pub fn fd_order(h: f64) -> Result<f64> {
    let mut net = random_network(4242);
    while net.spatial_dim() < 2 {
        net = random_network(net.seed() + 1);
    }
    let pts = random_points(net.spatial_dim(), 5, 9);
    let mut err = [0.0f64; 2];
    for row in pts.rows() {
        let t = row[0];
        let x: Vec<f64> = row.iter().skip(1).copied().collect();
        let exact = net.eval_jet(t, &x)?;
        for (k, step) in [h, h / 2.0].into_iter().enumerate() {
            let fd = fd_jet(&net, t, &x, step)?;
            for i in 0..x.len() {
                err[k] = err[k].max((fd.grad_x[i] - exact.grad_x[i]).abs());
            }
        }
    }
    Ok(convergence_order(err[0], err[1]))
}

fn shifted_gaussian_l1(cells: usize, scheme: FvScheme) -> Result<(f64, f64)> {
    let grid = GridShape {
        lower: vec![0.0, 0.0],
        upper: vec![1.0, 1.0],
        cells: vec![cells, cells],
    };
    let c = grid.centres();
    let g = |x: f64, y: f64, m: f64| (-0.5 * ((x - m).powi(2) + (y - m).powi(2)) / 0.01).exp();
    let rho0: Vec<f64> = c.rows().into_iter().map(|r| g(r[0], r[1], 0.4)).collect();
    let a = [0.2, 0.2];
    let phi = move |_t: f64, p: ArrayView2<'_, f64>| {
        let vals = p.rows().into_iter().map(|r| a[0] * r[0] + a[1] * r[1]).collect();
        Ok((vals, Array2::from_shape_fn(p.dim(), |(_, i)| a[i])))
    };
    let out = fv_integrate_with(&phi, &rho0, &grid, 0.0, scheme)?;
    let vol = grid.cell_volume();
    let exact: Vec<f64> = c.rows().into_iter().map(|r| g(r[0], r[1], 0.6)).collect();
    let err: f64 = out.rho.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>() * vol;
    let norm: f64 = exact.iter().sum::<f64>() * vol;
    Ok((err / norm, (out.final_mass - out.initial_mass).abs() / out.initial_mass))
}

/// Finite-volume checks: translation error and its first-order decay, mass
/// conservation without source, and the closed-form growth factor.
pub fn fv_suite() -> Result<OracleReport> {
    let mut report = OracleReport::default();
    let (e32, drift32) = shifted_gaussian_l1(32, FvScheme::Upwind)?;
    let (e64, drift64) = shifted_gaussian_l1(64, FvScheme::Upwind)?;
    report.push(Check::new(
        "fv upwind translation L1 order",
        convergence_order(e32, e64),
        1.0,
        0.35,
    ));
    report.push(Check::new("fv upwind translation L1 64^2", e64, 0.0, 0.3));
    let (m64, drift_m) = shifted_gaussian_l1(64, FvScheme::Muscl)?;
    report.push(Check::new("fv muscl translation L1 64^2", m64, 0.0, 0.05));
    report.push(Check::new(
        "fv mass drift eta=0",
        drift32.max(drift64).max(drift_m),
        0.0,
        1e-12,
    ));

    let grid = GridShape {
        lower: vec![0.0],
        upper: vec![1.0],
        cells: vec![16],
    };
    let (eta, phi0) = (2.0, 1.0);
    let phi = move |t: f64, p: ArrayView2<'_, f64>| {
        Ok((
            vec![phi0 / (1.0 + 0.25 * eta * phi0 * t); p.nrows()],
            Array2::zeros(p.dim()),
        ))
    };
    let out = fv_integrate_continuity(&phi, &[1.0; 16], &grid, eta)?;
    let factor = (1.0 + 0.25 * eta * phi0).powi(2);
    report.push(Check::new("fv growth factor", out.rho[7], factor, 1e-2));
    Ok(report)
}

/// Closed-form costs against the brute-force oracles.
pub fn cost_suite(ot_cells: usize) -> Result<OracleReport> {
    let mut report = OracleReport::default();
    report.push(Check::new(
        "fr path cost vs closed form",
        fr_path_cost(1.0, 4.0, 2.0, 200)?,
        analytic_fr_cost(1.0, 4.0, 2.0)?,
        1e-3,
    ));
    let (xa, a) = gaussian_grid_measure([0.4, 0.4], 0.01, ot_cells);
    let (xb, b) = gaussian_grid_measure([0.6, 0.6], 0.01, ot_cells);
    let w = 0.5 * discrete_ot_cost(xa.view(), &a, xb.view(), &b)?;
    let exact = analytic_ot_cost_translation(&[0.2, 0.2]);
    // relative 2% of a value below 1
    report.push(Check::new(
        format!("discrete ot {ot_cells}^2 vs closed form"),
        w,
        exact,
        0.02 * exact,
    ));
    Ok(report)
}

/// Everything `uotnet validate` runs.
pub fn validation_suite() -> Result<OracleReport> {
    let mut report = OracleReport::default();
    let fd = fd_suite(100, 20, FdTolerance::default())?;
    let worst = |hess: bool| {
        fd.checks
            .iter()
            .filter(|c| c.name.contains(" hess ") == hess)
            .map(Check::error)
            .fold(0.0, f64::max)
    };
    let (first, second) = (worst(false), worst(true));
    report.push(Check::new("fd 100 nets value/dt/grad worst", first, 0.0, 1e-5));
    report.push(Check::new("fd 100 nets hessian worst", second, 0.0, 1e-4));
    report.push(Check::new("fd gradient order (h=1e-2)", fd_order(1e-2)?, 2.0, 0.25));
    report.extend(manufactured_suite(1000, 1e-8)?);
    report.extend(cost_suite(64)?);
    report.extend(fv_suite()?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_fd_and_manufactured_suites_pass() {
        let r = fd_suite(5, 4, FdTolerance::default()).unwrap();
        assert!(r.passed(), "{r}");
        let r = manufactured_suite(200, 1e-8).unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn random_networks_vary() {
        let dims: Vec<_> = (0..20).map(|k| random_network(k).layer_dims().to_vec()).collect();
        assert!(dims.iter().any(|d| d[0] == 2) && dims.iter().any(|d| d[0] == 4));
    }

    #[test]
    fn fv_suite_passes() {
        let r = fv_suite().unwrap();
        assert!(r.passed(), "{r}");
    }
}
