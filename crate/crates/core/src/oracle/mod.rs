//! Independent checks: finite differences, manufactured solutions, closed-form
//! and brute-force transport costs, and a finite-volume continuity solver.

mod fv;
mod ot;
pub mod suite;

pub use fv::{fv_integrate_continuity, fv_integrate_with, network_potential, FvResult, FvScheme, PotentialSampler};
pub use ot::{discrete_ot_cost, gaussian_grid_measure, NetworkSimplex};
pub use suite::validation_suite;

use std::fmt;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fieldnet::{FieldJet, FieldNetwork};
use crate::io::Snapshot;
use crate::{Error, Result};

/// One named comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes iff `|measured − expected| ≤ tolerance · max(1, |expected|)`.
    pub fn new(name: impl Into<String>, measured: f64, expected: f64, tolerance: f64) -> Self {
        let pass = (measured - expected).abs() <= tolerance * expected.abs().max(1.0);
        Self {
            name: name.into(),
            measured,
            expected,
            tolerance,
            pass,
        }
    }

    pub fn error(&self) -> f64 {
        (self.measured - self.expected).abs() / self.expected.abs().max(1.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OracleReport {
    pub checks: Vec<Check>,
}

impl OracleReport {
    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn extend(&mut self, other: OracleReport) {
        self.checks.extend(other.checks);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Largest scaled error among checks whose name starts with `prefix`.
    pub fn worst(&self, prefix: &str) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.name.starts_with(prefix))
            .map(Check::error)
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<40} {:>14} {:>14} {:>9}  result",
            "check", "measured", "expected", "tol"
        )?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<40} {:>14.6e} {:>14.6e} {:>9.1e}  {}",
                c.name,
                c.measured,
                c.expected,
                c.tolerance,
                if c.pass { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Step sizes and tolerances for [`fd_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdTolerance {
    pub h: f64,
    pub first: f64,
    pub second: f64,
}

impl Default for FdTolerance {
    fn default() -> Self {
        Self {
            h: 1e-4,
            first: 1e-5,
            second: 1e-4,
        }
    }
}

/// Central-difference jet of `net` at `(t, x)` built from plain evaluations.
pub fn fd_jet(net: &FieldNetwork, t: f64, x: &[f64], h: f64) -> Result<FieldJet> {
    let d = x.len();
    // rows: centre, ±t, ±x_i, and (±,±) for every pair i < j
    let mut rows: Vec<(f64, Vec<f64>)> = vec![(t, x.to_vec()), (t + h, x.to_vec()), (t - h, x.to_vec())];
    for i in 0..d {
        for s in [h, -h] {
            let mut y = x.to_vec();
            y[i] += s;
            rows.push((t, y));
        }
    }
    for i in 0..d {
        for j in i + 1..d {
            for (si, sj) in [(h, h), (h, -h), (-h, h), (-h, -h)] {
                let mut y = x.to_vec();
                y[i] += si;
                y[j] += sj;
                rows.push((t, y));
            }
        }
    }
    let mut inputs = Array2::zeros((rows.len(), d + 1));
    for (r, (tt, y)) in rows.iter().enumerate() {
        inputs[[r, 0]] = *tt;
        for a in 0..d {
            inputs[[r, 1 + a]] = y[a];
        }
    }
    let f = net.eval_batch(inputs.view())?;
    let u = f[0];
    let mut grad = vec![0.0; d];
    let mut hess = Array2::zeros((d, d));
    for i in 0..d {
        let (p, m) = (f[3 + 2 * i], f[4 + 2 * i]);
        grad[i] = (p - m) / (2.0 * h);
        hess[[i, i]] = (p - 2.0 * u + m) / (h * h);
    }
    let mut k = 3 + 2 * d;
    for i in 0..d {
        for j in i + 1..d {
            let v = (f[k] - f[k + 1] - f[k + 2] + f[k + 3]) / (4.0 * h * h);
            hess[[i, j]] = v;
            hess[[j, i]] = v;
            k += 4;
        }
    }
    Ok(FieldJet {
        u,
        u_t: (f[1] - f[2]) / (2.0 * h),
        grad_x: grad,
        hess_x: hess,
    })
}

/// Compares every jet component at every row `(t, x..)` of `points` with
/// central differences. Check names are `value`, `dt`, `grad`, `hess`
/// followed by the point and component index.
pub fn fd_check(net: &FieldNetwork, points: ArrayView2<'_, f64>, tol: FdTolerance) -> Result<OracleReport> {
    let mut report = OracleReport::default();
    let d = points.ncols() - 1;
    for (p, row) in points.rows().into_iter().enumerate() {
        let t = row[0];
        let x: Vec<f64> = row.iter().skip(1).copied().collect();
        let jet = net.eval_jet(t, &x)?;
        let fd = fd_jet(net, t, &x, tol.h)?;
        report.push(Check::new(format!("value p{p}"), jet.u, net.eval(t, &x)?, tol.first));
        report.push(Check::new(format!("dt p{p}"), jet.u_t, fd.u_t, tol.first));
        for i in 0..d {
            report.push(Check::new(
                format!("grad p{p} {i}"),
                jet.grad_x[i],
                fd.grad_x[i],
                tol.first,
            ));
        }
        for i in 0..d {
            for j in i..d {
                report.push(Check::new(
                    format!("hess p{p} {i}{j}"),
                    jet.hess_x[[i, j]],
                    fd.hess_x[[i, j]],
                    tol.second,
                ));
            }
        }
    }
    Ok(report)
}

/// Random space-time points in `[0,1]^{1+d}`.
pub fn random_points(d: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d + 1), |_| rng.random::<f64>())
}

/// Fits the exponent `p` in `err ≈ C h^p` from errors at `h` and `h/2`.
pub fn convergence_order(err_h: f64, err_half: f64) -> f64 {
    (err_h / err_half).log2()
}

/// Optimal pure-growth cost `(4/η)(√κ − 1)² m₀` for `ρ₁ = κ ρ₀`.
pub fn analytic_fr_cost(m0: f64, kappa: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::Oracle("pure-growth cost needs eta > 0".into()));
    }
    if !(kappa > 0.0) || !(m0 >= 0.0) {
        return Err(Error::Oracle("need kappa > 0 and m0 >= 0".into()));
    }
    Ok(4.0 / eta * (kappa.sqrt() - 1.0).powi(2) * m0)
}

/// Minimises `(1/η) ∫ m'² / m dt` over discrete mass paths from `m₀` to
/// `κ m₀` on `steps` uniform intervals (midpoint rule), by Newton's method
/// on the interior values.
pub fn fr_path_cost(m0: f64, kappa: f64, eta: f64, steps: usize) -> Result<f64> {
    if !(eta > 0.0) || !(kappa > 0.0) || !(m0 > 0.0) || steps < 2 {
        return Err(Error::Oracle(
            "path oracle needs eta, kappa, m0 > 0 and 2+ steps".into(),
        ));
    }
    let n = steps;
    let dt = 1.0 / n as f64;
    let m1 = kappa * m0;
    let mut m: Vec<f64> = (0..=n).map(|k| m0 + (m1 - m0) * k as f64 / n as f64).collect();
    // interval term f(a, b) = (b − a)² / (dt (a + b) / 2)
    let cost = |m: &[f64]| -> f64 {
        (0..n)
            .map(|k| 2.0 * (m[k + 1] - m[k]).powi(2) / (dt * (m[k] + m[k + 1])))
            .sum()
    };
    for _ in 0..100 {
        let mut g = vec![0.0; n + 1];
        let mut diag = vec![0.0; n + 1];
        let mut off = vec![0.0; n + 1];
        for k in 0..n {
            let (a, b) = (m[k], m[k + 1]);
            let s = a + b;
            let q = b - a;
            let c = 2.0 / dt;
            // f = c q² / s
            let fa = c * (-2.0 * q / s - q * q / (s * s));
            let fb = c * (2.0 * q / s - q * q / (s * s));
            let faa = c * (2.0 / s + 4.0 * q / (s * s) + 2.0 * q * q / (s * s * s));
            let fbb = c * (2.0 / s - 4.0 * q / (s * s) + 2.0 * q * q / (s * s * s));
            let fab = c * (-2.0 / s + 2.0 * q * q / (s * s * s));
            g[k] += fa;
            g[k + 1] += fb;
            diag[k] += faa;
            diag[k + 1] += fbb;
            off[k] += fab;
        }
        // tridiagonal solve on interior nodes 1..n-1
        let size = n - 1;
        let mut cp = vec![0.0; size];
        let mut dp = vec![0.0; size];
        for r in 0..size {
            let k = r + 1;
            let lower = if r > 0 { off[k - 1] } else { 0.0 };
            let denom = diag[k] - lower * if r > 0 { cp[r - 1] } else { 0.0 };
            cp[r] = off[k] / denom;
            dp[r] = (-g[k] - lower * if r > 0 { dp[r - 1] } else { 0.0 }) / denom;
        }
        let mut step = vec![0.0; size];
        for r in (0..size).rev() {
            step[r] = dp[r] - if r + 1 < size { cp[r] * step[r + 1] } else { 0.0 };
        }
        let mut lambda = 1.0;
        let before = cost(&m);
        loop {
            let trial: Vec<f64> = (0..=n)
                .map(|k| {
                    if k == 0 || k == n {
                        m[k]
                    } else {
                        m[k] + lambda * step[k - 1]
                    }
                })
                .collect();
            if trial.iter().all(|&v| v > 0.0) && cost(&trial) <= before {
                m = trial;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                break;
            }
        }
        let norm = step.iter().map(|s| s * s).sum::<f64>().sqrt() * lambda;
        if norm < 1e-14 * m1.max(m0) {
            break;
        }
    }
    Ok(cost(&m) / eta)
}

/// `½‖Δμ‖²`, the dynamic cost of translating a unit-mass shape by `Δμ`.
pub fn analytic_ot_cost_translation(delta: &[f64]) -> f64 {
    0.5 * delta.iter().map(|x| x * x).sum::<f64>()
}

/// `Σ w_i ρ(t, x_i)` for each snapshot.
pub fn mass_timeseries(snapshots: &[Snapshot], weights: &[f64]) -> Result<Vec<(f64, f64)>> {
    snapshots
        .iter()
        .map(|s| {
            if s.len() != weights.len() {
                return Err(Error::DimensionMismatch {
                    expected: weights.len(),
                    got: s.len(),
                });
            }
            Ok((s.t, s.rho.iter().zip(weights).map(|(r, w)| r * w).sum()))
        })
        .collect()
}

/// `max_t |m(t) − m(0)| / m(0)`.
pub fn max_relative_drift(series: &[(f64, f64)]) -> f64 {
    let m0 = series.first().map_or(0.0, |s| s.1);
    series.iter().map(|(_, m)| (m - m0).abs()).fold(0.0, f64::max) / m0.abs()
}

/// Closed-form solutions of the KKT system, as exact jets.
pub mod manufactured {
    use ndarray::Array2;

    use crate::fieldnet::FieldJet;

    /// Spatially constant pair `ρ = ρ₀ s²`, `φ = φ₀ / s`, `s = 1 + (η/4) φ₀ t`.
    pub fn pure_growth(rho0: f64, phi0: f64, eta: f64, t: f64, d: usize) -> (FieldJet, FieldJet) {
        let k = 0.25 * eta * phi0;
        let s = 1.0 + k * t;
        let mut rho = FieldJet::constant(rho0 * s * s, d);
        rho.u_t = 2.0 * rho0 * s * k;
        let mut phi = FieldJet::constant(phi0 / s, d);
        phi.u_t = -phi0 * k / (s * s);
        (rho, phi)
    }

    /// Pure growth with a spatial profile: `ρ = ρ₀(x) s(t)²`, `φ = φ₀ / s`.
    /// `profile` is the jet of `ρ₀` at `x` (time entries ignored).
    pub fn pure_growth_profile(profile: &FieldJet, phi0: f64, eta: f64, t: f64) -> (FieldJet, FieldJet) {
        let d = profile.spatial_dim();
        let k = 0.25 * eta * phi0;
        let s = 1.0 + k * t;
        let rho = FieldJet {
            u: profile.u * s * s,
            u_t: profile.u * 2.0 * s * k,
            grad_x: profile.grad_x.iter().map(|g| g * s * s).collect(),
            hess_x: profile.hess_x.mapv(|h| h * s * s),
        };
        let mut phi = FieldJet::constant(phi0 / s, d);
        phi.u_t = -phi0 * k / (s * s);
        (rho, phi)
    }

    /// `ρ = c ρ_G(x − t a; μ, s I)`, `φ = a·x − t‖a‖²/2`, with `η = 0`.
    pub fn translation(coefficient: f64, mean: &[f64], s: f64, a: &[f64], t: f64, x: &[f64]) -> (FieldJet, FieldJet) {
        let d = x.len();
        let y: Vec<f64> = (0..d).map(|i| x[i] - t * a[i] - mean[i]).collect();
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let norm = coefficient / ((2.0 * std::f64::consts::PI).sqrt() * s.powf(d as f64 / 2.0));
        let g = norm * (-0.5 * r2 / s).exp();
        let grad: Vec<f64> = y.iter().map(|v| -v / s * g).collect();
        let mut hess = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                hess[[i, j]] = g * (y[i] * y[j] / (s * s) - if i == j { 1.0 / s } else { 0.0 });
            }
        }
        // ρ_t = −a·∇ρ
        let rho_t = -(0..d).map(|i| a[i] * grad[i]).sum::<f64>();
        let rho = FieldJet {
            u: g,
            u_t: rho_t,
            grad_x: grad,
            hess_x: hess,
        };
        let a2: f64 = a.iter().map(|v| v * v).sum();
        let phi = FieldJet {
            u: (0..d).map(|i| a[i] * x[i]).sum::<f64>() - 0.5 * t * a2,
            u_t: -0.5 * a2,
            grad_x: a.to_vec(),
            hess_x: Array2::zeros((d, d)),
        };
        (rho, phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldnet::{Activation, OutputHead};

    #[test]
    fn check_scaling_rule() {
        assert!(Check::new("a", 1.0 + 5e-7, 1.0, 1e-6).pass);
        assert!(!Check::new("b", 200.0 + 3e-4, 200.0, 1e-6).pass);
        assert!(Check::new("c", 1e-9, 0.0, 1e-8).pass);
    }

    #[test]
    fn affine_network_matches_differences_exactly() {
        let net = FieldNetwork::new(&[3, 1], Activation::Tanh, OutputHead::Linear, 5).unwrap();
        let pts = random_points(2, 4, 1);
        let r = fd_check(
            &net,
            pts.view(),
            FdTolerance {
                h: 1e-3,
                first: 1e-12,
                second: 1e-8,
            },
        )
        .unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn fr_cost_values() {
        assert_eq!(analytic_fr_cost(1.0, 1.0, 2.0).unwrap(), 0.0);
        assert!((analytic_fr_cost(1.0, 4.0, 2.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((analytic_fr_cost(3.0, 4.0, 2.0).unwrap() - 6.0).abs() < 1e-14);
        assert!(analytic_fr_cost(1.0, 4.0, 0.0).is_err());
    }

    #[test]
    fn path_minimisation_reaches_the_geodesic_cost() {
        let c = fr_path_cost(1.0, 4.0, 2.0, 200).unwrap();
        assert!((c - 2.0).abs() < 1e-3, "{c}");
    }

    #[test]
    fn translation_cost_depends_on_length_only() {
        assert_eq!(analytic_ot_cost_translation(&[0.0, 0.0]), 0.0);
        assert!((analytic_ot_cost_translation(&[0.2, 0.2]) - 0.04).abs() < 1e-15);
        let r = 0.08f64.sqrt();
        assert!((analytic_ot_cost_translation(&[r, 0.0]) - 0.04).abs() < 1e-15);
    }
}
