//! KKT residuals, penalty terms, the total loss and its parameter gradient,
//! derived fields, and cost quadratures.
//!
//! Pointwise functions take full [`FieldJet`]s. The batched loss instead
//! records directional tapes: with an orthonormal tangent basis `τ_a`,
//!
//! ```text
//! ∇ρ·P∇φ   = Σ_a D_a ρ D_a φ
//! ‖P∇φ‖²   = Σ_a (D_a φ)²
//! tr(P H_φ) = Σ_a D²φ[τ_a, τ_a]
//! ```
//!
//! so only `m = d − k` first-order channels and one trace channel are carried.

use ndarray::{s, Array2, Array3, ArrayView2};

use crate::fieldnet::{FieldJet, FieldNetwork, JetOrder, JetTape};
use crate::geometry::TangentFrame;
use crate::io::Snapshot;
use crate::problems::{CollocationSet, LossWeights, ProblemSpec};
use crate::{Error, Result};

/// `r_c = ρ_t + ∇ρ·(P∇φ) + ρ tr(P H_φ) − (η/2) ρ φ`.
pub fn continuity_residual(rho: &FieldJet, phi: &FieldJet, frame: &TangentFrame, eta: f64) -> Result<f64> {
    check_jet(rho, "rho jet")?;
    check_jet(phi, "phi jet")?;
    let v = frame.apply(&phi.grad_x);
    let adv: f64 = rho.grad_x.iter().zip(&v).map(|(a, b)| a * b).sum();
    let d = phi.spatial_dim();
    let hess: Vec<f64> = phi.hess_x.iter().copied().collect();
    debug_assert_eq!(hess.len(), d * d);
    let lap = frame.trace_with(&hess);
    Ok(rho.u_t + adv + rho.u * lap - 0.5 * eta * rho.u * phi.u)
}

/// `r_hj = φ_t + ½‖P∇φ‖² + (η/4) φ²`.
pub fn hj_residual(phi: &FieldJet, frame: &TangentFrame, eta: f64) -> Result<f64> {
    check_jet(phi, "phi jet")?;
    let v = frame.apply(&phi.grad_x);
    let kin: f64 = v.iter().map(|x| x * x).sum();
    Ok(phi.u_t + 0.5 * kin + 0.25 * eta * phi.u * phi.u)
}

fn check_jet(j: &FieldJet, what: &'static str) -> Result<()> {
    if j.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Velocity and growth rate implied by a potential.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedFields {
    pub v: Vec<f64>,
    pub g: f64,
}

pub fn derived_fields(phi: &FieldJet, frame: &TangentFrame, eta: f64) -> DerivedFields {
    DerivedFields {
        v: frame.apply(&phi.grad_x),
        g: 0.5 * eta * phi.u,
    }
}

/// The density and potential networks of one problem.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPair {
    pub rho: FieldNetwork,
    pub phi: FieldNetwork,
}

impl FieldPair {
    pub fn check_dim(&self, d: usize) -> Result<()> {
        self.rho.bind(d)?;
        self.phi.bind(d)
    }
}

/// Loss components, the weighted total, and the transport-cost estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub continuity: f64,
    pub hj: f64,
    pub endpoint: f64,
    pub boundary: f64,
    pub total: f64,
    /// `W_M`, in area units when the spatial weights are absolute.
    pub cost: f64,
}

impl LossReport {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.continuity * self.continuity + w.hj * self.hj + w.endpoint * self.endpoint + w.boundary * self.boundary
    }

    pub fn is_finite(&self) -> bool {
        [
            self.continuity,
            self.hj,
            self.endpoint,
            self.boundary,
            self.total,
            self.cost,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Parameter gradients of the total loss.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGradient {
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
}

pub const DEFAULT_CHUNK: usize = 32;

/// Per-row data the batched loss reuses every iteration.
#[derive(Clone, Debug)]
pub struct LossPlan {
    interior_dirs: Array3<f64>,
    boundary_dirs: Array3<f64>,
    // time weight times spatial weight for each interior row
    row_weights: Vec<f64>,
    chunk: usize,
}

impl LossPlan {
    pub fn new(col: &CollocationSet, chunk: usize) -> Self {
        let n_s = col.n_spatial();
        let (_, m, d) = col.tangents.dim();
        let n = col.n_interior();
        let mut interior_dirs = Array3::zeros((n, m, d));
        let mut row_weights = Vec::with_capacity(n);
        for r in 0..n {
            let i = r % n_s;
            interior_dirs
                .slice_mut(s![r, .., ..])
                .assign(&col.tangents.slice(s![i, .., ..]));
            row_weights.push(col.weights[i] / col.n_time() as f64);
        }
        let nb = col.boundary.nrows();
        let mut boundary_dirs = Array3::zeros((nb, 1, d));
        for r in 0..nb {
            for c in 0..d {
                boundary_dirs[[r, 0, c]] = col.boundary_normals[[r, c]];
            }
        }
        Self {
            interior_dirs,
            boundary_dirs,
            row_weights,
            chunk: chunk.max(1),
        }
    }

    pub fn chunk(&self) -> usize {
        self.chunk
    }
}

/// Total loss and, when `with_grad`, its gradient with respect to both
/// networks' parameters. Reduction order is fixed, so results are
/// reproducible bit for bit.
pub fn loss_and_grad(
    nets: &FieldPair,
    col: &CollocationSet,
    spec: &ProblemSpec,
    plan: &LossPlan,
    with_grad: bool,
) -> Result<(LossReport, Option<LossGradient>)> {
    nets.check_dim(col.dim)?;
    let eta = spec.eta;
    let w = spec.weights;
    let n_int = col.n_interior();
    let n_s = col.n_spatial();
    let n_t = col.n_time();
    let last = (n_t - 1) * n_s;

    let s_c = 2.0 * w.continuity / n_int as f64;
    let s_hj = 2.0 * w.hj / n_int as f64;
    let s_ic = 2.0 * w.endpoint / n_s as f64;

    let mut grad_rho = vec![0.0; if with_grad { nets.rho.num_params() } else { 0 }];
    let mut grad_phi = vec![0.0; if with_grad { nets.phi.num_params() } else { 0 }];
    let (mut sum_c, mut sum_hj, mut sum_ic, mut cost) = (0.0, 0.0, 0.0, 0.0);

    let mut r0 = 0;
    while r0 < n_int {
        let r1 = (r0 + plan.chunk).min(n_int);
        let inputs = col.interior.slice(s![r0..r1, ..]);
        let dirs = plan.interior_dirs.slice(s![r0..r1, .., ..]);
        let tr = nets.rho.directional_jets(inputs, dirs, false)?;
        let tp = nets.phi.directional_jets(inputs, dirs, true)?;
        let m = tr.layout().directions();
        let tc = tp.layout().trace().expect("trace channel");
        let n = r1 - r0;
        let mut adj_r = if with_grad { tr.zero_adjoint() } else { Vec::new() };
        let mut adj_p = if with_grad { tp.zero_adjoint() } else { Vec::new() };
        let o_r = tr.outputs();
        let o_p = tp.outputs();
        for q in 0..n {
            let row = r0 + q;
            let rho = o_r[q];
            let phi = o_p[q];
            let mut adv = 0.0;
            let mut kin = 0.0;
            for a in 0..m {
                let pa = o_p[(2 + a) * n + q];
                adv += o_r[(2 + a) * n + q] * pa;
                kin += pa * pa;
            }
            let lap = o_p[tc * n + q];
            let rc = o_r[n + q] + adv + rho * lap - 0.5 * eta * rho * phi;
            let rh = o_p[n + q] + 0.5 * kin + 0.25 * eta * phi * phi;
            sum_c += rc * rc;
            sum_hj += rh * rh;
            cost += plan.row_weights[row] * rho * (0.5 * kin + 0.25 * eta * phi * phi);

            let target = if row < n_s {
                Some(col.rho0[row])
            } else if row >= last {
                Some(col.rho1[row - last])
            } else {
                None
            };
            let mut e = 0.0;
            if let Some(t) = target {
                e = rho - t;
                sum_ic += e * e;
            }

            if with_grad {
                let gc = s_c * rc;
                let gh = s_hj * rh;
                adj_r[q] = gc * (lap - 0.5 * eta * phi) + s_ic * e;
                adj_r[n + q] = gc;
                adj_p[q] = -gc * 0.5 * eta * rho + gh * 0.5 * eta * phi;
                adj_p[n + q] = gh;
                for a in 0..m {
                    let pa = o_p[(2 + a) * n + q];
                    let ra = o_r[(2 + a) * n + q];
                    adj_r[(2 + a) * n + q] = gc * pa;
                    adj_p[(2 + a) * n + q] = gc * ra + gh * pa;
                }
                adj_p[tc * n + q] = gc * rho;
            }
        }
        if !(sum_c.is_finite() && sum_hj.is_finite() && sum_ic.is_finite()) {
            return Err(Error::NonFinite("loss"));
        }
        if with_grad {
            tr.backward_into(&adj_r, &mut grad_rho);
            tp.backward_into(&adj_p, &mut grad_phi);
        }
        r0 = r1;
    }

    let mut sum_bc = 0.0;
    let n_b = col.boundary.nrows();
    if n_b > 0 && w.boundary > 0.0 {
        let s_bc = 2.0 * w.boundary / n_b as f64;
        let mut r0 = 0;
        while r0 < n_b {
            let r1 = (r0 + plan.chunk).min(n_b);
            let inputs = col.boundary.slice(s![r0..r1, ..]);
            let tr = nets.rho.jets(inputs, JetOrder::Value)?;
            let tp = nets
                .phi
                .directional_jets(inputs, plan.boundary_dirs.slice(s![r0..r1, .., ..]), false)?;
            let n = r1 - r0;
            let dn = tp.layout().space(0);
            let mut adj_r = if with_grad { tr.zero_adjoint() } else { Vec::new() };
            let mut adj_p = if with_grad { tp.zero_adjoint() } else { Vec::new() };
            for q in 0..n {
                let rho = tr.value(q);
                let flux_dir = tp.outputs()[dn * n + q];
                let f = rho * flux_dir;
                sum_bc += f * f;
                if with_grad {
                    adj_r[q] = s_bc * f * flux_dir;
                    adj_p[dn * n + q] = s_bc * f * rho;
                }
            }
            if with_grad {
                tr.backward_into(&adj_r, &mut grad_rho);
                tp.backward_into(&adj_p, &mut grad_phi);
            }
            r0 = r1;
        }
        sum_bc /= n_b as f64;
    }

    let mut report = LossReport {
        continuity: sum_c / n_int as f64,
        hj: sum_hj / n_int as f64,
        endpoint: sum_ic / n_s as f64,
        boundary: sum_bc,
        total: 0.0,
        cost,
    };
    report.total = report.weighted_total(&w);
    if !report.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let grad = if with_grad {
        if grad_rho.iter().chain(&grad_phi).any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("loss gradient"));
        }
        Some(LossGradient {
            rho: grad_rho,
            phi: grad_phi,
        })
    } else {
        None
    };
    Ok((report, grad))
}

/// Loss components and cost without gradients.
pub fn total_loss(nets: &FieldPair, col: &CollocationSet, spec: &ProblemSpec) -> Result<LossReport> {
    let plan = LossPlan::new(col, DEFAULT_CHUNK);
    Ok(loss_and_grad(nets, col, spec, &plan, false)?.0)
}

/// Mean of `(ρ(0,x) − ρ₀)² + (ρ(1,x) − ρ₁)²` over the spatial samples.
pub fn endpoint_residual(rho: &FieldNetwork, col: &CollocationSet) -> Result<f64> {
    let n_s = col.n_spatial();
    let start = rho.eval_batch(col.interior.slice(s![0..n_s, ..]))?;
    let last = col.n_interior() - n_s;
    let end = rho.eval_batch(col.interior.slice(s![last.., ..]))?;
    let sum: f64 = (0..n_s)
        .map(|i| (start[i] - col.rho0[i]).powi(2) + (end[i] - col.rho1[i]).powi(2))
        .sum();
    Ok(sum / n_s as f64)
}

/// Mean of `(ρ ∂_n φ)²` over boundary rows with outward normals. On closed
/// surfaces there is no boundary; the value is 0 and the flag is set.
pub fn boundary_flux_residual(
    rho: &FieldNetwork,
    phi: &FieldNetwork,
    rows: ArrayView2<'_, f64>,
    normals: ArrayView2<'_, f64>,
) -> Result<(f64, bool)> {
    let n = rows.nrows();
    if n == 0 {
        return Ok((0.0, true));
    }
    let d = normals.ncols();
    let dirs = normals.to_owned().into_shape_with_order((n, 1, d)).expect("shape");
    let tr = rho.jets(rows, JetOrder::Value)?;
    let tp = phi.directional_jets(rows, dirs.view(), false)?;
    let sum: f64 = (0..n).map(|q| (tr.value(q) * tp.grad(q, 0)).powi(2)).sum();
    Ok((sum / n as f64, false))
}

/// `Σ (1/N_t) w_i (½ρ‖v‖² + (η/4)ρφ²)` over the interior rows.
pub fn wfr_cost(nets: &FieldPair, col: &CollocationSet, spec: &ProblemSpec) -> Result<f64> {
    let q = transport_split(nets, col, spec.eta)?;
    Ok(0.5 * q.kinetic + 0.25 * spec.eta * q.potential_sq)
}

/// Time-integrated quadratures over the interior rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportSplit {
    /// `Σ (1/N_t) w ρ ‖v‖²`
    pub kinetic: f64,
    /// `Σ (1/N_t) w ρ g²`
    pub growth: f64,
    /// `Σ (1/N_t) w ρ φ²`
    pub potential_sq: f64,
}

pub fn transport_split(nets: &FieldPair, col: &CollocationSet, eta: f64) -> Result<TransportSplit> {
    nets.check_dim(col.dim)?;
    let plan = LossPlan::new(col, DEFAULT_CHUNK);
    let n_int = col.n_interior();
    let mut out = TransportSplit {
        kinetic: 0.0,
        growth: 0.0,
        potential_sq: 0.0,
    };
    let mut r0 = 0;
    while r0 < n_int {
        let r1 = (r0 + plan.chunk).min(n_int);
        let inputs = col.interior.slice(s![r0..r1, ..]);
        let rho = nets.rho.eval_batch(inputs)?;
        let tp = nets
            .phi
            .directional_jets(inputs, plan.interior_dirs.slice(s![r0..r1, .., ..]), false)?;
        let m = tp.layout().directions();
        for q in 0..r1 - r0 {
            let w = plan.row_weights[r0 + q] * rho[q];
            let phi = tp.value(q);
            let kin: f64 = (0..m).map(|a| tp.grad(q, a).powi(2)).sum();
            let g = 0.5 * eta * phi;
            out.kinetic += w * kin;
            out.growth += w * g * g;
            out.potential_sq += w * phi * phi;
        }
        r0 = r1;
    }
    Ok(out)
}

/// Fields of both networks at time `t` on every spatial sample.
pub fn snapshot(nets: &FieldPair, col: &CollocationSet, eta: f64, t: f64) -> Result<Snapshot> {
    nets.check_dim(col.dim)?;
    let n = col.n_spatial();
    let d = col.dim;
    let mut inputs = Array2::zeros((n, d + 1));
    inputs.column_mut(0).fill(t);
    inputs.slice_mut(s![.., 1..]).assign(&col.spatial);
    let rho = nets.rho.eval_batch(inputs.view())?;
    let tp = nets.phi.directional_jets(inputs.view(), col.tangents.view(), false)?;
    let m = tp.layout().directions();
    let mut v = Array2::zeros((n, d));
    let mut phi = Vec::with_capacity(n);
    for i in 0..n {
        phi.push(tp.value(i));
        for a in 0..m {
            let da = tp.grad(i, a);
            for c in 0..d {
                v[[i, c]] += da * col.tangents[[i, a, c]];
            }
        }
    }
    let g = phi.iter().map(|p| 0.5 * eta * p).collect();
    Ok(Snapshot {
        t,
        positions: col.spatial.clone(),
        rho,
        phi,
        g,
        v,
        grid: col.grid.as_ref().map(|g| g.cells.clone()),
    })
}

/// Jets of both networks at arbitrary points, in axis mode.
pub fn jets_at(net: &FieldNetwork, inputs: ArrayView2<'_, f64>) -> Result<Vec<FieldJet>> {
    let tape: JetTape<'_> = net.jets(inputs, JetOrder::Second)?;
    Ok((0..tape.len()).map(|p| crate::fieldnet::jet_at(&tape, p)).collect())
}
