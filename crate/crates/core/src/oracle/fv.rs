//! Upwind finite volumes for `ρ_t + div(ρ∇φ) = (η/2) ρ φ` on a cell-centred
//! 1D or 2D grid with no-flux walls, stepped with SSP-RK2. Face states are
//! either the upwind cell average or a van Leer limited linear
//! reconstruction.

use ndarray::{Array2, ArrayView2};

use crate::fieldnet::{FieldNetwork, JetOrder};
use crate::problems::GridShape;
use crate::{Error, Result};

/// Values and spatial gradients of a potential at rows `(x..)` and time `t`.
pub trait PotentialSampler {
    fn sample(&self, t: f64, points: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Array2<f64>)>;
}

impl<F> PotentialSampler for F
where
    F: Fn(f64, ArrayView2<'_, f64>) -> Result<(Vec<f64>, Array2<f64>)>,
{
    fn sample(&self, t: f64, points: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Array2<f64>)> {
        self(t, points)
    }
}

/// Samples a potential network with first-order jets.
pub fn network_potential(net: &FieldNetwork) -> impl PotentialSampler + '_ {
    move |t: f64, points: ArrayView2<'_, f64>| -> Result<(Vec<f64>, Array2<f64>)> {
        let (n, d) = points.dim();
        let mut inputs = Array2::zeros((n, d + 1));
        inputs.column_mut(0).fill(t);
        inputs.slice_mut(ndarray::s![.., 1..]).assign(&points);
        let tape = net.jets(inputs.view(), JetOrder::First)?;
        let values = (0..n).map(|p| tape.value(p)).collect();
        let grads = Array2::from_shape_fn((n, d), |(p, i)| tape.grad(p, i));
        Ok((values, grads))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FvResult {
    /// Terminal cell averages, last axis fastest.
    pub rho: Vec<f64>,
    pub steps: usize,
    pub initial_mass: f64,
    pub final_mass: f64,
}

/// Face reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FvScheme {
    /// Cell average of the upwind cell; first order.
    #[default]
    Upwind,
    /// Van Leer limited slopes; second order away from extrema.
    Muscl,
}

const CFL: f64 = 0.4;
const VELOCITY_LIMIT: f64 = 1e8;

struct Face {
    left: usize,
    right: usize,
    // the cells beyond `left` and `right` along the axis, if inside the grid
    outer_left: Option<usize>,
    outer_right: Option<usize>,
}

struct Layout {
    cells: Vec<usize>,
    h: Vec<f64>,
    // sample rows: cell centres, then interior faces of axis 0, then axis 1
    points: Array2<f64>,
    // per axis: (first row in `points`, faces)
    faces: Vec<(usize, Vec<Face>)>,
}

fn layout(grid: &GridShape) -> Result<Layout> {
    let d = grid.cells.len();
    if !(1..=2).contains(&d) {
        return Err(Error::Oracle("finite volumes support 1D and 2D grids only".into()));
    }
    let cells = grid.cells.clone();
    let h: Vec<f64> = (0..d).map(|a| grid.spacing(a)).collect();
    let centres = grid.centres();
    let mut rows: Vec<Vec<f64>> = centres.rows().into_iter().map(|r| r.to_vec()).collect();
    let stride = |a: usize| if d == 2 && a == 0 { cells[1] } else { 1 };
    let mut faces = Vec::new();
    for a in 0..d {
        let start = rows.len();
        let mut list = Vec::new();
        for c in 0..centres.nrows() {
            let idx_a = if d == 2 && a == 1 {
                c % cells[1]
            } else if d == 2 {
                c / cells[1]
            } else {
                c
            };
            if idx_a + 1 < cells[a] {
                let right = c + stride(a);
                let mut p = rows[c].clone();
                p[a] += 0.5 * h[a];
                rows.push(p);
                list.push(Face {
                    left: c,
                    right,
                    outer_left: (idx_a > 0).then(|| c - stride(a)),
                    outer_right: (idx_a + 2 < cells[a]).then(|| right + stride(a)),
                });
            }
        }
        faces.push((start, list));
    }
    let points = Array2::from_shape_fn((rows.len(), d), |(r, c)| rows[r][c]);
    Ok(Layout {
        cells,
        h,
        points,
        faces,
    })
}

/// Samples the potential at time `t` and returns `(dρ/dt, max |v|, max |φ|)`.
fn van_leer(a: f64, b: f64) -> f64 {
    if a * b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

fn rhs(
    lay: &Layout,
    phi: &dyn PotentialSampler,
    eta: f64,
    scheme: FvScheme,
    t: f64,
    rho: &[f64],
) -> Result<(Vec<f64>, f64, f64)> {
    let n: usize = lay.cells.iter().product();
    let (values, grads) = phi.sample(t, lay.points.view())?;
    let mut out: Vec<f64> = (0..n).map(|c| 0.5 * eta * values[c] * rho[c]).collect();
    let phi_max = values[..n].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut v_max: f64 = 0.0;
    for (a, (start, list)) in lay.faces.iter().enumerate() {
        for (k, f) in list.iter().enumerate() {
            let (l, r) = (f.left, f.right);
            let v = grads[[start + k, a]];
            v_max = v_max.max(v.abs());
            let state = match (scheme, v > 0.0) {
                (FvScheme::Upwind, true) => rho[l],
                (FvScheme::Upwind, false) => rho[r],
                (FvScheme::Muscl, true) => {
                    rho[l]
                        + 0.5
                            * f.outer_left
                                .map_or(0.0, |ll| van_leer(rho[l] - rho[ll], rho[r] - rho[l]))
                }
                (FvScheme::Muscl, false) => {
                    rho[r]
                        - 0.5
                            * f.outer_right
                                .map_or(0.0, |rr| van_leer(rho[r] - rho[l], rho[rr] - rho[r]))
                }
            };
            let flux = v * state;
            out[l] -= flux / lay.h[a];
            out[r] += flux / lay.h[a];
        }
    }
    if !v_max.is_finite() || v_max > VELOCITY_LIMIT || !phi_max.is_finite() {
        return Err(Error::UnboundedVelocity(v_max));
    }
    Ok((out, v_max, phi_max))
}

fn stable_dt(lay: &Layout, v_max: f64, phi_max: f64, eta: f64) -> f64 {
    let h_min = lay.h.iter().copied().fold(f64::INFINITY, f64::min);
    let d = lay.cells.len() as f64;
    let adv = if v_max > 0.0 {
        CFL * h_min / (d * v_max)
    } else {
        f64::INFINITY
    };
    let src = if eta * phi_max > 0.0 {
        CFL / (0.5 * eta * phi_max)
    } else {
        f64::INFINITY
    };
    adv.min(src).min(0.01)
}

/// Integrates from `rho0` (cell averages, last axis fastest) over `t ∈ [0, 1]`
/// with the first-order upwind scheme.
pub fn fv_integrate_continuity(
    phi: &dyn PotentialSampler,
    rho0: &[f64],
    grid: &GridShape,
    eta: f64,
) -> Result<FvResult> {
    fv_integrate_with(phi, rho0, grid, eta, FvScheme::Upwind)
}

/// [`fv_integrate_continuity`] with a choice of face reconstruction.
pub fn fv_integrate_with(
    phi: &dyn PotentialSampler,
    rho0: &[f64],
    grid: &GridShape,
    eta: f64,
    scheme: FvScheme,
) -> Result<FvResult> {
    let lay = layout(grid)?;
    let n: usize = lay.cells.iter().product();
    if rho0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rho0.len(),
        });
    }
    let vol = grid.cell_volume();
    let mut rho = rho0.to_vec();
    let mut t = 0.0;
    let mut steps = 0;
    while t < 1.0 - 1e-14 {
        let (k1, v1, p1) = rhs(&lay, phi, eta, scheme, t, &rho)?;
        let mut dt = stable_dt(&lay, v1, p1, eta).min(1.0 - t);
        loop {
            let stage: Vec<f64> = rho.iter().zip(&k1).map(|(r, k)| r + dt * k).collect();
            let (k2, v2, p2) = rhs(&lay, phi, eta, scheme, t + dt, &stage)?;
            if dt > stable_dt(&lay, v2, p2, eta) * 2.0 && dt > 1e-12 {
                dt *= 0.5;
                continue;
            }
            rho = rho
                .iter()
                .zip(&stage)
                .zip(&k2)
                .map(|((r, s), k)| 0.5 * r + 0.5 * (s + dt * k))
                .collect();
            break;
        }
        t += dt;
        steps += 1;
    }
    Ok(FvResult {
        initial_mass: rho0.iter().sum::<f64>() * vol,
        final_mass: rho.iter().sum::<f64>() * vol,
        rho,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize) -> GridShape {
        GridShape {
            lower: vec![0.0],
            upper: vec![1.0],
            cells: vec![n],
        }
    }

    #[test]
    fn zero_potential_keeps_the_density() {
        let g = grid1(20);
        let rho0: Vec<f64> = (0..20).map(|i| 1.0 + (i as f64 * 0.3).sin()).collect();
        let zero = |_t: f64, p: ArrayView2<'_, f64>| Ok((vec![0.0; p.nrows()], Array2::zeros(p.dim())));
        let r = fv_integrate_continuity(&zero, &rho0, &g, 0.0).unwrap();
        assert_eq!(r.rho, rho0);
    }

    #[test]
    fn constant_potential_grows_by_the_closed_form_factor() {
        let g = grid1(8);
        let (eta, phi0) = (2.0, 1.0);
        let phi = move |t: f64, p: ArrayView2<'_, f64>| {
            let v = phi0 / (1.0 + 0.25 * eta * phi0 * t);
            Ok((vec![v; p.nrows()], Array2::zeros(p.dim())))
        };
        let r = fv_integrate_continuity(&phi, &[1.0; 8], &g, eta).unwrap();
        let expected = (1.0 + 0.25 * eta * phi0).powi(2);
        for v in r.rho {
            assert!((v / expected - 1.0).abs() < 1e-2);
        }
    }

    #[test]
    fn unbounded_velocity_aborts() {
        let g = grid1(4);
        let phi =
            |_t: f64, p: ArrayView2<'_, f64>| Ok((vec![0.0; p.nrows()], Array2::from_elem(p.dim(), f64::INFINITY)));
        assert!(matches!(
            fv_integrate_continuity(&phi, &[1.0; 4], &g, 0.0),
            Err(Error::UnboundedVelocity(_))
        ));
    }
}
