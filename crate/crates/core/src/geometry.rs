//! Point clouds with normal frames, tangential projection, and the preset
//! implicit surfaces.
//!
//! A sample carries an orthonormal `d × k` normal frame `N`; the tangent
//! projector is `P = I − N Nᵀ`. Euclidean collocation uses `k = 0`, i.e.
//! `P = I`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Orthonormal normal frame at one sample, with its cached tangent projector.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentFrame {
    d: usize,
    normals: Vec<Vec<f64>>,
    tangents: Vec<Vec<f64>>,
    proj: Vec<f64>,
}

impl TangentFrame {
    /// `P = I`: no normal directions.
    pub fn euclidean(d: usize) -> Self {
        let mut proj = vec![0.0; d * d];
        for i in 0..d {
            proj[i * d + i] = 1.0;
        }
        let tangents = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            d,
            normals: Vec::new(),
            tangents,
            proj,
        }
    }

    /// Builds a frame from normal columns, rejecting non-orthonormal input.
    pub fn new(d: usize, normals: Vec<Vec<f64>>) -> Result<Self> {
        for n in &normals {
            if n.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: n.len(),
                });
            }
        }
        let deviation = gram_deviation(&normals);
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::NonOrthonormalFrame { deviation });
        }
        let mut proj = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let nn: f64 = normals.iter().map(|n| n[i] * n[j]).sum();
                proj[i * d + j] = if i == j { 1.0 } else { 0.0 } - nn;
            }
        }
        let tangents = complete_basis(d, &normals);
        Ok(Self {
            d,
            normals,
            tangents,
            proj,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn codim(&self) -> usize {
        self.normals.len()
    }

    pub fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }

    /// Orthonormal basis of the tangent space, `d − k` vectors.
    pub fn tangents(&self) -> &[Vec<f64>] {
        &self.tangents
    }

    /// Row-major `d × d` projector.
    pub fn projector(&self) -> &[f64] {
        &self.proj
    }

    /// `P · v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.apply_into(v, &mut out);
        out
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            out[i] = (0..d).map(|j| self.proj[i * d + j] * v[j]).sum();
        }
    }

    /// `trace(P · H)` for a row-major `d × d` matrix.
    pub fn trace_with(&self, hess: &[f64]) -> f64 {
        let d = self.d;
        let mut tr = 0.0;
        for i in 0..d {
            for j in 0..d {
                tr += self.proj[i * d + j] * hess[j * d + i];
            }
        }
        tr
    }
}

// Gram–Schmidt over the coordinate axes, taking the axis with the largest
// remaining component each round.
fn complete_basis(d: usize, normals: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = normals.to_vec();
    let mut tangents = Vec::with_capacity(d.saturating_sub(normals.len()));
    while basis.len() < d {
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = -1.0;
        for axis in 0..d {
            let mut v: Vec<f64> = (0..d).map(|j| if j == axis { 1.0 } else { 0.0 }).collect();
            for _ in 0..2 {
                for b in &basis {
                    let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > best_norm {
                best_norm = norm;
                best = Some(v);
            }
        }
        let mut v = best.expect("d > 0");
        v.iter_mut().for_each(|x| *x /= best_norm);
        basis.push(v.clone());
        tangents.push(v);
    }
    tangents
}

/// `max |NᵀN − I|` over the frame's Gram matrix.
pub fn gram_deviation(normals: &[Vec<f64>]) -> f64 {
    let mut dev: f64 = 0.0;
    for (a, na) in normals.iter().enumerate() {
        for (b, nb) in normals.iter().enumerate() {
            let dot: f64 = na.iter().zip(nb).map(|(x, y)| x * y).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            dev = dev.max((dot - target).abs());
        }
    }
    dev
}

/// `P · vec` for an explicit `d × k` frame (columns are normals).
pub fn projection_apply(normal_basis: &Array2<f64>, vec: &[f64]) -> Result<Vec<f64>> {
    Ok(frame_from_columns(normal_basis)?.apply(vec))
}

/// `trace(P · H)`; with `k = 0` this is the Euclidean Laplacian `trace(H)`.
pub fn tangential_hessian_trace(normal_basis: &Array2<f64>, hess: &Array2<f64>) -> Result<f64> {
    let frame = frame_from_columns(normal_basis)?;
    let d = frame.dim();
    if hess.dim() != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: hess.nrows(),
        });
    }
    let flat: Vec<f64> = hess.iter().copied().collect();
    Ok(frame.trace_with(&flat))
}

fn frame_from_columns(basis: &Array2<f64>) -> Result<TangentFrame> {
    let d = basis.nrows();
    let cols = basis.columns().into_iter().map(|c| c.to_vec()).collect();
    TangentFrame::new(d, cols)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SurfaceId {
    Sphere,
    Ellipsoid,
    Peanut,
    Torus,
    Opener,
}

impl SurfaceId {
    pub const ALL: [SurfaceId; 5] = [
        SurfaceId::Sphere,
        SurfaceId::Ellipsoid,
        SurfaceId::Peanut,
        SurfaceId::Torus,
        SurfaceId::Opener,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SurfaceId::Sphere => "sphere",
            SurfaceId::Ellipsoid => "ellipsoid",
            SurfaceId::Peanut => "peanut",
            SurfaceId::Torus => "torus",
            SurfaceId::Opener => "opener",
        }
    }

    /// Reference sample counts of the five preset clouds.
    pub fn reference_count(self) -> usize {
        match self {
            SurfaceId::Sphere => 1158,
            SurfaceId::Ellipsoid => 1222,
            SurfaceId::Peanut => 1430,
            SurfaceId::Torus => 2120,
            SurfaceId::Opener => 1410,
        }
    }

    /// Grid resolution at which the isosurface scan yields roughly the
    /// reference count.
    pub fn reference_resolution(self) -> usize {
        match self {
            SurfaceId::Sphere => 16,
            SurfaceId::Ellipsoid => 25,
            SurfaceId::Peanut => 33,
            SurfaceId::Torus => 25,
            SurfaceId::Opener => 33,
        }
    }

    /// Surface area when it has a closed form.
    pub fn analytic_area(self) -> Option<f64> {
        match self {
            SurfaceId::Sphere => Some(4.0 * PI * 0.25),
            SurfaceId::Torus => Some(4.0 * PI * PI * 0.3 * 0.2),
            _ => None,
        }
    }
}

/// Closed surface `{F = 0}` in the unit cube.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImplicitSurface {
    pub id: SurfaceId,
}

impl ImplicitSurface {
    pub fn new(id: SurfaceId) -> Self {
        Self { id }
    }

    pub fn level(&self, p: [f64; 3]) -> f64 {
        let (x, y, z) = (p[0] - 0.5, p[1] - 0.5, p[2] - 0.5);
        match self.id {
            SurfaceId::Sphere => x * x + y * y + z * z - 0.25,
            SurfaceId::Ellipsoid => x * x + 3.0 * y * y + 6.0 * z * z - 0.25,
            SurfaceId::Peanut => {
                let r = 8.0 * y * y + 8.0 * z * z;
                let a = 4.0 * x - 1.0;
                let b = 4.0 * x + 1.0;
                (a * a + r) * (b * b + r) - 1.2
            }
            SurfaceId::Torus => {
                let q = 0.3 - (x * x + y * y).sqrt();
                q * q + z * z - 0.04
            }
            SurfaceId::Opener => {
                let q = 3.0 * x * x * (1.0 - 5.0 * x * x) - 5.0 * y * y;
                q * q + 5.0 * z * z - 1.0 / 60.0
            }
        }
    }

    pub fn gradient(&self, p: [f64; 3]) -> [f64; 3] {
        let (x, y, z) = (p[0] - 0.5, p[1] - 0.5, p[2] - 0.5);
        match self.id {
            SurfaceId::Sphere => [2.0 * x, 2.0 * y, 2.0 * z],
            SurfaceId::Ellipsoid => [2.0 * x, 6.0 * y, 12.0 * z],
            SurfaceId::Peanut => {
                let r = 8.0 * y * y + 8.0 * z * z;
                let a = 4.0 * x - 1.0;
                let b = 4.0 * x + 1.0;
                let (u, v) = (a * a + r, b * b + r);
                // d/dx: 8a·v + u·8b ; d/dy: 16y (u + v) ; d/dz: 16z (u + v)
                [8.0 * a * v + 8.0 * b * u, 16.0 * y * (u + v), 16.0 * z * (u + v)]
            }
            SurfaceId::Torus => {
                let rho = (x * x + y * y).sqrt().max(1e-300);
                let q = 0.3 - rho;
                [-2.0 * q * x / rho, -2.0 * q * y / rho, 2.0 * z]
            }
            SurfaceId::Opener => {
                let q = 3.0 * x * x * (1.0 - 5.0 * x * x) - 5.0 * y * y;
                let dqdx = 6.0 * x - 60.0 * x * x * x;
                [2.0 * q * dqdx, 2.0 * q * (-10.0 * y), 10.0 * z]
            }
        }
    }

    /// Newton iteration along the gradient direction onto `F = 0`.
    pub fn project(&self, mut p: [f64; 3]) -> Option<[f64; 3]> {
        for _ in 0..60 {
            let f = self.level(p);
            if f.abs() <= 1e-14 {
                break;
            }
            let g = self.gradient(p);
            let g2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
            if g2 < 1e-24 {
                return None;
            }
            let step = f / g2;
            for i in 0..3 {
                p[i] -= step * g[i];
            }
        }
        let g = self.gradient(p);
        let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        (self.level(p).abs() <= 1e-10 && gn > 1e-8).then_some(p)
    }

    /// Outward unit normal `∇F / |∇F|`.
    pub fn normal(&self, p: [f64; 3]) -> [f64; 3] {
        let g = self.gradient(p);
        let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        [g[0] / gn, g[1] / gn, g[2] / gn]
    }
}

/// Samples with orthonormal normal frames and quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfacePointCloud {
    d: usize,
    points: Array2<f64>,
    frames: Vec<TangentFrame>,
    weights: Vec<f64>,
    /// True when weights carry area units; false when they are unit weights.
    pub weights_are_absolute: bool,
}

impl SurfacePointCloud {
    pub fn new(
        points: Array2<f64>,
        frames: Vec<TangentFrame>,
        weights: Vec<f64>,
        weights_are_absolute: bool,
    ) -> Result<Self> {
        let n = points.nrows();
        let d = points.ncols();
        if frames.len() != n || weights.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: frames.len().min(weights.len()),
            });
        }
        let k = frames.first().map_or(0, |f| f.codim());
        if frames.iter().any(|f| f.dim() != d || f.codim() != k) {
            return Err(Error::Problem("inconsistent normal frames".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Problem("quadrature weights must be positive".into()));
        }
        Ok(Self {
            d,
            points,
            frames,
            weights,
            weights_are_absolute,
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn codim(&self) -> usize {
        self.frames.first().map_or(0, |f| f.codim())
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn frames(&self) -> &[TangentFrame] {
        &self.frames
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest Gram deviation over all frames.
    pub fn max_frame_deviation(&self) -> f64 {
        self.frames
            .iter()
            .map(|f| gram_deviation(f.normals()))
            .fold(0.0, f64::max)
    }
}

/// Scans a `resolution³` cell grid over `[0,1]³`, keeps cells whose corner
/// values change sign, and Newton-projects their centres onto the surface.
pub fn sample_isosurface(surface: ImplicitSurface, grid_resolution: usize) -> Result<SurfacePointCloud> {
    if grid_resolution < 8 {
        return Err(Error::Problem(format!(
            "grid resolution must be at least 8, got {grid_resolution}"
        )));
    }
    let n = grid_resolution;
    let h = 1.0 / n as f64;
    let nodes = n + 1;
    let mut values = vec![0.0; nodes * nodes * nodes];
    let idx = |i: usize, j: usize, k: usize| (i * nodes + j) * nodes + k;
    for i in 0..nodes {
        for j in 0..nodes {
            for k in 0..nodes {
                values[idx(i, j, k)] = surface.level([i as f64 * h, j as f64 * h, k as f64 * h]);
            }
        }
    }
    let mut pts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut neg = false;
                let mut pos = false;
                for c in 0..8 {
                    let v = values[idx(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))];
                    neg |= v < 0.0;
                    pos |= v >= 0.0;
                }
                if !(neg && pos) {
                    continue;
                }
                let centre = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h];
                if let Some(p) = surface.project(centre) {
                    pts.push(p);
                }
            }
        }
    }
    if pts.is_empty() {
        return Err(Error::EmptyLevelSet(surface.id.name().into()));
    }
    let count = pts.len();
    let (w, absolute) = match surface.id.analytic_area() {
        Some(area) => (area / count as f64, true),
        None => (1.0, false),
    };
    let mut points = Array2::zeros((count, 3));
    let mut frames = Vec::with_capacity(count);
    for (r, p) in pts.iter().enumerate() {
        for c in 0..3 {
            points[[r, c]] = p[c];
        }
        frames.push(TangentFrame::new(3, vec![surface.normal(*p).to_vec()])?);
    }
    SurfacePointCloud::new(points, frames, vec![w; count], absolute)
}

/// The rotation of the z–w plane by 45°.
pub fn rotation_4d() -> [[f64; 4]; 4] {
    let c = FRAC_1_SQRT_2;
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, c, -c],
        [0.0, 0.0, c, c],
    ]
}

fn mat4_apply(m: &[[f64; 4]; 4], v: [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = (0..4).map(|j| m[i][j] * v[j]).sum();
    }
    out
}

/// Lifts a 3D surface cloud into `R⁴` as `(x, y, z, 0)` and rotates it by
/// [`rotation_4d`]. The normal space becomes two-dimensional: the rotated
/// surface normal and the rotated `e_w`.
pub fn rotate_embed_4d(cloud: &SurfacePointCloud) -> Result<SurfacePointCloud> {
    if cloud.dim() != 3 || cloud.codim() != 1 {
        return Err(Error::Problem(
            "rotate_embed_4d expects a 3D cloud with one normal".into(),
        ));
    }
    let m = rotation_4d();
    let n = cloud.len();
    let mut points = Array2::zeros((n, 4));
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let p = cloud.point(i);
        let q = mat4_apply(&m, [p[0], p[1], p[2], 0.0]);
        for c in 0..4 {
            points[[i, c]] = q[c];
        }
        let nrm = &cloud.frames()[i].normals()[0];
        let n1 = mat4_apply(&m, [nrm[0], nrm[1], nrm[2], 0.0]);
        let n2 = mat4_apply(&m, [0.0, 0.0, 0.0, 1.0]);
        let cols = gram_schmidt(vec![n1.to_vec(), n2.to_vec()]);
        frames.push(TangentFrame::new(4, cols)?);
    }
    SurfacePointCloud::new(points, frames, cloud.weights().to_vec(), cloud.weights_are_absolute)
}

fn gram_schmidt(mut cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for a in 0..cols.len() {
        for b in 0..a {
            let dot: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
            let prev = cols[b].clone();
            for (x, y) in cols[a].iter_mut().zip(&prev) {
                *x -= dot * y;
            }
        }
        let norm = cols[a].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in cols[a].iter_mut() {
            *x /= norm;
        }
    }
    cols
}

/// Gaussian perturbation levels for points (`omega_x`) and normals (`omega_n`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub omega_x: f64,
    pub omega_n: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("omega_x", self.omega_x), ("omega_n", self.omega_n)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Problem(format!("{name} must lie in [0, 1], got {w}")));
            }
        }
        Ok(())
    }
}

fn component_std(rows: impl Iterator<Item = Vec<f64>> + Clone, d: usize) -> Vec<f64> {
    let n = rows.clone().count() as f64;
    let mut mean = vec![0.0; d];
    for r in rows.clone() {
        for c in 0..d {
            mean[c] += r[c] / n;
        }
    }
    let mut var = vec![0.0; d];
    for r in rows {
        for c in 0..d {
            var[c] += (r[c] - mean[c]).powi(2) / n;
        }
    }
    var.into_iter().map(f64::sqrt).collect()
}

/// Adds Gaussian noise with per-component standard deviation `omega · sigma_c`,
/// where `sigma_c` is the spread of component `c` over the clean cloud.
/// Perturbed normal frames are re-orthonormalized.
pub fn add_noise(cloud: &SurfacePointCloud, spec: &NoiseSpec) -> Result<SurfacePointCloud> {
    spec.validate()?;
    let d = cloud.dim();
    let n = cloud.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut points = cloud.points().clone();
    if spec.omega_x > 0.0 {
        let sigma = component_std((0..n).map(|i| cloud.point(i).to_vec()), d);
        for i in 0..n {
            for c in 0..d {
                points[[i, c]] += spec.omega_x * sigma[c] * std_normal.sample(&mut rng);
            }
        }
    }

    let frames = if spec.omega_n > 0.0 {
        let k = cloud.codim();
        let mut frames = Vec::with_capacity(n);
        let sigmas: Vec<Vec<f64>> = (0..k)
            .map(|col| component_std(cloud.frames().iter().map(move |f| f.normals()[col].clone()), d))
            .collect();
        for f in cloud.frames() {
            let mut cols = f.normals().to_vec();
            for (col, sigma) in cols.iter_mut().zip(&sigmas) {
                for c in 0..d {
                    col[c] += spec.omega_n * sigma[c] * std_normal.sample(&mut rng);
                }
            }
            frames.push(TangentFrame::new(d, gram_schmidt(cols))?);
        }
        frames
    } else {
        cloud.frames().to_vec()
    };
    SurfacePointCloud::new(points, frames, cloud.weights().to_vec(), cloud.weights_are_absolute)
}
