//! Problem specifications, the preset catalogue, and collocation plans.
//!
//! Euclidean problems live on a box sampled at cell centres; surface problems
//! live on a point cloud. Both are crossed with a uniform time grid that
//! includes `t = 0` and `t = 1`, and the endpoint penalty reads the rows at
//! those two times.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::path::PathBuf;

use ndarray::{Array2, Array3};

use crate::densities::{
    shapes, DensitySpec, EuclideanGaussian, ImageDensity, ManifoldGaussian, DEFAULT_INTENSITY_SCALE, IMAGE_SIDE,
};
use crate::geometry::{
    add_noise, rotate_embed_4d, sample_isosurface, ImplicitSurface, NoiseSpec, SurfaceId, SurfacePointCloud,
    TangentFrame,
};
use crate::{Error, Result};

/// Where the spatial samples come from.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    /// Axis-aligned box split into `cells[i]` equal cells per axis; samples
    /// sit at cell centres.
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        cells: Vec<usize>,
    },
    /// Point cloud with normal frames.
    Cloud(CloudSource),
}

#[derive(Clone, Debug, PartialEq)]
pub enum CloudSource {
    /// Isosurface sample of a preset surface, optionally lifted into `R⁴`
    /// and/or perturbed.
    Surface {
        id: SurfaceId,
        resolution: usize,
        embed_4d: bool,
        noise: Option<NoiseSpec>,
    },
    /// Point-cloud CSV file.
    File(PathBuf),
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lower, .. } => lower.len(),
            Domain::Cloud(CloudSource::Surface { embed_4d, .. }) => {
                if *embed_4d {
                    4
                } else {
                    3
                }
            }
            Domain::Cloud(CloudSource::File(_)) => 0,
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, Domain::Box { .. })
    }
}

/// `OT` when there is no source term (`η = 0`), `UOT` otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Ot,
    Uot,
}

/// Penalty weights of the four loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub continuity: f64,
    pub hj: f64,
    pub endpoint: f64,
    pub boundary: f64,
}

impl LossWeights {
    /// Boundary weight defaults to the endpoint weight.
    pub fn new(continuity: f64, hj: f64, endpoint: f64) -> Self {
        Self {
            continuity,
            hj,
            endpoint,
            boundary: endpoint,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Domain,
    pub rho0: DensitySpec,
    pub rho1: DensitySpec,
    pub eta: f64,
    pub weights: LossWeights,
    pub n_time: usize,
}

impl ProblemSpec {
    pub fn mode(&self) -> Mode {
        if self.eta == 0.0 {
            Mode::Ot
        } else {
            Mode::Uot
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Problem(m));
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return bad(format!("eta must be finite and non-negative, got {}", self.eta));
        }
        let w = self.weights;
        if [w.continuity, w.hj, w.endpoint, w.boundary]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return bad("loss weights must be non-negative".into());
        }
        if self.n_time < 2 {
            return bad(format!("need at least 2 time samples, got {}", self.n_time));
        }
        if let Domain::Box { lower, upper, cells } = &self.domain {
            if lower.is_empty() || lower.len() != upper.len() || lower.len() != cells.len() {
                return bad("box bounds and cell counts must share one dimension".into());
            }
            if lower.iter().zip(upper).any(|(l, u)| !(u > l)) || cells.iter().any(|&c| c == 0) {
                return bad("box must have positive extent and at least one cell per axis".into());
            }
        }
        let d = self.domain.dim();
        for (label, rho) in [("rho0", &self.rho0), ("rho1", &self.rho1)] {
            if d != 0 && rho.dim() != d {
                return bad(format!(
                    "{label} is {}-dimensional, domain is {d}-dimensional",
                    rho.dim()
                ));
            }
        }
        Ok(())
    }
}

/// Every preset id, in catalogue order.
pub const PRESET_IDS: &[&str] = &[
    "A",
    "B",
    "C-eta100",
    "C-eta1",
    "C-eta1e-6",
    "Sphere",
    "Ellipsoid",
    "Peanut",
    "Torus",
    "Opener",
    "S-G4",
    "S-MG4",
    "M1",
    "M2",
    "noise-n1",
    "noise-n5",
    "noise-n10",
    "noise-x1",
    "noise-x5",
    "noise-x10",
    "noise-xn1",
    "noise-xn5",
    "noise-xn10",
    "shape-disc-hexagram",
    "shape-triangle-smiley",
    "shape-digits",
    "desk-translation",
    "desk-growth",
];

/// One-line description of a preset.
pub fn preset_summary(id: &str) -> Option<&'static str> {
    Some(match id {
        "A" => "2D Gaussian shift with growth, eta = 2",
        "B" => "2D Gaussian split into four, eta = 2",
        "C-eta100" => "1D split with eta = 100 (growth dominates)",
        "C-eta1" => "1D split with eta = 1 (balanced)",
        "C-eta1e-6" => "1D split with eta = 1e-6 (transport dominates)",
        "Sphere" => "OT between the poles of a sphere",
        "Ellipsoid" => "OT across an ellipsoid",
        "Peanut" => "OT between the lobes of a peanut surface",
        "Torus" => "OT across a torus",
        "Opener" => "OT on a bottle-opener surface",
        "S-G4" => "OT on a sphere rotated into 4D",
        "S-MG4" => "OT from one bump to four on a sphere in 4D",
        "M1" => "UOT merging four half bumps on a sphere",
        "M2" => "UOT splitting one bump into four half bumps",
        "noise-n1" => "Sphere OT, 1% normal noise",
        "noise-n5" => "Sphere OT, 5% normal noise",
        "noise-n10" => "Sphere OT, 10% normal noise",
        "noise-x1" => "Sphere OT, 1% point noise",
        "noise-x5" => "Sphere OT, 5% point noise",
        "noise-x10" => "Sphere OT, 10% point noise",
        "noise-xn1" => "Sphere OT, 1% point and normal noise",
        "noise-xn5" => "Sphere OT, 5% point and normal noise",
        "noise-xn10" => "Sphere OT, 10% point and normal noise",
        "shape-disc-hexagram" => "28x28 shape transfer, disc to hexagram",
        "shape-triangle-smiley" => "28x28 shape transfer, triangle to smiley",
        "shape-digits" => "28x28 shape transfer between two drawn digits",
        "desk-translation" => "unit-mass Gaussian translated by (0.2, 0.2), eta = 0",
        "desk-growth" => "unit-mass Gaussian growing fourfold in place, eta = 2",
        _ => return None,
    })
}

const NOISE_SEED: u64 = 20240;

fn gauss(coefficient: f64, mean: &[f64], s: f64) -> Result<EuclideanGaussian> {
    EuclideanGaussian::isotropic(coefficient, mean.to_vec(), s)
}

fn mgauss(coefficient: f64, mean: &[f64], sigma: f64) -> Result<ManifoldGaussian> {
    ManifoldGaussian::new(coefficient, mean.to_vec(), sigma)
}

fn unit_box(d: usize, cells: usize) -> Domain {
    Domain::Box {
        lower: vec![0.0; d],
        upper: vec![1.0; d],
        cells: vec![cells; d],
    }
}

fn surface(id: SurfaceId) -> Domain {
    Domain::Cloud(CloudSource::Surface {
        id,
        resolution: id.reference_resolution(),
        embed_4d: false,
        noise: None,
    })
}

/// The four half-weight bumps on the sphere's equator.
fn rho_mg() -> Result<DensitySpec> {
    let centres = [[0.5, 0.0, 0.5], [0.5, 1.0, 0.5], [0.0, 0.5, 0.5], [1.0, 0.5, 0.5]];
    Ok(DensitySpec::ManifoldMixture(
        centres.iter().map(|c| mgauss(0.5, c, 0.01)).collect::<Result<_>>()?,
    ))
}

fn image(values: &[f64]) -> Result<DensitySpec> {
    Ok(DensitySpec::Image(ImageDensity::new(
        IMAGE_SIDE,
        IMAGE_SIDE,
        values,
        DEFAULT_INTENSITY_SCALE,
        [0.0, 1.0, 0.0, 1.0],
    )?))
}

/// Builds a preset by id; see [`PRESET_IDS`].
pub fn build_preset(id: &str) -> Result<ProblemSpec> {
    let mixture = |cs: Vec<EuclideanGaussian>| DensitySpec::EuclideanMixture(cs);
    let manifold = |cs: Vec<ManifoldGaussian>| DensitySpec::ManifoldMixture(cs);
    let spec = |domain: Domain, rho0, rho1, eta, weights, n_time| ProblemSpec {
        name: id.to_string(),
        domain,
        rho0,
        rho1,
        eta,
        weights,
        n_time,
    };
    let planar = LossWeights::new(1000.0, 1000.0, 1000.0);
    let on_surface = LossWeights::new(1.0, 1.0, 1000.0);

    let s = match id {
        "A" => spec(
            unit_box(2, 30),
            mixture(vec![gauss(1.0, &[0.4, 0.4], 0.01)?]),
            mixture(vec![gauss(2.0, &[0.6, 0.6], 0.005)?]),
            2.0,
            planar,
            10,
        ),
        "B" => {
            let corners = [[0.3, 0.3], [0.7, 0.3], [0.7, 0.7], [0.3, 0.7]];
            spec(
                unit_box(2, 30),
                mixture(vec![gauss(1.0, &[0.5, 0.5], 0.005)?]),
                mixture(corners.iter().map(|c| gauss(1.0, c, 0.005)).collect::<Result<_>>()?),
                2.0,
                planar,
                10,
            )
        }
        "C-eta100" | "C-eta1" | "C-eta1e-6" => {
            let eta = match id {
                "C-eta100" => 1e2,
                "C-eta1" => 1.0,
                _ => 1e-6,
            };
            spec(
                Domain::Box {
                    lower: vec![0.0],
                    upper: vec![2.0],
                    cells: vec![800],
                },
                mixture(vec![gauss(1.0, &[0.7], 0.005)?]),
                mixture(vec![gauss(0.3, &[0.7], 0.005)?, gauss(0.7, &[1.3], 0.005)?]),
                eta,
                LossWeights::new(100.0, 100.0, 1000.0),
                10,
            )
        }
        "Sphere" | "Ellipsoid" | "Peanut" | "Torus" | "Opener" => {
            let (sid, m0, m1) = surface_endpoints(id);
            spec(
                surface(sid),
                manifold(vec![mgauss(1.0, &m0, 0.01)?]),
                manifold(vec![mgauss(1.0, &m1, 0.01)?]),
                0.0,
                on_surface,
                10,
            )
        }
        "S-G4" | "S-MG4" => {
            let north = [0.5, 0.5, FRAC_1_SQRT_2, FRAC_1_SQRT_2];
            let rho1 = if id == "S-G4" {
                manifold(vec![mgauss(1.0, &[0.5, 0.5, 0.0, 0.0], 0.05)?])
            } else {
                let q = SQRT_2 / 4.0;
                let offsets = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
                manifold(
                    offsets
                        .iter()
                        .map(|(i, j)| mgauss(1.0, &[(1.0 + i) / 2.0, (1.0 + j) / 2.0, q, q], 0.05))
                        .collect::<Result<_>>()?,
                )
            };
            spec(
                Domain::Cloud(CloudSource::Surface {
                    id: SurfaceId::Sphere,
                    resolution: SurfaceId::Sphere.reference_resolution(),
                    embed_4d: true,
                    noise: None,
                }),
                manifold(vec![mgauss(1.0, &north, 0.05)?]),
                rho1,
                0.0,
                LossWeights::new(10.0, 10.0, 1000.0),
                10,
            )
        }
        "M1" | "M2" => {
            let top = manifold(vec![mgauss(1.0, &[0.5, 0.5, 1.0], 0.01)?]);
            let (rho0, rho1) = if id == "M1" { (rho_mg()?, top) } else { (top, rho_mg()?) };
            spec(surface(SurfaceId::Sphere), rho0, rho1, 2.0, on_surface, 10)
        }
        _ if id.starts_with("noise-") => {
            let (omega_x, omega_n) = match id {
                "noise-n1" => (0.0, 0.01),
                "noise-n5" => (0.0, 0.05),
                "noise-n10" => (0.0, 0.10),
                "noise-x1" => (0.01, 0.0),
                "noise-x5" => (0.05, 0.0),
                "noise-x10" => (0.10, 0.0),
                "noise-xn1" => (0.01, 0.01),
                "noise-xn5" => (0.05, 0.05),
                "noise-xn10" => (0.10, 0.10),
                _ => return Err(Error::UnknownPreset(id.into())),
            };
            let mut s = build_preset("Sphere")?;
            s.name = id.into();
            s.domain = Domain::Cloud(CloudSource::Surface {
                id: SurfaceId::Sphere,
                resolution: SurfaceId::Sphere.reference_resolution(),
                embed_4d: false,
                noise: Some(NoiseSpec {
                    omega_x,
                    omega_n,
                    seed: NOISE_SEED,
                }),
            });
            s
        }
        "shape-disc-hexagram" | "shape-triangle-smiley" | "shape-digits" => {
            let (a, b) = match id {
                "shape-disc-hexagram" => (shapes::disc(), shapes::hexagram()),
                "shape-triangle-smiley" => (shapes::triangle(), shapes::smiley()),
                _ => (shapes::digit(1).expect("digit"), shapes::digit(7).expect("digit")),
            };
            spec(unit_box(2, IMAGE_SIDE), image(&a)?, image(&b)?, 2.0, planar, 10)
        }
        "desk-translation" | "desk-growth" => {
            // (2π)^{-1/2} coefficient makes a planar component integrate to 1
            let unit = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
            let (rho0, rho1, eta) = if id == "desk-translation" {
                (
                    mixture(vec![gauss(unit, &[0.4, 0.4], 0.01)?]),
                    mixture(vec![gauss(unit, &[0.6, 0.6], 0.01)?]),
                    0.0,
                )
            } else {
                (
                    mixture(vec![gauss(unit, &[0.5, 0.5], 0.01)?]),
                    mixture(vec![gauss(4.0 * unit, &[0.5, 0.5], 0.01)?]),
                    2.0,
                )
            };
            spec(unit_box(2, 30), rho0, rho1, eta, planar, 10)
        }
        _ => return Err(Error::UnknownPreset(id.into())),
    };
    s.validate()?;
    Ok(s)
}

/// Surface id and the two bump centres of the single-bump surface presets.
fn surface_endpoints(id: &str) -> (SurfaceId, [f64; 3], [f64; 3]) {
    let s6 = 6f64.sqrt();
    match id {
        "Sphere" => (SurfaceId::Sphere, [0.5, 0.5, 0.0], [0.5, 0.5, 1.0]),
        "Ellipsoid" => (
            SurfaceId::Ellipsoid,
            [0.5, 0.5, (6.0 + s6) / 12.0],
            [0.5, 0.5, (6.0 - s6) / 12.0],
        ),
        "Peanut" => {
            let r = 1.2f64.sqrt();
            (
                SurfaceId::Peanut,
                [(2.0 + (1.0 + r).sqrt()) / 4.0, 0.5, 0.5],
                // 1 − √1.2 < 0, so the mirrored lobe centre is used for ρ₁
                [(2.0 - (1.0 + r).sqrt()) / 4.0, 0.5, 0.5],
            )
        }
        "Torus" => {
            let a = (5.0 + 4.0 * FRAC_1_SQRT_2) / 10.0;
            let b = (5.0 - 4.0 * FRAC_1_SQRT_2) / 10.0;
            (SurfaceId::Torus, [a, a, 0.5], [b, b, 0.5])
        }
        "Opener" => {
            let r = ((1.0 + (1.0 + 2.0 * (1.0f64 / 15.0).sqrt()).sqrt()) / 10.0).sqrt();
            (
                SurfaceId::Opener,
                [(1.0 + r) / 2.0, 0.5, 0.5],
                [0.5, (1.0 - r) / 2.0, 0.5],
            )
        }
        _ => unreachable!("not a surface preset"),
    }
}

/// Regular cell-centred grid of a box domain.
#[derive(Clone, Debug, PartialEq)]
pub struct GridShape {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridShape {
    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.cells[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.cells.len()).map(|a| self.spacing(a)).product()
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell centres, last axis fastest.
    pub fn centres(&self) -> Array2<f64> {
        let d = self.cells.len();
        let n = self.len();
        let mut out = Array2::zeros((n, d));
        for r in 0..n {
            let mut rem = r;
            for a in (0..d).rev() {
                let i = rem % self.cells[a];
                rem /= self.cells[a];
                out[[r, a]] = self.lower[a] + (i as f64 + 0.5) * self.spacing(a);
            }
        }
        out
    }
}

/// Everything the loss needs, precomputed once per run.
#[derive(Clone, Debug)]
pub struct CollocationSet {
    pub dim: usize,
    /// Uniform times including both endpoints.
    pub times: Vec<f64>,
    /// Spatial samples, one per row.
    pub spatial: Array2<f64>,
    pub frames: Vec<TangentFrame>,
    /// Spatial quadrature weights.
    pub weights: Vec<f64>,
    /// Whether `weights` are in area units (otherwise relative).
    pub weights_are_absolute: bool,
    /// Rows `(t, x)`, time-major: row `it * n_spatial + i`.
    pub interior: Array2<f64>,
    /// Orthonormal tangent directions of each spatial sample, `(n_spatial, m, d)`.
    pub tangents: Array3<f64>,
    pub rho0: Vec<f64>,
    pub rho1: Vec<f64>,
    /// Boundary rows `(t, x)` and their outward unit normals (box domains only).
    pub boundary: Array2<f64>,
    pub boundary_normals: Array2<f64>,
    pub grid: Option<GridShape>,
}

impl CollocationSet {
    pub fn n_spatial(&self) -> usize {
        self.spatial.nrows()
    }

    pub fn n_time(&self) -> usize {
        self.times.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior.nrows()
    }

    pub fn tangent_dim(&self) -> usize {
        self.tangents.dim().1
    }

    /// Spatial index of interior row `row`.
    pub fn spatial_index(&self, row: usize) -> usize {
        row % self.n_spatial()
    }
}

/// Builds the cloud a surface domain refers to.
pub fn build_cloud(source: &CloudSource) -> Result<SurfacePointCloud> {
    match source {
        CloudSource::Surface {
            id,
            resolution,
            embed_4d,
            noise,
        } => {
            let mut cloud = sample_isosurface(ImplicitSurface::new(*id), *resolution)?;
            if let Some(spec) = noise {
                cloud = add_noise(&cloud, spec)?;
            }
            if *embed_4d {
                cloud = rotate_embed_4d(&cloud)?;
            }
            Ok(cloud)
        }
        CloudSource::File(path) => crate::io::read_point_cloud(path),
    }
}

/// Tensor product of the time grid with the spatial samples, plus boundary
/// samples for box domains.
pub fn build_collocation(spec: &ProblemSpec) -> Result<CollocationSet> {
    spec.validate()?;
    let (spatial, frames, weights, absolute, grid) = match &spec.domain {
        Domain::Box { lower, upper, cells } => {
            let grid = GridShape {
                lower: lower.clone(),
                upper: upper.clone(),
                cells: cells.clone(),
            };
            let pts = grid.centres();
            let d = lower.len();
            let n = pts.nrows();
            let frames = vec![TangentFrame::euclidean(d); n];
            (pts, frames, vec![grid.cell_volume(); n], true, Some(grid))
        }
        Domain::Cloud(source) => {
            let cloud = build_cloud(source)?;
            let absolute = cloud.weights_are_absolute;
            (
                cloud.points().clone(),
                cloud.frames().to_vec(),
                cloud.weights().to_vec(),
                absolute,
                None,
            )
        }
    };
    let d = spatial.ncols();
    for (label, rho) in [("rho0", &spec.rho0), ("rho1", &spec.rho1)] {
        if rho.dim() != d {
            return Err(Error::Problem(format!(
                "{label} is {}-dimensional but the samples are {d}-dimensional",
                rho.dim()
            )));
        }
    }
    let n_s = spatial.nrows();
    let n_t = spec.n_time;
    let times: Vec<f64> = (0..n_t).map(|k| k as f64 / (n_t - 1) as f64).collect();

    let mut interior = Array2::zeros((n_t * n_s, d + 1));
    for (it, &t) in times.iter().enumerate() {
        for i in 0..n_s {
            let r = it * n_s + i;
            interior[[r, 0]] = t;
            for a in 0..d {
                interior[[r, 1 + a]] = spatial[[i, a]];
            }
        }
    }

    let m = frames.first().map_or(d, |f| f.tangents().len());
    let mut tangents = Array3::zeros((n_s, m, d));
    for (i, f) in frames.iter().enumerate() {
        if f.tangents().len() != m {
            return Err(Error::Problem("all samples must share one codimension".into()));
        }
        for (a, tau) in f.tangents().iter().enumerate() {
            for c in 0..d {
                tangents[[i, a, c]] = tau[c];
            }
        }
    }

    let row = |i: usize| spatial.row(i).to_vec();
    let rho0: Vec<f64> = (0..n_s).map(|i| spec.rho0.eval(&row(i))).collect();
    let rho1: Vec<f64> = (0..n_s).map(|i| spec.rho1.eval(&row(i))).collect();

    let (boundary, boundary_normals) = match &grid {
        Some(g) => boundary_samples(g, &times),
        None => (Array2::zeros((0, d + 1)), Array2::zeros((0, d))),
    };

    Ok(CollocationSet {
        dim: d,
        times,
        spatial,
        frames,
        weights,
        weights_are_absolute: absolute,
        interior,
        tangents,
        rho0,
        rho1,
        boundary,
        boundary_normals,
        grid,
    })
}

/// Face-centred samples on every face of the box at every time: each face
/// gets the cell centres of the grid restricted to it.
fn boundary_samples(grid: &GridShape, times: &[f64]) -> (Array2<f64>, Array2<f64>) {
    let d = grid.cells.len();
    let mut pts: Vec<Vec<f64>> = Vec::new();
    let mut normals: Vec<Vec<f64>> = Vec::new();
    for axis in 0..d {
        let others: Vec<usize> = (0..d).filter(|&a| a != axis).collect();
        let count: usize = others.iter().map(|&a| grid.cells[a]).product();
        for (value, sign) in [(grid.lower[axis], -1.0), (grid.upper[axis], 1.0)] {
            for r in 0..count {
                let mut p = vec![0.0; d];
                p[axis] = value;
                let mut rem = r;
                for &a in others.iter().rev() {
                    let i = rem % grid.cells[a];
                    rem /= grid.cells[a];
                    p[a] = grid.lower[a] + (i as f64 + 0.5) * grid.spacing(a);
                }
                let mut n = vec![0.0; d];
                n[axis] = sign;
                pts.push(p);
                normals.push(n);
            }
        }
    }
    let nb = pts.len();
    let mut rows = Array2::zeros((nb * times.len(), d + 1));
    let mut nrm = Array2::zeros((nb * times.len(), d));
    for (it, &t) in times.iter().enumerate() {
        for (j, (p, n)) in pts.iter().zip(&normals).enumerate() {
            let r = it * nb + j;
            rows[[r, 0]] = t;
            for a in 0..d {
                rows[[r, 1 + a]] = p[a];
                nrm[[r, a]] = n[a];
            }
        }
    }
    (rows, nrm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_preset_builds() {
        for id in PRESET_IDS {
            let s = build_preset(id).unwrap_or_else(|e| panic!("{id}: {e}"));
            assert_eq!(s.name, *id);
            assert!(preset_summary(id).is_some());
        }
        assert!(matches!(build_preset("Q"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn test_a_collocation_counts() {
        let c = build_collocation(&build_preset("A").unwrap()).unwrap();
        assert_eq!(c.n_interior(), 9000);
        assert_eq!(c.n_spatial(), 900);
        assert_eq!(c.boundary.nrows(), 4 * 30 * 10);
        assert_eq!(c.times.first(), Some(&0.0));
        assert_eq!(c.times.last(), Some(&1.0));
        let total: f64 = c.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_time_samples_are_the_endpoints() {
        let mut s = build_preset("C-eta1").unwrap();
        s.n_time = 2;
        let c = build_collocation(&s).unwrap();
        assert_eq!(c.times, vec![0.0, 1.0]);
        s.n_time = 1;
        assert!(build_collocation(&s).is_err());
    }

    #[test]
    fn surface_endpoint_centres_lie_on_their_surfaces() {
        for id in ["Sphere", "Ellipsoid", "Peanut"] {
            let (sid, a, b) = surface_endpoints(id);
            let f = ImplicitSurface::new(sid);
            assert!(f.level(a).abs() < 1e-12, "{id} rho0 centre");
            assert!(f.level(b).abs() < 1e-12, "{id} rho1 centre");
        }
    }

    #[test]
    fn surface_endpoint_bumps_are_visible_on_the_cloud() {
        for id in ["Sphere", "Ellipsoid", "Peanut", "Torus", "Opener"] {
            let c = build_collocation(&build_preset(id).unwrap()).unwrap();
            for (label, v) in [("rho0", &c.rho0), ("rho1", &c.rho1)] {
                let peak = v.iter().copied().fold(0.0, f64::max);
                assert!(peak > 10.0, "{id} {label} peak {peak}");
            }
        }
    }
}
