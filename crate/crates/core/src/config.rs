//! TOML run configuration.
//!
//! Every key is optional. A file may name a base `preset`; the sections
//! below override individual fields of it.
//!
//! The accepted keys are listed in [`KEY_REFERENCE`].
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::densities::{DensitySpec, EuclideanGaussian, ImageDensity, ManifoldGaussian, DEFAULT_INTENSITY_SCALE};
use crate::geometry::{NoiseSpec, SurfaceId};
use crate::problems::{build_preset, CloudSource, Domain, ProblemSpec};
use crate::training::TrainConfig;
use crate::{Error, Result};

/// Every accepted key with an example value.
pub const KEY_REFERENCE: &str = r#"preset = "A"

[problem]
name = "my-run"
eta = 2.0
n_time = 10
lambda_c = 1000.0
lambda_hj = 1000.0
lambda_ic = 1000.0
lambda_bc = 1000.0          # defaults to lambda_ic
domain = "box"              # "box", "surface" or "cloud"
lower = [0.0, 0.0]          # box
upper = [1.0, 1.0]
cells = [30, 30]
surface = "sphere"          # surface: sphere, ellipsoid, peanut, torus, opener
resolution = 16
embed_4d = false
noise_x = 0.0               # relative point noise
noise_n = 0.0               # relative normal noise
noise_seed = 1
cloud = "points.csv"        # cloud: point-cloud CSV

[training]
learning_rate = 1e-3
beta1 = 0.9
beta2 = 0.999
eps = 1e-8
max_iters = 20000
stop_threshold = 0.1
log_interval = 100
seed = 0
hidden = [64, 64, 64]
chunk = 32

[rho0]                      # and [rho1]
kind = "gaussian"           # "gaussian", "manifold_gaussian" or "image"
components = [{ coefficient = 1.0, mean = [0.4, 0.4], variance = 0.01 }]
# gaussian components take `variance` (s·I) or a row-major `cov`;
# manifold_gaussian components take `sigma`.
# image: path = "digit.pgm", scale = 10.0, extent = [0.0, 1.0, 0.0, 1.0]
"#;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    problem: Option<RawProblem>,
    training: Option<RawTraining>,
    rho0: Option<RawDensity>,
    rho1: Option<RawDensity>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    name: Option<String>,
    eta: Option<f64>,
    n_time: Option<usize>,
    lambda_c: Option<f64>,
    lambda_hj: Option<f64>,
    lambda_ic: Option<f64>,
    lambda_bc: Option<f64>,
    domain: Option<String>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
    cells: Option<Vec<usize>>,
    surface: Option<String>,
    resolution: Option<usize>,
    embed_4d: Option<bool>,
    noise_x: Option<f64>,
    noise_n: Option<f64>,
    noise_seed: Option<u64>,
    cloud: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    learning_rate: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    eps: Option<f64>,
    max_iters: Option<usize>,
    stop_threshold: Option<f64>,
    log_interval: Option<usize>,
    seed: Option<u64>,
    hidden: Option<Vec<usize>>,
    chunk: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDensity {
    kind: String,
    #[serde(default)]
    components: Vec<RawComponent>,
    path: Option<PathBuf>,
    scale: Option<f64>,
    extent: Option<[f64; 4]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComponent {
    #[serde(default = "one")]
    coefficient: f64,
    mean: Vec<f64>,
    variance: Option<f64>,
    cov: Option<Vec<f64>>,
    sigma: Option<f64>,
}

fn one() -> f64 {
    1.0
}

/// A parsed configuration, applied on top of a base problem and training
/// configuration.
#[derive(Debug)]
pub struct RunConfig {
    raw: RawConfig,
    base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            raw,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &dir)
    }

    pub fn preset(&self) -> Option<&str> {
        self.raw.preset.as_deref()
    }

    /// Overrides of `spec` and `train` with every key present in the file.
    pub fn apply(&self, spec: &mut ProblemSpec, train: &mut TrainConfig) -> Result<()> {
        if let Some(p) = &self.raw.problem {
            self.apply_problem(p, spec)?;
        }
        if let Some(t) = &self.raw.training {
            set(&mut train.learning_rate, t.learning_rate);
            set(&mut train.beta1, t.beta1);
            set(&mut train.beta2, t.beta2);
            set(&mut train.eps, t.eps);
            set(&mut train.max_iters, t.max_iters);
            set(&mut train.stop_threshold, t.stop_threshold);
            set(&mut train.log_interval, t.log_interval);
            set(&mut train.seed, t.seed);
            set(&mut train.hidden, t.hidden.clone());
            set(&mut train.chunk, t.chunk);
        }
        if let Some(d) = &self.raw.rho0 {
            spec.rho0 = self.density(d)?;
        }
        if let Some(d) = &self.raw.rho1 {
            spec.rho1 = self.density(d)?;
        }
        spec.validate()?;
        train.validate()
    }

    /// Resolves the base preset (`preset_override` wins over the file's own
    /// `preset` key) and applies the file on top of it.
    pub fn resolve(&self, preset_override: Option<&str>) -> Result<(ProblemSpec, TrainConfig)> {
        let id = preset_override
            .or(self.preset())
            .ok_or_else(|| Error::Config("no preset given; set `preset` or pass one".into()))?;
        let mut spec = build_preset(id)?;
        let mut train = TrainConfig::default();
        self.apply(&mut spec, &mut train)?;
        Ok((spec, train))
    }

    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn apply_problem(&self, p: &RawProblem, spec: &mut ProblemSpec) -> Result<()> {
        set(&mut spec.name, p.name.clone());
        set(&mut spec.eta, p.eta);
        set(&mut spec.n_time, p.n_time);
        let w = &mut spec.weights;
        let boundary_follows = p.lambda_bc.is_none() && w.boundary == w.endpoint;
        set(&mut w.continuity, p.lambda_c);
        set(&mut w.hj, p.lambda_hj);
        set(&mut w.endpoint, p.lambda_ic);
        if boundary_follows {
            w.boundary = w.endpoint;
        }
        set(&mut w.boundary, p.lambda_bc);
        let kind = p.domain.clone().unwrap_or_else(|| {
            match &spec.domain {
                Domain::Box { .. } => "box",
                Domain::Cloud(CloudSource::Surface { .. }) => "surface",
                Domain::Cloud(CloudSource::File(_)) => "cloud",
            }
            .to_string()
        });
        spec.domain = match kind.as_str() {
            "box" => {
                let (mut lower, mut upper, mut cells) = match &spec.domain {
                    Domain::Box { lower, upper, cells } => (lower.clone(), upper.clone(), cells.clone()),
                    _ => (Vec::new(), Vec::new(), Vec::new()),
                };
                set(&mut lower, p.lower.clone());
                set(&mut upper, p.upper.clone());
                set(&mut cells, p.cells.clone());
                Domain::Box { lower, upper, cells }
            }
            "surface" => {
                let (mut id, mut resolution, mut embed_4d, mut noise) = match &spec.domain {
                    Domain::Cloud(CloudSource::Surface {
                        id,
                        resolution,
                        embed_4d,
                        noise,
                    }) => (*id, *resolution, *embed_4d, *noise),
                    _ => (SurfaceId::Sphere, SurfaceId::Sphere.reference_resolution(), false, None),
                };
                if let Some(name) = &p.surface {
                    id = SurfaceId::ALL
                        .iter()
                        .copied()
                        .find(|s| s.name() == name.to_lowercase())
                        .ok_or_else(|| Error::Config(format!("unknown surface `{name}`")))?;
                    if p.resolution.is_none() {
                        resolution = id.reference_resolution();
                    }
                }
                set(&mut resolution, p.resolution);
                set(&mut embed_4d, p.embed_4d);
                if p.noise_x.is_some() || p.noise_n.is_some() || p.noise_seed.is_some() {
                    let base = noise.unwrap_or(NoiseSpec {
                        omega_x: 0.0,
                        omega_n: 0.0,
                        seed: 1,
                    });
                    let spec = NoiseSpec {
                        omega_x: p.noise_x.unwrap_or(base.omega_x),
                        omega_n: p.noise_n.unwrap_or(base.omega_n),
                        seed: p.noise_seed.unwrap_or(base.seed),
                    };
                    spec.validate()?;
                    noise = (spec.omega_x > 0.0 || spec.omega_n > 0.0).then_some(spec);
                }
                Domain::Cloud(CloudSource::Surface {
                    id,
                    resolution,
                    embed_4d,
                    noise,
                })
            }
            "cloud" => {
                let path = match (&p.cloud, &spec.domain) {
                    (Some(c), _) => self.path(c),
                    (None, Domain::Cloud(CloudSource::File(f))) => f.clone(),
                    _ => return Err(Error::Config("domain = \"cloud\" needs a `cloud` path".into())),
                };
                Domain::Cloud(CloudSource::File(path))
            }
            other => return Err(Error::Config(format!("unknown domain `{other}`"))),
        };
        Ok(())
    }

    fn density(&self, d: &RawDensity) -> Result<DensitySpec> {
        match d.kind.as_str() {
            "gaussian" => {
                let comps = d
                    .components
                    .iter()
                    .map(|c| match (&c.cov, c.variance) {
                        (Some(cov), None) => EuclideanGaussian::new(c.coefficient, c.mean.clone(), cov.clone()),
                        (None, Some(s)) => EuclideanGaussian::isotropic(c.coefficient, c.mean.clone(), s),
                        _ => Err(Error::Config(
                            "gaussian components need exactly one of `variance`, `cov`".into(),
                        )),
                    })
                    .collect::<Result<Vec<_>>>()?;
                nonempty(&comps)?;
                Ok(DensitySpec::EuclideanMixture(comps))
            }
            "manifold_gaussian" => {
                let comps = d
                    .components
                    .iter()
                    .map(|c| {
                        let sigma = c
                            .sigma
                            .ok_or_else(|| Error::Config("manifold_gaussian components need `sigma`".into()))?;
                        ManifoldGaussian::new(c.coefficient, c.mean.clone(), sigma)
                    })
                    .collect::<Result<Vec<_>>>()?;
                nonempty(&comps)?;
                Ok(DensitySpec::ManifoldMixture(comps))
            }
            "image" => {
                let path = d
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("image densities need `path`".into()))?;
                Ok(DensitySpec::Image(ImageDensity::from_pgm(
                    &self.path(path),
                    d.scale.unwrap_or(DEFAULT_INTENSITY_SCALE),
                    d.extent.unwrap_or([0.0, 1.0, 0.0, 1.0]),
                )?))
            }
            other => Err(Error::Config(format!("unknown density kind `{other}`"))),
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn nonempty<T>(v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(Error::Config("density needs at least one component".into()))
    } else {
        Ok(())
    }
}
