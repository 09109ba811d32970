//! Mesh-free solver for dynamic unbalanced optimal transport.
//!
//! Two scalar-field networks, a density `rho(t, x)` and a potential
//! `phi(t, x)`, are trained on collocation points so that they satisfy the
//! optimality system of the Wasserstein–Fisher–Rao problem
//!
//! ```text
//! d_t rho + div_G(rho grad_G phi) = (eta / 2) rho phi
//! d_t phi + |grad_G phi|^2 / 2   = -(eta / 4) phi^2
//! rho(0) = rho_0,  rho(1) = rho_1
//! ```
//!
//! on a box in `R^d` or on a closed surface given as a point cloud with
//! normals. The optimal velocity and growth rate follow as `v = grad_G phi`
//! and `g = (eta / 2) phi`.

pub mod config;
pub mod densities;
pub mod error;
pub mod fieldnet;
pub mod geometry;
pub mod io;
pub mod oracle;
pub mod problems;
pub mod residuals;
pub mod training;

pub use densities::{DensitySpec, EuclideanGaussian, ImageDensity, ManifoldGaussian};
pub use error::{Error, Result};
pub use fieldnet::{Activation, FieldJet, FieldNetwork, JetOrder, JetTape, OutputHead, ParamGradient};
pub use geometry::{ImplicitSurface, NoiseSpec, SurfaceId, SurfacePointCloud, TangentFrame};
pub use problems::{build_collocation, build_preset, CollocationSet, Domain, LossWeights, Mode, ProblemSpec};
