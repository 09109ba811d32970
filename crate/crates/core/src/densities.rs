//! Initial and target densities: Gaussian mixtures in a box, Gaussian bumps
//! measured in ambient distance for surfaces, and 28×28 raster images.

use std::io::Read;
use std::path::Path;

use crate::{Error, Result};

/// `coefficient · ρ_G(x; μ, Σ)` with
/// `ρ_G = (2π)^{-1/2} |Σ|^{-1/2} exp(−½ (x−μ)ᵀ Σ⁻¹ (x−μ))`.
///
/// The normalising constant carries `(2π)^{1/2}` whatever the dimension, so in
/// 2D the total mass of a unit-coefficient component is `√(2π)`, not 1.
#[derive(Clone, Debug, PartialEq)]
pub struct EuclideanGaussian {
    pub coefficient: f64,
    pub mean: Vec<f64>,
    cov: Vec<f64>,
    // lower Cholesky factor, row-major
    chol: Vec<f64>,
    norm: f64,
}

impl EuclideanGaussian {
    pub fn new(coefficient: f64, mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.len() != d * d {
            return Err(Error::Density(format!(
                "covariance must be {d}×{d} for a {d}-dimensional mean"
            )));
        }
        if !(coefficient > 0.0) {
            return Err(Error::Density(format!(
                "coefficient must be positive, got {coefficient}"
            )));
        }
        for i in 0..d {
            for j in 0..i {
                if (cov[i * d + j] - cov[j * d + i]).abs() > 1e-12 * (1.0 + cov[i * d + j].abs()) {
                    return Err(Error::Density("covariance is not symmetric".into()));
                }
            }
        }
        let chol = cholesky(&cov, d).ok_or_else(|| Error::Density("covariance is singular or indefinite".into()))?;
        let det_sqrt: f64 = (0..d).map(|i| chol[i * d + i]).product();
        let norm = coefficient / ((2.0 * std::f64::consts::PI).sqrt() * det_sqrt);
        Ok(Self {
            coefficient,
            mean,
            cov,
            chol,
            norm,
        })
    }

    /// Isotropic covariance `s · I`.
    pub fn isotropic(coefficient: f64, mean: Vec<f64>, s: f64) -> Result<Self> {
        let d = mean.len();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = s;
        }
        Self::new(coefficient, mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> &[f64] {
        &self.cov
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        // forward substitution L y = x − μ, then the exponent is −½|y|²
        let mut y = [0.0; 8];
        let mut q = 0.0;
        for i in 0..d {
            let mut r = x[i] - self.mean[i];
            for j in 0..i {
                r -= self.chol[i * d + j] * y[j];
            }
            y[i] = r / self.chol[i * d + i];
            q += y[i] * y[i];
        }
        self.norm * (-0.5 * q).exp()
    }
}

fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    if d > 8 {
        return None;
    }
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// `coefficient · c · exp(−|μ − x|² / σ)`, the bump used on point clouds.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldGaussian {
    pub coefficient: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub scale: f64,
}

/// Peak height of a unit-coefficient manifold Gaussian.
pub const MANIFOLD_GAUSSIAN_SCALE: f64 = 100.0;

impl ManifoldGaussian {
    pub fn new(coefficient: f64, mean: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Density(format!("sigma must be positive, got {sigma}")));
        }
        if !(coefficient > 0.0) {
            return Err(Error::Density(format!(
                "coefficient must be positive, got {coefficient}"
            )));
        }
        Ok(Self {
            coefficient,
            mean,
            sigma,
            scale: MANIFOLD_GAUSSIAN_SCALE,
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = self.mean.iter().zip(x).map(|(m, v)| (m - v) * (m - v)).sum();
        self.coefficient * self.scale * (-r2 / self.sigma).exp()
    }
}

/// Non-negative raster on a rectangle, interpolated bilinearly between pixel
/// centres. Row 0 is the top of the image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageDensity {
    width: usize,
    height: usize,
    // row-major, already scaled to density units
    values: Vec<f64>,
    extent: [f64; 4],
}

/// Largest accepted raster side.
pub const IMAGE_SIDE: usize = 28;
/// Default density assigned to a full-intensity pixel.
pub const DEFAULT_INTENSITY_SCALE: f64 = 10.0;

impl ImageDensity {
    /// `intensities` in `[0, 1]`, row-major with row 0 at the top; the density
    /// is `scale · intensity` over `extent = [x_min, x_max, y_min, y_max]`.
    pub fn new(width: usize, height: usize, intensities: &[f64], scale: f64, extent: [f64; 4]) -> Result<Self> {
        if width == 0 || height == 0 || intensities.len() != width * height {
            return Err(Error::Density("image size does not match its data".into()));
        }
        if width > IMAGE_SIDE || height > IMAGE_SIDE {
            return Err(Error::Density(format!(
                "images larger than {IMAGE_SIDE}×{IMAGE_SIDE} are not supported (got {width}×{height})"
            )));
        }
        if intensities.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Density("image values must be finite and non-negative".into()));
        }
        if !(scale >= 0.0) || !(extent[1] > extent[0]) || !(extent[3] > extent[2]) {
            return Err(Error::Density("invalid image scale or extent".into()));
        }
        Ok(Self {
            width,
            height,
            values: intensities.iter().map(|v| v * scale).collect(),
            extent,
        })
    }

    /// Reads a plain (P2) or raw (P5) PGM file; intensities are `value / maxval`.
    pub fn from_pgm(path: &Path, scale: f64, extent: [f64; 4]) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let (w, h, vals) = parse_pgm(&bytes)?;
        Self::new(w, h, &vals, scale, extent)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn extent(&self) -> [f64; 4] {
        self.extent
    }

    /// Density at the centre of pixel `(row, col)`.
    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Physical centre of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        let [x0, x1, y0, y1] = self.extent;
        [
            x0 + (col as f64 + 0.5) / self.width as f64 * (x1 - x0),
            y1 - (row as f64 + 0.5) / self.height as f64 * (y1 - y0),
        ]
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let [x0, x1, y0, y1] = self.extent;
        let (px, py) = (x[0], x[1]);
        if !(px >= x0 && px <= x1 && py >= y0 && py <= y1) {
            return 0.0;
        }
        // continuous pixel coordinates, centres at integers
        let u = ((px - x0) / (x1 - x0) * self.width as f64 - 0.5).clamp(0.0, (self.width - 1) as f64);
        let v = ((y1 - py) / (y1 - y0) * self.height as f64 - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (c0, r0) = (u.floor() as usize, v.floor() as usize);
        let (c1, r1) = ((c0 + 1).min(self.width - 1), (r0 + 1).min(self.height - 1));
        let (fu, fv) = (u - c0 as f64, v - r0 as f64);
        let top = self.pixel(r0, c0) * (1.0 - fu) + self.pixel(r0, c1) * fu;
        let bottom = self.pixel(r1, c0) * (1.0 - fu) + self.pixel(r1, c1) * fu;
        top * (1.0 - fv) + bottom * fv
    }
}

fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let bad = |msg: &str| Error::format("pgm", msg.to_string());
    let mut pos = 0;
    let token = |pos: &mut usize| -> Option<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = token(&mut pos).ok_or_else(|| bad("empty file"))?;
    let number = |pos: &mut usize, what: &str| -> Result<usize> {
        token(pos)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(&format!("missing {what}")))
    };
    let w = number(&mut pos, "width")?;
    let h = number(&mut pos, "height")?;
    let maxval = number(&mut pos, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval out of range"));
    }
    if w > IMAGE_SIDE || h > IMAGE_SIDE {
        return Err(Error::Density(format!(
            "images larger than {IMAGE_SIDE}×{IMAGE_SIDE} are not supported (got {w}×{h})"
        )));
    }
    let count = w * h;
    let mut raw = Vec::with_capacity(count);
    match magic.as_str() {
        "P2" => {
            for _ in 0..count {
                raw.push(number(&mut pos, "pixel")?);
            }
        }
        "P5" => {
            // exactly one whitespace byte separates maxval from the raster
            pos += 1;
            let bpp = if maxval < 256 { 1 } else { 2 };
            let data = bytes
                .get(pos..pos + count * bpp)
                .ok_or_else(|| bad("truncated raster"))?;
            for px in data.chunks_exact(bpp) {
                raw.push(if bpp == 1 {
                    px[0] as usize
                } else {
                    ((px[0] as usize) << 8) | px[1] as usize
                });
            }
        }
        _ => return Err(bad("expected P2 or P5 header")),
    }
    if raw.iter().any(|&v| v > maxval) {
        return Err(bad("pixel exceeds maxval"));
    }
    Ok((w, h, raw.into_iter().map(|v| v as f64 / maxval as f64).collect()))
}

/// A density used as an endpoint of a transport problem.
#[derive(Clone, Debug, PartialEq)]
pub enum DensitySpec {
    /// Sum of [`EuclideanGaussian`] components.
    EuclideanMixture(Vec<EuclideanGaussian>),
    /// Sum of [`ManifoldGaussian`] components.
    ManifoldMixture(Vec<ManifoldGaussian>),
    Image(ImageDensity),
}

impl DensitySpec {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            DensitySpec::EuclideanMixture(cs) => cs.iter().map(|c| c.eval(x)).sum(),
            DensitySpec::ManifoldMixture(cs) => cs.iter().map(|c| c.eval(x)).sum(),
            DensitySpec::Image(img) => img.eval(x),
        }
    }

    /// Ambient dimension the density expects.
    pub fn dim(&self) -> usize {
        match self {
            DensitySpec::EuclideanMixture(cs) => cs.first().map_or(0, |c| c.dim()),
            DensitySpec::ManifoldMixture(cs) => cs.first().map_or(0, |c| c.mean.len()),
            DensitySpec::Image(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            DensitySpec::EuclideanMixture(_) => "euclidean_gaussian_mixture",
            DensitySpec::ManifoldMixture(_) => "manifold_gaussian_mixture",
            DensitySpec::Image(_) => "image_grid",
        }
    }

    /// Copy with every coefficient (or every pixel) multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::Density(format!("scale factor must be positive, got {factor}")));
        }
        Ok(match self {
            DensitySpec::EuclideanMixture(cs) => DensitySpec::EuclideanMixture(
                cs.iter()
                    .map(|c| EuclideanGaussian::new(c.coefficient * factor, c.mean.clone(), c.cov.clone()))
                    .collect::<Result<_>>()?,
            ),
            DensitySpec::ManifoldMixture(cs) => DensitySpec::ManifoldMixture(
                cs.iter()
                    .map(|c| ManifoldGaussian {
                        coefficient: c.coefficient * factor,
                        ..c.clone()
                    })
                    .collect(),
            ),
            DensitySpec::Image(img) => DensitySpec::Image(ImageDensity {
                values: img.values.iter().map(|v| v * factor).collect(),
                ..img.clone()
            }),
        })
    }
}

/// Procedural 28×28 rasters for the shape-transfer presets. Each shape is
/// drawn with 4×4 supersampling so edges carry fractional coverage.
pub mod shapes {
    use std::f64::consts::PI;

    use super::IMAGE_SIDE;

    /// Coverage raster of an inside test over `[0,1]²`, row 0 at the top.
    pub fn rasterize(inside: impl Fn(f64, f64) -> bool) -> Vec<f64> {
        let n = IMAGE_SIDE;
        let sub = 4;
        let mut out = vec![0.0; n * n];
        for row in 0..n {
            for col in 0..n {
                let mut hits = 0;
                for a in 0..sub {
                    for b in 0..sub {
                        let x = (col as f64 + (b as f64 + 0.5) / sub as f64) / n as f64;
                        let y = 1.0 - (row as f64 + (a as f64 + 0.5) / sub as f64) / n as f64;
                        if inside(x, y) {
                            hits += 1;
                        }
                    }
                }
                out[row * n + col] = hits as f64 / (sub * sub) as f64;
            }
        }
        out
    }

    pub fn disc() -> Vec<f64> {
        rasterize(|x, y| (x - 0.5).powi(2) + (y - 0.5).powi(2) <= 0.3f64.powi(2))
    }

    fn in_triangle(p: (f64, f64), a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
        let cross = |o: (f64, f64), u: (f64, f64), v: (f64, f64)| (u.0 - o.0) * (v.1 - o.1) - (u.1 - o.1) * (v.0 - o.0);
        let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
        let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
        let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
        !(neg && pos)
    }

    fn regular_triangle(r: f64, phase: f64) -> [(f64, f64); 3] {
        let v = |k: f64| {
            let a = phase + k * 2.0 * PI / 3.0;
            (0.5 + r * a.cos(), 0.5 + r * a.sin())
        };
        [v(0.0), v(1.0), v(2.0)]
    }

    /// Six-pointed star: union of two opposed equilateral triangles.
    pub fn hexagram() -> Vec<f64> {
        let up = regular_triangle(0.38, PI / 2.0);
        let down = regular_triangle(0.38, -PI / 2.0);
        rasterize(|x, y| in_triangle((x, y), up[0], up[1], up[2]) || in_triangle((x, y), down[0], down[1], down[2]))
    }

    pub fn triangle() -> Vec<f64> {
        let t = regular_triangle(0.38, PI / 2.0);
        rasterize(|x, y| in_triangle((x, y), t[0], t[1], t[2]))
    }

    /// Face outline with two eyes and a smile.
    pub fn smiley() -> Vec<f64> {
        rasterize(|x, y| {
            let r = ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt();
            let ring = (0.30..=0.38).contains(&r);
            let eye = |cx: f64| (x - cx).powi(2) + (y - 0.6).powi(2) <= 0.05f64.powi(2);
            let m = ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt();
            let mouth = y < 0.45 && (0.16..=0.22).contains(&m);
            ring || eye(0.38) || eye(0.62) || mouth
        })
    }

    fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        let s = if len2 == 0.0 {
            0.0
        } else {
            (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
        };
        ((p.0 - a.0 - s * dx).powi(2) + (p.1 - a.1 - s * dy).powi(2)).sqrt()
    }

    /// Handwriting-like digit drawn as a thick polyline.
    pub fn digit(d: u8) -> Option<Vec<f64>> {
        let strokes: Vec<Vec<(f64, f64)>> = match d {
            0 => vec![ellipse_points(0.5, 0.5, 0.18, 0.3, 24)],
            1 => vec![vec![(0.42, 0.72), (0.52, 0.8), (0.52, 0.2)]],
            2 => vec![vec![
                (0.32, 0.68),
                (0.42, 0.78),
                (0.58, 0.78),
                (0.68, 0.66),
                (0.64, 0.52),
                (0.32, 0.22),
                (0.7, 0.22),
            ]],
            3 => vec![vec![
                (0.32, 0.74),
                (0.6, 0.8),
                (0.68, 0.66),
                (0.5, 0.52),
                (0.68, 0.38),
                (0.6, 0.22),
                (0.32, 0.26),
            ]],
            4 => vec![vec![(0.6, 0.2), (0.6, 0.8), (0.3, 0.42), (0.72, 0.42)]],
            5 => vec![vec![
                (0.68, 0.8),
                (0.36, 0.8),
                (0.34, 0.54),
                (0.6, 0.56),
                (0.68, 0.4),
                (0.6, 0.22),
                (0.32, 0.24),
            ]],
            6 => vec![vec![
                (0.64, 0.8),
                (0.4, 0.6),
                (0.34, 0.34),
                (0.5, 0.2),
                (0.66, 0.32),
                (0.6, 0.48),
                (0.36, 0.44),
            ]],
            7 => vec![vec![(0.3, 0.78), (0.7, 0.78), (0.46, 0.2)]],
            8 => vec![
                ellipse_points(0.5, 0.64, 0.14, 0.14, 20),
                ellipse_points(0.5, 0.34, 0.17, 0.16, 20),
            ],
            9 => vec![vec![
                (0.64, 0.62),
                (0.5, 0.5),
                (0.36, 0.62),
                (0.5, 0.78),
                (0.64, 0.66),
                (0.6, 0.2),
            ]],
            _ => return None,
        };
        Some(rasterize(|x, y| {
            strokes
                .iter()
                .any(|s| s.windows(2).any(|w| segment_distance((x, y), w[0], w[1]) <= 0.055))
        }))
    }

    fn ellipse_points(cx: f64, cy: f64, rx: f64, ry: f64, n: usize) -> Vec<(f64, f64)> {
        (0..=n)
            .map(|k| {
                let a = k as f64 / n as f64 * 2.0 * PI;
                (cx + rx * a.cos(), cy + ry * a.sin())
            })
            .collect()
    }
}
