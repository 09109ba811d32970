//! Text formats: point clouds, field snapshots, loss logs, and PGM renders.
//!
//! All CSV files carry a header row. Numbers are written in scientific
//! notation with 9 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::geometry::{SurfacePointCloud, TangentFrame};
use crate::residuals::LossReport;
use crate::{Error, Result};

/// `x` with 9 significant digits.
pub fn sci(x: f64) -> String {
    format!("{x:.8e}")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Splits a CSV body into its header and numeric rows.
fn parse_csv(kind: &'static str, text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::format(kind, "empty file"))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(kind, format!("row {}: {e}", k + 1)))?;
        if row.len() != header.len() {
            return Err(Error::format(
                kind,
                format!("row {} has {} fields, header has {}", k + 1, row.len(), header.len()),
            ));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Point cloud as CSV with header `x0..x{d-1}, n{j}_{c}.., w`: coordinates,
/// the components of each unit normal, and a quadrature weight.
pub fn write_point_cloud(cloud: &SurfacePointCloud, path: &Path) -> Result<()> {
    write_file(path, &point_cloud_csv(cloud))
}

pub fn point_cloud_csv(cloud: &SurfacePointCloud) -> String {
    let d = cloud.dim();
    let k = cloud.codim();
    let mut cols: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    for j in 0..k {
        cols.extend((0..d).map(|c| format!("n{j}_{c}")));
    }
    cols.push("w".into());
    let mut out = cols.join(",");
    out.push('\n');
    for (i, frame) in cloud.frames().iter().enumerate() {
        let mut fields: Vec<String> = cloud.point(i).iter().map(|&v| sci(v)).collect();
        for n in frame.normals() {
            fields.extend(n.iter().map(|&v| sci(v)));
        }
        fields.push(sci(cloud.weights()[i]));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Reads a point cloud written by [`write_point_cloud`]. Weights are treated
/// as relative.
pub fn read_point_cloud(path: &Path) -> Result<SurfacePointCloud> {
    parse_point_cloud(&read_file(path)?)
}

pub fn parse_point_cloud(text: &str) -> Result<SurfacePointCloud> {
    let kind = "point cloud";
    let (header, rows) = parse_csv(kind, text)?;
    let d = header.iter().filter(|h| h.starts_with('x')).count();
    if d == 0 || header.last().map(String::as_str) != Some("w") {
        return Err(Error::format(kind, "header must be x0.., n0_0.., w"));
    }
    let normal_cols = header.len() - d - 1;
    if normal_cols % d != 0 {
        return Err(Error::format(
            kind,
            "normal columns must come in groups of the dimension",
        ));
    }
    let k = normal_cols / d;
    if rows.is_empty() {
        return Err(Error::format(kind, "no points"));
    }
    let mut points = Array2::zeros((rows.len(), d));
    let mut frames = Vec::with_capacity(rows.len());
    let mut weights = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        for a in 0..d {
            points[[i, a]] = row[a];
        }
        let normals = (0..k).map(|j| row[d + j * d..d + (j + 1) * d].to_vec()).collect();
        frames.push(TangentFrame::new(d, normals)?);
        weights.push(row[d + k * d]);
    }
    SurfacePointCloud::new(points, frames, weights, false)
}

/// Fields of both networks at one time on every spatial sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    /// Sample positions, one per row.
    pub positions: Array2<f64>,
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
    pub g: Vec<f64>,
    /// Velocity `P∇φ`, one row per sample.
    pub v: Array2<f64>,
    /// Cell counts per axis when the samples are a cell-centred grid with the
    /// last axis fastest.
    pub grid: Option<Vec<usize>>,
}

impl Snapshot {
    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn header(d: usize) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((0..d).map(|a| format!("x{a}")));
        cols.extend(["rho", "phi", "g"].map(String::from));
        cols.extend((0..d).map(|a| format!("v{a}")));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = Self::header(d);
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&sci(self.t));
            for a in 0..d {
                let _ = write!(out, ",{}", sci(self.positions[[i, a]]));
            }
            let _ = write!(out, ",{},{},{}", sci(self.rho[i]), sci(self.phi[i]), sci(self.g[i]));
            for a in 0..d {
                let _ = write!(out, ",{}", sci(self.v[[i, a]]));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let kind = "snapshot";
        let (header, rows) = parse_csv(kind, text)?;
        if header.len() < 6 || (header.len() - 4) % 2 != 0 {
            return Err(Error::format(kind, "unexpected column count"));
        }
        let d = (header.len() - 4) / 2;
        if header.join(",") != Self::header(d) {
            return Err(Error::format(kind, format!("header must be `{}`", Self::header(d))));
        }
        let n = rows.len();
        let t = rows.first().map_or(0.0, |r| r[0]);
        if rows.iter().any(|r| r[0] != t) {
            return Err(Error::format(kind, "all rows must share one time"));
        }
        let mut s = Snapshot {
            t,
            positions: Array2::zeros((n, d)),
            rho: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
            g: Vec::with_capacity(n),
            v: Array2::zeros((n, d)),
            grid: None,
        };
        for (i, r) in rows.iter().enumerate() {
            for a in 0..d {
                s.positions[[i, a]] = r[1 + a];
                s.v[[i, a]] = r[4 + d + a];
            }
            s.rho.push(r[1 + d]);
            s.phi.push(r[2 + d]);
            s.g.push(r[3 + d]);
        }
        s.grid = infer_grid(&s.positions);
        Ok(s)
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        if self
            .rho
            .iter()
            .chain(&self.phi)
            .chain(&self.g)
            .chain(self.v.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("snapshot field"));
        }
        write_file(path, &self.to_csv())
    }

    pub fn import(path: &Path) -> Result<Self> {
        Self::from_csv(&read_file(path)?)
    }
}

/// Recognises a 2D cell-centred grid laid out with the last axis fastest.
fn infer_grid(pos: &Array2<f64>) -> Option<Vec<usize>> {
    if pos.ncols() != 2 || pos.nrows() < 2 {
        return None;
    }
    let n = pos.nrows();
    let ny = (1..n).find(|&i| pos[[i, 0]] != pos[[0, 0]]).unwrap_or(n);
    if n % ny != 0 {
        return None;
    }
    let nx = n / ny;
    let tol = 1e-6;
    for i in 0..nx {
        for j in 0..ny {
            let r = i * ny + j;
            if (pos[[r, 0]] - pos[[i * ny, 0]]).abs() > tol || (pos[[r, 1]] - pos[[j, 1]]).abs() > tol {
                return None;
            }
        }
    }
    Some(vec![nx, ny])
}

/// Min–max normalised `ρ` of a planar grid snapshot as an 8-bit PGM (P5).
/// Image rows run along decreasing `x1`, columns along increasing `x0`. A
/// constant field renders black.
pub fn render_planar(snapshot: &Snapshot, path: &Path) -> Result<()> {
    let bytes = render_planar_bytes(snapshot)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn render_planar_bytes(snapshot: &Snapshot) -> Result<Vec<u8>> {
    let grid = match (&snapshot.grid, snapshot.dim()) {
        (Some(g), 2) if g.len() == 2 => g.clone(),
        _ => return Err(Error::format("render", "only planar grid snapshots can be rendered")),
    };
    let (nx, ny) = (grid[0], grid[1]);
    let lo = snapshot.rho.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = snapshot.rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::NonFinite("snapshot density"));
    }
    let span = hi - lo;
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    for row in 0..ny {
        let j = ny - 1 - row;
        for i in 0..nx {
            let v = snapshot.rho[i * ny + j];
            let level = if span > 0.0 { (v - lo) / span } else { 0.0 };
            out.push((level * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub const LOSS_LOG_HEADER: &str = "iter,L_c,L_hj,L_ic,L_bc,total,W_M";

pub fn loss_log_line(iter: usize, r: &LossReport) -> String {
    format!(
        "{iter},{},{},{},{},{},{}",
        sci(r.continuity),
        sci(r.hj),
        sci(r.endpoint),
        sci(r.boundary),
        sci(r.total),
        sci(r.cost)
    )
}

pub fn loss_log_csv(history: &[(usize, LossReport)]) -> String {
    let mut out = String::from(LOSS_LOG_HEADER);
    out.push('\n');
    for (iter, r) in history {
        out.push_str(&loss_log_line(*iter, r));
        out.push('\n');
    }
    out
}

pub fn write_loss_log(history: &[(usize, LossReport)], path: &Path) -> Result<()> {
    write_file(path, &loss_log_csv(history))
}

pub fn parse_loss_log(text: &str) -> Result<Vec<(usize, LossReport)>> {
    let (header, rows) = parse_csv("loss log", text)?;
    if header.join(",") != LOSS_LOG_HEADER {
        return Err(Error::format("loss log", format!("header must be `{LOSS_LOG_HEADER}`")));
    }
    Ok(rows
        .iter()
        .map(|r| {
            (
                r[0] as usize,
                LossReport {
                    continuity: r[1],
                    hj: r[2],
                    endpoint: r[3],
                    boundary: r[4],
                    total: r[5],
                    cost: r[6],
                },
            )
        })
        .collect())
}
