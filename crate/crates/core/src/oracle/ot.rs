//! Exact discrete optimal transport by the network simplex method on the
//! complete bipartite graph, with squared Euclidean costs evaluated on the fly.

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// Transportation problem between weighted point sets.
pub struct NetworkSimplex<'a> {
    xs: ArrayView2<'a, f64>,
    ys: ArrayView2<'a, f64>,
    n: usize,
    m: usize,
    // tree arcs (source, sink, flow)
    arcs: Vec<(usize, usize, f64)>,
    // arc indices incident to each node; sinks are offset by n
    adj: Vec<Vec<usize>>,
    parent_arc: Vec<usize>,
    parent: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
    pub pivots: usize,
}

impl<'a> NetworkSimplex<'a> {
    fn cost(&self, i: usize, j: usize) -> f64 {
        let (x, y) = (self.xs.row(i), self.ys.row(j));
        x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Sets up a northwest-corner basis. Points of both sides are visited in
    /// order of their coordinate sum, which for near-translations is close
    /// to the monotone coupling.
    pub fn new(xs: ArrayView2<'a, f64>, a: &[f64], ys: ArrayView2<'a, f64>, b: &[f64]) -> Result<Self> {
        let (n, m) = (xs.nrows(), ys.nrows());
        if n == 0 || m == 0 || a.len() != n || b.len() != m || xs.ncols() != ys.ncols() {
            return Err(Error::Oracle("point and mass arrays disagree".into()));
        }
        if a.iter().chain(b).any(|&w| !(w >= 0.0)) {
            return Err(Error::Oracle("masses must be non-negative".into()));
        }
        let (ta, tb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        if !(ta > 0.0) || (ta - tb).abs() > 1e-9 * ta {
            return Err(Error::Oracle(format!("total masses differ: {ta} vs {tb}")));
        }
        let order = |pts: &ArrayView2<'_, f64>| {
            let mut idx: Vec<usize> = (0..pts.nrows()).collect();
            let key = |k: usize| pts.row(k).sum();
            idx.sort_by(|&p, &q| key(p).total_cmp(&key(q)));
            idx
        };
        let (oa, ob) = (order(&xs), order(&ys));
        let mut ar: Vec<f64> = oa.iter().map(|&i| a[i]).collect();
        let mut br: Vec<f64> = ob.iter().map(|&j| b[j] * ta / tb).collect();
        let mut arcs = Vec::with_capacity(n + m - 1);
        let (mut p, mut q) = (0, 0);
        loop {
            let f = ar[p].min(br[q]).max(0.0);
            arcs.push((oa[p], ob[q], f));
            ar[p] -= f;
            br[q] -= f;
            if p == n - 1 && q == m - 1 {
                break;
            }
            if q == m - 1 || (p < n - 1 && ar[p] <= br[q]) {
                p += 1;
            } else {
                q += 1;
            }
        }
        let mut adj = vec![Vec::new(); n + m];
        for (k, &(i, j, _)) in arcs.iter().enumerate() {
            adj[i].push(k);
            adj[n + j].push(k);
        }
        let mut s = Self {
            xs,
            ys,
            n,
            m,
            arcs,
            adj,
            parent_arc: vec![usize::MAX; n + m],
            parent: vec![usize::MAX; n + m],
            depth: vec![0; n + m],
            pot: vec![0.0; n + m],
            pivots: 0,
        };
        s.rebuild();
        Ok(s)
    }

    // parent pointers, depths and potentials from root 0
    fn rebuild(&mut self) {
        let n = self.n;
        self.parent[0] = usize::MAX;
        self.parent_arc[0] = usize::MAX;
        self.depth[0] = 0;
        self.pot[0] = 0.0;
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            for &k in &self.adj[v] {
                if k == self.parent_arc[v] {
                    continue;
                }
                let (i, j, _) = self.arcs[k];
                let c = self.cost(i, j);
                let w = if v < n { n + j } else { i };
                self.parent[w] = v;
                self.parent_arc[w] = k;
                self.depth[w] = self.depth[v] + 1;
                // u_i + v_j = c_ij
                self.pot[w] = c - self.pot[v];
                stack.push(w);
            }
        }
    }

    fn reduced(&self, i: usize, j: usize) -> f64 {
        self.cost(i, j) - self.pot[i] - self.pot[self.n + j]
    }

    /// Pivots until no arc has negative reduced cost.
    pub fn solve(&mut self, max_pivots: usize) -> Result<f64> {
        let (n, m) = (self.n, self.m);
        let scale = (0..self.xs.ncols())
            .map(|c| {
                let col = self
                    .xs
                    .column(c)
                    .iter()
                    .chain(self.ys.column(c).iter())
                    .copied()
                    .collect::<Vec<_>>();
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (hi - lo).powi(2)
            })
            .sum::<f64>()
            .max(1e-300);
        let tol = 1e-12 * scale;
        let mut row = 0;
        let mut clean_rows = 0;
        while clean_rows < n {
            let i = row;
            row = (row + 1) % n;
            let mut best = (-tol, usize::MAX);
            for j in 0..m {
                let r = self.reduced(i, j);
                if r < best.0 {
                    best = (r, j);
                }
            }
            if best.1 == usize::MAX {
                clean_rows += 1;
                continue;
            }
            clean_rows = 0;
            self.pivot(i, best.1);
            self.pivots += 1;
            if self.pivots > max_pivots {
                return Err(Error::Oracle(format!("network simplex exceeded {max_pivots} pivots")));
            }
        }
        Ok(self.total_cost())
    }

    fn pivot(&mut self, i: usize, j: usize) {
        let n = self.n;
        // tree path from the sink to the source, as arc indices in order
        let (mut a, mut b) = (n + j, i);
        let mut from_sink = Vec::new();
        let mut from_source = Vec::new();
        while a != b {
            if self.depth[a] >= self.depth[b] {
                from_sink.push(self.parent_arc[a]);
                a = self.parent[a];
            } else {
                from_source.push(self.parent_arc[b]);
                b = self.parent[b];
            }
        }
        let sink_len = from_sink.len();
        from_sink.extend(from_source.into_iter().rev());
        // arcs alternate −, +, −, ... starting at the sink end
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (k, &arc) in from_sink.iter().enumerate() {
            if k % 2 == 0 && self.arcs[arc].2 < theta {
                theta = self.arcs[arc].2;
                leave = arc;
            }
        }
        for (k, &arc) in from_sink.iter().enumerate() {
            if k % 2 == 0 {
                self.arcs[arc].2 -= theta;
            } else {
                self.arcs[arc].2 += theta;
            }
        }
        let (li, lj, _) = self.arcs[leave];
        // the endpoint of the entering arc on the cut-off side of the leaving arc
        let on_sink_side = from_sink[..sink_len].contains(&leave);
        let (w, u) = if on_sink_side { (n + j, i) } else { (i, n + j) };
        self.adj[li].retain(|&k| k != leave);
        self.adj[n + lj].retain(|&k| k != leave);
        self.arcs[leave] = (i, j, theta);
        self.adj[i].push(leave);
        self.adj[n + j].push(leave);
        self.reroot(w, u, leave);
    }

    // hangs the subtree containing `w` below `u` through arc `k` and refreshes
    // parents, depths and potentials inside it
    fn reroot(&mut self, w: usize, u: usize, k: usize) {
        let n = self.n;
        let mut stack = vec![(w, u, k)];
        while let Some((v, p, pk)) = stack.pop() {
            self.parent[v] = p;
            self.parent_arc[v] = pk;
            self.depth[v] = self.depth[p] + 1;
            let (i, j, _) = self.arcs[pk];
            self.pot[v] = self.cost(i, j) - self.pot[p];
            for &a in &self.adj[v] {
                if a == pk {
                    continue;
                }
                let (ai, aj, _) = self.arcs[a];
                let next = if v < n { n + aj } else { ai };
                stack.push((next, v, a));
            }
        }
    }

    pub fn total_cost(&self) -> f64 {
        self.arcs.iter().map(|&(i, j, f)| f * self.cost(i, j)).sum()
    }

    /// Transport plan as `(source, sink, mass)` triples with positive mass.
    pub fn plan(&self) -> Vec<(usize, usize, f64)> {
        self.arcs.iter().copied().filter(|a| a.2 > 0.0).collect()
    }
}

/// `min Σ π_ij ‖x_i − y_j‖²` over couplings of `a` and `b`, i.e. `W₂²`.
pub fn discrete_ot_cost(xs: ArrayView2<'_, f64>, a: &[f64], ys: ArrayView2<'_, f64>, b: &[f64]) -> Result<f64> {
    let mut ns = NetworkSimplex::new(xs, a, ys, b)?;
    ns.solve(50_000_000)
}

/// Isotropic Gaussian `exp(−‖x−μ‖²/(2s))` sampled at the cell centres of a
/// `cells × cells` grid on `[0,1]²`, normalised to unit mass. Cells below
/// `1e-12` of the peak are dropped.
pub fn gaussian_grid_measure(mean: [f64; 2], s: f64, cells: usize) -> (Array2<f64>, Vec<f64>) {
    let h = 1.0 / cells as f64;
    let mut pts = Vec::new();
    let mut mass = Vec::new();
    for i in 0..cells {
        for j in 0..cells {
            let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let r2 = (x - mean[0]).powi(2) + (y - mean[1]).powi(2);
            let w = (-0.5 * r2 / s).exp();
            if w > 1e-12 {
                pts.push([x, y]);
                mass.push(w);
            }
        }
    }
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|w| *w /= total);
    let arr = Array2::from_shape_fn((pts.len(), 2), |(r, c)| pts[r][c]);
    (arr, mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_point_swap_picks_the_cheap_matching() {
        let xs = array![[0.0], [1.0]];
        let ys = array![[1.1], [0.1]];
        let c = discrete_ot_cost(xs.view(), &[0.5, 0.5], ys.view(), &[0.5, 0.5]).unwrap();
        assert!((c - 0.01).abs() < 1e-14);
    }

    #[test]
    fn small_problem_matches_brute_force_permutations() {
        // uniform weights: optimum is a permutation
        let xs = array![[0.1, 0.9], [0.4, 0.2], [0.8, 0.5], [0.3, 0.3]];
        let ys = array![[0.6, 0.1], [0.2, 0.8], [0.9, 0.9], [0.0, 0.4]];
        let w = [0.25; 4];
        let c = discrete_ot_cost(xs.view(), &w, ys.view(), &w).unwrap();
        let cost = |i: usize, j: usize| (xs[[i, 0]] - ys[[j, 0]]).powi(2) + (xs[[i, 1]] - ys[[j, 1]]).powi(2);
        let mut best = f64::INFINITY;
        let mut perm = [0, 1, 2, 3];
        // Heap's algorithm
        fn heap(k: usize, p: &mut [usize; 4], f: &mut dyn FnMut(&[usize; 4])) {
            if k == 1 {
                f(p);
                return;
            }
            for i in 0..k {
                heap(k - 1, p, f);
                let swap = if k % 2 == 0 { i } else { 0 };
                p.swap(swap, k - 1);
            }
        }
        heap(4, &mut perm, &mut |p| {
            best = best.min((0..4).map(|i| 0.25 * cost(i, p[i])).sum());
        });
        assert!((c - best).abs() < 1e-14, "{c} vs {best}");
    }

    #[test]
    fn unequal_masses_are_rejected() {
        let xs = array![[0.0]];
        assert!(discrete_ot_cost(xs.view(), &[1.0], xs.view(), &[2.0]).is_err());
    }
}
