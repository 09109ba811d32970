//! Batched Taylor-mode propagation through the field MLP.
//!
//! Every activation is carried as a stack of channels: the value, the time
//! tangent, one first-order tangent per spatial direction and zero or more
//! second-order channels. A layer maps all channels of all points with a
//! single GEMM. [`JetTape::backward_into`] runs reverse accumulation over the
//! whole propagation, which gives the parameter gradient of any scalar built
//! from the output jets.
//!
//! Two spatial seedings exist. Axis mode ([`JetOrder`]) differentiates along
//! the coordinate axes and, at second order, keeps one channel per unordered
//! pair of axes, i.e. the full Hessian. Directional mode differentiates along
//! caller-supplied directions per point and can carry a single trace channel
//! `sum_a D²u[τ_a, τ_a]`; with an orthonormal tangent basis that is
//! `trace(P H)` at a fraction of the channel count.
//!
//! Storage is row-major `(channels * points, width)`, so channel `c` of a
//! layer occupies one contiguous block of `points * width` entries.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayView3, ArrayViewMut2};

use super::{FieldNetwork, OutputHead};

/// Highest derivative order carried through the network in axis mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JetOrder {
    /// Value only.
    Value,
    /// Value, time derivative and spatial gradient.
    First,
    /// Everything in `First` plus the spatial Hessian.
    Second,
}

/// Channel indexing of a tape.
#[derive(Clone, Debug)]
pub struct ChannelLayout {
    spatial_dim: usize,
    has_first: bool,
    directions: usize,
    axis: bool,
    // second-order channels: (channel, terms (i, j) summed into it)
    second: Vec<(usize, Vec<(usize, usize)>)>,
}

impl ChannelLayout {
    pub const VALUE: usize = 0;
    pub const TIME: usize = 1;

    /// Axis-aligned layout of the given order.
    pub fn new(order: JetOrder, spatial_dim: usize) -> Self {
        let mut second = Vec::new();
        if order == JetOrder::Second {
            let mut ch = 2 + spatial_dim;
            for i in 0..spatial_dim {
                for j in i..spatial_dim {
                    second.push((ch, vec![(i, j)]));
                    ch += 1;
                }
            }
        }
        Self {
            spatial_dim,
            has_first: order >= JetOrder::First,
            directions: if order >= JetOrder::First { spatial_dim } else { 0 },
            axis: true,
            second,
        }
    }

    /// Layout with `directions` spatial tangents and an optional trace channel.
    pub fn directional(spatial_dim: usize, directions: usize, trace: bool) -> Self {
        let second = if trace {
            vec![(2 + directions, (0..directions).map(|a| (a, a)).collect())]
        } else {
            Vec::new()
        };
        Self {
            spatial_dim,
            has_first: true,
            directions,
            axis: false,
            second,
        }
    }

    /// Axis-mode order; directional layouts report `First` or `Second`
    /// depending on whether a trace channel is present.
    pub fn order(&self) -> JetOrder {
        if !self.has_first {
            JetOrder::Value
        } else if self.second.is_empty() {
            JetOrder::First
        } else {
            JetOrder::Second
        }
    }

    pub fn is_axis(&self) -> bool {
        self.axis
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    pub fn directions(&self) -> usize {
        self.directions
    }

    pub fn channels(&self) -> usize {
        if self.has_first {
            2 + self.directions + self.second.len()
        } else {
            1
        }
    }

    /// First-order channel of spatial direction (or axis) `a`.
    pub fn space(&self, a: usize) -> usize {
        2 + a
    }

    /// Second-order channel of the unordered axis pair `{i, j}`.
    pub fn pair(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.axis && !self.second.is_empty());
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let d = self.spatial_dim;
        2 + d + i * (2 * d - i + 1) / 2 + (j - i)
    }

    /// The trace channel of a directional layout, if present.
    pub fn trace(&self) -> Option<usize> {
        if self.axis {
            None
        } else {
            self.second.first().map(|(c, _)| *c)
        }
    }
}

#[derive(Clone, Copy)]
struct Derivs {
    f: f64,
    d1: f64,
    d2: f64,
    d3: f64,
}

#[derive(Clone, Copy, Debug)]
enum Nonlinearity {
    Tanh,
    Softplus,
    Identity,
}

impl Nonlinearity {
    fn derivs(self, s: f64) -> Derivs {
        match self {
            Nonlinearity::Tanh => tanh_from_value(fast_tanh(s)),
            Nonlinearity::Softplus => {
                let sig = if s >= 0.0 {
                    1.0 / (1.0 + (-s).exp())
                } else {
                    let e = s.exp();
                    e / (1.0 + e)
                };
                let f = (s.max(0.0) + (-s.abs()).exp().ln_1p()).max(f64::MIN_POSITIVE);
                let d2 = sig * (1.0 - sig);
                Derivs {
                    f,
                    d1: sig,
                    d2,
                    d3: d2 * (1.0 - 2.0 * sig),
                }
            }
            Nonlinearity::Identity => Derivs {
                f: s,
                d1: 1.0,
                d2: 0.0,
                d3: 0.0,
            },
        }
    }
}

// exp-based tanh; absolute error stays at rounding level, which is all the
// jets need, and it is markedly cheaper than libm's expm1 route.
#[inline(always)]
fn fast_tanh(s: f64) -> f64 {
    if s.abs() < 0.03 {
        return s.tanh();
    }
    let e = (-2.0 * s.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(s)
}

fn tanh_from_value(a: f64) -> Derivs {
    let d1 = 1.0 - a * a;
    Derivs {
        f: a,
        d1,
        d2: -2.0 * a * d1,
        d3: -2.0 * d1 * (1.0 - 3.0 * a * a),
    }
}

/// Applies the nonlinearity to every channel. Works block by block so each
/// pass streams through contiguous memory.
fn forward_kernel(nl: Nonlinearity, pre: &[f64], layout: &ChannelLayout, n: usize) -> Vec<f64> {
    let mut post = Vec::with_capacity(pre.len());
    let (f, d1, d2): (Vec<f64>, Vec<f64>, Vec<f64>) = match nl {
        Nonlinearity::Tanh => {
            let f: Vec<f64> = pre[..n].iter().map(|&s| fast_tanh(s)).collect();
            let d1: Vec<f64> = f.iter().map(|a| 1.0 - a * a).collect();
            let d2 = f.iter().zip(&d1).map(|(a, g)| -2.0 * a * g).collect();
            (f, d1, d2)
        }
        _ => {
            let z: Vec<Derivs> = pre[..n].iter().map(|&s| nl.derivs(s)).collect();
            (
                z.iter().map(|z| z.f).collect(),
                z.iter().map(|z| z.d1).collect(),
                z.iter().map(|z| z.d2).collect(),
            )
        }
    };
    let (d1, d2) = (&d1[..n], &d2[..n]);
    post.extend_from_slice(&f);
    let block = |c: usize| &pre[c * n..(c + 1) * n];
    if layout.has_first {
        for c in 1..2 + layout.directions {
            post.extend(block(c).iter().zip(d1).map(|(p, g)| g * p));
        }
    }
    for (c, terms) in &layout.second {
        let start = post.len();
        post.extend(block(*c).iter().zip(d1).map(|(p, g)| g * p));
        let out = &mut post[start..start + n];
        for &(i, j) in terms {
            let (si, sj) = (block(2 + i), block(2 + j));
            for e in 0..n {
                out[e] += d2[e] * si[e] * sj[e];
            }
        }
    }
    debug_assert_eq!(post.len(), pre.len());
    post
}

/// Pulls adjoints of post-activation channels back to pre-activation
/// channels, in place. `post_value` (the value block of the activation output)
/// lets tanh layers skip re-evaluating the nonlinearity.
fn backward_kernel(
    nl: Nonlinearity,
    pre: &[f64],
    post_value: Option<&[f64]>,
    bar: &mut [f64],
    layout: &ChannelLayout,
    n: usize,
) {
    let (d1, d2, d3): (Vec<f64>, Vec<f64>, Vec<f64>) = match (nl, post_value) {
        (Nonlinearity::Tanh, Some(a)) => {
            let a = &a[..n];
            let d1: Vec<f64> = a.iter().map(|a| 1.0 - a * a).collect();
            let d2 = a.iter().zip(&d1).map(|(a, g)| -2.0 * a * g).collect();
            let d3 = a.iter().zip(&d1).map(|(a, g)| -2.0 * g * (1.0 - 3.0 * a * a)).collect();
            (d1, d2, d3)
        }
        _ => {
            let z: Vec<Derivs> = pre[..n].iter().map(|&s| nl.derivs(s)).collect();
            (
                z.iter().map(|z| z.d1).collect(),
                z.iter().map(|z| z.d2).collect(),
                z.iter().map(|z| z.d3).collect(),
            )
        }
    };
    let (d1, d2, d3) = (&d1[..n], &d2[..n], &d3[..n]);
    let block = |c: usize| &pre[c * n..(c + 1) * n];
    let (value, rest) = bar.split_at_mut(n);
    let mut v: Vec<f64> = value.iter().zip(d1).map(|(b, g)| g * b).collect();
    let v = &mut v[..n];

    if layout.has_first {
        for c in 1..2 + layout.directions {
            let b = &mut rest[(c - 1) * n..c * n];
            let p = block(c);
            for e in 0..n {
                let ab = b[e];
                v[e] += d2[e] * p[e] * ab;
                b[e] = d1[e] * ab;
            }
        }
    }
    for (c, terms) in &layout.second {
        let c = *c;
        // first-order blocks sit before every second-order block
        let (first, tail) = rest.split_at_mut((c - 1) * n);
        let b = &mut tail[..n];
        for &(i, j) in terms {
            let (pi, pj) = (block(2 + i), block(2 + j));
            if i == j {
                let bi = &mut first[(1 + i) * n..(2 + i) * n];
                for e in 0..n {
                    let ab = b[e];
                    v[e] += d3[e] * pi[e] * pi[e] * ab;
                    bi[e] += 2.0 * d2[e] * ab * pi[e];
                }
            } else {
                let (lo, hi) = first.split_at_mut((1 + j) * n);
                let bi = &mut lo[(1 + i) * n..(2 + i) * n];
                let bj = &mut hi[..n];
                for e in 0..n {
                    let ab = b[e];
                    v[e] += d3[e] * pi[e] * pj[e] * ab;
                    bi[e] += d2[e] * ab * pj[e];
                    bj[e] += d2[e] * ab * pi[e];
                }
            }
        }
        let pc = block(c);
        for e in 0..n {
            let ab = b[e];
            v[e] += d2[e] * pc[e] * ab;
            b[e] = d1[e] * ab;
        }
    }
    value.copy_from_slice(v);
}

/// Recorded forward propagation of a batch of points.
pub struct JetTape<'a> {
    net: &'a FieldNetwork,
    layout: ChannelLayout,
    points: usize,
    // acts[m] is the input of layer m; acts[0] holds the seeded input channels
    acts: Vec<Array2<f64>>,
    // pre-activations of every layer, the last one being the output layer
    pres: Vec<Array2<f64>>,
    out: Vec<f64>,
}

impl<'a> JetTape<'a> {
    /// `directions` is `(points, m, d)` in directional mode and `None` in axis mode.
    pub(super) fn record(
        net: &'a FieldNetwork,
        inputs: ArrayView2<'_, f64>,
        layout: ChannelLayout,
        directions: Option<ArrayView3<'_, f64>>,
    ) -> Self {
        let points = inputs.nrows();
        let din = inputs.ncols();
        let channels = layout.channels();

        let mut a0 = Array2::<f64>::zeros((channels * points, din));
        a0.slice_mut(s![0..points, ..]).assign(&inputs);
        if layout.has_first {
            for q in 0..points {
                a0[[points + q, 0]] = 1.0;
            }
            match directions {
                Some(dirs) => {
                    for a in 0..layout.directions {
                        for q in 0..points {
                            for i in 0..layout.spatial_dim {
                                a0[[(2 + a) * points + q, 1 + i]] = dirs[[q, a, i]];
                            }
                        }
                    }
                }
                None => {
                    for i in 0..layout.spatial_dim {
                        for q in 0..points {
                            a0[[(2 + i) * points + q, 1 + i]] = 1.0;
                        }
                    }
                }
            }
        }

        let n_layers = net.weights.len();
        let mut acts = Vec::with_capacity(n_layers);
        let mut pres = Vec::with_capacity(n_layers);
        acts.push(a0);
        let mut out = Vec::new();
        for m in 0..n_layers {
            let w = &net.weights[m];
            let mut pre = acts[m].dot(&w.t());
            {
                let mut value_rows = pre.slice_mut(s![0..points, ..]);
                value_rows += &net.biases[m];
            }
            let width = w.nrows();
            let n = points * width;
            let nl = if m + 1 < n_layers {
                Nonlinearity::Tanh
            } else {
                head_nonlinearity(net.head)
            };
            let post = forward_kernel(nl, pre.as_slice().expect("standard layout"), &layout, n);
            pres.push(pre);
            if m + 1 < n_layers {
                acts.push(Array2::from_shape_vec((channels * points, width), post).expect("shape"));
            } else {
                out = post;
            }
        }
        Self {
            net,
            layout,
            points,
            acts,
            pres,
            out,
        }
    }

    pub fn layout(&self) -> &ChannelLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    /// Output channels, indexed `channel * len() + point`.
    pub fn outputs(&self) -> &[f64] {
        &self.out
    }

    pub fn value(&self, p: usize) -> f64 {
        self.out[p]
    }

    pub fn dt(&self, p: usize) -> f64 {
        self.out[ChannelLayout::TIME * self.points + p]
    }

    /// Derivative along axis `i` (axis mode) or direction `i` (directional mode).
    pub fn grad(&self, p: usize, i: usize) -> f64 {
        self.out[self.layout.space(i) * self.points + p]
    }

    pub fn hess(&self, p: usize, i: usize, j: usize) -> f64 {
        self.out[self.layout.pair(i, j) * self.points + p]
    }

    /// Sum of second directional derivatives over all directions.
    pub fn trace(&self, p: usize) -> f64 {
        let c = self.layout.trace().expect("tape has no trace channel");
        self.out[c * self.points + p]
    }

    /// Zeroed adjoint buffer matching [`outputs`](Self::outputs).
    pub fn zero_adjoint(&self) -> Vec<f64> {
        vec![0.0; self.out.len()]
    }

    /// Index of `(channel, point)` in output and adjoint buffers.
    pub fn slot(&self, channel: usize, p: usize) -> usize {
        channel * self.points + p
    }

    /// Accumulates `sum_c adjoint[c] * d out[c] / d params` into `grad`.
    ///
    /// Adjoints of Hessian channels refer to the single stored entry of each
    /// unordered pair, i.e. the derivative of the functional with `H_ij` and
    /// `H_ji` moving together.
    pub fn backward_into(&self, adjoint: &[f64], grad: &mut [f64]) {
        assert_eq!(adjoint.len(), self.out.len(), "adjoint length");
        assert_eq!(grad.len(), self.net.num_params(), "gradient length");
        let points = self.points;
        let rows = self.layout.channels() * points;
        let n_layers = self.net.weights.len();

        let mut s_bar = adjoint.to_vec();
        backward_kernel(
            head_nonlinearity(self.net.head),
            self.pres[n_layers - 1].as_slice().expect("standard layout"),
            None,
            &mut s_bar,
            &self.layout,
            points,
        );
        let mut s_bar = Array2::from_shape_vec((rows, 1), s_bar).expect("shape");

        let offsets = self.net.param_offsets();
        for m in (0..n_layers).rev() {
            let w = &self.net.weights[m];
            let (n_out, n_in) = w.dim();
            let off = offsets[m];
            {
                let mut gw =
                    ArrayViewMut2::from_shape((n_out, n_in), &mut grad[off..off + n_out * n_in]).expect("shape");
                general_mat_mul(1.0, &s_bar.t(), &self.acts[m], 1.0, &mut gw);
            }
            let gb = &mut grad[off + n_out * n_in..off + n_out * n_in + n_out];
            for row in s_bar.slice(s![0..points, ..]).rows() {
                for (g, v) in gb.iter_mut().zip(row.iter()) {
                    *g += v;
                }
            }
            if m == 0 {
                break;
            }
            let mut a_bar = s_bar.dot(w);
            let n = points * n_in;
            let post = self.acts[m].as_slice().expect("standard layout");
            backward_kernel(
                Nonlinearity::Tanh,
                self.pres[m - 1].as_slice().expect("standard layout"),
                Some(&post[..n]),
                a_bar.as_slice_mut().expect("standard layout"),
                &self.layout,
                n,
            );
            s_bar = a_bar;
        }
    }
}

fn head_nonlinearity(head: OutputHead) -> Nonlinearity {
    match head {
        OutputHead::Linear => Nonlinearity::Identity,
        OutputHead::Softplus => Nonlinearity::Softplus,
    }
}
