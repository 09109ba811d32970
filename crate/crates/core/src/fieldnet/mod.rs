//! Scalar-field networks over space-time and their derivative jets.
//!
//! A [`FieldNetwork`] maps `(t, x) ∈ R^{1+d}` to a scalar through affine
//! layers with tanh hidden activations and either a linear or a softplus
//! head. The density network uses the softplus head so it stays positive;
//! the potential network is linear at the output.
//!
//! Parameters are ordered layer by layer, weights row-major (one row per
//! output unit) followed by the bias. [`ParamGradient`] uses the same order.

pub(crate) mod checkpoint;
mod jet;

use ndarray::{Array1, Array2, ArrayView2, ArrayView3};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use jet::{ChannelLayout, JetOrder, JetTape};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputHead {
    Linear,
    Softplus,
}

impl OutputHead {
    pub fn tag(self) -> &'static str {
        match self {
            OutputHead::Linear => "linear",
            OutputHead::Softplus => "softplus",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "linear" => Some(OutputHead::Linear),
            "softplus" => Some(OutputHead::Softplus),
            _ => None,
        }
    }
}

/// Value, time derivative, spatial gradient and spatial Hessian of a field
/// at one space-time point.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldJet {
    pub u: f64,
    pub u_t: f64,
    pub grad_x: Vec<f64>,
    pub hess_x: Array2<f64>,
}

impl FieldJet {
    pub fn spatial_dim(&self) -> usize {
        self.grad_x.len()
    }

    /// Jet of a field that is constant in space and time.
    pub fn constant(u: f64, spatial_dim: usize) -> Self {
        Self {
            u,
            u_t: 0.0,
            grad_x: vec![0.0; spatial_dim],
            hess_x: Array2::zeros((spatial_dim, spatial_dim)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite()
            && self.u_t.is_finite()
            && self.grad_x.iter().all(|v| v.is_finite())
            && self.hess_x.iter().all(|v| v.is_finite())
    }
}

/// Flat parameter gradient in the network's parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient(pub Vec<f64>);

impl ParamGradient {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldNetwork {
    layer_dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    hidden: Activation,
    head: OutputHead,
    seed: u64,
}

impl FieldNetwork {
    /// Builds a network with Glorot-uniform weights (`±sqrt(6 / (fan_in + fan_out))`)
    /// and zero biases, drawn from a ChaCha8 stream seeded with `seed`.
    pub fn new(layer_dims: &[usize], hidden: Activation, head: OutputHead, seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
            weights.push(Array2::from_shape_vec((fan_out, fan_in), w).expect("shape"));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            hidden,
            head,
            seed,
        })
    }

    /// Hidden widths for a field over `spatial_dim` dimensions: `[1 + d, hidden.., 1]`.
    pub fn with_hidden(spatial_dim: usize, hidden_widths: &[usize], head: OutputHead, seed: u64) -> Result<Self> {
        let mut dims = Vec::with_capacity(hidden_widths.len() + 2);
        dims.push(spatial_dim + 1);
        dims.extend_from_slice(hidden_widths);
        dims.push(1);
        Self::new(&dims, Activation::Tanh, head, seed)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_head(&self) -> OutputHead {
        self.head
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn spatial_dim(&self) -> usize {
        self.layer_dims[0] - 1
    }

    /// Checks the network against a problem with `spatial_dim` space dimensions.
    pub fn bind(&self, spatial_dim: usize) -> Result<()> {
        if self.input_dim() != spatial_dim + 1 {
            return Err(Error::Architecture(format!(
                "input dimension {} does not match 1 + d = {}",
                self.input_dim(),
                spatial_dim + 1
            )));
        }
        Ok(())
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims.windows(2).map(|p| p[1] * (p[0] + 1)).sum()
    }

    fn param_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.weights.len());
        let mut off = 0;
        for pair in self.layer_dims.windows(2) {
            offsets.push(off);
            off += pair[1] * (pair[0] + 1);
        }
        offsets
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
            b.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
        }
        Ok(())
    }

    /// Applies `f(param, index)` to every parameter in order.
    pub fn update_params(&mut self, mut f: impl FnMut(&mut f64, usize)) {
        let mut idx = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut().chain(b.iter_mut()) {
                f(v, idx);
                idx += 1;
            }
        }
    }

    fn check_inputs(&self, inputs: &ArrayView2<'_, f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim() - 1,
                got: inputs.ncols().saturating_sub(1),
            });
        }
        Ok(())
    }

    /// Records jets of the given order for each row `(t, x..)` of `inputs`.
    pub fn jets(&self, inputs: ArrayView2<'_, f64>, order: JetOrder) -> Result<JetTape<'_>> {
        self.check_inputs(&inputs)?;
        let layout = ChannelLayout::new(order, self.spatial_dim());
        Ok(JetTape::record(self, inputs, layout, None))
    }

    /// Records value, time derivative and derivatives along
    /// `directions[p, a, ..]` for each point, plus the trace channel
    /// `sum_a D²u[τ_a, τ_a]` when `trace` is set.
    pub fn directional_jets(
        &self,
        inputs: ArrayView2<'_, f64>,
        directions: ArrayView3<'_, f64>,
        trace: bool,
    ) -> Result<JetTape<'_>> {
        self.check_inputs(&inputs)?;
        let (p, m, d) = directions.dim();
        if p != inputs.nrows() {
            return Err(Error::DimensionMismatch {
                expected: inputs.nrows(),
                got: p,
            });
        }
        if d != self.spatial_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spatial_dim(),
                got: d,
            });
        }
        let layout = ChannelLayout::directional(d, m, trace);
        Ok(JetTape::record(self, inputs, layout, Some(directions)))
    }

    pub fn eval_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let tape = self.jets(inputs, JetOrder::Value)?;
        Ok(tape.outputs().to_vec())
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        let input = point_row(t, x);
        Ok(self.eval_batch(input.view())?[0])
    }

    pub fn eval_jet(&self, t: f64, x: &[f64]) -> Result<FieldJet> {
        let input = point_row(t, x);
        let tape = self.jets(input.view(), JetOrder::Second)?;
        Ok(jet_at(&tape, 0))
    }

    /// Gradient of a scalar functional of jets over a batch of points.
    ///
    /// `functional` receives the recorded jets and a zeroed adjoint buffer
    /// laid out like [`JetTape::outputs`]; it returns the functional's value
    /// and writes its partial derivatives with respect to each jet entry.
    pub fn param_grad<F>(
        &self,
        inputs: ArrayView2<'_, f64>,
        order: JetOrder,
        functional: F,
    ) -> Result<(f64, ParamGradient)>
    where
        F: FnOnce(&JetTape<'_>, &mut [f64]) -> f64,
    {
        let tape = self.jets(inputs, order)?;
        let mut adjoint = tape.zero_adjoint();
        let value = functional(&tape, &mut adjoint);
        if !value.is_finite() || adjoint.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("jet functional"));
        }
        let mut grad = ParamGradient::zeros(self.num_params());
        tape.backward_into(&adjoint, &mut grad.0);
        Ok((value, grad))
    }
}

/// Extracts the full jet of point `p` from an axis-mode tape.
pub fn jet_at(tape: &JetTape<'_>, p: usize) -> FieldJet {
    assert!(tape.layout().is_axis(), "jet_at needs an axis-mode tape");
    let d = tape.layout().spatial_dim();
    let order = tape.layout().order();
    let (u_t, grad_x) = if order >= JetOrder::First {
        (tape.dt(p), (0..d).map(|i| tape.grad(p, i)).collect())
    } else {
        (0.0, vec![0.0; d])
    };
    let mut hess_x = Array2::zeros((d, d));
    if order == JetOrder::Second {
        for i in 0..d {
            for j in 0..d {
                hess_x[[i, j]] = tape.hess(p, i, j);
            }
        }
    }
    FieldJet {
        u: tape.value(p),
        u_t,
        grad_x,
        hess_x,
    }
}

fn point_row(t: f64, x: &[f64]) -> Array2<f64> {
    let mut row = Array2::zeros((1, x.len() + 1));
    row[[0, 0]] = t;
    for (i, &xi) in x.iter().enumerate() {
        row[[0, i + 1]] = xi;
    }
    row
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::Architecture("need at least one layer".into()));
    }
    if layer_dims.iter().any(|&w| w == 0) {
        return Err(Error::Architecture("layer widths must be positive".into()));
    }
    if layer_dims[0] < 2 {
        return Err(Error::Architecture(
            "input must carry time and at least one space coordinate".into(),
        ));
    }
    if *layer_dims.last().unwrap() != 1 {
        return Err(Error::Architecture(format!(
            "output dimension must be 1, got {}",
            layer_dims.last().unwrap()
        )));
    }
    Ok(())
}
