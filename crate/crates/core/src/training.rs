//! Full-batch Adam on the joint loss of both networks.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::fieldnet::checkpoint::{field, parse};
use crate::fieldnet::{Activation, FieldNetwork, OutputHead};
use crate::io::Snapshot;
use crate::problems::{build_collocation, CollocationSet, ProblemSpec};
use crate::residuals::{loss_and_grad, snapshot, FieldPair, LossPlan, LossReport, DEFAULT_CHUNK};
use crate::{Error, Result};

/// Times at which snapshots are exported.
pub const SNAPSHOT_TIMES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iters: usize,
    /// Stop once the weighted total falls below this.
    pub stop_threshold: f64,
    pub log_interval: usize,
    pub seed: u64,
    /// Hidden layer widths, shared by both networks.
    pub hidden: Vec<usize>,
    /// Collocation rows per propagated batch.
    pub chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_iters: 20000,
            stop_threshold: 0.1,
            log_interval: 100,
            seed: 0,
            hidden: vec![64, 64, 64],
            chunk: DEFAULT_CHUNK,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(self.stop_threshold > 0.0) {
            return bad("stop_threshold must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !(self.eps > 0.0) {
            return bad("learning_rate and eps must be positive");
        }
        if self.log_interval == 0 || self.chunk == 0 {
            return bad("log_interval and chunk must be at least 1");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be non-empty and positive");
        }
        Ok(())
    }

    /// Freshly initialised networks for a `d`-dimensional problem.
    pub fn init_networks(&self, d: usize) -> Result<FieldPair> {
        let mut dims = vec![d + 1];
        dims.extend(&self.hidden);
        dims.push(1);
        let seed = self.seed.wrapping_mul(2);
        Ok(FieldPair {
            rho: FieldNetwork::new(&dims, Activation::Tanh, OutputHead::Softplus, seed)?,
            phi: FieldNetwork::new(&dims, Activation::Tanh, OutputHead::Linear, seed.wrapping_add(1))?,
        })
    }
}

/// Adam moments for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam update of `net` at step `step` (1-based).
pub fn adam_update(net: &mut FieldNetwork, moments: &mut Moments, grad: &[f64], step: usize, cfg: &TrainConfig) {
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    let lr = cfg.learning_rate;
    let eps = cfg.eps;
    let (m, v) = (&mut moments.m, &mut moments.v);
    net.update_params(|p, k| {
        let g = grad[k];
        m[k] = b1 * m[k] + (1.0 - b1) * g;
        v[k] = b2 * v[k] + (1.0 - b2) * g * g;
        if g != 0.0 {
            *p -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
        }
    });
}

/// Networks, optimiser state, and the best iterate seen so far.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub nets: FieldPair,
    pub rho_moments: Moments,
    pub phi_moments: Moments,
    /// Number of Adam steps taken.
    pub iteration: usize,
    pub best: Option<BestIterate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestIterate {
    pub iteration: usize,
    pub report: LossReport,
    pub nets: FieldPair,
}

impl TrainState {
    pub fn new(nets: FieldPair) -> Self {
        Self {
            rho_moments: Moments::zeros(nets.rho.num_params()),
            phi_moments: Moments::zeros(nets.phi.num_params()),
            nets,
            iteration: 0,
            best: None,
        }
    }

    /// Adam step on both networks. A non-finite gradient leaves the state
    /// untouched and reports divergence.
    pub fn adam_step(&mut self, grad_rho: &[f64], grad_phi: &[f64], cfg: &TrainConfig) -> Result<()> {
        if grad_rho.iter().chain(grad_phi).any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                iteration: self.iteration,
            });
        }
        let step = self.iteration + 1;
        adam_update(&mut self.nets.rho, &mut self.rho_moments, grad_rho, step, cfg);
        adam_update(&mut self.nets.phi, &mut self.phi_moments, grad_phi, step, cfg);
        self.iteration = step;
        Ok(())
    }

    /// Networks to export: the best iterate if one was recorded.
    pub fn export_nets(&self) -> &FieldPair {
        self.best.as_ref().map_or(&self.nets, |b| &b.nets)
    }

    fn note(&mut self, report: &LossReport) {
        if self.best.as_ref().is_none_or(|b| report.total < b.report.total) {
            self.best = Some(BestIterate {
                iteration: self.iteration,
                report: *report,
                nets: self.nets.clone(),
            });
        }
    }

    pub fn write_checkpoint<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "uotnet-train 1")?;
        writeln!(out, "iteration {}", self.iteration)?;
        self.nets.rho.write_checkpoint(out)?;
        self.nets.phi.write_checkpoint(out)?;
        for (name, xs) in [
            ("rho_m", &self.rho_moments.m),
            ("rho_v", &self.rho_moments.v),
            ("phi_m", &self.phi_moments.m),
            ("phi_v", &self.phi_moments.v),
        ] {
            writeln!(out, "{name} {}", xs.len())?;
            for x in xs {
                writeln!(out, "{x:?}")?;
            }
        }
        match &self.best {
            Some(b) => {
                let r = &b.report;
                writeln!(out, "best {}", b.iteration)?;
                writeln!(
                    out,
                    "{:?} {:?} {:?} {:?} {:?} {:?}",
                    r.continuity, r.hj, r.endpoint, r.boundary, r.total, r.cost
                )?;
                b.nets.rho.write_checkpoint(out)?;
                b.nets.phi.write_checkpoint(out)?;
            }
            None => writeln!(out, "best none")?,
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: &mut R) -> Result<Self> {
        let next = |input: &mut R| -> Result<String> {
            let mut line = String::new();
            let n = input
                .read_line(&mut line)
                .map_err(|e| Error::format("checkpoint", e.to_string()))?;
            if n == 0 {
                return Err(Error::format("checkpoint", "unexpected end of file"));
            }
            Ok(line.trim_end().to_string())
        };
        if next(input)? != "uotnet-train 1" {
            return Err(Error::format("checkpoint", "missing training header"));
        }
        let iteration: usize = parse(field(&next(input)?, "iteration")?)?;
        let rho = FieldNetwork::read_checkpoint(input)?;
        let phi = FieldNetwork::read_checkpoint(input)?;
        let mut vecs = Vec::new();
        for (name, len) in [
            ("rho_m", rho.num_params()),
            ("rho_v", rho.num_params()),
            ("phi_m", phi.num_params()),
            ("phi_v", phi.num_params()),
        ] {
            let n: usize = parse(field(&next(input)?, name)?)?;
            if n != len {
                return Err(Error::format(
                    "checkpoint",
                    format!("{name} has {n} entries, expected {len}"),
                ));
            }
            let mut xs = Vec::with_capacity(n);
            for _ in 0..n {
                xs.push(parse::<f64>(&next(input)?)?);
            }
            vecs.push(xs);
        }
        let best_line = next(input)?;
        let best_tag = field(&best_line, "best")?;
        let best = if best_tag == "none" {
            None
        } else {
            let it: usize = parse(best_tag)?;
            let nums = next(input)?
                .split_whitespace()
                .map(parse::<f64>)
                .collect::<Result<Vec<_>>>()?;
            if nums.len() != 6 {
                return Err(Error::format("checkpoint", "best report needs 6 numbers"));
            }
            let report = LossReport {
                continuity: nums[0],
                hj: nums[1],
                endpoint: nums[2],
                boundary: nums[3],
                total: nums[4],
                cost: nums[5],
            };
            let brho = FieldNetwork::read_checkpoint(input)?;
            let bphi = FieldNetwork::read_checkpoint(input)?;
            Some(BestIterate {
                iteration: it,
                report,
                nets: FieldPair { rho: brho, phi: bphi },
            })
        };
        let mut it = vecs.into_iter();
        let mut take = || it.next().expect("four vectors");
        Ok(Self {
            rho_moments: Moments { m: take(), v: take() },
            phi_moments: Moments { m: take(), v: take() },
            nets: FieldPair { rho, phi },
            iteration,
            best,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_checkpoint(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(&mut std::io::BufReader::new(file))
    }
}

/// What an observer asks the loop to do next.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Why training ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Threshold,
    MaxIters,
    Observer,
}

/// Stepwise trainer. Keeps its history when a step fails, so a diverged run
/// can still be logged.
pub struct Trainer {
    pub spec: ProblemSpec,
    pub config: TrainConfig,
    pub collocation: CollocationSet,
    pub state: TrainState,
    /// `(iteration, report)` every `log_interval` steps and at the end.
    pub history: Vec<(usize, LossReport)>,
    plan: LossPlan,
}

impl Trainer {
    pub fn new(spec: ProblemSpec, config: TrainConfig) -> Result<Self> {
        let collocation = build_collocation(&spec)?;
        Self::with_collocation(spec, config, collocation)
    }

    pub fn with_collocation(spec: ProblemSpec, config: TrainConfig, collocation: CollocationSet) -> Result<Self> {
        config.validate()?;
        spec.validate()?;
        let nets = config.init_networks(collocation.dim)?;
        let plan = LossPlan::new(&collocation, config.chunk);
        Ok(Self {
            spec,
            config,
            collocation,
            state: TrainState::new(nets),
            history: Vec::new(),
            plan,
        })
    }

    /// Replaces the state, e.g. with one loaded from a checkpoint.
    pub fn resume(&mut self, state: TrainState) -> Result<()> {
        state.nets.check_dim(self.collocation.dim)?;
        self.state = state;
        Ok(())
    }

    fn diverged(&self, e: Error) -> Error {
        match e {
            Error::NonFinite(_) => Error::Diverged {
                iteration: self.state.iteration,
            },
            other => other,
        }
    }

    /// Loss of the current networks without a gradient.
    pub fn evaluate(&self) -> Result<LossReport> {
        loss_and_grad(&self.state.nets, &self.collocation, &self.spec, &self.plan, false)
            .map(|(r, _)| r)
            .map_err(|e| self.diverged(e))
    }

    /// Evaluates the loss at the current parameters and, unless the stop
    /// threshold is met, takes one Adam step. Returns the evaluated report.
    pub fn step(&mut self) -> Result<(LossReport, bool)> {
        let (report, grad) = loss_and_grad(&self.state.nets, &self.collocation, &self.spec, &self.plan, true)
            .map_err(|e| self.diverged(e))?;
        self.state.note(&report);
        if self.state.iteration % self.config.log_interval == 0 {
            self.history.push((self.state.iteration, report));
        }
        if report.total < self.config.stop_threshold {
            return Ok((report, true));
        }
        let grad = grad.expect("gradient requested");
        self.state.adam_step(&grad.rho, &grad.phi, &self.config)?;
        Ok((report, false))
    }

    /// Trains until the threshold, `max_iters` steps, or the observer stops
    /// it. The observer sees every evaluated report before the step is taken.
    pub fn run<F>(&mut self, mut observer: F) -> Result<StopReason>
    where
        F: FnMut(usize, &LossReport, &TrainState) -> Control,
    {
        while self.state.iteration < self.config.max_iters {
            let it = self.state.iteration;
            let (report, done) = self.step()?;
            if done {
                return Ok(StopReason::Threshold);
            }
            if observer(it, &report, &self.state) == Control::Stop {
                self.finish()?;
                return Ok(StopReason::Observer);
            }
        }
        self.finish()?;
        Ok(StopReason::MaxIters)
    }

    // evaluates the last iterate so it is logged and eligible as the best
    fn finish(&mut self) -> Result<()> {
        let report = self.evaluate()?;
        self.state.note(&report);
        if self.history.last().map(|(i, _)| *i) != Some(self.state.iteration) {
            self.history.push((self.state.iteration, report));
        }
        Ok(())
    }

    /// Snapshots of the exported networks at [`SNAPSHOT_TIMES`].
    pub fn snapshots(&self) -> Result<Vec<Snapshot>> {
        SNAPSHOT_TIMES
            .iter()
            .map(|&t| snapshot(self.state.export_nets(), &self.collocation, self.spec.eta, t))
            .collect()
    }
}

/// Outcome of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: Vec<(usize, LossReport)>,
    pub snapshots: Vec<Snapshot>,
    pub stop: StopReason,
}

/// Trains with no observer.
pub fn train(spec: ProblemSpec, config: TrainConfig) -> Result<TrainOutcome> {
    let mut t = Trainer::new(spec, config)?;
    let stop = t.run(|_, _, _| Control::Continue)?;
    Ok(TrainOutcome {
        snapshots: t.snapshots()?,
        state: t.state,
        history: t.history,
        stop,
    })
}
