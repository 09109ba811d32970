//! Shared fixtures for the criterion benchmarks.

use uotnet::residuals::{FieldPair, LossPlan, DEFAULT_CHUNK};
use uotnet::training::TrainConfig;
use uotnet::{build_collocation, build_preset, CollocationSet, ProblemSpec};

/// A preset with its collocation set, default-initialised networks and loss plan.
pub struct Fixture {
    pub spec: ProblemSpec,
    pub col: CollocationSet,
    pub nets: FieldPair,
    pub plan: LossPlan,
}

impl Fixture {
    pub fn preset(id: &str) -> Self {
        let spec = build_preset(id).expect("preset");
        let col = build_collocation(&spec).expect("collocation");
        let nets = TrainConfig::default().init_networks(col.dim).expect("networks");
        let plan = LossPlan::new(&col, DEFAULT_CHUNK);
        Self { spec, col, nets, plan }
    }
}
