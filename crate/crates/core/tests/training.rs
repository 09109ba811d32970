use uotnet::training::{Control, StopReason, TrainConfig, TrainState, Trainer};
use uotnet::{build_preset, Domain, Error, ProblemSpec};

fn tiny_spec() -> ProblemSpec {
    let mut spec = build_preset("A").unwrap();
    spec.domain = Domain::Box {
        lower: vec![0.0, 0.0],
        upper: vec![1.0, 1.0],
        cells: vec![5, 5],
    };
    spec.n_time = 4;
    spec
}

fn tiny_config(max_iters: usize) -> TrainConfig {
    TrainConfig {
        hidden: vec![6, 6],
        max_iters,
        log_interval: 1,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn params(t: &Trainer) -> (Vec<f64>, Vec<f64>) {
    (t.state.nets.rho.params(), t.state.nets.phi.params())
}

#[test]
fn identical_seeds_give_identical_states() {
    let mut a = Trainer::new(tiny_spec(), tiny_config(100)).unwrap();
    let mut b = Trainer::new(tiny_spec(), tiny_config(100)).unwrap();
    a.run(|_, _, _| Control::Continue).unwrap();
    b.run(|_, _, _| Control::Continue).unwrap();
    assert_eq!(params(&a), params(&b));
    assert_eq!(a.history, b.history);
    assert_eq!(a.state.iteration, 100);
    assert!(a.history.iter().all(|(_, r)| r.is_finite()));
}

#[test]
fn checkpoint_resume_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut straight = Trainer::new(tiny_spec(), tiny_config(12)).unwrap();
    straight.run(|_, _, _| Control::Continue).unwrap();

    let mut first = Trainer::new(tiny_spec(), tiny_config(5)).unwrap();
    first.run(|_, _, _| Control::Continue).unwrap();
    let path = dir.path().join("state.txt");
    first.state.save(&path).unwrap();

    let mut second = Trainer::new(tiny_spec(), tiny_config(12)).unwrap();
    second.resume(TrainState::load(&path).unwrap()).unwrap();
    second.run(|_, _, _| Control::Continue).unwrap();

    assert_eq!(params(&second), params(&straight));
    let tail: Vec<_> = straight.history.iter().filter(|(i, _)| *i >= 6).cloned().collect();
    let resumed: Vec<_> = second.history.iter().filter(|(i, _)| *i >= 6).cloned().collect();
    assert_eq!(resumed, tail);
    let best = |t: &Trainer| t.state.best.as_ref().map(|b| (b.iteration, b.report));
    assert_eq!(best(&second), best(&straight));
}

#[test]
fn observer_can_stop_and_exports_use_the_best_iterate() {
    let mut t = Trainer::new(tiny_spec(), tiny_config(50)).unwrap();
    let stop = t
        .run(|it, _, _| if it == 7 { Control::Stop } else { Control::Continue })
        .unwrap();
    assert_eq!(stop, StopReason::Observer);
    assert_eq!(t.state.iteration, 8);
    let best = t.state.best.as_ref().unwrap();
    let lowest = t.history.iter().map(|(_, r)| r.total).fold(f64::INFINITY, f64::min);
    assert_eq!(best.report.total, lowest);
    assert_eq!(t.state.export_nets(), &best.nets);
    let snaps = t.snapshots().unwrap();
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    assert_eq!(times, [0.0, 0.25, 0.5, 0.75, 1.0]);
    assert!(snaps.iter().all(|s| s.len() == 25));
}

#[test]
fn infinite_threshold_stops_after_the_first_evaluation() {
    let cfg = TrainConfig {
        stop_threshold: f64::INFINITY,
        ..tiny_config(50)
    };
    let mut t = Trainer::new(tiny_spec(), cfg).unwrap();
    let params_before = params(&t);
    assert_eq!(t.run(|_, _, _| Control::Continue).unwrap(), StopReason::Threshold);
    assert_eq!(t.state.iteration, 0);
    assert_eq!(params(&t), params_before);
    assert_eq!(t.history.len(), 1);
}

#[test]
fn non_finite_parameters_abort_with_the_history_kept() {
    let mut t = Trainer::new(tiny_spec(), tiny_config(20)).unwrap();
    t.run(|it, _, _| if it == 3 { Control::Stop } else { Control::Continue })
        .unwrap();
    let kept = t.history.len();
    t.config.max_iters = 20;
    t.state.nets.phi.update_params(|p, k| {
        if k == 0 {
            *p = f64::NAN;
        }
    });
    match t.run(|_, _, _| Control::Continue) {
        Err(Error::Diverged { iteration }) => assert_eq!(iteration, 4),
        other => panic!("expected divergence, got {other:?}"),
    }
    assert_eq!(t.history.len(), kept);
}
