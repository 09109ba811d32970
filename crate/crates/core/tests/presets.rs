use std::fmt::Write as _;
use std::path::PathBuf;

use uotnet::problems::PRESET_IDS;
use uotnet::training::{Control, TrainConfig, Trainer};
use uotnet::{build_collocation, build_preset, CollocationSet, Mode};

fn masses(col: &CollocationSet) -> (f64, f64) {
    let m = |rho: &[f64]| rho.iter().zip(&col.weights).map(|(r, w)| r * w).sum::<f64>();
    (m(&col.rho0), m(&col.rho1))
}

fn summary(id: &str) -> String {
    let spec = build_preset(id).unwrap();
    let col = build_collocation(&spec).unwrap();
    let (m0, m1) = masses(&col);
    let w = spec.weights;
    format!(
        "{id} d={} n={} times={} boundary={} m={} eta={:e} w=({:e},{:e},{:e},{:e}) mass0={:.8e} mass1={:.8e}",
        col.dim,
        col.n_spatial(),
        col.n_time(),
        col.boundary.nrows(),
        col.tangent_dim(),
        spec.eta,
        w.continuity,
        w.hj,
        w.endpoint,
        w.boundary,
        m0,
        m1
    )
}

// Set UOTNET_BLESS=1 to rewrite tests/golden/presets.txt.
#[test]
fn preset_catalogue_matches_golden_summary() {
    let mut text = String::new();
    for id in PRESET_IDS {
        writeln!(text, "{}", summary(id)).unwrap();
    }
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/presets.txt");
    if std::env::var_os("UOTNET_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).expect("golden file missing; rerun with UOTNET_BLESS=1");
    for (got, want) in text.lines().zip(golden.lines()) {
        assert_eq!(got, want);
    }
    assert_eq!(text.lines().count(), golden.lines().count());
}

#[test]
fn collocation_sizes_of_the_planar_and_interval_presets() {
    let a = build_collocation(&build_preset("A").unwrap()).unwrap();
    assert_eq!((a.n_spatial(), a.n_time(), a.n_interior()), (900, 10, 9000));
    assert_eq!(a.boundary.nrows(), 1200);
    assert_eq!((a.times[0], a.times[9]), (0.0, 1.0));
    let c = build_collocation(&build_preset("C-eta1").unwrap()).unwrap();
    assert_eq!((c.dim, c.n_interior(), c.boundary.nrows()), (1, 8000, 20));
}

#[test]
fn modes_follow_eta() {
    for id in PRESET_IDS {
        let spec = build_preset(id).unwrap();
        assert_eq!(spec.mode() == Mode::Ot, spec.eta == 0.0, "{id}");
    }
    assert!(build_preset("nope").is_err());
}

#[test]
fn growth_presets_have_unequal_endpoint_masses() {
    for (id, ratio) in [("desk-growth", 4.0), ("A", 2.0)] {
        let (m0, m1) = masses(&build_collocation(&build_preset(id).unwrap()).unwrap());
        assert!((m1 / m0 - ratio).abs() <= 1e-2 * ratio, "{id}: {m0} -> {m1}");
    }
    let (m0, m1) = masses(&build_collocation(&build_preset("M1").unwrap()).unwrap());
    assert!((m1 - m0).abs() > 0.1 * m0.max(m1), "M1: {m0} -> {m1}");
}

#[test]
fn sphere_exports_five_snapshots_on_the_cloud() {
    let spec = build_preset("Sphere").unwrap();
    let cfg = TrainConfig {
        hidden: vec![4],
        max_iters: 1,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(spec, cfg).unwrap();
    t.run(|_, _, _| Control::Continue).unwrap();
    let snaps = t.snapshots().unwrap();
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    assert_eq!(times, [0.0, 0.25, 0.5, 0.75, 1.0]);
    let n = t.collocation.n_spatial();
    for s in &snaps {
        assert_eq!((s.len(), s.positions.ncols()), (n, 3));
        assert!(s.rho.iter().all(|r| r.is_finite() && *r > 0.0));
    }
}

#[test]
fn noisy_presets_train_and_emit_finite_snapshots() {
    for id in ["noise-xn10", "noise-n5"] {
        let cfg = TrainConfig {
            hidden: vec![8],
            max_iters: 2,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(build_preset(id).unwrap(), cfg).unwrap();
        t.run(|_, _, _| Control::Continue).unwrap();
        for s in t.snapshots().unwrap() {
            assert!(s.rho.iter().chain(&s.phi).chain(&s.g).all(|v| v.is_finite()), "{id}");
            assert!(s.v.iter().all(|v| v.is_finite()), "{id}");
        }
    }
}
