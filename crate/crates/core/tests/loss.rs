use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uotnet::problems::CloudSource;
use uotnet::residuals::{loss_and_grad, FieldPair, LossPlan, LossReport};
use uotnet::training::TrainConfig;
use uotnet::{build_collocation, build_preset, CollocationSet, Domain, ProblemSpec};

fn small_box() -> ProblemSpec {
    let mut spec = build_preset("A").unwrap();
    spec.domain = Domain::Box {
        lower: vec![0.0, 0.0],
        upper: vec![1.0, 1.0],
        cells: vec![3, 3],
    };
    spec.n_time = 3;
    spec
}

fn small_surface(id: &str, resolution: usize) -> ProblemSpec {
    let mut spec = build_preset(id).unwrap();
    if let Domain::Cloud(CloudSource::Surface { resolution: r, .. }) = &mut spec.domain {
        *r = resolution;
    }
    spec.n_time = 3;
    spec
}

fn nets(dim: usize, seed: u64) -> FieldPair {
    TrainConfig {
        hidden: vec![4, 3],
        seed,
        ..TrainConfig::default()
    }
    .init_networks(dim)
    .unwrap()
}

fn total(nets: &FieldPair, col: &CollocationSet, spec: &ProblemSpec) -> f64 {
    let plan = LossPlan::new(col, 5);
    loss_and_grad(nets, col, spec, &plan, false).unwrap().0.total
}

fn check_gradient(spec: &ProblemSpec, seed: u64) {
    let col = build_collocation(spec).unwrap();
    let pair = nets(col.dim, seed);
    // a chunk size that does not divide the row count
    let plan = LossPlan::new(&col, 5);
    let (report, grad) = loss_and_grad(&pair, &col, spec, &plan, true).unwrap();
    let grad = grad.unwrap();
    assert!((report.total - total(&pair, &col, spec)).abs() <= 1e-12 * report.total);
    let h = 1e-4;
    for (which, g) in [(0, &grad.rho), (1, &grad.phi)] {
        let base = if which == 0 {
            pair.rho.params()
        } else {
            pair.phi.params()
        };
        for k in 0..base.len() {
            let eval = |delta: f64| {
                let mut p = pair.clone();
                let mut q = base.clone();
                q[k] += delta;
                if which == 0 {
                    p.rho.set_params(&q).unwrap();
                } else {
                    p.phi.set_params(&q).unwrap();
                }
                total(&p, &col, spec)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let scale = fd.abs().max(g[k].abs()).max(1.0);
            // plus the rounding of two O(total) sums divided by 2h
            let tol = 1e-5 * scale + 1e-14 * report.total / h;
            assert!(
                (fd - g[k]).abs() <= tol,
                "{} net {} param {k}: analytic {} vs fd {fd}",
                spec.name,
                if which == 0 { "rho" } else { "phi" },
                g[k]
            );
        }
    }
}

#[test]
fn box_loss_gradient_matches_central_differences() {
    check_gradient(&small_box(), 3);
}

#[test]
fn surface_loss_gradient_matches_central_differences() {
    check_gradient(&small_surface("Sphere", 8), 4);
}

#[test]
fn codimension_two_loss_gradient_matches_central_differences() {
    check_gradient(&small_surface("S-G4", 8), 5);
}

#[test]
fn surface_problems_have_no_boundary_term() {
    let spec = small_surface("Sphere", 8);
    let col = build_collocation(&spec).unwrap();
    assert_eq!(col.boundary.nrows(), 0);
    let plan = LossPlan::new(&col, 32);
    let (r, _) = loss_and_grad(&nets(3, 1), &col, &spec, &plan, false).unwrap();
    assert_eq!(r.boundary, 0.0);
}

#[test]
fn weights_scale_their_own_term_only() {
    let spec = small_box();
    let col = build_collocation(&spec).unwrap();
    let pair = nets(2, 9);
    let plan = LossPlan::new(&col, 32);
    let (a, _) = loss_and_grad(&pair, &col, &spec, &plan, false).unwrap();
    let mut scaled = spec.clone();
    scaled.weights.continuity *= 10.0;
    let (b, _) = loss_and_grad(&pair, &col, &scaled, &plan, false).unwrap();
    assert_eq!(
        (a.continuity, a.hj, a.endpoint, a.boundary),
        (b.continuity, b.hj, b.endpoint, b.boundary)
    );
    let expected = a.total + 9.0 * spec.weights.continuity * a.continuity;
    assert!((b.total - expected).abs() <= 1e-12 * expected);
}

// Rebuilds `col` with spatial samples in order `perm` and boundary rows in order `bperm`.
fn permuted(col: &CollocationSet, perm: &[usize], bperm: &[usize]) -> CollocationSet {
    let mut out = col.clone();
    let n = col.n_spatial();
    for (new, &old) in perm.iter().enumerate() {
        out.spatial.row_mut(new).assign(&col.spatial.row(old));
        out.frames[new] = col.frames[old].clone();
        out.weights[new] = col.weights[old];
        out.rho0[new] = col.rho0[old];
        out.rho1[new] = col.rho1[old];
        out.tangents
            .slice_mut(ndarray::s![new, .., ..])
            .assign(&col.tangents.slice(ndarray::s![old, .., ..]));
        for it in 0..col.n_time() {
            out.interior
                .row_mut(it * n + new)
                .assign(&col.interior.row(it * n + old));
        }
    }
    for (new, &old) in bperm.iter().enumerate() {
        out.boundary.row_mut(new).assign(&col.boundary.row(old));
        out.boundary_normals.row_mut(new).assign(&col.boundary_normals.row(old));
    }
    out.grid = None;
    out
}

fn rel_close(a: &LossReport, b: &LossReport) -> bool {
    let c = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300);
    c(a.continuity, b.continuity) && c(a.hj, b.hj) && c(a.endpoint, b.endpoint) && c(a.boundary, b.boundary)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn loss_is_invariant_under_collocation_permutation(seed in 0u64..1000) {
        let spec = small_box();
        let col = build_collocation(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..col.n_spatial()).collect();
        perm.shuffle(&mut rng);
        let mut bperm: Vec<usize> = (0..col.boundary.nrows()).collect();
        bperm.shuffle(&mut rng);
        let shuffled = permuted(&col, &perm, &bperm);
        let pair = nets(2, seed);
        let a = loss_and_grad(&pair, &col, &spec, &LossPlan::new(&col, 32), false).unwrap().0;
        let b = loss_and_grad(&pair, &shuffled, &spec, &LossPlan::new(&shuffled, 32), false).unwrap().0;
        prop_assert!(rel_close(&a, &b), "{a:?} vs {b:?}");
    }
}

#[test]
fn chunk_size_does_not_change_the_loss() {
    let spec = small_box();
    let col = build_collocation(&spec).unwrap();
    let pair = nets(2, 2);
    let reports: Vec<LossReport> = [1, 7, 32, 1000]
        .iter()
        .map(|&c| {
            loss_and_grad(&pair, &col, &spec, &LossPlan::new(&col, c), false)
                .unwrap()
                .0
        })
        .collect();
    for r in &reports[1..] {
        assert!(rel_close(r, &reports[0]));
    }
}
