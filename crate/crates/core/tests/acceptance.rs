//! End-to-end acceptance run. Prints one line per criterion and exits
//! nonzero if any fails.
//!
//! `UOTNET_ACCEPTANCE=1,2,9` restricts the run to the listed criteria.
//! `UOTNET_ACCEPTANCE_CACHE=<dir>` stores trained states there and reuses
//! them on later runs; checkpoints restore bit-exactly, so cached and fresh
//! runs report the same numbers.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use uotnet::io::{loss_log_csv, loss_log_line, parse_loss_log};
use uotnet::oracle::suite::{fd_suite, manufactured_suite};
use uotnet::oracle::{
    fv_integrate_with, mass_timeseries, max_relative_drift, network_potential, FdTolerance, FvScheme,
};
use uotnet::problems::GridShape;
use uotnet::residuals::{snapshot, transport_split, LossReport};
use uotnet::training::{Control, TrainConfig, TrainState, Trainer};
use uotnet::{build_preset, ProblemSpec};

/// Half the squared 2-Wasserstein distance between the two desk Gaussians
/// sampled on a 64² grid, from the network simplex oracle.
const DISCRETE_OT_64: f64 = 0.040028839325;
/// `(4/η)(√κ − 1)² m₀` for κ = 4, η = 2, m₀ = 1; the discretised path
/// oracle gives 1.999994 at 200 steps.
const FR_GROWTH_COST: f64 = 2.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn components(r: &LossReport) -> String {
    format!(
        "L_c {:.3e}, L_hj {:.3e}, L_ic {:.3e}, L_bc {:.3e}",
        r.continuity, r.hj, r.endpoint, r.boundary
    )
}

fn within(r: &LossReport, c: f64, hj: f64, ic: f64) -> bool {
    r.continuity <= c && r.hj <= hj && r.endpoint <= ic
}

/// Training run shared between criteria.
struct Trained {
    trainer: Trainer,
    // best iterate among the first 5000 iterations
    early_best: Option<LossReport>,
    seconds: f64,
}

impl Trained {
    fn best(&self) -> &LossReport {
        &self
            .trainer
            .state
            .best
            .as_ref()
            .expect("at least one evaluation")
            .report
    }
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os("UOTNET_ACCEPTANCE_CACHE").map(PathBuf::from)
}

/// Trains `id` with default settings until the best iterate satisfies
/// `converged` (checked only from iteration `min_iters` on) or the
/// iteration cap is reached.
fn train(id: &str, min_iters: usize, converged: impl Fn(&LossReport) -> bool) -> Trained {
    let spec: ProblemSpec = build_preset(id).expect("preset");
    let mut trainer = Trainer::new(spec, TrainConfig::default()).expect("trainer");
    let cache = cache_dir().map(|d| (d.join(format!("{id}.ckpt")), d.join(format!("{id}.log"))));
    if let Some((ckpt, log)) = &cache {
        if ckpt.exists() && log.exists() {
            trainer
                .resume(TrainState::load(ckpt).expect("cached state"))
                .expect("resume");
            let text = fs::read_to_string(log).expect("cached log");
            let mut rows = parse_loss_log(&text).expect("cached log parses");
            let early = rows
                .iter()
                .position(|(i, _)| *i == usize::MAX)
                .map(|k| rows.remove(k).1);
            trainer.history = rows;
            return Trained {
                trainer,
                early_best: early,
                seconds: 0.0,
            };
        }
    }
    let start = Instant::now();
    let mut early_best = None;
    let result = trainer.run(|it, r, state| {
        if it % 1000 == 0 {
            eprintln!(
                "  [{id}] iter {it:>5}  {}  ({:.0}s)",
                components(r),
                start.elapsed().as_secs_f64()
            );
        }
        let best = &state.best.as_ref().expect("noted").report;
        if it == 5000 {
            early_best = Some(*best);
        }
        if it >= min_iters && converged(best) {
            Control::Stop
        } else {
            Control::Continue
        }
    });
    if let Err(e) = result {
        panic!("training {id} failed: {e}");
    }
    if early_best.is_none() && trainer.state.iteration <= 5000 {
        early_best = trainer.state.best.as_ref().map(|b| b.report);
    }
    if let Some((ckpt, log)) = &cache {
        fs::create_dir_all(ckpt.parent().unwrap()).expect("cache dir");
        trainer.state.save(ckpt).expect("cache state");
        let mut text = loss_log_csv(&trainer.history);
        if let Some(r) = &early_best {
            // the early best rides along under a sentinel iteration
            text.push_str(&loss_log_line(usize::MAX, r));
            text.push('\n');
        }
        fs::write(log, text).expect("cache log");
    }
    Trained {
        trainer,
        early_best,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let report = fd_suite(100, 20, FdTolerance::default()).expect("fd suite");
    let secs = start.elapsed().as_secs_f64();
    let worst = |hess: bool| {
        report
            .checks
            .iter()
            .filter(|c| c.name.contains(" hess ") == hess)
            .map(|c| c.error())
            .fold(0.0, f64::max)
    };
    outcome(
        report.passed() && secs < 60.0,
        format!(
            "{} checks, worst first-order {:.2e} (< 1e-5), worst Hessian {:.2e} (< 1e-4), {secs:.1}s (< 60s)",
            report.checks.len(),
            worst(false),
            worst(true)
        ),
    )
}

fn criterion_2() -> Outcome {
    let report = manufactured_suite(1000, 1e-8).expect("manufactured suite");
    let detail = report
        .checks
        .iter()
        .map(|c| format!("{} {:.1e}", c.name.trim_start_matches("manufactured "), c.measured))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(report.passed(), format!("{detail} (< 1e-8, 1000 points)"))
}

fn criterion_3(a: &Trained, b: &Trained) -> Outcome {
    let (ra, rb) = (a.best(), b.best());
    let full_a = within(ra, 5e-2, 5e-2, 5e-2);
    let full_b = within(rb, 1e-1, 1e-1, 1e-1);
    let early = a.early_best.as_ref();
    let early_ok = early.is_some_and(|r| within(r, 2e-1, 2e-1, 2e-1) && r.boundary <= 2e-1);
    outcome(
        full_a && full_b && early_ok,
        format!(
            "A after {} iters: {} (<= 5e-2); A within 5000 iters: {} (<= 2e-1); B after {} iters: {} (<= 1e-1)",
            a.trainer.state.iteration,
            components(ra),
            early.map_or("not reached".into(), components),
            b.trainer.state.iteration,
            components(rb),
        ),
    )
}

fn criterion_4(translation: &Trained, growth: &Trained) -> Outcome {
    let wt = translation.best().cost;
    let wg = growth.best().cost;
    let et = (wt - DISCRETE_OT_64).abs() / DISCRETE_OT_64;
    let eg = (wg - FR_GROWTH_COST).abs() / FR_GROWTH_COST;
    outcome(
        et < 0.1 && eg < 0.1,
        format!(
            "translation W {wt:.5} vs {DISCRETE_OT_64:.5} ({:.1}%), growth W {wg:.4} vs {FR_GROWTH_COST} ({:.1}%) (< 10%)",
            100.0 * et,
            100.0 * eg
        ),
    )
}

fn criterion_5(small: &Trained, large: &Trained) -> Outcome {
    let split = |t: &Trained| {
        let tr = &t.trainer;
        transport_split(tr.state.export_nets(), &tr.collocation, tr.spec.eta).expect("split")
    };
    let (s0, s1) = (split(small), split(large));
    let r0 = s0.growth / s0.kinetic;
    let r1 = s1.kinetic / s1.growth;
    outcome(
        r0 < 0.1 && r1 < 0.1,
        format!(
            "eta=1e-6: S/T = {r0:.3e} (S {:.3e}, T {:.3e}); eta=100: T/S = {r1:.3e} (T {:.3e}, S {:.3e}) (< 0.1)",
            s0.growth, s0.kinetic, s1.kinetic, s1.growth
        ),
    )
}

fn criterion_6(translation: &Trained) -> Outcome {
    let tr = &translation.trainer;
    let snaps = tr.snapshots().expect("snapshots");
    let series = mass_timeseries(&snaps, &tr.collocation.weights).expect("masses");
    let drift = max_relative_drift(&series);
    let masses = series
        .iter()
        .map(|(t, m)| format!("{t}:{m:.4}"))
        .collect::<Vec<_>>()
        .join(" ");
    outcome(
        drift < 0.05,
        format!("max drift {:.2}% (< 5%), masses {masses}", 100.0 * drift),
    )
}

fn criterion_7(sphere: &Trained) -> Outcome {
    let tr = &sphere.trainer;
    let r = sphere.best();
    let losses = within(r, 3e-1, 2e-1, 1e-2);
    let col = &tr.collocation;
    let nets = tr.state.export_nets();
    let mut tangency: f64 = 0.0;
    for &t in &col.times {
        let s = snapshot(nets, col, tr.spec.eta, t).expect("snapshot");
        for (i, frame) in col.frames.iter().enumerate() {
            let v = s.v.row(i);
            let scale = v.dot(&v).sqrt().max(1.0);
            for n in frame.normals() {
                let vn: f64 = v.iter().zip(n).map(|(a, b)| a * b).sum();
                tangency = tangency.max(vn.abs() / scale);
            }
        }
    }
    let mid = snapshot(nets, col, tr.spec.eta, 0.5).expect("snapshot");
    let k = (0..mid.len())
        .max_by(|&p, &q| mid.rho[p].total_cmp(&mid.rho[q]))
        .expect("points");
    let p = mid.positions.row(k);
    // the poles are antipodal, so every point of the equator z = 1/2 is a
    // geodesic midpoint; distance to that circle
    let radial = ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt();
    let dist = ((radial - 0.5).powi(2) + (p[2] - 0.5).powi(2)).sqrt();
    outcome(
        losses && tangency <= 1e-10 && dist <= 0.15,
        format!(
            "after {} iters: {} (<= 3e-1, 2e-1, 1e-2); max |v.n| {tangency:.1e} (<= 1e-10); t=0.5 peak at ({:.3}, {:.3}, {:.3}), {dist:.3} from the geodesic midpoints (<= 0.15)",
            tr.state.iteration,
            components(r),
            p[0],
            p[1],
            p[2]
        ),
    )
}

fn criterion_8(a: &Trained) -> Outcome {
    let tr = &a.trainer;
    let grid = GridShape {
        lower: vec![0.0, 0.0],
        upper: vec![1.0, 1.0],
        cells: vec![64, 64],
    };
    let centres = grid.centres();
    let vol = grid.cell_volume();
    let rho0: Vec<f64> = centres
        .rows()
        .into_iter()
        .map(|x| tr.spec.rho0.eval(&x.to_vec()))
        .collect();
    let rho1_l1: f64 = centres
        .rows()
        .into_iter()
        .map(|x| tr.spec.rho1.eval(&x.to_vec()))
        .sum::<f64>()
        * vol;
    let nets = tr.state.export_nets();
    let mut inputs = ndarray::Array2::from_elem((centres.nrows(), 3), 1.0);
    inputs.slice_mut(ndarray::s![.., 1..]).assign(&centres);
    let trained_end = nets.rho.eval_batch(inputs.view()).expect("eval");
    let phi = network_potential(&nets.phi);
    let mut detail = Vec::new();
    let mut pass = false;
    for scheme in [FvScheme::Muscl, FvScheme::Upwind] {
        let fv = fv_integrate_with(&phi, &rho0, &grid, tr.spec.eta, scheme).expect("finite volumes");
        let l1: f64 = fv.rho.iter().zip(&trained_end).map(|(a, b)| (a - b).abs()).sum::<f64>() * vol;
        let rel = l1 / rho1_l1;
        if scheme == FvScheme::Muscl {
            pass = rel < 0.2;
        }
        detail.push(format!("{scheme:?} {:.1}% ({} steps)", 100.0 * rel, fv.steps));
    }
    outcome(
        pass,
        format!("L1(fv, trained rho(1)) / |rho1|: {} (< 20%, 64^2)", detail.join(", ")),
    )
}

fn criterion_9() -> Outcome {
    let log = |seed: u64| {
        let spec = build_preset("A").expect("preset");
        let cfg = TrainConfig {
            max_iters: 10,
            log_interval: 1,
            seed,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(spec, cfg).expect("trainer");
        t.run(|_, _, _| Control::Continue).expect("run");
        loss_log_csv(&t.history)
    };
    let (a, b, c) = (log(1), log(1), log(2));
    outcome(
        a == b && a != c,
        format!(
            "Test A, 10 iterations: seed 1 twice {} ({} bytes), seed 2 {}",
            if a == b { "byte-identical" } else { "DIFFER" },
            a.len(),
            if a != c { "differs" } else { "IDENTICAL" }
        ),
    )
}

fn selected() -> Vec<u32> {
    match std::env::var("UOTNET_ACCEPTANCE") {
        Ok(list) if !list.trim().is_empty() => list.split(',').filter_map(|s| s.trim().parse().ok()).collect(),
        _ => (1..=9).collect(),
    }
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    let want = selected();
    let on = |n: u32| want.contains(&n);
    let mut results: BTreeMap<u32, Outcome> = BTreeMap::new();
    let mut report = |n: u32, name: &str, o: Outcome| {
        println!(
            "criterion {n} {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        let _ = std::io::stdout().flush();
        results.insert(n, o);
    };

    if on(1) {
        report(1, "derivative engine vs finite differences", criterion_1());
    }
    if on(2) {
        report(2, "manufactured KKT solutions", criterion_2());
    }
    if on(9) {
        report(9, "determinism", criterion_9());
    }
    if on(3) || on(8) {
        let a = train("A", 5000, |r| within(r, 5e-2, 5e-2, 5e-2));
        eprintln!("  [A] {:.0}s", a.seconds);
        if on(3) {
            let b = train("B", 0, |r| within(r, 1e-1, 1e-1, 1e-1));
            eprintln!("  [B] {:.0}s", b.seconds);
            report(3, "Test A and B loss magnitudes", criterion_3(&a, &b));
        }
        if on(8) {
            report(8, "finite-volume cross-check", criterion_8(&a));
        }
    }
    if on(4) || on(6) {
        let desk = |r: &LossReport| within(r, 5e-2, 5e-2, 5e-2) && r.boundary <= 5e-2;
        let t = train("desk-translation", 0, desk);
        eprintln!("  [desk-translation] {:.0}s", t.seconds);
        if on(4) {
            let g = train("desk-growth", 0, desk);
            eprintln!("  [desk-growth] {:.0}s", g.seconds);
            report(4, "desk-scale cost recovery", criterion_4(&t, &g));
        }
        if on(6) {
            report(6, "OT-mode mass conservation", criterion_6(&t));
        }
    }
    if on(5) {
        let conv = |r: &LossReport| within(r, 5e-2, 5e-2, 5e-2) && r.boundary <= 5e-2;
        let small = train("C-eta1e-6", 0, conv);
        let large = train("C-eta100", 0, conv);
        report(5, "eta-limit behaviour", criterion_5(&small, &large));
    }
    if on(7) {
        let s = train("Sphere", 0, |r| within(r, 3e-1, 2e-1, 1e-2));
        eprintln!("  [Sphere] {:.0}s", s.seconds);
        report(7, "sphere run", criterion_7(&s));
    }

    let failed: Vec<u32> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {failed:?}")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
