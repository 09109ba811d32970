use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn uotnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uotnet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn presets_lists_every_table_id() {
    let dir = tempfile::tempdir().unwrap();
    let o = uotnet(&["presets"], dir.path());
    assert!(o.status.success());
    let ids: Vec<String> = stdout(&o)
        .lines()
        .filter_map(|l| l.split_whitespace().next().map(String::from))
        .collect();
    for want in [
        "A",
        "B",
        "C-eta100",
        "C-eta1",
        "C-eta1e-6",
        "Sphere",
        "Ellipsoid",
        "Peanut",
        "Torus",
        "Opener",
        "S-G4",
        "S-MG4",
        "M1",
        "M2",
    ] {
        assert!(ids.iter().any(|i| i == want), "{want} missing");
    }
    assert!(ids.iter().any(|i| i.starts_with("noise-")));
    assert!(ids.iter().any(|i| i.starts_with("shape-")));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(uotnet(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(uotnet(&["run", "--preset", "Z"], dir.path()).status.code(), Some(1));
    assert_eq!(uotnet(&["run"], dir.path()).status.code(), Some(1));
    let o = uotnet(&["run", "--config", "missing.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.toml"));
}

#[test]
fn repeated_runs_give_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["run", "--preset", "A", "--iters", "10", "--seed", "1"];
    let a = uotnet(&args, dir.path());
    let b = uotnet(&args, dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("iter,L_c,L_hj,L_ic,L_bc,total,W_M\n"));
    // no --out: nothing on disk
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn run_with_out_writes_log_snapshots_images_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(
        &cfg,
        "preset = \"A\"\n[problem]\ncells = [8, 8]\nn_time = 4\n[training]\nhidden = [8]\nlog_interval = 2\n",
    )
    .unwrap();
    let o = uotnet(
        &["run", "--config", "small.toml", "--iters", "5", "--out", "out"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let log = fs::read_to_string(out.join("loss_log.csv")).unwrap();
    let iters: Vec<&str> = log.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(iters, ["0", "2", "4", "5"]);
    for t in ["0.00", "0.25", "0.50", "0.75", "1.00"] {
        let csv = fs::read_to_string(out.join(format!("snapshot_t{t}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 1 + 64);
        let pgm = fs::read(out.join(format!("rho_t{t}.pgm"))).unwrap();
        assert!(pgm.starts_with(b"P5\n8 8\n255\n"));
    }
    assert!(out.join("checkpoint.txt").exists());

    // resuming continues the iteration count
    let o = uotnet(
        &[
            "run",
            "--config",
            "small.toml",
            "--iters",
            "7",
            "--out",
            "out2",
            "--resume",
            "out/checkpoint.txt",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(dir.path().join("out2/loss_log.csv")).unwrap();
    let first: Vec<&str> = log.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(first, ["6", "7"]);
}

#[test]
fn render_zero_density_is_black() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,x0,x1,rho,phi,g,v0,v1\n");
    for i in 0..3 {
        for j in 0..4 {
            let (x, y) = ((i as f64 + 0.5) / 3.0, (j as f64 + 0.5) / 4.0);
            csv.push_str(&format!("0.5,{x:.8e},{y:.8e},0,0,0,0,0\n"));
        }
    }
    fs::write(dir.path().join("s.csv"), csv).unwrap();
    let o = uotnet(&["render", "--snapshot", "s.csv", "--out", "s.pgm"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pgm = fs::read(dir.path().join("s.pgm")).unwrap();
    let header = b"P5\n3 4\n255\n";
    assert!(pgm.starts_with(header));
    assert_eq!(pgm.len(), header.len() + 12);
    assert!(pgm[header.len()..].iter().all(|&p| p == 0));
}

#[test]
fn render_refuses_scattered_points() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "t,x0,x1,x2,rho,phi,g,v0,v1,v2\n0,1,0,0,1,0,0,0,0,0\n0,0,1,0,2,0,0,0,0,0\n";
    fs::write(dir.path().join("s.csv"), csv).unwrap();
    let o = uotnet(&["render", "--snapshot", "s.csv", "--out", "s.pgm"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("s.pgm").exists());
}
