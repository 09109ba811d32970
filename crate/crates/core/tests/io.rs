use ndarray::Array2;
use proptest::prelude::*;
use uotnet::geometry::sample_isosurface;
use uotnet::io::{parse_loss_log, parse_point_cloud, point_cloud_csv, render_planar_bytes, Snapshot};
use uotnet::residuals::LossReport;
use uotnet::{ImplicitSurface, SurfaceId};

fn same_9_digits(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 5e-9 * a.abs().max(b.abs())
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3f64..1e3,
        (-300i32..300, -9.99f64..9.99).prop_map(|(e, m)| m * 10f64.powi(e)),
        Just(0.0),
    ]
}

proptest! {
    #[test]
    fn snapshot_csv_round_trip_keeps_9_significant_digits(
        d in 1usize..4,
        values in prop::collection::vec(finite(), 40),
        t in 0.0f64..1.0,
    ) {
        let n = values.len() / (2 * d + 3);
        let mut it = values.iter().copied().cycle();
        let mut take = |k: usize| (0..k).map(|_| it.next().unwrap()).collect::<Vec<_>>();
        let s = Snapshot {
            t,
            positions: Array2::from_shape_vec((n, d), take(n * d)).unwrap(),
            rho: take(n),
            phi: take(n),
            g: take(n),
            v: Array2::from_shape_vec((n, d), take(n * d)).unwrap(),
            grid: None,
        };
        let back = Snapshot::from_csv(&s.to_csv()).unwrap();
        prop_assert!(same_9_digits(back.t, s.t));
        let pairs = s.positions.iter().zip(back.positions.iter())
            .chain(s.rho.iter().zip(&back.rho))
            .chain(s.phi.iter().zip(&back.phi))
            .chain(s.g.iter().zip(&back.g))
            .chain(s.v.iter().zip(back.v.iter()));
        for (a, b) in pairs {
            prop_assert!(same_9_digits(*a, *b), "{a} vs {b}");
        }
    }

    #[test]
    fn loss_log_round_trip(rows in prop::collection::vec((0usize..100_000, prop::collection::vec(finite(), 6)), 1..20)) {
        let history: Vec<(usize, LossReport)> = rows
            .iter()
            .map(|(i, v)| (*i, LossReport { continuity: v[0], hj: v[1], endpoint: v[2], boundary: v[3], total: v[4], cost: v[5] }))
            .collect();
        let back = parse_loss_log(&uotnet::io::loss_log_csv(&history)).unwrap();
        prop_assert_eq!(back.len(), history.len());
        for ((i, a), (j, b)) in history.iter().zip(&back) {
            prop_assert_eq!(i, j);
            prop_assert!(same_9_digits(a.total, b.total) && same_9_digits(a.cost, b.cost));
            prop_assert!(same_9_digits(a.continuity, b.continuity) && same_9_digits(a.boundary, b.boundary));
        }
    }
}

#[test]
fn export_refuses_non_finite_fields() {
    let dir = tempfile::tempdir().unwrap();
    let s = Snapshot {
        t: 0.0,
        positions: Array2::zeros((1, 2)),
        rho: vec![f64::NAN],
        phi: vec![0.0],
        g: vec![0.0],
        v: Array2::zeros((1, 2)),
        grid: None,
    };
    let path = dir.path().join("s.csv");
    assert!(s.export(&path).is_err());
    assert!(!path.exists());
}

#[test]
fn point_cloud_round_trip() {
    let cloud = sample_isosurface(ImplicitSurface::new(SurfaceId::Torus), 12).unwrap();
    let back = parse_point_cloud(&point_cloud_csv(&cloud)).unwrap();
    assert_eq!(back.len(), cloud.len());
    assert_eq!(back.codim(), 1);
    for i in 0..cloud.len() {
        for (a, b) in cloud.point(i).iter().zip(back.point(i).iter()) {
            assert!(same_9_digits(*a, *b));
        }
    }
}

#[test]
fn single_peak_renders_brightest_at_its_cell() {
    let (nx, ny) = (5, 4);
    let mut positions = Array2::zeros((nx * ny, 2));
    let mut rho = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let (x, y) = ((i as f64 + 0.5) / nx as f64, (j as f64 + 0.5) / ny as f64);
            positions[[i * ny + j, 0]] = x;
            positions[[i * ny + j, 1]] = y;
            rho.push((-((x - 0.7).powi(2) + (y - 0.1).powi(2)) / 0.01).exp());
        }
    }
    let csv = Snapshot {
        t: 1.0,
        positions,
        phi: vec![0.0; rho.len()],
        g: vec![0.0; rho.len()],
        v: Array2::zeros((rho.len(), 2)),
        rho,
        grid: None,
    }
    .to_csv();
    let s = Snapshot::from_csv(&csv).unwrap();
    assert_eq!(s.grid, Some(vec![nx, ny]));
    let bytes = render_planar_bytes(&s).unwrap();
    let header = format!("P5\n{nx} {ny}\n255\n");
    let pixels = &bytes[header.len()..];
    let k = pixels.iter().position(|&p| p == 255).unwrap();
    // (x, y) = (0.7, 0.1): column 3, bottom image row
    assert_eq!((k % nx, k / nx), (3, ny - 1));
}
