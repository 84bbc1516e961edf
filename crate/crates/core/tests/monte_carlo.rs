//! Statistical checks with pinned seeds.

use rand::Rng;
use sensnet::geom::{rng_from_seed, sample_poisson, substream_seed, Window};
use sensnet::graph::build_udg;
use sensnet::lattice::{chemical_distance, estimate_good_prob, label_clusters, sample_site_lattice, theta_curve, TileModel};
use sensnet::stats::{intervals_overlap, quantile};
use sensnet::subnet::{construct_subnet, tile_window, AnomalyKind};
use sensnet::{TileGeom, TileId};

#[test]
fn poisson_count_mean() {
    let w = Window::new(0.0, 0.0, 10.0, 10.0, 0.0).unwrap();
    let counts: Vec<f64> = (0..1000)
        .map(|s| sample_poisson(&w, 1.568, substream_seed(11, s)).unwrap().len() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let sigma = 156.8f64.sqrt();
    assert!((mean - 156.8).abs() <= 3.0 * sigma / 1000f64.sqrt(), "mean {mean}");
}

#[test]
fn disjoint_counts_are_uncorrelated() {
    let w = Window::new(0.0, 0.0, 10.0, 5.0, 0.0).unwrap();
    let (mut l, mut r) = (Vec::new(), Vec::new());
    for s in 0..1000 {
        let ps = sample_poisson(&w, 2.0, substream_seed(12, s)).unwrap();
        let left = ps.points.iter().filter(|p| p.x < 5.0).count() as f64;
        l.push(left);
        r.push(ps.len() as f64 - left);
    }
    let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ml, mr) = (m(&l), m(&r));
    let cov: f64 = l.iter().zip(&r).map(|(a, b)| (a - ml) * (b - mr)).sum();
    let vl: f64 = l.iter().map(|a| (a - ml).powi(2)).sum();
    let vr: f64 = r.iter().map(|b| (b - mr).powi(2)).sum();
    let corr = cov / (vl * vr).sqrt();
    assert!(corr.abs() < 4.0 / 1000f64.sqrt(), "corr {corr}");
    assert!((ml - 50.0).abs() < 3.0 * 50f64.sqrt() / 1000f64.sqrt());
}

#[test]
fn site_lattice_open_fraction() {
    let p = 0.6;
    let mean: f64 = (0..1000)
        .map(|s| sample_site_lattice(100, p, substream_seed(13, s)).unwrap().open_fraction())
        .sum::<f64>()
        / 1000.0;
    let tol = 4.0 * (p * (1.0 - p) / (1e4 * 1000.0)).sqrt();
    assert!((mean - p).abs() <= tol, "mean {mean}");
}

#[test]
fn spanning_on_both_sides_of_threshold() {
    let spans = |p: f64| {
        (0..100)
            .filter(|&s| label_clusters(&sample_site_lattice(200, p, substream_seed(14, s)).unwrap()).spanning)
            .count()
    };
    assert!(spans(0.65) >= 95);
    assert!(spans(0.50) <= 10);
}

#[test]
fn theta_grows_with_p() {
    let grid: Vec<f64> = (0..9).map(|i| 0.5 + 0.05 * i as f64).collect();
    let t = theta_curve(200, &grid, 100, 15).unwrap();
    let at = |p: f64| t.iter().find(|x| (x.p - p).abs() < 1e-9).unwrap();
    assert!(at(0.55).ci.1 < at(0.65).ci.0);
    for w in t.windows(2) {
        assert!(w[1].theta >= w[0].theta || intervals_overlap(w[0].ci, w[1].ci));
    }
}

#[test]
fn chemical_stretch_quantiles_shrink_with_distance() {
    let mut q99 = Vec::new();
    for (di, &d) in [10i64, 20, 40].iter().enumerate() {
        let mut ratios = Vec::new();
        let mut s = 0;
        while ratios.len() < 400 {
            let l = sample_site_lattice(200, 0.65, substream_seed(16 + di as u64, s)).unwrap();
            let c = label_clusters(&l);
            let mut rng = rng_from_seed(substream_seed(17, s));
            s += 1;
            for _ in 0..20 {
                let i = rng.random_range(20..180 - d);
                let j = rng.random_range(20..180);
                let (a, b) = (TileId::new(i, j), TileId::new(i + d, j));
                let (ka, kb) = (l.index(a).unwrap(), l.index(b).unwrap());
                if !c.same_cluster(ka, kb) || c.sizes[c.labels[ka].unwrap() as usize] != c.largest {
                    continue;
                }
                let cd = chemical_distance(&l, a, b).unwrap();
                ratios.push(cd.hops.unwrap() as f64 / cd.l1 as f64);
            }
        }
        q99.push(quantile(&ratios, 0.99).unwrap());
    }
    assert!(q99[0] >= q99[1] && q99[1] >= q99[2], "{q99:?}");
    assert!(q99[2] < 5.0, "{q99:?}");
}

#[test]
fn good_probability_limits_and_monotonicity() {
    let g = TileGeom::udg(0.25).unwrap();
    let p = |l: f64| estimate_good_prob(&g, TileModel { density: l, k: None }, 4000, 18).unwrap();
    assert!(p(0.05).p_hat < 0.001);
    assert!(p(50.0).p_hat >= 0.99);
    let seq: Vec<_> = [4.0, 6.0, 8.0, 10.0].iter().map(|&l| p(l)).collect();
    for w in seq.windows(2) {
        assert!(w[1].p_hat > w[0].p_hat || intervals_overlap(w[0].ci, w[1].ci));
    }

    let nn = TileGeom::nn(0.893).unwrap();
    let q = |k: usize| estimate_good_prob(&nn, TileModel { density: 1.0, k: Some(k) }, 1000, 19).unwrap();
    let (a, b, c) = (q(150), q(188), q(230));
    assert!(a.p_hat <= b.p_hat && b.p_hat <= c.p_hat);
}

#[test]
fn udg_elections_are_cliques_over_ten_thousand_tiles() {
    let g = TileGeom::udg(0.25).unwrap();
    let w = tile_window(&g, 100, 1.0).unwrap();
    let ps = sample_poisson(&w, 9.0, 20).unwrap();
    let base = build_udg(&ps);
    let c = construct_subnet(&ps, &base, &g, None).unwrap();
    assert_eq!(c.statuses.len(), 10_000);
    let elections = c
        .anomalies
        .iter()
        .filter(|a| matches!(a.kind, AnomalyKind::ElectionNotClique { .. }))
        .count();
    assert_eq!(elections, 0);
    assert_eq!(c.wiring_anomalies(), 0);
    assert!(c.good_count() > 5000);
}
