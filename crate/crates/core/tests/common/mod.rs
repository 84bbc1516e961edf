//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use sensnet::geom::{rng_from_seed, sample_poisson, Point, PointSet, Window};
use sensnet::lattice::LatticeWindow;
use sensnet::subnet::tile_window;
use sensnet::TileGeom;

pub fn random_field(seed: u64) -> PointSet {
    let mut rng = rng_from_seed(seed);
    let side = rng.random_range(5.0..25.0);
    let density = rng.random_range(0.5..3.0);
    let w = Window::new(0.0, 0.0, side, side, 0.0).unwrap();
    let ps = sample_poisson(&w, density, seed).unwrap();
    assert!(ps.len() <= 2000);
    ps
}

pub fn brute_udg(p: &[Point]) -> Vec<(u32, u32)> {
    let mut e = Vec::new();
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i].dist2(&p[j]) <= 1.0 {
                e.push((i as u32, j as u32));
            }
        }
    }
    e
}

pub fn brute_nearest(p: &[Point], q: &Point, k: usize, exclude: Option<u32>) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..p.len() as u32).filter(|&i| Some(i) != exclude).collect();
    ids.sort_by(|&a, &b| {
        q.dist2(&p[a as usize])
            .total_cmp(&q.dist2(&p[b as usize]))
            .then(a.cmp(&b))
    });
    ids.truncate(k);
    ids
}

pub fn brute_knn(p: &[Point], k: usize) -> Vec<(u32, u32)> {
    let mut e = Vec::new();
    for i in 0..p.len() {
        for j in brute_nearest(p, &p[i], k, Some(i as u32)) {
            e.push(((i as u32).min(j), (i as u32).max(j)));
        }
    }
    e.sort_unstable();
    e.dedup();
    e
}

pub fn flood_fill(l: &LatticeWindow) -> (Vec<Option<usize>>, bool) {
    let (w, h) = (l.width, l.height);
    let mut lab = vec![None; w * h];
    let mut next = 0;
    for s in 0..w * h {
        if !l.open[s] || lab[s].is_some() {
            continue;
        }
        let mut stack = vec![s];
        lab[s] = Some(next);
        while let Some(k) = stack.pop() {
            let (i, j) = ((k % w) as i64, (k / w) as i64);
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (a, b) = (i + di, j + dj);
                if a < 0 || b < 0 || a >= w as i64 || b >= h as i64 {
                    continue;
                }
                let n = b as usize * w + a as usize;
                if l.open[n] && lab[n].is_none() {
                    lab[n] = Some(next);
                    stack.push(n);
                }
            }
        }
        next += 1;
    }
    let spans = (0..h).any(|r| {
        lab[r * w].is_some_and(|c| (0..h).any(|r2| lab[r2 * w + w - 1] == Some(c)))
    });
    (lab, spans)
}

/// UDG and NN fields for comparing the two construction routes.
pub fn distributed_fixtures() -> Vec<(TileGeom, Window, f64, Option<usize>, u64)> {
    let mut fixtures = Vec::new();
    for s in 0..10u64 {
        let g = TileGeom::udg(0.25).unwrap();
        let w = tile_window(&g, 6, 1.0).unwrap();
        fixtures.push((g, w, 6.0 + s as f64, None, 2000 + s));
    }
    for s in 0..10u64 {
        let g = TileGeom::nn(0.893).unwrap();
        let w = tile_window(&g, 2, 1.0).unwrap();
        fixtures.push((g, w, 1.0, Some(170 + 4 * s as usize), 3000 + s));
    }
    fixtures
}
