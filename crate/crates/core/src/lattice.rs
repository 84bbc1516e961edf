//! The Z² site lattice: coupling from tiles, cluster statistics, chemical
//! distance and threshold search.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSets;
use crate::error::{param, Result, SensError};
use crate::geom::{rng_from_seed, sample_poisson, substream_seed};
use crate::stats::{mean_ci, wilson_interval, Z95};
use crate::subnet::{classify_tile, tile_window, TileBuckets, TileStatus};
use crate::tiling::{ModelKind, TileGeom, TileId};

/// Critical probability of Z² site percolation used as the target.
pub const P_C: f64 = 0.593;

const MAX_TRIALS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    CoupledFromTiles,
    SampledIid { p: f64, seed: u64 },
}

/// A `width × height` grid of open/closed sites. Site `(i, j)` in local
/// coordinates corresponds to tile `origin + (i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeWindow {
    pub width: usize,
    pub height: usize,
    /// Row-major by `j`: `open[j * width + i]`.
    pub open: Vec<bool>,
    pub origin: TileId,
    pub provenance: Provenance,
}

impl LatticeWindow {
    pub fn new(width: usize, height: usize, open: Vec<bool>, origin: TileId, provenance: Provenance) -> Result<Self> {
        if width == 0 || height == 0 {
            return param("lattice dimensions must be positive");
        }
        if open.len() != width * height {
            return param(format!(
                "lattice has {} sites, expected {width}x{height}",
                open.len()
            ));
        }
        Ok(Self {
            width,
            height,
            open,
            origin,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.open.len()
    }

    pub fn is_empty(&self) -> bool {
        self.open.is_empty()
    }

    /// Local index of tile `t`, if inside the window.
    pub fn index(&self, t: TileId) -> Option<usize> {
        let i = t.i - self.origin.i;
        let j = t.j - self.origin.j;
        if i < 0 || j < 0 || i as usize >= self.width || j as usize >= self.height {
            return None;
        }
        Some(j as usize * self.width + i as usize)
    }

    pub fn site(&self, idx: usize) -> TileId {
        TileId::new(
            self.origin.i + (idx % self.width) as i64,
            self.origin.j + (idx / self.width) as i64,
        )
    }

    pub fn contains(&self, t: TileId) -> bool {
        self.index(t).is_some()
    }

    /// Sites outside the window are closed.
    pub fn is_open(&self, t: TileId) -> bool {
        self.index(t).is_some_and(|k| self.open[k])
    }

    pub fn open_count(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }

    pub fn open_fraction(&self) -> f64 {
        self.open_count() as f64 / self.len() as f64
    }

    /// Open neighbours of local index `k` in the order (i−1,j), (i,j−1), (i,j+1), (i+1,j).
    pub(crate) fn neighbor_indices(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = (k % self.width, k / self.width);
        let w = self.width;
        [
            (i > 0).then(|| k - 1),
            (j > 0).then(|| k - w),
            (j + 1 < self.height).then(|| k + w),
            (i + 1 < w).then(|| k + 1),
        ]
        .into_iter()
        .flatten()
    }

    /// Plain PBM (`P1`): one text row per `j`, ascending, `1` for open.
    pub fn write_pbm<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "P1")?;
        writeln!(out, "{} {}", self.width, self.height)?;
        for row in self.open.chunks(self.width) {
            let line: Vec<&str> = row.iter().map(|&o| if o { "1" } else { "0" }).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Site `(i, j)` is open exactly when tile `(i, j)` is good.
pub fn couple_lattice(statuses: &[TileStatus]) -> Result<LatticeWindow> {
    if statuses.is_empty() {
        return param("no tile statuses to couple");
    }
    let i_min = statuses.iter().map(|s| s.tile.i).min().unwrap();
    let i_max = statuses.iter().map(|s| s.tile.i).max().unwrap();
    let j_min = statuses.iter().map(|s| s.tile.j).min().unwrap();
    let j_max = statuses.iter().map(|s| s.tile.j).max().unwrap();
    let width = (i_max - i_min + 1) as usize;
    let height = (j_max - j_min + 1) as usize;
    if statuses.len() != width * height {
        return param(format!(
            "ragged tile grid: {} statuses for a {width}x{height} bounding box",
            statuses.len()
        ));
    }
    let mut open = vec![false; width * height];
    let mut seen = vec![false; width * height];
    for s in statuses {
        let k = (s.tile.j - j_min) as usize * width + (s.tile.i - i_min) as usize;
        if seen[k] {
            return param(format!("tile {} appears twice", s.tile));
        }
        seen[k] = true;
        open[k] = s.good;
    }
    LatticeWindow::new(width, height, open, TileId::new(i_min, j_min), Provenance::CoupledFromTiles)
}

/// Square `n × n` lattice with iid Bernoulli(p) sites.
pub fn sample_site_lattice(n: usize, p: f64, seed: u64) -> Result<LatticeWindow> {
    if !(0.0..=1.0).contains(&p) {
        return param(format!("site probability must lie in [0, 1], got {p}"));
    }
    let mut rng = rng_from_seed(seed);
    let open = (0..n * n).map(|_| rng.random::<f64>() < p).collect();
    LatticeWindow::new(n, n, open, TileId::new(0, 0), Provenance::SampledIid { p, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    /// Cluster label per site; `None` for closed sites. Labels follow first
    /// appearance in row-major order.
    pub labels: Vec<Option<u32>>,
    pub sizes: Vec<usize>,
    pub largest: usize,
    /// Largest cluster size over the total number of sites.
    pub theta: f64,
    /// Some single cluster touches both the left and the right column.
    pub spanning: bool,
}

impl ClusterStats {
    pub fn same_cluster(&self, a: usize, b: usize) -> bool {
        matches!((self.labels[a], self.labels[b]), (Some(x), Some(y)) if x == y)
    }
}

/// 4-neighbour open clusters via union-find.
pub fn label_clusters(l: &LatticeWindow) -> ClusterStats {
    let w = l.width;
    let mut dsu = DisjointSets::new(l.len());
    for k in 0..l.len() {
        if !l.open[k] {
            continue;
        }
        if k % w + 1 < w && l.open[k + 1] {
            dsu.union(k as u32, (k + 1) as u32);
        }
        if k + w < l.len() && l.open[k + w] {
            dsu.union(k as u32, (k + w) as u32);
        }
    }
    let mut remap: Vec<Option<u32>> = vec![None; l.len()];
    let mut labels = vec![None; l.len()];
    let mut sizes: Vec<usize> = Vec::new();
    for k in 0..l.len() {
        if !l.open[k] {
            continue;
        }
        let r = dsu.find(k as u32) as usize;
        let lab = *remap[r].get_or_insert_with(|| {
            sizes.push(0);
            (sizes.len() - 1) as u32
        });
        sizes[lab as usize] += 1;
        labels[k] = Some(lab);
    }
    let mut left = vec![false; sizes.len()];
    for j in 0..l.height {
        if let Some(c) = labels[j * w] {
            left[c as usize] = true;
        }
    }
    let spanning = (0..l.height).any(|j| labels[j * w + w - 1].is_some_and(|c| left[c as usize]));
    let largest = sizes.iter().copied().max().unwrap_or(0);
    ClusterStats {
        labels,
        theta: largest as f64 / l.len() as f64,
        sizes,
        largest,
        spanning,
    }
}

/// Hop distance inside the open cluster and the L1 distance between two sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChemicalDistance {
    pub hops: Option<u64>,
    pub l1: u64,
}

pub fn chemical_distance(l: &LatticeWindow, x: TileId, y: TileId) -> Result<ChemicalDistance> {
    let open_index = |t: TileId| match l.index(t) {
        Some(k) if l.open[k] => Ok(k),
        Some(_) => param(format!("site {t} is closed")),
        None => param(format!("site {t} is outside the lattice")),
    };
    let (a, b) = (open_index(x)?, open_index(y)?);
    let dist = bfs_distances(l, a, Some(b));
    Ok(ChemicalDistance {
        hops: dist[b].map(u64::from),
        l1: x.l1(&y),
    })
}

/// BFS hop counts over open sites from `src`, stopping early at `target`.
pub(crate) fn bfs_distances(l: &LatticeWindow, src: usize, target: Option<usize>) -> Vec<Option<u32>> {
    let mut dist = vec![None; l.len()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        if Some(u) == target {
            break;
        }
        let du = dist[u].unwrap();
        for v in l.neighbor_indices(u) {
            if l.open[v] && dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Model parameters for a single-tile goodness trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileModel {
    pub density: f64,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodProb {
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci: (f64, f64),
}

impl GoodProb {
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        Self {
            successes,
            trials,
            p_hat: successes as f64 / trials as f64,
            ci: wilson_interval(successes, trials, Z95),
        }
    }

    fn merge(self, other: GoodProb) -> Self {
        Self::from_counts(self.successes + other.successes, self.trials + other.trials)
    }
}

/// Whether tile (0,0) is good in one fresh sample of the tile plus a one-tile margin.
pub fn sample_tile_good(geom: &TileGeom, model: TileModel, seed: u64) -> Result<bool> {
    let w = tile_window(geom, 1, 1.0)?;
    let pts = sample_poisson(&w, model.density, seed)?;
    let buckets = TileBuckets::new(&pts, geom);
    Ok(classify_tile(TileId::new(0, 0), &pts, &buckets, geom, model.k)?.good)
}

fn count_good(geom: &TileGeom, model: TileModel, from: u64, to: u64, seed: u64) -> Result<u64> {
    (from..to)
        .into_par_iter()
        .map(|i| sample_tile_good(geom, model, substream_seed(seed, i)).map(u64::from))
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// Fraction of good tiles over `trials` independent samples, with a Wilson interval.
pub fn estimate_good_prob(geom: &TileGeom, model: TileModel, trials: u64, seed: u64) -> Result<GoodProb> {
    if trials == 0 {
        return param("trials must be at least 1");
    }
    if geom.kind == ModelKind::Nn && model.k.is_none() {
        return param("NN goodness needs k");
    }
    Ok(GoodProb::from_counts(count_good(geom, model, 0, trials, seed)?, trials))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdParameter {
    Lambda,
    K,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    pub parameter: ThresholdParameter,
    pub target: f64,
    pub bracket: (f64, f64),
    /// Bracket width at which a real-valued search stops. Ignored for `k`.
    pub tol: f64,
    /// Initial trials per evaluation; doubled while the interval contains the target.
    pub trials: u64,
    pub seed: u64,
}

impl ThresholdSearch {
    pub fn new(parameter: ThresholdParameter, bracket: (f64, f64)) -> Self {
        Self {
            parameter,
            target: P_C,
            bracket,
            tol: 0.01,
            trials: 2000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub value: f64,
    pub prob: GoodProb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWindow {
    /// Tiles per side of the sampled square (the tile and its margin).
    pub tiles: usize,
    pub side: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub parameter: ThresholdParameter,
    /// Smallest parameter value found with p̂ above the target.
    pub estimate: f64,
    /// Final bracket `[lo, hi]` around the crossing.
    pub ci: (f64, f64),
    /// Trials used at the estimate.
    pub trials: u64,
    pub window: Option<SampleWindow>,
    pub target: f64,
    pub p_at_estimate: GoodProb,
    /// False if two evaluations with disjoint intervals were out of order.
    pub monotone: bool,
    pub evaluations: Vec<Evaluation>,
}

impl ThresholdReport {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Evaluates with CI-aware widening: trials double while the interval
/// contains the target, up to 10⁵.
fn evaluate<F>(f: &F, value: f64, search: &ThresholdSearch) -> Result<GoodProb>
where
    F: Fn(f64, u64, u64) -> Result<GoodProb>,
{
    let mut acc = f(value, 0, search.trials.max(1))?;
    while acc.ci.0 <= search.target && search.target <= acc.ci.1 && acc.trials < MAX_TRIALS {
        let next = (acc.trials * 2).min(MAX_TRIALS);
        acc = acc.merge(f(value, acc.trials, next)?);
    }
    Ok(acc)
}

/// Bisection against an arbitrary estimator `f(value, from, to)` returning the
/// counts for trial indices `from..to`.
pub fn find_threshold_with<F>(search: &ThresholdSearch, f: F) -> Result<ThresholdReport>
where
    F: Fn(f64, u64, u64) -> Result<GoodProb>,
{
    let integer = search.parameter == ThresholdParameter::K;
    let (mut lo, mut hi) = search.bracket;
    if integer {
        lo = lo.round();
        hi = hi.round();
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return param(format!("invalid bracket {lo}..{hi}"));
    }
    if !integer && !(search.tol > 0.0) {
        return param("tolerance must be positive");
    }
    let mut evals = Vec::new();
    let p_lo = evaluate(&f, lo, search)?;
    let mut p_hi = evaluate(&f, hi, search)?;
    evals.push(Evaluation { value: lo, prob: p_lo });
    evals.push(Evaluation { value: hi, prob: p_hi });
    if p_lo.p_hat > search.target || p_hi.p_hat <= search.target {
        return Err(SensError::Parameter(format!(
            "bracket {lo}..{hi} does not straddle {}: p̂ = {:.4} and {:.4}",
            search.target, p_lo.p_hat, p_hi.p_hat
        )));
    }
    loop {
        let mid = if integer {
            if hi - lo <= 1.0 {
                break;
            }
            ((lo + hi) / 2.0).floor()
        } else {
            if hi - lo <= search.tol {
                break;
            }
            (lo + hi) / 2.0
        };
        let p = evaluate(&f, mid, search)?;
        evals.push(Evaluation { value: mid, prob: p });
        if p.p_hat > search.target {
            hi = mid;
            p_hi = p;
        } else {
            lo = mid;
        }
    }
    let mut sorted = evals.clone();
    sorted.sort_by(|a, b| a.value.total_cmp(&b.value));
    let monotone = sorted.iter().enumerate().all(|(i, a)| {
        sorted[i + 1..]
            .iter()
            .all(|b| !(b.prob.ci.1 < a.prob.ci.0))
    });
    if !monotone {
        log::warn!("goodness estimates are not monotone over the bracket");
    }
    Ok(ThresholdReport {
        parameter: search.parameter,
        estimate: hi,
        ci: (lo, hi),
        trials: p_hi.trials,
        window: None,
        target: search.target,
        p_at_estimate: p_hi,
        monotone,
        evaluations: evals,
    })
}

/// Threshold search over λ (UDG, or NN with fixed k) or over k (NN, fixed density).
pub fn find_threshold(geom: &TileGeom, base: TileModel, search: &ThresholdSearch) -> Result<ThresholdReport> {
    if search.parameter == ThresholdParameter::K && geom.kind != ModelKind::Nn {
        return param("k is only a parameter of the NN model");
    }
    let model_at = |v: f64| match search.parameter {
        ThresholdParameter::Lambda => TileModel { density: v, ..base },
        ThresholdParameter::K => TileModel { k: Some(v as usize), ..base },
    };
    let mut report = find_threshold_with(search, |v, from, to| {
        let m = model_at(v);
        if m.density <= 0.0 {
            return Ok(GoodProb::from_counts(0, to - from));
        }
        Ok(GoodProb::from_counts(count_good(geom, m, from, to, search.seed)?, to - from))
    })?;
    report.window = Some(SampleWindow {
        tiles: 3,
        side: geom.side,
    });
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub p: f64,
    pub theta: f64,
    pub ci: (f64, f64),
    pub spanning_fraction: f64,
}

/// Mean largest-cluster fraction per p over `trials` iid n×n lattices.
pub fn theta_curve(n: usize, ps: &[f64], trials: u64, seed: u64) -> Result<Vec<ThetaPoint>> {
    if n == 0 || trials == 0 {
        return param("n and trials must be positive");
    }
    ps.iter()
        .enumerate()
        .map(|(pi, &p)| {
            let runs: Vec<(f64, bool)> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let l = sample_site_lattice(n, p, substream_seed(substream_seed(seed, pi as u64), t))?;
                    let c = label_clusters(&l);
                    Ok((c.theta, c.spanning))
                })
                .collect::<Result<_>>()?;
            let thetas: Vec<f64> = runs.iter().map(|r| r.0).collect();
            let (theta, ci) = mean_ci(&thetas).expect("trials > 0");
            let spans = runs.iter().filter(|r| r.1).count();
            Ok(ThetaPoint {
                p,
                theta,
                ci,
                spanning_fraction: spans as f64 / trials as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&str]) -> LatticeWindow {
        let width = rows[0].len();
        let open = rows.iter().flat_map(|r| r.chars().map(|c| c == '1')).collect();
        LatticeWindow::new(width, rows.len(), open, TileId::new(0, 0), Provenance::CoupledFromTiles).unwrap()
    }

    #[test]
    fn extreme_probabilities() {
        assert_eq!(sample_site_lattice(10, 0.0, 1).unwrap().open_count(), 0);
        let l = sample_site_lattice(10, 1.0, 1).unwrap();
        assert_eq!(l.open_count(), 100);
        let c = label_clusters(&l);
        assert_eq!(c.sizes, vec![100]);
        assert!(c.spanning);
        assert_eq!(c.theta, 1.0);
        assert!(sample_site_lattice(10, 1.5, 1).is_err());
    }

    #[test]
    fn checkerboard_gives_singletons() {
        let l = grid(&["1010", "0101", "1010"]);
        let c = label_clusters(&l);
        assert_eq!(c.sizes.len(), 6);
        assert!(c.sizes.iter().all(|&s| s == 1));
        assert!(!c.spanning);
    }

    #[test]
    fn spanning_needs_one_cluster() {
        assert!(label_clusters(&grid(&["1100", "0111"])).spanning);
        assert!(!label_clusters(&grid(&["1100", "0011"])).spanning);
    }

    #[test]
    fn chemical_distance_detours() {
        let l = grid(&["111", "101", "111"]);
        let d = chemical_distance(&l, TileId::new(0, 1), TileId::new(2, 1)).unwrap();
        assert_eq!(d, ChemicalDistance { hops: Some(4), l1: 2 });
        let d = chemical_distance(&l, TileId::new(0, 0), TileId::new(1, 0)).unwrap();
        assert_eq!(d.hops, Some(1));
        assert!(chemical_distance(&l, TileId::new(1, 1), TileId::new(0, 0)).is_err());
        let split = grid(&["101"]);
        let d = chemical_distance(&split, TileId::new(0, 0), TileId::new(2, 0)).unwrap();
        assert_eq!(d.hops, None);
    }

    #[test]
    fn pbm_dump() {
        let mut out = Vec::new();
        grid(&["10", "01"]).write_pbm(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "P1\n2 2\n1 0\n0 1\n");
    }

    #[test]
    fn bisection_on_closed_form() {
        let s = ThresholdSearch::new(ThresholdParameter::Lambda, (0.0, 5.0));
        let r = find_threshold_with(&s, |x, from, to| {
            let n = to - from;
            Ok(GoodProb::from_counts(((1.0 - (-x).exp()) * n as f64).round() as u64, n))
        })
        .unwrap();
        assert!((r.estimate - (1.0f64 / 0.407).ln()).abs() <= 0.01, "{}", r.estimate);
        assert!(r.ci.1 - r.ci.0 <= 0.01);
        assert!(r.monotone);
    }

    #[test]
    fn integer_bisection_is_exact() {
        let s = ThresholdSearch::new(ThresholdParameter::K, (0.0, 100.0));
        let r = find_threshold_with(&s, |k, from, to| {
            let n = to - from;
            Ok(GoodProb::from_counts(if k >= 37.0 { n } else { 0 }, n))
        })
        .unwrap();
        assert_eq!(r.estimate, 37.0);
        assert_eq!(r.ci, (36.0, 37.0));
    }

    #[test]
    fn bracket_must_straddle() {
        let s = ThresholdSearch::new(ThresholdParameter::Lambda, (2.0, 5.0));
        let e = find_threshold_with(&s, |_, from, to| Ok(GoodProb::from_counts(to - from, to - from)));
        assert!(matches!(e, Err(SensError::Parameter(_))));
    }

    #[test]
    fn good_prob_limits() {
        let g = TileGeom::udg(0.25).unwrap();
        let lo = estimate_good_prob(&g, TileModel { density: 0.01, k: None }, 200, 5).unwrap();
        assert!(lo.p_hat < 0.01);
        let hi = estimate_good_prob(&g, TileModel { density: 50.0, k: None }, 200, 5).unwrap();
        assert!(hi.p_hat >= 0.99);
        assert!(estimate_good_prob(&g, TileModel { density: 1.0, k: None }, 0, 5).is_err());
    }

    #[test]
    fn theta_of_one_is_one() {
        let t = theta_curve(16, &[1.0], 3, 1).unwrap();
        assert_eq!(t[0].theta, 1.0);
        assert_eq!(t[0].spanning_fraction, 1.0);
    }
}
