use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{sample_field, ExperimentConfig};
use super::fmt_f64;
use crate::error::{param, Result};
use crate::geom::{rng_from_seed, substream_seed, Point, SpatialIndex, Window};
use crate::lattice::{estimate_good_prob, GoodProb, TileModel, P_C};
use crate::stats::{linear_fit, wilson_interval, LinearFit, Z95};
use crate::subnet::{construct_subnet, largest_component};
use crate::tiling::ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    /// Square side in tiles.
    pub ell: f64,
    pub empty: u64,
    pub trials: u64,
    pub frequency: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSeries {
    pub lambda: f64,
    pub good_prob: GoodProb,
    pub supercritical: bool,
    /// Nodes of the largest subnet component, the set the squares are tested against.
    pub nodes: usize,
    pub points: Vec<CoveragePoint>,
    /// ln(frequency) − 2 ln(ℓ) against ℓ, over ℓ > 0 with at least one empty square.
    pub fit: Option<LinearFit>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub model: ModelKind,
    pub window: usize,
    pub series: Vec<CoverageSeries>,
}

pub const COVERAGE_CSV_HEADER: &str = "lambda,ell,empty,trials,frequency,ci_lo,ci_hi";

impl CoverageReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{COVERAGE_CSV_HEADER}")?;
        for s in &self.series {
            for p in &s.points {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt_f64(s.lambda),
                    fmt_f64(p.ell),
                    p.empty,
                    p.trials,
                    fmt_f64(p.frequency),
                    fmt_f64(p.ci.0),
                    fmt_f64(p.ci.1)
                )?;
            }
        }
        Ok(())
    }
}

fn square_is_empty(index: &SpatialIndex, x: f64, y: f64, side: f64) -> bool {
    if index.is_empty() {
        return true;
    }
    let (cx0, cy0) = index.cell_of(&Point::new(x, y));
    let (cx1, cy1) = index.cell_of(&Point::new(x + side, y + side));
    for cy in cy0..=cy1 {
        for cx in cx0..=cx1 {
            for &id in index.bucket(cx, cy) {
                let p = index.point(id);
                if p.x >= x && p.x <= x + side && p.y >= y && p.y <= y + side {
                    return false;
                }
            }
        }
    }
    true
}

/// Empty-square counts per side. Each trial drops a chain of nested squares:
/// the largest uniformly in the window, each smaller one uniformly inside the
/// next larger, so counts are monotone in ℓ by construction.
pub fn empty_square_counts(nodes: &[Point], window: &Window, sides: &[f64], trials: u64, seed: u64) -> Result<Vec<u64>> {
    let max = sides.iter().copied().fold(0.0, f64::max);
    if max > window.width() || max > window.height() {
        return param(format!("square side {max} exceeds the window"));
    }
    let cell = (window.width() / 64.0).max(1e-9);
    let index = SpatialIndex::new(nodes, cell)?;
    let mut order: Vec<usize> = (0..sides.len()).collect();
    order.sort_by(|&a, &b| sides[b].total_cmp(&sides[a]));
    let per_trial: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(substream_seed(seed, t));
            let mut out = vec![false; sides.len()];
            let (mut x, mut y, mut outer) = (window.x_min, window.y_min, f64::NAN);
            for &s in &order {
                let side = sides[s];
                let (ox, oy, ow, oh) = if outer.is_nan() {
                    (window.x_min, window.y_min, window.width(), window.height())
                } else {
                    (x, y, outer, outer)
                };
                x = ox + rng.random::<f64>() * (ow - side);
                y = oy + rng.random::<f64>() * (oh - side);
                outer = side;
                out[s] = side == 0.0 || square_is_empty(&index, x, y, side);
            }
            out
        })
        .collect();
    Ok((0..sides.len())
        .map(|s| per_trial.iter().filter(|r| r[s]).count() as u64)
        .collect())
}

/// Fits ln(freq) − 2 ln ℓ against ℓ over the points with ℓ > 0 and empty > 0.
pub fn fit_coverage(points: &[CoveragePoint]) -> (Option<LinearFit>, Option<String>) {
    let usable: Vec<&CoveragePoint> = points.iter().filter(|p| p.ell > 0.0 && p.empty > 0).collect();
    if usable.is_empty() && points.iter().any(|p| p.ell > 0.0) {
        return (None, Some("no empty squares at any positive side; decay slope is -inf".into()));
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.ell).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.frequency.ln() - 2.0 * p.ell.ln()).collect();
    match linear_fit(&xs, &ys) {
        Some(f) => (Some(f), None),
        None => (None, Some(format!("only {} usable sides; no fit", usable.len()))),
    }
}

pub fn run_coverage(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let geom = cfg.geom()?;
    let kind = geom.kind;
    let k = cfg.k_for(kind);
    let lambdas = if cfg.lambdas.is_empty() {
        vec![cfg.lambda]
    } else {
        cfg.lambdas.clone()
    };
    let sides: Vec<f64> = cfg.ell.iter().map(|l| l * geom.side).collect();
    let mut series = Vec::new();
    for (li, &lambda) in lambdas.iter().enumerate() {
        let seed = substream_seed(cfg.seed, li as u64);
        let good_prob = estimate_good_prob(&geom, TileModel { density: lambda, k }, cfg.trials, substream_seed(seed, 1))?;
        let supercritical = good_prob.p_hat > P_C;
        if !supercritical {
            log::warn!("lambda = {lambda}: good-tile probability {:.4} is not above {P_C}", good_prob.p_hat);
        }
        let (pts, base) = sample_field(cfg, &geom, lambda, seed)?;
        let c = construct_subnet(&pts, &base, &geom, k)?;
        let lc = largest_component(&c.subnet);
        let nodes: Vec<Point> = lc.nodes.iter().map(|n| n.position).collect();
        let counts = empty_square_counts(&nodes, &pts.window, &sides, cfg.trials, substream_seed(seed, 2))?;
        let points: Vec<CoveragePoint> = cfg
            .ell
            .iter()
            .zip(counts)
            .map(|(&ell, empty)| CoveragePoint {
                ell,
                empty,
                trials: cfg.trials,
                frequency: empty as f64 / cfg.trials as f64,
                ci: wilson_interval(empty, cfg.trials, Z95),
            })
            .collect();
        let (fit, mut note) = fit_coverage(&points);
        if !supercritical {
            let s = format!("subcritical: good-tile probability {:.4}", good_prob.p_hat);
            note = Some(match note {
                Some(n) => format!("{s}; {n}"),
                None => s,
            });
        }
        series.push(CoverageSeries {
            lambda,
            good_prob,
            supercritical,
            nodes: nodes.len(),
            points,
            fit,
            note,
        });
    }
    Ok(CoverageReport {
        model: kind,
        window: cfg.window,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_side_is_always_empty_and_counts_are_monotone() {
        let w = Window::new(0.0, 0.0, 10.0, 10.0, 0.0).unwrap();
        let nodes: Vec<Point> = (0..30).map(|i| Point::new((i * 7 % 10) as f64 + 0.5, (i % 10) as f64 + 0.5)).collect();
        let c = empty_square_counts(&nodes, &w, &[0.0, 1.0, 2.0, 4.0], 500, 3).unwrap();
        assert_eq!(c[0], 500);
        assert!(c.windows(2).all(|w| w[0] >= w[1]), "{c:?}");
        assert!(empty_square_counts(&nodes, &w, &[11.0], 5, 3).is_err());
    }

    #[test]
    fn no_nodes_means_always_empty() {
        let w = Window::new(0.0, 0.0, 10.0, 10.0, 0.0).unwrap();
        assert_eq!(empty_square_counts(&[], &w, &[3.0], 50, 1).unwrap(), vec![50]);
    }

    #[test]
    fn fit_without_empties_reports_note() {
        let p = |ell, empty| CoveragePoint {
            ell,
            empty,
            trials: 10,
            frequency: empty as f64 / 10.0,
            ci: (0.0, 1.0),
        };
        let (f, n) = fit_coverage(&[p(0.0, 10), p(2.0, 0), p(4.0, 0)]);
        assert!(f.is_none());
        assert!(n.unwrap().contains("-inf"));
        let (f, n) = fit_coverage(&[p(1.0, 8), p(2.0, 4), p(3.0, 2)]);
        assert!(f.is_some() && n.is_none());
    }
}
