use std::collections::HashSet;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{sample_field, ExperimentConfig};
use super::fmt_f64;
use crate::error::{param, Result, SensError};
use crate::geom::{rng_from_seed, substream_seed};
use crate::graph::graph_distance;
use crate::lattice::{estimate_good_prob, GoodProb, TileModel, P_C};
use crate::stats::{linear_fit, quantile_sorted, LinearFit};
use crate::subnet::{construct_subnet, largest_component};
use crate::tiling::ModelKind;

/// `δ^β`, the power spent along a path of stretch δ.
pub fn power_stretch(delta: f64, beta: f64) -> Result<f64> {
    if !(2.0..=5.0).contains(&beta) {
        return param(format!("beta must lie in [2, 5], got {beta}"));
    }
    if !(delta >= 1.0) || !delta.is_finite() {
        return param(format!("stretch must be a finite value >= 1, got {delta}"));
    }
    Ok(delta.powf(beta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub bin: usize,
    pub u: u32,
    pub v: u32,
    pub euclidean: f64,
    pub weighted: f64,
    pub hops: u64,
    /// L1 distance between the pair's tiles.
    pub lattice_l1: u64,
    /// Weighted subnet distance over Euclidean distance.
    pub ratio: f64,
    /// Hop count over lattice distance.
    pub lattice_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub median: Option<f64>,
    pub p99: Option<f64>,
    pub mean: Option<f64>,
    pub max: Option<f64>,
    pub lattice_p99: Option<f64>,
    /// Pairs whose ratio exceeds 1.5× the bin median.
    pub exceed_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerStretch {
    pub beta: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StretchReport {
    pub model: ModelKind,
    pub lambda: f64,
    pub good_prob: Option<GoodProb>,
    pub component_size: usize,
    pub component_reps: usize,
    pub pairs: Vec<PairRecord>,
    pub bins: Vec<BinSummary>,
    /// 99th percentile of the weighted stretch over all pairs.
    pub alpha_hat: Option<f64>,
    pub power: Vec<PowerStretch>,
    /// (max − min)/min of the per-bin 99th percentiles.
    pub p99_spread: Option<f64>,
    /// ln((exceed + 0.5)/(count + 1)) against bin midpoint.
    pub exceedance_fit: Option<LinearFit>,
}

pub const STRETCH_CSV_HEADER: &str = "bin,u,v,euclidean,weighted,hops,lattice_l1,ratio,lattice_ratio";

impl StretchReport {
    pub fn empty(model: ModelKind, lambda: f64) -> Self {
        Self {
            model,
            lambda,
            good_prob: None,
            component_size: 0,
            component_reps: 0,
            pairs: Vec::new(),
            bins: Vec::new(),
            alpha_hat: None,
            power: Vec::new(),
            p99_spread: None,
            exceedance_fit: None,
        }
    }

    /// One row per sampled pair.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{STRETCH_CSV_HEADER}")?;
        for p in &self.pairs {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                p.bin,
                p.u,
                p.v,
                fmt_f64(p.euclidean),
                fmt_f64(p.weighted),
                p.hops,
                p.lattice_l1,
                fmt_f64(p.ratio),
                fmt_f64(p.lattice_ratio)
            )?;
        }
        Ok(())
    }
}

fn summarize(lo: f64, hi: f64, recs: &[&PairRecord]) -> BinSummary {
    let mut r: Vec<f64> = recs.iter().map(|p| p.ratio).collect();
    r.sort_by(f64::total_cmp);
    let mut l: Vec<f64> = recs.iter().map(|p| p.lattice_ratio).collect();
    l.sort_by(f64::total_cmp);
    let median = quantile_sorted(&r, 0.5);
    let exceed_count = median.map_or(0, |m| r.iter().filter(|&&x| x > 1.5 * m).count());
    BinSummary {
        lo,
        hi,
        count: r.len(),
        median,
        p99: quantile_sorted(&r, 0.99),
        mean: (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64),
        max: r.last().copied(),
        lattice_p99: quantile_sorted(&l, 0.99),
        exceed_count,
    }
}

/// Samples representative pairs of the largest subnet component in each
/// Euclidean distance bin and measures their subnet distances.
pub fn run_stretch(cfg: &ExperimentConfig) -> Result<StretchReport> {
    cfg.validate()?;
    let geom = cfg.geom()?;
    let kind = geom.kind;
    let k = cfg.k_for(kind);
    let prob = estimate_good_prob(
        &geom,
        TileModel { density: cfg.lambda, k },
        cfg.trials,
        substream_seed(cfg.seed, u32::MAX as u64),
    )?;
    if prob.p_hat <= P_C {
        return Err(SensError::Abort(format!(
            "parameters are not supercritical: good-tile probability {:.4} <= {P_C}",
            prob.p_hat
        )));
    }
    let (pts, base) = sample_field(cfg, &geom, cfg.lambda, cfg.seed)?;
    let c = construct_subnet(&pts, &base, &geom, k)?;
    let lc = largest_component(&c.subnet);
    let reps = lc.reps();
    if lc.len() < cfg.min_component || reps.len() < 2 {
        return Err(SensError::Abort(format!(
            "largest subnet component has {} nodes ({} representatives), below the minimum {}",
            lc.len(),
            reps.len(),
            cfg.min_component
        )));
    }
    let local = lc.to_local_graph();
    let tile_of_rep: Vec<_> = reps.iter().map(|&r| lc.node(r).expect("member").tile).collect();
    let pos = |r: u32| lc.node(r).expect("member").position;

    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (b, w) in cfg.bins.windows(2).enumerate() {
        let (lo, hi) = (w[0], w[1]);
        let mut rng = rng_from_seed(substream_seed(cfg.seed, b as u64 + 1));
        let mut seen = HashSet::new();
        let mut found = 0;
        let max_attempts = cfg.pairs.saturating_mul(2000).max(10_000);
        for _ in 0..max_attempts {
            if found == cfg.pairs {
                break;
            }
            let i = rng.random_range(0..reps.len());
            let j = rng.random_range(0..reps.len());
            if i == j {
                continue;
            }
            let key = (i.min(j), i.max(j));
            let d = pos(reps[i]).dist(&pos(reps[j]));
            if d >= lo && d < hi && seen.insert(key) {
                pairs.push((b, key.0, key.1));
                found += 1;
            }
        }
        if found < cfg.pairs {
            log::warn!("bin [{lo}, {hi}): only {found} of {} pairs found", cfg.pairs);
        }
    }

    let records: Vec<PairRecord> = pairs
        .par_iter()
        .map(|&(bin, i, j)| {
            let (u, v) = (reps[i], reps[j]);
            let (iu, iv) = (
                lc.index_of(u).expect("member") as u32,
                lc.index_of(v).expect("member") as u32,
            );
            let weighted = graph_distance(&local, iu, iv, true)?
                .ok_or_else(|| SensError::Integrity(format!("{u} and {v} are disconnected")))?;
            let hops = graph_distance(&local, iu, iv, false)?
                .ok_or_else(|| SensError::Integrity(format!("{u} and {v} are disconnected")))? as u64;
            let euclidean = pos(u).dist(&pos(v));
            let lattice_l1 = tile_of_rep[i].l1(&tile_of_rep[j]);
            Ok(PairRecord {
                bin,
                u,
                v,
                euclidean,
                weighted,
                hops,
                lattice_l1,
                ratio: weighted / euclidean,
                lattice_ratio: hops as f64 / lattice_l1.max(1) as f64,
            })
        })
        .collect::<Result<_>>()?;

    let bins: Vec<BinSummary> = cfg
        .bins
        .windows(2)
        .enumerate()
        .map(|(b, w)| {
            let in_bin: Vec<&PairRecord> = records.iter().filter(|r| r.bin == b).collect();
            summarize(w[0], w[1], &in_bin)
        })
        .collect();
    let mut all: Vec<f64> = records.iter().map(|r| r.ratio).collect();
    all.sort_by(f64::total_cmp);
    let alpha_hat = quantile_sorted(&all, 0.99);
    let power = match alpha_hat {
        Some(a) => cfg
            .beta
            .iter()
            .map(|&beta| Ok(PowerStretch { beta, value: power_stretch(a.max(1.0), beta)? }))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let p99s: Vec<f64> = bins.iter().filter_map(|b| b.p99).collect();
    let p99_spread = (p99s.len() >= 2).then(|| {
        let lo = p99s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p99s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / lo
    });
    let (xs, ys): (Vec<f64>, Vec<f64>) = bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| {
            (
                (b.lo + b.hi) / 2.0,
                ((b.exceed_count as f64 + 0.5) / (b.count as f64 + 1.0)).ln(),
            )
        })
        .unzip();
    Ok(StretchReport {
        model: kind,
        lambda: cfg.lambda,
        good_prob: Some(prob),
        component_size: lc.len(),
        component_reps: reps.len(),
        pairs: records,
        bins,
        alpha_hat,
        power,
        p99_spread,
        exceedance_fit: linear_fit(&xs, &ys),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_values() {
        assert_eq!(power_stretch(1.0, 3.3).unwrap(), 1.0);
        assert_eq!(power_stretch(2.0, 2.0).unwrap(), 4.0);
        assert!((power_stretch(1.5, 5.0).unwrap() - 7.59375).abs() < 1e-12);
        assert!(power_stretch(2.0, 1.0).is_err());
        assert!(power_stretch(2.0, 6.0).is_err());
        assert!(power_stretch(0.5, 2.0).is_err());
    }

    #[test]
    fn empty_report_csv_is_header_only() {
        let mut out = Vec::new();
        StretchReport::empty(ModelKind::Udg, 1.0).write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{STRETCH_CSV_HEADER}\n"));
    }

    #[test]
    fn subcritical_is_aborted() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("model", "UDG").unwrap();
        cfg.lambda = 1.0;
        cfg.trials = 200;
        assert!(matches!(run_stretch(&cfg), Err(SensError::Abort(_))));
    }

    #[test]
    fn udg_ratios_at_least_one() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("model", "UDG").unwrap();
        cfg.lambda = 12.0;
        cfg.window = 16;
        cfg.trials = 200;
        cfg.pairs = 20;
        cfg.bins = vec![2.0, 6.0, 12.0];
        let r = run_stretch(&cfg).unwrap();
        assert!(!r.pairs.is_empty());
        for p in &r.pairs {
            assert!(p.ratio >= 1.0 - 1e-12, "{p:?}");
            assert!(p.hops as f64 >= p.weighted - 1e-9);
            assert!(p.u != p.v);
        }
        assert_eq!(r.power.len(), 4);
    }
}
