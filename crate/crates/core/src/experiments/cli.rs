use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{sample_field, ExperimentConfig};
use super::coverage::run_coverage;
use super::report::{
    render_svg, write_json, write_points, write_subnet_edges, write_subnet_nodes, write_with, Envelope, RunInfo,
};
use super::stretch::run_stretch;
use crate::error::{param, Result, SensError};
use crate::geom::{rng_from_seed, substream_seed};
use crate::lattice::{
    couple_lattice, find_threshold, label_clusters, sample_site_lattice, theta_curve, ThresholdParameter,
    ThresholdSearch, TileModel,
};
use crate::routing::{expand_route, route, Outcome};
use crate::subnet::{construct_subnet, construct_subnet_distributed, Construction};
use crate::tiling::{write_region_raster, ModelKind, TileId};

#[derive(Parser, Debug)]
#[command(name = "sensnet", version, about = "Sparse sensor subnetworks on Poisson fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// key=value config file (`#` comments).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides: `key=value`, `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a Poisson field and its base graph.
    Generate(RunArgs),
    /// Build the subnet and the coupled lattice.
    BuildSubnet(RunArgs),
    /// Site percolation on iid lattices.
    Percolation(RunArgs),
    /// Bisection for the good-tile threshold.
    FindThreshold(RunArgs),
    /// Stretch study over representative pairs.
    Stretch(RunArgs),
    /// Empty-square frequencies.
    Coverage(RunArgs),
    /// Route between two tiles of the coupled lattice.
    Route(RunArgs),
    /// SVG of the subnet and a region raster of one tile.
    Render(RunArgs),
}

impl Command {
    fn name_and_args(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Generate(a) => ("generate", a),
            Command::BuildSubnet(a) => ("build-subnet", a),
            Command::Percolation(a) => ("percolation", a),
            Command::FindThreshold(a) => ("find-threshold", a),
            Command::Stretch(a) => ("stretch", a),
            Command::Coverage(a) => ("coverage", a),
            Command::Route(a) => ("route", a),
            Command::Render(a) => ("render", a),
        }
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_args(&args.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn build(cfg: &ExperimentConfig) -> Result<(crate::geom::PointSet, Construction)> {
    let geom = cfg.geom()?;
    let k = cfg.k_for(geom.kind);
    let (pts, base) = sample_field(cfg, &geom, cfg.lambda, cfg.seed)?;
    let mut c = construct_subnet(&pts, &base, &geom, k)?;
    if cfg.distributed {
        c.subnet = construct_subnet_distributed(&pts, &base, &geom, k)?.subnet;
    }
    Ok((pts, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FieldSummary {
    points: usize,
    density: f64,
    base_edges: usize,
    window: crate::geom::Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SubnetSummary {
    model: ModelKind,
    points: usize,
    tiles: usize,
    good_tiles: usize,
    subnet_nodes: usize,
    subnet_edges: usize,
    max_degree: usize,
    largest_component: usize,
    anomalies: Vec<crate::subnet::Anomaly>,
    lattice_theta: f64,
    lattice_spanning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PercolationSummary {
    n: usize,
    p: f64,
    open_fraction: f64,
    clusters: usize,
    largest: usize,
    theta: f64,
    spanning: bool,
    trials: u64,
    curve: Vec<crate::lattice::ThetaPoint>,
}

fn run(name: &str, cfg: &ExperimentConfig) -> Result<()> {
    let out = &cfg.out;
    std::fs::create_dir_all(out)?;
    let info = RunInfo::new(name, cfg);
    match name {
        "percolation" => {
            let l = sample_site_lattice(cfg.n, cfg.p, cfg.seed)?;
            let c = label_clusters(&l);
            let curve = theta_curve(cfg.n, &[cfg.p], cfg.trials, cfg.seed)?;
            write_with(&out.join("lattice.pbm"), |w| l.write_pbm(w))?;
            let s = PercolationSummary {
                n: cfg.n,
                p: cfg.p,
                open_fraction: l.open_fraction(),
                clusters: c.sizes.len(),
                largest: c.largest,
                theta: c.theta,
                spanning: c.spanning,
                trials: cfg.trials,
                curve,
            };
            write_json(&out.join("percolation.json"), &Envelope::new(info, s))
        }
        "generate" => {
            let geom = cfg.geom()?;
            let (pts, base) = sample_field(cfg, &geom, cfg.lambda, cfg.seed)?;
            write_with(&out.join("points.csv"), |w| write_points(&pts, w))?;
            write_with(&out.join("base_edges.txt"), |w| base.write_edge_list(w))?;
            let s = FieldSummary {
                points: pts.len(),
                density: cfg.lambda,
                base_edges: base.edge_count(),
                window: pts.window,
            };
            write_json(&out.join("field.json"), &Envelope::new(info, s))
        }
        "build-subnet" => {
            let (pts, c) = build(cfg)?;
            let lattice = couple_lattice(&c.statuses)?;
            let clusters = label_clusters(&lattice);
            write_with(&out.join("subnet_nodes.csv"), |w| write_subnet_nodes(&c.subnet, w))?;
            write_with(&out.join("subnet_edges.csv"), |w| write_subnet_edges(&c.subnet, w))?;
            write_with(&out.join("lattice.pbm"), |w| lattice.write_pbm(w))?;
            let s = SubnetSummary {
                model: c.subnet.kind,
                points: pts.len(),
                tiles: c.statuses.len(),
                good_tiles: c.good_count(),
                subnet_nodes: c.subnet.len(),
                subnet_edges: c.subnet.edge_count(),
                max_degree: c.subnet.max_degree(),
                largest_component: crate::subnet::largest_component(&c.subnet).len(),
                anomalies: c.anomalies.clone(),
                lattice_theta: clusters.theta,
                lattice_spanning: clusters.spanning,
            };
            write_json(&out.join("subnet.json"), &Envelope::new(info, s))
        }
        "find-threshold" => {
            let geom = cfg.geom()?;
            let (parameter, default_bracket, base) = match geom.kind {
                ModelKind::Udg => (ThresholdParameter::Lambda, (1.0, 20.0), TileModel { density: cfg.lambda, k: None }),
                ModelKind::Nn => (ThresholdParameter::K, (150.0, 230.0), TileModel { density: cfg.lambda, k: Some(cfg.k) }),
            };
            let mut search = ThresholdSearch::new(parameter, cfg.bracket.unwrap_or(default_bracket));
            search.tol = cfg.tol;
            search.trials = cfg.trials;
            search.seed = cfg.seed;
            let r = find_threshold(&geom, base, &search)?;
            write_json(&out.join("threshold.json"), &Envelope::new(info, r))
        }
        "stretch" => {
            let r = run_stretch(cfg)?;
            write_with(&out.join("stretch.csv"), |w| r.write_csv(w))?;
            write_json(&out.join("stretch.json"), &Envelope::new(info, r))
        }
        "coverage" => {
            let r = run_coverage(cfg)?;
            write_with(&out.join("coverage.csv"), |w| r.write_csv(w))?;
            write_json(&out.join("coverage.json"), &Envelope::new(info, r))
        }
        "route" => {
            let (_, c) = build(cfg)?;
            let lattice = couple_lattice(&c.statuses)?;
            let (src, dst) = match (cfg.src, cfg.dst) {
                (Some(s), Some(d)) => (s, d),
                (None, None) => pick_pair(&lattice, cfg.seed)?,
                _ => return param("give both `src` and `dst`, or neither"),
            };
            let mut trace = route(&lattice, src, dst)?;
            if trace.outcome == Outcome::Delivered {
                trace.node_hops = expand_route(&trace.lattice_hops, &c.subnet)?;
            }
            write_json(&out.join("route.json"), &Envelope::new(info, trace))
        }
        "render" => {
            let geom = cfg.geom()?;
            let (pts, c) = build(cfg)?;
            std::fs::write(out.join("subnet.svg"), render_svg(&pts, &c.subnet, &geom, &c.range))?;
            write_with(&out.join("regions.csv"), |w| {
                write_region_raster(&geom, TileId::new(0, 0), 100, w)
            })
        }
        _ => unreachable!("subcommand names are fixed"),
    }
}

/// Two open sites of the largest cluster, chosen by `seed`.
fn pick_pair(l: &crate::lattice::LatticeWindow, seed: u64) -> Result<(TileId, TileId)> {
    let c = label_clusters(l);
    let Some(big) = (0..c.sizes.len()).max_by_key(|&i| (c.sizes[i], std::cmp::Reverse(i))) else {
        return Err(SensError::Abort("the coupled lattice has no open site".into()));
    };
    let sites: Vec<usize> = (0..l.len()).filter(|&k| c.labels[k] == Some(big as u32)).collect();
    let mut rng = rng_from_seed(substream_seed(seed, 7));
    let a = sites[rng.random_range(0..sites.len())];
    let b = sites[rng.random_range(0..sites.len())];
    Ok((l.site(a), l.site(b)))
}

/// Runs the command line; returns the process exit code (0 ok, 1 parameter or
/// IO error, 2 experiment abort).
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let (name, args) = cli.command.name_and_args();
    let result = load_config(args).and_then(|cfg| {
        if name != "percolation" {
            cfg.require_model()?;
        }
        run(name, &cfg)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sensnet {name}: {e}");
            match e {
                SensError::Abort(_) => 2,
                _ => 1,
            }
        }
    }
}
