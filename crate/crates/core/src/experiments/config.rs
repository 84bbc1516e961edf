use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{param, Result, SensError};
use crate::geom::{sample_poisson, PointSet};
use crate::graph::{build_knn, build_udg, AdjGraph};
use crate::subnet::tile_window;
use crate::tiling::{ModelKind, TileGeom, TileId, DEFAULT_NN_A, DEFAULT_R0};

/// Every key accepted in config files and on the command line.
pub const KEYS: &[&str] = &[
    "model", "lambda", "lambdas", "k", "a", "r0", "window", "seed", "trials", "pairs", "bins", "ell", "beta",
    "bracket", "tol", "n", "p", "src", "dst", "min_component", "distributed", "out",
];

/// Flat experiment configuration. Field names are the config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: Option<ModelKind>,
    /// Poisson density λ.
    pub lambda: f64,
    /// Densities compared by the coverage study; empty means just `lambda`.
    pub lambdas: Vec<f64>,
    pub k: usize,
    pub a: f64,
    pub r0: f64,
    /// Analysis window side, in tiles.
    pub window: usize,
    pub seed: u64,
    pub trials: u64,
    /// Sampled representative pairs per distance bin.
    pub pairs: usize,
    /// Euclidean distance bin edges for the stretch study.
    pub bins: Vec<f64>,
    /// Coverage square sides, in tiles.
    pub ell: Vec<f64>,
    pub beta: Vec<f64>,
    pub bracket: Option<(f64, f64)>,
    pub tol: f64,
    /// Side of iid site lattices.
    pub n: usize,
    /// Site probability of iid lattices.
    pub p: f64,
    pub src: Option<TileId>,
    pub dst: Option<TileId>,
    /// Smallest largest-component size accepted by the stretch study.
    pub min_component: usize,
    pub distributed: bool,
    /// Output directory.
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: None,
            lambda: 1.0,
            lambdas: Vec::new(),
            k: 188,
            a: DEFAULT_NN_A,
            r0: DEFAULT_R0,
            window: 20,
            seed: 1,
            trials: 1000,
            pairs: 200,
            bins: vec![10.0, 20.0, 40.0, 80.0],
            ell: vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            beta: vec![2.0, 3.0, 4.0, 5.0],
            bracket: None,
            tol: 0.01,
            n: 256,
            p: 0.65,
            src: None,
            dst: None,
            min_component: 50,
            distributed: false,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| SensError::Parameter(format!("{key}: cannot parse {v:?}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_tile(key: &str, v: &str) -> Result<TileId> {
    let (i, j) = v
        .split_once(',')
        .ok_or_else(|| SensError::Parameter(format!("{key}: expected i,j, got {v:?}")))?;
    Ok(TileId::new(parse_num(key, i)?, parse_num(key, j)?))
}

impl ExperimentConfig {
    /// Sets one key; unknown keys are rejected by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model" => self.model = Some(ModelKind::parse(v)?),
            "lambda" => self.lambda = parse_num(key, v)?,
            "lambdas" => self.lambdas = parse_list(key, v)?,
            "k" => self.k = parse_num(key, v)?,
            "a" => self.a = parse_num(key, v)?,
            "r0" => self.r0 = parse_num(key, v)?,
            "window" => self.window = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "trials" => self.trials = parse_num(key, v)?,
            "pairs" => self.pairs = parse_num(key, v)?,
            "bins" => self.bins = parse_list(key, v)?,
            "ell" => self.ell = parse_list(key, v)?,
            "beta" => self.beta = parse_list(key, v)?,
            "bracket" => {
                let (lo, hi) = v
                    .split_once("..")
                    .ok_or_else(|| SensError::Parameter(format!("bracket: expected lo..hi, got {v:?}")))?;
                self.bracket = Some((parse_num(key, lo)?, parse_num(key, hi)?));
            }
            "tol" => self.tol = parse_num(key, v)?,
            "n" => self.n = parse_num(key, v)?,
            "p" => self.p = parse_num(key, v)?,
            "src" => self.src = Some(parse_tile(key, v)?),
            "dst" => self.dst = Some(parse_tile(key, v)?),
            "min_component" => self.min_component = parse_num(key, v)?,
            "distributed" => self.distributed = parse_num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            _ => return param(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SensError::Parameter(format!("line {}: expected key=value", no + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// Applies `key=value`, `--key value` and `--key=value` overrides.
    pub fn apply_args<S: AsRef<str>>(&mut self, args: &[S]) -> Result<()> {
        let mut it = args.iter().map(AsRef::as_ref);
        while let Some(a) = it.next() {
            let body = a.strip_prefix("--").unwrap_or(a);
            if let Some((k, v)) = body.split_once('=') {
                self.set(k, v)?;
            } else if a.starts_with("--") {
                if !KEYS.contains(&body) {
                    return param(format!("unknown key `{body}`"));
                }
                let v = it
                    .next()
                    .ok_or_else(|| SensError::Parameter(format!("missing value for `{body}`")))?;
                self.set(body, v)?;
            } else {
                return param(format!("expected key=value, got {a:?}"));
            }
        }
        Ok(())
    }

    pub fn require_model(&self) -> Result<ModelKind> {
        self.model
            .ok_or_else(|| SensError::Parameter("missing required key `model`".into()))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("a", self.a),
            ("r0", self.r0),
            ("tol", self.tol),
        ];
        for (k, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return param(format!("{k} must be positive, got {v}"));
            }
        }
        for (k, v) in [("k", self.k), ("window", self.window), ("pairs", self.pairs), ("n", self.n)] {
            if v == 0 {
                return param(format!("{k} must be positive"));
            }
        }
        if self.trials == 0 {
            return param("trials must be positive");
        }
        if !(0.0..=1.0).contains(&self.p) {
            return param(format!("p must lie in [0, 1], got {}", self.p));
        }
        if self.lambdas.iter().any(|&l| !(l > 0.0)) {
            return param("lambdas must be positive");
        }
        if self.ell.iter().any(|&l| l < 0.0) {
            return param("ell values must be non-negative");
        }
        if self.bins.len() < 2 || self.bins.windows(2).any(|w| !(w[0] < w[1])) || self.bins[0] < 0.0 {
            return param("bins must be at least two ascending non-negative edges");
        }
        Ok(())
    }

    /// Tile geometry for the configured model.
    pub fn geom(&self) -> Result<TileGeom> {
        match self.require_model()? {
            ModelKind::Udg => TileGeom::udg(self.r0),
            ModelKind::Nn => TileGeom::nn(self.a),
        }
    }

    pub fn k_for(&self, kind: ModelKind) -> Option<usize> {
        (kind == ModelKind::Nn).then_some(self.k)
    }

    /// Key/value view used as report provenance.
    pub fn to_map(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(m)) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        }
    }
}

/// A sampled field over `window` tiles (plus a one-tile margin) and its base graph.
pub fn sample_field(cfg: &ExperimentConfig, geom: &TileGeom, density: f64, seed: u64) -> Result<(PointSet, AdjGraph)> {
    let w = tile_window(geom, cfg.window, 1.0)?;
    let pts = sample_poisson(&w, density, seed)?;
    let base = match geom.kind {
        ModelKind::Udg => build_udg(&pts),
        ModelKind::Nn => build_knn(&pts, cfg.k)?,
    };
    Ok((pts, base))
}
