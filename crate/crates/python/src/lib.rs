//! Python bindings for `sensnet`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sensnet::experiments::{cli_main, power_stretch as core_power_stretch, sample_field, ExperimentConfig};
use sensnet::geom::{sample_poisson as core_sample_poisson, PointSet as CorePointSet, Window};
use sensnet::lattice::{
    chemical_distance, couple_lattice, estimate_good_prob as core_estimate, label_clusters,
    sample_site_lattice as core_sample_lattice, LatticeWindow, TileModel,
};
use sensnet::routing::{expand_route, route as core_route, Outcome, RouteTrace};
use sensnet::subnet::{construct_subnet, Construction};
use sensnet::{ModelKind, SensError, TileGeom, TileId};

fn to_py(e: SensError) -> PyErr {
    match e {
        SensError::Parameter(_) | SensError::Classification(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn geom_for(model: &str, a: f64, r0: f64) -> PyResult<TileGeom> {
    match ModelKind::parse(model).map_err(to_py)? {
        ModelKind::Udg => TileGeom::udg(r0),
        ModelKind::Nn => TileGeom::nn(a),
    }
    .map_err(to_py)
}

/// Poisson points in a window.
#[pyclass(module = "pysensnet")]
struct PointSet {
    inner: CorePointSet,
}

#[pymethods]
impl PointSet {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Coordinates as a list of `(x, y)` tuples in id order.
    fn coords(&self) -> Vec<(f64, f64)> {
        self.inner.points.iter().map(|p| (p.x, p.y)).collect()
    }

    #[getter]
    fn density(&self) -> f64 {
        self.inner.density
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
}

#[pyfunction]
#[pyo3(signature = (x_min, y_min, x_max, y_max, density, seed, margin = 0.0))]
fn sample_poisson(x_min: f64, y_min: f64, x_max: f64, y_max: f64, density: f64, seed: u64, margin: f64) -> PyResult<PointSet> {
    let w = Window::new(x_min, y_min, x_max, y_max, margin).map_err(to_py)?;
    Ok(PointSet {
        inner: core_sample_poisson(&w, density, seed).map_err(to_py)?,
    })
}

/// Open/closed site lattice.
#[pyclass(module = "pysensnet")]
struct Lattice {
    inner: LatticeWindow,
}

fn trace_dict<'py>(py: Python<'py>, t: &RouteTrace) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let d = pyo3::types::PyDict::new(py);
    d.set_item("src", (t.src.i, t.src.j))?;
    d.set_item("dst", (t.dst.i, t.dst.j))?;
    d.set_item("delivered", t.outcome == Outcome::Delivered)?;
    d.set_item("lattice_hops", t.lattice_hops.iter().map(|h| (h.i, h.j)).collect::<Vec<_>>())?;
    d.set_item("node_hops", t.node_hops.clone())?;
    d.set_item("probes", t.probes)?;
    d.set_item("bfs_invocations", t.bfs_invocations)?;
    Ok(d)
}

#[pymethods]
impl Lattice {
    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    fn is_open(&self, i: i64, j: i64) -> bool {
        self.inner.is_open(TileId::new(i, j))
    }

    fn open_fraction(&self) -> f64 {
        self.inner.open_fraction()
    }

    /// `(cluster sizes, largest, theta, spanning)`.
    fn clusters(&self) -> (Vec<usize>, usize, f64, bool) {
        let c = label_clusters(&self.inner);
        (c.sizes, c.largest, c.theta, c.spanning)
    }

    /// Hop distance inside the open cluster (None if disconnected) and L1 distance.
    fn chemical_distance(&self, x: (i64, i64), y: (i64, i64)) -> PyResult<(Option<u64>, u64)> {
        let d = chemical_distance(&self.inner, TileId::new(x.0, x.1), TileId::new(y.0, y.1)).map_err(to_py)?;
        Ok((d.hops, d.l1))
    }

    fn route<'py>(&self, py: Python<'py>, src: (i64, i64), dst: (i64, i64)) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let t = core_route(&self.inner, TileId::new(src.0, src.1), TileId::new(dst.0, dst.1)).map_err(to_py)?;
        trace_dict(py, &t)
    }
}

#[pyfunction]
fn sample_site_lattice(n: usize, p: f64, seed: u64) -> PyResult<Lattice> {
    Ok(Lattice {
        inner: core_sample_lattice(n, p, seed).map_err(to_py)?,
    })
}

/// A constructed subnet with its tile statuses.
#[pyclass(module = "pysensnet")]
struct Subnet {
    construction: Construction,
    lattice: LatticeWindow,
}

#[pymethods]
impl Subnet {
    fn __len__(&self) -> usize {
        self.construction.subnet.len()
    }

    fn edges(&self) -> Vec<(u32, u32)> {
        self.construction.subnet.edges()
    }

    /// `(id, x, y, role, tile_i, tile_j)` per node.
    fn nodes(&self) -> Vec<(u32, f64, f64, &'static str, i64, i64)> {
        self.construction
            .subnet
            .nodes
            .iter()
            .map(|n| (n.id, n.position.x, n.position.y, n.role.as_str(), n.tile.i, n.tile.j))
            .collect()
    }

    fn max_degree(&self) -> usize {
        self.construction.subnet.max_degree()
    }

    fn good_tiles(&self) -> usize {
        self.construction.good_count()
    }

    fn anomalies(&self) -> usize {
        self.construction.anomalies.len()
    }

    fn lattice(&self) -> Lattice {
        Lattice {
            inner: self.lattice.clone(),
        }
    }

    /// Routes on the coupled lattice and expands the hops into subnet nodes.
    fn route<'py>(&self, py: Python<'py>, src: (i64, i64), dst: (i64, i64)) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let mut t = core_route(&self.lattice, TileId::new(src.0, src.1), TileId::new(dst.0, dst.1)).map_err(to_py)?;
        if t.outcome == Outcome::Delivered {
            t.node_hops = expand_route(&t.lattice_hops, &self.construction.subnet).map_err(to_py)?;
        }
        trace_dict(py, &t)
    }
}

#[pyfunction]
#[pyo3(signature = (model, density, window, seed, k = 188, a = 0.893, r0 = 0.25))]
fn build_subnet(model: &str, density: f64, window: usize, seed: u64, k: usize, a: f64, r0: f64) -> PyResult<Subnet> {
    let geom = geom_for(model, a, r0)?;
    let cfg = ExperimentConfig {
        model: Some(geom.kind),
        window,
        k,
        ..ExperimentConfig::default()
    };
    let (pts, base) = sample_field(&cfg, &geom, density, seed).map_err(to_py)?;
    let construction = construct_subnet(&pts, &base, &geom, cfg.k_for(geom.kind)).map_err(to_py)?;
    let lattice = couple_lattice(&construction.statuses).map_err(to_py)?;
    Ok(Subnet { construction, lattice })
}

/// Good-tile probability: `(p_hat, ci_lo, ci_hi)`.
#[pyfunction]
#[pyo3(signature = (model, density, trials, seed, k = None, a = 0.893, r0 = 0.25))]
fn estimate_good_prob(model: &str, density: f64, trials: u64, seed: u64, k: Option<usize>, a: f64, r0: f64) -> PyResult<(f64, f64, f64)> {
    let geom = geom_for(model, a, r0)?;
    let g = core_estimate(&geom, TileModel { density, k }, trials, seed).map_err(to_py)?;
    Ok((g.p_hat, g.ci.0, g.ci.1))
}

#[pyfunction]
fn power_stretch(delta: f64, beta: f64) -> PyResult<f64> {
    core_power_stretch(delta, beta).map_err(to_py)
}

/// Runs the `sensnet` command line with `args` (without the program name).
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    cli_main(std::iter::once("sensnet".to_string()).chain(args))
}

#[pymodule]
fn pysensnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PointSet>()?;
    m.add_class::<Lattice>()?;
    m.add_class::<Subnet>()?;
    m.add_function(wrap_pyfunction!(sample_poisson, m)?)?;
    m.add_function(wrap_pyfunction!(sample_site_lattice, m)?)?;
    m.add_function(wrap_pyfunction!(build_subnet, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_good_prob, m)?)?;
    m.add_function(wrap_pyfunction!(power_stretch, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
