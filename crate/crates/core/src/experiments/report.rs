use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::fmt_f64;
use crate::error::Result;
use crate::geom::PointSet;
use crate::subnet::{Role, SubnetGraph, TileRange};
use crate::tiling::{TileGeom, TileId};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, serde_json::Value>,
}

impl RunInfo {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: cfg.seed,
            config: cfg.to_map(),
        }
    }
}

/// A report with its schema version and provenance, serialised flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub provenance: RunInfo,
    #[serde(flatten)]
    pub report: T,
}

impl<T> Envelope<T> {
    pub fn new(provenance: RunInfo, report: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            provenance,
            report,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

pub const NODES_CSV_HEADER: &str = "id,x,y,role,tile_i,tile_j,regions";
pub const EDGES_CSV_HEADER: &str = "u,v,length";

pub fn write_subnet_nodes<W: Write>(s: &SubnetGraph, mut out: W) -> Result<()> {
    writeln!(out, "{NODES_CSV_HEADER}")?;
    for n in &s.nodes {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            n.id,
            fmt_f64(n.position.x),
            fmt_f64(n.position.y),
            n.role.as_str(),
            n.tile.i,
            n.tile.j,
            n.regions
        )?;
    }
    Ok(())
}

pub fn write_subnet_edges<W: Write>(s: &SubnetGraph, mut out: W) -> Result<()> {
    writeln!(out, "{EDGES_CSV_HEADER}")?;
    for (u, v) in s.edges() {
        let (a, b) = (s.node(u).expect("member"), s.node(v).expect("member"));
        writeln!(out, "{u},{v},{}", fmt_f64(a.position.dist(&b.position)))?;
    }
    Ok(())
}

pub fn write_points<W: Write>(p: &PointSet, mut out: W) -> Result<()> {
    writeln!(out, "id,x,y")?;
    for (i, q) in p.points.iter().enumerate() {
        writeln!(out, "{i},{},{}", fmt_f64(q.x), fmt_f64(q.y))?;
    }
    Ok(())
}

fn role_color(r: Role) -> &'static str {
    match r {
        Role::Representative => "#d62728",
        Role::Relay => "#1f77b4",
        Role::Both => "#9467bd",
    }
}

/// SVG of the field: tile grid lines, all points, subnet edges (one polyline
/// each) and subnet nodes coloured by role.
pub fn render_svg(points: &PointSet, subnet: &SubnetGraph, geom: &TileGeom, tiles: &TileRange) -> String {
    let w = points.window;
    let scale = 600.0 / w.width().max(w.height());
    let px = |x: f64| (x - w.x_min) * scale;
    let py = |y: f64| (w.y_max - y) * scale;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.3}" height="{:.3}" viewBox="0 0 {:.3} {:.3}">"#,
        w.width() * scale,
        w.height() * scale,
        w.width() * scale,
        w.height() * scale
    );
    let _ = writeln!(s, r##"<g stroke="#bbbbbb" stroke-width="0.5">"##);
    if !tiles.is_empty() {
        let h = geom.side / 2.0;
        let lo = geom.center(TileId::new(tiles.i_min, tiles.j_min));
        let hi = geom.center(TileId::new(tiles.i_max, tiles.j_max));
        let (x0, x1, y0, y1) = (lo.x - h, hi.x + h, lo.y - h, hi.y + h);
        for i in tiles.i_min..=tiles.i_max + 1 {
            let x = x0 + (i - tiles.i_min) as f64 * geom.side;
            let _ = writeln!(s, r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#, px(x), py(y0), px(x), py(y1));
        }
        for j in tiles.j_min..=tiles.j_max + 1 {
            let y = y0 + (j - tiles.j_min) as f64 * geom.side;
            let _ = writeln!(s, r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#, px(x0), py(y), px(x1), py(y));
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g fill="#999999">"##);
    for p in &points.points {
        let _ = writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="0.8"/>"#, px(p.x), py(p.y));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g stroke="#2ca02c" stroke-width="1" fill="none">"##);
    for (u, v) in subnet.edges() {
        let (a, b) = (subnet.node(u).expect("member").position, subnet.node(v).expect("member").position);
        let _ = writeln!(s, r#"<polyline points="{:.3},{:.3} {:.3},{:.3}"/>"#, px(a.x), py(a.y), px(b.x), py(b.y));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "<g>");
    for n in &subnet.nodes {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.3}" cy="{:.3}" r="2" fill="{}"/>"#,
            px(n.position.x),
            py(n.position.y),
            role_color(n.role)
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}
