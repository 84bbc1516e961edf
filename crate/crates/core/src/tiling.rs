//! Square tiling of the plane and the region geometry inside a tile.
//!
//! Tile `(i, j)` is centred at `(i·side, j·side)` and maps to the lattice site
//! `(i, j)`. Two layouts are supported:
//!
//! * **UDG** (side 4/3): a representative disk `C0` of radius `r0` and four
//!   relay regions `E_d = { p : r0 < |p−c| ≤ 1−r0, |p−m_d| ≤ 1/2 }`, where
//!   `m_d` is the midpoint of the edge shared with the neighbour in direction
//!   `d`. Any `C0` point is within 1 of any `E_d` point, and facing relay
//!   regions of neighbouring tiles are within 1 of each other.
//! * **NN** (side 10a): five disks of radius `a` (centre, and offset by `4a`
//!   in each direction) plus four lenses. The lens `E_d` holds the points
//!   contained in every disk centred at some `y ∈ C0 ∪ C_d` whose radius is
//!   the distance from `y` to the boundary of the two-tile rectangle `t ∪ t_d`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result, SensError};
use crate::geom::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileId {
    pub i: i64,
    pub j: i64,
}

impl TileId {
    pub const fn new(i: i64, j: i64) -> Self {
        Self { i, j }
    }

    pub fn neighbor(&self, d: Direction) -> TileId {
        let (di, dj) = d.offset();
        TileId::new(self.i + di, self.j + dj)
    }

    /// L1 lattice distance.
    pub fn l1(&self, other: &TileId) -> u64 {
        self.i.abs_diff(other.i) + self.j.abs_diff(other.j)
    }

    /// Direction of an axis-adjacent tile, if `other` is one.
    pub fn direction_to(&self, other: &TileId) -> Option<Direction> {
        Direction::ALL
            .into_iter()
            .find(|d| self.neighbor(*d) == *other)
    }
}

impl fmt::Display for TileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

/// Neighbour directions, counterclockwise from the right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Right,
    Top,
    Left,
    Bottom,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Right, Direction::Top, Direction::Left, Direction::Bottom];

    pub fn offset(self) -> (i64, i64) {
        match self {
            Direction::Right => (1, 0),
            Direction::Top => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Bottom => (0, -1),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Right => Direction::Left,
            Direction::Top => Direction::Bottom,
            Direction::Left => Direction::Right,
            Direction::Bottom => Direction::Top,
        }
    }

    /// Relay (lens) region facing this direction.
    pub fn e_label(self) -> RegionLabel {
        match self {
            Direction::Right => RegionLabel::ER,
            Direction::Top => RegionLabel::ET,
            Direction::Left => RegionLabel::EL,
            Direction::Bottom => RegionLabel::EB,
        }
    }

    /// Outer NN disk in this direction.
    pub fn c_label(self) -> RegionLabel {
        match self {
            Direction::Right => RegionLabel::CR,
            Direction::Top => RegionLabel::CT,
            Direction::Left => RegionLabel::CL,
            Direction::Bottom => RegionLabel::CB,
        }
    }

    /// Rotates a vector so that this direction becomes +x.
    fn to_canonical(self, dx: f64, dy: f64) -> (f64, f64) {
        match self {
            Direction::Right => (dx, dy),
            Direction::Top => (dy, -dx),
            Direction::Left => (-dx, -dy),
            Direction::Bottom => (-dy, dx),
        }
    }

    pub fn parse(s: &str) -> Result<Direction> {
        match s.to_ascii_lowercase().as_str() {
            "r" | "right" => Ok(Direction::Right),
            "t" | "top" | "up" => Ok(Direction::Top),
            "l" | "left" => Ok(Direction::Left),
            "b" | "bottom" | "down" => Ok(Direction::Bottom),
            other => param(format!("invalid direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "UDG")]
    Udg,
    #[serde(rename = "NN")]
    Nn,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<ModelKind> {
        match s.to_ascii_uppercase().as_str() {
            "UDG" => Ok(ModelKind::Udg),
            "NN" | "KNN" => Ok(ModelKind::Nn),
            _ => param(format!("unknown model {s:?} (expected UDG or NN)")),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Udg => "UDG",
            ModelKind::Nn => "NN",
        }
    }

    /// Regions that must all be occupied for a tile to be good.
    pub fn required_regions(self) -> &'static [RegionLabel] {
        use RegionLabel::*;
        match self {
            ModelKind::Udg => &[C0, ER, ET, EL, EB],
            ModelKind::Nn => &[C0, ER, ET, EL, EB, CR, CT, CL, CB],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionLabel {
    C0,
    EL,
    ER,
    ET,
    EB,
    CL,
    CR,
    CT,
    CB,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 9] = [
        RegionLabel::C0,
        RegionLabel::EL,
        RegionLabel::ER,
        RegionLabel::ET,
        RegionLabel::EB,
        RegionLabel::CL,
        RegionLabel::CR,
        RegionLabel::CT,
        RegionLabel::CB,
    ];

    fn bit(self) -> u16 {
        1 << (self as u16)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::C0 => "C0",
            RegionLabel::EL => "EL",
            RegionLabel::ER => "ER",
            RegionLabel::ET => "ET",
            RegionLabel::EB => "EB",
            RegionLabel::CL => "CL",
            RegionLabel::CR => "CR",
            RegionLabel::CT => "CT",
            RegionLabel::CB => "CB",
        }
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Set of region labels; regions may overlap, so classification yields a set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionSet(u16);

impl RegionSet {
    pub const EMPTY: RegionSet = RegionSet(0);

    pub fn insert(&mut self, l: RegionLabel) {
        self.0 |= l.bit();
    }

    pub fn contains(&self, l: RegionLabel) -> bool {
        self.0 & l.bit() != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: RegionSet) -> RegionSet {
        RegionSet(self.0 | other.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = RegionLabel> + '_ {
        RegionLabel::ALL.into_iter().filter(|l| self.contains(*l))
    }
}

impl FromIterator<RegionLabel> for RegionSet {
    fn from_iter<I: IntoIterator<Item = RegionLabel>>(iter: I) -> Self {
        let mut s = RegionSet::EMPTY;
        for l in iter {
            s.insert(l);
        }
        s
    }
}

impl fmt::Display for RegionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for l in self.iter() {
            if !first {
                f.write_str("|")?;
            }
            first = false;
            f.write_str(l.as_str())?;
        }
        Ok(())
    }
}

/// Axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

/// Distance from `y` to the nearest side of `rect`: the radius of the largest
/// disk centred at `y` that stays inside the rectangle. Zero outside.
pub fn inscribed_radius(y: &Point, rect: &Rect) -> f64 {
    if !rect.contains(y) {
        log::warn!("inscribed_radius: {y:?} lies outside {rect:?}");
        return 0.0;
    }
    (y.x - rect.x_min)
        .min(rect.x_max - y.x)
        .min(y.y - rect.y_min)
        .min(rect.y_max - y.y)
}

/// Default number of boundary samples per disk for the NN lens test.
pub const DEFAULT_LENS_SAMPLES: usize = 720;

/// Side length of UDG tiles.
pub const UDG_SIDE: f64 = 4.0 / 3.0;

/// Default UDG representative-disk radius.
pub const DEFAULT_R0: f64 = 0.25;

/// Default NN disk radius `a`; the tile side is `10a`.
pub const DEFAULT_NN_A: f64 = 0.893;

#[derive(Debug, Clone, Serialize)]
pub struct TileGeom {
    pub kind: ModelKind,
    pub side: f64,
    /// UDG representative-disk radius.
    pub r0: f64,
    /// NN disk radius.
    pub a: f64,
    pub lens_samples: usize,
    pub lens_eps: f64,
    /// Canonical-frame lens probes `(y.x, y.y, (rmax(y) − eps)²)`.
    #[serde(skip)]
    lens_table: Arc<Vec<[f64; 3]>>,
}

impl PartialEq for TileGeom {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.side == other.side
            && self.r0 == other.r0
            && self.a == other.a
            && self.lens_samples == other.lens_samples
            && self.lens_eps == other.lens_eps
    }
}

impl TileGeom {
    pub fn udg(r0: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0 <= 1.0 / 3.0) {
            return param(format!("UDG r0 must satisfy 0 < r0 <= 1/3, got {r0}"));
        }
        Ok(Self {
            kind: ModelKind::Udg,
            side: UDG_SIDE,
            r0,
            a: 0.0,
            lens_samples: 0,
            lens_eps: 0.0,
            lens_table: Arc::new(Vec::new()),
        })
    }

    pub fn nn(a: f64) -> Result<Self> {
        Self::nn_with(a, 10.0 * a, DEFAULT_LENS_SAMPLES)
    }

    pub fn nn_with(a: f64, side: f64, lens_samples: usize) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return param(format!("NN disk radius a must be > 0, got {a}"));
        }
        if !(side >= 10.0 * a * (1.0 - 1e-12)) {
            return param(format!("NN tile side must be >= 10a = {}, got {side}", 10.0 * a));
        }
        if lens_samples < 8 {
            return param(format!("lens_samples must be >= 8, got {lens_samples}"));
        }
        let lens_eps = 1e-9 * a;
        let lens_table = Arc::new(build_lens_table(a, side, lens_samples, lens_eps));
        Ok(Self {
            kind: ModelKind::Nn,
            side,
            r0: 0.0,
            a,
            lens_samples,
            lens_eps,
            lens_table,
        })
    }

    /// Tile containing `p` under the half-open convention.
    pub fn tile_of(&self, p: &Point) -> TileId {
        tile_of(p, self)
    }

    pub fn center(&self, t: TileId) -> Point {
        Point::new(t.i as f64 * self.side, t.j as f64 * self.side)
    }

    pub fn tile_rect(&self, t: TileId) -> Rect {
        let c = self.center(t);
        let h = self.side / 2.0;
        Rect {
            x_min: c.x - h,
            y_min: c.y - h,
            x_max: c.x + h,
            y_max: c.y + h,
        }
    }

    /// The two-tile rectangle `t ∪ t_d`.
    pub fn pair_rect(&self, t: TileId, d: Direction) -> Rect {
        let a = self.tile_rect(t);
        let b = self.tile_rect(t.neighbor(d));
        Rect {
            x_min: a.x_min.min(b.x_min),
            y_min: a.y_min.min(b.y_min),
            x_max: a.x_max.max(b.x_max),
            y_max: a.y_max.max(b.y_max),
        }
    }

    /// Closed containment with a relative slack of 1e-12 tile sides.
    pub fn in_tile_closed(&self, p: &Point, t: TileId) -> bool {
        let c = self.center(t);
        let h = self.side / 2.0 * (1.0 + 1e-12);
        (p.x - c.x).abs() <= h && (p.y - c.y).abs() <= h
    }

    /// Centre of the NN disk for `label` (C0, CL, CR, CT, CB).
    pub fn disk_center(&self, t: TileId, label: RegionLabel) -> Option<Point> {
        let c = self.center(t);
        let o = 4.0 * self.a;
        match label {
            RegionLabel::C0 => Some(c),
            RegionLabel::CR => Some(c.offset(o, 0.0)),
            RegionLabel::CT => Some(c.offset(0.0, o)),
            RegionLabel::CL => Some(c.offset(-o, 0.0)),
            RegionLabel::CB => Some(c.offset(0.0, -o)),
            _ => None,
        }
    }

    /// Midpoint of the edge shared with the neighbour in direction `d`.
    pub fn edge_midpoint(&self, t: TileId, d: Direction) -> Point {
        let (di, dj) = d.offset();
        let h = self.side / 2.0;
        self.center(t).offset(di as f64 * h, dj as f64 * h)
    }

    pub fn region_of(&self, p: &Point, t: TileId) -> Result<RegionSet> {
        match self.kind {
            ModelKind::Udg => udg_region_of(p, t, self),
            ModelKind::Nn => nn_region_of(p, t, self),
        }
    }
}

/// Probes on the boundaries of `C0` (centre origin) and `C_r` (centre `(4a, 0)`)
/// for the right-hand lens in the canonical frame, each with its squared
/// admissible radius. Interleaved in bit-reversed angle order.
fn build_lens_table(a: f64, side: f64, samples: usize, eps: f64) -> Vec<[f64; 3]> {
    let h = side / 2.0;
    let rect = Rect {
        x_min: -h,
        y_min: -h,
        x_max: 3.0 * h,
        y_max: h,
    };
    let mut order: Vec<usize> = (0..samples).collect();
    order.sort_by_key(|&m| (m as u32).reverse_bits());
    let mut table = Vec::with_capacity(2 * samples);
    for m in order {
        let theta = 2.0 * std::f64::consts::PI * m as f64 / samples as f64;
        let (s, c) = theta.sin_cos();
        for cx in [0.0, 4.0 * a] {
            let y = Point::new(cx + a * c, a * s);
            let r = inscribed_radius(&y, &rect) - eps;
            table.push([y.x, y.y, if r > 0.0 { r * r } else { -1.0 }]);
        }
    }
    table
}

pub fn tile_of(p: &Point, geom: &TileGeom) -> TileId {
    let s = geom.side;
    TileId::new(
        ((p.x + s / 2.0) / s).floor() as i64,
        ((p.y + s / 2.0) / s).floor() as i64,
    )
}

fn require_in_tile(p: &Point, t: TileId, geom: &TileGeom) -> Result<()> {
    if geom.in_tile_closed(p, t) {
        Ok(())
    } else {
        param(format!("point ({}, {}) is not inside tile {t}", p.x, p.y))
    }
}

/// UDG region labels of `p` within tile `t`.
pub fn udg_region_of(p: &Point, t: TileId, geom: &TileGeom) -> Result<RegionSet> {
    if geom.kind != ModelKind::Udg {
        return param("udg_region_of called with a non-UDG geometry");
    }
    require_in_tile(p, t, geom)?;
    Ok(udg_labels(p, t, geom))
}

pub(crate) fn udg_labels(p: &Point, t: TileId, geom: &TileGeom) -> RegionSet {
    let mut out = RegionSet::EMPTY;
    let dc = p.dist(&geom.center(t));
    if dc <= geom.r0 {
        out.insert(RegionLabel::C0);
    } else if dc <= 1.0 - geom.r0 {
        for d in Direction::ALL {
            if p.dist(&geom.edge_midpoint(t, d)) <= 0.5 {
                out.insert(d.e_label());
            }
        }
    }
    out
}

/// NN region labels of `p` within tile `t` (the five disks and the four lenses).
pub fn nn_region_of(p: &Point, t: TileId, geom: &TileGeom) -> Result<RegionSet> {
    if geom.kind != ModelKind::Nn {
        return param("nn_region_of called with a non-NN geometry");
    }
    require_in_tile(p, t, geom)?;
    Ok(nn_labels(p, t, geom))
}

pub(crate) fn nn_labels(p: &Point, t: TileId, geom: &TileGeom) -> RegionSet {
    let mut out = RegionSet::EMPTY;
    for l in [
        RegionLabel::C0,
        RegionLabel::CL,
        RegionLabel::CR,
        RegionLabel::CT,
        RegionLabel::CB,
    ] {
        let c = geom.disk_center(t, l).expect("disk label");
        if p.dist(&c) <= geom.a {
            out.insert(l);
        }
    }
    for d in Direction::ALL {
        if lens_contains(p, t, d, geom) {
            out.insert(d.e_label());
        }
    }
    out
}

/// Whether `p` lies in the NN lens `E_d(t)`.
///
/// For fixed `p`, `y ↦ |p − y| − rmax(y)` is convex (`rmax` is a minimum of
/// affine functions, hence concave), so its maximum over a disk is reached on
/// the boundary circle. The test evaluates `lens_samples` equally spaced
/// boundary angles of `C0` and `C_d` and requires `|p − y| ≤ rmax(y) − eps`.
pub fn nn_lens_contains(p: &Point, t: TileId, d: Direction, geom: &TileGeom) -> Result<bool> {
    if geom.kind != ModelKind::Nn {
        return param("nn_lens_contains called with a non-NN geometry");
    }
    if !geom.in_tile_closed(p, t) && !geom.in_tile_closed(p, t.neighbor(d)) {
        return param(format!(
            "point ({}, {}) is in neither tile {t} nor its {d:?} neighbour",
            p.x, p.y
        ));
    }
    Ok(lens_contains(p, t, d, geom))
}

#[inline]
pub(crate) fn lens_contains(p: &Point, t: TileId, d: Direction, geom: &TileGeom) -> bool {
    let c = geom.center(t);
    let (px, py) = d.to_canonical(p.x - c.x, p.y - c.y);
    geom.lens_table.iter().all(|&[yx, yy, r2]| {
        let dx = px - yx;
        let dy = py - yy;
        dx * dx + dy * dy <= r2
    })
}

/// Writes a `resolution × resolution` raster of region labels over tile `t`
/// as CSV (`row,col,x,y,labels`), labels joined by `|`.
pub fn write_region_raster<W: Write>(
    geom: &TileGeom,
    t: TileId,
    resolution: usize,
    mut w: W,
) -> Result<()> {
    if resolution == 0 {
        return param("raster resolution must be >= 1");
    }
    let r = geom.tile_rect(t);
    let step = geom.side / resolution as f64;
    writeln!(w, "row,col,x,y,labels")?;
    for row in 0..resolution {
        for col in 0..resolution {
            let p = Point::new(
                r.x_min + (col as f64 + 0.5) * step,
                r.y_min + (row as f64 + 0.5) * step,
            );
            let labels = geom.region_of(&p, t).map_err(|e| SensError::Integrity(e.to_string()))?;
            writeln!(
                w,
                "{row},{col},{},{},{labels}",
                crate::experiments::fmt_f64(p.x),
                crate::experiments::fmt_f64(p.y)
            )?;
        }
    }
    Ok(())
}
