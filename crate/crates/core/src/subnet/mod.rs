//! Good-tile classification, leader election and wiring of the sparse
//! sensing subnetworks UDG-SENS and NN-SENS.
//!
//! Every good tile elects a representative in `C0` and one relay per relay
//! region (minimum node id stands in for the election outcome). UDG tiles wire
//! `rep – relay(E_d)` and, across a shared edge, `relay(E_d(t)) – relay(E_opp(t_d))`.
//! NN tiles wire `rep – relay(E_d) – relay(C_d)` and, across the edge,
//! `relay(C_d(t)) – relay(C_opp(t_d))`. A wired pair that is not an edge of the
//! base graph is an anomaly: both tiles involved are demoted to bad.

mod distributed;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result, SensError};
use crate::geom::{Point, PointSet, Window};
use crate::graph::{largest_label, AdjGraph};
use crate::dsu::DisjointSets;
use crate::tiling::{
    lens_contains, nn_labels, udg_labels, Direction, ModelKind, RegionLabel, RegionSet, TileGeom,
    TileId,
};

pub use distributed::{construct_subnet_distributed, AuditStats, DistributedConstruction};

/// Inclusive rectangle of tile indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileRange {
    pub i_min: i64,
    pub i_max: i64,
    pub j_min: i64,
    pub j_max: i64,
}

impl TileRange {
    pub fn is_empty(&self) -> bool {
        self.i_max < self.i_min || self.j_max < self.j_min
    }

    pub fn width(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.i_max - self.i_min + 1) as usize
        }
    }

    pub fn height(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.j_max - self.j_min + 1) as usize
        }
    }

    pub fn contains(&self, t: TileId) -> bool {
        t.i >= self.i_min && t.i <= self.i_max && t.j >= self.j_min && t.j <= self.j_max
    }

    /// Row-major (by `j`, then `i`).
    pub fn tiles(&self) -> Vec<TileId> {
        let mut out = Vec::with_capacity(self.width() * self.height());
        for j in self.j_min..=self.j_max {
            for i in self.i_min..=self.i_max {
                out.push(TileId::new(i, j));
            }
        }
        out
    }

    /// Tiles whose closed square lies inside `window` (unpadded or padded).
    pub fn inside(window: &Window, geom: &TileGeom) -> TileRange {
        let s = geom.side;
        let tol = 1e-9 * s;
        let lo = |v: f64| ((v + s / 2.0 - tol) / s).ceil() as i64;
        let hi = |v: f64| ((v - s / 2.0 + tol) / s).floor() as i64;
        TileRange {
            i_min: lo(window.x_min),
            i_max: hi(window.x_max),
            j_min: lo(window.y_min),
            j_max: hi(window.y_max),
        }
    }
}

/// Analysis window of `tiles × tiles` tiles `(0..tiles)²` with a padding of
/// `margin_tiles` tile sides on every side.
pub fn tile_window(geom: &TileGeom, tiles: usize, margin_tiles: f64) -> Result<Window> {
    if tiles == 0 {
        return param("window must contain at least one tile");
    }
    let s = geom.side;
    Window::new(
        -s / 2.0,
        -s / 2.0,
        (tiles as f64 - 0.5) * s,
        (tiles as f64 - 0.5) * s,
        margin_tiles * s,
    )
}

/// Point ids grouped by containing tile.
#[derive(Debug, Clone)]
pub struct TileBuckets {
    buckets: HashMap<TileId, Vec<u32>>,
    /// Tiles fully covered by the sampled (padded) window.
    pub covered: TileRange,
    /// Tiles fully inside the unpadded window; only these are analysed.
    pub analysis: TileRange,
}

impl TileBuckets {
    pub fn new(points: &PointSet, geom: &TileGeom) -> Self {
        let mut buckets: HashMap<TileId, Vec<u32>> = HashMap::new();
        for (id, p) in points.points.iter().enumerate() {
            buckets.entry(geom.tile_of(p)).or_default().push(id as u32);
        }
        Self {
            buckets,
            covered: TileRange::inside(&points.window.padded(), geom),
            analysis: TileRange::inside(&points.window, geom),
        }
    }

    pub fn ids(&self, t: TileId) -> &[u32] {
        self.buckets.get(&t).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnomalyKind {
    /// Members of an elected region were not pairwise adjacent in the base graph.
    ElectionNotClique { region: RegionLabel },
    /// A wired pair is not an edge of the base graph.
    WiringNotBaseEdge { u: u32, v: u32, other_tile: Option<TileId> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anomaly {
    pub tile: TileId,
    pub kind: AnomalyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileStatus {
    pub tile: TileId,
    pub good: bool,
    pub region_members: BTreeMap<RegionLabel, Vec<u32>>,
    pub point_count: usize,
    pub rep: Option<u32>,
    pub relays: BTreeMap<RegionLabel, u32>,
    pub anomaly: Option<AnomalyKind>,
}

impl TileStatus {
    pub fn members(&self, l: RegionLabel) -> &[u32] {
        self.region_members.get(&l).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Goodness rule shared by both construction routes. `regions` holds the
/// member lists of `kind.required_regions()`, in order. NN tiles also need
/// nine distinct role holders, so every rep-to-rep path has four relays.
pub(crate) fn is_good(kind: ModelKind, k: Option<usize>, point_count: usize, regions: &[&[u32]]) -> bool {
    let regions_ok = regions.iter().all(|m| !m.is_empty());
    match kind {
        ModelKind::Udg => regions_ok,
        ModelKind::Nn => regions_ok && 2 * point_count <= k.unwrap_or(0) && distinct_roles(regions).is_some(),
    }
}

pub(crate) fn require_k(geom: &TileGeom, k: Option<usize>) -> Result<Option<usize>> {
    match (geom.kind, k) {
        (ModelKind::Nn, None) => param("NN model requires k"),
        (ModelKind::Nn, Some(0)) => param("k must be >= 1"),
        _ => Ok(k),
    }
}

/// Classifies tile `t`: region membership and goodness, no elections yet.
pub fn classify_tile(
    t: TileId,
    points: &PointSet,
    buckets: &TileBuckets,
    geom: &TileGeom,
    k: Option<usize>,
) -> Result<TileStatus> {
    let k = require_k(geom, k)?;
    let own = buckets.ids(t);
    let mut region_members: BTreeMap<RegionLabel, Vec<u32>> = BTreeMap::new();
    match geom.kind {
        ModelKind::Udg => {
            for &id in own {
                for l in udg_labels(&points.point(id), t, geom).iter() {
                    region_members.entry(l).or_default().push(id);
                }
            }
        }
        ModelKind::Nn => {
            for d in Direction::ALL {
                if !buckets.covered.contains(t.neighbor(d)) {
                    return Err(SensError::Classification(format!(
                        "tile {t}: neighbour {} is outside the sampled window",
                        t.neighbor(d)
                    )));
                }
            }
            for &id in own {
                for l in nn_labels(&points.point(id), t, geom).iter() {
                    region_members.entry(l).or_default().push(id);
                }
            }
            for d in Direction::ALL {
                for &id in buckets.ids(t.neighbor(d)) {
                    if lens_contains(&points.point(id), t, d, geom) {
                        region_members.entry(d.e_label()).or_default().push(id);
                    }
                }
            }
            for list in region_members.values_mut() {
                list.sort_unstable();
            }
        }
    }
    let regions: Vec<&[u32]> = geom
        .kind
        .required_regions()
        .iter()
        .map(|l| region_members.get(l).map(Vec::as_slice).unwrap_or(&[]))
        .collect();
    let good = is_good(geom.kind, k, own.len(), &regions);
    Ok(TileStatus {
        tile: t,
        good,
        region_members,
        point_count: own.len(),
        rep: None,
        relays: BTreeMap::new(),
        anomaly: None,
    })
}

/// Leader election stand-in: the minimum id wins. Reports whether the members
/// were pairwise adjacent in `base`, which the region geometry should ensure.
pub fn elect_leader(members: &[u32], base: &AdjGraph) -> Result<(u32, bool)> {
    let leader = match members.iter().min() {
        Some(&m) => m,
        None => return param("cannot elect a leader from an empty member set"),
    };
    let clique = members.iter().enumerate().all(|(i, &u)| {
        members[i + 1..]
            .iter()
            .all(|&v| u == v || base.has_edge(u, v))
    });
    Ok((leader, clique))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Representative,
    Relay,
    /// More than one function (two relay regions, or representative and relay).
    Both,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Representative => "rep",
            Role::Relay => "relay",
            Role::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubnetNode {
    pub id: u32,
    pub role: Role,
    pub tile: TileId,
    /// Regions this node was elected for.
    pub regions: RegionSet,
    pub position: Point,
}

/// Elected points of one good tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRoles {
    pub tile: TileId,
    pub rep: u32,
    pub relays: BTreeMap<RegionLabel, u32>,
}

impl TileRoles {
    pub fn relay(&self, l: RegionLabel) -> Option<u32> {
        self.relays.get(&l).copied()
    }
}

/// The wired sensing subnetwork: members with roles and provenance, and
/// adjacency restricted to the wired pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubnetGraph {
    pub kind: ModelKind,
    /// Sorted by id.
    pub nodes: Vec<SubnetNode>,
    /// Aligned with `nodes`; neighbour ids ascending.
    pub adjacency: Vec<Vec<u32>>,
    /// Sorted by tile.
    pub tiles: Vec<TileRoles>,
}

impl SubnetGraph {
    pub fn empty(kind: ModelKind) -> Self {
        Self {
            kind,
            nodes: Vec::new(),
            adjacency: Vec::new(),
            tiles: Vec::new(),
        }
    }

    /// Assembles the graph from tile roles and a wired edge list.
    pub(crate) fn assemble(
        kind: ModelKind,
        positions: &[Point],
        tiles: Vec<TileRoles>,
        edges: &[(u32, u32)],
    ) -> Self {
        let mut roles: BTreeMap<u32, (usize, RegionSet, TileId)> = BTreeMap::new();
        for tr in &tiles {
            let e = roles.entry(tr.rep).or_insert((0, RegionSet::EMPTY, tr.tile));
            e.0 += 1;
            e.1.insert(RegionLabel::C0);
            for (&l, &id) in &tr.relays {
                let e = roles.entry(id).or_insert((0, RegionSet::EMPTY, tr.tile));
                e.0 += 1;
                e.1.insert(l);
            }
        }
        let nodes: Vec<SubnetNode> = roles
            .into_iter()
            .map(|(id, (count, regions, tile))| {
                let role = if count > 1 {
                    Role::Both
                } else if regions.contains(RegionLabel::C0) {
                    Role::Representative
                } else {
                    Role::Relay
                };
                SubnetNode {
                    id,
                    role,
                    tile,
                    regions,
                    position: positions[id as usize],
                }
            })
            .collect();
        let pos: HashMap<u32, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(u, v) in edges {
            if u == v {
                continue;
            }
            adjacency[pos[&u]].push(v);
            adjacency[pos[&v]].push(u);
        }
        for l in &mut adjacency {
            l.sort_unstable();
            l.dedup();
        }
        let mut tiles = tiles;
        tiles.sort_by_key(|t| t.tile);
        Self {
            kind,
            nodes,
            adjacency,
            tiles,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.index_of(id).is_some()
    }

    pub fn node(&self, id: u32) -> Option<&SubnetNode> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn neighbors(&self, id: u32) -> &[u32] {
        self.index_of(id).map(|i| self.adjacency[i].as_slice()).unwrap_or(&[])
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn degree(&self, id: u32) -> usize {
        self.neighbors(id).len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Each edge once as `(u, v)` with `u < v`, ascending.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (n, l) in self.nodes.iter().zip(&self.adjacency) {
            for &v in l {
                if v > n.id {
                    out.push((n.id, v));
                }
            }
        }
        out
    }

    pub fn roles_for(&self, t: TileId) -> Option<&TileRoles> {
        self.tiles
            .binary_search_by_key(&t, |r| r.tile)
            .ok()
            .map(|i| &self.tiles[i])
    }

    pub fn rep_of(&self, t: TileId) -> Option<u32> {
        self.roles_for(t).map(|r| r.rep)
    }

    /// Representative ids, ascending by tile.
    pub fn reps(&self) -> Vec<u32> {
        self.tiles.iter().map(|t| t.rep).collect()
    }

    /// The subnet as an [`AdjGraph`] over local indices (`nodes` order).
    pub fn to_local_graph(&self) -> AdjGraph {
        let positions = self.nodes.iter().map(|n| n.position).collect();
        let mut edges = Vec::with_capacity(self.edge_count());
        for (i, l) in self.adjacency.iter().enumerate() {
            for &v in l {
                let j = self.index_of(v).expect("neighbour is a member");
                if j > i {
                    edges.push((i as u32, j as u32));
                }
            }
        }
        AdjGraph::from_edges(crate::graph::EdgeKind::Udg { radius: f64::INFINITY }, positions, &edges)
            .expect("local indices are valid")
    }

    /// Labels of connected components over `nodes` order.
    pub fn component_labels(&self) -> (Vec<u32>, Vec<usize>) {
        let mut dsu = DisjointSets::new(self.nodes.len());
        for (i, l) in self.adjacency.iter().enumerate() {
            for &v in l {
                let j = self.index_of(v).expect("neighbour is a member");
                dsu.union(i as u32, j as u32);
            }
        }
        dsu.labels()
    }
}

/// Restriction to the largest connected component; ties go to the component
/// holding the smallest node id. Tile roles are kept for tiles whose
/// representative survives.
pub fn largest_component(s: &SubnetGraph) -> SubnetGraph {
    if s.is_empty() {
        return SubnetGraph::empty(s.kind);
    }
    let (labels, sizes) = s.component_labels();
    // Labels are numbered by first appearance in ascending-id order, so the
    // smallest label among equal sizes holds the smallest node id.
    let keep = largest_label(&sizes).expect("non-empty");
    let nodes: Vec<SubnetNode> = s
        .nodes
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l == keep)
        .map(|(n, _)| n.clone())
        .collect();
    let adjacency: Vec<Vec<u32>> = s
        .adjacency
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l == keep)
        .map(|(a, _)| a.clone())
        .collect();
    let kept = |id: u32| nodes.binary_search_by_key(&id, |n| n.id).is_ok();
    let tiles = s.tiles.iter().filter(|t| kept(t.rep)).cloned().collect();
    SubnetGraph {
        kind: s.kind,
        nodes,
        adjacency,
        tiles,
    }
}

/// Everything produced by one construction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Construction {
    pub subnet: SubnetGraph,
    /// Final statuses of the analysed tiles, row-major over `range`.
    pub statuses: Vec<TileStatus>,
    pub range: TileRange,
    pub anomalies: Vec<Anomaly>,
}

impl Construction {
    pub fn status(&self, t: TileId) -> Option<&TileStatus> {
        if !self.range.contains(t) {
            return None;
        }
        let idx = (t.j - self.range.j_min) as usize * self.range.width() + (t.i - self.range.i_min) as usize;
        self.statuses.get(idx)
    }

    /// Statuses as rows (one per `j`).
    pub fn status_grid(&self) -> Vec<Vec<TileStatus>> {
        let w = self.range.width().max(1);
        self.statuses.chunks(w).map(|c| c.to_vec()).collect()
    }

    pub fn good_count(&self) -> usize {
        self.statuses.iter().filter(|s| s.good).count()
    }

    pub fn wiring_anomalies(&self) -> usize {
        self.anomalies
            .iter()
            .filter(|a| matches!(a.kind, AnomalyKind::WiringNotBaseEdge { .. }))
            .count()
    }
}

/// Wired pairs of tile `t` given its roles: internal pairs, and cross pairs
/// towards the right and top neighbours when `neighbor_roles` yields them.
pub(crate) fn internal_pairs(kind: ModelKind, r: &TileRoles) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for d in Direction::ALL {
        let e = r.relay(d.e_label()).expect("good tile has every relay");
        out.push((r.rep, e));
        if kind == ModelKind::Nn {
            let c = r.relay(d.c_label()).expect("good tile has every relay");
            out.push((e, c));
        }
    }
    out
}

/// The cross pair between `a` and its neighbour `b` in direction `d`.
pub(crate) fn cross_pair(kind: ModelKind, a: &TileRoles, b: &TileRoles, d: Direction) -> (u32, u32) {
    let (la, lb) = match kind {
        ModelKind::Udg => (d.e_label(), d.opposite().e_label()),
        ModelKind::Nn => (d.c_label(), d.opposite().c_label()),
    };
    (
        a.relay(la).expect("good tile has every relay"),
        b.relay(lb).expect("good tile has every relay"),
    )
}

pub(crate) fn ordered(u: u32, v: u32) -> (u32, u32) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Distinct role holders, one per entry of `regions` (members ascending), if
/// they exist: augmenting paths in region order, members tried by ascending
/// id, so an uncontested region keeps its minimum id.
pub(crate) fn distinct_roles(regions: &[&[u32]]) -> Option<Vec<u32>> {
    fn augment(r: usize, regions: &[&[u32]], owner: &mut BTreeMap<u32, usize>, seen: &mut Vec<u32>) -> bool {
        for &p in regions[r] {
            if seen.contains(&p) {
                continue;
            }
            seen.push(p);
            let free = match owner.get(&p) {
                None => true,
                Some(&o) => augment(o, regions, owner, seen),
            };
            if free {
                owner.insert(p, r);
                return true;
            }
        }
        false
    }
    let mut owner = BTreeMap::new();
    if !(0..regions.len()).all(|r| augment(r, regions, &mut owner, &mut Vec::new())) {
        return None;
    }
    let mut out = vec![0; regions.len()];
    for (p, r) in owner {
        out[r] = p;
    }
    Some(out)
}

/// Distinct role holders when they exist, otherwise each region's minimum id
/// (a point may then hold several relay roles).
pub(crate) fn assign_roles(regions: &[&[u32]]) -> Vec<u32> {
    distinct_roles(regions)
        .unwrap_or_else(|| regions.iter().map(|m| m.iter().copied().min().unwrap_or(0)).collect())
}

/// Roles from per-region member lists, in `kind.required_regions()` order.
pub(crate) fn roles_from(t: TileId, kind: ModelKind, regions: &[&[u32]]) -> TileRoles {
    let ids = assign_roles(regions);
    let mut rep = 0;
    let mut relays = BTreeMap::new();
    for (&l, id) in kind.required_regions().iter().zip(ids) {
        if l == RegionLabel::C0 {
            rep = id;
        } else {
            relays.insert(l, id);
        }
    }
    TileRoles { tile: t, rep, relays }
}

/// Elects roles for a good status; returns election anomalies.
fn elect_roles(status: &mut TileStatus, base: &AdjGraph, kind: ModelKind) -> Result<Vec<RegionLabel>> {
    let mut bad = Vec::new();
    for &l in kind.required_regions() {
        let (_, clique) = elect_leader(status.members(l), base)?;
        if !clique {
            bad.push(l);
        }
    }
    let regions: Vec<&[u32]> = kind.required_regions().iter().map(|&l| status.members(l)).collect();
    let roles = roles_from(status.tile, kind, &regions);
    status.rep = Some(roles.rep);
    status.relays = roles.relays;
    Ok(bad)
}

fn roles_of(status: &TileStatus) -> TileRoles {
    TileRoles {
        tile: status.tile,
        rep: status.rep.expect("elected"),
        relays: status.relays.clone(),
    }
}

/// Centralised construction over every tile of the analysis window.
pub fn construct_subnet(
    points: &PointSet,
    base: &AdjGraph,
    geom: &TileGeom,
    k: Option<usize>,
) -> Result<Construction> {
    let k = require_k(geom, k)?;
    if base.node_count() != points.len() {
        return param(format!(
            "base graph has {} nodes but the point set has {}",
            base.node_count(),
            points.len()
        ));
    }
    let buckets = TileBuckets::new(points, geom);
    let range = buckets.analysis;
    let tiles = range.tiles();
    let classified: Vec<Result<(TileStatus, Vec<RegionLabel>)>> = tiles
        .par_iter()
        .map(|&t| {
            let mut s = classify_tile(t, points, &buckets, geom, k)?;
            let bad = if s.good {
                elect_roles(&mut s, base, geom.kind)?
            } else {
                Vec::new()
            };
            Ok((s, bad))
        })
        .collect();
    let mut statuses = Vec::with_capacity(tiles.len());
    let mut anomalies = Vec::new();
    for r in classified {
        let (mut s, bad) = r?;
        if let Some(&region) = bad.first() {
            s.anomaly = Some(AnomalyKind::ElectionNotClique { region });
        }
        for region in bad {
            anomalies.push(Anomaly {
                tile: s.tile,
                kind: AnomalyKind::ElectionNotClique { region },
            });
        }
        statuses.push(s);
    }

    let w = range.width();
    let idx = |t: TileId| (t.j - range.j_min) as usize * w + (t.i - range.i_min) as usize;
    let roles: Vec<Option<TileRoles>> = statuses
        .iter()
        .map(|s| s.good.then(|| roles_of(s)))
        .collect();

    // One simultaneous pass: every wired pair is checked against the initial
    // goodness, and all tiles touching a failing pair are demoted.
    let mut demote = vec![false; statuses.len()];
    for (ti, t) in tiles.iter().enumerate() {
        let Some(r) = &roles[ti] else { continue };
        for (u, v) in internal_pairs(geom.kind, r) {
            if !base.has_edge(u, v) {
                demote[ti] = true;
                anomalies.push(Anomaly {
                    tile: *t,
                    kind: AnomalyKind::WiringNotBaseEdge { u, v, other_tile: None },
                });
            }
        }
        for d in [Direction::Right, Direction::Top] {
            let n = t.neighbor(d);
            if !range.contains(n) {
                continue;
            }
            let Some(rn) = &roles[idx(n)] else { continue };
            let (u, v) = cross_pair(geom.kind, r, rn, d);
            if u != v && !base.has_edge(u, v) {
                demote[ti] = true;
                demote[idx(n)] = true;
                anomalies.push(Anomaly {
                    tile: *t,
                    kind: AnomalyKind::WiringNotBaseEdge { u, v, other_tile: Some(n) },
                });
            }
        }
    }
    for (s, &d) in statuses.iter_mut().zip(&demote) {
        if d && s.good {
            s.good = false;
            if s.anomaly.is_none() {
                s.anomaly = anomalies
                    .iter()
                    .find(|a| {
                        a.tile == s.tile
                            || matches!(a.kind, AnomalyKind::WiringNotBaseEdge { other_tile: Some(o), .. } if o == s.tile)
                    })
                    .map(|a| a.kind.clone());
            }
        }
    }

    let mut edges = Vec::new();
    let mut kept = Vec::new();
    for (ti, t) in tiles.iter().enumerate() {
        if !statuses[ti].good {
            continue;
        }
        let r = roles[ti].as_ref().expect("good tile has roles");
        edges.extend(internal_pairs(geom.kind, r).into_iter().map(|(u, v)| ordered(u, v)));
        for d in [Direction::Right, Direction::Top] {
            let n = t.neighbor(d);
            if range.contains(n) && statuses[idx(n)].good {
                let rn = roles[idx(n)].as_ref().expect("good tile has roles");
                let (u, v) = cross_pair(geom.kind, r, rn, d);
                edges.push(ordered(u, v));
            }
        }
        kept.push(r.clone());
    }
    edges.sort_unstable();
    edges.dedup();
    let subnet = SubnetGraph::assemble(geom.kind, &points.points, kept, &edges);
    Ok(Construction {
        subnet,
        statuses,
        range,
        anomalies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_knn, build_udg};
    use crate::tiling::TileGeom;

    #[test]
    fn role_assignment_prefers_distinct_points() {
        assert_eq!(assign_roles(&[&[3, 5], &[4], &[1, 9]]), vec![3, 4, 1]);
        assert_eq!(assign_roles(&[&[1], &[1, 2]]), vec![1, 2]);
        assert_eq!(assign_roles(&[&[1, 2], &[1]]), vec![2, 1]);
        assert_eq!(assign_roles(&[&[1], &[1]]), vec![1, 1]);
        assert_eq!(distinct_roles(&[&[1], &[1]]), None);
        assert!(is_good(ModelKind::Udg, None, 2, &[&[1], &[1]]));
    }

    /// Two UDG tiles side by side with one point per region, in a window of
    /// exactly those two tiles.
    pub(crate) fn two_udg_tiles() -> (PointSet, TileGeom) {
        let g = TileGeom::udg(0.25).unwrap();
        let mut coords = Vec::new();
        for t in [TileId::new(0, 0), TileId::new(1, 0)] {
            let c = g.center(t);
            coords.push((c.x, c.y));
            for d in Direction::ALL {
                let m = g.edge_midpoint(t, d);
                // Just inside the tile, halfway between centre and midpoint side.
                coords.push((c.x + 0.9 * (m.x - c.x), c.y + 0.9 * (m.y - c.y)));
            }
        }
        let s = g.side;
        let w = Window::new(-s / 2.0, -s / 2.0, 1.5 * s, s / 2.0, 0.0).unwrap();
        let pts = coords.iter().map(|&(x, y)| Point::new(x, y)).collect();
        (PointSet::from_points(pts, w).unwrap(), g)
    }

    #[test]
    fn empty_tile_is_bad() {
        let g = TileGeom::udg(0.25).unwrap();
        let w = tile_window(&g, 1, 0.0).unwrap();
        let ps = PointSet::from_points(Vec::new(), w).unwrap();
        let b = TileBuckets::new(&ps, &g);
        let s = classify_tile(TileId::new(0, 0), &ps, &b, &g, None).unwrap();
        assert!(!s.good);
        assert_eq!(s.point_count, 0);
    }

    #[test]
    fn five_regions_make_a_good_udg_tile() {
        let (ps, g) = two_udg_tiles();
        let b = TileBuckets::new(&ps, &g);
        let s = classify_tile(TileId::new(0, 0), &ps, &b, &g, None).unwrap();
        assert!(s.good);
        for &l in ModelKind::Udg.required_regions() {
            assert_eq!(s.members(l).len(), 1, "{l}");
        }
    }

    #[test]
    fn nn_count_cap_makes_tile_bad() {
        let g = TileGeom::nn(1.0).unwrap();
        let a = g.a;
        let t = TileId::new(0, 0);
        let mut pts = Vec::new();
        for l in [RegionLabel::C0, RegionLabel::CL, RegionLabel::CR, RegionLabel::CT, RegionLabel::CB] {
            pts.push(g.disk_center(t, l).unwrap());
        }
        for d in Direction::ALL {
            let (di, dj) = d.offset();
            pts.push(Point::new(2.0 * a * di as f64, 2.0 * a * dj as f64));
        }
        // 9 occupied regions, then filler in the corners.
        let k = 20;
        while pts.len() < k / 2 + 1 {
            pts.push(Point::new(4.5 * a, 4.5 * a - pts.len() as f64 * 0.01));
        }
        let w = tile_window(&g, 1, 1.0).unwrap();
        let ps = PointSet::from_points(pts, w).unwrap();
        let b = TileBuckets::new(&ps, &g);
        let s = classify_tile(t, &ps, &b, &g, Some(k)).unwrap();
        assert!(RegionLabel::ALL.iter().all(|&l| !s.members(l).is_empty()));
        assert_eq!(s.point_count, k / 2 + 1);
        assert!(!s.good);
        let s = classify_tile(t, &ps, &b, &g, Some(k + 2)).unwrap();
        assert!(s.good);
        assert!(classify_tile(t, &ps, &b, &g, None).is_err());
    }

    #[test]
    fn nn_classification_needs_neighbour_tiles() {
        let g = TileGeom::nn(1.0).unwrap();
        let w = tile_window(&g, 1, 0.0).unwrap();
        let ps = PointSet::from_points(vec![Point::new(0.0, 0.0)], w).unwrap();
        let b = TileBuckets::new(&ps, &g);
        let err = classify_tile(TileId::new(0, 0), &ps, &b, &g, Some(10)).unwrap_err();
        assert!(matches!(err, SensError::Classification(_)));
    }

    #[test]
    fn election_is_min_id() {
        let ps = PointSet::from_coords(&[(0.0, 0.0); 10]).unwrap();
        let base = build_udg(&ps);
        assert_eq!(elect_leader(&[7], &base).unwrap(), (7, true));
        assert_eq!(elect_leader(&[5, 2, 9], &base).unwrap(), (2, true));
        assert!(elect_leader(&[], &base).is_err());
        let far = PointSet::from_coords(&[(0.0, 0.0), (5.0, 0.0)]).unwrap();
        assert_eq!(elect_leader(&[1, 0], &build_udg(&far)).unwrap(), (0, false));
    }

    #[test]
    fn adjacent_udg_tiles_wire_a_three_edge_path() {
        let (ps, g) = two_udg_tiles();
        let base = build_udg(&ps);
        let c = construct_subnet(&ps, &base, &g, None).unwrap();
        assert!(c.anomalies.is_empty());
        assert_eq!(c.good_count(), 2);
        let s = &c.subnet;
        assert_eq!(s.len(), 10);
        assert_eq!(s.edge_count(), 9);
        let r0 = s.rep_of(TileId::new(0, 0)).unwrap();
        let r1 = s.rep_of(TileId::new(1, 0)).unwrap();
        let local = s.to_local_graph();
        let hops = crate::graph::graph_distance(
            &local,
            s.index_of(r0).unwrap() as u32,
            s.index_of(r1).unwrap() as u32,
            false,
        )
        .unwrap();
        assert_eq!(hops, Some(3.0));
        for (u, v) in s.edges() {
            assert!(ps.point(u).dist(&ps.point(v)) <= 1.0);
            assert!(base.has_edge(u, v));
        }
    }

    #[test]
    fn no_good_tiles_gives_empty_subnet() {
        let g = TileGeom::udg(0.25).unwrap();
        let w = tile_window(&g, 3, 2.0).unwrap();
        let ps = PointSet::from_points(vec![Point::new(0.0, 0.0)], w).unwrap();
        let c = construct_subnet(&ps, &build_udg(&ps), &g, None).unwrap();
        assert!(c.subnet.is_empty());
        assert_eq!(c.statuses.len(), 9);
    }

    #[test]
    fn largest_component_picks_bigger_and_breaks_ties_by_id() {
        let positions: Vec<Point> = (0..20).map(|i| Point::new(i as f64, 0.0)).collect();
        let mk = |reps: &[u32], edges: &[(u32, u32)]| {
            let tiles = reps
                .iter()
                .enumerate()
                .map(|(i, &r)| TileRoles {
                    tile: TileId::new(i as i64, 0),
                    rep: r,
                    relays: BTreeMap::new(),
                })
                .collect();
            let mut s = SubnetGraph::assemble(ModelKind::Udg, &positions, tiles, &[]);
            // Add plain members for the edge endpoints.
            let mut ids: Vec<u32> = edges.iter().flat_map(|&(u, v)| [u, v]).collect();
            ids.sort_unstable();
            ids.dedup();
            for id in ids {
                if !s.contains(id) {
                    let at = s.nodes.partition_point(|n| n.id < id);
                    s.nodes.insert(
                        at,
                        SubnetNode {
                            id,
                            role: Role::Relay,
                            tile: TileId::new(0, 0),
                            regions: RegionSet::EMPTY,
                            position: positions[id as usize],
                        },
                    );
                    s.adjacency.insert(at, Vec::new());
                }
            }
            for &(u, v) in edges {
                let (iu, iv) = (s.index_of(u).unwrap(), s.index_of(v).unwrap());
                s.adjacency[iu].push(v);
                s.adjacency[iv].push(u);
            }
            for l in &mut s.adjacency {
                l.sort_unstable();
            }
            s
        };
        // Sizes 4 (ids 0..4) and 10 (ids 5..15).
        let mut edges: Vec<(u32, u32)> = (0..3).map(|i| (i, i + 1)).collect();
        edges.extend((5..14).map(|i| (i, i + 1)));
        let s = mk(&[0, 5], &edges);
        let lc = largest_component(&s);
        assert_eq!(lc.len(), 10);
        assert_eq!(lc.nodes[0].id, 5);
        assert_eq!(lc.reps(), vec![5]);
        let (_, sizes) = s.component_labels();
        assert_eq!(sizes.iter().sum::<usize>(), s.len());
        // Equal sizes: the component with the smaller id wins.
        let s = mk(&[10, 2], &[(10, 11), (2, 3)]);
        assert_eq!(largest_component(&s).nodes[0].id, 2);
        // Connected input is returned unchanged.
        let s = mk(&[0], &[(0, 1), (1, 2)]);
        assert_eq!(largest_component(&s), s);
        assert!(largest_component(&SubnetGraph::empty(ModelKind::Udg)).is_empty());
    }

    #[test]
    fn nn_requires_k() {
        let g = TileGeom::nn(1.0).unwrap();
        let w = tile_window(&g, 1, 1.0).unwrap();
        let ps = PointSet::from_points(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)], w).unwrap();
        let base = build_knn(&ps, 1).unwrap();
        assert!(construct_subnet(&ps, &base, &g, None).is_err());
    }
}
