//! Construction under a locality discipline.
//!
//! Each node starts from its own coordinates and the deployment constants
//! (tile geometry, analysis window, k). All further knowledge is obtained by
//! reading the state of base-graph neighbours through an [`Auditor`], which
//! refuses and counts any read of a non-neighbour. The simulation proceeds in
//! synchronous rounds:
//!
//! 1. local region classification;
//! 2. flooding of tile membership records among the participants of each tile;
//! 3. per-tile verdicts (goodness, distinct min-id elections) computed by every participant;
//! 4. wiring checks against the node's own adjacency list;
//! 5. flooding of demotions within each tile;
//! 6. final handshakes with cross-tile partners.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    cross_pair, internal_pairs, is_good, ordered, require_k, roles_from, SubnetGraph, TileBuckets, TileRange,
    TileRoles,
};
use crate::error::{param, Result, SensError};
use crate::geom::PointSet;
use crate::graph::AdjGraph;
use crate::tiling::{lens_contains, nn_labels, udg_labels, Direction, ModelKind, RegionLabel, RegionSet, TileGeom, TileId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditStats {
    /// Neighbour-state reads performed.
    pub reads: u64,
    /// Attempted reads of non-neighbours (refused).
    pub violations: u64,
    /// Synchronous rounds executed.
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributedConstruction {
    pub subnet: SubnetGraph,
    pub audit: AuditStats,
}

/// Mediates every cross-node read.
pub struct Auditor<'a> {
    base: &'a AdjGraph,
    reads: AtomicU64,
    violations: AtomicU64,
}

impl<'a> Auditor<'a> {
    pub fn new(base: &'a AdjGraph) -> Self {
        Self {
            base,
            reads: AtomicU64::new(0),
            violations: AtomicU64::new(0),
        }
    }

    /// `me` reads `other`'s state; refused unless they are base-graph neighbours.
    pub fn read<'s, T>(&self, me: u32, other: u32, states: &'s [T]) -> Option<&'s T> {
        if me == other {
            return Some(&states[me as usize]);
        }
        if self.base.has_edge(me, other) {
            self.reads.fetch_add(1, Ordering::Relaxed);
            Some(&states[other as usize])
        } else {
            self.violations.fetch_add(1, Ordering::Relaxed);
            None
        }
    }

    fn stats(&self, rounds: usize) -> AuditStats {
        AuditStats {
            reads: self.reads.load(Ordering::Relaxed),
            violations: self.violations.load(Ordering::Relaxed),
            rounds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Record {
    id: u32,
    in_tile: bool,
    labels: u16,
}

#[derive(Debug, Clone, PartialEq)]
struct Verdict {
    good: bool,
    roles: Option<TileRoles>,
}

#[derive(Debug, Clone, Default)]
struct NodeState {
    /// Tiles this node takes part in, ascending, with what it knows about each.
    groups: Vec<TileId>,
    records: Vec<Vec<Record>>,
    verdicts: Vec<Option<Verdict>>,
    demoted: Vec<bool>,
}

impl NodeState {
    fn group(&self, t: TileId) -> Option<usize> {
        self.groups.binary_search(&t).ok()
    }
}

fn labels_of(bits: u16) -> RegionSet {
    RegionLabel::ALL
        .into_iter()
        .filter(|l| bits & (1 << (*l as u16)) != 0)
        .collect()
}

fn bits_of(s: RegionSet) -> u16 {
    s.iter().fold(0, |acc, l| acc | (1 << (l as u16)))
}

fn verdict_from(
    t: TileId,
    records: &[Record],
    kind: ModelKind,
    k: Option<usize>,
) -> Verdict {
    let mut members: BTreeMap<RegionLabel, Vec<u32>> = BTreeMap::new();
    let mut count = 0;
    for r in records {
        if r.in_tile {
            count += 1;
        }
        for l in labels_of(r.labels).iter() {
            members.entry(l).or_default().push(r.id);
        }
    }
    for m in members.values_mut() {
        m.sort_unstable();
        m.dedup();
    }
    let regions: Vec<&[u32]> = kind
        .required_regions()
        .iter()
        .map(|l| members.get(l).map(Vec::as_slice).unwrap_or(&[]))
        .collect();
    let good = is_good(kind, k, count, &regions);
    let roles = good.then(|| roles_from(t, kind, &regions));
    Verdict { good, roles }
}

/// Label of the relay that carries the cross edge in direction `d`.
fn cross_label(kind: ModelKind, d: Direction) -> RegionLabel {
    match kind {
        ModelKind::Udg => d.e_label(),
        ModelKind::Nn => d.c_label(),
    }
}

/// Finds, among `me`'s neighbours, a participant of tile `n` and returns its verdict.
fn visible_verdict<'s>(
    me: u32,
    n: TileId,
    base: &AdjGraph,
    auditor: &Auditor<'_>,
    states: &'s [NodeState],
) -> Option<(u32, &'s Verdict)> {
    for &w in base.neighbors(me) {
        let s = auditor.read(me, w, states)?;
        if let Some(g) = s.group(n) {
            if let Some(v) = &s.verdicts[g] {
                return Some((w, v));
            }
        }
    }
    None
}

/// Same output as [`super::construct_subnet`]'s subnet, computed by nodes that
/// only read their own coordinates and their base-graph neighbours' states.
pub fn construct_subnet_distributed(
    points: &PointSet,
    base: &AdjGraph,
    geom: &TileGeom,
    k: Option<usize>,
) -> Result<DistributedConstruction> {
    let k = require_k(geom, k)?;
    let n = points.len();
    if base.node_count() != n {
        return param(format!(
            "base graph has {} nodes but the point set has {n}",
            base.node_count()
        ));
    }
    let frame = TileBuckets::new(points, geom);
    let analysis: TileRange = frame.analysis;
    if geom.kind == ModelKind::Nn && !analysis.is_empty() {
        let c = frame.covered;
        if c.i_min > analysis.i_min - 1
            || c.i_max < analysis.i_max + 1
            || c.j_min > analysis.j_min - 1
            || c.j_max < analysis.j_max + 1
        {
            return Err(SensError::Classification(
                "analysis tiles have neighbours outside the sampled window".into(),
            ));
        }
    }
    let kind = geom.kind;
    let auditor = Auditor::new(base);
    let mut rounds = 0usize;

    // Round 1: local classification from the node's own coordinates.
    let mut states: Vec<NodeState> = (0..n as u32)
        .into_par_iter()
        .map(|id| {
            let p = points.point(id);
            let own = geom.tile_of(&p);
            let mut entries: Vec<(TileId, Record)> = Vec::new();
            if analysis.contains(own) {
                let labels = match kind {
                    ModelKind::Udg => udg_labels(&p, own, geom),
                    ModelKind::Nn => nn_labels(&p, own, geom),
                };
                entries.push((own, Record { id, in_tile: true, labels: bits_of(labels) }));
            }
            if kind == ModelKind::Nn {
                for d in Direction::ALL {
                    let t = own.neighbor(d.opposite());
                    if analysis.contains(t) && lens_contains(&p, t, d, geom) {
                        let mut s = RegionSet::EMPTY;
                        s.insert(d.e_label());
                        entries.push((t, Record { id, in_tile: false, labels: bits_of(s) }));
                    }
                }
            }
            entries.sort_by_key(|e| e.0);
            NodeState {
                groups: entries.iter().map(|e| e.0).collect(),
                records: entries.iter().map(|e| vec![e.1]).collect(),
                verdicts: vec![None; entries.len()],
                demoted: vec![false; entries.len()],
            }
        })
        .collect();
    rounds += 1;

    // Each node remembers which neighbours share each of its groups.
    let peers: Vec<Vec<Vec<u32>>> = (0..n as u32)
        .into_par_iter()
        .map(|me| {
            let mine = &states[me as usize];
            mine.groups
                .iter()
                .map(|&t| {
                    base.neighbors(me)
                        .iter()
                        .copied()
                        .filter(|&w| {
                            auditor
                                .read(me, w, &states)
                                .is_some_and(|s| s.group(t).is_some())
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    rounds += 1;

    // Flood membership records within each tile until nothing changes.
    loop {
        let next: Vec<Vec<Vec<Record>>> = (0..n as u32)
            .into_par_iter()
            .map(|me| {
                let mine = &states[me as usize];
                mine.groups
                    .iter()
                    .enumerate()
                    .map(|(g, &t)| {
                        let mut merged = mine.records[g].clone();
                        for &w in &peers[me as usize][g] {
                            if let Some(s) = auditor.read(me, w, &states) {
                                if let Some(wg) = s.group(t) {
                                    merged.extend_from_slice(&s.records[wg]);
                                }
                            }
                        }
                        merged.sort_unstable();
                        merged.dedup();
                        merged
                    })
                    .collect()
            })
            .collect();
        rounds += 1;
        let mut changed = false;
        for (s, r) in states.iter_mut().zip(next) {
            if s.records != r {
                changed = true;
                s.records = r;
            }
        }
        if !changed {
            break;
        }
    }

    // Verdicts from each participant's own knowledge.
    states.par_iter_mut().for_each(|s| {
        for g in 0..s.groups.len() {
            s.verdicts[g] = Some(verdict_from(s.groups[g], &s.records[g], kind, k));
        }
    });
    rounds += 1;

    // Wiring checks: internal partners against the node's own adjacency list,
    // cross partners through a neighbour's view of the adjacent tile.
    let flags: Vec<Vec<TileId>> = (0..n as u32)
        .into_par_iter()
        .map(|me| {
            let mine = &states[me as usize];
            let mut out = Vec::new();
            for (g, &t) in mine.groups.iter().enumerate() {
                let Some(Verdict { good: true, roles: Some(roles) }) = &mine.verdicts[g] else {
                    continue;
                };
                for (u, v) in internal_pairs(kind, roles) {
                    let partner = if u == me {
                        v
                    } else if v == me {
                        u
                    } else {
                        continue;
                    };
                    if !base.has_edge(me, partner) {
                        out.push(t);
                    }
                }
                for d in Direction::ALL {
                    if roles.relay(cross_label(kind, d)) != Some(me) {
                        continue;
                    }
                    let nt = t.neighbor(d);
                    if !analysis.contains(nt) {
                        continue;
                    }
                    let Some((_, v)) = visible_verdict(me, nt, base, &auditor, &states) else {
                        continue;
                    };
                    let Some(other) = &v.roles else { continue };
                    let (_, partner) = cross_pair(kind, roles, other, d);
                    if partner != me && !base.has_edge(me, partner) {
                        out.push(t);
                        out.push(nt);
                    }
                }
            }
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect();
    rounds += 1;
    for (s, f) in states.iter_mut().zip(&flags) {
        for (g, t) in s.groups.iter().enumerate() {
            if f.binary_search(t).is_ok() {
                s.demoted[g] = true;
            }
        }
    }

    // Flood demotions within each tile.
    loop {
        let next: Vec<Vec<bool>> = (0..n as u32)
            .into_par_iter()
            .map(|me| {
                let mine = &states[me as usize];
                mine.groups
                    .iter()
                    .enumerate()
                    .map(|(g, &t)| {
                        mine.demoted[g]
                            || peers[me as usize][g].iter().any(|&w| {
                                auditor
                                    .read(me, w, &states)
                                    .and_then(|s| s.group(t).map(|wg| s.demoted[wg]))
                                    .unwrap_or(false)
                            })
                    })
                    .collect()
            })
            .collect();
        rounds += 1;
        let mut changed = false;
        for (s, d) in states.iter_mut().zip(next) {
            if s.demoted != d {
                changed = true;
                s.demoted = d;
            }
        }
        if !changed {
            break;
        }
    }

    // Handshakes: each elected node records its surviving edges.
    let per_node: Vec<(Vec<(u32, u32)>, Vec<TileRoles>)> = (0..n as u32)
        .into_par_iter()
        .map(|me| {
            let mine = &states[me as usize];
            let mut edges = Vec::new();
            let mut tiles = Vec::new();
            for (g, &t) in mine.groups.iter().enumerate() {
                if mine.demoted[g] {
                    continue;
                }
                let Some(Verdict { good: true, roles: Some(roles) }) = &mine.verdicts[g] else {
                    continue;
                };
                if roles.rep == me {
                    tiles.push(roles.clone());
                }
                for (u, v) in internal_pairs(kind, roles) {
                    if u == me || v == me {
                        edges.push(ordered(u, v));
                    }
                }
                for d in Direction::ALL {
                    if roles.relay(cross_label(kind, d)) != Some(me) {
                        continue;
                    }
                    let nt = t.neighbor(d);
                    if !analysis.contains(nt) {
                        continue;
                    }
                    let Some((_, v)) = visible_verdict(me, nt, base, &auditor, &states) else {
                        continue;
                    };
                    let Some(other) = &v.roles else { continue };
                    let (_, partner) = cross_pair(kind, roles, other, d);
                    if partner == me {
                        continue;
                    }
                    let alive = auditor
                        .read(me, partner, &states)
                        .and_then(|s| s.group(nt).map(|g| !s.demoted[g]))
                        .unwrap_or(false);
                    if alive {
                        edges.push(ordered(me, partner));
                    }
                }
            }
            (edges, tiles)
        })
        .collect();
    rounds += 1;

    let mut edges = Vec::new();
    let mut tiles = Vec::new();
    for (e, t) in per_node {
        edges.extend(e);
        tiles.extend(t);
    }
    edges.sort_unstable();
    edges.dedup();
    let subnet = SubnetGraph::assemble(kind, &points.points, tiles, &edges);
    Ok(DistributedConstruction {
        subnet,
        audit: auditor.stats(rounds),
    })
}
