//! Base interconnection graphs: the unit-disk graph and the undirected
//! k-nearest-neighbour graph, plus components and shortest paths.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSets;
use crate::error::{param, Result};
use crate::geom::{Point, PointSet, SpatialIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EdgeKind {
    Udg { radius: f64 },
    Knn { k: usize },
}

/// Undirected simple graph over dense node ids with sorted adjacency lists.
/// Node positions travel with the graph so weighted distances are available.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjGraph {
    pub kind: EdgeKind,
    positions: Vec<Point>,
    adjacency: Vec<Vec<u32>>,
}

impl AdjGraph {
    /// Builds a graph from an explicit edge list; duplicates and self-loops are dropped.
    pub fn from_edges(kind: EdgeKind, positions: Vec<Point>, edges: &[(u32, u32)]) -> Result<Self> {
        let n = positions.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return param(format!("edge ({u}, {v}) references a node outside 0..{n}"));
            }
            if u != v {
                adjacency[u as usize].push(v);
                adjacency[v as usize].push(u);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            kind,
            positions,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, u: u32) -> &[u32] {
        &self.adjacency[u as usize]
    }

    pub fn degree(&self, u: u32) -> usize {
        self.adjacency[u as usize].len()
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.adjacency
            .get(u as usize)
            .is_some_and(|l| l.binary_search(&v).is_ok())
    }

    pub fn position(&self, u: u32) -> Point {
        self.positions[u as usize]
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, l)| {
            let u = u as u32;
            l.iter().filter(move |&&v| v > u).map(move |&v| (u, v))
        })
    }

    /// Debug export: one `u v` pair per line.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        for (u, v) in self.edges() {
            writeln!(w, "{u} {v}")?;
        }
        Ok(())
    }

    fn check_node(&self, u: u32) -> Result<()> {
        if (u as usize) < self.node_count() {
            Ok(())
        } else {
            param(format!("node id {u} out of range 0..{}", self.node_count()))
        }
    }
}

/// Unit-disk graph: an edge joins every pair at Euclidean distance ≤ 1.
pub fn build_udg(points: &PointSet) -> AdjGraph {
    build_disk_graph(&points.points, 1.0)
}

pub(crate) fn build_disk_graph(points: &[Point], radius: f64) -> AdjGraph {
    let kind = EdgeKind::Udg { radius };
    if points.is_empty() {
        return AdjGraph {
            kind,
            positions: Vec::new(),
            adjacency: Vec::new(),
        };
    }
    let index = SpatialIndex::new(points, radius.max(f64::MIN_POSITIVE))
        .expect("positive cell size");
    let adjacency = (0..points.len() as u32)
        .into_par_iter()
        .map(|u| {
            let mut l = Vec::new();
            index.for_each_within(&points[u as usize], radius, |v| {
                if v != u {
                    l.push(v);
                }
            });
            l.sort_unstable();
            l
        })
        .collect();
    AdjGraph {
        kind,
        positions: points.to_vec(),
        adjacency,
    }
}

/// Undirected k-NN graph: `u–v` whenever either endpoint is among the other's
/// `k` nearest (distance ties by id). Degrees may exceed `k`.
pub fn build_knn(points: &PointSet, k: usize) -> Result<AdjGraph> {
    if k == 0 {
        return param("k must be >= 1");
    }
    let n = points.len();
    let kind = EdgeKind::Knn { k };
    if n < 2 {
        log::warn!("k-NN graph on {n} point(s) has no edges");
        return Ok(AdjGraph {
            kind,
            positions: points.points.clone(),
            adjacency: vec![Vec::new(); n],
        });
    }
    // Cells sized so a cell holds about k points.
    let density = n as f64 / points.window.padded_area();
    let cell = (k as f64 / density).sqrt().max(1e-9);
    let index = SpatialIndex::new(&points.points, cell)?;
    let directed: Vec<Vec<u32>> = (0..n as u32)
        .into_par_iter()
        .map(|u| {
            index
                .nearest_k(&points.points[u as usize], k, Some(u))
                .expect("k >= 1")
        })
        .collect();
    let mut adjacency = directed.clone();
    for (u, outs) in directed.iter().enumerate() {
        for &v in outs {
            adjacency[v as usize].push(u as u32);
        }
    }
    adjacency.par_iter_mut().for_each(|l| {
        l.sort_unstable();
        l.dedup();
    });
    Ok(AdjGraph {
        kind,
        positions: points.points.clone(),
        adjacency,
    })
}

/// Component labelling; labels are numbered by smallest contained node id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
    /// Label of the largest component; ties go to the smaller label.
    pub largest: Option<u32>,
}

impl Components {
    pub fn from_dsu(mut dsu: DisjointSets) -> Self {
        let (labels, sizes) = dsu.labels();
        let largest = largest_label(&sizes);
        Self {
            labels,
            sizes,
            largest,
        }
    }

    pub fn members(&self, label: u32) -> Vec<u32> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(u, _)| u as u32)
            .collect()
    }
}

pub(crate) fn largest_label(sizes: &[usize]) -> Option<u32> {
    let mut best: Option<(usize, u32)> = None;
    for (l, &s) in sizes.iter().enumerate() {
        if best.is_none_or(|(bs, _)| s > bs) {
            best = Some((s, l as u32));
        }
    }
    best.map(|(_, l)| l)
}

pub fn connected_components(g: &AdjGraph) -> Components {
    let mut dsu = DisjointSets::new(g.node_count());
    for (u, v) in g.edges() {
        dsu.union(u, v);
    }
    Components::from_dsu(dsu)
}

/// Shortest-path length between `u` and `v`: hop count, or the sum of
/// Euclidean edge lengths when `weighted`. `None` means unreachable.
pub fn graph_distance(g: &AdjGraph, u: u32, v: u32, weighted: bool) -> Result<Option<f64>> {
    g.check_node(u)?;
    g.check_node(v)?;
    if u == v {
        return Ok(Some(0.0));
    }
    let d = if weighted {
        dijkstra(g, u, Some(v))[v as usize]
    } else {
        bfs_hops(g, u, Some(v))[v as usize].map(f64::from)
    };
    Ok(d)
}

/// Single-source distances to every node (see [`graph_distance`]).
pub fn distances_from(g: &AdjGraph, src: u32, weighted: bool) -> Result<Vec<Option<f64>>> {
    g.check_node(src)?;
    Ok(if weighted {
        dijkstra(g, src, None)
    } else {
        bfs_hops(g, src, None)
            .into_iter()
            .map(|h| h.map(f64::from))
            .collect()
    })
}

pub(crate) fn bfs_hops(g: &AdjGraph, src: u32, target: Option<u32>) -> Vec<Option<u32>> {
    let mut dist = vec![None; g.node_count()];
    dist[src as usize] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        if Some(u) == target {
            break;
        }
        let du = dist[u as usize].unwrap_or(0);
        for &w in g.neighbors(u) {
            if dist[w as usize].is_none() {
                dist[w as usize] = Some(du + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

#[derive(PartialEq)]
struct HeapItem(f64, u32);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Uniform-cost search from `src`; stops early once `target` is settled.
pub(crate) fn dijkstra(g: &AdjGraph, src: u32, target: Option<u32>) -> Vec<Option<f64>> {
    let n = g.node_count();
    let mut dist: Vec<Option<f64>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[src as usize] = Some(0.0);
    heap.push(Reverse(HeapItem(0.0, src)));
    while let Some(Reverse(HeapItem(d, u))) = heap.pop() {
        if done[u as usize] {
            continue;
        }
        done[u as usize] = true;
        if Some(u) == target {
            break;
        }
        let pu = g.position(u);
        for &w in g.neighbors(u) {
            if done[w as usize] {
                continue;
            }
            let nd = d + pu.dist(&g.position(w));
            if dist[w as usize].is_none_or(|old| nd < old) {
                dist[w as usize] = Some(nd);
                heap.push(Reverse(HeapItem(nd, w)));
            }
        }
    }
    // Only settled values are exact when stopping early.
    if target.is_some() {
        for (d, &s) in dist.iter_mut().zip(&done) {
            if !s {
                *d = None;
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> AdjGraph {
        let pts = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        AdjGraph::from_edges(EdgeKind::Udg { radius: 1.0 }, pts, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn udg_small_fixture() {
        let ps = PointSet::from_coords(&[(0.0, 0.0), (0.5, 0.0), (2.0, 0.0)]).unwrap();
        let g = build_udg(&ps);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn udg_includes_distance_exactly_one() {
        let ps = PointSet::from_coords(&[(0.0, 0.0), (1.0, 0.0)]).unwrap();
        assert!(build_udg(&ps).has_edge(0, 1));
    }

    #[test]
    fn knn_collinear_k1() {
        let ps = PointSet::from_coords(&[(0.0, 0.0), (1.0, 0.0), (3.0, 0.0), (7.0, 0.0)]).unwrap();
        let g = build_knn(&ps, 1).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn knn_hub_exceeds_k() {
        let mut coords = vec![(0.0, 0.0)];
        for i in 0..5 {
            let t = i as f64 * std::f64::consts::PI * 2.0 / 5.0;
            coords.push((10.0 * t.cos(), 10.0 * t.sin()));
        }
        let ps = PointSet::from_coords(&coords).unwrap();
        let g = build_knn(&ps, 1).unwrap();
        assert_eq!(g.degree(0), 5);
    }

    #[test]
    fn knn_on_single_point_is_empty() {
        let ps = PointSet::from_coords(&[(0.0, 0.0)]).unwrap();
        let g = build_knn(&ps, 3).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert!(build_knn(&ps, 0).is_err());
    }

    #[test]
    fn components_basic() {
        let pts = vec![Point::new(0.0, 0.0); 5];
        let g = AdjGraph::from_edges(EdgeKind::Udg { radius: 1.0 }, pts, &[]).unwrap();
        let c = connected_components(&g);
        assert_eq!(c.sizes, vec![1; 5]);
        let c = connected_components(&path3());
        assert_eq!(c.sizes, vec![3]);
        assert_eq!(c.largest, Some(0));
    }

    #[test]
    fn distances_on_path() {
        let g = path3();
        assert_eq!(graph_distance(&g, 1, 1, false).unwrap(), Some(0.0));
        assert_eq!(graph_distance(&g, 0, 2, false).unwrap(), Some(2.0));
        assert_eq!(graph_distance(&g, 0, 2, true).unwrap(), Some(2.0));
        assert!(graph_distance(&g, 0, 9, true).is_err());
    }

    #[test]
    fn unreachable_is_none() {
        let pts = vec![Point::new(0.0, 0.0), Point::new(5.0, 0.0)];
        let g = AdjGraph::from_edges(EdgeKind::Udg { radius: 1.0 }, pts, &[]).unwrap();
        assert_eq!(graph_distance(&g, 0, 1, false).unwrap(), None);
        assert_eq!(graph_distance(&g, 0, 1, true).unwrap(), None);
    }

    #[test]
    fn edge_list_export() {
        let mut buf = Vec::new();
        path3().write_edge_list(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 1\n1 2\n");
    }
}
