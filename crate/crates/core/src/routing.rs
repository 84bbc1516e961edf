//! Lattice routing: follow the x-y path, repair blockages with a local BFS,
//! and expand lattice hops into subnet node paths.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result, SensError};
use crate::lattice::LatticeWindow;
use crate::subnet::{cross_pair, SubnetGraph};
use crate::tiling::{ModelKind, TileId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Delivered,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteTrace {
    pub src: TileId,
    pub dst: TileId,
    pub outcome: Outcome,
    pub lattice_hops: Vec<TileId>,
    pub node_hops: Vec<u32>,
    pub probes: u64,
    pub bfs_invocations: u64,
}

impl RouteTrace {
    pub fn hop_count(&self) -> usize {
        self.lattice_hops.len().saturating_sub(1)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Next site on the x-y path: fix `i` first, then `j`.
pub fn compute_next(curr: TileId, dest: TileId) -> Result<TileId> {
    if curr == dest {
        return param(format!("already at destination {dest}"));
    }
    Ok(if curr.i != dest.i {
        TileId::new(curr.i + (dest.i - curr.i).signum(), curr.j)
    } else {
        TileId::new(curr.i, curr.j + (dest.j - curr.j).signum())
    })
}

/// Whether `v` lies on the x-y path from `from` to `dest` (endpoints included).
pub fn on_xy_path(v: TileId, from: TileId, dest: TileId) -> bool {
    let between = |x: i64, a: i64, b: i64| a.min(b) <= x && x <= a.max(b);
    (v.j == from.j && between(v.i, from.i, dest.i)) || (v.i == dest.i && between(v.j, from.j, dest.j))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BfsRepair {
    /// First dequeued open site on the x-y path from the start; `None` when the
    /// start's cluster holds no such site.
    pub v: Option<TileId>,
    /// Distinct sites whose status was examined.
    pub probes: u64,
    /// Open path from the start to `v`, both included; empty when `v` is `None`.
    pub path: Vec<TileId>,
}

/// BFS over open sites from `curr` in lexicographic neighbour order, stopping at
/// the first dequeued site other than `curr` on the x-y path to `dest`.
pub fn dist_bfs(l: &LatticeWindow, curr: TileId, dest: TileId) -> Result<BfsRepair> {
    bfs_repair(l, curr, dest, |_| {})
}

/// `dist_bfs`, reporting the index of every examined site to `examine`.
fn bfs_repair<F: FnMut(usize)>(l: &LatticeWindow, curr: TileId, dest: TileId, mut examine: F) -> Result<BfsRepair> {
    let start = match l.index(curr) {
        Some(k) if l.open[k] => k,
        _ => return param(format!("BFS start {curr} is not an open site")),
    };
    let mut parent: HashMap<usize, usize> = HashMap::new();
    let mut seen = vec![false; l.len()];
    seen[start] = true;
    let mut probes = 0u64;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let t = l.site(u);
        if u != start && on_xy_path(t, curr, dest) {
            let mut path = vec![t];
            let mut x = u;
            while let Some(&p) = parent.get(&x) {
                path.push(l.site(p));
                x = p;
            }
            path.reverse();
            return Ok(BfsRepair { v: Some(t), probes, path });
        }
        for v in l.neighbor_indices(u) {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            probes += 1;
            examine(v);
            if l.open[v] {
                parent.insert(v, u);
                queue.push_back(v);
            }
        }
    }
    Ok(BfsRepair { v: None, probes, path: Vec::new() })
}

/// Routes from `src` to `dst`. `probes` counts the distinct sites whose status
/// was examined, by next-site checks or BFS repairs; the endpoints are known
/// open and reporting a repair path back is free.
pub fn route(l: &LatticeWindow, src: TileId, dst: TileId) -> Result<RouteTrace> {
    for (name, t) in [("source", src), ("destination", dst)] {
        if !l.is_open(t) {
            return param(format!("{name} {t} is not an open site"));
        }
    }
    let mut trace = RouteTrace {
        src,
        dst,
        outcome: Outcome::Delivered,
        lattice_hops: vec![src],
        node_hops: Vec::new(),
        probes: 0,
        bfs_invocations: 0,
    };
    let mut probed = vec![false; l.len()];
    let mut count = 0u64;
    let mut mark = |k: usize| {
        if !probed[k] {
            probed[k] = true;
            count += 1;
        }
    };
    let mut curr = src;
    while curr != dst {
        let next = compute_next(curr, dst)?;
        if let Some(k) = l.index(next) {
            mark(k);
        }
        if l.is_open(next) {
            trace.lattice_hops.push(next);
            curr = next;
            continue;
        }
        trace.bfs_invocations += 1;
        let r = bfs_repair(l, curr, dst, &mut mark)?;
        match r.v {
            Some(v) => {
                trace.lattice_hops.extend_from_slice(&r.path[1..]);
                curr = v;
            }
            None => {
                trace.outcome = Outcome::Unreachable;
                break;
            }
        }
    }
    trace.probes = count;
    Ok(trace)
}

/// Node path realising a lattice path in the subnet: rep, relays, rep, ...
pub fn expand_route(lattice_path: &[TileId], subnet: &SubnetGraph) -> Result<Vec<u32>> {
    let Some(&first) = lattice_path.first() else {
        return Ok(Vec::new());
    };
    let roles_of = |t: TileId| {
        subnet
            .roles_for(t)
            .ok_or_else(|| SensError::Integrity(format!("tile {t} has no subnet roles")))
    };
    let mut nodes = vec![roles_of(first)?.rep];
    for w in lattice_path.windows(2) {
        let (a, b) = (roles_of(w[0])?, roles_of(w[1])?);
        let d = w[0]
            .direction_to(&w[1])
            .ok_or_else(|| SensError::Integrity(format!("tiles {} and {} are not adjacent", w[0], w[1])))?;
        let relay = |r: &crate::subnet::TileRoles, l| {
            r.relay(l)
                .ok_or_else(|| SensError::Integrity(format!("tile {} lacks relay {l}", r.tile)))
        };
        let (u, v) = cross_pair(subnet.kind, a, b, d);
        let hop = match subnet.kind {
            ModelKind::Udg => vec![u, v, b.rep],
            ModelKind::Nn => vec![
                relay(a, d.e_label())?,
                u,
                v,
                relay(b, d.opposite().e_label())?,
                b.rep,
            ],
        };
        nodes.extend(hop);
    }
    for w in nodes.windows(2) {
        if !subnet.has_edge(w[0], w[1]) {
            return Err(SensError::Integrity(format!(
                "expanded path uses {}-{}, which is not a subnet edge",
                w[0], w[1]
            )));
        }
    }
    Ok(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Provenance;

    fn grid(rows: &[&str]) -> LatticeWindow {
        let width = rows[0].len();
        let open = rows.iter().flat_map(|r| r.chars().map(|c| c == '1')).collect();
        LatticeWindow::new(width, rows.len(), open, TileId::new(0, 0), Provenance::CoupledFromTiles).unwrap()
    }

    #[test]
    fn next_steps() {
        let t = TileId::new;
        assert_eq!(compute_next(t(0, 0), t(3, 2)).unwrap(), t(1, 0));
        assert_eq!(compute_next(t(3, 0), t(3, 2)).unwrap(), t(3, 1));
        assert_eq!(compute_next(t(5, 5), t(4, 5)).unwrap(), t(4, 5));
        assert!(compute_next(t(1, 1), t(1, 1)).is_err());
    }

    #[test]
    fn open_lattice_route() {
        let l = grid(&["1111"; 3]);
        let r = route(&l, TileId::new(0, 0), TileId::new(3, 2)).unwrap();
        assert_eq!(r.outcome, Outcome::Delivered);
        assert_eq!(r.hop_count(), 5);
        assert_eq!(r.probes, 5);
        assert_eq!(r.bfs_invocations, 0);
    }

    #[test]
    fn bfs_to_open_next_site() {
        let l = grid(&["111"]);
        let r = dist_bfs(&l, TileId::new(0, 0), TileId::new(2, 0)).unwrap();
        assert_eq!(r.v, Some(TileId::new(1, 0)));
        assert_eq!(r.path.len(), 2);
    }

    #[test]
    fn corner_blockage_detour() {
        // Rows are j = 0, 1; the corner (1,0) of the x-y path is closed.
        let l = grid(&["10", "11"]);
        let r = dist_bfs(&l, TileId::new(0, 0), TileId::new(1, 1)).unwrap();
        assert_eq!(r.v, Some(TileId::new(1, 1)));
        assert_eq!(r.path, vec![TileId::new(0, 0), TileId::new(0, 1), TileId::new(1, 1)]);
    }

    #[test]
    fn different_cluster_is_unreachable() {
        let l = grid(&["110", "000", "011"]);
        let r = dist_bfs(&l, TileId::new(1, 0), TileId::new(2, 2)).unwrap();
        assert_eq!(r.v, None);
        // Every site adjacent to the two-site cluster gets probed.
        assert_eq!(r.probes, 4);
        let t = route(&l, TileId::new(0, 0), TileId::new(2, 2)).unwrap();
        assert_eq!(t.outcome, Outcome::Unreachable);
        assert!(route(&l, TileId::new(0, 1), TileId::new(2, 2)).is_err());
    }
}
