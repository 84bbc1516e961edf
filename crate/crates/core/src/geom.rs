//! Points, sampling windows, homogeneous Poisson sampling and a uniform-grid
//! spatial index with exact range and k-nearest queries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn offset(&self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy)
    }
}

/// Axis-aligned analysis window. Points are sampled over the window grown by
/// `margin` on every side; analysis is restricted to the unpadded part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub margin: f64,
}

impl Window {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, margin: f64) -> Result<Self> {
        let w = Self {
            x_min,
            y_min,
            x_max,
            y_max,
            margin,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.x_min, self.y_min, self.x_max, self.y_max, self.margin];
        if all.iter().any(|v| !v.is_finite()) {
            return param("window bounds must be finite");
        }
        if !(self.x_max > self.x_min && self.y_max > self.y_min) {
            return param(format!(
                "window must have x_max > x_min and y_max > y_min, got [{}, {}] x [{}, {}]",
                self.x_min, self.x_max, self.y_min, self.y_max
            ));
        }
        if self.margin < 0.0 {
            return param(format!("window margin must be >= 0, got {}", self.margin));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// The sampled region: the window grown by its margin, with no margin of its own.
    pub fn padded(&self) -> Window {
        Window {
            x_min: self.x_min - self.margin,
            y_min: self.y_min - self.margin,
            x_max: self.x_max + self.margin,
            y_max: self.y_max + self.margin,
            margin: 0.0,
        }
    }

    pub fn padded_area(&self) -> f64 {
        self.padded().area()
    }

    /// Closed containment in the unpadded window.
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn contains_padded(&self, p: &Point) -> bool {
        self.padded().contains(p)
    }
}

/// A sampled Poisson field. Node ids are the indices into `points`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Point>,
    pub density: f64,
    pub seed: u64,
    pub window: Window,
}

impl PointSet {
    /// Wraps explicit coordinates (fixtures, imports). Density is informational.
    pub fn from_points(points: Vec<Point>, window: Window) -> Result<Self> {
        window.validate()?;
        if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| !p.is_finite()) {
            return param(format!("point {i} has non-finite coordinates {p:?}"));
        }
        if let Some((i, _)) = points
            .iter()
            .enumerate()
            .find(|(_, p)| !window.contains_padded(p))
        {
            return param(format!("point {i} lies outside the padded window"));
        }
        let density = points.len() as f64 / window.padded_area();
        Ok(Self {
            points,
            density,
            seed: 0,
            window,
        })
    }

    /// Fixture helper: bounding window of the points with unit padding.
    pub fn from_coords(coords: &[(f64, f64)]) -> Result<Self> {
        let points: Vec<Point> = coords.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let (mut x0, mut y0, mut x1, mut y1) = (0.0f64, 0.0f64, 1.0f64, 1.0f64);
        for p in &points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        Self::from_points(points, Window::new(x0 - 1.0, y0 - 1.0, x1 + 1.0, y1 + 1.0, 0.0)?)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, id: u32) -> Point {
        self.points[id as usize]
    }
}

/// SplitMix64 finaliser applied to a (master, index) pair: the substream seed
/// for trial `index` of a run seeded with `master`.
pub fn substream_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Homogeneous Poisson process of intensity `density` over the padded window:
/// a Poisson total count, then that many independent uniform positions.
pub fn sample_poisson(window: &Window, density: f64, seed: u64) -> Result<PointSet> {
    window.validate()?;
    if !(density >= 0.0) || !density.is_finite() {
        return param(format!("density must be finite and >= 0, got {density}"));
    }
    let mut rng = rng_from_seed(seed);
    let padded = window.padded();
    let mean = density * padded.area();
    let count = if mean > 0.0 {
        let poisson = Poisson::new(mean)
            .map_err(|e| crate::SensError::Parameter(format!("poisson mean {mean}: {e}")))?;
        poisson.sample(&mut rng) as usize
    } else {
        0
    };
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let x = padded.x_min + rng.random::<f64>() * padded.width();
        let y = padded.y_min + rng.random::<f64>() * padded.height();
        points.push(Point::new(x, y));
    }
    Ok(PointSet {
        points,
        density,
        seed,
        window: *window,
    })
}

/// Uniform grid over the points' bounding box, stored as a dense CSR table.
/// Cell `(cx, cy)` holds the points with `floor(x / cell_size) == cx` (and
/// likewise for y), so a point on a cell's upper edge belongs to the next cell.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    cell_size: f64,
    points: Vec<Point>,
    origin: (i64, i64),
    dims: (usize, usize),
    starts: Vec<u32>,
    ids: Vec<u32>,
}

pub fn build_index(points: &PointSet, cell_size: f64) -> Result<SpatialIndex> {
    SpatialIndex::new(&points.points, cell_size)
}

impl SpatialIndex {
    pub fn new(points: &[Point], cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return param(format!("cell_size must be > 0, got {cell_size}"));
        }
        if points.is_empty() {
            return Ok(Self {
                cell_size,
                points: Vec::new(),
                origin: (0, 0),
                dims: (0, 0),
                starts: vec![0],
                ids: Vec::new(),
            });
        }
        let cell = |v: f64| (v / cell_size).floor() as i64;
        let (mut cx0, mut cy0, mut cx1, mut cy1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
        for p in points {
            let (cx, cy) = (cell(p.x), cell(p.y));
            cx0 = cx0.min(cx);
            cy0 = cy0.min(cy);
            cx1 = cx1.max(cx);
            cy1 = cy1.max(cy);
        }
        let dims = ((cx1 - cx0 + 1) as usize, (cy1 - cy0 + 1) as usize);
        let ncells = dims.0 * dims.1;
        let slot = |p: &Point| {
            let (cx, cy) = (cell(p.x) - cx0, cell(p.y) - cy0);
            cy as usize * dims.0 + cx as usize
        };
        let mut counts = vec![0u32; ncells + 1];
        for p in points {
            counts[slot(p) + 1] += 1;
        }
        for c in 1..=ncells {
            counts[c] += counts[c - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut ids = vec![0u32; points.len()];
        for (id, p) in points.iter().enumerate() {
            let s = slot(p);
            ids[fill[s] as usize] = id as u32;
            fill[s] += 1;
        }
        Ok(Self {
            cell_size,
            points: points.to_vec(),
            origin: (cx0, cy0),
            dims,
            starts,
            ids,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cell_of(&self, p: &Point) -> (i64, i64) {
        (
            (p.x / self.cell_size).floor() as i64,
            (p.y / self.cell_size).floor() as i64,
        )
    }

    /// Ids stored in cell `(cx, cy)`, in ascending id order.
    pub fn bucket(&self, cx: i64, cy: i64) -> &[u32] {
        let (lx, ly) = (cx - self.origin.0, cy - self.origin.1);
        if lx < 0 || ly < 0 || lx as usize >= self.dims.0 || ly as usize >= self.dims.1 {
            return &[];
        }
        let s = ly as usize * self.dims.0 + lx as usize;
        &self.ids[self.starts[s] as usize..self.starts[s + 1] as usize]
    }

    /// Non-empty buckets with their cell coordinates.
    pub fn buckets(&self) -> impl Iterator<Item = ((i64, i64), &[u32])> + '_ {
        let (w, h) = self.dims;
        (0..w * h).filter_map(move |s| {
            let ids = &self.ids[self.starts[s] as usize..self.starts[s + 1] as usize];
            (!ids.is_empty()).then(|| {
                (
                    ((s % w) as i64 + self.origin.0, (s / w) as i64 + self.origin.1),
                    ids,
                )
            })
        })
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets().count()
    }

    /// Ids within closed Euclidean distance `r` of `center`, ascending.
    pub fn range_query(&self, center: &Point, r: f64) -> Result<Vec<u32>> {
        if !(r >= 0.0) {
            return param(format!("query radius must be >= 0, got {r}"));
        }
        let mut out = Vec::new();
        self.for_each_within(center, r, |id| out.push(id));
        out.sort_unstable();
        Ok(out)
    }

    pub(crate) fn for_each_within(&self, center: &Point, r: f64, mut f: impl FnMut(u32)) {
        if self.points.is_empty() {
            return;
        }
        let r = r.min(1e300);
        let cx0 = ((center.x - r) / self.cell_size).floor() as i64;
        let cx1 = ((center.x + r) / self.cell_size).floor() as i64;
        let cy0 = ((center.y - r) / self.cell_size).floor() as i64;
        let cy1 = ((center.y + r) / self.cell_size).floor() as i64;
        let cx0 = cx0.max(self.origin.0);
        let cy0 = cy0.max(self.origin.1);
        let cx1 = cx1.min(self.origin.0 + self.dims.0 as i64 - 1);
        let cy1 = cy1.min(self.origin.1 + self.dims.1 as i64 - 1);
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                for &id in self.bucket(cx, cy) {
                    if self.points[id as usize].dist(center) <= r {
                        f(id);
                    }
                }
            }
        }
    }

    /// The `k` ids closest to `q` (optionally skipping `exclude`), ordered by
    /// ascending distance with ties broken by ascending id. Returns every
    /// candidate when fewer than `k` exist.
    pub fn nearest_k(&self, q: &Point, k: usize, exclude: Option<u32>) -> Result<Vec<u32>> {
        if k == 0 {
            return param("k must be >= 1");
        }
        let available = self.points.len() - usize::from(exclude.is_some_and(|e| (e as usize) < self.points.len()));
        let want = k.min(available);
        if want == 0 {
            return Ok(Vec::new());
        }
        let (qx, qy) = self.cell_of(q);
        let (gx0, gy0) = self.origin;
        let (gx1, gy1) = (gx0 + self.dims.0 as i64 - 1, gy0 + self.dims.1 as i64 - 1);
        // Rings needed before the search block covers the whole grid.
        let max_ring = [qx - gx0, gx1 - qx, qy - gy0, gy1 - qy]
            .into_iter()
            .max()
            .unwrap_or(0)
            .max(0);
        let mut cand: Vec<(f64, u32)> = Vec::new();
        let push = |cx: i64, cy: i64, cand: &mut Vec<(f64, u32)>| {
            for &id in self.bucket(cx, cy) {
                if Some(id) != exclude {
                    cand.push((self.points[id as usize].dist(q), id));
                }
            }
        };
        let mut ring: i64 = 0;
        loop {
            if ring == 0 {
                push(qx, qy, &mut cand);
            } else {
                for cx in qx - ring..=qx + ring {
                    push(cx, qy - ring, &mut cand);
                    push(cx, qy + ring, &mut cand);
                }
                for cy in qy - ring + 1..qy + ring {
                    push(qx - ring, cy, &mut cand);
                    push(qx + ring, cy, &mut cand);
                }
            }
            if ring >= max_ring {
                break;
            }
            if cand.len() >= want {
                // Every unvisited point is at least `ring * cell_size` away.
                let cover = ring as f64 * self.cell_size;
                let (_, kth, _) = cand.select_nth_unstable_by(want - 1, cmp_cand);
                if kth.0 < cover {
                    break;
                }
            }
            ring += 1;
        }
        cand.sort_unstable_by(cmp_cand);
        cand.truncate(want);
        Ok(cand.into_iter().map(|(_, id)| id).collect())
    }

    pub fn point(&self, id: u32) -> Point {
        self.points[id as usize]
    }
}

fn cmp_cand(a: &(f64, u32), b: &(f64, u32)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}
