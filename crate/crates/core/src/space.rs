//! Finite metric measure spaces modelled as connected, positively weighted
//! graphs carrying the shortest-path metric and a per-vertex measure.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet, VecDeque};
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected edge, stored once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub length: f64,
}

/// On-disk representation of a space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceFile {
    pub name: String,
    pub vertices: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub measure: Vec<f64>,
    /// Planar embedding produced by the generators; not part of the metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
}

/// Dense all-pairs distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    size: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from per-source rows, symmetrising by taking the
    /// smaller of the two directed values.
    fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let size = rows.len();
        let mut values = vec![0.0; size * size];
        for i in 0..size {
            values[i * size + i] = 0.0;
            for j in (i + 1)..size {
                let d = rows[i][j].min(rows[j][i]);
                values[i * size + j] = d;
                values[j * size + i] = d;
            }
        }
        DistanceMatrix { size, values }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Counts violations of symmetry, zero diagonal and the triangle
    /// inequality, the latter with slack `rel_tol * max`.
    pub fn invariant_violations(&self, rel_tol: f64) -> usize {
        let n = self.size;
        let slack = rel_tol * self.max();
        let mut bad = 0;
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                bad += 1;
            }
            for j in 0..n {
                if self.get(i, j) != self.get(j, i) || self.get(i, j) < 0.0 {
                    bad += 1;
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                let ab = self.get(a, b);
                for c in 0..n {
                    if self.get(a, c) > ab + self.get(b, c) + slack {
                        bad += 1;
                    }
                }
            }
        }
        bad
    }
}

/// A finite metric measure space: a connected weighted graph with the
/// shortest-path distance and strictly positive vertex weights.
#[derive(Debug, Clone)]
pub struct MetricMeasureSpace {
    name: String,
    edges: Vec<Edge>,
    measure: Vec<f64>,
    positions: Option<Vec<[f64; 2]>>,
    adjacency: Vec<Vec<(usize, f64)>>,
    distance_cache: OnceLock<DistanceMatrix>,
}

impl MetricMeasureSpace {
    /// Validates and builds a space.
    pub fn new(
        name: impl Into<String>,
        vertex_count: usize,
        edges: Vec<Edge>,
        measure: Vec<f64>,
    ) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidParameter("vertex count must be positive".into()));
        }
        check_edges(vertex_count, &edges)?;
        if measure.len() != vertex_count {
            return Err(Error::Parse(format!(
                "measure has {} entries, expected {vertex_count}",
                measure.len()
            )));
        }
        for (vertex, &m) in measure.iter().enumerate() {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::NonpositiveMeasure { vertex });
            }
        }
        Self::assemble(name.into(), vertex_count, edges, measure)
    }

    /// Product graphs may carry zero weights on levels where the measure
    /// warping vanishes, so only nonnegativity is enforced here.
    pub(crate) fn with_nonnegative_measure(
        name: impl Into<String>,
        vertex_count: usize,
        edges: Vec<Edge>,
        measure: Vec<f64>,
    ) -> Result<Self> {
        check_edges(vertex_count, &edges)?;
        debug_assert_eq!(measure.len(), vertex_count);
        for (vertex, &m) in measure.iter().enumerate() {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::NonpositiveMeasure { vertex });
            }
        }
        Self::assemble(name.into(), vertex_count, edges, measure)
    }

    fn assemble(
        name: String,
        vertex_count: usize,
        edges: Vec<Edge>,
        measure: Vec<f64>,
    ) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); vertex_count];
        for e in &edges {
            adjacency[e.u].push((e.v, e.length));
            adjacency[e.v].push((e.u, e.length));
        }
        // BFS from 0 for connectivity
        let mut seen = vec![false; vertex_count];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(vertex) = seen.iter().position(|s| !s) {
            return Err(Error::Disconnected { vertex });
        }
        Ok(MetricMeasureSpace {
            name,
            edges,
            measure,
            positions: None,
            adjacency,
            distance_cache: OnceLock::new(),
        })
    }

    pub fn with_positions(mut self, positions: Vec<[f64; 2]>) -> Result<Self> {
        if positions.len() != self.vertex_count() {
            return Err(Error::Parse(format!(
                "positions has {} entries, expected {}",
                positions.len(),
                self.vertex_count()
            )));
        }
        self.positions = Some(positions);
        Ok(self)
    }

    pub fn from_file(file: SpaceFile) -> Result<Self> {
        let edges = file
            .edges
            .iter()
            .map(|&(u, v, length)| Edge { u, v, length })
            .collect();
        let space = Self::new(file.name, file.vertices, edges, file.measure)?;
        match file.positions {
            Some(p) => space.with_positions(p),
            None => Ok(space),
        }
    }

    pub fn to_file(&self) -> SpaceFile {
        SpaceFile {
            name: self.name.clone(),
            vertices: self.vertex_count(),
            edges: self.edges.iter().map(|e| (e.u, e.v, e.length)).collect(),
            measure: self.measure.clone(),
            positions: self.positions.clone(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertex_count(&self) -> usize {
        self.measure.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn total_measure(&self) -> f64 {
        self.measure.iter().sum()
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    /// Copy of the space with every edge length multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidParameter(format!("scale factor {factor}")));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                length: e.length * factor,
                ..*e
            })
            .collect();
        let mut s = Self::with_nonnegative_measure(
            self.name.clone(),
            self.vertex_count(),
            edges,
            self.measure.clone(),
        )?;
        s.positions = self.positions.clone();
        Ok(s)
    }

    /// Exact single-source shortest-path distances (Dijkstra).
    pub fn single_source(&self, source: usize) -> Vec<f64> {
        self.bounded_single_source(source, f64::INFINITY)
    }

    /// Dijkstra that stops expanding once the frontier exceeds `radius`;
    /// entries beyond the radius are left at infinity.
    pub fn bounded_single_source(&self, source: usize, radius: f64) -> Vec<f64> {
        dijkstra(&self.adjacency, source, radius)
    }

    /// Distance rows for the requested sources, computed in parallel.
    pub fn shortest_paths(&self, sources: &[usize]) -> Vec<Vec<f64>> {
        sources.par_iter().map(|&s| self.single_source(s)).collect()
    }

    /// All-pairs distances, computed once and cached.
    pub fn distances(&self) -> &DistanceMatrix {
        self.distance_cache.get_or_init(|| {
            let all: Vec<usize> = (0..self.vertex_count()).collect();
            DistanceMatrix::from_rows(self.shortest_paths(&all))
        })
    }

    pub fn has_distance_cache(&self) -> bool {
        self.distance_cache.get().is_some()
    }

    /// Measure of the open ball `B_r(center)`.
    pub fn ball_measure(&self, center: usize, r: f64) -> f64 {
        match self.distance_cache.get() {
            Some(d) => ball_measure_from(d.row(center), &self.measure, r),
            None => ball_measure_from(&self.bounded_single_source(center, r), &self.measure, r),
        }
    }

    /// Hop distances up to `max_hops` from `source` (BFS), as (vertex, hops).
    pub fn within_hops(&self, source: usize, max_hops: usize) -> Vec<(usize, usize)> {
        let mut hops = vec![usize::MAX; self.vertex_count()];
        hops[source] = 0;
        let mut queue = VecDeque::from([source]);
        let mut out = Vec::new();
        while let Some(u) = queue.pop_front() {
            let h = hops[u];
            if h > 0 {
                out.push((u, h));
            }
            if h == max_hops {
                continue;
            }
            for &(v, _) in &self.adjacency[u] {
                if hops[v] == usize::MAX {
                    hops[v] = h + 1;
                    queue.push_back(v);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Sum of `measure[v]` over vertices with `distances[v] < r`.
pub fn ball_measure_from(distances: &[f64], measure: &[f64], r: f64) -> f64 {
    distances
        .iter()
        .zip(measure)
        .filter(|(d, _)| **d < r)
        .map(|(_, m)| m)
        .sum()
}

fn check_edges(n: usize, edges: &[Edge]) -> Result<()> {
    let mut seen = HashSet::with_capacity(edges.len());
    for e in edges {
        if e.u >= n || e.v >= n {
            return Err(Error::InvalidEdge {
                u: e.u,
                v: e.v,
                reason: format!("vertex id out of range (vertices = {n})"),
            });
        }
        if e.u == e.v {
            return Err(Error::InvalidEdge {
                u: e.u,
                v: e.v,
                reason: "self-loop".into(),
            });
        }
        if !(e.length.is_finite() && e.length > 0.0) {
            return Err(Error::NonpositiveEdgeLength { u: e.u, v: e.v });
        }
        if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
            return Err(Error::InvalidEdge {
                u: e.u,
                v: e.v,
                reason: "duplicate edge".into(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties broken by node id
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn dijkstra(adjacency: &[Vec<(usize, f64)>], source: usize, radius: f64) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adjacency.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if d > radius {
            // everything still queued is farther than the radius
            break;
        }
        for &(v, len) in &adjacency[u] {
            let nd = d + len;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapEntry { dist: nd, node: v });
            }
        }
    }
    if radius.is_finite() {
        for d in dist.iter_mut() {
            if *d > radius {
                *d = f64::INFINITY;
            }
        }
    }
    dist
}

/// Loads and validates a space file (JSON).
pub fn load_space(path: impl AsRef<Path>) -> Result<MetricMeasureSpace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_space(&text)
}

pub fn parse_space(text: &str) -> Result<MetricMeasureSpace> {
    let file: SpaceFile = serde_json::from_str(text)?;
    MetricMeasureSpace::from_file(file)
}

pub fn save_space(space: &MetricMeasureSpace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&space.to_file())?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Fixture factories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Circle { n: usize, circumference: f64 },
    Interval { n: usize, length: f64 },
    RandomGeometric { n: usize, radius: f64, seed: u64 },
}

const RADIUS_GROWTH: f64 = 1.2;
const MAX_RADIUS_RETRIES: usize = 50;

pub fn generate(generator: &Generator) -> Result<MetricMeasureSpace> {
    match *generator {
        Generator::Circle { n, circumference } => {
            if n < 3 || !(circumference.is_finite() && circumference > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "circle needs n >= 3 and circumference > 0 (got n = {n}, circumference = {circumference})"
                )));
            }
            let step = circumference / n as f64;
            let radius = circumference / std::f64::consts::TAU;
            let edges = (0..n)
                .map(|j| Edge {
                    u: j,
                    v: (j + 1) % n,
                    length: step,
                })
                .collect();
            let positions = (0..n)
                .map(|j| {
                    let theta = std::f64::consts::TAU * j as f64 / n as f64;
                    [radius * theta.cos(), radius * theta.sin()]
                })
                .collect();
            MetricMeasureSpace::new(format!("circle-n{n}"), n, edges, vec![step; n])?
                .with_positions(positions)
        }
        Generator::Interval { n, length } => {
            if n < 2 || !(length.is_finite() && length > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "interval needs n >= 2 and length > 0 (got n = {n}, length = {length})"
                )));
            }
            let step = length / (n - 1) as f64;
            let edges = (0..n - 1)
                .map(|j| Edge {
                    u: j,
                    v: j + 1,
                    length: step,
                })
                .collect();
            let mut measure = vec![step; n];
            measure[0] = 0.5 * step;
            measure[n - 1] = 0.5 * step;
            let positions = (0..n).map(|j| [j as f64 * step, 0.0]).collect();
            MetricMeasureSpace::new(format!("interval-n{n}"), n, edges, measure)?
                .with_positions(positions)
        }
        Generator::RandomGeometric { n, radius, seed } => {
            if n < 2 || !(radius.is_finite() && radius > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "random_geometric needs n >= 2 and radius > 0 (got n = {n}, radius = {radius})"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
            let mut r = radius;
            for _ in 0..=MAX_RADIUS_RETRIES {
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in (i + 1)..n {
                        let d = (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]);
                        if d < r && d > 0.0 {
                            edges.push(Edge {
                                u: i,
                                v: j,
                                length: d,
                            });
                        }
                    }
                }
                match MetricMeasureSpace::new(
                    format!("random-geometric-n{n}-s{seed}"),
                    n,
                    edges,
                    vec![1.0; n],
                ) {
                    Ok(space) => return space.with_positions(points),
                    Err(Error::Disconnected { .. }) => r *= RADIUS_GROWTH,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::InvalidParameter(format!(
                "random_geometric graph still disconnected after {MAX_RADIUS_RETRIES} radius increases"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn path3() -> MetricMeasureSpace {
        let edges = vec![
            Edge { u: 0, v: 1, length: 1.0 },
            Edge { u: 1, v: 2, length: 2.0 },
        ];
        MetricMeasureSpace::new("path", 3, edges, vec![1.0; 3]).unwrap()
    }

    #[test]
    fn path_distances_add_up() {
        let s = path3();
        assert_eq!(s.distances().get(0, 2), 3.0);
        assert!(s.has_distance_cache());
    }

    #[test]
    fn parse_reports_offending_elements() {
        let zero = r#"{"name":"z","vertices":2,"edges":[[0,1,0.0]],"measure":[1,1]}"#;
        let err = parse_space(zero).unwrap_err();
        assert_eq!(err.to_string(), "nonpositive edge length at edge (0,1)");

        let neg = r#"{"name":"m","vertices":2,"edges":[[0,1,1.0]],"measure":[1,-1]}"#;
        let err = parse_space(neg).unwrap_err();
        assert!(err.to_string().starts_with("nonpositive measure at vertex"));
        assert!(matches!(err, Error::NonpositiveMeasure { vertex: 1 }));

        let split = r#"{"name":"d","vertices":3,"edges":[[0,1,1.0]],"measure":[1,1,1]}"#;
        assert!(matches!(parse_space(split), Err(Error::Disconnected { vertex: 2 })));

        assert!(matches!(parse_space("{not json"), Err(Error::Parse(_))));
    }

    #[test]
    fn circle_generator() {
        let s = generate(&Generator::Circle { n: 4, circumference: 2.0 * PI }).unwrap();
        assert!((s.distances().get(0, 2) - PI).abs() < 1e-15);
        let s = generate(&Generator::Circle { n: 6, circumference: 6.0 }).unwrap();
        assert!((s.distances().get(0, 3) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn interval_generator_uses_trapezoid_weights() {
        let s = generate(&Generator::Interval { n: 3, length: 1.0 }).unwrap();
        assert_eq!(s.measure(), &[0.25, 0.5, 0.25]);
        assert_eq!(s.total_measure(), 1.0);
    }

    #[test]
    fn random_geometric_is_deterministic_and_connected() {
        let g = Generator::RandomGeometric { n: 50, radius: 0.05, seed: 7 };
        let a = generate(&g).unwrap();
        let b = generate(&g).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.vertex_count(), 50);
    }

    #[test]
    fn generator_parameter_ranges() {
        assert!(generate(&Generator::Circle { n: 2, circumference: 1.0 }).is_err());
        assert!(generate(&Generator::Interval { n: 1, length: 1.0 }).is_err());
        assert!(generate(&Generator::Interval { n: 3, length: -1.0 }).is_err());
        assert!(generate(&Generator::RandomGeometric { n: 5, radius: 0.0, seed: 1 }).is_err());
    }

    #[test]
    fn detour_beats_long_edge() {
        let edges = vec![
            Edge { u: 0, v: 1, length: 1.0 },
            Edge { u: 1, v: 2, length: 1.0 },
            Edge { u: 0, v: 2, length: 5.0 },
        ];
        let s = MetricMeasureSpace::new("tri", 3, edges, vec![1.0; 3]).unwrap();
        assert_eq!(s.single_source(0)[2], 2.0);
    }

    #[test]
    fn ball_measure_conventions() {
        let s = generate(&Generator::Interval { n: 101, length: 1.0 }).unwrap();
        let cell = 0.01;
        let m = s.ball_measure(50, 0.25);
        assert!((m - 0.5).abs() <= cell + 1e-12, "{m}");
        assert!((s.ball_measure(50, 10.0) - s.total_measure()).abs() < 1e-12);
        assert_eq!(s.ball_measure(50, 0.005), s.measure()[50]);
        // same answers once the cache exists
        s.distances();
        assert!((s.ball_measure(50, 0.25) - m).abs() < 1e-15);
    }

    #[test]
    fn within_hops_counts_hops() {
        let s = generate(&Generator::Circle { n: 8, circumference: 8.0 }).unwrap();
        let h = s.within_hops(0, 2);
        assert_eq!(h, vec![(1, 1), (2, 2), (6, 2), (7, 1)]);
    }
}
