//! Cartesian and warped products `[a, b] ×_w X` as discrete metric measure
//! spaces on a grid of (level, base vertex) nodes.
//!
//! Levels where `w_d` vanishes are collapsed to a single apex node before
//! any edges are created. Edge lengths follow the warped line element
//! `sqrt(dt² + w_d(t)² dx²)`:
//!
//! * vertical `(i, x)–(i+1, x)`: `Δt`;
//! * horizontal `(i, x)–(i, y)` for base-adjacent `x, y`: `w_d(t_i) ℓ(x, y)`;
//! * slanted `(i, x)–(i+k, y)`: `sqrt((kΔt)² + w̄² d(x, y)²)` with `w̄` the
//!   trapezoid mean of `w_d` over the spanned levels.
//!
//! Node weights are `w_m(t_i) Δt_i m_X(x)` with half weights on the two
//! boundary levels.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{is_zero, WarpProfile};
use crate::space::{Edge, MetricMeasureSpace};

/// Which slanted edges the product graph carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stencil {
    /// Vertical and horizontal edges only.
    Axis,
    /// Axis edges plus one-level diagonals to base neighbours.
    Diagonal,
    /// Edges from `(i, x)` to `(i+k, y)` for `k <= level_span` and `y`
    /// within `base_hops` hops of `x`, keeping only primitive `(k, hops)`.
    Fan { level_span: usize, base_hops: usize },
}

impl Stencil {
    /// Fan used for distance computations on the product graph.
    pub const DISTANCE: Stencil = Stencil::Fan {
        level_span: 12,
        base_hops: 4,
    };

    fn spans(self) -> (usize, usize) {
        match self {
            Stencil::Axis => (1, 0),
            Stencil::Diagonal => (1, 1),
            Stencil::Fan {
                level_span,
                base_hops,
            } => (level_span.max(1), base_hops),
        }
    }
}

impl Default for Stencil {
    fn default() -> Self {
        Stencil::Diagonal
    }
}

/// Quotient class of a product node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeClass {
    /// A whole fiber collapsed to one point (`w_d(t_level) = 0`).
    Apex { level: usize },
    Regular { level: usize, base: usize },
}

impl NodeClass {
    pub fn level(self) -> usize {
        match self {
            NodeClass::Apex { level } | NodeClass::Regular { level, .. } => level,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeRef {
    pub id: usize,
    pub t: f64,
    pub class: NodeClass,
}

/// Product grid with warped edge lengths, apex quotient, and `m_w`.
#[derive(Debug, Clone)]
pub struct WarpedProduct {
    base: MetricMeasureSpace,
    profile: WarpProfile,
    stencil: Stencil,
    node_table: Vec<usize>,
    node_class: Vec<NodeClass>,
    level_ranges: Vec<Range<usize>>,
    apex_levels: Vec<usize>,
    graph: MetricMeasureSpace,
    cartesian: bool,
}

/// The Cartesian product: a warped product with `w_d = w_m = 1`.
pub type ProductSpace = WarpedProduct;

/// `I × X` with `d_c = sqrt(dt² + d_X²)` and `m_c = L¹ × m`, diagonal stencil.
pub fn build_cartesian(
    base: &MetricMeasureSpace,
    interval: (f64, f64),
    levels: usize,
) -> Result<ProductSpace> {
    build_cartesian_with(base, interval, levels, Stencil::Diagonal)
}

pub fn build_cartesian_with(
    base: &MetricMeasureSpace,
    interval: (f64, f64),
    levels: usize,
    stencil: Stencil,
) -> Result<ProductSpace> {
    let profile = WarpProfile::flat(interval, levels)?;
    let mut p = build_warped(base, &profile, stencil)?;
    p.cartesian = true;
    Ok(p)
}

/// Builds `I ×_w X` from a base space and a compatible profile.
pub fn build_warped(
    base: &MetricMeasureSpace,
    profile: &WarpProfile,
    stencil: Stencil,
) -> Result<WarpedProduct> {
    profile.check_compatibility()?;
    let n = base.vertex_count();
    let m = profile.grid_count();
    let wd = profile.samples_wd();
    let wm = profile.samples_wm();
    let dt = profile.step();

    // collapse zero-length fibers
    let mut dsu = DisjointSets::new(m * n);
    for i in (0..m).filter(|&i| is_zero(wd[i])) {
        for e in base.edges() {
            dsu.union(i * n + e.u, i * n + e.v);
        }
    }
    let mut node_table = vec![usize::MAX; m * n];
    let mut node_class = Vec::new();
    let mut level_ranges = Vec::with_capacity(m);
    let mut root_id = vec![usize::MAX; m * n];
    for i in 0..m {
        let start = node_class.len();
        for j in 0..n {
            let root = dsu.find(i * n + j);
            if root_id[root] == usize::MAX {
                root_id[root] = node_class.len();
                node_class.push(if is_zero(wd[i]) {
                    NodeClass::Apex { level: i }
                } else {
                    NodeClass::Regular { level: i, base: j }
                });
            }
            node_table[i * n + j] = root_id[root];
        }
        level_ranges.push(start..node_class.len());
    }
    let apex_levels: Vec<usize> = (0..m).filter(|&i| is_zero(wd[i])).collect();
    let node_count = node_class.len();

    let mut measure = vec![0.0; node_count];
    for i in 0..m {
        let weight = if i == 0 || i + 1 == m { 0.5 * dt } else { dt };
        for j in 0..n {
            measure[node_table[i * n + j]] += wm[i] * weight * base.measure()[j];
        }
    }

    // prefix sums of the trapezoid integral of w_d over levels
    let mut cum = vec![0.0; m];
    for i in 1..m {
        cum[i] = cum[i - 1] + 0.5 * (wd[i - 1] + wd[i]);
    }

    let (level_span, base_hops) = stencil.spans();
    let hop_lists: Vec<Vec<(usize, usize, f64)>> = (0..n)
        .map(|x| {
            if base_hops == 0 {
                return Vec::new();
            }
            let far = if base_hops > 1 {
                Some(base.single_source(x))
            } else {
                None
            };
            base.within_hops(x, base_hops)
                .into_iter()
                .map(|(y, h)| {
                    let len = if h == 1 {
                        edge_length(base, x, y)
                    } else {
                        far.as_ref().expect("distances for multi-hop pairs")[y]
                    };
                    (y, h, len)
                })
                .collect()
        })
        .collect();

    let node = |i: usize, j: usize| node_table[i * n + j];
    let mut raw: Vec<(usize, usize, f64)> = Vec::new();
    let mut push = |u: usize, v: usize, len: f64| {
        if u != v {
            raw.push((u.min(v), u.max(v), len));
        }
    };
    for i in 0..m {
        if !is_zero(wd[i]) {
            for e in base.edges() {
                push(node(i, e.u), node(i, e.v), wd[i] * e.length);
            }
        }
        for j in 0..n {
            if i + 1 < m {
                push(node(i, j), node(i + 1, j), dt);
            }
        }
        for k in 1..=level_span {
            if i + k >= m {
                break;
            }
            let wbar = (cum[i + k] - cum[i]) / k as f64;
            let rise = k as f64 * dt;
            for x in 0..n {
                for &(y, h, len) in &hop_lists[x] {
                    if gcd(k, h) != 1 {
                        continue;
                    }
                    push(node(i, x), node(i + k, y), rise.hypot(wbar * len));
                }
            }
        }
    }
    raw.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
    raw.dedup_by(|later, first| later.0 == first.0 && later.1 == first.1);
    let edges = raw
        .into_iter()
        .map(|(u, v, length)| Edge { u, v, length })
        .collect();

    let graph = MetricMeasureSpace::with_nonnegative_measure(
        format!("{}-warped-M{m}", base.name()),
        node_count,
        edges,
        measure,
    )?;
    Ok(WarpedProduct {
        base: base.clone(),
        profile: profile.clone(),
        stencil,
        node_table,
        node_class,
        level_ranges,
        apex_levels,
        graph,
        cartesian: false,
    })
}

fn edge_length(base: &MetricMeasureSpace, x: usize, y: usize) -> f64 {
    base.neighbors(x)
        .iter()
        .filter(|(v, _)| *v == y)
        .map(|(_, l)| *l)
        .fold(f64::INFINITY, f64::min)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl WarpedProduct {
    pub fn base(&self) -> &MetricMeasureSpace {
        &self.base
    }

    pub fn profile(&self) -> &WarpProfile {
        &self.profile
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    pub fn is_cartesian(&self) -> bool {
        self.cartesian
    }

    /// The quotient graph; vertex weights are `m_w`.
    pub fn graph(&self) -> &MetricMeasureSpace {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.node_class.len()
    }

    pub fn level_count(&self) -> usize {
        self.profile.grid_count()
    }

    pub fn measure(&self) -> &[f64] {
        self.graph.measure()
    }

    pub fn total_measure(&self) -> f64 {
        self.graph.total_measure()
    }

    pub fn apex_levels(&self) -> &[usize] {
        &self.apex_levels
    }

    pub fn is_apex_level(&self, level: usize) -> bool {
        is_zero(self.profile.samples_wd()[level])
    }

    /// Node id of `(level, base vertex)` without range checks.
    #[inline]
    pub fn node(&self, level: usize, base: usize) -> usize {
        self.node_table[level * self.base.vertex_count() + base]
    }

    pub fn node_lookup(&self, level: usize, base: usize) -> Result<NodeRef> {
        if level >= self.level_count() || base >= self.base.vertex_count() {
            return Err(Error::OutOfRange(format!(
                "(level {level}, base vertex {base}) outside {} x {}",
                self.level_count(),
                self.base.vertex_count()
            )));
        }
        let id = self.node(level, base);
        Ok(NodeRef {
            id,
            t: self.profile.level(level),
            class: self.node_class[id],
        })
    }

    pub fn node_class(&self, id: usize) -> NodeClass {
        self.node_class[id]
    }

    pub fn node_level(&self, id: usize) -> usize {
        self.node_class[id].level()
    }

    /// `π^I` of a node.
    pub fn node_t(&self, id: usize) -> f64 {
        self.profile.level(self.node_level(id))
    }

    /// Base vertex of a regular node; apex nodes report `None`.
    pub fn node_base(&self, id: usize) -> Option<usize> {
        match self.node_class[id] {
            NodeClass::Regular { base, .. } => Some(base),
            NodeClass::Apex { .. } => None,
        }
    }

    /// Node ids living on a level (contiguous).
    pub fn level_nodes(&self, level: usize) -> Range<usize> {
        self.level_ranges[level].clone()
    }

    /// Exports the graph as a space file plus a `node,level,base_vertex,t`
    /// table listing every (level, base vertex) pair and its node.
    ///
    /// Apex nodes of a vanishing `w_m` carry zero mass, so such an export
    /// does not load back as a base space.
    pub fn export(&self, space_path: impl AsRef<Path>, table_path: impl AsRef<Path>) -> Result<()> {
        let space_path = space_path.as_ref();
        let text = serde_json::to_string_pretty(&self.graph.to_file())?;
        std::fs::write(space_path, text).map_err(|e| Error::io(space_path, e))?;
        let table_path = table_path.as_ref();
        let mut w = csv::Writer::from_path(table_path)?;
        w.write_record(["node", "level", "base_vertex", "t"])?;
        for i in 0..self.level_count() {
            for j in 0..self.base.vertex_count() {
                w.write_record(&[
                    self.node(i, j).to_string(),
                    i.to_string(),
                    j.to_string(),
                    format!("{:e}", self.profile.level(i)),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(table_path, e))
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so ids follow (level, base) order
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{generate, Generator};
    use std::f64::consts::{PI, TAU};

    fn circle(n: usize, c: f64) -> MetricMeasureSpace {
        generate(&Generator::Circle { n, circumference: c }).unwrap()
    }

    #[test]
    fn unit_square_from_two_point_interval() {
        let base = generate(&Generator::Interval { n: 2, length: 1.0 }).unwrap();
        let p = build_cartesian(&base, (0.0, 1.0), 2).unwrap();
        assert_eq!(p.node_count(), 4);
        let d = p.graph().single_source(p.node(0, 0));
        assert_eq!(d[p.node(1, 1)], 2f64.sqrt());
        assert_eq!(d[p.node(1, 0)], 1.0);
        assert!((p.total_measure() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cartesian_total_measure_is_fubini() {
        let base = circle(10, 3.0);
        let p = build_cartesian(&base, (-1.0, 1.5), 7).unwrap();
        assert!((p.total_measure() - 2.5 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn cone_collapses_apex_level() {
        let base = circle(64, TAU);
        let p = build_warped(&base, &WarpProfile::cone(16).unwrap(), Stencil::Diagonal).unwrap();
        assert_eq!(p.apex_levels(), &[0]);
        assert_eq!(p.node_count(), 1 + 15 * 64);
        let apex = p.node_lookup(0, 0).unwrap();
        for j in 0..64 {
            assert_eq!(p.node_lookup(0, j).unwrap().id, apex.id);
        }
        assert_eq!(apex.t, 0.0);
        assert_eq!(apex.class, NodeClass::Apex { level: 0 });
        assert_eq!(p.measure()[apex.id], 0.0);
        // trapezoid rule is exact for w_m(t) = t
        assert!((p.total_measure() - PI).abs() < 1e-12);
    }

    #[test]
    fn suspension_has_two_apices() {
        let base = circle(32, TAU);
        let p = build_warped(&base, &WarpProfile::suspension(33).unwrap(), Stencil::Diagonal).unwrap();
        assert_eq!(p.apex_levels(), &[0, 32]);
        assert_eq!(p.node_count(), 2 + 31 * 32);
        // ∫ sin t dt · 2π = 4π up to the trapezoid error
        assert!((p.total_measure() - 4.0 * PI).abs() < 4.0 * PI * 2e-3);
    }

    #[test]
    fn cylinder_keeps_every_node() {
        let base = circle(12, 1.0);
        let p = build_warped(&base, &WarpProfile::flat((0.0, 1.0), 9).unwrap(), Stencil::Axis).unwrap();
        assert_eq!(p.node_count(), 9 * 12);
        let mut ids: Vec<usize> = (0..9)
            .flat_map(|i| (0..12).map(move |j| (i, j)))
            .map(|(i, j)| p.node(i, j))
            .collect();
        ids.dedup();
        assert_eq!(ids.len(), 9 * 12);
        assert!(p.node_lookup(9, 0).is_err());
        assert!(p.node_lookup(0, 12).is_err());
    }

    #[test]
    fn edge_lengths_follow_the_line_element() {
        let base = circle(8, TAU);
        let profile = WarpProfile::cone(5).unwrap();
        let p = build_warped(&base, &profile, Stencil::Diagonal).unwrap();
        let dt = profile.step();
        let ell = TAU / 8.0;
        let len = |u: usize, v: usize| {
            p.graph()
                .neighbors(u)
                .iter()
                .find(|(w, _)| *w == v)
                .map(|(_, l)| *l)
        };
        assert_eq!(len(p.node(2, 3), p.node(3, 3)), Some(dt));
        assert_eq!(len(p.node(2, 3), p.node(2, 4)), Some(profile.level(2) * ell));
        let wbar = 0.5 * (profile.level(2) + profile.level(3));
        let diag = len(p.node(2, 3), p.node(3, 4)).unwrap();
        assert!((diag - (dt * dt + wbar * wbar * ell * ell).sqrt()).abs() < 1e-15);
        // no horizontal edges at the apex; the apex connects only upwards
        let apex = p.node(0, 0);
        assert!(p
            .graph()
            .neighbors(apex)
            .iter()
            .all(|(v, _)| p.node_level(*v) == 1));
    }

    #[test]
    fn fan_edges_use_trapezoid_mean_and_primitive_spans() {
        let base = circle(16, TAU);
        let profile = WarpProfile::cone(9).unwrap();
        let p = build_warped(&base, &profile, Stencil::Fan { level_span: 3, base_hops: 2 }).unwrap();
        let dt = profile.step();
        let ell = TAU / 16.0;
        let find = |u: usize, v: usize| {
            p.graph()
                .neighbors(u)
                .iter()
                .find(|(w, _)| *w == v)
                .map(|(_, l)| *l)
        };
        // (k, h) = (3, 2): mean of t over [t_2, t_5]
        let wbar = 0.5 * (profile.level(2) + profile.level(5));
        let expect = (3.0 * dt).hypot(wbar * 2.0 * ell);
        let got = find(p.node(2, 0), p.node(5, 2)).unwrap();
        assert!((got - expect).abs() < 1e-14);
        // (2, 2) is not primitive
        assert_eq!(find(p.node(2, 0), p.node(4, 2)), None);
        // (2, 0) is not primitive either
        assert_eq!(find(p.node(2, 0), p.node(4, 0)), None);
    }

    #[test]
    fn projection_to_interval_is_one_lipschitz() {
        let base = circle(24, TAU);
        let p = build_warped(&base, &WarpProfile::suspension(20).unwrap(), Stencil::DISTANCE).unwrap();
        for src in [0, 7, 100, p.node_count() - 1] {
            let d = p.graph().single_source(src);
            for (v, dv) in d.iter().enumerate() {
                assert!(*dv + 1e-12 >= (p.node_t(src) - p.node_t(v)).abs());
            }
        }
    }

    #[test]
    fn incompatible_profile_is_rejected() {
        use crate::profile::WarpFn;
        let profile =
            WarpProfile::new((0.0, 1.0), 5, WarpFn::identity(), WarpFn::Constant(1.0)).unwrap();
        let err = build_warped(&circle(6, 1.0), &profile, Stencil::Diagonal).unwrap_err();
        assert!(matches!(err, Error::Compatibility { .. }));
    }

    fn cylinder_errors(stencil: Stencil) -> (f64, f64) {
        use rand::{Rng, SeedableRng};
        let base = circle(64, 1.0);
        let p = build_warped(&base, &WarpProfile::flat((0.0, 1.0), 64).unwrap(), stencil).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (mut worst, mut mean) = (0.0f64, 0.0);
        let mut count = 0;
        while count < 100 {
            let (i1, j1) = (rng.gen_range(0..64), rng.gen_range(0..64));
            let (i2, j2) = (rng.gen_range(0..64), rng.gen_range(0..64));
            if (i1, j1) == (i2, j2) {
                continue;
            }
            let g = p.graph().single_source(p.node(i1, j1))[p.node(i2, j2)];
            let dx = base.single_source(j1)[j2];
            let exact = (p.profile().level(i1) - p.profile().level(i2)).hypot(dx);
            let err = g / exact - 1.0;
            assert!(err > -1e-12, "graph distance below the continuum value");
            worst = worst.max(err);
            mean += err / 100.0;
            count += 1;
        }
        (worst, mean)
    }

    #[test]
    fn cylinder_distances_converge_with_fan_stencil() {
        let (worst, _) = cylinder_errors(Stencil::DISTANCE);
        assert!(worst <= 0.02, "worst relative error {worst}");
    }

    #[test]
    fn cylinder_diagonal_stencil_error_is_eight_direction_bound() {
        // an 8-neighbour grid overestimates by at most sqrt(4 - 2√2) - 1 on
        // square cells; cells here are 1/63 × 1/64
        let (worst, mean) = cylinder_errors(Stencil::Diagonal);
        assert!(worst <= 0.086, "worst relative error {worst}");
        assert!(mean > 0.02, "mean relative error {mean}");
    }
}
