//! Grid functions on product spaces, their partial and combined gradients,
//! metric slopes, the time discretisation `T_n`, cutoffs, and discrete
//! calculus rules.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::product::{NodeClass, Stencil, WarpedProduct};

/// One value per quotient node of a product.
#[derive(Debug, Clone)]
pub struct GridFunction<'p> {
    product: &'p WarpedProduct,
    values: Vec<f64>,
}

impl<'p> GridFunction<'p> {
    /// Wraps per-node values (indexed by node id).
    pub fn from_node_values(product: &'p WarpedProduct, values: Vec<f64>) -> Result<Self> {
        if values.len() != product.node_count() {
            return Err(Error::InvalidParameter(format!(
                "expected {} node values, got {}",
                product.node_count(),
                values.len()
            )));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at node {node}")));
        }
        Ok(GridFunction { product, values })
    }

    /// Samples `f(level, base vertex)`; collapsed fibers must agree.
    pub fn from_fn(product: &'p WarpedProduct, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let n = product.base().vertex_count();
        let mut values = vec![f64::NAN; product.node_count()];
        for i in 0..product.level_count() {
            for j in 0..n {
                let v = product.node(i, j);
                let x = f(i, j);
                if values[v].is_nan() {
                    values[v] = x;
                } else if !same_value(values[v], x) {
                    return Err(Error::QuotientInconsistent { node: v });
                }
            }
        }
        Self::from_node_values(product, values)
    }

    /// Builds a function from `(level, base vertex, value)` rows covering
    /// every grid point.
    pub fn from_table(product: &'p WarpedProduct, rows: &[(usize, usize, f64)]) -> Result<Self> {
        let n = product.base().vertex_count();
        let mut grid = vec![f64::NAN; product.level_count() * n];
        for &(i, j, x) in rows {
            product.node_lookup(i, j)?;
            grid[i * n + j] = x;
        }
        if let Some(k) = grid.iter().position(|x| x.is_nan()) {
            return Err(Error::InvalidParameter(format!(
                "no value for (level {}, base vertex {})",
                k / n,
                k % n
            )));
        }
        Self::from_fn(product, |i, j| grid[i * n + j])
    }

    pub fn from_spec(product: &'p WarpedProduct, spec: &FunctionSpec) -> Result<Self> {
        let positions = product.base().positions();
        let mut err = None;
        let f = Self::from_fn(product, |i, j| {
            let t = product.profile().level(i);
            match spec.eval(t, positions.map(|p| p[j])) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => f,
        }
    }

    pub fn product(&self) -> &'p WarpedProduct {
        self.product
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Value at grid point `(level, base vertex)`.
    pub fn at(&self, level: usize, base: usize) -> f64 {
        self.values[self.product.node(level, base)]
    }

    /// `Σ f² m` in node order.
    pub fn l2_norm_sq(&self) -> f64 {
        self.values
            .iter()
            .zip(self.product.measure())
            .map(|(f, m)| f * f * m)
            .sum()
    }

    pub fn l2_distance_sq(&self, other: &GridFunction<'_>) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(self.product.measure())
            .map(|((f, g), m)| (f - g) * (f - g) * m)
            .sum()
    }

    pub fn map(&self, mut op: impl FnMut(usize, f64) -> f64) -> GridFunction<'p> {
        GridFunction {
            product: self.product,
            values: self.values.iter().enumerate().map(|(v, &x)| op(v, x)).collect(),
        }
    }

    pub fn zip_with(&self, other: &GridFunction<'_>, mut op: impl FnMut(f64, f64) -> f64) -> GridFunction<'p> {
        GridFunction {
            product: self.product,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        }
    }

    /// Rows `(level, base vertex, value)` for every grid point.
    pub fn to_table(&self) -> Vec<(usize, usize, f64)> {
        let n = self.product.base().vertex_count();
        (0..self.product.level_count())
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, self.at(i, j)))
            .collect()
    }
}

fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Closed-form functions of `(t, x)`; `x` is the generator embedding of the
/// base vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    T,
    XCoordinateOfGenerator,
    YCoordinateOfGenerator,
    Constant {
        value: f64,
    },
    /// `sin(frequency · t)`
    SinT {
        #[serde(default = "one")]
        frequency: f64,
    },
    /// `sin(frequency · x-coordinate)`
    SinX {
        #[serde(default = "one")]
        frequency: f64,
    },
    /// `exp(-((t - center) / width)²)`
    Radial {
        center: f64,
        width: f64,
    },
    Product {
        factors: Vec<FunctionSpec>,
    },
}

fn one() -> f64 {
    1.0
}

impl FunctionSpec {
    pub fn eval(&self, t: f64, position: Option<[f64; 2]>) -> Result<f64> {
        let pos = || {
            position.ok_or_else(|| {
                Error::InvalidParameter("function needs base positions; the base space has none".into())
            })
        };
        Ok(match self {
            FunctionSpec::T => t,
            FunctionSpec::XCoordinateOfGenerator => pos()?[0],
            FunctionSpec::YCoordinateOfGenerator => pos()?[1],
            FunctionSpec::Constant { value } => *value,
            FunctionSpec::SinT { frequency } => (frequency * t).sin(),
            FunctionSpec::SinX { frequency } => (frequency * pos()?[0]).sin(),
            FunctionSpec::Radial { center, width } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidParameter(format!("radial width must be positive, got {width}")));
                }
                (-((t - center) / width).powi(2)).exp()
            }
            FunctionSpec::Product { factors } => {
                let mut acc = 1.0;
                for f in factors {
                    acc *= f.eval(t, position)?;
                }
                acc
            }
        })
    }
}

/// On-disk function: a closed form or a `[level, base, value]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionFile {
    Table { values: Vec<(usize, usize, f64)> },
    Closed(FunctionSpec),
}

pub fn load_function<'p>(path: impl AsRef<Path>, product: &'p WarpedProduct) -> Result<GridFunction<'p>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_function(&text, product)
}

pub fn parse_function<'p>(text: &str, product: &'p WarpedProduct) -> Result<GridFunction<'p>> {
    match serde_json::from_str::<FunctionFile>(text)? {
        FunctionFile::Table { values } => GridFunction::from_table(product, &values),
        FunctionFile::Closed(spec) => GridFunction::from_spec(product, &spec),
    }
}

pub fn save_function(f: &GridFunction<'_>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(&FunctionFile::Table { values: f.to_table() })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyMode {
    /// `|Df|_c² = |Df^{(t)}|² + |Df^{(x)}|²`
    Cartesian,
    /// `|Df|_w² = w_d⁻² |Df^{(t)}|² + |Df^{(x)}|²`
    Warped,
}

/// Per-node gradients and their `m`-weighted energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientField {
    pub mode: EnergyMode,
    pub partial_t: Vec<f64>,
    pub partial_x: Vec<f64>,
    /// Multiplier of `partial_x²` in `combined²`.
    pub weight: Vec<f64>,
    pub combined: Vec<f64>,
    pub slope: Vec<f64>,
    pub e_partial_t: f64,
    /// Includes the weight, so `e_combined = e_partial_t + e_partial_x`
    /// up to rounding.
    pub e_partial_x: f64,
    pub e_combined: f64,
    pub e_slope: f64,
}

impl GradientField {
    /// Nodes where `combined² ≠ weight·partial_x² + partial_t²` beyond
    /// rounding.
    pub fn identity_violations(&self) -> Vec<usize> {
        (0..self.combined.len())
            .filter(|&v| {
                let rhs = self.weight[v] * self.partial_x[v].powi(2) + self.partial_t[v].powi(2);
                (self.combined[v].powi(2) - rhs).abs() > 8.0 * f64::EPSILON * rhs
            })
            .collect()
    }
}

/// Max vertical and base difference quotients at every node.
pub fn partial_gradients(f: &GridFunction<'_>) -> (Vec<f64>, Vec<f64>) {
    let p = f.product();
    let base = p.base();
    let dt = p.profile().step();
    let m = p.level_count();
    let mut pt = vec![0.0f64; p.node_count()];
    let mut px = vec![0.0f64; p.node_count()];
    for i in 0..m {
        for j in 0..base.vertex_count() {
            let v = p.node(i, j);
            let fv = f.value(v);
            for i2 in [i.wrapping_sub(1), i + 1] {
                if i2 < m {
                    let q = (f.at(i2, j) - fv).abs() / dt;
                    pt[v] = pt[v].max(q);
                }
            }
            if let NodeClass::Regular { .. } = p.node_class(v) {
                for &(y, len) in base.neighbors(j) {
                    let q = (f.at(i, y) - fv).abs() / len;
                    px[v] = px[v].max(q);
                }
            }
        }
    }
    (pt, px)
}

/// `max |f(u) - f(v)| / len(u, v)` over graph neighbours.
pub fn slopes(f: &GridFunction<'_>) -> Vec<f64> {
    slopes_on(f.product().graph(), f.values())
}

fn slopes_on(graph: &crate::space::MetricMeasureSpace, values: &[f64]) -> Vec<f64> {
    (0..graph.vertex_count())
        .map(|v| {
            graph
                .neighbors(v)
                .iter()
                .map(|&(u, len)| (values[u] - values[v]).abs() / len)
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Partial gradients, combined gradient and slope with their energies.
pub fn bl_energy(f: &GridFunction<'_>, mode: EnergyMode) -> Result<GradientField> {
    let p = f.product();
    let (partial_t, partial_x) = partial_gradients(f);
    let wd = p.profile().samples_wd();
    let mut weight = vec![1.0; p.node_count()];
    if mode == EnergyMode::Warped {
        for (v, w) in weight.iter_mut().enumerate() {
            *w = match p.node_class(v) {
                NodeClass::Apex { .. } => {
                    if partial_x[v] != 0.0 {
                        return Err(Error::Internal(format!("apex node {v} has a base gradient")));
                    }
                    0.0
                }
                NodeClass::Regular { level, .. } => {
                    let w = wd[level];
                    if w <= 0.0 {
                        return Err(Error::Internal(format!(
                            "node {v} lies on a zero level of w_d but was not collapsed"
                        )));
                    }
                    1.0 / (w * w)
                }
            };
        }
    }
    let combined: Vec<f64> = (0..p.node_count())
        .map(|v| (weight[v] * partial_x[v] * partial_x[v] + partial_t[v] * partial_t[v]).sqrt())
        .collect();
    let slope = slopes(f);
    let mass = p.measure();
    let energy = |g: &dyn Fn(usize) -> f64| (0..p.node_count()).map(|v| g(v) * mass[v]).sum::<f64>();
    Ok(GradientField {
        mode,
        e_partial_t: energy(&|v| partial_t[v] * partial_t[v]),
        e_partial_x: energy(&|v| weight[v] * partial_x[v] * partial_x[v]),
        e_combined: energy(&|v| combined[v] * combined[v]),
        e_slope: energy(&|v| slope[v] * slope[v]),
        partial_t,
        partial_x,
        weight,
        combined,
        slope,
    })
}

/// The field in the mode natural to the product.
pub fn gradient_field(f: &GridFunction<'_>) -> GradientField {
    let mode = if f.product().is_cartesian() {
        EnergyMode::Cartesian
    } else {
        EnergyMode::Warped
    };
    bl_energy(f, mode).expect("products collapse every zero level of w_d")
}

/// `Σ lip(f)² m` with the max-neighbour slope.
pub fn slope_energy(f: &GridFunction<'_>) -> f64 {
    let mass = f.product().measure();
    slopes(f).iter().zip(mass).map(|(s, m)| s * s * m).sum()
}

/// `T_n f`: nodal values at `s_k = a + k(b-a)/n` are averages of `f` over
/// `[s_k, s_{k+1}]` (the last node reuses the last cell), interpolated by
/// hat functions back onto the levels.
pub fn time_discretize<'p>(f: &GridFunction<'p>, n: usize) -> Result<GridFunction<'p>> {
    let p = f.product();
    let m = p.level_count();
    if n == 0 || n > m - 1 {
        return Err(Error::OutOfRange(format!("n = {n} outside 1..={}", m - 1)));
    }
    let (a, b) = p.profile().interval();
    let h = p.profile().step();
    let cell = (b - a) / n as f64;
    let base = p.base();
    let nb = base.vertex_count();

    // average of the piecewise-linear interpolant over [lo, hi] (exact, so
    // the trapezoid rule when the cell ends sit on levels)
    let cell_average = |j: usize, lo: f64, hi: f64| -> f64 {
        let mut acc = 0.0;
        for i in 0..m - 1 {
            let (t0, t1) = (p.profile().level(i), p.profile().level(i + 1));
            let (s0, s1) = (t0.max(lo), t1.min(hi));
            if s1 <= s0 {
                continue;
            }
            let lerp = |s: f64| f.at(i, j) + (f.at(i + 1, j) - f.at(i, j)) * (s - t0) / h;
            acc += 0.5 * (lerp(s0) + lerp(s1)) * (s1 - s0);
        }
        acc / (hi - lo)
    };
    let node_t = |k: usize| if k == n { b } else { a + k as f64 * cell };
    let mut nodal = vec![vec![0.0; nb]; n + 1];
    for k in 0..n {
        for j in 0..nb {
            nodal[k][j] = cell_average(j, node_t(k), node_t(k + 1));
        }
    }
    nodal[n] = nodal[n - 1].clone();

    let mut grid = vec![0.0; m * nb];
    for i in 0..m {
        let t = p.profile().level(i);
        let s = ((t - a) / cell).clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let frac = s - k as f64;
        for j in 0..nb {
            grid[i * nb + j] = (1.0 - frac) * nodal[k][j] + frac * nodal[k + 1][j];
        }
    }
    // collapsed fibers take the base-measure mean
    let mut values = vec![0.0; p.node_count()];
    let mut mass = vec![0.0; p.node_count()];
    for i in 0..m {
        for j in 0..nb {
            let v = p.node(i, j);
            values[v] += grid[i * nb + j] * base.measure()[j];
            mass[v] += base.measure()[j];
        }
    }
    for (x, w) in values.iter_mut().zip(&mass) {
        *x /= w;
    }
    GridFunction::from_node_values(p, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cutoff {
    /// `χ(t) = 0 ∨ (radius - |t|) ∧ 1`
    TruncateChi { radius: f64 },
    /// `η_n(t) = 1 + log D(t) / log n` clamped to `[0, 1]`, with `D` the
    /// distance to the zeros of `w_m`.
    LogEta { n: f64 },
    /// `σ_m(x) = 0 ∨ (m - d(x, x̄)) ∧ 1`
    SpatialSigma { m: f64, center: usize },
}

#[derive(Debug, Clone)]
pub struct CutoffResult<'p> {
    pub factor: GridFunction<'p>,
    pub function: GridFunction<'p>,
    /// `Σ |D factor|² f² m` with the combined gradient of the factor.
    pub remainder_energy: f64,
}

pub fn log_eta(distance_to_zero: f64, n: f64) -> f64 {
    if distance_to_zero <= 0.0 {
        return 0.0;
    }
    (1.0 + distance_to_zero.ln() / n.ln()).clamp(0.0, 1.0)
}

pub fn cutoff<'p>(kind: Cutoff, f: &GridFunction<'p>) -> Result<CutoffResult<'p>> {
    let p = f.product();
    let factor = match kind {
        Cutoff::TruncateChi { radius } => GridFunction::from_fn(p, |i, _| {
            (radius - p.profile().level(i).abs()).clamp(0.0, 1.0)
        })?,
        Cutoff::LogEta { n } => {
            if !(n > 1.0) {
                return Err(Error::InvalidParameter(format!("log_eta needs n > 1, got {n}")));
            }
            let report = p.profile().analyze_zero_set()?;
            if report.zero_times_wm.is_empty() {
                return Err(Error::ZeroSet("w_m has no zeros on the grid".into()));
            }
            if !report.is_discrete {
                return Err(Error::ZeroSet("zero set of w_m is not discrete".into()));
            }
            if report.linear_decay_constant.map_or(true, |c| !c.is_finite()) {
                return Err(Error::ZeroSet("w_m does not decay linearly at its zeros".into()));
            }
            GridFunction::from_fn(p, |i, _| log_eta(report.distance_to_zero(p.profile().level(i)), n))?
        }
        Cutoff::SpatialSigma { m, center } => {
            if center >= p.base().vertex_count() {
                return Err(Error::OutOfRange(format!("center {center} is not a base vertex")));
            }
            let d = p.base().single_source(center);
            GridFunction::from_fn(p, |_, j| (m - d[j]).clamp(0.0, 1.0))?
        }
    };
    let grad = gradient_field(&factor);
    let remainder_energy = (0..p.node_count())
        .map(|v| grad.combined[v].powi(2) * f.value(v).powi(2) * p.measure()[v])
        .sum();
    let function = factor.zip_with(f, |c, x| c * x);
    Ok(CutoffResult {
        factor,
        function,
        remainder_energy,
    })
}

/// `f(t, x) = g1(x) + h(t) g2(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitForm {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    /// One value per level.
    pub h: Vec<f64>,
}

impl SplitForm {
    pub fn to_function<'p>(&self, product: &'p WarpedProduct) -> Result<GridFunction<'p>> {
        if self.g1.len() != product.base().vertex_count()
            || self.g2.len() != product.base().vertex_count()
            || self.h.len() != product.level_count()
        {
            return Err(Error::InvalidParameter("split form does not match the product".into()));
        }
        GridFunction::from_fn(product, |i, j| self.g1[j] + self.h[i] * self.g2[j])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalculusReport {
    pub nodes: usize,
    pub subadditivity: Vec<usize>,
    pub leibniz: Vec<usize>,
    pub scaling: Vec<usize>,
    /// `None` when no split form was checked.
    pub split_form: Option<Vec<usize>>,
}

impl CalculusReport {
    pub fn violation_count(&self) -> usize {
        self.subadditivity.len()
            + self.leibniz.len()
            + self.scaling.len()
            + self.split_form.as_ref().map_or(0, Vec::len)
    }
}

fn at_most(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + 1e-12) + 1e-300
}

/// Node-by-node checks of the slope calculus rules.
pub fn calculus_checks(
    f: &GridFunction<'_>,
    g: &GridFunction<'_>,
    alpha: f64,
    beta: f64,
    scale: f64,
    split: Option<&SplitForm>,
) -> Result<CalculusReport> {
    let p = f.product();
    if !std::ptr::eq(p, g.product()) {
        return Err(Error::InvalidParameter("functions live on different products".into()));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    let graph = p.graph();
    let (sf, sg) = (slopes(f), slopes(g));
    let combo = f.zip_with(g, |x, y| alpha * x + beta * y);
    let prod = f.zip_with(g, |x, y| x * y);
    let (s_combo, s_prod) = (slopes(&combo), slopes(&prod));
    let scaled = graph.scaled(1.0 / scale)?;
    let sf_scaled = slopes_on(&scaled, f.values());

    let closed_sup = |h: &GridFunction<'_>, v: usize| {
        graph
            .neighbors(v)
            .iter()
            .map(|&(u, _)| h.value(u).abs())
            .fold(h.value(v).abs(), f64::max)
    };
    let mut report = CalculusReport {
        nodes: p.node_count(),
        ..Default::default()
    };
    for v in 0..p.node_count() {
        if !at_most(s_combo[v], alpha.abs() * sf[v] + beta.abs() * sg[v]) {
            report.subadditivity.push(v);
        }
        if !at_most(s_prod[v], closed_sup(f, v) * sg[v] + closed_sup(g, v) * sf[v]) {
            report.leibniz.push(v);
        }
        if (sf_scaled[v] - scale * sf[v]).abs() > 1e-12 * scale * sf[v] {
            report.scaling.push(v);
        }
    }
    if let Some(split) = split {
        report.split_form = Some(split_form_violations(p, split)?);
    }
    Ok(report)
}

/// `lip(f)² ≤ P_x² + P_t²` with `P_x` the base difference quotient of `f`
/// at the node's level and `P_t = max |Δh|/Δt · sup_{N̄(x)} |g2|`.
fn split_form_violations(p: &WarpedProduct, split: &SplitForm) -> Result<Vec<usize>> {
    if !p.is_cartesian() || !matches!(p.stencil(), Stencil::Axis | Stencil::Diagonal) {
        return Err(Error::InvalidParameter(
            "split-form check needs a Cartesian product with the axis or diagonal stencil".into(),
        ));
    }
    let f = split.to_function(p)?;
    let s = slopes(&f);
    let (_, px) = partial_gradients(&f);
    let base = p.base();
    let dt = p.profile().step();
    let m = p.level_count();
    let mut bad = Vec::new();
    for i in 0..m {
        let dh = [i.wrapping_sub(1), i + 1]
            .into_iter()
            .filter(|&k| k < m)
            .map(|k| (split.h[k] - split.h[i]).abs() / dt)
            .fold(0.0, f64::max);
        for j in 0..base.vertex_count() {
            let v = p.node(i, j);
            let sup_g2 = base
                .neighbors(j)
                .iter()
                .map(|&(y, _)| split.g2[y].abs())
                .fold(split.g2[j].abs(), f64::max);
            let pt = dh * sup_g2;
            if !at_most(s[v] * s[v], px[v] * px[v] + pt * pt) {
                bad.push(v);
            }
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product::{build_cartesian, build_warped};
    use crate::profile::WarpProfile;
    use crate::space::{generate, Generator};
    use std::f64::consts::{PI, TAU};

    fn square(n: usize) -> WarpedProduct {
        let base = generate(&Generator::Interval { n, length: 1.0 }).unwrap();
        build_cartesian(&base, (0.0, 1.0), n).unwrap()
    }

    fn cone(n: usize, m: usize) -> WarpedProduct {
        let base = generate(&Generator::Circle { n, circumference: TAU }).unwrap();
        build_warped(&base, &WarpProfile::cone(m).unwrap(), Stencil::Diagonal).unwrap()
    }

    #[test]
    fn partials_of_t_on_a_cylinder() {
        let base = generate(&Generator::Circle { n: 12, circumference: 1.0 }).unwrap();
        let p = build_cartesian(&base, (0.0, 1.0), 9).unwrap();
        let f = GridFunction::from_spec(&p, &FunctionSpec::T).unwrap();
        let (pt, px) = partial_gradients(&f);
        assert!(pt.iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!(px.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn t_independent_function_has_base_slope_only() {
        let p = square(11);
        let f = GridFunction::from_fn(&p, |_, j| (j as f64 * 0.1).powi(2)).unwrap();
        let field = gradient_field(&f);
        assert!(field.partial_t.iter().all(|x| *x == 0.0));
        // the energy is the base slope energy integrated over t ∈ [0, 1]
        let base = p.base();
        let base_energy: f64 = (0..base.vertex_count())
            .map(|j| field.partial_x[p.node(0, j)].powi(2) * base.measure()[j])
            .sum();
        assert!((field.e_combined - base_energy).abs() < 1e-12);
    }

    #[test]
    fn partials_of_t_times_linear() {
        let p = square(21);
        let f = GridFunction::from_spec(
            &p,
            &FunctionSpec::Product {
                factors: vec![FunctionSpec::T, FunctionSpec::XCoordinateOfGenerator],
            },
        )
        .unwrap();
        let (pt, px) = partial_gradients(&f);
        let dt = p.profile().step();
        for i in 0..21 {
            for j in 0..21 {
                let v = p.node(i, j);
                let x = j as f64 / 20.0;
                let t = i as f64 / 20.0;
                assert!((pt[v] - x).abs() < 1e-12);
                assert!((px[v] - t).abs() <= dt + 1e-12);
            }
        }
    }

    #[test]
    fn worked_energies() {
        let p = square(101);
        let f = GridFunction::from_spec(&p, &FunctionSpec::T).unwrap();
        assert!((gradient_field(&f).e_combined - 1.0).abs() < 1e-9);
        let txf = FunctionSpec::Product {
            factors: vec![FunctionSpec::T, FunctionSpec::XCoordinateOfGenerator],
        };
        let f = GridFunction::from_spec(&p, &txf).unwrap();
        let e = gradient_field(&f).e_combined;
        assert!((e - 2.0 / 3.0).abs() < 0.02 * 2.0 / 3.0, "{e}");
        let c = cone(64, 65);
        let f = GridFunction::from_spec(&c, &FunctionSpec::T).unwrap();
        let field = gradient_field(&f);
        assert_eq!(field.mode, EnergyMode::Warped);
        assert!((field.e_combined - PI).abs() < 0.02 * PI);
        assert!(field.identity_violations().is_empty());
    }

    #[test]
    fn slope_of_t_and_constants() {
        let c = cone(32, 17);
        let f = GridFunction::from_spec(&c, &FunctionSpec::T).unwrap();
        let s = slopes(&f);
        assert!(s.iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!((slope_energy(&f) - c.total_measure()).abs() < 1e-12);
        let k = GridFunction::from_spec(&c, &FunctionSpec::Constant { value: 3.0 }).unwrap();
        assert!(slopes(&k).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn cylinder_sine_slope_energy() {
        let base = generate(&Generator::Circle { n: 64, circumference: TAU }).unwrap();
        let p = build_cartesian(&base, (0.0, 1.0), 64).unwrap();
        let f = GridFunction::from_spec(&p, &FunctionSpec::YCoordinateOfGenerator).unwrap();
        let field = gradient_field(&f);
        assert!((field.e_combined - PI).abs() < 0.1 * PI, "{}", field.e_combined);
        assert!((field.e_slope - PI).abs() < 0.1 * PI, "{}", field.e_slope);
    }

    #[test]
    fn apex_inconsistent_function_is_rejected() {
        let c = cone(8, 5);
        let err = GridFunction::from_spec(&c, &FunctionSpec::XCoordinateOfGenerator).unwrap_err();
        assert!(matches!(err, Error::QuotientInconsistent { .. }));
        let prod = FunctionSpec::Product {
            factors: vec![FunctionSpec::T, FunctionSpec::XCoordinateOfGenerator],
        };
        assert!(GridFunction::from_spec(&c, &prod).is_ok());
    }

    #[test]
    fn time_discretization_worked_values() {
        let p = square(5);
        let f = GridFunction::from_spec(&p, &FunctionSpec::T).unwrap();
        let g = time_discretize(&f, 2).unwrap();
        // level 2 is t = 1/2: the average of t over [1/2, 1]
        assert!((g.at(2, 0) - 0.75).abs() < 1e-15);
        assert!((g.at(0, 3) - 0.25).abs() < 1e-15);
        let c = GridFunction::from_spec(&p, &FunctionSpec::Constant { value: 2.5 }).unwrap();
        let tc = time_discretize(&c, 4).unwrap();
        assert!(tc.values().iter().all(|x| (x - 2.5).abs() < 1e-14));
        assert!(time_discretize(&f, 0).is_err());
        assert!(time_discretize(&f, 5).is_err());
    }

    #[test]
    fn last_cell_clamp_is_not_universally_nonexpansive() {
        // mass concentrated on the last cell is counted again by the
        // clamped end node
        let p = square(9);
        let f = GridFunction::from_fn(&p, |i, _| if i >= 6 { 1.0 } else { 0.0 }).unwrap();
        let g = time_discretize(&f, 4).unwrap();
        assert!(g.l2_norm_sq() > f.l2_norm_sq());
    }

    #[test]
    fn capacity_cutoff_on_symmetric_profile() {
        use crate::profile::WarpFn;
        // w_m = |t| on [-1, 1], tabulated; point base of unit mass
        let m = 20001;
        let levels: Vec<f64> = (0..m).map(|i| (-1.0 + 2.0 * i as f64 / (m - 1) as f64).abs()).collect();
        let profile =
            WarpProfile::new((-1.0, 1.0), m, WarpFn::Table(levels.clone()), WarpFn::Table(levels)).unwrap();
        let base = generate(&Generator::Interval { n: 2, length: 1.0 }).unwrap();
        let p = build_warped(&base, &profile, Stencil::Axis).unwrap();
        let one = GridFunction::from_spec(&p, &FunctionSpec::Constant { value: 1.0 }).unwrap();
        let r = cutoff(Cutoff::LogEta { n: 100.0 }, &one).unwrap();
        // base mass is 1
        let expect = 2.0 / 100f64.ln();
        assert!((r.remainder_energy - expect).abs() < 0.1 * expect, "{}", r.remainder_energy);
    }

    #[test]
    fn trivial_cutoffs_leave_function_unchanged() {
        let p = square(9);
        let f = GridFunction::from_spec(&p, &FunctionSpec::SinT { frequency: 3.0 }).unwrap();
        let r = cutoff(Cutoff::TruncateChi { radius: 10.0 }, &f).unwrap();
        assert_eq!(r.remainder_energy, 0.0);
        assert_eq!(r.function.values(), f.values());
        let r = cutoff(Cutoff::SpatialSigma { m: 3.0, center: 0 }, &f).unwrap();
        assert_eq!(r.function.values(), f.values());
        assert!(matches!(cutoff(Cutoff::LogEta { n: 10.0 }, &f), Err(Error::ZeroSet(_))));
    }

    #[test]
    fn calculus_rules_hold() {
        let p = square(17);
        let f = GridFunction::from_spec(&p, &FunctionSpec::SinT { frequency: 5.0 }).unwrap();
        let g = GridFunction::from_fn(&p, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0).unwrap();
        let xs: Vec<f64> = (0..17).map(|j| j as f64 / 16.0).collect();
        let split = SplitForm {
            g1: xs.clone(),
            g2: xs,
            h: p.profile().levels(),
        };
        let report = calculus_checks(&f, &g, 2.0, -0.5, 2.0, Some(&split)).unwrap();
        assert_eq!(report.violation_count(), 0, "{report:?}");
        let k = GridFunction::from_spec(&p, &FunctionSpec::Constant { value: 1.0 }).unwrap();
        let report = calculus_checks(&k, &k, 1.0, 1.0, 3.0, None).unwrap();
        assert_eq!(report.violation_count(), 0);
    }

    #[test]
    fn scaling_doubles_slopes_of_t() {
        let base = generate(&Generator::Circle { n: 10, circumference: 1.0 }).unwrap();
        let p = build_cartesian(&base, (0.0, 1.0), 6).unwrap();
        let f = GridFunction::from_spec(&p, &FunctionSpec::T).unwrap();
        let scaled = p.graph().scaled(0.5).unwrap();
        let s = slopes_on(&scaled, f.values());
        assert!(s.iter().all(|x| (x - 2.0).abs() < 1e-12));
    }

    #[test]
    fn function_files_round_trip() {
        let p = square(4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        let f = GridFunction::from_spec(&p, &FunctionSpec::SinX { frequency: 2.0 }).unwrap();
        save_function(&f, &path).unwrap();
        let back = load_function(&path, &p).unwrap();
        assert_eq!(back.values(), f.values());
        let closed = parse_function(r#"{"kind": "product", "factors": [{"kind": "t"}, {"kind": "sin_t"}]}"#, &p).unwrap();
        assert!((closed.at(3, 0) - 1f64.sin()).abs() < 1e-15);
        assert!(parse_function(r#"{"values": [[0, 0, 1.0]]}"#, &p).is_err());
    }
}
