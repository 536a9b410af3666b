//! Named verification suites: each builds its fixtures, measures a family
//! of metrics, and compares them against pinned tolerances.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsolver::{oracle_d, solve_d, warped_distance, GeodesicQuery, OracleKind, Resolution};
use crate::energy::{
    bl_energy, calculus_checks, cutoff, gradient_field, slopes, time_discretize, Cutoff, EnergyMode,
    FunctionSpec, GridFunction, SplitForm,
};
use crate::error::{Error, Result};
use crate::product::{build_cartesian_with, build_warped, Stencil, WarpedProduct};
use crate::profile::{load_profile, WarpFn, WarpProfile};
use crate::space::{ball_measure_from, generate, load_space, Generator, MetricMeasureSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Tensorization,
    WarpGradient,
    DistFactorization,
    Stl,
    Doubling,
    Capacity,
    Density,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Tensorization,
        Suite::WarpGradient,
        Suite::DistFactorization,
        Suite::Stl,
        Suite::Doubling,
        Suite::Capacity,
        Suite::Density,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Tensorization => "tensorization",
            Suite::WarpGradient => "warp_gradient",
            Suite::DistFactorization => "dist_factorization",
            Suite::Stl => "stl",
            Suite::Doubling => "doubling",
            Suite::Capacity => "capacity",
            Suite::Density => "density",
        }
    }

    pub fn parse(name: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// Product fixtures. Each is built at a resolution `N`: the base has `N`
/// vertices and the interval `N` levels unless overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    /// `[0, 1] × [0, 1]`: interval base of length 1.
    Square,
    /// `[0, 1] × S¹` with unit circumference.
    Cylinder,
    /// `w_d = w_m = t` on `[0, 1]` over a circle of circumference `2π`.
    Cone,
    /// `w_d = w_m = sin t` on `[0, π]` over a circle of circumference `2π`.
    Suspension,
    /// `w_d = w_m = |t|` on `[-1, 1]` (tabulated) over a two-point base of
    /// unit mass.
    DoubleCone,
    Custom { space: PathBuf, profile: PathBuf },
}

impl Fixture {
    pub fn name(&self) -> String {
        match self {
            Fixture::Square => "square".into(),
            Fixture::Cylinder => "cylinder".into(),
            Fixture::Cone => "cone".into(),
            Fixture::Suspension => "suspension".into(),
            Fixture::DoubleCone => "double_cone".into(),
            Fixture::Custom { space, .. } => format!("custom:{}", space.display()),
        }
    }

    pub fn oracle(&self) -> Option<OracleKind> {
        match self {
            Fixture::Square | Fixture::Cylinder => Some(OracleKind::Flat),
            Fixture::Cone => Some(OracleKind::Cone),
            Fixture::Suspension => Some(OracleKind::Suspension),
            _ => None,
        }
    }

    pub fn base(&self, vertices: usize) -> Result<MetricMeasureSpace> {
        match self {
            Fixture::Square => generate(&Generator::Interval { n: vertices, length: 1.0 }),
            Fixture::Cylinder => generate(&Generator::Circle {
                n: vertices,
                circumference: 1.0,
            }),
            Fixture::Cone | Fixture::Suspension => generate(&Generator::Circle {
                n: vertices,
                circumference: std::f64::consts::TAU,
            }),
            Fixture::DoubleCone => generate(&Generator::Interval { n: 2, length: 1.0 }),
            Fixture::Custom { space, .. } => load_space(space),
        }
    }

    pub fn profile(&self, levels: usize) -> Result<WarpProfile> {
        match self {
            Fixture::Square | Fixture::Cylinder => WarpProfile::flat((0.0, 1.0), levels),
            Fixture::Cone => WarpProfile::cone(levels),
            Fixture::Suspension => WarpProfile::suspension(levels),
            Fixture::DoubleCone => {
                let table: Vec<f64> = (0..levels)
                    .map(|i| (-1.0 + 2.0 * i as f64 / (levels - 1) as f64).abs())
                    .collect();
                WarpProfile::new(
                    (-1.0, 1.0),
                    levels,
                    WarpFn::Table(table.clone()),
                    WarpFn::Table(table),
                )
            }
            Fixture::Custom { profile, .. } => {
                let p = load_profile(profile)?;
                match p.w_d() {
                    WarpFn::Table(_) => Ok(p),
                    _ => p.regrid(levels),
                }
            }
        }
    }

    /// Builds the product with `base_vertices` base points and `levels`
    /// interval levels.
    pub fn build(&self, base_vertices: usize, levels: usize, stencil: Stencil) -> Result<WarpedProduct> {
        let context = format!("{} ({base_vertices} x {levels})", self.name());
        let built = (|| {
            let base = self.base(base_vertices)?;
            let profile = self.profile(levels)?;
            if matches!(self, Fixture::Square | Fixture::Cylinder) {
                build_cartesian_with(&base, profile.interval(), levels, stencil)
            } else {
                build_warped(&base, &profile, stencil)
            }
        })();
        built.map_err(|e| Error::fixture(context, e))
    }
}

/// Suite configuration; every field except `suite` has a per-suite default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub suite: Suite,
    #[serde(default)]
    pub fixtures: Vec<Fixture>,
    #[serde(default)]
    pub resolutions: Vec<usize>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub samples: Option<usize>,
    /// Interior collar, as a fraction of the interval length.
    #[serde(default)]
    pub collar: Option<f64>,
    #[serde(default)]
    pub base_vertices: Option<usize>,
    #[serde(default)]
    pub stencil: Option<Stencil>,
    /// `(N_t, N_θ)` for the distance solver.
    #[serde(default)]
    pub solver_resolution: Option<usize>,
}

fn default_seed() -> u64 {
    7
}

impl SuiteConfig {
    pub fn new(suite: Suite) -> Self {
        SuiteConfig {
            suite,
            fixtures: Vec::new(),
            resolutions: Vec::new(),
            tolerances: BTreeMap::new(),
            seed: default_seed(),
            samples: None,
            collar: None,
            base_vertices: None,
            stencil: None,
            solver_resolution: None,
        }
        .with_defaults()
    }

    /// Fills unset fields with the suite defaults.
    pub fn with_defaults(mut self) -> Self {
        use Fixture::*;
        let (fixtures, resolutions, samples, tolerances): (Vec<Fixture>, Vec<usize>, usize, &[(&str, f64)]) =
            match self.suite {
                Suite::Tensorization => (vec![Square], vec![32, 64, 128], 0, &[("deviation", 0.10)]),
                Suite::WarpGradient => (vec![Cone], vec![32, 64, 128], 0, &[("deviation", 0.15)]),
                Suite::DistFactorization => (
                    vec![Cone, Suspension],
                    vec![64],
                    100,
                    &[("factorization", 0.03), ("graph_vs_oracle", 0.03), ("solver_vs_oracle", 0.005)],
                ),
                Suite::Stl => (vec![Cone, Cylinder], vec![64], 500, &[("slack", 0.05)]),
                Suite::Doubling => (vec![Cylinder], vec![64], 40, &[("doubling_constant", 5.0), ("max_radius", 0.1)]),
                Suite::Capacity => (
                    vec![Cone, DoubleCone],
                    vec![100, 1000, 10000],
                    0,
                    &[("ratio", 1.3), ("analytic", 0.10)],
                ),
                Suite::Density => (
                    vec![Square],
                    vec![2, 4, 8],
                    20,
                    &[("l2_slack", 1e-12), ("energy_slack", 1e-9)],
                ),
            };
        if self.fixtures.is_empty() {
            self.fixtures = fixtures;
        }
        if self.resolutions.is_empty() {
            self.resolutions = resolutions;
        }
        for (k, v) in tolerances {
            self.tolerances.entry(k.to_string()).or_insert(*v);
        }
        if self.samples.is_none() && samples > 0 {
            self.samples = Some(samples);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() {
            return Err(Error::InvalidParameter("no resolutions".into()));
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("resolutions must be strictly ascending".into()));
        }
        if let Some((k, v)) = self.tolerances.iter().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("tolerance {k} = {v} must be positive")));
        }
        if let Some(c) = self.collar {
            if !(0.0..0.5).contains(&c) {
                return Err(Error::InvalidParameter(format!("collar {c} outside [0, 0.5)")));
            }
        }
        Ok(())
    }

    fn tol(&self, key: &str) -> f64 {
        self.tolerances[key]
    }

    fn collar(&self) -> f64 {
        self.collar.unwrap_or(0.1)
    }

    fn samples(&self) -> usize {
        self.samples.unwrap_or(100)
    }

    fn solver_resolution(&self) -> Resolution {
        Resolution::square(self.solver_resolution.unwrap_or(Resolution::ORACLE.nt))
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SuiteConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: SuiteConfig = serde_json::from_str(&text)?;
    let config = config.with_defaults();
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One pass/fail comparison of an observed value with a limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub relation: Relation,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, observed: f64, relation: Relation, limit: f64) -> Self {
        let mut c = Check {
            name: name.into(),
            observed,
            relation,
            limit,
            passed: false,
        };
        c.passed = c.evaluate();
        c
    }

    pub fn at_most(name: impl Into<String>, observed: f64, limit: f64) -> Self {
        Self::new(name, observed, Relation::AtMost, limit)
    }

    pub fn at_least(name: impl Into<String>, observed: f64, limit: f64) -> Self {
        Self::new(name, observed, Relation::AtLeast, limit)
    }

    pub fn evaluate(&self) -> bool {
        match self.relation {
            Relation::AtMost => self.observed <= self.limit,
            Relation::AtLeast => self.observed >= self.limit,
        }
    }
}

/// One row of a flat metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub table: String,
    pub fixture: String,
    pub parameter: f64,
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub toolkit: String,
    pub version: String,
    pub config: SuiteConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: Suite,
    pub pass: bool,
    pub runtime_seconds: f64,
    pub checks: Vec<Check>,
    pub metrics: Vec<Metric>,
    pub provenance: Provenance,
}

impl VerificationReport {
    /// Pass flag recomputed from the stored observations.
    pub fn recompute_pass(&self) -> bool {
        self.checks.iter().all(Check::evaluate)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn metric(&self, table: &str, fixture: &str, parameter: f64, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.table == table && m.fixture == fixture && m.parameter == parameter && m.name == name)
            .map(|m| m.value)
    }

    /// Writes the report as JSON and one CSV per metric table next to it
    /// (`<stem>.<table>.csv`).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))?;
        let mut written = vec![path.to_path_buf()];
        let mut tables: BTreeMap<&str, Vec<&Metric>> = BTreeMap::new();
        for m in &self.metrics {
            tables.entry(&m.table).or_default().push(m);
        }
        let stem = path.with_extension("");
        for (table, rows) in tables {
            let csv_path = PathBuf::from(format!("{}.{table}.csv", stem.display()));
            let mut w = csv::Writer::from_path(&csv_path)?;
            w.write_record(["fixture", "parameter", "metric", "value"])?;
            for r in rows {
                w.write_record([
                    r.fixture.clone(),
                    r.parameter.to_string(),
                    r.name.clone(),
                    format!("{:e}", r.value),
                ])?;
            }
            w.flush().map_err(|e| Error::io(&csv_path, e))?;
            written.push(csv_path);
        }
        Ok(written)
    }
}

pub fn load_report(path: impl AsRef<Path>) -> Result<VerificationReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

struct Recorder {
    checks: Vec<Check>,
    metrics: Vec<Metric>,
}

impl Recorder {
    fn metric(&mut self, table: &str, fixture: &str, parameter: f64, name: &str, value: f64) {
        self.metrics.push(Metric {
            table: table.into(),
            fixture: fixture.into(),
            parameter,
            name: name.into(),
            value,
        });
    }

    fn check(&mut self, check: Check) {
        self.checks.push(check);
    }
}

/// Runs one suite. Deterministic for a fixed configuration.
pub fn run_suite(config: &SuiteConfig) -> Result<VerificationReport> {
    let config = config.clone().with_defaults();
    config.validate()?;
    let start = Instant::now();
    let mut rec = Recorder {
        checks: Vec::new(),
        metrics: Vec::new(),
    };
    match config.suite {
        Suite::Tensorization | Suite::WarpGradient => gradient_trend(&config, &mut rec)?,
        Suite::DistFactorization => dist_factorization(&config, &mut rec)?,
        Suite::Stl => stl(&config, &mut rec)?,
        Suite::Doubling => doubling(&config, &mut rec)?,
        Suite::Capacity => capacity(&config, &mut rec)?,
        Suite::Density => density(&config, &mut rec)?,
    }
    let pass = rec.checks.iter().all(|c| c.passed);
    Ok(VerificationReport {
        suite: config.suite,
        pass,
        runtime_seconds: start.elapsed().as_secs_f64(),
        checks: rec.checks,
        metrics: rec.metrics,
        provenance: Provenance {
            toolkit: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
        },
    })
}

/// Nodes at distance at least `collar · (b - a)` from the zero levels of
/// `w_d` (all nodes when there are none).
fn collared_nodes(p: &WarpedProduct, collar: f64) -> Vec<usize> {
    let (a, b) = p.profile().interval();
    let zeros: Vec<f64> = p.apex_levels().iter().map(|&i| p.profile().level(i)).collect();
    let keep = |t: f64| zeros.iter().all(|z| (t - z).abs() >= collar * (b - a) - 1e-12);
    (0..p.node_count()).filter(|&v| keep(p.node_t(v))).collect()
}

fn test_function(suite: Suite, fixture: &Fixture) -> FunctionSpec {
    use FunctionSpec::*;
    match (suite, fixture) {
        (Suite::Tensorization, _) => Product {
            factors: vec![
                SinT {
                    frequency: std::f64::consts::TAU,
                },
                SinX {
                    frequency: std::f64::consts::TAU,
                },
            ],
        },
        _ => Product {
            factors: vec![T, YCoordinateOfGenerator],
        },
    }
}

fn gradient_trend(config: &SuiteConfig, rec: &mut Recorder) -> Result<()> {
    let table = config.suite.name();
    let tol = config.tol("deviation");
    let collar = if config.suite == Suite::WarpGradient {
        config.collar()
    } else {
        0.0
    };
    let stencil = config.stencil.unwrap_or(Stencil::Diagonal);
    for fixture in &config.fixtures {
        let name = fixture.name();
        let mut deviations = Vec::new();
        for &res in &config.resolutions {
            let p = fixture.build(config.base_vertices.unwrap_or(res), res, stencil)?;
            let nodes = collared_nodes(&p, collar);
            let f = GridFunction::from_spec(&p, &test_function(config.suite, fixture))?;
            let field = gradient_field(&f);
            let mass = p.measure();
            let sum = |g: &[f64]| nodes.iter().map(|&v| g[v] * g[v] * mass[v]).sum::<f64>();
            let (e_slope, e_combined) = (sum(&field.slope), sum(&field.combined));
            let ratio = e_slope / e_combined;
            let dev = (ratio - 1.0).abs();
            rec.metric(table, &name, res as f64, "e_slope", e_slope);
            rec.metric(table, &name, res as f64, "e_combined", e_combined);
            rec.metric(table, &name, res as f64, "ratio", ratio);
            rec.metric(table, &name, res as f64, "deviation", dev);
            deviations.push(dev);
        }
        let last = *deviations.last().unwrap();
        rec.check(Check::at_most(format!("{name}: final deviation"), last, tol));
        let worst_increase = deviations
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        if deviations.len() > 1 {
            rec.check(Check::at_most(format!("{name}: deviation increase"), worst_increase, 0.0));
        }

        // canary: f = t has slope and combined gradient exactly 1
        let res = config.resolutions[0];
        let p = fixture.build(config.base_vertices.unwrap_or(res), res, stencil)?;
        let f = GridFunction::from_spec(&p, &FunctionSpec::T)?;
        let field = gradient_field(&f);
        let nodes = collared_nodes(&p, collar);
        let worst = nodes
            .iter()
            .map(|&v| (field.slope[v] - 1.0).abs().max((field.combined[v] - 1.0).abs()))
            .fold(0.0, f64::max);
        rec.check(Check::at_most(format!("{name}: canary f = t"), worst, 1e-12));
    }
    Ok(())
}

/// Node pairs drawn independently from the normalised measure.
fn sample_pairs(p: &WarpedProduct, nodes: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    let weights: Vec<f64> = nodes.iter().map(|&v| p.measure()[v]).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::InvalidParameter(format!("pair sampling: {e}")))?;
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let (u, v) = (nodes[dist.sample(rng)], nodes[dist.sample(rng)]);
        if u != v {
            pairs.push((u, v));
        }
    }
    Ok(pairs)
}

fn node_point(p: &WarpedProduct, v: usize) -> (f64, usize) {
    (p.node_t(v), p.node_base(v).unwrap_or(0))
}

fn dist_factorization(config: &SuiteConfig, rec: &mut Recorder) -> Result<()> {
    let table = "dist_factorization";
    let stencil = config.stencil.unwrap_or(Stencil::DISTANCE);
    let solver_res = config.solver_resolution();
    for fixture in &config.fixtures {
        let name = fixture.name();
        for &res in &config.resolutions {
            let p = fixture.build(config.base_vertices.unwrap_or(res), res, stencil)?;
            let base_dist = p.base().distances();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let all: Vec<usize> = (0..p.node_count()).collect();
            let pairs = sample_pairs(&p, &all, config.samples(), &mut rng)?;
            let sources: Vec<usize> = pairs.iter().map(|&(u, _)| u).collect();
            let rows = p.graph().shortest_paths(&sources);
            let (mut worst_fact, mut worst_over, mut worst_under, mut worst_solver) =
                (0.0f64, f64::NEG_INFINITY, f64::INFINITY, 0.0f64);
            let mut mean_fact = 0.0;
            for (k, &(u, v)) in pairs.iter().enumerate() {
                let graph = rows[k][v];
                let (pu, pv) = (node_point(&p, u), node_point(&p, v));
                let comp = warped_distance(base_dist, p.profile(), pu, pv, solver_res)?;
                let fact = (graph - comp).abs() / comp;
                worst_fact = worst_fact.max(fact);
                mean_fact += fact / pairs.len() as f64;
                if let Some(kind) = fixture.oracle() {
                    let ell = base_dist.get(pu.1, pv.1);
                    let exact = oracle_d(kind, pu.0, pv.0, ell);
                    let signed = (graph - exact) / exact;
                    worst_over = worst_over.max(signed);
                    worst_under = worst_under.min(signed);
                    worst_solver = worst_solver.max((comp - exact).abs() / exact);
                }
            }
            let r = res as f64;
            rec.metric(table, &name, r, "max_factorization_error", worst_fact);
            rec.metric(table, &name, r, "mean_factorization_error", mean_fact);
            rec.check(Check::at_most(
                format!("{name} M={res}: |graph - D(d_X)| / D"),
                worst_fact,
                config.tol("factorization"),
            ));
            if fixture.oracle().is_some() {
                rec.metric(table, &name, r, "max_graph_over_oracle", worst_over);
                rec.metric(table, &name, r, "min_graph_over_oracle", worst_under);
                rec.metric(table, &name, r, "max_solver_vs_oracle", worst_solver);
                rec.check(Check::at_most(
                    format!("{name} M={res}: (graph - oracle) / oracle"),
                    worst_over,
                    config.tol("graph_vs_oracle"),
                ));
                rec.check(Check::at_least(
                    format!("{name} M={res}: graph below oracle"),
                    worst_under,
                    -config.tol("solver_vs_oracle"),
                ));
                rec.check(Check::at_most(
                    format!("{name} M={res}: |solver - oracle| / oracle"),
                    worst_solver,
                    config.tol("solver_vs_oracle"),
                ));
            }

            // canary: vertical pairs factor exactly
            let j = 0;
            let top = p.node(p.level_count() - 1, j.min(p.base().vertex_count() - 1));
            let mid = p.node(p.level_count() / 2, j);
            let graph = p.graph().single_source(top)[mid];
            let comp = warped_distance(base_dist, p.profile(), node_point(&p, top), node_point(&p, mid), solver_res)?;
            rec.check(Check::at_most(
                format!("{name} M={res}: canary vertical pair"),
                (graph - comp).abs() / comp,
                1e-12,
            ));
        }
    }
    Ok(())
}

fn stl(config: &SuiteConfig, rec: &mut Recorder) -> Result<()> {
    use FunctionSpec::*;
    let table = "stl";
    let slack = config.tol("slack");
    let stencil = config.stencil.unwrap_or(Stencil::Diagonal);
    let solver_res = Resolution::square(config.solver_resolution.unwrap_or(Resolution::ALL_PAIRS.nt));
    for fixture in &config.fixtures {
        let name = fixture.name();
        for &res in &config.resolutions {
            let p = fixture.build(config.base_vertices.unwrap_or(res), res, stencil)?;
            let (a, b) = p.profile().interval();
            let functions: Vec<(&str, FunctionSpec, f64)> = vec![
                ("t", T, 0.0),
                (
                    "t_y_collared",
                    Product {
                        factors: vec![T, YCoordinateOfGenerator],
                    },
                    config.collar(),
                ),
                (
                    "radial",
                    Radial {
                        center: 0.5 * (a + b),
                        width: 0.3 * (b - a),
                    },
                    0.0,
                ),
            ];
            let base_dist = p.base().distances();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            for (fname, spec, collar) in functions {
                let f = GridFunction::from_spec(&p, &spec)?;
                let field = gradient_field(&f);
                let nodes = collared_nodes(&p, collar);
                let lip = nodes.iter().map(|&v| field.combined[v]).fold(0.0, f64::max);
                let pairs = sample_pairs(&p, &nodes, config.samples.unwrap_or(500), &mut rng)?;
                let mut violations = 0usize;
                let mut worst_ratio = 0.0f64;
                for &(u, v) in &pairs {
                    let d = warped_distance(base_dist, p.profile(), node_point(&p, u), node_point(&p, v), solver_res)?;
                    let df = (f.value(u) - f.value(v)).abs();
                    if d > 0.0 {
                        worst_ratio = worst_ratio.max(df / d);
                    }
                    if df > lip * d * (1.0 + slack) {
                        violations += 1;
                    }
                }
                let key = format!("{name} M={res} f={fname}");
                rec.metric(table, &name, res as f64, &format!("{fname}:L"), lip);
                rec.metric(table, &name, res as f64, &format!("{fname}:max_quotient"), worst_ratio);
                rec.metric(table, &name, res as f64, &format!("{fname}:violations"), violations as f64);
                rec.check(Check::at_most(format!("{key}: violations"), violations as f64, 0.0));
            }
        }
    }
    Ok(())
}

fn doubling(config: &SuiteConfig, rec: &mut Recorder) -> Result<()> {
    let table = "doubling";
    let stencil = config.stencil.unwrap_or(Stencil::DISTANCE);
    let c_max = config.tol("doubling_constant");
    let r_max = config.tol("max_radius");
    for fixture in &config.fixtures {
        let name = fixture.name();
        for &res in &config.resolutions {
            let p = fixture.build(config.base_vertices.unwrap_or(res), res, stencil)?;
            let (a, b) = p.profile().interval();
            let base_step = p.base().edges().iter().map(|e| e.length).fold(0.0, f64::max);
            let delta = p.profile().step().max(base_step);
            let r_min = 2.0 * delta;
            // interior: w_m above the collar level and 2r_max away from the ends
            let collar = config.collar();
            let wm_max = p.profile().samples_wm().iter().copied().fold(0.0, f64::max);
            let margin = (2.0 * r_max).max(collar * (b - a));
            let nodes: Vec<usize> = (0..p.node_count())
                .filter(|&v| {
                    let t = p.node_t(v);
                    t >= a + margin && t <= b - margin && p.profile().wm_at(t) >= collar * wm_max
                })
                .collect();
            if nodes.is_empty() {
                return Err(Error::InvalidParameter(format!("{name}: no interior nodes")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let radii: Vec<f64> = if r_min <= r_max {
                (0..8).map(|k| r_min * (r_max / r_min).powf(k as f64 / 7.0)).collect()
            } else {
                Vec::new()
            };
            let mut sup = 0.0f64;
            for _ in 0..config.samples() {
                let center = nodes[rng.gen_range(0..nodes.len())];
                let d = p.graph().bounded_single_source(center, 2.0 * r_max);
                for &r in &radii {
                    let small = ball_measure_from(&d, p.measure(), r);
                    let big = ball_measure_from(&d, p.measure(), 2.0 * r);
                    sup = sup.max(big / small);
                }
            }
            rec.metric(table, &name, res as f64, "r_min", r_min);
            rec.metric(table, &name, res as f64, "sup_ratio", sup);
            rec.check(Check::at_least(format!("{name} M={res}: radius range nonempty"), r_max, r_min));
            rec.check(Check::at_most(format!("{name} M={res}: sup m(B_2r)/m(B_r)"), sup, c_max));

            // canary: balls larger than the diameter have ratio 1
            let d = p.graph().single_source(nodes[0]);
            let diam = d.iter().copied().fold(0.0, f64::max);
            let big = ball_measure_from(&d, p.measure(), 4.0 * diam + 1.0);
            let small = ball_measure_from(&d, p.measure(), 2.0 * diam + 0.5);
            rec.check(Check::at_most(format!("{name} M={res}: canary ratio"), (big / small - 1.0).abs(), 0.0));
        }
    }
    Ok(())
}

/// Interval levels used by the capacity suite; the cutoff slope is first
/// order, so the transition layer `D ∈ [1/n, 1]` needs a fine grid.
pub const CAPACITY_LEVELS: usize = 10001;
pub const CAPACITY_DOUBLE_CONE_LEVELS: usize = 20001;

fn capacity(config: &SuiteConfig, rec: &mut Recorder) -> Result<()> {
    let table = "capacity";
    for fixture in &config.fixtures {
        let name = fixture.name();
        let (base_vertices, levels) = match fixture {
            Fixture::DoubleCone => (2, CAPACITY_DOUBLE_CONE_LEVELS),
            _ => (config.base_vertices.unwrap_or(16), CAPACITY_LEVELS),
        };
        let p = fixture.build(base_vertices, levels, Stencil::Axis)?;
        let one = GridFunction::from_spec(&p, &FunctionSpec::Constant { value: 1.0 })?;
        let zeros = p.profile().analyze_zero_set()?;
        let (a, b) = p.profile().interval();
        // an interior zero is approached from both sides
        let sides: usize = zeros.zero_times_wm.iter().map(|&z| (z > a) as usize + (z < b) as usize).sum();
        let c = zeros.linear_decay_constant.unwrap_or(0.0);
        let base_mass = p.base().total_measure();
        let mut scaled = Vec::new();
        let mut bl_dist = Vec::new();
        for &n in &config.resolutions {
            let n = n as f64;
            let r = cutoff(Cutoff::LogEta { n }, &one)?;
            let diff = one.zip_with(&r.function, |x, y| x - y);
            let d = diff.l2_norm_sq() + bl_energy(&diff, EnergyMode::Warped)?.e_combined;
            rec.metric(table, &name, n, "remainder_energy", r.remainder_energy);
            rec.metric(table, &name, n, "remainder_times_log_n", r.remainder_energy * n.ln());
            rec.metric(table, &name, n, "bl_distance_sq", d);
            scaled.push(r.remainder_energy * n.ln());
            bl_dist.push(d);
        }
        rec.metric(table, &name, 0.0, "linear_decay_constant", c);
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
        rec.check(Check::at_most(format!("{name}: max/min of remainder * log n"), max / min, config.tol("ratio")));
        let n0 = config.resolutions[0] as f64;
        // ∫_{1/n}^{1} (1 / (s log n))² s ds = 1 / log n on each side of a zero
        let analytic = sides as f64 * base_mass / n0.ln();
        rec.metric(table, &name, n0, "analytic", analytic);
        let first = scaled[0] / n0.ln();
        rec.check(Check::at_most(
            format!("{name}: |remainder - analytic| / analytic at n = {n0}"),
            (first - analytic).abs() / analytic,
            config.tol("analytic"),
        ));
        let increase = bl_dist.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        if bl_dist.len() > 1 {
            rec.check(Check::at_most(format!("{name}: BL distance increase along n"), increase, 0.0));
        }

        // canary: a truncation that covers the whole interval leaves no remainder
        let r = cutoff(Cutoff::TruncateChi { radius: 1e6 }, &one)?;
        rec.check(Check::at_most(format!("{name}: canary trivial cutoff"), r.remainder_energy, 0.0));
    }
    Ok(())
}

/// A smooth random function: a low-order trigonometric polynomial with
/// seeded coefficients. With `support = Some(L)` it is multiplied by
/// `sin²(π s / L)` on the normalised time `s ∈ [0, L]` and vanishes beyond.
pub fn random_smooth_function<'p>(
    p: &'p WarpedProduct,
    rng: &mut ChaCha8Rng,
    support: Option<f64>,
) -> Result<GridFunction<'p>> {
    let (a, b) = p.profile().interval();
    let xs: Vec<f64> = match p.base().positions() {
        Some(pos) => pos.iter().map(|q| q[0]).collect(),
        None => (0..p.base().vertex_count()).map(|j| j as f64).collect(),
    };
    let (xmin, xmax) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let xspan = (xmax - xmin).max(1e-12);
    let mut terms = Vec::new();
    for kt in 0..4 {
        for kx in 0..4 {
            let c: f64 = rng.gen_range(-1.0..1.0) / (1 + kt + kx) as f64;
            let (pt, px): (f64, f64) = (rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3));
            terms.push((kt as f64, kx as f64, c, pt, px));
        }
    }
    GridFunction::from_fn(p, |i, j| {
        let s = (p.profile().level(i) - a) / (b - a);
        // collapsed fibers carry one value
        let x = if p.is_apex_level(i) { 0.0 } else { (xs[j] - xmin) / xspan };
        let envelope = match support {
            Some(l) if s >= l => 0.0,
            Some(l) => (std::f64::consts::PI * s / l).sin().powi(2),
            None => 1.0,
        };
        envelope
            * terms
            .iter()
            .map(|&(kt, kx, c, pt, px)| {
                c * (std::f64::consts::PI * kt * s + pt).cos() * (std::f64::consts::PI * kx * x + px).cos()
            })
            .sum::<f64>()
    })
}

fn density(config: &SuiteConfig, rec: &mut Recorder) -> Result<()> {
    let table = "density";
    let l2_slack = config.tol("l2_slack");
    let e_slack = config.tol("energy_slack");
    let n_min = config.resolutions[0];
    let n_max = *config.resolutions.last().unwrap();
    for fixture in &config.fixtures {
        let name = fixture.name();
        let levels = 16 * n_max + 1;
        let base_vertices = config.base_vertices.unwrap_or(17);
        let p = fixture.build(base_vertices, levels, Stencil::Diagonal)?;
        // Gated class: functions vanishing on the last cell of the coarsest
        // T_n, where the clamped end node agrees with the whole-line
        // construction. Full-support functions are reported ungated.
        let classes = [("compact", Some(1.0 - 1.0 / n_min as f64), true), ("full", None, false)];
        for (class, support, gated) in classes {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let (mut l2_worst, mut et_worst, mut ex_worst) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            let mut error_increases = 0usize;
            for _ in 0..config.samples.unwrap_or(20) {
                let f = random_smooth_function(&p, &mut rng, support)?;
                let norm = f.l2_norm_sq();
                let field = gradient_field(&f);
                let mut prev_err = f64::INFINITY;
                for &n in &config.resolutions {
                    let g = time_discretize(&f, n)?;
                    let gf = gradient_field(&g);
                    l2_worst = l2_worst.max((g.l2_norm_sq() - norm) / norm);
                    et_worst = et_worst.max(gf.e_partial_t - field.e_partial_t);
                    ex_worst = ex_worst.max(gf.e_partial_x - field.e_partial_x);
                    let err = g.l2_distance_sq(&f).sqrt();
                    if err >= prev_err {
                        error_increases += 1;
                    }
                    prev_err = err;
                }
            }
            let metric = |s: &str| format!("{class}:{s}");
            rec.metric(table, &name, 0.0, &metric("max_relative_l2_growth"), l2_worst);
            rec.metric(table, &name, 0.0, &metric("max_partial_t_energy_growth"), et_worst);
            rec.metric(table, &name, 0.0, &metric("max_partial_x_energy_growth"), ex_worst);
            rec.metric(table, &name, 0.0, &metric("l2_error_increases"), error_increases as f64);
            if gated {
                rec.check(Check::at_most(format!("{name}: ||T_n f||² - ||f||² (relative)"), l2_worst, l2_slack));
                rec.check(Check::at_most(format!("{name}: E_t(T_n f) - E_t(f)"), et_worst, e_slack));
                rec.check(Check::at_most(format!("{name}: E_x(T_n f) - E_x(f)"), ex_worst, e_slack));
                rec.check(Check::at_most(format!("{name}: L² error increases along n"), error_increases as f64, 0.0));
            }
        }

        // canary: constants are preserved
        let k = GridFunction::from_spec(&p, &FunctionSpec::Constant { value: 1.5 })?;
        let worst = config
            .resolutions
            .iter()
            .map(|&n| time_discretize(&k, n).map(|g| g.values().iter().map(|x| (x - 1.5).abs()).fold(0.0, f64::max)))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        rec.check(Check::at_most(format!("{name}: canary constant preserved"), worst, 1e-14));
    }
    Ok(())
}

/// Violation counts of the exact discrete identities on one product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCounts {
    pub fixture: String,
    pub combined_identity: usize,
    pub subadditivity: usize,
    pub leibniz: usize,
    pub scaling: usize,
    pub split_form: usize,
    pub constant_preservation: usize,
}

impl InvariantCounts {
    pub fn total(&self) -> usize {
        self.combined_identity
            + self.subadditivity
            + self.leibniz
            + self.scaling
            + self.split_form
            + self.constant_preservation
    }
}

/// Sweeps the exact identities over the square, cylinder, cone and
/// suspension fixtures with seeded random functions.
pub fn exact_invariants(resolution: usize, seed: u64) -> Result<Vec<InvariantCounts>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for fixture in [Fixture::Square, Fixture::Cylinder, Fixture::Cone, Fixture::Suspension] {
        let p = fixture.build(resolution, resolution, Stencil::Diagonal)?;
        let f = random_smooth_function(&p, &mut rng, None)?;
        let g = GridFunction::from_spec(&p, &FunctionSpec::T)?.zip_with(&random_smooth_function(&p, &mut rng, None)?, |a, b| a * b);
        let field = gradient_field(&f);
        let (alpha, beta, scale) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.5..4.0));
        let split = if p.is_cartesian() {
            let nb = p.base().vertex_count();
            Some(SplitForm {
                g1: (0..nb).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                g2: (0..nb).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                h: p.profile().levels().iter().map(|t| (3.0 * t).sin()).collect(),
            })
        } else {
            None
        };
        let report = calculus_checks(&f, &g, alpha, beta, scale, split.as_ref())?;
        let constant = GridFunction::from_spec(&p, &FunctionSpec::Constant { value: -0.75 })?;
        let mut constant_preservation = 0;
        for n in [1, 2, 4] {
            if n < p.level_count() {
                let tc = time_discretize(&constant, n)?;
                constant_preservation += tc.values().iter().filter(|x| (*x + 0.75).abs() > 1e-14).count();
            }
        }
        // slopes of a function scaled by a constant scale exactly
        debug_assert_eq!(slopes(&f).len(), p.node_count());
        out.push(InvariantCounts {
            fixture: fixture.name(),
            combined_identity: field.identity_violations().len(),
            subadditivity: report.subadditivity.len(),
            leibniz: report.leibniz.len(),
            scaling: report.scaling.len(),
            split_form: report.split_form.map_or(0, |v| v.len()),
            constant_preservation,
        });
    }
    Ok(out)
}

/// Relative error of the solver against a closed-form oracle.
pub fn solver_error(profile: &WarpProfile, kind: OracleKind, t0: f64, t1: f64, ell: f64, resolution: Resolution) -> Result<f64> {
    let value = solve_d(profile, &GeodesicQuery::new(t0, t1, ell).with_resolution(resolution))?.value;
    let exact = oracle_d(kind, t0, t1, ell);
    Ok(if exact > 0.0 { (value - exact).abs() / exact } else { value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_unset_fields() {
        let c = SuiteConfig::new(Suite::Tensorization);
        assert_eq!(c.resolutions, vec![32, 64, 128]);
        assert_eq!(c.tolerances["deviation"], 0.10);
        assert_eq!(c.fixtures, vec![Fixture::Square]);
        let parsed: SuiteConfig = serde_json::from_str(r#"{"suite": "stl", "fixtures": ["cylinder"], "resolutions": [16]}"#).unwrap();
        let parsed = parsed.with_defaults();
        assert_eq!(parsed.fixtures, vec![Fixture::Cylinder]);
        assert_eq!(parsed.tolerances["slack"], 0.05);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = SuiteConfig::new(Suite::Doubling);
        c.resolutions = vec![64, 32];
        assert!(c.validate().is_err());
        let mut c = SuiteConfig::new(Suite::Doubling);
        c.tolerances.insert("doubling_constant".into(), -1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn stl_on_cylinder_with_t_passes() {
        let mut c = SuiteConfig::new(Suite::Stl);
        c.fixtures = vec![Fixture::Cylinder];
        c.resolutions = vec![12];
        c.samples = Some(40);
        let report = run_suite(&c).unwrap();
        assert!(report.pass, "{:?}", report.failed_checks().collect::<Vec<_>>());
        assert_eq!(report.recompute_pass(), report.pass);
    }

    #[test]
    fn reports_are_reproducible_and_serialise() {
        let mut c = SuiteConfig::new(Suite::Tensorization);
        c.resolutions = vec![8, 16];
        let r1 = run_suite(&c).unwrap();
        let r2 = run_suite(&c).unwrap();
        assert_eq!(r1.metrics, r2.metrics);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let files = r1.write(&path).unwrap();
        assert_eq!(files.len(), 2);
        let back = load_report(&path).unwrap();
        assert_eq!(back.checks, r1.checks);
        assert_eq!(back.recompute_pass(), r1.pass);
    }

    #[test]
    fn tampered_report_fails_recomputation() {
        let mut c = SuiteConfig::new(Suite::Tensorization);
        c.resolutions = vec![8];
        let mut r = run_suite(&c).unwrap();
        r.checks[0].observed = 1e9;
        assert!(!r.recompute_pass());
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()), Some(s));
        }
        assert_eq!(Suite::parse("nope"), None);
    }
}
