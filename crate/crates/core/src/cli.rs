//! Command-line front end. `cli_main` returns the process exit code:
//! 0 on success or a passing suite, 1 on a failing suite, 2 on usage or
//! input errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dsolver::{
    batch_distances, read_pairs, write_distances, DistanceRecord, Method, OracleKind, PairQuery, Resolution,
};
use crate::energy::{bl_energy, load_function, EnergyMode};
use crate::error::{Error, Result};
use crate::product::{build_warped, Stencil, WarpedProduct};
use crate::profile::{load_profile, save_profile, WarpProfile};
use crate::space::{generate, load_space, save_space, Generator};
use crate::verify::{load_config, run_suite, Fixture, Suite, SuiteConfig};

#[derive(Debug, Parser)]
#[command(name = "warpmms", version, about = "Warped products of metric measure graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GenKind {
    Circle,
    Interval,
    RandomGeometric,
    Square,
    Cylinder,
    Cone,
    Suspension,
    DoubleCone,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StencilArg {
    Axis,
    Diagonal,
    Distance,
}

impl From<StencilArg> for Stencil {
    fn from(s: StencilArg) -> Self {
        match s {
            StencilArg::Axis => Stencil::Axis,
            StencilArg::Diagonal => Stencil::Diagonal,
            StencilArg::Distance => Stencil::DISTANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum DistMethod {
    Graph,
    Dsolver,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a base space (and, for product fixtures, its warp profile).
    Gen {
        kind: GenKind,
        /// Base vertices; for product fixtures also the number of levels.
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        /// Interval length or circle circumference.
        #[arg(long, default_value_t = 1.0)]
        size: f64,
        /// Connection radius of a random geometric graph.
        #[arg(long, default_value_t = 0.3)]
        radius: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Profile output for product fixtures; defaults to `<out>.profile.json`.
        #[arg(long)]
        profile_out: Option<PathBuf>,
    },
    /// Build a product and export its graph and node table.
    Build {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, value_enum, default_value_t = StencilArg::Diagonal)]
        stencil: StencilArg,
        /// Regrid analytic profiles to this many levels.
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Node table; defaults to `<out>.nodes.csv`.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Batch distances for a CSV of pairs.
    Dist {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_enum, default_value_t = DistMethod::Dsolver)]
        method: DistMethod,
        /// Solver grid size, or the level count for the graph method.
        #[arg(long)]
        resolution: Option<usize>,
        /// Use the closed form when the profile matches one.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Energies of a function file on a product.
    Energy {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        function: PathBuf,
        #[arg(long, value_enum, default_value_t = StencilArg::Diagonal)]
        stencil: StencilArg,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verification suite.
    Verify {
        suite: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run at this single resolution instead of the configured ones.
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` (including the program name) and runs the command.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::SuiteFailed) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

enum Outcome {
    Done,
    SuiteFailed,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}.{suffix}", path.with_extension("").display()))
}

fn load_pair(space: &Path, profile: &Path, levels: Option<usize>) -> Result<(crate::space::MetricMeasureSpace, WarpProfile)> {
    let base = load_space(space)?;
    let mut profile = load_profile(profile)?;
    if let Some(m) = levels {
        profile = profile.regrid(m)?;
    }
    Ok((base, profile))
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Gen {
            kind,
            resolution,
            size,
            radius,
            seed,
            out,
            profile_out,
        } => {
            let fixture = match kind {
                GenKind::Circle => None,
                GenKind::Interval => None,
                GenKind::RandomGeometric => None,
                GenKind::Square => Some(Fixture::Square),
                GenKind::Cylinder => Some(Fixture::Cylinder),
                GenKind::Cone => Some(Fixture::Cone),
                GenKind::Suspension => Some(Fixture::Suspension),
                GenKind::DoubleCone => Some(Fixture::DoubleCone),
            };
            match fixture {
                None => {
                    let generator = match kind {
                        GenKind::Circle => Generator::Circle {
                            n: resolution,
                            circumference: size,
                        },
                        GenKind::Interval => Generator::Interval { n: resolution, length: size },
                        _ => Generator::RandomGeometric {
                            n: resolution,
                            radius,
                            seed,
                        },
                    };
                    save_space(&generate(&generator)?, &out)?;
                    println!("wrote {}", out.display());
                }
                Some(f) => {
                    let profile_path = profile_out.unwrap_or_else(|| sibling(&out, "profile.json"));
                    save_space(&f.base(resolution)?, &out)?;
                    save_profile(&f.profile(resolution)?, &profile_path)?;
                    println!("wrote {} and {}", out.display(), profile_path.display());
                }
            }
        }
        Command::Build {
            space,
            profile,
            stencil,
            resolution,
            out,
            table,
        } => {
            let (base, profile) = load_pair(&space, &profile, resolution)?;
            let p = build_warped(&base, &profile, stencil.into())?;
            let table = table.unwrap_or_else(|| sibling(&out, "nodes.csv"));
            p.export(&out, &table)?;
            println!(
                "{} nodes, {} edges, apex levels {:?}; wrote {} and {}",
                p.node_count(),
                p.graph().edges().len(),
                p.apex_levels(),
                out.display(),
                table.display()
            );
        }
        Command::Dist {
            space,
            profile,
            pairs,
            method,
            resolution,
            oracle,
            out,
        } => {
            let pairs = read_pairs(&pairs)?;
            let records = match method {
                DistMethod::Dsolver => {
                    let (base, profile) = load_pair(&space, &profile, None)?;
                    let kind = if oracle { OracleKind::matching(&profile) } else { None };
                    let res = resolution.map_or(Resolution::ORACLE, Resolution::square);
                    batch_distances(base.distances(), &profile, &pairs, res, kind)?
                }
                DistMethod::Graph => {
                    let (base, profile) = load_pair(&space, &profile, resolution)?;
                    let p = build_warped(&base, &profile, Stencil::DISTANCE)?;
                    graph_distances(&p, &pairs)?
                }
            };
            write_distances(&out, &records)?;
            println!("{} distances written to {}", records.len(), out.display());
        }
        Command::Energy {
            space,
            profile,
            function,
            stencil,
            resolution,
            out,
        } => {
            let (base, profile) = load_pair(&space, &profile, resolution)?;
            let p = build_warped(&base, &profile, stencil.into())?;
            let f = load_function(&function, &p)?;
            let mode = if p.is_cartesian() {
                EnergyMode::Cartesian
            } else {
                EnergyMode::Warped
            };
            let field = bl_energy(&f, mode)?;
            let summary = EnergySummary {
                mode,
                nodes: p.node_count(),
                l2_norm_sq: f.l2_norm_sq(),
                e_partial_t: field.e_partial_t,
                e_partial_x: field.e_partial_x,
                e_combined: field.e_combined,
                e_slope: field.e_slope,
                identity_violations: field.identity_violations().len(),
            };
            let text = serde_json::to_string_pretty(&summary)?;
            std::fs::write(&out, &text).map_err(|e| Error::io(&out, e))?;
            println!("{text}");
        }
        Command::Verify {
            suite,
            config,
            seed,
            resolution,
            out,
        } => {
            let suite = Suite::parse(&suite).ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidParameter(format!("unknown suite {suite:?}; expected one of {}", names.join(", ")))
            })?;
            let mut cfg = match config {
                Some(path) => load_config(path)?,
                None => SuiteConfig::new(suite),
            };
            if cfg.suite != suite {
                return Err(Error::InvalidParameter(format!(
                    "config is for suite {}, not {}",
                    cfg.suite.name(),
                    suite.name()
                )));
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = resolution {
                cfg.resolutions = vec![r];
            }
            let report = run_suite(&cfg)?;
            let files = report.write(&out)?;
            for c in &report.checks {
                println!(
                    "[{}] {}: {:.6e} {} {:.6e}",
                    if c.passed { "pass" } else { "FAIL" },
                    c.name,
                    c.observed,
                    match c.relation {
                        crate::verify::Relation::AtMost => "<=",
                        crate::verify::Relation::AtLeast => ">=",
                    },
                    c.limit
                );
            }
            println!(
                "suite {}: {} ({} files written)",
                suite.name(),
                if report.pass { "PASS" } else { "FAIL" },
                files.len()
            );
            if !report.pass {
                return Ok(Outcome::SuiteFailed);
            }
        }
    }
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct EnergySummary {
    mode: EnergyMode,
    nodes: usize,
    l2_norm_sq: f64,
    e_partial_t: f64,
    e_partial_x: f64,
    e_combined: f64,
    e_slope: f64,
    identity_violations: usize,
}

/// Grid level holding `t`; pairs must sit on the product grid.
fn level_of(profile: &WarpProfile, t: f64) -> Result<usize> {
    let (a, b) = profile.interval();
    if !profile.contains(t) {
        return Err(Error::OutOfInterval { t, a, b });
    }
    let i = ((t - a) / profile.step()).round() as usize;
    if (profile.level(i) - t).abs() > 1e-9 * (b - a) {
        return Err(Error::InvalidParameter(format!(
            "t = {t} is not a grid level (nearest {})",
            profile.level(i)
        )));
    }
    Ok(i)
}

fn graph_distances(p: &WarpedProduct, pairs: &[PairQuery]) -> Result<Vec<DistanceRecord>> {
    let n = p.base().vertex_count();
    let mut rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut ends = Vec::with_capacity(pairs.len());
    for q in pairs {
        if q.base_vertex0 >= n || q.base_vertex1 >= n {
            return Err(Error::OutOfRange(format!("base vertex outside 0..{n}")));
        }
        let u = p.node(level_of(p.profile(), q.t0)?, q.base_vertex0);
        let v = p.node(level_of(p.profile(), q.t1)?, q.base_vertex1);
        ends.push((u, v));
    }
    let sources: Vec<usize> = {
        let mut s: Vec<usize> = ends.iter().map(|&(u, _)| u).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    for (src, row) in sources.iter().zip(p.graph().shortest_paths(&sources)) {
        rows.insert(*src, row);
    }
    Ok(pairs
        .iter()
        .zip(&ends)
        .map(|(q, &(u, v))| DistanceRecord {
            t0: q.t0,
            base_vertex0: q.base_vertex0,
            t1: q.t1,
            base_vertex1: q.base_vertex1,
            distance: rows[&u][v],
            method: Method::Graph,
        })
        .collect())
}
