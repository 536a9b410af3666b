//! Warping functions `w_d`, `w_m` sampled on a uniform grid of levels over
//! a closed interval, plus zero-set diagnostics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values below this are structural zeros (cone apex), not round-off.
pub const ZERO_TOL: f64 = 1e-14;

#[inline]
pub fn is_zero(v: f64) -> bool {
    v < ZERO_TOL
}

/// A warping function on the interval.
#[derive(Debug, Clone, PartialEq)]
pub enum WarpFn {
    Constant(f64),
    /// `slope * t + offset`
    Linear { slope: f64, offset: f64 },
    /// `amplitude * sin(frequency * t + phase)`
    Sin {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// Coefficients in ascending powers of `t`.
    Poly(Vec<f64>),
    /// One value per grid level, linearly interpolated.
    Table(Vec<f64>),
}

impl WarpFn {
    pub fn identity() -> Self {
        WarpFn::Linear {
            slope: 1.0,
            offset: 0.0,
        }
    }

    pub fn sin() -> Self {
        WarpFn::Sin {
            amplitude: 1.0,
            frequency: 1.0,
            phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarpKind {
    Constant,
    Linear,
    Sin,
    Poly,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Params {
    Scalar(f64),
    List(Vec<f64>),
}

impl Default for Params {
    fn default() -> Self {
        Params::List(Vec::new())
    }
}

impl Params {
    fn into_vec(self) -> Vec<f64> {
        match self {
            Params::Scalar(x) => vec![x],
            Params::List(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpFnSpec {
    pub kind: WarpKind,
    #[serde(default)]
    pub params: Params,
}

impl TryFrom<WarpFnSpec> for WarpFn {
    type Error = Error;

    fn try_from(spec: WarpFnSpec) -> Result<Self> {
        let p = spec.params.into_vec();
        let bad = |what: &str| Err(Error::Parse(format!("{what}: got {} params", p.len())));
        Ok(match spec.kind {
            WarpKind::Constant => match p.as_slice() {
                [c] => WarpFn::Constant(*c),
                _ => return bad("constant takes exactly one param"),
            },
            WarpKind::Linear => match p.as_slice() {
                [] => WarpFn::identity(),
                [s] => WarpFn::Linear { slope: *s, offset: 0.0 },
                [s, o] => WarpFn::Linear { slope: *s, offset: *o },
                _ => return bad("linear takes [slope, offset]"),
            },
            WarpKind::Sin => {
                if p.len() > 3 {
                    return bad("sin takes [amplitude, frequency, phase]");
                }
                WarpFn::Sin {
                    amplitude: p.first().copied().unwrap_or(1.0),
                    frequency: p.get(1).copied().unwrap_or(1.0),
                    phase: p.get(2).copied().unwrap_or(0.0),
                }
            }
            WarpKind::Poly => {
                if p.is_empty() {
                    return bad("poly needs at least one coefficient");
                }
                WarpFn::Poly(p)
            }
            WarpKind::Table => WarpFn::Table(p),
        })
    }
}

impl From<&WarpFn> for WarpFnSpec {
    fn from(f: &WarpFn) -> Self {
        let (kind, params) = match f {
            WarpFn::Constant(c) => (WarpKind::Constant, vec![*c]),
            WarpFn::Linear { slope, offset } => (WarpKind::Linear, vec![*slope, *offset]),
            WarpFn::Sin {
                amplitude,
                frequency,
                phase,
            } => (WarpKind::Sin, vec![*amplitude, *frequency, *phase]),
            WarpFn::Poly(c) => (WarpKind::Poly, c.clone()),
            WarpFn::Table(v) => (WarpKind::Table, v.clone()),
        };
        WarpFnSpec {
            kind,
            params: Params::List(params),
        }
    }
}

/// Profile file layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileFile {
    pub interval: [f64; 2],
    pub grid: usize,
    pub w_d: WarpFnSpec,
    pub w_m: WarpFnSpec,
}

/// `w_d`, `w_m` over `[a, b]` with `M` uniform levels.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpProfile {
    a: f64,
    b: f64,
    grid_count: usize,
    w_d: WarpFn,
    w_m: WarpFn,
    samples_d: Vec<f64>,
    samples_m: Vec<f64>,
}

impl WarpProfile {
    /// Validates the interval, grid, and table sizes and caches samples.
    /// Compatibility of the zero sets is checked separately
    /// ([`WarpProfile::check_compatibility`]).
    pub fn new(interval: (f64, f64), grid_count: usize, w_d: WarpFn, w_m: WarpFn) -> Result<Self> {
        let (a, b) = interval;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidParameter(format!("interval [{a}, {b}] must satisfy a < b")));
        }
        if grid_count < 2 {
            return Err(Error::InvalidParameter(format!("grid count {grid_count} < 2")));
        }
        for (name, f) in [("w_d", &w_d), ("w_m", &w_m)] {
            if let WarpFn::Table(v) = f {
                if v.len() != grid_count {
                    return Err(Error::InvalidParameter(format!(
                        "{name} table has {} entries, expected {grid_count}",
                        v.len()
                    )));
                }
            }
        }
        let mut p = WarpProfile {
            a,
            b,
            grid_count,
            w_d,
            w_m,
            samples_d: Vec::new(),
            samples_m: Vec::new(),
        };
        let mut samples_d = Vec::with_capacity(grid_count);
        let mut samples_m = Vec::with_capacity(grid_count);
        for i in 0..grid_count {
            let t = p.level(i);
            samples_d.push(p.sample_checked("w_d", &p.w_d, i, t)?);
            samples_m.push(p.sample_checked("w_m", &p.w_m, i, t)?);
        }
        p.samples_d = samples_d;
        p.samples_m = samples_m;
        Ok(p)
    }

    /// `w_d = w_m = t` on `[0, 1]`: the cone.
    pub fn cone(grid_count: usize) -> Result<Self> {
        Self::new((0.0, 1.0), grid_count, WarpFn::identity(), WarpFn::identity())
    }

    /// `w_d = w_m = sin t` on `[0, π]`: the spherical suspension.
    pub fn suspension(grid_count: usize) -> Result<Self> {
        Self::new((0.0, std::f64::consts::PI), grid_count, WarpFn::sin(), WarpFn::sin())
    }

    /// `w_d = w_m = 1`: the Cartesian product.
    pub fn flat(interval: (f64, f64), grid_count: usize) -> Result<Self> {
        Self::new(interval, grid_count, WarpFn::Constant(1.0), WarpFn::Constant(1.0))
    }

    fn sample_checked(&self, name: &str, f: &WarpFn, i: usize, t: f64) -> Result<f64> {
        let v = match f {
            WarpFn::Table(tab) => tab[i],
            _ => eval_closed(f, t),
        };
        if !v.is_finite() || v < -ZERO_TOL {
            return Err(Error::InvalidParameter(format!(
                "{name} = {v} at level {i} (t = {t}) is not a finite nonnegative value"
            )));
        }
        Ok(v.max(0.0))
    }

    pub fn from_file(file: ProfileFile) -> Result<Self> {
        Self::new(
            (file.interval[0], file.interval[1]),
            file.grid,
            file.w_d.try_into()?,
            file.w_m.try_into()?,
        )
    }

    pub fn to_file(&self) -> ProfileFile {
        ProfileFile {
            interval: [self.a, self.b],
            grid: self.grid_count,
            w_d: (&self.w_d).into(),
            w_m: (&self.w_m).into(),
        }
    }

    /// Same warps on a different grid. Table warps cannot be regridded.
    pub fn regrid(&self, grid_count: usize) -> Result<Self> {
        Self::new(self.interval(), grid_count, self.w_d.clone(), self.w_m.clone())
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn grid_count(&self) -> usize {
        self.grid_count
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / (self.grid_count - 1) as f64
    }

    /// `t_i`, with the last level pinned to `b`.
    pub fn level(&self, i: usize) -> f64 {
        if i + 1 == self.grid_count {
            self.b
        } else {
            self.a + i as f64 * self.step()
        }
    }

    pub fn levels(&self) -> Vec<f64> {
        (0..self.grid_count).map(|i| self.level(i)).collect()
    }

    pub fn samples_wd(&self) -> &[f64] {
        &self.samples_d
    }

    pub fn samples_wm(&self) -> &[f64] {
        &self.samples_m
    }

    pub fn w_d(&self) -> &WarpFn {
        &self.w_d
    }

    pub fn w_m(&self) -> &WarpFn {
        &self.w_m
    }

    pub fn contains(&self, t: f64) -> bool {
        let slack = 1e-12 * (self.b - self.a);
        t >= self.a - slack && t <= self.b + slack
    }

    /// `(w_d(t), w_m(t))`; closed forms exactly, tables by linear interpolation.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        if !t.is_finite() || !self.contains(t) {
            return Err(Error::OutOfInterval {
                t,
                a: self.a,
                b: self.b,
            });
        }
        Ok((self.wd_at(t), self.wm_at(t)))
    }

    /// `w_d(t)` with `t` clamped into the interval.
    #[inline]
    pub fn wd_at(&self, t: f64) -> f64 {
        self.eval_one(&self.w_d, &self.samples_d, t)
    }

    #[inline]
    pub fn wm_at(&self, t: f64) -> f64 {
        self.eval_one(&self.w_m, &self.samples_m, t)
    }

    fn eval_one(&self, f: &WarpFn, samples: &[f64], t: f64) -> f64 {
        let t = t.clamp(self.a, self.b);
        match f {
            WarpFn::Table(_) => {
                let s = (t - self.a) / self.step();
                let nearest = s.round();
                if (s - nearest).abs() < 1e-9 {
                    return samples[(nearest as usize).min(self.grid_count - 1)];
                }
                let i = (s.floor() as usize).min(self.grid_count - 2);
                let frac = s - i as f64;
                samples[i] + frac * (samples[i + 1] - samples[i])
            }
            _ => eval_closed(f, t).max(0.0),
        }
    }

    pub fn check_compatibility(&self) -> Result<()> {
        for i in 0..self.grid_count {
            if is_zero(self.samples_d[i]) && !is_zero(self.samples_m[i]) {
                return Err(Error::Compatibility {
                    level: i,
                    t: self.level(i),
                    w_m: self.samples_m[i],
                });
            }
        }
        Ok(())
    }

    pub fn analyze_zero_set(&self) -> Result<ZeroSetReport> {
        self.check_compatibility()?;
        let zero_levels_wd: Vec<usize> =
            (0..self.grid_count).filter(|&i| is_zero(self.samples_d[i])).collect();
        let zero_levels_wm: Vec<usize> =
            (0..self.grid_count).filter(|&i| is_zero(self.samples_m[i])).collect();
        let is_discrete = zero_levels_wm.windows(2).all(|w| w[1] != w[0] + 1);
        let zero_times: Vec<f64> = zero_levels_wm.iter().map(|&i| self.level(i)).collect();
        let linear_decay_constant = if zero_times.is_empty() {
            None
        } else {
            let c = (0..self.grid_count)
                .filter(|i| !is_zero(self.samples_m[*i]))
                .map(|i| self.samples_m[i] / distance_to(&zero_times, self.level(i)))
                .fold(0.0, f64::max);
            Some(c)
        };
        Ok(ZeroSetReport {
            zero_levels_wd,
            zero_levels_wm,
            zero_times_wm: zero_times,
            is_discrete,
            linear_decay_constant,
        })
    }
}

fn eval_closed(f: &WarpFn, t: f64) -> f64 {
    match f {
        WarpFn::Constant(c) => *c,
        WarpFn::Linear { slope, offset } => slope * t + offset,
        WarpFn::Sin {
            amplitude,
            frequency,
            phase,
        } => amplitude * (frequency * t + phase).sin(),
        WarpFn::Poly(c) => c.iter().rev().fold(0.0, |acc, &k| acc * t + k),
        WarpFn::Table(_) => unreachable!("tables are evaluated from samples"),
    }
}

fn distance_to(points: &[f64], t: f64) -> f64 {
    points.iter().map(|z| (t - z).abs()).fold(f64::INFINITY, f64::min)
}

/// Zero-set diagnostics for `w_d` and `w_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSetReport {
    pub zero_levels_wd: Vec<usize>,
    pub zero_levels_wm: Vec<usize>,
    pub zero_times_wm: Vec<f64>,
    /// No two adjacent levels are zeros of `w_m`.
    pub is_discrete: bool,
    /// Smallest `C` with `w_m(t_i) <= C D(t_i)` at every sampled level.
    pub linear_decay_constant: Option<f64>,
}

impl ZeroSetReport {
    /// `D(t)`: distance from `t` to the nearest zero of `w_m`.
    pub fn distance_to_zero(&self, t: f64) -> f64 {
        distance_to(&self.zero_times_wm, t)
    }
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<WarpProfile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_profile(&text)
}

pub fn parse_profile(text: &str) -> Result<WarpProfile> {
    let file: ProfileFile = serde_json::from_str(text)?;
    WarpProfile::from_file(file)
}

pub fn save_profile(profile: &WarpProfile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&profile.to_file())?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
