//! The reduced distance `D(t0, t1, ℓ)`: the length of the shortest curve
//! from `(t0, 0)` to `(t1, ℓ)` in the strip `[a, b] × [0, ℓ]` with line
//! element `dt² + w_d(t)² dθ²`. The warped distance between `(t0, x0)` and
//! `(t1, x1)` is `D(t0, t1, d(x0, x1))`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{WarpFn, WarpProfile};
use crate::space::DistanceMatrix;

/// Grid size `(N_t, N_θ)` of the strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub nt: usize,
    pub ntheta: usize,
}

impl Resolution {
    pub const ORACLE: Resolution = Resolution::square(256);
    pub const ALL_PAIRS: Resolution = Resolution::square(64);

    pub const fn square(n: usize) -> Self {
        Resolution { nt: n, ntheta: n }
    }

    pub fn doubled(self) -> Self {
        Resolution {
            nt: 2 * self.nt,
            ntheta: 2 * self.ntheta,
        }
    }
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution::ORACLE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicQuery {
    pub t0: f64,
    pub t1: f64,
    pub ell: f64,
    pub resolution: Resolution,
}

impl GeodesicQuery {
    pub fn new(t0: f64, t1: f64, ell: f64) -> Self {
        GeodesicQuery {
            t0,
            t1,
            ell,
            resolution: Resolution::default(),
        }
    }

    pub fn with_resolution(mut self, resolution: Resolution) -> Self {
        self.resolution = resolution;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Grid,
    Oracle,
    /// Shortest path in the product graph.
    Graph,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Grid => "grid",
            Method::Oracle => "oracle",
            Method::Graph => "graph",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DSolution {
    pub value: f64,
    /// Polyline of `(t, θ)` points from `(t0, 0)` to `(t1, ℓ)`.
    pub path: Vec<(f64, f64)>,
    pub method: Method,
}

// (row step, column step); columns never decrease
const MOVES: [(isize, usize); 9] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (1, 1),
    (-1, 1),
    (1, 2),
    (-1, 2),
    (2, 1),
    (-2, 1),
];

const SMOOTH_SEGMENTS: usize = 128;
const NEWTON_ITERS: usize = 100;
// one polish pass, at most 20 halvings per vertex
const POLISH_SWEEPS: usize = 1;
const POLISH_TRIES: usize = 20;
const QUAD_PANELS: usize = 4;

/// Computes `D(t0, t1, ℓ)` by a grid shortest path followed by path
/// smoothing. Symmetric in `(t0, t1)` by construction.
pub fn solve_d(profile: &WarpProfile, query: &GeodesicQuery) -> Result<DSolution> {
    let (a, b) = profile.interval();
    for t in [query.t0, query.t1] {
        if !t.is_finite() || !profile.contains(t) {
            return Err(Error::OutOfInterval { t, a, b });
        }
    }
    if !(query.ell.is_finite() && query.ell >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "base distance must be finite and nonnegative, got {}",
            query.ell
        )));
    }
    let Resolution { nt, ntheta } = query.resolution;
    if nt < 2 || ntheta < 2 {
        return Err(Error::InvalidParameter(format!(
            "resolution must be at least 2 x 2, got {nt} x {ntheta}"
        )));
    }
    let t0 = query.t0.clamp(a, b);
    let t1 = query.t1.clamp(a, b);
    let ell = query.ell;
    if ell == 0.0 {
        return Ok(DSolution {
            value: (t1 - t0).abs(),
            path: vec![(t0, 0.0), (t1, 0.0)],
            method: Method::Grid,
        });
    }
    // canonical orientation t0 <= t1; the mirrored problem is reflected back
    let flipped = t0 > t1;
    let (lo, hi) = if flipped { (t1, t0) } else { (t0, t1) };
    let (grid_value, grid_path) = grid_shortest_path(profile, lo, hi, ell, nt, ntheta);
    // the grid can prefer a detour through a zero of w_d over a nearby
    // geodesic, so the straight chord is smoothed as a second start
    let (smoothed_value, smoothed) = [grid_path.clone(), vec![(lo, 0.0), (hi, ell)]]
        .into_iter()
        .map(|start| {
            let path = smooth(profile, &start, ell);
            (polyline_length(profile, &path), path)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .expect("two starts");
    let (value, mut path) = if smoothed_value < grid_value {
        (smoothed_value, smoothed)
    } else {
        (grid_value, grid_path)
    };
    if flipped {
        path.reverse();
        for p in path.iter_mut() {
            p.1 = ell - p.1;
        }
    }
    Ok(DSolution {
        value,
        path,
        method: Method::Grid,
    })
}

/// Rows: uniform levels over `[a, b]` with `t0` and `t1` inserted.
fn grid_rows(profile: &WarpProfile, t0: f64, t1: f64, nt: usize) -> (Vec<f64>, usize, usize) {
    let (a, b) = profile.interval();
    let h = (b - a) / (nt - 1) as f64;
    let mut rows: Vec<f64> = (0..nt)
        .map(|i| if i + 1 == nt { b } else { a + i as f64 * h })
        .collect();
    let snap = 1e-9 * h;
    for t in [t0, t1] {
        if rows.iter().all(|r| (r - t).abs() > snap) {
            rows.push(t);
        }
    }
    rows.sort_by(f64::total_cmp);
    let find = |t: f64| {
        rows.iter()
            .enumerate()
            .min_by(|x, y| (x.1 - t).abs().total_cmp(&(y.1 - t).abs()))
            .map(|(i, _)| i)
            .expect("rows are nonempty")
    };
    let (r0, r1) = (find(t0), find(t1));
    rows[r0] = t0;
    rows[r1] = t1;
    (rows, r0, r1)
}

fn grid_shortest_path(
    profile: &WarpProfile,
    t0: f64,
    t1: f64,
    ell: f64,
    nt: usize,
    ntheta: usize,
) -> (f64, Vec<(f64, f64)>) {
    let (rows, r0, r1) = grid_rows(profile, t0, t1, nt);
    let nr = rows.len();
    let dtheta = ell / (ntheta - 1) as f64;

    // move costs depend only on the row because the metric ignores θ
    let mut cost = vec![[f64::INFINITY; MOVES.len()]; nr];
    for (r, c) in cost.iter_mut().enumerate() {
        for (k, &(dr, dc)) in MOVES.iter().enumerate() {
            let target = r as isize + dr;
            if target < 0 || target >= nr as isize {
                continue;
            }
            let p = (rows[r], 0.0);
            let q = (rows[target as usize], dc as f64 * dtheta);
            c[k] = segment_length(profile, p, q);
        }
    }

    let idx = |r: usize, j: usize| j * nr + r;
    let mut dist = vec![f64::INFINITY; nr * ntheta];
    let mut pred = vec![usize::MAX; nr * ntheta];
    dist[idx(r0, 0)] = 0.0;
    for j in 0..ntheta {
        // arrivals from earlier columns
        for r in 0..nr {
            for (k, &(dr, dc)) in MOVES.iter().enumerate() {
                if dc == 0 || j < dc {
                    continue;
                }
                let src = r as isize - dr;
                if src < 0 || src >= nr as isize {
                    continue;
                }
                let src = src as usize;
                let cand = dist[idx(src, j - dc)] + cost[src][k];
                if cand < dist[idx(r, j)] {
                    dist[idx(r, j)] = cand;
                    pred[idx(r, j)] = idx(src, j - dc);
                }
            }
        }
        // vertical moves within the column: one upward and one downward sweep
        for r in 1..nr {
            let cand = dist[idx(r - 1, j)] + cost[r - 1][0];
            if cand < dist[idx(r, j)] {
                dist[idx(r, j)] = cand;
                pred[idx(r, j)] = idx(r - 1, j);
            }
        }
        for r in (0..nr - 1).rev() {
            let cand = dist[idx(r + 1, j)] + cost[r + 1][1];
            if cand < dist[idx(r, j)] {
                dist[idx(r, j)] = cand;
                pred[idx(r, j)] = idx(r + 1, j);
            }
        }
    }

    let end = idx(r1, ntheta - 1);
    let mut path = Vec::new();
    let mut cur = end;
    while cur != usize::MAX {
        let (j, r) = (cur / nr, cur % nr);
        let theta = if j + 1 == ntheta { ell } else { j as f64 * dtheta };
        path.push((rows[r], theta));
        cur = pred[cur];
    }
    path.reverse();
    (dist[end], path)
}

/// `∫ sqrt(ṫ² + w_d(t)² θ̇²)` along the straight segment `p → q`.
fn segment_length(profile: &WarpProfile, p: (f64, f64), q: (f64, f64)) -> f64 {
    let dt = q.0 - p.0;
    let dth = q.1 - p.1;
    if dth == 0.0 {
        return dt.abs();
    }
    if dt == 0.0 {
        return profile.wd_at(p.0) * dth.abs();
    }
    let f = |s: f64| dt.hypot(profile.wd_at(p.0 + s * dt) * dth);
    let h = 1.0 / QUAD_PANELS as f64;
    let mut acc = f(0.0) + f(1.0);
    for k in 1..QUAD_PANELS {
        acc += f(k as f64 * h) * 2.0;
    }
    for k in 0..QUAD_PANELS {
        acc += f((k as f64 + 0.5) * h) * 4.0;
    }
    acc * h / 6.0
}

fn polyline_length(profile: &WarpProfile, path: &[(f64, f64)]) -> f64 {
    path.windows(2)
        .map(|w| segment_length(profile, w[0], w[1]))
        .sum()
}

/// Resamples to `segments` pieces of equal length in coordinates
/// normalised by the strip size.
fn resample(path: &[(f64, f64)], segments: usize, st: f64, sth: f64) -> Vec<(f64, f64)> {
    let mut cum = vec![0.0];
    for w in path.windows(2) {
        let d = ((w[1].0 - w[0].0) / st).hypot((w[1].1 - w[0].1) / sth);
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();
    let last = *path.last().unwrap();
    if total == 0.0 {
        return vec![path[0], last];
    }
    let mut out = Vec::with_capacity(segments + 1);
    let mut k = 0;
    for s in 0..=segments {
        if s == segments {
            out.push(last);
            break;
        }
        let target = total * s as f64 / segments as f64;
        while k + 2 < cum.len() && cum[k + 1] < target {
            k += 1;
        }
        let span = cum[k + 1] - cum[k];
        let frac = if span > 0.0 {
            ((target - cum[k]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (p, q) = (path[k], path[k + 1]);
        out.push((p.0 + frac * (q.0 - p.0), p.1 + frac * (q.1 - p.1)));
    }
    out
}

/// Smooths a start path: equal-arclength resampling, damped Newton on the
/// discrete path energy, then a coordinate-descent polish of the length.
fn smooth(profile: &WarpProfile, start: &[(f64, f64)], ell: f64) -> Vec<(f64, f64)> {
    let (a, b) = profile.interval();
    let mut path = resample(start, SMOOTH_SEGMENTS, b - a, ell);
    relax_energy(profile, &mut path, ell);
    polish(profile, &mut path, ell);
    if polyline_length(profile, &path) < polyline_length(profile, start) {
        path
    } else {
        start.to_vec()
    }
}

/// Pointwise pattern search on interior vertices with step halving.
fn polish(profile: &WarpProfile, path: &mut [(f64, f64)], ell: f64) {
    let (a, b) = profile.interval();
    let (st, sth) = (b - a, ell);
    let h0 = 0.05 / (path.len() - 1) as f64;
    for _ in 0..POLISH_SWEEPS {
        for k in 1..path.len() - 1 {
            let local = |p: (f64, f64), path: &[(f64, f64)]| {
                segment_length(profile, path[k - 1], p) + segment_length(profile, p, path[k + 1])
            };
            let mut best = local(path[k], path);
            let mut h = h0;
            let mut tries = 0;
            while h > h0 * 1e-3 && tries < POLISH_TRIES {
                tries += 1;
                let p = path[k];
                let mut improved = false;
                for (dt, dth) in [(h * st, 0.0), (-h * st, 0.0), (0.0, h * sth), (0.0, -h * sth)] {
                    let cand = ((p.0 + dt).clamp(a, b), (p.1 + dth).clamp(0.0, ell));
                    let c = local(cand, path);
                    if c < best {
                        best = c;
                        path[k] = cand;
                        improved = true;
                        break;
                    }
                }
                h = if improved { (2.0 * h).min(h0) } else { 0.5 * h };
            }
        }
    }
}

type Mat2 = [[f64; 2]; 2];

/// `E = Σ Δt² + g(t̄) Δθ²` with `g = w_d²` at segment midpoints.
fn path_energy(profile: &WarpProfile, path: &[(f64, f64)]) -> f64 {
    path.windows(2)
        .map(|w| {
            let (dt, dth) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            let wd = profile.wd_at(0.5 * (w[0].0 + w[1].0));
            dt * dt + wd * wd * dth * dth
        })
        .sum()
}

/// Minimises the discrete energy over interior vertices by
/// Levenberg-Marquardt steps with a block-tridiagonal Hessian. Minimisers
/// are constant-speed discrete geodesics.
fn relax_energy(profile: &WarpProfile, path: &mut Vec<(f64, f64)>, ell: f64) {
    let (a, b) = profile.interval();
    let n = path.len();
    if n < 3 {
        return;
    }
    let fd = 1e-5 * (b - a);
    let g = |t: f64| profile.wd_at(t).powi(2);
    let mut energy = path_energy(profile, path);
    let mut lambda = 1e-6;
    for _ in 0..NEWTON_ITERS {
        // gradient and Hessian blocks for interior vertices 1..n-1
        let m = n - 2;
        let mut grad = vec![[0.0; 2]; m];
        let mut diag = vec![[[0.0; 2]; 2]; m];
        let mut upper = vec![[[0.0; 2]; 2]; m.saturating_sub(1)];
        for s in 0..n - 1 {
            let (p, q) = (path[s], path[s + 1]);
            let (dt, dth) = (q.0 - p.0, q.1 - p.1);
            let mid = 0.5 * (p.0 + q.0);
            let g0 = g(mid);
            let (gp, gm) = (g((mid + fd).min(b)), g((mid - fd).max(a)));
            let span = (mid + fd).min(b) - (mid - fd).max(a);
            let g1 = (gp - gm) / span;
            let g2 = 4.0 * (gp - 2.0 * g0 + gm) / (span * span);
            // derivatives with respect to (p.t, p.θ) and (q.t, q.θ)
            let dp = [-2.0 * dt + 0.5 * g1 * dth * dth, -2.0 * g0 * dth];
            let dq = [2.0 * dt + 0.5 * g1 * dth * dth, 2.0 * g0 * dth];
            let tt = 0.25 * g2 * dth * dth;
            let hpp = [[2.0 + tt, -g1 * dth], [-g1 * dth, 2.0 * g0]];
            let hqq = [[2.0 + tt, g1 * dth], [g1 * dth, 2.0 * g0]];
            let hpq = [[-2.0 + tt, g1 * dth], [-g1 * dth, -2.0 * g0]];
            if s >= 1 {
                let i = s - 1;
                add2(&mut grad[i], dp);
                addm(&mut diag[i], hpp);
            }
            if s + 1 <= m {
                let j = s;
                add2(&mut grad[j], dq);
                addm(&mut diag[j], hqq);
            }
            if s >= 1 && s + 1 <= m {
                addm(&mut upper[s - 1], hpq);
            }
        }
        let scale = diag.iter().map(|d| d[0][0].abs() + d[1][1].abs()).sum::<f64>() / (2 * m) as f64;
        let mut accepted = false;
        for _ in 0..12 {
            let damped: Vec<Mat2> = diag
                .iter()
                .map(|d| [[d[0][0] + lambda * scale, d[0][1]], [d[1][0], d[1][1] + lambda * scale]])
                .collect();
            let rhs: Vec<[f64; 2]> = grad.iter().map(|g| [-g[0], -g[1]]).collect();
            let Some(step) = block_tridiagonal_solve(&damped, &upper, &rhs) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = path.clone();
            for (k, d) in step.iter().enumerate() {
                let v = &mut trial[k + 1];
                v.0 = (v.0 + d[0]).clamp(a, b);
                v.1 = (v.1 + d[1]).clamp(0.0, ell);
            }
            let e = path_energy(profile, &trial);
            if e < energy {
                let gain = energy - e;
                *path = trial;
                energy = e;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if gain <= 1e-15 * energy {
                    return;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            return;
        }
    }
}

fn add2(a: &mut [f64; 2], b: [f64; 2]) {
    a[0] += b[0];
    a[1] += b[1];
}

fn addm(a: &mut Mat2, b: Mat2) {
    for r in 0..2 {
        for c in 0..2 {
            a[r][c] += b[r][c];
        }
    }
}

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

fn mulv(a: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

fn inverse(a: &Mat2) -> Option<Mat2> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let norm = a.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    if !(det.abs() > 1e-14 * norm * norm) {
        return None;
    }
    Some([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// Block Thomas algorithm for a symmetric block-tridiagonal system with
/// `upper[k]` coupling unknowns `k` and `k+1`.
fn block_tridiagonal_solve(diag: &[Mat2], upper: &[Mat2], rhs: &[[f64; 2]]) -> Option<Vec<[f64; 2]>> {
    let m = diag.len();
    let mut cp: Vec<Mat2> = Vec::with_capacity(m);
    let mut dp: Vec<[f64; 2]> = Vec::with_capacity(m);
    for k in 0..m {
        let mut piv = diag[k];
        let mut r = rhs[k];
        if k > 0 {
            let lower = transpose(&upper[k - 1]);
            let lc = mul(&lower, &cp[k - 1]);
            addm(&mut piv, [[-lc[0][0], -lc[0][1]], [-lc[1][0], -lc[1][1]]]);
            let ld = mulv(&lower, dp[k - 1]);
            r = [r[0] - ld[0], r[1] - ld[1]];
        }
        let inv = inverse(&piv)?;
        cp.push(if k + 1 < m { mul(&inv, &upper[k]) } else { [[0.0; 2]; 2] });
        dp.push(mulv(&inv, r));
    }
    let mut x = vec![[0.0; 2]; m];
    for k in (0..m).rev() {
        x[k] = if k + 1 < m {
            let c = mulv(&cp[k], x[k + 1]);
            [dp[k][0] - c[0], dp[k][1] - c[1]]
        } else {
            dp[k]
        };
    }
    Some(x)
}

/// Closed-form reference values for the three model profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    /// `w_d ≡ 1`
    Flat,
    /// `w_d(t) = t`
    Cone,
    /// `w_d(t) = sin t` on `[0, π]`
    Suspension,
}

impl OracleKind {
    /// Oracle whose convention matches the profile's distance warp, if any.
    pub fn matching(profile: &WarpProfile) -> Option<Self> {
        let (a, b) = profile.interval();
        match profile.w_d() {
            WarpFn::Constant(c) if *c == 1.0 => Some(OracleKind::Flat),
            WarpFn::Linear { slope, offset } if *slope == 1.0 && *offset == 0.0 && a >= 0.0 => {
                Some(OracleKind::Cone)
            }
            WarpFn::Sin {
                amplitude,
                frequency,
                phase,
            } if *amplitude == 1.0
                && *frequency == 1.0
                && *phase == 0.0
                && a >= 0.0
                && b <= std::f64::consts::PI + 1e-12 =>
            {
                Some(OracleKind::Suspension)
            }
            _ => None,
        }
    }
}

pub fn oracle_d(kind: OracleKind, t0: f64, t1: f64, ell: f64) -> f64 {
    use std::f64::consts::PI;
    match kind {
        OracleKind::Flat => (t1 - t0).hypot(ell),
        OracleKind::Cone => {
            if ell <= PI {
                (t0 * t0 + t1 * t1 - 2.0 * t0 * t1 * ell.cos()).max(0.0).sqrt()
            } else {
                t0 + t1
            }
        }
        OracleKind::Suspension => {
            let c = t0.cos() * t1.cos() + t0.sin() * t1.sin() * ell.min(PI).cos();
            c.clamp(-1.0, 1.0).acos()
        }
    }
}

/// `d_w((t0, x0), (t1, x1)) = D(t0, t1, d(x0, x1))`.
pub fn warped_distance(
    base_dist: &DistanceMatrix,
    profile: &WarpProfile,
    p: (f64, usize),
    q: (f64, usize),
    resolution: Resolution,
) -> Result<f64> {
    let n = base_dist.size();
    if p.1 >= n || q.1 >= n {
        return Err(Error::OutOfRange(format!(
            "base vertex {} outside 0..{n}",
            p.1.max(q.1)
        )));
    }
    let query = GeodesicQuery::new(p.0, q.0, base_dist.get(p.1, q.1)).with_resolution(resolution);
    Ok(solve_d(profile, &query)?.value)
}

/// The radius `r` with `D(t0, t', r) = ε`, by bisection to `1e-6`.
///
/// `None` when `|t' - t0| >= ε`. When `D(t0, t', ·)` stays below `ε` for
/// every `r` (the whole fiber lies in the ball) the result is `∞`.
pub fn ball_radius(
    profile: &WarpProfile,
    t0: f64,
    t_prime: f64,
    eps: f64,
    resolution: Resolution,
) -> Result<Option<f64>> {
    let (a, b) = profile.interval();
    for t in [t0, t_prime] {
        if !profile.contains(t) {
            return Err(Error::OutOfInterval { t, a, b });
        }
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if profile.wd_at(t0) <= 0.0 {
        return Err(Error::InvalidParameter(format!("w_d({t0}) = 0")));
    }
    if (t_prime - t0).abs() >= eps {
        return Ok(None);
    }
    let d = |r: f64| -> Result<f64> {
        Ok(solve_d(profile, &GeodesicQuery::new(t0, t_prime, r).with_resolution(resolution))?.value)
    };
    let inf_wd = inf_wd_near(profile, t0, eps);
    let mut hi = if inf_wd > 0.0 { eps / inf_wd * 1.01 + 1e-6 } else { eps };
    let mut expansions = 0;
    while d(hi)? < eps {
        if expansions == 40 {
            return Ok(Some(f64::INFINITY));
        }
        hi *= 2.0;
        expansions += 1;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if d(mid)? < eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// `inf w_d` over `[t0 - ε, t0 + ε] ∩ [a, b]`, sampled.
pub fn inf_wd_near(profile: &WarpProfile, t0: f64, eps: f64) -> f64 {
    let (a, b) = profile.interval();
    let (lo, hi) = ((t0 - eps).max(a), (t0 + eps).min(b));
    (0..=1000)
        .map(|k| profile.wd_at(lo + (hi - lo) * k as f64 / 1000.0))
        .fold(f64::INFINITY, f64::min)
}

/// One row of a batch pairs file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairQuery {
    pub t0: f64,
    pub base_vertex0: usize,
    pub t1: f64,
    pub base_vertex1: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub t0: f64,
    pub base_vertex0: usize,
    pub t1: f64,
    pub base_vertex1: usize,
    pub distance: f64,
    pub method: Method,
}

/// Evaluates pairs in parallel; results keep the input order. With an
/// oracle the closed form replaces the grid solve.
pub fn batch_distances(
    base_dist: &DistanceMatrix,
    profile: &WarpProfile,
    pairs: &[PairQuery],
    resolution: Resolution,
    oracle: Option<OracleKind>,
) -> Result<Vec<DistanceRecord>> {
    pairs
        .par_iter()
        .map(|q| {
            let (distance, method) = match oracle {
                Some(kind) => {
                    let n = base_dist.size();
                    if q.base_vertex0 >= n || q.base_vertex1 >= n {
                        return Err(Error::OutOfRange(format!("base vertex outside 0..{n}")));
                    }
                    let ell = base_dist.get(q.base_vertex0, q.base_vertex1);
                    (oracle_d(kind, q.t0, q.t1, ell), Method::Oracle)
                }
                None => (
                    warped_distance(
                        base_dist,
                        profile,
                        (q.t0, q.base_vertex0),
                        (q.t1, q.base_vertex1),
                        resolution,
                    )?,
                    Method::Grid,
                ),
            };
            Ok(DistanceRecord {
                t0: q.t0,
                base_vertex0: q.base_vertex0,
                t1: q.t1,
                base_vertex1: q.base_vertex1,
                distance,
                method,
            })
        })
        .collect()
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<PairQuery>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    reader
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_distances(path: impl AsRef<Path>, records: &[DistanceRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path)?;
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn d(profile: &WarpProfile, t0: f64, t1: f64, ell: f64) -> f64 {
        solve_d(profile, &GeodesicQuery::new(t0, t1, ell)).unwrap().value
    }

    fn close(got: f64, want: f64, rel: f64) {
        assert!(
            (got - want).abs() <= rel * want,
            "got {got}, want {want} ± {:.2}%",
            rel * 100.0
        );
    }

    #[test]
    fn worked_values() {
        let flat = WarpProfile::flat((0.0, 3.0), 4).unwrap();
        close(d(&flat, 0.0, 3.0, 4.0), 5.0, 5e-3);
        let cone = WarpProfile::cone(16).unwrap();
        close(d(&cone, 1.0, 1.0, FRAC_PI_2), 2f64.sqrt(), 5e-3);
        close(d(&cone, 1.0, 1.0, 4.0), 2.0, 5e-3);
        let susp = WarpProfile::suspension(16).unwrap();
        close(d(&susp, FRAC_PI_2, FRAC_PI_2, FRAC_PI_2), FRAC_PI_2, 5e-3);
    }

    #[test]
    fn oracle_values() {
        assert_eq!(oracle_d(OracleKind::Flat, 0.0, 3.0, 4.0), 5.0);
        assert!((oracle_d(OracleKind::Cone, 1.0, 1.0, PI) - 2.0).abs() < 1e-15);
        assert!((oracle_d(OracleKind::Suspension, FRAC_PI_2, FRAC_PI_2, PI) - PI).abs() < 1e-15);
        assert_eq!(oracle_d(OracleKind::Cone, 0.3, 0.5, 3.5), 0.8);
    }

    #[test]
    fn oracle_matches_profiles() {
        assert_eq!(OracleKind::matching(&WarpProfile::cone(4).unwrap()), Some(OracleKind::Cone));
        assert_eq!(
            OracleKind::matching(&WarpProfile::suspension(4).unwrap()),
            Some(OracleKind::Suspension)
        );
        assert_eq!(
            OracleKind::matching(&WarpProfile::flat((0.0, 1.0), 4).unwrap()),
            Some(OracleKind::Flat)
        );
    }

    #[test]
    fn zero_base_distance_short_circuits() {
        let cone = WarpProfile::cone(8).unwrap();
        let s = solve_d(&cone, &GeodesicQuery::new(0.75, 0.25, 0.0)).unwrap();
        assert_eq!(s.value, 0.5);
        assert_eq!(s.path, vec![(0.75, 0.0), (0.25, 0.0)]);
    }

    #[test]
    fn solution_is_symmetric_and_path_has_correct_endpoints() {
        let susp = WarpProfile::suspension(8).unwrap();
        let q = GeodesicQuery::new(0.4, 2.1, 1.3).with_resolution(Resolution::ALL_PAIRS);
        let fwd = solve_d(&susp, &q).unwrap();
        let back = solve_d(&susp, &GeodesicQuery { t0: 2.1, t1: 0.4, ..q }).unwrap();
        assert_eq!(fwd.value, back.value);
        assert_eq!(fwd.path.first(), Some(&(0.4, 0.0)));
        assert_eq!(fwd.path.last(), Some(&(2.1, 1.3)));
        assert_eq!(back.path.first(), Some(&(2.1, 0.0)));
        assert_eq!(back.path.last().unwrap().0, 0.4);
        assert!((back.path.last().unwrap().1 - 1.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_queries() {
        let cone = WarpProfile::cone(8).unwrap();
        assert!(matches!(
            solve_d(&cone, &GeodesicQuery::new(-0.1, 0.5, 1.0)),
            Err(Error::OutOfInterval { .. })
        ));
        assert!(solve_d(&cone, &GeodesicQuery::new(0.1, 0.5, -1.0)).is_err());
        let tiny = GeodesicQuery::new(0.1, 0.5, 1.0).with_resolution(Resolution { nt: 1, ntheta: 8 });
        assert!(solve_d(&cone, &tiny).is_err());
    }

    #[test]
    fn warped_distance_examples() {
        use crate::space::{generate, Generator};
        let circle = generate(&Generator::Circle { n: 64, circumference: 2.0 * PI }).unwrap();
        let dist = circle.distances();
        let cyl = WarpProfile::flat((0.0, 1.0), 8).unwrap();
        assert_eq!(warped_distance(dist, &cyl, (0.0, 5), (1.0, 5), Resolution::ORACLE).unwrap(), 1.0);
        let cone = WarpProfile::cone(8).unwrap();
        // a quarter turn is 16 steps of 2π/64
        close(
            warped_distance(dist, &cone, (1.0, 3), (1.0, 19), Resolution::ORACLE).unwrap(),
            2f64.sqrt(),
            5e-3,
        );
        close(
            warped_distance(dist, &cone, (1.0, 3), (0.0, 40), Resolution::ORACLE).unwrap(),
            1.0,
            5e-3,
        );
    }

    #[test]
    fn ball_radius_examples() {
        let flat = WarpProfile::flat((0.0, 1.0), 4).unwrap();
        let r = ball_radius(&flat, 0.5, 0.5, 0.1, Resolution::ORACLE).unwrap().unwrap();
        assert!((r - 0.1).abs() < 1e-5);
        let cone = WarpProfile::cone(8).unwrap();
        let r = ball_radius(&cone, 1.0, 1.0, 0.1, Resolution::ORACLE).unwrap().unwrap();
        assert!((r - 2.0 * 0.05f64.asin()).abs() < 1e-3);
        assert_eq!(ball_radius(&cone, 0.5, 0.75, 0.25, Resolution::ORACLE).unwrap(), None);
        assert!(ball_radius(&cone, 0.0, 0.0, 0.1, Resolution::ORACLE).is_err());
    }

    #[test]
    fn ball_swallows_fiber_near_apex() {
        // D(0.02, 0.02, r) <= 0.04 < ε for every r
        let cone = WarpProfile::cone(8).unwrap();
        let r = ball_radius(&cone, 0.02, 0.02, 0.1, Resolution::ALL_PAIRS).unwrap();
        assert_eq!(r, Some(f64::INFINITY));
    }

    #[test]
    fn batch_files_round_trip() {
        use crate::space::{generate, Generator};
        let dir = tempfile::tempdir().unwrap();
        let pairs_path = dir.path().join("pairs.csv");
        std::fs::write(&pairs_path, "t0,base_vertex0,t1,base_vertex1\n1.0,0,1.0,4\n0.5,2,0.25,2\n").unwrap();
        let pairs = read_pairs(&pairs_path).unwrap();
        assert_eq!(pairs.len(), 2);
        let circle = generate(&Generator::Circle { n: 16, circumference: 2.0 * PI }).unwrap();
        let cone = WarpProfile::cone(8).unwrap();
        let grid = batch_distances(circle.distances(), &cone, &pairs, Resolution::ALL_PAIRS, None).unwrap();
        let oracle =
            batch_distances(circle.distances(), &cone, &pairs, Resolution::ALL_PAIRS, Some(OracleKind::Cone))
                .unwrap();
        assert_eq!(grid[1].distance, 0.25);
        assert_eq!(oracle[0].method, Method::Oracle);
        close(grid[0].distance, oracle[0].distance, 5e-3);
        let out = dir.path().join("out.csv");
        write_distances(&out, &grid).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("t0,base_vertex0,t1,base_vertex1,distance,method"));
        assert!(text.contains(",grid"));
    }

    #[test]
    fn bounds_hold() {
        let susp = WarpProfile::suspension(8).unwrap();
        let max_wd = 1.0;
        for &(t0, t1, ell) in &[(0.1, 3.0, 0.2), (1.0, 1.2, 2.5), (0.0, 0.0, 1.0), (2.0, 0.5, 3.1)] {
            let s = solve_d(&susp, &GeodesicQuery::new(t0, t1, ell).with_resolution(Resolution::ALL_PAIRS))
                .unwrap();
            let dt: f64 = (t1 - t0).abs();
            assert!(s.value >= dt - 1e-12);
            assert!(s.value <= dt + ell * max_wd + 1e-12);
        }
    }

    #[test]
    fn nondecreasing_in_base_distance() {
        let cone = WarpProfile::cone(8).unwrap();
        let mut prev = 0.0;
        for k in 0..=40 {
            let ell = 0.1 * k as f64;
            let v = solve_d(&cone, &GeodesicQuery::new(0.3, 0.8, ell).with_resolution(Resolution::ALL_PAIRS))
                .unwrap()
                .value;
            assert!(v >= prev * (1.0 - 1e-3), "D dropped from {prev} to {v} at ell = {ell}");
            prev = prev.max(v);
        }
    }

    #[test]
    fn refinement_does_not_increase_values_or_errors() {
        for (kind, profile) in [
            (OracleKind::Flat, WarpProfile::flat((0.0, 1.0), 4).unwrap()),
            (OracleKind::Cone, WarpProfile::cone(4).unwrap()),
            (OracleKind::Suspension, WarpProfile::suspension(4).unwrap()),
        ] {
            let (a, b) = profile.interval();
            for &(s0, s1, ell) in &[(0.2, 0.9, 0.7), (0.5, 0.5, 2.0), (0.95, 0.1, 2.9)] {
                let (t0, t1) = (a + s0 * (b - a), a + s1 * (b - a));
                let oracle = oracle_d(kind, t0, t1, ell);
                let q = GeodesicQuery::new(t0, t1, ell).with_resolution(Resolution::square(32));
                let coarse = solve_d(&profile, &q).unwrap().value;
                let fine = solve_d(&profile, &q.with_resolution(q.resolution.doubled()))
                    .unwrap()
                    .value;
                assert!(fine <= coarse * (1.0 + 1e-3));
                assert!((fine - oracle).abs() <= (coarse - oracle).abs() + 1e-3 * oracle);
            }
        }
    }
}
