//! Continuum limit objects: excursions of reflected parabolic Brownian motion,
//! tilted Brownian excursions and grid versions of the limiting metric spaces.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graphgen::resample_index;
use crate::metricspace::MetricMeasureSpace;
use crate::rng::{derive_seed, open_unit, rng_from_seed, SimRng};

#[derive(Debug, thiserror::Error)]
pub enum LimitError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("path still truncated after {doublings} horizon doublings (T = {horizon})")]
    Truncated { doublings: usize, horizon: f64 },
}

pub type Result<T> = std::result::Result<T, LimitError>;

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_EXCURSION_POOL: usize = 4096;
/// Excursions shorter than this many steps are treated as grid noise.
pub const MIN_EXCURSION_STEPS: f64 = 5.0;
/// An excursion still open at the horizon only flags truncation if it is at least this long.
pub const TRUNCATION_LENGTH: f64 = 0.05;
pub const MAX_DOUBLINGS: usize = 6;

pub fn default_horizon(lambda: f64) -> f64 {
    4.0 * lambda.abs() + 12.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub start: f64,
    pub length: f64,
    pub area: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSample {
    pub lambda: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Sorted by length, longest first.
    pub excursions: Vec<Excursion>,
    pub poisson_marks: Vec<u64>,
    pub truncation_flag: bool,
}

impl LimitSample {
    pub fn gamma1(&self) -> f64 {
        self.excursions.first().map_or(0.0, |e| e.length)
    }

    pub fn mark1(&self) -> u64 {
        self.poisson_marks.first().copied().unwrap_or(0)
    }

    /// CSV `rank,length,area,marks`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "rank,length,area,marks")?;
        for (k, (e, m)) in self.excursions.iter().zip(&self.poisson_marks).enumerate() {
            writeln!(w, "{},{},{},{}", k + 1, e.length, e.area, m)?;
        }
        Ok(())
    }
}

/// Source of the Brownian part; `Zero` is the deterministic test hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Noise {
    Brownian,
    Zero,
}

pub fn sample_limit_sizes(lambda: f64, horizon: f64, dt: f64, seed: u64) -> Result<LimitSample> {
    sample_limit_sizes_with(lambda, horizon, dt, Noise::Brownian, seed)
}

pub fn sample_limit_sizes_with(lambda: f64, horizon: f64, dt: f64, noise: Noise, seed: u64) -> Result<LimitSample> {
    if !lambda.is_finite() {
        return Err(LimitError::Parameter("lambda must be finite".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(LimitError::Parameter(format!("horizon must be positive, got {horizon}")));
    }
    if !(dt > 0.0 && dt <= 1e-3 * horizon.max(1.0)) {
        return Err(LimitError::Parameter(format!("dt must be in (0, 1e-3 max(1, T)], got {dt}")));
    }
    let mut rng = rng_from_seed(seed);
    let steps = (horizon / dt).round() as usize;
    let sq = dt.sqrt();
    let (mut w, mut running_min) = (0.0f64, 0.0f64);
    let mut prev_r = 0.0f64;
    let mut open: Option<(usize, f64)> = None;
    let mut excursions = Vec::new();
    let min_len = MIN_EXCURSION_STEPS * dt;
    for k in 1..=steps {
        let (t0, t1) = ((k - 1) as f64 * dt, k as f64 * dt);
        let z: f64 = match noise {
            Noise::Brownian => rng.sample(StandardNormal),
            Noise::Zero => 0.0,
        };
        w += sq * z + lambda * dt - 0.5 * (t1 * t1 - t0 * t0);
        let r = if w < running_min {
            running_min = w;
            0.0
        } else {
            w - running_min
        };
        match (&mut open, r > 0.0) {
            (None, true) => open = Some((k - 1, 0.5 * r * dt)),
            (Some((_, area)), true) => *area += 0.5 * (prev_r + r) * dt,
            (Some((start, area)), false) => {
                let length = (k - *start) as f64 * dt;
                let area = *area + 0.5 * prev_r * dt;
                if length >= min_len {
                    excursions.push(Excursion { start: *start as f64 * dt, length, area });
                }
                open = None;
            }
            (None, false) => {}
        }
        prev_r = r;
    }
    let truncation_flag = open.is_some_and(|(start, _)| (steps - start) as f64 * dt >= TRUNCATION_LENGTH);
    excursions.sort_by(|a, b| b.length.partial_cmp(&a.length).unwrap().then(a.start.partial_cmp(&b.start).unwrap()));
    let poisson_marks = excursions
        .iter()
        .map(|e| if e.area > 0.0 { Poisson::new(e.area).unwrap().sample(&mut rng) as u64 } else { 0 })
        .collect();
    Ok(LimitSample { lambda, horizon, dt, excursions, poisson_marks, truncation_flag })
}

/// Default horizon and step, doubling the horizon (same seed) until the path is not truncated.
pub fn sample_limit_sizes_auto(lambda: f64, seed: u64) -> Result<LimitSample> {
    let mut horizon = default_horizon(lambda);
    for _ in 0..=MAX_DOUBLINGS {
        let s = sample_limit_sizes(lambda, horizon, DEFAULT_DT, seed)?;
        if !s.truncation_flag {
            return Ok(s);
        }
        horizon *= 2.0;
    }
    Err(LimitError::Truncated { doublings: MAX_DOUBLINGS, horizon })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcursionPath {
    pub length: f64,
    pub step: f64,
    /// `grid + 1` values, zero at both ends.
    pub values: Vec<f64>,
    pub tilt_theta: f64,
    /// Effective sample size of the tilting pool (pool size when untilted).
    pub ess: f64,
    /// Minimum of the continuous path on each grid interval, when the path is random.
    pub interval_min: Option<Vec<f64>>,
}

impl ExcursionPath {
    pub fn grid(&self) -> usize {
        self.values.len() - 1
    }

    /// Trapezoidal integral.
    pub fn area(&self) -> f64 {
        trapezoid(&self.values, self.step)
    }

    /// `c e(. / s)` sampled on the same grid count: length times `s`, values times `c`.
    pub fn rescaled(&self, s: f64, c: f64) -> ExcursionPath {
        ExcursionPath {
            length: self.length * s,
            step: self.step * s,
            values: self.values.iter().map(|v| v * c).collect(),
            tilt_theta: self.tilt_theta,
            ess: self.ess,
            interval_min: self.interval_min.as_ref().map(|m| m.iter().map(|v| v * c).collect()),
        }
    }
}

fn trapezoid(v: &[f64], h: f64) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    h * (v[1..n - 1].iter().sum::<f64>() + 0.5 * (v[0] + v[n - 1]))
}

/// Brownian excursion of length `l` on `grid` steps: bridge from forward increments
/// with linear drift correction, then Vervaat rotation at the bridge minimum.
///
/// The minimum is sampled exactly inside each grid interval; rotating at the grid
/// argmin instead would bias every value upward by about `0.58 sqrt(step)`.
/// The rotation point is snapped to the lower endpoint of the interval holding the minimum.
pub fn standard_excursion<R: Rng + ?Sized>(l: f64, grid: usize, rng: &mut R) -> Vec<f64> {
    let h = l / grid as f64;
    let sq = h.sqrt();
    let mut b = Vec::with_capacity(grid + 1);
    b.push(0.0);
    let mut s = 0.0;
    for _ in 0..grid {
        let z: f64 = rng.sample(StandardNormal);
        s += sq * z;
        b.push(s);
    }
    let end = b[grid];
    for (k, v) in b.iter_mut().enumerate() {
        *v -= end * k as f64 / grid as f64;
    }
    let (mut kmin, mut bm) = (0, f64::INFINITY);
    for k in 0..grid {
        let (x, y) = (b[k], b[k + 1]);
        let m = 0.5 * (x + y - ((x - y) * (x - y) - 2.0 * h * open_unit(rng).ln()).sqrt());
        if m < bm {
            kmin = k;
            bm = m;
        }
    }
    let p = if b[kmin + 1] < b[kmin] { (kmin + 1) % grid } else { kmin };
    let mut e: Vec<f64> = (0..=grid).map(|k| (b[(p + k) % grid] - bm).max(0.0)).collect();
    e[0] = 0.0;
    e[grid] = 0.0;
    e
}

/// Minimum over each grid interval of a Brownian path (unit diffusion) through `values`,
/// conditioned to stay positive: on `[k, k+1]` the path is a bridge from `a` to `b`
/// and `P(min <= m) = exp(-2 (a - m)(b - m) / step)`.
pub fn positive_bridge_minima<R: Rng + ?Sized>(values: &[f64], step: f64, rng: &mut R) -> Vec<f64> {
    values
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            if a <= 0.0 || b <= 0.0 {
                return 0.0;
            }
            let lo = (-2.0 * a * b / step).exp();
            let u = lo + (1.0 - lo) * open_unit(rng);
            let m = 0.5 * (a + b - ((a - b) * (a - b) - 2.0 * step * u.ln()).sqrt());
            m.clamp(0.0, a.min(b))
        })
        .collect()
}

fn check_excursion_args(l: f64, theta: f64, grid: usize, pool: usize) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(LimitError::Parameter(format!("length must be positive, got {l}")));
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(LimitError::Parameter(format!("theta must be nonnegative, got {theta}")));
    }
    if grid < 100 {
        return Err(LimitError::Parameter(format!("grid must be at least 100, got {grid}")));
    }
    if pool == 0 {
        return Err(LimitError::Parameter("pool must be at least 1".into()));
    }
    Ok(())
}

/// Excursion of length `l` tilted by `exp(theta * area)`, by importance resampling a pool.
pub fn sample_tilted_excursion(l: f64, theta: f64, grid: usize, pool: usize, seed: u64) -> Result<ExcursionPath> {
    check_excursion_args(l, theta, grid, pool)?;
    let step = l / grid as f64;
    let candidate = |k: usize| standard_excursion(l, grid, &mut rng_from_seed(derive_seed(seed, k as u64)));
    let finish = |values: Vec<f64>, theta: f64, ess: f64| {
        let mins = positive_bridge_minima(&values, step, &mut rng_from_seed(derive_seed(seed, u64::MAX - 1)));
        ExcursionPath { length: l, step, values, tilt_theta: theta, ess, interval_min: Some(mins) }
    };
    if theta == 0.0 {
        return Ok(finish(candidate(0), 0.0, pool as f64));
    }
    // keep only the areas; the chosen path is regenerated from its seed
    let logw: Vec<f64> = (0..pool).into_par_iter().map(|k| theta * trapezoid(&candidate(k), step)).collect();
    let mut rng = rng_from_seed(derive_seed(seed, u64::MAX));
    let (idx, ess) = resample_index(&logw, &mut rng);
    Ok(finish(candidate(idx), theta, ess))
}

/// Grid version of `G(h, g, P)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSpace {
    pub space: MetricMeasureSpace,
    /// Identified point pairs `(x, r(x, y))` as grid indices.
    pub links: Vec<(usize, usize)>,
    /// Trapezoidal integral of `g`.
    pub g_area: f64,
}

/// Real tree coded by `h` on grid points `0..grid` (the endpoint is the root again),
/// quotiented by Poisson(int g) identifications `x ~ r(x, y)`.
pub fn build_limit_space(h: &ExcursionPath, g: &ExcursionPath, seed: u64) -> Result<LimitSpace> {
    if h.values.len() != g.values.len() || (h.step - g.step).abs() > 1e-12 * h.step.max(1.0) {
        return Err(LimitError::Parameter("h and g must share the grid".into()));
    }
    let grid = h.grid();
    let mut rng = rng_from_seed(seed);
    let g_area = g.area();
    let count = if g_area > 0.0 { Poisson::new(g_area).unwrap().sample(&mut rng) as usize } else { 0 };
    let links = identification_links(&g.values, g.interval_min.as_deref(), count, &mut rng);
    let hv = &h.values[..grid];
    // without interval minima the path is taken to be piecewise linear
    let imin: Vec<f64> = match &h.interval_min {
        Some(v) => v.clone(),
        None => h.values.windows(2).map(|w| w[0].min(w[1])).collect(),
    };
    let m = grid;
    let mut dist = vec![0.0; m * m];
    for s in 0..m {
        let mut mn = hv[s];
        for t in s + 1..m {
            mn = mn.min(imin[t - 1]).min(hv[t]);
            let d = (hv[s] + hv[t] - 2.0 * mn).max(0.0);
            dist[s * m + t] = d;
            dist[t * m + s] = d;
        }
    }
    if !links.is_empty() {
        quotient_in_place(&mut dist, m, &links);
    }
    let mass = vec![h.length / grid as f64; m];
    Ok(LimitSpace { space: MetricMeasureSpace { m, dist, mass }, links, g_area })
}

/// `(x, r(x, y))` pairs; when the path dips to `y` inside a grid interval, `r` is its right end.
fn identification_links(g: &[f64], imin: Option<&[f64]>, count: usize, rng: &mut SimRng) -> Vec<(usize, usize)> {
    let grid = g.len() - 1;
    if count == 0 {
        return Vec::new();
    }
    let w = rand::distr::weighted::WeightedIndex::new(&g[..grid]).expect("positive excursion");
    (0..count)
        .map(|_| {
            let x = w.sample(rng);
            let y = rng.random::<f64>() * g[x];
            let mut r = x;
            while g[r] > y {
                r += 1;
                if imin.is_some_and(|m| m[r - 1] <= y) {
                    break;
                }
            }
            (x, if r == grid { 0 } else { r })
        })
        .collect()
}

/// Adds zero-length links and replaces `dist` by the induced path metric.
fn quotient_in_place(dist: &mut [f64], m: usize, links: &[(usize, usize)]) {
    let mut portals: Vec<usize> = links.iter().flat_map(|&(a, b)| [a, b]).collect();
    portals.sort_unstable();
    portals.dedup();
    let p = portals.len();
    let idx = |v: usize| portals.binary_search(&v).unwrap();
    let mut pd = vec![0.0; p * p];
    for a in 0..p {
        for b in 0..p {
            pd[a * p + b] = dist[portals[a] * m + portals[b]];
        }
    }
    for &(a, b) in links {
        let (i, j) = (idx(a), idx(b));
        pd[i * p + j] = 0.0;
        pd[j * p + i] = 0.0;
    }
    for k in 0..p {
        for i in 0..p {
            for j in 0..p {
                let v = pd[i * p + k] + pd[k * p + j];
                if v < pd[i * p + j] {
                    pd[i * p + j] = v;
                }
            }
        }
    }
    let rows: Vec<Vec<f64>> = (0..m).map(|s| portals.iter().map(|&q| dist[s * m + q]).collect()).collect();
    let new: Vec<f64> = (0..m * m)
        .into_par_iter()
        .map(|k| {
            let (s, t) = (k / m, k % m);
            let mut best = dist[k];
            for a in 0..p {
                let da = rows[s][a];
                if da >= best {
                    continue;
                }
                for b in 0..p {
                    let v = da + pd[a * p + b] + rows[t][b];
                    if v < best {
                        best = v;
                    }
                }
            }
            best
        })
        .collect();
    dist.copy_from_slice(&new);
}

/// `G(2 e~, e~, P)` for the tilted excursion `e~` of length `gamma`, drawn as
/// `gamma^{1/2} e~^{gamma^{3/2}}(. / gamma)` from a unit-length excursion.
pub fn sample_crit_space(gamma: f64, grid: usize, pool: usize, seed: u64) -> Result<LimitSpace> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(LimitError::Parameter(format!("gamma must be positive, got {gamma}")));
    }
    let unit = sample_tilted_excursion(1.0, gamma.powf(1.5), grid, pool, derive_seed(seed, 0))?;
    let g = unit.rescaled(gamma, gamma.sqrt());
    let h = g.rescaled(1.0, 2.0);
    build_limit_space(&h, &g, derive_seed(seed, 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_single_excursion() {
        let s = sample_limit_sizes_with(1.0, 12.0, 1e-4, Noise::Zero, 0).unwrap();
        assert_eq!(s.excursions.len(), 1);
        assert!((s.excursions[0].length - 2.0).abs() < 2e-4);
        assert!((s.excursions[0].area - 2.0 / 3.0).abs() < 1e-6);
        assert!(!s.truncation_flag);
        for lambda in [0.0, -1.0] {
            let s = sample_limit_sizes_with(lambda, 12.0, 1e-4, Noise::Zero, 0).unwrap();
            assert!(s.excursions.is_empty());
        }
    }

    #[test]
    fn parameter_checks() {
        assert!(sample_limit_sizes(0.0, 10.0, 0.1, 0).is_err());
        assert!(sample_limit_sizes(0.0, -1.0, 1e-4, 0).is_err());
        assert!(sample_tilted_excursion(1.0, 0.0, 50, 1, 0).is_err());
        assert!(sample_tilted_excursion(1.0, -1.0, 100, 1, 0).is_err());
        assert!(sample_tilted_excursion(1.0, 1.0, 100, 0, 0).is_err());
    }

    #[test]
    fn sample_is_sorted_and_marks_align() {
        let s = sample_limit_sizes(1.0, 16.0, 1e-4, 5).unwrap();
        assert_eq!(s.excursions.len(), s.poisson_marks.len());
        assert!(s.excursions.windows(2).all(|w| w[0].length >= w[1].length));
        assert!(s.excursions.iter().all(|e| e.length > 0.0 && e.area > 0.0));
    }

    #[test]
    fn excursion_shape() {
        let e = sample_tilted_excursion(2.0, 0.0, 500, 1, 9).unwrap();
        assert_eq!(e.values.len(), 501);
        assert_eq!(e.values[0], 0.0);
        assert_eq!(e.values[500], 0.0);
        assert!(e.values[1..500].iter().all(|&v| v >= 0.0));
        assert!((e.step - 0.004).abs() < 1e-15);
    }

    fn tent(a: f64, grid: usize) -> ExcursionPath {
        let half = grid / 2;
        let values = (0..=grid).map(|k| a * (1.0 - (k as f64 - half as f64).abs() / half as f64)).collect();
        ExcursionPath { length: 1.0, step: 1.0 / grid as f64, values, tilt_theta: 0.0, ess: 1.0, interval_min: None }
    }

    #[test]
    fn tent_tree_metric() {
        let h = tent(2.0, 100);
        let zero = ExcursionPath { values: vec![0.0; 101], ..h.clone() };
        let s = build_limit_space(&h, &zero, 0).unwrap();
        assert!(s.links.is_empty());
        assert_eq!(s.space.m, 100);
        // d(s,t) = h(s) + h(t) - 2 min_[s,t] h
        assert!((s.space.d(0, 50) - 2.0).abs() < 1e-12);
        assert!((s.space.d(25, 75) - 0.0).abs() < 1e-12);
        assert!((s.space.d(10, 60) - (0.4 + 1.6 - 0.8)).abs() < 1e-12);
        assert!((s.space.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identifications_shrink_distances() {
        let mut rng = rng_from_seed(3);
        let v = standard_excursion(1.0, 200, &mut rng);
        let g = ExcursionPath {
            length: 1.0,
            step: 1.0 / 200.0,
            values: v.iter().map(|x| 5.0 * x).collect(),
            tilt_theta: 0.0,
            ess: 1.0,
            interval_min: None,
        };
        let h = g.rescaled(1.0, 2.0);
        let tree = {
            let zero = ExcursionPath { values: vec![0.0; 201], ..g.clone() };
            build_limit_space(&h, &zero, 0).unwrap().space
        };
        let q = build_limit_space(&h, &g, 11).unwrap();
        assert!(!q.links.is_empty());
        for k in 0..tree.dist.len() {
            assert!(q.space.dist[k] <= tree.dist[k] + 1e-12);
        }
        for &(a, b) in &q.links {
            assert_eq!(q.space.d(a, b), 0.0);
        }
        q.space.check_metric(1e-9).unwrap();
    }

    #[test]
    fn crit_space_mass() {
        let s = sample_crit_space(1.7, 200, 64, 2).unwrap();
        assert!((s.space.total_mass() - 1.7).abs() < 1e-12);
    }
}
