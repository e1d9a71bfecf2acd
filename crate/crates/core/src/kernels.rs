//! Graphon kernels, finite weight matrices and finite-n regularity diagnostics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::SymMatrix;
use crate::rng::rng_from_seed;
use crate::spectral::{self, SbmInput, SpectralError};

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("scheme error: {0}")]
    Scheme(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KernelError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedGrid {
    pub size: usize,
    /// Row-major node values at `(i/(size-1), j/(size-1))`.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelFamily {
    Constant,
    Min,
    Max,
    /// `(x + y)^a`
    SumPow { a: f64 },
    /// `(x v y)^(-a)`, `0 < a < 2/3`
    MaxNegPow { a: f64 },
    /// `|x - y|^(-a)`, `0 < a < 1/3`
    AbsDiffNegPow { a: f64 },
    /// `eta + (x v y)^a`
    EtaPlusMaxPow { eta: f64, a: f64 },
    Tabulated(TabulatedGrid),
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Constant => "constant",
            KernelFamily::Min => "min",
            KernelFamily::Max => "max",
            KernelFamily::SumPow { .. } => "sum-pow",
            KernelFamily::MaxNegPow { .. } => "max-neg-pow",
            KernelFamily::AbsDiffNegPow { .. } => "abs-diff-neg-pow",
            KernelFamily::EtaPlusMaxPow { .. } => "eta-plus-max-pow",
            KernelFamily::Tabulated(_) => "tabulated",
        }
    }
}

/// `c * family(x, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub c: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, c: f64) -> Result<Self> {
        let s = Self { family, c };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(c: f64) -> Self {
        Self { family: KernelFamily::Constant, c }
    }

    pub fn min(c: f64) -> Self {
        Self { family: KernelFamily::Min, c }
    }

    pub fn max(c: f64) -> Self {
        Self { family: KernelFamily::Max, c }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { family: self.family.clone(), c: self.c * factor }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0) {
            return Err(KernelError::Parameter(format!("normalization c must be finite and >= 0, got {}", self.c)));
        }
        self.validate_perturbation()
    }

    /// As `validate`, but a perturbation `H` may carry a negative normalization.
    pub fn validate_perturbation(&self) -> Result<()> {
        let bad = |m: String| Err(KernelError::Parameter(m));
        if !self.c.is_finite() {
            return bad(format!("normalization c must be finite, got {}", self.c));
        }
        match &self.family {
            KernelFamily::Constant | KernelFamily::Min | KernelFamily::Max => Ok(()),
            KernelFamily::SumPow { a } => {
                if !(a.is_finite() && *a > -2.0 / 3.0) {
                    return bad(format!("sum-pow needs a > -2/3, got {a}"));
                }
                Ok(())
            }
            KernelFamily::MaxNegPow { a } => {
                if !(*a > 0.0 && *a < 2.0 / 3.0) {
                    return bad(format!("max-neg-pow needs 0 < a < 2/3, got {a}"));
                }
                Ok(())
            }
            KernelFamily::AbsDiffNegPow { a } => {
                if !(*a > 0.0 && *a < 1.0 / 3.0) {
                    return bad(format!("abs-diff-neg-pow needs 0 < a < 1/3, got {a}"));
                }
                Ok(())
            }
            KernelFamily::EtaPlusMaxPow { eta, a } => {
                if !(eta.is_finite() && *eta >= 0.0 && a.is_finite() && *a > 0.0) {
                    return bad(format!("eta-plus-max-pow needs eta >= 0 and a > 0, got eta={eta} a={a}"));
                }
                Ok(())
            }
            KernelFamily::Tabulated(t) => {
                if t.size < 2 || t.values.len() != t.size * t.size {
                    return bad("tabulated grid must be square with size >= 2".into());
                }
                for i in 0..t.size {
                    for j in 0..t.size {
                        let v = t.values[i * t.size + j];
                        if !(v.is_finite() && v >= 0.0) {
                            return bad(format!("tabulated value at ({i},{j}) is {v}"));
                        }
                        if v != t.values[j * t.size + i] {
                            return bad(format!("tabulated grid not symmetric at ({i},{j})"));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// True when the family is unbounded somewhere on `[0,1]^2`.
    pub fn is_singular(&self) -> bool {
        match &self.family {
            KernelFamily::MaxNegPow { .. } | KernelFamily::AbsDiffNegPow { .. } => true,
            KernelFamily::SumPow { a } => *a < 0.0,
            _ => false,
        }
    }

    /// Uncapped value; `+inf` on the singular set of singular families.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if x.is_nan() || y.is_nan() {
            return Err(KernelError::Input("NaN coordinate".into()));
        }
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(KernelError::Input(format!("coordinates ({x}, {y}) outside [0,1]")));
        }
        Ok(self.eval_unchecked(x, y))
    }

    /// Value clamped to `[-cap, cap]`, as used by the weight-matrix builders.
    pub fn eval_capped(&self, x: f64, y: f64, cap: f64) -> Result<f64> {
        Ok(self.eval(x, y)?.clamp(-cap, cap))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: f64, y: f64) -> f64 {
        if self.c == 0.0 {
            return 0.0;
        }
        let f = match &self.family {
            KernelFamily::Constant => 1.0,
            KernelFamily::Min => x.min(y),
            KernelFamily::Max => x.max(y),
            KernelFamily::SumPow { a } => {
                let s = x + y;
                if s == 0.0 && *a < 0.0 {
                    f64::INFINITY
                } else {
                    s.powf(*a)
                }
            }
            KernelFamily::MaxNegPow { a } => {
                let m = x.max(y);
                if m == 0.0 {
                    f64::INFINITY
                } else {
                    m.powf(-a)
                }
            }
            KernelFamily::AbsDiffNegPow { a } => {
                let d = (x - y).abs();
                if d == 0.0 {
                    f64::INFINITY
                } else {
                    d.powf(-a)
                }
            }
            KernelFamily::EtaPlusMaxPow { eta, a } => eta + x.max(y).powf(*a),
            KernelFamily::Tabulated(t) => bilinear(t, x, y),
        };
        self.c * f
    }

    /// Flat `key=value` block.
    pub fn to_text(&self) -> String {
        let mut out = format!("family={}\n", self.family.name());
        match &self.family {
            KernelFamily::SumPow { a } | KernelFamily::MaxNegPow { a } | KernelFamily::AbsDiffNegPow { a } => {
                out.push_str(&format!("a={a}\n"));
            }
            KernelFamily::EtaPlusMaxPow { eta, a } => {
                out.push_str(&format!("a={a}\neta={eta}\n"));
            }
            KernelFamily::Tabulated(t) => {
                out.push_str(&format!("size={}\n", t.size));
                let vals: Vec<String> = t.values.iter().map(|v| v.to_string()).collect();
                out.push_str(&format!("values={}\n", vals.join(" ")));
            }
            _ => {}
        }
        out.push_str(&format!("c={}\n", self.c));
        out
    }

    /// Builds a spec from parsed key-value pairs (`family`, `a`, `eta`, `c`, `size`, `values`).
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| map.get(k).map(|s| s.trim());
        let num = |k: &str| -> Result<f64> {
            let s = get(k).ok_or_else(|| KernelError::Parse(format!("missing key `{k}`")))?;
            parse_real(s).ok_or_else(|| KernelError::Parse(format!("key `{k}`: cannot parse `{s}` as a number")))
        };
        let fam = get("family").ok_or_else(|| KernelError::Parse("missing key `family`".into()))?;
        let family = match fam {
            "constant" => KernelFamily::Constant,
            "min" => KernelFamily::Min,
            "max" => KernelFamily::Max,
            "sum-pow" => KernelFamily::SumPow { a: num("a")? },
            "max-neg-pow" => KernelFamily::MaxNegPow { a: num("a")? },
            "abs-diff-neg-pow" => KernelFamily::AbsDiffNegPow { a: num("a")? },
            "eta-plus-max-pow" => KernelFamily::EtaPlusMaxPow { eta: num("eta")?, a: num("a")? },
            "tabulated" => {
                let size = num("size")? as usize;
                let raw = get("values").ok_or_else(|| KernelError::Parse("missing key `values`".into()))?;
                let values = raw
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_real(s).ok_or_else(|| KernelError::Parse(format!("bad tabulated value `{s}`"))))
                    .collect::<Result<Vec<_>>>()?;
                KernelFamily::Tabulated(TabulatedGrid { size, values })
            }
            other => return Err(KernelError::Parse(format!("unknown kernel family `{other}`"))),
        };
        let c = if map.contains_key("c") { num("c")? } else { 1.0 };
        KernelSpec::new(family, c)
    }
}

fn bilinear(t: &TabulatedGrid, x: f64, y: f64) -> f64 {
    let k = t.size - 1;
    let fx = x * k as f64;
    let fy = y * k as f64;
    let i = (fx.floor() as usize).min(k - 1);
    let j = (fy.floor() as usize).min(k - 1);
    let (u, v) = (fx - i as f64, fy - j as f64);
    let g = |a: usize, b: usize| t.values[a * t.size + b];
    (1.0 - u) * (1.0 - v) * g(i, j) + u * (1.0 - v) * g(i + 1, j) + (1.0 - u) * v * g(i, j + 1) + u * v * g(i + 1, j + 1)
}

/// Parses a real number, also accepting `pi`, `pi^2/4`-style products and quotients.
pub fn parse_real(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    // a/b/c with factors a*b, each factor either a number, `pi`, or `pi^k`
    let mut parts = s.split('/');
    let mut value = parse_product(parts.next()?)?;
    for p in parts {
        value /= parse_product(p)?;
    }
    Some(value)
}

fn parse_product(s: &str) -> Option<f64> {
    let mut v = 1.0;
    for f in s.split('*') {
        let f = f.trim();
        let (base, exp) = match f.split_once('^') {
            Some((b, e)) => (b.trim(), e.trim().parse::<f64>().ok()?),
            None => (f, 1.0),
        };
        let b = match base {
            "pi" => std::f64::consts::PI,
            "e" => std::f64::consts::E,
            _ => base.parse::<f64>().ok()?,
        };
        v *= b.powf(exp);
    }
    Some(v)
}

/// Parses a flat `key=value` block; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| KernelError::Parse(format!("line {}: expected key=value, got `{line}`", lineno + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Kernel spec plus the window parameter `lambda` (perturbation `H = lambda * W`).
#[derive(Clone, Debug, PartialEq)]
pub struct KernelBlock {
    pub w: KernelSpec,
    pub lambda: Option<f64>,
}

impl KernelBlock {
    pub fn h(&self) -> Option<KernelSpec> {
        self.lambda.map(|l| self.w.scaled(l))
    }
}

impl FromStr for KernelBlock {
    type Err = KernelError;
    fn from_str(s: &str) -> Result<Self> {
        let map = parse_key_values(s)?;
        let w = KernelSpec::from_map(&map)?;
        let lambda = match map.get("lambda") {
            Some(v) => Some(parse_real(v).ok_or_else(|| KernelError::Parse(format!("key `lambda`: cannot parse `{v}`")))?),
            None => None,
        };
        Ok(Self { w, lambda })
    }
}

impl fmt::Display for KernelBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.w.to_text())?;
        if let Some(l) = self.lambda {
            writeln!(f, "lambda={l}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    Grid,
    UniformOrderStat,
    CellAverage,
    Rgiv,
    Sbm,
    Explicit,
}

impl WeightScheme {
    pub fn name(&self) -> &'static str {
        match self {
            WeightScheme::Grid => "grid",
            WeightScheme::UniformOrderStat => "uniform-order-stat",
            WeightScheme::CellAverage => "cell-average",
            WeightScheme::Rgiv => "rgiv",
            WeightScheme::Sbm => "sbm",
            WeightScheme::Explicit => "explicit",
        }
    }
}

impl FromStr for WeightScheme {
    type Err = KernelError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "grid" => WeightScheme::Grid,
            "uniform-order-stat" => WeightScheme::UniformOrderStat,
            "cell-average" => WeightScheme::CellAverage,
            "rgiv" => WeightScheme::Rgiv,
            "sbm" => WeightScheme::Sbm,
            "explicit" => WeightScheme::Explicit,
            other => return Err(KernelError::Parse(format!("unknown scheme `{other}`"))),
        })
    }
}

/// Symmetric nonnegative edge weights with zero diagonal; edge `{i,j}` has probability about `beta_ij / n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub n: usize,
    pub beta: SymMatrix,
    pub scheme: WeightScheme,
    pub seed: Option<u64>,
    /// Vertex positions in `[0,1]` for the schemes that have them.
    pub positions: Option<Vec<f64>>,
    pub exceptional_set: Option<Vec<usize>>,
}

impl WeightMatrix {
    /// Wraps an explicit matrix; the diagonal is zeroed.
    pub fn explicit(beta: SymMatrix) -> Result<Self> {
        let n = beta.n();
        if n < 2 {
            return Err(KernelError::Input("need n >= 2".into()));
        }
        let mut beta = beta;
        for i in 0..n {
            beta.set(i, i, 0.0);
        }
        if beta.packed().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(KernelError::Input("weights must be finite and nonnegative".into()));
        }
        Ok(Self { n, beta, scheme: WeightScheme::Explicit, seed: None, positions: None, exceptional_set: None })
    }

    pub fn with_exceptional_set(mut self, b: Vec<usize>) -> Self {
        self.exceptional_set = Some(b);
        self
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.beta.get(i, j)
    }

    /// CSV: header `# n=<n> scheme=<s> seed=<seed|none>`, then `i,j,beta` for `i<j` with nonzero weight.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let seed = self.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into());
        writeln!(w, "# n={} scheme={} seed={}", self.n, self.scheme.name(), seed)?;
        for i in 0..self.n {
            let row = self.beta.upper_row(i);
            for (k, &b) in row.iter().enumerate().skip(1) {
                if b != 0.0 {
                    writeln!(w, "{},{},{}", i, i + k, b)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| KernelError::Parse("empty weight file".into()))?;
        let mut n = None;
        let mut scheme = WeightScheme::Explicit;
        let mut seed = None;
        for tok in header.trim_start_matches('#').split_whitespace() {
            match tok.split_once('=') {
                Some(("n", v)) => n = v.parse::<usize>().ok(),
                Some(("scheme", v)) => scheme = v.parse()?,
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                _ => {}
            }
        }
        let n = n.ok_or_else(|| KernelError::Parse("header lacks n=<n>".into()))?;
        let mut beta = SymMatrix::zeros(n);
        for (k, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let err = || KernelError::Parse(format!("line {}: expected i,j,beta", k + 2));
            if f.len() != 3 {
                return Err(err());
            }
            let i: usize = f[0].trim().parse().map_err(|_| err())?;
            let j: usize = f[1].trim().parse().map_err(|_| err())?;
            let b: f64 = f[2].trim().parse().map_err(|_| err())?;
            if i >= n || j >= n || i == j {
                return Err(err());
            }
            beta.set(i, j, b);
        }
        let mut wm = Self::explicit(beta)?;
        wm.scheme = scheme;
        wm.seed = seed;
        Ok(wm)
    }
}

/// 8-point Gauss-Legendre rule on [-1, 1].
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

fn cell_average(spec: &KernelSpec, n: usize, i: usize, j: usize, cap: f64) -> f64 {
    let h = 1.0 / n as f64;
    let (x0, y0) = (i as f64 * h, j as f64 * h);
    if spec.is_singular() {
        const M: usize = 32;
        let mut acc = 0.0;
        for a in 0..M {
            let x = x0 + (a as f64 + 0.5) * h / M as f64;
            for b in 0..M {
                let y = y0 + (b as f64 + 0.5) * h / M as f64;
                acc += spec.eval_unchecked(x, y).clamp(-cap, cap);
            }
        }
        acc / (M * M) as f64
    } else {
        let mut acc = 0.0;
        for &(u, wu) in &GL8 {
            let x = x0 + 0.5 * h * (u + 1.0);
            for &(v, wv) in &GL8 {
                let y = y0 + 0.5 * h * (v + 1.0);
                acc += wu * wv * spec.eval_unchecked(x, y).clamp(-cap, cap);
            }
        }
        acc / 4.0
    }
}

/// Builds `beta_ij = (W + n^{-1/3} H) v 0` under the given scheme. Kernel values are capped at `n^{2/3}`.
pub fn build_weight_matrix(
    w: &KernelSpec,
    h: Option<&KernelSpec>,
    n: usize,
    scheme: WeightScheme,
    seed: Option<u64>,
) -> Result<WeightMatrix> {
    w.validate()?;
    if let Some(h) = h {
        h.validate_perturbation()?;
    }
    if n < 2 {
        return Err(KernelError::Input("need n >= 2".into()));
    }
    let nf = n as f64;
    let cap = nf.powf(2.0 / 3.0);
    let win = nf.powf(-1.0 / 3.0);
    let positions: Vec<f64> = match scheme {
        WeightScheme::Grid | WeightScheme::CellAverage => {
            if seed.is_some() {
                return Err(KernelError::Scheme(format!("scheme {} is deterministic; no seed expected", scheme.name())));
            }
            (1..=n).map(|i| i as f64 / nf).collect()
        }
        WeightScheme::UniformOrderStat => {
            let s = seed.ok_or_else(|| KernelError::Scheme("uniform-order-stat requires a seed".into()))?;
            let mut rng = rng_from_seed(s);
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v
        }
        other => {
            return Err(KernelError::Scheme(format!("scheme {} is not built from a kernel spec", other.name())));
        }
    };
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(n - i);
            row.push(0.0);
            for j in i + 1..n {
                let (wv, hv) = if scheme == WeightScheme::CellAverage {
                    (cell_average(w, n, i, j, cap), h.map_or(0.0, |h| cell_average(h, n, i, j, cap)))
                } else {
                    let (x, y) = (positions[i], positions[j]);
                    (w.eval_unchecked(x, y).clamp(-cap, cap), h.map_or(0.0, |h| h.eval_unchecked(x, y).clamp(-cap, cap)))
                };
                row.push((wv + win * hv).max(0.0));
            }
            row
        })
        .collect();
    let beta = SymMatrix::from_fn(n, |i, j| rows[i][j - i]);
    Ok(WeightMatrix {
        n,
        beta,
        scheme,
        seed,
        positions: Some(positions),
        exceptional_set: None,
    })
}

/// Block weights for a stochastic block model at size `n`.
///
/// Type proportions are `mu + n^{-1/3} b` rounded by largest remainder, and
/// block weights are `kappa + n^{-1/3} A`, floored at zero.
pub fn build_sbm_weights(input: &SbmInput, n: usize) -> Result<(WeightMatrix, Vec<usize>)> {
    input.validate().map_err(|e| KernelError::Parameter(e.to_string()))?;
    if n < input.k {
        return Err(KernelError::Input("need at least one vertex per type".into()));
    }
    let k = input.k;
    let win = (n as f64).powf(-1.0 / 3.0);
    let target: Vec<f64> = (0..k).map(|x| (input.mu[x] + win * input.b[x]).max(0.0)).collect();
    let tot: f64 = target.iter().sum();
    let exact: Vec<f64> = target.iter().map(|t| t / tot * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rem: Vec<(usize, f64)> = exact.iter().enumerate().map(|(i, e)| (i, e - e.floor())).collect();
    rem.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut missing = n - counts.iter().sum::<usize>();
    for (i, _) in rem {
        if missing == 0 {
            break;
        }
        counts[i] += 1;
        missing -= 1;
    }
    let mut types = Vec::with_capacity(n);
    for (x, &c) in counts.iter().enumerate() {
        types.extend(std::iter::repeat_n(x, c));
    }
    let beta = SymMatrix::from_fn(n, |i, j| {
        if i == j {
            0.0
        } else {
            let (x, y) = (types[i], types[j]);
            (input.kappa[x * k + y] + win * input.a[x * k + y]).max(0.0)
        }
    });
    let mut wm = WeightMatrix::explicit(beta)?;
    wm.scheme = WeightScheme::Sbm;
    Ok((wm, types))
}

/// Critical time `pi/2 + lambda n^{-1/3}`, Poisson vertex count and sorted positions.
pub fn rgiv_positions<R: Rng + ?Sized>(n: usize, lambda: f64, rng: &mut R) -> (f64, Vec<f64>) {
    let t = std::f64::consts::FRAC_PI_2 + lambda * (n as f64).powf(-1.0 / 3.0);
    let mean = n as f64 * t;
    let count = if mean > 0.0 { Poisson::new(mean).unwrap().sample(rng) as usize } else { 0 };
    let mut v: Vec<f64> = (0..count).map(|_| rng.random::<f64>()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (t, v)
}

/// The conditional RGIV weights `beta_ij = (N/n) t (V_i ^ V_j)`, drawn from the same stream as `graphgen::sample_rgiv`.
pub fn build_rgiv_weights(n: usize, lambda: f64, seed: u64) -> Result<WeightMatrix> {
    let mut rng = rng_from_seed(seed);
    let (t, v) = rgiv_positions(n, lambda, &mut rng);
    let m = v.len();
    if m < 2 {
        return Err(KernelError::Input("fewer than two immigrated vertices".into()));
    }
    let scale = m as f64 / n as f64 * t;
    let beta = SymMatrix::from_fn(m, |i, j| if i == j { 0.0 } else { scale * v[i].min(v[j]) });
    let mut wm = WeightMatrix::explicit(beta)?;
    wm.scheme = WeightScheme::Rgiv;
    wm.seed = Some(seed);
    wm.positions = Some(v);
    Ok(wm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `(1/n^2) sum beta^3`
    pub l3_norm: f64,
    /// `max_i (1/n) sum_j beta_ij^{3/2}`
    pub theta_stat: f64,
    /// Dominant absolute eigenvalue of `H/n - n^{1/3}(beta - W)/n` on the grid, off the diagonal.
    pub norm_deviation: f64,
    /// Ordered pairs `i != j` outside `B` with `beta_ij <= n^{-delta0}`.
    pub small_pair_count: u64,
    /// `sum_{i in B} sum_j beta_ij^2`
    pub b_mass: f64,
    pub b_size: usize,
    pub delta0: f64,
    pub varpi0: f64,
    /// Empirical exponent `log(theta_stat^{2/3}) / log n`, floored at zero.
    pub theta0: f64,
    /// Empirical exponent `log(theta_stat) / log n`, floored at zero.
    pub theta1: f64,
}

pub const DEFAULT_DELTA0: f64 = 0.25;
pub const DEFAULT_VARPI0: f64 = 0.5;

pub fn condition_diagnostics(
    weights: &WeightMatrix,
    w: &KernelSpec,
    h: Option<&KernelSpec>,
    delta0: f64,
    b: &[usize],
) -> Result<ConditionReport> {
    if !(delta0 > 0.0 && delta0 < 1.0 / 3.0) {
        return Err(KernelError::Parameter(format!("delta0 must lie in (0, 1/3), got {delta0}")));
    }
    let n = weights.n;
    let nf = n as f64;
    let mut in_b = vec![false; n];
    for &i in b {
        if i >= n {
            return Err(KernelError::Input(format!("exceptional vertex {i} out of range")));
        }
        in_b[i] = true;
    }
    let thresh = nf.powf(-delta0);
    let mut l3 = 0.0;
    let mut row32 = vec![0.0; n];
    let mut small = 0u64;
    let mut b_mass = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = weights.get(i, j);
            l3 += v * v * v;
            row32[i] += v.powf(1.5);
            if in_b[i] {
                b_mass += v * v;
            }
            if !in_b[i] && !in_b[j] && v <= thresh {
                small += 1;
            }
        }
    }
    let theta_stat = row32.iter().fold(0.0f64, |m, &v| m.max(v / nf));
    let cap = nf.powf(2.0 / 3.0);
    let n13 = nf.powf(1.0 / 3.0);
    let dev = SymMatrix::from_fn(n, |i, j| {
        if i == j {
            return 0.0;
        }
        let (x, y) = ((i + 1) as f64 / nf, (j + 1) as f64 / nf);
        let wv = w.eval_unchecked(x, y).clamp(-cap, cap);
        let hv = h.map_or(0.0, |h| h.eval_unchecked(x, y).clamp(-cap, cap));
        hv - n13 * (weights.get(i, j) - wv)
    });
    let norm_deviation = if dev.max_abs() == 0.0 { 0.0 } else { spectral::dominant_abs_eigen(&dev)?.0.abs() / nf };
    let lnn = nf.ln();
    let theta1 = if theta_stat > 1.0 { theta_stat.ln() / lnn } else { 0.0 };
    Ok(ConditionReport {
        l3_norm: l3 / (nf * nf),
        theta_stat,
        norm_deviation,
        small_pair_count: small,
        b_mass,
        b_size: b.len(),
        delta0,
        varpi0: DEFAULT_VARPI0,
        theta0: 2.0 / 3.0 * theta1,
        theta1,
    })
}

/// Root of `tanh(1/sqrt z) = sqrt z` on `(0, 1)`: the norm of the operator with kernel `x v y`.
pub fn z0() -> f64 {
    let f = |z: f64| (1.0 / z.sqrt()).tanh() - z.sqrt();
    let (mut lo, mut hi) = (0.1, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
