//! Finite metric measure spaces, blob gluing, scaling and exact Gromov-Hausdorff distance.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::graphgen::Graph;
use crate::graphstats::components;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("invalid space: {0}")]
    Invalid(String),
    #[error("invalid junction: {0}")]
    Junction(String),
    #[error("exact Gromov-Hausdorff search is limited to {cap} points per space (got {m1} and {m2}); use distance_profile")]
    TooLarge { m1: usize, m2: usize, cap: usize },
    #[error("space has zero total mass")]
    ZeroMass,
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Finite metric space with a finite measure; `dist` is row-major `m x m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricMeasureSpace {
    pub m: usize,
    pub dist: Vec<f64>,
    pub mass: Vec<f64>,
}

impl MetricMeasureSpace {
    /// Checks shape, symmetry, zero diagonal and nonnegative masses (not the triangle inequality).
    pub fn new(m: usize, dist: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if dist.len() != m * m || mass.len() != m {
            return Err(MetricError::Invalid("dimension mismatch".into()));
        }
        for i in 0..m {
            if dist[i * m + i] != 0.0 {
                return Err(MetricError::Invalid(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let (a, b) = (dist[i * m + j], dist[j * m + i]);
                if a != b || !(a >= 0.0) || !a.is_finite() {
                    return Err(MetricError::Invalid(format!("bad distance at ({i},{j})")));
                }
            }
        }
        if mass.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(MetricError::Invalid("negative or non-finite mass".into()));
        }
        Ok(Self { m, dist, mass })
    }

    pub fn from_fn(m: usize, mut d: impl FnMut(usize, usize) -> f64, mass: Vec<f64>) -> Result<Self> {
        let mut dist = vec![0.0; m * m];
        for i in 0..m {
            for j in i + 1..m {
                let v = d(i, j);
                dist[i * m + j] = v;
                dist[j * m + i] = v;
            }
        }
        Self::new(m, dist, mass)
    }

    pub fn point(mass: f64) -> Self {
        Self { m: 1, dist: vec![0.0], mass: vec![mass] }
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.m + j]
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }

    /// Symmetry, zero diagonal and the triangle inequality within `tol`.
    pub fn check_metric(&self, tol: f64) -> Result<()> {
        let m = self.m;
        for i in 0..m {
            if self.d(i, i).abs() > tol {
                return Err(MetricError::Invalid(format!("d({i},{i}) = {}", self.d(i, i))));
            }
            for j in 0..m {
                if (self.d(i, j) - self.d(j, i)).abs() > tol || self.d(i, j) < -tol {
                    return Err(MetricError::Invalid(format!("asymmetric or negative at ({i},{j})")));
                }
                for k in 0..m {
                    if self.d(i, k) > self.d(i, j) + self.d(j, k) + tol {
                        return Err(MetricError::Invalid(format!("triangle inequality fails at ({i},{j},{k})")));
                    }
                }
            }
        }
        if self.mass.iter().any(|x| *x < 0.0) {
            return Err(MetricError::Invalid("negative mass".into()));
        }
        Ok(())
    }

    /// `JSON {m, dist: [[..]], mass: [..]}`
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = (0..self.m).map(|i| self.dist[i * self.m..(i + 1) * self.m].to_vec()).collect();
        serde_json::json!({ "m": self.m, "dist": rows, "mass": self.mass })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let err = |s: &str| MetricError::Parse(s.to_string());
        let m = v["m"].as_u64().ok_or_else(|| err("missing m"))? as usize;
        let rows = v["dist"].as_array().ok_or_else(|| err("missing dist"))?;
        let mut dist = Vec::with_capacity(m * m);
        for r in rows {
            for x in r.as_array().ok_or_else(|| err("dist rows must be arrays"))? {
                dist.push(x.as_f64().ok_or_else(|| err("non-numeric distance"))?);
            }
        }
        let mass = v["mass"]
            .as_array()
            .ok_or_else(|| err("missing mass"))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| err("non-numeric mass")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(m, dist, mass)
    }

    /// Upper-triangle CSV: header `# m=<m>`, rows `i,j,value` with `i<j` distances and `i=j` masses.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# m={}", self.m)?;
        for i in 0..self.m {
            writeln!(w, "{i},{i},{}", self.mass[i])?;
            for j in i + 1..self.m {
                writeln!(w, "{i},{j},{}", self.d(i, j))?;
            }
        }
        Ok(())
    }
}

/// `scl(a, b)`: distances times `a`, masses times `b`.
pub fn scale(space: &MetricMeasureSpace, a: f64, b: f64) -> Result<MetricMeasureSpace> {
    if !(a > 0.0 && b > 0.0) {
        return Err(MetricError::Invalid(format!("scale factors must be positive, got ({a}, {b})")));
    }
    Ok(MetricMeasureSpace {
        m: space.m,
        dist: space.dist.iter().map(|d| d * a).collect(),
        mass: space.mass.iter().map(|x| x * b).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Junctions {
    /// `(i, j) -> point of blob i` for each superstructure edge, both orientations.
    Explicit(BTreeMap<(usize, usize), usize>),
    /// Junction points drawn independently from each blob's measure.
    Sampled { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobSystem {
    pub superstructure: Graph,
    pub weights: Vec<f64>,
    pub blobs: Vec<MetricMeasureSpace>,
    pub junctions: Junctions,
}

const MASS_TOL: f64 = 1e-9;

impl BlobSystem {
    pub fn validate(&self) -> Result<()> {
        let m = self.superstructure.n;
        if self.weights.len() != m || self.blobs.len() != m {
            return Err(MetricError::Invalid("superstructure, weights and blobs disagree in size".into()));
        }
        if self.weights.iter().any(|x| !(*x > 0.0)) {
            return Err(MetricError::Invalid("weights must be positive".into()));
        }
        for (i, b) in self.blobs.iter().enumerate() {
            if (b.total_mass() - 1.0).abs() > MASS_TOL {
                return Err(MetricError::Invalid(format!("blob {i} mass is {} not 1", b.total_mass())));
            }
        }
        Ok(())
    }

    /// Point `X_{i,j}` of blob `i` used for the link towards blob `j`.
    pub fn junction(&self, i: usize, j: usize) -> Result<usize> {
        match &self.junctions {
            Junctions::Explicit(map) => {
                let p = *map.get(&(i, j)).ok_or_else(|| MetricError::Junction(format!("missing X_({i},{j})")))?;
                if p >= self.blobs[i].m {
                    return Err(MetricError::Junction(format!("X_({i},{j}) = {p} outside blob {i}")));
                }
                Ok(p)
            }
            Junctions::Sampled { seed } => {
                let b = &self.blobs[i];
                if b.m == 1 {
                    return Ok(0);
                }
                let mut rng = rng_from_seed(derive_seed(*seed, ((i as u64) << 32) ^ j as u64));
                let w = WeightedIndex::new(&b.mass).map_err(|e| MetricError::Junction(e.to_string()))?;
                Ok(w.sample(&mut rng))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobStats {
    /// `u_i = sum_{p,q} d_i(p,q) mu_i(p) mu_i(q)`
    pub u: Vec<f64>,
    /// `sum_i x_i^2 u_i`
    pub tau: f64,
    pub diam_max: f64,
}

pub fn blob_statistics(sys: &BlobSystem) -> BlobStats {
    let u: Vec<f64> = sys
        .blobs
        .iter()
        .map(|b| {
            let mut s = 0.0;
            for p in 0..b.m {
                for q in 0..b.m {
                    s += b.d(p, q) * b.mass[p] * b.mass[q];
                }
            }
            s
        })
        .collect();
    let tau = u.iter().zip(&sys.weights).map(|(u, x)| x * x * u).sum();
    let diam_max = sys.blobs.iter().map(|b| b.diameter()).fold(0.0, f64::max);
    BlobStats { u, tau, diam_max }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal).then(other.1.cmp(&self.1))
    }
}

/// One glued component, with distances evaluated on demand through junction points.
pub struct GluedMetric<'a> {
    sys: &'a BlobSystem,
    /// Blobs of this component, in increasing label order.
    pub blobs: Vec<usize>,
    /// Junction points per blob (indices into `portal_point`).
    blob_portals: Vec<Vec<usize>>,
    portal_point: Vec<usize>,
    /// All-pairs shortest paths between junction points.
    apsp: Vec<f64>,
    offsets: Vec<usize>,
}

impl<'a> GluedMetric<'a> {
    pub fn new(sys: &'a BlobSystem, blobs: Vec<usize>) -> Result<Self> {
        let local: BTreeMap<usize, usize> = blobs.iter().enumerate().map(|(k, &b)| (b, k)).collect();
        let mut blob_portals: Vec<Vec<usize>> = vec![Vec::new(); blobs.len()];
        let mut portal_point = Vec::new();
        let mut portal_id: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut links = Vec::new();
        let mut get_portal = |blob: usize, point: usize, blob_portals: &mut Vec<Vec<usize>>, portal_point: &mut Vec<usize>| -> usize {
            *portal_id.entry((blob, point)).or_insert_with(|| {
                let id = portal_point.len();
                portal_point.push(point);
                blob_portals[local[&blob]].push(id);
                id
            })
        };
        for &(i, j) in &sys.superstructure.edges {
            if !local.contains_key(&i) {
                continue;
            }
            let (xi, xj) = (sys.junction(i, j)?, sys.junction(j, i)?);
            let a = get_portal(i, xi, &mut blob_portals, &mut portal_point);
            let b = get_portal(j, xj, &mut blob_portals, &mut portal_point);
            links.push((a, b));
        }
        let p = portal_point.len();
        let mut portal_blob = vec![0usize; p];
        for (k, ps) in blob_portals.iter().enumerate() {
            for &s in ps {
                portal_blob[s] = k;
            }
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
        for (k, ps) in blob_portals.iter().enumerate() {
            let b = &sys.blobs[blobs[k]];
            for &s in ps {
                for &t in ps {
                    if s != t {
                        adj[s].push((t, b.d(portal_point[s], portal_point[t])));
                    }
                }
            }
        }
        for &(a, b) in &links {
            adj[a].push((b, 1.0));
            adj[b].push((a, 1.0));
        }
        let mut apsp = vec![f64::INFINITY; p * p];
        let mut heap = BinaryHeap::new();
        for s in 0..p {
            let row = &mut apsp[s * p..(s + 1) * p];
            row[s] = 0.0;
            heap.push(HeapItem(0.0, s));
            while let Some(HeapItem(d, u)) = heap.pop() {
                if d > row[u] {
                    continue;
                }
                for &(v, w) in &adj[u] {
                    let nd = d + w;
                    if nd < row[v] {
                        row[v] = nd;
                        heap.push(HeapItem(nd, v));
                    }
                }
            }
        }
        let mut offsets = Vec::with_capacity(blobs.len() + 1);
        offsets.push(0);
        for &b in &blobs {
            offsets.push(offsets.last().unwrap() + sys.blobs[b].m);
        }
        let _ = portal_blob;
        Ok(Self { sys, blobs, blob_portals, portal_point, apsp, offsets })
    }

    pub fn point_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// `(local blob index, point)` of a global point index.
    pub fn locate(&self, global: usize) -> (usize, usize) {
        let k = self.offsets.partition_point(|&o| o <= global) - 1;
        (k, global - self.offsets[k])
    }

    pub fn mass_of(&self, global: usize) -> f64 {
        let (k, p) = self.locate(global);
        let b = self.blobs[k];
        self.sys.weights[b] * self.sys.blobs[b].mass[p]
    }

    pub fn total_mass(&self) -> f64 {
        self.blobs.iter().map(|&b| self.sys.weights[b] * self.sys.blobs[b].total_mass()).sum()
    }

    /// Distance between point `p` of local blob `ka` and point `q` of local blob `kb`.
    pub fn distance(&self, ka: usize, p: usize, kb: usize, q: usize) -> f64 {
        let ba = &self.sys.blobs[self.blobs[ka]];
        let bb = &self.sys.blobs[self.blobs[kb]];
        let mut best = if ka == kb { ba.d(p, q) } else { f64::INFINITY };
        let np = self.portal_point.len();
        for &s in &self.blob_portals[ka] {
            let ds = ba.d(p, self.portal_point[s]);
            if ds >= best {
                continue;
            }
            let row = &self.apsp[s * np..(s + 1) * np];
            for &t in &self.blob_portals[kb] {
                let v = ds + row[t] + bb.d(self.portal_point[t], q);
                if v < best {
                    best = v;
                }
            }
        }
        best
    }

    pub fn distance_global(&self, a: usize, b: usize) -> f64 {
        let (ka, p) = self.locate(a);
        let (kb, q) = self.locate(b);
        self.distance(ka, p, kb, q)
    }

    pub fn materialize(&self) -> MetricMeasureSpace {
        let m = self.point_count();
        let mut dist = vec![0.0; m * m];
        for a in 0..m {
            for b in a + 1..m {
                let d = self.distance_global(a, b);
                dist[a * m + b] = d;
                dist[b * m + a] = d;
            }
        }
        let mass = (0..m).map(|a| self.mass_of(a)).collect();
        MetricMeasureSpace { m, dist, mass }
    }

    /// Sorted `d(U, V)` for `U, V` i.i.d. from the glued measure.
    pub fn sample_distances<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Vec<f64> {
        let masses: Vec<f64> = (0..self.point_count()).map(|a| self.mass_of(a)).collect();
        let w = WeightedIndex::new(&masses).expect("positive glued mass");
        let mut out: Vec<f64> = (0..samples).map(|_| self.distance_global(w.sample(rng), w.sample(rng))).collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluedComponent {
    /// Blob labels in increasing order; points are concatenated in this order.
    pub blobs: Vec<usize>,
    pub space: MetricMeasureSpace,
}

/// Glues blobs along the superstructure; one space per superstructure component,
/// ordered as the components of the superstructure.
pub fn glue_blobs(sys: &BlobSystem) -> Result<Vec<GluedComponent>> {
    sys.validate()?;
    let comps = components(&sys.superstructure);
    let mut out = Vec::with_capacity(comps.count());
    for c in &comps.components {
        let glued = GluedMetric::new(sys, c.clone())?;
        out.push(GluedComponent { blobs: c.clone(), space: glued.materialize() });
    }
    Ok(out)
}

/// Sorted sample of `d(U, V)` with `U, V` i.i.d. proportional to mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceProfile {
    pub distances: Vec<f64>,
    pub total_mass: f64,
}

pub fn distance_profile(space: &MetricMeasureSpace, samples: usize, seed: u64) -> Result<DistanceProfile> {
    let total = space.total_mass();
    if !(total > 0.0) {
        return Err(MetricError::ZeroMass);
    }
    let w = WeightedIndex::new(&space.mass).map_err(|e| MetricError::Invalid(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let mut d: Vec<f64> = (0..samples).map(|_| space.d(w.sample(&mut rng), w.sample(&mut rng))).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(DistanceProfile { distances: d, total_mass: total })
}

pub const GH_EXACT_CAP: usize = 7;

/// Exact `d_GH = inf dis(R) / 2` over correspondences, by branch and bound.
///
/// Every correspondence contains `graph(f) U graph(g)^T` for some maps
/// `f: X1 -> X2`, `g: X2 -> X1`, and distortion is monotone in `R`, so the
/// search runs over such map pairs.
pub fn gh_distance_exact(x1: &MetricMeasureSpace, x2: &MetricMeasureSpace) -> Result<f64> {
    let (m1, m2) = (x1.m, x2.m);
    if m1 > GH_EXACT_CAP || m2 > GH_EXACT_CAP {
        return Err(MetricError::TooLarge { m1, m2, cap: GH_EXACT_CAP });
    }
    if m1 == 0 || m2 == 0 {
        return Err(MetricError::Invalid("empty space".into()));
    }
    // slots: first each x in X1 picks a partner in X2, then each y in X2 picks a partner in X1
    let mut best = x1.diameter().max(x2.diameter()) + 1.0;
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(m1 + m2);
    gh_search(x1, x2, 0, 0.0, &mut pairs, &mut best);
    Ok(best / 2.0)
}

fn gh_search(x1: &MetricMeasureSpace, x2: &MetricMeasureSpace, slot: usize, cur: f64, pairs: &mut Vec<(usize, usize)>, best: &mut f64) {
    let (m1, m2) = (x1.m, x2.m);
    if slot == m1 + m2 {
        if cur < *best {
            *best = cur;
        }
        return;
    }
    let choices = if slot < m1 { m2 } else { m1 };
    for c in 0..choices {
        let (a, b) = if slot < m1 { (slot, c) } else { (c, slot - m1) };
        let mut d = cur;
        for &(p, q) in pairs.iter() {
            let v = (x1.d(a, p) - x2.d(b, q)).abs();
            if v > d {
                d = v;
                if d >= *best {
                    break;
                }
            }
        }
        if d >= *best {
            continue;
        }
        pairs.push((a, b));
        gh_search(x1, x2, slot + 1, d, pairs, best);
        pairs.pop();
    }
}

/// Unique points used as junctions in a blob system, per blob.
pub fn junction_points(sys: &BlobSystem) -> Result<Vec<BTreeSet<usize>>> {
    let mut out = vec![BTreeSet::new(); sys.blobs.len()];
    for &(i, j) in &sys.superstructure.edges {
        out[i].insert(sys.junction(i, j)?);
        out[j].insert(sys.junction(j, i)?);
    }
    Ok(out)
}
