//! Random graph, tree and branching-process samplers.

use std::collections::VecDeque;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::kernels::{rgiv_positions, WeightMatrix};
use crate::linalg::SymMatrix;
use crate::rng::{derive_seed, open_unit, rng_from_seed};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Simple undirected graph on `0..n` as a sorted list of unique pairs `i < j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Compressed adjacency lists.
#[derive(Clone, Debug)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Adjacency {
    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self { n, edges: Vec::new() }
    }

    /// Normalizes orientation, sorts, and rejects loops, duplicates and out-of-range endpoints.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut e: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b {
                return Err(GraphError::Invalid(format!("self-loop at {a}")));
            }
            if a >= n || b >= n {
                return Err(GraphError::Invalid(format!("edge ({a},{b}) out of range for n={n}")));
            }
            e.push((a.min(b), a.max(b)));
        }
        e.sort_unstable();
        if e.windows(2).any(|w| w[0] == w[1]) {
            return Err(GraphError::Invalid("duplicate edge".into()));
        }
        Ok(Self { n, edges: e })
    }

    fn from_raw(n: usize, mut edges: Vec<(usize, usize)>) -> Self {
        edges.sort_unstable();
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        Self { n, edges }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> Adjacency {
        let mut deg = vec![0usize; self.n + 1];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        let mut offsets = vec![0usize; self.n + 1];
        for v in 0..self.n {
            offsets[v + 1] = offsets[v] + deg[v];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0usize; offsets[self.n]];
        for &(a, b) in &self.edges {
            targets[fill[a]] = b;
            fill[a] += 1;
            targets[fill[b]] = a;
            fill[b] += 1;
        }
        Adjacency { offsets, targets }
    }

    /// CSV with header `# n=<n>` then one `i,j` row per edge.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# n={}", self.n)?;
        for &(a, b) in &self.edges {
            writeln!(w, "{a},{b}")?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| GraphError::Parse("empty edge list".into()))?;
        let n = header
            .trim_start_matches('#')
            .split_whitespace()
            .find_map(|t| t.strip_prefix("n=").and_then(|v| v.parse::<usize>().ok()))
            .ok_or_else(|| GraphError::Parse("header lacks n=<n>".into()))?;
        let mut edges = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = || GraphError::Parse(format!("line {}: expected i,j", k + 2));
            let (a, b) = line.split_once(',').ok_or_else(err)?;
            edges.push((a.trim().parse().map_err(|_| err())?, b.trim().parse().map_err(|_| err())?));
        }
        Graph::new(n, edges)
    }
}

/// Visits indices `0..len` keeping each with probability `prob(k) <= pmax`, by geometric skipping and thinning.
fn thin_row<R: Rng + ?Sized>(rng: &mut R, len: usize, pmax: f64, mut prob: impl FnMut(usize) -> f64, mut accept: impl FnMut(usize)) {
    if len == 0 || pmax <= 0.0 {
        return;
    }
    if pmax >= 1.0 {
        for k in 0..len {
            if rng.random::<f64>() < prob(k) {
                accept(k);
            }
        }
        return;
    }
    let log_q = (-pmax).ln_1p();
    let mut pos: f64 = -1.0;
    loop {
        let skip = (open_unit(rng).ln() / log_q).floor();
        pos += skip + 1.0;
        if pos >= len as f64 {
            return;
        }
        let k = pos as usize;
        let p = prob(k);
        if p >= pmax || rng.random::<f64>() * pmax < p {
            accept(k);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeRule {
    /// `1 ^ beta/n`
    Capped,
    /// `1 - exp(-beta/n)`
    Exponential,
}

impl EdgeRule {
    #[inline]
    pub fn prob(&self, beta: f64, n: f64) -> f64 {
        match self {
            EdgeRule::Capped => (beta / n).min(1.0),
            EdgeRule::Exponential => -(-beta / n).exp_m1(),
        }
    }
}

impl std::str::FromStr for EdgeRule {
    type Err = GraphError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "capped" => Ok(EdgeRule::Capped),
            "exponential" => Ok(EdgeRule::Exponential),
            o => Err(GraphError::Parse(format!("unknown edge rule `{o}`"))),
        }
    }
}

/// Reusable sampler for one weight matrix (row maxima are computed once).
pub struct GraphonSampler<'a> {
    weights: &'a WeightMatrix,
    rule: EdgeRule,
    row_pmax: Vec<f64>,
}

impl<'a> GraphonSampler<'a> {
    pub fn new(weights: &'a WeightMatrix, rule: EdgeRule) -> Self {
        let n = weights.n as f64;
        let row_pmax = (0..weights.n)
            .map(|i| {
                let m = weights.beta.upper_row(i)[1..].iter().fold(0.0f64, |m, &b| m.max(b));
                rule.prob(m, n)
            })
            .collect();
        Self { weights, rule, row_pmax }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Graph {
        let n = self.weights.n;
        let nf = n as f64;
        let mut edges = Vec::new();
        for i in 0..n {
            let row = &self.weights.beta.upper_row(i)[1..];
            let rule = self.rule;
            thin_row(rng, row.len(), self.row_pmax[i], |k| rule.prob(row[k], nf), |k| edges.push((i, i + 1 + k)));
        }
        Graph::from_raw(n, edges)
    }
}

/// Each edge `{i,j}` independently with probability `1 ^ beta_ij/n` or `1 - exp(-beta_ij/n)`.
pub fn sample_graphon_graph(weights: &WeightMatrix, rule: EdgeRule, seed: u64) -> Graph {
    GraphonSampler::new(weights, rule).sample(&mut rng_from_seed(seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankOneMode {
    Direct,
    Exploration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankOneSample {
    pub graph: Graph,
    /// Size-biased breadth-first exploration order (exploration mode only).
    pub order: Option<Vec<usize>>,
}

fn check_rank_one(x: &[f64], q: f64) -> Result<()> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(GraphError::Parameter(format!("q must be positive, got {q}")));
    }
    if let Some(v) = x.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(GraphError::Parameter(format!("weights must be positive, found {v}")));
    }
    Ok(())
}

/// `G(x, q)`: edge `{i,j}` with probability `1 - exp(-q x_i x_j)`.
pub fn sample_rank_one(x: &[f64], q: f64, mode: RankOneMode, seed: u64) -> Result<RankOneSample> {
    check_rank_one(x, q)?;
    let mut rng = rng_from_seed(seed);
    Ok(match mode {
        RankOneMode::Direct => RankOneSample { graph: rank_one_direct(x, q, &mut rng), order: None },
        RankOneMode::Exploration => {
            let (graph, order) = rank_one_exploration(x, q, &mut rng);
            RankOneSample { graph, order: Some(order) }
        }
    })
}

/// Weights sorted decreasingly make the edge probability along a row nonincreasing,
/// so the current probability bounds the rest of the row.
pub(crate) fn rank_one_direct<R: Rng + ?Sized>(x: &[f64], q: f64, rng: &mut R) -> Graph {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap().then(a.cmp(&b)));
    let xs: Vec<f64> = order.iter().map(|&v| x[v]).collect();
    let mut edges = Vec::new();
    for a in 0..n.saturating_sub(1) {
        let xa = xs[a];
        let mut b = a + 1;
        let mut p = -(-q * xa * xs[b]).exp_m1();
        while b < n && p > 0.0 {
            if p < 1.0 {
                let skip = (open_unit(rng).ln() / (-p).ln_1p()).floor();
                if skip >= (n - b) as f64 {
                    break;
                }
                b += skip as usize;
            }
            let pt = -(-q * xa * xs[b]).exp_m1();
            if rng.random::<f64>() * p < pt {
                let (u, v) = (order[a], order[b]);
                edges.push((u.min(v), u.max(v)));
            }
            p = pt;
            b += 1;
        }
    }
    Graph::from_raw(n, edges)
}

fn rank_one_exploration<R: Rng + ?Sized>(x: &[f64], q: f64, rng: &mut R) -> (Graph, Vec<usize>) {
    let n = x.len();
    // root clocks Exp(x_k): increasing order is a size-biased permutation
    let clocks: Vec<f64> = x.iter().map(|&w| rng.sample::<f64, _>(Exp1) / w).collect();
    let mut by_clock: Vec<usize> = (0..n).collect();
    by_clock.sort_by(|&a, &b| clocks[a].partial_cmp(&clocks[b]).unwrap().then(a.cmp(&b)));
    let mut next_root = 0usize;
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Undiscovered,
        Queued,
        Done,
    }
    let mut state = vec![State::Undiscovered; n];
    let mut queue = VecDeque::new();
    let mut order = Vec::with_capacity(n);
    let mut edges = Vec::new();
    let mut found: Vec<(f64, usize)> = Vec::new();
    // keep going after discovery ends: queued vertices still owe their mutual edges
    while order.len() < n || !queue.is_empty() {
        if queue.is_empty() {
            while state[by_clock[next_root]] != State::Undiscovered {
                next_root += 1;
            }
            let r = by_clock[next_root];
            state[r] = State::Queued;
            queue.push_back(r);
            order.push(r);
        }
        let v = queue.pop_front().unwrap();
        found.clear();
        for i in 0..n {
            match state[i] {
                State::Undiscovered => {
                    let xi = rng.sample::<f64, _>(Exp1) / (q * x[i]);
                    if xi <= x[v] {
                        found.push((xi, i));
                    }
                }
                State::Queued if i != v => {
                    if rng.random::<f64>() < -(-q * x[v] * x[i]).exp_m1() {
                        edges.push((v.min(i), v.max(i)));
                    }
                }
                _ => {}
            }
        }
        state[v] = State::Done;
        found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for &(_, c) in &found {
            state[c] = State::Queued;
            queue.push_back(c);
            order.push(c);
            edges.push((v.min(c), v.max(c)));
        }
    }
    (Graph::from_raw(n, edges), order)
}

/// Rooted tree on `0..n` with a left-to-right order on each child list.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RootedOrderedTree {
    pub n: usize,
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
}

impl RootedOrderedTree {
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.parent.len() != n || self.children.len() != n || self.root >= n {
            return Err(GraphError::Invalid("tree arrays have inconsistent sizes".into()));
        }
        if self.parent[self.root].is_some() {
            return Err(GraphError::Invalid("root has a parent".into()));
        }
        let links = self.parent.iter().filter(|p| p.is_some()).count();
        if links != n - 1 {
            return Err(GraphError::Invalid("tree needs n-1 parent links".into()));
        }
        for v in 0..n {
            let mut listed: Vec<usize> = self.children[v].clone();
            listed.sort_unstable();
            let mut actual: Vec<usize> = (0..n).filter(|&c| self.parent[c] == Some(v)).collect();
            actual.sort_unstable();
            if listed != actual {
                return Err(GraphError::Invalid(format!("child order of {v} is not a permutation of its children")));
            }
        }
        // every vertex reaches the root
        for v in 0..n {
            let (mut u, mut steps) = (v, 0);
            while let Some(p) = self.parent[u] {
                u = p;
                steps += 1;
                if steps > n {
                    return Err(GraphError::Invalid("cycle in parent links".into()));
                }
            }
            if u != self.root {
                return Err(GraphError::Invalid("disconnected tree".into()));
            }
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = (0..self.n).filter_map(|v| self.parent[v].map(|p| (p.min(v), p.max(v)))).collect();
        e.sort_unstable();
        e
    }

    /// `log prod_v p_v^{d_v} / d_v!`
    pub fn log_prob_ordered(&self, p: &[f64]) -> f64 {
        let mut s = 0.0;
        for v in 0..self.n {
            let d = self.children[v].len();
            s += d as f64 * p[v].ln();
            for k in 2..=d {
                s -= (k as f64).ln();
            }
        }
        s
    }

    /// CSV `vertex,parent,position` (root has parent `-1`), header `# n=<n> root=<root>`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# n={} root={}", self.n, self.root)?;
        let mut pos = vec![0usize; self.n];
        for v in 0..self.n {
            for (k, &c) in self.children[v].iter().enumerate() {
                pos[c] = k;
            }
        }
        for v in 0..self.n {
            match self.parent[v] {
                Some(p) => writeln!(w, "{v},{p},{}", pos[v])?,
                None => writeln!(w, "{v},-1,0")?,
            }
        }
        Ok(())
    }
}

fn check_prob_vector(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(GraphError::Parameter("empty probability vector".into()));
    }
    if p.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(GraphError::Parameter("probability vector has a zero-mass or invalid entry".into()));
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(GraphError::Parameter("probability vector must sum to 1".into()));
    }
    Ok(())
}

/// Ordered p-tree with law `prod_v p_v^{d_v} / d_v!`.
///
/// The shape comes from an i.i.d. `p` sequence (parent of a new value = preceding value);
/// child lists are then put in uniformly random order.
pub fn sample_p_tree(p: &[f64], seed: u64) -> Result<RootedOrderedTree> {
    check_prob_vector(p)?;
    let mut rng = rng_from_seed(seed);
    Ok(p_tree_from_rng(p, &mut rng))
}

fn p_tree_from_rng<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> RootedOrderedTree {
    let m = p.len();
    let dist = WeightedIndex::new(p).expect("validated weights");
    let root = dist.sample(rng);
    let mut parent = vec![None; m];
    let mut seen = vec![false; m];
    seen[root] = true;
    let mut children = vec![Vec::new(); m];
    let mut remaining = m - 1;
    let mut prev = root;
    while remaining > 0 {
        let j = dist.sample(rng);
        if !seen[j] {
            seen[j] = true;
            parent[j] = Some(prev);
            children[prev].push(j);
            remaining -= 1;
        }
        prev = j;
    }
    for c in children.iter_mut() {
        c.shuffle(rng);
    }
    RootedOrderedTree { n: m, root, parent, children }
}

/// Permitted edges: `{v, u}` for non-root `v` and `u` a child of a path vertex `v_i`
/// lying to the right of the next path vertex `v_{i+1}`.
pub fn permitted_edges(t: &RootedOrderedTree) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    // (vertex, right-sibling set accumulated along the path)
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(t.root, Vec::new())];
    while let Some((v, r)) = stack.pop() {
        for &u in &r {
            out.push((v.min(u), v.max(u)));
        }
        let ch = &t.children[v];
        for (k, &c) in ch.iter().enumerate() {
            let mut rc = r.clone();
            rc.extend_from_slice(&ch[k + 1..]);
            stack.push((c, rc));
        }
    }
    out.sort_unstable();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltWeight {
    pub log_l: f64,
    pub l: f64,
    pub permitted: Vec<(usize, usize)>,
}

/// `L(t) = prod_{edges} [(e^{a p_i p_j} - 1)/(a p_i p_j)] * exp(sum_{permitted} a p_i p_j)`.
pub fn tree_tilt_weight(t: &RootedOrderedTree, p: &[f64], a: f64) -> Result<TiltWeight> {
    if p.len() != t.n {
        return Err(GraphError::Parameter("p does not match the tree's vertex set".into()));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(GraphError::Parameter(format!("a must be positive, got {a}")));
    }
    let permitted = permitted_edges(t);
    let mut log_l = 0.0;
    for (i, j) in t.edges() {
        let s = a * p[i] * p[j];
        log_l += (s.exp_m1() / s).ln();
    }
    for &(i, j) in &permitted {
        log_l += a * p[i] * p[j];
    }
    Ok(TiltWeight { log_l, l: log_l.exp(), permitted })
}

/// All ordered rooted trees on `0..m`.
pub fn enumerate_ordered_trees(m: usize) -> Vec<RootedOrderedTree> {
    let mut out = Vec::new();
    if m == 0 {
        return out;
    }
    for root in 0..m {
        let others: Vec<usize> = (0..m).filter(|&v| v != root).collect();
        let mut parent = vec![None; m];
        enumerate_parents(m, root, &others, 0, &mut parent, &mut out);
    }
    out
}

fn enumerate_parents(m: usize, root: usize, others: &[usize], k: usize, parent: &mut Vec<Option<usize>>, out: &mut Vec<RootedOrderedTree>) {
    if k == others.len() {
        // acyclic check
        for v in 0..m {
            let (mut u, mut steps) = (v, 0);
            while let Some(p) = parent[u] {
                u = p;
                steps += 1;
                if steps > m {
                    return;
                }
            }
        }
        let mut children = vec![Vec::new(); m];
        for v in 0..m {
            if let Some(p) = parent[v] {
                children[p].push(v);
            }
        }
        let mut acc = vec![RootedOrderedTree { n: m, root, parent: parent.clone(), children: vec![Vec::new(); m] }];
        for v in 0..m {
            let perms = permutations(&children[v]);
            let mut next = Vec::with_capacity(acc.len() * perms.len());
            for t in &acc {
                for pm in &perms {
                    let mut t2 = t.clone();
                    t2.children[v] = pm.clone();
                    next.push(t2);
                }
            }
            acc = next;
        }
        out.extend(acc);
        return;
    }
    let v = others[k];
    for p in 0..m {
        if p != v {
            parent[v] = Some(p);
            enumerate_parents(m, root, others, k + 1, parent, out);
        }
    }
    parent[v] = None;
}

fn permutations(xs: &[usize]) -> Vec<Vec<usize>> {
    if xs.len() <= 1 {
        return vec![xs.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..xs.len() {
        let mut rest = xs.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TiltSampling {
    /// Importance resampling from a pool of untilted p-trees.
    Pool(usize),
    /// Exact draw from the tilted law by enumeration (`m <= 4`).
    Exact,
}

pub const DEFAULT_TREE_POOL: usize = 1024;
pub const EXACT_TREE_MAX_M: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectedSample {
    pub graph: Graph,
    pub tree: RootedOrderedTree,
    /// Effective sample size of the resampling pool (equal to 1 for exact draws).
    pub ess: f64,
}

/// Connected graph on `0..m`: a tilted p-tree plus each permitted edge with probability `1 - exp(-a p_u p_v)`.
pub fn sample_connected_component(p: &[f64], a: f64, sampling: TiltSampling, seed: u64) -> Result<ConnectedSample> {
    check_prob_vector(p)?;
    if !(a > 0.0 && a.is_finite()) {
        return Err(GraphError::Parameter(format!("a must be positive, got {a}")));
    }
    let m = p.len();
    let mut rng = rng_from_seed(derive_seed(seed, u64::MAX));
    let (tree, permitted, ess) = match sampling {
        TiltSampling::Pool(0) => return Err(GraphError::Parameter("pool must be at least 1".into())),
        TiltSampling::Pool(pool) => {
            let mut trees = Vec::with_capacity(pool);
            let mut logw = Vec::with_capacity(pool);
            for k in 0..pool {
                let t = p_tree_from_rng(p, &mut rng_from_seed(derive_seed(seed, k as u64)));
                let w = tree_tilt_weight(&t, p, a)?;
                logw.push(w.log_l);
                trees.push((t, w.permitted));
            }
            let (idx, ess) = resample_index(&logw, &mut rng);
            let (t, perm) = trees.swap_remove(idx);
            (t, perm, ess)
        }
        TiltSampling::Exact => {
            if m > EXACT_TREE_MAX_M {
                return Err(GraphError::Parameter(format!("exact mode supports m <= {EXACT_TREE_MAX_M}")));
            }
            let trees = enumerate_ordered_trees(m);
            let logw: Vec<f64> = trees.iter().map(|t| Ok(t.log_prob_ordered(p) + tree_tilt_weight(t, p, a)?.log_l)).collect::<Result<_>>()?;
            let (idx, _) = resample_index(&logw, &mut rng);
            let t = trees[idx].clone();
            let perm = permitted_edges(&t);
            (t, perm, 1.0)
        }
    };
    let mut edges = tree.edges();
    for (u, v) in permitted {
        if rng.random::<f64>() < -(-a * p[u] * p[v]).exp_m1() {
            edges.push((u, v));
        }
    }
    let graph = Graph::new(m, edges)?;
    Ok(ConnectedSample { graph, tree, ess })
}

/// Draws an index with probability proportional to `exp(logw)`; returns it with the pool ESS.
pub(crate) fn resample_index<R: Rng + ?Sized>(logw: &[f64], rng: &mut R) -> (usize, f64) {
    let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    let idx = WeightedIndex::new(&w).expect("finite weights").sample(rng);
    (idx, s * s / s2)
}

/// Exact `P_con(G)` for every connected graph on `0..m`, by enumeration over edge subsets.
pub fn connected_graph_law(p: &[f64], a: f64) -> Vec<(Graph, f64)> {
    let m = p.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let mut out = Vec::new();
    let mut total = 0.0;
    for mask in 0u64..(1u64 << pairs.len()) {
        let edges: Vec<(usize, usize)> = pairs.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, e)| *e).collect();
        let g = Graph::from_raw(m, edges);
        if crate::graphstats::components(&g).count() != 1 {
            continue;
        }
        let mut w = 1.0;
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let s = a * p[i] * p[j];
            w *= if mask >> k & 1 == 1 { -(-s).exp_m1() } else { (-s).exp() };
        }
        total += w;
        out.push((g, w));
    }
    for o in out.iter_mut() {
        o.1 /= total;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgivSample {
    pub graph: Graph,
    pub time: f64,
    /// Sorted positions `V_1 <= ... <= V_N`.
    pub positions: Vec<f64>,
}

/// Random graph with immigrating vertices at time `pi/2 + lambda n^{-1/3}`, conditional construction.
pub fn sample_rgiv(n: usize, lambda: f64, seed: u64) -> Result<RgivSample> {
    if n < 10 {
        return Err(GraphError::Parameter("rgiv needs n >= 10".into()));
    }
    let mut rng = rng_from_seed(seed);
    let (t, v) = rgiv_positions(n, lambda, &mut rng);
    let m = v.len();
    let mut edges = Vec::new();
    for i in 0..m.saturating_sub(1) {
        // V sorted ascending: V_i ^ V_j = V_i along the rest of the row
        let p = -(-t * v[i] / n as f64).exp_m1();
        thin_row(&mut rng, m - i - 1, p, |_| p, |k| edges.push((i, i + 1 + k)));
    }
    Ok(RgivSample { graph: Graph::from_raw(m, edges), time: t, positions: v })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BPSummary {
    pub total: u64,
    pub height: usize,
    pub weighted_depth: u64,
    pub generation_sizes: Vec<u64>,
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RootType {
    Fixed(usize),
    Uniform,
}

/// Multitype branching process: a type-`i` individual has Bernoulli(`1 ^ K_ij/n`) children of type `j`.
pub struct BranchingSampler {
    n: usize,
    probs: Vec<f64>,
    row_pmax: Vec<f64>,
}

impl BranchingSampler {
    pub fn new(k: &SymMatrix) -> Self {
        let n = k.n();
        let nf = n as f64;
        let mut probs = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                probs[i * n + j] = (k.get(i, j) / nf).min(1.0);
            }
        }
        let row_pmax = (0..n).map(|i| probs[i * n..(i + 1) * n].iter().fold(0.0f64, |m, &p| m.max(p))).collect();
        Self { n, probs, row_pmax }
    }

    pub fn sample<R: Rng + ?Sized>(&self, root: RootType, cap: u64, rng: &mut R) -> BPSummary {
        let n = self.n;
        let r = match root {
            RootType::Fixed(i) => i,
            RootType::Uniform => rng.random_range(0..n),
        };
        let mut current = vec![r];
        let mut sizes = vec![1u64];
        let mut total = 1u64;
        let mut truncated = false;
        let mut next = Vec::new();
        while !current.is_empty() {
            next.clear();
            for &i in &current {
                let row = &self.probs[i * n..(i + 1) * n];
                thin_row(rng, n, self.row_pmax[i], |j| row[j], |j| next.push(j));
                if total + next.len() as u64 >= cap {
                    break;
                }
            }
            if next.is_empty() {
                break;
            }
            total += next.len() as u64;
            sizes.push(next.len() as u64);
            if total >= cap {
                truncated = true;
                break;
            }
            std::mem::swap(&mut current, &mut next);
        }
        let weighted_depth = sizes.iter().enumerate().map(|(l, &s)| l as u64 * s).sum();
        BPSummary { total, height: sizes.len() - 1, weighted_depth, generation_sizes: sizes, truncated }
    }
}

pub fn sample_branching_process(k: &SymMatrix, root: RootType, cap: u64, seed: u64) -> Result<BPSummary> {
    if cap == 0 {
        return Err(GraphError::Parameter("cap must be at least 1".into()));
    }
    if let RootType::Fixed(i) = root {
        if i >= k.n() {
            return Err(GraphError::Parameter(format!("root type {i} out of range")));
        }
    }
    Ok(BranchingSampler::new(k).sample(root, cap, &mut rng_from_seed(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_weight_matrix, KernelSpec, WeightScheme};

    #[test]
    fn graph_validation() {
        assert!(Graph::new(3, vec![(0, 0)]).is_err());
        assert!(Graph::new(3, vec![(0, 3)]).is_err());
        assert!(Graph::new(3, vec![(0, 1), (1, 0)]).is_err());
        let g = Graph::new(3, vec![(2, 1), (0, 1)]).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn graph_csv_roundtrip() {
        let g = Graph::new(5, vec![(0, 1), (3, 4)]).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "# n=5\n0,1\n3,4\n");
        assert_eq!(Graph::read_csv(&String::from_utf8(buf).unwrap()).unwrap(), g);
    }

    #[test]
    fn zero_and_saturated_weights() {
        let n = 30;
        let zero = WeightMatrix::explicit(SymMatrix::zeros(n)).unwrap();
        assert_eq!(sample_graphon_graph(&zero, EdgeRule::Capped, 1).edge_count(), 0);
        let full = WeightMatrix::explicit(SymMatrix::from_fn(n, |_, _| n as f64)).unwrap();
        assert_eq!(sample_graphon_graph(&full, EdgeRule::Capped, 1).edge_count(), n * (n - 1) / 2);
    }

    #[test]
    fn thinning_keeps_exact_probabilities() {
        // increasing row: probabilities 0.1..0.5 against pmax 0.5
        let mut rng = rng_from_seed(11);
        let len = 5;
        let probs = [0.1, 0.2, 0.3, 0.4, 0.5];
        let reps = 200_000;
        let mut hits = [0u32; 5];
        for _ in 0..reps {
            thin_row(&mut rng, len, 0.5, |k| probs[k], |k| hits[k] += 1);
        }
        for k in 0..len {
            let f = hits[k] as f64 / reps as f64;
            let se = (probs[k] * (1.0 - probs[k]) / reps as f64).sqrt();
            assert!((f - probs[k]).abs() < 5.0 * se, "k={k} f={f}");
        }
    }

    #[test]
    fn rank_one_two_vertices() {
        let reps = 40_000;
        let mut hits = 0;
        for s in 0..reps {
            hits += sample_rank_one(&[1.0, 1.0], 2f64.ln(), RankOneMode::Direct, s).unwrap().graph.edge_count();
        }
        let f = hits as f64 / reps as f64;
        assert!((f - 0.5).abs() < 4.0 * (0.25 / reps as f64).sqrt());
        assert!(sample_rank_one(&[1.0, 0.0], 1.0, RankOneMode::Direct, 0).is_err());
        assert!(sample_rank_one(&[1.0, 1.0], 0.0, RankOneMode::Direct, 0).is_err());
    }

    #[test]
    fn exploration_order_is_a_permutation() {
        let x: Vec<f64> = (1..=40).map(|i| i as f64 / 40.0).collect();
        let s = sample_rank_one(&x, 2.0, RankOneMode::Exploration, 5).unwrap();
        let mut o = s.order.unwrap();
        o.sort_unstable();
        assert_eq!(o, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn p_tree_small_cases() {
        let t = sample_p_tree(&[1.0], 0).unwrap();
        assert_eq!(t.n, 1);
        assert!(t.validate().is_ok());
        for s in 0..50 {
            let t = sample_p_tree(&[0.3, 0.7], s).unwrap();
            t.validate().unwrap();
            assert_eq!(t.edges(), vec![(0, 1)]);
        }
        assert!(sample_p_tree(&[0.0, 1.0], 0).is_err());
    }

    #[test]
    fn enumeration_counts() {
        // ordered rooted labelled trees on m vertices: m! * Catalan(m-1)
        assert_eq!(enumerate_ordered_trees(1).len(), 1);
        assert_eq!(enumerate_ordered_trees(2).len(), 2);
        assert_eq!(enumerate_ordered_trees(3).len(), 12);
        assert_eq!(enumerate_ordered_trees(4).len(), 120);
        let p = [0.1, 0.2, 0.3, 0.4];
        let total: f64 = enumerate_ordered_trees(4).iter().map(|t| t.log_prob_ordered(&p).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_vertex_tilt() {
        let t = RootedOrderedTree { n: 2, root: 0, parent: vec![None, Some(0)], children: vec![vec![1], vec![]] };
        let (p, a) = ([0.4, 0.6], 1.3);
        let w = tree_tilt_weight(&t, &p, a).unwrap();
        assert!(w.permitted.is_empty());
        let s = a * 0.4 * 0.6;
        assert!((w.l - s.exp_m1() / s).abs() < 1e-14);
        let tiny = tree_tilt_weight(&t, &p, 1e-12).unwrap();
        assert!((tiny.l - 1.0).abs() < 1e-9);
    }

    #[test]
    fn permitted_edges_star_and_path() {
        // root 0 with children [1, 2]; 1 has child 3
        let t = RootedOrderedTree {
            n: 4,
            root: 0,
            parent: vec![None, Some(0), Some(0), Some(1)],
            children: vec![vec![1, 2], vec![3], vec![], vec![]],
        };
        t.validate().unwrap();
        // R(1) = {2}, R(2) = {}, R(3) = {2}
        assert_eq!(permitted_edges(&t), vec![(1, 2), (2, 3)]);
    }

    #[test]
    fn connected_two_vertices() {
        for s in 0..20 {
            let c = sample_connected_component(&[0.5, 0.5], 1.0, TiltSampling::Pool(16), s).unwrap();
            assert_eq!(c.graph.edges, vec![(0, 1)]);
        }
        assert!(sample_connected_component(&[0.5, 0.5], 1.0, TiltSampling::Pool(0), 0).is_err());
        assert!(sample_connected_component(&[0.2; 5], 1.0, TiltSampling::Exact, 0).is_err());
    }

    #[test]
    fn connected_law_three_vertices_sums_to_one() {
        let law = connected_graph_law(&[1.0 / 3.0; 3], 1.0);
        assert_eq!(law.len(), 4);
        assert!((law.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rgiv_counts_and_monotone_probabilities() {
        let s = sample_rgiv(10_000, 0.0, 3).unwrap();
        let ratio = s.positions.len() as f64 / (10_000.0 * std::f64::consts::FRAC_PI_2);
        assert!((0.95..=1.05).contains(&ratio));
        assert!(s.positions.windows(2).all(|w| w[0] <= w[1]));
        assert!(sample_rgiv(5, 0.0, 0).is_err());
    }

    #[test]
    fn branching_zero_kernel() {
        let k = SymMatrix::zeros(10);
        let b = sample_branching_process(&k, RootType::Uniform, 100, 4).unwrap();
        assert_eq!((b.total, b.height, b.weighted_depth, b.truncated), (1, 0, 0, false));
    }

    #[test]
    fn branching_cap_truncates() {
        let k = SymMatrix::from_fn(50, |_, _| 3.0);
        let b = sample_branching_process(&k, RootType::Fixed(0), 200, 1).unwrap();
        assert!(b.truncated);
        assert_eq!(b.total, b.generation_sizes.iter().sum::<u64>());
    }

    #[test]
    fn determinism() {
        let w = build_weight_matrix(&KernelSpec::min(2.0), None, 300, WeightScheme::Grid, None).unwrap();
        assert_eq!(sample_graphon_graph(&w, EdgeRule::Exponential, 9), sample_graphon_graph(&w, EdgeRule::Exponential, 9));
        assert_eq!(sample_p_tree(&[0.2, 0.3, 0.5], 4).unwrap(), sample_p_tree(&[0.2, 0.3, 0.5], 4).unwrap());
    }
}
