//! Spectral numerics for discretized kernel operators `f -> (1/n) K f`.

use serde::{Deserialize, Serialize};

use crate::kernels::KernelSpec;
use crate::linalg::{cg_shifted, dot, lu_shifted, norm2, SymMatrix};

#[derive(Debug, thiserror::Error)]
pub enum SpectralError {
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("Perron root {0} is not 1 within tolerance")]
    Criticality(f64),
    #[error("spectral radius {0} is not below 1")]
    Supercritical(f64),
    #[error("input error: {0}")]
    Input(String),
    #[error("linear solve failed: {0}")]
    Solve(String),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 100_000;
const SECOND_MAX_ITER: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub n: usize,
    pub top_eigenvalue: f64,
    pub second_abs_eigenvalue: f64,
    /// Whether the deflated iteration for the second eigenvalue met its tolerance.
    pub second_converged: bool,
    /// `(1/n) sum psi_i^2 = 1`, `psi >= 0`.
    pub psi: Vec<f64>,
    /// `sqrt((1/n) sum r_i^2)` for `r = (1/n) K psi - top * psi`.
    pub residual: f64,
    pub iterations: usize,
}

impl SpectralSummary {
    /// JSON object `{n, top_eigenvalue, second_abs_eigenvalue, psi}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "top_eigenvalue": self.top_eigenvalue,
            "second_abs_eigenvalue": self.second_abs_eigenvalue,
            "psi": self.psi,
        })
    }
}

fn wnorm(v: &[f64]) -> f64 {
    (dot(v, v) / v.len() as f64).sqrt()
}

/// Perron eigenpair of `(1/n) K` for symmetric nonnegative `K`, plus the deflated second eigenvalue.
pub fn leading_eigenpair(k: &SymMatrix) -> Result<SpectralSummary> {
    let n = k.n();
    if n == 0 {
        return Err(SpectralError::Degenerate("empty matrix".into()));
    }
    if k.packed().iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(SpectralError::Input("matrix must be finite and entrywise nonnegative".into()));
    }
    if k.max_abs() == 0.0 {
        return Err(SpectralError::Degenerate("zero matrix".into()));
    }
    let scale = 1.0 / n as f64;
    let mut v = vec![1.0; n];
    let mut w = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=POWER_MAX_ITER {
        iterations = it;
        k.matvec_scaled(&v, scale, &mut w);
        let nw = wnorm(&w);
        if nw == 0.0 {
            return Err(SpectralError::Degenerate("iterate collapsed to zero".into()));
        }
        w.iter_mut().for_each(|x| *x /= nw);
        let diff = wnorm(&v.iter().zip(&w).map(|(a, b)| a - b).collect::<Vec<_>>());
        std::mem::swap(&mut v, &mut w);
        if diff < POWER_TOL {
            converged = true;
            break;
        }
    }
    k.matvec_scaled(&v, scale, &mut w);
    let theta = dot(&v, &w) / dot(&v, &v);
    let resid: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - theta * b).collect();
    let residual = wnorm(&resid);
    if !converged {
        return Err(SpectralError::Convergence { iterations, residual });
    }
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    let nv = wnorm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let (second, second_converged) = deflated_second(k, &v);
    Ok(SpectralSummary {
        n,
        top_eigenvalue: theta,
        second_abs_eigenvalue: second,
        second_converged,
        psi: v,
        residual,
        iterations,
    })
}

fn deflated_second(k: &SymMatrix, psi: &[f64]) -> (f64, bool) {
    let n = k.n();
    if n < 2 {
        return (0.0, true);
    }
    let scale = 1.0 / n as f64;
    let project = |x: &mut [f64]| {
        let c = dot(x, psi) / n as f64;
        for (xi, p) in x.iter_mut().zip(psi) {
            *xi -= c * p;
        }
    };
    // deterministic start with no special symmetry
    let mut v: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.618_033_988_75).fract() - 0.5).collect();
    project(&mut v);
    let nv = wnorm(&v);
    if nv == 0.0 {
        return (0.0, true);
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; n];
    let mut prev = f64::NAN;
    for _ in 0..SECOND_MAX_ITER {
        k.matvec_scaled(&v, scale, &mut w);
        project(&mut w);
        let r = wnorm(&w);
        if r == 0.0 {
            return (0.0, true);
        }
        w.iter_mut().for_each(|x| *x /= r);
        std::mem::swap(&mut v, &mut w);
        if (r - prev).abs() <= POWER_TOL * (1.0 + r) {
            return (r, true);
        }
        prev = r;
    }
    (prev, false)
}

/// Eigenpair of maximal absolute value for a general symmetric matrix (plain matrix action, no `1/n`).
#[derive(Clone, Debug, PartialEq)]
pub struct AbsEigen {
    /// Rayleigh quotient of the converged vector; carries the sign.
    pub value: f64,
    /// Operator 2-norm estimate `|A v|` for the unit vector `v`.
    pub norm: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Power iteration on `A^2`, which is insensitive to the sign of the dominant eigenvalue.
pub fn dominant_abs_eigen(a: &SymMatrix) -> Result<(f64, AbsEigen)> {
    let n = a.n();
    if n == 0 || a.max_abs() == 0.0 {
        return Err(SpectralError::Degenerate("zero matrix".into()));
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i as f64 + 1.0) * 0.618_033_988_75).fract()).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut t = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=POWER_MAX_ITER {
        iterations = it;
        a.matvec_scaled(&v, 1.0, &mut t);
        a.matvec_scaled(&t, 1.0, &mut w);
        let nw = norm2(&w);
        if nw == 0.0 {
            return Err(SpectralError::Degenerate("iterate collapsed to zero".into()));
        }
        w.iter_mut().for_each(|x| *x /= nw);
        let diff = v.iter().zip(&w).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        std::mem::swap(&mut v, &mut w);
        if diff < 1e-13 {
            converged = true;
            break;
        }
    }
    a.matvec_scaled(&v, 1.0, &mut t);
    let value = dot(&v, &t);
    let norm = norm2(&t);
    if !converged {
        let r: Vec<f64> = t.iter().zip(&v).map(|(x, y)| x - value * y).collect();
        return Err(SpectralError::Convergence { iterations, residual: norm2(&r) });
    }
    Ok((value, AbsEigen { value, norm, vector: v, iterations }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitConstants {
    pub alpha: f64,
    pub chi: f64,
    pub zeta: f64,
}

/// `alpha = 1/m1^2`, `chi = m3/m1^3`, `zeta = q/m1^2` with `q = (1/n^2) psi' H psi`.
pub fn limit_constants(summary: &SpectralSummary, h: Option<&SymMatrix>) -> Result<LimitConstants> {
    let psi = &summary.psi;
    let n = psi.len() as f64;
    let m1 = psi.iter().sum::<f64>() / n;
    let m3 = psi.iter().map(|p| p * p * p).sum::<f64>() / n;
    if m1 <= 0.0 {
        return Err(SpectralError::Degenerate("eigenfunction has zero mean".into()));
    }
    let q = match h {
        Some(h) => {
            if h.n() != psi.len() {
                return Err(SpectralError::Input("H dimension does not match psi".into()));
            }
            dot(psi, &h.matvec(psi)) / (n * n)
        }
        None => 0.0,
    };
    Ok(LimitConstants { alpha: 1.0 / (m1 * m1), chi: m3 / (m1 * m1 * m1), zeta: q / (m1 * m1) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Discretization {
    /// Nodes at `i/n`, `i = 1..n`.
    Grid,
    /// Nodes at `(i - 1/2)/n`.
    Midpoint,
}

/// `K_ij = kernel(x_i, x_j)` including the diagonal, values capped at `n^{2/3}`.
pub fn discretize_kernel(spec: &KernelSpec, n: usize, disc: Discretization) -> SymMatrix {
    let nf = n as f64;
    let cap = nf.powf(2.0 / 3.0);
    let x: Vec<f64> = (1..=n)
        .map(|i| match disc {
            Discretization::Grid => i as f64 / nf,
            Discretization::Midpoint => (i as f64 - 0.5) / nf,
        })
        .collect();
    SymMatrix::from_fn(n, |i, j| spec.eval_unchecked(x[i], x[j]).clamp(-cap, cap))
}

/// Stochastic block model data: `kappa`, `a` row-major `k x k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmInput {
    pub k: usize,
    pub kappa: Vec<f64>,
    pub mu: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl SbmInput {
    pub fn new(k: usize, kappa: Vec<f64>, mu: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let s = Self { k, kappa, mu, a, b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        let bad = |m: &str| Err(SpectralError::Input(m.to_string()));
        if k == 0 || self.kappa.len() != k * k || self.a.len() != k * k || self.mu.len() != k || self.b.len() != k {
            return bad("dimension mismatch in block model input");
        }
        for x in 0..k {
            for y in 0..k {
                let v = self.kappa[x * k + y];
                if !(v.is_finite() && v > 0.0) {
                    return bad("kappa must be entrywise positive");
                }
                if v != self.kappa[y * k + x] || self.a[x * k + y] != self.a[y * k + x] {
                    return bad("kappa and A must be symmetric");
                }
            }
        }
        if self.mu.iter().any(|m| !(*m > 0.0)) || (self.mu.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad("mu must be positive and sum to 1");
        }
        Ok(())
    }
}

pub const SBM_CRITICAL_TOL: f64 = 1e-8;

/// Right/left Perron vectors `u`, `v` of `M = kappa Diag(mu)` with `sum u = 1`, `v'u = 1`.
pub fn sbm_perron_vectors(input: &SbmInput) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    input.validate()?;
    let k = input.k;
    let sq: Vec<f64> = input.mu.iter().map(|m| m.sqrt()).collect();
    let s = nalgebra::DMatrix::from_fn(k, k, |x, y| sq[x] * input.kappa[x * k + y] * sq[y]);
    let eig = nalgebra::SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].partial_cmp(&eig.eigenvalues[x]).unwrap());
    let rho = eig.eigenvalues[order[0]];
    if k > 1 && (rho - eig.eigenvalues[order[1]]).abs() <= SBM_CRITICAL_TOL {
        return Err(SpectralError::Degenerate("Perron root is not simple".into()));
    }
    let mut w: Vec<f64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
    if w.iter().sum::<f64>() < 0.0 {
        w.iter_mut().for_each(|x| *x = -*x);
    }
    let mut u: Vec<f64> = (0..k).map(|x| w[x] / sq[x]).collect();
    let su: f64 = u.iter().sum();
    u.iter_mut().for_each(|x| *x /= su);
    let mut v: Vec<f64> = (0..k).map(|x| w[x] * sq[x]).collect();
    let vu = dot(&v, &u);
    v.iter_mut().for_each(|x| *x /= vu);
    Ok((rho, u, v))
}

pub fn sbm_constants(input: &SbmInput) -> Result<LimitConstants> {
    let (rho, u, v) = sbm_perron_vectors(input)?;
    if (rho - 1.0).abs() > SBM_CRITICAL_TOL {
        return Err(SpectralError::Criticality(rho));
    }
    let k = input.k;
    let v1: f64 = v.iter().sum();
    let mu_u = dot(&input.mu, &u);
    let alpha = 1.0 / (v1 * mu_u);
    let chi = (0..k).map(|x| v[x] * u[x] * u[x]).sum::<f64>() / (v1 * mu_u * mu_u);
    // (A D + kappa B) u
    let mut r = vec![0.0; k];
    for x in 0..k {
        for y in 0..k {
            r[x] += (input.a[x * k + y] * input.mu[y] + input.kappa[x * k + y] * input.b[y]) * u[y];
        }
    }
    Ok(LimitConstants { alpha, chi, zeta: alpha * dot(&v, &r) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventData {
    pub g: Vec<f64>,
    pub g2: Vec<f64>,
}

const SOLVE_TOL: f64 = 1e-10;
const LU_MAX_N: usize = 4000;

fn check_subcritical(k: &SymMatrix) -> Result<()> {
    if k.packed().iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(SpectralError::Input("kernel matrix must be finite and nonnegative".into()));
    }
    if k.max_abs() == 0.0 {
        return Ok(());
    }
    let s = leading_eigenpair(k)?;
    if s.top_eigenvalue >= 1.0 {
        return Err(SpectralError::Supercritical(s.top_eigenvalue));
    }
    Ok(())
}

/// Solves `(I - K/n) x = b`; CG first, dense LU if CG stalls and `n` is small enough.
fn resolve(k: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = k.n();
    let s = 1.0 / n as f64;
    let (x, _, ok) = cg_shifted(k, s, b, 1e-13, 10 * n + 100);
    let resid = |x: &[f64]| -> f64 {
        let mut t = vec![0.0; n];
        k.matvec_scaled(x, s, &mut t);
        let r: Vec<f64> = (0..n).map(|i| b[i] - (x[i] - t[i])).collect();
        wnorm(&r)
    };
    if ok && resid(&x) <= SOLVE_TOL {
        return Ok(x);
    }
    if n <= LU_MAX_N {
        let y = lu_shifted(k, s, b).ok_or_else(|| SpectralError::Solve("singular system".into()))?;
        let r = resid(&y);
        if r <= SOLVE_TOL {
            return Ok(y);
        }
        return Err(SpectralError::Solve(format!("residual {r:e} above tolerance")));
    }
    Err(SpectralError::Solve("conjugate gradients did not converge".into()))
}

/// `g = (I - T)^{-1} 1`: expected total progeny by root type.
pub fn resolvent_mean(k: &SymMatrix) -> Result<Vec<f64>> {
    check_subcritical(k)?;
    if k.max_abs() == 0.0 {
        return Ok(vec![1.0; k.n()]);
    }
    resolve(k, &vec![1.0; k.n()])
}

/// Second moment of total progeny:
/// `g2 = (I - T)^{-1} [ (T g)^2 + 2 g - 1 - (1/n^2) sum_j K_ij^2 g_j^2 ]`.
pub fn resolvent_second_moment(k: &SymMatrix, g: &[f64]) -> Result<Vec<f64>> {
    let n = k.n();
    if g.len() != n {
        return Err(SpectralError::Input("g has the wrong length".into()));
    }
    check_subcritical(k)?;
    let nf = n as f64;
    let tg = {
        let mut t = vec![0.0; n];
        k.matvec_scaled(g, 1.0 / nf, &mut t);
        t
    };
    let k2 = k.map(|v| v * v);
    let g_sq: Vec<f64> = g.iter().map(|x| x * x).collect();
    let corr = {
        let mut t = vec![0.0; n];
        k2.matvec_scaled(&g_sq, 1.0 / (nf * nf), &mut t);
        t
    };
    let rhs: Vec<f64> = (0..n).map(|i| tg[i] * tg[i] + 2.0 * g[i] - 1.0 - corr[i]).collect();
    if k.max_abs() == 0.0 {
        return Ok(rhs);
    }
    resolve(k, &rhs)
}

/// Expected weighted depth `sum_l l |G_l|` by root type: `(I - T)^{-1} (g - 1)`.
pub fn resolvent_weighted_depth(k: &SymMatrix, g: &[f64]) -> Result<Vec<f64>> {
    let n = k.n();
    if g.len() != n {
        return Err(SpectralError::Input("g has the wrong length".into()));
    }
    check_subcritical(k)?;
    let rhs: Vec<f64> = g.iter().map(|x| x - 1.0).collect();
    if k.max_abs() == 0.0 {
        return Ok(rhs);
    }
    resolve(k, &rhs)
}

pub fn resolvent(k: &SymMatrix) -> Result<ResolventData> {
    let g = resolvent_mean(k)?;
    let g2 = resolvent_second_moment(k, &g)?;
    Ok(ResolventData { g, g2 })
}
