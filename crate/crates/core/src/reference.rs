//! Parametric copula families used as centering models, data generators and
//! ground truth.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand::distr::Open01;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::normal::{bivariate_normal_cdf, std_normal_cdf, std_normal_quantile};

/// A symmetric positive-definite matrix with unit diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrMatrix(DMatrix<f64>);

impl CorrMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        if d < 2 || m.ncols() != d {
            return Err(Error::Domain(format!("correlation matrix must be square with d >= 2, got {}x{}", d, m.ncols())));
        }
        for i in 0..d {
            if (m[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("diagonal entry {i} is {}, expected 1", m[(i, i)])));
            }
            for j in 0..i {
                if !m[(i, j)].is_finite() || (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Domain(format!("entries ({i},{j}) and ({j},{i}) are not symmetric")));
                }
            }
        }
        let out = CorrMatrix(m);
        if out.min_eigenvalue() <= 0.0 {
            return Err(Error::Domain("correlation matrix is not positive definite".into()));
        }
        Ok(out)
    }

    /// Bivariate correlation matrix with off-diagonal `rho`.
    pub fn from_rho(rho: f64) -> Result<Self> {
        if !(rho.abs() < 1.0) {
            return Err(Error::Domain(format!("correlation {rho} outside (-1, 1)")));
        }
        CorrMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]))
    }

    pub fn identity(d: usize) -> Self {
        CorrMatrix(DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.clone().symmetric_eigen().eigenvalues.min()
    }

    pub fn is_identity(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.0[(i, j)] == 0.0))
    }

    /// Strict upper triangle, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * (d - 1) / 2);
        for i in 0..d {
            for j in i + 1..d {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Independence,
    Gaussian,
    Clayton,
    Gumbel,
    GaussMixture,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Independence => "independence",
            Family::Gaussian => "gaussian",
            Family::Clayton => "clayton",
            Family::Gumbel => "gumbel",
            Family::GaussMixture => "gauss-mixture",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "independence" => Ok(Family::Independence),
            "gaussian" => Ok(Family::Gaussian),
            "clayton" => Ok(Family::Clayton),
            "gumbel" => Ok(Family::Gumbel),
            "gauss-mixture" | "mixture" => Ok(Family::GaussMixture),
            other => Err(Error::Config(format!("unknown copula family '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceCopula {
    Independence { dims: usize },
    Gaussian { corr: CorrMatrix },
    /// Bivariate Clayton, `theta > 0`.
    Clayton { theta: f64 },
    /// Bivariate Gumbel, `theta >= 1`.
    Gumbel { theta: f64 },
    /// Copula of an equal-weight mixture of two bivariate normals with
    /// identity covariance.
    GaussMixture { means: [[f64; 2]; 2] },
}

impl ReferenceCopula {
    pub fn independence(dims: usize) -> Result<Self> {
        if dims < 2 {
            return Err(Error::Domain("independence copula needs d >= 2".into()));
        }
        Ok(ReferenceCopula::Independence { dims })
    }

    pub fn gaussian(corr: CorrMatrix) -> Self {
        ReferenceCopula::Gaussian { corr }
    }

    pub fn gaussian2(rho: f64) -> Result<Self> {
        Ok(ReferenceCopula::Gaussian { corr: CorrMatrix::from_rho(rho)? })
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Domain(format!("Clayton theta must be > 0, got {theta}")));
        }
        Ok(ReferenceCopula::Clayton { theta })
    }

    pub fn gumbel(theta: f64) -> Result<Self> {
        if !(theta >= 1.0 && theta.is_finite()) {
            return Err(Error::Domain(format!("Gumbel theta must be >= 1, got {theta}")));
        }
        Ok(ReferenceCopula::Gumbel { theta })
    }

    pub fn gauss_mixture(means: [[f64; 2]; 2]) -> Result<Self> {
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::Domain("mixture means must be finite".into()));
        }
        Ok(ReferenceCopula::GaussMixture { means })
    }

    /// Mixture with components centered at (1, 1) and (-1, -1).
    pub fn model3() -> Self {
        ReferenceCopula::GaussMixture { means: [[1.0, 1.0], [-1.0, -1.0]] }
    }

    /// Family member with the given Kendall's tau.
    pub fn from_tau(family: Family, tau: f64) -> Result<Self> {
        let p = tau_to_param(family, tau)?;
        match family {
            Family::Gaussian => ReferenceCopula::gaussian2(p),
            Family::Clayton => ReferenceCopula::clayton(p),
            Family::Gumbel => ReferenceCopula::gumbel(p),
            _ => unreachable!("tau_to_param rejects other families"),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ReferenceCopula::Independence { .. } => Family::Independence,
            ReferenceCopula::Gaussian { .. } => Family::Gaussian,
            ReferenceCopula::Clayton { .. } => Family::Clayton,
            ReferenceCopula::Gumbel { .. } => Family::Gumbel,
            ReferenceCopula::GaussMixture { .. } => Family::GaussMixture,
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            ReferenceCopula::Independence { dims } => *dims,
            ReferenceCopula::Gaussian { corr } => corr.dim(),
            _ => 2,
        }
    }

    /// Archimedean generator φ(t); `None` for non-Archimedean families.
    pub fn generator(&self, t: f64) -> Option<f64> {
        match self {
            ReferenceCopula::Clayton { theta } => Some((t.powf(-theta) - 1.0) / theta),
            ReferenceCopula::Gumbel { theta } => Some((-t.ln()).powf(*theta)),
            _ => None,
        }
    }

    pub fn generator_inverse(&self, s: f64) -> Option<f64> {
        match self {
            ReferenceCopula::Clayton { theta } => Some((1.0 + theta * s).powf(-1.0 / theta)),
            ReferenceCopula::Gumbel { theta } => Some((-s.powf(1.0 / theta)).exp()),
            _ => None,
        }
    }

    /// Copula CDF at `u`.
    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), got: u.len() });
        }
        if let Some(x) = u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Domain(format!("coordinate {x} outside [0, 1]")));
        }
        if u.contains(&0.0) {
            return Ok(0.0);
        }
        match self {
            ReferenceCopula::Independence { .. } => Ok(u.iter().product()),
            ReferenceCopula::Gaussian { corr } => {
                if corr.is_identity() {
                    return Ok(u.iter().product());
                }
                if corr.dim() != 2 {
                    return Err(Error::Unsupported("Gaussian copula CDF is only available for d = 2".into()));
                }
                gaussian2_latent_cdf(std_normal_quantile(u[0]), std_normal_quantile(u[1]), corr.get(0, 1))
            }
            ReferenceCopula::Clayton { theta } => Ok(clayton_cdf(u[0], u[1], *theta)),
            ReferenceCopula::Gumbel { theta } => Ok(gumbel_cdf(u[0], u[1], *theta)),
            ReferenceCopula::GaussMixture { means } => {
                let x = mixture_marginal_quantile(u[0], means[0][0], means[1][0]);
                let y = mixture_marginal_quantile(u[1], means[0][1], means[1][1]);
                Ok(mixture_latent_cdf(x, y, means))
            }
        }
    }

    /// CDF at every grid node, nodes per dimension being `0` followed by the
    /// cuts. Row-major with the first dimension slowest; `Π (m_i + 1)` values.
    pub fn node_cdf_table(&self, grid: &Grid) -> Result<Vec<f64>> {
        let d = grid.dims();
        if d != self.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), got: d });
        }
        let nodes: Vec<Vec<f64>> =
            (0..d).map(|i| std::iter::once(0.0).chain(grid.cuts(i).iter().copied()).collect()).collect();
        match self {
            ReferenceCopula::Gaussian { corr } if d == 2 && !corr.is_identity() => {
                let rho = corr.get(0, 1);
                let qx: Vec<f64> = nodes[0].iter().map(|&u| std_normal_quantile(u)).collect();
                let qy: Vec<f64> = nodes[1].iter().map(|&u| std_normal_quantile(u)).collect();
                let mut out = Vec::with_capacity(qx.len() * qy.len());
                for &x in &qx {
                    for &y in &qy {
                        out.push(gaussian2_latent_cdf(x, y, rho)?);
                    }
                }
                Ok(out)
            }
            ReferenceCopula::GaussMixture { means } => {
                let qx: Vec<f64> =
                    nodes[0].iter().map(|&u| mixture_marginal_quantile(u, means[0][0], means[1][0])).collect();
                let qy: Vec<f64> =
                    nodes[1].iter().map(|&u| mixture_marginal_quantile(u, means[0][1], means[1][1])).collect();
                let mut out = Vec::with_capacity(qx.len() * qy.len());
                for &x in &qx {
                    for &y in &qy {
                        out.push(mixture_latent_cdf(x, y, means));
                    }
                }
                Ok(out)
            }
            _ => {
                let dims: Vec<usize> = nodes.iter().map(Vec::len).collect();
                let total: usize = dims.iter().product();
                let mut out = Vec::with_capacity(total);
                let mut idx = vec![0usize; d];
                let mut u = vec![0.0; d];
                for _ in 0..total {
                    for i in 0..d {
                        u[i] = nodes[i][idx[i]];
                    }
                    out.push(self.cdf(&u)?);
                    for i in (0..d).rev() {
                        idx[i] += 1;
                        if idx[i] < dims[i] {
                            break;
                        }
                        idx[i] = 0;
                    }
                }
                Ok(out)
            }
        }
    }

    /// `n` i.i.d. draws, each a point of `[0, 1]^d`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(n);
        match self {
            ReferenceCopula::Independence { dims } => {
                for _ in 0..n {
                    out.push((0..*dims).map(|_| rng.sample(Open01)).collect());
                }
            }
            ReferenceCopula::Gaussian { corr } => {
                let chol = corr
                    .matrix()
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("Cholesky factorization failed".into()))?;
                let l = chol.l();
                let d = corr.dim();
                let mut z = vec![0.0; d];
                for _ in 0..n {
                    for zi in z.iter_mut() {
                        *zi = StandardNormal.sample(rng);
                    }
                    let u = (0..d)
                        .map(|i| std_normal_cdf((0..=i).map(|j| l[(i, j)] * z[j]).sum()))
                        .collect();
                    out.push(u);
                }
            }
            ReferenceCopula::Clayton { theta } => {
                for _ in 0..n {
                    let u: f64 = rng.sample(Open01);
                    let w: f64 = rng.sample(Open01);
                    let v = ((w.powf(-theta / (1.0 + theta)) - 1.0) * u.powf(-theta) + 1.0).powf(-1.0 / theta);
                    out.push(vec![u, v]);
                }
            }
            ReferenceCopula::Gumbel { theta } => {
                for _ in 0..n {
                    let u: f64 = rng.sample(Open01);
                    let w: f64 = rng.sample(Open01);
                    out.push(vec![u, gumbel_conditional_inverse(u, w, *theta)]);
                }
            }
            ReferenceCopula::GaussMixture { means } => {
                for _ in 0..n {
                    let c = usize::from(rng.random::<bool>());
                    let zx: f64 = StandardNormal.sample(rng);
                    let zy: f64 = StandardNormal.sample(rng);
                    let (x, y) = (means[c][0] + zx, means[c][1] + zy);
                    out.push(vec![
                        mixture_marginal_cdf(x, means[0][0], means[1][0]),
                        mixture_marginal_cdf(y, means[0][1], means[1][1]),
                    ]);
                }
            }
        }
        Ok(out)
    }
}

/// Family parameter reproducing Kendall's tau.
///
/// Clayton `θ = 2τ/(1−τ)`, Gumbel `θ = 1/(1−τ)`, Gaussian `ρ = sin(πτ/2)`.
pub fn tau_to_param(family: Family, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("Kendall's tau {tau} outside (0, 1)")));
    }
    match family {
        Family::Clayton => Ok(2.0 * tau / (1.0 - tau)),
        Family::Gumbel => Ok(1.0 / (1.0 - tau)),
        Family::Gaussian => Ok((PI * tau / 2.0).sin()),
        other => Err(Error::Unsupported(format!("no tau parameterization for the {other} family"))),
    }
}

fn gaussian2_latent_cdf(x: f64, y: f64, rho: f64) -> Result<f64> {
    bivariate_normal_cdf(x, y, rho)
}

fn clayton_cdf(u: f64, v: f64, theta: f64) -> f64 {
    (u.powf(-theta) + v.powf(-theta) - 1.0).max(0.0).powf(-1.0 / theta)
}

fn gumbel_cdf(u: f64, v: f64, theta: f64) -> f64 {
    (-((-u.ln()).powf(theta) + (-v.ln()).powf(theta)).powf(1.0 / theta)).exp()
}

/// Solves `∂C/∂u (u, v) = w` for `v` under the Gumbel copula.
///
/// With `x = -ln u` and `A = (x^θ + y^θ)^{1/θ}` the conditional CDF equals
/// `exp(x − A) (x/A)^{θ−1}`, strictly decreasing in `A ∈ [x, x − ln w]`.
fn gumbel_conditional_inverse(u: f64, w: f64, theta: f64) -> f64 {
    let x = -u.ln();
    let target = w.ln();
    let g = |a: f64| (x - a) + (theta - 1.0) * (x.ln() - a.ln());
    let (mut lo, mut hi) = (x, x - target);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let a = 0.5 * (lo + hi);
    let y = (a.powf(theta) - x.powf(theta)).max(0.0).powf(1.0 / theta);
    (-y).exp()
}

pub fn mixture_marginal_cdf(x: f64, m1: f64, m2: f64) -> f64 {
    0.5 * std_normal_cdf(x - m1) + 0.5 * std_normal_cdf(x - m2)
}

/// Inverse of [`mixture_marginal_cdf`] by bisection to an absolute bracket of 1e-12.
pub fn mixture_marginal_quantile(u: f64, m1: f64, m2: f64) -> f64 {
    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    let z = std_normal_quantile(u);
    let (mut lo, mut hi) = (z + m1.min(m2), z + m1.max(m2));
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mixture_marginal_cdf(mid, m1, m2) < u {
            lo = mid;
        } else {
            hi = mid;
        }
        if mid == lo && mid == hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn mixture_latent_cdf(x: f64, y: f64, means: &[[f64; 2]; 2]) -> f64 {
    means.iter().map(|m| 0.5 * std_normal_cdf(x - m[0]) * std_normal_cdf(y - m[1])).sum()
}
