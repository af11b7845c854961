//! Data, marginal models, pseudo-observations, cell counts and the
//! grid-copula log-likelihood.

use crate::copula::GridCopula;
use crate::error::{Error, Result};
use crate::exchange::ExchangeProposal;
use crate::grid::{CellIndex, Grid};
use crate::normal::{normal_log_pdf, std_normal_cdf, std_normal_pdf};
use crate::reference::mixture_marginal_cdf;

/// `n` observations of `d` variables, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dims: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(dims: usize, values: Vec<f64>) -> Result<Self> {
        if dims == 0 || !values.len().is_multiple_of(dims) {
            return Err(Error::Data(format!("{} values do not form rows of width {dims}", values.len())));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!("row {}: non-finite value in column {}", i / dims + 1, i % dims + 1)));
        }
        Ok(Dataset { dims, values })
    }

    pub fn from_rows(dims: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if let Some(i) = rows.iter().position(|r| r.len() != dims) {
            return Err(Error::Data(format!("row {} has {} columns, expected {dims}", i + 1, rows[i].len())));
        }
        Dataset::new(dims, rows.iter().flatten().copied().collect())
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(j).step_by(self.dims).copied()
    }
}

/// A fixed univariate distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum KnownMarginal {
    /// Uniform on `(0, 1)`.
    Uniform,
    Normal { mean: f64, sd: f64 },
    /// Equal-weight mixture of `N(m1, 1)` and `N(m2, 1)`.
    NormalMixture { m1: f64, m2: f64 },
    /// Piecewise-linear CDF through `(x_k, p_k)`, both strictly increasing,
    /// `p` running from 0 to 1.
    QuantileTable { x: Vec<f64>, p: Vec<f64> },
}

impl KnownMarginal {
    pub fn quantile_table(x: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if x.len() != p.len() || x.len() < 2 {
            return Err(Error::Domain("quantile table needs at least two (x, p) pairs of equal length".into()));
        }
        if x.windows(2).any(|w| !(w[0] < w[1])) || p.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("quantile table must be strictly increasing".into()));
        }
        if p[0] != 0.0 || p[p.len() - 1] != 1.0 || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("quantile table probabilities must run from 0 to 1".into()));
        }
        Ok(KnownMarginal::QuantileTable { x, p })
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            KnownMarginal::Uniform => y.clamp(0.0, 1.0),
            KnownMarginal::Normal { mean, sd } => std_normal_cdf((y - mean) / sd),
            KnownMarginal::NormalMixture { m1, m2 } => mixture_marginal_cdf(y, *m1, *m2),
            KnownMarginal::QuantileTable { x, p } => {
                if y <= x[0] {
                    return 0.0;
                }
                if y >= x[x.len() - 1] {
                    return 1.0;
                }
                let k = x.partition_point(|&v| v <= y);
                let t = (y - x[k - 1]) / (x[k] - x[k - 1]);
                p[k - 1] + t * (p[k] - p[k - 1])
            }
        }
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        match self {
            KnownMarginal::Uniform => {
                if (0.0..=1.0).contains(&y) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            KnownMarginal::Normal { mean, sd } => normal_log_pdf(y, *mean, *sd),
            KnownMarginal::NormalMixture { m1, m2 } => (0.5 * std_normal_pdf(y - m1) + 0.5 * std_normal_pdf(y - m2)).ln(),
            KnownMarginal::QuantileTable { x, p } => {
                if y < x[0] || y > x[x.len() - 1] {
                    return f64::NEG_INFINITY;
                }
                let k = x.partition_point(|&v| v < y).clamp(1, x.len() - 1);
                ((p[k] - p[k - 1]) / (x[k] - x[k - 1])).ln()
            }
        }
    }

    /// Inverse CDF; used to push copula samples to the data scale.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            KnownMarginal::Uniform => u,
            KnownMarginal::Normal { mean, sd } => mean + sd * crate::normal::std_normal_quantile(u),
            KnownMarginal::NormalMixture { m1, m2 } => crate::reference::mixture_marginal_quantile(u, *m1, *m2),
            KnownMarginal::QuantileTable { x, p } => {
                let k = p.partition_point(|&v| v <= u).clamp(1, p.len() - 1);
                let t = (u - p[k - 1]) / (p[k] - p[k - 1]);
                x[k - 1] + t * (x[k] - x[k - 1])
            }
        }
    }
}

/// Independent normal priors on the mean and on the log standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaussianParamPrior {
    pub mean_mu: f64,
    pub mean_sd: f64,
    pub log_sd_mu: f64,
    pub log_sd_sd: f64,
}

impl Default for GaussianParamPrior {
    fn default() -> Self {
        GaussianParamPrior { mean_mu: 0.0, mean_sd: 10.0, log_sd_mu: 0.0, log_sd_sd: 2.0 }
    }
}

impl GaussianParamPrior {
    /// Log density over the unconstrained parameters `(mean, log sd)`.
    pub fn log_density(&self, theta: [f64; 2]) -> f64 {
        normal_log_pdf(theta[0], self.mean_mu, self.mean_sd) + normal_log_pdf(theta[1], self.log_sd_mu, self.log_sd_sd)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MarginalModel {
    Known(KnownMarginal),
    /// Normal marginal with unknown mean and standard deviation, stored as
    /// `(mean, log sd)`.
    Gaussian { theta: [f64; 2], prior: GaussianParamPrior },
}

impl MarginalModel {
    pub fn is_parametric(&self) -> bool {
        matches!(self, MarginalModel::Gaussian { .. })
    }

    pub fn params(&self) -> Option<[f64; 2]> {
        match self {
            MarginalModel::Gaussian { theta, .. } => Some(*theta),
            MarginalModel::Known(_) => None,
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            MarginalModel::Known(k) => k.cdf(y),
            MarginalModel::Gaussian { theta, .. } => std_normal_cdf((y - theta[0]) / theta[1].exp()),
        }
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        match self {
            MarginalModel::Known(k) => k.log_pdf(y),
            MarginalModel::Gaussian { theta, .. } => normal_log_pdf(y, theta[0], theta[1].exp()),
        }
    }

    pub fn log_prior(&self) -> f64 {
        match self {
            MarginalModel::Known(_) => 0.0,
            MarginalModel::Gaussian { theta, prior } => prior.log_density(*theta),
        }
    }

    pub fn with_params(&self, theta: [f64; 2]) -> MarginalModel {
        match self {
            MarginalModel::Gaussian { prior, .. } => MarginalModel::Gaussian { theta, prior: *prior },
            MarginalModel::Known(_) => self.clone(),
        }
    }
}

fn checked_cdf(m: &MarginalModel, y: f64, row: usize, col: usize) -> Result<f64> {
    let u = m.cdf(y);
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("row {row}, column {col}: marginal CDF gave {u}")));
    }
    Ok(u)
}

/// `u_ij = F_j(y_ij)`, row-major like the data.
pub fn pseudo_observations(data: &Dataset, margs: &[MarginalModel]) -> Result<Vec<f64>> {
    if margs.len() != data.dims() {
        return Err(Error::DimensionMismatch { expected: data.dims(), got: margs.len() });
    }
    let d = data.dims();
    data.values()
        .iter()
        .enumerate()
        .map(|(i, &y)| checked_cdf(&margs[i % d], y, i / d + 1, i % d + 1))
        .collect()
}

/// Pseudo-observations of one column.
pub fn pseudo_observations_column(data: &Dataset, marg: &MarginalModel, col: usize) -> Result<Vec<f64>> {
    data.column(col).enumerate().map(|(i, y)| checked_cdf(marg, y, i + 1, col + 1)).collect()
}

/// Σ_ij log f_j(y_ij).
pub fn marginal_log_likelihood(data: &Dataset, margs: &[MarginalModel]) -> f64 {
    let d = data.dims();
    data.values().iter().enumerate().map(|(i, &y)| margs[i % d].log_pdf(y)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellCounts {
    grid: Grid,
    counts: Vec<u64>,
    total: u64,
}

impl CellCounts {
    pub fn zeros(grid: &Grid) -> Self {
        CellCounts { grid: grid.clone(), counts: vec![0; grid.n_cells()], total: 0 }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, c: &CellIndex) -> Result<u64> {
        Ok(self.counts[self.grid.flat(c)?])
    }
}

/// Counts the pseudo-observations (row-major, `grid.dims()` per row) per cell.
pub fn cell_counts(u: &[f64], grid: &Grid) -> Result<CellCounts> {
    let d = grid.dims();
    if !u.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch { expected: d, got: u.len() % d });
    }
    let mut out = CellCounts::zeros(grid);
    for row in u.chunks_exact(d) {
        out.counts[grid.locate_flat(row)?] += 1;
        out.total += 1;
    }
    Ok(out)
}

/// Flat cell of every pseudo-observation row.
pub fn cell_assignments(u: &[f64], grid: &Grid) -> Result<Vec<usize>> {
    u.chunks_exact(grid.dims()).map(|row| grid.locate_flat(row)).collect()
}

/// Σ_B n_B log(m_B / λ_B); −∞ if an occupied cell has no mass.
pub fn copula_log_likelihood(c: &GridCopula, counts: &CellCounts) -> Result<f64> {
    if c.grid() != counts.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(log_likelihood_raw(c.mass(), &c.grid().volumes(), &counts.counts))
}

pub(crate) fn log_likelihood_raw(mass: &[f64], volumes: &[f64], counts: &[u64]) -> f64 {
    let mut s = 0.0;
    for ((&m, &v), &n) in mass.iter().zip(volumes).zip(counts) {
        if n > 0 {
            if m <= 0.0 {
                return f64::NEG_INFINITY;
            }
            s += n as f64 * (m / v).ln();
        }
    }
    s
}

/// Change of the log-likelihood caused by `p`; only the four moved cells
/// contribute and the volumes cancel.
pub fn delta_log_likelihood(counts: &CellCounts, c: &GridCopula, p: &ExchangeProposal) -> Result<f64> {
    if c.grid() != counts.grid() {
        return Err(Error::GridMismatch);
    }
    let (lo, hi) = crate::exchange::epsilon_interval(c, &p.site)?;
    if !(p.epsilon >= lo && p.epsilon <= hi) {
        return Err(Error::EpsilonOutOfRange { epsilon: p.epsilon, lo, hi });
    }
    Ok(delta_raw(&counts.counts, c.mass(), p))
}

#[inline]
pub(crate) fn delta_raw(counts: &[u64], mass: &[f64], p: &ExchangeProposal) -> f64 {
    if p.epsilon == 0.0 {
        return 0.0;
    }
    let cells = p.site.cells();
    let e = p.epsilon;
    let delta = [-e, e, e, -e];
    let mut s = 0.0;
    for t in 0..4 {
        let n = counts[cells[t]];
        if n > 0 {
            let m = mass[cells[t]];
            let after = m + delta[t];
            if after <= 0.0 {
                return f64::NEG_INFINITY;
            }
            s += n as f64 * (after / m).ln();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::{apply_exchange, apply_in_place, random_exchange, ExchangeSite, SiteSampler};
    use crate::reference::ReferenceCopula;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn checkerboard() -> GridCopula {
        GridCopula::new(Grid::uniform(2, 2).unwrap(), vec![0.5, 0.0, 0.0, 0.5]).unwrap()
    }

    #[test]
    fn pseudo_observation_examples() {
        let std = MarginalModel::Known(KnownMarginal::Normal { mean: 0.0, sd: 1.0 });
        let data = Dataset::new(2, vec![0.0, 0.0]).unwrap();
        assert_eq!(pseudo_observations(&data, &[std.clone(), std.clone()]).unwrap(), vec![0.5, 0.5]);
        let uni = MarginalModel::Known(KnownMarginal::Uniform);
        let data = Dataset::new(2, vec![0.1, 0.9, 0.33, 0.0]).unwrap();
        assert_eq!(pseudo_observations(&data, &[uni.clone(), uni.clone()]).unwrap(), data.values());
        let mix = MarginalModel::Known(KnownMarginal::NormalMixture { m1: 1.0, m2: -1.0 });
        let data = Dataset::new(2, vec![0.0, 0.0]).unwrap();
        let u = pseudo_observations(&data, &[mix.clone(), mix]).unwrap();
        assert!((u[0] - 0.5).abs() < 1e-15);
        assert!(pseudo_observations(&data, &[std]).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(2, vec![1.0, 2.0, 3.0]).is_err());
        let e = Dataset::new(2, vec![1.0, f64::NAN]).unwrap_err();
        assert!(e.to_string().contains("row 1"));
        let d = Dataset::from_rows(2, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.column(1).collect::<Vec<_>>(), vec![2.0, 4.0]);
        assert!(Dataset::new(3, vec![]).unwrap().is_empty());
    }

    #[test]
    fn quantile_table_marginal() {
        let m = KnownMarginal::quantile_table(vec![-1.0, 0.0, 2.0], vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(m.cdf(-2.0), 0.0);
        assert_eq!(m.cdf(0.0), 0.5);
        assert_eq!(m.cdf(1.0), 0.75);
        assert_eq!(m.cdf(5.0), 1.0);
        assert!((m.log_pdf(1.0) - 0.25f64.ln()).abs() < 1e-15);
        assert_eq!(m.quantile(0.75), 1.0);
        assert!(KnownMarginal::quantile_table(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
        assert!(KnownMarginal::quantile_table(vec![0.0, 1.0], vec![0.1, 1.0]).is_err());
    }

    #[test]
    fn gaussian_marginal_roundtrip() {
        let m = KnownMarginal::Normal { mean: 2.0, sd: 3.0 };
        for u in [0.01, 0.3, 0.5, 0.9] {
            assert!((m.cdf(m.quantile(u)) - u).abs() < 1e-14);
        }
        let p = MarginalModel::Gaussian { theta: [2.0, 3f64.ln()], prior: GaussianParamPrior::default() };
        assert!((p.cdf(5.0) - m.cdf(5.0)).abs() < 1e-15);
        assert!((p.log_pdf(0.7) - m.log_pdf(0.7)).abs() < 1e-14);
    }

    #[test]
    fn count_examples() {
        let g = Grid::uniform(2, 3).unwrap();
        let u = vec![0.1, 0.1, 0.2, 0.05, 0.3, 0.3, 0.0, 0.0];
        let c = cell_counts(&u, &g).unwrap();
        assert_eq!(c.get(&CellIndex::new(vec![0, 0])).unwrap(), 4);
        assert_eq!(c.counts().iter().sum::<u64>(), 4);
        assert_eq!(cell_counts(&[], &g).unwrap().counts(), &[0u64; 9]);
        assert!(cell_counts(&[0.5, 1.2], &g).is_err());

        let g = Grid::uniform(2, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
        let c = cell_counts(&u, &g).unwrap();
        assert_eq!(c.total(), 10_000);
        let sigma = (10_000f64 * 0.01 * 0.99).sqrt();
        assert!(c.counts().iter().all(|&n| (n as f64 - 100.0).abs() < 5.0 * sigma));
    }

    #[test]
    fn likelihood_examples() {
        let g = Grid::uniform(2, 2).unwrap();
        let counts = cell_counts(&[0.1, 0.1, 0.2, 0.3, 0.7, 0.8, 0.9, 0.6], &g).unwrap();
        let ind = GridCopula::independence(g.clone());
        assert_eq!(copula_log_likelihood(&ind, &counts).unwrap(), 0.0);
        let ll = copula_log_likelihood(&checkerboard(), &counts).unwrap();
        assert!((ll - 4.0 * 2f64.ln()).abs() < 1e-15);
        assert!((ll - 2.772589).abs() < 1e-6);
        let off = cell_counts(&[0.1, 0.9], &g).unwrap();
        assert_eq!(copula_log_likelihood(&checkerboard(), &off).unwrap(), f64::NEG_INFINITY);
        let other = cell_counts(&[], &Grid::uniform(2, 3).unwrap()).unwrap();
        assert_eq!(copula_log_likelihood(&ind, &other), Err(Error::GridMismatch));
    }

    #[test]
    fn delta_examples() {
        let g = Grid::uniform(2, 2).unwrap();
        let counts = cell_counts(&[0.1, 0.1, 0.2, 0.3, 0.7, 0.8, 0.9, 0.6], &g).unwrap();
        let cb = checkerboard();
        let site = ExchangeSite::new(&g, 0, 1, &CellIndex::new(vec![0, 0]), (0, 1), (0, 1)).unwrap();
        let zero = ExchangeProposal { site, epsilon: 0.0 };
        assert_eq!(delta_log_likelihood(&counts, &cb, &zero).unwrap(), 0.0);
        for e in [1e-6, 0.1, 0.3, 0.5] {
            let p = ExchangeProposal { site, epsilon: e };
            assert!(delta_log_likelihood(&counts, &cb, &p).unwrap() < 0.0);
        }
        let p = ExchangeProposal { site, epsilon: 0.5 };
        assert_eq!(delta_log_likelihood(&counts, &cb, &p).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn delta_matches_full_difference() {
        let g = Grid::uniform(2, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pts = ReferenceCopula::gaussian2(0.5).unwrap().sample(500, &mut rng).unwrap();
        let u: Vec<f64> = pts.into_iter().flatten().collect();
        let counts = cell_counts(&u, &g).unwrap();
        let sampler = SiteSampler::new(&g).unwrap();
        let mut c = GridCopula::independence(g.clone());
        let vols = g.volumes();
        let mut m = c.mass().to_vec();
        for _ in 0..10_000 {
            let p = sampler.propose(&m, &mut rng);
            let before = log_likelihood_raw(&m, &vols, counts.counts());
            let d = delta_raw(counts.counts(), &m, &p);
            let mut next = m.clone();
            apply_in_place(&mut next, &p);
            let after = log_likelihood_raw(&next, &vols, counts.counts());
            if after.is_finite() {
                assert!((after - before - d).abs() < 1e-10);
                m = next;
            } else {
                assert_eq!(d, f64::NEG_INFINITY);
            }
        }
        c = GridCopula::new(g, m).unwrap();
        let p = random_exchange(&c, &mut rng).unwrap();
        let full = copula_log_likelihood(&apply_exchange(&c, &p).unwrap(), &counts).unwrap()
            - copula_log_likelihood(&c, &counts).unwrap();
        let local = delta_log_likelihood(&counts, &c, &p).unwrap();
        assert!(full == local || (full - local).abs() < 1e-10);
    }

    #[test]
    fn likelihood_invariant_under_division() {
        let g = Grid::uniform(2, 4).unwrap();
        let c = GridCopula::project(&ReferenceCopula::clayton(2.0).unwrap(), &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        // points strictly inside the original cells, away from the new cut
        let u: Vec<f64> = (0..400).map(|_| 0.01 + 0.98 * rng.random::<f64>()).collect();
        let fine = c.grid_division(0, 0.6).unwrap();
        let a = copula_log_likelihood(&c, &cell_counts(&u, &g).unwrap()).unwrap();
        let b = copula_log_likelihood(&fine, &cell_counts(&u, fine.grid()).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-10);
    }
}
