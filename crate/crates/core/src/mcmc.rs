//! Metropolis-within-Gibbs sampler: rectangle exchanges for the copula,
//! hit-and-run for the centering correlation, adaptive random walk for
//! parametric marginals.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use statrs::statistics::{Data, OrderStatistics};

use crate::copula::{GridCopula, TRANSFORM_TOL};
use crate::error::{Error, Result};
use crate::exchange::SiteSampler;
use crate::grid::Grid;
use crate::likelihood::{
    cell_assignments, delta_raw, log_likelihood_raw, marginal_log_likelihood, pseudo_observations,
    pseudo_observations_column, Dataset, MarginalModel,
};
use crate::measures::{kendall_tau, spearman_rho, RefinedTarget};
use crate::normal::{std_normal_cdf, std_normal_quantile};
use crate::priors::{Centering, Prior, PriorSpec};
use crate::reference::{CorrMatrix, ReferenceCopula};

/// Acceptance rate the marginal random walk adapts towards during burn-in.
const MARGINAL_TARGET_ACCEPT: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    /// Scale of the truncated normal step of the correlation update.
    pub hit_and_run_r: f64,
    /// Initial random-walk scale on `(mean, log sd)` of parametric marginals.
    pub marginal_step_scale: f64,
    /// Record the Hellinger distance to this copula at every kept sample.
    pub record_hellinger_to: Option<ReferenceCopula>,
    /// Per-axis refinement used to represent `record_hellinger_to`.
    pub reference_refinement: usize,
    /// Keep every sampled mass vector (otherwise only their running sum).
    pub record_masses: bool,
    /// Exchange proposals per iteration; defaults to the number of cells.
    pub proposals_per_iteration: Option<usize>,
    /// Recompute all caches at every kept sample and fail on drift.
    pub verify_caches: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 1000,
            burn_in: 100,
            thinning: 1,
            seed: 0,
            hit_and_run_r: 0.5,
            marginal_step_scale: 0.1,
            record_hellinger_to: None,
            reference_refinement: 4,
            record_masses: true,
            proposals_per_iteration: None,
            verify_caches: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!("burn_in ({}) must be below iterations ({})", self.burn_in, self.iterations)));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if !(self.hit_and_run_r > 0.0 && self.hit_and_run_r.is_finite()) {
            return Err(Error::Config(format!("hit_and_run_r must be positive, got {}", self.hit_and_run_r)));
        }
        if !(self.marginal_step_scale > 0.0 && self.marginal_step_scale.is_finite()) {
            return Err(Error::Config("marginal_step_scale must be positive".into()));
        }
        if self.reference_refinement == 0 {
            return Err(Error::Config("reference_refinement must be at least 1".into()));
        }
        if self.proposals_per_iteration == Some(0) {
            return Err(Error::Config("proposals_per_iteration must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MoveStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Acceptance {
    pub copula: MoveStats,
    pub correlation: MoveStats,
    pub marginal: MoveStats,
}

/// Current state and the caches derived from it.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub mass: Vec<f64>,
    pub corr: Option<CorrMatrix>,
    pub marginals: Vec<MarginalModel>,
    /// Centering copula projected onto the grid.
    pub center: Vec<f64>,
    pub counts: Vec<u64>,
    /// Cell of every observation.
    pub cells: Vec<usize>,
    /// Copula part of the log-likelihood.
    pub log_lik: f64,
    pub log_prior: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub grid: Grid,
    pub n_samples: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub proposals_per_iteration: usize,
    /// Kept mass vectors, concatenated; empty unless `record_masses`.
    pub masses: Vec<f64>,
    pub mass_sum: Vec<f64>,
    /// Off-diagonal correlation (upper triangle) per kept sample, hierarchical runs only.
    pub corr: Vec<Vec<f64>>,
    /// `(mean, log sd)` per parametric marginal per kept sample.
    pub marginal_params: Vec<Vec<[f64; 2]>>,
    pub hellinger: Vec<f64>,
    pub tau: Vec<f64>,
    pub spearman: Vec<f64>,
    pub acceptance: Acceptance,
}

impl ChainOutput {
    pub fn sample(&self, i: usize) -> Option<&[f64]> {
        let n = self.grid.n_cells();
        self.masses.get(i * n..(i + 1) * n)
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.masses.chunks_exact(self.grid.n_cells())
    }

    pub fn total_proposals(&self) -> u64 {
        self.acceptance.copula.proposed
    }
}

/// Cell-wise average of the kept mass vectors.
pub fn posterior_mean(out: &ChainOutput) -> Result<GridCopula> {
    if out.n_samples == 0 {
        return Err(Error::EmptyChain);
    }
    let mean: Vec<f64> = out.mass_sum.iter().map(|s| s / out.n_samples as f64).collect();
    let c = GridCopula::from_parts(out.grid.clone(), mean);
    c.validate(TRANSFORM_TOL)?;
    Ok(c)
}

/// Per-cell posterior mean and equal-tail interval of the density, from the
/// kept mass vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityBand {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn density_bands(out: &ChainOutput, level: f64) -> Result<Vec<DensityBand>> {
    if out.n_samples == 0 {
        return Err(Error::EmptyChain);
    }
    if out.masses.len() != out.n_samples * out.grid.n_cells() {
        return Err(Error::Unsupported("density bands need the kept mass vectors (record_masses)".into()));
    }
    let n = out.grid.n_cells();
    let a = (1.0 - level) / 2.0;
    Ok(out
        .grid
        .volumes()
        .iter()
        .enumerate()
        .map(|(cell, v)| {
            let xs: Vec<f64> = out.masses.iter().skip(cell).step_by(n).map(|m| m / v).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let mut d = Data::new(xs);
            DensityBand { mean, lo: d.quantile(a), hi: d.quantile(1.0 - a) }
        })
        .collect())
}

/// Hit-and-run proposal for a correlation matrix.
#[derive(Clone, Debug)]
pub struct CorrelationProposal {
    pub proposed: CorrMatrix,
    pub delta: f64,
    /// Unit direction over the strict upper triangle.
    pub direction: Vec<f64>,
    /// Half-width of the truncation interval at the current matrix.
    pub bound: f64,
}

/// Truncation half-width `ξ/√2` for a matrix with least eigenvalue `ξ`.
pub fn hit_and_run_bound(r: &CorrMatrix) -> f64 {
    r.min_eigenvalue() / std::f64::consts::SQRT_2
}

/// `R + H` with `H = δ z/‖z‖` on the off-diagonal, `δ ~ N(0, scale²)`
/// truncated to `(−ξ/√2, ξ/√2)`. Since `‖H‖₂ ≤ ‖H‖_F = √2|δ| < ξ` the
/// proposal is always positive definite.
pub fn propose_correlation<R: Rng + ?Sized>(r: &CorrMatrix, scale: f64, rng: &mut R) -> Result<CorrelationProposal> {
    let d = r.dim();
    let bound = hit_and_run_bound(r);
    let z: Vec<f64> = (0..d * (d - 1) / 2).map(|_| StandardNormal.sample(rng)).collect();
    let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
    let direction: Vec<f64> = z.iter().map(|x| x / norm).collect();
    // inverse-CDF draw from the truncated normal
    let hi = std_normal_cdf(bound / scale);
    let lo = 1.0 - hi;
    let u: f64 = rng.random();
    let mut delta = scale * std_normal_quantile(lo + (hi - lo) * u);
    if !(delta.abs() < bound) {
        delta = delta.clamp(-bound, bound) * (1.0 - 1e-12);
    }
    let mut m = r.matrix().clone();
    let mut t = 0;
    for i in 0..d {
        for j in i + 1..d {
            m[(i, j)] += delta * direction[t];
            m[(j, i)] = m[(i, j)];
            t += 1;
        }
    }
    let proposed = CorrMatrix::new(m).map_err(|e| Error::Numerical(format!("hit-and-run left the correlation set: {e}")))?;
    Ok(CorrelationProposal { proposed, delta, direction, bound })
}

/// Log mass of the truncation interval, `log(2Φ(b/r) − 1)`.
fn log_truncation_mass(bound: f64, scale: f64) -> f64 {
    (2.0 * std_normal_cdf(bound / scale) - 1.0).ln()
}

/// One chain with its data, prior and random source.
pub struct Chain<'a> {
    data: &'a Dataset,
    grid: Grid,
    prior: Prior,
    cfg: SamplerConfig,
    sites: SiteSampler,
    volumes: Vec<f64>,
    rng: ChaCha8Rng,
    state: ChainState,
    acceptance: Acceptance,
    /// Adaptive log step size per marginal.
    log_scales: Vec<f64>,
    marginal_moves: Vec<u64>,
    iteration: usize,
}

impl<'a> Chain<'a> {
    pub fn new(data: &'a Dataset, grid: &Grid, prior: &PriorSpec, margs: &[MarginalModel], cfg: &SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        if data.dims() != grid.dims() {
            return Err(Error::DimensionMismatch { expected: grid.dims(), got: data.dims() });
        }
        if margs.len() != grid.dims() {
            return Err(Error::DimensionMismatch { expected: grid.dims(), got: margs.len() });
        }
        let prior_r = Prior::new(prior, grid)?;
        let sites = SiteSampler::new(grid)?;
        let center = GridCopula::project(&prior.initial_centering(), grid)?.into_mass();
        let u = pseudo_observations(data, margs)?;
        let cells = cell_assignments(&u, grid)?;
        let mut counts = vec![0u64; grid.n_cells()];
        for &c in &cells {
            counts[c] += 1;
        }
        let volumes = grid.volumes();
        // start at the prior mode unless the data rule it out
        let mut mass = center.clone();
        let mut log_lik = log_likelihood_raw(&mass, &volumes, &counts);
        if !log_lik.is_finite() {
            mass = volumes.clone();
            log_lik = log_likelihood_raw(&mass, &volumes, &counts);
        }
        let log_prior = prior_r.log_kernel(&mass, &center);
        let corr = match &prior.centering {
            Centering::Hierarchical { initial } => Some(initial.clone()),
            Centering::Fixed(_) => None,
        };
        let state = ChainState { mass, corr, marginals: margs.to_vec(), center, counts, cells, log_lik, log_prior };
        Ok(Chain {
            data,
            grid: grid.clone(),
            prior: prior_r,
            cfg: cfg.clone(),
            sites,
            volumes,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            state,
            acceptance: Acceptance::default(),
            log_scales: vec![cfg.marginal_step_scale.ln(); margs.len()],
            marginal_moves: vec![0; margs.len()],
            iteration: 0,
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn acceptance(&self) -> Acceptance {
        self.acceptance
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn copula(&self) -> GridCopula {
        GridCopula::from_parts(self.grid.clone(), self.state.mass.clone())
    }

    pub fn marginal_scale(&self, dim: usize) -> f64 {
        self.log_scales[dim].exp()
    }

    fn in_burn_in(&self) -> bool {
        self.iteration < self.cfg.burn_in
    }

    /// One random rectangle exchange with its Metropolis test.
    pub fn copula_step(&mut self) -> bool {
        let st = &mut self.state;
        let p = self.sites.propose(&st.mass, &mut self.rng);
        let accepted = if p.epsilon == 0.0 {
            true
        } else {
            let dl = delta_raw(&st.counts, &st.mass, &p);
            if dl == f64::NEG_INFINITY {
                false
            } else {
                let dp = self.prior.delta_log_kernel(&st.mass, &st.center, &p);
                let log_r = dl + dp;
                let ok = log_r >= 0.0 || self.rng.random::<f64>().ln() < log_r;
                if ok {
                    crate::exchange::apply_in_place(&mut st.mass, &p);
                    st.log_lik += dl;
                    st.log_prior += dp;
                }
                ok
            }
        };
        self.acceptance.copula.record(accepted);
        accepted
    }

    /// Hit-and-run update of the centering correlation matrix; a no-op for
    /// fixed centering.
    pub fn correlation_step(&mut self) -> Result<bool> {
        let Some(r) = self.state.corr.clone() else {
            return Ok(false);
        };
        let scale = self.cfg.hit_and_run_r;
        let prop = propose_correlation(&r, scale, &mut self.rng)?;
        let back_bound = hit_and_run_bound(&prop.proposed);
        let accepted = if prop.delta.abs() >= back_bound {
            // the reverse move would be impossible
            false
        } else {
            let center_new = GridCopula::project(&ReferenceCopula::gaussian(prop.proposed.clone()), &self.grid)?.into_mass();
            let log_r = self.prior.r_log_ratio_projected(&self.state.mass, &self.state.center, &center_new)
                + log_truncation_mass(prop.bound, scale)
                - log_truncation_mass(back_bound, scale);
            let ok = log_r >= 0.0 || self.rng.random::<f64>().ln() < log_r;
            if ok {
                self.state.log_prior = self.prior.log_kernel(&self.state.mass, &center_new);
                self.state.center = center_new;
                self.state.corr = Some(prop.proposed);
            }
            ok
        };
        self.acceptance.correlation.record(accepted);
        Ok(accepted)
    }

    /// Random-walk update of every parametric marginal in turn.
    pub fn marginal_step(&mut self) -> Result<bool> {
        let mut any = false;
        for dim in 0..self.state.marginals.len() {
            let Some(theta) = self.state.marginals[dim].params() else {
                continue;
            };
            let s = self.log_scales[dim].exp();
            let z0: f64 = StandardNormal.sample(&mut self.rng);
            let z1: f64 = StandardNormal.sample(&mut self.rng);
            let cand = self.state.marginals[dim].with_params([theta[0] + s * z0, theta[1] + s * z1]);
            let old = &self.state.marginals[dim];
            let col_old: f64 = self.data.column(dim).map(|y| old.log_pdf(y)).sum();
            let col_new: f64 = self.data.column(dim).map(|y| cand.log_pdf(y)).sum();
            let u = pseudo_observations_column(self.data, &cand, dim)?;
            let stride = self.grid.strides()[dim];
            let mut cells = self.state.cells.clone();
            let mut counts = self.state.counts.clone();
            for (cell, &x) in cells.iter_mut().zip(&u) {
                let k_new = self.grid.locate_1d(dim, x);
                let k_old = self.grid.coord(*cell, dim);
                if k_new != k_old {
                    counts[*cell] -= 1;
                    *cell = *cell - k_old * stride + k_new * stride;
                    counts[*cell] += 1;
                }
            }
            let ll_new = log_likelihood_raw(&self.state.mass, &self.volumes, &counts);
            let log_r = (ll_new - self.state.log_lik) + (col_new - col_old) + (cand.log_prior() - old.log_prior());
            let ok = log_r.is_finite() && (log_r >= 0.0 || self.rng.random::<f64>().ln() < log_r);
            if ok {
                self.state.marginals[dim] = cand;
                self.state.cells = cells;
                self.state.counts = counts;
                self.state.log_lik = ll_new;
            }
            if self.in_burn_in() {
                self.marginal_moves[dim] += 1;
                let gain = 1.0 / (self.marginal_moves[dim] as f64 + 1.0).powf(0.6);
                self.log_scales[dim] += gain * (f64::from(u8::from(ok)) - MARGINAL_TARGET_ACCEPT);
            }
            self.acceptance.marginal.record(ok);
            any |= ok;
        }
        Ok(any)
    }

    /// One full iteration: a sweep of exchange proposals, then the
    /// correlation and marginal updates where they apply.
    pub fn iterate(&mut self) -> Result<()> {
        let n = self.cfg.proposals_per_iteration.unwrap_or(self.grid.n_cells());
        for _ in 0..n {
            self.copula_step();
        }
        if self.state.corr.is_some() {
            self.correlation_step()?;
        }
        if self.state.marginals.iter().any(MarginalModel::is_parametric) {
            self.marginal_step()?;
        }
        self.iteration += 1;
        Ok(())
    }

    /// Full recomputation of the cached log-likelihood, log prior and counts.
    pub fn check_caches(&self) -> Result<()> {
        let st = &self.state;
        let u = pseudo_observations(self.data, &st.marginals)?;
        let cells = cell_assignments(&u, &self.grid)?;
        if cells != st.cells {
            return Err(Error::Numerical("cached cell assignments are stale".into()));
        }
        let mut counts = vec![0u64; self.grid.n_cells()];
        for &c in &cells {
            counts[c] += 1;
        }
        if counts != st.counts {
            return Err(Error::Numerical("cached counts are stale".into()));
        }
        let ll = log_likelihood_raw(&st.mass, &self.volumes, &counts);
        let lp = self.prior.log_kernel(&st.mass, &st.center);
        if (ll - st.log_lik).abs() > 1e-8 * (1.0 + ll.abs()) || (lp - st.log_prior).abs() > 1e-8 * (1.0 + lp.abs()) {
            return Err(Error::Numerical(format!(
                "cache drift: log-lik {} vs {}, log-prior {} vs {}",
                st.log_lik, ll, st.log_prior, lp
            )));
        }
        GridCopula::from_parts(self.grid.clone(), st.mass.clone()).validate(TRANSFORM_TOL)
    }

    /// Runs all configured iterations and collects the kept samples.
    pub fn run(mut self) -> Result<ChainOutput> {
        let cfg = self.cfg.clone();
        let n_cells = self.grid.n_cells();
        let target = match &cfg.record_hellinger_to {
            Some(r) => {
                let fine = self.grid.subdivide(cfg.reference_refinement)?;
                Some(RefinedTarget::new(&self.grid, &GridCopula::project(r, &fine)?)?)
            }
            None => None,
        };
        let two_d = self.grid.dims() == 2;
        let n_samples = cfg.n_samples();
        let mut out = ChainOutput {
            grid: self.grid.clone(),
            n_samples: 0,
            iterations: cfg.iterations,
            burn_in: cfg.burn_in,
            thinning: cfg.thinning,
            proposals_per_iteration: cfg.proposals_per_iteration.unwrap_or(n_cells),
            masses: Vec::with_capacity(if cfg.record_masses { n_samples * n_cells } else { 0 }),
            mass_sum: vec![0.0; n_cells],
            corr: Vec::new(),
            marginal_params: Vec::new(),
            hellinger: Vec::new(),
            tau: Vec::new(),
            spearman: Vec::new(),
            acceptance: Acceptance::default(),
        };
        let has_params = self.state.marginals.iter().any(MarginalModel::is_parametric);
        for t in 1..=cfg.iterations {
            self.iterate()?;
            if t <= cfg.burn_in || !(t - cfg.burn_in).is_multiple_of(cfg.thinning) {
                continue;
            }
            if cfg.verify_caches {
                self.check_caches()?;
            }
            let st = &self.state;
            if cfg.record_masses {
                out.masses.extend_from_slice(&st.mass);
            }
            for (s, m) in out.mass_sum.iter_mut().zip(&st.mass) {
                *s += m;
            }
            if let Some(r) = &st.corr {
                out.corr.push(r.upper_triangle());
            }
            if has_params {
                out.marginal_params.push(st.marginals.iter().filter_map(MarginalModel::params).collect());
            }
            if let Some(tg) = &target {
                out.hellinger.push(tg.hellinger(&st.mass));
            }
            if two_d {
                let c = GridCopula::from_parts(self.grid.clone(), st.mass.clone());
                out.tau.push(kendall_tau(&c)?);
                out.spearman.push(spearman_rho(&c)?);
            }
            out.n_samples += 1;
        }
        out.acceptance = self.acceptance;
        Ok(out)
    }
}

/// Runs one chain from the prior mode.
pub fn run_chain(
    data: &Dataset,
    grid: &Grid,
    prior: &PriorSpec,
    margs: &[MarginalModel],
    cfg: &SamplerConfig,
) -> Result<ChainOutput> {
    Chain::new(data, grid, prior, margs, cfg)?.run()
}

/// Draws of the off-diagonal centering correlation under the hierarchical
/// ICAR prior (adjacency weights) with no data, i.e. its implied marginal
/// prior.
pub fn prior_simulation_r(grid: &Grid, alpha_star: f64, cfg: &SamplerConfig) -> Result<Vec<f64>> {
    if grid.dims() != 2 {
        return Err(Error::Unsupported("prior simulation of R requires d = 2".into()));
    }
    let spec = PriorSpec {
        alpha_star,
        distance: crate::priors::Distance::Icar { weights: crate::priors::WeightKind::Adjacency },
        centering: Centering::Hierarchical { initial: CorrMatrix::identity(2) },
    };
    let data = Dataset::new(2, Vec::new())?;
    let margs = vec![MarginalModel::Known(crate::likelihood::KnownMarginal::Uniform); 2];
    let mut cfg = cfg.clone();
    cfg.record_masses = false;
    let out = run_chain(&data, grid, &spec, &margs, &cfg)?;
    Ok(out.corr.into_iter().map(|r| r[0]).collect())
}

/// Unnormalized log posterior of the copula given fixed counts, for tests
/// and diagnostics.
pub fn log_posterior_kernel(prior: &Prior, mass: &[f64], center: &[f64], counts: &[u64]) -> f64 {
    prior.log_kernel(mass, center) + log_likelihood_raw(mass, &prior.grid().volumes(), counts)
}

/// Σ log f_j(y_ij) under the current marginals.
pub fn data_marginal_log_likelihood(data: &Dataset, margs: &[MarginalModel]) -> f64 {
    marginal_log_likelihood(data, margs)
}
