//! TOML run configuration. Every section rejects unknown keys, and
//! [`RunConfig::resolve`] checks the whole document before any computation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::likelihood::{GaussianParamPrior, KnownMarginal, MarginalModel};
use crate::mcmc::SamplerConfig;
use crate::priors::{Centering, Distance, PriorSpec, WeightKind};
use crate::reference::{CorrMatrix, Family, ReferenceCopula};

/// A parametric copula named by family plus either its parameter or
/// Kendall's tau.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopulaConfig {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<usize>,
}

impl CopulaConfig {
    pub fn family(family: Family) -> Self {
        CopulaConfig { family, rho: None, theta: None, tau: None, means: None, dims: None }
    }

    pub fn with_tau(family: Family, tau: f64) -> Self {
        CopulaConfig { tau: Some(tau), ..CopulaConfig::family(family) }
    }

    pub fn with_param(family: Family, p: f64) -> Self {
        match family {
            Family::Gaussian => CopulaConfig { rho: Some(p), ..CopulaConfig::family(family) },
            _ => CopulaConfig { theta: Some(p), ..CopulaConfig::family(family) },
        }
    }

    /// Short label such as `clayton(theta=3)`, used in study outputs.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(v) = self.rho {
            parts.push(format!("rho={v}"));
        }
        if let Some(v) = self.theta {
            parts.push(format!("theta={v}"));
        }
        if let Some(v) = self.tau {
            parts.push(format!("tau={v}"));
        }
        if let Some(m) = self.means {
            parts.push(format!("means=({},{});({},{})", m[0][0], m[0][1], m[1][0], m[1][1]));
        }
        if parts.is_empty() {
            self.family.to_string()
        } else {
            format!("{}({})", self.family, parts.join(","))
        }
    }

    pub fn build(&self) -> Result<ReferenceCopula> {
        let fam = self.family;
        let set = [self.rho.is_some(), self.theta.is_some(), self.tau.is_some(), self.means.is_some()];
        let only = |allowed: &[usize]| -> Result<()> {
            let names = ["rho", "theta", "tau", "means"];
            for (i, &s) in set.iter().enumerate() {
                if s && !allowed.contains(&i) {
                    return Err(Error::Config(format!("'{}' does not apply to the {fam} family", names[i])));
                }
            }
            Ok(())
        };
        if self.dims.is_some() && fam != Family::Independence {
            return Err(Error::Config(format!("'dims' does not apply to the {fam} family")));
        }
        let built = match fam {
            Family::Independence => {
                only(&[])?;
                ReferenceCopula::independence(self.dims.unwrap_or(2))
            }
            Family::GaussMixture => {
                only(&[3])?;
                Ok(self.means.map_or_else(ReferenceCopula::model3, |m| ReferenceCopula::GaussMixture { means: m }))
            }
            Family::Gaussian | Family::Clayton | Family::Gumbel => {
                let key = if fam == Family::Gaussian { 0 } else { 1 };
                only(&[key, 2])?;
                match (set[key], self.tau) {
                    (true, Some(_)) => return Err(Error::Config(format!("give either a parameter or tau for {fam}, not both"))),
                    (false, Some(t)) => ReferenceCopula::from_tau(fam, t),
                    (true, None) if fam == Family::Gaussian => ReferenceCopula::gaussian2(self.rho.unwrap()),
                    (true, None) if fam == Family::Clayton => ReferenceCopula::clayton(self.theta.unwrap()),
                    (true, None) => ReferenceCopula::gumbel(self.theta.unwrap()),
                    (false, None) => {
                        let name = if fam == Family::Gaussian { "rho" } else { "theta" };
                        return Err(Error::Config(format!("{fam} copula needs '{name}' or 'tau'")));
                    }
                }
            }
        };
        built.map_err(|e| e.into_config(&format!("copula {}", self.label())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorVariant {
    Flat,
    L2,
    Car,
    Icar,
}

fn default_weights() -> WeightKind {
    WeightKind::Adjacency
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub variant: PriorVariant,
    #[serde(default)]
    pub alpha_star: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default = "default_weights")]
    pub weights: WeightKind,
    /// Sample the correlation of a Gaussian centering.
    #[serde(default)]
    pub hierarchical: bool,
    /// Fixed centering copula; independence when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centering: Option<CopulaConfig>,
    /// Starting correlation of a hierarchical centering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_rho: Option<f64>,
    /// Scale of the hit-and-run step on the centering correlation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning_r: Option<f64>,
}

impl PriorConfig {
    pub fn flat() -> Self {
        PriorConfig {
            variant: PriorVariant::Flat,
            alpha_star: 0.0,
            gamma: None,
            weights: WeightKind::Adjacency,
            hierarchical: false,
            centering: None,
            initial_rho: None,
            tuning_r: None,
        }
    }

    /// Hierarchically centered ICAR prior with adjacency weights.
    pub fn hierarchical_icar(alpha_star: f64) -> Self {
        PriorConfig { variant: PriorVariant::Icar, alpha_star, hierarchical: true, ..PriorConfig::flat() }
    }

    pub fn build(&self, dims: usize) -> Result<PriorSpec> {
        let v = self.variant;
        if v != PriorVariant::Flat && !(self.alpha_star > 0.0 && self.alpha_star.is_finite()) {
            return Err(Error::Config(format!("prior.alpha_star must be positive for a non-flat prior, got {}", self.alpha_star)));
        }
        if v == PriorVariant::Flat && self.alpha_star != 0.0 {
            return Err(Error::Config("prior.alpha_star must be 0 (or absent) for the flat prior".into()));
        }
        if (v == PriorVariant::Car) != self.gamma.is_some() {
            return Err(Error::Config("prior.gamma is required for the car prior and only allowed there".into()));
        }
        if v == PriorVariant::Flat && self.hierarchical {
            return Err(Error::Config("a flat prior cannot be hierarchical".into()));
        }
        if self.hierarchical && self.centering.is_some() {
            return Err(Error::Config("prior.centering conflicts with prior.hierarchical (use initial_rho)".into()));
        }
        if !self.hierarchical && (self.initial_rho.is_some() || self.tuning_r.is_some()) {
            return Err(Error::Config("prior.initial_rho and prior.tuning_r need prior.hierarchical = true".into()));
        }
        let distance = match v {
            PriorVariant::Flat => Distance::Flat,
            PriorVariant::L2 => Distance::SquaredL2,
            PriorVariant::Car => Distance::Car { gamma: self.gamma.unwrap_or_default(), weights: self.weights },
            PriorVariant::Icar => Distance::Icar { weights: self.weights },
        };
        let centering = if self.hierarchical {
            if dims != 2 {
                return Err(Error::Config(format!("hierarchical centering needs 2 dimensions, got {dims}")));
            }
            Centering::Hierarchical {
                initial: CorrMatrix::from_rho(self.initial_rho.unwrap_or(0.0)).map_err(|e| e.into_config("prior.initial_rho"))?,
            }
        } else {
            let c = match &self.centering {
                Some(c) => c.build().map_err(|e| e.into_config("prior.centering"))?,
                None => ReferenceCopula::independence(dims).map_err(|e| e.into_config("prior.centering"))?,
            };
            if c.dims() != dims {
                return Err(Error::Config(format!("prior.centering has {} dimensions, data has {dims}", c.dims())));
            }
            Centering::Fixed(c)
        };
        Ok(PriorSpec { alpha_star: self.alpha_star, distance, centering })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerDim {
    All(usize),
    Each(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Number of equal intervals, one value for all axes or one per axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<PerDim>,
    /// Explicit cut points per axis, each ending at 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cuts: Option<Vec<Vec<f64>>>,
}

impl GridConfig {
    pub fn uniform(m: usize) -> Self {
        GridConfig { m: Some(PerDim::All(m)), cuts: None }
    }

    /// Dimension fixed by the grid section alone, if any.
    pub fn dims(&self) -> Option<usize> {
        match (&self.m, &self.cuts) {
            (Some(PerDim::Each(v)), _) => Some(v.len()),
            (_, Some(c)) => Some(c.len()),
            _ => None,
        }
    }

    pub fn build(&self, dims: usize) -> Result<Grid> {
        let g = match (&self.m, &self.cuts) {
            (Some(_), Some(_)) => return Err(Error::Config("grid: give either 'm' or 'cuts', not both".into())),
            (None, None) => return Err(Error::Config("grid: one of 'm' or 'cuts' is required".into())),
            (Some(PerDim::All(m)), None) => Grid::uniform(dims, *m),
            (Some(PerDim::Each(ms)), None) => {
                Grid::new(ms.iter().map(|&m| crate::grid::uniform_cuts(m)).collect())
            }
            (None, Some(cuts)) => Grid::new(cuts.clone()),
        };
        let g = g.map_err(|e| e.into_config("grid"))?;
        if g.dims() != dims {
            return Err(Error::Config(format!("grid has {} dimensions, data has {dims}", g.dims())));
        }
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MarginalConfig {
    /// Data already on the copula scale.
    Uniform,
    Normal { mean: f64, sd: f64 },
    NormalMixture { m1: f64, m2: f64 },
    Table { x: Vec<f64>, p: Vec<f64> },
    /// Normal with unknown mean and sd, sampled along with the copula.
    Gaussian {
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<GaussianParamPrior>,
    },
}

fn one() -> f64 {
    1.0
}

impl MarginalConfig {
    pub fn build(&self) -> Result<MarginalModel> {
        let pos = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("marginal {name} must be positive, got {v}")))
            }
        };
        Ok(match self {
            MarginalConfig::Uniform => MarginalModel::Known(KnownMarginal::Uniform),
            MarginalConfig::Normal { mean, sd } => {
                pos("sd", *sd)?;
                MarginalModel::Known(KnownMarginal::Normal { mean: *mean, sd: *sd })
            }
            MarginalConfig::NormalMixture { m1, m2 } => MarginalModel::Known(KnownMarginal::NormalMixture { m1: *m1, m2: *m2 }),
            MarginalConfig::Table { x, p } => MarginalModel::Known(
                KnownMarginal::quantile_table(x.clone(), p.clone()).map_err(|e| e.into_config("marginal table"))?,
            ),
            MarginalConfig::Gaussian { mean, sd, prior } => {
                pos("sd", *sd)?;
                let prior = prior.unwrap_or_default();
                pos("prior mean_sd", prior.mean_sd)?;
                pos("prior log_sd_sd", prior.log_sd_sd)?;
                MarginalModel::Gaussian { theta: [*mean, sd.ln()], prior }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSel {
    /// 1-based column number.
    Number(usize),
    Name(String),
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// CSV file, relative paths resolved against the config file.
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<ColumnSel>>,
    #[serde(default = "yes")]
    pub header: bool,
}

fn default_thinning() -> usize {
    1
}

fn default_step() -> f64 {
    0.1
}

fn default_refinement() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub iterations: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_step")]
    pub marginal_step_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposals_per_iteration: Option<usize>,
    /// Record the Hellinger distance to this copula at every kept sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hellinger_to: Option<CopulaConfig>,
    #[serde(default = "default_refinement")]
    pub reference_refinement: usize,
    #[serde(default)]
    pub verify_caches: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainFormat {
    #[default]
    Text,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    #[serde(default)]
    pub chain_format: ChainFormat,
    /// Write the mass vector of every kept sample.
    #[serde(default = "yes")]
    pub write_chain: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub grid: GridConfig,
    pub prior: PriorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<MarginalConfig>>,
    pub sampler: SamplerSection,
    pub output: OutputConfig,
}

/// A validated configuration, ready to run.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub dims: usize,
    pub grid: Grid,
    pub prior: PriorSpec,
    pub marginals: Vec<MarginalModel>,
    pub sampler: SamplerConfig,
    pub data_path: PathBuf,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::from_toml_str(&s)
    }

    /// Number of dimensions implied by the document.
    pub fn dims(&self) -> Result<usize> {
        let mut candidates = Vec::new();
        if let Some(c) = &self.data.columns {
            candidates.push(("data.columns", c.len()));
        }
        if let Some(d) = self.grid.dims() {
            candidates.push(("grid", d));
        }
        if let Some(m) = &self.marginals {
            candidates.push(("marginals", m.len()));
        }
        let d = candidates.first().map_or(2, |c| c.1);
        if let Some((name, other)) = candidates.iter().find(|c| c.1 != d) {
            return Err(Error::Config(format!("{name} implies {other} dimensions, {} implies {d}", candidates[0].0)));
        }
        Ok(d)
    }

    /// Validates every section; `base` resolves relative paths.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedRun> {
        let dims = self.dims()?;
        if dims < 2 {
            return Err(Error::Config(format!("need at least 2 dimensions, got {dims}")));
        }
        let grid = self.grid.build(dims)?;
        let prior = self.prior.build(dims)?;
        let marginals = match &self.marginals {
            Some(ms) => ms
                .iter()
                .enumerate()
                .map(|(i, m)| m.build().map_err(|e| e.into_config(&format!("marginals[{}]", i + 1))))
                .collect::<Result<Vec<_>>>()?,
            None => vec![MarginalModel::Known(KnownMarginal::Uniform); dims],
        };
        let s = &self.sampler;
        let record_hellinger_to = match &s.hellinger_to {
            Some(c) => {
                let r = c.build().map_err(|e| e.into_config("sampler.hellinger_to"))?;
                if r.dims() != dims {
                    return Err(Error::Config("sampler.hellinger_to has the wrong dimension".into()));
                }
                Some(r)
            }
            None => None,
        };
        let sampler = SamplerConfig {
            iterations: s.iterations,
            burn_in: s.burn_in,
            thinning: s.thinning,
            seed: s.seed,
            hit_and_run_r: self.prior.tuning_r.unwrap_or(SamplerConfig::default().hit_and_run_r),
            marginal_step_scale: s.marginal_step_scale,
            record_hellinger_to,
            reference_refinement: s.reference_refinement,
            record_masses: true,
            proposals_per_iteration: s.proposals_per_iteration,
            verify_caches: s.verify_caches,
        };
        sampler.validate().map_err(|e| e.into_config("sampler"))?;
        crate::priors::Prior::new(&prior, &grid).map_err(|e| e.into_config("prior"))?;
        crate::exchange::SiteSampler::new(&grid).map_err(|e| e.into_config("grid"))?;
        Ok(ResolvedRun {
            dims,
            grid,
            prior,
            marginals,
            sampler,
            data_path: base.join(&self.data.path),
            output_dir: base.join(&self.output.directory),
        })
    }
}
