//! Prior kernels `−(α/2)·𝒟(C, C0)` over grid-uniform copulas.
//!
//! Every kernel is evaluated against the centering copula projected onto the
//! fit grid, which gives the same prior as the continuous centering copula.
//! Masses are the working variables: with `v = m − m0`, squared-L2 uses
//! `𝒟 = Σ v²/λ` (the exact `∫(c − c0)²`) and CAR/ICAR use `vᵀ(D_W − γW)v`.

use nalgebra::DMatrix;

use crate::copula::GridCopula;
use crate::error::{Error, Result};
use crate::exchange::ExchangeProposal;
use crate::grid::Grid;
use crate::reference::{CorrMatrix, ReferenceCopula};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    /// 1 for grid neighbors, 0 otherwise.
    Adjacency,
    /// Reciprocal distance between cell centroids; dense.
    InverseDistance,
}

/// Symmetric nonnegative cell weights with zero diagonal, stored as
/// per-cell neighbor lists.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    kind: WeightKind,
    nbrs: Vec<Vec<(usize, f64)>>,
    row_sums: Vec<f64>,
}

impl Weights {
    pub fn new(kind: WeightKind, grid: &Grid) -> Self {
        let n = grid.n_cells();
        let nbrs: Vec<Vec<(usize, f64)>> = match kind {
            WeightKind::Adjacency => (0..n).map(|k| grid.neighbors_flat(k).into_iter().map(|l| (l, 1.0)).collect()).collect(),
            WeightKind::InverseDistance => {
                let centers: Vec<Vec<f64>> = (0..grid.dims()).map(|i| grid.centers(i)).collect();
                let mut pts = vec![0.0; n * grid.dims()];
                let mut idx = vec![0; grid.dims()];
                for k in 0..n {
                    grid.unflatten_into(k, &mut idx);
                    for (i, &c) in idx.iter().enumerate() {
                        pts[k * grid.dims() + i] = centers[i][c];
                    }
                }
                let d = grid.dims();
                (0..n)
                    .map(|k| {
                        (0..n)
                            .filter(|&l| l != k)
                            .map(|l| {
                                let dist = (0..d).map(|i| (pts[k * d + i] - pts[l * d + i]).powi(2)).sum::<f64>().sqrt();
                                (l, 1.0 / dist)
                            })
                            .collect()
                    })
                    .collect()
            }
        };
        let row_sums = nbrs.iter().map(|r| r.iter().map(|(_, w)| w).sum()).collect();
        Weights { kind, nbrs, row_sums }
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nbrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nbrs.is_empty()
    }

    pub fn row_sum(&self, k: usize) -> f64 {
        self.row_sums[k]
    }

    pub fn neighbors(&self, k: usize) -> &[(usize, f64)] {
        &self.nbrs[k]
    }

    pub fn weight(&self, k: usize, l: usize) -> f64 {
        self.nbrs[k].iter().find(|(j, _)| *j == l).map_or(0.0, |(_, w)| *w)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for (k, row) in self.nbrs.iter().enumerate() {
            for &(l, w) in row {
                m[(k, l)] = w;
            }
        }
        m
    }

    /// `vᵀ(D_W − γW)v`.
    pub fn quad_form(&self, v: &[f64], gamma: f64) -> f64 {
        self.nbrs
            .iter()
            .enumerate()
            .map(|(k, row)| v[k] * (self.row_sums[k] * v[k] - gamma * row.iter().map(|&(l, w)| w * v[l]).sum::<f64>()))
            .sum()
    }
}

/// Range of `γ` for which the CAR form is positive definite:
/// `(1/λ_min, 1/λ_max)` of `D^{-1/2} W D^{-1/2}`.
///
/// Grid adjacency graphs are connected and bipartite, so their normalized
/// spectrum is symmetric with extremes ±1 and the answer is `(−1, 1)`.
pub fn gamma_bounds(w: &Weights) -> Result<(f64, f64)> {
    if let Some(k) = w.row_sums.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::SingularWeights(k));
    }
    if w.kind == WeightKind::Adjacency {
        return Ok((-1.0, 1.0));
    }
    normalized_spectrum_bounds(w)
}

fn normalized_spectrum_bounds(w: &Weights) -> Result<(f64, f64)> {
    let mut m = w.to_dense();
    let n = w.len();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] /= (w.row_sums[i] * w.row_sums[j]).sqrt();
        }
    }
    let ev = m.symmetric_eigen().eigenvalues;
    Ok((1.0 / ev.min(), 1.0 / ev.max()))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Distance {
    /// Uniform prior over grid-uniform copulas; the `α → 0` limit.
    Flat,
    SquaredL2,
    Car { gamma: f64, weights: WeightKind },
    Icar { weights: WeightKind },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Centering {
    Fixed(ReferenceCopula),
    /// Gaussian centering whose correlation matrix is sampled, starting at
    /// `initial`.
    Hierarchical { initial: CorrMatrix },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec {
    pub alpha_star: f64,
    pub distance: Distance,
    pub centering: Centering,
}

impl PriorSpec {
    pub fn flat(dims: usize) -> Result<Self> {
        Ok(PriorSpec {
            alpha_star: 0.0,
            distance: Distance::Flat,
            centering: Centering::Fixed(ReferenceCopula::independence(dims)?),
        })
    }

    pub fn is_hierarchical(&self) -> bool {
        matches!(self.centering, Centering::Hierarchical { .. })
    }

    /// Centering reference copula at the initial state.
    pub fn initial_centering(&self) -> ReferenceCopula {
        match &self.centering {
            Centering::Fixed(r) => r.clone(),
            Centering::Hierarchical { initial } => ReferenceCopula::gaussian(initial.clone()),
        }
    }
}

/// `α = α⋆ · (number of cells)`; all cells are counted. `α⋆ = 0` is the flat limit.
pub fn alpha_from_star(alpha_star: f64, grid: &Grid) -> Result<f64> {
    if !(alpha_star >= 0.0 && alpha_star.is_finite()) {
        return Err(Error::Domain(format!("alpha_star must be a nonnegative finite number, got {alpha_star}")));
    }
    Ok(alpha_star * grid.n_cells() as f64)
}

#[derive(Clone, Debug)]
enum Form {
    Zero,
    L2 { inv_vol: Vec<f64> },
    Quad { gamma: f64, weights: Weights },
}

/// A prior specification realized on a grid.
#[derive(Clone, Debug)]
pub struct Prior {
    spec: PriorSpec,
    grid: Grid,
    alpha: f64,
    form: Form,
}

impl Prior {
    pub fn new(spec: &PriorSpec, grid: &Grid) -> Result<Self> {
        let alpha = alpha_from_star(spec.alpha_star, grid)?;
        let form = match &spec.distance {
            Distance::Flat => Form::Zero,
            _ if alpha == 0.0 => Form::Zero,
            Distance::SquaredL2 => Form::L2 { inv_vol: grid.volumes().iter().map(|v| 1.0 / v).collect() },
            Distance::Car { gamma, weights } => {
                let w = Weights::new(*weights, grid);
                let (lo, hi) = gamma_bounds(&w)?;
                if !(*gamma > lo && *gamma < hi) {
                    return Err(Error::Domain(format!("CAR gamma {gamma} outside ({lo}, {hi})")));
                }
                Form::Quad { gamma: *gamma, weights: w }
            }
            Distance::Icar { weights } => {
                let w = Weights::new(*weights, grid);
                gamma_bounds(&w)?;
                Form::Quad { gamma: 1.0, weights: w }
            }
        };
        if let Centering::Hierarchical { initial } = &spec.centering {
            if grid.dims() != 2 || initial.dim() != 2 {
                return Err(Error::Unsupported("hierarchical centering requires d = 2".into()));
            }
        }
        if spec.initial_centering().dims() != grid.dims() {
            return Err(Error::DimensionMismatch { expected: grid.dims(), got: spec.initial_centering().dims() });
        }
        Ok(Prior { spec: spec.clone(), grid: grid.clone(), alpha, form })
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.form, Form::Zero)
    }

    /// `𝒟(C, C0)` from mass vectors on this prior's grid.
    pub fn discrepancy(&self, mass: &[f64], mass0: &[f64]) -> f64 {
        match &self.form {
            Form::Zero => 0.0,
            Form::L2 { inv_vol } => mass.iter().zip(mass0).zip(inv_vol).map(|((m, m0), iv)| (m - m0).powi(2) * iv).sum(),
            Form::Quad { gamma, weights } => {
                let v: Vec<f64> = mass.iter().zip(mass0).map(|(m, m0)| m - m0).collect();
                weights.quad_form(&v, *gamma)
            }
        }
    }

    pub fn log_kernel(&self, mass: &[f64], mass0: &[f64]) -> f64 {
        if self.is_flat() {
            return 0.0;
        }
        -0.5 * self.alpha * self.discrepancy(mass, mass0)
    }

    /// Change of the log kernel caused by `p`, touching only the four moved
    /// cells (and their neighbors for CAR/ICAR).
    pub fn delta_log_kernel(&self, mass: &[f64], mass0: &[f64], p: &ExchangeProposal) -> f64 {
        let cells = p.site.cells();
        let e = p.epsilon;
        let delta = [-e, e, e, -e];
        let dd = match &self.form {
            Form::Zero => return 0.0,
            Form::L2 { inv_vol } => {
                (0..4).map(|t| delta[t] * (2.0 * (mass[cells[t]] - mass0[cells[t]]) + delta[t]) * inv_vol[cells[t]]).sum::<f64>()
            }
            Form::Quad { gamma, weights } => {
                // 2 δᵀQv + δᵀQδ with Q = D_W − γW
                let mut s = 0.0;
                for t in 0..4 {
                    let k = cells[t];
                    let qv = weights.row_sums[k] * (mass[k] - mass0[k])
                        - gamma * weights.nbrs[k].iter().map(|&(l, w)| w * (mass[l] - mass0[l])).sum::<f64>();
                    s += 2.0 * delta[t] * qv;
                    s += weights.row_sums[k] * delta[t] * delta[t];
                    for u in 0..4 {
                        if u != t {
                            s -= gamma * weights.weight(k, cells[u]) * delta[t] * delta[u];
                        }
                    }
                }
                s
            }
        };
        -0.5 * self.alpha * dd
    }

    /// `(α/2)(𝒟(C, C0_old) − 𝒟(C, C0_new))` for Gaussian centerings with
    /// correlation `r_old` and `r_new`.
    pub fn r_log_ratio(&self, mass: &[f64], r_old: &CorrMatrix, r_new: &CorrMatrix) -> Result<f64> {
        let c_old = GridCopula::project(&ReferenceCopula::gaussian(r_old.clone()), &self.grid)?;
        let c_new = GridCopula::project(&ReferenceCopula::gaussian(r_new.clone()), &self.grid)?;
        Ok(self.r_log_ratio_projected(mass, c_old.mass(), c_new.mass()))
    }

    pub fn r_log_ratio_projected(&self, mass: &[f64], mass0_old: &[f64], mass0_new: &[f64]) -> f64 {
        0.5 * self.alpha * (self.discrepancy(mass, mass0_old) - self.discrepancy(mass, mass0_new))
    }
}

fn same_grid(a: &GridCopula, b: &GridCopula) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Unnormalized log prior density of `c` against the projected centering `c0`.
pub fn log_prior_kernel(spec: &PriorSpec, c: &GridCopula, c0: &GridCopula) -> Result<f64> {
    same_grid(c, c0)?;
    Ok(Prior::new(spec, c.grid())?.log_kernel(c.mass(), c0.mass()))
}

pub fn delta_log_prior(spec: &PriorSpec, c: &GridCopula, c0: &GridCopula, p: &ExchangeProposal) -> Result<f64> {
    same_grid(c, c0)?;
    let (lo, hi) = crate::exchange::epsilon_interval(c, &p.site)?;
    if !(p.epsilon >= lo && p.epsilon <= hi) {
        return Err(Error::EpsilonOutOfRange { epsilon: p.epsilon, lo, hi });
    }
    Ok(Prior::new(spec, c.grid())?.delta_log_kernel(c.mass(), c0.mass(), p))
}

pub fn hierarchical_r_log_ratio(
    spec: &PriorSpec,
    c: &GridCopula,
    r_old: &CorrMatrix,
    r_new: &CorrMatrix,
) -> Result<f64> {
    Prior::new(spec, c.grid())?.r_log_ratio(c.mass(), r_old, r_new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::{apply_exchange, apply_in_place, SiteSampler};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(alpha_star: f64, distance: Distance, centering: ReferenceCopula) -> PriorSpec {
        PriorSpec { alpha_star, distance, centering: Centering::Fixed(centering) }
    }

    fn distances() -> Vec<Distance> {
        vec![
            Distance::SquaredL2,
            Distance::Car { gamma: 0.9, weights: WeightKind::Adjacency },
            Distance::Car { gamma: -0.5, weights: WeightKind::Adjacency },
            Distance::Icar { weights: WeightKind::Adjacency },
            Distance::Car { gamma: 0.5, weights: WeightKind::InverseDistance },
            Distance::Icar { weights: WeightKind::InverseDistance },
        ]
    }

    fn random_state(g: &Grid, n: usize, rng: &mut ChaCha8Rng) -> GridCopula {
        let s = SiteSampler::new(g).unwrap();
        let mut m = GridCopula::project(&ReferenceCopula::gaussian2(0.3).unwrap(), g).unwrap().into_mass();
        for _ in 0..n {
            let p = s.propose(&m, rng);
            apply_in_place(&mut m, &p);
        }
        GridCopula::new(g.clone(), m).unwrap()
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_from_star(400.0, &Grid::uniform(2, 50).unwrap()).unwrap(), 1_000_000.0);
        assert_eq!(alpha_from_star(40.0, &Grid::uniform(2, 6).unwrap()).unwrap(), 1440.0);
        assert_eq!(alpha_from_star(2.0, &Grid::uniform(2, 10).unwrap()).unwrap(), 200.0);
        assert_eq!(alpha_from_star(0.0, &Grid::uniform(2, 10).unwrap()).unwrap(), 0.0);
        assert!(alpha_from_star(-1.0, &Grid::uniform(2, 10).unwrap()).is_err());
        assert!(alpha_from_star(f64::NAN, &Grid::uniform(2, 10).unwrap()).is_err());
    }

    #[test]
    fn squared_l2_hand_value() {
        let g = Grid::uniform(2, 2).unwrap();
        let cb = GridCopula::new(g.clone(), vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let ind = GridCopula::independence(g);
        // α = 4 on four cells
        let s = spec(1.0, Distance::SquaredL2, ReferenceCopula::independence(2).unwrap());
        assert!((log_prior_kernel(&s, &cb, &ind).unwrap() + 2.0).abs() < 1e-15);
    }

    #[test]
    fn kernels_vanish_at_center_and_in_flat_limit() {
        let g = Grid::new(vec![vec![0.2, 0.5, 0.7, 1.0], vec![0.1, 0.4, 1.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c0 = GridCopula::project(&ReferenceCopula::gaussian2(0.3).unwrap(), &g).unwrap();
        let c = random_state(&g, 50, &mut rng);
        for dist in distances() {
            let s = spec(3.0, dist.clone(), ReferenceCopula::gaussian2(0.3).unwrap());
            assert_eq!(log_prior_kernel(&s, &c0, &c0).unwrap(), 0.0);
            assert!(log_prior_kernel(&s, &c, &c0).unwrap() < 0.0);
            let flat = spec(0.0, dist, ReferenceCopula::gaussian2(0.3).unwrap());
            assert_eq!(log_prior_kernel(&flat, &c, &c0).unwrap(), 0.0);
        }
        let other = GridCopula::independence(Grid::uniform(2, 3).unwrap());
        let s = spec(1.0, Distance::SquaredL2, ReferenceCopula::independence(2).unwrap());
        assert_eq!(log_prior_kernel(&s, &c, &other), Err(Error::GridMismatch));
    }

    #[test]
    fn icar_ignores_constant_shift() {
        let g = Grid::uniform(2, 4).unwrap();
        for kind in [WeightKind::Adjacency, WeightKind::InverseDistance] {
            let w = Weights::new(kind, &g);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let v: Vec<f64> = (0..16).map(|_| rng.random::<f64>() - 0.5).collect();
            let shifted: Vec<f64> = v.iter().map(|x| x + 0.37).collect();
            assert!((w.quad_form(&v, 1.0) - w.quad_form(&shifted, 1.0)).abs() < 1e-12);
            assert!(w.quad_form(&[1.0; 16], 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn icar_matches_pairwise_display() {
        // Σ_B Σ_{A∈N_B} (v_B − v_A)² counts each pair twice: it is 2·vᵀ(D − W)v.
        let g = Grid::new(vec![vec![0.3, 0.6, 1.0], vec![0.5, 1.0], vec![0.2, 1.0]]).unwrap();
        let w = Weights::new(WeightKind::Adjacency, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v: Vec<f64> = (0..g.n_cells()).map(|_| rng.random::<f64>()).collect();
        let pairwise: f64 =
            (0..g.n_cells()).map(|b| g.neighbors_flat(b).iter().map(|&a| (v[b] - v[a]).powi(2)).sum::<f64>()).sum();
        assert!((pairwise - 2.0 * w.quad_form(&v, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn local_delta_matches_full_recomputation() {
        let g = Grid::uniform(2, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c0 = GridCopula::project(&ReferenceCopula::gaussian2(0.3).unwrap(), &g).unwrap();
        let sampler = SiteSampler::new(&g).unwrap();
        for dist in distances() {
            let s = spec(2.0, dist.clone(), ReferenceCopula::gaussian2(0.3).unwrap());
            let prior = Prior::new(&s, &g).unwrap();
            let mut m = c0.mass().to_vec();
            let n = if matches!(dist, Distance::SquaredL2 | Distance::Car { weights: WeightKind::Adjacency, .. }) { 10_000 } else { 2_000 };
            for _ in 0..n {
                let p = sampler.propose(&m, &mut rng);
                let before = prior.log_kernel(&m, c0.mass());
                let local = prior.delta_log_kernel(&m, c0.mass(), &p);
                apply_in_place(&mut m, &p);
                let after = prior.log_kernel(&m, c0.mass());
                assert!((after - before - local).abs() < 1e-10, "{dist:?}: {} vs {local}", after - before);
            }
        }
    }

    #[test]
    fn delta_zero_epsilon_and_spec_level_api() {
        let g = Grid::uniform(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_state(&g, 30, &mut rng);
        let c0 = GridCopula::independence(g.clone());
        let s = spec(5.0, Distance::Icar { weights: WeightKind::Adjacency }, ReferenceCopula::independence(2).unwrap());
        let mut p = crate::exchange::random_exchange(&c, &mut rng).unwrap();
        let full = log_prior_kernel(&s, &apply_exchange(&c, &p).unwrap(), &c0).unwrap() - log_prior_kernel(&s, &c, &c0).unwrap();
        assert!((delta_log_prior(&s, &c, &c0, &p).unwrap() - full).abs() < 1e-10);
        p.epsilon = 0.0;
        assert_eq!(delta_log_prior(&s, &c, &c0, &p).unwrap(), 0.0);
        p.epsilon = 2.0;
        assert!(matches!(delta_log_prior(&s, &c, &c0, &p), Err(Error::EpsilonOutOfRange { .. })));
    }

    #[test]
    fn l2_delta_matches_density_form() {
        // −α/2 Σ_4 λ((c̃ − c0)² − (c − c0)²) written with densities
        let g = Grid::uniform(2, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_state(&g, 100, &mut rng);
        let c0 = GridCopula::project(&ReferenceCopula::clayton(1.0).unwrap(), &g).unwrap();
        let s = spec(7.0, Distance::SquaredL2, ReferenceCopula::clayton(1.0).unwrap());
        let alpha = alpha_from_star(7.0, &g).unwrap();
        for _ in 0..200 {
            let p = crate::exchange::random_exchange(&c, &mut rng).unwrap();
            let next = apply_exchange(&c, &p).unwrap();
            let lam = 0.04;
            let display: f64 = p
                .site
                .cells()
                .iter()
                .map(|&k| {
                    let (cn, cc, c00) = (next.mass()[k] / lam, c.mass()[k] / lam, c0.mass()[k] / lam);
                    lam * ((cn - c00).powi(2) - (cc - c00).powi(2))
                })
                .sum::<f64>()
                * (-alpha / 2.0);
            assert!((delta_log_prior(&s, &c, &c0, &p).unwrap() - display).abs() < 1e-9);
        }
    }

    #[test]
    fn gamma_bounds_examples() {
        let g = Grid::uniform(2, 2).unwrap();
        let w = Weights::new(WeightKind::Adjacency, &g);
        let (lo, hi) = gamma_bounds(&w).unwrap();
        assert_eq!((lo, hi), (-1.0, 1.0));
        let (elo, ehi) = normalized_spectrum_bounds(&w).unwrap();
        assert!((elo + 1.0).abs() < 1e-12 && (ehi - 1.0).abs() < 1e-12);
        // ICAR sits on the boundary
        assert!(!(1.0 > lo && 1.0 < hi));
        let one = Grid::new(vec![vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(gamma_bounds(&Weights::new(WeightKind::Adjacency, &one)), Err(Error::SingularWeights(0)));
        let s = spec(1.0, Distance::Car { gamma: 1.0, weights: WeightKind::Adjacency }, ReferenceCopula::independence(2).unwrap());
        assert!(Prior::new(&s, &g).is_err());
    }

    #[test]
    fn adjacency_bounds_agree_with_eigensolve() {
        for cuts in [
            vec![vec![0.5, 1.0], vec![0.3, 0.6, 1.0]],
            vec![vec![0.2, 0.4, 0.6, 0.8, 1.0], vec![0.1, 0.5, 1.0]],
            vec![vec![0.5, 1.0], vec![0.5, 1.0], vec![0.3, 0.6, 1.0]],
            vec![vec![1.0], vec![0.25, 0.5, 1.0]],
        ] {
            let g = Grid::new(cuts).unwrap();
            let w = Weights::new(WeightKind::Adjacency, &g);
            let (lo, hi) = normalized_spectrum_bounds(&w).unwrap();
            assert!((lo + 1.0).abs() < 1e-10 && (hi - 1.0).abs() < 1e-10, "{lo} {hi}");
            assert_eq!(gamma_bounds(&w).unwrap(), (-1.0, 1.0));
        }
    }

    #[test]
    fn inverse_distance_bounds() {
        let g = Grid::uniform(2, 4).unwrap();
        let w = Weights::new(WeightKind::InverseDistance, &g);
        let (lo, hi) = gamma_bounds(&w).unwrap();
        assert!(lo < 0.0 && (hi - 1.0).abs() < 1e-10);
        let dense = w.to_dense();
        assert_eq!(dense, dense.transpose());
        assert!((w.weight(0, 1) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn weights_match_grid_neighbors() {
        let g = Grid::new(vec![vec![0.3, 0.6, 1.0], vec![0.5, 1.0], vec![0.2, 0.9, 1.0]]).unwrap();
        let w = Weights::new(WeightKind::Adjacency, &g);
        for k in 0..g.n_cells() {
            for l in 0..g.n_cells() {
                let adj = g.neighbors_flat(k).contains(&l);
                assert_eq!(w.weight(k, l), if adj { 1.0 } else { 0.0 });
                assert_eq!(w.weight(k, l), w.weight(l, k));
            }
            assert_eq!(w.row_sum(k), g.neighbors_flat(k).len() as f64);
        }
    }

    #[test]
    fn hierarchical_ratio_examples() {
        let g = Grid::uniform(2, 6).unwrap();
        let s = PriorSpec {
            alpha_star: 10.0,
            distance: Distance::SquaredL2,
            centering: Centering::Hierarchical { initial: CorrMatrix::from_rho(0.0).unwrap() },
        };
        let r1 = CorrMatrix::from_rho(0.2).unwrap();
        let r2 = CorrMatrix::from_rho(0.6).unwrap();
        let c = GridCopula::project(&ReferenceCopula::gaussian(r2.clone()), &g).unwrap();
        assert_eq!(hierarchical_r_log_ratio(&s, &c, &r1, &r1).unwrap(), 0.0);
        let ratio = hierarchical_r_log_ratio(&s, &c, &r1, &r2).unwrap();
        assert!(ratio >= 0.0);
        let c1 = GridCopula::project(&ReferenceCopula::gaussian(r1.clone()), &g).unwrap();
        let two_way = log_prior_kernel(&s, &c, &c).unwrap() - log_prior_kernel(&s, &c, &c1).unwrap();
        assert!((ratio - two_way).abs() < 1e-10);
        let mut bad = s.clone();
        bad.centering = Centering::Hierarchical { initial: CorrMatrix::identity(3) };
        assert!(Prior::new(&bad, &Grid::uniform(3, 2).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn car_form_positive_definite_inside_bounds(seed in 0u64..5000, gamma in -0.99f64..0.99) {
            let g = Grid::new(vec![vec![0.25, 0.5, 1.0], vec![0.4, 0.8, 1.0]]).unwrap();
            let w = Weights::new(WeightKind::Adjacency, &g);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..g.n_cells()).map(|_| rng.random::<f64>() - 0.5).collect();
            prop_assert!(w.quad_form(&v, gamma) > 0.0);
        }

        #[test]
        fn icar_positive_on_copula_differences(seed in 0u64..5000) {
            let g = Grid::new(vec![vec![0.25, 0.5, 1.0], vec![0.4, 0.8, 1.0]]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_state(&g, 20, &mut rng);
            let b = random_state(&g, 20, &mut rng);
            let v: Vec<f64> = a.mass().iter().zip(b.mass()).map(|(x, y)| x - y).collect();
            prop_assume!(v.iter().any(|x| x.abs() > 1e-9));
            let w = Weights::new(WeightKind::Adjacency, &g);
            prop_assert!(w.quad_form(&v, 1.0) > 0.0);
        }
    }
}
