//! Grid-uniform copulas: a grid plus the probability of every cell, with
//! uniform density inside each cell.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{CellIndex, Grid};
use crate::reference::ReferenceCopula;

/// Tolerance for validating a freshly constructed copula.
pub const CONSTRUCTION_TOL: f64 = 1e-10;
/// Tolerance after long transformation chains.
pub const TRANSFORM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct GridCopula {
    grid: Grid,
    mass: Vec<f64>,
}

impl GridCopula {
    /// Builds a copula from dense masses in enumeration order, checking
    /// non-negativity, total mass and uniform margins to [`CONSTRUCTION_TOL`].
    pub fn new(grid: Grid, mass: Vec<f64>) -> Result<Self> {
        let c = GridCopula { grid, mass };
        c.validate(CONSTRUCTION_TOL)?;
        Ok(c)
    }

    pub(crate) fn from_parts(grid: Grid, mass: Vec<f64>) -> Self {
        debug_assert_eq!(grid.n_cells(), mass.len());
        GridCopula { grid, mass }
    }

    pub fn independence(grid: Grid) -> Self {
        let mass = grid.volumes();
        GridCopula { grid, mass }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn into_mass(self) -> Vec<f64> {
        self.mass
    }

    pub fn mass_at(&self, c: &CellIndex) -> Result<f64> {
        Ok(self.mass[self.grid.flat(c)?])
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.mass.len() != self.grid.n_cells() {
            return Err(Error::DimensionMismatch { expected: self.grid.n_cells(), got: self.mass.len() });
        }
        if let Some((i, m)) = self.mass.iter().enumerate().find(|(_, m)| !(**m >= 0.0 && m.is_finite())) {
            return Err(Error::InvalidCopula(format!("cell {} has mass {m}", self.grid.cell_index(i))));
        }
        let total: f64 = self.mass.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::InvalidCopula(format!("total mass {total}")));
        }
        let dev = self.marginal_deviation();
        if dev > tol {
            return Err(Error::InvalidCopula(format!("marginal deviation {dev:e}")));
        }
        Ok(())
    }

    /// Mass of each interval of `dim`, summed over all other dimensions.
    pub fn margin_masses(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.intervals(dim)];
        for (flat, m) in self.mass.iter().enumerate() {
            out[self.grid.coord(flat, dim)] += m;
        }
        out
    }

    /// Largest absolute gap between a one-dimensional margin mass and the
    /// corresponding interval width.
    pub fn marginal_deviation(&self) -> f64 {
        (0..self.grid.dims())
            .flat_map(|dim| {
                let w = self.grid.widths(dim);
                self.margin_masses(dim).into_iter().zip(w).map(|(m, w)| (m - w).abs()).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    pub fn density(&self, u: &[f64]) -> Result<f64> {
        let c = self.grid.locate(u)?;
        let flat = self.grid.flat_unchecked(&c.0);
        Ok(self.mass[flat] / self.grid.cell_volume(&c)?)
    }

    /// Density of every cell in enumeration order.
    pub fn densities(&self) -> Vec<f64> {
        self.mass.iter().zip(self.grid.volumes()).map(|(m, v)| m / v).collect()
    }

    /// Mass of the box `(0, u]`.
    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        self.grid.check_point(u)?;
        let d = self.grid.dims();
        // covered fraction of each interval up to u
        let fracs: Vec<Vec<f64>> = (0..d)
            .map(|dim| {
                let last = self.grid.locate_1d(dim, u[dim]);
                (0..=last)
                    .map(|k| {
                        let lo = self.grid.lower(dim, k);
                        let hi = self.grid.upper(dim, k);
                        if u[dim] >= hi { 1.0 } else { ((u[dim] - lo) / (hi - lo)).clamp(0.0, 1.0) }
                    })
                    .collect()
            })
            .collect();
        let mut idx = vec![0usize; d];
        let mut total = 0.0;
        'outer: loop {
            let mut w = 1.0;
            for (dim, &k) in idx.iter().enumerate() {
                w *= fracs[dim][k];
            }
            if w > 0.0 {
                total += w * self.mass[self.grid.flat_unchecked(&idx)];
            }
            for dim in (0..d).rev() {
                idx[dim] += 1;
                if idx[dim] < fracs[dim].len() {
                    continue 'outer;
                }
                idx[dim] = 0;
            }
            break;
        }
        Ok(total.clamp(0.0, 1.0))
    }

    /// CDF at every grid node, nodes enumerated like cells with `m_i + 1`
    /// points per axis.
    pub fn node_cdf(&self) -> Vec<f64> {
        let d = self.grid.dims();
        let node_dims: Vec<usize> = (0..d).map(|i| self.grid.intervals(i) + 1).collect();
        let mut strides = vec![1usize; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * node_dims[i + 1];
        }
        let mut table = vec![0.0; node_dims.iter().product()];
        let mut idx = vec![0; d];
        for (flat, &m) in self.mass.iter().enumerate() {
            self.grid.unflatten_into(flat, &mut idx);
            let n: usize = idx.iter().zip(&strides).map(|(k, s)| (k + 1) * s).sum();
            table[n] = m;
        }
        for dim in 0..d {
            for n in 0..table.len() {
                if !(n / strides[dim]).is_multiple_of(node_dims[dim]) {
                    table[n] += table[n - strides[dim]];
                }
            }
        }
        table
    }

    /// Projects a reference copula onto `grid` by inclusion–exclusion of its
    /// CDF over the corners of every cell.
    pub fn project(reference: &ReferenceCopula, grid: &Grid) -> Result<GridCopula> {
        let table = reference.node_cdf_table(grid)?;
        GridCopula::from_node_cdf(grid, &table)
    }

    /// Inclusion–exclusion over a CDF table indexed by grid nodes (see
    /// [`ReferenceCopula::node_cdf_table`]). Masses down to −1e-9 are clamped
    /// to zero and the result renormalized.
    pub fn from_node_cdf(grid: &Grid, table: &[f64]) -> Result<GridCopula> {
        let d = grid.dims();
        let node_dims: Vec<usize> = (0..d).map(|i| grid.intervals(i) + 1).collect();
        if table.len() != node_dims.iter().product::<usize>() {
            return Err(Error::DimensionMismatch { expected: node_dims.iter().product(), got: table.len() });
        }
        let mut node_strides = vec![1usize; d];
        for i in (0..d.saturating_sub(1)).rev() {
            node_strides[i] = node_strides[i + 1] * node_dims[i + 1];
        }
        let mut idx = vec![0usize; d];
        let mut mass = Vec::with_capacity(grid.n_cells());
        for flat in 0..grid.n_cells() {
            grid.unflatten_into(flat, &mut idx);
            let base: usize = idx.iter().zip(&node_strides).map(|(k, s)| k * s).sum();
            let mut m = 0.0;
            for corner in 0..(1usize << d) {
                let mut off = 0;
                let mut ones = 0;
                for i in 0..d {
                    if corner >> i & 1 == 1 {
                        off += node_strides[i];
                        ones += 1;
                    }
                }
                let sign = if (d - ones).is_multiple_of(2) { 1.0 } else { -1.0 };
                m += sign * table[base + off];
            }
            if m < -1e-9 {
                return Err(Error::Numerical(format!(
                    "reference CDF assigns mass {m:e} to cell {}",
                    grid.cell_index(flat)
                )));
            }
            mass.push(m.max(0.0));
        }
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Numerical("projected masses sum to zero".into()));
        }
        for m in &mut mass {
            *m /= total;
        }
        let c = GridCopula { grid: grid.clone(), mass };
        c.validate(TRANSFORM_TOL)?;
        Ok(c)
    }

    /// Splits the cells crossed by `new_cut` in proportion to volume.
    pub fn grid_division(&self, dim: usize, new_cut: f64) -> Result<GridCopula> {
        let fine = self.grid.refine(dim, new_cut)?;
        self.refine_to(&fine)
    }

    /// Re-expresses the copula on a finer grid that contains every cut of
    /// the current one.
    pub fn refine_to(&self, fine: &Grid) -> Result<GridCopula> {
        if !fine.refines(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let d = fine.dims();
        // per dimension: fine interval -> (coarse interval, width fraction)
        let maps: Vec<Vec<(usize, f64)>> = (0..d)
            .map(|dim| {
                (0..fine.intervals(dim))
                    .map(|k| {
                        let hi = fine.upper(dim, k);
                        let kc = self.grid.locate_1d(dim, hi);
                        (kc, fine.width(dim, k) / self.grid.width(dim, kc))
                    })
                    .collect()
            })
            .collect();
        let mut idx = vec![0usize; d];
        let mut coarse = vec![0usize; d];
        let mass = (0..fine.n_cells())
            .map(|flat| {
                fine.unflatten_into(flat, &mut idx);
                let mut w = 1.0;
                for i in 0..d {
                    let (kc, f) = maps[i][idx[i]];
                    coarse[i] = kc;
                    w *= f;
                }
                w * self.mass[self.grid.flat_unchecked(&coarse)]
            })
            .collect();
        Ok(GridCopula { grid: fine.clone(), mass })
    }

    /// `n` i.i.d. points: a cell drawn by mass, then a uniform point inside it.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let pick = WeightedIndex::new(&self.mass).map_err(|e| Error::InvalidCopula(e.to_string()))?;
        let d = self.grid.dims();
        let mut idx = vec![0usize; d];
        Ok((0..n)
            .map(|_| {
                self.grid.unflatten_into(pick.sample(rng), &mut idx);
                (0..d)
                    .map(|i| {
                        let (lo, hi) = (self.grid.lower(i, idx[i]), self.grid.upper(i, idx[i]));
                        lo + (hi - lo) * rng.random::<f64>()
                    })
                    .collect()
            })
            .collect())
    }

    /// Bivariate margin over dimensions `i < j` (zero-based).
    pub fn bivariate_margin(&self, i: usize, j: usize) -> Result<GridCopula> {
        let d = self.grid.dims();
        if i >= j || j >= d {
            return Err(Error::Index(format!("margin ({i}, {j}) invalid for d = {d}")));
        }
        let g = Grid::new(vec![self.grid.cuts(i).to_vec(), self.grid.cuts(j).to_vec()])?;
        let mj = self.grid.intervals(j);
        let mut mass = vec![0.0; g.n_cells()];
        for (flat, m) in self.mass.iter().enumerate() {
            mass[self.grid.coord(flat, i) * mj + self.grid.coord(flat, j)] += m;
        }
        Ok(GridCopula { grid: g, mass })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn checkerboard() -> GridCopula {
        GridCopula::new(Grid::uniform(2, 2).unwrap(), vec![0.5, 0.0, 0.0, 0.5]).unwrap()
    }

    #[test]
    fn density_examples() {
        let g = Grid::new(vec![vec![0.2, 1.0], vec![0.3, 0.35, 1.0]]).unwrap();
        let ind = GridCopula::independence(g);
        for u in [[0.0, 0.0], [0.1, 0.33], [1.0, 1.0], [0.5, 0.9]] {
            assert!((ind.density(&u).unwrap() - 1.0).abs() < 1e-12);
        }
        let c = checkerboard();
        assert_eq!(c.density(&[0.25, 0.25]).unwrap(), 2.0);
        assert_eq!(c.density(&[0.25, 0.75]).unwrap(), 0.0);
        assert!(c.density(&[0.25, 1.5]).is_err());
    }

    #[test]
    fn node_cdf_round_trips() {
        let g = Grid::new(vec![vec![0.25, 1.0], vec![0.5, 0.75, 1.0], vec![0.5, 1.0]]).unwrap();
        let c = GridCopula::project(&ReferenceCopula::independence(3).unwrap(), &g).unwrap();
        let t = c.node_cdf();
        assert_eq!(t.len(), 3 * 4 * 3);
        let mut n = 0;
        for &x in &[0.0, 0.25, 1.0] {
            for &y in &[0.0, 0.5, 0.75, 1.0] {
                for &z in &[0.0, 0.5, 1.0] {
                    assert!((t[n] - x * y * z).abs() < 1e-15);
                    n += 1;
                }
            }
        }
        let back = GridCopula::from_node_cdf(&g, &t).unwrap();
        for (a, b) in back.mass().iter().zip(c.mass()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn cdf_examples() {
        let c = checkerboard();
        assert_eq!(c.cdf(&[1.0, 1.0]).unwrap(), 1.0);
        assert!((c.cdf(&[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!((c.cdf(&[0.25, 0.25]).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(c.cdf(&[0.0, 0.7]).unwrap(), 0.0);
        assert!(c.cdf(&[0.2]).is_err());
    }

    #[test]
    fn validation_rejects_bad_masses() {
        let g = Grid::uniform(2, 2).unwrap();
        assert!(GridCopula::new(g.clone(), vec![0.5, 0.0, 0.0, 0.4]).is_err());
        assert!(GridCopula::new(g.clone(), vec![0.6, -0.1, -0.1, 0.6]).is_err());
        assert!(GridCopula::new(g.clone(), vec![0.5, 0.5, 0.0, 0.0]).is_err());
        assert!(GridCopula::new(g, vec![0.25; 3]).is_err());
    }

    #[test]
    fn project_clayton_example() {
        let c = GridCopula::project(&ReferenceCopula::clayton(3.0).unwrap(), &Grid::uniform(2, 2).unwrap()).unwrap();
        let corner = 15f64.powf(-1.0 / 3.0);
        let want = [corner, 0.5 - corner, 0.5 - corner, corner];
        for (m, w) in c.mass().iter().zip(want) {
            assert!((m - w).abs() < 1e-12);
        }
        assert!((c.mass()[0] - 0.405480).abs() < 1e-6);
        assert!((c.mass()[1] - 0.094520).abs() < 1e-6);
    }

    #[test]
    fn project_independence_and_identity_gaussian() {
        let g = Grid::new(vec![vec![0.1, 0.5, 1.0], vec![0.25, 0.3, 0.8, 1.0], vec![0.6, 1.0]]).unwrap();
        let ind = GridCopula::project(&ReferenceCopula::independence(3).unwrap(), &g).unwrap();
        let gau = GridCopula::project(&ReferenceCopula::gaussian(crate::reference::CorrMatrix::identity(3)), &g).unwrap();
        for ((a, b), v) in ind.mass().iter().zip(gau.mass()).zip(g.volumes()) {
            assert!((a - v).abs() < 1e-14 && (b - v).abs() < 1e-14);
        }
    }

    #[test]
    fn projections_are_valid() {
        let g = Grid::new(vec![vec![0.05, 0.2, 0.5, 0.51, 0.9, 1.0], vec![0.3, 0.6, 0.99, 1.0]]).unwrap();
        for r in [
            ReferenceCopula::gaussian2(0.95).unwrap(),
            ReferenceCopula::gaussian2(-0.7).unwrap(),
            ReferenceCopula::clayton(8.0).unwrap(),
            ReferenceCopula::gumbel(4.0).unwrap(),
            ReferenceCopula::model3(),
        ] {
            let c = GridCopula::project(&r, &g).unwrap();
            c.validate(TRANSFORM_TOL).unwrap();
            // exactness at grid nodes
            for &x in g.cuts(0) {
                for &y in g.cuts(1) {
                    assert!((c.cdf(&[x, y]).unwrap() - r.cdf(&[x, y]).unwrap()).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn defective_cdf_table_is_rejected() {
        let g = Grid::uniform(2, 2).unwrap();
        // node table of a non-2-increasing function
        let table = [0.0, 0.0, 0.0, 0.0, 0.6, 0.5, 0.0, 0.5, 1.0];
        assert!(matches!(GridCopula::from_node_cdf(&g, &table), Err(Error::Numerical(_))));
    }

    #[test]
    fn division_examples() {
        let c = checkerboard().grid_division(0, 0.25).unwrap();
        assert_eq!(c.grid().cuts(0), &[0.25, 0.5, 1.0]);
        assert_eq!(c.mass(), &[0.25, 0.0, 0.25, 0.0, 0.0, 0.5]);
        let g = Grid::uniform(2, 3).unwrap();
        let ind = GridCopula::independence(g).grid_division(1, 0.1).unwrap();
        for (m, v) in ind.mass().iter().zip(ind.grid().volumes()) {
            assert!((m - v).abs() < 1e-15);
        }
        assert!(checkerboard().grid_division(0, 0.5).is_err());
        assert!(checkerboard().grid_division(2, 0.3).is_err());
    }

    #[test]
    fn division_preserves_cdf() {
        let c = GridCopula::project(&ReferenceCopula::gumbel(2.0).unwrap(), &Grid::uniform(2, 5).unwrap()).unwrap();
        let f = c.grid_division(0, 0.33).unwrap().grid_division(1, 0.71).unwrap();
        f.validate(CONSTRUCTION_TOL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let u = [rng.random::<f64>(), rng.random::<f64>()];
            assert!((c.cdf(&u).unwrap() - f.cdf(&u).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn margin_examples() {
        let c = checkerboard();
        assert_eq!(c.bivariate_margin(0, 1).unwrap(), c);
        let ind3 = GridCopula::independence(Grid::uniform(3, 2).unwrap());
        let m = ind3.bivariate_margin(0, 2).unwrap();
        assert_eq!(m, GridCopula::independence(Grid::uniform(2, 2).unwrap()));
        let mut mass = vec![0.0; 8];
        mass[0] = 0.5;
        mass[7] = 0.5;
        let diag = GridCopula::new(Grid::uniform(3, 2).unwrap(), mass).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert_eq!(diag.bivariate_margin(i, j).unwrap(), checkerboard());
        }
        assert!(diag.bivariate_margin(1, 1).is_err());
        assert!(diag.bivariate_margin(2, 1).is_err());
        assert!(diag.bivariate_margin(0, 3).is_err());
    }

    fn random_copula(g: &Grid, rng: &mut ChaCha8Rng, moves: usize) -> GridCopula {
        let mut c = GridCopula::independence(g.clone());
        for _ in 0..moves {
            let p = crate::exchange::random_exchange(&c, rng).unwrap();
            crate::exchange::apply_in_place(&mut c.mass, &p);
        }
        c
    }

    proptest! {
        #[test]
        fn margin_commutes_with_division(seed in 0u64..1000, cut in 0.01f64..0.99) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::new(vec![vec![0.3, 1.0], vec![0.5, 0.75, 1.0], vec![0.2, 0.6, 1.0]]).unwrap();
            let c = random_copula(&g, &mut rng, 50);
            prop_assume!(g.cuts(2).iter().all(|&x| (x - cut).abs() > 1e-9));
            let a = c.grid_division(2, cut).unwrap().bivariate_margin(0, 1).unwrap();
            let b = c.bivariate_margin(0, 1).unwrap();
            for (x, y) in a.mass().iter().zip(b.mass()) {
                prop_assert!((x - y).abs() < 1e-14);
            }
        }

        #[test]
        fn margins_of_valid_copulas_are_valid(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::new(vec![vec![0.3, 1.0], vec![0.5, 0.75, 1.0], vec![0.2, 0.6, 1.0]]).unwrap();
            let c = random_copula(&g, &mut rng, 100);
            c.validate(CONSTRUCTION_TOL).unwrap();
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                prop_assert!(c.bivariate_margin(i, j).unwrap().validate(CONSTRUCTION_TOL).is_ok());
            }
        }

        #[test]
        fn cdf_exact_at_nodes(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::new(vec![vec![0.1, 0.4, 1.0], vec![0.5, 0.75, 1.0]]).unwrap();
            let c = random_copula(&g, &mut rng, 40);
            for (k, &x) in g.cuts(0).iter().enumerate() {
                for (l, &y) in g.cuts(1).iter().enumerate() {
                    let mut want = 0.0;
                    for a in 0..=k {
                        for b in 0..=l {
                            want += c.mass()[a * 3 + b];
                        }
                    }
                    prop_assert!((c.cdf(&[x, y]).unwrap() - want).abs() < 1e-14);
                }
            }
        }

        #[test]
        fn projection_of_gaussian_is_valid(rho in -0.99f64..0.99, m in 2usize..30) {
            let c = GridCopula::project(&ReferenceCopula::gaussian2(rho).unwrap(), &Grid::uniform(2, m).unwrap()).unwrap();
            prop_assert!(c.validate(TRANSFORM_TOL).is_ok());
        }
    }
}
