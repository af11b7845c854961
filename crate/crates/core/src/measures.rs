//! Dependence and discrepancy functionals of grid-uniform copulas.

use crate::copula::GridCopula;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::reference::ReferenceCopula;

fn require_2d(c: &GridCopula) -> Result<()> {
    if c.grid().dims() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: c.grid().dims() });
    }
    Ok(())
}

/// Spearman's rho, `3 Σ (a_k² − a_{k−1}²)(b_l² − b_{l−1}²) c_kl − 3`.
pub fn spearman_rho(c: &GridCopula) -> Result<f64> {
    require_2d(c)?;
    let g = c.grid();
    let (rows, cols) = (g.intervals(0), g.intervals(1));
    let sq = |dim: usize, k: usize| g.upper(dim, k).powi(2) - g.lower(dim, k).powi(2);
    let mut s = 0.0;
    for k in 0..rows {
        let wa = sq(0, k);
        let width = g.width(0, k);
        for l in 0..cols {
            let density = c.mass()[k * cols + l] / (width * g.width(1, l));
            s += wa * sq(1, l) * density;
        }
    }
    Ok((3.0 * s - 3.0).clamp(-1.0, 1.0))
}

/// Kendall's tau, `4 ∫∫ C c − 1`, integrated exactly cell by cell.
///
/// Inside cell `(k, l)` with lower corner `(a, b)` the CDF is bilinear:
/// `C(a, b) + P (u − a) + Q (v − b) + c (u − a)(v − b)` where `P` is the
/// density-times-height mass flux of the cells below in the same column and
/// `Q` the flux of the cells to the left in the same row.
pub fn kendall_tau(c: &GridCopula) -> Result<f64> {
    require_2d(c)?;
    let g = c.grid();
    let (rows, cols) = (g.intervals(0), g.intervals(1));
    let w: Vec<f64> = g.widths(0);
    let h: Vec<f64> = g.widths(1);
    let m = c.mass();
    // cdf at lower-left corners, built row by row
    let mut corner = vec![0.0; (rows + 1) * (cols + 1)];
    for k in 0..rows {
        for l in 0..cols {
            corner[(k + 1) * (cols + 1) + l + 1] = corner[k * (cols + 1) + l + 1] + corner[(k + 1) * (cols + 1) + l]
                - corner[k * (cols + 1) + l]
                + m[k * cols + l];
        }
    }
    let mut total = 0.0;
    let mut q = vec![0.0; cols]; // Σ over cells left in the same row of density × width
    for k in 0..rows {
        let mut p = 0.0; // Σ over cells below in the same column of density × height
        for l in 0..cols {
            let dens = m[k * cols + l] / (w[k] * h[l]);
            let c00 = corner[k * (cols + 1) + l];
            let (wk, hl) = (w[k], h[l]);
            total +=
                dens * (c00 * wk * hl + p * wk * wk * hl / 2.0 + q[l] * wk * hl * hl / 2.0 + dens * wk * wk * hl * hl / 4.0);
            p += dens * hl;
            q[l] += dens * wk;
        }
    }
    Ok((4.0 * total - 1.0).clamp(-1.0, 1.0))
}

/// Both copulas expressed on the common refinement of their grids.
fn on_common_grid(c1: &GridCopula, c2: &GridCopula) -> Result<(GridCopula, GridCopula)> {
    if c1.grid().dims() != c2.grid().dims() {
        return Err(Error::DimensionMismatch { expected: c1.grid().dims(), got: c2.grid().dims() });
    }
    if c1.grid() == c2.grid() {
        return Ok((c1.clone(), c2.clone()));
    }
    let g = c1.grid().common_refinement(c2.grid())?;
    Ok((c1.refine_to(&g)?, c2.refine_to(&g)?))
}

/// Hellinger distance `√(1 − ∫ √(c1 c2))`.
pub fn hellinger(c1: &GridCopula, c2: &GridCopula) -> Result<f64> {
    let (a, b) = on_common_grid(c1, c2)?;
    let bc: f64 = a.mass().iter().zip(b.mass()).map(|(x, y)| (x * y).sqrt()).sum();
    Ok((1.0 - bc).max(0.0).sqrt())
}

/// `∫ (c1 − c2)²`.
pub fn integrated_squared_error(c1: &GridCopula, c2: &GridCopula) -> Result<f64> {
    let (a, b) = on_common_grid(c1, c2)?;
    Ok(a.mass().iter().zip(b.mass()).zip(a.grid().volumes()).map(|((x, y), v)| (x - y).powi(2) / v).sum())
}

/// `∫ (C1 − C2)²` between the copula functions themselves. Both CDFs are
/// multilinear inside every cell of the common refinement, so the integral
/// is exact.
pub fn cdf_squared_error(c1: &GridCopula, c2: &GridCopula) -> Result<f64> {
    let (a, b) = on_common_grid(c1, c2)?;
    let g = a.grid();
    let d = g.dims();
    let diff: Vec<f64> = a.node_cdf().iter().zip(b.node_cdf()).map(|(x, y)| x - y).collect();
    let node_dims: Vec<usize> = (0..d).map(|i| g.intervals(i) + 1).collect();
    let mut strides = vec![1usize; d];
    for i in (0..d - 1).rev() {
        strides[i] = strides[i + 1] * node_dims[i + 1];
    }
    let corners = 1usize << d;
    let offsets: Vec<usize> =
        (0..corners).map(|s| (0..d).filter(|i| s >> i & 1 == 1).map(|i| strides[i]).sum()).collect();
    // ∫ of a product of two 1-d hat functions over the unit interval
    let gram: Vec<f64> = (0..corners * corners)
        .map(|st| {
            let (s, t) = (st / corners, st % corners);
            (0..d).map(|i| if (s >> i & 1) == (t >> i & 1) { 1.0 / 3.0 } else { 1.0 / 6.0 }).product()
        })
        .collect();
    let vols = g.volumes();
    let mut idx = vec![0; d];
    let mut f = vec![0.0; corners];
    let mut total = 0.0;
    for (cell, v) in vols.iter().enumerate() {
        g.unflatten_into(cell, &mut idx);
        let base: usize = idx.iter().zip(&strides).map(|(k, s)| k * s).sum();
        for (fs, off) in f.iter_mut().zip(&offsets) {
            *fs = diff[base + off];
        }
        let mut q = 0.0;
        for s in 0..corners {
            for t in 0..corners {
                q += f[s] * f[t] * gram[s * corners + t];
            }
        }
        total += v * q;
    }
    Ok(total.max(0.0))
}

/// Hellinger distance to a continuous reference copula, projected onto the
/// grid of `c` with every interval split into `factor` parts.
pub fn hellinger_to_reference(c: &GridCopula, reference: &ReferenceCopula, factor: usize) -> Result<f64> {
    let target = GridCopula::project(reference, &c.grid().subdivide(factor)?)?;
    hellinger(c, &target)
}

pub fn ise_to_reference(c: &GridCopula, reference: &ReferenceCopula, factor: usize) -> Result<f64> {
    let target = GridCopula::project(reference, &c.grid().subdivide(factor)?)?;
    integrated_squared_error(c, &target)
}

/// Precomputed Hellinger and ISE against a fixed copula on a refinement of a
/// coarse grid, each evaluated in one pass over the coarse cells.
#[derive(Clone, Debug)]
pub struct RefinedTarget {
    coarse: Grid,
    root_sum: Vec<f64>,
    mass_sum: Vec<f64>,
    inv_vol: Vec<f64>,
    self_term: f64,
}

impl RefinedTarget {
    /// `target` must live on a grid that refines `coarse`.
    pub fn new(coarse: &Grid, target: &GridCopula) -> Result<Self> {
        let fine = target.grid();
        if !fine.refines(coarse) {
            return Err(Error::GridMismatch);
        }
        let n = coarse.n_cells();
        let cvol = coarse.volumes();
        let fvol = fine.volumes();
        let mut root_sum = vec![0.0; n];
        let mut mass_sum = vec![0.0; n];
        let mut self_term = 0.0;
        let d = fine.dims();
        let maps: Vec<Vec<usize>> =
            (0..d).map(|i| (0..fine.intervals(i)).map(|k| coarse.locate_1d(i, fine.upper(i, k))).collect()).collect();
        let mut idx = vec![0; d];
        for (f, &r) in target.mass().iter().enumerate() {
            fine.unflatten_into(f, &mut idx);
            let c: usize = (0..d).map(|i| maps[i][idx[i]] * coarse.strides()[i]).sum();
            root_sum[c] += (r * fvol[f] / cvol[c]).sqrt();
            mass_sum[c] += r;
            self_term += r * r / fvol[f];
        }
        Ok(RefinedTarget { coarse: coarse.clone(), root_sum, mass_sum, inv_vol: cvol.iter().map(|v| 1.0 / v).collect(), self_term })
    }

    pub fn grid(&self) -> &Grid {
        &self.coarse
    }

    pub fn hellinger(&self, mass: &[f64]) -> f64 {
        let bc: f64 = mass.iter().zip(&self.root_sum).map(|(m, s)| m.sqrt() * s).sum();
        (1.0 - bc).max(0.0).sqrt()
    }

    pub fn ise(&self, mass: &[f64]) -> f64 {
        let s: f64 = mass
            .iter()
            .zip(&self.mass_sum)
            .zip(&self.inv_vol)
            .map(|((m, r), iv)| (m * m - 2.0 * m * r) * iv)
            .sum();
        (s + self.self_term).max(0.0)
    }
}
