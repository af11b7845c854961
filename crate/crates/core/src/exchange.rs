//! Rectangle exchanges: moving mass `ε` around the four corners of a
//! rectangle in a two-dimensional slice of the grid, which keeps every
//! one-dimensional margin intact.

use rand::Rng;

use crate::copula::GridCopula;
use crate::error::{Error, Result};
use crate::grid::{CellIndex, Grid};

/// Four cells in a 2-d slice spanned by `dim_i < dim_j`, the other
/// coordinates held fixed.
///
/// The cells are stored as flat indices in the order
/// `(a1,b1), (a1,b2), (a2,b1), (a2,b2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExchangeSite {
    dim_i: usize,
    dim_j: usize,
    a: (usize, usize),
    b: (usize, usize),
    base: usize,
    cells: [usize; 4],
}

impl ExchangeSite {
    /// `fixed` supplies the coordinates of every dimension other than
    /// `dim_i` and `dim_j`; its entries at those two positions are ignored.
    pub fn new(
        grid: &Grid,
        dim_i: usize,
        dim_j: usize,
        fixed: &CellIndex,
        (a1, a2): (usize, usize),
        (b1, b2): (usize, usize),
    ) -> Result<Self> {
        let d = grid.dims();
        if dim_i >= dim_j || dim_j >= d {
            return Err(Error::Index(format!("dimension pair ({dim_i}, {dim_j}) invalid for d = {d}")));
        }
        if fixed.0.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: fixed.0.len() });
        }
        if a1 == a2 || b1 == b2 {
            return Err(Error::Index("exchange site needs distinct indices".into()));
        }
        let (mi, mj) = (grid.intervals(dim_i), grid.intervals(dim_j));
        if a1.max(a2) >= mi || b1.max(b2) >= mj {
            return Err(Error::Index(format!("exchange indices out of range ({mi} x {mj} slice)")));
        }
        let mut idx = fixed.0.clone();
        idx[dim_i] = 0;
        idx[dim_j] = 0;
        grid.check_index(&CellIndex(idx.clone()))?;
        let base = grid.flat_unchecked(&idx);
        Ok(Self::from_base(grid, dim_i, dim_j, base, (a1, a2), (b1, b2)))
    }

    fn from_base(grid: &Grid, dim_i: usize, dim_j: usize, base: usize, a: (usize, usize), b: (usize, usize)) -> Self {
        let (si, sj) = (grid.strides()[dim_i], grid.strides()[dim_j]);
        let cell = |x: usize, y: usize| base + x * si + y * sj;
        ExchangeSite { dim_i, dim_j, a, b, base, cells: [cell(a.0, b.0), cell(a.0, b.1), cell(a.1, b.0), cell(a.1, b.1)] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim_i, self.dim_j)
    }

    pub fn a(&self) -> (usize, usize) {
        self.a
    }

    pub fn b(&self) -> (usize, usize) {
        self.b
    }

    /// Flat cell indices `(a1,b1), (a1,b2), (a2,b1), (a2,b2)`.
    pub fn cells(&self) -> [usize; 4] {
        self.cells
    }

    /// Coordinates of the fixed dimensions, zero at `dim_i` and `dim_j`.
    pub fn fixed_coords(&self, grid: &Grid) -> CellIndex {
        grid.cell_index(self.base)
    }

    /// Valid range of `ε` given the current masses.
    pub fn interval(&self, mass: &[f64]) -> (f64, f64) {
        let [c11, c12, c21, c22] = self.cells;
        ((-mass[c12]).max(-mass[c21]), mass[c11].min(mass[c22]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExchangeProposal {
    pub site: ExchangeSite,
    pub epsilon: f64,
}

impl ExchangeProposal {
    pub fn negated(&self) -> Self {
        ExchangeProposal { site: self.site, epsilon: -self.epsilon }
    }
}

fn check_site(c: &GridCopula, s: &ExchangeSite) -> Result<()> {
    let n = c.grid().n_cells();
    if s.dim_j >= c.grid().dims() || s.cells.iter().any(|&k| k >= n) {
        return Err(Error::Index("exchange site does not fit the copula's grid".into()));
    }
    Ok(())
}

pub fn epsilon_interval(c: &GridCopula, s: &ExchangeSite) -> Result<(f64, f64)> {
    check_site(c, s)?;
    Ok(s.interval(c.mass()))
}

/// Applies the exchange, returning a new copula.
pub fn apply_exchange(c: &GridCopula, p: &ExchangeProposal) -> Result<GridCopula> {
    let (lo, hi) = epsilon_interval(c, &p.site)?;
    if !(p.epsilon >= lo && p.epsilon <= hi) {
        return Err(Error::EpsilonOutOfRange { epsilon: p.epsilon, lo, hi });
    }
    let mut mass = c.mass().to_vec();
    apply_in_place(&mut mass, p);
    Ok(GridCopula::from_parts(c.grid().clone(), mass))
}

/// Shifts the four masses by `(−ε, +ε, +ε, −ε)` without checks.
#[inline]
pub fn apply_in_place(mass: &mut [f64], p: &ExchangeProposal) {
    let [c11, c12, c21, c22] = p.site.cells;
    let e = p.epsilon;
    mass[c11] -= e;
    mass[c12] += e;
    mass[c21] += e;
    mass[c22] -= e;
}

/// Draws a site with independent uniform choices, then `ε` uniform on the
/// valid interval.
#[derive(Clone, Debug)]
pub struct SiteSampler {
    grid: Grid,
    /// pairs of dimensions that both have at least two intervals
    pairs: Vec<(usize, usize)>,
}

impl SiteSampler {
    pub fn new(grid: &Grid) -> Result<Self> {
        let ok: Vec<usize> = (0..grid.dims()).filter(|&i| grid.intervals(i) >= 2).collect();
        let mut pairs = Vec::new();
        for (x, &i) in ok.iter().enumerate() {
            for &j in &ok[x + 1..] {
                pairs.push((i, j));
            }
        }
        if pairs.is_empty() {
            return Err(Error::DegenerateGrid);
        }
        Ok(SiteSampler { grid: grid.clone(), pairs })
    }

    pub fn site<R: Rng + ?Sized>(&self, rng: &mut R) -> ExchangeSite {
        let g = &self.grid;
        let (i, j) = self.pairs[rng.random_range(0..self.pairs.len())];
        let mut base = 0;
        for dim in 0..g.dims() {
            if dim != i && dim != j {
                base += rng.random_range(0..g.intervals(dim)) * g.strides()[dim];
            }
        }
        let a = unordered_pair(g.intervals(i), rng);
        let b = unordered_pair(g.intervals(j), rng);
        ExchangeSite::from_base(g, i, j, base, a, b)
    }

    pub fn propose<R: Rng + ?Sized>(&self, mass: &[f64], rng: &mut R) -> ExchangeProposal {
        let site = self.site(rng);
        let (lo, hi) = site.interval(mass);
        let u: f64 = rng.random();
        let epsilon = (lo + (hi - lo) * u).clamp(lo, hi);
        ExchangeProposal { site, epsilon }
    }
}

/// Uniform unordered pair of distinct indices below `m`, returned ascending.
fn unordered_pair<R: Rng + ?Sized>(m: usize, rng: &mut R) -> (usize, usize) {
    let x = rng.random_range(0..m);
    let mut y = rng.random_range(0..m - 1);
    if y >= x {
        y += 1;
    }
    (x.min(y), x.max(y))
}

/// One random rectangle exchange for `c`.
pub fn random_exchange<R: Rng + ?Sized>(c: &GridCopula, rng: &mut R) -> Result<ExchangeProposal> {
    Ok(SiteSampler::new(c.grid())?.propose(c.mass(), rng))
}

/// A finite list of exchanges taking `c` to `target` (bivariate copulas on a
/// shared grid). Columns are matched one at a time, left to right, moving
/// excess mass into later columns.
pub fn exchange_sequence_to(c: &GridCopula, target: &GridCopula) -> Result<Vec<ExchangeProposal>> {
    if c.grid() != target.grid() {
        return Err(Error::GridMismatch);
    }
    let g = c.grid();
    if g.dims() != 2 {
        return Err(Error::Unsupported("exchange sequences are only constructed for d = 2".into()));
    }
    const TOL: f64 = 1e-14;
    let (rows, cols) = (g.intervals(0), g.intervals(1));
    let at = |k: usize, l: usize| k * cols + l;
    let mut w = c.mass().to_vec();
    let t = target.mass();
    let mut out = Vec::new();
    let cap = 4 * g.n_cells() * cols + 16;
    for l in 0..cols.saturating_sub(1) {
        loop {
            let diff = |w: &[f64], k: usize| w[at(k, l)] - t[at(k, l)];
            let alpha = (0..rows).max_by(|&x, &y| diff(&w, x).total_cmp(&diff(&w, y))).unwrap();
            let beta = (0..rows).min_by(|&x, &y| diff(&w, x).total_cmp(&diff(&w, y))).unwrap();
            let (excess, deficit) = (diff(&w, alpha), -diff(&w, beta));
            if excess <= TOL && deficit <= TOL {
                break;
            }
            if out.len() >= cap {
                return Err(Error::Numerical("exchange sequence did not converge".into()));
            }
            let partner = (l + 1..cols).max_by(|&x, &y| w[at(beta, x)].total_cmp(&w[at(beta, y)])).unwrap();
            let eps = excess.min(deficit).min(w[at(beta, partner)]);
            if !(eps > 0.0) {
                return Err(Error::Numerical("exchange sequence stalled".into()));
            }
            // −ε at (α,l) and (β,partner), +ε at (α,partner) and (β,l)
            let site = ExchangeSite::from_base(g, 0, 1, 0, (alpha, beta), (l, partner));
            let p = ExchangeProposal { site, epsilon: eps.min(site.interval(&w).1) };
            apply_in_place(&mut w, &p);
            out.push(p);
        }
    }
    Ok(out)
}
