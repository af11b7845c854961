//! Orthogonal grids on the unit hypercube.
//!
//! A [`Grid`] stores, for every dimension, the strictly increasing upper
//! boundaries of its intervals. The implicit lower boundary 0 is not stored
//! and the last boundary is always exactly 1. Cells are half-open boxes
//! `(lo, hi]`, except that a coordinate equal to 0 belongs to the first
//! interval, which makes [`Grid::locate`] total on `[0, 1]^d`.
//!
//! Dimensions and interval indices are zero-based. Cells are enumerated
//! lexicographically with the first dimension varying slowest; this order is
//! the layout of every dense mass vector in the crate.

use std::fmt;

use crate::error::{Error, Result};

/// Zero-based interval index for every dimension of a grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex(pub Vec<usize>);

impl CellIndex {
    pub fn new(idx: impl Into<Vec<usize>>) -> Self {
        CellIndex(idx.into())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for CellIndex {
    fn from(v: Vec<usize>) -> Self {
        CellIndex(v)
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    cuts: Vec<Vec<f64>>,
    strides: Vec<usize>,
    n_cells: usize,
}

impl Grid {
    /// Validates per-dimension cut sequences and builds the grid.
    ///
    /// Every sequence must be non-empty, strictly increasing, lie in `(0, 1]`
    /// and end in exactly `1.0`. At least two dimensions are required.
    pub fn new(cuts: Vec<Vec<f64>>) -> Result<Self> {
        if cuts.len() < 2 {
            return Err(Error::validation(cuts.len(), "a grid needs at least two dimensions"));
        }
        for (dim, c) in cuts.iter().enumerate() {
            validate_cuts(dim, c)?;
        }
        let mut strides = vec![1usize; cuts.len()];
        for i in (0..cuts.len() - 1).rev() {
            strides[i] = strides[i + 1] * cuts[i + 1].len();
        }
        let n_cells = strides[0] * cuts[0].len();
        Ok(Grid { cuts, strides, n_cells })
    }

    /// Evenly spaced grid with `m` intervals in each of `d` dimensions.
    pub fn uniform(d: usize, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::validation(0, "interval count must be positive"));
        }
        Grid::new(vec![uniform_cuts(m); d])
    }

    pub fn dims(&self) -> usize {
        self.cuts.len()
    }

    /// Number of intervals along `dim`.
    pub fn intervals(&self, dim: usize) -> usize {
        self.cuts[dim].len()
    }

    pub fn cuts(&self, dim: usize) -> &[f64] {
        &self.cuts[dim]
    }

    pub fn all_cuts(&self) -> &[Vec<f64>] {
        &self.cuts
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn lower(&self, dim: usize, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.cuts[dim][k - 1]
        }
    }

    pub fn upper(&self, dim: usize, k: usize) -> f64 {
        self.cuts[dim][k]
    }

    pub fn width(&self, dim: usize, k: usize) -> f64 {
        self.upper(dim, k) - self.lower(dim, k)
    }

    /// Interval widths along `dim`.
    pub fn widths(&self, dim: usize) -> Vec<f64> {
        (0..self.intervals(dim)).map(|k| self.width(dim, k)).collect()
    }

    pub fn check_index(&self, c: &CellIndex) -> Result<()> {
        if c.0.len() != self.dims() {
            return Err(Error::Index(format!(
                "cell index {c} has {} components, grid has {} dimensions",
                c.0.len(),
                self.dims()
            )));
        }
        for (dim, &k) in c.0.iter().enumerate() {
            if k >= self.intervals(dim) {
                return Err(Error::Index(format!(
                    "component {k} of {c} out of range for dimension {dim} ({} intervals)",
                    self.intervals(dim)
                )));
            }
        }
        Ok(())
    }

    /// Position of a cell in the enumeration order.
    pub fn flat(&self, c: &CellIndex) -> Result<usize> {
        self.check_index(c)?;
        Ok(self.flat_unchecked(&c.0))
    }

    pub(crate) fn flat_unchecked(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    pub fn cell_index(&self, flat: usize) -> CellIndex {
        let mut idx = vec![0; self.dims()];
        self.unflatten_into(flat, &mut idx);
        CellIndex(idx)
    }

    pub(crate) fn unflatten_into(&self, mut flat: usize, idx: &mut [usize]) {
        for (i, s) in self.strides.iter().enumerate() {
            idx[i] = flat / s;
            flat %= s;
        }
    }

    /// Interval index of cell `flat` along `dim`.
    pub(crate) fn coord(&self, flat: usize, dim: usize) -> usize {
        (flat / self.strides[dim]) % self.cuts[dim].len()
    }

    pub fn cell_volume(&self, c: &CellIndex) -> Result<f64> {
        self.check_index(c)?;
        Ok(c.0.iter().enumerate().map(|(dim, &k)| self.width(dim, k)).product())
    }

    /// Volumes of all cells in enumeration order.
    pub fn volumes(&self) -> Vec<f64> {
        let widths: Vec<Vec<f64>> = (0..self.dims()).map(|d| self.widths(d)).collect();
        let mut out = vec![1.0; self.n_cells];
        for (flat, v) in out.iter_mut().enumerate() {
            for (dim, w) in widths.iter().enumerate() {
                *v *= w[self.coord(flat, dim)];
            }
        }
        out
    }

    /// Cells differing from `c` by one step in exactly one coordinate.
    pub fn neighbors(&self, c: &CellIndex) -> Result<Vec<CellIndex>> {
        self.check_index(c)?;
        let mut out = Vec::with_capacity(2 * self.dims());
        for dim in 0..self.dims() {
            let k = c.0[dim];
            if k > 0 {
                let mut n = c.clone();
                n.0[dim] -= 1;
                out.push(n);
            }
            if k + 1 < self.intervals(dim) {
                let mut n = c.clone();
                n.0[dim] += 1;
                out.push(n);
            }
        }
        Ok(out)
    }

    /// Flat indices of the von Neumann neighbors of cell `flat`.
    pub fn neighbors_flat(&self, flat: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.dims());
        for dim in 0..self.dims() {
            let k = self.coord(flat, dim);
            let s = self.strides[dim];
            if k > 0 {
                out.push(flat - s);
            }
            if k + 1 < self.intervals(dim) {
                out.push(flat + s);
            }
        }
        out
    }

    /// Interval containing `x` along `dim`; `x` must lie in `[0, 1]`.
    pub(crate) fn locate_1d(&self, dim: usize, x: f64) -> usize {
        let cuts = &self.cuts[dim];
        cuts.partition_point(|&c| c < x).min(cuts.len() - 1)
    }

    /// The unique cell whose box contains `u`.
    pub fn locate(&self, u: &[f64]) -> Result<CellIndex> {
        self.check_point(u)?;
        Ok(CellIndex(u.iter().enumerate().map(|(dim, &x)| self.locate_1d(dim, x)).collect()))
    }

    pub fn locate_flat(&self, u: &[f64]) -> Result<usize> {
        self.check_point(u)?;
        Ok(u.iter().enumerate().map(|(dim, &x)| self.locate_1d(dim, x) * self.strides[dim]).sum())
    }

    pub(crate) fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), got: u.len() });
        }
        if let Some((i, x)) = u.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Domain(format!("coordinate {i} = {x} outside [0, 1]")));
        }
        Ok(())
    }

    /// Adds one cut along `dim`.
    pub fn refine(&self, dim: usize, new_cut: f64) -> Result<Grid> {
        if dim >= self.dims() {
            return Err(Error::Index(format!("dimension {dim} out of range")));
        }
        if !(new_cut > 0.0 && new_cut < 1.0) {
            return Err(Error::validation(dim, format!("cut {new_cut} outside (0, 1)")));
        }
        let pos = self.cuts[dim].partition_point(|&c| c < new_cut);
        if self.cuts[dim][pos] == new_cut {
            return Err(Error::validation(dim, format!("cut {new_cut} already present")));
        }
        let mut cuts = self.cuts.clone();
        cuts[dim].insert(pos, new_cut);
        Grid::new(cuts)
    }

    /// Per-dimension union of the cut sets of two grids.
    pub fn common_refinement(&self, other: &Grid) -> Result<Grid> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), got: other.dims() });
        }
        let cuts = self
            .cuts
            .iter()
            .zip(&other.cuts)
            .map(|(a, b)| {
                let mut merged: Vec<f64> = a.iter().chain(b).copied().collect();
                merged.sort_by(f64::total_cmp);
                merged.dedup();
                merged
            })
            .collect();
        Grid::new(cuts)
    }

    /// True when every cut of `coarse` is also a cut of `self`.
    pub fn refines(&self, coarse: &Grid) -> bool {
        self.dims() == coarse.dims()
            && self
                .cuts
                .iter()
                .zip(&coarse.cuts)
                .all(|(fine, c)| c.iter().all(|x| fine.binary_search_by(|y| y.total_cmp(x)).is_ok()))
    }

    /// Splits every interval into `factor` equal parts.
    pub fn subdivide(&self, factor: usize) -> Result<Grid> {
        if factor == 0 {
            return Err(Error::validation(0, "subdivision factor must be positive"));
        }
        let cuts = (0..self.dims())
            .map(|dim| {
                let mut out = Vec::with_capacity(self.intervals(dim) * factor);
                for k in 0..self.intervals(dim) {
                    let (lo, hi) = (self.lower(dim, k), self.upper(dim, k));
                    for s in 1..factor {
                        out.push(lo + (hi - lo) * s as f64 / factor as f64);
                    }
                    out.push(hi);
                }
                out
            })
            .collect();
        Grid::new(cuts)
    }

    /// Midpoint of every interval along `dim`.
    pub fn centers(&self, dim: usize) -> Vec<f64> {
        (0..self.intervals(dim)).map(|k| 0.5 * (self.lower(dim, k) + self.upper(dim, k))).collect()
    }
}

/// `(1/m, 2/m, ..., 1)` with the last value exactly 1.
pub fn uniform_cuts(m: usize) -> Vec<f64> {
    (1..=m).map(|k| if k == m { 1.0 } else { k as f64 / m as f64 }).collect()
}

fn validate_cuts(dim: usize, c: &[f64]) -> Result<()> {
    if c.is_empty() {
        return Err(Error::validation(dim, "cut sequence is empty"));
    }
    if let Some(x) = c.iter().find(|x| !(x.is_finite() && **x > 0.0 && **x <= 1.0)) {
        return Err(Error::validation(dim, format!("cut {x} outside (0, 1]")));
    }
    for w in c.windows(2) {
        if w[1] == w[0] {
            return Err(Error::validation(dim, format!("duplicate cut {}", w[0])));
        }
        if w[1] < w[0] {
            return Err(Error::validation(dim, format!("cuts not increasing ({} then {})", w[0], w[1])));
        }
    }
    if *c.last().unwrap() != 1.0 {
        return Err(Error::validation(dim, "last cut must be exactly 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ci(v: &[usize]) -> CellIndex {
        CellIndex(v.to_vec())
    }

    #[test]
    fn build_examples() {
        let g = Grid::new(vec![vec![0.5, 1.0], vec![0.5, 1.0]]).unwrap();
        assert_eq!(g.n_cells(), 4);
        let g = Grid::new(vec![vec![1.0], vec![0.5, 1.0]]).unwrap();
        assert_eq!(g.n_cells(), 2);
        let err = Grid::new(vec![vec![0.5, 0.5, 1.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::Validation { dim: 0, .. }), "{err}");
    }

    #[test]
    fn build_rejects_bad_cuts() {
        assert!(Grid::new(vec![vec![0.6, 0.5, 1.0], vec![1.0]]).is_err());
        assert!(Grid::new(vec![vec![0.5], vec![1.0]]).is_err());
        assert!(Grid::new(vec![vec![0.0, 1.0], vec![1.0]]).is_err());
        assert!(Grid::new(vec![vec![0.5, 1.5], vec![1.0]]).is_err());
        assert!(Grid::new(vec![vec![], vec![1.0]]).is_err());
        assert!(Grid::new(vec![vec![1.0]]).is_err());
        assert!(matches!(
            Grid::new(vec![vec![1.0], vec![0.5, f64::NAN, 1.0]]),
            Err(Error::Validation { dim: 1, .. })
        ));
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(Grid::uniform(2, 50).unwrap().n_cells(), 2500);
        assert_eq!(Grid::uniform(2, 6).unwrap().n_cells(), 36);
        assert_eq!(Grid::uniform(2, 1).unwrap().n_cells(), 1);
        assert!(Grid::uniform(2, 0).is_err());
        assert!(Grid::uniform(0, 3).is_err());
        let g = Grid::uniform(3, 7).unwrap();
        assert_eq!(*g.cuts(2).last().unwrap(), 1.0);
    }

    #[test]
    fn volumes() {
        let g = Grid::uniform(2, 2).unwrap();
        assert_eq!(g.cell_volume(&ci(&[1, 0])).unwrap(), 0.25);
        let g = Grid::new(vec![vec![0.25, 1.0], vec![0.5, 1.0]]).unwrap();
        assert_eq!(g.cell_volume(&ci(&[0, 0])).unwrap(), 0.125);
        assert!(matches!(g.cell_volume(&ci(&[2, 0])), Err(Error::Index(_))));
        assert!(matches!(g.cell_volume(&ci(&[0])), Err(Error::Index(_))));
    }

    #[test]
    fn neighbor_examples() {
        let g = Grid::uniform(2, 3).unwrap();
        let mut n = g.neighbors(&ci(&[1, 1])).unwrap();
        n.sort();
        assert_eq!(n, vec![ci(&[0, 1]), ci(&[1, 0]), ci(&[1, 2]), ci(&[2, 1])]);
        let mut n = g.neighbors(&ci(&[0, 0])).unwrap();
        n.sort();
        assert_eq!(n, vec![ci(&[0, 1]), ci(&[1, 0])]);
        let g = Grid::uniform(3, 2).unwrap();
        assert_eq!(g.neighbors(&ci(&[0, 0, 0])).unwrap().len(), 3);
        assert!(g.neighbors(&ci(&[0, 0, 2])).is_err());
    }

    #[test]
    fn neighbors_flat_agrees() {
        let g = Grid::new(vec![vec![0.2, 1.0], vec![0.1, 0.5, 1.0], vec![0.3, 0.6, 0.9, 1.0]]).unwrap();
        for flat in 0..g.n_cells() {
            let mut a: Vec<usize> = g
                .neighbors(&g.cell_index(flat))
                .unwrap()
                .iter()
                .map(|c| g.flat(c).unwrap())
                .collect();
            let mut b = g.neighbors_flat(flat);
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn locate_examples() {
        let g = Grid::uniform(2, 2).unwrap();
        assert_eq!(g.locate(&[0.25, 0.75]).unwrap(), ci(&[0, 1]));
        assert_eq!(g.locate(&[0.5, 0.5]).unwrap(), ci(&[0, 0]));
        assert_eq!(g.locate(&[0.0, 1.0]).unwrap(), ci(&[0, 1]));
        assert!(matches!(g.locate(&[1.1, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(g.locate(&[-0.0001, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(g.locate(&[0.5]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn refine_examples() {
        let g = Grid::uniform(2, 2).unwrap();
        let r = g.refine(0, 0.25).unwrap();
        assert_eq!(r.all_cuts(), &[vec![0.25, 0.5, 1.0], vec![0.5, 1.0]]);
        let a = g.refine(0, 0.25).unwrap().refine(1, 0.75).unwrap();
        let b = g.refine(1, 0.75).unwrap().refine(0, 0.25).unwrap();
        assert_eq!(a, b);
        assert!(matches!(g.refine(0, 0.5), Err(Error::Validation { .. })));
        assert!(g.refine(0, 1.0).is_err());
        assert!(g.refine(0, 0.0).is_err());
        assert!(g.refine(5, 0.3).is_err());
    }

    #[test]
    fn common_refinement_examples() {
        let g2 = Grid::uniform(2, 2).unwrap();
        let g3 = Grid::uniform(2, 3).unwrap();
        assert_eq!(g2.common_refinement(&g2).unwrap(), g2);
        let r = g2.common_refinement(&g3).unwrap();
        assert_eq!(r.cuts(0), &[1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0]);
        assert_eq!(r, g3.common_refinement(&g2).unwrap());
        assert!(r.refines(&g2) && r.refines(&g3));
        assert!(!g2.refines(&g3));
        let g3d = Grid::uniform(3, 2).unwrap();
        assert!(matches!(g2.common_refinement(&g3d), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn subdivide_refines() {
        let g = Grid::new(vec![vec![0.3, 1.0], vec![0.5, 1.0]]).unwrap();
        let f = g.subdivide(4).unwrap();
        assert_eq!(f.n_cells(), 64);
        assert!(f.refines(&g));
    }

    fn arb_cuts() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::btree_set(1u32..1000, 0..6).prop_map(|s| {
            let mut v: Vec<f64> = s.into_iter().map(|k| k as f64 / 1000.0).collect();
            v.push(1.0);
            v
        })
    }

    fn arb_grid(max_d: usize) -> impl Strategy<Value = Grid> {
        prop::collection::vec(arb_cuts(), 2..=max_d).prop_map(|c| Grid::new(c).unwrap())
    }

    proptest! {
        #[test]
        fn volume_conservation(g in arb_grid(6)) {
            let total: f64 = g.volumes().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn partition_property(g in arb_grid(4), pts in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 4), 1..50)) {
            for p in pts {
                let u = &p[..g.dims()];
                let c = g.locate(u).unwrap();
                for (dim, &k) in c.0.iter().enumerate() {
                    prop_assert!(u[dim] >= g.lower(dim, k) && u[dim] <= g.upper(dim, k));
                    // half-open: only the first interval may contain its lower end
                    prop_assert!(u[dim] > g.lower(dim, k) || k == 0);
                }
            }
        }

        #[test]
        fn neighbor_symmetry(g in arb_grid(3)) {
            for a in 0..g.n_cells() {
                for b in g.neighbors_flat(a) {
                    prop_assert!(g.neighbors_flat(b).contains(&a));
                }
            }
        }

        #[test]
        fn common_refinement_refines_both(a in arb_grid(3), b in arb_grid(3)) {
            prop_assume!(a.dims() == b.dims());
            let r = a.common_refinement(&b).unwrap();
            prop_assert!(r.refines(&a));
            prop_assert!(r.refines(&b));
        }
    }

    #[test]
    fn partition_random_points() {
        use rand::{Rng, SeedableRng};
        let g = Grid::new(vec![vec![0.1, 0.4, 1.0], vec![0.7, 1.0], vec![0.5, 0.55, 1.0]]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let u: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let c = g.locate(&u).unwrap();
            let hits = (0..g.n_cells())
                .filter(|&f| {
                    let idx = g.cell_index(f);
                    idx.0.iter().enumerate().all(|(d, &k)| {
                        (u[d] > g.lower(d, k) || (k == 0 && u[d] == 0.0)) && u[d] <= g.upper(d, k)
                    })
                })
                .collect::<Vec<_>>();
            assert_eq!(hits, vec![g.flat(&c).unwrap()]);
        }
    }
}
