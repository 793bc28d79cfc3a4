//! Block Gaussian elimination on structurally symmetric sparse matrices.
//!
//! The same engine serves two purposes:
//!
//! * full LU factorization of the Newton-Raphson Jacobian, with 2x2 blocks
//!   per bus ([`Block2`]), and
//! * partial elimination of the load buses of the DC susceptance matrix with
//!   scalar blocks. What remains on the kept nodes is the Schur complement
//!   (the Kron-reduced matrix), and the forward substitution over the
//!   eliminated nodes moves an injection vector onto the kept nodes.
//!
//! Pivots are taken on the diagonal in minimum-degree order. There is no
//! numerical pivoting; both use cases are diagonally dominant in practice and a
//! vanishing pivot is reported as an error.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::error::{Error, Result};
use crate::math;

/// Relative size below which a pivot is treated as zero.
const PIVOT_TOL: f64 = 1e-13;

/// Element type of the block matrix.
pub trait Block: Copy + core::fmt::Debug {
    type Vec: Copy + core::fmt::Debug;
    const ZERO: Self;
    const VZERO: Self::Vec;

    fn mul(self, rhs: Self) -> Self;
    fn sub(self, rhs: Self) -> Self;
    fn add(self, rhs: Self) -> Self;
    fn inverse(self) -> Option<Self>;
    fn apply(self, v: Self::Vec) -> Self::Vec;
    fn vsub(a: Self::Vec, b: Self::Vec) -> Self::Vec;
    /// Max-abs entry.
    fn norm(self) -> f64;
}

impl Block for f64 {
    type Vec = f64;
    const ZERO: Self = 0.0;
    const VZERO: Self::Vec = 0.0;

    fn mul(self, rhs: Self) -> Self {
        self * rhs
    }
    fn sub(self, rhs: Self) -> Self {
        self - rhs
    }
    fn add(self, rhs: Self) -> Self {
        self + rhs
    }
    fn inverse(self) -> Option<Self> {
        (self != 0.0 && self.is_finite()).then(|| 1.0 / self)
    }
    fn apply(self, v: f64) -> f64 {
        self * v
    }
    fn vsub(a: f64, b: f64) -> f64 {
        a - b
    }
    fn norm(self) -> f64 {
        math::abs(self)
    }
}

/// Row-major 2x2 block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block2(pub [[f64; 2]; 2]);

impl Block for Block2 {
    type Vec = [f64; 2];
    const ZERO: Self = Block2([[0.0; 2]; 2]);
    const VZERO: Self::Vec = [0.0; 2];

    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (self.0, rhs.0);
        Block2([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }
    fn sub(self, rhs: Self) -> Self {
        let (a, b) = (self.0, rhs.0);
        Block2([[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]])
    }
    fn add(self, rhs: Self) -> Self {
        let (a, b) = (self.0, rhs.0);
        Block2([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }
    fn inverse(self) -> Option<Self> {
        let a = self.0;
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let r = 1.0 / det;
        Some(Block2([[a[1][1] * r, -a[0][1] * r], [-a[1][0] * r, a[0][0] * r]]))
    }
    fn apply(self, v: [f64; 2]) -> [f64; 2] {
        let a = self.0;
        [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
    }
    fn vsub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        [a[0] - b[0], a[1] - b[1]]
    }
    fn norm(self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, &x| f64::max(m, math::abs(x)))
    }
}

/// Elimination order and filled sparsity pattern. Depends only on structure,
/// so it is computed once and reused for every numeric factorization.
#[derive(Debug, Clone)]
pub struct EliminationPlan {
    n: usize,
    order: Vec<usize>,
    /// For each eliminated node, the not-yet-eliminated neighbours at its
    /// elimination step, ascending.
    later_ptr: Vec<usize>,
    later: Vec<usize>,
    /// Filled pattern, CSR with sorted columns, diagonal included.
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    kept: Vec<usize>,
}

impl EliminationPlan {
    /// Builds a minimum-degree elimination plan.
    ///
    /// `edges` lists off-diagonal structural nonzeros (either orientation,
    /// duplicates allowed). Nodes with `eliminate[i] == false` are never
    /// pivoted on; they keep the Schur complement.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>, eliminate: &[bool]) -> Self {
        assert_eq!(eliminate.len(), n);
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in edges {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }

        let mut heap = BinaryHeap::new();
        for i in 0..n {
            if eliminate[i] {
                heap.push(Reverse((adj[i].len(), i)));
            }
        }

        let mut done = vec![false; n];
        let mut order = Vec::new();
        let mut later_ptr = vec![0];
        let mut later = Vec::new();
        let mut scratch = Vec::new();
        while let Some(Reverse((deg, p))) = heap.pop() {
            if done[p] || deg != adj[p].len() {
                continue;
            }
            done[p] = true;
            order.push(p);
            let nbrs = core::mem::take(&mut adj[p]);
            later.extend_from_slice(&nbrs);
            later_ptr.push(later.len());
            for &i in &nbrs {
                scratch.clear();
                merge_into(&mut scratch, &adj[i], &nbrs, p, i);
                core::mem::swap(&mut adj[i], &mut scratch);
                if eliminate[i] {
                    heap.push(Reverse((adj[i].len(), i)));
                }
            }
            adj[p] = nbrs;
        }

        let kept: Vec<usize> = (0..n).filter(|&i| !eliminate[i]).collect();

        // Row i: itself, its neighbours when eliminated (or at the end), and
        // every earlier pivot that listed it as a later neighbour.
        let mut rows: Vec<Vec<usize>> = adj;
        for (i, row) in rows.iter_mut().enumerate() {
            row.push(i);
        }
        for (k, &p) in order.iter().enumerate() {
            for &i in &later[later_ptr[k]..later_ptr[k + 1]] {
                rows[i].push(p);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(&row);
            row_ptr.push(cols.len());
        }

        EliminationPlan { n, order, later_ptr, later, row_ptr, cols, kept }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Eliminated nodes in pivot order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Nodes that are never pivoted on, ascending.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    /// Number of stored blocks in the filled pattern.
    pub fn fill(&self) -> usize {
        self.cols.len()
    }

    fn later_of(&self, step: usize) -> &[usize] {
        &self.later[self.later_ptr[step]..self.later_ptr[step + 1]]
    }

    fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Position of (i, j) in the value array.
    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = self.row(i);
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }
}

/// `out = (a ∪ b) \ {skip_a, skip_b}`, inputs sorted.
fn merge_into(out: &mut Vec<usize>, a: &[usize], b: &[usize], skip_a: usize, skip_b: usize) {
    let (mut x, mut y) = (0, 0);
    loop {
        let next = match (a.get(x), b.get(y)) {
            (Some(&u), Some(&v)) if u == v => {
                x += 1;
                y += 1;
                u
            }
            (Some(&u), Some(&v)) if u < v => {
                x += 1;
                u
            }
            (Some(_), Some(&v)) => {
                y += 1;
                v
            }
            (Some(&u), None) => {
                x += 1;
                u
            }
            (None, Some(&v)) => {
                y += 1;
                v
            }
            (None, None) => break,
        };
        if next != skip_a && next != skip_b {
            out.push(next);
        }
    }
}

/// Numeric factorization on top of an [`EliminationPlan`].
#[derive(Debug, Clone)]
pub struct Factor<B: Block> {
    plan: EliminationPlan,
    values: Vec<B>,
    pivot_inv: Vec<B>,
}

impl<B: Block> Factor<B> {
    pub fn new(plan: EliminationPlan) -> Self {
        let fill = plan.fill();
        let n = plan.n;
        Factor { plan, values: vec![B::ZERO; fill], pivot_inv: vec![B::ZERO; n] }
    }

    pub fn plan(&self) -> &EliminationPlan {
        &self.plan
    }

    /// Loads matrix entries (duplicates are summed) and factorizes.
    ///
    /// Every entry must lie on the pattern the plan was built from.
    pub fn factorize(&mut self, entries: impl IntoIterator<Item = (usize, usize, B)>) -> Result<()> {
        self.values.iter_mut().for_each(|v| *v = B::ZERO);
        for (i, j, b) in entries {
            let k = self.plan.position(i, j).expect("matrix entry outside the elimination pattern");
            self.values[k] = self.values[k].add(b);
        }

        let plan = &self.plan;
        let mut upper: Vec<B> = Vec::new();
        for (step, &p) in plan.order.iter().enumerate() {
            let dpos = plan.position(p, p).unwrap();
            let piv = self.values[dpos];
            let pinv = match piv.inverse() {
                Some(inv) if piv.norm() > 0.0 => inv,
                _ => return Err(Error::SingularPivot(p)),
            };
            self.pivot_inv[p] = pinv;

            let later = plan.later_of(step);
            upper.clear();
            for &j in later {
                upper.push(self.values[plan.position(p, j).unwrap()]);
            }
            for &i in later {
                let row_start = plan.row_ptr[i];
                let row = plan.row(i);
                let ip = row_start + row.binary_search(&p).unwrap();
                let l = self.values[ip].mul(pinv);
                self.values[ip] = l;
                let mut from = 0;
                for (&j, &u) in later.iter().zip(&upper) {
                    let k = from + row[from..].partition_point(|&c| c < j);
                    debug_assert_eq!(row[k], j);
                    self.values[row_start + k] = self.values[row_start + k].sub(l.mul(u));
                    from = k + 1;
                }
            }
        }
        Ok(())
    }

    /// Checks every pivot against the size of the original diagonal entry.
    /// Used when a structurally present but numerically cancelled pivot must
    /// be reported rather than silently amplified.
    pub fn factorize_checked(
        &mut self,
        entries: impl IntoIterator<Item = (usize, usize, B)> + Clone,
    ) -> Result<()> {
        let mut diag = vec![0.0f64; self.plan.n];
        for (i, j, b) in entries.clone() {
            if i == j {
                diag[i] = f64::max(diag[i], b.norm());
            }
        }
        self.factorize(entries)?;
        for &p in &self.plan.order {
            let piv = self.pivot_inv[p].inverse().map(|b| b.norm()).unwrap_or(0.0);
            if !(piv > PIVOT_TOL * diag[p]) {
                return Err(Error::SingularPivot(p));
            }
        }
        Ok(())
    }

    /// Applies the eliminations to a right-hand side in place. Afterwards the
    /// kept entries of `rhs` hold the reduced right-hand side.
    pub fn forward(&self, rhs: &mut [B::Vec]) {
        let plan = &self.plan;
        for (step, &p) in plan.order.iter().enumerate() {
            let yp = rhs[p];
            for &i in plan.later_of(step) {
                let ip = plan.position(i, p).unwrap();
                rhs[i] = B::vsub(rhs[i], self.values[ip].apply(yp));
            }
        }
    }

    /// Solves `A x = rhs` in place. Requires a plan with no kept nodes.
    pub fn solve(&self, rhs: &mut [B::Vec]) {
        assert!(self.plan.kept.is_empty(), "solve() needs a full elimination");
        self.forward(rhs);
        let plan = &self.plan;
        for (step, &p) in plan.order.iter().enumerate().rev() {
            let mut s = rhs[p];
            for &j in plan.later_of(step) {
                let pj = plan.position(p, j).unwrap();
                s = B::vsub(s, self.values[pj].apply(rhs[j]));
            }
            rhs[p] = self.pivot_inv[p].apply(s);
        }
    }

    /// Schur complement entry between two kept nodes.
    pub fn schur(&self, i: usize, j: usize) -> B {
        self.plan.position(i, j).map(|k| self.values[k]).unwrap_or(B::ZERO)
    }

    /// Nonzero Schur-complement entries of kept row `i`.
    pub fn schur_row(&self, i: usize) -> impl Iterator<Item = (usize, B)> + '_ {
        let start = self.plan.row_ptr[i];
        self.plan.row(i).iter().enumerate().filter_map(move |(k, &j)| {
            // Entries toward eliminated columns hold multipliers, not Schur values.
            self.plan.is_kept(j).then_some((j, self.values[start + k]))
        })
    }
}

impl EliminationPlan {
    fn is_kept(&self, j: usize) -> bool {
        self.kept.binary_search(&j).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix;
    use proptest::prelude::*;

    fn dense_entries(a: &Matrix) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    out.push((i, j, a[(i, j)]));
                }
            }
        }
        out
    }

    fn edges(a: &Matrix) -> Vec<(usize, usize)> {
        dense_entries(a).into_iter().map(|(i, j, _)| (i, j)).collect()
    }

    /// Sparse diagonally dominant test matrix with a symmetric pattern and
    /// nonsymmetric values.
    fn test_matrix(n: usize, seed: u64) -> Matrix {
        let mut a = Matrix::zeros(n, n);
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64)
        };
        for i in 1..n {
            let j = (next() * i as f64) as usize;
            a[(i, j)] = -(0.5 + next());
            a[(j, i)] = -(0.5 + next());
        }
        for _ in 0..n {
            let (i, j) = ((next() * n as f64) as usize, (next() * n as f64) as usize);
            if i != j {
                a[(i, j)] = -(0.5 + next());
                a[(j, i)] = -(0.5 + next());
            }
        }
        for i in 0..n {
            let s: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
            a[(i, i)] = s + 0.1 + next();
        }
        a
    }

    #[test]
    fn full_solve_matches_dense_lu() {
        for seed in 0..5 {
            let a = test_matrix(40, seed);
            let plan = EliminationPlan::new(40, edges(&a), &[true; 40]);
            let mut f = Factor::<f64>::new(plan);
            f.factorize(dense_entries(&a)).unwrap();
            let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
            let mut x = b.clone();
            f.solve(&mut x);
            let dense = a.clone().lu().solve(&crate::Vector::from_vec(b)).unwrap();
            for i in 0..40 {
                assert!((x[i] - dense[i]).abs() < 1e-12, "{} vs {}", x[i], dense[i]);
            }
        }
    }

    #[test]
    fn partial_elimination_gives_schur_complement() {
        let n = 30;
        let a = test_matrix(n, 7);
        let keep = [3usize, 11, 20, 29];
        let eliminate: Vec<bool> = (0..n).map(|i| !keep.contains(&i)).collect();
        let plan = EliminationPlan::new(n, edges(&a), &eliminate);
        let mut f = Factor::<f64>::new(plan);
        f.factorize(dense_entries(&a)).unwrap();

        let elim: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
        let pick = |rows: &[usize], cols: &[usize]| {
            Matrix::from_fn(rows.len(), cols.len(), |r, c| a[(rows[r], cols[c])])
        };
        let s = pick(&keep, &keep)
            - pick(&keep, &elim) * pick(&elim, &elim).try_inverse().unwrap() * pick(&elim, &keep);
        for (r, &i) in keep.iter().enumerate() {
            for (c, &j) in keep.iter().enumerate() {
                assert!((f.schur(i, j) - s[(r, c)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block2_solve_matches_dense() {
        let n = 12;
        let scalar = test_matrix(2 * n, 3);
        // Reuse the scalar matrix but restrict its pattern to the bus graph.
        let mut a = Matrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let linked = i == j || (scalar[(2 * i, 2 * j)] != 0.0);
                if linked {
                    for r in 0..2 {
                        for c in 0..2 {
                            a[(2 * i + r, 2 * j + c)] =
                                if i == j && r == c { 10.0 + r as f64 } else { 0.3 * ((i + j + r + 2 * c) as f64).cos() };
                        }
                    }
                }
            }
        }
        let mut entries = Vec::new();
        let mut bus_edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let blk = Block2([
                    [a[(2 * i, 2 * j)], a[(2 * i, 2 * j + 1)]],
                    [a[(2 * i + 1, 2 * j)], a[(2 * i + 1, 2 * j + 1)]],
                ]);
                if blk.norm() > 0.0 {
                    entries.push((i, j, blk));
                    bus_edges.push((i, j));
                }
            }
        }
        let plan = EliminationPlan::new(n, bus_edges, &vec![true; n]);
        let mut f = Factor::<Block2>::new(plan);
        f.factorize(entries).unwrap();
        let mut x: Vec<[f64; 2]> = (0..n).map(|i| [i as f64, 1.0 - i as f64]).collect();
        let b = crate::Vector::from_iterator(2 * n, x.iter().flat_map(|v| v.iter().copied()));
        f.solve(&mut x);
        let dense = a.lu().solve(&b).unwrap();
        for i in 0..n {
            assert!((x[i][0] - dense[2 * i]).abs() < 1e-12);
            assert!((x[i][1] - dense[2 * i + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        // Pattern has the diagonal but the value is zero.
        let plan = EliminationPlan::new(2, [(0, 1)], &[true, true]);
        let mut f = Factor::<f64>::new(plan);
        let err = f.factorize([(0, 0, 0.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(err, Err(Error::SingularPivot(_))));
    }

    proptest! {
        #[test]
        fn minimum_degree_orders_a_star_leaves_first(n in 3usize..40) {
            // Star graph: the hub has degree n-1 and is only taken once a
            // single leaf is left.
            let plan = EliminationPlan::new(n, (1..n).map(|i| (0, i)), &vec![true; n]);
            prop_assert!(plan.order()[n - 2..].contains(&0));
            // No fill beyond the star itself.
            prop_assert_eq!(plan.fill(), n + 2 * (n - 1));
        }
    }
}
