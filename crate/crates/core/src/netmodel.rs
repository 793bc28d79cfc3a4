//! DC susceptance Laplacian and its Kron reduction onto the generator buses.
//!
//! With `B` partitioned into generator (G) and load (L) blocks,
//!
//! ```text
//! ΔP_G = B_red Δθ_G + B_L ΔP_L
//! B_red = B_GG − B_GL B_LL⁻¹ B_LG,   B_L = B_GL B_LL⁻¹
//! ```
//!
//! `B_LL` is factorized sparsely; `B_L` is never formed for large cases.
//! [`ReducedNetwork::transfer`] applies `−B_L` to a load vector through the
//! stored eliminations instead.

use alloc::vec;
use alloc::vec::Vec;

use crate::case::{BusId, NetworkCase};
use crate::error::{Error, Result};
use crate::sparse::{EliminationPlan, Factor};
use crate::{Matrix, Vector};

/// Weighted graph Laplacian of the in-service branches, pu.
#[derive(Debug, Clone)]
pub struct SusceptanceModel {
    bus_ids: Vec<BusId>,
    /// Sorted `(column, value)` per row, diagonal included.
    rows: Vec<Vec<(usize, f64)>>,
    gen_idx: Vec<usize>,
    load_idx: Vec<usize>,
}

impl SusceptanceModel {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn bus_ids(&self) -> &[BusId] {
        &self.bus_ids
    }

    /// Generator-bus dense indices, ascending by bus id.
    pub fn gen_idx(&self) -> &[usize] {
        &self.gen_idx
    }

    /// Non-generator dense indices.
    pub fn load_idx(&self) -> &[usize] {
        &self.load_idx
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |&(c, _)| c).map(|k| row[k].1).unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + Clone + '_ {
        self.rows.iter().enumerate().flat_map(|(i, row)| row.iter().map(move |&(j, v)| (i, j, v)))
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, v)| v).sum()
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.n();
        let mut m = Matrix::zeros(n, n);
        for (i, j, v) in self.entries() {
            m[(i, j)] = v;
        }
        m
    }

    /// Replaces the load ordering. `order` must be a permutation of the
    /// current load indices.
    pub fn set_load_order(&mut self, order: Vec<usize>) {
        let mut a = order.clone();
        let mut b = self.load_idx.clone();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b, "load order must permute the load buses");
        self.load_idx = order;
    }
}

/// Assembles the DC susceptance matrix. Resistance and line charging are
/// ignored; a branch contributes `1 / (x · tap)`.
pub fn build_susceptance(case: &NetworkCase) -> Result<SusceptanceModel> {
    let n = case.n_buses();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for br in case.branches() {
        if br.x == 0.0 {
            return Err(Error::ZeroReactance { from: br.from, to: br.to });
        }
        let w = 1.0 / (br.x * br.tap);
        let i = case.bus_index(br.from).unwrap();
        let j = case.bus_index(br.to).unwrap();
        rows[i].push((j, -w));
        rows[j].push((i, -w));
        rows[i].push((i, w));
        rows[j].push((j, w));
    }
    for row in &mut rows {
        row.sort_by_key(|&(c, _)| c);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for &(c, v) in row.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => merged.push((c, v)),
            }
        }
        *row = merged;
    }

    let gen_idx: Vec<usize> =
        case.generator_buses().iter().map(|&id| case.bus_index(id).unwrap()).collect();
    let mut is_gen = vec![false; n];
    for &g in &gen_idx {
        is_gen[g] = true;
    }
    let load_idx = (0..n).filter(|&i| !is_gen[i]).collect();
    Ok(SusceptanceModel {
        bus_ids: case.buses().iter().map(|b| b.id).collect(),
        rows,
        gen_idx,
        load_idx,
    })
}

/// Kron-reduced network seen from the generator buses.
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    b_red: Matrix,
    gen_ids: Vec<BusId>,
    load_ids: Vec<BusId>,
    gen_idx: Vec<usize>,
    load_idx: Vec<usize>,
    n: usize,
    factor: Factor<f64>,
}

impl ReducedNetwork {
    /// `N_G × N_G` reduced Laplacian.
    pub fn b_red(&self) -> &Matrix {
        &self.b_red
    }

    pub fn gen_ids(&self) -> &[BusId] {
        &self.gen_ids
    }

    pub fn load_ids(&self) -> &[BusId] {
        &self.load_ids
    }

    pub fn n_gen(&self) -> usize {
        self.gen_ids.len()
    }

    pub fn n_load(&self) -> usize {
        self.load_ids.len()
    }

    /// Position of a bus in the generator order.
    pub fn gen_position(&self, id: BusId) -> Option<usize> {
        self.gen_ids.iter().position(|&g| g == id)
    }

    /// Position of a bus in the load order.
    pub fn load_position(&self, id: BusId) -> Option<usize> {
        self.load_ids.iter().position(|&l| l == id)
    }

    /// `−B_L · x` for a sparse load vector given as `(load position, value)`.
    ///
    /// With `x` holding load increases this is the extra generator output each
    /// generator node must supply.
    pub fn transfer(&self, loads: &[(usize, f64)]) -> Vector {
        let mut y = vec![0.0; self.n];
        for &(pos, v) in loads {
            y[self.load_idx[pos]] += v;
        }
        self.factor.forward(&mut y);
        Vector::from_iterator(self.gen_idx.len(), self.gen_idx.iter().map(|&g| y[g]))
    }

    /// Column `pos` of `B_L`.
    pub fn b_l_column(&self, pos: usize) -> Vector {
        -self.transfer(&[(pos, 1.0)])
    }

    /// Dense `N_G × N_L` matrix `B_L`. Meant for small networks and inspection.
    pub fn b_l(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_gen(), self.n_load());
        for pos in 0..self.n_load() {
            m.set_column(pos, &self.b_l_column(pos));
        }
        m
    }
}

/// Eliminates every non-generator node of `model`.
pub fn kron_reduce(model: &SusceptanceModel) -> Result<ReducedNetwork> {
    let n = model.n();
    if model.gen_idx.is_empty() {
        return Err(Error::NoGenerators);
    }
    let mut eliminate = vec![true; n];
    for &g in &model.gen_idx {
        eliminate[g] = false;
    }

    // A load pocket with no path to a generator makes B_LL singular.
    let mut touches_gen = vec![false; n];
    for &g in &model.gen_idx {
        for &(j, _) in &model.rows[g] {
            touches_gen[j] = true;
        }
    }
    for comp in load_components(model) {
        if !comp.iter().any(|&i| touches_gen[i]) {
            return Err(Error::SingularLoadBlock { buses: comp.iter().map(|&i| model.bus_ids[i]).collect() });
        }
    }

    let edges = model.entries().filter(|&(i, j, _)| i < j).map(|(i, j, _)| (i, j));
    let plan = EliminationPlan::new(n, edges, &eliminate);
    let mut factor = Factor::new(plan);
    if let Err(e) = factor.factorize_checked(model.entries()) {
        return Err(match e {
            Error::SingularPivot(p) => {
                let comp = load_components(model).into_iter().find(|c| c.contains(&p)).unwrap_or_default();
                Error::SingularLoadBlock { buses: comp.iter().map(|&i| model.bus_ids[i]).collect() }
            }
            other => other,
        });
    }

    let ng = model.gen_idx.len();
    let b_red = Matrix::from_fn(ng, ng, |r, c| factor.schur(model.gen_idx[r], model.gen_idx[c]));
    Ok(ReducedNetwork {
        b_red,
        gen_ids: model.gen_idx.iter().map(|&i| model.bus_ids[i]).collect(),
        load_ids: model.load_idx.iter().map(|&i| model.bus_ids[i]).collect(),
        gen_idx: model.gen_idx.clone(),
        load_idx: model.load_idx.clone(),
        n,
        factor,
    })
}

fn load_components(model: &SusceptanceModel) -> Vec<Vec<usize>> {
    let n = model.n();
    let mut is_load = vec![false; n];
    for &l in &model.load_idx {
        is_load[l] = true;
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    let mut ordered = model.load_idx.clone();
    ordered.sort_unstable();
    for &start in &ordered {
        if seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            for &(j, v) in &model.rows[i] {
                if j != i && v != 0.0 && is_load[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{BranchRecord, BusKind, BusRecord, GenRecord};
    use crate::synth;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn chain(xs: &[f64], gens: &[u32]) -> NetworkCase {
        let n = xs.len() + 1;
        let buses = (1..=n as u32)
            .map(|id| BusRecord {
                id: BusId(id),
                kind: BusKind::Load,
                p_load: 0.0,
                q_load: 0.0,
                gs: 0.0,
                bs: 0.0,
                v_mag: 1.0,
                v_ang: 0.0,
                base_kv: 1.0,
            })
            .collect();
        let branches = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| BranchRecord {
                from: BusId(k as u32 + 1),
                to: BusId(k as u32 + 2),
                r: 0.0,
                x,
                b_charge: 0.0,
                tap: 1.0,
                in_service: true,
            })
            .collect();
        let gens = gens
            .iter()
            .map(|&b| GenRecord { bus: BusId(b), p_set: 0.0, q_set: 0.0, v_set: 1.0, s_rating: 100.0, in_service: true })
            .collect();
        NetworkCase::new(100.0, 60.0, buses, branches, gens, None).unwrap()
    }

    #[test]
    fn two_bus_laplacian() {
        let m = build_susceptance(&chain(&[0.1], &[1])).unwrap();
        let d = m.to_dense();
        assert_abs_diff_eq!(d, Matrix::from_row_slice(2, 2, &[10.0, -10.0, -10.0, 10.0]), epsilon = 1e-12);
    }

    #[test]
    fn three_bus_chain() {
        let m = build_susceptance(&chain(&[0.1, 0.2], &[1])).unwrap();
        let expected = Matrix::from_row_slice(3, 3, &[10.0, -10.0, 0.0, -10.0, 15.0, -5.0, 0.0, -5.0, 5.0]);
        assert_abs_diff_eq!(m.to_dense(), expected, epsilon = 1e-12);

        let red = kron_reduce(&m).unwrap();
        assert_abs_diff_eq!(red.b_red()[(0, 0)], 0.0, epsilon = 1e-12);
        let bl = red.b_l();
        assert_abs_diff_eq!(bl, Matrix::from_row_slice(1, 2, &[-1.0, -1.0]), epsilon = 1e-12);
    }

    #[test]
    fn all_generators_leaves_b_unchanged() {
        let m = build_susceptance(&chain(&[0.1, 0.2, 0.25], &[1, 2, 3, 4])).unwrap();
        let red = kron_reduce(&m).unwrap();
        assert_abs_diff_eq!(*red.b_red(), m.to_dense(), epsilon = 1e-12);
        assert_eq!(red.n_load(), 0);
        assert_eq!(red.b_l().ncols(), 0);
    }

    #[test]
    fn zero_reactance_rejected() {
        let case = chain(&[0.1, 0.0], &[1]);
        assert!(matches!(build_susceptance(&case), Err(Error::ZeroReactance { .. })));
    }

    #[test]
    fn tap_scales_series_susceptance() {
        let mut case = chain(&[0.1], &[1]);
        let mut branches = case.branches().to_vec();
        branches[0].tap = 1.25;
        case = NetworkCase::new(100.0, 60.0, case.buses().to_vec(), branches, case.gens().to_vec(), None).unwrap();
        let m = build_susceptance(&case).unwrap();
        assert_abs_diff_eq!(m.get(0, 1), -8.0, epsilon = 1e-12);
    }

    /// Dense oracle: solve the full DC relation with the reference angle
    /// pinned and compare generator injections.
    fn full_dc_injections(b: &Matrix, gen_idx: &[usize], load_idx: &[usize], theta_g: &Vector, p_l: &Vector) -> Vector {
        // Unknown load angles from the load rows: P_L = B_LG θ_G + B_LL θ_L.
        let pick = |rows: &[usize], cols: &[usize]| Matrix::from_fn(rows.len(), cols.len(), |r, c| b[(rows[r], cols[c])]);
        let b_ll = pick(load_idx, load_idx);
        let b_lg = pick(load_idx, gen_idx);
        let theta_l = b_ll.lu().solve(&(p_l - &b_lg * theta_g)).unwrap();
        pick(gen_idx, gen_idx) * theta_g + pick(gen_idx, load_idx) * theta_l
    }

    #[test]
    fn reduction_matches_full_dc_solve() {
        for seed in 0..20 {
            let case = synth::random_dc_network(seed, 50, 0.3);
            let model = build_susceptance(&case).unwrap();
            let red = kron_reduce(&model).unwrap();
            let b = model.to_dense();
            let ng = red.n_gen();
            let nl = red.n_load();
            let theta_g = Vector::from_fn(ng, |i, _| ((i * 7 + seed as usize) as f64).sin() * 0.1);
            let p_l = Vector::from_fn(nl, |i, _| ((i * 3 + 1) as f64).cos());
            let oracle = full_dc_injections(&b, model.gen_idx(), model.load_idx(), &theta_g, &p_l);
            let loads: Vec<(usize, f64)> = p_l.iter().copied().enumerate().collect();
            let reduced = red.b_red() * &theta_g - red.transfer(&loads);
            assert_abs_diff_eq!(reduced, oracle, epsilon = 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn reduced_laplacian_properties(seed in 0u64..10_000, n in 5usize..40) {
            let case = synth::random_dc_network(seed, n, 0.3);
            let model = build_susceptance(&case).unwrap();
            for i in 0..model.n() {
                prop_assert!(model.row_sum(i).abs() < 1e-9);
            }
            let red = kron_reduce(&model).unwrap();
            let b_red = red.b_red();
            prop_assert!((b_red - b_red.transpose()).amax() < 1e-10);
            for r in 0..red.n_gen() {
                prop_assert!(b_red.row(r).sum().abs() < 1e-10);
            }
            let bl = red.b_l();
            for c in 0..red.n_load() {
                prop_assert!((bl.column(c).sum() + 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn load_order_permutation_permutes_columns(seed in 0u64..10_000) {
            let case = synth::random_dc_network(seed, 20, 0.3);
            let model = build_susceptance(&case).unwrap();
            let base = kron_reduce(&model).unwrap();
            let mut perm = model.load_idx().to_vec();
            perm.reverse();
            let mut permuted = model.clone();
            permuted.set_load_order(perm);
            let other = kron_reduce(&permuted).unwrap();
            prop_assert!((base.b_red() - other.b_red()).amax() < 1e-12);
            let nl = base.n_load();
            for c in 0..nl {
                let diff = base.b_l_column(c) - other.b_l_column(nl - 1 - c);
                prop_assert!(diff.amax() < 1e-12);
            }
        }
    }
}
