//! Low-inertia frequency evolution model.
//!
//! Each GFM follows a first-order droop law. Written for the Kron-reduced
//! network with angles relative to a reference machine `n`:
//!
//! ```text
//! d/dt [Δδ_rel]   [ 0    M  ] [Δδ_rel]   [ 0 ]
//!      [ Δω   ] = [ B_n  T_n] [ Δω   ] + [ γ ] ΔP_d
//!
//! B_n = −diag(ω0 α R / T_c) B_red′     T_n = −diag(1 / T_c)
//! γ   = −diag(ω0 α R / T_c)             α   = S_B / S_i
//! ```
//!
//! `M` maps the frequency states to `Δω_i − Δω_n`, `B_red′` is `B_red` with
//! the reference column removed. Angles are in radians and `Δω` in rad/s, so
//! the per-unit deviation is `Δω / ω0`. `γ` is negative: a load increase
//! (positive `ΔP_d`) pulls frequency down.

use alloc::vec::Vec;

use crate::case::{BusId, NetworkCase};
use crate::error::{Error, Result};
use crate::netmodel::ReducedNetwork;
use crate::powerflow::Disturbance;
use crate::{Matrix, Vector};

/// Continuous-time LIFE model.
#[derive(Debug, Clone)]
pub struct LifeSystem {
    pub a_f: Matrix,
    pub b_f: Matrix,
    gen_ids: Vec<BusId>,
    reference: usize,
    /// `S_B / S_i` per GFM.
    pub alpha: Vector,
    /// Droop gains per GFM.
    pub droop_r: Vector,
    f0: f64,
}

impl LifeSystem {
    /// GFM buses in state order.
    pub fn gen_ids(&self) -> &[BusId] {
        &self.gen_ids
    }

    pub fn n_gen(&self) -> usize {
        self.gen_ids.len()
    }

    pub fn n_states(&self) -> usize {
        self.a_f.nrows()
    }

    /// Position of the reference GFM in [`Self::gen_ids`].
    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    /// Nominal angular frequency, rad/s.
    pub fn omega0(&self) -> f64 {
        2.0 * core::f64::consts::PI * self.f0
    }

    /// State index holding `Δω` (rad/s) of GFM `i`.
    pub fn freq_state(&self, i: usize) -> usize {
        self.n_gen() - 1 + i
    }

    /// Settled state `−a_f⁻¹ b_f ΔP_d`.
    pub fn steady_state(&self, dp_d: &Vector) -> Result<Vector> {
        let rhs = &self.b_f * dp_d;
        let x = self.a_f.clone().lu().solve(&rhs).ok_or(Error::Singular)?;
        Ok(-x)
    }

    /// Closed-form common frequency deviation, pu: `−ΣΔP_d / Σ 1/(α R)`.
    pub fn droop_share(&self, dp_d: &Vector) -> f64 {
        let stiffness: f64 = self.alpha.iter().zip(self.droop_r.iter()).map(|(a, r)| 1.0 / (a * r)).sum();
        -dp_d.sum() / stiffness
    }
}

/// Extra active output each GFM must supply after `d`, pu on the system base.
///
/// A step at a load bus is spread through `−B_L`. A step at a GFM bus is
/// assigned to that GFM in full.
pub fn compute_delta_pd(red: &ReducedNetwork, d: &Disturbance, case: &NetworkCase) -> Result<Vector> {
    let step = d.k_l * d.dp / case.s_base;
    if let Some(g) = red.gen_position(d.bus) {
        let mut out = Vector::zeros(red.n_gen());
        out[g] = step;
        return Ok(out);
    }
    let pos = red.load_position(d.bus).ok_or(Error::UnknownBus(d.bus))?;
    if step == 0.0 {
        return Ok(Vector::zeros(red.n_gen()));
    }
    Ok(red.transfer(&[(pos, step)]))
}

/// Builds the LIFE matrices for the GFMs of `red`.
pub fn assemble_life(red: &ReducedNetwork, case: &NetworkCase) -> Result<LifeSystem> {
    let gen_ids = red.gen_ids().to_vec();
    let ng = gen_ids.len();
    if ng == 0 {
        return Err(Error::NoGenerators);
    }
    let mut alpha = Vector::zeros(ng);
    let mut droop_r = Vector::zeros(ng);
    let mut t_c = Vector::zeros(ng);
    for (i, &bus) in gen_ids.iter().enumerate() {
        let p = case.gfm_params(bus)?;
        p.validate()?;
        alpha[i] = case.s_base / case.capacity(bus);
        droop_r[i] = p.droop_r;
        t_c[i] = p.t_c;
    }
    let reference_bus = case.reference_gfm().ok_or(Error::NoGenerators)?;
    let reference = gen_ids.iter().position(|&g| g == reference_bus).ok_or(Error::UnknownBus(reference_bus))?;

    let omega0 = 2.0 * core::f64::consts::PI * case.f0;
    let gain: Vec<f64> = (0..ng).map(|i| omega0 * alpha[i] * droop_r[i] / t_c[i]).collect();
    let others: Vec<usize> = (0..ng).filter(|&i| i != reference).collect();
    let n = 2 * ng - 1;
    let off = ng - 1;

    let mut a_f = Matrix::zeros(n, n);
    for (row, &i) in others.iter().enumerate() {
        a_f[(row, off + i)] = 1.0;
        a_f[(row, off + reference)] = -1.0;
    }
    let b_red = red.b_red();
    for i in 0..ng {
        for (col, &j) in others.iter().enumerate() {
            a_f[(off + i, col)] = -gain[i] * b_red[(i, j)];
        }
        a_f[(off + i, off + i)] = -1.0 / t_c[i];
    }
    let mut b_f = Matrix::zeros(n, ng);
    for i in 0..ng {
        b_f[(off + i, i)] = -gain[i];
    }

    Ok(LifeSystem { a_f, b_f, gen_ids, reference, alpha, droop_r, f0: case.f0 })
}
