//! Low-inertia voltage evolution model.
//!
//! An open-loop diagonal system driven by the reactive output change of each
//! GFM:
//!
//! ```text
//! ΔV̇ = A_v ΔV + B_v u,   A_v = −diag(1/T_c),   B_v = diag(α M_q K_v / T_c),   u = −ΔQ_G
//! ```
//!
//! The input carries the sign: more reactive output lowers the terminal
//! voltage, and each trace settles at `−α M_q K_v ΔQ_G` without overshoot.

use alloc::vec::Vec;

use crate::case::{BusId, NetworkCase};
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

#[derive(Debug, Clone)]
pub struct LiveSystem {
    pub a_v: Matrix,
    pub b_v: Matrix,
    /// Reactive output change per GFM, pu on the system base.
    pub dq_g: Vector,
    /// Pre-disturbance terminal voltage per GFM, pu.
    pub v0: Vector,
    gen_ids: Vec<BusId>,
}

impl LiveSystem {
    pub fn gen_ids(&self) -> &[BusId] {
        &self.gen_ids
    }

    pub fn n_gen(&self) -> usize {
        self.gen_ids.len()
    }

    /// Input vector for the simulation, `−ΔQ_G`.
    pub fn input(&self) -> Vector {
        -&self.dq_g
    }

    /// Settled deviation per GFM, `−(b/a) u`.
    pub fn settling_deviation(&self) -> Vector {
        let u = self.input();
        Vector::from_iterator(self.n_gen(), (0..self.n_gen()).map(|i| -self.b_v[(i, i)] / self.a_v[(i, i)] * u[i]))
    }
}

/// Builds the LIVE matrices for `gen_ids`. `v0` defaults to the case voltage
/// magnitude at each bus when `None`.
pub fn assemble_live(case: &NetworkCase, gen_ids: &[BusId], dq_g: &Vector, v0: Option<&Vector>) -> Result<LiveSystem> {
    let ng = gen_ids.len();
    if dq_g.len() != ng {
        return Err(Error::DimensionMismatch { expected: ng, found: dq_g.len() });
    }
    if let Some(v) = v0 {
        if v.len() != ng {
            return Err(Error::DimensionMismatch { expected: ng, found: v.len() });
        }
    }
    let mut a = Vector::zeros(ng);
    let mut b = Vector::zeros(ng);
    let mut v_init = Vector::zeros(ng);
    for (i, &bus) in gen_ids.iter().enumerate() {
        let p = case.gfm_params(bus)?;
        p.validate()?;
        let alpha = case.s_base / case.capacity(bus);
        a[i] = -1.0 / p.t_c;
        b[i] = alpha * p.m_q * p.k_v / p.t_c;
        v_init[i] = match v0 {
            Some(v) => v[i],
            None => case.bus(bus).ok_or(Error::UnknownBus(bus))?.v_mag,
        };
    }
    Ok(LiveSystem {
        a_v: Matrix::from_diagonal(&a),
        b_v: Matrix::from_diagonal(&b),
        dq_g: dq_g.clone(),
        v0: v_init,
        gen_ids: gen_ids.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{BranchRecord, BusKind, BusRecord, GenRecord, GfmParams};
    use crate::sim::{discretize, simulate, states_to_voltage};
    use approx::assert_abs_diff_eq;

    fn single_gfm(s_rating: f64, params: GfmParams) -> NetworkCase {
        let bus = |id: u32| BusRecord {
            id: BusId(id),
            kind: BusKind::Load,
            p_load: 0.0,
            q_load: 0.0,
            gs: 0.0,
            bs: 0.0,
            v_mag: 1.02,
            v_ang: 0.0,
            base_kv: 1.0,
        };
        let mut case = NetworkCase::new(
            100.0,
            60.0,
            vec![bus(1), bus(2)],
            vec![BranchRecord { from: BusId(1), to: BusId(2), r: 0.0, x: 0.1, b_charge: 0.0, tap: 1.0, in_service: true }],
            vec![GenRecord { bus: BusId(1), p_set: 0.0, q_set: 0.0, v_set: 1.02, s_rating, in_service: true }],
            None,
        )
        .unwrap();
        case.set_gfm_params(BusId(1), params).unwrap();
        case
    }

    #[test]
    fn closed_form_settling() {
        let case = single_gfm(200.0, GfmParams { m_q: 0.05, k_v: 5.0, ..GfmParams::DEFAULT });
        let live = assemble_live(&case, &[BusId(1)], &Vector::from_element(1, 0.08), None).unwrap();
        assert_abs_diff_eq!(live.a_v[(0, 0)], -1.0 / 0.0628);
        assert_abs_diff_eq!(live.settling_deviation()[0], -0.01, epsilon = 1e-15);
        assert_eq!(live.v0[0], 1.02);
    }

    #[test]
    fn null_input_is_flat() {
        let case = single_gfm(200.0, GfmParams::DEFAULT);
        let live = assemble_live(&case, &[BusId(1)], &Vector::zeros(1), None).unwrap();
        let sys = discretize(&live.a_v, &live.b_v, 1e-3).unwrap();
        let x = simulate(&sys, &live.input(), 0.5, &Vector::zeros(1)).unwrap();
        let traj = states_to_voltage(&x, &live, 1e-3);
        assert!(traj.series[&BusId(1)].iter().all(|&v| v == 1.02));
    }

    #[test]
    fn deviation_is_linear_in_each_factor() {
        let base = GfmParams::DEFAULT;
        let dq = Vector::from_element(1, 0.1);
        let d0 = assemble_live(&single_gfm(150.0, base), &[BusId(1)], &dq, None).unwrap().settling_deviation()[0];
        let d_mq = assemble_live(&single_gfm(150.0, GfmParams { m_q: base.m_q * 3.0, ..base }), &[BusId(1)], &dq, None)
            .unwrap()
            .settling_deviation()[0];
        let d_kv = assemble_live(&single_gfm(150.0, GfmParams { k_v: base.k_v * 0.5, ..base }), &[BusId(1)], &dq, None)
            .unwrap()
            .settling_deviation()[0];
        let d_q = assemble_live(&single_gfm(150.0, base), &[BusId(1)], &(dq * 2.0), None).unwrap().settling_deviation()[0];
        assert_abs_diff_eq!(d_mq, 3.0 * d0, epsilon = 1e-15);
        assert_abs_diff_eq!(d_kv, 0.5 * d0, epsilon = 1e-15);
        assert_abs_diff_eq!(d_q, 2.0 * d0, epsilon = 1e-15);
    }

    #[test]
    fn dimension_checked() {
        let case = single_gfm(200.0, GfmParams::DEFAULT);
        assert!(matches!(
            assemble_live(&case, &[BusId(1)], &Vector::zeros(2), None),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
