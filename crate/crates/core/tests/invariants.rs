//! Model invariants checked over seeded synthetic networks.

use approx::assert_abs_diff_eq;
use gridwave_core::life::{assemble_life, compute_delta_pd};
use gridwave_core::live::assemble_live;
use gridwave_core::metrics::{series_hs, series_nadir, series_settling};
use gridwave_core::netmodel::{build_susceptance, kron_reduce};
use gridwave_core::powerflow::{PowerFlowOptions, SlackPolicy};
use gridwave_core::sim::{discretize, discretize_augmented, discretize_direct, integrate_reference, simulate};
use gridwave_core::{synth, AcSolver, BusId, Disturbance, GfmParams, Vector};
use proptest::prelude::*;

/// Random DC network with every generator grid-forming.
fn dc_gfm(seed: u64, n: usize, extra: f64) -> gridwave_core::NetworkCase {
    synth::random_dc_network(seed, n, extra).apply_gfm_conversion(1.0, GfmParams::DEFAULT).unwrap()
}

fn any_bus(case: &gridwave_core::NetworkCase, pick: usize) -> BusId {
    case.buses()[pick % case.n_buses()].id
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn delta_pd_conserves_the_scaled_step(
        seed in 0u64..5_000,
        n in 3usize..45,
        pick in 0usize..1_000,
        dp in -300.0f64..300.0,
        k_l in 1.0f64..1.1,
    ) {
        let case = synth::random_dc_network(seed, n, 0.3);
        let red = kron_reduce(&build_susceptance(&case).unwrap()).unwrap();
        let d = Disturbance { bus: any_bus(&case, pick), dp, dq: 0.0, k_l };
        let dp_d = compute_delta_pd(&red, &d, &case).unwrap();
        prop_assert!((dp_d.sum() - k_l * dp / case.s_base).abs() < 1e-12);
        // A load increase never asks any unit to back down.
        if dp > 0.0 {
            prop_assert!(dp_d.iter().all(|&x| x >= -1e-15));
        }
    }

    #[test]
    fn reduced_laplacian_is_symmetric_with_zero_row_sums(seed in 0u64..5_000, n in 2usize..45) {
        let case = synth::random_dc_network(seed, n, 0.4);
        let red = kron_reduce(&build_susceptance(&case).unwrap()).unwrap();
        let b = red.b_red();
        for i in 0..red.n_gen() {
            prop_assert!(b.row(i).sum().abs() < 1e-9);
            for j in 0..red.n_gen() {
                prop_assert!((b[(i, j)] - b[(j, i)]).abs() < 1e-9);
                if i != j {
                    prop_assert!(b[(i, j)] <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn every_gfm_settles_at_the_droop_share(
        seed in 0u64..5_000,
        n in 4usize..30,
        pick in 0usize..1_000,
        dp in 1.0f64..200.0,
        droops in proptest::collection::vec(0.02f64..0.1, 8),
    ) {
        let mut case = dc_gfm(seed, n, 0.3);
        for (k, bus) in case.gfm_buses().into_iter().enumerate() {
            let p = case.gfm_params(bus).unwrap();
            case.set_gfm_params(bus, GfmParams { droop_r: droops[k % droops.len()], ..p }).unwrap();
        }
        let red = kron_reduce(&build_susceptance(&case).unwrap()).unwrap();
        let life = assemble_life(&red, &case).unwrap();
        let d = Disturbance { bus: any_bus(&case, pick), dp, dq: 0.0, k_l: 1.05 };
        let dp_d = compute_delta_pd(&red, &d, &case).unwrap();
        let x = life.steady_state(&dp_d).unwrap();
        let share = life.droop_share(&dp_d);
        prop_assert!(share < 0.0);
        for i in 0..life.n_gen() {
            prop_assert!((x[life.freq_state(i)] / life.omega0() - share).abs() < 1e-10);
        }
    }

    #[test]
    fn discretization_paths_agree(seed in 0u64..5_000, n in 2usize..12, t_s in 1e-4f64..1e-2) {
        let case = dc_gfm(seed, n * 3, 0.3);
        let red = kron_reduce(&build_susceptance(&case).unwrap()).unwrap();
        let life = assemble_life(&red, &case).unwrap();
        let direct = discretize_direct(&life.a_f, &life.b_f, t_s).unwrap();
        let augmented = discretize_augmented(&life.a_f, &life.b_f, t_s).unwrap();
        prop_assert!((&direct.a_d - &augmented.a_d).amax() < 1e-12);
        prop_assert!((&direct.b_d - &augmented.b_d).amax() < 1e-12);
    }

    #[test]
    fn hs_is_additive_over_a_split(
        values in proptest::collection::vec(59.5f64..60.5, 3..200),
        split in 0.0f64..1.0,
    ) {
        let t_s = 1e-3;
        let t_end = (values.len() - 1) as f64 * t_s;
        let mid = split * t_end;
        let whole = series_hs(&values, t_s, 60.0, 0.0, t_end);
        let parts = series_hs(&values, t_s, 60.0, 0.0, mid) + series_hs(&values, t_s, 60.0, mid, t_end);
        prop_assert!((whole - parts).abs() < 1e-12);
        prop_assert!(whole >= 0.0);
    }

    #[test]
    fn nadir_and_settling_are_consistent(values in proptest::collection::vec(59.0f64..61.0, 1..300), band in 1e-3f64..0.5) {
        let nadir = series_nadir(&values);
        prop_assert!(values.iter().all(|&v| v >= nadir));
        let s = series_settling(&values, 1e-3, band, 0.0);
        let start = (s.time.unwrap() / 1e-3).round() as usize;
        prop_assert!(values[start..].iter().all(|&v| (v - s.value).abs() <= band));
    }
}

#[test]
fn life_recurrence_tracks_rk4_on_random_networks() {
    for seed in 0..6 {
        let case = dc_gfm(seed, 20, 0.3);
        let red = kron_reduce(&build_susceptance(&case).unwrap()).unwrap();
        let life = assemble_life(&red, &case).unwrap();
        let d = Disturbance { bus: case.buses()[3].id, dp: 40.0, dq: 0.0, k_l: 1.05 };
        let dp_d = compute_delta_pd(&red, &d, &case).unwrap();
        let sys = discretize(&life.a_f, &life.b_f, 1e-3).unwrap();
        let x0 = Vector::zeros(life.n_states());
        let fast = simulate(&sys, &dp_d, 0.5, &x0).unwrap();
        let slow = integrate_reference(&life.a_f, &life.b_f, &dp_d, &x0, 0.5, 1e-4, 1e-3).unwrap();
        assert!((fast - slow).amax() < 1e-9);
    }
}

#[test]
fn live_trajectories_are_monotone_lags() {
    let case = synth::random_ac_case(3, 20, 4);
    let gens = case.gfm_buses();
    let dq = Vector::from_fn(gens.len(), |i, _| if i % 2 == 0 { 0.3 } else { -0.2 });
    let live = assemble_live(&case, &gens, &dq, None).unwrap();
    let sys = discretize(&live.a_v, &live.b_v, 1e-3).unwrap();
    let traj = simulate(&sys, &live.input(), 2.0, &Vector::zeros(gens.len())).unwrap();
    let settle = live.settling_deviation();
    for i in 0..gens.len() {
        let row: Vec<f64> = traj.row(i).iter().copied().collect();
        let rising = settle[i] > 0.0;
        assert!(row.windows(2).all(|w| if rising { w[1] >= w[0] } else { w[1] <= w[0] }));
        assert_abs_diff_eq!(row[row.len() - 1], settle[i], epsilon = 1e-10);
        // More reactive output pulls the terminal voltage down.
        assert_eq!(settle[i] < 0.0, dq[i] > 0.0);
    }
}

#[test]
fn distributed_slack_converges_and_shares_by_capacity() {
    for seed in 0..20 {
        let case = synth::random_ac_case(seed, 25, 3);
        let opts = PowerFlowOptions { slack: SlackPolicy::Distributed, ..Default::default() };
        let shared = AcSolver::new(&case, opts).unwrap().base().unwrap();
        assert!(shared.converged);
        // Deviations from the schedule are proportional to capacity.
        let gfm = case.gfm_buses();
        let total_cap: f64 = gfm.iter().map(|&b| case.capacity(b)).sum();
        let extra: Vec<f64> = gfm
            .iter()
            .map(|&b| {
                let i = case.bus_index(b).unwrap();
                let scheduled: f64 = case.gens_at(b).map(|g| g.p_set).sum::<f64>() / case.s_base;
                shared.gen_output(&case, i).0 - scheduled
            })
            .collect();
        let total_extra: f64 = extra.iter().sum();
        for (k, &b) in gfm.iter().enumerate() {
            assert_abs_diff_eq!(extra[k], total_extra * case.capacity(b) / total_cap, epsilon = 1e-6);
        }
    }
}

#[test]
fn zero_step_leaves_every_gfm_unchanged() {
    let case = synth::random_ac_case(11, 18, 3);
    let solver = AcSolver::new(&case, PowerFlowOptions::default()).unwrap();
    let base = solver.base().unwrap();
    let d = Disturbance { bus: case.buses()[0].id, dp: 0.0, dq: 0.0, k_l: 1.05 };
    let (dp, dq) = solver.post_disturbance_injections(&base, &d).unwrap();
    assert!(dp.amax() < 1e-8 && dq.amax() < 1e-8);
    let est = solver.estimate_delta_qg(&base, &d, &Vector::zeros(case.gfm_buses().len())).unwrap();
    assert!(est.amax() < 1e-8);
}
