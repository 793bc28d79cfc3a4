//! Seeded synthetic networks for tests and benchmarks.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::case::{BranchRecord, BusId, BusKind, BusRecord, GenRecord, GfmParams, NetworkCase};

fn bus(id: u32, p: f64, q: f64) -> BusRecord {
    BusRecord {
        id: BusId(id),
        kind: BusKind::Load,
        p_load: p,
        q_load: q,
        gs: 0.0,
        bs: 0.0,
        v_mag: 1.0,
        v_ang: 0.0,
        base_kv: 230.0,
    }
}

/// Random spanning tree plus `extra * n` chords, as `(from, to)` pairs of
/// zero-based node numbers.
fn topology(rng: &mut ChaCha8Rng, n: usize, extra: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.random_range(0..i), i));
    }
    let chords = (extra * n as f64) as usize;
    for _ in 0..chords {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges
}

/// Connected network of `n` buses for DC studies. Roughly one bus in five
/// hosts a generator (at least one). Bus ids are `1..=n`.
pub fn random_dc_network(seed: u64, n: usize, extra: f64) -> NetworkCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let branches: Vec<BranchRecord> = topology(&mut rng, n, extra)
        .into_iter()
        .map(|(a, b)| BranchRecord {
            from: BusId(a as u32 + 1),
            to: BusId(b as u32 + 1),
            r: 0.0,
            x: rng.random_range(0.05..0.5),
            b_charge: 0.0,
            tap: 1.0,
            in_service: true,
        })
        .collect();
    let buses = (1..=n as u32).map(|id| bus(id, rng.random_range(0.0..50.0), 0.0)).collect();
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut rng);
    let n_gen = (n / 5).max(1);
    let gens = nodes[..n_gen]
        .iter()
        .map(|&i| GenRecord {
            bus: BusId(i as u32 + 1),
            p_set: 0.0,
            q_set: 0.0,
            v_set: 1.0,
            s_rating: rng.random_range(100.0..500.0),
            in_service: true,
        })
        .collect();
    NetworkCase::new(100.0, 60.0, buses, branches, gens, None).expect("synthetic network is valid")
}

/// Lossy AC network of `n` buses with `n_gen` grid-forming units carrying the
/// default droop parameters. Loads sit on the remaining buses; dispatch covers
/// the load plus a small loss allowance, shared by capacity.
pub fn random_ac_case(seed: u64, n: usize, n_gen: usize) -> NetworkCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut rng);
    let gen_nodes = &nodes[..n_gen];

    let branches: Vec<BranchRecord> = topology(&mut rng, n, 0.4)
        .into_iter()
        .map(|(a, b)| {
            let x = rng.random_range(0.04..0.15);
            BranchRecord {
                from: BusId(a as u32 + 1),
                to: BusId(b as u32 + 1),
                r: x * rng.random_range(0.05..0.15),
                x,
                b_charge: x * rng.random_range(0.5..1.5),
                tap: 1.0,
                in_service: true,
            }
        })
        .collect();

    let mut total_load = 0.0;
    let buses: Vec<BusRecord> = (0..n)
        .map(|i| {
            if gen_nodes.contains(&i) {
                bus(i as u32 + 1, 0.0, 0.0)
            } else {
                let p: f64 = rng.random_range(5.0..25.0);
                total_load += p;
                bus(i as u32 + 1, p, p * rng.random_range(0.2..0.4))
            }
        })
        .collect();

    let mut caps: Vec<f64> = gen_nodes.iter().map(|_| rng.random_range(300.0..600.0)).collect();
    // Keep at least 30 % headroom on every unit.
    let scale = (1.3 * 1.02 * total_load / caps.iter().sum::<f64>()).max(1.0);
    caps.iter_mut().for_each(|c| *c *= scale);
    let cap_sum: f64 = caps.iter().sum();
    let gens = gen_nodes
        .iter()
        .zip(&caps)
        .map(|(&i, &cap)| GenRecord {
            bus: BusId(i as u32 + 1),
            p_set: 1.02 * total_load * cap / cap_sum,
            q_set: 0.0,
            v_set: rng.random_range(1.0..1.04),
            s_rating: cap,
            in_service: true,
        })
        .collect();
    NetworkCase::new(100.0, 60.0, buses, branches, gens, None)
        .and_then(|c| c.apply_gfm_conversion(1.0, GfmParams::DEFAULT))
        .expect("synthetic network is valid")
}
