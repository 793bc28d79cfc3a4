//! Newton-Raphson AC power flow.
//!
//! Two bus classifications are supported:
//!
//! * classic: one slack (Vθ) bus, every other generator bus PV, the rest PQ;
//! * Vθ: every GFM bus is held at its pre-disturbance voltage and angle, the
//!   rest are PQ. This is the state of the network right after a disturbance,
//!   before any controller has acted, and the change in GFM injections it
//!   yields is the participation of each GFM.
//!
//! The Jacobian is assembled in 2x2 bus blocks and factorized with the sparse
//! block elimination engine, so cases with tens of thousands of buses solve in
//! a few iterations without dense algebra.

use alloc::vec;
use alloc::vec::Vec;

use crate::case::{BusId, NetworkCase};
use crate::error::{Error, Result};
use crate::math;
use crate::sparse::{Block2, EliminationPlan, Factor};
use crate::Vector;

/// Load or generation change at a bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub bus: BusId,
    /// Active load step, MW. Positive is a load increase.
    pub dp: f64,
    /// Reactive load step, MVAR.
    pub dq: f64,
    /// Marginal loss constant applied to the active step in the reduced models.
    pub k_l: f64,
}

impl Disturbance {
    pub fn validate(&self, case: &NetworkCase) -> Result<()> {
        case.bus_index(self.bus).ok_or(Error::UnknownBus(self.bus))?;
        if !(self.k_l >= 1.0 && self.k_l.is_finite()) {
            return Err(Error::InvalidParameter { what: "k_l", value: self.k_l });
        }
        if !(self.dp.is_finite() && self.dq.is_finite()) {
            return Err(Error::InvalidParameter { what: "disturbance", value: if self.dp.is_finite() { self.dq } else { self.dp } });
        }
        Ok(())
    }
}

/// How the active-power residual is covered in a classic solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlackPolicy {
    /// The designated slack bus takes all of it.
    #[default]
    Single,
    /// Shared by all GFMs in proportion to capacity.
    Distributed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    /// Maximum absolute mismatch, pu.
    pub tol: f64,
    pub max_iter: usize,
    /// Start from 1 pu / 0 rad instead of the voltages stored in the case.
    pub flat_start: bool,
    pub slack: SlackPolicy,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions { tol: 1e-8, max_iter: 30, flat_start: false, slack: SlackPolicy::Single }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    Classic,
    /// GFM buses fixed at the voltages of `base`.
    VTheta { base: &'a PowerFlowSolution },
}

/// Bus voltages and injections in case bus order.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub v: Vec<f64>,
    /// Radians.
    pub theta: Vec<f64>,
    /// Net injections, pu.
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    /// Generator output at dense bus `i` (net injection plus bus load), pu.
    pub fn gen_output(&self, case: &NetworkCase, i: usize) -> (f64, f64) {
        (self.p_inj[i] + case.p_load_pu(i), self.q_inj[i] + case.q_load_pu(i))
    }

    /// Total active losses, pu.
    pub fn losses(&self) -> f64 {
        self.p_inj.iter().sum()
    }
}

/// Bus admittance matrix in CSR form, diagonal included.
#[derive(Debug, Clone)]
pub struct Ybus {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    g: Vec<f64>,
    b: Vec<f64>,
}

impl Ybus {
    /// π-model branches with off-nominal tap on the from side, plus bus
    /// shunts. Phase shifters are not represented.
    pub fn new(case: &NetworkCase) -> Result<Ybus> {
        let n = case.n_buses();
        let mut trip: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(4 * case.branches().len() + n);
        for br in case.branches() {
            let den = br.r * br.r + br.x * br.x;
            if den == 0.0 {
                return Err(Error::ZeroReactance { from: br.from, to: br.to });
            }
            let (gs, bs) = (br.r / den, -br.x / den);
            let f = case.bus_index(br.from).unwrap();
            let t = case.bus_index(br.to).unwrap();
            let tap = br.tap;
            let half = br.b_charge / 2.0;
            trip.push((f, f, gs / (tap * tap), (bs + half) / (tap * tap)));
            trip.push((t, t, gs, bs + half));
            trip.push((f, t, -gs / tap, -bs / tap));
            trip.push((t, f, -gs / tap, -bs / tap));
        }
        for (i, bus) in case.buses().iter().enumerate() {
            trip.push((i, i, bus.gs / case.s_base, bus.bs / case.s_base));
        }
        trip.sort_by_key(|&(i, j, _, _)| (i, j));

        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut g = Vec::new();
        let mut b = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (i, j, gv, bv) in trip {
            if last == Some((i, j)) {
                *g.last_mut().unwrap() += gv;
                *b.last_mut().unwrap() += bv;
            } else {
                cols.push(j);
                g.push(gv);
                b.push(bv);
                row_ptr[i + 1] = cols.len();
                last = Some((i, j));
            }
        }
        for i in 1..=n {
            row_ptr[i] = row_ptr[i].max(row_ptr[i - 1]);
        }
        Ok(Ybus { row_ptr, cols, g, b })
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// `(column, G, B)` entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.g[k], self.b[k]))
    }

    /// Net injections implied by the voltages.
    pub fn injections(&self, v: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            let (mut pi, mut qi) = (0.0, 0.0);
            for (j, g, b) in self.row(i) {
                let d = theta[i] - theta[j];
                let (s, c) = (math::sin(d), math::cos(d));
                pi += v[j] * (g * c + b * s);
                qi += v[j] * (g * s - b * c);
            }
            p[i] = v[i] * pi;
            q[i] = v[i] * qi;
        }
        (p, q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Fixed,
    Pv,
    Pq,
}

struct Problem {
    kind: Vec<Kind>,
    p_spec: Vec<f64>,
    q_spec: Vec<f64>,
    v: Vec<f64>,
    theta: Vec<f64>,
}

/// Reusable solver for one case. Holds the admittance matrix and the
/// scheduled injections.
#[derive(Debug, Clone)]
pub struct AcSolver<'a> {
    case: &'a NetworkCase,
    ybus: Ybus,
    opts: PowerFlowOptions,
    p_gen: Vec<f64>,
    q_gen: Vec<f64>,
    v_set: Vec<Option<f64>>,
}

impl<'a> AcSolver<'a> {
    pub fn new(case: &'a NetworkCase, opts: PowerFlowOptions) -> Result<Self> {
        if !(opts.tol > 0.0) {
            return Err(Error::InvalidParameter { what: "tol", value: opts.tol });
        }
        let n = case.n_buses();
        let mut p_gen = vec![0.0; n];
        let mut q_gen = vec![0.0; n];
        let mut v_set = vec![None; n];
        for g in case.gens() {
            let i = case.bus_index(g.bus).unwrap();
            p_gen[i] += g.p_set / case.s_base;
            q_gen[i] += g.q_set / case.s_base;
            v_set[i].get_or_insert(g.v_set);
        }
        Ok(AcSolver { case, ybus: Ybus::new(case)?, opts, p_gen, q_gen, v_set })
    }

    pub fn ybus(&self) -> &Ybus {
        &self.ybus
    }

    pub fn solve(&self, mode: Mode<'_>) -> Result<PowerFlowSolution> {
        match mode {
            Mode::Classic => {
                self.solve_classic(&self.p_gen, &[], None, self.case.bus_index(self.case.slack()).unwrap())
            }
            Mode::VTheta { base } => self.solve_v_theta(base, None),
        }
    }

    fn start(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.case.n_buses();
        if self.opts.flat_start {
            (vec![1.0; n], vec![0.0; n])
        } else {
            let deg = core::f64::consts::PI / 180.0;
            (self.case.buses().iter().map(|b| b.v_mag).collect(), self.case.buses().iter().map(|b| b.v_ang * deg).collect())
        }
    }

    /// Classic solve with per-bus generation `p_gen` (pu) and load changes
    /// `(bus index, Δp, Δq)` in pu. `warm` replaces the start voltages.
    fn solve_classic(
        &self,
        p_gen: &[f64],
        load_delta: &[(usize, f64, f64)],
        warm: Option<&PowerFlowSolution>,
        slack: usize,
    ) -> Result<PowerFlowSolution> {
        let case = self.case;
        let n = case.n_buses();
        let (mut v, theta) = match warm {
            Some(w) => (w.v.clone(), w.theta.clone()),
            None => self.start(),
        };
        let mut kind = vec![Kind::Pq; n];
        for i in 0..n {
            if let Some(vs) = self.v_set[i] {
                kind[i] = Kind::Pv;
                v[i] = vs;
            }
        }
        kind[slack] = Kind::Fixed;
        let mut p_spec: Vec<f64> = (0..n).map(|i| p_gen[i] - case.p_load_pu(i)).collect();
        let mut q_spec: Vec<f64> = (0..n).map(|i| self.q_gen[i] - case.q_load_pu(i)).collect();
        for &(i, dp, dq) in load_delta {
            p_spec[i] -= dp;
            q_spec[i] -= dq;
        }

        let mut prob = Problem { kind, p_spec, q_spec, v, theta };
        match self.opts.slack {
            SlackPolicy::Single => self.newton(&mut prob),
            SlackPolicy::Distributed => self.distributed(&mut prob, slack),
        }
    }

    /// Repeats the single-slack solve, redistributing the slack bus's excess
    /// over the GFMs by capacity until it vanishes.
    fn distributed(&self, prob: &mut Problem, slack: usize) -> Result<PowerFlowSolution> {
        let case = self.case;
        let gfm: Vec<(usize, f64)> =
            case.gfm_buses().iter().map(|&b| (case.bus_index(b).unwrap(), case.capacity(b))).collect();
        let total: f64 = gfm.iter().map(|g| g.1).sum();
        if gfm.is_empty() || !gfm.iter().any(|g| g.0 == slack) {
            return self.newton(prob);
        }
        let mut total_iter = 0;
        for _ in 0..self.opts.max_iter {
            let mut sol = self.newton(prob)?;
            total_iter += sol.iterations;
            let excess = sol.p_inj[slack] - prob.p_spec[slack];
            // The inner solve is only accurate to `tol`, so stop once no unit
            // would move by more than that.
            let largest_share = gfm.iter().fold(0.0f64, |m, g| m.max(g.1)) / total;
            if math::abs(excess) * largest_share <= self.opts.tol {
                sol.iterations = total_iter;
                return Ok(sol);
            }
            for &(i, cap) in &gfm {
                prob.p_spec[i] += excess * cap / total;
            }
            prob.v.copy_from_slice(&sol.v);
            prob.theta.copy_from_slice(&sol.theta);
        }
        Err(Error::NotConverged { iterations: total_iter, mismatch: f64::NAN })
    }

    fn solve_v_theta(&self, base: &PowerFlowSolution, load_delta: Option<(usize, f64, f64)>) -> Result<PowerFlowSolution> {
        let case = self.case;
        let n = case.n_buses();
        if base.v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: base.v.len() });
        }
        let mut kind = vec![Kind::Pq; n];
        for bus in case.gfm_buses() {
            kind[case.bus_index(bus).unwrap()] = Kind::Fixed;
        }
        if !kind.contains(&Kind::Fixed) {
            return Err(Error::NoGridForming { threshold: 0.0 });
        }
        // PQ buses keep their pre-disturbance injections.
        let mut p_spec = base.p_inj.clone();
        let mut q_spec = base.q_inj.clone();
        if let Some((i, dp, dq)) = load_delta {
            p_spec[i] -= dp;
            q_spec[i] -= dq;
        }
        let mut prob = Problem { kind, p_spec, q_spec, v: base.v.clone(), theta: base.theta.clone() };
        self.newton(&mut prob)
    }

    fn newton(&self, prob: &mut Problem) -> Result<PowerFlowSolution> {
        let n = prob.kind.len();
        let active: Vec<usize> = (0..n).filter(|&i| prob.kind[i] != Kind::Fixed).collect();
        let mut pos = vec![usize::MAX; n];
        for (k, &i) in active.iter().enumerate() {
            pos[i] = k;
        }
        let na = active.len();
        let mut factor = if na > 0 {
            let mut edges = Vec::new();
            for (k, &i) in active.iter().enumerate() {
                for (j, _, _) in self.ybus.row(i) {
                    if pos[j] != usize::MAX && pos[j] > k {
                        edges.push((k, pos[j]));
                    }
                }
            }
            Some(Factor::<Block2>::new(EliminationPlan::new(na, edges, &vec![true; na])))
        } else {
            None
        };

        let mut iterations = 0;
        loop {
            let (p, q) = self.ybus.injections(&prob.v, &prob.theta);
            let mut mismatch = 0.0f64;
            let mut rhs = vec![[0.0; 2]; na];
            for (k, &i) in active.iter().enumerate() {
                let dp = p[i] - prob.p_spec[i];
                let dq = if prob.kind[i] == Kind::Pq { q[i] - prob.q_spec[i] } else { 0.0 };
                mismatch = mismatch.max(math::abs(dp)).max(math::abs(dq));
                rhs[k] = [-dp, -dq];
            }
            if !mismatch.is_finite() {
                return Err(Error::NotConverged { iterations, mismatch });
            }
            if mismatch <= self.opts.tol {
                return Ok(PowerFlowSolution {
                    v: prob.v.clone(),
                    theta: prob.theta.clone(),
                    p_inj: p,
                    q_inj: q,
                    converged: true,
                    iterations,
                    max_mismatch: mismatch,
                });
            }
            if iterations >= self.opts.max_iter {
                return Err(Error::NotConverged { iterations, mismatch });
            }
            iterations += 1;

            let factor = factor.as_mut().expect("mismatch on an all-fixed network");
            let entries = self.jacobian(prob, &active, &pos, &p, &q);
            factor.factorize(entries).map_err(|e| match e {
                Error::SingularPivot(k) => Error::SingularJacobian(self.case.buses()[active[k]].id),
                other => other,
            })?;
            factor.solve(&mut rhs);
            for (k, &i) in active.iter().enumerate() {
                prob.theta[i] += rhs[k][0];
                prob.v[i] += rhs[k][1];
            }
        }
    }

    fn jacobian(&self, prob: &Problem, active: &[usize], pos: &[usize], p: &[f64], q: &[f64]) -> Vec<(usize, usize, Block2)> {
        let (v, th) = (&prob.v, &prob.theta);
        let mut out = Vec::with_capacity(self.ybus.cols.len());
        for (k, &i) in active.iter().enumerate() {
            let pq = prob.kind[i] == Kind::Pq;
            for (j, g, b) in self.ybus.row(i) {
                if j == i {
                    let (p_th, p_v) = (-q[i] - b * v[i] * v[i], p[i] / v[i] + g * v[i]);
                    let row_q = if pq { [p[i] - g * v[i] * v[i], q[i] / v[i] - b * v[i]] } else { [0.0, 1.0] };
                    out.push((k, k, Block2([[p_th, p_v], row_q])));
                } else if pos[j] != usize::MAX {
                    let d = th[i] - th[j];
                    let (s, c) = (math::sin(d), math::cos(d));
                    let gs_bc = g * s - b * c;
                    let gc_bs = g * c + b * s;
                    let row_q = if pq { [-v[i] * v[j] * gc_bs, v[i] * gs_bc] } else { [0.0, 0.0] };
                    out.push((k, pos[j], Block2([[v[i] * v[j] * gs_bc, v[i] * gc_bs], row_q])));
                }
            }
        }
        out
    }

    /// Classic solve of the undisturbed case.
    pub fn base(&self) -> Result<PowerFlowSolution> {
        self.solve(Mode::Classic)
    }

    /// Reference ΔP_G and ΔQ_G per GFM (ascending bus id), pu: the change in
    /// GFM output when `d` is applied with every GFM held in Vθ.
    pub fn post_disturbance_injections(&self, base: &PowerFlowSolution, d: &Disturbance) -> Result<(Vector, Vector)> {
        d.validate(self.case)?;
        let case = self.case;
        let i = case.bus_index(d.bus).unwrap();
        let post = self.solve_v_theta(base, Some((i, d.dp / case.s_base, d.dq / case.s_base)))?;
        let gfm = case.gfm_buses();
        let mut dp = Vector::zeros(gfm.len());
        let mut dq = Vector::zeros(gfm.len());
        for (k, &bus) in gfm.iter().enumerate() {
            let b = case.bus_index(bus).unwrap();
            let extra = if b == i { (d.dp / case.s_base, d.dq / case.s_base) } else { (0.0, 0.0) };
            dp[k] = post.p_inj[b] - base.p_inj[b] + extra.0;
            dq[k] = post.q_inj[b] - base.q_inj[b] + extra.1;
        }
        Ok((dp, dq))
    }

    /// Reactive output change per GFM (ascending bus id), pu, estimated from
    /// the active shares `dp_d` of the reduced frequency model.
    ///
    /// Every GFM is dispatched at its base output plus its share, the load
    /// is stepped by `(dp, dq)`, and a classic flow is solved. `k_l` only
    /// enters through `dp_d`: the flow computes the losses itself. The
    /// reference GFM is the slack unless the distributed policy is selected.
    pub fn estimate_delta_qg(&self, base: &PowerFlowSolution, d: &Disturbance, dp_d: &Vector) -> Result<Vector> {
        d.validate(self.case)?;
        let case = self.case;
        let gfm = case.gfm_buses();
        if dp_d.len() != gfm.len() {
            return Err(Error::DimensionMismatch { expected: gfm.len(), found: dp_d.len() });
        }
        let n = case.n_buses();
        let mut p_gen = vec![0.0; n];
        for (i, p) in p_gen.iter_mut().enumerate() {
            if self.v_set[i].is_some() {
                *p = base.gen_output(case, i).0;
            }
        }
        for (k, &bus) in gfm.iter().enumerate() {
            p_gen[case.bus_index(bus).unwrap()] += dp_d[k];
        }
        let i = case.bus_index(d.bus).unwrap();
        let step = [(i, d.dp / case.s_base, d.dq / case.s_base)];

        let reference = case.reference_gfm().ok_or(Error::NoGenerators)?;
        let post = self.solve_classic(&p_gen, &step, Some(base), case.bus_index(reference).unwrap())?;
        let mut dq = Vector::zeros(gfm.len());
        for (k, &bus) in gfm.iter().enumerate() {
            let b = case.bus_index(bus).unwrap();
            dq[k] = post.q_inj[b] - base.q_inj[b] + if b == i { d.dq / case.s_base } else { 0.0 };
        }
        Ok(dq)
    }
}

/// One-shot solve of `case`.
pub fn solve_ac(case: &NetworkCase, mode: Mode<'_>, opts: PowerFlowOptions) -> Result<PowerFlowSolution> {
    AcSolver::new(case, opts)?.solve(mode)
}

/// Base classic solve followed by the Vθ re-solve under `d`.
pub fn post_disturbance_injections(case: &NetworkCase, d: &Disturbance, opts: PowerFlowOptions) -> Result<(Vector, Vector)> {
    let solver = AcSolver::new(case, opts)?;
    let base = solver.base()?;
    solver.post_disturbance_injections(&base, d)
}

/// Base classic solve followed by the ΔQ_G estimate under `d`.
pub fn estimate_delta_qg(case: &NetworkCase, d: &Disturbance, dp_d: &Vector, opts: PowerFlowOptions) -> Result<Vector> {
    let solver = AcSolver::new(case, opts)?;
    let base = solver.base()?;
    solver.estimate_delta_qg(&base, d, dp_d)
}
