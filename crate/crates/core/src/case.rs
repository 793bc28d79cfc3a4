//! Validated network description and the grid-forming conversion rules.
//!
//! Records keep the units of the source case (MW, MVAR, MVA, degrees). Per-unit
//! values on the system base are derived on demand through the accessors on
//! [`NetworkCase`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// External bus number as it appears in the case file. Never renumbered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Generator,
    Load,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusRecord {
    pub id: BusId,
    pub kind: BusKind,
    /// Active load, MW.
    pub p_load: f64,
    /// Reactive load, MVAR.
    pub q_load: f64,
    /// Shunt conductance, MW consumed at 1.0 pu voltage.
    pub gs: f64,
    /// Shunt susceptance, MVAR injected at 1.0 pu voltage.
    pub bs: f64,
    /// Voltage magnitude, pu.
    pub v_mag: f64,
    /// Voltage angle, degrees.
    pub v_ang: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, pu.
    pub b_charge: f64,
    /// Off-nominal turns ratio, 1.0 for lines.
    pub tap: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRecord {
    pub bus: BusId,
    /// Active dispatch, MW.
    pub p_set: f64,
    /// Reactive dispatch, MVAR.
    pub q_set: f64,
    /// Voltage set point, pu.
    pub v_set: f64,
    /// Apparent power capacity, MVA.
    pub s_rating: f64,
    pub in_service: bool,
}

/// Droop parameters of one grid-forming inverter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfmParams {
    /// Active-power droop, pu on device base.
    pub droop_r: f64,
    /// Power-measurement filter time constant, seconds.
    pub t_c: f64,
    /// Reactive-power droop, pu on device base.
    pub m_q: f64,
    /// Voltage outer-loop-to-grid gain.
    pub k_v: f64,
}

impl GfmParams {
    /// 5 % droop, 0.0628 s filter, 5 % reactive droop, K_v = 5.
    pub const DEFAULT: GfmParams = GfmParams { droop_r: 0.05, t_c: 0.0628, m_q: 0.05, k_v: 5.0 };

    /// Recommended band for `k_v`. Values outside it are accepted.
    pub const KV_BAND: (f64, f64) = (3.0, 6.0);

    pub fn validate(&self) -> Result<()> {
        if !(self.droop_r > 0.0 && self.droop_r.is_finite()) {
            return Err(Error::InvalidParameter { what: "droop_r", value: self.droop_r });
        }
        if !(self.t_c > 0.0 && self.t_c.is_finite()) {
            return Err(Error::InvalidParameter { what: "t_c", value: self.t_c });
        }
        if !(self.m_q >= 0.0 && self.m_q.is_finite()) {
            return Err(Error::InvalidParameter { what: "m_q", value: self.m_q });
        }
        if !self.k_v.is_finite() {
            return Err(Error::InvalidParameter { what: "k_v", value: self.k_v });
        }
        Ok(())
    }

    pub fn kv_in_recommended_band(&self) -> bool {
        (Self::KV_BAND.0..=Self::KV_BAND.1).contains(&self.k_v)
    }
}

impl Default for GfmParams {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// A parsed, validated and connected network.
///
/// Out-of-service branches and generators are dropped on construction. Bus
/// order follows the input; `index` maps external ids to dense positions.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    /// System base, MVA.
    pub s_base: f64,
    /// Nominal frequency, Hz.
    pub f0: f64,
    buses: Vec<BusRecord>,
    branches: Vec<BranchRecord>,
    gens: Vec<GenRecord>,
    gfm: BTreeMap<BusId, GfmParams>,
    slack: BusId,
    index: BTreeMap<BusId, usize>,
}

impl NetworkCase {
    pub fn new(
        s_base: f64,
        f0: f64,
        mut buses: Vec<BusRecord>,
        branches: Vec<BranchRecord>,
        gens: Vec<GenRecord>,
        slack: Option<BusId>,
    ) -> Result<Self> {
        if !(s_base > 0.0 && s_base.is_finite()) {
            return Err(Error::InvalidParameter { what: "s_base", value: s_base });
        }
        if !(f0 > 0.0 && f0.is_finite()) {
            return Err(Error::InvalidParameter { what: "f0", value: f0 });
        }

        let mut index = BTreeMap::new();
        for (i, bus) in buses.iter().enumerate() {
            if index.insert(bus.id, i).is_some() {
                return Err(Error::DuplicateBus(bus.id));
            }
            if !(bus.p_load.is_finite() && bus.q_load.is_finite()) {
                return Err(Error::InvalidRecord(format!("bus {} has a non-finite load", bus.id)));
            }
            if !(bus.v_mag > 0.0 && bus.v_mag.is_finite()) {
                return Err(Error::InvalidRecord(format!(
                    "bus {} has voltage magnitude {}",
                    bus.id, bus.v_mag
                )));
            }
        }

        let branches: Vec<BranchRecord> = branches.into_iter().filter(|b| b.in_service).collect();
        for br in &branches {
            for end in [br.from, br.to] {
                if !index.contains_key(&end) {
                    return Err(Error::DanglingBranch { from: br.from, to: br.to, missing: end });
                }
            }
            if br.from == br.to {
                return Err(Error::SelfLoop(br.from));
            }
            if !(br.tap > 0.0 && br.tap.is_finite()) {
                return Err(Error::InvalidRecord(format!(
                    "branch {}-{} has tap ratio {}",
                    br.from, br.to, br.tap
                )));
            }
        }

        let gens: Vec<GenRecord> = gens.into_iter().filter(|g| g.in_service).collect();
        for g in &gens {
            if !index.contains_key(&g.bus) {
                return Err(Error::DanglingGenerator(g.bus));
            }
            if !(g.s_rating > 0.0) {
                return Err(Error::InvalidRecord(format!(
                    "generator at bus {} has capacity {}",
                    g.bus, g.s_rating
                )));
            }
            if g.p_set.abs() > g.s_rating {
                return Err(Error::InvalidRecord(format!(
                    "generator at bus {} dispatches {} MW above its {} MVA capacity",
                    g.bus, g.p_set, g.s_rating
                )));
            }
        }

        for bus in &mut buses {
            bus.kind = BusKind::Load;
        }
        for g in &gens {
            buses[index[&g.bus]].kind = BusKind::Generator;
        }

        let mut case = NetworkCase {
            s_base,
            f0,
            buses,
            branches,
            gens,
            gfm: BTreeMap::new(),
            slack: BusId(0),
            index,
        };
        case.check_connected()?;
        case.slack = case.pick_slack(slack)?;
        Ok(case)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.buses.len();
        if n == 0 {
            return Err(Error::InvalidRecord("case has no buses".into()));
        }
        let mut dsu = DisjointSet::new(n);
        for br in &self.branches {
            dsu.union(self.index[&br.from], self.index[&br.to]);
        }
        let mut sizes = BTreeMap::new();
        for i in 0..n {
            *sizes.entry(dsu.find(i)).or_insert(0usize) += 1;
        }
        if sizes.len() > 1 {
            let mut component_sizes: Vec<usize> = sizes.into_values().collect();
            component_sizes.sort_unstable_by(|a, b| b.cmp(a));
            return Err(Error::Disconnected { component_sizes });
        }
        Ok(())
    }

    /// Keeps the requested slack if it still hosts a generator, otherwise
    /// falls back to the largest-capacity generator bus.
    fn pick_slack(&self, requested: Option<BusId>) -> Result<BusId> {
        if let Some(id) = requested {
            if self.bus(id).map(|b| b.kind == BusKind::Generator).unwrap_or(false) {
                return Ok(id);
            }
        }
        self.largest_generator_bus(|_| true).ok_or(Error::NoGenerators)
    }

    fn largest_generator_bus(&self, keep: impl Fn(BusId) -> bool) -> Option<BusId> {
        let mut best: Option<(BusId, f64)> = None;
        for id in self.generator_buses() {
            if !keep(id) {
                continue;
            }
            let cap = self.capacity(id);
            // Strictly greater keeps the lowest id on ties (ids are visited ascending).
            if best.map(|(_, c)| cap > c).unwrap_or(true) {
                best = Some((id, cap));
            }
        }
        best.map(|(id, _)| id)
    }

    pub fn buses(&self) -> &[BusRecord] {
        &self.buses
    }

    pub fn branches(&self) -> &[BranchRecord] {
        &self.branches
    }

    pub fn gens(&self) -> &[GenRecord] {
        &self.gens
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn slack(&self) -> BusId {
        self.slack
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn bus(&self, id: BusId) -> Option<&BusRecord> {
        self.bus_index(id).map(|i| &self.buses[i])
    }

    /// Ids of buses hosting at least one generator, ascending.
    pub fn generator_buses(&self) -> Vec<BusId> {
        let mut ids: Vec<BusId> =
            self.buses.iter().filter(|b| b.kind == BusKind::Generator).map(|b| b.id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn gens_at(&self, bus: BusId) -> impl Iterator<Item = &GenRecord> {
        self.gens.iter().filter(move |g| g.bus == bus)
    }

    /// Installed capacity at a bus, MVA.
    pub fn capacity(&self, bus: BusId) -> f64 {
        self.gens_at(bus).map(|g| g.s_rating).sum()
    }

    /// GFM parameter overlay, keyed by bus.
    pub fn gfm(&self) -> &BTreeMap<BusId, GfmParams> {
        &self.gfm
    }

    /// Grid-forming buses, ascending by id. This is the generator order used by
    /// every reduced model.
    pub fn gfm_buses(&self) -> Vec<BusId> {
        self.gfm.keys().copied().collect()
    }

    pub fn gfm_params(&self, bus: BusId) -> Result<GfmParams> {
        self.gfm.get(&bus).copied().ok_or(Error::MissingGfmParams(bus))
    }

    /// Attaches droop parameters to an in-service generator bus.
    pub fn set_gfm_params(&mut self, bus: BusId, params: GfmParams) -> Result<()> {
        params.validate()?;
        match self.bus(bus) {
            None => Err(Error::UnknownBus(bus)),
            Some(b) if b.kind != BusKind::Generator => Err(Error::InvalidRecord(format!(
                "bus {bus} hosts no in-service generator and cannot be grid-forming"
            ))),
            Some(_) => {
                self.gfm.insert(bus, params);
                Ok(())
            }
        }
    }

    /// Reference machine of the reduced models: largest capacity, lowest id on ties.
    pub fn reference_gfm(&self) -> Option<BusId> {
        self.largest_generator_bus(|id| self.gfm.contains_key(&id))
    }

    /// Net active injection at dense bus `i`, pu (generation minus load).
    pub fn p_net_pu(&self, i: usize) -> f64 {
        let bus = &self.buses[i];
        let gen: f64 = self.gens_at(bus.id).map(|g| g.p_set).sum();
        (gen - bus.p_load) / self.s_base
    }

    /// Net reactive injection at dense bus `i`, pu.
    pub fn q_net_pu(&self, i: usize) -> f64 {
        let bus = &self.buses[i];
        let gen: f64 = self.gens_at(bus.id).map(|g| g.q_set).sum();
        (gen - bus.q_load) / self.s_base
    }

    pub fn p_load_pu(&self, i: usize) -> f64 {
        self.buses[i].p_load / self.s_base
    }

    pub fn q_load_pu(&self, i: usize) -> f64 {
        self.buses[i].q_load / self.s_base
    }

    /// Copy of the case with a load step applied at `bus`.
    pub fn with_load_step(&self, bus: BusId, dp_mw: f64, dq_mvar: f64) -> Result<NetworkCase> {
        let i = self.bus_index(bus).ok_or(Error::UnknownBus(bus))?;
        let mut out = self.clone();
        out.buses[i].p_load += dp_mw;
        out.buses[i].q_load += dq_mvar;
        Ok(out)
    }

    /// Copy of the case with the active dispatch of every generator at `bus`
    /// replaced by a single total, split in proportion to capacity.
    pub fn with_generation(&self, bus: BusId, p_mw: f64) -> Result<NetworkCase> {
        self.bus_index(bus).ok_or(Error::UnknownBus(bus))?;
        let cap = self.capacity(bus);
        let mut out = self.clone();
        for g in out.gens.iter_mut().filter(|g| g.bus == bus) {
            g.p_set = p_mw * g.s_rating / cap;
        }
        Ok(out)
    }

    /// Converts the case to an all-grid-forming system.
    ///
    /// Generators sharing a bus are merged into one unit (dispatches and
    /// capacities summed, voltage set point of the first unit kept). Units at or
    /// above `threshold_mva` become grid-forming with `defaults`. Units below are
    /// grid-following: they are removed and their dispatch is subtracted from
    /// the bus load.
    pub fn apply_gfm_conversion(&self, threshold_mva: f64, defaults: GfmParams) -> Result<NetworkCase> {
        if !(threshold_mva > 0.0 && threshold_mva.is_finite()) {
            return Err(Error::InvalidParameter { what: "threshold", value: threshold_mva });
        }
        defaults.validate()?;

        let mut merged: BTreeMap<BusId, GenRecord> = BTreeMap::new();
        for g in &self.gens {
            merged
                .entry(g.bus)
                .and_modify(|m| {
                    m.p_set += g.p_set;
                    m.q_set += g.q_set;
                    m.s_rating += g.s_rating;
                })
                .or_insert_with(|| g.clone());
        }

        let mut buses = self.buses.clone();
        let mut gens = Vec::new();
        let mut gfm = BTreeMap::new();
        for (bus, g) in merged {
            let i = self.index[&bus];
            if g.s_rating >= threshold_mva {
                gfm.insert(bus, self.gfm.get(&bus).copied().unwrap_or(defaults));
                gens.push(g);
            } else {
                buses[i].p_load -= g.p_set;
                buses[i].q_load -= g.q_set;
                buses[i].kind = BusKind::Load;
            }
        }
        if gfm.is_empty() {
            return Err(Error::NoGridForming { threshold: threshold_mva });
        }
        for g in &gens {
            buses[self.index[&g.bus]].kind = BusKind::Generator;
        }

        let mut out = NetworkCase {
            s_base: self.s_base,
            f0: self.f0,
            buses,
            branches: self.branches.clone(),
            gens,
            gfm,
            slack: self.slack,
            index: self.index.clone(),
        };
        out.slack = out.pick_slack(Some(self.slack))?;
        Ok(out)
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
