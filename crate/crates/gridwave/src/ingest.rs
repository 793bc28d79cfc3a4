//! MATPOWER case files, GFM parameter overlays and contingency lists.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use gridwave_core::{BranchRecord, BusId, BusKind, BusRecord, Disturbance, GenRecord, GfmParams, NetworkCase};
use serde::Deserialize;

/// Nominal frequency assumed for MATPOWER cases, which do not carry one.
pub const DEFAULT_F0: f64 = 60.0;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("case file has no `mpc.{0}` entry")]
    Missing(&'static str),
    #[error(transparent)]
    Case(#[from] gridwave_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("overlay: {0}")]
    Overlay(String),
}

fn syntax(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Syntax { line, message: message.into() }
}

/// One numeric row and the line it started on.
struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Default)]
struct RawCase {
    base_mva: Option<f64>,
    tables: BTreeMap<String, Vec<Row>>,
}

/// Removes quoted strings and trailing `%` comments.
fn strip(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut quoted = false;
    for c in line.chars() {
        match c {
            '\'' | '"' => quoted = !quoted,
            '%' if !quoted => break,
            _ if !quoted => out.push(c),
            _ => {}
        }
    }
    out
}

fn parse_number(tok: &str, line: usize) -> Result<f64, IngestError> {
    tok.parse::<f64>().map_err(|_| syntax(line, format!("`{tok}` is not a number")))
}

fn lex(text: &str) -> Result<RawCase, IngestError> {
    enum State {
        Top,
        Matrix { name: String, rows: Vec<Row>, pending: Vec<f64>, start: usize },
        Cell { start: usize },
    }
    let mut raw = RawCase::default();
    let mut state = State::Top;

    for (k, full) in text.lines().enumerate() {
        let line = k + 1;
        let body = strip(full);
        let mut rest = body.trim();
        loop {
            match &mut state {
                State::Top => {
                    if rest.is_empty() || rest.starts_with("function") {
                        break;
                    }
                    let Some((lhs, rhs)) = rest.split_once('=') else {
                        return Err(syntax(line, format!("expected an assignment, found `{rest}`")));
                    };
                    let name = lhs.trim().strip_prefix("mpc.").unwrap_or(lhs.trim()).to_string();
                    let rhs = rhs.trim();
                    if let Some(r) = rhs.strip_prefix('[') {
                        state = State::Matrix { name, rows: Vec::new(), pending: Vec::new(), start: line };
                        rest = r.trim();
                    } else if let Some(r) = rhs.strip_prefix('{') {
                        state = State::Cell { start: line };
                        rest = r.trim();
                    } else {
                        let value = rhs.trim_end_matches(';').trim();
                        if name == "baseMVA" {
                            raw.base_mva = Some(parse_number(value, line)?);
                        }
                        break;
                    }
                }
                State::Cell { .. } => {
                    match rest.find('}') {
                        Some(p) => {
                            rest = rest[p + 1..].trim_start_matches(';').trim();
                            state = State::Top;
                        }
                        None => break,
                    }
                }
                State::Matrix { name, rows, pending, .. } => {
                    let (chunk, closed) = match rest.find(']') {
                        Some(p) => (&rest[..p], Some(p)),
                        None => (rest, None),
                    };
                    for (i, part) in chunk.split(';').enumerate() {
                        if i > 0 && !pending.is_empty() {
                            rows.push(Row { line, values: std::mem::take(pending) });
                        }
                        for tok in part.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
                            pending.push(parse_number(tok, line)?);
                        }
                    }
                    // A line break also ends a row.
                    if !pending.is_empty() {
                        rows.push(Row { line, values: std::mem::take(pending) });
                    }
                    match closed {
                        Some(p) => {
                            let tail = rest[p + 1..].trim_start_matches(';').trim().to_string();
                            let State::Matrix { name, rows, .. } = std::mem::replace(&mut state, State::Top) else {
                                unreachable!()
                            };
                            raw.tables.insert(name, rows);
                            if tail.is_empty() {
                                break;
                            }
                            return Err(syntax(line, format!("unexpected `{tail}` after matrix")));
                        }
                        None => {
                            let _ = name;
                            break;
                        }
                    }
                }
            }
        }
    }
    match state {
        State::Top => Ok(raw),
        State::Matrix { start, .. } => Err(syntax(start, "matrix is never closed with `]`")),
        State::Cell { start } => Err(syntax(start, "cell array is never closed with `}`")),
    }
}

fn columns<'a>(rows: &'a [Row], min: usize, table: &str) -> Result<&'a [Row], IngestError> {
    for r in rows {
        if r.values.len() < min {
            return Err(syntax(
                r.line,
                format!("{table} row has {} columns, at least {min} expected", r.values.len()),
            ));
        }
    }
    Ok(rows)
}

fn bus_id(v: f64, line: usize) -> Result<BusId, IngestError> {
    if v.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&v) {
        return Err(syntax(line, format!("bus number {v} is not a non-negative integer")));
    }
    Ok(BusId(v as u32))
}

/// Parses a MATPOWER case. Out-of-service branches and generators and
/// isolated buses (type 4) are dropped.
///
/// Generator capacity is `max(mBase, Pmax, |Pg|)`.
pub fn parse_matpower(text: &str) -> Result<NetworkCase, IngestError> {
    let raw = lex(text)?;
    let s_base = raw.base_mva.ok_or(IngestError::Missing("baseMVA"))?;
    let table = |name: &'static str| raw.tables.get(name).ok_or(IngestError::Missing(name));

    let mut buses = Vec::new();
    let mut isolated = Vec::new();
    let mut slack = None;
    for r in columns(table("bus")?, 13, "bus")? {
        let v = &r.values;
        let id = bus_id(v[0], r.line)?;
        match v[1] as i64 {
            4 => {
                isolated.push(id);
                continue;
            }
            3 => {
                slack.get_or_insert(id);
            }
            1 | 2 => {}
            t => return Err(syntax(r.line, format!("unknown bus type {t}"))),
        }
        buses.push(BusRecord {
            id,
            kind: BusKind::Load,
            p_load: v[2],
            q_load: v[3],
            gs: v[4],
            bs: v[5],
            v_mag: v[7],
            v_ang: v[8],
            base_kv: v[9],
        });
    }
    let live = |id: BusId| !isolated.contains(&id);

    let mut gens = Vec::new();
    for r in columns(table("gen")?, 10, "gen")? {
        let v = &r.values;
        let bus = bus_id(v[0], r.line)?;
        if !live(bus) {
            continue;
        }
        gens.push(GenRecord {
            bus,
            p_set: v[1],
            q_set: v[2],
            v_set: v[5],
            s_rating: v[6].max(v[8]).max(v[1].abs()),
            in_service: v[7] > 0.0,
        });
    }

    let mut branches = Vec::new();
    for r in columns(table("branch")?, 11, "branch")? {
        let v = &r.values;
        let (from, to) = (bus_id(v[0], r.line)?, bus_id(v[1], r.line)?);
        if !live(from) || !live(to) {
            continue;
        }
        branches.push(BranchRecord {
            from,
            to,
            r: v[2],
            x: v[3],
            b_charge: v[4],
            tap: if v[8] == 0.0 { 1.0 } else { v[8] },
            in_service: v[10] > 0.0,
        });
    }

    Ok(NetworkCase::new(s_base, DEFAULT_F0, buses, branches, gens, slack)?)
}

pub fn read_matpower(path: &Path) -> Result<NetworkCase, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    parse_matpower(&text)
}

/// Writes a case back in MATPOWER form. Capacity is written to both `mBase`
/// and `Pmax`, so parsing the output reproduces the case.
pub fn to_matpower(case: &NetworkCase) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = case\nmpc.version = '2';\nmpc.baseMVA = {};\n\nmpc.bus = [", case.s_base);
    for b in case.buses() {
        let ty = if b.id == case.slack() {
            3
        } else if b.kind == BusKind::Generator {
            2
        } else {
            1
        };
        let _ = writeln!(
            s,
            "\t{}\t{ty}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t{}\t1\t1.1\t0.9;",
            b.id, b.p_load, b.q_load, b.gs, b.bs, b.v_mag, b.v_ang, b.base_kv
        );
    }
    s.push_str("];\n\nmpc.gen = [\n");
    for g in case.gens() {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t0;",
            g.bus, g.p_set, g.q_set, g.s_rating, -g.s_rating, g.v_set, g.s_rating, g.s_rating
        );
    }
    s.push_str("];\n\nmpc.branch = [\n");
    for br in case.branches() {
        let _ = writeln!(s, "\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t{}\t0\t1\t-360\t360;", br.from, br.to, br.r, br.x, br.b_charge, br.tap);
    }
    s.push_str("];\n");
    s
}

/// Per-bus droop parameters. Unset fields fall back to the overlay defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsEntry {
    pub droop_r: Option<f64>,
    pub t_c: Option<f64>,
    pub m_q: Option<f64>,
    pub k_v: Option<f64>,
}

impl ParamsEntry {
    fn over(self, base: GfmParams) -> GfmParams {
        GfmParams {
            droop_r: self.droop_r.unwrap_or(base.droop_r),
            t_c: self.t_c.unwrap_or(base.t_c),
            m_q: self.m_q.unwrap_or(base.m_q),
            k_v: self.k_v.unwrap_or(base.k_v),
        }
    }
}

/// GFM parameter overlay: `{"defaults": {...}, "<bus id>": {...}, ...}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overlay {
    pub defaults: GfmParams,
    pub buses: BTreeMap<BusId, GfmParams>,
}

impl Overlay {
    pub fn parse(text: &str) -> Result<Overlay, IngestError> {
        let map: BTreeMap<String, ParamsEntry> =
            serde_json::from_str(text).map_err(|source| IngestError::Json { path: "overlay".into(), source })?;
        let defaults = map.get("defaults").copied().unwrap_or_default().over(GfmParams::DEFAULT);
        defaults.validate()?;
        let mut buses = BTreeMap::new();
        for (key, entry) in &map {
            if key == "defaults" {
                continue;
            }
            let id: u32 = key.parse().map_err(|_| IngestError::Overlay(format!("key `{key}` is neither a bus id nor `defaults`")))?;
            let params = entry.over(defaults);
            params.validate()?;
            buses.insert(BusId(id), params);
        }
        Ok(Overlay { defaults, buses })
    }

    pub fn read(path: &Path) -> Result<Overlay, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
        Overlay::parse(&text).map_err(|e| match e {
            IngestError::Json { source, .. } => IngestError::Json { path: path.display().to_string(), source },
            other => other,
        })
    }

    /// Converts `case` to all-GFM with `threshold_mva` and attaches the
    /// overlay parameters. Listed buses must end up grid-forming.
    pub fn apply(&self, case: &NetworkCase, threshold_mva: f64) -> Result<NetworkCase, IngestError> {
        let mut out = case.apply_gfm_conversion(threshold_mva, self.defaults)?;
        for (&bus, &params) in &self.buses {
            if !out.gfm().contains_key(&bus) {
                return Err(IngestError::Overlay(format!("bus {bus} is not grid-forming at a {threshold_mva} MVA threshold")));
            }
            out.set_gfm_params(bus, params)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContingencyRecord {
    pub bus: u32,
    pub dp_mw: f64,
    pub dq_mvar: f64,
}

impl ContingencyRecord {
    pub fn to_disturbance(self, k_l: f64) -> Disturbance {
        Disturbance { bus: BusId(self.bus), dp: self.dp_mw, dq: self.dq_mvar, k_l }
    }
}

pub fn parse_contingencies(text: &str) -> Result<Vec<ContingencyRecord>, IngestError> {
    serde_json::from_str(text).map_err(|source| IngestError::Json { path: "contingencies".into(), source })
}

pub fn read_contingencies(path: &Path) -> Result<Vec<ContingencyRecord>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    parse_contingencies(&text).map_err(|e| match e {
        IngestError::Json { source, .. } => IngestError::Json { path: path.display().to_string(), source },
        other => other,
    })
}
