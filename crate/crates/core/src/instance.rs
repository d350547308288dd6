//! Problem data: nodes, matrices, vehicles, battery parameters.
//!
//! Instances are read from a plain-text format compatible with the classic
//! type-a dial-a-ride benchmark layout:
//!
//! ```text
//! K n T_p C m                 header: vehicles, requests, horizon, capacity, max ride
//! id x y s q e l              one line per node, in order:
//!                               leading lines with q = 0   -> origin depots
//!                               2n lines with q != 0       -> pickups (q > 0) and drop-offs (q < 0)
//!                               trailing lines with q = 0  -> destination depots
//! S: id x y                   optional station lines (electric variant)
//! B: Q alpha gamma [B0 [beta]]  optional battery parameters (electric variant)
//! ```
//!
//! A single origin (destination) depot line is replicated to one origin
//! (destination) per vehicle, matching the single-depot benchmark files.
//! Travel times are Euclidean distances between coordinates; energy use per
//! arc is `beta * t` (with `beta = alpha` unless given). Instances without a
//! battery block degenerate to the plain DARP: zero energy matrix, zero
//! required end charge.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::TOL;

pub type Time = f64;
pub type Energy = f64;
pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Pickup,
    Dropoff,
    OriginDepot,
    DestDepot,
    Station,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Internal index: pickups `0..n`, drop-offs `n..2n`, origin depots,
    /// destination depots, stations, in that order.
    pub id: NodeId,
    /// Node id as written in the instance file.
    pub ext_id: i64,
    pub kind: NodeKind,
    pub x: f64,
    pub y: f64,
    /// Earliest service start.
    pub tw_early: Time,
    /// Latest service start.
    pub tw_late: Time,
    /// Service duration.
    pub service: Time,
    /// Seat load change (positive on pickups, negative on drop-offs).
    pub load: i32,
    /// Maximum ride time; meaningful on pickups only.
    pub max_ride: Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub nodes: Vec<Node>,
    /// Number of requests.
    pub n: usize,
    /// Number of vehicles; also the number of origin depots.
    pub num_vehicles: usize,
    /// Seat capacity per vehicle.
    pub capacity: i32,
    /// Planning horizon.
    pub horizon: Time,
    /// Battery capacity.
    pub battery_capacity: Energy,
    /// Recharge rate (energy per time unit).
    pub alpha: f64,
    /// Minimum end state of charge as a fraction of capacity.
    pub gamma: f64,
    /// Initial state of charge per vehicle.
    pub initial_soc: Energy,
    /// True when the initial SoC was defaulted to a full battery rather than
    /// read from the file or an override.
    pub b0_defaulted: bool,
    /// Travel time matrix, row-major `|V| x |V|`.
    pub travel: Vec<f64>,
    /// Energy matrix, row-major.
    pub energy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedData {
    /// `M[i][j] = l_i + t_ij + s_i`, row-major.
    pub big_m: Vec<f64>,
    /// Arcs `(i, j)` with `i` a drop-off, `j` a pickup, that can never be
    /// traversed: `e_i + t_ij + s_i >= l_j`.
    pub eliminated_arcs: Vec<(NodeId, NodeId)>,
    /// Direct travel time `t(pickup_r, dropoff_r)` per request.
    pub direct_time: Vec<Time>,
}

/// Parameter overrides applied on top of the file contents.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub gamma: Option<f64>,
    pub battery_capacity: Option<f64>,
    pub alpha: Option<f64>,
    pub initial_soc: Option<f64>,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("parse error at line {line}: {rule}")]
pub struct ParseError {
    pub line: usize,
    pub rule: String,
}

fn err<T>(line: usize, rule: impl fmt::Display) -> Result<T, ParseError> {
    Err(ParseError { line, rule: rule.to_string() })
}

impl Instance {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn pickup(&self, request: usize) -> NodeId {
        request
    }

    pub fn dropoff(&self, request: usize) -> NodeId {
        self.n + request
    }

    /// Request served at `node`, if it is a pickup or drop-off.
    pub fn request_of(&self, node: NodeId) -> Option<usize> {
        if node < self.n {
            Some(node)
        } else if node < 2 * self.n {
            Some(node - self.n)
        } else {
            None
        }
    }

    pub fn origin(&self, vehicle: usize) -> NodeId {
        2 * self.n + vehicle
    }

    pub fn pickups(&self) -> std::ops::Range<NodeId> {
        0..self.n
    }

    pub fn dropoffs(&self) -> std::ops::Range<NodeId> {
        self.n..2 * self.n
    }

    pub fn origins(&self) -> std::ops::Range<NodeId> {
        2 * self.n..2 * self.n + self.num_vehicles
    }

    pub fn dest_depots(&self) -> std::ops::Range<NodeId> {
        let lo = 2 * self.n + self.num_vehicles;
        let hi = lo + self.nodes[lo..].iter().take_while(|v| v.kind == NodeKind::DestDepot).count();
        lo..hi
    }

    pub fn stations(&self) -> std::ops::Range<NodeId> {
        self.dest_depots().end..self.num_nodes()
    }

    pub fn travel_time(&self, i: NodeId, j: NodeId) -> Time {
        self.travel[i * self.num_nodes() + j]
    }

    pub fn energy_use(&self, i: NodeId, j: NodeId) -> Energy {
        self.energy[i * self.num_nodes() + j]
    }

    /// Minimum state of charge required at a destination depot.
    pub fn min_end_soc(&self) -> Energy {
        self.gamma * self.battery_capacity
    }

    pub fn node(&self, i: NodeId) -> &Node {
        &self.nodes[i]
    }

    /// Travel plus service separation along consecutive visits `i -> j`.
    pub fn separation(&self, i: NodeId, j: NodeId) -> Time {
        self.nodes[i].service + self.travel_time(i, j)
    }

    /// Upper bounds on both objectives, used as indicator reference point:
    /// `C = sum_i max_j t_ij` over all nodes, `L = sum m_i` over pickups.
    pub fn reference_point(&self) -> (Time, Time) {
        let v = self.num_nodes();
        let c = (0..v)
            .map(|i| (0..v).map(|j| self.travel_time(i, j)).fold(0.0, f64::max))
            .sum();
        let l = self.pickups().map(|p| self.nodes[p].max_ride).sum();
        (c, l)
    }

    /// Big-M values, eliminated arcs and per-request direct times.
    pub fn derive(&self) -> DerivedData {
        let v = self.num_nodes();
        let mut big_m = vec![0.0; v * v];
        for i in 0..v {
            for j in 0..v {
                big_m[i * v + j] = self.nodes[i].tw_late + self.travel_time(i, j) + self.nodes[i].service;
            }
        }
        let mut eliminated = Vec::new();
        for i in self.dropoffs() {
            for j in self.pickups() {
                let ni = &self.nodes[i];
                if ni.tw_early + self.travel_time(i, j) + ni.service >= self.nodes[j].tw_late {
                    eliminated.push((i, j));
                }
            }
        }
        let direct = (0..self.n).map(|r| self.travel_time(self.pickup(r), self.dropoff(r))).collect();
        DerivedData { big_m, eliminated_arcs: eliminated, direct_time: direct }
    }

    /// Triples `(i, k, j)` violating `t_ij <= t_ik + t_kj + tol`, for the
    /// travel and the energy matrix. Empty for metric instances.
    pub fn triangle_violations(&self) -> Vec<(NodeId, NodeId, NodeId)> {
        let v = self.num_nodes();
        let mut out = Vec::new();
        for m in [&self.travel, &self.energy] {
            for i in 0..v {
                for j in 0..v {
                    for k in 0..v {
                        if m[i * v + j] > m[i * v + k] + m[k * v + j] + TOL {
                            out.push((i, k, j));
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Serialize back into the instance grammar. Parsing the output yields a
    /// field-identical instance (coordinates are written with full precision).
    pub fn serialize(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let m = self.nodes[0].max_ride;
        writeln!(s, "{} {} {} {} {}", self.num_vehicles, self.n, fnum(self.horizon), self.capacity, fnum(m)).unwrap();
        let node_line = |s: &mut String, nd: &Node| {
            writeln!(
                s,
                "{} {} {} {} {} {} {}",
                nd.ext_id,
                fnum(nd.x),
                fnum(nd.y),
                fnum(nd.service),
                nd.load,
                fnum(nd.tw_early),
                fnum(nd.tw_late)
            )
            .unwrap();
        };
        // Replicated single-depot lines collapse back to one line.
        let collapse = |ids: std::ops::Range<NodeId>| -> Vec<NodeId> {
            let v: Vec<NodeId> = ids.collect();
            let first = &self.nodes[v[0]];
            if v.iter().all(|&i| {
                let nd = &self.nodes[i];
                (nd.ext_id, nd.x, nd.y, nd.tw_early, nd.tw_late) == (first.ext_id, first.x, first.y, first.tw_early, first.tw_late)
            }) {
                vec![v[0]]
            } else {
                v
            }
        };
        for i in collapse(self.origins()) {
            node_line(&mut s, &self.nodes[i]);
        }
        for r in 0..self.n {
            node_line(&mut s, &self.nodes[self.pickup(r)]);
            node_line(&mut s, &self.nodes[self.dropoff(r)]);
        }
        for i in collapse(self.dest_depots()) {
            node_line(&mut s, &self.nodes[i]);
        }
        for i in self.stations() {
            let nd = &self.nodes[i];
            writeln!(s, "S: {} {} {}", nd.ext_id, fnum(nd.x), fnum(nd.y)).unwrap();
        }
        if self.stations().len() > 0 || self.battery_capacity > 0.0 {
            let v = self.num_nodes();
            let beta = (0..v * v)
                .find(|&ij| self.travel[ij] > TOL)
                .map(|ij| self.energy[ij] / self.travel[ij])
                .unwrap_or(self.alpha);
            write!(s, "B: {} {} {}", fnum(self.battery_capacity), fnum(self.alpha), fnum(self.gamma)).unwrap();
            if self.b0_defaulted {
                writeln!(s).unwrap();
            } else {
                writeln!(s, " {} {}", fnum(self.initial_soc), fnum(beta)).unwrap();
            }
        }
        s
    }
}

/// Format a float without losing information.
fn fnum(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        let mut s = format!("{v}");
        if s.parse::<f64>() != Ok(v) {
            s = format!("{v:?}");
        }
        s
    }
}

struct RawNode {
    line: usize,
    ext_id: i64,
    x: f64,
    y: f64,
    s: f64,
    q: i32,
    e: f64,
    l: f64,
}

/// Parse an instance from text. `name` tags outputs; `overrides` may replace
/// gamma, battery capacity, recharge rate and initial SoC.
pub fn parse_instance(name: &str, text: &str, overrides: &Overrides) -> Result<Instance, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or(ParseError { line: 1, rule: "empty file".into() })?;
    let hf: Vec<&str> = header.split_whitespace().collect();
    if hf.len() != 5 {
        return err(hline, "header must be `K n T_p C m`");
    }
    let num_vehicles: usize = hf[0].parse().map_err(|_| ParseError { line: hline, rule: "K must be a positive integer".into() })?;
    let n: usize = hf[1].parse().map_err(|_| ParseError { line: hline, rule: "n must be a positive integer".into() })?;
    let horizon: f64 = hf[2].parse().map_err(|_| ParseError { line: hline, rule: "T_p must be a number".into() })?;
    let capacity: i32 = hf[3].parse().map_err(|_| ParseError { line: hline, rule: "C must be an integer".into() })?;
    let max_ride: f64 = hf[4].parse().map_err(|_| ParseError { line: hline, rule: "m must be a number".into() })?;
    if num_vehicles == 0 || n == 0 {
        return err(hline, "K and n must be positive");
    }
    if max_ride <= 0.0 {
        return err(hline, "max ride time m must be positive");
    }

    let mut raw_nodes: Vec<RawNode> = Vec::new();
    let mut raw_stations: Vec<RawNode> = Vec::new();
    let mut battery: Option<(f64, f64, f64, Option<f64>, Option<f64>)> = None;
    for (ln, line) in lines {
        if let Some(rest) = line.strip_prefix("S:") {
            let f: Vec<&str> = rest.split_whitespace().collect();
            if f.len() != 3 {
                return err(ln, "station line must be `S: id x y`");
            }
            let parse = |s: &str, what: &str| -> Result<f64, ParseError> {
                s.parse().map_err(|_| ParseError { line: ln, rule: format!("station {what} must be a number") })
            };
            raw_stations.push(RawNode {
                line: ln,
                ext_id: f[0].parse().map_err(|_| ParseError { line: ln, rule: "station id must be an integer".into() })?,
                x: parse(f[1], "x")?,
                y: parse(f[2], "y")?,
                s: 0.0,
                q: 0,
                e: 0.0,
                l: horizon,
            });
        } else if let Some(rest) = line.strip_prefix("B:") {
            let f: Vec<&str> = rest.split_whitespace().collect();
            if !(3..=5).contains(&f.len()) {
                return err(ln, "battery line must be `B: Q alpha gamma [B0 [beta]]`");
            }
            let mut vals = Vec::new();
            for s in &f {
                vals.push(s.parse::<f64>().map_err(|_| ParseError { line: ln, rule: "battery parameters must be numbers".into() })?);
            }
            battery = Some((vals[0], vals[1], vals[2], vals.get(3).copied(), vals.get(4).copied()));
        } else {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 7 {
                return err(ln, "node line must be `id x y s q e l`");
            }
            let parse = |idx: usize, what: &str| -> Result<f64, ParseError> {
                f[idx].parse().map_err(|_| ParseError { line: ln, rule: format!("node field {what} must be a number") })
            };
            raw_nodes.push(RawNode {
                line: ln,
                ext_id: f[0].parse().map_err(|_| ParseError { line: ln, rule: "node id must be an integer".into() })?,
                x: parse(1, "x")?,
                y: parse(2, "y")?,
                s: parse(3, "s")?,
                q: f[4].parse().map_err(|_| ParseError { line: ln, rule: "node load q must be an integer".into() })?,
                e: parse(5, "e")?,
                l: parse(6, "l")?,
            });
        }
    }

    let mut seen = BTreeMap::new();
    for r in raw_nodes.iter().chain(raw_stations.iter()) {
        if let Some(prev) = seen.insert(r.ext_id, r.line) {
            return err(r.line, format!("duplicate node id {} (first seen at line {prev})", r.ext_id));
        }
    }

    // Split node lines by the leading/trailing zero-load convention.
    let first_req = raw_nodes.iter().position(|r| r.q != 0).unwrap_or(raw_nodes.len());
    let req_count = raw_nodes[first_req..].iter().take_while(|r| r.q != 0).count();
    if req_count != 2 * n {
        let ln = raw_nodes.get(first_req).map(|r| r.line).unwrap_or(hline);
        return err(ln, format!("expected {} request nodes (q != 0), found {}", 2 * n, req_count));
    }
    if first_req == 0 {
        return err(raw_nodes[0].line, "no origin depot line (q = 0) before the request nodes");
    }
    let origins_raw = &raw_nodes[..first_req];
    let requests_raw = &raw_nodes[first_req..first_req + req_count];
    let dests_raw = &raw_nodes[first_req + req_count..];
    if dests_raw.is_empty() {
        return err(requests_raw.last().unwrap().line, "no destination depot line (q = 0) after the request nodes");
    }
    if let Some(bad) = dests_raw.iter().find(|r| r.q != 0) {
        return err(bad.line, "request nodes must be contiguous; found q != 0 after the destination depots");
    }

    // Requests come as pickups with ids 1..n and drop-offs with ids n+1..2n
    // (in any interleaving); pair them by external id.
    let mut by_ext: BTreeMap<i64, &RawNode> = BTreeMap::new();
    for r in requests_raw {
        if by_ext.insert(r.ext_id, r).is_some() {
            return err(r.line, format!("duplicate node id {}", r.ext_id));
        }
    }
    let base = *by_ext.keys().next().unwrap();
    let mut pickups = Vec::with_capacity(n);
    let mut dropoffs = Vec::with_capacity(n);
    for k in 0..n as i64 {
        let pid = base + k;
        let did = base + n as i64 + k;
        let p = *by_ext.get(&pid).ok_or(ParseError { line: hline, rule: format!("missing pickup node id {pid}") })?;
        let d = *by_ext.get(&did).ok_or(ParseError { line: hline, rule: format!("missing drop-off node id {did}") })?;
        if p.q <= 0 {
            return err(p.line, format!("pickup node {pid} must have q > 0"));
        }
        if d.q != -p.q {
            return err(d.line, format!("drop-off load must mirror its pickup: q_{did} != -q_{pid}"));
        }
        pickups.push(p);
        dropoffs.push(d);
    }

    // Replicate a single depot line to one per vehicle.
    let origins: Vec<&RawNode> = if origins_raw.len() == 1 {
        vec![&origins_raw[0]; num_vehicles]
    } else {
        origins_raw.iter().collect()
    };
    if origins.len() != num_vehicles {
        return err(origins_raw[0].line, format!("need |O| = K = {} origin depots, found {}", num_vehicles, origins_raw.len()));
    }
    let dests: Vec<&RawNode> = if dests_raw.len() == 1 {
        vec![&dests_raw[0]; num_vehicles]
    } else {
        dests_raw.iter().collect()
    };
    if dests.len() < num_vehicles {
        return err(dests_raw[0].line, format!("need |F| >= K = {} destination depots, found {}", num_vehicles, dests_raw.len()));
    }

    let (q_cap, alpha, gamma, b0, beta) = match battery {
        Some((q, a, g, b0, beta)) => (q, a, g, b0, beta),
        None => (0.0, 1.0, 0.0, Some(0.0), Some(0.0)),
    };
    let q_cap = overrides.battery_capacity.unwrap_or(q_cap);
    let alpha = overrides.alpha.unwrap_or(alpha);
    let gamma = overrides.gamma.unwrap_or(gamma);
    let b0_defaulted = overrides.initial_soc.is_none() && b0.is_none();
    let b0 = overrides.initial_soc.or(b0).unwrap_or(q_cap);
    let beta = beta.unwrap_or(alpha);
    if !(0.0..=1.0).contains(&gamma) {
        return err(hline, format!("gamma must lie in [0, 1], got {gamma}"));
    }
    if b0 > q_cap + TOL {
        return err(hline, format!("initial SoC {b0} exceeds battery capacity {q_cap}"));
    }
    if alpha <= 0.0 {
        return err(hline, "recharge rate alpha must be positive");
    }

    let mut nodes = Vec::new();
    let mut push = |raw: &RawNode, kind: NodeKind| {
        nodes.push(Node {
            id: nodes.len(),
            ext_id: raw.ext_id,
            kind,
            x: raw.x,
            y: raw.y,
            tw_early: raw.e,
            tw_late: raw.l,
            service: if kind == NodeKind::Pickup || kind == NodeKind::Dropoff { raw.s } else { 0.0 },
            load: raw.q,
            max_ride: if kind == NodeKind::Pickup { max_ride } else { 0.0 },
        });
    };
    for p in &pickups {
        push(p, NodeKind::Pickup);
    }
    for d in &dropoffs {
        push(d, NodeKind::Dropoff);
    }
    for o in &origins {
        push(o, NodeKind::OriginDepot);
    }
    for f in &dests {
        push(f, NodeKind::DestDepot);
    }
    for s in &raw_stations {
        push(s, NodeKind::Station);
    }

    for nd in &nodes {
        if nd.tw_early > nd.tw_late {
            let line = raw_nodes
                .iter()
                .chain(raw_stations.iter())
                .find(|r| r.ext_id == nd.ext_id)
                .map(|r| r.line)
                .unwrap_or(hline);
            return err(line, format!("node {}: e > l", nd.ext_id));
        }
    }

    let v = nodes.len();
    let mut travel = vec![0.0; v * v];
    let mut energy = vec![0.0; v * v];
    for i in 0..v {
        for j in 0..v {
            let d = ((nodes[i].x - nodes[j].x).powi(2) + (nodes[i].y - nodes[j].y).powi(2)).sqrt();
            travel[i * v + j] = d;
            energy[i * v + j] = beta * d;
        }
    }

    Ok(Instance {
        name: name.to_string(),
        nodes,
        n,
        num_vehicles,
        capacity,
        horizon,
        battery_capacity: q_cap,
        alpha,
        gamma,
        initial_soc: b0,
        b0_defaulted,
        travel,
        energy,
    })
}
