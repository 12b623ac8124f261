//! Coflow traces: domain types, the benchmark text format, and derived traces.
//!
//! A trace line describes one coflow as a set of mappers (sending ports) and
//! reducers (receiving ports) with the number of megabytes each reducer
//! receives. Every mapper sends one flow to every reducer, and a reducer's
//! bytes are split equally over its incoming flows.
//!
//! ```text
//! <num_ports> <num_coflows>
//! <id> <arrival_ms> <M> <m1 .. mM> <R> <r1:MB .. rR:MB>
//! ```
//!
//! Reducer entries may also carry explicit per-mapper byte counts
//! (`r:MB@b1,b2,..,bM`), which the serializer emits whenever a reducer's
//! flows do not follow the equal split (for example after
//! [`gen_mantri_like`]).

mod derive;
pub mod synth;

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::{Error, Result};

pub use derive::{
    filter_low_skew, filter_thin, gen_mantri_like, mapper_cov, replicate_trace, MANTRI_COV_P50, MANTRI_COV_P90,
};

/// One megabyte, as used by the trace format.
pub const MB: u64 = 1 << 20;

pub type PortId = u32;
pub type CoflowId = u64;
pub type FlowId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowSpec {
    pub id: FlowId,
    pub coflow: CoflowId,
    pub sender: PortId,
    pub receiver: PortId,
    /// Bytes, always > 0.
    pub size: u64,
}

/// A coflow with M×R pairwise flows stored reducer-major: the flow from
/// mapper `m` to reducer `r` is `flows[r * M + m]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoflowSpec {
    pub id: CoflowId,
    pub arrival_ms: u64,
    mappers: Vec<PortId>,
    reducers: Vec<PortId>,
    flows: Vec<FlowSpec>,
}

impl CoflowSpec {
    /// Builds a coflow from explicit flow sizes in reducer-major order.
    pub fn new(
        id: CoflowId,
        arrival_ms: u64,
        mappers: Vec<PortId>,
        reducers: Vec<PortId>,
        sizes: Vec<u64>,
    ) -> Result<Self> {
        if mappers.is_empty() {
            return Err(Error::Validation(format!("coflow {id} has no mappers")));
        }
        if reducers.is_empty() {
            return Err(Error::Validation(format!("coflow {id} has no reducers")));
        }
        if sizes.len() != mappers.len() * reducers.len() {
            return Err(Error::Validation(format!(
                "coflow {id}: expected {} flow sizes, got {}",
                mappers.len() * reducers.len(),
                sizes.len()
            )));
        }
        let m = mappers.len();
        let mut flows = Vec::with_capacity(sizes.len());
        for (i, &size) in sizes.iter().enumerate() {
            if size == 0 {
                return Err(Error::Validation(format!("coflow {id} has a zero-byte flow")));
            }
            flows.push(FlowSpec {
                id: i as FlowId,
                coflow: id,
                sender: mappers[i % m],
                receiver: reducers[i / m],
                size,
            });
        }
        Ok(Self { id, arrival_ms, mappers, reducers, flows })
    }

    /// Builds a coflow from per-reducer byte totals, splitting each total
    /// equally over the mappers. Leftover bytes go one each to the
    /// lowest-indexed mappers so totals stay exact.
    pub fn from_reducer_totals(
        id: CoflowId,
        arrival_ms: u64,
        mappers: Vec<PortId>,
        reducers: Vec<(PortId, u64)>,
    ) -> Result<Self> {
        let m = mappers.len().max(1) as u64;
        let mut sizes = Vec::with_capacity(mappers.len() * reducers.len());
        for &(_, total) in &reducers {
            sizes.extend(equal_split(total, m));
        }
        let reducers = reducers.into_iter().map(|(p, _)| p).collect();
        Self::new(id, arrival_ms, mappers, reducers, sizes)
    }

    pub fn mappers(&self) -> &[PortId] {
        &self.mappers
    }

    pub fn reducers(&self) -> &[PortId] {
        &self.reducers
    }

    pub fn flows(&self) -> &[FlowSpec] {
        &self.flows
    }

    /// Flows into reducer slot `r`, in mapper order.
    pub fn reducer_flows(&self, r: usize) -> &[FlowSpec] {
        let m = self.mappers.len();
        &self.flows[r * m..(r + 1) * m]
    }

    pub fn reducer_total(&self, r: usize) -> u64 {
        self.reducer_flows(r).iter().map(|f| f.size).sum()
    }

    /// Number of flows (n).
    pub fn width(&self) -> usize {
        self.flows.len()
    }

    /// Number of distinct sending ports (s).
    pub fn num_senders(&self) -> usize {
        self.mappers.iter().collect::<HashSet<_>>().len()
    }

    /// Number of distinct receiving ports (r).
    pub fn num_receivers(&self) -> usize {
        self.reducers.iter().collect::<HashSet<_>>().len()
    }

    pub fn total_size(&self) -> u64 {
        self.flows.iter().map(|f| f.size).sum()
    }

    /// Largest over smallest flow size.
    pub fn skew(&self) -> f64 {
        let max = self.flows.iter().map(|f| f.size).max().unwrap_or(1);
        let min = self.flows.iter().map(|f| f.size).min().unwrap_or(1);
        max as f64 / min as f64
    }

    /// Same structure with new flow sizes (reducer-major).
    pub fn with_sizes(&self, sizes: Vec<u64>) -> Result<Self> {
        Self::new(self.id, self.arrival_ms, self.mappers.clone(), self.reducers.clone(), sizes)
    }

    fn max_port(&self) -> PortId {
        self.mappers.iter().chain(&self.reducers).copied().max().unwrap_or(0)
    }
}

/// Splits `total` bytes over `parts` flows; the first `total % parts` flows
/// get one extra byte.
pub(crate) fn equal_split(total: u64, parts: u64) -> impl Iterator<Item = u64> {
    let base = total / parts;
    let rem = total % parts;
    (0..parts).map(move |i| base + u64::from(i < rem))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub num_ports: u32,
    coflows: Vec<CoflowSpec>,
}

impl Trace {
    /// Validates ports and ids, sorts by (arrival, id) and numbers flows
    /// globally in that order.
    pub fn new(num_ports: u32, mut coflows: Vec<CoflowSpec>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(coflows.len());
        for c in &coflows {
            if !seen.insert(c.id) {
                return Err(Error::Validation(format!("duplicate coflow id {}", c.id)));
            }
            let max = c.max_port();
            if max >= num_ports {
                return Err(Error::Validation(format!(
                    "coflow {}: port {max} out of range for {num_ports} ports",
                    c.id
                )));
            }
        }
        coflows.sort_by_key(|c| (c.arrival_ms, c.id));
        let mut next: FlowId = 0;
        for c in &mut coflows {
            for f in &mut c.flows {
                f.id = next;
                next += 1;
            }
        }
        Ok(Self { num_ports, coflows })
    }

    pub fn coflows(&self) -> &[CoflowSpec] {
        &self.coflows
    }

    pub fn into_coflows(self) -> Vec<CoflowSpec> {
        self.coflows
    }

    pub fn num_flows(&self) -> usize {
        self.coflows.iter().map(CoflowSpec::width).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.coflows.iter().map(CoflowSpec::total_size).sum()
    }

    /// Canonical text form; [`parse_trace`] inverts it exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.num_ports, self.coflows.len());
        for c in &self.coflows {
            let _ = write!(out, "{} {} {}", c.id, c.arrival_ms, c.mappers.len());
            for m in &c.mappers {
                let _ = write!(out, " {m}");
            }
            let _ = write!(out, " {}", c.reducers.len());
            for (r, port) in c.reducers.iter().enumerate() {
                let total = c.reducer_total(r);
                let _ = write!(out, " {port}:{}", total as f64 / MB as f64);
                let flows = c.reducer_flows(r);
                let split = equal_split(total, flows.len() as u64);
                if !flows.iter().map(|f| f.size).eq(split) {
                    out.push('@');
                    for (i, f) in flows.iter().enumerate() {
                        if i > 0 {
                            out.push(',');
                        }
                        let _ = write!(out, "{}", f.size);
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Parses the benchmark trace format (see module docs).
pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty trace".into() })?;
    let mut it = header.split_whitespace();
    let num_ports: u32 = field(&mut it, hline, "num_ports")?;
    let num_coflows: usize = field(&mut it, hline, "num_coflows")?;

    let mut coflows = Vec::with_capacity(num_coflows);
    for (line, l) in lines {
        coflows.push(parse_coflow(l, line, num_ports)?);
    }
    if coflows.len() != num_coflows {
        return Err(Error::Validation(format!("header declares {num_coflows} coflows, found {}", coflows.len())));
    }
    Trace::new(num_ports, coflows)
}

fn parse_coflow(l: &str, line: usize, num_ports: u32) -> Result<CoflowSpec> {
    let mut it = l.split_whitespace();
    let id: CoflowId = field(&mut it, line, "coflow id")?;
    let arrival: u64 = field(&mut it, line, "arrival")?;
    let m: usize = field(&mut it, line, "mapper count")?;
    let mut mappers = Vec::with_capacity(m);
    for _ in 0..m {
        mappers.push(port(field(&mut it, line, "mapper port")?, num_ports, line)?);
    }
    let r: usize = field(&mut it, line, "reducer count")?;
    if m == 0 || r == 0 {
        return Err(Error::Validation(format!("line {line}: coflow {id} needs at least one mapper and one reducer")));
    }
    let mut reducers = Vec::with_capacity(r);
    let mut sizes = Vec::with_capacity(m * r);
    for _ in 0..r {
        let tok: &str = it.next().ok_or_else(|| perr(line, "missing reducer entry"))?;
        let (p, rest) = tok.split_once(':').ok_or_else(|| perr(line, format!("bad reducer entry '{tok}'")))?;
        let p: u32 = p.parse().map_err(|_| perr(line, format!("bad reducer port '{p}'")))?;
        reducers.push(port(p, num_ports, line)?);
        let (mb, explicit) = match rest.split_once('@') {
            Some((mb, list)) => (mb, Some(list)),
            None => (rest, None),
        };
        let mb: f64 = mb.parse().map_err(|_| perr(line, format!("bad megabytes '{mb}'")))?;
        if !(mb.is_finite() && mb >= 0.0) {
            return Err(perr(line, format!("bad megabytes '{mb}'")));
        }
        let total = (mb * MB as f64).round() as u64;
        match explicit {
            None => sizes.extend(equal_split(total, m as u64)),
            Some(list) => {
                let before = sizes.len();
                for b in list.split(',') {
                    sizes.push(b.parse().map_err(|_| perr(line, format!("bad flow size '{b}'")))?);
                }
                if sizes.len() - before != m {
                    return Err(perr(line, format!("reducer {p}: expected {m} flow sizes")));
                }
                let sum: u64 = sizes[before..].iter().sum();
                if sum != total {
                    return Err(perr(line, format!("reducer {p}: flow sizes sum to {sum}, header says {total}")));
                }
            }
        }
    }
    if it.next().is_some() {
        return Err(perr(line, "trailing tokens"));
    }
    CoflowSpec::new(id, arrival, mappers, reducers, sizes).map_err(|e| Error::Validation(format!("line {line}: {e}")))
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn field<'a, T: std::str::FromStr>(it: &mut impl Iterator<Item = &'a str>, line: usize, what: &str) -> Result<T> {
    let tok = it.next().ok_or_else(|| perr(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| perr(line, format!("bad {what} '{tok}'")))
}

fn port(p: u32, num_ports: u32, line: usize) -> Result<PortId> {
    if p >= num_ports {
        return Err(Error::Validation(format!("line {line}: port {p} >= num_ports {num_ports}")));
    }
    Ok(p)
}
