use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::trace::{CoflowId, FlowId};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// value: total coflow bytes.
    Arrival,
    /// value: initial rate in bytes/ms.
    FlowStart,
    /// value: flow size in bytes.
    FlowFinish,
    /// A flow chosen as pilot. value: 0.
    PilotStart,
    /// value: estimated coflow size in bytes.
    PilotDone,
    /// Coflow skipped the pilot phase. value: width.
    Bypass,
    /// Queue (re)assignment. value: queue index.
    Queue,
    /// Bytes sent so far, recorded with each queue change. value: bytes.
    BytesSent,
    /// value: bytes sent.
    CoflowFinish,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub time_ms: f64,
    pub coflow_id: CoflowId,
    pub flow_id: Option<FlowId>,
    pub kind: EventKind,
    pub value: f64,
}

/// Per-coflow facts reconstructed from a log.
#[derive(Debug, Clone, PartialEq)]
pub struct CoflowMeta {
    pub id: CoflowId,
    pub arrival_ms: f64,
    pub total_bytes: u64,
    pub width: usize,
    pub finish_ms: Option<f64>,
    pub bypassed: bool,
    /// Pilot flow ids in selection order.
    pub pilots: Vec<FlowId>,
    /// Sum of pilot flow sizes.
    pub pilot_bytes: u64,
    /// (time, estimated size) when the pilot phase ended.
    pub pilot_done: Option<(f64, f64)>,
    /// (time, queue, bytes sent) per queue assignment.
    pub queue_changes: Vec<(f64, usize, f64)>,
}

impl CoflowMeta {
    pub fn cct(&self) -> Option<f64> {
        self.finish_ms.map(|f| f - self.arrival_ms)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub scheduler: String,
    pub events: Vec<LogEvent>,
}

const HEADER_PREFIX: &str = "# scheduler=";

impl EventLog {
    pub fn new(scheduler: impl Into<String>) -> Self {
        Self { scheduler: scheduler.into(), events: Vec::new() }
    }

    pub fn push(&mut self, time_ms: f64, coflow_id: CoflowId, flow_id: Option<FlowId>, kind: EventKind, value: f64) {
        self.events.push(LogEvent { time_ms, coflow_id, flow_id, kind, value });
    }

    pub(crate) fn check_complete(&self, num_coflows: usize) -> Result<()> {
        let finished = self.events.iter().filter(|e| e.kind == EventKind::CoflowFinish).count();
        if finished != num_coflows {
            return Err(Error::Internal(format!("{finished} of {num_coflows} coflows finished")));
        }
        Ok(())
    }

    /// Per-coflow summaries in arrival order.
    pub fn coflows(&self) -> Vec<CoflowMeta> {
        let mut out: Vec<CoflowMeta> = Vec::new();
        let mut index: HashMap<CoflowId, usize> = HashMap::new();
        let mut flow_sizes: HashMap<FlowId, u64> = HashMap::new();
        for e in &self.events {
            if e.kind == EventKind::Arrival {
                index.insert(e.coflow_id, out.len());
                out.push(CoflowMeta {
                    id: e.coflow_id,
                    arrival_ms: e.time_ms,
                    total_bytes: e.value as u64,
                    width: 0,
                    finish_ms: None,
                    bypassed: false,
                    pilots: Vec::new(),
                    pilot_bytes: 0,
                    pilot_done: None,
                    queue_changes: Vec::new(),
                });
                continue;
            }
            let Some(&i) = index.get(&e.coflow_id) else { continue };
            let m = &mut out[i];
            match e.kind {
                EventKind::FlowFinish => {
                    m.width += 1;
                    if let Some(f) = e.flow_id {
                        flow_sizes.insert(f, e.value as u64);
                    }
                }
                EventKind::PilotStart => m.pilots.extend(e.flow_id),
                EventKind::PilotDone => m.pilot_done = Some((e.time_ms, e.value)),
                EventKind::Bypass => m.bypassed = true,
                EventKind::Queue => m.queue_changes.push((e.time_ms, e.value as usize, f64::NAN)),
                EventKind::BytesSent => {
                    if let Some(last) = m.queue_changes.last_mut() {
                        last.2 = e.value;
                    }
                }
                EventKind::CoflowFinish => m.finish_ms = Some(e.time_ms),
                EventKind::Arrival | EventKind::FlowStart => {}
            }
        }
        for m in &mut out {
            m.pilot_bytes = m.pilots.iter().filter_map(|f| flow_sizes.get(f)).sum();
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{HEADER_PREFIX}{}", self.scheduler)?;
        let mut wr = csv::Writer::from_writer(w);
        for e in &self.events {
            wr.serialize(e)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut first = String::new();
        r.read_line(&mut first)?;
        let scheduler = first
            .trim_end()
            .strip_prefix(HEADER_PREFIX)
            .ok_or_else(|| Error::Parse { line: 1, msg: format!("expected '{HEADER_PREFIX}<name>'") })?
            .to_string();
        let mut rd = csv::Reader::from_reader(r);
        let events = rd.deserialize().collect::<Result<Vec<LogEvent>, _>>()?;
        Ok(Self { scheduler, events })
    }
}
