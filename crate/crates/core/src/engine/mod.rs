//! Event-driven big-switch fabric.
//!
//! Every port has an independent uplink and downlink of `port_bandwidth`
//! bytes/ms; the core is non-blocking, so a rate plan is feasible iff per-port
//! directional sums stay within capacity. Rates are piecewise constant between
//! events. Time jumps to the earliest of: the next coflow arrival, the next
//! flow completion under current rates, and the next δ boundary when the
//! scheduler is tick-driven. Completions are taken at their exact instant.

mod log;

use std::ops::Range;

pub use self::log::{CoflowMeta, EventKind, EventLog, LogEvent};
use crate::sched::{self, SchedCtx, SchedulerKind, SchedulerParams, SimEvent};
use crate::trace::{CoflowId, FlowSpec, PortId, Trace};
use crate::{Error, Result};

/// 1 MB per 8 ms.
pub const DEFAULT_PORT_BANDWIDTH: f64 = 131_072.0;
pub const DEFAULT_DELTA_MS: f64 = 8.0;

/// Remaining bytes at or below this count as delivered.
const COMPLETION_EPS: f64 = 1e-3;
/// Relative slack allowed when checking port capacity.
const CAPACITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub num_ports: u32,
    /// Bytes per millisecond, per direction.
    pub port_bandwidth: f64,
    /// Scheduling interval for tick-driven schedulers, in ms.
    pub delta: f64,
    pub scheduler: SchedulerKind,
    pub params: SchedulerParams,
    pub rng_seed: u64,
}

impl SimConfig {
    pub fn new(num_ports: u32, scheduler: SchedulerKind) -> Self {
        Self {
            num_ports,
            port_bandwidth: DEFAULT_PORT_BANDWIDTH,
            delta: DEFAULT_DELTA_MS,
            scheduler,
            params: SchedulerParams::default(),
            rng_seed: 0,
        }
    }

    pub fn with_params(mut self, params: SchedulerParams) -> Self {
        self.params = params;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.port_bandwidth > 0.0 && self.port_bandwidth.is_finite()) {
            return Err(Error::Param(format!("port_bandwidth must be > 0, got {}", self.port_bandwidth)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Param(format!("delta must be > 0, got {}", self.delta)));
        }
        self.params.validate()
    }
}

#[derive(Debug, Clone)]
pub struct FlowRuntime {
    pub spec: FlowSpec,
    /// Index of the owning coflow in [`Fabric::coflows`].
    pub coflow: usize,
    pub remaining: f64,
    pub rate: f64,
    pub start_time: Option<f64>,
    pub finish_time: Option<f64>,
    pub is_pilot: bool,
}

impl FlowRuntime {
    pub fn is_finished(&self) -> bool {
        self.finish_time.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct CoflowState {
    pub id: CoflowId,
    pub arrival_ms: f64,
    pub total_size: u64,
    /// Flows are stored reducer-major: each reducer owns a block of this
    /// many consecutive flows.
    pub num_mappers: usize,
    /// Indices of this coflow's flows in [`Fabric::flows`].
    pub flows: Range<usize>,
    /// Unfinished flows, ascending.
    pub active: Vec<usize>,
    /// Sender ports with unfinished flows, with their flow counts.
    pub senders: PortCounts,
    /// Receiver ports with unfinished flows, with their flow counts.
    pub receivers: PortCounts,
    /// Bytes delivered so far (d).
    pub sent: f64,
    pub arrived: bool,
    pub finish_time: Option<f64>,
}

impl CoflowState {
    pub fn width(&self) -> usize {
        self.flows.len()
    }

    pub fn is_active(&self) -> bool {
        self.arrived && self.finish_time.is_none()
    }

    /// End (exclusive) of the reducer block containing flow `f`.
    pub fn block_end(&self, f: usize) -> usize {
        let local = f - self.flows.start;
        self.flows.start + (local / self.num_mappers + 1) * self.num_mappers
    }
}

/// Multiset of ports, sorted by port.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PortCounts {
    entries: Vec<(PortId, u32)>,
}

impl PortCounts {
    pub fn from_ports(ports: impl IntoIterator<Item = PortId>) -> Self {
        let mut all: Vec<PortId> = ports.into_iter().collect();
        all.sort_unstable();
        let mut entries: Vec<(PortId, u32)> = Vec::new();
        for p in all {
            match entries.last_mut() {
                Some((q, n)) if *q == p => *n += 1,
                _ => entries.push((p, 1)),
            }
        }
        Self { entries }
    }

    pub fn remove(&mut self, p: PortId) {
        if let Ok(i) = self.entries.binary_search_by_key(&p, |e| e.0) {
            self.entries[i].1 -= 1;
            if self.entries[i].1 == 0 {
                self.entries.remove(i);
            }
        }
    }

    pub fn ports(&self) -> impl Iterator<Item = PortId> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sparse per-flow rates (bytes/ms), keyed by flow index, ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatePlan {
    entries: Vec<(usize, f64)>,
}

impl RatePlan {
    /// Entries must be sorted by flow index without duplicates.
    pub fn from_sorted(entries: Vec<(usize, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        Self { entries }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn rate(&self, flow: usize) -> f64 {
        self.entries.binary_search_by_key(&flow, |e| e.0).map_or(0.0, |i| self.entries[i].1)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Fabric state shared between the event loop and the schedulers.
#[derive(Debug, Clone)]
pub struct Fabric {
    pub num_ports: u32,
    pub bandwidth: f64,
    pub now: f64,
    pub flows: Vec<FlowRuntime>,
    /// Indexed in trace order, which is arrival order.
    pub coflows: Vec<CoflowState>,
    /// Active coflows in arrival order.
    active: Vec<usize>,
    /// Flows with a positive rate.
    rated: Vec<usize>,
}

impl Fabric {
    pub fn new(trace: &Trace, num_ports: u32, bandwidth: f64) -> Self {
        let mut flows = Vec::with_capacity(trace.num_flows());
        let mut coflows = Vec::with_capacity(trace.coflows().len());
        for (ci, c) in trace.coflows().iter().enumerate() {
            let start = flows.len();
            flows.extend(c.flows().iter().map(|f| FlowRuntime {
                spec: *f,
                coflow: ci,
                remaining: f.size as f64,
                rate: 0.0,
                start_time: None,
                finish_time: None,
                is_pilot: false,
            }));
            coflows.push(CoflowState {
                id: c.id,
                arrival_ms: c.arrival_ms as f64,
                total_size: c.total_size(),
                num_mappers: c.mappers().len(),
                flows: start..flows.len(),
                active: Vec::new(),
                senders: PortCounts::default(),
                receivers: PortCounts::default(),
                sent: 0.0,
                arrived: false,
                finish_time: None,
            });
        }
        Self { num_ports, bandwidth, now: 0.0, flows, coflows, active: Vec::new(), rated: Vec::new() }
    }

    pub fn active_coflows(&self) -> &[usize] {
        &self.active
    }

    pub fn rated_flows(&self) -> &[usize] {
        &self.rated
    }

    pub fn flow(&self, f: usize) -> &FlowRuntime {
        &self.flows[f]
    }

    pub fn coflow(&self, c: usize) -> &CoflowState {
        &self.coflows[c]
    }

    /// Marks coflow `c` as arrived at the current time.
    pub fn arrive(&mut self, c: usize) {
        let st = &mut self.coflows[c];
        st.arrived = true;
        st.active = st.flows.clone().collect();
        let flows = &self.flows[st.flows.clone()];
        st.senders = PortCounts::from_ports(flows.iter().map(|f| f.spec.sender));
        st.receivers = PortCounts::from_ports(flows.iter().map(|f| f.spec.receiver));
        self.active.push(c);
    }

    /// Checks a plan against port capacities and flow liveness.
    pub fn check_plan(&self, plan: &RatePlan) -> Result<()> {
        let n = self.num_ports as usize;
        let mut up = vec![0f64; n];
        let mut down = vec![0f64; n];
        for &(f, rate) in plan.entries() {
            let fl = self.flows.get(f).ok_or_else(|| Error::Internal(format!("rate for unknown flow {f}")))?;
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::Internal(format!("invalid rate {rate} for flow {}", fl.spec.id)));
            }
            if fl.is_finished() || !self.coflows[fl.coflow].arrived {
                return Err(Error::Internal(format!("rate for inactive flow {}", fl.spec.id)));
            }
            up[fl.spec.sender as usize] += rate;
            down[fl.spec.receiver as usize] += rate;
        }
        let limit = self.bandwidth * (1.0 + CAPACITY_SLACK);
        for (direction, sums) in [("uplink", &up), ("downlink", &down)] {
            if let Some((p, &used)) = sums.iter().enumerate().find(|(_, &u)| u > limit) {
                return Err(Error::Capacity {
                    direction,
                    port: p as u32,
                    time_ms: self.now,
                    used,
                    capacity: self.bandwidth,
                });
            }
        }
        Ok(())
    }

    /// Replaces current rates with `plan`. Returns flows that start now.
    pub fn set_rates(&mut self, plan: &RatePlan) -> Result<Vec<usize>> {
        self.check_plan(plan)?;
        for &f in &self.rated {
            self.flows[f].rate = 0.0;
        }
        self.rated.clear();
        let mut started = Vec::new();
        for &(f, rate) in plan.entries() {
            if rate <= 0.0 {
                continue;
            }
            let fl = &mut self.flows[f];
            fl.rate = rate;
            if fl.start_time.is_none() {
                fl.start_time = Some(self.now);
                started.push(f);
            }
            self.rated.push(f);
        }
        Ok(started)
    }
}

/// Advances every rated flow by `dt` ms and returns the flows that completed,
/// ascending. `dt` must not carry any flow past its completion.
pub fn apply_rates(fabric: &mut Fabric, dt: f64) -> Result<Vec<usize>> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::Internal(format!("non-positive time step {dt}")));
    }
    let end = fabric.now + dt;
    let mut done = Vec::new();
    for &f in &fabric.rated {
        let fl = &mut fabric.flows[f];
        let delta = fl.rate * dt;
        let left = fl.remaining - delta;
        if left < -COMPLETION_EPS {
            return Err(Error::Internal(format!("flow {} overshoots completion by {} bytes", fl.spec.id, -left)));
        }
        let delivered = if left <= COMPLETION_EPS { fl.remaining } else { delta };
        fl.remaining -= delivered;
        fabric.coflows[fl.coflow].sent += delivered;
        if left <= COMPLETION_EPS {
            fl.remaining = 0.0;
            fl.finish_time = Some(end);
            done.push(f);
        }
    }
    fabric.now = end;
    if !done.is_empty() {
        fabric.rated.retain(|&f| fabric.flows[f].finish_time.is_none());
        for &f in &done {
            fabric.flows[f].rate = 0.0;
        }
        done.sort_unstable();
    }
    Ok(done)
}

/// What ends the current interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NextEvent {
    At(f64),
    /// Nothing is pending: the simulation is over.
    End,
    /// Unfinished flows exist but nothing can make progress.
    Stalled,
}

/// Earliest of the next arrival, the next completion under current rates and
/// the next tick.
pub fn next_event_time(fabric: &Fabric, next_arrival: Option<f64>, next_tick: Option<f64>) -> NextEvent {
    let completion = fabric
        .rated
        .iter()
        .map(|&f| {
            let fl = &fabric.flows[f];
            fabric.now + fl.remaining / fl.rate
        })
        .reduce(f64::min);
    let t = [next_arrival, completion, next_tick].into_iter().flatten().reduce(f64::min);
    match t {
        Some(t) => NextEvent::At(t.max(fabric.now)),
        None if fabric.active.is_empty() => NextEvent::End,
        None => NextEvent::Stalled,
    }
}

fn next_tick(now: f64, delta: f64) -> f64 {
    let mut k = (now / delta).floor() + 1.0;
    if k * delta <= now {
        k += 1.0;
    }
    k * delta
}

fn on_boundary(t: f64, delta: f64) -> bool {
    (t / delta).round() * delta == t
}

/// Runs `trace` to completion under `config` and returns the event log.
pub fn run_simulation(trace: &Trace, config: &SimConfig) -> Result<EventLog> {
    run_simulation_observed(trace, config, |_, _| {})
}

/// [`run_simulation`], calling `on_plan` with the fabric state and each new
/// plan before it is applied.
pub fn run_simulation_observed(
    trace: &Trace,
    config: &SimConfig,
    mut on_plan: impl FnMut(&Fabric, &RatePlan),
) -> Result<EventLog> {
    config.validate()?;
    if trace.num_ports > config.num_ports {
        return Err(Error::Param(format!(
            "trace uses {} ports but the fabric has {}",
            trace.num_ports, config.num_ports
        )));
    }
    let mut fabric = Fabric::new(trace, config.num_ports, config.port_bandwidth);
    let mut scheduler = sched::build(config, &fabric)?;
    let mut log = EventLog::new(config.scheduler.to_string());
    let tick_every = scheduler.tick_interval(config.delta);

    let mut next_arrival = 0usize;
    let mut events = Vec::new();
    let mut last_tick = None;
    loop {
        let arrival_at = fabric.coflows.get(next_arrival).map(|c| c.arrival_ms);
        let tick_at = tick_every.filter(|_| !fabric.active.is_empty()).map(|d| next_tick(fabric.now, d));
        let t = match next_event_time(&fabric, arrival_at, tick_at) {
            NextEvent::At(t) => t,
            NextEvent::End => break,
            NextEvent::Stalled => {
                return Err(Error::Internal(format!(
                    "no flow can make progress at t={} ms with {} active coflows",
                    fabric.now,
                    fabric.active.len()
                )))
            }
        };

        events.clear();
        let dt = t - fabric.now;
        let done = if dt > 0.0 { apply_rates(&mut fabric, dt)? } else { Vec::new() };
        fabric.now = t;

        let mut finished_coflows = Vec::new();
        for &f in &done {
            let fl = &fabric.flows[f];
            log.push(t, fabric.coflows[fl.coflow].id, Some(fl.spec.id), EventKind::FlowFinish, fl.spec.size as f64);
            events.push(SimEvent::FlowDone(f));
            let (c, s, r) = (fl.coflow, fl.spec.sender, fl.spec.receiver);
            let st = &mut fabric.coflows[c];
            st.senders.remove(s);
            st.receivers.remove(r);
            if st.senders.is_empty() {
                finished_coflows.push(c);
            }
        }
        // `done` is ascending, so flows of one coflow are contiguous
        for chunk in done.chunk_by(|&a, &b| fabric.flows[a].coflow == fabric.flows[b].coflow) {
            let st = &mut fabric.coflows[fabric.flows[chunk[0]].coflow];
            st.active.retain(|f| chunk.binary_search(f).is_err());
        }
        for &c in &finished_coflows {
            fabric.coflows[c].finish_time = Some(t);
        }
        for &c in &finished_coflows {
            log.push(t, fabric.coflows[c].id, None, EventKind::CoflowFinish, fabric.coflows[c].sent);
            events.push(SimEvent::CoflowDone(c));
        }
        if !finished_coflows.is_empty() {
            fabric.active.retain(|&c| fabric.coflows[c].finish_time.is_none());
        }

        while let Some(c) = fabric.coflows.get(next_arrival).filter(|c| c.arrival_ms <= t) {
            log.push(t, c.id, None, EventKind::Arrival, c.total_size as f64);
            fabric.arrive(next_arrival);
            events.push(SimEvent::Arrival(next_arrival));
            next_arrival += 1;
        }
        // a δ boundary ticks when reached with coflows in the system,
        // including arrivals that land exactly on one
        let tick = tick_every
            .is_some_and(|d| tick_at.is_some_and(|tick| t >= tick) || (on_boundary(t, d) && last_tick != Some(t)));
        if tick && !fabric.active.is_empty() {
            last_tick = Some(t);
            events.push(SimEvent::Tick);
        }

        let mut ctx = SchedCtx::new(&fabric, &mut log);
        let replan = scheduler.on_events(&mut ctx, &events)?;
        let pilots = ctx.take_pilots();
        for f in pilots {
            fabric.flows[f].is_pilot = true;
        }
        if replan {
            let plan = scheduler.allocate(&fabric);
            on_plan(&fabric, &plan);
            for f in fabric.set_rates(&plan)? {
                let fl = &fabric.flows[f];
                log.push(t, fabric.coflows[fl.coflow].id, Some(fl.spec.id), EventKind::FlowStart, fl.rate);
            }
        }
    }
    log.check_complete(fabric.coflows.len())?;
    Ok(log)
}
