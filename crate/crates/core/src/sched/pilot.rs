//! Pilot selection, size estimation and contention-based ranking.

use std::collections::HashMap;

use crate::sched::{InterCoflowPolicy, PilotPolicy};
use crate::trace::{CoflowSpec, PortId};

/// Number of pilot flows for `coflow` under `policy`.
pub fn num_pilots(coflow: &CoflowSpec, policy: PilotPolicy) -> usize {
    match policy {
        PilotPolicy::Constant(k) => k.min(coflow.width()),
        PilotPolicy::FracSenders(p) => ((p * coflow.num_senders() as f64).floor() as usize).max(1),
        PilotPolicy::FracFlows(p) => ((p * coflow.width() as f64).floor() as usize).max(1),
    }
    .min(coflow.width())
}

/// Per-port occupancy used for pilot placement and contention.
#[derive(Debug, Clone)]
pub struct PortBusyStats {
    pilots_up: Vec<u32>,
    pilots_down: Vec<u32>,
    /// Per port: coflow → unfinished flow endpoints at the port.
    port_coflows: Vec<HashMap<usize, u32>>,
    /// Per coflow: port → unfinished flow endpoints at the port.
    coflow_ports: HashMap<usize, HashMap<PortId, u32>>,
    stamp: Vec<usize>,
    generation: usize,
}

impl PortBusyStats {
    pub fn new(num_ports: u32) -> Self {
        let n = num_ports as usize;
        Self {
            pilots_up: vec![0; n],
            pilots_down: vec![0; n],
            port_coflows: vec![HashMap::new(); n],
            coflow_ports: HashMap::new(),
            stamp: Vec::new(),
            generation: 0,
        }
    }

    pub fn pilots_at_sender(&self, p: PortId) -> u32 {
        self.pilots_up[p as usize]
    }

    pub fn pilots_at_receiver(&self, p: PortId) -> u32 {
        self.pilots_down[p as usize]
    }

    pub fn pilot_assigned(&mut self, sender: PortId, receiver: PortId) {
        self.pilots_up[sender as usize] += 1;
        self.pilots_down[receiver as usize] += 1;
    }

    pub fn pilot_done(&mut self, sender: PortId, receiver: PortId) {
        self.pilots_up[sender as usize] -= 1;
        self.pilots_down[receiver as usize] -= 1;
    }

    /// Registers the unfinished flows of coflow `c`.
    pub fn add_flows(&mut self, c: usize, flows: impl IntoIterator<Item = (PortId, PortId)>) {
        let ports = self.coflow_ports.entry(c).or_default();
        for (s, r) in flows {
            for p in [s, r] {
                *ports.entry(p).or_default() += 1;
                *self.port_coflows[p as usize].entry(c).or_default() += 1;
            }
        }
    }

    pub fn flow_done(&mut self, c: usize, sender: PortId, receiver: PortId) {
        let Some(ports) = self.coflow_ports.get_mut(&c) else { return };
        for p in [sender, receiver] {
            if let Some(n) = ports.get_mut(&p) {
                *n -= 1;
                if *n == 0 {
                    ports.remove(&p);
                }
            }
            let at = &mut self.port_coflows[p as usize];
            if let Some(n) = at.get_mut(&c) {
                *n -= 1;
                if *n == 0 {
                    at.remove(&c);
                }
            }
        }
        if ports.is_empty() {
            self.coflow_ports.remove(&c);
        }
    }

    /// c^p: coflows other than `exclude` with unfinished flows at `port`.
    pub fn port_contention(&self, port: PortId, exclude: usize) -> usize {
        let at = &self.port_coflows[port as usize];
        at.len() - usize::from(at.contains_key(&exclude))
    }

    /// Ports where coflow `c` still has unfinished flows, ascending.
    pub fn ports_of(&self, c: usize) -> Vec<PortId> {
        let mut v: Vec<PortId> = self.coflow_ports.get(&c).map(|m| m.keys().copied().collect()).unwrap_or_default();
        v.sort_unstable();
        v
    }

    /// c: distinct other coflows sharing any port where `c` has unfinished flows.
    pub fn global_contention(&mut self, c: usize) -> usize {
        let Some(ports) = self.coflow_ports.get(&c) else { return 0 };
        self.generation += 1;
        let mut count = 0;
        for &p in ports.keys() {
            for &other in self.port_coflows[p as usize].keys() {
                if other == c {
                    continue;
                }
                if self.stamp.len() <= other {
                    self.stamp.resize(other + 1, 0);
                }
                if self.stamp[other] != self.generation {
                    self.stamp[other] = self.generation;
                    count += 1;
                }
            }
        }
        count
    }
}

/// Picks up to `k` distinct flows of `coflow` on the least busy ports.
///
/// Starting from the sender with the fewest pilots, receivers are scanned in
/// order of increasing pilot count and the first existing unselected flow is
/// taken. Counts are updated in `stats` after every pick. Ties go to the lower
/// port index, then the lower flow id. Returns indices into `coflow.flows()`.
pub fn select_pilot_flows(coflow: &CoflowSpec, k: usize, stats: &mut PortBusyStats) -> Vec<usize> {
    let mut by_pair: HashMap<(PortId, PortId), Vec<usize>> = HashMap::new();
    for (i, f) in coflow.flows().iter().enumerate() {
        by_pair.entry((f.sender, f.receiver)).or_default().push(i);
    }
    for v in by_pair.values_mut() {
        v.sort_by_key(|&i| (coflow.flows()[i].id, i));
        v.reverse();
    }
    let mut senders: Vec<PortId> = coflow.mappers().to_vec();
    senders.sort_unstable();
    senders.dedup();
    let mut receivers: Vec<PortId> = coflow.reducers().to_vec();
    receivers.sort_unstable();
    receivers.dedup();
    // unselected flows left per sender
    let mut left: HashMap<PortId, usize> = HashMap::new();
    for f in coflow.flows() {
        *left.entry(f.sender).or_default() += 1;
    }

    let k = k.min(coflow.width());
    let mut chosen = Vec::with_capacity(k);
    while chosen.len() < k {
        let Some(&s) = senders.iter().filter(|s| left[s] > 0).min_by_key(|&&s| (stats.pilots_at_sender(s), s)) else {
            break;
        };
        let mut order = receivers.clone();
        order.sort_by_key(|&r| (stats.pilots_at_receiver(r), r));
        for r in order {
            if let Some(i) = by_pair.get_mut(&(s, r)).and_then(Vec::pop) {
                chosen.push(i);
                *left.get_mut(&s).unwrap() -= 1;
                stats.pilot_assigned(s, r);
                break;
            }
        }
    }
    chosen
}

/// (S, l): estimated total size rounded to a byte, and mean pilot size.
///
/// # Panics
/// If `pilot_sizes` is empty.
pub fn estimate_size(pilot_sizes: &[u64], n: usize) -> (f64, f64) {
    assert!(!pilot_sizes.is_empty(), "size estimate needs at least one pilot");
    let l = pilot_sizes.iter().map(|&x| x as f64).sum::<f64>() / pilot_sizes.len() as f64;
    ((l * n as f64).round(), l)
}

/// Inputs of the ranking metric for one coflow.
#[derive(Debug, Clone, Default)]
pub struct RankInputs {
    /// Mean flow length l.
    pub l: f64,
    /// Flow count n.
    pub n: usize,
    /// Bytes sent d.
    pub d: f64,
    /// c^p for each port with unfinished flows.
    pub port_contention: Vec<usize>,
    /// Global contention c.
    pub contention: usize,
}

impl RankInputs {
    pub fn from_stats(
        c: usize,
        l: f64,
        n: usize,
        d: f64,
        stats: &mut PortBusyStats,
        policy: InterCoflowPolicy,
    ) -> Self {
        use InterCoflowPolicy::*;
        let mut out = Self { l, n, d, ..Default::default() };
        match policy {
            A | B => {}
            C | F => out.contention = stats.global_contention(c),
            D | E => out.port_contention = stats.ports_of(c).into_iter().map(|p| stats.port_contention(p, c)).collect(),
        }
        out
    }
}

/// The scalar a policy ranks by; lower is served first.
pub fn priority_metric(x: &RankInputs, policy: InterCoflowPolicy) -> f64 {
    let contention = || x.port_contention.iter().map(|&c| c as f64);
    match policy {
        InterCoflowPolicy::A => x.l * x.n as f64,
        InterCoflowPolicy::B => x.l * x.n as f64 - x.d,
        InterCoflowPolicy::C => x.contention as f64,
        InterCoflowPolicy::D => contention().sum::<f64>() * x.l,
        InterCoflowPolicy::E => contention().fold(0.0, f64::max) * x.l,
        InterCoflowPolicy::F => x.contention as f64 * x.l,
    }
}
