//! Checks shared by the property suite and the acceptance runner.

#![allow(dead_code)]

use std::collections::HashMap;

use coflow_core::engine::{EventKind, Fabric};
use coflow_core::sched::alloc::{Budget, PlanBuilder, QueueAllocator};
use coflow_core::sched::pilot::{priority_metric, RankInputs};
use coflow_core::sched::Sebf;
use coflow_core::trace::synth::{random_trace, RandomTraceConfig};
use coflow_core::trace::{parse_trace, CoflowSpec, Trace};
use coflow_core::{
    run_simulation, run_simulation_observed, EventLog, InterCoflowPolicy, RatePlan, SchedulerKind, SchedulerParams,
    SimConfig, MB,
};

pub type Check = Result<(), String>;

const SLACK: f64 = 1e-9;

pub fn small_trace(seed: u64) -> Trace {
    random_trace(&RandomTraceConfig::default(), seed)
}

pub fn config(trace: &Trace, kind: SchedulerKind, params: SchedulerParams) -> SimConfig {
    SimConfig::new(trace.num_ports, kind).with_params(params)
}

fn port_sums(fabric: &Fabric, plan: &RatePlan) -> (Vec<f64>, Vec<f64>) {
    let n = fabric.num_ports as usize;
    let (mut up, mut down) = (vec![0.0; n], vec![0.0; n]);
    for &(f, r) in plan.entries() {
        let s = &fabric.flows[f].spec;
        up[s.sender as usize] += r;
        down[s.receiver as usize] += r;
    }
    (up, down)
}

/// Ports held by pilot flows that have not finished yet.
fn pilot_ports(fabric: &Fabric) -> (Vec<bool>, Vec<bool>) {
    let n = fabric.num_ports as usize;
    let (mut up, mut down) = (vec![false; n], vec![false; n]);
    for &c in fabric.active_coflows() {
        for &f in &fabric.coflows[c].active {
            let fl = &fabric.flows[f];
            if fl.is_pilot {
                up[fl.spec.sender as usize] = true;
                down[fl.spec.receiver as usize] = true;
            }
        }
    }
    (up, down)
}

/// Runs the trace, checking capacity and work conservation of every plan.
///
/// A flow counts as idle when both of its ports have spare capacity; under
/// the sampling scheduler, non-pilot flows at a port held by a pending pilot
/// are exempt.
pub fn run_checked(trace: &Trace, cfg: &SimConfig) -> Result<EventLog, String> {
    let mut failure: Option<String> = None;
    let bw = cfg.port_bandwidth;
    let sampling = cfg.scheduler == SchedulerKind::Sampling;
    let log = run_simulation_observed(trace, cfg, |fabric, plan| {
        if failure.is_some() {
            return;
        }
        let (up, down) = port_sums(fabric, plan);
        if let Some(p) = (0..up.len()).find(|&p| up[p] > bw * (1.0 + SLACK) || down[p] > bw * (1.0 + SLACK)) {
            failure = Some(format!("port {p} over capacity at t={}", fabric.now));
            return;
        }
        let (pu, pd) = pilot_ports(fabric);
        for &c in fabric.active_coflows() {
            for &f in &fabric.coflows[c].active {
                let fl = &fabric.flows[f];
                let (s, r) = (fl.spec.sender as usize, fl.spec.receiver as usize);
                if sampling && !fl.is_pilot && (pu[s] || pd[r]) {
                    continue;
                }
                if up[s] < bw * (1.0 - SLACK) && down[r] < bw * (1.0 - SLACK) {
                    failure = Some(format!("flow {} idles with spare capacity at t={}", fl.spec.id, fabric.now));
                    return;
                }
            }
        }
    })
    .map_err(|e| format!("{}: {e}", cfg.scheduler))?;
    match failure {
        Some(msg) => Err(format!("{}: {msg}", cfg.scheduler)),
        None => Ok(log),
    }
}

/// Every flow finishes once with exactly its size; every coflow's delivered
/// bytes equal its total.
pub fn check_conservation(trace: &Trace, log: &EventLog) -> Check {
    let mut finished = HashMap::new();
    for e in log.events.iter().filter(|e| e.kind == EventKind::FlowFinish) {
        let id = e.flow_id.ok_or("flow finish without flow id")?;
        if finished.insert(id, e.value).is_some() {
            return Err(format!("flow {id} finished twice"));
        }
    }
    if finished.len() != trace.num_flows() {
        return Err(format!("{} of {} flows finished", finished.len(), trace.num_flows()));
    }
    for f in trace.coflows().iter().flat_map(|c| c.flows()) {
        if finished[&f.id] != f.size as f64 {
            return Err(format!("flow {} delivered {} of {}", f.id, finished[&f.id], f.size));
        }
    }
    let totals: HashMap<u64, u64> = trace.coflows().iter().map(|c| (c.id, c.total_size())).collect();
    let mut done = 0;
    for e in log.events.iter().filter(|e| e.kind == EventKind::CoflowFinish) {
        let total = totals[&e.coflow_id] as f64;
        if (e.value - total).abs() > 1e-6 * total.max(1.0) {
            return Err(format!("coflow {} delivered {} of {total}", e.coflow_id, e.value));
        }
        done += 1;
    }
    if done != trace.coflows().len() {
        return Err(format!("{done} of {} coflows finished", trace.coflows().len()));
    }
    Ok(())
}

pub fn check_deterministic(trace: &Trace, cfg: &SimConfig) -> Check {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    run_simulation(trace, cfg).map_err(|e| e.to_string())?.write_csv(&mut a).map_err(|e| e.to_string())?;
    run_simulation(trace, cfg).map_err(|e| e.to_string())?.write_csv(&mut b).map_err(|e| e.to_string())?;
    if a == b {
        Ok(())
    } else {
        Err(format!("{} logs differ between runs", cfg.scheduler))
    }
}

/// Aalo queues start at 0, only move down, and follow the bytes sent.
pub fn check_aalo_monotone(log: &EventLog, params: &SchedulerParams) -> Check {
    for m in log.coflows() {
        let qs: Vec<usize> = m.queue_changes.iter().map(|q| q.1).collect();
        if qs.first() != Some(&0) || !qs.windows(2).all(|w| w[0] < w[1]) {
            return Err(format!("coflow {} queue trajectory {qs:?}", m.id));
        }
        if *qs.last().unwrap() > params.queue_for(m.total_bytes as f64) {
            return Err(format!("coflow {} demoted past its size", m.id));
        }
        for &(_, q, d) in &m.queue_changes {
            if q != params.queue_for(d * (1.0 + 1e-12)) {
                return Err(format!("coflow {} in q{q} with {d} bytes sent", m.id));
            }
        }
    }
    Ok(())
}

/// Coflows no wider than `t` bypass sampling; wider ones are piloted.
pub fn check_bypass(trace: &Trace, log: &EventLog, t: usize) -> Check {
    for (m, c) in log.coflows().iter().zip(trace.coflows()) {
        let thin = c.width() <= t;
        if m.bypassed != thin || m.pilots.is_empty() != thin || m.pilot_done.is_some() == thin {
            return Err(format!("coflow {} of width {} with T={t}", m.id, c.width()));
        }
    }
    Ok(())
}

/// Single-flow coflows sharing uplink 0, all in one queue in `order`: the
/// head takes the whole uplink.
pub fn check_queue_order(receivers: &[u32], order: &[usize], fast: bool) -> Check {
    let coflows: Vec<CoflowSpec> = receivers
        .iter()
        .enumerate()
        .map(|(i, &r)| CoflowSpec::new(i as u64, 0, vec![0], vec![r], vec![MB]).unwrap())
        .collect();
    let ports = receivers.iter().max().map_or(1, |m| m + 1);
    let trace = Trace::new(ports, coflows).map_err(|e| e.to_string())?;
    let mut fabric = Fabric::new(&trace, ports, 1000.0);
    for c in 0..trace.coflows().len() {
        fabric.arrive(c);
    }
    let params = SchedulerParams { fast_rate_heuristic: fast, ..Default::default() };
    let mut queues = vec![Vec::new(); params.k];
    queues[0] = order.to_vec();
    let mut budget = Budget::full(ports, 1000.0);
    let mut plan = PlanBuilder::new(fabric.flows.len());
    QueueAllocator::new(ports).allocate(&fabric, &queues, &params, &mut budget, &mut plan);
    let plan = plan.build();
    let head = fabric.coflows[order[0]].flows.start;
    if plan.rate(head) == 1000.0 && plan.entries().len() == 1 {
        Ok(())
    } else {
        Err(format!("queue order {order:?} served as {:?}", plan.entries()))
    }
}

/// (l, n, d, per-port contention) of one coflow to rank.
pub type RankCase = (f64, usize, f64, Vec<usize>);

/// Every policy orders the cases identically after scaling bytes by `kappa`.
pub fn check_policy_scale(cases: &[RankCase], kappa: f64) -> Check {
    let rank = |scale: f64, policy: InterCoflowPolicy| {
        let mut keyed: Vec<(f64, usize)> = cases
            .iter()
            .enumerate()
            .map(|(i, (l, n, d, cp))| {
                let x = RankInputs {
                    l: l * scale,
                    n: *n,
                    d: d * scale,
                    port_contention: cp.clone(),
                    contention: cp.iter().sum(),
                };
                (priority_metric(&x, policy), i)
            })
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        keyed.into_iter().map(|k| k.1).collect::<Vec<_>>()
    };
    for policy in InterCoflowPolicy::ALL {
        if rank(1.0, policy) != rank(kappa, policy) {
            return Err(format!("policy {policy} changes order under scale {kappa}"));
        }
    }
    Ok(())
}

/// SEBF orders a random trace identically after scaling every flow by 2^j.
pub fn check_sebf_scale(seed: u64, j: u32) -> Check {
    let cfg = RandomTraceConfig { num_coflows: 30, max_flow_bytes: 64 * MB, ..Default::default() };
    let trace = random_trace(&cfg, seed);
    let scaled: Vec<CoflowSpec> = trace
        .coflows()
        .iter()
        .map(|c| c.with_sizes(c.flows().iter().map(|f| f.size << j).collect()).unwrap())
        .collect();
    let scaled = Trace::new(trace.num_ports, scaled).unwrap();
    let order = |t: &Trace| {
        let mut fabric = Fabric::new(t, t.num_ports, 131_072.0);
        for c in 0..t.coflows().len() {
            fabric.arrive(c);
        }
        Sebf::new(&fabric).order(&fabric)
    };
    if order(&trace) == order(&scaled) {
        Ok(())
    } else {
        Err(format!("SEBF order changes under scale 2^{j} (seed {seed})"))
    }
}

/// A hand-simulated instance and its expected (coflow id, CCT) pairs.
pub struct Golden {
    pub name: &'static str,
    pub trace: &'static str,
    pub kind: SchedulerKind,
    pub thin_limit: usize,
    pub ccts: &'static [(u64, f64)],
}

/// 1 MB takes 8 ms at the default bandwidth.
pub const GOLDENS: &[Golden] = &[
    // 100 MB then 50 MB on one link, in id order
    Golden {
        name: "fifo two-coflow",
        trace: "2 2\n1 0 1 0 1 1:100\n2 0 1 0 1 1:50\n",
        kind: SchedulerKind::Fifo,
        thin_limit: 7,
        ccts: &[(1, 800.0), (2, 1200.0)],
    },
    // equal split until the 50 MB coflow ends at 800 ms, then 50 MB alone
    Golden {
        name: "fair two-coflow",
        trace: "2 2\n1 0 1 0 1 1:100\n2 0 1 0 1 1:50\n",
        kind: SchedulerKind::Fair,
        thin_limit: 7,
        ccts: &[(1, 1200.0), (2, 800.0)],
    },
    // 2x1: the pilot owns the shared reducer, so the other flow follows it
    Golden {
        name: "piloting 2x1",
        trace: "3 1\n1 0 2 0 1 1 2:2\n",
        kind: SchedulerKind::Sampling,
        thin_limit: 1,
        ccts: &[(1, 16.0)],
    },
    // 2x2: the flow on the free port pair runs beside the pilot
    Golden {
        name: "piloting 2x2",
        trace: "4 1\n1 0 2 0 1 2 2:2 3:2\n",
        kind: SchedulerKind::Sampling,
        thin_limit: 1,
        ccts: &[(1, 16.0)],
    },
];

pub fn check_golden(g: &Golden) -> Check {
    let trace = parse_trace(g.trace).map_err(|e| e.to_string())?;
    let params = SchedulerParams { t: g.thin_limit, ..Default::default() };
    let log = run_simulation(&trace, &config(&trace, g.kind, params)).map_err(|e| e.to_string())?;
    let got: Vec<(u64, f64)> = log.coflows().iter().map(|m| (m.id, m.cct().unwrap_or(f64::NAN))).collect();
    if got == g.ccts {
        Ok(())
    } else {
        Err(format!("{}: got {got:?}, expected {:?}", g.name, g.ccts))
    }
}
