//! Sampling scheduler: learns each wide coflow's size from a few pilot flows
//! and ranks it once the pilots finish.

use crate::engine::{EventKind, Fabric, RatePlan};
use crate::sched::alloc::{greedy_coflow, greedy_flows, Budget, PlanBuilder, QueueAllocator};
use crate::sched::pilot::{estimate_size, num_pilots, priority_metric, select_pilot_flows, PortBusyStats, RankInputs};
use crate::sched::{SchedCtx, Scheduler, SchedulerKind, SchedulerParams, SimEvent};
use crate::trace::CoflowSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Waiting,
    Bypassed,
    Piloting,
    Estimated,
    Finished,
}

#[derive(Debug, Clone)]
struct Runtime {
    phase: Phase,
    pilots: Vec<usize>,
    pilots_left: usize,
    est_size: f64,
    avg_len: f64,
    queue: Option<usize>,
    enqueue_time: f64,
}

pub struct SamplingScheduler {
    params: SchedulerParams,
    coflows: Vec<Runtime>,
    stats: PortBusyStats,
    queues: QueueAllocator,
    plan: PlanBuilder,
}

impl SamplingScheduler {
    pub fn new(params: SchedulerParams, fabric: &Fabric) -> Self {
        let rt = Runtime {
            phase: Phase::Waiting,
            pilots: Vec::new(),
            pilots_left: 0,
            est_size: 0.0,
            avg_len: 0.0,
            queue: None,
            enqueue_time: 0.0,
        };
        Self {
            params,
            coflows: vec![rt; fabric.coflows.len()],
            stats: PortBusyStats::new(fabric.num_ports),
            queues: QueueAllocator::new(fabric.num_ports),
            plan: PlanBuilder::new(fabric.flows.len()),
        }
    }

    pub fn phase(&self, c: usize) -> Phase {
        self.coflows[c].phase
    }

    fn arrive(&mut self, ctx: &mut SchedCtx<'_>, c: usize) {
        let fabric = ctx.fabric;
        let st = &fabric.coflows[c];
        let flows = &fabric.flows[st.flows.clone()];
        self.stats.add_flows(c, flows.iter().map(|f| (f.spec.sender, f.spec.receiver)));
        let now = ctx.now();
        if st.width() <= self.params.t {
            let rt = &mut self.coflows[c];
            rt.phase = Phase::Bypassed;
            ctx.log.push(now, st.id, None, EventKind::Bypass, st.width() as f64);
            self.enqueue(ctx, c, 0);
            return;
        }
        // a lightweight view of the coflow for pilot placement
        let view = coflow_view(fabric, c);
        let k = num_pilots(&view, self.params.pilot_policy);
        let picked = select_pilot_flows(&view, k, &mut self.stats);
        let rt = &mut self.coflows[c];
        rt.phase = Phase::Piloting;
        rt.pilots = picked.into_iter().map(|i| st.flows.start + i).collect();
        rt.pilots_left = rt.pilots.len();
        for &f in &rt.pilots {
            ctx.mark_pilot(f);
            ctx.log.push(now, st.id, Some(fabric.flows[f].spec.id), EventKind::PilotStart, 0.0);
        }
    }

    fn enqueue(&mut self, ctx: &mut SchedCtx<'_>, c: usize, q: usize) {
        let rt = &mut self.coflows[c];
        if rt.queue == Some(q) {
            return;
        }
        rt.queue = Some(q);
        rt.enqueue_time = ctx.now();
        let st = &ctx.fabric.coflows[c];
        ctx.log.push(ctx.now(), st.id, None, EventKind::Queue, q as f64);
        ctx.log.push(ctx.now(), st.id, None, EventKind::BytesSent, st.sent);
    }

    fn pilot_phase_done(&mut self, ctx: &mut SchedCtx<'_>, c: usize) {
        let fabric = ctx.fabric;
        let sizes: Vec<u64> = self.coflows[c].pilots.iter().map(|&f| fabric.flows[f].spec.size).collect();
        let st = &fabric.coflows[c];
        let (s, l) = estimate_size(&sizes, st.width());
        let rt = &mut self.coflows[c];
        rt.phase = Phase::Estimated;
        rt.est_size = s;
        rt.avg_len = l;
        ctx.log.push(ctx.now(), st.id, None, EventKind::PilotDone, s);
    }

    fn rerank(&mut self, ctx: &mut SchedCtx<'_>) {
        let fabric = ctx.fabric;
        for &c in fabric.active_coflows() {
            let st = &fabric.coflows[c];
            let q = match self.coflows[c].phase {
                Phase::Bypassed => {
                    let cur = self.coflows[c].queue.unwrap_or(0);
                    cur.max(self.params.queue_for(st.sent))
                }
                Phase::Estimated => {
                    let rt = &self.coflows[c];
                    let policy = self.params.intercoflow_policy;
                    let x = RankInputs::from_stats(c, rt.avg_len, st.width(), st.sent, &mut self.stats, policy);
                    self.params.queue_for(priority_metric(&x, policy).max(0.0))
                }
                _ => continue,
            };
            self.enqueue(ctx, c, q);
        }
    }
}

fn coflow_view(fabric: &Fabric, c: usize) -> CoflowSpec {
    let st = &fabric.coflows[c];
    let flows = &fabric.flows[st.flows.clone()];
    let m = st.num_mappers;
    let mappers = flows[..m].iter().map(|f| f.spec.sender).collect();
    let reducers = flows.iter().step_by(m).map(|f| f.spec.receiver).collect();
    let sizes = flows.iter().map(|f| f.spec.size).collect();
    CoflowSpec::new(st.id, 0, mappers, reducers, sizes).expect("fabric holds valid coflows")
}

impl Scheduler for SamplingScheduler {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Sampling
    }

    fn on_events(&mut self, ctx: &mut SchedCtx<'_>, events: &[SimEvent]) -> Result<bool> {
        let mut rerank = false;
        let mut replan = false;
        for ev in events {
            match *ev {
                SimEvent::FlowDone(f) => {
                    replan = true;
                    let fl = &ctx.fabric.flows[f];
                    let c = fl.coflow;
                    self.stats.flow_done(c, fl.spec.sender, fl.spec.receiver);
                    let rt = &mut self.coflows[c];
                    if rt.phase == Phase::Piloting && rt.pilots.contains(&f) {
                        self.stats.pilot_done(fl.spec.sender, fl.spec.receiver);
                        rt.pilots_left -= 1;
                        if rt.pilots_left == 0 {
                            self.pilot_phase_done(ctx, c);
                            rerank = true;
                        }
                    }
                }
                SimEvent::CoflowDone(c) => {
                    let rt = &mut self.coflows[c];
                    if rt.phase == Phase::Finished || rt.phase == Phase::Waiting {
                        return Err(Error::Internal(format!("completion of unknown coflow index {c}")));
                    }
                    rt.phase = Phase::Finished;
                    rt.queue = None;
                    rerank = true;
                }
                SimEvent::Arrival(c) => {
                    self.arrive(ctx, c);
                    rerank = true;
                }
                SimEvent::Tick => {}
            }
        }
        if rerank {
            self.rerank(ctx);
        }
        Ok(replan || rerank)
    }

    fn allocate(&mut self, fabric: &Fabric) -> RatePlan {
        let mut budget = Budget::full(fabric.num_ports, fabric.bandwidth);
        let piloting: Vec<usize> =
            fabric.active_coflows().iter().copied().filter(|&c| self.coflows[c].phase == Phase::Piloting).collect();
        let pending = |f: &usize| !fabric.flows[*f].is_finished();

        // pilots first, FIFO by coflow arrival
        for &c in &piloting {
            greedy_flows(fabric, self.coflows[c].pilots.iter().copied().filter(pending), &mut budget, &mut self.plan);
        }
        // ports carrying a pending pilot serve nothing else
        for &c in &piloting {
            for f in self.coflows[c].pilots.iter().copied().filter(pending) {
                let s = &fabric.flows[f].spec;
                budget.up[s.sender as usize] = 0.0;
                budget.down[s.receiver as usize] = 0.0;
            }
        }

        let mut queues: Vec<Vec<usize>> = vec![Vec::new(); self.params.k];
        for &c in fabric.active_coflows() {
            if let Some(q) = self.coflows[c].queue {
                queues[q].push(c);
            }
        }
        for q in &mut queues {
            q.sort_by(|&a, &b| {
                let (ra, rb) = (&self.coflows[a], &self.coflows[b]);
                ra.enqueue_time.total_cmp(&rb.enqueue_time).then(a.cmp(&b))
            });
        }
        self.queues.allocate(fabric, &queues, &self.params, &mut budget, &mut self.plan);

        // leftover capacity goes to the non-pilot flows of sampling coflows
        for &c in &piloting {
            greedy_coflow(fabric, c, &mut budget, &mut self.plan);
        }
        self.plan.build()
    }
}
