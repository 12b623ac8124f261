//! Aalo: coflows start in the top queue and move down as their bytes sent
//! cross the queue thresholds. The oracle variant places each coflow in its
//! final queue at arrival.
//!
//! Both are tick-driven: queues and rates are recomputed only at δ
//! boundaries, so arrivals wait for the next tick and capacity freed by a
//! completion idles until then.

use crate::engine::{EventKind, Fabric, RatePlan};
use crate::sched::alloc::{Budget, PlanBuilder, QueueAllocator};
use crate::sched::{SchedCtx, Scheduler, SchedulerKind, SchedulerParams, SimEvent};
use crate::Result;

/// Relative slack so that d landing exactly on a threshold after float
/// accumulation still demotes.
const THRESHOLD_SLACK: f64 = 1e-12;

pub struct Aalo {
    params: SchedulerParams,
    oracle: bool,
    queue: Vec<usize>,
    /// Something changed since the last plan.
    dirty: bool,
    queues: QueueAllocator,
    plan: PlanBuilder,
}

impl Aalo {
    pub fn new(params: SchedulerParams, fabric: &Fabric, oracle: bool) -> Self {
        Self {
            oracle,
            queue: vec![0; fabric.coflows.len()],
            dirty: false,
            queues: QueueAllocator::new(fabric.num_ports),
            plan: PlanBuilder::new(fabric.flows.len()),
            params,
        }
    }

    pub fn queue_of(&self, c: usize) -> usize {
        self.queue[c]
    }

    fn log_queue(ctx: &mut SchedCtx<'_>, c: usize, q: usize) {
        let st = &ctx.fabric.coflows[c];
        ctx.log.push(ctx.now(), st.id, None, EventKind::Queue, q as f64);
        ctx.log.push(ctx.now(), st.id, None, EventKind::BytesSent, st.sent);
    }
}

impl Scheduler for Aalo {
    fn kind(&self) -> SchedulerKind {
        if self.oracle {
            SchedulerKind::AaloOracle
        } else {
            SchedulerKind::Aalo
        }
    }

    fn tick_interval(&self, delta: f64) -> Option<f64> {
        Some(delta)
    }

    fn on_events(&mut self, ctx: &mut SchedCtx<'_>, events: &[SimEvent]) -> Result<bool> {
        let mut tick = false;
        for ev in events {
            match *ev {
                SimEvent::Arrival(c) => {
                    let q =
                        if self.oracle { self.params.queue_for(ctx.fabric.coflows[c].total_size as f64) } else { 0 };
                    self.queue[c] = q;
                    Self::log_queue(ctx, c, q);
                    self.dirty = true;
                }
                SimEvent::FlowDone(_) | SimEvent::CoflowDone(_) => self.dirty = true,
                SimEvent::Tick => tick = true,
            }
        }
        if !tick {
            return Ok(false);
        }
        if !self.oracle {
            for &c in ctx.fabric.active_coflows() {
                let d = ctx.fabric.coflows[c].sent * (1.0 + THRESHOLD_SLACK);
                let q = self.queue[c].max(self.params.queue_for(d));
                if q != self.queue[c] {
                    self.queue[c] = q;
                    Self::log_queue(ctx, c, q);
                    self.dirty = true;
                }
            }
        }
        // under the fast heuristic an unchanged state yields the same plan;
        // slowest-flow equalization depends on remaining bytes
        let replan = self.dirty || !self.params.fast_rate_heuristic;
        self.dirty = false;
        Ok(replan)
    }

    fn allocate(&mut self, fabric: &Fabric) -> RatePlan {
        let mut queues: Vec<Vec<usize>> = vec![Vec::new(); self.params.k];
        // active coflows are kept in arrival order
        for &c in fabric.active_coflows() {
            queues[self.queue[c]].push(c);
        }
        let mut budget = Budget::full(fabric.num_ports, fabric.bandwidth);
        self.queues.allocate(fabric, &queues, &self.params, &mut budget, &mut self.plan);
        self.plan.build()
    }
}
