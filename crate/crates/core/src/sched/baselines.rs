//! Clairvoyant and coflow-oblivious reference schedulers.

use crate::engine::{Fabric, RatePlan};
use crate::sched::alloc::{max_min_fair, Budget, Madd, PlanBuilder};
use crate::sched::{SchedCtx, Scheduler, SchedulerKind, SimEvent};
use crate::Result;

/// Per-coflow slowest-flow equalization in `order`, then backfill rounds
/// that equalize over the flows still able to grow, until no unfinished flow
/// has spare capacity at both of its ports.
///
/// Backfilling with equalized rates rather than one flow at a time keeps
/// flows of a coflow finishing in a few batches instead of one by one.
fn madd_then_backfill(fabric: &Fabric, order: &[usize], madd: &mut Madd, plan: &mut PlanBuilder) -> RatePlan {
    let mut budget = Budget::full(fabric.num_ports, fabric.bandwidth);
    for &c in order {
        madd.allocate_coflow(fabric, c, &mut budget, plan);
    }
    loop {
        let mut grew = false;
        for &c in order {
            grew |= madd.fill_coflow(fabric, c, &mut budget, plan);
        }
        if !grew {
            break;
        }
    }
    plan.build()
}

fn any_event(events: &[SimEvent]) -> bool {
    events.iter().any(|e| !matches!(e, SimEvent::Tick))
}

/// Shortest effective bottleneck first, using true remaining sizes.
pub struct Sebf {
    madd: Madd,
    plan: PlanBuilder,
    load_up: Vec<f64>,
    load_down: Vec<f64>,
}

impl Sebf {
    pub fn new(fabric: &Fabric) -> Self {
        let n = fabric.num_ports as usize;
        Self {
            madd: Madd::new(fabric.num_ports),
            plan: PlanBuilder::new(fabric.flows.len()),
            load_up: vec![0.0; n],
            load_down: vec![0.0; n],
        }
    }

    /// Time for coflow `c` to drain its most loaded port alone.
    pub fn bottleneck(&mut self, fabric: &Fabric, c: usize) -> f64 {
        let active = &fabric.coflows[c].active;
        for &f in active {
            let fl = &fabric.flows[f];
            self.load_up[fl.spec.sender as usize] += fl.remaining;
            self.load_down[fl.spec.receiver as usize] += fl.remaining;
        }
        let mut worst: f64 = 0.0;
        for &f in active {
            let s = &fabric.flows[f].spec;
            worst = worst
                .max(std::mem::take(&mut self.load_up[s.sender as usize]))
                .max(std::mem::take(&mut self.load_down[s.receiver as usize]));
        }
        worst / fabric.bandwidth
    }

    pub fn order(&mut self, fabric: &Fabric) -> Vec<usize> {
        let mut keyed: Vec<(f64, usize)> =
            fabric.active_coflows().iter().map(|&c| (self.bottleneck(fabric, c), c)).collect();
        // index order is arrival order, then id
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        keyed.into_iter().map(|(_, c)| c).collect()
    }
}

impl Scheduler for Sebf {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Sebf
    }

    fn on_events(&mut self, _ctx: &mut SchedCtx<'_>, events: &[SimEvent]) -> Result<bool> {
        Ok(any_event(events))
    }

    fn allocate(&mut self, fabric: &Fabric) -> RatePlan {
        let order = self.order(fabric);
        madd_then_backfill(fabric, &order, &mut self.madd, &mut self.plan)
    }
}

/// One global queue in arrival order.
pub struct Fifo {
    madd: Madd,
    plan: PlanBuilder,
}

impl Fifo {
    pub fn new(fabric: &Fabric) -> Self {
        Self { madd: Madd::new(fabric.num_ports), plan: PlanBuilder::new(fabric.flows.len()) }
    }
}

impl Scheduler for Fifo {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Fifo
    }

    fn on_events(&mut self, _ctx: &mut SchedCtx<'_>, events: &[SimEvent]) -> Result<bool> {
        Ok(any_event(events))
    }

    fn allocate(&mut self, fabric: &Fabric) -> RatePlan {
        let order = fabric.active_coflows().to_vec();
        madd_then_backfill(fabric, &order, &mut self.madd, &mut self.plan)
    }
}

/// Per-flow max-min fair sharing, oblivious to coflows.
pub struct Fair;

impl Fair {
    pub fn new(_fabric: &Fabric) -> Self {
        Fair
    }
}

impl Scheduler for Fair {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Fair
    }

    fn on_events(&mut self, _ctx: &mut SchedCtx<'_>, events: &[SimEvent]) -> Result<bool> {
        Ok(any_event(events))
    }

    fn allocate(&mut self, fabric: &Fabric) -> RatePlan {
        let flows: Vec<usize> =
            fabric.active_coflows().iter().flat_map(|&c| fabric.coflows[c].active.iter().copied()).collect();
        let budget = Budget::full(fabric.num_ports, fabric.bandwidth);
        let rates = max_min_fair(fabric, &flows, &budget);
        let mut entries: Vec<(usize, f64)> = flows.into_iter().zip(rates).filter(|e| e.1 > 0.0).collect();
        entries.sort_unstable_by_key(|e| e.0);
        RatePlan::from_sorted(entries)
    }
}
