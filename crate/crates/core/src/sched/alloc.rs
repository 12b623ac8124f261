//! Rate allocation primitives shared by the schedulers.

use crate::engine::{CoflowState, Fabric, RatePlan};
use crate::sched::SchedulerParams;

/// Capacities and rates at or below this (bytes/ms) count as zero.
pub const RATE_EPS: f64 = 1e-9;

/// Unallocated directional capacity per port.
#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

impl Budget {
    pub fn full(num_ports: u32, bandwidth: f64) -> Self {
        Self { up: vec![bandwidth; num_ports as usize], down: vec![bandwidth; num_ports as usize] }
    }

    pub fn avail(&self, sender: u32, receiver: u32) -> f64 {
        self.up[sender as usize].min(self.down[receiver as usize])
    }

    pub fn take(&mut self, sender: u32, receiver: u32, x: f64) {
        let up = &mut self.up[sender as usize];
        *up -= x;
        if *up <= RATE_EPS {
            *up = 0.0;
        }
        let down = &mut self.down[receiver as usize];
        *down -= x;
        if *down <= RATE_EPS {
            *down = 0.0;
        }
    }
}

/// Accumulates per-flow rates and emits a sorted [`RatePlan`].
#[derive(Debug, Clone)]
pub struct PlanBuilder {
    rates: Vec<f64>,
    touched: Vec<usize>,
}

impl PlanBuilder {
    pub fn new(num_flows: usize) -> Self {
        Self { rates: vec![0.0; num_flows], touched: Vec::new() }
    }

    pub fn add(&mut self, flow: usize, x: f64) {
        if x <= 0.0 {
            return;
        }
        if self.rates[flow] == 0.0 {
            self.touched.push(flow);
        }
        self.rates[flow] += x;
    }

    pub fn rate(&self, flow: usize) -> f64 {
        self.rates[flow]
    }

    /// Emits the plan and resets the builder.
    pub fn build(&mut self) -> RatePlan {
        self.touched.sort_unstable();
        let entries = self.touched.drain(..).map(|f| (f, std::mem::take(&mut self.rates[f]))).collect();
        RatePlan::from_sorted(entries)
    }
}

/// Directional capacity that allocations draw from.
trait Capacity {
    fn up(&self, p: usize) -> f64;
    fn down(&self, p: usize) -> f64;
    fn grant(&mut self, flow: usize, sender: u32, receiver: u32, x: f64);
}

struct Plain<'a> {
    budget: &'a mut Budget,
    plan: &'a mut PlanBuilder,
}

impl Capacity for Plain<'_> {
    fn up(&self, p: usize) -> f64 {
        self.budget.up[p]
    }

    fn down(&self, p: usize) -> f64 {
        self.budget.down[p]
    }

    fn grant(&mut self, flow: usize, sender: u32, receiver: u32, x: f64) {
        self.budget.take(sender, receiver, x);
        self.plan.add(flow, x);
    }
}

/// Whether every port of the coflow has capacity, and whether at least one
/// port per direction does.
fn port_status(st: &CoflowState, cap: &impl Capacity) -> (bool, usize, usize) {
    let up = st.senders.ports().filter(|&p| cap.up(p as usize) > RATE_EPS).count();
    let down = st.receivers.ports().filter(|&p| cap.down(p as usize) > RATE_EPS).count();
    (up == st.senders.len() && down == st.receivers.len(), up, down)
}

/// One flow at a time, each taking everything left on its path. Reducer
/// blocks without downlink capacity are skipped, and the scan ends once the
/// coflow has no usable port in some direction.
fn greedy_scan(fabric: &Fabric, c: usize, cap: &mut impl Capacity) {
    let st = &fabric.coflows[c];
    let (_, mut open_up, mut open_down) = port_status(st, cap);
    let active = &st.active;
    let mut i = 0;
    while i < active.len() && open_up > 0 && open_down > 0 {
        let f = active[i];
        let spec = &fabric.flows[f].spec;
        let (s, r) = (spec.sender as usize, spec.receiver as usize);
        let down = cap.down(r);
        if down <= RATE_EPS {
            let end = st.block_end(f);
            i += active[i..].partition_point(|&g| g < end);
            continue;
        }
        let x = cap.up(s).min(down);
        if x > RATE_EPS {
            cap.grant(f, spec.sender, spec.receiver, x);
            open_up -= usize::from(cap.up(s) <= RATE_EPS);
            open_down -= usize::from(cap.down(r) <= RATE_EPS);
        }
        i += 1;
    }
}

/// Gives each flow in turn everything left on its path.
pub fn greedy_flows(
    fabric: &Fabric,
    flows: impl IntoIterator<Item = usize>,
    budget: &mut Budget,
    plan: &mut PlanBuilder,
) {
    let mut cap = Plain { budget, plan };
    for f in flows {
        let spec = &fabric.flows[f].spec;
        let x = cap.up(spec.sender as usize).min(cap.down(spec.receiver as usize));
        if x > RATE_EPS {
            cap.grant(f, spec.sender, spec.receiver, x);
        }
    }
}

/// [`greedy_flows`] over the unfinished flows of coflow `c`, in flow order.
pub fn greedy_coflow(fabric: &Fabric, c: usize, budget: &mut Budget, plan: &mut PlanBuilder) {
    greedy_scan(fabric, c, &mut Plain { budget, plan });
}

/// Slowest-flow equalization: every flow of a coflow gets `remaining / Γ`,
/// where Γ is the time its most loaded port needs at the available rate.
#[derive(Debug, Clone)]
pub struct Madd {
    load_up: Vec<f64>,
    load_down: Vec<f64>,
}

impl Madd {
    pub fn new(num_ports: u32) -> Self {
        Self { load_up: vec![0.0; num_ports as usize], load_down: vec![0.0; num_ports as usize] }
    }

    /// Γ for coflow `c`, or `None` if one of its ports has no capacity.
    fn gamma(&mut self, fabric: &Fabric, c: usize, cap: &impl Capacity) -> Option<f64> {
        let st = &fabric.coflows[c];
        if !port_status(st, cap).0 {
            return None;
        }
        for &f in &st.active {
            let fl = &fabric.flows[f];
            self.load_up[fl.spec.sender as usize] += fl.remaining;
            self.load_down[fl.spec.receiver as usize] += fl.remaining;
        }
        let mut gamma: f64 = 0.0;
        for p in st.senders.ports() {
            gamma = gamma.max(std::mem::take(&mut self.load_up[p as usize]) / cap.up(p as usize));
        }
        for p in st.receivers.ports() {
            gamma = gamma.max(std::mem::take(&mut self.load_down[p as usize]) / cap.down(p as usize));
        }
        (gamma > 0.0).then_some(gamma)
    }

    fn allocate(&mut self, fabric: &Fabric, c: usize, cap: &mut impl Capacity) {
        let Some(gamma) = self.gamma(fabric, c, cap) else { return };
        for &f in &fabric.coflows[c].active {
            let fl = &fabric.flows[f];
            cap.grant(f, fl.spec.sender, fl.spec.receiver, fl.remaining / gamma);
        }
    }

    /// Allocates coflow `c` from `budget`.
    pub fn allocate_coflow(&mut self, fabric: &Fabric, c: usize, budget: &mut Budget, plan: &mut PlanBuilder) {
        self.allocate(fabric, c, &mut Plain { budget, plan });
    }

    /// Equalization restricted to the flows of `c` whose ports both have
    /// capacity left. Saturates at least one port. Returns whether any rate
    /// was granted.
    pub fn fill_coflow(&mut self, fabric: &Fabric, c: usize, budget: &mut Budget, plan: &mut PlanBuilder) -> bool {
        let st = &fabric.coflows[c];
        let (_, up, down) = port_status(st, &Plain { budget, plan });
        if up == 0 || down == 0 {
            return false;
        }
        let open = |f: usize| {
            let s = &fabric.flows[f].spec;
            budget.up[s.sender as usize] > RATE_EPS && budget.down[s.receiver as usize] > RATE_EPS
        };
        let mut any = false;
        for &f in &st.active {
            if open(f) {
                let fl = &fabric.flows[f];
                self.load_up[fl.spec.sender as usize] += fl.remaining;
                self.load_down[fl.spec.receiver as usize] += fl.remaining;
                any = true;
            }
        }
        if !any {
            return false;
        }
        let mut gamma: f64 = 0.0;
        for p in st.senders.ports() {
            let load = std::mem::take(&mut self.load_up[p as usize]);
            if load > 0.0 {
                gamma = gamma.max(load / budget.up[p as usize]);
            }
        }
        for p in st.receivers.ports() {
            let load = std::mem::take(&mut self.load_down[p as usize]);
            if load > 0.0 {
                gamma = gamma.max(load / budget.down[p as usize]);
            }
        }
        let grants: Vec<usize> = st.active.iter().copied().filter(|&f| open(f)).collect();
        let mut cap = Plain { budget, plan };
        for f in grants {
            let fl = &fabric.flows[f];
            cap.grant(f, fl.spec.sender, fl.spec.receiver, fl.remaining / gamma);
        }
        true
    }
}

/// Max-min fair rates for `flows` by progressive filling. Returns one rate
/// per input flow.
pub fn max_min_fair(fabric: &Fabric, flows: &[usize], budget: &Budget) -> Vec<f64> {
    let n = budget.up.len();
    // directional port index: uplinks 0..n, downlinks n..2n
    let mut residual: Vec<f64> = budget.up.iter().chain(&budget.down).copied().collect();
    let mut count = vec![0usize; 2 * n];
    let mut start = vec![0usize; 2 * n + 1];
    for &f in flows {
        let s = &fabric.flows[f].spec;
        count[s.sender as usize] += 1;
        count[n + s.receiver as usize] += 1;
    }
    for p in 0..2 * n {
        start[p + 1] = start[p] + count[p];
    }
    let mut members = vec![0usize; start[2 * n]];
    let mut fill = start.clone();
    for (i, &f) in flows.iter().enumerate() {
        let s = &fabric.flows[f].spec;
        for p in [s.sender as usize, n + s.receiver as usize] {
            members[fill[p]] = i;
            fill[p] += 1;
        }
    }

    let mut rate = vec![0.0; flows.len()];
    let mut frozen = vec![false; flows.len()];
    let mut level = 0.0;
    loop {
        let mut best: Option<(f64, usize)> = None;
        for p in 0..2 * n {
            if count[p] > 0 {
                let inc = (residual[p] / count[p] as f64).max(0.0);
                if best.is_none_or(|(b, _)| inc < b) {
                    best = Some((inc, p));
                }
            }
        }
        let Some((inc, bottleneck)) = best else { break };
        level += inc;
        for p in 0..2 * n {
            if count[p] > 0 {
                residual[p] -= inc * count[p] as f64;
            }
        }
        for &i in &members[start[bottleneck]..start[bottleneck + 1]] {
            if frozen[i] {
                continue;
            }
            frozen[i] = true;
            rate[i] = level;
            let s = &fabric.flows[flows[i]].spec;
            count[s.sender as usize] -= 1;
            count[n + s.receiver as usize] -= 1;
        }
    }
    rate
}

/// Weighted sharing between priority queues with FIFO service inside each
/// queue, followed by greedy backfill in priority order.
///
/// At every directional port, queue q receives `B^{-q} / Σ B^{-q'}` of the
/// capacity, where the sum ranges over queues holding a coflow with
/// unfinished flows at that port.
#[derive(Debug, Clone)]
pub struct QueueAllocator {
    shares: Shares,
    madd: Madd,
}

#[derive(Debug, Clone)]
struct Shares {
    base: Budget,
    wsum_up: Vec<f64>,
    wsum_down: Vec<f64>,
    stamp_up: Vec<usize>,
    stamp_down: Vec<usize>,
    used_up: Vec<f64>,
    used_down: Vec<f64>,
    touched_up: Vec<u32>,
    touched_down: Vec<u32>,
}

/// The slice of capacity one queue may use.
struct QueueShare<'a> {
    shares: &'a mut Shares,
    weight: f64,
    budget: &'a mut Budget,
    plan: &'a mut PlanBuilder,
}

impl Capacity for QueueShare<'_> {
    fn up(&self, p: usize) -> f64 {
        let s = &self.shares;
        if s.wsum_up[p] == 0.0 {
            return 0.0;
        }
        (s.base.up[p] * self.weight / s.wsum_up[p] - s.used_up[p]).min(self.budget.up[p])
    }

    fn down(&self, p: usize) -> f64 {
        let s = &self.shares;
        if s.wsum_down[p] == 0.0 {
            return 0.0;
        }
        (s.base.down[p] * self.weight / s.wsum_down[p] - s.used_down[p]).min(self.budget.down[p])
    }

    fn grant(&mut self, flow: usize, sender: u32, receiver: u32, x: f64) {
        let s = &mut *self.shares;
        let (su, rd) = (sender as usize, receiver as usize);
        if s.used_up[su] == 0.0 {
            s.touched_up.push(sender);
        }
        s.used_up[su] += x;
        if s.used_down[rd] == 0.0 {
            s.touched_down.push(receiver);
        }
        s.used_down[rd] += x;
        self.budget.take(sender, receiver, x);
        self.plan.add(flow, x);
    }
}

impl QueueAllocator {
    pub fn new(num_ports: u32) -> Self {
        let n = num_ports as usize;
        Self {
            shares: Shares {
                base: Budget::full(num_ports, 0.0),
                wsum_up: vec![0.0; n],
                wsum_down: vec![0.0; n],
                stamp_up: vec![0; n],
                stamp_down: vec![0; n],
                used_up: vec![0.0; n],
                used_down: vec![0.0; n],
                touched_up: Vec::new(),
                touched_down: Vec::new(),
            },
            madd: Madd::new(num_ports),
        }
    }

    /// `queues[q]` lists the coflows of queue q in service order.
    pub fn allocate(
        &mut self,
        fabric: &Fabric,
        queues: &[Vec<usize>],
        params: &SchedulerParams,
        budget: &mut Budget,
        plan: &mut PlanBuilder,
    ) {
        let sh = &mut self.shares;
        sh.wsum_up.fill(0.0);
        sh.wsum_down.fill(0.0);
        sh.stamp_up.fill(0);
        sh.stamp_down.fill(0);
        for (q, cs) in queues.iter().enumerate() {
            let w = params.weight(q);
            for &c in cs {
                let st = &fabric.coflows[c];
                for p in st.senders.ports().map(|p| p as usize) {
                    if sh.stamp_up[p] != q + 1 {
                        sh.stamp_up[p] = q + 1;
                        sh.wsum_up[p] += w;
                    }
                }
                for p in st.receivers.ports().map(|p| p as usize) {
                    if sh.stamp_down[p] != q + 1 {
                        sh.stamp_down[p] = q + 1;
                        sh.wsum_down[p] += w;
                    }
                }
            }
        }
        sh.base.clone_from(budget);

        for (q, cs) in queues.iter().enumerate() {
            if cs.is_empty() {
                continue;
            }
            let mut cap = QueueShare { shares: &mut self.shares, weight: params.weight(q), budget, plan };
            for &c in cs {
                if params.fast_rate_heuristic {
                    greedy_scan(fabric, c, &mut cap);
                } else {
                    self.madd.allocate(fabric, c, &mut cap);
                }
            }
            let sh = &mut self.shares;
            for p in sh.touched_up.drain(..) {
                sh.used_up[p as usize] = 0.0;
            }
            for p in sh.touched_down.drain(..) {
                sh.used_down[p as usize] = 0.0;
            }
        }

        for cs in queues {
            for &c in cs {
                greedy_coflow(fabric, c, budget, plan);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::DEFAULT_PORT_BANDWIDTH as BW;
    use crate::trace::parse_trace;

    fn fabric(text: &str) -> Fabric {
        let t = parse_trace(text).unwrap();
        let mut f = Fabric::new(&t, t.num_ports, BW);
        for c in 0..t.coflows().len() {
            f.arrive(c);
        }
        f
    }

    #[test]
    fn greedy_saturates_first_flow() {
        let f = fabric("2 2\n1 0 1 0 1 1:1\n2 0 1 0 1 1:1");
        let mut b = Budget::full(2, BW);
        let mut plan = PlanBuilder::new(2);
        greedy_flows(&f, [0, 1], &mut b, &mut plan);
        assert_eq!(plan.build().entries(), &[(0, BW)]);
    }

    #[test]
    fn greedy_coflow_skips_blocked_reducers() {
        // 2 mappers {0,1} x 2 reducers {2,3}
        let f = fabric("4 1\n1 0 2 0 1 2 2:2 3:2");
        let mut b = Budget::full(4, BW);
        b.down[2] = 0.0;
        let mut plan = PlanBuilder::new(4);
        greedy_coflow(&f, 0, &mut b, &mut plan);
        // reducer 3 block: flows 2 (0->3) and 3 (1->3); 0->3 takes the downlink
        assert_eq!(plan.build().entries(), &[(2, BW)]);
    }

    #[test]
    fn madd_equalizes_to_the_slowest_flow() {
        // one mapper, two reducers with 2MB and 1MB: uplink carries 3MB
        let f = fabric("3 1\n1 0 1 0 2 1:2 2:1");
        let mut b = Budget::full(3, BW);
        let mut plan = PlanBuilder::new(2);
        Madd::new(3).allocate_coflow(&f, 0, &mut b, &mut plan);
        let p = plan.build();
        assert!((p.rate(0) - BW * 2.0 / 3.0).abs() < 1e-9);
        assert!((p.rate(1) - BW / 3.0).abs() < 1e-9);
    }

    #[test]
    fn water_filling_two_flows_share_an_uplink() {
        let f = fabric("3 1\n1 0 1 0 2 1:1 2:1");
        let r = max_min_fair(&f, &[0, 1], &Budget::full(3, BW));
        assert_eq!(r, vec![BW / 2.0, BW / 2.0]);
    }

    #[test]
    fn water_filling_matches_brute_force_oracle() {
        // flows: a 0->1, b 0->2, c 3->2. Uplink 0 shared by a,b; downlink 2 by b,c.
        let f = fabric("4 3\n1 0 1 0 1 1:1\n2 0 1 0 1 2:1\n3 0 1 3 1 2:1");
        let r = max_min_fair(&f, &[0, 1, 2], &Budget::full(4, BW));
        // the oracle: all three at BW/2 is feasible and no flow can grow
        // without shrinking an equal or smaller one
        assert_eq!(r, vec![BW / 2.0; 3]);

        // uplink 0 at half capacity: a,b get BW/4, c takes the rest at 2
        let mut b = Budget::full(4, BW);
        b.up[0] = BW / 2.0;
        let r = max_min_fair(&f, &[0, 1, 2], &b);
        assert_eq!(r, vec![BW / 4.0, BW / 4.0, BW * 0.75]);
    }

    #[test]
    fn queue_weights_split_ten_to_one() {
        let f = fabric("2 2\n1 0 1 0 1 1:100\n2 0 1 0 1 1:100");
        let params = SchedulerParams::default();
        let mut qa = QueueAllocator::new(2);
        let mut b = Budget::full(2, BW);
        let mut plan = PlanBuilder::new(2);
        let queues = vec![vec![0], vec![1]];
        // without backfill the split is 10:1; backfill then hands the
        // remainder to nobody since both ports are saturated
        qa.allocate(&f, &queues, &params, &mut b, &mut plan);
        let p = plan.build();
        assert!((p.rate(0) - BW * 10.0 / 11.0).abs() < 1e-6);
        assert!((p.rate(1) - BW / 11.0).abs() < 1e-6);
    }

    #[test]
    fn single_queue_gets_full_capacity() {
        let f = fabric("2 1\n1 0 1 0 1 1:100");
        let params = SchedulerParams { fast_rate_heuristic: false, ..Default::default() };
        let mut qa = QueueAllocator::new(2);
        let mut b = Budget::full(2, BW);
        let mut plan = PlanBuilder::new(1);
        qa.allocate(&f, &[vec![], vec![], vec![0]], &params, &mut b, &mut plan);
        assert!((plan.build().rate(0) - BW).abs() < 1e-9);
    }
}
