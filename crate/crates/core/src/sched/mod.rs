//! Coflow schedulers.
//!
//! A scheduler reacts to engine events and, when asked, produces a complete
//! [`RatePlan`] for the current fabric state. The engine replaces all rates
//! with every plan it receives.

pub mod alloc;
mod baselines;
mod mlfq;
pub mod pilot;
mod sampling;

use std::fmt;
use std::str::FromStr;

use crate::engine::{EventLog, Fabric, RatePlan, SimConfig};
use crate::trace::MB;
use crate::{Error, Result};

pub use self::baselines::{Fair, Fifo, Sebf};
pub use self::mlfq::Aalo;
pub use self::sampling::SamplingScheduler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerKind {
    Sampling,
    Aalo,
    AaloOracle,
    Sebf,
    Fifo,
    Fair,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 6] = [
        SchedulerKind::Sampling,
        SchedulerKind::Aalo,
        SchedulerKind::AaloOracle,
        SchedulerKind::Sebf,
        SchedulerKind::Fifo,
        SchedulerKind::Fair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Sampling => "sampling",
            SchedulerKind::Aalo => "aalo",
            SchedulerKind::AaloOracle => "aalo-oracle",
            SchedulerKind::Sebf => "sebf",
            SchedulerKind::Fifo => "fifo",
            SchedulerKind::Fair => "fair",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::Param(format!("unknown scheduler '{s}'")))
    }
}

/// How many pilot flows a wide coflow gets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PilotPolicy {
    Constant(usize),
    /// Fraction of distinct senders.
    FracSenders(f64),
    /// Fraction of all flows.
    FracFlows(f64),
}

impl PilotPolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PilotPolicy::Constant(k) => k >= 1,
            PilotPolicy::FracSenders(p) | PilotPolicy::FracFlows(p) => p > 0.0 && p <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Param(format!("invalid pilot policy {self}")))
        }
    }
}

impl fmt::Display for PilotPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PilotPolicy::Constant(k) => write!(f, "constant({k})"),
            PilotPolicy::FracSenders(p) => write!(f, "frac_senders({p})"),
            PilotPolicy::FracFlows(p) => write!(f, "frac_flows({p})"),
        }
    }
}

impl FromStr for PilotPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Param(format!("cannot parse pilot policy '{s}'"));
        let t = s.trim();
        let (name, rest) = t.split_once('(').ok_or_else(bad)?;
        let arg = rest.strip_suffix(')').ok_or_else(bad)?.trim();
        let policy = match name.trim() {
            "constant" => PilotPolicy::Constant(arg.parse().map_err(|_| bad())?),
            "frac_senders" => PilotPolicy::FracSenders(arg.parse().map_err(|_| bad())?),
            "frac_flows" => PilotPolicy::FracFlows(arg.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// Metric used to rank estimated coflows; lower is served first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InterCoflowPolicy {
    /// l·n
    A,
    /// l·n − d
    B,
    /// global contention c
    C,
    /// Σ_p c^p·l
    D,
    /// max_p c^p·l
    E,
    /// c·l
    F,
}

impl InterCoflowPolicy {
    pub const ALL: [InterCoflowPolicy; 6] = [Self::A, Self::B, Self::C, Self::D, Self::E, Self::F];
}

impl fmt::Display for InterCoflowPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for InterCoflowPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            "D" => Ok(Self::D),
            "E" => Ok(Self::E),
            "F" => Ok(Self::F),
            _ => Err(Error::Param(format!("unknown inter-coflow policy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerParams {
    /// Number of priority queues (K).
    pub k: usize,
    /// Upper threshold of the first queue in bytes.
    pub q0_hi: f64,
    /// Threshold growth factor (E).
    pub e: f64,
    /// Weight decay between consecutive queues (B).
    pub b: f64,
    /// Coflows with width ≤ this skip the pilot phase (T).
    pub t: usize,
    pub pilot_policy: PilotPolicy,
    pub intercoflow_policy: InterCoflowPolicy,
    /// Serve one flow at a time per queue share instead of slowest-flow
    /// equalization.
    pub fast_rate_heuristic: bool,
}

impl Default for SchedulerParams {
    fn default() -> Self {
        Self {
            k: 10,
            q0_hi: (10 * MB) as f64,
            e: 10.0,
            b: 10.0,
            t: 7,
            pilot_policy: PilotPolicy::FracSenders(0.05),
            intercoflow_policy: InterCoflowPolicy::D,
            fast_rate_heuristic: true,
        }
    }
}

impl SchedulerParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Param("K must be at least 1".into()));
        }
        if !(self.e > 1.0 && self.e.is_finite()) {
            return Err(Error::Param(format!("E must be > 1, got {}", self.e)));
        }
        if !(self.b >= 1.0 && self.b.is_finite()) {
            return Err(Error::Param(format!("B must be >= 1, got {}", self.b)));
        }
        if !(self.q0_hi > 0.0 && self.q0_hi.is_finite()) {
            return Err(Error::Param(format!("Q0_hi must be > 0, got {}", self.q0_hi)));
        }
        self.pilot_policy.validate()
    }

    /// Upper (exclusive) threshold of queue `q`; the last queue is unbounded.
    pub fn queue_hi(&self, q: usize) -> f64 {
        if q + 1 >= self.k {
            f64::INFINITY
        } else {
            self.q0_hi * self.e.powi(q as i32)
        }
    }

    /// Smallest queue whose interval contains `value`.
    pub fn queue_for(&self, value: f64) -> usize {
        (0..self.k).find(|&q| value < self.queue_hi(q)).unwrap_or(self.k - 1)
    }

    /// Relative service weight B^{−q}.
    pub fn weight(&self, q: usize) -> f64 {
        self.b.powi(-(q as i32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEvent {
    Arrival(usize),
    FlowDone(usize),
    CoflowDone(usize),
    Tick,
}

/// What a scheduler sees while handling events.
pub struct SchedCtx<'a> {
    pub fabric: &'a Fabric,
    pub log: &'a mut EventLog,
    pilots: Vec<usize>,
}

impl<'a> SchedCtx<'a> {
    pub fn new(fabric: &'a Fabric, log: &'a mut EventLog) -> Self {
        Self { fabric, log, pilots: Vec::new() }
    }

    pub fn now(&self) -> f64 {
        self.fabric.now
    }

    /// Flags `flow` as a pilot in the fabric once the handler returns.
    pub fn mark_pilot(&mut self, flow: usize) {
        self.pilots.push(flow);
    }

    pub fn take_pilots(&mut self) -> Vec<usize> {
        std::mem::take(&mut self.pilots)
    }
}

pub trait Scheduler {
    fn kind(&self) -> SchedulerKind;

    /// Interval of periodic ticks, if the scheduler needs them.
    fn tick_interval(&self, _delta: f64) -> Option<f64> {
        None
    }

    /// Updates internal state. Returns whether rates must be recomputed.
    fn on_events(&mut self, ctx: &mut SchedCtx<'_>, events: &[SimEvent]) -> Result<bool>;

    fn allocate(&mut self, fabric: &Fabric) -> RatePlan;
}

pub fn build(config: &SimConfig, fabric: &Fabric) -> Result<Box<dyn Scheduler>> {
    let p = config.params.clone();
    Ok(match config.scheduler {
        SchedulerKind::Sampling => Box::new(SamplingScheduler::new(p, fabric)),
        SchedulerKind::Aalo => Box::new(Aalo::new(p, fabric, false)),
        SchedulerKind::AaloOracle => Box::new(Aalo::new(p, fabric, true)),
        SchedulerKind::Sebf => Box::new(Sebf::new(fabric)),
        SchedulerKind::Fifo => Box::new(Fifo::new(fabric)),
        SchedulerKind::Fair => Box::new(Fair::new(fabric)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_thresholds() {
        let p = SchedulerParams::default();
        assert_eq!(p.queue_for((5 * MB) as f64), 0);
        assert_eq!(p.queue_for((10 * MB) as f64), 1);
        assert_eq!(p.queue_for((50 * MB) as f64), 1);
        assert_eq!(p.queue_for(0.0), 0);
        // 10 MB · 10^6 ≈ 1.05e13 bytes still bounds queue 6
        assert_eq!(p.queue_for(1e13), 6);
        assert_eq!(p.queue_for(1e17), 9);
        assert_eq!(p.queue_hi(9), f64::INFINITY);
        assert_eq!(p.weight(2), 0.01);
    }

    #[test]
    fn single_queue_is_unbounded() {
        let p = SchedulerParams { k: 1, ..Default::default() };
        assert_eq!(p.queue_for(1e30), 0);
    }

    #[test]
    fn parse_names() {
        for k in SchedulerKind::ALL {
            assert_eq!(k.to_string().parse::<SchedulerKind>().unwrap(), k);
        }
        assert_eq!("Aalo_Oracle".parse::<SchedulerKind>().unwrap(), SchedulerKind::AaloOracle);
        assert!("sjf".parse::<SchedulerKind>().is_err());
        for p in [PilotPolicy::Constant(2), PilotPolicy::FracSenders(0.05), PilotPolicy::FracFlows(0.1)] {
            assert_eq!(p.to_string().parse::<PilotPolicy>().unwrap(), p);
        }
        assert!("constant(0)".parse::<PilotPolicy>().is_err());
        assert!("frac_flows(1.5)".parse::<PilotPolicy>().is_err());
        assert!("frac_flows 0.1".parse::<PilotPolicy>().is_err());
        assert_eq!("d".parse::<InterCoflowPolicy>().unwrap(), InterCoflowPolicy::D);
    }

    #[test]
    fn invalid_params() {
        let bad = [
            SchedulerParams { k: 0, ..Default::default() },
            SchedulerParams { e: 1.0, ..Default::default() },
            SchedulerParams { b: 0.5, ..Default::default() },
            SchedulerParams { q0_hi: 0.0, ..Default::default() },
        ];
        for p in bad {
            assert!(matches!(p.validate(), Err(Error::Param(_))), "{p:?}");
        }
    }
}
