//! Flat `key = value` experiment configuration.
//!
//! Keys mirror the fields of `SchedulerParams` and `SimConfig`. Blank lines
//! and `#` comments are ignored. Command-line flags override file values.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use coflow_core::{InterCoflowPolicy, PilotPolicy, SchedulerParams, SimConfig};

pub const KEYS: [&str; 11] = [
    "k",
    "q0_hi",
    "e",
    "b",
    "t",
    "pilot_policy",
    "intercoflow_policy",
    "fast_rate_heuristic",
    "port_bandwidth",
    "delta",
    "rng_seed",
];

/// Knobs settable from a config file or the command line.
#[derive(Debug, Clone, Default, Args)]
pub struct Knobs {
    /// Number of priority queues (K).
    #[arg(long)]
    pub k: Option<usize>,
    /// Upper threshold of the first queue, in bytes.
    #[arg(long)]
    pub q0_hi: Option<f64>,
    /// Queue threshold growth factor (E).
    #[arg(long)]
    pub e: Option<f64>,
    /// Weight decay between consecutive queues (B).
    #[arg(long)]
    pub b: Option<f64>,
    /// Coflows with at most this many flows skip sampling (T).
    #[arg(long)]
    pub t: Option<usize>,
    /// constant(k), frac_senders(p) or frac_flows(p).
    #[arg(long)]
    pub pilot_policy: Option<PilotPolicy>,
    /// Ranking policy, A to F.
    #[arg(long)]
    pub intercoflow_policy: Option<InterCoflowPolicy>,
    /// Serve one flow per queue share at a time instead of equalizing.
    #[arg(long)]
    pub fast_rate_heuristic: Option<bool>,
    /// Port bandwidth in bytes per ms.
    #[arg(long)]
    pub port_bandwidth: Option<f64>,
    /// Scheduling interval of tick-driven schedulers, in ms.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
}

impl Knobs {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut knobs = Knobs::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected key = value, got '{raw}'", i + 1);
            };
            knobs.set(key.trim(), value.trim()).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(knobs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse_str(&text).with_context(|| format!("in config {}", path.display()))
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
            value.parse().map(Some).map_err(|_| anyhow::anyhow!("bad value '{value}' for {key}"))
        }
        match key {
            "k" => self.k = p(key, value)?,
            "q0_hi" => self.q0_hi = p(key, value)?,
            "e" => self.e = p(key, value)?,
            "b" => self.b = p(key, value)?,
            "t" => self.t = p(key, value)?,
            "pilot_policy" => self.pilot_policy = Some(value.parse()?),
            "intercoflow_policy" => self.intercoflow_policy = Some(value.parse()?),
            "fast_rate_heuristic" => self.fast_rate_heuristic = p(key, value)?,
            "port_bandwidth" => self.port_bandwidth = p(key, value)?,
            "delta" => self.delta = p(key, value)?,
            "rng_seed" => self.rng_seed = p(key, value)?,
            _ => bail!("unknown key '{key}' (expected one of {})", KEYS.join(", ")),
        }
        Ok(())
    }

    /// Values set in `other` win.
    pub fn overlay(self, other: &Knobs) -> Knobs {
        Knobs {
            k: other.k.or(self.k),
            q0_hi: other.q0_hi.or(self.q0_hi),
            e: other.e.or(self.e),
            b: other.b.or(self.b),
            t: other.t.or(self.t),
            pilot_policy: other.pilot_policy.or(self.pilot_policy),
            intercoflow_policy: other.intercoflow_policy.or(self.intercoflow_policy),
            fast_rate_heuristic: other.fast_rate_heuristic.or(self.fast_rate_heuristic),
            port_bandwidth: other.port_bandwidth.or(self.port_bandwidth),
            delta: other.delta.or(self.delta),
            rng_seed: other.rng_seed.or(self.rng_seed),
        }
    }

    pub fn params(&self) -> SchedulerParams {
        let d = SchedulerParams::default();
        SchedulerParams {
            k: self.k.unwrap_or(d.k),
            q0_hi: self.q0_hi.unwrap_or(d.q0_hi),
            e: self.e.unwrap_or(d.e),
            b: self.b.unwrap_or(d.b),
            t: self.t.unwrap_or(d.t),
            pilot_policy: self.pilot_policy.unwrap_or(d.pilot_policy),
            intercoflow_policy: self.intercoflow_policy.unwrap_or(d.intercoflow_policy),
            fast_rate_heuristic: self.fast_rate_heuristic.unwrap_or(d.fast_rate_heuristic),
        }
    }

    /// Simulation settings for one scheduler; bandwidth and interval keep
    /// their defaults unless set.
    pub fn sim_config(&self, num_ports: u32, scheduler: coflow_core::SchedulerKind) -> Result<SimConfig> {
        let mut cfg = SimConfig::new(num_ports, scheduler).with_params(self.params());
        if let Some(bw) = self.port_bandwidth {
            cfg.port_bandwidth = bw;
        }
        if let Some(d) = self.delta {
            cfg.delta = d;
        }
        if let Some(s) = self.rng_seed {
            cfg.rng_seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
