//! Synthetic trace generators.
//!
//! [`fb_like`] produces a stand-in for the public 150-port Hive/MapReduce
//! trace when the real file is not available. It is calibrated only to
//! published properties of that trace:
//!
//! - 150 ports, 526 coflows arriving over one hour, roughly 7×10^5 flows;
//! - the size/width bin fractions 44.3% / 24.1% / 4.5% / 27.1% (thin-small,
//!   wide-small, thin-large, wide-large; thin = width ≤ 7, small ≤ 100 MB),
//!   reproduced by stratification;
//! - heavy byte concentration (the top ~1% of coflows carry about half of
//!   all bytes and the top ~4% about 95%);
//! - reducer-level data with equal division over mappers, and about a
//!   quarter of coflows with unequal reducers.
//!
//! [`random_trace`] generates small unstructured traces for property tests.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::{CoflowSpec, PortId, Trace, MB};

pub const FB_PORTS: u32 = 150;
pub const FB_COFLOWS: usize = 526;
/// Coflows per bin (thin-small, wide-small, thin-large, wide-large).
pub const FB_BIN_COUNTS: [usize; 4] = [233, 127, 24, 142];
const HOUR_MS: f64 = 3_600_000.0;
const HEAVY_COFLOWS: usize = 20;
const HEAVY_TOP_MB: f64 = 400_000.0;
/// Size ratio between consecutive heavy ranks is e^{-0.15}; the top five
/// then hold ~56% of the head's bytes.
const HEAVY_DECAY: f64 = 0.15;

/// FB-like surrogate trace (see module docs).
pub fn fb_like(seed: u64) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bins: Vec<usize> =
        FB_BIN_COUNTS.iter().enumerate().flat_map(|(b, &n)| std::iter::repeat_n(b + 1, n)).collect();
    bins.shuffle(&mut rng);

    // the largest wide coflows, ranked: a geometric head carrying ~95% of bytes
    let mut heavy_rank = vec![None; FB_COFLOWS];
    let mut wide_large: Vec<usize> = (0..FB_COFLOWS).filter(|&i| bins[i] == 4).collect();
    wide_large.shuffle(&mut rng);
    for (rank, &i) in wide_large.iter().take(HEAVY_COFLOWS).enumerate() {
        heavy_rank[i] = Some(rank);
    }

    let gap = Exp::new(FB_COFLOWS as f64 / HOUR_MS).unwrap();
    let mut t = 0.0f64;
    let mut coflows = Vec::with_capacity(FB_COFLOWS);
    for (i, &bin) in bins.iter().enumerate() {
        let thin = bin == 1 || bin == 3;
        let large = bin >= 3;
        let (m, r) = if thin { thin_shape(&mut rng) } else { wide_shape(&mut rng, large) };
        let total_mb = match heavy_rank[i] {
            Some(rank) => HEAVY_TOP_MB * (-HEAVY_DECAY * rank as f64).exp() * rng.random_range(0.9..1.1),
            None if large => log_uniform(&mut rng, 100.0, 3_000.0),
            None => log_uniform(&mut rng, 0.05, 99.0),
        };
        let total = ((total_mb * MB as f64) as u64).max((m * r) as u64);
        let total = if large { total.max(100 * MB + 1) } else { total.min(100 * MB) };

        let mappers = pick_ports(&mut rng, m);
        let reducers = pick_ports(&mut rng, r);
        let shares = reducer_shares(&mut rng, r);
        let totals = split_by_shares(total, &shares, m as u64);
        let reducers = reducers.into_iter().zip(totals).collect();
        coflows.push(
            CoflowSpec::from_reducer_totals(i as u64 + 1, t.round() as u64, mappers, reducers)
                .expect("generator produces valid coflows"),
        );
        t += gap.sample(&mut rng);
    }
    Trace::new(FB_PORTS, coflows).expect("generator produces valid trace")
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn thin_shape(rng: &mut impl Rng) -> (usize, usize) {
    // most thin coflows are a single mapper or a single reducer
    let m = *[1usize, 1, 1, 1, 2, 2, 3, 4, 5, 6, 7].choose(rng).unwrap();
    let r = rng.random_range(1..=7 / m);
    if rng.random_bool(0.5) {
        (m, r)
    } else {
        (r, m)
    }
}

fn wide_shape(rng: &mut impl Rng, large: bool) -> (usize, usize) {
    let (hi_m, hi_r) = if large { (900.0, 150.0) } else { (200.0, 60.0) };
    loop {
        let m = log_uniform(rng, 1.0, hi_m).round() as usize;
        let r = log_uniform(rng, 1.0, hi_r).round() as usize;
        if m * r > 7 {
            return (m, r);
        }
    }
}

/// Mapper ports may repeat (several mappers on one machine); reducers may too.
fn pick_ports(rng: &mut impl Rng, n: usize) -> Vec<PortId> {
    if n <= FB_PORTS as usize {
        let mut all: Vec<PortId> = (0..FB_PORTS).collect();
        all.shuffle(rng);
        all.truncate(n);
        all
    } else {
        (0..n).map(|_| rng.random_range(0..FB_PORTS)).collect()
    }
}

fn reducer_shares(rng: &mut impl Rng, r: usize) -> Vec<f64> {
    if r == 1 || rng.random_bool(0.61) {
        return vec![1.0; r];
    }
    // max/min share ratio, with survival P(ratio ≥ k) following the
    // published low-skew filter counts
    let ratio = skew_quantile(rng.random::<f64>());
    let mut shares: Vec<f64> = (0..r)
        .map(|i| match i {
            0 => 1.0,
            1 => ratio,
            _ => ratio.powf(rng.random::<f64>()),
        })
        .collect();
    shares.shuffle(rng);
    shares
}

/// Inverse of the survival curve through (k, P(ratio ≥ k)).
fn skew_quantile(u: f64) -> f64 {
    const POINTS: [(f64, f64); 6] = [(1.0, 1.0), (2.0, 0.70), (3.0, 0.46), (4.0, 0.36), (5.0, 0.30), (50.0, 0.0)];
    for w in POINTS.windows(2) {
        let ((k0, s0), (k1, s1)) = (w[0], w[1]);
        if u <= s0 && u >= s1 {
            let f = (s0 - u) / (s0 - s1);
            return (k0.ln() + f * (k1.ln() - k0.ln())).exp();
        }
    }
    1.0
}

/// Integer reducer totals proportional to `shares`, each at least `min`.
fn split_by_shares(total: u64, shares: &[f64], min: u64) -> Vec<u64> {
    let sum: f64 = shares.iter().sum();
    let mut out: Vec<u64> = shares.iter().map(|s| ((total as f64 * s / sum) as u64).max(min)).collect();
    let assigned: u64 = out.iter().sum();
    if assigned < total {
        out[0] += total - assigned;
    }
    out
}

#[derive(Debug, Clone)]
pub struct RandomTraceConfig {
    pub num_ports: u32,
    pub num_coflows: usize,
    pub max_mappers: usize,
    pub max_reducers: usize,
    pub arrival_span_ms: u64,
    pub min_flow_bytes: u64,
    pub max_flow_bytes: u64,
}

impl Default for RandomTraceConfig {
    fn default() -> Self {
        Self {
            num_ports: 16,
            num_coflows: 200,
            max_mappers: 6,
            max_reducers: 6,
            arrival_span_ms: 20_000,
            min_flow_bytes: 1,
            max_flow_bytes: 20 * MB,
        }
    }
}

/// Random coflows with log-uniform flow sizes and uniform arrivals.
pub fn random_trace(cfg: &RandomTraceConfig, seed: u64) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coflows = (0..cfg.num_coflows)
        .map(|i| {
            let m = rng.random_range(1..=cfg.max_mappers);
            let r = rng.random_range(1..=cfg.max_reducers);
            let mappers = (0..m).map(|_| rng.random_range(0..cfg.num_ports)).collect();
            let reducers = (0..r).map(|_| rng.random_range(0..cfg.num_ports)).collect();
            let sizes = (0..m * r)
                .map(|_| {
                    log_uniform(&mut rng, cfg.min_flow_bytes as f64, cfg.max_flow_bytes as f64).round().max(1.0) as u64
                })
                .collect();
            let arrival = rng.random_range(0..=cfg.arrival_span_ms);
            CoflowSpec::new(i as u64, arrival, mappers, reducers, sizes).expect("valid random coflow")
        })
        .collect();
    Trace::new(cfg.num_ports, coflows).expect("valid random trace")
}
