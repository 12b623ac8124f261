//! How much average CCT two coflows lose when their order is decided from
//! sampled flow sizes instead of true sizes.
//!
//! Two coflows share the same ports, so the one served first finishes at
//! its own size and the other at the combined size. Coflow `i` has `c·n_i`
//! flows drawn i.i.d. from `[a_i, b_i]` with mean `μ_i`; its size is
//! estimated from `m_i` of them. [`gap_bound`] is a closed-form
//! concentration bound on the expected relative loss and [`mc_gap`]
//! measures the loss directly.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;

use crate::{Error, Result};

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.5758293035489;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n1: u32,
    pub n2: u32,
    pub m1: u32,
    pub m2: u32,
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl BoundParams {
    /// Both coflows drawn from `[a, b]` with one flow per unit and `m` pilots.
    pub fn symmetric(m: u32, a: f64, b: f64, mu1: f64, mu2: f64) -> Self {
        Self { n1: 1, n2: 1, m1: m, m2: m, a1: a, b1: b, a2: a, b2: b, mu1, mu2 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.a1, self.b1, self.a2, self.b2, self.mu1, self.mu2].iter().all(|x| x.is_finite());
        if !finite || self.a1 < 0.0 || self.a2 < 0.0 {
            return Err(Error::Param(format!("flow size bounds must be finite and non-negative: {self:?}")));
        }
        if !(self.a1 <= self.mu1 && self.mu1 <= self.b1 && self.a2 <= self.mu2 && self.mu2 <= self.b2) {
            return Err(Error::Param(format!("means must lie within their bounds: {self:?}")));
        }
        if self.n1 == 0 || self.n2 == 0 || self.m1 == 0 || self.m2 == 0 {
            return Err(Error::Param("flow and pilot counts must be at least 1".into()));
        }
        Ok(())
    }

    /// Swaps the coflows if needed so that `n2·μ2 ≥ n1·μ1`.
    pub fn normalized(self) -> Self {
        if f64::from(self.n2) * self.mu2 >= f64::from(self.n1) * self.mu1 {
            return self;
        }
        Self {
            n1: self.n2,
            n2: self.n1,
            m1: self.m2,
            m2: self.m1,
            a1: self.a2,
            b1: self.b2,
            a2: self.a1,
            b2: self.b1,
            mu1: self.mu2,
            mu2: self.mu1,
        }
    }
}

/// Upper bound on the expected relative increase of total CCT caused by
/// ordering on sampled sizes:
///
/// `4·exp(−2Δ² / (n2(b2−a2)/√m2 + n1(b1−a1)/√m1)²) · Δ / (n2μ2 + 2n1μ1)`
/// with `Δ = n2μ2 − n1μ1`.
pub fn gap_bound(p: &BoundParams) -> Result<f64> {
    p.validate()?;
    let p = p.normalized();
    let (n1, n2) = (f64::from(p.n1), f64::from(p.n2));
    let diff = n2 * p.mu2 - n1 * p.mu1;
    if diff <= 0.0 {
        return Ok(0.0);
    }
    let spread = n2 * (p.b2 - p.a2) / f64::from(p.m2).sqrt() + n1 * (p.b1 - p.a1) / f64::from(p.m1).sqrt();
    if spread == 0.0 {
        return Ok(0.0);
    }
    let decay = (-2.0 * diff * diff / (spread * spread)).exp();
    Ok(4.0 * decay * diff / (n2 * p.mu2 + 2.0 * n1 * p.mu1))
}

/// Flow size distribution for [`mc_gap`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeDist {
    /// Uniform with mean `μ`, on the widest interval centred at `μ` inside
    /// `[a, b]`. This is all of `[a, b]` when `μ` is its midpoint.
    Uniform,
    /// Log-normal with median `μ` and shape `sigma`, truncated to `[a, b]`.
    TruncatedLogNormal { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    /// Width multiplier: coflow `i` has `c·n_i` flows.
    pub c: u32,
    pub trials: u64,
    pub dist: SizeDist,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { c: 100, trials: 100_000, dist: SizeDist::Uniform, seed: 0 }
    }
}

impl McConfig {
    pub fn validate(&self, p: &BoundParams) -> Result<()> {
        if self.c == 0 || self.trials == 0 {
            return Err(Error::Param("c and trials must be at least 1".into()));
        }
        if let SizeDist::TruncatedLogNormal { sigma } = self.dist {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Param(format!("log-normal sigma must be > 0, got {sigma}")));
            }
        }
        let (w1, w2) = (u64::from(self.c) * u64::from(p.n1), u64::from(self.c) * u64::from(p.n2));
        if u64::from(p.m1) > w1 || u64::from(p.m2) > w2 {
            return Err(Error::Param(format!("pilot counts ({}, {}) exceed widths ({w1}, {w2})", p.m1, p.m2)));
        }
        Ok(())
    }
}

/// Mean relative gap with its 99% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Copy)]
enum Sampler {
    Uniform { lo: f64, hi: f64 },
    LogNormal { dist: LogNormal<f64>, a: f64, b: f64 },
}

impl Sampler {
    fn new(dist: SizeDist, a: f64, b: f64, mu: f64) -> Result<Self> {
        Ok(match dist {
            SizeDist::Uniform => {
                let h = (mu - a).min(b - mu);
                Sampler::Uniform { lo: mu - h, hi: mu + h }
            }
            SizeDist::TruncatedLogNormal { sigma } => {
                if mu.is_nan() || mu <= 0.0 {
                    return Err(Error::Param("log-normal sizes need a positive mean".into()));
                }
                let dist = LogNormal::new(mu.ln(), sigma).map_err(|e| Error::Param(e.to_string()))?;
                Sampler::LogNormal { dist, a, b }
            }
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Sampler::Uniform { lo, hi } if lo == hi => lo,
            Sampler::Uniform { lo, hi } => rng.random_range(lo..=hi),
            Sampler::LogNormal { dist, a, b } => {
                // rejection; clamps if the interval holds almost no mass
                for _ in 0..1000 {
                    let x = dist.sample(rng);
                    if (a..=b).contains(&x) {
                        return x;
                    }
                }
                dist.sample(rng).clamp(a, b)
            }
        }
    }

    /// (true total, estimate from the first `m` draws) for `width` flows.
    fn coflow(&self, rng: &mut ChaCha8Rng, width: u64, m: u64) -> (f64, f64) {
        let mut total = 0.0;
        let mut pilots = 0.0;
        for i in 0..width {
            let x = self.sample(rng);
            total += x;
            if i < m {
                pilots += x;
            }
        }
        (total, pilots / m as f64 * width as f64)
    }
}

/// Relative gap of one trial. Ties in the estimates serve coflow 1 first.
fn trial_gap(s1: f64, e1: f64, s2: f64, e2: f64) -> f64 {
    let both = s1 + s2;
    let best = s1.min(s2) + both;
    let chosen = if e1 <= e2 { s1 } else { s2 } + both;
    if best > 0.0 {
        (chosen - best) / best
    } else {
        0.0
    }
}

const CHUNK: u64 = 1024;

/// Monte-Carlo estimate of the relative CCT gap. Deterministic for a fixed
/// seed: trial `t` draws from the ChaCha stream `t`.
pub fn mc_gap(p: &BoundParams, cfg: &McConfig) -> Result<McEstimate> {
    p.validate()?;
    cfg.validate(p)?;
    let s1 = Sampler::new(cfg.dist, p.a1, p.b1, p.mu1)?;
    let s2 = Sampler::new(cfg.dist, p.a2, p.b2, p.mu2)?;
    let (w1, w2) = (u64::from(cfg.c) * u64::from(p.n1), u64::from(cfg.c) * u64::from(p.n2));
    let (m1, m2) = (u64::from(p.m1), u64::from(p.m2));

    let chunks = cfg.trials.div_ceil(CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut acc = (0.0, 0.0);
            for t in k * CHUNK..((k + 1) * CHUNK).min(cfg.trials) {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(t);
                let (t1, e1) = s1.coflow(&mut rng, w1, m1);
                let (t2, e2) = s2.coflow(&mut rng, w2, m2);
                let g = trial_gap(t1, e1, t2, e2);
                acc.0 += g;
                acc.1 += g * g;
            }
            acc
        })
        .collect();
    let (sum, sum_sq) = sums.iter().fold((0.0, 0.0), |a, s| (a.0 + s.0, a.1 + s.1));
    let n = cfg.trials as f64;
    let mean = sum / n;
    let var = if cfg.trials > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    let half = Z_99 * (var / n).sqrt();
    Ok(McEstimate { mean, ci_low: mean - half, ci_high: mean + half })
}

/// One point of the sweep: coflow 1 has mean `mu`, coflow 2 mean
/// `mu + mean_gap`, both uniform over a window of `width` centred at their
/// mean, with `m` pilots each and one flow per unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub mean_gap: f64,
    pub width: f64,
    pub m: u32,
}

impl SweepPoint {
    pub fn params(&self, mu: f64) -> BoundParams {
        let h = self.width / 2.0;
        let (mu1, mu2) = (mu, mu + self.mean_gap);
        BoundParams {
            n1: 1,
            n2: 1,
            m1: self.m,
            m2: self.m,
            a1: mu1 - h,
            b1: mu1 + h,
            a2: mu2 - h,
            b2: mu2 + h,
            mu1,
            mu2,
        }
    }
}

/// Base mean flow size of the sweep, large enough to keep every window
/// non-negative.
pub const SWEEP_BASE_MEAN: f64 = 1.0;

pub fn default_grid() -> Vec<SweepPoint> {
    let mut grid = Vec::new();
    for mean_gap in [0.01, 0.03, 0.1, 0.3, 1.0] {
        for width in [0.5, 1.0, 2.0] {
            for m in [1, 2, 4, 8] {
                grid.push(SweepPoint { mean_gap, width, m });
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub bound: f64,
    pub mc: McEstimate,
}

impl SweepRow {
    /// The upper confidence limit of the simulated gap stays under the bound.
    pub fn holds(&self) -> bool {
        self.mc.ci_high <= self.bound
    }
}

pub fn bound_sweep(grid: &[SweepPoint], cfg: &McConfig) -> Result<Vec<SweepRow>> {
    grid.iter()
        .map(|pt| {
            let p = pt.params(SWEEP_BASE_MEAN);
            Ok(SweepRow { point: *pt, bound: gap_bound(&p)?, mc: mc_gap(&p, cfg)? })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["mean_gap", "width", "m", "gap_bound", "mc_gap", "mc_ci_low", "mc_ci_high", "holds"])?;
    for r in rows {
        wr.write_record([
            r.point.mean_gap.to_string(),
            r.point.width.to_string(),
            r.point.m.to_string(),
            r.bound.to_string(),
            r.mc.mean.to_string(),
            r.mc.ci_low.to_string(),
            r.mc.ci_high.to_string(),
            r.holds().to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
