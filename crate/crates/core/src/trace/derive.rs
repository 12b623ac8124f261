//! Derived traces: skew filtering, width filtering, replication across
//! port blocks, and mapper-skew injection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CoflowSpec, Trace};
use crate::{Error, Result};

/// Keeps coflows whose skew (max/min flow size) is at least `k`.
pub fn filter_low_skew(trace: &Trace, k: f64) -> Result<Trace> {
    if k.is_nan() || k < 1.0 {
        return Err(Error::Param(format!("skew threshold must be >= 1, got {k}")));
    }
    let kept = trace.coflows().iter().filter(|c| c.skew() >= k).cloned().collect();
    Trace::new(trace.num_ports, kept)
}

/// Keeps coflows with more than `thin_limit` flows.
pub fn filter_thin(trace: &Trace, thin_limit: usize) -> Trace {
    let kept = trace.coflows().iter().filter(|c| c.width() > thin_limit).cloned().collect();
    Trace::new(trace.num_ports, kept).expect("subset of a valid trace")
}

/// Replicates every coflow `times` times; copy `i` is shifted by
/// `i * num_ports` ports and gets id `i * (max_id + 1) + id`.
pub fn replicate_trace(trace: &Trace, times: u32) -> Result<Trace> {
    if times == 0 {
        return Err(Error::Param("replication factor must be >= 1".into()));
    }
    let n = trace.num_ports;
    let ports = n.checked_mul(times).ok_or_else(|| Error::Param("replicated port count overflows".into()))?;
    let stride = trace.coflows().iter().map(|c| c.id).max().map_or(0, |m| m + 1);
    let mut out = Vec::with_capacity(trace.coflows().len() * times as usize);
    for i in 0..times {
        let shift = i * n;
        for c in trace.coflows() {
            let mappers = c.mappers().iter().map(|p| p + shift).collect();
            let reducers = c.reducers().iter().map(|p| p + shift).collect();
            let sizes = c.flows().iter().map(|f| f.size).collect();
            out.push(CoflowSpec::new(u64::from(i) * stride + c.id, c.arrival_ms, mappers, reducers, sizes)?);
        }
    }
    Trace::new(ports, out)
}

/// Coefficient of variation (population std / mean) of per-mapper data of a
/// coflow, or `None` when it has a single mapper.
pub fn mapper_cov(c: &CoflowSpec) -> Option<f64> {
    let m = c.mappers().len();
    if m < 2 {
        return None;
    }
    let mut per_mapper = vec![0f64; m];
    for (i, f) in c.flows().iter().enumerate() {
        per_mapper[i % m] += f.size as f64;
    }
    Some(cov(&per_mapper))
}

fn cov(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Median CoV of per-mapper data in Mantri-like traces.
pub const MANTRI_COV_P50: f64 = 0.34;
/// 90th-percentile CoV of per-mapper data in Mantri-like traces.
pub const MANTRI_COV_P90: f64 = 3.1;

/// Redistributes each reducer's bytes across its mappers so that the
/// cross-coflow distribution of per-mapper-data CoV has the requested median
/// and 90th percentile.
///
/// Each coflow draws a target CoV from a log-normal whose median and P90 are
/// the targets, then draws log-normal mapper weights whose spread is solved
/// (by bisection) so the weights hit that CoV exactly. The same weights scale
/// every reducer of the coflow, so reducer totals are preserved byte-exactly.
/// Targets that a coflow cannot reach with its mapper count are capped just
/// below the maximum `sqrt(M - 1)`. Single-mapper coflows pass through.
pub fn gen_mantri_like(trace: &Trace, target_cov_p50: f64, target_cov_p90: f64, seed: u64) -> Result<Trace> {
    if !(target_cov_p50 > 0.0 && target_cov_p90 > 0.0) {
        return Err(Error::Param("CoV targets must be positive".into()));
    }
    // z-score of the 90th percentile of a standard normal
    const Z90: f64 = 1.281_551_565_545;
    let mu = target_cov_p50.ln();
    let sigma = ((target_cov_p90.ln() - mu) / Z90).max(0.0);

    let mut out = Vec::with_capacity(trace.coflows().len());
    for c in trace.coflows() {
        let m = c.mappers().len();
        if m < 2 {
            out.push(c.clone());
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c.id);
        let z_target: f64 = rng.sample(StandardNormal);
        let cap = ((m - 1) as f64).sqrt() * 0.98;
        let target = (mu + sigma * z_target).exp().min(cap);
        let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let weights = weights_with_cov(&z, target);

        let mut sizes = Vec::with_capacity(c.width());
        for r in 0..c.reducers().len() {
            sizes.extend(apportion(c.reducer_total(r), &weights));
        }
        out.push(c.with_sizes(sizes)?);
    }
    Trace::new(trace.num_ports, out)
}

/// exp(s·z) with `s` chosen so the CoV of the result is `target`.
fn weights_with_cov(z: &[f64], target: f64) -> Vec<f64> {
    let eval = |s: f64| -> Vec<f64> {
        // shift by max for numerical range; CoV is scale-free
        let zmax = z.iter().copied().fold(f64::MIN, f64::max);
        z.iter().map(|&x| (s * (x - zmax)).exp()).collect()
    };
    if z.iter().all(|&x| x == z[0]) {
        return vec![1.0; z.len()];
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while cov(&eval(hi)) < target && hi < 1e4 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cov(&eval(mid)) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    eval(0.5 * (lo + hi))
}

/// Splits `total` into integer parts proportional to `weights` (largest
/// remainder, ties to the lower index), every part at least one byte.
fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let n = weights.len();
    let floor_total = total.saturating_sub(n as u64);
    let wsum: f64 = weights.iter().sum();
    let ideal: Vec<f64> = weights.iter().map(|w| floor_total as f64 * w / wsum).collect();
    let mut parts: Vec<u64> = ideal.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = parts.iter().sum();
    let mut left = floor_total.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        parts[i] += 1;
        left -= 1;
    }
    // one guaranteed byte per flow, or the whole total if it is smaller
    let base = total.min(n as u64);
    for (i, p) in parts.iter_mut().enumerate() {
        *p += u64::from((i as u64) < base);
    }
    debug_assert_eq!(parts.iter().sum::<u64>(), total);
    parts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{parse_trace, MB};
    use proptest::prelude::*;

    fn small_trace() -> Trace {
        parse_trace(
            "10 4\n\
             1 0 2 0 1 2 2:10 3:20\n\
             2 5 1 4 1 5:8\n\
             3 7 3 0 1 2 1 9:3\n\
             4 9 2 6 7 2 8:1 9:50\n",
        )
        .unwrap()
    }

    #[test]
    fn skew_filter_keeps_at_least_k() {
        let t = small_trace();
        assert_eq!(filter_low_skew(&t, 1.0).unwrap().coflows().len(), 4);
        let ids: Vec<_> = filter_low_skew(&t, 2.0).unwrap().coflows().iter().map(|c| c.id).collect();
        assert_eq!(ids, vec![1, 4]);
        assert_eq!(filter_low_skew(&t, 50.0).unwrap().coflows().len(), 1);
        assert!(filter_low_skew(&t, 0.5).is_err());
    }

    #[test]
    fn all_equal_flows_survive_k1() {
        let t = parse_trace("4 2\n1 0 2 0 1 1 2:4\n2 0 1 3 1 2:1\n").unwrap();
        assert_eq!(filter_low_skew(&t, 1.0).unwrap(), t);
    }

    #[test]
    fn thin_filter() {
        let t = small_trace();
        assert_eq!(filter_thin(&t, 0), t);
        let ids: Vec<_> = filter_thin(&t, 3).coflows().iter().map(|c| c.id).collect();
        assert_eq!(ids, vec![1, 4]);
        assert!(filter_thin(&t, usize::MAX).coflows().is_empty());
    }

    #[test]
    fn replicate_once_is_identity() {
        let t = small_trace();
        assert_eq!(replicate_trace(&t, 1).unwrap(), t);
        assert!(replicate_trace(&t, 0).is_err());
    }

    #[test]
    fn replicate_shifts_ports() {
        let t = parse_trace("150 1\n0 3 1 0 1 1:1").unwrap();
        let r = replicate_trace(&t, 2).unwrap();
        assert_eq!(r.num_ports, 300);
        let pairs: Vec<_> =
            r.coflows().iter().map(|c| (c.id, c.arrival_ms, c.flows()[0].sender, c.flows()[0].receiver)).collect();
        assert_eq!(pairs, vec![(0, 3, 0, 1), (1, 3, 150, 151)]);
    }

    #[test]
    fn apportion_is_exact() {
        assert_eq!(apportion(10, &[1.0, 1.0]), vec![5, 5]);
        assert_eq!(apportion(3, &[1.0, 1e-9, 1e-9]), vec![1, 1, 1]);
        assert_eq!(apportion(2, &[1.0, 1.0, 1.0]), vec![1, 1, 0]);
        let p = apportion(MB * 7 + 3, &[0.1, 2.0, 0.7, 5.5]);
        assert_eq!(p.iter().sum::<u64>(), MB * 7 + 3);
    }

    #[test]
    fn weights_hit_target_cov() {
        let z = [0.3, -1.2, 0.8, 2.0, -0.1, 0.0];
        for target in [0.1, 0.34, 1.0, 2.0] {
            let w = weights_with_cov(&z, target);
            assert!((cov(&w) - target).abs() < 1e-9, "{target}");
        }
    }

    #[test]
    fn mantri_single_mapper_passthrough() {
        let t = parse_trace("4 1\n1 0 1 0 2 1:3 2:9").unwrap();
        assert_eq!(gen_mantri_like(&t, 0.34, 3.1, 1).unwrap(), t);
        assert!(gen_mantri_like(&t, 0.0, 3.1, 1).is_err());
    }

    proptest! {
        #[test]
        fn mantri_preserves_reducer_totals(seed in any::<u64>(), p50 in 0.05f64..2.0, p90 in 0.05f64..5.0) {
            let t = small_trace();
            let out = gen_mantri_like(&t, p50, p90, seed).unwrap();
            prop_assert_eq!(out.coflows().len(), t.coflows().len());
            for (a, b) in t.coflows().iter().zip(out.coflows()) {
                prop_assert_eq!(a.mappers(), b.mappers());
                prop_assert_eq!(a.reducers(), b.reducers());
                prop_assert_eq!(a.arrival_ms, b.arrival_ms);
                for r in 0..a.reducers().len() {
                    prop_assert_eq!(a.reducer_total(r), b.reducer_total(r));
                }
            }
            prop_assert_eq!(&out, &gen_mantri_like(&t, p50, p90, seed).unwrap());
        }

        #[test]
        fn filters_are_submultisets(k in 1.0f64..60.0, thin in 0usize..8, times in 1u32..4) {
            let t = small_trace();
            for f in [filter_low_skew(&t, k).unwrap(), filter_thin(&t, thin)] {
                for c in f.coflows() {
                    let orig = t.coflows().iter().find(|o| o.id == c.id).unwrap();
                    prop_assert_eq!(orig.flows().iter().map(|f| (f.sender, f.receiver, f.size)).collect::<Vec<_>>(),
                        c.flows().iter().map(|f| (f.sender, f.receiver, f.size)).collect::<Vec<_>>());
                }
            }
            let r = replicate_trace(&t, times).unwrap();
            prop_assert_eq!(r.coflows().len(), t.coflows().len() * times as usize);
            prop_assert_eq!(r.total_bytes(), t.total_bytes() * u64::from(times));
        }
    }
}
