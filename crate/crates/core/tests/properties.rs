//! Invariants checked on randomly generated traces and inputs.

mod common;

use coflow_core::metrics::bin_of;
use coflow_core::trace::synth::{fb_like, FB_COFLOWS};
use coflow_core::{InterCoflowPolicy, PilotPolicy, SchedulerKind, SchedulerParams, MB};
use common::*;
use proptest::prelude::*;

fn ok<T>(r: Result<T, String>) -> Result<T, TestCaseError> {
    r.map_err(TestCaseError::fail)
}

fn params_strategy() -> impl Strategy<Value = SchedulerParams> {
    let pilot = prop_oneof![
        (1usize..4).prop_map(PilotPolicy::Constant),
        (0.01f64..1.0).prop_map(PilotPolicy::FracSenders),
        (0.01f64..1.0).prop_map(PilotPolicy::FracFlows),
    ];
    (1usize..11, 0usize..10, pilot, 0usize..6, any::<bool>()).prop_map(|(k, t, pilot_policy, pi, fast)| {
        SchedulerParams {
            k,
            t,
            pilot_policy,
            intercoflow_policy: InterCoflowPolicy::ALL[pi],
            fast_rate_heuristic: fast,
            ..Default::default()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn every_scheduler_respects_capacity_conserves_bytes_and_finishes(seed in any::<u64>()) {
        let trace = small_trace(seed);
        for kind in SchedulerKind::ALL {
            let log = ok(run_checked(&trace, &config(&trace, kind, SchedulerParams::default())))?;
            ok(check_conservation(&trace, &log))?;
        }
    }

    #[test]
    fn learning_schedulers_hold_up_under_any_parameters(seed in any::<u64>(), params in params_strategy()) {
        let trace = small_trace(seed);
        for kind in [SchedulerKind::Sampling, SchedulerKind::Aalo, SchedulerKind::AaloOracle] {
            let log = ok(run_checked(&trace, &config(&trace, kind, params.clone())))?;
            ok(check_conservation(&trace, &log))?;
        }
    }

    #[test]
    fn runs_are_byte_identical(seed in any::<u64>()) {
        let trace = small_trace(seed);
        for kind in SchedulerKind::ALL {
            ok(check_deterministic(&trace, &config(&trace, kind, SchedulerParams::default())))?;
        }
    }

    #[test]
    fn aalo_never_promotes(seed in any::<u64>()) {
        let trace = small_trace(seed);
        let params = SchedulerParams::default();
        let log = ok(run_checked(&trace, &config(&trace, SchedulerKind::Aalo, params.clone())))?;
        ok(check_aalo_monotone(&log, &params))?;
    }

    #[test]
    fn only_wide_coflows_are_piloted(seed in any::<u64>(), t in 0usize..12) {
        let trace = small_trace(seed);
        let params = SchedulerParams { t, ..Default::default() };
        let log = ok(run_checked(&trace, &config(&trace, SchedulerKind::Sampling, params)))?;
        ok(check_bypass(&trace, &log, t))?;
    }

    #[test]
    fn queue_order_decides_service_at_a_shared_port(
        receivers in prop::collection::vec(1u32..8, 1..8),
        order_seed in any::<u64>(),
        fast in any::<bool>(),
    ) {
        let mut order: Vec<usize> = (0..receivers.len()).collect();
        let mut s = order_seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        ok(check_queue_order(&receivers, &order, fast))?;
    }

    #[test]
    fn ranking_policies_ignore_the_byte_scale(
        inputs in prop::collection::vec(
            (1.0f64..1e9, 1usize..500, 0.0f64..1e9, prop::collection::vec(0usize..20, 1..6)),
            2..12,
        ),
        j in 1i32..30,
    ) {
        ok(check_policy_scale(&inputs, 2f64.powi(j)))?;
    }

    #[test]
    fn sebf_order_ignores_the_byte_scale(seed in any::<u64>(), j in 1u32..8) {
        ok(check_sebf_scale(seed, j))?;
    }

    #[test]
    fn bins_partition_every_coflow(width in 1usize..10_000, bytes in 1u64..(1 << 40)) {
        let b = bin_of(width, bytes);
        let thin = width <= 7;
        let short = bytes <= 100 * MB;
        let expected = [(true, true), (false, true), (true, false), (false, false)]
            .iter()
            .position(|&k| k == (thin, short))
            .unwrap() as u8 + 1;
        prop_assert_eq!(b, expected);
    }
}

#[test]
fn surrogate_bins_match_published_fractions() {
    let trace = fb_like(1);
    let mut counts = [0usize; 4];
    for c in trace.coflows() {
        counts[(bin_of(c.width(), c.total_size()) - 1) as usize] += 1;
    }
    let published = [44.3, 24.1, 4.5, 27.1];
    for (n, p) in counts.iter().zip(published) {
        let pct = 100.0 * *n as f64 / FB_COFLOWS as f64;
        assert!((pct - p).abs() <= 0.5, "bin fractions {counts:?}");
    }
}
