use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coflow_core::engine::EventLog;
use coflow_core::metrics::{CoflowMetrics, COMPARISON_COLUMNS, METRICS_COLUMNS};
use tempfile::TempDir;

// 100 MB and 50 MB on the same link at t = 0
const TWO_ON_ONE_PORT: &str = "2 2\n1 0 1 0 1 1:100\n2 0 1 0 1 1:50\n";

fn coflowsim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coflowsim"))
        .env("COFLOWSIM_OUT", out)
        .env_remove("RUST_LOG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> (TempDir, String) {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("two.txt");
    fs::write(&trace, TWO_ON_ONE_PORT).unwrap();
    (dir, trace.to_str().unwrap().to_string())
}

fn read_metrics(path: &Path) -> Vec<CoflowMetrics> {
    let mut rd = csv::Reader::from_path(path).unwrap();
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), METRICS_COLUMNS);
    rd.deserialize().collect::<Result<_, _>>().unwrap()
}

#[test]
fn run_writes_logs_and_metrics_for_each_scheduler() {
    let (dir, trace) = setup();
    let out = dir.path().join("out");
    let o = coflowsim(&out, &["run", "--trace", &trace, "-s", "fifo,fair"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let fifo = read_metrics(&out.join("fifo.metrics.csv"));
    let ccts: Vec<(u64, f64)> = fifo.iter().map(|m| (m.coflow_id, m.cct_ms)).collect();
    assert_eq!(ccts, vec![(1, 800.0), (2, 1200.0)]);
    let fair = read_metrics(&out.join("fair.metrics.csv"));
    assert_eq!(fair.iter().map(|m| m.cct_ms).collect::<Vec<_>>(), vec![1200.0, 800.0]);

    let log = EventLog::read_csv(fs::File::open(out.join("fifo.events.csv")).unwrap()).unwrap();
    assert_eq!(log.coflows().len(), 2);
}

#[test]
fn missing_trace_exits_with_code_2() {
    let dir = TempDir::new().unwrap();
    let o = coflowsim(dir.path(), &["run", "--trace", "/nonexistent/trace.txt"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_trace_fails_without_code_2() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("bad.txt");
    fs::write(&trace, "4 1\n7 0 1 9 1 1:10\n").unwrap();
    let o = coflowsim(dir.path(), &["run", "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn comparing_a_scheduler_with_itself_gives_unit_speedups() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let args = ["compare", "--synthetic", "random", "--seed", "3", "--baseline", "aalo", "--subject", "aalo"];
    let o = coflowsim(out, &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let mut rd = csv::Reader::from_path(out.join("aalo_vs_aalo.coflows.csv")).unwrap();
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), COMPARISON_COLUMNS);
    let speedups: Vec<f64> = rd.records().map(|r| r.unwrap()[4].parse().unwrap()).collect();
    assert_eq!(speedups.len(), 200);
    assert!(speedups.iter().all(|&s| s == 1.0));

    let mut rd = csv::Reader::from_path(out.join("aalo_vs_aalo.summary.csv")).unwrap();
    for r in rd.records() {
        let r = r.unwrap();
        assert_eq!(r[3].parse::<f64>().unwrap(), 1.0, "{}", &r[2]);
    }
    for f in ["aalo_vs_aalo.speedup_cdf.csv", "aalo.cct_cdf.csv", "aalo.learning_fraction_cdf.csv"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        assert!(text.starts_with("value,cum_fraction\n"), "{f}");
    }
}

#[test]
fn config_file_and_flags_reach_the_scheduler() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    // a 2x1 coflow: piloted with t = 1, bypassed with the default t = 7
    let trace = out.join("wide.txt");
    fs::write(&trace, "3 1\n1 0 2 0 1 1 2:2\n").unwrap();
    let cfg = out.join("sim.conf");
    fs::write(&cfg, "# narrow bypass\nt = 1\n").unwrap();
    let trace = trace.to_str().unwrap();
    let cfg = cfg.to_str().unwrap();

    let o = coflowsim(out, &["run", "--trace", trace, "--config", cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_metrics(&out.join("sampling.metrics.csv"));
    assert_eq!((m[0].learn_latency_ms, m[0].cct_ms), (Some(8.0), 16.0));

    let o = coflowsim(out, &["run", "--trace", trace, "--config", cfg, "--t", "7"]);
    assert!(o.status.success());
    let m = read_metrics(&out.join("sampling.metrics.csv"));
    assert!(m[0].excluded_from_learning);

    fs::write(out.join("bad.conf"), "thin_limit = 1\n").unwrap();
    let o = coflowsim(out, &["run", "--trace", trace, "--config", out.join("bad.conf").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["run", "--synthetic", "random", "--seed", "7", "-s", "sampling,aalo"];
    assert!(coflowsim(&a, &args).status.success());
    assert!(coflowsim(&b, &args).status.success());
    for f in ["sampling.events.csv", "sampling.metrics.csv", "aalo.events.csv", "aalo.metrics.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn gentrace_writes_parseable_traces() {
    let (dir, _) = setup();
    let out = dir.path();
    let o = coflowsim(out, &["gentrace", "--synthetic", "fb-like", "--kind", "wide-only"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let wide = coflow_core::trace::parse_trace(&fs::read_to_string(out.join("wide-only.txt")).unwrap()).unwrap();
    assert_eq!(wide.coflows().len(), 269);
    assert!(wide.coflows().iter().all(|c| c.width() > 7));

    let src = out.join("wide-only.txt");
    let dst = out.join("m.txt");
    let args = ["gentrace", "--trace", src.to_str().unwrap(), "--kind", "mantri-like", "-o", dst.to_str().unwrap()];
    assert!(coflowsim(out, &args).status.success());
    let m = coflow_core::trace::parse_trace(&fs::read_to_string(&dst).unwrap()).unwrap();
    assert_eq!(m.coflows().len(), 269);
    assert_eq!(m.total_bytes(), wide.total_bytes());
}

#[test]
fn bound_writes_a_flagged_sweep_table() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let args = ["bound", "--trials", "2000", "--mean-gap", "0.1,1", "--width", "1", "--m", "2,8"];
    let o = coflowsim(out, &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let mut rd = csv::Reader::from_path(out.join("bound_sweep.csv")).unwrap();
    assert_eq!(rd.headers().unwrap().len(), 8);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| &r[7] == "true"));
}
