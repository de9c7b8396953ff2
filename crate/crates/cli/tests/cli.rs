use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::thread::sleep;
use std::time::{Duration, Instant};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_persona16"));
    c.env("RUST_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn write_theta(dir: &Path, name: &str, theta: [u8; 16], noise: f64) -> PathBuf {
    const NAMES: [&str; 16] = [
        "WARMTH",
        "INTELLECT",
        "EMOTIONAL_STABILITY",
        "ASSERTIVENESS",
        "GREGARIOUSNESS",
        "DUTIFULNESS",
        "FRIENDLINESS",
        "SENSITIVITY",
        "DISTRUST",
        "IMAGINATION",
        "RESERVE",
        "ANXIETY",
        "COMPLEXITY",
        "INTROVERSION",
        "ORDERLINESS",
        "EMOTIONALITY",
    ];
    let theta: serde_json::Map<String, serde_json::Value> =
        NAMES.iter().zip(theta).map(|(n, v)| (n.to_string(), v.into())).collect();
    let path = dir.join(format!("{name}.json"));
    let doc = serde_json::json!({"theta": theta, "seed": 3, "noise_p": noise});
    fs::write(&path, doc.to_string()).unwrap();
    path
}

fn write_config(dir: &Path, file: &str, entries: &[(&str, String)]) -> PathBuf {
    let list: Vec<_> = entries
        .iter()
        .map(|(id, endpoint)| serde_json::json!({"model_id": id, "endpoint": endpoint, "request_style": "synthetic"}))
        .collect();
    let path = dir.join(file);
    fs::write(&path, serde_json::to_string_pretty(&list).unwrap()).unwrap();
    path
}

fn synthetic(gt: &Path, delay_ms: u64) -> String {
    if delay_ms == 0 {
        format!("synthetic://{}", gt.display())
    } else {
        format!("synthetic://{}?delay_ms={delay_ms}", gt.display())
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn profile_run_recovers_theta_and_guards_output() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_theta(dir.path(), "gt", [4, 2, 3, 5, 1, 3, 3, 4, 2, 3, 3, 5, 1, 2, 4, 3], 0.0);
    let cfg = write_config(dir.path(), "models.json", &[("syn", synthetic(&gt, 0))]);
    let out = dir.path().join("run");
    let args = ["profile", "--model-config", p(&cfg), "--out", p(&out)];

    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("163 succeeded, 0 failed, 0 skipped"), "{stdout}");

    let csv = fs::read_to_string(out.join("profile_MPI_NEUTRAL.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("trait,mean,variance,n"));
    assert_eq!(lines.next(), Some("WARMTH,4.00,0.00,10"));
    assert!(csv.contains("INTELLECT,2.00,0.00,13"), "{csv}");
    assert!(csv.contains("GREGARIOUSNESS,1.00,0.00,10"), "{csv}");

    // existing run dir without --resume
    assert_eq!(code(&run(&args)), 2);
    // resuming a finished run does no work
    let mut resumed: Vec<&str> = args.to_vec();
    resumed.push("--resume");
    let o = run(&resumed);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 succeeded, 0 failed, 163 skipped, 0 backend calls"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_theta(dir.path(), "gt", [3; 16], 0.0);
    let cfg = write_config(dir.path(), "two.json", &[("a", synthetic(&gt, 0)), ("b", synthetic(&gt, 0))]);
    let out = dir.path().join("x");

    assert_eq!(code(&run(&["profile", "--out", p(&out)])), 2, "no model config");
    assert_eq!(code(&run(&["profile", "--model-config", p(&cfg), "--out", p(&out)])), 2, "ambiguous model");
    assert_eq!(
        code(&run(&["profile", "--model-config", p(&cfg), "--model", "zzz", "--out", p(&out)])),
        2,
        "unknown model"
    );
    assert_eq!(
        code(&run(&["induce", "sac", "--targets", "CHARISMA", "--model-config", p(&cfg), "--model", "a", "--out", p(&out)])),
        2,
        "unknown trait"
    );
    assert_eq!(
        code(&run(&["induce", "sac", "--levels", "2,7", "--model-config", p(&cfg), "--model", "a", "--out", p(&out)])),
        2,
        "bad level"
    );
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"[{"model_id":"a","endpoint":"synthetic:///x","request_style":"synthetic","colour":1}]"#).unwrap();
    assert_eq!(code(&run(&["profile", "--model-config", p(&bad), "--out", p(&out)])), 2, "unknown config field");
    assert_eq!(code(&run(&["report", "--inputs", p(&dir.path().join("nope.json")), "--out", p(&out)])), 2);
}

#[test]
fn unreachable_backend_leaves_missing_answers_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // bind then drop to get a port with nothing listening
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = dir.path().join("m.json");
    let spec = serde_json::json!([{
        "model_id": "down",
        "endpoint": format!("http://127.0.0.1:{port}/v1/chat/completions"),
        "request_style": "openai-chat",
        "timeout_secs": 2
    }]);
    fs::write(&cfg, spec.to_string()).unwrap();
    let out = dir.path().join("run");
    let o = run(&["induce", "sac", "--targets", "WARMTH", "--levels", "5", "--max-attempts", "1", "--model-config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 240);
    assert!(log.lines().all(|l| l.contains("\"error\":\"REQUEST_FAILED\"")));
}

#[test]
fn plan_command_writes_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["plan", "--kind", "sac", "--targets", "warmth,anxiety", "--levels", "1,5", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(dir.path().join("plan.jsonl")).unwrap().lines().count(), 2 * 2 * 240);
    let o = run(&["plan", "--kind", "mpi-neutral", "--repeats", "3", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(dir.path().join("plan.jsonl")).unwrap().lines().count(), 3 * 163);
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).map(|s| s.lines().count()).unwrap_or(0)
}

fn report_csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn killed_run_resumes_to_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_theta(dir.path(), "gt", [4, 2, 3, 5, 1, 3, 3, 4, 2, 3, 3, 5, 1, 2, 4, 3], 0.3);
    let slow = write_config(dir.path(), "slow.json", &[("syn", synthetic(&gt, 15))]);
    let fast = write_config(dir.path(), "fast.json", &[("syn", synthetic(&gt, 0))]);
    let reference = dir.path().join("reference");
    let victim = dir.path().join("victim");

    let o = run(&["sac-neutral", "--model-config", p(&fast), "--out", p(&reference)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let mut child = bin()
        .args(["sac-neutral", "--concurrency", "2", "--model-config", p(&slow), "--out", p(&victim)])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let records = victim.join("records.jsonl");
    let started = Instant::now();
    while line_count(&records) < 60 {
        assert!(started.elapsed() < Duration::from_secs(30), "run made no progress");
        assert!(child.try_wait().unwrap().is_none(), "run finished before it could be killed");
        sleep(Duration::from_millis(10));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let done = line_count(&records);
    assert!(done < 240, "nothing left to resume ({done})");

    let o = run(&["sac-neutral", "--resume", "--concurrency", "8", "--model-config", p(&slow), "--out", p(&victim)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(line_count(&records), 240);
    assert_eq!(report_csvs(&reference), report_csvs(&victim));
}

#[test]
fn analyze_and_report_over_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_theta(dir.path(), "a", [4, 2, 3, 5, 1, 3, 3, 4, 2, 3, 3, 5, 1, 2, 4, 3], 0.0);
    let b = write_theta(dir.path(), "b", [4, 2, 3, 5, 1, 3, 3, 4, 2, 3, 3, 5, 1, 2, 4, 1], 0.0);
    let cfg = write_config(dir.path(), "m.json", &[("alpha", synthetic(&a, 0)), ("beta", synthetic(&b, 0))]);
    let run_dir = |name: &str| dir.path().join(name);
    for (model, sub) in [("alpha", "alpha_mpi"), ("beta", "beta_mpi")] {
        let o = run(&["profile", "--model-config", p(&cfg), "--model", model, "--out", p(&run_dir(sub))]);
        assert_eq!(code(&o), 0);
    }
    let o = run(&["sac-neutral", "--model-config", p(&cfg), "--model", "alpha", "--out", p(&run_dir("alpha_sac"))]);
    assert_eq!(code(&o), 0);
    let o = run(&[
        "induce", "sac", "--targets", "WARMTH", "--model-config", p(&cfg), "--model", "alpha", "--out",
        p(&run_dir("alpha_ind")),
    ]);
    assert_eq!(code(&o), 0);

    let an = run_dir("analysis");
    let o = run(&[
        "analyze", "distances", "--inputs", p(&run_dir("alpha_mpi")), p(&run_dir("beta_mpi")), "--out", p(&an),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = fs::read_to_string(an.join("distances.csv")).unwrap();
    assert!(d.contains("alpha,0.00,2.00\nbeta,2.00,0.00"), "{d}");

    let rep = run_dir("report");
    let o = run(&[
        "report", "--inputs", p(&run_dir("alpha_mpi")), p(&run_dir("beta_mpi")), p(&run_dir("alpha_sac")),
        p(&run_dir("alpha_ind")), "--out", p(&rep),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["mpi_neutral/distances.csv", "mpi_neutral/trait_sd.csv", "deltas_long.csv", "co_movers.csv", "plot_deltas.json"] {
        assert!(rep.join(f).is_file(), "{f} missing");
    }
    // identity coupling: inducing WARMTH at L5 moves only WARMTH, by +1
    let long = fs::read_to_string(rep.join("deltas_long.csv")).unwrap();
    assert!(long.contains("alpha,SAC_INDUCED,WARMTH,5,WARMTH,1.00\n"), "{long}");
    assert!(long.contains("alpha,SAC_INDUCED,WARMTH,5,ANXIETY,0.00\n"), "{long}");
}
