use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use semgate_core::session::SessionQuadruple;
use semgate_core::store::SessionStore;
use serde_json::Value;

const MOCK_CONFIG: &str = r#"
[endpoints.cloud]
base_url = "mock:arith_solver"

[endpoints.encoder]
base_url = "mock:context_swap"

[endpoints.decoder]
base_url = "mock:context_unswap"

[endpoints.transform]
base_url = "mock:context_swap"

[endpoints.restore]
base_url = "mock:context_unswap"

[endpoints.generate]
base_url = "mock:echo"

[endpoints.judge]
base_url = "mock:echo"

[store]
path = "sessions.jsonl"

[distill]
label_field = "answer"
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semgate"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("semgate.toml");
    std::fs::write(&cfg, MOCK_CONFIG).unwrap();
    (dir, cfg)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn corpus_distill_run_report() {
    let (dir, _) = setup();
    let d = dir.path();
    ok(d, &["corpus", "--count", "30", "--seed", "4", "--out", "corpus.jsonl"]);

    let summary: Value = serde_json::from_str(&ok(
        d,
        &["distill", "--source", "dataset", "--dataset", "corpus.jsonl", "--out", "train", "--config", "semgate.toml"],
    ))
    .unwrap();
    assert_eq!(summary["ok"], 30);
    assert_eq!(std::fs::read_to_string(d.join("train/encoder.jsonl")).unwrap().lines().count(), 30);

    ok(d, &["run", "--config", "semgate.toml", "--dataset", "corpus.jsonl", "--mode", "utility", "--out", "utility.json"]);
    let r = read_json(&d.join("utility.json"));
    assert_eq!(r["schema"], "semgate.report/v1");
    assert_eq!(r["accuracy"]["accuracy"], 1.0);
    assert!(d.join("utility.txt").exists());

    ok(d, &["run", "--config", "semgate.toml", "--dataset", "corpus.jsonl", "--mode", "privacy", "--out", "privacy.json"]);
    let p = read_json(&d.join("privacy.json"));
    assert_eq!(p["numerals"]["matched"], 30);
    assert!(p["similarity"]["aggregate"]["rouge_1"].as_f64().unwrap() < 0.6);

    let table = ok(d, &["report", "--inputs", "utility.json", "privacy.json", "--out", "summary.txt"]);
    assert!(table.contains("utility") && table.contains("privacy"));
    assert_eq!(std::fs::read_to_string(d.join("summary.txt")).unwrap(), table);
}

#[test]
fn distill_limit_exits_partial_then_completes() {
    let (dir, _) = setup();
    let d = dir.path();
    let args = ["distill", "--source", "synthetic", "--count", "12", "--out", "syn", "--config", "semgate.toml"];
    let mut limited: Vec<&str> = args.to_vec();
    limited.extend(["--limit", "5"]);
    let out = run(d, &limited);
    assert_eq!(out.status.code(), Some(3));
    let s: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((s["processed_this_run"].as_u64(), s["pending"].as_u64()), (Some(5), Some(7)));
    let s: Value = serde_json::from_str(&ok(d, &args)).unwrap();
    assert_eq!((s["resumed_from_journal"].as_u64(), s["ok"].as_u64()), (Some(5), Some(12)));
}

#[test]
fn listgen_is_reproducible_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = ok(d, &["listgen", "--count", "50", "--seed", "9", "--n-min", "2", "--n-max", "8"]);
    let b = ok(d, &["listgen", "--count", "50", "--seed", "9", "--n-min", "2", "--n-max", "8"]);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 50);
    let first: Value = serde_json::from_str(a.lines().next().unwrap()).unwrap();
    assert_eq!(first["id"], "list-000000");

    let out = run(d, &["listgen", "--n-min", "9", "--n-max", "3"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_min"));
}

#[test]
fn eval_scores_a_pair_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("pairs.jsonl"),
        "{\"id\":\"a\",\"candidate\":\"#### 12\",\"reference\":\"#### 12\"}\n{\"id\":\"b\",\"candidate\":\"#### 3\",\"reference\":\"#### 12\"}\n",
    )
    .unwrap();
    let table = ok(d, &["eval", "--pairs", "pairs.jsonl", "--mode", "utility", "--out", "sim.json"]);
    let r = read_json(&d.join("sim.json"));
    assert_eq!(r["kind"], "similarity");
    assert_eq!(r["similarity"]["n_pairs"], 2);
    assert_eq!(r["accuracy"]["accuracy"], 0.5);
    assert!(table.contains("pairs"));
}

#[test]
fn secrecy_reports_exact_and_empirical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sys = serde_json::json!({
        "messages": ["m0", "m1", "m2"],
        "prior": [0.5, 0.3, 0.2],
        "keys": ["k0", "k1", "k2"],
        "key_prior": [1.0/3.0, 1.0/3.0, 1.0/3.0],
        "ciphertexts": ["c0", "c1", "c2"],
        "mapping": [[0, 1, 2], [1, 2, 0], [2, 0, 1]]
    });
    std::fs::write(d.join("sys.json"), sys.to_string()).unwrap();
    let v: Value = serde_json::from_str(&ok(d, &["secrecy", "--system", "sys.json", "--exact", "--trials", "20000", "--seed", "3"])).unwrap();
    assert_eq!(v["exact"]["perfect_secrecy"], true);
    assert!(v["empirical"]["mi_bits"].as_f64().unwrap() < 1e-3);

    std::fs::write(d.join("bad.json"), sys.to_string().replace("[2,0,1]", "[2,2,1]")).unwrap();
    let out = run(d, &["secrecy", "--system", "bad.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("injective"));
}

#[test]
fn purge_removes_sessions() {
    let (dir, _) = setup();
    let d = dir.path();
    {
        let store = SessionStore::open(d.join("sessions.jsonl")).unwrap();
        for i in 0..5 {
            store.put(SessionQuadruple::new(format!("s{i}"), "text")).unwrap();
        }
    }
    let v: Value = serde_json::from_str(&ok(d, &["purge", "--config", "semgate.toml", "--older-than", "1d"])).unwrap();
    assert_eq!((v["removed"].as_u64(), v["remaining"].as_u64()), (Some(0), Some(5)));
    let v: Value = serde_json::from_str(&ok(d, &["purge", "--config", "semgate.toml", "--all"])).unwrap();
    assert_eq!((v["removed"].as_u64(), v["remaining"].as_u64()), (Some(5), Some(0)));
    assert!(SessionStore::open(d.join("sessions.jsonl")).unwrap().is_empty());

    let out = run(d, &["purge", "--config", "semgate.toml"]);
    assert!(!out.status.success());
}

#[test]
fn judge_with_unreachable_backend_exits_partial() {
    let (dir, cfg) = setup();
    let d = dir.path();
    std::fs::write(d.join("pairs.jsonl"), "{\"id\":\"p\",\"t_o\":\"clinic 3\",\"t_hat_o\":\"depot 3\"}\n").unwrap();
    ok(d, &["judge", "--config", "semgate.toml", "--pairs", "pairs.jsonl", "--out", "judge.json"]);
    let r = read_json(&d.join("judge.json"));
    assert_eq!((r["n_pairs"].as_u64(), r["unscored"].as_u64()), (Some(1), Some(1)));

    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("[endpoints.judge]\nbase_url = \"mock:echo\"", "[endpoints.judge]\nbase_url = \"http://127.0.0.1:1/v1\"\nmodel_name = \"j\"\nmax_retries = 0");
    std::fs::write(&cfg, text).unwrap();
    let out = run(d, &["judge", "--config", "semgate.toml", "--pairs", "pairs.jsonl", "--out", "judge2.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(read_json(&d.join("judge2.json"))["aborted"], true);
}

#[test]
fn literal_keys_in_config_are_rejected() {
    let (dir, cfg) = setup();
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("[endpoints.cloud]\nbase_url = \"mock:arith_solver\"", "[endpoints.cloud]\nbase_url = \"https://api.example.com/v1\"\nmodel_name = \"m\"\napi_key_env = \"sk-live-abc123\"");
    std::fs::write(&cfg, text).unwrap();
    let out = run(dir.path(), &["run", "--config", "semgate.toml", "--dataset", "x.jsonl", "--mode", "privacy", "--out", "r.json"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("api_key_env"), "{err}");
    assert!(!err.contains("sk-live-abc123"), "{err}");
}

fn http(addr: &str, request: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    s.write_all(request.as_bytes()).unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

struct Killed(std::process::Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_answers_over_http() {
    let (dir, _) = setup();
    let mut child = bin()
        .current_dir(dir.path())
        .args(["serve", "--config", "semgate.toml", "--listen", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let stderr = child.stderr.take().unwrap();
    let _guard = Killed(child);
    let mut addr = None;
    for line in BufReader::new(stderr).lines() {
        let line = line.unwrap();
        if let Some(a) = line.strip_prefix("semgate listening on http://") {
            addr = Some(a.trim().to_string());
            break;
        }
    }
    let addr = addr.expect("server announced its address");

    let health = http(&addr, "GET /healthz HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    assert!(health.contains("\"status\":\"ok\""));

    let body = r#"{"text":"A clinic has 3 wards with 4 beds each. How many beds?","session_id":"cli-1"}"#;
    let resp = http(
        &addr,
        &format!(
            "POST /se/query HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        ),
    );
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("#### 12"));
    assert!(resp.to_lowercase().contains("x-semgate-session: cli-1"));

    let session = http(&addr, "GET /se/sessions/cli-1 HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
    assert!(session.starts_with("HTTP/1.1 200"), "{session}");
    assert!(session.contains("\"status\":\"complete\""));
    let stored = std::fs::read_to_string(dir.path().join("sessions.jsonl")).unwrap();
    assert!(stored.contains("cli-1"));
}
