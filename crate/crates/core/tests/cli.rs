//! End-to-end exercises of the installed binary: setup, add, search with
//! verification, deletion semantics per scheme, transcript audit, and the
//! seeded verify subcommand.

use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rdsse")
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

struct Daemon {
    child: Child,
    addr: String,
}

fn start_daemon(store: &Path, scheme: &str) -> Daemon {
    let port = free_port();
    let addr = format!("127.0.0.1:{port}");
    let child = Command::new(bin())
        .args(["serve", "--scheme", scheme, "--listen", &addr, "--store"])
        .arg(store)
        .spawn()
        .unwrap();
    let mut daemon = Daemon { child, addr };
    // Wait for the listener; Daemon's Drop reaps the child on panic.
    for _ in 0..100 {
        if std::net::TcpStream::connect(&daemon.addr).is_ok() {
            return daemon;
        }
        if let Ok(Some(status)) = daemon.child.try_wait() {
            panic!("daemon exited early: {status}");
        }
        std::thread::sleep(std::time::Duration::from_millis(30));
    }
    panic!("daemon did not come up");
}

impl Drop for Daemon {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn run_ok(args: &[&str]) -> Output {
    let out = Command::new(bin()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_lines(out: &Output) -> Vec<String> {
    String::from_utf8_lossy(&out.stdout).lines().map(|s| s.to_string()).collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn scheme_b_full_cli_session() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("b.rdsse");
    let keys = dir.path().join("b.keys");
    let transcript = dir.path().join("b.transcript");
    let daemon = start_daemon(&store, "b");

    run_ok(&[
        "setup", "--scheme", "b", "--keystore", path_str(&keys),
        "--server", &daemon.addr, "--bits", "256", "--mask-width", "64",
    ]);

    let conn: Vec<String> = vec![
        "--keystore".into(), path_str(&keys).into(),
        "--server".into(), daemon.addr.clone(),
        "--transcript".into(), transcript.to_str().unwrap().into(),
    ];
    let conn_refs = |extra: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
        v.extend(conn.iter().cloned());
        v
    };

    // Temperature readings: city documents on one-degree values.
    for (city, value) in [("wollongong", "0"), ("adelaide", "2"), ("sydney", "3"), ("melbourne", "3")] {
        let mut args = conn_refs(&["add"]);
        args.push(value.into());
        args.push(city.into());
        run_ok(&args.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    }

    // Range 2..=3 finds the three warm cities.
    let mut args = conn_refs(&["search", "--verify"]);
    args.extend(["2".to_string(), "3".to_string()]);
    let out = run_ok(&args.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    let mut lines = stdout_lines(&out);
    lines.sort();
    assert_eq!(lines, vec!["adelaide", "melbourne", "sydney"]);

    // Delete one and search again.
    let mut args = conn_refs(&["del"]);
    args.extend(["3".to_string(), "sydney".to_string()]);
    run_ok(&args.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    let mut args = conn_refs(&["search", "--verify"]);
    args.extend(["2".to_string(), "3".to_string()]);
    let out = run_ok(&args.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    let mut lines = stdout_lines(&out);
    lines.sort();
    assert_eq!(lines, vec!["adelaide", "melbourne"]);

    // Stats sees one accumulator per touched node.
    let out = run_ok(&["stats", "--server", &daemon.addr]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("scheme:  b"));

    // The recorded transcript passes the backward-privacy audit.
    let out = run_ok(&[
        "audit", "--transcript", transcript.to_str().unwrap(),
        "--keystore", path_str(&keys),
    ]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("audit[scheme b]: PASS"), "{text}");
}

#[test]
fn scheme_a_session_and_del_refusal() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("a.rdsse");
    let keys = dir.path().join("a.keys");
    let daemon = start_daemon(&store, "a");

    run_ok(&[
        "setup", "--scheme", "a", "--keystore", path_str(&keys),
        "--server", &daemon.addr, "--bits", "256",
    ]);
    for (value, id) in [("0", "f0"), ("0", "f1"), ("1", "f2"), ("1", "f3")] {
        run_ok(&[
            "add", "--keystore", path_str(&keys), "--server", &daemon.addr, value, id,
        ]);
    }
    let out = run_ok(&[
        "search", "--verify", "--keystore", path_str(&keys),
        "--server", &daemon.addr, "0", "3",
    ]);
    let mut lines = stdout_lines(&out);
    lines.sort();
    assert_eq!(lines, vec!["f0", "f1", "f2", "f3"]);

    // Deletion is a typed refusal under scheme A.
    let out = Command::new(bin())
        .args(["del", "--keystore", path_str(&keys), "--server", &daemon.addr, "0", "f0"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("unsupported by construction A"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn verify_subcommand_reports_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    let out = run_ok(&[
        "verify", "--scheme", "b", "--seed", "5", "--values", "16", "--ops", "25",
        "--queries", "10", "--bits", "256", "--mask-width", "64",
        "--json-out", json.to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("verdict: PASS"), "{text}");
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(parsed["mismatches"], 0);
    assert_eq!(parsed["passed"], true);
}

#[test]
fn bench_subcommand_prints_timing() {
    let out = run_ok(&[
        "bench", "--scheme", "a", "--seed", "6", "--values", "16", "--ops", "30",
        "--queries", "10", "--bits", "256", "--no-audit",
    ]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("per-update:"), "{text}");
    assert!(text.contains("per-query:"), "{text}");
}
