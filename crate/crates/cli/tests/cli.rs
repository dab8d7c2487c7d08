use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn tiva(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiva")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

fn chain_lines(p: &Path) -> Vec<Value> {
    fs::read(p)
        .unwrap()
        .split(|b| *b == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_slice(l).unwrap())
        .collect()
}

fn run_bundled(name: &str, dir: &Path, zk: bool) -> (Output, PathBuf) {
    let out = dir.join(name);
    let scenario = format!("bundled:{name}");
    let mut args = vec!["run", "--scenario", &scenario, "--out", path(&out)];
    if zk {
        args.push("--zk");
    }
    (tiva(&args), out)
}

#[test]
fn run_writes_a_verifiable_chain() {
    let dir = tempfile::tempdir().unwrap();
    for zk in [false, true] {
        let (out, run_dir) = run_bundled("happy_mandate", dir.path(), zk);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        for f in ["chain.log", "report.canon", "audit.txt", "audit.canon"] {
            assert!(run_dir.join(f).exists(), "{f} missing");
        }
        let chain = run_dir.join("chain.log");
        let v = tiva(&["verify-chain", path(&chain)]);
        assert_eq!(v.status.code(), Some(0));
        let events = chain_lines(&chain).len();
        assert_eq!(String::from_utf8_lossy(&v.stdout).trim(), format!("ok: {events} events"));
    }
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (_, a) = run_bundled("ten_usdc_policy", &dir.path().join("a"), false);
    let (_, b) = run_bundled("ten_usdc_policy", &dir.path().join("b"), false);
    for f in ["chain.log", "report.canon", "audit.canon"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn verify_chain_names_the_tampered_height() {
    let dir = tempfile::tempdir().unwrap();
    let (_, run_dir) = run_bundled("five_eth_daily", dir.path(), false);
    let chain = fs::read(run_dir.join("chain.log")).unwrap();
    let starts: Vec<usize> = std::iter::once(0)
        .chain(chain.iter().enumerate().filter(|(_, b)| **b == b'\n').map(|(i, _)| i + 1))
        .collect();
    let height = starts.len() / 2;
    let mut tampered = chain.clone();
    // A digit inside the event's payload digest.
    let line = &chain[starts[height]..];
    let at = starts[height] + line.windows(18).position(|w| w == b"\"payload_digest\":\"").unwrap() + 18;
    tampered[at] = if tampered[at] == b'0' { b'1' } else { b'0' };
    let bad = dir.path().join("tampered.log");
    fs::write(&bad, &tampered).unwrap();

    let v = tiva(&["verify-chain", path(&bad)]);
    assert_eq!(v.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&v.stderr);
    assert!(stderr.contains(&format!("at height {height}:")), "{stderr}");
}

#[test]
fn audit_has_one_row_per_payment_event() {
    let dir = tempfile::tempdir().unwrap();
    let (_, run_dir) = run_bundled("ten_usdc_policy", dir.path(), false);
    let chain = run_dir.join("chain.log");
    let events = chain_lines(&chain);
    let wallet = events
        .iter()
        .find(|e| e["kind"] == "WalletCreated")
        .and_then(|e| e["payload"]["wallet_id"].as_str())
        .unwrap()
        .to_string();
    let payments = events
        .iter()
        .filter(|e| e["kind"] == "PaymentAccepted" || e["kind"] == "PaymentRejected")
        .count();
    let canon = dir.path().join("audit.canon");
    let out = tiva(&["audit", "--chain", path(&chain), "--wallet", &wallet, "--canon-out", path(&canon)]);
    assert_eq!(out.status.code(), Some(0));
    let rows = json(&canon);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), payments);
    assert!(rows
        .iter()
        .filter(|r| r["verdict"] == "accepted")
        .all(|r| r["intent_proof_digest"].is_string()));

    let unknown = "00".repeat(32);
    assert_eq!(tiva(&["audit", "--chain", path(&chain), "--wallet", &unknown]).status.code(), Some(1));
}

#[test]
fn usage_and_parse_errors_exit_2() {
    assert_eq!(tiva(&["run"]).status.code(), Some(2));
    assert_eq!(tiva(&["no-such-command"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"version": 7, "actors": {}, "steps": []}"#).unwrap();
    let out = dir.path().join("out");
    assert_eq!(tiva(&["run", "--scenario", path(&bad), "--out", path(&out)]).status.code(), Some(2));
}

#[test]
fn key_did_credential_mandate_and_payment_tools_chain_together() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let ok = |args: &[&str]| {
        let out = tiva(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };

    ok(&["keygen", "--label", "alice", "--out", path(&p("alice.key"))]);
    ok(&["keygen", "--seed", &"07".repeat(32), "--out", path(&p("bot.key"))]);
    ok(&["did", "--key", path(&p("alice.key")), "--out", path(&p("alice.did"))]);
    let alice = json(&p("alice.did"))["did"].as_str().unwrap().to_string();
    ok(&["did", "--key", path(&p("bot.key")), "--controller", &alice, "--out", path(&p("bot.did"))]);
    let bot = json(&p("bot.did"))["did"].as_str().unwrap().to_string();

    ok(&[
        "issue-vc", "--key", path(&p("alice.key")), "--subject-doc", path(&p("bot.did")),
        "--limit", "5000", "--period", "86400", "--currency", "USD", "--payee", "vendor-Y",
        "--expires-at", "100000", "--out", path(&p("cred.json")),
    ]);
    let cred = json(&p("cred.json"));
    assert_eq!(cred["issuer"], alice);
    assert_eq!(cred["subject"], bot);

    ok(&["revoke", "--key", path(&p("alice.key")), "--credential", path(&p("cred.json")), "--out", path(&p("rev.json"))]);
    assert_eq!(json(&p("rev.json"))["credential_id"], cred["credential_id"]);
    // Only the issuer can revoke.
    assert_eq!(
        tiva(&["revoke", "--key", path(&p("bot.key")), "--credential", path(&p("cred.json"))]).status.code(),
        Some(1)
    );

    ok(&[
        "sign-mandate", "--key", path(&p("alice.key")), "--agent-doc", path(&p("bot.did")), "--item", "Z",
        "--max-unit-price", "10000", "--max-quantity", "3", "--vendor", "vendor-Y", "--currency", "USD",
        "--expires-at", "100000", "--zk", "--opening-out", path(&p("opening.json")), "--out", path(&p("mandate.json")),
    ]);
    let wallet = "ab".repeat(32);
    ok(&[
        "pay", "--key", path(&p("bot.key")), "--wallet", &wallet, "--payee", "vendor-Y", "--item", "Z",
        "--price", "9900", "--currency", "USD", "--nonce", "n-1", "--mandate", path(&p("mandate.json")),
        "--opening", path(&p("opening.json")), "--out", path(&p("pay.json")),
    ]);
    let pay = json(&p("pay.json"));
    assert_eq!(pay["agent"], bot);
    assert!(pay["intent_proof"].to_string().contains("range_proof"));
}
