//! End-to-end runs of the `bitml` binary: exit codes, report layout and
//! compiled artifacts.
//!
//! Golden reports live in `tests/fixtures/golden/`; set `BLESS=1` to rewrite
//! them after an intentional change.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;

use bitml::txwire::RawTx;
use serde_json::Value;
use sha2::{Digest, Sha256};

const F1: &str = "[](a revealed => <>A has-deposit>= 100000000 satoshi)";
const F2: &str = "[](a revealed => <>(b revealed \\/ A has-deposit>= 200000000 satoshi))";
const REVEAL_A_AFTER_B: &str = r#"(strategy "A" (do-reveal a) (if (revealed b)))"#;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}", self.stdout))
    }
}

fn bitml(args: &[&str]) -> Run {
    bitml_env(args, &[])
}

/// Runs from the workspace root so that report `input` fields are stable.
fn bitml_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bitml"));
    cmd.args(args)
        .current_dir(root())
        .env_remove("BITML_STATE_LIMIT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Run {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn schema() -> jsonschema::Validator {
    let text = std::fs::read_to_string(root().join("docs/report.schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).expect("schema compiles")
}

fn assert_valid(v: &jsonschema::Validator, report: &Value, what: &str) {
    let errors: Vec<String> = v
        .iter_errors(report)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{what}: {errors:#?}");
}

fn strip_wall_time(v: &mut Value) {
    match v {
        Value::Object(m) => {
            if m.contains_key("wall_time") {
                m.insert("wall_time".into(), Value::Null);
            }
            m.values_mut().for_each(strip_wall_time);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_wall_time),
        _ => {}
    }
}

fn benchmarks() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(root().join("benchmarks"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".bitml"))
        .collect();
    names.sort();
    names
}

fn golden(name: &str, mut report: Value) {
    strip_wall_time(&mut report);
    let text = serde_json::to_string_pretty(&report).unwrap() + "\n";
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/golden")
        .join(name);
    if std::env::var_os("BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &text).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(
        text, want,
        "golden {name} differs; rerun with BLESS=1 if intended"
    );
}

fn verdicts(report: &Value) -> Vec<Option<bool>> {
    report["queries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|q| q["verdict"].as_bool())
        .collect()
}

#[test]
fn check_exit_codes() {
    let r = bitml(&["check", "benchmarks/mutual-tc-2.bitml"]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r.stdout.contains("benchmarks/mutual-tc-2.bitml: ok"));

    let r = bitml(&[
        "check",
        "crates/cli/tests/fixtures/duplicate-hash.bitml",
        "--format",
        "json",
    ]);
    assert_eq!(r.code, 2);
    let j = r.json();
    assert_eq!(j["static_errors"][0]["kind"], "duplicate_secret_hash");
    assert_eq!(j["exit_code"], 2);

    let r = bitml(&[
        "check",
        "crates/cli/tests/fixtures/malformed.bitml",
        "--format",
        "json",
    ]);
    assert_eq!(r.code, 1);
    let e = &r.json()["parse_error"];
    assert_eq!(
        (e["line"].as_u64(), e["column"].as_u64()),
        (Some(5), Some(17))
    );
    let r = bitml(&["check", "crates/cli/tests/fixtures/malformed.bitml"]);
    assert!(r.stdout.contains("malformed.bitml:5:17"), "{}", r.stdout);

    assert_eq!(bitml(&["check", "benchmarks/no-such-file.bitml"]).code, 1);
}

#[test]
fn usage_errors() {
    assert_eq!(bitml(&[]).code, 64);
    assert_eq!(bitml(&["frobnicate"]).code, 64);
    assert_eq!(
        bitml(&["verify", "benchmarks/mutual-tc-noafter.bitml"]).code,
        64
    );
    assert_eq!(
        bitml(&["verify", "benchmarks/mutual-tc-2.bitml", "--ltl", "[](("]).code,
        64
    );
    assert_eq!(
        bitml(&["verify", "benchmarks/mutual-tc-2.bitml", "--epsilon", "5"]).code,
        64
    );
    assert_eq!(
        bitml(&["check", "benchmarks/mutual-tc-2.bitml", "--format", "hex"]).code,
        64
    );
    assert_eq!(bitml(&["compile", "benchmarks/mutual-tc-2.bitml"]).code, 64);
    assert_eq!(bitml(&["--help"]).code, 0);
}

#[test]
fn verify_liquidity_examples() {
    let r = bitml(&[
        "verify",
        "--liquidity",
        "benchmarks/mutual-tc-2.bitml",
        "--format",
        "json",
    ]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(verdicts(&r.json()), [Some(true)]);

    let args = [
        "verify",
        "--liquidity",
        "--strategy",
        REVEAL_A_AFTER_B,
        "benchmarks/mutual-tc-noafter.bitml",
    ];
    let r = bitml(&args);
    assert_eq!(r.code, 3, "{}", r.stdout);
    assert!(r.stdout.contains("liquidity (epsilon 0): false"));
    assert!(r.stdout.contains("frozen configuration"), "{}", r.stdout);
    let j = bitml(&[&args[..], &["--format", "json"]].concat()).json();
    assert_eq!(j["queries"][0]["witness"]["kind"], "frozen");

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("a.strategy");
    std::fs::write(&file, REVEAL_A_AFTER_B).unwrap();
    let r = bitml(&[
        "verify",
        "--liquidity",
        "--strategy-file",
        file.to_str().unwrap(),
        "benchmarks/mutual-tc-noafter.bitml",
    ]);
    assert_eq!(r.code, 3);

    let r = bitml(&[
        "verify",
        "--liquidity",
        "--strategy",
        r#"(strategy "Z" (do-reveal a))"#,
        "benchmarks/mutual-tc-2.bitml",
    ]);
    assert_eq!(r.code, 2, "{}", r.stdout);
}

#[test]
fn verify_ltl_example() {
    let r = bitml(&[
        "verify",
        "--ltl",
        F1,
        "benchmarks/mutual-tc-2.bitml",
        "--format",
        "json",
    ]);
    let why = "without a strategy A may reveal after B's deadline has passed";
    assert_eq!(verdicts(&r.json()), [Some(true)], "{why}: {}", r.stdout);
    assert_eq!(r.code, 0);
}

#[test]
fn deadline_formulas_hold_under_urgent_honest_reveal() {
    let args = [
        "verify",
        "--ltl",
        F1,
        "--ltl",
        F2,
        "--urgent",
        "--strategy",
        r#"(strategy "A" (do-reveal a))"#,
        "benchmarks/mutual-tc-2.bitml",
    ];
    let r = bitml(&args);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let r = bitml(
        &args[..args.len() - 3]
            .iter()
            .chain(&["benchmarks/mutual-tc-2.bitml"])
            .copied()
            .collect::<Vec<_>>(),
    );
    assert_eq!(
        r.code, 3,
        "without the strategy A may reveal late: {}",
        r.stdout
    );
    assert!(r.stdout.contains("loop:"), "{}", r.stdout);
}

#[test]
fn cli_queries_replace_file_queries() {
    let r = bitml(&[
        "verify",
        "benchmarks/timed-commitment.bitml",
        "--format",
        "json",
    ]);
    assert_eq!(r.json()["queries"].as_array().unwrap().len(), 2);
    let r = bitml(&[
        "verify",
        "--liquidity",
        "benchmarks/timed-commitment.bitml",
        "--format",
        "json",
    ]);
    let j = r.json();
    assert_eq!(j["queries"].as_array().unwrap().len(), 1);
    assert_eq!(j["queries"][0]["query"], "liquidity");
    assert_eq!(r.code, 0);
}

#[test]
fn state_limit() {
    let args = [
        "verify",
        "--liquidity",
        "benchmarks/mutual-tc-2.bitml",
        "--format",
        "json",
    ];
    let r = bitml(&[&args[..], &["--state-limit", "5"]].concat());
    assert_eq!(r.code, 4);
    let j = r.json();
    assert_eq!(j["queries"][0]["verdict"], Value::Null);
    assert!(j["queries"][0]["error"].is_string());

    assert_eq!(bitml_env(&args, &[("BITML_STATE_LIMIT", "5")]).code, 4);
    assert_eq!(bitml_env(&args, &[("BITML_STATE_LIMIT", "100000")]).code, 0);
    let both = [&args[..], &["--state-limit", "100000"]].concat();
    assert_eq!(bitml_env(&both, &[("BITML_STATE_LIMIT", "5")]).code, 0);
}

#[test]
fn text_and_json_verdicts_agree() {
    let cases: [&[&str]; 4] = [
        &["verify", "benchmarks/timed-commitment.bitml"],
        &["verify", "benchmarks/mutual-tc-3.bitml", "--ltl", F1],
        &[
            "verify",
            "--liquidity",
            "--strategy",
            REVEAL_A_AFTER_B,
            "benchmarks/mutual-tc-noafter.bitml",
        ],
        &[
            "verify",
            "--liquidity",
            "--epsilon",
            "200000000",
            "benchmarks/mutual-tc-noafter.bitml",
        ],
    ];
    for args in cases {
        let text = bitml(args);
        let json = bitml(&[args, &["--format", "json"]].concat());
        assert_eq!(text.code, json.code);
        let from_text: Vec<Option<bool>> = text
            .stdout
            .lines()
            .filter(|l| l.starts_with("liquidity (") || l.starts_with("ltl "))
            .map(
                |l| match l.rsplit_once(": ").unwrap().1.split(' ').next().unwrap() {
                    "true" => Some(true),
                    "false" => Some(false),
                    _ => None,
                },
            )
            .collect();
        assert_eq!(from_text, verdicts(&json.json()), "{args:?}");
    }
}

#[test]
fn reports_validate_against_schema() {
    let v = schema();
    let dir = tempfile::tempdir().unwrap();
    for name in benchmarks() {
        let path = format!("benchmarks/{name}");
        let r = bitml(&["check", &path, "--format", "json"]);
        assert_valid(&v, &r.json(), &format!("check {name}"));

        let r = bitml(&[
            "verify",
            "--liquidity",
            "--ltl",
            F1,
            "--state-limit",
            "2000",
            &path,
            "--format",
            "json",
        ]);
        assert!([0, 3, 4].contains(&r.code), "{name}: {}", r.stderr);
        assert_valid(&v, &r.json(), &format!("verify {name}"));

        let out = dir.path().join(&name);
        let r = bitml(&[
            "compile",
            &path,
            "-o",
            out.to_str().unwrap(),
            "--format",
            "json",
        ]);
        let printed = r.json();
        assert_valid(&v, &printed, &format!("compile {name}"));
        let written: Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap())
                .unwrap();
        assert_eq!(written, printed, "{name}");
    }
    for fixture in ["duplicate-hash", "malformed"] {
        let r = bitml(&[
            "check",
            &format!("crates/cli/tests/fixtures/{fixture}.bitml"),
            "--format",
            "json",
        ]);
        assert_valid(&v, &r.json(), fixture);
    }
}

#[test]
fn golden_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cases: Vec<(&str, Vec<&str>)> = vec![
        (
            "check-mutual-tc-2.json",
            vec!["check", "benchmarks/mutual-tc-2.bitml"],
        ),
        (
            "check-duplicate-hash.json",
            vec!["check", "crates/cli/tests/fixtures/duplicate-hash.bitml"],
        ),
        (
            "check-malformed.json",
            vec!["check", "crates/cli/tests/fixtures/malformed.bitml"],
        ),
        (
            "verify-timed-commitment.json",
            vec!["verify", "benchmarks/timed-commitment.bitml"],
        ),
        (
            "verify-mutual-tc-noafter.json",
            vec![
                "verify",
                "--liquidity",
                "--strategy",
                REVEAL_A_AFTER_B,
                "benchmarks/mutual-tc-noafter.bitml",
            ],
        ),
        (
            "compile-mutual-tc-2.json",
            vec!["compile", "benchmarks/mutual-tc-2.bitml", "-o", out],
        ),
        (
            "compile-lottery-4-nonstandard.json",
            vec![
                "compile",
                "benchmarks/lottery-4-nonstandard.bitml",
                "-o",
                out,
            ],
        ),
    ];
    for (name, args) in cases {
        let r = bitml(&[&args[..], &["--format", "json"]].concat());
        golden(name, r.json());
    }
}

#[test]
fn runs_are_deterministic() {
    let runs: [&[&str]; 2] = [
        &[
            "verify",
            "benchmarks/lottery-2.bitml",
            "--ltl",
            F1,
            "--format",
            "json",
        ],
        &[
            "verify",
            "--liquidity",
            "--strategy",
            REVEAL_A_AFTER_B,
            "benchmarks/mutual-tc-noafter.bitml",
            "--format",
            "json",
        ],
    ];
    for args in runs {
        let a = bitml(args);
        let b = bitml(args);
        assert_eq!(a.code, b.code);
        let (mut ja, mut jb) = (a.json(), b.json());
        strip_wall_time(&mut ja);
        strip_wall_time(&mut jb);
        assert_eq!(ja, jb, "{args:?}");
    }
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&d1, &d2] {
        let r = bitml(&[
            "compile",
            "benchmarks/mutual-tc-3.bitml",
            "-o",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(r.code, 0);
    }
    for f in ["dag.json", "txs.hex", "report.json"] {
        let a = std::fs::read(d1.path().join(f)).unwrap();
        let b = std::fs::read(d2.path().join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}

fn sha256d(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(Sha256::digest(bytes)).into()
}

/// External outpoints of a compiled DAG as (txid in display order, vout).
fn external_outpoints(dag: &Value) -> BTreeSet<(String, u32)> {
    let mut out = BTreeSet::new();
    for t in dag["templates"].as_array().unwrap() {
        for i in t["inputs"].as_array().unwrap() {
            if i["source"]["kind"] == "external" {
                let (txid, vout) = i["source"]["outpoint"]
                    .as_str()
                    .unwrap()
                    .split_once(':')
                    .unwrap();
                out.insert((txid.to_string(), vout.parse().unwrap()));
            }
        }
    }
    out
}

/// Outputs paying a participant rather than a contract script.
fn leaves(dag: &Value) -> usize {
    let templates = dag["templates"].as_array().unwrap();
    templates
        .iter()
        .flat_map(|t| t["outputs"].as_array().unwrap())
        .filter(|o| o["kind"] != "p2sh")
        .count()
}

#[test]
fn compiled_transactions_reference_each_other_by_txid() {
    for name in [
        "mutual-tc-2",
        "mutual-tc-3",
        "timed-commitment",
        "escrow",
        "lottery-2",
    ] {
        let dir = tempfile::tempdir().unwrap();
        let r = bitml(&[
            "compile",
            &format!("benchmarks/{name}.bitml"),
            "-o",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(r.code, 0, "{name}: {}", r.stdout);
        let dag: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("dag.json")).unwrap())
                .unwrap();
        let externals = external_outpoints(&dag);
        let lines = std::fs::read_to_string(dir.path().join("txs.hex")).unwrap();
        assert_eq!(
            lines.lines().count(),
            dag["templates"].as_array().unwrap().len(),
            "{name}"
        );

        // txid -> number of outputs, for transactions already seen
        let mut earlier: BTreeMap<[u8; 32], usize> = BTreeMap::new();
        let mut spent = BTreeSet::new();
        let mut used_externals = BTreeSet::new();
        for line in lines.lines() {
            let bytes = hex::decode(line).unwrap();
            let tx = RawTx::deserialize(&bytes).unwrap();
            assert_eq!(tx.serialize(), bytes);
            for i in &tx.inputs {
                if let Some(&n) = earlier.get(&i.prev_txid) {
                    assert!(
                        (i.prev_vout as usize) < n,
                        "{name}: spends a missing output"
                    );
                    spent.insert((i.prev_txid, i.prev_vout));
                } else {
                    let mut display = i.prev_txid;
                    display.reverse();
                    let op = (hex::encode(display), i.prev_vout);
                    assert!(
                        externals.contains(&op),
                        "{name}: input {op:?} is neither earlier nor external"
                    );
                    used_externals.insert(op);
                }
            }
            assert_eq!(tx.txid().to_string(), {
                let mut d = sha256d(&bytes);
                d.reverse();
                hex::encode(d)
            });
            earlier.insert(sha256d(&bytes), tx.outputs.len());
        }
        assert_eq!(used_externals, externals, "{name}");
        // alternative branches spend the same output, but every internal
        // output is spent by some later transaction
        let outputs: usize = earlier.values().sum();
        let internal: BTreeSet<_> = spent.iter().collect();
        assert_eq!(internal.len(), outputs - leaves(&dag), "{name}");
    }
}

#[test]
fn hex_format_prints_the_transactions() {
    let dir = tempfile::tempdir().unwrap();
    let r = bitml(&[
        "compile",
        "benchmarks/mutual-tc-2.bitml",
        "-o",
        dir.path().to_str().unwrap(),
        "--format",
        "hex",
    ]);
    assert_eq!(r.code, 0);
    assert_eq!(
        r.stdout,
        std::fs::read_to_string(dir.path().join("txs.hex")).unwrap()
    );
    assert!(r.stderr.contains("exit code 0"));
}

#[test]
fn compile_standardness_and_fees() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("strict");
    let r = bitml(&[
        "compile",
        "benchmarks/lottery-4-nonstandard.bitml",
        "-o",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(r.code, 6);
    let j = r.json();
    assert_eq!(
        j["compile"]["standardness"][0]["error"]["error"],
        "script_too_large"
    );
    assert!(!j["compile"]["hints"].as_array().unwrap().is_empty());
    assert!(!out.join("txs.hex").exists());
    assert!(out.join("dag.json").exists());

    let out = dir.path().join("lenient");
    let r = bitml(&[
        "compile",
        "benchmarks/lottery-4-nonstandard.bitml",
        "-o",
        out.to_str().unwrap(),
        "--allow-nonstandard",
    ]);
    assert_eq!(r.code, 0);
    assert!(
        r.stdout.contains("nonstandard:") && r.stdout.contains("hint:"),
        "{}",
        r.stdout
    );
    assert!(!out.join("txs.hex").exists());

    let out = dir.path().join("flat");
    let r = bitml(&[
        "compile",
        "benchmarks/lottery-4-standard.bitml",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(out.join("txs.hex").exists());

    let out = dir.path().join("fees");
    let r = bitml(&[
        "compile",
        "benchmarks/mutual-tc-2.bitml",
        "-o",
        out.to_str().unwrap(),
        "--fee-per-tx",
        "100000",
        "--format",
        "json",
    ]);
    assert_eq!(r.code, 5);
    assert!(r.json()["error"].as_str().unwrap().contains("fee"));
}

#[test]
fn secrets_fill_the_preimage_placeholders() {
    let pre = |name: &str, n: usize| -> String {
        hex::encode(name.bytes().cycle().take(16 + n).collect::<Vec<u8>>())
    };
    let find = |name: &str, hash: &str| {
        (0..64)
            .map(|n| pre(name, n))
            .find(|p| hex::encode(Sha256::digest(hex::decode(p).unwrap())) == hash)
            .unwrap()
    };
    let text = std::fs::read_to_string(root().join("benchmarks/mutual-tc-2.bitml")).unwrap();
    let hash_of = |s: &str| {
        let at = text
            .find(&format!("(secret \"{}\" {} ", s.to_uppercase(), s))
            .unwrap();
        text[at..]
            .split_whitespace()
            .nth(3)
            .unwrap()
            .trim_end_matches(')')
            .to_string()
    };
    let a = format!("a={}", find("a", &hash_of("a")));
    let b = format!("b={}", find("b", &hash_of("b")));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let r = bitml(&[
        "compile",
        "benchmarks/mutual-tc-2.bitml",
        "-o",
        out,
        "--secret",
        &a,
        "--secret",
        &b,
        "--format",
        "json",
    ]);
    assert_eq!(r.code, 0);
    assert_eq!(
        r.json()["compile"]["missing_preimages"],
        Value::Array(vec![])
    );
    let r = bitml(&[
        "compile",
        "benchmarks/mutual-tc-2.bitml",
        "-o",
        out,
        "--secret",
        &a,
        "--format",
        "json",
    ]);
    assert_eq!(
        r.json()["compile"]["missing_preimages"],
        serde_json::json!(["b"])
    );
}
