use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_hefuse");

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    /// Toy-preset workspace with a written config file.
    fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        let out = ws.run(&["init", "--preset", "toy"]);
        assert!(out.status.success(), "{}", stderr(&out));
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn command(&self, args: &[&str]) -> Command {
        let mut cmd = Command::new(BIN);
        cmd.current_dir(self.dir.path());
        if args.first() != Some(&"init") {
            cmd.args(["--config", "hefuse.toml"]);
        }
        cmd.args(args);
        for var in ["HEFUSE_KEYS", "HEFUSE_STORE", "HEFUSE_DATASET", "HEFUSE_SCORES", "HEFUSE_REPORTS"] {
            cmd.env_remove(var);
        }
        cmd
    }

    fn run(&self, args: &[&str]) -> Output {
        self.command(args).output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed: {}", stderr(&out));
        String::from_utf8(out.stdout).unwrap()
    }

    fn edit_config(&self, from: &str, to: &str) {
        let path = self.path("hefuse.toml");
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains(from), "config lacks {from:?}");
        fs::write(&path, text.replace(from, to)).unwrap();
    }

    fn provision(&self) {
        self.ok(&["keygen"]);
        self.ok(&["synth"]);
        self.ok(&["enroll"]);
    }
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn line_with<'a>(text: &'a str, prefix: &str) -> &'a str {
    text.lines()
        .find(|l| l.starts_with(prefix))
        .unwrap_or_else(|| panic!("no line starting with {prefix:?} in:\n{text}"))
}

#[test]
fn mated_and_impostor_verification() {
    let ws = Workspace::new();
    ws.provision();
    let mated = ws.ok(&["verify", "--subject", "subject-0003", "--transcript"]);
    assert!(line_with(&mated, "verdict:").starts_with("verdict: Accept"));
    assert!(mated.contains("-> VERIFY_CLAIM subject=subject-0003"));
    let impostor = ws.ok(&[
        "verify",
        "--subject",
        "subject-0003",
        "--probe-subject",
        "subject-0007",
        "--session",
        "0",
    ]);
    assert_eq!(line_with(&impostor, "verdict:"), "verdict: Reject after 2 stage(s)");
}

#[test]
fn every_error_class_has_its_own_exit_code() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["verify"])), 2, "missing required flag");
    assert_eq!(code(&ws.run(&["init", "--preset", "toy"])), 2, "refuses to overwrite");
    assert_eq!(code(&ws.run(&["bench", "--preset", "PN99"])), 3);
    assert_eq!(code(&ws.run(&["enroll"])), 6, "no dataset yet");
    ws.ok(&["synth"]);
    assert_eq!(code(&ws.run(&["enroll"])), 5, "no keys yet");
    ws.ok(&["keygen"]);
    ws.ok(&["enroll", "--subjects", "2"]);
    assert_eq!(code(&ws.run(&["enroll", "--subjects", "1"])), 7, "duplicate enrollment");
    ws.ok(&["enroll", "--subjects", "1", "--replace"]);
    let unknown = ws.run(&["verify", "--subject", "ghost", "--probe-subject", "subject-0001"]);
    assert_eq!(code(&unknown), 7);
    assert!(line_with(&String::from_utf8(unknown.stdout).unwrap(), "error:").contains("UnknownSubject"));
    assert_eq!(code(&ws.run(&["evaluate", "--fmr", "150"])), 2);

    ws.edit_config("template_len = 4", "template_len = 6");
    assert_eq!(code(&ws.run(&["keygen"])), 3, "layout exceeds toy slots");
    ws.edit_config("template_len = 6", "template_len = 4");
    ws.edit_config("schema_version = 1", "schema_version = 9");
    assert_eq!(code(&ws.run(&["keygen"])), 3);
    ws.edit_config("schema_version = 9", "schema_version = 1\nunexpected = true");
    assert_eq!(code(&ws.run(&["keygen"])), 3);
}

#[test]
fn outputs_are_reproducible() {
    let a = Workspace::new();
    let b = Workspace::new();
    let mut stdout = Vec::new();
    for ws in [&a, &b] {
        ws.ok(&["keygen"]);
        ws.ok(&["synth"]);
        stdout.push(ws.ok(&["evaluate", "--encrypted", "4"]));
    }
    assert_eq!(stdout[0], stdout[1]);
    for file in [
        "keys/secret.key",
        "keys/eval.key",
        "synthetic.afds",
        "synthetic.afds.manifest.json",
        "scores.csv",
        "reports/eer.json",
        "reports/saved_presentations.json",
        "reports/saved_presentations.txt",
    ] {
        assert_eq!(fs::read(a.path(file)).unwrap(), fs::read(b.path(file)).unwrap(), "{file}");
    }
}

#[test]
fn evaluate_reports_monotone_savings() {
    let ws = Workspace::new();
    ws.edit_config("n_subjects = 20", "n_subjects = 60");
    ws.ok(&["synth"]);
    ws.ok(&["evaluate", "--fmr", "0.5,5,20"]);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(ws.path("reports/saved_presentations.json")).unwrap()).unwrap();
    for policy in ["amb-fhe-1", "amb-fhe-2"] {
        let saved: Vec<f64> = report["rows"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|r| r["policy"] == policy)
            .map(|r| r["saved_percent"].as_f64().unwrap())
            .collect();
        assert_eq!(saved.len(), 3);
        assert!(saved.windows(2).all(|w| w[0] <= w[1]), "{policy}: {saved:?}");
    }
    let scores = fs::read_to_string(ws.path("scores.csv")).unwrap();
    assert_eq!(
        scores.lines().next().unwrap(),
        "reference_id,probe_id,mated,stage,plain_score,encrypted_score"
    );
}

#[test]
fn demo_agrees_with_the_plaintext_oracle() {
    let ws = Workspace::new();
    for args in [
        &["demo", "--policy", "amb-fhe-1"][..],
        &["demo", "--policy", "amb-fhe-2", "--subject", "5"],
        &["demo", "--policy", "multi-and", "--impostor"],
        &["demo", "--policy", "amb-fhe-1", "--subject", "2", "--tcp"],
    ] {
        let out = ws.ok(args);
        let oracle = line_with(&out, "plaintext oracle:").trim_start_matches("plaintext oracle: ");
        let verdict = line_with(&out, "verdict:").trim_start_matches("verdict: ");
        assert_eq!(oracle, verdict, "{args:?}");
    }
    let out = ws.ok(&["demo", "--policy", "amb-fhe-1", "--impostor"]);
    assert_eq!(line_with(&out, "transcript"), "transcript (8 messages):");
}

#[test]
fn serve_answers_remote_clients() {
    let ws = Workspace::new();
    ws.provision();
    let mut server = ws
        .command(&["serve", "--listen", "127.0.0.1:0", "--max-connections", "2"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(server.stdout.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("server exited early").unwrap();
        if let Some(a) = line.strip_prefix("listening on ") {
            break a.to_string();
        }
    };
    let out = ws.ok(&["verify", "--subject", "subject-0001", "--connect", &addr]);
    assert!(line_with(&out, "verdict:").starts_with("verdict: Accept"));
    let out = ws.ok(&[
        "verify",
        "--subject",
        "subject-0001",
        "--probe-subject",
        "subject-0009",
        "--session",
        "0",
        "--connect",
        &addr,
    ]);
    assert!(line_with(&out, "verdict:").starts_with("verdict: Reject"));
    assert!(server.wait().unwrap().success());
}

#[test]
fn environment_overrides_paths() {
    let ws = Workspace::new();
    let elsewhere = ws.path("data/other.afds");
    let out = ws.command(&["synth"]).env("HEFUSE_DATASET", &elsewhere).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(elsewhere.exists());
    assert!(!Path::new(&ws.path("synthetic.afds")).exists());
}

#[test]
fn bench_writes_a_normalized_report() {
    let ws = Workspace::new();
    let out = ws.ok(&["bench", "--iterations", "3", "--warmups", "0"]);
    assert!(out.contains("Rot1"));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(ws.path("reports/bench-TOY-INSECURE.json")).unwrap()).unwrap();
    let entries = report["primitives"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 9);
    let add = entries.iter().find(|e| e["op"] == "Add").unwrap();
    assert_eq!(add["normalized"].as_f64().unwrap(), 1.0);
    assert!(entries.iter().all(|e| e["median_ns"].as_f64().unwrap() > 0.0));
    assert!(report["incremental"]["incremental_ops"]["rotate"].as_u64().unwrap() > 0);
}
