use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::io::Write;

use serde_json::Value;
use tempfile::TempDir;

const SCRIPT: &str = "6:4:0.999,0:1:0.9,6:3:0.999,1:1:0.5:3:0.4,2:1:0.5:4:0.4,6:3:0.999,5:1:0.9,6:4:0.999";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctcws"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn records(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn of_type<'a>(recs: &'a [Value], ty: &str) -> Vec<&'a Value> {
    recs.iter().filter(|r| r["type"] == ty).collect()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        std::fs::write(dir.path().join("vocab.txt"), "\u{2581}the\n\u{2581}hel\nlo\n\u{2581}hal\nsey\n\u{2581}world\n<b>\n").unwrap();
        std::fs::write(dir.path().join("bias.tsv"), "halsey\t3,4\n").unwrap();
        std::fs::write(dir.path().join("empty.tsv"), "").unwrap();
        let out = run(
            &[
                "synth", "--script", SCRIPT, "--vocab-size", "7", "--temperature", "0.5", "--vocab", "vocab.txt",
                "-o", "a.ctcl", "--ref-out", "ref.txt", "--envelope-out", "env.jsonl", "--chunk-ms", "160",
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        Self { dir }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn synth_is_deterministic() {
    let f = Fixture::new();
    let again = run(&["synth", "--script", SCRIPT, "--vocab-size", "7", "--temperature", "0.5", "-o", "b.ctcl"], f.path());
    assert!(again.status.success());
    assert_eq!(std::fs::read(f.file("a.ctcl")).unwrap(), std::fs::read(f.file("b.ctcl")).unwrap());
    assert_eq!(std::fs::read_to_string(f.file("ref.txt")).unwrap().trim(), "the hello world");
    let other = run(&["synth", "--script", SCRIPT, "--vocab-size", "7", "--seed", "9", "-o", "c.ctcl"], f.path());
    assert!(other.status.success());
    assert_ne!(std::fs::read(f.file("a.ctcl")).unwrap(), std::fs::read(f.file("c.ctcl")).unwrap());
}

#[test]
fn synth_rejects_bad_script() {
    let f = Fixture::new();
    for script in ["9:4:0.9", "0:4:1.5", "0:x:0.5", ""] {
        let out = run(&["synth", "--script", script, "--vocab-size", "7", "-o", "bad.ctcl"], f.path());
        assert_eq!(out.status.code(), Some(1), "script {script:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn spot_replaces_planted_keyword() {
    let f = Fixture::new();
    let out = run(&["spot", "a.ctcl", "-b", "bias.tsv", "--vocab", "vocab.txt"], f.path());
    assert!(out.status.success());
    let recs = records(&out);
    assert_eq!(recs[0]["type"], "manifest");
    let t = of_type(&recs, "transcript");
    assert_eq!(t.len(), 1);
    assert_eq!(t[0]["text"], "the halsey world");
    assert!(of_type(&recs, "candidate").iter().any(|c| c["surface"] == "halsey"));
}

#[test]
fn spot_without_bias_is_greedy() {
    let f = Fixture::new();
    let out = run(&["spot", "a.ctcl", "-b", "empty.tsv", "--vocab", "vocab.txt"], f.path());
    assert!(out.status.success());
    let recs = records(&out);
    assert!(of_type(&recs, "candidate").is_empty());
    let t = of_type(&recs, "transcript")[0];
    assert_eq!(t["text"], "the hello world");
    assert_eq!(t["candidates"], 0);
}

#[test]
fn spot_missing_input_is_format_error() {
    let f = Fixture::new();
    let out = run(&["spot", "missing.ctcl", "-b", "bias.tsv"], f.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    std::fs::write(f.file("junk.ctcl"), b"not logits").unwrap();
    let out = run(&["spot", "junk.ctcl"], f.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stream_matches_spot_at_every_chunk_size() {
    let f = Fixture::new();
    for chunk in ["160", "560", "1120", "720"] {
        let out = run(&["stream", "a.ctcl", "-b", "bias.tsv", "--vocab", "vocab.txt", "--chunk-ms", chunk], f.path());
        assert!(out.status.success());
        let recs = records(&out);
        assert_eq!(of_type(&recs, "final")[0]["text"], "the halsey world", "chunk {chunk}");
        let deltas: Vec<String> = recs
            .iter()
            .filter(|r| r["type"] == "chunk" || r["type"] == "flush")
            .flat_map(|r| r["committed_delta"].as_array().unwrap().iter().map(|w| w.as_str().unwrap().to_string()))
            .collect();
        assert_eq!(deltas, ["the", "halsey", "world"]);
        let mut last = 0;
        for r in recs.iter().filter(|r| r["type"] == "chunk") {
            let frontier = r["commit_frontier"].as_u64().unwrap();
            assert!(frontier >= last && frontier <= r["frames_seen"].as_u64().unwrap());
            last = frontier;
        }
        assert_eq!(of_type(&recs, "runtime").len(), 1);
    }
    // 18 frames at 40 ms: one chunk covers the whole utterance
    let out = run(&["stream", "a.ctcl", "-b", "bias.tsv", "--vocab", "vocab.txt", "--chunk-ms", "720"], f.path());
    assert_eq!(of_type(&records(&out), "chunk").len(), 1);
}

#[test]
fn stream_reads_envelope_from_stdin() {
    let f = Fixture::new();
    let env = std::fs::read(f.file("env.jsonl")).unwrap();
    let feed = |input: &[u8]| {
        let mut child = bin()
            .args(["stream", "-", "-b", "bias.tsv", "--vocab", "vocab.txt", "--timeout-ms", "5000"])
            .current_dir(f.path())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(input).unwrap();
        child.wait_with_output().unwrap()
    };
    let out = feed(&env);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(of_type(&records(&out), "final")[0]["text"], "the halsey world");

    // drop the end record
    let text = String::from_utf8(env).unwrap();
    let truncated: String = text.lines().filter(|l| !l.contains("\"end\"")).map(|l| format!("{l}\n")).collect();
    let out = feed(truncated.as_bytes());
    assert_eq!(out.status.code(), Some(3));
    let recs = records(&out);
    let err = of_type(&recs, "error");
    assert_eq!(err.len(), 1);
    assert_eq!(err[0]["partial"], true);
    assert!(of_type(&recs, "final").is_empty());
}

#[test]
fn eval_reports_keyword_metrics() {
    let f = Fixture::new();
    std::fs::write(f.file("refs.txt"), "call halsey now\nplay bieber\nthe weather\n").unwrap();
    std::fs::write(f.file("hyps.txt"), "call halsey now\nplay beaver\nthe halsey weather\n").unwrap();
    std::fs::write(f.file("phrases.tsv"), "halsey\nbieber\n").unwrap();
    let out = run(&["eval", "--refs", "refs.txt", "--hyps", "hyps.txt", "-b", "phrases.tsv", "--per-keyword"], f.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = &of_type(&records(&out), "eval")[0].clone();
    assert_eq!((rec["hits"].as_u64(), rec["false_alarms"].as_u64(), rec["misses"].as_u64()), (Some(1), Some(1), Some(1)));
    assert!((rec["fscore"].as_f64().unwrap() - 50.0).abs() < 1e-9);
    // 2 edits over 7 reference words
    assert!((rec["wer"].as_f64().unwrap() - 200.0 / 7.0).abs() < 1e-9);

    std::fs::write(f.file("short.txt"), "call halsey now\n").unwrap();
    let out = run(&["eval", "--refs", "refs.txt", "--hyps", "short.txt", "-b", "phrases.tsv"], f.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors() {
    let f = Fixture::new();
    assert_eq!(run(&["nope"], f.path()).status.code(), Some(1));
    assert_eq!(run(&["stream", "a.ctcl", "--chunk-ms", "10"], f.path()).status.code(), Some(1));
}
