// SPDX-License-Identifier: Apache-2.0

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

fn verexp() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_verexp"));
    cmd.env_remove("VEREXP_BOARD").env_remove("VEREXP_BACKEND_CMD");
    cmd
}

fn run(args: &[&str]) -> Output {
    verexp().args(args).output().expect("spawn verexp")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn table_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let o = run(&["table", "--epsilon", "1", "--l", "4", "--method", "setk", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["entries"], serde_json::json!(["6", "4", "3", "2"]));
    assert_eq!(v["tail"], "2");

    let o = run(&["table", "--epsilon", "0.5", "--l", "128", "--method", "set0"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["entries"].as_array().unwrap().len(), 128);
    assert_eq!(v["tail"], "0");

    assert_eq!(code(&run(&["table", "--l", "1"])), 2);
    assert_eq!(code(&run(&["table", "--epsilon", "-1"])), 2);
    assert_eq!(code(&run(&["table", "--method", "nope"])), 2);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["pipeline"])), 2);
    assert!(stdout(&run(&["--help"])).contains("Exit codes"));
}

#[test]
fn pipeline_accepts_and_rejects() {
    let o = run(&["pipeline", "--m", "100", "--range", "0:99", "--epsilon", "1", "--method", "setk", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    let med: u64 = s.split("med=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(med <= 99);
    assert!(s.contains("t_w=") && s.contains("t_p=") && s.contains("t_v="));

    let o = run(&["pipeline", "--m", "100", "--range", "0:99", "--epsilon", "1", "--seed", "7", "--tamper", "med"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("reject"));

    assert_eq!(code(&run(&["pipeline", "--m", "0"])), 2);
    assert_eq!(code(&run(&["pipeline", "--m", "3", "--tamper", "everything"])), 2);
    assert_eq!(code(&run(&["pipeline", "--m", "3", "--range", "5:1"])), 2);
    assert_eq!(code(&run(&["pipeline", "--m", "2", "--range", "0:9", "--inputs", "1,42"])), 2);
}

#[test]
fn every_tamper_class_rejects() {
    for t in ["provider-input", "provider-randomness", "med", "commitment", "range"] {
        let o = run(&["pipeline", "--m", "4", "--range", "0:9", "--seed", "3", "--tamper", t]);
        assert_eq!(code(&o), 1, "{t}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn pipeline_transcripts_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut docs = Vec::new();
    for (i, board) in ["memory", "memory", "file", "file"].iter().enumerate() {
        let out = dir.path().join(format!("t{i}.json"));
        let board = match *board {
            "file" => format!("file:{}", p(&dir.path().join(format!("b{i}.jsonl")))),
            b => b.to_string(),
        };
        let o = run(&["pipeline", "--m", "5", "--range", "0:20", "--seed", "11", "--board", &board, "--out", p(&out)]);
        assert_eq!(code(&o), 0);
        docs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
    assert_eq!(docs[2], docs[3]);
    assert_eq!(docs[0], docs[2]);
    let v: serde_json::Value = serde_json::from_slice(&docs[0]).unwrap();
    assert_eq!(v["verdict"]["accept"], true);
    assert_eq!(v["board"].as_array().unwrap().len(), 7);
}

#[test]
fn pipeline_from_params_file_and_range_file() {
    let dir = tempfile::tempdir().unwrap();
    let range = dir.path().join("range.txt");
    std::fs::write(&range, "3\n10\n11\n40\n").unwrap();
    let params = dir.path().join("params.json");
    let o = run(&["params", "--m", "3", "--range-file", p(&range), "--epsilon", "2*ln(2)", "--method", "set0", "--l", "3", "--out", p(&params)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&params).unwrap()).unwrap();
    assert_eq!(v["range"], serde_json::json!([3, 10, 11, 40]));
    let o = run(&["pipeline", "--params", p(&params), "--inputs", "3,11,40", "--seed", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(&params, "{ not json").unwrap();
    assert_eq!(code(&run(&["pipeline", "--params", p(&params)])), 2);
    assert_eq!(code(&run(&["pipeline", "--params", p(&dir.path().join("missing.json"))])), 5);
}

#[test]
fn bench_reports_timings() {
    let o = run(&["bench", "--m", "3", "--range", "0:9", "--repeat", "2"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("t_w") && s.lines().filter(|l| l.contains("accept")).count() == 2, "{s}");
}

#[test]
fn audit_commands() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("dp.json");
    let o = run(&["audit", "dp", "--m", "2", "--range", "0:2", "--epsilon", "1.3863", "--method", "setk", "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["max_ratio"].as_str().unwrap().contains('/'));

    let o = run(&["audit", "rho", "--p", "97", "--s", "13"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("42/1261"));
    assert_eq!(code(&run(&["audit", "rho", "--p", "98", "--s", "13"])), 2);
    assert_eq!(code(&run(&["audit", "rho", "--p", "97", "--s", "0"])), 2);

    let o = run(&["audit", "table", "--epsilon", "1", "--l", "4"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("0.7927"));

    let o = run(&["audit", "utility", "--m", "3", "--range", "0:3", "--epsilon", "0.5", "--method", "set0", "--l", "3"]);
    assert_eq!(code(&o), 0);
    let o = run(&["audit", "utility", "--m", "2", "--range", "0:2", "--epsilon", "2*ln(2)", "--l", "3", "--db", "1,1"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("1/9"));

    let chi = ["audit", "chisq", "--m", "5", "--range", "0:6", "--epsilon", "2*ln(2)", "--method", "set0", "--l", "3", "--db", "3,1,4,1,5"];
    assert_eq!(code(&run(&chi)), 0);
    let mut few = chi.to_vec();
    few.extend(["--trials", "100"]);
    assert_eq!(code(&run(&few)), 2);

    assert_eq!(code(&run(&["audit", "dp", "--m", "3", "--range", "0:3", "--max-pairs", "5"])), 2);
}

fn params_file(dir: &Path) -> PathBuf {
    let params = dir.join("params.json");
    let o = run(&["params", "--m", "3", "--range", "0:9", "--epsilon", "1", "--method", "setk", "--out", p(&params)]);
    assert_eq!(code(&o), 0);
    params
}

struct Server(Child, String);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn board_serve(file: &Path) -> Server {
    let mut child = verexp()
        .args(["board-serve", "--addr", "127.0.0.1:0", "--file", p(file)])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    Server(child, format!("tcp:{addr}"))
}

#[test]
fn multi_process_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let params = params_file(d);
    let board_file = d.join("board.jsonl");
    let server = board_serve(&board_file);
    let board = server.1.as_str();
    let (pk, vk) = (d.join("pk.bin"), d.join("vk.bin"));
    assert_eq!(code(&run(&["setup", "--params", p(&params), "--pk", p(&pk), "--vk", p(&vk)])), 0);

    let verify = || verexp().args(["verify", "--params", p(&params), "--vk", p(&vk)]).env("VEREXP_BOARD", board).output().unwrap();
    assert_eq!(code(&verify()), 3);

    let mut openings = Vec::new();
    for (i, x) in [2u64, 7, 5].iter().enumerate() {
        let opening = d.join(format!("opening{i}.json"));
        let o = run(&[
            "commit", "--params", p(&params), "--board", board, "--owner", &format!("provider-{i}"), "--x", &x.to_string(),
            "--opening", p(&opening),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        openings.push(opening);
    }
    assert_eq!(code(&verify()), 3);

    let mut args = vec!["prove", "--params", p(&params), "--board", board, "--pk", p(&pk)];
    for o in &openings {
        args.extend(["--opening", p(o)]);
    }
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let o = verify();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("accept med="));

    // the verdict does not depend on the transport
    let file_board = format!("file:{}", p(&board_file));
    let o = run(&["verify", "--params", p(&params), "--vk", p(&vk), "--board", &file_board]);
    assert_eq!(code(&o), 0);
    drop(server);

    let text = std::fs::read_to_string(&board_file).unwrap();
    let mut lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let old = lines[1]["payload"].as_str().unwrap().to_string();
    let bumped = (old.parse::<num_bigint::BigUint>().unwrap() + 1u32).to_string();
    lines[1]["payload"] = serde_json::Value::String(bumped);
    let edited: String = lines.iter().map(|v| format!("{v}\n")).collect();
    std::fs::write(&board_file, edited).unwrap();
    let o = run(&["verify", "--params", p(&params), "--vk", p(&vk), "--board", &file_board]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("board commitment 1"));
}

#[test]
fn unreachable_board_is_a_transport_error() {
    let dir = tempfile::tempdir().unwrap();
    let params = params_file(dir.path());
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let o = run(&[
        "commit", "--params", p(&params), "--board", &format!("tcp:{addr}"), "--owner", "a", "--x", "1", "--opening",
        p(&dir.path().join("o.json")),
    ]);
    assert_eq!(code(&o), 4);
    assert_eq!(code(&run(&["verify", "--params", p(&params), "--vk", "x", "--board", "carrier-pigeon"])), 2);
}

#[test]
fn commit_rejects_out_of_range_input() {
    let dir = tempfile::tempdir().unwrap();
    let params = params_file(dir.path());
    let o = run(&["commit", "--params", p(&params), "--owner", "a", "--x", "99", "--opening", p(&dir.path().join("o.json"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn external_backend_needs_a_command() {
    assert_eq!(code(&run(&["pipeline", "--m", "2", "--range", "0:3", "--backend", "external"])), 2);
    let o = run(&["pipeline", "--m", "2", "--range", "0:3", "--backend", "external", "--backend-cmd", "/nonexistent/backend"]);
    assert_eq!(code(&o), 5);
}
