mod common;

use clap::Parser;
use common::Served;
use neoward::cli::Cli;
use neoward::mockserver;
use neoward_core::keys::load_key;
use neoward_core::store::{RecordKey, RecordKind, Store};
use neoward_core::sync::{store_digest, AggregationServer};
use neoward_core::token::TokenKey;
use neoward_core::transport::{read_frame, FleetKey, Receiver};
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

fn neoward(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neoward")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = neoward(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn every_subcommand_parses() {
    let lines: &[&[&str]] = &[
        &["neoward", "simulate", "--devices", "20", "--scenario", "stable", "--seed", "1", "--duration", "600", "--interval", "1", "--sink", "127.0.0.1:7401", "--fleet-key-file", "k"],
        &["neoward", "power", "--interval", "4", "--battery-mah", "2000"],
        &["neoward", "gateway", "--listen", "127.0.0.1:0", "--store", "d", "--store-key-file", "a", "--token-key-file", "b", "--retain-days", "30"],
        &["neoward", "sync", "--server", "http://x", "--store", "d", "--store-key-file", "a", "--once"],
        &["neoward", "sync", "--server", "http://x", "--store", "d", "--store-key-file", "a", "--loop", "30"],
        &["neoward", "mock-server", "--listen", "127.0.0.1:0", "--state", "s"],
        &["neoward", "netsim", "--latency", "50..2000", "--loss", "0.3", "--seed", "4", "--upstream", "http://x"],
        &["neoward", "ocr-extract", "--detections", "d", "--workers", "4"],
        &["neoward", "ocr-eval", "--detections", "d", "--truth", "t"],
        &["neoward", "smt", "train", "--data", "d", "--seed", "1", "--steps", "10", "--out", "m.bin"],
        &["neoward", "smt", "eval", "--model", "m", "--data", "d", "--kfold", "5"],
        &["neoward", "smt", "calibrate", "--model", "m", "--data", "d"],
        &["neoward", "smt", "gradcheck"],
    ];
    for l in lines {
        Cli::try_parse_from(*l).unwrap_or_else(|e| panic!("{l:?}: {e}"));
    }
    assert!(Cli::try_parse_from(["neoward", "power", "--interval", "3"]).is_err());
    assert!(Cli::try_parse_from(["neoward", "sync", "--server", "x", "--store", "d", "--store-key-file", "a"]).is_err());
    assert!(Cli::try_parse_from(["neoward", "sync", "--server", "x", "--store", "d", "--store-key-file", "a", "--once", "--loop", "3"]).is_err());
}

#[test]
fn power_prints_current_and_lifetime() {
    let out = ok(&["power", "--interval", "1", "--battery-mah", "2000"]);
    assert!(out.contains("current_ma 13.52"), "{out}");
    assert!(out.contains("battery_life_h 147.9"), "{out}");
    let out = ok(&["power", "--interval", "5"]);
    assert!(out.contains("battery_life_h 157.6"), "{out}");
    assert!(!neoward(&["power", "--interval", "3"]).status.success());
}

#[test]
fn keys_tokens_and_file_sink() {
    let dir = tempfile::tempdir().unwrap();
    let fleet = dir.path().join("fleet.key");
    ok(&["keygen", "--out", p(&fleet)]);
    let tok = ok(&["token", "--key-file", p(&fleet), "--sub", "nurse", "--role", "provider", "--ttl", "60"]);
    let claims = TokenKey::new(load_key(&fleet).unwrap()).verify(tok.trim(), 0).unwrap();
    assert_eq!(claims.sub, "nurse");

    let frames = dir.path().join("frames.bin");
    let out = ok(&[
        "simulate", "--devices", "3", "--scenario", "desaturation", "--duration", "60", "--interval", "2", "--sink", p(&frames), "--fleet-key-file",
        p(&fleet),
    ]);
    assert_eq!(out.lines().count(), 3, "{out}");
    let mut rx = Receiver::new(FleetKey(load_key(&fleet).unwrap()));
    let mut r = std::io::BufReader::new(std::fs::File::open(&frames).unwrap());
    let mut samples = 0;
    while let Some(f) = read_frame(&mut r).unwrap() {
        let fr = rx.accept(&f).unwrap();
        samples += neoward_core::transport::decode_batch(&fr.payload, fr.device_id).unwrap().len();
    }
    assert_eq!(samples, 180);
}

#[test]
fn ocr_synth_extract_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["ocr-synth", "--out", p(dir.path()), "--count", "25", "--seed", "3"]);
    let out = ok(&["ocr-extract", "--detections", p(dir.path()), "--workers", "2"]);
    assert_eq!(out.lines().count(), 25);
    assert!(out.lines().all(|l| l.contains("HR=")));
    let report = ok(&["ocr-eval", "--detections", p(dir.path()), "--truth", p(&dir.path().join("truth.tsv"))]);
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        let f: Vec<&str> = r.split_whitespace().collect();
        assert_eq!(f[4], "1.000", "{report}");
    }
}

#[test]
fn smt_workflow_on_tiny_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["smt", "gen-data", "--out", p(&data), "--count", "6", "--duration", "240", "--seed", "2"]);
    let model = dir.path().join("m.bin");
    let shape = ["--window", "32", "--d", "8", "--heads", "2", "--stride", "16"];
    let mut args = vec!["smt", "train", "--data", p(&data), "--seed", "1", "--steps", "10", "--out", p(&model)];
    args.extend(shape);
    let out = ok(&args);
    assert!(out.contains("saved"), "{out}");
    let out = ok(&["smt", "eval", "--model", p(&model), "--data", p(&data), "--stride", "16"]);
    assert!(out.contains("accuracy"), "{out}");
    let out = ok(&["smt", "eval", "--model", p(&model), "--data", p(&data), "--stride", "16", "--kfold", "2", "--steps", "3"]);
    assert!(out.contains("mean accuracy"), "{out}");
    let cal = dir.path().join("cal.bin");
    let out = ok(&["smt", "calibrate", "--model", p(&model), "--data", p(&data), "--stride", "16", "--out", p(&cal)]);
    assert!(out.starts_with("tau "), "{out}");
    assert!(neoward_smt::modelfile::load(&cal).is_ok());
}

#[test]
fn smt_gradcheck_passes() {
    let out = ok(&["smt", "gradcheck"]);
    assert!(out.trim_end().ends_with("ok"), "{out}");
}

#[test]
fn sync_once_against_mock_server() {
    let dir = tempfile::tempdir().unwrap();
    let key_file = dir.path().join("store.key");
    ok(&["keygen", "--out", p(&key_file)]);
    let key = load_key(&key_file).unwrap();
    let store_dir = dir.path().join("store");
    std::fs::create_dir_all(&store_dir).unwrap();
    {
        let store = Store::open(&store_dir, &key).unwrap();
        for i in 0..30 {
            store.put(RecordKey { kind: RecordKind::Vital, device_id: 2, record_id: i }, i, vec![1; 26]).unwrap();
        }
        store.sync_all().unwrap();
    }
    let server = Arc::new(AggregationServer::in_memory());
    let s = Served::start(mockserver::router(server.clone()));
    let out = ok(&["sync", "--server", &s.url(""), "--store", p(&store_dir), "--store-key-file", p(&key_file), "--once"]);
    let report: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(report["pushed"], 30);
    let store = Store::open(&store_dir, &key).unwrap();
    assert_eq!(server.digest(), store_digest(&store, &RecordKind::ALL));
    assert_eq!(store.sync_cursor().unwrap(), store.head_cursor());
}
