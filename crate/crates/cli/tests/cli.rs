use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oec_core::imageio::{save_png, synthetic_image};

fn oec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oec")).args(args).env_remove("OEC_BENCH_THREADS").output().unwrap()
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("oec-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn png(dir: &Path, name: &str, h: u32, w: u32, seed: u64) -> PathBuf {
    let p = dir.join(name);
    save_png(&synthetic_image(h, w, seed), &p).unwrap();
    p
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn encode_then_verify() {
    let d = scratch("encode");
    let img = png(&d, "scene.png", 512, 512, 1);
    let out = d.join("out");
    let r = oec(&["encode", s(&img), "--out-dir", s(&out), "--seed", "5"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let fenc = files(&out.join("fenc"));
    let lat = files(&out.join("lat"));
    assert_eq!((fenc.len(), lat.len()), (1, 1));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest-encode.json")).unwrap()).unwrap();
    let listed: Vec<String> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert!(listed.iter().any(|p| p.ends_with(".fenc")) && listed.iter().any(|p| p.ends_with(".lat")));
    assert_eq!(manifest["seed"], 5);

    let first = std::fs::read(&fenc[0]).unwrap();
    let again = oec(&["encode", s(&img), "--out-dir", s(&out), "--seed", "5"]);
    assert!(again.status.success());
    assert_eq!(std::fs::read(&fenc[0]).unwrap(), first);

    let ok = oec(&["verify", "--fenc", s(&fenc[0]), "--lat", s(&lat[0])]);
    assert_eq!(ok.status.code(), Some(0));

    let bad = d.join("bad.fenc");
    let mut bytes = first.clone();
    let n = bytes.len();
    bytes[n / 2] ^= 0x40;
    std::fs::write(&bad, bytes).unwrap();
    let r = oec(&["verify", "--fenc", s(&bad), "--lat", s(&lat[0])]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stdout).contains("FAIL"));

    let r = oec(&["verify", "--fenc", s(&fenc[0]), s(&bad), "--lat", s(&lat[0])]);
    assert_eq!(r.status.code(), Some(2));
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn unreadable_input_is_named() {
    let d = scratch("missing");
    let r = oec(&["encode", "/no/such/tile.png", "--out-dir", s(&d)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("/no/such/tile.png"));
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn profile_synthetic_emits_grid() {
    let d = scratch("profile");
    let r = oec(&["profile", "--runner", "synthetic", "--out-dir", s(&d), "--json"]);
    assert!(r.status.success());
    let result: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(result["chosen_codec"], "FOOL-S");
    let csv = std::fs::read_to_string(d.join("profile.csv")).unwrap();
    assert!(csv.starts_with("tile_size,batch_size,size_class,img_per_s,pixels_per_s,tcr_per_s"));
    assert_eq!(csv.lines().count(), 76);
    let r = oec(&["report", s(&d.join("profile.json"))]);
    assert_eq!(String::from_utf8_lossy(&r.stdout), csv);
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn simulate_writes_one_row_per_link_and_codec() {
    let d = scratch("simulate");
    let mission = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/missions/rgb-nanosat.json");
    let r = oec(&["simulate", "--mission", s(&mission), "--out-dir", s(&d)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(d.join("simulate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 6);
    let bad = d.join("bad.json");
    std::fs::write(&bad, "{\"name\": 3}").unwrap();
    assert_eq!(oec(&["simulate", "--mission", s(&bad)]).status.code(), Some(2));
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn empty_report_is_header_only() {
    let d = scratch("report");
    let p = d.join("empty.json");
    std::fs::write(&p, r#"{"schema_version": 1, "kind": "simulate", "payload": {"passes": []}}"#).unwrap();
    let r = oec(&["report", s(&p)]);
    assert!(r.status.success());
    assert_eq!(String::from_utf8_lossy(&r.stdout).lines().count(), 1);
    std::fs::write(&p, r#"{"schema_version": 7, "kind": "simulate", "payload": []}"#).unwrap();
    assert_eq!(oec(&["report", s(&p)]).status.code(), Some(2));
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn pipeline_run_writes_streams_and_trace() {
    let d = scratch("pipeline");
    let a = png(&d, "a.png", 100, 150, 2);
    let b = png(&d, "b.png", 64, 64, 3);
    let out = d.join("out");
    let r = oec(&["pipeline", "run", s(&a), s(&b), "--mode", "conc", "--tile", "64", "--batch", "2", "--class", "s", "--out-dir", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(files(&out.join("fenc")).len(), 2 * 3 + 1);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);
    let seq_out = d.join("seq");
    let r = oec(&["pipeline", "run", s(&a), s(&b), "--mode", "seq", "--tile", "64", "--batch", "2", "--out-dir", s(&seq_out)]);
    assert!(r.status.success());
    let conc: Vec<Vec<u8>> = files(&out.join("fenc")).iter().map(|p| std::fs::read(p).unwrap()).collect();
    let seq: Vec<Vec<u8>> = files(&seq_out.join("fenc")).iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(conc, seq);
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn configuration_errors_exit_two() {
    let d = scratch("config");
    let cfg = d.join("cfg.json");
    std::fs::write(&cfg, "{\"tile_size\": \"big\"}").unwrap();
    assert_eq!(oec(&["fixtures", "list", "--config", s(&cfg)]).status.code(), Some(2));
    assert_eq!(oec(&["pipeline", "run", "--tile", "0", "--out-dir", s(&d)]).status.code(), Some(2));
    assert_eq!(oec(&["profile", "--codec", "nothing", "--runner", "synthetic", "--out-dir", s(&d)]).status.code(), Some(2));
    let r = Command::new(env!("CARGO_BIN_EXE_oec"))
        .args(["pipeline", "run", "--synthetic", "1", "--out-dir", s(&d)])
        .env("OEC_BENCH_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(2));
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn fixtures_list_json() {
    let r = oec(&["fixtures", "list", "--json"]);
    assert!(r.status.success());
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["links"].as_array().unwrap().len(), 4);
    assert_eq!(v["codecs"].as_array().unwrap().len(), 6);
    assert_eq!(v["selection"].as_array().unwrap().len(), 18);
}
