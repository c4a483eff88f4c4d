use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geodistort::report::sha256_hex;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mini")
}

fn geodistort(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geodistort"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `root`, keyed by its relative path with `/` separators.
fn collect_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn vocab_only_config_writes_coverage_map_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("audit.toml");
    fs::write(
        &cfg,
        format!(
            "gazetteer = {:?}\nindicators = [\"vocab\"]\nformats = [\"csv\"]\n[[models]]\nid = \"chatlike\"\ncasing = \"cased\"\nvocab = {:?}\n",
            path_str(&fixtures().join("gazetteer.csv")),
            path_str(&fixtures().join("vocab/chatlike.json")),
        ),
    )
    .unwrap();
    let out = tmp.path().join("out");
    let res = geodistort(&["run", "--config", path_str(&cfg), "--out", path_str(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let mut files: Vec<String> = collect_files(&out.join("chatlike")).into_keys().collect();
    files.sort();
    assert_eq!(
        files,
        ["manifest.json", "vocab.csv", "vocab.geojson", "vocab_countries.csv"]
    );
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("chatlike/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["indicators"], serde_json::json!(["vocab"]));
    assert_eq!(manifest["config"]["vocab_format"], "token_id_map");
    assert_eq!(manifest["errors"], serde_json::json!([]));
}

#[test]
fn missing_embedding_manifest_fails_that_model_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("nowhere.manifest.json");
    let res = geodistort(&[
        "run",
        "--config",
        path_str(&fixtures().join("config.toml")),
        "--model",
        "bertlike",
        "--embeddings",
        path_str(&missing),
        "--out",
        path_str(&out),
    ]);
    assert!(!res.status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("bertlike/manifest.json")).unwrap()).unwrap();
    let errors: Vec<String> = serde_json::from_value(manifest["errors"].clone()).unwrap();
    assert_eq!(errors.len(), 2, "{errors:?}");
    assert!(errors[0].starts_with("corr:") && errors[0].contains("nowhere.manifest.json"));
    assert!(errors[1].starts_with("gdi:"));
    // the other indicators still produced their results
    assert!(out.join("bertlike/accuracy.csv").is_file());
    assert!(out.join("bertlike/vocab.csv").is_file());
    assert!(!out.join("bertlike/gdi.csv").exists());
}

#[test]
fn probe_gen_masked_lines_end_with_mask() {
    let tmp = tempfile::tempdir().unwrap();
    let res = geodistort(&[
        "probe",
        "gen",
        "--gazetteer",
        path_str(&fixtures().join("gazetteer.csv")),
        "--family",
        "masked",
        "--out",
        path_str(tmp.path()),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let specs =
        geodistort::probekit::read_specs(fs::read(tmp.path().join("probes/masked.jsonl")).unwrap().as_slice()).unwrap();
    assert_eq!(specs.len(), 48);
    for s in &specs {
        match &s.rendered {
            geodistort::probekit::Rendered::Masked(line) => assert!(line.ends_with("is capital of <mask>"), "{line}"),
            other => panic!("unexpected rendering {other:?}"),
        }
    }
    assert!(tmp.path().join("probes/manifest.json").is_file());
    assert!(!tmp.path().join("probes/chat.jsonl").exists());
}

#[test]
fn probe_gen_on_empty_gazetteer_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let header = fs::read_to_string(fixtures().join("gazetteer.csv")).unwrap();
    let gz = tmp.path().join("empty.csv");
    fs::write(&gz, format!("{}\n", header.lines().next().unwrap())).unwrap();
    let res = geodistort(&[
        "probe",
        "gen",
        "--gazetteer",
        path_str(&gz),
        "--out",
        path_str(tmp.path()),
    ]);
    assert!(!res.status.success());
}

#[test]
fn probe_score_subcommand_matches_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let res = geodistort(&[
        "probe",
        "score",
        "--config",
        path_str(&fixtures().join("config.toml")),
        "--model",
        "chatlike",
        "--format",
        "csv",
        "--out",
        path_str(tmp.path()),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let got = fs::read_to_string(tmp.path().join("chatlike/accuracy.csv")).unwrap();
    let want = fs::read_to_string(fixtures().join("golden/chatlike/accuracy.csv")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn gazetteer_stats_counts_capitals() {
    let res = geodistort(&[
        "gazetteer",
        "stats",
        "--gazetteer",
        path_str(&fixtures().join("gazetteer.csv")),
    ]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("capitals: 48"), "{text}");
    assert!(text.contains("  Europe: 8"), "{text}");
}

#[test]
fn bad_flag_values_are_rejected() {
    let res = geodistort(&["distort", "gdi", "--gdi-agg", "median"]);
    assert!(!res.status.success());
    let res = geodistort(&[
        "run",
        "--jobs",
        "0",
        "--config",
        path_str(&fixtures().join("config.toml")),
    ]);
    assert!(!res.status.success());
}

#[test]
fn report_merges_model_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let run = geodistort(&[
        "run",
        "-q",
        "--config",
        path_str(&fixtures().join("config.toml")),
        "--out",
        path_str(&out),
    ]);
    assert!(run.status.success());
    let res = geodistort(&["report", "--out", path_str(&out), "--format", "csv"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let acc = fs::read_to_string(out.join("summary/accuracy.csv")).unwrap();
    let lines: Vec<&str> = acc.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("bertlike,") && lines[2].starts_with("chatlike,"));
    assert!(lines[3].starts_with("Nb countries,"));
}

/// Compares a full run against `fixtures/mini/golden`. Text artifacts are
/// stored verbatim; the large GeoJSON maps are pinned by hash in
/// `SHA256SUMS`. Set `GEODISTORT_BLESS=1` to rewrite the goldens.
#[test]
fn full_run_matches_golden_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let res = geodistort(&[
        "run",
        "-q",
        "--config",
        path_str(&fixtures().join("config.toml")),
        "--out",
        path_str(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let produced = collect_files(&out);
    let golden_dir = fixtures().join("golden");

    let mut sums = String::new();
    let mut text = BTreeMap::new();
    for (name, bytes) in &produced {
        if name.ends_with(".geojson") {
            sums.push_str(&format!("{}  {name}\n", sha256_hex(bytes)));
        } else {
            text.insert(name.clone(), bytes.clone());
        }
    }

    if std::env::var_os("GEODISTORT_BLESS").is_some() {
        let _ = fs::remove_dir_all(&golden_dir);
        for (name, bytes) in &text {
            let p = golden_dir.join(name);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, bytes).unwrap();
        }
        fs::write(golden_dir.join("SHA256SUMS"), &sums).unwrap();
        return;
    }

    let mut golden = collect_files(&golden_dir);
    let want_sums = String::from_utf8(golden.remove("SHA256SUMS").expect("SHA256SUMS present")).unwrap();
    assert_eq!(sums, want_sums);
    assert_eq!(
        text.keys().collect::<Vec<_>>(),
        golden.keys().collect::<Vec<_>>(),
        "artifact set differs"
    );
    for (name, bytes) in &text {
        assert!(golden[name] == *bytes, "{name} differs from golden copy");
    }
}

#[test]
fn probe_gen_chat_covers_every_national_capital() {
    let tmp = tempfile::tempdir().unwrap();
    let gz = fixtures().join("../geonames/cities-100k-and-capitals.csv");
    let res = geodistort(&[
        "probe",
        "gen",
        "--gazetteer",
        path_str(&gz),
        "--family",
        "chat",
        "--out",
        path_str(tmp.path()),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(tmp.path().join("probes/chat.jsonl")).unwrap();
    let n = text.lines().count();
    assert!((227..=237).contains(&n), "{n} chat probes");
}
