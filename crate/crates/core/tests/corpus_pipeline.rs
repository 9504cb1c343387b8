//! End-to-end corpus construction over temporary library trees.

use std::fs;

use modigen_core::corpus::{
    build_records, build_sft_records, dedupe, emit_jsonl, filter_records, scan_library,
    CorpusRecord, FilterPolicy, RejectReason,
};
use modigen_core::jsonl::read_jsonl;

#[test]
fn scan_orders_units_and_filters_extensions() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("B.mo"), "model B end B;").unwrap();
    fs::write(dir.path().join("A.mo"), "model A end A;").unwrap();
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    fs::create_dir(dir.path().join("sub")).unwrap();
    fs::write(dir.path().join("sub/C.mo"), "model C end C;").unwrap();
    fs::write(dir.path().join("sub/readme.md"), "ignored").unwrap();

    let outcome = scan_library(dir.path(), "Lib", "4.0.0").unwrap();
    let names: Vec<_> = outcome
        .units
        .iter()
        .map(|u| u.path.file_name().unwrap().to_string_lossy().to_string())
        .collect();
    assert_eq!(names, vec!["A.mo", "B.mo", "C.mo"]);
    assert!(outcome.errors.is_empty());
}

#[test]
fn scan_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = scan_library(dir.path(), "Lib", "1").unwrap();
    assert!(outcome.units.is_empty());
}

#[test]
fn listing_one_record_shape() {
    let dir = tempfile::tempdir().unwrap();
    let listing = fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/fixtures/corpus/BouncingBall.mo"),
    )
    .unwrap();
    fs::write(dir.path().join("BouncingBall.mo"), &listing).unwrap();

    let outcome = scan_library(dir.path(), "MSL", "4.0.0").unwrap();
    let (records, log) = build_records(&outcome.units);
    assert!(log.is_empty());
    assert_eq!(records.len(), 1);
    let r = &records[0];
    // The BouncingBall header carries no description string.
    assert_eq!(r.description, "");
    assert_eq!(r.source, "MSL");
    assert_eq!(r.modelica_version, "4.0.0");
    assert!(r.model.starts_with("model BouncingBall"));
}

#[test]
fn two_level_package_extraction() {
    // Oracle fixture: a package P wrapping model M; the leaf record must be
    // scoped under Lib.P and hold only M's text.
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("P.mo"),
        "package P\n  model M \"inner model\"\n    Real x;\n  equation\n    x = 1;\n  end M;\nend P;\n",
    )
    .unwrap();
    let outcome = scan_library(dir.path(), "Lib", "4.0.0").unwrap();
    let (records, log) = build_records(&outcome.units);
    assert!(log.is_empty());
    assert_eq!(records.len(), 1, "only the leaf component becomes a record");
    let r = &records[0];
    assert_eq!(r.source, "Lib.P");
    assert!(r.model.starts_with("model M"));
    assert!(!r.model.contains("package"));
    assert_eq!(r.description, "inner model");
}

#[test]
fn broken_file_logs_parse_failure() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("Broken.mo"), "model Broken Real x = 1 end Broken;").unwrap();
    let outcome = scan_library(dir.path(), "Lib", "1").unwrap();
    let (records, log) = build_records(&outcome.units);
    assert!(records.is_empty());
    assert_eq!(log.len(), 1);
    assert_eq!(log.entries[0].reason, RejectReason::ParseFailure);
}

#[test]
fn conservation_across_stages() {
    let dir = tempfile::tempdir().unwrap();
    let files = [
        ("Good.mo", "model Good \"d\" Real x; equation x = 1; end Good;"),
        ("NoDocs.mo", "model NoDocs Real x; equation x = 1; end NoDocs;"),
        ("Dup.mo", "model Good \"d\" Real x; equation x = 1; end Good;"),
        ("Other.mo", "model Other \"o\" Real y; equation y = 2; end Other;"),
    ];
    for (name, content) in files {
        fs::write(dir.path().join(name), content).unwrap();
    }
    let outcome = scan_library(dir.path(), "Lib", "1").unwrap();
    let (records, build_log) = build_records(&outcome.units);
    assert_eq!(records.len() + build_log.len(), outcome.units.len());

    let n_in = records.len();
    let (kept, filter_log) = filter_records(records, &FilterPolicy::default());
    assert_eq!(kept.len() + filter_log.len(), n_in);

    let n_in = kept.len();
    let (unique, dedupe_log) = dedupe(kept);
    assert_eq!(unique.len() + dedupe_log.len(), n_in);
    assert_eq!(dedupe_log.len(), 1);
}

#[test]
fn emit_round_trip_and_key_set() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![CorpusRecord {
        modelica_version: "4.0.0".into(),
        description: "d".into(),
        documentation: "doc".into(),
        model: "model A\n  Real x;\nequation\n  x = 1;\nend A;".into(),
        source: "Lib".into(),
    }];
    let out = dir.path().join("dataset_all.jsonl");
    assert_eq!(emit_jsonl(&records, &out).unwrap(), 1);

    let raw = fs::read_to_string(&out).unwrap();
    assert_eq!(raw.lines().count(), 1);
    let value: serde_json::Value = serde_json::from_str(raw.lines().next().unwrap()).unwrap();
    let keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
    let mut expected: Vec<String> =
        ["modelica version", "description", "documentation", "model", "source"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    expected.sort();
    assert_eq!(sorted, expected);

    let back: Vec<CorpusRecord> = read_jsonl(&out).unwrap();
    assert_eq!(back, records);
}

#[test]
fn emit_zero_records_writes_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty.jsonl");
    assert_eq!(emit_jsonl(&[], &out).unwrap(), 0);
    assert_eq!(fs::read_to_string(&out).unwrap(), "");
}

#[test]
fn sft_keys_are_exact() {
    let records = vec![CorpusRecord {
        modelica_version: "1".into(),
        description: "d".into(),
        documentation: String::new(),
        model: "model A end A;".into(),
        source: "L".into(),
    }];
    let sft = build_sft_records(&records, "Write Modelica.", "{description}").unwrap();
    let line = serde_json::to_string(&sft[0]).unwrap();
    let value: serde_json::Value = serde_json::from_str(&line).unwrap();
    let mut keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, vec!["instruction", "query", "response"]);
}
