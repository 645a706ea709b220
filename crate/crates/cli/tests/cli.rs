//! The `scimap` binary against the smoke fixture.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn smoke() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/smoke")
}

fn scimap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scimap")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_smoke(out: &Path) -> Output {
    let conf = smoke().join("smoke.conf");
    scimap(&["run", "--config", path(&conf), "--out", path(out)])
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn run_writes_maps_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_smoke(dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["ucities.txt", "map.geojson", "map.kml", "map.html", "report.txt", "run.conf"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("Result: PASS"), "{report}");
}

#[test]
fn stagewise_matches_run() {
    let conf = smoke().join("smoke.conf");
    let whole = tempfile::tempdir().unwrap();
    let staged = tempfile::tempdir().unwrap();
    let staged_out = staged.path().join("o");
    let whole_out = whole.path().join("o");
    assert!(run_smoke(&whole_out).status.success());
    for stage in ["ingest", "slice", "geocode", "merge", "classify", "emit", "verify"] {
        let o = scimap(&[stage, "--config", path(&conf), "--out", path(&staged_out)]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let names = listing(&whole_out);
    assert_eq!(names, listing(&staged_out));
    for name in names {
        // identical apart from the echoed out path
        let a = fs::read_to_string(whole_out.join(&name)).unwrap().replace(path(&whole_out), "OUT");
        let b = fs::read_to_string(staged_out.join(&name)).unwrap().replace(path(&staged_out), "OUT");
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn empty_input_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    fs::write(&input, "\"Authors\",\"Title\",\"Year\",\"Cited by\",\"Affiliations\",\"EID\"\n").unwrap();
    let out_dir = dir.path().join("out");
    let o = scimap(&["run", "--input", path(&input), "--input-format", "scopus_csv", "--out", path(&out_dir)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    assert!(!out_dir.exists() || listing(&out_dir).is_empty());
}

#[test]
fn verify_flags_misplaced_city() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    assert!(run_smoke(&out_dir).status.success());
    let gazetteer = fs::read_to_string(smoke().join("gazetteer.tsv"))
        .unwrap()
        .replace("Vienna\tAustria\t48.208176\t16.373819", "Vienna\tAustria\t50.208176\t16.373819");
    let tampered = dir.path().join("tampered.tsv");
    fs::write(&tampered, gazetteer).unwrap();
    let conf = smoke().join("smoke.conf");
    let args = ["verify", "--config", path(&conf), "--out", path(&out_dir), "--gazetteer", path(&tampered)];

    let o = scimap(&args);
    assert_eq!(o.status.code(), Some(2));
    let report = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("Result: FAIL"), "{report}");

    let mut lenient = args.to_vec();
    lenient.push("--no-verify");
    assert_eq!(scimap(&lenient).status.code(), Some(0));
}

#[test]
fn help_lists_subcommands() {
    let o = scimap(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for sub in ["run", "ingest", "slice", "geocode", "merge", "classify", "emit", "verify"] {
        assert!(text.contains(sub), "{sub}");
    }
}
