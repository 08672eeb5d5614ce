use std::fs;
use std::process::Command;

fn hris() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hris"))
}

#[test]
fn run_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(
        &spec,
        "name = \"cli\"\n[agent]\nkind = \"random\"\n[[sweep]]\npath = \"env.harvest.tau\"\nvalues = [10.0, 40.0]\n",
    )
    .unwrap();
    let out = dir.path().join("runs");
    let status = hris()
        .args([
            "run",
            spec.to_str().unwrap(),
            "--seeds",
            "2",
            "--steps",
            "300",
            "--out",
            out.to_str().unwrap(),
        ])
        .env("HRIS_WORKERS", "1")
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success());
    let point = out.join("cli").join("env.harvest.tau=10.0");
    assert!(point.join("summary.json").is_file());
    assert_eq!(
        fs::read_to_string(point.join("seed-1").join("steps.jsonl"))
            .unwrap()
            .lines()
            .count(),
        300
    );

    let table = dir.path().join("table.csv");
    let status = hris()
        .args(["compare", out.to_str().unwrap(), "--out", table.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.starts_with("run,agent,seeds,steps,converged_mean"));
    assert!(dir.path().join("table_curves.csv").is_file());
}

#[test]
fn invalid_spec_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    fs::write(&spec, "total_steps = 0\nwindow = 0\n").unwrap();
    let out = hris().args(["run", spec.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("total_steps") && err.contains("window"), "{err}");
}

#[test]
fn unknown_criterion_is_an_error() {
    let out = hris().args(["accept", "--only", "nope"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn shipped_configs_load_from_disk() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        hris_harness::ExperimentSpec::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert_eq!(n, hris_harness::acceptance::SHIPPED.len());
}
