use std::fs;
use std::path::{Path, PathBuf};

use cantor_cli::main_with_args;
use sparse_cantor::exact::q;
use sparse_cantor::{CantorSet, ConstructionParams};
use tempfile::TempDir;

const CONFIG: &str = r#"
[construction]
regime = "fixed-dimension"
base = 16
epsilon = "1/4"
depth = 3
seed = 1

[correlate]
n = 2
budget = 20

[differentiate]
point_count = 20
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["cantor"];
    v.extend_from_slice(args);
    main_with_args(v)
}

fn construct_into(dir: &Path, out: &str, extra: &[&str]) -> i32 {
    let cfg = write_config(dir, CONFIG);
    let out = dir.join(out);
    let mut args = vec![
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    for o in extra {
        args.push("-o");
        args.push(o);
    }
    args.push("construct");
    run(&args)
}

#[test]
fn construct_then_verify() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(construct_into(tmp.path(), "a", &[]), 0);
    let set = tmp.path().join("a/set.json");
    assert!(tmp.path().join("a/transcript.jsonl").exists());
    let out = tmp.path().join("v");
    assert_eq!(
        run(&[
            "--out",
            out.to_str().unwrap(),
            "verify",
            set.to_str().unwrap()
        ]),
        0
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["schema_version"], 1);
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(construct_into(tmp.path(), "a", &[]), 0);
    assert_eq!(construct_into(tmp.path(), "b", &[]), 0);
    let a = fs::read(tmp.path().join("a/set.json")).unwrap();
    let b = fs::read(tmp.path().join("b/set.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_retries_can_fail() {
    // with a tiny deviation budget the first draw is rejected and nothing is retried
    let tmp = TempDir::new().unwrap();
    let code = construct_into(
        tmp.path(),
        "a",
        &["construction.max_retries=0", "construction.b=\"1/1000\""],
    );
    assert_ne!(code, 0);
    assert!(tmp.path().join("a/transcript.jsonl").exists());
}

#[test]
fn zero_budget_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let out = tmp.path().join("o");
    let code = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "-o",
        "correlate.budget=0",
        "--out",
        out.to_str().unwrap(),
        "correlate",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn unknown_key_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{CONFIG}\n[report]\nbogus = 1\n"));
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "construct"]), 2);
}

#[test]
fn corrupt_file_is_a_format_error() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("set.json");
    fs::write(&p, "{\"schema_version\": 1, \"params\":").unwrap();
    let out = tmp.path().join("o");
    assert_eq!(
        run(&[
            "--out",
            out.to_str().unwrap(),
            "verify",
            p.to_str().unwrap()
        ]),
        2
    );
}

#[test]
fn broken_nesting_is_rejected() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(construct_into(tmp.path(), "a", &[]), 0);
    let p = tmp.path().join("a/set.json");
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
    let parents: Vec<u64> = v["levels"][0]["selection"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m[0].as_u64().unwrap())
        .collect();
    let orphan = (1..=16).find(|j| !parents.contains(j)).unwrap();
    v["levels"][1]["selection"][0][0] = orphan.into();
    fs::write(&p, serde_json::to_string(&v).unwrap()).unwrap();
    let out = tmp.path().join("v");
    assert_ne!(
        run(&[
            "--out",
            out.to_str().unwrap(),
            "verify",
            p.to_str().unwrap()
        ]),
        0
    );
}

#[test]
fn count_violation_lists_the_gate() {
    let tmp = TempDir::new().unwrap();
    let params = ConstructionParams::custom(vec![16, 16], vec![q(1, 2); 2], 2).unwrap();
    let set =
        CantorSet::from_positions(params, vec![(0..16).collect(), vec![0, 17, 34, 51]]).unwrap();
    let p = tmp.path().join("set.json");
    fs::write(&p, set.to_json().unwrap()).unwrap();
    let out = tmp.path().join("v");
    assert_eq!(
        run(&[
            "--out",
            out.to_str().unwrap(),
            "verify",
            p.to_str().unwrap()
        ]),
        1
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
    let failed: Vec<_> = report["gates"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|g| g["pass"] == false)
        .collect();
    assert!(
        failed.iter().any(|g| g["gate"] == "a" && g["level"] == 1),
        "{failed:?}"
    );
}

#[test]
fn dimension_report_has_all_columns() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(construct_into(tmp.path(), "a", &[]), 0);
    let set = tmp.path().join("a/set.json");
    let out = tmp.path().join("d");
    assert_eq!(
        run(&[
            "--out",
            out.to_str().unwrap(),
            "dimension",
            "--set",
            set.to_str().unwrap()
        ]),
        0
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("dimension.json")).unwrap()).unwrap();
    for key in ["bounds", "box", "symbolic_limits"] {
        assert!(!report[key].is_null(), "missing {key}: {report}");
    }
    assert!(out.join("dimension.csv").exists());
}

#[test]
fn differentiate_lipschitz_hat() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let out = tmp.path().join("o");
    assert_eq!(
        run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "differentiate"
        ]),
        0
    );
    let table = fs::read_to_string(out.join("differentiate.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 20 * 5);
}

#[test]
fn correlate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let mut tables = Vec::new();
    for d in ["a", "b"] {
        let out = tmp.path().join(d);
        assert_eq!(
            run(&[
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "correlate"
            ]),
            0
        );
        tables.push(fs::read(out.join("correlate.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let c =
            cantor_cli::config::RunConfig::parse(&fs::read_to_string(&p).unwrap(), &[]).unwrap();
        for cmd in [
            "construct",
            "correlate",
            "maximal",
            "dimension",
            "differentiate",
            "demo-l1",
        ] {
            c.validate(cmd)
                .unwrap_or_else(|e| panic!("{}: {cmd}: {e}", p.display()));
        }
    }
}
