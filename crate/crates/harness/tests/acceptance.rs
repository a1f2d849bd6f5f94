//! End-to-end acceptance suite. Every test prints one PASS/FAIL line to the
//! real stderr (bypassing the test harness capture) before asserting.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;
use voronoi_perc::connectivity::{Engine, EventKind, EventSpec};
use voronoi_perc::estimators::russo_check;

fn report(name: &str, passed: bool, detail: &str) {
    let tag = if passed { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] {name}: {detail}");
}

/// Runs the harness and returns its exit code, result directory and check.
fn vperc(out: &Path, args: &[&str]) -> (i32, PathBuf, Option<(bool, String)>) {
    let mut full = vec!["vperc".to_string()];
    full.extend(args.iter().map(|s| s.to_string()));
    full.extend(["--out".into(), out.display().to_string()]);
    let (code, dir) = vperc::run_args(full);
    let dir = dir.unwrap_or_else(|| panic!("vperc {args:?} exited with {code}"));
    let check = vperc::manifest(&dir).unwrap().check.map(|c| (c.passed, c.detail));
    (code, dir, check)
}

fn checked(name: &str, args: &[&str]) {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, check) = vperc(tmp.path(), args);
    let (passed, detail) = check.expect("command records a check");
    report(name, passed && code == 0, &detail);
    assert!(passed && code == 0, "{name}: {detail}");
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn crossing_probability_is_one_half() {
    checked(
        "crossing duality on the validated raster",
        &[
            "crossing", "--p", "0.5", "--n", "4,8,16", "--trials", "4000", "--engine", "raster", "--h", "0.1",
            "--pitch-trials", "400", "--check", "--seed", "11",
        ],
    );
}

#[test]
fn critical_point_bracket_contains_one_half() {
    checked(
        "critical point",
        &[
            "pc", "--d", "2", "--engine", "delaunay", "--sizes", "8,16", "--trials", "2000", "--tolerance", "0.02",
            "--expect", "0.5", "--check", "--seed", "12",
        ],
    );
}

#[test]
fn subcritical_decay_is_exponential_and_critical_is_flat() {
    checked(
        "subcritical decay",
        &[
            "decay", "--p", "0.35,0.5", "--n-min", "4", "--n-max", "24", "--trials", "20000", "--engine", "delaunay",
            "--factor", "5", "--check", "--seed", "13",
        ],
    );
}

#[test]
fn finite_difference_matches_pivotal_count() {
    let spec = EventSpec::new(EventKind::OriginToSphere { n: 4.0 }, Engine::Delaunay2d);
    let mut all = true;
    let mut parts = Vec::new();
    for (i, p) in [0.4, 0.5, 0.6].into_iter().enumerate() {
        let r = russo_check(2, p, &spec, 0.02, 20000, 14 + i as u64).unwrap();
        all &= r.holds;
        parts.push(format!(
            "p = {p}: derivative {:.3}, pivotal {:.3}, difference {:.3} ± {:.3}",
            r.derivative.mean, r.pivotal.mean, r.difference.mean, r.difference.stderr
        ));
    }
    report("russo identity", all, &parts.join("; "));
    assert!(all);
}

#[test]
fn osss_exact_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = tmp.path().join("and2.json");
    fs::write(
        &inst,
        r#"{"alphabets": [2, 2], "probabilities": [["1/2", "1/2"], ["1/2", "1/2"]], "truth_table": [0, 0, 0, 1],
            "tree": {"query": 0, "children": [{"leaf": false}, {"query": 1, "children": [{"leaf": false}, {"leaf": true}]}]}}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let (code, dir, check) = vperc(&out, &["osss-exact", "--instance", inst.to_str().unwrap(), "--check"]);
    let r = json(&dir.join("report.json"));
    let and_ok = code == 0 && check.unwrap().0 && r["variance"] == "3/16" && r["rhs"] == "3/8";
    let (code, dir, check) =
        vperc(&out, &["osss-exact", "--random", "1000", "--max-coords", "4", "--check", "--seed", "15"]);
    let s = json(&dir.join("summary.json"));
    let batch_ok = code == 0 && check.unwrap().0 && s["failures"] == 0;
    let detail = format!(
        "AND of two bits: Var {} RHS {}; {} failures on {} random instances, smallest slack {}",
        r["variance"], r["rhs"], s["failures"], s["instances"], s["min_slack"]
    );
    report("osss exact oracle", and_ok && batch_ok, &detail);
    assert!(and_ok && batch_ok, "{detail}");
}

#[test]
fn osss_inequality_on_voronoi() {
    checked(
        "osss on voronoi",
        &[
            "osss-voronoi", "--p", "0.5", "--n", "8", "--k", "4", "--eps", "0.5", "--h", "0.1", "--trials", "400",
            "--check", "--seed", "16",
        ],
    );
}

#[test]
fn exploration_decides_the_event() {
    checked(
        "exploration correctness",
        &[
            "explore", "--p", "0.3,0.5,0.7", "--n", "8", "--k", "4", "--eps", "0.5", "--h", "0.1", "--trials", "334",
            "--check", "--seed", "17",
        ],
    );
}

#[test]
fn revealment_ratio_is_stable_across_start_radii() {
    checked(
        "revealment bound shape",
        &[
            "explore", "--p", "0.5", "--n", "8", "--k", "2,4,6", "--eps", "0.5", "--h", "0.1", "--trials", "1000",
            "--check", "--seed", "18",
        ],
    );
}

#[test]
fn differential_inequality_constant_is_positive() {
    checked(
        "differential inequality",
        &[
            "mlem", "--p-lo", "0.3", "--p-hi", "0.7", "--p-steps", "9", "--n-max", "16", "--trials", "4000",
            "--engine", "delaunay", "--check", "--seed", "19",
        ],
    );
}

#[test]
fn sequence_families_split_at_beta1() {
    checked("lemma dichotomy", &["lemma", "--n-max", "64", "--margin", "0.05", "--tolerance", "0.02", "--check"]);
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        files.insert(e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap());
    }
    files
}

#[test]
fn every_subcommand_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = tmp.path().join("dictator.json");
    fs::write(
        &inst,
        r#"{"alphabets": [3], "probabilities": [["0.2", "0.3", "0.5"]], "truth_table": [0, 1, 1],
            "tree": {"query": 0, "children": [{"leaf": false}, {"leaf": true}, {"leaf": true}]}}"#,
    )
    .unwrap();
    let inst = inst.to_str().unwrap().to_string();
    let runs: Vec<Vec<&str>> = vec![
        vec!["sample", "--l", "3", "--h", "0.25"],
        vec!["theta", "--p", "0.4,0.6", "--n", "2,3", "--trials", "100"],
        vec!["crossing", "--n", "3", "--trials", "100", "--engine", "raster", "--h", "0.2", "--pitch-trials", "20"],
        vec!["influence", "--n", "2", "--eps", "1", "--trials", "10", "--dp", "0.05"],
        vec!["explore", "--n", "4", "--k", "2,3", "--trials", "10"],
        vec!["osss-exact", "--instance", &inst],
        vec!["osss-exact", "--random", "20"],
        vec!["osss-voronoi", "--n", "4", "--k", "2", "--trials", "5"],
        vec!["pc", "--sizes", "3", "--trials", "100", "--tolerance", "0.1", "--lo", "0.2", "--hi", "0.8"],
        vec!["decay", "--n-min", "1", "--n-max", "6", "--trials", "300"],
        vec!["mlem", "--n-max", "4", "--p-steps", "3", "--trials", "100"],
        vec!["lemma", "--n-max", "16"],
    ];
    let mut mismatched = Vec::new();
    let mut plot_dirs: [Vec<String>; 2] = [vec![], vec![]];
    for args in &runs {
        let mut snaps = Vec::new();
        for (copy, dirs) in plot_dirs.iter_mut().enumerate() {
            let out = tmp.path().join(format!("run{copy}"));
            let mut a = args.clone();
            a.extend(["--seed", "21", "--threads", if copy == 0 { "1" } else { "2" }]);
            let (_, dir, _) = vperc(&out, &a);
            if matches!(args[0], "decay" | "theta" | "explore" | "influence") {
                dirs.push(dir.display().to_string());
            }
            snaps.push((dir.file_name().unwrap().to_owned(), snapshot(&dir)));
        }
        if snaps[0] != snaps[1] {
            mismatched.push(args[0].to_string());
        }
    }
    let mut snaps = Vec::new();
    for (copy, dirs) in plot_dirs.iter().enumerate() {
        let mut a: Vec<&str> = vec!["plots"];
        a.extend(dirs.iter().map(|s| s.as_str()));
        let (_, dir, _) = vperc(&tmp.path().join(format!("plots{copy}")), &a);
        snaps.push(snapshot(&dir));
    }
    if snaps[0] != snaps[1] {
        mismatched.push("plots".into());
    }
    let detail = if mismatched.is_empty() {
        format!("{} runs reproduced byte for byte", runs.len() + 1)
    } else {
        format!("outputs differ for {mismatched:?}")
    };
    report("determinism", mismatched.is_empty(), &detail);
    assert!(mismatched.is_empty(), "{detail}");
}
