use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn dilatlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dilatlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.cfg"), config).unwrap();
    dir
}

fn run_kind(dir: &Path, kind: &str) -> Output {
    dilatlab(dir, &[kind, "--config", "exp.cfg", "--out", "out"])
}

fn report(dir: &Path, kind: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out").join(format!("{kind}.json"))).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn euclidean_axioms_pass() {
    let dir = setup("[axioms]\nstructure = euclidean:k=2\n");
    let o = run_kind(dir.path(), "axioms");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path(), "axioms");
    assert_eq!(r["schema"], 1);
    assert_eq!(r["pass"], true);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    let csv = std::fs::read_to_string(dir.path().join("out/axioms-A3.csv")).unwrap();
    assert!(csv.starts_with("eps,value,residual\n0.5,"));
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn unknown_structure_exits_2() {
    let dir = setup("[axioms]\nstructure = unknown:foo\n");
    let o = run_kind(dir.path(), "axioms");
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("unknown structure"), "{err}");
    assert!(err.contains("line 2") && err.contains("`structure`"), "{err}");
    assert!(!dir.path().join("out/axioms.json").exists());
}

#[test]
fn validation_failures_exit_2_with_pointer() {
    for (config, kind, needle) in [
        ("[axioms]\nstructure = euclidean:k=2\nwobble = 3\n", "axioms", "line 3, key `wobble`"),
        ("seed = -1\n[axioms]\n", "axioms", "line 1, key `seed`"),
        ("[axioms]\nladder = dyadic:4,2\n", "axioms", "line 2, key `ladder`"),
        ("[rnp]\n", "axioms", "no [axioms] section"),
        ("[axioms]\n", "nonsense", "unknown experiment kind"),
        ("[axioms]\nbase = 1,2,3\n", "axioms", "line 2, key `base`"),
    ] {
        let dir = setup(config);
        let o = run_kind(dir.path(), kind);
        assert_eq!(o.status.code(), Some(2), "{config}");
        assert!(stderr(&o).contains(needle), "{config}: {}", stderr(&o));
    }
}

#[test]
fn rotational_rnp_fails_with_report() {
    let dir = setup("[rnp]\nstructure = rotational:theta=1.0\nprobes = 8\n");
    let o = run_kind(dir.path(), "rnp");
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let r = report(dir.path(), "rnp");
    assert_eq!(r["pass"], false);
    assert_eq!(r["results"]["rnp"]["fraction"], 0.0);
}

#[test]
fn reports_are_byte_identical_under_a_seed() {
    let config = "seed = 11\n[metric]\npoints = 12\n[gh]\na = a.txt\nb = b.txt\n[groupoid]\npoints = 5\ngroup = free:rank=2\n";
    let dir = setup(config);
    std::fs::write(dir.path().join("a.txt"), "3\n0 1 2\n1 0 1.5\n2 1.5 0\nbase 0\n").unwrap();
    std::fs::write(dir.path().join("b.txt"), "3\n0 1.2 2\n1.2 0 1\n2 1 0\nbase 0\n").unwrap();
    let snapshot = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = std::fs::read_dir(dir.join("out"))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let mut runs = Vec::new();
    for _ in 0..2 {
        for kind in ["metric", "gh", "groupoid"] {
            let o = run_kind(dir.path(), kind);
            assert_eq!(o.status.code(), Some(0), "{kind}: {}", stderr(&o));
        }
        runs.push(snapshot(dir.path()));
        std::fs::remove_dir_all(dir.path().join("out")).unwrap();
    }
    assert_eq!(runs[0], runs[1]);
    run_kind(dir.path(), "gh");
    assert_eq!(report(dir.path(), "gh")["seed"], 11);
    // The command-line seed overrides the config.
    dilatlab(dir.path(), &["gh", "--config", "exp.cfg", "--out", "out", "--seed", "5"]);
    assert_eq!(report(dir.path(), "gh")["seed"], 5);
}

#[test]
fn gh_direct_mode_prints_result() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.txt"), "2\n0 1\n1 0\nbase 0\n").unwrap();
    std::fs::write(dir.path().join("b.txt"), "2\n0 1.5\n1.5 0\nbase 0\n").unwrap();
    let o = dilatlab(dir.path(), &["gh", "--a", "a.txt", "--b", "b.txt", "--mode", "exact", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["mu"].as_f64().unwrap() - 0.5).abs() <= 1e-9);
    assert!(v["relation"].is_array() && v["breakdown"].is_object());
    let o = dilatlab(dir.path(), &["gh", "--a", "a.txt", "--mode", "exact"]);
    assert_eq!(o.status.code(), Some(2));
    let o = dilatlab(dir.path(), &["gh", "--a", "a.txt", "--b", "b.txt", "--mode", "fuzzy"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn every_kind_runs() {
    let config = "\
[metric]
points = 6
[groupoid]
points = 4
group = reals:k=3
[gh]
a = a.txt
b = a.txt
mode = exact
max_mu = 0
[length]
curve = seg.csv
from = 0,0
to = 3,4
nodes = 8
restarts = 2
[axioms]
structure = rotational:theta=1.0
axioms = A0,A1,A2,A3
[tangent]
ladder = dyadic:1,12
profile_ladder = dyadic:1,3
mu = 0.4
[profile]
space = snowflake
base = 0
mu = 0.4
cone_scales = 1,0.5
[rnp]
battery = battery.txt
[tempered]
distance_scale = 2
per_axis = 3
[gamma]
eps = dyadic:1,6
[equivalence]
structure = euclidean:k=2,norm=l2
other = euclidean:k=2,norm=linf
per_axis = 3
";
    let dir = setup(config);
    std::fs::write(dir.path().join("a.txt"), "3\n0 1 2\n1 0 1.5\n2 1.5 0\nbase 0\n").unwrap();
    std::fs::write(dir.path().join("seg.csv"), "t,x1,x2\n0,0,0\n0.5,1.5,2\n1,3,4\n").unwrap();
    std::fs::write(dir.path().join("battery.txt"), "curve seg.csv\nprobes uniform:4\n").unwrap();
    for kind in [
        "metric", "groupoid", "gh", "length", "axioms", "tangent", "profile", "rnp", "tempered", "gamma", "equivalence",
    ] {
        let o = run_kind(dir.path(), kind);
        assert_eq!(o.status.code(), Some(0), "{kind}: {}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
        let r = report(dir.path(), kind);
        assert_eq!(r["kind"], kind);
        assert_eq!(r["pass"], true);
    }
    let t = report(dir.path(), "tempered");
    assert!((t["results"]["tempered"]["c_hat"].as_f64().unwrap() - 2.0).abs() <= 1e-9);
    let l = report(dir.path(), "length");
    assert!((l["results"]["length_distance"]["length"].as_f64().unwrap() - 5.0).abs() <= 1e-6);
    assert!(dir.path().join("out/profile-snapshot.txt").exists());
}

#[test]
fn length_formula_refuses_without_rnp() {
    let dir = setup("[length]\nstructure = rotational:theta=1.0\nfrom = 0,0\nto = 0.5,0\nformula = true\nnodes = 4\nrestarts = 1\n");
    let o = run_kind(dir.path(), "length");
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let r = report(dir.path(), "length");
    assert!(r["results"]["length_formula"]["refused"].is_string());
}

#[test]
fn equivalence_failure_exits_1() {
    let dir = setup("[equivalence]\nstructure = euclidean:k=2\nother = rotational:theta=1.0\nper_axis = 3\nladder = dyadic:1,12\n");
    let o = run_kind(dir.path(), "equivalence");
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert_eq!(report(dir.path(), "equivalence")["results"]["equivalence"]["equivalent"], false);
}

#[test]
fn config_fuzz_seeds_parse_or_point_at_a_line() {
    use dilatlab_cli::config::Config;
    use dilatlab_cli::error::CliError;
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/config");
    for e in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(e.unwrap().path()).unwrap();
        match Config::parse(&text, Path::new(".")) {
            Ok(_) => {}
            Err(CliError::Config { line, .. }) => assert!(line >= 1 && line <= text.lines().count()),
            Err(other) => panic!("{other}"),
        }
    }
}
