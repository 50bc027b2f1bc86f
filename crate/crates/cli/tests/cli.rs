use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn cyphy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cyphy")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const PATH4: &str = "
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	100	1	1.1	0.9;
	2	1	10	2	0	0	1	1	0	100	1	1.1	0.9;
	3	1	10	2	0	0	1	1	0	100	1	1.1	0.9;
	4	1	10	2	0	0	1	1	0	100	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	50	-50	1	100	1	100	0;
];
mpc.branch = [
	1	2	0.01	0.05	0	0	0	0	0	0	1	-360	360;
	2	3	0.01	0.05	0	0	0	0	0	0	1	-360	360;
	3	4	0.01	0.05	0	0	0	0	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.01	10	0;
];
";

const PATH4_SCENARIO: &str = "
[horizon]
periods = 2
period_hours = 1.0

[cyber]
critical_nodes = [1, 4]
root = 1
";

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn validate_reports_counts() {
    let o = cyphy(&[
        "validate",
        "--case",
        path(&data("case14.m")),
        "--scenario",
        path(&data("ieee14_attack.toml")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("buses=14 lines=20 gens=5"), "{out}");
    assert!(out.contains("critical=1,2,3,6,8 root=1"), "{out}");
    assert!(out.contains("attack period=6 cyber_node=6 generator_bus=6"), "{out}");
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.m");
    let o = cyphy(&["validate", "--case", path(&missing), "--scenario", path(&data("ieee14_attack.toml"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nowhere.m"), "{}", stderr(&o));

    let text = fs::read_to_string(data("ieee14_attack.toml")).unwrap();
    let bad = write(dir.path(), "bad.toml", &text.replace("power = 1.0", "power = 0.0"));
    let o = cyphy(&["validate", "--case", path(&data("case14.m")), "--scenario", path(&bad)]);
    assert_eq!(code(&o), 1);

    let case = fs::read_to_string(data("case14.m")).unwrap();
    let dup = case.replacen("\t2\t2\t21.7", "\t1\t2\t21.7", 1);
    assert_ne!(dup, case);
    let dup = write(dir.path(), "dup.m", &dup);
    let o = cyphy(&["validate", "--case", path(&dup), "--scenario", path(&data("ieee14_attack.toml"))]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    let quiet = write(dir.path(), "quiet.toml", PATH4_SCENARIO);
    let case4 = write(dir.path(), "path4.m", PATH4);
    let out = dir.path().join("out");
    let o = cyphy(&[
        "run", "--case", path(&case4), "--scenario", path(&quiet), "--out", path(&out), "--mode", "attack",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn topology_on_a_path_activates_everything() {
    let dir = tempfile::tempdir().unwrap();
    let case4 = write(dir.path(), "path4.m", PATH4);
    let sc = write(dir.path(), "s.toml", PATH4_SCENARIO);
    let o = cyphy(&["topology", "--case", path(&case4), "--scenario", path(&sc), "--out", path(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // 4 nodes and 3 links at unit cost
    assert!(stdout(&o).contains("f_cyber=7"), "{}", stdout(&o));
    let (header, rows) = read_csv(&dir.path().join("topology_pre.csv"));
    assert_eq!(header, ["from", "to", "cost", "flow"]);
    let edges: Vec<(String, String)> = rows.iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    let expected = [("1", "2"), ("2", "3"), ("3", "4")].map(|(a, b)| (a.to_string(), b.to_string()));
    assert_eq!(edges, expected);
}

#[test]
fn disconnected_critical_nodes_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let case4 = write(dir.path(), "path4.m", PATH4);
    let split = PATH4_SCENARIO.replace("root = 1", "root = 1\nlinks = [[1, 2], [3, 4]]");
    let sc = write(dir.path(), "s.toml", &split);
    let o = cyphy(&["topology", "--case", path(&case4), "--scenario", path(&sc), "--out", path(dir.path())]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn ieee14_topology_is_rooted_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = cyphy(&[
        "topology",
        "--case",
        path(&data("case14.m")),
        "--scenario",
        path(&data("ieee14_attack.toml")),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = read_csv(&dir.path().join("topology_pre.csv"));
    let froms: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    let tos: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    // the root has no parent and every other node exactly one
    assert!(!tos.contains(&"1"));
    assert!(froms.contains(&"1"));
    for k in ["2", "3", "6", "8"] {
        assert_eq!(tos.iter().filter(|&&t| t == k).count(), 1, "{k}");
    }
}

#[test]
fn baseline_mode_writes_five_files() {
    let dir = tempfile::tempdir().unwrap();
    let case4 = write(dir.path(), "path4.m", PATH4);
    let sc = write(dir.path(), "s.toml", PATH4_SCENARIO);
    let out = dir.path().join("out");
    let o = cyphy(&[
        "run", "--case", path(&case4), "--scenario", path(&sc), "--out", path(&out), "--mode", "baseline",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["dispatch.csv", "ess.csv", "summary.json", "topology_pre.csv", "voltages.csv"]);
    let (header, rows) = read_csv(&out.join("ess.csv"));
    assert_eq!(header, ["period", "bus", "p_mw", "e_mwh"]);
    assert!(rows.is_empty());
}

#[test]
fn full_run_tables_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = cyphy(&[
        "run",
        "--case",
        path(&data("case14_ess.m")),
        "--scenario",
        path(&data("ieee14_attack.toml")),
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("replacement node 11"));

    let expect = [
        ("dispatch.csv", vec!["period", "generator", "p_mw", "q_mvar"], 12 * 5),
        ("ess.csv", vec!["period", "bus", "p_mw", "e_mwh"], 12),
        ("voltages.csv", vec!["period", "bus", "v_pu"], 12 * 14),
    ];
    for (name, header, rows) in expect {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert!(!text.contains('\r'));
        let (h, r) = read_csv(&out.join(name));
        assert_eq!(h, header, "{name}");
        assert_eq!(r.len(), rows, "{name}");
        // every number parses back to itself
        for row in &r {
            for cell in &row[2..] {
                let v: f64 = cell.parse().unwrap();
                assert_eq!(v.to_string().parse::<f64>().unwrap(), v);
            }
        }
    }
    for name in ["topology_pre.csv", "topology_post.csv"] {
        let (h, r) = read_csv(&out.join(name));
        assert_eq!(h, ["from", "to", "cost", "flow"]);
        assert!(!r.is_empty());
    }

    let s: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let c = &s["costs"];
    let f = |k: &str| c[k].as_f64().unwrap();
    let total = f("alpha_cyber") * f("f_cyber") + f("alpha_power") * f("f_power") + f("alpha_resilience") * f("f_res");
    assert!((total - f("total")).abs() <= 1e-9 * total.abs());
    assert_eq!(s["chosen_candidate"], 11);
    assert_eq!(s["status"]["attacked"], "Converged");
    assert_eq!(s["case"]["buses"], 14);
}
