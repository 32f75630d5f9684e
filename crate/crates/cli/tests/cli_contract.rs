use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn pcap(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcap"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("PCAP_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `key=value` from the one-line summaries.
fn field(text: &str, key: &str) -> f64 {
    text.split_whitespace()
        .chain(text.lines())
        .find_map(|t| t.strip_prefix(&format!("{key}=")))
        .and_then(|v| v.split_whitespace().next())
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').filter_map(|v| v.parse().ok()).collect())
        .collect();
    (header, rows)
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const SQUARE: &str = "polygon:0,0;1,0;1,1;0,1";

#[test]
fn solve_interval_midpoint() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &[
            "solve",
            "--domain",
            "interval:0,1",
            "--p",
            "2",
            "--pole",
            "0.5",
            "--n",
            "64",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("s_p="), "{out}");
    assert!((field(&out, "s_p") - 0.5).abs() < 1e-12);
    assert!((field(&out, "mu_p") - 4.0).abs() < 1e-10);

    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(result["vertices"], 65);
    let (header, rows) = csv(&dir.path().join("u_field.csv"));
    assert_eq!(header, ["vertex", "x", "u"]);
    assert_eq!(rows.len(), 65);
    for r in &rows {
        let exact = 1.0 - 2.0 * (r[1] - 0.5).abs();
        assert!((r[2] - exact).abs() < 1e-10);
    }
    let m = manifest(dir.path());
    assert_eq!(m["command"], "solve");
    assert_eq!(m["exit_status"], 0);
    assert_eq!(m["config"]["p"], "2");
    assert_eq!(m["artifacts"].as_array().unwrap().len(), 2);
}

#[test]
fn solve_disk_center_within_two_percent() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &[
            "solve",
            "--domain",
            "disk:0,0,1",
            "--p",
            "4",
            "--pole",
            "0,0",
            "--h",
            "0.05",
            "--levels",
            "3",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = field(&stdout(&o), "s_p");
    assert!((s - 0.856).abs() / 0.856 < 0.02, "{s}");
    let (header, _) = csv(&dir.path().join("u_field.csv"));
    assert_eq!(header, ["vertex", "x", "y", "u"]);
}

#[test]
fn exponent_at_or_below_dimension_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &[
            "solve",
            "--domain",
            "disk:0,0,1",
            "--p",
            "1.5",
            "--pole",
            "0,0",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("p must exceed N"), "{}", stderr(&o));
    let m = manifest(dir.path());
    assert_eq!(m["exit_status"], 2);
    assert!(m["artifacts"].as_array().unwrap().is_empty());
}

#[test]
fn solver_failure_exits_one() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &[
            "solve",
            "--domain",
            "disk:0,0,1",
            "--p",
            "4",
            "--pole",
            "0,0",
            "--max-iters",
            "1",
        ],
    );
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert_eq!(manifest(dir.path())["exit_status"], 1);
}

#[test]
fn field_on_interval_grid_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &[
            "field",
            "--domain",
            "interval:0,1",
            "--poles",
            "grid:9",
            "--p",
            "2",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("sp_field.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "p,pole_x,pole_y,s_p,mu_p,d_omega,lower_bound,upper_bound,provenance"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);
    for r in rows {
        let x: f64 = r[1].parse().unwrap();
        let s: f64 = r[3].parse().unwrap();
        assert!((s - (x * (1.0 - x)).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn field_on_square_grid_respects_bounds() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &[
            "field",
            "--domain",
            SQUARE,
            "--poles",
            "grid:5,5",
            "--p",
            "4",
            "--emit-plot",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = csv(&dir.path().join("sp_field.csv"));
    assert_eq!(rows.len(), 25);
    for r in rows {
        // p, x, y, s, mu, d, lower, upper
        assert!(r[6] <= r[3] && r[3] <= r[7], "{r:?}");
    }
    assert!(dir.path().join("sp_field.gp").exists());
}

#[test]
fn field_with_no_pole_left_after_clearance_exits_two() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &[
            "field",
            "--domain",
            SQUARE,
            "--poles",
            "grid:5,5,0.6",
            "--p",
            "4",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_interval_gap_shrinks() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &[
            "sweep",
            "--domain",
            "interval:0,1",
            "--pole",
            "0.25",
            "--p-list",
            "2,5,10,50,200",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv(&dir.path().join("sweep.csv"));
    assert_eq!(header, ["p", "s_p", "s_p_weighted", "d_omega", "gap"]);
    assert!(rows.windows(2).all(|w| w[1][4] < w[0][4]));
    assert!(rows.last().unwrap()[4] < 1e-2);
}

#[test]
fn sweep_disk_weighted_column_is_nonincreasing() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &[
            "sweep",
            "--domain",
            "disk:0,0,1",
            "--pole",
            "0,0",
            "--p-list",
            "3,4,6,10,50",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = csv(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows.windows(2).all(|w| w[1][2] <= w[0][2]));
}

#[test]
fn sweep_needs_two_exponents() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &[
            "sweep",
            "--domain",
            "interval:0,1",
            "--pole",
            "0.25",
            "--p",
            "2",
        ],
    );
    assert_eq!(code(&o), 2);
    let o = pcap(
        dir.path(),
        &[
            "sweep",
            "--domain",
            "interval:0,1",
            "--pole",
            "0.25",
            "--p",
            "5,2",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_oracle_suite_passes() {
    let dir = TempDir::new().unwrap();
    let o = pcap(dir.path(), &["verify", "--suite", "oracle"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["exit_code"], 0);
    assert_eq!(report["tolerances"]["oracle"], 1e-12);
    let reports = report["reports"].as_array().unwrap();
    assert!(!reports.is_empty());
    assert!(reports.iter().all(|r| r["pass"] == true));
}

#[test]
fn verify_all_on_square_passes_on_defaults() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &["verify", "--suite", "all", "--domain", SQUARE],
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let out = stdout(&o);
    for name in [
        "holder",
        "bounds",
        "concavity",
        "pointwise",
        "cone-comparison",
        "up-convergence",
    ] {
        assert!(
            out.contains(&format!("PASS {name} ")),
            "{name} missing:\n{out}"
        );
    }
    assert!(dir.path().join("lattice_field.csv").exists());
}

#[test]
fn verify_unknown_suite_exits_two() {
    let dir = TempDir::new().unwrap();
    let o = pcap(dir.path(), &["verify", "--suite", "nope"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn tolerance_overrides_reach_the_report() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &["verify", "--suite", "oracle", "--tol", "holder=0.07"],
    );
    assert_eq!(code(&o), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["tolerances"]["holder"], 0.07);
    let o = pcap(
        dir.path(),
        &["verify", "--suite", "oracle", "--tol", "nonsense=1"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn infinity_suite_compares_a_stored_solve() {
    let dir = TempDir::new().unwrap();
    let solved = dir.path().join("solve");
    let o = pcap(
        &solved,
        &[
            "solve",
            "--domain",
            "disk:0,0,1",
            "--p",
            "50",
            "--pole",
            "0,0",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let result = solved.join("result.json");
    let o = pcap(
        &dir.path().join("verify"),
        &[
            "verify",
            "--suite",
            "infinity",
            "--compare-with",
            result.to_str().unwrap(),
            "--lattice-h",
            "0.02",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS up-convergence"));
    let (header, rows) = csv(&dir.path().join("verify").join("lattice_field.csv"));
    assert_eq!(header, ["i", "j", "x", "y", "u"]);
    let pole = rows.iter().find(|r| r[0] == 0.0 && r[1] == 0.0).unwrap();
    assert_eq!(pole[4], 1.0);
}

#[test]
fn oracle_values_and_guard() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &[
            "oracle", "--case", "interval", "--a", "0", "--b", "1", "--x", "0.25", "--p", "2",
        ],
    );
    assert_eq!(code(&o), 0);
    assert!((field(&stdout(&o), "s_p") - 0.4330127).abs() < 1e-7);
    let o = pcap(
        dir.path(),
        &[
            "oracle", "--case", "ball", "--N", "2", "--R", "1", "--p", "4",
        ],
    );
    assert_eq!(code(&o), 0);
    assert!((field(&stdout(&o), "s_p") - 0.8561).abs() < 1e-4);
    let o = pcap(
        dir.path(),
        &["oracle", "--case", "ball", "--N", "2", "--p", "2"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "domain = \"interval:0,1\"\np = 3\npole = 0.5\nn = 16\n",
    )
    .unwrap();
    let out = dir.path().join("a");
    let o = pcap(
        &out,
        &["solve", "--config", cfg.to_str().unwrap(), "--p", "2"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!((field(&stdout(&o), "s_p") - 0.5).abs() < 1e-12);
    let m = manifest(&out);
    assert_eq!(m["config"]["p"], "2");
    assert_eq!(m["config"]["n"], "16");

    fs::write(&cfg, "domain = \"interval:0,1\"\nbogus = 1\n").unwrap();
    let o = pcap(
        &dir.path().join("b"),
        &["solve", "--config", cfg.to_str().unwrap()],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pcap"))
        .args(["oracle", "--case", "interval", "--p", "3"])
        .env("PCAP_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("oracle.txt").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn mesh_dump_lists_vertices_and_pole() {
    let dir = TempDir::new().unwrap();
    let o = pcap(
        dir.path(),
        &[
            "solve",
            "--domain",
            SQUARE,
            "--p",
            "4",
            "--pole",
            "0.5,0.5",
            "--dump-mesh",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("mesh.txt")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("v ")));
    assert!(text.lines().any(|l| l.starts_with("pole ")));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let args = [
        "field",
        "--domain",
        SQUARE,
        "--poles",
        "grid:3,3",
        "--p",
        "4",
        "--seed",
        "11",
        "--threads",
        "3",
    ];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&pcap(&a, &args)), 0);
    assert_eq!(code(&pcap(&b, &args)), 0);
    assert_eq!(
        fs::read(a.join("sp_field.csv")).unwrap(),
        fs::read(b.join("sp_field.csv")).unwrap()
    );
}
