use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sgp_cli::commands::RunRecord;
use sgp_cli::table::SolutionTable;
use sgp_cli::RunConfig;

fn sgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn value_of(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).filter(|r| r.starts_with(' ')))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn bundled_config_solves_and_certifies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = sgp(&[
        "solve",
        "--config",
        path_str(&bundled("p2.toml")),
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("certificate: pass"));
    let plus = SolutionTable::read(&out.join("plus.tsv")).unwrap();
    let minus = SolutionTable::read(&out.join("minus.tsv")).unwrap();
    assert_eq!(plus.level, 5);
    assert_eq!(minus.level, 5);
    for name in ["plus_u.svg", "plus_v.svg", "minus_u.svg", "minus_v.svg"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let record: RunRecord =
        serde_json::from_str(&std::fs::read_to_string(out.join("certificate.json")).unwrap())
            .unwrap();
    assert!(record.certificate.pass);
    assert_eq!(record.config.rp, Some(0.6000000000000001));
    assert!(record.config.lambda.is_some() && record.config.gamma.is_some());
    assert_eq!(
        record.config.certify.grad_tol,
        record.config.solver.grad_tol
    );
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let cfg = write_config(
        dir.path(),
        "level = 3\nrender = false\nperturbation_check = false\n[solver]\nstarts = 4\n",
    );
    let o = sgp(&[
        "solve",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&first),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let read = |d: &Path| -> RunRecord {
        serde_json::from_str(&std::fs::read_to_string(d.join("certificate.json")).unwrap()).unwrap()
    };
    let rec = read(&first);
    let second = dir.path().join("second");
    let mut echoed: RunConfig = rec.config.clone();
    echoed.out = second.clone();
    let echo_path = dir.path().join("echo.toml");
    std::fs::write(&echo_path, echoed.to_toml()).unwrap();
    let o = sgp(&["solve", "--config", path_str(&echo_path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let again = read(&second);
    assert_eq!(again.certificate, rec.certificate);
    for name in ["plus.tsv", "minus.tsv"] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap()
        );
    }
}

#[test]
fn solution_tables_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "level = 3\nrender = false\nperturbation_check = false\n[solver]\nstarts = 2\n",
    );
    let o = sgp(&["solve", "--config", path_str(&cfg), "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = SolutionTable::read(&out.join("minus.tsv")).unwrap();
    let copy = dir.path().join("copy.tsv");
    t.write(&copy).unwrap();
    assert_eq!(
        std::fs::read(&copy).unwrap(),
        std::fs::read(out.join("minus.tsv")).unwrap()
    );
    assert_eq!(SolutionTable::read(&copy).unwrap(), t);
}

#[test]
fn ordering_violation_exits_one_naming_h1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "level = 3\nq = 2.5\n");
    let o = sgp(&[
        "solve",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("H1"), "{}", stderr(&o));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn zero_coupling_exits_one_naming_h_norm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "level = 3\n[coefficients]\nh = { kind = \"constant\", value = 0.0 }\n",
    );
    let o = sgp(&["solve", "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("||h||_1 > 0"), "{}", stderr(&o));
}

#[test]
fn parameters_outside_lambda0_exit_one_naming_h2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "level = 3\nlambda = 50.0\ngamma = 50.0\n");
    let o = sgp(&["solve", "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("H2"), "{}", stderr(&o));
}

#[test]
fn solver_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // No concave term: the plus branch has no admissible start.
    let cfg = write_config(dir.path(), "level = 3\nlambda = 0.0\ngamma = 0.0\n");
    let o = sgp(&[
        "solve",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("plus branch"), "{}", stderr(&o));
}

#[test]
fn certificate_failure_exits_three_after_writing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(
        dir.path(),
        "level = 3\nrender = false\nperturbation_check = false\n[solver]\nstarts = 2\nmax_outer_iters = 1\n",
    );
    let o = sgp(&["solve", "--config", path_str(&cfg), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("weak residual"), "{}", stderr(&o));
    assert!(out.join("certificate.json").exists());
}

#[test]
fn malformed_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "levle = 3\n");
    assert_eq!(
        sgp(&["solve", "--config", path_str(&cfg)]).status.code(),
        Some(1)
    );
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        sgp(&["constants", "--config", path_str(&missing)])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn rp_prints_three_fifths_for_p2() {
    for max_level in ["4", "2"] {
        let o = sgp(&["rp", "--p", "2", "--max-level", max_level]);
        assert!(o.status.success());
        let rp = value_of(&stdout(&o), "rp =");
        assert!((rp - 0.6).abs() < 1e-9, "{rp}");
    }
}

#[test]
fn rp_for_p3_reports_spread_or_note() {
    let o = sgp(&["rp", "--p", "3", "--max-level", "5", "--tol", "1e-8"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let spread = value_of(&text, "spread =");
    assert!(spread < 1e-8 || text.contains("note:"), "{text}");
    let rp = value_of(&text, "rp =");
    assert!(rp > 0.28 && rp < 0.30, "{rp}");
}

#[test]
fn constants_with_unit_k_match_closed_form() {
    let o = sgp(&["constants", "--k-override", "1", "--level", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let kappa = value_of(&text, "kappa");
    let kappa0 = value_of(&text, "kappa0");
    assert!((kappa - 0.3849001794597505).abs() < 1e-12, "{kappa}");
    assert!((kappa0 - 0.75 * kappa).abs() < 1e-15);
    for key in ["a_l1", "b_l1", "h_l1"] {
        assert!((value_of(&text, key) - 1.0).abs() < 1e-12);
    }
    assert!(text.contains("region       inside Lambda0"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "level = 3\nlambda = 0.3\ngamma = 0.0\n");
    let o = sgp(&["constants", "--config", path_str(&cfg), "--k-override", "1"]);
    assert!(
        stdout(&o).contains("inside Lambda, outside Lambda0"),
        "{}",
        stdout(&o)
    );
    let cfg = write_config(dir.path(), "level = 3\nlambda = 0.2\ngamma = 0.2\n");
    let o = sgp(&["constants", "--config", path_str(&cfg), "--k-override", "1"]);
    assert!(stdout(&o).contains("outside Lambda"), "{}", stdout(&o));
}

fn sweep_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(sgp_cli::commands::SWEEP_HEADER));
    lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const SWEEP_BASE: &str =
    "level = 4\nrender = false\nperturbation_check = false\n[solver]\nstarts = 4\n";

#[test]
fn sweep_inside_lambda0_passes_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(dir.path(), SWEEP_BASE);
    let o = sgp(&[
        "sweep",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out),
        "--lambda-range",
        "0.1,0.8",
        "--gamma-range",
        "0.1,0.8",
        "--grid",
        "3",
        "--workers",
        "2",
    ]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let rows = sweep_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 9);
    let expected = [0.1, 0.45, 0.8];
    for (i, r) in rows.iter().enumerate() {
        let lambda: f64 = r[0].parse().unwrap();
        let gamma: f64 = r[1].parse().unwrap();
        assert!(
            (lambda - expected[i / 3]).abs() < 1e-12 && (gamma - expected[i % 3]).abs() < 1e-12
        );
        let i_plus: f64 = r[2].parse().unwrap();
        let i_minus: f64 = r[3].parse().unwrap();
        let d0: f64 = r[4].parse().unwrap();
        assert!(i_plus < 0.0 && i_minus >= d0 && d0 > 0.0);
        assert_eq!((r[5].as_str(), r[6].as_str()), ("true", "ok"));
    }
}

#[test]
fn sweep_marks_points_outside_lambda0() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(dir.path(), SWEEP_BASE);
    let o = sgp(&[
        "sweep",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out),
        "--lambda-range",
        "0.5,3",
        "--gamma-range",
        "0.5,3",
        "--grid",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = sweep_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][6], "ok");
    for r in &rows[1..] {
        assert_eq!(r[6], "H2-fail");
        assert_eq!(r[5], "false");
        assert!(r[2].is_empty() && r[3].is_empty());
    }
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(dir.path(), SWEEP_BASE);
    let o = sgp(&[
        "sweep",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out),
        "--lambda-range",
        "1,0",
        "--gamma-range",
        "0,1",
        "--grid",
        "3",
    ]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read_to_string(out.join("sweep.csv")).unwrap(),
        format!("{}\n", sgp_cli::commands::SWEEP_HEADER)
    );
}

fn polygon_fills(svg: &str) -> Vec<String> {
    svg.match_indices("<polygon")
        .map(|(i, _)| {
            let rest = &svg[i..];
            let f = rest.find("fill=\"").unwrap() + 6;
            rest[f..f + 7].to_string()
        })
        .collect()
}

#[test]
fn render_draws_one_triangle_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let g = sgp_core::GasketGraph::standard(3).unwrap();
    let u = sgp_core::VertexField::from_fn(&g, |k| (k as f64).sin());
    let v = sgp_core::VertexField::constant(3, 2.5);
    let table = dir.path().join("t.tsv");
    SolutionTable::new(&g, &u, &v)
        .unwrap()
        .write(&table)
        .unwrap();

    let svg_u = dir.path().join("u.svg");
    let o = sgp(&["render", path_str(&table), path_str(&svg_u)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&svg_u).unwrap();
    assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    assert_eq!(polygon_fills(&text).len(), 27);
    assert!(text.contains("data range"));

    let svg_v = dir.path().join("v.svg");
    let o = sgp(&["render", path_str(&table), path_str(&svg_v), "--field", "v"]);
    assert!(o.status.success());
    let fills = polygon_fills(&std::fs::read_to_string(&svg_v).unwrap());
    assert_eq!(fills.len(), 27);
    assert!(fills.iter().all(|f| f == &fills[0]));
}

#[test]
fn render_of_missing_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = sgp(&[
        "render",
        path_str(&dir.path().join("none.tsv")),
        path_str(&dir.path().join("x.svg")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}
