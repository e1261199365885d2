use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dnm_cli::config::{echo, resolve, ConfigError, ConfigSource, Experiment, Format, Spec};
use dnm_cli::output::{read_csv, write_csv, FAILURE_MANIFEST};
use dnm_cli::run::run_spec;

fn dnm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dnm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn with_file(experiment: Experiment, text: &str, sets: &[String]) -> Result<dnm_cli::config::RunConfig, ConfigError> {
    resolve(
        experiment,
        &ConfigSource {
            file: Some(("test.toml", text)),
            sets,
            full_scale: false,
        },
    )
}

fn toml_table(s: &str) -> toml::Table {
    s.parse().unwrap()
}

/// Keys whose values differ between two TOML documents.
fn differing_keys(a: &toml::Table, b: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    for k in keys {
        let path = format!("{prefix}{k}");
        match (a.get(k), b.get(k)) {
            (Some(toml::Value::Table(x)), Some(toml::Value::Table(y))) => differing_keys(x, y, &format!("{path}."), out),
            (x, y) if x != y => out.push(path),
            _ => {}
        }
    }
}

#[test]
fn empty_file_gives_documented_defaults() {
    for e in Experiment::ALL {
        let from_file = with_file(e, "", &[]).unwrap();
        let bare = resolve(e, &ConfigSource::default()).unwrap();
        assert_eq!(from_file, bare, "{e}");
        assert_eq!(bare.output.formats, vec![Format::Csv, Format::Json, Format::Svg]);
    }
    let Spec::DnmMap(s) = resolve(Experiment::DnmMap, &ConfigSource::default()).unwrap().spec else {
        unreachable!()
    };
    assert_eq!((s.params.g, s.params.gamma_r, s.params.gamma_q), (0.05, 0.005, 0.005));
    assert_eq!((s.integration.dt, s.integration.t_max), (0.01, 3000.0));
    assert_eq!(s.axes.iter().map(|a| a.steps).collect::<Vec<_>>(), vec![21, 21]);
}

#[test]
fn override_changes_only_that_key() {
    let base = echo(&resolve(Experiment::DnmMap, &ConfigSource::default()).unwrap());
    let changed = echo(&with_file(Experiment::DnmMap, "", &["g=0.03".to_string()]).unwrap());
    let mut diff = Vec::new();
    differing_keys(&toml_table(&base), &toml_table(&changed), "", &mut diff);
    assert_eq!(diff, vec!["params.g"]);
}

#[test]
fn unknown_key_reports_path_and_line() {
    let err = with_file(Experiment::Scaling, "[params]\ng = 0.05\ngq = 1\n", &[]).unwrap_err().to_string();
    assert!(err.contains("params.gq") && err.contains("line 3"), "{err}");
    let err = with_file(Experiment::Scaling, "colour = 1\n", &[]).unwrap_err().to_string();
    assert!(err.contains("`colour`") && err.contains("line 1"), "{err}");
    let err = with_file(Experiment::DnmMap, "[sweep]\n[[sweep.axes]]\nparameter = \"g\"\nmin = 0\nmax = 1\nstep = 3\n", &[])
        .unwrap_err()
        .to_string();
    assert!(err.contains("sweep.axes") && err.contains("step"), "{err}");
}

#[test]
fn type_mismatch_and_range_errors_name_the_key() {
    let err = with_file(Experiment::Simulate, "[params]\n\ng = \"strong\"\n", &[]).unwrap_err().to_string();
    assert!(err.contains("params.g") && err.contains("line 3"), "{err}");
    let err = with_file(Experiment::Simulate, "[params]\ngamma_r = -0.1\n", &[]).unwrap_err().to_string();
    assert!(err.contains("params.gamma_r") && err.contains("line 2"), "{err}");
    let err = with_file(Experiment::Simulate, "[integration]\ndt = 0\n", &[]).unwrap_err().to_string();
    assert!(err.contains("integration") && err.contains("dt"), "{err}");
    let err = with_file(Experiment::Simulate, "[params\n", &[]).unwrap_err();
    assert!(matches!(err, ConfigError::Syntax { .. }), "{err}");
    let err = with_file(Experiment::Memristor, "experiment = \"scaling\"\n", &[]).unwrap_err().to_string();
    assert!(err.contains("experiment"), "{err}");
}

#[test]
fn echo_round_trips_for_every_experiment() {
    let sets: Vec<String> = ["g=0.0375", "integration.t_max=123.5", "omega_q=0.9"].map(String::from).to_vec();
    for e in Experiment::ALL {
        let cfg = with_file(e, "workers = 2\n[output]\nformats = [\"csv\"]\n", &sets).unwrap();
        let again = with_file(e, &echo(&cfg), &[]).unwrap();
        assert_eq!(cfg, again, "{e}");
    }
}

#[test]
fn csv_reparses_to_identical_table() {
    let cfg = with_file(
        Experiment::DnmMap,
        "[sweep]\naxes = [{ parameter = \"g\", min = 0.01, max = 0.07, steps = 3 }, { parameter = \"omega_q\", min = 0.9, max = 1.1, steps = 2 }]\n[integration]\nt_max = 200.0\n",
        &[],
    )
    .unwrap();
    let result = run_spec(&cfg.spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let table = result.table("grid").unwrap();
    let path = dir.path().join("grid.csv");
    write_csv(table, &path).unwrap();
    let (headers, rows) = read_csv(&path).unwrap();
    assert_eq!(headers[..3], ["g [omega_r]", "omega_q [omega_r]", "N_D [1]"]);
    assert_eq!(rows.len(), 6);
    for (a, b) in rows.iter().zip(&table.rows) {
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn dnm_map_writes_grid_heatmap_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dnm(
        dir.path(),
        &[
            "dnm-map",
            "--out",
            "res",
            "--set",
            "sweep.axes=[{parameter=\"g\",min=0.0,max=0.06,steps=3},{parameter=\"omega_q\",min=0.9,max=1.1,steps=3}]",
            "--set",
            "integration.t_max=200",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    let (headers, rows) = read_csv(&res.join("dnm-map-grid.csv")).unwrap();
    assert_eq!(rows.len(), 9);
    assert!(headers[2].starts_with("N_D"));
    // Decoupled row.
    assert!(rows[..3].iter().all(|r| r[2].abs() < 1e-12));
    let svg = fs::read_to_string(res.join("dnm-map-n_d_map.svg")).unwrap();
    assert!(svg.starts_with("<?xml") && svg.contains("version=\"1.1\"") && svg.contains("omega_q [omega_r]"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(res.join("dnm-map-summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "dnm-map");
    assert!(summary["timestamp"].as_str().unwrap().ends_with('Z'));
    assert_eq!(summary["config"]["params"]["g"], 0.05);
    assert!(!res.join(FAILURE_MANIFEST).exists());
}

#[test]
fn memristor_writes_loop_columns_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dnm(
        dir.path(),
        &["memristor", "--out", ".", "--set", "memristor.cycles=1", "--set", "memristor.transient_periods=0"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (headers, rows) = read_csv(&dir.path().join("memristor-trajectory.csv")).unwrap();
    let names: Vec<&str> = headers.iter().map(|h| h.split(' ').next().unwrap()).collect();
    assert_eq!(&names[..5], ["t", "I", "O", "F", "G"]);
    assert!(rows.len() > 100);
    let svg = fs::read_to_string(dir.path().join("memristor-input_output_loop.svg")).unwrap();
    assert!(svg.contains("<polyline"));
}

#[test]
fn failed_points_give_nonzero_exit_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dnm(
        dir.path(),
        &[
            "dnm-map",
            "--out",
            ".",
            "--formats",
            "csv",
            "--set",
            "sweep.axes=[{parameter=\"gamma_q\",min=-0.005,max=0.005,steps=2}]",
            "--set",
            "integration.t_max=100",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(FAILURE_MANIFEST)).unwrap()).unwrap();
    assert_eq!(manifest["failed_points"], 1);
    assert_eq!(manifest["failures"][0]["coordinates"]["gamma_q"], -0.005);
    let (_, rows) = read_csv(&dir.path().join("dnm-map-grid.csv")).unwrap();
    assert!(rows[0][1].is_nan() && rows[1][1].is_finite());
    assert!(!dir.path().join("dnm-map-summary.json").exists());
}

#[test]
fn echoed_config_and_worker_count_reproduce_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str, workers: &'static str| {
        vec![
            "scaling",
            "--out",
            out,
            "--workers",
            workers,
            "--formats",
            "csv",
            "--set",
            "scaling.n_values=[1,2,3]",
            "--set",
            "scaling.g_values=[0.05]",
            "--set",
            "integration.t_max=150",
        ]
    };
    assert!(dnm(dir.path(), &args("a", "1")).status.success());
    assert!(dnm(dir.path(), &args("b", "3")).status.success());
    let rerun = dnm(dir.path(), &["scaling", "--config", "a/scaling-config.toml", "--out", "c"]);
    assert!(rerun.status.success(), "{}", String::from_utf8_lossy(&rerun.stderr));
    let read = |d: &str, f: &str| fs::read(dir.path().join(d).join(f)).unwrap();
    for f in ["scaling-scaling.csv", "scaling-fits.csv"] {
        assert_eq!(read("a", f), read("b", f), "{f}");
        assert_eq!(read("a", f), read("c", f), "{f}");
    }
}

#[test]
fn strong_coupling_warns_but_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dnm(
        dir.path(),
        &["simulate", "--out", ".", "--formats", "json", "--set", "g=0.5", "--set", "integration.t_max=20"],
    );
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("WARN") && stderr.contains("g/omega_r"), "{stderr}");
    assert!(dir.path().join("simulate-summary.json").exists());
}

#[test]
fn full_scale_and_help_document_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dnm(dir.path(), &["dnm-map", "--full-scale", "--print-config"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = toml_table(&text);
    assert_eq!(cfg["full_scale"].as_bool(), Some(true));
    assert_eq!(cfg["sweep"]["axes"][0]["steps"].as_integer(), Some(100));
    let help = String::from_utf8(dnm(dir.path(), &["memristor", "--help"]).stdout).unwrap();
    assert!(help.contains("[params.cavity_drive]") && help.contains("transient_periods = 2.0"), "{help}");
    let bad = dnm(dir.path(), &["simulate", "--formats", "csv,png"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn shipped_example_configs_resolve() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let table = toml_table(&text);
        let experiment: Experiment = table["experiment"].as_str().unwrap().parse().unwrap();
        with_file(experiment, &text, &[]).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 7);
}
