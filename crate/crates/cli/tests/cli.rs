use std::path::Path;
use std::process::{Command, Output};

fn nvraman(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvraman")).current_dir(dir).args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const RABI: &str = r#"
experiment = "rabi"

[physics]
delta_avg_mhz = 1500
omega_mhz = 46

[ensemble]
two_photon = true
two_photon_points = 9

[scan]
start = 0.0
stop = 5.0
points = 101
"#;

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn run_writes_csv_sidecar_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("rabi.toml"), RABI).unwrap();
    let out = nvraman(dir.path(), &["rabi", "-c", "rabi.toml", "-o", "out/a.csv", "--threads", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));

    let a = std::fs::read_to_string(dir.path().join("out/a.csv")).unwrap();
    let header = a.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "duration_us,pop_g1,pop_g2,pop_e,trace");
    assert_eq!(data_rows(&a).len(), 101);
    assert!(data_rows(&a).iter().all(|r| r.split(',').count() == 5));
    assert!(a.starts_with("# nvraman "));

    let sidecar = dir.path().join("out/a.meta.toml");
    let meta = std::fs::read_to_string(&sidecar).unwrap();
    assert!(meta.contains("[artifact]") && meta.contains("version"));

    let out = nvraman(dir.path(), &["rabi", "-c", "out/a.meta.toml", "-o", "b.csv", "--threads", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(a, std::fs::read_to_string(dir.path().join("b.csv")).unwrap());
}

#[test]
fn fit_reports_rabi_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvraman(dir.path(), &["rabi", "--preset", "figs2a", "-o", "s2a.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = nvraman(dir.path(), &["fit", "s2a.csv", "--model", "damped-cosine"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = std::fs::read_to_string(dir.path().join("s2a.fit.txt")).unwrap();
    let f: f64 = report
        .lines()
        .find_map(|l| l.trim().strip_prefix("frequency = "))
        .and_then(|v| v.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((f - 0.7053).abs() < 0.035, "{report}");
    let curve = std::fs::read_to_string(dir.path().join("s2a.fit.csv")).unwrap();
    assert!(curve.starts_with("duration_us,pop_g2_fit\n"));
}

#[test]
fn fit_reports_ramsey_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvraman(dir.path(), &["ramsey", "--preset", "fig3b", "-o", "r.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = nvraman(dir.path(), &["fit", "r.csv", "-m", "gaussian-cosine", "--report", "r.txt", "--curve", "rc.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = std::fs::read_to_string(dir.path().join("r.txt")).unwrap();
    assert!(report.contains("t2_star = ") && report.contains(" us"), "{report}");
    assert!(report.contains("frequency = 1.4"), "{report}");
}

#[test]
fn fidelity_and_period_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvraman(
        dir.path(),
        &[
            "fidelity",
            "--preset",
            "fig1c",
            "--set",
            "experiment=\"fidelity\"",
            "--set",
            "ensemble.delta_avg=false",
            "--set",
            "ensemble.two_photon=false",
            "-o",
            "f.csv",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("fidelity = "));
    assert!(std::fs::read_to_string(dir.path().join("f.csv")).unwrap().contains("# fidelity = "));

    let out = nvraman(
        dir.path(),
        &["period", "--preset", "fig1d", "--set", "scan.delta_ghz=[1.0, 2.0]", "--set", "scan.intensity_scales=[1.0]", "-o", "p.csv"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let p = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert!(p.contains("delta_ghz,intensity_scale,period_us,predicted_period_us\n"));
    assert_eq!(data_rows(&p).len(), 2);
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("typo.toml"), RABI.replace("omega_mhz = 46", "omega_plu = 46")).unwrap();
    let out = nvraman(dir.path(), &["rabi", "-c", "typo.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("physics.omega_plu"), "{}", stderr(&out));

    std::fs::write(dir.path().join("empty.toml"), "").unwrap();
    let out = nvraman(dir.path(), &["rabi", "-c", "empty.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("parse error at line 1"), "{}", stderr(&out));

    let out = nvraman(dir.path(), &["cpt", "-c", "typo.toml"]);
    assert_eq!(out.status.code(), Some(1));

    let out = nvraman(dir.path(), &["rabi", "-c", "missing.toml"]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(dir.path().join("bad.csv"), "time,signal\n0,1\n").unwrap();
    let out = nvraman(dir.path(), &["fit", "bad.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("schema mismatch"), "{}", stderr(&out));
}

#[test]
fn numerical_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("rabi.toml"), RABI).unwrap();
    // far beyond the RK4 stability limit for a 1.5 GHz detuning
    let out = nvraman(dir.path(), &["rabi", "-c", "rabi.toml", "--set", "physics.dt_us=0.01"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("rabi scan failed"), "{}", stderr(&out));
}

#[test]
fn presets_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvraman(dir.path(), &["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["fig1c", "fig1d", "fig2", "fig3e", "fig4b", "fig4e", "figs2a", "figs3d"] {
        assert!(text.contains(name), "{name}");
    }
}
