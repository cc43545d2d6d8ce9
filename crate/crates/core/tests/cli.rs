use std::process::Command;

use mudsim::metrics::MetricRow;

fn mudsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mudsim"))
}

#[test]
fn codes_dump_has_one_row_per_code() {
    let out = mudsim().args(["codes", "--degree", "5"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 34);
    assert!(lines[0].starts_with("chip_0,chip_1,"));
    assert!(lines[0].ends_with(",chip_30"));
    for row in &lines[1..] {
        let chips: Vec<i32> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(chips.len(), 31);
        assert!(chips.iter().all(|c| *c == 1 || *c == -1));
    }
}

#[test]
fn correlation_matrix_dump() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rho.csv");
    let status = mudsim()
        .args(["codes", "--degree", "5", "--matrix", "--out"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<Vec<i64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 33);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i == j {
                assert_eq!(v, 31);
            } else {
                assert!([-9, -1, 7].contains(&v));
                assert_eq!(v, rows[j][i]);
            }
        }
    }
}

#[test]
fn codes_rejects_unsupported_degree() {
    let out = mudsim().args(["codes", "--degree", "4"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn fading_check_reports_unit_variance() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = mudsim()
        .args([
            "fading-check",
            "--fd-tb",
            "0.003",
            "--symbols",
            "200000",
            "--strict",
            "--trace-out",
        ])
        .arg(&trace)
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().find(|l| l.starts_with("variance of beta")).unwrap();
    assert!(line.contains("PASS"), "{text}");
    let value: f64 = line.split_whitespace().find_map(|w| w.parse().ok()).unwrap();
    assert!((value - 1.0).abs() <= 0.05);
    let rows = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(rows.lines().next().unwrap(), "m,re,im,magnitude");
    assert_eq!(rows.lines().count(), 200_001);
}

#[test]
fn version_prints_manifest_tag() {
    let out = mudsim().arg("version").output().unwrap();
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().trim(),
        format!("mudsim {}", env!("CARGO_PKG_VERSION"))
    );
}

#[test]
fn run_writes_csv_diagnostics_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.conf");
    std::fs::write(
        &config,
        "# short sweep\nusers = 4\nsymbols = 1000\ntrials = 2\nreceivers = mf, pic:1, ba_sic\n",
    )
    .unwrap();
    let csv = dir.path().join("out.csv");
    let records = dir.path().join("records.csv");
    let out = mudsim()
        .args(["run", "--ebno-db", "5", "--seed", "11", "--workers", "2", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&csv)
        .arg("--dump-records")
        .arg(&records)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), MetricRow::CSV_HEADER);
    assert_eq!(
        MetricRow::CSV_HEADER,
        "receiver,stage,ebno_db,mse,sinr_mean_db,sum_rate_bps_hz,ber,symbols,trials,seed"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("mf,0,5,"));
    assert!(rows[0].ends_with(",1000,2,11"));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);

    let diagnostics = std::fs::read_to_string(dir.path().join("out.diagnostics.csv")).unwrap();
    assert_eq!(diagnostics.lines().count(), 5);
    let manifest = std::fs::read_to_string(dir.path().join("out.manifest.txt")).unwrap();
    assert!(manifest.contains("mudsim "));
    assert!(manifest.contains("code_fingerprint = "));
    assert!(manifest.contains("seed = 11"));

    let dump = std::fs::read_to_string(&records).unwrap();
    let mut dump_lines = dump.lines();
    assert_eq!(dump_lines.next().unwrap(), "receiver,stage,user,m,z,est,bit");
    // mf + pic stages 0 and 1 + ba_sic, four users each, per symbol
    assert_eq!(dump_lines.count(), 1000 * 4 * 4);
}

#[test]
fn bad_config_reports_line_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    std::fs::write(&config, "degree = 5\n\nusers = 40\n").unwrap();
    let out = mudsim().arg("run").arg("--config").arg(&config).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn run_rejects_unknown_receiver() {
    let out = mudsim()
        .args(["run", "--receivers", "mf,zf", "--symbols", "1000"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
