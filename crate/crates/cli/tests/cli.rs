use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic").join(name)
}

fn pmvol(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pmvol")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn manifest_map(dir: &Path) -> Vec<(String, String)> {
    fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .lines()
        .map(|l| {
            let (h, p) = l.split_once("  ").unwrap();
            (p.to_string(), h.to_string())
        })
        .collect()
}

/// Copy of the fixture config with `edit` applied, written next to the
/// originals so relative paths still resolve.
fn edited_config(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let text = edit(fs::read_to_string(fixture("run.toml")).unwrap());
    let base = fixture("").canonicalize().unwrap();
    let text = text
        .replace("synthetic = \"synthetic.toml\"", &format!("synthetic = \"{}\"", base.join("synthetic.toml").display()))
        .replace("holidays = \"holidays.txt\"", &format!("holidays = \"{}\"", base.join("holidays.txt").display()));
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn stages_write_their_own_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture("run.toml");
    let cfg = cfg.to_str().unwrap();
    let cases: &[(&str, &[&str])] = &[
        ("ingest", &["ingest/quotes.csv", "ingest/prices.csv", "ingest/controls.csv", "ingest/rejected.csv"]),
        ("signals", &["signals/panel.csv", "signals/coverage_BTC.csv"]),
        ("estimate", &["estimate/models_BTC.csv", "estimate/horizons_ETH.csv", "estimate/effects.csv"]),
        ("grid", &["grid/matrix.csv", "grid/long.csv"]),
        ("oos", &["oos/summary.csv", "oos/cssed_BTC.csv", "portfolio/weights_ETH.csv", "portfolio/gaps.csv"]),
        ("simulate", &["simulate/quotes.csv", "simulate/oracle_panel.csv", "simulate/truth.csv"]),
    ];
    for (cmd, files) in cases {
        let out = tmp.path().join(cmd);
        let (code, err) = pmvol(&[cmd, "--config", cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{cmd}: {err}");
        let listed: Vec<String> = manifest_map(&out).into_iter().map(|(p, _)| p).collect();
        for f in *files {
            assert!(listed.iter().any(|p| p == f), "{cmd} did not write {f}");
        }
        assert!(listed.iter().all(|p| files.iter().any(|f| p.split('/').next() == f.split('/').next())));
    }
}

#[test]
fn stage_outputs_match_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("grid");
    let (code, _) = pmvol(&["grid", "--config", fixture("run.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let expected: Vec<(String, String)> = fs::read_to_string(fixture("expected_manifest.txt"))
        .unwrap()
        .lines()
        .map(|l| {
            let (h, p) = l.split_once("  ").unwrap();
            (p.to_string(), h.to_string())
        })
        .collect();
    for (p, h) in manifest_map(&out) {
        assert_eq!(Some(&h), expected.iter().find(|(q, _)| *q == p).map(|(_, h)| h), "{p}");
    }
}

#[test]
fn disabling_robustness_leaves_upstream_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = edited_config(tmp.path(), |t| {
        t.replace("bootstrap_resamples = 2000", "bootstrap = false\nlead_lag = false\ngarch = false")
    });
    let out = tmp.path().join("out");
    let (code, err) = pmvol(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let expected = fs::read_to_string(fixture("expected_manifest.txt")).unwrap();
    for (p, h) in manifest_map(&out) {
        if p.starts_with("robustness/") || p == "report.md" {
            continue;
        }
        assert!(expected.contains(&format!("{h}  {p}")), "{p} changed");
    }
    assert!(!out.join("robustness/bootstrap_BTC.csv").exists());
}

#[test]
fn missing_asset_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = edited_config(tmp.path(), |t| t.replace("[\"BTC\", \"ETH\"]", "[\"BTC\", \"DOGE\"]"));
    let prices = tmp.path().join("prices.csv");
    let quotes = tmp.path().join("quotes.csv");
    let controls = tmp.path().join("controls.csv");
    // Real files with only BTC prices.
    let sim = tmp.path().join("sim");
    let (code, _) = pmvol(&["simulate", "--config", fixture("run.toml").to_str().unwrap(), "--out", sim.to_str().unwrap()]);
    assert_eq!(code, 0);
    fs::copy(sim.join("simulate/quotes.csv"), &quotes).unwrap();
    fs::copy(sim.join("simulate/controls.csv"), &controls).unwrap();
    let btc: String = fs::read_to_string(sim.join("simulate/prices.csv"))
        .unwrap()
        .lines()
        .filter(|l| !l.contains(",ETH,") && !l.starts_with("ETH,"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&prices, btc).unwrap();
    let text = fs::read_to_string(&cfg).unwrap();
    let synthetic_line = text.lines().find(|l| l.starts_with("synthetic =")).unwrap().to_string();
    fs::write(
        &cfg,
        text.replace(&synthetic_line, "quotes = \"quotes.csv\"\nprices = \"prices.csv\"\ncontrols = \"controls.csv\""),
    )
    .unwrap();

    let out = tmp.path().join("out");
    let (code, err) = pmvol(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("DOGE"), "{err}");
    assert!(!out.join("signals").exists());

    let ok = edited_config(tmp.path(), |t| t.replace("[\"BTC\", \"ETH\"]", "[\"BTC\"]"));
    let text = fs::read_to_string(&ok).unwrap();
    fs::write(&ok, text.replace(&synthetic_line, "quotes = \"quotes.csv\"\nprices = \"prices.csv\"\ncontrols = \"controls.csv\"")).unwrap();
    let (code, err) = pmvol(&["ingest", "--config", ok.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_eq!(pmvol(&["report", "--out", dir]).0, 1);
    assert_eq!(pmvol(&["run", "--config", "/nonexistent/run.toml", "--out", dir]).0, 3);
    assert_eq!(pmvol(&["nonsense"]).0, 1);
    let bad = edited_config(tmp.path(), |t| t.replace("q = 0.05", "q = 2.0"));
    assert_eq!(pmvol(&["run", "--config", bad.to_str().unwrap(), "--out", dir]).0, 1);

    // Too short a sample for the initial window is a computation failure.
    let short = edited_config(tmp.path(), |t| t.replace("initial_window = 120", "initial_window = 5000"));
    let (code, err) = pmvol(&["oos", "--config", short.to_str().unwrap(), "--out", dir]);
    assert_eq!(code, 2, "{err}");
    assert!(err.starts_with("error: oos:"), "{err}");
}
