use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cphase(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cphase"))
        .args(args)
        .current_dir(dir)
        .env_remove("CPHASE_SEED")
        .env_remove("CPHASE_OUT")
        .output()
        .expect("run cphase")
}

fn descriptor(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn fig3_writes_versioned_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cphase(
        &["fig3", "--preset", "large", "--seed", "3", "--out", "o"],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let scan = fs::read_to_string(tmp.path().join("o/fig3_scan.csv")).unwrap();
    assert!(scan.starts_with("# cphase scan-record v1\n"));
    let overlay = fs::read_to_string(tmp.path().join("o/fig3_overlay.csv")).unwrap();
    assert!(overlay.starts_with("# cphase fig3-overlay v1\n"));
    let fits: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o/fig3_fits.json")).unwrap())
            .unwrap();
    assert_eq!(fits["format"], "cphase.fig3/1");
    let d = fits["delta_phi_deg"].as_f64().unwrap();
    let s = fits["sigma_deg"].as_f64().unwrap();
    assert!((d - 69.5).abs() < 3.0 * s + 0.5, "{d} ± {s}");
}

#[test]
fn fig4_csv_format_and_env_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let desc = descriptor(
        tmp.path(),
        "d.toml",
        "[experiment]\npreset = \"large\"\n[sweep]\ntheta_p_deg = [0.0, 95.0, 200.0]\n",
    );
    let out = Command::new(env!("CARGO_BIN_EXE_cphase"))
        .args(["fig4", "--descriptor", &desc, "--format", "csv"])
        .current_dir(tmp.path())
        .env("CPHASE_OUT", "env-out")
        .env("CPHASE_SEED", "9")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let sweep = fs::read_to_string(tmp.path().join("env-out/fig4_sweep.csv")).unwrap();
    assert!(sweep.starts_with(
        "# cphase fig4-sweep v1\ntheta_p_deg,delta_phi_deg,sigma_deg,chi2,dof,flags\n"
    ));
    assert_eq!(sweep.lines().count(), 5);
    let combined = fs::read_to_string(tmp.path().join("env-out/fig4_combined.csv")).unwrap();
    let last = combined.lines().last().unwrap();
    let mod360: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
    assert!((0.0..360.0).contains(&mod360));
    assert!(tmp.path().join("env-out/fig4_theory.csv").exists());
}

#[test]
fn descriptor_errors_exit_nonzero_with_field() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = descriptor(
        tmp.path(),
        "bad.toml",
        "[experiment]\npreset = \"large\"\n[source]\nbs2_transmissivity = 1.3\n",
    );
    let out = cphase(&["fig3", "--descriptor", &bad], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("source.bs2_transmissivity"));

    let empty = descriptor(tmp.path(), "empty.toml", "");
    let out = cphase(&["fig4", "--descriptor", &empty], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));

    let unknown = descriptor(
        tmp.path(),
        "unknown.toml",
        "[experiment]\npreset = \"large\"\n[scan]\nstep = 1.0\n",
    );
    let out = cphase(&["calibrate", "--descriptor", &unknown], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));
}

#[test]
fn validate_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = cphase(&["validate", "--out", "v"], tmp.path());
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("v/validate.json")).unwrap())
            .unwrap();
    assert_eq!(report["passed"], true);

    let low = cphase(&["validate", "--cutoff", "1"], tmp.path());
    assert_eq!(low.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&low.stderr).contains("truncation"));

    let flipped = cphase(&["validate", "--flip-theta-sign"], tmp.path());
    assert_eq!(flipped.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&flipped.stderr).contains("FAIL fringe_shift_identity"));
}

#[test]
fn calibrate_reports_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cphase(&["calibrate", "--preset", "small"], tmp.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["r"].as_f64().unwrap() - 0.1355).abs() < 5e-5);
    assert_eq!(v["regime"]["regime"], "small");
}

#[test]
fn bundled_descriptors_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("descriptors");
    for name in ["small.toml", "large.toml", "extreme.toml"] {
        cphase::experiment::load_descriptor(dir.join(name)).unwrap();
    }
}
