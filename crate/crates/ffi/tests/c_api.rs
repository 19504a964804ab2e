use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use bpr_core::pipeline::{synth, SynthConfig};
use bpr_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { bpr_last_error_message(buf.as_mut_ptr(), buf.len()) };
    if n == 0 {
        return String::new();
    }
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn c(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn synth_files(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = SynthConfig {
        n_assets: 6,
        n_steps: 300,
        granularity_minutes: 15,
        start: "2021-01-01T00:00:00Z".into(),
        seed: 3,
        n_regions: 3,
        ar_coefficient: 0.95,
        seasonal_amplitude: 0.5,
        noise_scale: 0.3,
        anticorrelated_pairs: 1,
        output_dir: dir.to_path_buf(),
    };
    synth::synth_to_dir(&cfg, dir).unwrap()
}

#[test]
fn version_is_nonempty() {
    let v = unsafe { CStr::from_ptr(bpr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    unsafe {
        let mut panel = ptr::null_mut();
        let s = bpr_panel_load(ptr::null(), ptr::null(), &mut panel);
        assert_eq!(s, BprStatus::NullPointer);
        assert!(panel.is_null());
        assert!(last_error().contains("assets_path"));

        assert_eq!(bpr_panel_load(ptr::null(), ptr::null(), ptr::null_mut()), BprStatus::NullPointer);
        assert_eq!(bpr_panel_n_assets(ptr::null()), 0);
        assert_eq!(bpr_bundling_k(ptr::null()), 0);
        bpr_panel_free(ptr::null_mut());
        bpr_bundling_free(ptr::null_mut());
        bpr_reconciler_free(ptr::null_mut());

        let mut out = 0.0;
        let s = bpr_metric_rmse(ptr::null(), ptr::null(), 1, 1, 1, &mut out);
        assert_eq!(s, BprStatus::NullPointer);
        assert_eq!(bpr_run(ptr::null(), ptr::null()), BprStatus::NullPointer);
    }
}

#[test]
fn error_message_truncates_and_clears() {
    unsafe {
        let mut panel = ptr::null_mut();
        let missing = CString::new("/nonexistent/assets.csv").unwrap();
        let s = bpr_panel_load(missing.as_ptr(), missing.as_ptr(), &mut panel);
        assert_eq!(s, BprStatus::Panel);
        let full = bpr_last_error_message(ptr::null_mut(), 0);
        assert!(full > 4);
        let mut small = [1 as c_char; 4];
        assert_eq!(bpr_last_error_message(small.as_mut_ptr(), small.len()), full);
        assert_eq!(small[3], 0);

        assert!(!bpr_version().is_null());
        let mut out = 0.0;
        let one = [1.0];
        assert_eq!(bpr_metric_rmse(one.as_ptr(), one.as_ptr(), 1, 1, 1, &mut out), BprStatus::Ok);
        assert_eq!(bpr_last_error_message(ptr::null_mut(), 0), 0);
    }
}

#[test]
fn hand_solved_reconciliation() {
    unsafe {
        let labels = [0usize, 0];
        let mut b = ptr::null_mut();
        assert_eq!(bpr_bundling_from_assignment(labels.as_ptr(), 2, &mut b), BprStatus::Ok);
        assert_eq!(bpr_bundling_k(b), 1);

        let w = [1.0; 4];
        let mut r = ptr::null_mut();
        assert_eq!(bpr_reconciler_build(b, w.as_ptr(), 1, 4, &mut r), BprStatus::Ok);
        let h = [10.0, 10.0, 3.0, 5.0];
        let mut out = [0.0; 4];
        assert_eq!(bpr_reconciler_apply(r, 0, h.as_ptr(), out.as_mut_ptr(), 4), BprStatus::Ok);
        for (a, e) in out.iter().zip([9.6, 9.6, 3.8, 5.8]) {
            assert!((a - e).abs() < 1e-10, "{a} vs {e}");
        }

        let mut inplace = h;
        let p = inplace.as_mut_ptr();
        assert_eq!(bpr_reconciler_apply(r, 0, p, p, 4), BprStatus::Ok);
        assert_eq!(inplace, out);

        assert_eq!(bpr_reconciler_apply(r, 1, h.as_ptr(), out.as_mut_ptr(), 4), BprStatus::InvalidArgument);
        assert_eq!(bpr_reconciler_apply(r, 0, h.as_ptr(), out.as_mut_ptr(), 3), BprStatus::InvalidArgument);

        let bad = [1.0, 0.0, 1.0, 1.0];
        let mut r2 = ptr::null_mut();
        assert_eq!(bpr_reconciler_build(b, bad.as_ptr(), 1, 4, &mut r2), BprStatus::InvalidArgument);
        assert!(r2.is_null());
        assert_eq!(bpr_reconciler_build(b, w.as_ptr(), 1, 5, &mut r2), BprStatus::InvalidArgument);

        bpr_reconciler_free(r);
        bpr_bundling_free(b);
    }
}

#[test]
fn metrics_match_hand_values() {
    unsafe {
        let mut out = 0.0;
        let a = [0.0, 0.0];
        let f = [1.0, 3.0];
        let cap = [10.0];
        assert_eq!(bpr_metric_nmae(a.as_ptr(), f.as_ptr(), 1, 1, 2, cap.as_ptr(), &mut out), BprStatus::Ok);
        assert_eq!(out, 20.0);

        let f = [3.0, 4.0];
        assert_eq!(bpr_metric_energy_distance(a.as_ptr(), f.as_ptr(), 1, 1, 2, &mut out), BprStatus::Ok);
        assert_eq!(out, 10.0);

        let a = [0.0, 4.0];
        let f = [0.0, 1.0];
        assert_eq!(bpr_metric_variogram(a.as_ptr(), f.as_ptr(), 1, 1, 2, 0.5, &mut out), BprStatus::Ok);
        assert_eq!(out, 2.0);

        let a = [0.0; 4];
        let f = [6.0, 0.0, 0.0, 0.0];
        assert_eq!(bpr_metric_rmse(a.as_ptr(), f.as_ptr(), 2, 1, 2, &mut out), BprStatus::Ok);
        assert_eq!(out, 3.0);

        assert_eq!(bpr_metric_rmse(a.as_ptr(), f.as_ptr(), 0, 1, 2, &mut out), BprStatus::InvalidArgument);
        let zero = [0.0];
        assert_eq!(
            bpr_metric_nmae(a.as_ptr(), f.as_ptr(), 1, 1, 1, zero.as_ptr(), &mut out),
            BprStatus::Metrics
        );
    }
}

#[test]
fn panel_bundling_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (assets, series) = synth_files(dir.path());
    let (assets, series) = (c(&assets), c(&series));
    unsafe {
        let mut panel = ptr::null_mut();
        assert_eq!(bpr_panel_load(assets.as_ptr(), series.as_ptr(), &mut panel), BprStatus::Ok);
        assert_eq!(bpr_panel_n_assets(panel), 6);
        assert_eq!(bpr_panel_n_steps(panel), 300);

        let mut greedy = ptr::null_mut();
        let mut exact = ptr::null_mut();
        let s = bpr_bundle_greedy(panel, BprCriterion::Savar, 3, f64::INFINITY, &mut greedy);
        assert_eq!(s, BprStatus::Ok, "{}", last_error());
        let s = bpr_bundle_exact(panel, BprCriterion::Savar, 3, f64::INFINITY, &mut exact);
        assert_eq!(s, BprStatus::Ok, "{}", last_error());
        assert_eq!(bpr_bundling_k(greedy), 3);

        let (mut og, mut oe) = (0.0, 0.0);
        assert_eq!(bpr_bundling_objective(panel, greedy, BprCriterion::Savar, &mut og), BprStatus::Ok);
        assert_eq!(bpr_bundling_objective(panel, exact, BprCriterion::Savar, &mut oe), BprStatus::Ok);
        assert!(oe <= og + 1e-9 * og.abs().max(1.0));

        let mut labels = [usize::MAX; 6];
        assert_eq!(bpr_bundling_assignment(exact, labels.as_mut_ptr(), 6), BprStatus::Ok);
        assert!(labels.iter().all(|&l| l < 3));
        assert_eq!(labels[0], 0);
        assert_eq!(bpr_bundling_assignment(exact, labels.as_mut_ptr(), 5), BprStatus::BufferTooSmall);

        let mut bad = ptr::null_mut();
        assert_eq!(bpr_bundle_greedy(panel, BprCriterion::Imcy, 3, -1.0, &mut bad), BprStatus::InvalidArgument);
        assert_eq!(bpr_bundle_greedy(panel, BprCriterion::Imcy, 0, 100.0, &mut bad), BprStatus::Bundling);
        assert!(bad.is_null());

        bpr_bundling_free(greedy);
        bpr_bundling_free(exact);
        bpr_panel_free(panel);
    }
}

#[test]
fn run_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "task = \"short_term\"\n").unwrap();
    let cfg = c(&cfg);
    unsafe {
        assert_eq!(bpr_run(cfg.as_ptr(), ptr::null()), BprStatus::Pipeline);
    }
    assert!(last_error().starts_with("[config]"), "{}", last_error());
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("bpr.h")
}

#[test]
fn header_declares_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "BPR_H",
        "BPR_STATUS_OK = 0",
        "BPR_STATUS_PANIC",
        "BPR_CRITERION_SAVAR",
        "typedef struct BprPanel BprPanel",
        "bpr_last_error_message",
        "bpr_panel_load",
        "bpr_bundle_greedy",
        "bpr_bundle_exact",
        "bpr_reconciler_build",
        "bpr_reconciler_apply",
        "bpr_metric_variogram",
        "bpr_run",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(header())
        .output()
    else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
