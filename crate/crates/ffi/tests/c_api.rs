use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use stve_ffi::*;

fn last_error() -> String {
    let p = stve_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Handle(*mut StveDataset);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { stve_dataset_free(self.0) };
    }
}

fn simulated(t: usize, n: usize, seed: u64) -> Handle {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { stve_simulate(t, n, 0.5, 2.0, seed, &mut h) }, StveStatus::STVE_OK);
    Handle(h)
}

#[test]
fn estimate_matches_library() {
    let cfg = stve::SimulationConfig::gaussian(200, 3, 0.5, 2.0, 11);
    let (ds, _) = stve::simulate(&cfg).unwrap();
    let expected = stve::estimate(&ds, &stve::StveConfig::default()).unwrap();

    let h = simulated(200, 3, 11);
    assert_eq!(unsafe { stve_dataset_horizon(h.0) }, 200);
    assert_eq!(unsafe { stve_dataset_dim(h.0) }, 3);
    let mut out = StveEstimateResult::default();
    assert_eq!(unsafe { stve_estimate(h.0, ptr::null(), &mut out) }, StveStatus::STVE_OK);
    assert_eq!(out.sigma2, expected.sigma2);
    assert_eq!(out.eta2, expected.eta2);
    assert_eq!(out.p, 50);
    assert_eq!(out.effective_t, 200);
    assert!(out.gap_ratio > 1.0);
}

#[test]
fn dataset_from_arrays_with_mask() {
    let t = 30;
    let u: Vec<f64> = (0..t * 2).map(|i| ((i * 7 % 13) as f64 - 6.0) / 3.0 + 0.1).collect();
    let y: Vec<f64> = (0..t).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut mask = vec![1u8; t];
    mask[4] = 0;
    mask[17] = 0;
    let mut h = ptr::null_mut();
    let s = unsafe { stve_dataset_new(u.as_ptr(), y.as_ptr(), mask.as_ptr(), t, 2, &mut h) };
    assert_eq!(s, StveStatus::STVE_OK);
    let h = Handle(h);
    let mut back = vec![0.0; t];
    assert_eq!(unsafe { stve_dataset_copy_y(h.0, back.as_mut_ptr()) }, StveStatus::STVE_OK);
    assert!(back[4].is_nan() && back[17].is_nan());
    assert_eq!(back[5], y[5]);

    let mut out = StveEstimateResult::default();
    assert_eq!(unsafe { stve_estimate(h.0, ptr::null(), &mut out) }, StveStatus::STVE_OK);
    assert_eq!(out.effective_t, 28);
    assert_ne!(out.warnings & STVE_WARN_ROWS_DROPPED, 0);
}

#[test]
fn kalman_matches_library() {
    let cfg = stve::SimulationConfig::gaussian(80, 2, 0.1, 1.0, 5);
    let (ds, _) = stve::simulate(&cfg).unwrap();
    let traj = stve::filter(&ds, &stve::KalmanConfig::new(0.1, 1.0)).unwrap();

    let mut h = ptr::null_mut();
    assert_eq!(unsafe { stve_simulate(80, 2, 0.1, 1.0, 5, &mut h) }, StveStatus::STVE_OK);
    let h = Handle(h);
    let mut pred = vec![0.0; 80];
    let mut state = [0.0; 2];
    let mut ll = 0.0;
    let s = unsafe {
        stve_kalman_filter(h.0, 0.1, 1.0, stve::kalman::DEFAULT_C0_SCALE, pred.as_mut_ptr(), state.as_mut_ptr(), &mut ll)
    };
    assert_eq!(s, StveStatus::STVE_OK);
    assert_eq!(pred, traj.predictions);
    assert_eq!(state.as_slice(), traj.final_state().as_slice());
    assert_eq!(ll, traj.loglik);
}

#[test]
fn error_codes() {
    let mut h = ptr::null_mut();
    let one = [1.0];
    let s = unsafe { stve_dataset_new(one.as_ptr(), one.as_ptr(), ptr::null(), 1, 1, &mut h) };
    assert_eq!(s, StveStatus::STVE_ERR_INSUFFICIENT_ROWS);
    assert!(h.is_null());
    assert!(!last_error().is_empty());

    // u_t = e_t / sqrt(t) makes the Gram matrix the identity.
    let t = 8;
    let mut u = vec![0.0; t * t];
    for i in 0..t {
        u[i * t + i] = 1.0 / ((i + 1) as f64).sqrt();
    }
    let y = vec![1.0; t];
    assert_eq!(unsafe { stve_dataset_new(u.as_ptr(), y.as_ptr(), ptr::null(), t, t, &mut h) }, StveStatus::STVE_OK);
    let h = Handle(h);
    let mut out = StveEstimateResult::default();
    assert_eq!(unsafe { stve_estimate(h.0, ptr::null(), &mut out) }, StveStatus::STVE_ERR_SINGULAR);
    assert!(last_error().contains("singular"));

    let mut opts = stve_options_default();
    opts.alpha = 1.5;
    let g = simulated(40, 2, 1);
    assert_eq!(unsafe { stve_estimate(g.0, &opts, &mut out) }, StveStatus::STVE_ERR_INVALID_INPUT);

    let mut pred = vec![0.0; 40];
    let s = unsafe { stve_kalman_filter(g.0, 0.1, 0.0, 1.0, pred.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, StveStatus::STVE_ERR_INVALID_INPUT);

    let path = CString::new("/nonexistent/file.csv").unwrap();
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { stve_dataset_read_csv(path.as_ptr(), &mut r) }, StveStatus::STVE_ERR_IO);
    assert_eq!(unsafe { stve_estimate(ptr::null(), ptr::null(), &mut out) }, StveStatus::STVE_ERR_NULL_POINTER);
    unsafe { stve_dataset_free(ptr::null_mut()) };
}

#[test]
fn read_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "t,y,u_1\n1,0.5,1\n2,,1\n3,1.5,2\n4,1.0,1\n5,2.0,1\n").unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { stve_dataset_read_csv(c.as_ptr(), &mut h) }, StveStatus::STVE_OK);
    let h = Handle(h);
    assert_eq!(unsafe { stve_dataset_horizon(h.0) }, 5);

    std::fs::write(&path, "t,y,u_1\n1,0.5,1\n2,x,1\n").unwrap();
    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { stve_dataset_read_csv(c.as_ptr(), &mut bad) }, StveStatus::STVE_ERR_PARSE);
    assert!(last_error().contains(":3:"), "{}", last_error());
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(stve_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "stve.h"

int main(void) {
    StveDataset *ds = NULL;
    if (stve_simulate(300, 2, 0.5, 2.0, 3, &ds) != STVE_OK) return 1;
    StveEstimateResult r;
    StveOptions opts = stve_options_default();
    if (stve_estimate(ds, &opts, &r) != STVE_OK) return 2;
    if (!(r.gap_ratio > 1.0) || r.p != 75) return 3;
    double pred[300];
    double ll = 0.0;
    if (stve_kalman_filter(ds, 0.5, 2.0, 1e4, pred, NULL, &ll) != STVE_OK) return 4;
    if (!isfinite(ll)) return 5;
    if (stve_estimate(NULL, NULL, &r) != STVE_ERR_NULL_POINTER) return 6;
    if (stve_last_error_message() == NULL) return 7;
    stve_dataset_free(ds);
    printf("%.17g %.17g\n", r.sigma2, r.eta2);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler found; skipping");
        return;
    }
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    // `cargo test` builds only the rlib; make sure the static archive is current.
    let built = Command::new(env!("CARGO"))
        .args(["build", "--quiet", "-p", "stve-ffi", "--lib"])
        .status()
        .unwrap();
    assert!(built.success(), "cargo build of the static library failed");
    let lib = target_dir().join("libstve_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());

    let cfg = stve::SimulationConfig::gaussian(300, 2, 0.5, 2.0, 3);
    let (ds, _) = stve::simulate(&cfg).unwrap();
    let e = stve::estimate(&ds, &stve::StveConfig::default()).unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let vals: Vec<f64> = text.split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(vals, vec![e.sigma2, e.eta2]);
}
