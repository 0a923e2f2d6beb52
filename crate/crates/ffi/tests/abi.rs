use std::ffi::{CStr, CString};
use std::ptr;

use wgnls_ffi::*;

fn last_error() -> String {
    let p = wgnls_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn grid(n_x: usize, n_y: usize) -> *mut WgnlsGrid {
    let mut g = ptr::null_mut();
    let s = unsafe { wgnls_grid_new(1, 1, 4.0, 16.0, n_x, n_y, &mut g) };
    assert_eq!(s, WgnlsStatus::Ok);
    g
}

#[test]
fn evaluate_matches_core() {
    let g = grid(128, 16);
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { wgnls_field_gaussian(g, 1.0, 0.3, &mut f) }, WgnlsStatus::Ok);
    let mut r = WgnlsReport::default();
    assert_eq!(unsafe { wgnls_evaluate(f, 1.0, &mut r) }, WgnlsStatus::Ok);

    let cg = wgnls_core::Grid::new(
        wgnls_core::ModelParams::new(1, 1, 4.0).unwrap(),
        wgnls_core::DomainSpec::new(16.0, 128, Some(16)).unwrap(),
    )
    .unwrap();
    let want = wgnls_core::evaluate(&wgnls_core::init::gaussian(&cg, 1.0, 0.3), 1.0);
    assert_eq!(r.mass, want.mass);
    assert_eq!(r.energy, want.energy);
    assert_eq!(r.virial, want.virial);
    unsafe {
        wgnls_field_free(f);
        wgnls_grid_free(g);
    }
}

#[test]
fn parts_round_trip_and_length_check() {
    let g = grid(64, 8);
    let n = unsafe { wgnls_grid_len(g) };
    assert_eq!(n, 512);
    let re: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin()).collect();
    let im: Vec<f64> = (0..n).map(|i| (i as f64 * 0.02).cos()).collect();
    let mut f = ptr::null_mut();
    assert_eq!(
        unsafe { wgnls_field_from_parts(g, re.as_ptr(), im.as_ptr(), n, &mut f) },
        WgnlsStatus::Ok
    );
    let (mut re2, mut im2) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(
        unsafe { wgnls_field_copy_parts(f, re2.as_mut_ptr(), im2.as_mut_ptr(), n) },
        WgnlsStatus::Ok
    );
    assert_eq!((re, im), (re2.clone(), im2.clone()));
    let s = unsafe { wgnls_field_copy_parts(f, re2.as_mut_ptr(), im2.as_mut_ptr(), n - 1) };
    assert_eq!(s, WgnlsStatus::InvalidArgument);
    assert!(last_error().contains("length"));

    let mut bad = ptr::null_mut();
    let s = unsafe { wgnls_field_from_parts(g, re2.as_ptr(), im2.as_ptr(), n - 1, &mut bad) };
    assert_eq!(s, WgnlsStatus::InvalidArgument);
    assert!(bad.is_null());
    unsafe {
        wgnls_field_free(f);
        wgnls_grid_free(g);
    }
}

#[test]
fn errors_are_reported_not_panicked() {
    let mut g = ptr::null_mut();
    let s = unsafe { wgnls_grid_new(1, 1, 4.0, 16.0, 100, 16, &mut g) };
    assert_eq!(s, WgnlsStatus::InvalidArgument);
    assert!(g.is_null());
    assert!(!last_error().is_empty());

    let s = unsafe { wgnls_grid_new(1, 1, 4.0, 16.0, 64, 16, ptr::null_mut()) };
    assert_eq!(s, WgnlsStatus::NullPointer);

    let mut r = WgnlsReport::default();
    assert_eq!(unsafe { wgnls_evaluate(ptr::null(), 1.0, &mut r) }, WgnlsStatus::NullPointer);

    let missing = CString::new("/nonexistent/dir/x.wgnls").unwrap();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { wgnls_snapshot_load(missing.as_ptr(), &mut f) }, WgnlsStatus::Io);
    unsafe {
        wgnls_grid_free(ptr::null_mut());
        wgnls_field_free(ptr::null_mut());
    }
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("a.wgnls").to_str().unwrap()).unwrap();
    let g = grid(64, 8);
    let mut f = ptr::null_mut();
    unsafe { wgnls_field_gaussian(g, 0.5, 0.2, &mut f) };
    assert_eq!(unsafe { wgnls_snapshot_save(f, path.as_ptr()) }, WgnlsStatus::Ok);
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { wgnls_snapshot_load(path.as_ptr(), &mut h) }, WgnlsStatus::Ok);
    let n = unsafe { wgnls_field_len(h) };
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    let (mut c, mut d) = (vec![0.0; n], vec![0.0; n]);
    unsafe {
        wgnls_field_copy_parts(f, a.as_mut_ptr(), b.as_mut_ptr(), n);
        wgnls_field_copy_parts(h, c.as_mut_ptr(), d.as_mut_ptr(), n);
    }
    assert_eq!((a, b), (c, d));
    unsafe {
        wgnls_field_free(f);
        wgnls_field_free(h);
        wgnls_grid_free(g);
    }
}

#[test]
fn groundstate_solve_through_abi() {
    let g = grid(256, 32);
    let (mut f, mut v) = (ptr::null_mut(), 0.0);
    assert_eq!(unsafe { wgnls_solve_groundstate(g, 1.0, &mut f, &mut v) }, WgnlsStatus::Ok);
    let mut r = WgnlsReport::default();
    unsafe { wgnls_evaluate(f, 1.0, &mut r) };
    assert!((r.action - v).abs() <= 1e-10 * v.abs(), "{} vs {v}", r.action);
    assert!(r.virial.abs() < 1e-8 * r.kinetic_x);
    unsafe {
        wgnls_field_free(f);
        wgnls_grid_free(g);
    }
}

#[test]
fn run_config_reports_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("r.ini");
    std::fs::write(&cfg, "[run]\ncommand = reference\n").unwrap();
    let (c, o) = (
        CString::new(cfg.to_str().unwrap()).unwrap(),
        CString::new(dir.path().join("out").to_str().unwrap()).unwrap(),
    );
    let mut code = -1;
    assert_eq!(unsafe { wgnls_run_config(c.as_ptr(), o.as_ptr(), &mut code) }, WgnlsStatus::Ok);
    assert_eq!(code, 0);

    std::fs::write(&cfg, "[run]\ncommand = nope\n").unwrap();
    assert_eq!(
        unsafe { wgnls_run_config(c.as_ptr(), o.as_ptr(), &mut code) },
        WgnlsStatus::InvalidArgument
    );
    assert!(last_error().contains("nope"));
}
