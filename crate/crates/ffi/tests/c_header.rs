//! Compiles a C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "wgnls.h"

int main(void) {
    WgnlsGrid *g = NULL;
    WgnlsField *f = NULL;
    WgnlsReport r;
    if (wgnls_grid_new(1, 1, 4.0, 16.0, 64, 8, &g) != WGNLS_STATUS_OK) return 1;
    if (wgnls_field_gaussian(g, 1.0, 0.0, &f) != WGNLS_STATUS_OK) return 2;
    if (wgnls_evaluate(f, 1.0, &r) != WGNLS_STATUS_OK) return 3;
    if (wgnls_grid_new(1, 1, 4.0, 16.0, 63, 8, &g) != WGNLS_STATUS_INVALID_ARGUMENT) return 4;
    if (wgnls_last_error() == NULL) return 5;
    printf("%.17g\n", r.mass);
    wgnls_field_free(f);
    wgnls_grid_free(g);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps/
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let status = Command::new(env!("CARGO"))
        .args(["build", "--quiet", "--lib", "-p", "wgnls-ffi"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .status()
        .unwrap();
    assert!(status.success());
    let lib = target_dir().join("libwgnls_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let out = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .expect("C compiler available");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let mass: f64 = String::from_utf8_lossy(&run.stdout).trim().parse().unwrap();
    // |exp(-x^2/2)|^2 over R x T: sqrt(pi) * 2 pi
    let want = std::f64::consts::PI.sqrt() * 2.0 * std::f64::consts::PI;
    assert!((mass - want).abs() < 1e-10 * want, "{mass}");
}
