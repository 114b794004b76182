//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::PathBuf;
use std::process::Command;

fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libmemoryflow_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_runs() {
    let Some(lib) = static_lib() else {
        panic!("libmemoryflow_ffi.a not found next to the test binary");
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler on PATH; nothing to check");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "memoryflow.h"

int main(void) {
    MfKernel *k = NULL;
    MfModel *m = NULL;
    MfTrajectory *tr = NULL;
    double u0[1] = {1.0}, v0[1] = {0.0}, u[1], v[1], t;
    size_t n, j;
    if (mf_kernel_exponential(1.0, &k) != MF_STATUS_OK) return 1;
    if (mf_model_interval(1, MF_NONLINEARITY_ZERO, 0.0, NULL, &m) != MF_STATUS_OK) return 2;
    if (mf_simulate(m, k, u0, v0, 1, 0.01, 1.0, MF_FRAMEWORK_HISTORY, &tr) != MF_STATUS_OK) return 3;
    if (mf_trajectory_shape(tr, &n, &j) != MF_STATUS_OK || n != 101 || j != 1) return 4;
    if (mf_trajectory_snapshot(tr, n - 1, &t, u, v) != MF_STATUS_OK) return 5;
    if (mf_kernel_exponential(-2.0, &k) != MF_STATUS_INVALID_KERNEL || mf_last_error() == NULL) return 6;
    printf("%.6f %.6f\n", t, u[0]);
    mf_trajectory_free(tr);
    mf_model_free(m);
    mf_kernel_free(k);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("prog");
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let output = Command::new(&exe).output().unwrap();
    assert!(output.status.success(), "C program exited with {:?}", output.status);
    let text = String::from_utf8_lossy(&output.stdout);
    let mut it = text.split_whitespace().map(|s| s.parse::<f64>().unwrap());
    assert_eq!(it.next(), Some(1.0));
    let u = it.next().unwrap();
    assert!(u.is_finite() && u.abs() < 1.0);
}
