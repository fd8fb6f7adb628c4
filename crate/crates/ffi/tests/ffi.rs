use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use quantcredit_ffi::*;

fn params() -> QcGbmParams {
    QcGbmParams {
        mu: 0.03,
        sigma: 0.09,
        delta: 0.5,
        x0: 86.3,
        y0: 86.3,
        barrier: 76.0,
    }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(qc_last_error()) }.to_string_lossy().into_owned()
}

fn build(size: usize) -> *mut QcTree {
    let mut tree = ptr::null_mut();
    let st = unsafe { qc_tree_build_gbm(&params(), 1.0, 10, 2.0, size, &mut tree) };
    assert_eq!(st, QcStatus::Ok, "{}", last_error());
    assert!(!tree.is_null());
    tree
}

#[test]
fn build_query_free() {
    let tree = build(8);
    let (mut steps, mut m) = (0usize, 0usize);
    assert_eq!(unsafe { qc_tree_dims(tree, &mut steps, &mut m) }, QcStatus::Ok);
    assert_eq!((steps, m), (20, 10));

    let (mut t, mut len) = (0.0, 0usize);
    let st = unsafe { qc_tree_grid(tree, 3, &mut t, ptr::null_mut(), ptr::null_mut(), 0, &mut len) };
    assert_eq!(st, QcStatus::BufferTooSmall);
    assert_eq!(len, 8);
    let (mut pts, mut w) = (vec![0.0; len], vec![0.0; len]);
    let st = unsafe { qc_tree_grid(tree, 3, &mut t, pts.as_mut_ptr(), w.as_mut_ptr(), len, &mut len) };
    assert_eq!(st, QcStatus::Ok);
    assert!((t - 0.3).abs() < 1e-12);
    assert!(pts.windows(2).all(|p| p[0] < p[1]));
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);

    let obs = [86.3; 11];
    let (mut pf, mut py) = (0.0, 0.0);
    let st = unsafe { qc_conditional_survival(tree, obs.as_ptr(), obs.len(), 20, &mut pf, &mut py) };
    assert_eq!(st, QcStatus::Ok, "{}", last_error());
    assert!(py <= pf + 1e-12 && (0.0..=1.0).contains(&pf));

    let st = unsafe { qc_conditional_survival(tree, obs.as_ptr(), 5, 20, &mut pf, &mut py) };
    assert_eq!(st, QcStatus::InvalidArgument);
    assert!(last_error().contains("observation"));
    unsafe { qc_tree_free(tree) };
    unsafe { qc_tree_free(ptr::null_mut()) };
}

#[test]
fn save_and_load_round_trip() {
    let tree = build(5);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("t.txt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { qc_tree_save(tree, path.as_ptr()) }, QcStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { qc_tree_load(&params(), path.as_ptr(), &mut back) }, QcStatus::Ok);
    let grid = |t: *const QcTree| {
        let (mut time, mut len) = (0.0, 0usize);
        let (mut p, mut w) = (vec![0.0; 5], vec![0.0; 5]);
        unsafe { qc_tree_grid(t, 7, &mut time, p.as_mut_ptr(), w.as_mut_ptr(), 5, &mut len) };
        (time, p, w)
    };
    assert_eq!(grid(tree), grid(back));
    let missing = CString::new(dir.path().join("nope.txt").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { qc_tree_load(&params(), missing.as_ptr(), &mut none) }, QcStatus::Io);
    assert!(none.is_null());
    unsafe {
        qc_tree_free(tree);
        qc_tree_free(back);
    }
}

#[test]
fn bad_inputs_report_status() {
    let mut tree = ptr::null_mut();
    assert_eq!(
        unsafe { qc_tree_build_gbm(ptr::null(), 1.0, 10, 2.0, 5, &mut tree) },
        QcStatus::NullPointer
    );
    let mut p = params();
    p.barrier = 90.0;
    assert_eq!(
        unsafe { qc_tree_build_gbm(&p, 1.0, 10, 2.0, 5, &mut tree) },
        QcStatus::InvalidArgument
    );
    assert!(!last_error().is_empty());
    let mut v = 0.0;
    assert_eq!(unsafe { qc_implied_vol(10.0, 0.0066, 0.0053, 1.0, 1.9, &mut v) }, QcStatus::Numerical);
    assert_eq!(unsafe { qc_gbm_survival(0.03, 0.09, 76.0, 86.3, 1.0, ptr::null_mut()) }, QcStatus::NullPointer);
}

#[test]
fn closed_forms() {
    let (mut price, mut vol, mut f) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { qc_black_payer(0.0066, 0.0053, 1.0, 1.9, 0.7, &mut price) }, QcStatus::Ok);
    assert_eq!(unsafe { qc_implied_vol(price, 0.0066, 0.0053, 1.0, 1.9, &mut vol) }, QcStatus::Ok);
    assert!((vol - 0.7).abs() < 1e-8);
    assert_eq!(unsafe { qc_gbm_survival(0.03, 0.09, 76.0, 86.3, 1.0, &mut f) }, QcStatus::Ok);
    assert!((f - quantcredit::analytic::gbm_survival_f(0.03, 0.09, 76.0, 86.3, 1.0)).abs() < 1e-15);
    assert!(last_error().is_empty());
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/quantcredit.h")
}

fn cc() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
}

#[test]
fn header_is_valid_c_and_cpp() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in ["qc_tree_build_gbm", "qc_tree_free", "qc_conditional_survival", "QC_STATUS_OK", "typedef struct QcTree QcTree"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Some(cc) = cc() else {
        eprintln!("no C compiler found; syntax check skipped");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("h.c");
    std::fs::write(&src, "#include \"quantcredit.h\"\nint main(void) { return QC_STATUS_OK; }\n").unwrap();
    let inc = header().parent().unwrap().to_path_buf();
    for lang in ["c", "c++"] {
        let out = Command::new(cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg("-I")
            .arg(&inc)
            .arg(&src)
            .output()
            .unwrap();
        assert!(out.status.success(), "{lang}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn c_program_links_against_shared_library() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler found; link check skipped");
        return;
    };
    // integration tests run from target/<profile>/deps; the cdylib sits one level up
    let exe = std::env::current_exe().unwrap();
    let libdir = exe.parent().and_then(Path::parent).unwrap().to_path_buf();
    if !libdir.join("libquantcredit_ffi.so").exists() {
        eprintln!("shared library not found in {}; link check skipped", libdir.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "quantcredit.h"
int main(void) {
    QcGbmParams p = {0.03, 0.09, 0.5, 86.3, 86.3, 76.0};
    QcTree *tree = NULL;
    if (qc_tree_build_gbm(&p, 1.0, 5, 1.5, 6, &tree) != QC_STATUS_OK) {
        fprintf(stderr, "%s\n", qc_last_error());
        return 1;
    }
    double obs[6] = {86.3, 86.0, 85.5, 85.9, 86.4, 86.8};
    double pf = 0.0, py = 0.0;
    size_t steps = 0, m = 0;
    qc_tree_dims(tree, &steps, &m);
    QcStatus st = qc_conditional_survival(tree, obs, m + 1, steps, &pf, &py);
    qc_tree_free(tree);
    if (st != QC_STATUS_OK) {
        fprintf(stderr, "%s\n", qc_last_error());
        return 2;
    }
    printf("%.12f %.12f\n", pf, py);
    return py <= pf + 1e-12 ? 0 : 3;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let out = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg("-L")
        .arg(&libdir)
        .args(["-lquantcredit_ffi", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).env("LD_LIBRARY_PATH", &libdir).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status, String::from_utf8_lossy(&run.stderr));
    let vals: Vec<f64> = String::from_utf8_lossy(&run.stdout)
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(vals.len(), 2);
    assert!(vals[0] > 0.5 && vals[0] <= 1.0);
}
