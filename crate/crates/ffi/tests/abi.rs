use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use bian_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = bian_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn generate_train_save_load_predict() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut g: *mut BianGraph = ptr::null_mut();
        let spec = cstr("n=400,fraud_rate=0.1,seed=3");
        assert_eq!(bian_graph_generate(spec.as_ptr(), &mut g), BianStatus::Ok);
        assert_eq!(bian_graph_num_nodes(g), 400);
        assert_eq!(bian_graph_num_edges(g), 440);

        let gpath = cstr(dir.path().join("g.bin").to_str().unwrap());
        assert_eq!(bian_graph_save(g, gpath.as_ptr()), BianStatus::Ok);
        let mut g2: *mut BianGraph = ptr::null_mut();
        assert_eq!(bian_graph_load(gpath.as_ptr(), &mut g2), BianStatus::Ok);
        assert_eq!(bian_graph_num_edges(g2), 440);

        let cfg = cstr("hidden=8\ntime_freqs=4\nepochs=1\n");
        let mut m: *mut BianModel = ptr::null_mut();
        assert_eq!(bian_model_train(g, cfg.as_ptr(), &mut m), BianStatus::Ok);

        let mpath = cstr(dir.path().join("m.ckpt").to_str().unwrap());
        assert_eq!(bian_model_save(m, mpath.as_ptr()), BianStatus::Ok);
        let mut m2: *mut BianModel = ptr::null_mut();
        assert_eq!(bian_model_load(mpath.as_ptr(), &mut m2), BianStatus::Ok);

        let nodes: Vec<usize> = (0..400).collect();
        let (mut a, mut b) = (vec![0.0; 400], vec![0.0; 400]);
        assert_eq!(bian_model_predict(m, g, nodes.as_ptr(), 400, a.as_mut_ptr()), BianStatus::Ok);
        assert_eq!(bian_model_predict(m2, g2, nodes.as_ptr(), 400, b.as_mut_ptr()), BianStatus::Ok);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));

        let (mut t1, mut t2) = (0.0, 0.0);
        assert_eq!(bian_model_test_auroc(m, g, &mut t1), BianStatus::Ok);
        assert_eq!(bian_model_test_auroc(m2, g2, &mut t2), BianStatus::Ok);
        assert_eq!(t1, t2);
        assert!((0.0..=1.0).contains(&t1));

        bian_model_free(m);
        bian_model_free(m2);
        bian_graph_free(g);
        bian_graph_free(g2);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut g: *mut BianGraph = ptr::null_mut();
        let missing = cstr("/nonexistent/graph.bin");
        assert_eq!(bian_graph_load(missing.as_ptr(), &mut g), BianStatus::Io);
        assert!(g.is_null());
        assert!(last_error().contains("/nonexistent/graph.bin"));

        assert_eq!(bian_graph_load(ptr::null(), &mut g), BianStatus::NullPointer);
        let bad = cstr("n=1");
        assert_eq!(bian_graph_generate(bad.as_ptr(), &mut g), BianStatus::Config);

        let spec = cstr("n=200,fraud_rate=0.1,seed=1");
        assert_eq!(bian_graph_generate(spec.as_ptr(), &mut g), BianStatus::Ok);
        let mut m: *mut BianModel = ptr::null_mut();
        let cfg = cstr("hidden=0");
        assert_eq!(bian_model_train(g, cfg.as_ptr(), &mut m), BianStatus::Config);
        assert!(last_error().contains("hidden"));

        let cfg = cstr("hidden=4\nepochs=1\ntime_freqs=2");
        assert_eq!(bian_model_train(g, cfg.as_ptr(), &mut m), BianStatus::Ok);
        let nodes = [0usize, 999];
        let mut out = [0.0; 2];
        assert_eq!(bian_model_predict(m, g, nodes.as_ptr(), 2, out.as_mut_ptr()), BianStatus::InvalidArgument);
        bian_model_free(m);
        bian_graph_free(g);
        bian_graph_free(ptr::null_mut());
        bian_model_free(ptr::null_mut());
    }
}

#[test]
fn metrics_and_checks() {
    unsafe {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [0u8, 0, 1, 1];
        let mut a = 0.0;
        assert_eq!(bian_auroc(scores.as_ptr(), labels.as_ptr(), 4, &mut a), BianStatus::Ok);
        assert_eq!(a, 0.75);
        let ones = [1u8; 4];
        assert_eq!(bian_auroc(scores.as_ptr(), ones.as_ptr(), 4, &mut a), BianStatus::InvalidArgument);

        let (mut r, mut d) = (1.0, 1.0);
        assert_eq!(bian_verify_lemma(100, 5, &mut r, &mut d), BianStatus::Ok);
        assert!(r <= 1e-9 && d <= 1e-9);
    }
}

/// Compiles and runs a small C program against the generated header and
/// the static library.
#[test]
fn c_program_links_against_the_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("bian.h").exists());
    // target/<profile>/deps/abi-… → target/<profile>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libbian_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "bian.h"

int main(void) {
    BianGraph *g = NULL;
    if (bian_graph_generate("n=300,fraud_rate=0.1,seed=2", &g) != BIAN_STATUS_OK) return 1;
    if (bian_graph_num_nodes(g) != 300) return 2;
    double scores[3] = {0.2, 0.9, 0.4};
    unsigned char labels[3] = {0, 1, 0};
    double a = 0.0;
    if (bian_auroc(scores, labels, 3, &a) != BIAN_STATUS_OK || a != 1.0) return 3;
    BianGraph *missing = NULL;
    if (bian_graph_load("/nonexistent.bin", &missing) != BIAN_STATUS_IO) return 4;
    if (bian_last_error() == NULL) return 5;
    bian_graph_free(g);
    printf("ok\n");
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&header_dir)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "ok\n");
}
