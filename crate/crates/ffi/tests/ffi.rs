use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use polynorta_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { pn_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn fit_pwm(dist: &str, degree: usize) -> (PnStatus, *mut PnModel) {
    let d = CString::new(dist).unwrap();
    let mut m = ptr::null_mut();
    let s = unsafe { pn_fit_pwm(d.as_ptr(), degree, false, &mut m) };
    (s, m)
}

fn lognormal() -> *mut PnModel {
    let d = CString::new("lognormal:0,1").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { pn_fit_percentile(d.as_ptr(), 11, 0.0, &mut m) }, PnStatus::PnOk);
    m
}

#[test]
fn coefficient_round_trip() {
    let c = [0.5, 2.0, 0.0, 0.1];
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(pn_model_from_coeffs(c.as_ptr(), c.len(), &mut m), PnStatus::PnOk);
        assert_eq!(pn_model_degree(m), 3);
        let mut out = [0.0; 4];
        assert_eq!(pn_model_coeffs(m, out.as_mut_ptr(), 4), PnStatus::PnOk);
        assert_eq!(out, c);
        assert_eq!(pn_model_coeffs(m, out.as_mut_ptr(), 3), PnStatus::PnError);
        assert_eq!(pn_model_evaluate(m, 2.0), 0.5 + 4.0 + 0.8);
        let z = [0.0, 1.0];
        let mut x = [0.0; 2];
        assert_eq!(pn_model_transform(m, z.as_ptr(), x.as_mut_ptr(), 2), PnStatus::PnOk);
        assert_eq!(x, [0.5, 2.6]);
        pn_model_free(m);
    }
}

#[test]
fn fit_and_error_codes() {
    let (s, m) = fit_pwm("beta:2,2", 5);
    assert_eq!(s, PnStatus::PnOk);
    assert!((unsafe { pn_model_evaluate(m, 0.0) } - 0.5).abs() < 1e-9);
    unsafe { pn_model_free(m) };

    let (s, m) = fit_pwm("beta:2", 5);
    assert_eq!(s, PnStatus::PnSchema);
    assert!(m.is_null());
    assert!(!last_error().is_empty());

    let (s, _) = fit_pwm("beta:2,2", 14);
    assert_eq!(s, PnStatus::PnConditioning);
    assert!(last_error().contains("cap"), "{}", last_error());

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { pn_model_from_coeffs(ptr::null(), 2, &mut out) }, PnStatus::PnError);
}

#[test]
fn sample_fit_matches_library() {
    let x: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).cos()).collect();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(pn_fit_pwm_sample(x.as_ptr(), x.len(), 3, false, &mut m), PnStatus::PnOk);
        let lib = polynorta::fit_pwm::fit_pwm_sample(&x, 3, Default::default()).unwrap();
        let mut c = [0.0; 4];
        pn_model_coeffs(m, c.as_mut_ptr(), 4);
        assert_eq!(&c[..], lib.model.coeffs());
        pn_model_free(m);
    }
}

#[test]
fn rho_solve_and_bounds() {
    let ln = lognormal();
    unsafe {
        let mut rz = 0.0;
        assert_eq!(pn_rho_solve(ln, ln, 0.5, &mut rz), PnStatus::PnOk);
        assert!((rz - (1.0 + 0.5 * (std::f64::consts::E - 1.0)).ln()).abs() < 5e-3);
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(pn_rho_bounds(ln, ln, &mut lo, &mut hi), PnStatus::PnOk);
        assert!(lo > -0.38 && lo < -0.36 && hi > 0.99);
        assert_eq!(pn_rho_solve(ln, ln, -0.9, &mut rz), PnStatus::PnInfeasible);
        assert!(last_error().contains("infeasible"));
        assert_eq!(pn_rho_solve(ptr::null(), ln, 0.5, &mut rz), PnStatus::PnError);
        pn_model_free(ln);
    }
}

#[test]
fn vector_generation_is_deterministic() {
    let ln = lognormal();
    let (_, beta) = fit_pwm("beta:2,2", 11);
    let models = [beta as *const PnModel, ln as *const PnModel];
    let rx = [1.0, 0.4, 0.4, 1.0];
    unsafe {
        let mut vm = ptr::null_mut();
        assert_eq!(pn_vector_model_new(models.as_ptr(), 2, rx.as_ptr(), false, &mut vm), PnStatus::PnOk);
        assert_eq!(pn_vector_model_dimension(vm), 2);
        let mut rz = [0.0; 4];
        assert_eq!(pn_vector_model_normal_correlation(vm, rz.as_mut_ptr(), 4), PnStatus::PnOk);
        assert_eq!(rz[0], 1.0);
        assert!(rz[1] > 0.4);
        let n = 5000;
        let mut a = vec![0.0; 2 * n];
        let mut b = vec![0.0; 2 * n];
        assert_eq!(pn_generate(vm, n, 3, 1, a.as_mut_ptr(), a.len()), PnStatus::PnOk);
        assert_eq!(pn_generate(vm, n, 3, 1, b.as_mut_ptr(), b.len()), PnStatus::PnOk);
        assert_eq!(a, b);
        assert_eq!(pn_generate(vm, n, 3, 1, b.as_mut_ptr(), b.len() - 1), PnStatus::PnError);
        pn_vector_model_free(vm);

        let bad = [1.0, 0.9, 0.9, 1.0];
        let mut vm = ptr::null_mut();
        let pair = [ln as *const PnModel, ln as *const PnModel];
        assert_eq!(pn_vector_model_new(pair.as_ptr(), 2, bad.as_ptr(), false, &mut vm), PnStatus::PnOk);
        pn_vector_model_free(vm);
        let neg = [1.0, -0.9, -0.9, 1.0];
        assert_eq!(
            pn_vector_model_new(pair.as_ptr(), 2, neg.as_ptr(), false, &mut vm),
            PnStatus::PnInfeasible
        );
        pn_model_free(ln);
        pn_model_free(beta);
    }
}

#[test]
fn header_declares_the_interface() {
    let header = include_str!("../include/polynorta.h");
    for name in [
        "pn_last_error_message",
        "pn_model_from_coeffs",
        "pn_fit_pwm",
        "pn_fit_pwm_sample",
        "pn_fit_percentile",
        "pn_model_coeffs",
        "pn_model_evaluate",
        "pn_model_free",
        "pn_rho_solve",
        "pn_vector_model_new",
        "pn_generate",
        "pn_vector_model_free",
        "typedef struct PnModel PnModel",
        "PN_INFEASIBLE = 2",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

/// Compiles a C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler on PATH; skipping");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let target_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = target_dir.join("libpolynorta_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let out = std::env::temp_dir().join(format!("polynorta_smoke_{}", std::process::id()));
    let status = Command::new("cc")
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
