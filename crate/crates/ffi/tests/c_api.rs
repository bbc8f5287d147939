use std::ffi::{CStr, CString};
use std::ptr;

use cvbench_ffi::*;

fn last_error() -> String {
    let p = cv_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(cv_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn bounds_through_c() {
    let mut out = f64::NAN;
    unsafe {
        assert_eq!(cv_classical_bound(1.0, 1.0, 1, &mut out), CvStatus::Ok);
        assert!((out - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cv_quadrature_threshold(2.0, 0.1, &mut out), CvStatus::Ok);
        let direct = cvbench::bounds::quadrature_threshold(&cvbench::bounds::TaskSpec::new(2.0, 0.1).unwrap()).unwrap();
        assert_eq!(out, direct);
        assert_eq!(cv_quantum_amp_bound(2.0, &mut out), CvStatus::Ok);
        assert!((out - 0.5).abs() < 1e-15);

        assert_eq!(cv_quantum_amp_bound(0.5, &mut out), CvStatus::InvalidInput);
        assert!(!last_error().is_empty());
        assert_eq!(cv_classical_bound(1.0, -1.0, 1, &mut out), CvStatus::InvalidInput);
        assert_eq!(cv_classical_bound(1.0, 1.0, 1, ptr::null_mut()), CvStatus::NullPointer);
        assert!(last_error().contains("null"));
    }
}

#[test]
fn channel_lifecycle() {
    unsafe {
        let json = CString::new(r#"{"type":"pure_loss","T":0.5}"#).unwrap();
        let mut loss = ptr::null_mut();
        assert_eq!(cv_channel_from_json(json.as_ptr(), &mut loss), CvStatus::Ok);

        let mut cp = false;
        assert_eq!(cv_channel_is_cp(loss, &mut cp), CvStatus::Ok);
        assert!(cp);

        // Pure loss with T = eta is the perfect benchmark: F = 1.
        let mut f = 0.0;
        assert_eq!(cv_channel_average_fidelity(loss, 0.5, 0.3, &mut f), CvStatus::Ok);
        assert!((f - 1.0).abs() < 1e-12);

        let mut both = ptr::null_mut();
        assert_eq!(cv_channel_compose(loss, loss, &mut both), CvStatus::Ok);
        assert_eq!(cv_channel_average_fidelity(both, 0.25, 0.3, &mut f), CvStatus::Ok);
        assert!((f - 1.0).abs() < 1e-12);

        let mut err = f64::NAN;
        assert_eq!(
            cv_channel_average_fidelity_fock(both, 0.25, 0.5, 0, &mut f, &mut err),
            CvStatus::Ok
        );
        assert!((f - 1.0).abs() < 1e-6, "{f}");
        assert!(err < 1e-6);

        let text = cv_channel_to_json(both);
        assert!(!text.is_null());
        let s = CStr::from_ptr(text).to_str().unwrap().to_owned();
        cv_string_free(text);
        assert!(s.contains("\"K\""), "{s}");

        cv_channel_free(both);
        cv_channel_free(loss);
        cv_channel_free(ptr::null_mut());
    }
}

#[test]
fn raw_channels_and_states() {
    unsafe {
        let k = [1.0, 0.0, 0.0, 1.0];
        let bad_m = [0.1, 0.0, 0.0, 0.1];
        let mut ch = ptr::null_mut();
        // Identity gain with too little noise is fine; negative noise is not.
        assert_eq!(
            cv_channel_from_matrices(k.as_ptr(), bad_m.as_ptr(), ptr::null(), &mut ch),
            CvStatus::Ok
        );
        let mut cp = false;
        assert_eq!(cv_channel_is_cp(ch, &mut cp), CvStatus::Ok);
        assert!(cp);
        cv_channel_free(ch);

        let amp = [2.0, 0.0, 0.0, 2.0];
        let mut ch = ptr::null_mut();
        assert_eq!(
            cv_channel_from_matrices(amp.as_ptr(), bad_m.as_ptr(), ptr::null(), &mut ch),
            CvStatus::Ok
        );
        assert_eq!(cv_channel_is_cp(ch, &mut cp), CvStatus::Ok);
        assert!(!cp);
        let mut f = 0.0;
        assert_eq!(
            cv_channel_average_fidelity(ch, 4.0, 1.0, &mut f),
            CvStatus::NotCompletelyPositive
        );
        let mut fock_f = 0.0;
        assert_eq!(
            cv_channel_average_fidelity_fock(ch, 4.0, 1.0, 0, &mut fock_f, ptr::null_mut()),
            CvStatus::Unsupported
        );
        cv_channel_free(ch);

        let mut st = ptr::null_mut();
        assert_eq!(cv_state_coherent(1.0, -0.5, &mut st), CvStatus::Ok);
        let mut fid = 0.0;
        assert_eq!(cv_state_fidelity_to_coherent(st, 1.0, -0.5, &mut fid), CvStatus::Ok);
        assert!((fid - 1.0).abs() < 1e-14);
        assert_eq!(cv_state_fidelity_to_coherent(st, 0.0, -0.5, &mut fid), CvStatus::Ok);
        assert!((fid - (-1.0f64).exp()).abs() < 1e-14);

        let json = CString::new(r#"{"type":"quantum_limited_amp","G":4.0}"#).unwrap();
        let mut amp = ptr::null_mut();
        assert_eq!(cv_channel_from_json(json.as_ptr(), &mut amp), CvStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(cv_state_apply(amp, st, &mut out), CvStatus::Ok);
        let (mut d, mut g) = ([0.0; 2], [0.0; 4]);
        assert_eq!(cv_state_moments(out, d.as_mut_ptr(), g.as_mut_ptr()), CvStatus::Ok);
        // d = 2 * sqrt(2) (1, -0.5); gamma = (G/2 + (G-1)/2) E.
        let r2 = 2f64.sqrt();
        assert!((d[0] - 2.0 * r2).abs() < 1e-12 && (d[1] + r2).abs() < 1e-12, "{d:?}");
        assert!(
            (g[0] - 3.5).abs() < 1e-12 && g[1].abs() < 1e-12 && (g[3] - 3.5).abs() < 1e-12,
            "{g:?}"
        );

        let gamma = [0.1, 0.0, 0.0, 0.1];
        let mut bad = ptr::null_mut();
        assert_eq!(
            cv_state_new(d.as_ptr(), gamma.as_ptr(), &mut bad),
            CvStatus::InvalidInput
        );
        assert!(bad.is_null());

        cv_state_free(out);
        cv_state_free(st);
        cv_channel_free(amp);
    }
}

#[test]
fn certification_through_c() {
    use cvbench::certifier::{alpha_grid, synthesize_dataset};
    use cvbench::gaussian::GaussianChannel;

    let lambda = 0.2;
    let alphas = alpha_grid(lambda, 8).unwrap();
    // sqrt(eta) gain with a little noise: inside the quantum domain.
    let ch = GaussianChannel::isotropic(0.5f64.sqrt(), 0.3);
    let ds = synthesize_dataset(&ch, &alphas, 4000, lambda, 11).unwrap();
    let csv = CString::new(ds.to_csv()).unwrap();
    unsafe {
        let mut handle = ptr::null_mut();
        assert_eq!(cv_dataset_from_csv(csv.as_ptr(), lambda, &mut handle), CvStatus::Ok);
        let mut n = 0usize;
        assert_eq!(cv_dataset_sample_count(handle, &mut n), CvStatus::Ok);
        assert_eq!(n, 8 * 2 * 4000);

        let mut report = ptr::null_mut();
        assert_eq!(
            cv_certify_variance(handle, 0.5, lambda, 3.0, 200, 1, &mut report),
            CvStatus::Ok
        );
        let mut verdict = -1;
        assert_eq!(cv_report_verdict(report, &mut verdict), CvStatus::Ok);
        assert_eq!(verdict, 1);
        let mut margin = 0.0;
        assert_eq!(cv_report_margin(report, &mut margin), CvStatus::Ok);
        assert!(margin > 0.0);
        let text = cv_report_to_json(report);
        let s = CStr::from_ptr(text).to_str().unwrap().to_owned();
        cv_string_free(text);
        assert!(s.contains("QUANTUM_DOMAIN"), "{s}");
        cv_report_free(report);

        let mut estimated = ptr::null_mut();
        assert_eq!(
            cv_certify_variance(handle, f64::NAN, lambda, 3.0, 200, 1, &mut estimated),
            CvStatus::Ok
        );
        cv_report_free(estimated);
        cv_dataset_free(handle);

        let broken = CString::new("alpha_re,alpha_im,quad_label,value\n0,0,plus,1\n0,0,x,2\n").unwrap();
        let mut h = ptr::null_mut();
        assert_eq!(cv_dataset_from_csv(broken.as_ptr(), lambda, &mut h), CvStatus::Csv);
        assert!(last_error().contains('3'), "{}", last_error());
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cvbench.h")).unwrap();
    let source = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exported: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() > 20);
    for name in exported {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in [
        "CvChannel",
        "CvState",
        "CvDataset",
        "CvReport",
        "CV_STATUS_NOT_COMPLETELY_POSITIVE",
    ] {
        assert!(header.contains(ty), "{ty}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile_dir();
    let src = dir.join("use_header.c");
    std::fs::write(
        &src,
        "#include \"cvbench.h\"\nint main(void) { double b; CvChannel *ch = 0; (void)ch; return cv_classical_bound(1.0, 1.0, 1, &b) == CV_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("cvbench-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
