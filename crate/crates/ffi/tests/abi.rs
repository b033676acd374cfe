use std::ffi::{CStr, CString};
use std::ptr;

use irsbim::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(irsbim_last_error()) }.to_string_lossy().into_owned()
}

fn scheme(s: IrsbimScheme, n2: usize, n_t: usize, n3: usize) -> *mut IrsbimSchemeConfig {
    let mut h = ptr::null_mut();
    let st = unsafe { irsbim_scheme_new(s, n2, n_t, n3, IrsbimFamily::Qam, 16, &mut h) };
    assert_eq!(st, IrsbimStatus::Ok, "{}", last_error());
    h
}

#[test]
fn reference_rates() {
    for (s, n2, want) in [(IrsbimScheme::S1, 64, 10), (IrsbimScheme::S2, 64, 14), (IrsbimScheme::S3, 16, 8)] {
        let h = scheme(s, n2, 2, 4);
        let mut b = 0u32;
        assert_eq!(unsafe { irsbim_bpcu(h, &mut b) }, IrsbimStatus::Ok);
        assert_eq!(b, want);
        unsafe { irsbim_scheme_free(h) };
    }
}

#[test]
fn encode_decode_round_trip() {
    let h = scheme(IrsbimScheme::S2, 64, 2, 1);
    let bits: Vec<u8> = (0..14).map(|i| ((i * 7 + 3) % 5 % 2) as u8).collect();
    let mut set = [0usize; 4];
    let (mut len, mut sym) = (0usize, 0usize);
    let st = unsafe { irsbim_encode(h, bits.as_ptr(), bits.len(), set.as_mut_ptr(), set.len(), &mut len, &mut sym) };
    assert_eq!(st, IrsbimStatus::Ok);
    assert_eq!(len, 2);
    let mut back = [9u8; 32];
    let mut n = 0usize;
    let st = unsafe { irsbim_decode(h, set.as_ptr(), len, sym, back.as_mut_ptr(), back.len(), &mut n) };
    assert_eq!(st, IrsbimStatus::Ok);
    assert_eq!(&back[..n], &bits[..]);

    let st = unsafe { irsbim_encode(h, bits.as_ptr(), 3, set.as_mut_ptr(), set.len(), &mut len, &mut sym) };
    assert_eq!(st, IrsbimStatus::Mapping);
    assert!(last_error().contains("expected 14 bits"));
    let st = unsafe { irsbim_encode(h, bits.as_ptr(), bits.len(), set.as_mut_ptr(), 1, &mut len, &mut sym) };
    assert_eq!(st, IrsbimStatus::BufferTooSmall);
    unsafe { irsbim_scheme_free(h) };
}

#[test]
fn bank_access() {
    let h = scheme(IrsbimScheme::S1, 16, 1, 1);
    let mut bank = ptr::null_mut();
    assert_eq!(unsafe { irsbim_bank_new(h, 1, &mut bank) }, IrsbimStatus::Ok);
    let (mut omega, mut dim) = (0, 0);
    assert_eq!(unsafe { irsbim_bank_shape(bank, &mut omega, &mut dim) }, IrsbimStatus::Ok);
    assert_eq!((omega, dim), (256, 16));
    let mut re = vec![0.0; dim];
    let mut im = vec![0.0; dim];
    // pattern 16 * 3 + 0: target 3, first symbol
    assert_eq!(unsafe { irsbim_bank_pattern(bank, 48, re.as_mut_ptr(), im.as_mut_ptr(), dim) }, IrsbimStatus::Ok);
    let nonzero: Vec<usize> = (0..dim).filter(|&n| re[n] != 0.0 || im[n] != 0.0).collect();
    assert_eq!(nonzero, vec![3]);
    assert_eq!(
        unsafe { irsbim_bank_pattern(bank, omega, re.as_mut_ptr(), im.as_mut_ptr(), dim) },
        IrsbimStatus::InvalidArgument
    );
    unsafe {
        irsbim_bank_free(bank);
        irsbim_scheme_free(h);
    }
}

#[test]
fn probabilities() {
    assert_eq!(irsbim_q_function(0.0), 0.5);
    let mut p = 0.0;
    assert_eq!(unsafe { irsbim_prob_ji(1.0, 1, &mut p) }, IrsbimStatus::Ok);
    assert!((p - 0.146_446_609_406_726_24).abs() < 1e-14);
    assert_eq!(unsafe { irsbim_prob_jk(0.0, 3.0, 2, IrsbimBoundModel::Exact, &mut p) }, IrsbimStatus::Ok);
    assert_eq!(p, 0.5);
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        irsbim_prob_jk(1.0, 2.0, 2, IrsbimBoundModel::Exact, &mut a);
        irsbim_prob_jk(-1.0, 2.0, 2, IrsbimBoundModel::Exact, &mut b);
    }
    assert!((a + b - 1.0).abs() < 1e-15);
    assert_eq!(unsafe { irsbim_prob_ji(-1.0, 1, &mut p) }, IrsbimStatus::InvalidArgument);
}

#[test]
fn errors_and_null_pointers() {
    let mut h = ptr::null_mut();
    let st = unsafe { irsbim_scheme_new(IrsbimScheme::S1, 64, 1, 1, IrsbimFamily::Qam, 3, &mut h) };
    assert_eq!(st, IrsbimStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert!(h.is_null());
    assert_eq!(unsafe { irsbim_bpcu(ptr::null(), ptr::null_mut()) }, IrsbimStatus::NullPointer);
    unsafe { irsbim_scheme_free(ptr::null_mut()) };
    let ok = scheme(IrsbimScheme::S1, 64, 1, 1);
    assert!(last_error().is_empty());
    unsafe { irsbim_scheme_free(ok) };
}

#[test]
fn config_validation() {
    let mut failures = 99;
    let good = CString::new("schema_version = 1\n").unwrap();
    assert_eq!(unsafe { irsbim_validate_config(good.as_ptr(), &mut failures) }, IrsbimStatus::Ok);
    assert_eq!(failures, 0);
    let tight = CString::new("schema_version = 1\n[geometry]\nirs1_spacing_m = 0.004\n").unwrap();
    assert_eq!(unsafe { irsbim_validate_config(tight.as_ptr(), &mut failures) }, IrsbimStatus::Ok);
    assert!(failures >= 1);
    let bad = CString::new("schema_version = 1\n[sim]\ntrials = \"x\"\n").unwrap();
    assert_eq!(unsafe { irsbim_validate_config(bad.as_ptr(), &mut failures) }, IrsbimStatus::Config);
    assert!(last_error().contains("trials"));
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(irsbim_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/irsbim.h")).unwrap();
    for sym in [
        "irsbim_last_error",
        "irsbim_scheme_new",
        "irsbim_scheme_free",
        "irsbim_bpcu",
        "irsbim_encode",
        "irsbim_decode",
        "irsbim_bank_new",
        "irsbim_bank_pattern",
        "irsbim_prob_ji",
        "irsbim_prob_jk",
        "irsbim_validate_config",
        "IRSBIM_STATUS_OK",
        "typedef struct IrsbimBank IrsbimBank",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let status = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(format!("{dir}/include"))
        .arg(format!("{dir}/examples/smoke.c"))
        .status();
    match status {
        Ok(s) => assert!(s.success(), "C compiler rejected the header"),
        Err(_) => eprintln!("no C compiler found; skipped"),
    }
}
