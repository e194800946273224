use std::ffi::{c_char, CStr};
use std::ptr;

use mabmech_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; mab_last_error_length() + 1];
    let n = unsafe { mab_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string();
    assert_eq!(s.len(), n);
    s
}

fn new_mech(rule: &[u8], k: usize, t: usize) -> *mut MabMechanism {
    let mut h = ptr::null_mut();
    let st = unsafe { mab_mechanism_new(rule.as_ptr().cast(), k, t, 4.0, &mut h) };
    assert_eq!(st, MabStatus::Ok, "{}", last_error());
    assert!(!h.is_null());
    h
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(mab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn unknown_rule_is_config_error() {
    let mut h = ptr::null_mut();
    let st = unsafe { mab_mechanism_new(c"greedy".as_ptr(), 2, 10, 1.0, &mut h) };
    assert_eq!(st, MabStatus::Config);
    assert!(h.is_null());
    let msg = last_error();
    assert!(msg.contains("naive, ucb1, elimination, psim"), "{msg}");
}

#[test]
fn null_pointers_are_reported() {
    let st = unsafe { mab_mechanism_new(ptr::null(), 2, 10, 1.0, ptr::null_mut()) };
    assert_eq!(st, MabStatus::NullPointer);
    let h = new_mech(b"naive\0", 2, 4);
    let st = unsafe { mab_mechanism_run(h, ptr::null(), ptr::null(), 0, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(st, MabStatus::NullPointer);
    unsafe { mab_mechanism_free(h) };
    unsafe { mab_mechanism_free(ptr::null_mut()) };
}

#[test]
fn truncated_error_message() {
    let mut h = ptr::null_mut();
    unsafe { mab_mechanism_new(c"nope".as_ptr(), 2, 10, 1.0, &mut h) };
    let mut buf = [0 as c_char; 6];
    let n = unsafe { mab_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, 5);
    assert_eq!(buf[5], 0);
    assert_eq!(unsafe { mab_last_error_message(ptr::null_mut(), 3) }, 0);
}

#[test]
fn naive_run_matches_library() {
    let (k, t) = (2, 12);
    let h = new_mech(b"naive\0", k, t);
    let rows = ["110110011010", "101010101011"];
    let clicks: Vec<u8> = rows.iter().flat_map(|r| r.bytes().map(|b| b - b'0')).collect();
    let bids = [3.0, 2.0];
    let mut agents = vec![0usize; t];
    let mut clicked = vec![0u8; t];
    let mut pay = vec![0.0; k];
    let st = unsafe { mab_mechanism_run(h, bids.as_ptr(), clicks.as_ptr(), 9, agents.as_mut_ptr(), clicked.as_mut_ptr(), pay.as_mut_ptr()) };
    assert_eq!(st, MabStatus::Ok, "{}", last_error());

    let rho = mabmech::Realization::from_rows(&rows).unwrap();
    let mut mech = mabmech::mechanisms::NaiveMechanism::<f64>::new(k, t).unwrap();
    let want = mabmech::mechanisms::Mechanism::run(&mut mech, &bids, &rho, 9).unwrap();
    assert_eq!(agents, want.history.allocations().collect::<Vec<_>>());
    assert_eq!(clicked, want.history.records().iter().map(|r| r.click as u8).collect::<Vec<_>>());
    assert_eq!(pay, want.payments);

    let mut total = 0.0;
    for i in 0..k {
        let mut p = f64::NAN;
        let st = unsafe { mab_myerson_payment(h, bids.as_ptr(), clicks.as_ptr(), i, 0.0, &mut p) };
        assert_eq!(st, MabStatus::Ok);
        assert!((p - pay[i]).abs() <= 1e-6 * bids[i], "agent {i}: {p} vs {}", pay[i]);
        total += p;
    }
    assert!(total >= 0.0);
    unsafe { mab_mechanism_free(h) };
}

#[test]
fn dimension_errors() {
    let h = new_mech(b"ucb1\0", 2, 3);
    let clicks = [0u8; 6];
    let bids = [1.0, 1.0];
    let mut p = 0.0;
    let st = unsafe { mab_myerson_payment(h, bids.as_ptr(), clicks.as_ptr(), 5, 0.0, &mut p) };
    assert_eq!(st, MabStatus::Config);
    unsafe { mab_mechanism_free(h) };
}

#[test]
fn psim_is_not_deterministic() {
    let h = new_mech(b"psim\0", 2, 20);
    let clicks = [1u8; 40];
    let bids = [1.0, 2.0];
    let mut p = 0.0;
    let st = unsafe { mab_myerson_payment(h, bids.as_ptr(), clicks.as_ptr(), 0, 0.0, &mut p) };
    assert_eq!(st, MabStatus::NonDeterministic);
    unsafe { mab_mechanism_free(h) };
}

#[test]
fn psim_worked_price() {
    let bids = [0.9, 0.6];
    let clicks = [3u64, 2];
    let mut p = f64::NAN;
    let st = unsafe { mab_psim_price(2, 100, 1.0, bids.as_ptr(), clicks.as_ptr(), 0, &mut p) };
    assert_eq!(st, MabStatus::Ok);
    assert!((0.0..=0.9).contains(&p));
    let st = unsafe { mab_psim_price(2, 100, 1.0, bids.as_ptr(), clicks.as_ptr(), 2, &mut p) };
    assert_eq!(st, MabStatus::Config);
}

#[test]
fn checks() {
    let grid = [1.0, 2.0, 3.0, 4.0];
    let st = unsafe { mab_check(c"naive".as_ptr(), 2, 3, MabCheck::Truthful, grid.as_ptr(), grid.len(), 16) };
    assert_eq!(st, MabStatus::Ok);
    let st = unsafe { mab_check(c"ucb1".as_ptr(), 2, 3, MabCheck::Expsep, grid.as_ptr(), grid.len(), 16) };
    assert_eq!(st, MabStatus::Violation);
    let ce = mabmech::verify::Counterexample::<f64>::parse_text(&last_error()).unwrap();
    assert_eq!(ce.kind, mabmech::verify::ViolationKind::ExplorationSeparation);
    let st = unsafe { mab_check(c"naive".as_ptr(), 3, 9, MabCheck::Pointwise, grid.as_ptr(), grid.len(), 16) };
    assert_eq!(st, MabStatus::Budget);
    let st = unsafe { mab_check(c"psim".as_ptr(), 2, 3, MabCheck::Pointwise, grid.as_ptr(), grid.len(), 16) };
    assert_eq!(st, MabStatus::NonDeterministic);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mabmech.h")).unwrap();
    for f in [
        "mab_last_error_length",
        "mab_last_error_message",
        "mab_version",
        "mab_mechanism_new",
        "mab_mechanism_free",
        "mab_mechanism_run",
        "mab_myerson_payment",
        "mab_psim_price",
        "mab_check",
        "typedef struct MabMechanism MabMechanism",
        "MAB_STATUS_BUDGET = 3",
    ] {
        assert!(header.contains(f), "missing {f}");
    }
}
