use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use sedetect_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    sed_string_free(p);
    s
}

unsafe fn last_error() -> String {
    let p = sed_last_error();
    assert!(!p.is_null());
    CStr::from_ptr(p).to_string_lossy().into_owned()
}

const PAGE: &str = "== Discography ==
=== Albums with Guns N' Roses ===
* ''[[Use Your Illusion I]]'' (1991)
* ''[[Use Your Illusion II]]'' (1991)
* ''[[The Spaghetti Incident?]]'' (1993)
";

#[test]
fn parse_encode_decode_score_round_trip() {
    unsafe {
        let mut out = ptr::null_mut();
        let st = sed_parse_page(c("Gilby Clarke").as_ptr(), c(PAGE).as_ptr(), 3, &mut out);
        assert_eq!(st, SedStatus::Ok);
        let listings = take(out);
        assert_eq!(listings.lines().count(), 1);
        let mut listing: serde_json::Value = serde_json::from_str(listings.lines().next().unwrap()).unwrap();

        // Make the first link of every item its subject.
        for item in listing["items"].as_array_mut().unwrap() {
            let m = &mut item["mentions"][0];
            m["is_subject"] = true.into();
            m["label"] = "WORK_OF_ART".into();
        }

        let mut enc = ptr::null_mut();
        assert_eq!(sed_encoder_new(ptr::null(), &mut enc), SedStatus::Ok);
        let mut out = ptr::null_mut();
        let st = sed_encoder_encode(enc, c(&listing.to_string()).as_ptr(), SedLabelMode::Typed, &mut out);
        assert_eq!(st, SedStatus::Ok);
        let chunks = take(out);
        sed_encoder_free(enc);
        let chunk: serde_json::Value = serde_json::from_str(chunks.lines().next().unwrap()).unwrap();
        assert_eq!(chunk["tokens"][0], "[CLS]");

        let pred = serde_json::json!({
            "listing_id": chunk["listing_id"],
            "chunk_index": chunk["chunk_index"],
            "labels": chunk["labels"],
        });
        let mut out = ptr::null_mut();
        let st = sed_decode_mentions(c(&chunk.to_string()).as_ptr(), c(&pred.to_string()).as_ptr(), &mut out);
        assert_eq!(st, SedStatus::Ok);
        let mentions = take(out);
        assert_eq!(mentions.lines().count(), 3);

        let mut scorer = ptr::null_mut();
        assert_eq!(sed_scorer_new(&mut scorer), SedStatus::Ok);
        let m = c(&mentions);
        assert_eq!(sed_scorer_add(scorer, m.as_ptr(), m.as_ptr()), SedStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(sed_scorer_report(scorer, &mut out), SedStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        sed_scorer_free(scorer);
        assert_eq!(report["scenarios"]["Strict"]["f1"], 1.0);
        assert_eq!(report["scenarios"]["Strict"]["counts"]["COR"], 3);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(sed_parse_page(ptr::null(), c("x").as_ptr(), 3, &mut out), SedStatus::NullPointer);
        assert!(last_error().contains("title"));

        let mut enc = ptr::null_mut();
        let st = sed_encoder_new(c("{\"max_seq_len\": 4}").as_ptr(), &mut enc);
        assert_eq!(st, SedStatus::InvalidConfig);
        assert!(enc.is_null());

        let st = sed_decode_mentions(c("{").as_ptr(), c("{}").as_ptr(), &mut out);
        assert_eq!(st, SedStatus::InvalidJson);

        let chunk = r#"{"listing_id":"L","chunk_index":0,"tokens":["[CLS]","[CXE]","[E1]","a","[SEP]"],"item_spans":{"0":[2,4]}}"#;
        let pred = r#"{"listing_id":"L","chunk_index":0,"labels":["IGNORE"]}"#;
        assert_eq!(sed_decode_mentions(c(chunk).as_ptr(), c(pred).as_ptr(), &mut out), SedStatus::Misaligned);
        assert!(last_error().contains("L/0"));

        let mut scorer = ptr::null_mut();
        sed_scorer_new(&mut scorer);
        let dup = "{\"listing_id\":\"L\",\"item_index\":0,\"start_word\":0,\"end_word\":1,\"surface\":\"a\",\"label\":\"PERSON\"}\n".repeat(2);
        assert_eq!(sed_scorer_add(scorer, c("").as_ptr(), c(&dup).as_ptr()), SedStatus::DuplicateMention);
        sed_scorer_free(scorer);

        // A successful call clears the previous message.
        assert_eq!(sed_parse_page(c("t").as_ptr(), c("").as_ptr(), 3, &mut out), SedStatus::Ok);
        sed_string_free(out);
        assert!(sed_last_error().is_null());
    }
}

#[test]
fn free_functions_accept_null() {
    unsafe {
        sed_string_free(ptr::null_mut());
        sed_encoder_free(ptr::null_mut());
        sed_scorer_free(ptr::null_mut());
        let v = CStr::from_ptr(sed_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/sedetect.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "sed_parse_page",
        "sed_encoder_new",
        "sed_encoder_encode",
        "sed_encoder_free",
        "sed_decode_mentions",
        "sed_scorer_new",
        "sed_scorer_add",
        "sed_scorer_report",
        "sed_scorer_free",
        "sed_last_error",
        "sed_string_free",
    ] {
        assert!(text.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(text.contains("typedef struct SedEncoder SedEncoder;"));

    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-std=c99", "-Wall", "-Werror"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler found, syntax check skipped");
        return;
    };
    assert!(status.success());
}
