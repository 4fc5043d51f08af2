use std::ffi::{CStr, CString};
use std::ptr;

use mrbm::data::container::{write_model, StoredModel};
use mrbm::masked::{GibbsConfig, MaskedModel, OutlierConfig};
use mrbm::rng::{stream, DOMAIN_SEGMENT};
use mrbm::{BetaRbmParams, MixedRbmParams};
use mrbm_ffi::*;

fn small_model() -> MaskedModel {
    let mut rng = stream(11, &[0]);
    let fg = MixedRbmParams::init(9, 4, None, &mut rng).unwrap();
    let mut bg = BetaRbmParams::init(9, 3, None, &mut rng).unwrap();
    bg.a_vis.iter_mut().for_each(|a| *a = 3.0);
    bg.c_vis.iter_mut().for_each(|c| *c = 3.0);
    MaskedModel::new(fg, bg).unwrap()
}

fn saved(model: StoredModel) -> (tempfile::TempDir, CString) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mrbm");
    write_model(&path, &model, Default::default()).unwrap();
    (dir, CString::new(path.to_str().unwrap()).unwrap())
}

unsafe fn load(path: &CString) -> *mut MrbmModel {
    let mut h = ptr::null_mut();
    assert_eq!(mrbm_model_load(path.as_ptr(), &mut h), MrbmStatus::Ok);
    assert!(!h.is_null());
    h
}

fn last_error() -> String {
    let p = mrbm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn segment_matches_library() {
    let model = small_model();
    let (_dir, path) = saved(StoredModel::Masked(model.clone()));
    let image: Vec<f64> = (0..9).map(|i| (i as f64 + 0.5) / 9.0).collect();
    let mut opts = mrbm_segment_options_default();
    opts.sweeps = 20;
    opts.burn_in = 5;
    opts.seed = 3;
    let mut mask = vec![0.0; 9];
    let mut hidden = vec![0.0; 4];
    unsafe {
        let h = load(&path);
        let mut n = 0;
        assert_eq!(mrbm_model_n_pixels(h, &mut n), MrbmStatus::Ok);
        assert_eq!(n, 9);
        assert_eq!(mrbm_model_n_hidden(h, &mut n), MrbmStatus::Ok);
        assert_eq!(n, 4);
        let mut kind = MrbmModelKind::BetaRbm;
        assert_eq!(mrbm_model_kind(h, &mut kind), MrbmStatus::Ok);
        assert_eq!(kind, MrbmModelKind::Masked);
        let st = mrbm_segment(h, image.as_ptr(), 9, &opts, 2, mask.as_mut_ptr(), hidden.as_mut_ptr(), 4);
        assert_eq!(st, MrbmStatus::Ok);
        assert!(mrbm_last_error().is_null());
        mrbm_model_free(h);
    }
    let gcfg = GibbsConfig::new(20, 5, 3).unwrap();
    let expected = model
        .segment(&image, &OutlierConfig::enabled(0.3).unwrap(), &gcfg, &mut stream(3, &[DOMAIN_SEGMENT, 2]))
        .unwrap();
    assert_eq!(mask, expected.mask_probs);
    assert_eq!(hidden, expected.hf_means);
}

#[test]
fn error_codes() {
    let (_dir, path) = saved(StoredModel::Masked(small_model()));
    let opts = mrbm_segment_options_default();
    let image = vec![0.5; 9];
    let mut mask = vec![0.0; 9];
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(mrbm_model_load(ptr::null(), &mut h), MrbmStatus::NullPointer);
        assert!(last_error().contains("null"));
        let missing = CString::new("/nonexistent/model.mrbm").unwrap();
        assert_eq!(mrbm_model_load(missing.as_ptr(), &mut h), MrbmStatus::Io);
        assert_eq!(mrbm_model_from_bytes(b"junk".as_ptr(), 4, &mut h), MrbmStatus::Format);
        assert!(h.is_null());

        let h = load(&path);
        let st = mrbm_segment(h, image.as_ptr(), 8, &opts, 0, mask.as_mut_ptr(), ptr::null_mut(), 0);
        assert_eq!(st, MrbmStatus::Dimension);
        assert!(last_error().contains("expected 9"));
        let bad = vec![1.5; 9];
        let st = mrbm_segment(h, bad.as_ptr(), 9, &opts, 0, mask.as_mut_ptr(), ptr::null_mut(), 0);
        assert_eq!(st, MrbmStatus::InvalidArgument);
        let mut o = opts;
        o.burn_in = o.sweeps;
        let st = mrbm_segment(h, image.as_ptr(), 9, &o, 0, mask.as_mut_ptr(), ptr::null_mut(), 0);
        assert_eq!(st, MrbmStatus::InvalidArgument);
        let mut q = vec![0.0; 4];
        let st = mrbm_hidden_means(h, image.as_ptr(), 9, q.as_mut_ptr(), 4);
        assert_eq!(st, MrbmStatus::WrongModelKind);
        mrbm_model_free(h);
        mrbm_model_free(ptr::null_mut());
    }
}

#[test]
fn beta_model_features_and_save() {
    let bg = small_model().bg;
    let (dir, path) = saved(StoredModel::Beta(bg.clone()));
    let image = vec![0.25; 9];
    let mut q = vec![0.0; 3];
    unsafe {
        let h = load(&path);
        assert_eq!(mrbm_hidden_means(h, image.as_ptr(), 9, q.as_mut_ptr(), 3), MrbmStatus::Ok);
        assert_eq!(q, bg.hidden_conditional(&image).unwrap());
        let copy = CString::new(dir.path().join("copy.mrbm").to_str().unwrap()).unwrap();
        assert_eq!(mrbm_model_save(h, copy.as_ptr()), MrbmStatus::Ok);
        mrbm_model_free(h);
        let a = std::fs::read(dir.path().join("m.mrbm")).unwrap();
        let mut h2 = ptr::null_mut();
        assert_eq!(mrbm_model_from_bytes(a.as_ptr(), a.len(), &mut h2), MrbmStatus::Ok);
        mrbm_model_free(h2);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mrbm.h")).unwrap();
    for name in [
        "mrbm_model_load",
        "mrbm_model_from_bytes",
        "mrbm_model_save",
        "mrbm_model_free",
        "mrbm_segment",
        "mrbm_hidden_means",
        "mrbm_last_error",
        "MRBM_STATUS_DIMENSION",
        "typedef struct MrbmModel MrbmModel",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let v = unsafe { CStr::from_ptr(mrbm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
