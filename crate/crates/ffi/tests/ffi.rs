use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use kiwi::models::QuetchConfig;
use kiwi::synthetic::{generate_triplets, label_corpus, write_samples, SyntheticConfig};
use kiwi::trainer::{train, DataConfig, ModelConfig, TrainConfig, TrainingConfig};
use kiwi::Stream;
use kiwi_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = kiwi_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(kiwi_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn hter_and_labels() {
    let (mt, pe) = (c("a b c"), c("a x c d"));
    let mut h = 0.0;
    assert_eq!(unsafe { kiwi_hter(mt.as_ptr(), pe.as_ptr(), &mut h) }, KiwiStatus::Ok);
    assert_eq!(h, 0.5);
    assert!(kiwi_last_error().is_null());

    let mut labels = ptr::null_mut();
    assert_eq!(unsafe { kiwi_label(mt.as_ptr(), pe.as_ptr(), &mut labels) }, KiwiStatus::Ok);
    let (mut hter, mut edits) = (0.0, 0);
    assert_eq!(unsafe { kiwi_labels_hter(labels, &mut hter, &mut edits) }, KiwiStatus::Ok);
    assert_eq!((hter, edits), (0.5, 2));

    let mut buf = [9u8; 8];
    let mut len = 0;
    assert_eq!(unsafe { kiwi_labels_mt_tags(labels, buf.as_mut_ptr(), buf.len(), &mut len) }, KiwiStatus::Ok);
    assert_eq!(&buf[..len], &[0, 1, 0]);
    assert_eq!(unsafe { kiwi_labels_gap_tags(labels, buf.as_mut_ptr(), 2, &mut len) }, KiwiStatus::BufferTooSmall);
    assert_eq!(len, 4);
    assert_eq!(unsafe { kiwi_labels_gap_tags(labels, buf.as_mut_ptr(), buf.len(), &mut len) }, KiwiStatus::Ok);
    assert_eq!(&buf[..len], &[0, 0, 0, 1]);
    unsafe { kiwi_labels_free(labels) };
}

#[test]
fn null_and_bad_arguments_are_reported() {
    let mut h = 0.0;
    let pe = c("a");
    assert_eq!(unsafe { kiwi_hter(ptr::null(), pe.as_ptr(), &mut h) }, KiwiStatus::NullPointer);
    assert!(last_error().contains("mt"));
    assert_eq!(unsafe { kiwi_hter(pe.as_ptr(), pe.as_ptr(), ptr::null_mut()) }, KiwiStatus::NullPointer);

    let bad = [0xffu8, 0];
    assert_eq!(unsafe { kiwi_hter(bad.as_ptr().cast(), pe.as_ptr(), &mut h) }, KiwiStatus::InvalidUtf8);

    let tags = [0u8, 2];
    assert_eq!(unsafe { kiwi_f1_mult(tags.as_ptr(), tags.as_ptr(), 2, &mut h) }, KiwiStatus::InvalidArgument);

    let path = c("/nonexistent/model");
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { kiwi_model_load(path.as_ptr(), &mut model) }, KiwiStatus::Model);
    assert!(model.is_null());
    unsafe {
        kiwi_model_free(ptr::null_mut());
        kiwi_prediction_free(ptr::null_mut());
        kiwi_labels_free(ptr::null_mut());
    }
}

#[test]
fn metrics() {
    let gold = [0u8, 1, 0, 0];
    let pred = [0u8, 1, 1, 0];
    let mut v = 0.0;
    assert_eq!(unsafe { kiwi_f1_mult(gold.as_ptr(), pred.as_ptr(), 4, &mut v) }, KiwiStatus::Ok);
    assert!((v - 8.0 / 15.0).abs() < 1e-12);

    let x = [1.0, 2.0, 3.0];
    let y = [1.0, 2.0, 4.0];
    assert_eq!(unsafe { kiwi_pearson(x.as_ptr(), y.as_ptr(), 3, &mut v) }, KiwiStatus::Ok);
    assert!((v - 9.0 / 84f64.sqrt()).abs() < 1e-12);
    let (x, y) = ([1.0, 2.0, 3.0, 4.0], [1.0, 3.0, 2.0, 4.0]);
    assert_eq!(unsafe { kiwi_spearman(x.as_ptr(), y.as_ptr(), 4, &mut v) }, KiwiStatus::Ok);
    assert!((v - 0.8).abs() < 1e-12);

    let flat = [0.5; 3];
    assert_eq!(unsafe { kiwi_pearson(flat.as_ptr(), y.as_ptr(), 3, &mut v) }, KiwiStatus::Undefined);
    assert!(last_error().contains("variance"));
}

fn tiny_run(dir: &Path) -> std::path::PathBuf {
    let samples = label_corpus(&generate_triplets(&SyntheticConfig::default(), 16, 3)).unwrap();
    let files = write_samples(&dir.join("data"), "train", &samples).unwrap();
    let cfg = TrainConfig {
        seed: 1,
        output_dir: dir.join("run"),
        data: DataConfig {
            train: files.clone(),
            valid: Some(files),
            vocab_min_freq: 1,
            max_len: 200,
        },
        model: ModelConfig::Quetch(QuetchConfig {
            task: Stream::Mt,
            window: 3,
            embedding_dim: 4,
            hidden_dim: 8,
        }),
        training: TrainingConfig {
            epochs: 2,
            batch_size: 8,
            ..Default::default()
        },
    };
    train(&cfg).unwrap().run_dir
}

#[test]
fn model_predicts_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let run = c(tiny_run(dir.path()).to_str().unwrap());
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { kiwi_model_load(run.as_ptr(), &mut model) }, KiwiStatus::Ok);
    let mut stream = KiwiStream::None;
    assert_eq!(unsafe { kiwi_model_stream(model, &mut stream) }, KiwiStatus::Ok);
    assert_eq!(stream, KiwiStream::Mt);

    let (src, mt, align) = (c("s1 s2 s3"), c("t1 t2 zz t3"), c("0-0 1-1 2-3"));
    let mut pred = ptr::null_mut();
    assert_eq!(
        unsafe { kiwi_model_predict(model, src.as_ptr(), mt.as_ptr(), align.as_ptr(), &mut pred) },
        KiwiStatus::Ok
    );
    let mut probs = [0.0; 8];
    let mut len = 0;
    assert_eq!(
        unsafe { kiwi_prediction_bad_probs(pred, probs.as_mut_ptr(), probs.len(), &mut len, &mut stream) },
        KiwiStatus::Ok
    );
    assert_eq!((len, stream), (4, KiwiStream::Mt));
    assert!(probs[..len].iter().all(|p| (0.0..=1.0).contains(p)));
    let mut score = 0.0;
    assert_eq!(unsafe { kiwi_prediction_sentence_score(pred, &mut score) }, KiwiStatus::Undefined);

    let bad_align = c("0-9");
    let mut other = ptr::null_mut();
    assert_eq!(
        unsafe { kiwi_model_predict(model, src.as_ptr(), mt.as_ptr(), bad_align.as_ptr(), &mut other) },
        KiwiStatus::InvalidArgument
    );
    assert!(other.is_null());

    // Without alignments the same sentence still gets one probability per token.
    let mut plain = ptr::null_mut();
    assert_eq!(unsafe { kiwi_model_predict(model, src.as_ptr(), mt.as_ptr(), ptr::null(), &mut plain) }, KiwiStatus::Ok);
    assert_eq!(
        unsafe { kiwi_prediction_bad_probs(plain, probs.as_mut_ptr(), probs.len(), &mut len, &mut stream) },
        KiwiStatus::Ok
    );
    assert_eq!(len, 4);
    unsafe {
        kiwi_prediction_free(pred);
        kiwi_prediction_free(plain);
        kiwi_model_free(model);
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = include.join("kiwi.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["kiwi_model_load", "kiwi_last_error", "KIWI_STATUS_PANIC", "typedef struct KiwiModel KiwiModel"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"kiwi.h\"\nint main(void) { KiwiModel *m = 0; double h; (void)m; return kiwi_hter(\"a\", \"a\", &h) == KIWI_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let status = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg("-I")
            .arg(&include)
            .arg(&src)
            .status()
            .unwrap_or_else(|e| panic!("running {compiler}: {e}"));
        assert!(status.success(), "{compiler} rejected the header");
    }
}
