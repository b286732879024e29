use std::fs;

use iwgt::checkpoint::{encode, load_checkpoint, save_checkpoint, MANIFEST_FILE, PARAMS_FILE};
use iwgt::dataset::{read_stats, write_stats, Dataset, Encoding, Source, DATASET_VERSION};
use iwgt::error::{Error, FormatError};
use iwgt_core::model::{infer_powers, init_params, Checkpoint, ModelConfig, ParamGroup, TrainingMeta};
use iwgt_core::netgraph::MaskView;
use iwgt_core::scenarios::strong_interference;
use tempfile::tempdir;

fn checkpoint() -> Checkpoint {
    let data = Dataset::generate(Source::named("D4-toy").unwrap(), 6, 3, Encoding::Binary).unwrap();
    let model = ModelConfig::default();
    Checkpoint {
        model: model.clone(),
        stats: data.norm_stats().unwrap(),
        params: init_params(&model, 4, &ParamGroup::DEPLOYED).unwrap(),
        meta: TrainingMeta {
            stage: "finetune".into(),
            epochs: 2,
            seed: 4,
            loss_digest: "00".into(),
            objective: None,
        },
    }
}

#[test]
fn binary_and_text_datasets_round_trip_bit_exactly() {
    let dir = tempdir().unwrap();
    for enc in [Encoding::Binary, Encoding::Text] {
        let d = Dataset::generate(Source::named("D13-toy").unwrap(), 5, 77, enc).unwrap();
        let p = dir.path().join("d");
        d.write(&p).unwrap();
        let back = Dataset::read(&p).unwrap();
        assert_eq!(back, d);
        for (a, b) in back.snapshots.iter().zip(&d.snapshots) {
            for (x, y) in a.gains.iter().zip(&b.gains) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
    }
}

#[test]
fn single_record_round_trips() {
    let dir = tempdir().unwrap();
    let d = Dataset::generate(Source::named("D2-toy").unwrap(), 1, 9, Encoding::Binary).unwrap();
    let p = dir.path().join("one.bin");
    d.write(&p).unwrap();
    assert_eq!(Dataset::read(&p).unwrap().snapshots[0], d.snapshots[0]);
}

#[test]
fn strong_interference_datasets_match_the_core_generator() {
    let d = Dataset::generate(Source::named("strong-k3").unwrap(), 4, 10, Encoding::Binary).unwrap();
    assert_eq!(d.snapshots, strong_interference(3, 4, 10).unwrap());
    assert_eq!(d.p_max(), 1.0);
}

#[test]
fn generation_is_independent_of_thread_count() {
    let src = Source::named("D10-toy").unwrap();
    let a = Dataset::generate(src.clone(), 12, 0, Encoding::Binary).unwrap();
    let serial = iwgt_core::channelsim::generate_snapshots(
        match &src {
            Source::Scenario { config } => config,
            _ => unreachable!(),
        },
        12,
        0,
    )
    .unwrap();
    assert_eq!(a.snapshots, serial);
}

#[test]
fn dataset_errors_are_distinct() {
    let dir = tempdir().unwrap();
    let d = Dataset::generate(Source::named("D1-toy").unwrap(), 3, 1, Encoding::Binary).unwrap();
    let bytes = d.to_bytes().unwrap();

    let p = dir.path().join("short.bin");
    fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
    assert!(matches!(Dataset::read(&p), Err(Error::Format { kind: FormatError::Truncated { .. }, .. })));

    let p = dir.path().join("version.bin");
    let text = String::from_utf8_lossy(&bytes).replacen(
        &format!("\"format_version\":{DATASET_VERSION}"),
        "\"format_version\":99",
        1,
    );
    fs::write(&p, text.as_bytes()).unwrap();
    assert!(matches!(
        Dataset::read(&p),
        Err(Error::Format { kind: FormatError::Version { found: 99, .. }, .. })
    ));

    let p = dir.path().join("garbage.bin");
    fs::write(&p, b"not json\n").unwrap();
    assert!(matches!(Dataset::read(&p), Err(Error::Format { kind: FormatError::Corrupt(_), .. })));

    assert!(matches!(Dataset::read(&dir.path().join("missing")), Err(Error::Io { .. })));
}

#[test]
fn stats_file_round_trips() {
    let dir = tempdir().unwrap();
    let s = checkpoint().stats;
    let p = dir.path().join("stats.json");
    write_stats(&p, &s).unwrap();
    assert_eq!(read_stats(&p).unwrap(), s);
}

#[test]
fn checkpoint_round_trip_is_bit_exact_and_forward_identical() {
    let dir = tempdir().unwrap();
    let c = checkpoint();
    save_checkpoint(dir.path(), &c).unwrap();
    let back = load_checkpoint(dir.path()).unwrap();
    assert!(back.params.values_bit_equal(&c.params));
    assert_eq!(back.params.names(), c.params.names());
    assert_eq!((back.model.clone(), back.stats, back.meta.clone()), (c.model.clone(), c.stats, c.meta.clone()));
    let data = Dataset::generate(Source::named("D4-toy").unwrap(), 2, 50, Encoding::Binary).unwrap();
    for g in data.graphs(&c.stats).unwrap() {
        let a = infer_powers(&c.model, &c.params, &g, &MaskView::none(g.k), 0.01).unwrap();
        let b = infer_powers(&back.model, &back.params, &g, &MaskView::none(g.k), 0.01).unwrap();
        assert_eq!(a, b);
    }
    assert_eq!(encode(&back).unwrap(), encode(&c).unwrap());
}

#[test]
fn checkpoint_errors_are_distinct() {
    let c = checkpoint();
    let (manifest, params) = encode(&c).unwrap();
    let write = |m: &[u8], p: &[u8]| {
        let dir = tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), m).unwrap();
        fs::write(dir.path().join(PARAMS_FILE), p).unwrap();
        dir
    };
    let text = String::from_utf8(manifest.clone()).unwrap();

    let d = write(&manifest, &params[..params.len() - 8]);
    assert!(matches!(load_checkpoint(d.path()), Err(Error::Format { kind: FormatError::Truncated { .. }, .. })));

    let d = write(text.replacen("\"format_version\": 1", "\"format_version\": 7", 1).as_bytes(), &params);
    assert!(matches!(
        load_checkpoint(d.path()),
        Err(Error::Format { kind: FormatError::Version { found: 7, .. }, .. })
    ));

    let d = write(&manifest[..manifest.len() / 2], &params);
    assert!(matches!(load_checkpoint(d.path()), Err(Error::Format { kind: FormatError::Corrupt(_), .. })));

    // a consistent file pair whose shapes disagree with the declared architecture
    let narrow = text.replacen("\"d_model\": 32", "\"d_model\": 16", 1);
    let d = write(narrow.as_bytes(), &params);
    assert!(matches!(load_checkpoint(d.path()), Err(Error::Format { kind: FormatError::Shape(_), .. })));

    let mut long = params.clone();
    long.extend_from_slice(&[0u8; 8]);
    let d = write(&manifest, &long);
    assert!(matches!(load_checkpoint(d.path()), Err(Error::Format { kind: FormatError::Corrupt(_), .. })));
}

#[test]
fn saving_is_deterministic() {
    let c = checkpoint();
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    save_checkpoint(a.path(), &c).unwrap();
    save_checkpoint(b.path(), &c).unwrap();
    for f in [MANIFEST_FILE, PARAMS_FILE] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
}
