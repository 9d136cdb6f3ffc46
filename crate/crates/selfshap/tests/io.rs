use std::fs;
use std::path::Path;

use selfshap::container::{from_bytes, to_bytes, FORMAT_VERSION};
use selfshap::manifest::DatasetManifest;
use selfshap::table::{load_csv, read_table};
use selfshap::{load_model, save_model, Error, ModelBundle};
use selfshap_core::data::{ColumnKind, SchemaHints, Task};
use selfshap_core::rng::Rng;
use selfshap_core::shapley::ValueFunction;
use selfshap_core::train::TrainConfig;
use selfshap_core::{BackboneKind, Link, NetworkSpec, ShapNetwork, Tensor};

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn declared_numeric_columns_are_typed() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "t.csv", "a,b,y\n1,2.5,0\n3,4,1\n5,6e-1,1\n");
    let mut hints = SchemaHints::new("y");
    hints.kinds.insert("a".into(), ColumnKind::Numeric);
    hints.kinds.insert("b".into(), ColumnKind::Numeric);
    let (raw, schema) = load_csv(&path, &hints).unwrap();
    assert_eq!(raw.rows.len(), 3);
    let kinds: Vec<ColumnKind> = schema.columns.iter().map(|c| c.kind).collect();
    assert_eq!(kinds, [ColumnKind::Numeric, ColumnKind::Numeric, ColumnKind::Label]);
    assert_eq!(schema.task, Task::Binary);
}

#[test]
fn string_columns_are_categorical_and_quoting_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "t.csv", "city,x,y\n\"Paris, FR\",1,a\nOslo,2,b\nRome,?,c\n");
    let (raw, schema) = load_csv(&path, &SchemaHints::new("y")).unwrap();
    assert_eq!(raw.rows[0][0], "Paris, FR");
    assert_eq!(schema.columns[0].kind, ColumnKind::Categorical);
    assert_eq!(schema.columns[1].kind, ColumnKind::Numeric);
    assert_eq!(schema.task, Task::Multiclass { classes: 3 });
}

#[test]
fn empty_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "empty.csv", "");
    assert!(matches!(read_table(&path), Err(Error::EmptyFile(_))));
}

#[test]
fn ragged_row_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "ragged.csv", "a,b,y\n1,2,0\n3,1\n5,6,1\n");
    match read_table(&path) {
        Err(Error::Csv { line, message, .. }) => {
            assert_eq!(line, 3);
            assert!(message.contains("expected 3 fields, found 2"), "{message}");
        }
        other => panic!("expected a CSV error, got {other:?}"),
    }
}

#[test]
fn missing_label_column_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "t.csv", "a,b\n1,2\n");
    let err = load_csv(&path, &SchemaHints::new("target")).unwrap_err();
    assert!(err.to_string().contains("target"), "{err}");
}

#[test]
fn manifest_resolves_relative_paths_and_splits_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("u,v,label\n");
    let mut rng = Rng::new(3);
    for r in 0..100 {
        text += &format!("{},{},{}\n", rng.normal(), ["p", "q", "r"][r % 3], u8::from(r % 10 == 0));
    }
    write(dir.path(), "d.csv", &text);
    let mut manifest = DatasetManifest::new("d.csv", "label");
    manifest.seed = 9;
    manifest.fractions = [0.5, 0.25, 0.25];
    let path = dir.path().join("m.json");
    manifest.save(&path).unwrap();
    let loaded = DatasetManifest::load(&path).unwrap();
    assert_eq!(loaded.csv, dir.path().join("d.csv"));
    let a = loaded.prepare().unwrap();
    let b = loaded.prepare().unwrap();
    assert_eq!(a.splits, b.splits);
    assert_eq!((a.splits.train.len(), a.splits.valid.len(), a.splits.test.len()), (50, 25, 25));
    // stratified: 10 positives, half of them in training
    let positives = a.data.train.labels().iter().filter(|&&l| l == 1.0).count();
    assert!((4..=6).contains(&positives), "{positives}");
    // categorical tokens are standardized numerics with the missing token at 0
    assert_eq!(a.data.preprocessor.columns[1].tokens, ["p", "q", "r"]);
}

#[test]
fn unknown_manifest_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "m.json", r#"{"csv": "d.csv", "hints": {"label": "y"}, "sead": 3}"#);
    let err = DatasetManifest::load(&path).unwrap_err();
    assert!(err.to_string().contains("sead"), "{err}");
}

fn bundles() -> Vec<ModelBundle> {
    let mut out = Vec::new();
    for (k, backbone) in BackboneKind::ALL.into_iter().enumerate() {
        let mut spec = NetworkSpec::new(backbone, 5, 3, Link::Softmax).with_hidden(&[6, 4]);
        spec.relaxed = k % 2 == 0;
        spec.feature_names = (0..5).map(|i| format!("f{i}")).collect();
        let mut network = ShapNetwork::new(spec, k as u64).unwrap();
        let mut rng = Rng::new(k as u64);
        // move batch-norm statistics and the bias away from their initial values
        let x = Tensor::matrix(16, 5, (0..80).map(|_| rng.normal()).collect()).unwrap();
        network.forward_batch(&x, selfshap_core::layers::Mode::Train).unwrap();
        if network.spec().relaxed {
            network.set_delta(rng.normal()).unwrap();
        }
        let value_function = if k % 2 == 0 {
            ValueFunction::zeros(5)
        } else {
            ValueFunction::marginal((0..20).map(|_| rng.normal()).collect(), 5).unwrap()
        };
        out.push(ModelBundle {
            network,
            preprocessor: None,
            value_function,
            train_config: Some(TrainConfig {
                seed: k as u64,
                ..TrainConfig::default()
            }),
        });
    }
    out
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (k, bundle) in bundles().into_iter().enumerate() {
        let first = dir.path().join(format!("m{k}.bin"));
        let second = dir.path().join(format!("m{k}b.bin"));
        save_model(&first, &bundle).unwrap();
        let loaded = load_model(&first).unwrap();
        save_model(&second, &loaded).unwrap();
        assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
        assert_eq!(loaded.network.spec(), bundle.network.spec());
        assert_eq!(loaded.value_function, bundle.value_function);
        assert_eq!(loaded.train_config, bundle.train_config);
    }
}

#[test]
fn predictions_survive_the_round_trip_exactly() {
    let mut rng = Rng::new(77);
    let x = Tensor::matrix(100, 5, (0..500).map(|_| 2.0 * rng.normal()).collect()).unwrap();
    for bundle in bundles() {
        let loaded = from_bytes(&to_bytes(&bundle).unwrap()).unwrap();
        let before = bundle.network.forward_eval(&x).unwrap();
        let after = loaded.network.forward_eval(&x).unwrap();
        assert!(before.data().iter().zip(after.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(bundle.network.logits_eval(&x).unwrap(), loaded.network.logits_eval(&x).unwrap());
    }
}

#[test]
fn truncation_and_corruption_fail_the_checksum() {
    let bytes = to_bytes(&bundles()[0]).unwrap();
    for cut in [bytes.len() - 1, bytes.len() - 9, bytes.len() / 2, 20] {
        assert!(matches!(from_bytes(&bytes[..cut]), Err(Error::Checksum { .. })), "cut at {cut}");
    }
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x10;
    assert!(matches!(from_bytes(&flipped), Err(Error::Checksum { .. })));
}

#[test]
fn version_mismatch_names_both_versions() {
    let mut bytes = to_bytes(&bundles()[1]).unwrap();
    bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
    let err = from_bytes(&bytes).unwrap_err();
    assert!(matches!(err, Error::Version { found: 7, expected: FORMAT_VERSION }));
    let text = err.to_string();
    assert!(text.contains('7') && text.contains(&FORMAT_VERSION.to_string()), "{text}");
}

#[test]
fn foreign_files_are_rejected() {
    assert!(matches!(from_bytes(b"PK\x03\x04 not a model"), Err(Error::Format(_))));
    assert!(matches!(from_bytes(b""), Err(Error::Format(_))));
}
