use std::fs;

use oclfd::data::{load_csv, synth_blobs, write_csv, DatasetManifest, SourceFile, SynthSpec};
use oclfd::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn blobs() -> oclfd::data::Dataset {
    let spec = SynthSpec {
        class_count: 3,
        dim: 5,
        per_class_counts: vec![50, 20, 10],
        separations: vec![2.5, 7.0],
    };
    synth_blobs(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let ds = blobs();
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("rows.csv");
    write_csv(&ds, fs::File::create(&csv_path).unwrap()).unwrap();

    let manifest = DatasetManifest {
        name: ds.name.clone(),
        feature_dim: 5,
        class_count: 3,
        per_class_counts: vec![50, 20, 10],
        condition_count: 1,
        source_files: vec![SourceFile {
            path: csv_path,
            has_header: false,
            has_condition: true,
        }],
    };
    let back = load_csv(&manifest).unwrap();
    assert_eq!(back.samples.len(), ds.samples.len());
    for (a, b) in ds.samples.iter().zip(&back.samples) {
        assert_eq!(a.label, b.label);
        assert_eq!(a.condition, b.condition);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.features), bits(&b.features));
    }
}

#[test]
fn manifests_resolve_relative_paths_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("a.csv"),
        "x1,x2,label\n0.5,1.5,0\n2.0,-1.0,1\n0.25,0.0,0\n",
    )
    .unwrap();
    fs::write(dir.path().join("b.csv"), "3.0,4.0,1,2\n").unwrap();

    let toml = r#"
name = "two-files"
feature_dim = 2
class_count = 2
per_class_counts = [2, 2]
condition_count = 3

[[source_files]]
path = "a.csv"
has_header = true

[[source_files]]
path = "b.csv"
has_condition = true
"#;
    fs::write(dir.path().join("m.toml"), toml).unwrap();
    let m = DatasetManifest::from_path(&dir.path().join("m.toml")).unwrap();
    fs::write(dir.path().join("m.json"), serde_json::to_string(&m).unwrap()).unwrap();
    let m2 = DatasetManifest::from_path(&dir.path().join("m.json")).unwrap();
    assert_eq!(m, m2);

    let ds = load_csv(&m).unwrap();
    assert_eq!(ds.class_counts(), vec![2, 2]);
    let ids: Vec<u64> = ds.samples.iter().map(|s| s.id).collect();
    assert_eq!(ids, vec![0, 1, 2, 3]);
    assert_eq!(ds.samples[3].features, vec![3.0, 4.0]);
    assert_eq!(ds.samples[3].condition, 2);
    assert_eq!(ds.samples[0].condition, 0);
}

#[test]
fn bad_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        DatasetManifest::from_path(&dir.path().join("absent.toml")),
        Err(Error::Io { .. })
    ));

    fs::write(dir.path().join("bad.toml"), "name = 3\n").unwrap();
    assert!(matches!(
        DatasetManifest::from_path(&dir.path().join("bad.toml")),
        Err(Error::Config(_))
    ));

    let mut m = DatasetManifest::tep(vec![SourceFile {
        path: dir.path().join("missing.csv"),
        has_header: false,
        has_condition: false,
    }]);
    assert!(matches!(load_csv(&m), Err(Error::Io { .. })));
    m.per_class_counts.pop();
    assert!(matches!(m.validate(), Err(Error::Validation(_))));

    let row: Vec<String> = (0..52).map(|i| format!("{}", i as f64 * 0.5)).chain(["0".into()]).collect();
    fs::write(dir.path().join("one.csv"), row.join(",") + "\n" + &row[..52].join(",") + "\n").unwrap();
    let m = DatasetManifest {
        per_class_counts: Vec::new(),
        ..DatasetManifest::tep(vec![SourceFile {
            path: dir.path().join("one.csv"),
            has_header: false,
            has_condition: false,
        }])
    };
    match load_csv(&m) {
        Err(Error::Parse { line, message }) => {
            assert_eq!(line, 2);
            assert!(message.contains("fields"), "{message}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn carla_layout_checks_counts() {
    let m = DatasetManifest::carla_single_sensor(Vec::new());
    m.validate().unwrap();
    assert_eq!(m.per_class_counts.len(), m.class_count);
    assert_eq!(m.per_class_counts.iter().sum::<usize>(), 108_000);
}
