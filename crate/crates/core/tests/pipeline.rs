use avsdn_core::checkpoint;
use avsdn_core::data::{generate, generate_synthetic, read_features};
use avsdn_core::train::{class_names, evaluate, evaluate_checkpoint, train_manifest};
use avsdn_core::{DatasetManifest, Precision, Split, SynthConfig, TrainConfig};

fn small() -> SynthConfig {
    SynthConfig {
        categories: 2,
        audio_dim: 6,
        visual_dim: 5,
        segments: 5,
        train: 10,
        val: 4,
        test: 4,
        seed: 21,
        ..SynthConfig::default()
    }
}

#[test]
fn files_match_in_memory_generation() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, path) = generate_synthetic(&small(), dir.path()).unwrap();
    let ds = generate(&small()).unwrap();
    assert_eq!(DatasetManifest::load(&path).unwrap(), manifest);
    for split in Split::ALL {
        let loaded = manifest.load_split(&path, split).unwrap();
        assert_eq!(loaded, ds.split(split));
    }
    let entry = &manifest.entries[0];
    let direct = read_features(path.parent().unwrap().join(&entry.path)).unwrap();
    assert_eq!(direct.video_id, entry.video_id);
}

#[test]
fn checkpoint_reproduces_training_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = generate_synthetic(&small(), dir.path()).unwrap();
    for precision in [Precision::Standard, Precision::Checking] {
        let cfg = TrainConfig {
            epochs: 4,
            hidden: 5,
            learning_rate: 0.01,
            precision,
            ..TrainConfig::default()
        };
        let (manifest, out) = train_manifest(&path, &cfg, |_| {}).unwrap();
        let ckpt = dir.path().join(format!("{precision}.avsm"));
        checkpoint::save(&out.params, &ckpt).unwrap();
        let report = evaluate_checkpoint(&ckpt, &path, Split::Val).unwrap();
        assert_eq!(report.accuracy, out.best_val_acc);
        let val = manifest.load_split(&path, Split::Val).unwrap();
        let direct = evaluate(&out.params, &val, &class_names(&manifest)).unwrap();
        assert_eq!(direct, report);
    }
}
