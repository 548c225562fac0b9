mod common;

use std::fs;
use std::path::Path;

use amem_core::model::{Model, Variant};
use amem_core::tensor::AdamState;
use amem_lab::artifact::load_model;
use amem_lab::dataset::Split;
use amem_lab::train::{accumulate_dialog, checkpoint_path, epoch_order, read_metrics, train, TrainConfig};
use amem_lab::LabError;

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("checkpoints")] {
        let mut entries: Vec<_> = fs::read_dir(&sub).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries.into_iter().filter(|p| p.is_file()) {
            let name = p.strip_prefix(dir).unwrap().display().to_string();
            out.push((name, fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn same_seed_gives_identical_outputs() {
    let tr = common::samples(Split::Train, 6, 1);
    let va = common::samples(Split::Val, 2, 1);
    let cfg = common::train_config(Variant::AmemSeq, 2);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out = train(&cfg, &common::small_model(), &tr, &va, a.path(), None).unwrap();
    train(&cfg, &common::small_model(), &tr, &va, b.path(), None).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(
        names,
        [
            "final.amem",
            "metrics.csv",
            "per_step.json",
            "checkpoints/epoch-001.amem",
            "checkpoints/epoch-002.amem"
        ]
    );
    assert_eq!(fa, fb);

    let rows = read_metrics(&a.path().join("metrics.csv")).unwrap();
    assert_eq!(rows, out.metrics);
    assert_eq!(rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), [1, 2]);
    assert!(rows.iter().all(|r| r.theta.is_some() && r.train_loss.is_finite()));
    assert_eq!(out.per_step.len(), 2);
    assert_eq!(out.per_step[1].per_step.len(), 10);

    let (model, state) = load_model(&out.final_checkpoint, cfg.adam()).unwrap();
    assert!(state.is_none());
    assert_eq!(model.params().store, out.model.params().store);
    let (_, state) = load_model(&checkpoint_path(a.path(), 2), cfg.adam()).unwrap();
    assert_eq!(state.unwrap().epoch, 2);

    let c = tempfile::tempdir().unwrap();
    let other = TrainConfig { seed: 9, ..cfg };
    train(&other, &common::small_model(), &tr, &va, c.path(), None).unwrap();
    assert_ne!(fs::read(a.path().join("final.amem")).unwrap(), fs::read(c.path().join("final.amem")).unwrap());
}

#[test]
fn resuming_matches_an_uninterrupted_run() {
    let tr = common::samples(Split::Train, 5, 2);
    let va = common::samples(Split::Val, 2, 2);
    let cfg = TrainConfig {
        batch_size: 3,
        ..common::train_config(Variant::AmemHSeq, 3)
    };
    let (full, part) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    train(&cfg, &common::small_model(), &tr, &va, full.path(), None).unwrap();

    let first = TrainConfig { epochs: 1, ..cfg.clone() };
    train(&first, &common::small_model(), &tr, &va, part.path(), None).unwrap();
    let ckpt = checkpoint_path(part.path(), 1);
    train(&cfg, &common::small_model(), &tr, &va, part.path(), Some(&ckpt)).unwrap();

    assert_eq!(files(full.path()), files(part.path()));
}

#[test]
fn resume_rejects_mismatched_or_stateless_checkpoints() {
    let tr = common::samples(Split::Train, 2, 3);
    let va = common::samples(Split::Val, 1, 3);
    let cfg = common::train_config(Variant::Amem, 1);
    let dir = tempfile::tempdir().unwrap();
    train(&cfg, &common::small_model(), &tr, &va, dir.path(), None).unwrap();
    let other = TrainConfig {
        variant: Variant::Att,
        epochs: 2,
        ..cfg.clone()
    };
    let ckpt = checkpoint_path(dir.path(), 1);
    let r = train(&other, &common::small_model(), &tr, &va, dir.path(), Some(&ckpt));
    assert!(matches!(r, Err(LabError::Config(_))));
    let final_path = dir.path().join("final.amem");
    let r = train(&TrainConfig { epochs: 2, ..cfg }, &common::small_model(), &tr, &va, dir.path(), Some(&final_path));
    assert!(matches!(r, Err(LabError::Config(_))));
}

#[test]
fn one_adam_step_lowers_the_loss() {
    let tr = common::samples(Split::Train, 3, 5);
    for variant in Variant::ALL {
        let mut model = Model::<f32>::init(common::small_model().with_variant(variant), 3).unwrap();
        let cfg = common::train_config(variant, 1);
        let mut adam = AdamState::new(cfg.adam());
        adam.init(&model.params().store);
        let mut before = 0.0;
        for s in &tr {
            before += accumulate_dialog(&mut model, s).unwrap();
        }
        let store = &mut model.params_mut().store;
        store.scale_grads(1.0 / tr.len() as f32);
        adam.step(store).unwrap();
        store.zero_grad();
        let mut after = 0.0;
        for s in &tr {
            after += accumulate_dialog(&mut model, s).unwrap();
        }
        assert!(after < before, "{}: {before} -> {after}", variant.name());
    }
}

#[test]
fn exploding_updates_stop_with_a_divergence_error() {
    let tr = common::samples(Split::Train, 4, 6);
    let va = common::samples(Split::Val, 1, 6);
    let cfg = TrainConfig {
        lr: 1e30,
        batch_size: 1,
        ..common::train_config(Variant::AmemSeq, 3)
    };
    let dir = tempfile::tempdir().unwrap();
    match train(&cfg, &common::small_model(), &tr, &va, dir.path(), None) {
        Err(LabError::Divergence { loss, epoch, .. }) => {
            assert!(!loss.is_finite());
            assert_eq!(epoch, 1);
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.metrics)),
    }

    let calm = TrainConfig { lr: 1e-3, epochs: 1, ..cfg.clone() };
    train(&calm, &common::small_model(), &tr, &va, dir.path(), None).unwrap();
    let ckpt = checkpoint_path(dir.path(), 1);
    let saved = fs::read(&ckpt).unwrap();
    match train(&cfg, &common::small_model(), &tr, &va, dir.path(), Some(&ckpt)) {
        Err(LabError::Divergence { epoch, last_good, .. }) => {
            assert_eq!(epoch, 2);
            assert_eq!(last_good.as_deref(), Some(ckpt.as_path()));
            assert_eq!(fs::read(&ckpt).unwrap(), saved);
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.metrics)),
    }
}

#[test]
fn bad_configs_are_rejected() {
    let tr = common::samples(Split::Train, 1, 0);
    let dir = tempfile::tempdir().unwrap();
    let base = common::train_config(Variant::Att, 1);
    for cfg in [
        TrainConfig { epochs: 0, ..base.clone() },
        TrainConfig { batch_size: 0, ..base.clone() },
        TrainConfig { lr: -1.0, ..base.clone() },
        TrainConfig { lr: f64::NAN, ..base.clone() },
    ] {
        assert!(matches!(
            train(&cfg, &common::small_model(), &tr, &tr, dir.path(), None),
            Err(LabError::Config(_))
        ));
    }
    assert!(matches!(
        train(&base, &common::small_model(), &tr, &[], dir.path(), None),
        Err(LabError::Usage(_))
    ));
}

#[test]
fn epoch_order_is_a_seeded_permutation() {
    let a = epoch_order(0, 1, 100);
    let mut sorted = a.clone();
    sorted.sort();
    assert_eq!(sorted, (0..100).collect::<Vec<_>>());
    assert_eq!(a, epoch_order(0, 1, 100));
    assert_ne!(a, epoch_order(0, 2, 100));
    assert_ne!(a, epoch_order(1, 1, 100));
}
