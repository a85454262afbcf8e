mod common;

use vaps_core::eval::{evaluate, Protocol, Split};
use vaps_model::{attention_mass, train, ModelMeta, ModelScorer, TrainConfig, ValidSet, Vaps};
use vaps_tensor::{load_checkpoint, save_checkpoint};

fn quick(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs,
        batch_size: 16,
        lr: 1e-2,
        valid_n_neg: 19,
        ..TrainConfig::default()
    }
}

#[test]
fn smoke_run_completes_with_finite_losses() {
    let fx = common::fixture(&common::spec(5, 20, 0));
    let model = fx.model(8, 0);
    let train_set = fx.inputs(&model, Split::Train);
    let valid = ValidSet::build(&fx.corpus, &fx.selections, &fx.vocab, &fx.lookup, &model, 19, 0).unwrap();
    let out = train(model, &train_set, &valid, &quick(1), |_| {}).unwrap();
    assert_eq!(out.log.len(), 1);
    let e = &out.log[0];
    assert!(e.l_search.is_finite() && e.l_search >= 0.0);
    assert!(e.l_va.is_finite() && e.l_va >= 0.0);
    assert!(e.total.is_finite());
    assert!((0.0..=1.0).contains(&e.valid_ndcg10));
}

#[test]
fn empty_training_set_is_an_error() {
    let fx = common::fixture(&common::spec(2, 20, 0));
    let model = fx.model(4, 0);
    let r = train(model, &[], &ValidSet::default(), &quick(1), |_| {});
    assert!(matches!(r, Err(vaps_model::ModelError::EmptyTrainingSet)));
}

#[test]
fn fixed_seed_gives_identical_loss_logs() {
    let fx = common::fixture(&common::spec(6, 24, 3));
    let run = || {
        let model = fx.model(8, 3);
        let train_set = fx.inputs(&model, Split::Train);
        let valid = ValidSet::build(&fx.corpus, &fx.selections, &fx.vocab, &fx.lookup, &model, 19, 0).unwrap();
        let out = train(model, &train_set, &valid, &quick(3), |_| {}).unwrap();
        let losses: Vec<_> = out.log.iter().map(|e| (e.l_search, e.l_va, e.total, e.valid_ndcg10)).collect();
        (losses, out.model.store)
    };
    let (a, sa) = run();
    let (b, sb) = run();
    assert_eq!(a, b);
    for ((_, _, x), (_, _, y)) in sa.iter().zip(sb.iter()) {
        assert_eq!(x.data(), y.data());
    }
}

#[test]
fn early_stopping_respects_patience() {
    let fx = common::fixture(&common::spec(8, 30, 5));
    let model = fx.model(8, 5);
    let train_set = fx.inputs(&model, Split::Train);
    let valid = ValidSet::build(&fx.corpus, &fx.selections, &fx.vocab, &fx.lookup, &model, 19, 0).unwrap();
    let cfg = TrainConfig {
        patience: 2,
        lr: 0.05,
        ..quick(40)
    };
    let out = train(model, &train_set, &valid, &cfg, |_| {}).unwrap();
    let last = out.log.last().unwrap().epoch;
    assert!(last - out.best_epoch <= cfg.patience);
    let best = out.log.iter().map(|e| e.valid_ndcg10).fold(f64::MIN, f64::max);
    assert_eq!(out.log[out.best_epoch - 1].valid_ndcg10, best);
    let restored = out.model;
    let again = valid.ndcg10(&restored).unwrap();
    assert!((again - best).abs() < 1e-12);
}

#[test]
fn checkpoint_and_meta_round_trip() {
    let fx = common::fixture(&common::spec(3, 20, 1));
    let model = fx.model(4, 1);
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&model.store, &dir.path().join("model.ckpt")).unwrap();
    let meta = ModelMeta::new(model.config.clone(), &fx.vocab, &fx.lookup);
    meta.save(&dir.path().join("model_config.json")).unwrap();

    let meta2 = ModelMeta::load(&dir.path().join("model_config.json")).unwrap();
    assert_eq!(meta, meta2);
    assert_eq!(meta2.vocabulary(), fx.vocab);
    assert_eq!(meta2.lookup(), fx.lookup);
    let store = load_checkpoint(&dir.path().join("model.ckpt")).unwrap();
    let loaded = Vaps::from_store(meta2.config, store).unwrap();
    let inputs = fx.inputs(&model, Split::Test);
    let cands: Vec<usize> = (0..20).collect();
    assert_eq!(model.score_session(&inputs[0], &cands).unwrap(), loaded.score_session(&inputs[0], &cands).unwrap());
}

#[test]
fn overfits_a_tiny_corpus() {
    let fx = common::fixture(&common::spec(10, 30, 11));
    let model = fx.model(32, 11);
    let train_set = fx.inputs(&model, Split::Train);
    let cfg = TrainConfig {
        early_stopping: false,
        lambda_l2: 0.0,
        ..quick(200)
    };
    let out = train(model, &train_set, &ValidSet::default(), &cfg, |_| {}).unwrap();
    let scorer = ModelScorer {
        model: &out.model,
        vocab: &fx.vocab,
        lookup: &fx.lookup,
        selections: &fx.selections,
    };
    let report = evaluate(&scorer, &fx.corpus, Split::Train, Protocol::Retrieval, 0).unwrap();
    assert_eq!(report.at(5).unwrap().hr, 1.0, "{:?}", report.metrics);
}

#[test]
fn alignment_loss_concentrates_attention_on_linked_actions() {
    let fx = common::fixture(&common::spec(80, 60, 2));
    let model = fx.model(16, 2);
    let train_set = fx.inputs(&model, Split::Train);
    let before = attention_mass(&model, &train_set).unwrap();
    assert!(before.len() >= 100, "only {} linked pairs", before.len());
    let cfg = TrainConfig {
        early_stopping: false,
        ..quick(10)
    };
    let out = train(model, &train_set, &ValidSet::default(), &cfg, |_| {}).unwrap();
    let after = attention_mass(&out.model, &train_set).unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let wins = before.iter().zip(&after).filter(|(b, a)| a > b).count();
    assert!(mean(&after) > mean(&before), "{} vs {}", mean(&after), mean(&before));
    assert!(wins * 2 > before.len());
}
