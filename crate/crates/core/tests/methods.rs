mod common;

use approx::assert_abs_diff_eq;
use common::{quick_config, random_set, set_from};
use metaemb::methods::{build, conc, load_checkpoint, save_checkpoint, svd_meta, train_ae, train_mte, train_tae};
use metaemb::{Error, LossKind, MetaConfig, MetaMethod, MethodSpec, TrainConfig};
use ndarray::{s, Axis};

fn all_specs(target: usize) -> Vec<MethodSpec> {
    let mut specs = vec![
        MethodSpec::new(MetaMethod::Conc),
        MethodSpec::new(MetaMethod::Av),
        MethodSpec::new(MetaMethod::Svd),
        MethodSpec::new(MetaMethod::OneTon),
    ];
    for loss in LossKind::ALL {
        for m in [MetaMethod::Caeme, MetaMethod::Daeme, MetaMethod::Aaeme] {
            specs.push(MethodSpec::new(m).with_loss(loss));
        }
        for m in [MetaMethod::Tae, MetaMethod::TaePlusY, MetaMethod::Mte] {
            specs.push(MethodSpec::new(m).with_loss(loss).with_target(target));
        }
    }
    specs
}

#[test]
fn every_method_is_deterministic() {
    let set = random_set(30, &[6, 8, 5], 3);
    let config = quick_config(12, 3, 9);
    for spec in all_specs(1) {
        let a = build(&set, &spec, &config).unwrap().table(&set).unwrap();
        let b = build(&set, &spec, &config).unwrap().table(&set).unwrap();
        assert_eq!(a.matrix(), b.matrix(), "{} is not reproducible", spec.id());
        assert!(a.matrix().iter().all(|v| v.is_finite()), "{}", spec.id());
    }
}

#[test]
fn different_seeds_give_different_learned_tables() {
    let set = random_set(20, &[5, 5], 1);
    let spec = MethodSpec::new(MetaMethod::Caeme).with_loss(LossKind::Mse);
    let a = build(&set, &spec, &quick_config(8, 2, 1)).unwrap().table(&set).unwrap();
    let b = build(&set, &spec, &quick_config(8, 2, 2)).unwrap().table(&set).unwrap();
    assert_ne!(a.matrix(), b.matrix());
}

#[test]
fn checkpoints_round_trip_every_method() {
    let set = random_set(25, &[4, 7, 5], 11);
    let config = quick_config(10, 2, 4);
    let dir = tempfile::tempdir().unwrap();
    for spec in all_specs(2) {
        let model = build(&set, &spec, &config).unwrap();
        let path = dir.path().join(format!("{}.json", spec.id()));
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, model, "{}", spec.id());
        assert_eq!(back.table(&set).unwrap().matrix(), model.table(&set).unwrap().matrix());
    }
}

#[test]
fn checkpoint_rejects_a_foreign_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bogus.json");
    std::fs::write(&path, "{\"format\":\"something-else\",\"version\":1}").unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
}

#[test]
fn caeme_overfits_a_tiny_set() {
    let set = random_set(10, &[6, 6], 5);
    let config = MetaConfig {
        train: TrainConfig {
            epochs: 1500,
            ..TrainConfig::default()
        },
        ..MetaConfig::default()
    };
    let model = train_ae(MetaMethod::Caeme, &set, LossKind::Mse, &config).unwrap();
    let trace = &model.loss_trace;
    assert!(
        trace[trace.len() - 1] < 0.05 * trace[0],
        "final {} vs first {}",
        trace[trace.len() - 1],
        trace[0]
    );
}

#[test]
fn daeme_splits_hidden_units_per_source() {
    let set = random_set(12, &[5, 9], 2);
    let model = train_ae(MetaMethod::Daeme, &set, LossKind::Mse, &quick_config(200, 1, 0)).unwrap();
    assert_eq!(model.meta_dim, 200);
    match &model.params {
        metaemb::methods::MetaParams::Multi { nets } => {
            let hidden: Vec<usize> = nets.iter().map(|n| n.layers()[0].output_dim()).collect();
            assert_eq!(hidden, vec![100, 100]);
        }
        other => panic!("unexpected params {other:?}"),
    }
}

#[test]
fn tae_learns_to_copy_a_duplicated_target() {
    let base = random_set(40, &[8, 6], 21);
    let target = base.source(0).matrix().clone();
    let other = base.source(1).matrix().clone();
    // The target appears verbatim among the inputs.
    let set = set_from(vec![target.clone(), other, target]);
    let config = MetaConfig {
        hidden_dim: 200,
        dropout: 0.0,
        train: TrainConfig {
            epochs: 300,
            batch_size: 8,
            init_scaled: true,
            ..TrainConfig::default()
        },
        ..MetaConfig::default()
    };
    let model = train_tae(&set, 2, LossKind::Mse, &config, false).unwrap();
    let last = *model.loss_trace.last().unwrap();
    assert!(last < 1e-3, "copy loss {last}");
}

#[test]
fn tae_plus_y_appends_the_target_row() {
    let set = random_set(15, &[100, 100, 100], 8);
    let config = quick_config(200, 1, 3);
    let plain = train_tae(&set, 0, LossKind::Scp, &config, false).unwrap();
    let with_y = train_tae(&set, 0, LossKind::Scp, &config, true).unwrap();
    assert_eq!(plain.meta_dim, 200);
    assert_eq!(with_y.meta_dim, 300);
    for word in ["w0000", "w0007", "w0014"] {
        let v = with_y.embed(&set, word).unwrap();
        assert_eq!(v.len(), 300);
        assert_eq!(v.slice(s![200..]), set.source(0).lookup(word).unwrap());
        assert_eq!(v.slice(s![..200]), plain.embed(&set, word).unwrap());
    }
}

#[test]
fn tae_rejects_bad_targets() {
    let set = random_set(10, &[3, 3], 0);
    let config = quick_config(4, 1, 0);
    assert!(matches!(
        train_tae(&set, 2, LossKind::Mse, &config, false),
        Err(Error::InvalidArgument(_))
    ));
    assert!(train_mte(&set, 5, LossKind::Mse, &config).is_err());
    let single = random_set(10, &[3], 0);
    assert!(train_tae(&single, 0, LossKind::Mse, &config, false).is_err());
}

#[test]
fn mte_with_one_non_target_source_is_that_network() {
    let set = random_set(20, &[6, 4], 13);
    let config = quick_config(16, 4, 2);
    for loss in LossKind::ALL {
        let mte = train_mte(&set, 1, loss, &config).unwrap();
        // With two sources TAE trains the identical single network.
        let tae = train_tae(&set, 1, loss, &config, false).unwrap();
        assert_eq!(mte.loss_trace, tae.loss_trace, "{loss}");
        assert_eq!(mte.table(&set).unwrap().matrix(), tae.table(&set).unwrap().matrix(), "{loss}");
    }
}

#[test]
fn mte_of_identical_sources_equals_each_hidden() {
    let base = random_set(20, &[6, 4], 17);
    let a = base.source(0).matrix().clone();
    let t = base.source(1).matrix().clone();
    let twin = set_from(vec![a.clone(), a.clone(), t.clone()]);
    let solo = set_from(vec![a, t]);
    let config = quick_config(16, 3, 6);
    let m2 = train_mte(&twin, 2, LossKind::Kl, &config).unwrap().table(&twin).unwrap();
    let m1 = train_mte(&solo, 1, LossKind::Kl, &config).unwrap().table(&solo).unwrap();
    assert_eq!(m2.matrix(), m1.matrix());
}

#[test]
fn conc_dot_product_is_the_sum_of_source_dots() {
    let set = random_set(25, &[7, 7, 7], 4);
    let table = conc(&set).unwrap();
    let m = table.matrix();
    for (i, j) in [(0, 1), (3, 17), (24, 5), (9, 9)] {
        let whole = m.row(i).dot(&m.row(j));
        let parts: f64 = set
            .sources()
            .iter()
            .map(|s| s.matrix().row(i).dot(&s.matrix().row(j)))
            .sum();
        assert_abs_diff_eq!(whole, parts, epsilon = 1e-12);
    }
}

#[test]
fn conc_model_embeds_conc_rows() {
    let set = random_set(10, &[2, 3], 7);
    let model = build(&set, &MethodSpec::new(MetaMethod::Conc), &MetaConfig::default()).unwrap();
    let table = conc(&set).unwrap();
    assert_eq!(model.meta_dim, 5);
    for w in set.shared_vocab() {
        assert_eq!(model.embed(&set, w).unwrap(), table.lookup(w).unwrap());
    }
}

#[test]
fn svd_error_is_non_increasing_in_rank() {
    let set = random_set(40, &[6, 9], 12);
    let c = set.concatenated();
    let mut previous = f64::INFINITY;
    for k in 1..=15 {
        let svd = metaemb::methods::truncated_svd(&c, k).unwrap();
        let err = (&c - &svd.reconstruct()).mapv(|v| v * v).sum().sqrt();
        assert!(err <= previous + 1e-12, "k={k}: {err} > {previous}");
        previous = err;
    }
    assert!(previous < 1e-8);
    assert_eq!(svd_meta(&set, 7).unwrap().dim(), 7);
}

#[test]
fn embed_reports_unknown_words() {
    let set = random_set(10, &[3, 3], 0);
    let model = build(&set, &MethodSpec::new(MetaMethod::Av), &MetaConfig::default()).unwrap();
    assert!(matches!(model.embed(&set, "zebra"), Err(Error::UnknownWord(w)) if w == "zebra"));
}

#[test]
fn models_refuse_a_differently_shaped_set() {
    let set = random_set(10, &[3, 3], 0);
    let other = random_set(10, &[3, 4], 0);
    let model = build(&set, &MethodSpec::new(MetaMethod::Conc), &MetaConfig::default()).unwrap();
    assert!(model.table(&other).is_err());
}

#[test]
fn repeated_embedding_is_stable() {
    let set = random_set(15, &[4, 4], 3);
    let model = build(
        &set,
        &MethodSpec::new(MetaMethod::Aaeme).with_loss(LossKind::Mae),
        &quick_config(10, 2, 1),
    )
    .unwrap();
    let first = model.embed(&set, "w0003").unwrap();
    for _ in 0..5 {
        assert_eq!(model.embed(&set, "w0003").unwrap(), first);
    }
    let rows = model.embed_rows(&set, &[3, 3]).unwrap();
    assert_eq!(rows.index_axis(Axis(0), 1), first);
}

#[test]
fn build_validates_method_options() {
    let set = random_set(10, &[3, 3], 0);
    let config = quick_config(4, 1, 0);
    let missing_loss = build(&set, &MethodSpec::new(MetaMethod::Caeme), &config);
    assert!(matches!(missing_loss, Err(Error::InvalidArgument(_))));
    let missing_target = build(&set, &MethodSpec::new(MetaMethod::Tae).with_loss(LossKind::Mse), &config);
    assert!(matches!(missing_target, Err(Error::InvalidArgument(_))));
    let loss_on_conc = build(&set, &MethodSpec::new(MetaMethod::Conc).with_loss(LossKind::Kl), &config);
    assert!(loss_on_conc.is_err());
}

/// Smoke-level learnability on a 10-word set at the default learning rates.
/// Asserted for the losses where it holds at every seed tried; MAE and KL are
/// measured in the acceptance report instead.
#[test]
fn ten_word_learnability_for_mse_and_scp() {
    for seed in 0..3 {
        let set = random_set(10, &[20, 20, 20], 100 + seed);
        let config = common::default_config(seed);
        for loss in [LossKind::Mse, LossKind::Scp] {
            for spec in [
                MethodSpec::new(MetaMethod::Caeme).with_loss(loss),
                MethodSpec::new(MetaMethod::Daeme).with_loss(loss),
                MethodSpec::new(MetaMethod::Aaeme).with_loss(loss),
                MethodSpec::new(MetaMethod::Tae).with_loss(loss).with_target(0),
                MethodSpec::new(MetaMethod::Mte).with_loss(loss).with_target(0),
            ] {
                let trace = build(&set, &spec, &config).unwrap().loss_trace;
                let ratio = trace.last().unwrap() / trace[0];
                assert!(ratio <= 0.5, "{} seed {seed}: ratio {ratio}", spec.id());
            }
        }
    }
}
