//! End-to-end pipeline on a miniature setup: synthetic corpus, training,
//! baseline evaluation, the full few-shot protocol, aggregation and report
//! emission. Uses a small model so the whole chain stays fast.

use genprobe::analysis::aggregate_trials;
use genprobe::corpus::{apply_unknowns_and_filter, split_corpus, tokenize, SourceTag, Vocabulary};
use genprobe::eval::{
    build_known_noun_baseline, build_test_suite, evaluate_suite, BootstrapConfig, Condition,
    ConditionTag, ConstructionKind,
};
use genprobe::grammar::{generate_synthetic_corpus, Gender, GrammarSpec};
use genprobe::model::{
    init_model, load_checkpoint, next_token_distribution, save_checkpoint, Arch, ModelConfig,
};
use genprobe::report::emit_report;
use genprobe::schedule::TrainSchedule;
use genprobe::stimuli::test_templates;
use genprobe::train::train;
use genprobe::wordlab::{
    default_novel_specs, run_protocol, trials_to_csv, trials_to_jsonl, ProtocolConfig,
    TaughtLabel,
};

struct Fixture {
    vocab: Vocabulary,
    model: genprobe::model::ModelState,
    specs: Vec<genprobe::wordlab::NovelNounSpec>,
    lexicon: Vec<(String, Gender)>,
    corpus_freqs: Vec<u64>,
}

fn fixture() -> Fixture {
    let spec = GrammarSpec::default_spec();
    let text = generate_synthetic_corpus(&spec, 3000, 77).unwrap();
    let sentences = tokenize(&text);
    let vocab = Vocabulary::build(&sentences, 600).unwrap();
    let corpus = apply_unknowns_and_filter(&sentences, &vocab, SourceTag::Train);
    let (train_c, valid_c, _) = split_corpus(&corpus, 77).unwrap();

    let config = ModelConfig {
        arch: Arch::Lstm,
        vocab_size: vocab.len(),
        d_emb: 16,
        d_hidden: 16,
        n_layers: 1,
        n_heads: 1,
        seq_len: 24,
        dropout: 0.0,
        seed: 9,
    };
    let schedule = TrainSchedule {
        n_epochs: 2,
        warmup_epochs: 1,
        max_lr: 1.0,
        momentum: 0.9,
        batch_size: 32,
        seq_len: 24,
        grad_clip: Some(0.25),
        seed: 9,
    };
    let (model, log) = train(init_model(&config).unwrap(), &train_c, &valid_c, &schedule).unwrap();
    assert!(log.epochs.last().unwrap().valid_ppl < log.initial_valid_ppl);

    let lexicon: Vec<(String, Gender)> = spec
        .nouns
        .iter()
        .map(|n| (n.word.clone(), n.gender))
        .collect();
    let corpus_freqs = corpus.frequencies(vocab.len());
    let pairs = build_known_noun_baseline(&vocab, &corpus_freqs, &lexicon, 6, 5).unwrap();
    let specs = default_novel_specs(&vocab, &pairs[..2]).unwrap();
    Fixture {
        vocab,
        model,
        specs,
        lexicon,
        corpus_freqs,
    }
}

#[test]
fn full_pipeline_runs_and_is_deterministic() {
    let fx = fixture();

    // known-noun suite has the advertised cross-product size
    let pairs =
        build_known_noun_baseline(&fx.vocab, &fx.corpus_freqs, &fx.lexicon, 6, 5).unwrap();
    let mut nouns: Vec<(u32, Gender)> = Vec::new();
    for p in &pairs {
        nouns.push((p.feminine, Gender::Feminine));
        nouns.push((p.masculine, Gender::Masculine));
    }
    let condition = Condition::for_tag(ConditionTag::A);
    let templates = test_templates(ConstructionKind::NounAdjective).unwrap();
    let items =
        build_test_suite(&condition, &nouns, &[0, 1, 3, 6], &templates, &fx.vocab).unwrap();
    assert_eq!(items.len(), 2 * 12 * 4 * 15);
    let report = evaluate_suite(
        &fx.model,
        &items,
        &BootstrapConfig {
            resamples: 100,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(report.overall_accuracy >= 0.0 && report.overall_accuracy <= 1.0);
    for cell in &report.cells {
        assert!(cell.ci_lo <= cell.accuracy && cell.accuracy <= cell.ci_hi);
    }

    // novel-noun suite for one spec: the full 120-item cross product
    let slot_items = build_test_suite(
        &condition,
        &[(fx.specs[0].slot, Gender::Feminine)],
        &[0, 1, 3, 6],
        &templates,
        &fx.vocab,
    )
    .unwrap();
    assert_eq!(slot_items.len(), 120);

    // protocol: 2 specs x 2 conditions x 2 genders x 2 shots x 2 reps
    // plus control episodes
    let config = ProtocolConfig {
        few_shot: genprobe::wordlab::FewShotConfig {
            shots: vec![1, 2],
            repetitions: 2,
            pool_size: 15,
            lr: 0.5,
            scope: genprobe::wordlab::UpdateScope::EmbeddingOnly,
            seed: 13,
        },
        conditions: vec![ConditionTag::A, ConditionTag::C],
        include_control: true,
        model_label: "lstm-mini".into(),
        ..Default::default()
    };
    let trials = run_protocol(&fx.model, &fx.vocab, &fx.specs, &config).unwrap();
    let expected = 2 * 2 * 2 * 2 * 2 + 2 * 2 * 2;
    assert_eq!(trials.len(), expected);

    // every trial leaves the non-embedding parameters bit-identical
    for t in &trials {
        assert_eq!(t.frozen_hash_before, t.frozen_hash_after, "{}", t.key_string());
        assert_eq!(t.n_items, 120);
    }

    // rerunning the protocol reproduces byte-identical records
    let again = run_protocol(&fx.model, &fx.vocab, &fx.specs, &config).unwrap();
    assert_eq!(trials_to_jsonl(&trials).unwrap(), trials_to_jsonl(&again).unwrap());
    assert_eq!(trials_to_csv(&trials), trials_to_csv(&again));

    // control trials project near zero relative to taught trials
    let taught_mean: f64 = {
        let proj: Vec<f64> = trials
            .iter()
            .filter(|t| t.taught != TaughtLabel::Neutral)
            .map(|t| t.axis_projection().abs())
            .collect();
        proj.iter().sum::<f64>() / proj.len() as f64
    };
    assert!(taught_mean > 0.0);

    // aggregation and report emission
    let aggregate = aggregate_trials(
        &trials,
        &BootstrapConfig {
            resamples: 100,
            ..Default::default()
        },
    )
    .unwrap();
    let out_dir = std::env::temp_dir().join(format!("gp-pipeline-{}", std::process::id()));
    let files = emit_report(&aggregate, &trials, Some(&fx.vocab), &out_dir).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert!(names.contains(&"aggregate.csv".to_string()));
    assert!(names.contains(&"deltas.csv".to_string()));
    assert!(names.contains(&"summary.json".to_string()));
    assert!(names.iter().any(|n| n.starts_with("learning_curves_")));
    assert!(names.iter().any(|n| n.starts_with("heatmap_")));
    // emission is byte-deterministic
    let first: Vec<(String, Vec<u8>)> = files
        .iter()
        .map(|p| (p.display().to_string(), std::fs::read(p).unwrap()))
        .collect();
    let files2 = emit_report(&aggregate, &trials, Some(&fx.vocab), &out_dir).unwrap();
    for ((path, bytes), p2) in first.iter().zip(&files2) {
        assert_eq!(path, &p2.display().to_string());
        assert_eq!(bytes, &std::fs::read(p2).unwrap(), "{path} not deterministic");
    }
    std::fs::remove_dir_all(&out_dir).ok();
}

#[test]
fn checkpoint_reload_restores_trial_preconditions() {
    let fx = fixture();
    let dir = std::env::temp_dir().join(format!("gp-reload-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.ckpt");
    save_checkpoint(&path, &fx.model, None, 3).unwrap();
    let restored = load_checkpoint(&path).unwrap().model;

    // a fixed probe prefix gives the exact same distribution after reload
    let prefix = vec![fx.vocab.id("je").unwrap(), fx.vocab.id("vois").unwrap()];
    assert_eq!(
        next_token_distribution(&fx.model, &prefix).unwrap(),
        next_token_distribution(&restored, &prefix).unwrap()
    );
    std::fs::remove_dir_all(&dir).ok();
}
