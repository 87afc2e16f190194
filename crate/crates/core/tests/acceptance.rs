//! Acceptance suite. Each test checks one numbered criterion at its stated
//! tolerance and prints one `ACCEPT-n ... PASS` line; run with
//! `cargo test --test acceptance -- --nocapture` to see them.
//!
//! The desk-scale fixture (shared by several criteria) generates a
//! 500k-token balanced synthetic corpus, trains the LSTM and the
//! decoder-only transformer with three seeds each, picks a few-shot
//! learning rate per architecture by a one-shot sweep, and runs the full
//! few-shot protocol on the first instantiation of each architecture.

use std::time::{Duration, Instant};

use once_cell::sync::Lazy;
use rand::Rng;

use genprobe::analysis::rank_row_deltas;
use genprobe::corpus::{apply_unknowns_and_filter, split_corpus, tokenize, SourceTag, Vocabulary};
use genprobe::eval::{
    build_known_noun_baseline, build_test_suite, evaluate_suite, score_item, BootstrapConfig,
    Condition, ConditionTag, ConstructionKind, NounPair, TestItem,
};
use genprobe::grammar::{generate_synthetic_corpus, Gender, GrammarSpec};
use genprobe::model::{
    batch_log_loss, final_hidden, final_logits, init_model, load_checkpoint, loss_and_gradients,
    save_checkpoint, Arch, GradScope, LayerParams, ModelConfig, ModelState,
};
use genprobe::report::emit_report;
use genprobe::schedule::{lr_at, TrainSchedule};
use genprobe::stimuli::test_templates;
use genprobe::train::train;
use genprobe::wordlab::{
    default_novel_specs, implant_novel_noun, initial_gender, initial_gender_probe_suite,
    run_protocol, synthesize_novel_embedding, FewShotConfig, FewShotTrial, NovelNounSpec,
    ProtocolConfig, TaughtLabel, UpdateScope,
};

const CORPUS_SENTENCES: usize = 55_000;
const CORPUS_SEED: u64 = 2024;
const MODEL_SEEDS: [u64; 3] = [1, 2, 3];
const LR_GRID: [f64; 5] = [0.01, 0.1, 0.5, 1.0, 2.0];

struct DeskFixture {
    vocab: Vocabulary,
    lexicon: Vec<(String, Gender)>,
    corpus_freqs: Vec<u64>,
    /// Three instantiations per architecture.
    lstm: Vec<ModelState>,
    transformer: Vec<ModelState>,
    training_time: Duration,
    token_count: usize,
}

struct ProtocolFixture {
    /// (architecture label, chosen few-shot lr, trials).
    runs: Vec<(String, f64, Vec<FewShotTrial>)>,
}

fn desk_model_config(arch: Arch, vocab_size: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        arch,
        vocab_size,
        d_emb: 64,
        d_hidden: 64,
        n_layers: 2,
        n_heads: 4,
        seq_len: 32,
        dropout: 0.1,
        seed,
    }
}

fn desk_schedule(arch: Arch, seed: u64) -> TrainSchedule {
    match arch {
        Arch::Lstm => TrainSchedule {
            n_epochs: 4,
            warmup_epochs: 1,
            max_lr: 2.0,
            momentum: 0.9,
            batch_size: 32,
            seq_len: 32,
            grad_clip: Some(0.25),
            seed,
        },
        Arch::Transformer => TrainSchedule {
            n_epochs: 3,
            warmup_epochs: 1,
            max_lr: 1.0,
            momentum: 0.9,
            batch_size: 64,
            seq_len: 32,
            grad_clip: Some(0.25),
            seed,
        },
    }
}

static DESK: Lazy<DeskFixture> = Lazy::new(|| {
    let grammar = GrammarSpec::default_spec();
    let text = generate_synthetic_corpus(&grammar, CORPUS_SENTENCES, CORPUS_SEED).unwrap();
    let sentences = tokenize(&text);
    let vocab = Vocabulary::build(&sentences, 600).unwrap();
    let corpus = apply_unknowns_and_filter(&sentences, &vocab, SourceTag::Train);
    let token_count = corpus.token_count();
    let (train_c, valid_c, _) = split_corpus(&corpus, CORPUS_SEED).unwrap();

    let started = Instant::now();
    let mut lstm = Vec::new();
    let mut transformer = Vec::new();
    for arch in [Arch::Lstm, Arch::Transformer] {
        for seed in MODEL_SEEDS {
            let config = desk_model_config(arch, vocab.len(), seed);
            let schedule = desk_schedule(arch, seed);
            let model = init_model(&config).unwrap();
            let (best, log) = train(model, &train_c, &valid_c, &schedule).unwrap();
            eprintln!(
                "fixture: {arch} seed {seed} valid_ppl {:.2} ({:.0}s elapsed)",
                log.epochs[log.best_epoch - 1].valid_ppl,
                started.elapsed().as_secs_f64()
            );
            match arch {
                Arch::Lstm => lstm.push(best),
                Arch::Transformer => transformer.push(best),
            }
        }
    }
    let training_time = started.elapsed();
    let lexicon: Vec<(String, Gender)> = grammar
        .nouns
        .iter()
        .map(|n| (n.word.clone(), n.gender))
        .collect();
    let corpus_freqs = corpus.frequencies(vocab.len());
    DeskFixture {
        vocab,
        lexicon,
        corpus_freqs,
        lstm,
        transformer,
        training_time,
        token_count,
    }
});

fn matched_pairs(fx: &DeskFixture, n: usize) -> Vec<NounPair> {
    build_known_noun_baseline(&fx.vocab, &fx.corpus_freqs, &fx.lexicon, n, 50).unwrap()
}

/// The ten novel nouns with the most ambiguous initial gender on this
/// model, mirroring a blend construction that starts near the category
/// boundary.
fn ambiguous_specs(fx: &DeskFixture, model: &ModelState, n: usize) -> Vec<NovelNounSpec> {
    let pairs = matched_pairs(fx, 20);
    let specs = default_novel_specs(&fx.vocab, &pairs).unwrap();
    let mut with_margin: Vec<(f64, NovelNounSpec)> = specs
        .into_iter()
        .map(|spec| {
            let mut m = model.clone();
            let vector = synthesize_novel_embedding(&m, &spec).unwrap();
            let slot = implant_novel_noun(&mut m, &vector, &fx.vocab).unwrap();
            let probe = initial_gender_probe_suite(slot, &fx.vocab).unwrap();
            let (_, margin) = initial_gender(&m, &probe).unwrap();
            (margin.abs(), spec)
        })
        .collect();
    with_margin.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    with_margin.truncate(n);
    with_margin.into_iter().map(|(_, s)| s).collect()
}

fn protocol_config(label: &str, lr: f64, shots: Vec<usize>, reps: usize) -> ProtocolConfig {
    ProtocolConfig {
        few_shot: FewShotConfig {
            shots,
            repetitions: reps,
            pool_size: 15,
            lr,
            scope: UpdateScope::EmbeddingOnly,
            seed: 7,
        },
        conditions: ConditionTag::all().to_vec(),
        include_control: true,
        model_label: label.into(),
        ..Default::default()
    }
}

static PROTOCOL: Lazy<ProtocolFixture> = Lazy::new(|| {
    let fx = &*DESK;
    let mut runs = Vec::new();
    for (label, model) in [("lstm", &fx.lstm[0]), ("transformer", &fx.transformer[0])] {
        let specs = ambiguous_specs(fx, model, 10);
        // one-shot sweep on condition A picks the few-shot learning rate
        let mut best = (0usize, f64::NEG_INFINITY, LR_GRID[0]);
        for lr in LR_GRID {
            let config = ProtocolConfig {
                conditions: vec![ConditionTag::A],
                include_control: false,
                ..protocol_config(label, lr, vec![1], 1)
            };
            let trials = run_protocol(model, &fx.vocab, &specs, &config).unwrap();
            let improved = trials.iter().filter(|t| t.post_accuracy > t.pre_accuracy).count();
            let mean: f64 =
                trials.iter().map(|t| t.post_accuracy).sum::<f64>() / trials.len() as f64;
            eprintln!("fixture: {label} sweep lr={lr}: improved {improved}/{} mean {mean:.3}", trials.len());
            if (improved, mean) > (best.0, best.1) {
                best = (improved, mean, lr);
            }
        }
        let lr = best.2;
        eprintln!("fixture: {label} chose few-shot lr {lr}");
        let config = protocol_config(label, lr, vec![1, 2, 3, 5, 10], 2);
        let trials = run_protocol(model, &fx.vocab, &specs, &config).unwrap();
        runs.push((label.to_string(), lr, trials));
    }
    ProtocolFixture { runs }
});

fn toy_config(arch: Arch) -> ModelConfig {
    ModelConfig {
        arch,
        vocab_size: 50,
        d_emb: 16,
        d_hidden: 16,
        n_layers: if arch == Arch::Lstm { 1 } else { 2 },
        n_heads: 2,
        seq_len: 16,
        dropout: 0.0,
        seed: 31,
    }
}

#[test]
fn criterion_01_gradient_correctness() {
    let started = Instant::now();
    for arch in [Arch::Lstm, Arch::Transformer] {
        let model = init_model(&toy_config(arch)).unwrap();
        let batch = vec![
            vec![3, 17, 42, 8, 23, 1],
            vec![11, 11, 36, 49, 2, 30, 7, 1],
        ];
        let (_, grads) = loss_and_gradients(&model, &batch, GradScope::Full, None).unwrap();
        let eps = 1e-4;
        let mut rng = genprobe::util::rng_for(5, &["accept-fd", &arch.to_string()]);
        let n_tensors = model.params.tensors().len();
        let mut checked = 0;
        let mut worst = 0.0f64;
        while checked < 50 {
            let tensor_idx = rng.gen_range(0..n_tensors);
            let len = model.params.tensors()[tensor_idx].1.len();
            let elem = rng.gen_range(0..len);
            let analytic = grads.params.tensors()[tensor_idx].1[elem];
            let mut up = model.clone();
            up.params.tensors_mut()[tensor_idx].1[elem] += eps;
            let (lu, n) = batch_log_loss(&up, &batch).unwrap();
            let mut down = model.clone();
            down.params.tensors_mut()[tensor_idx].1[elem] -= eps;
            let (ld, _) = batch_log_loss(&down, &batch).unwrap();
            let numeric = (lu - ld) / (2.0 * eps * n as f64);
            let rel = (analytic - numeric).abs() / (analytic.abs() + 1e-8);
            assert!(
                rel < 1e-3,
                "{arch} tensor {} elem {elem}: rel err {rel}",
                model.params.tensors()[tensor_idx].0
            );
            worst = worst.max(rel);
            checked += 1;
        }
        println!(
            "ACCEPT-1 {arch}: {checked} parameters, worst relative error {worst:.2e} (< 1e-3) PASS"
        );
    }
    assert!(
        started.elapsed() < Duration::from_secs(60),
        "gradient check exceeded one minute"
    );
}

#[test]
fn criterion_02_tied_embedding_witness() {
    let dir = std::env::temp_dir().join(format!("gp-accept2-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for arch in [Arch::Lstm, Arch::Transformer] {
        let mut model = init_model(&toy_config(arch)).unwrap();
        let row = 21u32;
        let with_row = vec![4, row, 9];
        let without_row = vec![4, 6, 9];

        let hidden_before = final_hidden(&model, &with_row).unwrap();
        let logit_before = final_logits(&model, &without_row).unwrap()[row as usize];

        let mut values = model.get_embedding_row(row).unwrap();
        values.iter_mut().for_each(|v| *v += 0.5);
        model.set_embedding_row(row, &values).unwrap();

        // probe 1: input role
        let hidden_after = final_hidden(&model, &with_row).unwrap();
        assert_ne!(hidden_before, hidden_after, "{arch}: input role inert");
        // probe 2: output role, prefix avoiding the row
        let logit_after = final_logits(&model, &without_row).unwrap()[row as usize];
        assert_ne!(logit_before, logit_after, "{arch}: output role inert");

        // checkpoint round trip preserves the tie: a single write after
        // loading is still observed by both roles
        let path = dir.join(format!("{arch}.ckpt"));
        save_checkpoint(&path, &model, None, 0).unwrap();
        let mut loaded = load_checkpoint(&path).unwrap().model;
        assert_eq!(loaded, model);
        let h0 = final_hidden(&loaded, &with_row).unwrap();
        let l0 = final_logits(&loaded, &without_row).unwrap()[row as usize];
        let mut values = loaded.get_embedding_row(row).unwrap();
        values.iter_mut().for_each(|v| *v -= 0.7);
        loaded.set_embedding_row(row, &values).unwrap();
        assert_ne!(h0, final_hidden(&loaded, &with_row).unwrap());
        assert_ne!(
            l0,
            final_logits(&loaded, &without_row).unwrap()[row as usize]
        );
        println!("ACCEPT-2 {arch}: both roles react to a row write, before and after checkpoint round trip PASS");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn criterion_03_embedding_only_scope_invariant() {
    let protocol = &*PROTOCOL;
    let mut total = 0;
    for (label, _, trials) in &protocol.runs {
        for trial in trials {
            assert_eq!(
                trial.frozen_hash_before,
                trial.frozen_hash_after,
                "{label} trial {} modified non-embedding parameters",
                trial.key_string()
            );
            total += 1;
        }
    }
    println!(
        "ACCEPT-3: non-embedding parameter hash identical before/after in {total}/{total} trials PASS"
    );
}

#[test]
fn criterion_04_desk_baseline_agreement() {
    let fx = &*DESK;
    assert!(
        fx.token_count >= 450_000,
        "corpus has only {} tokens",
        fx.token_count
    );
    assert!(
        fx.training_time < Duration::from_secs(30 * 60),
        "training took {:?}",
        fx.training_time
    );
    let pairs = matched_pairs(fx, 20);
    let mut nouns: Vec<(u32, Gender)> = Vec::new();
    for p in &pairs {
        nouns.push((p.feminine, Gender::Feminine));
        nouns.push((p.masculine, Gender::Masculine));
    }
    let bootstrap = BootstrapConfig {
        resamples: 0,
        ..Default::default()
    };
    for (label, models) in [("lstm", &fx.lstm), ("transformer", &fx.transformer)] {
        // accuracy per (gender, distance) averaged across the three seeds,
        // pooled over the adjective and participle suites
        let mut acc: std::collections::BTreeMap<(u8, usize), Vec<f64>> = Default::default();
        for model in models.iter() {
            for (tag, kind) in [
                (ConditionTag::A, ConstructionKind::NounAdjective),
                (ConditionTag::B, ConstructionKind::NounParticiple),
            ] {
                let condition = Condition::for_tag(tag);
                let templates = test_templates(kind).unwrap();
                let items =
                    build_test_suite(&condition, &nouns, &[0, 3], &templates, &fx.vocab).unwrap();
                let report = evaluate_suite(model, &items, &bootstrap).unwrap();
                for cell in &report.cells {
                    let g = if cell.gender == Gender::Feminine { 0 } else { 1 };
                    acc.entry((g, cell.distance))
                        .or_default()
                        .push(cell.accuracy);
                }
            }
        }
        for ((gender_key, distance), values) in &acc {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let gender = if *gender_key == 0 { "f" } else { "m" };
            let threshold = if *distance == 0 { 0.90 } else { 0.80 };
            assert!(
                mean >= threshold,
                "{label} gender {gender} distance {distance}: {mean:.4} < {threshold}"
            );
            println!(
                "ACCEPT-4 {label} gender={gender} distance={distance}: accuracy {mean:.4} (>= {threshold}) PASS"
            );
        }
    }
    println!(
        "ACCEPT-4: six models trained on {} tokens in {:.1} min (< 30 min) PASS",
        fx.token_count,
        fx.training_time.as_secs_f64() / 60.0
    );
}

#[test]
fn criterion_05_few_shot_acquisition() {
    let protocol = &*PROTOCOL;
    for (label, lr, trials) in &protocol.runs {
        // condition A, one shot: per (noun x taught gender) cell, the mean
        // over repetitions must exceed the pre-update accuracy
        let mut cells: std::collections::BTreeMap<(String, TaughtLabel), (Vec<f64>, Vec<f64>)> =
            Default::default();
        for t in trials.iter().filter(|t| {
            t.condition == ConditionTag::A && t.shot_count == 1 && t.taught != TaughtLabel::Neutral
        }) {
            let entry = cells.entry((t.spec_label.clone(), t.taught)).or_default();
            entry.0.push(t.pre_accuracy);
            entry.1.push(t.post_accuracy);
        }
        assert_eq!(cells.len(), 20, "{label}: expected 10 nouns x 2 genders");
        let improved = cells
            .values()
            .filter(|(pre, post)| {
                let pre = pre.iter().sum::<f64>() / pre.len() as f64;
                let post = post.iter().sum::<f64>() / post.len() as f64;
                post > pre
            })
            .count();
        let share = improved as f64 / cells.len() as f64;
        assert!(
            share >= 0.80,
            "{label}: one-shot improvement in only {improved}/20 cells"
        );

        let mean_at = |shots: usize| {
            let accs: Vec<f64> = trials
                .iter()
                .filter(|t| {
                    t.condition == ConditionTag::A
                        && t.shot_count == shots
                        && t.taught != TaughtLabel::Neutral
                })
                .map(|t| t.post_accuracy)
                .collect();
            accs.iter().sum::<f64>() / accs.len() as f64
        };
        let at_1 = mean_at(1);
        let at_10 = mean_at(10);
        assert!(
            at_10 >= at_1,
            "{label}: mean accuracy at 10 shots {at_10:.4} < at 1 shot {at_1:.4}"
        );
        println!(
            "ACCEPT-5 {label} (lr {lr}): one-shot improvement {improved}/20 cells (>= 16), \
             mean 1-shot {at_1:.4} <= 10-shot {at_10:.4} PASS"
        );
    }
}

#[test]
fn criterion_06_generalisation_across_constructions() {
    let protocol = &*PROTOCOL;
    for (label, _, trials) in &protocol.runs {
        for condition in [ConditionTag::C, ConditionTag::D] {
            let accs: Vec<f64> = trials
                .iter()
                .filter(|t| {
                    t.condition == condition
                        && t.shot_count == 5
                        && t.taught != TaughtLabel::Neutral
                })
                .map(|t| t.post_accuracy)
                .collect();
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            assert!(
                mean >= 0.75,
                "{label} condition {condition} at 5 shots: {mean:.4} < 0.75"
            );
            println!(
                "ACCEPT-6 {label} condition {condition}: mean taught-gender accuracy at 5 shots \
                 {mean:.4} (>= 0.75) PASS"
            );
        }
    }
}

#[test]
fn criterion_07_gender_axis_sign_test() {
    let protocol = &*PROTOCOL;
    let mut consistent = 0usize;
    let mut taught_total = 0usize;
    let mut taught_abs = Vec::new();
    let mut control_abs = Vec::new();
    for (_, _, trials) in &protocol.runs {
        for t in trials {
            let projection = t.axis_projection();
            match t.taught {
                TaughtLabel::Masculine => {
                    taught_total += 1;
                    taught_abs.push(projection.abs());
                    if projection > 0.0 {
                        consistent += 1;
                    }
                }
                TaughtLabel::Feminine => {
                    taught_total += 1;
                    taught_abs.push(projection.abs());
                    if projection < 0.0 {
                        consistent += 1;
                    }
                }
                TaughtLabel::Neutral => control_abs.push(projection.abs()),
            }
        }
    }
    let share = consistent as f64 / taught_total as f64;
    assert!(
        share >= 0.90,
        "sign consistency {share:.4} over {taught_total} taught trials"
    );
    let taught_mean = taught_abs.iter().sum::<f64>() / taught_abs.len() as f64;
    let control_mean = control_abs.iter().sum::<f64>() / control_abs.len() as f64;
    assert!(
        control_mean < 0.10 * taught_mean,
        "control |projection| {control_mean:.5} >= 10% of taught mean {taught_mean:.5}"
    );
    println!(
        "ACCEPT-7: sign consistency {consistent}/{taught_total} ({share:.3} >= 0.90); control \
         |projection| {control_mean:.5} < 10% of taught {taught_mean:.5} PASS"
    );
}

#[test]
fn criterion_08_weight_change_ranking() {
    let protocol = &*PROTOCOL;
    let mut in_top10 = 0usize;
    let mut total = 0usize;
    for (_, _, trials) in &protocol.runs {
        for t in trials {
            let top = rank_row_deltas(&t.delta_rows, 10);
            if top.iter().any(|d| d.token == t.slot) {
                in_top10 += 1;
            }
            total += 1;
        }
    }
    let share = in_top10 as f64 / total as f64;
    assert!(share >= 0.95, "slot in top-10 in only {in_top10}/{total} trials");
    println!(
        "ACCEPT-8: novel-noun slot in top-10 weight changes in {in_top10}/{total} trials \
         ({share:.3} >= 0.95) PASS"
    );
}

/// Straight-line LSTM forward over a single prefix: explicit scalar loops,
/// no shared code with the library implementation.
fn straight_line_lstm(model: &ModelState, prefix: &[u32]) -> Vec<f64> {
    let d = model.config.d_emb;
    let layers = match &model.params.layers {
        LayerParams::Lstm(layers) => layers,
        _ => unreachable!(),
    };
    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut h = vec![vec![0.0; d]; layers.len()];
    let mut c = vec![vec![0.0; d]; layers.len()];
    for &tok in prefix {
        let mut x: Vec<f64> = (0..d)
            .map(|j| model.params.embedding.data[tok as usize * d + j])
            .collect();
        for (l, layer) in layers.iter().enumerate() {
            let mut pre = vec![0.0; 4 * d];
            for (r, p) in pre.iter_mut().enumerate() {
                let mut s = layer.bias[r];
                for j in 0..d {
                    s += layer.w_ih.data[r * d + j] * x[j];
                    s += layer.w_hh.data[r * d + j] * h[l][j];
                }
                *p = s;
            }
            let mut new_h = vec![0.0; d];
            for j in 0..d {
                let i_g = sigmoid(pre[j]);
                let f_g = sigmoid(pre[d + j]);
                let g_g = pre[2 * d + j].tanh();
                let o_g = sigmoid(pre[3 * d + j]);
                c[l][j] = f_g * c[l][j] + i_g * g_g;
                new_h[j] = o_g * c[l][j].tanh();
            }
            h[l] = new_h.clone();
            x = new_h;
        }
    }
    let top = h.last().unwrap();
    let v = model.config.vocab_size;
    let mut logits = vec![0.0; v];
    for (t, logit) in logits.iter_mut().enumerate() {
        let mut s = model.params.out_bias[t];
        for j in 0..d {
            s += model.params.embedding.data[t * d + j] * top[j];
        }
        *logit = s;
    }
    softmax_straight(&logits)
}

/// Straight-line pre-norm transformer forward for a single prefix.
fn straight_line_transformer(model: &ModelState, prefix: &[u32]) -> Vec<f64> {
    let d = model.config.d_emb;
    let n_heads = model.config.n_heads;
    let dh = d / n_heads;
    let t_steps = prefix.len();
    let (layers, lnf_gamma, lnf_beta) = match &model.params.layers {
        LayerParams::Transformer {
            layers,
            lnf_gamma,
            lnf_beta,
        } => (layers, lnf_gamma, lnf_beta),
        _ => unreachable!(),
    };
    let layer_norm = |x: &[f64], gamma: &[f64], beta: &[f64]| -> Vec<f64> {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64;
        let inv = 1.0 / (var + 1e-5).sqrt();
        x.iter()
            .enumerate()
            .map(|(j, v)| gamma[j] * (v - mean) * inv + beta[j])
            .collect()
    };
    let gelu = |u: f64| {
        let k = (2.0 / std::f64::consts::PI).sqrt();
        0.5 * u * (1.0 + (k * (u + 0.044715 * u * u * u)).tanh())
    };
    let matvec = |w: &[f64], b: &[f64], x: &[f64], rows: usize, cols: usize| -> Vec<f64> {
        (0..rows)
            .map(|r| {
                let mut s = b[r];
                for j in 0..cols {
                    s += w[r * cols + j] * x[j];
                }
                s
            })
            .collect()
    };

    let scale = (d as f64).sqrt();
    let mut x: Vec<Vec<f64>> = (0..t_steps)
        .map(|p| {
            (0..d)
                .map(|j| {
                    let emb = model.params.embedding.data[prefix[p] as usize * d + j];
                    let rate = (p as f64) / 10000f64.powf(2.0 * (j / 2) as f64 / d as f64);
                    let pos = if j % 2 == 0 { rate.sin() } else { rate.cos() };
                    emb * scale + pos
                })
                .collect()
        })
        .collect();

    for layer in layers {
        let a1: Vec<Vec<f64>> = x
            .iter()
            .map(|row| layer_norm(row, &layer.ln1_gamma, &layer.ln1_beta))
            .collect();
        let q: Vec<Vec<f64>> = a1
            .iter()
            .map(|row| matvec(&layer.w_q.data, &layer.b_q, row, d, d))
            .collect();
        let k: Vec<Vec<f64>> = a1
            .iter()
            .map(|row| matvec(&layer.w_k.data, &layer.b_k, row, d, d))
            .collect();
        let v: Vec<Vec<f64>> = a1
            .iter()
            .map(|row| matvec(&layer.w_v.data, &layer.b_v, row, d, d))
            .collect();
        let mut ctx = vec![vec![0.0; d]; t_steps];
        for h_idx in 0..n_heads {
            let c0 = h_idx * dh;
            for i in 0..t_steps {
                let mut scores = Vec::with_capacity(i + 1);
                for j in 0..=i {
                    let mut s = 0.0;
                    for e in 0..dh {
                        s += q[i][c0 + e] * k[j][c0 + e];
                    }
                    scores.push(s / (dh as f64).sqrt());
                }
                let probs = softmax_straight(&scores);
                for (j, p) in probs.iter().enumerate() {
                    for e in 0..dh {
                        ctx[i][c0 + e] += p * v[j][c0 + e];
                    }
                }
            }
        }
        for i in 0..t_steps {
            let attn = matvec(&layer.w_o.data, &layer.b_o, &ctx[i], d, d);
            for j in 0..d {
                x[i][j] += attn[j];
            }
            let a2 = layer_norm(&x[i], &layer.ln2_gamma, &layer.ln2_beta);
            let u = matvec(&layer.w_ff1.data, &layer.b_ff1, &a2, 4 * d, d);
            let g: Vec<f64> = u.iter().map(|&uv| gelu(uv)).collect();
            let ff = matvec(&layer.w_ff2.data, &layer.b_ff2, &g, d, 4 * d);
            for j in 0..d {
                x[i][j] += ff[j];
            }
        }
    }
    let hidden = layer_norm(&x[t_steps - 1], lnf_gamma, lnf_beta);
    let v_size = model.config.vocab_size;
    let mut logits = vec![0.0; v_size];
    for (t, logit) in logits.iter_mut().enumerate() {
        let mut s = model.params.out_bias[t];
        for j in 0..d {
            s += model.params.embedding.data[t * d + j] * hidden[j];
        }
        *logit = s;
    }
    softmax_straight(&logits)
}

fn softmax_straight(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

#[test]
fn criterion_09_scoring_oracle_equivalence() {
    for arch in [Arch::Lstm, Arch::Transformer] {
        let config = ModelConfig {
            arch,
            vocab_size: 3,
            d_emb: 2,
            d_hidden: 2,
            n_layers: 1,
            n_heads: 1,
            seq_len: 8,
            dropout: 0.0,
            seed: 77,
        };
        let model = init_model(&config).unwrap();
        let item = TestItem {
            prefix: vec![2, 2, 0],
            target_f: 0,
            target_m: 1,
            condition: ConditionTag::A,
            n_intervening: 0,
            noun: 2,
            noun_gender: Gender::Feminine,
        };
        let scored = score_item(&model, &item).unwrap();
        let oracle = match arch {
            Arch::Lstm => straight_line_lstm(&model, &item.prefix),
            Arch::Transformer => straight_line_transformer(&model, &item.prefix),
        };
        let (of, om) = (oracle[0], oracle[1]);
        assert!(
            (scored.p_f - of).abs() < 1e-10 && (scored.p_m - om).abs() < 1e-10,
            "{arch}: scored ({}, {}) vs oracle ({of}, {om})",
            scored.p_f,
            scored.p_m
        );
        println!(
            "ACCEPT-9 {arch}: probabilities match an independent straight-line forward to 1e-10 \
             (|d_f| = {:.2e}, |d_m| = {:.2e}) PASS",
            (scored.p_f - of).abs(),
            (scored.p_m - om).abs()
        );
    }
}

#[test]
fn criterion_10_protocol_cardinality_and_determinism() {
    // a small untrained model keeps this about the protocol machinery, not
    // model quality
    let grammar = GrammarSpec::default_spec();
    let text = generate_synthetic_corpus(&grammar, 6000, 55).unwrap();
    let sentences = tokenize(&text);
    let vocab = Vocabulary::build(&sentences, 600).unwrap();
    let corpus = apply_unknowns_and_filter(&sentences, &vocab, SourceTag::Train);
    let lexicon: Vec<(String, Gender)> = grammar
        .nouns
        .iter()
        .map(|n| (n.word.clone(), n.gender))
        .collect();
    let freqs = corpus.frequencies(vocab.len());
    let pairs = build_known_noun_baseline(&vocab, &freqs, &lexicon, 20, 5).unwrap();
    let specs = default_novel_specs(&vocab, &pairs).unwrap();
    assert_eq!(specs.len(), 20);

    let model = init_model(&ModelConfig {
        arch: Arch::Lstm,
        vocab_size: vocab.len(),
        d_emb: 16,
        d_hidden: 16,
        n_layers: 1,
        n_heads: 1,
        seq_len: 24,
        dropout: 0.0,
        seed: 3,
    })
    .unwrap();

    let config = ProtocolConfig {
        distances_adjacent: vec![0],
        distances_relative: vec![1],
        include_control: false,
        ..protocol_config("cardinality", 0.5, vec![1, 2, 3, 5, 10], 5)
    };
    let trials = run_protocol(&model, &vocab, &specs, &config).unwrap();
    let expected = 20 * 4 * 2 * 5 * 5;
    assert_eq!(trials.len(), expected);

    let again = run_protocol(&model, &vocab, &specs, &config).unwrap();
    let csv_a = genprobe::wordlab::trials_to_csv(&trials);
    let csv_b = genprobe::wordlab::trials_to_csv(&again);
    assert_eq!(csv_a, csv_b, "protocol reruns must be byte-identical");
    let jsonl_a = genprobe::wordlab::trials_to_jsonl(&trials).unwrap();
    let jsonl_b = genprobe::wordlab::trials_to_jsonl(&again).unwrap();
    assert_eq!(jsonl_a, jsonl_b);
    println!(
        "ACCEPT-10: {expected} trials (20 x 4 x 2 x 5 x 5), rerun byte-identical PASS"
    );
}

#[test]
fn criterion_11_masculine_bias_probe() {
    // biased preset: 0.7 masculine head-noun ratio; the report must carry
    // the feminine-vs-masculine accuracy gap per shot count (no threshold)
    let grammar = GrammarSpec::biased_spec();
    let text = generate_synthetic_corpus(&grammar, 15_000, 91).unwrap();
    let sentences = tokenize(&text);
    let vocab = Vocabulary::build(&sentences, 600).unwrap();
    let corpus = apply_unknowns_and_filter(&sentences, &vocab, SourceTag::Train);
    let (train_c, valid_c, _) = split_corpus(&corpus, 91).unwrap();
    let model = init_model(&ModelConfig {
        arch: Arch::Lstm,
        vocab_size: vocab.len(),
        d_emb: 64,
        d_hidden: 64,
        n_layers: 2,
        n_heads: 1,
        seq_len: 32,
        dropout: 0.0,
        seed: 5,
    })
    .unwrap();
    let schedule = TrainSchedule {
        n_epochs: 4,
        warmup_epochs: 1,
        max_lr: 2.0,
        momentum: 0.9,
        batch_size: 32,
        seq_len: 32,
        grad_clip: Some(0.25),
        seed: 5,
    };
    let (model, _) = train(model, &train_c, &valid_c, &schedule).unwrap();

    let lexicon: Vec<(String, Gender)> = grammar
        .nouns
        .iter()
        .map(|n| (n.word.clone(), n.gender))
        .collect();
    let freqs = corpus.frequencies(vocab.len());
    let pairs = build_known_noun_baseline(&vocab, &freqs, &lexicon, 4, 20).unwrap();
    let specs = default_novel_specs(&vocab, &pairs).unwrap();
    let config = ProtocolConfig {
        conditions: vec![ConditionTag::A],
        include_control: false,
        ..protocol_config("lstm-biased", 1.0, vec![1, 5, 10], 2)
    };
    let trials = run_protocol(&model, &vocab, &specs, &config).unwrap();
    let aggregate = genprobe::analysis::aggregate_trials(
        &trials,
        &BootstrapConfig {
            resamples: 200,
            ..Default::default()
        },
    )
    .unwrap();
    let dir = std::env::temp_dir().join(format!("gp-accept11-{}", std::process::id()));
    emit_report(&aggregate, &trials, Some(&vocab), &dir).unwrap();
    let summary = std::fs::read_to_string(dir.join("summary.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&summary).unwrap();
    let gaps = value["gender_gaps"].as_array().unwrap();
    for shots in [1u64, 5, 10] {
        let entry = gaps
            .iter()
            .find(|g| g["shots"].as_u64() == Some(shots) && g["condition"].is_null())
            .unwrap_or_else(|| panic!("no pooled gender-gap entry for {shots} shots"));
        println!(
            "ACCEPT-11: biased preset, shots={shots}: masculine {:.4} feminine {:.4} gap {:+.4} (reported, non-gating)",
            entry["masculine_accuracy"].as_f64().unwrap(),
            entry["feminine_accuracy"].as_f64().unwrap(),
            entry["gap"].as_f64().unwrap()
        );
    }
    println!("ACCEPT-11: gap-per-shot-count table present in the report PASS");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn criterion_12_schedule_correctness() {
    let schedule = TrainSchedule {
        n_epochs: 50,
        warmup_epochs: 1,
        max_lr: 0.02,
        momentum: 0.9,
        batch_size: 64,
        seq_len: 100,
        grad_clip: None,
        seed: 0,
    };
    let spe = 250;
    assert_eq!(lr_at(&schedule, 0, spe), 0.0);
    assert_eq!(lr_at(&schedule, spe, spe), schedule.max_lr);
    let final_lr = lr_at(&schedule, 50 * spe, spe);
    assert!(final_lr < 1e-9 * schedule.max_lr);
    // continuity at the boundary: the ramp approaches max_lr with step size
    // max_lr / warmup_steps
    let before = lr_at(&schedule, spe - 1, spe);
    assert!((schedule.max_lr - before) <= schedule.max_lr / spe as f64 + 1e-15);
    println!(
        "ACCEPT-12: lr(0)=0, lr(warmup end)={}, lr(final)={final_lr:.2e} (< 1e-9*max_lr), \
         continuous boundary PASS",
        schedule.max_lr
    );
}
