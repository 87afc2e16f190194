//! Desk-scale calibration harness: times corpus generation and training,
//! then reports held-out agreement accuracy and a quick few-shot probe.
//! Run with --release; tune sizes via the constants below.

use std::time::Instant;

use genprobe::corpus::{apply_unknowns_and_filter, split_corpus, tokenize, SourceTag, Vocabulary};
use genprobe::eval::{
    build_known_noun_baseline, build_test_suite, evaluate_suite, BootstrapConfig, Condition,
    ConditionTag, ConstructionKind,
};
use genprobe::grammar::{generate_synthetic_corpus, Gender, GrammarSpec};
use genprobe::model::{init_model, Arch, ModelConfig};
use genprobe::schedule::TrainSchedule;
use genprobe::stimuli::test_templates;
use genprobe::train::{perplexity, train};
use genprobe::wordlab::{
    default_novel_specs, few_shot_update, implant_novel_noun, synthesize_novel_embedding,
    UpdateScope,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let arch = match args.get(1).map(String::as_str) {
        Some("transformer") => Arch::Transformer,
        _ => Arch::Lstm,
    };
    let n_sentences: usize = args
        .get(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(80_000);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2);
    let max_lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let clip: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let d_model: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(64);
    let momentum: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(0.9);
    let batch: usize = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(64);
    let n_layers: usize = args.get(9).and_then(|s| s.parse().ok()).unwrap_or(2);

    let t0 = Instant::now();
    let spec = GrammarSpec::default_spec();
    let text = generate_synthetic_corpus(&spec, n_sentences, 42).unwrap();
    let sentences = tokenize(&text);
    let vocab = Vocabulary::build(&sentences, 600).unwrap();
    let corpus = apply_unknowns_and_filter(&sentences, &vocab, SourceTag::Train);
    let (train_c, valid_c, test_c) = split_corpus(&corpus, 42).unwrap();
    println!(
        "corpus: {} sentences, {} tokens, V={}  ({:.1}s)",
        corpus.sentences.len(),
        corpus.token_count(),
        vocab.len(),
        t0.elapsed().as_secs_f64()
    );

    let config = ModelConfig {
        arch,
        vocab_size: vocab.len(),
        d_emb: d_model,
        d_hidden: d_model,
        n_layers,
        n_heads: 4,
        seq_len: 32,
        dropout: args.get(10).and_then(|s| s.parse().ok()).unwrap_or(0.0),
        seed: 1,
    };
    let schedule = TrainSchedule {
        n_epochs: epochs,
        warmup_epochs: if epochs > 1 { 1 } else { 0 },
        max_lr,
        momentum,
        batch_size: batch,
        seq_len: 32,
        grad_clip: Some(clip),
        seed: 1,
    };
    let model = init_model(&config).unwrap();
    let t1 = Instant::now();
    let (model, log) = train(model, &train_c, &valid_c, &schedule).unwrap();
    println!(
        "train {arch}: {:.1}s  initial ppl {:.1}",
        t1.elapsed().as_secs_f64(),
        log.initial_valid_ppl
    );
    for e in &log.epochs {
        println!(
            "  epoch {}: loss {:.3} valid_ppl {:.2} lr {:.4}",
            e.epoch, e.train_loss, e.valid_ppl, e.lr
        );
    }
    println!("test ppl {:.2}", perplexity(&model, &test_c).unwrap());

    // known-noun baseline accuracy
    let freqs = corpus.frequencies(vocab.len());
    let lexicon: Vec<(String, Gender)> = spec
        .nouns
        .iter()
        .map(|n| (n.word.clone(), n.gender))
        .collect();
    let pairs = build_known_noun_baseline(&vocab, &freqs, &lexicon, 20, 50).unwrap();
    let mut nouns: Vec<(u32, Gender)> = Vec::new();
    for p in &pairs {
        nouns.push((p.feminine, Gender::Feminine));
        nouns.push((p.masculine, Gender::Masculine));
    }
    let bootstrap = BootstrapConfig {
        resamples: 200,
        ..Default::default()
    };
    let t2 = Instant::now();
    for kind in [
        ConstructionKind::NounAdjective,
        ConstructionKind::NounParticiple,
    ] {
        let condition = Condition::for_tag(if kind == ConstructionKind::NounAdjective {
            ConditionTag::A
        } else {
            ConditionTag::B
        });
        let templates = test_templates(kind).unwrap();
        let items =
            build_test_suite(&condition, &nouns, &[0, 1, 3, 6], &templates, &vocab).unwrap();
        let report = evaluate_suite(&model, &items, &bootstrap).unwrap();
        print!("baseline {kind:?}: overall {:.3} ", report.overall_accuracy);
        for d in [0usize, 1, 3, 6] {
            print!("d{d}={:.3} ", report.accuracy_at_distance(d).unwrap());
        }
        println!(
            "f={:.3} m={:.3}",
            report.accuracy_for_gender(Gender::Feminine).unwrap(),
            report.accuracy_for_gender(Gender::Masculine).unwrap()
        );
    }
    // relative-pronoun baseline over vowel-initial nouns
    {
        let condition = Condition::for_tag(ConditionTag::C);
        let templates = test_templates(ConstructionKind::NounRelativePronoun).unwrap();
        let vowel_nouns: Vec<(u32, Gender)> = spec
            .nouns
            .iter()
            .filter(|n| n.vowel_initial())
            .filter_map(|n| vocab.id(&n.word).map(|id| (id, n.gender)))
            .collect();
        let items =
            build_test_suite(&condition, &vowel_nouns, &[1, 3, 5], &templates, &vocab).unwrap();
        let report = evaluate_suite(&model, &items, &bootstrap).unwrap();
        println!(
            "baseline relpro: overall {:.3} f={:.3} m={:.3}",
            report.overall_accuracy,
            report.accuracy_for_gender(Gender::Feminine).unwrap(),
            report.accuracy_for_gender(Gender::Masculine).unwrap()
        );
    }
    println!("eval: {:.1}s", t2.elapsed().as_secs_f64());

    // initial-gender survey over every frequency-matched pair
    {
        let all_specs = default_novel_specs(&vocab, &pairs).unwrap();
        let templates_a = test_templates(ConstructionKind::NounAdjective).unwrap();
        for sp in &all_specs {
            let mut m = model.clone();
            let vec = synthesize_novel_embedding(&m, sp).unwrap();
            let slot = implant_novel_noun(&mut m, &vec, &vocab).unwrap();
            let probe = genprobe::wordlab::initial_gender_probe_suite(slot, &vocab).unwrap();
            let (g, margin) = genprobe::wordlab::initial_gender(&m, &probe).unwrap();
            let nb = BootstrapConfig { resamples: 0, ..Default::default() };
            let condition = Condition::for_tag(ConditionTag::A);
            let suite_f = build_test_suite(&condition, &[(slot, Gender::Feminine)], &[0, 1, 3, 6], &templates_a, &vocab).unwrap();
            let pre_f = evaluate_suite(&m, &suite_f, &nb).unwrap().overall_accuracy;
            println!(
                "pair {:24} init {g} margin {margin:+.4} pre_f {pre_f:.3} pre_m {:.3}",
                sp.label, 1.0 - pre_f
            );
        }
    }

    // quick few-shot probe: condition A one-shot at several learning rates
    let specs = default_novel_specs(&vocab, &pairs[..4.min(pairs.len())]).unwrap();
    let taught_pool_f = genprobe::stimuli::learning_pool(ConstructionKind::ArticleNoun, Gender::Feminine).unwrap();
    let taught_pool_m = genprobe::stimuli::learning_pool(ConstructionKind::ArticleNoun, Gender::Masculine).unwrap();
    let templates = test_templates(ConstructionKind::NounAdjective).unwrap();
    for lr in [0.1, 0.5, 1.0, 2.0, 4.0] {
        let mut improved = 0;
        let mut cells = 0;
        let mut post_sum = 0.0;
        let mut pre_list: Vec<f64> = Vec::new();
        for spec_n in &specs {
            for (gender, pool) in [
                (Gender::Feminine, &taught_pool_f),
                (Gender::Masculine, &taught_pool_m),
            ] {
                let mut m = model.clone();
                let vec = synthesize_novel_embedding(&m, spec_n).unwrap();
                let slot = implant_novel_noun(&mut m, &vec, &vocab).unwrap();
                let condition = Condition::for_tag(ConditionTag::A);
                let suite = build_test_suite(
                    &condition,
                    &[(slot, gender)],
                    &[0, 1, 3, 6],
                    &templates,
                    &vocab,
                )
                .unwrap();
                let nb = BootstrapConfig {
                    resamples: 0,
                    ..Default::default()
                };
                let pre = evaluate_suite(&m, &suite, &nb).unwrap().overall_accuracy;
                let sentences = pool.encode(&vocab, slot).unwrap();
                few_shot_update(&mut m, &sentences[..1], slot, lr, UpdateScope::EmbeddingOnly)
                    .unwrap();
                let post = evaluate_suite(&m, &suite, &nb).unwrap().overall_accuracy;
                if post > pre {
                    improved += 1;
                }
                cells += 1;
                post_sum += post;
                pre_list.push(pre);
            }
        }
        let pres: Vec<String> = pre_list.iter().map(|p| format!("{p:.3}")).collect();
        println!(
            "few-shot lr={lr}: improved {improved}/{cells}, mean post {:.3}, pre=[{}]",
            post_sum / cells as f64,
            pres.join(" ")
        );
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
