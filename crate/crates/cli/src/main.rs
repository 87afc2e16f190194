//! Single entry point for the whole pipeline: synthetic-corpus generation,
//! corpus preparation, training, baseline agreement evaluation, the
//! few-shot novel-noun protocol, post-hoc analysis and the learning-rate
//! sweep. Every run writes its resolved configuration to `config.lock`;
//! rerunning with the same lock reproduces byte-identical outputs.

mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use genprobe::analysis::aggregate_trials;
use genprobe::corpus::{
    apply_unknowns_and_filter, split_corpus, tokenize, SourceTag, TokenizedCorpus, Vocabulary,
};
use genprobe::error::{Error, Result};
use genprobe::eval::{
    build_known_noun_baseline, build_test_suite, evaluate_suite, save_suite, BootstrapConfig,
    Condition, ConditionTag, ConstructionKind, NounPair,
};
use genprobe::grammar::{generate_synthetic_corpus, Gender, GrammarSpec};
use genprobe::model::{init_model, load_checkpoint, save_checkpoint, ModelState, SgdMomentum};
use genprobe::report::{emit_report, lr_sweep_svg};
use genprobe::stimuli::{test_templates, write_pool_files, StimulusPool};
use genprobe::train::{perplexity, steps_per_epoch, train};
use genprobe::wordlab::{
    default_novel_specs, run_protocol_with_pools, save_trials, trials_from_jsonl, FewShotConfig,
    NovelNounSpec, PoolSet, ProtocolConfig, TaughtLabel,
};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "genprobe", version, about = "Desk-scale gender-agreement laboratory")]
struct Cli {
    /// TOML run configuration; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed (overrides the config file and GP_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: runs/<subcommand>-<config hash>).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate raw text from the synthetic gendered grammar.
    SynthCorpus(SynthCorpusArgs),
    /// Tokenize raw text, build the vocabulary and write 8:1:1 splits.
    CorpusPrep(CorpusPrepArgs),
    /// Train a model on a prepared corpus.
    Train(TrainArgs),
    /// Score gender agreement for known nouns on minimal-pair suites.
    EvalBaseline(EvalBaselineArgs),
    /// Run the few-shot novel-noun protocol.
    WordlabRun(WordlabRunArgs),
    /// Aggregate trial records into tables and plots.
    Analyze(AnalyzeArgs),
    /// Run the protocol across a grid of few-shot learning rates.
    SweepLr(SweepLrArgs),
    /// Write the shipped learning-sentence pools to a directory.
    WriteStimuli,
}

#[derive(Args)]
struct SynthCorpusArgs {
    /// Number of sentences to generate.
    #[arg(long)]
    sentences: Option<usize>,
    /// Grammar preset: balanced or biased.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct CorpusPrepArgs {
    /// Raw text file, one sentence per line. Omitted: generate the
    /// synthetic corpus configured under [grammar].
    #[arg(long)]
    raw: Option<PathBuf>,
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Grammar preset override when generating.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory produced by corpus-prep.
    #[arg(long)]
    corpus_dir: PathBuf,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    max_lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Checkpoint path (default: <out>/model.ckpt).
    #[arg(long)]
    out_checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct EvalBaselineArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus_dir: PathBuf,
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct WordlabRunArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus_dir: PathBuf,
    /// Few-shot learning rate override.
    #[arg(long)]
    lr: Option<f64>,
    /// Worker threads for parallel trials.
    #[arg(long)]
    workers: Option<usize>,
    /// Load learning pools from files instead of the shipped inventories.
    #[arg(long)]
    pools_dir: Option<PathBuf>,
    /// Label recorded on every trial (default: the architecture).
    #[arg(long)]
    model_label: Option<String>,
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trial record files (JSON lines); may be given several times.
    #[arg(long, required = true)]
    trials: Vec<PathBuf>,
    /// Corpus directory; enables token names in delta tables and heatmaps.
    #[arg(long)]
    corpus_dir: Option<PathBuf>,
    /// Pool all input files under one model label, averaging across seeds;
    /// repetition indices are re-numbered per source file to keep trial
    /// keys unique.
    #[arg(long)]
    pool_label: Option<String>,
}

#[derive(Args)]
struct SweepLrArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus_dir: PathBuf,
    /// Learning-rate grid (comma separated) overriding [sweep].
    #[arg(long, value_delimiter = ',')]
    lrs: Vec<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    model_label: Option<String>,
    #[arg(long)]
    preset: Option<String>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let env_seed = std::env::var("GP_SEED")
        .ok()
        .map(|v| {
            v.parse::<u64>()
                .map_err(|e| Error::Config(format!("GP_SEED: {e}")))
        })
        .transpose()?;
    config.seed = Some(cli.seed.or(config.seed).or(env_seed).unwrap_or(42));
    if let Some(dir) = &cli.out_dir {
        config.out_dir = Some(dir.clone());
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let mut config = resolve_config(&cli)?;
    match &cli.command {
        Command::SynthCorpus(args) => synth_corpus(&mut config, args),
        Command::CorpusPrep(args) => corpus_prep(&mut config, args),
        Command::Train(args) => run_train(&mut config, args),
        Command::EvalBaseline(args) => eval_baseline(&mut config, args),
        Command::WordlabRun(args) => wordlab_run(&mut config, args),
        Command::Analyze(args) => analyze(&config, args),
        Command::SweepLr(args) => sweep_lr(&mut config, args),
        Command::WriteStimuli => {
            let dir = config.run_dir("stimuli")?;
            write_pool_files(&dir)?;
            println!("stimulus pools written to {}", dir.display());
            Ok(())
        }
    }
}

fn grammar_spec(config: &RunConfig) -> Result<GrammarSpec> {
    if let Some(path) = &config.grammar.spec_path {
        return GrammarSpec::load(path);
    }
    match config.grammar.preset.as_str() {
        "balanced" => Ok(GrammarSpec::default_spec()),
        "biased" => Ok(GrammarSpec::biased_spec()),
        other => Err(Error::Config(format!(
            "grammar.preset: unknown preset {other:?} (expected balanced or biased)"
        ))),
    }
}

fn synth_corpus(config: &mut RunConfig, args: &SynthCorpusArgs) -> Result<()> {
    if let Some(n) = args.sentences {
        config.grammar.n_sentences = n;
    }
    if let Some(p) = &args.preset {
        config.grammar.preset = p.clone();
    }
    let spec = grammar_spec(config)?;
    let dir = config.run_dir("synth-corpus")?;
    config.write_lock(&dir)?;
    let text = generate_synthetic_corpus(&spec, config.grammar.n_sentences, config.seed())?;
    let path = dir.join("corpus.txt");
    std::fs::write(&path, &text).map_err(|e| Error::io(path.display().to_string(), e))?;
    spec.save(&dir.join("grammar.toml"))?;
    println!(
        "synth-corpus: {} sentences -> {}",
        config.grammar.n_sentences,
        path.display()
    );
    Ok(())
}

fn corpus_prep(config: &mut RunConfig, args: &CorpusPrepArgs) -> Result<()> {
    if let Some(path) = &args.raw {
        config.corpus.raw_path = Some(path.clone());
    }
    if let Some(v) = args.vocab_size {
        config.corpus.vocab_size = v;
    }
    if let Some(p) = &args.preset {
        config.grammar.preset = p.clone();
    }
    let dir = config.run_dir("corpus-prep")?;
    config.write_lock(&dir)?;

    let raw = match &config.corpus.raw_path {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?,
        None => {
            let spec = grammar_spec(config)?;
            spec.save(&dir.join("grammar.toml"))?;
            generate_synthetic_corpus(&spec, config.grammar.n_sentences, config.seed())?
        }
    };
    let sentences = tokenize(&raw);
    let vocab = Vocabulary::build(&sentences, config.corpus.vocab_size)?;
    let corpus = apply_unknowns_and_filter(&sentences, &vocab, SourceTag::Train);
    let (train_c, valid_c, test_c) = split_corpus(&corpus, config.seed())?;

    vocab.save(&dir.join("vocab.txt"))?;
    train_c.save(&dir.join("train.ids"))?;
    valid_c.save(&dir.join("valid.ids"))?;
    test_c.save(&dir.join("test.ids"))?;
    println!(
        "corpus-prep: V={} train/valid/test = {}/{}/{} sentences ({} tokens) -> {}",
        vocab.len(),
        train_c.sentences.len(),
        valid_c.sentences.len(),
        test_c.sentences.len(),
        corpus.token_count(),
        dir.display()
    );
    Ok(())
}

struct PreparedCorpus {
    vocab: Vocabulary,
    train: TokenizedCorpus,
    valid: TokenizedCorpus,
    test: TokenizedCorpus,
}

fn load_corpus_dir(dir: &Path) -> Result<PreparedCorpus> {
    Ok(PreparedCorpus {
        vocab: Vocabulary::load(&dir.join("vocab.txt"))?,
        train: TokenizedCorpus::load(&dir.join("train.ids"), SourceTag::Train)?,
        valid: TokenizedCorpus::load(&dir.join("valid.ids"), SourceTag::Valid)?,
        test: TokenizedCorpus::load(&dir.join("test.ids"), SourceTag::Test)?,
    })
}

fn run_train(config: &mut RunConfig, args: &TrainArgs) -> Result<()> {
    if let Some(a) = &args.arch {
        config.model.arch = a.clone();
    }
    if let Some(v) = args.epochs {
        config.train.epochs = v;
    }
    if let Some(v) = args.warmup {
        config.train.warmup = v;
    }
    if let Some(v) = args.max_lr {
        config.train.max_lr = Some(v);
    }
    if let Some(v) = args.momentum {
        config.train.momentum = v;
    }
    if let Some(v) = args.batch {
        config.train.batch = v;
    }
    if let Some(v) = args.seq_len {
        config.model.seq_len = v;
    }
    if let Some(v) = args.dropout {
        config.model.dropout = v;
    }
    let dir = config.run_dir("train")?;
    config.write_lock(&dir)?;

    let corpus = load_corpus_dir(&args.corpus_dir)?;
    let mut model_config = config.model_config()?;
    model_config.vocab_size = corpus.vocab.len();
    let schedule = config.train_schedule()?;
    let spe = steps_per_epoch(&corpus.train, &schedule)?;

    let model = init_model(&model_config)?;
    let (best, mut log) = train(model, &corpus.train, &corpus.valid, &schedule)?;
    log.test_ppl = Some(perplexity(&best, &corpus.test)?);

    let ckpt_path = args
        .out_checkpoint
        .clone()
        .unwrap_or_else(|| dir.join("model.ckpt"));
    let opt = SgdMomentum::new(&best, schedule.momentum);
    save_checkpoint(&ckpt_path, &best, Some(&opt), (spe * schedule.n_epochs) as u64)?;
    let log_path = dir.join("trainlog.csv");
    std::fs::write(&log_path, log.to_csv_string())
        .map_err(|e| Error::io(log_path.display().to_string(), e))?;

    println!(
        "train {}: best epoch {} valid_ppl {:.3} test_ppl {:.3} -> {}",
        model_config.arch,
        log.best_epoch,
        log.epochs[log.best_epoch - 1].valid_ppl,
        log.test_ppl.unwrap(),
        ckpt_path.display()
    );
    Ok(())
}

fn lexicon_of(spec: &GrammarSpec) -> Vec<(String, Gender)> {
    spec.nouns
        .iter()
        .map(|n| (n.word.clone(), n.gender))
        .collect()
}

fn known_pairs(
    config: &RunConfig,
    corpus: &PreparedCorpus,
    spec: &GrammarSpec,
    n_per_gender: usize,
) -> Result<Vec<NounPair>> {
    let freqs = corpus.train.frequencies(corpus.vocab.len());
    build_known_noun_baseline(
        &corpus.vocab,
        &freqs,
        &lexicon_of(spec),
        n_per_gender,
        config.eval.min_count,
    )
}

fn eval_baseline(config: &mut RunConfig, args: &EvalBaselineArgs) -> Result<()> {
    if let Some(p) = &args.preset {
        config.grammar.preset = p.clone();
    }
    let dir = config.run_dir("eval-baseline")?;
    config.write_lock(&dir)?;
    let corpus = load_corpus_dir(&args.corpus_dir)?;
    let model = load_checkpoint(&args.checkpoint)?.model;
    if model.vocab_size() != corpus.vocab.len() {
        return Err(Error::Input(format!(
            "checkpoint vocabulary size {} does not match corpus vocabulary {}",
            model.vocab_size(),
            corpus.vocab.len()
        )));
    }
    let spec = grammar_spec(config)?;
    let pairs = known_pairs(config, &corpus, &spec, config.eval.n_per_gender)?;
    let mut nouns: Vec<(u32, Gender)> = Vec::new();
    for p in &pairs {
        nouns.push((p.feminine, Gender::Feminine));
        nouns.push((p.masculine, Gender::Masculine));
    }
    let bootstrap = BootstrapConfig {
        resamples: config.eval.bootstrap_resamples,
        seed: config.seed(),
        confidence: 0.95,
    };

    for (tag, kind) in [
        (ConditionTag::A, ConstructionKind::NounAdjective),
        (ConditionTag::B, ConstructionKind::NounParticiple),
        (ConditionTag::C, ConstructionKind::NounRelativePronoun),
    ] {
        let condition = Condition::for_tag(tag);
        let templates = test_templates(kind)?;
        let (suite_nouns, distances) = if kind == ConstructionKind::NounRelativePronoun {
            // the elided article requires vowel-initial nouns
            let vowel: Vec<(u32, Gender)> = spec
                .nouns
                .iter()
                .filter(|n| n.vowel_initial())
                .filter_map(|n| corpus.vocab.id(&n.word).map(|id| (id, n.gender)))
                .collect();
            (vowel, config.eval.distances_relative.clone())
        } else {
            (nouns.clone(), config.eval.distances_adjacent.clone())
        };
        let items = build_test_suite(&condition, &suite_nouns, &distances, &templates, &corpus.vocab)?;
        let report = evaluate_suite(&model, &items, &bootstrap)?;
        save_suite(&items, &corpus.vocab, &dir.join(format!("suite_{tag}.tsv")))?;
        let csv_path = dir.join(format!("baseline_{tag}.csv"));
        std::fs::write(&csv_path, report.to_csv_string())
            .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
        println!(
            "baseline {tag} ({kind:?}): n={} accuracy {:.4} [{:.4}, {:.4}] ties {}",
            report.overall_n,
            report.overall_accuracy,
            report.overall_ci.0,
            report.overall_ci.1,
            report.overall_ties
        );
    }
    println!("eval-baseline -> {}", dir.display());
    Ok(())
}

fn load_pools(dir: Option<&PathBuf>) -> Result<PoolSet> {
    let Some(dir) = dir else {
        return PoolSet::shipped();
    };
    let load = |stem: &str| StimulusPool::load(&dir.join(format!("{stem}.txt")));
    Ok(PoolSet {
        article_noun: (
            load("learn_article_noun_f")?,
            load("learn_article_noun_m")?,
        ),
        noun_adjective: (
            load("learn_noun_adjective_f")?,
            load("learn_noun_adjective_m")?,
        ),
        noun_participle: (
            load("learn_noun_participle_f")?,
            load("learn_noun_participle_m")?,
        ),
        control: load("learn_control")?,
    })
}

fn set_workers(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("workers: {e}")))?;
    }
    Ok(())
}

struct ProtocolSetup {
    corpus: PreparedCorpus,
    model: ModelState,
    specs: Vec<NovelNounSpec>,
    protocol: ProtocolConfig,
    pools: PoolSet,
}

fn protocol_setup(
    config: &RunConfig,
    checkpoint: &Path,
    corpus_dir: &Path,
    pools_dir: Option<&PathBuf>,
    model_label: Option<&String>,
) -> Result<ProtocolSetup> {
    let corpus = load_corpus_dir(corpus_dir)?;
    let model = load_checkpoint(checkpoint)?.model;
    if model.vocab_size() != corpus.vocab.len() {
        return Err(Error::Input(format!(
            "checkpoint vocabulary size {} does not match corpus vocabulary {}",
            model.vocab_size(),
            corpus.vocab.len()
        )));
    }
    let spec = grammar_spec(config)?;
    let pairs = known_pairs(config, &corpus, &spec, config.wordlab.n_novel)?;
    let specs = default_novel_specs(&corpus.vocab, &pairs)?;
    let label = model_label
        .cloned()
        .unwrap_or_else(|| format!("{}-seed{}", model.config.arch, model.config.seed));
    let protocol = ProtocolConfig {
        few_shot: FewShotConfig {
            shots: config.wordlab.shots.clone(),
            repetitions: config.wordlab.repetitions,
            pool_size: config.wordlab.pool_size,
            lr: config.wordlab.lr,
            scope: config.wordlab.scope,
            seed: config.seed(),
        },
        conditions: config.wordlab.conditions.clone(),
        distances_adjacent: config.eval.distances_adjacent.clone(),
        distances_relative: config.eval.distances_relative.clone(),
        include_control: config.wordlab.include_control,
        model_label: label,
        bootstrap: BootstrapConfig {
            resamples: 0,
            seed: config.seed(),
            confidence: 0.95,
        },
    };
    let pools = load_pools(pools_dir)?;
    Ok(ProtocolSetup {
        corpus,
        model,
        specs,
        protocol,
        pools,
    })
}

fn wordlab_run(config: &mut RunConfig, args: &WordlabRunArgs) -> Result<()> {
    if let Some(lr) = args.lr {
        config.wordlab.lr = lr;
    }
    if let Some(p) = &args.preset {
        config.grammar.preset = p.clone();
    }
    set_workers(args.workers)?;
    let dir = config.run_dir("wordlab-run")?;
    config.write_lock(&dir)?;
    let setup = protocol_setup(
        config,
        &args.checkpoint,
        &args.corpus_dir,
        args.pools_dir.as_ref(),
        args.model_label.as_ref(),
    )?;
    let trials = run_protocol_with_pools(
        &setup.model,
        &setup.corpus.vocab,
        &setup.specs,
        &setup.protocol,
        &setup.pools,
    )?;
    save_trials(&trials, &dir.join("trials.jsonl"), &dir.join("trials.csv"))?;

    let taught: Vec<&genprobe::wordlab::FewShotTrial> = trials
        .iter()
        .filter(|t| t.taught != TaughtLabel::Neutral)
        .collect();
    let mean_post = taught.iter().map(|t| t.post_accuracy).sum::<f64>() / taught.len() as f64;
    println!(
        "wordlab-run: {} trials ({} taught, {} control), mean taught post-accuracy {:.4} -> {}",
        trials.len(),
        taught.len(),
        trials.len() - taught.len(),
        mean_post,
        dir.display()
    );
    Ok(())
}

fn analyze(config: &RunConfig, args: &AnalyzeArgs) -> Result<()> {
    let dir = config.run_dir("analyze")?;
    config.write_lock(&dir)?;
    let mut trials = Vec::new();
    for (file_index, path) in args.trials.iter().enumerate() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut batch = trials_from_jsonl(&text)?;
        if let Some(label) = &args.pool_label {
            let max_rep = batch.iter().map(|t| t.repetition).max().unwrap_or(0);
            for t in &mut batch {
                t.model_label = label.clone();
                t.repetition += file_index * max_rep;
            }
        }
        trials.extend(batch);
    }
    let bootstrap = BootstrapConfig {
        resamples: config.eval.bootstrap_resamples,
        seed: config.seed(),
        confidence: 0.95,
    };
    let aggregate = aggregate_trials(&trials, &bootstrap)?;
    let vocab = match &args.corpus_dir {
        Some(dir) => Some(Vocabulary::load(&dir.join("vocab.txt"))?),
        None => None,
    };
    let files = emit_report(&aggregate, &trials, vocab.as_ref(), &dir)?;
    println!("analyze: {} trials -> {} files in {}", trials.len(), files.len(), dir.display());
    for gap in aggregate
        .gender_gaps
        .iter()
        .filter(|g| g.condition.is_none())
    {
        println!(
            "  {} shots={}: masculine {:.4} feminine {:.4} gap {:+.4}",
            gap.model, gap.shots, gap.masculine_accuracy, gap.feminine_accuracy, gap.gap
        );
    }
    Ok(())
}

fn sweep_lr(config: &mut RunConfig, args: &SweepLrArgs) -> Result<()> {
    if !args.lrs.is_empty() {
        config.sweep.lrs = args.lrs.clone();
    }
    if let Some(p) = &args.preset {
        config.grammar.preset = p.clone();
    }
    set_workers(args.workers)?;
    let dir = config.run_dir("sweep-lr")?;
    config.write_lock(&dir)?;
    let mut setup = protocol_setup(
        config,
        &args.checkpoint,
        &args.corpus_dir,
        None,
        args.model_label.as_ref(),
    )?;

    let mut csv = String::from("lr,shots,n_trials,mean_taught_accuracy\n");
    let mut series: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    for &lr in &config.sweep.lrs {
        setup.protocol.few_shot.lr = lr;
        let trials = run_protocol_with_pools(
            &setup.model,
            &setup.corpus.vocab,
            &setup.specs,
            &setup.protocol,
            &setup.pools,
        )?;
        let mut label = format!("{lr}");
        label.retain(|c| c != '.');
        save_trials(
            &trials,
            &dir.join(format!("trials_lr{label}.jsonl")),
            &dir.join(format!("trials_lr{label}.csv")),
        )?;
        let mut points = Vec::new();
        for &shots in &setup.protocol.few_shot.shots {
            let accs: Vec<f64> = trials
                .iter()
                .filter(|t| t.taught != TaughtLabel::Neutral && t.shot_count == shots)
                .map(|t| t.post_accuracy)
                .collect();
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            use std::fmt::Write as _;
            let _ = writeln!(csv, "{lr},{shots},{},{mean:.6}", accs.len());
            points.push((shots, mean));
        }
        println!(
            "sweep lr={lr}: one-shot {:.4}, max-shot {:.4}",
            points.first().map(|p| p.1).unwrap_or(f64::NAN),
            points.last().map(|p| p.1).unwrap_or(f64::NAN)
        );
        series.push((lr, points));
    }
    let csv_path = dir.join("sweep.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    let svg = lr_sweep_svg(&series, "taught-gender accuracy by learning rate");
    let svg_path = dir.join("lr_sweep.svg");
    std::fs::write(&svg_path, svg).map_err(|e| Error::io(svg_path.display().to_string(), e))?;
    println!("sweep-lr -> {}", dir.display());
    Ok(())
}
