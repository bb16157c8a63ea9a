use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use joci::abstraction::{build_store, TemplateStore};
use joci::annotation::{
    assign_gold, avg_pairwise_kappa, filter_na, kappa_growth_curve, label_distribution, per_pair_kappa,
    qualify_workers, threshold_grid, AnnotationSet, NaPolicy, OrdinalLabel,
};
use joci::config::PipelineConfig;
use joci::corpus_io::{load_conllu, load_embeddings, read_jsonl, read_pairs, to_jsonl, write_atomic, DepSentence, PairRecord};
use joci::evaluation::{ablation, ablation_text, ablation_tsv, column_names, run_experiment, ExperimentSpec};
use joci::extraction::{extract_propositions_with, ExtractionConfig, PersonNames, Proposition};
use joci::features::{family_columns, parse_families, FeatureTable, Featurizer, Family, DEFAULT_LABEL_COLUMN, FEATURE_NAMES};
use joci::generation::{generate, GenerationConfig};
use joci::ordinal::{fit_baseline, train_ordinal, BaselineKind, LossVariant, ModelFile, SavedModel};
use joci::properties::{derive_all, DeriveParams, PropertyIndex, Strategy};
use joci::seq2seq::{
    generate_sentence_prompt, generate_word_prompt, score_pairs, tokenize_pairs, train_with, Seq2SeqModel, Variant,
    VariantModels,
};
use joci::taxonomy::Taxonomy;
use joci::text::word_tokens;

/// Exit status for bad arguments.
const EXIT_USAGE: u8 = 1;
/// Exit status for unreadable or invalid inputs.
const EXIT_INPUT: u8 = 2;
/// Exit status for failures while a stage runs.
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "joci", version, about = "Common-sense inference pipeline: generation, annotation aggregation and ordinal regression")]
struct Cli {
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic stage (falls back to the config, then JOCI_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default 1).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract predicate-argument propositions from a CoNLL-U corpus.
    Extract {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Extra comma-separated person names mapped to "person".
        #[arg(long, value_delimiter = ',')]
        person_names: Vec<String>,
    },
    /// Abstract propositions into a sense-anchored template store.
    Abstract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min_count: Option<u64>,
        #[arg(long)]
        cut_depth: Option<usize>,
    },
    /// Derive sense properties from a template store.
    Derive {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of dt,freq,isa.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<String>,
        #[arg(long)]
        cut_depth: Option<usize>,
        #[arg(long)]
        freq_k: Option<usize>,
    },
    /// Generate hypotheses for parsed contexts from derived properties.
    Generate {
        #[arg(long)]
        contexts: PathBuf,
        #[arg(long)]
        properties: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        per_arg_limit: Option<usize>,
        #[arg(long)]
        cut_depth: Option<usize>,
    },
    /// Train, score with, or decode from a sequence-to-sequence model.
    S2s {
        #[command(subcommand)]
        action: S2sCommand,
    },
    /// Filter NA-marked pairs, optionally qualify workers, and assign median gold labels.
    Aggregate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = NaArg::AnyNa)]
        na_policy: NaArg,
        /// Keep only annotations of workers whose average kappa reaches this value.
        #[arg(long)]
        qualify: Option<f64>,
    },
    /// Compute the 17 pair features.
    Featurize {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        emb: Option<PathBuf>,
        /// Directory holding the seq2seq variant checkpoints.
        #[arg(long)]
        s2s: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the ordinal regression (or a baseline) on a feature table.
    TrainOrdinal {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fit this baseline instead of the regression.
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Predict labels for a feature table with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on one split, report MSE and Spearman on both.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        permutations: Option<usize>,
    },
    /// Feature-family ablation of the regression.
    Ablate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        permutations: Option<usize>,
    },
    /// Label distribution, agreement and kappa growth curve of annotated pairs.
    Stats {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of thresholds in the growth curve over [-1, 1].
        #[arg(long, default_value_t = 21)]
        steps: usize,
    },
}

#[derive(Subcommand, Debug)]
enum S2sCommand {
    /// Train on context/hypothesis pairs.
    Train {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// With empty-premise the contexts are dropped.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Log-probability of each pair's hypothesis given its context.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy-decode hypotheses for parsed contexts.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        contexts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Prompt::Word)]
        prompt: Prompt,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Comma-separated feature families (bow,sim,s2s,s2s-bin,len).
    #[arg(long)]
    families: Option<String>,
    /// Gold label column of the feature tables.
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    labels: String,
    #[arg(long)]
    lambda: Option<f64>,
    /// all-threshold-logistic or squared-error-link.
    #[arg(long)]
    loss: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NaArg {
    AnyNa,
    MajorityNa,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Prompt {
    Word,
    Sentence,
}

/// A failure with its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<joci::Error> for Failure {
    fn from(e: joci::Error) -> Self {
        use joci::Error as E;
        let code = match &e {
            E::Numeric(_) => EXIT_RUNTIME,
            E::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound => EXIT_RUNTIME,
            _ => EXIT_INPUT,
        };
        Failure { code, error: e.into() }
    }
}

fn input_error(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_INPUT, error: anyhow!(msg.into()) }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Every input must exist before a stage starts.
fn require(paths: &[&Path]) -> CliResult<()> {
    for p in paths {
        if !p.exists() {
            return Err(input_error(format!("input not found: {}", p.display())));
        }
    }
    Ok(())
}

fn pick(flag: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    flag.clone()
        .or_else(|| configured.clone())
        .ok_or_else(|| input_error(format!("no {what} given (flag or config paths.{what})")))
}

fn load_taxonomy(path: &Path, cut_depth: usize) -> CliResult<Taxonomy> {
    Ok(Taxonomy::load(path)?.with_cut_depth(cut_depth))
}

fn extraction_config(cfg: &PipelineConfig, extra: &[String]) -> ExtractionConfig {
    let mut names = PersonNames::default();
    names
        .names
        .extend(cfg.person_names.iter().chain(extra).map(|n| n.trim().to_lowercase()).filter(|n| !n.is_empty()));
    ExtractionConfig { person_names: names }
}

fn context_text(s: &DepSentence) -> String {
    s.text.clone().unwrap_or_else(|| s.surface())
}

fn families_of(args: &ModelArgs) -> CliResult<Vec<Family>> {
    match &args.families {
        Some(s) => Ok(parse_families(s)?),
        None => Ok(Family::ALL.to_vec()),
    }
}

fn experiment_spec(cfg: &PipelineConfig, args: &ModelArgs, seed: u64, permutations: Option<usize>) -> CliResult<ExperimentSpec> {
    let mut ordinal = cfg.ordinal.clone();
    if let Some(l) = args.lambda {
        ordinal.lambda = l;
    }
    if let Some(l) = &args.loss {
        ordinal.loss = l.parse::<LossVariant>()?;
    }
    ordinal.seed = seed;
    Ok(ExperimentSpec {
        families: families_of(args)?,
        ordinal,
        svm: cfg.svm.clone(),
        seed,
        permutations: permutations.unwrap_or(cfg.permutations),
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(p) => {
            require(&[p])?;
            PipelineConfig::load(p)?
        }
        None => PipelineConfig::default(),
    };
    cfg.validate_paths()?;
    let seed = cfg.resolve_seed(cli.seed)?;
    let threads = cli.threads.or(cfg.threads).unwrap_or(1).max(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure { code: EXIT_RUNTIME, error: e.into() })?;
    log::info!("seed {seed}, {threads} thread(s)");

    match cli.command {
        Command::Extract { input, out, person_names } => {
            let input = pick(&input, &cfg.paths.corpus, "corpus")?;
            require(&[&input])?;
            let ecfg = extraction_config(&cfg, &person_names);
            let sentences = load_conllu(&input)?;
            let props: Vec<Proposition> = sentences
                .par_iter()
                .flat_map_iter(|s| extract_propositions_with(s, &ecfg))
                .collect();
            log::info!("{} propositions from {} sentences", props.len(), sentences.len());
            Ok(write_atomic(&out, to_jsonl(&props)?.as_bytes())?)
        }
        Command::Abstract { input, taxonomy, out, min_count, cut_depth } => {
            let tax_path = pick(&taxonomy, &cfg.paths.taxonomy, "taxonomy")?;
            require(&[&input, &tax_path])?;
            let tax = load_taxonomy(&tax_path, cut_depth.unwrap_or(cfg.cut_depth))?;
            let props: Vec<Proposition> = read_jsonl(&input)?;
            let store = build_store(&props, &tax).prune(min_count.unwrap_or(cfg.min_count));
            log::info!("{} templates over {} senses", store.total_templates(), store.senses().count());
            Ok(write_atomic(&out, store.to_tsv().as_bytes())?)
        }
        Command::Derive { store, taxonomy, out, strategies, cut_depth, freq_k } => {
            let tax_path = pick(&taxonomy, &cfg.paths.taxonomy, "taxonomy")?;
            require(&[&store, &tax_path])?;
            let strategies: Vec<Strategy> = if strategies.is_empty() {
                cfg.strategies.clone()
            } else {
                strategies.iter().map(|s| s.trim().parse()).collect::<joci::Result<_>>()?
            };
            let tax = load_taxonomy(&tax_path, cut_depth.unwrap_or(cfg.cut_depth))?;
            let store = TemplateStore::load(&store)?;
            let params = DeriveParams { strategies, dt: cfg.dt, freq_k: freq_k.unwrap_or(cfg.freq_k) };
            let index = derive_all(&tax, &store, &params);
            log::info!("properties for {} senses", index.len());
            Ok(write_atomic(&out, index.to_tsv().as_bytes())?)
        }
        Command::Generate { contexts, properties, taxonomy, out, per_arg_limit, cut_depth } => {
            let tax_path = pick(&taxonomy, &cfg.paths.taxonomy, "taxonomy")?;
            require(&[&contexts, &properties, &tax_path])?;
            let tax = load_taxonomy(&tax_path, cut_depth.unwrap_or(cfg.cut_depth))?;
            let index = PropertyIndex::load(&properties)?;
            let gcfg = GenerationConfig {
                per_arg_limit: per_arg_limit.unwrap_or(cfg.per_arg_limit),
                extraction: extraction_config(&cfg, &[]),
            };
            if gcfg.per_arg_limit == 0 {
                return Err(input_error("--per-arg-limit must be at least 1"));
            }
            let sentences = load_conllu(&contexts)?;
            let pairs: Vec<PairRecord> = sentences
                .par_iter()
                .flat_map_iter(|s| {
                    let ctx = context_text(s);
                    generate(s, &tax, &index, &gcfg).into_iter().map(move |c| c.to_pair(&ctx))
                })
                .collect();
            log::info!("{} hypotheses for {} contexts", pairs.len(), sentences.len());
            Ok(write_atomic(&out, to_jsonl(&pairs)?.as_bytes())?)
        }
        Command::S2s { action } => run_s2s(action, &cfg, seed),
        Command::Aggregate { input, out, na_policy, qualify } => {
            require(&[&input])?;
            let policy = match na_policy {
                NaArg::AnyNa => NaPolicy::AnyNa,
                NaArg::MajorityNa => NaPolicy::MajorityNa,
            };
            let outcome = filter_na(read_pairs(&input)?, policy);
            let dropped = outcome.dropped;
            let rate = outcome.drop_rate();
            let mut records = outcome.kept;
            if let Some(threshold) = qualify {
                let sets = annotation_sets(&records)?;
                let keep = qualify_workers(&sets, threshold);
                println!("qualified workers: {}/{}", keep.len(), sets.iter().flat_map(|s| s.workers()).collect::<HashSet<_>>().len());
                for r in &mut records {
                    r.annotations.retain(|a| a.worker.as_ref().is_some_and(|w| keep.contains(w)));
                }
            }
            assign_gold(&mut records);
            println!("kept {} pairs, dropped {dropped} ({:.1}% NA)", records.len(), 100.0 * rate);
            Ok(write_atomic(&out, to_jsonl(&records)?.as_bytes())?)
        }
        Command::Featurize { pairs, emb, s2s, out } => {
            let emb = emb.or_else(|| cfg.paths.embeddings.clone());
            let mut inputs: Vec<&Path> = vec![&pairs];
            inputs.extend(emb.as_deref());
            inputs.extend(s2s.as_deref());
            require(&inputs)?;
            let records = read_pairs(&pairs)?;
            let vocab: HashSet<String> = records
                .iter()
                .flat_map(|r| word_tokens(&r.context).into_iter().chain(word_tokens(&r.hypothesis)))
                .collect();
            let table = match &emb {
                Some(p) => Some(load_embeddings(p, Some(&vocab))?),
                None => {
                    log::warn!("no embeddings; the sim family is masked");
                    None
                }
            };
            let models = s2s.as_ref().map(VariantModels::load_dir).transpose()?;
            let featurizer = Featurizer { embeddings: table.as_ref(), s2s: models.as_ref() };
            let features = FeatureTable::from_pairs(&records, &featurizer)?;
            Ok(write_atomic(&out, features.to_tsv().as_bytes())?)
        }
        Command::TrainOrdinal { model, features, out, baseline } => {
            require(&[&features])?;
            let spec = experiment_spec(&cfg, &model, seed, None)?;
            let table = FeatureTable::load(&features, &model.labels)?;
            let (x, y) = table.xy(&family_columns(&spec.families))?;
            let fitted = match baseline {
                None => SavedModel::Ordinal(train_ordinal(&x, &y, &spec.ordinal)?),
                Some(kind) => {
                    let kind: BaselineKind = kind.parse()?;
                    SavedModel::Baseline(fit_baseline(kind, &y, Some(&x), &spec.svm, seed)?)
                }
            };
            Ok(ModelFile::new(column_names(&spec.families), fitted).save(&out)?)
        }
        Command::Predict { model, features, out } => {
            require(&[&model, &features])?;
            let m = ModelFile::load(&model)?;
            let cols: Vec<usize> = m
                .columns
                .iter()
                .map(|c| {
                    FEATURE_NAMES
                        .iter()
                        .position(|n| n == c)
                        .ok_or_else(|| input_error(format!("{}: unknown feature column {c}", model.display())))
                })
                .collect::<CliResult<_>>()?;
            let table = FeatureTable::load(&features, DEFAULT_LABEL_COLUMN)?;
            let preds = m.predict_all(&table.matrix(&cols));
            let mut text = String::from("row\tprediction\n");
            for (i, p) in preds.iter().enumerate() {
                text.push_str(&format!("{}\t{}\n", i + 1, p.value()));
            }
            Ok(write_atomic(&out, text.as_bytes())?)
        }
        Command::Evaluate { model, train, test, report, permutations } => {
            require(&[&train, &test])?;
            let spec = experiment_spec(&cfg, &model, seed, permutations)?;
            let tr = FeatureTable::load(&train, &model.labels)?;
            let te = FeatureTable::load(&test, &model.labels)?;
            let r = run_experiment(&tr, &te, &spec)?;
            print!("{}", r.to_text());
            Ok(write_atomic(&report, r.to_tsv().as_bytes())?)
        }
        Command::Ablate { model, train, test, report, permutations } => {
            require(&[&train, &test])?;
            let spec = experiment_spec(&cfg, &model, seed, permutations)?;
            let tr = FeatureTable::load(&train, &model.labels)?;
            let te = FeatureTable::load(&test, &model.labels)?;
            let rows = ablation(&tr, &te, &spec)?;
            print!("{}", ablation_text(&rows));
            Ok(write_atomic(&report, ablation_tsv(&rows).as_bytes())?)
        }
        Command::Stats { pairs, out, steps } => {
            require(&[&pairs])?;
            let mut records = read_pairs(&pairs)?;
            if records.iter().any(|r| r.gold.is_none()) {
                assign_gold(&mut records);
            }
            let dist = label_distribution(&records, true);
            let sets = annotation_sets(&records)?;
            let kappas: Vec<f64> = per_pair_kappa(&sets).into_iter().flatten().collect();
            let curve = kappa_growth_curve(&kappas, &threshold_grid(-1.0, 1.0, steps));
            let mut text = String::from("section\tkey\tvalue\n");
            for (i, v) in dist.values.iter().enumerate() {
                let label = OrdinalLabel::from_value(i as i64 + 1).expect("1..5");
                text.push_str(&format!("label\t{}\t{v:.6}\n", label.value()));
            }
            text.push_str(&format!("label\tunlabeled\t{}\n", dist.skipped));
            match avg_pairwise_kappa(&sets) {
                Ok(k) => text.push_str(&format!("agreement\tavg_kappa\t{k:.6}\n")),
                Err(e) => log::warn!("{e}"),
            }
            for (t, n) in curve {
                text.push_str(&format!("growth\t{t:.3}\t{n}\n"));
            }
            print!("{text}");
            match out {
                Some(p) => Ok(write_atomic(&p, text.as_bytes())?),
                None => Ok(()),
            }
        }
    }
}

fn annotation_sets(records: &[PairRecord]) -> CliResult<Vec<AnnotationSet>> {
    Ok(records.iter().map(AnnotationSet::from_record).collect::<joci::Result<_>>()?)
}

fn run_s2s(action: S2sCommand, cfg: &PipelineConfig, seed: u64) -> CliResult<()> {
    match action {
        S2sCommand::Train { pairs, out, variant, epochs, hidden, lr } => {
            require(&[&pairs])?;
            let variant: Option<Variant> = variant.map(|v| v.parse()).transpose()?;
            let mut scfg = cfg.seq2seq.clone();
            scfg.seed = seed;
            if let Some(e) = epochs {
                scfg.epochs = e;
            }
            if let Some(h) = hidden {
                scfg.hidden_size = h;
            }
            if let Some(l) = lr {
                scfg.learning_rate = l;
            }
            let records = read_pairs(&pairs)?;
            let text: Vec<(String, String)> = records
                .iter()
                .map(|r| {
                    let c = if variant == Some(Variant::EmptyPremise) { String::new() } else { r.context.clone() };
                    (c, r.hypothesis.clone())
                })
                .collect();
            let model = train_with(&tokenize_pairs(&text), &scfg, |r, _| {
                log::info!("epoch {}: {:.4} nats/token", r.epoch + 1, r.loss);
                true
            })?;
            Ok(model.save(&out)?)
        }
        S2sCommand::Score { model, pairs, out } => {
            require(&[&model, &pairs])?;
            let m = Seq2SeqModel::load(&model)?;
            let records = read_pairs(&pairs)?;
            let text: Vec<(String, String)> = records.iter().map(|r| (r.context.clone(), r.hypothesis.clone())).collect();
            let scores = score_pairs(&m, &text)?;
            let mut tsv = String::from("context\thypothesis\tlog_prob\n");
            for ((c, h), s) in text.iter().zip(&scores) {
                tsv.push_str(&format!("{c}\t{h}\t{s:.6}\n"));
            }
            Ok(write_atomic(&out, tsv.as_bytes())?)
        }
        S2sCommand::Decode { model, contexts, out, prompt } => {
            require(&[&model, &contexts])?;
            let m = Seq2SeqModel::load(&model)?;
            let ecfg = extraction_config(cfg, &[]);
            let sentences = load_conllu(&contexts)?;
            let pairs: Vec<PairRecord> = sentences
                .par_iter()
                .flat_map_iter(|s| {
                    let ctx = context_text(s);
                    let cands = match prompt {
                        Prompt::Word => generate_word_prompt(&m, s, &ecfg),
                        Prompt::Sentence => vec![generate_sentence_prompt(&m, s)],
                    };
                    cands.into_iter().map(move |c| c.to_pair(&ctx))
                })
                .collect();
            Ok(write_atomic(&out, to_jsonl(&pairs)?.as_bytes())?)
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
