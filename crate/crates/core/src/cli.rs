//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::checkpoint::{checkpoint_load, checkpoint_save};
use crate::config::{RunConfig, Snapshot};
use crate::corpus::{self, Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::ari_against_truth;
use crate::export::{export_dot, export_json};
use crate::sampler::{init_chain, ModelState};
use crate::synth::{generate_synthetic, GroundTruth};

#[derive(Parser, Debug)]
#[command(name = "hlwc", version, about = "Hierarchical latent word clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Fit a tree to a corpus; writes checkpoints, exports and the LL trace.
    Fit {
        #[command(flatten)]
        input: CorpusInput,
        #[arg(long, default_value = "hlwc-out")]
        out: PathBuf,
        /// TOML file with run settings; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
        #[command(flatten)]
        export: ExportFlags,
    },
    /// Continue a chain from a checkpoint.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        iters: u64,
        #[arg(long, default_value = "hlwc-out")]
        out: PathBuf,
        /// Vocabulary used when exporting; defaults to numbered terms.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        checkpoint_every: Option<u64>,
        #[arg(long, value_enum)]
        snapshot: Option<Snapshot>,
        #[command(flatten)]
        export: ExportFlags,
    },
    /// Write tree.json and tree.dot for a checkpoint.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        export: ExportFlags,
    },
    /// Generate a corpus and its planted tree from the generative model.
    Synth {
        #[arg(long)]
        docs: usize,
        #[arg(long)]
        words: usize,
        #[arg(long)]
        tokens_per_word: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        eta: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synth")]
        out: PathBuf,
    },
    /// Adjusted Rand index of a checkpoint against planted paths.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Tree level compared; defaults to the leaves.
        #[arg(long)]
        level: Option<usize>,
    },
    /// Print a corpus summary.
    Stats {
        #[command(flatten)]
        input: CorpusInput,
    },
}

#[derive(Args, Debug)]
struct CorpusInput {
    /// UCI docword file (requires --vocab).
    #[arg(long, requires = "vocab", conflicts_with = "text_dir")]
    docword: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Directory with one plain-text document per file.
    #[arg(long)]
    text_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct RunFlags {
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated, one per level (or one value for all levels).
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    /// Comma-separated, one per level (or one value for all levels).
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    skip_top: Option<usize>,
    #[arg(long)]
    keep_next: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long, value_enum)]
    snapshot: Option<Snapshot>,
    #[arg(long)]
    chains: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct ExportFlags {
    /// Minimum share of a word's tokens at a node for it to be listed there.
    #[arg(long)]
    min_share: Option<f64>,
    /// Words per DOT node label.
    #[arg(long)]
    top_words: Option<usize>,
    /// Leave the shared root out of the DOT graph.
    #[arg(long)]
    hide_root: bool,
}

impl RunFlags {
    fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone();
                }
            )*};
        }
        set!(gamma, eta, alpha, levels, iters, seed, skip_top, checkpoint_every, snapshot, chains);
        if self.keep_next.is_some() {
            c.keep_next = self.keep_next;
        }
    }
}

impl ExportFlags {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.min_share {
            c.export.min_share = v;
        }
        if let Some(v) = self.top_words {
            c.export.dot_top_words = v;
        }
        if self.hide_root {
            c.export.dot_hide_root = true;
        }
    }
}

fn load_input(input: &CorpusInput) -> Result<(Corpus, Vocabulary)> {
    match (&input.docword, &input.vocab, &input.text_dir) {
        (Some(d), Some(v), None) => corpus::load_uci_bow(d, v),
        (None, _, Some(dir)) => corpus::load_text_dir(dir),
        _ => Err(Error::Config(
            "give either --docword with --vocab, or --text-dir".into(),
        )),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Config describing an existing chain, for exports of checkpoints.
fn config_for(state: &ModelState) -> RunConfig {
    let h = state.hyper();
    RunConfig {
        gamma: h.gamma,
        eta: h.eta.clone(),
        alpha: h.alpha.clone(),
        levels: h.depth(),
        seed: state.seed(),
        ..RunConfig::default()
    }
}

fn write_exports(state: &ModelState, vocab: &Vocabulary, config: &RunConfig, out: &Path) -> Result<()> {
    write_file(&out.join("tree.json"), &export_json(state, vocab, config)?)?;
    write_file(&out.join("tree.dot"), &export_dot(state, vocab, config)?)
}

/// Runs `config.iters` sweeps on `state`, writing the trace, checkpoints and
/// exports under `out`.
fn drive_chain(mut state: ModelState, vocab: &Vocabulary, config: &RunConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    let trace_path = out.join("ll_trace.csv");
    let file = fs::File::create(&trace_path).map_err(|e| Error::io(&trace_path, e))?;
    let mut trace = BufWriter::new(file);
    writeln!(trace, "iteration,joint_ll,words_moved").map_err(|e| Error::io(&trace_path, e))?;

    let chain = state.chain();
    let total = config.iters;
    let report = state.run(total, |s, stats| {
        writeln!(
            trace,
            "{},{},{}",
            stats.iteration, stats.joint_ll, stats.words_moved
        )
        .and_then(|_| trace.flush())
        .map_err(|e| Error::io(&trace_path, e))?;
        if config.checkpoint_every > 0 && stats.iteration % config.checkpoint_every == 0 {
            checkpoint_save(s, &out.join(format!("checkpoint-{}.json", stats.iteration)))?;
        }
        let step = (total / 20).max(1);
        if stats.iteration % step == 0 {
            info!(
                "chain {chain}: sweep {} joint LL {:.3} words moved {}",
                stats.iteration, stats.joint_ll, stats.words_moved
            );
        }
        Ok(())
    })?;
    let last = out.join(format!("checkpoint-{}.json", state.iteration()));
    if !last.exists() {
        checkpoint_save(&state, &last)?;
    }
    info!(
        "chain {chain}: done in {:.1?}, best joint LL {:.3} at sweep {}",
        report.wall_time, report.best_ll, report.best_iteration
    );
    let chosen = match config.snapshot {
        Snapshot::Final => &state,
        Snapshot::Maxll => &*report.best_state,
    };
    write_exports(chosen, vocab, config, out)
}

fn fit(
    input: &CorpusInput,
    out: &Path,
    config_file: Option<&Path>,
    run: &RunFlags,
    export: &ExportFlags,
) -> Result<()> {
    let mut config = match config_file {
        Some(p) => RunConfig::from_toml_file(p)?,
        None => RunConfig::default(),
    };
    run.apply(&mut config);
    export.apply(&mut config);
    config.validate()?;

    let (mut corpus, mut vocab) = load_input(input)?;
    if config.skip_top > 0 || config.keep_next.is_some() {
        let keep = config.keep_next.unwrap_or(corpus.n_words());
        let filtered = corpus::filter_vocabulary(&corpus, &vocab, config.skip_top, keep.max(1))?;
        if filtered.shortfall > 0 && config.keep_next.is_some() {
            log::warn!("vocabulary filter: {} requested words unavailable", filtered.shortfall);
        }
        corpus = filtered.corpus;
        vocab = filtered.vocab;
    }
    info!(
        "corpus: {} documents, {} words, {} tokens",
        corpus.n_docs(),
        corpus.n_words(),
        corpus.total_tokens()
    );
    let hyper = config.hyperparams(corpus.n_docs())?;
    let view = corpus::word_major_view(&corpus);

    create_dir(out)?;
    corpus::write_vocab(&vocab, &out.join("vocab.txt"))?;
    let resolved = toml::to_string(&config).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&out.join("run.toml"), &resolved)?;

    let chain_dir = |k: usize| {
        if config.chains == 1 {
            out.to_path_buf()
        } else {
            out.join(format!("chain-{k}"))
        }
    };
    // Chain k uses stream k of the seeded generator.
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains)
            .map(|k| {
                let (view, hyper, vocab, config) = (&view, &hyper, &vocab, &config);
                let dir = chain_dir(k);
                scope.spawn(move || {
                    let state = init_chain(view, hyper, config.seed, k as u64)?;
                    drive_chain(state, vocab, config, &dir)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect::<Result<Vec<()>>>()
    })?;
    Ok(())
}

fn load_vocab_or_numbered(path: Option<&Path>, n_words: usize) -> Result<Vocabulary> {
    match path {
        Some(p) => corpus::load_vocab(p),
        None => Ok(Vocabulary::numbered(n_words)),
    }
}

fn run_command(command: Command) -> Result<()> {
    match command {
        Command::Fit {
            input,
            out,
            config,
            run,
            export,
        } => fit(&input, &out, config.as_deref(), &run, &export),
        Command::Resume {
            checkpoint,
            iters,
            out,
            vocab,
            checkpoint_every,
            snapshot,
            export,
        } => {
            let state = checkpoint_load(&checkpoint)?;
            let vocab = load_vocab_or_numbered(vocab.as_deref(), state.n_words())?;
            let mut config = config_for(&state);
            config.iters = iters;
            if let Some(every) = checkpoint_every {
                config.checkpoint_every = every;
            }
            if let Some(s) = snapshot {
                config.snapshot = s;
            }
            export.apply(&mut config);
            config.validate()?;
            drive_chain(state, &vocab, &config, &out)
        }
        Command::Export {
            checkpoint,
            vocab,
            out,
            export,
        } => {
            let state = checkpoint_load(&checkpoint)?;
            let vocab = load_vocab_or_numbered(vocab.as_deref(), state.n_words())?;
            let mut config = config_for(&state);
            export.apply(&mut config);
            config.validate()?;
            create_dir(&out)?;
            write_exports(&state, &vocab, &config, &out)
        }
        Command::Synth {
            docs,
            words,
            tokens_per_word,
            gamma,
            eta,
            alpha,
            levels,
            seed,
            out,
        } => {
            let config = RunConfig {
                gamma,
                eta,
                alpha,
                levels,
                ..RunConfig::default()
            };
            let hyper = config.hyperparams(docs)?;
            let synth = generate_synthetic(docs, words, tokens_per_word, &hyper, seed)?;
            create_dir(&out)?;
            corpus::write_uci_docword(&synth.corpus, &out.join("docword.txt"))?;
            corpus::write_vocab(&Vocabulary::numbered(words), &out.join("vocab.txt"))?;
            synth.truth.save(&out.join("truth.json"))?;
            println!(
                "wrote {} documents, {} words, {} tokens to {}",
                docs,
                words,
                synth.corpus.total_tokens(),
                out.display()
            );
            Ok(())
        }
        Command::Eval {
            checkpoint,
            truth,
            level,
        } => {
            let state = checkpoint_load(&checkpoint)?;
            let truth = GroundTruth::load(&truth)?;
            let level = level.unwrap_or(state.depth() - 1);
            let ari = ari_against_truth(&state, &truth, level)?;
            println!("ari level {level}: {ari:.6}");
            Ok(())
        }
        Command::Stats { input } => {
            let (corpus, _) = load_input(&input)?;
            let freq = corpus.word_frequencies();
            let active = freq.iter().filter(|&&f| f > 0).count();
            println!("documents      {}", corpus.n_docs());
            println!("words          {}", corpus.n_words());
            println!("active words   {active}");
            println!("nonzero cells  {}", corpus.nnz());
            println!("tokens         {}", corpus.total_tokens());
            println!("max word count {}", freq.iter().max().copied().unwrap_or(0));
            println!("empty docs     {}", corpus.empty_docs());
            Ok(())
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(parsed.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
