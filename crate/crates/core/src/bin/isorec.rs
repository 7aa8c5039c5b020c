use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isorec::augment::AugmentProfile;
use isorec::embed::{EmbeddingSource, EmbeddingTable};
use isorec::model::load_weights;
use isorec::pipeline::{self, EmbeddingsSpec};
use isorec::serve::{load_index, recommend, run_repl, serve_http, QueryEncoder, DEFAULT_TOP_N};
use isorec::train::TrainingConfig;

#[derive(Parser)]
#[command(name = "isorec", version, about = "Contrastive course recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct EmbeddingArgs {
    /// `stub` or the path of an EMB1 file.
    #[arg(long, default_value = "stub")]
    embeddings: String,
    #[arg(long, default_value_t = 768)]
    stub_width: usize,
    #[arg(long, default_value_t = 0)]
    stub_seed: u64,
}

impl EmbeddingArgs {
    fn open(&self) -> isorec::Result<EmbeddingSource> {
        EmbeddingsSpec::parse(&self.embeddings, self.stub_width, self.stub_seed).open()
    }
}

#[derive(Args, Clone)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Encode queries with the stub encoder.
    #[arg(long, conflicts_with = "query_embeddings")]
    stub_encoder: bool,
    /// EMB1 file holding pre-encoded queries, keyed by cleaned query text.
    #[arg(long)]
    query_embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    stub_seed: u64,
}

impl QueryArgs {
    fn load(&self) -> isorec::Result<(isorec::serve::CourseIndex, QueryEncoder)> {
        let index = load_index(&self.index)?;
        let (weights, meta) = load_weights(&self.model)?;
        let source = match &self.query_embeddings {
            Some(path) => EmbeddingSource::Table(EmbeddingTable::load(path)?),
            None => EmbeddingSource::stub(weights.dims.in_dim, self.stub_seed),
        };
        let encoder = QueryEncoder::new(source, weights)?;
        Ok((index.with_meta(meta), encoder))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Clean the catalog and statements and split the statements.
    Prepare {
        #[arg(long)]
        courses: PathBuf,
        #[arg(long)]
        statements: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one epoch of contrastive view pairs as JSON lines.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        epoch_seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        profile: ProfileArgs,
    },
    /// List every text the encoder must embed for training and evaluation.
    Manifest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        view_bank_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the projection head.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        embeddings: EmbeddingArgs,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// JSON training config; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out_dim: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Project every course through a trained head and save the index.
    Index {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        embeddings: EmbeddingArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieval metrics and embedding geometry on the held-out statements.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        embeddings: EmbeddingArgs,
        #[arg(long, default_value_t = DEFAULT_TOP_N)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// IsoScore and cosine statistics of pooled vectors in an EMB1 file.
    Isoscore {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-dimensional principal-component coordinates as CSV.
    PlotData {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        embeddings: EmbeddingArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recommend courses for one statement.
    Recommend {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = DEFAULT_TOP_N)]
        n: usize,
        /// Print JSON instead of the text block.
        #[arg(long)]
        json: bool,
    },
    /// Read statements from stdin, one per line.
    Repl {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value_t = DEFAULT_TOP_N)]
        n: usize,
    },
    /// Serve recommendations over HTTP.
    Serve {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Args, Clone)]
struct ProfileArgs {
    #[arg(long)]
    p_delete: Option<f64>,
    #[arg(long)]
    p_synonym: Option<f64>,
    #[arg(long)]
    p_insert: Option<f64>,
    #[arg(long)]
    p_swap: Option<f64>,
}

impl ProfileArgs {
    fn heavy(&self) -> AugmentProfile {
        let mut p = AugmentProfile::heavy();
        p.p_delete = self.p_delete.unwrap_or(p.p_delete);
        p.p_synonym = self.p_synonym.unwrap_or(p.p_synonym);
        p.p_insert = self.p_insert.unwrap_or(p.p_insert);
        p.p_swap = self.p_swap.unwrap_or(p.p_swap);
        p
    }
}

fn run(cli: Cli) -> isorec::Result<()> {
    match cli.command {
        Command::Prepare { courses, statements, seed, train_fraction, out } => {
            let m = pipeline::prepare(&courses, &statements, seed, train_fraction, &out)?;
            eprintln!(
                "{} courses, {} train and {} test statements ({} dropped)",
                m.courses,
                m.train_ids.len(),
                m.test_ids.len(),
                m.dropped_unknown
            );
        }
        Command::Augment { input, lexicon, epoch_seed, out, profile } => {
            let lexicon = pipeline::load_lexicon(lexicon.as_deref())?;
            let heavy = profile.heavy();
            heavy.validate()?;
            let count = pipeline::augment(&input, &lexicon, &heavy, epoch_seed, &out)?;
            eprintln!("wrote {count} view pairs");
        }
        Command::Manifest { data, lexicon, seed, view_bank_size, out } => {
            let lexicon = pipeline::load_lexicon(lexicon.as_deref())?;
            let config = TrainingConfig { seed, view_bank_size, ..TrainingConfig::default() };
            config.validate()?;
            let count = pipeline::manifest(&data, &lexicon, &config, &out)?;
            eprintln!("wrote {count} manifest entries");
        }
        Command::Train {
            data,
            embeddings,
            lexicon,
            config,
            tau,
            lambda,
            epochs,
            seed,
            batch_size,
            lr,
            out_dim,
            out,
            report,
        } => {
            let mut cfg: TrainingConfig = match config {
                Some(path) => serde_json::from_slice(&std::fs::read(path)?)?,
                None => TrainingConfig::default(),
            };
            cfg.tau = tau.unwrap_or(cfg.tau);
            cfg.lambda = lambda.unwrap_or(cfg.lambda);
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
            cfg.lr_max = lr.unwrap_or(cfg.lr_max);
            cfg.out_dim = out_dim.unwrap_or(cfg.out_dim);
            let lexicon = pipeline::load_lexicon(lexicon.as_deref())?;
            let source = embeddings.open()?;
            let r = pipeline::train_model(&data, &source, &lexicon, &cfg, &out, &report)?;
            for e in &r.epochs {
                eprintln!(
                    "epoch {:>3}  contrastive {:.5}  isotropy {:.5}  total {:.5}",
                    e.epoch + 1,
                    e.contrastive,
                    e.isotropy,
                    e.total
                );
            }
        }
        Command::Index { data, embeddings, model, out } => {
            let index = pipeline::index_courses(&data, &embeddings.open()?, &model, &out)?;
            eprintln!("indexed {} courses in {} dimensions", index.len(), index.dim());
        }
        Command::Eval { model, data, embeddings, n, out } => {
            let m = pipeline::evaluate(&data, &embeddings.open()?, &model, n, &out)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
        Command::Isoscore { embeddings, out } => {
            let r = pipeline::isoscore_of_file(&embeddings, &out)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::PlotData { model, data, embeddings, out } => {
            let count = pipeline::plot_data(&data, &embeddings.open()?, &model, &out)?;
            eprintln!("wrote {count} points");
        }
        Command::Recommend { query, text, n, json } => {
            let (index, encoder) = query.load()?;
            let result = recommend(&index, &text, &encoder, n)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&result)?);
            } else {
                print!("{result}");
            }
        }
        Command::Repl { query, n } => {
            let (index, encoder) = query.load()?;
            let stdout = io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            run_repl(&index, &encoder, n, io::stdin().lock(), &mut out)?;
            out.flush()?;
        }
        Command::Serve { query, bind } => {
            let (index, encoder) = query.load()?;
            eprintln!("serving {} courses on http://{bind}", index.len());
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve_http(index, encoder, &bind))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
