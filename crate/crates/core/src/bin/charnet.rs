use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use charnet::config::PipelineConfig;
use charnet::corpus::ingest;
use charnet::pipeline::{
    annotate_stage, extract_stage, generate_stage, ingest_stage, metrics_stage, report_stage, run_pipeline,
    write_atomic,
};
use charnet::stats::{display_p, ComparisonReport};
use charnet::storygen::{build_provider, classify_genres, system_clock, ProviderKind};

#[derive(Parser)]
#[command(name = "charnet", version, about = "Signed character networks and writer comparison")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Global {
    /// TOML config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Reserved for randomized tie-breaking (no stage uses randomness)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    male_names: Option<PathBuf>,
    #[arg(long, global = true)]
    female_names: Option<PathBuf>,
    #[arg(long, global = true)]
    nicknames: Option<PathBuf>,
    #[arg(long, global = true)]
    titles: Option<PathBuf>,
    #[arg(long, global = true)]
    positive_words: Option<PathBuf>,
    #[arg(long, global = true)]
    negative_words: Option<PathBuf>,
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    /// Unit length as a fraction of the sentence count
    #[arg(long, global = true)]
    unit_coefficient: Option<f64>,
    #[arg(long, global = true)]
    min_nodes: Option<usize>,
    #[arg(long, global = true)]
    min_density: Option<f64>,
    #[arg(long, global = true)]
    min_words: Option<usize>,
    #[arg(long, global = true)]
    max_words: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate stories with a chat-completion model
    Generate(GenerateArgs),
    /// Read a corpus, filter by length and split sentences
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        /// Writer label for every record, overriding the file
        #[arg(long)]
        writer: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attach sentiment logits and character mentions to narrative units
    Annotate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the rule-based annotator instead of the sidecar
        #[arg(long)]
        fallback: bool,
        /// Sidecar executable
        #[arg(long)]
        annotator: Option<String>,
        #[arg(long)]
        ner_model: Option<String>,
        #[arg(long)]
        sentiment_model: Option<String>,
    },
    /// Build signed networks and apply the exclusion filter
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, conflicts_with = "fallback")]
        annotations: Option<PathBuf>,
        #[arg(long)]
        fallback: bool,
        #[arg(long)]
        out_graphs: PathBuf,
        /// CSV listing excluded stories and why
        #[arg(long)]
        exclusions: Option<PathBuf>,
    },
    /// Compute network metrics for every graph and scope
    Metrics {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare writers: summaries, W1 matrices and Welch tests
    Report {
        #[arg(long)]
        metrics: PathBuf,
        /// Comma-separated writer order
        #[arg(long, value_delimiter = ',')]
        writers: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label the genre of every story in a corpus
    Classify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Run ingest through report with artifacts in one directory
    Run {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        writer: Option<String>,
        #[arg(long)]
        work_dir: Option<PathBuf>,
        #[arg(long)]
        fallback: bool,
        #[arg(long, value_delimiter = ',')]
        writers: Option<Vec<String>>,
    },
}

#[derive(Args)]
struct ProviderArgs {
    #[arg(long)]
    model: Option<String>,
    /// openai, gemini or mock
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the API key
    #[arg(long)]
    api_key_env: Option<String>,
    /// Canned responses for the mock provider
    #[arg(long)]
    mock_script: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long, default_value_t = 1)]
    n_stories: usize,
    #[arg(long)]
    chapters: Option<usize>,
    #[arg(long)]
    characters: Option<usize>,
    #[arg(long)]
    words_per_chapter: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut c = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let l = &mut c.lexicons;
    for (slot, flag) in [
        (&mut l.male_names, &g.male_names),
        (&mut l.female_names, &g.female_names),
        (&mut l.nicknames, &g.nicknames),
        (&mut l.titles, &g.titles),
        (&mut l.positive_words, &g.positive_words),
        (&mut l.negative_words, &g.negative_words),
        (&mut l.stopwords, &g.stopwords),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if let Some(v) = g.seed {
        c.seed = v;
    }
    if let Some(v) = g.unit_coefficient {
        c.unit_coefficient = v;
    }
    if let Some(v) = g.min_nodes {
        c.filters.min_nodes = v;
    }
    if let Some(v) = g.min_density {
        c.filters.min_density = v;
    }
    if let Some(v) = g.min_words {
        c.filters.min_words = v;
    }
    if let Some(v) = g.max_words {
        c.filters.max_words = v;
    }
    c.validate()?;
    Ok(c)
}

fn apply_provider(c: &mut PipelineConfig, p: &ProviderArgs) -> Result<()> {
    let g = &mut c.generation;
    if let Some(v) = &p.model {
        g.model.clone_from(v);
    }
    if let Some(v) = &p.provider {
        g.provider = match v.as_str() {
            "openai" => ProviderKind::Openai,
            "gemini" => ProviderKind::Gemini,
            "mock" => ProviderKind::Mock,
            other => bail!("unknown provider {other:?} (expected openai, gemini or mock)"),
        };
    }
    if let Some(v) = &p.endpoint {
        g.endpoint.clone_from(v);
    }
    if let Some(v) = &p.api_key_env {
        g.api_key_env = Some(v.clone());
    }
    if let Some(v) = &p.mock_script {
        g.mock_script = Some(v.clone());
    }
    Ok(())
}

fn print_report(report: &ComparisonReport, out: &Path) {
    println!("writers: {}", report.writers.join(", "));
    for t in &report.tests {
        let cells = match t.result {
            Some(r) => format!("t={:.4} df={:.2} p={:.4e}", r.t, r.df, display_p(r.p)),
            None => format!("undefined (n={} vs {})", t.n_a, t.n_b),
        };
        println!(
            "{:<9} {:<15} {} vs {}: {cells}",
            t.scope.as_str(),
            t.metric.as_str(),
            t.writer_a,
            t.writer_b
        );
    }
    println!("report written to {}", out.display());
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli.global)?;
    match cli.command {
        Cmd::Generate(args) => {
            apply_provider(&mut config, &args.provider)?;
            let g = &mut config.generation;
            if let Some(v) = args.chapters {
                g.chapters = v;
            }
            if let Some(v) = args.characters {
                g.characters = v;
            }
            if let Some(v) = args.words_per_chapter {
                g.words_per_chapter = v;
            }
            g.validate()?;
            let provider = build_provider(g)?;
            let s = generate_stage(g, provider.as_ref(), &system_clock(), args.n_stories, &args.out)?;
            println!("generated {} stories ({} failed) into {}", s.generated, s.failed, s.corpus.display());
            if s.failed > 0 {
                bail!("{} of {} stories failed", s.failed, args.n_stories);
            }
        }
        Cmd::Ingest { input, writer, out } => {
            let s = ingest_stage(&input, writer.as_deref(), &config, &out)?;
            println!(
                "read {} records: {} kept, {} skipped, {} outside the word range",
                s.read, s.kept, s.skipped, s.out_of_range
            );
        }
        Cmd::Annotate {
            input,
            out,
            fallback,
            annotator,
            ner_model,
            sentiment_model,
        } => {
            let a = &mut config.annotator;
            if let Some(v) = annotator {
                a.command = v;
            }
            if let Some(v) = ner_model {
                a.ner_model = v;
            }
            if let Some(v) = sentiment_model {
                a.sentiment_model = v;
            }
            let s = annotate_stage(&input, &out, &config, fallback)?;
            println!("annotated {} documents, {} units", s.documents, s.units);
        }
        Cmd::Extract {
            input,
            annotations,
            fallback,
            out_graphs,
            exclusions,
        } => {
            let s = extract_stage(
                &input,
                annotations.as_deref(),
                fallback,
                &config,
                &out_graphs,
                exclusions.as_deref(),
            )?;
            println!(
                "{} of {} networks retained, {} excluded",
                s.retained,
                s.documents,
                s.excluded.len()
            );
        }
        Cmd::Metrics { graphs, out } => {
            let rows = metrics_stage(&graphs, &out)?;
            println!("wrote {} metric rows to {}", rows.len(), out.display());
        }
        Cmd::Report { metrics, writers, out } => {
            let writers = writers.or(config.writers.clone());
            let report = report_stage(&metrics, writers.as_deref(), &out)?;
            print_report(&report, &out);
        }
        Cmd::Classify { input, out, provider } => {
            apply_provider(&mut config, &provider)?;
            let stories = ingest(&input, None)?.stories;
            let texts: Vec<String> = stories.iter().map(|s| s.text.clone()).collect();
            let client = build_provider(&config.generation)?;
            let labels = classify_genres(&texts, &config.generation, client.as_ref())?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["story_id", "writer", "genre"])?;
            for (s, label) in stories.iter().zip(labels) {
                w.write_record([s.story_id.as_str(), s.writer.as_str(), label])?;
            }
            write_atomic(&out, &w.into_inner()?)?;
            println!("labelled {} stories", stories.len());
        }
        Cmd::Run {
            corpus,
            writer,
            work_dir,
            fallback,
            writers,
        } => {
            if corpus.is_some() {
                config.corpus = corpus;
            }
            if writer.is_some() {
                config.writer = writer;
            }
            if let Some(dir) = work_dir {
                config.work_dir = dir;
            }
            if writers.is_some() {
                config.writers = writers;
            }
            config.fallback |= fallback;
            let s = run_pipeline(&config)?;
            println!(
                "{} stories kept, {} networks retained, {} metric rows, writers: {}",
                s.ingest.kept,
                s.extract.retained,
                s.metric_rows,
                s.writers.join(", ")
            );
            println!("artifacts in {}", config.work_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
