//! `forge`: generate stories, re-image pages, score text, and run the API.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};
use forge_cli::{init_tracing, read_input, write_output, ProviderArgs};
use forge_core::pipeline::{DirStore, GenerationRequest, JobStatus, Pipeline, PipelineOptions};
use forge_core::profile::{ChildProfile, RewardSticker, StickerRef};
use forge_core::readability::{self, AssessmentConfig, Lexicon};
use forge_core::{fixtures, SectionId, Story};
use forge_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "forge", version, about = "Personalized branching social stories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the generation pipeline once and write the story document.
    Generate(GenerateArgs),
    /// Re-image one section of a story document.
    RegenImage {
        /// Story document to read.
        story: PathBuf,
        #[arg(long)]
        section: String,
        /// Where to write the new version; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Readability tools.
    Readability {
        #[command(subcommand)]
        command: ReadabilityCommand,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the event export for every account in the configured store.
    Export {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct GenerateArgs {
    /// Target behavior, e.g. "Taking turns during playtime".
    #[arg(long)]
    behavior: String,
    /// Interest to feature; repeatable.
    #[arg(long = "interest", required = true)]
    interests: Vec<String>,
    /// Child profile JSON; the bundled example family when omitted.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, default_value = "star")]
    sticker_id: String,
    #[arg(long, default_value = "Star")]
    sticker_label: String,
    /// Job directory: checkpoints and the finished story live here. A job
    /// id already present resumes from its last checkpoint.
    #[arg(long, default_value = "forge-out")]
    out: PathBuf,
    #[arg(long, default_value = "job-1")]
    job_id: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    translate: bool,
    #[arg(long, default_value = "ko")]
    language: String,
    /// Story creation time; fixes the output for reproducible runs.
    #[arg(long)]
    now: Option<DateTime<Utc>>,
    #[command(flatten)]
    providers: ProviderArgs,
}

#[derive(Subcommand)]
enum ReadabilityCommand {
    /// Grade level, counts, and flagged vocabulary for a text.
    Score {
        /// Text file, or `-` for stdin. Ignored when --text is given.
        #[arg(default_value = "-")]
        file: PathBuf,
        #[arg(long)]
        text: Option<String>,
        /// Lexicon TSV (`word<TAB>level`); the bundled one when omitted.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Names never flagged; repeatable.
        #[arg(long = "exempt")]
        exempt: Vec<String>,
        #[arg(long)]
        json: bool,
    },
}

async fn generate(args: GenerateArgs) -> Result<ExitCode> {
    let profile: ChildProfile = match &args.profile {
        Some(p) => serde_json::from_str(&read_input(p)?).context("parsing profile")?,
        None => fixtures::alex_profile(),
    };
    let reward_sticker = if args.sticker_id == forge_core::profile::STAR_STICKER_ID {
        RewardSticker::star().to_ref()
    } else {
        StickerRef { id: args.sticker_id, label: args.sticker_label }
    };
    let options = PipelineOptions {
        translate: args.translate,
        target_language: args.language,
        seed: args.seed,
        now: args.now,
        ..PipelineOptions::default()
    };
    let pipeline = Pipeline::new(args.providers.suite()?, options);
    let store = DirStore::open(&args.out)?;
    let request = GenerationRequest { profile, interests: args.interests, target_behavior: args.behavior, reward_sticker };
    let job = pipeline.run(&store, &args.job_id, request).await?;
    for w in &job.warnings {
        eprintln!("warning: {w}");
    }
    match &job.status {
        JobStatus::Complete { story_id } => {
            let path = args.out.join("stories").join(format!("{story_id}.json"));
            println!("complete: {story_id} ({})", path.display());
            Ok(ExitCode::SUCCESS)
        }
        JobStatus::Failed { stage, reason } => {
            eprintln!("failed at {stage}: {reason}");
            Ok(ExitCode::FAILURE)
        }
        other => {
            eprintln!("job stopped in state {other:?}");
            Ok(ExitCode::FAILURE)
        }
    }
}

async fn regen_image(story: PathBuf, section: String, out: Option<PathBuf>, providers: ProviderArgs) -> Result<ExitCode> {
    let story = Story::from_document_str(&read_input(&story)?)?;
    let pipeline = Pipeline::new(providers.suite()?, PipelineOptions::default());
    let (regen, log) = pipeline.regenerate_image(&story, &SectionId::new(section)).await?;
    let mut next = regen.story;
    next.version = story.version + 1;
    for w in &log.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("image {} ({})", regen.image.as_str(), if regen.reused_cache { "cached plan" } else { "plan rebuilt" });
    write_output(out.as_deref(), &next.to_document_string())?;
    Ok(ExitCode::SUCCESS)
}

fn score(file: PathBuf, text: Option<String>, lexicon: Option<PathBuf>, exempt: Vec<String>, json: bool) -> Result<ExitCode> {
    let text = match text {
        Some(t) => t,
        None => read_input(&file)?,
    };
    let lexicon = match lexicon {
        Some(p) => Lexicon::load(&p)?,
        None => Lexicon::bundled(),
    };
    let config = AssessmentConfig::default();
    let report = readability::report(&text, &lexicon, &exempt, config.threshold);
    let assessment = readability::assess_section(&text, &lexicon, &exempt, &config);
    if json {
        println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "report": report, "assessment": assessment }))?);
    } else {
        match report.fkgl {
            Some(g) => println!("grade: {g:.2} (cap {:.1})", config.grade_cap),
            None => println!("grade: unscorable"),
        }
        println!("words: {}  sentences: {}  syllables: {}", report.word_count, report.sentence_count, report.syllable_count);
        for w in &report.flagged_words {
            println!("flagged: {} ({}) at byte {}", w.word, w.level, w.offset);
        }
        println!("{}", if assessment.passes() { "pass" } else { "needs simplification" });
    }
    Ok(ExitCode::SUCCESS)
}

async fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate(args) => generate(args).await,
        Command::RegenImage { story, section, out, providers } => regen_image(story, section, out, providers).await,
        Command::Readability { command: ReadabilityCommand::Score { file, text, lexicon, exempt, json } } => {
            score(file, text, lexicon, exempt, json)
        }
        Command::Serve { config } => {
            let config = ServiceConfig::load(&config)?;
            forge_service::serve(&config).await?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Export { config, out } => {
            let config = ServiceConfig::load(&config)?;
            let export = forge_service::Service::open(&config)?.export_all()?;
            write_output(out.as_deref(), &export.to_json_string())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    init_tracing();
    match run(Cli::parse()).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
