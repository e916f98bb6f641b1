//! Shared plumbing for the `forge` and `forge-insights` binaries.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use forge_core::pipeline::live::{LiveClient, LiveConfig};
use forge_core::pipeline::mock::{MockSuite, MockTextProvider};
use forge_core::pipeline::ProviderSuite;

pub const DEFAULT_CATEGORIES: &str = include_str!("../assets/behavior-categories.tsv");

/// Provider selection shared by the generating subcommands.
#[derive(Debug, Clone, clap::Args)]
pub struct ProviderArgs {
    /// Use the live OpenAI-compatible providers (reads FORGE_* variables).
    #[arg(long)]
    pub live: bool,
    /// Mock mode: answer from `<digest>.json` files in this directory first.
    #[arg(long, value_name = "DIR")]
    pub fixture_dir: Option<PathBuf>,
    /// Mock mode: fail on any request without a fixture file.
    #[arg(long, requires = "fixture_dir")]
    pub strict: bool,
    /// Mock mode: write synthetic answers into the fixture directory.
    #[arg(long, requires = "fixture_dir", conflicts_with = "strict")]
    pub record: bool,
}

impl ProviderArgs {
    pub fn suite(&self) -> Result<ProviderSuite> {
        if self.live {
            let config = LiveConfig::from_env().context("live providers")?;
            return Ok(LiveClient::new(config)?.suite());
        }
        let mut text = MockTextProvider::new();
        if let Some(dir) = &self.fixture_dir {
            text = text.with_fixture_dir(dir);
            if self.strict {
                text = text.strict();
            }
            if self.record {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                text = text.recording();
            }
        }
        Ok(MockSuite::with_text(text).providers())
    }
}

pub fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s)?;
        return Ok(s);
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_output(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        None => {
            println!("{contents}");
            Ok(())
        }
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, contents).with_context(|| format!("writing {}", p.display()))
        }
    }
}

pub fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}
