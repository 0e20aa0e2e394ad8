use std::io::Write;
use std::path::{Path, PathBuf};

use bilingo_core::config::{load_inputs, Config, ConfigError, LoadError, Loaded};
use bilingo_core::linker::{candidate_concepts, coverage_stats, coverage_tsv};
use bilingo_core::store::{load_pack, save_pack, StoreError};
use bilingo_core::{build_course, validate_pack, CoursePack};
use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::api;

#[derive(Debug, Parser)]
#[command(
    name = "bilingo",
    version,
    about = "Build and serve gamified language courses from a treebank and a lexicon"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sentence counts by language, concept coverage and translation language (TSV).
    Stats {
        #[arg(long)]
        treebank: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Concepts found in more than `--min` distinct sentences of a language.
    Candidates {
        #[arg(long)]
        treebank: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        language: String,
        #[arg(long, default_value_t = 10)]
        min: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a course pack.
    Build {
        #[arg(long)]
        treebank: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-check every exercise and lesson invariant of a pack.
    Validate { pack: PathBuf },
    /// Serve packs over HTTP.
    Serve {
        /// A pack file or a directory of pack files.
        #[arg(long)]
        pack: PathBuf,
        /// Directory holding learner state.
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Built web UI bundle, served at `/`.
        #[arg(long)]
        ui: Option<PathBuf>,
        /// JSON object mapping concept ids to image URLs.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0} violation(s)")]
    Invalid(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn load(treebank: &Path, lexicon: &Path, cfg: &Config, err: &mut dyn Write) -> Result<Loaded, CliError> {
    let loaded = load_inputs(treebank, lexicon, cfg)?;
    for w in &loaded.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    Ok(loaded)
}

pub fn stats(
    treebank: &Path,
    lexicon: &Path,
    config: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = Config::load(config)?;
    let loaded = load(treebank, lexicon, &cfg, err)?;
    let tsv = coverage_tsv(&coverage_stats(&loaded.corpus));
    out.write_all(tsv.as_bytes())
        .map_err(|e| CliError::Input(e.to_string()))?;
    let _ = writeln!(
        err,
        "{} sentences, {} lexicon entries ({} skipped rows, {} duplicates, {} multiword forms)",
        loaded.corpus.sentences().len(),
        loaded.lexicon.entries.len(),
        loaded.lexicon.skipped_rows,
        loaded.lexicon.duplicates,
        loaded.corpus.multiword_entries().len(),
    );
    Ok(())
}

pub fn candidates(
    treebank: &Path,
    lexicon: &Path,
    config: Option<&Path>,
    language: &str,
    min: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = match config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let loaded = load(treebank, lexicon, &cfg, err)?;
    let rows = candidate_concepts(&loaded.corpus, language, min).map_err(|e| CliError::Input(e.to_string()))?;
    let mut text = String::from("concept_id\tsentences\n");
    for row in rows {
        text.push_str(&format!("{}\t{}\n", row.concept_id, row.sentences));
    }
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Input(e.to_string()))
}

/// Build the pack for a config, with input digests filled in.
pub fn build_pack(
    treebank: &Path,
    lexicon: &Path,
    config: &Path,
    seed: u64,
    err: &mut dyn Write,
) -> Result<CoursePack, CliError> {
    let cfg = Config::load(config)?;
    let course = cfg.course(&config.display().to_string())?.clone();
    let loaded = load(treebank, lexicon, &cfg, err)?;
    let mut pack = build_course(&loaded.corpus, &course, seed).map_err(|e| {
        if e.is_infeasible() {
            CliError::Infeasible(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    })?;
    pack.provenance.inputs = loaded.inputs;
    let violations = validate_pack(&pack);
    for v in &violations {
        let _ = writeln!(err, "{v}");
    }
    if !violations.is_empty() {
        return Err(CliError::Invalid(violations.len()));
    }
    Ok(pack)
}

pub fn validate(pack: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let pack = load_pack(pack)?;
    let violations = validate_pack(&pack);
    for v in &violations {
        let _ = writeln!(out, "{v}");
    }
    if violations.is_empty() {
        let _ = writeln!(
            out,
            "ok: course `{}`, {} sections, {} exercises",
            pack.course_id,
            pack.sections.len(),
            pack.exercises().count()
        );
        Ok(())
    } else {
        Err(CliError::Invalid(violations.len()))
    }
}

/// Run one command; returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Stats {
            treebank,
            lexicon,
            config,
            out: target,
        } => match target {
            Some(path) => {
                let mut buf = Vec::new();
                stats(&treebank, &lexicon, &config, &mut buf, err)
                    .and_then(|()| std::fs::write(&path, buf).map_err(|e| io_err(&path, e)))
            }
            None => stats(&treebank, &lexicon, &config, out, err),
        },
        Command::Candidates {
            treebank,
            lexicon,
            language,
            min,
            config,
        } => candidates(&treebank, &lexicon, config.as_deref(), &language, min, out, err),
        Command::Build {
            treebank,
            lexicon,
            config,
            seed,
            out: target,
        } => build_pack(&treebank, &lexicon, &config, seed, err).and_then(|pack| {
            save_pack(&target, &pack)?;
            let _ = writeln!(err, "wrote {}", target.display());
            Ok(())
        }),
        Command::Validate { pack } => validate(&pack, out),
        Command::Serve {
            pack,
            state,
            port,
            host,
            ui,
            assets,
        } => api::serve(api::ServeOptions {
            packs: pack,
            state,
            host,
            port,
            ui,
            assets,
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
