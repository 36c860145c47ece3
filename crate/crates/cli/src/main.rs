// SPDX-License-Identifier: MIT OR Apache-2.0

//! `nctr`: runs the analysis pipeline stage by stage over a manifest and its dumps.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nctr_core::pipeline::{
    cmd_analyze, cmd_classify, cmd_ingest_check, cmd_metrics, cmd_report, cmd_synth, cmd_toy, load_synth_spec,
    AnalysisConfig, Layout, PipelineError,
};
use nctr_core::toysim::SynthSpec;

// stdout may be a closed pipe (`nctr metrics | head`)
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "nctr", version, about = "Activation-dump metrics and statistics for self-referential prompts")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSONL manifest of the corpus.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Directory of `<prompt_id>.nctr` dumps (default: `dumps/` next to the manifest).
    #[arg(long, global = true)]
    dumps: Option<PathBuf>,
    /// Output directory shared by all stages; for `synth`, the corpus directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for bootstrap resampling, fold assignment and synthetic corpora.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Restrict cluster and group analyses to T = 0 records.
    #[arg(long, global = true)]
    t0_only: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the manifest and every dump without computing metrics.
    IngestCheck,
    /// Compute the metric vector of every record.
    Metrics,
    /// Run the toy residual-network experiment.
    Toy {
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Hypothesis tests, cluster sweeps, ablation, per-layer, ANCOVA and correlation analyses.
    Analyze,
    /// Cross-validated C4-versus-rest classification.
    Classify,
    /// Consolidated Markdown report and plot data.
    Report,
    /// Write a synthetic corpus (manifest and dumps) to `--out`.
    Synth {
        /// TOML spec overriding the preset.
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Preset::Signal)]
        preset: Preset,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Null,
    Signal,
}

fn configure(common: &Common) -> Result<AnalysisConfig, PipelineError> {
    let mut cfg = AnalysisConfig::load(common.config.as_deref())?;
    if let Some(m) = &common.manifest {
        cfg.manifest = Some(m.clone());
    }
    if let Some(d) = &common.dumps {
        cfg.dumps = Some(d.clone());
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.t0_only |= common.t0_only;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(jobs) = cli.common.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("configuring the worker pool")?;
    }
    let mut cfg = configure(&cli.common)?;
    let layout = Layout::new(&cfg.out);
    match cli.command {
        Command::IngestCheck => {
            let r = cmd_ingest_check(&cfg)?;
            say!("{} records, {} valid", r.records, r.valid);
            for (name, n) in &r.absent_optional {
                say!("  {n} records without {name}");
            }
            for issue in &r.issues {
                eprintln!("{}: {}", issue.prompt_id, issue.message);
            }
            if !r.issues.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Metrics => {
            let s = cmd_metrics(&cfg)?;
            say!("{} of {} records computed, {} failed", s.computed, s.records, s.failures.len());
            for (cause, n) in &s.null_causes {
                say!("  {n} null values: {cause}");
            }
            say!("wrote {}", layout.metrics_table().display());
        }
        Command::Toy { runs } => {
            if let Some(seed) = cli.common.seed {
                cfg.toy.seed = seed;
            }
            if let Some(runs) = runs {
                cfg.toy.runs = runs;
            }
            let s = cmd_toy(&cfg)?;
            say!(
                "crossings {:.3} closing, {:.3} non-closing; ratio {:.3}, d {:.3}, p {:.3e}; rho {:.4} / {:.4}",
                s.mean_crossings_first,
                s.mean_crossings_second,
                s.crossing_ratio,
                s.cohens_d,
                s.p_value,
                s.rho_first,
                s.rho_second
            );
        }
        Command::Analyze => {
            let a = cmd_analyze(&cfg)?;
            for h in &a.hypotheses {
                say!(
                    "{} {} {}: d {:.3}, p {:.3e}{}",
                    h.hypothesis,
                    h.model_id,
                    h.effect.metric,
                    h.effect.d,
                    h.effect.p_bonf,
                    if h.effect.significant { " *" } else { "" }
                );
            }
            for c in &a.sweep_counts {
                say!("{}: {} of {} cells significant, {} large", c.comparison, c.significant, c.cells, c.large);
            }
            say!("ablation: {} of {} cells significant", a.ablation_significant, a.ablation.len());
        }
        Command::Classify => {
            for m in cmd_classify(&cfg)? {
                say!(
                    "{}: AUC {:.3} ± {:.3} ({} records, {} C4)",
                    m.model_id,
                    m.report.mean_auc,
                    m.report.std_auc,
                    m.n,
                    m.positives
                );
            }
        }
        Command::Report => {
            let r = cmd_report(&cfg)?;
            say!("wrote {} ({} sections)", layout.report_md().display(), r.sections.len());
        }
        Command::Synth { spec, preset } => {
            let spec = match (spec, preset) {
                (Some(path), _) => load_synth_spec(&path)?,
                (None, Preset::Null) => SynthSpec::null(),
                (None, Preset::Signal) => SynthSpec::signal(),
            };
            let n = cmd_synth(&spec, cfg.seed, &cfg.out)?;
            say!("wrote {n} records to {}", cfg.out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<PipelineError>().map_or(1, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
