use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use synchrolab::dataset::StudyManifest;
use synchrolab::pipeline::{init_thread_pool, Stage, Study, Workspace};
use synchrolab::synthgen::{SynthConfig, SynthStudy};
use synchrolab::Error;

#[derive(Parser)]
#[command(name = "synchrolab", version, about = "Physiological synchrony analysis from a study manifest")]
struct Cli {
    /// Worker threads (defaults to the number of logical cores).
    #[arg(long, global = true, env = "SYNCHROLAB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct StudyArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for stage artifacts and the report.
    #[arg(long, default_value = "synchrolab-out")]
    out: PathBuf,
    /// Analyze recordings that fail screening instead of excluding them.
    #[arg(long)]
    keep_flagged: bool,
    /// Sakoe-Chiba band radius in samples.
    #[arg(long)]
    band: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage from scratch and write the report.
    Run(StudyArgs),
    /// Parse and screen recordings.
    Ingest(StudyArgs),
    /// Filter, clean, normalize, and decompose onto the analysis grid.
    Preprocess(StudyArgs),
    /// Group-average correlation and DTW per condition and segment.
    Synchrony(StudyArgs),
    /// Exhaustive probe x reference DTW table.
    Pairs(StudyArgs),
    /// Normality, ART ANOVA, post-hoc tests, and optional score ANOVA.
    Stats(StudyArgs),
    /// Assemble the report from cached stage artifacts.
    Report(StudyArgs),
    /// Animation keyframe tracks, one NDJSON file per cohort.
    ExportKeyframes(StudyArgs),
    /// Write a synthetic study (CSV recordings plus manifest).
    Synth(SynthArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 260.0)]
    duration: f64,
    #[arg(long, default_value_t = 10.0)]
    rate: f64,
    #[arg(long, default_value_t = 2.0)]
    lag_max: f64,
    #[arg(long, default_value_t = 40)]
    reference_n: usize,
    #[arg(long, default_value_t = 0.1)]
    reference_sigma: f64,
    /// Probe cohort as `label:n:sigma`; repeatable. Defaults to
    /// low:21:0.1, med:20:0.25, high:21:0.5.
    #[arg(long = "probe", value_parser = parse_probe)]
    probes: Vec<(String, usize, f64)>,
}

fn parse_probe(s: &str) -> Result<(String, usize, f64), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [label, n, sigma] = parts[..] else {
        return Err("expected label:n:sigma".into());
    };
    let n = n.parse().map_err(|_| format!("bad subject count {n:?}"))?;
    let sigma = sigma.parse().map_err(|_| format!("bad sigma {sigma:?}"))?;
    Ok((label.to_string(), n, sigma))
}

fn load_study(args: &StudyArgs) -> Result<Study, Error> {
    let (mut manifest, base) = StudyManifest::load(&args.manifest)?;
    if args.keep_flagged {
        manifest.analysis.keep_flagged = true;
    }
    if args.band.is_some() {
        manifest.dtw.band_radius = args.band;
    }
    Study::from_parts(manifest, base)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn run_study(command: &Command, args: &StudyArgs) -> Result<serde_json::Value, Error> {
    let study = load_study(args)?;
    let ws = Workspace::new(&study, &args.out)?;
    let out = |stage: Stage| display(&ws.path(stage));
    Ok(match command {
        Command::Run(_) => {
            let report = ws.run_all()?;
            json!({"stage": "run", "report": out(Stage::Report), "config_hash": report.provenance.config_hash})
        }
        Command::Ingest(_) => {
            let screening = ws.refresh_screening()?;
            let flagged: usize = screening.iter().map(|r| r.flagged_count()).sum();
            json!({"stage": "ingest", "artifact": out(Stage::Ingest), "flagged": flagged})
        }
        Command::Preprocess(_) => {
            ws.refresh_prepared()?;
            json!({"stage": "preprocess", "artifact": out(Stage::Preprocess)})
        }
        Command::Synchrony(_) => {
            ws.refresh_group()?;
            json!({"stage": "synchrony", "artifact": out(Stage::Synchrony)})
        }
        Command::Pairs(_) => match ws.refresh_pairs()? {
            Some(pairs) => json!({"stage": "pairs", "artifact": out(Stage::Pairs), "rows": pairs.len()}),
            None => json!({"stage": "pairs", "skipped": "pairwise analysis disabled"}),
        },
        Command::Stats(_) => {
            ws.refresh_stats()?;
            json!({"stage": "stats", "artifact": out(Stage::Stats)})
        }
        Command::Report(_) => {
            ws.report()?;
            json!({"stage": "report", "report": out(Stage::Report)})
        }
        Command::ExportKeyframes(_) => {
            let files: Vec<String> = ws.keyframes()?.iter().map(|p| display(p)).collect();
            json!({"stage": "export-keyframes", "files": files})
        }
        Command::Synth(_) => unreachable!("synth has no manifest"),
    })
}

fn run_synth(args: &SynthArgs) -> Result<serde_json::Value, Error> {
    let cohort = |label: &str, n: usize, sigma: f64, i: u64| SynthConfig {
        label: label.into(),
        n_subjects: n,
        duration_s: args.duration,
        rate_hz: args.rate,
        noise_sigma: sigma,
        lag_max_s: args.lag_max,
        subject_gain_range: (0.8, 1.2),
        seed: args.seed.wrapping_mul(1000).wrapping_add(i),
        ..Default::default()
    };
    let probes: Vec<(String, usize, f64)> = if args.probes.is_empty() {
        vec![("low".into(), 21, 0.1), ("med".into(), 20, 0.25), ("high".into(), 21, 0.5)]
    } else {
        args.probes.clone()
    };
    let study = SynthStudy {
        reference: cohort("reference", args.reference_n, args.reference_sigma, 0),
        probes: probes.iter().zip(1..).map(|((l, n, s), i)| cohort(l, *n, *s, i)).collect(),
    };
    let manifest_path = args.out.join("manifest.json");
    study.write(&args.out).map_err(|e| match e {
        synchrolab::synthgen::SynthWriteError::Config(c) => Error::Synth(c),
        synchrolab::synthgen::SynthWriteError::Io(source) => Error::Io { path: args.out.clone(), source },
    })?;
    Ok(json!({"stage": "synth", "manifest": display(&manifest_path)}))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads.filter(|n| *n > 0) {
        init_thread_pool(n);
    }
    let result = match &cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Run(a)
        | Command::Ingest(a)
        | Command::Preprocess(a)
        | Command::Synchrony(a)
        | Command::Pairs(a)
        | Command::Stats(a)
        | Command::Report(a)
        | Command::ExportKeyframes(a) => run_study(&cli.command, a),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
