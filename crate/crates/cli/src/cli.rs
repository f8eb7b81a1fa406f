use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use evrec_core::dataio::{
    build_samples, load_bundle, load_model, save_model, save_report, to_decimal_json, write_bundle,
    DatasetBundle, ModelFile,
};
use evrec_core::experiments::{run_protocol, Fraction, SplitMode, SplitPlan};
use evrec_core::model::{ScoringConfig, UserId};
use evrec_core::presets;
use evrec_core::regression::{AssumptionSpec, Regime, Sample};
use evrec_core::synth::{synth_bundle, SynthConfig};

use crate::run::{now, RunRecord, RunStatus};
use crate::view::{rank_view, render_table};

#[derive(Debug, Parser)]
#[command(name = "evrec", version, about = "Event recommendation scoring and regression lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset directory and report counts and rejected rows.
    Ingest {
        dir: PathBuf,
    },
    /// Run the split protocol for one or more regimes.
    Train(TrainArgs),
    /// Rank a user's events under a stored model.
    Score {
        #[arg(long)]
        user: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, env = "EVREC_DATA_DIR")]
        data: PathBuf,
        #[arg(long)]
        top: Option<usize>,
    },
    /// Write a synthetic dataset generated from the published full-information function.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 15)]
        events: usize,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
    },
    /// Write the published scoring functions as model files.
    ExportPresets {
        dir: PathBuf,
    },
    /// Serve the HTTP API.
    Serve(crate::service::ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    #[value(name = "ia0_init")]
    Ia0Init,
    #[value(name = "ia0_fin")]
    Ia0Fin,
    #[value(name = "ia_x")]
    IaX,
    #[value(name = "ia_xu_abs")]
    IaXuAbs,
    #[value(name = "ia_xu_rel")]
    IaXuRel,
    #[value(name = "ia_xd_thi")]
    IaXdThi,
    #[value(name = "ia_xd_tyi")]
    IaXdTyi,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Ia0Init => Regime::Ia0Init,
            RegimeArg::Ia0Fin => Regime::Ia0Fin,
            RegimeArg::IaX => Regime::IaX,
            RegimeArg::IaXuAbs => Regime::IaXuAbs,
            RegimeArg::IaXuRel => Regime::IaXuRel,
            RegimeArg::IaXdThi => Regime::IaXdThi,
            RegimeArg::IaXdTyi => Regime::IaXdTyi,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Regimes to fit, comma separated or repeated.
    #[arg(long = "regime", value_enum, value_delimiter = ',', required = true)]
    pub regimes: Vec<RegimeArg>,
    #[arg(long, default_value_t = 15)]
    pub splits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training pool directory.
    #[arg(long, env = "EVREC_DATA_DIR")]
    pub train: PathBuf,
    /// Held-out test pool directory.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Output directory for the report, models and run record.
    #[arg(long, default_value = "evrec-run")]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "6,8")]
    pub thresholds: Vec<f64>,
    #[arg(long, default_value_t = evrec_core::regression::DEFAULT_RIDGE)]
    pub ridge: f64,
    #[arg(long, default_value = "2/3")]
    pub train_fraction: String,
    /// Backward attribute elimination on every fit.
    #[arg(long)]
    pub attribute_selection: bool,
    /// Split each user's rows separately instead of all rows together.
    #[arg(long)]
    pub per_user: bool,
}

/// Failure classes mapped to exit codes: usage problems exit 2, everything
/// else 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_samples(dir: &Path, what: &str) -> Result<(DatasetBundle, Vec<Sample>)> {
    let bundle = load_bundle(dir).with_context(|| format!("loading {what} pool {}", dir.display()))?;
    let set = build_samples(&bundle);
    if !set.rejects.is_empty() {
        eprintln!(
            "warning: {} of {} {what} responses rejected (first: {}/{}: {})",
            set.rejects.len(),
            bundle.responses.len(),
            set.rejects[0].user_id,
            set.rejects[0].event_id,
            set.rejects[0].error
        );
    }
    Ok((bundle, set.samples))
}

fn ingest(dir: &Path) -> Result<ExitCode> {
    if !dir.is_dir() || fs::read_dir(dir)?.next().is_none() {
        return Err(usage(format!("`{}` is not a non-empty dataset directory", dir.display())));
    }
    let bundle = load_bundle(dir)?;
    let set = build_samples(&bundle);
    for w in &bundle.warnings {
        eprintln!("warning: {w}");
    }
    for r in &set.rejects {
        println!("reject: {}/{}: {}", r.user_id, r.event_id, r.error);
    }
    println!(
        "{} events, {} users, {} rejects",
        bundle.events.len(),
        bundle.users.len(),
        set.rejects.len()
    );
    Ok(if set.rejects.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn train(args: &TrainArgs) -> Result<ExitCode> {
    let train_fraction: Fraction = args
        .train_fraction
        .parse()
        .map_err(|e: evrec_core::experiments::ExperimentError| usage(e.to_string()))?;
    let (bundle, pool) = load_samples(&args.train, "training")?;
    let test = match &args.test {
        Some(d) => load_samples(d, "test")?.1,
        None => Vec::new(),
    };
    let cfg = bundle.config.scoring.clone();
    let mut regimes: Vec<Regime> = Vec::new();
    for r in &args.regimes {
        let r = Regime::from(*r);
        if !regimes.contains(&r) {
            regimes.push(r);
        }
    }
    let specs: Vec<AssumptionSpec> = regimes
        .iter()
        .map(|&regime| AssumptionSpec {
            regime,
            thresholds: args.thresholds.clone(),
            ridge: args.ridge,
            attribute_selection: args.attribute_selection,
        })
        .collect();
    for s in &specs {
        s.validate(&cfg.score).map_err(|e| usage(e.to_string()))?;
    }
    let plan = SplitPlan {
        seed: args.seed,
        n_splits: args.splits,
        train_fraction,
        mode: if args.per_user {
            SplitMode::PerUser
        } else {
            SplitMode::Rows
        },
    };
    plan.validate().map_err(|e| usage(e.to_string()))?;

    let mut record = RunRecord::queued("cli", regimes.clone(), plan.seed, plan.n_splits);
    record.started_at = Some(now());
    let report = run_protocol(&pool, &test, &specs, &plan)?;

    let out = &args.out;
    fs::create_dir_all(out.join("models")).with_context(|| format!("creating {}", out.display()))?;
    save_report(out.join("report.json"), &report)?;
    let text = report.render_text();
    fs::write(out.join("report.txt"), &text)?;
    for m in crate::averaged_models(&report, "", &cfg) {
        save_model(out.join("models").join(format!("{}.json", m.id)), &m)?;
        record.models.push(m.id);
    }
    record.report_file = Some("report.json".into());
    record.finished_at = Some(now());
    let total_failure = record.models.is_empty();
    record.status = if total_failure {
        RunStatus::Failed
    } else {
        RunStatus::Completed
    };
    if total_failure {
        record.error = Some("no regime could be fitted on any split".into());
    }
    fs::write(out.join("run.json"), to_decimal_json(&record))?;
    print!("{text}");
    Ok(if total_failure {
        eprintln!("error: no regime could be fitted on any split");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn score(user: &str, model: &Path, data: &Path, top: Option<usize>) -> Result<ExitCode> {
    if !model.is_file() {
        return Err(usage(format!("model file `{}` not found", model.display())));
    }
    let m = load_model(model)?;
    let bundle = load_bundle(data)?;
    let Some(u) = bundle.user(&UserId::new(user)) else {
        bail!("unknown user `{user}`");
    };
    let view = rank_view(&bundle, u, &m.function);
    print!("{}", render_table(&view, top));
    Ok(ExitCode::SUCCESS)
}

fn synth(out: &Path, seed: u64, users: usize, events: usize, noise: f64) -> Result<ExitCode> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(usage("noise must be a non-negative number"));
    }
    let cfg = SynthConfig {
        n_users: users,
        n_events: events,
        noise_sd: noise,
        ..SynthConfig::new(seed)
    };
    let b = synth_bundle(&cfg);
    write_bundle(out, &b)?;
    println!(
        "{} events, {} users, {} responses written to {}",
        b.events.len(),
        b.users.len(),
        b.responses.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn export_presets(dir: &Path) -> Result<ExitCode> {
    for (id, f) in presets::all() {
        let m = ModelFile::new(id, f, ScoringConfig::default());
        save_model(dir.join(format!("{id}.json")), &m)?;
    }
    println!("{} models written to {}", presets::all().len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { dir } => ingest(&dir),
        Command::Train(args) => train(&args),
        Command::Score {
            user,
            model,
            data,
            top,
        } => score(&user, &model, &data, top),
        Command::Synth {
            out,
            seed,
            users,
            events,
            noise,
        } => synth(&out, seed, users, events, noise),
        Command::ExportPresets { dir } => export_presets(&dir),
        Command::Serve(args) => crate::service::serve(args),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
