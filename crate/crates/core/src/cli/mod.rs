//! `maneuver <verb>`: synth, train, eval, kfold, ablate.
//!
//! Exit status 0 on success, 2 for usage or configuration errors, 1 for
//! runtime failures. Errors are printed as one line on stderr:
//! `error kind=<usage|config|runtime> message="..."`.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::dataio::{generate_synthetic, holdout_split, Clip, DatasetManifest, HorizonSpec, SynthOptions, MANIFEST_FILE};
use crate::error::Error;
use crate::eval::{
    ablation_run, config_hash, emit_report, horizon_eval, kfold_run, OtcSettings, Report, METHOD_OTC, METHOD_PLAIN,
    SCHEMA_VERSION,
};
use crate::net::load_checkpoint;
use crate::train::{save_outcome, train_clips, BEST_CHECKPOINT, FINAL_CHECKPOINT};
use config::{env_overrides, parse_set, resolve, ExperimentConfig, Profile, RESOLVED_CONFIG};

#[derive(Debug, Parser)]
#[command(name = "maneuver", version, about = "Driver maneuver anticipation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub verb: Verb,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides both the data and the training seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// Comma-separated, e.g. `0,-1,-2,-3,-4`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub horizons: Option<String>,
    /// Test-time voting over original, translated and cutout variants.
    #[arg(long, global = true)]
    pub otc: bool,
    /// Comma-separated preset letters for `ablate`.
    #[arg(long, global = true)]
    pub presets: Option<String>,
    #[arg(long, global = true, default_value = "desk")]
    pub profile: String,
    /// `key=value` override with a dotted key, e.g. `train.epochs=5`.
    #[arg(long = "set", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Generate a synthetic dataset and its manifest.
    Synth,
    /// Train on the training part of the holdout split.
    Train,
    /// Evaluate a checkpoint on the test part of the holdout split.
    Eval {
        /// Defaults to `<out>/final.ckpt` (or `best.ckpt`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Stratified K-fold training and evaluation.
    Kfold,
    /// Train and evaluate once per augmentation preset.
    Ablate,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            Failure::Usage(m) => ("usage", m),
            Failure::Config(m) => ("config", m),
            Failure::Runtime(m) => ("runtime", m),
        };
        let msg = msg.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" | ");
        format!("error kind={kind} message={:?}", msg)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env: Vec<(String, String)> = std::env::vars().collect();
    run_with_env(args, &env)
}

pub fn run_with_env<I, T>(args: I, env: &[(String, String)]) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let f = Failure::Usage(e.to_string());
            eprintln!("{}", f.line());
            return f.code();
        }
    };
    match execute(&cli, env) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.line());
            f.code()
        }
    }
}

fn flag_layers(c: &Common) -> Result<Vec<toml::Value>, Failure> {
    let mut layers = Vec::new();
    let mut set = |key: &str, v: toml::Value| -> Result<(), Failure> {
        layers.push(config::dotted(key, v)?);
        Ok(())
    };
    if let Some(s) = c.seed {
        let v = toml::Value::Integer(i64::try_from(s).map_err(|_| Failure::Config("--seed too large".into()))?);
        set("data.seed", v.clone())?;
        set("train.seed", v)?;
    }
    if let Some(s) = &c.scenario {
        set("model.scenario", toml::Value::String(s.clone()))?;
    }
    if let Some(h) = &c.horizons {
        let list = h
            .split(',')
            .map(|x| x.trim().parse::<i64>().map(toml::Value::Integer))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Failure::Config(format!("--horizons {h:?} is not a comma-separated integer list")))?;
        set("eval.horizons", toml::Value::Array(list))?;
    }
    if c.otc {
        set("eval.otc", toml::Value::Boolean(true))?;
    }
    if let Some(p) = &c.presets {
        let list = p.split(',').map(|x| toml::Value::String(x.trim().to_ascii_uppercase())).collect();
        set("eval.presets", toml::Value::Array(list))?;
    }
    Ok(layers)
}

fn load_config(c: &Common, env: &[(String, String)]) -> Result<ExperimentConfig, Failure> {
    let profile: Profile = c.profile.parse()?;
    let text = match &c.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?),
        None => None,
    };
    let mut layers = env_overrides(env)?;
    for s in &c.overrides {
        layers.push(parse_set(s)?);
    }
    layers.extend(flag_layers(c)?);
    Ok(resolve(profile, text.as_deref(), layers)?)
}

fn execute(cli: &Cli, env: &[(String, String)]) -> Result<(), Failure> {
    let cfg = load_config(&cli.common, env)?;
    if cli.common.workers == 0 {
        return Err(Failure::Config("--workers must be >= 1".into()));
    }
    let out = cli.common.out.clone().unwrap_or_else(|| match cli.verb {
        Verb::Synth => cfg.data.root.clone(),
        _ => PathBuf::from("runs"),
    });
    fs::create_dir_all(&out).map_err(|e| Failure::Runtime(Error::io(&out, e).to_string()))?;
    let canonical = cfg.to_toml()?;
    write_text(&out.join(RESOLVED_CONFIG), &canonical)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.workers)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    pool.install(|| match &cli.verb {
        Verb::Synth => synth(&cfg, &out),
        Verb::Train => train(&cfg, &out),
        Verb::Eval { checkpoint } => eval(&cfg, &out, checkpoint.as_deref(), &canonical),
        Verb::Kfold => kfold(&cfg, &out, &canonical),
        Verb::Ablate => ablate(&cfg, &out, &canonical),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(Error::io(path, e).to_string()))
}

fn synth(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let opts = SynthOptions {
        size: cfg.data.synth_size,
        ..SynthOptions::new(cfg.data.synth_clips, cfg.data.seed)
    };
    let m = generate_synthetic(opts, out)?;
    println!("wrote {} clips to {}", m.len(), out.join(MANIFEST_FILE).display());
    Ok(())
}

fn manifest(cfg: &ExperimentConfig) -> Result<DatasetManifest, Failure> {
    Ok(DatasetManifest::read(cfg.data.root.join(MANIFEST_FILE))?)
}

fn load(cfg: &ExperimentConfig, m: &DatasetManifest) -> Result<Vec<Clip>, Failure> {
    let branches = cfg.model.scenario.active_branches();
    m.require(&branches)?;
    Ok(m.load_all(&branches)?)
}

fn split(cfg: &ExperimentConfig) -> Result<(Vec<Clip>, Vec<Clip>), Failure> {
    let (tr, te) = holdout_split(&manifest(cfg)?, cfg.data.split_ratio, cfg.data.seed)?;
    Ok((load(cfg, &tr)?, load(cfg, &te)?))
}

fn train(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let (train, _) = split(cfg)?;
    let tc = cfg.train_config();
    let outcome = train_clips(&train, &tc, None)?;
    save_outcome(&outcome, &tc, out)?;
    let last = outcome.history.records.last();
    println!(
        "trained {} epochs on {} clips, final loss {:.4}, checkpoint {}",
        outcome.history.len(),
        train.len(),
        last.map_or(f64::NAN, |r| r.loss),
        out.join(FINAL_CHECKPOINT).display()
    );
    Ok(())
}

fn horizons(cfg: &ExperimentConfig) -> Vec<HorizonSpec> {
    cfg.eval.horizons.clone()
}

fn otc_settings(cfg: &ExperimentConfig) -> Option<OtcSettings> {
    cfg.eval.otc.then_some(OtcSettings {
        cutout_fraction: cfg.augment.cutout_fraction,
        seed: cfg.train.seed,
    })
}

fn base_report(cfg: &ExperimentConfig, canonical: &str) -> Report {
    Report {
        schema_version: SCHEMA_VERSION,
        config_hash: config_hash(canonical),
        scenario: cfg.model.scenario,
        method: if cfg.eval.otc { METHOD_OTC } else { METHOD_PLAIN }.to_string(),
        horizons: Vec::new(),
        kfold: None,
        ablation: None,
    }
}

fn emit(cfg: &ExperimentConfig, report: &Report, out: &Path) -> Result<(), Failure> {
    let written = emit_report(report, out, &cfg.formats()?)?;
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn eval(cfg: &ExperimentConfig, out: &Path, checkpoint: Option<&Path>, canonical: &str) -> Result<(), Failure> {
    let default_name = if cfg.eval.checkpoint == "best" { BEST_CHECKPOINT } else { FINAL_CHECKPOINT };
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| out.join(default_name));
    let (model, _) = load_checkpoint(&ckpt, None, None)?;
    if model.scenario() != cfg.model.scenario {
        return Err(Failure::Config(format!(
            "checkpoint scenario {} does not match model.scenario {}",
            model.scenario(),
            cfg.model.scenario
        )));
    }
    let (_, test) = split(cfg)?;
    let mut report = base_report(cfg, canonical);
    report.horizons = horizon_eval(&model, &test, &horizons(cfg), otc_settings(cfg))?;
    emit(cfg, &report, out)
}

fn kfold(cfg: &ExperimentConfig, out: &Path, canonical: &str) -> Result<(), Failure> {
    let m = manifest(cfg)?;
    let clips = load(cfg, &m)?;
    let k = kfold_run(&m, &clips, cfg.data.k_folds, cfg.data.seed, &cfg.train_config(), &horizons(cfg), otc_settings(cfg))?;
    let mut report = base_report(cfg, canonical);
    report.kfold = Some(k);
    emit(cfg, &report, out)
}

fn ablate(cfg: &ExperimentConfig, out: &Path, canonical: &str) -> Result<(), Failure> {
    let (train, test) = split(cfg)?;
    let a = ablation_run(&train, &test, &cfg.eval.presets, &cfg.train_config(), &horizons(cfg))?;
    let mut report = base_report(cfg, canonical);
    report.method = METHOD_PLAIN.to_string();
    report.ablation = Some(a);
    emit(cfg, &report, out)
}
