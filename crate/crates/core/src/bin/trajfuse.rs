use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use trajfuse::eval::{self, EvalSplit, ROAD_LABEL};
use trajfuse::model::{Ablations, InputMode};
use trajfuse::pipeline::{
    export_static_segment_embeddings, export_trajectory_embeddings, generate_city, prepare_dataset, pretrain,
    write_embeddings_csv, City, Dataset, GenConfig, PrepConfig, Pretrained, TrainConfig,
};

#[derive(Parser)]
#[command(name = "trajfuse", about = "Multi-view trajectory pretraining on a synthetic city")]
struct Cli {
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct DataArgs {
    /// Directory written by `gen`.
    #[arg(long)]
    city: PathBuf,
    /// Directory written by `prep`.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// File of `key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a road network, POIs and GPS trajectories.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Map-match, derive grid views, filter and split.
    Prep {
        #[arg(long)]
        city: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Self-supervised pretraining; writes model.ckpt and metrics.csv.
    Pretrain {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Static segment and trajectory embedding tables as CSV.
    Export {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Frozen probes plus the random control; writes report.json and predictions.csv.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain and probe each ablation variant.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, value_delimiter = ',', default_value = "full,no_inter_modal,no_align_loss,no_mlm_loss")]
        variants: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn train_config(args: &TrainArgs, seed: u64) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    cfg.seed = seed;
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for kv in &args.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("expected KEY=VALUE, got `{kv}`"))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_dataset(d: &DataArgs) -> Result<Dataset> {
    Dataset::load(&d.city, &d.data).with_context(|| format!("loading dataset from {}", d.data.display()))
}

fn load_checkpoint(path: &Path) -> Result<Pretrained> {
    Pretrained::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn run_eval(pre: &Pretrained, ds: &Dataset, out: &Path) -> Result<eval::EvalReport> {
    let ev = eval::evaluate(pre, ds, EvalSplit::Test)?;
    ev.report.write_json(&out.join("report.json"))?;
    eval::write_predictions_csv(&out.join("predictions.csv"), &ev.predictions)?;
    Ok(ev.report)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Gen {
            out,
            trajectories,
            rows,
            cols,
            noise,
        } => {
            let mut cfg = GenConfig::default();
            cfg.trajectories = trajectories.unwrap_or(cfg.trajectories);
            cfg.rows = rows.unwrap_or(cfg.rows);
            cfg.cols = cols.unwrap_or(cfg.cols);
            cfg.noise_sigma = noise.unwrap_or(cfg.noise_sigma);
            let city = generate_city(&cfg, cli.seed)?;
            city.save(&out)?;
            log::info!(
                "{} segments, {} POIs, {} trajectories -> {}",
                city.network.len(),
                city.pois.len(),
                city.trips.len(),
                out.display()
            );
        }
        Cmd::Prep { city, out } => {
            let c = City::load(&city)?;
            let ds = prepare_dataset(&c, &PrepConfig::default(), cli.seed)?;
            ds.save(&out)?;
            log::info!(
                "kept {} (train {}, val {}, test {}), rejected {:?}",
                ds.samples.len(),
                ds.split.train.len(),
                ds.split.val.len(),
                ds.split.test.len(),
                ds.meta.rejected
            );
        }
        Cmd::Pretrain { data, train, out } => {
            let cfg = train_config(&train, cli.seed)?;
            let ds = load_dataset(&data)?;
            let pre = pretrain(&cfg, &ds)?;
            std::fs::create_dir_all(&out)?;
            pre.save(&out.join("model.ckpt"))?;
            pre.log.write_csv(&out.join("metrics.csv"))?;
            std::fs::write(out.join("config.txt"), cfg.to_text())?;
            log::info!("best epoch {} -> {}", pre.best_epoch, out.display());
        }
        Cmd::Export { data, checkpoint, out } => {
            let ds = load_dataset(&data)?;
            let pre = load_checkpoint(&checkpoint)?;
            let all: Vec<_> = ds.samples.iter().collect();
            let f = &pre.featurizer;
            let seg = export_static_segment_embeddings(&pre.model, &pre.store, f, &all)?;
            write_embeddings_csv(&out.join("segments.csv"), &seg)?;
            for (mode, name) in [
                (InputMode::Full, "trajectories_full.csv"),
                (InputMode::TimeMasked, "trajectories_time_masked.csv"),
                (InputMode::DestinationTruncated, "trajectories_destination_truncated.csv"),
            ] {
                let t = export_trajectory_embeddings(&pre.model, &pre.store, f, &all, mode)?;
                write_embeddings_csv(&out.join(name), &t.vectors)?;
            }
            log::info!("{} segment vectors -> {}", seg.len(), out.display());
        }
        Cmd::Eval { data, checkpoint, out } => {
            let ds = load_dataset(&data)?;
            let pre = load_checkpoint(&checkpoint)?;
            let report = run_eval(&pre, &ds, &out)?;
            println!("{}", serde_json::to_string_pretty(&report.tasks)?);
        }
        Cmd::Ablate {
            data,
            train,
            variants,
            out,
        } => {
            let base = train_config(&train, cli.seed)?;
            let ds = load_dataset(&data)?;
            let mut summary = BTreeMap::new();
            for name in &variants {
                let Some(ablations) = Ablations::by_name(name) else {
                    bail!("unknown variant `{name}`");
                };
                let cfg = TrainConfig { ablations, ..base };
                let pre = pretrain(&cfg, &ds)?;
                let dir = out.join(name);
                pre.log.write_csv(&dir.join("metrics.csv"))?;
                let report = run_eval(&pre, &ds, &dir)?;
                let f1 = report.metric(ROAD_LABEL, "micro_f1").unwrap_or(f64::NAN);
                log::info!("{name}: road-label micro-F1 {f1:.4}");
                summary.insert(name.clone(), report.tasks);
            }
            std::fs::write(out.join("ablation.json"), serde_json::to_string_pretty(&summary)?)?;
        }
    }
    Ok(())
}
