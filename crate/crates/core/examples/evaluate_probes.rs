//! Frozen-embedding probes on the four downstream tasks, next to a random-weight control.

use trajfuse::eval::{evaluate, EvalSplit};
use trajfuse::pipeline::{generate_city, prepare_dataset, pretrain, GenConfig, PrepConfig, TrainConfig};

fn main() -> anyhow::Result<()> {
    let gen = GenConfig {
        rows: 16,
        cols: 16,
        trajectories: 600,
        ..GenConfig::default()
    };
    let ds = prepare_dataset(&generate_city(&gen, 11)?, &PrepConfig::default(), 11)?;
    let mut cfg = TrainConfig::default();
    cfg.apply_text("d=16\nheads=2\ndepth=1\nfusion_depth=1\nepochs=4\nbatch_size=16\n")?;
    let pre = pretrain(&cfg, &ds)?;

    let ev = evaluate(&pre, &ds, EvalSplit::Test)?;
    for (task, res) in &ev.report.tasks {
        println!("{task}");
        for (name, value) in &res.metrics {
            let ctrl = ev.report.control_metric(task, name).map_or(String::new(), |c| format!("(control {c:.4})"));
            println!("  {name:<15} {value:.4} {ctrl}");
        }
    }
    println!("{} per-item predictions", ev.predictions.len());
    Ok(())
}
