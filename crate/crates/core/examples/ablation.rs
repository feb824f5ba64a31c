//! Turn off one component at a time and compare road-label probes.

use trajfuse::eval::{evaluate, EvalSplit, ROAD_LABEL, TRAVEL_TIME};
use trajfuse::model::Ablations;
use trajfuse::pipeline::{generate_city, prepare_dataset, pretrain, GenConfig, PrepConfig, TrainConfig};

fn main() -> anyhow::Result<()> {
    let gen = GenConfig {
        rows: 14,
        cols: 14,
        trajectories: 400,
        ..GenConfig::default()
    };
    let ds = prepare_dataset(&generate_city(&gen, 3)?, &PrepConfig::default(), 3)?;
    let mut base = TrainConfig::default();
    base.apply_text("d=16\nheads=2\ndepth=1\nfusion_depth=1\nepochs=3\nbatch_size=16\n")?;

    println!("{:<16} {:>12} {:>12}", "variant", "road F1", "travel MAE");
    for name in ["full", "no_inter_modal", "no_grid_view", "no_align_loss", "no_mlm_loss"] {
        let cfg = TrainConfig {
            ablations: Ablations::by_name(name).expect("known variant"),
            ..base
        };
        let pre = pretrain(&cfg, &ds)?;
        let r = evaluate(&pre, &ds, EvalSplit::Test)?.report;
        let f1 = r.metric(ROAD_LABEL, "micro_f1").unwrap_or(f64::NAN);
        let mae = r.metric(TRAVEL_TIME, "mae").unwrap_or(f64::NAN);
        println!("{name:<16} {f1:>12.4} {mae:>12.2}");
    }
    Ok(())
}
