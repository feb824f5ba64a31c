//! Pretrain a small model, save it and load it back.

use trajfuse::eval::cross_view_cosine_gap;
use trajfuse::pipeline::{generate_city, prepare_dataset, pretrain, GenConfig, PrepConfig, Pretrained, TrainConfig};

fn main() -> anyhow::Result<()> {
    let gen = GenConfig {
        rows: 14,
        cols: 14,
        trajectories: 400,
        ..GenConfig::default()
    };
    let ds = prepare_dataset(&generate_city(&gen, 7)?, &PrepConfig::default(), 7)?;

    let mut cfg = TrainConfig::default();
    cfg.apply_text("d = 16\nheads = 2\ndepth = 1\nfusion_depth = 1\nepochs = 4\nbatch_size = 16\n")?;
    cfg.seed = 7;
    let pre = pretrain(&cfg, &ds)?;
    for r in pre.log.rows.iter().filter(|r| r.kind != "step") {
        println!("{:>11} epoch {}: align {:.3}  mlm {:.3}  total {:.3}", r.kind, r.epoch, r.align, r.mlm, r.total);
    }
    println!("best epoch {} after {} optimizer steps", pre.best_epoch, pre.optimizer.step);

    let gap = cross_view_cosine_gap(&pre.model, &pre.store, &pre.featurizer, &ds.val(), 32)?;
    println!("route/GPS cosine: matched {:.3}, mismatched {:.3}", gap.positive, gap.negative);

    let path = std::env::temp_dir().join("trajfuse-example.ckpt");
    pre.save(&path)?;
    let back = Pretrained::load(&path)?;
    println!("reloaded d={} model from {}", back.config.model.d, path.display());
    Ok(())
}
