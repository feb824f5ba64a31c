//! Static segment vectors and trajectory vectors under the three input modes.

use trajfuse::model::InputMode;
use trajfuse::pipeline::{
    export_static_segment_embeddings, export_trajectory_embeddings, generate_city, prepare_dataset, pretrain,
    write_embeddings_csv, GenConfig, PrepConfig, TrainConfig,
};

fn main() -> anyhow::Result<()> {
    let gen = GenConfig {
        rows: 14,
        cols: 14,
        trajectories: 300,
        ..GenConfig::default()
    };
    let ds = prepare_dataset(&generate_city(&gen, 5)?, &PrepConfig::default(), 5)?;
    let mut cfg = TrainConfig::default();
    cfg.apply_text("d=16\nheads=2\ndepth=1\nfusion_depth=1\nepochs=2\nbatch_size=16\n")?;
    let pre = pretrain(&cfg, &ds)?;
    let all: Vec<_> = ds.samples.iter().collect();

    let seg = export_static_segment_embeddings(&pre.model, &pre.store, &pre.featurizer, &all)?;
    let (id, v) = seg.iter().next().expect("at least one segment");
    println!("{} segment vectors of width {}; segment {id}: {:.3?}..", seg.len(), v.len(), &v[..4]);

    let out = std::env::temp_dir().join("trajfuse-export");
    write_embeddings_csv(&out.join("segments.csv"), &seg)?;
    for mode in [InputMode::Full, InputMode::TimeMasked, InputMode::DestinationTruncated] {
        let t = export_trajectory_embeddings(&pre.model, &pre.store, &pre.featurizer, &all, mode)?;
        let width = t.vectors.values().next().map_or(0, |v| v.len());
        println!("{mode:?}: {} trajectories of width {width}, {} skipped", t.vectors.len(), t.skipped);
        write_embeddings_csv(&out.join(format!("{mode:?}.csv").to_lowercase()), &t.vectors)?;
    }
    println!("tables written to {}", out.display());
    Ok(())
}
