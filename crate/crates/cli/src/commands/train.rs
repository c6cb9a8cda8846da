use std::path::Path;

use crossreg_core::net::{save_weights, train, NetWeights, PairSample};
use crossreg_core::sampler::read_dataset;
use crossreg_core::seed::derive_seed;
use crossreg_core::tdf::voxelize_tdf;
use crossreg_core::{Error, Result};
use rayon::prelude::*;

use crate::config::{RunConfig, STREAM_NET_INIT};

/// Voxelize a dataset, train the network, and write `weights.bin` plus
/// `loss_history.csv`.
pub fn run(cfg: &RunConfig, out: &Path, dataset: &Path) -> Result<()> {
    let entries = read_dataset(dataset)?;
    if entries.is_empty() {
        return Err(Error::InvalidInput(format!(
            "dataset {} holds no pairs",
            dataset.display()
        )));
    }
    let net_cfg = cfg.net.resolve()?;
    eprintln!(
        "train: voxelizing {} pairs into {}^3 TDF grids",
        entries.len(),
        net_cfg.input_dim
    );
    let samples: Result<Vec<PairSample>> = entries
        .par_iter()
        .map(|e| {
            let a = voxelize_tdf(&e.points_a, net_cfg.input_dim, cfg.tdf.truncation_voxels)?;
            let b = voxelize_tdf(&e.points_b, net_cfg.input_dim, cfg.tdf.truncation_voxels)?;
            Ok(PairSample::from_grids(&a, &b, e.label))
        })
        .collect();
    let samples = samples?;

    let weights = NetWeights::init(&net_cfg, derive_seed(cfg.seed, STREAM_NET_INIT))?;
    eprintln!(
        "train: {} parameters, {} epochs, batch {}, lr {}",
        weights.parameter_count(),
        cfg.train.epochs,
        cfg.train.batch_size,
        cfg.train.learning_rate
    );
    let (trained, history) = train(weights, &samples, &cfg.train)?;
    for e in &history.epochs {
        eprintln!(
            "train: epoch {} mean_loss {:.6} pos_dist {:.4} neg_dist {:.4}",
            e.epoch, e.mean_loss, e.pos_mean_dist, e.neg_mean_dist
        );
    }
    save_weights(&trained, &out.join("weights.bin"))?;
    history.write_csv(&out.join("loss_history.csv"))?;
    eprintln!("train: wrote weights.bin and loss_history.csv");
    Ok(())
}
