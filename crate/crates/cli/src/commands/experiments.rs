use std::path::Path;

use crossreg_core::eval::{compare_experiments, write_experiments_csv};
use crossreg_core::net::{load_weights, NetWeights};
use crossreg_core::seed::derive_seed;
use crossreg_core::Error;

use crate::config::{RunConfig, STREAM_NET_INIT};

/// Run the four experiment analogues over the given weight variants and
/// write `experiments.csv`.
pub fn run(
    cfg: &RunConfig,
    out: &Path,
    trained: &Path,
    untrained: Option<&Path>,
    ablated: Option<&Path>,
) -> Result<(), Error> {
    let mut variants = vec![("trained".to_string(), load_weights(trained)?)];
    let baseline = match untrained {
        Some(path) => load_weights(path)?,
        // Same init stream the train command starts from.
        None => NetWeights::init(&cfg.net.resolve()?, derive_seed(cfg.seed, STREAM_NET_INIT))?,
    };
    variants.push(("untrained".to_string(), baseline));
    if let Some(path) = ablated {
        variants.push(("ablated".to_string(), load_weights(path)?));
    }

    let spec = cfg.scene.to_spec(cfg.seed);
    let rows = compare_experiments(&spec, &variants, &cfg.experiments, &cfg.register)?;
    write_experiments_csv(&rows, &out.join("experiments.csv"))?;
    for r in &rows {
        eprintln!(
            "experiments: {} / {} -> overlap {:.4}",
            r.experiment, r.method, r.overlap_ratio
        );
    }
    Ok(())
}
