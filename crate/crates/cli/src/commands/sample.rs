use std::path::Path;

use crossreg_core::sampler::{augment, sample_pairs, write_dataset, PairLabel, TrainingPair};
use crossreg_core::seed::derive_seed;
use crossreg_core::{io, Error};

use crate::config::{RunConfig, STREAM_AUGMENT, STREAM_SAMPLE};

/// Align cloud B onto A with the ground truth, sample training pairs, and
/// write the dataset directory.
pub fn run(
    cfg: &RunConfig,
    out: &Path,
    cloud_a: &Path,
    cloud_b: &Path,
    ground_truth: &Path,
) -> Result<(), Error> {
    let a = io::load_cloud(cloud_a)?;
    let b = io::load_cloud(cloud_b)?;
    let gt = io::load_transform(ground_truth)?;
    let b_aligned = gt.inverse().apply_cloud(&b);

    let outcome = sample_pairs(
        &a,
        &b_aligned,
        &cfg.sampler.config,
        derive_seed(cfg.seed, STREAM_SAMPLE),
    )?;
    if outcome.partial {
        eprintln!(
            "sample: warning: attempt budget exhausted ({} attempts, {} discarded, \
             {} negatives unplaced, {} impossible)",
            outcome.warnings.attempts_used,
            outcome.warnings.discarded_candidates,
            outcome.warnings.exhausted_negatives,
            outcome.warnings.impossible_negatives,
        );
    }
    let balanced = balance(outcome.pairs);
    let pairs = if cfg.sampler.augment {
        augment(&balanced, cfg.sampler.augment_axis, derive_seed(cfg.seed, STREAM_AUGMENT))
    } else {
        balanced
    };

    let dataset = out.join("dataset");
    write_dataset(&dataset, &pairs)?;
    let pos = pairs.iter().filter(|p| p.label.is_positive()).count();
    eprintln!(
        "sample: wrote {} pairs ({} positive, {} negative) to {}",
        pairs.len(),
        pos,
        pairs.len() - pos,
        dataset.display()
    );
    Ok(())
}

/// Truncate to equal positive/negative counts, preserving emission order.
fn balance(pairs: Vec<TrainingPair>) -> Vec<TrainingPair> {
    let pos = pairs.iter().filter(|p| p.label.is_positive()).count();
    let neg = pairs.len() - pos;
    let quota = pos.min(neg);
    if pos == neg {
        return pairs;
    }
    eprintln!("sample: warning: truncating to {quota}+{quota} pairs for balance");
    let mut kept_pos = 0usize;
    let mut kept_neg = 0usize;
    pairs
        .into_iter()
        .filter(|p| match p.label {
            PairLabel::Positive => {
                kept_pos += 1;
                kept_pos <= quota
            }
            PairLabel::Negative => {
                kept_neg += 1;
                kept_neg <= quota
            }
        })
        .collect()
}
