use std::path::Path;

use crossreg_core::seed::derive_seed;
use crossreg_core::synth::make_cross_source_pair;
use crossreg_core::{io, Error};

use crate::config::{RunConfig, STREAM_DEGRADE_A, STREAM_DEGRADE_B};

/// Generate the scene, degrade it twice, and write `cloud_a.xyz`,
/// `cloud_b.xyz`, and `ground_truth.txt`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let spec = cfg.scene.to_spec(cfg.seed);
    let (a, b, gt) = make_cross_source_pair(
        &spec,
        &cfg.degrade_a,
        &cfg.degrade_b,
        derive_seed(cfg.seed, STREAM_DEGRADE_A),
        derive_seed(cfg.seed, STREAM_DEGRADE_B),
    )?;
    io::save_xyz(&a, &out.join("cloud_a.xyz"))?;
    io::save_xyz(&b, &out.join("cloud_b.xyz"))?;
    io::save_transform(&gt, &out.join("ground_truth.txt"))?;
    eprintln!(
        "synth: wrote cloud_a ({} pts), cloud_b ({} pts), ground_truth",
        a.len(),
        b.len()
    );
    Ok(())
}
