use std::path::Path;

use crossreg_core::eval::{rotation_shift_sweep, rotation_sweep, shift_sweep};
use crossreg_core::net::load_weights;
use crossreg_core::{io, Error};

use crate::config::RunConfig;
use crate::SweepKind;

/// Run the requested recall sweep and write its CSV.
pub fn run(
    cfg: &RunConfig,
    out: &Path,
    kind: SweepKind,
    cloud: &Path,
    weights: &Path,
) -> Result<(), Error> {
    let cloud = io::load_cloud(cloud)?;
    let net = load_weights(weights)?;
    let params = cfg.sweep;
    let (curve, path, column) = match kind {
        SweepKind::Rotation => (
            rotation_sweep(&cloud, &net, &params)?,
            out.join("rotation_sweep.csv"),
            "angle_deg",
        ),
        SweepKind::Shift => (
            shift_sweep(&cloud, &net, &params)?,
            out.join("shift_sweep.csv"),
            "shift_pct",
        ),
        SweepKind::Both => (
            rotation_shift_sweep(&cloud, &net, &params)?,
            out.join("rotation_shift_sweep.csv"),
            "angle_deg",
        ),
    };
    curve.write_csv(&path, column)?;
    let recall = curve.recall();
    eprintln!(
        "sweep: {} steps, recall first {:.3} mean {:.3}",
        curve.len(),
        recall.first().copied().unwrap_or(f64::NAN),
        recall.iter().sum::<f64>() / recall.len().max(1) as f64
    );
    Ok(())
}
