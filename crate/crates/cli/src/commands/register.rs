use std::fmt::Write as _;
use std::path::Path;

use crossreg_core::net::load_weights;
use crossreg_core::register::register;
use crossreg_core::{io, Error};

use crate::config::RunConfig;

/// Register target onto source; writes `transform.txt`, `inliers.csv`,
/// `aligned.xyz`, and `summary.txt`, and prints the one-line summary.
pub fn run(
    cfg: &RunConfig,
    out: &Path,
    source: &Path,
    target: &Path,
    weights: &Path,
) -> Result<(), Error> {
    let source_cloud = io::load_cloud(source)?;
    let target_cloud = io::load_cloud(target)?;
    let net = load_weights(weights)?;

    let result = register(&source_cloud, &target_cloud, &net, &cfg.register)?;

    io::save_transform(&result.transform, &out.join("transform.txt"))?;

    let mut inliers = String::from("source,target,descriptor_distance\n");
    for &k in &result.inliers {
        let c = &result.correspondences[k];
        writeln!(inliers, "{},{},{}", c.source, c.target, c.distance).expect("string write");
    }
    let inliers_path = out.join("inliers.csv");
    std::fs::write(&inliers_path, inliers).map_err(|e| Error::Io {
        path: inliers_path,
        source: e,
    })?;

    let aligned = result.transform.apply_cloud(&target_cloud);
    io::save_xyz(&aligned, &out.join("aligned.xyz"))?;

    let summary = format!(
        "overlap_ratio={} inlier_count={} scale_factor={}",
        result.overlap.ratio,
        result.inliers.len(),
        result.scale_factor
    );
    let summary_path = out.join("summary.txt");
    std::fs::write(&summary_path, format!("{summary}\n")).map_err(|e| Error::Io {
        path: summary_path,
        source: e,
    })?;
    println!("{summary}");
    eprintln!(
        "register: {} source / {} target control points, {} correspondences, {} inliers",
        result.source_control_points,
        result.target_control_points,
        result.correspondences.len(),
        result.inliers.len()
    );
    Ok(())
}
