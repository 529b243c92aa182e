//! CLI command implementations. Each submodule owns one subcommand's
//! argument struct and its `run` function; everything returns the crate
//! `Result` so `main` can emit one JSON error line per failure.

pub mod align;
pub mod entropy;
pub mod nms;
pub mod pad;
pub mod project;
pub mod synth;
pub mod tokenmap;
pub mod train;

use projlens_core::alignment::ThresholdStrategy;
use projlens_core::mask_geom::PatchGrid;

use crate::error::{CliError, Result};

/// Parses `HxWxP` (grid rows x grid cols x patch pixels), e.g. `24x24x14`.
pub fn parse_grid(s: &str) -> Result<PatchGrid> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 3 {
        return Err(CliError::InvalidFlag(format!(
            "--grid takes HxWxP (e.g. 24x24x14), got {s:?}"
        )));
    }
    let mut dims = [0usize; 3];
    for (d, p) in dims.iter_mut().zip(&parts) {
        *d = p
            .parse()
            .map_err(|_| CliError::InvalidFlag(format!("bad grid component {p:?} in {s:?}")))?;
    }
    Ok(PatchGrid::new(dims[0], dims[1], dims[2])?)
}

/// Parses `mean_std:A`, `quantile:Q`, or `fixed:C`.
pub fn parse_threshold(s: &str) -> Result<ThresholdStrategy> {
    let (name, value) = s.split_once(':').ok_or_else(|| {
        CliError::InvalidFlag(format!(
            "--threshold takes mean_std:A, quantile:Q, or fixed:C, got {s:?}"
        ))
    })?;
    let value: f64 = value
        .parse()
        .map_err(|_| CliError::InvalidFlag(format!("bad threshold value in {s:?}")))?;
    match name {
        "mean_std" => Ok(ThresholdStrategy::MeanPlusStd(value)),
        "quantile" => Ok(ThresholdStrategy::Quantile(value)),
        "fixed" => Ok(ThresholdStrategy::Fixed(value)),
        other => Err(CliError::InvalidFlag(format!(
            "unknown threshold strategy {other:?}"
        ))),
    }
}

/// Renders a strategy back into flag syntax (for manifests).
pub fn threshold_to_string(t: ThresholdStrategy) -> String {
    match t {
        ThresholdStrategy::MeanPlusStd(a) => format!("mean_std:{a}"),
        ThresholdStrategy::Quantile(q) => format!("quantile:{q}"),
        ThresholdStrategy::Fixed(c) => format!("fixed:{c}"),
    }
}

/// Runs `f` inside a rayon pool sized by PROJLENS_THREADS when set;
/// otherwise on the default global pool.
pub fn with_worker_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var("PROJLENS_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok());
    match cap {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("worker pool")
            .install(f),
        _ => f(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("24x24x14").unwrap();
        assert_eq!((g.grid_h, g.grid_w, g.patch_px), (24, 24, 14));
        assert!(parse_grid("24x24").is_err());
        assert!(parse_grid("ax2x3").is_err());
        assert!(parse_grid("0x2x3").is_err());
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!(
            parse_threshold("mean_std:1.0").unwrap(),
            ThresholdStrategy::MeanPlusStd(1.0)
        );
        assert_eq!(
            parse_threshold("quantile:0.9").unwrap(),
            ThresholdStrategy::Quantile(0.9)
        );
        assert_eq!(
            parse_threshold("fixed:0.3").unwrap(),
            ThresholdStrategy::Fixed(0.3)
        );
        assert!(parse_threshold("topk:3").is_err());
        assert!(parse_threshold("fixed").is_err());
    }
}
