//! Flat `key = value` configuration files with `#` comments.

use std::path::Path;

use crate::error::{Error, Result};
use crate::interaction::FrameDims;
use crate::tracker::TrackerConfig;

/// Splits a config text into `(line, key, value)` triples.
pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg: format!("expected `key = value`, found `{line}`"),
        })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Applies one setting to `cfg`.
pub fn set_tracker_param(cfg: &mut TrackerConfig, key: &str, value: &str) -> Result<()> {
    let num = || -> Result<f64> {
        value
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{value}`")))
    };
    match key {
        "high_thresh" => cfg.high_thresh = num()?,
        "low_thresh" => cfg.low_thresh = num()?,
        "iou_reject" => cfg.iou_reject = num()?,
        "init_score" => cfg.init_score = num()?,
        "refind_thresh" => cfg.refind_thresh = num()?,
        "mask_xi" => cfg.mask_xi = num()?,
        "max_lost_age" => {
            cfg.max_lost_age = value
                .parse::<u32>()
                .map_err(|_| Error::Config(format!("`max_lost_age` expects a frame count, got `{value}`")))?
        }
        "mode" => cfg.mode = value.parse()?,
        "frame_width" => cfg.dims = FrameDims::new(num()?, cfg.dims.height),
        "frame_height" => cfg.dims = FrameDims::new(cfg.dims.width, num()?),
        other => return Err(Error::UnknownParam(other.to_string())),
    }
    Ok(())
}

/// Defaults overridden by the file's settings, validated.
pub fn parse_tracker_config(text: &str, origin: &str) -> Result<TrackerConfig> {
    let mut cfg = TrackerConfig::default();
    for (line, k, v) in parse_pairs(text, origin)? {
        set_tracker_param(&mut cfg, &k, &v).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line,
            msg: e.to_string(),
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_tracker_config(path: impl AsRef<Path>) -> Result<TrackerConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tracker_config(&text, &path.display().to_string())
}

pub fn tracker_config_string(cfg: &TrackerConfig) -> String {
    format!(
        "mode = {}\nhigh_thresh = {}\nlow_thresh = {}\niou_reject = {}\ninit_score = {}\n\
         max_lost_age = {}\nrefind_thresh = {}\nmask_xi = {}\nframe_width = {}\nframe_height = {}\n",
        cfg.mode,
        cfg.high_thresh,
        cfg.low_thresh,
        cfg.iou_reject,
        cfg.init_score,
        cfg.max_lost_age,
        cfg.refind_thresh,
        cfg.mask_xi,
        cfg.dims.width,
        cfg.dims.height
    )
}
