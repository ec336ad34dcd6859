//! On-disk layout of a rendered scene.
//!
//! ```text
//! <dir>/frame_<m>.png  mask_<m>.png  flow_<m>.flo  joints_<m>.csv
//! <dir>/background.png  manifest.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DefenceError, Result};
use crate::imgcore::io::{save_flo, save_image, save_mask};
use crate::imgcore::Image;
use crate::synthbench::{GroundTruth, SceneSpec};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub spec: SceneSpec,
    pub seed: u64,
    pub frames: Vec<String>,
    pub masks: Vec<String>,
    pub flows: Vec<String>,
    pub joints: Vec<String>,
    pub background: String,
}

pub fn write_joints_csv(path: impl AsRef<Path>, joints: &[(f64, f64)]) -> Result<()> {
    let mut s = String::from("x,y\n");
    for (x, y) in joints {
        s.push_str(&format!("{x},{y}\n"));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Reads `x,y` lines; a non-numeric first line is taken as a header.
pub fn read_joints_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split(',').map(str::trim);
        let parsed = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some(p) => out.push(p),
            None if n == 0 => continue,
            None => {
                return Err(DefenceError::Format(format!(
                    "joints line {}: {line:?}",
                    n + 1
                )))
            }
        }
    }
    Ok(out)
}

pub fn write_scene(
    dir: impl AsRef<Path>,
    spec: &SceneSpec,
    frames: &[Image<f64>],
    gt: &GroundTruth,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let name = |stem: &str, m: usize, ext: &str| format!("{stem}_{m}.{ext}");
    let mut manifest = Manifest {
        spec: spec.clone(),
        seed: gt.seed,
        frames: vec![],
        masks: vec![],
        flows: vec![],
        joints: vec![],
        background: "background.png".into(),
    };
    for (m, frame) in frames.iter().enumerate() {
        let f = name("frame", m, "png");
        save_image(frame, dir.join(&f))?;
        manifest.frames.push(f);
        let f = name("mask", m, "png");
        save_mask(&gt.masks[m], dir.join(&f))?;
        manifest.masks.push(f);
        let f = name("flow", m, "flo");
        save_flo(&gt.flows[m], dir.join(&f))?;
        manifest.flows.push(f);
        let f = name("joints", m, "csv");
        write_joints_csv(dir.join(&f), &gt.joints[m])?;
        manifest.joints.push(f);
    }
    save_image(&gt.background, dir.join(&manifest.background))?;
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(
        dir.as_ref().join("manifest.json"),
    )?)?)
}

pub fn scene_path(dir: impl AsRef<Path>, file: &str) -> PathBuf {
    dir.as_ref().join(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joints_csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.csv");
        let pts = vec![(1.5, 2.0), (100.0, 0.25)];
        write_joints_csv(&p, &pts).unwrap();
        assert_eq!(read_joints_csv(&p).unwrap(), pts);
        fs::write(&p, "3,4\n5,x\n").unwrap();
        assert!(read_joints_csv(&p).is_err());
    }
}
