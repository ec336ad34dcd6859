//! Pipeline configuration: defaults, then a JSON file, then dotted flags.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use defence::fenceseg::training::SampleParams;
use defence::fenceseg::{SegmentConfig, TrainParams};
use defence::fusion::FistaParams;
use defence::occflow::FlowParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub sample: SampleParams,
    pub fit: TrainParams,
    /// Scenes rendered when `train-classifier` gets no labelled scenes.
    pub synthetic_scenes: usize,
    pub scene_seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            sample: SampleParams::default(),
            fit: TrainParams::default(),
            synthetic_scenes: 6,
            scene_seed: 1000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    /// Detector model written by `train-classifier`.
    pub model: Option<String>,
    /// Output image of `run`.
    pub output: Option<String>,
    /// Directory for intermediates when they are kept.
    pub intermediates: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub segment: SegmentConfig,
    pub flow: FlowParams,
    pub fista: FistaParams,
    pub training: TrainingConfig,
    /// Reference frame index; the middle frame when absent.
    pub reference: Option<usize>,
    pub io: IoConfig,
}

/// Short flags and the keys they set.
pub const ALIASES: [(&str, &str); 4] = [
    ("lambda", "fista.lambda"),
    ("stride", "segment.stride"),
    ("tau", "segment.tau"),
    ("mu", "flow.mu"),
];

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let section =
            |name: &str, r: defence::Result<()>| r.map_err(|e| anyhow!("config `{name}`: {e}"));
        section("segment", self.segment.validate())?;
        section("flow", self.flow.validate())?;
        section("fista", self.fista.validate())?;
        section("training.sample", self.training.sample.validate())?;
        section("training.fit", self.training.fit.validate())?;
        if self.training.synthetic_scenes == 0 {
            bail!("config `training.synthetic_scenes`: must be at least 1");
        }
        Ok(())
    }

    /// Reference index for `frames` frames.
    pub fn reference_for(&self, frames: usize) -> Result<usize> {
        let r = self.reference.unwrap_or(frames / 2);
        if r >= frames {
            bail!("config `reference`: {r} is not below the frame count {frames}");
        }
        Ok(r)
    }
}

/// Dotted paths of every leaf of the default configuration.
pub fn leaf_keys() -> Vec<(String, Value)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, child, out);
                }
            }
            leaf => out.push((prefix.to_string(), leaf.clone())),
        }
    }
    let mut out = Vec::new();
    let tree = serde_json::to_value(PipelineConfig::default()).expect("default config serialises");
    walk("", &tree, &mut out);
    out
}

/// Flag text is read as JSON when it parses, otherwise as a string.
fn parse_flag_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn merge(base: &mut Value, over: Value, prefix: &str) -> Result<()> {
    let Value::Object(over) = over else {
        bail!(
            "config `{}` must be an object",
            if prefix.is_empty() { "<root>" } else { prefix }
        );
    };
    let base = base.as_object_mut().expect("merge target is an object");
    for (k, v) in over {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        let Some(slot) = base.get_mut(&k) else {
            bail!("unknown config key `{key}`");
        };
        if slot.is_object() && v.is_object() {
            merge(slot, v, &key)?;
        } else {
            *slot = v;
        }
    }
    Ok(())
}

fn set_key(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = tree;
    for part in key.split('.') {
        node = node
            .as_object_mut()
            .and_then(|m| m.get_mut(part))
            .ok_or_else(|| anyhow!("unknown config key `{key}`"))?;
    }
    if node.is_object() {
        bail!("config key `{key}` is a section, not a value");
    }
    *node = value;
    Ok(())
}

/// `overrides` are `(dotted key, flag text)` pairs applied in order after
/// the file.
pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<PipelineConfig> {
    let mut tree = serde_json::to_value(PipelineConfig::default())?;
    if let Some(path) = file {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let v: Value = serde_json::from_str(&text)
            .with_context(|| format!("malformed config {}", path.display()))?;
        merge(&mut tree, v, "")?;
    }
    for (key, raw) in overrides {
        set_key(&mut tree, key, parse_flag_value(raw))?;
    }
    let cfg: PipelineConfig = serde_path_to_error::deserialize(tree)
        .map_err(|e| anyhow!("config `{}`: {}", e.path(), e.inner()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, text: &str) -> std::path::PathBuf {
        let p = dir.path().join("cfg.json");
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn defaults() {
        let cfg = resolve(None, &[]).unwrap();
        assert_eq!(cfg.fista.lambda, 0.0005);
        assert_eq!(cfg.segment.stride, 5);
        assert_eq!(cfg.segment.tau, 0.5);
        assert_eq!(cfg.reference_for(3).unwrap(), 1);
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, r#"{"fista": {"lambda": 0.0005, "max_iters": 7}}"#);
        let cfg = resolve(Some(&p), &[("fista.lambda".into(), "0.001".into())]).unwrap();
        assert_eq!(cfg.fista.lambda, 0.001);
        assert_eq!(cfg.fista.max_iters, 7);
        assert_eq!(cfg.segment.stride, 5);
    }

    #[test]
    fn out_of_range_names_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, r#"{"segment": {"tau": 1.5}}"#);
        let err = resolve(Some(&p), &[]).unwrap_err().to_string();
        assert!(err.contains("tau"), "{err}");
    }

    #[test]
    fn unknown_and_mistyped_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, r#"{"segment": {"taux": 0.4}}"#);
        assert!(resolve(Some(&p), &[])
            .unwrap_err()
            .to_string()
            .contains("segment.taux"));
        let err = resolve(None, &[("flow.nope".into(), "1".into())])
            .unwrap_err()
            .to_string();
        assert!(err.contains("flow.nope"));
        let err = resolve(None, &[("flow.mu".into(), "abc".into())])
            .unwrap_err()
            .to_string();
        assert!(err.contains("flow.mu"), "{err}");
        let p = write(&dir, "{ not json");
        assert!(resolve(Some(&p), &[]).is_err());
    }

    #[test]
    fn optional_keys_accept_values_and_null() {
        let cfg = resolve(
            None,
            &[
                ("segment.max_link".into(), "55".into()),
                ("io.model".into(), "m.json".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.segment.max_link, Some(55.0));
        assert_eq!(cfg.io.model.as_deref(), Some("m.json"));
        let cfg = resolve(None, &[("segment.max_link".into(), "null".into())]).unwrap();
        assert_eq!(cfg.segment.max_link, None);
    }

    #[test]
    fn every_leaf_is_settable() {
        let keys = leaf_keys();
        assert!(keys.iter().any(|(k, _)| k == "fista.lambda"));
        assert!(keys.iter().any(|(k, _)| k == "training.sample.window"));
        for (k, v) in keys {
            let text = if v.is_null() {
                "null".to_string()
            } else {
                v.to_string()
            };
            resolve(None, &[(k.clone(), text)]).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }

    #[test]
    fn reference_out_of_range() {
        let cfg = resolve(None, &[("reference".into(), "4".into())]).unwrap();
        assert!(cfg
            .reference_for(3)
            .unwrap_err()
            .to_string()
            .contains("reference"));
    }
}
