use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DefenceError, Result};
use crate::fenceseg::FeatureVector;
use crate::scalar::{dot, Scalar};

pub const MODEL_FORMAT: &str = "defence-linear-svm";
pub const MODEL_VERSION: u32 = 1;

/// `score(x) = w·x + b`; a window is a texel joint when `score > threshold`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub threshold: T,
    /// Feature backend the weights were fitted on.
    pub backend: String,
}

impl<T: Scalar> LinearClassifier<T> {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, f: &FeatureVector<T>) -> T {
        assert_eq!(f.len(), self.weights.len(), "feature dimension mismatch");
        dot(&self.weights, f.values()) + self.bias
    }

    pub fn predict(&self, f: &FeatureVector<T>) -> bool {
        self.score(f) > self.threshold
    }

    pub fn to_model(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            backend: self.backend.clone(),
            dim: self.weights.len(),
            weights: self.weights.iter().map(|w| w.as_f64()).collect(),
            bias: self.bias.as_f64(),
            threshold: self.threshold.as_f64(),
        }
    }

    pub fn from_model(m: &ModelFile) -> Result<Self> {
        if m.format != MODEL_FORMAT {
            return Err(DefenceError::Format(format!(
                "unknown model format {:?}",
                m.format
            )));
        }
        if m.version != MODEL_VERSION {
            return Err(DefenceError::Format(format!(
                "unsupported model version {}",
                m.version
            )));
        }
        if m.weights.len() != m.dim {
            return Err(DefenceError::Format(format!(
                "model declares dim {} but stores {} weights",
                m.dim,
                m.weights.len()
            )));
        }
        if m.weights
            .iter()
            .chain([&m.bias, &m.threshold])
            .any(|v| !v.is_finite())
        {
            return Err(DefenceError::Format("non-finite model parameter".into()));
        }
        Ok(LinearClassifier {
            weights: m.weights.iter().map(|w| T::lit(*w)).collect(),
            bias: T::lit(m.bias),
            threshold: T::lit(m.threshold),
            backend: m.backend.clone(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_model())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_model(&m)
    }
}

/// JSON model file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub backend: String,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    /// Weight of the summed hinge loss against `½‖w‖²`.
    pub c: f64,
    pub epochs: usize,
    /// Base step; epoch `e` (from 1) uses `learning_rate / √e`.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            c: 1.0,
            epochs: 50,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(DefenceError::param("c", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(DefenceError::param("epochs", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(DefenceError::param("learning_rate", "must be positive"));
        }
        Ok(())
    }
}

/// Fits a linear max-margin classifier by stochastic subgradient descent on
/// `(1/n)·½‖w‖² + c·Σ hinge(y (w·x + b))`, one sample at a time in a seeded
/// shuffled order. The bias is not regularised.
pub fn train_classifier<T: Scalar>(
    positives: &[FeatureVector<T>],
    negatives: &[FeatureVector<T>],
    params: &TrainParams,
    backend: &str,
) -> Result<LinearClassifier<T>> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(DefenceError::Precondition(
            "training needs at least one positive and one negative".into(),
        ));
    }
    let dim = positives[0].len();
    if positives.iter().chain(negatives).any(|f| f.len() != dim) {
        return Err(DefenceError::Dimension(
            "training features differ in length".into(),
        ));
    }
    params.validate()?;

    let samples: Vec<(&FeatureVector<T>, T)> = positives
        .iter()
        .map(|f| (f, T::one()))
        .chain(negatives.iter().map(|f| (f, -T::one())))
        .collect();
    let n = samples.len();
    let c = T::lit(params.c);
    let mut w = vec![T::zero(); dim];
    let mut b = T::zero();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    for epoch in 1..=params.epochs {
        let eta = T::lit(params.learning_rate / (epoch as f64).sqrt());
        let shrink = T::one() - eta / T::from_usize_lossy(n);
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, y) = samples[i];
            let margin = y * (dot(&w, x.values()) + b);
            w.iter_mut().for_each(|wi| *wi *= shrink);
            if margin < T::one() {
                let g = eta * c * y;
                for (wi, xi) in w.iter_mut().zip(x.values()) {
                    *wi += g * *xi;
                }
                b += g;
            }
        }
    }

    Ok(LinearClassifier {
        weights: w,
        bias: b,
        threshold: T::zero(),
        backend: backend.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector<f64> {
        FeatureVector(v.to_vec())
    }

    fn accuracy(
        clf: &LinearClassifier<f64>,
        pos: &[FeatureVector<f64>],
        neg: &[FeatureVector<f64>],
    ) -> f64 {
        let ok = pos.iter().filter(|f| clf.predict(f)).count()
            + neg.iter().filter(|f| !clf.predict(f)).count();
        ok as f64 / (pos.len() + neg.len()) as f64
    }

    #[test]
    fn separable_one_dimensional() {
        let (pos, neg) = (vec![fv(&[1.0])], vec![fv(&[-1.0])]);
        let p = TrainParams {
            c: 100.0,
            ..TrainParams::default()
        };
        let clf = train_classifier(&pos, &neg, &p, "test").unwrap();
        assert!(clf.weights[0] > 0.0);
        assert_eq!(accuracy(&clf, &pos, &neg), 1.0);
    }

    #[test]
    fn identical_classes_are_legal_but_uninformative() {
        let pts: Vec<_> = (0..6)
            .map(|i| fv(&[i as f64 * 0.1, 1.0 - i as f64 * 0.2]))
            .collect();
        let clf = train_classifier(&pts, &pts, &TrainParams::default(), "test").unwrap();
        assert!(accuracy(&clf, &pts, &pts) <= 0.5);
    }

    #[test]
    fn xor_is_not_linearly_separable() {
        let pos = vec![fv(&[1.0, 1.0]), fv(&[-1.0, -1.0])];
        let neg = vec![fv(&[1.0, -1.0]), fv(&[-1.0, 1.0])];
        let clf = train_classifier(&pos, &neg, &TrainParams::default(), "test").unwrap();
        assert!(accuracy(&clf, &pos, &neg) < 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let pos: Vec<_> = (0..20)
            .map(|i| fv(&[1.0 + (i as f64).sin(), (i as f64).cos()]))
            .collect();
        let neg: Vec<_> = (0..30)
            .map(|i| fv(&[-1.0 + (i as f64).cos(), (i as f64 * 0.7).sin()]))
            .collect();
        let a = train_classifier(&pos, &neg, &TrainParams::default(), "t").unwrap();
        let b = train_classifier(&pos, &neg, &TrainParams::default(), "t").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = TrainParams::default();
        assert!(train_classifier::<f64>(&[], &[fv(&[1.0])], &p, "t").is_err());
        assert!(train_classifier(&[fv(&[1.0])], &[fv(&[1.0, 2.0])], &p, "t").is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let clf = LinearClassifier {
            weights: vec![0.25, -1.5, 3.0],
            bias: -0.125,
            threshold: 0.5,
            backend: "hog-color-152".to_string(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        clf.save(&path).unwrap();
        assert_eq!(LinearClassifier::<f64>::load(&path).unwrap(), clf);

        let mut m = clf.to_model();
        m.dim = 4;
        assert!(LinearClassifier::<f64>::from_model(&m).is_err());
    }
}
