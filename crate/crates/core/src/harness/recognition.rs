//! Gesture recognition trained on synthetic gestures and tested on real data.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::auth::reconstructions;
use super::split::Split;
use crate::data::{GestureWindow, Label};
use crate::error::{Error, Result};
use crate::features::extract;
use crate::forest::{self, ForestConfig};
use crate::genmodel::{ClassifierConfig, GestureClassifier, Model};
use crate::metrics::{sweep, EvalReport, ScoreSet};
use crate::seed;

pub const RECOGNITION_SAMPLES: usize = 240;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Rf100,
    ConvGru,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Rf100 => "rf100",
            ClassifierKind::ConvGru => "conv_gru",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "rf100" | "rf" => Ok(ClassifierKind::Rf100),
            "conv_gru" => Ok(ClassifierKind::ConvGru),
            other => Err(Error::InvalidArgument(format!("unknown classifier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecognitionConfig {
    pub classifier: ClassifierKind,
    pub samples: usize,
    pub forest: ForestConfig,
    pub conv_gru: ClassifierConfig,
    pub seed: u64,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        Self {
            classifier: ClassifierKind::Rf100,
            samples: RECOGNITION_SAMPLES,
            forest: ForestConfig::default(),
            conv_gru: ClassifierConfig::default(),
            seed: 0,
        }
    }
}

fn choose(ws: Vec<GestureWindow>, n: usize, seed: u64, label: &str) -> Vec<GestureWindow> {
    if ws.len() <= n {
        return ws;
    }
    let mut idx = index::sample(&mut seed::rng(seed, label, 0), ws.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| ws[i].clone()).collect()
}

fn of_label(ws: &[GestureWindow], label: Label) -> Vec<GestureWindow> {
    ws.iter().filter(|w| w.label == label).cloned().collect()
}

/// Positive class: reconstructions of up to `samples` training gestures. Negative class: up to
/// `samples` training non-gestures. Tested on the real test gestures and non-gestures.
pub fn tstr_gesture_recognition(model: &Model, split: &Split, cfg: &RecognitionConfig) -> Result<EvalReport> {
    model.require_trained()?;
    let pool: Vec<GestureWindow> = split.train_pool().into_iter().cloned().collect();
    let gestures = choose(of_label(&pool, Label::Gesture), cfg.samples, cfg.seed, "recognition-gestures");
    let synthetic = reconstructions(model, &gestures)?;
    let negatives = choose(of_label(&pool, Label::NonGesture), cfg.samples, cfg.seed, "recognition-negatives");
    recognition_report(&synthetic, &negatives, &of_label(&split.test, Label::Gesture), &of_label(&split.test, Label::NonGesture), cfg)
}

/// Trains the chosen classifier on (positive, negative) and scores the test windows.
pub fn recognition_report(
    positive: &[GestureWindow],
    negative: &[GestureWindow],
    test_positive: &[GestureWindow],
    test_negative: &[GestureWindow],
    cfg: &RecognitionConfig,
) -> Result<EvalReport> {
    if negative.is_empty() || test_negative.is_empty() {
        return Err(Error::InsufficientData("gesture recognition needs non-gesture windows for training and testing".into()));
    }
    if positive.is_empty() || test_positive.is_empty() {
        return Err(Error::InsufficientData("gesture recognition needs gestures for training and testing".into()));
    }
    let scores: Box<dyn Fn(&[GestureWindow]) -> Result<Vec<f64>>> = match cfg.classifier {
        ClassifierKind::Rf100 => {
            let rows: Vec<Vec<f64>> = positive.iter().chain(negative).map(|w| extract(w).values).collect();
            let labels: Vec<bool> = (0..rows.len()).map(|i| i < positive.len()).collect();
            let f = forest::fit(&rows, &labels, &cfg.forest, seed::derive(cfg.seed, "recognition-forest", 0))?;
            Box::new(move |ws| ws.iter().map(|w| f.predict_proba(&extract(w).values)).collect())
        }
        ClassifierKind::ConvGru => {
            let cc = ClassifierConfig { seed: seed::derive(cfg.seed, "recognition-conv", 0), ..cfg.conv_gru.clone() };
            let c = GestureClassifier::fit(positive, negative, &cc)?;
            Box::new(move |ws| ws.iter().map(|w| c.predict_proba(w)).collect())
        }
    };
    sweep(&ScoreSet::new(scores(test_positive)?, scores(test_negative)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_mini_dataset;
    use crate::harness::split::{temporal_split, SplitSpec};

    #[test]
    fn perfect_reconstructions_separate_gestures() {
        let ds = generate_mini_dataset(4, 30, 3).unwrap();
        let split = temporal_split(&ds, &SplitSpec::default()).unwrap();
        let pool: Vec<GestureWindow> = split.train_pool().into_iter().cloned().collect();
        let cfg = RecognitionConfig::default();
        let r = recognition_report(
            &of_label(&pool, Label::Gesture),
            &of_label(&pool, Label::NonGesture),
            &of_label(&split.test, Label::Gesture),
            &of_label(&split.test, Label::NonGesture),
            &cfg,
        )
        .unwrap();
        assert!(r.auroc >= 0.95, "auroc {}", r.auroc);
    }

    #[test]
    fn missing_non_gestures_is_an_error() {
        let ds = generate_mini_dataset(2, 9, 3).unwrap();
        let split = temporal_split(&ds, &SplitSpec::default()).unwrap();
        let pool: Vec<GestureWindow> = split.train_pool().into_iter().cloned().collect();
        let g = of_label(&pool, Label::Gesture);
        assert!(recognition_report(&g, &[], &g, &g, &RecognitionConfig::default()).is_err());
    }
}
