//! Bagged decision-tree ensemble over 52-feature SAD profiles.
//!
//! The forest is grown from scratch: bootstrap resamples, Gini-impurity
//! splits over a random feature subset per node, midpoint thresholds
//! between consecutive distinct values. Everything is seeded through
//! [`crate::seeding`], so the same samples, parameters and seed always
//! produce the same model — byte-for-byte in serialized form.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sad_extractor::{ProfileRow, FEATURE_COUNT};
use crate::seeding::stream_rng;
use crate::trace_model::Label;

/// Binary class label used by the detector. `MALICIOUS` is the positive
/// class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Class {
    Benign,
    Malicious,
}

impl Class {
    pub fn as_str(self) -> &'static str {
        match self {
            Class::Benign => "BENIGN",
            Class::Malicious => "MALICIOUS",
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl TryFrom<Label> for Class {
    type Error = TrainError;

    fn try_from(label: Label) -> Result<Self, TrainError> {
        match label {
            Label::Benign => Ok(Class::Benign),
            Label::Malicious => Ok(Class::Malicious),
            Label::Unlabeled => Err(TrainError::UnlabeledSample),
        }
    }
}

/// One training/evaluation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub app_id: String,
    pub year: i32,
    pub label: Class,
    pub features: [f64; FEATURE_COUNT],
}

impl LabeledSample {
    pub fn new(
        app_id: impl Into<String>,
        year: i32,
        label: Class,
        features: [f64; FEATURE_COUNT],
    ) -> Result<Self, TrainError> {
        let app_id = app_id.into();
        for (i, f) in features.iter().enumerate() {
            if !f.is_finite() || !(0.0..=1.0).contains(f) {
                return Err(TrainError::InvalidFeature {
                    app_id,
                    detail: format!("feature {} = {f} outside [0,1]", i + 1),
                });
            }
        }
        Ok(LabeledSample {
            app_id,
            year,
            label,
            features,
        })
    }
}

impl TryFrom<&ProfileRow> for LabeledSample {
    type Error = TrainError;

    fn try_from(row: &ProfileRow) -> Result<Self, TrainError> {
        LabeledSample::new(
            row.app_id.clone(),
            row.year,
            Class::try_from(row.label)?,
            row.features,
        )
    }
}

/// Forest hyperparameters.
///
/// Only the estimator count is inherent to the approach; the rest are
/// conventional defaults (Gini, ⌈√52⌉ = 8 features per split,
/// unlimited depth), spelled out so results reproduce without any
/// external library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<u32>,
    pub min_samples_split: usize,
    pub features_per_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: 8,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.n_trees == 0 {
            return Err(TrainError::InvalidParams {
                reason: "n_trees must be positive".into(),
            });
        }
        if self.min_samples_split == 0 {
            return Err(TrainError::InvalidParams {
                reason: "min_samples_split must be positive".into(),
            });
        }
        if self.features_per_split == 0 || self.features_per_split > FEATURE_COUNT {
            return Err(TrainError::InvalidParams {
                reason: format!("features_per_split must be in 1..={FEATURE_COUNT}"),
            });
        }
        if self.max_depth == Some(0) {
            return Err(TrainError::InvalidParams {
                reason: "max_depth must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Errors from training.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrainError {
    #[error("no training samples")]
    EmptySamples,
    #[error("training set contains fewer than 2 samples or only one class")]
    SingleClassTrainingSet,
    #[error("sample is UNLABELED; training needs BENIGN or MALICIOUS")]
    UnlabeledSample,
    #[error("sample {app_id:?}: {detail}")]
    InvalidFeature { app_id: String, detail: String },
    #[error("{reason}")]
    InvalidParams { reason: String },
}

impl TrainError {
    pub fn code(&self) -> &'static str {
        match self {
            TrainError::EmptySamples => "EmptySamples",
            TrainError::SingleClassTrainingSet => "SingleClassTrainingSet",
            TrainError::UnlabeledSample => "UnlabeledSample",
            TrainError::InvalidFeature { .. } => "InvalidFeature",
            TrainError::InvalidParams { .. } => "InvalidParams",
        }
    }
}

/// Errors from decoding a serialized model.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelIoError {
    #[error("unsupported model version {found} (supported: {MODEL_VERSION})")]
    UnsupportedVersion { found: u64 },
    #[error("corrupt model file: {reason}")]
    CorruptModel { reason: String },
}

impl ModelIoError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelIoError::UnsupportedVersion { .. } => "UnsupportedVersion",
            ModelIoError::CorruptModel { .. } => "CorruptModel",
        }
    }
}

/// A decision-tree node in a flat arena; the root is node 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        benign: u32,
        malicious: u32,
    },
}

/// One grown tree.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Leaf-majority class for one input; leaf ties go to `Malicious`.
    pub fn predict(&self, features: &[f64; FEATURE_COUNT]) -> Class {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if features[feature] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
                Node::Leaf { benign, malicious } => {
                    return if malicious >= benign {
                        Class::Malicious
                    } else {
                        Class::Benign
                    };
                }
            }
        }
    }
}

/// A trained forest. Immutable; concurrent prediction is safe.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub params: ForestParams,
    trees: Vec<DecisionTree>,
    pub training_fingerprint: String,
}

const MODEL_FORMAT: &str = "sadmodel";
const MODEL_VERSION: u64 = 1;

/// Trains a forest: `n_trees` trees on bootstrap resamples of
/// `samples`, each grown with its own seed stream derived from
/// `params.seed`, so parallel and sequential schedules agree.
pub fn train(samples: &[LabeledSample], params: &ForestParams) -> Result<ForestModel, TrainError> {
    params.validate()?;
    if samples.is_empty() {
        return Err(TrainError::EmptySamples);
    }
    for s in samples {
        for (i, f) in s.features.iter().enumerate() {
            if !f.is_finite() || !(0.0..=1.0).contains(f) {
                return Err(TrainError::InvalidFeature {
                    app_id: s.app_id.clone(),
                    detail: format!("feature {} = {f} outside [0,1]", i + 1),
                });
            }
        }
    }
    let has_benign = samples.iter().any(|s| s.label == Class::Benign);
    let has_malicious = samples.iter().any(|s| s.label == Class::Malicious);
    if !has_benign || !has_malicious {
        return Err(TrainError::SingleClassTrainingSet);
    }

    let trees: Vec<DecisionTree> = (0..params.n_trees)
        .map(|tree_idx| {
            let mut rng = stream_rng(params.seed, tree_idx as u64);
            let indices = if params.bootstrap {
                bootstrap_indices(&mut rng, samples.len())
            } else {
                (0..samples.len()).collect()
            };
            grow_tree(samples, indices, params, &mut rng)
        })
        .collect();

    Ok(ForestModel {
        params: *params,
        trees,
        training_fingerprint: fingerprint(samples),
    })
}

/// Resample of size `n`, drawn with replacement.
pub(crate) fn bootstrap_indices(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

fn class_counts(samples: &[LabeledSample], indices: &[usize]) -> (u32, u32) {
    let mut benign = 0u32;
    let mut malicious = 0u32;
    for &i in indices {
        match samples[i].label {
            Class::Benign => benign += 1,
            Class::Malicious => malicious += 1,
        }
    }
    (benign, malicious)
}

fn gini(benign: u32, malicious: u32) -> f64 {
    let total = (benign + malicious) as f64;
    if total == 0.0 {
        return 0.0;
    }
    let pb = benign as f64 / total;
    let pm = malicious as f64 / total;
    1.0 - pb * pb - pm * pm
}

/// Mean child impurity of a split, weighted by child size. Lower is
/// better; the parent's impurity is the no-split baseline.
pub(crate) fn weighted_gini(lb: u32, lm: u32, rb: u32, rm: u32) -> f64 {
    let nl = (lb + lm) as f64;
    let nr = (rb + rm) as f64;
    let n = nl + nr;
    (nl / n) * gini(lb, lm) + (nr / n) * gini(rb, rm)
}

struct SplitChoice {
    score: f64,
    feature: usize,
    threshold: f64,
}

/// Best split for one node.
///
/// Features are examined in a random draw order without replacement.
/// The first `features_per_split` are always examined; after that the
/// search continues only while no valid split has been found, so a node
/// whose drawn subset is all-constant still splits if any feature can
/// (the usual forest behavior, and required for nodes where few
/// features are informative).
fn best_split(
    samples: &[LabeledSample],
    indices: &[usize],
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> Option<SplitChoice> {
    let mut order: Vec<usize> = (0..FEATURE_COUNT).collect();
    order.shuffle(rng);

    let (total_b, total_m) = class_counts(samples, indices);
    let mut best: Option<SplitChoice> = None;
    let mut pairs: Vec<(f64, Class)> = Vec::with_capacity(indices.len());

    for (examined, &feature) in order.iter().enumerate() {
        if examined >= params.features_per_split && best.is_some() {
            break;
        }
        pairs.clear();
        pairs.extend(
            indices
                .iter()
                .map(|&i| (samples[i].features[feature], samples[i].label)),
        );
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("features are finite"));

        let mut left_b = 0u32;
        let mut left_m = 0u32;
        for w in 0..pairs.len() - 1 {
            match pairs[w].1 {
                Class::Benign => left_b += 1,
                Class::Malicious => left_m += 1,
            }
            let (a, b) = (pairs[w].0, pairs[w + 1].0);
            if a < b {
                // Midpoint, nudged down if rounding lands on `b`, so both
                // children stay nonempty under the `<= threshold` rule.
                let mut threshold = (a + b) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                let score = weighted_gini(left_b, left_m, total_b - left_b, total_m - left_m);
                if best.as_ref().is_none_or(|cur| score < cur.score) {
                    best = Some(SplitChoice {
                        score,
                        feature,
                        threshold,
                    });
                }
            }
        }
    }
    best
}

fn grow_tree(
    samples: &[LabeledSample],
    indices: Vec<usize>,
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let mut nodes = Vec::new();
    grow_node(samples, indices, params, rng, 0, &mut nodes);
    DecisionTree { nodes }
}

fn grow_node(
    samples: &[LabeledSample],
    indices: Vec<usize>,
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
    depth: u32,
    nodes: &mut Vec<Node>,
) -> u32 {
    let (benign, malicious) = class_counts(samples, &indices);
    let id = nodes.len() as u32;
    let at_depth_cap = params.max_depth.is_some_and(|cap| depth >= cap);
    if benign == 0 || malicious == 0 || indices.len() < params.min_samples_split || at_depth_cap {
        nodes.push(Node::Leaf { benign, malicious });
        return id;
    }
    let Some(split) = best_split(samples, &indices, params, rng) else {
        nodes.push(Node::Leaf { benign, malicious });
        return id;
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
        .into_iter()
        .partition(|&i| samples[i].features[split.feature] <= split.threshold);
    debug_assert!(!left_idx.is_empty() && !right_idx.is_empty());

    nodes.push(Node::Leaf { benign, malicious }); // placeholder
    let left = grow_node(samples, left_idx, params, rng, depth + 1, nodes);
    let right = grow_node(samples, right_idx, params, rng, depth + 1, nodes);
    nodes[id as usize] = Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    id
}

impl ForestModel {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    fn malicious_votes(&self, features: &[f64; FEATURE_COUNT]) -> usize {
        self.trees
            .iter()
            .filter(|t| t.predict(features) == Class::Malicious)
            .count()
    }

    /// Majority vote over the trees; exact ties go to `Malicious`.
    pub fn predict(&self, features: &[f64; FEATURE_COUNT]) -> Class {
        if 2 * self.malicious_votes(features) >= self.trees.len() {
            Class::Malicious
        } else {
            Class::Benign
        }
    }

    /// Fraction of trees voting `Malicious`. `predict` returns
    /// `Malicious` iff this is ≥ 0.5.
    pub fn predict_score(&self, features: &[f64; FEATURE_COUNT]) -> f64 {
        self.malicious_votes(features) as f64 / self.trees.len() as f64
    }

    /// Serializes to the versioned `.sadmodel` JSON text.
    pub fn save(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            params: self.params,
            training_fingerprint: self.training_fingerprint.clone(),
            trees: self
                .trees
                .iter()
                .map(|t| t.nodes.iter().map(NodeRepr::from).collect())
                .collect(),
        };
        serde_json::to_string(&file).expect("model serialization cannot fail")
    }

    /// Decodes a `.sadmodel` file, validating structure and version.
    pub fn load(bytes: &[u8]) -> Result<ForestModel, ModelIoError> {
        let corrupt = |reason: String| ModelIoError::CorruptModel { reason };
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
        if value.get("format").and_then(|f| f.as_str()) != Some(MODEL_FORMAT) {
            return Err(corrupt(format!("missing `format: {MODEL_FORMAT}` marker")));
        }
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| corrupt("missing version".into()))?;
        if version != MODEL_VERSION {
            return Err(ModelIoError::UnsupportedVersion { found: version });
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
        file.params.validate().map_err(|e| corrupt(e.to_string()))?;
        if file.trees.len() != file.params.n_trees {
            return Err(corrupt(format!(
                "file has {} trees but params.n_trees = {}",
                file.trees.len(),
                file.params.n_trees
            )));
        }
        let mut trees = Vec::with_capacity(file.trees.len());
        for reprs in &file.trees {
            if reprs.is_empty() {
                return Err(corrupt("empty tree".into()));
            }
            let mut nodes = Vec::with_capacity(reprs.len());
            for repr in reprs {
                nodes.push(match *repr {
                    NodeRepr::Split { f, t, l, r } => {
                        if f == 0 || f as usize > FEATURE_COUNT {
                            return Err(corrupt(format!("split feature f{f} out of range")));
                        }
                        if l as usize >= reprs.len() || r as usize >= reprs.len() {
                            return Err(corrupt("child node index out of range".into()));
                        }
                        if !t.is_finite() {
                            return Err(corrupt("non-finite threshold".into()));
                        }
                        Node::Split {
                            feature: f as usize - 1,
                            threshold: t,
                            left: l,
                            right: r,
                        }
                    }
                    NodeRepr::Leaf { b, m } => {
                        if b == 0 && m == 0 {
                            return Err(corrupt("leaf with no samples".into()));
                        }
                        Node::Leaf {
                            benign: b,
                            malicious: m,
                        }
                    }
                });
            }
            trees.push(DecisionTree { nodes });
        }
        Ok(ForestModel {
            params: file.params,
            trees,
            training_fingerprint: file.training_fingerprint,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u64,
    params: ForestParams,
    training_fingerprint: String,
    trees: Vec<Vec<NodeRepr>>,
}

/// On-disk node form; `f` is the canonical 1-based feature index
/// (`f1..f52`).
#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NodeRepr {
    Split { f: u8, t: f64, l: u32, r: u32 },
    Leaf { b: u32, m: u32 },
}

impl From<&Node> for NodeRepr {
    fn from(node: &Node) -> Self {
        match *node {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => NodeRepr::Split {
                f: (feature + 1) as u8,
                t: threshold,
                l: left,
                r: right,
            },
            Node::Leaf { benign, malicious } => NodeRepr::Leaf {
                b: benign,
                m: malicious,
            },
        }
    }
}

/// FNV-1a over a canonical rendering of the training set.
fn fingerprint(samples: &[LabeledSample]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for s in samples {
        eat(s.app_id.as_bytes());
        eat(&[0, s.label as u8]);
        eat(&s.year.to_le_bytes());
        for f in s.features {
            eat(&f.to_bits().to_le_bytes());
        }
    }
    format!("{hash:016x}")
}
