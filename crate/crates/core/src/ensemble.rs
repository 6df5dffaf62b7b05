//! Combining base classifiers: recall-based top-k selection, perceptron
//! stacking over concatenated softmax outputs, and majority voting.
//!
//! Voting takes the statistical mode of the three argmax votes. When all
//! three disagree there is no mode; such samples are decided as CN and
//! flagged, so downstream reports can audit how often the fallback fires.

use crate::learner::{
    self, Label, LearnError, LinearModel, PredictionMatrix, TrainConfig, NUM_CLASSES,
};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

/// Number of base models combined by stacking and voting.
pub const ENSEMBLE_SIZE: usize = 3;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("k={k} exceeds the {available} models reported")]
    KTooLarge { k: usize, available: usize },
    #[error("expected {ENSEMBLE_SIZE} base prediction matrices, got {0}")]
    BaseCount(usize),
    #[error("base model ids are not unique: '{0}'")]
    DuplicateModelId(String),
    #[error("no base prediction matrix for model id '{0}'")]
    UnknownModelId(String),
    #[error("sample ids do not agree across base matrices: {0}")]
    IdMismatch(String),
    #[error("cannot aggregate an empty scan")]
    EmptyScan,
    #[error(transparent)]
    Learn(#[from] LearnError),
}

impl EnsembleError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::KTooLarge { .. } => "ensemble/KTooLarge",
            Self::BaseCount(_) => "ensemble/BaseCount",
            Self::DuplicateModelId(_) => "ensemble/DuplicateModelId",
            Self::UnknownModelId(_) => "ensemble/UnknownModelId",
            Self::IdMismatch(_) => "ensemble/IdMismatch",
            Self::EmptyScan => "ensemble/EmptyScan",
            Self::Learn(e) => e.code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, EnsembleError>;

/// Order base models by descending macro recall, ties broken by
/// lexicographic model id, and return the first k.
pub fn select_top_k_models(recalls: &BTreeMap<String, f64>, k: usize) -> Result<Vec<String>> {
    if k > recalls.len() {
        return Err(EnsembleError::KTooLarge {
            k,
            available: recalls.len(),
        });
    }
    let mut ordered: Vec<(&String, f64)> = recalls.iter().map(|(id, &r)| (id, r)).collect();
    ordered.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("recall is finite")
            .then(a.0.cmp(b.0))
    });
    Ok(ordered.into_iter().take(k).map(|(id, _)| id.clone()).collect())
}

/// Meta-learner over the concatenated softmax outputs of three base
/// models: one affine layer from 9 inputs to 3 class scores, softmax
/// normalized. `base_order` is fixed at training time and resolved by
/// model id at prediction time.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StackingModel {
    pub model: LinearModel,
    pub base_order: Vec<String>,
}

fn validate_bases(bases: &[PredictionMatrix]) -> Result<()> {
    if bases.len() != ENSEMBLE_SIZE {
        return Err(EnsembleError::BaseCount(bases.len()));
    }
    let mut seen = std::collections::HashSet::new();
    for b in bases {
        if !seen.insert(b.model_id()) {
            return Err(EnsembleError::DuplicateModelId(b.model_id().to_string()));
        }
    }
    Ok(())
}

fn check_aligned_ids(bases: &[&PredictionMatrix]) -> Result<()> {
    let first = bases[0];
    for other in &bases[1..] {
        if other.len() != first.len() {
            return Err(EnsembleError::IdMismatch(format!(
                "'{}' has {} rows, '{}' has {}",
                first.model_id(),
                first.len(),
                other.model_id(),
                other.len()
            )));
        }
        for (a, b) in first.ids().iter().zip(other.ids()) {
            if a != b {
                return Err(EnsembleError::IdMismatch(format!(
                    "'{}' vs '{}' at id '{}' != '{}'",
                    first.model_id(),
                    other.model_id(),
                    a,
                    b
                )));
            }
        }
    }
    Ok(())
}

/// Concatenate the three probability rows per sample, in base order.
fn stacked_features(bases: &[&PredictionMatrix]) -> Vec<Vec<f64>> {
    (0..bases[0].len())
        .map(|i| {
            let mut row = Vec::with_capacity(ENSEMBLE_SIZE * NUM_CLASSES);
            for b in bases {
                row.extend_from_slice(&b.probs()[i]);
            }
            row
        })
        .collect()
}

/// Train the stacking meta-learner. Training is identical to the base
/// learner (zero init, seeded-shuffle SGD, cross-entropy) on the
/// 9-dimensional concatenated features.
pub fn stack_train(
    bases: &[PredictionMatrix],
    labels: &[Label],
    config: &TrainConfig,
) -> Result<StackingModel> {
    validate_bases(bases)?;
    let refs: Vec<&PredictionMatrix> = bases.iter().collect();
    check_aligned_ids(&refs)?;
    if labels.len() != bases[0].len() {
        return Err(EnsembleError::Learn(LearnError::DimensionMismatch {
            expected: bases[0].len(),
            got: labels.len(),
        }));
    }
    let features = stacked_features(&refs);
    let model = learner::train(&features, labels, config)?;
    Ok(StackingModel {
        model,
        base_order: bases.iter().map(|b| b.model_id().to_string()).collect(),
    })
}

/// Score samples with a trained stacking model. Base matrices may be
/// passed in any order; they are resolved against `base_order` by model
/// id.
pub fn stack_predict(model: &StackingModel, bases: &[PredictionMatrix]) -> Result<PredictionMatrix> {
    validate_bases(bases)?;
    let by_id: HashMap<&str, &PredictionMatrix> =
        bases.iter().map(|b| (b.model_id(), b)).collect();
    let ordered: Vec<&PredictionMatrix> = model
        .base_order
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| EnsembleError::UnknownModelId(id.clone()))
        })
        .collect::<Result<_>>()?;
    check_aligned_ids(&ordered)?;
    let features = stacked_features(&ordered);
    let ids = ordered[0].ids().to_vec();
    Ok(learner::predict_proba(&model.model, "stack", ids, &features)?)
}

/// Votes and decision for one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteResult {
    pub id: String,
    pub votes: [Label; ENSEMBLE_SIZE],
    pub decision: Label,
    pub tie: bool,
}

/// Mode of the three votes; all-distinct triples have no mode and fall
/// back to CN with `tie = true`.
fn mode_with_cn_fallback(votes: &[Label; ENSEMBLE_SIZE]) -> (Label, bool) {
    let mut counts = [0usize; NUM_CLASSES];
    for v in votes {
        counts[v.index()] += 1;
    }
    let best = (0..NUM_CLASSES).max_by_key(|&c| counts[c]).expect("3 classes");
    if counts[best] >= 2 {
        (Label::from_index(best).expect("in range"), false)
    } else {
        (Label::Cn, true)
    }
}

/// Majority voting over three base models' argmax votes.
///
/// All matrices must cover the same id set; rows are aligned by id, with
/// output order following the first matrix. Within-model argmax ties
/// break toward the lower class index.
pub fn majority_vote(bases: &[PredictionMatrix]) -> Result<Vec<VoteResult>> {
    validate_bases(bases)?;
    let first = &bases[0];
    let lookups: Vec<HashMap<&str, usize>> = bases[1..]
        .iter()
        .map(|b| {
            b.ids()
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_str(), i))
                .collect()
        })
        .collect();
    for (b, lookup) in bases[1..].iter().zip(&lookups) {
        if b.len() != first.len() {
            return Err(EnsembleError::IdMismatch(format!(
                "'{}' has {} rows, '{}' has {}",
                first.model_id(),
                first.len(),
                b.model_id(),
                b.len()
            )));
        }
        for id in first.ids() {
            if !lookup.contains_key(id.as_str()) {
                return Err(EnsembleError::IdMismatch(format!(
                    "id '{}' missing from '{}'",
                    id,
                    b.model_id()
                )));
            }
        }
    }

    Ok(first
        .ids()
        .iter()
        .enumerate()
        .map(|(row, id)| {
            let votes = [
                Label::argmax(&first.probs()[row]),
                Label::argmax(&bases[1].probs()[lookups[0][id.as_str()]]),
                Label::argmax(&bases[2].probs()[lookups[1][id.as_str()]]),
            ];
            let (decision, tie) = mode_with_cn_fallback(&votes);
            VoteResult {
                id: id.clone(),
                votes,
                decision,
                tie,
            }
        })
        .collect())
}

/// Fraction of samples whose vote was an all-distinct tie.
pub fn tie_fraction(results: &[VoteResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| r.tie).count() as f64 / results.len() as f64
}

/// Arithmetic mean of the voters' softmax rows, renormalized. This is
/// the probability surface reported for the voting ensemble (votes
/// themselves are hard).
pub fn mean_softmax(bases: &[PredictionMatrix], model_id: &str) -> Result<PredictionMatrix> {
    validate_bases(bases)?;
    let refs: Vec<&PredictionMatrix> = bases.iter().collect();
    check_aligned_ids(&refs)?;
    let probs: Vec<[f64; NUM_CLASSES]> = (0..bases[0].len())
        .map(|i| {
            let mut row = [0.0; NUM_CLASSES];
            for b in bases {
                for (acc, &p) in row.iter_mut().zip(&b.probs()[i]) {
                    *acc += p;
                }
            }
            for v in &mut row {
                *v /= ENSEMBLE_SIZE as f64;
            }
            row
        })
        .collect();
    Ok(PredictionMatrix::new(model_id, bases[0].ids().to_vec(), probs)?)
}

/// Mean of a scan's slice probability rows, renormalized.
pub fn aggregate_scan(rows: &[[f64; NUM_CLASSES]]) -> Result<[f64; NUM_CLASSES]> {
    if rows.is_empty() {
        return Err(EnsembleError::EmptyScan);
    }
    let mut mean = [0.0; NUM_CLASSES];
    for row in rows {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let total: f64 = mean.iter().sum();
    for m in &mut mean {
        *m /= total;
    }
    Ok(mean)
}

/// Scan id embedded in a slice sample id: everything before the last
/// `/`, or the whole id when there is none.
pub fn scan_of_sample(id: &str) -> &str {
    id.rsplit_once('/').map_or(id, |(scan, _)| scan)
}

/// Roll slice-level predictions up to scan level by mean probability.
/// Output rows follow the scans' first appearance.
pub fn aggregate_scans(pm: &PredictionMatrix) -> Result<PredictionMatrix> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<[f64; NUM_CLASSES]>> = HashMap::new();
    for (id, row) in pm.ids().iter().zip(pm.probs()) {
        let scan = scan_of_sample(id);
        groups.entry(scan).or_insert_with(|| {
            order.push(scan);
            Vec::new()
        });
        groups.get_mut(scan).expect("just inserted").push(*row);
    }
    let ids: Vec<String> = order.iter().map(|s| s.to_string()).collect();
    let probs: Vec<[f64; NUM_CLASSES]> = order
        .iter()
        .map(|scan| aggregate_scan(&groups[scan]))
        .collect::<Result<_>>()?;
    Ok(PredictionMatrix::new(pm.model_id(), ids, probs)?)
}

/// Header of the vote CSV emitted by the `vote` command.
pub const VOTE_CSV_HEADER: &str = "id,vote_1,vote_2,vote_3,decision,tie";

/// Serialize vote results in the `vote` command format.
pub fn votes_to_csv(results: &[VoteResult]) -> String {
    let mut out = String::from(VOTE_CSV_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.id,
            r.votes[0],
            r.votes[1],
            r.votes[2],
            r.decision,
            u8::from(r.tie)
        ));
    }
    out
}
