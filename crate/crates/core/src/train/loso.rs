use serde::{Deserialize, Serialize};

use super::engine::{train, TrainConfig};
use crate::data::FixedDataset;
use crate::error::invalid;
use crate::model::{ModelConfig, NetworkOptions};
use crate::Result;

/// One held-out subject per fold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub subject_ids: Vec<u32>,
    pub held_out: Vec<u32>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.held_out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.held_out.is_empty()
    }
}

pub struct Fold {
    pub held_out: u32,
    pub train: FixedDataset,
    pub val: FixedDataset,
}

/// Splits `ds` into one fold per listed subject. Samples of subjects not in
/// the list are left out of every fold.
pub fn loso_split(ds: &FixedDataset, subjects: &[u32]) -> Result<(FoldPlan, Vec<Fold>)> {
    if subjects.len() < 2 {
        return Err(invalid!("leave-one-subject-out needs at least 2 subjects, got {}", subjects.len()));
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(d) = subjects.iter().find(|&&s| !seen.insert(s)) {
        return Err(invalid!("subject {d} listed twice"));
    }
    let mut folds = Vec::with_capacity(subjects.len());
    for &held in subjects {
        let (mut tr, mut va) = (Vec::new(), Vec::new());
        for (i, &s) in ds.subjects().iter().enumerate() {
            if s == held {
                va.push(i);
            } else if seen.contains(&s) {
                tr.push(i);
            }
        }
        if va.is_empty() {
            return Err(invalid!("subject {held} has no samples"));
        }
        folds.push(Fold {
            held_out: held,
            train: ds.subset(&tr),
            val: ds.subset(&va),
        });
    }
    let plan = FoldPlan {
        subject_ids: subjects.to_vec(),
        held_out: subjects.to_vec(),
    };
    Ok((plan, folds))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub held_out: u32,
    pub final_val_error: f64,
    pub best_val_error: f64,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub mean_final_val_error: f64,
    pub mean_best_val_error: f64,
}

/// Trains one model per fold and averages the validation errors.
pub fn cross_validate(
    model: &ModelConfig,
    options: NetworkOptions,
    ds: &FixedDataset,
    subjects: &[u32],
    cfg: &TrainConfig,
) -> Result<CvReport> {
    let (_, folds) = loso_split(ds, subjects)?;
    let mut results = Vec::with_capacity(folds.len());
    for fold in &folds {
        log::info!("fold: holding out subject {}", fold.held_out);
        let out = train(model, options, &fold.train, Some(&fold.val), cfg)?;
        let (best_epoch, best) = out.best_val_error.expect("validation set given");
        results.push(FoldResult {
            held_out: fold.held_out,
            final_val_error: out.final_val_error.expect("validation set given"),
            best_val_error: best,
            best_epoch,
        });
    }
    let n = results.len() as f64;
    Ok(CvReport {
        mean_final_val_error: results.iter().map(|r| r.final_val_error).sum::<f64>() / n,
        mean_best_val_error: results.iter().map(|r| r.best_val_error).sum::<f64>() / n,
        folds: results,
    })
}
