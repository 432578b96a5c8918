//! Subject-disjoint folds and the query/gallery split.
//!
//! Splitting is always by subject, never by image: with one fold serving as
//! query+gallery and one reserved fold never read, query ∩ training and
//! gallery ∩ training are empty by construction, so no identity can leak
//! from training into evaluation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::RngExt;

use crate::data::{indices_by_subject, Sample};
use crate::error::{Error, Result};
use crate::seeding::{self, streams};

/// Assignment of every subject to exactly one of `k_folds` folds.
#[derive(Debug, Clone)]
pub struct FoldAssignment {
    fold_of_subject: BTreeMap<String, usize>,
    k_folds: usize,
    eval_fold: usize,
    holdout_fold: usize,
}

impl FoldAssignment {
    pub fn k_folds(&self) -> usize {
        self.k_folds
    }

    /// Fold currently used as query+gallery.
    pub fn eval_fold(&self) -> usize {
        self.eval_fold
    }

    /// Fold reserved and excluded from all use.
    pub fn holdout_fold(&self) -> usize {
        self.holdout_fold
    }

    pub fn fold_of(&self, subject_id: &str) -> Option<usize> {
        self.fold_of_subject.get(subject_id).copied()
    }

    /// Subjects of one fold, ascending.
    pub fn fold_subjects(&self, fold: usize) -> Vec<&str> {
        self.fold_of_subject
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    /// True when the subject belongs to neither the eval nor the holdout fold.
    pub fn is_training_subject(&self, subject_id: &str) -> bool {
        matches!(self.fold_of(subject_id),
                 Some(f) if f != self.eval_fold && f != self.holdout_fold)
    }

    /// Fold indices usable as eval folds, i.e. everything except the holdout.
    pub fn rotation_folds(&self) -> Vec<usize> {
        (0..self.k_folds).filter(|&f| f != self.holdout_fold).collect()
    }

    /// Same partition with a different eval fold; used to rotate the
    /// evaluation across folds without reshuffling subjects.
    pub fn with_eval_fold(&self, eval_fold: usize) -> Result<Self> {
        check_fold_indices(self.k_folds, eval_fold, self.holdout_fold)?;
        Ok(FoldAssignment {
            fold_of_subject: self.fold_of_subject.clone(),
            k_folds: self.k_folds,
            eval_fold,
            holdout_fold: self.holdout_fold,
        })
    }
}

fn check_fold_indices(k_folds: usize, eval_fold: usize, holdout_fold: usize) -> Result<()> {
    if eval_fold >= k_folds || holdout_fold >= k_folds {
        return Err(Error::validation(format!(
            "fold indices (eval {eval_fold}, holdout {holdout_fold}) must lie in [0, {k_folds})"
        )));
    }
    if eval_fold == holdout_fold {
        return Err(Error::validation(
            "eval fold and holdout fold must differ",
        ));
    }
    Ok(())
}

/// Shuffles subjects by a seeded permutation and deals them round-robin
/// into `k_folds` folds, so fold sizes differ by at most one subject.
pub fn assign_folds(
    samples: &[Sample],
    k_folds: usize,
    eval_fold: usize,
    holdout_fold: usize,
    seed: u64,
) -> Result<FoldAssignment> {
    if k_folds < 3 {
        return Err(Error::validation(format!(
            "need at least 3 folds (one training fold beside eval and holdout), got {k_folds}"
        )));
    }
    check_fold_indices(k_folds, eval_fold, holdout_fold)?;

    let by_subject = indices_by_subject(samples);
    if by_subject.len() < k_folds {
        return Err(Error::validation(format!(
            "{} subjects cannot fill {k_folds} folds",
            by_subject.len()
        )));
    }
    for (subject, views) in &by_subject {
        if views.len() < 2 {
            return Err(Error::validation(format!(
                "subject {subject} has {} view(s), need at least 2",
                views.len()
            )));
        }
    }

    let mut subjects: Vec<&str> = by_subject.keys().copied().collect();
    let mut rng = seeding::rng(seed, streams::FOLD_SHUFFLE, 0, 0);
    subjects.shuffle(&mut rng);

    let fold_of_subject = subjects
        .iter()
        .enumerate()
        .map(|(i, s)| (s.to_string(), i % k_folds))
        .collect();
    Ok(FoldAssignment {
        fold_of_subject,
        k_folds,
        eval_fold,
        holdout_fold,
    })
}

/// Query and gallery membership, as indices into the originating sample list.
#[derive(Debug, Clone)]
pub struct QueryGallerySplit {
    /// Exactly one sample per eval-fold subject, subjects ascending.
    pub query: Vec<usize>,
    /// All remaining eval-fold samples, in dataset order.
    pub gallery: Vec<usize>,
}

/// Picks one query view per eval-fold subject by a seeded uniform draw;
/// the subject's remaining views form the gallery.
pub fn build_query_gallery(
    samples: &[Sample],
    assignment: &FoldAssignment,
    seed: u64,
) -> Result<QueryGallerySplit> {
    let by_subject = indices_by_subject(samples);
    for subject in by_subject.keys() {
        if assignment.fold_of(subject).is_none() {
            return Err(Error::validation(format!(
                "subject {subject} has no fold assignment"
            )));
        }
    }

    let mut rng = seeding::rng(seed, streams::QUERY_PICK, 0, 0);
    let mut query = Vec::new();
    let mut gallery = Vec::new();
    for (subject, views) in &by_subject {
        if assignment.fold_of(subject) != Some(assignment.eval_fold()) {
            continue;
        }
        if views.len() < 2 {
            return Err(Error::validation(format!(
                "eval subject {subject} has a single view; query needs a non-empty gallery"
            )));
        }
        let pick = rng.random_range(0..views.len());
        query.push(views[pick]);
        gallery.extend(views.iter().enumerate().filter(|&(i, _)| i != pick).map(|(_, &v)| v));
    }
    gallery.sort_unstable();
    Ok(QueryGallerySplit { query, gallery })
}

/// Indices of all samples belonging to training folds (neither eval nor
/// holdout), in dataset order.
pub fn training_indices(samples: &[Sample], assignment: &FoldAssignment) -> Vec<usize> {
    samples
        .iter()
        .enumerate()
        .filter(|(_, s)| assignment.is_training_subject(&s.subject_id))
        .map(|(i, _)| i)
        .collect()
}
