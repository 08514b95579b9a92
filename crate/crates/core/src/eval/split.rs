//! Deterministic stratified train/validation/test split.
//!
//! Part sizes are `floor(train_frac * n)`, `floor(val_frac * n)` and the
//! remainder for test. Each note is stratified by its rarest kind (by corpus
//! frequency). Strata are filled rarest first; within a stratum, notes are
//! visited in seeded random order and each goes to the part furthest behind
//! its target share of that stratum, among parts with room left.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::taxonomy::{Kind, LabelSet, KIND_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.8,
            val_frac: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum SplitWarning {
    /// Too few positives to appear in every part.
    RareKind {
        kind: Kind,
        count: usize,
        parts: Vec<Part>,
    },
    AbsentFromTrain {
        kind: Kind,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub warnings: Vec<SplitWarning>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("fractions must be positive and sum to less than 1 (got {0}, {1})")]
    Fractions(f64, f64),
    #[error("cannot split {0} notes into three nonempty parts")]
    TooSmall(usize),
}

pub fn part_sizes(n: usize, spec: &SplitSpec) -> (usize, usize, usize) {
    let train = (spec.train_frac * n as f64).floor() as usize;
    let val = (spec.val_frac * n as f64).floor() as usize;
    (train, val, n - train - val)
}

pub fn stratified_split(labels: &[LabelSet], spec: &SplitSpec) -> Result<Split, SplitError> {
    let (tf, vf) = (spec.train_frac, spec.val_frac);
    if !(tf > 0.0 && vf > 0.0 && tf + vf < 1.0) {
        return Err(SplitError::Fractions(tf, vf));
    }
    let n = labels.len();
    let sizes = part_sizes(n, spec);
    if sizes.0 == 0 || sizes.1 == 0 || sizes.2 == 0 {
        return Err(SplitError::TooSmall(n));
    }
    let mut freq = [0usize; KIND_COUNT];
    for l in labels {
        for k in l.iter() {
            freq[k.index()] += 1;
        }
    }
    // Stratum key: the note's rarest kind; unlabeled notes form the last stratum.
    let key = |l: &LabelSet| -> usize {
        l.iter()
            .min_by_key(|k| (freq[k.index()], k.index()))
            .map_or(KIND_COUNT, |k| k.index())
    };
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); KIND_COUNT + 1];
    for (i, l) in labels.iter().enumerate() {
        strata[key(l)].push(i);
    }
    let mut order: Vec<usize> = (0..KIND_COUNT).collect();
    order.sort_by_key(|k| (freq[*k], *k));
    order.push(KIND_COUNT);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fracs = [tf, vf, 1.0 - tf - vf];
    let mut room = [sizes.0, sizes.1, sizes.2];
    let mut parts: [Vec<usize>; 3] = Default::default();
    for s in order {
        let mut members = std::mem::take(&mut strata[s]);
        members.shuffle(&mut rng);
        let mut taken = [0usize; 3];
        for (j, idx) in members.into_iter().enumerate() {
            let p = (0..3)
                .filter(|p| room[*p] > 0)
                .max_by(|a, b| {
                    let da = fracs[*a] * (j + 1) as f64 - taken[*a] as f64;
                    let db = fracs[*b] * (j + 1) as f64 - taken[*b] as f64;
                    // Ties go to the earlier part.
                    da.total_cmp(&db).then(b.cmp(a))
                })
                .expect("total room equals remaining notes");
            room[p] -= 1;
            taken[p] += 1;
            parts[p].push(idx);
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    let [train, val, test] = parts;

    let mut warnings = Vec::new();
    for k in Kind::ALL {
        let count = freq[k.index()];
        if count == 0 {
            continue;
        }
        let has = |ids: &[usize]| ids.iter().any(|i| labels[*i].contains(k));
        let present: Vec<Part> = [(Part::Train, &train), (Part::Val, &val), (Part::Test, &test)]
            .into_iter()
            .filter(|(_, ids)| has(ids))
            .map(|(p, _)| p)
            .collect();
        if present.len() < 3 {
            warnings.push(SplitWarning::RareKind {
                kind: k,
                count,
                parts: present.clone(),
            });
        }
        if !present.contains(&Part::Train) {
            warnings.push(SplitWarning::AbsentFromTrain { kind: k });
        }
    }
    Ok(Split {
        train,
        val,
        test,
        warnings,
    })
}
