//! Seen/unseen split planning for zero-shot evaluation.
//!
//! Three class groups take part: the trimmed classes (always fully used for
//! training), the untrimmed "seen" group A and the untrimmed "unseen" group B.
//!
//! | mode | A: train seen / test seen | B: train unseen / test unseen |
//! |------|---------------------------|-------------------------------|
//! | TD   | 100% / 0%                 | 20% / 80%                     |
//! | G    | 80% / 20%                 | 0% / 100%                     |
//! | TD+G | 80% / 20%                 | 20% / 80%                     |
//!
//! Per class, `⌊n · pct / 100⌋` samples go to training and the rest to test.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, SampleRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    #[serde(rename = "td")]
    Transductive,
    #[serde(rename = "g")]
    Generalized,
    #[serde(rename = "td+g")]
    Combined,
}

impl SplitMode {
    /// Training percentage for group A and group B.
    pub fn train_percent(self) -> (u32, u32) {
        match self {
            SplitMode::Transductive => (100, 20),
            SplitMode::Generalized => (80, 0),
            SplitMode::Combined => (80, 20),
        }
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "td" => Ok(SplitMode::Transductive),
            "g" => Ok(SplitMode::Generalized),
            "td+g" | "tdg" => Ok(SplitMode::Combined),
            other => Err(Error::Config(format!(
                "unknown split mode {other:?}, expected td, g or td+g"
            ))),
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Transductive => "td",
            SplitMode::Generalized => "g",
            SplitMode::Combined => "td+g",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    TrimmedTrainSeen,
    UntrimmedTrainSeen,
    UntrimmedTrainUnseen,
    UntrimmedTestSeen,
    UntrimmedTestUnseen,
}

impl Bucket {
    pub const ALL: [Bucket; 5] = [
        Bucket::TrimmedTrainSeen,
        Bucket::UntrimmedTrainSeen,
        Bucket::UntrimmedTrainUnseen,
        Bucket::UntrimmedTestSeen,
        Bucket::UntrimmedTestUnseen,
    ];

    pub fn is_train(self) -> bool {
        matches!(
            self,
            Bucket::TrimmedTrainSeen | Bucket::UntrimmedTrainSeen | Bucket::UntrimmedTrainUnseen
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Bucket::TrimmedTrainSeen => "trimmed_train_seen",
            Bucket::UntrimmedTrainSeen => "untrimmed_train_seen",
            Bucket::UntrimmedTrainUnseen => "untrimmed_train_unseen",
            Bucket::UntrimmedTestSeen => "untrimmed_test_seen",
            Bucket::UntrimmedTestUnseen => "untrimmed_test_unseen",
        }
    }
}

/// A class group, the share of each class's samples sent to training, and
/// the buckets receiving the training and test parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPlan {
    pub classes: Vec<String>,
    pub trimmed: bool,
    pub train_percent: u32,
    pub train_bucket: Bucket,
    pub test_bucket: Option<Bucket>,
}

impl GroupPlan {
    pub fn train_count(&self, per_class: usize) -> usize {
        per_class * self.train_percent as usize / 100
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub seed: u64,
    pub groups: Vec<GroupPlan>,
}

/// Per-bucket numbers for a uniform per-class sample count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCount {
    pub classes: usize,
    pub per_class: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub mode: SplitMode,
    pub per_class: usize,
    pub buckets: BTreeMap<String, BucketCount>,
    pub train_total: usize,
    pub test_total: usize,
}

fn check_lists(lists: &[(&str, &[String])]) -> Result<()> {
    let mut seen: HashSet<&str> = HashSet::new();
    for (group, list) in lists {
        for c in *list {
            if !seen.insert(c) {
                return Err(Error::Protocol(format!(
                    "class {c:?} appears twice (last in the {group} list)"
                )));
            }
        }
    }
    Ok(())
}

/// Builds the plan for `mode`. The three lists must be pairwise disjoint.
pub fn plan_split(
    trimmed: &[String],
    seen: &[String],
    unseen: &[String],
    mode: SplitMode,
    seed: u64,
) -> Result<SplitPlan> {
    check_lists(&[("trimmed", trimmed), ("seen", seen), ("unseen", unseen)])?;
    let (a_pct, b_pct) = mode.train_percent();
    let groups = vec![
        GroupPlan {
            classes: trimmed.to_vec(),
            trimmed: true,
            train_percent: 100,
            train_bucket: Bucket::TrimmedTrainSeen,
            test_bucket: None,
        },
        GroupPlan {
            classes: seen.to_vec(),
            trimmed: false,
            train_percent: a_pct,
            train_bucket: Bucket::UntrimmedTrainSeen,
            test_bucket: Some(Bucket::UntrimmedTestSeen),
        },
        GroupPlan {
            classes: unseen.to_vec(),
            trimmed: false,
            train_percent: b_pct,
            train_bucket: Bucket::UntrimmedTrainUnseen,
            test_bucket: Some(Bucket::UntrimmedTestUnseen),
        },
    ];
    Ok(SplitPlan { mode, seed, groups })
}

/// `count` identifiers `"{prefix}{i:02}"`.
pub fn class_ids(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{prefix}{i:02}")).collect()
}

impl SplitPlan {
    /// The 30 / 20 / 51 class layout with generated identifiers.
    pub fn reference(mode: SplitMode, seed: u64) -> Self {
        plan_split(
            &class_ids("trimmed_", 30),
            &class_ids("seen_", 20),
            &class_ids("unseen_", 51),
            mode,
            seed,
        )
        .expect("generated identifiers are distinct")
    }

    /// Bucket counts when every class has `per_class` samples.
    pub fn counts(&self, per_class: usize) -> SplitCounts {
        let mut buckets: BTreeMap<String, BucketCount> = Bucket::ALL
            .iter()
            .map(|b| {
                (
                    b.name().to_string(),
                    BucketCount {
                        classes: 0,
                        per_class: 0,
                        total: 0,
                    },
                )
            })
            .collect();
        for g in &self.groups {
            let train = g.train_count(per_class);
            let mut add = |bucket: Bucket, n: usize| {
                let entry = buckets.get_mut(bucket.name()).expect("all buckets present");
                if n > 0 {
                    entry.classes += g.classes.len();
                    entry.per_class = n;
                    entry.total += n * g.classes.len();
                }
            };
            add(g.train_bucket, train);
            if let Some(test) = g.test_bucket {
                add(test, per_class - train);
            }
        }
        let sum = |train: bool| {
            Bucket::ALL
                .iter()
                .filter(|b| b.is_train() == train)
                .map(|b| buckets[b.name()].total)
                .sum()
        };
        SplitCounts {
            mode: self.mode,
            per_class,
            train_total: sum(true),
            test_total: sum(false),
            buckets,
        }
    }
}

/// A manifest record tagged with the bucket it was assigned to.
#[derive(Debug, Clone, PartialEq)]
pub struct Assigned {
    pub bucket: Bucket,
    pub record: SampleRecord,
}

/// Assigns manifest records to buckets. Trimmed groups draw from trimmed
/// records, the others from untrimmed records; classes are visited in plan
/// order and each class's records are shuffled by one seeded generator.
pub fn materialize_split(
    plan: &SplitPlan,
    manifest: &DatasetManifest,
) -> Result<(Vec<Assigned>, Vec<Assigned>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for g in &plan.groups {
        for name in &g.classes {
            let label = manifest
                .class_index(name)
                .ok_or_else(|| Error::Protocol(format!("class {name:?} is not in the manifest")))?;
            let mut records: Vec<&SampleRecord> = manifest
                .samples
                .iter()
                .filter(|r| r.label == label && r.trimmed == g.trimmed)
                .collect();
            if records.is_empty() {
                let kind = if g.trimmed { "trimmed" } else { "untrimmed" };
                return Err(Error::Protocol(format!(
                    "class {name:?} has no {kind} samples"
                )));
            }
            records.shuffle(&mut rng);
            let cut = g.train_count(records.len());
            for (i, r) in records.into_iter().enumerate() {
                let assigned = |bucket| Assigned {
                    bucket,
                    record: r.clone(),
                };
                if i < cut {
                    train.push(assigned(g.train_bucket));
                } else {
                    let bucket = g
                        .test_bucket
                        .expect("groups without a test bucket train on everything");
                    test.push(assigned(bucket));
                }
            }
        }
    }
    Ok((train, test))
}
