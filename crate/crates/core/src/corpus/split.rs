use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(CorpusError::Config(format!("split ratios must be positive: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::Config(format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Review ids per partition, each list sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    /// Materializes the three partitions of `dataset`, preserving its record order.
    pub fn apply(&self, dataset: &Dataset) -> Result<(Dataset, Dataset, Dataset)> {
        let mut part: HashMap<&str, u8> = HashMap::new();
        for (tag, ids) in [(0u8, &self.train), (1, &self.val), (2, &self.test)] {
            for id in ids {
                part.insert(id.as_str(), tag);
            }
        }
        let known: HashMap<&str, ()> = dataset.iter().map(|r| (r.id.as_str(), ())).collect();
        if let Some(missing) = part.keys().find(|id| !known.contains_key(*id)) {
            return Err(CorpusError::UnknownId(missing.to_string()));
        }
        let mut out = (Vec::new(), Vec::new(), Vec::new());
        for rec in dataset.iter() {
            match part.get(rec.id.as_str()) {
                Some(0) => out.0.push(rec.clone()),
                Some(1) => out.1.push(rec.clone()),
                Some(2) => out.2.push(rec.clone()),
                _ => return Err(CorpusError::UnknownId(rec.id.clone())),
            }
        }
        Ok((Dataset::new(out.0), Dataset::new(out.1), Dataset::new(out.2)))
    }
}

/// Partition sizes: val and test are rounded, train takes the remainder, and
/// every partition keeps at least one record.
fn partition_sizes(n: usize, ratios: &SplitRatios) -> (usize, usize, usize) {
    let mut val = ((n as f64) * ratios.val).round().max(1.0) as usize;
    let mut test = ((n as f64) * ratios.test).round().max(1.0) as usize;
    while val + test > n - 1 {
        if val >= test {
            val -= 1;
        } else {
            test -= 1;
        }
    }
    (n - val - test, val, test)
}

/// Course-stratified, seed-deterministic split.
///
/// Within each course the records are shuffled and laid out at evenly spaced
/// positions `(j + u) / n_course` in `[0, 1)` with a random course offset `u`.
/// Sorting every record by position and cutting at the global partition sizes
/// gives each course close to the requested fractions, while small courses
/// still land in a single partition at random.
pub fn split_ids(dataset: &Dataset, ratios: &SplitRatios, split_seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    let n = dataset.len();
    if n < 3 {
        return Err(CorpusError::TooSmall(n));
    }

    let mut courses: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for rec in dataset.iter() {
        courses.entry(rec.course_id.as_str()).or_default().push(rec.id.as_str());
    }

    let mut keyed: Vec<(f64, &str)> = Vec::with_capacity(n);
    for (course, ids) in courses.iter_mut() {
        ids.sort_unstable();
        let mut rng = seed::rng(seed::derive(split_seed, course));
        ids.shuffle(&mut rng);
        let offset: f64 = rng.random();
        let len = ids.len() as f64;
        for (j, id) in ids.iter().enumerate() {
            keyed.push(((j as f64 + offset) / len, id));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));

    let (n_train, n_val, _) = partition_sizes(n, ratios);
    let collect = |slice: &[(f64, &str)]| {
        let mut ids: Vec<String> = slice.iter().map(|(_, id)| id.to_string()).collect();
        ids.sort_unstable();
        ids
    };
    Ok(SplitAssignment {
        train: collect(&keyed[..n_train]),
        val: collect(&keyed[n_train..n_train + n_val]),
        test: collect(&keyed[n_train + n_val..]),
    })
}

pub fn split_dataset(dataset: &Dataset, ratios: &SplitRatios, split_seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    split_ids(dataset, ratios, split_seed)?.apply(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ReviewRecord;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn dataset(n: usize, courses: usize) -> Dataset {
        (0..n)
            .map(|i| ReviewRecord {
                id: format!("r{i:05}"),
                course_id: format!("c{}", i % courses),
                domain_tag: "cs".into(),
                text: String::new(),
                rating: 3.0,
                timestamp: 0,
                behavior: Default::default(),
                completion: None,
            })
            .collect()
    }

    #[test]
    fn ten_records_split_8_1_1() {
        let (tr, va, te) = split_dataset(&dataset(10, 1), &SplitRatios::default(), 1).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (8, 1, 1));
    }

    #[test]
    fn same_seed_same_partition() {
        let ds = dataset(57, 4);
        let a = split_ids(&ds, &SplitRatios::default(), 99).unwrap();
        let b = split_ids(&ds, &SplitRatios::default(), 99).unwrap();
        assert_eq!(a, b);
        let c = split_ids(&ds, &SplitRatios::default(), 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stratified_per_course_fraction() {
        let ds = dataset(1000, 10);
        let split = split_ids(&ds, &SplitRatios::default(), 3).unwrap();
        let train: HashSet<&str> = split.train.iter().map(String::as_str).collect();
        for c in 0..10 {
            let course = format!("c{c}");
            let members: Vec<_> = ds.iter().filter(|r| r.course_id == course).collect();
            let in_train = members.iter().filter(|r| train.contains(r.id.as_str())).count();
            let frac = in_train as f64 / members.len() as f64;
            assert!((frac - 0.8).abs() <= 0.05, "course {course}: train fraction {frac}");
        }
    }

    #[test]
    fn too_small_and_bad_ratios() {
        assert!(matches!(
            split_ids(&dataset(2, 1), &SplitRatios::default(), 0),
            Err(CorpusError::TooSmall(2))
        ));
        let bad = SplitRatios {
            train: 0.7,
            val: 0.1,
            test: 0.1,
        };
        assert!(matches!(
            split_ids(&dataset(10, 1), &bad, 0),
            Err(CorpusError::Config(_))
        ));
    }

    #[test]
    fn input_order_does_not_matter() {
        let ds = dataset(40, 3);
        let mut rev = ds.clone();
        rev.records.reverse();
        assert_eq!(
            split_ids(&ds, &SplitRatios::default(), 8).unwrap(),
            split_ids(&rev, &SplitRatios::default(), 8).unwrap()
        );
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_and_exhaustive(n in 3usize..200, courses in 1usize..12, s in any::<u64>()) {
            let ds = dataset(n, courses);
            let split = split_ids(&ds, &SplitRatios::default(), s).unwrap();
            let mut all: Vec<&String> = split.train.iter().chain(&split.val).chain(&split.test).collect();
            prop_assert_eq!(all.len(), n);
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), n);
            prop_assert!(!split.train.is_empty() && !split.val.is_empty() && !split.test.is_empty());
        }
    }
}
