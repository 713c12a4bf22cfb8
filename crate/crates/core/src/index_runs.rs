//! Serde adapter storing a sorted index list as inclusive `[start, end]` runs.
//! Surface points seen in one frame are mostly contiguous, so this keeps
//! event logs small.

use serde::{de::Error, Deserialize, Deserializer, Serializer};

pub fn to_runs(indices: &[u32]) -> Vec<[u32; 2]> {
    let mut runs: Vec<[u32; 2]> = Vec::new();
    for &i in indices {
        match runs.last_mut() {
            Some(r) if r[1].checked_add(1) == Some(i) => r[1] = i,
            _ => runs.push([i, i]),
        }
    }
    runs
}

pub fn serialize<S: Serializer>(indices: &[u32], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(to_runs(indices))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u32>, D::Error> {
    let runs = Vec::<[u32; 2]>::deserialize(d)?;
    let mut out = Vec::new();
    for [a, b] in runs {
        if b < a || out.last().is_some_and(|&l| l >= a) {
            return Err(D::Error::custom("index runs must be sorted and disjoint"));
        }
        out.extend(a..=b);
    }
    Ok(out)
}
