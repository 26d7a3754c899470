use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub count: u64,
}

/// Ordered bucket counts. `total` always equals the sum of the bucket counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Histogram {
    buckets: Vec<Bucket>,
    total: u64,
}

impl Histogram {
    /// All-zero histogram over the given labels.
    pub fn with_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            buckets: labels
                .into_iter()
                .map(|l| Bucket {
                    label: l.into(),
                    count: 0,
                })
                .collect(),
            total: 0,
        }
    }

    pub fn from_buckets(buckets: Vec<Bucket>) -> Self {
        let total = buckets.iter().map(|b| b.count).sum();
        Self { buckets, total }
    }

    /// Increments the bucket at `index`.
    ///
    /// Panics if `index` is out of range.
    pub fn increment(&mut self, index: usize) {
        self.buckets[index].count += 1;
        self.total += 1;
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> Vec<u64> {
        self.buckets.iter().map(|b| b.count).collect()
    }

    pub fn count_of(&self, label: &str) -> Option<u64> {
        self.buckets.iter().find(|b| b.label == label).map(|b| b.count)
    }

    /// One line per bucket, e.g. `Easy: 3`, followed by the total.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for b in &self.buckets {
            let _ = writeln!(out, "{}: {}", b.label, b.count);
        }
        let _ = write!(out, "Total: {}", self.total);
        out
    }
}

// Deserialization goes through the raw shape and recomputes the total so a
// hand-edited document can never violate the sum invariant.
impl<'de> Deserialize<'de> for Histogram {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            buckets: Vec<Bucket>,
            total: u64,
        }
        let raw = Raw::deserialize(d)?;
        let h = Self::from_buckets(raw.buckets);
        if h.total != raw.total {
            return Err(serde::de::Error::custom(format!(
                "histogram total {} does not match bucket sum {}",
                raw.total, h.total
            )));
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_tracks_increments() {
        let mut h = Histogram::with_labels(["a", "b"]);
        h.increment(1);
        h.increment(1);
        assert_eq!(h.counts(), vec![0, 2]);
        assert_eq!(h.total(), 2);
        assert_eq!(h.count_of("b"), Some(2));
    }

    #[test]
    fn rejects_inconsistent_total() {
        let bad = r#"{"buckets":[{"label":"a","count":2}],"total":3}"#;
        assert!(serde_json::from_str::<Histogram>(bad).is_err());
        let good = r#"{"buckets":[{"label":"a","count":2}],"total":2}"#;
        assert_eq!(serde_json::from_str::<Histogram>(good).unwrap().total(), 2);
    }
}
