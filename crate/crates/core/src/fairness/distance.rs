//! Distances between individuals over their non-sensitive features.
//!
//! Numeric features are min-max scaled to `[0, 1]` with the schema bounds.
//! For Bray-Curtis, nominal codes enter as `code / (cardinality - 1)`; the
//! heterogeneous metrics count nominal mismatches.

use serde::{Deserialize, Serialize};

use crate::mdp::{FeatureSchema, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistanceMetric {
    #[serde(rename = "braycurtis", alias = "BrayCurtis")]
    BrayCurtis,
    #[serde(rename = "HEOM", alias = "heom")]
    Heom,
    #[serde(rename = "HMOM", alias = "hmom")]
    Hmom,
}

impl DistanceMetric {
    pub fn label(self) -> &'static str {
        match self {
            DistanceMetric::BrayCurtis => "braycurtis",
            DistanceMetric::Heom => "HEOM",
            DistanceMetric::Hmom => "HMOM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "braycurtis" => Some(DistanceMetric::BrayCurtis),
            "heom" => Some(DistanceMetric::Heom),
            "hmom" => Some(DistanceMetric::Hmom),
            _ => None,
        }
    }
}

/// The non-sensitive part of a feature vector, scaled and ready for
/// repeated distance evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFeatures {
    numeric: Vec<f64>,
    nominal: Vec<u32>,
    nominal_scaled: Vec<f64>,
}

impl PreparedFeatures {
    pub fn new(schema: &FeatureSchema, x: &FeatureVector) -> Self {
        let mut numeric = Vec::new();
        for (f, &v) in schema.numeric.iter().zip(&x.numeric) {
            if f.sensitive {
                continue;
            }
            let span = f.max - f.min;
            let scaled = if span > 0.0 { ((v - f.min) / span).clamp(0.0, 1.0) } else { 0.0 };
            numeric.push(scaled);
        }
        let mut nominal = Vec::new();
        let mut nominal_scaled = Vec::new();
        for (f, &c) in schema.nominal.iter().zip(&x.nominal) {
            if f.sensitive {
                continue;
            }
            nominal.push(c);
            let top = f.cardinality.saturating_sub(1).max(1) as f64;
            nominal_scaled.push((c as f64 / top).clamp(0.0, 1.0));
        }
        PreparedFeatures { numeric, nominal, nominal_scaled }
    }

    pub fn distance(&self, other: &Self, metric: DistanceMetric) -> f64 {
        match metric {
            DistanceMetric::BrayCurtis => self.braycurtis(other),
            DistanceMetric::Heom => self.heom(other),
            DistanceMetric::Hmom => self.hmom(other),
        }
    }

    /// The `d(i, j)` used by individual fairness: raw Bray-Curtis, or the
    /// exponential similarity of the heterogeneous metrics.
    pub fn pair_term(&self, other: &Self, metric: DistanceMetric, lambda: f64) -> f64 {
        match metric {
            DistanceMetric::BrayCurtis => self.braycurtis(other),
            DistanceMetric::Heom | DistanceMetric::Hmom => {
                similarity_exp(self.distance(other, metric), lambda)
            }
        }
    }

    fn braycurtis(&self, other: &Self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        let pairs = self
            .numeric
            .iter()
            .zip(&other.numeric)
            .chain(self.nominal_scaled.iter().zip(&other.nominal_scaled));
        for (a, b) in pairs {
            num += (a - b).abs();
            den += (a + b).abs();
        }
        if den == 0.0 {
            log::debug!("bray-curtis denominator is zero; distance taken as 0");
            return 0.0;
        }
        num / den
    }

    fn mismatches(&self, other: &Self) -> f64 {
        self.nominal.iter().zip(&other.nominal).filter(|(a, b)| a != b).count() as f64
    }

    fn heom(&self, other: &Self) -> f64 {
        let numeric: f64 = self
            .numeric
            .iter()
            .zip(&other.numeric)
            .map(|(a, b)| ((a - b) * (a - b)).sqrt())
            .sum();
        numeric + self.mismatches(other)
    }

    fn hmom(&self, other: &Self) -> f64 {
        let numeric: f64 =
            self.numeric.iter().zip(&other.numeric).map(|(a, b)| (a - b).abs()).sum();
        numeric + self.mismatches(other)
    }
}

pub fn braycurtis(schema: &FeatureSchema, i: &FeatureVector, j: &FeatureVector) -> f64 {
    PreparedFeatures::new(schema, i).braycurtis(&PreparedFeatures::new(schema, j))
}

pub fn heom(schema: &FeatureSchema, i: &FeatureVector, j: &FeatureVector) -> f64 {
    PreparedFeatures::new(schema, i).heom(&PreparedFeatures::new(schema, j))
}

pub fn hmom(schema: &FeatureSchema, i: &FeatureVector, j: &FeatureVector) -> f64 {
    PreparedFeatures::new(schema, i).hmom(&PreparedFeatures::new(schema, j))
}

pub fn distance(
    metric: DistanceMetric,
    schema: &FeatureSchema,
    i: &FeatureVector,
    j: &FeatureVector,
) -> f64 {
    PreparedFeatures::new(schema, i).distance(&PreparedFeatures::new(schema, j), metric)
}

/// Maps a non-negative distance into `(0, 1]`.
pub fn similarity_exp(raw: f64, lambda: f64) -> f64 {
    (-lambda * raw).exp()
}

/// Total variation distance between two action distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{NominalFeature, NumericFeature};

    fn numeric_schema(n: usize, max: f64) -> FeatureSchema {
        FeatureSchema {
            numeric: (0..n)
                .map(|i| NumericFeature { name: format!("x{i}"), min: 0.0, max, sensitive: false })
                .collect(),
            nominal: vec![],
        }
    }

    fn fv(numeric: &[f64], nominal: &[u32]) -> FeatureVector {
        FeatureVector { numeric: numeric.to_vec(), nominal: nominal.to_vec() }
    }

    #[test]
    fn braycurtis_hand_values() {
        let s = numeric_schema(3, 1.0);
        let a = fv(&[0.1, 0.2, 0.3], &[]);
        assert_eq!(braycurtis(&s, &a, &a), 0.0);
        // max = 1 keeps the raw values unscaled
        let s3 = numeric_schema(3, 3.0);
        let d = braycurtis(&s3, &fv(&[1.0, 2.0, 3.0], &[]), &fv(&[3.0, 2.0, 1.0], &[]));
        assert!((d - 4.0 / 12.0).abs() < 1e-15);
        let s2 = numeric_schema(2, 1.0);
        assert_eq!(braycurtis(&s2, &fv(&[1.0, 0.0], &[]), &fv(&[0.0, 1.0], &[])), 1.0);
        assert_eq!(braycurtis(&s2, &fv(&[0.0, 0.0], &[]), &fv(&[0.0, 0.0], &[])), 0.0);
    }

    #[test]
    fn heterogeneous_hand_values() {
        let s = FeatureSchema {
            numeric: vec![
                NumericFeature { name: "a".into(), min: 0.0, max: 1.0, sensitive: false },
                NumericFeature { name: "b".into(), min: 0.0, max: 1.0, sensitive: false },
            ],
            nominal: vec![NominalFeature { name: "c".into(), cardinality: 2, sensitive: false }],
        };
        let i = fv(&[0.25, 0.5], &[0]);
        let j = fv(&[0.75, 0.5], &[1]);
        assert_eq!(heom(&s, &i, &j), 1.5);
        assert_eq!(hmom(&s, &i, &j), 1.5);
        assert_eq!(heom(&s, &i, &i), 0.0);

        let nominal = FeatureSchema {
            numeric: vec![],
            nominal: (0..4)
                .map(|k| NominalFeature { name: format!("n{k}"), cardinality: 3, sensitive: false })
                .collect(),
        };
        assert_eq!(heom(&nominal, &fv(&[], &[0, 0, 0, 0]), &fv(&[], &[1, 2, 1, 2])), 4.0);
        assert_eq!(hmom(&nominal, &fv(&[], &[0, 0, 0, 0]), &fv(&[], &[1, 2, 1, 2])), 4.0);
    }

    #[test]
    fn heterogeneous_on_unscaled_values() {
        let i = PreparedFeatures { numeric: vec![1.0, 2.0], nominal: vec![0], nominal_scaled: vec![0.0] };
        let j = PreparedFeatures { numeric: vec![3.0, 2.0], nominal: vec![1], nominal_scaled: vec![1.0] };
        assert_eq!(i.heom(&j), 3.0);
        assert_eq!(i.hmom(&j), 3.0);
    }

    #[test]
    fn sensitive_positions_are_ignored() {
        let s = FeatureSchema {
            numeric: vec![
                NumericFeature { name: "age".into(), min: 0.0, max: 100.0, sensitive: true },
                NumericFeature { name: "exp".into(), min: 0.0, max: 10.0, sensitive: false },
            ],
            nominal: vec![NominalFeature { name: "gender".into(), cardinality: 2, sensitive: true }],
        };
        let a = fv(&[20.0, 5.0], &[0]);
        let b = fv(&[80.0, 5.0], &[1]);
        assert_eq!(heom(&s, &a, &b), 0.0);
        assert_eq!(braycurtis(&s, &a, &b), 0.0);
    }

    #[test]
    fn similarity_values() {
        assert_eq!(similarity_exp(0.0, 0.1), 1.0);
        assert!((similarity_exp(3.0, 0.1) - 0.740_818_220_681_717_8).abs() < 1e-15);
        assert!((similarity_exp(10.0, 0.1) - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn total_variation_bounds() {
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(total_variation(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    }
}
