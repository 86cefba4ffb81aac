use serde::{Deserialize, Serialize};

use crate::util::fnv1a64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Remote,
    Hash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source: EmbeddingSource,
    /// Set when the input had no content, in which case `values` is all zeros.
    pub zero: bool,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Scales to unit length; a zero vector stays zero and is flagged.
    pub fn normalized(values: Vec<f64>, source: EmbeddingSource) -> Self {
        let n = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 && n.is_finite() {
            Self {
                values: values.into_iter().map(|v| v / n).collect(),
                source,
                zero: false,
            }
        } else {
            Self {
                values: vec![0.0; values.len()],
                source,
                zero: true,
            }
        }
    }
}

/// Cosine similarity; `None` if either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "embedding dimensions differ");
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Offline embedding: character 3-grams hashed into `dim` signed buckets,
/// then L2-normalized. Strings shorter than three characters count as one
/// gram.
pub fn hash_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 16, "hash_embed needs dim >= 16");
    let chars: Vec<char> = text.chars().collect();
    let mut v = vec![0.0; dim];
    let mut add = |gram: &[char]| {
        let s: String = gram.iter().collect();
        let h = fnv1a64(s.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    };
    if !chars.is_empty() && chars.len() < 3 {
        add(&chars);
    }
    for w in chars.windows(3) {
        add(w);
    }
    EmbeddingVector::normalized(v, EmbeddingSource::Hash)
}
