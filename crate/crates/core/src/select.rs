//! Diversity-aware top-m selection.
//!
//! The objective over a subset `A` is `sum f(a) + alpha * sum dis(a_i, a_j)`
//! over unordered pairs, with `f` the pool-normalized score and `dis` the
//! negative cosine similarity of embeddings. Exact maximization is a
//! clique-type problem, so [`select_diverse`] grows the set greedily from
//! the best member; [`brute_force_select`] is the exhaustive reference.

use std::cmp::Ordering;

use thiserror::Error;

use crate::llm::{cosine, EmbeddingVector};
use crate::placer::EvalResult;

/// Added to the score denominator so equal extremes do not divide by zero.
pub const SCORE_EPS: f64 = 1e-12;

/// Largest pool [`brute_force_select`] accepts.
pub const BRUTE_FORCE_MAX: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectError {
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("pool has {have} successful members, {need} needed")]
    InsufficientPool { have: usize, need: usize },
    #[error("pool of {0} is too large for exhaustive search")]
    PoolTooLarge(usize),
    #[error("invalid selection parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolMember {
    pub id: String,
    pub hpwl: f64,
    pub embedding: Vec<f64>,
}

/// Successful candidates with their embeddings. Failed runs are dropped on
/// construction, before any normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    members: Vec<PoolMember>,
    hpwl_min: f64,
    hpwl_max: f64,
}

impl CandidatePool {
    pub fn new(members: Vec<PoolMember>) -> Self {
        let members: Vec<PoolMember> = members.into_iter().filter(|m| m.hpwl.is_finite()).collect();
        let hpwl_min = members.iter().map(|m| m.hpwl).fold(f64::INFINITY, f64::min);
        let hpwl_max = members.iter().map(|m| m.hpwl).fold(f64::NEG_INFINITY, f64::max);
        Self {
            members,
            hpwl_min,
            hpwl_max,
        }
    }

    /// Pool from evaluation results; only `Success` entries are kept.
    pub fn from_results<'a>(
        entries: impl IntoIterator<Item = (&'a str, &'a EvalResult, &'a EmbeddingVector)>,
    ) -> Self {
        Self::new(
            entries
                .into_iter()
                .filter_map(|(id, r, e)| {
                    r.success_hpwl().map(|h| PoolMember {
                        id: id.to_string(),
                        hpwl: h,
                        embedding: e.values.clone(),
                    })
                })
                .collect(),
        )
    }

    pub fn members(&self) -> &[PoolMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn hpwl_range(&self) -> (f64, f64) {
        (self.hpwl_min, self.hpwl_max)
    }

    /// All members share one HPWL (or there are fewer than two), so every
    /// score is 0.
    pub fn is_degenerate(&self) -> bool {
        self.members.len() < 2 || self.hpwl_max == self.hpwl_min
    }

    /// `(hpwl_max - hpwl) / (hpwl_max - hpwl_min + eps)`, in `[0, 1]`.
    pub fn score_of(&self, hpwl: f64) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        ((self.hpwl_max - hpwl) / (self.hpwl_max - self.hpwl_min + SCORE_EPS)).clamp(0.0, 1.0)
    }

    pub fn scores(&self) -> Vec<f64> {
        self.members.iter().map(|m| self.score_of(m.hpwl)).collect()
    }

    /// Member indices by descending score, then ascending HPWL, then id.
    pub fn ranking(&self) -> Vec<usize> {
        let f = self.scores();
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.cmp_members(a, b, f[a], f[b]));
        idx
    }

    /// Better member first: higher value, then lower HPWL, then lower id.
    fn cmp_members(&self, a: usize, b: usize, va: f64, vb: f64) -> Ordering {
        vb.total_cmp(&va)
            .then(self.members[a].hpwl.total_cmp(&self.members[b].hpwl))
            .then_with(|| self.members[a].id.cmp(&self.members[b].id))
    }
}

/// Normalized score of member `i`.
pub fn normalized_score(pool: &CandidatePool, i: usize) -> f64 {
    pool.score_of(pool.members[i].hpwl)
}

/// Negative cosine similarity, in `[-1, 1]`.
pub fn dis(a: &[f64], b: &[f64]) -> Result<f64, SelectError> {
    cosine(a, b).map(|c| -c).ok_or(SelectError::ZeroNorm)
}

/// Pairwise `dis` matrix of the pool.
fn dis_matrix(pool: &CandidatePool) -> Result<Vec<Vec<f64>>, SelectError> {
    let n = pool.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = dis(&pool.members[i].embedding, &pool.members[j].embedding)?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

/// Subset objective: scores plus `alpha` times the pairwise diversity.
pub fn subset_objective(pool: &CandidatePool, set: &[usize], alpha: f64) -> Result<f64, SelectError> {
    let f = pool.scores();
    let mut total: f64 = set.iter().map(|&i| f[i]).sum();
    for (k, &i) in set.iter().enumerate() {
        for &j in &set[k + 1..] {
            total += alpha * dis(&pool.members[i].embedding, &pool.members[j].embedding)?;
        }
    }
    Ok(total)
}

/// Greedy selection of `m` members: keep the top `k` by score, seed with the
/// best one `a*`, then repeatedly add the member maximizing
/// `f(a) + alpha * sum_{b in A, b != a*} dis(a, b) + beta * dis(a, a*)`.
/// Returns pool indices in selection order.
pub fn select_diverse(
    pool: &CandidatePool,
    m: usize,
    k: usize,
    alpha: f64,
    beta: f64,
) -> Result<Vec<usize>, SelectError> {
    if m == 0 || k < m {
        return Err(SelectError::InvalidParams(format!("need k >= m >= 1, got m={m} k={k}")));
    }
    if pool.len() < m {
        return Err(SelectError::InsufficientPool {
            have: pool.len(),
            need: m,
        });
    }
    let f = pool.scores();
    let d = dis_matrix(pool)?;
    let mut rest: Vec<usize> = pool.ranking().into_iter().take(k).collect();
    let best = rest.remove(0);
    let mut chosen = vec![best];
    // Running diversity sums against the non-seed members of A.
    let mut div = vec![0.0; pool.len()];
    while chosen.len() < m {
        let gain = |i: usize| f[i] + alpha * div[i] + beta * d[i][best];
        let (pos, &next) = rest
            .iter()
            .enumerate()
            .min_by(|(_, &a), (_, &b)| pool.cmp_members(a, b, gain(a), gain(b)))
            .expect("pool has at least m members");
        rest.remove(pos);
        chosen.push(next);
        for &i in &rest {
            div[i] += d[i][next];
        }
    }
    Ok(chosen)
}

/// Exact maximizer of the subset objective over all `m`-subsets, for pools
/// of at most [`BRUTE_FORCE_MAX`]. Ties go to the lexicographically first
/// subset of the score ranking.
pub fn brute_force_select(pool: &CandidatePool, m: usize, alpha: f64) -> Result<Vec<usize>, SelectError> {
    let n = pool.len();
    if n > BRUTE_FORCE_MAX {
        return Err(SelectError::PoolTooLarge(n));
    }
    if m == 0 || n < m {
        return Err(SelectError::InsufficientPool { have: n, need: m.max(1) });
    }
    let f = pool.scores();
    let d = dis_matrix(pool)?;
    let order = pool.ranking();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let set: Vec<usize> = (0..n).filter(|b| mask & (1 << b) != 0).map(|b| order[b]).collect();
        let mut v: f64 = set.iter().map(|&i| f[i]).sum();
        for (a, &i) in set.iter().enumerate() {
            for &j in &set[a + 1..] {
                v += alpha * d[i][j];
            }
        }
        let better = match &best {
            None => true,
            Some((bv, bset)) => v > *bv || (v == *bv && set < *bset),
        };
        if better {
            best = Some((v, set));
        }
    }
    Ok(best.expect("at least one subset").1)
}
