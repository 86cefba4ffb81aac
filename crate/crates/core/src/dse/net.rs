//! Fusion surrogate: net A maps the placement digest to hidden features
//! `h1`, net B maps `embedding ++ h1` to a predicted loss.
//!
//! Both nets are two dense layers with tanh hidden units. Inputs and target
//! are standardized with corpus statistics stored alongside the weights.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DesignPoint, DseError};
use crate::util::stream_rng;

/// Smallest corpus [`pretrain_surrogate`] accepts.
pub const MIN_CORPUS: usize = 50;
const MAX_RETRIES: usize = 3;
const MAGIC: &[u8; 8] = b"EVOSNET\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Hidden width of net A.
    pub hidden: usize,
    /// Width of `h1`, which is also the hidden width of net B.
    pub feature_width: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            feature_width: 32,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    w: DMatrix<f64>,
    b: DVector<f64>,
}

impl Dense {
    fn new(inputs: usize, outputs: usize, rng: &mut impl Rng, zero: bool) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut d = Self::zeros(inputs, outputs);
        if !zero {
            d.w = DMatrix::from_fn(outputs, inputs, |_, _| rng.random_range(-limit..limit));
        }
        d
    }

    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: DMatrix::zeros(outputs, inputs),
            b: DVector::zeros(outputs),
        }
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.w * x + &self.b
    }

    fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Per-column standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Scaler {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Scaler {
    fn fit(rows: &[&[f64]], dim: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..dim)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v.sqrt() > 1e-12 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    fn apply(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().enumerate().map(|(j, v)| (v - self.mean[j]) / self.std[j]))
    }
}

/// Serialized header preceding the flat weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetHeader {
    pub format: String,
    pub version: u32,
    pub embedding_dim: usize,
    pub digest_dim: usize,
    /// `[inputs, outputs]` per layer: A1, A2, B1, B2.
    pub layers: Vec<[usize; 2]>,
    pub seed: u64,
    pub param_count: usize,
    embedding_scaler: Scaler,
    digest_scaler: Scaler,
    target_mean: f64,
    target_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateNet {
    embedding_dim: usize,
    digest_dim: usize,
    seed: u64,
    layers: [Dense; 4],
    embedding_scaler: Scaler,
    digest_scaler: Scaler,
    target_mean: f64,
    target_std: f64,
}

struct Cache {
    z1: DVector<f64>,
    h: DVector<f64>,
    u: DVector<f64>,
    z3: DVector<f64>,
    out: f64,
}

impl SurrogateNet {
    fn init(embedding_dim: usize, digest_dim: usize, cfg: &NetConfig, corpus: &[DesignPoint]) -> Self {
        let mut rng = stream_rng(cfg.seed, 0);
        let layers = [
            Dense::new(digest_dim, cfg.hidden, &mut rng, false),
            Dense::new(cfg.hidden, cfg.feature_width, &mut rng, false),
            Dense::new(embedding_dim + cfg.feature_width, cfg.feature_width, &mut rng, false),
            Dense::new(cfg.feature_width, 1, &mut rng, true),
        ];
        let emb: Vec<&[f64]> = corpus.iter().map(|p| p.embedding.as_slice()).collect();
        let dig: Vec<&[f64]> = corpus.iter().map(|p| p.digest.as_slice()).collect();
        let ys: Vec<f64> = corpus.iter().filter_map(|p| p.y).collect();
        let ymean = ys.iter().sum::<f64>() / ys.len().max(1) as f64;
        let ystd = (ys.iter().map(|y| (y - ymean).powi(2)).sum::<f64>() / ys.len().max(1) as f64).sqrt();
        Self {
            embedding_dim,
            digest_dim,
            seed: cfg.seed,
            layers,
            embedding_scaler: Scaler::fit(&emb, embedding_dim),
            digest_scaler: Scaler::fit(&dig, digest_dim),
            target_mean: ymean,
            target_std: if ystd > 1e-12 { ystd } else { 1.0 },
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn digest_dim(&self) -> usize {
        self.digest_dim
    }

    fn forward(&self, p: &DesignPoint) -> Cache {
        let [a1, a2, b1, b2] = &self.layers;
        let xd = self.digest_scaler.apply(&p.digest);
        let xe = self.embedding_scaler.apply(&p.embedding);
        let z1 = a1.apply(&xd).map(f64::tanh);
        let h = a2.apply(&z1).map(f64::tanh);
        let u = DVector::from_iterator(xe.len() + h.len(), xe.iter().chain(h.iter()).copied());
        let z3 = b1.apply(&u).map(f64::tanh);
        let out = b2.apply(&z3)[0];
        Cache { z1, h, u, z3, out }
    }

    /// Predicted loss for a design point.
    pub fn predict(&self, p: &DesignPoint) -> f64 {
        self.target_mean + self.target_std * self.forward(p).out
    }

    /// Hidden placement features `h1` of net A.
    pub fn hidden_features(&self, digest: &[f64]) -> Vec<f64> {
        let xd = self.digest_scaler.apply(digest);
        let z1 = self.layers[0].apply(&xd).map(f64::tanh);
        self.layers[1].apply(&z1).map(f64::tanh).as_slice().to_vec()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::len).sum()
    }

    /// Flat parameters: each layer's weights column-major, then its bias,
    /// in layer order A1, A2, B1, B2.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(l.b.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), DseError> {
        if flat.len() != self.param_count() {
            return Err(DseError::DimensionMismatch);
        }
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.as_mut_slice().copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.as_mut_slice().copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// Mean squared error on standardized targets and its gradient with
    /// respect to [`params`](Self::params).
    pub fn loss_and_grad(&self, batch: &[&DesignPoint]) -> (f64, Vec<f64>) {
        let [_, a2, b1, b2] = &self.layers;
        let mut grads: Vec<Dense> = self
            .layers
            .iter()
            .map(|l| Dense::zeros(l.w.ncols(), l.w.nrows()))
            .collect();
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut loss = 0.0;
        for p in batch {
            let c = self.forward(p);
            let t = (p.y.unwrap_or(f64::NAN) - self.target_mean) / self.target_std;
            let err = c.out - t;
            loss += err * err * scale;
            let d_out = 2.0 * err * scale;

            grads[3].w += d_out * c.z3.transpose();
            grads[3].b[0] += d_out;
            let d_a3 = (b2.w.row(0).transpose() * d_out).component_mul(&c.z3.map(|z| 1.0 - z * z));
            grads[2].w += &d_a3 * c.u.transpose();
            grads[2].b += &d_a3;
            let d_u = b1.w.transpose() * &d_a3;
            let d_h = d_u.rows(self.embedding_dim, c.h.len()).into_owned();
            let d_a2 = d_h.component_mul(&c.h.map(|z| 1.0 - z * z));
            grads[1].w += &d_a2 * c.z1.transpose();
            grads[1].b += &d_a2;
            let d_a1 = (a2.w.transpose() * &d_a2).component_mul(&c.z1.map(|z| 1.0 - z * z));
            let xd = self.digest_scaler.apply(&p.digest);
            grads[0].w += &d_a1 * xd.transpose();
            grads[0].b += &d_a1;
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for g in &grads {
            flat.extend_from_slice(g.w.as_slice());
            flat.extend_from_slice(g.b.as_slice());
        }
        (loss, flat)
    }

    pub fn header(&self) -> NetHeader {
        NetHeader {
            format: "evoplace-surrogate".into(),
            version: 1,
            embedding_dim: self.embedding_dim,
            digest_dim: self.digest_dim,
            layers: self.layers.iter().map(|l| [l.w.ncols(), l.w.nrows()]).collect(),
            seed: self.seed,
            param_count: self.param_count(),
            embedding_scaler: self.embedding_scaler.clone(),
            digest_scaler: self.digest_scaler.clone(),
            target_mean: self.target_mean,
            target_std: self.target_std,
        }
    }

    /// Magic, little-endian `u32` header length, JSON header, then the flat
    /// parameters as little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + 8 * self.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in self.params() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DseError> {
        let bad = |m: &str| DseError::BadSurrogate(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
        let h: NetHeader = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
        if h.layers.len() != 4 {
            return Err(bad("expected four layers"));
        }
        let weights = &bytes[12 + hlen..];
        if weights.len() != 8 * h.param_count {
            return Err(bad("weight block size does not match header"));
        }
        let layers = std::array::from_fn(|i| Dense::zeros(h.layers[i][0], h.layers[i][1]));
        let mut net = Self {
            embedding_dim: h.embedding_dim,
            digest_dim: h.digest_dim,
            seed: h.seed,
            layers,
            embedding_scaler: h.embedding_scaler,
            digest_scaler: h.digest_scaler,
            target_mean: h.target_mean,
            target_std: h.target_std,
        };
        let flat: Vec<f64> = weights
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        net.set_params(&flat).map_err(|_| bad("layer shapes do not match param_count"))?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), DseError> {
        let mut f = std::fs::File::create(path).map_err(|e| DseError::Io(e.to_string()))?;
        f.write_all(&self.to_bytes()).map_err(|e| DseError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DseError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| DseError::Io(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

/// Adam first/second moment estimates.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Trains a surrogate on an evaluated corpus by mini-batch gradient descent
/// (Adam updates) on squared error. Returns the net and the mean training
/// loss of each epoch. A non-finite loss restarts training at half the
/// learning rate, at most three times.
pub fn pretrain_surrogate(
    corpus: &[DesignPoint],
    cfg: &NetConfig,
) -> Result<(SurrogateNet, Vec<f64>), DseError> {
    if corpus.len() < MIN_CORPUS {
        return Err(DseError::CorpusTooSmall {
            have: corpus.len(),
            need: MIN_CORPUS,
        });
    }
    let e = corpus[0].embedding.len();
    let d = corpus[0].digest.len();
    if corpus.iter().any(|p| p.embedding.len() != e || p.digest.len() != d) {
        return Err(DseError::DimensionMismatch);
    }
    if corpus.iter().any(|p| !p.y.is_some_and(f64::is_finite)) {
        return Err(DseError::InvalidParams("every corpus point needs a finite y".into()));
    }
    if cfg.batch_size == 0 || cfg.hidden == 0 || cfg.feature_width == 0 {
        return Err(DseError::InvalidParams(format!("{cfg:?}")));
    }
    let mut lr = cfg.learning_rate;
    for _ in 0..=MAX_RETRIES {
        if let Some(done) = train_once(corpus, cfg, e, d, lr) {
            return Ok(done);
        }
        lr /= 2.0;
    }
    Err(DseError::NonFiniteLoss)
}

fn train_once(
    corpus: &[DesignPoint],
    cfg: &NetConfig,
    e: usize,
    d: usize,
    lr: f64,
) -> Option<(SurrogateNet, Vec<f64>)> {
    let mut net = SurrogateNet::init(e, d, cfg, corpus);
    let mut params = net.params();
    let mut adam = Adam {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut rng = stream_rng(cfg.seed, 1);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&DesignPoint> = chunk.iter().map(|&i| &corpus[i]).collect();
            let (loss, grad) = net.loss_and_grad(&batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return None;
            }
            total += loss * chunk.len() as f64;
            adam.step(&mut params, &grad, lr);
            net.set_params(&params).expect("same shape");
        }
        curve.push(total / corpus.len() as f64);
    }
    Some((net, curve))
}
