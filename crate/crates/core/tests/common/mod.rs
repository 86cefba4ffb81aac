//! Oracles shared by the integration tests. Each is written from the
//! definitions, independently of the library code it checks.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use evoplace::bookshelf::BenchmarkCase;
use evoplace::dse::DesignPoint;
use evoplace::evolve::{ucb_score, UcbStats};
use evoplace::placer::PlacementState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Committed toy cases (`.aux` files).
pub fn toy_cases() -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(repo_root().join("cases")).unwrap() {
        let dir = entry.unwrap().path();
        if !dir.is_dir() {
            continue;
        }
        for f in std::fs::read_dir(&dir).unwrap() {
            let f = f.unwrap().path();
            if f.extension().is_some_and(|e| e == "aux") {
                out.push(f);
            }
        }
    }
    out.sort();
    out
}

/// Movable cells uniformly over the middle half of the region, so cells
/// overlap and both objective terms are active.
pub fn scattered_state(case: &BenchmarkCase, seed: u64) -> PlacementState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = case.region();
    let mut s = PlacementState::from_pl(case);
    for &i in case.movable() {
        let c = &case.cells()[i];
        s.x[i] = r.xmin + r.width() * rng.random_range(0.25..0.75) - 0.5 * c.width;
        s.y[i] = r.ymin + r.height() * rng.random_range(0.25..0.75) - 0.5 * c.height;
    }
    s
}

/// Central differences of `f` in every movable coordinate.
pub fn central_differences(
    case: &BenchmarkCase,
    state: &PlacementState,
    h: f64,
    mut f: impl FnMut(&PlacementState) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = case.num_cells();
    let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
    let mut s = state.clone();
    for &i in case.movable() {
        let x0 = s.x[i];
        s.x[i] = x0 + h;
        let fp = f(&s);
        s.x[i] = x0 - h;
        let fm = f(&s);
        s.x[i] = x0;
        gx[i] = (fp - fm) / (2.0 * h);

        let y0 = s.y[i];
        s.y[i] = y0 + h;
        let fp = f(&s);
        s.y[i] = y0 - h;
        let fm = f(&s);
        s.y[i] = y0;
        gy[i] = (fp - fm) / (2.0 * h);
    }
    (gx, gy)
}

/// `‖a − b‖₂ / ‖b‖₂` over both axes.
pub fn relative_error(ax: &[f64], ay: &[f64], bx: &[f64], by: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in ax.iter().chain(ay).zip(bx.iter().chain(by)) {
        num += (a - b) * (a - b);
        den += b * b;
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Smooth landscape over a 3-D embedding with its minimum near a random
/// center. Point ids are `p<index>`.
pub fn planted_pool(n: usize, seed: u64) -> (Vec<DesignPoint>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..0.8)).collect();
    let pool: Vec<DesignPoint> = (0..n)
        .map(|i| DesignPoint {
            id: format!("p{i}"),
            embedding: (0..3).map(|_| rng.random::<f64>()).collect(),
            digest: vec![1.0, 0.5],
            y: None,
        })
        .collect();
    let ys = pool
        .iter()
        .map(|p| {
            let d2: f64 = p.embedding.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
            0.9 - 0.6 * (-d2 / (2.0 * 0.3 * 0.3)).exp() + 0.05 * (4.0 * p.embedding[0]).sin()
        })
        .collect();
    (pool, ys)
}

pub fn pool_index(p: &DesignPoint) -> usize {
    p.id[1..].parse().unwrap()
}

pub fn argmin(ys: &[f64]) -> usize {
    (0..ys.len()).min_by(|&a, &b| ys[a].total_cmp(&ys[b])).unwrap()
}

/// Indices of the best `ceil(frac * n)` values.
pub fn top_fraction(ys: &[f64], frac: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ys.len()).collect();
    idx.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
    idx.truncate(((frac * ys.len() as f64).ceil() as usize).max(1));
    idx
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// A Bernoulli bandit played with the library's UCB score.
pub struct BanditRun {
    /// Arm pulled at each step.
    pub pulls: Vec<usize>,
    /// Cumulative pseudo-regret after each step.
    pub regret: Vec<f64>,
}

pub fn play_bandit(probs: &[f64], steps: usize, lambda: f64, seed: u64) -> BanditRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let best = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut stats = vec![UcbStats::default(); probs.len()];
    let mut pulls = Vec::with_capacity(steps);
    let mut regret = Vec::with_capacity(steps);
    let mut total = 0.0;
    for t in 1..=steps as u64 {
        let arm = (0..probs.len())
            .max_by(|&a, &b| {
                ucb_score(&stats[a], t, lambda)
                    .total_cmp(&ucb_score(&stats[b], t, lambda))
                    .then(b.cmp(&a))
            })
            .unwrap();
        let r = if rng.random::<f64>() < probs[arm] { 1.0 } else { 0.0 };
        stats[arm].record(r);
        total += best - probs[arm];
        pulls.push(arm);
        regret.push(total);
    }
    BanditRun { pulls, regret }
}

/// Seeded selection pool: HPWLs around 100 and embeddings drawn around a
/// few shared directions, so near-clones occur.
pub fn selection_pool(n: usize, seed: u64) -> Vec<evoplace::select::PoolMember> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 8;
    let centers: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            let c = &centers[rng.random_range(0..centers.len())];
            let spread = rng.random_range(0.05..1.0);
            evoplace::select::PoolMember {
                id: format!("c{i:02}"),
                hpwl: 100.0 + rng.random_range(0.0..20.0),
                embedding: c.iter().map(|v| v + spread * rng.random_range(-1.0..1.0)).collect(),
            }
        })
        .collect()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Min-max normalized score, higher is better.
pub fn scores_oracle(members: &[evoplace::select::PoolMember]) -> Vec<f64> {
    let lo = members.iter().map(|m| m.hpwl).fold(f64::INFINITY, f64::min);
    let hi = members.iter().map(|m| m.hpwl).fold(f64::NEG_INFINITY, f64::max);
    members
        .iter()
        .map(|m| if hi > lo { (hi - m.hpwl) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Scores plus `alpha` times the negative cosine similarity of every pair.
pub fn objective_oracle(members: &[evoplace::select::PoolMember], set: &[usize], alpha: f64) -> f64 {
    let f = scores_oracle(members);
    let mut v: f64 = set.iter().map(|&i| f[i]).sum();
    for a in 0..set.len() {
        for b in a + 1..set.len() {
            v -= alpha * cos(&members[set[a]].embedding, &members[set[b]].embedding);
        }
    }
    v
}

/// Best objective over all `m`-subsets, by recursion over combinations.
pub fn exhaustive_optimum(members: &[evoplace::select::PoolMember], m: usize, alpha: f64) -> f64 {
    fn rec(
        members: &[evoplace::select::PoolMember],
        m: usize,
        alpha: f64,
        start: usize,
        cur: &mut Vec<usize>,
        best: &mut f64,
    ) {
        if cur.len() == m {
            *best = best.max(objective_oracle(members, cur, alpha));
            return;
        }
        for i in start..members.len() {
            cur.push(i);
            rec(members, m, alpha, i + 1, cur, best);
            cur.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(members, m, alpha, 0, &mut Vec::new(), &mut best);
    best
}

/// Everything a mock evolution run needs, built the way the CLI does.
pub struct MockSetup {
    pub gateway: evoplace::llm::Gateway,
    pub templates: evoplace::prompt::TemplateSet,
    pub evaluator: evoplace::harness::PlacementEvaluator,
    pub features: String,
    pub baseline: f64,
}

impl MockSetup {
    pub fn new(case: BenchmarkCase, seed: u64) -> Self {
        let features = evoplace::dsl::extract_features(&case).summary();
        let evaluator = evoplace::harness::PlacementEvaluator::new(
            case,
            evoplace::dsl::StrategyBundle::new(),
            evoplace::placer::EngineConfig::default(),
            seed,
        );
        let baseline = evaluator.baseline().success_hpwl().expect("default strategy places");
        Self {
            gateway: evoplace::llm::Gateway::mock(seed),
            templates: evoplace::prompt::TemplateSet::default(),
            evaluator,
            features,
            baseline,
        }
    }

    pub fn env(&self) -> evoplace::evolve::EvolveEnv<'_> {
        evoplace::evolve::EvolveEnv {
            gateway: &self.gateway,
            templates: &self.templates,
            evaluator: &self.evaluator,
            features: &self.features,
        }
    }

    /// Generate `n` candidates, keep a diverse `m` of them.
    pub fn initial_run(
        &self,
        kind: evoplace::dsl::StrategyKind,
        n: usize,
        config: evoplace::evolve::EvolutionConfig,
        workers: usize,
    ) -> evoplace::evolve::EvolutionRun {
        use evoplace::harness::{evaluate_candidates, generate_candidates, select_records};
        let ctx = evoplace::prompt::GenerationContext::new(kind, self.features.clone());
        let seed = evoplace::util::derive_seed(config.seed, "gen");
        let cands = generate_candidates(&self.gateway, &self.templates, &ctx, n, seed);
        let records = evaluate_candidates(&self.gateway, &self.evaluator, &cands, workers);
        let chosen = select_records(&records, config.m, 16, 0.5, 0.5).expect("enough feasible candidates");
        let members = chosen
            .iter()
            .map(|r| evoplace::evolve::PopulationMember::new(kind, r.source.clone().unwrap(), r.eval.clone()))
            .collect();
        evoplace::evolve::EvolutionRun::new(kind, members, config)
            .unwrap()
            .with_baseline(self.baseline)
    }
}

/// Runs `f` on a rayon pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap().install(f)
}

/// Gauss-Jordan solve with partial pivoting, no factorization reuse.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

pub fn se_kernel(p: &evoplace::dse::KernelParams, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    p.signal_var * (-d2 / (2.0 * p.length_scale.powi(2))).exp()
}

/// Posterior from the textbook formulas with explicit solves.
pub fn oracle_predict(xs: &[Vec<f64>], ys: &[f64], p: &evoplace::dse::KernelParams, jitter: f64, x: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let m = ys.iter().sum::<f64>() / n as f64;
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| se_kernel(p, &xs[i], &xs[j]) + if i == j { p.noise_var + jitter } else { 0.0 })
                .collect()
        })
        .collect();
    let kx: Vec<f64> = xs.iter().map(|xi| se_kernel(p, xi, x)).collect();
    let alpha = dense_solve(k.clone(), ys.iter().map(|y| y - m).collect());
    let w = dense_solve(k, kx.clone());
    let mu = m + kx.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>();
    let var = p.signal_var + p.noise_var - kx.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    (mu, var.max(0.0).sqrt())
}

pub fn point(id: usize, embedding: Vec<f64>, digest: Vec<f64>, y: Option<f64>) -> DesignPoint {
    DesignPoint {
        id: format!("p{id}"),
        embedding,
        digest,
        y,
    }
}

pub fn corpus(n: usize, seed: u64, teacher: impl Fn(&[f64], &[f64]) -> f64) -> Vec<DesignPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let e: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let d: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let y = teacher(&e, &d);
            point(i, e, d, Some(y))
        })
        .collect()
}

pub fn linear(e: &[f64], d: &[f64]) -> f64 {
    0.2 + 0.3 * e[0] - 0.2 * e[1] + 0.1 * e[3] + 0.25 * d[0] - 0.15 * d[2]
}

/// Differences only move movable cells, so compare on those.
pub fn movable_only(case: &evoplace::bookshelf::BenchmarkCase, mut g: evoplace::placer::Gradient) -> evoplace::placer::Gradient {
    for (i, c) in case.cells().iter().enumerate() {
        if c.kind.is_fixed() {
            g.gx[i] = 0.0;
            g.gy[i] = 0.0;
        }
    }
    g
}
