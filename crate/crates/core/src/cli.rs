//! The `evoplace` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 when a command fails.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crate::bookshelf::{write_placement, BenchmarkCase};
use crate::config::{load_case, Config};
use crate::dse::{FusionMode, PriorMean, SurrogateNet};
use crate::dsl::{extract_features, parse_any_kind, StrategyBundle, StrategyKind};
use crate::evolve::{run_evolution, EvolutionRun, EvolveEnv, PopulationMember, RunDir, TimingRecord};
use crate::harness::report::{improvement_pct, report, ReportFormat};
use crate::harness::{
    evaluate_candidates, generate_candidates, run_pool_dse, select_records, PlacementEvaluator, PoolRecord,
};
use crate::llm::{BackendMode, Gateway};
use crate::placer::run_global_place_traced;
use crate::prompt::{GenerationContext, TemplateSet};
use crate::store::{read_jsonl, write_json_atomic, JsonlWriter};
use crate::util::derive_seed;

#[derive(Debug, Parser)]
#[command(name = "evoplace", version, about = "Global placement with evolved strategy programs")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for placement, generation and search.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Language model backend.
    #[arg(long, global = true, value_parser = parse_backend)]
    pub backend: Option<BackendMode>,
    /// Parallel evaluation workers.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_backend(s: &str) -> Result<BackendMode, String> {
    s.parse()
}

fn parse_kind(s: &str) -> Result<StrategyKind, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the placer on a case, optionally with strategy files.
    Place {
        #[arg(long)]
        case: Option<String>,
        /// `.strat` files; the slot follows from the outputs each assigns.
        #[arg(long = "strat")]
        strategies: Vec<PathBuf>,
    },
    /// Generate and evaluate candidate strategies into `pool.jsonl`.
    Gen {
        #[arg(long)]
        case: Option<String>,
        #[arg(long, value_parser = parse_kind)]
        component: StrategyKind,
        #[arg(short = 'n', long)]
        count: Option<usize>,
        #[arg(long = "base")]
        base: Vec<PathBuf>,
    },
    /// Pick a diverse, high-scoring subset of a pool.
    Select {
        /// Pool file; `<out>/pool.jsonl` by default.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(short = 'm', long)]
        m: Option<usize>,
        #[arg(short = 'k', long)]
        k: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Evolve one component with UCB parent choice and self-reflection.
    Evolve {
        #[arg(long)]
        case: Option<String>,
        #[arg(long, value_parser = parse_kind)]
        component: StrategyKind,
        /// Previously won strategies for the other slots.
        #[arg(long = "base")]
        base: Vec<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(short = 'm', long)]
        m: Option<usize>,
        /// Seed the population from this pool instead of generating one.
        #[arg(long)]
        pool: Option<PathBuf>,
    },
    /// Budgeted Bayesian search over a generated pool.
    Dse {
        #[arg(long)]
        case: Option<String>,
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        /// Pretrained surrogate used as the GP prior mean.
        #[arg(long)]
        surrogate: Option<PathBuf>,
        #[arg(long, value_enum)]
        fusion: Option<Fusion>,
        #[arg(long = "base")]
        base: Vec<PathBuf>,
    },
    /// Write CSV and SVG summaries of a run directory.
    Report {
        /// Run directory; `--out` by default.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        format: Format,
        /// Baseline HPWL for the improvement column.
        #[arg(long)]
        baseline: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Fusion {
    Residual,
    Raw,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Svg,
    All,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

/// Config file plus command-line overrides. The global seed drives every
/// seeded component.
fn resolve(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if let Some(b) = cli.backend {
        cfg.backend.mode = b;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    cfg.backend.seed = Some(cfg.seed);
    cfg.evolution.seed = cfg.seed;
    cfg.dse.seed = cfg.seed;
    cfg.surrogate.seed = cfg.seed;
    Ok(cfg)
}

fn out_dir(cfg: &Config) -> Result<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("evoplace-out"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn case_of(cfg: &Config, arg: &Option<String>) -> Result<BenchmarkCase> {
    let spec = arg
        .clone()
        .or_else(|| cfg.case.clone())
        .ok_or_else(|| anyhow!("no case given (--case or `case` in the config)"))?;
    Ok(load_case(&spec, cfg.seed)?)
}

fn bundle_of(files: &[PathBuf]) -> Result<StrategyBundle> {
    let mut b = StrategyBundle::new();
    for f in files {
        let src = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        let p = parse_any_kind(&src).with_context(|| format!("in {}", f.display()))?;
        b.set(p);
    }
    Ok(b)
}

fn templates_of(cfg: &Config) -> Result<TemplateSet> {
    Ok(match &cfg.templates {
        Some(d) => TemplateSet::from_dir(d)?,
        None => TemplateSet::default(),
    })
}

fn write_baseline(dir: &Path, hpwl: Option<f64>) -> Result<()> {
    write_json_atomic(&dir.join("baseline.json"), &serde_json::json!({ "hpwl": hpwl }))?;
    Ok(())
}

fn read_pool(path: &Path) -> Result<Vec<PoolRecord>> {
    let records: Vec<PoolRecord> = read_jsonl(path)?;
    if records.is_empty() {
        bail!("pool {} is empty or missing", path.display());
    }
    Ok(records)
}

fn fmt_hpwl(h: Option<f64>) -> String {
    h.map_or_else(|| "-".into(), |h| format!("{h:.6}"))
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    match &cli.command {
        Command::Place { case, strategies } => place(&cfg, cli.out.is_some(), case, strategies),
        Command::Gen {
            case,
            component,
            count,
            base,
        } => gen(&cfg, case, *component, *count, base),
        Command::Select { pool, m, k, alpha, beta } => select(&cfg, pool, *m, *k, *alpha, *beta),
        Command::Evolve {
            case,
            component,
            base,
            trials,
            m,
            pool,
        } => evolve(&cfg, case, *component, base, *trials, *m, pool),
        Command::Dse {
            case,
            pool,
            budget,
            surrogate,
            fusion,
            base,
        } => dse(&cfg, case, pool, *budget, surrogate, *fusion, base),
        Command::Report { run, format, baseline } => {
            let dir = run.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("evoplace-out"));
            let formats = match format {
                Format::Csv => vec![ReportFormat::Csv],
                Format::Svg => vec![ReportFormat::Svg],
                Format::All => vec![ReportFormat::Csv, ReportFormat::Svg],
            };
            for p in report(&dir, &formats, *baseline)? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn place(cfg: &Config, write: bool, case: &Option<String>, files: &[PathBuf]) -> Result<()> {
    let case = case_of(cfg, case)?;
    let bundle = bundle_of(files)?;
    let out = run_global_place_traced(&case, &bundle, &cfg.engine, cfg.seed);
    let r = &out.result;
    println!(
        "case {} status {:?} hpwl {} iterations {} overflow {}",
        case.name(),
        r.status,
        fmt_hpwl(r.hpwl),
        r.iterations,
        r.overflow_final.map_or_else(|| "-".into(), |o| format!("{o:.4}"))
    );
    if let Some(m) = &r.message {
        println!("message {m}");
    }
    if write {
        let dir = out_dir(cfg)?;
        if let Some(state) = &out.state {
            let pl = dir.join(format!("{}.pl", case.name()));
            write_placement(&case, state, &pl)?;
            println!("wrote {}", pl.display());
        }
        write_json_atomic(&dir.join("result.json"), r)?;
    }
    Ok(())
}

struct Setup {
    case: BenchmarkCase,
    gateway: Gateway,
    templates: TemplateSet,
    evaluator: PlacementEvaluator,
    features: String,
    baseline: Option<f64>,
}

fn setup(cfg: &Config, case: &Option<String>, base: &[PathBuf]) -> Result<Setup> {
    let case = case_of(cfg, case)?;
    let gateway = Gateway::new(cfg.backend.clone())?;
    let templates = templates_of(cfg)?;
    let evaluator = PlacementEvaluator::new(case.clone(), bundle_of(base)?, cfg.engine.clone(), cfg.seed);
    let features = extract_features(&case).summary();
    let baseline = evaluator.baseline().success_hpwl();
    Ok(Setup {
        case,
        gateway,
        templates,
        evaluator,
        features,
        baseline,
    })
}

fn generate_pool(cfg: &Config, s: &Setup, kind: StrategyKind, n: usize) -> Vec<PoolRecord> {
    let ctx = GenerationContext::new(kind, s.features.clone());
    let cands = generate_candidates(&s.gateway, &s.templates, &ctx, n, derive_seed(cfg.seed, "gen"));
    evaluate_candidates(&s.gateway, &s.evaluator, &cands, cfg.workers())
}

fn gen(
    cfg: &Config,
    case: &Option<String>,
    kind: StrategyKind,
    count: Option<usize>,
    base: &[PathBuf],
) -> Result<()> {
    let s = setup(cfg, case, base)?;
    let dir = out_dir(cfg)?;
    let n = count.unwrap_or(cfg.selection.candidates);
    let records = generate_pool(cfg, &s, kind, n);
    let w = JsonlWriter::create(&dir.join("pool.jsonl"))?;
    let timings = JsonlWriter::create(&RunDir::new(&dir).timings())?;
    for r in &records {
        w.append(r)?;
        timings.append(&TimingRecord::now(&r.id, None, r.eval.runtime_s))?;
    }
    write_baseline(&dir, s.baseline)?;
    let ok: Vec<&PoolRecord> = records.iter().filter(|r| r.eval.is_success()).collect();
    println!(
        "case {} component {kind}: {} candidates, {} placed, baseline hpwl {}",
        s.case.name(),
        records.len(),
        ok.len(),
        fmt_hpwl(s.baseline)
    );
    if let Some(best) = ok.iter().min_by(|a, b| a.eval.hpwl.partial_cmp(&b.eval.hpwl).expect("finite")) {
        let h = best.eval.hpwl.expect("success has hpwl");
        let imp = s.baseline.map_or_else(String::new, |b| format!(" ({:+.2}%)", improvement_pct(b, h)));
        println!("best {} hpwl {h:.6}{imp}", best.id);
    }
    println!("wrote {}", dir.join("pool.jsonl").display());
    Ok(())
}

fn select(
    cfg: &Config,
    pool: &Option<PathBuf>,
    m: Option<usize>,
    k: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
) -> Result<()> {
    let dir = out_dir(cfg)?;
    let path = pool.clone().unwrap_or_else(|| dir.join("pool.jsonl"));
    let records = read_pool(&path)?;
    let m = m.unwrap_or(cfg.evolution.m);
    let sel = &cfg.selection;
    let picked = select_records(
        &records,
        m,
        k.unwrap_or(sel.k),
        alpha.unwrap_or(sel.alpha),
        beta.unwrap_or(sel.beta),
    )?;
    let w = JsonlWriter::create(&dir.join("selected.jsonl"))?;
    for r in &picked {
        w.append(*r)?;
        println!("{} {} hpwl {}", r.id, r.kind, fmt_hpwl(r.eval.hpwl));
    }
    println!("wrote {}", dir.join("selected.jsonl").display());
    Ok(())
}

fn evolve(
    cfg: &Config,
    case: &Option<String>,
    kind: StrategyKind,
    base: &[PathBuf],
    trials: Option<usize>,
    m: Option<usize>,
    pool: &Option<PathBuf>,
) -> Result<()> {
    let s = setup(cfg, case, base)?;
    let dir = out_dir(cfg)?;
    let mut ecfg = cfg.evolution.clone();
    if let Some(t) = trials {
        ecfg.trials = t;
    }
    if let Some(m) = m {
        ecfg.m = m;
    }
    let records = match pool {
        Some(p) => read_pool(p)?.into_iter().filter(|r| r.kind == kind).collect(),
        None => generate_pool(cfg, &s, kind, cfg.selection.candidates.max(ecfg.m)),
    };
    let sel = &cfg.selection;
    let chosen = select_records(&records, ecfg.m, sel.k, sel.alpha, sel.beta)?;
    // Members are re-scored with this run's evaluator so every HPWL in the
    // history comes from the same placement setup.
    let initial: Vec<PopulationMember> = chosen
        .iter()
        .filter_map(|r| r.source.clone())
        .map(|src| {
            let eval = crate::harness::evaluate_isolated(&s.evaluator, kind, &src);
            PopulationMember::new(kind, src, eval)
        })
        .collect();
    let mut run = EvolutionRun::new(kind, initial, ecfg)?;
    if let Some(b) = s.baseline {
        run = run.with_baseline(b);
    }
    write_baseline(&dir, s.baseline)?;
    let env = EvolveEnv {
        gateway: &s.gateway,
        templates: &s.templates,
        evaluator: &s.evaluator,
        features: &s.features,
    };
    let outcome = run_evolution(&env, run, Some(&dir))?;
    let best = outcome.best();
    let imp = s
        .baseline
        .map_or_else(String::new, |b| format!(" ({:+.2}% vs baseline {b:.6})", improvement_pct(b, best.hpwl())));
    println!(
        "case {} component {kind}: {} trials, best {} hpwl {:.6}{imp}",
        s.case.name(),
        outcome.run.t,
        best.id,
        best.hpwl()
    );
    let strat = dir.join("best.strat");
    std::fs::write(&strat, &best.source).with_context(|| format!("writing {}", strat.display()))?;
    println!("wrote {} and {}", RunDir::new(&dir).history().display(), strat.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn dse(
    cfg: &Config,
    case: &Option<String>,
    pool: &Option<PathBuf>,
    budget: Option<usize>,
    surrogate: &Option<PathBuf>,
    fusion: Option<Fusion>,
    base: &[PathBuf],
) -> Result<()> {
    let case = case_of(cfg, case)?;
    let dir = out_dir(cfg)?;
    let path = pool.clone().unwrap_or_else(|| dir.join("pool.jsonl"));
    let records = read_pool(&path)?;
    let evaluator = PlacementEvaluator::new(case.clone(), bundle_of(base)?, cfg.engine.clone(), cfg.seed);
    let mut dcfg = cfg.dse.clone();
    if let Some(b) = budget {
        dcfg.budget = b;
    }
    if let Some(f) = fusion {
        dcfg.fusion = match f {
            Fusion::Residual => FusionMode::Residual,
            Fusion::Raw => FusionMode::Raw,
        };
    }
    let net = surrogate.as_deref().map(SurrogateNet::load).transpose()?;
    let prior = net.as_ref().map(|n| n as &dyn PriorMean);
    let digest = extract_features(&case).digest();
    let store = dir.join("dse.jsonl");
    let out = run_pool_dse(&evaluator, &records, &digest, &dcfg, prior, Some(&store))?;
    let best = out.best_step();
    println!(
        "case {}: {} evaluations of {} candidates, best {} loss {:.6}",
        case.name(),
        out.steps.len(),
        records.len(),
        best.id,
        best.y
    );
    println!("wrote {}", store.display());
    Ok(())
}
