//! CSV and SVG summaries of a run directory.
//!
//! Evolution runs (`history.jsonl`) give a best-so-far curve and a table of
//! every evaluated candidate; generated pools (`pool.jsonl`) and DSE runs
//! (`dse.jsonl`) give their own tables. Runtimes come from the optional
//! `timings.jsonl` side log.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::{DseRecord, PoolRecord};
use crate::evolve::{HistoryRecord, RunDir, TimingRecord};
use crate::placer::{EvalResult, EvalStatus};
use crate::store::{read_jsonl, StoreError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("corrupt store {path}: record {index}: {message}")]
    CorruptStore {
        path: PathBuf,
        index: usize,
        message: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("nothing to report in {0}")]
    Empty(PathBuf),
}

impl From<StoreError> for ReportError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { path, source } => ReportError::Io { path, source },
            StoreError::Corrupt { path, index, message } => ReportError::CorruptStore { path, index, message },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
}

/// `100 * (base - ours) / base`: positive when `ours` is better.
pub fn improvement_pct(base: f64, ours: f64) -> f64 {
    100.0 * (base - ours) / base
}

fn status_name(s: EvalStatus) -> &'static str {
    match s {
        EvalStatus::Success => "success",
        EvalStatus::Divergence => "divergence",
        EvalStatus::Error => "error",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub trial: usize,
    pub best_hpwl: f64,
    pub best_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRow {
    pub id: String,
    /// `initial`, `trial N`, or `pool`.
    pub origin: String,
    pub kind: String,
    pub status: &'static str,
    pub hpwl: Option<f64>,
    pub runtime_s: Option<f64>,
    pub improvement_pct: Option<f64>,
}

impl CandidateRow {
    fn new(id: &str, origin: String, kind: String, eval: &EvalResult, baseline: Option<f64>) -> Self {
        Self {
            id: id.to_string(),
            origin,
            kind,
            status: status_name(eval.status),
            hpwl: eval.hpwl,
            runtime_s: None,
            improvement_pct: match (baseline, eval.success_hpwl()) {
                (Some(b), Some(h)) => Some(improvement_pct(b, h)),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvolutionReport {
    pub baseline: Option<f64>,
    pub curve: Vec<CurvePoint>,
    pub candidates: Vec<CandidateRow>,
}

impl EvolutionReport {
    pub fn from_history(records: &[HistoryRecord]) -> Self {
        let mut rep = Self::default();
        for r in records {
            match r {
                HistoryRecord::Header {
                    kind,
                    baseline,
                    initial,
                    ..
                } => {
                    rep.baseline = *baseline;
                    for m in initial {
                        rep.candidates
                            .push(CandidateRow::new(&m.id, "initial".into(), kind.to_string(), &m.eval, *baseline));
                    }
                    if let Some(best) = initial.first() {
                        rep.curve.push(CurvePoint {
                            trial: 0,
                            best_hpwl: best.hpwl(),
                            best_id: best.id.clone(),
                        });
                    }
                }
                HistoryRecord::Trial(t) => {
                    for c in &t.chains {
                        rep.candidates.push(CandidateRow::new(
                            &c.child.id,
                            format!("trial {}", t.trial),
                            c.child.kind.to_string(),
                            &c.child.eval,
                            rep.baseline,
                        ));
                    }
                    rep.curve.push(CurvePoint {
                        trial: t.trial + 1,
                        best_hpwl: t.best_hpwl,
                        best_id: t.best_id.clone(),
                    });
                }
            }
        }
        rep
    }

    /// Replaces the baseline and recomputes the improvement column.
    pub fn set_baseline(&mut self, baseline: f64) {
        self.baseline = Some(baseline);
        for c in &mut self.candidates {
            c.improvement_pct = c
                .hpwl
                .filter(|_| c.status == "success")
                .map(|h| improvement_pct(baseline, h));
        }
    }

    pub fn attach_timings(&mut self, timings: &[TimingRecord]) {
        attach_timings(&mut self.candidates, timings);
    }

    pub fn curve_csv(&self) -> String {
        to_csv(&self.curve)
    }

    pub fn candidates_csv(&self) -> String {
        to_csv(&self.candidates)
    }

    pub fn curve_svg(&self) -> String {
        let pts: Vec<(f64, f64)> = self.curve.iter().map(|p| (p.trial as f64, p.best_hpwl)).collect();
        svg_plot("Best HPWL so far", "trial", "HPWL", &pts, Mark::Line, self.baseline)
    }

    /// Child HPWL against the trial that produced it.
    pub fn scatter_svg(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .candidates
            .iter()
            .filter_map(|c| {
                let t = c.origin.strip_prefix("trial ")?.parse::<f64>().ok()?;
                Some((t + 1.0, c.hpwl?))
            })
            .collect();
        svg_plot("Candidate HPWL", "trial", "HPWL", &pts, Mark::Dots, self.baseline)
    }
}

/// Fills runtimes from a timing log; the last record per id wins.
pub fn attach_timings(rows: &mut [CandidateRow], timings: &[TimingRecord]) {
    let by_id: HashMap<&str, f64> = timings.iter().map(|t| (t.id.as_str(), t.runtime_s)).collect();
    for c in rows {
        c.runtime_s = by_id.get(c.id.as_str()).copied();
    }
}

pub fn pool_rows(records: &[PoolRecord], baseline: Option<f64>) -> Vec<CandidateRow> {
    records
        .iter()
        .map(|r| CandidateRow::new(&r.id, "pool".into(), r.kind.to_string(), &r.eval, baseline))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DseRow {
    pub step: usize,
    pub phase: String,
    pub id: String,
    pub y: f64,
    pub ei: Option<f64>,
    pub best_so_far: f64,
    pub failure: Option<String>,
}

pub fn dse_rows(records: &[DseRecord]) -> Vec<DseRow> {
    let mut best = f64::INFINITY;
    records
        .iter()
        .filter_map(|r| match r {
            DseRecord::Step(s) => {
                best = best.min(s.y);
                Some(DseRow {
                    step: s.step,
                    phase: format!("{:?}", s.phase).to_lowercase(),
                    id: s.id.clone(),
                    y: s.y,
                    ei: s.ei,
                    best_so_far: best,
                    failure: s.failure.clone(),
                })
            }
            DseRecord::Header { .. } => None,
        })
        .collect()
}

fn to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

#[derive(Clone, Copy)]
enum Mark {
    Line,
    Dots,
}

fn svg_plot(title: &str, xlabel: &str, ylabel: &str, pts: &[(f64, f64)], mark: Mark, refline: Option<f64>) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let ys = pts.iter().map(|p| p.1).chain(refline);
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let (mut x0, mut x1) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    if !(y0 < y1) {
        y0 = if y0.is_finite() { y0 - 1.0 } else { 0.0 };
        y1 = y0 + 2.0;
    }
    if !(x0 < x1) {
        x0 = if x0.is_finite() { x0 - 1.0 } else { 0.0 };
        x1 = x0 + 2.0;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let sy = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<line x1="{L}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{L}" y1="{T}" x2="{L}" y2="{0}" stroke="black"/>"#,
        H - B,
        W - R
    );
    for k in 0..=4 {
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let x = x0 + (x1 - x0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y:.2}</text>"#, L - 6.0, sy(y) + 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x:.0}</text>"#, sx(x), H - B + 18.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, (L + W - R) / 2.0, H - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{ylabel}</text>"#,
        (T + H - B) / 2.0
    );
    if let Some(b) = refline {
        let _ = writeln!(
            s,
            r#"<line x1="{L}" y1="{0}" x2="{1}" y2="{0}" stroke="gray" stroke-dasharray="4 3"/><text x="{1}" y="{2}" text-anchor="end" fill="gray">baseline</text>"#,
            sy(b),
            W - R,
            sy(b) - 4.0
        );
    }
    match mark {
        Mark::Line => {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
                path.join(" ")
            );
        }
        Mark::Dots => {
            for &(x, y) in pts {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="steelblue" fill-opacity="0.6"/>"#,
                    sx(x),
                    sy(y)
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// `baseline.json` holds `{"hpwl": ...}` when a command recorded one.
fn stored_baseline(dir: &Path) -> Option<f64> {
    let text = std::fs::read_to_string(dir.join("baseline.json")).ok()?;
    serde_json::from_str::<serde_json::Value>(&text).ok()?.get("hpwl")?.as_f64()
}

fn write(path: PathBuf, text: String, out: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    std::fs::write(&path, text).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    out.push(path);
    Ok(())
}

/// Writes every report the run directory supports and returns the paths.
/// `baseline` overrides the one stored in an evolution history.
pub fn report(dir: &Path, formats: &[ReportFormat], baseline: Option<f64>) -> Result<Vec<PathBuf>, ReportError> {
    let rd = RunDir::new(dir);
    let csv = formats.contains(&ReportFormat::Csv);
    let svg = formats.contains(&ReportFormat::Svg);
    let mut out = Vec::new();

    let timings: Vec<TimingRecord> = read_jsonl(&rd.timings())?;
    let history: Vec<HistoryRecord> = read_jsonl(&rd.history())?;
    if !history.is_empty() {
        let mut rep = EvolutionReport::from_history(&history);
        if let Some(b) = baseline {
            rep.set_baseline(b);
        }
        rep.attach_timings(&timings);
        if csv {
            write(dir.join("curve.csv"), rep.curve_csv(), &mut out)?;
            write(dir.join("candidates.csv"), rep.candidates_csv(), &mut out)?;
        }
        if svg {
            write(dir.join("curve.svg"), rep.curve_svg(), &mut out)?;
            write(dir.join("scatter.svg"), rep.scatter_svg(), &mut out)?;
        }
    }

    let pool: Vec<PoolRecord> = read_jsonl(&dir.join("pool.jsonl"))?;
    if !pool.is_empty() && csv {
        let mut rows = pool_rows(&pool, baseline.or_else(|| stored_baseline(dir)));
        attach_timings(&mut rows, &timings);
        write(dir.join("pool.csv"), to_csv(&rows), &mut out)?;
    }

    let dse: Vec<DseRecord> = read_jsonl(&dir.join("dse.jsonl"))?;
    if !dse.is_empty() {
        let rows = dse_rows(&dse);
        if csv {
            write(dir.join("dse.csv"), to_csv(&rows), &mut out)?;
        }
        if svg {
            let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.step as f64 + 1.0, r.best_so_far)).collect();
            write(
                dir.join("dse.svg"),
                svg_plot("DSE best loss so far", "evaluations", "normalized loss", &pts, Mark::Line, None),
                &mut out,
            )?;
        }
    }

    if out.is_empty() {
        return Err(ReportError::Empty(dir.to_path_buf()));
    }
    Ok(out)
}
