//! Experiment harness: a grid of `(N, D, r, λ)` cells, each averaged over
//! freshly generated instances.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use cfx_core::explain::{explain, metrics, Metrics};
use cfx_core::{generate, precompute, DesiredSpace, GenerationConfig, SolverConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{best_non_selected, solve_factual};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Column order of the report CSV.
pub const CSV_HEADER: [&str; 12] = [
    "N",
    "D",
    "r",
    "lambda",
    "q_factual",
    "q_new",
    "w2",
    "sparsity",
    "avg_time_s",
    "median_time_s",
    "tl_count",
    "gap",
];

/// Placeholder for fields without a value (the gap when nothing timed out).
pub const NULL_MARKER: &str = "-";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesiredRule {
    /// Force open the best candidate left out by the factual solution.
    #[default]
    BestNonSelected,
    Fixed { forced_open: Vec<usize>, forced_closed: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub r: Vec<usize>,
    pub lambda: Vec<f64>,
    pub instances_per_cell: usize,
    pub alpha: f64,
    pub n_competitors: usize,
    pub time_limit_s: f64,
    pub base_seed: u64,
    pub desired: DesiredRule,
    /// Inner-solver settings; alpha, lambda, budget, time limit and seed are
    /// set per run.
    pub solver: SolverConfig,
    /// Worker threads; each instance is solved on one thread.
    pub threads: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            n: vec![50, 100, 200],
            d: vec![10, 20],
            r: vec![2, 4, 8],
            lambda: vec![0.1, 1.0],
            instances_per_cell: 10,
            alpha: 1.0,
            n_competitors: 5,
            time_limit_s: 3600.0,
            base_seed: 0,
            desired: DesiredRule::default(),
            solver: SolverConfig::default(),
            threads: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub lambda: f64,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text).context("parsing experiment spec")?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for (name, list) in [("n", &self.n), ("d", &self.d), ("r", &self.r)] {
            if list.is_empty() || list.contains(&0) {
                bail!("grid entry {name} must be a nonempty list of positive integers");
            }
        }
        if self.lambda.is_empty() || self.lambda.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            bail!("grid entry lambda must be a nonempty list of nonnegative numbers");
        }
        if self.instances_per_cell == 0 {
            bail!("instances_per_cell must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            bail!("alpha must be positive");
        }
        if self.n_competitors == 0 {
            bail!("n_competitors must be at least 1");
        }
        if !(self.time_limit_s > 0.0) {
            bail!("time_limit_s must be positive");
        }
        if self.threads == 0 {
            bail!("threads must be at least 1");
        }
        if self.cells().is_empty() {
            bail!("no grid cell has r <= D");
        }
        Ok(())
    }

    /// Grid cells in row-major order over `(N, D, r, λ)`; cells with `r ≥ D`
    /// are skipped since they leave no choice.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &d in &self.d {
                for &r in self.r.iter().filter(|&&r| r < d) {
                    for &lambda in &self.lambda {
                        out.push(Cell { n, d, r, lambda });
                    }
                }
            }
        }
        out
    }
}

/// Seed of the `i`-th instance with `N` customers and `D` candidates; shared
/// by every `(r, λ)` so cells differing only in those see the same sites.
pub fn instance_seed(base: u64, n: usize, d: usize, i: usize) -> u64 {
    let mut h = base;
    for v in [n as u64, d as u64, i as u64] {
        h = splitmix(h ^ v);
    }
    h
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One line of the raw log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub schema_version: u32,
    #[serde(flatten)]
    pub cell: Cell,
    pub instance: usize,
    pub seed: u64,
    pub forced_open: Vec<usize>,
    pub forced_closed: Vec<usize>,
    pub open: Option<Vec<usize>>,
    pub metrics: Option<Metrics>,
    /// Factual solve time, excluded from the reported times.
    pub factual_time_s: f64,
    pub error: Option<String>,
}

impl RawRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

pub fn run_instance(spec: &ExperimentSpec, cell: Cell, i: usize) -> RawRecord {
    let seed = instance_seed(spec.base_seed, cell.n, cell.d, i);
    let mut rec = RawRecord {
        schema_version: REPORT_SCHEMA_VERSION,
        cell,
        instance: i,
        seed,
        forced_open: Vec::new(),
        forced_closed: Vec::new(),
        open: None,
        metrics: None,
        factual_time_s: 0.0,
        error: None,
    };
    let t = Instant::now();
    let inst = match generate(&GenerationConfig::new(cell.n, cell.d, spec.n_competitors, seed)) {
        Ok(inst) => inst,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    let pre = precompute(&inst);
    let factual = match solve_factual(&pre, cell.r) {
        Ok(f) => f,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    rec.factual_time_s = t.elapsed().as_secs_f64();
    let desired = match &spec.desired {
        DesiredRule::BestNonSelected => best_non_selected(&pre, &factual),
        DesiredRule::Fixed { forced_open, forced_closed } => {
            DesiredSpace::new(forced_open.clone(), forced_closed.clone())
        }
    };
    rec.forced_open = desired.forced_open.clone();
    rec.forced_closed = desired.forced_closed.clone();
    let cfg = SolverConfig {
        alpha: spec.alpha,
        lambda: cell.lambda,
        budget: cell.r,
        time_limit_s: Some(spec.time_limit_s),
        seed,
        ..spec.solver.clone()
    };
    match explain(&pre, &factual, &desired, &cfg) {
        Ok(ex) => {
            rec.open = Some(ex.open_indices());
            rec.metrics = Some(metrics(&ex, &pre));
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

/// Aggregate of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(flatten)]
    pub cell: Cell,
    pub q_factual: Option<f64>,
    pub q_new: Option<f64>,
    pub w2: Option<f64>,
    pub sparsity: Option<f64>,
    pub avg_time_s: Option<f64>,
    pub median_time_s: Option<f64>,
    /// Instances that reached the time limit.
    pub tl_count: usize,
    /// Mean gap over the timed-out instances; `None` when none timed out.
    pub gap: Option<f64>,
    pub solved: usize,
    pub failed: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 0 { 0.5 * (s[m - 1] + s[m]) } else { s[m] })
}

pub fn aggregate(cell: Cell, records: &[RawRecord]) -> ReportRow {
    let ok: Vec<&Metrics> = records.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let col = |f: fn(&Metrics) -> f64| ok.iter().map(|m| f(m)).collect::<Vec<f64>>();
    let times = col(|m| m.solve_time_s);
    let timed_out: Vec<f64> = ok.iter().filter(|m| m.timed_out).map(|m| m.gap).collect();
    ReportRow {
        cell,
        q_factual: mean(&col(|m| m.q_factual)),
        q_new: mean(&col(|m| m.q_new)),
        w2: mean(&col(|m| m.w2)),
        sparsity: mean(&col(|m| m.sparsity)),
        avg_time_s: mean(&times),
        median_time_s: median(&times),
        tl_count: timed_out.len(),
        gap: mean(&timed_out),
        solved: ok.len(),
        failed: records.len() - ok.len(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NULL_MARKER.to_string(), |x| x.to_string())
}

impl ReportRow {
    pub fn csv_fields(&self) -> [String; 12] {
        [
            self.cell.n.to_string(),
            self.cell.d.to_string(),
            self.cell.r.to_string(),
            self.cell.lambda.to_string(),
            fmt_opt(self.q_factual),
            fmt_opt(self.q_new),
            fmt_opt(self.w2),
            fmt_opt(self.sparsity),
            fmt_opt(self.avg_time_s),
            fmt_opt(self.median_time_s),
            self.tl_count.to_string(),
            fmt_opt(self.gap),
        ]
    }
}

pub struct ExperimentOutput {
    pub rows: Vec<ReportRow>,
    pub records: Vec<RawRecord>,
}

/// Runs every instance of every cell; output order is the cell order and
/// then instance order regardless of scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> anyhow::Result<ExperimentOutput> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|c| (0..spec.instances_per_cell).map(move |i| (c, i))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(spec.threads).build()?;
    let records: Vec<RawRecord> =
        pool.install(|| jobs.par_iter().map(|&(c, i)| run_instance(spec, cells[c], i)).collect());
    let rows = cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let k = spec.instances_per_cell;
            aggregate(*cell, &records[c * k..(c + 1) * k])
        })
        .collect();
    Ok(ExperimentOutput { rows, records })
}

/// Appends rows to a report CSV, writing the header only when the file is
/// new or empty. An existing file with a different header is rejected.
pub fn append_csv(path: impl AsRef<Path>, rows: &[ReportRow]) -> anyhow::Result<()> {
    let path = path.as_ref();
    let fresh = match File::open(path) {
        Ok(f) => {
            let mut first = String::new();
            BufReader::new(f).read_line(&mut first)?;
            if !first.is_empty() && first.trim_end() != CSV_HEADER.join(",") {
                bail!("{} has a different header: {}", path.display(), first.trim_end());
            }
            first.is_empty()
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => true,
        Err(e) => return Err(e.into()),
    };
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(CSV_HEADER)?;
    }
    for row in rows {
        w.write_record(row.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Appends one JSON object per line.
pub fn append_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> anyhow::Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    file.write_all(&buf)?;
    Ok(())
}

/// Per-instance timing categories, one row each.
pub fn write_timings(path: impl AsRef<Path>, records: &[RawRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["N", "D", "r", "lambda", "instance", "factual_s", "warm_start_s", "bound_s", "solve_s", "timed_out"])?;
    for rec in records {
        let Some(m) = &rec.metrics else { continue };
        w.write_record([
            rec.cell.n.to_string(),
            rec.cell.d.to_string(),
            rec.cell.r.to_string(),
            rec.cell.lambda.to_string(),
            rec.instance.to_string(),
            rec.factual_time_s.to_string(),
            m.warm_start_time_s.to_string(),
            m.bound_time_s.to_string(),
            m.solve_time_s.to_string(),
            m.timed_out.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics_with(time: f64, timed_out: bool, gap: f64) -> Metrics {
        Metrics {
            q_factual: 1.0,
            q_new: 1.0,
            w2: 2.0,
            sparsity: 0.1,
            solve_time_s: time,
            warm_start_time_s: 0.0,
            bound_time_s: 0.0,
            timed_out,
            gap,
        }
    }

    fn record(m: Option<Metrics>) -> RawRecord {
        RawRecord {
            schema_version: REPORT_SCHEMA_VERSION,
            cell: Cell { n: 1, d: 2, r: 1, lambda: 0.1 },
            instance: 0,
            seed: 0,
            forced_open: vec![],
            forced_closed: vec![],
            open: None,
            error: m.is_none().then(|| "boom".to_string()),
            metrics: m,
            factual_time_s: 0.0,
        }
    }

    #[test]
    fn gap_only_when_timed_out() {
        let cell = Cell { n: 1, d: 2, r: 1, lambda: 0.1 };
        let row = aggregate(cell, &[record(Some(metrics_with(1.0, false, 0.3))), record(None)]);
        assert_eq!((row.tl_count, row.gap, row.solved, row.failed), (0, None, 1, 1));
        assert_eq!(row.csv_fields()[11], NULL_MARKER);
        let row = aggregate(
            cell,
            &[
                record(Some(metrics_with(1.0, true, 0.2))),
                record(Some(metrics_with(3.0, true, 0.4))),
                record(Some(metrics_with(8.0, false, 0.9))),
            ],
        );
        assert_eq!(row.tl_count, 2);
        assert!((row.gap.unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(row.median_time_s, Some(3.0));
        assert_eq!(row.avg_time_s, Some(4.0));
    }

    #[test]
    fn cells_skip_degenerate_budgets() {
        let spec = ExperimentSpec { n: vec![5], d: vec![3], r: vec![2, 3], lambda: vec![0.1], ..Default::default() };
        assert_eq!(spec.cells(), vec![Cell { n: 5, d: 3, r: 2, lambda: 0.1 }]);
    }

    #[test]
    fn seeds_differ_across_cells() {
        assert_ne!(instance_seed(0, 50, 10, 0), instance_seed(0, 50, 10, 1));
        assert_ne!(instance_seed(0, 50, 10, 0), instance_seed(0, 100, 10, 0));
        assert_eq!(instance_seed(7, 50, 10, 3), instance_seed(7, 50, 10, 3));
    }
}
