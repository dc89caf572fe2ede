//! Harnesses comparing the strict and relaxed solvers (accuracy of the
//! relaxed value and plan) and the two mixup modes (iterations and time).

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{choose_size, job_rng, median_size, sample_lambda, AugmentConfig};
use crate::barycenter::{solve_mixup, MixupProblem};
use crate::error::{Error, Result};
use crate::fgw::{solve_fgw_relaxed, solve_fgw_strict, FgwConfig};
use crate::graph::Graph;

/// Values at or below this are treated as zero distances in MAPE.
pub const MAPE_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Record wall times. Disabled, the time columns are zero and reports
    /// are byte-for-byte reproducible.
    pub record_time: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            record_time: true,
        }
    }
}

/// One row of the infeasibility report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: usize,
    pub n1: usize,
    pub n2: usize,
    pub fgw_strict: f64,
    pub fgw_relaxed: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub t_diff: f64,
    pub iters_strict: usize,
    pub iters_relaxed: usize,
    pub time_strict_s: f64,
    pub time_relaxed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    pub pairs_requested: usize,
    pub mae: f64,
    pub mae_std: f64,
    /// Mean of `|d - d*| / d` over pairs with `d > 0`.
    pub mape: f64,
    pub mape_std: f64,
    /// Pairs left out of the MAPE mean because the strict value is zero.
    pub mape_excluded: usize,
    pub mean_fgw: f64,
    pub mean_fgw_star: f64,
    /// Mean of `||pi - pi*||_F / (n1 n2)`.
    pub t_diff: f64,
    pub t_diff_std: f64,
    /// Pairs whose solve failed; they are absent from `per_pair`.
    pub failures: usize,
    pub per_pair: Vec<PairRecord>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Samples `count` index pairs, distinct within a pair whenever the corpus
/// has at least two graphs.
pub fn sample_pairs(num_graphs: usize, count: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    if num_graphs == 0 {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let i = rng.random_range(0..num_graphs);
            if num_graphs == 1 {
                return (i, i);
            }
            let mut j = rng.random_range(0..num_graphs - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect()
}

fn run_pool<T: Send, U: Send>(workers: usize, items: Vec<T>, f: impl Fn(T) -> U + Sync + Send) -> Result<Vec<U>> {
    if workers == 1 {
        return Ok(items.into_iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(|| items.into_par_iter().map(f).collect()))
}

fn timed<T>(record: bool, f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    let t = if record { start.elapsed().as_secs_f64() } else { 0.0 };
    (out, t)
}

/// Solves random pairs with both solvers from the product coupling and
/// compares values and plans.
pub fn run_infeasibility(
    graphs: &[Graph],
    pairs: usize,
    cfg: &FgwConfig,
    opts: &BenchOptions,
) -> Result<InfeasibilityReport> {
    cfg.validate()?;
    if graphs.is_empty() {
        return Err(Error::Config("benchmark needs at least one graph".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let jobs: Vec<(usize, (usize, usize))> = sample_pairs(graphs.len(), pairs, &mut rng)
        .into_iter()
        .enumerate()
        .collect();

    let outcomes = run_pool(opts.workers, jobs, |(pair_id, (i, j))| -> Result<PairRecord> {
        let (g1, g2) = (&graphs[i], &graphs[j]);
        let (strict, time_strict_s) = timed(opts.record_time, || solve_fgw_strict(g1, g2, cfg, None));
        let (relaxed, time_relaxed_s) = timed(opts.record_time, || solve_fgw_relaxed(g1, g2, cfg, None));
        let (strict, relaxed) = (strict?, relaxed?);
        let diff = strict.coupling.plan() - relaxed.coupling.plan();
        let n1 = g1.num_nodes();
        let n2 = g2.num_nodes();
        let abs_err = (strict.value - relaxed.value).abs();
        Ok(PairRecord {
            pair_id,
            n1,
            n2,
            fgw_strict: strict.value,
            fgw_relaxed: relaxed.value,
            abs_err,
            rel_err: if strict.value.abs() > MAPE_ZERO {
                abs_err / strict.value.abs()
            } else {
                0.0
            },
            t_diff: diff.mapv(|v| v * v).sum().sqrt() / (n1 * n2) as f64,
            iters_strict: strict.trace.iterations_used,
            iters_relaxed: relaxed.trace.iterations_used,
            time_strict_s,
            time_relaxed_s,
        })
    })?;

    let mut per_pair = Vec::with_capacity(pairs);
    let mut failures = 0;
    for (k, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok(rec) => per_pair.push(rec),
            Err(e) => {
                log::warn!("pair {k} failed: {e}");
                failures += 1;
            }
        }
    }
    let (mae, mae_std) = mean_std(per_pair.iter().map(|r| r.abs_err));
    let nonzero = per_pair.iter().filter(|r| r.fgw_strict.abs() > MAPE_ZERO);
    let (mape, mape_std) = mean_std(nonzero.clone().map(|r| r.rel_err));
    let mape_excluded = per_pair.len() - nonzero.count();
    let (t_diff, t_diff_std) = mean_std(per_pair.iter().map(|r| r.t_diff));
    let (mean_fgw, _) = mean_std(per_pair.iter().map(|r| r.fgw_strict));
    let (mean_fgw_star, _) = mean_std(per_pair.iter().map(|r| r.fgw_relaxed));
    Ok(InfeasibilityReport {
        pairs_requested: pairs,
        mae,
        mae_std,
        mape,
        mape_std,
        mape_excluded,
        mean_fgw,
        mean_fgw_star,
        t_diff,
        t_diff_std,
        failures,
        per_pair,
    })
}

/// One mixup run in the timing report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub pair_id: usize,
    pub n1: usize,
    pub n2: usize,
    pub lambda: f64,
    pub target_size: usize,
    pub outer_strict: usize,
    pub outer_accel: usize,
    pub time_strict_s: f64,
    pub time_accel_s: f64,
    pub objective_strict: f64,
    pub objective_accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub mean_mixup_time_s: f64,
    /// Mixup time divided by the number of FGW solves (two per outer iteration).
    pub mean_fgw_time_s: f64,
    pub mean_outer_iters: f64,
    pub mean_final_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub pairs_requested: usize,
    pub strict: MethodTiming,
    pub accelerated: MethodTiming,
    /// `strict.mean_mixup_time_s / accelerated.mean_mixup_time_s` (0 when untimed).
    pub time_speedup: f64,
    /// `strict.mean_outer_iters / accelerated.mean_outer_iters`.
    pub iteration_speedup: f64,
    pub failures: usize,
    pub per_pair: Vec<TimingRecord>,
}

/// Runs both mixup modes on the same random pairs, weights and sizes.
/// Weights come from `Beta(cfg.beta_k, cfg.beta_k)`, sizes from
/// `cfg.size_policy`; `cfg.accelerated` is ignored.
pub fn run_timing(graphs: &[Graph], pairs: usize, cfg: &AugmentConfig, opts: &BenchOptions) -> Result<TimingReport> {
    cfg.validate()?;
    if graphs.is_empty() {
        return Err(Error::Config("benchmark needs at least one graph".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let jobs: Vec<(usize, (usize, usize))> = sample_pairs(graphs.len(), pairs, &mut rng)
        .into_iter()
        .enumerate()
        .collect();
    let median = median_size(graphs);

    let outcomes = run_pool(opts.workers, jobs, |(pair_id, (i, j))| -> Result<TimingRecord> {
        let (g1, g2) = (&graphs[i], &graphs[j]);
        let mut rng = job_rng(opts.seed, pair_id);
        let lambda = sample_lambda(cfg.beta_k, &mut rng)?;
        let size = choose_size(lambda, g1.num_nodes(), g2.num_nodes(), cfg.size_policy, median);
        let mut problem = MixupProblem::new(g1.clone(), g2.clone(), lambda, size)?.with_config(cfg.fgw);
        problem.outer_max_iters = cfg.outer_max_iters;
        problem.outer_tol = cfg.outer_tol;
        problem.init_blend = cfg.init_blend;
        let (strict, time_strict_s) = timed(opts.record_time, || solve_mixup(&problem, false));
        let (accel, time_accel_s) = timed(opts.record_time, || solve_mixup(&problem, true));
        let (strict, accel) = (strict?, accel?);
        Ok(TimingRecord {
            pair_id,
            n1: g1.num_nodes(),
            n2: g2.num_nodes(),
            lambda,
            target_size: size,
            outer_strict: strict.outer_iterations,
            outer_accel: accel.outer_iterations,
            time_strict_s,
            time_accel_s,
            objective_strict: strict.objective_trace.last().copied().unwrap_or(f64::NAN),
            objective_accel: accel.objective_trace.last().copied().unwrap_or(f64::NAN),
        })
    })?;

    let mut per_pair = Vec::with_capacity(pairs);
    let mut failures = 0;
    for (k, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok(rec) => per_pair.push(rec),
            Err(e) => {
                log::warn!("pair {k} failed: {e}");
                failures += 1;
            }
        }
    }
    let summarize = |time: fn(&TimingRecord) -> f64, iters: fn(&TimingRecord) -> usize, obj: fn(&TimingRecord) -> f64| {
        let m = per_pair.len().max(1) as f64;
        let total_time: f64 = per_pair.iter().map(time).sum();
        let total_iters: usize = per_pair.iter().map(iters).sum();
        MethodTiming {
            mean_mixup_time_s: total_time / m,
            mean_fgw_time_s: if total_iters == 0 {
                0.0
            } else {
                total_time / (2 * total_iters) as f64
            },
            mean_outer_iters: total_iters as f64 / m,
            mean_final_objective: per_pair.iter().map(obj).sum::<f64>() / m,
        }
    };
    let strict = summarize(|r| r.time_strict_s, |r| r.outer_strict, |r| r.objective_strict);
    let accelerated = summarize(|r| r.time_accel_s, |r| r.outer_accel, |r| r.objective_accel);
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    Ok(TimingReport {
        pairs_requested: pairs,
        time_speedup: ratio(strict.mean_mixup_time_s, accelerated.mean_mixup_time_s),
        iteration_speedup: ratio(strict.mean_outer_iters, accelerated.mean_outer_iters),
        strict,
        accelerated,
        failures,
        per_pair,
    })
}

fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data(path, format!("{other:?}")),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

impl InfeasibilityReport {
    /// Per-pair rows as CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(&self.per_pair, path)
    }

    /// The whole report, summary and rows, as JSON.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }
}

impl TimingReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(&self.per_pair, path)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{sbm_corpus, SbmSpec};

    fn corpus(n: usize) -> Vec<Graph> {
        let spec = SbmSpec {
            num_graphs: n,
            min_nodes: 6,
            max_nodes: 10,
            ..Default::default()
        };
        sbm_corpus(&spec, 5).unwrap()
    }

    #[test]
    fn pairs_are_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = sample_pairs(3, 500, &mut rng);
        assert!(p.iter().all(|(i, j)| i != j && *i < 3 && *j < 3));
        assert_eq!(sample_pairs(1, 4, &mut rng), vec![(0, 0); 4]);
    }

    #[test]
    fn infeasibility_report_is_consistent() {
        let graphs = corpus(8);
        let opts = BenchOptions {
            seed: 3,
            record_time: false,
            ..Default::default()
        };
        let r = run_infeasibility(&graphs, 6, &FgwConfig::default(), &opts).unwrap();
        assert_eq!(r.per_pair.len(), 6);
        assert_eq!(r.failures, 0);
        let mae = r.per_pair.iter().map(|p| p.abs_err).sum::<f64>() / 6.0;
        assert!((r.mae - mae).abs() < 1e-15);
        for v in [r.mae, r.mape, r.t_diff, r.mean_fgw, r.mean_fgw_star, r.mae_std] {
            assert!(v >= 0.0);
        }
        assert!(r.per_pair.iter().all(|p| p.time_strict_s == 0.0));
        let again = run_infeasibility(&graphs, 6, &FgwConfig::default(), &opts).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn identical_graph_pairs_agree() {
        let graphs = corpus(1);
        let opts = BenchOptions {
            record_time: false,
            ..Default::default()
        };
        let r = run_infeasibility(&graphs, 3, &FgwConfig::default(), &opts).unwrap();
        assert!(r.mae < 1e-3, "mae {}", r.mae);
        assert!(r.t_diff < 1e-3, "t_diff {}", r.t_diff);
    }

    #[test]
    fn timing_speedups_match_means() {
        let graphs = corpus(6);
        let opts = BenchOptions {
            seed: 1,
            ..Default::default()
        };
        let r = run_timing(&graphs, 3, &AugmentConfig::default(), &opts).unwrap();
        assert_eq!(r.per_pair.len(), 3);
        assert!(r.time_speedup > 0.0);
        assert_eq!(r.time_speedup, r.strict.mean_mixup_time_s / r.accelerated.mean_mixup_time_s);
        assert_eq!(r.iteration_speedup, r.strict.mean_outer_iters / r.accelerated.mean_outer_iters);
    }
}
