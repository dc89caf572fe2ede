//! Dataset augmentation: sample inter-class pairs, mix them with the FGW
//! barycenter, binarize the mixed structure and attach soft labels.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barycenter::{solve_mixup, MixupProblem, DEFAULT_INIT_BLEND};
use crate::error::{Error, Result};
use crate::fgw::FgwConfig;
use crate::graph::Graph;

/// How the node count of a mixup graph is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizePolicy {
    /// `round(lambda n1 + (1 - lambda) n2)`.
    Adaptive,
    FixedMedian,
    HalfMedian,
    DoubleMedian,
}

impl std::str::FromStr for SizePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Self::Adaptive),
            "fixed_median" | "fixed-median" => Ok(Self::FixedMedian),
            "half_median" | "half-median" => Ok(Self::HalfMedian),
            "double_median" | "double-median" => Ok(Self::DoubleMedian),
            other => Err(Error::Config(format!("unknown size policy `{other}`"))),
        }
    }
}

/// How the threshold search scores density mismatch against the two sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityWeighting {
    /// `lambda |rho - rho1| + (1 - lambda) |rho - rho2|`.
    Lambda,
    /// `|rho - rho1| + |rho - rho2|`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Shape `k` of the symmetric `Beta(k, k)` mixing-weight distribution.
    pub beta_k: f64,
    /// Number of synthesized graphs as a fraction of the training-set size.
    pub mixup_ratio: f64,
    pub size_policy: SizePolicy,
    /// Use the relaxed single-loop FGW solver inside the barycenter loop.
    pub accelerated: bool,
    pub seed: u64,
    /// Solver settings; `fgw.alpha` is the structure/feature trade-off.
    pub fgw: FgwConfig,
    pub outer_max_iters: usize,
    pub outer_tol: f64,
    pub init_blend: f64,
    /// Number of thresholds scanned when binarizing the mixed structure.
    pub threshold_grid: usize,
    pub density_weighting: DensityWeighting,
    /// Worker threads for pair mixups; 0 uses all available cores.
    pub workers: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            beta_k: 0.2,
            mixup_ratio: 0.25,
            size_policy: SizePolicy::Adaptive,
            accelerated: true,
            seed: 0,
            fgw: FgwConfig::default(),
            outer_max_iters: 200,
            outer_tol: 5e-4,
            init_blend: DEFAULT_INIT_BLEND,
            threshold_grid: 101,
            density_weighting: DensityWeighting::Lambda,
            workers: 1,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        self.fgw.validate()?;
        if !(self.beta_k > 0.0) || !self.beta_k.is_finite() {
            return Err(Error::Config(format!("beta_k must be > 0, got {}", self.beta_k)));
        }
        if !(self.mixup_ratio >= 0.0) || !self.mixup_ratio.is_finite() {
            return Err(Error::Config(format!(
                "mixup_ratio must be >= 0, got {}",
                self.mixup_ratio
            )));
        }
        if self.threshold_grid < 2 {
            return Err(Error::Config("threshold_grid must be >= 2".into()));
        }
        Ok(())
    }
}

/// Where a mixup graph came from: indices into the training set and the
/// weight of `first`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixupOrigin {
    pub first: usize,
    pub second: usize,
    pub lambda: f64,
}

/// A graph with binary structure and a probability vector over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabeledGraph {
    pub graph: Graph,
    pub label_distribution: Vec<f64>,
    /// `None` for original graphs.
    pub origin: Option<MixupOrigin>,
}

impl SoftLabeledGraph {
    /// Wraps a hard-labeled graph with a one-hot distribution.
    pub fn from_hard(graph: Graph, num_classes: usize) -> Result<Self> {
        let y = graph
            .label()
            .ok_or_else(|| Error::Config("graph has no class label".into()))?;
        let label_distribution = mix_labels(y, y, 1.0, num_classes)?;
        Ok(Self {
            graph,
            label_distribution,
            origin: None,
        })
    }

    /// Most likely class; ties resolve to the lower index.
    pub fn argmax_label(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.label_distribution.iter().enumerate() {
            if *p > self.label_distribution[best] {
                best = i;
            }
        }
        best
    }
}

/// Draws a mixing weight from `Beta(k, k)`.
pub fn sample_lambda(beta_k: f64, rng: &mut impl Rng) -> Result<f64> {
    let beta = Beta::new(beta_k, beta_k)
        .map_err(|e| Error::Config(format!("Beta({beta_k}, {beta_k}): {e}")))?;
    Ok(beta.sample(rng).clamp(0.0, 1.0))
}

/// Node count of the mixup graph; always at least 1.
pub fn choose_size(lambda: f64, n1: usize, n2: usize, policy: SizePolicy, median: usize) -> usize {
    let raw = match policy {
        SizePolicy::Adaptive => lambda * n1 as f64 + (1.0 - lambda) * n2 as f64,
        SizePolicy::FixedMedian => median as f64,
        SizePolicy::HalfMedian => 0.5 * median as f64,
        SizePolicy::DoubleMedian => 2.0 * median as f64,
    };
    (raw.round() as usize).max(1)
}

/// Median node count (mean of the two middle values for even counts, rounded).
pub fn median_size(graphs: &[Graph]) -> usize {
    if graphs.is_empty() {
        return 1;
    }
    let mut sizes: Vec<usize> = graphs.iter().map(Graph::num_nodes).collect();
    sizes.sort_unstable();
    let m = sizes.len();
    if m % 2 == 1 {
        sizes[m / 2]
    } else {
        ((sizes[m / 2 - 1] + sizes[m / 2]) as f64 / 2.0).round() as usize
    }
}

/// Fraction of off-diagonal entries at or above `theta`.
pub fn thresholded_density(a: &Array2<f64>, theta: f64) -> f64 {
    let n = a.nrows();
    if n < 2 {
        return 0.0;
    }
    let mut ones = 0usize;
    for ((i, j), v) in a.indexed_iter() {
        if i != j && *v >= theta {
            ones += 1;
        }
    }
    ones as f64 / (n * (n - 1)) as f64
}

fn density_gap(rho: f64, dens1: f64, dens2: f64, lambda: f64, weighting: DensityWeighting) -> f64 {
    match weighting {
        DensityWeighting::Lambda => lambda * (rho - dens1).abs() + (1.0 - lambda) * (rho - dens2).abs(),
        DensityWeighting::Uniform => (rho - dens1).abs() + (rho - dens2).abs(),
    }
}

/// Threshold candidates: `grid` evenly spaced values from the smallest to
/// the largest entry of `a`.
pub fn threshold_grid(a: &Array2<f64>, grid: usize) -> Vec<f64> {
    let lo = a.fold(f64::INFINITY, |m, v| m.min(*v));
    let hi = a.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    (0..grid)
        .map(|k| lo + (hi - lo) * k as f64 / (grid - 1) as f64)
        .collect()
}

fn binarize(a: &Array2<f64>, theta: f64) -> Array2<f64> {
    Array2::from_shape_fn(a.dim(), |(i, j)| {
        if i != j && a[[i, j]] >= theta {
            1.0
        } else {
            0.0
        }
    })
}

/// Binarizes a continuous structure matrix with the scanned threshold whose
/// off-diagonal density best matches the sources (`a >= theta` becomes an
/// edge; the diagonal is cleared). Ties go to the smallest threshold.
pub fn discretize_adjacency(
    a_cont: &Array2<f64>,
    dens1: f64,
    dens2: f64,
    lambda: f64,
    grid: usize,
) -> Result<(Array2<f64>, f64)> {
    discretize_adjacency_with(a_cont, dens1, dens2, lambda, grid, DensityWeighting::Lambda)
}

pub fn discretize_adjacency_with(
    a_cont: &Array2<f64>,
    dens1: f64,
    dens2: f64,
    lambda: f64,
    grid: usize,
    weighting: DensityWeighting,
) -> Result<(Array2<f64>, f64)> {
    if a_cont.nrows() != a_cont.ncols() || a_cont.is_empty() {
        return Err(Error::Dimension("structure must be a non-empty square matrix".into()));
    }
    if a_cont.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension("structure has non-finite entries".into()));
    }
    if grid < 2 {
        return Err(Error::Config("threshold grid needs at least 2 points".into()));
    }
    let lo = a_cont.fold(f64::INFINITY, |m, v| m.min(*v));
    let hi = a_cont.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    if lo == hi {
        // Only "everything" or "nothing" is reachable.
        let n = a_cont.nrows();
        let full = if n < 2 { 0.0 } else { 1.0 };
        let gap_full = density_gap(full, dens1, dens2, lambda, weighting);
        let gap_empty = density_gap(0.0, dens1, dens2, lambda, weighting);
        let theta = if gap_full <= gap_empty { lo } else { lo.next_up() };
        return Ok((binarize(a_cont, theta), theta));
    }
    let mut best_theta = lo;
    let mut best_gap = f64::INFINITY;
    for theta in threshold_grid(a_cont, grid) {
        let gap = density_gap(thresholded_density(a_cont, theta), dens1, dens2, lambda, weighting);
        if gap < best_gap {
            best_gap = gap;
            best_theta = theta;
        }
    }
    Ok((binarize(a_cont, best_theta), best_theta))
}

/// `lambda onehot(y1) + (1 - lambda) onehot(y2)`.
pub fn mix_labels(y1: usize, y2: usize, lambda: f64, num_classes: usize) -> Result<Vec<f64>> {
    if y1 >= num_classes || y2 >= num_classes {
        return Err(Error::Config(format!(
            "class index out of range: {y1}, {y2} with {num_classes} classes"
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let mut out = vec![0.0; num_classes];
    out[y1] += lambda;
    out[y2] += 1.0 - lambda;
    Ok(out)
}

/// Mixups generated for each unordered class pair:
/// `ceil(2 beta N / (N_y (N_y - 1)))`.
pub fn mixups_per_pair(num_graphs: usize, num_classes: usize, ratio: f64) -> usize {
    if num_classes < 2 {
        return 0;
    }
    let raw = 2.0 * ratio * num_graphs as f64 / (num_classes * (num_classes - 1)) as f64;
    // Guard against 24.000000000000004 style round-up.
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    index: usize,
    class_a: usize,
    class_b: usize,
}

/// Augments a labeled training set. Returns the originals (one-hot labels)
/// followed by the mixups in job order. Jobs that fail are logged and
/// skipped. The output does not depend on the worker count.
pub fn augment_dataset(
    train: &[Graph],
    num_classes: usize,
    cfg: &AugmentConfig,
) -> Result<Vec<SoftLabeledGraph>> {
    cfg.validate()?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, g) in train.iter().enumerate() {
        let y = g
            .label()
            .ok_or_else(|| Error::Config(format!("training graph {i} has no label")))?;
        if y >= num_classes {
            return Err(Error::Config(format!("graph {i} has label {y} >= {num_classes}")));
        }
        by_class[y].push(i);
    }
    if num_classes < 2 {
        return Err(Error::Config("augmentation needs at least two classes".into()));
    }
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::Config(format!("class {c} has no graphs")));
    }

    let per_pair = mixups_per_pair(train.len(), num_classes, cfg.mixup_ratio);
    let mut jobs = Vec::new();
    for a in 0..num_classes {
        for b in (a + 1)..num_classes {
            for _ in 0..per_pair {
                jobs.push(Job {
                    index: jobs.len(),
                    class_a: a,
                    class_b: b,
                });
            }
        }
    }
    let median = median_size(train);
    log::info!(
        "augmenting {} graphs: {} class pairs x {} mixups",
        train.len(),
        num_classes * (num_classes - 1) / 2,
        per_pair
    );

    let run = |job: &Job| -> Option<SoftLabeledGraph> {
        match mixup_job(train, &by_class, num_classes, median, cfg, job) {
            Ok(g) => Some(g),
            Err(e) => {
                log::warn!("mixup job {} skipped: {e}", job.index);
                None
            }
        }
    };
    let mixed: Vec<Option<SoftLabeledGraph>> = if cfg.workers == 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    };

    let mut out = train
        .iter()
        .map(|g| SoftLabeledGraph::from_hard(g.clone(), num_classes))
        .collect::<Result<Vec<_>>>()?;
    out.extend(mixed.into_iter().flatten());
    Ok(out)
}

/// Per-job generator derived from the master seed; independent of scheduling.
pub fn job_rng(seed: u64, job: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(job as u64);
    rng
}

fn mixup_job(
    train: &[Graph],
    by_class: &[Vec<usize>],
    num_classes: usize,
    median: usize,
    cfg: &AugmentConfig,
    job: &Job,
) -> Result<SoftLabeledGraph> {
    let mut rng = job_rng(cfg.seed, job.index);
    let pick = |rng: &mut ChaCha8Rng, class: usize| {
        let members = &by_class[class];
        members[rng.random_range(0..members.len())]
    };
    let first = pick(&mut rng, job.class_a);
    let second = pick(&mut rng, job.class_b);
    let (g1, g2) = (&train[first], &train[second]);
    let lambda = sample_lambda(cfg.beta_k, &mut rng)?;
    let size = choose_size(lambda, g1.num_nodes(), g2.num_nodes(), cfg.size_policy, median);

    let mut problem = MixupProblem::new(g1.clone(), g2.clone(), lambda, size)?.with_config(cfg.fgw);
    problem.outer_max_iters = cfg.outer_max_iters;
    problem.outer_tol = cfg.outer_tol;
    problem.init_blend = cfg.init_blend;
    let result = solve_mixup(&problem, cfg.accelerated)?;

    let (binary, theta) = discretize_adjacency_with(
        result.graph.structure(),
        g1.edge_density(),
        g2.edge_density(),
        lambda,
        cfg.threshold_grid,
        cfg.density_weighting,
    )?;
    log::debug!(
        "job {}: lambda {lambda:.4}, {} nodes, {} outer iterations, theta {theta:.4}",
        job.index,
        size,
        result.outer_iterations
    );
    let graph = Graph::with_uniform_measure(result.graph.features().clone(), binary, None)?;
    let label_distribution = mix_labels(
        g1.label().unwrap_or_default(),
        g2.label().unwrap_or_default(),
        lambda,
        num_classes,
    )?;
    Ok(SoftLabeledGraph {
        graph,
        label_distribution,
        origin: Some(MixupOrigin { first, second, lambda }),
    })
}
