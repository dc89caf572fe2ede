//! Two-graph FGW barycenter by block-coordinate descent.
//!
//! Each outer iteration solves the couplings between the current barycenter
//! and both sources (strict or relaxed solver), then applies the closed-form
//! structure and feature updates.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fgw::{solve_fgw_relaxed, solve_fgw_strict, Coupling, FgwConfig, FgwSolution};
use crate::graph::{uniform_measure, Graph};

/// Share of the product coupling in the initial couplings; the rest is a
/// degree-ordered monotone matching.
pub const DEFAULT_INIT_BLEND: f64 = 0.5;

/// A two-graph mixup problem.
#[derive(Debug, Clone)]
pub struct MixupProblem {
    pub g1: Graph,
    pub g2: Graph,
    /// Weight of `g1` in the objective.
    pub lambda: f64,
    pub target_size: usize,
    pub target_measure: Array1<f64>,
    pub cfg: FgwConfig,
    pub outer_max_iters: usize,
    pub outer_tol: f64,
    pub init_blend: f64,
}

impl MixupProblem {
    /// Problem with a uniform target measure and default settings.
    pub fn new(g1: Graph, g2: Graph, lambda: f64, target_size: usize) -> Result<Self> {
        let target_measure = uniform_measure(target_size)?;
        Ok(Self {
            g1,
            g2,
            lambda,
            target_size,
            target_measure,
            cfg: FgwConfig::default(),
            outer_max_iters: 200,
            outer_tol: 5e-4,
            init_blend: DEFAULT_INIT_BLEND,
        })
    }

    pub fn with_config(mut self, cfg: FgwConfig) -> Self {
        self.cfg = cfg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.target_size == 0 || self.target_measure.len() != self.target_size {
            return Err(Error::Dimension(format!(
                "target size {} with a measure of length {}",
                self.target_size,
                self.target_measure.len()
            )));
        }
        if self.target_measure.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Measure("target measure entries must be > 0".into()));
        }
        if (self.target_measure.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::Measure("target measure must sum to 1".into()));
        }
        if self.g1.feature_dim() != self.g2.feature_dim() {
            return Err(Error::Dimension(format!(
                "source feature dimensions differ: {} vs {}",
                self.g1.feature_dim(),
                self.g2.feature_dim()
            )));
        }
        if self.outer_max_iters == 0 || !(self.outer_tol >= 0.0) {
            return Err(Error::Config("outer loop needs a cap >= 1 and a tolerance >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.init_blend) || self.init_blend == 0.0 {
            return Err(Error::Config("init_blend must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Synthesized barycenter graph with its final couplings.
#[derive(Debug, Clone)]
pub struct MixupResult {
    /// Barycenter with continuous-valued structure.
    pub graph: Graph,
    /// Couplings to `g1` and `g2` (rows index barycenter nodes).
    pub couplings: (Coupling, Coupling),
    /// `lambda FGW(G, g1) + (1 - lambda) FGW(G, g2)` per outer iteration.
    pub objective_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Inner solver iterations summed over both couplings and all outer steps.
    pub inner_iterations: usize,
}

/// Summary of a mixup run suitable for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixupStats {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
}

impl MixupResult {
    pub fn stats(&self) -> MixupStats {
        MixupStats {
            outer_iterations: self.outer_iterations,
            inner_iterations: self.inner_iterations,
            converged: self.converged,
            final_objective: self.objective_trace.last().copied().unwrap_or(f64::NAN),
        }
    }
}

fn check_update_dims(
    pi1: &Array2<f64>,
    pi2: &Array2<f64>,
    n1: usize,
    n2: usize,
    mu_t: &Array1<f64>,
) -> Result<()> {
    let nt = mu_t.len();
    if pi1.dim() != (nt, n1) || pi2.dim() != (nt, n2) {
        return Err(Error::Dimension(format!(
            "couplings {:?} and {:?} for target size {nt} and sources {n1}, {n2}",
            pi1.dim(),
            pi2.dim()
        )));
    }
    if mu_t.iter().any(|v| *v == 0.0) {
        return Err(Error::Measure("target measure has a zero entry".into()));
    }
    Ok(())
}

/// `(lambda pi1 A1 pi1^T + (1 - lambda) pi2 A2 pi2^T) / (mu mu^T)`, symmetrized.
pub fn update_structure(
    pi1: &Array2<f64>,
    pi2: &Array2<f64>,
    a1: &Array2<f64>,
    a2: &Array2<f64>,
    lambda: f64,
    mu_t: &Array1<f64>,
) -> Result<Array2<f64>> {
    check_update_dims(pi1, pi2, a1.nrows(), a2.nrows(), mu_t)?;
    let mut m = pi1.dot(a1).dot(&pi1.t()) * lambda;
    m.scaled_add(1.0 - lambda, &pi2.dot(a2).dot(&pi2.t()));
    let n = mu_t.len();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]) / (mu_t[i] * mu_t[j]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    Ok(out)
}

/// `lambda diag(1/mu) pi1 X1 + (1 - lambda) diag(1/mu) pi2 X2`.
pub fn update_features(
    pi1: &Array2<f64>,
    pi2: &Array2<f64>,
    x1: &Array2<f64>,
    x2: &Array2<f64>,
    lambda: f64,
    mu_t: &Array1<f64>,
) -> Result<Array2<f64>> {
    check_update_dims(pi1, pi2, x1.nrows(), x2.nrows(), mu_t)?;
    if x1.ncols() != x2.ncols() {
        return Err(Error::Dimension("source feature dimensions differ".into()));
    }
    let mut x = pi1.dot(x1) * lambda;
    x.scaled_add(1.0 - lambda, &pi2.dot(x2));
    for (mut row, m) in x.outer_iter_mut().zip(mu_t.iter()) {
        row /= *m;
    }
    Ok(x)
}

/// North-west-corner coupling between `mu_t` (in index order) and the
/// source measure with nodes visited by decreasing degree.
fn degree_ordered_matching(mu_t: &Array1<f64>, source: &Graph) -> Array2<f64> {
    let deg = source.degrees();
    let mut order: Vec<usize> = (0..source.num_nodes()).collect();
    order.sort_by(|a, b| deg[*b].cmp(&deg[*a]));

    let mu_s = source.mu();
    let mut plan = Array2::zeros((mu_t.len(), mu_s.len()));
    let mut supply: Vec<f64> = mu_t.to_vec();
    let (mut i, mut k) = (0, 0);
    let mut demand = mu_s[order[0]];
    while i < supply.len() && k < order.len() {
        let moved = supply[i].min(demand);
        plan[[i, order[k]]] += moved;
        supply[i] -= moved;
        demand -= moved;
        if supply[i] <= demand {
            i += 1;
        } else {
            k += 1;
            if k < order.len() {
                demand = mu_s[order[k]];
            }
        }
    }
    plan
}

/// Deterministic starting coupling between the target measure and a source:
/// `blend * mu_t mu_s^T + (1 - blend) * degree-ordered matching`.
pub fn initial_coupling(mu_t: &Array1<f64>, source: &Graph, blend: f64) -> Result<Coupling> {
    let product = Coupling::product(mu_t, source.mu());
    if blend >= 1.0 {
        return Ok(product);
    }
    let mut plan = degree_ordered_matching(mu_t, source) * (1.0 - blend);
    plan.scaled_add(blend, product.plan());
    Coupling::from_plan(plan, mu_t, source.mu())
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / prev.abs().max(1e-12)
}

/// Solves the two-graph barycenter problem; `accelerated` swaps the strict
/// nested-loop FGW solver for the relaxed single-loop one.
pub fn solve_mixup(problem: &MixupProblem, accelerated: bool) -> Result<MixupResult> {
    problem.validate()?;
    let MixupProblem {
        g1,
        g2,
        lambda,
        target_measure: mu_t,
        cfg,
        ..
    } = problem;
    let lambda = *lambda;
    let solve = |bary: &Graph, source: &Graph, init: &Coupling| -> Result<FgwSolution> {
        if accelerated {
            solve_fgw_relaxed(bary, source, cfg, Some(init))
        } else {
            solve_fgw_strict(bary, source, cfg, Some(init))
        }
    };

    let mut pi1 = initial_coupling(mu_t, g1, problem.init_blend)?;
    let mut pi2 = initial_coupling(mu_t, g2, problem.init_blend)?;
    let mut structure = update_structure(pi1.plan(), pi2.plan(), g1.structure(), g2.structure(), lambda, mu_t)?;
    let mut features = update_features(pi1.plan(), pi2.plan(), g1.features(), g2.features(), lambda, mu_t)?;

    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut inner_iterations = 0;
    for _ in 0..problem.outer_max_iters {
        let bary = Graph::new(mu_t.clone(), features, structure, None)?;
        let s1 = solve(&bary, g1, &pi1)?;
        let s2 = solve(&bary, g2, &pi2)?;
        inner_iterations += s1.trace.iterations_used + s2.trace.iterations_used;
        let objective = lambda * s1.value + (1.0 - lambda) * s2.value;
        pi1 = s1.coupling;
        pi2 = s2.coupling;
        structure = update_structure(pi1.plan(), pi2.plan(), g1.structure(), g2.structure(), lambda, mu_t)?;
        features = update_features(pi1.plan(), pi2.plan(), g1.features(), g2.features(), lambda, mu_t)?;
        let done = trace
            .last()
            .is_some_and(|prev| relative_change(*prev, objective) <= problem.outer_tol);
        trace.push(objective);
        if done {
            converged = true;
            break;
        }
    }
    let graph = Graph::new(mu_t.clone(), features, structure, None)?;
    Ok(MixupResult {
        graph,
        couplings: (pi1, pi2),
        outer_iterations: trace.len(),
        objective_trace: trace,
        converged,
        inner_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matching_respects_marginals() {
        let a = array![[0., 1., 1.], [1., 0., 0.], [1., 0., 0.]];
        let g = Graph::with_uniform_measure(Array2::zeros((3, 0)), a, None).unwrap();
        let mu_t = uniform_measure(5).unwrap();
        let plan = degree_ordered_matching(&mu_t, &g);
        for (r, m) in plan.sum_axis(ndarray::Axis(1)).iter().zip(mu_t.iter()) {
            assert!((r - m).abs() < 1e-15);
        }
        for c in plan.sum_axis(ndarray::Axis(0)).iter() {
            assert!((c - 1.0 / 3.0).abs() < 1e-15);
        }
        // The hub (node 0) is matched first.
        assert!(plan[[0, 0]] > 0.0);
    }

    #[test]
    fn same_size_matching_is_a_permutation() {
        let a = array![[0., 1., 0.], [1., 0., 1.], [0., 1., 0.]];
        let g = Graph::with_uniform_measure(Array2::zeros((3, 0)), a, None).unwrap();
        let plan = degree_ordered_matching(g.mu(), &g);
        let expect = array![[0., 1., 0.], [1., 0., 0.], [0., 0., 1.]] / 3.0;
        assert_eq!(plan, expect);
    }

    #[test]
    fn zero_target_mass_is_rejected() {
        let pi = Array2::zeros((2, 2));
        let a = Array2::zeros((2, 2));
        assert!(update_structure(&pi, &pi, &a, &a, 0.5, &array![1.0, 0.0]).is_err());
        assert!(update_features(&pi, &pi, &a, &a, 0.5, &array![1.0, 0.0]).is_err());
    }

    fn random_graph_with(n: usize, d: usize, seed: u64) -> Graph {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        crate::synth::random_graph(n, d, 0.5, &mut rng).unwrap()
    }

    fn random_plan(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() / (rows * cols) as f64)
    }

    #[test]
    fn identity_alignment_reproduces_sources() {
        let g1 = random_graph_with(5, 3, 1);
        let g2 = random_graph_with(5, 3, 2);
        let mu = uniform_measure(5).unwrap();
        let id = Array2::from_diag(&mu);
        let other = random_plan(5, 5, 9);

        let a = update_structure(&id, &other, g1.structure(), g2.structure(), 1.0, &mu).unwrap();
        assert!((&a - g1.structure()).iter().all(|v| v.abs() < 1e-12));
        let a = update_structure(&id, &id, g1.structure(), g1.structure(), 0.5, &mu).unwrap();
        assert!((&a - g1.structure()).iter().all(|v| v.abs() < 1e-12));

        let x = update_features(&id, &other, g1.features(), g2.features(), 1.0, &mu).unwrap();
        assert!((&x - g1.features()).iter().all(|v| v.abs() < 1e-12));
        let x = update_features(&other, &id, g1.features(), g2.features(), 0.0, &mu).unwrap();
        assert!((&x - g2.features()).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn updates_match_explicit_loops() {
        let (nt, n1, n2, d) = (4, 5, 3, 2);
        let g1 = random_graph_with(n1, d, 3);
        let g2 = random_graph_with(n2, d, 4);
        let (p1, p2) = (random_plan(nt, n1, 5), random_plan(nt, n2, 6));
        let mu = array![0.1, 0.2, 0.3, 0.4];
        let lambda = 0.37;

        let a = update_structure(&p1, &p2, g1.structure(), g2.structure(), lambda, &mu).unwrap();
        let x = update_features(&p1, &p2, g1.features(), g2.features(), lambda, &mu).unwrap();
        let term = |p: &Array2<f64>, s: &Array2<f64>, i: usize, j: usize| {
            let mut acc = 0.0;
            for k in 0..s.nrows() {
                for l in 0..s.nrows() {
                    acc += p[[i, k]] * s[[k, l]] * p[[j, l]];
                }
            }
            acc
        };
        for i in 0..nt {
            for j in 0..nt {
                let m = |i, j| lambda * term(&p1, g1.structure(), i, j) + (1.0 - lambda) * term(&p2, g2.structure(), i, j);
                let want = 0.5 * (m(i, j) + m(j, i)) / (mu[i] * mu[j]);
                assert!((a[[i, j]] - want).abs() < 1e-12);
            }
            for c in 0..d {
                let mut want = 0.0;
                for k in 0..n1 {
                    want += lambda * p1[[i, k]] * g1.features()[[k, c]];
                }
                for k in 0..n2 {
                    want += (1.0 - lambda) * p2[[i, k]] * g2.features()[[k, c]];
                }
                assert!((x[[i, c]] - want / mu[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn self_mixup_recovers_the_graph() {
        let g = random_graph_with(7, 2, 11);
        let cfg = FgwConfig::default();
        for lambda in [0.2, 0.5] {
            let p = MixupProblem::new(g.clone(), g.clone(), lambda, 7).unwrap();
            for accelerated in [false, true] {
                let r = solve_mixup(&p, accelerated).unwrap();
                let v = solve_fgw_strict(&r.graph, &g, &cfg, Some(&r.couplings.0)).unwrap().value;
                assert!(v <= 1e-4, "lambda {lambda}, accelerated {accelerated}: {v}");
                let s = r.graph.structure();
                assert!((s - &s.t()).iter().all(|v| v.abs() <= 1e-12));
            }
        }
    }

    #[test]
    fn identical_tiny_pairs_are_recovered() {
        let a = array![[0., 1., 0.], [1., 0., 1.], [0., 1., 0.]];
        let g = Graph::with_uniform_measure(array![[1.0], [0.0], [1.0]], a, None).unwrap();
        let p = MixupProblem::new(g.clone(), g, 0.4, 3).unwrap();
        for accelerated in [false, true] {
            let r = solve_mixup(&p, accelerated).unwrap();
            assert!(r.converged);
            assert!(r.outer_iterations <= 30, "{} outer iterations", r.outer_iterations);
            assert!(r.objective_trace.last().unwrap().abs() <= 1e-10);
        }
    }

    #[test]
    fn converged_couplings_are_a_fixed_point() {
        let g1 = random_graph_with(6, 2, 21);
        let g2 = random_graph_with(8, 2, 22);
        let p = MixupProblem::new(g1.clone(), g2.clone(), 0.6, 7).unwrap();
        let r = solve_mixup(&p, false).unwrap();
        if !r.converged {
            return;
        }
        let (p1, p2) = (r.couplings.0.plan(), r.couplings.1.plan());
        let a = update_structure(p1, p2, g1.structure(), g2.structure(), 0.6, &p.target_measure).unwrap();
        let x = update_features(p1, p2, g1.features(), g2.features(), 0.6, &p.target_measure).unwrap();
        let rel = |new: &Array2<f64>, old: &Array2<f64>| {
            (new - old).mapv(|v| v * v).sum().sqrt() / old.mapv(|v| v * v).sum().sqrt().max(1e-12)
        };
        assert!(rel(&a, r.graph.structure()) <= 1e-12);
        assert!(rel(&x, r.graph.features()) <= 1e-12);
    }
}

