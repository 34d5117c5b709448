//! Randomized equivalence checks of tree inference against enumeration.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::graph::{build_grid, subset_geometry, NodeId, SubsetGeometry, Tractability};
use crate::inference::{brute_force_conditional, fold_boundary};
use crate::model::{PairwiseModel, Spin};

pub const ORACLE_TOLERANCE: f64 = 1e-9;

/// A random model on a small grid with a tree-shaped subset and boundary.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub model: PairwiseModel,
    pub geometry: SubsetGeometry,
    pub boundary: Vec<Spin>,
    pub subset_values: Vec<Spin>,
}

fn random_spins<R: Rng>(rng: &mut R, n: usize) -> Vec<Spin> {
    (0..n)
        .map(|_| if rng.gen_bool(0.5) { 1 } else { -1 })
        .collect()
}

/// Grows a random induced tree: a node joins only if exactly one of its
/// neighbors is already in the subset.
pub fn random_tree_instance<R: Rng>(rng: &mut R, max_subset: usize) -> Result<OracleInstance> {
    let height = rng.gen_range(2..=6);
    let width = rng.gen_range(2..=6);
    let graph = Arc::new(build_grid(height, width, false)?);
    let target = rng.gen_range(1..=max_subset.max(1)).min(graph.node_count());

    let mut member = vec![false; graph.node_count()];
    let start = rng.gen_range(0..graph.node_count());
    member[start] = true;
    let mut subset: Vec<NodeId> = vec![start];
    while subset.len() < target {
        let mut candidates: Vec<NodeId> = subset
            .iter()
            .flat_map(|&n| graph.neighbors(n).iter().map(|&(m, _)| m))
            .filter(|&m| {
                !member[m]
                    && graph
                        .neighbors(m)
                        .iter()
                        .filter(|&&(k, _)| member[k])
                        .count()
                        == 1
            })
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        let Some(&next) = candidates.choose(rng) else {
            break;
        };
        member[next] = true;
        subset.push(next);
    }

    let node_params = (0..graph.node_count())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let edge_params = (0..graph.edge_count())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let model = PairwiseModel::new(graph.clone(), node_params, edge_params)?;
    let geometry = subset_geometry(&graph, &subset, max_subset.max(16))?;
    debug_assert_eq!(geometry.tractability(), Tractability::Tree);
    let boundary = random_spins(rng, geometry.boundary().len());
    let subset_values = random_spins(rng, geometry.subset().len());
    Ok(OracleInstance {
        model,
        geometry,
        boundary,
        subset_values,
    })
}

/// Largest absolute deviation from enumeration, per quantity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OracleErrors {
    pub log_partition: f64,
    pub moments: f64,
    pub log_prob: f64,
    pub sequential: f64,
}

impl OracleErrors {
    pub fn max(&self) -> f64 {
        self.log_partition
            .max(self.moments)
            .max(self.log_prob)
            .max(self.sequential)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }

    pub fn merge(&self, other: &OracleErrors) -> OracleErrors {
        OracleErrors {
            log_partition: self.log_partition.max(other.log_partition),
            moments: self.moments.max(other.moments),
            log_prob: self.log_prob.max(other.log_prob),
            sequential: self.sequential.max(other.sequential),
        }
    }
}

pub fn check_instance(inst: &OracleInstance) -> Result<OracleErrors> {
    let size = inst.geometry.subset().len();
    let cond = fold_boundary(&inst.model, &inst.geometry, &inst.boundary)?;
    let table = brute_force_conditional(&inst.model, &inst.geometry, &inst.boundary, size.max(1))?;

    let (log_partition, moments) = cond.log_partition_and_moments()?;
    let oracle_moments = table.moments(&inst.geometry, &inst.boundary);
    let moment_err = moments
        .values
        .iter()
        .zip(&oracle_moments)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let log_prob_err = cond.log_prob(&inst.subset_values)? - table.log_prob(&inst.subset_values);

    let ours = cond.sequential_conditionals(&inst.subset_values)?;
    let oracle = table.sequential(&inst.subset_values);
    let seq_err = ours
        .iter()
        .zip(&oracle)
        .fold(0.0f64, |m, (a, b)| m.max((a.plus() - b.plus()).abs()));

    Ok(OracleErrors {
        log_partition: (log_partition - table.log_partition()).abs(),
        moments: moment_err,
        log_prob: log_prob_err.abs(),
        sequential: seq_err,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSummary {
    pub trials: usize,
    pub passed: usize,
    pub worst: OracleErrors,
}

pub fn run_oracle_suite<R: Rng>(
    rng: &mut R,
    trials: usize,
    max_subset: usize,
    tol: f64,
) -> Result<OracleSummary> {
    let mut worst = OracleErrors::default();
    let mut passed = 0;
    for _ in 0..trials {
        let inst = random_tree_instance(rng, max_subset)?;
        let errs = check_instance(&inst)?;
        if errs.within(tol) {
            passed += 1;
        }
        worst = worst.merge(&errs);
    }
    Ok(OracleSummary {
        trials,
        passed,
        worst,
    })
}
