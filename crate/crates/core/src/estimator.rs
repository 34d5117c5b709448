//! MCDL objective, gradient and minimization.
//!
//! Temporal and spatial estimation share one kernel: a list of
//! `(geometry, x_U, x_boundary)` observations. Temporal data has one
//! geometry observed `n` times; spatial data has `n` geometries observed once.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, SubsetGeometry};
use crate::inference::fold_boundary;
use crate::model::{restricted_statistic, PairwiseModel, ParameterTying, Spin};
use crate::numeric::compensated_sum;
use crate::sampler::SampleSequence;

pub const DEFAULT_GRAD_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 500;
pub const ARMIJO_SUFFICIENT_DECREASE: f64 = 1e-4;
pub const BACKTRACK_FACTOR: f64 = 0.5;

#[derive(Debug, Clone)]
struct Observation {
    geometry: usize,
    subset: Vec<Spin>,
    boundary: Vec<Spin>,
}

/// Observations of subsets with their boundaries, plus the empirical moment.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    graph: Arc<Graph>,
    geometries: Vec<SubsetGeometry>,
    /// Full-vector index of every component, per geometry.
    component_index: Vec<Vec<usize>>,
    observations: Vec<Observation>,
    empirical: Vec<f64>,
}

impl ObservationSet {
    fn build(
        graph: Arc<Graph>,
        geometries: Vec<SubsetGeometry>,
        observations: Vec<Observation>,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::InvalidArgument("no observations".into()));
        }
        if let Some(g) = geometries.iter().find(|g| !g.is_tractable()) {
            return Err(Error::Intractable {
                size: g.subset().len(),
            });
        }
        let component_index: Vec<Vec<usize>> = geometries
            .iter()
            .map(|g| g.components().map(|c| c.full_index(&graph)).collect())
            .collect();
        let full_len = graph.node_count() + graph.edge_count();
        let mut sums = vec![0.0; full_len];
        for obs in &observations {
            let stat = restricted_statistic(&geometries[obs.geometry], &obs.subset, &obs.boundary)?;
            for (&k, v) in component_index[obs.geometry].iter().zip(stat.values) {
                sums[k] += v;
            }
        }
        let n = observations.len() as f64;
        let empirical = sums.into_iter().map(|s| s / n).collect();
        Ok(ObservationSet {
            graph,
            geometries,
            component_index,
            observations,
            empirical,
        })
    }

    /// One geometry, one observation per temporal sample.
    pub fn temporal(graph: Arc<Graph>, samples: &SampleSequence) -> Result<Self> {
        let geometry = samples.geometry().clone();
        let observations = samples
            .configs()
            .iter()
            .map(|c| {
                let (subset, boundary) = geometry.split_closure(c)?;
                Ok(Observation {
                    geometry: 0,
                    subset,
                    boundary,
                })
            })
            .collect::<Result<_>>()?;
        Self::build(graph, vec![geometry], observations)
    }

    /// Many geometries read off a single full configuration.
    pub fn spatial(
        graph: Arc<Graph>,
        config: &[Spin],
        geometries: Vec<SubsetGeometry>,
    ) -> Result<Self> {
        if config.len() != graph.node_count() {
            return Err(Error::LengthMismatch {
                what: "configuration",
                expected: graph.node_count(),
                actual: config.len(),
            });
        }
        crate::model::check_spins(config)?;
        let observations = geometries
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let (subset, boundary) = g.restrict(config);
                Observation {
                    geometry: k,
                    subset,
                    boundary,
                }
            })
            .collect();
        Self::build(graph, geometries, observations)
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Empirical moment over the full parameter layout; zero off the index sets.
    pub fn empirical_full(&self) -> &[f64] {
        &self.empirical
    }

    /// Average number of subset sites per observation.
    pub fn mean_subset_size(&self) -> f64 {
        let total: usize = self
            .observations
            .iter()
            .map(|o| self.geometries[o.geometry].subset().len())
            .sum();
        total as f64 / self.observations.len() as f64
    }
}

/// Empirical moment aligned with the sample geometry's components.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMoment {
    pub values: Vec<f64>,
}

pub fn empirical_moment(samples: &SampleSequence) -> Result<EmpiricalMoment> {
    let geometry = samples.geometry();
    let mut values = vec![0.0; geometry.component_count()];
    for c in samples.configs() {
        let (inner, outer) = geometry.split_closure(c)?;
        for (acc, v) in values
            .iter_mut()
            .zip(restricted_statistic(geometry, &inner, &outer)?.values)
        {
            *acc += v;
        }
    }
    let n = samples.len() as f64;
    values.iter_mut().for_each(|v| *v /= n);
    Ok(EmpiricalMoment { values })
}

struct PerObservation {
    log_partition: f64,
    neg_log_prob: f64,
    moments: Option<Vec<f64>>,
}

/// `H^n(theta)` over an observation set under a parameter tying.
#[derive(Debug, Clone)]
pub struct McdlObjective {
    observations: ObservationSet,
    tying: ParameterTying,
}

impl McdlObjective {
    pub fn new(observations: ObservationSet, tying: ParameterTying) -> Result<Self> {
        let g = observations.graph();
        if tying.full_len() != g.node_count() + g.edge_count() {
            return Err(Error::LengthMismatch {
                what: "tying components",
                expected: g.node_count() + g.edge_count(),
                actual: tying.full_len(),
            });
        }
        Ok(McdlObjective {
            observations,
            tying,
        })
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.observations
    }

    pub fn tying(&self) -> &ParameterTying {
        &self.tying
    }

    pub fn free_count(&self) -> usize {
        self.tying.free_count()
    }

    fn model(&self, free: &[f64]) -> Result<PairwiseModel> {
        PairwiseModel::from_full(self.observations.graph.clone(), self.tying.expand(free)?)
    }

    fn per_observation(
        &self,
        model: &PairwiseModel,
        with_moments: bool,
    ) -> Result<Vec<PerObservation>> {
        let set = &self.observations;
        set.observations
            .par_iter()
            .map(|obs| {
                let cond = fold_boundary(model, &set.geometries[obs.geometry], &obs.boundary)?;
                let energy = cond.energy(&obs.subset);
                let (log_partition, moments) = if with_moments {
                    let (lp, m) = cond.log_partition_and_moments()?;
                    (lp, Some(m.values))
                } else {
                    (cond.log_partition()?, None)
                };
                Ok(PerObservation {
                    log_partition,
                    neg_log_prob: log_partition - energy,
                    moments,
                })
            })
            .collect()
    }

    /// Mean of `-log p(x_U | x_boundary)` in nats per observation.
    pub fn value(&self, free: &[f64]) -> Result<f64> {
        let model = self.model(free)?;
        let per = self.per_observation(&model, false)?;
        Ok(compensated_sum(per.iter().map(|p| p.neg_log_prob)) / per.len() as f64)
    }

    /// Same objective through the log-partition average minus `<mu_hat, theta>`.
    pub fn value_via_moments(&self, free: &[f64]) -> Result<f64> {
        let full = self.tying.expand(free)?;
        let model = PairwiseModel::from_full(self.observations.graph.clone(), full.clone())?;
        let per = self.per_observation(&model, false)?;
        let mean_phi = compensated_sum(per.iter().map(|p| p.log_partition)) / per.len() as f64;
        let inner = compensated_sum(
            self.observations
                .empirical
                .iter()
                .zip(&full)
                .map(|(m, t)| m * t),
        );
        Ok(mean_phi - inner)
    }

    /// Objective and its gradient with respect to the free parameters.
    pub fn value_and_gradient(&self, free: &[f64]) -> Result<(f64, Vec<f64>)> {
        let model = self.model(free)?;
        let per = self.per_observation(&model, true)?;
        let n = per.len() as f64;
        let value = compensated_sum(per.iter().map(|p| p.neg_log_prob)) / n;
        let mut full_grad = vec![0.0; self.tying.full_len()];
        for (obs, p) in self.observations.observations.iter().zip(&per) {
            let moments = p.moments.as_ref().expect("moments requested");
            for (&k, &m) in self.observations.component_index[obs.geometry]
                .iter()
                .zip(moments)
            {
                full_grad[k] += m;
            }
        }
        for (g, e) in full_grad.iter_mut().zip(&self.observations.empirical) {
            *g = *g / n - e;
        }
        Ok((value, self.tying.pullback(&full_grad)?))
    }

    pub fn gradient(&self, free: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_gradient(free)?.1)
    }

    /// Converts a nats-per-observation value to bits per subset site.
    pub fn bits_per_site(&self, nats: f64) -> f64 {
        nats / (self.observations.mean_subset_size() * std::f64::consts::LN_2)
    }
}

/// Cross entropy of a temporal sample sequence, in nats per sample.
pub fn cross_entropy(
    graph: Arc<Graph>,
    samples: &SampleSequence,
    free: &[f64],
    tying: &ParameterTying,
) -> Result<f64> {
    McdlObjective::new(ObservationSet::temporal(graph, samples)?, tying.clone())?.value(free)
}

pub fn cross_entropy_gradient(
    graph: Arc<Graph>,
    samples: &SampleSequence,
    free: &[f64],
    tying: &ParameterTying,
) -> Result<Vec<f64>> {
    McdlObjective::new(ObservationSet::temporal(graph, samples)?, tying.clone())?.gradient(free)
}

/// Mean conditional negative log-likelihood of many subsets of one configuration.
pub fn spatial_objective(
    graph: Arc<Graph>,
    config: &[Spin],
    subsets: Vec<SubsetGeometry>,
    free: &[f64],
    tying: &ParameterTying,
) -> Result<f64> {
    McdlObjective::new(
        ObservationSet::spatial(graph, config, subsets)?,
        tying.clone(),
    )?
    .value(free)
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Starting point; zero when absent.
    pub initial: Option<Vec<f64>>,
    pub max_backtracks: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            grad_tol: DEFAULT_GRAD_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            initial: None,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub gradient_inf_norm: f64,
    pub step: f64,
    pub backtracks: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub theta: Vec<f64>,
    pub objective_nats: f64,
    pub objective_bits_per_site: f64,
    pub gradient_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
    pub evaluations: usize,
    pub evaluation_seconds: Vec<f64>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient descent with Armijo backtracking. The first trial step of each
/// line search is the Barzilai-Borwein step from the previous iteration
/// (1 on the first); rejected trials are halved.
pub fn minimize_mcdl(objective: &McdlObjective, opts: &MinimizeOptions) -> Result<EstimateReport> {
    let mut timings = Vec::new();
    let mut timed = |f: &mut dyn FnMut() -> Result<(f64, Option<Vec<f64>>)>| {
        let start = Instant::now();
        let out = f();
        timings.push(start.elapsed().as_secs_f64());
        out
    };

    let mut theta = match &opts.initial {
        Some(init) => {
            objective.tying().check_free(init)?;
            init.clone()
        }
        None => vec![0.0; objective.free_count()],
    };
    let (mut value, mut grad) = {
        let (v, g) = timed(&mut || {
            objective
                .value_and_gradient(&theta)
                .map(|(v, g)| (v, Some(g)))
        })?;
        (v, g.expect("gradient"))
    };
    let mut trace = vec![IterationRecord {
        iteration: 0,
        objective: value,
        gradient_inf_norm: inf_norm(&grad),
        step: 0.0,
        backtracks: 0,
    }];
    let mut trial_step = 1.0;
    let mut converged = inf_norm(&grad) < opts.grad_tol;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let slope = -dot(&grad, &grad);
        let mut step = trial_step;
        let mut accepted = None;
        for backtracks in 0..=opts.max_backtracks {
            let candidate: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
            let (v, _) = timed(&mut || objective.value(&candidate).map(|v| (v, None)))?;
            if v.is_finite() && v <= value + ARMIJO_SUFFICIENT_DECREASE * step * slope {
                accepted = Some((candidate, v, backtracks));
                break;
            }
            step *= BACKTRACK_FACTOR;
        }
        let Some((next, _, backtracks)) = accepted else {
            break;
        };
        let (v, g) = {
            let (v, g) = timed(&mut || {
                objective
                    .value_and_gradient(&next)
                    .map(|(v, g)| (v, Some(g)))
            })?;
            (v, g.expect("gradient"))
        };
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        trial_step = if sy > 0.0 {
            dot(&s, &s) / sy
        } else {
            step * 2.0
        };
        theta = next;
        value = v;
        grad = g;
        converged = inf_norm(&grad) < opts.grad_tol;
        trace.push(IterationRecord {
            iteration: iterations,
            objective: value,
            gradient_inf_norm: inf_norm(&grad),
            step,
            backtracks,
        });
    }

    Ok(EstimateReport {
        objective_bits_per_site: objective.bits_per_site(value),
        theta,
        objective_nats: value,
        gradient_inf_norm: inf_norm(&grad),
        iterations,
        converged,
        trace,
        evaluations: timings.len(),
        evaluation_seconds: timings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub argmin: f64,
    pub mean_subset_size: f64,
}

/// `count` evenly spaced values of a single free parameter in `[lo, hi]`.
pub fn sweep_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "sweep needs at least 2 points, got {count}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "bad sweep range [{lo}, {hi}]"
        )));
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count).map(|i| lo + step * i as f64).collect())
}

pub fn sweep_scalar(
    objective: &McdlObjective,
    lo: f64,
    hi: f64,
    count: usize,
) -> Result<SweepResult> {
    if objective.free_count() != 1 {
        return Err(Error::InvalidArgument(format!(
            "sweeps need exactly one free parameter, tying has {}",
            objective.free_count()
        )));
    }
    let points = sweep_grid(lo, hi, count)?
        .into_iter()
        .map(|theta| {
            Ok(SweepPoint {
                theta,
                objective: objective.value(&[theta])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = points.iter().fold(points[0], |best, p| {
        if p.objective < best.objective {
            *p
        } else {
            best
        }
    });
    Ok(SweepResult {
        argmin: best.theta,
        points,
        mean_subset_size: objective.observations().mean_subset_size(),
    })
}

impl SweepResult {
    /// CSV with header `theta,H_nats,H_bits_per_site`; bits per site is
    /// `H_nats / (mean |U| * ln 2)`. Ends with `# argmin=<theta>`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "theta,H_nats,H_bits_per_site")?;
        let norm = self.mean_subset_size * std::f64::consts::LN_2;
        for p in &self.points {
            writeln!(
                out,
                "{:.6},{:.12},{:.12}",
                p.theta,
                p.objective,
                p.objective / norm
            )?;
        }
        writeln!(out, "# argmin={:.6}", self.argmin)
    }
}
