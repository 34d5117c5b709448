//! Pairwise Ising-type exponential family over spins in {-1, +1}.
//!
//! Statistics are `t_i(x) = x_i` per node and `t_ij(x) = x_i x_j` per edge.
//! The full parameter vector is laid out as `[node params..., edge params...]`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    build_grid, Graph, GridShape, NodeId, SubsetGeometry, DEFAULT_BRUTE_FORCE_LIMIT,
};
use crate::numeric::log_sum_exp;

pub type Spin = i8;

/// Spin values assigned to nodes, indexed by node (full graph) or by
/// position in an ordered node list (restricted).
pub type Configuration = Vec<Spin>;

pub fn check_spins(values: &[Spin]) -> Result<()> {
    match values.iter().find(|&&s| s != 1 && s != -1) {
        Some(&bad) => Err(Error::InvalidSpin(bad)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseModel {
    graph: Arc<Graph>,
    node_params: Vec<f64>,
    edge_params: Vec<f64>,
}

impl PairwiseModel {
    pub fn new(graph: Arc<Graph>, node_params: Vec<f64>, edge_params: Vec<f64>) -> Result<Self> {
        if node_params.len() != graph.node_count() {
            return Err(Error::LengthMismatch {
                what: "node parameters",
                expected: graph.node_count(),
                actual: node_params.len(),
            });
        }
        if edge_params.len() != graph.edge_count() {
            return Err(Error::LengthMismatch {
                what: "edge parameters",
                expected: graph.edge_count(),
                actual: edge_params.len(),
            });
        }
        if let Some(k) = node_params
            .iter()
            .chain(&edge_params)
            .position(|v| !v.is_finite())
        {
            return Err(Error::NonFiniteParameter(k));
        }
        Ok(PairwiseModel {
            graph,
            node_params,
            edge_params,
        })
    }

    pub fn homogeneous(graph: Arc<Graph>, node_value: f64, edge_value: f64) -> Result<Self> {
        let (n, m) = (graph.node_count(), graph.edge_count());
        Self::new(graph, vec![node_value; n], vec![edge_value; m])
    }

    /// Builds a model from a full parameter vector `[nodes..., edges...]`.
    pub fn from_full(graph: Arc<Graph>, mut full: Vec<f64>) -> Result<Self> {
        let n = graph.node_count();
        if full.len() != n + graph.edge_count() {
            return Err(Error::LengthMismatch {
                what: "full parameter vector",
                expected: n + graph.edge_count(),
                actual: full.len(),
            });
        }
        let edges = full.split_off(n);
        Self::new(graph, full, edges)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn shared_graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn node_params(&self) -> &[f64] {
        &self.node_params
    }

    pub fn edge_params(&self) -> &[f64] {
        &self.edge_params
    }

    pub fn full_params(&self) -> Vec<f64> {
        let mut v = self.node_params.clone();
        v.extend_from_slice(&self.edge_params);
        v
    }

    /// `<theta, t(x)>` for a full configuration.
    pub fn energy(&self, x: &[Spin]) -> f64 {
        let nodes: f64 = self
            .node_params
            .iter()
            .zip(x)
            .map(|(&t, &s)| t * f64::from(s))
            .sum();
        let edges: f64 = self
            .graph
            .edges()
            .iter()
            .zip(&self.edge_params)
            .map(|(&(u, v), &t)| t * f64::from(x[u] * x[v]))
            .sum();
        nodes + edges
    }

    /// `theta_i + sum_j theta_ij x_j`; assumes every neighbor is assigned.
    #[inline]
    pub fn local_field(&self, x: &[Spin], node: NodeId) -> f64 {
        self.graph
            .neighbors(node)
            .iter()
            .fold(self.node_params[node], |acc, &(m, e)| {
                acc + self.edge_params[e] * f64::from(x[m])
            })
    }

    /// Probability that `node` takes spin +1 given its neighbors' values.
    ///
    /// Only neighbor entries of `x` are read; any value other than -1 or +1
    /// there (e.g. 0) counts as unassigned.
    pub fn site_conditional(&self, x: &[Spin], node: NodeId) -> Result<f64> {
        self.graph.check_node(node)?;
        if x.len() != self.graph.node_count() {
            return Err(Error::LengthMismatch {
                what: "configuration",
                expected: self.graph.node_count(),
                actual: x.len(),
            });
        }
        for &(m, _) in self.graph.neighbors(node) {
            if x[m] != 1 && x[m] != -1 {
                return Err(Error::UnassignedNeighbor { node, neighbor: m });
            }
        }
        Ok(logistic(2.0 * self.local_field(x, node)))
    }

    /// Log-partition function by exhaustive summation over `2^|V|` configurations.
    pub fn log_partition_bruteforce(&self, limit: usize) -> Result<f64> {
        let n = self.graph.node_count();
        if n > limit {
            return Err(Error::TooLargeForEnumeration { size: n, limit });
        }
        let energies: Vec<f64> = (0..1usize << n)
            .map(|bits| self.energy(&spins_from_bits(bits, n)))
            .collect();
        Ok(log_sum_exp(&energies))
    }

    /// `log p(x) = <theta, t(x)> - Phi(theta)`, in nats, with Phi enumerated.
    pub fn joint_log_prob_bruteforce(&self, x: &[Spin]) -> Result<f64> {
        if x.len() != self.graph.node_count() {
            return Err(Error::LengthMismatch {
                what: "configuration",
                expected: self.graph.node_count(),
                actual: x.len(),
            });
        }
        check_spins(x)?;
        Ok(self.energy(x) - self.log_partition_bruteforce(DEFAULT_BRUTE_FORCE_LIMIT)?)
    }
}

/// Spin vector for an enumeration index: bit `k` set means position `k` is +1.
pub fn spins_from_bits(bits: usize, len: usize) -> Vec<Spin> {
    (0..len)
        .map(|k| if bits >> k & 1 == 1 { 1 } else { -1 })
        .collect()
}

#[inline]
pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Restricted statistic `t_U-bar(x_U, x_boundary)`, aligned with
/// [`SubsetGeometry::components`].
#[derive(Debug, Clone, PartialEq)]
pub struct StatVector {
    pub values: Vec<f64>,
}

pub fn restricted_statistic(
    geometry: &SubsetGeometry,
    subset_values: &[Spin],
    boundary_values: &[Spin],
) -> Result<StatVector> {
    check_assignment(geometry, subset_values, boundary_values)?;
    let mut values = Vec::with_capacity(geometry.component_count());
    values.extend(subset_values.iter().map(|&s| f64::from(s)));
    values.extend(
        geometry
            .interior_edges()
            .iter()
            .map(|e| f64::from(subset_values[e.a] * subset_values[e.b])),
    );
    values.extend(
        geometry
            .crossing_edges()
            .iter()
            .map(|e| f64::from(subset_values[e.inner] * boundary_values[e.outer])),
    );
    Ok(StatVector { values })
}

pub(crate) fn check_assignment(
    geometry: &SubsetGeometry,
    subset_values: &[Spin],
    boundary_values: &[Spin],
) -> Result<()> {
    if subset_values.len() != geometry.subset().len() {
        return Err(Error::LengthMismatch {
            what: "subset configuration",
            expected: geometry.subset().len(),
            actual: subset_values.len(),
        });
    }
    check_boundary(geometry, boundary_values)?;
    check_spins(subset_values)
}

pub(crate) fn check_boundary(geometry: &SubsetGeometry, boundary_values: &[Spin]) -> Result<()> {
    if boundary_values.len() != geometry.boundary().len() {
        return Err(Error::LengthMismatch {
            what: "boundary configuration",
            expected: geometry.boundary().len(),
            actual: boundary_values.len(),
        });
    }
    check_spins(boundary_values)
}

/// Where one full-vector component gets its value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TieTarget {
    Free(usize),
    Frozen(f64),
}

/// Linear map from free parameters onto the full parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterTying {
    free_count: usize,
    targets: Vec<TieTarget>,
}

impl ParameterTying {
    /// Validates the partition property: every free index below
    /// `free_count` controls at least one component.
    pub fn new(free_count: usize, targets: Vec<TieTarget>) -> Result<Self> {
        let mut used = vec![false; free_count];
        for t in &targets {
            match *t {
                TieTarget::Free(k) if k < free_count => used[k] = true,
                TieTarget::Free(k) => {
                    return Err(Error::InvalidTying(format!(
                        "free index {k} out of range for {free_count} free parameters"
                    )))
                }
                TieTarget::Frozen(v) if !v.is_finite() => {
                    return Err(Error::InvalidTying("frozen value is not finite".into()))
                }
                TieTarget::Frozen(_) => {}
            }
        }
        if let Some(k) = used.iter().position(|u| !u) {
            return Err(Error::InvalidTying(format!(
                "free parameter {k} controls no component"
            )));
        }
        Ok(ParameterTying {
            free_count,
            targets,
        })
    }

    /// One free scalar shared by every edge; node parameters frozen at the
    /// model's values.
    pub fn homogeneous(model: &PairwiseModel) -> Result<Self> {
        let targets = model
            .node_params()
            .iter()
            .map(|&v| TieTarget::Frozen(v))
            .chain(model.edge_params().iter().map(|_| TieTarget::Free(0)))
            .collect();
        Self::new(1, targets)
    }

    /// Every component is its own free parameter.
    pub fn identity(graph: &Graph) -> Self {
        let len = graph.node_count() + graph.edge_count();
        ParameterTying {
            free_count: len,
            targets: (0..len).map(TieTarget::Free).collect(),
        }
    }

    /// Groups given per node and per edge; `None` freezes the component at
    /// the model's value.
    pub fn from_groups(
        model: &PairwiseModel,
        node_groups: &[Option<usize>],
        edge_groups: &[Option<usize>],
    ) -> Result<Self> {
        let g = model.graph();
        if node_groups.len() != g.node_count() || edge_groups.len() != g.edge_count() {
            return Err(Error::InvalidTying(format!(
                "explicit tying needs {} node and {} edge entries",
                g.node_count(),
                g.edge_count()
            )));
        }
        let pick = |group: &Option<usize>, value: f64| match group {
            Some(k) => TieTarget::Free(*k),
            None => TieTarget::Frozen(value),
        };
        let targets: Vec<_> = node_groups
            .iter()
            .zip(model.node_params())
            .chain(edge_groups.iter().zip(model.edge_params()))
            .map(|(grp, &v)| pick(grp, v))
            .collect();
        let free_count = targets
            .iter()
            .filter_map(|t| match t {
                TieTarget::Free(k) => Some(k + 1),
                TieTarget::Frozen(_) => None,
            })
            .max()
            .unwrap_or(0);
        Self::new(free_count, targets)
    }

    pub fn free_count(&self) -> usize {
        self.free_count
    }

    pub fn full_len(&self) -> usize {
        self.targets.len()
    }

    pub fn targets(&self) -> &[TieTarget] {
        &self.targets
    }

    /// Broadcasts free values onto the full parameter vector.
    pub fn expand(&self, free: &[f64]) -> Result<Vec<f64>> {
        self.check_free(free)?;
        Ok(self
            .targets
            .iter()
            .map(|t| match *t {
                TieTarget::Free(k) => free[k],
                TieTarget::Frozen(v) => v,
            })
            .collect())
    }

    /// Chain rule for the linear tying: sums full-gradient entries per free
    /// parameter; frozen components drop out.
    pub fn pullback(&self, full_gradient: &[f64]) -> Result<Vec<f64>> {
        if full_gradient.len() != self.targets.len() {
            return Err(Error::LengthMismatch {
                what: "full gradient",
                expected: self.targets.len(),
                actual: full_gradient.len(),
            });
        }
        let mut free = vec![0.0; self.free_count];
        for (t, &g) in self.targets.iter().zip(full_gradient) {
            if let TieTarget::Free(k) = *t {
                free[k] += g;
            }
        }
        Ok(free)
    }

    pub fn check_free(&self, free: &[f64]) -> Result<()> {
        if free.len() != self.free_count {
            return Err(Error::LengthMismatch {
                what: "free parameters",
                expected: self.free_count,
                actual: free.len(),
            });
        }
        Ok(())
    }

    /// Free values read off a model, taking the first component of each group.
    pub fn free_from_model(&self, model: &PairwiseModel) -> Vec<f64> {
        let full = model.full_params();
        let mut free = vec![f64::NAN; self.free_count];
        for (t, &v) in self.targets.iter().zip(&full) {
            if let TieTarget::Free(k) = *t {
                if free[k].is_nan() {
                    free[k] = v;
                }
            }
        }
        free
    }
}

/// Scalar broadcast or explicit per-component list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrArray {
    Scalar(f64),
    Array(Vec<f64>),
}

impl ScalarOrArray {
    fn expand(&self, len: usize, what: &'static str) -> Result<Vec<f64>> {
        match self {
            ScalarOrArray::Scalar(v) => Ok(vec![*v; len]),
            ScalarOrArray::Array(values) if values.len() == len => Ok(values.clone()),
            ScalarOrArray::Array(values) => Err(Error::LengthMismatch {
                what,
                expected: len,
                actual: values.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TyingSpec {
    /// `"homogeneous"` or `"free"`.
    Named(String),
    Groups {
        node_groups: Vec<Option<usize>>,
        edge_groups: Vec<Option<usize>>,
    },
}

impl Default for TyingSpec {
    fn default() -> Self {
        TyingSpec::Named("homogeneous".into())
    }
}

/// JSON model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub grid: GridShape,
    pub node_params: ScalarOrArray,
    pub edge_params: ScalarOrArray,
    #[serde(default)]
    pub tying: TyingSpec,
}

impl ModelFile {
    pub fn build(&self) -> Result<(PairwiseModel, ParameterTying)> {
        let graph = Arc::new(build_grid(
            self.grid.height,
            self.grid.width,
            self.grid.toroidal,
        )?);
        let nodes = self.node_params.expand(graph.node_count(), "node_params")?;
        let edges = self.edge_params.expand(graph.edge_count(), "edge_params")?;
        let model = PairwiseModel::new(graph, nodes, edges)?;
        let tying = match &self.tying {
            TyingSpec::Named(name) if name == "homogeneous" => ParameterTying::homogeneous(&model)?,
            TyingSpec::Named(name) if name == "free" => ParameterTying::identity(model.graph()),
            TyingSpec::Named(other) => {
                return Err(Error::ModelFile(format!("unknown tying `{other}`")))
            }
            TyingSpec::Groups {
                node_groups,
                edge_groups,
            } => ParameterTying::from_groups(&model, node_groups, edge_groups)?,
        };
        Ok((model, tying))
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
