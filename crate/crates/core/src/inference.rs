//! Exact inference for a subset conditioned on its boundary.
//!
//! Crossing edges are folded into effective node fields, leaving an Ising
//! model on the subset's induced subgraph. Forests are handled by two-pass
//! sum-product in the log domain; small cyclic subsets by enumeration.

use crate::error::{Error, Result};
use crate::graph::{Forest, SubsetGeometry, Tractability};
use crate::model::{check_assignment, check_boundary, spins_from_bits, PairwiseModel, Spin};
use crate::numeric::{log_add_exp, log_sum_exp};

const MINUS: usize = 0;
const PLUS: usize = 1;

/// Log-domain pair indexed by spin: `[value at -1, value at +1]`.
type LogPair = [f64; 2];

#[inline]
fn spin_index(s: Spin) -> usize {
    usize::from(s > 0)
}

/// Ising model on `U` with the boundary configuration folded in.
#[derive(Debug, Clone)]
pub struct ConditionalModel<'g> {
    geometry: &'g SubsetGeometry,
    fields: Vec<f64>,
    couplings: Vec<f64>,
    boundary: Vec<Spin>,
}

/// Effective fields `h_i = theta_i + sum theta_ij x_j` over crossing edges.
pub fn fold_boundary<'g>(
    model: &PairwiseModel,
    geometry: &'g SubsetGeometry,
    boundary_values: &[Spin],
) -> Result<ConditionalModel<'g>> {
    if !geometry.is_tractable() {
        return Err(Error::Intractable {
            size: geometry.subset().len(),
        });
    }
    check_boundary(geometry, boundary_values)?;
    let mut fields: Vec<f64> = geometry
        .subset()
        .iter()
        .map(|&n| model.node_params()[n])
        .collect();
    for e in geometry.crossing_edges() {
        fields[e.inner] += model.edge_params()[e.edge] * f64::from(boundary_values[e.outer]);
    }
    let couplings = geometry
        .interior_edges()
        .iter()
        .map(|e| model.edge_params()[e.edge])
        .collect();
    Ok(ConditionalModel {
        geometry,
        fields,
        couplings,
        boundary: boundary_values.to_vec(),
    })
}

/// Conditional moments aligned with [`SubsetGeometry::components`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMoments {
    pub values: Vec<f64>,
}

/// Distribution of a single site, `[p(-1), p(+1)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteDistribution(pub [f64; 2]);

impl SiteDistribution {
    pub fn plus(&self) -> f64 {
        self.0[PLUS]
    }

    pub fn prob(&self, s: Spin) -> f64 {
        self.0[spin_index(s)]
    }
}

struct Messages {
    /// Node potential plus messages from children.
    up: Vec<LogPair>,
    /// Message from each non-root node to its parent.
    to_parent: Vec<LogPair>,
    log_partition: f64,
}

impl<'g> ConditionalModel<'g> {
    pub fn geometry(&self) -> &'g SubsetGeometry {
        self.geometry
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn boundary(&self) -> &[Spin] {
        &self.boundary
    }

    /// `<t_U-bar(x_U, x_boundary), theta>` through the folded fields.
    pub fn energy(&self, subset_values: &[Spin]) -> f64 {
        let nodes: f64 = self
            .fields
            .iter()
            .zip(subset_values)
            .map(|(&h, &s)| h * f64::from(s))
            .sum();
        let edges: f64 = self
            .geometry
            .interior_edges()
            .iter()
            .zip(&self.couplings)
            .map(|(e, &t)| t * f64::from(subset_values[e.a] * subset_values[e.b]))
            .sum();
        nodes + edges
    }

    fn upward(&self, forest: &Forest, clamp: Option<&[Option<Spin>]>) -> Messages {
        let size = self.fields.len();
        let mut up: Vec<LogPair> = self.fields.iter().map(|&h| [-h, h]).collect();
        if let Some(clamp) = clamp {
            for (pair, c) in up.iter_mut().zip(clamp) {
                if let Some(s) = *c {
                    pair[1 - spin_index(s)] = f64::NEG_INFINITY;
                }
            }
        }
        let mut to_parent = vec![[0.0; 2]; size];
        let mut log_partition = 0.0;
        for &v in forest.order.iter().rev() {
            let belief = up[v];
            match forest.parent[v] {
                Some((p, k)) => {
                    let t = self.couplings[k];
                    let msg = [
                        log_add_exp(belief[MINUS] + t, belief[PLUS] - t),
                        log_add_exp(belief[MINUS] - t, belief[PLUS] + t),
                    ];
                    to_parent[v] = msg;
                    up[p][MINUS] += msg[MINUS];
                    up[p][PLUS] += msg[PLUS];
                }
                None => log_partition += log_add_exp(belief[MINUS], belief[PLUS]),
            }
        }
        Messages {
            up,
            to_parent,
            log_partition,
        }
    }

    fn enumerate_energies(&self, clamp: Option<&[Option<Spin>]>) -> Result<Vec<f64>> {
        let size = self.fields.len();
        if size > usize::BITS as usize - 1 {
            return Err(Error::TooLargeForEnumeration {
                size,
                limit: usize::BITS as usize - 1,
            });
        }
        Ok((0..1usize << size)
            .map(|bits| {
                let x = spins_from_bits(bits, size);
                let allowed = clamp.is_none_or(|c| {
                    c.iter().zip(&x).all(|(c, &s)| c.is_none_or(|v| v == s))
                });
                if allowed {
                    self.energy(&x)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect())
    }

    /// `Phi_{U | x_boundary}(theta)` in nats.
    pub fn log_partition(&self) -> Result<f64> {
        self.log_partition_clamped_inner(None)
    }

    /// Log-partition with some subset positions pinned to given spins.
    pub fn log_partition_clamped(&self, clamp: &[Option<Spin>]) -> Result<f64> {
        if clamp.len() != self.fields.len() {
            return Err(Error::LengthMismatch {
                what: "clamp",
                expected: self.fields.len(),
                actual: clamp.len(),
            });
        }
        self.log_partition_clamped_inner(Some(clamp))
    }

    fn log_partition_clamped_inner(&self, clamp: Option<&[Option<Spin>]>) -> Result<f64> {
        match self.geometry.forest() {
            Some(forest) => Ok(self.upward(forest, clamp).log_partition),
            None => Ok(log_sum_exp(&self.enumerate_energies(clamp)?)),
        }
    }

    /// Log-partition and conditional moments in one evaluation.
    pub fn log_partition_and_moments(&self) -> Result<(f64, ConditionalMoments)> {
        let g = self.geometry;
        let size = self.fields.len();
        let mut values = Vec::with_capacity(g.component_count());
        let log_partition;
        match g.forest() {
            Some(forest) => {
                let msgs = self.upward(forest, None);
                log_partition = msgs.log_partition;
                let mut down = vec![[0.0; 2]; size];
                let mut edge_moments = vec![0.0; g.interior_edges().len()];
                for &v in &forest.order {
                    let Some((p, k)) = forest.parent[v] else {
                        continue;
                    };
                    let t = self.couplings[k];
                    // Parent's belief excluding what v sent it.
                    let pre = [
                        msgs.up[p][MINUS] + down[p][MINUS] - msgs.to_parent[v][MINUS],
                        msgs.up[p][PLUS] + down[p][PLUS] - msgs.to_parent[v][PLUS],
                    ];
                    down[v] = [
                        log_add_exp(pre[MINUS] + t, pre[PLUS] - t),
                        log_add_exp(pre[MINUS] - t, pre[PLUS] + t),
                    ];
                    let uv = msgs.up[v];
                    let same = [t + uv[MINUS] + pre[MINUS], t + uv[PLUS] + pre[PLUS]];
                    let diff = [-t + uv[MINUS] + pre[PLUS], -t + uv[PLUS] + pre[MINUS]];
                    let max = same
                        .iter()
                        .chain(&diff)
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max);
                    let s: f64 = same.iter().map(|q| (q - max).exp()).sum();
                    let d: f64 = diff.iter().map(|q| (q - max).exp()).sum();
                    edge_moments[k] = (s - d) / (s + d);
                }
                values.extend((0..size).map(|v| {
                    let b0 = msgs.up[v][MINUS] + down[v][MINUS];
                    let b1 = msgs.up[v][PLUS] + down[v][PLUS];
                    (0.5 * (b1 - b0)).tanh()
                }));
                values.extend(edge_moments);
            }
            None => {
                let energies = self.enumerate_energies(None)?;
                log_partition = log_sum_exp(&energies);
                let mut node = vec![0.0; size];
                let mut edge = vec![0.0; g.interior_edges().len()];
                for (bits, &en) in energies.iter().enumerate() {
                    let w = (en - log_partition).exp();
                    let x = spins_from_bits(bits, size);
                    for (acc, &s) in node.iter_mut().zip(&x) {
                        *acc += w * f64::from(s);
                    }
                    for (acc, e) in edge.iter_mut().zip(g.interior_edges()) {
                        *acc += w * f64::from(x[e.a] * x[e.b]);
                    }
                }
                values.extend(node);
                values.extend(edge);
            }
        }
        for e in g.crossing_edges() {
            let m = values[e.inner];
            values.push(f64::from(self.boundary[e.outer]) * m);
        }
        Ok((log_partition, ConditionalMoments { values }))
    }

    pub fn moments(&self) -> Result<ConditionalMoments> {
        Ok(self.log_partition_and_moments()?.1)
    }

    /// `log p(x_U | x_boundary)` in nats.
    pub fn log_prob(&self, subset_values: &[Spin]) -> Result<f64> {
        check_assignment(self.geometry, subset_values, &self.boundary)?;
        Ok(self.energy(subset_values) - self.log_partition()?)
    }

    /// Distribution of subset position `k` given the pinned positions.
    pub fn site_distribution(
        &self,
        clamp: &mut [Option<Spin>],
        k: usize,
    ) -> Result<SiteDistribution> {
        if self.geometry.tractability() != Tractability::Tree {
            return Err(Error::NotATree);
        }
        let saved = clamp[k];
        clamp[k] = Some(-1);
        let minus = self.log_partition_clamped(clamp)?;
        clamp[k] = Some(1);
        let plus = self.log_partition_clamped(clamp)?;
        clamp[k] = saved;
        let p_plus = 1.0 / (1.0 + (minus - plus).exp());
        let p_minus = 1.0 / (1.0 + (plus - minus).exp());
        Ok(SiteDistribution([p_minus, p_plus]))
    }

    /// `p(x_k | x_1..x_{k-1}, x_boundary)` for each subset position in
    /// ascending node order, conditioning on the realized earlier values.
    pub fn sequential_conditionals(&self, subset_values: &[Spin]) -> Result<Vec<SiteDistribution>> {
        if self.geometry.tractability() != Tractability::Tree {
            return Err(Error::NotATree);
        }
        check_assignment(self.geometry, subset_values, &self.boundary)?;
        let mut clamp = vec![None; subset_values.len()];
        let mut out = Vec::with_capacity(subset_values.len());
        for (k, &s) in subset_values.iter().enumerate() {
            out.push(self.site_distribution(&mut clamp, k)?);
            clamp[k] = Some(s);
        }
        Ok(out)
    }

    /// Exact draw from `p(x_U | x_boundary)`, site by site in the same order
    /// as [`Self::sequential_conditionals`].
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Spin>> {
        let n = self.geometry.subset().len();
        let mut clamp = vec![None; n];
        for k in 0..n {
            let d = self.site_distribution(&mut clamp, k)?;
            clamp[k] = Some(if rng.gen::<f64>() < d.plus() { 1 } else { -1 });
        }
        Ok(clamp
            .into_iter()
            .map(|s| s.expect("all positions drawn"))
            .collect())
    }
}

pub fn conditional_log_partition(cond: &ConditionalModel<'_>) -> Result<f64> {
    cond.log_partition()
}

pub fn conditional_moments(cond: &ConditionalModel<'_>) -> Result<ConditionalMoments> {
    cond.moments()
}

pub fn conditional_log_prob(
    model: &PairwiseModel,
    geometry: &SubsetGeometry,
    subset_values: &[Spin],
    boundary_values: &[Spin],
) -> Result<f64> {
    fold_boundary(model, geometry, boundary_values)?.log_prob(subset_values)
}

/// Exhaustive table of `p(x_U | x_boundary)`; index bit `k` set means
/// subset position `k` is +1.
#[derive(Debug, Clone)]
pub struct ConditionalTable {
    size: usize,
    log_partition: f64,
    log_probs: Vec<f64>,
}

/// Direct enumeration of `<t_U-bar, theta>` from the model parameters.
pub fn brute_force_conditional(
    model: &PairwiseModel,
    geometry: &SubsetGeometry,
    boundary_values: &[Spin],
    limit: usize,
) -> Result<ConditionalTable> {
    let size = geometry.subset().len();
    if size > limit {
        return Err(Error::TooLargeForEnumeration { size, limit });
    }
    check_boundary(geometry, boundary_values)?;
    let theta_node = model.node_params();
    let theta_edge = model.edge_params();
    let energies: Vec<f64> = (0..1usize << size)
        .map(|bits| {
            let x = spins_from_bits(bits, size);
            let mut total = 0.0;
            for (k, &n) in geometry.subset().iter().enumerate() {
                total += theta_node[n] * f64::from(x[k]);
            }
            for e in geometry.interior_edges() {
                total += theta_edge[e.edge] * f64::from(x[e.a] * x[e.b]);
            }
            for e in geometry.crossing_edges() {
                total += theta_edge[e.edge] * f64::from(x[e.inner] * boundary_values[e.outer]);
            }
            total
        })
        .collect();
    let log_partition = log_sum_exp(&energies);
    Ok(ConditionalTable {
        size,
        log_partition,
        log_probs: energies.iter().map(|e| e - log_partition).collect(),
    })
}

pub fn bits_from_spins(x: &[Spin]) -> usize {
    x.iter()
        .enumerate()
        .fold(0, |acc, (k, &s)| if s > 0 { acc | 1 << k } else { acc })
}

impl ConditionalTable {
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn log_prob(&self, x: &[Spin]) -> f64 {
        self.log_probs[bits_from_spins(x)]
    }

    /// Expectations of every statistic component, by direct summation.
    pub fn moments(&self, geometry: &SubsetGeometry, boundary_values: &[Spin]) -> Vec<f64> {
        let mut values = vec![0.0; geometry.component_count()];
        for (bits, p) in self.probs().into_iter().enumerate() {
            let x = spins_from_bits(bits, self.size);
            let stat = crate::model::restricted_statistic(geometry, &x, boundary_values)
                .expect("enumerated assignment is valid");
            for (acc, s) in values.iter_mut().zip(stat.values) {
                *acc += p * s;
            }
        }
        values
    }

    /// Chain-rule conditionals in ascending position order, by marginalizing the table.
    pub fn sequential(&self, x: &[Spin]) -> Vec<SiteDistribution> {
        let probs = self.probs();
        (0..self.size)
            .map(|k| {
                let prefix_mask = (1usize << k) - 1;
                let prefix = bits_from_spins(x) & prefix_mask;
                let mut mass = [0.0; 2];
                for (bits, p) in probs.iter().enumerate() {
                    if bits & prefix_mask == prefix {
                        mass[bits >> k & 1] += p;
                    }
                }
                let total = mass[0] + mass[1];
                SiteDistribution([mass[0] / total, mass[1] / total])
            })
            .collect()
    }
}
