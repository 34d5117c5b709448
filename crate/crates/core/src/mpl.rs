//! Maximum pseudo-likelihood, computed directly from single-site
//! conditionals. Serves as an independent reference for the single-site
//! special case of the spatial MCDL objective.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::model::{PairwiseModel, Spin};
use crate::numeric::compensated_sum;

/// `-(1/|sites|) sum_i log p(x_i | x_neighbors)` in nats.
pub fn negative_pseudo_log_likelihood(
    model: &PairwiseModel,
    config: &[Spin],
    sites: &[NodeId],
) -> Result<f64> {
    if sites.is_empty() {
        return Err(Error::EmptySubset);
    }
    let terms = sites
        .iter()
        .map(|&i| {
            let p_plus = model.site_conditional(config, i)?;
            let p = if config[i] > 0 { p_plus } else { 1.0 - p_plus };
            Ok(-p.ln())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(compensated_sum(terms) / sites.len() as f64)
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Pseudo-likelihood terms for a homogeneous edge scalar: each site
/// contributes `softplus(-2 x_i (node + theta * S_i))`, `S_i` the neighbor sum.
struct HomogeneousTerms {
    spins: Vec<f64>,
    neighbor_sums: Vec<f64>,
    node_value: f64,
}

impl HomogeneousTerms {
    fn new(graph: &Graph, config: &[Spin], sites: &[NodeId], node_value: f64) -> Self {
        HomogeneousTerms {
            spins: sites.iter().map(|&i| f64::from(config[i])).collect(),
            neighbor_sums: sites
                .iter()
                .map(|&i| {
                    graph
                        .neighbors(i)
                        .iter()
                        .map(|&(j, _)| f64::from(config[j]))
                        .sum()
                })
                .collect(),
            node_value,
        }
    }

    fn value(&self, theta: f64) -> f64 {
        let terms = self
            .spins
            .iter()
            .zip(&self.neighbor_sums)
            .map(|(&x, &s)| softplus(-2.0 * x * (self.node_value + theta * s)));
        compensated_sum(terms) / self.spins.len() as f64
    }

    fn derivative(&self, theta: f64) -> f64 {
        let terms = self
            .spins
            .iter()
            .zip(&self.neighbor_sums)
            .map(|(&x, &s)| -2.0 * x * s * sigmoid(-2.0 * x * (self.node_value + theta * s)));
        compensated_sum(terms) / self.spins.len() as f64
    }
}

/// MPL estimate of a homogeneous edge parameter with node parameters fixed
/// at `node_value`, by bisection on the (monotone) derivative.
pub fn mpl_homogeneous(
    graph: &Graph,
    config: &[Spin],
    sites: &[NodeId],
    node_value: f64,
) -> Result<f64> {
    if sites.is_empty() {
        return Err(Error::EmptySubset);
    }
    let terms = HomogeneousTerms::new(graph, config, sites, node_value);
    let (mut lo, mut hi) = (-1.0, 1.0);
    while terms.derivative(lo) >= 0.0 {
        lo *= 2.0;
        if lo < -1e3 {
            return Err(Error::InvalidArgument(
                "pseudo-likelihood has no finite maximizer".into(),
            ));
        }
    }
    while terms.derivative(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::InvalidArgument(
                "pseudo-likelihood has no finite maximizer".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if terms.derivative(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Negative mean pseudo-log-likelihood at a homogeneous edge value.
pub fn homogeneous_npll(
    graph: &Graph,
    config: &[Spin],
    sites: &[NodeId],
    node_value: f64,
    theta: f64,
) -> f64 {
    HomogeneousTerms::new(graph, config, sites, node_value).value(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_grid;
    use std::sync::Arc;

    #[test]
    fn closed_form_matches_site_conditionals() {
        let g = Arc::new(build_grid(5, 6, false).unwrap());
        let config: Vec<Spin> = (0..30)
            .map(|i| if (i * 7) % 5 < 2 { 1 } else { -1 })
            .collect();
        let sites: Vec<NodeId> = (0..30).collect();
        for theta in [-0.3, 0.0, 0.45] {
            let model = PairwiseModel::homogeneous(g.clone(), 0.1, theta).unwrap();
            let a = negative_pseudo_log_likelihood(&model, &config, &sites).unwrap();
            let b = homogeneous_npll(&g, &config, &sites, 0.1, theta);
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn estimate_is_stationary_point() {
        let g = build_grid(6, 6, false).unwrap();
        let config: Vec<Spin> = (0..36)
            .map(|i| if (i / 6 + i % 6) % 3 == 0 { -1 } else { 1 })
            .collect();
        let sites: Vec<NodeId> = (0..36).collect();
        let theta = mpl_homogeneous(&g, &config, &sites, 0.0).unwrap();
        let f = |t| homogeneous_npll(&g, &config, &sites, 0.0, t);
        assert!(f(theta) <= f(theta + 1e-4) && f(theta) <= f(theta - 1e-4));
    }

    #[test]
    fn degenerate_data_has_no_maximizer() {
        let g = build_grid(4, 4, false).unwrap();
        let sites: Vec<NodeId> = (0..16).collect();
        assert!(mpl_homogeneous(&g, &[1; 16], &sites, 0.0).is_err());
    }
}
