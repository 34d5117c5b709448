//! Undirected pairwise graphs, grid construction and subset geometry.
//!
//! Nodes are integer indices. Grids are laid out row-major, so node
//! `(row, col)` of an `h x w` grid has index `row * w + col`.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Spin;

pub type NodeId = usize;
pub type EdgeId = usize;

/// Exhaustive enumeration is allowed up to this many free variables.
pub const DEFAULT_BRUTE_FORCE_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub height: usize,
    pub width: usize,
    #[serde(default)]
    pub toroidal: bool,
}

impl GridShape {
    pub fn index(&self, row: usize, col: usize) -> NodeId {
        row * self.width + col
    }

    pub fn row_nodes(&self, row: usize) -> Vec<NodeId> {
        (0..self.width).map(|c| self.index(row, c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(NodeId, NodeId)>,
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
    grid: Option<GridShape>,
}

impl Graph {
    /// Builds a graph from an edge list. Endpoints are stored with the
    /// smaller index first; self-loops and duplicate edges are rejected.
    pub fn from_edges(node_count: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); node_count];
        let mut normalized = Vec::with_capacity(edges.len());
        for (id, &(u, v)) in edges.iter().enumerate() {
            for node in [u, v] {
                if node >= node_count {
                    return Err(Error::NodeOutOfRange { node, node_count });
                }
            }
            if u == v {
                return Err(Error::InvalidEdges(format!("self-loop on node {u}")));
            }
            if adjacency[u].iter().any(|&(n, _)| n == v) {
                return Err(Error::InvalidEdges(format!("duplicate edge {{{u}, {v}}}")));
            }
            adjacency[u].push((v, id));
            adjacency[v].push((u, id));
            normalized.push((u.min(v), u.max(v)));
        }
        Ok(Graph {
            node_count,
            edges: normalized,
            adjacency,
            grid: None,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> (NodeId, NodeId) {
        self.edges[id]
    }

    /// Neighbors of `node` paired with the connecting edge id.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node].len()
    }

    pub fn grid(&self) -> Option<GridShape> {
        self.grid
    }

    pub fn check_node(&self, node: NodeId) -> Result<()> {
        if node < self.node_count {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                node,
                node_count: self.node_count,
            })
        }
    }
}

/// Four-nearest-neighbor grid. Edges are enumerated row-major: for each
/// node, the edge to its right neighbor, then the edge to the node below.
pub fn build_grid(height: usize, width: usize, toroidal: bool) -> Result<Graph> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidGrid(format!(
            "dimensions must be positive, got {height}x{width}"
        )));
    }
    if toroidal && (height < 3 || width < 3) {
        return Err(Error::InvalidGrid(format!(
            "toroidal grids need both dimensions >= 3, got {height}x{width}"
        )));
    }
    let node_count = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(2).map(|_| n))
        .ok_or(Error::DimensionOverflow { height, width })?;
    let shape = GridShape {
        height,
        width,
        toroidal,
    };
    let mut edges = Vec::with_capacity(2 * node_count);
    for r in 0..height {
        for c in 0..width {
            let here = shape.index(r, c);
            if c + 1 < width {
                edges.push((here, shape.index(r, c + 1)));
            } else if toroidal {
                edges.push((here, shape.index(r, 0)));
            }
            if r + 1 < height {
                edges.push((here, shape.index(r + 1, c)));
            } else if toroidal {
                edges.push((here, shape.index(0, c)));
            }
        }
    }
    let mut graph = Graph::from_edges(node_count, &edges)?;
    graph.grid = Some(shape);
    Ok(graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tractability {
    /// Induced subgraph is a forest; exact inference by tree message passing.
    Tree,
    /// Induced subgraph has a cycle but is small enough to enumerate.
    SmallBruteForce,
    Intractable,
}

/// Edge with both endpoints in the subset, endpoints given as subset positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteriorEdge {
    pub edge: EdgeId,
    pub a: usize,
    pub b: usize,
}

/// Edge with one endpoint in the subset (`inner`, a subset position) and one
/// on the boundary (`outer`, a boundary position).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrossingEdge {
    pub edge: EdgeId,
    pub inner: usize,
    pub outer: usize,
}

/// A component of the sufficient statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Node(NodeId),
    Edge(EdgeId),
}

impl Component {
    /// Position in the full parameter vector `[nodes..., edges...]`.
    pub fn full_index(self, graph: &Graph) -> usize {
        match self {
            Component::Node(n) => n,
            Component::Edge(e) => graph.node_count() + e,
        }
    }
}

/// Rooted orientation of an acyclic induced subgraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forest {
    /// Subset positions in breadth-first order; parents precede children.
    pub order: Vec<usize>,
    /// Parent position and interior-edge index for each subset position.
    pub parent: Vec<Option<(usize, usize)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetGeometry {
    subset: Vec<NodeId>,
    boundary: Vec<NodeId>,
    closure: Vec<NodeId>,
    interior: Vec<InteriorEdge>,
    crossing: Vec<CrossingEdge>,
    tractability: Tractability,
    forest: Option<Forest>,
}

pub fn subset_geometry(
    graph: &Graph,
    subset: &[NodeId],
    brute_force_limit: usize,
) -> Result<SubsetGeometry> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    for &n in subset {
        graph.check_node(n)?;
    }
    let mut nodes = subset.to_vec();
    nodes.sort_unstable();
    nodes.dedup();

    let mut in_subset = vec![false; graph.node_count()];
    for &n in &nodes {
        in_subset[n] = true;
    }
    let mut boundary: Vec<NodeId> = nodes
        .iter()
        .flat_map(|&n| graph.neighbors(n).iter().map(|&(m, _)| m))
        .filter(|&m| !in_subset[m])
        .collect();
    boundary.sort_unstable();
    boundary.dedup();

    let position = |list: &[NodeId], n: NodeId| list.binary_search(&n).ok();
    let mut interior = Vec::new();
    let mut crossing = Vec::new();
    for (pos, &n) in nodes.iter().enumerate() {
        for &(m, e) in graph.neighbors(n) {
            if in_subset[m] {
                if n < m {
                    let other = position(&nodes, m).expect("subset member");
                    interior.push(InteriorEdge {
                        edge: e,
                        a: pos,
                        b: other,
                    });
                }
            } else {
                let outer = position(&boundary, m).expect("boundary member");
                crossing.push(CrossingEdge {
                    edge: e,
                    inner: pos,
                    outer,
                });
            }
        }
    }
    interior.sort_by_key(|e| e.edge);
    crossing.sort_by_key(|e| e.edge);

    let mut closure = nodes.clone();
    closure.extend_from_slice(&boundary);
    closure.sort_unstable();

    let forest = build_forest(nodes.len(), &interior);
    let tractability = if forest.is_some() {
        Tractability::Tree
    } else if nodes.len() <= brute_force_limit {
        Tractability::SmallBruteForce
    } else {
        Tractability::Intractable
    };

    Ok(SubsetGeometry {
        subset: nodes,
        boundary,
        closure,
        interior,
        crossing,
        tractability,
        forest,
    })
}

/// Returns `None` when the interior edges contain a cycle.
fn build_forest(size: usize, interior: &[InteriorEdge]) -> Option<Forest> {
    if interior.len() >= size {
        return None;
    }
    let mut adjacency = vec![Vec::new(); size];
    for (k, e) in interior.iter().enumerate() {
        adjacency[e.a].push((e.b, k));
        adjacency[e.b].push((e.a, k));
    }
    let mut parent = vec![None; size];
    let mut visited = vec![false; size];
    let mut order = Vec::with_capacity(size);
    let mut roots = 0;
    let mut queue = VecDeque::new();
    for root in 0..size {
        if visited[root] {
            continue;
        }
        roots += 1;
        visited[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &(w, k) in &adjacency[v] {
                if !visited[w] {
                    visited[w] = true;
                    parent[w] = Some((v, k));
                    queue.push_back(w);
                }
            }
        }
    }
    // A forest on `size` nodes with `roots` components has exactly size - roots edges.
    (interior.len() == size - roots).then_some(Forest { order, parent })
}

impl SubsetGeometry {
    pub fn subset(&self) -> &[NodeId] {
        &self.subset
    }

    pub fn boundary(&self) -> &[NodeId] {
        &self.boundary
    }

    pub fn closure(&self) -> &[NodeId] {
        &self.closure
    }

    pub fn interior_edges(&self) -> &[InteriorEdge] {
        &self.interior
    }

    pub fn crossing_edges(&self) -> &[CrossingEdge] {
        &self.crossing
    }

    pub fn tractability(&self) -> Tractability {
        self.tractability
    }

    pub fn is_tractable(&self) -> bool {
        self.tractability != Tractability::Intractable
    }

    pub fn forest(&self) -> Option<&Forest> {
        self.forest.as_ref()
    }

    pub fn subset_position(&self, node: NodeId) -> Option<usize> {
        self.subset.binary_search(&node).ok()
    }

    pub fn boundary_position(&self, node: NodeId) -> Option<usize> {
        self.boundary.binary_search(&node).ok()
    }

    /// Number of statistic components: subset nodes, interior edges, crossing edges.
    pub fn component_count(&self) -> usize {
        self.subset.len() + self.interior.len() + self.crossing.len()
    }

    /// Statistic components in canonical order: subset nodes ascending,
    /// then interior edges, then crossing edges (each by edge id).
    pub fn components(&self) -> impl Iterator<Item = Component> + '_ {
        self.subset
            .iter()
            .map(|&n| Component::Node(n))
            .chain(self.interior.iter().map(|e| Component::Edge(e.edge)))
            .chain(self.crossing.iter().map(|e| Component::Edge(e.edge)))
    }

    /// Splits values listed over the closure (ascending node order) into
    /// subset values and boundary values.
    pub fn split_closure(&self, closure_values: &[Spin]) -> Result<(Vec<Spin>, Vec<Spin>)> {
        if closure_values.len() != self.closure.len() {
            return Err(Error::LengthMismatch {
                what: "closure configuration",
                expected: self.closure.len(),
                actual: closure_values.len(),
            });
        }
        let mut inner = Vec::with_capacity(self.subset.len());
        let mut outer = Vec::with_capacity(self.boundary.len());
        let (mut i, mut j) = (0, 0);
        for (&node, &value) in self.closure.iter().zip(closure_values) {
            if i < self.subset.len() && self.subset[i] == node {
                inner.push(value);
                i += 1;
            } else {
                debug_assert_eq!(self.boundary[j], node);
                outer.push(value);
                j += 1;
            }
        }
        Ok((inner, outer))
    }

    /// Restricts a full-graph configuration to (subset values, boundary values).
    pub fn restrict(&self, full: &[Spin]) -> (Vec<Spin>, Vec<Spin>) {
        (
            self.subset.iter().map(|&n| full[n]).collect(),
            self.boundary.iter().map(|&n| full[n]).collect(),
        )
    }
}

fn require_plain_grid(graph: &Graph) -> Result<GridShape> {
    let shape = graph.grid().ok_or(Error::MissingGrid)?;
    if shape.toroidal {
        return Err(Error::InvalidGrid(
            "row subsets need a non-toroidal grid".into(),
        ));
    }
    Ok(shape)
}

/// One geometry per row that has a row above and a row below, top to bottom.
pub fn row_subsets(graph: &Graph) -> Result<Vec<SubsetGeometry>> {
    let shape = require_plain_grid(graph)?;
    if shape.height < 3 {
        return Err(Error::InvalidGrid(format!(
            "row subsets need height >= 3, got {}",
            shape.height
        )));
    }
    (1..shape.height - 1)
        .map(|r| subset_geometry(graph, &shape.row_nodes(r), DEFAULT_BRUTE_FORCE_LIMIT))
        .collect()
}

/// Single-site geometries for every site with a complete neighborhood:
/// grid sites off the border, or every node of a torus or plain graph.
pub fn interior_site_subsets(graph: &Graph) -> Result<Vec<SubsetGeometry>> {
    let sites: Vec<NodeId> = match graph.grid() {
        Some(shape) if !shape.toroidal => {
            if shape.height < 3 || shape.width < 3 {
                return Err(Error::InvalidGrid("grid has no interior sites".into()));
            }
            (1..shape.height - 1)
                .flat_map(|r| (1..shape.width - 1).map(move |c| shape.index(r, c)))
                .collect()
        }
        _ => (0..graph.node_count()).collect(),
    };
    sites
        .into_iter()
        .map(|n| subset_geometry(graph, &[n], DEFAULT_BRUTE_FORCE_LIMIT))
        .collect()
}

/// A single subset, as named on the command line and in sample files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubsetSpec {
    MiddleRow,
    Row(usize),
    Site(usize, usize),
    All,
    Nodes(Vec<NodeId>),
}

impl SubsetSpec {
    pub fn resolve(&self, graph: &Graph) -> Result<Vec<NodeId>> {
        let nodes = match self {
            SubsetSpec::All => (0..graph.node_count()).collect(),
            SubsetSpec::Nodes(nodes) => nodes.clone(),
            SubsetSpec::MiddleRow | SubsetSpec::Row(_) | SubsetSpec::Site(..) => {
                let shape = graph.grid().ok_or(Error::MissingGrid)?;
                match *self {
                    SubsetSpec::MiddleRow => shape.row_nodes(shape.height / 2),
                    SubsetSpec::Row(r) if r < shape.height => shape.row_nodes(r),
                    SubsetSpec::Site(r, c) if r < shape.height && c < shape.width => {
                        vec![shape.index(r, c)]
                    }
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "subset {self} lies outside the {}x{} grid",
                            shape.height, shape.width
                        )))
                    }
                }
            }
        };
        Ok(nodes)
    }

    pub fn geometry(&self, graph: &Graph) -> Result<SubsetGeometry> {
        subset_geometry(graph, &self.resolve(graph)?, DEFAULT_BRUTE_FORCE_LIMIT)
    }
}

impl fmt::Display for SubsetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetSpec::MiddleRow => write!(f, "middle-row"),
            SubsetSpec::Row(r) => write!(f, "row:{r}"),
            SubsetSpec::Site(r, c) => write!(f, "site:{r},{c}"),
            SubsetSpec::All => write!(f, "all"),
            SubsetSpec::Nodes(nodes) => {
                write!(f, "nodes:")?;
                for (i, n) in nodes.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{n}")?;
                }
                Ok(())
            }
        }
    }
}

fn parse_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad index `{s}`")))
        })
        .collect()
}

impl FromStr for SubsetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unrecognized subset spec `{s}`"));
        match s.split_once(':') {
            None if s == "middle-row" => Ok(SubsetSpec::MiddleRow),
            None if s == "all" => Ok(SubsetSpec::All),
            Some(("row", r)) => Ok(SubsetSpec::Row(r.parse().map_err(|_| bad())?)),
            Some(("site", rc)) => match parse_list(rc)?.as_slice() {
                &[r, c] => Ok(SubsetSpec::Site(r, c)),
                _ => Err(bad()),
            },
            Some(("nodes", list)) => Ok(SubsetSpec::Nodes(parse_list(list)?)),
            _ => Err(bad()),
        }
    }
}

/// A family of subsets drawn from one configuration (spatial mode).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetFamily {
    /// Every row with both an upper and a lower boundary row.
    InteriorRows,
    /// Rows `first..=last`, each its own subset.
    RowRange(usize, usize),
    /// Every site with a complete neighborhood.
    InteriorSites,
}

impl SubsetFamily {
    pub fn geometries(&self, graph: &Graph) -> Result<Vec<SubsetGeometry>> {
        match *self {
            SubsetFamily::InteriorRows => row_subsets(graph),
            SubsetFamily::InteriorSites => interior_site_subsets(graph),
            SubsetFamily::RowRange(first, last) => {
                let shape = graph.grid().ok_or(Error::MissingGrid)?;
                if first > last || last >= shape.height {
                    return Err(Error::InvalidArgument(format!(
                        "row range {first}-{last} outside grid of height {}",
                        shape.height
                    )));
                }
                (first..=last)
                    .map(|r| subset_geometry(graph, &shape.row_nodes(r), DEFAULT_BRUTE_FORCE_LIMIT))
                    .collect()
            }
        }
    }
}

impl fmt::Display for SubsetFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetFamily::InteriorRows => write!(f, "rows"),
            SubsetFamily::RowRange(a, b) => write!(f, "rows:{a}-{b}"),
            SubsetFamily::InteriorSites => write!(f, "sites"),
        }
    }
}

impl FromStr for SubsetFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unrecognized subset family `{s}`"));
        match s {
            "rows" => Ok(SubsetFamily::InteriorRows),
            "sites" => Ok(SubsetFamily::InteriorSites),
            _ => {
                let range = s.strip_prefix("rows:").ok_or_else(bad)?;
                let (a, b) = range.split_once('-').ok_or_else(bad)?;
                Ok(SubsetFamily::RowRange(
                    a.parse().map_err(|_| bad())?,
                    b.parse().map_err(|_| bad())?,
                ))
            }
        }
    }
}
