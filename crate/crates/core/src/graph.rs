//! Agent interaction graph, per-agent k-hop decomposition and input features.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::gridworld::{AgentId, GridWorld, OBS_LEN};
use crate::{Error, Result};

/// Team one-hot followed by the flattened observation patch.
pub const VERTEX_FEATURES: usize = 2 + OBS_LEN;

pub type VertexFeature = [f64; VERTEX_FEATURES];

/// Radial basis parameters for edge distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeEncoding {
    pub delta_d: f64,
    pub n_max: usize,
}

impl Default for EdgeEncoding {
    fn default() -> Self {
        Self {
            delta_d: 0.3,
            n_max: 10,
        }
    }
}

/// Radial basis expansion of a distance: element `n` is
/// `exp(-(d - n*delta_d)^2 / delta_d)` for `n` in `0..n_max`.
pub fn rbe(d: f64, delta_d: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(delta_d > 0.0) || !delta_d.is_finite() {
        return Err(Error::Domain("delta_d must be positive and finite"));
    }
    if n_max == 0 {
        return Err(Error::Domain("n_max must be at least 1"));
    }
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::Domain("distance must be non-negative and finite"));
    }
    Ok((0..n_max)
        .map(|n| {
            let r = d - n as f64 * delta_d;
            libm::exp(-(r * r) / delta_d)
        })
        .collect())
}

pub fn vertex_features(world: &GridWorld, id: AgentId) -> Result<VertexFeature> {
    let obs = world.observe(id)?;
    let team = world.agent(id).map(|a| a.team).unwrap_or(0);
    let mut out = [0.0; VERTEX_FEATURES];
    out[usize::from(team.min(1))] = 1.0;
    out[2..].copy_from_slice(&obs.flatten());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphVertex {
    pub id: AgentId,
    pub team: u8,
    pub features: VertexFeature,
}

/// Undirected edge between vertex indices `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

/// Time-varying interaction graph over alive agents. Vertices are sorted by
/// agent id.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvGraph {
    vertices: Vec<GraphVertex>,
    edges: Vec<GraphEdge>,
    /// Per vertex: `(neighbour, edge index)`, ascending neighbour.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl EnvGraph {
    /// Assembles a graph from explicit parts. Vertices must have distinct
    /// ids; edges refer to vertex positions in `vertices`.
    pub fn from_parts(mut vertices: Vec<GraphVertex>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = vertices.len();
        // remap edge endpoints after sorting vertices by id
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| vertices[i].id);
        let mut rank = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        vertices.sort_by_key(|v| v.id);
        if vertices.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::Config("duplicate vertex id".into()));
        }
        let mut list = Vec::with_capacity(edges.len());
        for &(a, b, d) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::Config(format!("invalid edge ({}, {})", a, b)));
            }
            let (a, b) = (rank[a].min(rank[b]), rank[a].max(rank[b]));
            list.push(GraphEdge { a, b, distance: d });
        }
        list.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));
        list.dedup_by(|x, y| x.a == y.a && x.b == y.b);
        Ok(Self::assemble(vertices, list))
    }

    fn assemble(vertices: Vec<GraphVertex>, edges: Vec<GraphEdge>) -> Self {
        let mut adjacency = vec![Vec::new(); vertices.len()];
        for (k, e) in edges.iter().enumerate() {
            adjacency[e.a].push((e.b, k));
            adjacency[e.b].push((e.a, k));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Self {
            vertices,
            edges,
            adjacency,
        }
    }

    pub fn vertices(&self) -> &[GraphVertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex_index(&self, id: AgentId) -> Option<usize> {
        self.vertices.binary_search_by_key(&id, |v| v.id).ok()
    }

    pub fn neighbours(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v].iter().map(|&(u, _)| u)
    }
}

/// Connects every pair of alive agents at Chebyshev distance at most one.
pub fn build_graph(world: &GridWorld) -> Result<EnvGraph> {
    let alive: Vec<_> = world.alive_agents().copied().collect();
    if alive.is_empty() {
        return Err(Error::EmptyWorld);
    }
    let vertices = alive
        .iter()
        .map(|a| {
            Ok(GraphVertex {
                id: a.id,
                team: a.team,
                features: vertex_features(world, a.id)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // bucket vertices by cell (counting sort) so the neighbour scan is linear
    let n_cells = world.width() * world.height();
    let cell_of: Vec<usize> = alive
        .iter()
        .map(|a| world.cell_index(a.pos).expect("alive agents are in bounds"))
        .collect();
    let mut start = vec![0usize; n_cells + 1];
    for &c in &cell_of {
        start[c + 1] += 1;
    }
    for c in 0..n_cells {
        start[c + 1] += start[c];
    }
    let mut fill = start.clone();
    let mut bucket = vec![0usize; alive.len()];
    for (v, &c) in cell_of.iter().enumerate() {
        bucket[fill[c]] = v;
        fill[c] += 1;
    }

    let mut edges = Vec::new();
    for (v, a) in alive.iter().enumerate() {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let Some(c) = world.cell_index(a.pos.offset(dx, dy)) else {
                    continue;
                };
                for &u in &bucket[start[c]..start[c + 1]] {
                    if u > v {
                        edges.push(GraphEdge {
                            a: v,
                            b: u,
                            distance: a.pos.euclidean(alive[u].pos),
                        });
                    }
                }
            }
        }
    }
    edges.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));
    Ok(EnvGraph::assemble(vertices, edges))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectedEdge {
    /// Member index of the source vertex.
    pub src: usize,
    /// Member index of the destination vertex.
    pub dst: usize,
    pub distance: f64,
}

/// Induced sub-graph of every agent within `depth` hops of `centre`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubGraph {
    pub centre: AgentId,
    pub depth: usize,
    /// Centre first, then BFS order.
    pub members: Vec<AgentId>,
    pub teams: Vec<u8>,
    pub features: Vec<VertexFeature>,
    /// Both orientations of every induced edge.
    pub edges: Vec<DirectedEdge>,
    pub edge_dim: usize,
    /// Row `k` is the radial basis expansion of `edges[k]`.
    edge_features: Vec<f64>,
}

impl SubGraph {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member_index(&self, id: AgentId) -> Option<usize> {
        self.members.iter().position(|&m| m == id)
    }

    pub fn edge_feature(&self, k: usize) -> &[f64] {
        &self.edge_features[k * self.edge_dim..(k + 1) * self.edge_dim]
    }

    /// Same sub-graph with members listed in `member_order` (old indices)
    /// and edges listed in `edge_order` (old indices).
    pub fn reordered(&self, member_order: &[usize], edge_order: &[usize]) -> SubGraph {
        let mut new_pos = vec![0; self.len()];
        for (new, &old) in member_order.iter().enumerate() {
            new_pos[old] = new;
        }
        let mut edge_features = Vec::with_capacity(self.edge_features.len());
        let edges = edge_order
            .iter()
            .map(|&k| {
                edge_features.extend_from_slice(self.edge_feature(k));
                let e = self.edges[k];
                DirectedEdge {
                    src: new_pos[e.src],
                    dst: new_pos[e.dst],
                    distance: e.distance,
                }
            })
            .collect();
        SubGraph {
            centre: self.centre,
            depth: self.depth,
            members: member_order.iter().map(|&i| self.members[i]).collect(),
            teams: member_order.iter().map(|&i| self.teams[i]).collect(),
            features: member_order.iter().map(|&i| self.features[i]).collect(),
            edges,
            edge_dim: self.edge_dim,
            edge_features,
        }
    }
}

/// One sub-graph per vertex, in vertex (ascending id) order. BFS visits
/// neighbours in ascending id order.
pub fn decompose(g: &EnvGraph, depth: usize, enc: &EdgeEncoding) -> Result<Vec<SubGraph>> {
    if depth == 0 {
        return Err(Error::Domain("sub-graph depth must be at least 1"));
    }
    let edge_rbe = g
        .edges
        .iter()
        .map(|e| rbe(e.distance, enc.delta_d, enc.n_max))
        .collect::<Result<Vec<_>>>()?;

    let n = g.len();
    let mut stamp = vec![usize::MAX; n];
    let mut local = vec![0usize; n];
    let mut hops = vec![0usize; n];
    let mut out = Vec::with_capacity(n);
    for centre in 0..n {
        let mut order = vec![centre];
        stamp[centre] = centre;
        local[centre] = 0;
        hops[centre] = 0;
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            if hops[v] == depth {
                continue;
            }
            for u in g.neighbours(v) {
                if stamp[u] != centre {
                    stamp[u] = centre;
                    local[u] = order.len();
                    hops[u] = hops[v] + 1;
                    order.push(u);
                }
            }
        }

        let mut edges = Vec::new();
        let mut edge_features = Vec::new();
        for (src, &v) in order.iter().enumerate() {
            for &(u, k) in &g.adjacency[v] {
                if stamp[u] == centre {
                    edges.push(DirectedEdge {
                        src,
                        dst: local[u],
                        distance: g.edges[k].distance,
                    });
                    edge_features.extend_from_slice(&edge_rbe[k]);
                }
            }
        }
        out.push(SubGraph {
            centre: g.vertices[centre].id,
            depth,
            members: order.iter().map(|&v| g.vertices[v].id).collect(),
            teams: order.iter().map(|&v| g.vertices[v].team).collect(),
            features: order.iter().map(|&v| g.vertices[v].features).collect(),
            edges,
            edge_dim: enc.n_max,
            edge_features,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{Position, ScenarioConfig};

    fn bare_graph(n: usize, edges: &[(usize, usize)]) -> EnvGraph {
        let vertices = (0..n)
            .map(|i| GraphVertex {
                id: i as AgentId,
                team: 0,
                features: [0.0; VERTEX_FEATURES],
            })
            .collect();
        let e: Vec<_> = edges.iter().map(|&(a, b)| (a, b, 1.0)).collect();
        EnvGraph::from_parts(vertices, &e).unwrap()
    }

    fn world(agents: &[(u8, Position)]) -> GridWorld {
        let cfg = ScenarioConfig::battle(10, 10, 1);
        GridWorld::from_layout(cfg, &[], &[], &[], None, agents).unwrap()
    }

    #[test]
    fn far_agents_are_disconnected() {
        let w = world(&[(0, Position::new(0, 0)), (1, Position::new(5, 5))]);
        let g = build_graph(&w).unwrap();
        assert_eq!(g.len(), 2);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn diagonal_neighbours_share_an_edge() {
        let w = world(&[(0, Position::new(2, 2)), (1, Position::new(3, 3))]);
        let g = build_graph(&w).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edges()[0].distance, core::f64::consts::SQRT_2);
    }

    #[test]
    fn triangle() {
        let w = world(&[(0, Position::new(2, 2)), (0, Position::new(3, 2)), (1, Position::new(2, 3))]);
        let g = build_graph(&w).unwrap();
        assert_eq!(g.edges().len(), 3);
    }

    #[test]
    fn dead_world_is_rejected() {
        let cfg = ScenarioConfig::jungle(6, 6, 1, 0);
        let w = GridWorld::from_layout(cfg, &[], &[], &[], None, &[]).unwrap();
        assert_eq!(build_graph(&w), Err(Error::EmptyWorld));
    }

    #[test]
    fn path_graph_depth_three() {
        let g = bare_graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let subs = decompose(&g, 3, &EdgeEncoding::default()).unwrap();
        assert_eq!(subs[0].members, vec![0, 1, 2, 3]);
        assert_eq!(subs[0].edges.len(), 6);
        assert_eq!(subs[2].members, vec![2, 1, 3, 0, 4]);
    }

    #[test]
    fn isolated_vertex_is_singleton() {
        let g = bare_graph(3, &[(0, 1)]);
        let subs = decompose(&g, 2, &EdgeEncoding::default()).unwrap();
        assert_eq!(subs[2].members, vec![2]);
        assert!(subs[2].edges.is_empty());
    }

    #[test]
    fn complete_graph_has_all_directed_edges() {
        let g = bare_graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        for depth in 1..4 {
            for sg in decompose(&g, depth, &EdgeEncoding::default()).unwrap() {
                assert_eq!(sg.len(), 4);
                assert_eq!(sg.edges.len(), 12);
            }
        }
    }

    #[test]
    fn bfs_ties_by_ascending_id() {
        let g = bare_graph(4, &[(3, 0), (0, 2), (0, 1)]);
        let subs = decompose(&g, 1, &EdgeEncoding::default()).unwrap();
        assert_eq!(subs[0].members, vec![0, 1, 2, 3]);
    }

    #[test]
    fn zero_depth_is_rejected() {
        let g = bare_graph(2, &[(0, 1)]);
        assert!(decompose(&g, 0, &EdgeEncoding::default()).is_err());
    }

    #[test]
    fn rbe_peak_element_is_one() {
        let dd = 0.25;
        let z = rbe(3.0 * dd, dd, 10).unwrap();
        assert_eq!(z[3], 1.0);
    }

    #[test]
    fn rbe_at_zero_distance() {
        let z = rbe(0.0, 1.0, 4).unwrap();
        let expected = [1.0, (-1.0f64).exp(), (-4.0f64).exp(), (-9.0f64).exp()];
        for (a, b) in z.iter().zip(expected) {
            assert!((a - b).abs() <= 1e-15 * b.max(1e-300), "{} vs {}", a, b);
        }
    }

    #[test]
    fn rbe_rejects_bad_step() {
        assert_eq!(rbe(1.0, 0.0, 10), Err(Error::Domain("delta_d must be positive and finite")));
        assert!(rbe(1.0, -0.5, 10).is_err());
    }

    #[test]
    fn vertex_features_layout() {
        let cfg = ScenarioConfig::battle(10, 10, 1);
        let w = GridWorld::from_layout(cfg, &[], &[], &[], None, &[(0, Position::new(4, 4)), (1, Position::new(8, 8))])
            .unwrap();
        let f0 = vertex_features(&w, 0).unwrap();
        assert_eq!(f0[..2], [1.0, 0.0]);
        assert!(f0[2..].iter().all(|v| *v == 0.0));
        let f1 = vertex_features(&w, 1).unwrap();
        assert_eq!(f1[..2], [0.0, 1.0]);
        assert!(vertex_features(&w, 7).is_err());
    }

    #[test]
    fn vertex_features_see_food_above() {
        let cfg = ScenarioConfig::jungle(10, 10, 1, 1);
        let w = GridWorld::from_layout(cfg, &[], &[Position::new(4, 3)], &[], None, &[(0, Position::new(4, 4))]).unwrap();
        let f = vertex_features(&w, 0).unwrap();
        // north cell is patch cell 1, food is channel 1
        assert_eq!(f[2 + 5 + 1], 1.0);
    }
}
