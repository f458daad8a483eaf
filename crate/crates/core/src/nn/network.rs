use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{LayoutBuilder, Linear, NodeId, Params, Tape, VertexUpdateParams};
use crate::graph::{SubGraph, VERTEX_FEATURES};
use crate::gridworld::Action;
use crate::rl::ActionDistribution;
use crate::{Error, Result};

/// Critic vertex input: vertex features followed by the action one-hot.
pub const CRITIC_INPUT: usize = VERTEX_FEATURES + Action::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    /// One output vector per vertex (policy logits).
    PerVertex,
    /// Sum over vertices, then the head (critic value).
    SumPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundLayers {
    /// Edge update over `[z, s_src, s_dst]`.
    pub edge: Linear,
    pub v_lin: Linear,
    pub z_rel: Linear,
    pub post_rel: Linear,
    pub post_lin: Linear,
}

/// Embedding, alternating edge/vertex updates, then a two-layer head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessagePassingNet {
    pub input_dim: usize,
    pub hidden: usize,
    pub edge_dim: usize,
    pub output_dim: usize,
    pub readout: Readout,
    pub ebd: Linear,
    pub rounds: Vec<RoundLayers>,
    pub head_rel: Linear,
    pub head_lin: Linear,
    n_params: usize,
}

impl MessagePassingNet {
    pub fn new(
        input_dim: usize,
        hidden: usize,
        edge_dim: usize,
        rounds: usize,
        output_dim: usize,
        readout: Readout,
    ) -> Self {
        let mut lb = LayoutBuilder::default();
        let ebd = lb.linear(input_dim, hidden);
        let rounds = (0..rounds)
            .map(|_| RoundLayers {
                edge: lb.linear(2 * hidden + edge_dim, edge_dim),
                v_lin: lb.linear(hidden, edge_dim),
                z_rel: lb.linear(edge_dim, edge_dim),
                post_rel: lb.linear(edge_dim, hidden),
                post_lin: lb.linear(hidden, hidden),
            })
            .collect();
        let head_rel = lb.linear(hidden, hidden);
        let head_lin = lb.linear(hidden, output_dim);
        Self {
            input_dim,
            hidden,
            edge_dim,
            output_dim,
            readout,
            ebd,
            rounds,
            head_rel,
            head_lin,
            n_params: lb.len(),
        }
    }

    pub fn policy(hidden: usize, edge_dim: usize, rounds: usize) -> Self {
        Self::new(VERTEX_FEATURES, hidden, edge_dim, rounds, Action::COUNT, Readout::PerVertex)
    }

    pub fn critic(hidden: usize, edge_dim: usize, rounds: usize) -> Self {
        Self::new(CRITIC_INPUT, hidden, edge_dim, rounds, 1, Readout::SumPool)
    }

    pub fn num_params(&self) -> usize {
        self.n_params
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Params {
        let mut v = vec![0.0; self.n_params];
        self.layers().for_each(|l| l.init(&mut v, rng));
        Params::from_vec(v)
    }

    /// Every layer in buffer order.
    pub fn layers(&self) -> impl Iterator<Item = Linear> + '_ {
        core::iter::once(self.ebd)
            .chain(
                self.rounds
                    .iter()
                    .flat_map(|r| [r.edge, r.v_lin, r.z_rel, r.post_rel, r.post_lin]),
            )
            .chain([self.head_rel, self.head_lin])
    }

    pub fn vertex_update_params(&self, params: &Params, round: usize) -> VertexUpdateParams {
        let r = &self.rounds[round];
        VertexUpdateParams {
            v_lin: r.v_lin.extract(params),
            z_rel: r.z_rel.extract(params),
            post_rel: r.post_rel.extract(params),
            post_lin: r.post_lin.extract(params),
        }
    }

    fn check(&self, params: &Params, sg: &SubGraph) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::Shape(format!(
                "network has {} parameters, buffer has {}",
                self.n_params,
                params.len()
            )));
        }
        if sg.is_empty() {
            return Err(Error::Shape("empty sub-graph".into()));
        }
        if !sg.edges.is_empty() && sg.edge_dim != self.edge_dim {
            return Err(Error::Shape(format!(
                "edge features have {} elements, network expects {}",
                sg.edge_dim, self.edge_dim
            )));
        }
        Ok(())
    }

    /// Final vertex states after all message-passing rounds.
    fn trunk(&self, tape: &mut Tape, params: &Params, sg: &SubGraph, inputs: &[NodeId]) -> Vec<NodeId> {
        let n = sg.len();
        let mut s: Vec<NodeId> = inputs.iter().map(|&x| tape.affine(params, self.ebd, x)).collect();
        let mut z: Vec<NodeId> = (0..sg.edges.len()).map(|k| tape.leaf(sg.edge_feature(k))).collect();
        let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, e) in sg.edges.iter().enumerate() {
            outgoing[e.src].push(k);
        }
        let mut msgs = Vec::new();
        for round in &self.rounds {
            for (k, e) in sg.edges.iter().enumerate() {
                let cat = tape.concat(&[z[k], s[e.src], s[e.dst]]);
                let pre = tape.affine(params, round.edge, cat);
                z[k] = tape.relu(pre);
            }
            for v in 0..n {
                msgs.clear();
                if !outgoing[v].is_empty() {
                    let gate = tape.affine(params, round.v_lin, s[v]);
                    for &k in &outgoing[v] {
                        let pre = tape.affine(params, round.z_rel, z[k]);
                        let m = tape.relu(pre);
                        msgs.push(tape.mul(gate, m));
                    }
                }
                let agg = tape.sum(&msgs, self.edge_dim);
                let pre = tape.affine(params, round.post_rel, agg);
                let h = tape.relu(pre);
                let delta = tape.affine(params, round.post_lin, h);
                s[v] = tape.add(s[v], delta);
            }
        }
        s
    }

    fn head(&self, tape: &mut Tape, params: &Params, x: NodeId) -> NodeId {
        let pre = tape.affine(params, self.head_rel, x);
        let h = tape.relu(pre);
        tape.affine(params, self.head_lin, h)
    }

    /// Records the policy pass; returns one log-probability node per member.
    pub fn record_policy(&self, tape: &mut Tape, params: &Params, sg: &SubGraph) -> Result<Vec<NodeId>> {
        self.check(params, sg)?;
        if self.readout != Readout::PerVertex || self.input_dim != VERTEX_FEATURES {
            return Err(Error::Shape("not a policy network".into()));
        }
        let inputs: Vec<NodeId> = sg.features.iter().map(|f| tape.leaf(f)).collect();
        let s = self.trunk(tape, params, sg, &inputs);
        Ok(s
            .into_iter()
            .map(|v| {
                let logits = self.head(tape, params, v);
                tape.log_softmax(logits)
            })
            .collect())
    }

    /// Records the critic pass for the members' joint action; returns the
    /// scalar value node.
    pub fn record_critic(
        &self,
        tape: &mut Tape,
        params: &Params,
        sg: &SubGraph,
        actions: &[Action],
    ) -> Result<NodeId> {
        self.check(params, sg)?;
        if self.readout != Readout::SumPool || self.input_dim != CRITIC_INPUT {
            return Err(Error::Shape("not a critic network".into()));
        }
        if actions.len() != sg.len() {
            return Err(Error::Shape(format!(
                "{} actions for {} members",
                actions.len(),
                sg.len()
            )));
        }
        let mut buf = [0.0; CRITIC_INPUT];
        let inputs: Vec<NodeId> = sg
            .features
            .iter()
            .zip(actions)
            .map(|(f, a)| {
                buf[..VERTEX_FEATURES].copy_from_slice(f);
                buf[VERTEX_FEATURES..].iter_mut().for_each(|v| *v = 0.0);
                buf[VERTEX_FEATURES + a.index()] = 1.0;
                tape.leaf(&buf)
            })
            .collect();
        let s = self.trunk(tape, params, sg, &inputs);
        let pooled = tape.sum(&s, self.hidden);
        Ok(self.head(tape, params, pooled))
    }

    pub fn policy_forward(&self, params: &Params, sg: &SubGraph) -> Result<Vec<ActionDistribution>> {
        let mut tape = Tape::new();
        self.policy_forward_with(&mut tape, params, sg)
    }

    /// As [`Self::policy_forward`], reusing `tape` as scratch space.
    pub fn policy_forward_with(
        &self,
        tape: &mut Tape,
        params: &Params,
        sg: &SubGraph,
    ) -> Result<Vec<ActionDistribution>> {
        tape.clear();
        let logp = self.record_policy(tape, params, sg)?;
        Ok(logp
            .iter()
            .map(|&id| ActionDistribution::from_log_probs(tape.value(id)))
            .collect())
    }

    pub fn critic_forward(&self, params: &Params, sg: &SubGraph, actions: &[Action]) -> Result<f64> {
        let mut tape = Tape::new();
        self.critic_forward_with(&mut tape, params, sg, actions)
    }

    pub fn critic_forward_with(
        &self,
        tape: &mut Tape,
        params: &Params,
        sg: &SubGraph,
        actions: &[Action],
    ) -> Result<f64> {
        tape.clear();
        let q = self.record_critic(tape, params, sg, actions)?;
        Ok(tape.value(q)[0])
    }
}

/// Two-layer perceptron policy over a single agent's vertex features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
    n_params: usize,
}

impl Mlp {
    pub fn new(input_dim: usize, hidden: usize, output_dim: usize) -> Self {
        let mut lb = LayoutBuilder::default();
        let h = lb.linear(input_dim, hidden);
        let out = lb.linear(hidden, output_dim);
        Self {
            hidden: h,
            out,
            n_params: lb.len(),
        }
    }

    pub fn policy(hidden: usize) -> Self {
        Self::new(VERTEX_FEATURES, hidden, Action::COUNT)
    }

    pub fn num_params(&self) -> usize {
        self.n_params
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Params {
        let mut v = vec![0.0; self.n_params];
        self.hidden.init(&mut v, rng);
        self.out.init(&mut v, rng);
        Params::from_vec(v)
    }

    /// Records the pass for one input; returns the log-probability node.
    pub fn record(&self, tape: &mut Tape, params: &Params, x: &[f64]) -> Result<NodeId> {
        if params.len() != self.n_params || x.len() != self.hidden.in_dim {
            return Err(Error::Shape("perceptron input or parameter size mismatch".into()));
        }
        let input = tape.leaf(x);
        let pre = tape.affine(params, self.hidden, input);
        let h = tape.relu(pre);
        let logits = tape.affine(params, self.out, h);
        Ok(tape.log_softmax(logits))
    }

    pub fn distribution(&self, tape: &mut Tape, params: &Params, x: &[f64]) -> Result<ActionDistribution> {
        tape.clear();
        let id = self.record(tape, params, x)?;
        Ok(ActionDistribution::from_log_probs(tape.value(id)))
    }
}
