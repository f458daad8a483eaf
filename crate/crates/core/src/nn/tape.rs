//! Vector-granular reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so every operand of a node has a
//! smaller id than the node itself and its values sit at lower offsets in
//! the value arena. The backward sweep walks the nodes in reverse.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{affine_into, Grads, Linear, Params};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(u32);

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Affine { layer: Linear, x: NodeId },
    Relu(NodeId),
    Mul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Operands are `lists[start..start + count]`.
    Sum { start: u32, count: u32 },
    Concat { start: u32, count: u32 },
    LogSoftmax(NodeId),
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: Op,
    off: usize,
    len: usize,
}

/// Recorded forward computation against one parameter buffer.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    values: Vec<f64>,
    nodes: Vec<Node>,
    lists: Vec<NodeId>,
    stamp: Option<u64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Empties the tape, keeping its allocations.
    pub fn clear(&mut self) {
        self.values.clear();
        self.nodes.clear();
        self.lists.clear();
        self.stamp = None;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let n = self.nodes[id.0 as usize];
        &self.values[n.off..n.off + n.len]
    }

    fn dim(&self, id: NodeId) -> usize {
        self.nodes[id.0 as usize].len
    }

    fn push(&mut self, op: Op, len: usize) -> (NodeId, usize) {
        let off = self.values.len();
        self.values.resize(off + len, 0.0);
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { op, off, len });
        (id, off)
    }

    fn range(&self, id: NodeId) -> core::ops::Range<usize> {
        let n = self.nodes[id.0 as usize];
        n.off..n.off + n.len
    }

    pub fn leaf(&mut self, x: &[f64]) -> NodeId {
        let (id, off) = self.push(Op::Leaf, x.len());
        self.values[off..].copy_from_slice(x);
        id
    }

    pub fn zeros(&mut self, len: usize) -> NodeId {
        self.push(Op::Leaf, len).0
    }

    fn bind(&mut self, params: &Params) {
        match self.stamp {
            None => self.stamp = Some(params.stamp()),
            Some(s) => debug_assert_eq!(s, params.stamp(), "one tape records one parameter buffer"),
        }
    }

    pub fn affine(&mut self, params: &Params, layer: Linear, x: NodeId) -> NodeId {
        debug_assert_eq!(self.dim(x), layer.in_dim);
        self.bind(params);
        let (id, off) = self.push(Op::Affine { layer, x }, layer.out_dim);
        let xr = self.range(x);
        let (head, out) = self.values.split_at_mut(off);
        let w = params.values();
        out.copy_from_slice(&w[layer.bias_range()]);
        affine_into(&w[layer.weight_range()], &head[xr], out);
        id
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let len = self.dim(x);
        let (id, off) = self.push(Op::Relu(x), len);
        let xr = self.range(x);
        let (head, out) = self.values.split_at_mut(off);
        for (o, v) in out.iter_mut().zip(&head[xr]) {
            *o = if *v > 0.0 { *v } else { 0.0 };
        }
        id
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.dim(a), self.dim(b));
        let (id, off) = self.push(Op::Mul(a, b), self.dim(a));
        let (ar, br) = (self.range(a), self.range(b));
        let (head, out) = self.values.split_at_mut(off);
        for ((o, x), y) in out.iter_mut().zip(&head[ar]).zip(&head[br]) {
            *o = x * y;
        }
        id
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.dim(a), self.dim(b));
        let (id, off) = self.push(Op::Add(a, b), self.dim(a));
        let (ar, br) = (self.range(a), self.range(b));
        let (head, out) = self.values.split_at_mut(off);
        for ((o, x), y) in out.iter_mut().zip(&head[ar]).zip(&head[br]) {
            *o = x + y;
        }
        id
    }

    /// Elementwise sum of `xs`; a zero vector of length `len` when empty.
    pub fn sum(&mut self, xs: &[NodeId], len: usize) -> NodeId {
        let start = self.lists.len() as u32;
        self.lists.extend_from_slice(xs);
        let (id, off) = self.push(
            Op::Sum {
                start,
                count: xs.len() as u32,
            },
            len,
        );
        for &x in xs {
            debug_assert_eq!(self.dim(x), len);
            let xr = self.range(x);
            let (head, out) = self.values.split_at_mut(off);
            for (o, v) in out.iter_mut().zip(&head[xr]) {
                *o += v;
            }
        }
        id
    }

    pub fn concat(&mut self, xs: &[NodeId]) -> NodeId {
        let start = self.lists.len() as u32;
        self.lists.extend_from_slice(xs);
        let len = xs.iter().map(|&x| self.dim(x)).sum();
        let (id, off) = self.push(
            Op::Concat {
                start,
                count: xs.len() as u32,
            },
            len,
        );
        let mut at = off;
        for &x in xs {
            let xr = self.range(x);
            let n = xr.len();
            self.values.copy_within(xr, at);
            at += n;
        }
        id
    }

    /// `x - log(sum(exp(x)))`, computed with the maximum shifted out.
    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let len = self.dim(x);
        let (id, off) = self.push(Op::LogSoftmax(x), len);
        let xr = self.range(x);
        let (head, out) = self.values.split_at_mut(off);
        let xs = &head[xr];
        let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + libm::log(xs.iter().map(|v| libm::exp(v - m)).sum::<f64>());
        for (o, v) in out.iter_mut().zip(xs) {
            *o = v - lse;
        }
        id
    }

    /// Accumulates into `grads` the gradient of `sum_k <seed_k, node_k>`
    /// with respect to the parameters this tape was recorded against.
    pub fn backward_into(&self, params: &Params, seeds: &[(NodeId, &[f64])], grads: &mut Grads) -> Result<()> {
        if let Some(stamp) = self.stamp {
            if stamp != params.stamp() {
                return Err(Error::StaleTrace);
            }
        }
        if grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, parameters have {}",
                grads.len(),
                params.len()
            )));
        }
        let mut adj = vec![0.0; self.values.len()];
        for &(id, seed) in seeds {
            let r = self.range(id);
            if seed.len() != r.len() {
                return Err(Error::Shape(format!(
                    "seed of length {} for node of length {}",
                    seed.len(),
                    r.len()
                )));
            }
            for (a, s) in adj[r].iter_mut().zip(seed) {
                *a += s;
            }
        }
        let w = params.values();
        let g = grads.values_mut();
        for node in self.nodes.iter().rev() {
            let (lower, upper) = adj.split_at_mut(node.off);
            let dy = &upper[..node.len];
            if dy.iter().all(|v| *v == 0.0) {
                continue;
            }
            match node.op {
                Op::Leaf => {}
                Op::Affine { layer, x } => {
                    let xr = self.range(x);
                    let xv = &self.values[xr.clone()];
                    let wr = layer.weight_range();
                    let br = layer.bias_range();
                    let n = layer.in_dim;
                    for (i, d) in dy.iter().enumerate() {
                        if *d == 0.0 {
                            continue;
                        }
                        g[br.start + i] += d;
                        let row = wr.start + i * n;
                        for (gw, xj) in g[row..row + n].iter_mut().zip(xv) {
                            *gw += d * xj;
                        }
                        for (ax, wj) in lower[xr.clone()].iter_mut().zip(&w[row..row + n]) {
                            *ax += d * wj;
                        }
                    }
                }
                Op::Relu(x) => {
                    let out = &self.values[node.off..node.off + node.len];
                    let xr = self.range(x);
                    for ((ax, d), o) in lower[xr].iter_mut().zip(dy).zip(out) {
                        if *o > 0.0 {
                            *ax += d;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ar, br) = (self.range(a), self.range(b));
                    for (k, d) in dy.iter().enumerate() {
                        let va = self.values[ar.start + k];
                        let vb = self.values[br.start + k];
                        lower[ar.start + k] += d * vb;
                        lower[br.start + k] += d * va;
                    }
                }
                Op::Add(a, b) => {
                    for x in [a, b] {
                        let xr = self.range(x);
                        for (ax, d) in lower[xr].iter_mut().zip(dy) {
                            *ax += d;
                        }
                    }
                }
                Op::Sum { start, count } => {
                    for &x in &self.lists[start as usize..(start + count) as usize] {
                        let xr = self.range(x);
                        for (ax, d) in lower[xr].iter_mut().zip(dy) {
                            *ax += d;
                        }
                    }
                }
                Op::Concat { start, count } => {
                    let mut at = 0;
                    for &x in &self.lists[start as usize..(start + count) as usize] {
                        let xr = self.range(x);
                        let n = xr.len();
                        for (ax, d) in lower[xr].iter_mut().zip(&dy[at..at + n]) {
                            *ax += d;
                        }
                        at += n;
                    }
                }
                Op::LogSoftmax(x) => {
                    let out = &self.values[node.off..node.off + node.len];
                    let total: f64 = dy.iter().sum();
                    let xr = self.range(x);
                    for ((ax, d), o) in lower[xr].iter_mut().zip(dy).zip(out) {
                        *ax += d - libm::exp(*o) * total;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn backward(&self, params: &Params, seeds: &[(NodeId, &[f64])]) -> Result<Grads> {
        let mut grads = Grads::like(params);
        self.backward_into(params, seeds, &mut grads)?;
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayoutBuilder;

    #[test]
    fn bias_gradient_is_unit_vector() {
        let mut lb = LayoutBuilder::default();
        let l = lb.linear(3, 2);
        let params = Params::from_vec(alloc::vec![0.5, -1.0, 2.0, 0.1, 0.2, 0.3, 0.0, 0.0]);
        let mut tape = Tape::new();
        let x = tape.leaf(&[1.0, 2.0, 3.0]);
        let y = tape.affine(&params, l, x);
        let g = tape.backward(&params, &[(y, &[0.0, 1.0])]).unwrap();
        assert_eq!(&g.values()[l.bias_range()], &[0.0, 1.0]);
        assert_eq!(&g.values()[l.weight_range()], &[0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let mut lb = LayoutBuilder::default();
        let l1 = lb.linear(2, 2);
        let l2 = lb.linear(2, 1);
        let mut v = alloc::vec![0.0; lb.len()];
        v[l1.weight_range()].copy_from_slice(&[-1.0, -1.0, -2.0, -0.5]);
        v[l2.weight_range()].copy_from_slice(&[1.0, 1.0]);
        let params = Params::from_vec(v);
        let mut tape = Tape::new();
        let x = tape.leaf(&[1.0, 1.0]);
        let h = tape.affine(&params, l1, x);
        let r = tape.relu(h);
        let y = tape.affine(&params, l2, r);
        let g = tape.backward(&params, &[(y, &[1.0])]).unwrap();
        assert!(g.values()[l1.weight_range()].iter().all(|v| *v == 0.0));
        assert!(g.values()[l1.bias_range()].iter().all(|v| *v == 0.0));
        assert_eq!(&g.values()[l2.bias_range()], &[1.0]);
    }

    #[test]
    fn stale_trace_is_detected() {
        let mut lb = LayoutBuilder::default();
        let l = lb.linear(1, 1);
        let mut params = Params::zeros(lb.len());
        let mut tape = Tape::new();
        let x = tape.leaf(&[1.0]);
        let y = tape.affine(&params, l, x);
        params.values_mut()[0] = 2.0;
        assert_eq!(tape.backward(&params, &[(y, &[1.0])]), Err(Error::StaleTrace));
    }

    #[test]
    fn log_softmax_normalises() {
        let mut tape = Tape::new();
        let x = tape.leaf(&[1.0, 2.0, -3.0, 0.5, 0.0]);
        let y = tape.log_softmax(x);
        let s: f64 = tape.value(y).iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }
}
