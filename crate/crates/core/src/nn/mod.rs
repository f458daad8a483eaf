//! Differentiable building blocks, the message-passing policy and critic
//! networks, and their optimiser.
//!
//! All learnable weights of one network live in a single flat [`Params`]
//! buffer; a [`Linear`] is a view (offset and shape) into that buffer.
//! Forward passes are recorded on a [`Tape`] and differentiated in reverse.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::{Error, Result};

mod network;
mod optim;
mod tape;

pub use network::{Mlp, MessagePassingNet, Readout, RoundLayers, CRITIC_INPUT};
pub use optim::{adam_step, AdamState, PlateauSchedule};
pub use tape::{NodeId, Tape};

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

/// Affine layer `out_dim x in_dim` stored row-major at `offset`, followed by
/// its `out_dim` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub offset: usize,
}

impl Linear {
    pub fn len(&self) -> usize {
        self.out_dim * (self.in_dim + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight_range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.out_dim * self.in_dim
    }

    pub fn bias_range(&self) -> core::ops::Range<usize> {
        let start = self.offset + self.out_dim * self.in_dim;
        start..start + self.out_dim
    }

    /// Copies the layer out of a parameter buffer.
    pub fn extract(&self, params: &Params) -> LayerParams {
        LayerParams {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weight: params.values()[self.weight_range()].to_vec(),
            bias: params.values()[self.bias_range()].to_vec(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    fn init<R: Rng + ?Sized>(&self, values: &mut [f64], rng: &mut R) {
        let limit = libm::sqrt(6.0 / (self.in_dim + self.out_dim) as f64);
        for w in &mut values[self.weight_range()] {
            *w = rng.gen_range(-limit..limit);
        }
        for b in &mut values[self.bias_range()] {
            *b = 0.0;
        }
    }
}

/// Sequential allocator for [`Linear`] views.
#[derive(Debug, Default)]
pub(crate) struct LayoutBuilder {
    len: usize,
}

impl LayoutBuilder {
    pub(crate) fn linear(&mut self, in_dim: usize, out_dim: usize) -> Linear {
        let l = Linear {
            in_dim,
            out_dim,
            offset: self.len,
        };
        self.len += l.len();
        l
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }
}

/// Flat weight buffer. Every mutable access gives the buffer a new stamp so
/// that traces recorded against older values can be detected.
#[derive(Debug, Clone)]
pub struct Params {
    values: Vec<f64>,
    stamp: u64,
}

impl PartialEq for Params {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}

impl Params {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self {
            values,
            stamp: fresh_stamp(),
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::from_vec(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.stamp = fresh_stamp();
        &mut self.values
    }

    pub fn stamp(&self) -> u64 {
        self.stamp
    }
}

/// Gradient buffer mirroring a [`Params`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    values: Vec<f64>,
}

impl Grads {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn like(params: &Params) -> Self {
        Self::zeros(params.len())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn zero(&mut self) {
        self.values.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn add_assign(&mut self, other: &Grads) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Shape(format!(
                "gradient lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        self.values.iter_mut().for_each(|g| *g *= k);
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|g| *g == 0.0)
    }
}

/// An owned copy of one layer's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn new(in_dim: usize, out_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "layer {}x{} needs {} weights and {} biases, got {} and {}",
                out_dim,
                in_dim,
                in_dim * out_dim,
                out_dim,
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }
}

/// `W x + b`.
pub fn h_lin(x: &[f64], p: &LayerParams) -> Result<Vec<f64>> {
    if x.len() != p.in_dim {
        return Err(Error::Shape(format!(
            "layer expects input of length {}, got {}",
            p.in_dim,
            x.len()
        )));
    }
    let mut out = p.bias.clone();
    affine_into(&p.weight, x, &mut out);
    Ok(out)
}

/// `max(0, W x + b)`.
pub fn h_rel(x: &[f64], p: &LayerParams) -> Result<Vec<f64>> {
    let mut out = h_lin(x, p)?;
    relu_in_place(&mut out);
    Ok(out)
}

/// Weights of one vertex-update block.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexUpdateParams {
    pub v_lin: LayerParams,
    pub z_rel: LayerParams,
    pub post_rel: LayerParams,
    pub post_lin: LayerParams,
}

/// `s + post_lin(relu(post_rel(sum_j v_lin(s) * relu(z_rel(z_j)))))`.
pub fn vertex_update(s: &[f64], incoming: &[&[f64]], p: &VertexUpdateParams) -> Result<Vec<f64>> {
    let gate = h_lin(s, &p.v_lin)?;
    let mut acc = vec![0.0; p.z_rel.out_dim];
    for z in incoming {
        let m = h_rel(z, &p.z_rel)?;
        if m.len() != gate.len() {
            return Err(Error::Shape("vertex gate and edge message lengths differ".into()));
        }
        for ((a, g), m) in acc.iter_mut().zip(&gate).zip(&m) {
            *a += g * m;
        }
    }
    let hidden = h_rel(&acc, &p.post_rel)?;
    let delta = h_lin(&hidden, &p.post_lin)?;
    if delta.len() != s.len() {
        return Err(Error::Shape("residual branch length differs from the vertex state".into()));
    }
    Ok(s.iter().zip(&delta).map(|(a, b)| a + b).collect())
}

/// `relu(W [z, s_src, s_dst] + b)`.
pub fn edge_update(z: &[f64], s_src: &[f64], s_dst: &[f64], p: &LayerParams) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(z.len() + s_src.len() + s_dst.len());
    x.extend_from_slice(z);
    x.extend_from_slice(s_src);
    x.extend_from_slice(s_dst);
    h_rel(&x, p)
}

/// `out += W x` for row-major `W`.
#[inline]
pub(crate) fn affine_into(weight: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, row) in out.iter_mut().zip(weight.chunks_exact(n)) {
        let mut acc = 0.0;
        for (w, v) in row.iter().zip(x) {
            acc += w * v;
        }
        *o += acc;
    }
}

#[inline]
pub(crate) fn relu_in_place(x: &mut [f64]) {
    for v in x {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
}
