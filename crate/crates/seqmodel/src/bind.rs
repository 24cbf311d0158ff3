//! Binding of a weight registry onto an autodiff tape.
//!
//! `Bound::params` registers every tensor as a gradient leaf (training);
//! `Bound::inputs` registers them as constants (prediction). Forward
//! functions look nodes up by registry name.

use autograd::{NodeId, Tape};

use crate::weights::Weights;

pub struct Bound<'w> {
    weights: &'w Weights,
    ids: Vec<NodeId>,
}

impl<'w> Bound<'w> {
    /// Bind all tensors as trainable parameters (gradients tracked).
    pub fn params(tape: &mut Tape, weights: &'w Weights) -> Self {
        let ids = weights.iter().map(|(_, t)| tape.param(t)).collect();
        Bound { weights, ids }
    }

    /// Bind all tensors as constants (no gradients).
    pub fn inputs(tape: &mut Tape, weights: &'w Weights) -> Self {
        let ids = weights.iter().map(|(_, t)| tape.input(t)).collect();
        Bound { weights, ids }
    }

    /// Node for a registry entry; panics on a name absent from the
    /// registry (an internal wiring bug, not a runtime condition).
    pub fn id(&self, name: &str) -> NodeId {
        self.ids[self.weights.position(name)]
    }

    /// All node ids in registry order (for gradient collection).
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}
