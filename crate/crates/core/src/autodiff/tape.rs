use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to one output slot of a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    node: usize,
    slot: usize,
}

/// What a backward rule sees: the forward inputs and outputs plus the incoming
/// gradient for each output (missing gradients are zero).
pub struct BackwardCtx<'a> {
    pub inputs: Vec<&'a Tensor>,
    pub outputs: &'a [Rc<Tensor>],
    grads: &'a [Option<Tensor>],
    /// Which inputs need a gradient; rules may skip the rest.
    pub needs: Vec<bool>,
}

impl BackwardCtx<'_> {
    /// Gradient flowing into output `slot`, materialized as zeros when absent.
    pub fn grad(&self, slot: usize) -> std::borrow::Cow<'_, Tensor> {
        match &self.grads[slot] {
            Some(g) => std::borrow::Cow::Borrowed(g),
            None => std::borrow::Cow::Owned(Tensor::zeros(self.outputs[slot].shape())),
        }
    }
}

pub type BackwardFn = Box<dyn Fn(&BackwardCtx) -> Result<Vec<Option<Tensor>>>>;

struct Node {
    op: &'static str,
    inputs: Vec<Var>,
    outputs: Vec<Rc<Tensor>>,
    requires_grad: bool,
    is_leaf: bool,
    backward: Option<BackwardFn>,
}

/// Records primitive operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so ids are already topologically sorted.
/// A tape is single-threaded; build one per forward pass.
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_leaf(&self, t: Tensor, requires_grad: bool, op: &'static str) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            inputs: Vec::new(),
            outputs: vec![Rc::new(t)],
            requires_grad,
            is_leaf: true,
            backward: None,
        });
        Var {
            tape: self.id,
            node: nodes.len() - 1,
            slot: 0,
        }
    }

    /// A differentiable input (parameter).
    pub fn leaf(&self, t: Tensor) -> Var {
        self.push_leaf(t, true, "leaf")
    }

    /// A value that receives no gradient.
    pub fn constant(&self, t: Tensor) -> Var {
        self.push_leaf(t, false, "constant")
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id {
            return Err(Error::Autodiff(format!(
                "variable from tape {} used on tape {}",
                v.tape, self.id
            )));
        }
        Ok(())
    }

    pub fn value(&self, v: Var) -> Rc<Tensor> {
        assert_eq!(v.tape, self.id, "variable belongs to another tape");
        Rc::clone(&self.nodes.borrow()[v.node].outputs[v.slot])
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes.borrow()[v.node].op
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.node].requires_grad
    }

    /// Runs `forward` on the input values and records the result. The backward rule
    /// is kept only when some input needs a gradient.
    pub fn record<F>(
        &self,
        op: &'static str,
        inputs: &[Var],
        forward: F,
        backward: BackwardFn,
    ) -> Result<Vec<Var>>
    where
        F: FnOnce(&[&Tensor]) -> Result<Vec<Tensor>>,
    {
        for &v in inputs {
            self.check(v)?;
        }
        let (outputs, requires_grad) = {
            let nodes = self.nodes.borrow();
            let vals: Vec<&Tensor> = inputs
                .iter()
                .map(|v| nodes[v.node].outputs[v.slot].as_ref())
                .collect();
            let outs = forward(&vals)?;
            let rg = inputs.iter().any(|v| nodes[v.node].requires_grad);
            (outs, rg)
        };
        let n_out = outputs.len();
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            inputs: inputs.to_vec(),
            outputs: outputs.into_iter().map(Rc::new).collect(),
            requires_grad,
            is_leaf: false,
            backward: requires_grad.then_some(backward),
        });
        let node = nodes.len() - 1;
        Ok((0..n_out)
            .map(|slot| Var {
                tape: self.id,
                node,
                slot,
            })
            .collect())
    }

    /// Single-output convenience wrapper around [`Tape::record`].
    pub fn record1<F>(
        &self,
        op: &'static str,
        inputs: &[Var],
        forward: F,
        backward: BackwardFn,
    ) -> Result<Var>
    where
        F: FnOnce(&[&Tensor]) -> Result<Tensor>,
    {
        Ok(self.record(op, inputs, |v| Ok(vec![forward(v)?]), backward)?[0])
    }

    /// Reverse accumulation from a scalar loss (shape `[1]`).
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        let shape = self.value(loss).shape().to_vec();
        if shape != [1] {
            return Err(Error::Autodiff(format!(
                "backward needs a scalar loss, got shape {shape:?}"
            )));
        }
        self.backward_with_seed(loss, Tensor::scalar(1.0))
    }

    /// Reverse accumulation seeded with an arbitrary output cotangent. For a linear
    /// map `y = L x` this yields `Lᵀ seed`.
    pub fn backward_with_seed(&self, output: Var, seed: Tensor) -> Result<Gradients> {
        self.check(output)?;
        let nodes = self.nodes.borrow();
        let out_node = &nodes[output.node];
        if seed.shape() != out_node.outputs[output.slot].shape() {
            return Err(Error::Autodiff("seed shape does not match output".into()));
        }
        if !out_node.requires_grad {
            return Err(Error::Autodiff(
                "output is detached from every differentiable leaf".into(),
            ));
        }
        let mut grads: Vec<Vec<Option<Tensor>>> = nodes
            .iter()
            .take(output.node + 1)
            .map(|n| vec![None; n.outputs.len()])
            .collect();
        grads[output.node][output.slot] = Some(seed);
        let mut leaf_grads = HashMap::new();
        for idx in (0..=output.node).rev() {
            let node = &nodes[idx];
            if !node.requires_grad || grads[idx].iter().all(Option::is_none) {
                continue;
            }
            let node_grads = std::mem::take(&mut grads[idx]);
            if node.is_leaf {
                if let Some(g) = node_grads.into_iter().next().flatten() {
                    leaf_grads.insert(idx, g);
                }
                continue;
            }
            let backward = node
                .backward
                .as_ref()
                .expect("differentiable node has a rule");
            let ctx = BackwardCtx {
                inputs: node
                    .inputs
                    .iter()
                    .map(|v| nodes[v.node].outputs[v.slot].as_ref())
                    .collect(),
                outputs: &node.outputs,
                grads: &node_grads,
                needs: node
                    .inputs
                    .iter()
                    .map(|v| nodes[v.node].requires_grad)
                    .collect(),
            };
            let input_grads = backward(&ctx)?;
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "op {}", node.op);
            for (v, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !nodes[v.node].requires_grad {
                    continue;
                }
                match &mut grads[v.node][v.slot] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(Gradients {
            tape: self.id,
            leaves: leaf_grads,
        })
    }
}

/// Gradients of the leaves reached from a loss.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    leaves: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape || v.slot != 0 {
            return None;
        }
        self.leaves.get(&v.node)
    }

    /// Gradient of `v`, or zeros of `like`'s shape when the loss does not depend on it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}
