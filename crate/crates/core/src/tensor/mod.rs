//! Dense f32 tensors on a reverse-mode differentiation tape.
//!
//! A [`Tape`] records eagerly-executed operations; [`Tape::backward`] walks
//! the record once in reverse topological order (which is the recording
//! order, since every operation is appended after its inputs) and
//! accumulates gradients. Persistent weights live in [`Param`] cells outside
//! any tape; each forward pass loads them as leaves and backward adds into
//! `Param::grad`, so repeated backward calls accumulate until
//! [`zero_grads`](Param::zero_grad) is called.
//!
//! Shape violations are programmer errors and panic with a message naming
//! the operation and the offending shapes, following `ndarray`'s convention.

mod conv;
mod loss;
mod norm;
mod ops;
pub mod optim;

pub use loss::{argmax_rows, softmax_cross_entropy};
pub use norm::BatchNorm;
pub use ops::{concat, stack_last};

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

/// Shape + contiguous row-major data.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorData {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        TensorData { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        TensorData {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn scalar(v: f32) -> Self {
        TensorData {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// A persistent, named weight with an accumulated gradient buffer.
#[derive(Clone)]
pub struct Param {
    inner: Rc<RefCell<ParamInner>>,
}

struct ParamInner {
    name: String,
    value: TensorData,
    grad: TensorData,
    trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: TensorData) -> Self {
        let grad = TensorData::zeros(value.shape.clone());
        Param {
            inner: Rc::new(RefCell::new(ParamInner {
                name: name.into(),
                value,
                grad,
                trainable: true,
            })),
        }
    }

    /// A named buffer updated outside the optimizer (e.g. batchnorm running
    /// statistics): checkpointed but never stepped.
    pub fn buffer(name: impl Into<String>, value: TensorData) -> Self {
        let p = Param::new(name, value);
        p.inner.borrow_mut().trainable = false;
        p
    }

    pub fn name(&self) -> String {
        self.inner.borrow().name.clone()
    }

    pub fn trainable(&self) -> bool {
        self.inner.borrow().trainable
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().value.shape.clone()
    }

    pub fn value(&self) -> TensorData {
        self.inner.borrow().value.clone()
    }

    pub fn grad(&self) -> TensorData {
        self.inner.borrow().grad.clone()
    }

    pub fn set_value(&self, value: TensorData) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(
            inner.value.shape, value.shape,
            "param {}: cannot replace value of shape {:?} with {:?}",
            inner.name, inner.value.shape, value.shape
        );
        inner.value = value;
    }

    /// Applies `f` to the raw value buffer.
    pub fn update<F: FnOnce(&mut [f32])>(&self, f: F) {
        f(&mut self.inner.borrow_mut().value.data);
    }

    pub fn zero_grad(&self) {
        for g in self.inner.borrow_mut().grad.data.iter_mut() {
            *g = 0.0;
        }
    }

    fn accumulate_grad(&self, contribution: &[f32]) {
        let mut inner = self.inner.borrow_mut();
        for (g, c) in inner.grad.data.iter_mut().zip(contribution) {
            *g += c;
        }
    }

    /// Reads grad under a closure without cloning.
    pub fn with_grad<R>(&self, f: impl FnOnce(&[f32]) -> R) -> R {
        f(&self.inner.borrow().grad.data)
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&[f32]) -> R) -> R {
        f(&self.inner.borrow().value.data)
    }
}

impl fmt::Debug for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        write!(f, "Param({}, shape {:?})", inner.name, inner.value.shape)
    }
}

type BackwardFn = Box<dyn Fn(&[TensorData], &TensorData, &mut dyn FnMut(usize, Vec<f32>))>;

struct Node {
    op: &'static str,
    parents: Vec<usize>,
    needs_grad: bool,
    param: Option<Param>,
}

struct TapeInner {
    values: Vec<TensorData>,
    nodes: Vec<Node>,
    backwards: Vec<Option<BackwardFn>>,
    /// in-pass gradient accumulators, consumed as the reverse walk passes
    grads: Vec<Option<TensorData>>,
    /// leaf gradients retained across passes (accumulating like `Param::grad`)
    retained: Vec<Option<TensorData>>,
}

/// The recording tape. Cloning is shallow; all clones share the record.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                values: Vec::new(),
                nodes: Vec::new(),
                backwards: Vec::new(),
                grads: Vec::new(),
                retained: Vec::new(),
            })),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn push(
        &self,
        op: &'static str,
        value: TensorData,
        parents: Vec<usize>,
        backward: Option<BackwardFn>,
        param: Option<Param>,
    ) -> Tensor {
        let mut inner = self.inner.borrow_mut();
        let needs_grad = param.is_some()
            || (backward.is_some()
                && (parents.is_empty() || parents.iter().any(|&p| inner.nodes[p].needs_grad)));
        let idx = inner.nodes.len();
        inner.values.push(value);
        inner.nodes.push(Node {
            op,
            parents,
            needs_grad,
            param,
        });
        inner
            .backwards
            .push(if needs_grad { backward } else { None });
        inner.grads.push(None);
        inner.retained.push(None);
        Tensor {
            tape: self.clone(),
            idx,
        }
    }

    /// A non-differentiable value.
    pub fn constant(&self, value: TensorData) -> Tensor {
        self.push("constant", value, vec![], None, None)
    }

    pub fn constant_vec(&self, shape: Vec<usize>, data: Vec<f32>) -> Tensor {
        self.constant(TensorData::new(shape, data))
    }

    pub fn scalar(&self, v: f32) -> Tensor {
        self.constant(TensorData::scalar(v))
    }

    /// A differentiable leaf not bound to a persistent param (test use).
    pub fn leaf(&self, value: TensorData) -> Tensor {
        self.push("leaf", value, vec![], Some(Box::new(|_, _, _| {})), None)
    }

    /// Loads a persistent param as a differentiable leaf of this tape.
    pub fn load(&self, param: &Param) -> Tensor {
        self.push(
            "param",
            param.value(),
            vec![],
            Some(Box::new(|_, _, _| {})),
            Some(param.clone()),
        )
    }

    /// Reverse pass from a scalar loss. Gradients of interior nodes are
    /// consumed as the walk passes them; leaf gradients stay readable and
    /// param-bound leaves accumulate into their `Param`.
    pub fn backward(&self, loss: &Tensor) {
        assert!(
            Rc::ptr_eq(&self.inner, &loss.tape.inner),
            "backward: loss tensor belongs to a different tape"
        );
        let mut inner = self.inner.borrow_mut();
        assert!(!inner.nodes.is_empty(), "backward: tape is empty");
        assert!(
            inner.values[loss.idx].numel() == 1,
            "backward: loss must be scalar, got shape {:?}",
            inner.values[loss.idx].shape
        );
        let start = loss.idx;
        let seed_shape = inner.values[start].shape.clone();
        inner.grads[start] = Some(TensorData::new(seed_shape, vec![1.0]));

        for i in (0..=start).rev() {
            if !inner.nodes[i].needs_grad {
                inner.grads[i] = None;
                continue;
            }
            let Some(grad_out) = inner.grads[i].take() else {
                continue;
            };
            if let Some(param) = &inner.nodes[i].param {
                param.accumulate_grad(&grad_out.data);
            }
            let is_leaf = inner.nodes[i].parents.is_empty();
            if let Some(backward) = inner.backwards[i].take() {
                let TapeInner {
                    values,
                    nodes,
                    grads,
                    ..
                } = &mut *inner;
                backward(values, &grad_out, &mut |parent, contribution| {
                    debug_assert_eq!(values[parent].numel(), contribution.len());
                    if !nodes[parent].needs_grad {
                        return;
                    }
                    let slot = grads[parent].get_or_insert_with(|| {
                        TensorData::zeros(values[parent].shape.clone())
                    });
                    for (g, c) in slot.data.iter_mut().zip(contribution) {
                        *g += c;
                    }
                });
                inner.backwards[i] = Some(backward);
            }
            if is_leaf {
                let slot = inner.retained[i]
                    .get_or_insert_with(|| TensorData::zeros(grad_out.shape.clone()));
                for (r, g) in slot.data.iter_mut().zip(&grad_out.data) {
                    *r += g;
                }
            }
        }
    }

    /// Index of the first recorded tensor holding a non-finite value, with
    /// its op name and shape. Used for training diagnostics.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str, Vec<usize>)> {
        let inner = self.inner.borrow();
        for (i, v) in inner.values.iter().enumerate() {
            if v.data.iter().any(|x| !x.is_finite()) {
                return Some((i, inner.nodes[i].op, v.shape.clone()));
            }
        }
        None
    }
}

/// Handle to one recorded value.
#[derive(Clone)]
pub struct Tensor {
    tape: Tape,
    idx: usize,
}

impl Tensor {
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().values[self.idx].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.tape.inner.borrow().values[self.idx].numel()
    }

    /// Clones the value out of the tape.
    pub fn value(&self) -> TensorData {
        self.tape.inner.borrow().values[self.idx].clone()
    }

    pub fn data(&self) -> Vec<f32> {
        self.tape.inner.borrow().values[self.idx].data.clone()
    }

    pub fn with_data<R>(&self, f: impl FnOnce(&[f32]) -> R) -> R {
        f(&self.tape.inner.borrow().values[self.idx].data)
    }

    pub fn item(&self) -> f32 {
        let inner = self.tape.inner.borrow();
        let v = &inner.values[self.idx];
        assert!(
            v.numel() == 1,
            "item: tensor of shape {:?} is not scalar",
            v.shape
        );
        v.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.idx].needs_grad
    }

    /// Accumulated gradient of this node, retained across backward passes
    /// (leaves only; interior gradients are consumed by the walk).
    pub fn grad(&self) -> Option<TensorData> {
        self.tape.inner.borrow().retained[self.idx].clone()
    }

    /// A constant copy of this tensor's value on the same tape, cut off from
    /// the gradient flow.
    pub fn detach(&self) -> Tensor {
        let v = self.value();
        self.tape.constant(v)
    }

    pub(crate) fn same_tape(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.tape.inner, &other.tape.inner)
    }

    pub(crate) fn idx(&self) -> usize {
        self.idx
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor(node {}, shape {:?})", self.idx, self.shape())
    }
}
