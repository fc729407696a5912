//! Elementwise, broadcasting, matmul, reduction and shape operations.

use super::{Tensor, TensorData};

/// Output shape of a right-aligned broadcast, or a panic naming `op`.
fn broadcast_shape(op: &str, a: &[usize], b: &[usize]) -> Vec<usize> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        if da == db || da == 1 || db == 1 {
            out[i] = da.max(db);
        } else {
            panic!("{op}: shape mismatch {a:?} vs {b:?}");
        }
    }
    out
}

/// Row-major strides, with 0 for axes broadcast against `out_shape`.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let offset = rank - shape.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        let s = if shape[i] == 1 { 0 } else { acc };
        strides[offset + i] = s;
        acc *= shape[i];
    }
    strides
}

/// Applies `f` over the broadcast of `a` and `b` into a fresh buffer.
fn broadcast_zip(
    out_shape: &[usize],
    a: &TensorData,
    b: &TensorData,
    f: impl Fn(f32, f32) -> f32,
) -> Vec<f32> {
    let numel: usize = out_shape.iter().product();
    let mut out = vec![0.0; numel];
    if a.shape == out_shape && b.shape == out_shape {
        for ((o, &x), &y) in out.iter_mut().zip(&a.data).zip(&b.data) {
            *o = f(x, y);
        }
        return out;
    }
    let sa = broadcast_strides(&a.shape, out_shape);
    let sb = broadcast_strides(&b.shape, out_shape);
    let rank = out_shape.len();
    let mut coords = vec![0usize; rank];
    let mut ia = 0usize;
    let mut ib = 0usize;
    for o in out.iter_mut() {
        *o = f(a.data[ia], b.data[ib]);
        for ax in (0..rank).rev() {
            coords[ax] += 1;
            ia += sa[ax];
            ib += sb[ax];
            if coords[ax] < out_shape[ax] {
                break;
            }
            coords[ax] = 0;
            ia -= sa[ax] * out_shape[ax];
            ib -= sb[ax] * out_shape[ax];
        }
    }
    out
}

/// Sums `grad` (shaped `from`) down to `to` by collapsing broadcast axes.
fn reduce_to_shape(grad: &[f32], from: &[usize], to: &[usize]) -> Vec<f32> {
    if from == to {
        return grad.to_vec();
    }
    let numel: usize = to.iter().product();
    let mut out = vec![0.0; numel];
    let strides = broadcast_strides(to, from);
    let rank = from.len();
    let mut coords = vec![0usize; rank];
    let mut it = 0usize;
    for &g in grad {
        out[it] += g;
        for ax in (0..rank).rev() {
            coords[ax] += 1;
            it += strides[ax];
            if coords[ax] < from[ax] {
                break;
            }
            coords[ax] = 0;
            it -= strides[ax] * from[ax];
        }
    }
    out
}

fn binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f32, f32) -> f32 + 'static,
    df: impl Fn(f32, f32) -> (f32, f32) + 'static,
) -> Tensor {
    assert!(a.same_tape(b), "{op}: operands belong to different tapes");
    let (va, vb) = (a.value(), b.value());
    let out_shape = broadcast_shape(op, &va.shape, &vb.shape);
    let out = broadcast_zip(&out_shape, &va, &vb, &f);
    let (pa, pb) = (a.idx(), b.idx());
    let shape_for_node = out_shape.clone();
    let backward = Box::new(
        move |values: &[TensorData], grad: &TensorData, sink: &mut dyn FnMut(usize, Vec<f32>)| {
            let (va, vb) = (&values[pa], &values[pb]);
            let ga_full = broadcast_zip(&grad.shape, va, vb, |x, y| df(x, y).0);
            let gb_full = broadcast_zip(&grad.shape, va, vb, |x, y| df(x, y).1);
            let ga: Vec<f32> = ga_full.iter().zip(&grad.data).map(|(d, g)| d * g).collect();
            let gb: Vec<f32> = gb_full.iter().zip(&grad.data).map(|(d, g)| d * g).collect();
            sink(pa, reduce_to_shape(&ga, &grad.shape, &va.shape));
            sink(pb, reduce_to_shape(&gb, &grad.shape, &vb.shape));
        },
    );
    a.tape().push(
        op,
        TensorData::new(shape_for_node, out),
        vec![pa, pb],
        Some(backward),
        None,
    )
}

fn unary(
    op: &'static str,
    x: &Tensor,
    f: impl Fn(f32) -> f32,
    df: impl Fn(f32) -> f32 + 'static,
) -> Tensor {
    let v = x.value();
    let out: Vec<f32> = v.data.iter().map(|&x| f(x)).collect();
    let p = x.idx();
    let backward = Box::new(
        move |values: &[TensorData], grad: &TensorData, sink: &mut dyn FnMut(usize, Vec<f32>)| {
            let g = values[p]
                .data
                .iter()
                .zip(&grad.data)
                .map(|(&x, &g)| df(x) * g)
                .collect();
            sink(p, g);
        },
    );
    x.tape().push(
        op,
        TensorData::new(v.shape.clone(), out),
        vec![p],
        Some(backward),
        None,
    )
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Tensor {
        binary("add", self, other, |a, b| a + b, |_, _| (1.0, 1.0))
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        binary("sub", self, other, |a, b| a - b, |_, _| (1.0, -1.0))
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        binary("mul", self, other, |a, b| a * b, |a, b| (b, a))
    }

    pub fn neg(&self) -> Tensor {
        unary("neg", self, |x| -x, |_| -1.0)
    }

    pub fn sin(&self) -> Tensor {
        unary("sin", self, f32::sin, f32::cos)
    }

    pub fn cos(&self) -> Tensor {
        unary("cos", self, f32::cos, |x| -x.sin())
    }

    pub fn relu(&self) -> Tensor {
        unary("relu", self, |x| x.max(0.0), |x| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&self, slope: f32) -> Tensor {
        unary(
            "leaky_relu",
            self,
            move |x| if x > 0.0 { x } else { slope * x },
            move |x| if x > 0.0 { 1.0 } else { slope },
        )
    }

    /// Swish / SiLU: `x * sigmoid(x)`.
    pub fn swish(&self) -> Tensor {
        fn sig(x: f32) -> f32 {
            1.0 / (1.0 + (-x).exp())
        }
        unary("swish", self, |x| x * sig(x), |x| {
            let s = sig(x);
            s + x * s * (1.0 - s)
        })
    }

    pub fn sigmoid(&self) -> Tensor {
        fn sig(x: f32) -> f32 {
            1.0 / (1.0 + (-x).exp())
        }
        unary("sigmoid", self, sig, |x| {
            let s = sig(x);
            s * (1.0 - s)
        })
    }

    pub fn add_scalar(&self, c: f32) -> Tensor {
        unary("add_scalar", self, move |x| x + c, |_| 1.0)
    }

    pub fn mul_scalar(&self, c: f32) -> Tensor {
        unary("mul_scalar", self, move |x| x * c, move |_| c)
    }

    /// Sum of all elements, as a scalar. Accumulates in f64.
    pub fn sum(&self) -> Tensor {
        let v = self.value();
        let total: f64 = v.data.iter().map(|&x| x as f64).sum();
        let p = self.idx();
        let backward = Box::new(
            move |values: &[TensorData], grad: &TensorData, sink: &mut dyn FnMut(usize, Vec<f32>)| {
                sink(p, vec![grad.data[0]; values[p].numel()]);
            },
        );
        self.tape().push(
            "sum",
            TensorData::scalar(total as f32),
            vec![p],
            Some(backward),
            None,
        )
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel() as f32;
        self.sum().mul_scalar(1.0 / n)
    }

    /// Max over the given axes (deduplicated, removed from the output shape).
    /// Gradient flows to the first maximal element of each reduced block.
    pub fn max_reduce(&self, axes: &[usize]) -> Tensor {
        let v = self.value();
        let rank = v.shape.len();
        let mut reduce = vec![false; rank];
        for &ax in axes {
            assert!(
                ax < rank,
                "max_reduce: axis {ax} out of range for shape {:?}",
                v.shape
            );
            reduce[ax] = true;
        }
        let out_shape: Vec<usize> = (0..rank).filter(|&i| !reduce[i]).map(|i| v.shape[i]).collect();
        let out_numel: usize = out_shape.iter().product::<usize>().max(1);

        // strides of the input, and the flattened output index of each element
        let mut in_strides = vec![1usize; rank];
        for i in (0..rank.saturating_sub(1)).rev() {
            in_strides[i] = in_strides[i + 1] * v.shape[i + 1];
        }
        let kept: Vec<usize> = (0..rank).filter(|&i| !reduce[i]).collect();
        let mut out_strides = vec![1usize; kept.len()];
        for i in (0..kept.len().saturating_sub(1)).rev() {
            out_strides[i] = out_strides[i + 1] * v.shape[kept[i + 1]];
        }

        let mut best = vec![f32::NEG_INFINITY; out_numel];
        let mut arg = vec![0usize; out_numel];
        let mut coords = vec![0usize; rank];
        for (lin, &x) in v.data.iter().enumerate() {
            let mut o = 0;
            for (k, &ax) in kept.iter().enumerate() {
                o += coords[ax] * out_strides[k];
            }
            if x > best[o] {
                best[o] = x;
                arg[o] = lin;
            }
            for ax in (0..rank).rev() {
                coords[ax] += 1;
                if coords[ax] < v.shape[ax] {
                    break;
                }
                coords[ax] = 0;
            }
        }

        let p = self.idx();
        let backward = Box::new(
            move |values: &[TensorData], grad: &TensorData, sink: &mut dyn FnMut(usize, Vec<f32>)| {
                let mut g = vec![0.0; values[p].numel()];
                for (o, &src) in arg.iter().enumerate() {
                    g[src] += grad.data[o];
                }
                sink(p, g);
            },
        );
        self.tape().push(
            "max_reduce",
            TensorData::new(out_shape, best),
            vec![p],
            Some(backward),
            None,
        )
    }

    /// Matrix product of 2-D tensors: `(m, k) x (k, n) -> (m, n)`.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert!(self.same_tape(other), "matmul: operands belong to different tapes");
        let (va, vb) = (self.value(), other.value());
        assert!(
            va.shape.len() == 2 && vb.shape.len() == 2 && va.shape[1] == vb.shape[0],
            "matmul: shape mismatch {:?} vs {:?}",
            va.shape,
            vb.shape
        );
        let (m, k, n) = (va.shape[0], va.shape[1], vb.shape[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, &va.data, (k, 1), &vb.data, (n, 1), 0.0, &mut out, (n, 1));
        let (pa, pb) = (self.idx(), other.idx());
        let backward = Box::new(
            move |values: &[TensorData], grad: &TensorData, sink: &mut dyn FnMut(usize, Vec<f32>)| {
                let (a, b) = (&values[pa], &values[pb]);
                // dA = dC B^T
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, 1.0, &grad.data, (n, 1), &b.data, (1, n), 0.0, &mut da, (k, 1));
                // dB = A^T dC
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, 1.0, &a.data, (1, k), &grad.data, (n, 1), 0.0, &mut db, (n, 1));
                sink(pa, da);
                sink(pb, db);
            },
        );
        self.tape().push(
            "matmul",
            TensorData::new(vec![m, n], out),
            vec![pa, pb],
            Some(backward),
            None,
        )
    }

    pub fn reshape(&self, new_shape: Vec<usize>) -> Tensor {
        let v = self.value();
        let new_numel: usize = new_shape.iter().product();
        assert_eq!(
            v.numel(),
            new_numel,
            "reshape: cannot view {:?} as {:?}",
            v.shape,
            new_shape
        );
        let p = self.idx();
        let backward = Box::new(
            move |_values: &[TensorData], grad: &TensorData, sink: &mut dyn FnMut(usize, Vec<f32>)| {
                sink(p, grad.data.clone());
            },
        );
        self.tape().push(
            "reshape",
            TensorData::new(new_shape, v.data),
            vec![p],
            Some(backward),
            None,
        )
    }

    /// Materializes this tensor broadcast up to `shape`.
    pub fn broadcast_to(&self, shape: Vec<usize>) -> Tensor {
        let v = self.value();
        let out_shape = broadcast_shape("broadcast_to", &v.shape, &shape);
        assert_eq!(
            out_shape, shape,
            "broadcast_to: {:?} does not broadcast to {:?}",
            v.shape, shape
        );
        let zeros = TensorData::zeros(shape.clone());
        let out = broadcast_zip(&shape, &v, &zeros, |a, _| a);
        let p = self.idx();
        let from = shape.clone();
        let backward = Box::new(
            move |values: &[TensorData], grad: &TensorData, sink: &mut dyn FnMut(usize, Vec<f32>)| {
                sink(p, reduce_to_shape(&grad.data, &from, &values[p].shape));
            },
        );
        self.tape().push(
            "broadcast_to",
            TensorData::new(shape, out),
            vec![p],
            Some(backward),
            None,
        )
    }

    /// Axis permutation (a copying transpose).
    pub fn permute(&self, axes: &[usize]) -> Tensor {
        let v = self.value();
        let rank = v.shape.len();
        let mut seen = vec![false; rank];
        assert_eq!(axes.len(), rank, "permute: axes {axes:?} vs shape {:?}", v.shape);
        for &a in axes {
            assert!(a < rank && !seen[a], "permute: invalid axes {axes:?}");
            seen[a] = true;
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| v.shape[a]).collect();
        let out = permute_copy(&v.data, &v.shape, axes);
        let p = self.idx();
        let axes_owned: Vec<usize> = axes.to_vec();
        let out_shape_b = out_shape.clone();
        let backward = Box::new(
            move |_values: &[TensorData], grad: &TensorData, sink: &mut dyn FnMut(usize, Vec<f32>)| {
                let mut inverse = vec![0usize; axes_owned.len()];
                for (i, &a) in axes_owned.iter().enumerate() {
                    inverse[a] = i;
                }
                sink(p, permute_copy(&grad.data, &out_shape_b, &inverse));
            },
        );
        self.tape().push(
            "permute",
            TensorData::new(out_shape, out),
            vec![p],
            Some(backward),
            None,
        )
    }

    /// Gathers slices along `axis` at the given indices.
    pub fn index_select(&self, axis: usize, indices: &[usize]) -> Tensor {
        let v = self.value();
        let rank = v.shape.len();
        assert!(axis < rank, "index_select: axis {axis} vs shape {:?}", v.shape);
        for &i in indices {
            assert!(
                i < v.shape[axis],
                "index_select: index {i} out of bounds for axis {axis} of {:?}",
                v.shape
            );
        }
        let outer: usize = v.shape[..axis].iter().product();
        let inner: usize = v.shape[axis + 1..].iter().product();
        let n_in = v.shape[axis];
        let n_out = indices.len();
        let mut out = vec![0.0; outer * n_out * inner];
        for o in 0..outer {
            for (j, &src) in indices.iter().enumerate() {
                let dst_off = (o * n_out + j) * inner;
                let src_off = (o * n_in + src) * inner;
                out[dst_off..dst_off + inner].copy_from_slice(&v.data[src_off..src_off + inner]);
            }
        }
        let mut out_shape = v.shape.clone();
        out_shape[axis] = n_out;
        let p = self.idx();
        let idxs: Vec<usize> = indices.to_vec();
        let backward = Box::new(
            move |values: &[TensorData], grad: &TensorData, sink: &mut dyn FnMut(usize, Vec<f32>)| {
                let mut g = vec![0.0; values[p].numel()];
                for o in 0..outer {
                    for (j, &src) in idxs.iter().enumerate() {
                        let dst_off = (o * n_out + j) * inner;
                        let src_off = (o * n_in + src) * inner;
                        for t in 0..inner {
                            g[src_off + t] += grad.data[dst_off + t];
                        }
                    }
                }
                sink(p, g);
            },
        );
        self.tape().push(
            "index_select",
            TensorData::new(out_shape, out),
            vec![p],
            Some(backward),
            None,
        )
    }
}

/// Concatenates tensors along `axis`.
pub fn concat(tensors: &[Tensor], axis: usize) -> Tensor {
    assert!(!tensors.is_empty(), "concat: empty input list");
    let first = tensors[0].value();
    let rank = first.shape.len();
    assert!(axis < rank, "concat: axis {axis} vs shape {:?}", first.shape);
    let mut axis_total = 0;
    for t in tensors {
        let s = t.shape();
        assert!(
            s.len() == rank
                && s.iter()
                    .enumerate()
                    .all(|(i, &d)| i == axis || d == first.shape[i]),
            "concat: incompatible shapes {:?} vs {:?}",
            first.shape,
            s
        );
        assert!(t.same_tape(&tensors[0]), "concat: tensors on different tapes");
        axis_total += s[axis];
    }
    let outer: usize = first.shape[..axis].iter().product();
    let inner: usize = first.shape[axis + 1..].iter().product();
    let mut out_shape = first.shape.clone();
    out_shape[axis] = axis_total;
    let mut out = vec![0.0; outer * axis_total * inner];
    let mut offsets = Vec::with_capacity(tensors.len());
    let mut cursor = 0;
    for t in tensors {
        let v = t.value();
        let n = v.shape[axis];
        for o in 0..outer {
            let dst = (o * axis_total + cursor) * inner;
            let src = o * n * inner;
            out[dst..dst + n * inner].copy_from_slice(&v.data[src..src + n * inner]);
        }
        offsets.push((t.idx(), cursor, n));
        cursor += n;
    }
    let backward = Box::new(
        move |values: &[TensorData], grad: &TensorData, sink: &mut dyn FnMut(usize, Vec<f32>)| {
            for &(p, off, n) in &offsets {
                let mut g = vec![0.0; values[p].numel()];
                for o in 0..outer {
                    let src = (o * axis_total + off) * inner;
                    let dst = o * n * inner;
                    g[dst..dst + n * inner].copy_from_slice(&grad.data[src..src + n * inner]);
                }
                sink(p, g);
            }
        },
    );
    let parents = tensors.iter().map(|t| t.idx()).collect();
    tensors[0].tape().push(
        "concat",
        TensorData::new(out_shape, out),
        parents,
        Some(backward),
        None,
    )
}

/// Stacks equal-shape tensors along a fresh trailing axis.
pub fn stack_last(tensors: &[Tensor]) -> Tensor {
    assert!(!tensors.is_empty(), "stack_last: empty input list");
    let mut shape = tensors[0].shape();
    shape.push(1);
    let reshaped: Vec<Tensor> = tensors.iter().map(|t| t.reshape(shape.clone())).collect();
    concat(&reshaped, shape.len() - 1)
}

fn permute_copy(data: &[f32], shape: &[usize], axes: &[usize]) -> Vec<f32> {
    let rank = shape.len();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let perm_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = vec![0.0; data.len()];
    let mut coords = vec![0usize; rank];
    let mut src = 0usize;
    for o in out.iter_mut() {
        *o = data[src];
        for ax in (0..rank).rev() {
            coords[ax] += 1;
            src += perm_strides[ax];
            if coords[ax] < out_shape[ax] {
                break;
            }
            coords[ax] = 0;
            src -= perm_strides[ax] * out_shape[ax];
        }
    }
    out
}

/// Row-major sgemm wrapper: `C = alpha * A @ B + beta * C` with explicit
/// (row, col) strides per operand.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    astr: (usize, usize),
    b: &[f32],
    bstr: (usize, usize),
    beta: f32,
    c: &mut [f32],
    cstr: (usize, usize),
) {
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            astr.0 as isize,
            astr.1 as isize,
            b.as_ptr(),
            bstr.0 as isize,
            bstr.1 as isize,
            beta,
            c.as_mut_ptr(),
            cstr.0 as isize,
            cstr.1 as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::super::Tape;
    use super::*;

    #[test]
    fn sin_value_and_gradient_at_zero() {
        let tape = Tape::new();
        let x = tape.leaf(TensorData::new(vec![1], vec![0.0]));
        let y = x.sin();
        assert_eq!(y.data(), vec![0.0]);
        let loss = y.sum();
        tape.backward(&loss);
        assert_eq!(x.grad().unwrap().data, vec![1.0]);
    }

    #[test]
    fn broadcast_add_reduces_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(TensorData::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]));
        let b = tape.leaf(TensorData::new(vec![3], vec![10., 20., 30.]));
        let y = x.add(&b);
        assert_eq!(y.data(), vec![11., 22., 33., 14., 25., 36.]);
        let loss = y.sum();
        tape.backward(&loss);
        assert_eq!(b.grad().unwrap().data, vec![2., 2., 2.]);
    }

    #[test]
    #[should_panic(expected = "add: shape mismatch [2] vs [3]")]
    fn mismatched_shapes_panic_with_op_name() {
        let tape = Tape::new();
        let a = tape.constant_vec(vec![2], vec![1., 2.]);
        let b = tape.constant_vec(vec![3], vec![1., 2., 3.]);
        let _ = a.add(&b);
    }

    #[test]
    fn matmul_small_case() {
        let tape = Tape::new();
        let a = tape.leaf(TensorData::new(vec![2, 2], vec![1., 2., 3., 4.]));
        let b = tape.leaf(TensorData::new(vec![2, 2], vec![5., 6., 7., 8.]));
        let c = a.matmul(&b);
        assert_eq!(c.data(), vec![19., 22., 43., 50.]);
        let loss = c.sum();
        tape.backward(&loss);
        assert_eq!(a.grad().unwrap().data, vec![11., 15., 11., 15.]);
        assert_eq!(b.grad().unwrap().data, vec![4., 4., 6., 6.]);
    }

    #[test]
    fn max_reduce_routes_gradient_to_argmax() {
        let tape = Tape::new();
        let x = tape.leaf(TensorData::new(vec![2, 3], vec![1., 5., 3., 9., 2., 4.]));
        let m = x.max_reduce(&[1]);
        assert_eq!(m.shape(), vec![2]);
        assert_eq!(m.data(), vec![5., 9.]);
        let loss = m.sum();
        tape.backward(&loss);
        assert_eq!(x.grad().unwrap().data, vec![0., 1., 0., 1., 0., 0.]);
    }

    #[test]
    fn max_reduce_multiple_axes() {
        let tape = Tape::new();
        let x = tape.constant_vec(vec![2, 2, 2], (0..8).map(|i| i as f32).collect());
        let m = x.max_reduce(&[1, 2]);
        assert_eq!(m.shape(), vec![2]);
        assert_eq!(m.data(), vec![3., 7.]);
    }

    #[test]
    fn permute_roundtrip() {
        let tape = Tape::new();
        let x = tape.leaf(TensorData::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]));
        let t = x.permute(&[1, 0]);
        assert_eq!(t.shape(), vec![3, 2]);
        assert_eq!(t.data(), vec![1., 4., 2., 5., 3., 6.]);
        let loss = t.mul(&t).sum();
        tape.backward(&loss);
        assert_eq!(x.grad().unwrap().data, vec![2., 4., 6., 8., 10., 12.]);
    }

    #[test]
    fn concat_and_split_gradients() {
        let tape = Tape::new();
        let a = tape.leaf(TensorData::new(vec![1, 2], vec![1., 2.]));
        let b = tape.leaf(TensorData::new(vec![1, 3], vec![3., 4., 5.]));
        let c = concat(&[a.clone(), b.clone()], 1);
        assert_eq!(c.shape(), vec![1, 5]);
        assert_eq!(c.data(), vec![1., 2., 3., 4., 5.]);
        let w = tape.constant_vec(vec![1, 5], vec![1., 10., 100., 1000., 10000.]);
        let loss = c.mul(&w).sum();
        tape.backward(&loss);
        assert_eq!(a.grad().unwrap().data, vec![1., 10.]);
        assert_eq!(b.grad().unwrap().data, vec![100., 1000., 10000.]);
    }

    #[test]
    fn index_select_scatters_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(TensorData::new(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]));
        let y = x.index_select(0, &[2, 0, 2]);
        assert_eq!(y.shape(), vec![3, 2]);
        assert_eq!(y.data(), vec![5., 6., 1., 2., 5., 6.]);
        let loss = y.sum();
        tape.backward(&loss);
        assert_eq!(x.grad().unwrap().data, vec![1., 1., 0., 0., 2., 2.]);
    }

    #[test]
    fn broadcast_to_and_back() {
        let tape = Tape::new();
        let x = tape.leaf(TensorData::new(vec![2, 1], vec![3., 4.]));
        let y = x.broadcast_to(vec![2, 3]);
        assert_eq!(y.data(), vec![3., 3., 3., 4., 4., 4.]);
        let loss = y.sum();
        tape.backward(&loss);
        assert_eq!(x.grad().unwrap().data, vec![3., 3.]);
    }
}
