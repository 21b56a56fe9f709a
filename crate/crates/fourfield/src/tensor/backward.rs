//! Reverse-mode differentiation.
//!
//! Gradients are accumulated in reverse topological order and emitted as
//! ordinary graph nodes, so a gradient tensor can itself be differentiated
//! by running `backward` again over the extended graph.

use super::{GradientMap, Op, Tensor};
use crate::error::{Error, Result};

impl Tensor {
    /// Gradients of this scalar with respect to `leaves`, as detached
    /// values. Leaves not reachable from the loss get zero gradients.
    pub fn backward(&self, leaves: &[&Tensor]) -> Result<GradientMap> {
        let grads = self.backward_tensors(leaves)?;
        let mut map = GradientMap::new();
        for (leaf, grad) in leaves.iter().zip(&grads) {
            let values = grad.values();
            if !values.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { op: "backward" });
            }
            map.push(leaf.id(), values);
        }
        Ok(map)
    }

    /// Gradients as live graph tensors (differentiable in turn).
    pub fn backward_tensors(&self, leaves: &[&Tensor]) -> Result<Vec<Tensor>> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        let g = self.graph().clone();
        let snapshot = g.node_count();

        // Reverse topological order over the needs-grad subgraph.
        let order = g.with_inner(|inner| {
            let mut order: Vec<usize> = Vec::new();
            let mut state = vec![0u8; snapshot]; // 0 unseen, 1 open, 2 done
            let mut stack: Vec<(usize, bool)> = vec![(self.id(), false)];
            while let Some((id, expanded)) = stack.pop() {
                if expanded {
                    state[id] = 2;
                    order.push(id);
                    continue;
                }
                if state[id] != 0 {
                    continue;
                }
                state[id] = 1;
                stack.push((id, true));
                for p in inner.nodes[id].op.parents() {
                    if state[p] == 0 && inner.nodes[p].needs_grad {
                        stack.push((p, false));
                    }
                }
            }
            order
        });

        let mut grad_of: Vec<Option<Tensor>> = vec![None; snapshot];
        grad_of[self.id()] = Some(g.ones(&[1])?.reshape(self.shape())?);

        let accumulate =
            |slot: &mut Option<Tensor>, contrib: Tensor| -> Result<()> {
                *slot = Some(match slot.take() {
                    Some(prev) => prev.add(&contrib)?,
                    None => contrib,
                });
                Ok(())
            };

        for &id in order.iter().rev() {
            let Some(grad) = grad_of[id].clone() else {
                continue;
            };
            let (op, shape_of) = g.with_inner(|inner| {
                let op = inner.nodes[id].op.clone();
                let shapes: Vec<Vec<usize>> = op
                    .parents()
                    .iter()
                    .map(|&p| inner.nodes[p].shape.clone())
                    .collect();
                (op, shapes)
            });
            let needs: Vec<bool> = g.with_inner(|inner| {
                op.parents()
                    .iter()
                    .map(|&p| inner.nodes[p].needs_grad)
                    .collect()
            });

            match op {
                Op::Leaf { .. } => {}
                Op::Add(a, b) => {
                    if needs[0] {
                        accumulate(&mut grad_of[a], grad.sum_to(&shape_of[0])?)?;
                    }
                    if needs[1] {
                        accumulate(&mut grad_of[b], grad.sum_to(&shape_of[1])?)?;
                    }
                }
                Op::Sub(a, b) => {
                    if needs[0] {
                        accumulate(&mut grad_of[a], grad.sum_to(&shape_of[0])?)?;
                    }
                    if needs[1] {
                        accumulate(&mut grad_of[b], grad.neg()?.sum_to(&shape_of[1])?)?;
                    }
                }
                Op::Mul(a, b) => {
                    if needs[0] {
                        let gb = grad.mul(&g.handle(b))?;
                        accumulate(&mut grad_of[a], gb.sum_to(&shape_of[0])?)?;
                    }
                    if needs[1] {
                        let ga = grad.mul(&g.handle(a))?;
                        accumulate(&mut grad_of[b], ga.sum_to(&shape_of[1])?)?;
                    }
                }
                Op::Div(a, b) => {
                    let bt = g.handle(b);
                    if needs[0] {
                        accumulate(&mut grad_of[a], grad.div(&bt)?.sum_to(&shape_of[0])?)?;
                    }
                    if needs[1] {
                        // d(a/b)/db = -a / b^2 = -out / b
                        let out = g.handle(id);
                        let gb = grad.mul(&out)?.div(&bt)?.neg()?;
                        accumulate(&mut grad_of[b], gb.sum_to(&shape_of[1])?)?;
                    }
                }
                Op::Neg(a) => accumulate(&mut grad_of[a], grad.neg()?)?,
                Op::Scale(a, c) => accumulate(&mut grad_of[a], grad.scale(c)?)?,
                Op::AddScalar(a, _) => accumulate(&mut grad_of[a], grad)?,
                Op::Exp(a) => {
                    accumulate(&mut grad_of[a], grad.mul(&g.handle(id))?)?;
                }
                Op::Log(a) => {
                    accumulate(&mut grad_of[a], grad.div(&g.handle(a))?)?;
                }
                Op::Sqrt(a) => {
                    let out2 = g.handle(id).scale(2.0)?;
                    accumulate(&mut grad_of[a], grad.div(&out2)?)?;
                }
                Op::Sigmoid(a) => {
                    let out = g.handle(id);
                    let one_minus = out.neg()?.add_scalar(1.0)?;
                    accumulate(&mut grad_of[a], grad.mul(&out)?.mul(&one_minus)?)?;
                }
                Op::Softplus(a) => {
                    let s = g.handle(a).sigmoid()?;
                    accumulate(&mut grad_of[a], grad.mul(&s)?)?;
                }
                Op::LeakyRelu(a, slope) => {
                    // Derivative is a value-dependent constant (0 a.e. for
                    // the second derivative), so the mask enters as data.
                    let mask: Vec<f64> = g.with_inner(|inner| {
                        inner.nodes[a]
                            .values
                            .iter()
                            .map(|&v| if v > 0.0 { 1.0 } else { slope })
                            .collect()
                    });
                    let mask = g.constant(&shape_of[0], &mask)?;
                    accumulate(&mut grad_of[a], grad.mul(&mask)?)?;
                }
                Op::Sin(a) => {
                    accumulate(&mut grad_of[a], grad.mul(&g.handle(a).cos()?)?)?;
                }
                Op::Cos(a) => {
                    accumulate(&mut grad_of[a], grad.mul(&g.handle(a).sin()?)?.neg()?)?;
                }
                Op::Matmul(a, b) => {
                    if needs[0] {
                        let ga = grad.matmul(&g.handle(b).transpose()?)?;
                        accumulate(&mut grad_of[a], ga.sum_to(&shape_of[0])?)?;
                    }
                    if needs[1] {
                        let gb = g.handle(a).transpose()?.matmul(&grad)?;
                        accumulate(&mut grad_of[b], gb.sum_to(&shape_of[1])?)?;
                    }
                }
                Op::Transpose(a) => accumulate(&mut grad_of[a], grad.transpose()?)?,
                Op::Reshape(a) => accumulate(&mut grad_of[a], grad.reshape(&shape_of[0])?)?,
                Op::BroadcastTo(a) => {
                    accumulate(&mut grad_of[a], grad.sum_to(&shape_of[0])?)?;
                }
                Op::SumAxes(a, _) => {
                    accumulate(&mut grad_of[a], grad.broadcast_to(&shape_of[0])?)?;
                }
                Op::Concat(parts, axis) => {
                    let mut offset = 0usize;
                    for (i, &p) in parts.iter().enumerate() {
                        let len = shape_of[i][axis];
                        if needs[i] {
                            let ranges: Vec<(usize, usize)> = grad
                                .shape()
                                .iter()
                                .enumerate()
                                .map(|(d, &e)| {
                                    if d == axis {
                                        (offset, offset + len)
                                    } else {
                                        (0, e)
                                    }
                                })
                                .collect();
                            accumulate(&mut grad_of[p], grad.slice(&ranges)?)?;
                        }
                        offset += len;
                    }
                }
                Op::Slice(a, ranges) => {
                    accumulate(&mut grad_of[a], grad.pad_slice(&ranges, &shape_of[0])?)?;
                }
                Op::PadSlice(a, ranges) => {
                    accumulate(&mut grad_of[a], grad.slice(&ranges)?)?;
                }
                Op::Im2Col(a, spec) => {
                    accumulate(&mut grad_of[a], grad.col2im(spec)?)?;
                }
                Op::Col2Im(a, spec) => {
                    accumulate(
                        &mut grad_of[a],
                        grad.im2col(spec.kh, spec.kw, spec.stride, spec.pad, spec.pad_mode)?,
                    )?;
                }
                Op::Upsample2x(a) => {
                    accumulate(&mut grad_of[a], grad.downsample2x_sum()?)?;
                }
                Op::Downsample2xSum(a) => {
                    accumulate(&mut grad_of[a], grad.upsample2x()?)?;
                }
                Op::FlipLast(a) => accumulate(&mut grad_of[a], grad.flip_last()?)?,
            }
        }

        leaves
            .iter()
            .map(|leaf| match grad_of.get(leaf.id()).and_then(|o| o.clone()) {
                Some(t) => Ok(t),
                None => g.zeros(leaf.shape()),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::Graph;

    #[test]
    fn grad_of_sum_is_ones() {
        let g = Graph::new();
        let x = g.leaf(&[3], &[1.0, -2.0, 5.0], true).unwrap();
        let loss = x.sum_all().unwrap();
        let grads = loss.backward(&[&x]).unwrap();
        assert_eq!(grads.get(&x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn grad_of_square() {
        let g = Graph::new();
        let x = g.leaf(&[2], &[1.0, 2.0], true).unwrap();
        let loss = x.mul(&x).unwrap().sum_all().unwrap();
        let grads = loss.backward(&[&x]).unwrap();
        assert_eq!(grads.get(&x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn unreachable_leaf_gets_zeros() {
        let g = Graph::new();
        let x = g.leaf(&[2], &[1.0, 2.0], true).unwrap();
        let y = g.leaf(&[3], &[1.0, 2.0, 3.0], true).unwrap();
        let loss = x.sum_all().unwrap();
        let grads = loss.backward(&[&x, &y]).unwrap();
        assert_eq!(grads.get(&y).unwrap(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let g = Graph::new();
        let x = g.leaf(&[2], &[1.0, 2.0], true).unwrap();
        assert!(matches!(
            x.backward(&[&x]).unwrap_err(),
            crate::error::Error::NonScalarLoss(_)
        ));
    }

    #[test]
    fn matmul_grad_matches_hand_computation() {
        // loss = sum(A·B); dA = ones·Bᵀ, dB = Aᵀ·ones
        let g = Graph::new();
        let a = g.leaf(&[2, 2], &[1.0, 2.0, 3.0, 4.0], true).unwrap();
        let b = g.leaf(&[2, 2], &[5.0, 6.0, 7.0, 8.0], true).unwrap();
        let loss = a.matmul(&b).unwrap().sum_all().unwrap();
        let grads = loss.backward(&[&a, &b]).unwrap();
        assert_eq!(grads.get(&a).unwrap(), &[11.0, 15.0, 11.0, 15.0]);
        assert_eq!(grads.get(&b).unwrap(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn broadcast_backward_sums_over_tiled_axes() {
        let g = Graph::new();
        let b = g.leaf(&[3], &[0.5, 0.5, 0.5], true).unwrap();
        let x = g.constant(&[2, 3], &[1.0; 6]).unwrap();
        let loss = x.add(&b).unwrap().sum_all().unwrap();
        let grads = loss.backward(&[&b]).unwrap();
        assert_eq!(grads.get(&b).unwrap(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn second_order_through_gradient_graph() {
        // f(x) = sum(x^3); g = 3x^2; h = sum(g) differentiated again -> 6x.
        let g = Graph::new();
        let x = g.leaf(&[2], &[1.0, 2.0], true).unwrap();
        let cube = x.mul(&x).unwrap().mul(&x).unwrap();
        let loss = cube.sum_all().unwrap();
        let grad_x = loss.backward_tensors(&[&x]).unwrap().remove(0);
        assert_eq!(grad_x.values(), vec![3.0, 12.0]);
        let second = grad_x.sum_all().unwrap().backward(&[&x]).unwrap();
        assert_eq!(second.get(&x).unwrap(), &[6.0, 12.0]);
    }
}
