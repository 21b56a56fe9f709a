//! Build a small computation graph, take gradients, and validate them
//! against central finite differences.
//!
//! Run with: cargo run --release --example autodiff_basics

use fourfield::tensor::{grad_check, Graph};

fn main() -> fourfield::Result<()> {
    // Forward evaluation is eager: every op computes immediately.
    let g = Graph::new();
    let x = g.leaf(&[2, 2], &[1.0, 2.0, 3.0, 4.0], true)?;
    let w = g.leaf(&[2, 1], &[0.5, -0.25], true)?;
    let y = x.matmul(&w)?.leaky_relu(0.2)?;
    println!("y = {:?}  (shape {:?})", y.values(), y.shape());

    // Reverse mode: gradients of a scalar loss with respect to leaves.
    let loss = y.mul(&y)?.sum_all()?;
    let grads = loss.backward(&[&x, &w])?;
    println!("dL/dx = {:?}", grads.get(&x).unwrap());
    println!("dL/dw = {:?}", grads.get(&w).unwrap());

    // Gradients are themselves graph tensors, so second-order terms are
    // one more backward pass away.
    let grad_w = loss.backward_tensors(&[&w])?.remove(0);
    let second = grad_w.sum_all()?.backward(&[&w])?;
    println!("d/dw sum(dL/dw) = {:?}", second.get(&w).unwrap());

    // grad_check compares reverse-mode gradients against central
    // differences on fresh graphs, excluding coordinates that straddle
    // an activation kink.
    let report = grad_check(
        |g, x| {
            let w = g.constant(&[4, 3], &[0.3; 12])?;
            x.reshape(&[1, 4])?
                .matmul(&w)?
                .leaky_relu(0.2)?
                .exp()?
                .sum_all()
        },
        &[4],
        &[0.1, -0.4, 0.77, 0.0],
        1e-5,
    )?;
    println!(
        "grad_check: max rel err {:.3e} over {} coords ({} excluded at kinks)",
        report.max_rel_err, report.checked, report.excluded
    );
    Ok(())
}
