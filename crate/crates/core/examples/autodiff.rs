//! Reverse-mode gradients of a two-layer expression, checked against
//! central differences.

use vgcrl::ndmath::{NdError, Tape, Tensor};

fn loss(x: &Tensor, w: &Tensor) -> Result<(f64, Vec<f64>), NdError> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone())?;
    let wv = tape.param(w)?;
    let h = tape.matmul(xv, wv)?;
    let h = tape.tanh(h);
    let sq = tape.square(h);
    let l = tape.mean(sq);
    let grads = tape.backward(l)?;
    Ok((tape.value(l).item(), grads.get(wv).unwrap_or_default().to_vec()))
}

fn main() -> Result<(), NdError> {
    let x = Tensor::matrix(3, 2, vec![0.5, -1.0, 1.5, 0.2, -0.3, 0.8])?;
    let w = Tensor::matrix(2, 2, vec![0.4, -0.7, 1.1, 0.3])?;
    let (value, analytic) = loss(&x, &w)?;
    println!("loss = {value:.6}");
    let h = 1e-6;
    for j in 0..w.len() {
        let mut plus = w.clone();
        plus.data_mut()[j] += h;
        let mut minus = w.clone();
        minus.data_mut()[j] -= h;
        let fd = (loss(&x, &plus)?.0 - loss(&x, &minus)?.0) / (2.0 * h);
        println!("dL/dw[{j}]  tape {:+.8}  finite-diff {fd:+.8}", analytic[j]);
    }
    Ok(())
}
