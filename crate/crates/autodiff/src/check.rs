//! Finite-difference gradient checking.
//!
//! The oracle here never touches [`crate::Tape::backward`]: it re-evaluates a
//! closure under central perturbations, so downstream tests can compare
//! analytic gradients against an independent estimate.

use crate::tensor::Tensor;

/// Central finite differences of a scalar function of several tensors.
///
/// `f` is evaluated `2 * total_elements` times with one element nudged by
/// `±step` each time.
pub fn finite_difference<F>(mut f: F, params: &[Tensor], step: f64) -> Vec<Tensor>
where
    F: FnMut(&[Tensor]) -> f64,
{
    let mut work: Vec<Tensor> = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let n = params[pi].numel();
        let mut g = vec![0.0; n];
        for i in 0..n {
            let orig = work[pi].data()[i];
            work[pi].data_mut()[i] = orig + step;
            let fp = f(&work);
            work[pi].data_mut()[i] = orig - step;
            let fm = f(&work);
            work[pi].data_mut()[i] = orig;
            g[i] = (fp - fm) / (2.0 * step);
        }
        grads.push(Tensor::new(params[pi].shape().to_vec(), g).expect("grad shape"));
    }
    grads
}

/// Worst relative error between analytic and numeric gradients.
///
/// Entries where both magnitudes fall below `abs_floor` count as exact: the
/// finite-difference estimate is dominated by roundoff there.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor], abs_floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (&av, &nv) in a.data().iter().zip(n.data()) {
            let diff = (av - nv).abs();
            if diff <= abs_floor {
                continue;
            }
            let denom = av.abs().max(nv.abs()).max(abs_floor);
            worst = worst.max(diff / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let p = [Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap()];
        let g = finite_difference(|ps| ps[0].data().iter().map(|x| x * x).sum(), &p, 1e-6);
        for (got, want) in g[0].data().iter().zip([2.0, 4.0, 6.0]) {
            assert!((got - want).abs() < 1e-6);
        }
    }
}
