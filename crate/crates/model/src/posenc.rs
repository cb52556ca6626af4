//! Sinusoidal positional encodings for text positions, image grid
//! coordinates, and anchor boxes.

use grounder_autodiff::{Tape, Tensor, Var};

use crate::error::Result;

const TEMPERATURE: f64 = 10000.0;

fn frequencies(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 1.0 / TEMPERATURE.powf(i as f64 / n.max(1) as f64))
        .collect()
}

/// Fill `out` with interleaved sin/cos of `value` over `dims` slots.
fn write_sincos(out: &mut [f64], value: f64, freqs: &[f64]) {
    for (i, &f) in freqs.iter().enumerate() {
        out[2 * i] = (value * f).sin();
        out[2 * i + 1] = (value * f).cos();
    }
}

/// 1-D encoding for token positions: `[n, d]`.
pub fn text_positions(n: usize, d: usize) -> Tensor {
    let freqs = frequencies(d / 2);
    let mut data = vec![0.0; n * d];
    for p in 0..n {
        write_sincos(&mut data[p * d..p * d + 2 * freqs.len()], p as f64, &freqs);
    }
    Tensor::new(vec![n, d], data).expect("posenc shape")
}

/// 2-D encoding for normalized grid points: `[n, d]`, half the channels for
/// x and half for y. Coordinates are pre-scaled by 2*pi.
pub fn grid_positions(points: &[(f64, f64)], d: usize) -> Tensor {
    let half = d / 2;
    let freqs = frequencies(half / 2);
    let mut data = vec![0.0; points.len() * d];
    let two_pi = std::f64::consts::TAU;
    for (i, &(x, y)) in points.iter().enumerate() {
        let row = &mut data[i * d..(i + 1) * d];
        write_sincos(&mut row[..half], x * two_pi, &freqs);
        write_sincos(&mut row[half..], y * two_pi, &freqs);
    }
    Tensor::new(vec![points.len(), d], data).expect("posenc shape")
}

/// Differentiable encoding of anchor boxes `[k, 4]` (cx, cy, w, h) into
/// `[k, d]`; gradients flow back into the anchors.
pub fn box_positions(tape: &mut Tape, boxes: Var, d: usize) -> Result<Var> {
    let per_coord = d / 4;
    let freqs = frequencies(per_coord / 2);
    let two_pi = std::f64::consts::TAU;
    let mut parts = Vec::with_capacity(4 * freqs.len() * 2);
    for coord in 0..4 {
        let col = tape.slice_cols(boxes, coord, 1)?;
        for &f in &freqs {
            let scaled = tape.scale(col, f * two_pi)?;
            parts.push(tape.sin(scaled)?);
            parts.push(tape.cos(scaled)?);
        }
    }
    Ok(tape.concat(&parts, 1)?)
}
