//! Policy and value MLPs stored in one flat parameter vector.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::PpoError;
use crate::seeding::rng_from_seed;

pub const HIDDEN: usize = 64;
/// The value trunk always reads this many input features.
pub const VALUE_INPUT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub name: &'static str,
    pub out: usize,
    pub inp: usize,
    pub offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.out * self.inp
    }

    fn bias(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.out * self.inp;
        start..start + self.out
    }

    fn len(&self) -> usize {
        self.out * (self.inp + 1)
    }
}

const P1: usize = 0;
const P2: usize = 1;
const V1: usize = 2;
const V2: usize = 3;
const PA: usize = 4;
const VH: usize = 5;

/// Layer shapes in storage order.
pub fn layer_shapes(obs_dim: usize, action_num: usize) -> [LayerShape; 6] {
    let dims = [
        ("policy_net.0", HIDDEN, obs_dim),
        ("policy_net.2", HIDDEN, HIDDEN),
        ("value_net.0", HIDDEN, VALUE_INPUT),
        ("value_net.2", HIDDEN, HIDDEN),
        ("action_out", action_num, HIDDEN),
        ("value_out", 1, HIDDEN),
    ];
    let mut offset = 0;
    dims.map(|(name, out, inp)| {
        let l = LayerShape { name, out, inp, offset };
        offset += l.len();
        l
    })
}

/// Trainable parameters for an observation size and action count.
pub fn param_count(obs_dim: usize, action_num: usize) -> usize {
    layer_shapes(obs_dim, action_num).iter().map(LayerShape::len).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub obs_dim: usize,
    pub action_num: usize,
    pub data: Vec<f64>,
}

/// Rows of a random matrix made orthonormal (or its columns, when tall),
/// scaled by `gain`.
fn orthogonal(rng: &mut impl Rng, rows: usize, cols: usize, gain: f64) -> Vec<f64> {
    let (n, m) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        for u in &vs {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|a| *a /= norm);
        vs.push(v);
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = gain * if rows <= cols { vs[r][c] } else { vs[c][r] };
        }
    }
    out
}

/// Orthogonal weights (gain √2 in the trunks, 0.01 on the action head, 1 on
/// the value head) and zero biases.
pub fn init_params(obs_dim: usize, action_num: usize, seed: u64) -> Result<MlpParams, PpoError> {
    if obs_dim == 0 || action_num == 0 {
        return Err(PpoError::InvalidDims { obs_dim, action_num });
    }
    let mut rng = rng_from_seed(seed);
    let shapes = layer_shapes(obs_dim, action_num);
    let mut data = vec![0.0; param_count(obs_dim, action_num)];
    for (i, l) in shapes.iter().enumerate() {
        let gain = match i {
            PA => 0.01,
            VH => 1.0,
            _ => 2f64.sqrt(),
        };
        data[l.weights()].copy_from_slice(&orthogonal(&mut rng, l.out, l.inp, gain));
    }
    Ok(MlpParams {
        obs_dim,
        action_num,
        data,
    })
}

impl MlpParams {
    pub fn zeros(obs_dim: usize, action_num: usize) -> Self {
        MlpParams {
            obs_dim,
            action_num,
            data: vec![0.0; param_count(obs_dim, action_num)],
        }
    }

    pub fn count(&self) -> usize {
        self.data.len()
    }

    pub fn shapes(&self) -> [LayerShape; 6] {
        layer_shapes(self.obs_dim, self.action_num)
    }

    fn w(&self, l: &LayerShape) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((l.out, l.inp), &self.data[l.weights()]).expect("layer shape")
    }

    fn b(&self, l: &LayerShape) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[l.bias()])
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    x: Array2<f64>,
    xv: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
    g1: Array2<f64>,
    g2: Array2<f64>,
    pub logits: Array2<f64>,
    pub values: Array1<f64>,
}

fn dense(x: &ArrayView2<'_, f64>, w: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    x.dot(&w.t()) + &b
}

/// The value trunk's input: the first two features, zero-padded.
fn value_input(x: &ArrayView2<'_, f64>) -> Array2<f64> {
    let k = x.ncols().min(VALUE_INPUT);
    let mut xv = Array2::zeros((x.nrows(), VALUE_INPUT));
    xv.slice_mut(s![.., ..k]).assign(&x.slice(s![.., ..k]));
    xv
}

pub fn forward_cached(params: &MlpParams, obs: ArrayView2<'_, f64>) -> Result<Cache, PpoError> {
    if obs.ncols() != params.obs_dim {
        return Err(PpoError::ShapeMismatch {
            expected: params.obs_dim,
            found: obs.ncols(),
        });
    }
    let sh = params.shapes();
    let h1 = dense(&obs, params.w(&sh[P1]), params.b(&sh[P1])).mapv_into(f64::tanh);
    let h2 = dense(&h1.view(), params.w(&sh[P2]), params.b(&sh[P2])).mapv_into(f64::tanh);
    let logits = dense(&h2.view(), params.w(&sh[PA]), params.b(&sh[PA]));
    let xv = value_input(&obs);
    let g1 = dense(&xv.view(), params.w(&sh[V1]), params.b(&sh[V1])).mapv_into(f64::tanh);
    let g2 = dense(&g1.view(), params.w(&sh[V2]), params.b(&sh[V2])).mapv_into(f64::tanh);
    let values = dense(&g2.view(), params.w(&sh[VH]), params.b(&sh[VH])).column(0).to_owned();
    Ok(Cache {
        x: obs.to_owned(),
        xv,
        h1,
        h2,
        g1,
        g2,
        logits,
        values,
    })
}

/// Action logits and state values for a batch of observations (one per row).
pub fn forward(params: &MlpParams, obs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>), PpoError> {
    let c = forward_cached(params, obs)?;
    Ok((c.logits, c.values))
}

/// Accumulate the weight and bias gradients of one dense layer; returns the
/// gradient with respect to its input.
fn dense_backward(
    params: &MlpParams,
    grads: &mut [f64],
    l: &LayerShape,
    input: &Array2<f64>,
    dz: &Array2<f64>,
) -> Array2<f64> {
    let dw = dz.t().dot(input);
    for (g, d) in grads[l.weights()].iter_mut().zip(dw.iter()) {
        *g += d;
    }
    let db = dz.sum_axis(Axis(0));
    for (g, d) in grads[l.bias()].iter_mut().zip(db.iter()) {
        *g += d;
    }
    dz.dot(&params.w(l))
}

fn tanh_backward(dh: Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    dh * &h.mapv(|v| 1.0 - v * v)
}

/// Gradient of a scalar loss given its derivatives with respect to the
/// logits and values.
pub fn backward(params: &MlpParams, cache: &Cache, dlogits: &Array2<f64>, dvalues: &Array1<f64>) -> Vec<f64> {
    let sh = params.shapes();
    let mut grads = vec![0.0; params.count()];
    let dh2 = dense_backward(params, &mut grads, &sh[PA], &cache.h2, dlogits);
    let dz2 = tanh_backward(dh2, &cache.h2);
    let dh1 = dense_backward(params, &mut grads, &sh[P2], &cache.h1, &dz2);
    let dz1 = tanh_backward(dh1, &cache.h1);
    dense_backward(params, &mut grads, &sh[P1], &cache.x, &dz1);

    let dv = dvalues.view().insert_axis(Axis(1)).to_owned();
    let dg2 = dense_backward(params, &mut grads, &sh[VH], &cache.g2, &dv);
    let dy2 = tanh_backward(dg2, &cache.g2);
    let dg1 = dense_backward(params, &mut grads, &sh[V2], &cache.g1, &dy2);
    let dy1 = tanh_backward(dg1, &cache.g1);
    dense_backward(params, &mut grads, &sh[V1], &cache.xv, &dy1);
    grads
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(param_count(2, 3), 8964);
        assert_eq!(param_count(4, 2), 9027);
        let p = init_params(2, 3, 1).unwrap();
        assert_eq!(p.count(), 8964);
        assert_eq!(p, init_params(2, 3, 1).unwrap());
        assert_ne!(p, init_params(2, 3, 2).unwrap());
    }

    #[test]
    fn orthogonal_rows() {
        let mut rng = rng_from_seed(3);
        let w = orthogonal(&mut rng, 3, 64, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..64).map(|k| w[i * 64 + k] * w[j * 64 + k]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let p = MlpParams::zeros(4, 2);
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) as f64);
        let (logits, values) = forward(&p, x.view()).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
        assert!(values.iter().all(|&v| v == 0.0));
        assert!(forward(&p, Array2::zeros((1, 3)).view()).is_err());
    }
}
