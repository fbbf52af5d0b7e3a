//! Dense tensors, activations, cross-entropy and the Adam optimiser shared by
//! the trainable models.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major matrix; vectors are `n x 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} tensor",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Glorot-uniform initialisation.
    pub fn xavier<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
        Self { rows, cols, data }
    }

    pub fn same_shape(&self, o: &Tensor) -> bool {
        self.rows == o.rows && self.cols == o.cols
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = self * x + bias`.
    pub fn affine(&self, x: &[f64], bias: &Tensor) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| bias.data[r] + dot(self.row(r), x)).collect()
    }

    /// `out += self^T * g`.
    pub fn add_transpose_mul(&self, g: &[f64], out: &mut [f64]) {
        debug_assert_eq!(g.len(), self.rows);
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * gr;
            }
        }
    }

    /// `self += g x^T`.
    pub fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, xv) in row.iter_mut().zip(x) {
                *w += gr * xv;
            }
        }
    }

    pub fn add_vec(&mut self, g: &[f64]) {
        for (w, v) in self.data.iter_mut().zip(g) {
            *w += v;
        }
    }

    pub fn add_scaled(&mut self, o: &Tensor, scale: f64) {
        for (w, v) in self.data.iter_mut().zip(&o.data) {
            *w += scale * v;
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy (natural log) and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    (lse - logits[target], grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: applied directly to the parameters, not through the moments.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, shapes: &[&Tensor]) -> Self {
        Self {
            cfg,
            m: shapes.iter().map(|t| vec![0.0; t.data.len()]).collect(),
            v: shapes.iter().map(|t| vec![0.0; t.data.len()]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[&Tensor]) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.data.len() {
                let gj = g.data[j];
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let update = (m[j] / bc1) / ((v[j] / bc2).sqrt() + c.eps);
                p.data[j] -= c.lr * (update + c.weight_decay * p.data[j]);
            }
        }
    }
}

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            w: Tensor::zeros(out_dim, in_dim),
            b: Tensor::zeros(out_dim, 1),
        }
    }

    pub fn xavier<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        Self {
            w: Tensor::xavier(out_dim, in_dim, rng),
            b: Tensor::zeros(out_dim, 1),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.w.affine(x, &self.b)
    }

    /// Accumulates parameter gradients into `grad` and, when given, the
    /// input gradient into `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: Option<&mut [f64]>) {
        grad.w.add_outer(dy, x);
        grad.b.add_vec(dy);
        if let Some(dx) = dx {
            self.w.add_transpose_mul(dy, dx);
        }
    }
}

/// Single-gate recurrent cell:
/// `u = sigmoid(Wu [x; h] + bu)`, `c = tanh(Wc [x; h] + bc)`,
/// `h' = (1 - u) * h + u * c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedCell {
    pub update: Linear,
    pub candidate: Linear,
}

#[derive(Debug, Clone)]
pub struct CellTrace {
    z: Vec<f64>,
    u: Vec<f64>,
    c: Vec<f64>,
    h_prev: Vec<f64>,
    pub h: Vec<f64>,
}

impl GatedCell {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            update: Linear::zeros(hidden_dim, input_dim + hidden_dim),
            candidate: Linear::zeros(hidden_dim, input_dim + hidden_dim),
        }
    }

    pub fn xavier<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        Self {
            update: Linear::xavier(hidden_dim, input_dim + hidden_dim, rng),
            candidate: Linear::xavier(hidden_dim, input_dim + hidden_dim, rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.update.out_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.update.in_dim() - self.hidden_dim()
    }

    pub fn step(&self, x: &[f64], h: &[f64]) -> CellTrace {
        let mut z = Vec::with_capacity(x.len() + h.len());
        z.extend_from_slice(x);
        z.extend_from_slice(h);
        let u: Vec<f64> = self.update.forward(&z).into_iter().map(sigmoid).collect();
        let c: Vec<f64> = self.candidate.forward(&z).into_iter().map(f64::tanh).collect();
        let h_new = (0..h.len()).map(|k| (1.0 - u[k]) * h[k] + u[k] * c[k]).collect();
        CellTrace {
            z,
            u,
            c,
            h_prev: h.to_vec(),
            h: h_new,
        }
    }

    /// Returns `(dx, dh_prev)` for an upstream gradient `dh` on the new state.
    pub fn backward(&self, tr: &CellTrace, dh: &[f64], grad: &mut GatedCell) -> (Vec<f64>, Vec<f64>) {
        let n = dh.len();
        let mut da_u = vec![0.0; n];
        let mut da_c = vec![0.0; n];
        let mut dh_prev = vec![0.0; n];
        for k in 0..n {
            let (u, c) = (tr.u[k], tr.c[k]);
            da_u[k] = dh[k] * (c - tr.h_prev[k]) * u * (1.0 - u);
            da_c[k] = dh[k] * u * (1.0 - c * c);
            dh_prev[k] = dh[k] * (1.0 - u);
        }
        let mut dz = vec![0.0; tr.z.len()];
        self.update.backward(&tr.z, &da_u, &mut grad.update, Some(&mut dz));
        self.candidate
            .backward(&tr.z, &da_c, &mut grad.candidate, Some(&mut dz));
        let split = tr.z.len() - n;
        for (d, v) in dh_prev.iter_mut().zip(&dz[split..]) {
            *d += v;
        }
        dz.truncate(split);
        (dz, dh_prev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_cross_entropy() {
        for n in [2usize, 5, 13] {
            let (l, g) = cross_entropy(&vec![0.0; n], 1);
            assert!((l - (n as f64).ln()).abs() < 1e-12);
            assert!((g.iter().sum::<f64>()).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[101.0, 102.0, 103.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_minimises_quadratic() {
        let mut p = Tensor::from_vec(2, 1, vec![3.0, -2.0]).unwrap();
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = Adam::new(cfg, &[&p]);
        for _ in 0..500 {
            let g = Tensor::from_vec(2, 1, p.data.iter().map(|x| 2.0 * x).collect()).unwrap();
            opt.step(vec![&mut p], &[&g]);
        }
        assert!(p.data.iter().all(|x| x.abs() < 1e-2));
    }
}
