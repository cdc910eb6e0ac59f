//! Dense layer and LSTM cell.

use rand::Rng;

use super::tensor::{sigmoid, Tensor};

/// `y = W x + b`, weight `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(input: usize, output: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let bound = gain * (3.0 / input as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[output, input], bound, rng),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let n = self.input_dim();
        debug_assert_eq!(x.len(), n);
        self.weight
            .data
            .chunks(n)
            .zip(&self.bias.data)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        let n = self.input_dim();
        let mut dx = vec![0.0; n];
        for (o, &g) in dy.iter().enumerate() {
            grad.bias.data[o] += g;
            if g == 0.0 {
                continue;
            }
            let row = &self.weight.data[o * n..(o + 1) * n];
            let grow = &mut grad.weight.data[o * n..(o + 1) * n];
            for i in 0..n {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }
}

/// Single LSTM cell with gate order (input, forget, cell, output).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
}

/// Everything the backward pass needs from one cell step.
#[derive(Debug, Clone)]
pub struct LstmStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    pub c: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmCell {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data[hidden..2 * hidden].fill(1.0);
        Self {
            w_ih: Tensor::uniform(&[4 * hidden, input], bound, rng),
            w_hh: Tensor::uniform(&[4 * hidden, hidden], bound, rng),
            bias,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.shape[1]
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
        let hs = self.hidden();
        let ni = self.input_dim();
        let mut pre = self.bias.data.clone();
        for (r, p) in pre.iter_mut().enumerate() {
            let wi = &self.w_ih.data[r * ni..(r + 1) * ni];
            let wh = &self.w_hh.data[r * hs..(r + 1) * hs];
            *p += wi.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                + wh.iter().zip(h_prev).map(|(a, b)| a * b).sum::<f64>();
        }
        let i: Vec<f64> = pre[..hs].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = pre[hs..2 * hs].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = pre[2 * hs..3 * hs].iter().map(|v| v.tanh()).collect();
        let o: Vec<f64> = pre[3 * hs..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = (0..hs).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hs).map(|k| o[k] * tanh_c[k]).collect();
        LstmStep {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            g,
            o,
            c,
            tanh_c,
            h,
        }
    }

    /// Given `dL/dh_t` and `dL/dc_t` (from later steps), accumulates
    /// parameter gradients and returns `(dL/dx_t, dL/dh_{t-1}, dL/dc_{t-1})`.
    pub fn backward(
        &self,
        step: &LstmStep,
        dh: &[f64],
        dc_next: &[f64],
        grad: &mut LstmCell,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hs = self.hidden();
        let ni = self.input_dim();
        let mut dpre = vec![0.0; 4 * hs];
        let mut dc_prev = vec![0.0; hs];
        for k in 0..hs {
            let do_ = dh[k] * step.tanh_c[k];
            let dc = dh[k] * step.o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]) + dc_next[k];
            let di = dc * step.g[k];
            let df = dc * step.c_prev[k];
            let dg = dc * step.i[k];
            dc_prev[k] = dc * step.f[k];
            dpre[k] = di * step.i[k] * (1.0 - step.i[k]);
            dpre[hs + k] = df * step.f[k] * (1.0 - step.f[k]);
            dpre[2 * hs + k] = dg * (1.0 - step.g[k] * step.g[k]);
            dpre[3 * hs + k] = do_ * step.o[k] * (1.0 - step.o[k]);
        }
        let mut dx = vec![0.0; ni];
        let mut dh_prev = vec![0.0; hs];
        for (r, &d) in dpre.iter().enumerate() {
            grad.bias.data[r] += d;
            if d == 0.0 {
                continue;
            }
            let wi = &self.w_ih.data[r * ni..(r + 1) * ni];
            let gwi = &mut grad.w_ih.data[r * ni..(r + 1) * ni];
            for j in 0..ni {
                gwi[j] += d * step.x[j];
                dx[j] += d * wi[j];
            }
            let wh = &self.w_hh.data[r * hs..(r + 1) * hs];
            let gwh = &mut grad.w_hh.data[r * hs..(r + 1) * hs];
            for j in 0..hs {
                gwh[j] += d * step.h_prev[j];
                dh_prev[j] += d * wh[j];
            }
        }
        (dx, dh_prev, dc_prev)
    }
}
