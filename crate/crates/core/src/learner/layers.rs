//! Layer kernels with hand-written backward passes.
//!
//! Sequences travel between layers as one time-major matrix: rows
//! `t*batch .. (t+1)*batch` hold step `t`.

use ndarray::{linalg::general_mat_mul, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Seq {
    pub steps: usize,
    pub batch: usize,
    pub data: Array2<f64>,
}

impl Seq {
    pub fn new(steps: usize, batch: usize, data: Array2<f64>) -> Result<Self> {
        if data.nrows() != steps * batch {
            return Err(Error::Shape(format!("{} rows for {steps} steps x {batch}", data.nrows())));
        }
        Ok(Self { steps, batch, data })
    }

    pub fn step(&self, t: usize) -> ArrayView2<'_, f64> {
        self.data.slice(s![t * self.batch..(t + 1) * self.batch, ..])
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
    Softmax,
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
            Activation::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "relu" => Activation::Relu,
            "softmax" => Activation::Softmax,
            "linear" => Activation::Linear,
            _ => return Err(Error::Parse(format!("unknown activation {s:?}"))),
        })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Uniform on `[-limit, limit]` with `limit = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Result<Array2<f64>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Shape("Glorot fans must be positive".into()));
    }
    let limit = glorot_limit(fan_in, fan_out);
    Ok(Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit)))
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub c: Array1<f64>,
    pub h: Array1<f64>,
    /// Gate activations of the last step, order `[i, f, g, o]`.
    pub gates: Array1<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self { c: Array1::zeros(hidden), h: Array1::zeros(hidden), gates: Array1::zeros(4 * hidden) }
    }
}

/// Gate nonlinearities and cell update for one sample. `z` holds the
/// pre-activations on entry and the gate activations on exit.
#[inline]
fn cell(z: &mut [f64], c_prev: &[f64], c: &mut [f64], tanh_c: &mut [f64], h: &mut [f64]) {
    let hn = c.len();
    for j in 0..hn {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[hn + j]);
        let g = z[2 * hn + j].tanh();
        let o = sigmoid(z[3 * hn + j]);
        z[j] = i;
        z[hn + j] = f;
        z[2 * hn + j] = g;
        z[3 * hn + j] = o;
        c[j] = c_prev[j] * f + g * i;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    pub return_sequences: bool,
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub b: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    x: Array2<f64>,
    gates: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
    steps: usize,
    batch: usize,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, return_sequences: bool, rng: &mut R) -> Result<Self> {
        Ok(Self {
            input,
            hidden,
            return_sequences,
            w_x: glorot_init(input, 4 * hidden, rng)?,
            w_h: glorot_init(hidden, 4 * hidden, rng)?,
            b: Array2::zeros((1, 4 * hidden)),
        })
    }

    /// One step for a single sample.
    pub fn step(&self, state: &LstmState, x: &Array1<f64>) -> Result<LstmState> {
        if x.len() != self.input || state.h.len() != self.hidden || state.c.len() != self.hidden {
            return Err(Error::Shape(format!(
                "lstm_step expects input {} and state {}, got {} and {}",
                self.input,
                self.hidden,
                x.len(),
                state.h.len()
            )));
        }
        let mut z = x.dot(&self.w_x) + state.h.dot(&self.w_h) + self.b.row(0);
        let mut next = LstmState::zeros(self.hidden);
        let mut tanh_c = vec![0.0; self.hidden];
        cell(
            z.as_slice_mut().expect("contiguous"),
            state.c.as_slice().expect("contiguous"),
            next.c.as_slice_mut().expect("contiguous"),
            &mut tanh_c,
            next.h.as_slice_mut().expect("contiguous"),
        );
        next.gates = z;
        Ok(next)
    }

    pub fn forward(&self, x: &Seq) -> Result<(Seq, LstmCache)> {
        if x.width() != self.input {
            return Err(Error::Shape(format!("lstm expects width {}, got {}", self.input, x.width())));
        }
        let (steps, batch, hn) = (x.steps, x.batch, self.hidden);
        let mut gates = x.data.dot(&self.w_x);
        gates += &self.b;
        let mut c = Array2::zeros((steps * batch, hn));
        let mut tanh_c = Array2::zeros((steps * batch, hn));
        let mut h = Array2::zeros((steps * batch, hn));
        for t in 0..steps {
            let rows = t * batch..(t + 1) * batch;
            if t > 0 {
                let h_prev = h.slice(s![(t - 1) * batch..t * batch, ..]);
                let mut z = gates.slice_mut(s![rows.clone(), ..]);
                general_mat_mul(1.0, &h_prev, &self.w_h, 1.0, &mut z);
            }
            let g_s = gates.as_slice_mut().expect("contiguous");
            let (c_before, c_now) = c.as_slice_mut().expect("contiguous").split_at_mut(rows.start * hn);
            let tc_s = tanh_c.as_slice_mut().expect("contiguous");
            let h_s = h.as_slice_mut().expect("contiguous");
            let zero = vec![0.0; hn];
            for r in 0..batch {
                let gr = rows.start + r;
                let c_prev = if t > 0 { &c_before[(gr - batch) * hn..(gr - batch + 1) * hn] } else { &zero[..] };
                cell(
                    &mut g_s[gr * 4 * hn..(gr + 1) * 4 * hn],
                    c_prev,
                    &mut c_now[r * hn..(r + 1) * hn],
                    &mut tc_s[gr * hn..(gr + 1) * hn],
                    &mut h_s[gr * hn..(gr + 1) * hn],
                );
            }
        }
        let out = if self.return_sequences {
            Seq::new(steps, batch, h.clone())?
        } else {
            Seq::new(1, batch, h.slice(s![(steps - 1) * batch.., ..]).to_owned())?
        };
        Ok((out, LstmCache { x: x.data.clone(), gates, c, tanh_c, h, steps, batch }))
    }

    /// Backpropagation through time. Gradients accumulate into `grads`
    /// (`[w_x, w_h, b]`); the input gradient is returned.
    pub fn backward(&self, cache: &LstmCache, grad_out: &Seq, grads: &mut [Array2<f64>]) -> Seq {
        let (steps, batch, hn) = (cache.steps, cache.batch, self.hidden);
        let mut dz = Array2::zeros((steps * batch, 4 * hn));
        let mut dh_next = Array2::<f64>::zeros((batch, hn));
        let mut dc_next = Array2::<f64>::zeros((batch, hn));
        for t in (0..steps).rev() {
            let mut dh = dh_next.clone();
            if self.return_sequences {
                dh += &grad_out.step(t);
            } else if t == steps - 1 {
                dh += &grad_out.step(0);
            }
            let base = t * batch;
            let g_s = cache.gates.as_slice().expect("contiguous");
            let tc_s = cache.tanh_c.as_slice().expect("contiguous");
            let c_s = cache.c.as_slice().expect("contiguous");
            let dz_s = dz.as_slice_mut().expect("contiguous");
            let dh_s = dh.as_slice().expect("contiguous");
            let dcn = dc_next.as_slice_mut().expect("contiguous");
            for r in 0..batch {
                let gr = base + r;
                let g = &g_s[gr * 4 * hn..(gr + 1) * 4 * hn];
                let tc = &tc_s[gr * hn..(gr + 1) * hn];
                let dzr = &mut dz_s[gr * 4 * hn..(gr + 1) * 4 * hn];
                for j in 0..hn {
                    let (i, f, gg, o) = (g[j], g[hn + j], g[2 * hn + j], g[3 * hn + j]);
                    let c_prev = if t > 0 { c_s[(gr - batch) * hn + j] } else { 0.0 };
                    let dhj = dh_s[r * hn + j];
                    let dc = dcn[r * hn + j] + dhj * o * (1.0 - tc[j] * tc[j]);
                    dzr[j] = dc * gg * i * (1.0 - i);
                    dzr[hn + j] = dc * c_prev * f * (1.0 - f);
                    dzr[2 * hn + j] = dc * i * (1.0 - gg * gg);
                    dzr[3 * hn + j] = dhj * tc[j] * o * (1.0 - o);
                    dcn[r * hn + j] = dc * f;
                }
            }
            let dz_t = dz.slice(s![base..base + batch, ..]);
            dh_next = dz_t.dot(&self.w_h.t());
            if t > 0 {
                let h_prev = cache.h.slice(s![base - batch..base, ..]);
                general_mat_mul(1.0, &h_prev.t(), &dz_t, 1.0, &mut grads[1]);
            }
        }
        general_mat_mul(1.0, &cache.x.t(), &dz, 1.0, &mut grads[0]);
        grads[2] += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
        Seq { steps, batch, data: dz.dot(&self.w_x.t()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    x: Array2<f64>,
    out: Array2<f64>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Result<Self> {
        Ok(Self { input, output, activation, w: glorot_init(input, output, rng)?, b: Array2::zeros((1, output)) })
    }

    pub fn forward(&self, x: &Seq) -> Result<(Seq, DenseCache)> {
        if x.width() != self.input {
            return Err(Error::Shape(format!("dense expects width {}, got {}", self.input, x.width())));
        }
        let mut z = x.data.dot(&self.w);
        z += &self.b;
        match self.activation {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
            Activation::Softmax => softmax_rows(&mut z),
            Activation::Linear => {}
        }
        let out = Seq { steps: x.steps, batch: x.batch, data: z };
        let cache = DenseCache { x: x.data.clone(), out: out.data.clone() };
        Ok((out, cache))
    }

    /// For a softmax layer `grad_out` must already be the gradient with
    /// respect to the pre-activation (the fused cross-entropy gradient).
    pub fn backward(&self, cache: &DenseCache, grad_out: &Seq, grads: &mut [Array2<f64>]) -> Seq {
        let mut dz = grad_out.data.clone();
        match self.activation {
            Activation::Relu => Zip::from(&mut dz).and(&cache.out).for_each(|d, &y| {
                if y <= 0.0 {
                    *d = 0.0
                }
            }),
            Activation::Tanh => Zip::from(&mut dz).and(&cache.out).for_each(|d, &y| *d *= 1.0 - y * y),
            Activation::Sigmoid => Zip::from(&mut dz).and(&cache.out).for_each(|d, &y| *d *= y * (1.0 - y)),
            Activation::Softmax | Activation::Linear => {}
        }
        general_mat_mul(1.0, &cache.x.t(), &dz, 1.0, &mut grads[0]);
        grads[1] += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
        Seq { steps: grad_out.steps, batch: grad_out.batch, data: dz.dot(&self.w.t()) }
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` during
/// training so inference is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self { rate })
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &Seq, training: bool, rng: &mut R) -> (Seq, Option<Array2<f64>>) {
        if !training || self.rate == 0.0 {
            return (x.clone(), None);
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask = Array2::from_shape_simple_fn(x.data.dim(), || if rng.random::<f64>() < self.rate { 0.0 } else { keep });
        let data = &x.data * &mask;
        (Seq { steps: x.steps, batch: x.batch, data }, Some(mask))
    }

    pub fn backward(&self, mask: Option<&Array2<f64>>, grad_out: &Seq) -> Seq {
        match mask {
            Some(m) => Seq { steps: grad_out.steps, batch: grad_out.batch, data: &grad_out.data * m },
            None => grad_out.clone(),
        }
    }
}
