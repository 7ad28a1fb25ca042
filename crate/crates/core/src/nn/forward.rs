use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};

use super::{NetworkParams, OutputHead, BN_EPS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch norm uses the statistics of the current batch.
    Train,
    /// Batch norm uses the running statistics.
    Eval,
}

#[derive(Clone, Debug)]
struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    mean: Array1<f64>,
    var: Array1<f64>,
    batch_stats: bool,
}

/// Intermediates recorded by [`forward`] for a later [`backward`].
#[derive(Clone, Debug)]
pub struct Tape {
    version: u64,
    /// Input to each hidden layer, then the input to the output layer.
    inputs: Vec<Array2<f64>>,
    /// Post-normalization pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
    bn: Vec<Option<BnCache>>,
    output: Array2<f64>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Per batch-norm layer (mean, biased variance) of the forward batch.
    pub fn batch_stats(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.bn.iter().flatten().filter(|c| c.batch_stats).map(|c| {
            (
                c.mean.as_slice().expect("contiguous"),
                c.var.as_slice().expect("contiguous"),
            )
        })
    }
}

/// Gradient of Σ outputs⊙output_gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Array2<f64>,
}

fn mat(values: &[f64], at: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &values[at..at + rows * cols]).expect("layout")
}

fn vec_view(values: &[f64], at: usize, len: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from(&values[at..at + len])
}

fn mat_mut(values: &mut [f64], at: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut values[at..at + rows * cols]).expect("layout")
}

fn vec_mut(values: &mut [f64], at: usize, len: usize) -> ArrayViewMut1<'_, f64> {
    ArrayViewMut1::from(&mut values[at..at + len])
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

pub fn forward(params: &NetworkParams, batch: ArrayView2<'_, f64>, mode: Mode) -> Result<(Array2<f64>, Tape)> {
    let spec = &params.spec;
    if batch.ncols() != spec.input_dim {
        return Err(Error::Dimension(format!(
            "network expects input width {}, got {}",
            spec.input_dim,
            batch.ncols()
        )));
    }
    let layout = spec.layout();
    let v = &params.values;
    let n = batch.nrows();
    let mut inputs = Vec::with_capacity(layout.hidden.len() + 1);
    let mut pre = Vec::with_capacity(layout.hidden.len());
    let mut bn = Vec::with_capacity(layout.hidden.len());
    let mut h = batch.to_owned();

    for l in &layout.hidden {
        let w = mat(v, l.w, l.out_dim, l.in_dim);
        let mut z = h.dot(&w.t());
        z += &vec_view(v, l.b, l.out_dim);

        let cache = match (l.bn, l.bn_slot) {
            (Some(at), Some(slot)) => {
                let batch_stats = mode == Mode::Train;
                let (mean, var) = if batch_stats {
                    let mean = z.mean_axis(Axis(0)).expect("nonempty batch");
                    let var = z
                        .map_axis(Axis(0), |col| {
                            let m = col.mean().unwrap_or(0.0);
                            col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64
                        });
                    (mean, var)
                } else {
                    let rs = &params.running[slot];
                    (Array1::from(rs.mean.clone()), Array1::from(rs.var.clone()))
                };
                let inv_std = var.mapv(|s| 1.0 / (s + BN_EPS).sqrt());
                let xhat = (&z - &mean) * &inv_std;
                let gamma = vec_view(v, at, l.out_dim);
                let beta = vec_view(v, at + l.out_dim, l.out_dim);
                z = &xhat * &gamma + beta;
                Some(BnCache {
                    xhat,
                    inv_std,
                    mean,
                    var,
                    batch_stats,
                })
            }
            _ => None,
        };

        let mut next = z.mapv(|x| x.max(0.0));
        if l.identity_skip(spec.residual) {
            next += &h;
        } else if let Some(at) = l.proj {
            next += &h.dot(&mat(v, at, l.out_dim, l.in_dim).t());
        }
        inputs.push(h);
        pre.push(z);
        bn.push(cache);
        h = next;
    }

    let o = layout.output;
    let mut out = h.dot(&mat(v, o.w, o.out_dim, o.in_dim).t());
    out += &vec_view(v, o.b, o.out_dim);
    if spec.output_head == OutputHead::Softmax {
        softmax_rows(&mut out);
    }
    inputs.push(h);
    let tape = Tape {
        version: params.version,
        inputs,
        pre,
        bn,
        output: out.clone(),
    };
    Ok((out, tape))
}

/// Single-row evaluation-mode forward pass.
pub fn forward_row(params: &NetworkParams, input: &[f64]) -> Result<Vec<f64>> {
    let batch = ArrayView2::from_shape((1, input.len()), input).expect("row");
    let (out, _) = forward(params, batch, Mode::Eval)?;
    Ok(out.into_raw_vec_and_offset().0)
}

pub fn backward(params: &NetworkParams, tape: &Tape, output_gradient: ArrayView2<'_, f64>) -> Result<Gradients> {
    if tape.version != params.version {
        return Err(Error::StaleTape {
            tape: tape.version,
            params: params.version,
        });
    }
    if output_gradient.dim() != tape.output.dim() {
        return Err(Error::Dimension(format!(
            "output gradient {:?} does not match outputs {:?}",
            output_gradient.dim(),
            tape.output.dim()
        )));
    }
    let spec = &params.spec;
    let layout = spec.layout();
    let v = &params.values;
    let mut grads = vec![0.0; layout.n_params];
    let n = output_gradient.nrows() as f64;

    let mut g = output_gradient.to_owned();
    if spec.output_head == OutputHead::Softmax {
        // d softmax: p ⊙ (g − Σ g⊙p)
        let p = &tape.output;
        for (mut gr, pr) in g.rows_mut().into_iter().zip(p.rows()) {
            let dot: f64 = gr.iter().zip(pr).map(|(a, b)| a * b).sum();
            Zip::from(&mut gr).and(&pr).for_each(|x, &pi| *x = pi * (*x - dot));
        }
    }

    let o = layout.output;
    let h_last = &tape.inputs[layout.hidden.len()];
    mat_mut(&mut grads, o.w, o.out_dim, o.in_dim).assign(&g.t().dot(h_last));
    vec_mut(&mut grads, o.b, o.out_dim).assign(&g.sum_axis(Axis(0)));
    let mut gh = g.dot(&mat(v, o.w, o.out_dim, o.in_dim));

    for (k, l) in layout.hidden.iter().enumerate().rev() {
        let x = &tape.inputs[k];
        let mut g_in = if l.identity_skip(spec.residual) {
            gh.clone()
        } else if let Some(at) = l.proj {
            mat_mut(&mut grads, at, l.out_dim, l.in_dim).assign(&gh.t().dot(x));
            gh.dot(&mat(v, at, l.out_dim, l.in_dim))
        } else {
            Array2::zeros(x.raw_dim())
        };

        let mut gz = gh;
        Zip::from(&mut gz).and(&tape.pre[k]).for_each(|g, &y| {
            if y <= 0.0 {
                *g = 0.0;
            }
        });

        if let (Some(at), Some(c)) = (l.bn, &tape.bn[k]) {
            let gamma = vec_view(v, at, l.out_dim).to_owned();
            vec_mut(&mut grads, at, l.out_dim).assign(&(&gz * &c.xhat).sum_axis(Axis(0)));
            vec_mut(&mut grads, at + l.out_dim, l.out_dim).assign(&gz.sum_axis(Axis(0)));
            let gxhat = &gz * &gamma;
            gz = if c.batch_stats {
                let sum_g = gxhat.sum_axis(Axis(0));
                let sum_gx = (&gxhat * &c.xhat).sum_axis(Axis(0));
                let mut out = &gxhat * n - &sum_g - &(&c.xhat * &sum_gx);
                out *= &(&c.inv_std / n);
                out
            } else {
                &gxhat * &c.inv_std
            };
        }

        mat_mut(&mut grads, l.w, l.out_dim, l.in_dim).assign(&gz.t().dot(x));
        vec_mut(&mut grads, l.b, l.out_dim).assign(&gz.sum_axis(Axis(0)));
        g_in += &gz.dot(&mat(v, l.w, l.out_dim, l.in_dim));
        gh = g_in;
    }

    Ok(Gradients {
        params: grads,
        input: gh,
    })
}
