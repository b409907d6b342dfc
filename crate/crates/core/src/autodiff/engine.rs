//! Batched second-order jet propagation through an MLP and the matching
//! reverse sweep.
//!
//! A batch of `P` points is laid out column-wise. Each layer holds a row-major
//! matrix with one row per neuron and `C * P` columns, where the `C` channel
//! blocks are: the value, one first-derivative block per differentiated input,
//! and one diagonal second-derivative block per differentiated input. Affine
//! layers are then plain GEMMs over all blocks at once; the bias only enters
//! the value block.

use crate::network::{Activation, InputMap, MlpSpec};

/// Which input derivatives are propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    Value,
    First,
    Second,
}

impl Order {
    pub fn channels(self, n_deriv: usize) -> usize {
        match self {
            Order::Value => 1,
            Order::First => 1 + n_deriv,
            Order::Second => 1 + 2 * n_deriv,
        }
    }
}

/// Per-worker scratch holding the forward tape. Not shareable across threads.
#[derive(Debug, Default)]
pub struct Workspace {
    /// Layer activations, `acts[0]` being the input jets and the last the output.
    acts: Vec<Vec<f64>>,
    /// Hidden pre-activations (all channel blocks).
    pre: Vec<Vec<f64>>,
    /// Hidden activation derivatives σ', σ'', σ''' on the value block.
    sig: Vec<[Vec<f64>; 3]>,
    adj_a: Vec<f64>,
    adj_z: Vec<f64>,
    points: usize,
    order: Option<Order>,
    n_deriv: usize,
}

impl Workspace {
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: callers pass slices whose extents cover the strided m×k, k×n and
    // m×n views; the assertions below guard the last element of each.
    debug_assert!(a.len() >= ((m - 1) as isize * rsa + (k - 1) as isize * csa + 1) as usize);
    debug_assert!(b.len() >= ((k - 1) as isize * rsb + (n - 1) as isize * csb + 1) as usize);
    debug_assert!(c.len() >= ((m - 1) as isize * rsc + (n - 1) as isize * csc + 1) as usize);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

fn resize(v: &mut Vec<f64>, n: usize) {
    v.clear();
    v.resize(n, 0.0);
}

/// Propagates jets for `n_points` points stored row-major in `points`
/// (`n_points * input_dim` values). Derivatives are taken with respect to the
/// first `n_deriv` inputs, in the caller's (unmapped) coordinates.
///
/// Returns the output matrix: `output_dim` rows of `channels * n_points`.
#[allow(clippy::too_many_arguments)]
pub fn forward<'w>(
    spec: &MlpSpec,
    params: &[f64],
    map: &InputMap,
    points: &[f64],
    n_points: usize,
    order: Order,
    n_deriv: usize,
    ws: &'w mut Workspace,
) -> &'w [f64] {
    let sizes = spec.layer_sizes();
    let n_in = sizes[0];
    let n_layers = sizes.len();
    debug_assert_eq!(points.len(), n_points * n_in);
    debug_assert!(n_deriv <= n_in);
    let n_deriv = if order == Order::Value { 0 } else { n_deriv };
    let ch = order.channels(n_deriv);
    let cols = ch * n_points;
    let p = n_points;

    ws.acts.resize_with(n_layers, Vec::new);
    ws.pre.resize_with(n_layers.saturating_sub(2), Vec::new);
    ws.sig.resize_with(n_layers.saturating_sub(2), Default::default);
    ws.points = n_points;
    ws.order = Some(order);
    ws.n_deriv = n_deriv;

    // Input jets.
    {
        let a0 = &mut ws.acts[0];
        resize(a0, n_in * cols);
        for k in 0..n_in {
            let row = &mut a0[k * cols..(k + 1) * cols];
            for (j, slot) in row[..p].iter_mut().enumerate() {
                *slot = map.apply(k, points[j * n_in + k]);
            }
            if k < n_deriv {
                let blk = (1 + k) * p;
                row[blk..blk + p].fill(map.scale[k]);
            }
        }
    }

    let act = spec.activation();
    for l in 0..n_layers - 1 {
        let (n_prev, n_next) = (sizes[l], sizes[l + 1]);
        let (w_off, b_off) = spec.layer_offsets(l);
        let w = &params[w_off..b_off];
        let b = &params[b_off..b_off + n_next];
        let hidden = l + 1 < n_layers - 1;

        let (lower, upper) = ws.acts.split_at_mut(l + 1);
        let a_prev = &lower[l];
        let z: &mut Vec<f64> = if hidden { &mut ws.pre[l] } else { &mut upper[0] };
        resize(z, n_next * cols);
        gemm(
            n_next,
            n_prev,
            cols,
            w,
            n_prev as isize,
            1,
            a_prev,
            cols as isize,
            1,
            0.0,
            z,
            cols as isize,
            1,
        );
        for i in 0..n_next {
            for v in &mut z[i * cols..i * cols + p] {
                *v += b[i];
            }
        }
        if hidden {
            let z = &ws.pre[l];
            let a = &mut upper[0];
            resize(a, n_next * cols);
            let sig = &mut ws.sig[l];
            for s in sig.iter_mut() {
                resize(s, n_next * p);
            }
            apply_activation(act, z, a, sig, n_next, p, order, n_deriv);
        }
    }
    ws.acts.last().unwrap()
}

#[allow(clippy::too_many_arguments)]
fn apply_activation(
    act: Activation,
    z: &[f64],
    a: &mut [f64],
    sig: &mut [Vec<f64>; 3],
    rows: usize,
    p: usize,
    order: Order,
    nd: usize,
) {
    let cols = order.channels(nd) * p;
    let [s1, s2, s3] = sig;
    for i in 0..rows {
        let zr = &z[i * cols..(i + 1) * cols];
        let ar = &mut a[i * cols..(i + 1) * cols];
        let (s1r, s2r, s3r) = (
            &mut s1[i * p..(i + 1) * p],
            &mut s2[i * p..(i + 1) * p],
            &mut s3[i * p..(i + 1) * p],
        );
        match order {
            Order::Value => {
                for j in 0..p {
                    let d = act.derivatives(zr[j]);
                    ar[j] = d[0];
                    s1r[j] = d[1];
                }
            }
            _ => {
                for j in 0..p {
                    let d = act.derivatives(zr[j]);
                    ar[j] = d[0];
                    s1r[j] = d[1];
                    s2r[j] = d[2];
                    s3r[j] = d[3];
                }
                for k in 0..nd {
                    let o = (1 + k) * p;
                    for j in 0..p {
                        ar[o + j] = s1r[j] * zr[o + j];
                    }
                }
                if order == Order::Second {
                    for k in 0..nd {
                        let o1 = (1 + k) * p;
                        let o2 = (1 + nd + k) * p;
                        for j in 0..p {
                            let zd = zr[o1 + j];
                            ar[o2 + j] = s2r[j] * zd * zd + s1r[j] * zr[o2 + j];
                        }
                    }
                }
            }
        }
    }
}

/// Reverse sweep over the tape left by the last [`forward`] call.
///
/// `out_adj` is the adjoint of the output matrix (same layout). The parameter
/// gradient is accumulated into `grad`.
pub fn backward(spec: &MlpSpec, params: &[f64], ws: &mut Workspace, out_adj: &[f64], grad: &mut [f64]) {
    let sizes = spec.layer_sizes();
    let n_layers = sizes.len();
    let order = ws.order.expect("backward called before forward");
    let nd = ws.n_deriv;
    let p = ws.points;
    let cols = order.channels(nd) * p;
    debug_assert_eq!(out_adj.len(), sizes[n_layers - 1] * cols);

    let mut adj_z = std::mem::take(&mut ws.adj_z);
    let mut adj_a = std::mem::take(&mut ws.adj_a);
    adj_z.clear();
    adj_z.extend_from_slice(out_adj);

    for l in (0..n_layers - 1).rev() {
        let (n_prev, n_next) = (sizes[l], sizes[l + 1]);
        let (w_off, b_off) = spec.layer_offsets(l);
        let a_prev = &ws.acts[l];
        // dW += adjZ · A_prevᵀ
        gemm(
            n_next,
            cols,
            n_prev,
            &adj_z,
            cols as isize,
            1,
            a_prev,
            1,
            cols as isize,
            1.0,
            &mut grad[w_off..b_off],
            n_prev as isize,
            1,
        );
        for i in 0..n_next {
            grad[b_off + i] += adj_z[i * cols..i * cols + p].iter().sum::<f64>();
        }
        if l == 0 {
            break;
        }
        // adjA = Wᵀ · adjZ
        resize(&mut adj_a, n_prev * cols);
        gemm(
            n_prev,
            n_next,
            cols,
            &params[w_off..b_off],
            1,
            n_prev as isize,
            &adj_z,
            cols as isize,
            1,
            0.0,
            &mut adj_a,
            cols as isize,
            1,
        );
        resize(&mut adj_z, n_prev * cols);
        activation_adjoint(&ws.pre[l - 1], &ws.sig[l - 1], &adj_a, &mut adj_z, n_prev, p, order, nd);
    }
    ws.adj_z = adj_z;
    ws.adj_a = adj_a;
}

#[allow(clippy::too_many_arguments)]
fn activation_adjoint(
    z: &[f64],
    sig: &[Vec<f64>; 3],
    adj_a: &[f64],
    adj_z: &mut [f64],
    rows: usize,
    p: usize,
    order: Order,
    nd: usize,
) {
    let cols = order.channels(nd) * p;
    let [s1, s2, s3] = sig;
    for i in 0..rows {
        let zr = &z[i * cols..(i + 1) * cols];
        let ar = &adj_a[i * cols..(i + 1) * cols];
        let out = &mut adj_z[i * cols..(i + 1) * cols];
        let (s1r, s2r, s3r) = (&s1[i * p..(i + 1) * p], &s2[i * p..(i + 1) * p], &s3[i * p..(i + 1) * p]);
        for j in 0..p {
            out[j] = ar[j] * s1r[j];
        }
        if order == Order::Value {
            continue;
        }
        for k in 0..nd {
            let o1 = (1 + k) * p;
            for j in 0..p {
                let ad = ar[o1 + j];
                out[o1 + j] = ad * s1r[j];
                out[j] += ad * s2r[j] * zr[o1 + j];
            }
        }
        if order == Order::Second {
            for k in 0..nd {
                let o1 = (1 + k) * p;
                let o2 = (1 + nd + k) * p;
                for j in 0..p {
                    let add = ar[o2 + j];
                    let zd = zr[o1 + j];
                    out[o2 + j] = add * s1r[j];
                    out[o1 + j] += 2.0 * add * s2r[j] * zd;
                    out[j] += add * (s3r[j] * zd * zd + s2r[j] * zr[o2 + j]);
                }
            }
        }
    }
}

/// Reads one output jet component from an output matrix.
#[inline]
pub fn component(out: &[f64], cols: usize, n_points: usize, channel: usize, block: usize, point: usize) -> f64 {
    out[channel * cols + block * n_points + point]
}
