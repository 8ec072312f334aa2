//! Differentiable operators.
//!
//! Layout is row-major throughout. Image-like tensors are `[N, C, H, W]` for
//! `conv2d`; feature tables used by the fusion stage are `[rows, channels]`.

use super::linalg::{matmul, matmul_nt, matmul_tn, transpose};
use super::{numel, Tensor};
use crate::error::{Error, Result};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::invalid_shape(op, format!("operands have shapes {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_op(
        "add",
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(|g, _, _| vec![Some(g.to_vec()), Some(g.to_vec())]),
    ))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    Ok(Tensor::from_op(
        "sub",
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(|g, _, _| vec![Some(g.to_vec()), Some(g.iter().map(|x| -x).collect())]),
    ))
}

/// Elementwise product.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Ok(Tensor::from_op(
        "mul",
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(|g, inputs, _| {
            let (a, b) = (inputs[0].data(), inputs[1].data());
            vec![Some(g.iter().zip(b).map(|(g, y)| g * y).collect()), Some(g.iter().zip(a).map(|(g, x)| g * x).collect())]
        }),
    ))
}

pub fn scale(a: &Tensor, factor: f64) -> Tensor {
    let data = a.data().iter().map(|x| x * factor).collect();
    Tensor::from_op(
        "scale",
        a.shape().to_vec(),
        data,
        vec![a.clone()],
        Box::new(move |g, _, _| vec![Some(g.iter().map(|x| x * factor).collect())]),
    )
}

pub fn sum(a: &Tensor) -> Tensor {
    let total = a.data().iter().sum();
    let n = a.numel();
    Tensor::from_op("sum", Vec::new(), vec![total], vec![a.clone()], Box::new(move |g, _, _| vec![Some(vec![g[0]; n])]))
}

pub fn mean(a: &Tensor) -> Tensor {
    let n = a.numel().max(1);
    scale(&sum(a), 1.0 / n as f64)
}

pub fn reshape(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if numel(shape) != a.numel() {
        return Err(Error::shape("reshape", "element count", a.numel(), numel(shape)));
    }
    Ok(Tensor::from_op("reshape", shape.to_vec(), a.data().to_vec(), vec![a.clone()], Box::new(|g, _, _| vec![Some(g.to_vec())])))
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn permute_data(data: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..data.len() {
        let off: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        out.push(data[off]);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    (out_shape, out)
}

/// Reorders axes: output axis `i` is input axis `axes[i]`.
pub fn permute(a: &Tensor, axes: &[usize]) -> Result<Tensor> {
    let mut sorted = axes.to_vec();
    sorted.sort_unstable();
    if sorted != (0..a.ndim()).collect::<Vec<_>>() {
        return Err(Error::invalid_shape("permute", format!("{axes:?} is not a permutation of {} axes", a.ndim())));
    }
    let (out_shape, data) = permute_data(a.data(), a.shape(), axes);
    let mut inverse = vec![0; axes.len()];
    for (i, &ax) in axes.iter().enumerate() {
        inverse[ax] = i;
    }
    let shape_for_grad = out_shape.clone();
    Ok(Tensor::from_op(
        "permute",
        out_shape,
        data,
        vec![a.clone()],
        Box::new(move |g, _, _| vec![Some(permute_data(g, &shape_for_grad, &inverse).1)]),
    ))
}

/// Concatenates along `axis`; every other extent must agree.
pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| Error::invalid_shape("concat", "no parts given"))?;
    let nd = first.ndim();
    if axis >= nd {
        return Err(Error::invalid_shape("concat", format!("axis {axis} out of range for rank {nd}")));
    }
    for p in parts {
        if p.ndim() != nd {
            return Err(Error::shape("concat", "rank", nd, p.ndim()));
        }
        for d in (0..nd).filter(|&d| d != axis) {
            if p.shape()[d] != first.shape()[d] {
                return Err(Error::shape("concat", format!("axis {d}"), first.shape()[d], p.shape()[d]));
            }
        }
    }
    if parts.len() == 1 {
        return Ok(first.clone());
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let widths: Vec<usize> = parts.iter().map(|p| p.shape()[axis] * inner).collect();
    let total_width: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(outer * total_width);
    for o in 0..outer {
        for (p, &w) in parts.iter().zip(&widths) {
            data.extend_from_slice(&p.data()[o * w..(o + 1) * w]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
    Ok(Tensor::from_op(
        "concat",
        shape,
        data,
        parts.to_vec(),
        Box::new(move |g, inputs, _| {
            let mut grads: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(w * outer)).collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gp, &w) in grads.iter_mut().zip(&widths) {
                    gp.extend_from_slice(&g[off..off + w]);
                    off += w;
                }
            }
            inputs.iter().zip(grads).map(|(t, gp)| t.requires_grad().then_some(gp)).collect()
        }),
    ))
}

/// Channel concatenation for `[N, C, H, W]` tensors.
pub fn concat_channels(parts: &[Tensor]) -> Result<Tensor> {
    concat(parts, 1)
}

/// Concatenation along the trailing axis.
pub fn concat_last(parts: &[Tensor]) -> Result<Tensor> {
    let nd = parts.first().map(Tensor::ndim).unwrap_or(1);
    concat(parts, nd.saturating_sub(1))
}

/// The slice `start..start + len` along `axis`.
pub fn narrow(a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= a.ndim() || start + len > a.shape()[axis] {
        return Err(Error::invalid_shape("narrow", format!("range {start}..{} on axis {axis} of {:?}", start + len, a.shape())));
    }
    let outer: usize = a.shape()[..axis].iter().product();
    let inner: usize = a.shape()[axis + 1..].iter().product();
    let full = a.shape()[axis] * inner;
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = o * full + start * inner;
        data.extend_from_slice(&a.data()[base..base + len * inner]);
    }
    let mut shape = a.shape().to_vec();
    shape[axis] = len;
    let total = a.numel();
    Ok(Tensor::from_op(
        "narrow",
        shape,
        data,
        vec![a.clone()],
        Box::new(move |g, _, _| {
            let mut dx = vec![0.0; total];
            for o in 0..outer {
                let base = o * full + start * inner;
                dx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(dx)]
        }),
    ))
}

/// Splits along `axis` into consecutive pieces of the given sizes.
pub fn split(a: &Tensor, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor>> {
    let total: usize = sizes.iter().sum();
    if axis >= a.ndim() || total != a.shape()[axis] {
        return Err(Error::invalid_shape("split", format!("sizes {sizes:?} do not cover axis {axis} of {:?}", a.shape())));
    }
    let mut start = 0;
    sizes
        .iter()
        .map(|&len| {
            let t = narrow(a, axis, start, len);
            start += len;
            t
        })
        .collect()
}

/// Selects rows of a `[rows, D]` table: output row `k` is `table[index[k]]`.
pub fn gather_rows(table: &Tensor, index: &[usize]) -> Result<Tensor> {
    if table.ndim() != 2 {
        return Err(Error::invalid_shape("gather_rows", format!("expected a 2-D table, got {:?}", table.shape())));
    }
    let (rows, d) = (table.shape()[0], table.shape()[1]);
    if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
        return Err(Error::invalid_shape("gather_rows", format!("row {bad} out of range for {rows} rows")));
    }
    let mut data = Vec::with_capacity(index.len() * d);
    for &i in index {
        data.extend_from_slice(&table.data()[i * d..(i + 1) * d]);
    }
    let index = index.to_vec();
    Ok(Tensor::from_op(
        "gather_rows",
        vec![index.len(), d],
        data,
        vec![table.clone()],
        Box::new(move |g, _, _| {
            let mut dt = vec![0.0; rows * d];
            for (k, &i) in index.iter().enumerate() {
                for (acc, x) in dt[i * d..(i + 1) * d].iter_mut().zip(&g[k * d..(k + 1) * d]) {
                    *acc += x;
                }
            }
            vec![Some(dt)]
        }),
    ))
}

/// Affine map over the trailing axis: `x · Wᵀ + b` with `W` of shape `[D_out, D_in]`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if weight.ndim() != 2 {
        return Err(Error::invalid_shape("linear", format!("weight must be 2-D, got {:?}", weight.shape())));
    }
    let (d_out, d_in) = (weight.shape()[0], weight.shape()[1]);
    let got = x.shape().last().copied().unwrap_or(0);
    if got != d_in {
        return Err(Error::shape("linear", "trailing input axis", d_in, got));
    }
    if bias.shape() != [d_out] {
        return Err(Error::shape("linear", "bias length", d_out, bias.numel()));
    }
    let rows = x.numel() / d_in.max(1);
    let mut data = matmul_nt(x.data(), weight.data(), rows, d_in, d_out);
    for row in data.chunks_mut(d_out.max(1)) {
        for (o, b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("non-scalar input") = d_out;
    Ok(Tensor::from_op(
        "linear",
        shape,
        data,
        vec![x.clone(), weight.clone(), bias.clone()],
        Box::new(move |g, inputs, _| {
            let (x, w) = (&inputs[0], &inputs[1]);
            let dx = x.requires_grad().then(|| matmul(g, w.data(), rows, d_out, d_in));
            let dw = w.requires_grad().then(|| matmul_tn(g, x.data(), rows, d_out, d_in));
            let db = inputs[2].requires_grad().then(|| {
                let mut db = vec![0.0; d_out];
                for row in g.chunks(d_out) {
                    for (acc, v) in db.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                db
            });
            vec![dx, dw, db]
        }),
    ))
}

/// `max(0, x)`; the subgradient at 0 is 0.
pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::from_op(
        "relu",
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(|g, inputs, _| {
            vec![Some(g.iter().zip(inputs[0].data()).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect())]
        }),
    )
}

struct ConvGeom {
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
}

impl ConvGeom {
    fn im2col(&self, img: &[f64]) -> Vec<f64> {
        let (k, hw_out) = (self.k, self.h_out * self.w_out);
        let mut cols = vec![0.0; self.c_in * k * k * hw_out];
        for c in 0..self.c_in {
            let plane = &img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = ((c * k + ki) * k + kj) * hw_out;
                    for oi in 0..self.h_out {
                        let ii = (oi + ki) as isize - self.pad as isize;
                        if ii < 0 || ii >= self.h as isize {
                            continue;
                        }
                        let src = &plane[ii as usize * self.w..(ii as usize + 1) * self.w];
                        let dst = &mut cols[row + oi * self.w_out..row + (oi + 1) * self.w_out];
                        for (oj, d) in dst.iter_mut().enumerate() {
                            let jj = (oj + kj) as isize - self.pad as isize;
                            if jj >= 0 && jj < self.w as isize {
                                *d = src[jj as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], img: &mut [f64]) {
        let (k, hw_out) = (self.k, self.h_out * self.w_out);
        for c in 0..self.c_in {
            let plane = &mut img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = ((c * k + ki) * k + kj) * hw_out;
                    for oi in 0..self.h_out {
                        let ii = (oi + ki) as isize - self.pad as isize;
                        if ii < 0 || ii >= self.h as isize {
                            continue;
                        }
                        for oj in 0..self.w_out {
                            let jj = (oj + kj) as isize - self.pad as isize;
                            if jj >= 0 && jj < self.w as isize {
                                plane[ii as usize * self.w + jj as usize] += cols[row + oi * self.w_out + oj];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 cross-correlation with symmetric zero padding.
///
/// `input: [N, C_in, H, W]`, `kernel: [C_out, C_in, k, k]` with `k` odd,
/// `bias: [C_out]`. Output extents are `H + 2·padding − k + 1`.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor, padding: usize) -> Result<Tensor> {
    if input.ndim() != 4 {
        return Err(Error::invalid_shape("conv2d", format!("input must be [N,C,H,W], got {:?}", input.shape())));
    }
    if kernel.ndim() != 4 {
        return Err(Error::invalid_shape("conv2d", format!("kernel must be [C_out,C_in,k,k], got {:?}", kernel.shape())));
    }
    let (n, c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    let (c_out, kc, k, k2) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2], kernel.shape()[3]);
    if kc != c_in {
        return Err(Error::shape("conv2d", "input channels (axis 1)", kc, c_in));
    }
    if k != k2 {
        return Err(Error::shape("conv2d", "kernel width (axis 3)", k, k2));
    }
    if k % 2 == 0 {
        return Err(Error::invalid_shape("conv2d", format!("kernel size {k} must be odd")));
    }
    if bias.shape() != [c_out] {
        return Err(Error::shape("conv2d", "bias length", c_out, bias.numel()));
    }
    if h + 2 * padding < k || w + 2 * padding < k {
        return Err(Error::invalid_shape("conv2d", format!("kernel {k} larger than padded input {h}x{w}")));
    }
    let geom = ConvGeom { c_in, h, w, k, pad: padding, h_out: h + 2 * padding + 1 - k, w_out: w + 2 * padding + 1 - k };
    let hw_out = geom.h_out * geom.w_out;
    let ckk = c_in * k * k;
    let in_stride = c_in * h * w;
    let mut data = Vec::with_capacity(n * c_out * hw_out);
    for b in 0..n {
        let cols = geom.im2col(&input.data()[b * in_stride..(b + 1) * in_stride]);
        let mut out = matmul(kernel.data(), &cols, c_out, ckk, hw_out);
        for (co, row) in out.chunks_mut(hw_out).enumerate() {
            let bv = bias.data()[co];
            row.iter_mut().for_each(|v| *v += bv);
        }
        data.extend(out);
    }
    let shape = vec![n, c_out, geom.h_out, geom.w_out];
    Ok(Tensor::from_op(
        "conv2d",
        shape,
        data,
        vec![input.clone(), kernel.clone(), bias.clone()],
        Box::new(move |g, inputs, _| {
            let (x, wt, bt) = (&inputs[0], &inputs[1], &inputs[2]);
            let mut dx = x.requires_grad().then(|| vec![0.0; x.numel()]);
            let mut dw = wt.requires_grad().then(|| vec![0.0; wt.numel()]);
            let mut db = bt.requires_grad().then(|| vec![0.0; c_out]);
            let out_stride = c_out * hw_out;
            for b in 0..n {
                let gb = &g[b * out_stride..(b + 1) * out_stride];
                if let Some(db) = db.as_mut() {
                    for (co, row) in gb.chunks(hw_out).enumerate() {
                        db[co] += row.iter().sum::<f64>();
                    }
                }
                if let Some(dw) = dw.as_mut() {
                    let cols = geom.im2col(&x.data()[b * in_stride..(b + 1) * in_stride]);
                    let part = matmul_nt(gb, &cols, c_out, hw_out, ckk);
                    dw.iter_mut().zip(&part).for_each(|(a, p)| *a += p);
                }
                if let Some(dx) = dx.as_mut() {
                    let dcols = matmul_tn(wt.data(), gb, c_out, ckk, hw_out);
                    geom.col2im(&dcols, &mut dx[b * in_stride..(b + 1) * in_stride]);
                }
            }
            vec![dx, dw, db]
        }),
    ))
}

/// Non-overlapping `r×r` block mean over the two trailing axes.
pub fn mean_pool(x: &Tensor, r: usize) -> Result<Tensor> {
    if x.ndim() < 2 {
        return Err(Error::invalid_shape("mean_pool", format!("need at least 2 axes, got {:?}", x.shape())));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("mean_pool factor must be positive".into()));
    }
    let nd = x.ndim();
    let (h, w) = (x.shape()[nd - 2], x.shape()[nd - 1]);
    if h % r != 0 {
        return Err(Error::NotDivisible { op: "mean_pool", axis: "height", extent: h, factor: r });
    }
    if w % r != 0 {
        return Err(Error::NotDivisible { op: "mean_pool", axis: "width", extent: w, factor: r });
    }
    let (ho, wo) = (h / r, w / r);
    let planes = x.numel() / (h * w).max(1);
    let inv = 1.0 / (r * r) as f64;
    let mut data = vec![0.0; planes * ho * wo];
    for p in 0..planes {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut data[p * ho * wo..(p + 1) * ho * wo];
        for i in 0..ho {
            for j in 0..wo {
                let mut acc = 0.0;
                for di in 0..r {
                    let row = &src[(i * r + di) * w + j * r..(i * r + di) * w + j * r + r];
                    acc += row.iter().sum::<f64>();
                }
                dst[i * wo + j] = acc * inv;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape[nd - 2] = ho;
    shape[nd - 1] = wo;
    Ok(Tensor::from_op(
        "mean_pool",
        shape,
        data,
        vec![x.clone()],
        Box::new(move |g, _, _| {
            let mut dx = vec![0.0; planes * h * w];
            for p in 0..planes {
                for i in 0..h {
                    for j in 0..w {
                        dx[p * h * w + i * w + j] = g[p * ho * wo + (i / r) * wo + j / r] * inv;
                    }
                }
            }
            vec![Some(dx)]
        }),
    ))
}

/// Softmax along the trailing axis, stabilised by subtracting the row max.
pub fn softmax_lastdim(x: &Tensor) -> Tensor {
    let d = x.shape().last().copied().unwrap_or(1).max(1);
    let mut data = x.data().to_vec();
    for row in data.chunks_mut(d) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Tensor::from_op(
        "softmax_lastdim",
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |g, _, y| {
            let mut dx = vec![0.0; y.len()];
            for ((dxr, yr), gr) in dx.chunks_mut(d).zip(y.chunks(d)).zip(g.chunks(d)) {
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for ((o, &yv), &gv) in dxr.iter_mut().zip(yr).zip(gr) {
                    *o = yv * (gv - dot);
                }
            }
            vec![Some(dx)]
        }),
    )
}

/// Reduction applied by [`l1_loss`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// `Σ|pred − target|`, divided by the element count under [`Reduction::Mean`].
pub fn l1_loss(pred: &Tensor, target: &Tensor, reduction: Reduction) -> Result<Tensor> {
    same_shape("l1_loss", pred, target)?;
    let n = pred.numel();
    let norm = match reduction {
        Reduction::Mean => 1.0 / n.max(1) as f64,
        Reduction::Sum => 1.0,
    };
    let total: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| (p - t).abs()).sum();
    Ok(Tensor::from_op(
        "l1_loss",
        Vec::new(),
        vec![total * norm],
        vec![pred.clone(), target.clone()],
        Box::new(move |g, inputs, _| {
            let sign: Vec<f64> = inputs[0]
                .data()
                .iter()
                .zip(inputs[1].data())
                .map(|(p, t)| {
                    let d = p - t;
                    if d > 0.0 {
                        g[0] * norm
                    } else if d < 0.0 {
                        -g[0] * norm
                    } else {
                        0.0
                    }
                })
                .collect();
            let neg = inputs[1].requires_grad().then(|| sign.iter().map(|v| -v).collect());
            vec![Some(sign), neg]
        }),
    ))
}

/// How interpolation logits compare a neighbour code with the anchor code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogitMode {
    /// `‖a‖·‖b‖·cos⟨a,b⟩`, i.e. the plain dot product.
    #[default]
    Dot,
    /// The bare cosine; zero-norm vectors give 0.
    Cosine,
}

impl LogitMode {
    pub fn name(self) -> &'static str {
        match self {
            LogitMode::Dot => "dot",
            LogitMode::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dot" => Some(LogitMode::Dot),
            "cosine" => Some(LogitMode::Cosine),
            _ => None,
        }
    }
}

/// Per-row similarity logits: `values: [M, K, D]`, `anchor: [M, D]` → `[M, K]`.
pub fn neighbor_logits(values: &Tensor, anchor: &Tensor, mode: LogitMode) -> Result<Tensor> {
    if values.ndim() != 3 || anchor.ndim() != 2 {
        return Err(Error::invalid_shape(
            "neighbor_logits",
            format!("expected [M,K,D] and [M,D], got {:?} and {:?}", values.shape(), anchor.shape()),
        ));
    }
    let (m, k, d) = (values.shape()[0], values.shape()[1], values.shape()[2]);
    if anchor.shape()[0] != m {
        return Err(Error::shape("neighbor_logits", "rows (axis 0)", m, anchor.shape()[0]));
    }
    if anchor.shape()[1] != d {
        return Err(Error::shape("neighbor_logits", "feature width", d, anchor.shape()[1]));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut data = Vec::with_capacity(m * k);
    for row in 0..m {
        let a = &anchor.data()[row * d..(row + 1) * d];
        let na = norm(a);
        for kk in 0..k {
            let v = &values.data()[(row * k + kk) * d..(row * k + kk + 1) * d];
            let dot: f64 = a.iter().zip(v).map(|(x, y)| x * y).sum();
            data.push(match mode {
                LogitMode::Dot => dot,
                LogitMode::Cosine => {
                    let nv = norm(v);
                    if na == 0.0 || nv == 0.0 {
                        0.0
                    } else {
                        dot / (na * nv)
                    }
                }
            });
        }
    }
    Ok(Tensor::from_op(
        "neighbor_logits",
        vec![m, k],
        data,
        vec![values.clone(), anchor.clone()],
        Box::new(move |g, inputs, out| {
            let (vals, anc) = (inputs[0].data(), inputs[1].data());
            let mut dv = vec![0.0; m * k * d];
            let mut da = vec![0.0; m * d];
            for row in 0..m {
                let a = &anc[row * d..(row + 1) * d];
                let na = norm(a);
                for kk in 0..k {
                    let idx = row * k + kk;
                    let go = g[idx];
                    if go == 0.0 {
                        continue;
                    }
                    let v = &vals[idx * d..(idx + 1) * d];
                    let dvr = &mut dv[idx * d..(idx + 1) * d];
                    let dar = &mut da[row * d..(row + 1) * d];
                    match mode {
                        LogitMode::Dot => {
                            for t in 0..d {
                                dvr[t] += go * a[t];
                                dar[t] += go * v[t];
                            }
                        }
                        LogitMode::Cosine => {
                            let nv = norm(v);
                            if na == 0.0 || nv == 0.0 {
                                continue;
                            }
                            let c = out[idx];
                            let inv = 1.0 / (na * nv);
                            for t in 0..d {
                                dvr[t] += go * (a[t] * inv - c * v[t] / (nv * nv));
                                dar[t] += go * (v[t] * inv - c * a[t] / (na * na));
                            }
                        }
                    }
                }
            }
            vec![inputs[0].requires_grad().then_some(dv), inputs[1].requires_grad().then_some(da)]
        }),
    ))
}

/// `out[m, c] = Σ_k weights[m, k] · values[m, k, c]`.
pub fn weighted_sum(weights: &Tensor, values: &Tensor) -> Result<Tensor> {
    if weights.ndim() != 2 || values.ndim() != 3 {
        return Err(Error::invalid_shape(
            "weighted_sum",
            format!("expected [M,K] and [M,K,C], got {:?} and {:?}", weights.shape(), values.shape()),
        ));
    }
    let (m, k) = (weights.shape()[0], weights.shape()[1]);
    if values.shape()[0] != m {
        return Err(Error::shape("weighted_sum", "rows (axis 0)", m, values.shape()[0]));
    }
    if values.shape()[1] != k {
        return Err(Error::shape("weighted_sum", "neighbour count (axis 1)", k, values.shape()[1]));
    }
    let c = values.shape()[2];
    let mut data = vec![0.0; m * c];
    for row in 0..m {
        let out = &mut data[row * c..(row + 1) * c];
        for kk in 0..k {
            let wv = weights.data()[row * k + kk];
            let v = &values.data()[(row * k + kk) * c..(row * k + kk + 1) * c];
            for (o, x) in out.iter_mut().zip(v) {
                *o += wv * x;
            }
        }
    }
    Ok(Tensor::from_op(
        "weighted_sum",
        vec![m, c],
        data,
        vec![weights.clone(), values.clone()],
        Box::new(move |g, inputs, _| {
            let (w, v) = (inputs[0].data(), inputs[1].data());
            let dw = inputs[0].requires_grad().then(|| {
                let mut dw = vec![0.0; m * k];
                for row in 0..m {
                    let gr = &g[row * c..(row + 1) * c];
                    for kk in 0..k {
                        let vr = &v[(row * k + kk) * c..(row * k + kk + 1) * c];
                        dw[row * k + kk] = gr.iter().zip(vr).map(|(a, b)| a * b).sum();
                    }
                }
                dw
            });
            let dv = inputs[1].requires_grad().then(|| {
                let mut dv = vec![0.0; m * k * c];
                for row in 0..m {
                    let gr = &g[row * c..(row + 1) * c];
                    for kk in 0..k {
                        let wv = w[row * k + kk];
                        for (o, x) in dv[(row * k + kk) * c..(row * k + kk + 1) * c].iter_mut().zip(gr) {
                            *o = wv * x;
                        }
                    }
                }
                dv
            });
            vec![dw, dv]
        }),
    ))
}

/// Applies fixed separable resampling matrices to the two trailing axes:
/// each `[h, w]` plane becomes `rows · plane · colsᵀ` with `rows: [H, h]`
/// and `cols: [W, w]` given row-major.
pub fn resample2d(x: &Tensor, rows: &[f64], out_h: usize, cols: &[f64], out_w: usize) -> Result<Tensor> {
    if x.ndim() < 2 {
        return Err(Error::invalid_shape("resample2d", format!("need at least 2 axes, got {:?}", x.shape())));
    }
    let nd = x.ndim();
    let (h, w) = (x.shape()[nd - 2], x.shape()[nd - 1]);
    if rows.len() != out_h * h {
        return Err(Error::shape("resample2d", "row matrix size", out_h * h, rows.len()));
    }
    if cols.len() != out_w * w {
        return Err(Error::shape("resample2d", "column matrix size", out_w * w, cols.len()));
    }
    let planes = x.numel() / (h * w).max(1);
    let rows = rows.to_vec();
    let cols_t = transpose(cols, out_w, w);
    let mut data = Vec::with_capacity(planes * out_h * out_w);
    for p in 0..planes {
        let plane = &x.data()[p * h * w..(p + 1) * h * w];
        let tmp = matmul(&rows, plane, out_h, h, w);
        data.extend(matmul(&tmp, &cols_t, out_h, w, out_w));
    }
    let mut shape = x.shape().to_vec();
    shape[nd - 2] = out_h;
    shape[nd - 1] = out_w;
    let cols = cols.to_vec();
    Ok(Tensor::from_op(
        "resample2d",
        shape,
        data,
        vec![x.clone()],
        Box::new(move |g, _, _| {
            let mut dx = Vec::with_capacity(planes * h * w);
            for p in 0..planes {
                let gp = &g[p * out_h * out_w..(p + 1) * out_h * out_w];
                let tmp = matmul_tn(&rows, gp, out_h, h, out_w);
                dx.extend(matmul(&tmp, &cols, h, out_w, w));
            }
            vec![Some(dx)]
        }),
    ))
}

/// Sub-pixel rearrangement `[N, C·r², h, w] → [N, C, h·r, w·r]`:
/// `out[n, c, i·r + a, j·r + b] = in[n, c·r² + a·r + b, i, j]`.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    if x.ndim() != 4 {
        return Err(Error::invalid_shape("pixel_shuffle", format!("input must be [N,C,H,W], got {:?}", x.shape())));
    }
    let (n, cr2, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    if r == 0 || cr2 % (r * r) != 0 {
        return Err(Error::NotDivisible { op: "pixel_shuffle", axis: "channels", extent: cr2, factor: r * r });
    }
    let c = cr2 / (r * r);
    let (ho, wo) = (h * r, w * r);
    let src_index = move |b: usize, ch: usize, oi: usize, oj: usize| {
        let (i, a) = (oi / r, oi % r);
        let (j, bb) = (oj / r, oj % r);
        ((b * cr2 + ch * r * r + a * r + bb) * h + i) * w + j
    };
    let mut data = Vec::with_capacity(x.numel());
    for b in 0..n {
        for ch in 0..c {
            for oi in 0..ho {
                for oj in 0..wo {
                    data.push(x.data()[src_index(b, ch, oi, oj)]);
                }
            }
        }
    }
    Ok(Tensor::from_op(
        "pixel_shuffle",
        vec![n, c, ho, wo],
        data,
        vec![x.clone()],
        Box::new(move |g, inputs, _| {
            let mut dx = vec![0.0; inputs[0].numel()];
            let mut k = 0;
            for b in 0..n {
                for ch in 0..c {
                    for oi in 0..ho {
                        for oj in 0..wo {
                            dx[src_index(b, ch, oi, oj)] = g[k];
                            k += 1;
                        }
                    }
                }
            }
            vec![Some(dx)]
        }),
    ))
}
