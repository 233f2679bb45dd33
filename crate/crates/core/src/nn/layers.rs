//! Channels-last (`[pixel, channel]`) layer kernels with hand-written
//! backward passes.

use super::real::{gemm, Mat, Real};
use crate::operators::reflect;

/// Square convolution with stride 1 and reflect padding (same output size).
/// Weights are stored as a `[k * k * cin, cout]` matrix whose rows run over
/// `(ky, kx, ci)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(cin: usize, cout: usize, kernel: usize) -> Self {
        Self {
            cin,
            cout,
            kernel,
            weight: vec![T::zero(); kernel * kernel * cin * cout],
            bias: vec![T::zero(); cout],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.kernel * self.kernel * self.cin
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Weight at `(co, ci, ky, kx)`.
    pub fn w(&self, co: usize, ci: usize, ky: usize, kx: usize) -> T {
        self.weight[((ky * self.kernel + kx) * self.cin + ci) * self.cout + co]
    }

    pub fn set_w(&mut self, co: usize, ci: usize, ky: usize, kx: usize, v: T) {
        let idx = ((ky * self.kernel + kx) * self.cin + ci) * self.cout + co;
        self.weight[idx] = v;
    }

    pub fn cast<U: Real>(&self) -> ConvLayer<U> {
        ConvLayer {
            cin: self.cin,
            cout: self.cout,
            kernel: self.kernel,
            weight: self.weight.iter().map(|v| U::of_f64(v.as_f64())).collect(),
            bias: self.bias.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        }
    }

    fn pad(&self) -> isize {
        (self.kernel / 2) as isize
    }

    /// Pixels per im2col block, keeping the block near four million values.
    fn chunk(&self, pixels: usize) -> usize {
        (1_000_000 / self.fan_in()).clamp(64, 1024).min(pixels)
    }

    /// Reflected source index for every (position, tap) pair along an axis
    /// of length `n`.
    fn taps_table(&self, n: usize) -> Vec<usize> {
        let (k, pad) = (self.kernel, self.pad());
        (0..n * k)
            .map(|i| reflect((i / k) as isize + (i % k) as isize - pad, n))
            .collect()
    }

    fn im2col(&self, input: &[T], h: usize, w: usize, p0: usize, p1: usize, col: &mut [T]) {
        let (k, cin) = (self.kernel, self.cin);
        let kk = self.fan_in();
        let (ty, tx) = (self.taps_table(h), self.taps_table(w));
        for (p, row) in (p0..p1).zip(col.chunks_exact_mut(kk)) {
            let (y, x) = (p / w, p % w);
            for ky in 0..k {
                let src_row = ty[y * k + ky] * w;
                let dst_row = &mut row[ky * k * cin..(ky + 1) * k * cin];
                for (kx, dst) in dst_row.chunks_exact_mut(cin).enumerate() {
                    let src = (src_row + tx[x * k + kx]) * cin;
                    dst.copy_from_slice(&input[src..src + cin]);
                }
            }
        }
    }

    fn col2im_add(&self, col: &[T], h: usize, w: usize, p0: usize, p1: usize, dinput: &mut [T]) {
        let (k, cin) = (self.kernel, self.cin);
        let kk = self.fan_in();
        let (ty, tx) = (self.taps_table(h), self.taps_table(w));
        for (p, row) in (p0..p1).zip(col.chunks_exact(kk)) {
            let (y, x) = (p / w, p % w);
            for ky in 0..k {
                let dst_row = ty[y * k + ky] * w;
                let src_row = &row[ky * k * cin..(ky + 1) * k * cin];
                for (kx, src) in src_row.chunks_exact(cin).enumerate() {
                    let dst = (dst_row + tx[x * k + kx]) * cin;
                    for (d, s) in dinput[dst..dst + cin].iter_mut().zip(src) {
                        *d += *s;
                    }
                }
            }
        }
    }

    /// `input` is `[h * w, cin]`; returns `[h * w, cout]`.
    pub fn forward(&self, input: &[T], h: usize, w: usize) -> Vec<T> {
        let pixels = h * w;
        debug_assert_eq!(input.len(), pixels * self.cin);
        let mut out = Vec::with_capacity(pixels * self.cout);
        for _ in 0..pixels {
            out.extend_from_slice(&self.bias);
        }
        let kk = self.fan_in();
        let wmat = Mat::new(&self.weight, kk, self.cout);
        if self.kernel == 1 {
            gemm(Mat::new(input, pixels, kk), false, wmat, false, T::one(), &mut out);
            return out;
        }
        let chunk = self.chunk(pixels);
        let mut col = vec![T::zero(); chunk * kk];
        let mut p0 = 0;
        while p0 < pixels {
            let p1 = (p0 + chunk).min(pixels);
            self.im2col(input, h, w, p0, p1, &mut col);
            gemm(
                Mat::new(&col, p1 - p0, kk),
                false,
                wmat,
                false,
                T::one(),
                &mut out[p0 * self.cout..p1 * self.cout],
            );
            p0 = p1;
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to `input` when `need_input` is set.
    pub fn backward(
        &self,
        input: &[T],
        h: usize,
        w: usize,
        dout: &[T],
        grad: &mut ConvLayer<T>,
        need_input: bool,
    ) -> Option<Vec<T>> {
        let pixels = h * w;
        let kk = self.fan_in();
        let cout = self.cout;
        for row in dout.chunks_exact(cout) {
            for (g, d) in grad.bias.iter_mut().zip(row) {
                *g += *d;
            }
        }
        let wmat = Mat::new(&self.weight, kk, cout);
        let mut dinput = need_input.then(|| vec![T::zero(); pixels * self.cin]);

        if self.kernel == 1 {
            gemm(
                Mat::new(input, pixels, kk),
                true,
                Mat::new(dout, pixels, cout),
                false,
                T::one(),
                &mut grad.weight,
            );
            if let Some(di) = dinput.as_mut() {
                gemm(Mat::new(dout, pixels, cout), false, wmat, true, T::zero(), di);
            }
            return dinput;
        }

        let chunk = self.chunk(pixels);
        let mut col = vec![T::zero(); chunk * kk];
        let mut p0 = 0;
        while p0 < pixels {
            let p1 = (p0 + chunk).min(pixels);
            let np = p1 - p0;
            let dchunk = Mat::new(&dout[p0 * cout..p1 * cout], np, cout);
            self.im2col(input, h, w, p0, p1, &mut col);
            gemm(Mat::new(&col, np, kk), true, dchunk, false, T::one(), &mut grad.weight);
            if let Some(di) = dinput.as_mut() {
                gemm(dchunk, false, wmat, true, T::zero(), &mut col[..np * kk]);
                self.col2im_add(&col, h, w, p0, p1, di);
            }
            p0 = p1;
        }
        dinput
    }
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries whose activation was clipped.
pub fn relu_backward<T: Real>(activation: &[T], grad: &mut [T]) {
    for (g, a) in grad.iter_mut().zip(activation) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2x2 max pooling; returns the pooled map and the winning offset (0..4,
/// first maximum wins) of every output value.
pub fn maxpool2<T: Real>(input: &[T], h: usize, w: usize, c: usize) -> (Vec<T>, Vec<u8>) {
    let (h2, w2) = (h / 2, w / 2);
    let mut out = vec![T::zero(); h2 * w2 * c];
    let mut arg = vec![0u8; h2 * w2 * c];
    for y in 0..h2 {
        for x in 0..w2 {
            let o = (y * w2 + x) * c;
            for ch in 0..c {
                let mut best = input[((2 * y) * w + 2 * x) * c + ch];
                let mut which = 0u8;
                for (k, (dy, dx)) in [(0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    let v = input[((2 * y + dy) * w + 2 * x + dx) * c + ch];
                    if v > best {
                        best = v;
                        which = k as u8 + 1;
                    }
                }
                out[o + ch] = best;
                arg[o + ch] = which;
            }
        }
    }
    (out, arg)
}

pub fn maxpool2_backward<T: Real>(dout: &[T], arg: &[u8], h: usize, w: usize, c: usize) -> Vec<T> {
    let (h2, w2) = (h / 2, w / 2);
    let mut din = vec![T::zero(); h * w * c];
    for y in 0..h2 {
        for x in 0..w2 {
            let o = (y * w2 + x) * c;
            for ch in 0..c {
                let (dy, dx) = match arg[o + ch] {
                    0 => (0, 0),
                    1 => (0, 1),
                    2 => (1, 0),
                    _ => (1, 1),
                };
                din[((2 * y + dy) * w + 2 * x + dx) * c + ch] += dout[o + ch];
            }
        }
    }
    din
}

/// Nearest-neighbour x2 upsampling from `(h2, w2)` to `(2 h2, 2 w2)`.
pub fn upsample2<T: Real>(input: &[T], h2: usize, w2: usize, c: usize) -> Vec<T> {
    let (h, w) = (2 * h2, 2 * w2);
    let mut out = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            let s = ((y / 2) * w2 + x / 2) * c;
            out.extend_from_slice(&input[s..s + c]);
        }
    }
    out
}

pub fn upsample2_backward<T: Real>(dout: &[T], h2: usize, w2: usize, c: usize) -> Vec<T> {
    let w = 2 * w2;
    let mut din = vec![T::zero(); h2 * w2 * c];
    for y in 0..2 * h2 {
        for x in 0..w {
            let s = ((y / 2) * w2 + x / 2) * c;
            let o = (y * w + x) * c;
            for ch in 0..c {
                din[s + ch] += dout[o + ch];
            }
        }
    }
    din
}

/// Per-pixel channel concatenation `[a, b]`.
pub fn concat<T: Real>(a: &[T], ca: usize, b: &[T], cb: usize) -> Vec<T> {
    let pixels = a.len() / ca;
    let mut out = Vec::with_capacity(pixels * (ca + cb));
    for p in 0..pixels {
        out.extend_from_slice(&a[p * ca..(p + 1) * ca]);
        out.extend_from_slice(&b[p * cb..(p + 1) * cb]);
    }
    out
}

pub fn split<T: Real>(x: &[T], ca: usize, cb: usize) -> (Vec<T>, Vec<T>) {
    let c = ca + cb;
    let pixels = x.len() / c;
    let mut a = Vec::with_capacity(pixels * ca);
    let mut b = Vec::with_capacity(pixels * cb);
    for p in 0..pixels {
        a.extend_from_slice(&x[p * c..p * c + ca]);
        b.extend_from_slice(&x[p * c + ca..(p + 1) * c]);
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct loop convolution with reflect padding, `[c, h, w]` free layout.
    fn naive_conv(layer: &ConvLayer<f64>, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let pad = (layer.kernel / 2) as isize;
        let mut out = vec![0.0; h * w * layer.cout];
        for y in 0..h {
            for x in 0..w {
                for co in 0..layer.cout {
                    let mut acc = layer.bias[co];
                    for ky in 0..layer.kernel {
                        for kx in 0..layer.kernel {
                            let sy = reflect(y as isize + ky as isize - pad, h);
                            let sx = reflect(x as isize + kx as isize - pad, w);
                            for ci in 0..layer.cin {
                                acc += layer.w(co, ci, ky, kx) * input[(sy * w + sx) * layer.cin + ci];
                            }
                        }
                    }
                    out[(y * w + x) * layer.cout + co] = acc;
                }
            }
        }
        out
    }

    fn pseudo(i: usize) -> f64 {
        ((i as f64 * 12.9898).sin() * 43758.5453).fract()
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut layer = ConvLayer::<f64>::zeros(3, 4, 7);
        for (i, v) in layer.weight.iter_mut().enumerate() {
            *v = pseudo(i);
        }
        for (i, v) in layer.bias.iter_mut().enumerate() {
            *v = pseudo(1000 + i);
        }
        let (h, w) = (9, 12);
        let input: Vec<f64> = (0..h * w * 3).map(|i| pseudo(5000 + i)).collect();
        let fast = layer.forward(&input, h, w);
        let slow = naive_conv(&layer, &input, h, w);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn maxpool_routes_gradient_to_winner() {
        let input = [1.0, 5.0, 3.0, 2.0f64];
        let (out, arg) = maxpool2(&input, 2, 2, 1);
        assert_eq!(out, vec![5.0]);
        let din = maxpool2_backward(&[1.0], &arg, 2, 2, 1);
        assert_eq!(din, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_split_inverse() {
        let a = [1.0, 2.0, 3.0, 4.0f64];
        let b = [9.0, 8.0f64];
        let c = concat(&a, 2, &b, 1);
        assert_eq!(c, vec![1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
        let (a2, b2) = split(&c, 2, 1);
        assert_eq!((a2.as_slice(), b2.as_slice()), (&a[..], &b[..]));
    }
}
