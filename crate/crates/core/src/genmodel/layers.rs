//! Minimal layers with hand-written backward passes.
//!
//! All activations are time-major flat slices (`t * channels + c`). Parameters live in
//! one flat vector; each layer stores offsets into it. Weight layout is `[out][k][in]`
//! so every output is a single contiguous dot product.

use rand::Rng as _;

use crate::seed::Rng;

/// Dot product with four independent accumulators so the loop vectorises.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += a * x`
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes gradient entries where the (post-activation) output was not positive.
pub(crate) fn relu_backward(out: &[f64], grad: &mut [f64]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Collects parameter blocks and their initialisation ranges.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct ParamAlloc {
    pub len: usize,
    blocks: Vec<(usize, usize, f64)>,
}

impl ParamAlloc {
    /// Reserves `n` parameters, initialised uniformly in `[-bound, bound]` (zeros if 0).
    pub fn alloc(&mut self, n: usize, bound: f64) -> usize {
        let off = self.len;
        self.blocks.push((off, n, bound));
        self.len += n;
        off
    }

    /// Initial values, rounded to `f32` so checkpoints store them exactly.
    pub fn init(&self, rng: &mut Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.len];
        for &(off, n, bound) in &self.blocks {
            if bound > 0.0 {
                for v in &mut p[off..off + n] {
                    *v = rng.random_range(-bound..bound) as f32 as f64;
                }
            }
        }
        p
    }
}

fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// 1-D convolution with zero padding `k / 2`. Also serves as a dense layer (`k = 1`, one step).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Conv1d {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    w: usize,
    b: usize,
}

impl Conv1d {
    pub fn new(a: &mut ParamAlloc, cin: usize, cout: usize, k: usize, stride: usize) -> Self {
        let w = a.alloc(cout * k * cin, glorot(cin * k, cout * k));
        let b = a.alloc(cout, 0.0);
        Self { cin, cout, k, stride, pad: k / 2, w, b }
    }

    pub fn dense(a: &mut ParamAlloc, cin: usize, cout: usize) -> Self {
        Self::new(a, cin, cout, 1, 1)
    }

    pub fn out_len(&self, t_in: usize) -> usize {
        (t_in + 2 * self.pad - self.k) / self.stride + 1
    }

    /// Valid kernel taps `[j0, j1)` for output step `t`, and the first input step they touch.
    #[inline]
    fn taps(&self, t: usize, t_in: usize) -> (usize, usize, usize) {
        let start = (t * self.stride) as isize - self.pad as isize;
        let j0 = (-start).max(0) as usize;
        let j1 = ((t_in as isize - start).min(self.k as isize)).max(0) as usize;
        (j0, j1, (start + j0 as isize) as usize)
    }

    pub fn forward(&self, p: &[f64], x: &[f64], t_in: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), t_in * self.cin);
        let t_out = self.out_len(t_in);
        let (cin, k) = (self.cin, self.k);
        let mut y = vec![0.0; t_out * self.cout];
        for t in 0..t_out {
            let (j0, j1, s) = self.taps(t, t_in);
            for o in 0..self.cout {
                let mut v = p[self.b + o];
                if j1 > j0 {
                    let wo = self.w + o * k * cin;
                    v += dot(&p[wo + j0 * cin..wo + j1 * cin], &x[s * cin..(s + j1 - j0) * cin]);
                }
                y[t * self.cout + o] = v;
            }
        }
        y
    }

    /// Accumulates parameter gradients into `g`; returns the input gradient if requested.
    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &[f64], t_in: usize, dy: &[f64], want_dx: bool) -> Option<Vec<f64>> {
        let t_out = self.out_len(t_in);
        let (cin, k) = (self.cin, self.k);
        let mut dx = if want_dx { Some(vec![0.0; t_in * cin]) } else { None };
        for t in 0..t_out {
            let (j0, j1, s) = self.taps(t, t_in);
            for o in 0..self.cout {
                let d = dy[t * self.cout + o];
                if d == 0.0 {
                    continue;
                }
                g[self.b + o] += d;
                if j1 <= j0 {
                    continue;
                }
                let wo = self.w + o * k * cin;
                let span = (j1 - j0) * cin;
                axpy(d, &x[s * cin..s * cin + span], &mut g[wo + j0 * cin..wo + j0 * cin + span]);
                if let Some(dx) = dx.as_mut() {
                    axpy(d, &p[wo + j0 * cin..wo + j0 * cin + span], &mut dx[s * cin..s * cin + span]);
                }
            }
        }
        dx
    }
}

/// Gated recurrent unit with separate input and hidden biases; gate order r, z, n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Gru {
    pub cin: usize,
    pub h: usize,
    wi: usize,
    wh: usize,
    bi: usize,
    bh: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct GruCache {
    /// `(T + 1) x H`; row 0 is the zero initial state.
    pub hs: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
}

impl GruCache {
    /// Hidden states `h_1..h_T` as one `T x H` slice.
    pub fn outputs(&self, h: usize) -> &[f64] {
        &self.hs[h..]
    }
}

impl Gru {
    pub fn new(a: &mut ParamAlloc, cin: usize, h: usize) -> Self {
        let wi = a.alloc(3 * h * cin, glorot(cin, 3 * h));
        let wh = a.alloc(3 * h * h, glorot(h, 3 * h));
        let bi = a.alloc(3 * h, 0.0);
        let bh = a.alloc(3 * h, 0.0);
        Self { cin, h, wi, wh, bi, bh }
    }

    pub fn forward(&self, p: &[f64], xs: &[f64], steps: usize) -> GruCache {
        let (h, cin) = (self.h, self.cin);
        let mut c = GruCache {
            hs: vec![0.0; (steps + 1) * h],
            r: vec![0.0; steps * h],
            z: vec![0.0; steps * h],
            n: vec![0.0; steps * h],
            hn: vec![0.0; steps * h],
        };
        let mut gi = vec![0.0; 3 * h];
        let mut gh = vec![0.0; 3 * h];
        for t in 0..steps {
            let x = &xs[t * cin..(t + 1) * cin];
            let (prev, rest) = c.hs.split_at_mut((t + 1) * h);
            let hp = &prev[t * h..];
            for o in 0..3 * h {
                gi[o] = p[self.bi + o] + dot(&p[self.wi + o * cin..self.wi + (o + 1) * cin], x);
                gh[o] = p[self.bh + o] + dot(&p[self.wh + o * h..self.wh + (o + 1) * h], hp);
            }
            let hnew = &mut rest[..h];
            for j in 0..h {
                let r = sigmoid(gi[j] + gh[j]);
                let z = sigmoid(gi[h + j] + gh[h + j]);
                let hn = gh[2 * h + j];
                let n = (gi[2 * h + j] + r * hn).tanh();
                hnew[j] = (1.0 - z) * n + z * hp[j];
                c.r[t * h + j] = r;
                c.z[t * h + j] = z;
                c.n[t * h + j] = n;
                c.hn[t * h + j] = hn;
            }
        }
        c
    }

    /// Back-propagation through time. `dhs` is the gradient with respect to `h_1..h_T`.
    pub fn backward(&self, p: &[f64], g: &mut [f64], xs: &[f64], c: &GruCache, dhs: &[f64], want_dx: bool) -> Option<Vec<f64>> {
        let (h, cin) = (self.h, self.cin);
        let steps = dhs.len() / h;
        let mut dx = if want_dx { Some(vec![0.0; steps * cin]) } else { None };
        let mut dh = vec![0.0; h];
        let mut gi = vec![0.0; 3 * h];
        let mut gh = vec![0.0; 3 * h];
        for t in (0..steps).rev() {
            for j in 0..h {
                dh[j] += dhs[t * h + j];
            }
            let hp = &c.hs[t * h..(t + 1) * h];
            let mut dprev = vec![0.0; h];
            for j in 0..h {
                let i = t * h + j;
                let (r, z, n, hn) = (c.r[i], c.z[i], c.n[i], c.hn[i]);
                let dn = dh[j] * (1.0 - z);
                let dz = dh[j] * (hp[j] - n);
                dprev[j] = dh[j] * z;
                let dan = dn * (1.0 - n * n);
                let dr = dan * hn;
                let daz = dz * z * (1.0 - z);
                let dar = dr * r * (1.0 - r);
                gi[j] = dar;
                gi[h + j] = daz;
                gi[2 * h + j] = dan;
                gh[j] = dar;
                gh[h + j] = daz;
                gh[2 * h + j] = dan * r;
            }
            let x = &xs[t * cin..(t + 1) * cin];
            for o in 0..3 * h {
                if gi[o] != 0.0 {
                    g[self.bi + o] += gi[o];
                    axpy(gi[o], x, &mut g[self.wi + o * cin..self.wi + (o + 1) * cin]);
                    if let Some(dx) = dx.as_mut() {
                        axpy(gi[o], &p[self.wi + o * cin..self.wi + (o + 1) * cin], &mut dx[t * cin..(t + 1) * cin]);
                    }
                }
                if gh[o] != 0.0 {
                    g[self.bh + o] += gh[o];
                    axpy(gh[o], hp, &mut g[self.wh + o * h..self.wh + (o + 1) * h]);
                    axpy(gh[o], &p[self.wh + o * h..self.wh + (o + 1) * h], &mut dprev);
                }
            }
            dh = dprev;
        }
        dx
    }
}

/// Nearest-neighbour upsampling by 2 along time.
pub(crate) fn upsample2(x: &[f64], channels: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(2 * x.len());
    for row in x.chunks_exact(channels) {
        y.extend_from_slice(row);
        y.extend_from_slice(row);
    }
    y
}

pub(crate) fn upsample2_backward(dy: &[f64], channels: usize) -> Vec<f64> {
    let mut dx = vec![0.0; dy.len() / 2];
    for (t, pair) in dy.chunks_exact(2 * channels).enumerate() {
        for c in 0..channels {
            dx[t * channels + c] = pair[c] + pair[channels + c];
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn params(a: &ParamAlloc, s: u64) -> Vec<f64> {
        a.init(&mut seed::rng(s, "test", 0)).iter().enumerate().map(|(i, v)| v + 0.01 * (i as f64).sin()).collect()
    }

    fn check_grad(p: &[f64], x: &[f64], f: impl Fn(&[f64], &[f64]) -> f64, analytic: (Vec<f64>, Vec<f64>)) {
        let h = 1e-6;
        let (gp, gx) = analytic;
        for i in 0..p.len() {
            let (mut a, mut b) = (p.to_vec(), p.to_vec());
            a[i] += h;
            b[i] -= h;
            let fd = (f(&a, x) - f(&b, x)) / (2.0 * h);
            assert!((fd - gp[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", gp[i]);
        }
        for i in 0..x.len() {
            let (mut a, mut b) = (x.to_vec(), x.to_vec());
            a[i] += h;
            b[i] -= h;
            let fd = (f(p, &a) - f(p, &b)) / (2.0 * h);
            assert!((fd - gx[i]).abs() < 1e-6 * (1.0 + fd.abs()), "input {i}: {fd} vs {}", gx[i]);
        }
    }

    /// Weighted sum of outputs so every output gets a distinct upstream gradient.
    fn probe(y: &[f64]) -> (f64, Vec<f64>) {
        let w: Vec<f64> = (0..y.len()).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.3).collect();
        (dot(&w, y), w)
    }

    #[test]
    fn conv_shapes_follow_ceil_halving() {
        let mut a = ParamAlloc::default();
        for k in [3, 5, 7] {
            let c = Conv1d::new(&mut a, 6, 4, k, 2);
            assert_eq!(c.out_len(200), 100);
            assert_eq!(c.out_len(25), 13);
        }
    }

    #[test]
    fn strided_conv_gradients() {
        let mut a = ParamAlloc::default();
        let conv = Conv1d::new(&mut a, 3, 2, 5, 2);
        let p = params(&a, 1);
        let x: Vec<f64> = (0..7 * 3).map(|i| (i as f64 * 0.7).cos()).collect();
        let f = |p: &[f64], x: &[f64]| probe(&conv.forward(p, x, 7)).0;
        let y = conv.forward(&p, &x, 7);
        let (_, dy) = probe(&y);
        let mut g = vec![0.0; p.len()];
        let dx = conv.backward(&p, &mut g, &x, 7, &dy, true).unwrap();
        check_grad(&p, &x, f, (g, dx));
    }

    #[test]
    fn gru_gradients() {
        let mut a = ParamAlloc::default();
        let gru = Gru::new(&mut a, 3, 4);
        let p = params(&a, 2);
        let x: Vec<f64> = (0..5 * 3).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = |p: &[f64], x: &[f64]| {
            let c = gru.forward(p, x, 5);
            probe(c.outputs(4)).0
        };
        let c = gru.forward(&p, &x, 5);
        let (_, dy) = probe(c.outputs(4));
        let mut g = vec![0.0; p.len()];
        let dx = gru.backward(&p, &mut g, &x, &c, &dy, true).unwrap();
        check_grad(&p, &x, f, (g, dx));
    }

    #[test]
    fn upsample_round_trip() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y = upsample2(&x, 2);
        assert_eq!(y, vec![1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 4.0]);
        assert_eq!(upsample2_backward(&y, 2), vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn init_values_are_f32_exact() {
        let mut a = ParamAlloc::default();
        Gru::new(&mut a, 3, 4);
        let p = a.init(&mut seed::rng(0, "x", 0));
        assert!(p.iter().all(|&v| v as f32 as f64 == v));
    }
}
