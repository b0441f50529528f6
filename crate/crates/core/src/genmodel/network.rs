//! Encoder, decoder and latent authentication head over a flat parameter vector.

use serde::{Deserialize, Serialize};

use super::layers::{relu_backward, relu_inplace, upsample2, upsample2_backward, Conv1d, Gru, GruCache, ParamAlloc};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Layer sizes. `Architecture::new` gives the standard model; smaller settings are handy in tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_len: usize,
    pub channels: usize,
    pub latent_dim: usize,
    /// Leading latent coordinates seen by the authentication head.
    pub auth_dims: usize,
    pub kernel_sizes: Vec<usize>,
    pub filters_per_kernel: usize,
    pub merge_channels: usize,
    pub blocks: usize,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub mlp_hidden: Vec<usize>,
    pub decoder_channels: usize,
    pub decoder_kernel: usize,
    pub auth_hidden: usize,
    pub n_users: usize,
}

impl Architecture {
    pub fn new(n_users: usize) -> Self {
        Self {
            input_len: crate::data::WINDOW_LEN,
            channels: crate::data::CHANNELS,
            latent_dim: 10,
            auth_dims: 5,
            kernel_sizes: vec![3, 5, 7],
            filters_per_kernel: 16,
            merge_channels: 32,
            blocks: 4,
            gru_hidden: 64,
            gru_layers: 3,
            mlp_hidden: vec![25, 10],
            decoder_channels: 32,
            decoder_kernel: 5,
            auth_hidden: 16,
            n_users,
        }
    }

    /// Temporal length after each encoder block, starting with the input length.
    pub fn encoder_lengths(&self) -> Vec<usize> {
        let mut l = vec![self.input_len];
        for _ in 0..self.blocks {
            l.push(l.last().unwrap().div_ceil(2));
        }
        l
    }

    pub fn encoded_len(&self) -> usize {
        *self.encoder_lengths().last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.input_len,
            self.channels,
            self.latent_dim,
            self.filters_per_kernel,
            self.merge_channels,
            self.gru_hidden,
            self.gru_layers,
            self.decoder_channels,
            self.auth_hidden,
        ];
        if positive.contains(&0) || self.kernel_sizes.is_empty() || self.kernel_sizes.iter().any(|k| k % 2 == 0) {
            return Err(Error::InvalidArgument("architecture sizes must be positive, kernels odd".into()));
        }
        if self.auth_dims == 0 || self.auth_dims > self.latent_dim {
            return Err(Error::InvalidArgument("auth_dims must be in 1..=latent_dim".into()));
        }
        if self.n_users < 2 {
            return Err(Error::InvalidArgument("authentication head needs at least 2 users".into()));
        }
        if self.decoder_kernel % 2 == 0 {
            return Err(Error::InvalidArgument("decoder kernel must be odd".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    branches: Vec<Conv1d>,
    merge: Conv1d,
}

/// Multi-scale convolution blocks, stacked GRUs and a perceptron head.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Encoder {
    arch: Architecture,
    blocks: Vec<Block>,
    grus: Vec<Gru>,
    mlp: Vec<Conv1d>,
}

/// Layer descriptors; the parameters themselves are passed in as a slice.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Network {
    pub arch: Architecture,
    encoder: Encoder,
    dec_grus: Vec<Gru>,
    dec_convs: Vec<Conv1d>,
    auth: Vec<Conv1d>,
    pub n_params: usize,
    alloc: ParamAlloc,
}

pub(crate) struct EncoderCache {
    block_inputs: Vec<Vec<f64>>,
    branch_out: Vec<Vec<Vec<f64>>>,
    concat: Vec<Vec<f64>>,
    gru_inputs: Vec<Vec<f64>>,
    grus: Vec<GruCache>,
    mlp_inputs: Vec<Vec<f64>>,
    pub out: Vec<f64>,
}

pub(crate) struct DecoderCache {
    gru_inputs: Vec<Vec<f64>>,
    grus: Vec<GruCache>,
    conv_inputs: Vec<Vec<f64>>,
    conv_out: Vec<Vec<f64>>,
    pub out: Vec<f64>,
}

pub(crate) struct AuthCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
    pub scores: Vec<f64>,
}

impl Encoder {
    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn new(a: &mut ParamAlloc, arch: &Architecture, out_dim: usize) -> Self {
        let mut blocks = Vec::new();
        let mut cin = arch.channels;
        for _ in 0..arch.blocks {
            let branches =
                arch.kernel_sizes.iter().map(|&k| Conv1d::new(a, cin, arch.filters_per_kernel, k, 2)).collect();
            let merge = Conv1d::dense(a, arch.filters_per_kernel * arch.kernel_sizes.len(), arch.merge_channels);
            blocks.push(Block { branches, merge });
            cin = arch.merge_channels;
        }
        let mut grus = Vec::new();
        for _ in 0..arch.gru_layers {
            grus.push(Gru::new(a, cin, arch.gru_hidden));
            cin = arch.gru_hidden;
        }
        let mut mlp = Vec::new();
        for &h in &arch.mlp_hidden {
            mlp.push(Conv1d::dense(a, cin, h));
            cin = h;
        }
        mlp.push(Conv1d::dense(a, cin, out_dim));
        Self { arch: arch.clone(), blocks, grus, mlp }
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> EncoderCache {
        let arch = &self.arch;
        let lens = arch.encoder_lengths();
        let mut cache = EncoderCache {
            block_inputs: Vec::new(),
            branch_out: Vec::new(),
            concat: Vec::new(),
            gru_inputs: Vec::new(),
            grus: Vec::new(),
            mlp_inputs: Vec::new(),
            out: Vec::new(),
        };
        let mut cur = x.to_vec();
        for (b, block) in self.blocks.iter().enumerate() {
            let (t_in, t_out) = (lens[b], lens[b + 1]);
            let outs: Vec<Vec<f64>> = block
                .branches
                .iter()
                .map(|c| {
                    let mut y = c.forward(p, &cur, t_in);
                    relu_inplace(&mut y);
                    y
                })
                .collect();
            let f = arch.filters_per_kernel;
            let mut cat = Vec::with_capacity(t_out * f * outs.len());
            for t in 0..t_out {
                for o in &outs {
                    cat.extend_from_slice(&o[t * f..(t + 1) * f]);
                }
            }
            let mut merged = block.merge.forward(p, &cat, t_out);
            relu_inplace(&mut merged);
            cache.block_inputs.push(std::mem::replace(&mut cur, merged));
            cache.branch_out.push(outs);
            cache.concat.push(cat);
        }
        let steps = arch.encoded_len();
        for gru in &self.grus {
            let c = gru.forward(p, &cur, steps);
            let next = c.outputs(gru.h).to_vec();
            cache.gru_inputs.push(std::mem::replace(&mut cur, next));
            cache.grus.push(c);
        }
        let h = arch.gru_hidden;
        let mut a = cur[(steps - 1) * h..].to_vec();
        for (i, d) in self.mlp.iter().enumerate() {
            let mut y = d.forward(p, &a, 1);
            if i + 1 < self.mlp.len() {
                relu_inplace(&mut y);
            }
            cache.mlp_inputs.push(std::mem::replace(&mut a, y));
        }
        cache.out = a;
        cache
    }

    /// `dout` is the gradient with respect to the perceptron output.
    pub fn backward(&self, p: &[f64], g: &mut [f64], cache: &EncoderCache, dout: &[f64]) {
        let arch = &self.arch;
        let lens = arch.encoder_lengths();
        let mut d = dout.to_vec();
        for (i, layer) in self.mlp.iter().enumerate().rev() {
            let input = &cache.mlp_inputs[i];
            let mut dx = layer.backward(p, g, input, 1, &d, true).expect("dx requested");
            if i > 0 {
                relu_backward(input, &mut dx);
            }
            d = dx;
        }
        let steps = arch.encoded_len();
        let h = arch.gru_hidden;
        let mut dseq = vec![0.0; steps * h];
        dseq[(steps - 1) * h..].copy_from_slice(&d);
        for (i, gru) in self.grus.iter().enumerate().rev() {
            dseq = gru.backward(p, g, &cache.gru_inputs[i], &cache.grus[i], &dseq, true).expect("dx requested");
        }
        let f = arch.filters_per_kernel;
        let nb = arch.kernel_sizes.len();
        for (b, block) in self.blocks.iter().enumerate().rev() {
            let (t_in, t_out) = (lens[b], lens[b + 1]);
            // dseq is the gradient of this block's (post-ReLU) output, i.e. the next block's input
            let merged = if b + 1 < self.blocks.len() { &cache.block_inputs[b + 1] } else { &cache.gru_inputs[0] };
            relu_backward(merged, &mut dseq);
            let dcat = block.merge.backward(p, g, &cache.concat[b], t_out, &dseq, true).expect("dx requested");
            let want_dx = b > 0;
            let mut dx = vec![0.0; if want_dx { t_in * block.branches[0].cin } else { 0 }];
            for (k, conv) in block.branches.iter().enumerate() {
                let mut dk = vec![0.0; t_out * f];
                for t in 0..t_out {
                    dk[t * f..(t + 1) * f].copy_from_slice(&dcat[t * f * nb + k * f..t * f * nb + (k + 1) * f]);
                }
                relu_backward(&cache.branch_out[b][k], &mut dk);
                if let Some(part) = conv.backward(p, g, &cache.block_inputs[b], t_in, &dk, want_dx) {
                    for (a, v) in dx.iter_mut().zip(part) {
                        *a += v;
                    }
                }
            }
            dseq = dx;
        }
    }
}

impl Network {
    pub fn new(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let mut a = ParamAlloc::default();
        let encoder = Encoder::new(&mut a, arch, 2 * arch.latent_dim);

        let mut dec_grus = Vec::new();
        let mut cin = arch.latent_dim;
        for _ in 0..arch.gru_layers {
            dec_grus.push(Gru::new(&mut a, cin, arch.gru_hidden));
            cin = arch.gru_hidden;
        }
        let mut dec_convs = Vec::new();
        for s in 0..arch.blocks {
            let cout = if s + 1 == arch.blocks { arch.channels } else { arch.decoder_channels };
            dec_convs.push(Conv1d::new(&mut a, cin, cout, arch.decoder_kernel, 1));
            cin = cout;
        }
        let auth = vec![
            Conv1d::dense(&mut a, arch.auth_dims, arch.auth_hidden),
            Conv1d::dense(&mut a, arch.auth_hidden, arch.n_users),
        ];
        Ok(Self {
            arch: arch.clone(),
            encoder,
            dec_grus,
            dec_convs,
            auth,
            n_params: a.len,
            alloc: a,
        })
    }

    pub fn init_params(&self, rng: &mut Rng) -> Vec<f64> {
        self.alloc.init(rng)
    }

    pub fn encode(&self, p: &[f64], x: &[f64]) -> EncoderCache {
        self.encoder.forward(p, x)
    }

    /// `dout` is the gradient with respect to `[mean, log_variance]`.
    pub fn encode_backward(&self, p: &[f64], g: &mut [f64], cache: &EncoderCache, dout: &[f64]) {
        self.encoder.backward(p, g, cache, dout)
    }

    pub fn decode(&self, p: &[f64], z: &[f64]) -> DecoderCache {
        let arch = &self.arch;
        let steps = arch.encoded_len();
        let mut cache =
            DecoderCache { gru_inputs: Vec::new(), grus: Vec::new(), conv_inputs: Vec::new(), conv_out: Vec::new(), out: Vec::new() };
        let mut cur: Vec<f64> = (0..steps).flat_map(|_| z.iter().copied()).collect();
        for gru in &self.dec_grus {
            let c = gru.forward(p, &cur, steps);
            let next = c.outputs(gru.h).to_vec();
            cache.gru_inputs.push(std::mem::replace(&mut cur, next));
            cache.grus.push(c);
        }
        let mut t = steps;
        let mut ch = arch.gru_hidden;
        for (i, conv) in self.dec_convs.iter().enumerate() {
            let up = upsample2(&cur, ch);
            t *= 2;
            let mut y = conv.forward(p, &up, t);
            if i + 1 < self.dec_convs.len() {
                relu_inplace(&mut y);
            }
            cache.conv_inputs.push(up);
            cache.conv_out.push(y.clone());
            cur = y;
            ch = conv.cout;
        }
        cur.truncate(arch.input_len * arch.channels);
        cache.out = cur;
        cache
    }

    /// Returns the gradient with respect to `z`.
    pub fn decode_backward(&self, p: &[f64], g: &mut [f64], cache: &DecoderCache, dout: &[f64]) -> Vec<f64> {
        let arch = &self.arch;
        let steps = arch.encoded_len();
        let full = steps << arch.blocks;
        let mut d = vec![0.0; full * arch.channels];
        d[..dout.len()].copy_from_slice(dout);
        let mut t = full;
        for (i, conv) in self.dec_convs.iter().enumerate().rev() {
            if i + 1 < self.dec_convs.len() {
                relu_backward(&cache.conv_out[i], &mut d);
            }
            let du = conv.backward(p, g, &cache.conv_inputs[i], t, &d, true).expect("dx requested");
            d = upsample2_backward(&du, conv.cin);
            t /= 2;
        }
        for (i, gru) in self.dec_grus.iter().enumerate().rev() {
            d = gru.backward(p, g, &cache.gru_inputs[i], &cache.grus[i], &d, true).expect("dx requested");
        }
        let mut dz = vec![0.0; arch.latent_dim];
        for row in d.chunks_exact(arch.latent_dim) {
            for (a, v) in dz.iter_mut().zip(row) {
                *a += v;
            }
        }
        dz
    }

    pub fn auth(&self, p: &[f64], z: &[f64]) -> AuthCache {
        let input = z[..self.arch.auth_dims].to_vec();
        let mut hidden = self.auth[0].forward(p, &input, 1);
        relu_inplace(&mut hidden);
        let scores = self.auth[1].forward(p, &hidden, 1);
        AuthCache { input, hidden, scores }
    }

    /// Returns the gradient with respect to the full latent vector (zeros past `auth_dims`).
    pub fn auth_backward(&self, p: &[f64], g: &mut [f64], cache: &AuthCache, dscores: &[f64]) -> Vec<f64> {
        let mut dh = self.auth[1].backward(p, g, &cache.hidden, 1, dscores, true).expect("dx requested");
        relu_backward(&cache.hidden, &mut dh);
        let din = self.auth[0].backward(p, g, &cache.input, 1, &dh, true).expect("dx requested");
        let mut dz = vec![0.0; self.arch.latent_dim];
        dz[..din.len()].copy_from_slice(&din);
        dz
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmodel::layers::dot;
    use crate::seed;

    pub(crate) fn tiny(n_users: usize) -> Architecture {
        Architecture {
            input_len: 12,
            channels: 2,
            latent_dim: 4,
            auth_dims: 2,
            kernel_sizes: vec![3, 5],
            filters_per_kernel: 2,
            merge_channels: 3,
            blocks: 2,
            gru_hidden: 3,
            gru_layers: 2,
            mlp_hidden: vec![4, 3],
            decoder_channels: 3,
            decoder_kernel: 3,
            auth_hidden: 3,
            n_users,
        }
    }

    fn weights(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.2).collect()
    }

    #[test]
    fn standard_lengths() {
        let a = Architecture::new(15);
        assert_eq!(a.encoder_lengths(), vec![200, 100, 50, 25, 13]);
        let net = Network::new(&a).unwrap();
        let p = net.init_params(&mut seed::rng(0, "init", 0));
        let x = vec![0.1; 200 * 6];
        let e = net.encode(&p, &x);
        assert_eq!(e.out.len(), 20);
        let d = net.decode(&p, &e.out[..10]);
        assert_eq!(d.out.len(), 200 * 6);
        assert_eq!(net.auth(&p, &e.out[..10]).scores.len(), 15);
    }

    fn perturb(p: &[f64], s: u64) -> Vec<f64> {
        // positive offsets keep ReLUs away from their kink in the tiny network
        p.iter().enumerate().map(|(i, v)| v + 0.05 * (((i as u64 * 31 + s) % 13) as f64 / 13.0)).collect()
    }

    #[test]
    fn full_network_gradients_match_finite_differences() {
        let arch = tiny(3);
        let net = Network::new(&arch).unwrap();
        let p = perturb(&net.init_params(&mut seed::rng(1, "init", 0)), 3);
        let x: Vec<f64> = (0..arch.input_len * arch.channels).map(|i| (i as f64 * 0.41).sin()).collect();
        let wd = weights(arch.input_len * arch.channels);
        let ws = weights(arch.n_users + 5);
        let we = weights(2 * arch.latent_dim + 3);
        let f = |p: &[f64]| {
            let e = net.encode(p, &x);
            let z = &e.out[..arch.latent_dim];
            let d = net.decode(p, z);
            let a = net.auth(p, z);
            dot(&wd, &d.out) + dot(&ws[..arch.n_users], &a.scores) + dot(&we[..2 * arch.latent_dim], &e.out)
        };
        let e = net.encode(&p, &x);
        let z = e.out[..arch.latent_dim].to_vec();
        let d = net.decode(&p, &z);
        let a = net.auth(&p, &z);
        let mut g = vec![0.0; p.len()];
        let mut dz = net.decode_backward(&p, &mut g, &d, &wd);
        for (v, w) in dz.iter_mut().zip(net.auth_backward(&p, &mut g, &a, &ws[..arch.n_users])) {
            *v += w;
        }
        let mut dout = we[..2 * arch.latent_dim].to_vec();
        for k in 0..arch.latent_dim {
            dout[k] += dz[k];
        }
        net.encode_backward(&p, &mut g, &e, &dout);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..p.len() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / (1.0 + fd.abs()));
        }
        assert!(worst < 1e-6, "worst relative error {worst}");
    }
}
