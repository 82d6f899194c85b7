//! 1-D U-Net vector field over time-major `[T, C]` latents.

use crate::error::{Error, Result};
use crate::flow::{check_time, VectorField};
use crate::numerics::{fan_in_uniform, Bound, ParamSet, Real, Tensor, Var};
use crate::refiner::{sinusoidal_embedding, RefinerConfig};
use crate::rng::{stream, Rng};

const GN_EPS: f64 = 1e-5;
const KERNEL: usize = 3;

/// Source row for position `i` of a reflect-padded sequence of length `len`.
pub fn reflect_index(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let m = i % period;
    if m < len {
        m
    } else {
        period - m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refiner<T> {
    pub config: RefinerConfig,
    pub params: ParamSet<T>,
}

struct Init<'a, T: Real> {
    p: &'a mut ParamSet<T>,
    rng: Rng,
}

impl<T: Real> Init<'_, T> {
    fn conv(&mut self, name: &str, k: usize, cin: usize, cout: usize) {
        let w = fan_in_uniform(&[k, cin, cout], k * cin, &mut self.rng);
        self.p.insert(format!("{name}.w"), w);
        self.p.insert(format!("{name}.b"), Tensor::zeros(&[cout]));
    }

    fn linear(&mut self, name: &str, cin: usize, cout: usize) {
        let w = fan_in_uniform(&[cin, cout], cin, &mut self.rng);
        self.p.insert(format!("{name}.w"), w);
        self.p.insert(format!("{name}.b"), Tensor::zeros(&[cout]));
    }

    fn norm(&mut self, name: &str, c: usize) {
        self.p.insert(format!("{name}.g"), Tensor::full(&[c], T::one()));
        self.p.insert(format!("{name}.b"), Tensor::zeros(&[c]));
    }

    fn res(&mut self, name: &str, cin: usize, cout: usize, tdim: usize) {
        self.norm(&format!("{name}.gn1"), cin);
        self.conv(&format!("{name}.conv1"), KERNEL, cin, cout);
        self.linear(&format!("{name}.temb"), tdim, cout);
        self.norm(&format!("{name}.gn2"), cout);
        self.conv(&format!("{name}.conv2"), KERNEL, cout, cout);
        if cin != cout {
            self.conv(&format!("{name}.skip"), 1, cin, cout);
        }
    }
}

impl<T: Real> Refiner<T> {
    /// Fan-in uniform weights; the output convolution starts at zero so the
    /// untrained field is identically zero.
    pub fn init(config: RefinerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut b = Init { p: &mut params, rng: stream(seed, &[0x5245_4649]) };
        let (d, td, depth) = (config.latent_dim, config.time_dim, config.depth);
        b.linear("temb", td, td);
        b.conv("in", KERNEL, 2 * d, config.channels(0));
        let mut ch = config.channels(0);
        for l in 0..depth {
            let c = config.channels(l);
            b.res(&format!("down{l}.res"), ch, c, td);
            b.conv(&format!("down{l}.conv"), KERNEL, c, c);
            ch = c;
        }
        b.res("mid.res1", ch, ch, td);
        b.norm("mid.attn.gn", ch);
        for m in ["q", "k", "v", "o"] {
            b.linear(&format!("mid.attn.{m}"), ch, ch);
        }
        b.res("mid.res2", ch, ch, td);
        for l in (0..depth).rev() {
            let c = config.channels(l);
            b.conv(&format!("up{l}.conv"), KERNEL, ch, ch);
            b.res(&format!("up{l}.res"), ch + c, c, td);
            ch = c;
        }
        b.norm("out.gn", ch);
        params.insert("out.w", Tensor::zeros(&[KERNEL, ch, d]));
        params.insert("out.b", Tensor::zeros(&[d]));
        Ok(Self { config, params })
    }

    pub fn cast<U: Real>(&self) -> Refiner<U> {
        Refiner { config: self.config.clone(), params: self.params.cast() }
    }

    fn conv<'g>(&self, p: &Bound<'g, '_, T>, name: &str, x: Var<'g, T>, stride: usize) -> Var<'g, T> {
        let w = p.var(&format!("{name}.w"));
        let pad = w.shape()[0] / 2;
        x.conv1d(w, stride, pad).add_row(p.var(&format!("{name}.b")))
    }

    fn norm_act<'g>(&self, p: &Bound<'g, '_, T>, name: &str, x: Var<'g, T>) -> Var<'g, T> {
        let (g, b) = (p.var(&format!("{name}.g")), p.var(&format!("{name}.b")));
        x.group_norm(self.config.groups, g, b, GN_EPS).silu()
    }

    fn res<'g>(&self, p: &Bound<'g, '_, T>, name: &str, x: Var<'g, T>, temb: Var<'g, T>) -> Var<'g, T> {
        let n = |s: &str| format!("{name}.{s}");
        let h = self.conv(p, &n("conv1"), self.norm_act(p, &n("gn1"), x), 1);
        let h = h.add_row(temb.linear(p.var(&n("temb.w")), p.var(&n("temb.b"))));
        let h = self.conv(p, &n("conv2"), self.norm_act(p, &n("gn2"), h), 1);
        let skip = if self.params.get(&n("skip.w")).is_some() { self.conv(p, &n("skip"), x, 1) } else { x };
        skip.add(h)
    }

    fn attention<'g>(&self, p: &Bound<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        let v = |s: &str| p.var(&format!("mid.attn.{s}"));
        let h = x.group_norm(self.config.groups, v("gn.g"), v("gn.b"), GN_EPS);
        let q = h.linear(v("q.w"), v("q.b"));
        let k = h.linear(v("k.w"), v("k.b"));
        let val = h.linear(v("v.w"), v("v.b"));
        let scale = 1.0 / (x.shape()[1] as f64).sqrt();
        let a = q.matmul(k.transpose()).scale(scale).softmax_rows().matmul(val);
        x.add(a.linear(v("o.w"), v("o.b")))
    }

    /// Network body on an already padded `[T', 2d]` input, `T'` a multiple of `2^depth`.
    fn body<'g>(&self, p: &Bound<'g, '_, T>, input: Var<'g, T>, t: f64) -> Result<Var<'g, T>> {
        let g = input.graph();
        let depth = self.config.depth;
        let raw = g.constant(sinusoidal_embedding(t, self.config.time_dim)?);
        let temb = raw.linear(p.var("temb.w"), p.var("temb.b")).silu();
        let mut h = self.conv(p, "in", input, 1);
        let mut skips = Vec::with_capacity(depth);
        for l in 0..depth {
            h = self.res(p, &format!("down{l}.res"), h, temb);
            skips.push(h);
            h = self.conv(p, &format!("down{l}.conv"), h, 2);
        }
        h = self.res(p, "mid.res1", h, temb);
        h = self.attention(p, h);
        h = self.res(p, "mid.res2", h, temb);
        for l in (0..depth).rev() {
            let len = h.shape()[0];
            h = self.conv(p, &format!("up{l}.conv"), h.gather_rows((0..2 * len).map(|i| i / 2).collect()), 1);
            h = Var::concat_cols(&[h, skips[l]]);
            h = self.res(p, &format!("up{l}.res"), h, temb);
        }
        Ok(self.conv(p, "out", self.norm_act(p, "out.gn", h), 1))
    }
}

impl<T: Real> VectorField<T> for Refiner<T> {
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn latent_dim(&self) -> Option<usize> {
        Some(self.config.latent_dim)
    }

    fn velocity<'g>(&self, p: &Bound<'g, '_, T>, x: Var<'g, T>, cond: Var<'g, T>, t: f64) -> Result<Var<'g, T>> {
        check_time(t)?;
        let (xs, cs) = (x.shape(), cond.shape());
        if xs.len() != 2 || xs != cs || xs[1] != self.config.latent_dim {
            return Err(Error::Shape(format!(
                "refiner expects matching [T, {}] inputs, got {xs:?} and {cs:?}",
                self.config.latent_dim
            )));
        }
        let frames = xs[0];
        let unit = 1usize << self.config.depth;
        let padded = frames.div_ceil(unit) * unit;
        let mut input = Var::concat_cols(&[x, cond]);
        if padded != frames {
            input = input.gather_rows((0..padded).map(|i| reflect_index(i, frames)).collect());
        }
        let out = self.body(p, input, t)?;
        Ok(if padded != frames { out.gather_rows((0..frames).collect()) } else { out })
    }
}

/// Field value `v(x_t, z_cond, t)`.
pub fn unet_forward<T: Real>(x_t: &Tensor<T>, z_cond: &Tensor<T>, t: f64, model: &Refiner<T>) -> Result<Tensor<T>> {
    model.eval(x_t, z_cond, t)
}
