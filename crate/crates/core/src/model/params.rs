use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Float, ModelConfig, ModelError};

#[derive(Debug, Clone, PartialEq)]
pub struct Attention<F> {
    pub wq: Array2<F>,
    pub wk: Array2<F>,
    pub wv: Array2<F>,
    pub wo: Array2<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward<F> {
    /// `d_model x d_ff`
    pub w1: Array2<F>,
    /// `d_ff x d_model`
    pub w2: Array2<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<F> {
    pub norm1: Array1<F>,
    pub attn: Attention<F>,
    pub norm2: Array1<F>,
    pub ffn: FeedForward<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer<F> {
    pub norm1: Array1<F>,
    pub self_attn: Attention<F>,
    pub norm2: Array1<F>,
    pub cross_attn: Attention<F>,
    pub norm3: Array1<F>,
    pub ffn: FeedForward<F>,
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    /// `vocab_size x d_model`; also the output projection.
    pub embed: Array2<F>,
    pub encoder: Vec<EncoderLayer<F>>,
    pub enc_norm: Array1<F>,
    pub decoder: Vec<DecoderLayer<F>>,
    pub dec_norm: Array1<F>,
}

fn normal<F: Float, R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Array2<F> {
    let dist = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_fn((rows, cols), |_| F::lit(dist.sample(rng)))
}

impl<F: Float> Attention<F> {
    fn init<R: Rng>(rng: &mut R, d: usize) -> Self {
        let s = 1.0 / (d as f64).sqrt();
        Self { wq: normal(rng, d, d, s), wk: normal(rng, d, d, s), wv: normal(rng, d, d, s), wo: normal(rng, d, d, s) }
    }

    fn zeros(d: usize) -> Self {
        let z = || Array2::zeros((d, d));
        Self { wq: z(), wk: z(), wv: z(), wo: z() }
    }
}

impl<F: Float> FeedForward<F> {
    fn init<R: Rng>(rng: &mut R, d: usize, ff: usize) -> Self {
        Self { w1: normal(rng, d, ff, 1.0 / (d as f64).sqrt()), w2: normal(rng, ff, d, 1.0 / (ff as f64).sqrt()) }
    }

    fn zeros(d: usize, ff: usize) -> Self {
        Self { w1: Array2::zeros((d, ff)), w2: Array2::zeros((ff, d)) }
    }
}

impl<F: Float> Params<F> {
    /// Gaussian weights with standard deviation `1/sqrt(fan_in)`, unit
    /// normalisation gains.
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Self {
        let (d, ff) = (config.d_model, config.d_ff);
        let ones = || Array1::from_elem(d, F::one());
        let embed = normal(rng, config.vocab_size, d, 1.0 / (d as f64).sqrt());
        let encoder = (0..config.n_enc_layers)
            .map(|_| EncoderLayer {
                norm1: ones(),
                attn: Attention::init(rng, d),
                norm2: ones(),
                ffn: FeedForward::init(rng, d, ff),
            })
            .collect();
        let decoder = (0..config.n_dec_layers)
            .map(|_| DecoderLayer {
                norm1: ones(),
                self_attn: Attention::init(rng, d),
                norm2: ones(),
                cross_attn: Attention::init(rng, d),
                norm3: ones(),
                ffn: FeedForward::init(rng, d, ff),
            })
            .collect();
        Self { embed, encoder, enc_norm: ones(), decoder, dec_norm: ones() }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        let (d, ff) = (config.d_model, config.d_ff);
        let z = || Array1::zeros(d);
        Self {
            embed: Array2::zeros((config.vocab_size, d)),
            encoder: (0..config.n_enc_layers)
                .map(|_| EncoderLayer { norm1: z(), attn: Attention::zeros(d), norm2: z(), ffn: FeedForward::zeros(d, ff) })
                .collect(),
            enc_norm: z(),
            decoder: (0..config.n_dec_layers)
                .map(|_| DecoderLayer {
                    norm1: z(),
                    self_attn: Attention::zeros(d),
                    norm2: z(),
                    cross_attn: Attention::zeros(d),
                    norm3: z(),
                    ffn: FeedForward::zeros(d, ff),
                })
                .collect(),
            dec_norm: z(),
        }
    }

    /// Tensor names and shapes in canonical order.
    pub fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        Self::zeros(config).tensors().into_iter().map(|(n, _, s)| (n, s)).collect()
    }

    /// `(name, data, shape)` for every tensor in canonical order.
    pub fn tensors(&self) -> Vec<(String, &[F], Vec<usize>)> {
        type Entry<'a, F> = (String, &'a [F], Vec<usize>);
        fn push<'a, F: Float, D: ndarray::Dimension>(out: &mut Vec<Entry<'a, F>>, name: String, a: &'a ndarray::Array<F, D>) {
            out.push((name, a.as_slice().expect("standard layout"), a.shape().to_vec()));
        }
        fn attn<'a, F: Float>(out: &mut Vec<Entry<'a, F>>, p: &str, a: &'a Attention<F>) {
            for (n, w) in [("q", &a.wq), ("k", &a.wk), ("v", &a.wv), ("o", &a.wo)] {
                push(out, format!("{p}.w{n}"), w);
            }
        }
        fn ffn<'a, F: Float>(out: &mut Vec<Entry<'a, F>>, p: &str, f: &'a FeedForward<F>) {
            push(out, format!("{p}.w1"), &f.w1);
            push(out, format!("{p}.w2"), &f.w2);
        }
        let mut out = Vec::new();
        push(&mut out, "embed".into(), &self.embed);
        for (i, l) in self.encoder.iter().enumerate() {
            push(&mut out, format!("enc.{i}.norm1"), &l.norm1);
            attn(&mut out, &format!("enc.{i}.attn"), &l.attn);
            push(&mut out, format!("enc.{i}.norm2"), &l.norm2);
            ffn(&mut out, &format!("enc.{i}.ffn"), &l.ffn);
        }
        push(&mut out, "enc_norm".into(), &self.enc_norm);
        for (i, l) in self.decoder.iter().enumerate() {
            push(&mut out, format!("dec.{i}.norm1"), &l.norm1);
            attn(&mut out, &format!("dec.{i}.self_attn"), &l.self_attn);
            push(&mut out, format!("dec.{i}.norm2"), &l.norm2);
            attn(&mut out, &format!("dec.{i}.cross_attn"), &l.cross_attn);
            push(&mut out, format!("dec.{i}.norm3"), &l.norm3);
            ffn(&mut out, &format!("dec.{i}.ffn"), &l.ffn);
        }
        push(&mut out, "dec_norm".into(), &self.dec_norm);
        out
    }

    /// Mutable data of every tensor, in the order of [`Params::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        fn m<F: Float>(a: &mut Array2<F>) -> &mut [F] {
            a.as_slice_mut().expect("standard layout")
        }
        fn v<F: Float>(a: &mut Array1<F>) -> &mut [F] {
            a.as_slice_mut().expect("standard layout")
        }
        out.push(m(&mut self.embed));
        for l in &mut self.encoder {
            out.push(v(&mut l.norm1));
            let a = &mut l.attn;
            out.extend([m(&mut a.wq), m(&mut a.wk), m(&mut a.wv), m(&mut a.wo)]);
            out.push(v(&mut l.norm2));
            out.extend([m(&mut l.ffn.w1), m(&mut l.ffn.w2)]);
        }
        out.push(v(&mut self.enc_norm));
        for l in &mut self.decoder {
            out.push(v(&mut l.norm1));
            let a = &mut l.self_attn;
            out.extend([m(&mut a.wq), m(&mut a.wk), m(&mut a.wv), m(&mut a.wo)]);
            out.push(v(&mut l.norm2));
            let a = &mut l.cross_attn;
            out.extend([m(&mut a.wq), m(&mut a.wk), m(&mut a.wv), m(&mut a.wo)]);
            out.push(v(&mut l.norm3));
            out.extend([m(&mut l.ffn.w1), m(&mut l.ffn.w2)]);
        }
        out.push(v(&mut self.dec_norm));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t, _)| t.len()).sum()
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors().into_iter().find(|(_, t, _)| t.iter().any(|x| !x.is_finite())).map(|(n, _, _)| n)
    }

    pub fn check_finite(&self, what: &str) -> Result<(), ModelError> {
        match self.first_non_finite() {
            Some(name) => Err(ModelError::NonFinite(format!("{what} `{name}`"))),
            None => Ok(()),
        }
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Params<F>) {
        for (dst, (_, src, _)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *s;
            }
        }
    }

    pub fn scale(&mut self, factor: F) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Elementwise conversion to another scalar type.
    pub fn cast<G: Float>(&self, config: &ModelConfig) -> Params<G> {
        let mut out = Params::<G>::zeros(config);
        for (dst, (_, src, _)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = G::from(*s).expect("finite parameter");
            }
        }
        out
    }

    /// Parameters matching `config`'s shapes, filled from `(name, data)`
    /// pairs which must follow the canonical order.
    pub fn from_tensors(config: &ModelConfig, data: Vec<(String, Vec<F>)>) -> Result<Self, ModelError> {
        let mut out = Self::zeros(config);
        let layout: Vec<(String, usize)> = out.tensors().into_iter().map(|(n, t, _)| (n, t.len())).collect();
        if layout.len() != data.len() {
            return Err(ModelError::Checkpoint(format!("expected {} tensors, found {}", layout.len(), data.len())));
        }
        for ((dst, (name, len)), (got_name, values)) in out.tensors_mut().into_iter().zip(layout).zip(data) {
            if name != got_name || len != values.len() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor `{got_name}` ({} values) does not match expected `{name}` ({len} values)",
                    values.len()
                )));
            }
            dst.copy_from_slice(&values);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn config() -> ModelConfig {
        ModelConfig { n_enc_layers: 2, ..ModelConfig::toy(20) }
    }

    #[test]
    fn tensor_listings_agree() {
        let c = config();
        let mut p = Params::<f32>::init(&c, &mut rng::stream(1, "init"));
        let lens: Vec<usize> = p.tensors().iter().map(|(_, t, _)| t.len()).collect();
        let shapes: Vec<usize> = p.tensors().iter().map(|(_, _, s)| s.iter().product()).collect();
        assert_eq!(lens, shapes);
        let mut_lens: Vec<usize> = p.tensors_mut().iter().map(|t| t.len()).collect();
        assert_eq!(lens, mut_lens);
        // Writing through tensors_mut lands on the tensor of the same name.
        for (i, t) in p.tensors_mut().into_iter().enumerate() {
            t[0] = i as f32;
        }
        for (i, (_, t, _)) in p.tensors().iter().enumerate() {
            assert_eq!(t[0], i as f32);
        }
    }

    #[test]
    fn parameter_count_matches_formula() {
        let c = config();
        let (d, ff, v) = (c.d_model, c.d_ff, c.vocab_size);
        let enc = 2 * d + 4 * d * d + 2 * d * ff;
        let dec = 3 * d + 8 * d * d + 2 * d * ff;
        let expected = v * d + c.n_enc_layers * enc + d + c.n_dec_layers * dec + d;
        assert_eq!(Params::<f32>::zeros(&c).n_params(), expected);
    }

    #[test]
    fn from_tensors_checks_layout() {
        let c = config();
        let p = Params::<f32>::init(&c, &mut rng::stream(2, "init"));
        let data: Vec<(String, Vec<f32>)> = p.tensors().into_iter().map(|(n, t, _)| (n, t.to_vec())).collect();
        assert_eq!(Params::from_tensors(&c, data.clone()).unwrap(), p);
        let mut short = data.clone();
        short.pop();
        assert!(Params::<f32>::from_tensors(&c, short).is_err());
        let mut renamed = data;
        renamed[0].0 = "other".into();
        assert!(Params::<f32>::from_tensors(&c, renamed).is_err());
    }

    #[test]
    fn non_finite_detection() {
        let c = config();
        let mut p = Params::<f64>::zeros(&c);
        assert!(p.check_finite("params").is_ok());
        p.decoder[0].ffn.w2[[1, 1]] = f64::NAN;
        assert_eq!(p.first_non_finite().as_deref(), Some("dec.0.ffn.w2"));
    }
}
