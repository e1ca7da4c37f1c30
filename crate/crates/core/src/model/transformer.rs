use ndarray::{s, Array2};
use rand::Rng;

use super::batch::Batch;
use super::layers::{
    attn_backward, attn_forward, ffn_backward, ffn_forward, positional_encoding, rms_backward, rms_forward, softmax_xent, AttnCache,
    FfnCache, NormCache,
};
use super::params::Params;
use super::{Float, ModelConfig, ModelError, Vocab};
use crate::rng::{self, LabRng};

/// Configuration, parameters and the positional table they share.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    config: ModelConfig,
    params: Params<F>,
    pe: Array2<F>,
}

/// Loss over a batch and the logits of every valid target position.
#[derive(Debug, Clone)]
pub struct ForwardOutput<F> {
    /// Mean cross-entropy over non-PAD target positions; 0 if there are none.
    pub loss: f64,
    pub token_count: usize,
    /// One `target_len x vocab_size` matrix per batch row.
    pub logits: Vec<Array2<F>>,
}

struct Dropout<'a> {
    p: f64,
    rng: Option<&'a mut LabRng>,
}

impl Dropout<'_> {
    /// Inverted dropout; returns the scaled mask when active.
    fn apply<F: Float>(&mut self, x: Array2<F>) -> (Array2<F>, Option<Array2<F>>) {
        match self.rng.as_deref_mut() {
            Some(rng) if self.p > 0.0 => {
                let keep = F::lit(1.0 / (1.0 - self.p));
                let p = self.p;
                let mask = Array2::from_shape_fn(x.raw_dim(), |_| if rng.random::<f64>() < p { F::zero() } else { keep });
                (x * &mask, Some(mask))
            }
            _ => (x, None),
        }
    }
}

fn masked<F: Float>(d: &Array2<F>, mask: &Option<Array2<F>>) -> Array2<F> {
    match mask {
        Some(m) => d * m,
        None => d.clone(),
    }
}

struct EncLayerCache<F> {
    n1: NormCache<F>,
    attn: AttnCache<F>,
    drop1: Option<Array2<F>>,
    n2: NormCache<F>,
    ffn: FfnCache<F>,
    drop2: Option<Array2<F>>,
}

struct DecLayerCache<F> {
    n1: NormCache<F>,
    self_attn: AttnCache<F>,
    drop1: Option<Array2<F>>,
    n2: NormCache<F>,
    cross: AttnCache<F>,
    drop2: Option<Array2<F>>,
    n3: NormCache<F>,
    ffn: FfnCache<F>,
    drop3: Option<Array2<F>>,
}

struct EncoderCache<F> {
    ids: Vec<u32>,
    layers: Vec<EncLayerCache<F>>,
    norm: NormCache<F>,
    out: Array2<F>,
}

struct DecoderCache<F> {
    ids: Vec<u32>,
    layers: Vec<DecLayerCache<F>>,
    norm: NormCache<F>,
    out: Array2<F>,
}

impl<F: Float> Model<F> {
    pub fn new(config: ModelConfig, params: Params<F>) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = Params::<F>::layout(&config);
        let got: Vec<(String, Vec<usize>)> = params.tensors().into_iter().map(|(n, _, s)| (n, s)).collect();
        if expected != got {
            return Err(ModelError::Config("parameter shapes do not match the configuration".into()));
        }
        let pe = positional_encoding(config.max_src_len.max(config.max_tgt_len), config.d_model);
        Ok(Self { config, params, pe })
    }

    /// Fresh parameters drawn from the `init` stream of `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = Params::init(&config, &mut rng::stream(seed, "init"));
        Self::new(config, params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<F> {
        &mut self.params
    }

    pub fn into_params(self) -> Params<F> {
        self.params
    }

    pub fn cast<G: Float>(&self) -> Model<G> {
        Model::new(self.config.clone(), self.params.cast(&self.config)).expect("same configuration")
    }

    fn embed(&self, ids: &[u32]) -> Array2<F> {
        let d = self.config.d_model;
        let scale = F::lit((d as f64).sqrt());
        let mut x = Array2::zeros((ids.len(), d));
        for (t, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(t);
            row.assign(&self.params.embed.row(id as usize));
            row *= scale;
            row += &self.pe.row(t);
        }
        x
    }

    fn encode_cached(&self, ids: &[u32], drop: &mut Dropout) -> EncoderCache<F> {
        let heads = self.config.n_heads;
        let mut h = self.embed(ids);
        let mut layers = Vec::with_capacity(self.params.encoder.len());
        for l in &self.params.encoder {
            let (a, n1) = rms_forward(&h, &l.norm1);
            let (sub, attn) = attn_forward(&l.attn, &a, &a, heads, false);
            let (sub, drop1) = drop.apply(sub);
            h += &sub;
            let (b, n2) = rms_forward(&h, &l.norm2);
            let (sub, ffn) = ffn_forward(&l.ffn, &b);
            let (sub, drop2) = drop.apply(sub);
            h += &sub;
            layers.push(EncLayerCache { n1, attn, drop1, n2, ffn, drop2 });
        }
        let (out, norm) = rms_forward(&h, &self.params.enc_norm);
        EncoderCache { ids: ids.to_vec(), layers, norm, out }
    }

    fn decode_cached(&self, ids: &[u32], memory: &Array2<F>, drop: &mut Dropout) -> DecoderCache<F> {
        let heads = self.config.n_heads;
        let mut z = self.embed(ids);
        let mut layers = Vec::with_capacity(self.params.decoder.len());
        for l in &self.params.decoder {
            let (a, n1) = rms_forward(&z, &l.norm1);
            let (sub, self_attn) = attn_forward(&l.self_attn, &a, &a, heads, true);
            let (sub, drop1) = drop.apply(sub);
            z += &sub;
            let (b, n2) = rms_forward(&z, &l.norm2);
            let (sub, cross) = attn_forward(&l.cross_attn, &b, memory, heads, false);
            let (sub, drop2) = drop.apply(sub);
            z += &sub;
            let (c, n3) = rms_forward(&z, &l.norm3);
            let (sub, ffn) = ffn_forward(&l.ffn, &c);
            let (sub, drop3) = drop.apply(sub);
            z += &sub;
            layers.push(DecLayerCache { n1, self_attn, drop1, n2, cross, drop2, n3, ffn, drop3 });
        }
        let (out, norm) = rms_forward(&z, &self.params.dec_norm);
        DecoderCache { ids: ids.to_vec(), layers, norm, out }
    }

    fn logits(&self, dec_out: &Array2<F>) -> Array2<F> {
        dec_out.dot(&self.params.embed.t())
    }

    fn embed_backward(&self, ids: &[u32], dx: &Array2<F>, grads: &mut Params<F>) {
        let scale = F::lit((self.config.d_model as f64).sqrt());
        for (t, &id) in ids.iter().enumerate() {
            let mut row = grads.embed.row_mut(id as usize);
            row.scaled_add(scale, &dx.row(t));
        }
    }

    fn sequence_backward(&self, enc: &EncoderCache<F>, dec: &DecoderCache<F>, dlogits: &Array2<F>, grads: &mut Params<F>) {
        let p = &self.params;
        grads.embed += &dlogits.t().dot(&dec.out);
        let d_out = dlogits.dot(&p.embed);
        let mut dz = rms_backward(&d_out, &p.dec_norm, &dec.norm, &mut grads.dec_norm);
        let mut d_memory = Array2::zeros(enc.out.raw_dim());
        for (i, (l, c)) in p.decoder.iter().zip(&dec.layers).enumerate().rev() {
            let g = &mut grads.decoder[i];
            let dn = ffn_backward(&l.ffn, &c.ffn, &masked(&dz, &c.drop3), &mut g.ffn);
            dz += &rms_backward(&dn, &l.norm3, &c.n3, &mut g.norm3);
            let (dq, dkv) = attn_backward(&l.cross_attn, &c.cross, &masked(&dz, &c.drop2), &mut g.cross_attn);
            d_memory += &dkv;
            dz += &rms_backward(&dq, &l.norm2, &c.n2, &mut g.norm2);
            let (dq, dkv) = attn_backward(&l.self_attn, &c.self_attn, &masked(&dz, &c.drop1), &mut g.self_attn);
            dz += &rms_backward(&(dq + dkv), &l.norm1, &c.n1, &mut g.norm1);
        }
        self.embed_backward(&dec.ids, &dz, grads);

        let mut dh = rms_backward(&d_memory, &p.enc_norm, &enc.norm, &mut grads.enc_norm);
        for (i, (l, c)) in p.encoder.iter().zip(&enc.layers).enumerate().rev() {
            let g = &mut grads.encoder[i];
            let dn = ffn_backward(&l.ffn, &c.ffn, &masked(&dh, &c.drop2), &mut g.ffn);
            dh += &rms_backward(&dn, &l.norm2, &c.n2, &mut g.norm2);
            let (dq, dkv) = attn_backward(&l.attn, &c.attn, &masked(&dh, &c.drop1), &mut g.attn);
            dh += &rms_backward(&(dq + dkv), &l.norm1, &c.n1, &mut g.norm1);
        }
        self.embed_backward(&enc.ids, &dh, grads);
    }

    /// Valid `(source, decoder input, labels)` of every row with a target.
    fn rows(&self, batch: &Batch) -> Result<Vec<(usize, Vec<u32>, Vec<u32>, Vec<u32>)>, ModelError> {
        batch.validate(&self.config)?;
        let mut out = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let (s, t) = batch.lengths(i);
            if t == 0 {
                continue;
            }
            out.push((
                i,
                batch.src.slice(s![i, ..s]).to_vec(),
                batch.tgt_in.slice(s![i, ..t]).to_vec(),
                batch.labels.slice(s![i, ..t]).to_vec(),
            ));
        }
        Ok(out)
    }

    pub fn forward_loss(&self, batch: &Batch) -> Result<ForwardOutput<F>, ModelError> {
        let rows = self.rows(batch)?;
        let mut logits = vec![Array2::zeros((0, self.config.vocab_size)); batch.len()];
        let mut total = 0f64;
        let mut count = 0usize;
        let mut drop = Dropout { p: 0.0, rng: None };
        for (i, src, tgt_in, labels) in rows {
            let enc = self.encode_cached(&src, &mut drop);
            let dec = self.decode_cached(&tgt_in, &enc.out, &mut drop);
            let l = self.logits(&dec.out);
            total += softmax_xent(l.view(), &labels).0;
            count += labels.len();
            logits[i] = l;
        }
        Ok(ForwardOutput { loss: if count == 0 { 0.0 } else { total / count as f64 }, token_count: count, logits })
    }

    /// Loss and its gradient; dropout is active when `rng` is given and the
    /// configured rate is positive.
    pub fn loss_and_grad(&self, batch: &Batch, rng: Option<&mut LabRng>) -> Result<(f64, Params<F>), ModelError> {
        let rows = self.rows(batch)?;
        let mut grads = Params::zeros(&self.config);
        let count: usize = rows.iter().map(|r| r.3.len()).sum();
        if count == 0 {
            return Ok((0.0, grads));
        }
        let inv = F::lit(1.0 / count as f64);
        let mut drop = Dropout { p: self.config.dropout, rng };
        let mut total = 0f64;
        for (_, src, tgt_in, labels) in rows {
            let enc = self.encode_cached(&src, &mut drop);
            let dec = self.decode_cached(&tgt_in, &enc.out, &mut drop);
            let l = self.logits(&dec.out);
            let (loss, mut dlogits) = softmax_xent(l.view(), &labels);
            total += loss;
            for (t, &y) in labels.iter().enumerate() {
                dlogits[[t, y as usize]] -= F::one();
            }
            dlogits *= inv;
            self.sequence_backward(&enc, &dec, &dlogits, &mut grads);
        }
        Ok((total / count as f64, grads))
    }

    pub fn backward(&self, batch: &Batch) -> Result<Params<F>, ModelError> {
        Ok(self.loss_and_grad(batch, None)?.1)
    }

    /// Greedy generation: argmax with ties to the lowest id, until EOS or
    /// `max_len` tokens. The EOS token is not included.
    pub fn greedy_decode(&self, src: &[u32], max_len: usize) -> Result<Vec<u32>, ModelError> {
        let src = &src[..src.len().min(self.config.max_src_len)];
        if src.is_empty() {
            return Err(ModelError::Contract("empty source".into()));
        }
        if let Some(&bad) = src.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(ModelError::Contract(format!("token id {bad} exceeds vocabulary")));
        }
        let mut drop = Dropout { p: 0.0, rng: None };
        let memory = self.encode_cached(src, &mut drop).out;
        let limit = max_len.min(self.config.max_tgt_len);
        let mut ids = vec![Vocab::BOS_ID];
        let mut out = Vec::new();
        while out.len() < limit {
            let dec = self.decode_cached(&ids, &memory, &mut drop);
            let last = dec.out.row(ids.len() - 1);
            let scores = self.params.embed.dot(&last);
            let mut best = 0usize;
            for (j, &v) in scores.iter().enumerate() {
                if v > scores[best] {
                    best = j;
                }
            }
            let next = best as u32;
            if next == Vocab::EOS_ID {
                break;
            }
            out.push(next);
            ids.push(next);
        }
        Ok(out)
    }
}
