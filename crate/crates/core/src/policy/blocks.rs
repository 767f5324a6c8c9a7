//! Network blocks: depth tokenizer, cross-modal attention, gated residual fusion,
//! recurrent fusion, highway gate, action head and velocity estimator.

use rand::Rng;

use super::layers::{
    avg_pool2, avg_pool2_backward, c, elu_backward, elu_vec, impl_parameters, sigmoid, Conv2d, Gru, GruCache,
    LayerNorm, Linear, LnCache, Lstm, LstmCache, Real,
};

pub const TOKENIZER_CHANNELS: [usize; 3] = [8, 16, 32];
pub const VELOCITY_CHANNELS: [usize; 2] = [4, 8];

/// Three stride-2 convolutions, 2×2 average pooling, then a per-cell projection.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthTokenizer<R> {
    pub conv1: Conv2d<R>,
    pub conv2: Conv2d<R>,
    pub conv3: Conv2d<R>,
    pub proj: Linear<R>,
}
impl_parameters!(DepthTokenizer { conv1, conv2, conv3, proj });

#[derive(Debug, Clone)]
pub struct TokenizerCache<R> {
    sizes: [(usize, usize); 4],
    a1: Vec<R>,
    a2: Vec<R>,
    a3: Vec<R>,
    cells: Vec<Vec<R>>,
}

impl<R: Real> DepthTokenizer<R> {
    pub fn init<G: Rng>(d_model: usize, rng: &mut G) -> Self {
        let [c1, c2, c3] = TOKENIZER_CHANNELS;
        Self {
            conv1: Conv2d::init(1, c1, 2, rng),
            conv2: Conv2d::init(c1, c2, 2, rng),
            conv3: Conv2d::init(c2, c3, 2, rng),
            proj: Linear::init(c3, d_model, true, rng),
        }
    }

    pub fn forward(&self, depth: &[R], h: usize, w: usize) -> (Vec<Vec<R>>, TokenizerCache<R>) {
        let (p1, h1, w1) = self.conv1.forward(depth, h, w);
        let a1 = elu_vec(&p1);
        let (p2, h2, w2) = self.conv2.forward(&a1, h1, w1);
        let a2 = elu_vec(&p2);
        let (p3, h3, w3) = self.conv3.forward(&a2, h2, w2);
        let a3 = elu_vec(&p3);
        let ch = self.conv3.out_channels();
        let pooled = avg_pool2(&a3, ch, h3, w3);
        let (gh, gw) = (h3 / 2, w3 / 2);
        let cells: Vec<Vec<R>> = (0..gh * gw)
            .map(|n| (0..ch).map(|k| pooled[k * gh * gw + n]).collect())
            .collect();
        let tokens = cells.iter().map(|cell| self.proj.forward(cell)).collect();
        (tokens, TokenizerCache { sizes: [(h, w), (h1, w1), (h2, w2), (h3, w3)], a1, a2, a3, cells })
    }

    pub fn backward(&self, depth: &[R], cache: &TokenizerCache<R>, dtokens: &[Vec<R>], g: &mut Self) -> Vec<R> {
        let ch = self.conv3.out_channels();
        let [(h, w), (h1, w1), (h2, w2), (h3, w3)] = cache.sizes;
        let cells = (h3 / 2) * (w3 / 2);
        let mut dpooled = vec![R::zero(); ch * cells];
        for (n, (cell, dt)) in cache.cells.iter().zip(dtokens).enumerate() {
            let dcell = self.proj.backward(cell, dt, &mut g.proj);
            for k in 0..ch {
                dpooled[k * cells + n] = dcell[k];
            }
        }
        let da3 = avg_pool2_backward(&dpooled, ch, h3, w3);
        let dp3 = elu_backward(&cache.a3, &da3);
        let da2 = self.conv3.backward(&cache.a2, h2, w2, &dp3, &mut g.conv3);
        let dp2 = elu_backward(&cache.a2, &da2);
        let da1 = self.conv2.backward(&cache.a1, h1, w1, &dp2, &mut g.conv2);
        let dp1 = elu_backward(&cache.a1, &da1);
        self.conv1.backward(depth, h, w, &dp1, &mut g.conv1)
    }
}

/// Multi-head attention with the proprioceptive token as the single query.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttention<R> {
    pub ln_query: LayerNorm<R>,
    pub ln_tokens: LayerNorm<R>,
    pub w_q: Linear<R>,
    pub w_k: Linear<R>,
    pub w_v: Linear<R>,
    pub w_o: Linear<R>,
    pub heads: usize,
}
impl_parameters!(CrossAttention { ln_query, ln_tokens, w_q, w_k, w_v, w_o });

#[derive(Debug, Clone)]
pub struct AttentionCache<R> {
    ln_q: LnCache<R>,
    q_in: Vec<R>,
    q: Vec<R>,
    ln_t: Vec<LnCache<R>>,
    e: Vec<Vec<R>>,
    k: Vec<Vec<R>>,
    v: Vec<Vec<R>>,
    /// per head, softmax weights over tokens
    pub weights: Vec<Vec<R>>,
    /// concatenated head outputs before the output projection
    pub heads_concat: Vec<R>,
}

impl<R: Real> CrossAttention<R> {
    pub fn init<G: Rng>(d: usize, heads: usize, rng: &mut G) -> Self {
        Self {
            ln_query: LayerNorm::new(d),
            ln_tokens: LayerNorm::new(d),
            w_q: Linear::init(d, d, false, rng),
            w_k: Linear::init(d, d, false, rng),
            w_v: Linear::init(d, d, false, rng),
            w_o: Linear::init(d, d, true, rng),
            heads,
        }
    }

    fn head_dim(&self) -> usize {
        self.w_q.output_dim() / self.heads
    }

    pub fn forward(&self, query: &[R], tokens: &[Vec<R>]) -> (Vec<R>, AttentionCache<R>) {
        let dh = self.head_dim();
        let scale = R::one() / c::<R>(dh as f64).sqrt();
        let (q_in, ln_q) = self.ln_query.forward(query);
        let q = self.w_q.forward(&q_in);
        let mut ln_t = Vec::with_capacity(tokens.len());
        let mut e = Vec::with_capacity(tokens.len());
        for t in tokens {
            let (y, cache) = self.ln_tokens.forward(t);
            ln_t.push(cache);
            e.push(y);
        }
        let k: Vec<Vec<R>> = e.iter().map(|x| self.w_k.forward(x)).collect();
        let v: Vec<Vec<R>> = e.iter().map(|x| self.w_v.forward(x)).collect();
        let mut weights = Vec::with_capacity(self.heads);
        let mut concat = vec![R::zero(); q.len()];
        for hh in 0..self.heads {
            let s = hh * dh..(hh + 1) * dh;
            let scores: Vec<R> = k
                .iter()
                .map(|kj| q[s.clone()].iter().zip(&kj[s.clone()]).map(|(&a, &b)| a * b).sum::<R>() * scale)
                .collect();
            let m = scores.iter().copied().fold(R::neg_infinity(), R::max);
            let ex: Vec<R> = scores.iter().map(|&x| (x - m).exp()).collect();
            let z: R = ex.iter().copied().sum();
            let alpha: Vec<R> = ex.iter().map(|&x| x / z).collect();
            for (j, &a) in alpha.iter().enumerate() {
                for i in s.clone() {
                    concat[i] += a * v[j][i];
                }
            }
            weights.push(alpha);
        }
        let out = self.w_o.forward(&concat);
        (out, AttentionCache { ln_q, q_in, q, ln_t, e, k, v, weights, heads_concat: concat })
    }

    /// Returns `(d_query, d_tokens)`.
    pub fn backward(&self, cache: &AttentionCache<R>, dout: &[R], g: &mut Self) -> (Vec<R>, Vec<Vec<R>>) {
        let dh = self.head_dim();
        let scale = R::one() / c::<R>(dh as f64).sqrt();
        let n = cache.k.len();
        let dconcat = self.w_o.backward(&cache.heads_concat, dout, &mut g.w_o);
        let mut dq = vec![R::zero(); cache.q.len()];
        let mut dk = vec![vec![R::zero(); cache.q.len()]; n];
        let mut dv = vec![vec![R::zero(); cache.q.len()]; n];
        for hh in 0..self.heads {
            let s = hh * dh..(hh + 1) * dh;
            let alpha = &cache.weights[hh];
            let dalpha: Vec<R> = (0..n)
                .map(|j| s.clone().map(|i| dconcat[i] * cache.v[j][i]).sum())
                .collect();
            for j in 0..n {
                for i in s.clone() {
                    dv[j][i] += alpha[j] * dconcat[i];
                }
            }
            let dot: R = alpha.iter().zip(&dalpha).map(|(&a, &d)| a * d).sum();
            for j in 0..n {
                let ds = alpha[j] * (dalpha[j] - dot) * scale;
                for i in s.clone() {
                    dq[i] += ds * cache.k[j][i];
                    dk[j][i] += ds * cache.q[i];
                }
            }
        }
        let dq_in = self.w_q.backward(&cache.q_in, &dq, &mut g.w_q);
        let d_query = self.ln_query.backward(&cache.ln_q, &dq_in, &mut g.ln_query);
        let mut d_tokens = Vec::with_capacity(n);
        for j in 0..n {
            let mut de = self.w_k.backward(&cache.e[j], &dk[j], &mut g.w_k);
            let dev = self.w_v.backward(&cache.e[j], &dv[j], &mut g.w_v);
            for (a, b) in de.iter_mut().zip(dev) {
                *a += b;
            }
            d_tokens.push(self.ln_tokens.backward(&cache.ln_t[j], &de, &mut g.ln_tokens));
        }
        (d_query, d_tokens)
    }
}

/// `f = x + c ⊙ σ(g)` with `[c; g] = W₂ ELU(W₁ LN(x) + b₁) + b₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedResidualFusion<R> {
    pub ln: LayerNorm<R>,
    pub w1: Linear<R>,
    pub w2: Linear<R>,
}
impl_parameters!(GatedResidualFusion { ln, w1, w2 });

#[derive(Debug, Clone)]
pub struct GrfCache<R> {
    ln: LnCache<R>,
    ln_out: Vec<R>,
    hidden: Vec<R>,
    content: Vec<R>,
    gate: Vec<R>,
}

impl<R: Real> GatedResidualFusion<R> {
    pub fn init<G: Rng>(width: usize, rng: &mut G) -> Self {
        Self { ln: LayerNorm::new(width), w1: Linear::init(width, width, true, rng), w2: Linear::init(width, 2 * width, true, rng) }
    }

    pub fn forward(&self, x: &[R]) -> (Vec<R>, GrfCache<R>) {
        let m = x.len();
        let (ln_out, ln) = self.ln.forward(x);
        let hidden = elu_vec(&self.w1.forward(&ln_out));
        let cg = self.w2.forward(&hidden);
        let content = cg[..m].to_vec();
        let gate: Vec<R> = cg[m..].iter().map(|&v| sigmoid(v)).collect();
        let f = (0..m).map(|i| x[i] + content[i] * gate[i]).collect();
        (f, GrfCache { ln, ln_out, hidden, content, gate })
    }

    pub fn backward(&self, cache: &GrfCache<R>, df: &[R], g: &mut Self) -> Vec<R> {
        let m = df.len();
        let mut dcg = vec![R::zero(); 2 * m];
        for i in 0..m {
            let s = cache.gate[i];
            dcg[i] = df[i] * s;
            dcg[m + i] = df[i] * cache.content[i] * s * (R::one() - s);
        }
        let dhidden = self.w2.backward(&cache.hidden, &dcg, &mut g.w2);
        let dpre = elu_backward(&cache.hidden, &dhidden);
        let dln = self.w1.backward(&cache.ln_out, &dpre, &mut g.w1);
        let dx_ln = self.ln.backward(&cache.ln, &dln, &mut g.ln);
        df.iter().zip(dx_ln).map(|(&a, b)| a + b).collect()
    }
}

/// GRU update followed by the bias-free recurrent projection.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentFusion<R> {
    pub gru: Gru<R>,
    pub w_h: Linear<R>,
}
impl_parameters!(RecurrentFusion { gru, w_h });

impl<R: Real> RecurrentFusion<R> {
    pub fn init<G: Rng>(width: usize, hidden: usize, rng: &mut G) -> Self {
        Self { gru: Gru::init(width, hidden, rng), w_h: Linear::init(hidden, width, false, rng) }
    }

    /// Returns `(h, z_rec)`.
    pub fn forward(&self, f: &[R], h_prev: &[R]) -> (Vec<R>, Vec<R>, GruCache<R>) {
        let (h, cache) = self.gru.forward(f, h_prev);
        let z = self.w_h.forward(&h);
        (h, z, cache)
    }

    /// Returns `(d_f, d_h_prev)`.
    pub fn backward(&self, cache: &GruCache<R>, h: &[R], dz: &[R], dh_extra: &[R], g: &mut Self) -> (Vec<R>, Vec<R>) {
        let mut dh = self.w_h.backward(h, dz, &mut g.w_h);
        for (a, &b) in dh.iter_mut().zip(dh_extra) {
            *a += b;
        }
        self.gru.backward(cache, &dh, &mut g.gru)
    }
}

/// `y = β ⊙ z + (1 − β) ⊙ f` with `β = σ(W [z; f] + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HighwayGate<R> {
    pub w_beta: Linear<R>,
}
impl_parameters!(HighwayGate { w_beta });

impl<R: Real> HighwayGate<R> {
    pub fn init<G: Rng>(width: usize, rng: &mut G) -> Self {
        Self { w_beta: Linear::init(2 * width, width, true, rng) }
    }

    /// Returns `(y, β)`.
    pub fn forward(&self, z: &[R], f: &[R]) -> (Vec<R>, Vec<R>) {
        let cat: Vec<R> = z.iter().chain(f).copied().collect();
        let beta: Vec<R> = self.w_beta.forward(&cat).into_iter().map(sigmoid).collect();
        let y = (0..z.len()).map(|i| beta[i] * z[i] + (R::one() - beta[i]) * f[i]).collect();
        (y, beta)
    }

    /// Returns `(d_z, d_f)`.
    pub fn backward(&self, z: &[R], f: &[R], beta: &[R], dy: &[R], g: &mut Self) -> (Vec<R>, Vec<R>) {
        let m = z.len();
        let cat: Vec<R> = z.iter().chain(f).copied().collect();
        let dpre: Vec<R> = (0..m).map(|i| dy[i] * (z[i] - f[i]) * beta[i] * (R::one() - beta[i])).collect();
        let dcat = self.w_beta.backward(&cat, &dpre, &mut g.w_beta);
        let dz = (0..m).map(|i| dy[i] * beta[i] + dcat[i]).collect();
        let df = (0..m).map(|i| dy[i] * (R::one() - beta[i]) + dcat[m + i]).collect();
        (dz, df)
    }
}

/// Two ELU hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionHead<R> {
    pub l1: Linear<R>,
    pub l2: Linear<R>,
    pub l3: Linear<R>,
}
impl_parameters!(ActionHead { l1, l2, l3 });

#[derive(Debug, Clone)]
pub struct HeadCache<R> {
    h1: Vec<R>,
    h2: Vec<R>,
}

impl<R: Real> ActionHead<R> {
    pub fn init<G: Rng>(input: usize, hidden: usize, output: usize, rng: &mut G) -> Self {
        Self {
            l1: Linear::init(input, hidden, true, rng),
            l2: Linear::init(hidden, hidden, true, rng),
            l3: Linear::init(hidden, output, true, rng),
        }
    }

    pub fn forward(&self, y: &[R]) -> (Vec<R>, HeadCache<R>) {
        let h1 = elu_vec(&self.l1.forward(y));
        let h2 = elu_vec(&self.l2.forward(&h1));
        (self.l3.forward(&h2), HeadCache { h1, h2 })
    }

    pub fn backward(&self, y: &[R], cache: &HeadCache<R>, da: &[R], g: &mut Self) -> Vec<R> {
        let dh2 = self.l3.backward(&cache.h2, da, &mut g.l3);
        let dp2 = elu_backward(&cache.h2, &dh2);
        let dh1 = self.l2.backward(&cache.h1, &dp2, &mut g.l2);
        let dp1 = elu_backward(&cache.h1, &dh1);
        self.l1.backward(y, &dp1, &mut g.l1)
    }
}

/// Depth compression (two stride-2 convolutions and a linear squeeze) feeding an LSTM
/// together with the proprioceptive observation.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityEstimator<R> {
    pub conv1: Conv2d<R>,
    pub conv2: Conv2d<R>,
    pub compress: Linear<R>,
    pub lstm: Lstm<R>,
    pub out: Linear<R>,
}
impl_parameters!(VelocityEstimator { conv1, conv2, compress, lstm, out });

#[derive(Debug, Clone)]
pub struct VelocityCache<R> {
    sizes: [(usize, usize); 2],
    b1: Vec<R>,
    b2: Vec<R>,
    feature: Vec<R>,
    lstm: LstmCache<R>,
    h: Vec<R>,
}

impl<R: Real> VelocityEstimator<R> {
    pub fn init<G: Rng>(obs_dim: usize, flat: usize, feature: usize, hidden: usize, rng: &mut G) -> Self {
        let [c1, c2] = VELOCITY_CHANNELS;
        Self {
            conv1: Conv2d::init(1, c1, 2, rng),
            conv2: Conv2d::init(c1, c2, 2, rng),
            compress: Linear::init(flat, feature, true, rng),
            lstm: Lstm::init(obs_dim + feature, hidden, rng),
            out: Linear::init(hidden, 3, true, rng),
        }
    }

    /// Depth feature alone.
    pub fn compress_depth(&self, depth: &[R], h: usize, w: usize) -> (Vec<R>, Vec<R>, Vec<R>, [(usize, usize); 2]) {
        let (p1, h1, w1) = self.conv1.forward(depth, h, w);
        let b1 = elu_vec(&p1);
        let (p2, _, _) = self.conv2.forward(&b1, h1, w1);
        let b2 = elu_vec(&p2);
        let feature = elu_vec(&self.compress.forward(&b2));
        (feature, b1, b2, [(h, w), (h1, w1)])
    }

    /// Returns `(v̂, h, c)`.
    #[allow(clippy::type_complexity)]
    pub fn forward(&self, obs: &[R], depth: &[R], h: usize, w: usize, hv: &[R], cv: &[R]) -> (Vec<R>, Vec<R>, Vec<R>, VelocityCache<R>) {
        let (feature, b1, b2, sizes) = self.compress_depth(depth, h, w);
        let input: Vec<R> = obs.iter().chain(&feature).copied().collect();
        let (h_new, c_new, lstm) = self.lstm.forward(&input, hv, cv);
        let v = self.out.forward(&h_new);
        let cache = VelocityCache { sizes, b1, b2, feature, lstm, h: h_new.clone() };
        (v, h_new, c_new, cache)
    }

    /// Returns `(d_obs, d_depth, d_h_prev, d_c_prev)`.
    #[allow(clippy::too_many_arguments, clippy::type_complexity)]
    pub fn backward(
        &self,
        depth: &[R],
        obs_dim: usize,
        cache: &VelocityCache<R>,
        dv: &[R],
        dh_extra: &[R],
        dc_extra: &[R],
        g: &mut Self,
    ) -> (Vec<R>, Vec<R>, Vec<R>, Vec<R>) {
        let mut dh = self.out.backward(&cache.h, dv, &mut g.out);
        for (a, &b) in dh.iter_mut().zip(dh_extra) {
            *a += b;
        }
        let (dx, dh_prev, dc_prev) = self.lstm.backward(&cache.lstm, &dh, dc_extra, &mut g.lstm);
        let d_obs = dx[..obs_dim].to_vec();
        let dpre = elu_backward(&cache.feature, &dx[obs_dim..]);
        let db2 = self.compress.backward(&cache.b2, &dpre, &mut g.compress);
        let dp2 = elu_backward(&cache.b2, &db2);
        let [(h, w), (h1, w1)] = cache.sizes;
        let db1 = self.conv2.backward(&cache.b1, h1, w1, &dp2, &mut g.conv2);
        let dp1 = elu_backward(&cache.b1, &db1);
        let d_depth = self.conv1.backward(depth, h, w, &dp1, &mut g.conv1);
        (d_obs, d_depth, dh_prev, dc_prev)
    }
}
