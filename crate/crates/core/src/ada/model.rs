use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AdaConfig, InputFormat, LossBreakdown};
use crate::audio::{ExcerptBatch, ExcerptSampler, SymbolCorpus};
use crate::error::{Error, Result};
use crate::quantize::{
    amae_project, amae_quantize, diversity_loss, histogram, perplexity, Codebook, QuantizerKind,
};
use crate::sampling::sample_logits;
use crate::stack::{
    GenerationState, Head, HeadWeights, InputProj, InputWeights, StackParams, StackWeights,
};
use crate::tensor::{Adam, Graph, NodeId, Polyak, ParamStore, Tensor};

/// Codebook collapse: perplexity dropped below a quarter of the codebook.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CollapseEvent {
    pub step: u64,
    pub perplexity: f64,
    pub threshold: f64,
}

pub fn collapse_threshold(k: usize) -> f64 {
    0.25 * k as f64
}

/// Evaluation pass summary.
#[derive(Debug, Clone)]
pub struct EvalStats {
    /// Nats per timestep over the windows evaluated.
    pub nll: f64,
    pub perplexity: f64,
    pub histogram: Vec<u64>,
    pub windows: usize,
    /// Window length in input timesteps (perplexity estimates depend on it).
    pub window_len: usize,
}

struct Parts {
    enc_in: InputProj,
    enc_stack: StackParams,
    enc_head: Head,
    mod_in: InputProj,
    mod_stack: StackParams,
    mod_head: Head,
    dec_in: InputProj,
    local_stack: StackParams,
    local_head: Head,
}

/// A full autoencoder with its optimizer state. All read-only passes
/// (evaluation, code extraction, sampling) run on the Polyak shadow.
pub struct AdaModel {
    pub config: AdaConfig,
    store: ParamStore,
    adam: Adam,
    polyak: Polyak,
    codebook: Option<Codebook>,
    parts: Parts,
    step: u64,
    seed: u64,
    events: Vec<CollapseEvent>,
    /// Debug switch: feed q directly to the decoder (no bottleneck).
    pub bypass_quantizer: bool,
}

/// Symbol index mapped affinely onto [-1, 1].
fn continuous_tensor(symbols: &[u16], b: usize, t: usize, alphabet: usize) -> Tensor {
    let denom = (alphabet - 1) as f32;
    let data: Vec<f32> = symbols.iter().map(|&s| 2.0 * s as f32 / denom - 1.0).collect();
    Tensor::new(vec![b, 1, t], data).expect("shape agrees")
}

/// Teacher forcing: shift right one step, start symbol = alphabet.
fn shifted_symbols(symbols: &[u16], b: usize, t: usize, alphabet: usize) -> Vec<u16> {
    let mut out = vec![0u16; b * t];
    for bb in 0..b {
        out[bb * t] = alphabet as u16;
        for tt in 1..t {
            out[bb * t + tt] = symbols[bb * t + tt - 1];
        }
    }
    out
}

struct QuantizeOut {
    qp: NodeId,
    codes: Vec<u16>,
    commitment: Option<NodeId>,
    diversity: Option<NodeId>,
    ema: Option<(Vec<f32>, Vec<f32>)>,
}

impl AdaModel {
    pub fn new(config: AdaConfig, seed: u64) -> Result<Self> {
        let mut config = config;
        config.modulator.skip = config.modulator.skip.max(1);
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let k_alpha = config.input_alphabet;
        let qdim = config.quantizer.query_dim();

        let enc_in = match config.input_format {
            InputFormat::OneHot => {
                InputProj::symbols(&mut store, "enc", k_alpha, config.encoder.residual, &mut rng)
            }
            InputFormat::Continuous => {
                InputProj::continuous(&mut store, "enc", 1, config.encoder.residual, &mut rng)
            }
        };
        let enc_stack = StackParams::init(&mut store, "enc", &config.encoder, &mut rng)?;
        let enc_head = Head::init(&mut store, "enc.head", config.encoder.skip, qdim, false, &mut rng);

        let mod_in =
            InputProj::continuous(&mut store, "mod", qdim, config.modulator.residual, &mut rng);
        let mod_stack = StackParams::init(&mut store, "mod", &config.modulator, &mut rng)?;
        let mod_head = Head::init(
            &mut store,
            "mod.head",
            config.modulator.skip,
            config.local.cond_channels,
            false,
            &mut rng,
        );

        let dec_in = match config.decoder_input_format {
            InputFormat::OneHot => {
                // One extra row for the sequence-start embedding.
                InputProj::symbols(&mut store, "dec", k_alpha + 1, config.local.residual, &mut rng)
            }
            InputFormat::Continuous => {
                InputProj::continuous(&mut store, "dec", 1, config.local.residual, &mut rng)
            }
        };
        let local_stack = StackParams::init(&mut store, "local", &config.local, &mut rng)?;
        let local_head =
            Head::init(&mut store, "local.head", config.local.skip, k_alpha, true, &mut rng);

        let adam = Adam::new(&store, config.adam);
        let polyak = Polyak::new(&store, config.polyak_decay);
        let codebook = match config.quantizer.kind {
            QuantizerKind::Vq => Some(Codebook::new(config.quantizer.k, config.quantizer.d)),
            QuantizerKind::Amae => None,
        };
        Ok(AdaModel {
            config,
            store,
            adam,
            polyak,
            codebook,
            parts: Parts {
                enc_in,
                enc_stack,
                enc_head,
                mod_in,
                mod_stack,
                mod_head,
                dec_in,
                local_stack,
                local_head,
            },
            step: 0,
            seed,
            events: Vec::new(),
            bypass_quantizer: false,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn events(&self) -> &[CollapseEvent] {
        &self.events
    }

    /// Whether the collapse detector has fired at any evaluation.
    pub fn collapse_flagged(&self) -> bool {
        !self.events.is_empty()
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn codebook(&self) -> Option<&Codebook> {
        self.codebook.as_ref()
    }

    /// Copy the live parameters into the Polyak shadow, so the evaluation
    /// paths see exactly the live model.
    pub fn sync_shadow(&mut self) {
        self.polyak.sync(&self.store);
    }

    #[doc(hidden)]
    pub fn sync_shadow_for_tests(&mut self) {
        self.sync_shadow();
    }

    /// Build the encoder path up to the (projected) query sequence.
    fn encode_graph(
        &self,
        g: &mut Graph,
        symbols: &Arc<Vec<u16>>,
        b: usize,
        t: usize,
    ) -> Result<NodeId> {
        if t % self.config.hop != 0 {
            return Err(Error::Config(format!(
                "excerpt length {} is not divisible by hop {}",
                t, self.config.hop
            )));
        }
        let x = match self.config.input_format {
            InputFormat::OneHot => {
                self.parts.enc_in.forward_symbols(g, &self.store, symbols.clone(), b, t)?
            }
            InputFormat::Continuous => {
                let xin = g.input(continuous_tensor(symbols, b, t, self.config.input_alphabet))?;
                self.parts.enc_in.forward_continuous(g, &self.store, xin)?
            }
        };
        let skip = self.parts.enc_stack.forward(g, &self.store, x, None)?;
        let raw = self.parts.enc_head.forward(g, &self.store, skip)?;
        let pooled = g.mean_pool(raw, self.config.hop)?;
        match self.config.quantizer.kind {
            QuantizerKind::Vq => Ok(pooled),
            QuantizerKind::Amae => amae_project(
                g,
                pooled,
                self.config.quantizer.projection,
                self.config.quantizer.epsilon,
            ),
        }
    }

    fn quantize_graph(&mut self, g: &mut Graph, q: NodeId) -> Result<QuantizeOut> {
        if self.bypass_quantizer {
            // Monitoring still wants code assignments.
            let codes = self.assign_codes(g, q)?;
            return Ok(QuantizeOut { qp: q, codes, commitment: None, diversity: None, ema: None });
        }
        match self.config.quantizer.kind {
            QuantizerKind::Vq => {
                let cb = self.codebook.as_mut().expect("vq model has a codebook");
                if !cb.is_initialized() {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(self.seed ^ 0x636f_6465_626f_6f6b);
                    cb.init_from_queries(g, q, &mut rng)?;
                }
                let out = self.codebook.as_ref().unwrap().quantize(g, q)?;
                Ok(QuantizeOut {
                    qp: out.quantized,
                    codes: out.codes,
                    commitment: Some(out.commitment),
                    diversity: None,
                    ema: Some((out.assign_counts, out.assign_sums)),
                })
            }
            QuantizerKind::Amae => {
                let out = amae_quantize(g, q)?;
                let qbar = g.mean_batch_time(q)?;
                let div = diversity_loss(g, qbar, self.config.quantizer.projection)?;
                Ok(QuantizeOut {
                    qp: out.quantized,
                    codes: out.codes,
                    commitment: None,
                    diversity: Some(div),
                    ema: None,
                })
            }
        }
    }

    /// Deterministic code assignment without touching training state.
    fn assign_codes(&self, g: &Graph, q: NodeId) -> Result<Vec<u16>> {
        match self.config.quantizer.kind {
            QuantizerKind::Vq => {
                let cb = self
                    .codebook
                    .as_ref()
                    .filter(|cb| cb.is_initialized())
                    .ok_or_else(|| Error::Config("codebook not initialised yet".into()))?;
                let (cols, b, _, t) = crate::quantize::columns(g, q)?;
                Ok(cb.assign(&cols, b * t))
            }
            QuantizerKind::Amae => {
                let mut g2 = Graph::new();
                let vals = g.values(q).clone();
                let qn = g2.input(vals)?;
                let out = amae_quantize(&mut g2, qn)?;
                Ok(out.codes)
            }
        }
    }

    /// Decoder path: upsample codes, run the modulator at the input rate,
    /// and teacher-force the local model. Returns the logits and NLL nodes.
    fn decode_graph(
        &self,
        g: &mut Graph,
        symbols: &Arc<Vec<u16>>,
        b: usize,
        t: usize,
        qp: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let ups = g.upsample_repeat(qp, self.config.hop)?;
        let (_, _, t_up) = g.values(ups).dims3("decode")?;
        if t_up != t {
            return Err(Error::Shape {
                op: "decode",
                msg: format!("upsampled codes span {} steps, input {}", t_up, t),
            });
        }
        let m_in = self.parts.mod_in.forward_continuous(g, &self.store, ups)?;
        let m_skip = self.parts.mod_stack.forward(g, &self.store, m_in, None)?;
        let cond = self.parts.mod_head.forward(g, &self.store, m_skip)?;

        let x = match self.config.decoder_input_format {
            InputFormat::OneHot => {
                let shifted =
                    Arc::new(shifted_symbols(symbols, b, t, self.config.input_alphabet));
                self.parts.dec_in.forward_symbols(g, &self.store, shifted, b, t)?
            }
            InputFormat::Continuous => {
                let mut vals = continuous_tensor(symbols, b, t, self.config.input_alphabet);
                // Shift right with a zero start value.
                for bb in (0..b).rev() {
                    let row = &mut vals.data_mut()[bb * t..(bb + 1) * t];
                    for tt in (1..t).rev() {
                        row[tt] = row[tt - 1];
                    }
                    row[0] = 0.0;
                }
                let xin = g.input(vals)?;
                self.parts.dec_in.forward_continuous(g, &self.store, xin)?
            }
        };
        let l_skip = self.parts.local_stack.forward(g, &self.store, x, Some(cond))?;
        let logits = self.parts.local_head.forward(g, &self.store, l_skip)?;
        let nll = g.categorical_nll(logits, symbols.clone())?;
        Ok((logits, nll))
    }

    /// Rough forward+backward footprint of one step, in bytes.
    pub fn estimate_step_bytes(&self, b: usize, t: usize) -> usize {
        let per_stack = |c: &crate::stack::StackConfig, t: usize| -> usize {
            let per_block = 6 * c.inner + 2 * c.skip + 2 * c.residual + 2 * c.inner * usize::from(c.cond_channels > 0);
            c.blocks() * per_block * t + 4 * c.skip * t + c.residual * t
        };
        let k = self.config.input_alphabet;
        let floats = per_stack(&self.config.encoder, t)
            + per_stack(&self.config.modulator, t)
            + per_stack(&self.config.local, t)
            + 3 * k * t
            + 4 * self.config.quantizer.query_dim() * t;
        // values + gradients, times batch, f32.
        floats * b * 2 * 4
    }

    fn memory_limit() -> usize {
        std::env::var("ADA_MEM_LIMIT_MB")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or(8192)
            * 1024
            * 1024
    }

    /// One optimisation step over a batch of excerpts.
    pub fn train_step(&mut self, batch: &ExcerptBatch) -> Result<LossBreakdown> {
        let (b, t) = (batch.batch, batch.length);
        if t < self.config.min_excerpt() {
            return Err(Error::Config(format!(
                "excerpt length {} shorter than local RF + hop = {}",
                t,
                self.config.min_excerpt()
            )));
        }
        let needed = self.estimate_step_bytes(b, t);
        let limit = Self::memory_limit();
        if needed > limit {
            return Err(Error::Memory { needed, limit });
        }

        let symbols = Arc::new(batch.symbols.clone());
        let mut g = Graph::new();
        let q = self.encode_graph(&mut g, &symbols, b, t)?;
        let quant = self.quantize_graph(&mut g, q)?;
        let (_logits, nll) = self.decode_graph(&mut g, &symbols, b, t, quant.qp)?;

        let beta = self.config.quantizer.beta;
        let nu = self.config.quantizer.nu;
        let total = match (quant.commitment, quant.diversity) {
            (Some(c), None) => {
                let sc = g.scale(c, beta)?;
                g.add(nll, sc)?
            }
            (None, Some(d)) => {
                let sd = g.scale(d, nu)?;
                g.add(nll, sd)?
            }
            (None, None) => nll,
            (Some(_), Some(_)) => unreachable!("one bottleneck per model"),
        };

        let grads = g.backward(total)?;
        self.adam.step(&mut self.store, &grads)?;
        if let Some((counts, sums)) = quant.ema {
            self.codebook
                .as_mut()
                .expect("vq model has a codebook")
                .ema_update(&counts, &sums, self.config.quantizer.alpha);
        }
        self.polyak.update(&self.store);
        self.step += 1;

        Ok(LossBreakdown {
            nll: g.value(nll),
            commitment: quant.commitment.map_or(0.0, |c| g.value(c)),
            diversity: quant.diversity.map_or(0.0, |d| g.value(d)),
            total: g.value(total),
        })
    }

    /// Teacher-forced NLL plus code statistics over non-overlapping coverage
    /// windows, evaluated on the Polyak shadow.
    pub fn eval_nll(
        &mut self,
        corpus: &SymbolCorpus,
        window_len: usize,
        max_windows: usize,
    ) -> Result<EvalStats> {
        let windows = ExcerptSampler::coverage_windows(corpus, window_len, max_windows);
        if windows.is_empty() {
            return Err(Error::Input("no evaluation windows fit the corpus".into()));
        }
        self.polyak.swap(&mut self.store);
        let result = self.eval_windows(&windows, window_len);
        self.polyak.swap(&mut self.store);
        let (nll, hist) = result?;
        let p = perplexity(&hist);
        let threshold = collapse_threshold(self.config.quantizer.k);
        if p < threshold {
            self.events.push(CollapseEvent { step: self.step, perplexity: p, threshold });
        }
        Ok(EvalStats {
            nll,
            perplexity: p,
            histogram: hist,
            windows: windows.len(),
            window_len,
        })
    }

    fn eval_windows(&mut self, windows: &[Vec<u16>], t: usize) -> Result<(f64, Vec<u64>)> {
        let mut nll_acc = 0.0f64;
        let mut hist = vec![0u64; self.config.quantizer.k];
        let chunk = 4usize;
        for group in windows.chunks(chunk) {
            let b = group.len();
            let mut symbols = Vec::with_capacity(b * t);
            for w in group {
                symbols.extend_from_slice(w);
            }
            let symbols = Arc::new(symbols);
            let mut g = Graph::new();
            let q = self.encode_graph(&mut g, &symbols, b, t)?;
            let quant = self.quantize_graph(&mut g, q)?;
            for &c in &quant.codes {
                hist[c as usize] += 1;
            }
            let (_logits, nll) = self.decode_graph(&mut g, &symbols, b, t, quant.qp)?;
            nll_acc += g.value_f64(nll) * b as f64;
        }
        Ok((nll_acc / windows.len() as f64, hist))
    }

    /// Margin in code steps that makes chunked encoding agree with a full
    /// pass: the encoder side RF rounded up to whole hops.
    fn chunk_margin_codes(&self) -> usize {
        self.config.encoder.receptive_field().past.div_ceil(self.config.hop)
    }

    /// Deterministic code extraction for one piece (length must divide by
    /// hop). Runs on the Polyak shadow in overlapping chunks.
    pub fn extract_codes_piece(&mut self, piece: &[u16]) -> Result<Vec<u16>> {
        if piece.len() % self.config.hop != 0 {
            return Err(Error::Input(format!(
                "piece length {} not divisible by hop {}",
                piece.len(),
                self.config.hop
            )));
        }
        self.polyak.swap(&mut self.store);
        let result = self.extract_inner(piece);
        self.polyak.swap(&mut self.store);
        result
    }

    fn extract_inner(&mut self, piece: &[u16]) -> Result<Vec<u16>> {
        let hop = self.config.hop;
        let total_codes = piece.len() / hop;
        let margin = self.chunk_margin_codes();
        let chunk_codes = 2048usize.max(4 * margin);
        let mut codes = Vec::with_capacity(total_codes);
        let mut cs = 0usize;
        while cs < total_codes {
            let ce = (cs + chunk_codes).min(total_codes);
            let s0 = cs.saturating_sub(margin);
            let e0 = (ce + margin).min(total_codes);
            let symbols = Arc::new(piece[s0 * hop..e0 * hop].to_vec());
            let mut g = Graph::new();
            let q = self.encode_graph(&mut g, &symbols, 1, (e0 - s0) * hop)?;
            let quant = self.quantize_graph(&mut g, q)?;
            codes.extend_from_slice(&quant.codes[cs - s0..ce - s0]);
            cs = ce;
        }
        Ok(codes)
    }

    /// Quantised-query values for a given code sequence: centroids for VQ,
    /// one-hot vectors for the argmax bottleneck. Layout `[1, qdim, n]`.
    fn code_values(&self, codes: &[u16]) -> Result<Tensor> {
        let qdim = self.config.quantizer.query_dim();
        let n = codes.len();
        let mut data = vec![0.0f32; qdim * n];
        match self.config.quantizer.kind {
            QuantizerKind::Vq => {
                let cb = self
                    .codebook
                    .as_ref()
                    .filter(|cb| cb.is_initialized())
                    .ok_or_else(|| Error::Config("codebook not initialised yet".into()))?;
                for (i, &c) in codes.iter().enumerate() {
                    if c as usize >= self.config.quantizer.k {
                        return Err(Error::Input(format!("code {} out of alphabet", c)));
                    }
                    for (j, &v) in cb.centroid(c as usize).iter().enumerate() {
                        data[j * n + i] = v;
                    }
                }
            }
            QuantizerKind::Amae => {
                for (i, &c) in codes.iter().enumerate() {
                    if c as usize >= self.config.quantizer.k {
                        return Err(Error::Input(format!("code {} out of alphabet", c)));
                    }
                    data[c as usize * n + i] = 1.0;
                }
            }
        }
        Tensor::new(vec![1, qdim, n], data)
    }

    /// Modulator conditioning for a code sequence, (time, channel)-major,
    /// computed in margin-padded chunks on whatever parameters are live.
    fn conditioning_columns(&self, codes: &[u16]) -> Result<Vec<f32>> {
        let hop = self.config.hop;
        let cc = self.config.local.cond_channels;
        let total_codes = codes.len();
        let t_out = total_codes * hop;
        let margin = self
            .config
            .modulator
            .receptive_field()
            .past
            .div_ceil(hop);
        let chunk_codes = 2048usize.max(4 * margin);
        let mut cond = vec![0.0f32; t_out * cc];
        let mut cs = 0usize;
        while cs < total_codes {
            let ce = (cs + chunk_codes).min(total_codes);
            let s0 = cs.saturating_sub(margin);
            let e0 = (ce + margin).min(total_codes);
            let mut g = Graph::new();
            let qp = g.input(self.code_values(&codes[s0..e0])?)?;
            let ups = g.upsample_repeat(qp, hop)?;
            let m_in = self.parts.mod_in.forward_continuous(&mut g, &self.store, ups)?;
            let m_skip = self.parts.mod_stack.forward(&mut g, &self.store, m_in, None)?;
            let cond_node = self.parts.mod_head.forward(&mut g, &self.store, m_skip)?;
            let vals = g.values(cond_node).data();
            let t_chunk = (e0 - s0) * hop;
            for tt in (cs - s0) * hop..(ce - s0) * hop {
                let t_abs = s0 * hop + tt;
                for ch in 0..cc {
                    cond[t_abs * cc + ch] = vals[ch * t_chunk + tt];
                }
            }
            cs = ce;
        }
        Ok(cond)
    }

    /// Autoregressively sample the decoder conditioned on `codes`, producing
    /// codes.len()*hop symbols. Deterministic given the seed. Runs on the
    /// Polyak shadow.
    pub fn decode_sample(
        &mut self,
        codes: &[u16],
        seed: u64,
        temperature: f32,
        greedy: bool,
    ) -> Result<Vec<u16>> {
        self.polyak.swap(&mut self.store);
        let result = self.decode_sample_inner(codes, seed, temperature, greedy);
        self.polyak.swap(&mut self.store);
        result
    }

    fn decode_sample_inner(
        &mut self,
        codes: &[u16],
        seed: u64,
        temperature: f32,
        greedy: bool,
    ) -> Result<Vec<u16>> {
        let cond = self.conditioning_columns(codes)?;
        let t_out = codes.len() * self.config.hop;
        let cc = self.config.local.cond_channels;
        let k = self.config.input_alphabet;

        let weights = StackWeights::snapshot(&self.store, &self.parts.local_stack);
        let head = HeadWeights::snapshot(&self.store, &self.parts.local_head);
        let dec_in = InputWeights::snapshot(&self.store, &self.parts.dec_in);
        let mut state = GenerationState::new(&self.config.local)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut out = Vec::with_capacity(t_out);
        let mut x_col = Vec::with_capacity(self.config.local.residual);
        let mut logits = Vec::new();
        let mut prev: Option<u16> = None;
        for t in 0..t_out {
            match self.config.decoder_input_format {
                InputFormat::OneHot => {
                    let sym = prev.map_or(k as u16, |p| p);
                    dec_in.apply_symbol(sym, &mut x_col);
                }
                InputFormat::Continuous => {
                    let v = prev.map_or(0.0, |p| 2.0 * p as f32 / (k - 1) as f32 - 1.0);
                    dec_in.apply_continuous(&[v], &mut x_col);
                }
            }
            let skip = state.step(&weights, t as u64, &x_col, Some(&cond[t * cc..(t + 1) * cc]))?;
            head.apply(skip, &mut logits);
            let sym = sample_logits(&logits, temperature, greedy, &mut rng);
            out.push(sym);
            prev = Some(sym);
        }
        Ok(out)
    }

    /// Encode, quantise, and resample: the round trip through the bottleneck.
    pub fn reconstruct(
        &mut self,
        symbols: &[u16],
        seed: u64,
        temperature: f32,
        greedy: bool,
    ) -> Result<(Vec<u16>, Vec<u16>)> {
        let codes = self.extract_codes_piece(symbols)?;
        let recon = self.decode_sample(&codes, seed, temperature, greedy)?;
        Ok((recon, codes))
    }

    /// Teacher-forced NLL of `symbols` given externally supplied codes
    /// (Polyak shadow).
    pub fn decode_nll_from_codes(
        &mut self,
        symbols: &[u16],
        codes: &[u16],
    ) -> Result<f64> {
        if codes.len() * self.config.hop != symbols.len() {
            return Err(Error::Shape {
                op: "decode_nll",
                msg: format!(
                    "{} codes at hop {} cannot cover {} symbols",
                    codes.len(),
                    self.config.hop,
                    symbols.len()
                ),
            });
        }
        self.polyak.swap(&mut self.store);
        let result = (|| {
            let t = symbols.len();
            let syms = Arc::new(symbols.to_vec());
            let mut g = Graph::new();
            let qp = g.input(self.code_values(codes)?)?;
            let (_logits, nll) = self.decode_graph(&mut g, &syms, 1, t, qp)?;
            Ok(g.value_f64(nll))
        })();
        self.polyak.swap(&mut self.store);
        result
    }

    /// Teacher-forced logits `[K, T]` for one sequence given fixed codes
    /// (Polyak shadow). Probe surface for causality checks.
    pub fn decode_logits_from_codes(
        &mut self,
        symbols: &[u16],
        codes: &[u16],
    ) -> Result<Vec<f32>> {
        self.polyak.swap(&mut self.store);
        let result = (|| {
            let t = symbols.len();
            let syms = Arc::new(symbols.to_vec());
            let mut g = Graph::new();
            let qp = g.input(self.code_values(codes)?)?;
            let (logits, _nll) = self.decode_graph(&mut g, &syms, 1, t, qp)?;
            Ok(g.values(logits).data().to_vec())
        })();
        self.polyak.swap(&mut self.store);
        result
    }

    pub(crate) fn state_for_checkpoint(
        &self,
    ) -> (&ParamStore, &Adam, &Polyak, Option<&Codebook>, u64, u64) {
        (&self.store, &self.adam, &self.polyak, self.codebook.as_ref(), self.step, self.seed)
    }

    pub(crate) fn restore_state(
        &mut self,
        store: ParamStore,
        adam: Adam,
        polyak: Polyak,
        codebook: Option<Codebook>,
        step: u64,
        seed: u64,
    ) {
        self.store = store;
        self.adam = adam;
        self.polyak = polyak;
        self.codebook = codebook;
        self.step = step;
        self.seed = seed;
    }
}
