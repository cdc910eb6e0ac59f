//! The conditional sequence VAE: condition embedder, convolutional encoder,
//! LSTM latent rollout and transposed-convolution decoder, with a hand-written
//! backward pass through all of it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{Conv3d, ConvCache, ConvGeometry, ConvTranspose3d};
use super::layers::{Linear, LstmCell, LstmStep};
use super::loss::{
    frame_cross_entropy, kl_gaussian_standard, LossBreakdown, PosteriorParams, LOG_VAR_MAX,
    LOG_VAR_MIN,
};
use super::tensor::{leaky_relu_backward, leaky_relu_inplace, Tensor, LEAKY_SLOPE};
use crate::datakit::{Dims, CONDITION_DIM, N_CLASSES};
use crate::error::{invalid, Error, Result};

pub const N_STAGES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub grid_dims: Dims,
    pub t_frames: usize,
    pub latent_dim_z0: usize,
    pub latent_dim_zc: usize,
    pub embed_hidden: usize,
    pub channels: [usize; N_STAGES],
    pub beta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            grid_dims: [32, 32, 16],
            t_frames: 8,
            latent_dim_z0: 32,
            latent_dim_zc: 32,
            embed_hidden: 32,
            channels: [16, 32, 64, 128],
            beta: 0.001,
        }
    }
}

impl ModelConfig {
    /// Tiny configuration used for gradient checks and smoke tests.
    pub fn miniature() -> Self {
        Self {
            grid_dims: [8, 8, 4],
            t_frames: 2,
            latent_dim_z0: 4,
            latent_dim_zc: 4,
            embed_hidden: 6,
            channels: [3, 4, 5, 6],
            beta: 0.001,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim_z0 + self.latent_dim_zc
    }

    pub fn n_voxels(&self) -> usize {
        self.grid_dims.iter().product()
    }

    /// Geometry of each encoder stage, finest first.
    pub fn geometries(&self) -> Result<Vec<ConvGeometry>> {
        let mut out = Vec::with_capacity(N_STAGES);
        let mut dims = self.grid_dims;
        for _ in 0..N_STAGES {
            let g = ConvGeometry::halving(dims).ok_or_else(|| {
                invalid!(
                    "grid {:?} cannot be halved {N_STAGES} times (odd axis {:?})",
                    self.grid_dims,
                    dims
                )
            })?;
            dims = g.coarse;
            out.push(g);
        }
        Ok(out)
    }

    /// Length of the flattened bottleneck feature.
    pub fn bottleneck_len(&self) -> Result<usize> {
        let g = self.geometries()?;
        Ok(self.channels[N_STAGES - 1] * g[N_STAGES - 1].coarse_voxels())
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_frames < 1 {
            return Err(invalid!("t_frames must be at least 1"));
        }
        if self.latent_dim_z0 == 0 || self.latent_dim_zc == 0 || self.embed_hidden == 0 {
            return Err(invalid!("latent and hidden sizes must be positive"));
        }
        if self.channels.contains(&0) {
            return Err(invalid!("channel counts must be positive"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(invalid!(
                "beta must be finite and non-negative, got {}",
                self.beta
            ));
        }
        self.geometries().map(|_| ())
    }
}

/// `z0`, `zc` and their concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub z0: Vec<f64>,
    pub zc: Vec<f64>,
}

impl LatentCode {
    pub fn zc0(&self) -> Vec<f64> {
        let mut v = self.z0.clone();
        v.extend_from_slice(&self.zc);
        v
    }
}

/// Rollout output: row `t` is `z^c_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTrajectory {
    pub codes: Vec<Vec<f64>>,
}

impl LatentTrajectory {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: ModelConfig,
    pub embed_hidden: Linear,
    pub embed_out: Linear,
    pub enc_convs: Vec<Conv3d>,
    pub enc_mu: Linear,
    pub enc_logvar: Linear,
    pub lstm: LstmCell,
    pub lstm_head: Linear,
    pub dec_dense: Linear,
    pub dec_convs: Vec<ConvTranspose3d>,
    geoms: Vec<ConvGeometry>,
}

fn leaky_gain() -> f64 {
    (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt()
}

fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl Network {
    /// Seeded initialization. The draw order is fixed so a seed always gives
    /// the same parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let geoms = config.geometries()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.latent_dim();
        let f = config.bottleneck_len()?;
        let ch = config.channels;
        let embed_hidden = Linear::new(CONDITION_DIM, config.embed_hidden, leaky_gain(), &mut rng);
        let embed_out = Linear::new(config.embed_hidden, config.latent_dim_zc, 1.0, &mut rng);
        let mut enc_convs = Vec::with_capacity(N_STAGES);
        let mut cin = N_CLASSES;
        for &c in &ch {
            enc_convs.push(Conv3d::new(cin, c, &mut rng));
            cin = c;
        }
        let enc_mu = Linear::new(
            f + config.latent_dim_zc,
            config.latent_dim_z0,
            1.0,
            &mut rng,
        );
        let enc_logvar = Linear::new(
            f + config.latent_dim_zc,
            config.latent_dim_z0,
            0.1,
            &mut rng,
        );
        let lstm = LstmCell::new(d, d, &mut rng);
        let lstm_head = Linear::new(d, d, 1.0, &mut rng);
        let dec_dense = Linear::new(d, f, leaky_gain(), &mut rng);
        let mut dec_convs = Vec::with_capacity(N_STAGES);
        for s in (0..N_STAGES).rev() {
            let out = if s == 0 { N_CLASSES } else { ch[s - 1] };
            dec_convs.push(ConvTranspose3d::new(ch[s], out, &mut rng));
        }
        Ok(Self {
            config,
            embed_hidden,
            embed_out,
            enc_convs,
            enc_mu,
            enc_logvar,
            lstm,
            lstm_head,
            dec_dense,
            dec_convs,
            geoms,
        })
    }

    /// Same architecture with every parameter zero (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.params_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Named parameters in a fixed order. The prefix before the first dot is
    /// the parameter group (embedder, encoder, temporal, decoder).
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut v: Vec<(String, &Tensor)> = vec![
            ("embedder.hidden.weight".into(), &self.embed_hidden.weight),
            ("embedder.hidden.bias".into(), &self.embed_hidden.bias),
            ("embedder.out.weight".into(), &self.embed_out.weight),
            ("embedder.out.bias".into(), &self.embed_out.bias),
        ];
        for (i, c) in self.enc_convs.iter().enumerate() {
            v.push((format!("encoder.conv{i}.weight"), &c.weight));
            v.push((format!("encoder.conv{i}.bias"), &c.bias));
        }
        v.extend([
            ("encoder.mu.weight".into(), &self.enc_mu.weight),
            ("encoder.mu.bias".into(), &self.enc_mu.bias),
            ("encoder.logvar.weight".into(), &self.enc_logvar.weight),
            ("encoder.logvar.bias".into(), &self.enc_logvar.bias),
            ("temporal.lstm.w_ih".into(), &self.lstm.w_ih),
            ("temporal.lstm.w_hh".into(), &self.lstm.w_hh),
            ("temporal.lstm.bias".into(), &self.lstm.bias),
            ("temporal.head.weight".into(), &self.lstm_head.weight),
            ("temporal.head.bias".into(), &self.lstm_head.bias),
            ("decoder.dense.weight".into(), &self.dec_dense.weight),
            ("decoder.dense.bias".into(), &self.dec_dense.bias),
        ]);
        for (i, c) in self.dec_convs.iter().enumerate() {
            v.push((format!("decoder.deconv{i}.weight"), &c.weight));
            v.push((format!("decoder.deconv{i}.bias"), &c.bias));
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v: Vec<(String, &mut Tensor)> = vec![
            (
                "embedder.hidden.weight".into(),
                &mut self.embed_hidden.weight,
            ),
            ("embedder.hidden.bias".into(), &mut self.embed_hidden.bias),
            ("embedder.out.weight".into(), &mut self.embed_out.weight),
            ("embedder.out.bias".into(), &mut self.embed_out.bias),
        ];
        for (i, c) in self.enc_convs.iter_mut().enumerate() {
            v.push((format!("encoder.conv{i}.weight"), &mut c.weight));
            v.push((format!("encoder.conv{i}.bias"), &mut c.bias));
        }
        v.extend([
            ("encoder.mu.weight".into(), &mut self.enc_mu.weight),
            ("encoder.mu.bias".into(), &mut self.enc_mu.bias),
            ("encoder.logvar.weight".into(), &mut self.enc_logvar.weight),
            ("encoder.logvar.bias".into(), &mut self.enc_logvar.bias),
            ("temporal.lstm.w_ih".into(), &mut self.lstm.w_ih),
            ("temporal.lstm.w_hh".into(), &mut self.lstm.w_hh),
            ("temporal.lstm.bias".into(), &mut self.lstm.bias),
            ("temporal.head.weight".into(), &mut self.lstm_head.weight),
            ("temporal.head.bias".into(), &mut self.lstm_head.bias),
            ("decoder.dense.weight".into(), &mut self.dec_dense.weight),
            ("decoder.dense.bias".into(), &mut self.dec_dense.bias),
        ]);
        for (i, c) in self.dec_convs.iter_mut().enumerate() {
            v.push((format!("decoder.deconv{i}.weight"), &mut c.weight));
            v.push((format!("decoder.deconv{i}.bias"), &mut c.bias));
        }
        v
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale * other`, parameter by parameter.
    pub fn axpy(&mut self, scale: f64, other: &Network) {
        for ((_, a), (_, b)) in self.params_mut().into_iter().zip(other.params()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
    }

    // ---- inference ----

    pub fn embed(&self, cvec: &[f64]) -> Result<Vec<f64>> {
        if cvec.len() != CONDITION_DIM {
            return Err(Error::ShapeMismatch(format!(
                "condition vector has {} entries, expected {CONDITION_DIM}",
                cvec.len()
            )));
        }
        let mut a = self.embed_hidden.forward(cvec);
        leaky_relu_inplace(&mut a);
        Ok(self.embed_out.forward(&a))
    }

    fn check_frame(&self, x: &[f64]) -> Result<()> {
        let want = N_CLASSES * self.config.n_voxels();
        if x.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "one-hot frame has {} values, model grid {:?} needs {want}",
                x.len(),
                self.config.grid_dims
            )));
        }
        Ok(())
    }

    fn check_zc(&self, zc: &[f64]) -> Result<()> {
        if zc.len() != self.config.latent_dim_zc {
            return Err(Error::ShapeMismatch(format!(
                "zc has {} entries, expected {}",
                zc.len(),
                self.config.latent_dim_zc
            )));
        }
        Ok(())
    }

    fn encoder_features(&self, x0: &[f64]) -> (Vec<Vec<f64>>, Vec<ConvCache>) {
        let mut acts = Vec::with_capacity(N_STAGES);
        let mut caches = Vec::with_capacity(N_STAGES);
        let mut cur = x0.to_vec();
        for (conv, g) in self.enc_convs.iter().zip(&self.geoms) {
            let (mut y, cache) = conv.forward(g, &cur);
            leaky_relu_inplace(&mut y);
            caches.push(cache);
            acts.push(y.clone());
            cur = y;
        }
        (acts, caches)
    }

    /// Raw encoder heads `(mu, log_var before clamping, head input)`.
    fn encoder_heads(&self, feat: &[f64], zc: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut input = feat.to_vec();
        input.extend_from_slice(zc);
        let mu = self.enc_mu.forward(&input);
        let lv = self.enc_logvar.forward(&input);
        (mu, lv, input)
    }

    /// Posterior `q(z0 | x0, zc)` for a channel-first one-hot frame.
    pub fn encode(&self, x0: &[f64], zc: &[f64]) -> Result<PosteriorParams> {
        self.check_frame(x0)?;
        self.check_zc(zc)?;
        let (acts, _) = self.encoder_features(x0);
        let (mu, lv, _) = self.encoder_heads(&acts[N_STAGES - 1], zc);
        PosteriorParams::new(mu, lv)
    }

    fn rollout_steps(
        &self,
        zc0: Vec<f64>,
        t_frames: usize,
    ) -> Result<(Vec<Vec<f64>>, Vec<LstmStep>)> {
        let d = self.config.latent_dim();
        let mut codes = vec![zc0];
        let mut steps = Vec::with_capacity(t_frames.saturating_sub(1));
        let mut h = vec![0.0; d];
        let mut c = vec![0.0; d];
        for t in 1..t_frames {
            let step = self.lstm.step(&codes[t - 1], &h, &c);
            let z = self.lstm_head.forward(&step.h);
            if !(z.iter().chain(&step.c).all(|v| v.is_finite())) {
                return Err(Error::NonFinite(format!("latent rollout at step {t}")));
            }
            h = step.h.clone();
            c = step.c.clone();
            steps.push(step);
            codes.push(z);
        }
        Ok((codes, steps))
    }

    /// One-to-many rollout from `concat(z0, zc)` with zero initial state.
    pub fn rollout(&self, z0: &[f64], zc: &[f64], t_frames: usize) -> Result<LatentTrajectory> {
        if t_frames < 1 {
            return Err(invalid!("rollout length must be at least 1"));
        }
        if z0.len() != self.config.latent_dim_z0 {
            return Err(Error::ShapeMismatch(format!(
                "z0 has {} entries, expected {}",
                z0.len(),
                self.config.latent_dim_z0
            )));
        }
        self.check_zc(zc)?;
        check_finite("z0", z0)?;
        let code = LatentCode {
            z0: z0.to_vec(),
            zc: zc.to_vec(),
        };
        let (codes, _) = self.rollout_steps(code.zc0(), t_frames)?;
        Ok(LatentTrajectory { codes })
    }

    fn decoder_acts(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let mut a = self.dec_dense.forward(z);
        leaky_relu_inplace(&mut a);
        let mut acts = vec![a];
        for (i, dc) in self.dec_convs.iter().enumerate() {
            let g = &self.geoms[N_STAGES - 1 - i];
            let mut y = dc.forward(g, acts.last().expect("non-empty"));
            if i + 1 < N_STAGES {
                leaky_relu_inplace(&mut y);
            }
            acts.push(y);
        }
        acts
    }

    /// Channel-first 4-class logits over the model grid.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.config.latent_dim() {
            return Err(Error::ShapeMismatch(format!(
                "latent code has {} entries, expected {}",
                z.len(),
                self.config.latent_dim()
            )));
        }
        Ok(self.decoder_acts(z).pop().expect("non-empty"))
    }

    // ---- training ----

    /// Loss of one sequence with a fixed reparameterization draw, accumulating
    /// `scale * dLoss/dparams` into `grad` when given.
    pub fn forward_backward(
        &self,
        frames: &[Vec<f64>],
        cvec: &[f64],
        eps: &[f64],
        mut grad: Option<(&mut Network, f64)>,
    ) -> Result<LossBreakdown> {
        let cfg = &self.config;
        if frames.len() != cfg.t_frames {
            return Err(Error::ShapeMismatch(format!(
                "sequence has {} frames, model expects {}",
                frames.len(),
                cfg.t_frames
            )));
        }
        for f in frames {
            self.check_frame(f)?;
        }
        if eps.len() != cfg.latent_dim_z0 {
            return Err(Error::ShapeMismatch(format!(
                "eps has {} entries, expected {}",
                eps.len(),
                cfg.latent_dim_z0
            )));
        }
        let beta = cfg.beta;

        // Forward.
        let mut emb_a = self.embed_hidden.forward(cvec);
        leaky_relu_inplace(&mut emb_a);
        let zc = self.embed_out.forward(&emb_a);
        let (enc_acts, enc_caches) = self.encoder_features(&frames[0]);
        let (mu, lv_raw, head_in) = self.encoder_heads(&enc_acts[N_STAGES - 1], &zc);
        let post = PosteriorParams::new(mu.clone(), lv_raw.clone())?;
        let sd: Vec<f64> = post.log_var.iter().map(|lv| (0.5 * lv).exp()).collect();
        let z0: Vec<f64> = (0..mu.len()).map(|i| mu[i] + sd[i] * eps[i]).collect();
        let mut zc0 = z0.clone();
        zc0.extend_from_slice(&zc);
        let (codes, steps) = self.rollout_steps(zc0, cfg.t_frames)?;
        let kl = kl_gaussian_standard(&post.mu, &post.log_var);

        let Some((g, scale)) = grad.as_mut() else {
            let recon = codes
                .iter()
                .zip(frames)
                .map(|(z, x)| {
                    let logits = self.decoder_acts(z).pop().expect("non-empty");
                    frame_cross_entropy(&logits, x, None)
                })
                .collect::<Result<Vec<_>>>()?;
            return LossBreakdown::new(recon, kl, beta);
        };
        let scale = *scale;

        // Decoder forward and backward frame by frame; only dL/dz_t is kept.
        let mut recon = Vec::with_capacity(cfg.t_frames);
        let mut dz: Vec<Vec<f64>> = Vec::with_capacity(cfg.t_frames);
        for (z, x) in codes.iter().zip(frames) {
            let acts = self.decoder_acts(z);
            let logits = &acts[N_STAGES];
            let mut d = vec![0.0; logits.len()];
            recon.push(frame_cross_entropy(logits, x, Some((&mut d, scale)))?);
            for i in (0..N_STAGES).rev() {
                let geom = &self.geoms[N_STAGES - 1 - i];
                d = self.dec_convs[i].backward(geom, &acts[i], &d, &mut g.dec_convs[i]);
                leaky_relu_backward(&acts[i], &mut d);
            }
            dz.push(self.dec_dense.backward(z, &d, &mut g.dec_dense));
        }
        let loss = LossBreakdown::new(recon, kl, beta)?;

        // Backpropagation through time.
        let d_lat = cfg.latent_dim();
        let mut dh_next = vec![0.0; d_lat];
        let mut dc_next = vec![0.0; d_lat];
        for t in (1..cfg.t_frames).rev() {
            let step = &steps[t - 1];
            let mut dh = self.lstm_head.backward(&step.h, &dz[t], &mut g.lstm_head);
            for (a, b) in dh.iter_mut().zip(&dh_next) {
                *a += b;
            }
            let (dx, dh_prev, dc_prev) = self.lstm.backward(step, &dh, &dc_next, &mut g.lstm);
            for (a, b) in dz[t - 1].iter_mut().zip(&dx) {
                *a += b;
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        let dzc0 = &dz[0];
        let nz = cfg.latent_dim_z0;

        // Reparameterization, KL and the log-variance clamp.
        let mut dmu = vec![0.0; nz];
        let mut dlv = vec![0.0; nz];
        for i in 0..nz {
            let var = sd[i] * sd[i];
            dmu[i] = dzc0[i] + scale * beta * mu[i];
            let dlv_clamped = dzc0[i] * eps[i] * 0.5 * sd[i] + scale * beta * 0.5 * (var - 1.0);
            let inside = (LOG_VAR_MIN..=LOG_VAR_MAX).contains(&lv_raw[i]);
            dlv[i] = if inside { dlv_clamped } else { 0.0 };
        }
        let mut dhead = self.enc_mu.backward(&head_in, &dmu, &mut g.enc_mu);
        let dhead_lv = self.enc_logvar.backward(&head_in, &dlv, &mut g.enc_logvar);
        for (a, b) in dhead.iter_mut().zip(&dhead_lv) {
            *a += b;
        }
        let f_len = enc_acts[N_STAGES - 1].len();
        let mut dzc: Vec<f64> = dhead[f_len..].to_vec();
        for (a, b) in dzc.iter_mut().zip(&dzc0[nz..]) {
            *a += b;
        }

        // Encoder.
        let mut d = dhead[..f_len].to_vec();
        for i in (0..N_STAGES).rev() {
            leaky_relu_backward(&enc_acts[i], &mut d);
            let next = self.enc_convs[i].backward(
                &self.geoms[i],
                &enc_caches[i],
                &d,
                &mut g.enc_convs[i],
                i > 0,
            );
            if let Some(n) = next {
                d = n;
            }
        }

        // Embedder.
        let mut da = self.embed_out.backward(&emb_a, &dzc, &mut g.embed_out);
        leaky_relu_backward(&emb_a, &mut da);
        self.embed_hidden.backward(cvec, &da, &mut g.embed_hidden);
        Ok(loss)
    }

    /// Rebuilds a network from a config and named parameter arrays.
    pub fn from_params(config: ModelConfig, mut named: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut net = Network::new(config, 0)?;
        named.sort_by(|a, b| a.0.cmp(&b.0));
        for (name, t) in net.params_mut() {
            let i = named
                .binary_search_by(|(n, _)| n.as_str().cmp(&name))
                .map_err(|_| invalid!("missing parameter {name}"))?;
            let data = std::mem::take(&mut named[i].1);
            if data.len() != t.len() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter {name} has {} values, expected {}",
                    data.len(),
                    t.len()
                )));
            }
            t.data = data;
        }
        Ok(net)
    }
}
