//! Cross-modal intrinsic reward.
//!
//! An image encoder `enc` feeds a touch decoder `dec` (image latent to
//! touch vector) and a latent forward model `fdm`. The reward mixes the two
//! prediction errors, `r = (1 - lambda) * l_touch + lambda * l_fdm`, with
//! both errors measured as plain Euclidean norms. Baseline variants swap in
//! their own surprise signal but share the same encoder.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    Activation, AdamConfig, AdamState, InputShape, LayerSpec, Network, NetworkSpec, NumericsError,
    Tape, Trainable,
};

pub const LATENT_DIM: usize = 256;
pub const DEC_HIDDEN: usize = 64;
pub const FDM_HIDDEN: usize = 256;
pub const IDF_HIDDEN: usize = 256;
pub const RND_HIDDEN: usize = 128;
pub const RND_OUTPUT: usize = 64;
pub const TFM_HIDDEN: usize = 64;
pub const ENSEMBLE_SIZE: usize = 5;
pub const DEFAULT_LAMBDA: f64 = 0.5;

pub const FULL_IMAGE_SIZE: usize = 84;
/// Weights and biases of the full four-conv encoder on 84x84 input.
pub const FULL_ENCODER_PARAMS: usize = 2_593_244;

/// `(out_channels, kernel, stride)` of the encoder convolutions.
pub const ENCODER_CONVS: [(usize, usize, usize); 4] = [(32, 8, 4), (64, 4, 2), (124, 3, 1), (256, 2, 1)];

#[derive(Debug, Error)]
pub enum CuriosityError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("lambda must lie in [0, 1], got {0}")]
    Lambda(f64),
    #[error("image size {0} is too small for the encoder")]
    ImageSize(usize),
    #[error("encoder has {got} parameters, expected {expected}")]
    EncoderParams { got: usize, expected: usize },
    #[error("{op} requires feature mode idf (model uses {mode})")]
    WrongMode { op: &'static str, mode: FeatureMode },
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error("unknown feature mode `{0}`")]
    UnknownFeatureMode(String),
    #[error("{what}: expected {expected} values, got {got}")]
    Shape {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("non-finite {what} loss ({value})")]
    NonFiniteLoss { what: &'static str, value: f64 },
}

pub type Result<T, E = CuriosityError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Toc,
    TocPure,
    Icm,
    Rnd,
    Disagreement,
    TocFuture,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Toc,
        Variant::TocPure,
        Variant::Icm,
        Variant::Rnd,
        Variant::Disagreement,
        Variant::TocFuture,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Toc => "toc",
            Variant::TocPure => "toc-pure",
            Variant::Icm => "icm",
            Variant::Rnd => "rnd",
            Variant::Disagreement => "disagreement",
            Variant::TocFuture => "toc-future",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = CuriosityError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or(CuriosityError::UnknownVariant(s))
    }
}

/// How the encoder is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureMode {
    /// By the touch and forward-model losses.
    Learned,
    /// Never; stays at its random initialisation.
    RandomFixed,
    /// Only by an inverse-dynamics head.
    Idf,
}

impl FeatureMode {
    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Learned => "learned",
            FeatureMode::RandomFixed => "random-fixed",
            FeatureMode::Idf => "idf",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMode {
    type Err = CuriosityError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "learned" => Ok(FeatureMode::Learned),
            "random-fixed" | "random" => Ok(FeatureMode::RandomFixed),
            "idf" => Ok(FeatureMode::Idf),
            other => Err(CuriosityError::UnknownFeatureMode(other.to_string())),
        }
    }
}

/// Encoder for square grayscale images: as many of `ENCODER_CONVS` as the
/// input size allows, then a 256-unit dense layer. At 84x84 all four convs
/// fit and the parameter count is checked against `FULL_ENCODER_PARAMS`.
pub fn encoder_spec(image_size: usize) -> Result<NetworkSpec> {
    let mut layers = Vec::new();
    let mut size = image_size;
    for &(out_channels, kernel, stride) in &ENCODER_CONVS {
        if size < kernel {
            break;
        }
        size = (size - kernel) / stride + 1;
        layers.push(LayerSpec::Conv {
            out_channels,
            kernel,
            stride,
            activation: Activation::LeakyRelu,
        });
    }
    if layers.is_empty() {
        return Err(CuriosityError::ImageSize(image_size));
    }
    layers.push(LayerSpec::Dense {
        units: LATENT_DIM,
        activation: Activation::LeakyRelu,
    });
    let spec = NetworkSpec {
        input: InputShape::Image {
            channels: 1,
            height: image_size,
            width: image_size,
        },
        layers,
    };
    if image_size == FULL_IMAGE_SIZE {
        let got = spec.parameter_count()?;
        if got != FULL_ENCODER_PARAMS {
            return Err(CuriosityError::EncoderParams {
                got,
                expected: FULL_ENCODER_PARAMS,
            });
        }
    }
    Ok(spec)
}

pub fn decoder_spec(touch_dim: usize) -> NetworkSpec {
    NetworkSpec::mlp(LATENT_DIM, &[DEC_HIDDEN], touch_dim, Activation::Identity)
}

pub fn fdm_spec(action_dim: usize) -> NetworkSpec {
    NetworkSpec::mlp(LATENT_DIM + action_dim, &[FDM_HIDDEN], LATENT_DIM, Activation::Identity)
}

pub fn idf_spec(action_dim: usize) -> NetworkSpec {
    NetworkSpec::mlp(2 * LATENT_DIM, &[IDF_HIDDEN], action_dim, Activation::Identity)
}

pub fn rnd_spec() -> NetworkSpec {
    NetworkSpec::mlp(LATENT_DIM, &[RND_HIDDEN, RND_HIDDEN], RND_OUTPUT, Activation::Identity)
}

pub fn tfm_spec(touch_dim: usize, action_dim: usize) -> NetworkSpec {
    NetworkSpec::mlp(touch_dim + action_dim, &[TFM_HIDDEN], touch_dim, Activation::Identity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuriosityConfig {
    pub variant: Variant,
    pub feature_mode: FeatureMode,
    pub lambda: f64,
    pub image_size: usize,
    pub touch_dim: usize,
    pub action_dim: usize,
    pub adam: AdamConfig,
}

impl CuriosityConfig {
    pub fn new(variant: Variant, image_size: usize, action_dim: usize) -> Self {
        Self {
            variant,
            feature_mode: FeatureMode::Learned,
            lambda: DEFAULT_LAMBDA,
            image_size,
            touch_dim: crate::env::TOUCH_DIM,
            action_dim,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(CuriosityError::Lambda(self.lambda));
        }
        Ok(())
    }
}

/// A network with its optimiser state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RndPair {
    /// Frozen random network.
    pub target: Network,
    pub predictor: Trainable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuriosityModel {
    pub config: CuriosityConfig,
    pub enc: Trainable,
    pub dec: Trainable,
    pub fdm: Trainable,
    pub idf: Option<Trainable>,
    pub rnd: Option<RndPair>,
    pub ensemble: Vec<Trainable>,
    pub tfm: Option<Trainable>,
}

impl CuriosityModel {
    pub fn new<R: Rng + ?Sized>(config: CuriosityConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let adam = config.adam;
        let enc = Trainable::new(encoder_spec(config.image_size)?, adam, rng)?;
        let dec = Trainable::new(decoder_spec(config.touch_dim), adam, rng)?;
        let fdm = Trainable::new(fdm_spec(config.action_dim), adam, rng)?;
        let idf = match config.feature_mode {
            FeatureMode::Idf => Some(Trainable::new(idf_spec(config.action_dim), adam, rng)?),
            _ => None,
        };
        let rnd = match config.variant {
            Variant::Rnd => Some(RndPair {
                target: Network::new(rnd_spec(), rng)?,
                predictor: Trainable::new(rnd_spec(), adam, rng)?,
            }),
            _ => None,
        };
        let ensemble = match config.variant {
            Variant::Disagreement => (0..ENSEMBLE_SIZE)
                .map(|_| Trainable::new(fdm_spec(config.action_dim), adam, rng))
                .collect::<Result<_, NumericsError>>()?,
            _ => Vec::new(),
        };
        let tfm = match config.variant {
            Variant::TocFuture => Some(Trainable::new(tfm_spec(config.touch_dim, config.action_dim), adam, rng)?),
            _ => None,
        };
        Ok(Self {
            config,
            enc,
            dec,
            fdm,
            idf,
            rnd,
            ensemble,
            tfm,
        })
    }

    pub fn image_len(&self) -> usize {
        self.config.image_size * self.config.image_size
    }

    /// Sets the learning rate of every optimiser.
    pub fn set_lr(&mut self, lr: f64) {
        let mut all: Vec<&mut AdamState> = vec![&mut self.enc.adam, &mut self.dec.adam, &mut self.fdm.adam];
        all.extend(self.idf.as_mut().map(|t| &mut t.adam));
        all.extend(self.rnd.as_mut().map(|r| &mut r.predictor.adam));
        all.extend(self.ensemble.iter_mut().map(|t| &mut t.adam));
        all.extend(self.tfm.as_mut().map(|t| &mut t.adam));
        for a in all {
            a.config.lr = lr;
        }
    }
}

/// Batch of transitions, sample-major. Images are unit-scaled pixels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CuriosityBatch {
    pub n: usize,
    pub images: Vec<f64>,
    pub next_images: Vec<f64>,
    pub touch: Vec<f64>,
    pub next_touch: Vec<f64>,
    pub actions: Vec<f64>,
}

impl CuriosityBatch {
    fn validate(&self, model: &CuriosityModel) -> Result<()> {
        let c = &model.config;
        let checks = [
            ("images", self.images.len(), self.n * model.image_len()),
            ("next_images", self.next_images.len(), self.n * model.image_len()),
            ("touch", self.touch.len(), self.n * c.touch_dim),
            ("next_touch", self.next_touch.len(), self.n * c.touch_dim),
            ("actions", self.actions.len(), self.n * c.action_dim),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(CuriosityError::Shape { what, got, expected });
            }
        }
        Ok(())
    }
}

/// Per-transition surprise, measured before any parameter update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IntrinsicRecord {
    /// Touch reconstruction error on the next observation.
    pub l_touch: f64,
    pub l_fdm: f64,
    /// Reward of the configured variant.
    pub r_int: f64,
}

/// Mean training losses of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub l_touch: f64,
    pub l_fdm: f64,
    pub l_idf: Option<f64>,
    pub l_rnd: Option<f64>,
    pub l_ensemble: Option<f64>,
    pub l_tfm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// `enc(x_t)`, `[n, 256]`.
    pub features: Vec<f64>,
    /// `enc(x_{t+1})`, `[n, 256]`.
    pub next_features: Vec<f64>,
    pub records: Vec<IntrinsicRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub evaluation: Evaluation,
    pub losses: LossReport,
}

fn concat_rows(a: &[f64], da: usize, b: &[f64], db: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (da + db));
    for i in 0..n {
        out.extend_from_slice(&a[i * da..(i + 1) * da]);
        out.extend_from_slice(&b[i * db..(i + 1) * db]);
    }
    out
}

fn split_rows(g: &[f64], da: usize, db: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::with_capacity(n * da);
    let mut b = Vec::with_capacity(n * db);
    for row in g.chunks(da + db).take(n) {
        a.extend_from_slice(&row[..da]);
        b.extend_from_slice(&row[da..]);
    }
    (a, b)
}

/// Row-wise Euclidean distances between `pred` and `target` (`[n, d]`).
pub fn row_norms(pred: &[f64], target: &[f64], d: usize) -> Vec<f64> {
    pred.chunks(d)
        .zip(target.chunks(d))
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect()
}

/// Gradient of `mean_i ||pred_i - target_i||` with respect to `pred`.
/// Rows with zero error contribute a zero (sub)gradient.
fn mean_norm_grad(pred: &[f64], target: &[f64], norms: &[f64], d: usize) -> Vec<f64> {
    let n = norms.len() as f64;
    let mut g = vec![0.0; pred.len()];
    for (i, &r) in norms.iter().enumerate() {
        if r > 0.0 {
            for j in i * d..(i + 1) * d {
                g[j] = (pred[j] - target[j]) / (n * r);
            }
        }
    }
    g
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn check_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(CuriosityError::NonFiniteLoss { what, value })
    }
}

/// Convex mix of the two prediction errors.
pub fn intrinsic_reward(l_touch: f64, l_fdm: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(CuriosityError::Lambda(lambda));
    }
    Ok((1.0 - lambda) * l_touch + lambda * l_fdm)
}

/// Latent features of a batch of images.
pub fn encode_batch(model: &CuriosityModel, images: &[f64], n: usize) -> Result<Vec<f64>> {
    Ok(model.enc.net.predict(images, n)?)
}

pub fn encode(model: &CuriosityModel, image: &[f64]) -> Result<Vec<f64>> {
    encode_batch(model, image, 1)
}

pub fn touch_loss(model: &CuriosityModel, image: &[f64], touch: &[f64]) -> Result<f64> {
    let z = encode(model, image)?;
    let pred = model.dec.net.predict(&z, 1)?;
    if touch.len() != pred.len() {
        return Err(CuriosityError::Shape {
            what: "touch",
            got: touch.len(),
            expected: pred.len(),
        });
    }
    Ok(row_norms(&pred, touch, pred.len())[0])
}

pub fn fdm_loss(model: &CuriosityModel, image: &[f64], action: &[f64], next_image: &[f64]) -> Result<f64> {
    let z = encode(model, image)?;
    let z1 = encode(model, next_image)?;
    let input = concat_rows(&z, LATENT_DIM, action, action.len(), 1);
    let pred = model.fdm.net.predict(&input, 1)?;
    Ok(row_norms(&pred, &z1, LATENT_DIM)[0])
}

pub fn inverse_dynamics_loss(
    model: &CuriosityModel,
    image: &[f64],
    next_image: &[f64],
    action: &[f64],
) -> Result<f64> {
    let idf = model.idf.as_ref().ok_or(CuriosityError::WrongMode {
        op: "inverse_dynamics_loss",
        mode: model.config.feature_mode,
    })?;
    let z = encode(model, image)?;
    let z1 = encode(model, next_image)?;
    let pred = idf.net.predict(&concat_rows(&z, LATENT_DIM, &z1, LATENT_DIM, 1), 1)?;
    Ok(row_norms(&pred, action, action.len())[0])
}

/// Sum over latent dimensions of the across-member variance. The mean is
/// taken relative to the first member, so identical members give exactly 0.
pub fn ensemble_variance(predictions: &[Vec<f64>], n: usize, d: usize) -> Vec<f64> {
    let k = predictions.len() as f64;
    (0..n)
        .map(|i| {
            (i * d..(i + 1) * d)
                .map(|j| {
                    let base = predictions[0][j];
                    let shift = predictions.iter().map(|p| p[j] - base).sum::<f64>() / k;
                    predictions
                        .iter()
                        .map(|p| (p[j] - base - shift).powi(2))
                        .sum::<f64>()
                        / k
                })
                .sum()
        })
        .collect()
}

/// Raw per-sample signals from which every variant's reward is formed.
struct Signals {
    l_touch: Vec<f64>,
    l_fdm: Vec<f64>,
    l_rnd: Option<Vec<f64>>,
    disagreement: Option<Vec<f64>>,
    l_tfm: Option<Vec<f64>>,
}

fn variant_rewards(config: &CuriosityConfig, s: &Signals) -> Result<Vec<IntrinsicRecord>> {
    let n = s.l_touch.len();
    let lambda = config.lambda;
    (0..n)
        .map(|i| {
            let (lt, lf) = (s.l_touch[i], s.l_fdm[i]);
            let r = match config.variant {
                Variant::Toc => intrinsic_reward(lt, lf, lambda)?,
                Variant::TocPure => lt,
                Variant::Icm => lf,
                Variant::Rnd => s.l_rnd.as_ref().expect("rnd signal")[i],
                Variant::Disagreement => s.disagreement.as_ref().expect("ensemble signal")[i],
                Variant::TocFuture => {
                    (intrinsic_reward(lt, lf, lambda)? + s.l_tfm.as_ref().expect("tfm signal")[i]) / 2.0
                }
            };
            Ok(IntrinsicRecord {
                l_touch: lt,
                l_fdm: lf,
                r_int: r,
            })
        })
        .collect()
}

/// Features and per-transition rewards without touching parameters.
pub fn evaluate(model: &CuriosityModel, batch: &CuriosityBatch) -> Result<Evaluation> {
    batch.validate(model)?;
    let c = &model.config;
    let n = batch.n;
    let z = model.enc.net.predict(&batch.images, n)?;
    let z1 = model.enc.net.predict(&batch.next_images, n)?;
    let za = concat_rows(&z, LATENT_DIM, &batch.actions, c.action_dim, n);
    let h1 = model.dec.net.predict(&z1, n)?;
    let zp = model.fdm.net.predict(&za, n)?;
    let signals = Signals {
        l_touch: row_norms(&h1, &batch.next_touch, c.touch_dim),
        l_fdm: row_norms(&zp, &z1, LATENT_DIM),
        l_rnd: match &model.rnd {
            Some(r) => {
                let t = r.target.predict(&z1, n)?;
                let p = r.predictor.net.predict(&z1, n)?;
                Some(row_norms(&p, &t, RND_OUTPUT))
            }
            None => None,
        },
        disagreement: if model.ensemble.is_empty() {
            None
        } else {
            let preds = model
                .ensemble
                .iter()
                .map(|m| m.net.predict(&za, n))
                .collect::<Result<Vec<_>, _>>()?;
            Some(ensemble_variance(&preds, n, LATENT_DIM))
        },
        l_tfm: match &model.tfm {
            Some(t) => {
                let ha = concat_rows(&batch.touch, c.touch_dim, &batch.actions, c.action_dim, n);
                let p = t.net.predict(&ha, n)?;
                Some(row_norms(&p, &batch.next_touch, c.touch_dim))
            }
            None => None,
        },
    };
    Ok(Evaluation {
        features: z,
        next_features: z1,
        records: variant_rewards(c, &signals)?,
    })
}

/// Reward of the configured variant for a single transition.
pub fn variant_reward(
    model: &CuriosityModel,
    image: &[f64],
    touch: &[f64],
    action: &[f64],
    next_image: &[f64],
    next_touch: &[f64],
) -> Result<f64> {
    let batch = CuriosityBatch {
        n: 1,
        images: image.to_vec(),
        next_images: next_image.to_vec(),
        touch: touch.to_vec(),
        next_touch: next_touch.to_vec(),
        actions: action.to_vec(),
    };
    Ok(evaluate(model, &batch)?.records[0].r_int)
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

/// Rewards for `batch` under the current parameters, followed by one Adam
/// step on every trainable network.
///
/// The decoder learns `h_t` from `enc(x_t)`, the forward model learns
/// `enc(x_{t+1})` (held constant) from `[enc(x_t); a_t]`. The encoder
/// receives gradients from those two losses in learned mode, from the
/// inverse-dynamics head alone in idf mode, and none in random-fixed mode.
/// Auxiliary heads (RND predictor, ensemble, touch forward model) train on
/// detached inputs.
pub fn curiosity_update(model: &mut CuriosityModel, batch: &CuriosityBatch) -> Result<UpdateReport> {
    batch.validate(model)?;
    let c = model.config;
    let n = batch.n;
    let (ad, td) = (c.action_dim, c.touch_dim);
    let mode = c.feature_mode;

    let (z, tape_z): (Vec<f64>, Option<Tape>) = match mode {
        FeatureMode::RandomFixed => (model.enc.net.predict(&batch.images, n)?, None),
        _ => {
            let (z, t) = model.enc.net.forward(&batch.images, n)?;
            (z, Some(t))
        }
    };
    let (z1, tape_z1): (Vec<f64>, Option<Tape>) = match mode {
        FeatureMode::Idf => {
            let (z, t) = model.enc.net.forward(&batch.next_images, n)?;
            (z, Some(t))
        }
        _ => (model.enc.net.predict(&batch.next_images, n)?, None),
    };
    let za = concat_rows(&z, LATENT_DIM, &batch.actions, ad, n);

    // Touch decoder.
    let (h_pred, tape_dec) = model.dec.net.forward(&z, n)?;
    let dec_norms = row_norms(&h_pred, &batch.touch, td);
    let l_touch = check_finite("touch", mean(&dec_norms))?;
    let dec_grads = model
        .dec
        .net
        .backward(tape_dec, &mean_norm_grad(&h_pred, &batch.touch, &dec_norms, td))?;
    let h1 = model.dec.net.predict(&z1, n)?;
    let reward_touch = row_norms(&h1, &batch.next_touch, td);

    // Forward model.
    let (zp, tape_fdm) = model.fdm.net.forward(&za, n)?;
    let fdm_norms = row_norms(&zp, &z1, LATENT_DIM);
    let l_fdm = check_finite("fdm", mean(&fdm_norms))?;
    let fdm_grads = model
        .fdm
        .net
        .backward(tape_fdm, &mean_norm_grad(&zp, &z1, &fdm_norms, LATENT_DIM))?;

    let mut losses = LossReport {
        l_touch,
        l_fdm,
        ..LossReport::default()
    };

    let mut idf_step = None;
    let mut enc_grad_z = None;
    let mut enc_grad_z1 = None;
    match mode {
        FeatureMode::Learned => {
            let mut g = dec_grads.input.clone();
            let (gz, _) = split_rows(&fdm_grads.input, LATENT_DIM, ad, n);
            add_into(&mut g, &gz);
            enc_grad_z = Some(g);
        }
        FeatureMode::Idf => {
            let idf = model.idf.as_ref().ok_or(CuriosityError::WrongMode {
                op: "curiosity_update",
                mode,
            })?;
            let zz = concat_rows(&z, LATENT_DIM, &z1, LATENT_DIM, n);
            let (ap, tape) = idf.net.forward(&zz, n)?;
            let norms = row_norms(&ap, &batch.actions, ad);
            losses.l_idf = Some(check_finite("idf", mean(&norms))?);
            let g = idf.net.backward(tape, &mean_norm_grad(&ap, &batch.actions, &norms, ad))?;
            let (gz, gz1) = split_rows(&g.input, LATENT_DIM, LATENT_DIM, n);
            enc_grad_z = Some(gz);
            enc_grad_z1 = Some(gz1);
            idf_step = Some(g.params);
        }
        FeatureMode::RandomFixed => {}
    }

    let mut rnd_step = None;
    let l_rnd = match &model.rnd {
        Some(r) => {
            let t = r.target.predict(&z1, n)?;
            let (p, tape) = r.predictor.net.forward(&z1, n)?;
            let norms = row_norms(&p, &t, RND_OUTPUT);
            losses.l_rnd = Some(check_finite("rnd", mean(&norms))?);
            rnd_step = Some(r.predictor.net.backward_params(tape, &mean_norm_grad(&p, &t, &norms, RND_OUTPUT))?);
            Some(norms)
        }
        None => None,
    };

    let mut ens_steps = Vec::new();
    let disagreement = if model.ensemble.is_empty() {
        None
    } else {
        let mut preds = Vec::with_capacity(model.ensemble.len());
        let mut total = 0.0;
        for m in &model.ensemble {
            let (p, tape) = m.net.forward(&za, n)?;
            let norms = row_norms(&p, &z1, LATENT_DIM);
            total += mean(&norms);
            ens_steps.push(m.net.backward_params(tape, &mean_norm_grad(&p, &z1, &norms, LATENT_DIM))?);
            preds.push(p);
        }
        losses.l_ensemble = Some(check_finite("ensemble", total / model.ensemble.len() as f64)?);
        Some(ensemble_variance(&preds, n, LATENT_DIM))
    };

    let mut tfm_step = None;
    let l_tfm = match &model.tfm {
        Some(t) => {
            let ha = concat_rows(&batch.touch, td, &batch.actions, ad, n);
            let (p, tape) = t.net.forward(&ha, n)?;
            let norms = row_norms(&p, &batch.next_touch, td);
            losses.l_tfm = Some(check_finite("touch-forward", mean(&norms))?);
            tfm_step = Some(t.net.backward_params(tape, &mean_norm_grad(&p, &batch.next_touch, &norms, td))?);
            Some(norms)
        }
        None => None,
    };

    let enc_step = match (tape_z, enc_grad_z) {
        (Some(tape), Some(g)) => {
            let mut grads = model.enc.net.backward_params(tape, &g)?;
            if let (Some(tape1), Some(g1)) = (tape_z1, enc_grad_z1) {
                let g1 = model.enc.net.backward_params(tape1, &g1)?;
                grads.add_scaled(&g1, 1.0);
            }
            Some(grads)
        }
        _ => None,
    };

    let signals = Signals {
        l_touch: reward_touch,
        l_fdm: fdm_norms,
        l_rnd,
        disagreement,
        l_tfm,
    };
    let records = variant_rewards(&c, &signals)?;

    model.dec.step(&dec_grads.params)?;
    model.fdm.step(&fdm_grads.params)?;
    if let Some(g) = enc_step {
        model.enc.step(&g)?;
    }
    if let (Some(idf), Some(g)) = (model.idf.as_mut(), idf_step) {
        idf.step(&g)?;
    }
    if let (Some(r), Some(g)) = (model.rnd.as_mut(), rnd_step) {
        r.predictor.step(&g)?;
    }
    for (m, g) in model.ensemble.iter_mut().zip(&ens_steps) {
        m.step(g)?;
    }
    if let (Some(t), Some(g)) = (model.tfm.as_mut(), tfm_step) {
        t.step(&g)?;
    }

    Ok(UpdateReport {
        evaluation: Evaluation {
            features: z,
            next_features: z1,
            records,
        },
        losses,
    })
}

#[cfg(test)]
mod tests;
