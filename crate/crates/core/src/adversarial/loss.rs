use serde::{Deserialize, Serialize};

use super::disc::StackGrads;
use super::{
    broadcast_condition, random_clip, AdversarialError, ConditionKind, DiscriminatorGrads, DiscriminatorWeights, Mel,
    Result, SampleConditions, Tensor3, DEFAULT_WINDOWS,
};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub windows: Vec<usize>,
    /// Include the stack that sees the mel clip alone.
    pub uncond: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { windows: DEFAULT_WINDOWS.to_vec(), uncond: true }
    }
}

impl LossConfig {
    pub fn kinds(&self) -> Vec<ConditionKind> {
        ConditionKind::enabled(self.uncond)
    }
}

/// Clip offsets, `starts[sample][window index]`. Real and generated mels of
/// a sample are clipped at the same offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClipStarts(pub Vec<Vec<usize>>);

impl ClipStarts {
    /// Draws one offset per (sample, window), samples outer, uniformly from
    /// `0..=min(T_real, T_fake) - window`.
    pub fn draw(rng: &mut SplitMix64, real: &[Mel], fake: &[Mel], windows: &[usize]) -> Result<Self> {
        if real.len() != fake.len() {
            return Err(AdversarialError::BatchMismatch(format!("{} real vs {} generated mels", real.len(), fake.len())));
        }
        let mut out = Vec::with_capacity(real.len());
        for (y, y_hat) in real.iter().zip(fake) {
            let frames = y.frames().min(y_hat.frames());
            let mut row = Vec::with_capacity(windows.len());
            for &window in windows {
                if window > frames {
                    return Err(AdversarialError::WindowTooLong { window, frames });
                }
                row.push(rng.range_inclusive(0, frames - window));
            }
            out.push(row);
        }
        Ok(Self(out))
    }
}

/// One step's inputs: paired real and generated mels with their conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct GanBatch {
    pub real: Vec<Mel>,
    pub fake: Vec<Mel>,
    pub conds: Vec<SampleConditions>,
    pub starts: ClipStarts,
}

impl GanBatch {
    pub fn len(&self) -> usize {
        self.real.len()
    }

    pub fn is_empty(&self) -> bool {
        self.real.is_empty()
    }

    fn check(&self, cfg: &LossConfig) -> Result<()> {
        let n = self.real.len();
        if n == 0 {
            return Err(AdversarialError::BatchMismatch("empty batch".into()));
        }
        if self.fake.len() != n || self.conds.len() != n || self.starts.0.len() != n {
            return Err(AdversarialError::BatchMismatch(format!(
                "{n} real, {} generated, {} condition sets, {} offset rows",
                self.fake.len(),
                self.conds.len(),
                self.starts.0.len()
            )));
        }
        if cfg.windows.is_empty() {
            return Err(AdversarialError::InvalidConfig("no windows".into()));
        }
        if let Some(row) = self.starts.0.iter().find(|r| r.len() != cfg.windows.len()) {
            return Err(AdversarialError::BatchMismatch(format!(
                "offset row has {} entries for {} windows",
                row.len(),
                cfg.windows.len()
            )));
        }
        Ok(())
    }

    fn input(&self, fake: bool, b: usize, wi: usize, window: usize, kind: ConditionKind, w: &DiscriminatorWeights) -> Result<Tensor3> {
        let mel = if fake { &self.fake[b] } else { &self.real[b] };
        if mel.bins() != w.mel_bins {
            return Err(AdversarialError::ShapeMismatch {
                what: "mel bins".into(),
                expected: vec![w.mel_bins],
                actual: vec![mel.bins()],
            });
        }
        let cond = self.conds[b].for_kind(kind);
        if kind != ConditionKind::Unconditional && cond.values.len() != w.cond_dim {
            return Err(AdversarialError::ShapeMismatch {
                what: format!("{kind} condition of sample {b}"),
                expected: vec![w.cond_dim],
                actual: vec![cond.values.len()],
            });
        }
        let clip = random_clip(mel, window, self.starts.0[b][wi])?;
        broadcast_condition(&cond, &clip)
    }
}

/// Discriminator outputs for one (kind, window), one value per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub kind: ConditionKind,
    pub window: usize,
    pub real: Vec<f64>,
    pub fake: Vec<f64>,
}

/// All discriminator outputs of a step, kinds outer, windows inner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub entries: Vec<ScoreEntry>,
}

impl Scores {
    /// Every stack returns `real` on real clips and `fake` on generated ones.
    pub fn constant(cfg: &LossConfig, batch: usize, real: f64, fake: f64) -> Self {
        let entries = cfg
            .kinds()
            .into_iter()
            .flat_map(|kind| {
                cfg.windows.iter().map(move |&window| ScoreEntry {
                    kind,
                    window,
                    real: vec![real; batch],
                    fake: vec![fake; batch],
                })
            })
            .collect();
        Self { entries }
    }

    /// Least-squares losses with the expectation taken as the batch mean.
    /// Terms are summed in storage order.
    pub fn losses(&self) -> GanLosses {
        let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&d| f(d)).sum::<f64>() / v.len() as f64;
        let mut terms = Vec::with_capacity(3 * self.entries.len());
        for e in &self.entries {
            let term = |role, value| LossTerm { window: e.window, kind: e.kind, role, value };
            terms.push(term(TermRole::Real, mean(&e.real, &|d| (1.0 - d) * (1.0 - d))));
            terms.push(term(TermRole::Fake, mean(&e.fake, &|d| d * d)));
            terms.push(term(TermRole::Generator, mean(&e.fake, &|d| (1.0 - d) * (1.0 - d))));
        }
        GanLosses::from_terms(terms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermRole {
    /// `(1 - D(y))^2`, part of the discriminator loss.
    Real,
    /// `D(y_hat)^2`, part of the discriminator loss.
    Fake,
    /// `(1 - D(y_hat))^2`, the generator loss.
    Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub window: usize,
    pub kind: ConditionKind,
    pub role: TermRole,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanLosses {
    pub loss_d: f64,
    pub loss_g: f64,
    pub terms: Vec<LossTerm>,
}

impl GanLosses {
    fn from_terms(terms: Vec<LossTerm>) -> Self {
        let sum = |pred: &dyn Fn(TermRole) -> bool| terms.iter().filter(|t| pred(t.role)).map(|t| t.value).sum();
        let loss_d = sum(&|r| r != TermRole::Generator);
        let loss_g = sum(&|r| r == TermRole::Generator);
        Self { loss_d, loss_g, terms }
    }
}

pub fn discriminator_scores(batch: &GanBatch, w: &DiscriminatorWeights, cfg: &LossConfig) -> Result<Scores> {
    batch.check(cfg)?;
    w.validate()?;
    let mut entries = Vec::new();
    for kind in cfg.kinds() {
        for (wi, &window) in cfg.windows.iter().enumerate() {
            let stack = w.stack(window, kind)?;
            let score = |fake: bool| -> Result<Vec<f64>> {
                (0..batch.len())
                    .map(|b| Ok(stack.forward_trace(&batch.input(fake, b, wi, window, kind, w)?)?.out))
                    .collect()
            };
            let real = score(false)?;
            let fake = score(true)?;
            entries.push(ScoreEntry { kind, window, real, fake });
        }
    }
    Ok(Scores { entries })
}

pub fn gan_losses(batch: &GanBatch, w: &DiscriminatorWeights, cfg: &LossConfig) -> Result<GanLosses> {
    Ok(discriminator_scores(batch, w, cfg)?.losses())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradTarget {
    /// `d loss_d / d theta` for every discriminator parameter.
    DiscParams,
    /// `d loss_g / d mel` for both mel sets.
    FakeInput,
}

/// Gradients of the generator loss with respect to the mel entries. The
/// real-mel gradients are structurally zero and kept for symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGrads {
    pub real: Vec<Mel>,
    pub fake: Vec<Mel>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gradients {
    Disc(DiscriminatorGrads),
    Input(InputGrads),
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        match self {
            Self::Disc(g) => g.flat(),
            Self::Input(g) => g.fake.iter().flat_map(|m| m.data().iter().copied()).collect(),
        }
    }
}

/// Exact reverse-mode gradients under the same forward definition as
/// [`gan_losses`].
pub fn loss_gradients(batch: &GanBatch, w: &DiscriminatorWeights, cfg: &LossConfig, target: GradTarget) -> Result<Gradients> {
    batch.check(cfg)?;
    w.validate()?;
    let n = batch.len() as f64;
    match target {
        GradTarget::DiscParams => {
            let mut grads = DiscriminatorGrads::zeros_like(w);
            for kind in cfg.kinds() {
                for (wi, &window) in cfg.windows.iter().enumerate() {
                    let si = w.stack_index(window, kind)?;
                    let stack = &w.stacks[si];
                    let g: &mut StackGrads = &mut grads.stacks[si];
                    for b in 0..batch.len() {
                        let real = stack.forward_trace(&batch.input(false, b, wi, window, kind, w)?)?;
                        stack.backward(&real, -2.0 * (1.0 - real.out) / n, g, false);
                        let fake = stack.forward_trace(&batch.input(true, b, wi, window, kind, w)?)?;
                        stack.backward(&fake, 2.0 * fake.out / n, g, false);
                    }
                }
            }
            Ok(Gradients::Disc(grads))
        }
        GradTarget::FakeInput => {
            let zeros = |mels: &[Mel]| mels.iter().map(|m| Mel::zeros(m.bins(), m.frames())).collect::<Vec<_>>();
            let mut grads = InputGrads { real: zeros(&batch.real), fake: zeros(&batch.fake) };
            for kind in cfg.kinds() {
                for (wi, &window) in cfg.windows.iter().enumerate() {
                    let stack = w.stack(window, kind)?;
                    let mut scratch = StackGrads::zeros_like(stack);
                    for b in 0..batch.len() {
                        let trace = stack.forward_trace(&batch.input(true, b, wi, window, kind, w)?)?;
                        let dx = stack
                            .backward(&trace, -2.0 * (1.0 - trace.out) / n, &mut scratch, true)
                            .expect("input gradient requested");
                        let start = batch.starts.0[b][wi];
                        let mel = &mut grads.fake[b];
                        let frames = mel.frames();
                        for f in 0..mel.bins() {
                            let row = &mut mel.data_mut()[f * frames + start..f * frames + start + window];
                            for (j, slot) in row.iter_mut().enumerate() {
                                *slot += dx.get(0, f, j);
                            }
                        }
                    }
                }
            }
            Ok(Gradients::Input(grads))
        }
    }
}
