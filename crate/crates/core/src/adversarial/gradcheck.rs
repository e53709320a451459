use serde::Serialize;

use super::{
    gan_losses, loss_gradients, ClipStarts, DiscriminatorConfig, DiscriminatorWeights, GanBatch, GradTarget,
    LossConfig, Mel, Result, SampleConditions, StackConfig,
};
use crate::rng::SplitMix64;

/// Denominator floor for [`relative_error`], so entries where both
/// gradients are numerically zero do not divide by zero.
pub const REL_ERR_FLOOR: f64 = 1e-8;
pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_THRESHOLD: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// A complete loss evaluation: batch, weights and configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub batch: GanBatch,
    pub weights: DiscriminatorWeights,
    pub config: LossConfig,
}

/// Seeded scenario with about a thousand discriminator parameters: 8 mel
/// bins, 16 frames, condition width 6, windows 8 and 12, conv channels 3
/// and 4, batch of two, unconditional stack on.
pub fn tiny_scenario(seed: u64) -> Result<Scenario> {
    let config = LossConfig { windows: vec![8, 12], uncond: true };
    let (bins, frames, cond_dim, batch) = (8, 16, 6, 2);
    let dcfg = DiscriminatorConfig {
        mel_bins: bins,
        cond_dim,
        windows: config.windows.clone(),
        uncond: config.uncond,
        stack: StackConfig { channels: vec![3, 4], ..StackConfig::default() },
    };
    let weights = DiscriminatorWeights::seeded(seed, &dcfg)?;
    let mut rng = SplitMix64::new(seed.wrapping_add(1));
    let mut mel = || Mel::new(bins, frames, rng.fill_uniform(bins * frames, -1.0, 1.0));
    let real = (0..batch).map(|_| mel()).collect::<Result<Vec<_>>>()?;
    let fake = (0..batch).map(|_| mel()).collect::<Result<Vec<_>>>()?;
    let mut rng = SplitMix64::new(seed.wrapping_add(2));
    let conds = (0..batch)
        .map(|_| SampleConditions {
            speaker: rng.fill_uniform(cond_dim, -1.0, 1.0),
            emotion: rng.fill_uniform(cond_dim, -1.0, 1.0),
        })
        .collect();
    let starts = ClipStarts::draw(&mut rng, &real, &fake, &config.windows)?;
    Ok(Scenario { batch: GanBatch { real, fake, conds, starts }, weights, config })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub threshold: f64,
    pub disc_params: usize,
    pub disc_max_rel_err: f64,
    pub input_entries: usize,
    pub input_max_rel_err: f64,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Compares reverse-mode gradients of `loss_d` (all discriminator
/// parameters) and `loss_g` (all generated mel entries) with central
/// differences of step `step`.
pub fn gradcheck(s: &Scenario, step: f64, threshold: f64) -> Result<GradCheckReport> {
    let analytic = loss_gradients(&s.batch, &s.weights, &s.config, GradTarget::DiscParams)?.flat();
    let mut weights = s.weights.clone();
    let mut params = weights.params();
    let mut disc_max: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = params[i];
        params[i] = orig + step;
        weights.set_params(&params);
        let plus = gan_losses(&s.batch, &weights, &s.config)?.loss_d;
        params[i] = orig - step;
        weights.set_params(&params);
        let minus = gan_losses(&s.batch, &weights, &s.config)?.loss_d;
        params[i] = orig;
        disc_max = disc_max.max(relative_error(a, (plus - minus) / (2.0 * step)));
    }

    let analytic = loss_gradients(&s.batch, &s.weights, &s.config, GradTarget::FakeInput)?.flat();
    let mut batch = s.batch.clone();
    let mut input_max: f64 = 0.0;
    let mut k = 0;
    for b in 0..batch.fake.len() {
        for e in 0..batch.fake[b].data().len() {
            let orig = batch.fake[b].data()[e];
            batch.fake[b].data_mut()[e] = orig + step;
            let plus = gan_losses(&batch, &s.weights, &s.config)?.loss_g;
            batch.fake[b].data_mut()[e] = orig - step;
            let minus = gan_losses(&batch, &s.weights, &s.config)?.loss_g;
            batch.fake[b].data_mut()[e] = orig;
            input_max = input_max.max(relative_error(analytic[k], (plus - minus) / (2.0 * step)));
            k += 1;
        }
    }

    let max_rel_err = disc_max.max(input_max);
    Ok(GradCheckReport {
        step,
        threshold,
        disc_params: params.len(),
        disc_max_rel_err: disc_max,
        input_entries: k,
        input_max_rel_err: input_max,
        max_rel_err,
        passed: max_rel_err < threshold,
    })
}
