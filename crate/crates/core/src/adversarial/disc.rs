use serde::{Deserialize, Serialize};

use super::{AdversarialError, ConditionKind, Result, Tensor3, DEFAULT_CONDITION_DIM, DEFAULT_MEL_BINS, DEFAULT_WINDOWS, LEAKY_SLOPE};
use crate::rng::SplitMix64;

/// One valid (unpadded) strided 2-D convolution. Kernel layout is
/// `out x in x kh x kw`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let [c, h, w] = input;
        let [kh, kw] = self.kernel;
        let [sh, sw] = self.stride;
        if c != self.in_channels {
            return Err(AdversarialError::ShapeMismatch {
                what: "conv input channels".into(),
                expected: vec![self.in_channels],
                actual: vec![c],
            });
        }
        if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
            return Err(AdversarialError::InvalidWeights("kernel and stride must be positive".into()));
        }
        if h < kh || w < kw {
            return Err(AdversarialError::InvalidConfig(format!(
                "input {h}x{w} is smaller than the {kh}x{kw} kernel"
            )));
        }
        Ok([self.out_channels, (h - kh) / sh + 1, (w - kw) / sw + 1])
    }

    fn forward(&self, x: &Tensor3) -> Tensor3 {
        let [_, ho, wo] = self.output_shape(x.shape()).expect("validated shape");
        let [kh, kw] = self.kernel;
        let [sh, sw] = self.stride;
        let mut y = Tensor3::zeros(self.out_channels, ho, wo);
        for o in 0..self.out_channels {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = self.bias[o];
                    for c in 0..self.in_channels {
                        for u in 0..kh {
                            let wrow = ((o * self.in_channels + c) * kh + u) * kw;
                            let xrow = x.idx(c, i * sh + u, j * sw);
                            for v in 0..kw {
                                acc += self.weight[wrow + v] * x.data[xrow + v];
                            }
                        }
                    }
                    let k = y.idx(o, i, j);
                    y.data[k] = acc;
                }
            }
        }
        y
    }

    /// Adds parameter gradients into `dw`/`db` and, when `dx` is given, the
    /// input gradient into it.
    fn backward(&self, x: &Tensor3, dy: &Tensor3, dw: &mut [f64], db: &mut [f64], mut dx: Option<&mut Tensor3>) {
        let [kh, kw] = self.kernel;
        let [sh, sw] = self.stride;
        for (o, db) in db.iter_mut().enumerate() {
            for i in 0..dy.height {
                for j in 0..dy.width {
                    let g = dy.get(o, i, j);
                    *db += g;
                    for c in 0..self.in_channels {
                        for u in 0..kh {
                            let wrow = ((o * self.in_channels + c) * kh + u) * kw;
                            let xrow = x.idx(c, i * sh + u, j * sw);
                            for v in 0..kw {
                                dw[wrow + v] += g * x.data[xrow + v];
                                if let Some(dx) = dx.as_deref_mut() {
                                    dx.data[xrow + v] += g * self.weight[wrow + v];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Conv layers with leaky ReLU, flatten, then a fully connected layer to one
/// score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvStack {
    pub window: usize,
    pub kind: ConditionKind,
    /// `[channels, height, width]` the stack accepts.
    pub input_shape: [usize; 3],
    pub convs: Vec<ConvLayer>,
    pub slope: f64,
    pub fc_weight: Vec<f64>,
    pub fc_bias: f64,
}

impl ConvStack {
    /// Shape after each conv layer, starting with the input shape.
    fn shapes(&self) -> Result<Vec<[usize; 3]>> {
        let mut shapes = vec![self.input_shape];
        for conv in &self.convs {
            shapes.push(conv.output_shape(*shapes.last().unwrap())?);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.shapes()?;
        for conv in &self.convs {
            let [kh, kw] = conv.kernel;
            if conv.weight.len() != conv.out_channels * conv.in_channels * kh * kw
                || conv.bias.len() != conv.out_channels
            {
                return Err(AdversarialError::InvalidWeights(format!(
                    "conv {}->{} {kh}x{kw} has {} weights and {} biases",
                    conv.in_channels,
                    conv.out_channels,
                    conv.weight.len(),
                    conv.bias.len()
                )));
            }
        }
        let flat: usize = shapes.last().unwrap().iter().product();
        if self.fc_weight.len() != flat {
            return Err(AdversarialError::InvalidWeights(format!(
                "fc has {} weights, flattened features are {flat}",
                self.fc_weight.len()
            )));
        }
        let finite = self.slope.is_finite()
            && self.fc_bias.is_finite()
            && self.fc_weight.iter().all(|x| x.is_finite())
            && self.convs.iter().all(|c| c.weight.iter().chain(&c.bias).all(|x| x.is_finite()));
        if !finite {
            return Err(AdversarialError::NonFinite(format!("stack ({}, {})", self.window, self.kind)));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(|c| c.weight.len() + c.bias.len()).sum::<usize>() + self.fc_weight.len() + 1
    }

    fn leaky(&self, z: f64) -> f64 {
        if z > 0.0 {
            z
        } else {
            self.slope * z
        }
    }

    fn leaky_grad(&self, z: f64) -> f64 {
        if z > 0.0 {
            1.0
        } else {
            self.slope
        }
    }

    pub(crate) fn forward_trace(&self, x: &Tensor3) -> Result<Trace> {
        if x.shape() != self.input_shape {
            return Err(AdversarialError::ShapeMismatch {
                what: format!("input of stack ({}, {})", self.window, self.kind),
                expected: self.input_shape.to_vec(),
                actual: x.shape().to_vec(),
            });
        }
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut pre = Vec::with_capacity(self.convs.len());
        let mut act = x.clone();
        for conv in &self.convs {
            let z = conv.forward(&act);
            let mut a = z.clone();
            a.data.iter_mut().for_each(|v| *v = self.leaky(*v));
            inputs.push(std::mem::replace(&mut act, a));
            pre.push(z);
        }
        let out = self.fc_bias + self.fc_weight.iter().zip(&act.data).map(|(w, a)| w * a).sum::<f64>();
        Ok(Trace { inputs, pre, last: act, out })
    }

    /// Reverse pass for `d loss / d out = dout`. Parameter gradients are
    /// added into `grads`; the input gradient is returned when asked for.
    pub(crate) fn backward(&self, trace: &Trace, dout: f64, grads: &mut StackGrads, want_input: bool) -> Option<Tensor3> {
        grads.fc_bias += dout;
        for (g, a) in grads.fc_weight.iter_mut().zip(&trace.last.data) {
            *g += dout * a;
        }
        let mut da = trace.last.clone();
        for (d, w) in da.data.iter_mut().zip(&self.fc_weight) {
            *d = dout * w;
        }
        for (l, conv) in self.convs.iter().enumerate().rev() {
            let mut dz = da;
            for (d, z) in dz.data.iter_mut().zip(&trace.pre[l].data) {
                *d *= self.leaky_grad(*z);
            }
            let x = &trace.inputs[l];
            let mut dx = (l > 0 || want_input).then(|| Tensor3::zeros(x.channels, x.height, x.width));
            conv.backward(x, &dz, &mut grads.conv_weight[l], &mut grads.conv_bias[l], dx.as_mut());
            da = dx?;
        }
        want_input.then_some(da)
    }
}

/// Intermediate values of one forward pass.
pub(crate) struct Trace {
    /// Input of each conv layer.
    inputs: Vec<Tensor3>,
    /// Pre-activation output of each conv layer.
    pre: Vec<Tensor3>,
    /// Activated output of the last conv layer (flattened into the FC).
    last: Tensor3,
    pub(crate) out: f64,
}

/// Score of one input tensor under one stack.
pub fn disc_forward(x: &Tensor3, stack: &ConvStack) -> Result<f64> {
    stack.validate()?;
    Ok(stack.forward_trace(x)?.out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    /// Output channels of each conv layer.
    pub channels: Vec<usize>,
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub slope: f64,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self { channels: vec![8, 16], kernel: [3, 3], stride: [2, 2], slope: LEAKY_SLOPE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub mel_bins: usize,
    pub cond_dim: usize,
    pub windows: Vec<usize>,
    pub uncond: bool,
    pub stack: StackConfig,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            mel_bins: DEFAULT_MEL_BINS,
            cond_dim: DEFAULT_CONDITION_DIM,
            windows: DEFAULT_WINDOWS.to_vec(),
            uncond: true,
            stack: StackConfig::default(),
        }
    }
}

impl DiscriminatorConfig {
    pub fn input_shape(&self, kind: ConditionKind, window: usize) -> [usize; 3] {
        match kind {
            ConditionKind::Unconditional => [1, self.mel_bins, window],
            _ => [2, self.mel_bins.max(self.cond_dim), window],
        }
    }
}

/// All stacks of the discriminator, ordered by kind (speaker, emotion,
/// none) and then by window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorWeights {
    pub mel_bins: usize,
    pub cond_dim: usize,
    pub stacks: Vec<ConvStack>,
}

impl DiscriminatorWeights {
    /// Seeded initialization. Stacks are drawn in storage order; within a
    /// stack each conv draws its kernel then its bias, followed by the FC
    /// weights and bias. Every entry is uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn seeded(seed: u64, config: &DiscriminatorConfig) -> Result<Self> {
        if config.mel_bins == 0 || config.cond_dim == 0 || config.windows.is_empty() {
            return Err(AdversarialError::InvalidConfig("mel_bins, cond_dim and windows must be nonempty".into()));
        }
        let mut rng = SplitMix64::new(seed);
        let mut stacks = Vec::new();
        for kind in ConditionKind::enabled(config.uncond) {
            for &window in &config.windows {
                let input_shape = config.input_shape(kind, window);
                let mut shape = input_shape;
                let mut convs = Vec::new();
                for &out in &config.stack.channels {
                    let [kh, kw] = config.stack.kernel;
                    let fan_in = shape[0] * kh * kw;
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    let mut conv = ConvLayer {
                        out_channels: out,
                        in_channels: shape[0],
                        kernel: config.stack.kernel,
                        stride: config.stack.stride,
                        weight: Vec::new(),
                        bias: Vec::new(),
                    };
                    shape = conv.output_shape(shape)?;
                    conv.weight = rng.fill_uniform(out * fan_in, -bound, bound);
                    conv.bias = rng.fill_uniform(out, -bound, bound);
                    convs.push(conv);
                }
                let flat: usize = shape.iter().product();
                let bound = 1.0 / (flat as f64).sqrt();
                let fc_weight = rng.fill_uniform(flat, -bound, bound);
                let fc_bias = rng.uniform(-bound, bound);
                stacks.push(ConvStack { window, kind, input_shape, convs, slope: config.stack.slope, fc_weight, fc_bias });
            }
        }
        Ok(Self { mel_bins: config.mel_bins, cond_dim: config.cond_dim, stacks })
    }

    pub fn validate(&self) -> Result<()> {
        if self.stacks.is_empty() {
            return Err(AdversarialError::InvalidWeights("no stacks".into()));
        }
        for s in &self.stacks {
            let expected = match s.kind {
                ConditionKind::Unconditional => [1, self.mel_bins, s.window],
                _ => [2, self.mel_bins.max(self.cond_dim), s.window],
            };
            if s.input_shape != expected {
                return Err(AdversarialError::ShapeMismatch {
                    what: format!("declared input of stack ({}, {})", s.window, s.kind),
                    expected: expected.to_vec(),
                    actual: s.input_shape.to_vec(),
                });
            }
            s.validate()?;
        }
        Ok(())
    }

    pub fn stack(&self, window: usize, kind: ConditionKind) -> Result<&ConvStack> {
        self.stacks
            .iter()
            .find(|s| s.window == window && s.kind == kind)
            .ok_or(AdversarialError::MissingStack { window, kind })
    }

    pub(crate) fn stack_index(&self, window: usize, kind: ConditionKind) -> Result<usize> {
        self.stacks
            .iter()
            .position(|s| s.window == window && s.kind == kind)
            .ok_or(AdversarialError::MissingStack { window, kind })
    }

    pub fn param_count(&self) -> usize {
        self.stacks.iter().map(ConvStack::param_count).sum()
    }

    /// All parameters flattened: per stack, each conv's kernel then bias,
    /// then FC weights and bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for s in &self.stacks {
            for c in &s.convs {
                out.extend_from_slice(&c.weight);
                out.extend_from_slice(&c.bias);
            }
            out.extend_from_slice(&s.fc_weight);
            out.push(s.fc_bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut it = flat.iter().copied();
        for s in &mut self.stacks {
            for c in &mut s.convs {
                c.weight.iter_mut().chain(c.bias.iter_mut()).for_each(|p| *p = it.next().unwrap());
            }
            s.fc_weight.iter_mut().for_each(|p| *p = it.next().unwrap());
            s.fc_bias = it.next().unwrap();
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: Self = serde_json::from_str(text).map_err(|e| AdversarialError::InvalidWeights(e.to_string()))?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("weights serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackGrads {
    pub window: usize,
    pub kind: ConditionKind,
    pub conv_weight: Vec<Vec<f64>>,
    pub conv_bias: Vec<Vec<f64>>,
    pub fc_weight: Vec<f64>,
    pub fc_bias: f64,
}

impl StackGrads {
    pub fn zeros_like(s: &ConvStack) -> Self {
        Self {
            window: s.window,
            kind: s.kind,
            conv_weight: s.convs.iter().map(|c| vec![0.0; c.weight.len()]).collect(),
            conv_bias: s.convs.iter().map(|c| vec![0.0; c.bias.len()]).collect(),
            fc_weight: vec![0.0; s.fc_weight.len()],
            fc_bias: 0.0,
        }
    }
}

/// Gradients mirroring [`DiscriminatorWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorGrads {
    pub stacks: Vec<StackGrads>,
}

impl DiscriminatorGrads {
    pub fn zeros_like(w: &DiscriminatorWeights) -> Self {
        Self { stacks: w.stacks.iter().map(StackGrads::zeros_like).collect() }
    }

    /// Flattened in the order of [`DiscriminatorWeights::params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in &self.stacks {
            for (w, b) in s.conv_weight.iter().zip(&s.conv_bias) {
                out.extend_from_slice(w);
                out.extend_from_slice(b);
            }
            out.extend_from_slice(&s.fc_weight);
            out.push(s.fc_bias);
        }
        out
    }
}
