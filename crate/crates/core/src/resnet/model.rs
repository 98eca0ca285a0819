use std::rc::Rc;

use rand_distr::{Distribution, Normal};

use super::arch::ArchSpec;
use crate::error::{Error, Result};
use crate::nn::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, classification_loss, global_avg_pool,
    global_avg_pool_backward, linear, linear_backward, relu, relu_backward, usable_probability, BatchStats, Cache,
    Conv2d, Grads, NormMode, ParamSet, RunningStats, Scalar, Tape, Tensor4, BN_EPS, BN_MOMENTUM,
};
use crate::rng::{mix64, seeded, stream};
use crate::synth::ImageTensor;

#[derive(Debug, Clone, Copy)]
struct NormUnit {
    scale: usize,
    shift: usize,
    /// Index into the model's running statistics.
    slot: usize,
}

/// Convolution, optional normalization, optional ReLU.
#[derive(Debug, Clone, Copy)]
struct ConvUnit {
    conv: Conv2d,
    weight: usize,
    norm: Option<NormUnit>,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    a: ConvUnit,
    b: ConvUnit,
    shortcut: Option<ConvUnit>,
}

#[derive(Debug, Clone, Copy)]
enum Hidden {
    Block(Block),
    Plain(ConvUnit),
}

/// Residual classifier: 3×3 stem, residual stages, global pool, linear head.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub arch: ArchSpec,
    pub seed: u64,
    pub params: ParamSet<T>,
    pub running: Vec<RunningStats<T>>,
    stem: ConvUnit,
    hidden: Vec<Hidden>,
    head_w: usize,
    head_b: usize,
}

struct Builder<T> {
    params: ParamSet<T>,
    running: Vec<RunningStats<T>>,
    rng: rand_chacha::ChaCha8Rng,
    batch_norm: bool,
}

impl<T: Scalar> Builder<T> {
    fn gaussian(&mut self, n: usize, std: f64) -> Vec<T> {
        let normal = Normal::new(0.0, std).expect("std is positive");
        (0..n).map(|_| T::of(normal.sample(&mut self.rng))).collect()
    }

    fn unit(&mut self, name: &str, conv: Conv2d) -> ConvUnit {
        let fan_in = conv.in_c * conv.kh * conv.kw;
        let w = self.gaussian(conv.weight_len(), (2.0 / fan_in as f64).sqrt());
        let weight = self.params.push(
            format!("{name}.weight"),
            vec![conv.out_c, conv.in_c, conv.kh, conv.kw],
            w,
        );
        let norm = self.batch_norm.then(|| {
            let c = conv.out_c;
            let scale = self
                .params
                .push(format!("{name}.norm.scale"), vec![c], vec![T::one(); c]);
            let shift = self
                .params
                .push(format!("{name}.norm.shift"), vec![c], vec![T::zero(); c]);
            self.running.push(RunningStats::new(c));
            NormUnit {
                scale,
                shift,
                slot: self.running.len() - 1,
            }
        });
        ConvUnit { conv, weight, norm }
    }
}

/// Counts of the structural pieces of a built model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Structure {
    pub hidden_convs: usize,
    pub residual_blocks: usize,
    pub projection_shortcuts: usize,
    pub head_width: usize,
}

impl<T: Scalar> Model<T> {
    /// Build and initialize a model. Weights are drawn in `f64` from a seeded
    /// stream, so `f32` and `f64` models from one seed agree up to rounding.
    pub fn build(arch: ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut b = Builder {
            params: ParamSet::new(),
            running: Vec::new(),
            rng: seeded(mix64(seed, stream::INIT)),
            batch_norm: arch.batch_norm,
        };
        let base = arch.base_filters;
        let stem = b.unit("stem", Conv2d::square(arch.in_channels, base, 3, 1, 1));
        let mut hidden = Vec::new();
        // Odd depths get one plain convolution at stem width.
        if arch.has_extra_conv() {
            hidden.push(Hidden::Plain(b.unit("extra", Conv2d::square(base, base, 3, 1, 1))));
        }
        let mut channels = base;
        for (s, &blocks) in arch.stage_sizes().iter().enumerate() {
            let f = arch.stage_filters(s);
            for i in 0..blocks {
                let stride = if s > 0 && i == 0 { 2 } else { 1 };
                let name = format!("stage{s}.block{i}");
                let a = b.unit(&format!("{name}.conv_a"), Conv2d::square(channels, f, 3, stride, 1));
                let bb = b.unit(&format!("{name}.conv_b"), Conv2d::square(f, f, 3, 1, 1));
                let shortcut = (channels != f || stride != 1)
                    .then(|| b.unit(&format!("{name}.shortcut"), Conv2d::square(channels, f, 1, stride, 0)));
                hidden.push(Hidden::Block(Block { a, b: bb, shortcut }));
                channels = f;
            }
        }
        let fan_in = channels;
        let w = b.gaussian(arch.bottleneck * fan_in, (1.0 / fan_in as f64).sqrt());
        let head_w = b.params.push("head.weight", vec![arch.bottleneck, fan_in], w);
        let head_b = b
            .params
            .push("head.bias", vec![arch.bottleneck], vec![T::zero(); arch.bottleneck]);
        Ok(Model {
            arch,
            seed,
            params: b.params,
            running: b.running,
            stem,
            hidden,
            head_w,
            head_b,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    pub fn structure(&self) -> Structure {
        let mut s = Structure {
            hidden_convs: 0,
            residual_blocks: 0,
            projection_shortcuts: 0,
            head_width: self.params.tensors[self.head_b].data.len(),
        };
        for h in &self.hidden {
            match h {
                Hidden::Block(b) => {
                    s.hidden_convs += 2;
                    s.residual_blocks += 1;
                    s.projection_shortcuts += usize::from(b.shortcut.is_some());
                }
                Hidden::Plain(_) => s.hidden_convs += 1,
            }
        }
        s
    }

    /// Zero the classification layer so every input maps to `p = 0.5`.
    pub fn zero_head(&mut self) {
        self.params.get_mut(self.head_w).fill(T::zero());
        self.params.get_mut(self.head_b).fill(T::zero());
    }

    pub fn norm_layers(&self) -> usize {
        self.running.len()
    }

    /// Fold per-layer batch statistics into the running statistics.
    pub fn update_running(&mut self, stats: &[BatchStats<T>]) -> Result<()> {
        if stats.len() != self.running.len() {
            return Err(Error::Shape(format!(
                "{} statistics for {} normalization layers",
                stats.len(),
                self.running.len()
            )));
        }
        for (r, s) in self.running.iter_mut().zip(stats) {
            r.update(s, BN_MOMENTUM);
        }
        Ok(())
    }

    fn unit_forward(
        &self,
        unit: &ConvUnit,
        x: Rc<Tensor4<T>>,
        act: bool,
        tape: &mut Option<&mut Tape<T>>,
    ) -> Result<Rc<Tensor4<T>>> {
        let mut y = unit.conv.forward(&x, self.params.get(unit.weight))?;
        if let Some(t) = tape.as_deref_mut() {
            t.push(Cache::Conv { input: x });
        }
        if let Some(n) = unit.norm {
            let (scale, shift) = (self.params.get(n.scale), self.params.get(n.shift));
            y = match tape.as_deref_mut() {
                Some(t) => {
                    let (out, cache, stats) = batchnorm_train(&y, scale, shift, BN_EPS)?;
                    t.push(Cache::Norm(cache));
                    t.norm_stats.push(stats);
                    out
                }
                None => batchnorm_eval(&y, scale, shift, &self.running[n.slot], BN_EPS)?,
            };
        }
        if act {
            y = relu(&y);
        }
        let y = Rc::new(y);
        if act {
            if let Some(t) = tape.as_deref_mut() {
                t.push(Cache::Relu { output: y.clone() });
            }
        }
        Ok(y)
    }

    fn unit_backward(
        &self,
        unit: &ConvUnit,
        dy: Tensor4<T>,
        act: bool,
        need_dx: bool,
        tape: &mut Tape<T>,
        grads: &mut Grads<T>,
    ) -> Result<Option<Tensor4<T>>> {
        let mut g = dy;
        if act {
            let out = tape.pop_relu()?;
            g = relu_backward(&g, &out)?;
        }
        if let Some(n) = unit.norm {
            let cache = tape.pop_norm()?;
            let mut dscale = std::mem::take(&mut grads.tensors[n.scale]);
            let mut dshift = std::mem::take(&mut grads.tensors[n.shift]);
            g = batchnorm_backward(&g, &cache, self.params.get(n.scale), &mut dscale, &mut dshift)?;
            grads.tensors[n.scale] = dscale;
            grads.tensors[n.shift] = dshift;
        }
        let input = tape.pop_conv()?;
        unit.conv.backward(
            &input,
            self.params.get(unit.weight),
            &g,
            grads.get_mut(unit.weight),
            need_dx,
        )
    }

    /// Forward pass. In training mode every op is recorded on the returned
    /// tape and normalization uses batch statistics.
    pub fn forward(&self, x: &Tensor4<T>, mode: NormMode) -> Result<(Tensor4<T>, Option<Tape<T>>)> {
        if x.c != self.arch.in_channels {
            return Err(Error::Shape(format!(
                "model expects {} input channels, batch has {}",
                self.arch.in_channels, x.c
            )));
        }
        let mut tape_store = (mode == NormMode::Train).then(Tape::new);
        let mut tape = tape_store.as_mut();
        let mut h = self.unit_forward(&self.stem, Rc::new(x.clone()), true, &mut tape)?;
        for layer in &self.hidden {
            h = match layer {
                Hidden::Plain(u) => self.unit_forward(u, h, true, &mut tape)?,
                Hidden::Block(b) => {
                    let mid = self.unit_forward(&b.a, h.clone(), true, &mut tape)?;
                    let main = self.unit_forward(&b.b, mid, false, &mut tape)?;
                    let skip = match &b.shortcut {
                        Some(sc) => self.unit_forward(sc, h, false, &mut tape)?,
                        None => h,
                    };
                    let out = Rc::new(relu(&main.add(&skip)?));
                    if let Some(t) = tape.as_deref_mut() {
                        t.push(Cache::Relu { output: out.clone() });
                    }
                    out
                }
            };
        }
        let pooled = global_avg_pool(&h);
        let logits = linear(&pooled, self.params.get(self.head_w), self.params.get(self.head_b))?;
        if let Some(t) = tape {
            t.push(Cache::Pool { h: h.h, w: h.w });
            t.push(Cache::Linear { input: pooled });
        }
        Ok((logits, tape_store))
    }

    /// Reverse pass over a training tape. Gradients accumulate into `grads`;
    /// the input gradient is returned when requested.
    pub fn backward(
        &self,
        tape: &mut Tape<T>,
        dlogits: &Tensor4<T>,
        grads: &mut Grads<T>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor4<T>>> {
        tape.begin_backward()?;
        if !grads.compatible(&self.params.zeros_like()) {
            return Err(Error::Shape("gradient buffers do not match the model".into()));
        }
        let pooled = tape.pop_linear()?;
        let (ph, pw) = tape.pop_pool()?;
        let (mut dw, mut db) = (
            std::mem::take(&mut grads.tensors[self.head_w]),
            std::mem::take(&mut grads.tensors[self.head_b]),
        );
        let dpooled = linear_backward(dlogits, &pooled, self.params.get(self.head_w), &mut dw, &mut db)?;
        grads.tensors[self.head_w] = dw;
        grads.tensors[self.head_b] = db;
        let mut g = global_avg_pool_backward(&dpooled, ph, pw);
        for layer in self.hidden.iter().rev() {
            g = match layer {
                Hidden::Plain(u) => self
                    .unit_backward(u, g, true, true, tape, grads)?
                    .expect("dx requested"),
                Hidden::Block(b) => {
                    let out = tape.pop_relu()?;
                    let g_out = relu_backward(&g, &out)?;
                    let g_skip = match &b.shortcut {
                        Some(sc) => self
                            .unit_backward(sc, g_out.clone(), false, true, tape, grads)?
                            .expect("dx requested"),
                        None => g_out.clone(),
                    };
                    let g_mid = self
                        .unit_backward(&b.b, g_out, false, true, tape, grads)?
                        .expect("dx requested");
                    let g_in = self
                        .unit_backward(&b.a, g_mid, true, true, tape, grads)?
                        .expect("dx requested");
                    g_in.add(&g_skip)?
                }
            };
        }
        let dx = self.unit_backward(&self.stem, g, true, need_input_grad, tape, grads)?;
        tape.finish()?;
        Ok(dx)
    }

    /// Mean loss, parameter gradients and batch statistics for one labeled
    /// batch in training mode.
    pub fn loss_and_grad(&self, x: &Tensor4<T>, labels: &[u8]) -> Result<(T, Grads<T>, Vec<BatchStats<T>>)> {
        let (logits, tape) = self.forward(x, NormMode::Train)?;
        let mut tape = tape.expect("training forward records a tape");
        let out = classification_loss(&logits, labels)?;
        let mut grads = self.params.zeros_like();
        self.backward(&mut tape, &out.dlogits, &mut grads, false)?;
        Ok((out.loss, grads, std::mem::take(&mut tape.norm_stats)))
    }

    /// Mean training-mode loss without gradients.
    pub fn train_loss(&self, x: &Tensor4<T>, labels: &[u8]) -> Result<T> {
        let (logits, _) = self.forward(x, NormMode::Train)?;
        Ok(classification_loss(&logits, labels)?.loss)
    }

    /// Probability of usable (coherent) energy for one image, in eval mode.
    pub fn predict_usable(&self, img: &ImageTensor) -> Result<f64> {
        if img.channels != self.arch.in_channels {
            return Err(Error::Shape(format!(
                "model expects {} channels, image has {}",
                self.arch.in_channels, img.channels
            )));
        }
        let x = Tensor4::from_f32(1, img.channels, img.height, img.width, &img.data)?;
        let (logits, _) = self.forward(&x, NormMode::Eval)?;
        let p = usable_probability(logits.item(0))?.as_f64();
        Ok(p.clamp(0.0, 1.0))
    }

    /// Copy parameters and running statistics into a model of another
    /// precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        let mut params = ParamSet::new();
        for p in &self.params.tensors {
            params.push(p.name.clone(), p.shape.clone(), conv(&p.data));
        }
        Model {
            arch: self.arch,
            seed: self.seed,
            params,
            running: self
                .running
                .iter()
                .map(|r| RunningStats {
                    mean: conv(&r.mean),
                    var: conv(&r.var),
                })
                .collect(),
            stem: self.stem,
            hidden: self.hidden.clone(),
            head_w: self.head_w,
            head_b: self.head_b,
        }
    }
}

/// Probability of usable energy; see [`Model::predict_usable`].
pub fn predict_usable<T: Scalar>(model: &Model<T>, img: &ImageTensor) -> Result<f64> {
    model.predict_usable(img)
}
