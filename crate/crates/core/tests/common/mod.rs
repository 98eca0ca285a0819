//! Shared finite-difference harness for the gradient and acceptance suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seisbench::nn::{
    batchnorm_backward, batchnorm_train, classification_loss, finite_diff_at, global_avg_pool,
    global_avg_pool_backward, linear, linear_backward, relative_error, relu, relu_backward, Conv2d, ParamCoord,
    ParamSet, Scalar, Tensor4, BN_EPS,
};
use seisbench::resnet::{ArchSpec, Model};

/// `(eps, tolerance)` for central differences at this precision.
pub fn fd_settings<T: Scalar>() -> (f64, f64) {
    if T::NAME == "f64" {
        (1e-5, 1e-5)
    } else {
        (1e-3, 1e-2)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_vec<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    (0..n)
        .map(|_| {
            // Box-Muller keeps the harness free of extra distributions.
            let u1: f64 = rng.random_range(1e-12..1.0);
            let u2: f64 = rng.random::<f64>();
            T::of((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos())
        })
        .collect()
}

/// Values with `|v| ≥ 0.1`, away from the ReLU kink.
fn kink_free_vec<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    (0..n)
        .map(|_| {
            let mag: f64 = rng.random_range(0.1..2.0);
            T::of(if rng.random_bool(0.5) { mag } else { -mag })
        })
        .collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.as_f64() * y.as_f64()).sum()
}

fn all_coords<T: Scalar>(p: &ParamSet<T>) -> Vec<ParamCoord> {
    p.coords().collect()
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// Random projection loss `L = Σ r ⊙ layer(inputs)` through a conv layer,
/// checked w.r.t. weights and input.
pub fn conv_instance<T: Scalar>(seed: u64) -> f64 {
    let mut g = rng(seed);
    let conv = Conv2d {
        in_c: g.random_range(1..=3),
        out_c: g.random_range(1..=3),
        kh: 3,
        kw: 3,
        stride: g.random_range(1..=2),
        pad: g.random_range(0..=1),
    };
    let (n, h, w) = (g.random_range(1..=2), g.random_range(4..=7), g.random_range(4..=7));
    let mut p = ParamSet::<T>::new();
    p.push("x", vec![n, conv.in_c, h, w], normal_vec(&mut g, n * conv.in_c * h * w));
    p.push("w", vec![conv.weight_len()], normal_vec(&mut g, conv.weight_len()));
    let (oh, ow) = conv.out_hw(h, w).unwrap();
    let r: Vec<T> = normal_vec(&mut g, n * conv.out_c * oh * ow);
    let f = |p: &ParamSet<T>| {
        let x = Tensor4::from_vec(n, conv.in_c, h, w, p.get(0).to_vec())?;
        Ok(dot(&conv.forward(&x, p.get(1))?.data, &r))
    };
    let x = Tensor4::from_vec(n, conv.in_c, h, w, p.get(0).to_vec()).unwrap();
    let dy = Tensor4::from_vec(n, conv.out_c, oh, ow, r.clone()).unwrap();
    let mut dw = vec![T::zero(); conv.weight_len()];
    let dx = conv.backward(&x, p.get(1), &dy, &mut dw, true).unwrap().unwrap();
    let analytic: Vec<f64> = to_f64(&dx.data).into_iter().chain(to_f64(&dw)).collect();
    let (eps, _) = fd_settings::<T>();
    let numeric = finite_diff_at(f, &p, &all_coords(&p), eps).unwrap();
    relative_error(&analytic, &numeric)
}

pub fn norm_instance<T: Scalar>(seed: u64) -> f64 {
    let mut g = rng(seed);
    let (n, c, h, w) = (g.random_range(1..=3), g.random_range(1..=3), 3, 3);
    let mut p = ParamSet::<T>::new();
    p.push("x", vec![n, c, h, w], normal_vec(&mut g, n * c * h * w));
    let scale: Vec<T> = (0..c).map(|_| T::of(g.random_range(0.5..2.0))).collect();
    p.push("scale", vec![c], scale);
    p.push("shift", vec![c], normal_vec(&mut g, c));
    let r: Vec<T> = normal_vec(&mut g, n * c * h * w);
    let f = |p: &ParamSet<T>| {
        let x = Tensor4::from_vec(n, c, h, w, p.get(0).to_vec())?;
        Ok(dot(&batchnorm_train(&x, p.get(1), p.get(2), BN_EPS)?.0.data, &r))
    };
    let x = Tensor4::from_vec(n, c, h, w, p.get(0).to_vec()).unwrap();
    let (_, cache, _) = batchnorm_train(&x, p.get(1), p.get(2), BN_EPS).unwrap();
    let dy = Tensor4::from_vec(n, c, h, w, r.clone()).unwrap();
    let (mut ds, mut db) = (vec![T::zero(); c], vec![T::zero(); c]);
    let dx = batchnorm_backward(&dy, &cache, p.get(1), &mut ds, &mut db).unwrap();
    let analytic: Vec<f64> = [to_f64(&dx.data), to_f64(&ds), to_f64(&db)].concat();
    let (eps, _) = fd_settings::<T>();
    let numeric = finite_diff_at(f, &p, &all_coords(&p), eps).unwrap();
    relative_error(&analytic, &numeric)
}

pub fn relu_instance<T: Scalar>(seed: u64) -> f64 {
    let mut g = rng(seed);
    let (n, c, h, w) = (g.random_range(1..=2), g.random_range(1..=3), 4, 4);
    let mut p = ParamSet::<T>::new();
    p.push("x", vec![n, c, h, w], kink_free_vec(&mut g, n * c * h * w));
    let r: Vec<T> = normal_vec(&mut g, n * c * h * w);
    let f = |p: &ParamSet<T>| {
        let x = Tensor4::from_vec(n, c, h, w, p.get(0).to_vec())?;
        Ok(dot(&relu(&x).data, &r))
    };
    let x = Tensor4::from_vec(n, c, h, w, p.get(0).to_vec()).unwrap();
    let dy = Tensor4::from_vec(n, c, h, w, r.clone()).unwrap();
    let dx = relu_backward(&dy, &relu(&x)).unwrap();
    let (eps, _) = fd_settings::<T>();
    let numeric = finite_diff_at(f, &p, &all_coords(&p), eps).unwrap();
    relative_error(&to_f64(&dx.data), &numeric)
}

pub fn pool_instance<T: Scalar>(seed: u64) -> f64 {
    let mut g = rng(seed);
    let (n, c, h, w) = (
        g.random_range(1..=2),
        g.random_range(1..=3),
        g.random_range(1..=5),
        g.random_range(1..=5),
    );
    let mut p = ParamSet::<T>::new();
    p.push("x", vec![n, c, h, w], normal_vec(&mut g, n * c * h * w));
    let r: Vec<T> = normal_vec(&mut g, n * c);
    let f = |p: &ParamSet<T>| {
        let x = Tensor4::from_vec(n, c, h, w, p.get(0).to_vec())?;
        Ok(dot(&global_avg_pool(&x).data, &r))
    };
    let dy = Tensor4::from_vec(n, c, 1, 1, r.clone()).unwrap();
    let dx = global_avg_pool_backward(&dy, h, w);
    let (eps, _) = fd_settings::<T>();
    let numeric = finite_diff_at(f, &p, &all_coords(&p), eps).unwrap();
    relative_error(&to_f64(&dx.data), &numeric)
}

pub fn linear_instance<T: Scalar>(seed: u64) -> f64 {
    let mut g = rng(seed);
    let (n, fan_in, out) = (g.random_range(1..=3), g.random_range(1..=6), g.random_range(1..=3));
    let mut p = ParamSet::<T>::new();
    p.push("x", vec![n, fan_in], normal_vec(&mut g, n * fan_in));
    p.push("w", vec![out, fan_in], normal_vec(&mut g, out * fan_in));
    p.push("b", vec![out], normal_vec(&mut g, out));
    let r: Vec<T> = normal_vec(&mut g, n * out);
    let f = |p: &ParamSet<T>| {
        let x = Tensor4::from_vec(n, fan_in, 1, 1, p.get(0).to_vec())?;
        Ok(dot(&linear(&x, p.get(1), p.get(2))?.data, &r))
    };
    let x = Tensor4::from_vec(n, fan_in, 1, 1, p.get(0).to_vec()).unwrap();
    let dy = Tensor4::from_vec(n, out, 1, 1, r.clone()).unwrap();
    let (mut dw, mut db) = (vec![T::zero(); out * fan_in], vec![T::zero(); out]);
    let dx = linear_backward(&dy, &x, p.get(1), &mut dw, &mut db).unwrap();
    let analytic: Vec<f64> = [to_f64(&dx.data), to_f64(&dw), to_f64(&db)].concat();
    let (eps, _) = fd_settings::<T>();
    let numeric = finite_diff_at(f, &p, &all_coords(&p), eps).unwrap();
    relative_error(&analytic, &numeric)
}

/// Mean classification loss w.r.t. logits, for head width 1 or 2.
pub fn loss_instance<T: Scalar>(seed: u64, width: usize) -> f64 {
    let mut g = rng(seed);
    let n = g.random_range(1..=4);
    let labels: Vec<u8> = (0..n).map(|_| g.random_range(0..=1)).collect();
    let mut p = ParamSet::<T>::new();
    p.push("logits", vec![n, width], normal_vec(&mut g, n * width));
    let f = |p: &ParamSet<T>| {
        let z = Tensor4::from_vec(n, width, 1, 1, p.get(0).to_vec())?;
        Ok(classification_loss(&z, &labels)?.loss.as_f64())
    };
    let z = Tensor4::from_vec(n, width, 1, 1, p.get(0).to_vec()).unwrap();
    let out = classification_loss(&z, &labels).unwrap();
    let (eps, _) = fd_settings::<T>();
    let numeric = finite_diff_at(f, &p, &all_coords(&p), eps).unwrap();
    relative_error(&to_f64(&out.dlogits.data), &numeric)
}

/// Whole-network check: training-mode loss of a 2-image batch w.r.t. a
/// random subset of parameters and of input pixels. Coordinates whose
/// perturbation moves any ReLU across its kink are redrawn.
pub fn model_instance<T: Scalar>(depth: usize, seed: u64, batch_norm: bool) -> f64 {
    model_instance_eps::<T>(depth, seed, batch_norm, fd_settings::<T>().0)
}

pub fn model_instance_eps<T: Scalar>(depth: usize, seed: u64, batch_norm: bool, eps: f64) -> f64 {
    let mut g = rng(seed);
    let bottleneck = g.random_range(1..=2);
    let in_c = if g.random_bool(0.5) { 1 } else { 3 };
    let mut arch = ArchSpec::new(depth, in_c, bottleneck).unwrap().with_base_filters(2);
    if !batch_norm {
        arch = arch.without_norm();
    }
    let model = Model::<f64>::build(arch, seed).unwrap().cast::<T>();
    let (n, h, w) = (2, 8, 8);
    let labels = [0u8, 1];
    let pixels: Vec<T> = (0..n * in_c * h * w).map(|_| T::of(g.random_range(0.0..1.0))).collect();
    let x = Tensor4::from_vec(n, in_c, h, w, pixels).unwrap();

    let (logits, tape) = model.forward(&x, seisbench::nn::NormMode::Train).unwrap();
    let mut tape = tape.unwrap();
    let out = classification_loss(&logits, &labels).unwrap();
    let mut grads = model.params.zeros_like();
    let dx = model
        .backward(&mut tape, &out.dlogits, &mut grads, true)
        .unwrap()
        .unwrap();

    let all: Vec<ParamCoord> = model.params.coords().collect();
    let base_mask = tape_mask(&model, &x);
    let (mut analytic_p, mut numeric_p) = (Vec::new(), Vec::new());
    // The head and first stem weight always, then random coordinates.
    let mut queue = vec![all[0], *all.last().unwrap()];
    let mut attempts = 0;
    while analytic_p.len() < 34 && attempts < 400 {
        attempts += 1;
        let c = queue.pop().unwrap_or_else(|| all[g.random_range(0..all.len())]);
        let probe = |delta: f64| {
            let mut m = model.clone();
            let v = m.params.at(c) + T::of(delta);
            m.params.set(c, v);
            (f64_loss(&m, &x, &labels).unwrap(), tape_mask(&m, &x), v.as_f64())
        };
        let ((lp, mp, vp), (lm, mm, vm)) = (probe(eps), probe(-eps));
        if mp == base_mask && mm == base_mask {
            analytic_p.push(grads.at(c).as_f64());
            numeric_p.push((lp - lm) / (vp - vm));
        }
    }
    assert!(analytic_p.len() >= 20, "too few kink-free coordinates");

    let (mut analytic_x, mut numeric_x) = (Vec::new(), Vec::new());
    let mut attempts = 0;
    while analytic_x.len() < 8 && attempts < 200 {
        attempts += 1;
        let i = g.random_range(0..n * in_c * h * w);
        let probe = |delta: f64| {
            let mut xi = x.clone();
            xi.data[i] += T::of(delta);
            let v = xi.data[i].as_f64();
            (f64_loss(&model, &xi, &labels).unwrap(), tape_mask(&model, &xi), v)
        };
        let ((lp, mp, vp), (lm, mm, vm)) = (probe(eps), probe(-eps));
        if mp == base_mask && mm == base_mask {
            analytic_x.push(dx.data[i].as_f64());
            numeric_x.push((lp - lm) / (vp - vm));
        }
    }
    assert!(!analytic_x.is_empty(), "no kink-free input pixels");

    relative_error(&analytic_p, &numeric_p).max(relative_error(&analytic_x, &numeric_x))
}

fn tape_mask<T: Scalar>(m: &Model<T>, x: &Tensor4<T>) -> Vec<bool> {
    let (_, tape) = m.forward(x, seisbench::nn::NormMode::Train).unwrap();
    tape.unwrap().relu_mask()
}

/// Training-mode loss with the network at `T` and the loss itself in f64,
/// so differences of order `eps·|g|` survive rounding of the loss value.
fn f64_loss<T: Scalar>(m: &Model<T>, x: &Tensor4<T>, labels: &[u8]) -> seisbench::Result<f64> {
    let (logits, _) = m.forward(x, seisbench::nn::NormMode::Train)?;
    let wide = Tensor4::from_vec(logits.n, logits.c, logits.h, logits.w, to_f64(&logits.data))?;
    Ok(classification_loss(&wide, labels)?.loss)
}

/// Direct quadruple-loop cross-correlation.
pub fn naive_conv(x: &Tensor4<f64>, w: &[f64], out_c: usize, k: usize, stride: usize, pad: usize) -> Tensor4<f64> {
    let oh = (x.h + 2 * pad - k) / stride + 1;
    let ow = (x.w + 2 * pad - k) / stride + 1;
    let mut y = Tensor4::zeros(x.n, out_c, oh, ow);
    for b in 0..x.n {
        for o in 0..out_c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..x.c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let yy = (i * stride + ki) as isize - pad as isize;
                                let xx = (j * stride + kj) as isize - pad as isize;
                                if yy >= 0 && xx >= 0 && (yy as usize) < x.h && (xx as usize) < x.w {
                                    acc += x.data[((b * x.c + c) * x.h + yy as usize) * x.w + xx as usize]
                                        * w[((o * x.c + c) * k + ki) * k + kj];
                                }
                            }
                        }
                    }
                    y.data[((b * out_c + o) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    y
}
