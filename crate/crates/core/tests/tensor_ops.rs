use std::sync::Arc;

use amem_core::rng::SplitMix64;
use amem_core::tensor::{AdamConfig, AdamState, Graph, HashIndex, ParamStore, Tensor, Var};
use amem_core::{Error, Scalar};
use proptest::prelude::*;

fn random(rng: &mut SplitMix64, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.symmetric(1.0)).collect()).unwrap()
}

/// Scalar test loss built from leaf inputs.
type Build<T> = dyn Fn(&mut Graph<T>, &[Var]) -> Var;

fn project<T: Scalar>(g: &mut Graph<T>, out: Var, seed: u64) -> Var {
    let mut rng = SplitMix64::new(seed);
    let n = g.value(out).len();
    let w = g.input(Tensor::new(g.shape(out), (0..n).map(|_| T::of(rng.symmetric(1.0))).collect()).unwrap());
    let p = g.mul(out, w).unwrap();
    g.sum(p)
}

fn loss_at<T: Scalar>(build: &Build<T>, inputs: &[Tensor<f64>]) -> f64 {
    let mut g = Graph::<T>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.cast(), true)).collect();
    let l = build(&mut g, &vars);
    g.data(l)[0].as_f64()
}

fn analytic<T: Scalar>(build: &Build<T>, inputs: &[Tensor<f64>]) -> Vec<Vec<f64>> {
    let mut g = Graph::<T>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.cast(), true)).collect();
    let l = build(&mut g, &vars);
    g.backward(l).unwrap();
    vars.iter()
        .zip(inputs)
        .map(|(v, t)| match g.grad(*v) {
            Some(d) => d.iter().map(|x| x.as_f64()).collect(),
            None => vec![0.0; t.len()],
        })
        .collect()
}

fn numeric(build: &Build<f64>, inputs: &[Tensor<f64>], eps: f64) -> Vec<Vec<f64>> {
    let mut work = inputs.to_vec();
    (0..inputs.len())
        .map(|k| {
            (0..inputs[k].len())
                .map(|i| {
                    let orig = work[k].data()[i];
                    work[k].data_mut()[i] = orig + eps;
                    let plus = loss_at(build, &work);
                    work[k].data_mut()[i] = orig - eps;
                    let minus = loss_at(build, &work);
                    work[k].data_mut()[i] = orig;
                    (plus - minus) / (2.0 * eps)
                })
                .collect()
        })
        .collect()
}

fn rel_error(a: &[Vec<f64>], n: &[Vec<f64>]) -> f64 {
    let flat = |v: &[Vec<f64>]| v.iter().flatten().copied().collect::<Vec<_>>();
    let (a, n) = (flat(a), flat(n));
    let diff = a.iter().zip(&n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(&n).map(|x| x.abs()).fold(1e-12, f64::max);
    diff / scale
}

/// Central differences against both element types.
fn check<F>(name: &str, inputs: &[Tensor<f64>], build64: F, build32: &Build<f32>)
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var + 'static,
{
    let num = numeric(&build64, inputs, 1e-6);
    let e64 = rel_error(&analytic(&build64, inputs), &num);
    assert!(e64 < 1e-5, "{name}: f64 relative error {e64:e}");
    let e32 = rel_error(&analytic(build32, inputs), &num);
    assert!(e32 < 1e-3, "{name}: f32 relative error {e32:e}");
}

macro_rules! gradcheck {
    ($name:expr, $inputs:expr, |$g:ident, $v:ident| $body:expr) => {{
        fn build<T: Scalar>($g: &mut Graph<T>, $v: &[Var]) -> Var {
            $body
        }
        check($name, &$inputs, build::<f64>, &build::<f32>);
    }};
}

#[test]
fn elementwise_and_dense_gradients() {
    let mut rng = SplitMix64::new(1);
    let a = random(&mut rng, &[3, 4]);
    let b = random(&mut rng, &[4, 2]);
    gradcheck!("matmul", [a.clone(), b.clone()], |g, v| {
        let y = g.matmul(v[0], v[1]).unwrap();
        project(g, y, 11)
    });
    let w = random(&mut rng, &[5, 4]);
    let x = random(&mut rng, &[4]);
    let bias = random(&mut rng, &[5]);
    gradcheck!("linear", [w, x.clone(), bias], |g, v| {
        let y = g.linear(v[0], v[1], Some(v[2])).unwrap();
        project(g, y, 12)
    });
    let y = random(&mut rng, &[4]);
    gradcheck!("add mul scale", [x.clone(), y.clone()], |g, v| {
        let s = g.add(v[0], v[1]).unwrap();
        let p = g.mul(s, v[1]).unwrap();
        let q = g.scale(p, T::of(-1.5));
        project(g, q, 13)
    });
    let s = random(&mut rng, &[1]);
    gradcheck!("scalar_mul", [s, x.clone()], |g, v| {
        let y = g.scalar_mul(v[0], v[1]).unwrap();
        project(g, y, 14)
    });
    gradcheck!("tanh sigmoid relu", [x.clone()], |g, v| {
        let a = g.tanh(v[0]);
        let b = g.sigmoid(a);
        let c = g.relu(v[0]);
        let d = g.add(b, c).unwrap();
        project(g, d, 15)
    });
    gradcheck!("concat slice reshape transpose", [a, x], |g, v| {
        let c = g.concat(&[v[1], v[0]]);
        let s = g.slice(c, 2, 12).unwrap();
        let m = g.reshape(s, &[4, 3]).unwrap();
        let t = g.transpose(m).unwrap();
        project(g, t, 16)
    });
}

#[test]
fn softmax_and_cross_entropy_gradients() {
    let mut rng = SplitMix64::new(2);
    let z = random(&mut rng, &[38]);
    gradcheck!("softmax", [z.clone()], |g, v| {
        let p = g.softmax(v[0]).unwrap();
        project(g, p, 21)
    });
    gradcheck!("cross_entropy", [z], |g, v| g.cross_entropy(v[0], 7).unwrap());
}

#[test]
fn layer_gradients() {
    let mut rng = SplitMix64::new(3);
    let table = random(&mut rng, &[6, 3]);
    gradcheck!("embedding", [table], |g, v| {
        let e = g.embedding(v[0], 4).unwrap();
        project(g, e, 31)
    });
    let x = random(&mut rng, &[2, 4, 4]);
    let k = random(&mut rng, &[3, 2, 3, 3]);
    let b = random(&mut rng, &[3]);
    gradcheck!("conv2d maxpool", [x, k, b], |g, v| {
        let y = g.conv2d(v[0], v[1], v[2]).unwrap();
        let p = g.maxpool2x2(y).unwrap();
        project(g, p, 32)
    });
    let (d_in, d) = (3, 2);
    let x = random(&mut rng, &[d_in]);
    let h = random(&mut rng, &[d]);
    let c = random(&mut rng, &[d]);
    let w = random(&mut rng, &[4 * d, d_in + d]);
    let b = random(&mut rng, &[4 * d]);
    gradcheck!("lstm_step", [x, h, c, w, b], |g, v| {
        let (h2, c2) = g.lstm_step(v[0], v[1], v[2], v[3], v[4]).unwrap();
        let (h3, _) = g.lstm_step(v[0], h2, c2, v[3], v[4]).unwrap();
        let both = g.concat(&[h3, c2]);
        project(g, both, 33)
    });
    let cand = random(&mut rng, &[5]);
    let x = random(&mut rng, &[4]);
    gradcheck!("hashed_matvec", [cand, x], |g, v| {
        let table = Arc::new(HashIndex {
            rows: 3,
            cols: 4,
            index: vec![0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 0, 0],
            sign: vec![1, -1, 1, 1, -1, -1, 1, 1, 1, -1, 1, -1],
        });
        let y = g.hashed_matvec(v[0], v[1], &table).unwrap();
        project(g, y, 34)
    });
}

#[test]
fn matmul_chain_gradients() {
    let mut rng = SplitMix64::new(4);
    let a = random(&mut rng, &[2, 3]);
    let b = random(&mut rng, &[3, 4]);
    let c = random(&mut rng, &[4, 2]);
    gradcheck!("matmul chain", [a, b, c], |g, v| {
        let ab = g.matmul(v[0], v[1]).unwrap();
        let abc = g.matmul(ab, v[2]).unwrap();
        let t = g.tanh(abc);
        g.sum(t)
    });
}

#[test]
fn matmul_examples() {
    let mut g = Graph::<f64>::new();
    let a = g.input(Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = g.input(Tensor::new(&[2, 1], vec![0.0, 1.0]).unwrap());
    let y = g.matmul(a, b).unwrap();
    assert_eq!(g.shape(y), &[2, 1]);
    assert_eq!(g.data(y), &[2.0, 4.0]);

    let mut rng = SplitMix64::new(5);
    let m = random(&mut rng, &[3, 3]);
    let mut eye = Tensor::<f64>::zeros(&[3, 3]);
    for i in 0..3 {
        eye.data_mut()[i * 4] = 1.0;
    }
    let i3 = g.input(eye);
    let mv = g.input(m.clone());
    let y = g.matmul(i3, mv).unwrap();
    assert_eq!(g.data(y), m.data());

    let bad = g.input(Tensor::zeros(&[3, 2]));
    match g.matmul(a, bad) {
        Err(Error::Dimension { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 2]);
            assert_eq!(rhs, vec![3, 2]);
        }
        other => panic!("expected a dimension error, got {other:?}"),
    }
}

#[test]
fn conv_examples() {
    let mut g = Graph::<f64>::new();
    let zeros = g.input(Tensor::zeros(&[2, 5, 5]));
    let k = g.input(Tensor::full(&[3, 2, 3, 3], 0.7));
    let b = g.input(Tensor::vector(&[1.0, -2.0, 0.5]));
    let y = g.conv2d(zeros, k, b).unwrap();
    assert_eq!(g.shape(y), &[3, 5, 5]);
    for (ch, want) in [1.0, -2.0, 0.5].into_iter().enumerate() {
        assert!(g.data(y)[ch * 25..(ch + 1) * 25].iter().all(|&v| v == want));
    }

    let mut rng = SplitMix64::new(6);
    let img = random(&mut rng, &[1, 6, 7]);
    let x = g.input(img.clone());
    let mut centre = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
    centre.data_mut()[4] = 1.0;
    let k = g.input(centre);
    let b = g.input(Tensor::zeros(&[1]));
    let y = g.conv2d(x, k, b).unwrap();
    assert_eq!(g.data(y), img.data());

    let wrong = g.input(Tensor::zeros(&[1, 2, 3, 3]));
    assert!(matches!(g.conv2d(x, wrong, b), Err(Error::Dimension { .. })));
}

#[test]
fn maxpool_examples() {
    let mut g = Graph::<f64>::new();
    let c = g.input(Tensor::full(&[2, 4, 4], 3.25));
    let y = g.maxpool2x2(c).unwrap();
    assert_eq!(g.shape(y), &[2, 2, 2]);
    assert!(g.data(y).iter().all(|&v| v == 3.25));

    let w = g.input(Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = g.maxpool2x2(w).unwrap();
    assert_eq!(g.data(y), &[4.0]);

    let odd = g.input(Tensor::zeros(&[1, 3, 4]));
    assert!(matches!(g.maxpool2x2(odd), Err(Error::Dimension { .. })));

    let tie = g.leaf(Tensor::full(&[1, 2, 2], 1.0), true);
    let y = g.maxpool2x2(tie).unwrap();
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert_eq!(g.grad(tie).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn softmax_examples() {
    let mut g = Graph::<f64>::new();
    let u = g.input(Tensor::full(&[16], 0.3));
    let p = g.softmax(u).unwrap();
    assert!(g.data(p).iter().all(|&v| (v - 1.0 / 16.0).abs() < 1e-15));

    let z = g.input(Tensor::vector(&[-20.0, -10.0]));
    let p = g.softmax(z).unwrap();
    let small = 1.0 / (1.0 + 10f64.exp());
    assert!((g.data(p)[0] - small).abs() < 1e-15);
    assert!((g.data(p)[0] - 4.54e-5).abs() < 1e-7);
    assert!((g.data(p)[1] - 0.9999546).abs() < 1e-7);

    let nan = g.input(Tensor::vector(&[0.0, f64::NAN]));
    assert!(matches!(g.softmax(nan), Err(Error::Numeric { .. })));
}

#[test]
fn cross_entropy_examples() {
    let mut g = Graph::<f64>::new();
    let u = g.input(Tensor::zeros(&[38]));
    let l = g.cross_entropy(u, 5).unwrap();
    assert!((g.data(l)[0] - 38f64.ln()).abs() < 1e-12);
    assert!((g.data(l)[0] - 3.63759).abs() < 1e-5);

    let mut peaked = vec![0.0; 38];
    peaked[9] = 30.0;
    let z = g.leaf(Tensor::vector(&peaked), true);
    let l = g.cross_entropy(z, 9).unwrap();
    assert!(g.data(l)[0] < 1e-11);

    assert!(matches!(g.cross_entropy(u, 38), Err(Error::Index { index: 38, len: 38 })));

    let mut rng = SplitMix64::new(7);
    let logits = random(&mut rng, &[38]);
    let z = g.leaf(logits.clone(), true);
    let l = g.cross_entropy(z, 2).unwrap();
    g.backward(l).unwrap();
    let m = logits.data().iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = logits.data().iter().map(|v| (v - m).exp()).collect();
    let total: f64 = e.iter().sum();
    for (i, (gr, ei)) in g.grad(z).unwrap().iter().zip(&e).enumerate() {
        let want = ei / total - if i == 2 { 1.0 } else { 0.0 };
        assert!((gr - want).abs() < 1e-12);
    }
}

#[test]
fn lstm_examples() {
    let mut g = Graph::<f64>::new();
    let d = 3;
    let x = g.input(Tensor::zeros(&[2]));
    let h = g.input(Tensor::zeros(&[d]));
    let c = g.input(Tensor::zeros(&[d]));
    let w = g.input(Tensor::zeros(&[4 * d, 2 + d]));
    let mut bias = vec![0.0; 4 * d];
    bias[d..2 * d].fill(1.0);
    let b = g.input(Tensor::vector(&bias));
    let (h2, c2) = g.lstm_step(x, h, c, w, b).unwrap();
    assert!(g.data(h2).iter().chain(g.data(c2)).all(|&v| v == 0.0));

    // Single unit: weights on [x; h] per gate, then the closed form.
    let (xv, hv, cv) = (0.8, -0.3, 0.5);
    let wv = [0.4, -0.2, 0.9, 0.3, -0.7, 0.6, 0.1, 0.8];
    let bv = [0.05, 1.0, -0.1, 0.2];
    let x = g.input(Tensor::vector(&[xv]));
    let h = g.input(Tensor::vector(&[hv]));
    let c = g.input(Tensor::vector(&[cv]));
    let w = g.input(Tensor::new(&[4, 2], wv.to_vec()).unwrap());
    let b = g.input(Tensor::vector(&bv));
    let (h2, c2) = g.lstm_step(x, h, c, w, b).unwrap();
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let pre = |k: usize| wv[2 * k] * xv + wv[2 * k + 1] * hv + bv[k];
    let (i, f, gg, o) = (sig(pre(0)), sig(pre(1)), pre(2).tanh(), sig(pre(3)));
    let c_want = f * cv + i * gg;
    let h_want = o * c_want.tanh();
    assert!((g.data(c2)[0] - c_want).abs() < 1e-15);
    assert!((g.data(h2)[0] - h_want).abs() < 1e-15);

    let short = g.input(Tensor::zeros(&[3, 2]));
    assert!(matches!(g.lstm_step(x, h, c, short, b), Err(Error::Dimension { .. })));
}

#[test]
fn backward_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::vector(&[1.0, -2.0, 3.5]), true);
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0]);

    let s2 = g.sum(x);
    g.backward(s2).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0, 2.0]);
    g.zero_grad();
    assert!(g.grad(x).is_none());

    let not_scalar = g.tanh(x);
    assert!(matches!(g.backward(not_scalar), Err(Error::Usage(_))));
}

#[test]
fn disconnected_parameter_keeps_zero_gradient() {
    let mut store = ParamStore::<f64>::new();
    let used = store.add("used", Tensor::vector(&[2.0]), false);
    let idle = store.add("idle", Tensor::vector(&[5.0, 6.0]), false);
    let mut g = Graph::new();
    let u = g.param(&store, used);
    let _ = g.param(&store, idle);
    let y = g.mul(u, u).unwrap();
    g.backward(y).unwrap();
    g.accumulate_param_grads(&mut store);
    assert_eq!(store.grad(used), &[4.0]);
    assert_eq!(store.grad(idle), &[0.0, 0.0]);
}

fn adam_run(seed: u64) -> Vec<f32> {
    let mut rng = SplitMix64::new(seed);
    let mut store = ParamStore::<f32>::new();
    let w = store.add_xavier("w", &[4, 3], 3, 4, &mut rng);
    let b = store.add("b", Tensor::zeros(&[4]), false);
    let mut adam = AdamState::new(AdamConfig::default());
    adam.init(&store);
    let x = Tensor::<f32>::vector(&[0.5, -1.0, 2.0]);
    for step in 0..100 {
        store.zero_grad();
        let mut g = Graph::new();
        let (wv, bv) = (g.param(&store, w), g.param(&store, b));
        let xv = g.input(x.clone());
        let y = g.linear(wv, xv, Some(bv)).unwrap();
        let l = g.cross_entropy(y, step % 4).unwrap();
        g.backward(l).unwrap();
        g.accumulate_param_grads(&mut store);
        adam.step(&mut store).unwrap();
        assert_eq!(adam.step_count(), step as u64 + 1);
    }
    store.iter().flat_map(|(_, _, t)| t.data().to_vec()).collect()
}

#[test]
fn adam_runs_are_bit_identical() {
    let a = adam_run(9);
    let b = adam_run(9);
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_ne!(a, adam_run(10));
}

fn vec_strategy(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0f64..30.0, n)
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(z in vec_strategy(1..64)) {
        let mut g = Graph::<f64>::new();
        let v = g.input(Tensor::vector(&z));
        let p = g.softmax(v).unwrap();
        let total: f64 = g.data(p).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-6);
        prop_assert!(g.data(p).iter().all(|&x| x >= 0.0));

        let mut g32 = Graph::<f32>::new();
        let v = g32.input(Tensor::vector(&z));
        let p = g32.softmax(v).unwrap();
        let total: f64 = g32.data(p).iter().map(|x| *x as f64).sum();
        prop_assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn maxpool_backward_conserves_mass(
        c in 1usize..4, h in 1usize..5, w in 1usize..5, seed in any::<u64>()
    ) {
        let mut rng = SplitMix64::new(seed);
        let x = random(&mut rng, &[c, 2 * h, 2 * w]);
        let dy = random(&mut rng, &[c, h, w]);
        let mut g = Graph::<f64>::new();
        let xv = g.leaf(x, true);
        let y = g.maxpool2x2(xv).unwrap();
        let wv = g.input(dy.clone());
        let p = g.mul(y, wv).unwrap();
        let l = g.sum(p);
        g.backward(l).unwrap();
        let routed: f64 = g.grad(xv).unwrap().iter().sum();
        let given: f64 = dy.data().iter().sum();
        prop_assert!((routed - given).abs() < 1e-12);
        let nonzero = g.grad(xv).unwrap().iter().filter(|v| **v != 0.0).count();
        prop_assert!(nonzero <= c * h * w);
    }

    #[test]
    fn forward_backward_is_deterministic(seed in any::<u64>()) {
        let run = || {
            let mut rng = SplitMix64::new(seed);
            let x = random(&mut rng, &[2, 4, 4]).cast::<f32>();
            let k = random(&mut rng, &[3, 2, 3, 3]).cast::<f32>();
            let mut g = Graph::<f32>::new();
            let (xv, kv) = (g.leaf(x, true), g.leaf(k, true));
            let b = g.input(Tensor::zeros(&[3]));
            let y = g.conv2d(xv, kv, b).unwrap();
            let p = g.maxpool2x2(y).unwrap();
            let s = g.softmax(p).unwrap();
            let l = g.cross_entropy(s, 1).unwrap();
            g.backward(l).unwrap();
            let bits = |d: &[f32]| d.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            (bits(g.data(l)), bits(g.grad(kv).unwrap()), bits(g.grad(xv).unwrap()))
        };
        prop_assert_eq!(run(), run());
    }
}
