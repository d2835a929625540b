use super::*;
use crate::error::Error;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape, data.to_vec()).unwrap()
}

fn small_check<F>(store: &mut ParamStore<f64>, f: F) -> f64
where
    F: FnMut(&mut Graph<f64>, &ParamVars) -> crate::error::Result<Var>,
{
    grad_check(store, &GradCheckOptions::default(), f).unwrap().max_rel_err
}

#[test]
fn linear_hand_values() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.constant(t(&[1, 2], &[1.0, 2.0]));
    let w = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = g.constant(t(&[2], &[0.0, 0.0]));
    let y = g.linear(x, w, Some(b)).unwrap();
    assert_eq!(g.value(y).data(), [1.0, 2.0]);

    let x = g.constant(t(&[1, 2], &[1.0, 1.0]));
    let w = g.constant(t(&[2, 1], &[2.0, 3.0]));
    let b = g.constant(t(&[1], &[0.5]));
    let y = g.linear(x, w, Some(b)).unwrap();
    assert_eq!(g.value(y).data(), [5.5]);

    let bad = g.constant(t(&[3, 1], &[1.0, 1.0, 1.0]));
    match g.linear(x, bad, None) {
        Err(Error::Shape(msg)) => assert!(msg.contains("[1, 2]") && msg.contains("[3, 1]"), "{msg}"),
        other => panic!("{:?}", other.map(|_| ())),
    }
}

#[test]
fn linear_gradients() {
    let mut s = ParamStore::<f64>::new(11);
    s.add_uniform("x", &[3, 4], 1.0).unwrap();
    s.add_uniform("w", &[4, 2], 1.0).unwrap();
    s.add_uniform("b", &[2], 1.0).unwrap();
    let err = small_check(&mut s, |g, p| {
        let y = g.linear(p.get("x")?, p.get("w")?, Some(p.get("b")?))?;
        Ok(g.sum(y))
    });
    assert!(err < 1e-7, "{err}");
}

fn conv_naive(x: &[f64], w: &[f64], dilation: usize) -> Vec<f64> {
    let (len, k) = (x.len() as isize, w.len() as isize);
    (0..len)
        .map(|l| {
            (0..k)
                .map(|kk| {
                    let src = l + (kk - k / 2) * dilation as isize;
                    if (0..len).contains(&src) {
                        w[kk as usize] * x[src as usize]
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect()
}

fn conv_single(x: &[f64], w: &[f64], dilation: usize) -> crate::error::Result<Vec<f64>> {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let xv = g.constant(t(&[x.len(), 1], x));
    let wv = g.constant(t(&[1, 1, w.len()], w));
    let bv = g.constant(t(&[1], &[0.0]));
    let y = g.conv1d(xv, wv, bv, dilation)?;
    Ok(g.value(y).data().to_vec())
}

#[test]
fn conv1d_examples() {
    let x = [0.3, -1.0, 2.0, 0.5];
    assert_eq!(conv_single(&x, &[1.0], 1).unwrap(), x);
    assert_eq!(conv_single(&[0.0, 0.0, 1.0, 0.0, 0.0], &[1.0, 2.0, 3.0], 1).unwrap(), [0.0, 3.0, 2.0, 1.0, 0.0]);
    let impulse = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let y = conv_single(&impulse, &[1.0, 2.0, 3.0], 2).unwrap();
    assert_eq!(y, conv_naive(&impulse, &[1.0, 2.0, 3.0], 2));
    assert_eq!(y, [0.0, 3.0, 0.0, 2.0, 0.0, 1.0, 0.0]);
    assert!(matches!(conv_single(&x, &[1.0, 1.0], 1), Err(Error::Config(_))));
}

#[test]
fn conv1d_multichannel_matches_naive_loop() {
    let (len, c_in, c_out, k, d) = (9, 3, 2, 3, 2);
    let mut s = ParamStore::<f64>::new(5);
    s.add_uniform("x", &[len, c_in], 1.0).unwrap();
    s.add_uniform("w", &[c_out, c_in, k], 1.0).unwrap();
    s.add_uniform("b", &[c_out], 1.0).unwrap();
    let (x, w, b) = (s.get("x").unwrap().data().to_vec(), s.get("w").unwrap().data().to_vec(), s.get("b").unwrap().data().to_vec());
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let p = g.bind_params(&s);
    let y = g.conv1d(p.get("x").unwrap(), p.get("w").unwrap(), p.get("b").unwrap(), d).unwrap();
    for l in 0..len {
        for o in 0..c_out {
            let mut acc = b[o];
            for c in 0..c_in {
                let xc: Vec<f64> = (0..len).map(|i| x[i * c_in + c]).collect();
                let wc = &w[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                acc += conv_naive(&xc, wc, d)[l];
            }
            assert!((g.value(y).at2(l, o) - acc).abs() < 1e-12);
        }
    }
    let err = small_check(&mut s, |g, p| {
        let y = g.conv1d(p.get("x")?, p.get("w")?, p.get("b")?, d)?;
        let y = g.gelu(y);
        Ok(g.sum(y))
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn layer_norm_examples_and_gradient() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.constant(t(&[2, 4], &[5.0, 5.0, 5.0, 5.0, 1.0, -1.0, 1.0, -1.0]));
    let gamma = g.constant(t(&[4], &[1.0; 4]));
    let beta = g.constant(t(&[4], &[0.0; 4]));
    let y = g.layer_norm(x, gamma, beta, 1e-5).unwrap();
    let v = g.value(y).data();
    assert!(v[..4].iter().all(|a| a.abs() < 1e-9));
    assert!((v[4] - 1.0).abs() < 1e-5 && (v[5] + 1.0).abs() < 1e-5);

    let mut s = ParamStore::<f64>::new(2);
    s.add_uniform("x", &[3, 5], 2.0).unwrap();
    s.add_uniform("g", &[5], 1.0).unwrap();
    s.add_uniform("b", &[5], 1.0).unwrap();
    s.add_uniform("w", &[5, 1], 1.0).unwrap();
    let err = small_check(&mut s, |g, p| {
        let y = g.layer_norm(p.get("x")?, p.get("g")?, p.get("b")?, 1e-5)?;
        let z = g.linear(y, p.get("w")?, None)?;
        let z = g.gelu(z);
        Ok(g.sum(z))
    });
    assert!(err < 1e-5, "{err}");
}

#[test]
fn activations() {
    assert_eq!(gelu(0.0f64), 0.0);
    for &x in &[-1.0f64, 0.5, 2.0] {
        let h = 1e-5;
        let num = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
        let rel = (gelu_grad(x) - num).abs() / num.abs();
        assert!(rel < 1e-6, "x={x} rel={rel}");
    }
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.constant(t(&[2], &[-2.0, 3.0]));
    let a = g.constant(t(&[1], &[0.25]));
    let y = g.prelu(x, a).unwrap();
    assert_eq!(g.value(y).data(), [-0.5, 3.0]);
    let r = g.relu(x);
    assert_eq!(g.value(r).data(), [0.0, 3.0]);

    let mut s = ParamStore::<f64>::new(3);
    s.add_uniform("x", &[6], 2.0).unwrap();
    s.add_const("a", &[1], 0.25).unwrap();
    let err = small_check(&mut s, |g, p| {
        let y = g.prelu(p.get("x")?, p.get("a")?)?;
        let y = g.gelu(y);
        Ok(g.sum(y))
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn attention_examples() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.constant(t(&[1, 2], &[1.0, 2.0]));
    let wq = g.constant(t(&[2, 2], &[0.3, 0.1, -0.2, 0.4]));
    let wv = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let y = g.self_attention(x, wq, wq, wv).unwrap();
    // v0 = [1,2]·wv = [7, 10]
    assert_eq!(g.value(y).data(), [8.0, 12.0]);

    let x = g.constant(t(&[3, 2], &[1.0, 0.0, 0.0, 1.0, 2.0, 2.0]));
    let zero = g.constant(t(&[2, 2], &[0.0; 4]));
    let ident = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let y = g.self_attention(x, zero, zero, ident).unwrap();
    let mean = [1.0, 1.0];
    let xv = g.value(x).data().to_vec();
    for (i, v) in g.value(y).data().iter().enumerate() {
        assert!((v - (xv[i] + mean[i % 2])).abs() < 1e-12);
    }

    let mut s = ParamStore::<f64>::new(9);
    s.add_uniform("x", &[4, 8], 1.0).unwrap();
    for n in ["q", "k", "v"] {
        s.add_uniform(n, &[8, 8], 0.5).unwrap();
    }
    s.add_uniform("w", &[8, 1], 1.0).unwrap();
    let err = small_check(&mut s, |g, p| {
        let y = g.self_attention(p.get("x")?, p.get("q")?, p.get("k")?, p.get("v")?)?;
        let y = g.linear(y, p.get("w")?, None)?;
        let y = g.gelu(y);
        Ok(g.sum(y))
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut m = vec![1.0f64, 2.0, 3.0, -100.0, 0.0, 100.0];
    softmax_rows(&mut m, 3);
    for row in m.chunks(3) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn max_pool_examples() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.constant(t(&[3, 1], &[1.0, 5.0, 3.0]));
    let y = g.max_rows(x).unwrap();
    assert_eq!(g.value(y).data(), [5.0]);

    let x = g.leaf(t(&[4, 1], &[2.0; 4]));
    let y = g.max_rows(x).unwrap();
    let s = g.sum(y);
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.wrt(x).unwrap(), [1.0, 0.0, 0.0, 0.0]);

    let data: Vec<f64> = (0..21).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
    let x = g.constant(t(&[7, 3], &data));
    let y = g.max_rows(x).unwrap();
    for c in 0..3 {
        let naive = (0..7).map(|l| data[l * 3 + c]).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(g.value(y).data()[c], naive);
    }
}

#[test]
fn dropout_modes() {
    let mut g = Graph::<f64>::new(Mode::Eval, 1);
    let x = g.constant(t(&[100], &[1.0; 100]));
    let y = g.dropout(x, 0.5).unwrap();
    assert_eq!(y, x);

    let mut g = Graph::<f64>::new(Mode::Train, 1);
    let x = g.constant(t(&[1000], &[1.0; 1000]));
    let y = g.dropout(x, 0.5).unwrap();
    let v = g.value(y).data();
    assert!(v.iter().all(|&a| a == 0.0 || a == 2.0));
    let kept = v.iter().filter(|&&a| a > 0.0).count();
    assert!((400..600).contains(&kept), "{kept}");
}

#[test]
fn embedding_concat_neighbor_sum_gradients() {
    let mut s = ParamStore::<f64>::new(4);
    s.add_uniform("table", &[6, 3], 1.0).unwrap();
    s.add_uniform("h", &[4, 3], 1.0).unwrap();
    let nbrs = vec![vec![1, 2], vec![0, 3], vec![3, 1], vec![2, 0]];
    let err = small_check(&mut s, |g, p| {
        let e = g.embedding(p.get("table")?, &[0, 5, 5, 2])?;
        let n = g.neighbor_sum(p.get("h")?, &nbrs, true)?;
        let a = g.add(e, n)?;
        let a = g.gelu(a);
        let m = g.max_rows(a)?;
        let c = g.concat(&[m, a])?;
        let c = g.gelu(c);
        Ok(g.sum(c))
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn zero_parameter_check_is_vacuous() {
    let mut s = ParamStore::<f64>::new(0);
    let r = grad_check(&mut s, &GradCheckOptions::default(), |g, _| {
        let c = g.constant(t(&[2], &[1.0, 2.0]));
        Ok(g.sum(c))
    })
    .unwrap();
    assert_eq!(r.max_rel_err, 0.0);
    assert_eq!(r.entries_checked, 0);
}

#[test]
fn eval_forward_is_deterministic() {
    let run = || {
        let mut s = ParamStore::<f32>::new(21);
        s.add_uniform("x", &[5, 4], 1.0).unwrap();
        s.add_uniform("w", &[4, 4], 1.0).unwrap();
        let mut g = Graph::<f32>::new(Mode::Train, 3);
        let p = g.bind_params(&s);
        let a = g.self_attention(p.get("x").unwrap(), p.get("w").unwrap(), p.get("w").unwrap(), p.get("w").unwrap()).unwrap();
        let d = g.dropout(a, 0.3).unwrap();
        g.value(d).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
