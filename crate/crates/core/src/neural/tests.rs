use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::affinity::{AffinityMatrix, Sense};
use crate::solution::vertex_unindex;

fn random_affinity(n1: usize, n2: usize, seed: u64) -> AffinityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = n1 * n2;
    let mut data = vec![0.0; dim * dim];
    for p in 0..dim {
        for q in p..dim {
            let v = rng.gen::<f64>() * 2.0 - 0.5;
            data[p * dim + q] = v;
            data[q * dim + p] = v;
        }
    }
    AffinityMatrix::new(n1, n2, data, Sense::Maximize).unwrap()
}

fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
}

/// Direct re-implementation over an explicit adjacency, no shared code with
/// the production forward besides the parameter struct.
fn naive_forward(params: &QNetParams, k: &AffinityMatrix, x: &[f64], nf: f64) -> Vec<f64> {
    let (n1, n2) = (k.n1(), k.n2());
    let dim = n1 * n2;
    let d = params.d;
    let adjacent = |p: usize, q: usize| {
        let (i, a) = vertex_unindex(p, n2);
        let (j, b) = vertex_unindex(q, n2);
        p != q && i != j && a != b
    };

    let mut s = vec![0.0; dim * d];
    for p in 0..dim {
        match params.h4_variant {
            H4Variant::PerEdge => {
                for q in 0..dim {
                    if adjacent(p, q) {
                        for t in 0..d {
                            s[p * d + t] += (k.at(p, q) * params.theta5[t]).max(0.0);
                        }
                    }
                }
            }
            H4Variant::RowSumLift => {
                let total: f64 = (0..dim).filter(|&q| adjacent(p, q)).map(|q| k.at(p, q)).sum();
                for t in 0..d {
                    s[p * d + t] = (total * params.theta5[t]).max(0.0);
                }
            }
        }
    }

    let u: Vec<f64> = (0..dim)
        .map(|p| {
            (0..dim)
                .filter(|&q| adjacent(p, q))
                .map(|q| k.at(q, q))
                .sum::<f64>()
                / nf
        })
        .collect();

    let mut e = vec![0.0; dim * d];
    for _ in 0..params.t {
        let mut m = vec![0.0; dim * d];
        for p in 0..dim {
            for q in 0..dim {
                if adjacent(p, q) {
                    for t in 0..d {
                        m[p * d + t] += e[q * d + t];
                    }
                }
            }
        }
        let mut next = vec![0.0; dim * d];
        for p in 0..dim {
            for t in 0..d {
                let mut z = x[p] * params.theta1[t] + u[p] * params.theta3[t];
                for j in 0..d {
                    z += m[p * d + j] / nf * params.theta2[j * d + t];
                    z += s[p * d + j] / nf * params.theta4[j * d + t];
                }
                next[p * d + t] = z.max(0.0);
            }
        }
        e = next;
    }

    let mut h5 = vec![0.0; dim * d];
    for p in 0..dim {
        for t in 0..d {
            let mut y = params.b1[t];
            for j in 0..d {
                y += e[p * d + j] * params.theta6[j * d + t];
            }
            h5[p * d + t] = y.max(0.0);
        }
    }
    let mut hv = params.b2;
    for t in 0..d {
        let col: f64 = (0..dim).map(|p| h5[p * d + t]).sum();
        hv += col * params.theta7[t] / dim as f64;
    }
    let ha: Vec<f64> = (0..dim)
        .map(|p| {
            params.b3
                + (0..d)
                    .map(|t| h5[p * d + t] * params.theta8[t])
                    .sum::<f64>()
        })
        .collect();
    let mean = ha.iter().sum::<f64>() / dim as f64;
    ha.iter().map(|a| hv + a - mean).collect()
}

#[test]
fn forward_matches_naive_reference() {
    for (case, (n1, n2, variant, nf)) in [
        (0u64, (3usize, 3usize, H4Variant::PerEdge, None)),
        (1, (3, 4, H4Variant::PerEdge, None)),
        (2, (4, 4, H4Variant::RowSumLift, None)),
        (3, (2, 5, H4Variant::PerEdge, Some(5.0))),
        (4, (3, 3, H4Variant::RowSumLift, Some(7.0))),
    ] {
        let k = random_affinity(n1, n2, 100 + case);
        let params = init_params(6, 3, variant, 200 + case);
        let dim = n1 * n2;
        let x: Vec<f64> = (0..dim).map(|p| if p % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let view = k.view();
        let mut input = NetInput::new(&x, &view);
        if let Some(nf) = nf {
            input.n_factor = nf;
        }
        let fast = forward_q(&params, &input);
        let slow = naive_forward(&params, &k, &x, input.n_factor);
        for (p, (a, b)) in fast.iter().zip(&slow).enumerate() {
            assert!(
                (a - b).abs() <= 1e-12,
                "case {case}, vertex {p}: {a} vs {b}"
            );
        }
    }
}

fn loss(params: &QNetParams, input: &NetInput, g: &[f64]) -> f64 {
    forward_q(params, input)
        .iter()
        .zip(g)
        .map(|(q, w)| q * w)
        .sum()
}

fn perturbed(params: &QNetParams, tensor: usize, idx: usize, delta: f64) -> QNetParams {
    let mut p = params.clone();
    match tensor {
        9 => p.b2 += delta,
        10 => p.b3 += delta,
        _ => {
            let slots: [&mut Vec<f64>; 9] = [
                &mut p.theta1,
                &mut p.theta2,
                &mut p.theta3,
                &mut p.theta4,
                &mut p.theta5,
                &mut p.theta6,
                &mut p.theta7,
                &mut p.theta8,
                &mut p.b1,
            ];
            slots[tensor][idx] += delta;
        }
    }
    p
}

/// Worst central-difference relative error across every scalar parameter.
fn gradcheck_worst(params: &QNetParams, k: &AffinityMatrix, x: &[f64], g: &[f64]) -> f64 {
    let view = k.view();
    let input = NetInput::new(x, &view);
    let (_, cache) = forward(params, &input);
    let analytic = backward(params, &input, &cache, g);
    let h = 1e-5;
    let rel = |a: f64, fd: f64| (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);

    let mut worst: f64 = 0.0;
    for (ti, tensor) in analytic.tensors().iter().enumerate() {
        for (i, &a) in tensor.iter().enumerate() {
            let up = loss(&perturbed(params, ti, i, h), &input, g);
            let down = loss(&perturbed(params, ti, i, -h), &input, g);
            worst = worst.max(rel(a, (up - down) / (2.0 * h)));
        }
    }
    for (ti, a) in [(9usize, analytic.b2), (10, analytic.b3)] {
        let up = loss(&perturbed(params, ti, 0, h), &input, g);
        let down = loss(&perturbed(params, ti, 0, -h), &input, g);
        worst = worst.max(rel(a, (up - down) / (2.0 * h)));
    }
    worst
}

#[test]
fn backward_matches_finite_differences() {
    for (case, variant) in [
        (0u64, H4Variant::PerEdge),
        (1, H4Variant::RowSumLift),
        (2, H4Variant::PerEdge),
        (3, H4Variant::RowSumLift),
    ] {
        let k = random_affinity(3, 3, 300 + case);
        let params = init_params(8, 2, variant, 400 + case);
        let x: Vec<f64> = (0..9).map(|p| if p == 0 || p == 4 { 1.0 } else { 0.0 }).collect();
        let g = random_vec(9, 500 + case);
        let worst = gradcheck_worst(&params, &k, &x, &g);
        assert!(worst < 1e-4, "case {case}: worst relative error {worst:.3e}");
    }
}

#[test]
fn backward_handles_single_round_and_empty_selection() {
    let k = random_affinity(2, 3, 11);
    let params = init_params(5, 1, H4Variant::PerEdge, 12);
    let x = vec![0.0; 6];
    let g = random_vec(6, 13);
    let worst = gradcheck_worst(&params, &k, &x, &g);
    assert!(worst < 1e-4, "worst relative error {worst:.3e}");
}

#[test]
fn zero_rounds_leave_embedding_zero() {
    let k = random_affinity(3, 3, 14);
    let view = k.view();
    let x = vec![1.0; 9];
    let mut params = init_params(4, 0, H4Variant::PerEdge, 15);
    // Push b1 off the ReLU kink the zero embedding would otherwise sit on,
    // so the head is differentiable and the e finite-difference check below
    // is well posed.
    params.b1 = vec![0.3, -0.4, 0.2, -0.1];

    // With no rounds the head sees E = 0, so the embedding thetas cannot
    // influence Q; zeroing them changes nothing.
    let q = forward_q(&params, &NetInput::new(&x, &view));
    let mut stripped = params.clone();
    stripped.theta1.iter_mut().for_each(|v| *v = 0.0);
    stripped.theta2.iter_mut().for_each(|v| *v = 0.0);
    stripped.theta3.iter_mut().for_each(|v| *v = 0.0);
    stripped.theta4.iter_mut().for_each(|v| *v = 0.0);
    stripped.theta5.iter_mut().for_each(|v| *v = 0.0);
    let q_again = forward_q(&stripped, &NetInput::new(&x, &view));
    assert_eq!(q, q_again);

    let g = random_vec(9, 16);
    let worst = gradcheck_worst(&params, &k, &x, &g);
    assert!(worst < 1e-4, "worst relative error {worst:.3e}");
}

#[test]
fn zero_upstream_gradient_gives_zero_gradients() {
    let k = random_affinity(3, 3, 17);
    let view = k.view();
    let x = vec![0.0; 9];
    let params = init_params(6, 2, H4Variant::PerEdge, 18);
    let input = NetInput::new(&x, &view);
    let (_, cache) = forward(&params, &input);
    let grads = backward(&params, &input, &cache, &vec![0.0; 9]);
    assert_eq!(grads.global_norm(), 0.0);
}

#[test]
fn dead_relu_kills_theta5_gradient() {
    // All edge weights non-positive and theta5 positive: every per-edge
    // relu(w * t5) is pinned at zero, so theta5 sits on a dead path.
    let k = AffinityMatrix::from_fn(3, 3, Sense::Maximize, |p, q| {
        if p == q {
            0.5
        } else {
            -0.25
        }
    })
    .unwrap();
    let view = k.view();
    let mut params = init_params(6, 2, H4Variant::PerEdge, 19);
    params.theta5.iter_mut().for_each(|v| *v = v.abs().max(0.1));
    let x = vec![1.0; 9];
    let input = NetInput::new(&x, &view);
    let (_, cache) = forward(&params, &input);
    let grads = backward(&params, &input, &cache, &random_vec(9, 20));
    assert!(grads.theta5.iter().all(|&v| v == 0.0), "{:?}", grads.theta5);
    // The rest of the net is alive.
    assert!(grads.global_norm() > 0.0);
}

#[test]
fn advantage_collapse_gives_uniform_q() {
    let k = random_affinity(3, 4, 23);
    let view = k.view();
    let x: Vec<f64> = (0..12).map(|p| (p == 5) as u8 as f64).collect();
    let mut params = init_params(6, 2, H4Variant::PerEdge, 24);
    params.theta8.iter_mut().for_each(|v| *v = 0.0);
    params.b3 = 0.0;
    let q = forward_q(&params, &NetInput::new(&x, &view));
    for &v in &q {
        assert!((v - q[0]).abs() <= 1e-12, "{q:?}");
    }
}

#[test]
fn q_values_are_equivariant_under_relabeling() {
    let (n1, n2) = (4, 4);
    let dim = n1 * n2;
    let k1 = random_affinity(n1, n2, 21);
    let params = init_params(8, 3, H4Variant::PerEdge, 22);
    let x1: Vec<f64> = (0..dim).map(|p| if p % 5 == 0 { 1.0 } else { 0.0 }).collect();

    let sigma = [2usize, 0, 3, 1]; // row relabeling
    let tau = [1usize, 3, 0, 2]; // column relabeling
    let map = |p: usize| {
        let (i, a) = vertex_unindex(p, n2);
        crate::solution::vertex_index(sigma[i], tau[a], n2)
    };
    let k2 = AffinityMatrix::from_fn(n1, n2, Sense::Maximize, |p, q| k1.at(map(p), map(q))).unwrap();
    let x2: Vec<f64> = (0..dim).map(|p| x1[map(p)]).collect();

    let view1 = k1.view();
    let view2 = k2.view();
    let q1 = forward_q(&params, &NetInput::new(&x1, &view1));
    let q2 = forward_q(&params, &NetInput::new(&x2, &view2));
    for p in 0..dim {
        assert!(
            (q2[p] - q1[map(p)]).abs() <= 1e-12,
            "vertex {p}: {} vs {}",
            q2[p],
            q1[map(p)]
        );
    }
}

#[test]
fn zero_parameters_give_constant_q() {
    let k = random_affinity(3, 3, 31);
    let view = k.view();
    let x = vec![1.0; 9];
    let mut params = init_params(4, 2, H4Variant::PerEdge, 32);
    for tensor in [
        &mut params.theta1,
        &mut params.theta2,
        &mut params.theta3,
        &mut params.theta4,
        &mut params.theta5,
        &mut params.theta6,
        &mut params.theta7,
        &mut params.theta8,
        &mut params.b1,
    ] {
        tensor.iter_mut().for_each(|v| *v = 0.0);
    }
    params.b2 = 0.0;
    params.b3 = 0.0;
    let q = forward_q(&params, &NetInput::new(&x, &view));
    assert!(q.iter().all(|&v| v == 0.0));

    // The value bias shifts every Q; the advantage bias cancels against its
    // own mean and shifts nothing.
    params.b2 = 1.5;
    params.b3 = -40.0;
    let q = forward_q(&params, &NetInput::new(&x, &view));
    assert!(q.iter().all(|&v| v == 1.5), "{q:?}");
}

#[test]
fn init_is_deterministic_and_bounded() {
    let a = init_params(16, 3, H4Variant::PerEdge, 77);
    let b = init_params(16, 3, H4Variant::PerEdge, 77);
    assert_eq!(a, b);
    let c = init_params(16, 3, H4Variant::PerEdge, 78);
    assert_ne!(a, c);
    let bound = 1.0 / 4.0;
    for t in [&a.theta1, &a.theta2, &a.theta6] {
        assert!(t.iter().all(|v| v.abs() <= bound));
    }
    assert!(a.b1.iter().all(|&v| v == 0.0));
    assert_eq!(a.b2, 0.0);
}

#[test]
fn init_entries_center_on_zero() {
    // 3 d*d tensors + 5 d-vectors at d = 60 is 11,100 sampled draws; the
    // sample mean of U(-b, b) should land within 3 standard errors of zero.
    let d = 60;
    let p = init_params(d, 1, H4Variant::PerEdge, 1234);
    let tensors: [&[f64]; 8] = [
        &p.theta1, &p.theta2, &p.theta3, &p.theta4, &p.theta5, &p.theta6, &p.theta7, &p.theta8,
    ];
    let entries: Vec<f64> = tensors.iter().flat_map(|t| t.iter().copied()).collect();
    let n = entries.len() as f64;
    let bound = 1.0 / (d as f64).sqrt();
    let mean = entries.iter().sum::<f64>() / n;
    let se = bound / 3f64.sqrt() / n.sqrt();
    assert!(mean.abs() < 3.0 * se, "mean {mean:.3e}, 3se {:.3e}", 3.0 * se);
}

#[test]
fn sgd_converges_on_scalar_quadratic() {
    // Minimize (theta1[0] - 3)^2 / 2 by feeding its exact gradient.
    let mut params = init_params(1, 1, H4Variant::PerEdge, 5);
    for _ in 0..1000 {
        let mut g = Gradients::zeros_like(&params);
        g.theta1[0] = params.theta1[0] - 3.0;
        sgd_step(&mut params, &g, 0.1);
    }
    assert!((params.theta1[0] - 3.0).abs() < 1e-6);
}

#[test]
fn gradient_utils_clip_and_step() {
    let params = init_params(3, 1, H4Variant::PerEdge, 1);
    let mut g = Gradients::zeros_like(&params);
    g.theta1 = vec![3.0, 0.0, 0.0];
    g.b2 = 4.0;
    assert!((g.global_norm() - 5.0).abs() < 1e-12);

    let mut clipped = g.clone();
    let before = clipped.clip_global_norm(1.0);
    assert!((before - 5.0).abs() < 1e-12);
    assert!((clipped.global_norm() - 1.0).abs() < 1e-12);
    assert!((clipped.theta1[0] - 0.6).abs() < 1e-12);

    // Under the norm, clipping is a no-op.
    let mut loose = g.clone();
    loose.clip_global_norm(10.0);
    assert_eq!(loose.theta1, g.theta1);

    let mut acc = Gradients::zeros_like(&params);
    acc.add(&g);
    acc.add(&g);
    acc.scale(0.5);
    assert!((acc.theta1[0] - 3.0).abs() < 1e-12);
    assert!((acc.b2 - 4.0).abs() < 1e-12);

    let mut p = params.clone();
    let t1 = p.theta1[0];
    let b2 = p.b2;
    sgd_step(&mut p, &g, 0.1);
    assert!((p.theta1[0] - (t1 - 0.3)).abs() < 1e-12);
    assert!((p.b2 - (b2 - 0.4)).abs() < 1e-12);
}

#[test]
fn forward_backward_stay_fast_at_working_size() {
    let k = random_affinity(16, 16, 41);
    let view = k.view();
    let params = init_params(128, 3, H4Variant::PerEdge, 42);
    let x: Vec<f64> = (0..view.dim()).map(|p| (p % 7 == 0) as u8 as f64).collect();
    let g = random_vec(view.dim(), 43);
    let input = NetInput::new(&x, &view);

    let start = Instant::now();
    let (q, cache) = forward(&params, &input);
    let grads = backward(&params, &input, &cache, &g);
    let elapsed = start.elapsed();
    assert!(q.iter().all(|v| v.is_finite()));
    assert!(grads.global_norm().is_finite());
    assert!(
        elapsed.as_secs_f64() < 1.0,
        "one forward/backward took {elapsed:?}"
    );
}
