//! Microbenchmarks for the hot paths: network forward/backward, environment
//! rollouts, regularized-matrix rebuilds, the reference solvers, and replay
//! sampling. Sizes match the synthetic desk-scale instances (10 inliers,
//! 100-vertex association graph).

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rgm_core::instances::synthetic::{gen_synthetic, SyntheticSpec};
use rgm_core::{
    backward, brute_force, forward, init_params, quad_fit, regularized_affinity, spectral_match,
    vertex_index, AffinityMatrix, Env, EnvConfig, H4Variant, NetInput, RegFn, ReplayMemory,
    Transition,
};

fn desk_instance() -> AffinityMatrix {
    let spec = SyntheticSpec {
        delta_s: 0.1,
        rng_seed: 7,
        ..SyntheticSpec::default()
    };
    gen_synthetic(&spec).expect("valid spec").affinity
}

fn net_passes(c: &mut Criterion) {
    let k = desk_instance();
    let view = k.view();
    let params = init_params(24, 2, H4Variant::PerEdge, 0);
    let x = vec![0.0; k.dim()];
    let input = NetInput::new(&x, &view);

    c.bench_function("net_forward_d24_t2_dim100", |b| {
        b.iter(|| forward(&params, black_box(&input)))
    });

    let (_, cache) = forward(&params, &input);
    let g_q = vec![1.0; k.dim()];
    c.bench_function("net_backward_d24_t2_dim100", |b| {
        b.iter(|| backward(&params, black_box(&input), &cache, &g_q))
    });
}

fn env_rollout(c: &mut Criterion) {
    let k = desk_instance();
    let cfg = EnvConfig {
        revocable: true,
        inlier_count: Some(10),
        regularize: true,
        ..EnvConfig::default()
    };
    let n2 = k.n2();

    c.bench_function("env_rollout_regularized_10_inserts", |b| {
        b.iter(|| {
            let mut env = Env::new(&k, cfg.clone()).expect("env");
            env.reset().expect("reset");
            for i in 0..10 {
                env.step(vertex_index(i, i, n2)).expect("step");
            }
            black_box(env.step_count())
        })
    });
}

fn regularized_rebuild(c: &mut Criterion) {
    let k = desk_instance();
    let reg = RegFn::parse("f2", k.n1(), k.n2()).expect("reg fn");

    c.bench_function("regularized_matrix_dim100", |b| {
        b.iter(|| {
            let fit = quad_fit(&reg, 5, 2).expect("fit");
            black_box(regularized_affinity(&k, 3.0, &fit))
        })
    });
}

fn reference_solvers(c: &mut Criterion) {
    let k = desk_instance();
    c.bench_function("spectral_match_dim100", |b| {
        b.iter(|| black_box(spectral_match(&k)))
    });

    let small = gen_synthetic(&SyntheticSpec {
        n_inliers: 6,
        rng_seed: 3,
        ..SyntheticSpec::default()
    })
    .expect("valid spec")
    .affinity;
    c.bench_function("brute_force_n6", |b| {
        b.iter(|| brute_force(&small, Some(6), None).expect("oracle"))
    });
}

fn replay_sampling(c: &mut Criterion) {
    let state_len = 100;
    let mut replay = ReplayMemory::new(4096, 0.6);
    for i in 0..4096usize {
        replay.push(Transition {
            state: vec![0; state_len],
            action: i % state_len,
            reward: (i as f64).sin(),
            next_state: vec![0; state_len],
            done: i % 37 == 0,
            instance: i % 8,
            priority: 1.0 + (i % 13) as f64,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    c.bench_function("replay_sample_32_of_4096", |b| {
        b.iter(|| replay.sample(32, &mut rng).expect("sample"))
    });
}

criterion_group!(
    benches,
    net_passes,
    env_rollout,
    regularized_rebuild,
    reference_solvers,
    replay_sampling
);
criterion_main!(benches);
