use std::time::Instant;

use marl_core::graph::{decompose, EdgeEncoding, EnvGraph, GraphVertex, SubGraph, VERTEX_FEATURES};
use marl_core::nn::{MessagePassingNet, Mlp, Params, Tape};
use marl_core::Action;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn random_subgraph(rng: &mut ChaCha8Rng, enc: &EdgeEncoding) -> SubGraph {
    let n = rng.gen_range(1..=4);
    let vertices = (0..n)
        .map(|i| {
            let mut f = [0.0; VERTEX_FEATURES];
            for x in f.iter_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
            GraphVertex {
                id: i as u32,
                team: 0,
                features: f,
            }
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(0.6) {
                edges.push((a, b, rng.gen_range(1.0..1.5)));
            }
        }
    }
    let g = EnvGraph::from_parts(vertices, &edges).unwrap();
    let subs = decompose(&g, 3, enc).unwrap();
    let k = rng.gen_range(0..subs.len());
    subs[k].clone()
}

struct Check {
    worst: f64,
    compared: usize,
    skipped: usize,
    unbracketed: usize,
}

/// Compares `grad` with central differences of `f`. Coordinates whose
/// one-sided differences disagree (a ReLU kink inside the stencil) are only
/// required to lie between the two one-sided slopes.
fn compare(params: &Params, grad: &[f64], f: &mut dyn FnMut(&Params) -> f64, check: &mut Check) {
    let mut p = params.clone();
    let f0 = f(&p);
    for i in 0..params.len() {
        let x = params.values()[i];
        p.values_mut()[i] = x + STEP;
        let up = f(&p);
        p.values_mut()[i] = x - STEP;
        let down = f(&p);
        p.values_mut()[i] = x;
        let fwd = (up - f0) / STEP;
        let bwd = (f0 - down) / STEP;
        let scale = fwd.abs().max(bwd.abs()).max(1.0);
        if (fwd - bwd).abs() > 1e-4 * scale {
            check.skipped += 1;
            let tol = 1e-4 * scale;
            if grad[i] < fwd.min(bwd) - tol || grad[i] > fwd.max(bwd) + tol {
                check.unbracketed += 1;
            }
            continue;
        }
        let fd = (up - down) / (2.0 * STEP);
        let a = grad[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        check.worst = check.worst.max(rel);
        check.compared += 1;
    }
}

fn random_actions(rng: &mut ChaCha8Rng, n: usize) -> Vec<Action> {
    (0..n).map(|_| Action::ALL[rng.gen_range(0..5)]).collect()
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let enc = EdgeEncoding::default();
    let mut check = Check {
        worst: 0.0,
        compared: 0,
        skipped: 0,
        unbracketed: 0,
    };
    for _ in 0..100 {
        let hidden = rng.gen_range(2..=8);
        let rounds = rng.gen_range(1..=2);
        let sg = random_subgraph(&mut rng, &enc);

        // policy: random linear functional of every member's log-probabilities
        let net = MessagePassingNet::policy(hidden, enc.n_max, rounds);
        let mut theta = net.init_params(&mut rng);
        for v in theta.values_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
        let coefs: Vec<[f64; 5]> = (0..sg.len())
            .map(|_| {
                let mut c = [0.0; 5];
                c.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
                c
            })
            .collect();
        let mut tape = Tape::new();
        let logp = net.record_policy(&mut tape, &theta, &sg).unwrap();
        let seeds: Vec<_> = logp.iter().zip(&coefs).map(|(&id, c)| (id, &c[..])).collect();
        let g = tape.backward(&theta, &seeds).unwrap();
        let mut objective = |p: &Params| {
            let mut t = Tape::new();
            let lp = net.record_policy(&mut t, p, &sg).unwrap();
            lp.iter()
                .zip(&coefs)
                .map(|(&id, c)| t.value(id).iter().zip(c).map(|(a, b)| a * b).sum::<f64>())
                .sum()
        };
        compare(&theta, g.values(), &mut objective, &mut check);

        // critic value
        let critic = MessagePassingNet::critic(hidden, enc.n_max, rounds);
        let mut w = critic.init_params(&mut rng);
        for v in w.values_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
        let actions = random_actions(&mut rng, sg.len());
        let mut tape = Tape::new();
        let q = critic.record_critic(&mut tape, &w, &sg, &actions).unwrap();
        let g = tape.backward(&w, &[(q, &[1.0][..])]).unwrap();
        let mut objective = |p: &Params| critic.critic_forward(p, &sg, &actions).unwrap();
        compare(&w, g.values(), &mut objective, &mut check);

        // perceptron
        let mlp = Mlp::policy(hidden);
        let theta = mlp.init_params(&mut rng);
        let x = sg.features[0];
        let c = coefs[0];
        let mut tape = Tape::new();
        let lp = mlp.record(&mut tape, &theta, &x).unwrap();
        let g = tape.backward(&theta, &[(lp, &c[..])]).unwrap();
        let mut objective = |p: &Params| {
            let mut t = Tape::new();
            let lp = mlp.record(&mut t, p, &x).unwrap();
            t.value(lp).iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        compare(&theta, g.values(), &mut objective, &mut check);
    }
    assert!(check.worst < 1e-4, "worst relative error {}", check.worst);
    assert!(check.skipped * 100 < check.compared, "{} skipped of {}", check.skipped, check.compared);
    assert_eq!(check.unbracketed, 0);
    assert!(start.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn log_prob_gradients_conserve_normalisation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let enc = EdgeEncoding::default();
    for _ in 0..20 {
        let sg = random_subgraph(&mut rng, &enc);
        let net = MessagePassingNet::policy(6, enc.n_max, 2);
        let theta = net.init_params(&mut rng);
        let mut tape = Tape::new();
        let logp = net.record_policy(&mut tape, &theta, &sg).unwrap();
        let probs: Vec<Vec<f64>> = logp.iter().map(|&id| tape.value(id).iter().map(|l| l.exp()).collect()).collect();
        // d(sum_a pi(a)) = sum_a pi(a) d ln pi(a)
        let seeds: Vec<_> = logp.iter().zip(&probs).map(|(&id, p)| (id, &p[..])).collect();
        let g = tape.backward(&theta, &seeds).unwrap();
        assert!(g.values().iter().all(|x| x.abs() < 1e-6));
    }
}
