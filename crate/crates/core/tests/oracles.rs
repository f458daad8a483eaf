use marl_core::graph::{decompose, rbe, EdgeEncoding, EnvGraph, GraphVertex, VERTEX_FEATURES};
use marl_core::nn::{h_lin, h_rel, LayerParams, MessagePassingNet, Params};
use marl_core::Action;

const RBE_ORACLE: &str = include_str!("data/rbe_oracle.csv");
const TRACE_ORACLE: &str = include_str!("data/trace_oracle.txt");

#[test]
fn rbe_matches_high_precision_reference() {
    let mut rows = 0;
    for line in RBE_ORACLE.lines() {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let (d, dd) = (v[0], v[1]);
        let got = rbe(d, dd, 10).unwrap();
        for (n, (g, want)) in got.iter().zip(&v[2..]).enumerate() {
            assert!((g - want).abs() <= 1e-12, "d={d} dd={dd} n={n}: {g} vs {want}");
        }
        rows += 1;
    }
    assert_eq!(rows, 1000);
}

#[test]
fn rbe_is_exactly_one_on_a_centre() {
    for &dd in &[0.05, 0.3, 0.7, 1.3] {
        for n in 0..10 {
            let d = n as f64 * dd;
            assert_eq!(rbe(d, dd, 10).unwrap()[n], 1.0);
        }
    }
}

#[test]
fn rbe_small_cases() {
    let v = rbe(0.0, 1.0, 4).unwrap();
    let want = [1.0, (-1.0f64).exp(), (-4.0f64).exp(), (-9.0f64).exp()];
    for (a, b) in v.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    let d = 2f64.sqrt();
    let v = rbe(d, 0.3, 10).unwrap();
    for (n, x) in v.iter().enumerate() {
        let r = d - n as f64 * 0.3;
        assert!((x - (-(r * r) / 0.3).exp()).abs() < 1e-12);
        assert!(*x > 0.0 && *x <= 1.0);
    }
}

#[test]
fn rbe_domain_errors() {
    assert!(rbe(1.0, 0.0, 10).is_err());
    assert!(rbe(1.0, -0.3, 10).is_err());
}

#[test]
fn rbe_peak_is_nearest_centre() {
    let dd = 0.3;
    for k in 0..300 {
        let d = k as f64 * 0.01 + 0.0013;
        let v = rbe(d, dd, 10).unwrap();
        let best = (0..10)
            .min_by(|&a, &b| {
                let ea = (d - a as f64 * dd).abs();
                let eb = (d - b as f64 * dd).abs();
                ea.partial_cmp(&eb).unwrap()
            })
            .unwrap();
        let argmax = (0..10).max_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap()).unwrap();
        assert_eq!(argmax, best, "d={d}");
    }
}

#[test]
fn affine_matches_hand_multiplication() {
    // 3x2 weights
    let p = LayerParams::new(2, 3, vec![1.0, -2.0, 0.5, 4.0, -3.0, 0.25], vec![0.1, -0.2, 0.3]).unwrap();
    let x = [2.0, -1.0];
    let y = h_lin(&x, &p).unwrap();
    let want = [1.0 * 2.0 + 2.0 + 0.1, 1.0 - 4.0 - 0.2, -6.0 - 0.25 + 0.3];
    for (a, b) in y.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    let r = h_rel(&x, &p).unwrap();
    assert_eq!(r[1], 0.0);
    assert_eq!(r[2], 0.0);
    assert!((r[0] - want[0]).abs() < 1e-15);
    assert!(h_lin(&[1.0], &p).is_err());
}

fn formula_params(n: usize, phase: f64) -> Params {
    Params::from_vec((0..n).map(|k| 0.5 * (0.37 * k as f64 + phase).sin()).collect())
}

fn features(v: usize) -> [f64; VERTEX_FEATURES] {
    let mut f = [0.0; VERTEX_FEATURES];
    for (i, x) in f.iter_mut().enumerate() {
        *x = 0.5 * (0.1 * i as f64 + v as f64).cos();
    }
    f
}

#[test]
fn forward_matches_replayed_trace() {
    let vertices = (0..3)
        .map(|v| GraphVertex {
            id: v as u32,
            team: 0,
            features: features(v),
        })
        .collect();
    let g = EnvGraph::from_parts(vertices, &[(0, 1, 1.0), (1, 2, 2f64.sqrt())]).unwrap();
    let sg = &decompose(&g, 3, &EdgeEncoding::default()).unwrap()[0];
    assert_eq!(sg.members, vec![0, 1, 2]);

    let mut lines = TRACE_ORACLE.lines();
    let policy = MessagePassingNet::policy(4, 10, 2);
    let theta = formula_params(policy.num_params(), 0.1);
    let dists = policy.policy_forward(&theta, sg).unwrap();
    for d in &dists {
        let want: Vec<f64> = lines.next().unwrap().split(' ').map(|x| x.parse().unwrap()).collect();
        for (a, b) in d.0.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    let critic = MessagePassingNet::critic(4, 10, 2);
    let w = formula_params(critic.num_params(), 0.7);
    let q = critic
        .critic_forward(&w, sg, &[Action::Up, Action::Idle, Action::Left])
        .unwrap();
    let want: f64 = lines.next().unwrap().parse().unwrap();
    assert!((q - want).abs() < 1e-12, "{q} vs {want}");
}
