use dmfrl::fusion::fuse_features;
use dmfrl::numkit::{Activation, Matrix, Mlp, Parametric};
use dmfrl::pushworld::{Distances, PushWorld, WorldConfig};
use dmfrl::replay::{EpisodeStore, HerConfig, Transition};
use dmfrl::rewards::{mgr_push, RewardMode, RewardWeights, TaskReward};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn weights() -> RewardWeights {
    RewardWeights::push_default(0.05, 0.10).unwrap()
}

fn mgr(d_og: f64, d_oe: f64, d_es: f64) -> f64 {
    mgr_push(&Distances { d_og, d_oe, d_es }, &weights()).unwrap()
}

fn features(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, d), n)
}

proptest! {
    #[test]
    fn mgr_is_non_positive_and_monotone(
        d_og in 0.0..1.0f64,
        d_oe in 0.0..1.0f64,
        d_es in 0.0..0.5f64,
        delta in 0.0..0.2f64,
    ) {
        let base = mgr(d_og, d_oe, d_es);
        prop_assert!(base <= 0.0 && base.is_finite());
        prop_assert!(mgr(d_og + delta, d_oe, d_es) <= base);
        prop_assert!(mgr(d_og, d_oe + delta, d_es) <= base);
        prop_assert!(mgr(d_og, d_oe, d_es + delta) >= base);
        prop_assert!(mgr(d_og, d_oe, f64::INFINITY) >= base);
    }

    #[test]
    fn sum_and_product_ignore_order(h in (1usize..5, 1usize..6).prop_flat_map(|(n, d)| features(n, d)), shift in 0usize..5) {
        let n = h.len();
        let d = h[0].len();
        let w = Matrix::zeros(n * d, d);
        let b = vec![0.0; d];
        let refs: Vec<&[f64]> = h.iter().map(Vec::as_slice).collect();
        let mut rotated = refs.clone();
        rotated.rotate_left(shift % n);
        let a = fuse_features(&refs, &w, &b).unwrap();
        let r = fuse_features(&rotated, &w, &b).unwrap();
        prop_assert_eq!(a.len(), 3 * d);
        for j in 0..2 * d {
            prop_assert!((a[j] - r[j]).abs() <= 1e-12 * (1.0 + a[j].abs()));
        }
    }

    #[test]
    fn zero_feature_annihilates_product(h in (2usize..5, 1usize..6).prop_flat_map(|(n, d)| features(n, d)), pick in 0usize..100) {
        let n = h.len();
        let d = h[0].len();
        let mut h = h;
        let (i, j) = (pick % n, pick % d);
        h[i][j] = 0.0;
        let refs: Vec<&[f64]> = h.iter().map(Vec::as_slice).collect();
        let out = fuse_features(&refs, &Matrix::zeros(n * d, d), &vec![0.0; d]).unwrap();
        prop_assert_eq!(out[d + j], 0.0);
    }

    #[test]
    fn mlp_gradients_match_finite_differences(
        hidden in prop::collection::vec(1usize..8, 1..3),
        in_dim in 1usize..5,
        out_dim in 1usize..3,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![in_dim];
        dims.extend(&hidden);
        dims.push(out_dim);
        let mut net = Mlp::new(&dims, Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let x = Matrix::from_vec(3, in_dim, (0..3 * in_dim).map(|i| ((i * 7 + 3) % 11) as f64 / 5.0 - 1.0).collect()).unwrap();
        let ones = Matrix::from_vec(3, out_dim, vec![1.0; 3 * out_dim]).unwrap();
        net.zero_grads();
        net.forward(&x).unwrap();
        net.backward(&ones).unwrap();
        let analytic = net.flat_grads();
        let base = net.flat_params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            net.set_flat_params(&p).unwrap();
            let plus: f64 = net.predict(&x).unwrap().data().iter().sum();
            p[i] -= 2.0 * h;
            net.set_flat_params(&p).unwrap();
            let minus: f64 = net.predict(&x).unwrap().data().iter().sum();
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-5);
            prop_assert!(rel < 1e-4, "param {i}: analytic {} numeric {numeric}", analytic[i]);
        }
    }

    #[test]
    fn replay_stays_within_capacity_and_relabels_only_goals(
        capacity in 1usize..6,
        episodes in 1usize..12,
        seed in any::<u64>(),
    ) {
        let len = 4;
        let mut store = EpisodeStore::new(capacity, len, seed).unwrap();
        let mut stored = Vec::new();
        for e in 0..episodes {
            let ep: Vec<Transition> = (0..len)
                .map(|t| {
                    let x = (e * len + t) as f64;
                    Transition {
                        obs: vec![x],
                        action: vec![0.0],
                        reward: -1.0,
                        next_obs: vec![x + 1.0],
                        achieved_goal: vec![x],
                        next_achieved_goal: vec![x + 1.0],
                        desired_goal: vec![-100.0],
                        done: false,
                        d_oe: 0.0,
                        d_es: f64::INFINITY,
                    }
                })
                .collect();
            stored.push(ep.clone());
            store.store_episode(ep).unwrap();
            prop_assert!(store.len() <= capacity);
        }
        prop_assert_eq!(store.len(), episodes.min(capacity));
        let reward = |t: &Transition, g: &[f64]| {
            let ok = (t.next_achieved_goal[0] - g[0]).abs() < 0.5;
            (if ok { 0.0 } else { -1.0 }, ok)
        };
        let kept = &stored[episodes.saturating_sub(capacity)..];
        for (s, relabeled) in store.sample_marked(64, &HerConfig::default(), &reward).unwrap() {
            let orig = kept.iter().flatten().find(|o| o.obs == s.obs);
            prop_assert!(orig.is_some(), "sample from an evicted or unknown episode");
            let orig = orig.unwrap();
            prop_assert_eq!(&s.next_obs, &orig.next_obs);
            prop_assert_eq!(&s.action, &orig.action);
            if relabeled {
                prop_assert!(s.desired_goal[0] >= s.next_achieved_goal[0]);
                prop_assert_eq!(s.reward, if s.done { 0.0 } else { -1.0 });
            } else {
                prop_assert_eq!(&s, orig);
            }
        }
    }

    #[test]
    fn world_stays_inside_workspace(
        seed in any::<u64>(),
        slide in any::<bool>(),
        actions in prop::collection::vec((-1.5..1.5f64, -1.5..1.5f64), 50),
    ) {
        let cfg = if slide { WorldConfig::slide() } else { WorldConfig::push() };
        let bounds = cfg.workspace;
        let mut w = PushWorld::new(cfg, seed).unwrap();
        for (ax, ay) in actions {
            w.step([ax, ay]).unwrap();
            let s = w.state();
            prop_assert!(bounds.contains(s.ee_pos));
            prop_assert!(bounds.contains(s.obj_pos));
        }
    }

    #[test]
    fn idle_push_never_moves_object(seed in any::<u64>()) {
        let mut w = PushWorld::new(WorldConfig::push(), seed).unwrap();
        let start = w.state().obj_pos;
        while !w.is_exhausted() {
            w.step([0.0, 0.0]).unwrap();
        }
        prop_assert_eq!(w.state().obj_pos, start);
    }

    #[test]
    fn trajectories_replay_exactly(seed in any::<u64>(), actions in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 20)) {
        let run = || {
            let mut w = PushWorld::new(WorldConfig::push(), seed).unwrap();
            actions.iter().map(|&(x, y)| w.step([x, y]).unwrap()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn sparse_and_guided_agree_on_success() {
    let w = weights();
    let sparse = TaskReward::new(RewardMode::Sparse, w.clone()).unwrap();
    let guided = TaskReward::new(RewardMode::Mgr, w).unwrap();
    let at_goal = Distances { d_og: 0.0, d_oe: 0.0, d_es: f64::INFINITY };
    assert_eq!(sparse.reward(&at_goal), 0.0);
    assert_eq!(guided.reward(&at_goal), 0.0);
}
