use super::*;
use crate::perception::RelatedSet;

fn tiny_config(episodes: usize) -> Config {
    let mut cfg = Config::default();
    cfg.world.n_robots = 4;
    cfg.world.n_tasks = 2;
    cfg.world.alpha_max = 2;
    cfg.world.max_steps = 30;
    cfg.trainer.episodes = episodes;
    cfg.trainer.batch_size = 8;
    cfg.trainer.buffer_capacity = 200;
    cfg.trainer.hidden_dims = vec![8];
    cfg.trainer.update_every = 5;
    cfg
}

/// Records from a real rollout of the tiny world.
fn records(seed: u64) -> Vec<TransitionRecord> {
    let cfg = tiny_config(1);
    let nets = Networks::init(&cfg.world, &cfg.trainer, seed).unwrap();
    let mut world = init_world(&cfg.world, seed).unwrap();
    let mut rng = rng::stream(seed, "test-rollout");
    rollout_episode(&mut world, &nets.actor, 0.5, cfg.trainer.beta, &mut rng).unwrap().0
}

/// A critic whose output is its bias, whatever the input.
fn constant_critic(value: f64) -> NetworkParams {
    let cfg = tiny_config(1);
    let mut p = NetworkParams::zeros(critic_spec(&cfg.world, &cfg.trainer)).unwrap();
    let n = p.len();
    p.values[n - 1] = value;
    p
}

#[test]
fn replay_evicts_oldest() {
    let recs = records(1);
    let mut buf = ReplayBuffer::new(3);
    for (k, rec) in recs.iter().take(5).enumerate() {
        let mut rec = rec.clone();
        rec.rewards[0] = k as f64;
        buf.push(rec);
    }
    assert_eq!(buf.len(), 3);
    let kept: Vec<f64> = buf.iter().map(|r| r.rewards[0]).collect();
    assert_eq!(kept, vec![2.0, 3.0, 4.0]);
}

#[test]
fn sampling_an_underfull_buffer_fails() {
    let mut buf = ReplayBuffer::new(10);
    for rec in records(2).into_iter().take(2) {
        buf.push(rec);
    }
    let mut rng = rng::stream(0, "t");
    let err = sample_batch(&buf, 4, false, &mut rng).unwrap_err();
    assert!(matches!(err, Error::NotReady { have: 2, need: 4 }));
}

#[test]
fn prioritized_sampling_follows_priorities() {
    let mut buf = ReplayBuffer::new(10);
    for rec in records(3).into_iter().take(10) {
        buf.push(rec);
    }
    for k in 0..10 {
        buf.set_priority(k, if k == 3 { 1000.0 } else { 1e-3 });
    }
    let mut rng = rng::stream(0, "t");
    let mut hits = 0;
    for _ in 0..1000 {
        hits += sample_batch(&buf, 1, true, &mut rng).unwrap().iter().filter(|&&k| k == 3).count();
    }
    assert!(hits as f64 / 1000.0 > 0.9, "{hits}");
}

#[test]
fn critic_target_examples() {
    let cfg = tiny_config(1);
    let actor = Networks::init(&cfg.world, &cfg.trainer, 0).unwrap().actor;
    let critic = constant_critic(2.0);
    let mut rec = records(4)[0].clone();
    rec.active = vec![true; 4];
    rec.done = vec![false, true, false, false];
    rec.rewards = vec![1.0, 1.0, 0.5, 0.0];
    rec.next_targets = vec![None; 4];
    let batch = [&rec];
    // bootstrapped: 1 + 0.95·2
    let y = critic_target(&batch, 0, &actor, &critic, 0.95, -1.0).unwrap();
    assert!((y[0] - 2.9).abs() < 1e-12);
    // terminal: y = r
    assert_eq!(critic_target(&batch, 1, &actor, &critic, 0.95, -1.0).unwrap()[0], 1.0);
    // γ = 0: y = r
    assert_eq!(critic_target(&batch, 2, &actor, &critic, 0.0, -1.0).unwrap()[0], 0.5);
    // robot already bound at t: no bootstrap
    rec.active[3] = false;
    assert_eq!(critic_target(&[&rec], 3, &actor, &critic, 0.95, -1.0).unwrap()[0], 0.0);
}

#[test]
fn critic_loss_by_hand_and_duplicates() {
    let cfg = tiny_config(1);
    let recs = records(5);
    let mut a = recs[0].clone();
    let mut b = recs[1].clone();
    a.active = vec![true; 4];
    b.active = vec![true, false, true, true];
    let mut critic = constant_critic(0.5);
    let mut opt = AdamState::new(critic.len(), cfg.trainer.critic_lr);

    // robot 1 is inactive in b: only the first row counts
    let y = [1.5, 100.0];
    let (loss, td) = critic_update(&[&a, &b], 1, &mut critic.clone(), &mut opt.clone(), &y)
        .unwrap()
        .unwrap();
    assert!((loss - 1.0).abs() < 1e-12);
    assert_eq!(td, vec![-1.0, 0.0]);

    // duplicating every row leaves the mean loss unchanged
    let y = [1.5, -0.5];
    let (once, _) = critic_update(&[&a, &b], 0, &mut critic.clone(), &mut opt.clone(), &y)
        .unwrap()
        .unwrap();
    let y2 = [1.5, -0.5, 1.5, -0.5];
    let (twice, _) = critic_update(&[&a, &b, &a, &b], 0, &mut critic, &mut opt, &y2).unwrap().unwrap();
    assert!((once - 1.0).abs() < 1e-12);
    assert!((once - twice).abs() < 1e-12);

    // no active row: no update
    let mut idle = a.clone();
    idle.active = vec![false; 4];
    let mut c = constant_critic(0.0);
    let mut o = AdamState::new(c.len(), 0.1);
    assert!(critic_update(&[&idle], 0, &mut c, &mut o, &[0.0]).unwrap().is_none());
    assert_eq!(c.values, constant_critic(0.0).values);
}

#[test]
fn nan_target_is_a_numerical_fault() {
    let recs = records(6);
    let mut rec = recs[0].clone();
    rec.active = vec![true; 4];
    let mut critic = constant_critic(0.0);
    let mut opt = AdamState::new(critic.len(), 0.1);
    let err = critic_update(&[&rec], 0, &mut critic, &mut opt, &[f64::NAN]).unwrap_err();
    assert!(matches!(err, Error::NumericalFault(_)));
}

#[test]
fn actor_is_still_when_critic_ignores_actions() {
    let cfg = tiny_config(1);
    let mut actor = Networks::init(&cfg.world, &cfg.trainer, 7).unwrap().actor;
    let before = actor.values.clone();
    let mut opt = AdamState::new(actor.len(), 0.01);
    let mut rec = records(7)[0].clone();
    rec.active = vec![true; 4];
    let critic = constant_critic(3.0);
    assert!(actor_update(&[&rec], 0, &mut actor, &mut opt, &critic, 0.0).unwrap());
    assert_eq!(actor.values, before);
}

#[test]
fn actor_moves_toward_the_favored_task() {
    let cfg = tiny_config(1);
    let d = cfg.world.obs_dim();
    let m = cfg.world.n_tasks;
    let width = 2 * (d + m);
    for favored in 0..m {
        // q = a_j
        let mut critic = NetworkParams::zeros(MlpSpec::new(width, &[], 1, OutputHead::Linear)).unwrap();
        critic.values[d + favored] = 1.0;
        let mut actor = Networks::init(&cfg.world, &cfg.trainer, 8).unwrap().actor;
        let mut opt = AdamState::new(actor.len(), 0.01);
        let mut rec = records(8)[0].clone();
        rec.active = vec![true; 4];
        let obs = rec.observations.row(0).to_vec();
        let p0 = crate::nn::forward_row(&actor, &obs).unwrap()[favored];
        for _ in 0..5 {
            actor_update(&[&rec], 0, &mut actor, &mut opt, &critic, 0.0).unwrap();
        }
        let p1 = crate::nn::forward_row(&actor, &obs).unwrap()[favored];
        assert!(p1 > p0, "task {favored}: {p0} -> {p1}");
    }
}

#[test]
fn critic_width_is_fixed_across_related_set_sizes() {
    let d = 17;
    let m = 3;
    let obs: Vec<Vec<f64>> = (0..60).map(|k| vec![k as f64; d]).collect();
    let act: Vec<Vec<f64>> = (0..60).map(|_| vec![1.0 / 3.0; m]).collect();
    for size in [0usize, 1, 5, 50] {
        let set = RelatedSet {
            robot_id: 0,
            neighbors: (1..=size).collect(),
            same_action: Vec::new(),
            distances: (1..=size).map(|k| (k, k as f64)).collect(),
        };
        let mut ao = vec![0.0; d];
        let mut aa = vec![0.0; m];
        aggregate_into(&set, |k| &obs[k], |k| &act[k], -1.0, &mut ao, &mut aa);
        assert_eq!(critic_input(&obs[0], &act[0], &ao, &aa).len(), 2 * (d + m));
    }
}

#[test]
fn training_is_deterministic() {
    let cfg = tiny_config(4);
    let opts = TrainOptions::default();
    let (a, la) = train(&cfg, 11, &opts).unwrap();
    let (b, lb) = train(&cfg, 11, &opts).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a.actor.values, b.actor.values);
    assert_eq!(a.critic.values, b.critic.values);
    assert!(la.rows.iter().any(|r| r.critic_loss.is_some()));
    let (c, _) = train(&cfg, 12, &opts).unwrap();
    assert_ne!(a.actor.values, c.actor.values);
}

#[test]
fn zero_episodes_returns_initial_networks() {
    let cfg = tiny_config(0);
    let (nets, log) = train(&cfg, 3, &TrainOptions::default()).unwrap();
    assert!(log.rows.is_empty());
    let init = Networks::init(&cfg.world, &cfg.trainer, 3).unwrap();
    assert_eq!(nets.actor.values, init.actor.values);
}

#[test]
fn eta_controls_target_lag() {
    let mut cfg = tiny_config(3);
    cfg.trainer.eta = 0.0;
    let init = Networks::init(&cfg.world, &cfg.trainer, 5).unwrap();
    let (nets, _) = train(&cfg, 5, &TrainOptions::default()).unwrap();
    assert_eq!(nets.target_actor.values, init.actor.values);
    assert_eq!(nets.target_critic.values, init.critic.values);
    assert_ne!(nets.actor.values, init.actor.values);

    cfg.trainer.eta = 1.0;
    let (nets, _) = train(&cfg, 5, &TrainOptions::default()).unwrap();
    assert_eq!(nets.target_actor.values, nets.actor.values);
    assert_eq!(nets.target_critic.values, nets.critic.values);
}

#[test]
fn training_curve_round_trips() {
    let cfg = tiny_config(3);
    let (_, log) = train(&cfg, 2, &TrainOptions::default()).unwrap();
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    let back = TrainingLog::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, log);
}

#[test]
fn rollout_records_match_the_episode() {
    let recs = records(9);
    let cfg = tiny_config(1);
    assert!(!recs.is_empty() && recs.len() <= cfg.world.max_steps);
    for rec in &recs {
        assert_eq!(rec.observations.dim(), (4, cfg.world.obs_dim()));
        for row in rec.actions.rows() {
            assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&x| x == 0.0).count(), row.len() - 1);
        }
    }
    assert!(recs.last().unwrap().done.iter().all(|&d| d));
}
