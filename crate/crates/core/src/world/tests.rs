use super::*;
use crate::config::WorldConfig;

fn cfg(n: usize, m: usize) -> WorldConfig {
    WorldConfig {
        n_robots: n,
        n_tasks: m,
        ..WorldConfig::default()
    }
}

/// A world with stationary tasks at the given positions and robots at the
/// given positions and per-step displacements.
fn handmade(robots: &[([f64; 2], f64)], tasks: &[[f64; 2]], capacity: usize) -> WorldState {
    let mut config = cfg(robots.len(), tasks.len());
    config.task_capacity = Some(capacity);
    config.task_speed_min = 0.0;
    config.task_speed_max = 0.0;
    let mut w = init_world(&config, 0).unwrap();
    for (t, &p) in w.tasks.iter_mut().zip(tasks) {
        t.position = p;
        t.speed = 0.0;
    }
    for (r, &(p, v)) in w.robots.iter_mut().zip(robots) {
        r.position = p;
        r.speed = v;
    }
    w.reward_matrix.iter_mut().for_each(|r| *r = 0.5);
    w
}

#[test]
fn capacity_is_ceil_n_over_m() {
    let w = init_world(&cfg(30, 5), 3).unwrap();
    assert!(w.tasks.iter().all(|t| t.capacity == 6));
    let w = init_world(&cfg(31, 5), 3).unwrap();
    assert!(w.tasks.iter().all(|t| t.capacity == 7));
}

#[test]
fn degenerate_sizes() {
    let w = init_world(&cfg(1, 1), 11).unwrap();
    assert_eq!(w.tasks[0].capacity, 1);
    assert_eq!(w.reward_matrix.len(), 1);
    assert!((0.0..=1.0).contains(&w.reward_matrix[0]));
}

#[test]
fn init_is_deterministic_and_in_range() {
    let c = cfg(20, 4);
    let a = init_world(&c, 42).unwrap();
    let b = init_world(&c, 42).unwrap();
    assert!(a.bit_identical(&b));
    let other = init_world(&c, 43).unwrap();
    assert!(!a.bit_identical(&other));

    assert_eq!(a.t, 0);
    assert!((a.d_bind - 0.03).abs() < 1e-15);
    for r in &a.robots {
        assert!(r.is_free() && r.status() == 1 && r.target.is_none());
        assert!(r.position.iter().all(|x| (0.0..=1.0).contains(x)));
        assert!((0.002..=0.005).contains(&r.speed));
    }
    for t in &a.tasks {
        assert_eq!(t.bound_count, 0);
        assert!((0.0005..=0.001).contains(&t.speed));
        assert!((-PI..=PI).contains(&t.heading));
    }
    assert!(a.reward_matrix.iter().all(|r| (0.0..=1.0).contains(r)));
}

#[test]
fn invalid_config_is_rejected() {
    let mut c = cfg(0, 3);
    assert!(matches!(init_world(&c, 0), Err(Error::Config(_))));
    c = cfg(3, 0);
    assert!(matches!(init_world(&c, 0), Err(Error::Config(_))));
    c = cfg(3, 3);
    c.tau_s = 0.0;
    assert!(matches!(init_world(&c, 0), Err(Error::Config(_))));
    c = cfg(3, 3);
    c.robot_speed_min = -1.0;
    assert!(matches!(init_world(&c, 0), Err(Error::Config(_))));
}

#[test]
fn task_moves_along_heading_then_redraws() {
    let mut w = init_world(&cfg(1, 1), 5).unwrap();
    w.tasks[0].position = [0.5, 0.5];
    w.tasks[0].speed = 0.001;
    w.tasks[0].heading = 0.0;
    w.step_tasks();
    assert!((w.tasks[0].position[0] - 0.501).abs() < 1e-15);
    assert_eq!(w.tasks[0].position[1], 0.5);
    assert!((-PI..=PI).contains(&w.tasks[0].heading));
}

#[test]
fn zero_speed_task_stays_put() {
    let mut w = init_world(&cfg(1, 1), 5).unwrap();
    w.tasks[0].speed = 0.0;
    let p = w.tasks[0].position;
    for _ in 0..10 {
        w.step_tasks();
        assert_eq!(w.tasks[0].position, p);
    }
}

#[test]
fn task_reflects_at_boundary() {
    let mut w = init_world(&cfg(1, 1), 5).unwrap();
    w.tasks[0].position = [0.9995, 0.5];
    w.tasks[0].speed = 0.001;
    w.tasks[0].heading = 0.0;
    w.step_tasks();
    // 0.9995 + 0.001 = 1.0005 folds to 2 - 1.0005 = 0.9995
    assert!((w.tasks[0].position[0] - 0.9995).abs() < 1e-12);

    w.tasks[0].position = [0.0002, 0.0003];
    w.tasks[0].heading = -3.0 * PI / 4.0;
    w.step_tasks();
    let p = w.tasks[0].position;
    assert!(p[0] >= 0.0 && p[1] >= 0.0);
}

#[test]
fn robot_reaching_target_binds_same_step() {
    let mut w = handmade(&[([0.0, 0.0], 0.005)], &[[0.003, 0.004]], 1);
    let events = w.step_robots(&[Action::one_hot(0, 1)]).unwrap();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].robot_id, 0);
    assert!(events[0].got_final_reward);
    let r = &w.robots[0];
    assert_eq!(r.bind_time, Some(1));
    assert_eq!(r.position, w.tasks[0].position);
    assert!((r.accumulated_cost - 0.005).abs() < 1e-15);
}

#[test]
fn robot_at_target_keeps_heading_and_binds() {
    let mut w = handmade(&[([0.2, 0.2], 0.004)], &[[0.2, 0.2]], 1);
    w.robots[0].heading = 0.7;
    w.step_robots(&[Action::one_hot(0, 1)]).unwrap();
    assert_eq!(w.robots[0].bind_time, Some(1));
    // heading came from the task on binding, the move used the kept heading
    assert!((w.robots[0].accumulated_cost - 0.004).abs() < 1e-15);
}

#[test]
fn bound_robot_follows_task_and_ignores_actions() {
    let mut w = init_world(&cfg(3, 2), 9).unwrap();
    w.robots[1].position = w.tasks[1].position;
    let events = w.step(&vec![Action::one_hot(1, 2); 3]).unwrap().newly_bound;
    assert!(events.iter().any(|e| e.robot_id == 1 && e.task_id == 1));
    let cost = w.robots[1].accumulated_cost;
    for _ in 0..20 {
        w.step(&vec![Action::one_hot(0, 2); 3]).unwrap();
        assert_eq!(w.robots[1].target, Some(1));
        assert_eq!(w.robots[1].position, w.tasks[1].position);
        assert_eq!(w.robots[1].accumulated_cost, cost);
        assert_eq!(w.robot_motion(1), (w.tasks[1].speed, w.tasks[1].heading));
    }
}

#[test]
fn rejects_out_of_range_action() {
    let mut w = init_world(&cfg(2, 2), 0).unwrap();
    let before = w.clone();
    let err = w.step(&[Action::one_hot(0, 2), Action::one_hot(2, 2)]).unwrap_err();
    assert!(matches!(err, Error::InvalidAction { robot: 1, task: 2, .. }));
    assert!(w.bit_identical(&before));
}

#[test]
fn binding_respects_capacity_and_order() {
    // h̄ = 3, two robots already bound: the next one still gets the reward
    let mut w = handmade(
        &[([0.5, 0.5], 0.003), ([0.5, 0.5], 0.003), ([0.5, 0.5], 0.003), ([0.5, 0.5], 0.003)],
        &[[0.5, 0.5]],
        3,
    );
    w.tasks[0].bound_count = 2;
    for r in &mut w.robots[2..] {
        r.target = Some(0);
        r.bind_time = Some(0);
        r.rewarded = true;
    }
    for r in &mut w.robots[..2] {
        r.target = Some(0);
    }
    let events = w.bind_robots();
    // two robots bind at once with one slot left: robot 0 gets the reward
    assert_eq!(
        events,
        vec![
            BindEvent { robot_id: 0, task_id: 0, got_final_reward: true },
            BindEvent { robot_id: 1, task_id: 0, got_final_reward: false },
        ]
    );
    assert_eq!(w.tasks[0].bound_count, 4);
}

#[test]
fn reward_examples() {
    // free robot, h̄=3, h=1, no binding: -0.001 + (3-1) = 1.999
    let mut w = handmade(&[([0.1, 0.1], 0.003)], &[[0.9, 0.9]], 3);
    w.tasks[0].bound_count = 1;
    let r = compute_rewards(&w, &[Action::one_hot(0, 1)], &[]);
    assert!((r[0] - 1.999).abs() < 1e-12);

    // binds with r=0.5 into an open slot, h̄=3, h=2: -0.001 + 1 + 5 = 5.999
    w.tasks[0].bound_count = 2;
    w.reward_matrix[0] = 0.5;
    let ev = [BindEvent { robot_id: 0, task_id: 0, got_final_reward: true }];
    let r = compute_rewards(&w, &[Action::one_hot(0, 1)], &ev);
    assert!((r[0] - 5.999).abs() < 1e-12);

    // already bound before the step: nothing
    w.robots[0].bind_time = Some(3);
    w.robots[0].target = Some(0);
    let r = compute_rewards(&w, &[Action::one_hot(0, 1)], &[]);
    assert_eq!(r[0], 0.0);
}

#[test]
fn utility_examples() {
    let mut w = handmade(&[([0.0, 0.0], 0.004), ([0.0, 0.0], 0.002), ([0.0, 0.0], 0.004)], &[[0.5, 0.5]], 1);
    w.reward_matrix = vec![0.8, 0.3, 0.9];
    // bound at T=10 with a slot
    w.robots[0].bind_time = Some(10);
    w.robots[0].target = Some(0);
    w.robots[0].rewarded = true;
    w.robots[0].accumulated_cost = 10.0 * 0.004;
    // never bound over 150 steps
    w.robots[1].accumulated_cost = 150.0 * 0.002;
    // bound to a full task
    w.robots[2].bind_time = Some(5);
    w.robots[2].target = Some(0);
    w.robots[2].accumulated_cost = 5.0 * 0.004;
    let u = w.episode_utilities();
    assert!((u[0] - 0.76).abs() < 1e-12);
    assert!((u[1] + 0.3).abs() < 1e-12);
    assert!((u[2] + 0.02).abs() < 1e-12);
}

#[test]
fn observation_of_coincident_robot_and_task() {
    let mut w = handmade(&[([0.3, 0.3], 0.001)], &[[0.3, 0.3]], 2);
    w.tasks[0].speed = 0.001;
    w.tasks[0].heading = 0.4;
    w.robots[0].heading = 0.4;
    w.tasks[0].bound_count = 1;
    w.reward_matrix[0] = 0.25;
    let o = build_observation(&w, 0, &[]);
    assert_eq!(o.task_group(0), &[0.0, 0.0, 0.0, 0.0, 1.0, 0.25]);
    assert_eq!(o.self_block(), &[0.3, 0.3, 0.001, 0.4, 1.0]);
}

#[test]
fn observation_without_neighbors_is_zero_padded() {
    let mut c = cfg(1, 3);
    c.alpha_max = 10;
    let w = init_world(&c, 1).unwrap();
    let o = build_observation(&w, 0, &[]);
    assert_eq!(o.dim(), 83);
    assert!(o.mask().iter().all(|&m| m == 0.0));
    for k in 0..10 {
        assert!(o.neighbor_group(k).iter().all(|&x| x == 0.0));
    }
}

#[test]
fn neighbor_block_encodes_previous_target() {
    let mut c = cfg(3, 4);
    c.alpha_max = 3;
    let mut w = init_world(&c, 2).unwrap();
    let o = build_observation(&w, 0, &[2, 1]);
    assert_eq!(o.observed_neighbors(), 2);
    assert_eq!(o.neighbor_group(0)[4], 0.0);
    w.step(&[Action::one_hot(0, 4), Action::one_hot(1, 4), Action::one_hot(3, 4)]).unwrap();
    let o = build_observation(&w, 0, &[2, 1]);
    assert_eq!(o.neighbor_group(0)[4], 0.75);
    assert_eq!(o.neighbor_group(1)[4], 0.25);
    assert_eq!(o.mask(), &[1.0, 1.0, 0.0]);
    assert!(o.neighbor_group(2).iter().all(|&x| x == 0.0));
    let g = o.neighbor_group(0);
    assert_eq!(g[0], w.robots[2].position[0] - w.robots[0].position[0]);
}

#[test]
fn episode_terminates_at_horizon() {
    let mut c = cfg(2, 2);
    c.max_steps = 7;
    let mut w = init_world(&c, 4).unwrap();
    w.robots.iter_mut().for_each(|r| r.speed = 0.001);
    // point robots at opposite corners so they cannot reach anything
    w.robots[0].position = [0.0, 0.0];
    w.robots[1].position = [1.0, 1.0];
    w.tasks[0].position = [1.0, 0.0];
    w.tasks[1].position = [0.0, 1.0];
    w.tasks.iter_mut().for_each(|t| t.speed = 0.0);
    let mut steps = 0;
    loop {
        let out = w.step(&[Action::one_hot(0, 2), Action::one_hot(1, 2)]).unwrap();
        steps += 1;
        if out.done {
            break;
        }
    }
    assert_eq!(steps, 7);
    assert_eq!(w.bind_times(), vec![7, 7]);
    let u = w.episode_utilities();
    assert!((u[0] + 0.007).abs() < 1e-12);
}
