use ndarray::{s, Array2, Zip};

use super::TransitionRecord;
use crate::error::{Error, Result};
use crate::nn::{adam_step, backward, forward, AdamState, Mode, NetworkParams};
use crate::perception::aggregate_into;
use crate::world::argmax;

/// Critic input for one robot: (o_i, a_i, φ(o), φ(a)).
pub fn critic_input(o: &[f64], a: &[f64], agg_o: &[f64], agg_a: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(o.len() + a.len() + agg_o.len() + agg_a.len());
    row.extend_from_slice(o);
    row.extend_from_slice(a);
    row.extend_from_slice(agg_o);
    row.extend_from_slice(agg_a);
    row
}

fn stack(rows: &[Vec<f64>], width: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), width), flat).expect("uniform rows")
}

/// Rows of the batch in which `robot` was still free, i.e. the samples that
/// carry a learning signal for it.
pub fn active_rows(batch: &[&TransitionRecord], robot: usize) -> Vec<usize> {
    (0..batch.len()).filter(|&k| batch[k].active[robot]).collect()
}

/// y = r + γ·q′(o′_i, a′_i, φ(o′), φ(a′)) for every sample of the batch,
/// with a′ the one-hot of the target actor's argmax (bound robots repeat
/// their task) and the related sets at t+1 rebuilt from a′. Terminal samples get y = r.
pub fn critic_target(
    batch: &[&TransitionRecord],
    robot: usize,
    target_actor: &NetworkParams,
    target_critic: &NetworkParams,
    gamma: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    let mut y: Vec<f64> = batch.iter().map(|rec| rec.rewards[robot]).collect();
    let boot: Vec<usize> = (0..batch.len())
        .filter(|&k| batch[k].active[robot] && !batch[k].done[robot])
        .collect();
    if boot.is_empty() || gamma == 0.0 {
        return Ok(y);
    }
    let n = batch[0].n_robots();
    let d = batch[0].obs_dim();
    let m = batch[0].n_tasks();

    let mut next_obs = Array2::zeros((boot.len() * n, d));
    for (b, &k) in boot.iter().enumerate() {
        next_obs
            .slice_mut(s![b * n..(b + 1) * n, ..])
            .assign(&batch[k].next_observations);
    }
    let (probs, _) = forward(target_actor, next_obs.view(), Mode::Eval)?;

    let mut rows = Vec::with_capacity(boot.len());
    let mut agg_o = vec![0.0; d];
    let mut agg_a = vec![0.0; m];
    for (b, &k) in boot.iter().enumerate() {
        let rec = batch[k];
        let block = probs.slice(s![b * n..(b + 1) * n, ..]);
        let tasks: Vec<usize> = rec
            .next_targets
            .iter()
            .zip(block.rows())
            .map(|(target, row)| target.unwrap_or_else(|| argmax(row.to_slice().expect("contiguous"))))
            .collect();
        let mut dist = Array2::zeros((n, m));
        for (r, &g) in tasks.iter().enumerate() {
            dist[[r, g]] = 1.0;
        }
        let related = rec.next_snapshot.related_set(robot, &tasks);
        let obs = &rec.next_observations;
        aggregate_into(
            &related,
            |q| obs.row(q).to_slice().expect("contiguous"),
            |q| dist.row(q).to_slice().expect("contiguous"),
            beta,
            &mut agg_o,
            &mut agg_a,
        );
        rows.push(critic_input(
            obs.row(robot).as_slice().expect("contiguous"),
            dist.row(robot).as_slice().expect("contiguous"),
            &agg_o,
            &agg_a,
        ));
    }
    let (q_next, _) = forward(target_critic, stack(&rows, 2 * (d + m)).view(), Mode::Eval)?;
    for (b, &k) in boot.iter().enumerate() {
        y[k] += gamma * q_next[[b, 0]];
    }
    Ok(y)
}

fn batch_inputs(batch: &[&TransitionRecord], rows: &[usize], robot: usize) -> Array2<f64> {
    let rec0 = batch[0];
    let width = 2 * (rec0.obs_dim() + rec0.n_tasks());
    let data: Vec<Vec<f64>> = rows
        .iter()
        .map(|&k| {
            let rec = batch[k];
            critic_input(
                rec.observations.row(robot).as_slice().expect("contiguous"),
                rec.actions.row(robot).as_slice().expect("contiguous"),
                rec.agg_obs.row(robot).as_slice().expect("contiguous"),
                rec.agg_act.row(robot).as_slice().expect("contiguous"),
            )
        })
        .collect();
    stack(&data, width)
}

/// One Adam step on mean (y − q)² over the samples where `robot` was free.
/// Returns the loss before the step and the per-row TD errors (aligned with
/// the batch, zero for skipped rows), or `None` when no row was usable.
pub fn critic_update(
    batch: &[&TransitionRecord],
    robot: usize,
    critic: &mut NetworkParams,
    optimizer: &mut AdamState,
    targets: &[f64],
) -> Result<Option<(f64, Vec<f64>)>> {
    let rows = active_rows(batch, robot);
    if rows.is_empty() {
        return Ok(None);
    }
    let x = batch_inputs(batch, &rows, robot);
    let (q, tape) = forward(critic, x.view(), Mode::Train)?;
    let n = rows.len() as f64;
    let mut td = vec![0.0; batch.len()];
    let mut grad = Array2::zeros((rows.len(), 1));
    let mut loss = 0.0;
    for (b, &k) in rows.iter().enumerate() {
        let err = q[[b, 0]] - targets[k];
        td[k] = err;
        loss += err * err / n;
        grad[[b, 0]] = 2.0 * err / n;
    }
    if !loss.is_finite() {
        return Err(Error::NumericalFault(format!("critic loss {loss}")));
    }
    let g = backward(critic, &tape, grad.view())?;
    critic.update_running_stats(&tape);
    adam_step(critic, &g.params, optimizer)?;
    Ok(Some((loss, td)))
}

/// Gradient ascent on mean q(o_i, μ(o_i), φ(o), φ(a)) over the samples where
/// `robot` was free, plus `entropy_coef` times the mean policy entropy; the
/// critic is read only. Returns false when no row was usable.
pub fn actor_update(
    batch: &[&TransitionRecord],
    robot: usize,
    actor: &mut NetworkParams,
    optimizer: &mut AdamState,
    critic: &NetworkParams,
    entropy_coef: f64,
) -> Result<bool> {
    let rows = active_rows(batch, robot);
    if rows.is_empty() {
        return Ok(false);
    }
    let rec0 = batch[0];
    let d = rec0.obs_dim();
    let m = rec0.n_tasks();
    let mut obs = Array2::zeros((rows.len(), d));
    for (b, &k) in rows.iter().enumerate() {
        obs.row_mut(b).assign(&batch[k].observations.row(robot));
    }
    let (a, actor_tape) = forward(actor, obs.view(), Mode::Train)?;
    let mut x = batch_inputs(batch, &rows, robot);
    x.slice_mut(s![.., d..d + m]).assign(&a);
    let (_, critic_tape) = forward(critic, x.view(), Mode::Train)?;
    // descend on −mean q
    let n = rows.len() as f64;
    let g_out = Array2::from_elem((rows.len(), 1), -1.0 / n);
    let dq = backward(critic, &critic_tape, g_out.view())?;
    let mut da = dq.input.slice(s![.., d..d + m]).to_owned();
    if entropy_coef > 0.0 {
        // d(−H)/dp_j = log p_j + 1
        Zip::from(&mut da)
            .and(&a)
            .for_each(|g, &p| *g += entropy_coef * (p.max(1e-12).ln() + 1.0) / n);
    }
    let g = backward(actor, &actor_tape, da.view())?;
    actor.update_running_stats(&actor_tape);
    adam_step(actor, &g.params, optimizer)?;
    Ok(true)
}
