use alloc::vec;
use alloc::vec::Vec;

use super::{baseline_with_probs, returns_to_go, td_error, ActionDistribution, Episode, EpisodeStep, Transition};
use crate::gridworld::{Action, AgentId};
use crate::nn::{Grads, MessagePassingNet, Mlp, Params, Tape};
use crate::{Error, Result};

/// Accumulated gradients of one team's minimised objective.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamGrads {
    pub policy: Grads,
    pub critic: Option<Grads>,
}

impl TeamGrads {
    pub fn add_assign(&mut self, other: &TeamGrads) -> Result<()> {
        self.policy.add_assign(&other.policy)?;
        match (&mut self.critic, &other.critic) {
            (Some(a), Some(b)) => a.add_assign(b),
            (None, None) => Ok(()),
            _ => Err(Error::Shape("critic gradients on one side only".into())),
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.policy.scale(k);
        if let Some(c) = &mut self.critic {
            c.scale(k);
        }
    }
}

fn seed_for(action: Action, coef: f64) -> [f64; Action::COUNT] {
    let mut s = [0.0; Action::COUNT];
    s[action.index()] = -coef;
    s
}

fn subgraph_of(tr: &Transition) -> Result<&crate::graph::SubGraph> {
    tr.subgraph
        .as_ref()
        .ok_or_else(|| Error::Shape("transition recorded without a sub-graph".into()))
}

struct AcScratch {
    policy: Tape,
    critic: Tape,
    sweep: Tape,
}

/// Baseline values of every same-team member for each of `team`'s
/// transitions in `step`, accumulating actor and critic gradients when
/// `grads` is given. `next` holds the values of the following step.
#[allow(clippy::too_many_arguments)]
fn ac_step(
    step: &EpisodeStep,
    next: Option<(&EpisodeStep, &[Vec<f64>])>,
    team: u8,
    policy: (&MessagePassingNet, &Params),
    critic: (&MessagePassingNet, &Params),
    gamma: f64,
    scratch: &mut AcScratch,
    mut grads: Option<(&mut Grads, &mut Grads)>,
) -> Result<Vec<Vec<f64>>> {
    let mut values = vec![Vec::new(); step.transitions.len()];
    for (k, tr) in step.transitions.iter().enumerate() {
        if tr.team != team {
            continue;
        }
        let sg = subgraph_of(tr)?;
        scratch.policy.clear();
        let logp = policy.0.record_policy(&mut scratch.policy, policy.1, sg)?;
        scratch.critic.clear();
        let q = critic.0.record_critic(&mut scratch.critic, critic.1, sg, &tr.actions)?;
        let q0 = scratch.critic.value(q)[0];

        let mut v = vec![f64::NAN; sg.len()];
        for j in 0..sg.len() {
            if sg.teams[j] != team {
                continue;
            }
            let probs = ActionDistribution::from_log_probs(scratch.policy.value(logp[j]));
            v[j] = baseline_with_probs(&mut scratch.sweep, critic.0, critic.1, sg, &tr.actions, j, &probs, Some(q0))?;
        }

        if let Some((gp, gc)) = grads.as_mut() {
            let succ = match (tr.successor, next) {
                (Some(s), Some((ns, nv))) => Some((&ns.transitions[s], &nv[s])),
                _ => None,
            };
            let mut delta_sum = 0.0;
            let mut seeds: Vec<(crate::nn::NodeId, [f64; Action::COUNT])> = Vec::new();
            for j in 0..sg.len() {
                if sg.teams[j] != team {
                    continue;
                }
                let v_next = match succ {
                    Some((s_tr, s_v)) => successor_value(s_tr, s_v, sg.members[j])?,
                    None => 0.0,
                };
                let delta = td_error(tr.reward, v_next, v[j], gamma);
                delta_sum += delta;
                seeds.push((logp[j], seed_for(tr.actions[j], delta)));
            }
            let seed_refs: Vec<(crate::nn::NodeId, &[f64])> =
                seeds.iter().map(|(id, s)| (*id, &s[..])).collect();
            scratch.policy.backward_into(policy.1, &seed_refs, gp)?;
            scratch.critic.backward_into(critic.1, &[(q, &[-delta_sum][..])], gc)?;
        }
        values[k] = v;
    }
    Ok(values)
}

/// Successor baseline for `member`: its own slot in the successor
/// sub-graph, or the centre's when it has left that sub-graph.
fn successor_value(succ: &Transition, values: &[f64], member: AgentId) -> Result<f64> {
    let sg = subgraph_of(succ)?;
    let idx = sg
        .member_index(member)
        .filter(|&j| sg.teams[j] == succ.team)
        .unwrap_or(0);
    Ok(values[idx])
}

/// Actor-critic gradients of `team` over a recorded episode.
pub fn ac_gradients(
    episode: &Episode,
    team: u8,
    policy: (&MessagePassingNet, &Params),
    critic: (&MessagePassingNet, &Params),
    gamma: f64,
) -> Result<TeamGrads> {
    let mut gp = Grads::like(policy.1);
    let mut gc = Grads::like(critic.1);
    let mut scratch = AcScratch {
        policy: Tape::new(),
        critic: Tape::new(),
        sweep: Tape::new(),
    };
    let mut next_values: Vec<Vec<f64>> = Vec::new();
    for t in (0..episode.steps.len()).rev() {
        let next = episode.steps.get(t + 1).map(|s| (s, &next_values[..]));
        let values = ac_step(
            &episode.steps[t],
            next,
            team,
            policy,
            critic,
            gamma,
            &mut scratch,
            Some((&mut gp, &mut gc)),
        )?;
        next_values = values;
    }
    Ok(TeamGrads {
        policy: gp,
        critic: Some(gc),
    })
}

/// Actor-critic gradients of `team` for step `t` alone.
pub fn ac_step_gradients(
    episode: &Episode,
    t: usize,
    team: u8,
    policy: (&MessagePassingNet, &Params),
    critic: (&MessagePassingNet, &Params),
    gamma: f64,
) -> Result<TeamGrads> {
    let mut gp = Grads::like(policy.1);
    let mut gc = Grads::like(critic.1);
    let mut scratch = AcScratch {
        policy: Tape::new(),
        critic: Tape::new(),
        sweep: Tape::new(),
    };
    let next_values = match episode.steps.get(t + 1) {
        Some(s) => ac_step(s, None, team, policy, critic, gamma, &mut scratch, None)?,
        None => Vec::new(),
    };
    let next = episode.steps.get(t + 1).map(|s| (s, &next_values[..]));
    ac_step(
        &episode.steps[t],
        next,
        team,
        policy,
        critic,
        gamma,
        &mut scratch,
        Some((&mut gp, &mut gc)),
    )?;
    Ok(TeamGrads {
        policy: gp,
        critic: Some(gc),
    })
}

/// Return-to-go of each of `team`'s transitions, indexed `[step][transition]`,
/// from the centre agent's own reward sequence.
pub fn transition_returns(episode: &Episode, team: u8, gamma: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = episode
        .steps
        .iter()
        .map(|s| vec![0.0; s.transitions.len()])
        .collect();
    let mut continued: Vec<Vec<bool>> = out.iter().map(|s| vec![false; s.len()]).collect();
    for t in 1..episode.steps.len() {
        for p in &episode.steps[t - 1].transitions {
            if let Some(s) = p.successor {
                continued[t][s] = true;
            }
        }
    }
    for (t0, step) in episode.steps.iter().enumerate() {
        for (k0, tr) in step.transitions.iter().enumerate() {
            if tr.team != team || continued[t0][k0] {
                continue;
            }
            let mut chain = vec![(t0, k0)];
            let (mut t, mut k) = (t0, k0);
            while let Some(s) = episode.steps[t].transitions[k].successor {
                t += 1;
                k = s;
                chain.push((t, k));
            }
            let rewards: Vec<f64> = chain
                .iter()
                .map(|&(t, k)| episode.steps[t].transitions[k].reward)
                .collect();
            for ((t, k), g) in chain.into_iter().zip(returns_to_go(&rewards, gamma)) {
                out[t][k] = g;
            }
        }
    }
    out
}

/// REINFORCE on the graph policy: `G_t` in place of the TD error.
pub fn graph_pg_gradients(
    episode: &Episode,
    team: u8,
    policy: (&MessagePassingNet, &Params),
    gamma: f64,
) -> Result<TeamGrads> {
    let returns = transition_returns(episode, team, gamma);
    let mut gp = Grads::like(policy.1);
    let mut tape = Tape::new();
    for (step, g_step) in episode.steps.iter().zip(&returns) {
        for (tr, &g) in step.transitions.iter().zip(g_step) {
            if tr.team != team || g == 0.0 {
                continue;
            }
            let sg = subgraph_of(tr)?;
            tape.clear();
            let logp = policy.0.record_policy(&mut tape, policy.1, sg)?;
            let seeds: Vec<(crate::nn::NodeId, [f64; Action::COUNT])> = (0..sg.len())
                .filter(|&j| sg.teams[j] == team)
                .map(|j| (logp[j], seed_for(tr.actions[j], g)))
                .collect();
            let refs: Vec<(crate::nn::NodeId, &[f64])> = seeds.iter().map(|(id, s)| (*id, &s[..])).collect();
            tape.backward_into(policy.1, &refs, &mut gp)?;
        }
    }
    Ok(TeamGrads {
        policy: gp,
        critic: None,
    })
}

/// REINFORCE on the per-agent perceptron.
pub fn vanilla_pg_gradients(episode: &Episode, team: u8, policy: (&Mlp, &Params), gamma: f64) -> Result<TeamGrads> {
    let returns = transition_returns(episode, team, gamma);
    let mut gp = Grads::like(policy.1);
    let mut tape = Tape::new();
    for (step, g_step) in episode.steps.iter().zip(&returns) {
        for (tr, &g) in step.transitions.iter().zip(g_step) {
            if tr.team != team || g == 0.0 {
                continue;
            }
            tape.clear();
            let logp = policy.0.record(&mut tape, policy.1, &tr.features)?;
            tape.backward_into(policy.1, &[(logp, &seed_for(tr.action, g)[..])], &mut gp)?;
        }
    }
    Ok(TeamGrads {
        policy: gp,
        critic: None,
    })
}
