use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{ensemble_action, ActionDistribution, EnsembleMode};
use crate::graph::{build_graph, decompose, vertex_features, EdgeEncoding, SubGraph, VertexFeature};
use crate::gridworld::{Action, AgentId, GridWorld, Scenario, StepOutcome};
use crate::nn::{MessagePassingNet, Mlp, Params, Tape};
use crate::{Error, Result};

/// How one team chooses its actions during a rollout.
#[derive(Debug, Clone, Copy)]
pub enum TeamPolicy<'a> {
    /// Message-passing policy with cross-sub-graph ensembling.
    Graph {
        net: &'a MessagePassingNet,
        params: &'a Params,
    },
    /// Per-agent perceptron over the agent's own vertex features.
    Mlp { net: &'a Mlp, params: &'a Params },
    /// Uniformly random actions.
    Uniform,
    /// Every agent idles.
    Idle,
}

impl TeamPolicy<'_> {
    fn learned(&self) -> bool {
        matches!(self, TeamPolicy::Graph { .. } | TeamPolicy::Mlp { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    pub depth: usize,
    pub encoding: EdgeEncoding,
    pub mode: EnsembleMode,
    /// Keep transitions for learned teams.
    pub record: bool,
}

/// One agent's step, seen from the sub-graph centred on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub centre: AgentId,
    pub team: u8,
    pub features: VertexFeature,
    /// Present for graph policies.
    pub subgraph: Option<SubGraph>,
    /// Actions of the sub-graph members in member order; just the centre's
    /// action when there is no sub-graph.
    pub actions: Vec<Action>,
    /// The centre's executed action before illegal-move coercion.
    pub action: Action,
    pub reward: f64,
    /// Index of the same agent's transition in the next step, if it
    /// survived and the episode continued.
    pub successor: Option<usize>,
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeStep {
    /// Ascending centre id.
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamStats {
    pub team: u8,
    pub size: usize,
    /// Summed rewards divided by the team's starting size.
    pub mean_return: f64,
    /// 1 win, 0 loss, 0.5 tie; `None` for Jungle.
    pub win: Option<f64>,
    pub alive: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub steps: u32,
    pub teams: Vec<TeamStats>,
    pub subgraphs: usize,
    pub member_total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub steps: Vec<EpisodeStep>,
    pub stats: EpisodeStats,
}

impl Episode {
    pub fn transition_count(&self) -> usize {
        self.steps.iter().map(|s| s.transitions.len()).sum()
    }
}

pub fn run_episode<R: Rng + ?Sized>(
    world: &mut GridWorld,
    policies: &[TeamPolicy<'_>],
    opts: &RolloutOptions,
    rng: &mut R,
) -> Result<Episode> {
    run_episode_observed(world, policies, opts, rng, &mut |_, _| {})
}

/// As [`run_episode`], calling `observer` with the initial world and after
/// every step.
pub fn run_episode_observed<R: Rng + ?Sized>(
    world: &mut GridWorld,
    policies: &[TeamPolicy<'_>],
    opts: &RolloutOptions,
    rng: &mut R,
    observer: &mut dyn FnMut(&GridWorld, Option<&StepOutcome>),
) -> Result<Episode> {
    let team_sizes = world.config().team_sizes();
    if policies.len() != team_sizes.len() {
        return Err(Error::Config(alloc::format!(
            "{} team policies for {} teams",
            policies.len(),
            team_sizes.len()
        )));
    }
    let n_agents = world.agents().len();
    let need_graph = policies.iter().any(|p| matches!(p, TeamPolicy::Graph { .. }));
    let mut tape = Tape::new();
    let mut returns = vec![0.0; team_sizes.len()];
    let mut steps: Vec<EpisodeStep> = Vec::new();
    let mut prev_slot: Vec<Option<usize>> = vec![None; n_agents];
    let mut subgraphs = 0;
    let mut member_total = 0;
    observer(world, None);

    while !world.is_done() {
        let alive: Vec<(AgentId, u8)> = world.alive_agents().map(|a| (a.id, a.team)).collect();
        let mut subs: Vec<Option<SubGraph>> = if need_graph && !alive.is_empty() {
            decompose(&build_graph(world)?, opts.depth, &opts.encoding)?
                .into_iter()
                .map(Some)
                .collect()
        } else {
            Vec::new()
        };
        subgraphs += subs.len();
        member_total += subs.iter().flatten().map(|s| s.len()).sum::<usize>();

        let mut acc = vec![[0.0; Action::COUNT]; n_agents];
        for sg in subs.iter().flatten() {
            let team = sg.teams[0];
            if let TeamPolicy::Graph { net, params } = policies[usize::from(team)] {
                let dists = net.policy_forward_with(&mut tape, params, sg)?;
                for (m, d) in dists.iter().enumerate() {
                    if sg.teams[m] == team {
                        let slot = &mut acc[sg.members[m] as usize];
                        for (a, p) in slot.iter_mut().zip(d.0) {
                            *a += p;
                        }
                    }
                }
            }
        }

        let mut chosen = vec![Action::Idle; n_agents];
        let mut features: Vec<Option<VertexFeature>> = vec![None; n_agents];
        for &(id, team) in &alive {
            let i = id as usize;
            chosen[i] = match policies[usize::from(team)] {
                TeamPolicy::Graph { .. } => ensemble_action(&[ActionDistribution(acc[i])], opts.mode, rng)?,
                TeamPolicy::Mlp { net, params } => {
                    let f = vertex_features(world, id)?;
                    let d = net.distribution(&mut tape, params, &f)?;
                    features[i] = Some(f);
                    ensemble_action(&[d], opts.mode, rng)?
                }
                TeamPolicy::Uniform => Action::ALL[rng.gen_range(0..Action::COUNT)],
                TeamPolicy::Idle => Action::Idle,
            };
        }

        let mut transitions = Vec::new();
        let mut slot: Vec<Option<usize>> = vec![None; n_agents];
        if opts.record {
            for (k, &(id, team)) in alive.iter().enumerate() {
                if !policies[usize::from(team)].learned() {
                    continue;
                }
                let i = id as usize;
                let subgraph = subs.get_mut(k).and_then(Option::take);
                let actions = match &subgraph {
                    Some(sg) => sg.members.iter().map(|&m| chosen[m as usize]).collect(),
                    None => vec![chosen[i]],
                };
                let features = match (&subgraph, features[i]) {
                    (Some(sg), _) => sg.features[0],
                    (None, Some(f)) => f,
                    (None, None) => vertex_features(world, id)?,
                };
                if let Some(p) = prev_slot[i] {
                    let last = steps.last_mut().expect("previous step exists");
                    last.transitions[p].successor = Some(transitions.len());
                }
                slot[i] = Some(transitions.len());
                transitions.push(Transition {
                    centre: id,
                    team,
                    features,
                    subgraph,
                    actions,
                    action: chosen[i],
                    reward: 0.0,
                    successor: None,
                    done: false,
                });
            }
        }

        let outcome = world.step(alive.iter().map(|&(id, _)| (id, chosen[id as usize])))?;
        for &(id, r) in &outcome.rewards {
            let team = world.agent(id).map(|a| a.team).unwrap_or(0);
            returns[usize::from(team)] += r;
            if let Some(k) = slot[id as usize] {
                let tr = &mut transitions[k];
                tr.reward = r;
                tr.done = outcome.done || outcome.deaths.contains(&id);
            }
        }
        observer(world, Some(&outcome));
        if opts.record {
            steps.push(EpisodeStep { transitions });
        }
        prev_slot = slot;
    }

    let wins = team_wins(world);
    let teams = team_sizes
        .iter()
        .enumerate()
        .map(|(t, &size)| TeamStats {
            team: t as u8,
            size,
            mean_return: if size == 0 { 0.0 } else { returns[t] / size as f64 },
            win: wins[t],
            alive: world.alive_in_team(t as u8),
        })
        .collect();
    Ok(Episode {
        steps,
        stats: EpisodeStats {
            steps: world.time(),
            teams,
            subgraphs,
            member_total,
        },
    })
}

fn team_wins(world: &GridWorld) -> Vec<Option<f64>> {
    match world.scenario() {
        Scenario::Jungle => vec![None],
        Scenario::Battle => {
            let (a, b) = (world.alive_in_team(0), world.alive_in_team(1));
            let w0 = match a.cmp(&b) {
                core::cmp::Ordering::Greater => 1.0,
                core::cmp::Ordering::Less => 0.0,
                core::cmp::Ordering::Equal => 0.5,
            };
            vec![Some(w0), Some(1.0 - w0)]
        }
        Scenario::Deception => {
            let (home, adv) = match world.target_landmark() {
                Some(t) => (world.team_count_at(t, 0) > 0, world.team_count_at(t, 1) > 0),
                None => (false, false),
            };
            let w0 = if home && !adv { 1.0 } else { 0.0 };
            let w1 = if adv { 1.0 } else { 0.0 };
            vec![Some(w0), Some(w1)]
        }
    }
}
