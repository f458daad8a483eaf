//! Grid-world scenarios: Jungle, Battle and Deception.
//!
//! Every agent occupies one cell; several agents may share a cell. Walls and
//! food cells are obstacles, landmarks are not. Adjacency everywhere in this
//! module means Chebyshev distance at most one, the same radius as the 3×3
//! observation window.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::{Error, Result};

pub type AgentId = u32;

/// Number of consecutive crowded steps after which a Jungle agent dies.
pub const JUNGLE_KILL_STREAK: u8 = 3;
/// Number of adjacent opponents that kill a Battle agent.
pub const BATTLE_KILL_OPPONENTS: u32 = 3;

/// Observation channels per patch cell.
pub const OBS_CHANNELS: usize = 5;
/// Cells in the observation patch.
pub const OBS_CELLS: usize = 9;
pub const OBS_LEN: usize = OBS_CHANNELS * OBS_CELLS;

pub const CH_WALL: usize = 0;
pub const CH_FOOD: usize = 1;
pub const CH_LANDMARK: usize = 2;
pub const CH_OWN_TEAM: usize = 3;
pub const CH_OTHER_TEAM: usize = 4;

/// Landmark channel value of the target landmark as seen by home agents.
pub const TARGET_LANDMARK_VALUE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Position {
    pub x: i32,
    pub y: i32,
}

impl Position {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn chebyshev(self, other: Position) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn euclidean(self, other: Position) -> f64 {
        let dx = f64::from(self.x - other.x);
        let dy = f64::from(self.y - other.y);
        libm::sqrt(dx * dx + dy * dy)
    }

    pub fn offset(self, dx: i32, dy: i32) -> Position {
        Position::new(self.x + dx, self.y + dy)
    }
}

/// The five moves shared by every scenario. The declaration order is the
/// encoding order used by the networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Idle,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Idle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// Cell displacement, with y growing downwards.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Idle => (0, 0),
        }
    }
}

/// A subset of [`Action`] stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActionSet(u8);

impl ActionSet {
    pub fn insert(&mut self, a: Action) {
        self.0 |= 1 << a.index();
    }

    pub fn contains(self, a: Action) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |a| self.contains(*a))
    }
}

impl FromIterator<Action> for ActionSet {
    fn from_iter<I: IntoIterator<Item = Action>>(iter: I) -> Self {
        let mut set = ActionSet::default();
        for a in iter {
            set.insert(a);
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Jungle,
    Battle,
    Deception,
}

impl Scenario {
    pub fn default_episode_limit(self) -> u32 {
        match self {
            Scenario::Jungle => 200,
            Scenario::Battle => 300,
            Scenario::Deception => 100,
        }
    }

    pub fn num_teams(self) -> usize {
        match self {
            Scenario::Jungle => 1,
            Scenario::Battle | Scenario::Deception => 2,
        }
    }
}

/// Scenario layout. `agents` is the Jungle population, the Battle team size
/// (both teams get `agents`), or the Deception home-team size.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub width: usize,
    pub height: usize,
    pub agents: usize,
    /// Deception only.
    pub adversaries: usize,
    /// Jungle only.
    pub foods: usize,
    /// Deception only; one of them is the target.
    pub landmarks: usize,
    /// Interior wall cells placed at random.
    pub walls: usize,
    pub episode_limit: u32,
}

impl ScenarioConfig {
    pub fn jungle(width: usize, height: usize, agents: usize, foods: usize) -> Self {
        Self {
            scenario: Scenario::Jungle,
            width,
            height,
            agents,
            adversaries: 0,
            foods,
            landmarks: 0,
            walls: 0,
            episode_limit: Scenario::Jungle.default_episode_limit(),
        }
    }

    pub fn battle(width: usize, height: usize, per_team: usize) -> Self {
        Self {
            scenario: Scenario::Battle,
            width,
            height,
            agents: per_team,
            adversaries: 0,
            foods: 0,
            landmarks: 0,
            walls: 0,
            episode_limit: Scenario::Battle.default_episode_limit(),
        }
    }

    pub fn deception(width: usize, height: usize, home: usize, landmarks: usize) -> Self {
        Self {
            scenario: Scenario::Deception,
            width,
            height,
            agents: home,
            adversaries: 1,
            foods: 0,
            landmarks,
            walls: 0,
            episode_limit: Scenario::Deception.default_episode_limit(),
        }
    }

    pub fn with_episode_limit(mut self, limit: u32) -> Self {
        self.episode_limit = limit;
        self
    }

    pub fn num_teams(&self) -> usize {
        self.scenario.num_teams()
    }

    /// Agents per team, indexed by team tag.
    pub fn team_sizes(&self) -> Vec<usize> {
        match self.scenario {
            Scenario::Jungle => vec![self.agents],
            Scenario::Battle => vec![self.agents, self.agents],
            Scenario::Deception => vec![self.agents, self.adversaries],
        }
    }

    pub fn total_agents(&self) -> usize {
        self.team_sizes().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 5 || self.height < 5 {
            return Err(Error::Config(format!(
                "grid must be at least 5x5, got {}x{}",
                self.width, self.height
            )));
        }
        if self.episode_limit == 0 {
            return Err(Error::Config("episode_limit must be positive".into()));
        }
        if self.agents == 0 {
            return Err(Error::Config("at least one agent is required".into()));
        }
        match self.scenario {
            Scenario::Deception => {
                if self.adversaries == 0 {
                    return Err(Error::Config("deception needs at least one adversary".into()));
                }
                if self.landmarks == 0 {
                    return Err(Error::Config("deception needs at least one landmark".into()));
                }
            }
            Scenario::Jungle | Scenario::Battle => {}
        }
        let cells = self.width * self.height;
        let fixed = self.walls + self.foods + self.landmarks;
        let needed = fixed + self.total_agents();
        if needed > cells {
            return Err(Error::Config(format!(
                "{} entities cannot be placed on {} cells (one agent per free cell at start)",
                needed, cells
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentState {
    pub id: AgentId,
    pub team: u8,
    pub pos: Position,
    pub alive: bool,
    pub adjacency_streak: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Empty,
    Wall,
    Food,
    Landmark,
}

/// 3×3 patch centred on the observer, indexed `[row][col]` with row 0 at the
/// top, each cell holding [`OBS_CHANNELS`] values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub cells: [[[f64; OBS_CHANNELS]; 3]; 3],
}

impl Observation {
    pub fn get(&self, col: usize, row: usize, channel: usize) -> f64 {
        self.cells[row][col][channel]
    }

    /// Row-major cells, channels innermost.
    pub fn flatten(&self) -> [f64; OBS_LEN] {
        let mut out = [0.0; OBS_LEN];
        let mut k = 0;
        for row in &self.cells {
            for cell in row {
                for v in cell {
                    out[k] = *v;
                    k += 1;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// One entry per agent alive when the step started, ascending id.
    pub rewards: Vec<(AgentId, f64)>,
    pub deaths: Vec<AgentId>,
    pub done: bool,
    pub joint_return_sample: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    config: ScenarioConfig,
    cells: Vec<Cell>,
    landmarks: Vec<Position>,
    target: Option<usize>,
    agents: Vec<AgentState>,
    /// Alive agents per cell per team.
    occupancy: Vec<[u32; 2]>,
    time: u32,
    done: bool,
}

impl GridWorld {
    /// Places walls, foods, landmarks and agents uniformly at random over
    /// distinct cells. Agents get ids in team order.
    pub fn new<R: Rng + ?Sized>(config: ScenarioConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let n_cells = config.width * config.height;
        let team_sizes = config.team_sizes();
        let n_agents: usize = team_sizes.iter().sum();
        let total = config.walls + config.foods + config.landmarks + n_agents;
        let picks = index::sample(rng, n_cells, total).into_vec();

        let mut world = GridWorld {
            cells: vec![Cell::Empty; n_cells],
            landmarks: Vec::with_capacity(config.landmarks),
            target: None,
            agents: Vec::with_capacity(n_agents),
            occupancy: vec![[0, 0]; n_cells],
            time: 0,
            done: false,
            config,
        };
        let mut it = picks.into_iter();
        for _ in 0..world.config.walls {
            let c = it.next().expect("validated count");
            world.cells[c] = Cell::Wall;
        }
        for _ in 0..world.config.foods {
            let c = it.next().expect("validated count");
            world.cells[c] = Cell::Food;
        }
        for _ in 0..world.config.landmarks {
            let c = it.next().expect("validated count");
            world.cells[c] = Cell::Landmark;
            world.landmarks.push(world.position_of(c));
        }
        if !world.landmarks.is_empty() {
            world.target = Some(rng.gen_range(0..world.landmarks.len()));
        }
        for (team, &size) in team_sizes.iter().enumerate() {
            for _ in 0..size {
                let c = it.next().expect("validated count");
                let id = world.agents.len() as AgentId;
                world.agents.push(AgentState {
                    id,
                    team: team as u8,
                    pos: world.position_of(c),
                    alive: true,
                    adjacency_streak: 0,
                });
                world.occupancy[c][team] += 1;
            }
        }
        Ok(world)
    }

    /// Builds a world from an explicit layout. Agents are given as
    /// `(team, position)` and receive ids in order.
    pub fn from_layout(
        config: ScenarioConfig,
        walls: &[Position],
        foods: &[Position],
        landmarks: &[Position],
        target: Option<usize>,
        agents: &[(u8, Position)],
    ) -> Result<Self> {
        if config.width < 5 || config.height < 5 {
            return Err(Error::Config("grid must be at least 5x5".into()));
        }
        let n_cells = config.width * config.height;
        let mut world = GridWorld {
            cells: vec![Cell::Empty; n_cells],
            landmarks: Vec::new(),
            target: None,
            agents: Vec::with_capacity(agents.len()),
            occupancy: vec![[0, 0]; n_cells],
            time: 0,
            done: false,
            config,
        };
        let mark = |world: &mut GridWorld, p: Position, kind: Cell| -> Result<()> {
            let c = world
                .cell_index(p)
                .ok_or_else(|| Error::Config(format!("position {:?} out of bounds", p)))?;
            if world.cells[c] != Cell::Empty {
                return Err(Error::Config(format!("cell {:?} used twice", p)));
            }
            world.cells[c] = kind;
            Ok(())
        };
        for &p in walls {
            mark(&mut world, p, Cell::Wall)?;
        }
        for &p in foods {
            mark(&mut world, p, Cell::Food)?;
        }
        for &p in landmarks {
            mark(&mut world, p, Cell::Landmark)?;
            world.landmarks.push(p);
        }
        if let Some(t) = target {
            if t >= world.landmarks.len() {
                return Err(Error::Config("target landmark index out of range".into()));
            }
        }
        world.target = target;
        let teams = world.config.num_teams();
        for &(team, pos) in agents {
            if usize::from(team) >= teams {
                return Err(Error::Config(format!("team {} not in scenario", team)));
            }
            let c = world
                .cell_index(pos)
                .ok_or_else(|| Error::Config(format!("agent position {:?} out of bounds", pos)))?;
            if matches!(world.cells[c], Cell::Wall | Cell::Food) {
                return Err(Error::Config(format!("agent placed on obstacle {:?}", pos)));
            }
            let id = world.agents.len() as AgentId;
            world.agents.push(AgentState {
                id,
                team,
                pos,
                alive: true,
                adjacency_streak: 0,
            });
            world.occupancy[c][usize::from(team)] += 1;
        }
        Ok(world)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn scenario(&self) -> Scenario {
        self.config.scenario
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn height(&self) -> usize {
        self.config.height
    }

    pub fn time(&self) -> u32 {
        self.time
    }

    pub fn episode_limit(&self) -> u32 {
        self.config.episode_limit
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.get(id as usize)
    }

    pub fn alive_agents(&self) -> impl Iterator<Item = &AgentState> + '_ {
        self.agents.iter().filter(|a| a.alive)
    }

    pub fn alive_count(&self) -> usize {
        self.alive_agents().count()
    }

    pub fn alive_in_team(&self, team: u8) -> usize {
        self.alive_agents().filter(|a| a.team == team).count()
    }

    pub fn walls(&self) -> impl Iterator<Item = Position> + '_ {
        self.cells_of(Cell::Wall)
    }

    pub fn foods(&self) -> impl Iterator<Item = Position> + '_ {
        self.cells_of(Cell::Food)
    }

    pub fn landmarks(&self) -> &[Position] {
        &self.landmarks
    }

    pub fn target_landmark(&self) -> Option<Position> {
        self.target.map(|t| self.landmarks[t])
    }

    pub fn in_bounds(&self, p: Position) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.config.width && (p.y as usize) < self.config.height
    }

    pub fn cell_index(&self, p: Position) -> Option<usize> {
        self.in_bounds(p)
            .then(|| p.y as usize * self.config.width + p.x as usize)
    }

    pub fn is_wall(&self, p: Position) -> bool {
        self.cell_index(p).is_some_and(|c| self.cells[c] == Cell::Wall)
    }

    pub fn is_food(&self, p: Position) -> bool {
        self.cell_index(p).is_some_and(|c| self.cells[c] == Cell::Food)
    }

    pub fn is_landmark(&self, p: Position) -> bool {
        self.cell_index(p).is_some_and(|c| self.cells[c] == Cell::Landmark)
    }

    /// True for out-of-bounds cells, walls and food.
    pub fn is_obstacle(&self, p: Position) -> bool {
        match self.cell_index(p) {
            None => true,
            Some(c) => matches!(self.cells[c], Cell::Wall | Cell::Food),
        }
    }

    /// Alive agents of `team` on cell `p`.
    pub fn team_count_at(&self, p: Position, team: u8) -> u32 {
        self.cell_index(p)
            .map_or(0, |c| self.occupancy[c][usize::from(team)])
    }

    fn position_of(&self, c: usize) -> Position {
        Position::new((c % self.config.width) as i32, (c / self.config.width) as i32)
    }

    fn cells_of(&self, kind: Cell) -> impl Iterator<Item = Position> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(move |(_, c)| **c == kind)
            .map(|(i, _)| self.position_of(i))
    }

    fn live_agent(&self, id: AgentId) -> Result<&AgentState> {
        match self.agents.get(id as usize) {
            Some(a) if a.alive => Ok(a),
            _ => Err(Error::UnknownAgent(id)),
        }
    }

    /// Sum of per-team counts over the 3×3 block around `p`.
    fn block_counts(&self, p: Position) -> [u32; 2] {
        let mut out = [0, 0];
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(c) = self.cell_index(p.offset(dx, dy)) {
                    out[0] += self.occupancy[c][0];
                    out[1] += self.occupancy[c][1];
                }
            }
        }
        out
    }

    fn next_to_food(&self, p: Position) -> bool {
        (-1..=1).any(|dy| (-1..=1).any(|dx| (dx, dy) != (0, 0) && self.is_food(p.offset(dx, dy))))
    }

    pub fn legal_actions(&self, id: AgentId) -> Result<ActionSet> {
        let agent = self.live_agent(id)?;
        Ok(Action::ALL
            .into_iter()
            .filter(|a| {
                let (dx, dy) = a.delta();
                *a == Action::Idle || !self.is_obstacle(agent.pos.offset(dx, dy))
            })
            .collect())
    }

    pub fn observe(&self, id: AgentId) -> Result<Observation> {
        let agent = self.live_agent(id)?;
        let own = agent.team;
        let home_view = self.config.scenario == Scenario::Deception && own == 0;
        let mut obs = Observation {
            cells: [[[0.0; OBS_CHANNELS]; 3]; 3],
        };
        for (row, dy) in (-1..=1).enumerate() {
            for (col, dx) in (-1..=1).enumerate() {
                let p = agent.pos.offset(dx, dy);
                let cell = &mut obs.cells[row][col];
                let Some(c) = self.cell_index(p) else {
                    cell[CH_WALL] = 1.0;
                    continue;
                };
                match self.cells[c] {
                    Cell::Wall => cell[CH_WALL] = 1.0,
                    Cell::Food => cell[CH_FOOD] = 1.0,
                    Cell::Landmark => {
                        let is_target = self.target.is_some_and(|t| self.landmarks[t] == p);
                        cell[CH_LANDMARK] = if home_view && is_target {
                            TARGET_LANDMARK_VALUE
                        } else {
                            1.0
                        };
                    }
                    Cell::Empty => {}
                }
                let mut mine = self.occupancy[c][usize::from(own)];
                if (dx, dy) == (0, 0) {
                    mine -= 1;
                }
                cell[CH_OWN_TEAM] = f64::from(mine);
                cell[CH_OTHER_TEAM] = f64::from(self.occupancy[c][usize::from(1 - own)]);
            }
        }
        Ok(obs)
    }

    /// Advances one step. Agents missing from `joint` stay idle; illegal
    /// moves are coerced to idle.
    pub fn step<I>(&mut self, joint: I) -> Result<StepOutcome>
    where
        I: IntoIterator<Item = (AgentId, Action)>,
    {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let mut chosen: Vec<Option<Action>> = vec![None; self.agents.len()];
        for (id, a) in joint {
            self.live_agent(id)?;
            let slot = &mut chosen[id as usize];
            if slot.is_some() {
                return Err(Error::DuplicateAgent(id));
            }
            *slot = Some(a);
        }

        let started: Vec<AgentId> = self.alive_agents().map(|a| a.id).collect();

        // Destinations are computed against static obstacles only, so the
        // moves commute and can be applied in any order.
        for &id in &started {
            let i = id as usize;
            let a = chosen[i].unwrap_or(Action::Idle);
            let (dx, dy) = a.delta();
            let from = self.agents[i].pos;
            let to = from.offset(dx, dy);
            if a == Action::Idle || self.is_obstacle(to) {
                continue;
            }
            let team = usize::from(self.agents[i].team);
            let fc = self.cell_index(from).expect("agents stay in bounds");
            let tc = self.cell_index(to).expect("checked by is_obstacle");
            self.occupancy[fc][team] -= 1;
            self.occupancy[tc][team] += 1;
            self.agents[i].pos = to;
        }
        self.time += 1;

        let mut deaths = Vec::new();
        match self.config.scenario {
            Scenario::Jungle => {
                for &id in &started {
                    let a = &self.agents[id as usize];
                    let [c0, c1] = self.block_counts(a.pos);
                    let others = c0 + c1 - 1;
                    let streak = if others > 0 { a.adjacency_streak + 1 } else { 0 };
                    self.agents[id as usize].adjacency_streak = streak;
                    if streak >= JUNGLE_KILL_STREAK {
                        deaths.push(id);
                    }
                }
            }
            Scenario::Battle => {
                for &id in &started {
                    let a = &self.agents[id as usize];
                    let counts = self.block_counts(a.pos);
                    if counts[usize::from(1 - a.team)] >= BATTLE_KILL_OPPONENTS {
                        deaths.push(id);
                    }
                }
            }
            Scenario::Deception => {}
        }
        for &id in &deaths {
            let a = &mut self.agents[id as usize];
            a.alive = false;
            let team = usize::from(a.team);
            let pos = a.pos;
            let c = self.cell_index(pos).expect("agents stay in bounds");
            self.occupancy[c][team] -= 1;
        }

        let limit_reached = self.time >= self.config.episode_limit;
        self.done = match self.config.scenario {
            Scenario::Jungle => limit_reached || self.alive_count() <= 1,
            Scenario::Battle => {
                limit_reached || self.alive_in_team(0) == 0 || self.alive_in_team(1) == 0
            }
            Scenario::Deception => limit_reached,
        };

        let rewards: Vec<(AgentId, f64)> = started
            .iter()
            .map(|&id| (id, self.reward_for(id)))
            .collect();
        let joint_return_sample = if rewards.is_empty() {
            0.0
        } else {
            rewards.iter().map(|(_, r)| r).sum::<f64>() / rewards.len() as f64
        };
        Ok(StepOutcome {
            rewards,
            deaths,
            done: self.done,
            joint_return_sample,
        })
    }

    fn reward_for(&self, id: AgentId) -> f64 {
        let agent = &self.agents[id as usize];
        match self.config.scenario {
            Scenario::Jungle => {
                if self.next_to_food(agent.pos) {
                    1.0
                } else {
                    0.0
                }
            }
            Scenario::Battle => {
                if !self.done {
                    return 0.0;
                }
                let own = self.alive_in_team(agent.team);
                let other = self.alive_in_team(1 - agent.team);
                match own.cmp(&other) {
                    core::cmp::Ordering::Greater => 1.0,
                    core::cmp::Ordering::Less => -1.0,
                    core::cmp::Ordering::Equal => 0.0,
                }
            }
            Scenario::Deception => {
                if !self.done {
                    return 0.0;
                }
                let Some(target) = self.target_landmark() else {
                    return 0.0;
                };
                let adversary_found = self.team_count_at(target, 1) > 0;
                let home_holds = self.team_count_at(target, 0) > 0;
                let success = if agent.team == 0 {
                    !adversary_found && home_holds
                } else {
                    agent.pos == target
                };
                if success {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn jungle_layout(foods: &[Position], agents: &[(u8, Position)]) -> GridWorld {
        GridWorld::from_layout(ScenarioConfig::jungle(10, 10, agents.len(), foods.len()), &[], foods, &[], None, agents)
            .unwrap()
    }

    #[test]
    fn new_scenario_places_entities() {
        let cfg = ScenarioConfig::jungle(10, 10, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = GridWorld::new(cfg, &mut rng).unwrap();
        assert_eq!(w.alive_count(), 4);
        assert_eq!(w.foods().count(), 3);
        assert_eq!(w.time(), 0);
        for a in w.agents() {
            assert!(!w.is_obstacle(a.pos));
        }
    }

    #[test]
    fn new_scenario_is_deterministic() {
        let cfg = ScenarioConfig::jungle(10, 10, 4, 3);
        let a = GridWorld::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = GridWorld::new(cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overfull_battle_is_rejected() {
        let cfg = ScenarioConfig::battle(5, 5, 20);
        let err = GridWorld::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn tiny_grid_is_rejected() {
        let cfg = ScenarioConfig::jungle(4, 10, 1, 0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn legal_actions_at_corner() {
        let w = jungle_layout(&[], &[(0, Position::new(0, 0))]);
        let legal = w.legal_actions(0).unwrap();
        let expected: ActionSet = [Action::Down, Action::Right, Action::Idle].into_iter().collect();
        assert_eq!(legal, expected);
    }

    #[test]
    fn legal_actions_blocked_by_wall() {
        let cfg = ScenarioConfig::jungle(10, 10, 1, 0);
        let w = GridWorld::from_layout(cfg, &[Position::new(5, 4)], &[], &[], None, &[(0, Position::new(4, 4))])
            .unwrap();
        let legal = w.legal_actions(0).unwrap();
        assert_eq!(legal.len(), 4);
        assert!(!legal.contains(Action::Right));
    }

    #[test]
    fn legal_actions_ignore_other_agents() {
        let c = Position::new(4, 4);
        let w = jungle_layout(
            &[],
            &[
                (0, c),
                (0, c.offset(0, -1)),
                (0, c.offset(0, 1)),
                (0, c.offset(-1, 0)),
                (0, c.offset(1, 0)),
            ],
        );
        assert_eq!(w.legal_actions(0).unwrap().len(), 5);
    }

    #[test]
    fn legal_actions_unknown_agent() {
        let w = jungle_layout(&[], &[(0, Position::new(1, 1))]);
        assert_eq!(w.legal_actions(3), Err(Error::UnknownAgent(3)));
    }

    #[test]
    fn observe_empty_interior_is_zero() {
        let w = jungle_layout(&[], &[(0, Position::new(4, 4))]);
        let obs = w.observe(0).unwrap();
        assert!(obs.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn observe_corner_flags_five_walls() {
        let w = jungle_layout(&[], &[(0, Position::new(0, 0))]);
        let obs = w.observe(0).unwrap();
        let walls = (0..3)
            .flat_map(|r| (0..3).map(move |c| (c, r)))
            .filter(|&(c, r)| obs.get(c, r, CH_WALL) == 1.0)
            .count();
        assert_eq!(walls, 5);
    }

    #[test]
    fn observe_food_above() {
        let w = jungle_layout(&[Position::new(4, 3)], &[(0, Position::new(4, 4))]);
        let obs = w.observe(0).unwrap();
        assert_eq!(obs.get(1, 0, CH_FOOD), 1.0);
        assert_eq!(obs.flatten().iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn observe_excludes_self_and_counts_teams() {
        let cfg = ScenarioConfig::battle(8, 8, 2);
        let p = Position::new(3, 3);
        let w = GridWorld::from_layout(cfg, &[], &[], &[], None, &[(0, p), (0, p), (1, p), (1, p.offset(1, 1))]).unwrap();
        let obs = w.observe(0).unwrap();
        assert_eq!(obs.get(1, 1, CH_OWN_TEAM), 1.0);
        assert_eq!(obs.get(1, 1, CH_OTHER_TEAM), 1.0);
        assert_eq!(obs.get(2, 2, CH_OTHER_TEAM), 1.0);
    }

    #[test]
    fn deception_target_visible_only_to_home() {
        let cfg = ScenarioConfig::deception(8, 8, 1, 2);
        let lm = [Position::new(2, 2), Position::new(6, 6)];
        let w = GridWorld::from_layout(cfg, &[], &[], &lm, Some(0), &[(0, Position::new(2, 3)), (1, Position::new(3, 3))])
            .unwrap();
        assert_eq!(w.observe(0).unwrap().get(1, 0, CH_LANDMARK), TARGET_LANDMARK_VALUE);
        assert_eq!(w.observe(1).unwrap().get(0, 0, CH_LANDMARK), 1.0);
    }

    #[test]
    fn jungle_food_reward() {
        let mut w = jungle_layout(&[Position::new(4, 3)], &[(0, Position::new(4, 4)), (0, Position::new(8, 8))]);
        let out = w.step([(0, Action::Idle), (1, Action::Idle)]).unwrap();
        assert_eq!(out.rewards, vec![(0, 1.0), (1, 0.0)]);
        assert_eq!(out.joint_return_sample, 0.5);
    }

    #[test]
    fn jungle_third_consecutive_adjacency_kills() {
        let mut w = jungle_layout(&[], &[(0, Position::new(4, 4)), (0, Position::new(5, 4)), (0, Position::new(0, 9))]);
        for _ in 0..2 {
            let out = w.step([]).unwrap();
            assert!(out.deaths.is_empty());
        }
        assert_eq!(w.agent(0).unwrap().adjacency_streak, 2);
        let out = w.step([]).unwrap();
        assert_eq!(out.deaths, vec![0, 1]);
    }

    #[test]
    fn jungle_streak_resets_when_isolated() {
        let mut w = jungle_layout(&[], &[(0, Position::new(4, 4)), (0, Position::new(5, 4)), (0, Position::new(0, 9))]);
        w.step([]).unwrap();
        w.step([]).unwrap();
        // moves resolve before kills: (4,4) and (6,4) are not adjacent
        w.step([(1, Action::Right)]).unwrap();
        assert_eq!(w.agent(0).unwrap().adjacency_streak, 0);
        assert!(w.agent(0).unwrap().alive);
    }

    #[test]
    fn battle_two_opponents_survive_three_kill() {
        let cfg = ScenarioConfig::battle(8, 8, 3);
        let c = Position::new(3, 3);
        let agents = [(0, c), (1, c.offset(-1, 0)), (1, c.offset(1, 0)), (0, Position::new(7, 7)), (0, Position::new(7, 0)), (1, Position::new(0, 7))];
        let mut w = GridWorld::from_layout(cfg.clone(), &[], &[], &[], None, &agents).unwrap();
        let out = w.step([]).unwrap();
        assert!(out.deaths.is_empty());

        let mut agents3 = agents;
        agents3[5] = (1, c.offset(0, 1));
        let mut w = GridWorld::from_layout(cfg, &[], &[], &[], None, &agents3).unwrap();
        let out = w.step([]).unwrap();
        assert_eq!(out.deaths, vec![0]);
    }

    #[test]
    fn battle_terminal_rewards() {
        let cfg = ScenarioConfig::battle(12, 12, 5).with_episode_limit(1);
        let mut agents = Vec::new();
        for i in 0..5 {
            agents.push((0u8, Position::new(2 * i, 0)));
        }
        for i in 0..3 {
            agents.push((1u8, Position::new(2 * i, 11)));
        }
        let mut w = GridWorld::from_layout(cfg, &[], &[], &[], None, &agents).unwrap();
        let out = w.step([]).unwrap();
        assert!(out.done);
        for (id, r) in out.rewards {
            let expected = if id < 5 { 1.0 } else { -1.0 };
            assert_eq!(r, expected);
        }
    }

    #[test]
    fn battle_tie_is_zero() {
        let cfg = ScenarioConfig::battle(10, 10, 2).with_episode_limit(2);
        let agents = [(0, Position::new(0, 0)), (0, Position::new(9, 0)), (1, Position::new(0, 9)), (1, Position::new(9, 9))];
        let mut w = GridWorld::from_layout(cfg, &[], &[], &[], None, &agents).unwrap();
        let first = w.step([]).unwrap();
        assert!(first.rewards.iter().all(|(_, r)| *r == 0.0));
        let last = w.step([]).unwrap();
        assert!(last.done);
        assert!(last.rewards.iter().all(|(_, r)| *r == 0.0));
        assert_eq!(w.step([]), Err(Error::EpisodeFinished));
    }

    #[test]
    fn deception_terminal_rewards() {
        let cfg = ScenarioConfig::deception(8, 8, 2, 2).with_episode_limit(1);
        let lm = [Position::new(2, 2), Position::new(6, 6)];
        let agents = [(0, Position::new(2, 2)), (0, Position::new(5, 5)), (1, Position::new(6, 5))];
        let mut w = GridWorld::from_layout(cfg.clone(), &[], &[], &lm, Some(0), &agents).unwrap();
        let out = w.step([(2, Action::Down)]).unwrap();
        assert_eq!(out.rewards, vec![(0, 1.0), (1, 1.0), (2, -1.0)]);

        let agents = [(0, Position::new(2, 2)), (0, Position::new(5, 5)), (1, Position::new(2, 3))];
        let mut w = GridWorld::from_layout(cfg, &[], &[], &lm, Some(0), &agents).unwrap();
        let out = w.step([(2, Action::Up)]).unwrap();
        assert_eq!(out.rewards, vec![(0, -1.0), (1, -1.0), (2, 1.0)]);
    }

    #[test]
    fn illegal_move_is_coerced_to_idle() {
        let mut w = jungle_layout(&[Position::new(5, 4)], &[(0, Position::new(4, 4))]);
        w.step([(0, Action::Right)]).unwrap();
        assert_eq!(w.agent(0).unwrap().pos, Position::new(4, 4));
    }

    #[test]
    fn step_rejects_dead_and_duplicate_agents() {
        let mut w = jungle_layout(&[], &[(0, Position::new(4, 4)), (0, Position::new(8, 8))]);
        assert_eq!(w.step([(5, Action::Idle)]), Err(Error::UnknownAgent(5)));
        assert_eq!(w.step([(0, Action::Idle), (0, Action::Up)]), Err(Error::DuplicateAgent(0)));
    }
}
