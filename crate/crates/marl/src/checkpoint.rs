//! Versioned little-endian binary checkpoints.
//!
//! Layout: magic `MARLCKPT`, u32 version, u8 algorithm, u32 hidden,
//! u32 rounds, u32 n_max, f64 delta_d, u64 seed, u64 batches_done, u32 team
//! count, then per team a presence byte followed by the policy vector, its
//! Adam state, an optional critic vector with Adam state, and the plateau
//! schedule. Vectors are a u64 length and raw f64 values.

use std::path::Path;

use marl_core::nn::{AdamState, Params, PlateauSchedule};
use marl_core::rl::{Algorithm, TeamLearner, Trainer};

use crate::config::RunConfig;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"MARLCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub algorithm: Algorithm,
    pub hidden: u32,
    pub rounds: u32,
    pub n_max: u32,
    pub delta_d: f64,
    pub seed: u64,
    pub batches_done: u64,
    pub learners: Vec<Option<TeamLearner>>,
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer) -> Self {
        Self {
            algorithm: t.config.algorithm,
            hidden: t.network.hidden as u32,
            rounds: t.network.rounds as u32,
            n_max: t.network.encoding.n_max as u32,
            delta_d: t.network.encoding.delta_d,
            seed: t.seed,
            batches_done: t.batches_done,
            learners: t.learners.clone(),
        }
    }

    /// Builds a trainer for `cfg` carrying the stored parameters. Every
    /// stored shape must match what `cfg` implies.
    pub fn into_trainer(self, cfg: &RunConfig) -> Result<Trainer> {
        let teams = cfg.scenario_config().num_teams();
        let mut t = Trainer::new(
            cfg.scenario_config(),
            cfg.trainer_config(),
            cfg.network_config(),
            &vec![false; teams],
            cfg.run.seed,
        )?;
        let mismatch = |what: &str, want: String, got: String| {
            Err(Error::ShapeMismatch(format!("{what}: config implies {want}, checkpoint has {got}")))
        };
        if self.algorithm != t.config.algorithm {
            return mismatch("algorithm", format!("{:?}", t.config.algorithm), format!("{:?}", self.algorithm));
        }
        let net = (t.network.hidden as u32, t.network.rounds as u32, t.network.encoding.n_max as u32);
        if net != (self.hidden, self.rounds, self.n_max) {
            return mismatch(
                "network (hidden, rounds, n_max)",
                format!("{net:?}"),
                format!("{:?}", (self.hidden, self.rounds, self.n_max)),
            );
        }
        if self.learners.len() != teams {
            return mismatch("team count", teams.to_string(), self.learners.len().to_string());
        }
        let p_len = t.policy_net.num_params();
        let c_len = t.critic_net.as_ref().map(|c| c.num_params());
        for (i, l) in self.learners.iter().enumerate() {
            let Some(l) = l else { continue };
            if l.policy.len() != p_len || l.policy_adam.m.len() != p_len || l.policy_adam.v.len() != p_len {
                return mismatch(&format!("team {i} policy length"), p_len.to_string(), l.policy.len().to_string());
            }
            let stored = l.critic.as_ref().map(|c| c.len());
            if stored != c_len {
                return mismatch(&format!("team {i} critic length"), format!("{c_len:?}"), format!("{stored:?}"));
            }
            if let (Some(c), Some(a)) = (c_len, &l.critic_adam) {
                if a.m.len() != c || a.v.len() != c {
                    return mismatch(&format!("team {i} critic optimiser"), c.to_string(), a.m.len().to_string());
                }
            }
        }
        t.learners = self.learners;
        t.batches_done = self.batches_done;
        t.seed = self.seed;
        Ok(t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&VERSION.to_le_bytes());
        w.push(algorithm_tag(self.algorithm));
        for x in [self.hidden, self.rounds, self.n_max] {
            w.extend_from_slice(&x.to_le_bytes());
        }
        w.extend_from_slice(&self.delta_d.to_le_bytes());
        w.extend_from_slice(&self.seed.to_le_bytes());
        w.extend_from_slice(&self.batches_done.to_le_bytes());
        w.extend_from_slice(&(self.learners.len() as u32).to_le_bytes());
        for l in &self.learners {
            let Some(l) = l else {
                w.push(0);
                continue;
            };
            w.push(1);
            put_vec(&mut w, l.policy.values());
            put_adam(&mut w, &l.policy_adam);
            match (&l.critic, &l.critic_adam) {
                (Some(c), Some(a)) => {
                    w.push(1);
                    put_vec(&mut w, c.values());
                    put_adam(&mut w, a);
                }
                _ => w.push(0),
            }
            let s = &l.schedule;
            w.extend_from_slice(&s.best.to_le_bytes());
            w.extend_from_slice(&s.stale.to_le_bytes());
            w.extend_from_slice(&s.factor.to_le_bytes());
            w.extend_from_slice(&s.patience.to_le_bytes());
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let algorithm = match r.u8()? {
            0 => Algorithm::GraphAc,
            1 => Algorithm::GraphPg,
            2 => Algorithm::VanillaPg,
            t => return Err(Error::Checkpoint(format!("unknown algorithm tag {t}"))),
        };
        let hidden = r.u32()?;
        let rounds = r.u32()?;
        let n_max = r.u32()?;
        let delta_d = r.f64()?;
        let seed = r.u64()?;
        let batches_done = r.u64()?;
        let teams = r.u32()?;
        let mut learners = Vec::new();
        for _ in 0..teams {
            if !r.flag()? {
                learners.push(None);
                continue;
            }
            let policy = Params::from_vec(r.vec()?);
            let policy_adam = r.adam()?;
            let (critic, critic_adam) = if r.flag()? {
                (Some(Params::from_vec(r.vec()?)), Some(r.adam()?))
            } else {
                (None, None)
            };
            let schedule = PlateauSchedule {
                best: r.f64()?,
                stale: r.u32()?,
                factor: r.f64()?,
                patience: r.u32()?,
            };
            learners.push(Some(TeamLearner {
                policy,
                policy_adam,
                critic,
                critic_adam,
                schedule,
            }));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            algorithm,
            hidden,
            rounds,
            n_max,
            delta_d,
            seed,
            batches_done,
            learners,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(Error::io(path))?)
    }
}

fn algorithm_tag(a: Algorithm) -> u8 {
    match a {
        Algorithm::GraphAc => 0,
        Algorithm::GraphPg => 1,
        Algorithm::VanillaPg => 2,
    }
}

fn put_vec(w: &mut Vec<u8>, v: &[f64]) {
    w.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for x in v {
        w.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_adam(w: &mut Vec<u8>, a: &AdamState) {
    w.extend_from_slice(&a.step.to_le_bytes());
    for x in [a.beta1, a.beta2, a.eps, a.learning_rate] {
        w.extend_from_slice(&x.to_le_bytes());
    }
    put_vec(w, &a.m);
    put_vec(w, &a.v);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Checkpoint(format!("bad presence byte {b}"))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn vec(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(Error::Checkpoint("vector length exceeds file size".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn adam(&mut self) -> Result<AdamState> {
        Ok(AdamState {
            step: self.u64()?,
            beta1: self.f64()?,
            beta2: self.f64()?,
            eps: self.f64()?,
            learning_rate: self.f64()?,
            m: self.vec()?,
            v: self.vec()?,
        })
    }
}
