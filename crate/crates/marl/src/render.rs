//! Per-step frame records (JSON lines) and portable pixmap images.

use std::io::Write;

use marl_core::{GridWorld, Position};
use serde::{Deserialize, Serialize};

pub const FRAME_SCHEMA: &str = "marl-frame";
pub const FRAME_VERSION: u32 = 1;
/// Pixels per grid cell in rendered images.
pub const CELL_PX: usize = 8;

const BACKGROUND: [u8; 3] = [235, 235, 235];
const WALL: [u8; 3] = [40, 40, 40];
const FOOD: [u8; 3] = [40, 170, 60];
const LANDMARK: [u8; 3] = [230, 200, 30];
const TEAM: [[u8; 3]; 2] = [[210, 40, 40], [40, 70, 210]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameHeader {
    pub schema: String,
    pub version: u32,
}

impl Default for FrameHeader {
    fn default() -> Self {
        Self {
            schema: FRAME_SCHEMA.into(),
            version: FRAME_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAgent {
    pub id: u32,
    pub team: u8,
    pub x: i32,
    pub y: i32,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub episode: u64,
    pub time: u32,
    pub width: usize,
    pub height: usize,
    pub walls: Vec<[i32; 2]>,
    pub foods: Vec<[i32; 2]>,
    pub landmarks: Vec<[i32; 2]>,
    /// The Deception target landmark. Recorded here but not drawn.
    pub target: Option<[i32; 2]>,
    pub agents: Vec<FrameAgent>,
    pub rewards: Vec<(u32, f64)>,
    pub done: bool,
}

fn xy(p: Position) -> [i32; 2] {
    [p.x, p.y]
}

impl Frame {
    pub fn capture(world: &GridWorld, episode: u64, rewards: &[(u32, f64)], done: bool) -> Self {
        Self {
            episode,
            time: world.time(),
            width: world.width(),
            height: world.height(),
            walls: world.walls().map(xy).collect(),
            foods: world.foods().map(xy).collect(),
            landmarks: world.landmarks().iter().copied().map(xy).collect(),
            target: world.target_landmark().map(xy),
            agents: world
                .agents()
                .iter()
                .map(|a| FrameAgent {
                    id: a.id,
                    team: a.team,
                    x: a.pos.x,
                    y: a.pos.y,
                    alive: a.alive,
                })
                .collect(),
            rewards: rewards.to_vec(),
            done,
        }
    }

    /// RGB pixels, row-major, `CELL_PX` pixels per cell.
    pub fn pixels(&self) -> (usize, usize, Vec<u8>) {
        let (w, h) = (self.width * CELL_PX, self.height * CELL_PX);
        let mut px = vec![0u8; w * h * 3];
        for c in px.chunks_mut(3) {
            c.copy_from_slice(&BACKGROUND);
        }
        let mut fill = |[x, y]: [i32; 2], colour: [u8; 3], inset: usize| {
            if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
                return;
            }
            for dy in inset..CELL_PX - inset {
                for dx in inset..CELL_PX - inset {
                    let i = ((y as usize * CELL_PX + dy) * w + x as usize * CELL_PX + dx) * 3;
                    px[i..i + 3].copy_from_slice(&colour);
                }
            }
        };
        for &p in &self.walls {
            fill(p, WALL, 0);
        }
        for &p in &self.foods {
            fill(p, FOOD, 0);
        }
        for &p in &self.landmarks {
            fill(p, LANDMARK, 0);
        }
        for a in self.agents.iter().filter(|a| a.alive) {
            fill([a.x, a.y], TEAM[a.team as usize % 2], 1);
        }
        (w, h, px)
    }

    pub fn write_ppm(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let (w, h, px) = self.pixels();
        write!(out, "P6\n{w} {h}\n255\n")?;
        out.write_all(&px)
    }
}
