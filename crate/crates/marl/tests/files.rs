use marl::checkpoint::Checkpoint;
use marl::commands::{new_trainer, train_batch};
use marl::metrics::{read_metrics, MetricsRow, MetricsWriter, COLUMNS};
use marl::render::{Frame, FrameAgent, CELL_PX};
use marl::{Error, RunConfig};

fn small(kind: &str, algorithm: &str) -> RunConfig {
    let mut cfg = RunConfig::from_toml(&format!(
        "[scenario]\nkind = \"{kind}\"\nwidth = 8\nheight = 8\nagents = 3\nfoods = 2\nepisode_limit = 6\n\
         [trainer]\nalgorithm = \"{algorithm}\"\nbatch_episodes = 2\n[network]\nhidden = 4\n"
    ))
    .unwrap();
    cfg.run.parallel = false;
    cfg
}

#[test]
fn metrics_rows_parse_back_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let rows = vec![
        MetricsRow {
            batch: 0,
            team: 0,
            mean_reward: 0.1 + 0.2,
            win_rate: None,
            lr: Some(0.01 * 0.95),
            seconds: Some(1.0 / 3.0),
            mean_alive: 7.25,
        },
        MetricsRow {
            batch: 0,
            team: 1,
            mean_reward: -1.0,
            win_rate: Some(0.5),
            lr: None,
            seconds: None,
            mean_alive: 0.0,
        },
    ];
    let mut w = MetricsWriter::create(&path).unwrap();
    for r in &rows {
        w.write(r).unwrap();
    }
    w.flush().unwrap();
    drop(w);
    assert_eq!(read_metrics(&path).unwrap(), rows);
    let text = std::fs::read_to_string(&path).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, COLUMNS.join(","));
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    for (kind, alg) in [("jungle", "qmarl-ac"), ("battle", "qmarl-pg"), ("deception", "vanilla-pg")] {
        let mut cfg = small(kind, alg);
        cfg.scenario.landmarks = 2;
        let mut t = new_trainer(&cfg).unwrap();
        train_batch(&mut t, false).unwrap();
        let bytes = Checkpoint::from_trainer(&t).to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let t2 = back.into_trainer(&cfg).unwrap();
        assert_eq!(t2.learners, t.learners);
        assert_eq!(t2.batches_done, 1);
    }
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("jungle", "qmarl-ac");
    let t = new_trainer(&cfg).unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    Checkpoint::from_trainer(&t).save(&a).unwrap();
    Checkpoint::load(&a).unwrap().save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn shape_mismatch_on_load() {
    let cfg = small("jungle", "qmarl-ac");
    let ck = Checkpoint::from_trainer(&new_trainer(&cfg).unwrap());
    let mut wider = cfg.clone();
    wider.network.hidden = 5;
    assert!(matches!(ck.clone().into_trainer(&wider), Err(Error::ShapeMismatch(_))));
    let mut other = cfg.clone();
    other.trainer.algorithm = marl::config::AlgorithmName::QmarlPg;
    assert!(matches!(ck.clone().into_trainer(&other), Err(Error::ShapeMismatch(_))));
    let mut battle = small("battle", "qmarl-ac");
    battle.scenario.agents = 2;
    assert!(matches!(ck.clone().into_trainer(&battle), Err(Error::ShapeMismatch(_))));
    let mut edge = cfg.clone();
    edge.network.n_max = 6;
    assert!(matches!(ck.into_trainer(&edge), Err(Error::ShapeMismatch(_))));
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let cfg = small("jungle", "qmarl-ac");
    let bytes = Checkpoint::from_trainer(&new_trainer(&cfg).unwrap()).to_bytes();
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(_))));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(Checkpoint::from_bytes(&extra), Err(Error::Checkpoint(_))));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&magic), Err(Error::Checkpoint(_))));
    let mut version = bytes;
    version[8] = 9;
    assert!(matches!(Checkpoint::from_bytes(&version), Err(Error::Checkpoint(_))));
}

#[test]
fn ppm_colours() {
    let frame = Frame {
        episode: 0,
        time: 1,
        width: 4,
        height: 2,
        walls: vec![[0, 0]],
        foods: vec![[1, 0]],
        landmarks: vec![[2, 0], [3, 0]],
        target: Some([3, 0]),
        agents: vec![
            FrameAgent { id: 0, team: 0, x: 0, y: 1, alive: true },
            FrameAgent { id: 1, team: 1, x: 1, y: 1, alive: true },
            FrameAgent { id: 2, team: 0, x: 2, y: 1, alive: false },
        ],
        rewards: vec![],
        done: false,
    };
    let mut buf = Vec::new();
    frame.write_ppm(&mut buf).unwrap();
    let header = format!("P6\n{} {}\n255\n", 4 * CELL_PX, 2 * CELL_PX);
    assert!(buf.starts_with(header.as_bytes()));
    let px = &buf[header.len()..];
    assert_eq!(px.len(), 4 * CELL_PX * 2 * CELL_PX * 3);
    let at = |cx: usize, cy: usize| {
        let i = ((cy * CELL_PX + CELL_PX / 2) * 4 * CELL_PX + cx * CELL_PX + CELL_PX / 2) * 3;
        [px[i], px[i + 1], px[i + 2]]
    };
    let wall = at(0, 0);
    assert!(wall.iter().all(|&c| c < 80));
    let food = at(1, 0);
    assert!(food[1] > food[0] && food[1] > food[2]);
    // the target is drawn like every other landmark
    assert_eq!(at(2, 0), at(3, 0));
    let yellow = at(2, 0);
    assert!(yellow[0] > 150 && yellow[1] > 150 && yellow[2] < 100);
    let red = at(0, 1);
    let blue = at(1, 1);
    assert!(red[0] > red[2] && blue[2] > blue[0]);
    assert_eq!(at(2, 1), at(3, 1));
}
