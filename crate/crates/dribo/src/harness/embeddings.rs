use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::agents::{ppo_act, sac_act, ActorState, DiscreteActorState};
use crate::error::{Error, Result};
use crate::harness::trainer::{AgentState, Trainer};
use crate::worlds::{DistractorControl, EnvMode};

/// One exported row: the representation, the reward collected at that step,
/// and the background generator id.
pub struct EmbeddingRow {
    pub repr: Vec<f64>,
    pub reward: f64,
    pub background_id: u64,
}

/// Roll deterministic episodes and write one CSV row per step:
/// `s_0,...,s_{D-1},reward,background_id` with a header line. Values are
/// printed with enough digits to parse back bit-exactly.
pub fn export_embeddings(
    trainer: &Trainer,
    episodes: usize,
    mode: EnvMode,
    path: &Path,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EmbeddingRow>> {
    if episodes == 0 {
        return Err(Error::contract("export needs at least one episode"));
    }
    let mut env = DistractorControl::new(trainer.cfg.env_config())?;
    let dim = trainer.model.cfg.repr_dim();
    let mut rows: Vec<EmbeddingRow> = Vec::new();
    for _ in 0..episodes {
        let mut frame = env.reset(mode, rng);
        let bg = env.background_id();
        match &trainer.agent {
            AgentState::Sac(agent) => {
                let mut state = ActorState::initial(&trainer.model, 1);
                loop {
                    let (action, next) =
                        sac_act(agent, &trainer.model, &frame, &state, true, rng)?;
                    let mut repr = next.h.data().to_vec();
                    repr.extend_from_slice(next.z.data());
                    state = next;
                    let (obs, reward, done) = env.step(&action)?;
                    frame = obs;
                    rows.push(EmbeddingRow {
                        repr,
                        reward,
                        background_id: bg,
                    });
                    if done {
                        break;
                    }
                }
            }
            AgentState::Ppo(agent) => {
                let mut state = DiscreteActorState::initial(&trainer.model);
                loop {
                    let d = ppo_act(agent, &trainer.model, &frame, &state, true, rng)?;
                    let mut repr = d.next_state.h.data().to_vec();
                    repr.extend_from_slice(d.next_state.z.data());
                    state = d.next_state;
                    let (obs, reward, done) = env.step_discrete(d.action)?;
                    frame = obs;
                    rows.push(EmbeddingRow {
                        repr,
                        reward,
                        background_id: bg,
                    });
                    if done {
                        break;
                    }
                }
            }
        }
    }

    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (0..dim).map(|i| format!("s_{i}")).collect();
    writeln!(w, "{},reward,background_id", header.join(","))?;
    for row in &rows {
        let cells: Vec<String> = row.repr.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(
            w,
            "{},{:.16e},{}",
            cells.join(","),
            row.reward,
            row.background_id
        )?;
    }
    w.flush()?;
    Ok(rows)
}

/// Parse an exported embeddings file back into rows.
pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty embeddings file".into()))??;
    let dim = header.split(',').count() - 2;
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != dim + 2 {
            return Err(Error::Config("embedding row arity".into()));
        }
        let repr: Vec<f64> = cells[..dim]
            .iter()
            .map(|c| c.parse().map_err(|_| Error::Config("bad float".into())))
            .collect::<Result<_>>()?;
        let reward = cells[dim]
            .parse()
            .map_err(|_| Error::Config("bad reward".into()))?;
        let background_id = cells[dim + 1]
            .parse()
            .map_err(|_| Error::Config("bad background id".into()))?;
        rows.push(EmbeddingRow {
            repr,
            reward,
            background_id,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RunConfig;
    use rand::SeedableRng;

    #[test]
    fn row_count_is_episodes_times_steps_and_parses_back_losslessly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        let mut cfg = RunConfig::small_sac();
        cfg.env.episode_len = 6;
        cfg.run.batch_t = 4;
        let trainer = Trainer::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = export_embeddings(&trainer, 3, EnvMode::Test, &path, &mut rng).unwrap();
        assert_eq!(rows.len(), 3 * 6);
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(back.iter()) {
            assert_eq!(a.reward.to_bits(), b.reward.to_bits());
            assert_eq!(a.background_id, b.background_id);
            for (x, y) in a.repr.iter().zip(b.repr.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
