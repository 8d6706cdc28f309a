//! Whole-team checkpoints as structured text: a magic line, the episode
//! counter, the resolved config, then one line per parameter tensor.
//! Values use Rust's shortest round-trip float formatting, so a save/load
//! cycle is bit-exact.  Optimizer state is not persisted; a resumed run
//! restarts Adam's moment estimates.

use super::config::ExperimentConfig;
use super::train::build_team;
use super::HarnessError;
use crate::autodiff::Tensor;
use crate::learner::AgentLearner;
use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

pub const CHECKPOINT_MAGIC: &str = "mahsac-checkpoint-v1";

#[derive(Debug)]
pub struct Checkpoint {
    pub episode: u64,
    pub config: ExperimentConfig,
    pub learners: Vec<AgentLearner>,
}

pub fn save_checkpoint(
    path: &Path,
    episode: u64,
    config: &ExperimentConfig,
    learners: &[AgentLearner],
) -> Result<(), HarnessError> {
    let mut text = String::new();
    text.push_str(CHECKPOINT_MAGIC);
    text.push('\n');
    text.push_str(&format!("episode {episode}\n"));
    text.push_str("config-begin\n");
    text.push_str(&config.to_text());
    text.push_str("config-end\n");
    for (i, learner) in learners.iter().enumerate() {
        for (name, tensor) in learner.named_params() {
            let dims: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
            let values: Vec<String> = tensor.data().iter().map(|v| format!("{v:?}")).collect();
            text.push_str(&format!(
                "param agent{i}.{name} [{}] = {}\n",
                dims.join(","),
                values.join(" ")
            ));
        }
    }

    // Write-then-rename so an interrupted save never leaves a torn file.
    let tmp = path.with_extension("tmp");
    let mut file = std::fs::File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| HarnessError::io(&tmp, e))?;
    file.sync_all().map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

fn ckpt_err(path: &Path, detail: impl std::fmt::Display) -> HarnessError {
    HarnessError::Checkpoint(format!("{}: {detail}", path.display()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = text.lines().enumerate();

    let (_, magic) = lines
        .next()
        .ok_or_else(|| ckpt_err(path, "empty checkpoint file"))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(ckpt_err(
            path,
            format!("bad magic line '{magic}', expected '{CHECKPOINT_MAGIC}'"),
        ));
    }

    let (_, episode_line) = lines
        .next()
        .ok_or_else(|| ckpt_err(path, "missing episode line"))?;
    let episode: u64 = episode_line
        .strip_prefix("episode ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ckpt_err(path, format!("bad episode line '{episode_line}'")))?;

    match lines.next() {
        Some((_, "config-begin")) => {}
        other => {
            return Err(ckpt_err(
                path,
                format!("expected 'config-begin', got {:?}", other.map(|(_, l)| l)),
            ))
        }
    }
    let mut config_text = String::new();
    let mut closed = false;
    for (_, line) in lines.by_ref() {
        if line == "config-end" {
            closed = true;
            break;
        }
        config_text.push_str(line);
        config_text.push('\n');
    }
    if !closed {
        return Err(ckpt_err(path, "missing 'config-end'"));
    }
    let config = ExperimentConfig::parse_str(&config_text)?;

    let (_, mut learners) = build_team(&config)?;
    let expected: usize = learners.iter().map(|l| l.named_params().len()).sum();
    let mut seen: HashSet<String> = HashSet::new();

    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rest = line.strip_prefix("param ").ok_or_else(|| {
            ckpt_err(path, format!("line {line_no}: expected a 'param' line"))
        })?;
        let mut fields = rest.split_whitespace();
        let full_name = fields
            .next()
            .ok_or_else(|| ckpt_err(path, format!("line {line_no}: missing parameter name")))?;
        let dims_tok = fields
            .next()
            .ok_or_else(|| ckpt_err(path, format!("line {line_no}: missing shape")))?;
        if fields.next() != Some("=") {
            return Err(ckpt_err(path, format!("line {line_no}: missing '='")));
        }

        let agent_rest = full_name
            .strip_prefix("agent")
            .ok_or_else(|| ckpt_err(path, format!("line {line_no}: bad name '{full_name}'")))?;
        let (agent_str, param_name) = agent_rest.split_once('.').ok_or_else(|| {
            ckpt_err(path, format!("line {line_no}: bad name '{full_name}'"))
        })?;
        let agent: usize = agent_str
            .parse()
            .map_err(|_| ckpt_err(path, format!("line {line_no}: bad agent index '{agent_str}'")))?;
        if agent >= learners.len() {
            return Err(ckpt_err(
                path,
                format!(
                    "line {line_no}: agent index {agent} out of range for {} agents",
                    learners.len()
                ),
            ));
        }

        let dims_inner = dims_tok
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| ckpt_err(path, format!("line {line_no}: bad shape '{dims_tok}'")))?;
        let shape: Vec<usize> = if dims_inner.is_empty() {
            Vec::new()
        } else {
            dims_inner
                .split(',')
                .map(|d| {
                    d.parse().map_err(|_| {
                        ckpt_err(path, format!("line {line_no}: bad shape '{dims_tok}'"))
                    })
                })
                .collect::<Result<_, _>>()?
        };
        let values: Vec<f64> = fields
            .map(|v| {
                v.parse().map_err(|_| {
                    ckpt_err(
                        path,
                        format!("line {line_no}: bad value '{v}' in {full_name}"),
                    )
                })
            })
            .collect::<Result<_, _>>()?;
        let tensor = Tensor::new(shape, values).map_err(|e| {
            ckpt_err(path, format!("line {line_no}: {full_name}: {e}"))
        })?;
        if !seen.insert(full_name.to_string()) {
            return Err(ckpt_err(
                path,
                format!("line {line_no}: duplicate parameter '{full_name}'"),
            ));
        }
        learners[agent]
            .set_param(param_name, tensor)
            .map_err(|e| ckpt_err(path, format!("line {line_no}: {e}")))?;
    }

    if seen.len() != expected {
        return Err(ckpt_err(
            path,
            format!("expected {expected} parameters, found {}", seen.len()),
        ));
    }
    for learner in &mut learners {
        learner.reset_optimizers();
    }
    Ok(Checkpoint {
        episode,
        config,
        learners,
    })
}
