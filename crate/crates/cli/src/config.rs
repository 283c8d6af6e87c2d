//! `key = value` run configuration with command-line overrides.

use std::path::PathBuf;

use ltrk::dapo::TrainConfig;
use ltrk::synth::WorldConfig;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub world: WorldConfig,
    /// Cases written by `synth`.
    pub cases: usize,
    pub out: PathBuf,
    pub dataset: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            world: WorldConfig::default(),
            cases: 200,
            out: PathBuf::from("out"),
            dataset: None,
            synonyms: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "epochs",
    "cases_per_epoch",
    "batch_size",
    "ppo_epochs",
    "rollouts",
    "steps",
    "learning_rate",
    "clip_low",
    "clip_high",
    "lambda_logic",
    "lambda_align",
    "w_acc",
    "w_logic",
    "w_ground",
    "tau",
    "temperature",
    "d_h",
    "heads",
    "group_normalize",
    "use_vision",
    "n_atoms",
    "n_rules",
    "n_classes",
    "d_v",
    "noise_sigma",
    "cases",
    "out",
    "dataset",
    "synonyms",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("`{key}` expects a number, got `{value}`"))
}

fn flag(key: &str, value: &str) -> Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("`{key}` expects true or false, got `{value}`")),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let t = &mut self.train;
        let w = &mut self.world;
        match key {
            "seed" => {
                t.seed = num(key, value)?;
                w.seed = t.seed;
            }
            "epochs" => t.epochs = num(key, value)?,
            "cases_per_epoch" => t.cases_per_epoch = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "ppo_epochs" => t.ppo_epochs = num(key, value)?,
            "rollouts" => t.rollouts = num(key, value)?,
            "steps" => t.steps = num(key, value)?,
            "learning_rate" => t.learning_rate = num(key, value)?,
            "clip_low" => t.clip_low = num(key, value)?,
            "clip_high" => t.clip_high = num(key, value)?,
            "lambda_logic" => t.lambda_logic = num(key, value)?,
            "lambda_align" => t.lambda_align = num(key, value)?,
            "w_acc" => t.w_acc = num(key, value)?,
            "w_logic" => t.w_logic = num(key, value)?,
            "w_ground" => t.w_ground = num(key, value)?,
            "tau" => t.tau = num(key, value)?,
            "temperature" => t.temperature = num(key, value)?,
            "d_h" => t.d_h = num(key, value)?,
            "heads" => t.heads = num(key, value)?,
            "group_normalize" => t.group_normalize = flag(key, value)?,
            "use_vision" => t.use_vision = flag(key, value)?,
            "n_atoms" => w.n_atoms = num(key, value)?,
            "n_rules" => w.n_rules = num(key, value)?,
            "n_classes" => w.n_classes = num(key, value)?,
            "d_v" => w.d_v = num(key, value)?,
            "noise_sigma" => w.noise_sigma = num(key, value)?,
            "cases" => self.cases = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "synonyms" => self.synonyms = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key `{key}` (known: {})", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Applies a config file. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_and_rejects_unknown_keys() {
        let mut c = RunConfig::default();
        c.apply_text("# run\nseed = 7\nlambda_logic=0 # off\nuse_vision = false\n\nout = /tmp/x\n")
            .unwrap();
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.world.seed, 7);
        assert_eq!(c.train.lambda_logic, 0.0);
        assert!(!c.train.use_vision);
        assert_eq!(c.out, PathBuf::from("/tmp/x"));

        let err = c.apply_text("seed = 1\nbogus = 3\n").unwrap_err();
        assert!(err.contains("line 2") && err.contains("bogus"), "{err}");
        assert!(c.apply_text("epochs = many").is_err());
        assert!(c.apply_text("epochs 3").is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let mut c = RunConfig::default();
        for key in KEYS {
            let value = match *key {
                "group_normalize" | "use_vision" => "true",
                "out" | "dataset" | "synonyms" => "p",
                _ => "2",
            };
            c.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }
}
