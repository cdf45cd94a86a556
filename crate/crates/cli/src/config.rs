//! Flat dotted-key configuration. Precedence, lowest to highest: built-in
//! defaults, `--config` file, `--set KEY=VALUE` overrides, dedicated
//! flags. Unknown keys are rejected by name at every layer, and the
//! merged result is persisted as `effective_config.json` so a run can be
//! reproduced from its own output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use bat_forge_core::attack::{AttackConfig, AttackKind};
use bat_forge_core::data::{TaskKind, ToyTaskSpec};
use bat_forge_core::lexicon::LexiconConfig;
use bat_forge_core::training::{Regime, TrainConfig};

use crate::errors::{CliError, CliResult};

/// Every key the configuration understands, with its default value.
fn default_entries() -> Vec<(&'static str, Value)> {
    vec![
        ("seed", json!(7)),
        ("task", json!("nli")),
        ("out_dir", json!("out")),
        ("data.dir", Value::Null),
        ("data.n_clusters", json!(4)),
        ("data.cluster_size", json!(4)),
        ("data.antonym_pairing", json!([1, 0, 3, 2])),
        ("data.n_filler", json!(24)),
        ("data.sentence_len", json!(12)),
        ("data.dim", json!(12)),
        ("data.n_train", json!(1300)),
        ("data.n_eval", json!(500)),
        ("lexicon.k", json!(8)),
        ("lexicon.sim_threshold", json!(0.8)),
        ("model.hidden", json!(24)),
        ("model.train_embedding", json!(true)),
        ("train.regime", json!("normal")),
        ("train.epochs", json!(15)),
        ("train.batch_size", json!(32)),
        ("train.learning_rate", json!(0.05)),
        ("train.momentum", json!(0.9)),
        ("train.alpha", json!(1.0)),
        ("train.beta", json!(1.2)),
        ("train.lambda", json!(1.0)),
        ("train.margin", json!(1.0)),
        ("train.eval_every", json!(1)),
        ("attack.kind", json!("synonym")),
        ("attack.max_words", Value::Null),
        ("attack.sem_threshold", json!(0.8)),
        ("attack.pos_constraint", json!(true)),
        ("attack.oracle_check", json!(false)),
        ("attack.reverse_importance", json!(false)),
        ("eval.probe_size", json!(500)),
        ("paths.checkpoint", Value::Null),
        ("sweep.grid", Value::Object(Map::new())),
    ]
}

/// The merged key-value view. BTreeMap keeps serialization order stable.
#[derive(Debug, Clone)]
pub struct FlatConfig {
    map: BTreeMap<String, Value>,
}

impl FlatConfig {
    pub fn defaults() -> Self {
        let map = default_entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        FlatConfig { map }
    }

    pub fn set(&mut self, key: &str, value: Value) -> CliResult<()> {
        if !self.map.contains_key(key) {
            return Err(CliError::validation(format!("unknown config key `{key}`")));
        }
        self.map.insert(key.to_string(), value);
        Ok(())
    }

    /// Applies one `--set KEY=VALUE`. The value is parsed as JSON when it
    /// is valid JSON and kept as a plain string otherwise, so both
    /// `--set train.margin=0.5` and `--set train.regime=smooth` work.
    pub fn set_pair(&mut self, spec: &str) -> CliResult<()> {
        let (key, raw) = spec.split_once('=').ok_or_else(|| {
            CliError::validation(format!("--set expects KEY=VALUE, got `{spec}`"))
        })?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        self.set(key, value)
    }

    /// Merges a JSON config file. The file must be a single flat object
    /// whose keys all exist in the default table.
    pub fn merge_file(&mut self, path: &Path) -> CliResult<()> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let parsed: Value = serde_json::from_str(&text).map_err(|e| {
            CliError::validation(format!("config {} is not valid JSON: {e}", path.display()))
        })?;
        let obj = parsed.as_object().ok_or_else(|| {
            CliError::validation(format!(
                "config {} must be a JSON object with flat dotted keys",
                path.display()
            ))
        })?;
        for (key, value) in obj {
            self.set(key, value.clone())
                .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?;
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(&self.map).expect("config map always serializes");
        text.push('\n');
        text
    }

    fn get(&self, key: &str) -> &Value {
        self.map
            .get(key)
            .unwrap_or_else(|| panic!("config key `{key}` missing from default table"))
    }

    fn wrong_type(key: &str, expected: &str, got: &Value) -> CliError {
        CliError::validation(format!("config key `{key}` must be {expected}, got {got}"))
    }

    pub fn u64(&self, key: &str) -> CliResult<u64> {
        let v = self.get(key);
        v.as_u64()
            .ok_or_else(|| Self::wrong_type(key, "a non-negative integer", v))
    }

    pub fn usize(&self, key: &str) -> CliResult<usize> {
        Ok(self.u64(key)? as usize)
    }

    pub fn f64(&self, key: &str) -> CliResult<f64> {
        let v = self.get(key);
        v.as_f64()
            .ok_or_else(|| Self::wrong_type(key, "a number", v))
    }

    pub fn bool(&self, key: &str) -> CliResult<bool> {
        let v = self.get(key);
        v.as_bool()
            .ok_or_else(|| Self::wrong_type(key, "a boolean", v))
    }

    pub fn str(&self, key: &str) -> CliResult<&str> {
        let v = self.get(key);
        v.as_str()
            .ok_or_else(|| Self::wrong_type(key, "a string", v))
    }

    pub fn opt_str(&self, key: &str) -> CliResult<Option<&str>> {
        match self.get(key) {
            Value::Null => Ok(None),
            Value::String(s) => Ok(Some(s)),
            other => Err(Self::wrong_type(key, "a string or null", other)),
        }
    }

    pub fn opt_usize(&self, key: &str) -> CliResult<Option<usize>> {
        match self.get(key) {
            Value::Null => Ok(None),
            v => v
                .as_u64()
                .map(|n| Some(n as usize))
                .ok_or_else(|| Self::wrong_type(key, "a non-negative integer or null", v)),
        }
    }

    pub fn usize_array(&self, key: &str) -> CliResult<Vec<usize>> {
        let v = self.get(key);
        let arr = v
            .as_array()
            .ok_or_else(|| Self::wrong_type(key, "an array of non-negative integers", v))?;
        arr.iter()
            .map(|item| {
                item.as_u64()
                    .map(|n| n as usize)
                    .ok_or_else(|| Self::wrong_type(key, "an array of non-negative integers", v))
            })
            .collect()
    }

    pub fn object(&self, key: &str) -> CliResult<&Map<String, Value>> {
        let v = self.get(key);
        v.as_object()
            .ok_or_else(|| Self::wrong_type(key, "an object", v))
    }
}

/// Typed view of the merged configuration. Parse-time checks cover types,
/// ranges and referenced input paths; command-specific requirements (a
/// checkpoint, a non-empty sweep grid) are checked where they are needed.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub task: TaskKind,
    pub out_dir: PathBuf,
    pub data_dir: Option<PathBuf>,
    pub toy: ToyTaskSpec,
    pub n_train: usize,
    pub n_eval: usize,
    pub lexicon: LexiconConfig,
    pub hidden: usize,
    pub train_embedding: bool,
    pub train: TrainConfig<f64>,
    pub attack: AttackConfig,
    pub attack_kind: AttackKind,
    pub probe_size: usize,
    pub checkpoint: Option<PathBuf>,
}

fn core_err(key: &str, e: bat_forge_core::Error) -> CliError {
    CliError::validation(format!("config key `{key}`: {e}"))
}

impl RunConfig {
    pub fn parse(flat: &FlatConfig) -> CliResult<RunConfig> {
        let seed = flat.u64("seed")?;
        let task = TaskKind::parse(flat.str("task")?).map_err(|e| core_err("task", e))?;
        let out_dir = PathBuf::from(flat.str("out_dir")?);
        let data_dir = flat.opt_str("data.dir")?.map(PathBuf::from);

        let toy = ToyTaskSpec {
            task,
            n_clusters: flat.usize("data.n_clusters")?,
            cluster_size: flat.usize("data.cluster_size")?,
            antonym_pairing: flat.usize_array("data.antonym_pairing")?,
            n_filler: flat.usize("data.n_filler")?,
            sentence_len: flat.usize("data.sentence_len")?,
            dim: flat.usize("data.dim")?,
            seed,
        };
        match &data_dir {
            None => toy.validate().map_err(|e| core_err("data", e))?,
            Some(dir) => check_data_dir(dir)?,
        }

        let lexicon = LexiconConfig {
            k: flat.usize("lexicon.k")?,
            sim_threshold: flat.f64("lexicon.sim_threshold")?,
        };
        lexicon.validate().map_err(|e| core_err("lexicon", e))?;

        let train = TrainConfig {
            regime: Regime::parse(flat.str("train.regime")?)
                .map_err(|e| core_err("train.regime", e))?,
            epochs: flat.usize("train.epochs")?,
            batch_size: flat.usize("train.batch_size")?,
            learning_rate: flat.f64("train.learning_rate")?,
            momentum: flat.f64("train.momentum")?,
            alpha: flat.f64("train.alpha")?,
            beta: flat.f64("train.beta")?,
            lambda: flat.f64("train.lambda")?,
            margin: flat.f64("train.margin")?,
            seed,
            eval_every: flat.usize("train.eval_every")?,
        };
        train.validate().map_err(|e| core_err("train", e))?;

        let attack = AttackConfig {
            task,
            max_words: flat.opt_usize("attack.max_words")?,
            sem_threshold: flat.f64("attack.sem_threshold")?,
            pos_constraint: flat.bool("attack.pos_constraint")?,
            oracle_check: flat.bool("attack.oracle_check")?,
            reverse_importance: flat.bool("attack.reverse_importance")?,
        };
        attack.validate().map_err(|e| core_err("attack", e))?;
        let attack_kind =
            AttackKind::parse(flat.str("attack.kind")?).map_err(|e| core_err("attack.kind", e))?;

        let probe_size = flat.usize("eval.probe_size")?;
        if probe_size == 0 {
            return Err(CliError::validation(
                "config key `eval.probe_size` must be at least 1".to_string(),
            ));
        }

        let hidden = flat.usize("model.hidden")?;
        if hidden == 0 {
            return Err(CliError::validation(
                "config key `model.hidden` must be at least 1".to_string(),
            ));
        }

        let checkpoint = flat.opt_str("paths.checkpoint")?.map(PathBuf::from);

        Ok(RunConfig {
            seed,
            task,
            out_dir,
            data_dir,
            toy,
            n_train: flat.usize("data.n_train")?,
            n_eval: flat.usize("data.n_eval")?,
            lexicon,
            hidden,
            train_embedding: flat.bool("model.train_embedding")?,
            train,
            attack,
            attack_kind,
            probe_size,
            checkpoint,
        })
    }

    /// Checkpoint path for commands that require one; the key is named in
    /// both failure modes so the fix is obvious.
    pub fn required_checkpoint(&self) -> CliResult<&Path> {
        let path = self.checkpoint.as_deref().ok_or_else(|| {
            CliError::validation(
                "config key `paths.checkpoint` is required for this command".to_string(),
            )
        })?;
        if !path.is_file() {
            return Err(CliError::validation(format!(
                "config key `paths.checkpoint`: no such file {}",
                path.display()
            )));
        }
        Ok(path)
    }
}

/// Files `gen-data` produces and a data directory must contain.
pub const DATA_FILES: [&str; 6] = [
    "embeddings.txt",
    "antonyms.txt",
    "pos.txt",
    "negation.txt",
    "train.tsv",
    "eval.tsv",
];

fn check_data_dir(dir: &Path) -> CliResult<()> {
    if !dir.is_dir() {
        return Err(CliError::validation(format!(
            "config key `data.dir`: no such directory {}",
            dir.display()
        )));
    }
    for name in DATA_FILES {
        if !dir.join(name).is_file() {
            return Err(CliError::validation(format!(
                "config key `data.dir`: missing {} in {}",
                name,
                dir.display()
            )));
        }
    }
    Ok(())
}
