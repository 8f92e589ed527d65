//! Flat key=value run configuration with CLI overrides and a sorted echo
//! that fully reproduces a run.

use std::path::{Path, PathBuf};

use crate::cross::CrossCfg;
use crate::error::{BoxKgError, Result};
use crate::geometry::{BoxConfig, IntersectionMode};
use crate::inst::{InstCfg, Norm, ScoreKind};
use crate::kgdata::SplitMode;
use crate::onto::{OntoCfg, OntoLossKind, TransformMode};
use crate::trainer::{TrainConfig, ValMetric};

/// Full run configuration. Every field has a default; unknown keys are
/// rejected so typos never pass silently.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inst_file: String,
    pub onto_file: String,
    pub links_file: String,
    /// Optional text-feature TSV; empty means "no text features".
    pub features_file: String,
    pub out_dir: String,
    pub mode: SplitMode,
    pub train_ratio: f64,
    pub valid_ratio: f64,
    pub test_ratio: f64,
    pub seed: u64,
    pub d_vec: usize,
    pub d_box: usize,
    pub proj_hidden: usize,
    pub beta: f64,
    pub alpha: f64,
    pub volume_clamp: f64,
    pub intersection: IntersectionMode,
    pub transform: TransformMode,
    pub score: ScoreKind,
    pub norm: Norm,
    pub onto_loss: OntoLossKind,
    pub mean_reduce: bool,
    pub lr: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub margin_kg: f64,
    pub margin_cross: f64,
    pub neg_inst: usize,
    pub neg_onto: usize,
    pub neg_cross: usize,
    /// Early-stopping metric; `None` = pick by split mode (instance MRR in
    /// kgc mode, linking MRR in linking mode).
    pub val_metric: Option<ValMetric>,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inst_file: "inst.tsv".into(),
            onto_file: "onto.tsv".into(),
            links_file: "links.tsv".into(),
            features_file: String::new(),
            out_dir: "run".into(),
            mode: SplitMode::Kgc,
            train_ratio: 0.8,
            valid_ratio: 0.1,
            test_ratio: 0.1,
            seed: 0,
            d_vec: 256,
            d_box: 512,
            proj_hidden: 0,
            beta: 1.0,
            alpha: 0.5,
            volume_clamp: 1e-10,
            intersection: IntersectionMode::Smooth,
            transform: TransformMode::ShiftScale,
            score: ScoreKind::Translation,
            norm: Norm::L1,
            onto_loss: OntoLossKind::SquaredError,
            mean_reduce: true,
            lr: 0.005,
            lambda1: 1.0,
            lambda2: 1.0,
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
            margin_kg: 0.3,
            margin_cross: 0.15,
            neg_inst: 10,
            neg_onto: 5,
            neg_cross: 5,
            val_metric: None,
            threads: 1,
        }
    }
}

fn bad(key: &str, value: &str, expected: &str) -> BoxKgError {
    BoxKgError::BadConfig(format!("key `{key}`: bad value `{value}` (expected {expected})"))
}

macro_rules! parse_num {
    ($key:expr, $value:expr, $ty:ty) => {
        $value
            .parse::<$ty>()
            .map_err(|_| bad($key, $value, stringify!($ty)))?
    };
}

impl RunConfig {
    /// All keys in echo order, with current values rendered as strings.
    fn entries(&self) -> Vec<(&'static str, String)> {
        let mode = match self.mode {
            SplitMode::Kgc => "kgc",
            SplitMode::Linking => "linking",
        };
        let intersection = match self.intersection {
            IntersectionMode::Smooth => "smooth",
            IntersectionMode::Hard => "hard",
        };
        let transform = match self.transform {
            TransformMode::ShiftScale => "shift_scale",
            TransformMode::Text => "text",
        };
        let score = match self.score {
            ScoreKind::Translation => "translation",
            ScoreKind::Rotation => "rotation",
        };
        let norm = match self.norm {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
        };
        let onto_loss = match self.onto_loss {
            OntoLossKind::SquaredError => "squared",
            OntoLossKind::Bce => "bce",
        };
        let reduction = if self.mean_reduce { "mean" } else { "sum" };
        let val_metric = match self.val_metric {
            None => "auto",
            Some(ValMetric::InstMrr) => "inst_mrr",
            Some(ValMetric::OntoMrr) => "onto_mrr",
            Some(ValMetric::LinkMrr) => "link_mrr",
        };
        vec![
            ("alpha", self.alpha.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("beta", self.beta.to_string()),
            ("d_box", self.d_box.to_string()),
            ("d_vec", self.d_vec.to_string()),
            ("features_file", self.features_file.clone()),
            ("inst_file", self.inst_file.clone()),
            ("intersection", intersection.to_string()),
            ("lambda1", self.lambda1.to_string()),
            ("lambda2", self.lambda2.to_string()),
            ("links_file", self.links_file.clone()),
            ("lr", self.lr.to_string()),
            ("margin_cross", self.margin_cross.to_string()),
            ("margin_kg", self.margin_kg.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("mean_reduce", reduction.to_string()),
            ("mode", mode.to_string()),
            ("neg_cross", self.neg_cross.to_string()),
            ("neg_inst", self.neg_inst.to_string()),
            ("neg_onto", self.neg_onto.to_string()),
            ("norm", norm.to_string()),
            ("onto_file", self.onto_file.clone()),
            ("onto_loss", onto_loss.to_string()),
            ("out_dir", self.out_dir.clone()),
            ("patience", self.patience.to_string()),
            ("proj_hidden", self.proj_hidden.to_string()),
            ("score", score.to_string()),
            ("seed", self.seed.to_string()),
            ("test_ratio", self.test_ratio.to_string()),
            ("threads", self.threads.to_string()),
            ("train_ratio", self.train_ratio.to_string()),
            ("transform", transform.to_string()),
            ("val_metric", val_metric.to_string()),
            ("valid_ratio", self.valid_ratio.to_string()),
            ("volume_clamp", self.volume_clamp.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "inst_file" => self.inst_file = value.to_string(),
            "onto_file" => self.onto_file = value.to_string(),
            "links_file" => self.links_file = value.to_string(),
            "features_file" => self.features_file = value.to_string(),
            "out_dir" => self.out_dir = value.to_string(),
            "mode" => {
                self.mode = match value {
                    "kgc" => SplitMode::Kgc,
                    "linking" => SplitMode::Linking,
                    _ => return Err(bad(key, value, "kgc|linking")),
                }
            }
            "train_ratio" => self.train_ratio = parse_num!(key, value, f64),
            "valid_ratio" => self.valid_ratio = parse_num!(key, value, f64),
            "test_ratio" => self.test_ratio = parse_num!(key, value, f64),
            "seed" => self.seed = parse_num!(key, value, u64),
            "d_vec" => self.d_vec = parse_num!(key, value, usize),
            "d_box" => self.d_box = parse_num!(key, value, usize),
            "proj_hidden" => self.proj_hidden = parse_num!(key, value, usize),
            "beta" => self.beta = parse_num!(key, value, f64),
            "alpha" => self.alpha = parse_num!(key, value, f64),
            "volume_clamp" => self.volume_clamp = parse_num!(key, value, f64),
            "intersection" => {
                self.intersection = match value {
                    "smooth" => IntersectionMode::Smooth,
                    "hard" => IntersectionMode::Hard,
                    _ => return Err(bad(key, value, "smooth|hard")),
                }
            }
            "transform" => {
                self.transform = match value {
                    "shift_scale" => TransformMode::ShiftScale,
                    "text" => TransformMode::Text,
                    _ => return Err(bad(key, value, "shift_scale|text")),
                }
            }
            "score" => {
                self.score = match value {
                    "translation" => ScoreKind::Translation,
                    "rotation" => ScoreKind::Rotation,
                    _ => return Err(bad(key, value, "translation|rotation")),
                }
            }
            "norm" => {
                self.norm = match value {
                    "l1" => Norm::L1,
                    "l2" => Norm::L2,
                    _ => return Err(bad(key, value, "l1|l2")),
                }
            }
            "onto_loss" => {
                self.onto_loss = match value {
                    "squared" => OntoLossKind::SquaredError,
                    "bce" => OntoLossKind::Bce,
                    _ => return Err(bad(key, value, "squared|bce")),
                }
            }
            "mean_reduce" => {
                self.mean_reduce = match value {
                    "mean" => true,
                    "sum" => false,
                    _ => return Err(bad(key, value, "mean|sum")),
                }
            }
            "lr" => self.lr = parse_num!(key, value, f64),
            "lambda1" => self.lambda1 = parse_num!(key, value, f64),
            "lambda2" => self.lambda2 = parse_num!(key, value, f64),
            "batch_size" => self.batch_size = parse_num!(key, value, usize),
            "max_epochs" => self.max_epochs = parse_num!(key, value, usize),
            "patience" => self.patience = parse_num!(key, value, usize),
            "margin_kg" => self.margin_kg = parse_num!(key, value, f64),
            "margin_cross" => self.margin_cross = parse_num!(key, value, f64),
            "neg_inst" => self.neg_inst = parse_num!(key, value, usize),
            "neg_onto" => self.neg_onto = parse_num!(key, value, usize),
            "neg_cross" => self.neg_cross = parse_num!(key, value, usize),
            "val_metric" => {
                self.val_metric = match value {
                    "auto" => None,
                    "inst_mrr" => Some(ValMetric::InstMrr),
                    "onto_mrr" => Some(ValMetric::OntoMrr),
                    "link_mrr" => Some(ValMetric::LinkMrr),
                    _ => return Err(bad(key, value, "auto|inst_mrr|onto_mrr|link_mrr")),
                }
            }
            "threads" => self.threads = parse_num!(key, value, usize),
            _ => {
                return Err(BoxKgError::BadConfig(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }

    /// Parse a flat `key=value` file (one pair per line, `#` comments).
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| BoxKgError::MalformedLine {
                file: path.display().to_string(),
                line: i + 1,
                msg: "expected key=value".into(),
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    /// Parse a previously written echo. The echo is itself valid config
    /// syntax, so this is `from_file` on a string.
    pub fn from_echo(echo: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for line in echo.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| BoxKgError::BadConfig(format!("bad echo line `{line}`")))?;
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    /// Sorted, diff-able `key=value` echo; round-trips through
    /// [`RunConfig::from_echo`].
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    pub fn split_ratios(&self) -> (f64, f64, f64) {
        (self.train_ratio, self.valid_ratio, self.test_ratio)
    }

    pub fn to_train_config(&self) -> Result<TrainConfig> {
        let mut bcfg = BoxConfig::new(self.d_box);
        bcfg.beta = self.beta;
        bcfg.alpha = self.alpha;
        bcfg.volume_clamp = self.volume_clamp;
        bcfg.intersection = self.intersection;
        let cfg = TrainConfig {
            lr: self.lr,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            d_vec: self.d_vec,
            d_box: self.d_box,
            proj_hidden: self.proj_hidden,
            neg_inst: self.neg_inst,
            neg_onto: self.neg_onto,
            neg_cross: self.neg_cross,
            val_metric: self.val_metric.unwrap_or(match self.mode {
                SplitMode::Kgc => ValMetric::InstMrr,
                SplitMode::Linking => ValMetric::LinkMrr,
            }),
            bcfg,
            ocfg: OntoCfg {
                transform: self.transform,
                loss: self.onto_loss,
                mean_reduce: self.mean_reduce,
            },
            icfg: InstCfg {
                score: self.score,
                norm: self.norm,
                margin: self.margin_kg,
                mean_reduce: self.mean_reduce,
            },
            ccfg: CrossCfg {
                margin: self.margin_cross,
                mean_reduce: self.mean_reduce,
            },
            adam: Default::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        Path::new(&self.out_dir).join(name)
    }
}

/// Effective evaluation worker count: the configured value capped by the
/// `BOXKG_THREADS` environment variable (when set and valid).
pub fn effective_threads(requested: usize) -> usize {
    let requested = requested.max(1);
    match std::env::var("BOXKG_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(cap) if cap >= 1 => requested.min(cap),
        _ => requested,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_rejected() {
        let mut cfg = RunConfig::default();
        let err = cfg.set("lerning_rate", "0.01").unwrap_err();
        assert!(matches!(err, BoxKgError::BadConfig(_)));
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("lr", "0.01").unwrap();
        cfg.set("mode", "linking").unwrap();
        cfg.set("intersection", "hard").unwrap();
        cfg.set("score", "rotation").unwrap();
        cfg.set("val_metric", "onto_mrr").unwrap();
        cfg.set("mean_reduce", "sum").unwrap();
        let back = RunConfig::from_echo(&cfg.echo()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn every_echoed_key_is_settable() {
        let mut cfg = RunConfig::default();
        for (k, v) in RunConfig::default().entries() {
            cfg.set(k, &v).unwrap_or_else(|e| panic!("key {k}: {e}"));
        }
    }

    #[test]
    fn file_parsing_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# toy run\nlr = 0.01\n\nseed=9\nbatch_size=4\n").unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.batch_size, 4);
    }

    #[test]
    fn bad_values_name_the_key() {
        let mut cfg = RunConfig::default();
        let err = cfg.set("lr", "fast").unwrap_err().to_string();
        assert!(err.contains("lr"), "{err}");
        let err = cfg.set("mode", "both").unwrap_err().to_string();
        assert!(err.contains("kgc|linking"), "{err}");
    }

    #[test]
    fn invalid_lr_fails_train_config_validation() {
        let mut cfg = RunConfig::default();
        cfg.set("lr", "-1").unwrap();
        assert!(cfg.to_train_config().is_err());
    }

    #[test]
    fn val_metric_auto_follows_mode() {
        let mut cfg = RunConfig::default();
        cfg.d_vec = 8;
        cfg.d_box = 8;
        assert_eq!(cfg.to_train_config().unwrap().val_metric, ValMetric::InstMrr);
        cfg.set("mode", "linking").unwrap();
        assert_eq!(cfg.to_train_config().unwrap().val_metric, ValMetric::LinkMrr);
    }
}
