//! Line-oriented `key = value` run configuration with `[section]` headers.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use parbench::bimodal::{BimodalHyper, ContrastiveLoss, Variant};
use parbench::data::{DAY, DEFAULT_LOOKBACK, DEFAULT_VAL_FRACTION};
use parbench::elsa::ElsaHyper;
use parbench::eval::{ModelSpec, Scenario};
use parbench::hybrid::HybridHyper;
use parbench::shallow::ShallowHyper;
use parbench::synth::SynthConfig;
use parbench::train::Schedule;

pub const MODELS: [&str; 6] = ["knn", "poprec", "shallow", "elsa", "hybrid", "bimodal"];

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub out: PathBuf,
    pub interactions: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Overrides the label stored in the embedding table.
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSection {
    /// Unix seconds; `None` puts the boundary one month before the log ends.
    pub boundary: Option<i64>,
    pub lookback_days: i64,
    pub val_fraction: f64,
    pub seed: u64,
}

/// Hyperparameter overrides; unset fields keep each model's defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelSection {
    pub names: Vec<String>,
    pub variant: Option<Variant>,
    pub target_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub n_neg: Option<usize>,
    pub margin: Option<f64>,
    pub tower_noise: Option<f64>,
    pub tau: Option<f64>,
    pub loss: Option<ContrastiveLoss>,
    pub elsa_epochs: Option<usize>,
    pub elsa_lr: Option<f64>,
    pub patience: Option<usize>,
    pub plateau_patience: Option<usize>,
    pub plateau_factor: Option<f64>,
    pub min_lr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub scenario: Scenario,
    pub k: Option<usize>,
    pub probe_k: usize,
    pub seeds: Vec<u64>,
    pub shuffled_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub synth: SynthConfig,
    pub split: SplitSection,
    pub model: ModelSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths {
                out: PathBuf::from("out"),
                interactions: None,
                embeddings: None,
                label: None,
            },
            synth: SynthConfig::default(),
            split: SplitSection {
                boundary: None,
                lookback_days: DEFAULT_LOOKBACK / DAY,
                val_fraction: DEFAULT_VAL_FRACTION,
                seed: 0,
            },
            model: ModelSection {
                names: vec!["knn".into()],
                ..ModelSection::default()
            },
            eval: EvalSection {
                scenario: Scenario::Hot,
                k: None,
                probe_k: 50,
                seeds: vec![0, 1, 2, 3, 4],
                shuffled_seeds: vec![100, 101, 102],
            },
        }
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| anyhow!("invalid value `{value}`: {e}"))
}

pub fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("empty list");
    }
    Ok(items)
}

pub fn parse_models(value: &str) -> Result<Vec<String>> {
    let names: Vec<String> = parse_list(value)?;
    for n in &names {
        if !MODELS.contains(&n.as_str()) {
            bail!("unknown model `{n}` (expected one of {})", MODELS.join(", "));
        }
    }
    Ok(names)
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse_str(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !["paths", "synth", "split", "model", "eval"].contains(&section.as_str()) {
                    bail!("line {}: unknown section `[{section}]`", n + 1);
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
            let (key, value) = (key.trim(), value.trim().trim_matches('"'));
            cfg.set(&section, key, value)
                .with_context(|| format!("line {}: key `{section}.{key}`", n + 1))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let m = &mut self.model;
        let s = &mut self.synth;
        match (section, key) {
            ("paths", "out") => self.paths.out = v.into(),
            ("paths", "interactions") => self.paths.interactions = Some(v.into()),
            ("paths", "embeddings") => self.paths.embeddings = Some(v.into()),
            ("paths", "label") => self.paths.label = Some(v.into()),

            ("synth", "users") => s.n_users = parse(v)?,
            ("synth", "items") => s.n_items = parse(v)?,
            ("synth", "latent_dim") => s.latent_dim = parse(v)?,
            ("synth", "embed_dim") => s.embed_dim = parse(v)?,
            ("synth", "events_per_user") => s.events_per_user = parse(v)?,
            ("synth", "noise_sigma") => s.noise_sigma = parse(v)?,
            ("synth", "offset_norm") => s.offset_norm = parse(v)?,
            ("synth", "taste_scale") => s.taste_scale = parse(v)?,
            ("synth", "popularity_sigma") => s.popularity_sigma = parse(v)?,
            ("synth", "cold_fraction") => s.cold_fraction = parse(v)?,
            ("synth", "seed") => s.seed = parse(v)?,
            ("synth", "label") => s.label = v.into(),

            ("split", "boundary") => self.split.boundary = Some(parse(v)?),
            ("split", "lookback_days") => self.split.lookback_days = parse(v)?,
            ("split", "val_fraction") => self.split.val_fraction = parse(v)?,
            ("split", "seed") => self.split.seed = parse(v)?,

            ("model", "name") => m.names = parse_models(v)?,
            ("model", "variant") => m.variant = Some(parse(v)?),
            ("model", "target_dim") => m.target_dim = Some(parse(v)?),
            ("model", "hidden_dim") => m.hidden_dim = Some(parse(v)?),
            ("model", "epochs") => m.epochs = Some(parse(v)?),
            ("model", "lr") => m.lr = Some(parse(v)?),
            ("model", "batch_size") => m.batch_size = Some(parse(v)?),
            ("model", "n_neg") => m.n_neg = Some(parse(v)?),
            ("model", "margin") => m.margin = Some(parse(v)?),
            ("model", "tower_noise") => m.tower_noise = Some(parse(v)?),
            ("model", "tau") => m.tau = Some(parse(v)?),
            ("model", "loss") => m.loss = Some(parse(v)?),
            ("model", "elsa_epochs") => m.elsa_epochs = Some(parse(v)?),
            ("model", "elsa_lr") => m.elsa_lr = Some(parse(v)?),
            ("model", "patience") => m.patience = Some(parse(v)?),
            ("model", "plateau_patience") => m.plateau_patience = Some(parse(v)?),
            ("model", "plateau_factor") => m.plateau_factor = Some(parse(v)?),
            ("model", "min_lr") => m.min_lr = Some(parse(v)?),

            ("eval", "scenario") => self.eval.scenario = parse(v)?,
            ("eval", "k") => self.eval.k = Some(parse(v)?),
            ("eval", "probe_k") => self.eval.probe_k = parse(v)?,
            ("eval", "seeds") => self.eval.seeds = parse_list(v)?,
            ("eval", "shuffled_seeds") => self.eval.shuffled_seeds = parse_list(v)?,

            ("", _) => bail!("key outside of any section"),
            _ => bail!("unknown key"),
        }
        Ok(())
    }

    pub fn interactions_path(&self) -> PathBuf {
        self.paths.interactions.clone().unwrap_or_else(|| self.paths.out.join("interactions.tsv"))
    }

    pub fn embeddings_path(&self) -> PathBuf {
        self.paths.embeddings.clone().unwrap_or_else(|| self.paths.out.join("embeddings.parv1"))
    }

    pub fn split_dir(&self) -> PathBuf {
        self.paths.out.join("split")
    }

    pub fn k(&self) -> usize {
        self.eval.k.unwrap_or_else(|| self.eval.scenario.default_k())
    }

    pub fn variant(&self) -> Variant {
        self.model.variant.unwrap_or(Variant::Content)
    }

    fn schedule(&self) -> Schedule {
        let m = &self.model;
        let d = Schedule::default();
        Schedule {
            patience: m.patience.unwrap_or(d.patience),
            plateau_patience: m.plateau_patience.unwrap_or(d.plateau_patience),
            plateau_factor: m.plateau_factor.unwrap_or(d.plateau_factor),
            min_lr: m.min_lr.unwrap_or(d.min_lr),
        }
    }

    fn elsa_hyper(&self, epochs: Option<usize>, lr: Option<f64>) -> ElsaHyper {
        let d = ElsaHyper::default();
        ElsaHyper {
            target_dim: self.model.target_dim.unwrap_or(d.target_dim),
            epochs: epochs.unwrap_or(d.epochs),
            lr: lr.unwrap_or(d.lr),
            batch_size: self.model.batch_size.unwrap_or(d.batch_size),
            schedule: self.schedule(),
            ..d
        }
    }

    /// Model specification for one model name, with overrides applied.
    pub fn spec(&self, name: &str) -> Result<ModelSpec> {
        let m = &self.model;
        Ok(match name {
            "knn" => ModelSpec::Knn,
            "poprec" => ModelSpec::PopRec,
            "shallow" => {
                let d = ShallowHyper::default();
                ModelSpec::Shallow(ShallowHyper {
                    epochs: m.epochs.unwrap_or(d.epochs),
                    lr: m.lr.unwrap_or(d.lr),
                    n_neg: m.n_neg.unwrap_or(d.n_neg),
                    margin: m.margin.unwrap_or(d.margin),
                    batch_size: m.batch_size.unwrap_or(d.batch_size),
                    tower_noise: m.tower_noise.unwrap_or(d.tower_noise),
                    schedule: self.schedule(),
                    ..d
                })
            }
            "elsa" => ModelSpec::Elsa(self.elsa_hyper(m.epochs, m.lr)),
            "hybrid" => {
                let d = HybridHyper::default();
                ModelSpec::Hybrid(HybridHyper {
                    target_dim: m.target_dim.unwrap_or(d.target_dim),
                    hidden_dim: m.hidden_dim.or(d.hidden_dim),
                    epochs: m.epochs.unwrap_or(d.epochs),
                    lr: m.lr.unwrap_or(d.lr),
                    batch_size: m.batch_size.unwrap_or(d.batch_size),
                    schedule: self.schedule(),
                    ..d
                })
            }
            "bimodal" => {
                let d = BimodalHyper::default();
                ModelSpec::Bimodal {
                    elsa: self.elsa_hyper(m.elsa_epochs, m.elsa_lr),
                    bimodal: BimodalHyper {
                        target_dim: m.target_dim.unwrap_or(d.target_dim),
                        hidden_dim: m.hidden_dim.or(d.hidden_dim),
                        epochs: m.epochs.unwrap_or(d.epochs),
                        lr: m.lr.unwrap_or(d.lr),
                        batch_size: m.batch_size.unwrap_or(d.batch_size),
                        tau: m.tau.unwrap_or(d.tau),
                        loss: m.loss.unwrap_or(d.loss),
                        schedule: self.schedule(),
                        ..d
                    },
                    variant: self.variant(),
                }
            }
            other => bail!("unknown model `{other}` (expected one of {})", MODELS.join(", ")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_file() {
        let c = RunConfig::parse_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.k(), 50);
        assert_eq!(c.embeddings_path(), PathBuf::from("out/embeddings.parv1"));
    }

    #[test]
    fn sections_and_overrides() {
        let c = RunConfig::parse_str(
            "# comment\n[paths]\nout = \"runs/a\"\n[model]\nname = knn, hybrid\ntarget_dim = 64\n[eval]\nscenario = cold\nseeds = 3,4\n",
        )
        .unwrap();
        assert_eq!(c.paths.out, PathBuf::from("runs/a"));
        assert_eq!(c.model.names, vec!["knn", "hybrid"]);
        assert_eq!(c.k(), 20);
        assert_eq!(c.eval.seeds, vec![3, 4]);
        match c.spec("hybrid").unwrap() {
            ModelSpec::Hybrid(h) => assert_eq!(h.target_dim, 64),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let err = RunConfig::parse_str("[model]\nname = knn\nfoo = 1\n").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("line 3") && msg.contains("model.foo"), "{msg}");
        let err = RunConfig::parse_str("[eval]\nk = many\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 2"));
        assert!(RunConfig::parse_str("[nope]\n").is_err());
        assert!(RunConfig::parse_str("k = 1\n").is_err());
        assert!(RunConfig::parse_str("[model]\nname = svd\n").is_err());
    }
}
