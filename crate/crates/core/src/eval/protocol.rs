//! Hot and cold evaluation protocols with true and shuffled content tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::bimodal::{train_bimodal, BimodalHyper, Variant};
use crate::data::{EmbeddingTable, SplitIndex};
use crate::elsa::{train_elsa, ElsaHyper};
use crate::error::{Error, Result};
use crate::eval::{evaluate, shuffled_control, summarize_runs, Metric, MetricReport, PopRec, RunSummary};
use crate::hybrid::{train_hybrid, HybridHyper};
use crate::knn::{ItemVectors, KnnScorer};
use crate::scoring::{recommend_users, Scorer};
use crate::shallow::{train_shallow, ShallowHyper};
use crate::train::ValidationProbe;
use crate::{Matrix, Ranking};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    Hot,
    Cold,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Self::Hot => "hot",
            Self::Cold => "cold",
        }
    }

    pub fn default_k(self) -> usize {
        match self {
            Self::Hot => 50,
            Self::Cold => 20,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hot" => Ok(Self::Hot),
            "cold" => Ok(Self::Cold),
            other => Err(Error::InvalidConfig(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Which held-out partition supplies the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Knn,
    PopRec,
    Shallow(ShallowHyper),
    Elsa(ElsaHyper),
    Hybrid(HybridHyper),
    Bimodal {
        elsa: ElsaHyper,
        bimodal: BimodalHyper,
        variant: Variant,
    },
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            Self::Knn => "knn".into(),
            Self::PopRec => "poprec".into(),
            Self::Shallow(_) => "shallow".into(),
            Self::Elsa(_) => "elsa".into(),
            Self::Hybrid(_) => "hybrid".into(),
            Self::Bimodal { variant, .. } => format!("bimodal-{variant}"),
        }
    }

    /// Whether the model reads the content table at all.
    pub fn uses_content(&self) -> bool {
        !matches!(self, Self::PopRec | Self::Elsa(_))
    }

    pub fn is_trained(&self) -> bool {
        !matches!(self, Self::Knn | Self::PopRec)
    }

    pub fn check_scenario(&self, scenario: Scenario) -> Result<()> {
        if scenario == Scenario::Hot {
            return Ok(());
        }
        match self {
            Self::Elsa(_) => Err(Error::Capability(
                "pure ELSA has no collaborative vector for cold items; use hybrid, knn or bimodal-content".into(),
            )),
            Self::Bimodal { variant, .. } if !variant.serves_cold() => Err(Error::Capability(format!(
                "the bimodal {variant} projection needs a collaborative vector, which cold items lack; use the content variant"
            ))),
            _ => Ok(()),
        }
    }

    /// Copy with every trainable seed replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut spec = self.clone();
        match &mut spec {
            Self::Knn | Self::PopRec => {}
            Self::Shallow(h) => h.seed = seed,
            Self::Elsa(h) => h.seed = seed,
            Self::Hybrid(h) => h.seed = seed,
            Self::Bimodal { elsa, bimodal, .. } => {
                elsa.seed = seed;
                bimodal.seed = seed;
            }
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub scenario: Scenario,
    pub target: Target,
    pub k: usize,
    /// Cutoff of the validation HitRate that drives early stopping.
    pub probe_k: usize,
    pub seeds: Vec<u64>,
    pub shuffled_seeds: Vec<u64>,
}

impl ProtocolConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            target: Target::Test,
            k: scenario.default_k(),
            probe_k: 50,
            seeds: vec![0, 1, 2, 3, 4],
            shuffled_seeds: vec![100, 101, 102],
        }
    }
}

/// One evaluated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub seed: u64,
    pub shuffled: bool,
    pub report: MetricReport,
    pub recommendations: BTreeMap<usize, Ranking>,
}

pub fn candidates(index: &SplitIndex, scenario: Scenario) -> &[usize] {
    match scenario {
        Scenario::Hot => &index.hot_items,
        Scenario::Cold => &index.cold_items,
    }
}

pub fn truth(index: &SplitIndex, scenario: Scenario, target: Target) -> Result<&BTreeMap<usize, BTreeSet<usize>>> {
    match (scenario, target) {
        (Scenario::Hot, Target::Test) => Ok(&index.hot_test),
        (Scenario::Hot, Target::Validation) => Ok(&index.validation),
        (Scenario::Cold, Target::Test) => Ok(&index.cold_test),
        (Scenario::Cold, Target::Validation) => Err(Error::InvalidConfig(
            "the cold scenario has no validation partition".into(),
        )),
    }
}

/// Trains (when applicable) and returns a scorer for one run.
pub fn build_scorer<'a>(
    spec: &ModelSpec,
    par: &Matrix,
    label: &str,
    index: &'a SplitIndex,
    probe_k: usize,
) -> Result<Box<dyn Scorer + 'a>> {
    let probe = Some(ValidationProbe::new(index, probe_k));
    let content = || -> Result<ItemVectors> {
        let names = (0..index.n_items).map(|i| format!("#{i}")).collect();
        ItemVectors::full(par.clone(), names)
    };
    Ok(match spec {
        ModelSpec::Knn => Box::new(KnnScorer::from_histories(content()?, &index.history)?),
        ModelSpec::PopRec => Box::new(PopRec::from_split(index)),
        ModelSpec::Shallow(h) => {
            let (model, _) = train_shallow(par.clone(), label, index, h, probe)?;
            Box::new(model.scorer()?)
        }
        ModelSpec::Elsa(h) => {
            let (model, _) = train_elsa(index, h, probe)?;
            Box::new(crate::elsa::ElsaScorer::new(index, model.a, None))
        }
        ModelSpec::Hybrid(h) => {
            let (model, _) = train_hybrid(par, label, index, h, probe)?;
            Box::new(model.scorer(index, par)?)
        }
        ModelSpec::Bimodal { elsa, bimodal, variant } => {
            let (elsa_model, _) = train_elsa(index, elsa, probe)?;
            let (model, _) = train_bimodal(&elsa_model, par, label, index, bimodal, probe)?;
            Box::new(model.scorer(&elsa_model, par, index, *variant)?)
        }
    })
}

/// A single run over the given (already aligned) content rows.
pub fn run_once(
    spec: &ModelSpec,
    par: &Matrix,
    label: &str,
    index: &SplitIndex,
    config: &ProtocolConfig,
    seed: u64,
) -> Result<(MetricReport, BTreeMap<usize, Ranking>)> {
    spec.check_scenario(config.scenario)?;
    let truth = truth(index, config.scenario, config.target)?;
    let spec = spec.with_seed(seed);
    let scorer = build_scorer(&spec, par, label, index, config.probe_k)?;
    let recs = recommend_users(
        scorer.as_ref(),
        truth.keys().copied(),
        config.k,
        candidates(index, config.scenario),
        |u| &index.train_items[u],
    )?;
    Ok((evaluate(&recs, truth, config.k), recs))
}

/// Content rows for each run: the true table for every true seed, and a
/// shuffled table per shuffled seed. Order: true runs, then shuffled runs.
pub fn plan_runs(
    table: &EmbeddingTable,
    item_ids: &[String],
    config: &ProtocolConfig,
) -> Result<Vec<(u64, bool, Matrix)>> {
    let aligned = table.align(item_ids)?;
    let mut plan: Vec<(u64, bool, Matrix)> = config.seeds.iter().map(|&s| (s, false, aligned.clone())).collect();
    for &s in &config.shuffled_seeds {
        plan.push((s, true, shuffled_control(table, s)?.align(item_ids)?));
    }
    Ok(plan)
}

/// Executes every planned run sequentially.
pub fn run_protocol(
    spec: &ModelSpec,
    table: &EmbeddingTable,
    item_ids: &[String],
    index: &SplitIndex,
    config: &ProtocolConfig,
) -> Result<Vec<RunOutcome>> {
    spec.check_scenario(config.scenario)?;
    truth(index, config.scenario, config.target)?;
    plan_runs(table, item_ids, config)?
        .into_iter()
        .map(|(seed, shuffled, par)| {
            let (report, recommendations) = run_once(spec, &par, table.label(), index, config, seed)?;
            Ok(RunOutcome {
                seed,
                shuffled,
                report,
                recommendations,
            })
        })
        .collect()
}

/// One summary per metric from a set of run outcomes.
pub fn summarize(outcomes: &[RunOutcome]) -> Result<BTreeMap<Metric, RunSummary>> {
    Metric::ALL
        .iter()
        .map(|&m| {
            let pick = |shuffled: bool| -> Vec<f64> {
                outcomes
                    .iter()
                    .filter(|o| o.shuffled == shuffled)
                    .map(|o| o.report.aggregate.get(m))
                    .collect()
            };
            Ok((m, summarize_runs(&pick(false), &pick(true))?))
        })
        .collect()
}
