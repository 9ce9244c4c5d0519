use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use parbench::bimodal::BimodalModel;
use parbench::data::{
    load_embeddings, parse_interactions, read_split, temporal_split, write_split, Checkpoint, DatasetSplit,
    EmbeddingTable, InteractionLog, SplitIndex, SplitParams, DAY,
};
use parbench::elsa::{train_elsa, ElsaModel, ElsaScorer};
use parbench::eval::protocol::{build_scorer, candidates, plan_runs, truth};
use parbench::eval::report::{merge, parse_tsv, rows_for, to_tsv};
use parbench::eval::{render_table, run_once, summarize, ModelSpec, ProtocolConfig, RunOutcome, Target};
use parbench::hybrid::{train_hybrid, HybridModel};
use parbench::scoring::{recommend_users, Scorer};
use parbench::shallow::{train_shallow, ShallowModel};
use parbench::synth::generate;
use parbench::train::{TrainHistory, ValidationProbe};
use parbench::{Matrix, Ranking};

use crate::config::RunConfig;

fn missing(path: &Path, hint: &str) -> anyhow::Error {
    anyhow::anyhow!("missing artifact {} (run `parbench {hint}` first)", path.display())
}

fn read_bytes(path: &Path, hint: &str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => missing(path, hint),
        _ => anyhow::Error::new(e).context(format!("reading {}", path.display())),
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Keeps file names portable.
fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

struct Workspace {
    log: InteractionLog,
    table: EmbeddingTable,
    split: DatasetSplit,
}

impl Workspace {
    fn load(cfg: &RunConfig) -> Result<Self> {
        let log = load_log(cfg)?;
        let path = cfg.embeddings_path();
        let mut table = load_embeddings(&read_bytes(&path, "synth")?)
            .with_context(|| format!("parsing {}", path.display()))?;
        if let Some(label) = &cfg.paths.label {
            table.set_label(label.clone());
        } else if table.label().is_empty() {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            table.set_label(stem);
        }
        let uncovered = table.uncovered(log.items());
        if let Some(first) = uncovered.first() {
            bail!(
                "{} of {} items lack an embedding in {} (first: `{first}`)",
                uncovered.len(),
                log.n_items(),
                path.display()
            );
        }
        let dir = cfg.split_dir();
        let split = read_split(&dir, &log).map_err(|e| match e {
            parbench::Error::MissingArtifact(p) => missing(&p, "split"),
            other => anyhow::Error::new(other).context(format!("reading split in {}", dir.display())),
        })?;
        Ok(Self { log, table, split })
    }

    fn label(&self) -> &str {
        self.table.label()
    }

    fn par(&self) -> Result<Matrix> {
        Ok(self.table.align(self.log.items())?)
    }

    fn protocol(&self, cfg: &RunConfig) -> ProtocolConfig {
        ProtocolConfig {
            scenario: cfg.eval.scenario,
            target: Target::Test,
            k: cfg.k(),
            probe_k: cfg.eval.probe_k,
            seeds: cfg.eval.seeds.clone(),
            shuffled_seeds: cfg.eval.shuffled_seeds.clone(),
        }
    }
}

fn load_log(cfg: &RunConfig) -> Result<InteractionLog> {
    let path = cfg.interactions_path();
    let bytes = read_bytes(&path, "synth")?;
    parse_interactions(BufReader::new(bytes.as_slice())).with_context(|| format!("parsing {}", path.display()))
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let data = generate(&cfg.synth)?;
    let mut log = Vec::new();
    data.log.write_tsv(&mut log)?;
    write(&cfg.interactions_path(), log)?;
    let mut table = Vec::new();
    data.table.write_text(&mut table)?;
    write(&cfg.embeddings_path(), table)?;
    Ok(())
}

pub fn split(cfg: &RunConfig) -> Result<()> {
    let log = load_log(cfg)?;
    let mut params = SplitParams::last_month(&log, cfg.split.seed)?;
    if let Some(b) = cfg.split.boundary {
        params.boundary = b;
    }
    params.lookback = cfg.split.lookback_days * DAY;
    params.val_user_fraction = cfg.split.val_fraction;
    let split = temporal_split(&log, params)?;
    let dir = cfg.split_dir();
    write_split(&split, &log, &dir)?;
    println!(
        "wrote {} (train {}, validation {}, hot test {}, cold test {}, cold items {})",
        dir.display(),
        split.train.len(),
        split.validation.len(),
        split.hot_test.len(),
        split.cold_test.len(),
        split.cold_items.len()
    );
    Ok(())
}

fn first_seed(cfg: &RunConfig) -> Result<u64> {
    cfg.eval.seeds.first().copied().context("no seeds configured")
}

fn checkpoint_path(cfg: &RunConfig, name: &str, label: &str, seed: u64) -> PathBuf {
    cfg.paths.out.join("checkpoints").join(format!("{name}.{}.seed{seed}.ckpt", slug(label)))
}

fn history_tsv(history: &TrainHistory) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    let mut out = String::from("epoch\tloss\tvalidation\tlr\n");
    let _ = writeln!(out, "0\tNA\t{}\tNA", opt(history.initial_validation));
    for e in &history.epochs {
        let _ = writeln!(out, "{}\t{:.6}\t{}\t{:e}", e.epoch, e.loss, opt(e.validation), e.lr);
    }
    let _ = writeln!(out, "# best_epoch = {}", history.best_epoch);
    let _ = writeln!(out, "# stopped_early = {}", history.stopped_early);
    out
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::load(cfg)?;
    let index = SplitIndex::new(&ws.split);
    let par = ws.par()?;
    let seed = first_seed(cfg)?;
    let probe = Some(ValidationProbe::new(&index, cfg.eval.probe_k));
    for name in &cfg.model.names {
        let spec = cfg.spec(name)?.with_seed(seed);
        let mut ckpt = Checkpoint::new();
        ckpt.set_meta("model", name);
        ckpt.set_meta("seed", seed);
        ckpt.set_meta("par_label", ws.label());
        let history = match &spec {
            ModelSpec::Knn | ModelSpec::PopRec => {
                println!("{name} has no trainable parameters; nothing to train");
                continue;
            }
            ModelSpec::Shallow(h) => {
                let (model, history) = train_shallow(par.clone(), ws.label(), &index, h, probe)?;
                model.save(&mut ckpt);
                history
            }
            ModelSpec::Elsa(h) => {
                let (model, history) = train_elsa(&index, h, probe)?;
                model.save(&mut ckpt);
                history
            }
            ModelSpec::Hybrid(h) => {
                let (model, history) = train_hybrid(&par, ws.label(), &index, h, probe)?;
                model.save(&mut ckpt);
                history
            }
            ModelSpec::Bimodal { elsa, bimodal, .. } => {
                let (elsa_model, _) = train_elsa(&index, elsa, probe)?;
                let (model, history) =
                    parbench::bimodal::train_bimodal(&elsa_model, &par, ws.label(), &index, bimodal, probe)?;
                elsa_model.save(&mut ckpt);
                model.save(&mut ckpt);
                history
            }
        };
        let path = checkpoint_path(cfg, name, ws.label(), seed);
        write(&path, ckpt.to_bytes()?)?;
        write(&path.with_extension("history.tsv"), history_tsv(&history))?;
    }
    Ok(())
}

fn load_scorer<'a>(
    cfg: &RunConfig,
    name: &str,
    ws: &Workspace,
    index: &'a SplitIndex,
    par: &Matrix,
) -> Result<Box<dyn Scorer + 'a>> {
    let spec = cfg.spec(name)?;
    if !spec.is_trained() {
        return Ok(build_scorer(&spec, par, ws.label(), index, cfg.eval.probe_k)?);
    }
    let seed = first_seed(cfg)?;
    let path = checkpoint_path(cfg, name, ws.label(), seed);
    let ckpt = Checkpoint::from_bytes(&read_bytes(&path, "train")?)
        .with_context(|| format!("reading checkpoint {}", path.display()))?;
    if ckpt.meta("model") != Some(name) {
        bail!("checkpoint {} does not hold a {name} model", path.display());
    }
    Ok(match spec {
        ModelSpec::Shallow(_) => Box::new(ShallowModel::load(&ckpt, par.clone())?.scorer()?),
        ModelSpec::Elsa(_) => Box::new(ElsaScorer::new(index, ElsaModel::load(&ckpt)?.a, None)),
        ModelSpec::Hybrid(_) => Box::new(HybridModel::load(&ckpt)?.scorer(index, par)?),
        ModelSpec::Bimodal { variant, .. } => {
            let elsa = ElsaModel::load(&ckpt)?;
            Box::new(BimodalModel::load(&ckpt)?.scorer(&elsa, par, index, variant)?)
        }
        ModelSpec::Knn | ModelSpec::PopRec => unreachable!("handled above"),
    })
}

fn recs_tsv(recs: &BTreeMap<usize, Ranking>, log: &InteractionLog) -> String {
    let mut out = String::from("user\trank\titem\tscore\n");
    for (&u, ranking) in recs {
        for (rank, &(item, score)) in ranking.entries().iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}\t{score:.6}", log.users()[u], rank + 1, log.items()[item]);
        }
    }
    out
}

pub fn recommend(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::load(cfg)?;
    let index = SplitIndex::new(&ws.split);
    let par = ws.par()?;
    let scenario = cfg.eval.scenario;
    for name in &cfg.model.names {
        let spec = cfg.spec(name)?;
        spec.check_scenario(scenario)?;
        let scorer = load_scorer(cfg, name, &ws, &index, &par)?;
        let users = truth(&index, scenario, Target::Test)?.keys().copied();
        let recs = recommend_users(scorer.as_ref(), users, cfg.k(), candidates(&index, scenario), |u| {
            &index.train_items[u]
        })?;
        let path = cfg
            .paths
            .out
            .join("recs")
            .join(format!("{}.{}.{scenario}.tsv", spec.name(), slug(ws.label())));
        write(&path, recs_tsv(&recs, &ws.log))?;
    }
    Ok(())
}

fn runs_tsv(outcomes: &[RunOutcome]) -> String {
    let mut out = String::from("seed\tshuffled\tk\tusers\thitrate\trecall\tndcg\n");
    for o in outcomes {
        let a = &o.report.aggregate;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            o.seed, o.shuffled, o.report.k, o.report.n_users, a.hitrate, a.recall, a.ndcg
        );
    }
    out
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::load(cfg)?;
    let index = SplitIndex::new(&ws.split);
    let protocol = ws.protocol(cfg);
    let specs: Vec<ModelSpec> = cfg.model.names.iter().map(|n| cfg.spec(n)).collect::<Result<_>>()?;
    for spec in &specs {
        spec.check_scenario(protocol.scenario)?;
    }
    truth(&index, protocol.scenario, protocol.target)?;
    let plan = plan_runs(&ws.table, ws.log.items(), &protocol)?;
    for spec in &specs {
        let outcomes: Vec<RunOutcome> = plan
            .par_iter()
            .map(|(seed, shuffled, par)| {
                let (report, recommendations) = run_once(spec, par, ws.label(), &index, &protocol, *seed)?;
                Ok(RunOutcome {
                    seed: *seed,
                    shuffled: *shuffled,
                    report,
                    recommendations,
                })
            })
            .collect::<parbench::Result<_>>()?;
        let rows = rows_for(&spec.name(), ws.label(), protocol.scenario, protocol.k, &summarize(&outcomes)?);
        let stem = format!("{}.{}.{}", spec.name(), slug(ws.label()), protocol.scenario);
        let eval_dir = cfg.paths.out.join("eval");
        write(&eval_dir.join(format!("{stem}.tsv")), to_tsv(&rows))?;
        write(&eval_dir.join("runs").join(format!("{stem}.tsv")), runs_tsv(&outcomes))?;
    }
    report(cfg)
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.paths.out.join("eval");
    if !dir.is_dir() {
        return Err(missing(&dir, "evaluate"));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "tsv"));
    files.sort();
    if files.is_empty() {
        return Err(missing(&dir.join("*.tsv"), "evaluate"));
    }
    let mut sets = Vec::with_capacity(files.len());
    for f in &files {
        let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        sets.push(parse_tsv(&text).with_context(|| format!("parsing {}", f.display()))?);
    }
    let rows = merge(sets);
    write(&cfg.paths.out.join("report.tsv"), to_tsv(&rows))?;
    let table = render_table(&rows);
    write(&cfg.paths.out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}
