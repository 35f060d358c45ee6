use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{ema_baseline, RandomProposer, TrmModel, TrmProposer, UcbPolicy};
use crate::channel::{generate_trajectory, ChannelGrid, ChannelModel, Scene, TrajectorySlot};
use crate::d3pm::D3pmModel;
use crate::env::{
    read_trace, run_behavior_episode, run_episode, write_trace, EpisodeLog, HistoryBuffer, Proposal, Proposer,
    ProbeRecord, SlotView, TraceHeader,
};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::{compute_metrics, MetricsReport};
use crate::nn::checkpoint;
use crate::ranking::{D3pmProposer, Generator};
use crate::rng::{derive_seed, rng_from_seed, streams, SimRng};
use crate::training::{build_examples, fit};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    fn stream(self) -> u64 {
        match self {
            Split::Train => streams::TRAIN_TRAJ,
            Split::Eval => streams::EVAL_TRAJ,
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Eval => "eval.jsonl",
        }
    }
}

/// A validated configuration together with its channel model.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: ChannelModel,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut scene_rng = rng_from_seed(derive_seed(config.seed, &[streams::SCENE]));
        let scene = Scene::generate(&config.channel.scene, &mut scene_rng);
        let mut model = ChannelModel::new(&config.channel, scene)?;
        if let Some(path) = &config.data.channel_grid {
            model = model.with_grid(ChannelGrid::load(path)?)?;
        }
        Ok(Experiment { config, model })
    }

    pub fn n_trajectories(&self, split: Split) -> usize {
        match split {
            Split::Train => self.config.data.train_trajectories,
            Split::Eval => self.config.data.eval_trajectories,
        }
    }

    pub fn trajectory(&self, split: Split, index: usize) -> Vec<TrajectorySlot> {
        let c = &self.config;
        let mut rng = rng_from_seed(derive_seed(c.seed, &[split.stream(), index as u64]));
        generate_trajectory(&self.model, &c.channel.mobility, c.trajectory_slots(), c.channel.slot_s, &mut rng)
    }

    pub fn trajectories(&self, split: Split) -> Vec<Vec<TrajectorySlot>> {
        (0..self.n_trajectories(split)).into_par_iter().map(|i| self.trajectory(split, i)).collect()
    }

    /// Behavior-policy logs for every trajectory of a split.
    pub fn collect(&self, split: Split) -> Result<Vec<EpisodeLog>> {
        let c = &self.config;
        (0..self.n_trajectories(split))
            .into_par_iter()
            .map(|i| {
                let traj = self.trajectory(split, i);
                let mut rng = rng_from_seed(derive_seed(c.seed, &[streams::BEHAVIOR, split.stream(), i as u64]));
                run_behavior_episode(i, &traj, &c.probing, &mut rng)
            })
            .collect()
    }
}

/// Writes `train.jsonl` and `eval.jsonl` into `out`.
pub fn gen_data(exp: &Experiment, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let header = TraceHeader::new(exp.config.seed, serde_json::to_value(&exp.config).expect("config serializes"));
    for split in [Split::Train, Split::Eval] {
        let logs = exp.collect(split)?;
        write_trace(&out.join(split.file_name()), &header, &logs)?;
    }
    Ok(())
}

/// Reads and revalidates a trace file.
pub fn load_trace(cfg: &ExperimentConfig, path: &Path) -> Result<Vec<EpisodeLog>> {
    if !path.exists() {
        return Err(Error::validation(path.display().to_string(), "trace file not found"));
    }
    let (_, logs) = read_trace(path)?;
    for ep in &logs {
        ep.validate(cfg.n_beams(), cfg.probing.probes)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    Ok(logs)
}

#[derive(Clone, Debug, Default)]
pub struct Models {
    pub d3pm: Option<Arc<D3pmModel>>,
    pub trm: Option<Arc<TrmModel>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossRow {
    pub model: String,
    pub epoch: usize,
    pub loss: f64,
}

pub fn new_d3pm(cfg: &ExperimentConfig) -> Result<D3pmModel> {
    let p = &cfg.probing;
    let seed = derive_seed(cfg.seed, &[streams::INIT, 0]);
    D3pmModel::new(&cfg.encoder, &cfg.diffusion, cfg.n_beams(), p.probes, p.history, seed)
}

pub fn new_trm(cfg: &ExperimentConfig) -> Result<TrmModel> {
    let p = &cfg.probing;
    let seed = derive_seed(cfg.seed, &[streams::INIT, 1]);
    TrmModel::new(&cfg.encoder, cfg.n_beams(), p.probes, p.history, seed)
}

/// Trains the requested models on behavior logs. Returns the models and
/// the per-epoch losses.
pub fn train_models(cfg: &ExperimentConfig, logs: &[EpisodeLog], d3pm: bool, trm: bool) -> Result<(Models, Vec<LossRow>)> {
    let p = &cfg.probing;
    let examples = build_examples(logs, p.history, &p.feedback, p.probes, cfg.n_beams())?;
    let mut models = Models::default();
    let mut rows = Vec::new();
    if d3pm {
        let mut m = new_d3pm(cfg)?;
        let mut rng = rng_from_seed(derive_seed(cfg.seed, &[streams::TRAINING]));
        let losses = fit(&mut m, &examples, &cfg.training, &mut rng, |_, _| {})?;
        rows.extend(losses.iter().enumerate().map(|(e, &l)| LossRow { model: "d3pm".into(), epoch: e + 1, loss: l }));
        models.d3pm = Some(Arc::new(m));
    }
    if trm {
        let mut m = new_trm(cfg)?;
        let mut rng = rng_from_seed(derive_seed(cfg.seed, &[streams::TRM]));
        let losses = fit(&mut m, &examples, &cfg.training, &mut rng, |_, _| {})?;
        rows.extend(losses.iter().enumerate().map(|(e, &l)| LossRow { model: "trm".into(), epoch: e + 1, loss: l }));
        models.trm = Some(Arc::new(m));
    }
    Ok((models, rows))
}

pub fn save_checkpoint(path: &Path, models: &Models) -> Result<()> {
    let mut entries = Vec::new();
    if let Some(m) = &models.d3pm {
        entries.extend(m.store.named_values());
    }
    if let Some(m) = &models.trm {
        entries.extend(m.store.named_values());
    }
    checkpoint::save(path, &entries)
}

/// Rebuilds whichever models the checkpoint holds weights for.
pub fn load_checkpoint(cfg: &ExperimentConfig, path: &Path) -> Result<Models> {
    let entries = checkpoint::load(path)?;
    let has = |prefix: &str| entries.iter().any(|(n, _)| n.starts_with(prefix));
    let mut models = Models::default();
    if has("den.") {
        let mut m = new_d3pm(cfg)?;
        m.store.load_named(&entries)?;
        models.d3pm = Some(Arc::new(m));
    }
    if has("trm.") {
        let mut m = new_trm(cfg)?;
        m.store.load_named(&entries)?;
        models.trm = Some(Arc::new(m));
    }
    Ok(models)
}

pub fn write_loss_csv(path: &Path, rows: &[LossRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProposerKind {
    D3pm,
    Trm,
    Ema,
    Ucb,
    OracleStub,
    RandomStub,
}

impl ProposerKind {
    pub const ALL: [ProposerKind; 6] = [
        ProposerKind::D3pm,
        ProposerKind::Trm,
        ProposerKind::Ema,
        ProposerKind::Ucb,
        ProposerKind::OracleStub,
        ProposerKind::RandomStub,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProposerKind::D3pm => "d3pm",
            ProposerKind::Trm => "trm",
            ProposerKind::Ema => "ema",
            ProposerKind::Ucb => "ucb",
            ProposerKind::OracleStub => "oracle-stub",
            ProposerKind::RandomStub => "random-stub",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, ProposerKind::D3pm | ProposerKind::Trm)
    }
}

impl FromStr for ProposerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProposerKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = ProposerKind::ALL.iter().map(|k| k.name()).collect();
            Error::Usage(format!("unknown proposer `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

impl std::fmt::Display for ProposerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn make_proposer(cfg: &ExperimentConfig, kind: ProposerKind, models: &Models) -> Result<Box<dyn Proposer>> {
    let p = &cfg.probing;
    let k = cfg.n_beams();
    let s = cfg.proposal_len();
    let missing = |what: &str| Error::Usage(format!("proposer `{kind}` needs a trained {what} model"));
    Ok(match kind {
        ProposerKind::D3pm => {
            let m = models.d3pm.clone().ok_or_else(|| missing("d3pm"))?;
            Box::new(D3pmProposer::learned(m, &cfg.online, &p.feedback, p.probes)?)
        }
        ProposerKind::Trm => {
            let m = models.trm.clone().ok_or_else(|| missing("trm"))?;
            Box::new(TrmProposer { model: m, feedback: p.feedback.clone(), probes: p.probes, proposal_len: s })
        }
        ProposerKind::Ema => Box::new(ema_baseline(&cfg.baselines.ema, k, p.probes, s)),
        ProposerKind::Ucb => Box::new(UcbPolicy::new(&cfg.baselines.ucb, &p.feedback, k, p.probes, s)),
        ProposerKind::OracleStub => {
            let schedule = cfg.diffusion.build()?;
            Box::new(D3pmProposer::stub(Generator::Oracle, schedule, &cfg.online, &p.feedback, p.probes, k))
        }
        ProposerKind::RandomStub => Box::new(RandomProposer { n_beams: k, probes: p.probes }),
    })
}

/// Accumulates wall-clock time spent in `propose`.
struct Timed {
    inner: Box<dyn Proposer>,
    elapsed: Duration,
    calls: usize,
}

impl Proposer for Timed {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn reset(&mut self) {
        self.inner.reset()
    }

    fn propose(&mut self, history: &HistoryBuffer, view: SlotView<'_>, rng: &mut SimRng) -> Result<Proposal> {
        let start = Instant::now();
        let out = self.inner.propose(history, view, rng);
        self.elapsed += start.elapsed();
        self.calls += 1;
        out
    }

    fn observe(&mut self, record: &ProbeRecord) {
        self.inner.observe(record)
    }
}

/// Metrics of one proposer under one evaluation seed.
#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub proposer: ProposerKind,
    pub seed: usize,
    pub report: MetricsReport,
    /// Mean seconds per `propose` call.
    pub seconds_per_slot: f64,
    pub logs: Vec<EpisodeLog>,
}

/// Runs `kind` on every evaluation trajectory for `seeds` seeds. With
/// `parallel` off everything runs on the calling thread, for timing.
pub fn evaluate(
    exp: &Experiment,
    trajectories: &[Vec<TrajectorySlot>],
    kind: ProposerKind,
    models: &Models,
    seeds: usize,
    parallel: bool,
) -> Result<Vec<EvalOutcome>> {
    let cfg = &exp.config;
    let run = |(seed, j): (usize, usize)| -> Result<(EpisodeLog, Duration, usize)> {
        let mut timed = Timed { inner: make_proposer(cfg, kind, models)?, elapsed: Duration::ZERO, calls: 0 };
        let mut rng = rng_from_seed(derive_seed(cfg.seed, &[streams::EVALUATION, seed as u64, j as u64]));
        let log = run_episode(j, &trajectories[j], &cfg.probing, &mut timed, &mut rng)?;
        Ok((log, timed.elapsed, timed.calls))
    };
    let jobs: Vec<(usize, usize)> = (0..seeds).flat_map(|s| (0..trajectories.len()).map(move |j| (s, j))).collect();
    let results: Vec<_> = if parallel {
        jobs.into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.into_iter().map(run).collect::<Result<_>>()?
    };
    let mut out = Vec::with_capacity(seeds);
    let n = trajectories.len();
    for (seed, chunk) in results.chunks(n.max(1)).enumerate() {
        let logs: Vec<EpisodeLog> = chunk.iter().map(|r| r.0.clone()).collect();
        let elapsed: Duration = chunk.iter().map(|r| r.1).sum();
        let calls: usize = chunk.iter().map(|r| r.2).sum();
        let report = compute_metrics(&logs, cfg.probing.warmup_slots, &cfg.eval.coverage)?;
        out.push(EvalOutcome {
            proposer: kind,
            seed,
            report,
            seconds_per_slot: elapsed.as_secs_f64() / calls.max(1) as f64,
            logs,
        });
    }
    Ok(out)
}

/// Per-seed rows `proposer,seed,metric,value` followed by `mean` and `std`
/// rows per metric.
pub fn write_metrics_csv(path: &Path, outcomes: &[EvalOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["proposer", "seed", "metric", "value"]).map_err(err)?;
    let mut kinds: Vec<ProposerKind> = Vec::new();
    for o in outcomes {
        if !kinds.contains(&o.proposer) {
            kinds.push(o.proposer);
        }
    }
    for kind in kinds {
        let group: Vec<&EvalOutcome> = outcomes.iter().filter(|o| o.proposer == kind).collect();
        for o in &group {
            for (metric, value) in o.report.entries() {
                w.write_record([kind.name(), &o.seed.to_string(), &metric, &value.to_string()]).map_err(err)?;
            }
        }
        let reports: Vec<MetricsReport> = group.iter().map(|o| o.report.clone()).collect();
        for s in crate::harness::metrics::summarize(&reports) {
            w.write_record([kind.name(), "mean", &s.metric, &s.mean.to_string()]).map_err(err)?;
            w.write_record([kind.name(), "std", &s.metric, &s.std.to_string()]).map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
