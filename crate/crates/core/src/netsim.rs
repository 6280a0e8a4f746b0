//! Round-driven experiment orchestration.
//!
//! An [`ExperimentConfig`] fully determines an experiment: dataset, shards,
//! traces, hash family, and every client's initial state derive from its
//! seed, so repeated runs produce bitwise-identical metrics. One round runs
//! every client against its trace segment, aggregates, and evaluates the
//! post-update model on a held-out test set.

use serde::{Deserialize, Serialize};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bandwidth::{
    generate_trace, load_traces, mae, AwarenessBuffer, BandwidthTrace, LinkModel, PredictorState,
};
use crate::error::{Error, Result};
use crate::federation::{
    aggregate, client_round, fedavg_aggregate, fedavg_client_round, partition_noniid,
    sketchfl_client_round, ClientRoundRecord, ClientState, RoundOptions,
};
use crate::mlkit::{evaluate, make_synthetic_dataset, Dataset, ModelKind, ModelWeights};
use crate::sketch::{decompress, splitmix64, AggregatedSketch, CollisionPolicy, HashFamily, GOLDEN};

/// Which protocol an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Adapcomfl,
    Sketchfl,
    Fedavg,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Adapcomfl => "adapcomfl",
            Algorithm::Sketchfl => "sketchfl",
            Algorithm::Fedavg => "fedavg",
        }
    }
}

/// Sketch geometry and merge policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SketchParams {
    pub columns: usize,
    pub row_min: usize,
    pub row_max: usize,
    pub cv_threshold: f64,
    /// Constant height used by the fixed-size baseline.
    pub sketchfl_rows: usize,
}

impl Default for SketchParams {
    fn default() -> Self {
        SketchParams { columns: 64, row_min: 3, row_max: 10, cv_threshold: 0.5, sketchfl_rows: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKindParam {
    LastValue,
    WindowAr,
    MiniLstm,
}

/// Bandwidth predictor settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorParams {
    pub kind: PredictorKindParam,
    /// Input window length `f`.
    pub sequence_length: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    /// Awareness buffer capacity `m`.
    pub buffer_capacity: usize,
    /// Incremental fitting epochs per round.
    pub train_epochs: usize,
    pub train_lr: f64,
}

impl Default for PredictorParams {
    fn default() -> Self {
        PredictorParams {
            kind: PredictorKindParam::MiniLstm,
            sequence_length: 6,
            hidden1: 16,
            hidden2: 8,
            buffer_capacity: 60,
            train_epochs: 8,
            train_lr: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKindParam {
    Logistic,
    Mlp,
}

/// Classifier settings. The defaults give a 200-parameter logistic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub kind: ModelKindParam,
    pub dims: usize,
    pub classes: usize,
    /// Hidden width, MLP only.
    pub hidden: usize,
    pub lr: f64,
    pub local_epochs: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            kind: ModelKindParam::Logistic,
            dims: 24,
            classes: 8,
            hidden: 32,
            lr: crate::mlkit::DEFAULT_LEARNING_RATE,
            local_epochs: 1,
        }
    }
}

impl ModelParams {
    pub fn model_kind(&self) -> ModelKind {
        match self.kind {
            ModelKindParam::Logistic => {
                ModelKind::Logistic { dims: self.dims, classes: self.classes }
            }
            ModelKindParam::Mlp => {
                ModelKind::Mlp { dims: self.dims, hidden: self.hidden, classes: self.classes }
            }
        }
    }
}

/// Synthetic dataset settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataParams {
    pub samples: usize,
    pub class_separation: f64,
    /// Dirichlet concentration of the label split; smaller is more skewed.
    pub alpha: f64,
    /// Fraction held out globally before partitioning.
    pub test_fraction: f64,
}

impl Default for DataParams {
    fn default() -> Self {
        DataParams { samples: 2000, class_separation: 5.0, alpha: 0.5, test_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSourceParam {
    Synthetic,
    File,
}

/// Where client bandwidth comes from.
///
/// The synthetic defaults are sized so that the default sketch geometry
/// actually exercises the row clamp: with 64 columns and 32-bit slots,
/// `rows = bw_mbps * 250000 / 64`, so a couple of kilobytes per second of
/// bandwidth lands inside the `[3, 10]` row range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceParams {
    pub source: TraceSourceParam,
    /// Trace CSV path, file source only.
    pub path: Option<String>,
    pub duration_s: u64,
    pub base_bw_mbps: f64,
    pub daily_amplitude_mbps: f64,
    pub noise_std_mbps: f64,
    pub regime_shift_prob: f64,
    /// Trace seconds consumed per round while training.
    pub training_seconds: usize,
    /// Per-client log-uniform spread of the base level, in `[1/s, s]`.
    pub client_spread: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        TraceParams {
            source: TraceSourceParam::Synthetic,
            path: None,
            duration_s: 1200,
            base_bw_mbps: 0.002,
            daily_amplitude_mbps: 0.0008,
            noise_std_mbps: 0.0002,
            regime_shift_prob: 0.002,
            training_seconds: 10,
            client_spread: 2.0,
        }
    }
}

/// Complete, serializable description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub clients: usize,
    pub rounds: usize,
    pub link: LinkConfig,
    pub sketch: SketchParams,
    pub predictor: PredictorParams,
    pub model: ModelParams,
    pub data: DataParams,
    pub trace: TraceParams,
}

/// Uplink channel settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub deadline_s: f64,
    pub snr: f64,
    pub bits_per_value: u32,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig { deadline_s: 0.5, snr: 3.0, bits_per_value: 32 }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            algorithm: Algorithm::Adapcomfl,
            clients: 7,
            rounds: 100,
            link: LinkConfig::default(),
            sketch: SketchParams::default(),
            predictor: PredictorParams::default(),
            model: ModelParams::default(),
            data: DataParams::default(),
            trace: TraceParams::default(),
        }
    }
}

impl ExperimentConfig {
    /// Checks every field, reporting all offending fields at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<String> = Vec::new();
        let mut check = |ok: bool, field: &str, why: &str| {
            if !ok {
                bad.push(format!("{field} ({why})"));
            }
        };
        check(self.clients >= 1, "clients", "need at least one");
        check(self.rounds >= 1, "rounds", "need at least one");
        check(self.link.deadline_s > 0.0, "link.deadline_s", "must be positive");
        check(self.link.snr >= 0.0, "link.snr", "must be non-negative");
        check(self.link.bits_per_value >= 1, "link.bits_per_value", "must be positive");
        check(self.sketch.columns >= 1, "sketch.columns", "must be positive");
        check(self.sketch.row_min >= 1, "sketch.row_min", "must be positive");
        check(
            self.sketch.row_min <= self.sketch.row_max,
            "sketch.row_max",
            "must be >= row_min",
        );
        check(self.sketch.cv_threshold >= 0.0, "sketch.cv_threshold", "must be non-negative");
        check(self.sketch.sketchfl_rows >= 1, "sketch.sketchfl_rows", "must be positive");
        check(
            self.predictor.sequence_length >= 2,
            "predictor.sequence_length",
            "need at least 2",
        );
        check(
            self.predictor.buffer_capacity > self.predictor.sequence_length,
            "predictor.buffer_capacity",
            "must exceed sequence_length",
        );
        check(self.predictor.train_lr > 0.0, "predictor.train_lr", "must be positive");
        if self.predictor.kind == PredictorKindParam::MiniLstm {
            check(self.predictor.hidden1 >= 1, "predictor.hidden1", "must be positive");
            check(self.predictor.hidden2 >= 1, "predictor.hidden2", "must be positive");
        }
        check(self.model.dims >= 1, "model.dims", "must be positive");
        check(self.model.classes >= 2, "model.classes", "need at least two");
        if self.model.kind == ModelKindParam::Mlp {
            check(self.model.hidden >= 1, "model.hidden", "must be positive");
        }
        check(self.model.lr > 0.0, "model.lr", "must be positive");
        check(self.model.local_epochs >= 1, "model.local_epochs", "need at least one");
        check(self.data.samples >= 1, "data.samples", "must be positive");
        check(
            self.data.class_separation >= 0.0,
            "data.class_separation",
            "must be non-negative",
        );
        check(self.data.alpha > 0.0, "data.alpha", "must be positive");
        check(
            self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0,
            "data.test_fraction",
            "must lie in (0, 1)",
        );
        let test_count = self.test_count();
        check(
            self.data.samples > test_count && self.data.samples - test_count >= self.clients,
            "data.samples",
            "too few training samples for the client count",
        );
        check(
            self.trace.training_seconds >= 1,
            "trace.training_seconds",
            "need at least one second",
        );
        if self.algorithm == Algorithm::Adapcomfl {
            check(
                self.trace.training_seconds > self.predictor.sequence_length,
                "trace.training_seconds",
                "must cover sequence_length + 1 samples for predictor fitting",
            );
        }
        match self.trace.source {
            TraceSourceParam::Synthetic => {
                check(self.trace.base_bw_mbps > 0.0, "trace.base_bw_mbps", "must be positive");
                check(
                    self.trace.daily_amplitude_mbps >= 0.0,
                    "trace.daily_amplitude_mbps",
                    "must be non-negative",
                );
                check(
                    self.trace.noise_std_mbps >= 0.0,
                    "trace.noise_std_mbps",
                    "must be non-negative",
                );
                check(
                    (0.0..=1.0).contains(&self.trace.regime_shift_prob),
                    "trace.regime_shift_prob",
                    "must lie in [0, 1]",
                );
                check(self.trace.client_spread >= 1.0, "trace.client_spread", "must be >= 1");
                check(
                    self.trace.duration_s as usize
                        > self.rounds * self.trace.training_seconds,
                    "trace.duration_s",
                    "must exceed rounds * training_seconds",
                );
            }
            TraceSourceParam::File => {
                check(self.trace.path.is_some(), "trace.path", "required for file source");
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid config fields: {}", bad.join(", "))))
        }
    }

    fn test_count(&self) -> usize {
        ((self.data.samples as f64 * self.data.test_fraction).round() as usize)
            .clamp(1, self.data.samples.saturating_sub(1))
    }

    fn link_model(&self) -> LinkModel {
        LinkModel {
            deadline_s: self.link.deadline_s,
            snr: self.link.snr,
            bits_per_value: self.link.bits_per_value,
        }
    }
}

fn sub_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ tag.wrapping_mul(GOLDEN))
}

/// Per-client outcome plus the client's running prediction error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientRoundReport {
    #[serde(flatten)]
    pub record: ClientRoundRecord,
    /// MAE of this client's predictions over rounds 0..=r.
    pub predictor_mae_so_far_mbps: f64,
}

/// Everything recorded about one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub clients: Vec<ClientRoundReport>,
    /// Accuracy of the model produced by this round's aggregate.
    pub global_accuracy_pct: f64,
    /// Mean over clients of their running prediction MAE.
    pub mean_mae_so_far_mbps: f64,
    /// Synchronous-barrier view: the slowest client's uplink time.
    pub round_time_s: f64,
}

/// Whole-run digest; everything except the fingerprints is recomputable from
/// the round records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub algorithm: String,
    pub rounds: usize,
    pub clients: usize,
    pub model_parameters: usize,
    pub final_accuracy_pct: f64,
    pub mean_compression_ratio: f64,
    pub mean_round_time_s: f64,
    pub deadline_violations: usize,
    pub predictor_mae_mbps: f64,
    /// Order-insensitive per-shard content hashes, hex.
    pub shard_hashes: Vec<String>,
}

impl Summary {
    /// Re-derives the aggregate fields from round records.
    pub fn recompute(records: &[RoundRecord]) -> (f64, f64, f64, usize, f64) {
        let last = records.last().expect("at least one round");
        let final_accuracy = last.global_accuracy_pct;
        let mut cr_sum = 0.0;
        let mut cr_count = 0usize;
        let mut violations = 0usize;
        let mut time_sum = 0.0;
        for r in records {
            time_sum += r.round_time_s;
            for c in &r.clients {
                cr_sum += c.record.compression_ratio;
                cr_count += 1;
                if !c.record.deadline_met {
                    violations += 1;
                }
            }
        }
        let mae_mean = last.clients.iter().map(|c| c.predictor_mae_so_far_mbps).sum::<f64>()
            / last.clients.len() as f64;
        (
            final_accuracy,
            cr_sum / cr_count as f64,
            time_sum / records.len() as f64,
            violations,
            mae_mean,
        )
    }
}

/// Round records plus the run digest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub records: Vec<RoundRecord>,
    pub summary: Summary,
}

/// Materialized experiment state: clients, traces, test set, and the
/// aggregate pending application at the next round.
pub struct ExperimentWorld {
    config: ExperimentConfig,
    link: LinkModel,
    family: HashFamily,
    policy: CollisionPolicy,
    options: RoundOptions,
    clients: Vec<ClientState>,
    traces: Vec<BandwidthTrace>,
    test_set: Dataset,
    shard_hashes: Vec<u64>,
    prev_agg: Option<AggregatedSketch>,
    broadcast: Option<ModelWeights>,
    predictions: Vec<Vec<f64>>,
    actuals: Vec<Vec<f64>>,
}

impl ExperimentWorld {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let kind = config.model.model_kind();
        let n = kind.param_count();

        let full = make_synthetic_dataset(
            sub_seed(config.seed, 1),
            config.data.samples,
            config.model.dims,
            config.model.classes,
            config.data.class_separation,
        )?;
        let test_count = config.test_count();
        let train_count = full.len() - test_count;
        let train = full.subset(&(0..train_count).collect::<Vec<_>>())?;
        let test_set = full.subset(&(train_count..full.len()).collect::<Vec<_>>())?;
        let shards =
            partition_noniid(&train, config.clients, config.data.alpha, sub_seed(config.seed, 2))?;
        let shard_hashes: Vec<u64> = shards.iter().map(|s| s.content_hash()).collect();

        let traces = build_traces(&config)?;
        let needed = config.rounds * config.trace.training_seconds + 1;
        for t in &traces {
            if t.len() < needed {
                return Err(Error::Validation(format!(
                    "trace for client {} has {} samples, need {needed}",
                    t.client_id(),
                    t.len()
                )));
            }
        }

        let initial = match kind {
            ModelKind::Logistic { .. } => ModelWeights::zeros(kind)?,
            ModelKind::Mlp { .. } => ModelWeights::init(kind, sub_seed(config.seed, 3))?,
        };
        let mut clients = Vec::with_capacity(config.clients);
        for (i, shard) in shards.into_iter().enumerate() {
            let predictor = match config.predictor.kind {
                PredictorKindParam::LastValue => PredictorState::last_value(),
                PredictorKindParam::WindowAr => {
                    PredictorState::window_ar(config.predictor.sequence_length)?
                }
                PredictorKindParam::MiniLstm => PredictorState::mini_lstm(
                    config.predictor.sequence_length,
                    config.predictor.hidden1,
                    config.predictor.hidden2,
                    sub_seed(config.seed, 0xb0 + i as u64),
                )?,
            };
            clients.push(ClientState::new(
                i as u32,
                initial.clone(),
                predictor,
                AwarenessBuffer::new(config.predictor.buffer_capacity)?,
                shard,
                config.model.lr,
            )?);
        }

        let family = HashFamily::new(
            config.seed,
            n,
            config.sketch.columns,
            config.sketch.row_max.max(config.sketch.sketchfl_rows),
        )?;
        let policy = CollisionPolicy::new(config.sketch.cv_threshold)?;
        let options = RoundOptions {
            local_epochs: config.model.local_epochs,
            training_seconds: config.trace.training_seconds,
            row_min: config.sketch.row_min,
            row_max: config.sketch.row_max,
            predictor_epochs: config.predictor.train_epochs,
            predictor_lr: config.predictor.train_lr,
        };
        let link = config.link_model();
        let client_count = config.clients;
        Ok(ExperimentWorld {
            config,
            link,
            family,
            policy,
            options,
            clients,
            traces,
            test_set,
            shard_hashes,
            prev_agg: None,
            broadcast: None,
            predictions: vec![Vec::new(); client_count],
            actuals: vec![Vec::new(); client_count],
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn shard_hashes(&self) -> &[u64] {
        &self.shard_hashes
    }

    /// Runs round `r`: every client in ascending id order, then aggregation
    /// and evaluation of the freshly produced model.
    pub fn run_round(&mut self, round: usize) -> Result<RoundRecord> {
        let mut client_records: Vec<ClientRoundRecord> = Vec::with_capacity(self.clients.len());
        let accuracy = match self.config.algorithm {
            Algorithm::Adapcomfl | Algorithm::Sketchfl => {
                let mut sketches = Vec::with_capacity(self.clients.len());
                for (i, state) in self.clients.iter_mut().enumerate() {
                    let trace = &self.traces[i];
                    let (sketch, record) = match self.config.algorithm {
                        Algorithm::Adapcomfl => client_round(
                            state,
                            self.prev_agg.as_ref(),
                            &self.link,
                            &self.family,
                            &self.policy,
                            trace,
                            &self.options,
                        )?,
                        _ => sketchfl_client_round(
                            state,
                            self.prev_agg.as_ref(),
                            &self.link,
                            &self.family,
                            &self.policy,
                            trace,
                            &self.options,
                            self.config.sketch.sketchfl_rows,
                        )?,
                    };
                    sketches.push(sketch);
                    client_records.push(record);
                }
                self.assert_synchrony();
                let agg = aggregate(&sketches)?;
                let mut eval_weights = self.clients[0].weights.clone();
                eval_weights.apply_update(decompress(&agg, &self.family)?.values())?;
                self.prev_agg = Some(agg);
                evaluate(&eval_weights, &self.test_set)?
            }
            Algorithm::Fedavg => {
                let mut uploads = Vec::with_capacity(self.clients.len());
                let mut counts = Vec::with_capacity(self.clients.len());
                for (i, state) in self.clients.iter_mut().enumerate() {
                    let (weights, record) = fedavg_client_round(
                        state,
                        self.broadcast.as_ref(),
                        &self.link,
                        &self.traces[i],
                        &self.options,
                    )?;
                    counts.push(state.shard.len());
                    uploads.push(weights);
                    client_records.push(record);
                }
                let merged = fedavg_aggregate(&uploads, &counts)?;
                let accuracy = evaluate(&merged, &self.test_set)?;
                self.broadcast = Some(merged);
                accuracy
            }
        };

        let mut reports = Vec::with_capacity(client_records.len());
        let mut mae_sum = 0.0;
        let mut round_time: f64 = 0.0;
        for record in client_records {
            let i = record.client_id as usize;
            self.predictions[i].push(record.b_pred_mbps);
            self.actuals[i].push(record.b_true_mbps);
            let mae_so_far = mae(&self.predictions[i], &self.actuals[i])?;
            mae_sum += mae_so_far;
            round_time = round_time.max(record.uplink_time_s);
            reports.push(ClientRoundReport { record, predictor_mae_so_far_mbps: mae_so_far });
        }
        Ok(RoundRecord {
            round,
            clients: reports,
            global_accuracy_pct: accuracy,
            mean_mae_so_far_mbps: mae_sum / self.clients.len() as f64,
            round_time_s: round_time,
        })
    }

    /// All clients must hold bitwise-identical weights after each round.
    fn assert_synchrony(&self) {
        let reference: Vec<u64> =
            self.clients[0].weights.values().iter().map(|v| v.to_bits()).collect();
        for c in &self.clients[1..] {
            let bits: Vec<u64> = c.weights.values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(reference, bits, "client {} weights diverged", c.client_id);
        }
    }
}

fn build_traces(config: &ExperimentConfig) -> Result<Vec<BandwidthTrace>> {
    match config.trace.source {
        TraceSourceParam::Synthetic => {
            let mut traces = Vec::with_capacity(config.clients);
            for i in 0..config.clients {
                let mut spread_rng =
                    ChaCha8Rng::seed_from_u64(sub_seed(config.seed, 0x5150 + i as u64));
                let ln_s = config.trace.client_spread.ln();
                let factor = (spread_rng.gen_range(-ln_s..=ln_s)).exp();
                traces.push(generate_trace(
                    i as u32,
                    sub_seed(config.seed, 0x714A + i as u64),
                    config.trace.duration_s,
                    config.trace.base_bw_mbps * factor,
                    config.trace.daily_amplitude_mbps * factor,
                    config.trace.noise_std_mbps * factor,
                    config.trace.regime_shift_prob,
                ));
            }
            Ok(traces)
        }
        TraceSourceParam::File => {
            let path = config.trace.path.as_ref().expect("validated");
            let traces = load_traces(path)?;
            if traces.len() < config.clients {
                return Err(Error::Validation(format!(
                    "trace file holds {} clients, config needs {}",
                    traces.len(),
                    config.clients
                )));
            }
            Ok(traces.into_iter().take(config.clients).collect())
        }
    }
}

/// Runs a full experiment: `rounds` rounds plus the summary digest.
pub fn run_experiment(config: ExperimentConfig) -> Result<ExperimentResult> {
    let mut world = ExperimentWorld::new(config)?;
    let rounds = world.config.rounds;
    let mut records = Vec::with_capacity(rounds);
    for r in 0..rounds {
        records.push(world.run_round(r)?);
    }
    let (final_accuracy, mean_cr, mean_time, violations, mae_mean) =
        Summary::recompute(&records);
    let summary = Summary {
        algorithm: world.config.algorithm.name().to_string(),
        rounds,
        clients: world.config.clients,
        model_parameters: world.config.model.model_kind().param_count(),
        final_accuracy_pct: final_accuracy,
        mean_compression_ratio: mean_cr,
        mean_round_time_s: mean_time,
        deadline_violations: violations,
        predictor_mae_mbps: mae_mean,
        shard_hashes: world.shard_hashes.iter().map(|h| format!("{h:016x}")).collect(),
    };
    Ok(ExperimentResult { records, summary })
}
