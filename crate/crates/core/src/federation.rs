//! Client and server round logic for sketch-compressed federated learning.
//!
//! Each round a client (1) applies the previous aggregated update, (2) runs
//! local training while its bandwidth trace feeds the awareness buffer,
//! (3) predicts its uplink bandwidth, (4) sizes its sketch to the predicted
//! volume, and (5) uploads the compressed gradient. The server zero-pads
//! sketches of unequal height to the tallest, counts contributors per row,
//! and averages row-wise. Baselines: a fixed-height sketch pipeline and
//! plain FedAvg over full weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::bandwidth::{
    uplink_time, uplink_volume, AwarenessBuffer, BandwidthTrace, LinkModel, PredictorState,
};
use crate::error::{Error, Result};
use crate::mlkit::{self, Dataset, ModelWeights};
use crate::sketch::{
    compress, decompress, rows_for_volume, AdaptiveSketch, AggregatedSketch, CollisionPolicy,
    GradientVector, HashFamily,
};

/// Everything a client owns across rounds.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: u32,
    pub weights: ModelWeights,
    pub predictor: PredictorState,
    pub buffer: AwarenessBuffer,
    pub shard: Dataset,
    /// Next unconsumed sample index into the client's bandwidth trace.
    pub trace_cursor: usize,
    /// Local learning rate; the uploaded gradient is scaled by it.
    pub lr: f64,
}

impl ClientState {
    pub fn new(
        client_id: u32,
        weights: ModelWeights,
        predictor: PredictorState,
        buffer: AwarenessBuffer,
        shard: Dataset,
        lr: f64,
    ) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(ClientState { client_id, weights, predictor, buffer, shard, trace_cursor: 0, lr })
    }
}

/// Knobs shared by every client round.
#[derive(Debug, Clone, Copy)]
pub struct RoundOptions {
    /// Full-batch local epochs folded into the uploaded gradient.
    pub local_epochs: usize,
    /// Trace seconds consumed (and observed) while training.
    pub training_seconds: usize,
    pub row_min: usize,
    pub row_max: usize,
    /// Incremental predictor-fitting epochs per round (LSTM only).
    pub predictor_epochs: usize,
    pub predictor_lr: f64,
}

/// Per-client outcome of one round, as reported in metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientRoundRecord {
    pub client_id: u32,
    pub b_pred_mbps: f64,
    pub b_true_mbps: f64,
    /// Sketch rows `a_i`; zero for the uncompressed baseline.
    pub rows: usize,
    /// Transmitted value slots `a_i * b` (model size `n` for FedAvg).
    pub d_prime_slots: u64,
    pub uplink_time_s: f64,
    pub deadline_met: bool,
    /// `d_prime_slots / n`.
    pub compression_ratio: f64,
}

enum SketchSizing {
    /// Rows from predicted volume, clamped into `[row_min, row_max]`.
    Adaptive,
    /// Constant rows, no prediction step.
    Fixed(usize),
}

/// One adaptive-compression client round. Returns the uploaded sketch and
/// the per-client record; the client's weights advance only by the applied
/// aggregate, never by the local training steps.
pub fn client_round(
    state: &mut ClientState,
    prev_agg: Option<&AggregatedSketch>,
    link: &LinkModel,
    family: &HashFamily,
    policy: &CollisionPolicy,
    trace: &BandwidthTrace,
    options: &RoundOptions,
) -> Result<(AdaptiveSketch, ClientRoundRecord)> {
    sketch_round(state, prev_agg, link, family, policy, trace, options, SketchSizing::Adaptive)
}

/// Fixed-size-sketch baseline round: identical flow, but the sketch height
/// is constant and no bandwidth prediction happens.
#[allow(clippy::too_many_arguments)]
pub fn sketchfl_client_round(
    state: &mut ClientState,
    prev_agg: Option<&AggregatedSketch>,
    link: &LinkModel,
    family: &HashFamily,
    policy: &CollisionPolicy,
    trace: &BandwidthTrace,
    options: &RoundOptions,
    fixed_rows: usize,
) -> Result<(AdaptiveSketch, ClientRoundRecord)> {
    sketch_round(
        state,
        prev_agg,
        link,
        family,
        policy,
        trace,
        options,
        SketchSizing::Fixed(fixed_rows),
    )
}

#[allow(clippy::too_many_arguments)]
fn sketch_round(
    state: &mut ClientState,
    prev_agg: Option<&AggregatedSketch>,
    link: &LinkModel,
    family: &HashFamily,
    policy: &CollisionPolicy,
    trace: &BandwidthTrace,
    options: &RoundOptions,
    sizing: SketchSizing,
) -> Result<(AdaptiveSketch, ClientRoundRecord)> {
    if state.weights.len() != family.domain_size() {
        return Err(Error::invalid(format!(
            "model has {} parameters, hash family expects {}",
            state.weights.len(),
            family.domain_size()
        )));
    }
    if let Some(agg) = prev_agg {
        let update = decompress(agg, family)?;
        state.weights.apply_update(update.values())?;
    }

    let gradient = local_gradient(state, options)?;
    let adaptive = matches!(sizing, SketchSizing::Adaptive);
    let observe = adaptive;
    consume_trace(state, trace, options.training_seconds, observe)?;
    let b_true = trace.samples()[state.trace_cursor].bw_mbps;

    let (b_pred, rows) = match sizing {
        SketchSizing::Adaptive => {
            state
                .predictor
                .train_mini_lstm(&state.buffer, options.predictor_epochs, options.predictor_lr)?;
            let b_pred = state.predictor.predict(&state.buffer)?;
            let volume = uplink_volume(link, b_pred);
            let rows =
                rows_for_volume(volume, family.columns(), options.row_min, options.row_max);
            (b_pred, rows)
        }
        SketchSizing::Fixed(rows) => (b_true, rows),
    };

    let sketch = compress(&GradientVector::new(gradient)?, rows, family, policy)?;
    let d_prime = sketch.volume_slots();
    let uplink = uplink_time(link, d_prime, b_true);
    let record = ClientRoundRecord {
        client_id: state.client_id,
        b_pred_mbps: b_pred,
        b_true_mbps: b_true,
        rows,
        d_prime_slots: d_prime,
        uplink_time_s: uplink,
        deadline_met: uplink <= link.deadline_s,
        compression_ratio: d_prime as f64 / family.domain_size() as f64,
    };
    Ok((sketch, record))
}

/// FedAvg baseline round: replace weights with the broadcast, train locally,
/// and upload the full weight vector (`n` slots).
pub fn fedavg_client_round(
    state: &mut ClientState,
    broadcast: Option<&ModelWeights>,
    link: &LinkModel,
    trace: &BandwidthTrace,
    options: &RoundOptions,
) -> Result<(ModelWeights, ClientRoundRecord)> {
    if let Some(w) = broadcast {
        state.weights = w.clone();
    }
    for _ in 0..options.local_epochs {
        let (_, grad) = mlkit::loss_and_grad(&state.weights, &state.shard)?;
        state.weights = mlkit::sgd_step(&state.weights, &grad, state.lr)?;
    }
    consume_trace(state, trace, options.training_seconds, false)?;
    let b_true = trace.samples()[state.trace_cursor].bw_mbps;
    let d_prime = state.weights.len() as u64;
    let uplink = uplink_time(link, d_prime, b_true);
    let record = ClientRoundRecord {
        client_id: state.client_id,
        b_pred_mbps: b_true,
        b_true_mbps: b_true,
        rows: 0,
        d_prime_slots: d_prime,
        uplink_time_s: uplink,
        deadline_met: uplink <= link.deadline_s,
        compression_ratio: 1.0,
    };
    Ok((state.weights.clone(), record))
}

/// Gradient uploaded after local training: the sum of `lr * grad` over
/// `local_epochs` full-batch steps. The client's persistent weights are left
/// untouched; only the next aggregate moves them.
fn local_gradient(state: &ClientState, options: &RoundOptions) -> Result<Vec<f64>> {
    let mut local = state.weights.clone();
    let mut total = vec![0.0; local.len()];
    for _ in 0..options.local_epochs {
        let (_, grad) = mlkit::loss_and_grad(&local, &state.shard)?;
        for (t, g) in total.iter_mut().zip(&grad) {
            *t += state.lr * g;
        }
        local = mlkit::sgd_step(&local, &grad, state.lr)?;
    }
    Ok(total)
}

fn consume_trace(
    state: &mut ClientState,
    trace: &BandwidthTrace,
    seconds: usize,
    observe: bool,
) -> Result<()> {
    // one sample beyond the training interval must remain: the upload instant
    if state.trace_cursor + seconds >= trace.len() {
        return Err(Error::InsufficientData(format!(
            "client {}: trace exhausted at cursor {} (+{seconds} training seconds, {} samples)",
            state.client_id,
            state.trace_cursor,
            trace.len()
        )));
    }
    for _ in 0..seconds {
        let sample = trace.samples()[state.trace_cursor];
        if observe {
            state.buffer.observe(sample.bw_mbps)?;
        }
        state.trace_cursor += 1;
    }
    Ok(())
}

/// Sketches zero-padded to a common height plus per-row contributor counts.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSketches {
    pub a_max: usize,
    pub cols: usize,
    /// One row-major `a_max x cols` matrix per client, input order preserved.
    pub padded: Vec<Vec<f64>>,
    /// `A[u]` = number of clients whose sketch reaches row `u`; computed
    /// from transmitted row counts, not by scanning for zero rows.
    pub row_counts: Vec<u32>,
    pub family_seed: u64,
}

/// Zero-pads sketches to the tallest height and counts contributors per row.
pub fn align(sketches: &[AdaptiveSketch]) -> Result<AlignedSketches> {
    let first = sketches
        .first()
        .ok_or_else(|| Error::invalid("cannot align an empty sketch list"))?;
    let cols = first.cols();
    let family_seed = first.family_seed();
    for s in sketches {
        if s.cols() != cols || s.family_seed() != family_seed {
            return Err(Error::IncompatibleSketch(format!(
                "expected {cols} columns under family seed {family_seed}, found {} columns under seed {}",
                s.cols(),
                s.family_seed()
            )));
        }
    }
    let a_max = sketches.iter().map(|s| s.rows()).max().expect("non-empty");
    let mut row_counts = vec![0u32; a_max];
    for s in sketches {
        for count in row_counts.iter_mut().take(s.rows()) {
            *count += 1;
        }
    }
    let padded = sketches
        .iter()
        .map(|s| {
            let mut m = vec![0.0; a_max * cols];
            m[..s.rows() * cols].copy_from_slice(s.cells());
            m
        })
        .collect();
    Ok(AlignedSketches { a_max, cols, padded, row_counts, family_seed })
}

/// Row-wise average of aligned sketches: row `u` is the element-wise sum over
/// clients divided by `A[u]`. Clients are summed in list order; callers pass
/// them in ascending client id for bitwise reproducibility.
pub fn aggregate(sketches: &[AdaptiveSketch]) -> Result<AggregatedSketch> {
    let aligned = align(sketches)?;
    let mut cells = vec![0.0; aligned.a_max * aligned.cols];
    for padded in &aligned.padded {
        for (acc, v) in cells.iter_mut().zip(padded) {
            *acc += v;
        }
    }
    for u in 0..aligned.a_max {
        let divisor = aligned.row_counts[u] as f64;
        for v in cells[u * aligned.cols..(u + 1) * aligned.cols].iter_mut() {
            *v /= divisor;
        }
    }
    AggregatedSketch::new(
        aligned.a_max,
        aligned.cols,
        cells,
        aligned.row_counts,
        aligned.family_seed,
    )
}

/// Sample-count-weighted mean of client weights.
pub fn fedavg_aggregate(weights: &[ModelWeights], sample_counts: &[usize]) -> Result<ModelWeights> {
    let first = weights
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty weight list"))?;
    if weights.len() != sample_counts.len() {
        return Err(Error::invalid("one sample count per client is required"));
    }
    if sample_counts.contains(&0) {
        return Err(Error::invalid("sample counts must be positive"));
    }
    for w in weights {
        if w.kind() != first.kind() {
            return Err(Error::invalid("all clients must share one architecture"));
        }
    }
    let total: f64 = sample_counts.iter().map(|&c| c as f64).sum();
    let mut acc = vec![0.0; first.len()];
    for (w, &count) in weights.iter().zip(sample_counts) {
        let share = count as f64 / total;
        for (a, v) in acc.iter_mut().zip(w.values()) {
            *a += share * v;
        }
    }
    ModelWeights::from_values(first.kind(), acc)
}

/// Dirichlet label-skew partition: for every class, client shares are drawn
/// from Dirichlet(alpha) and the class's samples are split accordingly.
/// Retries (bounded) until every shard is non-empty; shards partition the
/// input exactly.
pub fn partition_noniid(
    data: &Dataset,
    clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Dataset>> {
    if clients == 0 {
        return Err(Error::invalid("need at least one client"));
    }
    if clients > data.len() {
        return Err(Error::invalid(format!(
            "cannot split {} samples across {clients} clients",
            data.len()
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); data.classes()];
    for i in 0..data.len() {
        per_class[data.label(i) as usize].push(i);
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    const MAX_ATTEMPTS: usize = 100;
    for _ in 0..MAX_ATTEMPTS {
        let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); clients];
        for class_indices in &per_class {
            if class_indices.is_empty() {
                continue;
            }
            let mut indices = class_indices.clone();
            indices.shuffle(&mut rng);
            let mut shares: Vec<f64> = (0..clients).map(|_| gamma.sample(&mut rng)).collect();
            let sum: f64 = shares.iter().sum();
            if !(sum > 0.0) {
                shares = vec![1.0; clients];
            }
            let total: f64 = shares.iter().sum();
            let n = indices.len();
            let mut cut_prev = 0usize;
            let mut cum = 0.0;
            for (j, share) in shares.iter().enumerate() {
                cum += share / total;
                let cut = if j + 1 == clients { n } else { (cum * n as f64).round() as usize };
                let cut = cut.clamp(cut_prev, n);
                assignments[j].extend_from_slice(&indices[cut_prev..cut]);
                cut_prev = cut;
            }
        }
        if assignments.iter().all(|a| !a.is_empty()) {
            let mut shards = Vec::with_capacity(clients);
            for mut idx in assignments {
                idx.sort_unstable();
                shards.push(data.subset(&idx)?);
            }
            return Ok(shards);
        }
    }
    Err(Error::Validation(format!(
        "could not produce {clients} non-empty shards in {MAX_ATTEMPTS} attempts (alpha={alpha})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlkit::{make_synthetic_dataset, ModelKind};

    fn sketch_of(rows: usize, cols: usize, cells: Vec<f64>, seed: u64) -> AdaptiveSketch {
        // convenient fixture construction through compress on explicit tables
        // is clumsy for arbitrary cells; go through the dump text instead
        let mut text = format!("{seed} {rows} {cols}\n");
        for u in 0..rows {
            let row: Vec<String> =
                cells[u * cols..(u + 1) * cols].iter().map(|v| v.to_string()).collect();
            text.push_str(&row.join(" "));
            text.push('\n');
        }
        AdaptiveSketch::read_dump(text.as_bytes()).unwrap()
    }

    #[test]
    fn align_counts_contributors_per_row() {
        let s3 = sketch_of(3, 2, vec![0.0; 6], 1);
        let s5 = sketch_of(5, 2, vec![0.0; 10], 1);
        let aligned = align(&[s3, s5]).unwrap();
        assert_eq!(aligned.a_max, 5);
        assert_eq!(aligned.row_counts, vec![2, 2, 2, 1, 1]);
    }

    #[test]
    fn align_single_sketch_is_a_noop() {
        let s = sketch_of(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 7);
        let aligned = align(std::slice::from_ref(&s)).unwrap();
        assert_eq!(aligned.a_max, 2);
        assert_eq!(aligned.row_counts, vec![1, 1]);
        assert_eq!(aligned.padded[0], s.cells());
    }

    #[test]
    fn align_equal_heights_count_everyone() {
        let sketches: Vec<_> = (0..4).map(|_| sketch_of(3, 2, vec![1.0; 6], 2)).collect();
        let aligned = align(&sketches).unwrap();
        assert_eq!(aligned.row_counts, vec![4, 4, 4]);
    }

    #[test]
    fn align_rejects_mixed_families() {
        let a = sketch_of(1, 2, vec![0.0; 2], 1);
        let b = sketch_of(1, 2, vec![0.0; 2], 2);
        assert!(matches!(align(&[a, b]), Err(Error::IncompatibleSketch(_))));
        let c = sketch_of(1, 3, vec![0.0; 3], 1);
        let a2 = sketch_of(1, 2, vec![0.0; 2], 1);
        assert!(align(&[a2, c]).is_err());
    }

    #[test]
    fn aggregate_matches_pinned_fixture() {
        let s1 = sketch_of(1, 2, vec![1.0, 2.0], 5);
        let s2 = sketch_of(2, 2, vec![3.0, 4.0, 5.0, 6.0], 5);
        let agg = aggregate(&[s1, s2]).unwrap();
        assert_eq!(agg.rows(), 2);
        assert_eq!(agg.row(0), &[2.0, 3.0]);
        assert_eq!(agg.row(1), &[5.0, 6.0]);
        assert_eq!(agg.row_counts(), &[2, 1]);
    }

    #[test]
    fn aggregate_single_client_is_identity() {
        let s = sketch_of(2, 2, vec![1.5, -2.0, 0.0, 4.0], 5);
        let agg = aggregate(std::slice::from_ref(&s)).unwrap();
        assert_eq!(agg.row(0), &s.cells()[0..2]);
        assert_eq!(agg.row(1), &s.cells()[2..4]);
    }

    #[test]
    fn aggregate_of_identical_sketches_is_idempotent() {
        let s = sketch_of(2, 2, vec![1.5, -2.0, 0.5, 4.0], 5);
        let agg = aggregate(&[s.clone(), s.clone(), s.clone()]).unwrap();
        assert_eq!(agg.row(0), &s.cells()[0..2]);
        assert_eq!(agg.row(1), &s.cells()[2..4]);
    }

    #[test]
    fn rows_with_all_contributors_match_shortest_sketch() {
        let sketches = vec![
            sketch_of(4, 2, vec![1.0; 8], 3),
            sketch_of(2, 2, vec![1.0; 4], 3),
            sketch_of(3, 2, vec![1.0; 6], 3),
        ];
        let aligned = align(&sketches).unwrap();
        let full_rows =
            aligned.row_counts.iter().filter(|&&c| c as usize == sketches.len()).count();
        assert_eq!(full_rows, 2);
    }

    #[test]
    fn fedavg_aggregate_weighted_means() {
        let kind = ModelKind::Logistic { dims: 1, classes: 2 };
        let w0 = ModelWeights::from_values(kind, vec![0.0; 4]).unwrap();
        let w4 = ModelWeights::from_values(kind, vec![4.0; 4]).unwrap();
        let equal = fedavg_aggregate(&[w0.clone(), w4.clone()], &[5, 5]).unwrap();
        assert_eq!(equal.values(), &[2.0; 4]);
        let skewed = fedavg_aggregate(&[w0.clone(), w4.clone()], &[1, 3]).unwrap();
        assert_eq!(skewed.values(), &[3.0; 4]);
        let single = fedavg_aggregate(std::slice::from_ref(&w4), &[9]).unwrap();
        assert_eq!(single, w4);
        assert!(fedavg_aggregate(&[w0], &[0]).is_err());
    }

    #[test]
    fn fedavg_aggregate_stays_in_convex_hull() {
        let kind = ModelKind::Logistic { dims: 2, classes: 2 };
        let a = ModelWeights::init(kind, 1).unwrap();
        let b = ModelWeights::init(kind, 2).unwrap();
        let agg = fedavg_aggregate(&[a.clone(), b.clone()], &[3, 11]).unwrap();
        for ((x, y), z) in a.values().iter().zip(b.values()).zip(agg.values()) {
            assert!(*z >= x.min(*y) - 1e-15 && *z <= x.max(*y) + 1e-15);
        }
    }

    #[test]
    fn partition_near_iid_matches_global_histogram() {
        let data = make_synthetic_dataset(17, 2100, 4, 3, 1.0).unwrap();
        let shards = partition_noniid(&data, 7, 1e6, 99).unwrap();
        let global: Vec<f64> = {
            let mut counts = [0usize; 3];
            for &l in data.labels() {
                counts[l as usize] += 1;
            }
            counts.iter().map(|&c| c as f64 / data.len() as f64).collect()
        };
        for shard in &shards {
            let mut counts = [0usize; 3];
            for &l in shard.labels() {
                counts[l as usize] += 1;
            }
            for (c, &g) in counts.iter().zip(&global) {
                let p = *c as f64 / shard.len() as f64;
                assert!((p - g).abs() / g < 0.10, "shard proportion {p} vs global {g}");
            }
        }
    }

    #[test]
    fn partition_low_alpha_concentrates_labels() {
        let data = make_synthetic_dataset(18, 1400, 4, 8, 1.0).unwrap();
        let shards = partition_noniid(&data, 7, 0.01, 7).unwrap();
        let concentrated = shards.iter().any(|shard| {
            let mut counts = [0usize; 8];
            for &l in shard.labels() {
                counts[l as usize] += 1;
            }
            counts.iter().any(|&c| c as f64 / shard.len() as f64 >= 0.80)
        });
        assert!(concentrated, "expected at least one label-dominated shard");
    }

    #[test]
    fn partition_is_exact_and_validates() {
        let data = make_synthetic_dataset(19, 500, 3, 2, 1.0).unwrap();
        let shards = partition_noniid(&data, 5, 0.5, 3).unwrap();
        assert_eq!(shards.iter().map(|s| s.len()).sum::<usize>(), data.len());
        let merged = {
            let mut hashes: Vec<u64> = shards.iter().map(|s| s.content_hash()).collect();
            hashes.sort_unstable();
            hashes
        };
        // re-derive: same seed gives the same shards
        let again = partition_noniid(&data, 5, 0.5, 3).unwrap();
        let mut again_hashes: Vec<u64> = again.iter().map(|s| s.content_hash()).collect();
        again_hashes.sort_unstable();
        assert_eq!(merged, again_hashes);
        assert!(partition_noniid(&data, 501, 0.5, 3).is_err());
        assert!(partition_noniid(&data, 0, 0.5, 3).is_err());
        assert!(partition_noniid(&data, 5, 0.0, 3).is_err());
    }

    #[test]
    fn partition_preserves_every_sample_exactly_once() {
        let data = make_synthetic_dataset(23, 300, 3, 3, 1.0).unwrap();
        let shards = partition_noniid(&data, 4, 0.3, 11).unwrap();
        let mut union_rows: Vec<(u32, Vec<u64>)> = Vec::new();
        for shard in &shards {
            for i in 0..shard.len() {
                union_rows.push((
                    shard.label(i),
                    shard.feature_row(i).iter().map(|v| v.to_bits()).collect(),
                ));
            }
        }
        let mut original_rows: Vec<(u32, Vec<u64>)> = (0..data.len())
            .map(|i| (data.label(i), data.feature_row(i).iter().map(|v| v.to_bits()).collect()))
            .collect();
        union_rows.sort();
        original_rows.sort();
        assert_eq!(union_rows, original_rows);
    }
}

