//! Bandwidth traces, awareness buffers, predictors, and uplink arithmetic.
//!
//! Bandwidth is stored in megabytes per second. A value of `b` MB/s carries
//! `b * 8e6` bits per second; uplink capacity additionally scales with the
//! Shannon factor `log2(1 + snr)`, and data volumes are counted in value
//! slots of `bits_per_value` bits so they compare directly against gradient
//! dimensions.

pub mod lstm;

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use lstm::LstmNet;

/// Bits carried per second by one megabyte-per-second of bandwidth.
pub const BITS_PER_MBPS: f64 = 8.0e6;

/// Period of the slow sinusoidal component in generated traces, in seconds.
pub const DAILY_PERIOD_S: f64 = 86_400.0;

pub const TRACE_CSV_HEADER: &str = "client_id,t_seconds,bw_mbps";

/// Where a trace came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSource {
    Synthetic,
    File,
}

/// One bandwidth observation at integer second `t_seconds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t_seconds: u64,
    pub bw_mbps: f64,
}

/// A per-client bandwidth time series with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthTrace {
    client_id: u32,
    samples: Vec<TraceSample>,
    source: TraceSource,
}

impl BandwidthTrace {
    pub fn new(client_id: u32, samples: Vec<TraceSample>, source: TraceSource) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid(format!("trace for client {client_id} is empty")));
        }
        for pair in samples.windows(2) {
            if pair[1].t_seconds <= pair[0].t_seconds {
                return Err(Error::Validation(format!(
                    "client {client_id}: timestamps must be strictly increasing ({} then {})",
                    pair[0].t_seconds, pair[1].t_seconds
                )));
            }
        }
        if let Some(s) = samples.iter().find(|s| !(s.bw_mbps >= 0.0)) {
            return Err(Error::Validation(format!(
                "client {client_id}: negative bandwidth {} at t={}",
                s.bw_mbps, s.t_seconds
            )));
        }
        Ok(BandwidthTrace { client_id, samples, source })
    }

    pub fn client_id(&self) -> u32 {
        self.client_id
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn source(&self) -> TraceSource {
        self.source
    }
}

/// Sliding window of the most recent bandwidth observations.
#[derive(Debug, Clone, PartialEq)]
pub struct AwarenessBuffer {
    window: Vec<f64>,
    capacity: usize,
}

impl AwarenessBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("awareness buffer capacity must be positive"));
        }
        Ok(AwarenessBuffer { window: Vec::with_capacity(capacity), capacity })
    }

    /// Appends a sample, evicting the oldest when the window is full.
    pub fn observe(&mut self, sample: f64) -> Result<()> {
        if !(sample >= 0.0) {
            return Err(Error::invalid(format!("bandwidth sample {sample} must be >= 0")));
        }
        if self.window.len() == self.capacity {
            self.window.remove(0);
        }
        self.window.push(sample);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn values(&self) -> &[f64] {
        &self.window
    }

    /// Most recent `n` samples, oldest first, if that many exist.
    pub fn last_n(&self, n: usize) -> Option<&[f64]> {
        if self.window.len() < n {
            None
        } else {
            Some(&self.window[self.window.len() - n..])
        }
    }
}

/// Uplink channel parameters shared by all clients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    /// Upload deadline per round, seconds.
    pub deadline_s: f64,
    /// Dimensionless signal-to-noise ratio.
    pub snr: f64,
    /// Bits per transmitted value slot.
    pub bits_per_value: u32,
}

impl LinkModel {
    pub fn new(deadline_s: f64, snr: f64, bits_per_value: u32) -> Result<Self> {
        if !(deadline_s > 0.0) {
            return Err(Error::invalid("deadline must be positive"));
        }
        if !(snr >= 0.0) {
            return Err(Error::invalid("snr must be non-negative"));
        }
        if bits_per_value == 0 {
            return Err(Error::invalid("bits_per_value must be positive"));
        }
        Ok(LinkModel { deadline_s, snr, bits_per_value })
    }

    fn shannon_factor(&self) -> f64 {
        (1.0 + self.snr).log2()
    }
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel { deadline_s: 0.5, snr: 3.0, bits_per_value: 32 }
    }
}

/// Value slots transmittable within the deadline at predicted bandwidth
/// `b_pred`: `floor(T * rate(b_pred) * log2(1+snr) / bits_per_value)`.
pub fn uplink_volume(link: &LinkModel, b_pred_mbps: f64) -> u64 {
    if b_pred_mbps <= 0.0 {
        return 0;
    }
    let bits = link.deadline_s * b_pred_mbps * BITS_PER_MBPS * link.shannon_factor();
    (bits / link.bits_per_value as f64).floor() as u64
}

/// Seconds needed to push `d_prime_slots` value slots at real bandwidth
/// `b_true`. Zero bandwidth or zero SNR never completes: returns infinity.
pub fn uplink_time(link: &LinkModel, d_prime_slots: u64, b_true_mbps: f64) -> f64 {
    let rate = b_true_mbps * BITS_PER_MBPS * link.shannon_factor();
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    d_prime_slots as f64 * link.bits_per_value as f64 / rate
}

/// Mean absolute error between two equal-length sequences.
pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "mae needs equal non-empty sequences (got {} and {})",
            predicted.len(),
            actual.len()
        )));
    }
    let total: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum();
    Ok(total / predicted.len() as f64)
}

/// Which forecasting rule a predictor applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    LastValue,
    WindowAr,
    MiniLstm,
}

impl PredictorKind {
    pub fn name(&self) -> &'static str {
        match self {
            PredictorKind::LastValue => "last_value",
            PredictorKind::WindowAr => "window_ar",
            PredictorKind::MiniLstm => "mini_lstm",
        }
    }
}

/// Per-client forecaster of the bandwidth available at the next upload.
///
/// Raw predictions below zero are clamped to zero; negative bandwidth is
/// meaningless. All predictions are pure functions of (state, buffer).
#[derive(Debug, Clone)]
pub enum PredictorState {
    /// Persistence: repeat the newest observation.
    LastValue,
    /// Ordinary least squares line over the last `window` samples,
    /// extrapolated one step ahead.
    WindowAr { window: usize },
    /// Two-layer LSTM over the last `window` samples. A constant window
    /// short-circuits to that constant; the network answers otherwise.
    MiniLstm { window: usize, net: LstmNet },
}

impl PredictorState {
    pub fn last_value() -> Self {
        PredictorState::LastValue
    }

    pub fn window_ar(window: usize) -> Result<Self> {
        if window < 2 {
            return Err(Error::invalid("window_ar needs a window of at least 2"));
        }
        Ok(PredictorState::WindowAr { window })
    }

    pub fn mini_lstm(window: usize, hidden1: usize, hidden2: usize, seed: u64) -> Result<Self> {
        if window == 0 {
            return Err(Error::invalid("mini_lstm needs a positive window"));
        }
        Ok(PredictorState::MiniLstm { window, net: LstmNet::new(hidden1, hidden2, seed)? })
    }

    pub fn kind(&self) -> PredictorKind {
        match self {
            PredictorState::LastValue => PredictorKind::LastValue,
            PredictorState::WindowAr { .. } => PredictorKind::WindowAr,
            PredictorState::MiniLstm { .. } => PredictorKind::MiniLstm,
        }
    }

    /// Samples of history required before [`PredictorState::predict`] works.
    pub fn required_history(&self) -> usize {
        match self {
            PredictorState::LastValue => 1,
            PredictorState::WindowAr { window } | PredictorState::MiniLstm { window, .. } => {
                *window
            }
        }
    }

    /// Predicts the next bandwidth sample from the buffer.
    pub fn predict(&self, buffer: &AwarenessBuffer) -> Result<f64> {
        let need = self.required_history();
        let recent = buffer.last_n(need).ok_or_else(|| {
            Error::InsufficientData(format!(
                "{} needs {need} samples, buffer holds {}",
                self.kind().name(),
                buffer.len()
            ))
        })?;
        let raw = match self {
            PredictorState::LastValue => recent[recent.len() - 1],
            PredictorState::WindowAr { window } => ols_extrapolate(recent, *window),
            PredictorState::MiniLstm { net, .. } => {
                let lo = recent.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if lo == hi {
                    lo
                } else {
                    net.forward(recent)
                }
            }
        };
        Ok(raw.max(0.0))
    }

    /// Runs `epochs` passes of per-window SGD on squared error over every
    /// sliding window in the buffer. Only the LSTM has weights to fit; the
    /// closed-form kinds return unchanged.
    pub fn train_mini_lstm(
        &mut self,
        buffer: &AwarenessBuffer,
        epochs: usize,
        lr: f64,
    ) -> Result<()> {
        let PredictorState::MiniLstm { window, net } = self else {
            return Ok(());
        };
        let f = *window;
        if buffer.len() < f + 1 {
            return Err(Error::InsufficientData(format!(
                "training needs {} samples, buffer holds {}",
                f + 1,
                buffer.len()
            )));
        }
        let data = buffer.values();
        for _ in 0..epochs {
            for j in 0..=data.len() - f - 1 {
                let input = &data[j..j + f];
                let label = data[j + f];
                let (_, grads) = net.loss_and_grad(input, label);
                net.sgd_step(&grads, lr);
            }
        }
        Ok(())
    }

    /// Mean squared error of the raw network over all sliding windows.
    /// `None` for predictor kinds without trainable weights.
    pub fn training_mse(&self, buffer: &AwarenessBuffer) -> Option<f64> {
        let PredictorState::MiniLstm { window, net } = self else {
            return None;
        };
        let f = *window;
        let data = buffer.values();
        if data.len() < f + 1 {
            return None;
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for j in 0..=data.len() - f - 1 {
            let err = net.forward(&data[j..j + f]) - data[j + f];
            total += err * err;
            count += 1;
        }
        Some(total / count as f64)
    }
}

fn ols_extrapolate(recent: &[f64], window: usize) -> f64 {
    debug_assert!(recent.len() == window && window >= 2);
    let m = window as f64;
    let x_mean = (m - 1.0) / 2.0;
    let y_mean = recent.iter().sum::<f64>() / m;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, &y) in recent.iter().enumerate() {
        let dx = x as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    y_mean + slope * (m - x_mean)
}

/// Generates a 1 Hz synthetic trace: base level plus a slow sinusoid plus
/// AR(1) noise, all scaled by an occasional multiplicative regime factor and
/// floored at zero. Deterministic per seed.
pub fn generate_trace(
    client_id: u32,
    seed: u64,
    duration_s: u64,
    base_bw_mbps: f64,
    daily_amplitude_mbps: f64,
    noise_std_mbps: f64,
    regime_shift_prob: f64,
) -> BandwidthTrace {
    assert!(duration_s >= 1, "duration must be at least one second");
    assert!(base_bw_mbps > 0.0, "base bandwidth must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = 0.9_f64;
    let eps_std = noise_std_mbps * (1.0 - phi * phi).sqrt();
    let noise_dist = Normal::new(0.0, eps_std.max(f64::MIN_POSITIVE)).expect("valid normal");
    let mut ar = 0.0_f64;
    let mut regime = 1.0_f64;
    let mut samples = Vec::with_capacity(duration_s as usize);
    for t in 0..duration_s {
        if noise_std_mbps > 0.0 {
            ar = phi * ar + noise_dist.sample(&mut rng);
        }
        if regime_shift_prob > 0.0 && rng.gen::<f64>() < regime_shift_prob {
            regime *= if rng.gen::<bool>() { 2.0 } else { 0.5 };
            regime = regime.clamp(0.25, 4.0);
        }
        let sinus = daily_amplitude_mbps * (2.0 * std::f64::consts::PI * t as f64 / DAILY_PERIOD_S).sin();
        let bw = ((base_bw_mbps + sinus + ar) * regime).max(0.0);
        samples.push(TraceSample { t_seconds: t, bw_mbps: bw });
    }
    BandwidthTrace::new(client_id, samples, TraceSource::Synthetic).expect("generated trace is valid")
}

/// Writes traces as CSV (`client_id,t_seconds,bw_mbps`), rows sorted by
/// `(client_id, t_seconds)`.
pub fn save_traces<P: AsRef<Path>>(path: P, traces: &[BandwidthTrace]) -> Result<()> {
    let mut sorted: Vec<&BandwidthTrace> = traces.iter().collect();
    sorted.sort_by_key(|t| t.client_id());
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for trace in sorted {
        for s in trace.samples() {
            out.push_str(&format!("{},{},{}\n", trace.client_id(), s.t_seconds, s.bw_mbps));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Loads a trace CSV written by [`save_traces`] (or an external tool using
/// the same schema): one trace per client id, samples sorted by time.
pub fn load_traces<P: AsRef<Path>>(path: P) -> Result<Vec<BandwidthTrace>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == TRACE_CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `{TRACE_CSV_HEADER}`, found `{header}`"),
            })
        }
        None => return Err(Error::Parse { line: 1, msg: "empty trace file".into() }),
    }
    let mut traces: Vec<BandwidthTrace> = Vec::new();
    let mut current: Option<(u32, Vec<TraceSample>)> = None;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (id_s, t_s, bw_s) = match (fields.next(), fields.next(), fields.next(), fields.next())
        {
            (Some(a), Some(b), Some(c), None) => (a, b, c),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "expected exactly 3 comma-separated fields".into(),
                })
            }
        };
        let client_id: u32 = id_s.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad client_id `{id_s}`"),
        })?;
        let t_seconds: u64 = t_s.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad t_seconds `{t_s}`"),
        })?;
        let bw_mbps: f64 = bw_s.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad bw_mbps `{bw_s}`"),
        })?;
        if bw_mbps < 0.0 {
            return Err(Error::Validation(format!(
                "line {line_no}: negative bandwidth {bw_mbps}"
            )));
        }
        match current.as_mut() {
            Some((id, samples)) if *id == client_id => {
                if t_seconds <= samples.last().expect("non-empty").t_seconds {
                    return Err(Error::Validation(format!(
                        "line {line_no}: timestamps for client {client_id} must be strictly increasing"
                    )));
                }
                samples.push(TraceSample { t_seconds, bw_mbps });
            }
            _ => {
                if let Some((id, samples)) = current.take() {
                    if traces.iter().any(|t| t.client_id() == client_id) || id > client_id {
                        return Err(Error::Validation(format!(
                            "line {line_no}: rows must be sorted by client_id"
                        )));
                    }
                    traces.push(BandwidthTrace::new(id, samples, TraceSource::File)?);
                }
                current = Some((client_id, vec![TraceSample { t_seconds, bw_mbps }]));
            }
        }
    }
    if let Some((id, samples)) = current.take() {
        traces.push(BandwidthTrace::new(id, samples, TraceSource::File)?);
    }
    Ok(traces)
}
