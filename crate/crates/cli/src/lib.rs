//! Command implementations behind the `adapcomfl` binary.
//!
//! Commands parse a TOML experiment config (every field optional; defaults
//! give the 7-client, 0.5 s-deadline setup), run simulations, and emit
//! deterministic CSV/JSON artifacts. All numeric CSV fields use shortest
//! round-trip float formatting, so reruns of one config are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use adapcomfl::bandwidth::{generate_trace, save_traces};
use adapcomfl::netsim::{run_experiment, Algorithm, ExperimentConfig, ExperimentResult};
use adapcomfl::{Error, Result};

/// Column order of `metrics.csv`, one row per (round, client).
pub const METRICS_CSV_HEADER: &str = "round,client_id,algorithm,b_pred_mbps,b_true_mbps,rows_a,\
d_prime_slots,uplink_time_s,deadline_met,cr,global_accuracy_pct,predictor_mae_mbps";

/// Reads and validates a TOML experiment config.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Validation(format!("cannot read config {}: {e}", path.display()))
    })?;
    let config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Serializes a config back to TOML (parse -> serialize -> parse is a fixed
/// point; tested).
pub fn config_to_toml(config: &ExperimentConfig) -> Result<String> {
    toml::to_string_pretty(config)
        .map_err(|e| Error::Validation(format!("cannot serialize config: {e}")))
}

/// Renders the full metrics table for one experiment run.
pub fn metrics_csv(result: &ExperimentResult, algorithm: &str) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for round in &result.records {
        for client in &round.clients {
            let r = &client.record;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                round.round,
                r.client_id,
                algorithm,
                r.b_pred_mbps,
                r.b_true_mbps,
                r.rows,
                r.d_prime_slots,
                r.uplink_time_s,
                r.deadline_met,
                r.compression_ratio,
                round.global_accuracy_pct,
                client.predictor_mae_so_far_mbps,
            );
        }
    }
    out
}

/// What `simulate` echoes to stdout.
#[derive(Debug, Clone, Serialize)]
pub struct SimulateOutcome {
    pub final_accuracy_pct: f64,
    pub mean_compression_ratio: f64,
}

/// Runs one experiment and writes `metrics.csv` plus `summary.json`.
pub fn cmd_simulate(config_path: &Path, out_dir: &Path) -> Result<SimulateOutcome> {
    let config = load_config(config_path)?;
    let algorithm = config.algorithm.name().to_string();
    let result = run_experiment(config)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("metrics.csv"), metrics_csv(&result, &algorithm))?;
    write_json(&out_dir.join("summary.json"), &result.summary)?;
    Ok(SimulateOutcome {
        final_accuracy_pct: result.summary.final_accuracy_pct,
        mean_compression_ratio: result.summary.mean_compression_ratio,
    })
}

/// Synthetic trace generation settings for `gen-traces`.
#[derive(Debug, Clone)]
pub struct GenTracesArgs {
    pub clients: u32,
    pub duration_s: u64,
    pub seed: u64,
    pub base_bw_mbps: f64,
    pub daily_amplitude_mbps: f64,
    pub noise_std_mbps: f64,
    pub regime_shift_prob: f64,
}

/// Writes one trace per client to a CSV loadable by the simulator.
pub fn cmd_gen_traces(args: &GenTracesArgs, out_path: &Path) -> Result<usize> {
    if args.clients == 0 {
        return Err(Error::Validation("clients must be positive".into()));
    }
    if args.duration_s == 0 {
        return Err(Error::Validation("duration must be positive".into()));
    }
    if !(args.base_bw_mbps > 0.0) {
        return Err(Error::Validation("base bandwidth must be positive".into()));
    }
    let traces: Vec<_> = (0..args.clients)
        .map(|i| {
            generate_trace(
                i,
                args.seed.wrapping_add(i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                args.duration_s,
                args.base_bw_mbps,
                args.daily_amplitude_mbps,
                args.noise_std_mbps,
                args.regime_shift_prob,
            )
        })
        .collect();
    if let Some(dir) = out_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    save_traces(out_path, &traces)?;
    Ok(traces.iter().map(|t| t.len()).sum())
}

/// Per-algorithm digest inside `comparison.json`.
#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmDigest {
    pub final_accuracy_pct: f64,
    pub mean_upload_slots: f64,
    pub mean_compression_ratio: f64,
    pub mean_round_time_s: f64,
    pub deadline_violations: usize,
}

impl AlgorithmDigest {
    fn from_result(result: &ExperimentResult) -> Self {
        let mut slots = 0u64;
        let mut count = 0usize;
        for round in &result.records {
            for client in &round.clients {
                slots += client.record.d_prime_slots;
                count += 1;
            }
        }
        AlgorithmDigest {
            final_accuracy_pct: result.summary.final_accuracy_pct,
            mean_upload_slots: slots as f64 / count as f64,
            mean_compression_ratio: result.summary.mean_compression_ratio,
            mean_round_time_s: result.summary.mean_round_time_s,
            deadline_violations: result.summary.deadline_violations,
        }
    }
}

/// The three-way comparison written by `compare`.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub adapcomfl: AlgorithmDigest,
    pub sketchfl: AlgorithmDigest,
    pub fedavg: AlgorithmDigest,
    /// All three runs consumed identical client shards.
    pub shared_shards: bool,
}

/// Runs all three algorithms on one seed/config and writes per-algorithm
/// metrics plus `comparison.json`.
pub fn cmd_compare(config_path: &Path, out_dir: &Path) -> Result<ComparisonReport> {
    let base = load_config(config_path)?;
    fs::create_dir_all(out_dir)?;
    let mut digests = Vec::with_capacity(3);
    let mut shard_hashes: Vec<Vec<String>> = Vec::with_capacity(3);
    for algorithm in [Algorithm::Adapcomfl, Algorithm::Sketchfl, Algorithm::Fedavg] {
        let mut config = base.clone();
        config.algorithm = algorithm;
        config.validate()?;
        let result = run_experiment(config)?;
        fs::write(
            out_dir.join(format!("metrics_{}.csv", algorithm.name())),
            metrics_csv(&result, algorithm.name()),
        )?;
        shard_hashes.push(result.summary.shard_hashes.clone());
        digests.push(AlgorithmDigest::from_result(&result));
    }
    let shared = shard_hashes.windows(2).all(|w| w[0] == w[1]);
    if !shared {
        return Err(Error::Validation(
            "comparison runs diverged on client shards; seeding is broken".into(),
        ));
    }
    let report = ComparisonReport {
        adapcomfl: digests[0].clone(),
        sketchfl: digests[1].clone(),
        fedavg: digests[2].clone(),
        shared_shards: shared,
    };
    write_json(&out_dir.join("comparison.json"), &report)?;
    Ok(report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Validation(format!("cannot serialize {}: {e}", path.display())))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use adapcomfl::netsim::{PredictorKindParam, TraceSourceParam};

    fn tiny_config_toml() -> &'static str {
        r#"
seed = 9
algorithm = "adapcomfl"
clients = 2
rounds = 2

[predictor]
kind = "last_value"

[model]
dims = 4
classes = 2

[data]
samples = 60

[trace]
duration_s = 40
"#
    }

    #[test]
    fn config_parses_with_defaults_and_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        fs::write(&path, tiny_config_toml()).unwrap();
        let config = load_config(&path).unwrap();
        assert_eq!(config.clients, 2);
        assert_eq!(config.predictor.kind, PredictorKindParam::LastValue);
        assert_eq!(config.trace.source, TraceSourceParam::Synthetic);
        assert_eq!(config.link.deadline_s, 0.5);
        let serialized = config_to_toml(&config).unwrap();
        let reparsed: ExperimentConfig = toml::from_str(&serialized).unwrap();
        assert_eq!(config, reparsed);
        let reserialized = config_to_toml(&reparsed).unwrap();
        assert_eq!(serialized, reserialized);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        fs::write(&path, "sed = 9\n").unwrap();
        let err = load_config(&path).unwrap_err();
        assert!(err.to_string().contains("sed"), "{err}");
    }

    #[test]
    fn empty_config_runs_the_default_experiment_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        fs::write(&path, "").unwrap();
        let config = load_config(&path).unwrap();
        assert_eq!(config.clients, 7);
        assert_eq!(config.link.deadline_s, 0.5);
        assert_eq!(config.sketch.row_min, 3);
        assert_eq!(config.sketch.row_max, 10);
        assert_eq!(config.sketch.cv_threshold, 0.5);
        assert_eq!(config.sketch.sketchfl_rows, 7);
    }

    #[test]
    fn metrics_csv_has_one_row_per_round_and_client() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("config.toml");
        fs::write(&config_path, tiny_config_toml()).unwrap();
        let out = dir.path().join("out");
        cmd_simulate(&config_path, &out).unwrap();
        let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
        let lines: Vec<&str> = metrics.lines().collect();
        assert_eq!(lines[0], METRICS_CSV_HEADER);
        assert_eq!(lines.len(), 1 + 2 * 2);
        assert!(out.join("summary.json").exists());
        for line in &lines[1..] {
            for field in line.split(',').skip(3) {
                if field != "true" && field != "false" && field != "adapcomfl" {
                    let v: f64 = field.parse().unwrap();
                    assert!(v.is_finite(), "non-finite field {field}");
                }
            }
        }
    }

    #[test]
    fn missing_config_names_the_path() {
        let err = cmd_simulate(Path::new("/nonexistent/config.toml"), Path::new("/tmp"))
            .unwrap_err();
        assert!(err.to_string().contains("/nonexistent/config.toml"));
    }

    #[test]
    fn gen_traces_row_count_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let args = GenTracesArgs {
            clients: 3,
            duration_s: 50,
            seed: 4,
            base_bw_mbps: 2.0,
            daily_amplitude_mbps: 1.0,
            noise_std_mbps: 0.3,
            regime_shift_prob: 0.002,
        };
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        assert_eq!(cmd_gen_traces(&args, &a).unwrap(), 150);
        cmd_gen_traces(&args, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let loaded = adapcomfl::bandwidth::load_traces(&a).unwrap();
        assert_eq!(loaded.len(), 3);
    }

    #[test]
    fn adaptive_sizing_beats_fixed_rows_on_slow_links() {
        // seed 1 includes clients too slow for the fixed 7-row upload
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("config.toml");
        fs::write(
            &config_path,
            "seed = 1\nclients = 4\nrounds = 20\n\n[predictor]\nkind = \"window_ar\"\n\n\
             [model]\ndims = 6\nclasses = 3\n\n[data]\nsamples = 300\n\n[trace]\nduration_s = 250\n",
        )
        .unwrap();
        let report = cmd_compare(&config_path, &dir.path().join("out")).unwrap();
        assert!(report.sketchfl.deadline_violations > 0, "seed must include slow clients");
        assert!(report.adapcomfl.mean_round_time_s <= report.sketchfl.mean_round_time_s);
    }

    #[test]
    fn compare_writes_three_sections_sharing_shards() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("config.toml");
        fs::write(&config_path, tiny_config_toml()).unwrap();
        let out = dir.path().join("cmp");
        let report = cmd_compare(&config_path, &out).unwrap();
        assert!(report.shared_shards);
        for name in ["adapcomfl", "sketchfl", "fedavg"] {
            assert!(out.join(format!("metrics_{name}.csv")).exists());
        }
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap())
                .unwrap();
        assert_eq!(json["fedavg"]["mean_compression_ratio"], 1.0);
        assert!(json["adapcomfl"]["final_accuracy_pct"].is_number());
        assert!(json["sketchfl"]["mean_upload_slots"].is_number());
    }
}

