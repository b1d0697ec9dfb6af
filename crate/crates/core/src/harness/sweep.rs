//! Batch experiment driver. A sweep is a base experiment point plus a list
//! of studies, each varying one axis (feedback count, bit budget, training
//! seed, feedback staleness, noise level) and emitting one CSV with a
//! matching plot script.
//!
//! Trained policies are cached by their training fingerprint, so studies
//! that only change evaluation conditions (noise, staleness) reuse one
//! training run instead of repeating it per grid point. Output is written
//! with round-trip-exact float formatting; identical configs and seeds
//! produce byte-identical files.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plots;
use super::{arp, evaluate, train_for_spec, ExperimentMode, ExperimentSpec};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::policy::CompositeNet;
use crate::train::TrainConfig;

fn default_feedback_counts() -> Vec<usize> {
    (0..=6).collect()
}

fn default_bit_budgets() -> Vec<usize> {
    vec![0, 6, 12, 18, 24, 30, 36, 48]
}

fn default_train_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_intervals() -> Vec<usize> {
    vec![1, 10, 100]
}

fn default_noise_ratios() -> Vec<f64> {
    vec![-10.0, 0.0, 10.0, 30.0]
}

/// One axis of variation around the base point. Noise studies prepend a
/// noise-free row before the listed ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Study {
    /// Per-episode returns of learned/optimal/random at the base point.
    ReturnComparison,
    /// Every step's per-link rates at the base point.
    PerLinkRates,
    /// ARP versus the number of real feedback values per link.
    FeedbackCount {
        #[serde(default = "default_feedback_counts")]
        counts: Vec<usize>,
    },
    /// ARP versus the per-link bit budget (binary mode); budgets must be
    /// multiples of the base feedback count.
    FeedbackBits {
        #[serde(default = "default_bit_budgets")]
        budgets: Vec<usize>,
    },
    /// ARP across independent training seeds.
    SeedStudy {
        #[serde(default = "default_train_seeds")]
        seeds: Vec<u64>,
    },
    /// Return under stale feedback, normalized by the every-step run.
    FeedbackInterval {
        #[serde(default = "default_intervals")]
        intervals: Vec<usize>,
    },
    /// ARP versus observation noise.
    InputNoise {
        #[serde(default = "default_noise_ratios")]
        ratios_db: Vec<f64>,
    },
    /// ARP versus feedback-channel noise.
    FeedbackNoise {
        #[serde(default = "default_noise_ratios")]
        ratios_db: Vec<f64>,
    },
}

/// A full sweep: world, training hyperparameters, the base experiment
/// point, and the studies to run around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub base: ExperimentSpec,
    pub studies: Vec<Study>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            base: ExperimentSpec::default(),
            studies: Vec::new(),
        }
    }
}

/// Everything that determines a trained network, so eval-only variations
/// share one training run.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct TrainKey {
    mode: ExperimentMode,
    feedback_count: usize,
    bits_per_feedback: usize,
    batch_size: usize,
    episodes: usize,
    steps_per_episode: usize,
    train_seed: u64,
    encoder_hidden: Vec<usize>,
    qnet_hidden: Vec<usize>,
}

impl TrainKey {
    fn of(spec: &ExperimentSpec) -> Self {
        TrainKey {
            mode: spec.mode,
            feedback_count: spec.feedback_count,
            bits_per_feedback: spec.bits_per_feedback,
            batch_size: spec.batch_size,
            episodes: spec.episodes,
            steps_per_episode: spec.steps_per_episode,
            train_seed: spec.train_seed,
            encoder_hidden: spec.encoder_hidden.clone(),
            qnet_hidden: spec.qnet_hidden.clone(),
        }
    }
}

type PolicyCache = HashMap<TrainKey, Option<CompositeNet>>;

fn policy_for<'c>(
    cache: &'c mut PolicyCache,
    env: &EnvConfig,
    train: &TrainConfig,
    spec: &ExperimentSpec,
) -> Result<&'c Option<CompositeNet>> {
    let key = TrainKey::of(spec);
    if !cache.contains_key(&key) {
        let trained = train_for_spec(env, train, spec)?.map(|run| run.composite);
        cache.insert(key.clone(), trained);
    }
    Ok(&cache[&key])
}

fn write_csv(dir: &Path, name: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = String::with_capacity(
        header.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>(),
    );
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn study_return_comparison(
    cfg: &SweepConfig,
    cache: &mut PolicyCache,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let spec = cfg.base.clone();
    let policy = policy_for(cache, &cfg.env, &cfg.train, &spec)?;
    let report = evaluate(policy.as_ref(), &cfg.env, &spec)?;
    let rows: Vec<String> = (0..report.policy_returns.len())
        .map(|i| {
            format!(
                "{i},{},{},{},{},{}",
                report.policy_returns[i],
                report.optimal_returns[i],
                report.random_returns[i],
                report.normalized_returns[i],
                report.random_returns[i] / report.optimal_returns[i],
            )
        })
        .collect();
    Ok(vec![
        write_csv(
            dir,
            "return_comparison.csv",
            "episode,policy_return,optimal_return,random_return,normalized_policy,normalized_random",
            &rows,
        )?,
        plots::write_script(dir, "plot_return_comparison.py", plots::RETURN_COMPARISON)?,
    ])
}

fn study_per_link_rates(
    cfg: &SweepConfig,
    cache: &mut PolicyCache,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let spec = ExperimentSpec {
        trace_link_rates: true,
        ..cfg.base.clone()
    };
    let policy = policy_for(cache, &cfg.env, &cfg.train, &spec)?;
    let report = evaluate(policy.as_ref(), &cfg.env, &spec)?;
    let trace = report
        .link_rates
        .expect("tracing was requested, so the report carries rates");
    let steps = spec.steps_per_episode;
    let mut rows = Vec::with_capacity(trace.len() * cfg.env.num_d2d);
    for (idx, rates) in trace.iter().enumerate() {
        for (link, rate) in rates.iter().enumerate() {
            rows.push(format!("{},{},{link},{rate}", idx / steps, idx % steps));
        }
    }
    Ok(vec![
        write_csv(dir, "per_link_rates.csv", "episode,step,link,rate_bps", &rows)?,
        plots::write_script(dir, "plot_per_link_rates.py", plots::PER_LINK_RATES)?,
    ])
}

fn study_feedback_count(
    cfg: &SweepConfig,
    cache: &mut PolicyCache,
    dir: &Path,
    counts: &[usize],
) -> Result<Vec<PathBuf>> {
    let mut rows = Vec::with_capacity(counts.len());
    for &count in counts {
        let spec = ExperimentSpec {
            feedback_count: count,
            ..cfg.base.clone()
        };
        let policy = policy_for(cache, &cfg.env, &cfg.train, &spec)?;
        let report = evaluate(policy.as_ref(), &cfg.env, &spec)?;
        let random_arp = arp(&report.random_returns, &report.optimal_returns)?;
        rows.push(format!("{count},{},{random_arp}", report.arp));
    }
    Ok(vec![
        write_csv(
            dir,
            "arp_vs_feedback_count.csv",
            "feedback_count,arp,random_arp",
            &rows,
        )?,
        plots::write_script(
            dir,
            "plot_arp_vs_feedback_count.py",
            plots::ARP_VS_FEEDBACK_COUNT,
        )?,
    ])
}

/// The base point reshaped to carry `budget` bits per link, as
/// `feedback_count` values at `budget / feedback_count` bits each. Zero is
/// the no-feedback point.
fn bit_budget_spec(base: &ExperimentSpec, budget: usize) -> Result<ExperimentSpec> {
    if budget == 0 {
        return Ok(ExperimentSpec {
            mode: ExperimentMode::None,
            ..base.clone()
        });
    }
    if base.feedback_count == 0 {
        return Err(Error::Config(
            "a bit-budget sweep needs a nonzero base feedback count".into(),
        ));
    }
    if budget % base.feedback_count != 0 {
        return Err(Error::Config(format!(
            "bit budget {budget} is not divisible by the feedback count {}",
            base.feedback_count
        )));
    }
    Ok(ExperimentSpec {
        mode: ExperimentMode::Binary,
        bits_per_feedback: budget / base.feedback_count,
        ..base.clone()
    })
}

fn study_feedback_bits(
    cfg: &SweepConfig,
    cache: &mut PolicyCache,
    dir: &Path,
    budgets: &[usize],
) -> Result<Vec<PathBuf>> {
    let mut rows = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let spec = bit_budget_spec(&cfg.base, budget)?;
        let policy = policy_for(cache, &cfg.env, &cfg.train, &spec)?;
        let report = evaluate(policy.as_ref(), &cfg.env, &spec)?;
        let random_arp = arp(&report.random_returns, &report.optimal_returns)?;
        rows.push(format!("{budget},{},{random_arp}", report.arp));
    }
    Ok(vec![
        write_csv(
            dir,
            "arp_vs_feedback_bits.csv",
            "total_feedback_bits,arp,random_arp",
            &rows,
        )?,
        plots::write_script(
            dir,
            "plot_arp_vs_feedback_bits.py",
            plots::ARP_VS_FEEDBACK_BITS,
        )?,
    ])
}

fn study_seeds(
    cfg: &SweepConfig,
    cache: &mut PolicyCache,
    dir: &Path,
    seeds: &[u64],
) -> Result<Vec<PathBuf>> {
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let spec = ExperimentSpec {
            train_seed: seed,
            ..cfg.base.clone()
        };
        let policy = policy_for(cache, &cfg.env, &cfg.train, &spec)?;
        let report = evaluate(policy.as_ref(), &cfg.env, &spec)?;
        let random_arp = arp(&report.random_returns, &report.optimal_returns)?;
        rows.push(format!("{seed},{},{random_arp}", report.arp));
    }
    Ok(vec![
        write_csv(dir, "seed_study.csv", "train_seed,arp,random_arp", &rows)?,
        plots::write_script(dir, "plot_seed_study.py", plots::SEED_STUDY)?,
    ])
}

fn study_feedback_interval(
    cfg: &SweepConfig,
    cache: &mut PolicyCache,
    dir: &Path,
    intervals: &[usize],
) -> Result<Vec<PathBuf>> {
    let policy = policy_for(cache, &cfg.env, &cfg.train, &cfg.base)?.clone();
    let every_step = ExperimentSpec {
        feedback_interval: 1,
        ..cfg.base.clone()
    };
    let baseline = evaluate(policy.as_ref(), &cfg.env, &every_step)?;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let baseline_mean = mean(&baseline.policy_returns);
    if baseline_mean == 0.0 {
        return Err(Error::Domain(
            "every-step policy return is zero; normalization undefined".into(),
        ));
    }
    let mut rows = Vec::with_capacity(intervals.len());
    for &interval in intervals {
        let report = if interval == 1 {
            baseline.clone()
        } else {
            let spec = ExperimentSpec {
                feedback_interval: interval,
                ..cfg.base.clone()
            };
            evaluate(policy.as_ref(), &cfg.env, &spec)?
        };
        let mean_return = mean(&report.policy_returns);
        rows.push(format!(
            "{interval},{mean_return},{},{}",
            mean_return / baseline_mean,
            report.arp
        ));
    }
    Ok(vec![
        write_csv(
            dir,
            "feedback_interval.csv",
            "feedback_interval,mean_return,normalized_return,arp",
            &rows,
        )?,
        plots::write_script(dir, "plot_feedback_interval.py", plots::FEEDBACK_INTERVAL)?,
    ])
}

/// Which of the two noise knobs a study turns.
enum NoiseAxis {
    Input,
    Feedback,
}

fn study_noise(
    cfg: &SweepConfig,
    cache: &mut PolicyCache,
    dir: &Path,
    ratios_db: &[f64],
    axis: NoiseAxis,
) -> Result<Vec<PathBuf>> {
    let policy = policy_for(cache, &cfg.env, &cfg.train, &cfg.base)?.clone();
    let mut points: Vec<(String, Option<f64>)> = Vec::with_capacity(ratios_db.len() + 1);
    points.push(("off".to_string(), None));
    points.extend(ratios_db.iter().map(|&db| (format!("{db}"), Some(db))));

    let mut rows = Vec::with_capacity(points.len());
    for (label, ratio) in points {
        let mut spec = cfg.base.clone();
        match axis {
            NoiseAxis::Input => spec.input_noise_db = ratio,
            NoiseAxis::Feedback => spec.feedback_noise_db = ratio,
        }
        let report = evaluate(policy.as_ref(), &cfg.env, &spec)?;
        let random_arp = arp(&report.random_returns, &report.optimal_returns)?;
        rows.push(format!("{label},{},{random_arp}", report.arp));
    }
    let (csv_name, header, script_name, script) = match axis {
        NoiseAxis::Input => (
            "input_noise.csv",
            "input_noise_db,arp,random_arp",
            "plot_input_noise.py",
            plots::INPUT_NOISE,
        ),
        NoiseAxis::Feedback => (
            "feedback_noise.csv",
            "feedback_noise_db,arp,random_arp",
            "plot_feedback_noise.py",
            plots::FEEDBACK_NOISE,
        ),
    };
    Ok(vec![
        write_csv(dir, csv_name, header, &rows)?,
        plots::write_script(dir, script_name, script)?,
    ])
}

/// Run every study and return the paths written (CSVs and plot scripts).
/// An empty study list writes nothing and succeeds.
pub fn sweep(config: &SweepConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    config.env.validate()?;
    config.base.validate()?;
    // the effective training config (base overridden by each spec's
    // schedule) is validated when each training run starts
    if config.studies.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut cache = PolicyCache::new();
    let mut written = Vec::new();
    for study in &config.studies {
        let files = match study {
            Study::ReturnComparison => study_return_comparison(config, &mut cache, out_dir)?,
            Study::PerLinkRates => study_per_link_rates(config, &mut cache, out_dir)?,
            Study::FeedbackCount { counts } => {
                study_feedback_count(config, &mut cache, out_dir, counts)?
            }
            Study::FeedbackBits { budgets } => {
                study_feedback_bits(config, &mut cache, out_dir, budgets)?
            }
            Study::SeedStudy { seeds } => study_seeds(config, &mut cache, out_dir, seeds)?,
            Study::FeedbackInterval { intervals } => {
                study_feedback_interval(config, &mut cache, out_dir, intervals)?
            }
            Study::InputNoise { ratios_db } => {
                study_noise(config, &mut cache, out_dir, ratios_db, NoiseAxis::Input)?
            }
            Study::FeedbackNoise { ratios_db } => {
                study_noise(config, &mut cache, out_dir, ratios_db, NoiseAxis::Feedback)?
            }
        };
        written.extend(files);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_sweep(studies: Vec<Study>) -> SweepConfig {
        SweepConfig {
            env: EnvConfig {
                num_d2d: 2,
                num_channels: 2,
                ..EnvConfig::default()
            },
            train: TrainConfig {
                buffer_capacity: 100,
                target_sync_every: 10,
                ..TrainConfig::default()
            },
            base: ExperimentSpec {
                feedback_count: 2,
                encoder_hidden: vec![5],
                qnet_hidden: vec![6],
                batch_size: 4,
                episodes: 1,
                steps_per_episode: 6,
                test_episodes: 2,
                test_seeds: vec![31],
                ..ExperimentSpec::default()
            },
            studies,
        }
    }

    fn read(path: &Path) -> String {
        fs::read_to_string(path).unwrap()
    }

    #[test]
    fn empty_study_list_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("results");
        let written = sweep(&tiny_sweep(vec![]), &out).unwrap();
        assert!(written.is_empty());
        assert!(!out.exists(), "no output directory without studies");
    }

    #[test]
    fn feedback_count_study_emits_one_row_per_count() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_sweep(vec![Study::FeedbackCount { counts: vec![0, 2] }]);
        let written = sweep(&cfg, dir.path()).unwrap();
        assert_eq!(written.len(), 2, "csv and plot script");
        let csv = read(&written[0]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "feedback_count,arp,random_arp");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,"));
        assert!(lines[2].starts_with("2,"));
        for line in &lines[1..] {
            let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
            assert!(fields[1] > 0.0 && fields[1] <= 100.0 + 1e-9);
            assert!(fields[2] > 0.0 && fields[2] <= 100.0 + 1e-9);
        }
        assert!(written[1].file_name().unwrap() == "plot_arp_vs_feedback_count.py");
        assert!(read(&written[1]).contains("arp_vs_feedback_count.csv"));
    }

    #[test]
    fn per_link_rates_study_emits_step_by_link_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_sweep(vec![Study::PerLinkRates]);
        let written = sweep(&cfg, dir.path()).unwrap();
        let csv = read(&written[0]);
        // header + episodes(2) × steps(6) × links(2)
        assert_eq!(csv.lines().count(), 1 + 2 * 6 * 2);
        let first = csv.lines().nth(1).unwrap();
        assert!(first.starts_with("0,0,0,"));
    }

    #[test]
    fn indivisible_bit_budget_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_sweep(vec![Study::FeedbackBits { budgets: vec![3] }]);
        let err = sweep(&cfg, dir.path()).unwrap_err();
        assert!(err.to_string().contains("not divisible"));
    }

    #[test]
    fn interval_study_normalizes_the_every_step_row_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_sweep(vec![Study::FeedbackInterval {
            intervals: vec![1, 3],
        }]);
        let written = sweep(&cfg, dir.path()).unwrap();
        let csv = read(&written[0]);
        let row1: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row1[0], "1");
        assert_eq!(row1[2], "1");
        let row3: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
        assert_eq!(row3[0], "3");
        let normalized: f64 = row3[2].parse().unwrap();
        assert!(normalized.is_finite() && normalized > 0.0);
    }

    #[test]
    fn noise_studies_lead_with_an_off_row() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_sweep(vec![
            Study::InputNoise {
                ratios_db: vec![0.0],
            },
            Study::FeedbackNoise {
                ratios_db: vec![10.0],
            },
        ]);
        let written = sweep(&cfg, dir.path()).unwrap();
        assert_eq!(written.len(), 4);
        let input_csv = read(&written[0]);
        assert!(input_csv.lines().nth(1).unwrap().starts_with("off,"));
        assert!(input_csv.lines().nth(2).unwrap().starts_with("0,"));
        let feedback_csv = read(&written[2]);
        assert!(feedback_csv.lines().nth(1).unwrap().starts_with("off,"));
        assert!(feedback_csv.lines().nth(2).unwrap().starts_with("10,"));
    }

    #[test]
    fn sweeps_are_byte_identical_across_runs() {
        let studies = vec![
            Study::ReturnComparison,
            Study::FeedbackCount { counts: vec![0, 2] },
            Study::FeedbackBits { budgets: vec![0, 2] },
            Study::SeedStudy { seeds: vec![0, 1] },
            Study::FeedbackInterval { intervals: vec![1, 2] },
            Study::InputNoise { ratios_db: vec![0.0] },
        ];
        let cfg = tiny_sweep(studies);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let written_a = sweep(&cfg, dir_a.path()).unwrap();
        let written_b = sweep(&cfg, dir_b.path()).unwrap();
        assert_eq!(written_a.len(), written_b.len());
        for (a, b) in written_a.iter().zip(&written_b) {
            assert_eq!(a.file_name(), b.file_name());
            assert_eq!(
                fs::read(a).unwrap(),
                fs::read(b).unwrap(),
                "{:?} differs between runs",
                a.file_name()
            );
        }
    }

    #[test]
    fn sweep_config_round_trips_through_toml() {
        let cfg = tiny_sweep(vec![
            Study::ReturnComparison,
            Study::FeedbackCount { counts: vec![1, 2] },
            Study::InputNoise {
                ratios_db: vec![-10.0, 30.0],
            },
        ]);
        let text = toml::to_string(&cfg).unwrap();
        let back: SweepConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        // partial configs fill in defaults; unknown keys are refused
        let partial: SweepConfig = toml::from_str(
            "[[studies]]\nkind = \"feedback_count\"\n\n[[studies]]\nkind = \"return_comparison\"\n",
        )
        .unwrap();
        assert_eq!(
            partial.studies[0],
            Study::FeedbackCount {
                counts: default_feedback_counts()
            }
        );
        assert!(toml::from_str::<SweepConfig>("unknown_key = 1").is_err());
    }
}
