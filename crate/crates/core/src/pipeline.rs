//! End-to-end dataset synthesis: synchronize trials, select keyframes, simulate
//! the channel, generate measurements, estimate noise models, classify loop
//! closures and assemble a [`Dataset`].

use crate::comm::{simulate, CommError, CommEventLog, CommModel};
use crate::frontend::{
    compute_lc_measurement, detect_inter_lc, detect_intra_lc, make_odometry, make_prior, scan_schedule, select_keyframes,
    FrontendParams, Keyframe, LcCandidate, Measurement, MeasurementKind, ReceivedScan,
};
use crate::jrl::{Dataset, GroundtruthEntry, JrlError, MeasurementId, PartitionError, SourceTrial};
use crate::lie::Covariance6;
use crate::noise::{
    estimate_filtered, parse_matrix, Classifier, Label, NoiseError, NoiseEstimate, Normalizer, ResidualSample,
    DEFAULT_CONFIDENCE, DEFAULT_ROT_MAX, DEFAULT_TRANS_MAX,
};
use crate::seeds::{derive_seed, stage_rng};
use crate::stats::{summarize, DatasetSummary};
use crate::sync::{read_trial, synchronize, SyncError, SyncedSequence, Trial};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const ODOMETRY_MODEL: &str = "odometry";
pub const LOOP_CLOSURE_MODEL: &str = "loop_closure";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trial_sync: {0}")]
    Sync(#[from] SyncError),
    #[error("comm_sim: {0}")]
    Comm(#[from] CommError),
    #[error("noise_model ({stage}): {source}")]
    Noise {
        stage: String,
        #[source]
        source: NoiseError,
    },
    #[error("jrl_io: {0}")]
    Jrl(#[from] JrlError),
    #[error("jrl_io: {0}")]
    Partition(#[from] PartitionError),
}

fn noise_err(stage: &str) -> impl FnOnce(NoiseError) -> PipelineError + '_ {
    move |source| PipelineError::Noise {
        stage: stage.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSource {
    pub robot_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    /// Single-robot pass over one trial, then the filtered estimator.
    #[default]
    Estimate,
    /// 6×6 text matrices.
    File,
    /// The front-end's generating covariances.
    Configured,
}

fn default_trans_max() -> f64 {
    DEFAULT_TRANS_MAX
}
fn default_rot_max() -> f64 {
    DEFAULT_ROT_MAX
}
fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub source: NoiseSource,
    /// Robot whose trial feeds the estimation pass; the anchor when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<String>,
    #[serde(default = "default_trans_max")]
    pub trans_max: f64,
    #[serde(default = "default_rot_max")]
    pub rot_max: f64,
    #[serde(default)]
    pub normalizer: Normalizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub odometry_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_closure_file: Option<PathBuf>,
    #[serde(default)]
    pub classify_odometry: bool,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// Replace measurement covariances with the noise models.
    #[serde(default = "default_true")]
    pub apply_to_measurements: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            source: NoiseSource::Estimate,
            trial: None,
            trans_max: DEFAULT_TRANS_MAX,
            rot_max: DEFAULT_ROT_MAX,
            normalizer: Normalizer::Count,
            odometry_file: None,
            loop_closure_file: None,
            classify_odometry: false,
            confidence: DEFAULT_CONFIDENCE,
            apply_to_measurements: true,
        }
    }
}

fn default_name() -> String {
    "cosmoforge".into()
}
fn default_sigma_offset() -> f64 {
    40.0
}
fn default_comm_model() -> String {
    "wifi".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub anchor_index: usize,
    #[serde(default = "default_sigma_offset")]
    pub sigma_offset: f64,
    #[serde(default)]
    pub offset_is_variance: bool,
    /// `wifi`, `pro-radio` or `custom:<path>`.
    #[serde(default = "default_comm_model")]
    pub comm_model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub trials: Vec<TrialSource>,
    #[serde(default)]
    pub frontend: FrontendParams,
    #[serde(default)]
    pub noise: NoiseConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn comm(&self) -> Result<CommModel, PipelineError> {
        match self.comm_model.strip_prefix("custom:") {
            Some(p) => Ok(CommModel::load(&self.resolve(Path::new(p)))?),
            None => Ok(CommModel::resolve(&self.comm_model)?),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.trials.is_empty() {
            return bad("at least one trial is required".into());
        }
        if self.anchor_index >= self.trials.len() {
            return bad(format!("anchor_index {} out of range for {} trials", self.anchor_index, self.trials.len()));
        }
        if !self.sigma_offset.is_finite() || self.sigma_offset < 0.0 {
            return bad(format!("sigma_offset must be non-negative, got {}", self.sigma_offset));
        }
        self.frontend.validate().map_err(PipelineError::Config)?;
        let n = &self.noise;
        if !(n.trans_max > 0.0 && n.rot_max > 0.0) {
            return bad("noise thresholds must be positive".into());
        }
        if !(n.confidence > 0.0 && n.confidence < 1.0) {
            return bad(format!("noise.confidence must lie in (0, 1), got {}", n.confidence));
        }
        if n.source == NoiseSource::File && (n.odometry_file.is_none() || n.loop_closure_file.is_none()) {
            return bad("noise.source = \"file\" needs odometry_file and loop_closure_file".into());
        }
        if let Some(t) = &n.trial {
            if !self.trials.iter().any(|s| &s.robot_id == t) {
                return bad(format!("noise.trial names unknown robot `{t}`"));
            }
        }
        Ok(())
    }

    pub fn load_trials(&self) -> Result<Vec<Trial>, PipelineError> {
        self.trials
            .iter()
            .map(|s| read_trial(&s.robot_id, &self.resolve(&s.path)).map_err(PipelineError::from))
            .collect()
    }
}

/// Seeds of every random stage, derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub master: u64,
    pub sync: u64,
    pub comms: u64,
    pub frontend: u64,
    pub noise: u64,
}

impl StageSeeds {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            sync: derive_seed(master, "sync"),
            comms: derive_seed(master, "comms"),
            frontend: derive_seed(master, "frontend"),
            noise: derive_seed(master, "noise"),
        }
    }

    fn to_map(self) -> BTreeMap<String, u64> {
        BTreeMap::from([
            ("master".into(), self.master),
            ("sync".into(), self.sync),
            ("comms".into(), self.comms),
            ("frontend".into(), self.frontend),
            ("noise".into(), self.noise),
        ])
    }
}

/// Registers every candidate with its own generator so that one candidate's
/// draws never depend on which others exist.
fn register_all(candidates: &[LcCandidate], params: &FrontendParams, seed: u64) -> Vec<Measurement> {
    candidates
        .iter()
        .map(|c| {
            let mut rng = stage_rng(seed, &format!("{}>{}", c.from, c.to));
            compute_lc_measurement(c, params, &mut rng)
        })
        .collect()
}

/// Prior, odometry and intra-robot loop closures of one robot.
pub fn single_robot_measurements(keyframes: &[Keyframe], params: &FrontendParams, seed: u64) -> Vec<Measurement> {
    let Some(first) = keyframes.first() else {
        return Vec::new();
    };
    let robot = &first.robot_id;
    let mut out = vec![make_prior(first)];
    let mut odom_rng = stage_rng(seed, &format!("odometry/{robot}"));
    out.extend(make_odometry(keyframes, &params.q_odom, &mut odom_rng));
    let mut intra_rng = stage_rng(seed, &format!("intra/{robot}"));
    let candidates = detect_intra_lc(keyframes, params, &mut intra_rng);
    out.extend(register_all(&candidates, params, derive_seed(seed, "lc")));
    out
}

/// Noise models for odometry and loop closures.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModels {
    pub odometry: NoiseEstimate,
    pub loop_closure: NoiseEstimate,
}

/// Residual samples of a single-robot front-end pass over `trial`.
pub fn single_robot_samples(
    trial: &Trial,
    params: &FrontendParams,
    seed: u64,
) -> (Vec<ResidualSample>, Vec<ResidualSample>) {
    let keyframes = select_keyframes(trial, params.d_kf, params.num_points);
    let truth: BTreeMap<usize, _> = keyframes.iter().map(|k| (k.index, k.pose)).collect();
    let mut odom = Vec::new();
    let mut lc = Vec::new();
    for m in single_robot_measurements(&keyframes, params, seed) {
        let Some(to) = &m.to else { continue };
        let t = truth[&m.from.index].between(&truth[&to.index]);
        let sample = ResidualSample::new(m.value, t);
        match m.kind {
            MeasurementKind::Odometry => odom.push(sample),
            _ => lc.push(sample),
        }
    }
    (odom, lc)
}

/// Runs one trial through the front-end alone and estimates both noise models
/// from its good residuals.
pub fn estimate_noise(
    trial: &Trial,
    params: &FrontendParams,
    cfg: &NoiseConfig,
    seed: u64,
) -> Result<NoiseModels, PipelineError> {
    let (odom, lc) = single_robot_samples(trial, params, seed);
    Ok(NoiseModels {
        odometry: estimate_filtered(&odom, cfg.trans_max, cfg.rot_max, cfg.normalizer)
            .map_err(noise_err("odometry estimate"))?,
        loop_closure: estimate_filtered(&lc, cfg.trans_max, cfg.rot_max, cfg.normalizer)
            .map_err(noise_err("loop-closure estimate"))?,
    })
}

/// Labels outlier loop closures (and odometry, when `odometry` is given) of
/// `dataset` against its reference solution. Returns the number of labels.
pub fn classify_dataset(
    dataset: &mut Dataset,
    loop_closure: &Covariance6,
    odometry: Option<&Covariance6>,
    confidence: f64,
) -> Result<usize, NoiseError> {
    let lc = Classifier::with_confidence(loop_closure, confidence)?;
    let od = odometry.map(|q| Classifier::with_confidence(q, confidence)).transpose()?;
    let mut labels = Vec::new();
    for (id, m) in dataset.iter_measurements() {
        let classifier = match m.kind {
            MeasurementKind::IntraLc | MeasurementKind::InterLc => &lc,
            MeasurementKind::Odometry => match &od {
                Some(c) => c,
                None => continue,
            },
            MeasurementKind::Prior => continue,
        };
        let Some(truth) = dataset.true_value(m) else { continue };
        if classifier.classify(&m.value, &truth) == Label::Outlier {
            labels.push(id);
        }
    }
    labels.sort();
    let n = labels.len();
    dataset.outlier_labels = labels;
    Ok(n)
}

pub struct Synthesis {
    pub dataset: Dataset,
    pub events: CommEventLog,
    pub summary: DatasetSummary,
}

fn noise_models(config: &PipelineConfig, trials: &[Trial], seeds: &StageSeeds) -> Result<NoiseModels, PipelineError> {
    let cfg = &config.noise;
    match cfg.source {
        NoiseSource::Configured => Ok(NoiseModels {
            odometry: NoiseEstimate::fixed(config.frontend.q_odom),
            loop_closure: NoiseEstimate::fixed(config.frontend.q_lc),
        }),
        NoiseSource::File => {
            let load = |p: &Option<PathBuf>| -> Result<NoiseEstimate, PipelineError> {
                let path = config.resolve(p.as_deref().expect("validated"));
                let text = fs::read_to_string(&path).map_err(|source| PipelineError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                Ok(NoiseEstimate::fixed(parse_matrix(&text).map_err(noise_err("noise file"))?))
            };
            Ok(NoiseModels {
                odometry: load(&cfg.odometry_file)?,
                loop_closure: load(&cfg.loop_closure_file)?,
            })
        }
        NoiseSource::Estimate => {
            let robot = cfg
                .trial
                .clone()
                .unwrap_or_else(|| trials[config.anchor_index].robot_id().to_owned());
            let trial = trials
                .iter()
                .find(|t| t.robot_id() == robot)
                .ok_or_else(|| PipelineError::Config(format!("noise.trial names unknown robot `{robot}`")))?;
            estimate_noise(trial, &config.frontend, cfg, seeds.noise)
        }
    }
}

/// Synchronized trials, their keyframes, and the channel simulation over them.
pub struct CommPass {
    pub seq: SyncedSequence,
    pub keyframes: BTreeMap<String, Vec<Keyframe>>,
    pub events: CommEventLog,
}

fn comm_pass(config: &PipelineConfig, model: &CommModel, trials: &[Trial], seeds: &StageSeeds) -> Result<CommPass, PipelineError> {
    let params = &config.frontend;
    let seq = synchronize(trials, config.anchor_index, config.sigma_offset, config.offset_is_variance, seeds.sync)?;
    let keyframes: BTreeMap<String, Vec<Keyframe>> = seq
        .trials()
        .iter()
        .map(|t| (t.robot_id().to_owned(), select_keyframes(t, params.d_kf, params.num_points)))
        .collect();
    let (t0, t1) = seq.span();
    let events = if t1 > t0 {
        simulate(model, &seq, &scan_schedule(&keyframes), t0, t1, seeds.comms)?
    } else {
        CommEventLog::default()
    };
    Ok(CommPass { seq, keyframes, events })
}

/// Synchronization, keyframing and the channel simulation only.
pub fn simulate_comms(config: &PipelineConfig, trials: &[Trial]) -> Result<CommPass, PipelineError> {
    config.validate()?;
    comm_pass(config, &config.comm()?, trials, &StageSeeds::new(config.seed))
}

/// Full pipeline over already-loaded trials (in config order).
pub fn synthesize_trials(config: &PipelineConfig, trials: &[Trial]) -> Result<Synthesis, PipelineError> {
    config.validate()?;
    let params = &config.frontend;
    let seeds = StageSeeds::new(config.seed);
    let model = config.comm()?;

    let CommPass { seq, keyframes, events } = comm_pass(config, &model, trials, &seeds)?;
    let (t0, t1) = seq.span();
    let deliveries = events.deliveries();

    let robots: Vec<String> = seq.robot_ids().into_iter().map(str::to_owned).collect();
    let mut dataset = Dataset::new(config.name.clone(), robots.clone());
    let lc_seed = derive_seed(seeds.frontend, "lc");
    for robot in &robots {
        let kfs = &keyframes[robot];
        let mut stream = single_robot_measurements(kfs, params, seeds.frontend);
        let received: Vec<ReceivedScan> = deliveries
            .iter()
            .filter(|d| &d.receiver == robot)
            .map(|d| ReceivedScan {
                t: d.t,
                keyframe: keyframes[&d.sender][d.scan.index].clone(),
            })
            .collect();
        let mut inter_rng = stage_rng(seeds.frontend, &format!("inter/{robot}"));
        let candidates = detect_inter_lc(kfs, &received, params, &mut inter_rng);
        stream.extend(register_all(&candidates, params, lc_seed));
        dataset.measurements.insert(robot.clone(), stream);
        dataset.groundtruth.insert(
            robot.clone(),
            kfs.iter()
                .map(|k| GroundtruthEntry {
                    stamp: k.stamp,
                    index: k.index,
                    pose: k.pose,
                })
                .collect(),
        );
    }

    let models = noise_models(config, trials, &seeds)?;
    if config.noise.apply_to_measurements {
        for stream in dataset.measurements.values_mut() {
            for m in stream.iter_mut() {
                match m.kind {
                    MeasurementKind::Odometry => m.covariance = models.odometry.covariance,
                    MeasurementKind::IntraLc | MeasurementKind::InterLc => m.covariance = models.loop_closure.covariance,
                    MeasurementKind::Prior => {}
                }
            }
        }
    }
    dataset.canonicalize();
    classify_dataset(
        &mut dataset,
        &models.loop_closure.covariance,
        config.noise.classify_odometry.then_some(&models.odometry.covariance),
        config.noise.confidence,
    )
    .map_err(noise_err("classification"))?;
    dataset.noise_models.insert(ODOMETRY_MODEL.into(), models.odometry);
    dataset.noise_models.insert(LOOP_CLOSURE_MODEL.into(), models.loop_closure);

    let meta = &mut dataset.metadata;
    meta.source_trials = config
        .trials
        .iter()
        .map(|s| SourceTrial {
            robot: s.robot_id.clone(),
            path: s.path.display().to_string(),
        })
        .collect();
    meta.comm_model = Some(model.name.clone());
    meta.seeds = seeds.to_map();
    meta.offsets = robots
        .iter()
        .map(|r| (r.clone(), seq.window(r).map(|w| w.0).unwrap_or(0.0)))
        .collect();
    meta.span = Some([t0, t1]);
    meta.config = Some(serde_json::to_value(config).map_err(|e| PipelineError::Config(e.to_string()))?);
    meta.extra
        .insert("comm_model_parameters".into(), serde_json::to_value(&model).map_err(|e| PipelineError::Config(e.to_string()))?);

    let summary = summarize(&dataset, Some(&events));
    Ok(Synthesis {
        dataset,
        events,
        summary,
    })
}

/// Loads the configured trials and runs [`synthesize_trials`].
pub fn synthesize(config: &PipelineConfig) -> Result<Synthesis, PipelineError> {
    config.validate()?;
    let trials = config.load_trials()?;
    synthesize_trials(config, &trials)
}

/// Path of the event log written next to a dataset file.
pub fn events_path(dataset_path: &Path) -> PathBuf {
    let stem = dataset_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    dataset_path.with_file_name(format!("{stem}.events.csv"))
}

/// Writes the dataset and its event log; returns the event log path.
pub fn write_outputs(synthesis: &Synthesis, dataset_path: &Path) -> Result<PathBuf, PipelineError> {
    crate::jrl::write(&synthesis.dataset, dataset_path)?;
    let events = events_path(dataset_path);
    fs::write(&events, synthesis.events.to_csv()).map_err(|source| PipelineError::Io {
        path: events.display().to_string(),
        source,
    })?;
    Ok(events)
}

/// Identifiers of all loop closures generated as gross outliers.
pub fn injected_outliers(dataset: &Dataset) -> Vec<MeasurementId> {
    dataset
        .iter_measurements()
        .filter(|(_, m)| m.injected_outlier)
        .map(|(id, _)| id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::Tangent6;
    use crate::synthetic::{circle, line};

    fn config(trials: &[&str], comm: &str, seed: u64) -> PipelineConfig {
        PipelineConfig {
            name: "test".into(),
            seed,
            anchor_index: 0,
            sigma_offset: 5.0,
            offset_is_variance: false,
            comm_model: comm.into(),
            output: None,
            trials: trials
                .iter()
                .map(|r| TrialSource {
                    robot_id: r.to_string(),
                    path: PathBuf::from(format!("{r}.txt")),
                })
                .collect(),
            frontend: FrontendParams::default(),
            noise: NoiseConfig::default(),
            base_dir: PathBuf::new(),
        }
    }

    fn loops(robot: &str, cx: f64) -> Trial {
        circle(robot, [cx, 0.0, 0.0], 15.0, 1.5, 3.0, 0.5).unwrap()
    }

    #[test]
    fn config_toml_defaults() {
        let cfg = PipelineConfig::from_toml(
            "seed = 3\n[[trials]]\nrobot_id = \"a\"\npath = \"a.txt\"\n[frontend]\nd_kf = 1.0\n",
        )
        .unwrap();
        assert_eq!(cfg.comm_model, "wifi");
        assert_eq!(cfg.sigma_offset, 40.0);
        assert_eq!(cfg.frontend.d_kf, 1.0);
        assert_eq!(cfg.noise.trans_max, 0.5);
        assert!(PipelineConfig::from_toml("[[trials]]\nrobot_id = \"a\"\npath = \"a.txt\"\n").is_err());
        assert!(PipelineConfig::from_toml("seed = 1\ntrials = []\nbogus = 2\n").is_err());
    }

    #[test]
    fn synthesis_is_deterministic_and_valid() {
        let trials = vec![loops("a", 0.0), loops("b", 10.0)];
        let cfg = config(&["a", "b"], "wifi", 7);
        let s1 = synthesize_trials(&cfg, &trials).unwrap();
        let s2 = synthesize_trials(&cfg, &trials).unwrap();
        assert!(s1.dataset.validate().is_empty(), "{:?}", s1.dataset.validate());
        assert_eq!(s1.dataset.to_json(), s2.dataset.to_json());
        assert_eq!(s1.events.to_csv(), s2.events.to_csv());
        assert!(s1.summary.lc.count > 0);
        assert!(s1.summary.irlc.count > 0);
        let s3 = synthesize_trials(&config(&["a", "b"], "wifi", 8), &trials).unwrap();
        assert_ne!(s1.dataset.metadata.offsets, s3.dataset.metadata.offsets);
    }

    #[test]
    fn single_robot_has_no_irlc() {
        let trials = vec![loops("a", 0.0)];
        let s = synthesize_trials(&config(&["a"], "wifi", 1), &trials).unwrap();
        assert_eq!(s.summary.irlc.count, 0);
        assert!(s.summary.lc.count > 0);
        assert!(s.events.events.is_empty());
    }

    #[test]
    fn far_apart_robots_under_wifi_never_share() {
        let trials = vec![
            line("a", [0.0, 0.0, 0.0], 0.0, 1.0, 120.0, 0.5).unwrap(),
            line("b", [0.0, 100.0, 0.0], 0.0, 1.0, 120.0, 0.5).unwrap(),
        ];
        let mut cfg = config(&["a", "b"], "wifi", 2);
        cfg.sigma_offset = 0.0;
        cfg.noise.source = NoiseSource::Configured;
        let s = synthesize_trials(&cfg, &trials).unwrap();
        assert_eq!(s.summary.irlc.count, 0);
        assert_eq!(s.summary.comm.unwrap().delivered, 0);
    }

    #[test]
    fn zero_noise_pass_estimates_zero() {
        let mut params = FrontendParams::default();
        params.q_odom = Covariance6::zeros();
        params.q_lc = Covariance6::zeros();
        params.p_outlier = 0.0;
        let models = estimate_noise(&loops("a", 0.0), &params, &NoiseConfig::default(), 3).unwrap();
        assert_eq!(models.odometry.covariance, Covariance6::zeros());
        assert_eq!(models.loop_closure.covariance, Covariance6::zeros());
    }

    #[test]
    fn gross_outliers_are_filtered_from_the_estimate() {
        let trial = circle("a", [0.0, 0.0, 0.0], 15.0, 1.5, 6.0, 0.5).unwrap();
        let mut clean = FrontendParams::default();
        clean.p_outlier = 0.0;
        let mut dirty = clean.clone();
        dirty.p_outlier = 0.1;
        let cfg = NoiseConfig::default();
        let (_, clean_lc) = single_robot_samples(&trial, &clean, 9);
        let (_, dirty_lc) = single_robot_samples(&trial, &dirty, 9);
        assert_eq!(clean_lc.len(), dirty_lc.len());
        // inliers are drawn identically in both passes
        let kept: Vec<ResidualSample> = clean_lc
            .iter()
            .zip(&dirty_lc)
            .filter(|(c, d)| c == d)
            .map(|(c, _)| *c)
            .collect();
        assert!(kept.len() < clean_lc.len());
        let from_dirty = estimate_filtered(&dirty_lc, cfg.trans_max, cfg.rot_max, cfg.normalizer).unwrap();
        let from_kept = estimate_filtered(&kept, cfg.trans_max, cfg.rot_max, cfg.normalizer).unwrap();
        assert_eq!(from_dirty.covariance, from_kept.covariance);
        let from_clean = estimate_filtered(&clean_lc, cfg.trans_max, cfg.rot_max, cfg.normalizer).unwrap();
        let rel = (from_dirty.covariance - from_clean.covariance).norm() / from_clean.covariance.norm();
        assert!(rel < 0.1, "{rel}");
    }

    #[test]
    fn known_q_recovered_from_single_trial() {
        let trial = circle("a", [0.0, 0.0, 0.0], 15.0, 1.5, 8.0, 0.5).unwrap();
        let mut params = FrontendParams::default();
        params.q_lc = Covariance6::from_diagonal(&Tangent6::new(1e-5, 2e-5, 3e-5, 1e-3, 2e-3, 3e-3));
        let models = estimate_noise(&trial, &params, &NoiseConfig::default(), 4).unwrap();
        assert!(models.loop_closure.sample_count > 2000);
        let rel = (models.loop_closure.covariance - params.q_lc).norm() / params.q_lc.norm();
        assert!(rel < 0.1, "{rel}");
    }

    #[test]
    fn labels_follow_injected_outliers() {
        let trials = vec![loops("a", 0.0)];
        let mut cfg = config(&["a"], "wifi", 5);
        cfg.noise.source = NoiseSource::Configured;
        let s = synthesize_trials(&cfg, &trials).unwrap();
        let injected = injected_outliers(&s.dataset);
        // every injected outlier has a translation error of at least 2 m
        for id in &injected {
            assert!(s.dataset.is_labeled_outlier(id));
        }
        assert!(s.dataset.outlier_labels.len() >= injected.len());
    }
}
