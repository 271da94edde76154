//! Stage orchestration: each subcommand of the CLI maps to one function here.
//! Stages read their predecessors' artifacts, write their own with a
//! manifest (config snapshot, seed, input/output digests), and are
//! individually rerunnable. All numeric outputs are reproducible from
//! (config, seed) alone.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::a2c::{
    a2c_train, derive_seed, evaluate, evaluate_zero_baseline, evaluation_seeds, insert_and_finetune,
    rollout_episode, EvalStats,
};
use crate::artifact::{
    ensure_dir, read_json, sha256_file, write_json, write_train_log_csv, write_trajectory_csv,
    read_trajectory_csv, Checkpoint, CodeWidths, CollectionManifest, EpisodeMeta, PipelineConfig,
    QuantCheckpoint, StageManifest,
};
use crate::automaton::{
    build_mmn, check_equivalence, minimize_pes, EquivalenceReport, MinimizeStats, MooreMachine,
    TransitionDataset,
};
use crate::error::{Error, Result};
use crate::kmmn::{
    attention_counts, build_kmmn, cycle_reports, extract_key_states, kmmn_to_dot,
    synchronization_report, AttentionTable, CycleReport, Kmmn, SyncReport,
};
use crate::policy::{DobnetPolicy, PolicyParameters};
use crate::quant::{
    recursive_stability_gap, reconstruction_mse, train_hq_recursive, train_supervised,
    QuantAutoencoder, QuantTrainReport, TrainOptions,
};
use crate::sim::{clamp_control, PlatformState, Trajectory};

pub const STAGES: &[&str] = &[
    "train",
    "collect",
    "train-quantizers",
    "finetune",
    "train-hq",
    "extract-mmn",
    "minimize",
    "kmmn",
    "analyze",
    "report",
];

fn run_id_of(out: &Path) -> String {
    out.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

struct StageWriter {
    out: PathBuf,
    stage_dir: PathBuf,
    stage: String,
    seed: u64,
    config: PipelineConfig,
    inputs: BTreeMap<String, String>,
    started: Instant,
}

impl StageWriter {
    fn new(config: &PipelineConfig, out: &Path, stage: &str, seed: u64) -> Result<Self> {
        let stage_dir = ensure_dir(&out.join(stage))?;
        Ok(Self {
            out: out.to_path_buf(),
            stage_dir,
            stage: stage.to_string(),
            seed,
            config: config.clone(),
            inputs: BTreeMap::new(),
            started: Instant::now(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.stage_dir.join(name)
    }

    /// Records (and digests) a predecessor artifact, failing with a
    /// configuration error when it does not exist.
    fn input(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.out.join(rel);
        if !path.exists() {
            return Err(Error::Config(format!(
                "stage '{}' requires the artifact '{rel}' produced by an earlier stage; \
                 not found under {}",
                self.stage,
                self.out.display()
            )));
        }
        self.inputs.insert(rel.to_string(), sha256_file(&path)?);
        Ok(path)
    }

    fn finish(self, outputs: &[&str]) -> Result<()> {
        let mut out_digests = BTreeMap::new();
        for rel in outputs {
            let path = self.stage_dir.join(rel);
            out_digests.insert(
                format!("{}/{rel}", self.stage),
                sha256_file(&path)?,
            );
        }
        let manifest = StageManifest {
            run_id: run_id_of(&self.out),
            stage: self.stage.clone(),
            seed: self.seed,
            config: self.config.clone(),
            inputs: self.inputs.clone(),
            outputs: out_digests,
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        manifest.save(&self.stage_dir)
    }
}

/// Rolls `n` deterministic episodes and writes them as a collection.
fn collect_and_write(
    params: &PolicyParameters,
    config: &PipelineConfig,
    writer: &StageWriter,
    n: usize,
    seed_tag: u64,
    seed: u64,
) -> Result<(Vec<Trajectory>, Vec<String>)> {
    let env = config.env_config()?;
    let mut episodes = Vec::with_capacity(n);
    let mut metas = Vec::with_capacity(n);
    let mut files = Vec::with_capacity(n);
    for e in 0..n {
        let ep_seed = derive_seed(seed, &[seed_tag, e as u64]);
        let mut policy = DobnetPolicy::new(params, &env.model);
        let traj = rollout_episode(&mut policy, &env, ep_seed)?;
        let file = format!("episodes/ep_{e:05}.csv");
        write_trajectory_csv(&writer.path(&file), &traj)?;
        metas.push(EpisodeMeta {
            id: e,
            file: file.clone(),
            seed: ep_seed,
            pattern: traj.pattern.clone(),
            initial_state: PlatformState {
                position: [
                    traj.steps[0].observation[0],
                    traj.steps[0].observation[1],
                    traj.steps[0].observation[2],
                ],
                velocity: [
                    traj.steps[0].observation[3],
                    traj.steps[0].observation[4],
                    traj.steps[0].observation[5],
                ],
            },
        });
        files.push(file);
        episodes.push(traj);
    }
    let model = config.platform_model()?;
    let initial_output = params.initial_output_code();
    let manifest = CollectionManifest {
        run_id: run_id_of(&writer.out),
        steps: config.episode.steps,
        dt: config.platform.dt,
        hidden_width: Some(config.policy.hidden_width),
        code_widths: match (&params.oq, &params.aq, &params.hq) {
            (Some(oq), Some(aq), Some(hq)) => Some(CodeWidths {
                obs: oq.code_width(),
                action: aq.code_width(),
                hidden: hq.code_width(),
            }),
            _ => None,
        },
        initial_hidden_code: params.initial_hidden_code(),
        initial_output_code: initial_output.as_ref().map(|(c, _)| c.clone()),
        initial_decoded_action: initial_output
            .map(|(_, raw)| clamp_control(raw, &model)),
        episodes: metas,
    };
    write_json(&writer.path("collection.json"), &manifest)?;
    files.push("collection.json".to_string());
    Ok((episodes, files))
}

fn load_collection(dir: &Path) -> Result<(CollectionManifest, Vec<Trajectory>)> {
    let manifest: CollectionManifest = read_json(&dir.join("collection.json"))?;
    let mut episodes = Vec::with_capacity(manifest.episodes.len());
    for meta in &manifest.episodes {
        episodes.push(read_trajectory_csv(
            &dir.join(&meta.file),
            meta.pattern.clone(),
        )?);
    }
    Ok((manifest, episodes))
}

/// Training-stage output summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainEvalSummary {
    pub trained: EvalStats,
    pub zero_baseline: EvalStats,
    /// mean regulation error, trained / zero baseline.
    pub regulation_ratio: f64,
}

/// Trains the continuous controller, evaluates it against the zero-action
/// baseline on paired seeds, and checkpoints everything.
pub fn stage_train(config: &PipelineConfig, out: &Path, seed: u64) -> Result<()> {
    let mut writer = StageWriter::new(config, out, "train", seed)?;
    let _ = &mut writer;
    let env = config.env_config()?;
    let model = config.platform_model()?;
    let init_seed = derive_seed(seed, &[100]);
    let mut rng = ChaCha12Rng::seed_from_u64(init_seed);
    let mut params = PolicyParameters::new(&mut rng, config.policy_config(), &model);
    let train_cfg = config.train_config(derive_seed(seed, &[101]));
    let log = a2c_train(&mut params, &env, &train_cfg)?;

    let eval_seeds = evaluation_seeds(derive_seed(seed, &[102]), config.evaluation.episodes);
    let trained = evaluate(&params, &env, &eval_seeds)?;
    let zero = evaluate_zero_baseline(&env, &eval_seeds)?;
    let summary = TrainEvalSummary {
        regulation_ratio: trained.mean_regulation_error / zero.mean_regulation_error,
        trained,
        zero_baseline: zero,
    };

    Checkpoint::new(
        params,
        vec![
            format!("init:{init_seed}"),
            format!("train:{}", train_cfg.seed),
        ],
    )
    .save(&writer.path("policy.json"))?;
    write_train_log_csv(&writer.path("train_log.csv"), &log)?;
    write_json(&writer.path("eval.json"), &summary)?;
    writer.finish(&["policy.json", "train_log.csv", "eval.json"])
}

/// Rolls the trained continuous controller to gather the observation and
/// action datasets for interface training.
pub fn stage_collect(config: &PipelineConfig, out: &Path, seed: u64) -> Result<()> {
    let mut writer = StageWriter::new(config, out, "collect", seed)?;
    let ckpt_path = writer.input("train/policy.json")?;
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let (_, files) = collect_and_write(
        &ckpt.params,
        config,
        &writer,
        config.quantizers.collect_episodes,
        110,
        seed,
    )?;
    let refs: Vec<&str> = files.iter().map(|s| s.as_str()).collect();
    writer.finish(&refs)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantizerReport {
    pub oq_training: QuantTrainReport,
    pub aq_training: QuantTrainReport,
    pub oq_holdout_mse: f64,
    pub aq_holdout_mse: f64,
    pub samples: usize,
}

/// Supervised training of the observation and action interfaces on the
/// collected rollout data.
pub fn stage_train_quantizers(config: &PipelineConfig, out: &Path, seed: u64) -> Result<()> {
    let mut writer = StageWriter::new(config, out, "train-quantizers", seed)?;
    let collect_dir = writer.input("collect/collection.json")?;
    let (_, episodes) = load_collection(collect_dir.parent().unwrap())?;

    let mut obs_data = Vec::new();
    let mut action_data = Vec::new();
    for traj in &episodes {
        for s in &traj.steps {
            obs_data.push(Array1::from(s.observation.to_vec()));
            action_data.push(Array1::from(s.action.to_vec()));
        }
    }
    let holdout_every = (1.0 / config.quantizers.holdout_fraction).round().max(2.0) as usize;
    let split = |data: Vec<Array1<f64>>| {
        let mut train = Vec::new();
        let mut held = Vec::new();
        for (i, x) in data.into_iter().enumerate() {
            if i % holdout_every == 0 {
                held.push(x);
            } else {
                train.push(x);
            }
        }
        (train, held)
    };
    let (obs_train, obs_held) = split(obs_data);
    let (act_train, act_held) = split(action_data);

    let q = &config.quantizers;
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, &[120]));
    let mut oq = QuantAutoencoder::new_oq(&mut rng, q.oq_code_width, q.oq_aq_hidden_width);
    let mut aq = QuantAutoencoder::new_aq(&mut rng, q.aq_code_width, q.oq_aq_hidden_width);
    let opts = TrainOptions {
        learning_rate: q.supervised_learning_rate,
        epochs: q.supervised_epochs,
        batch_size: q.batch_size,
        seed: derive_seed(seed, &[121]),
    };
    let oq_training = train_supervised(&mut oq, &obs_train, &opts)?;
    let aq_training = train_supervised(&mut aq, &act_train, &opts)?;
    let report = QuantizerReport {
        oq_holdout_mse: reconstruction_mse(&oq, &obs_held),
        aq_holdout_mse: reconstruction_mse(&aq, &act_held),
        oq_training,
        aq_training,
        samples: obs_train.len(),
    };

    QuantCheckpoint::new(oq, vec![format!("init:{}", derive_seed(seed, &[120]))])
        .save(&writer.path("oq.json"))?;
    QuantCheckpoint::new(aq, vec![format!("init:{}", derive_seed(seed, &[120]))])
        .save(&writer.path("aq.json"))?;
    write_json(&writer.path("quant_report.json"), &report)?;
    writer.finish(&["oq.json", "aq.json", "quant_report.json"])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedEval {
    pub continuous: EvalStats,
    pub inserted: EvalStats,
    pub finetuned: EvalStats,
    /// (continuous - quantized) / |continuous| mean reward, before finetune.
    pub reward_degradation_inserted: f64,
    /// Same after finetuning.
    pub reward_degradation_finetuned: f64,
    pub regulation_increase_finetuned: f64,
}

fn reward_degradation(reference: &EvalStats, other: &EvalStats) -> f64 {
    (reference.mean_reward - other.mean_reward) / reference.mean_reward.abs()
}

/// Inserts OQ and AQ into the continuous controller and finetunes the whole
/// quantized network (straight-through gradients), with paired-seed
/// evaluation before and after.
pub fn stage_finetune(config: &PipelineConfig, out: &Path, seed: u64) -> Result<()> {
    let mut writer = StageWriter::new(config, out, "finetune", seed)?;
    let ckpt = Checkpoint::load(&writer.input("train/policy.json")?)?;
    let oq = QuantCheckpoint::load(&writer.input("train-quantizers/oq.json")?)?;
    let aq = QuantCheckpoint::load(&writer.input("train-quantizers/aq.json")?)?;

    let env = config.env_config()?;
    let mut params = ckpt.params;
    let eval_seeds = evaluation_seeds(derive_seed(seed, &[102]), config.evaluation.episodes);
    let continuous = evaluate(&params, &env, &eval_seeds)?;

    let mut ft_cfg = config.train_config(derive_seed(seed, &[125]));
    ft_cfg.total_env_steps = config.finetune.total_env_steps;
    ft_cfg.learning_rate = config.finetune.learning_rate;
    ft_cfg.freeze_quantizers = config.finetune.freeze_quantizers;
    let outcome = insert_and_finetune(
        &mut params,
        oq.autoencoder,
        aq.autoencoder,
        &env,
        &ft_cfg,
        &eval_seeds,
    )?;

    let paired = PairedEval {
        reward_degradation_inserted: reward_degradation(&continuous, &outcome.before),
        reward_degradation_finetuned: reward_degradation(&continuous, &outcome.after),
        regulation_increase_finetuned: (outcome.after.mean_regulation_error
            - continuous.mean_regulation_error)
            / continuous.mean_regulation_error,
        continuous,
        inserted: outcome.before,
        finetuned: outcome.after,
    };
    Checkpoint::new(params, vec![format!("finetune:{}", ft_cfg.seed)])
        .save(&writer.path("policy_quantized.json"))?;
    write_train_log_csv(&writer.path("finetune_log.csv"), &outcome.log)?;
    write_json(&writer.path("paired_eval.json"), &paired)?;
    writer.finish(&["policy_quantized.json", "finetune_log.csv", "paired_eval.json"])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HqReport {
    pub training: QuantTrainReport,
    /// Held-out mean squared reconstruction error per component.
    pub holdout_mse: f64,
    /// Held-out mean ||HQ(h) - HQ(HQ(h))||^2.
    pub holdout_recursive_gap: f64,
    pub samples: usize,
    /// Paired evaluation of the fully quantized net (OQ+AQ+HQ).
    pub full_quantized: EvalStats,
    pub continuous: EvalStats,
    pub reward_degradation_full: f64,
    pub regulation_increase_full: f64,
}

/// Collects hidden states from the finetuned quantized controller (HQ still
/// off), trains the hidden interface with the recursive loss, and evaluates
/// the fully quantized network.
pub fn stage_train_hq(config: &PipelineConfig, out: &Path, seed: u64) -> Result<()> {
    let mut writer = StageWriter::new(config, out, "train-hq", seed)?;
    let cont = Checkpoint::load(&writer.input("train/policy.json")?)?;
    let ckpt = Checkpoint::load(&writer.input("finetune/policy_quantized.json")?)?;
    let env = config.env_config()?;
    let mut params = ckpt.params;
    if params.oq.is_none() || params.aq.is_none() {
        return Err(Error::Config(
            "train-hq requires the finetuned policy with OQ and AQ inserted".into(),
        ));
    }

    // Hidden dataset from quantized rollouts.
    let mut hidden_data = Vec::new();
    for e in 0..config.quantizers.hq_collect_episodes {
        let ep_seed = derive_seed(seed, &[130, e as u64]);
        let mut policy = DobnetPolicy::new(&params, &env.model);
        let traj = rollout_episode(&mut policy, &env, ep_seed)?;
        for s in traj.steps {
            let h = s.hidden.expect("policy rollouts record hidden states");
            hidden_data.push(Array1::from(h));
        }
    }
    let holdout_every = (1.0 / config.quantizers.holdout_fraction).round().max(2.0) as usize;
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (i, h) in hidden_data.into_iter().enumerate() {
        if i % holdout_every == 0 {
            held.push(h);
        } else {
            train.push(h);
        }
    }

    let q = &config.quantizers;
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, &[131]));
    let mut hq = QuantAutoencoder::new_hq(
        &mut rng,
        config.policy.hidden_width,
        q.hq_code_width,
        q.hq_hidden_width,
    );
    let opts = TrainOptions {
        learning_rate: q.hq_learning_rate,
        epochs: q.hq_epochs,
        batch_size: q.batch_size,
        seed: derive_seed(seed, &[132]),
    };
    let training = train_hq_recursive(&mut hq, &train, q.eta, &opts)?;
    let holdout_mse = reconstruction_mse(&hq, &held);
    let holdout_recursive_gap = recursive_stability_gap(&hq, &held);

    // Paired evaluation with HQ inserted.
    let eval_seeds = evaluation_seeds(derive_seed(seed, &[102]), config.evaluation.episodes);
    let continuous = evaluate(&cont.params, &env, &eval_seeds)?;
    params.hq = Some(hq.clone());
    let full = evaluate(&params, &env, &eval_seeds)?;
    let report = HqReport {
        training,
        holdout_mse,
        holdout_recursive_gap,
        samples: train.len(),
        reward_degradation_full: reward_degradation(&continuous, &full),
        regulation_increase_full: (full.mean_regulation_error - continuous.mean_regulation_error)
            / continuous.mean_regulation_error,
        full_quantized: full,
        continuous,
    };
    QuantCheckpoint::new(hq, vec![format!("hq:{}", opts.seed)]).save(&writer.path("hq.json"))?;
    write_json(&writer.path("hq_report.json"), &report)?;
    writer.finish(&["hq.json", "hq_report.json"])
}

/// Builds the fully quantized controller and extracts the transition dataset
/// and the unreduced machine from its rollouts.
pub fn stage_extract_mmn(config: &PipelineConfig, out: &Path, seed: u64) -> Result<()> {
    let mut writer = StageWriter::new(config, out, "extract-mmn", seed)?;
    let ckpt = Checkpoint::load(&writer.input("finetune/policy_quantized.json")?)?;
    let hq = QuantCheckpoint::load(&writer.input("train-hq/hq.json")?)?;
    let mut params = ckpt.params;
    params.hq = Some(hq.autoencoder);

    let (episodes, files) = collect_and_write(
        &params,
        config,
        &writer,
        config.mmn.episodes,
        140,
        seed,
    )?;
    let dataset = dataset_from_collection(config, &params, &episodes)?;
    let machine = build_mmn(&dataset)?;
    write_json(&writer.path("mmn.json"), &machine)?;
    let mut refs: Vec<&str> = files.iter().map(|s| s.as_str()).collect();
    refs.push("mmn.json");
    writer.finish(&refs)
}

fn dataset_from_collection(
    config: &PipelineConfig,
    params: &PolicyParameters,
    episodes: &[Trajectory],
) -> Result<TransitionDataset> {
    let model = config.platform_model()?;
    let initial_hidden = params
        .initial_hidden_code()
        .ok_or_else(|| Error::Config("machine extraction requires HQ inserted".into()))?;
    let (initial_output, raw) = params
        .initial_output_code()
        .ok_or_else(|| Error::Config("machine extraction requires AQ inserted".into()))?;
    TransitionDataset::from_trajectories(
        episodes,
        initial_hidden,
        initial_output,
        clamp_control(raw, &model),
    )
}

fn load_extraction(
    config: &PipelineConfig,
    out: &Path,
    writer: &mut StageWriter,
) -> Result<(PolicyParameters, Vec<Trajectory>, TransitionDataset)> {
    let ckpt = Checkpoint::load(&writer.input("finetune/policy_quantized.json")?)?;
    let hq = QuantCheckpoint::load(&writer.input("train-hq/hq.json")?)?;
    let mut params = ckpt.params;
    params.hq = Some(hq.autoencoder);
    let collection = writer.input("extract-mmn/collection.json")?;
    let (_, episodes) = load_collection(collection.parent().unwrap())?;
    let _ = out;
    let dataset = dataset_from_collection(config, &params, &episodes)?;
    Ok((params, episodes, dataset))
}

/// Reduces the machine and verifies replay equivalence on every episode.
pub fn stage_minimize(config: &PipelineConfig, out: &Path, seed: u64) -> Result<()> {
    let mut writer = StageWriter::new(config, out, "minimize", seed)?;
    let machine: MooreMachine = read_json(&writer.input("extract-mmn/mmn.json")?)?;
    let (_, _, dataset) = load_extraction(config, out, &mut writer)?;

    let (reduced, stats) = minimize_pes(&machine, &config.minimize_options())?;
    let equivalence = check_equivalence(&machine, &reduced, &dataset)?;
    if !equivalence.passed() {
        write_json(&writer.path("equivalence.json"), &equivalence)?;
        return Err(Error::DataIntegrity(format!(
            "reduced machine diverges from the original on {} episode(s); see equivalence.json",
            equivalence.divergences.len()
        )));
    }
    write_json(&writer.path("mmn_reduced.json"), &reduced)?;
    write_json(&writer.path("minimize_stats.json"), &stats)?;
    write_json(&writer.path("equivalence.json"), &equivalence)?;
    let model = config.platform_model()?;
    std::fs::write(
        writer.path("mmn_reduced.dot"),
        reduced.to_dot(model.control_upper, config.analysis.saturation_cutoff),
    )?;
    writer.finish(&[
        "mmn_reduced.json",
        "minimize_stats.json",
        "equivalence.json",
        "mmn_reduced.dot",
    ])
}

fn analysis_subset(config: &PipelineConfig, dataset: &TransitionDataset) -> TransitionDataset {
    let mut subset = dataset.clone();
    subset.episodes.truncate(config.analysis.episodes);
    subset
}

/// Key-state table row, mirroring the summary layout: index, quantized
/// encoding, decoded action.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyStateRow {
    pub state: usize,
    pub encoding: String,
    pub decoded_action: Option<[f64; 3]>,
    pub attention: usize,
    pub is_initial: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KmmnSummary {
    pub analysis_episodes: usize,
    pub attention_threshold: f64,
    pub key_states: Vec<KeyStateRow>,
    pub uncovered_episodes: Vec<usize>,
}

/// Attention counting, key-state extraction, and key-machine construction on
/// the analysis subset.
pub fn stage_kmmn(config: &PipelineConfig, out: &Path, seed: u64) -> Result<()> {
    let mut writer = StageWriter::new(config, out, "kmmn", seed)?;
    let reduced: MooreMachine = read_json(&writer.input("minimize/mmn_reduced.json")?)?;
    let (_, _, dataset) = load_extraction(config, out, &mut writer)?;
    let subset = analysis_subset(config, &dataset);

    let table = attention_counts(&reduced, &subset)?;
    let keys = extract_key_states(&table, config.analysis.attention_threshold, reduced.initial)?;
    let kmmn = build_kmmn(&reduced, &keys, &table, &subset)?;

    let rows: Vec<KeyStateRow> = kmmn
        .key_states
        .iter()
        .map(|k| KeyStateRow {
            state: k.state,
            encoding: k.output.clone(),
            decoded_action: k.decoded_action,
            attention: k.attention,
            is_initial: k.state == kmmn.initial,
        })
        .collect();
    let summary = KmmnSummary {
        analysis_episodes: subset.episodes.len(),
        attention_threshold: config.analysis.attention_threshold,
        key_states: rows,
        uncovered_episodes: kmmn.uncovered_episodes.clone(),
    };
    write_json(&writer.path("attention.json"), &table)?;
    write_json(&writer.path("kmmn.json"), &kmmn)?;
    write_json(&writer.path("kmmn_summary.json"), &summary)?;
    let key_csv = {
        let mut s = String::from("state,encoding,action_0,action_1,action_2,attention,is_initial\n");
        for r in &summary.key_states {
            let a = r.decoded_action.unwrap_or([f64::NAN; 3]);
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.state, r.encoding, a[0], a[1], a[2], r.attention, r.is_initial
            ));
        }
        s
    };
    std::fs::write(writer.path("key_states.csv"), key_csv)?;
    writer.finish(&["attention.json", "kmmn.json", "kmmn_summary.json", "key_states.csv"])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub episodes: usize,
    pub converged_episodes: usize,
    pub converged_fraction: f64,
    pub sync: SyncReport,
}

/// Cycle detection on the key-visit projections and synchronization scoring
/// of cycle-converged episodes against their disturbances.
pub fn stage_analyze(config: &PipelineConfig, out: &Path, seed: u64) -> Result<()> {
    config.validate()?;
    let mut writer = StageWriter::new(config, out, "analyze", seed)?;
    let reduced: MooreMachine = read_json(&writer.input("minimize/mmn_reduced.json")?)?;
    let kmmn: Kmmn = read_json(&writer.input("kmmn/kmmn.json")?)?;
    let collection = writer.input("extract-mmn/collection.json")?;
    let (_, episodes) = load_collection(collection.parent().unwrap())?;
    let model = config.platform_model()?;

    let cycles = cycle_reports(&kmmn);
    let converged: BTreeSet<usize> = cycles
        .iter()
        .filter(|c| c.cycle.is_some())
        .map(|c| c.episode_id)
        .collect();
    let sync = synchronization_report(
        &kmmn,
        &reduced,
        &episodes,
        &model,
        Some(&converged),
        config.analysis.saturation_cutoff,
    )?;

    write_json(&writer.path("cycles.json"), &cycles)?;
    std::fs::write(writer.path("cycles.csv"), cycles_csv(&cycles))?;
    std::fs::write(writer.path("sync_events.csv"), sync_events_csv(&sync))?;
    write_json(
        &writer.path("sync_summary.json"),
        &AnalysisSummary {
            episodes: kmmn.episodes.len(),
            converged_episodes: converged.len(),
            converged_fraction: converged.len() as f64 / kmmn.episodes.len().max(1) as f64,
            sync: sync.clone(),
        },
    )?;
    std::fs::write(
        writer.path("kmmn_cycles.dot"),
        kmmn_to_dot(&kmmn, &cycles, model.control_upper),
    )?;
    // Per-episode plot data: disturbances and the additive inverse of the key
    // actions at their entry steps.
    let mut plot_files = Vec::new();
    for ep in &kmmn.episodes {
        let traj = &episodes[ep.episode_id];
        let mut s = String::from("t,d_x,d_y,d_z,neg_u_x,neg_u_y,neg_u_z,key_state\n");
        let mut by_step: BTreeMap<usize, &crate::kmmn::KeyVisit> = BTreeMap::new();
        for v in &ep.visits {
            if v.entry_step >= 0 {
                by_step.insert(v.entry_step as usize, v);
            }
        }
        for t in 0..traj.steps.len() {
            let d = crate::sim::disturbance_force(&traj.pattern, t, model.dt);
            match by_step.get(&t) {
                Some(v) => {
                    let a = reduced.states[v.state].decoded_action.unwrap_or([f64::NAN; 3]);
                    s.push_str(&format!(
                        "{t},{},{},{},{},{},{},{}\n",
                        d[0], d[1], d[2], -a[0], -a[1], -a[2], v.state
                    ));
                }
                None => s.push_str(&format!("{t},{},{},{},,,,\n", d[0], d[1], d[2])),
            }
        }
        let file = format!("plots/ep_{:05}.csv", ep.episode_id);
        let path = writer.path(&file);
        std::fs::create_dir_all(path.parent().unwrap())?;
        std::fs::write(path, s)?;
        plot_files.push(file);
    }
    let mut outputs: Vec<&str> = vec![
        "cycles.json",
        "cycles.csv",
        "sync_events.csv",
        "sync_summary.json",
        "kmmn_cycles.dot",
    ];
    outputs.extend(plot_files.iter().map(|s| s.as_str()));
    writer.finish(&outputs)
}

fn cycles_csv(cycles: &[CycleReport]) -> String {
    let mut s = String::from("episode,converged,cycle,entry_index,entry_step,repetitions,earlier_candidates\n");
    for c in cycles {
        let (cycle, entry_index, reps) = match &c.cycle {
            Some(d) => (
                d.states
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join("-"),
                d.entry_index.to_string(),
                d.repetitions.to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        let earlier = c
            .earlier_candidates
            .iter()
            .map(|d| {
                d.states
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join("-")
            })
            .collect::<Vec<_>>()
            .join(";");
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.episode_id,
            c.cycle.is_some(),
            cycle,
            entry_index,
            c.entry_step.map(|v| v.to_string()).unwrap_or_default(),
            reps,
            earlier
        ));
    }
    s
}

fn sync_events_csv(sync: &SyncReport) -> String {
    let mut s = String::from(
        "episode,step,state,a_x,a_y,a_z,d_x,d_y,d_z,ratio_x,ratio_y,ratio_z,\
         qualifying_axes,opposing_axes,all_qualifying_opposed_saturated\n",
    );
    for e in &sync.events {
        let axes = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            e.episode_id,
            e.step,
            e.state,
            e.decoded_action[0],
            e.decoded_action[1],
            e.decoded_action[2],
            e.disturbance[0],
            e.disturbance[1],
            e.disturbance[2],
            e.ratios[0],
            e.ratios[1],
            e.ratios[2],
            axes(&e.qualifying_axes),
            axes(&e.opposing_axes),
            e.all_qualifying_opposed_saturated
        ));
    }
    s
}

/// Everything the acceptance statistics need, in one document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub run_id: String,
    pub seed: u64,
    pub training: TrainEvalSummary,
    pub quantizers: QuantizerReport,
    pub paired_eval: PairedEval,
    pub hq: HqReport,
    pub machine: MinimizeStats,
    pub equivalence: EquivalenceReport,
    pub attention: AttentionTable,
    pub kmmn_summary: KmmnSummary,
    pub analysis: AnalysisSummary,
}

/// Aggregates every stage's statistics into one summary document.
pub fn stage_report(config: &PipelineConfig, out: &Path, seed: u64) -> Result<()> {
    let mut writer = StageWriter::new(config, out, "report", seed)?;
    let training: TrainEvalSummary = read_json(&writer.input("train/eval.json")?)?;
    let quantizers: QuantizerReport = read_json(&writer.input("train-quantizers/quant_report.json")?)?;
    let paired_eval: PairedEval = read_json(&writer.input("finetune/paired_eval.json")?)?;
    let hq: HqReport = read_json(&writer.input("train-hq/hq_report.json")?)?;
    let machine: MinimizeStats = read_json(&writer.input("minimize/minimize_stats.json")?)?;
    let equivalence: EquivalenceReport = read_json(&writer.input("minimize/equivalence.json")?)?;
    let attention: AttentionTable = read_json(&writer.input("kmmn/attention.json")?)?;
    let kmmn_summary: KmmnSummary = read_json(&writer.input("kmmn/kmmn_summary.json")?)?;
    let analysis: AnalysisSummary = read_json(&writer.input("analyze/sync_summary.json")?)?;
    let report = PipelineReport {
        run_id: run_id_of(out),
        seed,
        training,
        quantizers,
        paired_eval,
        hq,
        machine,
        equivalence,
        attention,
        kmmn_summary,
        analysis,
    };
    write_json(&writer.path("report.json"), &report)?;
    writer.finish(&["report.json"])
}

/// Runs one named stage.
pub fn run_stage(stage: &str, config: &PipelineConfig, out: &Path, seed: u64) -> Result<()> {
    config.validate()?;
    match stage {
        "train" => stage_train(config, out, seed),
        "collect" => stage_collect(config, out, seed),
        "train-quantizers" => stage_train_quantizers(config, out, seed),
        "finetune" => stage_finetune(config, out, seed),
        "train-hq" => stage_train_hq(config, out, seed),
        "extract-mmn" => stage_extract_mmn(config, out, seed),
        "minimize" => stage_minimize(config, out, seed),
        "kmmn" => stage_kmmn(config, out, seed),
        "analyze" => stage_analyze(config, out, seed),
        "report" => stage_report(config, out, seed),
        other => Err(Error::Config(format!(
            "unknown stage '{other}'; expected one of {STAGES:?}"
        ))),
    }
}

/// Runs the full pipeline in stage order.
pub fn run_all(config: &PipelineConfig, out: &Path, seed: u64) -> Result<()> {
    for stage in STAGES {
        run_stage(stage, config, out, seed)?;
    }
    Ok(())
}

/// A configuration small enough for smoke tests and reproducibility checks:
/// tiny networks, a short training budget, few episodes.
pub fn tiny_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.run.seed = seed;
    cfg.policy.hidden_width = 8;
    cfg.policy.embed_width = 16;
    cfg.policy.head_width = 16;
    cfg.training.workers = 2;
    cfg.training.rollout_len = 20;
    cfg.training.total_env_steps = 4_000;
    cfg.training.learning_rate = 1e-3;
    cfg.finetune.total_env_steps = 2_000;
    cfg.finetune.learning_rate = 5e-4;
    cfg.quantizers.oq_code_width = 16;
    cfg.quantizers.aq_code_width = 4;
    cfg.quantizers.hq_code_width = 8;
    cfg.quantizers.oq_aq_hidden_width = 24;
    cfg.quantizers.hq_hidden_width = 32;
    cfg.quantizers.collect_episodes = 6;
    cfg.quantizers.hq_collect_episodes = 4;
    cfg.quantizers.supervised_epochs = 8;
    cfg.quantizers.hq_epochs = 8;
    cfg.evaluation.episodes = 6;
    cfg.mmn.episodes = 8;
    cfg.analysis.episodes = 4;
    cfg
}
