use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{parse_program, pretty_print, RewardProgram};
use crate::env::{training_schema, EnvConfig};
use crate::eval::{
    compile_feedback, deploy_gated, e_train, homomorphic_eval, select_best, select_final, train_criterion, BestSummary,
    CandidateSummary, Deployment, EvalReport, FinalCandidate, Stage,
};
use crate::llm::{
    assemble_prompt, generate_candidates, Backend, CandidateSource, GenerationStats, HttpBackend, MockBackend,
    PromptInputs,
};
use crate::policy::{train_candidate, PolicyParams, TeacherPolicy, TrainMetrics};
use crate::seed;

use super::config::{BackendKind, ConfigError, FrameworkConfig};
use super::record::*;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("run directory {0} already contains a run; use --resume")]
    Exists(PathBuf),
    #[error("config differs from the snapshot in {0}")]
    ConfigMismatch(PathBuf),
    #[error("backend setup failed: {0}")]
    Backend(String),
    #[error("stopped as requested")]
    Interrupted,
    #[error("worker pool: {0}")]
    Pool(String),
}

impl RunError {
    /// Process exit code: 1 for configuration, 3 for IO and integrity problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::ConfigMismatch(_) | RunError::Backend(_) => 1,
            _ => 3,
        }
    }
}

/// Test hooks that abort a run at a fixed point, leaving the record as a crash would.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StopPoint {
    pub iteration: usize,
    /// Stop after this many candidates are trained; `None` stops after the iteration completes.
    pub trained: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_dir: PathBuf,
    pub iterations: Vec<IterationSummary>,
    pub best: Option<BestSummary>,
    pub network_requests: usize,
}

impl RunRecord {
    pub fn best_criteria(&self) -> Vec<Option<f64>> {
        self.iterations.iter().map(|s| s.best.as_ref().map(|b| b.train_criterion)).collect()
    }
}

/// Persisted training result of one candidate; its presence marks the candidate done.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainRecord {
    failure: Option<String>,
    train_criterion: Option<f64>,
    report: Option<EvalReport>,
}

struct Trained {
    record: TrainRecord,
    policy: Option<PolicyParams>,
}

#[derive(Clone)]
struct BestState {
    summary: BestSummary,
    policy: PolicyParams,
}

struct LoopState {
    feedback: Option<String>,
    best: Option<BestState>,
}

pub type BackendFactory<'a> = dyn Fn(usize) -> Result<Box<dyn Backend>, RunError> + Sync + 'a;

/// Backend for iteration `i`: a fresh mock keyed by the iteration, or the HTTP client.
pub fn config_backend(cfg: &FrameworkConfig) -> Result<Box<BackendFactory<'static>>, RunError> {
    match cfg.backend.kind {
        BackendKind::Mock => {
            let m = cfg.backend.mock.clone();
            let master = cfg.seed;
            Ok(Box::new(move |i| {
                let s = seed::derive(master, &[seed::GENERATION, i as u64]);
                Ok(Box::new(MockBackend::with_faults(s, m.fault_rate, m.repair_rate)) as Box<dyn Backend>)
            }))
        }
        BackendKind::Http => {
            let http = Arc::new(HttpBackend::new(cfg.backend.http.clone()).map_err(|e| RunError::Backend(e.to_string()))?);
            Ok(Box::new(move |_| Ok(Box::new(SharedBackend(http.clone())) as Box<dyn Backend>)))
        }
    }
}

struct SharedBackend(Arc<HttpBackend>);

impl Backend for SharedBackend {
    fn id(&self) -> String {
        self.0.id()
    }
    fn complete(&self, r: &crate::llm::CompletionRequest) -> Result<String, crate::llm::BackendError> {
        self.0.complete(r)
    }
    fn network_requests(&self) -> usize {
        self.0.network_requests()
    }
}

pub struct Orchestrator<'a> {
    cfg: FrameworkConfig,
    run_dir: PathBuf,
    reference: Option<RewardProgram>,
    backends: &'a BackendFactory<'a>,
    stop: Option<StopPoint>,
    network_requests: usize,
}

fn read_reference(path: &Path) -> Result<(String, RewardProgram), RunError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.into(), source: e })?;
    let p = parse_program(&text).map_err(|e| ConfigError::Invalid(format!("reference {}: {e}", path.display())))?;
    let report = crate::dsl::validate_program(&p, &training_schema());
    if !report.is_empty() {
        return Err(ConfigError::Invalid(format!("reference {}: {report}", path.display())).into());
    }
    Ok((text, p))
}

impl<'a> Orchestrator<'a> {
    /// Starts a new run in `run_dir`, which must be absent or empty.
    pub fn create(cfg: FrameworkConfig, run_dir: &Path, backends: &'a BackendFactory<'a>) -> Result<Self, RunError> {
        cfg.validate()?;
        if run_dir.join(MANIFEST).exists() || fs::read_dir(run_dir).is_ok_and(|mut d| d.next().is_some()) {
            return Err(RunError::Exists(run_dir.into()));
        }
        fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
        let mut reference = None;
        let mut reference_sha = None;
        if let Some(path) = &cfg.prompt.reference {
            let (text, p) = read_reference(path)?;
            write_atomic(&run_dir.join(REFERENCE_FILE), text.as_bytes())?;
            reference_sha = Some(sha256_hex(text.as_bytes()));
            reference = Some(p);
        }
        let snapshot = cfg.to_toml()?;
        write_atomic(&run_dir.join(CONFIG_SNAPSHOT), snapshot.as_bytes())?;
        Manifest::new(sha256_hex(snapshot.as_bytes()), reference_sha).save(run_dir)?;
        Ok(Self { cfg, run_dir: run_dir.into(), reference, backends, stop: None, network_requests: 0 })
    }

    /// Reopens an existing run after checking every recorded hash. When
    /// `expected` is given it must equal the snapshot.
    pub fn open(
        run_dir: &Path,
        expected: Option<&FrameworkConfig>,
        backends: &'a BackendFactory<'a>,
    ) -> Result<Self, RunError> {
        let manifest = Manifest::load(run_dir)?;
        manifest.verify(run_dir)?;
        let snap_path = run_dir.join(CONFIG_SNAPSHOT);
        let text = fs::read_to_string(&snap_path).map_err(io_err(&snap_path))?;
        let cfg = FrameworkConfig::from_toml(&text)?;
        if let Some(e) = expected {
            if e.to_toml()? != text {
                return Err(RunError::ConfigMismatch(run_dir.into()));
            }
        }
        let reference = match manifest.reference_sha256 {
            Some(_) => Some(read_reference(&run_dir.join(REFERENCE_FILE))?.1),
            None => None,
        };
        Ok(Self { cfg, run_dir: run_dir.into(), reference, backends, stop: None, network_requests: 0 })
    }

    pub fn config(&self) -> &FrameworkConfig {
        &self.cfg
    }

    pub fn stop_at(mut self, stop: StopPoint) -> Self {
        self.stop = Some(stop);
        self
    }

    /// Runs every iteration not yet in the manifest, then writes the final outputs.
    pub fn run(&mut self) -> Result<RunRecord, RunError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.workers)
            .build()
            .map_err(|e| RunError::Pool(e.to_string()))?;
        pool.install(|| self.run_inner())
    }

    fn run_inner(&mut self) -> Result<RunRecord, RunError> {
        let mut manifest = Manifest::load(&self.run_dir)?;
        let mut summaries = Vec::new();
        let mut state = LoopState { feedback: None, best: None };
        for e in &manifest.iterations {
            let s = self.replay(e.iteration, &mut state)?;
            summaries.push(s);
        }
        for i in manifest.iterations.len()..self.cfg.iterations {
            let summary = self.iteration(i, &mut state)?;
            write_json(&iter_dir(&self.run_dir, i).join("summary.json"), &summary)?;
            let files = hash_tree(&self.run_dir, &iter_dir(&self.run_dir, i))?;
            manifest.iterations.push(ManifestEntry { iteration: i, status: summary.status, files });
            manifest.save(&self.run_dir)?;
            summaries.push(summary);
            if self.stop.is_some_and(|s| s.iteration == i && s.trained.is_none()) {
                return Err(RunError::Interrupted);
            }
        }
        if manifest.final_files.is_none() {
            manifest.final_files = Some(self.write_final(&state)?);
            manifest.save(&self.run_dir)?;
        }
        Ok(RunRecord {
            run_dir: self.run_dir.clone(),
            best: state.best.map(|b| b.summary),
            iterations: summaries,
            network_requests: self.network_requests,
        })
    }

    /// Restores loop state from a completed iteration.
    fn replay(&self, i: usize, state: &mut LoopState) -> Result<IterationSummary, RunError> {
        let dir = iter_dir(&self.run_dir, i);
        let summary: IterationSummary = read_json(&dir.join("summary.json"))?;
        let fb = dir.join("feedback.txt");
        if fb.exists() {
            state.feedback = Some(fs::read_to_string(&fb).map_err(io_err(&fb))?);
        }
        if let Some(b) = &summary.best {
            let changed = state.best.as_ref().is_none_or(|cur| cur.summary != *b);
            if changed {
                let path = iter_dir(&self.run_dir, b.iteration).join("policies").join(format!("{}.json", cand_name(b.index)));
                let text = fs::read_to_string(&path).map_err(io_err(&path))?;
                let policy = PolicyParams::from_json(&text)
                    .map_err(|e| RecordError::Malformed { path: path.clone(), message: e.to_string() })?;
                state.best = Some(BestState { summary: b.clone(), policy });
            }
        }
        Ok(summary)
    }

    fn teacher(&self, state: &LoopState) -> Option<TeacherPolicy> {
        match &state.best {
            Some(b) => Some(TeacherPolicy::Snapshot { policy: Box::new(b.policy.clone()) }),
            None => self.cfg.teacher.clone(),
        }
    }

    fn failed_summary(i: usize, prompt_hash: String, stats: GenerationStats, diagnostic: String, state: &LoopState) -> IterationSummary {
        IterationSummary {
            iteration: i,
            status: IterationStatus::Failed,
            diagnostic: Some(diagnostic),
            prompt_hash,
            stats,
            candidates: Vec::new(),
            selected: Vec::new(),
            pick: None,
            pick_criterion: None,
            best: state.best.as_ref().map(|b| b.summary.clone()),
        }
    }

    fn iteration(&mut self, i: usize, state: &mut LoopState) -> Result<IterationSummary, RunError> {
        let cfg = self.cfg.clone();
        let dir = iter_dir(&self.run_dir, i);
        let schema = training_schema();

        // Only the previous iteration's feedback is carried; it already ends
        // with the best-so-far section, so that section reappears every time.
        let feedback: Vec<String> = state.feedback.iter().cloned().collect();
        let reference = state.best.as_ref().map(|b| b.summary.program.clone()).or_else(|| self.reference.clone());
        let rules: Vec<String> = cfg.safety.iter().map(|r| r.describe()).collect();
        let bundle = match assemble_prompt(&PromptInputs {
            task: &cfg.prompt.task,
            env_desc: &cfg.prompt.env_description,
            schema: &schema,
            safety_rules: &rules,
            reference: reference.as_ref(),
            feedback: &feedback,
            token_budget: cfg.prompt.token_budget,
        }) {
            Ok(b) => b,
            Err(e) => return Ok(Self::failed_summary(i, String::new(), GenerationStats::default(), e.to_string(), state)),
        };
        let prompt_hash = bundle.hash();
        write_json(&dir.join("prompts/prompt.json"), &bundle)?;
        write_atomic(&dir.join("prompts/system.txt"), bundle.system_text.as_bytes())?;
        write_atomic(&dir.join("prompts/user.txt"), bundle.user_text().as_bytes())?;

        // generation, reused when an interrupted attempt already finished it
        let stats_path = dir.join("candidates/stats.json");
        let (sources, stats): (Vec<CandidateSource>, GenerationStats) = if stats_path.exists() {
            let sources = (0..cfg.candidates)
                .map(|k| read_json(&dir.join(format!("candidates/{}.json", cand_name(k)))))
                .collect::<Result<_, _>>()?;
            (sources, read_json(&stats_path)?)
        } else {
            let backend = (self.backends)(i)?;
            let result = generate_candidates(backend.as_ref(), &bundle, cfg.candidates, &schema, &cfg.backend.generation);
            self.network_requests += backend.network_requests();
            match result {
                Ok((sources, stats)) => {
                    for s in &sources {
                        write_json(&dir.join(format!("candidates/{}.json", cand_name(s.slot))), s)?;
                    }
                    write_json(&stats_path, &stats)?;
                    (sources, stats)
                }
                Err(e) => return Ok(Self::failed_summary(i, prompt_hash, GenerationStats::default(), e.to_string(), state)),
            }
        };

        // training, one record per candidate
        let teacher = self.teacher(state);
        let beta = if teacher.is_some() { cfg.beta } else { 0.0 };
        let train_env = Arc::new(cfg.envs.training.clone());
        let nominal = Arc::new(cfg.envs.training.nominal_only());
        let eval_seed = seed::derive(cfg.seed, &[seed::EVAL]);
        let limit = self.stop.filter(|s| s.iteration == i).and_then(|s| s.trained).unwrap_or(usize::MAX);
        let trained: Vec<Trained> = sources
            .par_iter()
            .enumerate()
            .take(limit.min(cfg.candidates))
            .map(|(k, src)| {
                self.train_one(i, k, src, teacher.as_ref(), beta, &train_env, &nominal, eval_seed)
            })
            .collect::<Result<_, _>>()?;
        if trained.len() < cfg.candidates {
            return Err(RunError::Interrupted);
        }

        // selection on the train criterion
        let scores: Vec<Option<f64>> = trained.iter().map(|t| t.record.train_criterion).collect();
        let selected = match select_best(&scores, cfg.criterion.c_bs) {
            Ok(s) => s,
            Err(e) => {
                let cands = self.summaries(&sources, &trained, &[], &BTreeMap::new());
                let text = compile_feedback(&cands, state.best.as_ref().map(|b| &b.summary));
                write_atomic(&dir.join("feedback.txt"), text.as_bytes())?;
                state.feedback = Some(text);
                let mut s = Self::failed_summary(i, prompt_hash, stats, e.to_string(), state);
                s.candidates = self.rows(&trained, &[], &BTreeMap::new());
                return Ok(s);
            }
        };

        // deployment twins, real-like only behind the safety gate
        let gz_env = Arc::new(cfg.envs.gazebo_like.clone());
        let real_env = Arc::new(cfg.envs.real_like.clone());
        let deployed: BTreeMap<usize, Deployment> = selected
            .par_iter()
            .map(|&k| {
                let program = sources[k].program.as_ref().expect("selected candidates have programs");
                let policy = trained[k].policy.as_ref().expect("selected candidates have policies");
                let d = deploy_gated(
                    policy,
                    program,
                    &gz_env,
                    &real_env,
                    cfg.limits,
                    &cfg.homomorphism,
                    &cfg.eval,
                    &cfg.safety,
                    eval_seed,
                );
                (k, d)
            })
            .collect();
        for (k, d) in &deployed {
            let c = cand_name(*k);
            write_json(&dir.join(format!("evals/{c}_gazebo.json")), &d.gazebo)?;
            write_json(&dir.join(format!("evals/{c}_safety.json")), &d.verdict)?;
            if let Some(r) = &d.real {
                write_json(&dir.join(format!("evals/{c}_real.json")), r)?;
            }
        }

        let finals: Vec<FinalCandidate> = deployed
            .iter()
            .filter(|(_, d)| !d.gazebo.is_failed() && !d.real.as_ref().is_some_and(EvalReport::is_failed))
            .map(|(&k, d)| FinalCandidate {
                index: k,
                gazebo: d.gazebo.criterion_score,
                real: d.real.as_ref().map(|r| r.criterion_score),
                safe: d.verdict.passed,
                train_criterion: trained[k].record.train_criterion.expect("selected"),
            })
            .collect();
        // safe candidates first; an unsafe pick only when nothing passed the gate
        let pick = select_final(&finals, true).or_else(|| select_final(&finals, false));

        if let Some(k) = pick {
            let fc = finals.iter().find(|f| f.index == k).expect("pick is a final candidate");
            let cand = BestSummary {
                index: k,
                iteration: i,
                program: sources[k].program.clone().expect("picked"),
                train_criterion: fc.train_criterion,
                gazebo: fc.gazebo,
                real: fc.real,
            };
            let replace = cfg.strict_alg1
                || state.best.as_ref().is_none_or(|b| cand.train_criterion > b.summary.train_criterion);
            if replace {
                state.best = Some(BestState { summary: cand, policy: trained[k].policy.clone().expect("picked") });
            }
        }

        let cands = self.summaries(&sources, &trained, &selected, &deployed);
        let text = compile_feedback(&cands, state.best.as_ref().map(|b| &b.summary));
        write_atomic(&dir.join("feedback.txt"), text.as_bytes())?;
        state.feedback = Some(text);

        Ok(IterationSummary {
            iteration: i,
            status: IterationStatus::Complete,
            diagnostic: None,
            prompt_hash,
            stats,
            candidates: self.rows(&trained, &selected, &deployed),
            selected,
            pick,
            pick_criterion: pick.and_then(|k| trained[k].record.train_criterion),
            best: state.best.as_ref().map(|b| b.summary.clone()),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn train_one(
        &self,
        i: usize,
        k: usize,
        src: &CandidateSource,
        teacher: Option<&TeacherPolicy>,
        beta: f64,
        train_env: &Arc<EnvConfig>,
        nominal: &Arc<EnvConfig>,
        eval_seed: u64,
    ) -> Result<Trained, RunError> {
        let dir = iter_dir(&self.run_dir, i);
        let c = cand_name(k);
        let record_path = dir.join(format!("evals/{c}_train.json"));
        let policy_path = dir.join(format!("policies/{c}.json"));
        if record_path.exists() {
            let record: TrainRecord = read_json(&record_path)?;
            let policy = match record.failure {
                None => {
                    let text = fs::read_to_string(&policy_path).map_err(io_err(&policy_path))?;
                    Some(PolicyParams::from_json(&text).map_err(|e| RecordError::Malformed {
                        path: policy_path.clone(),
                        message: e.to_string(),
                    })?)
                }
                Some(_) => None,
            };
            return Ok(Trained { record, policy });
        }
        let cfg = &self.cfg;
        let fail = |msg: String| Trained { record: TrainRecord { failure: Some(msg), train_criterion: None, report: None }, policy: None };
        let trained = match &src.program {
            None => fail(format!("generation: {}", src.diagnostic.clone().unwrap_or_default())),
            Some(program) => {
                let s = seed::derive(cfg.seed, &[seed::ITERATION, i as u64, seed::CANDIDATE, k as u64]);
                match train_candidate(train_env, cfg.limits, program, teacher, beta, s, cfg.ppo_iterations, &cfg.ppo) {
                    Err(e) => fail(format!("training: {e}")),
                    Ok(out) => {
                        let mut csv = Vec::new();
                        write_metrics(&out.metrics, &mut csv);
                        write_atomic(&dir.join(format!("policies/{c}_metrics.csv")), &csv)?;
                        write_atomic(&policy_path, out.params.to_json().as_bytes())?;
                        let mut report = homomorphic_eval(
                            &out.params,
                            program,
                            Stage::Train,
                            nominal,
                            cfg.limits,
                            &cfg.homomorphism,
                            &cfg.eval,
                            eval_seed,
                        );
                        match &report.failure {
                            Some(f) => Trained {
                                record: TrainRecord { failure: Some(format!("evaluation: {f}")), train_criterion: None, report: Some(report) },
                                policy: None,
                            },
                            None => {
                                let e = e_train(report.survival_time, cfg.limits.max_time, report.velocity_error);
                                let score = train_criterion(e, &report.obs_values(), &cfg.criterion)
                                    .ok()
                                    .filter(|s| s.is_finite());
                                report.criterion_score = score.unwrap_or(0.0);
                                Trained {
                                    record: TrainRecord {
                                        failure: score.is_none().then(|| "criterion is not finite".to_string()),
                                        train_criterion: score,
                                        report: Some(report),
                                    },
                                    policy: Some(out.params),
                                }
                            }
                        }
                    }
                }
            }
        };
        write_json(&record_path, &trained.record)?;
        Ok(trained)
    }

    fn summaries(
        &self,
        sources: &[CandidateSource],
        trained: &[Trained],
        selected: &[usize],
        deployed: &BTreeMap<usize, Deployment>,
    ) -> Vec<CandidateSummary> {
        sources
            .iter()
            .zip(trained)
            .enumerate()
            .map(|(k, (src, t))| {
                let d = deployed.get(&k);
                CandidateSummary {
                    index: k,
                    program: src.program.clone(),
                    failure: t.record.failure.clone(),
                    train_criterion: t.record.train_criterion,
                    selected: selected.contains(&k),
                    train: t.record.report.clone().filter(|_| t.record.failure.is_none()),
                    gazebo: d.map(|d| d.gazebo.clone()),
                    real: d.and_then(|d| d.real.clone()),
                    verdict: d.map(|d| d.verdict.clone()),
                }
            })
            .collect()
    }

    fn rows(
        &self,
        trained: &[Trained],
        selected: &[usize],
        deployed: &BTreeMap<usize, Deployment>,
    ) -> Vec<CandidateRow> {
        trained
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let d = deployed.get(&k);
                CandidateRow {
                    index: k,
                    valid: t.record.failure.is_none(),
                    failure: t.record.failure.clone(),
                    train_criterion: t.record.train_criterion,
                    selected: selected.contains(&k),
                    gazebo: d.filter(|d| !d.gazebo.is_failed()).map(|d| d.gazebo.criterion_score),
                    real: d.and_then(|d| d.real.as_ref()).filter(|r| !r.is_failed()).map(|r| r.criterion_score),
                    safe: d.map(|d| d.verdict.passed),
                }
            })
            .collect()
    }

    /// Best program, policy, and deployment reports under `best/`.
    fn write_final(&self, state: &LoopState) -> Result<BTreeMap<String, String>, RunError> {
        let dir = self.run_dir.join("best");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        if let Some(b) = &state.best {
            write_atomic(&dir.join("program.reward"), pretty_print(&b.summary.program).as_bytes())?;
            write_atomic(&dir.join("policy.json"), b.policy.to_json().as_bytes())?;
            write_json(&dir.join("summary.json"), &b.summary)?;
            let src = iter_dir(&self.run_dir, b.summary.iteration).join("evals");
            for stage in ["gazebo", "real"] {
                let f = src.join(format!("{}_{stage}.json", cand_name(b.summary.index)));
                if f.exists() {
                    let bytes = fs::read(&f).map_err(io_err(&f))?;
                    write_atomic(&dir.join(format!("{stage}.json")), &bytes)?;
                }
            }
        } else {
            write_atomic(&dir.join("NONE"), b"no candidate completed deployment evaluation\n")?;
        }
        Ok(hash_tree(&self.run_dir, &dir)?)
    }
}

fn write_metrics(m: &TrainMetrics, out: &mut Vec<u8>) {
    m.write_csv(out).expect("writing to memory");
}

/// One-call entry point: a fresh run or a resume of `run_dir`.
pub fn run_loop(cfg: FrameworkConfig, run_dir: &Path) -> Result<RunRecord, RunError> {
    let backends = config_backend(&cfg)?;
    Orchestrator::create(cfg.clone(), run_dir, backends.as_ref())?.run()
}

pub fn resume(run_dir: &Path) -> Result<RunRecord, RunError> {
    let manifest_cfg = {
        let p = run_dir.join(CONFIG_SNAPSHOT);
        let text = fs::read_to_string(&p).map_err(io_err(&p))?;
        FrameworkConfig::from_toml(&text)?
    };
    let backends = config_backend(&manifest_cfg)?;
    Orchestrator::open(run_dir, None, backends.as_ref())?.run()
}
