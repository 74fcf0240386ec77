//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run a subset with `ACCEPTANCE_ONLY=1,5,10 cargo test -p rewardloop --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rewardloop::dsl::*;
use rewardloop::env::{default_homomorphism, deployment_schema, training_schema, EnvConfig, TaskLimits};
use rewardloop::eval::*;
use rewardloop::llm::*;
use rewardloop::orchestrator::*;
use rewardloop::policy::*;

mod common;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

const ENGINEERED_REWARD: &str = "survival: 50 * survival_dt
track_lin_vel: exp(-norm2(base_lin_vel - cmd_lin_vel) / 0.25)
track_ang_vel: 0.5 * exp(-norm2(base_ang_vel - cmd_ang_vel) / 0.25)
torque: -0.01 * square(applied_torque)";

fn reduced_ppo() -> PpoConfig {
    PpoConfig { num_envs: 8, steps_per_env: 128, ..Default::default() }
}

// 1 -------------------------------------------------------------------------

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn ln_normal(x: f64, m: f64, s: f64) -> f64 {
    -0.5 * ((x - m) / s).powi(2) - (s * (2.0 * std::f64::consts::PI).sqrt()).ln()
}

fn c1_kl_closed_form() -> Verdict {
    let t = Instant::now();
    let sr = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mu: f64 = rng.random_range(-2.0..2.0);
        let sigma: f64 = rng.random_range(0.1..2.0);
        let a: f64 = rng.random_range(-2.0..2.0);
        let (lo, hi) = (a - 12.0 * sr, a + 12.0 * sr);
        let p = |x: f64| ln_normal(x, a, sr).exp();
        let kl = simpson(|x| p(x) * (ln_normal(x, a, sr) - ln_normal(x, mu, sigma)), lo, hi, 20_000);
        let neg_entropy = simpson(|x| p(x) * ln_normal(x, a, sr), lo, hi, 20_000);
        let numeric = kl - neg_entropy;
        let closed = teacher_distance(&[mu], &[sigma], &[a], TeacherMode::FullKl);
        worst = worst.max((numeric - closed).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(worst <= 1e-2 && secs < 5.0, format!("max |KL + H_ref - closed form| = {worst:.2e} (tol 1e-2), 100 fixtures, {secs:.2}s (limit 5s)"))
}

// 2 -------------------------------------------------------------------------

fn c2_gradients() -> Verdict {
    let t = Instant::now();
    let cases = gradcheck_suite(100, 10, &[0.0, 5.0]);
    let worst = cases.iter().map(|c| c.result.max_rel_err).fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    verdict(
        cases.len() == 20 && worst < 1e-4 && secs < 60.0,
        format!("10 batches x beta {{0, 5}}: max relative error {worst:.2e} (tol 1e-4), {secs:.1}s (limit 60s)"),
    )
}

// 3 -------------------------------------------------------------------------

/// Textbook clipped surrogate plus value loss.
fn vanilla_ppo(p: &PolicyParams, b: &RolloutBatch, eps: f64, c_v: f64) -> f64 {
    let sigma = p.sigma()[0];
    let n = b.len();
    let (mut surr, mut val) = (0.0, 0.0);
    for i in 0..n {
        let mu = p.mean_action(b.obs(i)).unwrap()[0];
        let a = b.action(i)[0];
        let logp = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln() - (a - mu) * (a - mu) / (2.0 * sigma * sigma);
        let r = (logp - b.old_log_probs[i]).exp();
        let adv = b.advantages[i];
        surr += (r * adv).min(r.clamp(1.0 - eps, 1.0 + eps) * adv);
        let e = p.value_of(b.obs(i)).unwrap() - b.returns[i];
        val += e * e;
    }
    -(surr / n as f64) + c_v * (val / n as f64)
}

fn c3_beta_zero_reduction() -> Verdict {
    let mut mismatches = Vec::new();
    for seed in 0..20 {
        let (p, batch) = random_case(seed, 64, &[16, 16]);
        let cfg = LossConfig { beta: 0.0, ..Default::default() };
        let with_teacher = ppo_loss(&p, &batch, &cfg);
        let plain = ppo_loss(&p, &RolloutBatch { teacher_actions: None, ..batch.clone() }, &cfg);
        let oracle = vanilla_ppo(&p, &batch, cfg.epsilon, cfg.value_coef);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if with_teacher.loss.to_bits() != oracle.to_bits()
            || with_teacher.loss.to_bits() != plain.loss.to_bits()
            || bits(&with_teacher.grad) != bits(&plain.grad)
            || with_teacher.teacher != 0.0
        {
            mismatches.push(format!("seed {seed}: {} vs oracle {}", with_teacher.loss, oracle));
        }
    }
    verdict(mismatches.is_empty(), format!("20 fixtures, bitwise loss and gradient equality; mismatches: {mismatches:?}"))
}

// 4 -------------------------------------------------------------------------

/// First iteration reaching 90% of the final mean (mean of the last 10%).
fn t90(curve: &[f64]) -> usize {
    let k = (curve.len() / 10).max(1);
    let fin = curve[curve.len() - k..].iter().sum::<f64>() / k as f64;
    curve.iter().position(|&v| v >= 0.9 * fin).unwrap_or(curve.len())
}

/// Mean over iterations of the across-seed sample variance.
fn curve_variance(curves: &[Vec<f64>]) -> f64 {
    let n = curves[0].len();
    let m = curves.len() as f64;
    (0..n)
        .map(|i| {
            let mean = curves.iter().map(|c| c[i]).sum::<f64>() / m;
            curves.iter().map(|c| (c[i] - mean).powi(2)).sum::<f64>() / (m - 1.0)
        })
        .sum::<f64>()
        / n as f64
}

fn c4_teacher_acceleration() -> Verdict {
    let t = Instant::now();
    let program = parse_program(ENGINEERED_REWARD).unwrap();
    let env = Arc::new(EnvConfig::training());
    let teacher = TeacherPolicy::default_pd();
    let ppo = reduced_ppo();
    let mut arms: Vec<Vec<Vec<f64>>> = vec![Vec::new(), Vec::new()];
    for (arm, beta) in [5.0, 0.0].into_iter().enumerate() {
        for seed in 0..8 {
            let out = train_candidate(&env, TaskLimits::default(), &program, Some(&teacher), beta, 1000 + seed, 300, &ppo)
                .expect("training succeeds");
            arms[arm].push(out.metrics.reward_curve());
        }
    }
    let t_teacher: Vec<usize> = arms[0].iter().map(|c| t90(c)).collect();
    let t_plain: Vec<usize> = arms[1].iter().map(|c| t90(c)).collect();
    let wins = t_teacher.iter().zip(&t_plain).filter(|(a, b)| a < b).count();
    let (v_teacher, v_plain) = (curve_variance(&arms[0]), curve_variance(&arms[1]));
    let fin = |arm: &[Vec<f64>]| arm.iter().map(|c| c[270..].iter().sum::<f64>() / 30.0).sum::<f64>() / 8.0;
    let (f_teacher, f_plain) = (fin(&arms[0]), fin(&arms[1]));
    let secs = t.elapsed().as_secs_f64();
    verdict(
        wins >= 6 && v_teacher < v_plain && secs < 1800.0,
        format!(
            "t90 beta=5 {t_teacher:?} vs beta=0 {t_plain:?}: {wins}/8 paired wins (need 6); inter-seed variance {v_teacher:.0} vs {v_plain:.0} (normalized by final mean squared: {:.4} vs {:.4}); {secs:.0}s (limit 1800s)",
            v_teacher / (f_teacher * f_teacher),
            v_plain / (f_plain * f_plain)
        ),
    )
}

// 5 -------------------------------------------------------------------------

fn c5_selection() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = Vec::new();
    for case in 0..1000 {
        let k = rng.random_range(1..=24usize);
        let pct = rng.random_range(1..=100usize);
        let c_bs = pct as f64 / 100.0;
        // few distinct values so ties are common
        let scores: Vec<Option<f64>> = (0..k)
            .map(|_| if rng.random_bool(0.15) { None } else { Some(rng.random_range(0..6) as f64 * 0.5) })
            .collect();
        let mut live: Vec<(usize, f64)> = scores.iter().enumerate().filter_map(|(i, s)| s.map(|v| (i, v))).collect();
        // oracle: integer ceiling, then full sort by score desc and index asc
        let n = (pct * k).div_ceil(100).max(1).min(live.len());
        live.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let expected: Vec<usize> = live[..n].iter().map(|x| x.0).collect();
        match select_best(&scores, c_bs) {
            Ok(got) if !expected.is_empty() && got == expected => {}
            Err(SelectionError::AllFailed(_)) if expected.is_empty() => {}
            other => bad.push(format!("case {case}: {other:?} vs {expected:?}")),
        }

        let finals: Vec<FinalCandidate> = (0..k)
            .map(|i| FinalCandidate {
                index: i,
                gazebo: rng.random_range(0..4) as f64,
                real: rng.random_bool(0.7).then(|| rng.random_range(0..4) as f64),
                safe: rng.random_bool(0.7),
                train_criterion: rng.random_range(0..3) as f64,
            })
            .collect();
        for strict in [false, true] {
            let mut best: Option<(f64, f64, usize)> = None;
            for f in finals.iter().filter(|f| !strict || f.safe) {
                let s = f.gazebo + if f.safe { f.real.unwrap_or(0.0) } else { 0.0 };
                let key = (s, f.train_criterion, f.index);
                let better = match best {
                    None => true,
                    Some((bs, bt, bi)) => s > bs || (s == bs && (f.train_criterion > bt || (f.train_criterion == bt && f.index < bi))),
                };
                if better {
                    best = Some(key);
                }
            }
            let want = best.map(|b| b.2);
            let got = select_final(&finals, strict);
            if got != want {
                bad.push(format!("case {case} strict={strict}: final {got:?} vs {want:?}"));
            }
        }
    }
    let n16 = n_best(0.15, 16);
    verdict(
        bad.is_empty() && n16 == 3,
        format!("1000 fixtures with ties, select_best and select_final vs brute force: {} mismatches {:?}; n_bs(0.15, 16) = {n16}", bad.len(), bad.first()),
    )
}

// 6 -------------------------------------------------------------------------

fn c6_twin_collapse() -> Verdict {
    let program = parse_program(ENGINEERED_REWARD).unwrap();
    let limits = TaskLimits::default();
    let grid = EvalGrid::default();
    let map = default_homomorphism();
    let iso = map.isomorphism(&training_schema(), &deployment_schema());
    let train_env = Arc::new(EnvConfig::training().nominal_only());
    let trained = train_candidate(
        &Arc::new(EnvConfig::training()),
        limits,
        &program,
        Some(&TeacherPolicy::default_pd()),
        5.0,
        6,
        40,
        &reduced_ppo(),
    )
    .expect("training succeeds")
    .params;
    let pd = TeacherPolicy::default_pd();
    let policies: [(&str, &(dyn rewardloop::env::Controller + Sync)); 2] = [("pd", &pd), ("ppo", &trained)];
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    let mut gap_ok = true;
    for (name, pol) in policies {
        let tr = homomorphic_eval(pol, &program, Stage::Train, &train_env, limits, &map, &grid, 9);
        let collapsed = homomorphic_eval(
            pol,
            &program,
            Stage::GazeboLike,
            &Arc::new(EnvConfig::gazebo_like().without_gap()),
            limits,
            &map,
            &grid,
            9,
        );
        for (k, (a, b)) in tr.term_means.iter().zip(&collapsed.term_means).enumerate() {
            let rel = (a - b).abs() / a.abs();
            worst = worst.max(rel);
            if rel > 0.05 {
                notes.push(format!("{name}/{}: {a} vs {b}", tr.term_names[k]));
            }
        }
        let gz = homomorphic_eval(pol, &program, Stage::GazeboLike, &Arc::new(EnvConfig::gazebo_like()), limits, &map, &grid, 9);
        let real = homomorphic_eval(pol, &program, Stage::RealLike, &Arc::new(EnvConfig::real_like()), limits, &map, &grid, 9);
        let rows = stage_rows(Some(&tr), Some(&gz), Some(&real));
        // a term saturated at the same value on every step (survival of a policy
        // that never falls) cannot move; only the trained policy must show all rows
        let differs = |r: &StageRow| r.train != r.gazebo && r.train != r.real && r.gazebo.is_some() && r.real.is_some();
        let saturated: Vec<&str> = rows.iter().filter(|r| !differs(r)).map(|r| r.term.as_str()).collect();
        let nonzero = if name == "ppo" {
            saturated.is_empty()
        } else {
            saturated.iter().all(|t| *t == "survival") && tr.falls == 0 && gz.falls == 0 && real.falls == 0
        };
        if !saturated.is_empty() {
            notes.push(format!("{name}: unchanged rows {saturated:?} (falls {} / {} / {})", tr.falls, gz.falls, real.falls));
        }
        let grid_text = render_stage_grid(&rows);
        let shaped = grid_text.lines().count() == program.terms.len()
            && grid_text.lines().all(|l| l.split(" | ").count() == 4 && l.contains("| gym ") && l.contains("| gazebo ") && l.contains("| real "));
        gap_ok &= nonzero && shaped && tr.failure.is_none() && gz.failure.is_none() && real.failure.is_none();
        if name == "ppo" {
            notes.push(format!("grid with gap:\n{}", grid_text.trim_end()));
        }
    }
    verdict(
        iso.is_bijection() && worst <= 0.05 && gap_ok,
        format!("identity map, gap zeroed: worst per-term relative difference {worst:.4} (tol 0.05); gap deltas nonzero and grid shaped: {gap_ok}; {}", notes.join("; ")),
    )
}

// 7 -------------------------------------------------------------------------

fn c7_safety() -> Verdict {
    let plain = parse_program(ENGINEERED_REWARD).unwrap();
    // capped so that falling never pays more than staying up
    let safe = parse_program(&format!("{ENGINEERED_REWARD}\nbalance: -100 * min(square(pitch), 0.02)")).unwrap();
    let env = Arc::new(EnvConfig::training());
    let limits = TaskLimits::default();
    let grid = EvalGrid::default();
    let map = default_homomorphism();
    let gz = Arc::new(EnvConfig::gazebo_like());
    let real = Arc::new(EnvConfig::real_like());
    let teacher = TeacherPolicy::default_pd();
    let mut pitch = [Vec::new(), Vec::new()];
    let mut policies = Vec::new();
    for (arm, prog) in [&plain, &safe].into_iter().enumerate() {
        for seed in 0..8 {
            // a light teacher weight: at 5.0 the teacher pins the transient and no reward term moves it
            let p = train_candidate(&env, limits, prog, Some(&teacher), 0.05, 700 + seed, 200, &reduced_ppo())
                .expect("training succeeds")
                .params;
            let r = homomorphic_eval(&p, prog, Stage::GazeboLike, &gz, limits, &map, &grid, 77);
            pitch[arm].push(r.max_abs_pitch);
            policies.push((p, prog.clone()));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m_plain, m_safe) = (mean(&pitch[0]), mean(&pitch[1]));
    let wins = pitch[0].iter().zip(&pitch[1]).filter(|(a, b)| b < a).count();

    // the gate: a limit between the observed extremes so both outcomes occur
    let mut all: Vec<f64> = pitch.concat();
    all.sort_by(f64::total_cmp);
    let limit = all[all.len() / 2];
    let rules = vec![SafetyRule { name: "pitch".into(), metric: SafetyMetric::MaxAbsPitch, limit }];
    let mut gate_errors = 0;
    let (mut blocked, mut passed) = (0, 0);
    for (p, prog) in &policies {
        let d = deploy_gated(p, prog, &gz, &real, limits, &map, &grid, &rules, 77);
        let violated = d.gazebo.max_abs_pitch > limit;
        if violated {
            blocked += 1;
        } else {
            passed += 1;
        }
        if d.real.is_some() == violated || d.verdict.passed == violated {
            gate_errors += 1;
        }
    }
    verdict(
        m_safe < m_plain && gate_errors == 0 && blocked > 0 && passed > 0,
        format!(
            "gazebo max |pitch| without balance {:?} (mean {m_plain:.4}) vs with {:?} (mean {m_safe:.4}); {wins}/8 paired seeds smaller; gate at {limit:.4}: {passed} ran real_like, {blocked} blocked, {gate_errors} disagreements",
            pitch[0].iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            pitch[1].iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    )
}

// 8 -------------------------------------------------------------------------

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn loop_config() -> FrameworkConfig {
    FrameworkConfig { iterations: 3, candidates: 8, ppo_iterations: 30, ppo: reduced_ppo(), seed: 2024, ..Default::default() }
}

fn c8_closed_loop() -> Verdict {
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = loop_config();
    let a = tmp.path().join("a");
    let rec = run_loop(cfg.clone(), &a).expect("run completes");

    let b = tmp.path().join("b");
    let factory = config_backend(&cfg).unwrap();
    let cut = Orchestrator::create(cfg.clone(), &b, factory.as_ref())
        .unwrap()
        .stop_at(StopPoint { iteration: 1, trained: Some(3) })
        .run();
    let interrupted = matches!(cut, Err(RunError::Interrupted));
    let resumed = resume(&b).expect("resume completes");

    let best: Vec<f64> = rec.best_criteria().into_iter().flatten().collect();
    let monotone = best.len() == 3 && best.windows(2).all(|w| w[1] >= w[0]);
    let fa = files(&a);
    let fb = files(&b);
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    let identical = fa.len() == fb.len() && differing.is_empty() && resumed.iterations == rec.iterations;
    let complete = rec.iterations.iter().all(|s| s.status == IterationStatus::Complete);
    let secs = t.elapsed().as_secs_f64();
    verdict(
        interrupted && monotone && identical && complete && rec.network_requests == 0 && secs < 1200.0,
        format!(
            "N=3 K=8 mock: best-so-far criterion {best:?} (non-decreasing: {monotone}); interrupted mid-iteration-1 then resumed: {} files, {} differ; network requests {}; {secs:.0}s for both runs (limit 1200s)",
            fa.len(),
            differing.len(),
            rec.network_requests
        ),
    )
}

// 9 -------------------------------------------------------------------------

fn c9_generation_robustness() -> Verdict {
    let schema = training_schema();
    let backend = MockBackend::with_faults(9, 0.5, 0.9);
    let mut total = GenerationStats::default();
    let mut invariant_ok = true;
    for i in 0..20 {
        let bundle = assemble_prompt(&PromptInputs {
            task: &format!("Balance the walker (variant {i})."),
            env_desc: "Wheeled inverted pendulum.",
            schema: &schema,
            safety_rules: &[],
            reference: None,
            feedback: &[],
            token_budget: 8000,
        })
        .unwrap();
        let (_, s) = generate_candidates(&backend, &bundle, 16, &schema, &GenerationConfig::default()).unwrap();
        invariant_ok &= s.validated_ok <= s.parsed_ok && s.parsed_ok <= s.requested;
        total.merge(&s);
    }
    let malformed = total.requested - total.first_try_ok;
    let repair = total.repaired as f64 / malformed.max(1) as f64;

    // malformed candidates flowing through the whole loop
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = FrameworkConfig {
        iterations: 2,
        candidates: 6,
        ppo_iterations: 5,
        ppo: PpoConfig { num_envs: 4, steps_per_env: 64, minibatch: 128, ..Default::default() },
        eval: EvalGrid { seeds: vec![0], commands: vec![0.5] },
        ..Default::default()
    };
    cfg.backend.mock = MockConfig { fault_rate: 0.5, repair_rate: 0.9 };
    cfg.backend.generation.max_retries = 0;
    let partly = run_loop(cfg.clone(), &tmp.path().join("partly"));
    cfg.backend.mock.fault_rate = 1.0;
    let none = run_loop(cfg, &tmp.path().join("none"));
    let invalid_seen = partly.as_ref().is_ok_and(|r| r.iterations.iter().any(|s| s.candidates.iter().any(|c| !c.valid)));
    let all_failed = none.as_ref().is_ok_and(|r| r.iterations.iter().all(|s| s.status == IterationStatus::Failed));
    verdict(
        invariant_ok && repair >= 0.8 && invalid_seen && all_failed,
        format!(
            "{} requested, {} parsed, {} valid, {} malformed first attempts, {} repaired ({repair:.3}, need 0.8); stats ordering holds: {invariant_ok}; loop with malformed candidates completed: {}; all-malformed loop completed with failed iterations: {all_failed}",
            total.requested,
            total.parsed_ok,
            total.validated_ok,
            malformed,
            total.repaired,
            partly.is_ok()
        ),
    )
}

// 10 ------------------------------------------------------------------------

fn c10_dsl() -> Verdict {
    let mut notes = Vec::new();
    let mut runner = TestRunner::new(PtConfig { cases: 10_000, ..PtConfig::default() });
    let rt = runner.run(&common::any_program(common::any_expr()), |p| {
        let text = pretty_print(&p);
        let back = parse_program(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(back, p);
        Ok(())
    });
    notes.push(format!("round trip x10^4: {}", if rt.is_ok() { "ok".into() } else { format!("{rt:?}") }));

    let mut runner = TestRunner::new(PtConfig { cases: 1000, ..PtConfig::default() });
    let strat = (
        common::any_program(common::tame_expr()),
        -10.0f64..10.0,
        proptest::collection::vec(-1.0f64..1.0, 8),
    );
    let lin = runner.run(&strat, |(p, c, values)| {
        let f = common::frame(&training_schema(), &values);
        let base = eval_step(&p, &f).unwrap();
        let mut scaled = p.clone();
        scaled.terms.iter_mut().for_each(|t| t.scale *= c);
        let out = eval_step(&scaled, &f).unwrap();
        prop_assert!(common::close(out.total, c * base.total));
        Ok(())
    });
    notes.push(format!("scale linearity x1000: {}", if lin.is_ok() { "ok".into() } else { format!("{lin:?}") }));

    let mid: Vec<String> = (0..8).map(|i| format!("m{i}")).collect();
    let targets: Vec<String> = deployment_schema().signals().iter().map(|s| s.name.clone()).collect();
    let strat = (
        common::any_program(common::tame_expr()),
        common::affine_map(common::SIGNALS.iter().map(|s| s.to_string()).collect(), mid.clone()),
        common::affine_map(mid, targets),
        proptest::collection::vec(-1.0f64..1.0, 8),
    );
    let mut runner = TestRunner::new(PtConfig { cases: 1000, ..PtConfig::default() });
    let comp = runner.run(&strat, |(p, f, g, values)| {
        let (a, b, c) = (training_schema(), common::mid_schema(), deployment_schema());
        let (two, _) = apply_homomorphism(&apply_homomorphism(&p, &f, &a, &b).unwrap().0, &g, &b, &c).unwrap();
        let (one, _) = apply_homomorphism(&p, &f.then(&g), &a, &c).unwrap();
        let fr = common::frame(&c, &values);
        let (x, y) = (eval_step(&two, &fr).unwrap(), eval_step(&one, &fr).unwrap());
        prop_assert!(x.values.iter().zip(&y.values).all(|(u, v)| common::close(*u, *v)));
        prop_assert!(common::close(x.total, y.total));
        Ok(())
    });
    notes.push(format!("composition x1000 at 1e-12: {}", if comp.is_ok() { "ok".into() } else { format!("{comp:?}") }));
    verdict(rt.is_ok() && lin.is_ok() && comp.is_ok(), notes.join("; "))
}

type Criterion = (usize, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 10] = [
    (1, "KL closed form", c1_kl_closed_form),
    (2, "gradient correctness", c2_gradients),
    (3, "beta = 0 reduction", c3_beta_zero_reduction),
    (4, "teacher acceleration", c4_teacher_acceleration),
    (5, "selection correctness", c5_selection),
    (6, "homomorphic twin collapse", c6_twin_collapse),
    (7, "safety gate", c7_safety),
    (8, "closed loop with mock backend", c8_closed_loop),
    (9, "generation robustness", c9_generation_robustness),
    (10, "DSL integrity", c10_dsl),
];

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    // a `cargo test <filter>` that names another target should not run this suite
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let mut failed = 0;
    let mut ran = 0;
    let start = Instant::now();
    for (n, name, f) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2} [{name}]: {} ({:.1}s) - {}",
            if v.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            v.detail
        );
    }
    let total = Duration::from_secs_f64(start.elapsed().as_secs_f64());
    println!("acceptance: {}/{ran} criteria passed in {:.0}s", ran - failed, total.as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
