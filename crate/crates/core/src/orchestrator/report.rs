use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::eval::{fmt2, render_stage_grid, stage_grid_csv, stage_rows, EvalReport};

use super::config::FrameworkConfig;
use super::record::*;

/// Plain-text summary plus CSV files, keyed by file name.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub text: String,
    pub files: Vec<(String, String)>,
}

fn opt_csv(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn load_report(dir: &Path, name: &str) -> Option<EvalReport> {
    let p = dir.join(name);
    p.exists().then(|| read_json(&p).ok()).flatten()
}

#[derive(serde::Deserialize)]
struct TrainRecordView {
    report: Option<EvalReport>,
}

/// Reads a run directory, complete or not, and renders its summary.
pub fn report(run_dir: &Path) -> Result<ReportBundle, RecordError> {
    let manifest = Manifest::load(run_dir)?;
    let cfg_path = run_dir.join(CONFIG_SNAPSHOT);
    let cfg_text = fs::read_to_string(&cfg_path).map_err(io_err(&cfg_path))?;
    let cfg = FrameworkConfig::from_toml(&cfg_text)
        .map_err(|e| RecordError::Malformed { path: cfg_path.clone(), message: e.to_string() })?;

    let mut text = String::new();
    let mut iter_csv = String::from(
        "iteration,status,prompt_hash,requested,parsed_ok,validated_ok,first_try_rate,with_retry_rate,selected,pick,pick_criterion,best_criterion,best_iteration,diagnostic\n",
    );
    let mut cand_csv =
        String::from("iteration,candidate,valid,train_criterion,selected,gazebo,real,safe,failure\n");
    let mut curves = String::from("iteration,candidate,ppo_iteration,reward_mean,episode_return\n");
    let mut files = Vec::new();
    let mut totals = crate::llm::GenerationStats::default();

    let complete = manifest.final_files.is_some();
    writeln!(
        text,
        "Run {}: {}/{} iterations recorded{}",
        run_dir.display(),
        manifest.iterations.len(),
        cfg.iterations,
        if complete { "" } else { " (incomplete)" }
    )
    .expect("string write");
    writeln!(text, "\niter | status | valid | selected | pick | pick criterion | best criterion").expect("string write");

    for i in 0..cfg.iterations {
        let dir = iter_dir(run_dir, i);
        let Some(_) = manifest.iterations.iter().find(|e| e.iteration == i) else {
            writeln!(text, "{i:>4} | incomplete").expect("string write");
            writeln!(iter_csv, "{i},incomplete,,,,,,,,,,,,").expect("string write");
            continue;
        };
        let s: IterationSummary = read_json(&dir.join("summary.json"))?;
        totals.merge(&s.stats);
        let status = match s.status {
            IterationStatus::Complete => "complete",
            IterationStatus::Failed => "failed",
        };
        let best = s.best.as_ref().map(|b| b.train_criterion);
        let sel = s.selected.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(
            text,
            "{i:>4} | {status} | {}/{} | {} | {} | {} | {}{}",
            s.stats.validated_ok,
            s.stats.requested,
            if sel.is_empty() { "-".into() } else { sel.clone() },
            s.pick.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
            fmt2(s.pick_criterion),
            fmt2(best),
            s.diagnostic.as_ref().map(|d| format!(" | {}", d.lines().next().unwrap_or(""))).unwrap_or_default()
        )
        .expect("string write");
        writeln!(
            iter_csv,
            "{i},{status},{},{},{},{},{},{},{},{},{},{},{},\"{}\"",
            s.prompt_hash,
            s.stats.requested,
            s.stats.parsed_ok,
            s.stats.validated_ok,
            s.stats.first_try_rate(),
            s.stats.with_retry_rate(),
            sel,
            s.pick.map(|k| k.to_string()).unwrap_or_default(),
            opt_csv(s.pick_criterion),
            opt_csv(best),
            s.best.as_ref().map(|b| b.iteration.to_string()).unwrap_or_default(),
            s.diagnostic.clone().unwrap_or_default().replace('"', "\"\"")
        )
        .expect("string write");
        for c in &s.candidates {
            writeln!(
                cand_csv,
                "{i},{},{},{},{},{},{},{},\"{}\"",
                c.index,
                c.valid,
                opt_csv(c.train_criterion),
                c.selected,
                opt_csv(c.gazebo),
                opt_csv(c.real),
                c.safe.map(|b| b.to_string()).unwrap_or_default(),
                c.failure.clone().unwrap_or_default().replace('"', "\"\"")
            )
            .expect("string write");
            let m = dir.join(format!("policies/{}_metrics.csv", cand_name(c.index)));
            if let Ok(body) = fs::read_to_string(&m) {
                let mut lines = body.lines();
                let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
                let col = |n: &str| header.iter().position(|h| *h == n);
                let (Some(it), Some(rm), Some(er)) = (col("iteration"), col("reward_mean"), col("episode_return")) else {
                    continue;
                };
                for l in lines {
                    let f: Vec<&str> = l.split(',').collect();
                    writeln!(curves, "{i},{},{},{},{}", c.index, f[it], f[rm], f[er]).expect("string write");
                }
            }
        }
        if let Some(k) = s.pick {
            let name = cand_name(k);
            let evals = dir.join("evals");
            let train = read_json::<TrainRecordView>(&evals.join(format!("{name}_train.json"))).ok().and_then(|r| r.report);
            let gz = load_report(&evals, &format!("{name}_gazebo.json"));
            let real = load_report(&evals, &format!("{name}_real.json"));
            let rows = stage_rows(train.as_ref(), gz.as_ref(), real.as_ref());
            files.push((format!("stage_grid_iter_{i:03}.csv"), stage_grid_csv(&rows)));
            files.push((format!("stage_grid_iter_{i:03}.txt"), render_stage_grid(&rows)));
        }
    }

    writeln!(
        text,
        "\nGeneration: {} requested, {} parsed, {} valid; first-try success {:.2}, with retries {:.2}",
        totals.requested,
        totals.parsed_ok,
        totals.validated_ok,
        totals.first_try_rate(),
        totals.with_retry_rate()
    )
    .expect("string write");
    let best = manifest
        .iterations
        .last()
        .and_then(|e| read_json::<IterationSummary>(&iter_dir(run_dir, e.iteration).join("summary.json")).ok())
        .and_then(|s| s.best);
    match &best {
        Some(b) => {
            writeln!(
                text,
                "\nBest: iteration {} candidate {} | train criterion {} | gazebo {} | real {}",
                b.iteration,
                b.index,
                fmt2(Some(b.train_criterion)),
                fmt2(Some(b.gazebo)),
                fmt2(b.real)
            )
            .expect("string write");
            if let Some((_, grid)) = files.iter().find(|(n, _)| *n == format!("stage_grid_iter_{:03}.txt", b.iteration)) {
                text.push_str(grid);
            }
        }
        None => text.push_str("\nBest: none\n"),
    }
    if !complete {
        text.push_str("\nRun is incomplete.\n");
    }

    files.insert(0, ("iterations.csv".into(), iter_csv));
    files.insert(1, ("candidates.csv".into(), cand_csv));
    files.insert(2, ("curves.csv".into(), curves));
    Ok(ReportBundle { text, files })
}

/// Writes the bundle under `run_dir/report/` and returns it.
pub fn write_report(run_dir: &Path) -> Result<ReportBundle, RecordError> {
    let bundle = report(run_dir)?;
    let out = run_dir.join("report");
    for (name, body) in &bundle.files {
        write_atomic(&out.join(name), body.as_bytes())?;
    }
    write_atomic(&out.join("summary.txt"), bundle.text.as_bytes())?;
    Ok(bundle)
}
