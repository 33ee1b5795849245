//! `sweep` runs one `run` per cell of a flag grid; `replay` re-executes a
//! manifest and compares artifact digests.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Parser;
use nodepred::eval::EvalReport;
use nodepred::io::{self, kind};
use nodepred::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::args::{Cli, ReplayArgs, SweepArgs};
use crate::commands::{absolute_path, Outcome};
use crate::manifest::{sha256_file, RunManifest, MANIFEST_FILE};

/// One `--vary` axis: a flag name and its values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Axis {
    pub flag: String,
    pub values: Vec<String>,
}

pub fn parse_axis(s: &str) -> Result<Axis> {
    let (flag, values) = s
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("--vary {s:?} is not FLAG=V1;V2")))?;
    let flag = flag.trim().trim_start_matches("--").to_string();
    if flag.is_empty() || flag == "out-dir" || flag == "threads" {
        return Err(Error::InvalidArgument(format!("--vary cannot sweep {flag:?}")));
    }
    let values: Vec<String> = values.split(';').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Error::InvalidArgument(format!("--vary {flag} has no values")));
    }
    Ok(Axis { flag, values })
}

/// Every combination of axis values, the last axis varying fastest.
pub fn cartesian(axes: &[Axis]) -> Vec<Vec<(String, String)>> {
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                axis.values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((axis.flag.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    cells
}

#[derive(Debug, Serialize)]
struct CellSummary {
    index: usize,
    dir: String,
    settings: Vec<(String, String)>,
    exit_code: i32,
    accuracy: Option<f64>,
    mrr: Option<f64>,
    hits_at_k: Option<std::collections::BTreeMap<usize, f64>>,
}

pub fn sweep_cmd(a: &SweepArgs, out: &Path, m: &mut RunManifest) -> Result<Outcome> {
    let axes = a.vary.iter().map(|s| parse_axis(s)).collect::<Result<Vec<_>>>()?;
    let cells = cartesian(&axes);
    let argvs: Vec<Vec<String>> = cells
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let mut argv = vec!["nodepred".to_string(), "run".to_string()];
            argv.extend(a.base.iter().cloned());
            for (flag, value) in cell {
                argv.push(format!("--{flag}"));
                argv.push(value.clone());
            }
            argv.push("--out-dir".into());
            argv.push(out.join(cell_dir(i)).to_string_lossy().into_owned());
            argv.push("--threads".into());
            argv.push("1".into());
            argv
        })
        .collect();
    for argv in &argvs {
        Cli::try_parse_from(argv).map_err(|e| Error::InvalidArgument(format!("sweep cell {:?}: {e}", &argv[2..])))?;
    }
    m.parameters = json!({"axes": &axes, "base": &a.base, "cells": cells.len()});
    m.seeds = json!({"cells": "recorded in each cell manifest"});

    let workers = (a.common.threads as usize).clamp(1, argvs.len().max(1));
    let next = AtomicUsize::new(0);
    let codes = Mutex::new(vec![0; argvs.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= argvs.len() {
                    break;
                }
                let code = crate::execute(argvs[i].clone());
                codes.lock().expect("no panics while holding the lock")[i] = code;
            });
        }
    });
    let codes = codes.into_inner().expect("workers finished");

    let mut summaries = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        let dir = out.join(cell_dir(i));
        let report_path = dir.join("eval_report.json");
        let report: Option<EvalReport> = if report_path.exists() {
            Some(io::read_json(&report_path, kind::EVAL_REPORT)?)
        } else {
            None
        };
        for (role, file) in [("checkpoint", "checkpoint.json"), ("train-report", "train_report.json"), ("eval-report", "eval_report.json")] {
            let p = dir.join(file);
            if p.exists() {
                m.artifact(&format!("{}/{role}", cell_dir(i)), &p)?;
            }
        }
        println!("sweep: {} {:?} -> exit {}", cell_dir(i), cell, codes[i]);
        summaries.push(CellSummary {
            index: i,
            dir: cell_dir(i),
            settings: cell.clone(),
            exit_code: codes[i],
            accuracy: report.as_ref().map(|r| r.accuracy),
            mrr: report.as_ref().map(|r| r.mrr),
            hits_at_k: report.map(|r| r.hits_at_k),
        });
    }
    let summary_path = out.join("sweep.json");
    io::write_json(&summary_path, kind::SWEEP, &summaries)?;
    m.artifact("sweep-summary", &summary_path)?;

    Ok(if codes.iter().any(|&c| c == 1 || c == 2) {
        Outcome::Failed
    } else if codes.contains(&3) {
        Outcome::Meaningless
    } else if codes.contains(&4) {
        Outcome::Inconclusive
    } else {
        Outcome::Success
    })
}

fn cell_dir(i: usize) -> String {
    format!("cell-{i:03}")
}

#[derive(Debug, Serialize)]
struct ArtifactComparison {
    role: String,
    recorded: String,
    replayed: Option<String>,
    identical: bool,
}

pub fn replay_cmd(a: &ReplayArgs, out: &Path) -> Result<Outcome> {
    let recorded = RunManifest::read(&a.manifest)?;
    if recorded.command == "replay" {
        return Err(Error::InvalidArgument("cannot replay a replay".into()));
    }
    if !a.ignore_digests {
        for input in &recorded.inputs {
            let path = recorded.cwd.join(&input.path);
            let digest = sha256_file(&path)?;
            if digest != input.sha256 {
                return Err(Error::ConfigMismatch(format!(
                    "input {} ({}) changed since the run: sha256 {digest}, recorded {}",
                    input.role,
                    path.display(),
                    input.sha256
                )));
            }
        }
    }
    let out = absolute_path(out);
    let argv = replay_argv(&recorded.args, &out.to_string_lossy(), a.common.threads);
    std::env::set_current_dir(&recorded.cwd)?;
    let code = crate::execute(argv);

    let replayed = RunManifest::read(&out.join(MANIFEST_FILE))?;
    let comparisons: Vec<ArtifactComparison> = recorded
        .artifacts
        .iter()
        .map(|old| {
            let new = replayed.artifact_by_role(&old.role).map(|r| r.sha256.clone());
            ArtifactComparison {
                role: old.role.clone(),
                identical: new.as_deref() == Some(old.sha256.as_str()),
                recorded: old.sha256.clone(),
                replayed: new,
            }
        })
        .collect();
    for c in &comparisons {
        println!("replay: {:<24} {}", c.role, if c.identical { "identical" } else { "DIFFERS" });
    }
    let identical = comparisons.iter().all(|c| c.identical) && code == recorded.exit_code;
    println!(
        "replay: exit code {code} (recorded {}); {}",
        recorded.exit_code,
        if identical { "reproduced" } else { "NOT reproduced" }
    );
    io::write_json(
        &out.join("replay.json"),
        kind::REPLAY,
        &json!({
            "manifest": absolute_path(&a.manifest),
            "recorded_exit_code": recorded.exit_code,
            "exit_code": code,
            "artifacts": comparisons,
            "reproduced": identical,
        }),
    )?;
    if !identical {
        return Ok(Outcome::Failed);
    }
    Ok(match code {
        0 => Outcome::Success,
        3 => Outcome::Meaningless,
        4 => Outcome::Inconclusive,
        _ => Outcome::Failed,
    })
}

/// The recorded arguments with `--out-dir` and `--threads` replaced. Only
/// tokens before a `--` separator are options of the command itself.
pub fn replay_argv(recorded: &[String], out_dir: &str, threads: u64) -> Vec<String> {
    let mut argv = vec!["nodepred".to_string()];
    let mut rest = recorded.iter();
    if let Some(cmd) = rest.next() {
        argv.push(cmd.clone());
    }
    argv.extend(["--out-dir".to_string(), out_dir.to_string(), "--threads".to_string(), threads.to_string()]);
    let mut tail = Vec::new();
    while let Some(tok) = rest.next() {
        if tok == "--" {
            tail.push(tok.clone());
            tail.extend(rest.by_ref().cloned());
            break;
        }
        if tok == "--out-dir" || tok == "--threads" {
            rest.next();
        } else if !(tok.starts_with("--out-dir=") || tok.starts_with("--threads=")) {
            argv.push(tok.clone());
        }
    }
    argv.extend(tail);
    argv
}
