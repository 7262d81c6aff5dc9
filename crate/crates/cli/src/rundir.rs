//! Run directories: one labeling snapshot per stage plus codeballs, diffs,
//! logs and censuses, all listed with their SHA-256 in `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use forge_core::ball::Census;
use forge_core::pipeline::{
    advance_stage, build_codeball, plan, restore, run_partial, PipelineConfig, RepairRecord, StageState,
};
use forge_core::snapshot::{
    codeball_from_json, load_json, load_labeling, load_labeling_in, save_json, save_labeling, save_text, sha256_file,
};
use forge_core::verify::{verify_run, VerifyOptions};
use forge_core::{parse_group, CayleyWindow, Certificate, ForgeError, ScaledSchedule};
use serde_json::{json, Map, Value};

use crate::{CliError, CliResult};

const RUN: &str = "run.json";
const MANIFEST: &str = "manifest.json";

pub fn labeling_name(n: usize) -> String {
    format!("stage-{n}.labeling.json")
}

fn codeball_name(n: usize) -> String {
    format!("stage-{n}.codeball.json")
}

struct RunFile {
    group: String,
    config: PipelineConfig,
    feedback: Vec<usize>,
    completed: usize,
}

impl RunFile {
    fn to_json(&self) -> Value {
        json!({"group": self.group, "config": self.config, "feedback": self.feedback, "completed": self.completed})
    }

    fn load(dir: &Path) -> CliResult<RunFile> {
        let path = dir.join(RUN);
        if !path.exists() {
            return Err(CliError::Usage(format!("{} is not a run directory", dir.display())));
        }
        let v = load_json(&path)?;
        let bad = || CliError::Usage(format!("malformed {}", path.display()));
        Ok(RunFile {
            group: v["group"].as_str().ok_or_else(bad)?.to_string(),
            config: serde_json::from_value(v["config"].clone()).map_err(|_| bad())?,
            feedback: serde_json::from_value(v["feedback"].clone()).map_err(|_| bad())?,
            completed: v["completed"].as_u64().ok_or_else(bad)? as usize,
        })
    }
}

fn words(win: &CayleyWindow, xs: &[u32]) -> Vec<Vec<i64>> {
    xs.iter().map(|&x| win.encode(x)).collect()
}

fn repairs(win: &CayleyWindow, rs: &[RepairRecord]) -> Value {
    Value::Array(
        rs.iter()
            .map(|r| json!({"level": r.level, "centers": words(win, &r.centers), "skipped": words(win, &r.skipped)}))
            .collect(),
    )
}

fn log_json(win: &CayleyWindow, st: &StageState) -> Value {
    let log = &st.log;
    json!({
        "stage": st.stage,
        "core": st.lab.core,
        "z": log.z.map(|z| win.encode(z)),
        "donors": words(win, &log.donors),
        "sites": words(win, &log.sites),
        "census_types": log.census_types,
        "round_one_repairs": repairs(win, &log.round_one_repairs),
        "round_two_centers": log.round_two_centers.len(),
        "round_two_skipped": words(win, &log.round_two_skipped),
        "round_two_repairs": repairs(win, &log.round_two_repairs),
        "dirty_radius": log.dirty_radius,
        "changed_points": st.changes.touched().len(),
        "certificates": [&log.chains, &log.codeball, &log.summ, &log.empty],
    })
}

/// Writes the artifacts of one stage; returns `(file, sha256)` pairs.
fn write_stage(
    dir: &Path,
    win: &CayleyWindow,
    sch: &ScaledSchedule,
    st: &StageState,
) -> CliResult<Vec<(String, String)>> {
    let n = st.stage;
    let mut out = Vec::new();
    let name = labeling_name(n);
    out.push((name.clone(), save_labeling(&dir.join(&name), win, sch, &st.lab)?));
    if n >= 2 {
        let name = codeball_name(n);
        out.push((name.clone(), save_json(&dir.join(&name), &st.codeball(n).to_json(win))?));
        let name = format!("stage-{n}.diff.json");
        out.push((name.clone(), save_json(&dir.join(&name), &st.changes.to_json(win))?));
        let name = format!("stage-{n}.log.json");
        out.push((name.clone(), save_json(&dir.join(&name), &log_json(win, st))?));
    }
    Ok(out)
}

fn write_census(dir: &Path, win: &CayleyWindow, n: usize, census: &Census) -> CliResult<(String, String)> {
    let name = format!("stage-{n}.census.csv");
    let sha = save_text(&dir.join(&name), &census.to_csv(win))?;
    Ok((name, sha))
}

fn load_manifest(dir: &Path) -> CliResult<Map<String, Value>> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(Map::new());
    }
    Ok(load_json(&path)?["files"].as_object().cloned().unwrap_or_default())
}

fn save_manifest(dir: &Path, files: Map<String, Value>) -> CliResult<()> {
    save_json(&dir.join(MANIFEST), &json!({"files": files}))?;
    Ok(())
}

/// Whether every manifest entry exists with the recorded hash.
fn intact(dir: &Path) -> CliResult<bool> {
    let files = load_manifest(dir)?;
    for (name, sha) in &files {
        let path = dir.join(name);
        if !path.exists() || Some(sha256_file(&path)?.as_str()) != sha.as_str() {
            return Ok(false);
        }
    }
    Ok(!files.is_empty())
}

pub fn build(dir: &Path, group: &str, config: PipelineConfig, stages: usize, force: bool) -> CliResult<()> {
    let gs = parse_group(group)?;
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    if dir.join(RUN).exists() && !force {
        let old = RunFile::load(dir)?;
        if old.group != group || old.config != config {
            return Err(CliError::Usage(format!(
                "{} holds a different run; pass --force to replace it",
                dir.display()
            )));
        }
        if old.completed >= stages && intact(dir)? {
            println!("{}: up to date at stage {}", dir.display(), old.completed);
            return Ok(());
        }
    }
    let run = run_partial(&gs, &config, stages)?;
    let mut files = Map::new();
    for (k, st) in run.states.iter().enumerate() {
        for (name, sha) in write_stage(dir, &run.win, &run.sch, st)? {
            files.insert(name, sha.into());
        }
        if let Some(c) = &st.census {
            let (name, sha) = write_census(dir, &run.win, k + 1, c)?;
            files.insert(name, sha.into());
        }
        report(st);
    }
    let rf = RunFile { group: group.to_string(), config, feedback: run.feedback.clone(), completed: stages };
    save_json(&dir.join(RUN), &rf.to_json())?;
    save_manifest(dir, files)?;
    Ok(())
}

fn report(st: &StageState) {
    let log = &st.log;
    let ok = [&log.chains, &log.codeball, &log.summ, &log.empty].iter().all(|c| c.pass);
    println!(
        "stage {}: core {}, {} changed points, certificates {}",
        st.stage,
        st.lab.core,
        st.changes.touched().len(),
        if ok { "pass" } else { "FAIL" }
    );
}

/// Window, schedule and stage states `1..=k` of a run directory.
fn load_states(dir: &Path, rf: &RunFile) -> CliResult<(CayleyWindow, ScaledSchedule, Vec<StageState>)> {
    let gs = parse_group(&rf.group)?;
    let (win, sch) = plan(&gs, &rf.config, &rf.feedback)?;
    let mut labs = Vec::new();
    let mut balls = Vec::new();
    for n in 1..=rf.completed {
        labs.push(load_labeling_in(&dir.join(labeling_name(n)), &win, &sch)?);
        if n >= 2 {
            balls.push(codeball_from_json(&win, &load_json(&dir.join(codeball_name(n)))?)?);
        }
    }
    let states = restore(&win, &sch, labs, balls)?;
    Ok((win, sch, states))
}

pub fn evolve(dir: &Path, stages: usize) -> CliResult<()> {
    let mut rf = RunFile::load(dir)?;
    if stages <= rf.completed {
        println!("{}: up to date at stage {}", dir.display(), rf.completed);
        return Ok(());
    }
    if stages > rf.config.stages {
        return Err(CliError::Usage(format!(
            "the run is sized for {} stages; rebuild with --target {stages}",
            rf.config.stages
        )));
    }
    let (win, sch, mut states) = load_states(dir, &rf)?;
    let mut files = load_manifest(dir)?;
    while states.len() < stages {
        let cur = states.last().unwrap();
        let round = match build_codeball(&win, &sch, cur) {
            Ok(r) => r,
            Err(e @ ForgeError::CapacityExceeded { .. }) => {
                return Err(CliError::Usage(format!("{e}; the schedule needs more room, rebuild the run")))
            }
            Err(e) => return Err(e.into()),
        };
        let (next, census) = advance_stage(&win, &sch, cur, round)?;
        let (name, sha) = write_census(dir, &win, cur.stage, &census)?;
        files.insert(name, sha.into());
        for (name, sha) in write_stage(dir, &win, &sch, &next)? {
            files.insert(name, sha.into());
        }
        report(&next);
        states.push(next);
        rf.completed = states.len();
        save_json(&dir.join(RUN), &rf.to_json())?;
        save_manifest(dir, files.clone())?;
    }
    Ok(())
}

fn sibling_codeball(path: &Path) -> CliResult<PathBuf> {
    let s = path.to_string_lossy();
    match s.strip_suffix(".labeling.json") {
        Some(stem) => Ok(PathBuf::from(format!("{stem}.codeball.json"))),
        None => Err(CliError::Usage(format!("{s}: expected a `*.labeling.json` snapshot"))),
    }
}

pub fn verify(paths: &[PathBuf], opts: &VerifyOptions, out: Option<PathBuf>) -> CliResult<()> {
    for p in paths {
        if !p.exists() {
            return Err(CliError::Usage(format!("{}: no such file", p.display())));
        }
    }
    let (win, sch, states, default_out) = if paths.len() == 1 && paths[0].is_dir() {
        let rf = RunFile::load(&paths[0])?;
        let (win, sch, states) = load_states(&paths[0], &rf)?;
        (win, sch, states, Some(paths[0].join("certificates.json")))
    } else {
        let first = load_labeling(&paths[0])?;
        let (win, sch) = (first.win, first.sch);
        let mut labs = vec![first.lab];
        let mut balls = Vec::new();
        for p in &paths[1..] {
            labs.push(load_labeling_in(p, &win, &sch)?);
            let cb = sibling_codeball(p)?;
            if !cb.exists() {
                return Err(CliError::Usage(format!("{}: no such file", cb.display())));
            }
            balls.push(codeball_from_json(&win, &load_json(&cb)?)?);
        }
        let states = restore(&win, &sch, labs, balls)?;
        (win, sch, states, None)
    };
    let bundle = verify_run(&win, &sch, &states, opts)?;
    for c in &bundle.children {
        print_line(c);
    }
    if let Some(path) = out.or(default_out) {
        let v = serde_json::to_value(&bundle).map_err(|e| CliError::Usage(e.to_string()))?;
        save_json(&path, &v)?;
    }
    if bundle.pass {
        Ok(())
    } else {
        Err(CliError::Failed(bundle.failures().len()))
    }
}

fn print_line(c: &Certificate) {
    if let Some(why) = c.measured.get("skipped") {
        println!("SKIP {}: {}", c.name, why.as_str().unwrap_or_default());
    } else if c.pass {
        println!("PASS {}", c.name);
    } else {
        let first = c.failures().into_iter().next().unwrap_or(c);
        let w = first.witnesses.first();
        println!(
            "FAIL {}: {} {:?}",
            c.name,
            w.map_or("", |w| w.what.as_str()),
            w.map(|w| &w.elements).cloned().unwrap_or_default()
        );
    }
}
