//! Stage advance: codeballs, repairs and the stabilized limit.
//!
//! Round one builds the `(n+1)`-codeball: supersize patches plant a donor
//! for every `𝒜^n` type in the annulus around `z_{n+1}`, a repair cascade
//! restores the lower codeballs, and the ball around `z_{n+1}` becomes
//! `B_{n+1}`. Round two patches that ball around every `q_{n+1}` marker and
//! repairs again.

use crate::ball::{enumerate_ball_types, extract_with, partition, Census, LabeledBall};
use crate::certificate::Certificate;
use crate::error::{ForgeError, Result};
use crate::group::GeneratorSystem;
use crate::labeling::{initial_clean_labeling, CInit, Labeling, LabelingConfig, Layer, Q};
use crate::patch::{simultaneous_patch_in_place, Diff, PatchKind, PatchRequest, PatchSource};
use crate::schedule::{required_window, scaled_schedule, select_annulus_sites, ScaledConfig, ScaledSchedule, SiteRule};
use crate::window::{Bfs, CayleyWindow, NONE};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Where a census type of the previous stage sits inside a codeball.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirEntry {
    pub type_hash: u64,
    /// Window index of the inner center in the labeling the codeball came from.
    pub site: u32,
    /// Position of the inner center in the codeball's canonical order.
    pub local: u32,
}

#[derive(Clone, Debug)]
pub struct Codeball {
    pub stage: usize,
    pub z: u32,
    pub ball: LabeledBall,
    pub directory: Vec<DirEntry>,
}

impl Codeball {
    pub fn to_json(&self, win: &CayleyWindow) -> Value {
        json!({
            "stage": self.stage,
            "z": win.encode(self.z),
            "pattern": self.ball.to_json(win),
            "directory": self.directory.iter().map(|d| json!({
                "type": format!("{:016x}", d.type_hash),
                "site": win.encode(d.site),
                "local": d.local,
            })).collect::<Vec<_>>(),
        })
    }
}

/// One repair pass at level `i`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairRecord {
    pub level: usize,
    pub centers: Vec<u32>,
    pub skipped: Vec<u32>,
}

/// Everything a stage advance did, for certificates and reports.
#[derive(Clone, Debug, Default)]
pub struct StageLog {
    pub z: Option<u32>,
    pub donors: Vec<u32>,
    pub sites: Vec<u32>,
    pub census_types: usize,
    pub round_one_repairs: Vec<RepairRecord>,
    pub round_two_centers: Vec<u32>,
    pub round_two_skipped: Vec<u32>,
    pub round_two_repairs: Vec<RepairRecord>,
    pub chains: Certificate,
    pub codeball: Certificate,
    pub summ: Certificate,
    pub empty: Certificate,
    /// Largest dirty radius used by any patch of the advance.
    pub dirty_radius: u64,
}

pub struct StageState {
    pub stage: usize,
    pub lab: Labeling,
    /// `B_2..B_n`.
    pub codeballs: Vec<Codeball>,
    /// Regular `i`-patch donors `(Θ^i, z_i)` for `i = 2..n`.
    pub donors: Vec<PatchSource>,
    /// `𝒜^n`, filled by round one.
    pub census: Option<Census>,
    /// Changes against the previous stage.
    pub changes: Diff,
    pub log: StageLog,
}

impl StageState {
    pub fn codeball(&self, i: usize) -> &Codeball {
        &self.codeballs[i - 2]
    }
}

/// Output of round one.
pub struct RoundOne {
    pub codeball: Codeball,
    /// `Θ̂`: the labeling the codeball was cut from.
    pub donor: Labeling,
    pub census: Census,
    pub log: StageLog,
}

pub fn first_stage(win: &CayleyWindow, sch: &ScaledSchedule, cfg: &LabelingConfig) -> Result<StageState> {
    let lab = initial_clean_labeling(win, sch, cfg)?;
    Ok(StageState {
        stage: 1,
        lab,
        codeballs: Vec::new(),
        donors: Vec::new(),
        census: None,
        changes: Diff::default(),
        log: StageLog::default(),
    })
}

/// `Bad_i`: `q_i` markers whose `s_i`-ball lies in the core and differs from `B_i`.
pub fn bad_set(win: &CayleyWindow, sch: &ScaledSchedule, lab: &Labeling, i: usize, b: &Codeball) -> Vec<u32> {
    let s = sch.s(i);
    let bound = lab.core.saturating_sub(s);
    let n = partition(win, bound);
    let markers: Vec<u32> = (0..n as u32).filter(|&x| lab.label(i, x) == Q).collect();
    markers
        .par_chunks(64)
        .map_init(
            || Bfs::new(win.len()),
            |bfs, chunk| chunk.iter().copied().filter(|&x| !b.ball.matches_at(win, lab, x, bfs)).collect::<Vec<_>>(),
        )
        .flatten()
        .collect()
}

/// `i`-repair in place: regular `i`-patches at every `Bad_i` point whose
/// dirty ball fits the core. Points that do not fit shrink the core below them.
pub fn repair(
    win: &CayleyWindow,
    sch: &ScaledSchedule,
    lab: &mut Labeling,
    i: usize,
    b: &Codeball,
    donor: &PatchSource,
) -> Result<(RepairRecord, Diff)> {
    let bad = bad_set(win, sch, lab, i, b);
    let dirty = PatchKind::Regular.radii(sch, i).dirty;
    let mut rec = RepairRecord { level: i, ..Default::default() };
    let mut shrink = lab.core;
    for &y in &bad {
        if win.dist_e(y) + dirty <= lab.core {
            rec.centers.push(y);
        } else {
            rec.skipped.push(y);
            shrink = shrink.min(win.dist_e(y).saturating_sub(1));
        }
    }
    let reqs: Vec<PatchRequest> = rec.centers.iter().map(|&y| PatchRequest { y, source: donor }).collect();
    let diff = simultaneous_patch_in_place(win, sch, lab, &reqs)?;
    lab.core = shrink;
    Ok((rec, diff))
}

/// Repairs at `i = top, …, 2`, then asserts every `Bad_i` empty.
pub fn repair_cascade(
    win: &CayleyWindow,
    sch: &ScaledSchedule,
    lab: &mut Labeling,
    top: usize,
    codeballs: &[Codeball],
    donors: &[PatchSource],
) -> Result<Vec<RepairRecord>> {
    let mut out = Vec::new();
    for i in (2..=top).rev() {
        let (rec, _) = repair(win, sch, lab, i, &codeballs[i - 2], &donors[i - 2])?;
        out.push(rec);
    }
    for i in 2..=top {
        let bad = bad_set(win, sch, lab, i, &codeballs[i - 2]);
        if let Some(&y) = bad.first() {
            return Err(ForgeError::CascadeDiverged(format!(
                "Bad_{i} still holds {} points after the sweep, first at {:?}",
                bad.len(),
                win.encode(y)
            )));
        }
    }
    Ok(out)
}

/// Chains of repair patches: connected unions of touching dirty balls at
/// levels below `i`. Passes when every chain's diameter stays below
/// `r_{i-1}/2`; the `r_{i-1}/10` comparison is reported.
pub fn chain_certificate(win: &CayleyWindow, sch: &ScaledSchedule, records: &[RepairRecord]) -> Certificate {
    let mut cert = Certificate::new("repair_chains");
    let top = records.iter().map(|r| r.level).max().unwrap_or(1);
    for i in 3..=top + 1 {
        let mut c = Certificate::new("chain_diameter").with_stage(i);
        let mut patches: Vec<(u32, u64)> = records
            .iter()
            .filter(|r| r.level < i)
            .flat_map(|r| {
                let d = PatchKind::Regular.radii(sch, r.level).dirty;
                r.centers.iter().map(move |&y| (y, d))
            })
            .collect();
        patches.sort_unstable();
        let n = patches.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut x = x;
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let dist = |a: u32, b: u32| win.distance_idx(a, b, win.level).unwrap_or(u64::MAX);
        for a in 0..n {
            for b in a + 1..n {
                let (ya, da) = patches[a];
                let (yb, db) = patches[b];
                if win.dist_e(ya).abs_diff(win.dist_e(yb)) > da + db + 1 {
                    continue;
                }
                if dist(ya, yb) <= da + db + 1 {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra] = rb;
                }
            }
        }
        let mut worst = 0u64;
        let mut witness = None;
        for a in 0..n {
            for b in a..n {
                if find(&mut parent, a) == find(&mut parent, b) {
                    let d = dist(patches[a].0, patches[b].0).saturating_add(patches[a].1 + patches[b].1);
                    if d > worst {
                        worst = d;
                        witness = Some((patches[a].0, patches[b].0));
                    }
                }
            }
        }
        let bound = sch.r(i - 1) / 2;
        c.measure("diameter", worst);
        c.measure("bound", bound);
        c.measure("literal_bound", sch.r(i - 1) / 10);
        c.measure("within_literal_bound", worst < sch.r(i - 1) / 10);
        c.bound(format!("diameter < r_{}/2", i - 1));
        if worst >= bound {
            let (a, b) = witness.unwrap();
            c.fail(format!("chain of diameter {worst} ≥ {bound}"), vec![win.encode(a), win.encode(b)]);
        }
        cert.push(c);
    }
    cert
}

/// Every `q_j` marker of the core carries `B_j`, for `j = 2..=top`.
pub fn check_summ(
    win: &CayleyWindow,
    sch: &ScaledSchedule,
    lab: &Labeling,
    codeballs: &[Codeball],
    top: usize,
) -> Certificate {
    let mut cert = Certificate::new("codeball_everywhere").with_core(lab.core);
    cert.stage = Some(lab.stage);
    for j in 2..=top {
        let mut c = Certificate::new("summ").with_stage(j);
        let bad = bad_set(win, sch, lab, j, &codeballs[j - 2]);
        let checked =
            (0..partition(win, lab.core.saturating_sub(sch.s(j))) as u32).filter(|&x| lab.label(j, x) == Q).count();
        c.measure("markers_checked", checked);
        c.measure("mismatches", bad.len());
        if let Some(&y) = bad.first() {
            c.fail(format!("q_{j} marker whose ball differs from B_{j}"), vec![win.encode(y)]);
        }
        cert.push(c);
    }
    cert
}

/// Round one at stage `n`: the `(n+1)`-codeball.
pub fn build_codeball(win: &CayleyWindow, sch: &ScaledSchedule, state: &StageState) -> Result<RoundOne> {
    let n = state.stage;
    let lab = &state.lab;
    if lab.depth() <= n {
        return Err(ForgeError::Config(format!("labeling has no layer {}", n + 1)));
    }
    let next = Layer::of(sch, n + 1);
    let lay = Layer::of(sch, n);
    let reach = PatchKind::Regular.radii(sch, n + 1).kappa_inner;
    let z = (0..win.len() as u32)
        .take_while(|&x| win.dist_e(x) + reach <= lab.core)
        .find(|&x| lab.label(n + 1, x) == Q)
        .ok_or(ForgeError::NoMarkerInCore(n + 1))?;

    // census 𝒜^n
    let census_core = lab.core.saturating_sub(6 * lay.r);
    let census = enumerate_ball_types(win, lab, n, lay.level, lay.s, census_core)?;

    // donors by set cover over the types
    let rho = 2 * lay.r - lay.s - 1;
    let donor_fit = 4 * lay.r;
    let mut covered = vec![false; census.len()];
    let mut donors: Vec<u32> = Vec::new();
    let mut bfs = Bfs::new(win.len());
    for t in census.by_first_occurrence() {
        if covered[t] {
            continue;
        }
        let mut found = None;
        for &x in &census.types[t].sites {
            found = bfs
                .run(win, &[x], rho, lay.level)
                .iter()
                .copied()
                .filter(|&p| lab.label(n, p) == Q && win.dist_e(p) + donor_fit <= lab.core)
                .min();
            if found.is_some() {
                break;
            }
        }
        let p = found.ok_or_else(|| ForgeError::SearchExhausted(format!("no q_{n} marker hosts type {t:#x}")))?;
        for &w in bfs.run(win, &[p], rho, lay.level) {
            if let Some(&ty) = census.type_of.get(w as usize) {
                if ty != NONE {
                    covered[ty as usize] = true;
                }
            }
        }
        donors.push(p);
    }

    // annulus sites
    let rule = SiteRule { s: next.s, spacing: sch.spacing() * lay.r, level: next.level };
    let q_n = lab.q_set(n);
    let q_next = lab.q_set(n + 1);
    let sites = select_annulus_sites(win, z, &q_n, donors.len(), &rule, &q_next)?;

    // supersize patches
    let mut hat = lab.clone();
    let sources: Vec<PatchSource> = donors
        .iter()
        .map(|&p| PatchSource::extract(win, sch, lab, p, PatchKind::Supersize, n))
        .collect::<Result<_>>()?;
    let reqs: Vec<PatchRequest> = sites.iter().zip(&sources).map(|(&y, s)| PatchRequest { y, source: s }).collect();
    simultaneous_patch_in_place(win, sch, &mut hat, &reqs)?;
    let repairs = repair_cascade(win, sch, &mut hat, n, &state.codeballs, &state.donors)?;
    if win.dist_e(z) + next.s > hat.core {
        return Err(ForgeError::CoreExhausted(format!("repairs shrank the core below the {}-codeball", n + 1)));
    }
    let ball = extract_with(win, &hat, z, next.s, next.level, n + 1, &mut bfs);

    // directory: transported occurrences, confirmed exactly
    let mut local = rustc_hash::FxHashMap::default();
    for (i, &x) in bfs.run(win, &[z], next.s, next.level).iter().enumerate() {
        local.insert(x, i as u32);
    }
    let mut directory: Vec<Option<DirEntry>> = vec![None; census.len()];
    for (k, &p) in donors.iter().enumerate() {
        let w = sites[k];
        for &x in bfs.run(win, &[p], rho, lay.level) {
            let Some(&ty) = census.type_of.get(x as usize) else { continue };
            if ty == NONE || directory[ty as usize].is_some() {
                continue;
            }
            let site = win.apply_offset(win.offset(x, p), w);
            if let Some(&l) = local.get(&site) {
                if u64::from(ball.dist[l as usize]) + lay.s < next.s {
                    directory[ty as usize] =
                        Some(DirEntry { type_hash: census.types[ty as usize].hash, site, local: l });
                }
            }
        }
    }
    let mut cert = Certificate::new("codeball_contains_types").with_stage(n + 1);
    let mut missing = 0usize;
    for (t, entry) in directory.iter().enumerate() {
        let rep = census.representative(win, lab, t);
        match entry {
            Some(e) if ball.contains_at_local(e.local as usize, &rep) => {}
            _ => {
                missing += 1;
                if cert.pass {
                    cert.fail(
                        format!("type {t} of 𝒜^{n} not found in B_{}", n + 1),
                        vec![win.encode(census.types[t].first)],
                    );
                }
            }
        }
    }
    cert.measure("types", census.len());
    cert.measure("missing", missing);
    let directory: Vec<DirEntry> = directory.into_iter().flatten().collect();

    let log = StageLog {
        z: Some(z),
        donors,
        sites,
        census_types: census.len(),
        round_one_repairs: repairs,
        codeball: cert,
        dirty_radius: PatchKind::Supersize.radii(sch, n).dirty,
        ..Default::default()
    };
    Ok(RoundOne { codeball: Codeball { stage: n + 1, z, ball, directory }, donor: hat, census, log })
}

/// Round two: `Θ^{n+1}` from `Θ^n` and the round-one output.
///
/// The round's census is handed back so callers can file it with `state`.
pub fn advance_stage(
    win: &CayleyWindow,
    sch: &ScaledSchedule,
    state: &StageState,
    round: RoundOne,
) -> Result<(StageState, Census)> {
    let n = state.stage;
    let RoundOne { codeball, donor, census, mut log } = round;
    let z = codeball.z;
    let source = PatchSource::extract(win, sch, &donor, z, PatchKind::Regular, n + 1)?;
    drop(donor);
    let mut lab = state.lab.clone();
    let dirty = PatchKind::Regular.radii(sch, n + 1).dirty;
    let mut core = lab.core;
    let mut centers = Vec::new();
    let mut skipped = Vec::new();
    for y in lab.q_set(n + 1) {
        if win.dist_e(y) + dirty <= lab.core {
            centers.push(y);
        } else if win.dist_e(y) <= lab.core {
            skipped.push(y);
            core = core.min(win.dist_e(y).saturating_sub(1));
        }
    }
    let reqs: Vec<PatchRequest> = centers.iter().map(|&y| PatchRequest { y, source: &source }).collect();
    simultaneous_patch_in_place(win, sch, &mut lab, &reqs)?;
    lab.core = core;

    let repairs = repair_cascade(win, sch, &mut lab, n, &state.codeballs, &state.donors)?;
    lab.stage = n + 1;

    let mut codeballs = state.codeballs.clone();
    codeballs.push(codeball);
    let mut donors = state.donors.clone();
    donors.push(PatchSource::extract(win, sch, &lab, z, PatchKind::Regular, n + 1)?);

    let mut all = log.round_one_repairs.clone();
    all.extend(repairs.iter().cloned());
    log.chains = chain_certificate(win, sch, &all);
    log.summ = check_summ(win, sch, &lab, &codeballs, n + 1);
    let mut empty = Certificate::new("bad_sets_empty").with_core(lab.core);
    for i in 2..=n {
        if let Some(&y) = bad_set(win, sch, &lab, i, &codeballs[i - 2]).first() {
            empty.fail(format!("Bad_{i} nonempty"), vec![win.encode(y)]);
        }
    }
    log.empty = empty;
    log.round_two_centers = centers;
    log.round_two_skipped = skipped;
    log.round_two_repairs = repairs;
    log.dirty_radius = log.dirty_radius.max(dirty);
    let changes = Diff::between(&state.lab, &lab);
    Ok((StageState { stage: n + 1, lab, codeballs, donors, census: None, changes, log }, census))
}

/// Configuration of a whole run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stages: usize,
    pub scaled: ScaledConfig,
    pub c_depth: u32,
    pub c_init: CInit,
    /// Window radius; `None` sizes it from the schedule.
    pub radius: Option<u64>,
    pub max_retries: usize,
}

impl PipelineConfig {
    pub fn new(stages: usize) -> Self {
        PipelineConfig {
            stages,
            scaled: ScaledConfig::default(),
            c_depth: stages as u32,
            c_init: CInit::Zero,
            radius: None,
            max_retries: 4,
        }
    }
}

pub struct Run {
    pub win: CayleyWindow,
    pub sch: ScaledSchedule,
    pub states: Vec<StageState>,
    pub feedback: Vec<usize>,
    pub retries: usize,
}

/// Runs `cfg.stages` stages, growing the schedule when an annulus cannot
/// host the donors a census asks for.
pub fn run(gs: &GeneratorSystem, cfg: &PipelineConfig) -> Result<Run> {
    run_partial(gs, cfg, cfg.stages)
}

/// As [`run`], with schedule and window sized for `cfg.stages` but only the
/// first `upto` stages computed.
pub fn run_partial(gs: &GeneratorSystem, cfg: &PipelineConfig, upto: usize) -> Result<Run> {
    if upto > cfg.stages {
        return Err(ForgeError::Config(format!("{upto} stages requested, run planned for {}", cfg.stages)));
    }
    if cfg.stages == 0 {
        return Err(ForgeError::Config("at least one stage".into()));
    }
    let mut feedback: Vec<usize> = Vec::new();
    let mut retries = 0;
    'attempt: loop {
        let (win, sch) = plan(gs, cfg, &feedback)?;
        let lcfg =
            LabelingConfig { depth: cfg.stages, c_depth: cfg.c_depth.max(cfg.stages as u32), c_init: cfg.c_init };
        let mut states = vec![first_stage(&win, &sch, &lcfg)?];
        for _ in 1..upto {
            let cur = states.last().unwrap();
            let round = match build_codeball(&win, &sch, cur) {
                Ok(r) => r,
                Err(ForgeError::CapacityExceeded { wanted, .. })
                    if retries < cfg.max_retries && cfg.scaled.empirical_types =>
                {
                    let n = cur.stage;
                    if feedback.len() < n {
                        feedback.resize(n, cfg.scaled.default_demand);
                    }
                    feedback[n - 1] = wanted;
                    retries += 1;
                    continue 'attempt;
                }
                Err(e) => return Err(e),
            };
            let (next, census) = advance_stage(&win, &sch, cur, round)?;
            states.last_mut().unwrap().census = Some(census);
            states.push(next);
        }
        return Ok(Run { win, sch, states, feedback, retries });
    }
}

/// Window and schedule of a planned run, before any stage is computed.
pub fn plan(gs: &GeneratorSystem, cfg: &PipelineConfig, feedback: &[usize]) -> Result<(CayleyWindow, ScaledSchedule)> {
    let sch = scaled_schedule(gs, cfg.stages, &cfg.scaled, feedback)?;
    let radius = match cfg.radius {
        Some(r) => r,
        None if cfg.stages == 1 => 10 * sch.s(1) + 2 * sch.r(1) + 2,
        None => required_window(&sch, cfg.stages),
    };
    let win = CayleyWindow::new(gs, radius, sch.f(cfg.stages))?;
    Ok((win, sch))
}

/// Rebuilds stage states from stored labelings `Θ^1, …, Θ^k` and codeballs
/// `B_2, …, B_k`. Logs and censuses are not restored.
pub fn restore(
    win: &CayleyWindow,
    sch: &ScaledSchedule,
    labs: Vec<Labeling>,
    codeballs: Vec<Codeball>,
) -> Result<Vec<StageState>> {
    if labs.is_empty() || codeballs.len() + 1 != labs.len() {
        return Err(ForgeError::Snapshot(format!(
            "{} labelings need {} codeballs",
            labs.len(),
            labs.len().saturating_sub(1)
        )));
    }
    let mut donors = Vec::new();
    for (k, b) in codeballs.iter().enumerate() {
        donors.push(PatchSource::extract(win, sch, &labs[k + 1], b.z, PatchKind::Regular, k + 2)?);
    }
    let mut states: Vec<StageState> = Vec::new();
    for (k, lab) in labs.into_iter().enumerate() {
        if lab.stage != k + 1 {
            return Err(ForgeError::Snapshot(format!("labeling {} claims stage {}", k + 1, lab.stage)));
        }
        let changes = match states.last() {
            Some(prev) => Diff::between(&prev.lab, &lab),
            None => Diff::default(),
        };
        states.push(StageState {
            stage: k + 1,
            lab,
            codeballs: codeballs[..k].to_vec(),
            donors: donors[..k].to_vec(),
            census: None,
            changes,
            log: StageLog::default(),
        });
    }
    Ok(states)
}

/// `Θ^∞` on the stabilized core: the last stage, with its core cut to the
/// radius no later stage may touch.
pub fn stabilized_limit(sch: &ScaledSchedule, states: &[StageState]) -> Result<Labeling> {
    if states.len() < 2 {
        return Err(ForgeError::NothingStabilized("need at least two stages".into()));
    }
    let last = states.last().unwrap();
    let n = last.stage;
    // s_{n+1} > r_n, so later changes stay beyond 5 r_n.
    let exclusion = if n < sch.len() { 5 * sch.s(n + 1) } else { 5 * (sch.r(n) + 1) };
    let core = last.lab.core.min(exclusion - 1);
    if core == 0 {
        return Err(ForgeError::NothingStabilized("stabilized core is empty".into()));
    }
    let mut lab = last.lab.clone();
    lab.core = core;
    Ok(lab)
}
