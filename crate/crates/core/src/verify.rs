//! Certificates for minimality, freeness, stability and the density bound.

use num_bigint::BigUint;
use num_traits::One;
use rustc_hash::FxHashMap;
use serde_json::json;

use crate::ball::{extract_ball, partition, syndetic_from, wl_hashes, LabeledBall};
use crate::error::{ForgeError, Result};
use crate::group::{GeneratorSystem, Order};
use crate::labeling::Labeling;
use crate::pipeline::{stabilized_limit, StageState};
use crate::schedule::{exact_schedule, scaled_ball, ScaledSchedule};
use crate::sparse::find_close_pair;
use crate::window::{Bfs, CayleyWindow, NONE};
use crate::Certificate;

/// Every type in `reps` (or, if `None`, every `(j, t)` type centered within
/// `test_core`) occurs within `rho` of each element of the test core, with
/// distances measured in `G_level`.
pub fn verify_types_syndetic(
    win: &CayleyWindow,
    lab: &Labeling,
    j: usize,
    t: u64,
    rho: u64,
    level: usize,
    test_core: u64,
    reps: Option<Vec<LabeledBall>>,
) -> Result<Certificate> {
    let ball_level = reps.as_ref().and_then(|r| r.first()).map_or(level, |b| b.level);
    let reach = test_core.saturating_add(rho);
    let have = lab.core.min(win.radius);
    if reach.saturating_add(t) > have {
        return Err(ForgeError::CoreTooSmall { needed: reach.saturating_add(t), have });
    }
    let h = wl_hashes(win, lab, j, ball_level, t, reach);
    let reps = match reps {
        Some(r) => r,
        None => {
            let mut firsts: FxHashMap<u64, u32> = FxHashMap::default();
            for x in 0..partition(win, test_core) as u32 {
                firsts.entry(h[x as usize]).or_insert(x);
            }
            let mut v: Vec<u32> = firsts.into_values().collect();
            v.sort_unstable();
            v.into_iter().map(|x| extract_ball(win, lab, x, t, ball_level, j)).collect::<Result<_>>()?
        }
    };
    let mut by_hash: FxHashMap<u64, Vec<usize>> = FxHashMap::default();
    for (i, b) in reps.iter().enumerate() {
        by_hash.entry(b.type_hash()).or_default().push(i);
    }
    let mut occ: Vec<Vec<u32>> = vec![Vec::new(); reps.len()];
    let mut bfs = Bfs::new(win.len());
    for (x, hx) in h.iter().enumerate() {
        if let Some(cands) = by_hash.get(hx) {
            for &i in cands {
                if reps[i].matches_at(win, lab, x as u32, &mut bfs) {
                    occ[i].push(x as u32);
                }
            }
        }
    }
    let mut cert = Certificate::new(format!("syndetic_j{j}_t{t}")).with_core(test_core);
    cert.measure("rho", rho);
    cert.measure("level", level);
    cert.measure("types", reps.len());
    for (i, o) in occ.iter().enumerate() {
        let child = syndetic_from(win, o, rho, level, test_core, "type");
        if !child.pass {
            let mut w = child.witnesses[0].elements.clone();
            w.push(win.encode(reps[i].center));
            cert.fail(format!("type {i} has no occurrence within {rho}"), w);
        }
    }
    Ok(cert)
}

/// Minimality certificate for a run: the first-stage census types are
/// `(2r_2, 2)`-syndetic in `Θ^2` and in the limit, and every `(j, t)` type
/// with `j ≤ max_j`, `t ≤ max_t` in the stabilized core is syndetic at the
/// radius `3 r_{n+1}`, `n` the least stage with `n ≥ j` and `s_n > t`.
pub fn verify_minimality(
    win: &CayleyWindow,
    sch: &ScaledSchedule,
    states: &[StageState],
    max_j: usize,
    max_t: u64,
) -> Result<Certificate> {
    let limit = stabilized_limit(sch, states)?;
    let mut cert = Certificate::new("minimality").with_stage(limit.stage).with_core(limit.core);

    let theta1 = &states[0].lab;
    let census = match &states[0].census {
        Some(c) => c.clone(),
        None => {
            let core = theta1.core.saturating_sub(6 * sch.r(1));
            crate::ball::enumerate_ball_types(win, theta1, 1, sch.f(1), sch.s(1), core)?
        }
    };
    let reps: Vec<LabeledBall> = (0..census.len()).map(|i| census.representative(win, theta1, i)).collect();
    let rho = 2 * sch.r(2);
    for (name, lab) in [("first_types_in_stage_two", &states[1].lab), ("first_types_in_limit", &limit)] {
        if name == "first_types_in_limit" && states.len() < 3 {
            continue;
        }
        let test_core = lab
            .core
            .checked_sub(rho + sch.s(1))
            .ok_or(ForgeError::CoreTooSmall { needed: rho + sch.s(1), have: lab.core })?;
        let mut c = verify_types_syndetic(win, lab, 1, sch.s(1), rho, sch.f(2), test_core, Some(reps.clone()))?;
        c.name = name.into();
        c.stage = Some(lab.stage);
        c.bound(format!("every first-stage type within 2 r_2 = {rho}"));
        cert.push(c);
    }

    for j in 1..=max_j.min(limit.depth()) {
        for t in 0..=max_t {
            let n = (j..=sch.len()).find(|&n| sch.s(n) > t);
            let n = match n {
                Some(n) if n < states.len() => n,
                _ => return Err(ForgeError::Config(format!("no computed stage certifies j = {j}, t = {t}"))),
            };
            let rho = 3 * sch.r(n + 1);
            let test_core = limit
                .core
                .checked_sub(rho + t)
                .ok_or(ForgeError::CoreTooSmall { needed: rho + t, have: limit.core })?;
            let mut c = verify_types_syndetic(win, &limit, j, t, rho, sch.f(n + 1), test_core, None)?;
            c.bound(format!("3 r_{} = {rho}", n + 1));
            cert.push(c);
        }
    }
    Ok(cert)
}

fn check_level(win: &CayleyWindow, level: usize) -> Result<()> {
    if level > win.level && win.gs.active_count(level) != win.gs.active_count(win.level) {
        return Err(ForgeError::WindowTooSmall(format!("level {level} exceeds the window level {}", win.level)));
    }
    Ok(())
}

/// Least `m` with `r_m ≥ r` and `f(m) ≥ r`.
pub fn separation_bound(sch: &ScaledSchedule, r: u64) -> Option<usize> {
    (1..=sch.len()).find(|&m| sch.r(m) >= r && sch.f(m) as u64 >= r)
}

/// Separation depth table `S_r` for `r ≤ r_max` over pairs in the core.
pub fn verify_freeness(win: &CayleyWindow, sch: &ScaledSchedule, lab: &Labeling, r_max: u64) -> Result<Certificate> {
    let mut cert = Certificate::new("freeness").with_stage(lab.stage).with_core(lab.core);
    let n = partition(win, lab.core.min(win.radius)) as u32;
    let mut table = Vec::new();
    for r in 1..=r_max {
        check_level(win, r as usize)?;
        let level = (r as usize).min(win.level);
        let offsets: Vec<u32> = win.ball_idx(0, r, level)?.into_iter().filter(|&o| o != 0).collect();
        let mut s_r = 0usize;
        let mut arg = (0, 0);
        let mut bad = None;
        'scan: for x in 0..n {
            for &o in &offsets {
                let y = win.apply_offset(o, x);
                if y == NONE || y >= n {
                    continue;
                }
                match lab.separation_depth(x, y) {
                    Some(s) if s > s_r => {
                        s_r = s;
                        arg = (x, y);
                    }
                    Some(_) => {}
                    None => {
                        bad = Some((x, y));
                        break 'scan;
                    }
                }
            }
        }
        let bound = separation_bound(sch, r);
        match bad {
            Some((x, y)) => {
                cert.fail(
                    format!("no truncation separates a pair at distance ≤ {r}"),
                    vec![win.encode(x), win.encode(y)],
                );
                table.push(json!({"r": r, "S": null, "bound": bound}));
            }
            None => {
                if let Some(m) = bound {
                    if s_r > m {
                        cert.fail(format!("S_{r} = {s_r} exceeds {m}"), vec![win.encode(arg.0), win.encode(arg.1)]);
                    }
                }
                table.push(json!({"r": r, "S": s_r, "bound": bound}));
            }
        }
    }
    cert.measure("table", table);
    cert.bound("S_r ≤ least m with r_m ≥ r and f(m) ≥ r");
    Ok(cert)
}

/// `|B_t|` in `G_level`, closed form when available, else counted.
fn ball_count(gs: &GeneratorSystem, level: usize, t: u64) -> Result<u64> {
    scaled_ball(gs, level, t)
}

/// Density of `U = {x : d(x, V) ≤ s}` in the core against `|B_s|/|B_{⌊t/2⌋}|`.
///
/// The measured density is `|U ∩ core| / |B_{core + s + ⌊t/2⌋}|`, the
/// normalization under which the disjoint-balls count is a proof; the plain
/// `|U ∩ core| / |core|` and the comparison with `|B_s|/|B_t|` are reported.
pub fn density_bound(win: &CayleyWindow, v: &[u32], t: u64, s: u64, level: usize, core: u64) -> Result<Certificate> {
    if s >= t {
        return Err(ForgeError::Config(format!("density bound needs s < t, got s = {s}, t = {t}")));
    }
    if core.saturating_add(s) > win.radius {
        return Err(ForgeError::CoreTooSmall { needed: core + s, have: win.radius });
    }
    if find_close_pair(win, v, t, level).is_some() {
        return Err(ForgeError::NotSeparated(t));
    }
    let mut bfs = Bfs::new(win.len());
    bfs.run(win, v, s, level);
    let n = partition(win, core);
    let hits = bfs.visited().iter().filter(|&&x| (x as usize) < n).count() as u64;
    let gs = &win.gs;
    let half = t / 2;
    let (bs, bh, bt) = (ball_count(gs, level, s)?, ball_count(gs, level, half)?, ball_count(gs, level, t)?);
    let plus = ball_count(gs, win.level, core + s + half)?;
    let density = hits as f64 / plus as f64;
    let plain = hits as f64 / n as f64;
    let mut cert = Certificate::new("density").with_core(core);
    cert.measure("hits", hits);
    cert.measure("normalizer", plus);
    cert.measure("density", density);
    cert.measure("density_core", plain);
    cert.measure("bound", bs as f64 / bh as f64);
    cert.measure("literal_eps", bs as f64 / bt as f64);
    cert.measure("literal_holds", plain < bs as f64 / bt as f64);
    cert.bound(format!("|B_{s}| / |B_{half}| = {bs}/{bh}"));
    // hits·bh ≤ plus·bs, in integers
    if u128::from(hits) * u128::from(bh) > u128::from(plus) * u128::from(bs) {
        let w = bfs.visited().iter().copied().find(|&x| (x as usize) < n).unwrap_or(0);
        cert.fail("density above the half-radius bound", vec![win.encode(w)]);
    }
    Ok(cert)
}

/// Whether `10^m |B_{5 s_m}(G_{f(m)})| < |Γ_{f(m)}|`, decided exactly.
pub fn growth_rule(gs: &GeneratorSystem, m: usize) -> Result<Certificate> {
    let mut cert = Certificate::new(format!("growth_rule_{m}"));
    if let Some(Order::Infinite) = gs.subgroup_order::<BigUint>(&BigUint::one()) {
        // Γ_1 ⊆ Γ_f is infinite, so every finite ball satisfies it.
        cert.measure("holds", "Γ_f infinite");
        return Ok(cert);
    }
    let sch = exact_schedule(gs, m)?;
    let st = sch.stage(m);
    let ball = gs
        .ball_size::<BigUint>(&st.f, &(&st.s * BigUint::from(5u32)))
        .ok_or_else(|| ForgeError::BackendCannotCount("exact ball".into()))?;
    let lhs = num_traits::pow(BigUint::from(10u32), m) * ball;
    let ok = match gs.subgroup_order::<BigUint>(&st.f) {
        Some(Order::Infinite) => true,
        Some(Order::Finite(o)) => lhs < o,
        None => return Err(ForgeError::BackendCannotCount("subgroup order".into())),
    };
    cert.measure("lhs", lhs.to_string());
    if !ok {
        cert.fail("10^m |B_5s| ≥ |Γ_f|", vec![vec![m as i64]]);
    }
    Ok(cert)
}

/// Stage-by-stage stability: the changed points `Q_n` between `Θ^n` and
/// `Θ^{n+1}` avoid the exclusion ball around `e` and obey the density bound
/// for `V = q_{n+1}` points of `Θ^n`.
pub fn verify_stability(win: &CayleyWindow, sch: &ScaledSchedule, states: &[StageState]) -> Result<Certificate> {
    if states.len() < 2 {
        return Err(ForgeError::NothingStabilized("need at least two stages".into()));
    }
    let mut cert = Certificate::new("stability");
    for k in 1..states.len() {
        let n = states[k - 1].stage;
        let prev = &states[k - 1].lab;
        let q: Vec<u32> = states[k].changes.touched();
        let level = sch.f(n + 1);
        let mut c = Certificate::new(format!("changes_{n}")).with_stage(n).with_core(prev.core);
        c.measure("changed", q.len());
        if q.is_empty() {
            c.measure("density", 0.0);
            cert.push(c);
            continue;
        }
        let excl = 5 * sch.s(n + 1);
        let nearest = *q.iter().min_by_key(|&&x| win.dist_e(x)).unwrap();
        c.measure("exclusion", win.dist_e(nearest));
        c.bound(format!("5 s_{} = {excl}", n + 1));
        if win.dist_e(nearest) < excl {
            let exact = win.distance_idx(0, nearest, level).unwrap_or(0);
            if exact < excl {
                c.fail("changed point inside the exclusion ball", vec![win.encode(nearest)]);
            }
        }

        let v = prev.q_set(n + 1);
        let mut bfs = Bfs::new(win.len());
        bfs.run(win, &v, u64::MAX, level);
        let mut dirty = 0u64;
        let mut far = q[0];
        for &x in &q {
            match bfs.dist(x) {
                Some(d) if u64::from(d) > dirty => {
                    dirty = u64::from(d);
                    far = x;
                }
                Some(_) => {}
                None => {
                    c.fail("changed point not reachable from any marker", vec![win.encode(x)]);
                    break;
                }
            }
        }
        c.measure("dirty_radius", dirty);
        let t = sch.r(n + 1);
        let core = prev.core;
        let inside = partition(win, core) as u32;
        let hits = q.iter().filter(|&&x| x < inside).count() as u64;
        let half = t / 2;
        if dirty >= t {
            c.fail("dirty radius reaches the marker separation", vec![win.encode(far)]);
        } else {
            let gs = &win.gs;
            let bs = ball_count(gs, level, dirty)?;
            let bh = ball_count(gs, level, half)?;
            let plus = ball_count(gs, win.level, core + dirty + half)?;
            c.measure("density", hits as f64 / plus as f64);
            c.measure("density_core", hits as f64 / inside as f64);
            c.measure("bound", bs as f64 / bh as f64);
            c.measure("target", 10f64.powi(-(n as i32 + 1)));
            if u128::from(hits) * u128::from(bh) > u128::from(plus) * u128::from(bs) {
                c.fail("changed-point density above the half-radius bound", vec![win.encode(q[0])]);
            }
        }
        c.push(growth_rule(&win.gs, n + 1)?);
        cert.push(c);
    }
    Ok(cert)
}

/// Knobs of [`verify_run`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyOptions {
    pub r_max: u64,
    pub max_j: usize,
    pub max_t: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { r_max: 3, max_j: 1, max_t: 0 }
    }
}

fn skipped(name: &str, why: &ForgeError) -> Certificate {
    let mut c = Certificate::new(name);
    c.measure("skipped", why.to_string());
    c
}

/// Every certificate for a sequence of stages: cleanness and codeball
/// placement per stage, then minimality, freeness, the Bernoulli witness
/// and stability. Certificates the window cannot support are recorded as
/// skipped rather than failed.
pub fn verify_run(
    win: &CayleyWindow,
    sch: &ScaledSchedule,
    states: &[StageState],
    opts: &VerifyOptions,
) -> Result<Certificate> {
    let mut all = Certificate::new("run");
    for st in states {
        let mut c = crate::labeling::verify_clean(win, sch, &st.lab, st.lab.strict);
        c.name = format!("clean_stage_{}", st.stage);
        all.push(c);
        if st.stage >= 2 {
            let mut c = crate::pipeline::check_summ(win, sch, &st.lab, &st.codeballs, st.stage);
            c.name = format!("codeballs_stage_{}", st.stage);
            all.push(c);
        }
    }
    let limit = if states.len() >= 2 { stabilized_limit(sch, states)? } else { states[0].lab.clone() };
    if states.len() >= 2 {
        match verify_minimality(win, sch, states, opts.max_j, opts.max_t) {
            Ok(c) => all.push(c),
            Err(e @ ForgeError::CoreTooSmall { .. }) => all.push(skipped("minimality", &e)),
            Err(e) => return Err(e),
        }
    }
    // radii whose graphs the window materializes
    let active = win.gs.active_count(win.level);
    let r_max = (1..=opts.r_max)
        .take_while(|&r| r as usize <= win.level || win.gs.active_count(r as usize) == active)
        .last()
        .unwrap_or(0);
    let mut free = verify_freeness(win, sch, &limit, r_max)?;
    free.measure("r_max_requested", opts.r_max);
    let depth = free
        .measured
        .get("table")
        .and_then(|t| t.as_array())
        .and_then(|t| t.iter().filter_map(|row| row["S"].as_u64()).max())
        .unwrap_or(0) as usize;
    all.push(free);
    if r_max > 0 && depth > 0 {
        all.push(crate::embedding::bernoulli_freeness_witness(win, &limit, r_max, depth)?);
    }
    if states.len() >= 2 {
        all.push(verify_stability(win, sch, states)?);
    }
    Ok(all)
}
