//! Parameter sequences `s_m, f(m), r_m, |F_m|, κ_m`.
//!
//! [`Schedule`] is generic over the integer type. Exact schedules use
//! `BigUint` and follow the growth rules verbatim; they are a calculator only.
//! Scaled schedules use `u64`, keep the structural inequalities with small
//! constants and are what window runs consume.

use crate::certificate::Certificate;
use crate::count::{checked_pow, least_satisfying, Count};
use crate::error::{ForgeError, Result};
use crate::group::{GeneratorSystem, Order};
use crate::sparse::greedy_maximal_sparse;
use crate::window::{ball_size_enumerated, Bfs, CayleyWindow};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Scaled,
}

/// `κ = base^exponent`, materialized only when it fits in memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Kappa<N> {
    pub base: N,
    pub exponent: N,
    pub value: Option<N>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stage<N> {
    pub s: N,
    pub f: N,
    pub r: N,
    pub card_f: N,
    pub kappa: Kappa<N>,
    /// Scaled mode: number of annulus sites the next stage must host.
    pub demand: Option<usize>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule<N> {
    pub mode: Mode,
    pub stages: Vec<Stage<N>>,
    pub config: Option<ScaledConfig>,
}

pub type ExactSchedule = Schedule<BigUint>;
pub type ScaledSchedule = Schedule<u64>;

/// Knobs of the runnable schedule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaledConfig {
    pub s1: u64,
    /// Site spacing multiplier: sites are pairwise and from the center more
    /// than `c·r_m` apart.
    pub c: u64,
    /// Multiplier in `r_{m+1} ≥ growth·Σ(5r_{j-1} + s_j)`.
    pub growth: u64,
    /// Size annulus capacity from observed donor demand instead of `default_demand`.
    pub empirical_types: bool,
    pub default_demand: usize,
    /// Palette size overrides per stage (testing the palette bound).
    #[serde(default)]
    pub card_f: Vec<u64>,
}

impl Default for ScaledConfig {
    fn default() -> Self {
        ScaledConfig { s1: 1, c: 20, growth: 2, empirical_types: true, default_demand: 2, card_f: Vec::new() }
    }
}

impl ScaledConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s1 == 0 || self.growth == 0 {
            return Err(ForgeError::Config("multipliers must be >= 1".into()));
        }
        if self.c < 20 {
            return Err(ForgeError::Config(format!("c = {} < 20", self.c)));
        }
        Ok(())
    }
}

impl<N: Count> Schedule<N> {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Stage `m`, 1-based.
    pub fn stage(&self, m: usize) -> &Stage<N> {
        &self.stages[m - 1]
    }

    pub fn to_json(&self) -> Value {
        let stages: Vec<Value> = self
            .stages
            .iter()
            .enumerate()
            .map(|(i, st)| {
                json!({
                    "m": i + 1,
                    "s": st.s.to_decimal(),
                    "f": st.f.to_decimal(),
                    "r": st.r.to_decimal(),
                    "card_f": st.card_f.to_decimal(),
                    "kappa": {
                        "base": st.kappa.base.to_decimal(),
                        "exponent": st.kappa.exponent.to_decimal(),
                        "value": st.kappa.value.as_ref().map(|v| v.to_decimal()),
                    },
                    "demand": st.demand,
                    "notes": st.notes,
                })
            })
            .collect();
        json!({"mode": self.mode, "config": self.config, "stages": stages})
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |w: &str| ForgeError::Snapshot(format!("schedule field `{w}`"));
        let num = |v: &Value, w: &str| -> Result<N> {
            v.get(w).and_then(Value::as_str).and_then(N::parse_decimal).ok_or_else(|| bad(w))
        };
        let mode: Mode = serde_json::from_value(v["mode"].clone()).map_err(|_| bad("mode"))?;
        let config: Option<ScaledConfig> = serde_json::from_value(v["config"].clone()).map_err(|_| bad("config"))?;
        let mut stages = Vec::new();
        for st in v["stages"].as_array().ok_or_else(|| bad("stages"))? {
            let k = &st["kappa"];
            stages.push(Stage {
                s: num(st, "s")?,
                f: num(st, "f")?,
                r: num(st, "r")?,
                card_f: num(st, "card_f")?,
                kappa: Kappa {
                    base: num(k, "base")?,
                    exponent: num(k, "exponent")?,
                    value: k["value"].as_str().and_then(N::parse_decimal),
                },
                demand: st["demand"].as_u64().map(|d| d as usize),
                notes: serde_json::from_value(st["notes"].clone()).map_err(|_| bad("notes"))?,
            });
        }
        Ok(Schedule { mode, stages, config })
    }
}

impl ScaledSchedule {
    pub fn s(&self, m: usize) -> u64 {
        self.stage(m).s
    }

    /// `r_m`, with `r_0 = 0`.
    pub fn r(&self, m: usize) -> u64 {
        if m == 0 {
            0
        } else {
            self.stage(m).r
        }
    }

    /// Graph level `f(m)`.
    pub fn f(&self, m: usize) -> usize {
        self.stage(m).f as usize
    }

    pub fn card_f(&self, m: usize) -> u64 {
        self.stage(m).card_f
    }

    /// `Σ_{i≤m} r_i`, the net radius of the level-`m` markers and the offset
    /// palette radius.
    pub fn net_radius(&self, m: usize) -> u64 {
        (1..=m).map(|i| self.r(i)).sum()
    }

    pub fn spacing(&self) -> u64 {
        self.config.as_ref().map_or(20, |c| c.c)
    }
}

/// Largest `κ` we materialize, in bits.
const KAPPA_BITS: u64 = 1 << 20;

fn kappa<N: Count>(base: N, exponent: N) -> Kappa<N> {
    let bits = exponent.to_u64().and_then(|e| e.checked_mul(base.bit_len()));
    let value = match bits {
        Some(b) if b <= KAPPA_BITS => checked_pow(&base, exponent.to_u64().unwrap()),
        _ => None,
    };
    Kappa { base, exponent, value }
}

fn exact_ball(gs: &GeneratorSystem, level: &BigUint, t: &BigUint) -> Result<BigUint> {
    gs.ball_size(level, t)
        .ok_or_else(|| ForgeError::BackendCannotCount(format!("|B_{t}(G_{level}, e)| has no closed form")))
}

fn exact_order(gs: &GeneratorSystem, level: &BigUint) -> Result<Order<BigUint>> {
    gs.subgroup_order(level).ok_or_else(|| ForgeError::BackendCannotCount(format!("|Γ_{level}| unavailable")))
}

fn lt_order(x: &BigUint, o: &Order<BigUint>) -> bool {
    match o {
        Order::Infinite => true,
        Order::Finite(n) => x < n,
    }
}

/// Exact big-integer schedule following the growth rules verbatim.
pub fn exact_schedule(gs: &GeneratorSystem, stages: usize) -> Result<ExactSchedule> {
    let big = |v: u64| BigUint::from(v);
    let ten = big(10);
    let thousand = big(1000);
    let mut out: Vec<Stage<BigUint>> = Vec::new();
    let generator_levels = gs.generators.len() as u64;

    // f(1): least f with 10|B_50(G_f)| < |Γ_f|
    let s1 = big(10);
    let mut f = None;
    for lv in 1..=generator_levels {
        let l = big(lv);
        let lhs = exact_ball(gs, &l, &(big(5) * &s1))? * &ten;
        if lt_order(&lhs, &exact_order(gs, &l)?) {
            f = Some(l);
            break;
        }
    }
    let mut f = f.ok_or_else(|| ForgeError::Infeasible("no level satisfies 10|B_50(G_f)| < |Γ_f|".into()))?;
    let mut s = s1;
    let mut sum_prev = BigUint::from(0u32); // Σ_{j≤m} (5 r_{j-1} + s_j) accumulated
    let mut r_prev = BigUint::from(0u32);

    for m in 1..=stages {
        let mut notes = Vec::new();
        sum_prev += &r_prev * big(5) + &s;
        // ball-growth bound on ⌊r/10⌋
        let target = checked_pow(&ten, m as u64).unwrap() * exact_ball(gs, &f, &(&s * big(5)))?;
        if !lt_order(&(&target - big(1)), &exact_order(gs, &f)?) {
            return Err(ForgeError::Infeasible(format!("stage {m}: |B_(r/10)| can never reach 10^{m}|B_(5s)|")));
        }
        let u = least_satisfying(BigUint::from(0u32), |u| Some(gs.ball_size(&f, u)? >= target))
            .ok_or_else(|| ForgeError::BackendCannotCount("ball growth inversion".into()))?;
        let growth_r = u * &ten;
        let linear_r = if m >= 2 { &thousand * &sum_prev } else { BigUint::from(0u32) };
        let r = if growth_r >= linear_r {
            notes.push("r bound by |B_(r/10)| ≥ 10^m|B_(5s)|".into());
            growth_r
        } else {
            notes.push("r bound by r ≥ 1000·Σ(5r_(j-1)+s_j)".into());
            linear_r
        };
        let card_f = exact_ball(gs, &f, &r)? + big(1);
        let k = kappa(card_f.clone(), exact_ball(gs, &f, &s)?);
        if k.value.is_none() {
            notes.push("κ is symbolic: too large to materialize".into());
        }
        out.push(Stage { s: s.clone(), f: f.clone(), r: r.clone(), card_f, kappa: k, demand: None, notes });
        if m == stages {
            break;
        }
        let st = out.last().unwrap();
        let kv = st.kappa.value.clone().ok_or_else(|| {
            ForgeError::Unrepresentable(format!(
                "s_{} = 1000·r_{m}·κ_{m} with κ_{m} = {}^{}",
                m + 1,
                st.kappa.base,
                st.kappa.exponent
            ))
        })?;
        let s_next = &thousand * &r * kv;
        let n_t = gs
            .far_point_closed_form(&s_next)
            .ok_or_else(|| ForgeError::BackendCannotCount(format!("far-point index for T = 1000·r_{m}·κ_{m}")))?;
        let mut f_next = f.clone().max(n_t) + big(1);
        let factor = checked_pow(&ten, m as u64 + 1).unwrap();
        let mut guard = 0;
        loop {
            let lhs = &factor * exact_ball(gs, &f_next, &(&s_next * big(5)))?;
            if lt_order(&lhs, &exact_order(gs, &f_next)?) {
                break;
            }
            if f_next > big(generator_levels) {
                return Err(ForgeError::Infeasible(format!(
                    "stage {}: 10^{}|B_(5s)| < |Γ_f| fails at every level",
                    m + 1,
                    m + 1
                )));
            }
            f_next += big(1);
            guard += 1;
            debug_assert!(guard < 1 << 20);
        }
        f = f_next;
        s = s_next;
        r_prev = r;
    }
    Ok(Schedule { mode: Mode::Exact, stages: out, config: None })
}

/// Asserts every exact-rule inequality with big integers.
pub fn check_exact_rules(gs: &GeneratorSystem, sch: &ExactSchedule) -> Result<Certificate> {
    let mut cert = Certificate::new("exact_rules");
    let big = |v: u64| BigUint::from(v);
    let mut sum = big(0);
    for (i, st) in sch.stages.iter().enumerate() {
        let m = i + 1;
        let r_prev = if m == 1 { big(0) } else { sch.stages[i - 1].r.clone() };
        sum += &r_prev * big(5) + &st.s;
        let mut check = |ok: bool, what: String| {
            if !ok {
                cert.fail(what, vec![vec![m as i64]]);
            }
        };
        check(st.s < st.r, format!("s_{m} < r_{m}"));
        if m >= 2 {
            check(sch.stages[i - 1].r < st.s, format!("r_{} < s_{m}", m - 1));
            check(st.r >= big(1000) * &sum, format!("r_{m} ≥ 1000·Σ(5r+s)"));
            let prev = &sch.stages[i - 1];
            if let Some(kv) = &prev.kappa.value {
                check(st.s == big(1000) * &prev.r * kv, format!("s_{m} = 1000 r κ"));
            }
            check(st.f > prev.f, format!("f({m}) > f({})", m - 1));
            let lhs = checked_pow(&big(10), m as u64).unwrap() * exact_ball(gs, &st.f, &(&st.s * big(5)))?;
            check(lt_order(&lhs, &exact_order(gs, &st.f)?), format!("10^{m}|B_(5s_{m})| < |Γ_f({m})|"));
        } else {
            let lhs = big(10) * exact_ball(gs, &st.f, &(&st.s * big(5)))?;
            check(lt_order(&lhs, &exact_order(gs, &st.f)?), "10|B_50| < |Γ_f(1)|".into());
        }
        let growth = exact_ball(gs, &st.f, &(&st.r / big(10)))?;
        let target = checked_pow(&big(10), m as u64).unwrap() * exact_ball(gs, &st.f, &(&st.s * big(5)))?;
        check(growth >= target, format!("|B_(r_{m}/10)| ≥ 10^{m}|B_(5s_{m})|"));
        let br = exact_ball(gs, &st.f, &st.r)?;
        check(br < st.card_f, format!("palette bound: |B_(r_{m})| < |F_{m}|"));
        check(st.kappa.base == st.card_f, format!("κ_{m} base"));
        check(st.kappa.exponent == exact_ball(gs, &st.f, &st.s)?, format!("κ_{m} exponent"));
    }
    cert.measure("stages", sch.stages.len());
    Ok(cert)
}

pub(crate) fn scaled_ball(gs: &GeneratorSystem, level: usize, t: u64) -> Result<u64> {
    match gs.ball_size::<u64>(&(level as u64), &t) {
        Some(v) => Ok(v),
        None => ball_size_enumerated(gs, level, t, 20_000_000),
    }
}

/// Whether `Γ_level` outgrows the ball of radius `t`.
fn scaled_room(gs: &GeneratorSystem, level: usize, t: u64) -> Result<bool> {
    match gs.subgroup_order::<BigUint>(&BigUint::from(level as u64)) {
        Some(Order::Infinite) => Ok(true),
        Some(Order::Finite(n)) => Ok(BigUint::from(scaled_ball(gs, level, t)?) < n),
        None => Ok(false),
    }
}

/// Sites around `z` for a demand: the level-`m` spacing data of a stage.
#[derive(Clone, Debug)]
pub struct SiteRule {
    /// Annulus is `[s/3, 2s/3]` with this `s`.
    pub s: u64,
    /// Pairwise and from-excluded-points distance must exceed this.
    pub spacing: u64,
    pub level: usize,
}

/// Greedy packing of `t`-points in the annulus `s/3 ≤ d(z, ·) ≤ 2s/3`,
/// pairwise more than `spacing` apart and more than `spacing` from every
/// point of `exclude`, in order of distance from `z` then shortlex.
pub fn select_annulus_sites(
    win: &CayleyWindow,
    z: u32,
    t: &[u32],
    count: usize,
    rule: &SiteRule,
    exclude: &[u32],
) -> Result<Vec<u32>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let outer = 2 * rule.s / 3;
    if win.dist_e(z) + outer > win.radius {
        return Err(ForgeError::WindowTooSmall("annulus leaves the window".into()));
    }
    let n = win.len();
    let mut bfs = Bfs::new(n);
    bfs.run(win, &[z], outer, rule.level);
    let dz: Vec<(u64, u32)> = {
        let mut v: Vec<(u64, u32)> = t
            .iter()
            .filter_map(|&x| {
                let d = u64::from(bfs.dist(x)?);
                (3 * d >= rule.s && 3 * d <= 2 * rule.s).then_some((d, x))
            })
            .collect();
        v.sort_unstable();
        v
    };
    let mut blocked = vec![false; n];
    for &y in bfs.run(win, exclude, rule.spacing, rule.level) {
        blocked[y as usize] = true;
    }
    let mut out = Vec::new();
    for (_, x) in dz {
        if blocked[x as usize] {
            continue;
        }
        out.push(x);
        if out.len() == count {
            return Ok(out);
        }
        for &y in bfs.run(win, &[x], rule.spacing, rule.level) {
            blocked[y as usize] = true;
        }
    }
    Err(ForgeError::CapacityExceeded { wanted: count, found: out.len() })
}

/// Post-hoc check of a site list against its three conditions.
pub fn check_sites(win: &CayleyWindow, z: u32, t: &[u32], sites: &[u32], rule: &SiteRule) -> Certificate {
    let mut cert = Certificate::new("annulus_sites");
    for (i, &a) in sites.iter().enumerate() {
        if !t.contains(&a) {
            cert.fail("site is not a marker", vec![win.encode(a)]);
        }
        match win.distance_idx(z, a, rule.level) {
            Some(d) if 3 * d >= rule.s && 3 * d <= 2 * rule.s => {}
            _ => cert.fail("site outside the annulus", vec![win.encode(a)]),
        }
        for &b in &sites[i + 1..] {
            if win.distance_idx(a, b, rule.level).is_some_and(|d| d <= rule.spacing) {
                cert.fail("sites too close", vec![win.encode(a), win.encode(b)]);
            }
        }
    }
    cert.measure("count", sites.len());
    cert
}

/// Constructive capacity probe: on a window of radius `s` at `level`, does a
/// maximal `r`-sparse net around `e` host `demand` annulus sites?
fn capacity_ok(gs: &GeneratorSystem, level: usize, s: u64, r: u64, spacing: u64, demand: usize) -> Result<bool> {
    let win = CayleyWindow::with_cap(gs, s, level, 20_000_000)?;
    let net = greedy_maximal_sparse(&win, None, r, level, &[], s);
    let rule = SiteRule { s, spacing, level };
    match select_annulus_sites(&win, 0, &net.elements, demand, &rule, &[0]) {
        Ok(_) => Ok(true),
        Err(ForgeError::CapacityExceeded { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Runnable schedule. `feedback[m-1]`, when present and the config asks for
/// it, is the number of annulus sites stage `m → m+1` must host.
pub fn scaled_schedule(
    gs: &GeneratorSystem,
    stages: usize,
    cfg: &ScaledConfig,
    feedback: &[usize],
) -> Result<ScaledSchedule> {
    cfg.validate()?;
    let mut out: Vec<Stage<u64>> = Vec::new();
    let mut f = 1usize;
    while !scaled_room(gs, f, 5 * cfg.s1)? {
        f += 1;
        if f > gs.generators.len() {
            return Err(ForgeError::Infeasible("no level outgrows B_(5s_1)".into()));
        }
    }
    let mut s = cfg.s1;
    let mut linear = 0u64; // Σ_{j≤m} (5 r_{j-1} + s_j)
    for m in 1..=stages {
        let mut notes = Vec::new();
        let r_prev = out.last().map_or(0, |st| st.r);
        linear += 5 * r_prev + s;
        let net_prev: u64 = out.iter().map(|st| st.r).sum();
        let growth_r = cfg.growth * linear;
        let compat_r = 10 * s + 1 + net_prev;
        let r = if growth_r >= compat_r {
            notes.push("r bound by r ≥ growth·Σ(5r_(j-1)+s_j)".into());
            growth_r
        } else {
            notes.push("r bound by marker-coverage r > 10s + Σr_i".into());
            compat_r
        };
        let palette = net_prev + r;
        let card_f = match cfg.card_f.get(m - 1) {
            Some(&v) => {
                notes.push("palette size overridden".into());
                v
            }
            None => scaled_ball(gs, f, palette)? + 1,
        };
        let br = scaled_ball(gs, f, r)?;
        if br >= card_f {
            return Err(ForgeError::Infeasible(format!(
                "palette too small at stage {m}: |B_r| = {br} ≥ |F| = {card_f}"
            )));
        }
        let k = kappa(card_f, scaled_ball(gs, f, s)?);
        let demand = if m < stages || stages == 1 {
            Some(if cfg.empirical_types {
                feedback.get(m - 1).copied().unwrap_or(cfg.default_demand)
            } else {
                cfg.default_demand
            })
        } else {
            None
        };
        out.push(Stage { s, f: f as u64, r, card_f, kappa: k, demand, notes });
        if m == stages {
            break;
        }
        let demand = demand.unwrap_or(0);
        // next level first: the annulus lives at f(m+1)
        let mut f_next = f + 1;
        let spacing = cfg.c * r;
        let mut s_next = if demand == 0 { r + 1 } else { (r + 1).max(3 * (spacing + 1)) };
        if demand > 0 {
            let mut tries = 0;
            while !capacity_ok(gs, f_next, s_next, r, spacing, demand)? {
                s_next += s_next / 8 + 1;
                tries += 1;
                if tries > 64 {
                    return Err(ForgeError::CapacityExceeded { wanted: demand, found: 0 });
                }
            }
        }
        while !scaled_room(gs, f_next, 5 * s_next)? {
            f_next += 1;
            if f_next > gs.generators.len() + 1 {
                return Err(ForgeError::Infeasible(format!("stage {}: no level outgrows B_(5s)", m + 1)));
            }
        }
        f = f_next;
        s = s_next;
    }
    Ok(Schedule { mode: Mode::Scaled, stages: out, config: Some(cfg.clone()) })
}

/// Named feasibility predicates of a scaled schedule.
pub fn check_scaled(gs: &GeneratorSystem, sch: &ScaledSchedule) -> Result<Certificate> {
    let mut cert = Certificate::new("scaled_feasibility");
    let cfg = sch.config.clone().unwrap_or_default();
    let mut linear = 0u64;
    for m in 1..=sch.len() {
        let (s, r, f) = (sch.s(m), sch.r(m), sch.f(m));
        linear += 5 * sch.r(m - 1) + s;
        let mut pred = |name: &str, ok: bool| {
            let mut c = Certificate::new(name).with_stage(m);
            if !ok {
                c.fail(format!("{name} violated at stage {m}"), vec![vec![m as i64]]);
            }
            cert.push(c);
        };
        pred("interleaving", s < r && (m == 1 || sch.r(m - 1) < s));
        pred("rule3", scaled_ball(gs, f, r)? < sch.card_f(m));
        pred("growth", r >= cfg.growth * linear);
        pred("marker_coverage", r > 10 * s + sch.net_radius(m - 1));
        pred("f_monotone", m == 1 || sch.f(m) > sch.f(m - 1));
        if m < sch.len() {
            let demand = sch.stage(m).demand.unwrap_or(0);
            let ok = demand == 0 || capacity_ok(gs, sch.f(m + 1), sch.s(m + 1), r, cfg.c * r, demand)?;
            pred("annulus_capacity", ok);
        }
    }
    Ok(cert)
}

/// Window radius that lets the last of `stages` stages place its codeball and
/// patch around it, plus a margin.
pub fn required_window(sch: &ScaledSchedule, stages: usize) -> u64 {
    let n = stages;
    let s = sch.s(n);
    let r_prev = sch.r(n - 1);
    // farthest possible first marker of level n, its ball, and the regular
    // patch reach around it
    let marker = 10 * s + 1 + sch.net_radius(n - 1);
    marker + s + 5 * r_prev + 2 * sch.net_radius(n - 1) + 2
}
