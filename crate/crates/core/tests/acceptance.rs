//! The acceptance suite: nine criteria, one line each. Runs the three-stage
//! ℤ pipeline twice, so expect several minutes.

mod common;

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{
    check_patch_case, check_sparse_case, fixture, gr_distance, host_centers, permuted_donor, sparse_case, PatchCase,
};
use forge_core::ball::LabeledBall;
use forge_core::embedding::{bernoulli_freeness_witness, check_coloring, deinterleave, interleave, proper_coloring};
use forge_core::labeling::c_mask;
use forge_core::patch::{patch, simultaneous_patch, PatchKind, PatchRequest, PatchSource};
use forge_core::pipeline::{bad_set, check_summ, run, stabilized_limit, PipelineConfig, Run};
use forge_core::schedule::{check_exact_rules, exact_schedule};
use forge_core::snapshot::{labeling_digest, sha256_hex};
use forge_core::verify::{
    density_bound, growth_rule, verify_freeness, verify_minimality, verify_run, verify_stability, VerifyOptions,
};
use forge_core::{CayleyWindow, Certificate, Element, GeneratorSystem};
use num_bigint::BigUint;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use serde_json::Value;

type Outcome = Result<String, String>;

fn ensure(ok: bool, what: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn passed(c: &Certificate) -> Result<(), String> {
    let failed: Vec<String> =
        c.failures().iter().flat_map(|f| f.witnesses.iter().map(move |w| format!("{}: {}", f.name, w.what))).collect();
    ensure(c.pass, format!("{} failed: {}", c.name, failed.join("; ")))
}

fn runner(cases: u32) -> TestRunner {
    let cfg = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

// 1

/// Independent recomputation with `|B_t| = 2t + 1` on ℤ.
fn exact_schedule_on_integers() -> Outcome {
    let start = Instant::now();
    let gs = GeneratorSystem::integers();
    let sch = exact_schedule(&gs, 2).map_err(|e| e.to_string())?;
    let big = |v: u64| BigUint::from(v);
    let ball = |t: &BigUint| t * 2u32 + 1u32;

    let s1 = big(10);
    // least r with |B_⌊r/10⌋| ≥ 10 |B_5s|
    let target = ball(&(&s1 * 5u32)) * 10u32;
    let u = (&target - 1u32 + 1u32) / 2u32;
    let r1 = u * 10u32;
    ensure(ball(&(&r1 / 10u32)) >= target && ball(&((&r1 - 1u32) / 10u32)) < target, "r_1 oracle is not minimal")?;
    let card1 = ball(&r1) + 1u32;
    let kappa1 = num_traits::pow(card1.clone(), 21);
    let s2 = big(1000) * &r1 * &kappa1;

    let st = sch.stage(1);
    ensure(st.s == s1 && st.f == big(1), "s_1 = 10, f(1) = 1")?;
    ensure(r1 == big(5050) && st.r == r1, format!("r_1 = {} (oracle {r1})", st.r))?;
    ensure(card1 == big(10102) && st.card_f == card1, "|F_1| = 10102")?;
    ensure(st.kappa.base == card1 && st.kappa.exponent == ball(&s1), "κ_1 = 10102^21")?;
    ensure(st.kappa.value.as_ref() == Some(&kappa1), "κ_1 value")?;
    let st2 = sch.stage(2);
    ensure(st2.s == s2, "s_2 = 1000·5050·κ_1")?;

    // every rule, asserted here with big integers
    let infinite = true; // Γ_f = ℤ at every level
    ensure(infinite && big(10) * ball(&(&s1 * 5u32)) > big(0), "10|B_50| < |Γ_f(1)|")?;
    ensure(st.s < st.r && st.r < st2.s && st2.s < st2.r, "s_1 < r_1 < s_2 < r_2")?;
    ensure(st2.f > st.f, "f(2) > f(1)")?;
    let sum = big(5) * big(0) + &s1 + big(5) * &r1 + &s2;
    ensure(st2.r >= big(1000) * &sum, "r_2 ≥ 1000 Σ(5 r_(j-1) + s_j)")?;
    for (m, s) in [(1u32, &st.s), (2, &st2.s)] {
        let stage = sch.stage(m as usize);
        let need = num_traits::pow(big(10), m as usize) * ball(&(s * 5u32));
        ensure(ball(&(&stage.r / 10u32)) >= need, format!("|B_(r_{m}/10)| ≥ 10^{m}|B_(5s_{m})|"))?;
        ensure(ball(&stage.r) < stage.card_f, format!("|B_(r_{m})| < |F_{m}|"))?;
    }
    // r_2 is the least value meeting both lower bounds
    let need2 = ball(&(&s2 * 5u32)) * 100u32;
    let growth = (&need2 - 1u32 + 1u32) / 2u32 * 10u32;
    let linear = big(1000) * &sum;
    ensure(st2.r == growth.clone().max(linear), "r_2 minimal")?;
    passed(&check_exact_rules(&gs, &sch).map_err(|e| e.to_string())?)?;

    let t = start.elapsed();
    ensure(t < Duration::from_secs(1), format!("took {t:?}"))?;
    Ok(format!("r_1 = {r1}, |F_1| = {card1}, s_2 has {} digits", s2.to_string().len()))
}

// 2

fn sparse_suite() -> Outcome {
    let start = Instant::now();
    let mut runner = runner(200);
    let count = Cell::new(0);
    runner
        .run(&sparse_case(), |c| {
            count.set(count.get() + 1);
            prop_assert_eq!(check_sparse_case(&c), Ok(()));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(60), format!("took {t:?}"))?;
    Ok(format!("{} instances", count.get()))
}

// 3

fn patch_case() -> impl Strategy<Value = PatchCase> {
    (any::<bool>(), any::<u64>(), prop::bool::weighted(0.2)).prop_map(|(supersize, seed, self_patch)| PatchCase {
        supersize,
        seed,
        self_patch,
    })
}

/// Two regular patches with disjoint dirty balls, applied both ways round.
fn disjoint_patches_commute(seed: u64) -> Result<(), String> {
    let f = fixture();
    let rad = PatchKind::Regular.radii(&f.sch, 2);
    let ys = host_centers(f, PatchKind::Regular, 2);
    let i = (common::mix(seed) % ys.len() as u64) as usize;
    let pos = |y: u32| f.win.encode(y)[0];
    let j =
        (0..ys.len()).find(|&j| (pos(ys[j]) - pos(ys[i])).unsigned_abs() > 2 * rad.dirty).ok_or("no disjoint pair")?;
    let donor = permuted_donor(f, seed, 2);
    let xs = donor.q_set(2);
    let src = |k: usize| PatchSource::extract(&f.win, &f.sch, &donor, xs[k % xs.len()], PatchKind::Regular, 2);
    let (a, b) = (src(seed as usize).map_err(|e| e.to_string())?, src(seed as usize + 1).map_err(|e| e.to_string())?);
    let (r1, r2) = (PatchRequest { y: ys[i], source: &a }, PatchRequest { y: ys[j], source: &b });
    let step = |h, r| patch(&f.win, &f.sch, h, r).map(|p| p.0).map_err(|e| e.to_string());
    let (a1, b1) = (step(&f.host, &r1)?, step(&f.host, &r2)?);
    let (ab, ba) = (step(&a1, &r2)?, step(&b1, &r1)?);
    let both = simultaneous_patch(&f.win, &f.sch, &f.host, &[r2, r1]).map_err(|e| e.to_string())?.0;
    ensure(ab == ba && ab == both, "disjoint patches do not commute")
}

fn patching_contract() -> Outcome {
    let start = Instant::now();
    let mut runner = runner(50);
    let kinds = [Cell::new(0), Cell::new(0), Cell::new(0)];
    runner
        .run(&patch_case(), |c| {
            let k = &kinds[if c.self_patch { 2 } else { usize::from(c.supersize) }];
            k.set(k.get() + 1);
            prop_assert_eq!(check_patch_case(&c), Ok(()));
            prop_assert_eq!(disjoint_patches_commute(c.seed), Ok(()));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(120), format!("took {t:?}"))?;
    let [regular, supersize, selfp] = kinds.map(Cell::into_inner);
    Ok(format!("{regular} regular, {supersize} supersize, {selfp} self patches"))
}

// 4..7, 9

fn three_stages() -> Result<(Run, Duration), String> {
    let start = Instant::now();
    let r = run(&GeneratorSystem::integers(), &PipelineConfig::new(3)).map_err(|e| e.to_string())?;
    Ok((r, start.elapsed()))
}

/// [`LabeledBall::contains_at_local`] at every admissible position whose
/// center vertex already agrees with the small ball's center.
fn occurs(big: &LabeledBall, small: &LabeledBall) -> bool {
    let mask = c_mask(small.j);
    (0..big.len()).take_while(|&w| u64::from(big.dist[w]) + small.t < big.t).any(|w| {
        (big.c[w] ^ small.c[0]) & mask == 0
            && big.labels[w * big.j..w * big.j + small.j] == small.labels[..small.j]
            && big.contains_at_local(w, small)
    })
}

fn pipeline_invariants(r: &Run, took: Duration) -> Outcome {
    let (win, sch) = (&r.win, &r.sch);
    ensure(r.states.len() == 3, "three stages")?;
    let mut types = Vec::new();
    for k in 1..r.states.len() {
        let st = &r.states[k];
        let n = st.stage;
        for c in [&st.log.summ, &st.log.empty, &st.log.codeball, &st.log.chains] {
            passed(c)?;
        }
        passed(&check_summ(win, sch, &st.lab, &st.codeballs, n))?;
        for i in 2..n {
            ensure(bad_set(win, sch, &st.lab, i, st.codeball(i)).is_empty(), format!("Bad_{i} after stage {n}"))?;
        }
        // full containment, searched without the directory
        let census = r.states[k - 1].census.as_ref().ok_or("missing census")?;
        let ball = &st.codeball(n).ball;
        for t in 0..census.len() {
            let rep = census.representative(win, &r.states[k - 1].lab, t);
            ensure(occurs(ball, &rep), format!("B_{n} misses type {t} of stage {}", n - 1))?;
        }
        types.push(census.len());
    }
    ensure(took < Duration::from_secs(600), format!("took {took:?}"))?;
    Ok(format!("R = {}, census types {types:?}, run {took:.1?}", win.radius))
}

fn minimality(r: &Run) -> Outcome {
    let c = verify_minimality(&r.win, &r.sch, &r.states, 1, 0).map_err(|e| e.to_string())?;
    passed(&c)?;
    let names: Vec<&str> = c.children.iter().map(|c| c.name.as_str()).collect();
    ensure(names.contains(&"first_types_in_stage_two") && names.contains(&"first_types_in_limit"), "checks missing")?;
    Ok(format!("{} syndeticity checks", c.children.len()))
}

fn separation_table(c: &Certificate) -> Vec<(u64, Option<usize>)> {
    c.measured["table"]
        .as_array()
        .unwrap()
        .iter()
        .map(|row| (row["r"].as_u64().unwrap(), row["S"].as_u64().map(|s| s as usize)))
        .collect()
}

fn freeness(r: &Run) -> Outcome {
    let limit = stabilized_limit(&r.sch, &r.states).map_err(|e| e.to_string())?;
    let r_max = r.win.level as u64;
    let c = verify_freeness(&r.win, &r.sch, &limit, r_max).map_err(|e| e.to_string())?;
    passed(&c)?;
    let table = separation_table(&c);
    for &(rad, s) in &table {
        let s = s.ok_or(format!("S_{rad} missing"))?;
        passed(&bernoulli_freeness_witness(&r.win, &limit, rad, s).map_err(|e| e.to_string())?)?;
    }
    Ok(format!("S table {table:?} on core {}", limit.core))
}

fn stability(r: &Run) -> Outcome {
    let c = verify_stability(&r.win, &r.sch, &r.states).map_err(|e| e.to_string())?;
    passed(&c)?;
    for m in 1..=3 {
        passed(&growth_rule(&r.win.gs, m).map_err(|e| e.to_string())?)?;
    }
    // hand-counted fixture: V = 100ℤ, t = 99, s = 4
    let win = CayleyWindow::new(&GeneratorSystem::integers(), 1100, 1).map_err(|e| e.to_string())?;
    let at = |x: i64| win.index_of(&Element::Lattice(vec![x])).unwrap();
    let v: Vec<u32> = (-11..=11).map(|k| at(100 * k)).collect();
    let d = density_bound(&win, &v, 99, 4, 1, 1000).map_err(|e| e.to_string())?;
    passed(&d)?;
    let hits = (-1000i64..=1000).filter(|x| matches!(x.rem_euclid(100), 0..=4 | 96..=99)).count();
    ensure(d.measured["hits"] == hits as u64, "fixture hit count")?;
    let density = d.measured["density_core"].as_f64().unwrap();
    ensure(density <= 9.0 / 99.0 && (density - 0.09).abs() < 0.001, format!("fixture density {density}"))?;
    let changed: Vec<u64> =
        c.children.iter().filter_map(|k| k.measured.get("changed")).filter_map(Value::as_u64).collect();
    Ok(format!("changed points per stage {changed:?}, fixture density {density:.4} ≤ {:.4}", 9.0 / 99.0))
}

fn fingerprint(r: &Run) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for st in &r.states {
        out.push(labeling_digest(&r.win, &r.sch, &st.lab));
        for b in &st.codeballs {
            out.push(sha256_hex(b.to_json(&r.win).to_string().as_bytes()));
        }
        let certs = serde_json::to_string(&[&st.log.chains, &st.log.codeball, &st.log.summ, &st.log.empty]).unwrap();
        out.push(sha256_hex(certs.as_bytes()));
    }
    let bundle = verify_run(&r.win, &r.sch, &r.states, &VerifyOptions::default()).map_err(|e| e.to_string())?;
    out.push(sha256_hex(serde_json::to_string(&bundle).unwrap().as_bytes()));
    Ok(out)
}

// 8

fn embedding_suite() -> Outcome {
    let windows = [
        CayleyWindow::new(&GeneratorSystem::integers(), 40, 5),
        CayleyWindow::new(&GeneratorSystem::lattice(2), 12, 5),
        CayleyWindow::new(&GeneratorSystem::free(2), 5, 5),
    ];
    let mut widths = Vec::new();
    for win in windows {
        let win = win.map_err(|e| e.to_string())?;
        let pc = proper_coloring(&win, 5).map_err(|e| e.to_string())?;
        passed(&check_coloring(&win, &pc).map_err(|e| e.to_string())?)?;
        for r in 1..=5u64 {
            let col = &pc.colors[r as usize - 1];
            for a in 0..win.len() as u32 {
                for b in a + 1..win.len() as u32 {
                    if gr_distance(&win, a, b, r).is_some_and(|d| d <= r) && col[a as usize] == col[b as usize] {
                        return Err(format!("block {r} monochromatic on {:?} {:?}", win.encode(a), win.encode(b)));
                    }
                }
            }
        }
        widths.push(pc.widths);
    }

    let mut runner = runner(256);
    runner
        .run(&prop::collection::vec(any::<(bool, bool)>(), 0..80), |bits| {
            let (a, b): (Vec<bool>, Vec<bool>) = bits.into_iter().unzip();
            prop_assert_eq!(deinterleave(&interleave(&a, &b).unwrap()).unwrap(), (a, b));
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    // the witness depth agrees with the S_r table: S_r separates, S_r - 1 does not
    let two = run(&GeneratorSystem::integers(), &PipelineConfig::new(2)).map_err(|e| e.to_string())?;
    let limit = stabilized_limit(&two.sch, &two.states).map_err(|e| e.to_string())?;
    let c = verify_freeness(&two.win, &two.sch, &limit, two.win.level as u64).map_err(|e| e.to_string())?;
    passed(&c)?;
    for (r, s) in separation_table(&c) {
        let s = s.ok_or(format!("S_{r} missing"))?;
        passed(&bernoulli_freeness_witness(&two.win, &limit, r, s).map_err(|e| e.to_string())?)?;
        if s >= 2 {
            let below = bernoulli_freeness_witness(&two.win, &limit, r, s - 1).map_err(|e| e.to_string())?;
            ensure(!below.pass, format!("depth {} already separates at r = {r}", s - 1))?;
        }
    }
    Ok(format!("block widths ℤ/ℤ²/F₂ {widths:?}"))
}

fn criterion(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let t = start.elapsed();
    let (tag, detail) = match &out {
        Ok(d) => ("PASS", d.as_str()),
        Err(e) => ("FAIL", e.as_str()),
    };
    println!("criterion {n} {name:<22} {tag}  ({t:.1?})  {detail}");
    out.is_ok()
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    let mut ok = Vec::new();
    ok.push(criterion(1, "exact_schedule", exact_schedule_on_integers));
    ok.push(criterion(2, "sparse_nets", sparse_suite));
    ok.push(criterion(3, "patching_contract", patching_contract));

    let first = catch_unwind(three_stages).unwrap_or_else(|_| Err("pipeline panicked".into()));
    let need = |f: &dyn Fn(&Run, Duration) -> Outcome| match &first {
        Ok((r, t)) => f(r, *t),
        Err(e) => Err(format!("three-stage run failed: {e}")),
    };
    ok.push(criterion(4, "pipeline_invariants", || need(&pipeline_invariants)));
    ok.push(criterion(5, "minimality", || need(&|r, _| minimality(r))));
    ok.push(criterion(6, "freeness", || need(&|r, _| freeness(r))));
    ok.push(criterion(7, "stability_density", || need(&|r, _| stability(r))));
    ok.push(criterion(8, "embedding", embedding_suite));
    ok.push(criterion(9, "determinism", move || {
        let (r, _) = first.map_err(|e| format!("three-stage run failed: {e}"))?;
        let a = fingerprint(&r)?.join(",");
        drop(r);
        let (b, _) = three_stages()?;
        let b = fingerprint(&b)?.join(",");
        ensure(a == b, "second run differs")?;
        Ok(format!("{} digests identical", a.split(',').count()))
    }));

    let failed = ok.iter().filter(|&&p| !p).count();
    println!("acceptance: {} passed, {failed} failed", ok.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
