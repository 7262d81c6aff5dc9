//! Independent oracles shared by the integration tests. Distances here come
//! from coordinates, never from the window's own tables.
#![allow(dead_code)]

use forge_core::sparse::greedy_maximal_sparse;
use forge_core::{CayleyWindow, Element, GeneratorSystem};
use proptest::prelude::*;

/// L1 distance on lattice coordinates (all axes active).
pub fn l1(win: &CayleyWindow, a: u32, b: u32) -> u64 {
    let (p, q) = (win.encode(a), win.encode(b));
    p.iter().zip(&q).map(|(x, y)| x.abs_diff(*y)).sum()
}

/// `G_r` distance computed from the elements themselves: L1 over the
/// active axes on lattices, free reduction of `q p⁻¹` over the active
/// letters on words. `None` when `G_r` does not connect them.
pub fn gr_distance(win: &CayleyWindow, a: u32, b: u32, r: u64) -> Option<u64> {
    let active = win.gs.active_count(r as usize);
    match (win.element(a), win.element(b)) {
        (Element::Lattice(p), Element::Lattice(q)) => {
            if p.iter().zip(&q).skip(active).any(|(x, y)| x != y) {
                return None;
            }
            Some(p.iter().zip(&q).map(|(x, y)| x.abs_diff(*y)).sum())
        }
        (Element::Word(p), Element::Word(q)) => {
            let mut w = q.clone();
            for l in p.iter().rev().map(|l| -l) {
                if w.last() == Some(&-l) {
                    w.pop();
                } else {
                    w.push(l);
                }
            }
            w.iter().all(|l| l.unsigned_abs() as usize <= active).then_some(w.len() as u64)
        }
        _ => unreachable!(),
    }
}

/// SplitMix64, for reproducible subsets.
pub fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Clone, Debug)]
pub struct SparseCase {
    pub dim: usize,
    pub radius: u64,
    /// Percentage of window elements in `S`.
    pub density: u64,
    pub r: u64,
    /// Elements within this distance of `e` are forbidden.
    pub forbid: Option<u64>,
    pub seed: u64,
}

pub fn sparse_case() -> impl Strategy<Value = SparseCase> {
    (1usize..=2, any::<u64>(), 1u64..=60, 0u64..=12, prop::option::of(0u64..=10)).prop_flat_map(
        |(dim, seed, density, r, forbid)| {
            let max_r = if dim == 1 { 200 } else { 30 };
            (8u64..=max_r).prop_map(move |radius| SparseCase { dim, radius, density, r, forbid, seed })
        },
    )
}

/// Runs greedy on a random ambient set and checks sparseness, maximality
/// and the `(s + r)`-net property by brute force over coordinates.
pub fn check_sparse_case(c: &SparseCase) -> Result<(), String> {
    let gs = GeneratorSystem::lattice(c.dim);
    let win = CayleyWindow::new(&gs, c.radius, c.dim).map_err(|e| e.to_string())?;
    let n = win.len() as u32;
    let ambient: Vec<u32> = (0..n).filter(|&x| mix(c.seed ^ u64::from(x)) % 100 < c.density).collect();
    let forbidden: Vec<u32> = match c.forbid {
        Some(k) => (0..n).filter(|&x| l1(&win, 0, x) <= k).collect(),
        None => Vec::new(),
    };
    let t = greedy_maximal_sparse(&win, Some(&ambient), c.r, c.dim, &forbidden, c.radius).elements;
    let eligible: Vec<u32> = ambient.iter().copied().filter(|x| !forbidden.contains(x)).collect();
    for (i, &a) in t.iter().enumerate() {
        if !eligible.contains(&a) {
            return Err(format!("{:?} is not an eligible ambient point", win.encode(a)));
        }
        for &b in &t[i + 1..] {
            if l1(&win, a, b) <= c.r {
                return Err(format!("{:?} and {:?} are within {}", win.encode(a), win.encode(b), c.r));
            }
        }
    }
    for &x in &eligible {
        if !t.iter().any(|&y| l1(&win, x, y) <= c.r) {
            return Err(format!("{:?} could be added", win.encode(x)));
        }
    }
    if eligible.is_empty() {
        return if t.is_empty() { Ok(()) } else { Err("markers from an empty ambient set".into()) };
    }
    let s = (0..n).map(|x| eligible.iter().map(|&y| l1(&win, x, y)).min().unwrap()).max().unwrap();
    for x in 0..n {
        if !t.iter().any(|&y| l1(&win, x, y) <= s + c.r) {
            return Err(format!("{:?} is farther than s + r = {} from the markers", win.encode(x), s + c.r));
        }
    }
    Ok(())
}

#[allow(unused_imports)]
pub use patching::*;

mod patching {
    use super::mix;
    use forge_core::labeling::{c_mask, initial_clean_labeling, verify_clean, LabelingConfig, Q};
    use forge_core::patch::{patch, PatchKind, PatchRequest, PatchSource};
    use forge_core::schedule::{required_window, scaled_schedule, ScaledConfig};
    use forge_core::{CInit, CayleyWindow, Element, GeneratorSystem, Labeling, ScaledSchedule};
    use std::sync::OnceLock;

    /// Two-layer ℤ host with room for stage-2 markers and their dirty balls.
    pub struct PatchFixture {
        pub win: CayleyWindow,
        pub sch: ScaledSchedule,
        pub host: Labeling,
    }

    pub fn fixture() -> &'static PatchFixture {
        static F: OnceLock<PatchFixture> = OnceLock::new();
        F.get_or_init(|| {
            let gs = GeneratorSystem::integers();
            let sch = scaled_schedule(&gs, 3, &ScaledConfig::default(), &[]).unwrap();
            let win = CayleyWindow::new(&gs, 3 * required_window(&sch, 2), sch.f(3)).unwrap();
            let cfg = LabelingConfig { depth: 2, c_depth: 4, c_init: CInit::ElementHash };
            let host = initial_clean_labeling(&win, &sch, &cfg).unwrap();
            PatchFixture { win, sch, host }
        })
    }

    pub fn at(win: &CayleyWindow, x: i64) -> u32 {
        win.index_of(&Element::Lattice(vec![x])).unwrap()
    }

    /// The host with the non-marker colors of layers `< upto` permuted and
    /// fresh `C` bits: still clean, but different from the host almost
    /// everywhere.
    pub fn permuted_donor(f: &PatchFixture, seed: u64, upto: usize) -> Labeling {
        let mut d = f.host.clone();
        for (m, layer) in d.layers.iter_mut().enumerate().take(upto - 1) {
            let card = f.sch.card_f(m + 1) as u32;
            let mut perm: Vec<u32> = (0..card).collect();
            for i in (2..card as usize).rev() {
                let k = 1 + (mix(seed ^ (m as u64) << 40 ^ i as u64) % i as u64) as usize;
                perm.swap(i, k);
            }
            layer.iter_mut().for_each(|l| *l = perm[*l as usize]);
        }
        for (i, c) in d.c.iter_mut().enumerate() {
            *c = mix(seed.rotate_left(17) ^ i as u64) & c_mask(d.c_depth as usize);
        }
        d
    }

    /// Host centers admissible for a patch of this kind.
    pub fn host_centers(f: &PatchFixture, kind: PatchKind, n: usize) -> Vec<u32> {
        let rad = kind.radii(&f.sch, n);
        let q_next: Vec<i64> = if n < f.host.depth() {
            f.host.q_set(n + 1).iter().map(|&x| f.win.encode(x)[0]).collect()
        } else {
            Vec::new()
        };
        f.host
            .q_set(n)
            .into_iter()
            .filter(|&y| f.win.dist_e(y) + rad.dirty <= f.host.core)
            .filter(|&y| {
                kind == PatchKind::Regular || {
                    let p = f.win.encode(y)[0];
                    q_next.iter().all(|q| (q - p).unsigned_abs() > 20 * f.sch.r(n))
                }
            })
            .collect()
    }

    #[derive(Clone, Debug)]
    pub struct PatchCase {
        pub supersize: bool,
        pub seed: u64,
        pub self_patch: bool,
    }

    /// Patches once and checks every postcondition bullet by an exhaustive
    /// diff against an independent transport `z ↦ z - y + x`.
    pub fn check_patch_case(c: &PatchCase) -> Result<(), String> {
        let f = fixture();
        let (win, sch, host) = (&f.win, &f.sch, &f.host);
        let (kind, n) = if c.supersize { (PatchKind::Supersize, 1) } else { (PatchKind::Regular, 2) };
        let rad = kind.radii(sch, n);
        let ys = host_centers(f, kind, n);
        let y = ys[(mix(c.seed) % ys.len() as u64) as usize];
        let donor =
            if c.self_patch { host.clone() } else { permuted_donor(f, c.seed, if c.supersize { 3 } else { n }) };
        let x = if c.self_patch {
            y
        } else {
            let xs: Vec<u32> =
                donor.q_set(n).into_iter().filter(|&x| win.dist_e(x) + rad.kappa_inner <= donor.core).collect();
            xs[(mix(c.seed ^ 1) % xs.len() as u64) as usize]
        };
        let src = PatchSource::extract(win, sch, &donor, x, kind, n).map_err(|e| e.to_string())?;
        let (out, diff) = patch(win, sch, host, &PatchRequest { y, source: &src }).map_err(|e| e.to_string())?;
        let (py, px) = (win.encode(y)[0], win.encode(x)[0]);
        let keep = !c_mask(n);
        for i in 0..win.len() as u32 {
            let z = win.encode(i)[0];
            let d = (z - py).unsigned_abs();
            let k = i as usize;
            let here = format!("{kind:?} y={py} x={px} z={z} d={d}");
            // (i) C bits beyond n
            if (out.c[k] ^ host.c[k]) & keep != 0 {
                return Err(format!("{here}: C bits beyond {n} changed"));
            }
            // (iv) layers beyond n
            for m in n + 1..=host.depth() {
                if out.label(m, i) != host.label(m, i) {
                    return Err(format!("{here}: layer {m} changed"));
                }
            }
            // (ii) outside the dirty ball
            if d >= rad.dirty {
                if out.c[k] != host.c[k] || (1..=n).any(|m| out.label(m, i) != host.label(m, i)) {
                    return Err(format!("{here}: changed outside the dirty ball"));
                }
                continue;
            }
            let t = at(win, z - py + px);
            // (iii) copy ball
            if d <= rad.copy {
                if (out.c[k] ^ donor.c[t as usize]) & !keep != 0 {
                    return Err(format!("{here}: C bits not transported"));
                }
                if let Some(m) = (1..=n).find(|&m| out.label(m, i) != donor.label(m, t)) {
                    return Err(format!("{here}: layer {m} not transported"));
                }
                continue;
            }
            for m in 1..=n {
                let l = out.label(m, i);
                // (v) κ_m seeds survive into λ_m
                if d <= rad.kappa_inner && donor.label(m, t) == Q && l != Q {
                    return Err(format!("{here}: donor q_{m} marker dropped"));
                }
                if d >= rad.kappa_outer && host.label(m, i) == Q && l != Q {
                    return Err(format!("{here}: host q_{m} marker dropped"));
                }
                // (vi) colors come from F_m
                if u64::from(l) >= sch.card_f(m) {
                    return Err(format!("{here}: label {l} outside F_{m}"));
                }
            }
        }
        // support bound and diff log agree with the exhaustive diff
        let changed: Vec<u32> = (0..win.len() as u32)
            .filter(|&i| {
                out.c[i as usize] != host.c[i as usize] || (1..=n).any(|m| out.label(m, i) != host.label(m, i))
            })
            .collect();
        if diff.touched() != changed {
            return Err("diff log disagrees with the exhaustive diff".into());
        }
        if c.self_patch && !changed.is_empty() {
            // the annulus is rebuilt, so only the copy ball and the outside are fixed
            let moved_inside = changed.iter().any(|&i| (win.encode(i)[0] - py).unsigned_abs() <= rad.copy);
            if moved_inside {
                return Err("self-patch moved the copy ball".into());
            }
        }
        // (v)/(vi) hierarchy and colors: the result is clean again
        let cert = verify_clean(win, sch, &out, out.strict);
        if !cert.pass {
            return Err(format!("output not clean: {:?}", cert.failures().last().map(|c| &c.witnesses)));
        }
        Ok(())
    }
}
