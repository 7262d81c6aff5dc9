//! Labeled balls, isomorphism, full containment, type censuses and
//! syndeticity.
//!
//! A ball is stored in the BFS order of its center, neighbors taken in slot
//! order. Right translation commutes with the left generator action, so two
//! balls of the same radius are isomorphic via `y ↦ y z⁻¹ h` exactly when
//! their label sequences agree position by position.

use crate::certificate::Certificate;
use crate::error::{ForgeError, Result};
use crate::labeling::{c_mask, mix, Labeling};
use crate::window::{Bfs, CayleyWindow, NONE};
use rayon::prelude::*;
use serde_json::{json, Value};

const SENTINEL: u64 = 0x5bd1_e995_0000_0001;

/// A `j`-truncated labeled ball of radius `t` in `G_level`.
#[derive(Clone, Debug)]
pub struct LabeledBall {
    pub j: usize,
    pub level: usize,
    pub t: u64,
    /// `C` bits `1..=j` per vertex.
    pub c: Vec<u64>,
    /// `labels[i*j + m-1] = Θ_m` of vertex `i`.
    pub labels: Vec<u32>,
    pub dist: Vec<u32>,
    /// `adj[i*slots + s]`: local index of the slot-`s` neighbor, `NONE` off the ball.
    pub adj: Vec<u32>,
    pub slots: usize,
    /// Window index of the center in the labeling it came from.
    pub center: u32,
    pub center_word: Vec<i64>,
}

impl PartialEq for LabeledBall {
    fn eq(&self, o: &Self) -> bool {
        self.j == o.j
            && self.level == o.level
            && self.t == o.t
            && self.c == o.c
            && self.labels == o.labels
            && self.dist == o.dist
            && self.adj == o.adj
    }
}

impl LabeledBall {
    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    #[inline]
    fn same_vertex(&self, i: usize, o: &LabeledBall, k: usize, j: usize) -> bool {
        (self.c[i] ^ o.c[k]) & c_mask(j) == 0
            && self.labels[i * self.j..i * self.j + j] == o.labels[k * o.j..k * o.j + j]
    }

    /// Content hash over the canonical traversal.
    pub fn content_hash(&self) -> u64 {
        let mut h = mix(self.j as u64, self.t);
        h = mix(h, self.level as u64);
        for i in 0..self.len() {
            h = mix(h, self.c[i]);
            h = mix(h, u64::from(self.dist[i]));
            for &l in &self.labels[i * self.j..(i + 1) * self.j] {
                h = mix(h, u64::from(l));
            }
        }
        h
    }

    /// The WL hash a census assigns to this ball at its center.
    pub fn type_hash(&self) -> u64 {
        let n = self.len();
        let mut cur: Vec<u64> =
            (0..n).map(|i| seed_hash(self.c[i], &self.labels[i * self.j..(i + 1) * self.j], self.j)).collect();
        let mut next = cur.clone();
        for k in 1..=self.t {
            for i in 0..n {
                if u64::from(self.dist[i]) + k > self.t {
                    break;
                }
                let mut h = mix(cur[i], k);
                for s in 0..self.slots {
                    let y = self.adj[i * self.slots + s];
                    h = mix(h, if y == NONE { SENTINEL } else { cur[y as usize] });
                }
                next[i] = h;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Local BFS from `w` to depth `t` over the first `slots` slots.
    fn local_order(&self, w: usize, t: u64, slots: usize) -> Vec<(u32, u32)> {
        let mut seen = rustc_hash::FxHashSet::default();
        let mut out = vec![(w as u32, 0u32)];
        seen.insert(w as u32);
        let mut head = 0;
        while head < out.len() {
            let (x, d) = out[head];
            head += 1;
            if u64::from(d) >= t {
                continue;
            }
            for s in 0..slots {
                let y = self.adj[x as usize * self.slots + s];
                if y != NONE && seen.insert(y) {
                    out.push((y, d + 1));
                }
            }
        }
        out
    }

    /// Whether the sub-ball of radius `small.t` at local vertex `w` is
    /// isomorphic to `small`.
    pub fn contains_at_local(&self, w: usize, small: &LabeledBall) -> bool {
        if small.j > self.j || small.level > self.level || u64::from(self.dist[w]) + small.t >= self.t {
            return false;
        }
        let order = self.local_order(w, small.t, small.slots);
        order.len() == small.len()
            && order
                .iter()
                .enumerate()
                .all(|(k, &(x, d))| small.dist[k] == d && self.same_vertex(x as usize, small, k, small.j))
    }

    /// Whether this ball occurs in `lab` around `z` (same radius, level and truncation).
    pub fn matches_at(&self, win: &CayleyWindow, lab: &Labeling, z: u32, bfs: &mut Bfs) -> bool {
        if bfs.run(win, &[z], self.t, self.level).len() != self.len() {
            return false;
        }
        let bfs = &*bfs;
        let order = bfs.visited();
        let mask = c_mask(self.j);
        for (k, &x) in order.iter().enumerate() {
            if (lab.c[x as usize] ^ self.c[k]) & mask != 0 {
                return false;
            }
            for m in 0..self.j {
                if lab.layers[m][x as usize] != self.labels[k * self.j + m] {
                    return false;
                }
            }
        }
        order.iter().enumerate().all(|(k, &x)| bfs.dist(x) == Some(self.dist[k]))
    }

    /// JSON form: center, then `(offset word, c bits, labels)` per vertex in
    /// canonical order. Offsets come from the BFS of `e` in `win`.
    pub fn to_json(&self, win: &CayleyWindow) -> Value {
        let mut bfs = Bfs::new(win.len());
        let offsets = bfs.run(win, &[0], self.t, self.level).to_vec();
        let vertices: Vec<Value> = (0..self.len())
            .map(|i| {
                json!({
                    "offset": offsets.get(i).map(|&o| win.encode(o)),
                    "c": self.c[i],
                    "labels": &self.labels[i * self.j..(i + 1) * self.j],
                })
            })
            .collect();
        json!({
            "j": self.j,
            "level": self.level,
            "t": self.t,
            "center": self.center_word,
            "hash": format!("{:016x}", self.content_hash()),
            "vertices": vertices,
        })
    }
}

fn seed_hash(c: u64, labels: &[u32], j: usize) -> u64 {
    let mut h = mix(0x243f_6a88_85a3_08d3, c & c_mask(j));
    for &l in &labels[..j] {
        h = mix(h, u64::from(l));
    }
    h
}

/// `B_t^{Θ,j}(G_level, z)`.
pub fn extract_ball(win: &CayleyWindow, lab: &Labeling, z: u32, t: u64, level: usize, j: usize) -> Result<LabeledBall> {
    if win.dist_e(z).saturating_add(t) > lab.core.min(win.radius) {
        return Err(ForgeError::BallEscapesCore { center: z, radius: t, core: lab.core });
    }
    if j > lab.depth() || j > 64 {
        return Err(ForgeError::Config(format!("truncation {j} exceeds labeling depth {}", lab.depth())));
    }
    let mut bfs = Bfs::new(win.len());
    Ok(extract_with(win, lab, z, t, level, j, &mut bfs))
}

pub(crate) fn extract_with(
    win: &CayleyWindow,
    lab: &Labeling,
    z: u32,
    t: u64,
    level: usize,
    j: usize,
    bfs: &mut Bfs,
) -> LabeledBall {
    let order = bfs.run(win, &[z], t, level).to_vec();
    let slots = win.degree_slots(level);
    let mask = c_mask(j);
    let mut local = rustc_hash::FxHashMap::default();
    for (i, &x) in order.iter().enumerate() {
        local.insert(x, i as u32);
    }
    let mut adj = Vec::with_capacity(order.len() * slots);
    let mut labels = Vec::with_capacity(order.len() * j);
    for &x in &order {
        win.for_slots(x, level, |y| adj.push(if y == NONE { NONE } else { local.get(&y).copied().unwrap_or(NONE) }));
        for m in 0..j {
            labels.push(lab.layers[m][x as usize]);
        }
    }
    LabeledBall {
        j,
        level,
        t,
        c: order.iter().map(|&x| lab.c[x as usize] & mask).collect(),
        labels,
        dist: order.iter().map(|&x| bfs.dist(x).unwrap()).collect(),
        adj,
        slots,
        center: z,
        center_word: win.encode(z),
    }
}

/// Isomorphism of two balls; differing radii are never isomorphic.
pub fn ball_isomorphic(a: &LabeledBall, b: &LabeledBall) -> Result<bool> {
    if a.j != b.j {
        return Err(ForgeError::LevelMismatch(a.j, b.j));
    }
    if a.level != b.level {
        return Err(ForgeError::LevelMismatch(a.level, b.level));
    }
    Ok(a == b)
}

/// First local vertex `w` (canonical order) with `d(center, w) + small.t < big.t`
/// whose sub-ball is isomorphic to `small`.
pub fn fully_contains(big: &LabeledBall, small: &LabeledBall) -> Option<usize> {
    (0..big.len()).take_while(|&w| u64::from(big.dist[w]) + small.t < big.t).find(|&w| big.contains_at_local(w, small))
}

/// WL hashes `h_t` of every element with `dist_e ≤ bound`, over the index prefix.
pub fn wl_hashes(win: &CayleyWindow, lab: &Labeling, j: usize, level: usize, t: u64, bound: u64) -> Vec<u64> {
    let len_of = |b: u64| partition(win, b);
    let full = len_of(bound.saturating_add(t));
    let mut cur: Vec<u64> = (0..full)
        .into_par_iter()
        .map(|x| {
            let mut h = mix(0x243f_6a88_85a3_08d3, lab.c[x] & c_mask(j));
            for layer in &lab.layers[..j] {
                h = mix(h, u64::from(layer[x]));
            }
            h
        })
        .collect();
    let mut next = cur.clone();
    for k in 1..=t {
        let n = len_of(bound + t - k);
        let prev = &cur;
        next[..n].par_iter_mut().enumerate().with_min_len(4096).for_each(|(x, out)| {
            let mut h = mix(prev[x], k);
            win.for_slots(x as u32, level, |y| {
                h = mix(h, if y == NONE { SENTINEL } else { prev[y as usize] });
            });
            *out = h;
        });
        std::mem::swap(&mut cur, &mut next);
    }
    cur.truncate(len_of(bound));
    cur
}

/// Number of elements with `dist_e ≤ b` (an index prefix).
pub fn partition(win: &CayleyWindow, b: u64) -> usize {
    let (mut lo, mut hi) = (0usize, win.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if win.dist_e(mid as u32) <= b {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// One isomorphism class of balls in a census.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BallType {
    pub hash: u64,
    pub count: u64,
    /// Shortlex-least occurrence.
    pub first: u32,
    pub sites: Vec<u32>,
}

/// All `(j, t)` ball types centered within `core` of `e`, ordered by hash.
#[derive(Clone, Debug)]
pub struct Census {
    pub j: usize,
    pub level: usize,
    pub t: u64,
    pub core: u64,
    pub types: Vec<BallType>,
    /// `type_of[x]` for every `x` in the census core.
    pub type_of: Vec<u32>,
}

impl Census {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Representative ball of type `i`.
    pub fn representative(&self, win: &CayleyWindow, lab: &Labeling, i: usize) -> LabeledBall {
        let mut bfs = Bfs::new(win.len());
        extract_with(win, lab, self.types[i].first, self.t, self.level, self.j, &mut bfs)
    }

    /// Type indices sorted by first occurrence.
    pub fn by_first_occurrence(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.len()).collect();
        v.sort_by_key(|&i| self.types[i].first);
        v
    }

    /// CSV rows `(hash, j, radius, count, first-site)`.
    pub fn to_csv(&self, win: &CayleyWindow) -> String {
        let mut out = String::from("hash,j,radius,count,first_site\n");
        for ty in &self.types {
            let site: Vec<String> = win.encode(ty.first).iter().map(i64::to_string).collect();
            out.push_str(&format!("{:016x},{},{},{},{}\n", ty.hash, self.j, self.t, ty.count, site.join(" ")));
        }
        out
    }

    /// Exact pass: every site matches its representative. Quadratic in the
    /// ball size; meant for small windows.
    pub fn verify_exact(&self, win: &CayleyWindow, lab: &Labeling) -> Certificate {
        let mut cert = Certificate::new("census_exact").with_core(self.core);
        let mut bfs = Bfs::new(win.len());
        let reps: Vec<LabeledBall> = (0..self.len()).map(|i| self.representative(win, lab, i)).collect();
        'outer: for (i, ty) in self.types.iter().enumerate() {
            for &x in &ty.sites {
                if !reps[i].matches_at(win, lab, x, &mut bfs) {
                    cert.fail("site differs from its type representative", vec![win.encode(x), win.encode(ty.first)]);
                    break 'outer;
                }
            }
        }
        for a in 0..reps.len() {
            for b in a + 1..reps.len() {
                if reps[a] == reps[b] {
                    cert.fail(
                        "two census types are isomorphic",
                        vec![win.encode(reps[a].center), win.encode(reps[b].center)],
                    );
                }
            }
        }
        cert.measure("types", self.len());
        cert
    }
}

/// Census of `(j, t)` balls in `G_level` centered within `core` of `e`.
pub fn enumerate_ball_types(
    win: &CayleyWindow,
    lab: &Labeling,
    j: usize,
    level: usize,
    t: u64,
    core: u64,
) -> Result<Census> {
    if core.saturating_add(t) > lab.core.min(win.radius) {
        return Err(ForgeError::CoreTooSmall { needed: core.saturating_add(t), have: lab.core });
    }
    let h = wl_hashes(win, lab, j, level, t, core);
    let mut keyed: Vec<(u64, u32)> = h.iter().enumerate().map(|(x, &v)| (v, x as u32)).collect();
    keyed.par_sort_unstable();
    let mut types = Vec::new();
    let mut type_of = vec![NONE; h.len()];
    let mut i = 0;
    while i < keyed.len() {
        let mut k = i;
        while k < keyed.len() && keyed[k].0 == keyed[i].0 {
            type_of[keyed[k].1 as usize] = types.len() as u32;
            k += 1;
        }
        let sites: Vec<u32> = keyed[i..k].iter().map(|p| p.1).collect();
        types.push(BallType { hash: keyed[i].0, count: (k - i) as u64, first: sites[0], sites });
        i = k;
    }
    Ok(Census { j, level, t, core, types, type_of })
}

/// Every element within `test_core` of `e` has an occurrence of `pattern`
/// within `rho`. Occurrences are searched within `test_core + rho`.
pub fn is_syndetic(
    win: &CayleyWindow,
    lab: &Labeling,
    pattern: &LabeledBall,
    rho: u64,
    level: usize,
    test_core: u64,
) -> Result<Certificate> {
    let reach = test_core.saturating_add(rho);
    if reach.saturating_add(pattern.t) > lab.core.min(win.radius) {
        return Err(ForgeError::CoreTooSmall { needed: reach + pattern.t, have: lab.core });
    }
    let key = pattern.type_hash();
    let h = wl_hashes(win, lab, pattern.j, pattern.level, pattern.t, reach);
    let mut bfs = Bfs::new(win.len());
    let occ: Vec<u32> =
        (0..h.len() as u32).filter(|&x| h[x as usize] == key && pattern.matches_at(win, lab, x, &mut bfs)).collect();
    Ok(syndetic_from(win, &occ, rho, level, test_core, "syndetic"))
}

/// Syndeticity certificate from an occurrence list.
pub fn syndetic_from(
    win: &CayleyWindow,
    occ: &[u32],
    rho: u64,
    level: usize,
    test_core: u64,
    name: &str,
) -> Certificate {
    let mut cert = Certificate::new(name).with_core(test_core);
    cert.measure("rho", rho);
    cert.measure("occurrences", occ.len());
    let mut bfs = Bfs::new(win.len());
    bfs.run(win, occ, rho, level);
    let n = partition(win, test_core);
    if let Some(g) = (0..n as u32).find(|&g| bfs.dist(g).is_none()) {
        cert.fail(format!("no occurrence within {rho}"), vec![win.encode(g)]);
    }
    cert
}
