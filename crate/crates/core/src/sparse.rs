//! Greedy sparse sets, maximality and nets on windows.

use crate::certificate::Certificate;
use crate::window::{Bfs, CayleyWindow, INF};
use serde::{Deserialize, Serialize};

/// An `r`-sparse set of window elements (sorted indices).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerSet {
    pub elements: Vec<u32>,
    pub r: u64,
    pub level: usize,
    /// Maximality holds for candidates within this distance of e.
    pub core: u64,
    pub ambient: bool,
}

impl MarkerSet {
    pub fn contains(&self, idx: u32) -> bool {
        self.elements.binary_search(&idx).is_ok()
    }
}

/// Bitmap membership for index sets.
pub fn mask(n: usize, set: &[u32]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &x in set {
        m[x as usize] = true;
    }
    m
}

/// Shortlex-greedy `S`-maximal `r`-sparse subset of `S \ forbidden`.
///
/// `s = None` means the whole window. Candidates are visited in index order;
/// each accepted point blocks its closed `r`-ball.
pub fn greedy_maximal_sparse(
    win: &CayleyWindow,
    s: Option<&[u32]>,
    r: u64,
    level: usize,
    forbidden: &[u32],
    interior: u64,
) -> MarkerSet {
    let n = win.len();
    let forbid = mask(n, forbidden);
    let mut blocked = vec![false; n];
    let mut out = Vec::new();
    let mut bfs = Bfs::new(n);
    let mut take = |x: u32| {
        if forbid[x as usize] || blocked[x as usize] {
            return;
        }
        out.push(x);
        for &y in bfs.run(win, &[x], r, level) {
            blocked[y as usize] = true;
        }
    };
    match s {
        Some(list) => {
            let mut sorted = list.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            sorted.into_iter().for_each(&mut take);
        }
        None => (0..n as u32).for_each(&mut take),
    }
    out.sort_unstable();
    MarkerSet { elements: out, r, level, core: interior, ambient: s.is_some() }
}

/// First pair of distinct points at level distance ≤ r, if any.
///
/// Uses a sorted sweep on `dist_e` with the closed-form metric when balls are
/// large, and per-point searches otherwise.
pub fn find_close_pair(win: &CayleyWindow, points: &[u32], r: u64, level: usize) -> Option<(u32, u32)> {
    if points.len() < 2 || r == 0 {
        return None;
    }
    let ball = win.gs.ball_size::<u64>(&(level as u64), &r);
    let metric = win.metric(level);
    if let Some(m) = metric.filter(|_| ball.is_none_or(|b| b > 256)) {
        let mut sorted: Vec<u32> = points.to_vec();
        sorted.sort_unstable_by_key(|&x| (win.dist_e(x), x));
        for i in 0..sorted.len() {
            let a = sorted[i];
            let da = win.dist_e(a);
            for &b in &sorted[i + 1..] {
                if win.dist_e(b) - da > r {
                    break;
                }
                let d = m.dist(win, a, b);
                if d != INF && d <= r && a != b {
                    return Some((a.min(b), a.max(b)));
                }
            }
        }
        return None;
    }
    let member = mask(win.len(), points);
    let mut bfs = Bfs::new(win.len());
    let mut sorted = points.to_vec();
    sorted.sort_unstable();
    for &a in &sorted {
        for &b in bfs.run(win, &[a], r, level) {
            if b != a && member[b as usize] {
                return Some((a.min(b), a.max(b)));
            }
        }
    }
    None
}

/// First candidate in the core that is neither in `t` nor within `r` of it.
pub fn first_uncovered(
    win: &CayleyWindow,
    t: &[u32],
    candidates: Option<&[u32]>,
    r: u64,
    level: usize,
    core: u64,
) -> Option<u32> {
    let mut bfs = Bfs::new(win.len());
    bfs.run(win, t, r, level);
    let check = |x: u32| win.dist_e(x) <= core && bfs.dist(x).is_none();
    match candidates {
        Some(c) => {
            let mut c = c.to_vec();
            c.sort_unstable();
            c.into_iter().find(|&x| check(x))
        }
        None => (0..win.len() as u32).find(|&x| check(x)),
    }
}

/// `r`-sparseness of a set, restricted to pairs inside the core.
pub fn verify_sparse(win: &CayleyWindow, t: &[u32], r: u64, level: usize, core: u64) -> Certificate {
    let mut cert = Certificate::new("sparse").with_core(core);
    cert.measure("r", r);
    let inside: Vec<u32> = t.iter().copied().filter(|&x| win.dist_e(x) <= core).collect();
    if let Some((a, b)) = find_close_pair(win, &inside, r, level) {
        cert.fail(format!("points within distance {r}"), vec![win.encode(a), win.encode(b)]);
    }
    cert
}

/// Every core point lies within `s` of `t`.
pub fn verify_net(win: &CayleyWindow, t: &[u32], s: u64, level: usize, core: u64) -> Certificate {
    let mut cert = Certificate::new("net").with_core(core);
    cert.measure("s", s);
    if core.saturating_add(s) > win.radius {
        cert.fail(
            format!("core {core} + s {s} exceeds window radius {}", win.radius),
            vec![vec![core as i64, s as i64]],
        );
        return cert;
    }
    if let Some(x) = first_uncovered(win, t, None, s, level, core) {
        if !t.contains(&x) {
            cert.fail(format!("no point of the set within {s}"), vec![win.encode(x)]);
        }
    }
    cert
}

/// Net radius of an `S`-maximal `r`-sparse set inside an `s`-net `S`.
pub fn maximal_sparse_net_radius(s: u64, r: u64) -> u64 {
    s + r
}
