//! Layered labelings `Θ = Θ_C × Θ_1 × … × Θ_M` of a window and the clean
//! labeling conditions.
//!
//! Label `0` of every layer is the marker `q_m`. Non-marker labels are, when
//! possible, the rank of the offset `x·p⁻¹` to the nearest marker `p` inside
//! `B_N(e)` with `N = Σ_{i≤m} r_i`. Offsets are invariant under right
//! translation, so patched copies of a region carry the same labels as the
//! original. On non-abelian groups offsets do not separate, and layers are
//! greedily colored instead.

use crate::certificate::Certificate;
use crate::error::{ForgeError, Result};
use crate::schedule::ScaledSchedule;
use crate::sparse::{greedy_maximal_sparse, mask};
use crate::window::{Bfs, CayleyWindow, INF, NONE};
use serde::{Deserialize, Serialize};

/// The marker label `q_m`.
pub const Q: u32 = 0;

/// Constants of one layer, read off the schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layer {
    pub m: usize,
    pub s: u64,
    pub r: u64,
    pub level: usize,
    pub card: u64,
    /// Net radius of the layer's markers, `Σ_{i≤m} r_i`.
    pub net: u64,
}

impl Layer {
    pub fn of(sch: &ScaledSchedule, m: usize) -> Layer {
        Layer { m, s: sch.s(m), r: sch.r(m), level: sch.f(m), card: sch.card_f(m), net: sch.net_radius(m) }
    }
}

/// Initial policy for the `C` component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum CInit {
    #[default]
    Zero,
    /// Bits of a hash of the element encoding. Every ball becomes its own
    /// type, so only useful on tiny windows.
    ElementHash,
    /// The digit-spreading map applied to the bits of `seed`:
    /// `y_{2^n} = x_1` and `y_a = x_{a-2^n+1}` for `2^n < a < 2^{n+1}`.
    DigitSpread { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelingConfig {
    pub depth: usize,
    /// Number of `C` bits kept, at most 64.
    pub c_depth: u32,
    pub c_init: CInit,
}

impl LabelingConfig {
    pub fn new(depth: usize) -> Self {
        LabelingConfig { depth, c_depth: depth as u32, c_init: CInit::Zero }
    }
}

/// A labeling of every window element, indexed like the window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labeling {
    pub c_depth: u32,
    pub c: Vec<u64>,
    /// `layers[m-1][idx] = Θ_m(idx)`.
    pub layers: Vec<Vec<u32>>,
    pub stage: usize,
    /// Guarantees hold for elements within this distance of `e`.
    pub core: u64,
    /// Whether condition (4) is part of the contract.
    pub strict: bool,
}

pub fn c_mask(j: usize) -> u64 {
    if j >= 64 {
        u64::MAX
    } else {
        (1u64 << j) - 1
    }
}

impl Labeling {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    #[inline]
    pub fn label(&self, m: usize, idx: u32) -> u32 {
        self.layers[m - 1][idx as usize]
    }

    /// Marker set of layer `m`, ascending.
    pub fn q_set(&self, m: usize) -> Vec<u32> {
        self.layers[m - 1].iter().enumerate().filter(|(_, &l)| l == Q).map(|(i, _)| i as u32).collect()
    }

    /// Whether `Θ_[j](a) = Θ'_[j](b)`.
    #[inline]
    pub fn same_truncated(&self, a: u32, other: &Labeling, b: u32, j: usize) -> bool {
        let (a, b) = (a as usize, b as usize);
        (self.c[a] ^ other.c[b]) & c_mask(j) == 0 && (0..j).all(|m| self.layers[m][a] == other.layers[m][b])
    }

    /// Least `S` with `Θ_[S](a) ≠ Θ_[S](b)`, if any within the stored depth.
    pub fn separation_depth(&self, a: u32, b: u32) -> Option<usize> {
        let (a, b) = (a as usize, b as usize);
        let c = self.c[a] ^ self.c[b];
        let by_c = (c != 0).then(|| c.trailing_zeros() as usize + 1);
        let by_layer = (0..self.depth()).find(|&m| self.layers[m][a] != self.layers[m][b]).map(|m| m + 1);
        match (by_c, by_layer) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        }
    }
}

/// Rank of every offset `o` in the level-`f(m)` BFS order of `B_N(e)`.
pub struct RankTable {
    rank: Vec<u32>,
    card: u64,
}

impl RankTable {
    pub fn new(win: &CayleyWindow, lay: Layer) -> Self {
        let mut bfs = Bfs::new(win.len());
        let mut rank = vec![NONE; win.len()];
        for (i, &o) in bfs.run(win, &[0], lay.net, lay.level).iter().enumerate() {
            rank[o as usize] = i as u32;
        }
        RankTable { rank, card: lay.card }
    }

    /// Offset label of `x` seen from marker `p`, if representable.
    #[inline]
    pub fn offset_label(&self, win: &CayleyWindow, x: u32, p: u32) -> Option<u32> {
        let o = win.offset(x, p);
        if o == NONE {
            return None;
        }
        let r = self.rank[o as usize];
        (r != NONE && u64::from(r) < self.card).then_some(r)
    }
}

/// Nearest source of every element within `depth`, ties to the earlier
/// source in BFS order. Unreached elements map to `NONE`.
pub fn voronoi(win: &CayleyWindow, sources: &[u32], depth: u64, level: usize) -> Vec<u32> {
    let n = win.len();
    let mut owner = vec![NONE; n];
    let mut dist = vec![0u32; n];
    let mut queue: Vec<u32> = Vec::with_capacity(sources.len());
    for &s in sources {
        if owner[s as usize] == NONE {
            owner[s as usize] = s;
            queue.push(s);
        }
    }
    let mut head = 0;
    while head < queue.len() {
        let x = queue[head];
        head += 1;
        let d = dist[x as usize];
        if u64::from(d) >= depth {
            continue;
        }
        let o = owner[x as usize];
        win.for_neighbors(x, level, |y| {
            if owner[y as usize] == NONE {
                owner[y as usize] = o;
                dist[y as usize] = d + 1;
                queue.push(y);
            }
        });
    }
    owner
}

fn initial_c(win: &CayleyWindow, idx: u32, cfg: &LabelingConfig) -> u64 {
    let mask = c_mask(cfg.c_depth as usize);
    match cfg.c_init {
        CInit::Zero => 0,
        CInit::ElementHash => {
            let mut h = 0x9e37_79b9_7f4a_7c15u64;
            for v in win.encode(idx) {
                h = mix(h, v as u64);
            }
            h & mask
        }
        CInit::DigitSpread { seed } => digit_spread(seed, cfg.c_depth) & mask,
    }
}

/// `y_{2^n} = x_1`, `y_a = x_{a-2^n+1}` for `2^n < a < 2^{n+1}`, with
/// `x_k` bit `k-1` of `seed` and `y_a` bit `a-1` of the result.
pub fn digit_spread(seed: u64, bits: u32) -> u64 {
    let x = |k: u64| (seed >> (k - 1)) & 1;
    let mut y = 0u64;
    for a in 1..=u64::from(bits.min(64)) {
        let p = 63 - a.leading_zeros() as u64;
        let v = if a == 1 << p { x(1) } else { x(a - (1 << p) + 1) };
        y |= v << (a - 1);
    }
    y
}

#[inline]
pub(crate) fn mix(h: u64, v: u64) -> u64 {
    let x = (h ^ v.wrapping_mul(0x9e37_79b9_7f4a_7c15)).rotate_left(29);
    let x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^ (x >> 31)
}

/// Colors `layer` on every element still `NONE`: offset labels first (on
/// abelian groups), then the least label not used within `r`.
fn color_layer(win: &CayleyWindow, ranks: &RankTable, lay: Layer, q: &[u32], layer: &mut [u32]) -> Result<()> {
    if win.gs.backend.is_abelian() && !q.is_empty() {
        let owner = voronoi(win, q, lay.net, lay.level);
        for x in 0..win.len() as u32 {
            let p = owner[x as usize];
            if layer[x as usize] == NONE && p != NONE {
                if let Some(l) = ranks.offset_label(win, x, p) {
                    layer[x as usize] = l;
                }
            }
        }
    }
    let mut bfs = Bfs::new(win.len());
    let mut used: Vec<u32> = Vec::new();
    for x in 0..win.len() as u32 {
        if layer[x as usize] != NONE {
            continue;
        }
        used.clear();
        for &y in bfs.run(win, &[x], lay.r, lay.level) {
            let l = layer[y as usize];
            if l != NONE && l != Q {
                used.push(l);
            }
        }
        used.sort_unstable();
        used.dedup();
        let mut pick = 1u32;
        for &u in &used {
            if u == pick {
                pick += 1;
            } else if u > pick {
                break;
            }
        }
        if u64::from(pick) >= lay.card {
            return Err(ForgeError::ColoringStuck(x));
        }
        layer[x as usize] = pick;
    }
    Ok(())
}

/// Clean labeling built layer by layer: greedy marker sets avoiding
/// `B(e, 10 s_m)`, nested in the previous layer, then colored.
pub fn initial_clean_labeling(win: &CayleyWindow, sch: &ScaledSchedule, cfg: &LabelingConfig) -> Result<Labeling> {
    let depth = cfg.depth;
    if depth == 0 || depth > sch.len() {
        return Err(ForgeError::Config(format!("depth {depth} outside 1..={}", sch.len())));
    }
    if cfg.c_depth as usize > 64 || (cfg.c_depth as usize) < depth {
        return Err(ForgeError::Config("C depth must lie in depth..=64".into()));
    }
    if sch.f(depth) > win.level {
        return Err(ForgeError::WindowTooSmall(format!(
            "window level {} below f({depth}) = {}",
            win.level,
            sch.f(depth)
        )));
    }
    let n = win.len();
    let mut bfs = Bfs::new(n);
    let mut layers = Vec::with_capacity(depth);
    let mut prev: Option<Vec<u32>> = None;
    for m in 1..=depth {
        let lay = Layer::of(sch, m);
        let forbidden = bfs.run(win, &[0], 10 * lay.s, lay.level).to_vec();
        let q = greedy_maximal_sparse(win, prev.as_deref(), lay.r, lay.level, &forbidden, win.radius);
        if q.elements.is_empty() {
            return Err(ForgeError::WindowTooSmall(format!("no room for a layer-{m} marker")));
        }
        let mut layer = vec![NONE; n];
        for &p in &q.elements {
            layer[p as usize] = Q;
        }
        color_layer(win, &RankTable::new(win, lay), lay, &q.elements, &mut layer)?;
        layers.push(layer);
        prev = Some(q.elements);
    }
    let c = (0..n as u32).map(|i| initial_c(win, i, cfg)).collect();
    Ok(Labeling { c_depth: cfg.c_depth, c, layers, stage: 1, core: win.exact_radius(), strict: true })
}

/// First pair `x ≠ y` of `points` with `d(x, y) ≤ r` and at least one of them
/// within `core` of `e`.
pub(crate) fn close_pair_touching(
    win: &CayleyWindow,
    points: &[u32],
    r: u64,
    level: usize,
    core: u64,
) -> Option<(u32, u32)> {
    if points.len() < 2 || r == 0 {
        return None;
    }
    let small = win.gs.ball_size::<u64>(&(level as u64), &r).is_some_and(|b| b <= 256);
    match win.metric(level).filter(|_| !small) {
        Some(m) => {
            let mut sorted = points.to_vec();
            sorted.sort_unstable_by_key(|&x| (win.dist_e(x), x));
            for i in 0..sorted.len() {
                let a = sorted[i];
                let da = win.dist_e(a);
                if da > core {
                    break;
                }
                for &b in &sorted[i + 1..] {
                    if win.dist_e(b) - da > r {
                        break;
                    }
                    let d = m.dist(win, a, b);
                    if d != INF && d <= r {
                        return Some((a.min(b), a.max(b)));
                    }
                }
            }
            None
        }
        None => {
            let member = mask(win.len(), points);
            let mut bfs = Bfs::new(win.len());
            let mut sorted = points.to_vec();
            sorted.sort_unstable();
            for &a in &sorted {
                if win.dist_e(a) > core {
                    continue;
                }
                for &b in bfs.run(win, &[a], r, level) {
                    if b != a && member[b as usize] {
                        return Some((a.min(b), a.max(b)));
                    }
                }
            }
            None
        }
    }
}

/// Conditions (1)–(3), plus (4) when `strict`, on the labeling's core.
pub fn verify_clean(win: &CayleyWindow, sch: &ScaledSchedule, lab: &Labeling, strict: bool) -> Certificate {
    let mut cert = Certificate::new(if strict { "clean" } else { "almost_clean" }).with_core(lab.core);
    cert.stage = Some(lab.stage);
    let core = lab.core.min(win.radius);
    let mut bfs = Bfs::new(win.len());
    for m in 1..=lab.depth() {
        let lay = Layer::of(sch, m);
        let q = lab.q_set(m);
        let reach = core.saturating_add(lay.r);

        let mut sparse = Certificate::new("marker_sparse").with_stage(m);
        let near: Vec<u32> = q.iter().copied().filter(|&x| win.dist_e(x) <= reach).collect();
        if let Some((a, b)) = close_pair_touching(win, &near, lay.r, lay.level, core) {
            sparse.fail(format!("two q_{m} markers within {}", lay.r), vec![win.encode(a), win.encode(b)]);
        }
        cert.push(sparse);

        let mut nested = Certificate::new("marker_nested").with_stage(m);
        if m > 1 {
            if let Some(&x) = q.iter().find(|&&x| win.dist_e(x) <= core && lab.label(m - 1, x) != Q) {
                nested.fail(format!("q_{m} marker outside the q_{} set", m - 1), vec![win.encode(x)]);
            }
        }
        cert.push(nested);

        let mut maximal = Certificate::new("marker_maximal").with_stage(m);
        bfs.run(win, &q, lay.r, lay.level);
        let uncovered = (0..win.len() as u32)
            .take_while(|&x| win.dist_e(x) <= core)
            .find(|&x| (m == 1 || lab.label(m - 1, x) == Q) && bfs.dist(x).is_none());
        if let Some(x) = uncovered {
            maximal.fail(format!("candidate farther than {} from every q_{m} marker", lay.r), vec![win.encode(x)]);
        }
        maximal.measure("markers", q.len());
        cert.push(maximal);

        let mut proper = Certificate::new("layer_proper").with_stage(m);
        let mut by_label: Vec<(u32, u32)> =
            (0..win.len() as u32).take_while(|&x| win.dist_e(x) <= reach).map(|x| (lab.label(m, x), x)).collect();
        by_label.sort_unstable();
        let mut start = 0;
        while start < by_label.len() {
            let l = by_label[start].0;
            let mut end = start;
            while end < by_label.len() && by_label[end].0 == l {
                end += 1;
            }
            let bucket: Vec<u32> = by_label[start..end].iter().map(|p| p.1).collect();
            if let Some((a, b)) = close_pair_touching(win, &bucket, lay.r, lay.level, core) {
                proper.fail(format!("equal Θ_{m} labels within {}", lay.r), vec![win.encode(a), win.encode(b)]);
                break;
            }
            start = end;
        }
        cert.push(proper);

        if strict {
            let mut away = Certificate::new("marker_away_from_e").with_stage(m);
            let hit = bfs.run(win, &[0], 10 * lay.s, lay.level).iter().copied().find(|&x| lab.label(m, x) == Q);
            if let Some(x) = hit {
                away.fail(format!("q_{m} marker within 10 s_{m} of e"), vec![win.encode(x)]);
            }
            cert.push(away);
        }
    }
    cert
}
