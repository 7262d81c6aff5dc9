//! Finite balls of a Cayley graph with per-level adjacency.
//!
//! Elements are stored in breadth-first order from the identity using the
//! generator order `σ_1, σ_1⁻¹, σ_2, σ_2⁻¹, …`, which is shortlex order of
//! their normal forms. Element indices are therefore the global tie-breaker.

use crate::certificate::Certificate;
use crate::error::{ForgeError, Result};
use crate::group::{Backend, Element, GeneratorSystem};
use rustc_hash::{FxHashMap, FxHashSet};
use std::collections::VecDeque;

pub const NONE: u32 = u32::MAX;
pub const INF: u64 = u64::MAX;

enum Store {
    Lattice { dim: usize, coords: Vec<i64>, index: LatticeIndex },
    Words { words: Vec<Box<[i32]>>, index: FxHashMap<Box<[i32]>, u32> },
    Bits { bits: Vec<u64>, index: FxHashMap<u64, u32> },
    Table { ids: Vec<u32>, index: Vec<u32> },
}

enum LatticeIndex {
    Dense { lo: Vec<i64>, ext: Vec<u64>, slots: Vec<u32> },
    Hash(FxHashMap<Vec<i64>, u32>),
}

impl LatticeIndex {
    fn get(&self, p: &[i64]) -> u32 {
        match self {
            LatticeIndex::Dense { lo, ext, slots } => {
                let mut off = 0u64;
                for i in 0..p.len() {
                    let q = p[i] - lo[i];
                    if q < 0 || q as u64 >= ext[i] {
                        return NONE;
                    }
                    off = off * ext[i] + q as u64;
                }
                slots[off as usize]
            }
            LatticeIndex::Hash(m) => m.get(p).copied().unwrap_or(NONE),
        }
    }

    fn set(&mut self, p: &[i64], v: u32) {
        match self {
            LatticeIndex::Dense { lo, ext, slots } => {
                let mut off = 0u64;
                for i in 0..p.len() {
                    off = off * ext[i] + (p[i] - lo[i]) as u64;
                }
                slots[off as usize] = v;
            }
            LatticeIndex::Hash(m) => {
                m.insert(p.to_vec(), v);
            }
        }
    }
}

/// Neighbor table of one distinct generator: `fwd[x] = σ·x`, `bwd[x] = σ⁻¹·x`.
struct GenTable {
    fwd: Vec<u32>,
    bwd: Option<Vec<u32>>,
}

/// Ball of radius `radius` around the identity in `G_level`.
pub struct CayleyWindow {
    pub gs: GeneratorSystem,
    pub radius: u64,
    pub level: usize,
    store: Store,
    gens: Vec<GenTable>,
    /// `active[r]`: distinct generators live at level `r`, for `r <= level`.
    active: Vec<usize>,
    dist_e: Vec<u32>,
    convex: bool,
}

impl std::fmt::Debug for CayleyWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CayleyWindow(R={}, level={}, n={})", self.radius, self.level, self.len())
    }
}

impl CayleyWindow {
    pub fn new(gs: &GeneratorSystem, radius: u64, level: usize) -> Result<Self> {
        Self::with_cap(gs, radius, level, 200_000_000)
    }

    /// Build the window, refusing to materialize more than `cap` elements.
    pub fn with_cap(gs: &GeneratorSystem, radius: u64, level: usize, cap: usize) -> Result<Self> {
        if level == 0 {
            return Err(ForgeError::Config("window level must be >= 1".into()));
        }
        let distinct = gs.distinct();
        let active: Vec<usize> = (0..=level).map(|r| distinct.iter().filter(|(_, l)| *l <= r).count()).collect();
        let live: Vec<Element> = distinct.iter().take(active[level]).map(|(g, _)| g.clone()).collect();
        let inverses: Vec<Element> = live.iter().map(|g| gs.inv(g)).collect();
        let too_big = || ForgeError::WindowTooSmall(format!("window exceeds {cap} elements"));

        let mut store = match &gs.backend {
            Backend::Lattice { dim } => {
                let mut span = vec![0i64; *dim];
                for g in &live {
                    if let Element::Lattice(v) = g {
                        for (s, x) in span.iter_mut().zip(v) {
                            *s = (*s).max(x.abs());
                        }
                    }
                }
                let r = radius.min(i64::MAX as u64 / 4) as i64;
                let lo: Vec<i64> = span.iter().map(|s| -s * r).collect();
                let ext: Vec<u64> = span.iter().map(|s| (2 * s * r + 1) as u64).collect();
                let total = ext.iter().try_fold(1u64, |a, b| a.checked_mul(*b));
                let index = match total {
                    Some(t) if t <= 64_000_000 || t <= 4 * cap as u64 && t <= 400_000_000 => {
                        LatticeIndex::Dense { lo, ext, slots: vec![NONE; t as usize] }
                    }
                    _ => LatticeIndex::Hash(FxHashMap::default()),
                };
                Store::Lattice { dim: *dim, coords: Vec::new(), index }
            }
            Backend::Free { .. } => Store::Words { words: Vec::new(), index: FxHashMap::default() },
            Backend::Bits { .. } => Store::Bits { bits: Vec::new(), index: FxHashMap::default() },
            Backend::Table { mul } => Store::Table { ids: Vec::new(), index: vec![NONE; mul.len()] },
        };

        let mut dist_e: Vec<u32> = Vec::new();
        push(&mut store, &gs.identity());
        dist_e.push(0);
        let mut head = 0usize;
        while head < dist_e.len() {
            let d = dist_e[head];
            if u64::from(d) >= radius {
                break;
            }
            let x = element_of(&store, head as u32);
            for (g, gi) in live.iter().zip(&inverses) {
                for h in [g, gi] {
                    let y = gs.mul(h, &x);
                    if lookup(&store, &y) == NONE {
                        if dist_e.len() >= cap {
                            return Err(too_big());
                        }
                        push(&mut store, &y);
                        dist_e.push(d + 1);
                    }
                }
            }
            head += 1;
        }

        let n = dist_e.len();
        let mut gens = Vec::with_capacity(live.len());
        for (g, gi) in live.iter().zip(&inverses) {
            let involution = g == gi;
            let mut fwd = vec![NONE; n];
            let mut bwd = if involution { Vec::new() } else { vec![NONE; n] };
            match &store {
                Store::Lattice { dim, coords, index } => {
                    let (Element::Lattice(gv), Element::Lattice(iv)) = (g, gi) else { unreachable!() };
                    let mut p = vec![0i64; *dim];
                    for x in 0..n {
                        let base = &coords[x * dim..(x + 1) * dim];
                        for i in 0..*dim {
                            p[i] = base[i] + gv[i];
                        }
                        fwd[x] = index.get(&p);
                        if !involution {
                            for i in 0..*dim {
                                p[i] = base[i] + iv[i];
                            }
                            bwd[x] = index.get(&p);
                        }
                    }
                }
                _ => {
                    for x in 0..n {
                        let e = element_of(&store, x as u32);
                        fwd[x] = lookup(&store, &gs.mul(g, &e));
                        if !involution {
                            bwd[x] = lookup(&store, &gs.mul(gi, &e));
                        }
                    }
                }
            }
            gens.push(GenTable { fwd, bwd: (!involution).then_some(bwd) });
        }

        Ok(CayleyWindow { convex: gs.convex_at(level), gs: gs.clone(), radius, level, store, gens, active, dist_e })
    }

    pub fn len(&self) -> usize {
        self.dist_e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist_e.is_empty()
    }

    pub fn element(&self, idx: u32) -> Element {
        element_of(&self.store, idx)
    }

    pub fn index_of(&self, e: &Element) -> Option<u32> {
        let i = lookup(&self.store, e);
        (i != NONE).then_some(i)
    }

    pub fn encode(&self, idx: u32) -> Vec<i64> {
        self.element(idx).encode()
    }

    /// Level-`L` distance from the identity.
    pub fn dist_e(&self, idx: u32) -> u64 {
        u64::from(self.dist_e[idx as usize])
    }

    /// Radius within which window distances are true group distances for all
    /// pairs: the whole window for convex balls, half of it otherwise.
    pub fn exact_radius(&self) -> u64 {
        if self.convex {
            self.radius
        } else {
            self.radius / 2
        }
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    /// Lattice coordinates of an element without allocation.
    pub fn coords(&self, idx: u32) -> Option<&[i64]> {
        match &self.store {
            Store::Lattice { dim, coords, .. } => Some(&coords[idx as usize * dim..(idx as usize + 1) * dim]),
            _ => None,
        }
    }

    fn clamp_level(&self, level: usize) -> usize {
        level.min(self.level)
    }

    /// Level-`level` neighbors in generator order, skipping the outside.
    #[inline]
    pub fn for_neighbors(&self, idx: u32, level: usize, mut f: impl FnMut(u32)) {
        let k = self.active[self.clamp_level(level)];
        for g in &self.gens[..k] {
            let y = g.fwd[idx as usize];
            if y != NONE {
                f(y);
            }
            if let Some(b) = &g.bwd {
                let y = b[idx as usize];
                if y != NONE {
                    f(y);
                }
            }
        }
    }

    /// Every level-`level` neighbor slot in order, passing `NONE` for slots
    /// that leave the window.
    #[inline]
    pub fn for_slots(&self, idx: u32, level: usize, mut f: impl FnMut(u32)) {
        let k = self.active[self.clamp_level(level)];
        for g in &self.gens[..k] {
            f(g.fwd[idx as usize]);
            if let Some(b) = &g.bwd {
                f(b[idx as usize]);
            }
        }
    }

    /// Index of `x·p⁻¹`, the position of `x` seen from `p`, or `NONE`.
    pub fn offset(&self, x: u32, p: u32) -> u32 {
        match &self.store {
            Store::Lattice { dim, coords, index } => {
                let (a, b) = (x as usize * dim, p as usize * dim);
                if *dim <= 8 {
                    let mut v = [0i64; 8];
                    for i in 0..*dim {
                        v[i] = coords[a + i] - coords[b + i];
                    }
                    index.get(&v[..*dim])
                } else {
                    let v: Vec<i64> = (0..*dim).map(|i| coords[a + i] - coords[b + i]).collect();
                    index.get(&v)
                }
            }
            _ => {
                let g = self.gs.mul(&self.element(x), &self.gs.inv(&self.element(p)));
                lookup(&self.store, &g)
            }
        }
    }

    /// Index of `o·p` for a window offset `o`, or `NONE`.
    pub fn apply_offset(&self, o: u32, p: u32) -> u32 {
        match &self.store {
            Store::Lattice { dim, coords, index } => {
                let (a, b) = (o as usize * dim, p as usize * dim);
                if *dim <= 8 {
                    let mut v = [0i64; 8];
                    for i in 0..*dim {
                        v[i] = coords[a + i] + coords[b + i];
                    }
                    index.get(&v[..*dim])
                } else {
                    let v: Vec<i64> = (0..*dim).map(|i| coords[a + i] + coords[b + i]).collect();
                    index.get(&v)
                }
            }
            _ => lookup(&self.store, &self.gs.mul(&self.element(o), &self.element(p))),
        }
    }

    /// Whether some level-`level` neighbor of `idx` lies outside the window.
    pub fn touches_boundary(&self, idx: u32, level: usize) -> bool {
        let k = self.active[self.clamp_level(level)];
        self.gens[..k]
            .iter()
            .any(|g| g.fwd[idx as usize] == NONE || g.bwd.as_ref().is_some_and(|b| b[idx as usize] == NONE))
    }

    /// Number of neighbor slots per vertex at `level` (2 per generator, 1 for involutions).
    pub fn degree_slots(&self, level: usize) -> usize {
        let k = self.active[self.clamp_level(level)];
        self.gens[..k].iter().map(|g| if g.bwd.is_some() { 2 } else { 1 }).sum()
    }

    /// Slot `s` neighbor of `idx` (or `NONE`), slots ordered as in `for_neighbors`.
    #[inline]
    pub fn neighbor_slot(&self, idx: u32, s: usize) -> u32 {
        let mut s = s;
        for g in &self.gens {
            if s == 0 {
                return g.fwd[idx as usize];
            }
            s -= 1;
            if let Some(b) = &g.bwd {
                if s == 0 {
                    return b[idx as usize];
                }
                s -= 1;
            }
        }
        NONE
    }

    fn fits(&self, idx: u32, t: u64) -> bool {
        self.dist_e(idx).saturating_add(t) <= self.radius
    }

    /// Elements at level distance ≤ t from `center`, in BFS (shortlex-relative) order.
    pub fn ball(&self, center: &Element, t: u64, level: usize) -> Result<Vec<u32>> {
        let c = self.index_of(center).ok_or(ForgeError::ElementOutsideWindow)?;
        self.ball_idx(c, t, level)
    }

    pub fn ball_idx(&self, c: u32, t: u64, level: usize) -> Result<Vec<u32>> {
        if !self.fits(c, t) || level > self.level {
            return Err(ForgeError::BallEscapesWindow { center: c, radius: t });
        }
        let mut bfs = Bfs::new(self.len());
        Ok(bfs.run(self, &[c], t, level).to_vec())
    }

    /// Level distance inside the window; `None` means Infinite.
    pub fn distance(&self, x: &Element, y: &Element, level: usize) -> Result<Option<u64>> {
        let a = self.index_of(x).ok_or(ForgeError::ElementOutsideWindow)?;
        let b = self.index_of(y).ok_or(ForgeError::ElementOutsideWindow)?;
        Ok(self.distance_idx(a, b, level))
    }

    pub fn distance_idx(&self, a: u32, b: u32, level: usize) -> Option<u64> {
        if let Some(m) = self.metric(level) {
            let d = m.dist(self, a, b);
            return (d != INF).then_some(d);
        }
        let mut bfs = Bfs::new(self.len());
        bfs.run_until(self, &[a], INF, level, b);
        bfs.dist(b).map(u64::from)
    }

    /// Closed-form metric when the window is convex and generators standard.
    pub fn metric(&self, level: usize) -> Option<Metric> {
        let level = self.clamp_level(level);
        if !self.convex || self.gs.standard_rank(level).is_none() {
            return None;
        }
        let live: Vec<Element> = self.gs.distinct().into_iter().filter(|(_, l)| *l <= level).map(|(g, _)| g).collect();
        Some(match &self.gs.backend {
            Backend::Lattice { dim } => {
                let mut axes = vec![false; *dim];
                for g in &live {
                    if let Element::Lattice(v) = g {
                        axes[v.iter().position(|q| *q != 0).unwrap()] = true;
                    }
                }
                Metric::Lattice { axes }
            }
            _ => Metric::Generic { level },
        })
    }

    /// Right translation `x ↦ x·g`, an isometry of every level.
    pub fn translator(&self, g: &Element) -> Translator<'_> {
        Translator { win: self, g: g.clone() }
    }

    /// Component of `src` at `level` inside the window, and whether it is closed
    /// (no edge leaves the window).
    pub fn component(&self, src: u32, level: usize) -> (Vec<u32>, bool) {
        let mut bfs = Bfs::new(self.len());
        let comp = bfs.run(self, &[src], INF, level).to_vec();
        let closed = comp.iter().all(|&x| !self.touches_boundary(x, level));
        (comp, closed)
    }
}

fn push(store: &mut Store, e: &Element) {
    match (store, e) {
        (Store::Lattice { coords, index, dim }, Element::Lattice(v)) => {
            let i = (coords.len() / *dim) as u32;
            coords.extend_from_slice(v);
            index.set(v, i);
        }
        (Store::Words { words, index }, Element::Word(w)) => {
            let i = words.len() as u32;
            let b: Box<[i32]> = w.clone().into_boxed_slice();
            words.push(b.clone());
            index.insert(b, i);
        }
        (Store::Bits { bits, index }, Element::Bits(b)) => {
            index.insert(*b, bits.len() as u32);
            bits.push(*b);
        }
        (Store::Table { ids, index }, Element::Table(t)) => {
            index[*t as usize] = ids.len() as u32;
            ids.push(*t);
        }
        _ => panic!("element does not belong to window backend"),
    }
}

fn lookup(store: &Store, e: &Element) -> u32 {
    match (store, e) {
        (Store::Lattice { index, .. }, Element::Lattice(v)) => index.get(v),
        (Store::Words { index, .. }, Element::Word(w)) => index.get(w.as_slice()).copied().unwrap_or(NONE),
        (Store::Bits { index, .. }, Element::Bits(b)) => index.get(b).copied().unwrap_or(NONE),
        (Store::Table { index, .. }, Element::Table(t)) => index.get(*t as usize).copied().unwrap_or(NONE),
        _ => NONE,
    }
}

fn element_of(store: &Store, idx: u32) -> Element {
    let i = idx as usize;
    match store {
        Store::Lattice { dim, coords, .. } => Element::Lattice(coords[i * dim..(i + 1) * dim].to_vec()),
        Store::Words { words, .. } => Element::Word(words[i].to_vec()),
        Store::Bits { bits, .. } => Element::Bits(bits[i]),
        Store::Table { ids, .. } => Element::Table(ids[i]),
    }
}

/// Closed-form distance between window elements.
#[derive(Clone, Debug)]
pub enum Metric {
    Lattice { axes: Vec<bool> },
    Generic { level: usize },
}

impl Metric {
    #[inline]
    pub fn dist(&self, win: &CayleyWindow, a: u32, b: u32) -> u64 {
        match self {
            Metric::Lattice { axes } => {
                let (p, q) = (win.coords(a).unwrap(), win.coords(b).unwrap());
                let mut d = 0u64;
                for i in 0..p.len() {
                    if p[i] != q[i] {
                        if !axes[i] {
                            return INF;
                        }
                        d += p[i].abs_diff(q[i]);
                    }
                }
                d
            }
            Metric::Generic { level } => {
                win.gs.closed_distance(&win.element(a), &win.element(b), *level).unwrap_or(INF)
            }
        }
    }
}

pub struct Translator<'a> {
    win: &'a CayleyWindow,
    g: Element,
}

impl Translator<'_> {
    /// Index of `x·g`, or `NONE` outside the window.
    pub fn apply(&self, idx: u32) -> u32 {
        match (&self.win.store, &self.g) {
            (Store::Lattice { dim, coords, index }, Element::Lattice(v)) => {
                let base = &coords[idx as usize * dim..(idx as usize + 1) * dim];
                if *dim == 1 {
                    return index.get(&[base[0] + v[0]]);
                }
                let p: Vec<i64> = base.iter().zip(v).map(|(a, b)| a + b).collect();
                index.get(&p)
            }
            _ => lookup(&self.win.store, &self.win.gs.mul(&self.win.element(idx), &self.g)),
        }
    }
}

/// Reusable breadth-first search over a window.
pub struct Bfs {
    mark: Vec<u32>,
    epoch: u32,
    dist: Vec<u32>,
    queue: Vec<u32>,
}

impl Bfs {
    pub fn new(n: usize) -> Self {
        Bfs { mark: vec![0; n], epoch: 0, dist: vec![0; n], queue: Vec::new() }
    }

    fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.mark.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
        self.queue.clear();
    }

    /// Multi-source BFS to depth `depth`; returns visited vertices in order.
    pub fn run(&mut self, win: &CayleyWindow, sources: &[u32], depth: u64, level: usize) -> &[u32] {
        self.run_until(win, sources, depth, level, NONE)
    }

    /// As `run`, stopping early once `target` is reached.
    pub fn run_until(&mut self, win: &CayleyWindow, sources: &[u32], depth: u64, level: usize, target: u32) -> &[u32] {
        self.reset();
        for &s in sources {
            if self.mark[s as usize] != self.epoch {
                self.mark[s as usize] = self.epoch;
                self.dist[s as usize] = 0;
                self.queue.push(s);
            }
        }
        let mut head = 0;
        while head < self.queue.len() {
            let x = self.queue[head];
            head += 1;
            if x == target {
                break;
            }
            let d = self.dist[x as usize];
            if u64::from(d) >= depth {
                continue;
            }
            let epoch = self.epoch;
            let (mark, dist, queue) = (&mut self.mark, &mut self.dist, &mut self.queue);
            win.for_neighbors(x, level, |y| {
                if mark[y as usize] != epoch {
                    mark[y as usize] = epoch;
                    dist[y as usize] = d + 1;
                    queue.push(y);
                }
            });
        }
        &self.queue
    }

    /// Distance from the last search's sources, if reached.
    pub fn dist(&self, idx: u32) -> Option<u32> {
        (self.mark[idx as usize] == self.epoch).then(|| self.dist[idx as usize])
    }

    pub fn visited(&self) -> &[u32] {
        &self.queue
    }
}

/// Checks the chain condition `Γ_n ≠ Γ ⇒ σ_{n+1} ∉ Γ_n` and `|Γ_n| ≥ 2^n` for
/// every `n < depth` the window can decide.
pub fn validate_generator_chain(win: &CayleyWindow, depth: usize) -> Result<Certificate> {
    let mut cert = Certificate::new("generator_chain");
    if depth == 0 {
        return Err(ForgeError::Config("depth must be >= 1".into()));
    }
    if win.level < depth {
        return Err(ForgeError::WindowTooSmall(format!("window level {} below chain depth {depth}", win.level)));
    }
    let gs = &win.gs;
    let mut sizes = Vec::new();
    for n in 1..depth {
        let (comp, closed) = win.component(0, n);
        let whole = comp.len() == win.len();
        let next = gs.sigma(n + 1);
        let member = match gs.closed_distance(&gs.identity(), next, n) {
            Some(d) => d != INF,
            None => match win.index_of(next) {
                Some(i) if comp.contains(&i) => true,
                _ if closed => false,
                _ => {
                    return Err(ForgeError::WindowTooSmall(format!("cannot decide whether σ_{} lies in Γ_{n}", n + 1)))
                }
            },
        };
        if !whole && member {
            cert.fail(format!("σ_{} ∈ Γ_{n} but Γ_{n} ≠ Γ", n + 1), vec![next.encode()]);
        }
        if closed {
            sizes.push(serde_json::json!({"n": n, "order": comp.len()}));
            if (comp.len() as u128) < (1u128 << n.min(127)) {
                cert.fail(format!("|Γ_{n}| = {} < 2^{n}", comp.len()), vec![vec![n as i64, comp.len() as i64]]);
            }
        }
    }
    cert.measure("closed_subgroup_orders", sizes);
    Ok(cert)
}

/// Least `n ≤ budget` such that `Γ_n` has an element at `G_n`-distance ≥ `t`,
/// with the shortlex-least such element as witness.
pub fn far_point_index(gs: &GeneratorSystem, t: u64, budget: usize) -> Result<(usize, Element)> {
    const CAP: usize = 4_000_000;
    if t == 0 {
        return Err(ForgeError::Config("T must be >= 1".into()));
    }
    for n in 1..=budget {
        let live: Vec<Element> = gs.distinct().into_iter().filter(|(_, l)| *l <= n).map(|(g, _)| g).collect();
        let mut seen: FxHashSet<Element> = FxHashSet::default();
        let mut queue: VecDeque<(Element, u64)> = VecDeque::new();
        seen.insert(gs.identity());
        queue.push_back((gs.identity(), 0));
        while let Some((x, d)) = queue.pop_front() {
            if d >= t {
                return Ok((n, x));
            }
            for g in &live {
                for h in [g.clone(), gs.inv(g)] {
                    let y = gs.mul(&h, &x);
                    if seen.insert(y.clone()) {
                        queue.push_back((y, d + 1));
                    }
                }
            }
            if seen.len() > CAP {
                return Err(ForgeError::BudgetExhausted { target: t, budget: n });
            }
        }
    }
    Err(ForgeError::BudgetExhausted { target: t, budget })
}

/// |B_t(G_level, e)| by enumeration, for backends without a closed form.
pub fn ball_size_enumerated(gs: &GeneratorSystem, level: usize, t: u64, cap: usize) -> Result<u64> {
    let win = CayleyWindow::with_cap(gs, t, level.max(1), cap)?;
    Ok(win.len() as u64)
}
