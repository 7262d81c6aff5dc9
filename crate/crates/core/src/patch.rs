//! Regular and supersize patching.
//!
//! A patch copies the donor's layers `≤ n` (and `C` bits `≤ n`) onto the
//! copy ball around the host center `y`, keeps everything at or beyond the
//! dirty radius, and rebuilds the marker hierarchy `λ_1 ⊇ λ_2 ⊇ … ⊇ λ_n` and
//! the colors on the annulus in between.

use crate::ball::{extract_with, LabeledBall};
use crate::error::{ForgeError, Result};
use crate::labeling::{c_mask, Labeling, Layer, RankTable, Q};
use crate::schedule::ScaledSchedule;
use crate::window::{Bfs, CayleyWindow, Metric, INF, NONE};
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Above this ball size conflict searches use the label index.
const SCAN_LIMIT: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchKind {
    Regular,
    Supersize,
}

/// Radii of an `n`-patch, all measured in `G_{f(n)}` from the host center.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchRadii {
    pub copy: u64,
    /// Donor markers within this radius seed `κ_i`.
    pub kappa_inner: u64,
    /// Host markers beyond this radius seed `κ_i`.
    pub kappa_outer: u64,
    pub dirty: u64,
}

impl PatchKind {
    pub fn radii(self, sch: &ScaledSchedule, n: usize) -> PatchRadii {
        match self {
            PatchKind::Regular => {
                let (s, r) = (sch.s(n), sch.r(n - 1));
                PatchRadii { copy: s + r, kappa_inner: s + 2 * r, kappa_outer: s + 3 * r, dirty: s + 4 * r }
            }
            PatchKind::Supersize => {
                let r = sch.r(n);
                PatchRadii { copy: 3 * r, kappa_inner: 4 * r, kappa_outer: 6 * r, dirty: 7 * r }
            }
        }
    }
}

/// Donor labels on `B(x, κ_inner)` in the donor's canonical order.
#[derive(Clone, Debug)]
pub struct PatchSource {
    pub kind: PatchKind,
    pub n: usize,
    pub ball: LabeledBall,
}

impl PatchSource {
    pub fn extract(
        win: &CayleyWindow,
        sch: &ScaledSchedule,
        donor: &Labeling,
        x: u32,
        kind: PatchKind,
        n: usize,
    ) -> Result<Self> {
        let rad = kind.radii(sch, n);
        if win.dist_e(x) + rad.kappa_inner > donor.core.min(win.radius) {
            return Err(ForgeError::BallEscapesCore { center: x, radius: rad.kappa_inner, core: donor.core });
        }
        if donor.label(n, x) != Q {
            return Err(ForgeError::PreconditionViolated(format!("donor center is not a q_{n} marker")));
        }
        let mut bfs = Bfs::new(win.len());
        Ok(PatchSource { kind, n, ball: extract_with(win, donor, x, rad.kappa_inner, sch.f(n), n, &mut bfs) })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PatchRequest<'a> {
    pub y: u32,
    pub source: &'a PatchSource,
}

/// One changed value; `layer == 0` is the `C` component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Change {
    pub idx: u32,
    pub layer: u32,
    pub old: u64,
    pub new: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Diff {
    pub changes: Vec<Change>,
}

impl Diff {
    /// Changed elements, ascending.
    pub fn touched(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.changes.iter().map(|c| c.idx).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn extend(&mut self, other: Diff) {
        self.changes.extend(other.changes);
    }

    /// Changes between two labelings of the same window.
    pub fn between(a: &Labeling, b: &Labeling) -> Diff {
        let mut changes = Vec::new();
        for i in 0..a.len() {
            if a.c[i] != b.c[i] {
                changes.push(Change { idx: i as u32, layer: 0, old: a.c[i], new: b.c[i] });
            }
            for m in 0..a.depth().min(b.depth()) {
                if a.layers[m][i] != b.layers[m][i] {
                    changes.push(Change {
                        idx: i as u32,
                        layer: m as u32 + 1,
                        old: u64::from(a.layers[m][i]),
                        new: u64::from(b.layers[m][i]),
                    });
                }
            }
        }
        Diff { changes }
    }

    pub fn to_json(&self, win: &CayleyWindow) -> Value {
        Value::Array(
            self.changes
                .iter()
                .map(|c| json!({"element": win.encode(c.idx), "layer": c.layer, "old": c.old, "new": c.new}))
                .collect(),
        )
    }
}

/// Points of one layer sorted by `(label, dist_e, idx)`, built once per batch.
struct LabelIndex {
    entries: Vec<(u32, u32, u32)>,
}

impl LabelIndex {
    fn build(win: &CayleyWindow, layer: &[u32]) -> Self {
        let mut entries: Vec<(u32, u32, u32)> = layer
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != NONE)
            .map(|(i, &l)| (l, win.dist_e(i as u32) as u32, i as u32))
            .collect();
        entries.sort_unstable();
        LabelIndex { entries }
    }

    fn range(&self, l: u32, lo: u32, hi: u32) -> &[(u32, u32, u32)] {
        let a = self.entries.partition_point(|e| (e.0, e.1) < (l, lo));
        let b = self.entries.partition_point(|e| (e.0, e.1) <= (l, hi));
        &self.entries[a..b]
    }
}

/// Scratch state shared by the patches of one batch.
pub(crate) struct PatchCtx<'w> {
    win: &'w CayleyWindow,
    sch: &'w ScaledSchedule,
    bfs: Bfs,
    pos: Vec<u32>,
    stamp: Vec<u32>,
    epoch: u32,
    index: Vec<Option<LabelIndex>>,
    added: Vec<FxHashMap<u32, Vec<u32>>>,
    metric: Vec<Option<Metric>>,
    ranks: Vec<Option<RankTable>>,
}

impl<'w> PatchCtx<'w> {
    pub(crate) fn new(win: &'w CayleyWindow, sch: &'w ScaledSchedule, depth: usize) -> Self {
        let n = win.len();
        PatchCtx {
            win,
            sch,
            bfs: Bfs::new(n),
            pos: vec![0; n],
            stamp: vec![0; n],
            epoch: 0,
            index: (0..depth).map(|_| None).collect(),
            added: (0..depth).map(|_| FxHashMap::default()).collect(),
            metric: (1..=depth).map(|m| win.metric(sch.f(m))).collect(),
            ranks: (0..depth).map(|_| None).collect(),
        }
    }

    fn scan(&self, m: usize) -> bool {
        let lay = Layer::of(self.sch, m);
        self.metric[m - 1].is_none()
            || self.win.gs.ball_size::<u64>(&(lay.level as u64), &lay.r).is_some_and(|b| b <= SCAN_LIMIT)
    }

    /// Records a write of label `l` on layer `m` for the index path.
    fn note(&mut self, m: usize, x: u32, l: u32) {
        if self.index[m - 1].is_some() {
            self.added[m - 1].entry(l).or_default().push(x);
        }
    }

    /// Some `z ≠ x` with `Θ_m(z) = l` and `d(x, z) ≤ r_m`.
    fn any_within(&mut self, lab: &Labeling, m: usize, x: u32, l: u32) -> bool {
        let lay = Layer::of(self.sch, m);
        let layer = &lab.layers[m - 1];
        if self.scan(m) {
            return self.bfs.run(self.win, &[x], lay.r, lay.level).iter().any(|&z| z != x && layer[z as usize] == l);
        }
        if self.index[m - 1].is_none() {
            self.index[m - 1] = Some(LabelIndex::build(self.win, layer));
        }
        let metric = self.metric[m - 1].as_ref().unwrap();
        let de = self.win.dist_e(x);
        let lo = de.saturating_sub(lay.r) as u32;
        let hi = de.saturating_add(lay.r).min(u64::from(u32::MAX)) as u32;
        let hit = |z: u32| {
            z != x && layer[z as usize] == l && {
                let d = metric.dist(self.win, x, z);
                d != INF && d <= lay.r
            }
        };
        if self.index[m - 1].as_ref().unwrap().range(l, lo, hi).iter().any(|e| hit(e.2)) {
            return true;
        }
        self.added[m - 1].get(&l).is_some_and(|v| v.iter().any(|&z| hit(z)))
    }

    /// Least label in `1..card` unused within `r_m` of `x`.
    fn least_free(&mut self, lab: &Labeling, m: usize, x: u32) -> Result<u32> {
        let lay = Layer::of(self.sch, m);
        let layer = &lab.layers[m - 1];
        let mut used: Vec<u32> = self
            .bfs
            .run(self.win, &[x], lay.r, lay.level)
            .iter()
            .map(|&z| layer[z as usize])
            .filter(|&l| l != NONE && l != Q)
            .collect();
        used.sort_unstable();
        used.dedup();
        let mut pick = 1u32;
        for u in used {
            if u == pick {
                pick += 1;
            } else if u > pick {
                break;
            }
        }
        if u64::from(pick) >= lay.card {
            return Err(ForgeError::ColoringStuck(x));
        }
        Ok(pick)
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.epoch
    }

    /// Applies one patch to `lab` in place and returns its diff.
    pub(crate) fn apply(&mut self, lab: &mut Labeling, req: &PatchRequest) -> Result<Diff> {
        let (win, sch) = (self.win, self.sch);
        let src = req.source;
        let n = src.n;
        let y = req.y;
        let rad = src.kind.radii(sch, n);
        let level = sch.f(n);
        check_request(win, sch, lab, req)?;

        let hosts: Vec<u32> = self.bfs.run(win, &[y], rad.dirty, level).to_vec();
        let hdist: Vec<u32> = hosts.iter().map(|&x| self.bfs.dist(x).unwrap()).collect();
        let epoch = self.next_epoch();
        for (i, &x) in hosts.iter().enumerate() {
            self.stamp[x as usize] = epoch;
            self.pos[x as usize] = i as u32;
        }
        let old_c: Vec<u64> = hosts.iter().map(|&x| lab.c[x as usize]).collect();
        let old: Vec<Vec<u32>> = (0..n).map(|m| hosts.iter().map(|&x| lab.layers[m][x as usize]).collect()).collect();
        let copy_end = hdist.partition_point(|&d| u64::from(d) <= rad.copy);
        let donor_end = hdist.partition_point(|&d| u64::from(d) <= rad.kappa_inner).min(src.ball.len());
        let outer_start = hdist.partition_point(|&d| u64::from(d) <= rad.kappa_outer);
        let dirty_start = hdist.partition_point(|&d| u64::from(d) < rad.dirty);
        let annulus = copy_end..dirty_start;

        // copy region
        let keep = !c_mask(n);
        for i in 0..copy_end {
            let x = hosts[i] as usize;
            lab.c[x] = (lab.c[x] & keep) | src.ball.c[i];
            for m in 1..=n {
                let l = src.ball.labels[i * src.ball.j + m - 1];
                lab.layers[m - 1][x] = l;
                self.note(m, x as u32, l);
            }
        }

        for m in 1..=n {
            let lay = Layer::of(sch, m);
            // κ_m and the cleared annulus
            for i in annulus.clone() {
                let x = hosts[i] as usize;
                let l = if i < donor_end {
                    src.ball.labels[i * src.ball.j + m - 1]
                } else if i >= outer_start {
                    old[m - 1][i]
                } else {
                    NONE
                };
                lab.layers[m - 1][x] = if l == Q { Q } else { NONE };
                if l == Q {
                    self.note(m, x as u32, Q);
                }
            }
            // λ_m: greedy extension over λ_{m-1} in canonical order
            for i in annulus.clone() {
                let x = hosts[i];
                if lab.layers[m - 1][x as usize] == Q || (m > 1 && lab.layers[m - 2][x as usize] != Q) {
                    continue;
                }
                if !self.any_within(lab, m, x, Q) {
                    lab.layers[m - 1][x as usize] = Q;
                    self.note(m, x, Q);
                }
            }
            // nearest λ_m point inside the dirty ball
            let owner = self.restricted_voronoi(lab, &hosts, m, lay);
            for i in annulus.clone() {
                let x = hosts[i];
                if lab.layers[m - 1][x as usize] == Q {
                    continue;
                }
                let mut pick = NONE;
                let p = owner[i];
                if p != NONE {
                    if let Some(l) = self.offset_label(lay, x, p) {
                        if !self.any_within(lab, m, x, l) {
                            pick = l;
                        }
                    }
                }
                let h = old[m - 1][i];
                if pick == NONE && h != Q && h != NONE && !self.any_within(lab, m, x, h) {
                    pick = h;
                }
                if pick == NONE {
                    pick = self.least_free(lab, m, x)?;
                }
                lab.layers[m - 1][x as usize] = pick;
                self.note(m, x, pick);
            }
        }

        // condition (4) survives only if no new marker came near e
        if lab.strict {
            for m in 1..=n {
                let lay = Layer::of(sch, m);
                let near = hosts.iter().enumerate().any(|(i, &x)| {
                    lab.layers[m - 1][x as usize] == Q
                        && old[m - 1][i] != Q
                        && win.dist_e(x) <= 10 * lay.s
                        && win.distance_idx(0, x, lay.level).is_some_and(|d| d <= 10 * lay.s)
                });
                if near {
                    lab.strict = false;
                }
            }
        }

        let mut changes = Vec::new();
        for (i, &x) in hosts.iter().enumerate() {
            if lab.c[x as usize] != old_c[i] {
                changes.push(Change { idx: x, layer: 0, old: old_c[i], new: lab.c[x as usize] });
            }
            for m in 0..n {
                let (a, b) = (old[m][i], lab.layers[m][x as usize]);
                if a != b {
                    changes.push(Change { idx: x, layer: m as u32 + 1, old: u64::from(a), new: u64::from(b) });
                }
            }
        }
        Ok(Diff { changes })
    }

    fn offset_label(&mut self, lay: Layer, x: u32, p: u32) -> Option<u32> {
        if !self.win.gs.backend.is_abelian() {
            return None;
        }
        let win = self.win;
        self.ranks[lay.m - 1].get_or_insert_with(|| RankTable::new(win, lay)).offset_label(win, x, p)
    }

    /// Owner (nearest `λ_m` point) of every dirty-ball point, searching only
    /// inside the dirty ball.
    fn restricted_voronoi(&mut self, lab: &Labeling, hosts: &[u32], m: usize, lay: Layer) -> Vec<u32> {
        let epoch = self.epoch;
        let mut owner = vec![NONE; hosts.len()];
        let mut queue: Vec<u32> = Vec::new();
        let mut dist = vec![0u32; hosts.len()];
        for (i, &x) in hosts.iter().enumerate() {
            if lab.layers[m - 1][x as usize] == Q {
                owner[i] = x;
                queue.push(i as u32);
            }
        }
        let mut head = 0;
        while head < queue.len() {
            let i = queue[head] as usize;
            head += 1;
            if u64::from(dist[i]) >= lay.net {
                continue;
            }
            let o = owner[i];
            let d = dist[i];
            self.win.for_neighbors(hosts[i], lay.level, |z| {
                if self.stamp[z as usize] == epoch {
                    let k = self.pos[z as usize] as usize;
                    if owner[k] == NONE {
                        owner[k] = o;
                        dist[k] = d + 1;
                        queue.push(k as u32);
                    }
                }
            });
        }
        owner
    }
}

fn check_request(win: &CayleyWindow, sch: &ScaledSchedule, lab: &Labeling, req: &PatchRequest) -> Result<()> {
    let src = req.source;
    let n = src.n;
    let rad = src.kind.radii(sch, n);
    if n == 0 || n > lab.depth() || n > 64 {
        return Err(ForgeError::PreconditionViolated(format!("patch level {n} outside the labeling depth")));
    }
    if sch.f(n) > win.level {
        return Err(ForgeError::WindowTooSmall(format!("window level below f({n})")));
    }
    if src.ball.labels[n - 1] != Q {
        return Err(ForgeError::PreconditionViolated(format!("donor center is not a q_{n} marker")));
    }
    if lab.label(n, req.y) != Q {
        return Err(ForgeError::PreconditionViolated(format!("host center is not a q_{n} marker")));
    }
    if win.dist_e(req.y) + rad.dirty > lab.core.min(win.radius) {
        return Err(ForgeError::CoreExhausted(format!(
            "dirty ball of radius {} around #{} leaves core {}",
            rad.dirty, req.y, lab.core
        )));
    }
    if src.kind == PatchKind::Supersize && lab.depth() > n {
        let lay = Layer::of(sch, n + 1);
        let reach = 20 * sch.r(n);
        let mut bfs = Bfs::new(win.len());
        if bfs.run(win, &[req.y], reach, lay.level).iter().any(|&z| lab.label(n + 1, z) == Q) {
            return Err(ForgeError::PreconditionViolated(format!(
                "a q_{} marker lies within 20 r_{n} of the supersize center",
                n + 1
            )));
        }
    }
    Ok(())
}

/// Dirty balls of the requests, checked pairwise disjoint.
fn assert_disjoint(win: &CayleyWindow, sch: &ScaledSchedule, reqs: &[PatchRequest]) -> Result<()> {
    let mut owner: FxHashMap<u32, u32> = FxHashMap::default();
    let mut bfs = Bfs::new(win.len());
    for req in reqs {
        let rad = req.source.kind.radii(sch, req.source.n);
        for &x in bfs.run(win, &[req.y], rad.dirty, sch.f(req.source.n)) {
            if let Some(&other) = owner.get(&x) {
                if other != req.y {
                    return Err(ForgeError::OverlapViolation(other.min(req.y), other.max(req.y)));
                }
            }
            owner.insert(x, req.y);
        }
    }
    Ok(())
}

/// Single patch.
pub fn patch(
    win: &CayleyWindow,
    sch: &ScaledSchedule,
    host: &Labeling,
    req: &PatchRequest,
) -> Result<(Labeling, Diff)> {
    simultaneous_patch(win, sch, host, std::slice::from_ref(req))
}

/// Patches at pairwise disjoint dirty balls, applied in canonical (host
/// index) order.
pub fn simultaneous_patch(
    win: &CayleyWindow,
    sch: &ScaledSchedule,
    host: &Labeling,
    reqs: &[PatchRequest],
) -> Result<(Labeling, Diff)> {
    let mut out = host.clone();
    let diff = simultaneous_patch_in_place(win, sch, &mut out, reqs)?;
    Ok((out, diff))
}

pub(crate) fn simultaneous_patch_in_place(
    win: &CayleyWindow,
    sch: &ScaledSchedule,
    lab: &mut Labeling,
    reqs: &[PatchRequest],
) -> Result<Diff> {
    if reqs.is_empty() {
        return Ok(Diff::default());
    }
    for req in reqs {
        check_request(win, sch, lab, req)?;
    }
    assert_disjoint(win, sch, reqs)?;
    let mut order: Vec<&PatchRequest> = reqs.iter().collect();
    order.sort_by_key(|r| r.y);
    let mut ctx = PatchCtx::new(win, sch, lab.depth());
    let mut diff = Diff::default();
    for req in order {
        diff.extend(ctx.apply(lab, req)?);
    }
    Ok(diff)
}
