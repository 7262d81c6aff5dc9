//! Distance-r proper colorings, the separating interleave and the finite
//! freeness witness for the Bernoulli image.

use serde_json::{json, Value};

use crate::ball::partition;
use crate::error::{ForgeError, Result};
use crate::labeling::Labeling;
use crate::window::{Bfs, CayleyWindow, NONE};
use crate::Certificate;

/// Per-element color strings: block `r` colors the graph `H_r` joining
/// elements at `G_r`-distance in `(0, r]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProperColoring {
    pub r_max: u64,
    /// `widths[r-1] = m_r`.
    pub widths: Vec<u32>,
    /// `colors[r-1][idx]`.
    pub colors: Vec<Vec<u32>>,
}

impl ProperColoring {
    pub fn width(&self) -> usize {
        self.widths.iter().map(|&w| w as usize).sum()
    }

    /// Concatenated blocks `ψ_1 ψ_2 …`, most significant bit first.
    pub fn bits(&self, idx: u32) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.width());
        for (w, col) in self.widths.iter().zip(&self.colors) {
            push_bits(&mut out, u64::from(col[idx as usize]), *w);
        }
        out
    }
}

fn push_bits(out: &mut Vec<bool>, v: u64, w: u32) {
    for k in (0..w).rev() {
        out.push(v >> k & 1 == 1);
    }
}

fn bits_for(colors: u64) -> u32 {
    if colors <= 1 {
        0
    } else {
        64 - (colors - 1).leading_zeros()
    }
}

fn level_for(win: &CayleyWindow, r: u64) -> Result<usize> {
    let r = r as usize;
    if r > win.level && win.gs.active_count(r) != win.gs.active_count(win.level) {
        return Err(ForgeError::WindowTooSmall(format!("level {r} exceeds the window level {}", win.level)));
    }
    Ok(r.min(win.level))
}

/// Greedy shortlex coloring of every `H_r`, `r ≤ r_max`.
pub fn proper_coloring(win: &CayleyWindow, r_max: u64) -> Result<ProperColoring> {
    let mut widths = Vec::new();
    let mut colors = Vec::new();
    let mut bfs = Bfs::new(win.len());
    let mut used: Vec<u32> = Vec::new();
    for r in 1..=r_max {
        let level = level_for(win, r)?;
        let mut col = vec![NONE; win.len()];
        let mut top = 0u32;
        for x in 0..win.len() as u32 {
            used.clear();
            for &y in bfs.run(win, &[x], r, level) {
                if col[y as usize] != NONE {
                    used.push(col[y as usize]);
                }
            }
            used.sort_unstable();
            used.dedup();
            let c = used.iter().enumerate().find(|&(i, &u)| i as u32 != u).map_or(used.len() as u32, |(i, _)| i as u32);
            col[x as usize] = c;
            top = top.max(c + 1);
        }
        widths.push(bits_for(u64::from(top)));
        colors.push(col);
    }
    Ok(ProperColoring { r_max, widths, colors })
}

/// Exhaustive edge scan of every block.
pub fn check_coloring(win: &CayleyWindow, pc: &ProperColoring) -> Result<Certificate> {
    let mut cert = Certificate::new("proper_coloring");
    let mut bfs = Bfs::new(win.len());
    for r in 1..=pc.r_max {
        let level = level_for(win, r)?;
        let col = &pc.colors[r as usize - 1];
        let w = pc.widths[r as usize - 1];
        'scan: for x in 0..win.len() as u32 {
            for &y in bfs.run(win, &[x], r, level) {
                if y != x && col[x as usize] == col[y as usize] {
                    cert.fail(format!("block {r} is monochromatic on an edge"), vec![win.encode(x), win.encode(y)]);
                    break 'scan;
                }
                if u64::from(col[y as usize]) >> w != 0 {
                    cert.fail(format!("block {r} color exceeds {w} bits"), vec![win.encode(y)]);
                    break 'scan;
                }
            }
        }
    }
    cert.measure("widths", pc.widths.clone());
    Ok(cert)
}

/// `a_1 b_1 a_2 b_2 …`.
pub fn interleave(a: &[bool], b: &[bool]) -> Result<Vec<bool>> {
    if a.len() != b.len() {
        return Err(ForgeError::DepthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).flat_map(|(&x, &y)| [x, y]).collect())
}

/// Inverse of [`interleave`].
pub fn deinterleave(c: &[bool]) -> Result<(Vec<bool>, Vec<bool>)> {
    if c.len() % 2 == 1 {
        return Err(ForgeError::DepthMismatch(c.len() / 2 + 1, c.len() / 2));
    }
    Ok((c.iter().step_by(2).copied().collect(), c.iter().skip(1).step_by(2).copied().collect()))
}

/// Injective fixed-width encoding of window elements: every coordinate of
/// the canonical encoding, zigzagged, behind a presence bit.
#[derive(Clone, Debug)]
pub struct Separating {
    slots: usize,
    width: u32,
}

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

impl Separating {
    pub fn new(win: &CayleyWindow) -> Self {
        let mut slots = 0;
        let mut top = 0u64;
        for x in 0..win.len() as u32 {
            let e = win.encode(x);
            slots = slots.max(e.len());
            top = e.iter().fold(top, |t, &v| t.max(zigzag(v)));
        }
        Separating { slots, width: bits_for(top + 1) }
    }

    pub fn depth(&self) -> usize {
        self.slots * (1 + self.width as usize)
    }

    pub fn bits(&self, win: &CayleyWindow, idx: u32) -> Vec<bool> {
        let e = win.encode(idx);
        let mut out = Vec::with_capacity(self.depth());
        for k in 0..self.slots {
            match e.get(k) {
                Some(&v) => {
                    out.push(true);
                    push_bits(&mut out, zigzag(v), self.width);
                }
                None => push_bits(&mut out, 0, self.width + 1),
            }
        }
        out
    }
}

/// `φ(p)`: the proper coloring interleaved with the separating encoding,
/// both zero-padded to a common depth.
pub fn psi(win: &CayleyWindow, pc: &ProperColoring, sep: &Separating, idx: u32) -> Vec<bool> {
    let depth = pc.width().max(sep.depth());
    let mut a = pc.bits(idx);
    let mut b = sep.bits(win, idx);
    a.resize(depth, false);
    b.resize(depth, false);
    interleave(&a, &b).expect("padded to equal depth")
}

/// Checks `φ` is injective on the window and that each coloring block,
/// recovered by de-interleaving, stays proper.
pub fn check_psi(win: &CayleyWindow, pc: &ProperColoring, sep: &Separating) -> Result<Certificate> {
    let mut cert = Certificate::new("interleave");
    let all: Vec<Vec<bool>> = (0..win.len() as u32).map(|x| psi(win, pc, sep, x)).collect();
    let mut sorted: Vec<(&Vec<bool>, u32)> = all.iter().zip(0u32..).collect();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
        cert.fail("two elements share a code", vec![win.encode(w[0].1), win.encode(w[1].1)]);
    }
    let blocks: Vec<Vec<bool>> = all.iter().map(|c| deinterleave(c).map(|p| p.0)).collect::<Result<_>>()?;
    let mut bfs = Bfs::new(win.len());
    let mut start = 0usize;
    for r in 1..=pc.r_max {
        let w = pc.widths[r as usize - 1] as usize;
        let level = level_for(win, r)?;
        'scan: for x in 0..win.len() as u32 {
            for &y in bfs.run(win, &[x], r, level) {
                if y != x && blocks[x as usize][start..start + w] == blocks[y as usize][start..start + w] {
                    cert.fail(format!("recovered block {r} is not proper"), vec![win.encode(x), win.encode(y)]);
                    break 'scan;
                }
            }
        }
        start += w;
    }
    Ok(cert)
}

/// JSON map `γ ↦ φ(γ·center)` over `γ` in the ball of radius `radius`.
pub fn psi_pattern(
    win: &CayleyWindow,
    pc: &ProperColoring,
    sep: &Separating,
    center: u32,
    radius: u64,
) -> Result<Value> {
    let tree = word_tree(win, radius, win.level);
    let mut out = Vec::new();
    for (gamma, p) in tree.walk(win, center) {
        if p == NONE {
            return Err(ForgeError::BallEscapesWindow { center, radius });
        }
        let bits: String = psi(win, pc, sep, p).iter().map(|&b| if b { '1' } else { '0' }).collect();
        out.push(json!({"gamma": win.encode(gamma), "bits": bits}));
    }
    Ok(json!({"center": win.encode(center), "radius": radius, "pattern": out}))
}

/// BFS tree of `B_r(e)`: entry `k` is `γ_k = σ_slot · γ_parent`.
struct WordTree {
    nodes: Vec<(u32, usize, usize)>,
}

fn word_tree(win: &CayleyWindow, r: u64, level: usize) -> WordTree {
    let slots = win.degree_slots(level);
    let mut nodes = vec![(0u32, 0usize, 0usize)];
    let mut seen = rustc_hash::FxHashMap::default();
    seen.insert(0u32, 0u32);
    let mut head = 0;
    while head < nodes.len() {
        let g = nodes[head].0;
        let d = seen[&g];
        if u64::from(d) < r {
            for s in 0..slots {
                let h = win.neighbor_slot(g, s);
                if h != NONE && !seen.contains_key(&h) {
                    seen.insert(h, d + 1);
                    nodes.push((h, head, s));
                }
            }
        }
        head += 1;
    }
    WordTree { nodes }
}

impl WordTree {
    /// `(γ, γ·p)` for every node, following generator steps from `p`.
    fn walk(&self, win: &CayleyWindow, p: u32) -> Vec<(u32, u32)> {
        let mut pos = vec![NONE; self.nodes.len()];
        pos[0] = p;
        for k in 1..self.nodes.len() {
            let (_, parent, slot) = self.nodes[k];
            pos[k] = if pos[parent] == NONE { NONE } else { win.neighbor_slot(pos[parent], slot) };
        }
        self.nodes.iter().zip(pos).map(|(n, q)| (n.0, q)).collect()
    }
}

/// For every `p` in the core and `γ ≠ e` with `|γ|_{G_r} ≤ r`, the depth-`s`
/// truncations at `γ·p` and `p` differ. Translates are computed by walking
/// generator words, independently of the window's offset tables.
pub fn bernoulli_freeness_witness(win: &CayleyWindow, lab: &Labeling, r: u64, s: usize) -> Result<Certificate> {
    let mut cert = Certificate::new("bernoulli_freeness").with_core(lab.core);
    cert.measure("r", r);
    cert.measure("depth", s);
    if r == 0 {
        return Ok(cert);
    }
    let level = level_for(win, r)?;
    let tree = word_tree(win, r, level);
    let n = partition(win, lab.core.min(win.radius)) as u32;
    let mut checked = 0u64;
    'scan: for p in 0..n {
        for (gamma, q) in tree.walk(win, p).into_iter().skip(1) {
            if q == NONE || q >= n {
                continue;
            }
            checked += 1;
            if lab.same_truncated(q, lab, p, s) {
                cert.fail(
                    format!("translate agrees with the original up to depth {s}"),
                    vec![win.encode(p), win.encode(gamma)],
                );
                break 'scan;
            }
        }
    }
    cert.measure("pairs", checked);
    Ok(cert)
}
