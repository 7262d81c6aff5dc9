//! Group backends, canonical elements and ordered generator systems.
//!
//! Convention: the Cayley graph is the *left* one. `(p, q)` is a level-`r`
//! edge iff `σ_i p = q` or `σ_i q = p` for some `i <= r`, so
//! `d(p, q) = |q p⁻¹|` and right multiplication is an isometry.

use crate::count::{binomial, c, checked_pow, Count};
use crate::error::{ForgeError, Result};
use serde::{Deserialize, Serialize};

/// A group element in canonical form.
///
/// Free-group words are stored reduced, letter `g` (1-based) as `+g` and its
/// inverse as `-g`, applied right to left: `[a, b]` is `a·b`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    Lattice(Vec<i64>),
    Word(Vec<i32>),
    Bits(u64),
    Table(u32),
}

impl Element {
    /// Canonical JSON encoding: coordinates, letters, a bitmask or a table id.
    pub fn encode(&self) -> Vec<i64> {
        match self {
            Element::Lattice(v) => v.clone(),
            Element::Word(w) => w.iter().map(|&l| i64::from(l)).collect(),
            Element::Bits(b) => vec![*b as i64],
            Element::Table(t) => vec![i64::from(*t)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Lattice {
        dim: usize,
    },
    Free {
        rank: usize,
    },
    Bits {
        width: u32,
    },
    /// Finite group given by its multiplication table; element 0 is the identity.
    Table {
        mul: Vec<Vec<u32>>,
    },
}

impl Backend {
    pub fn identity(&self) -> Element {
        match self {
            Backend::Lattice { dim } => Element::Lattice(vec![0; *dim]),
            Backend::Free { .. } => Element::Word(Vec::new()),
            Backend::Bits { .. } => Element::Bits(0),
            Backend::Table { .. } => Element::Table(0),
        }
    }

    pub fn mul(&self, a: &Element, b: &Element) -> Element {
        match (self, a, b) {
            (Backend::Lattice { .. }, Element::Lattice(x), Element::Lattice(y)) => {
                Element::Lattice(x.iter().zip(y).map(|(p, q)| p + q).collect())
            }
            (Backend::Free { .. }, Element::Word(x), Element::Word(y)) => {
                let mut out = x.clone();
                for &l in y {
                    if out.last() == Some(&-l) {
                        out.pop();
                    } else {
                        out.push(l);
                    }
                }
                Element::Word(out)
            }
            (Backend::Bits { .. }, Element::Bits(x), Element::Bits(y)) => Element::Bits(x ^ y),
            (Backend::Table { mul }, Element::Table(x), Element::Table(y)) => {
                Element::Table(mul[*x as usize][*y as usize])
            }
            _ => panic!("element does not belong to backend"),
        }
    }

    pub fn inv(&self, a: &Element) -> Element {
        match (self, a) {
            (Backend::Lattice { .. }, Element::Lattice(x)) => Element::Lattice(x.iter().map(|p| -p).collect()),
            (Backend::Free { .. }, Element::Word(x)) => Element::Word(x.iter().rev().map(|l| -l).collect()),
            (Backend::Bits { .. }, Element::Bits(x)) => Element::Bits(*x),
            (Backend::Table { mul }, Element::Table(x)) => {
                let row = &mul[*x as usize];
                let inv = row.iter().position(|&v| v == 0).expect("table is a group");
                Element::Table(inv as u32)
            }
            _ => panic!("element does not belong to backend"),
        }
    }

    pub fn is_abelian(&self) -> bool {
        match self {
            Backend::Lattice { .. } | Backend::Bits { .. } => true,
            Backend::Free { rank } => *rank <= 1,
            Backend::Table { mul } => {
                let n = mul.len();
                (0..n).all(|i| (0..n).all(|j| mul[i][j] == mul[j][i]))
            }
        }
    }

    pub fn decode(&self, raw: &[i64]) -> Result<Element> {
        let bad = || ForgeError::Snapshot(format!("cannot decode element {raw:?}"));
        match self {
            Backend::Lattice { dim } => {
                if raw.len() != *dim {
                    return Err(bad());
                }
                Ok(Element::Lattice(raw.to_vec()))
            }
            Backend::Free { rank } => {
                let mut w = Vec::with_capacity(raw.len());
                for &l in raw {
                    if l == 0 || l.unsigned_abs() as usize > *rank {
                        return Err(bad());
                    }
                    w.push(l as i32);
                }
                Ok(self.mul(&self.identity(), &Element::Word(w)))
            }
            Backend::Bits { width } => match raw {
                [b] if *width >= 64 || (*b as u64) >> width == 0 => Ok(Element::Bits(*b as u64)),
                _ => Err(bad()),
            },
            Backend::Table { mul } => match raw {
                [t] if (*t as usize) < mul.len() && *t >= 0 => Ok(Element::Table(*t as u32)),
                _ => Err(bad()),
            },
        }
    }

    /// `true` for backends whose word metric balls are geodesically convex
    /// under standard generators (lattices, trees, hypercubes).
    fn convex_family(&self) -> bool {
        !matches!(self, Backend::Table { .. })
    }
}

/// Group order, possibly infinite.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Order<N> {
    Finite(N),
    Infinite,
}

/// Ordered generators `σ_1, σ_2, …`; the list is eventually constant, so
/// `σ_i` for `i` past the end repeats the last entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSystem {
    pub backend: Backend,
    #[serde(with = "gens_serde")]
    pub generators: Vec<Element>,
}

mod gens_serde {
    use super::Element;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(g: &[Element], s: S) -> Result<S::Ok, S::Error> {
        g.iter().map(Element::encode).collect::<Vec<_>>().serialize(s)
    }

    // Decoding needs the backend, so raw vectors are parked as lattice points and
    // fixed up in `GeneratorSystem::from_json`.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Element>, D::Error> {
        let raw = Vec::<Vec<i64>>::deserialize(d)?;
        Ok(raw.into_iter().map(Element::Lattice).collect())
    }
}

impl GeneratorSystem {
    pub fn new(backend: Backend, generators: Vec<Element>) -> Result<Self> {
        if generators.is_empty() {
            return Err(ForgeError::Config("generator list is empty".into()));
        }
        let gs = GeneratorSystem { backend, generators };
        for g in &gs.generators {
            gs.check_member(g)?;
        }
        Ok(gs)
    }

    fn check_member(&self, g: &Element) -> Result<()> {
        let ok = match (&self.backend, g) {
            (Backend::Lattice { dim }, Element::Lattice(v)) => v.len() == *dim,
            (Backend::Free { rank }, Element::Word(w)) => {
                w.iter().all(|l| *l != 0 && l.unsigned_abs() as usize <= *rank)
            }
            (Backend::Bits { width }, Element::Bits(b)) => *width >= 64 || b >> width == 0,
            (Backend::Table { mul }, Element::Table(t)) => (*t as usize) < mul.len(),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(ForgeError::Config(format!("generator {g:?} does not belong to the backend")))
        }
    }

    /// Re-decode generators after a raw JSON load.
    pub fn from_json(value: &str) -> Result<Self> {
        let raw: GeneratorSystem = serde_json::from_str(value).map_err(|e| ForgeError::Config(e.to_string()))?;
        let gens = raw
            .generators
            .iter()
            .map(|g| match g {
                Element::Lattice(v) => raw.backend.decode(v),
                _ => unreachable!(),
            })
            .collect::<Result<Vec<_>>>()?;
        GeneratorSystem::new(raw.backend, gens)
    }

    /// ℤ with `σ_i = 1` for every `i`.
    pub fn integers() -> Self {
        GeneratorSystem::new(Backend::Lattice { dim: 1 }, vec![Element::Lattice(vec![1])]).unwrap()
    }

    /// ℤ^d with the standard basis, then constant.
    pub fn lattice(dim: usize) -> Self {
        let gens = (0..dim)
            .map(|a| {
                let mut v = vec![0; dim];
                v[a] = 1;
                Element::Lattice(v)
            })
            .collect();
        GeneratorSystem::new(Backend::Lattice { dim }, gens).unwrap()
    }

    /// Free group on `rank` letters with its free basis.
    pub fn free(rank: usize) -> Self {
        let gens = (1..=rank as i32).map(|g| Element::Word(vec![g])).collect();
        GeneratorSystem::new(Backend::Free { rank }, gens).unwrap()
    }

    /// ⊕ℤ/2 truncated to `width` coordinates with `σ_i = e_i`.
    pub fn bits(width: u32) -> Self {
        let gens = (0..width).map(|i| Element::Bits(1 << i)).collect();
        GeneratorSystem::new(Backend::Bits { width }, gens).unwrap()
    }

    pub fn identity(&self) -> Element {
        self.backend.identity()
    }

    pub fn mul(&self, a: &Element, b: &Element) -> Element {
        self.backend.mul(a, b)
    }

    pub fn inv(&self, a: &Element) -> Element {
        self.backend.inv(a)
    }

    /// `σ_i`, 1-based.
    pub fn sigma(&self, i: usize) -> &Element {
        assert!(i >= 1, "generators are 1-based");
        &self.generators[(i - 1).min(self.generators.len() - 1)]
    }

    /// Distinct generators up to inversion, in order of first appearance, with
    /// for each the first level at which it is active.
    pub fn distinct(&self) -> Vec<(Element, usize)> {
        let id = self.identity();
        let mut out: Vec<(Element, usize)> = Vec::new();
        for (i, g) in self.generators.iter().enumerate() {
            if *g == id {
                continue;
            }
            let gi = self.inv(g);
            if out.iter().any(|(h, _)| h == g || *h == gi) {
                continue;
            }
            out.push((g.clone(), i + 1));
        }
        out
    }

    /// Number of distinct generators active at `level`.
    pub fn active_count(&self, level: usize) -> usize {
        self.distinct().iter().filter(|(_, l)| *l <= level).count()
    }

    /// If the distinct generators active at `level` are standard basis
    /// elements (unit vectors, single letters, single bits), their number.
    /// Closed-form counts are available exactly in this case.
    pub fn standard_rank(&self, level: usize) -> Option<usize> {
        let active: Vec<Element> = self.distinct().into_iter().filter(|(_, l)| *l <= level).map(|(g, _)| g).collect();
        let standard = active.iter().all(|g| match g {
            Element::Lattice(v) => v.iter().filter(|x| **x != 0).count() == 1 && v.iter().all(|x| x.abs() <= 1),
            Element::Word(w) => w.len() == 1,
            Element::Bits(b) => b.count_ones() == 1,
            Element::Table(_) => false,
        });
        standard.then_some(active.len())
    }

    /// Whether balls of the level-`level` word metric are geodesically convex,
    /// so window distances are exact everywhere inside the window.
    pub fn convex_at(&self, level: usize) -> bool {
        self.backend.convex_family() && self.standard_rank(level).is_some()
    }

    fn level_for<N: Count>(&self, level: &N) -> usize {
        let cap = self.generators.len();
        match level.to_usize() {
            Some(l) if l < cap => l,
            _ => cap,
        }
    }

    /// |B_t(G_level, e)| in closed form; `None` when no closed form applies or
    /// the value overflows `N`.
    pub fn ball_size<N: Count>(&self, level: &N, t: &N) -> Option<N> {
        let k = self.standard_rank(self.level_for(level))?;
        match &self.backend {
            Backend::Lattice { .. } => {
                // Σ_i 2^i C(k,i) C(t,i)
                let mut acc = N::zero();
                for i in 0..=k as u64 {
                    let term = checked_pow(&c::<N>(2), i)?
                        .checked_mul(&binomial(&c::<N>(k as u64), i)?)?
                        .checked_mul(&binomial(t, i)?)?;
                    acc = acc.checked_add(&term)?;
                }
                Some(acc)
            }
            Backend::Free { .. } => {
                if k == 0 {
                    return Some(N::one());
                }
                if k == 1 {
                    return t.checked_mul(&c(2))?.checked_add(&N::one());
                }
                let tt = t.to_u64()?;
                let q = c::<N>(2 * k as u64 - 1);
                let p = checked_pow(&q, tt)?;
                // 1 + 2k((2k-1)^t - 1)/(2k-2)
                let num = (p - N::one()).checked_mul(&c(2 * k as u64))?;
                Some(num / c(2 * k as u64 - 2) + N::one())
            }
            Backend::Bits { .. } => {
                let mut acc = N::zero();
                for i in 0..=k as u64 {
                    if c::<N>(i) > *t {
                        break;
                    }
                    acc = acc.checked_add(&binomial(&c::<N>(k as u64), i)?)?;
                }
                Some(acc)
            }
            Backend::Table { .. } => None,
        }
    }

    /// |Γ_level| in closed form.
    pub fn subgroup_order<N: Count>(&self, level: &N) -> Option<Order<N>> {
        let l = self.level_for(level);
        let k = self.active_count(l);
        match &self.backend {
            Backend::Lattice { .. } | Backend::Free { .. } => {
                Some(if k == 0 { Order::Finite(N::one()) } else { Order::Infinite })
            }
            Backend::Bits { .. } => {
                let r = self.standard_rank(l)?;
                Some(Order::Finite(checked_pow(&c::<N>(2), r as u64)?))
            }
            Backend::Table { mul } => {
                // closure of the active generators
                let gens: Vec<u32> = self
                    .distinct()
                    .into_iter()
                    .filter(|(_, lv)| *lv <= l)
                    .map(|(g, _)| match g {
                        Element::Table(t) => t,
                        _ => unreachable!(),
                    })
                    .collect();
                let mut seen = vec![false; mul.len()];
                seen[0] = true;
                let mut stack = vec![0u32];
                while let Some(x) = stack.pop() {
                    for &g in &gens {
                        let y = mul[g as usize][x as usize];
                        if !seen[y as usize] {
                            seen[y as usize] = true;
                            stack.push(y);
                        }
                    }
                }
                Some(Order::Finite(c(seen.iter().filter(|s| **s).count() as u64)))
            }
        }
    }

    /// Closed-form `n_T`: least level whose subgroup has an element at distance ≥ T.
    pub fn far_point_closed_form<N: Count>(&self, t: &N) -> Option<N> {
        let len = self.generators.len();
        for n in 1..=len {
            match self.subgroup_order::<N>(&c(n as u64))? {
                Order::Infinite => return Some(c(n as u64)),
                Order::Finite(_) => {
                    // hypercube of rank k has diameter k
                    let k = self.standard_rank(n)?;
                    if matches!(self.backend, Backend::Bits { .. }) && c::<N>(k as u64) >= *t {
                        return Some(c(n as u64));
                    }
                }
            }
        }
        // past the list the system is constant: no further growth
        let _ = t;
        None
    }

    /// Exact word-metric distance without a search, for standard generators.
    /// `None` when no closed form applies; `Some(u64::MAX)` for different
    /// components.
    pub fn closed_distance(&self, a: &Element, b: &Element, level: usize) -> Option<u64> {
        self.standard_rank(level)?;
        let active: Vec<Element> = self.distinct().into_iter().filter(|(_, l)| *l <= level).map(|(g, _)| g).collect();
        match (a, b) {
            (Element::Lattice(x), Element::Lattice(y)) => {
                let mut axes = vec![false; x.len()];
                for g in &active {
                    if let Element::Lattice(v) = g {
                        axes[v.iter().position(|q| *q != 0).unwrap()] = true;
                    }
                }
                let mut d = 0u64;
                for (i, (p, q)) in x.iter().zip(y).enumerate() {
                    if p != q {
                        if !axes[i] {
                            return Some(u64::MAX);
                        }
                        d += p.abs_diff(*q);
                    }
                }
                Some(d)
            }
            (Element::Word(_), Element::Word(_)) => {
                let rel = self.mul(b, &self.inv(a));
                let Element::Word(w) = rel else { unreachable!() };
                let ok =
                    w.iter().all(|l| active.iter().any(|g| matches!(g, Element::Word(v) if v[0].abs() == l.abs())));
                Some(if ok { w.len() as u64 } else { u64::MAX })
            }
            (Element::Bits(x), Element::Bits(y)) => {
                let mask = active.iter().fold(0u64, |m, g| match g {
                    Element::Bits(v) => m | v,
                    _ => m,
                });
                let diff = x ^ y;
                Some(if diff & !mask == 0 { u64::from(diff.count_ones()) } else { u64::MAX })
            }
            _ => None,
        }
    }
}

/// Parse a compact group spec: `z`, `z2`, `zd:3`, `free:2`, `bits:8`.
pub fn parse_group(spec: &str) -> Result<GeneratorSystem> {
    let s = spec.trim().to_ascii_lowercase();
    let bad = || ForgeError::Config(format!("unknown group spec `{spec}`"));
    if s == "z" {
        return Ok(GeneratorSystem::integers());
    }
    if let Some(d) = s.strip_prefix("zd:") {
        return Ok(GeneratorSystem::lattice(d.parse().map_err(|_| bad())?));
    }
    if let Some(d) = s.strip_prefix('z') {
        return Ok(GeneratorSystem::lattice(d.parse().map_err(|_| bad())?));
    }
    if let Some(k) = s.strip_prefix("free:").or_else(|| s.strip_prefix('f')) {
        return Ok(GeneratorSystem::free(k.parse().map_err(|_| bad())?));
    }
    if let Some(w) = s.strip_prefix("bits:") {
        let w: u32 = w.parse().map_err(|_| bad())?;
        if w == 0 || w > 64 {
            return Err(bad());
        }
        return Ok(GeneratorSystem::bits(w));
    }
    Err(bad())
}
