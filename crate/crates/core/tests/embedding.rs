mod common;

use common::gr_distance;
use forge_core::embedding::{
    bernoulli_freeness_witness, check_coloring, check_psi, deinterleave, interleave, proper_coloring, psi, psi_pattern,
    Separating,
};
use forge_core::{CayleyWindow, Element, ForgeError, GeneratorSystem, Labeling};
use proptest::prelude::*;

fn windows() -> Vec<CayleyWindow> {
    vec![
        CayleyWindow::new(&GeneratorSystem::integers(), 40, 5).unwrap(),
        CayleyWindow::new(&GeneratorSystem::lattice(2), 12, 5).unwrap(),
        CayleyWindow::new(&GeneratorSystem::free(2), 5, 5).unwrap(),
    ]
}

#[test]
fn colorings_are_proper_against_the_oracle() {
    for win in windows() {
        let pc = proper_coloring(&win, 5).unwrap();
        assert!(check_coloring(&win, &pc).unwrap().pass);
        let n = win.len() as u32;
        for r in 1..=5u64 {
            let col = &pc.colors[r as usize - 1];
            let w = pc.widths[r as usize - 1];
            for a in 0..n {
                assert!(u64::from(col[a as usize]) < 1 << w);
                for b in a + 1..n {
                    if gr_distance(&win, a, b, r).is_some_and(|d| d <= r) {
                        assert_ne!(
                            col[a as usize],
                            col[b as usize],
                            "r = {r}: {:?} {:?}",
                            win.encode(a),
                            win.encode(b)
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn greedy_uses_at_most_ball_size_colors() {
    for win in windows() {
        let pc = proper_coloring(&win, 3).unwrap();
        for r in 1..=3u64 {
            let ball = (0..win.len() as u32).filter(|&x| win.dist_e(x) <= r).count() as u64;
            let used = pc.colors[r as usize - 1].iter().max().unwrap() + 1;
            assert!(u64::from(used) <= ball);
        }
    }
    // on ℤ greedy in the order 0, 1, -1, 2, … needs two colors at r = 1
    // and three at r = 2
    let pc = proper_coloring(&windows()[0], 2).unwrap();
    assert_eq!(pc.colors[1].iter().max(), Some(&2));
    assert_eq!(pc.widths, vec![1, 2]);
    assert_eq!(pc.width(), 3);
}

#[test]
fn single_element_window() {
    let win = CayleyWindow::new(&GeneratorSystem::integers(), 0, 1).unwrap();
    let pc = proper_coloring(&win, 3).unwrap();
    assert_eq!(pc.widths, vec![0, 0, 0]);
    assert!(check_coloring(&win, &pc).unwrap().pass);
    let sep = Separating::new(&win);
    assert!(check_psi(&win, &pc, &sep).unwrap().pass);
}

#[test]
fn interleaving() {
    let (a, b) = ([true, false, true], [false, false, false]);
    assert_eq!(interleave(&a, &b).unwrap(), [true, false, false, false, true, false]);
    assert_eq!(interleave(&a, &b[..2]).unwrap_err(), ForgeError::DepthMismatch(3, 2));
    assert!(deinterleave(&[true, false, true]).is_err());
}

#[test]
fn codes_separate_and_keep_the_coloring() {
    for win in windows() {
        let pc = proper_coloring(&win, 3).unwrap();
        let sep = Separating::new(&win);
        assert!(check_psi(&win, &pc, &sep).unwrap().pass);
        let mut codes: Vec<Vec<bool>> = (0..win.len() as u32).map(|x| psi(&win, &pc, &sep, x)).collect();
        let depth = 2 * pc.width().max(sep.depth());
        assert!(codes.iter().all(|c| c.len() == depth));
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), win.len());
    }
}

#[test]
fn pattern_export() {
    let win = CayleyWindow::new(&GeneratorSystem::lattice(2), 8, 2).unwrap();
    let pc = proper_coloring(&win, 2).unwrap();
    let sep = Separating::new(&win);
    let v = psi_pattern(&win, &pc, &sep, 0, 2).unwrap();
    let pattern = v["pattern"].as_array().unwrap();
    assert_eq!(pattern.len(), 13);
    assert_eq!(pattern[0]["gamma"], serde_json::json!([0, 0]));
    let bits: String = psi(&win, &pc, &sep, 0).iter().map(|&b| if b { '1' } else { '0' }).collect();
    assert_eq!(pattern[0]["bits"], bits);
    let edge = win.index_of(&Element::Lattice(vec![7, 0])).unwrap();
    assert!(psi_pattern(&win, &pc, &sep, edge, 2).is_err());
}

#[test]
fn freeness_witness_depth() {
    let win = CayleyWindow::new(&GeneratorSystem::integers(), 60, 5).unwrap();
    let n = win.len();
    let pc = proper_coloring(&win, 3).unwrap();
    // one layer per color block, so depth k of the labeling is block k
    let lab = Labeling { c_depth: 3, c: vec![0; n], layers: pc.colors.clone(), stage: 1, core: 50, strict: false };
    for r in 1..=3 {
        assert!(bernoulli_freeness_witness(&win, &lab, r, r as usize).unwrap().pass, "r = {r}");
    }
    // block 1 alone does not separate points two apart
    let cert = bernoulli_freeness_witness(&win, &lab, 2, 1).unwrap();
    assert!(!cert.pass);
    let constant = Labeling { layers: vec![vec![1; n]], c_depth: 1, ..lab };
    assert!(!bernoulli_freeness_witness(&win, &constant, 1, 1).unwrap().pass);
}

proptest! {
    #[test]
    fn deinterleave_inverts_interleave(bits in prop::collection::vec(any::<(bool, bool)>(), 0..64)) {
        let (a, b): (Vec<bool>, Vec<bool>) = bits.into_iter().unzip();
        let c = interleave(&a, &b).unwrap();
        prop_assert_eq!(deinterleave(&c).unwrap(), (a, b));
    }
}
