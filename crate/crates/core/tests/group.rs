use forge_core::group::Order;
use forge_core::window::ball_size_enumerated;
use forge_core::{far_point_index, parse_group, validate_generator_chain, CayleyWindow, Element, GeneratorSystem};
use num_bigint::BigUint;
use proptest::prelude::*;

/// Free reduction of `b a⁻¹` computed letter by letter.
fn word_dist(a: &[i32], b: &[i32]) -> u64 {
    let mut w: Vec<i32> = b.to_vec();
    for l in a.iter().rev().map(|l| -l) {
        if w.last() == Some(&-l) {
            w.pop();
        } else {
            w.push(l);
        }
    }
    w.len() as u64
}

#[test]
fn ball_sizes_match_hand_counts() {
    let z = GeneratorSystem::integers();
    let z2 = GeneratorSystem::lattice(2);
    let f2 = GeneratorSystem::free(2);
    let b3 = GeneratorSystem::bits(3);
    for t in 0..8u64 {
        assert_eq!(z.ball_size::<u64>(&1, &t), Some(2 * t + 1));
        assert_eq!(z2.ball_size::<u64>(&2, &t), Some(2 * t * t + 2 * t + 1));
        assert_eq!(z2.ball_size::<u64>(&1, &t), Some(2 * t + 1));
        assert_eq!(f2.ball_size::<u64>(&2, &t), Some(2 * 3u64.pow(t as u32) - 1));
        let cube: u64 = [1, 3, 3, 1].iter().take(t as usize + 1).sum();
        assert_eq!(b3.ball_size::<u64>(&3, &t), Some(cube));
    }
}

#[test]
fn window_sizes_agree_with_closed_forms() {
    for (gs, level) in [
        (GeneratorSystem::integers(), 1),
        (GeneratorSystem::lattice(2), 2),
        (GeneratorSystem::lattice(3), 3),
        (GeneratorSystem::free(2), 2),
        (GeneratorSystem::bits(4), 4),
    ] {
        for t in 0..6u64 {
            let n = ball_size_enumerated(&gs, level, t, 1 << 20).unwrap();
            assert_eq!(Some(n), gs.ball_size::<u64>(&(level as u64), &t), "{:?} t={t}", gs.backend);
        }
    }
}

#[test]
fn big_integer_counts_do_not_overflow() {
    let f2 = GeneratorSystem::free(2);
    let n = f2.ball_size::<BigUint>(&BigUint::from(2u32), &BigUint::from(100u32)).unwrap();
    assert_eq!(n, BigUint::from(3u32).pow(100) * 2u32 - 1u32);
    assert_eq!(f2.ball_size::<u64>(&2, &100), None);
}

#[test]
fn subgroup_orders() {
    assert_eq!(GeneratorSystem::integers().subgroup_order::<u64>(&1), Some(Order::Infinite));
    assert_eq!(GeneratorSystem::bits(5).subgroup_order::<u64>(&3), Some(Order::Finite(8)));
}

#[test]
fn identity_comes_first_and_indices_are_shortlex_by_distance() {
    let win = CayleyWindow::new(&GeneratorSystem::lattice(2), 6, 2).unwrap();
    assert_eq!(win.element(0), Element::Lattice(vec![0, 0]));
    for i in 1..win.len() as u32 {
        assert!(win.dist_e(i - 1) <= win.dist_e(i));
        let c = win.encode(i);
        assert_eq!(win.dist_e(i), (c[0].abs() + c[1].abs()) as u64);
    }
}

#[test]
fn ball_escaping_the_window_is_an_error() {
    let win = CayleyWindow::new(&GeneratorSystem::integers(), 10, 1).unwrap();
    let x = win.index_of(&Element::Lattice(vec![8])).unwrap();
    assert!(win.ball_idx(x, 2, 1).is_ok());
    assert!(win.ball_idx(x, 3, 1).is_err());
    assert!(win.ball(&Element::Lattice(vec![11]), 0, 1).is_err());
}

#[test]
fn generator_chains() {
    for spec in ["z", "z2", "free:2", "bits:4"] {
        let gs = parse_group(spec).unwrap();
        let depth = gs.generators.len().max(2);
        let win = CayleyWindow::new(&gs, 4, depth).unwrap();
        let cert = validate_generator_chain(&win, depth).unwrap();
        assert!(cert.pass, "{spec}: {:?}", cert.failures());
    }
}

#[test]
fn repeated_generator_breaks_the_chain() {
    let gs = GeneratorSystem::new(
        forge_core::Backend::Lattice { dim: 2 },
        vec![Element::Lattice(vec![1, 0]), Element::Lattice(vec![2, 0]), Element::Lattice(vec![0, 1])],
    )
    .unwrap();
    // σ_2 = 2σ_1 already lies in Γ_1 = ⟨σ_1⟩ ≠ Γ
    let win = CayleyWindow::new(&gs, 6, 3).unwrap();
    let cert = validate_generator_chain(&win, 2).unwrap();
    assert!(!cert.pass);
    assert!(!cert.failures()[0].witnesses.is_empty());
}

#[test]
fn far_points() {
    assert_eq!(far_point_index(&GeneratorSystem::integers(), 5, 3).unwrap().0, 1);
    // the hypercube of rank k has diameter k
    let (n, _) = far_point_index(&GeneratorSystem::bits(6), 4, 6).unwrap();
    assert_eq!(n, 4);
    assert!(far_point_index(&GeneratorSystem::bits(2), 4, 8).is_err());
    assert_eq!(GeneratorSystem::bits(6).far_point_closed_form::<u64>(&4), Some(4));
}

#[test]
fn group_specs() {
    assert!(parse_group("z").is_ok());
    assert!(parse_group("zd:3").is_ok());
    assert!(parse_group("bits:0").is_err());
    assert!(parse_group("hyperbolic").is_err());
}

fn arb_free_window() -> CayleyWindow {
    CayleyWindow::new(&GeneratorSystem::free(2), 5, 2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lattice_distance_is_l1(a in 0u32..221, b in 0u32..221) {
        let win = CayleyWindow::new(&GeneratorSystem::lattice(2), 10, 2).unwrap();
        let (p, q) = (win.encode(a), win.encode(b));
        let l1 = (p[0] - q[0]).unsigned_abs() + (p[1] - q[1]).unsigned_abs();
        prop_assert_eq!(win.distance_idx(a, b, 2), Some(l1));
        // level 1 only moves along the first axis
        let l1_line = if p[1] == q[1] { Some((p[0] - q[0]).unsigned_abs()) } else { None };
        prop_assert_eq!(win.distance_idx(a, b, 1), l1_line);
    }

    #[test]
    fn free_distance_is_reduced_length(a in 0u32..485, b in 0u32..485) {
        let win = arb_free_window();
        let (Element::Word(p), Element::Word(q)) = (win.element(a), win.element(b)) else { unreachable!() };
        let d = win.distance_idx(a, b, 2).unwrap();
        prop_assert_eq!(d, word_dist(&p, &q));
        prop_assert_eq!(win.gs.closed_distance(&win.element(a), &win.element(b), 2), Some(d));
    }

    #[test]
    fn right_translation_is_an_isometry(a in 0u32..41, b in 0u32..41, g in 0u32..41) {
        let win = CayleyWindow::new(&GeneratorSystem::free(2), 3, 2).unwrap();
        let gs = &win.gs;
        let (x, y, h) = (win.element(a), win.element(b), win.element(g));
        let d = gs.closed_distance(&x, &y, 2);
        prop_assert_eq!(d, gs.closed_distance(&gs.mul(&x, &h), &gs.mul(&y, &h), 2));
        prop_assert_eq!(gs.mul(&x, &gs.inv(&x)), gs.identity());
    }
}
