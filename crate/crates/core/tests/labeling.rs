use forge_core::ball::extract_ball;
use forge_core::labeling::{digit_spread, initial_clean_labeling, verify_clean, CInit, LabelingConfig, Q};
use forge_core::schedule::{required_window, scaled_schedule, ScaledConfig};
use forge_core::{CayleyWindow, GeneratorSystem, Labeling, ScaledSchedule};

fn integers(stages: usize, depth: usize, cfg: ScaledConfig) -> (CayleyWindow, ScaledSchedule, Labeling) {
    let gs = GeneratorSystem::integers();
    let sch = scaled_schedule(&gs, stages, &cfg, &[]).unwrap();
    let r = required_window(&sch, stages.max(2));
    let win = CayleyWindow::new(&gs, r, sch.f(depth)).unwrap();
    let lab = initial_clean_labeling(&win, &sch, &LabelingConfig::new(depth)).unwrap();
    (win, sch, lab)
}

#[test]
fn initial_labeling_on_integers_is_clean() {
    let (win, sch, lab) = integers(2, 2, ScaledConfig::default());
    let cert = verify_clean(&win, &sch, &lab, true);
    assert!(cert.pass, "{:#?}", cert.failures());
    assert!(lab.strict);
}

#[test]
fn initial_labelings_on_other_groups_are_clean() {
    for gs in [GeneratorSystem::lattice(2), GeneratorSystem::free(2)] {
        let sch = scaled_schedule(&gs, 1, &ScaledConfig::default(), &[]).unwrap();
        let win = CayleyWindow::new(&gs, 40, sch.f(1)).unwrap();
        let lab = initial_clean_labeling(&win, &sch, &LabelingConfig::new(1)).unwrap();
        let cert = verify_clean(&win, &sch, &lab, true);
        assert!(cert.pass, "{:?}: {:#?}", gs.backend, cert.failures());
    }
}

#[test]
fn no_marker_near_the_identity() {
    let (win, sch, lab) = integers(2, 2, ScaledConfig::default());
    for m in 1..=2 {
        for x in lab.q_set(m) {
            assert!(win.encode(x)[0].unsigned_abs() > 10 * sch.s(m), "q_{m} at {:?}", win.encode(x));
        }
    }
}

#[test]
fn first_layer_markers_follow_the_greedy_simulation() {
    let cfg = ScaledConfig { s1: 2, ..ScaledConfig::default() };
    let (win, sch, lab) = integers(2, 1, cfg);
    let (s, r) = (sch.s(1) as i64, sch.r(1) as i64);
    // visit in window order, accept x when |x| > 10 s and nothing accepted is within r
    let mut accepted: Vec<i64> = Vec::new();
    for i in 0..win.len() as u32 {
        let x = win.encode(i)[0];
        if x.abs() > 10 * s && accepted.iter().all(|a| (a - x).abs() > r) {
            accepted.push(x);
        }
    }
    accepted.sort_unstable();
    let mut got: Vec<i64> = lab.q_set(1).into_iter().map(|x| win.encode(x)[0]).collect();
    got.sort_unstable();
    assert_eq!(got, accepted);
    // away from the window edge the markers are evenly spaced by r + 1
    let right: Vec<i64> = got.iter().copied().filter(|&x| x > 0).take(20).collect();
    assert_eq!(right[0], 10 * s + 1);
    assert!(right.windows(2).all(|w| w[1] - w[0] == r + 1));
}

#[test]
fn equal_neighbor_labels_break_condition_three() {
    let (win, sch, mut lab) = integers(2, 1, ScaledConfig::default());
    let (a, b) = (
        win.index_of(&forge_core::Element::Lattice(vec![3])).unwrap(),
        win.index_of(&forge_core::Element::Lattice(vec![4])).unwrap(),
    );
    lab.layers[0][b as usize] = lab.label(1, a);
    let cert = verify_clean(&win, &sch, &lab, false);
    assert!(!cert.pass);
    let failed = cert.failures();
    let proper = failed.iter().find(|c| c.name == "layer_proper").unwrap();
    assert_eq!(proper.witnesses[0].elements.len(), 2);
}

#[test]
fn marker_at_the_identity_breaks_condition_four_only() {
    let (win, sch, lab) = integers(2, 1, ScaledConfig::default());
    // translate so that the first positive marker sits at e
    let q0 = lab.q_set(1).into_iter().map(|x| win.encode(x)[0]).filter(|&x| x > 0).min().unwrap();
    let mut moved = lab.clone();
    for i in 0..win.len() as u32 {
        let x = win.encode(i)[0];
        if let Some(j) = win.index_of(&forge_core::Element::Lattice(vec![x + q0])) {
            moved.layers[0][i as usize] = lab.label(1, j);
        }
    }
    moved.core = lab.core - q0 as u64 - 2 * sch.r(1);
    assert_eq!(moved.label(1, 0), Q);
    assert!(verify_clean(&win, &sch, &moved, false).pass);
    let cert = verify_clean(&win, &sch, &moved, true);
    assert!(!cert.pass);
    let names: Vec<&str> = cert.failures().iter().map(|c| c.name.as_str()).filter(|n| *n != "clean").collect();
    assert_eq!(names, ["marker_away_from_e"]);
}

#[test]
fn condition_three_separates_truncations() {
    let (win, sch, lab) = integers(2, 2, ScaledConfig::default());
    for m in 1..=2 {
        let r = sch.r(m) as i64;
        for i in (0..win.len() as u32).filter(|&i| win.dist_e(i) + r as u64 <= lab.core).step_by(97) {
            let x = win.encode(i)[0];
            for d in 1..=r {
                let j = win.index_of(&forge_core::Element::Lattice(vec![x + d])).unwrap();
                assert!(!lab.same_truncated(i, &lab, j, m));
                assert!(lab.separation_depth(i, j).is_some_and(|s| s <= m));
            }
        }
    }
}

#[test]
fn c_policies() {
    let gs = GeneratorSystem::integers();
    let sch = scaled_schedule(&gs, 1, &ScaledConfig::default(), &[]).unwrap();
    let win = CayleyWindow::new(&gs, 200, 1).unwrap();
    let build = |c_init| {
        let cfg = LabelingConfig { depth: 1, c_depth: 8, c_init };
        initial_clean_labeling(&win, &sch, &cfg).unwrap()
    };
    assert!(build(CInit::Zero).c.iter().all(|&c| c == 0));
    let spread = build(CInit::DigitSpread { seed: 0b0110 });
    assert!(spread.c.iter().all(|&c| c == 52));
    let hashed = build(CInit::ElementHash);
    assert!(hashed.c.iter().all(|&c| c < 256));
    assert!(hashed.c.iter().any(|&c| c != hashed.c[0]));
    assert_eq!(hashed, build(CInit::ElementHash));
}

#[test]
fn digit_spreading() {
    // y_1..y_8 = x_1 x_1 x_2 x_1 x_2 x_3 x_4 x_1
    let oracle = |seed: u64| {
        let x = |k: u64| (seed >> (k - 1)) & 1;
        [1, 1, 2, 1, 2, 3, 4, 1].iter().enumerate().fold(0u64, |y, (a, &k)| y | x(k) << a)
    };
    for seed in 0..16 {
        assert_eq!(digit_spread(seed, 8), oracle(seed));
    }
    assert_eq!(digit_spread(0b0110, 8), 52);
    assert_eq!(digit_spread(1, 64).count_ones(), 7);
}

#[test]
fn bad_configurations() {
    let gs = GeneratorSystem::integers();
    let sch = scaled_schedule(&gs, 2, &ScaledConfig::default(), &[]).unwrap();
    let win = CayleyWindow::new(&gs, 50, 1).unwrap();
    assert!(initial_clean_labeling(&win, &sch, &LabelingConfig::new(0)).is_err());
    assert!(initial_clean_labeling(&win, &sch, &LabelingConfig::new(3)).is_err());
    let cfg = LabelingConfig { depth: 2, c_depth: 1, c_init: CInit::Zero };
    assert!(initial_clean_labeling(&win, &sch, &cfg).is_err());
    // no room for layer-1 markers beyond 10 s_1
    let tiny = CayleyWindow::new(&gs, 5, 1).unwrap();
    assert!(initial_clean_labeling(&tiny, &sch, &LabelingConfig::new(1)).is_err());
}

#[test]
fn extraction_is_deterministic_and_truncation_coherent() {
    let (win, sch, lab) = integers(2, 2, ScaledConfig::default());
    let z = lab.q_set(2)[0];
    let t = sch.s(2);
    let a = extract_ball(&win, &lab, z, t, 1, 2).unwrap();
    assert_eq!(a, extract_ball(&win, &lab, z, t, 1, 2).unwrap());
    let b = extract_ball(&win, &lab, z, t, 1, 1).unwrap();
    assert_eq!(a.len(), b.len());
    for i in 0..a.len() {
        assert_eq!(a.labels[i * 2], b.labels[i]);
        assert_eq!(a.c[i] & 1, b.c[i]);
    }
    let single = extract_ball(&win, &lab, z, 0, 1, 2).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single.labels, vec![Q, Q]);
}
