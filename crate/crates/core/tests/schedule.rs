use forge_core::schedule::{
    check_exact_rules, check_scaled, check_sites, exact_schedule, scaled_schedule, select_annulus_sites, ScaledConfig,
    SiteRule,
};
use forge_core::sparse::greedy_maximal_sparse;
use forge_core::{CayleyWindow, Element, ForgeError, GeneratorSystem};
use num_bigint::BigUint;

// Independent oracle: linear scans with the ℤ ball formula |B_t| = 2t + 1.
fn oracle_r1() -> u64 {
    let ball = |t: u64| 2 * t + 1;
    (1..).find(|&r| ball(r / 10) >= 10 * ball(50)).unwrap()
}

#[test]
fn exact_integers_stage_one() {
    let gs = GeneratorSystem::integers();
    let sch = exact_schedule(&gs, 2).unwrap();
    let st = sch.stage(1);
    assert_eq!(st.s, BigUint::from(10u32));
    assert_eq!(st.f, BigUint::from(1u32));
    assert_eq!(oracle_r1(), 5050);
    assert_eq!(st.r, BigUint::from(oracle_r1()));
    assert_eq!(st.card_f, BigUint::from(10102u32));
    let mut kappa = BigUint::from(1u32);
    for _ in 0..21 {
        kappa *= 10102u32;
    }
    assert_eq!(st.kappa.value.as_ref(), Some(&kappa));
    assert_eq!(sch.stage(2).s, BigUint::from(1000u32) * 5050u32 * &kappa);
    assert_eq!(sch.stage(2).f, BigUint::from(2u32));
    assert!(check_exact_rules(&gs, &sch).unwrap().pass);
}

#[test]
fn exact_stage_three_is_unrepresentable() {
    let gs = GeneratorSystem::integers();
    assert!(matches!(exact_schedule(&gs, 3), Err(ForgeError::Unrepresentable(_))));
}

#[test]
fn scaled_integers_pass_feasibility() {
    let gs = GeneratorSystem::integers();
    let cfg = ScaledConfig { s1: 2, ..Default::default() };
    let sch = scaled_schedule(&gs, 3, &cfg, &[2, 2]).unwrap();
    assert_eq!(sch.card_f(1), 2 * sch.r(1) + 2);
    let cert = check_scaled(&gs, &sch).unwrap();
    assert!(cert.pass, "{cert:#?}");
    println!("{}", serde_json::to_string_pretty(&sch.to_json()).unwrap());
}

#[test]
fn palette_equal_to_ball_is_infeasible() {
    let gs = GeneratorSystem::integers();
    let cfg = ScaledConfig { s1: 2, card_f: vec![43], ..Default::default() };
    let err = scaled_schedule(&gs, 1, &cfg, &[]).unwrap_err();
    assert!(matches!(err, ForgeError::Infeasible(ref m) if m.contains("palette too small")), "{err}");
}

#[test]
fn annulus_sites_on_integers() {
    let gs = GeneratorSystem::integers();
    let win = CayleyWindow::new(&gs, 400, 1).unwrap();
    let t: Vec<u32> =
        (0..win.len() as u32).filter(|&i| matches!(win.element(i), Element::Lattice(ref v) if v[0] % 3 == 0)).collect();
    let rule = SiteRule { s: 300, spacing: 40, level: 1 };
    let sites = select_annulus_sites(&win, 0, &t, 3, &rule, &[]).unwrap();
    assert_eq!(sites.len(), 3);
    assert!(check_sites(&win, 0, &t, &sites, &rule).pass);
    assert!(select_annulus_sites(&win, 0, &t, 0, &rule, &[]).unwrap().is_empty());
    assert!(matches!(select_annulus_sites(&win, 0, &t, 10, &rule, &[]), Err(ForgeError::CapacityExceeded { .. })));
    let _ = greedy_maximal_sparse(&win, None, 2, 1, &[], 10);
}
