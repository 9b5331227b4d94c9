use proptest::prelude::*;
use spai_core::introspect::AnomalyClass;
use spai_core::signals::Trial;
use spai_sim::{inject, AnomalyInjector, InjectionContext, SkillCatalog, WorldConfig};

fn catalog() -> SkillCatalog {
    SkillCatalog::kitting(&WorldConfig::default()).unwrap()
}

fn injected(cat: &SkillCatalog, skill: &str, inj: &AnomalyInjector) -> (Trial, Trial) {
    let d = cat.default_duration(skill).unwrap();
    let nominal = cat.generate_nominal(skill, 21, d).unwrap();
    let ctx = InjectionContext { profile: cat.profile(skill).unwrap(), mass: cat.mass, seed: 8 };
    let out = inject(&nominal, inj, &ctx).unwrap();
    (nominal, out)
}

fn force_norm(s: &spai_core::signals::MultimodalSample) -> f64 {
    (s.wrench[0].powi(2) + s.wrench[1].powi(2) + s.wrench[2].powi(2)).sqrt()
}

fn force_delta(a: &spai_core::signals::MultimodalSample, b: &spai_core::signals::MultimodalSample) -> [f64; 3] {
    [b.wrench[0] - a.wrench[0], b.wrench[1] - a.wrench[1], b.wrench[2] - a.wrench[2]]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn zero_magnitude_leaves_the_stream_unchanged(class_idx in 0usize..5, onset in 0.0f64..1.9, duration in 0.0f64..2.0) {
        let cat = catalog();
        let inj = AnomalyInjector::new(AnomalyClass::ALL[class_idx], "2b", onset, duration, 0.0);
        let (nominal, out) = injected(&cat, "pick_lift", &inj);
        prop_assert_eq!(nominal, out);
    }

    #[test]
    fn injection_only_touches_samples_from_onset(class_idx in 0usize..5, onset in 0.2f64..1.5) {
        let cat = catalog();
        let class = AnomalyClass::ALL[class_idx];
        let inj = AnomalyInjector::new(class, "3", onset, 0.8, if class.loses_object() { 1.0 } else { 10.0 }).with_rise(0.3);
        let (nominal, out) = injected(&cat, "move_to_place", &inj);
        for (a, b) in nominal.samples.iter().zip(&out.samples) {
            if a.t < onset - 1e-9 {
                prop_assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn human_collision_exceeds_the_nominal_force_range() {
    let cat = catalog();
    let inj = AnomalyInjector::new(AnomalyClass::HumanCollision, "2b", 0.6, 0.4, 20.0);
    let (nominal, out) = injected(&cat, "pick_lift", &inj);
    let nominal_max = nominal.samples.iter().map(force_norm).fold(0.0, f64::max);
    let peak = out.samples.iter().filter(|s| s.t >= 0.6 && s.t <= 1.0).map(force_norm).fold(0.0, f64::max);
    assert!(peak > nominal_max, "peak {peak} vs nominal max {nominal_max}");
    for (a, b) in nominal.samples.iter().zip(&out.samples).filter(|(a, _)| a.t > 1.0 + 1e-9) {
        assert_eq!(a, b);
    }
}

#[test]
fn tool_collision_holds_a_sustained_force() {
    let cat = catalog();
    let inj = AnomalyInjector::new(AnomalyClass::ToolCollision, "3", 0.5, 2.0, 8.0).with_rise(0.5);
    let (nominal, out) = injected(&cat, "move_to_place", &inj);
    for (a, b) in nominal.samples.iter().zip(&out.samples).filter(|(a, _)| a.t >= 1.3 && a.t <= 2.5) {
        let d = force_delta(a, b);
        let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        assert!((norm - 8.0).abs() < 1e-9, "t = {}: {norm}", a.t);
    }
}

#[test]
fn wall_collision_pushes_sideways() {
    let cat = catalog();
    let inj = AnomalyInjector::new(AnomalyClass::WallCollision, "3", 0.5, 2.0, 8.0).with_rise(0.8);
    let (nominal, out) = injected(&cat, "move_to_place", &inj);
    let (a, b) = (&nominal.samples[100], &out.samples[100]);
    let d = force_delta(a, b);
    assert!(d[0].abs() > d[1].abs() && d[0].abs() > d[2].abs(), "{d:?}");
}

#[test]
fn slip_drops_the_object_weight_and_the_taxel_response() {
    let cat = catalog();
    let inj = AnomalyInjector::new(AnomalyClass::ObjectSlip, "3", 1.0, 0.0, 1.0).with_rise(0.3);
    let (nominal, out) = injected(&cat, "move_to_place", &inj);
    let weight = cat.mass * 9.81;
    for (a, b) in nominal.samples.iter().zip(&out.samples).filter(|(a, _)| a.t >= 1.4) {
        let d = force_delta(a, b);
        assert!((d[2] - weight).abs() < 1e-9 && d[0].abs() < 1e-12, "{d:?}");
        assert!(b.taxels_left.iter().chain(&b.taxels_right).all(|v| v.abs() < 0.05));
    }
}

#[test]
fn missing_object_leaves_the_taxels_at_baseline() {
    let cat = catalog();
    let inj = AnomalyInjector::new(AnomalyClass::NoObject, "2b", 0.0, 0.0, 1.0);
    let (nominal, out) = injected(&cat, "pick_lift", &inj);
    let pressure = |t: &Trial| t.samples.iter().map(|s| s.taxels_left.iter().sum::<f64>()).sum::<f64>() / t.len() as f64;
    assert!(pressure(&nominal) > 5.0);
    assert!(pressure(&out).abs() < 0.1);
}

#[test]
fn onset_beyond_the_stream_is_rejected() {
    let cat = catalog();
    let nominal = cat.generate_nominal("place", 1, 2.5).unwrap();
    let ctx = InjectionContext { profile: cat.profile("place").unwrap(), mass: cat.mass, seed: 1 };
    let inj = AnomalyInjector::new(AnomalyClass::HumanCollision, "4", 3.0, 0.3, 10.0);
    assert!(inject(&nominal, &inj, &ctx).is_err());
    let bad = AnomalyInjector::new(AnomalyClass::HumanCollision, "4", -0.5, 0.3, 10.0);
    assert!(inject(&nominal, &bad, &ctx).is_err());
}

fn torque_delta(a: &spai_core::signals::MultimodalSample, b: &spai_core::signals::MultimodalSample) -> [f64; 3] {
    [b.wrench[3] - a.wrench[3], b.wrench[4] - a.wrench[4], b.wrench[5] - a.wrench[5]]
}

#[test]
fn human_contact_is_off_the_tool_point() {
    use spai_sim::profile::{cross, LEVER_ARM};
    let cat = catalog();
    let off_tool = |class: AnomalyClass| {
        let inj = AnomalyInjector::new(class, "3", 0.5, 1.5, 12.0);
        let (nominal, out) = injected(&cat, "move_to_place", &inj);
        let (a, b) = nominal.samples.iter().zip(&out.samples).find(|(a, _)| a.t >= 0.7).unwrap();
        let expected = cross(&LEVER_ARM, &force_delta(a, b));
        let dt = torque_delta(a, b);
        (0..3).map(|k| (dt[k] - expected[k]).abs()).fold(0.0, f64::max)
    };
    assert!(off_tool(AnomalyClass::ToolCollision) < 1e-9);
    assert!(off_tool(AnomalyClass::HumanCollision) > 1e-3);
}
