use nalgebra::{DMatrix, DVector};
use spai_sim::profile::{channel_scale, SkillProfile, LATENT_DIM};
use spai_sim::{SkillCatalog, WorldConfig};

fn catalog() -> SkillCatalog {
    SkillCatalog::kitting(&WorldConfig::default()).unwrap()
}

/// Latent deviation recovered from a stream of a skill without object contact.
fn latent_of(cat: &SkillCatalog, skill: &str, trial: &spai_core::signals::Trial, duration: f64) -> Vec<DVector<f64>> {
    let p = cat.profile(skill).unwrap();
    let m = cat.motion(skill).unwrap();
    assert!(!p.expects_object() && p.load.to == 0.0);
    let n = trial.len();
    let plan = m.plan(&m.start, &m.goal, p.motion_fraction * duration, cat.rate_hz, n).unwrap();
    trial
        .samples
        .iter()
        .zip(&plan.velocities)
        .map(|(s, v)| {
            let phys = [
                s.wrench[0],
                s.wrench[1],
                s.wrench[2],
                s.wrench[3],
                s.wrench[4],
                s.wrench[5],
                s.twist[0] - v[0],
                s.twist[1] - v[1],
                s.twist[2] - v[2],
                s.twist[3],
                s.twist[4],
                s.twist[5],
            ];
            DVector::from_fn(LATENT_DIM, |j, _| phys[j] / channel_scale(j))
        })
        .collect()
}

/// `u_0 = c_0`, then `u_t = c + A (u_{t−1} − c)` with the segment active at `t / n`.
fn orbit(p: &SkillProfile, n: usize) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let frac = i as f64 / n as f64;
        let seg = p.segments.iter().rfind(|s| s.start <= frac).unwrap();
        let u = match out.last() {
            None => p.segments[0].c.clone(),
            Some(prev) => &seg.c + &seg.a * (prev - &seg.c),
        };
        out.push(u);
    }
    out
}

#[test]
fn same_seed_gives_identical_trials() {
    let cat = catalog();
    for skill in ["move_to_pick", "pick_approach", "place"] {
        let a = cat.generate_nominal(skill, 17, 2.5).unwrap();
        let b = cat.generate_nominal(skill, 17, 2.5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, cat.generate_nominal(skill, 18, 2.5).unwrap());
    }
}

#[test]
fn unknown_skill_is_rejected() {
    let cat = catalog();
    assert!(cat.generate_nominal("juggle", 1, 1.0).is_err());
    assert!(cat.generate_nominal("place", 1, 0.0).is_err());
}

#[test]
fn noiseless_stream_is_the_var_orbit() {
    let cat = catalog();
    let skill = "move_to_pick";
    let trial = cat.generate_nominal_scaled(skill, 5, 3.0, 0.0).unwrap();
    let got = latent_of(&cat, skill, &trial, 3.0);
    let want = orbit(cat.profile(skill).unwrap(), trial.len());
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).amax() < 1e-9, "{g} vs {w}");
    }
    for s in &trial.samples {
        assert!(s.taxels_left.iter().chain(&s.taxels_right).all(|v| *v == 0.0));
    }
}

#[test]
fn lag_one_regression_recovers_segment_dynamics() {
    let cat = catalog();
    let skill = "move_to_pick";
    let p = cat.profile(skill).unwrap().clone();
    let trial = cat.generate_nominal(skill, 99, 2000.0).unwrap();
    let u = latent_of(&cat, skill, &trial, 2000.0);
    let n = u.len();
    for (k, seg) in p.segments.iter().enumerate() {
        let end = p.segments.get(k + 1).map_or(1.0, |s| s.start);
        let idx: Vec<usize> = (1..n)
            .filter(|&t| {
                let (f0, f1) = ((t - 1) as f64 / n as f64, t as f64 / n as f64);
                f0 >= seg.start && f1 < end
            })
            .collect();
        // least squares of u_t on [u_{t−1}; 1] through the normal equations
        let q = LATENT_DIM + 1;
        let mut xtx = DMatrix::<f64>::zeros(q, q);
        let mut xty = DMatrix::<f64>::zeros(q, LATENT_DIM);
        for &t in &idx {
            let x = u[t - 1].clone().insert_row(LATENT_DIM, 1.0);
            xtx += &x * x.transpose();
            xty += &x * u[t].transpose();
        }
        let coef = xtx.cholesky().unwrap().solve(&xty);
        let a_hat = coef.rows(0, LATENT_DIM).transpose();
        let err = (&a_hat - &seg.a).norm();
        assert!(err <= 0.1, "segment {k}: Frobenius error {err} over {} pairs", idx.len());
    }
}

#[test]
fn contact_skills_press_the_taxels() {
    let cat = catalog();
    let lift = cat.generate_nominal("pick_lift", 3, 2.0).unwrap();
    let mean: f64 = lift.samples.iter().map(|s| s.taxels_left.iter().sum::<f64>()).sum::<f64>() / lift.len() as f64;
    assert!(mean > 5.0, "mean left pressure {mean}");
    let w = 0.5 * 9.81;
    let fz: f64 = lift.samples.iter().map(|s| s.wrench[2]).sum::<f64>() / lift.len() as f64;
    assert!((fz + w).abs() < 2.0, "mean fz {fz}");
}
