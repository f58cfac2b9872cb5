use qmpx::matrix::{complex_gaussian, ComplexMatrix, HermitianMatrix, C64};
use qmpx::scenario::{
    empirical_mse, make_case, CaseParams, CaseTag, DesignState, Layout, NetworkScenario, Sense,
    VarId,
};
use qmpx::solvers::{solve_auto, solve_unconstrained, SolvePath};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ALL: [CaseTag; 9] = [
    CaseTag::MuDl,
    CaseTag::MuUl,
    CaseTag::MultiCell,
    CaseTag::CognitiveRadio,
    CaseTag::EnergyHarvest,
    CaseTag::AFRelayTwoHop,
    CaseTag::AFRelayMultiHop,
    CaseTag::Example1,
    CaseTag::Example2TwoWay,
];

fn random_state(s: &NetworkScenario, rng: &mut ChaCha8Rng) -> DesignState {
    let mut d = s.zero_state();
    for v in s.variables() {
        let (r, c) = s.var_shape(v).unwrap();
        d.set(v, complex_gaussian(r, c, rng) * C64::new(0.5, 0.0));
    }
    d
}

fn with(d: &DesignState, v: VarId, m: ComplexMatrix) -> DesignState {
    let mut e = d.clone();
    e.set(v, m);
    e
}

/// Energy minus bound (or bound minus energy) for the named constraint.
fn constraint_value(s: &NetworkScenario, d: &DesignState, name: &str) -> f64 {
    let p = s.power_usage(d);
    for (i, n) in s.nodes.iter().enumerate() {
        if name == format!("power[{}]", n.name) {
            return p[i] - n.budget.unwrap();
        }
    }
    let m = s.meters.iter().position(|m| m.name == name).unwrap();
    let v = s.meter_values(d)[m];
    match s.meters[m].sense {
        Sense::AtMost => v - s.meters[m].threshold,
        Sense::AtLeast => s.meters[m].threshold - v,
    }
}

fn check_subproblems(s: &NetworkScenario, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = random_state(s, &mut rng);
    for v in s.variables() {
        let sub = s.qm_for_variable(&d, v).unwrap();
        let (r, c) = sub.shape;
        for _ in 0..2 {
            let val = complex_gaussian(r, c, &mut rng);
            let e = with(&d, v, val.clone());
            let want = s.sum_mse(&e).unwrap();
            let got = sub.problem.objective.evaluate(&sub.to_x(&val)).unwrap();
            assert!(
                (got - want).abs() < 1e-9 * (1.0 + want.abs()),
                "{:?} {v}: {got} vs {want}",
                s.case
            );
            for (f, name) in sub.problem.inequalities.iter().zip(&sub.constraint_names) {
                let want = constraint_value(s, &e, name);
                let got = f.eval(&sub.to_x(&val));
                assert!(
                    (got - want).abs() < 1e-9 * (1.0 + want.abs()),
                    "{:?} {v} {name}: {got} vs {want}",
                    s.case
                );
            }
        }
        assert_eq!(sub.from_x(&sub.to_x(d.get(v))), *d.get(v));
        // MSE and power are energies; harvesting rows are negated energies
        assert!(sub.problem.objective.a.min_eigenvalue() > -1e-9);
        for (f, name) in sub.problem.inequalities.iter().zip(&sub.constraint_names) {
            let lo = f.a.min_eigenvalue();
            if name == "harvest" {
                assert!(f.a.max_eigenvalue() < 1e-9);
            } else {
                assert!(lo > -1e-9, "{name}: {lo}");
            }
        }
    }
}

#[test]
fn subproblems_reproduce_sum_mse_for_every_case() {
    for (i, tag) in ALL.iter().enumerate() {
        let s = make_case(
            *tag,
            &CaseParams {
                seed: i as u64,
                ..CaseParams::default()
            },
        )
        .unwrap();
        check_subproblems(&s, 100 + i as u64);
    }
}

#[test]
fn robust_subproblems_reproduce_robust_sum_mse() {
    for (i, tag) in ALL.iter().enumerate() {
        let p = CaseParams {
            seed: i as u64,
            error_variance: 0.05,
            ..CaseParams::default()
        };
        let s = make_case(*tag, &p).unwrap();
        assert!(s.has_channel_errors());
        check_subproblems(&s, 200 + i as u64);
    }
}

#[test]
fn robust_sum_mse_matches_channel_draws() {
    let p = CaseParams {
        seed: 3,
        error_variance: 0.1,
        ..CaseParams::default()
    };
    let s = make_case(CaseTag::Example1, &p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = random_state(&s, &mut rng);
    let want = s.sum_mse(&d).unwrap();
    let samplers: Vec<_> = s
        .links
        .iter()
        .map(|l| l.channel.sampler().unwrap())
        .collect();
    let mut draw = s.clone();
    let n = 20_000;
    let mut acc = 0.0;
    for _ in 0..n {
        for (link, smp) in draw.links.iter_mut().zip(&samplers) {
            link.channel = qmpx::robust::ChannelError::exact(smp.draw(&mut rng));
        }
        acc += draw.sum_mse(&d).unwrap();
    }
    let mc = acc / n as f64;
    assert!(((mc - want) / want).abs() < 0.02, "{mc} vs {want}");
}

#[test]
fn zero_transmitters_leave_pure_signal_power() {
    for tag in ALL {
        let s = make_case(tag, &CaseParams::default()).unwrap();
        let streams: usize = s.streams.iter().map(|st| st.count()).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g_zero = random_state(&s, &mut rng);
        for &k in s.destinations() {
            g_zero.equalizers[k].fill(C64::new(0.0, 0.0));
        }
        assert!((s.sum_mse(&g_zero).unwrap() - streams as f64).abs() < 1e-12);
        let z = s.zero_state();
        assert!((s.sum_mse(&z).unwrap() - streams as f64).abs() < 1e-12);
    }
}

#[test]
fn analytic_mse_matches_qpsk_simulation() {
    for tag in [
        CaseTag::Example1,
        CaseTag::Example2TwoWay,
        CaseTag::MultiCell,
        CaseTag::AFRelayMultiHop,
    ] {
        let s = make_case(tag, &CaseParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = random_state(&s, &mut rng);
        let want = s.sum_mse(&d).unwrap();
        let got = empirical_mse(&s, &d, 100_000, &mut rng).unwrap();
        assert!(
            ((got - want) / want).abs() < 0.02,
            "{tag:?}: {got} vs {want}"
        );
    }
}

#[test]
fn wiener_equalizers_are_stationary() {
    let s = make_case(CaseTag::Example1, &CaseParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut d = random_state(&s, &mut rng);
    let before = s.sum_mse(&d).unwrap();
    for &k in s.destinations() {
        let sub = s.qm_for_variable(&d, VarId::Equalizer(k)).unwrap();
        assert_eq!(sub.problem.constraint_count(), 0);
        let rep = solve_unconstrained(&sub.problem.objective).unwrap();
        d.set(VarId::Equalizer(k), sub.from_x(&rep.x));
    }
    let after = s.sum_mse(&d).unwrap();
    assert!(after <= before);
    let h = 1e-6;
    for _ in 0..20 {
        let mut plus = d.clone();
        let mut minus = d.clone();
        for &k in s.destinations() {
            let (r, c) = s.var_shape(VarId::Equalizer(k)).unwrap();
            let dir = complex_gaussian(r, c, &mut rng);
            plus.equalizers[k] += &dir * C64::new(h, 0.0);
            minus.equalizers[k] -= &dir * C64::new(h, 0.0);
        }
        let slope = (s.sum_mse(&plus).unwrap() - s.sum_mse(&minus).unwrap()) / (2.0 * h);
        assert!(slope.abs() < 1e-6, "{slope}");
    }
}

#[test]
fn example1_relay_step_is_single_constraint() {
    let s = make_case(CaseTag::Example1, &CaseParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = random_state(&s, &mut rng);
    for j in s.relays() {
        let sub = s.qm_for_variable(&d, VarId::Relay(j)).unwrap();
        assert_eq!(sub.layout, Layout::Direct);
        assert_eq!(sub.problem.inequalities.len(), 1);
        let rep = solve_auto(&sub.problem).unwrap();
        assert_eq!(rep.path, SolvePath::Bisection);
        assert!(sub.problem.max_violation(&rep.x) < 1e-9);
    }
}

#[test]
fn two_way_relay_step_is_vectorized() {
    let s = make_case(CaseTag::Example2TwoWay, &CaseParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = random_state(&s, &mut rng);
    let j = s.relays()[0];
    let sub = s.qm_for_variable(&d, VarId::Relay(j)).unwrap();
    assert_eq!(sub.layout, Layout::Vectorized);
    assert_eq!(sub.problem.r, 1);
    assert_eq!(solve_auto(&sub.problem).unwrap().path, SolvePath::Bisection);
}

#[test]
fn unknown_variable_rejected() {
    let s = make_case(CaseTag::Example1, &CaseParams::default()).unwrap();
    let d = s.zero_state();
    assert!(matches!(
        s.qm_for_variable(&d, VarId::Relay(0)),
        Err(qmpx::Error::UnknownVariable(_))
    ));
    assert!(s.qm_for_variable(&d, VarId::Precoder(9)).is_err());
}

#[test]
fn power_usage_by_hand() {
    // identity channels, unit noise, identity precoder and relay at 2x2
    let mut s = make_case(CaseTag::AFRelayTwoHop, &CaseParams::default()).unwrap();
    for l in &mut s.links {
        l.channel = qmpx::robust::ChannelError::exact(ComplexMatrix::identity(2, 2));
    }
    for n in &mut s.nodes {
        if n.rx > 0 {
            n.noise = Some(HermitianMatrix::identity(2));
        }
    }
    let z = s.zero_state();
    assert!(s.power_usage(&z).iter().all(|&p| p == 0.0));
    let mut d = z.clone();
    d.precoders[0] = ComplexMatrix::identity(2, 2);
    let relay = s.relays()[0];
    d.relays[relay] = ComplexMatrix::identity(2, 2);
    let p = s.power_usage(&d);
    // R_x = H P P^H H^H + I = 2 I, Tr(F R_x F^H) = 4
    assert!((p[0] - 2.0).abs() < 1e-14);
    assert!((p[relay] - 4.0).abs() < 1e-14);
    d.precoders[0] *= C64::new(3.0, 0.0);
    let q = s.power_usage(&d);
    assert!((q[0] - 9.0 * p[0]).abs() < 1e-12);
}

#[test]
fn cognitive_precoder_step_has_two_rows() {
    let s = make_case(CaseTag::CognitiveRadio, &CaseParams::default()).unwrap();
    let d = s.zero_state();
    let sub = s.qm_for_variable(&d, VarId::Precoder(0)).unwrap();
    assert_eq!(
        sub.constraint_names,
        vec!["power[source]".to_string(), "interference".to_string()]
    );
}
