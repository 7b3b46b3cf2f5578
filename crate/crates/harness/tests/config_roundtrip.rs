use mc_implicit_harness::ExperimentConfig;
use proptest::prelude::*;

fn grid<T: std::fmt::Debug>(values: &[T], show: impl Fn(&T) -> String) -> String {
    if values.len() == 1 {
        show(&values[0])
    } else {
        format!(
            "[{}]",
            values.iter().map(show).collect::<Vec<_>>().join(", ")
        )
    }
}

prop_compose! {
    fn config_text()(
        d in 4usize..200,
        r in 1usize..4,
        kappa in 1.0f64..10.0,
        sigma1 in 0.1f64..10.0,
        ps in prop::collection::vec(0.05f64..=1.0, 1..4),
        alphas in prop::collection::vec(1e-9f64..1.0, 1..4),
        theorem_alpha in any::<bool>(),
        c_eta in 0.01f64..1.0,
        max_iters in 1usize..100_000,
        stop_tol in 0.0f64..1e-3,
        record_every in 1usize..100,
        n_seeds in 1usize..10,
        seed in any::<u64>(),
        ghosts in prop::option::of(1usize..20),
    ) -> String {
        let rp = (r + 2).min(d);
        let alpha = if theorem_alpha {
            "{\"theorem\": 0.1}".to_string()
        } else {
            grid(&alphas, |a| format!("{a:e}"))
        };
        let loo = match ghosts {
            Some(k) => format!(
                r#", "diagnostics": {{"loo": {{"ghosts": "sample:{k}", "kinds": ["classical"]}}}}"#
            ),
            None => String::new(),
        };
        format!(
            r#"{{
                "schema_version": 1,
                "name": "prop",
                "master_seed": {seed},
                "ground_truth": {{"d": {d}, "r": {r}, "kappa": {kappa:e}, "sigma1": {sigma1:e}}},
                "sampling": {{"p": {}}},
                "init": {{"scheme": "gaussian", "r_prime": {rp}, "alpha": {alpha}}},
                "optimizer": {{"eta_rule": {{"theorem": {c_eta:e}}}, "max_iters": {max_iters},
                               "stop_tol": {stop_tol:e}, "record_every": {}}},
                "replication": {{"n_seeds": {n_seeds}}}{loo}
            }}"#,
            grid(&ps, |p| format!("{p:e}")),
            if ghosts.is_some() { 1 } else { record_every },
        )
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn configs_survive_serialization(text in config_text()) {
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let json = cfg.to_json();
        let back = ExperimentConfig::from_json(&json).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json(), json);
    }

    #[test]
    fn cell_seeds_are_stable_across_reloads(text in config_text()) {
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        for (a, b) in cfg.cells().iter().zip(back.cells().iter()) {
            prop_assert_eq!(a, b);
            prop_assert_eq!(cfg.seeds(a), back.seeds(b));
        }
    }
}
