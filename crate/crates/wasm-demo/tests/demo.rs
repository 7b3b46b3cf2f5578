use mc_implicit_demo::{init_alignment, simulate, sweep_alpha, Problem};

fn small() -> Problem {
    Problem::new(30, 2, 2.0, 0.6, 3)
}

#[test]
fn trajectory_converges_and_is_thinned() {
    let tr = simulate(&small(), 2, 1e-3, 1500).unwrap();
    assert!(!tr.diverged());
    let t = tr.t();
    assert!(t.len() <= 401 && t.len() >= 2);
    assert_eq!(t.len(), tr.rel_err().len());
    assert_eq!(t.len(), tr.signal().len());
    assert_eq!(t.len(), tr.residual().len());
    assert!(tr.final_rel_err() < 1e-6, "{}", tr.final_rel_err());
    assert!(tr.eta() > 0.0 && tr.mu() >= 1.0);
}

#[test]
fn trajectories_are_reproducible() {
    let a = simulate(&small(), 6, 1e-3, 300).unwrap();
    let b = simulate(&small(), 6, 1e-3, 300).unwrap();
    assert_eq!(a.rel_err(), b.rel_err());
}

#[test]
fn smaller_alpha_gives_smaller_overparameterized_error() {
    let errs = sweep_alpha(&small(), 10, &[1e-2, 1e-4], 1500).unwrap();
    assert!(errs[1] < errs[0], "{errs:?}");
}

#[test]
fn alignment_by_scheme() {
    let p = small();
    assert!((init_alignment(&p, "orthogonal", 30).unwrap() - 1.0).abs() < 1e-12);
    let g = init_alignment(&p, "gaussian", 30).unwrap();
    assert!((0.0..=1.0).contains(&g));
    let full = Problem::new(30, 2, 2.0, 1.0, 3);
    assert!(init_alignment(&full, "spectral", 2).unwrap() >= 0.25);
    assert!(init_alignment(&p, "bogus", 2).is_err());
    assert!(init_alignment(&p, "orthogonal", 5).is_err());
}

#[test]
fn invalid_problems_are_reported() {
    assert!(simulate(&Problem::new(30, 2, 2.0, 0.0, 1), 2, 1e-3, 10).is_err());
    assert!(simulate(&Problem::new(30, 2, 2.0, 0.5, 1), 31, 1e-3, 10).is_err());
}
