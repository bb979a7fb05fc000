mod oracles;

use pe_core::accountant::{
    delta_for_epsilon, effective_sigma, epsilon_after, epsilon_for_delta, sigma_for_budget,
};

const SIGMAS: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];
const EPSILONS: [f64; 10] = [0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0];

#[test]
fn delta_matches_quadrature_on_grid() {
    for &s in &SIGMAS {
        for &e in &EPSILONS {
            let want = oracles::hockey_stick_delta(s, e);
            let got = delta_for_epsilon(s, e).unwrap();
            assert!((got - want).abs() <= 1e-9, "s={s} eps={e}: {got} vs {want}");
        }
    }
}

#[test]
fn epsilon_round_trips_through_delta() {
    for &s in &SIGMAS {
        for &e in &EPSILONS[1..] {
            let d = delta_for_epsilon(s, e).unwrap();
            if d < 1e-12 {
                continue;
            }
            let back = epsilon_for_delta(s, d).unwrap();
            assert!((back - e).abs() <= 1e-9, "s={s} eps={e}: {back}");
        }
    }
}

#[test]
fn delta_is_monotone_in_both_arguments() {
    for &s in &SIGMAS {
        let ds: Vec<f64> = EPSILONS.iter().map(|&e| delta_for_epsilon(s, e).unwrap()).collect();
        assert!(ds.windows(2).all(|w| w[1] <= w[0]));
    }
    for &e in &EPSILONS {
        let ds: Vec<f64> = SIGMAS.iter().map(|&s| delta_for_epsilon(s, e).unwrap()).collect();
        assert!(ds.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn composition_is_sigma_over_root_t() {
    let sigma = 10.0 * 2f64.sqrt();
    assert!((effective_sigma(sigma, 5).unwrap() - 6.324555).abs() < 1e-6);
    let direct = epsilon_for_delta(sigma / 5f64.sqrt(), 1e-5).unwrap();
    assert_eq!(epsilon_after(sigma, 5, 1e-5).unwrap(), direct);
}

#[test]
fn extreme_inputs_stay_finite() {
    assert!(delta_for_epsilon(1e-3, 400.0).unwrap().is_finite());
    assert!(delta_for_epsilon(50.0, 1e-6).unwrap() > 0.0);
    let s = sigma_for_budget(0.01, 1e-10, 1000).unwrap();
    assert!(s.is_finite() && s > 0.0);
    assert_eq!(epsilon_after(0.0, 3, 1e-5).unwrap(), f64::INFINITY);
}
