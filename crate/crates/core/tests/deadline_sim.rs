use aoi_core::deadline::{
    admit, build_schedule, c0, lambert_w_neg1, max_interval, stationary_cdf, DeadlineSpec,
    PeriodicSchedulePolicy,
};
use aoi_core::{run_slots, TerminalSpec};

#[test]
fn periodically_served_terminal_matches_the_cdf() {
    let (lambda, gamma) = (0.5, 13);
    let specs = [TerminalSpec::bernoulli(0, lambda)];
    let mut policy = PeriodicSchedulePolicy::new(build_schedule(&[gamma], None).unwrap());
    let m = run_slots(&specs, &mut policy, 300_000, 21).unwrap();
    let hist = &m.terminals[0].histogram;
    let ks = (1..200)
        .map(|x| (hist.cdf(x) - stationary_cdf(lambda, gamma, x).unwrap()).abs())
        .fold(0.0, f64::max);
    assert!(ks < 0.01, "KS distance {ks}");
}

#[test]
fn lambert_form_tracks_the_exact_interval() {
    for lambda in [0.2, 0.5, 0.8] {
        for h in [20, 40, 80] {
            for eps in [1e-2, 1e-3, 1e-4] {
                let Ok(b) = max_interval(&DeadlineSpec::new(lambda, h, eps)) else {
                    continue;
                };
                let l = b.lambert_floor().unwrap();
                assert!(
                    l.abs_diff(b.gamma_max) <= 1,
                    "λ={lambda} H={h} ε={eps}: {l} vs {}",
                    b.gamma_max
                );
            }
        }
    }
}

#[test]
fn interval_monotone_in_each_parameter() {
    let lambdas = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
    let hs = [10, 20, 40, 80];
    let epss = [1e-4, 1e-3, 1e-2, 1e-1];
    let g = |l: f64, h: u64, e: f64| {
        max_interval(&DeadlineSpec::new(l, h, e))
            .map(|b| b.gamma_max)
            .unwrap_or(0)
    };
    for &l in &lambdas {
        for &e in &epss {
            for w in hs.windows(2) {
                assert!(g(l, w[0], e) <= g(l, w[1], e));
            }
        }
        for &h in &hs {
            for w in epss.windows(2) {
                assert!(g(l, h, w[0]) <= g(l, h, w[1]));
            }
        }
    }
    for &h in &hs {
        for &e in &epss {
            for w in lambdas.windows(2) {
                assert!(g(w[0], h, e) <= g(w[1], h, e), "H={h} ε={e} λ={w:?}");
            }
        }
    }
}

#[test]
fn large_deadline_count_misses_only_the_double_log_term() {
    // The N_deadline bound keeps the leading term of W₋₁(x) ≈ ln(-x); the
    // next term ln(-ln(-x)) / |ln(1-λ)| accounts for the gap to the exact
    // count.
    let (lambda, h, eps) = (0.5, 40, 1e-3);
    let spec = DeadlineSpec::new(lambda, h, eps);
    let report = admit(&[spec]).unwrap();
    let bound = report.n_deadline.unwrap();
    let expected = h as f64 - eps.ln() / (1.0f64 - lambda).ln() + c0(lambda);
    assert!((bound - expected).abs() < 1e-12);
    let exact = report.intervals[0].gamma_max as f64;
    assert_eq!(exact, 35.0);
    assert!(bound < exact, "the asymptotic bound is the smaller one");
    let l = (1.0f64 - lambda).ln();
    let x = l / (eps * spec.c());
    let double_log = (-(-x).ln()).ln() / l.abs();
    assert!(
        (bound + double_log - exact).abs() < 1.0,
        "{bound} + {double_log} vs {exact}"
    );
    let w = lambert_w_neg1(x).unwrap();
    assert!((w / l - report.intervals[0].lambert.unwrap()).abs() < 1e-12);
}

#[test]
fn symmetric_tdma_keeps_violations_in_budget() {
    let spec = DeadlineSpec::new(0.5, 20, 1e-3);
    let report = admit(&vec![spec; 13]).unwrap();
    assert!(report.feasible);
    let intervals: Vec<u64> = report.intervals.iter().map(|b| b.gamma_max).collect();
    let schedule = build_schedule(&intervals, None).unwrap();
    let specs: Vec<_> = (0..13)
        .map(|i| TerminalSpec::bernoulli(i, 0.5).with_deadline(20, 1e-3))
        .collect();
    let m = run_slots(
        &specs,
        &mut PeriodicSchedulePolicy::new(schedule),
        1_000_000,
        4,
    )
    .unwrap();
    for f in m.violation_freqs() {
        // About 46 expected violations per terminal; allow generous noise.
        assert!(f.unwrap() < 1.5e-3, "{f:?}");
    }
}
