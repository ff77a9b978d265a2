//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Every criterion always runs at its pinned tolerance. A FAIL is reported,
//! not hidden; set `AOI_ACCEPTANCE_STRICT=1` to turn any FAIL into a
//! nonzero exit status. `AOI_ACCEPTANCE_ONLY=5,11` runs a subset.

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use aoi_cli::presets;
use aoi_cli::runner::{run_scenario, write_csv, Row};
use aoi_core::access::{run_access, tune_ipra, AccessConfig, AccessProtocol, ThresholdGrid};
use aoi_core::deadline::{
    admit, build_schedule, lambert_w_neg1, stationary_cdf, DeadlineSpec, PeriodicSchedulePolicy,
};
use aoi_core::indices::{index_bernoulli, solve_decoupled, Action};
use aoi_core::mdp::{
    indifference_charge, rvi_decoupled, rvi_full, DecoupledChain, FullChain, RviSettings,
};
use aoi_core::policies::{NoBufferPolicy, WhittlePolicy};
use aoi_core::{derive_seed, run_slots, TerminalSpec};

const SEED: u64 = 20_240_601;
const SLOTS: u64 = 1_000_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(x: f64, reference: f64) -> f64 {
    (x - reference) / reference
}

fn c1_index_specialization() -> Outcome {
    let bad: Vec<u64> = (1..=100u64)
        .filter(|&d| index_bernoulli(1, d, 1.0, 1.0).unwrap() != (d * (d + 1)) as f64 / 2.0)
        .collect();
    outcome(
        bad.is_empty(),
        format!("d = 1..100 exact, mismatches: {bad:?}"),
    )
}

fn c2_threshold_structure() -> Outcome {
    let settings = RviSettings::default();
    let mut worst_j: f64 = 0.0;
    let mut problems = Vec::new();
    for lambda in [0.2, 0.5, 0.8, 1.0] {
        for m in [1.0, 5.0, 20.0, 50.0] {
            let closed = solve_decoupled(lambda, m).unwrap();
            let chain = DecoupledChain::with_suggested_bounds(lambda, m);
            for (label, ch) in [("base", chain.clone()), ("doubled", chain.doubled())] {
                let r = rvi_decoupled(&ch, &settings).unwrap();
                let dj = (r.avg_cost() - closed.avg_cost).abs();
                worst_j = worst_j.max(dj);
                if dj > 1e-5 {
                    problems.push(format!("λ={lambda} m={m} {label}: |ΔJ| = {dj:.2e}"));
                }
                // Compare well inside the truncated age range.
                for a in 1..=(chain.max_age / 2).clamp(1, 30) {
                    if !r.is_threshold_in_d(a) {
                        problems.push(format!("λ={lambda} m={m} {label}: a={a} not threshold"));
                    } else if r.threshold(a) != Some(closed.threshold(a)) {
                        problems.push(format!(
                            "λ={lambda} m={m} {label}: D_{a} = {:?} vs {}",
                            r.threshold(a),
                            closed.threshold(a)
                        ));
                    }
                }
            }
        }
    }
    outcome(
        problems.is_empty(),
        format!(
            "16 (λ, m) pairs, base and doubled chains, max |J - Ĵ*| = {worst_j:.2e}; {problems:?}"
        ),
    )
}

fn c3_index_oracle() -> Outcome {
    let mut fails = Vec::new();
    let mut n = 0;
    for lambda in [0.2, 0.5, 0.8, 1.0] {
        for a in 1..=5u64 {
            for d in 1..=10u64 {
                n += 1;
                let flip = indifference_charge(lambda, a, d, 1e-6).unwrap();
                let lo = index_bernoulli(a, d - 1, lambda, 1.0).unwrap();
                let hi = index_bernoulli(a, d + 1, lambda, 1.0).unwrap();
                // The bisection itself is only accurate to its tolerance.
                if !(flip >= lo - 1e-6 && flip <= hi + 1e-6) {
                    fails.push(format!("λ={lambda} ({a},{d}): {flip} ∉ [{lo}, {hi}]"));
                }
            }
        }
    }
    outcome(fails.is_empty(), format!("{n} states, failures: {fails:?}"))
}

fn c4_indexability() -> Outcome {
    let ladder = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 35.0, 50.0, 75.0, 100.0];
    let settings = RviSettings::default();
    let mut problems = Vec::new();
    for lambda in [0.2, 0.5, 0.8, 1.0] {
        // One truncation for the whole ladder, sized for the largest charge.
        let big = DecoupledChain::with_suggested_bounds(lambda, 100.0);
        let (ages, gaps) = (big.max_age / 2, big.max_gap / 2);
        let mut previous: Option<Vec<bool>> = None;
        for &m in &ladder {
            let chain = DecoupledChain::bernoulli(lambda, m, big.max_age, big.max_gap);
            let r = rvi_decoupled(&chain, &settings).unwrap();
            let idle: Vec<bool> = (1..=ages)
                .flat_map(|a| (1..=gaps).map(move |d| (a, d)))
                .map(|(a, d)| r.action(a, d) == Action::Idle)
                .collect();
            if m == 0.0 && idle.iter().any(|&i| i) {
                problems.push(format!("λ={lambda}: idle states at m = 0"));
            }
            if let Some(prev) = &previous {
                if prev.iter().zip(&idle).any(|(&p, &i)| p && !i) {
                    problems.push(format!("λ={lambda}: idle set shrinks at m = {m}"));
                }
            }
            previous = Some(idle);
        }
    }
    outcome(
        problems.is_empty(),
        format!("4 rates x 10 charges; {problems:?}"),
    )
}

fn pair(lambda: f64) -> Vec<TerminalSpec> {
    vec![
        TerminalSpec::bernoulli(0, lambda),
        TerminalSpec::bernoulli(1, lambda),
    ]
}

fn c5_two_terminal_optimality() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, lambda) in [0.3, 0.5, 0.8, 1.0].into_iter().enumerate() {
        let specs = pair(lambda);
        let chain = FullChain::from_specs(&specs, None, 30).unwrap();
        let opt = rvi_full(&chain, &RviSettings::default())
            .unwrap()
            .avg_cost();
        let seed = derive_seed(SEED, &[5, i as u64]);
        let whittle = run_slots(&specs, &mut WhittlePolicy, SLOTS, seed)
            .unwrap()
            .avg_weighted_aoi;
        let gap = rel(whittle, opt);
        pass &= gap.abs() <= 0.03;
        parts.push(format!(
            "λ={lambda}: J*={opt:.4} whittle={whittle:.4} ({:+.2}%)",
            100.0 * gap
        ));
        if lambda == 0.3 {
            let nb = run_slots(&specs, &mut NoBufferPolicy, SLOTS, seed)
                .unwrap()
                .avg_weighted_aoi;
            let excess = rel(nb, whittle);
            pass &= excess >= 0.05;
            parts.push(format!(
                "no-buffer={nb:.4} ({:+.2}% over whittle)",
                100.0 * excess
            ));
        }
    }
    outcome(pass, parts.join("; "))
}

fn c6_unreliable_channel() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, pe1) in [0.0, 0.1, 0.3, 0.5].into_iter().enumerate() {
        let specs = vec![
            TerminalSpec::bernoulli(0, 0.8).with_error_prob(pe1),
            TerminalSpec::bernoulli(1, 0.8).with_error_prob(0.9),
        ];
        let chain = FullChain::from_specs(&specs, None, 80)
            .unwrap()
            .with_age_limit(10);
        let opt = rvi_full(&chain, &RviSettings::default())
            .unwrap()
            .avg_cost();
        let sim = run_slots(
            &specs,
            &mut WhittlePolicy,
            SLOTS,
            derive_seed(SEED, &[6, i as u64]),
        )
        .unwrap()
        .avg_weighted_aoi;
        let gap = rel(sim, opt);
        pass &= gap.abs() <= 0.05;
        parts.push(format!(
            "p_e1={pe1}: J*={opt:.4} whittle={sim:.4} ({:+.2}%)",
            100.0 * gap
        ));
    }
    outcome(pass, format!("λ=0.8, p_e2=0.9; {}", parts.join("; ")))
}

fn c7_scaling() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [10usize, 50] {
        let specs: Vec<_> = (0..n).map(|i| TerminalSpec::bernoulli(i, 1.0)).collect();
        let sim = run_slots(
            &specs,
            &mut WhittlePolicy,
            SLOTS,
            derive_seed(SEED, &[7, n as u64]),
        )
        .unwrap()
        .avg_weighted_aoi;
        let target = (n as f64 + 1.0) / 2.0;
        let err = rel(sim, target);
        pass &= err.abs() <= 0.01;
        parts.push(format!(
            "N={n}: {sim:.4} vs {target} ({:+.3}%)",
            100.0 * err
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c8_stationary_cdf() -> Outcome {
    let (lambda, gamma) = (0.5, 13);
    let specs = [TerminalSpec::bernoulli(0, lambda)];
    let mut policy = PeriodicSchedulePolicy::new(build_schedule(&[gamma], None).unwrap());
    let m = run_slots(&specs, &mut policy, SLOTS, derive_seed(SEED, &[8])).unwrap();
    let hist = &m.terminals[0].histogram;
    let ks = (1..400)
        .map(|x| (hist.cdf(x) - stationary_cdf(lambda, gamma, x).unwrap()).abs())
        .fold(0.0, f64::max);
    let tail = hist.tail(20);
    let expected: f64 = 6.009e-4;
    let band = (0.2 * expected).max(1.5e-4);
    let pass = ks < 0.01 && (tail - expected).abs() <= band;
    outcome(
        pass,
        format!("KS = {ks:.5}; Pr{{h > 20}} = {tail:.4e} vs {expected:.4e} ± {band:.2e}"),
    )
}

fn c9_deadline_end_to_end() -> Outcome {
    let specs13 = vec![DeadlineSpec::new(0.5, 20, 1e-3); 13];
    let report = admit(&specs13).unwrap();
    if !report.feasible {
        return outcome(false, format!("13 terminals not admitted: {report:?}"));
    }
    let intervals: Vec<u64> = report.intervals.iter().map(|b| b.gamma_max).collect();
    let schedule = build_schedule(&intervals, None).unwrap();
    let terminals: Vec<TerminalSpec> = (0..13)
        .map(|i| TerminalSpec::bernoulli(i, 0.5).with_deadline(20, 1e-3))
        .collect();
    let m = run_slots(
        &terminals,
        &mut PeriodicSchedulePolicy::new(schedule),
        10_000_000,
        derive_seed(SEED, &[9]),
    )
    .unwrap();
    let freqs: Vec<f64> = m.violation_freqs().into_iter().flatten().collect();
    let worst = freqs.iter().copied().fold(0.0, f64::max);
    outcome(
        freqs.len() == 13 && worst <= 1.1e-3,
        format!("intervals {intervals:?}; worst violation frequency {worst:.4e} over 1e7 slots"),
    )
}

fn c10_lambert() -> Outcome {
    let branch = -(-1.0f64).exp();
    let mut worst_res: f64 = 0.0;
    for i in 0..=20_000 {
        // From the branch point down to about -1e-300.
        let x = branch * (-(690.0 * i as f64 / 20_000.0)).exp();
        let w = lambert_w_neg1(x).unwrap();
        worst_res = worst_res.max((w * w.exp() - x).abs());
    }
    let mut worst_trip: f64 = 0.0;
    let ws = [-1.5, -5.0, -20.0]
        .into_iter()
        .chain((0..=10_000).map(|i| -1.05 - 698.0 * i as f64 / 10_000.0));
    for w in ws {
        let back = lambert_w_neg1(w * w.exp()).unwrap();
        worst_trip = worst_trip.max((back - w).abs() / w.abs());
    }
    outcome(
        worst_res <= 1e-12 && worst_trip <= 1e-10,
        format!(
            "max |w e^w - x| = {worst_res:.2e}; max relative round-trip error = {worst_trip:.2e}"
        ),
    )
}

fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

fn c11_ipra_normalization() -> Outcome {
    let specs: Vec<_> = (0..50).map(|i| TerminalSpec::bernoulli(i, 0.01)).collect();
    let mut stats = Vec::new();
    let mut parts = Vec::new();
    for t_s in [1u64, 10, 100] {
        let template = AccessConfig::new(0.2, 0.0, t_s).staggered();
        let grid = ThresholdGrid {
            points: 25,
            ..ThresholdGrid::auto(&specs)
        };
        let tuned = tune_ipra(
            &specs,
            &template,
            &grid,
            SLOTS,
            3,
            derive_seed(SEED, &[11, t_s]),
        )
        .unwrap();
        // Fresh seeds, shared by both protocols within a replication.
        let ratios: Vec<f64> = (0..5u64)
            .map(|r| {
                let seed = derive_seed(SEED, &[11, t_s, r + 1]);
                let ipra =
                    run_access(&specs, &tuned.config, AccessProtocol::Ipra, SLOTS, seed).unwrap();
                let central = run_access(
                    &specs,
                    &template,
                    AccessProtocol::CentralizedWhittle,
                    SLOTS,
                    seed,
                )
                .unwrap();
                ipra.avg_weighted_aoi / central.avg_weighted_aoi
            })
            .collect();
        let (mean, half) = mean_ci(&ratios);
        parts.push(format!(
            "T_s={t_s}: threshold {:.3e}, ratio {mean:.4} ± {half:.4}",
            tuned.config.index_threshold
        ));
        stats.push((mean, half));
    }
    let monotone = stats.windows(2).all(|w| w[1].0 - w[1].1 <= w[0].0 + w[0].1);
    let last = stats[2].0;
    outcome(
        monotone && last < 1.1,
        format!(
            "{}; monotone within 95% CI: {monotone}; ratio at T_s=100 below 1.1: {}",
            parts.join("; "),
            last < 1.1
        ),
    )
}

fn csv_without_wall_time(rows: &[Row]) -> String {
    let mut rows = rows.to_vec();
    rows.iter_mut().for_each(|r| r.wall_time_ms = 0);
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn c12_determinism() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for mut cfg in presets::all() {
        // Desk-sized copies; determinism does not depend on the scale.
        cfg.horizon = 5_000;
        cfg.replications = cfg.replications.min(2);
        cfg.mdp.max_age = Some(12);
        cfg.mdp.max_gap = 10;
        cfg.access.tune_horizon = Some(5_000);
        cfg.access.tune_replications = 1;
        cfg.access.grid_points = 6;
        let first = csv_without_wall_time(&run_scenario(&cfg, Some(1)).unwrap());
        let again = csv_without_wall_time(&run_scenario(&cfg, Some(1)).unwrap());
        let parallel = csv_without_wall_time(&run_scenario(&cfg, Some(4)).unwrap());
        let same = first == again && first == parallel;
        pass &= same;
        parts.push(format!(
            "{}: {} rows {}",
            cfg.name,
            first.lines().count() - 1,
            if same { "identical" } else { "DIFFER" }
        ));
    }
    outcome(pass, parts.join("; "))
}

type Criterion = (usize, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 12] = [
    (1, "index specialization", c1_index_specialization),
    (2, "threshold-structure oracle", c2_threshold_structure),
    (3, "index-oracle consistency", c3_index_oracle),
    (4, "indexability", c4_indexability),
    (
        5,
        "two-terminal near-optimality",
        c5_two_terminal_optimality,
    ),
    (6, "unreliable-channel approximation", c6_unreliable_channel),
    (7, "scaling with deterministic arrivals", c7_scaling),
    (8, "stationary AoI distribution", c8_stationary_cdf),
    (9, "deadline end to end", c9_deadline_end_to_end),
    (10, "Lambert W", c10_lambert),
    (11, "IPRA normalization", c11_ipra_normalization),
    (12, "determinism", c12_determinism),
];

fn main() {
    let strict = std::env::var("AOI_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let only: Option<Vec<usize>> = std::env::var("AOI_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    panic::set_hook(Box::new(|_| {}));

    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, run) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} criterion {id:>2} ({name}): {} [{:.1}s]",
            result.detail,
            start.elapsed().as_secs_f64()
        );
        if !result.pass {
            failed.push(id);
        }
    }
    println!(
        "acceptance: {}/{ran} passed; failed: {failed:?}",
        ran - failed.len()
    );
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
