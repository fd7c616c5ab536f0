//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use divcong::arith::{digamma_rational, gcd, main_term, EULER_GAMMA};
use divcong::engine::{sieve_divisor_counts, summatory_bruteforce, summatory_hyperbola};
use divcong::integrate::QuadOptions;
use divcong::signs::{detect_runs, minimal_c2, scan_windows};
use divcong::statistics::{log_grid, mean_value_checks, moment_integrals, moment_table, short_interval_variance, MomentReport};
use divcong::voronoi::{
    fit_residual_constants, kernel_sweep, series_correlation, truncation_residual_meansquare, VoronoiConfig,
    VoronoiSeries,
};
use divcong::{CongruenceParams, DeltaEvaluator, SieveOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

struct Outcome {
    pass: bool,
    detail: String,
    result: Value,
}

fn params(r1: u64, q1: u64, r2: u64, q2: u64) -> CongruenceParams {
    CongruenceParams::new(r1, q1, r2, q2).expect("valid params")
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

fn exact_counts(p: &CongruenceParams, n_max: u64) -> Vec<u64> {
    // count ordered pairs directly
    let mut c = vec![0u64; n_max as usize + 1];
    let (r1, q1, r2, q2) = (p.first.r(), p.first.q(), p.second.r(), p.second.q());
    let mut a = r1;
    while a <= n_max {
        let mut b = r2;
        while a * b <= n_max {
            c[(a * b) as usize] += 1;
            b += q2;
        }
        a += q1;
    }
    c
}

fn c1_exact_counts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    let mut prefix_checked = 0u64;
    for _ in 0..500 {
        let q1 = rng.gen_range(1..=6u64);
        let q2 = rng.gen_range(1..=6u64);
        let r1 = loop {
            let r = rng.gen_range(1..=q1);
            if gcd(r, q1) == 1 {
                break r;
            }
        };
        let r2 = loop {
            let r = rng.gen_range(1..=q2);
            if gcd(r, q2) == 1 {
                break r;
            }
        };
        let p = params(r1, q1, r2, q2);
        let x = rng.gen_range(1.0..=1e4f64);
        if summatory_hyperbola(x, &p) != summatory_bruteforce(x, &p) {
            mismatches += 1;
        }
        let sieve = sieve_divisor_counts(10_000, &p, &SieveOptions::default()).unwrap();
        let oracle = exact_counts(&p, 10_000);
        let (mut s, mut o) = (0u64, 0u64);
        for n in 1..=10_000u64 {
            s += sieve.get(n).unwrap() as u64;
            o += oracle[n as usize];
            if s != o {
                mismatches += 1;
                break;
            }
            prefix_checked += 1;
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("500 cases, {prefix_checked} prefix values, {mismatches} mismatches"),
        result: json!({ "mismatches": mismatches }),
    }
}

fn c2_dirichlet() -> Outcome {
    let p = CongruenceParams::classical();
    let mut worst = 0.0f64;
    for x in [10.0, 1e3, 1e6, 1e9f64] {
        let want = x * x.ln() + (2.0 * EULER_GAMMA - 1.0) * x;
        let got = main_term(x, &p).unwrap();
        worst = worst.max(((got - want) / want).abs());
    }
    let divisor_sum: u64 = (1..=100u64).map(|n| (1..=n).filter(|d| n % d == 0).count() as u64).sum();
    let d100 = DeltaEvaluator::new(p, 100).unwrap().summatory(100.0);
    Outcome {
        pass: worst < 1e-12 && d100 == 482 && divisor_sum == 482,
        detail: format!("max rel err {worst:.2e}, D(100) = {d100}, oracle {divisor_sum}"),
        result: json!({ "max_rel_err": worst, "d100": d100 }),
    }
}

/// Recurrence down to small argument, asymptotic series above 12.
fn digamma_oracle(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    let tail = x2 * (1.0 / 12.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 252.0 - x2 * (1.0 / 240.0 - x2 / 132.0))));
    acc + x.ln() - 0.5 / x - tail
}

fn c3_digamma() -> Outcome {
    let e1 = (digamma_rational(1, 1).unwrap() + EULER_GAMMA).abs();
    let e2 = (digamma_rational(1, 2).unwrap() + EULER_GAMMA + 2.0 * 2f64.ln()).abs();
    let mut worst = 0.0f64;
    for q in 2..=12u64 {
        for r in 1..q {
            let x = r as f64 / q as f64;
            let refl = digamma_rational(q - r, q).unwrap() - digamma_rational(r, q).unwrap() - PI / (PI * x).tan();
            let rec = digamma_rational(r, q).unwrap() + 1.0 / x - digamma_oracle(x + 1.0);
            worst = worst.max(refl.abs()).max(rec.abs());
        }
    }
    Outcome {
        pass: e1 < 1e-12 && e2 < 1e-12 && worst < 1e-10,
        detail: format!("psi(1) err {e1:.1e}, psi(1/2) err {e2:.1e}, identities max err {worst:.1e}"),
        result: json!({ "psi1": e1, "psi_half": e2, "identities": worst }),
    }
}

fn c4_mean_value() -> Outcome {
    let p = params(1, 3, 1, 3);
    let ev = DeltaEvaluator::new(p, 1_000_000).unwrap();
    let checks = mean_value_checks(&[1e4, 1e5, 1e6], &ev, &QuadOptions::default()).unwrap();
    let slope = checks[2].slope_estimate;
    let rel = (slope - 1.0 / 36.0).abs() * 36.0;
    let r: Vec<f64> = checks.iter().map(|c| c.residual_normalized).collect();
    let bounded = r.iter().all(|v| v.abs() <= 1.0);
    let no_growth = r[2].abs() <= 2.0 * r[0].abs().max(r[1].abs()).max(0.05);
    Outcome {
        pass: rel <= 0.15 && bounded && no_growth,
        detail: format!("slope {slope:.5} ({:.1}% off 1/36), residual/T^(3/4) {r:.4?}", rel * 100.0),
        result: serde_json::to_value(&checks).unwrap(),
    }
}

fn moment_grid() -> Vec<f64> {
    log_grid(1e4, 1e7, 31)
}

fn c5_mean_square() -> Outcome {
    let grid = moment_grid();
    let mut slopes = Vec::new();
    for p in [params(1, 2, 1, 2), params(1, 2, 1, 3), params(1, 3, 2, 3)] {
        let ev = DeltaEvaluator::streaming(p, (1e7 * p.modulus_product() as f64) as u64 + 10);
        let ints = moment_integrals(2, &grid, &ev, &QuadOptions::default()).unwrap();
        let r = MomentReport::from_integrals(2, p, grid.clone(), ints).unwrap();
        slopes.push((p.to_string(), r.fitted_exponent, r.fitted_ck));
    }
    let ok = slopes.iter().filter(|s| (s.1 - 1.5).abs() <= 0.05).count();
    Outcome {
        pass: ok >= 3,
        detail: format!(
            "exponents {}",
            slopes.iter().map(|s| format!("{}: {:.4}", s.0, s.1)).collect::<Vec<_>>().join(", ")
        ),
        result: json!(slopes),
    }
}

fn c6_higher_moments() -> Outcome {
    let grid = moment_grid();
    let p = params(1, 2, 5, 6);
    let ev = DeltaEvaluator::streaming(p, (1e7 * p.modulus_product() as f64) as u64 + 10);
    let table = moment_table::<4>(&grid, &ev, &QuadOptions::default()).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    let mut out = Vec::new();
    for k in [3u32, 4] {
        let ints = table.iter().map(|row| row[k as usize - 1]).collect();
        let r = MomentReport::from_integrals(k, p, grid.clone(), ints).unwrap();
        let (med, iqr) = r.spread_from(1e6).unwrap();
        let spread = iqr / med.abs();
        let ok = (r.fitted_exponent - r.target_exponent).abs() <= 0.07 && spread < 0.3;
        pass &= ok;
        parts.push(format!("k={k}: exponent {:.4} (target {:.2}), IQR/median {:.3}", r.fitted_exponent, r.target_exponent, spread));
        out.push(json!({ "k": k, "exponent": r.fitted_exponent, "ck": r.fitted_ck, "top_decade_spread": spread }));
    }
    Outcome { pass, detail: format!("{p}: {}", parts.join("; ")), result: json!(out) }
}

fn c7_kernel() -> Outcome {
    let p = params(1, 2, 1, 3);
    let s_max = 2e5f64.sqrt() + 80.0 + 1.0;
    let ev = DeltaEvaluator::new(p, (6.0 * s_max * s_max) as u64 + 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ts: Vec<f64> = (0..50).map(|_| rng.gen_range(1e5..2e5f64).sqrt()).collect();
    let ladder = [10.0, 20.0, 40.0, 80.0];
    let sweeps: Vec<_> = ladder.iter().map(|&a| kernel_sweep(&ts, a, &ev, 1e-7).unwrap()).collect();
    let base = &sweeps[0];
    let corr: Vec<f64> = (0..2)
        .map(|j| {
            let m: Vec<f64> = base.measured.iter().map(|v| v[j]).collect();
            let pr: Vec<f64> = base.predicted.iter().map(|v| v[j]).collect();
            pearson(&m, &pr)
        })
        .collect();
    let maxes: Vec<f64> = sweeps.iter().map(|s| s.max_abs_residual).collect();
    let l = base.log_factor;
    let f10 = fit_residual_constants(&ladder[0..3], &maxes[0..3], l).unwrap();
    let f20 = fit_residual_constants(&ladder[1..4], &maxes[1..4], l).unwrap();
    let within2 = |a: f64, b: f64| a > 0.0 && b > 0.0 && a / b <= 2.0 && b / a <= 2.0;
    let covered = maxes[0] <= f10.a / 100.0 + f10.b * l;
    let stable = within2(f10.a, f20.a) && within2(f10.b, f20.b);
    Outcome {
        pass: corr.iter().all(|c| *c >= 0.95) && covered && stable,
        detail: format!(
            "corr(zeta=+1,-1) = {:.4}, {:.4}; max residual {:.3e}; A,B = {:.4}, {:.3e} (alpha 10) vs {:.4}, {:.3e} (alpha 20)",
            corr[0], corr[1], maxes[0], f10.a, f10.b, f20.a, f20.b
        ),
        result: json!({ "correlation": corr, "max_residuals": maxes, "fit_10": f10, "fit_20": f20 }),
    }
}

fn c8_sign_changes() -> Outcome {
    let p = params(1, 2, 1, 3);
    let ev = DeltaEvaluator::new(p, 6 * (1_000_000 + 31 * 1000 + 10)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let starts: Vec<f64> = (0..100).map(|_| rng.gen_range(1e5..1e6f64)).collect();
    let res = scan_windows(&ev, &starts, 0.05, 30.0, 1.0).unwrap();
    let crossing = res.iter().filter(|r| r.crossing_count > 0).count();
    let both = res.iter().filter(|r| r.found_positive_extreme && r.found_negative_extreme).count();
    // witnesses are re-checked here against the exact evaluator
    let verified = res.iter().all(|r| {
        r.witnesses.t1.is_none_or(|t| ev.delta_scaled(t) >= 0.05 * t.powf(0.25))
            && r.witnesses.t2.is_none_or(|t| ev.delta_scaled(t) <= -0.05 * t.powf(0.25))
    });
    let m = minimal_c2(&res);
    Outcome {
        pass: crossing == 100 && both >= 95 && verified,
        detail: format!(
            "{crossing}/100 windows with a crossing, {both}/100 with both witnesses; smallest c2 for 100/100: crossings {:.4}, witnesses {:.4}",
            m.crossing.unwrap_or(f64::NAN),
            m.witnesses.unwrap_or(f64::NAN)
        ),
        result: json!({ "windows": res, "minimal_c2": m }),
    }
}

fn c9_positivity() -> Outcome {
    let p = params(1, 2, 1, 3);
    let ev = DeltaEvaluator::new(p, 6 * 1_600_010).unwrap();
    let mut pass = true;
    let mut rows = Vec::new();
    for t in [1e5, 2e5, 4e5, 8e5] {
        let r = detect_runs(t, 0.05, &ev).unwrap();
        pass &= r.measure_plus >= 0.05 * t && r.measure_minus >= 0.05 * t;
        rows.push(json!({
            "T": t, "measure_plus": r.measure_plus, "measure_minus": r.measure_minus,
            "runs_plus": r.runs_plus.len(), "runs_minus": r.runs_minus.len(),
            "longest_plus": r.longest_plus, "longest_minus": r.longest_minus,
        }));
    }
    let detail = rows
        .iter()
        .map(|r| {
            let t = r["T"].as_f64().unwrap();
            format!(
                "T={t:.0}: +{:.3}T -{:.3}T",
                r["measure_plus"].as_f64().unwrap() / t,
                r["measure_minus"].as_f64().unwrap() / t
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    Outcome { pass, detail, result: json!(rows) }
}

fn c10_short_interval() -> Outcome {
    let p = params(1, 2, 1, 3);
    let ev = DeltaEvaluator::new(p, 6 * 400_200).unwrap();
    let hs = [1.0, 4.0, 16.0, 64.0, 150.0];
    let mut maxes = Vec::new();
    let mut rows = Vec::new();
    for t in [1e5, 4e5] {
        let mut m = 0.0f64;
        for &h in &hs {
            let r = short_interval_variance(t, h, &ev, &QuadOptions::default()).unwrap();
            m = m.max(r.ratio);
            rows.push(r);
        }
        maxes.push(m);
    }
    Outcome {
        pass: maxes[1] <= 1.25 * maxes[0],
        detail: format!("max ratio {:.4e} at T=1e5, {:.4e} at T=4e5 (growth {:.3})", maxes[0], maxes[1], maxes[1] / maxes[0]),
        result: serde_json::to_value(&rows).unwrap(),
    }
}

fn c11_voronoi() -> Outcome {
    let p = params(1, 2, 1, 3);
    let ev = DeltaEvaluator::new(p, 6 * 20_010).unwrap();
    let s3 = VoronoiSeries::new(VoronoiConfig::new(1e3, p).unwrap());
    let s2 = VoronoiSeries::new(VoronoiConfig::new(1e2, p).unwrap());
    let corr = series_correlation(1e4, 2e4, 20_000, &s3, &ev).unwrap();
    let o = QuadOptions::default();
    let m2 = truncation_residual_meansquare(1e4, &s2, &ev, &o).unwrap();
    let m3 = truncation_residual_meansquare(1e4, &s3, &ev, &o).unwrap();
    Outcome {
        pass: corr >= 0.9 && m3.mean_square < m2.mean_square,
        detail: format!(
            "corr {corr:.4} (y=1e3); residual mean square {:.4} (y=1e2) -> {:.4} (y=1e3)",
            m2.mean_square, m3.mean_square
        ),
        result: json!({ "correlation": corr, "y100": m2, "y1000": m3 }),
    }
}

type Criterion = (u32, &'static str, u64, fn() -> Outcome);

const DETERMINISTIC: [Criterion; 8] = [
    (4, "mean value", 120, c4_mean_value),
    (5, "mean square exponent", 600, c5_mean_square),
    (6, "third and fourth moments", 900, c6_higher_moments),
    (7, "kernel lemma", 300, c7_kernel),
    (8, "sign changes", 300, c8_sign_changes),
    (9, "positivity measure", 300, c9_positivity),
    (10, "short-interval variance", 600, c10_short_interval),
    (11, "voronoi residual", 300, c11_voronoi),
];

fn report(n: u32, name: &str, budget: u64, elapsed: Duration, o: &Outcome) -> bool {
    let in_time = elapsed <= Duration::from_secs(budget);
    let pass = o.pass && in_time;
    println!(
        "criterion {n:>2} [{}] {name}: {} ({:.1}s, budget {budget}s)",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn timed(f: fn() -> Outcome) -> (Outcome, Duration) {
    let t0 = Instant::now();
    let o = f();
    (o, t0.elapsed())
}

fn main() {
    let mut all = true;
    let quick: [Criterion; 3] = [
        (1, "exact-count equivalence", 10, c1_exact_counts),
        (2, "dirichlet reduction", 1, c2_dirichlet),
        (3, "digamma", 1, c3_digamma),
    ];
    for (n, name, budget, f) in quick {
        let (o, dt) = timed(f);
        all &= report(n, name, budget, dt, &o);
    }

    let pool = |threads| rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let many = pool(8);
    let mut first = Vec::new();
    for (n, name, budget, f) in DETERMINISTIC {
        let (o, dt) = many.install(|| timed(f));
        all &= report(n, name, budget, dt, &o);
        first.push(o.result);
    }

    let one = pool(1);
    let rerun_start = Instant::now();
    let mut differing = Vec::new();
    for ((n, _, _, f), before) in DETERMINISTIC.iter().zip(&first) {
        let again = one.install(f);
        if &again.result != before {
            differing.push(*n);
        }
    }
    let o = Outcome {
        pass: differing.is_empty(),
        detail: if differing.is_empty() {
            "criteria 4-11 identical with 8 and 1 threads".to_string()
        } else {
            format!("results differ for criteria {differing:?}")
        },
        result: Value::Null,
    };
    let rerun_budget = DETERMINISTIC.iter().map(|c| c.2).sum();
    all &= report(12, "determinism", rerun_budget, rerun_start.elapsed(), &o);

    println!("acceptance: {}", if all { "all criteria passed" } else { "FAILURES" });
    if !all {
        std::process::exit(1);
    }
}
