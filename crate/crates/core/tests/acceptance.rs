//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any fails.

use std::time::Instant;

use l2frac::analysis::{Campaign, ConvergenceTable};
use l2frac::monotone::{g_left, g_right, INVERSE_CAP};
use l2frac::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

const ALPHAS: [f64; 3] = [0.3, 0.5, 0.7];

/// Published errors at t = 1 for M = 2^5, 2^7, ..., 2^15 and alpha = 0.3, 0.5, 0.7.
const AT1_R1: [[f64; 6]; 3] = [
    [3.324e-3, 8.297e-4, 2.073e-4, 5.182e-5, 1.296e-5, 3.239e-6],
    [4.557e-3, 1.141e-3, 2.852e-4, 7.132e-5, 1.783e-5, 4.457e-6],
    [4.501e-3, 1.127e-3, 2.818e-4, 7.047e-5, 1.762e-5, 4.405e-6],
];
const AT1_R095: [[f64; 6]; 3] = [
    [1.570e-4, 3.435e-6, 7.601e-8, 1.701e-9, 3.843e-11, 8.771e-13],
    [5.440e-4, 1.828e-5, 6.038e-7, 1.972e-8, 6.384e-10, 2.053e-11],
    [9.278e-4, 4.524e-5, 2.101e-6, 9.477e-8, 4.191e-9, 1.827e-10],
];
/// Published maximum nodal errors for r = (3 - alpha)/alpha.
const MAX_OPT: [[f64; 6]; 3] = [
    [6.510e-2, 1.542e-3, 3.652e-5, 8.648e-7, 2.048e-8, 4.851e-10],
    [3.142e-3, 9.820e-5, 3.069e-6, 9.590e-8, 2.997e-9, 9.365e-11],
    [1.273e-3, 5.247e-5, 2.164e-6, 8.922e-8, 3.679e-9, 1.517e-10],
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Agreement to three significant digits: within half a unit of the fourth digit of `want`.
fn three_digits(got: f64, want: f64) -> bool {
    let unit = 10f64.powf(want.abs().log10().floor() - 3.0);
    (got - want).abs() <= 0.5 * unit * (1.0 + 1e-9)
}

fn table_checks(
    table: &ConvergenceTable,
    grading: GradingRule,
    metric: Metric,
    published: Option<&[[f64; 6]; 3]>,
    rate_ok: impl Fn(usize, &[f64]) -> bool,
) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (ai, &alpha) in ALPHAS.iter().enumerate() {
        let row = table.row(grading, alpha).expect("row present");
        let errors: Vec<f64> = row.errors(metric).into_iter().map(|e| e.unwrap_or(f64::NAN)).collect();
        // row.rates follow the campaign metric; recompute for the metric under test
        let steps: Vec<usize> = row.cells.iter().map(|c| c.steps).collect();
        let rates = observed_rates(&errors, &steps).unwrap_or_else(|_| vec![f64::NAN; steps.len() - 1]);
        if let Some(p) = published {
            for (k, (&e, &w)) in errors.iter().zip(&p[ai]).enumerate() {
                if !three_digits(e, w) {
                    pass = false;
                    detail.push(format!("a={alpha} M=2^{}: {e:.4e} vs {w:.3e}", 5 + 2 * k));
                }
            }
        }
        if !rate_ok(ai, &rates) {
            pass = false;
        }
        let r: Vec<String> = rates.iter().map(|r| format!("{r:.3}")).collect();
        detail.push(format!("a={alpha} rates [{}]", r.join(" ")));
    }
    outcome(pass, detail.join("; "))
}

fn criteria_1_to_3() -> Vec<(String, Outcome)> {
    let campaign = Campaign::scalar(
        ALPHAS.to_vec(),
        vec![
            GradingRule::Fixed(1.0),
            GradingRule::ThreeMinusAlpha,
            GradingRule::ThreeMinusAlphaOver(0.95),
            GradingRule::ThreeMinusAlphaOverAlpha,
        ],
        Campaign::paper_steps(),
        Metric::AtFinal,
    );
    let table = build_table(&campaign);
    let mut out = Vec::new();
    out.push((
        "C1 r=1, error at t=1 matches published table, rates 1.000 +- 0.005".to_string(),
        table_checks(&table, GradingRule::Fixed(1.0), Metric::AtFinal, Some(&AT1_R1), |_, rates| {
            rates.iter().all(|r| (r - 1.0).abs() <= 0.005)
        }),
    ));
    out.push((
        "C2 r=(3-a)/a, max nodal errors match published table, rates 3-a +- 0.005".to_string(),
        table_checks(
            &table,
            GradingRule::ThreeMinusAlphaOverAlpha,
            Metric::MaxNodal,
            Some(&MAX_OPT),
            |ai, rates| rates.iter().all(|r| (r - (3.0 - ALPHAS[ai])).abs() <= 0.005),
        ),
    ));
    let mild = table_checks(&table, GradingRule::ThreeMinusAlpha, Metric::MaxNodal, None, |ai, rates| {
        let a = ALPHAS[ai];
        rates.iter().all(|r| (r - a * (3.0 - a)).abs() <= 0.005)
    });
    let positive = table_checks(
        &table,
        GradingRule::ThreeMinusAlphaOver(0.95),
        Metric::AtFinal,
        None,
        |ai, rates| {
            let target = 3.0 - ALPHAS[ai];
            let first = (rates[0] - target).abs();
            let last = (rates[rates.len() - 1] - target).abs();
            last <= 0.05 && last <= first
        },
    );
    // informational: at M = 2^15 these errors sit a few ulps of u(1) = 1 above roundoff
    let mut matched = 0;
    let mut misses = Vec::new();
    for (ai, &alpha) in ALPHAS.iter().enumerate() {
        let row = table.row(GradingRule::ThreeMinusAlphaOver(0.95), alpha).expect("row present");
        for (k, (e, &w)) in row.errors(Metric::AtFinal).iter().zip(&AT1_R095[ai]).enumerate() {
            let e = e.unwrap_or(f64::NAN);
            if three_digits(e, w) {
                matched += 1;
            } else {
                misses.push(format!("a={alpha} M=2^{}: {e:.4e} vs {w:.3e} (abs {:.1e})", 5 + 2 * k, (e - w).abs()));
            }
        }
    }
    out.push((
        "C3 r=3-a max nodal rates a*r +- 0.005; r=(3-a)/0.95 rates at t=1 trend to 3-a (+-0.05)".to_string(),
        outcome(
            mild.pass && positive.pass,
            format!(
                "[3-a] {} | [(3-a)/0.95] {}; published digits matched {matched}/18 {}",
                mild.detail,
                positive.detail,
                misses.join(", ")
            ),
        ),
    ));
    out
}

fn criterion_4() -> Outcome {
    let mut fails = Vec::new();
    for a in 1..=9 {
        let alpha = a as f64 / 10.0;
        let mesh = TemporalMesh::uniform(1.0, 128).unwrap();
        let cert = certify(&mesh, alpha, 1.0, Variant::Standard).unwrap();
        if !cert.passed {
            fails.push(format!("uniform a={alpha}: {:?}", cert.first_failure));
        }
    }
    let mut min_entry = f64::INFINITY;
    let mut count = 0;
    for &alpha in &ALPHAS {
        for r in [2.0, 3.0, 5.0] {
            let sb = sigma_bar(alpha, 1.0).unwrap();
            let k = compute_k(r, sb.value).unwrap();
            for m in [16, 64, 128] {
                let mesh = TemporalMesh::modified_graded(1.0, m, r, k).unwrap();
                let mut cert = certify(&mesh, alpha, 1.0, Variant::Standard).unwrap();
                let op = L2Operator::new(mesh, alpha, Variant::Standard).unwrap();
                cert.verify_inverse(&op, INVERSE_CAP, 1e-12).unwrap();
                min_entry = min_entry.min(cert.inverse_min_entry.unwrap());
                count += 1;
                if !cert.passed {
                    fails.push(format!("a={alpha} r={r} K={k} M={m}: {:?}", cert.first_failure));
                }
            }
        }
    }
    outcome(
        fails.is_empty(),
        format!(
            "9 uniform + {count} modified graded meshes; min inverse entry {min_entry:.3e}{}",
            if fails.is_empty() { String::new() } else { format!("; failures: {}", fails.join(", ")) }
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut signs_ok = true;
    for _ in 0..20 {
        let alpha = rng.gen_range(0.1..0.9);
        let theta = rng.gen_range(0.5..=1.0);
        let r = rng.gen_range(1.0..5.0);
        let m = rng.gen_range(4..=64);
        let k = compute_k(r, sigma_bar(alpha, theta).unwrap().value).unwrap();
        let mesh = TemporalMesh::modified_graded(1.0, m, r, k).unwrap();
        let matrix = L2Operator::new(mesh.clone(), alpha, Variant::Standard).unwrap().matrix();
        let betas = beta_schedule(&mesh, alpha, theta, 1).unwrap();
        let f = factorize(&matrix, &betas).unwrap();
        worst = worst.max(f.product_error(&matrix));
        signs_ok &= f.sign_pattern(1e-12).ok;
    }
    outcome(
        worst <= 1e-12 && signs_ok,
        format!("max relative product error {worst:.2e}; sign pattern ok: {signs_ok}"),
    )
}

fn random_mesh(rng: &mut ChaCha8Rng, steps: usize) -> TemporalMesh {
    let mut nodes = vec![0.0, rng.gen_range(0.01..0.1)];
    let mut tau = nodes[1];
    for _ in 1..steps {
        tau *= rng.gen_range(1.0..=3.0);
        nodes.push(nodes.last().unwrap() + tau);
    }
    TemporalMesh::from_nodes(nodes).unwrap()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut c_err, mut l_err, mut q_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let steps = rng.gen_range(3..=20);
        let alpha = rng.gen_range(0.05..0.95);
        let mesh = random_mesh(&mut rng, steps);
        let op = L2Operator::new(mesh.clone(), alpha, Variant::Standard).unwrap();
        let t = mesh.nodes();
        let ones = vec![1.0; steps + 1];
        let lin: Vec<f64> = t.to_vec();
        let quad: Vec<f64> = t.iter().map(|s| s * s).collect();
        for m in 1..=steps {
            let row = op.row(m);
            let scale: f64 = row.coeffs.iter().map(|c| c.abs()).sum();
            c_err = c_err.max(row.apply(&ones).unwrap().abs() / scale);
            c_err = c_err.max(op.apply_nodes(&ones, m).unwrap().abs() / scale);
            if m == 1 {
                let want = t[1].powf(1.0 - alpha) / gamma(2.0 - alpha);
                l_err = l_err.max((row.apply(&lin).unwrap() - want).abs() / want);
            } else {
                let want = 2.0 * t[m].powf(2.0 - alpha) / gamma(3.0 - alpha);
                q_err = q_err.max((row.apply(&quad).unwrap() - want).abs() / want);
                q_err = q_err.max((op.apply_nodes(&quad, m).unwrap() - want).abs() / want);
            }
        }
    }
    outcome(
        c_err <= 1e-12 && l_err <= 1e-12 && q_err <= 1e-10,
        format!("constant {c_err:.2e}, linear (m=1) {l_err:.2e}, quadratic (m>=2) {q_err:.2e}"),
    )
}

fn bisection(alpha: f64, theta: f64) -> f64 {
    let h = |s: f64| g_left(s, alpha).unwrap() - g_right(s, alpha, theta).unwrap();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_7() -> Outcome {
    let mut diff = 0.0f64;
    let mut residual = 0.0f64;
    let mut increasing = true;
    for a in 1..=9 {
        let alpha = a as f64 / 10.0;
        for th in 0..=4 {
            let theta = 0.5 + th as f64 / 8.0;
            let sb = sigma_bar(alpha, theta).unwrap();
            diff = diff.max((sb.value - bisection(alpha, theta)).abs());
            residual = residual.max(sb.residual);
            // strict until the iteration stagnates at the fixed point
            let its = &sb.iterates;
            increasing &= its.windows(2).all(|w| w[1] > w[0] || (w[1] == w[0] && w[1] == sb.value));
            increasing &= its.iter().all(|&s| (0.0..1.0).contains(&s));
        }
    }
    outcome(
        diff <= 1e-10 && residual <= 1e-12 && increasing,
        format!("max |fixed point - bisection| {diff:.2e}; max residual {residual:.2e}; increasing: {increasing}"),
    )
}

fn criterion_8() -> Outcome {
    let alpha = 0.5;
    let r = (3.0 - alpha) / alpha;
    let ms = [64usize, 128, 256, 512, 1024];
    let temporal: Vec<f64> = ms
        .iter()
        .map(|&m| {
            let mesh = TemporalMesh::graded(1.0, m, r).unwrap();
            let p = Parabolic1DProblem::sin_grid_exact(alpha, 1.0, 127);
            solve_parabolic_1d(&p, &mesh, Variant::Standard).unwrap().final_l2_error().unwrap()
        })
        .collect();
    let t_rates = observed_rates(&temporal, &ms).unwrap();
    let cells = [8usize, 16, 32, 64, 128];
    let mesh = TemporalMesh::graded(1.0, 1024, r).unwrap();
    let spatial: Vec<f64> = cells
        .iter()
        .map(|&n| {
            let p = Parabolic1DProblem::sin_manufactured(alpha, 1.0, n - 1);
            solve_parabolic_1d(&p, &mesh, Variant::Standard).unwrap().final_l2_error().unwrap()
        })
        .collect();
    let s_rates = observed_rates(&spatial, &cells).unwrap();
    let ok_t = t_rates.iter().all(|q| (q - (3.0 - alpha)).abs() <= 0.1);
    let ok_s = s_rates.iter().all(|q| (q - 2.0).abs() <= 0.1);
    let fmt = |v: &[f64]| v.iter().map(|q| format!("{q:.3}")).collect::<Vec<_>>().join(" ");
    outcome(
        ok_t && ok_s,
        format!("temporal rates [{}] (target 2.5); spatial rates [{}] (target 2.0)", fmt(&t_rates), fmt(&s_rates)),
    )
}

fn criterion_9() -> Outcome {
    let alpha = 0.5;
    let mut pass = true;
    let mut detail = Vec::new();
    for r in [1.0, (3.0 - alpha) / 0.95, (3.0 - alpha) / alpha, (3.0 - alpha) / 0.4] {
        let mesh = TemporalMesh::graded(1.0, 1024, r).unwrap();
        let sol = solve_scalar(&ScalarProblem::t_alpha(alpha, 1.0), &mesh, Variant::Standard).unwrap();
        let env = envelope_e(&mesh, alpha, r).unwrap();
        let pts = pointwise_comparison(sol.errors.as_ref().unwrap(), &env, &mesh).unwrap();
        let mut ratios: Vec<f64> = pts.iter().skip(3).map(|p| p.ratio).collect();
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let spread = ratios[ratios.len() - 1] / ratios[ratios.len() / 2];
        pass &= spread < 50.0 && spread.is_finite();
        detail.push(format!("r={r:.4}: max/median {spread:.2}"));
    }
    outcome(pass, detail.join("; "))
}

fn main() {
    // `cargo test` passes harness flags; a name filter that excludes this suite skips it
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let start = Instant::now();
    let mut results: Vec<(String, Outcome)> = Vec::new();
    let mut timed = |name: &str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        results.push((format!("{name} ({:.1}s)", t.elapsed().as_secs_f64()), o));
    };
    timed("C4 certification: uniform a=0.1..0.9, modified graded meshes with auto (sigma_bar, K), inverse >= -1e-12", &criterion_4);
    timed("C5 factor identity <= 1e-12 on 20 random admissible meshes, M-matrix signs", &criterion_5);
    timed("C6 exactness: constants 1e-12, linear at m=1, quadratic 1e-10, rho in [1,3]", &criterion_6);
    timed("C7 sigma_bar: fixed point vs bisection 1e-10, increasing iterates, residual 1e-12", &criterion_7);
    timed("C8 parabolic 1D: temporal rate 3-a +- 0.1, spatial rate 2.0 +- 0.1", &criterion_8);
    timed("C9 pointwise |e|/E bounded: max/median < 50", &criterion_9);
    let t = Instant::now();
    let mut table_results = criteria_1_to_3();
    let elapsed = t.elapsed().as_secs_f64();
    for (name, _) in table_results.iter_mut() {
        name.push_str(&format!(" (shared sweep {elapsed:.1}s)"));
    }
    results.splice(0..0, table_results);
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}", if o.pass { "PASS" } else { "FAIL" });
        println!("     {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
