//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::time::Instant;

use common::*;
use edgelab::chain::condition_chain;
use edgelab::cumulant::cumulants_at_zero;
use edgelab::edgeworth::{classical_expansion, full_expansion, q_value, DropRule};
use edgelab::experiment::{decay_steps, run_experiment, ExperimentParams, ExperimentReport};
use edgelab::jet::Jet;
use edgelab::oracle::{char_fn, conditioned_sum_pmf, invert_dft, residue_law, sum_pmf};
use edgelab::polynomial::{gaussian_density, hermite_values};
use edgelab::quadrature::CompositeRule;
use edgelab::resonance::qv_bracket;
use edgelab::rpf::{rpf_triplets, verify_rpf};
use edgelab::scenario::{Generator, Scenario, PRESETS};
use edgelab::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let n = 1 + (seed as usize % 10);
        let spec = random_chain(1000 + seed, n, 3, 1 + seed as i64 % 3);
        let brute = brute_pmf(&spec, None);
        worst = worst.max(sup_diff(&brute, &sum_pmf(&spec, None).map_err(err)?));
        for t in [0.4, 1.3, 2.9, std::f64::consts::PI] {
            let d = (char_fn(&spec, t, None).map_err(err)? - brute_char_fn(&spec, t, None)).norm();
            worst = worst.max(d);
        }
        let pins = random_pins(&spec, seed, 1 + seed as usize % 3);
        let cond_brute = brute_pmf(&spec, Some(&pins));
        worst = worst.max(sup_diff(&cond_brute, &sum_pmf(&spec, Some(&pins)).map_err(err)?));
        for t in [0.7, 2.2] {
            let d = (char_fn(&spec, t, Some(&pins)).map_err(err)? - brute_char_fn(&spec, t, Some(&pins))).norm();
            worst = worst.max(d);
        }
        let cond = condition_chain(&spec, &pins).map_err(err)?;
        worst = worst.max(sup_diff(&cond_brute, &conditioned_sum_pmf(&cond).map_err(err)?));
        let lp = brute_pin_probability(&spec, &pins);
        worst = worst.max((cond.log_pin_probability.exp() - lp).abs());
        for m in 2..=3usize {
            let law = residue_law(&spec, m, Some(&pins)).map_err(err)?;
            let mut masses = vec![0.0; m];
            for (&k, &p) in &cond_brute {
                masses[k.rem_euclid(m as i64) as usize] += p;
            }
            let tv: f64 = 0.5 * masses.iter().zip(&law.masses).map(|(a, b)| (a - b).abs()).sum::<f64>();
            worst = worst.max(tv);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < 1e-12 && secs < 30.0,
        format!("max deviation {worst:.2e} (< 1e-12), {secs:.1}s (< 30s)"),
    ))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let g = Generator::RandomElliptic { seed: 21, eps0: 0.3, states: 4, bound: 3 };
    let mut worst: f64 = 0.0;
    for n in [16, 250, 1000, 2000] {
        let spec = g.generate(n).map_err(err)?;
        let a = sum_pmf(&spec, None).map_err(err)?;
        let b = invert_dft(&spec, None).map_err(err)?;
        worst = worst.max(a.sup_distance(&b));
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < 1e-10 && secs < 60.0,
        format!("max sup difference {worst:.2e} (< 1e-10) up to N = 2000, {secs:.1}s (< 60s)"),
    ))
}

/// `sup_{0 < t <= sigma/2} |E e^{itW} - e^{-t^2/2}(1 + Q_r(t))| sigma^{r+1} / max(|t|, |t|^{(r+3)(r+2)})`.
fn char_fn_bound_metric(scenario: &Scenario, n: usize, r: usize) -> Result<f64, String> {
    let spec = scenario.generate(n).map_err(err)?;
    let c = cumulants_at_zero(&spec, r, None).map_err(err)?;
    let points = 400;
    let mut best: f64 = 0.0;
    for i in 1..=points {
        let t = 0.5 * c.sigma * i as f64 / points as f64;
        let phi = char_fn(&spec, t / c.sigma, None).map_err(err)? * Complex64::from_polar(1.0, -t * c.mean / c.sigma);
        let q = q_value(&c, r, t).map_err(err)?;
        let diff = (phi - (1.0 + q) * (-t * t / 2.0).exp()).norm();
        let denom = t.max(t.powi(((r + 3) * (r + 2)) as i32));
        best = best.max(diff * c.sigma.powi(r as i32 + 1) / denom);
    }
    Ok(best)
}

fn criterion_3() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["random-elliptic", "random-elliptic-b"] {
        let s = Scenario::preset(name).map_err(err)?;
        for r in [1, 2] {
            let vals = s
                .ladder
                .iter()
                .map(|&n| char_fn_bound_metric(&s, n, r))
                .collect::<Result<Vec<_>, _>>()?;
            let max_ratio = vals.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
            ok &= max_ratio <= 2.0;
            parts.push(format!("{name} r={r}: max ratio {max_ratio:.3}"));
        }
    }
    Ok((ok, format!("{} (<= 2)", parts.join("; "))))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["random-elliptic", "random-elliptic-b"] {
        let s = Scenario::preset(name).map_err(err)?;
        for r in [1, 2] {
            let rep = run_experiment(&format!("llt-order-{r}"), &s, &ExperimentParams::default()).map_err(err)?;
            let vals = rep.series(&format!("err_{r}"));
            let ratios: Vec<String> = vals.windows(2).map(|w| format!("{:.3}", w[1] / w[0])).collect();
            ok &= rep.passed();
            parts.push(format!("{name} r={r}: ratios [{}]", ratios.join(", ")));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((ok && secs < 300.0, format!("{} (<= 0.8), {secs:.1}s (< 300s)", parts.join("; "))))
}

fn criterion_5() -> Outcome {
    let s = Scenario::preset("even-lattice").map_err(err)?;
    let mut classical = Vec::new();
    let mut generalized = Vec::new();
    for &n in &s.ladder {
        let spec = s.generate(n).map_err(err)?;
        let pmf = sum_pmf(&spec, None).map_err(err)?;
        let cl = classical_expansion(&spec, 1, None).map_err(err)?;
        let full = full_expansion(&spec, 1, DropRule::default()).map_err(err)?;
        classical.push(cl.sup_error(&pmf) * cl.sigma);
        generalized.push(full.sup_error(&pmf) * full.sigma);
    }
    let at_1024 = s.ladder.iter().position(|&n| n == 1024).ok_or("ladder lacks 1024")?;
    let ok = classical.iter().all(|&v| v >= 0.1)
        && generalized[at_1024] <= 0.05
        && generalized.windows(2).all(|w| w[1] < w[0]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ");
    Ok((
        ok,
        format!(
            "classical sigma*err [{}] (>= 0.1); generalized sigma*err [{}] (<= 0.05 at N=1024, decreasing)",
            fmt(&classical),
            fmt(&generalized)
        ),
    ))
}

fn step_flags(rep: &ExperimentReport, metric: &str, params: &ExperimentParams) -> Vec<bool> {
    decay_steps(&rep.ladder(), &rep.series(metric), params.decay_ratio, params.floor)
}

fn criterion_6() -> Outcome {
    let params = ExperimentParams { order: 2, ..ExperimentParams::default() };
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, expect) in [("sparse-odd-0.05", false), ("sparse-odd-0.5", true)] {
        let s = Scenario::preset(name).map_err(err)?;
        let rep = run_experiment("necessity", &s, &params).map_err(err)?;
        let phi = step_flags(&rep, "char_fn_scaled", &params);
        let e = step_flags(&rep, "err_2", &params);
        let agree = phi == e;
        let budget_phi = phi.iter().all(|&x| x);
        let budget_err = e.iter().all(|&x| x);
        ok &= agree && budget_phi == expect && budget_err == expect;
        parts.push(format!("{name}: char-fn steps {phi:?}, err_2 steps {e:?}"));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_7() -> Outcome {
    let mut ok = true;
    let mut holding = Vec::new();
    for name in PRESETS {
        let s = Scenario::preset(name).map_err(err)?;
        for r in [1, 2] {
            let params = ExperimentParams {
                order: r,
                drop_rule: DropRule::with_threshold(10.0),
                ..ExperimentParams::default()
            };
            let rep = run_experiment("prokhorov", &s, &params).map_err(err)?;
            let holds = rep.verdict("prokhorov-criterion").is_some_and(|v| v.pass);
            if holds {
                let slots = rep.series("active_resonant_slots").iter().all(|&a| a == 0.0);
                let decays = rep.verdict("prokhorov-expansion-decay").is_some_and(|v| v.pass);
                ok &= slots && decays;
                holding.push(format!("{name} r={r} (a=0 only: {slots}, decays: {decays})"));
            }
        }
    }
    ok &= !holding.is_empty();
    Ok((ok, format!("criterion holds for: {}", holding.join(", "))))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let params = ExperimentParams { order: 1, ..ExperimentParams::default() };
    let mut ok = true;
    let mut parts = Vec::new();
    for name in PRESETS {
        let s = Scenario::preset(name).map_err(err)?;
        let rep = run_experiment("conditional-equivalence", &s, &params).map_err(err)?;
        let tv = rep.verdict("conditional-uniformity-decay").is_some_and(|v| v.pass);
        let llt = rep.verdict("conditional-llt-decay").is_some_and(|v| v.pass);
        ok &= rep.passed();
        parts.push(format!("{name}: tv {}, llt {}", pf(tv), pf(llt)));
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((ok, format!("{}; {secs:.1}s", parts.join("; "))))
}

fn criterion_9() -> Outcome {
    let spec = Scenario::preset("random-elliptic").map_err(err)?.generate(200).map_err(err)?;
    let zero = rpf_triplets(&spec, Complex64::new(0.0, 0.0), None).map_err(err)?;
    let dev = zero
        .iter()
        .map(|t| t.h.iter().map(|h| (h - 1.0).norm()).fold((t.lambda - 1.0).norm(), f64::max))
        .fold(0.0, f64::max);
    let mut ok = dev < 1e-13;
    let (mut resid, mut ratio): (f64, f64) = (0.0, 0.0);
    let d = 0.05 / 2f64.sqrt();
    for z in [
        Complex64::new(0.05, 0.0),
        Complex64::new(-0.05, 0.0),
        Complex64::new(0.0, 0.05),
        Complex64::new(0.0, -0.05),
        Complex64::new(d, d),
        Complex64::new(0.02, -0.01),
    ] {
        let tr = rpf_triplets(&spec, z, None).map_err(err)?;
        let rep = verify_rpf(&spec, z, None, &tr).map_err(err)?;
        resid = resid.max(rep.max_primal_mid).max(rep.max_dual_mid);
        ratio = ratio.max(rep.decay_ratio.unwrap_or(f64::INFINITY));
    }
    ok &= resid < 1e-10 && ratio < 0.95;
    Ok((
        ok,
        format!("z=0 deviation {dev:.1e} (< 1e-13); max mid residual {resid:.2e} (< 1e-10); max decay ratio {ratio:.3} (< 0.95)"),
    ))
}

fn criterion_10() -> Outcome {
    let rule = CompositeRule::new(-14.0, 14.0, 200, 16);
    let mut fact = vec![1.0];
    for k in 1..=10 {
        fact.push(fact[k - 1] * k as f64);
    }
    let mut herm: f64 = 0.0;
    for j in 0..=10 {
        for k in 0..=10 {
            let v = rule.integrate_real(|x| {
                let he = hermite_values(10, x);
                he[j] * he[k] * gaussian_density(x)
            });
            let want = if j == k { fact[k] } else { 0.0 };
            herm = herm.max((v - want).abs() / (fact[j] * fact[k]).sqrt());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut jet: f64 = 0.0;
    for _ in 0..200 {
        let order = rng.gen_range(1..8);
        let mut c: Vec<Complex64> = (0..=order)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        c[0] += Complex64::new(1.5, 0.0);
        let j = Jet::from_coeffs(c);
        let back = j.log().map_err(err)?.exp();
        for k in 0..=order {
            jet = jet.max((back.coeff(k) - j.coeff(k)).norm());
        }
    }

    let mut sandwich = true;
    let mut bracket = true;
    for seed in 0..50u64 {
        let k = 1 + seed as i64 % 3;
        let spec = random_chain(5000 + seed, 2 + seed as usize % 20, 3, k);
        for m in 2..=(2 * k as usize) {
            let law = residue_law(&spec, m, None).map_err(err)?;
            let tv = law.tv_to_uniform;
            let s: f64 = law.fourier[1..].iter().map(|c| c.norm()).sum();
            sandwich &= law.max_nontrivial_fourier() <= 2.0 * tv + 1e-14 && tv <= 0.5 * s + 1e-14;
        }
        for (n, marg) in spec.marginals().iter().enumerate() {
            let mut law = vec![0.0; (2 * k + 1) as usize];
            for (x, p) in marg.iter().enumerate() {
                law[(spec.values(n + 1)[x] + k) as usize] += p;
            }
            let b = qv_bracket(&law);
            bracket &= b.lower_holds && b.upper_holds;
        }
    }
    Ok((
        herm < 1e-8 && jet < 1e-12 && sandwich && bracket,
        format!(
            "hermite {herm:.1e} (< 1e-8); jet round trip {jet:.1e} (< 1e-12); sandwich {}; q-v bracket {}",
            pf(sandwich),
            pf(bracket)
        ),
    ))
}

fn pf(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle equivalence", criterion_1),
        ("dual-route inversion", criterion_2),
        ("characteristic-function expansion bound", criterion_3),
        ("classical local expansion decay", criterion_4),
        ("periodicity obstruction and repair", criterion_5),
        ("necessity on sparse-odd chains", criterion_6),
        ("drop criterion", criterion_7),
        ("conditional-uniformity equivalence", criterion_8),
        ("Perron-Frobenius triplets", criterion_9),
        ("identities", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} | {} [{:.1}s]",
            i + 1,
            pf(pass),
            name,
            detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
