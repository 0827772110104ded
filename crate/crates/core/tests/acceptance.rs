//! One test per acceptance criterion. Each prints a PASS/FAIL line before
//! asserting, so the log reads as a checklist under `--nocapture`.

use cms_core::analysis::boundary::{csc_check, r_apply, Omega};
use cms_core::analysis::certificates::interval_contraction;
use cms_core::analysis::{classify, Consistency, Degeneracy, Existence};
use cms_core::coding::{holder_check, random_periodic_word, random_word_pair, SymbolWord};
use cms_core::fixtures;
use cms_core::rational::{frac, int};
use cms_core::refine::{
    build_refinement, coding_commute_check, cylinder_pushforward_check, operator_invariance, parse_cuts,
};
use cms_core::simulation::rng::RngStream;
use cms_core::simulation::{
    default_test_functions, invariance_residual, l_moment_check, occupation_tightness, operator_bound_check,
    run, run_subshift, RunConfig, Tightness,
};
use cms_core::thermo::{free_energy_residual, markov_stationary_oracle};
use cms_core::{Rational, System};

fn verdict(n: u32, pass: bool, detail: &str) {
    println!("criterion {n}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
}

fn set(xs: &[Rational]) -> Vec<Rational> {
    let mut v = xs.to_vec();
    v.sort();
    v
}

#[test]
fn criterion_01_prdm_analysis() {
    let prdm = fixtures::prdm();
    let report = classify(&System::Interval(prdm), None);
    let r1 = &report.r_iterates[0];
    let one = int(1);
    let r1_ok = r1.support() == vec![int(0), int(1)] && r1.values.values().all(|v| *v == one);
    let r2_ok = report.r_iterates.get(1).is_some_and(|f| f.is_zero());
    let checks = [
        ("a = 1/2", report.contraction.a == frac(1, 2)),
        ("b = 1/4", report.coupling.b == frac(1, 4)),
        ("R1 = 1 on {0,1}", r1_ok),
        ("R^2 1 = 0", r2_ok),
        ("Omega empty", report.omega.is_empty()),
        ("non-degenerate", matches!(report.degeneracy, Degeneracy::NonDegenerate { .. })),
        (
            "eimc-i",
            report.existence == Existence::Guaranteed { rule: "eimc-i".into(), subsystem: None },
        ),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    verdict(1, failed.is_empty(), &format!("{} ; failed: {failed:?}", report.verdict_line()));
    assert!(failed.is_empty(), "{failed:?}");
}

/// Stationary moments of prdm from `E[X′|x] = 1/2` and
/// `E[X′²|x] = (1 + x − x²)/4`: `m₁ = 1/2`, `m₂ = (1 + m₁ − m₂)/4`.
fn prdm_moment_oracle() -> (f64, f64) {
    let m1 = 0.5;
    let m2 = (1.0 + m1) / 5.0;
    (m1, m2)
}

#[test]
fn criterion_02_prdm_simulation() {
    let prdm = fixtures::prdm();
    let config = RunConfig {
        steps: 1_000_000,
        burn_in: 100_000,
        reservoir: 10_000,
        keep_trajectory: false,
    };
    let (_, m) = run(&prdm, 0.7, &config, &mut RngStream::new(42, 0)).unwrap();
    let (m1, m2) = prdm_moment_oracle();
    let residuals = invariance_residual(&prdm, &m, &default_test_functions(&prdm)).unwrap();
    let worst = residuals.iter().map(|r| r.1).fold(0.0, f64::max);
    let l = l_moment_check(&prdm, &m).unwrap();
    let pass = (m.mean() - m1).abs() <= 0.01
        && (m.second_moment() - m2).abs() <= 0.01
        && worst <= 0.01
        && l.integral <= 0.5 + 0.02;
    verdict(
        2,
        pass,
        &format!(
            "mean {:.5} (oracle {m1}), m2 {:.5} (oracle {m2}), max residual {worst:.5}, ∫L {:.5}",
            m.mean(),
            m.second_moment(),
            l.integral
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_dmse() {
    let dmse = fixtures::dmse();
    let report = classify(&System::Interval(dmse.clone()), None);
    let omega_ok = report.omega == Omega::Decided(set(&[int(0), int(1)]));
    let csc = csc_check(&dmse, &report.omega).unwrap();
    let csc_ok = csc.pass && csc.kernels.len() == 2;
    let consistent = matches!(report.consistency, Consistency::Consistent { .. });
    let usdmc = report.existence == Existence::Guaranteed { rule: "usdmc".into(), subsystem: None };
    let closed: Vec<Vec<u64>> = report
        .subsystems
        .iter()
        .filter(|s| s.closed_in_k)
        .map(|s| s.atoms.clone())
        .collect();
    let subs_ok = closed.contains(&vec![1]) && closed.contains(&vec![3]);
    let t = occupation_tightness(&dmse, 0.0, &[10, 100, 1_000, 10_000, 100_000], 0.01, &mut RngStream::new(7, 0))
        .unwrap();
    let k1 = t.atom_ids.iter().position(|&id| id == 1).unwrap();
    let mass_ok = t.snapshots.len() == 5 && t.snapshots.iter().all(|s| s.alpha[k1] == 1.0);
    let pass = omega_ok && csc_ok && consistent && usdmc && subs_ok && mass_ok;
    verdict(
        3,
        pass,
        &format!(
            "Omega {} ; csc {} ; {} ; closed in K {closed:?} ; mass on atom 1 always 1: {mass_ok}",
            report.omega,
            csc.pass,
            report.verdict_line()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_gnce() {
    let gnce = fixtures::gnce();
    let report = classify(&System::Interval(gnce.clone()), None);
    let csc = csc_check(&gnce, &report.omega).unwrap();
    let witness_ok = csc.witness.as_ref().is_some_and(|w| {
        w.z == int(0) && w.y == int(0) && w.r_mass == int(1) && w.u_mass == frac(1, 2)
    });
    let sndct = report.existence
        == Existence::Guaranteed {
            rule: "sndct".into(),
            subsystem: Some(vec![3]),
        };
    let pass = !csc.pass && witness_ok && sndct;
    verdict(4, pass, &format!("csc witness {:?} ; {}", csc.witness, report.verdict_line()));
    assert!(pass);
}

#[test]
fn criterion_05_mcae() {
    let mcae = fixtures::mcae(1, &[frac(1, 3), frac(2, 3)]).unwrap();
    let r1 = r_apply(&mcae, None);
    let r2 = r_apply(&mcae, Some(&r1));
    let structure = r2.support().iter().all(|z| *z == int(1));
    let report = classify(&System::Interval(mcae), None);
    let decided = !report.is_undecided()
        && (matches!(report.degeneracy, Degeneracy::NonDegenerate { .. })
            || matches!(report.consistency, Consistency::Consistent { .. }));
    let pass = structure && decided;
    verdict(
        5,
        pass,
        &format!(
            "R^2 1 = {:?} ; degeneracy {:?} ; {}",
            r2.values,
            report.degeneracy,
            report.verdict_line()
        ),
    );
    assert!(pass);
}

/// `H(P)` in nats for the two-state chain, weighted by `π`.
fn chain_entropy_oracle(pi: [f64; 2], rows: [[f64; 2]; 2]) -> f64 {
    let h = |r: [f64; 2]| -r.iter().map(|p| p * p.ln()).sum::<f64>();
    pi[0] * h(rows[0]) + pi[1] * h(rows[1])
}

#[test]
fn criterion_06_chain_thermo() {
    let chain = fixtures::chain();
    let pi = markov_stationary_oracle(&chain).unwrap();
    let exact = pi == vec![(1, frac(6, 13)), (2, frac(7, 13))];
    let config = RunConfig {
        steps: 1_000_000,
        burn_in: 0,
        reservoir: 0,
        keep_trajectory: true,
    };
    let (traj, m) = run_subshift(&chain, 0, &config, &mut RngStream::new(42, 0)).unwrap();
    let occ_gap = (m.frequency_of(1).unwrap() - 6.0 / 13.0)
        .abs()
        .max((m.frequency_of(2).unwrap() - 7.0 / 13.0).abs());
    let rate = chain_entropy_oracle([6.0 / 13.0, 7.0 / 13.0], [[0.3, 0.7], [0.6, 0.4]]);
    let fe = free_energy_residual(&traj, 1).unwrap();
    let pass = exact && occ_gap <= 0.01 && fe.residual.abs() <= 0.01 && (fe.entropy.h - rate).abs() <= 0.01;
    verdict(
        6,
        pass,
        &format!(
            "pi {pi:?} ; occupation gap {occ_gap:.5} ; H1 {:.5} vs rate {rate:.5} ; residual {:.5}",
            fe.entropy.h, fe.residual
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_holder() {
    let prdm = fixtures::prdm();
    let mut rng = RngStream::new(42, 0);
    let pairs: Vec<_> = (0..200)
        .map(|k| random_word_pair(&prdm, 2 + k % 7, 4, 3, &mut rng).expect("prdm admits word pairs"))
        .collect();
    let report = holder_check(&prdm, &pairs).unwrap();
    let pass = report.violations == 0 && (report.constant - 13.66).abs() < 0.01 && report.entries.len() == 200;
    verdict(
        7,
        pass,
        &format!(
            "C = {:.4}, exponent {:.4}, {} pairs, {} violations",
            report.constant,
            report.exponent,
            report.entries.len(),
            report.violations
        ),
    );
    assert!(pass);
}

/// Every edge sequence of length `1..=depth`.
fn all_words(edges: usize, depth: usize) -> Vec<SymbolWord> {
    let mut out = Vec::new();
    let mut layer = vec![Vec::new()];
    for _ in 0..depth {
        layer = layer
            .iter()
            .flat_map(|w: &Vec<usize>| {
                (0..edges).map(move |e| {
                    let mut v = w.clone();
                    v.push(e);
                    v
                })
            })
            .collect();
        out.extend(layer.iter().cloned().map(SymbolWord::new));
    }
    out
}

#[test]
fn criterion_08_refinement() {
    let prdm = fixtures::prdm();
    let r = build_refinement(&prdm, &parse_cuts("2@1/2:left-closed").unwrap()).unwrap();
    let structure = r.structure().ok();

    let words = all_words(prdm.edges.len(), 4);
    let mut pushforward_fail = 0;
    for x in [frac(1, 4), frac(1, 2), frac(3, 4)] {
        for w in &words {
            if !cylinder_pushforward_check(&r, &x, w).unwrap().equal {
                pushforward_fail += 1;
            }
        }
    }

    let mut rng = RngStream::new(42, 0);
    let refined_words: Vec<_> = (0..100)
        .map(|_| random_periodic_word(&r.refined, 5, 4, &mut rng).expect("refined system admits words"))
        .collect();
    let commute = coding_commute_check(&r, &refined_words).unwrap();

    let mut u_fail = 0;
    for k in 0..10_000i64 {
        let x = if k % 2 == 0 {
            frac(k, 9_999)
        } else {
            frac(rng.below(1 << 20) as i64, 1 << 20)
        };
        if !operator_invariance(&r, &x) {
            u_fail += 1;
        }
    }
    let pass = structure && pushforward_fail == 0 && commute.all_equal && u_fail == 0;
    verdict(
        8,
        pass,
        &format!(
            "{} atoms / {} edges ; pushforward failures {pushforward_fail} of {} ; commute {} of 100 ; U failures {u_fail}",
            r.refined.atoms.len(),
            r.refined.edges.len(),
            3 * words.len(),
            commute.entries.iter().filter(|e| e.equal).count()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_ieex() {
    let ieex = fixtures::ieex();
    let cert = interval_contraction(&ieex);
    let eps = cert.epsilon_term.clone().unwrap_or_else(|| int(0));
    let rate_ok = cert.a_truncated <= frac(1, 2) + &eps;
    let windows = [1_000, 10_000, 100_000];
    let t = occupation_tightness(&ieex, 0.0, &windows, 0.01, &mut RngStream::new(42, 0)).unwrap();
    let decreasing = t.profile.len() == windows.len()
        && t.profile.windows(2).all(|w| w[1].radial_tail <= w[0].radial_tail + 0.005);
    let tight = matches!(t.verdict, Tightness::Empirical { .. }) && decreasing;
    let pass = rate_ok && tight;
    verdict(
        9,
        pass,
        &format!(
            "truncated rate {:.4} + eps {:.4} (need <= 0.5 + eps) ; tail eps {:?} ; tightness: {}",
            cms_core::rational::to_f64(&cert.a_truncated),
            cms_core::rational::to_f64(&eps),
            ieex.epsilon_tail(),
            t.verdict
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_operator_bounds() {
    let mut violations = Vec::new();
    let mut rng = RngStream::new(42, 0);
    for (name, sys) in [("prdm", fixtures::prdm()), ("dmse", fixtures::dmse())] {
        for x0 in [int(0), frac(1, 3), frac(1, 2), frac(7, 10), int(1)] {
            if sys.atom_of(&x0).is_none() {
                continue;
            }
            for b in operator_bound_check(&sys, &x0, 10, 20_000, &mut rng).unwrap() {
                if !b.pass {
                    violations.push(format!("{name} x0={x0} n={}: {} > {}", b.n, b.value, b.bound));
                }
            }
        }
    }
    verdict(10, violations.is_empty(), &format!("{} violations {violations:?}", violations.len()));
    assert!(violations.is_empty());
}
