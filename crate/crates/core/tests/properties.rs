use cms_core::analysis::boundary::r_apply;
use cms_core::analysis::certificates::{interval_contraction, interval_coupling};
use cms_core::coding::{
    coding_map_exact, coding_map_truncated_word, cylinder_prob, holder_check, random_periodic_word, random_word_pair, truncation_bound,
    word_metric, SymbolWord,
};
use cms_core::fixtures;
use cms_core::rational::{self, frac, int};
use cms_core::refine::{build_refinement, cylinder_pushforward_check, operator_invariance, Cut, CutSide};
use cms_core::simulation::rng::RngStream;
use cms_core::simulation::{run, run_replicas, RunConfig};
use cms_core::thermo::markov_stationary_oracle;
use cms_core::{load, Rational, System};
use proptest::prelude::*;

fn q() -> impl Strategy<Value = Rational> {
    (-1000i64..1000, 1i64..500).prop_map(|(n, d)| frac(n, d))
}

fn unit() -> impl Strategy<Value = Rational> {
    (0i64..=1000).prop_map(|n| frac(n, 1000))
}

fn chain_doc(p: &Rational, r: &Rational) -> String {
    let one = int(1);
    format!(
        r#"{{"backend": "subshift",
            "graph": {{"vertices": [1, 2], "edges": [
                {{"id": "11", "from": 1, "to": 1}}, {{"id": "12", "from": 1, "to": 2}},
                {{"id": "21", "from": 2, "to": 1}}, {{"id": "22", "from": 2, "to": 2}}]}},
            "g": {{"memory": 1, "table": {{"11": "{}", "12": "{}", "21": "{}", "22": "{}"}}}}}}"#,
        p,
        &one - p,
        r,
        &one - r
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rational_text_roundtrip(x in q()) {
        prop_assert_eq!(rational::parse(&x.to_string()).unwrap(), x);
    }

    #[test]
    fn composite_matches_stepwise(symbols in prop::collection::vec(1usize..3, 1..12), x in unit()) {
        // Edges b and c of prdm chain freely inside the open atom.
        let prdm = fixtures::prdm();
        let word = SymbolWord::new(symbols);
        let stepwise = word.symbols.iter().fold(x.clone(), |y, &e| prdm.edges[e].map.eval(&y));
        prop_assert_eq!(word.composite(&prdm).eval(&x), stepwise);
    }

    #[test]
    fn cylinder_probabilities_sum_to_one(depth in 1usize..5, x in unit()) {
        // Summing P_x over every edge sequence of a fixed length gives 1.
        let prdm = fixtures::prdm();
        let n = prdm.edges.len();
        let total = (0..n.pow(depth as u32)).fold(Rational::from_integer(0.into()), |acc, mut k| {
            let mut w = Vec::new();
            for _ in 0..depth {
                w.push(k % n);
                k /= n;
            }
            acc + cylinder_prob(&prdm, &x, &SymbolWord::new(w))
        });
        prop_assert_eq!(total, int(1));
    }

    #[test]
    fn coding_map_shift_equivariance(seed in any::<u64>()) {
        // F(σ·e) = w_e(F(σ)) whenever σ·e is a path.
        let sys = fixtures::gnce();
        let mut rng = RngStream::new(seed, 0);
        let w = random_periodic_word(&sys, 4, 3, &mut rng).unwrap();
        let f = coding_map_exact(&sys, &w).unwrap();
        let target = sys.edges[w.symbol_back(0)].target;
        for &e in sys.edges_from(target) {
            let pushed = w.push(&sys, e).unwrap();
            prop_assert_eq!(coding_map_exact(&sys, &pushed).unwrap(), sys.edges[e].map.eval(&f));
        }
    }

    #[test]
    fn coding_map_lands_in_target_closure(seed in any::<u64>()) {
        let sys = fixtures::dmse();
        let mut rng = RngStream::new(seed, 1);
        let w = random_periodic_word(&sys, 5, 3, &mut rng).unwrap();
        let f = coding_map_exact(&sys, &w).unwrap();
        let target = &sys.atoms[sys.edges[w.symbol_back(0)].target].set;
        prop_assert!(target.closure_contains(&f));
    }

    #[test]
    fn truncated_coding_within_bound(seed in any::<u64>(), depth in 0usize..30) {
        let sys = fixtures::prdm();
        let mut rng = RngStream::new(seed, 2);
        let w = random_periodic_word(&sys, 6, 3, &mut rng).unwrap();
        let exact = rational::to_f64(&coding_map_exact(&sys, &w).unwrap());
        let t = coding_map_truncated_word(&sys, &w, depth).unwrap();
        let approx = rational::to_f64(&t.estimate);
        let bound = t.error_bound;
        prop_assert_eq!(bound, truncation_bound(0.5, 0.25, depth));
        prop_assert!((exact - approx).abs() <= bound + 1e-12, "{} vs {} bound {}", exact, approx, bound);
    }

    #[test]
    fn holder_bound_holds_on_examples(seed in any::<u64>(), central in 1usize..8) {
        for sys in [fixtures::prdm(), fixtures::gnce(), fixtures::dmse()] {
            let mut rng = RngStream::new(seed, 3);
            let pair = random_word_pair(&sys, central, 4, 3, &mut rng).unwrap();
            prop_assert!(word_metric(&pair.0, &pair.1).exponent as usize >= central);
            let report = holder_check(&sys, &[pair]).unwrap();
            prop_assert_eq!(report.violations, 0);
        }
    }

    #[test]
    fn mcae_validates_and_r2_lives_at_one(a0 in unit(), a1 in unit()) {
        let s = fixtures::mcae(1, &[a0, a1]).unwrap();
        let r2 = r_apply(&s, Some(&r_apply(&s, None)));
        prop_assert!(r2.support().iter().all(|z| *z == int(1)));
        prop_assert_eq!(interval_contraction(&s).a, frac(1, 2));
    }

    #[test]
    fn coupling_is_bounded_by_diameter(t in 2u32..12) {
        let s = fixtures::dyadic_prdm(t).unwrap();
        let b = interval_coupling(&s).b;
        prop_assert!(b >= int(0) && b <= int(1));
    }

    #[test]
    fn dyadic_cuts_refine_prdm(k in 1i64..16, x in unit(), symbols in prop::collection::vec(0usize..4, 1..5)) {
        let prdm = fixtures::prdm();
        let cut = Cut { atom: 2, point: frac(k, 16), side: CutSide::LeftClosed };
        match build_refinement(&prdm, &[cut]) {
            Ok(r) => {
                prop_assert!(r.structure().ok());
                let check = cylinder_pushforward_check(&r, &x, &SymbolWord::new(symbols)).unwrap();
                prop_assert!(check.equal);
                prop_assert!(operator_invariance(&r, &x));
            }
            // Only the midpoint avoids straddling: w_0 and w_1 map (0,1)
            // onto halves, so a cut elsewhere splits an image.
            Err(e) => prop_assert!(k != 8, "{}", e),
        }
    }

    #[test]
    fn two_state_oracle_is_stationary(p in 1i64..100, r in 1i64..100) {
        let (p, r) = (frac(p, 100), frac(r, 100));
        let System::Subshift(chain) = load(&chain_doc(&p, &r)).unwrap() else { unreachable!() };
        let pi = markov_stationary_oracle(&chain).unwrap();
        // Balance: π₁(1 − p) = π₂ r.
        prop_assert_eq!(&pi[0].1 * (int(1) - &p), &pi[1].1 * &r);
        prop_assert_eq!(&pi[0].1 + &pi[1].1, int(1));
    }
}

#[test]
fn runs_are_reproducible() {
    let prdm = fixtures::prdm();
    let config = RunConfig::new(20_000);
    let (_, a) = run(&prdm, 0.3, &config, &mut RngStream::new(9, 0)).unwrap();
    let (_, b) = run(&prdm, 0.3, &config, &mut RngStream::new(9, 0)).unwrap();
    assert_eq!(a.counts, b.counts);
    assert_eq!(a.reservoir, b.reservoir);
    let r1 = run_replicas(&prdm, 0.3, &config, 9, 4).unwrap();
    let r2 = run_replicas(&prdm, 0.3, &config, 9, 4).unwrap();
    assert_eq!(r1.counts, r2.counts);
    assert_eq!(r1.total, 4 * (config.steps - config.burn_in));
}
