use jolo_core::bayes::{draw_posterior, LossSpec, PriorHyper};
use jolo_core::bootstrap::{boot_p, BootstrapConfig};
use jolo_core::data::{ks_test, parse_censored, write_censored};
use jolo_core::em::{fit_em_traced, observed_info};
use jolo_core::harness::{run_cell, Cell, ExperimentConfig};
use jolo_core::likelihood::default_init;
use jolo_core::{generate, rng, CensoredSample, Psi, SolverConfig};
use proptest::prelude::*;

fn psi() -> impl Strategy<Value = Psi> {
    (0.3f64..6.0, 0.2f64..8.0, 0.3f64..6.0, 0.2f64..8.0).prop_map(|(a, b, c, d)| Psi::new(a, b, c, d).unwrap())
}

fn sample(psi: &Psi, m: usize, n: usize, r: usize, seed: u64) -> Option<CensoredSample> {
    let mut g = rng::stream(seed);
    (0..50)
        .map(|_| generate(&psi.x(), &psi.y(), m, n, r, &mut g).unwrap())
        .find(CensoredSample::is_nondegenerate)
}

const PRIOR: PriorHyper = PriorHyper { a1: 4.0, b1: 2.0, c1: 9.0, d1: 3.0, a2: 6.0, b2: 2.0, c2: 25.0, d2: 5.0 };

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn em_path_never_lowers_loglik(truth in psi(), start in psi(), m in 3usize..30, n in 3usize..30, frac in 0.2f64..1.0, seed in 0u64..1000) {
        let r = ((m + n) as f64 * frac).ceil() as usize;
        if let Some(s) = sample(&truth, m, n, r.max(2), seed) {
            let cfg = SolverConfig { max_iter: 150, ..SolverConfig::em() };
            let tr = fit_em_traced(&s, &start, &cfg).unwrap();
            for w in tr.loglik.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-10 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn information_is_symmetric_with_zero_cross_blocks(truth in psi(), at in psi(), m in 3usize..30, n in 3usize..30, seed in 0u64..1000) {
        if let Some(s) = sample(&truth, m, n, (m + n) / 2 + 1, seed) {
            let info = observed_info(&at, &s).unwrap();
            for mat in [info.complete, info.missing, info.observed] {
                for i in 0..4 {
                    for j in 0..4 {
                        prop_assert!((mat[i][j] - mat[j][i]).abs() <= 1e-12 * mat[i][j].abs().max(1.0));
                        if (i < 2) != (j < 2) {
                            prop_assert_eq!(mat[i][j], 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bayes_estimates_stay_inside_the_draws(truth in psi(), seed in 0u64..1000) {
        if let Some(s) = sample(&truth, 15, 15, 16, seed) {
            let d = draw_posterior(&s, &PRIOR, 400, &mut rng::stream(seed)).unwrap();
            for loss in LossSpec::standard_set() {
                let est = d.estimate_all(loss).unwrap();
                for (k, e) in est.iter().enumerate() {
                    let vals = d.draws.iter().map(|p| p.to_array()[k]);
                    let lo = vals.clone().fold(f64::INFINITY, f64::min);
                    let hi = vals.fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(*e >= lo * (1.0 - 1e-12) && *e <= hi * (1.0 + 1e-12), "{loss}: {e} outside [{lo}, {hi}]");
                }
            }
        }
    }

    #[test]
    fn censored_csv_round_trips(truth in psi(), m in 1usize..25, n in 1usize..25, seed in 0u64..1000) {
        let r = (m + n).div_ceil(2);
        let s = generate(&truth.x(), &truth.y(), m, n, r, &mut rng::stream(seed)).unwrap();
        let mut buf = Vec::new();
        write_censored(&s, &mut buf).unwrap();
        let back = parse_censored(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn ks_outputs_are_probabilities(truth in psi(), size in 2usize..60, seed in 0u64..1000) {
        let x = truth.x().sample(&mut rng::stream(seed), size);
        let k = ks_test(&x, &truth.y()).unwrap();
        prop_assert!((0.0..=1.0).contains(&k.statistic));
        prop_assert!((0.0..=1.0).contains(&k.p_value));
    }
}

#[test]
fn boot_p_is_reproducible_and_ordered() {
    let truth = Psi::new(2.0, 3.0, 3.0, 5.0).unwrap();
    let s = sample(&truth, 30, 30, 40, 17).unwrap();
    let mut cfg = BootstrapConfig::new(100, 0.9, 5);
    cfg.require_convergence = false;
    cfg.em.max_iter = 300;
    let a = boot_p(&s, &default_init(&s), &cfg).unwrap();
    let b = boot_p(&s, &default_init(&s), &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|iv| 0.0 <= iv.lower && iv.lower <= iv.upper));
}

#[test]
fn harness_reports_are_identical_across_runs() {
    let mut cfg = ExperimentConfig::design(12, 3);
    cfg.draws = 300;
    cfg.em.max_iter = 300;
    let cell = Cell { m: 20, n: 20, r: 10 };
    let a = serde_json::to_string(&run_cell(&cfg, cell).unwrap()).unwrap();
    let b = serde_json::to_string(&run_cell(&cfg, cell).unwrap()).unwrap();
    assert_eq!(a, b);
}
