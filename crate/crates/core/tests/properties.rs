use std::sync::Arc;

use proptest::prelude::*;

use oi_lab::catalog::{Literal, Membership, RuleSpec, Subpopulation};
use oi_lab::construct::audit_family;
use oi_lab::distinguisher::{
    acceptance, advantage, AccessLevel, AdvantageMode, Coins, Distinguisher, OracleHandle, Rule,
    Subject, View,
};
use oi_lab::domain::{Individual, Nature, Population};
use oi_lab::fairness::{
    audit_fairness, ma_to_oi_family, mc_to_oi_family, round_predictor, Grid, Rounded,
};
use oi_lab::hardness::{inner_product, Booleanized, LinearEnsemble, ScalableEnsemble};
use oi_lab::predictor::{Evaluate, Predictor};
use oi_lab::OiError;

fn weights(dim: u32) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 1usize << dim)
}

fn table(dim: u32) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, 1usize << dim)
}

fn nature_from(dim: u32, w: &[f64], truth: &[f64]) -> Nature {
    let total: f64 = w.iter().sum();
    let pop = Population::explicit(dim, w.iter().enumerate().map(|(b, x)| (b as u64, x / total)))
        .unwrap();
    Nature::new(pop, predictor_from(dim, truth)).unwrap()
}

fn predictor_from(dim: u32, values: &[f64]) -> Predictor {
    Predictor::from_table(dim, values.iter().enumerate().map(|(b, v)| (b as u64, *v)), 0.5).unwrap()
}

fn setting() -> impl Strategy<Value = (u32, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1u32..=4).prop_flat_map(|d| (Just(d), weights(d), table(d), table(d)))
}

fn ind(bits: u64, dim: u32) -> Individual {
    Individual::new(bits, dim).unwrap()
}

fn subset_family(dim: u32, masks: &[u64]) -> Vec<Distinguisher> {
    masks
        .iter()
        .enumerate()
        .map(|(k, &mask)| {
            let members: Vec<u64> = (0..1u64 << dim).filter(|b| (mask >> b) & 1 == 1).collect();
            Distinguisher::catalog(
                format!("s{k}"),
                AccessLevel::NoAccess,
                1,
                RuleSpec::Subset { members },
                dim,
            )
            .unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn updated_predictors_stay_in_unit_interval(
        (dim, _, base, _) in setting(),
        steps in prop::collection::vec((-1.0f64..1.0, any::<u64>()), 0..12),
    ) {
        let mut p = predictor_from(dim, &base);
        for (coef, mask) in steps {
            let d = &subset_family(dim, &[mask])[0];
            p = p.push_term(coef, d.clone()).unwrap();
        }
        for b in 0..1u64 << dim {
            let v = p.evaluate(ind(b, dim)).unwrap();
            prop_assert!((0.0..=1.0).contains(&v), "{v}");
        }
    }

    #[test]
    fn predictor_json_round_trip_is_bit_exact(
        (dim, _, base, _) in setting(),
        steps in prop::collection::vec((-1.0f64..1.0, any::<u64>()), 0..6),
    ) {
        let mut p = predictor_from(dim, &base);
        for (coef, mask) in steps {
            p = p.push_term(coef, subset_family(dim, &[mask])[0].clone()).unwrap();
        }
        let text = p.to_json().unwrap();
        let back = Predictor::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), text);
        for b in 0..1u64 << dim {
            let i = ind(b, dim);
            prop_assert_eq!(p.evaluate(i).unwrap().to_bits(), back.evaluate(i).unwrap().to_bits());
        }
    }

    #[test]
    fn complement_negates_advantage((dim, w, truth, model) in setting(), mask in any::<u64>()) {
        let n = nature_from(dim, &w, &truth);
        let p = predictor_from(dim, &model);
        let d = &subset_family(dim, &[mask])[0];
        let a = advantage(d, &n, &Subject::new(&p), AdvantageMode::Exact).unwrap();
        let c = advantage(&d.complement(), &n, &Subject::new(&p), AdvantageMode::Exact).unwrap();
        prop_assert!((a.signed + c.signed).abs() < 1e-12);
    }

    #[test]
    fn rounding_moves_at_most_half_a_bin(v in 0.0f64..=1.0, m in 1usize..50) {
        let g = Grid::new(m).unwrap();
        prop_assert!((g.round(v) - v).abs() <= g.half_width() + 1e-15);
        prop_assert!(g.index_on_grid(g.round(v)).is_ok());
    }

    #[test]
    fn oracle_budget_is_enforced(budget in 0u32..20, extra in 1u32..5) {
        let p = Predictor::constant(3, 0.25, 0.0).unwrap();
        let h = OracleHandle::new(&p, budget, 0);
        for k in 0..budget {
            prop_assert!(h.query(ind(k as u64 % 8, 3)).is_ok());
        }
        for _ in 0..extra {
            let exceeded = matches!(h.query(ind(0, 3)), Err(OiError::QueryBudgetExceeded { .. }));
            prop_assert!(exceeded);
        }
        prop_assert_eq!(h.used(), budget);
    }

    #[test]
    fn code_access_simulates_oracle_access((dim, w, truth, model) in setting(), mask in any::<u64>()) {
        let n = nature_from(dim, &w, &truth);
        let p = predictor_from(dim, &model);
        let rule = RuleSpec::Neighbor { mask: mask & ((1 << dim) - 1) };
        let oracle = Distinguisher::catalog(
            "o", AccessLevel::OracleAccess { max_queries: 1 }, 1, rule.clone(), dim,
        ).unwrap();
        let code = Distinguisher::catalog("c", AccessLevel::CodeAccess, 1, rule, dim).unwrap();
        let a = advantage(&oracle, &n, &Subject::new(&p), AdvantageMode::Exact).unwrap();
        let b = advantage(&code, &n, &Subject::new(&p), AdvantageMode::Exact).unwrap();
        prop_assert_eq!(a.signed.to_bits(), b.signed.to_bits());
    }

    #[test]
    fn monte_carlo_covers_exact(
        (dim, w, truth, model) in setting(),
        mask in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let n = nature_from(dim, &w, &truth);
        let p = predictor_from(dim, &model);
        let d = &subset_family(dim, &[mask])[0];
        let exact = advantage(d, &n, &Subject::new(&p), AdvantageMode::Exact).unwrap();
        let mc = advantage(
            d, &n, &Subject::new(&p), AdvantageMode::MonteCarlo { samples: 4000, seed },
        ).unwrap();
        prop_assert!((mc.signed - exact.signed).abs() <= mc.radius, "{mc:?} vs {exact:?}");
    }

    #[test]
    fn sampled_audit_tracks_exact_audit(
        (dim, w, truth, model) in setting(),
        masks in prop::collection::vec(any::<u64>(), 1..6),
        seed in any::<u64>(),
    ) {
        let n = nature_from(dim, &w, &truth);
        let p = predictor_from(dim, &model);
        let family = subset_family(dim, &masks);
        let subject = Subject::new(&p);
        let exact = audit_family(&family, &n, &subject, AdvantageMode::Exact).unwrap();
        let sampled = audit_family(
            &family, &n, &subject, AdvantageMode::MonteCarlo { samples: 4000, seed },
        ).unwrap();
        for (e, s) in exact.iter().zip(&sampled) {
            prop_assert!((e.signed - s.signed).abs() <= s.radius);
        }
    }

    #[test]
    fn oracle_handles_carry_the_subject_version(version in any::<u64>()) {
        struct SeesVersion(u64);
        impl Rule for SeesVersion {
            fn decide(&self, view: &View<'_>, _: &mut Coins<'_>) -> oi_lab::Result<bool> {
                Ok(view.oracle().map(|h| h.version()) == Some(self.0))
            }
        }
        let d = Distinguisher::custom(
            "v", AccessLevel::OracleAccess { max_queries: 1 }, 1, Arc::new(SeesVersion(version)),
        ).unwrap();
        let p = Predictor::constant(2, 0.5, 0.0).unwrap();
        let i = ind(1, 2);
        prop_assert_eq!(acceptance(&d, i, true, &Subject::versioned(&p, version), None).unwrap(), 1.0);
        prop_assert_eq!(
            acceptance(&d, i, true, &Subject::versioned(&p, version.wrapping_add(1)), None).unwrap(),
            0.0
        );
    }

    #[test]
    fn inner_product_is_linear_in_r(x in 0u64..1 << 6, r in 0u64..1 << 5, s in 0u64..1 << 5, seed in any::<u64>()) {
        let base = Arc::new(LinearEnsemble::new(6, 2, seed).unwrap());
        let f = base.eval(2, x).unwrap();
        let g = Booleanized::new(base).unwrap();
        let gr = g.eval(2, g.join(x, r)).unwrap();
        let gs = g.eval(2, g.join(x, s)).unwrap();
        prop_assert_eq!(gr ^ gs, inner_product(f, r ^ s));
    }

    #[test]
    fn multi_accuracy_bounds_indicator_advantage(
        (dim, w, truth, model) in setting(),
        masks in prop::collection::vec(1u64..u64::MAX, 1..5),
    ) {
        let n = nature_from(dim, &w, &truth);
        let p = predictor_from(dim, &model);
        let subs: Vec<Subpopulation> = masks
            .iter()
            .enumerate()
            .map(|(k, &mask)| {
                let members: Vec<u64> = (0..1u64 << dim).filter(|b| (mask >> b) & 1 == 1).collect();
                Subpopulation::new(format!("S{k}"), Membership::set(members))
            })
            .filter(|s| n.population().mass_where(|i| s.contains(i)).unwrap() > 0.0)
            .collect();
        prop_assume!(!subs.is_empty());
        let audit = audit_fairness(&p, &subs, Grid::new(4).unwrap(), 0.5, &n).unwrap();
        let family = ma_to_oi_family(&subs, dim).unwrap();
        let advs = audit_family(&family, &n, &Subject::new(&p), AdvantageMode::Exact).unwrap();
        for (ma, a) in audit.multi_accuracy.iter().zip(&advs) {
            // Δ_{A_S} = Pr[S]·∇_S ≤ ∇_S
            prop_assert!(a.magnitude() <= ma.violation + 1e-12);
        }
    }

    #[test]
    fn level_set_advantage_is_cell_mass_times_gap(
        (dim, w, truth, model) in setting(),
        m in 1usize..6,
        bit in 0u32..4,
    ) {
        let n = nature_from(dim, &w, &truth);
        let grid = Grid::new(m).unwrap();
        let p = round_predictor(&predictor_from(dim, &model), grid, n.population()).unwrap();
        let s = Subpopulation::new(
            "half",
            Membership::Conjunction { literals: vec![Literal { bit: bit % dim, value: true }] },
        );
        let family = mc_to_oi_family(std::slice::from_ref(&s), grid, dim).unwrap();
        let rounded = Rounded { inner: &p, grid };
        let cells = oi_lab::fairness::mc_cells(&rounded, &s, grid, 0.1, &n).unwrap();
        for (d, cell) in family.iter().zip(&cells) {
            let a = advantage(d, &n, &Subject::new(&p), AdvantageMode::Exact).unwrap();
            prop_assert!((a.signed - cell.level_mass * cell.signed).abs() < 1e-10);
        }
    }
}
