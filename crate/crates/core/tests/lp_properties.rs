use dprmdi_core::lp::{solve, LinearProgram, LpStatus, Relation, Sense};
use dprmdi_core::validation::vertex_enumeration_optimum;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct RawLp {
    lower: Vec<f64>,
    width: Vec<f64>,
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, u8, f64)>,
    maximize: bool,
}

fn raw_lp() -> impl Strategy<Value = RawLp> {
    let row = (prop::collection::vec(-3.0..3.0f64, 3), 0u8..3, -2.0..4.0f64);
    (
        prop::collection::vec(-1.0..0.5f64, 3),
        prop::collection::vec(0.5..4.0f64, 3),
        prop::collection::vec(-2.0..2.0f64, 3),
        prop::collection::vec(row, 1..5),
        any::<bool>(),
    )
        .prop_map(|(lower, width, objective, rows, maximize)| RawLp {
            lower,
            width,
            objective,
            rows,
            maximize,
        })
}

fn build(raw: &RawLp, row_scale: &[f64]) -> LinearProgram {
    let upper = raw.lower.iter().zip(&raw.width).map(|(l, w)| l + w).collect();
    let sense = if raw.maximize { Sense::Maximize } else { Sense::Minimize };
    let mut lp = LinearProgram::new(raw.lower.clone(), upper, raw.objective.clone(), sense).unwrap();
    for (k, (c, rel, rhs)) in raw.rows.iter().enumerate() {
        let s = row_scale.get(k).copied().unwrap_or(1.0);
        let rel = match rel {
            0 => Relation::Le,
            1 => Relation::Ge,
            _ => Relation::Eq,
        };
        lp.add_constraint(c.iter().map(|v| v * s).collect(), rel, rhs * s)
            .unwrap();
    }
    lp
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn simplex_matches_vertex_enumeration(raw in raw_lp()) {
        let lp = build(&raw, &[]);
        let sol = solve(&lp);
        match vertex_enumeration_optimum(&lp, 1e-9) {
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Some((best, _)) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective_value - best).abs() <= 1e-8 * (1.0 + best.abs()),
                    "simplex {} vs vertices {}", sol.objective_value, best);
                prop_assert!(lp.max_violation(&sol.values) <= 1e-8);
            }
        }
    }

    #[test]
    fn minimum_never_exceeds_maximum(raw in raw_lp()) {
        let mut lp = build(&raw, &[]);
        lp.set_sense(Sense::Minimize);
        let lo = solve(&lp);
        lp.set_sense(Sense::Maximize);
        let hi = solve(&lp);
        prop_assert_eq!(lo.status, hi.status);
        if lo.is_optimal() {
            prop_assert!(lo.objective_value <= hi.objective_value + 1e-9);
        }
    }

    #[test]
    fn row_scaling_preserves_the_optimum(raw in raw_lp(), scales in prop::collection::vec(0.01..100.0f64, 4)) {
        let a = solve(&build(&raw, &[]));
        let b = solve(&build(&raw, &scales));
        prop_assert_eq!(a.status, b.status);
        if a.is_optimal() {
            prop_assert!((a.objective_value - b.objective_value).abs() <= 1e-8 * (1.0 + a.objective_value.abs()));
        }
    }
}
