//! Randomized invariants over small grids.

mod common;

use std::sync::Arc;

use proptest::prelude::*;

use anticipating_levy::functional::{Cylinder, FeatureSpec, GridFunctional, LinearCombination, Shape};
use anticipating_levy::girsanov::density_l;
use anticipating_levy::grid::{TimeGrid, WienerPath};
use anticipating_levy::grid_malliavin::{derivative, ito_sum, second_derivative, skorohod, CellProcess};
use anticipating_levy::levy_space::{compensator_integral, poisson_integral, JumpSet};
use anticipating_levy::mc::{self, PathSource};
use anticipating_levy::scenario::{template, Scenario, TEMPLATES};
use anticipating_levy::solution::{dominating_bound, Solver};
use anticipating_levy::transform::{compose_check, solve_backward, DriftCoefficient, SolverOptions};
use anticipating_levy::verify::aux_bounds_check;

const M: usize = 32;

fn grid(m: usize) -> Arc<TimeGrid> {
    Arc::new(TimeGrid::uniform(1.0, m).unwrap())
}

fn wiener(seed: u64) -> WienerPath {
    PathSource::wiener_only(grid(M), seed, mc::suite::VERIFY).path(0).wiener
}

fn small(name: &str) -> Scenario {
    let mut s = template(name).unwrap();
    s.grid.steps = M;
    s
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn jumps_fall_in_exactly_one_layer(seed in any::<u64>(), t in 0usize..TEMPLATES.len()) {
        let s = small(TEMPLATES[t]);
        let b = s.build().unwrap();
        let cut = s.eps_cut();
        let p = PathSource::with_jumps(b.grid.clone(), b.model.clone(), cut, seed, mc::suite::SAMPLE).path(0);
        for j in p.jumps.jumps() {
            prop_assert!(j.size.abs() > cut);
            let hits = b.model.layers.iter().filter(|l| l.contains(j.size)).count();
            prop_assert_eq!(hits, 1);
        }
        let total: f64 = b.model.layers_above(cut).map(|l| l.intensity).sum();
        let mass = b.model.mass_above(cut).unwrap();
        prop_assert!(common::rel_err(total, mass) < 1e-8, "{} vs {}", total, mass);
    }

    #[test]
    fn jump_integrals_are_pure(seed in any::<u64>(), eps in 0.01f64..1.0, t in 0.0f64..1.0) {
        let s = small("paper-g-jumps");
        let b = s.build().unwrap();
        let src = PathSource::with_jumps(b.grid.clone(), b.model.clone(), s.eps_cut(), seed, mc::suite::SAMPLE);
        let v = |s: f64, y: f64| (1.0 + s) * y.abs().min(1.0);
        let (p1, p2) = (src.path(0), src.path(0));
        prop_assert_eq!(poisson_integral(&p1.jumps, &v, eps, t).to_bits(), poisson_integral(&p2.jumps, &v, eps, t).to_bits());
        let c1 = compensator_integral(&b.model, &v, eps, t).unwrap();
        let c2 = compensator_integral(&b.model, &v, eps, t).unwrap();
        prop_assert_eq!(c1.to_bits(), c2.to_bits());
        prop_assert!(c1 >= 0.0);
    }

    #[test]
    fn derivative_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, cell in 1usize..=M) {
        let g = grid(M);
        let w = wiener(seed);
        let none = JumpSet::empty();
        let f: Arc<dyn GridFunctional> = Arc::new(Cylinder::of_terminal(g.clone(), 1.0, Shape::Sin(1.0)));
        let h: Arc<dyn GridFunctional> = Arc::new(Cylinder::of_feature(g.clone(), 1.0, FeatureSpec::half(), Shape::Square).unwrap());
        let combo = LinearCombination { terms: vec![(alpha, f.clone()), (beta, h.clone())] };
        let lhs = derivative(&combo, &w, &none, cell).unwrap();
        let rhs = alpha * derivative(f.as_ref(), &w, &none, cell).unwrap() + beta * derivative(h.as_ref(), &w, &none, cell).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn second_derivative_is_symmetric(seed in any::<u64>(), j in 1usize..=M, k in 1usize..=M) {
        let g = grid(M);
        let w = wiener(seed);
        let none = JumpSet::empty();
        let f = Cylinder::of_feature(g, 1.0, FeatureSpec::half(), Shape::Bump(1.5)).unwrap();
        let djk = second_derivative(&f, &w, &none, j, k).unwrap();
        let dkj = second_derivative(&f, &w, &none, k, j).unwrap();
        prop_assert!((djk - dkj).abs() < 1e-10);
    }

    #[test]
    fn adapted_skorohod_is_the_ito_sum(seed in any::<u64>(), scale in 0.1f64..3.0) {
        let g = grid(M);
        let w = wiener(seed);
        let none = JumpSet::empty();
        let cells: Vec<Arc<dyn GridFunctional>> = (1..=M)
            .map(|k| -> Arc<dyn GridFunctional> {
                let to = g.node(k - 1);
                if to == 0.0 {
                    Arc::new(Cylinder::constant(g.clone(), 0.0))
                } else {
                    Arc::new(Cylinder::of_feature(g.clone(), 1.0, FeatureSpec::Window { from: 0.0, to }, Shape::Tanh(scale)).unwrap())
                }
            })
            .collect();
        let u = CellProcess { cells };
        prop_assert_eq!(skorohod(&u, &w, &none).unwrap().to_bits(), ito_sum(&u, &w, &none).to_bits());
    }

    #[test]
    fn picard_defect_contracts(seed in any::<u64>(), c in 0.1f64..1.5) {
        let g = grid(M);
        let w = wiener(seed);
        let a = DriftCoefficient::new(Cylinder::of_terminal(g, c, Shape::Tanh(1.0)));
        let tr = solve_backward(&a, &w, &JumpSet::empty(), 0, M, &SolverOptions::default()).unwrap();
        for pair in tr.history.windows(2).skip(1) {
            prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-9) + 1e-15, "{:?}", tr.history);
        }
    }

    #[test]
    fn transforms_compose(seed in any::<u64>(), c in 0.1f64..1.5) {
        let g = grid(M);
        let w = wiener(seed);
        let a = DriftCoefficient::new(Cylinder::of_terminal(g, c, Shape::Tanh(1.0)));
        let opts = SolverOptions::sweep();
        let d = compose_check(&a, &w, &JumpSet::empty(), M, &opts).unwrap();
        prop_assert!(d.inverse < 10.0 * opts.tol && d.flow < 10.0 * opts.tol, "{:?}", d);
    }

    #[test]
    fn sensitivity_bounds_hold(seed in any::<u64>(), c in 0.1f64..1.5, linear in any::<bool>()) {
        let g = grid(M);
        let w = wiener(seed);
        let shape = if linear { Shape::Identity } else { Shape::Tanh(1.0) };
        let a = DriftCoefficient::new(Cylinder::of_terminal(g, c.min(0.9), shape));
        let r = aux_bounds_check(&a, &w, &JumpSet::empty(), M / 2, M, &SolverOptions::sweep()).unwrap();
        prop_assert_eq!(r.violations, 0);
    }

    #[test]
    fn density_is_positive(seed in any::<u64>(), c in -1.5f64..1.5, s in 0usize..M / 2) {
        let g = grid(M);
        let w = wiener(seed);
        let a = DriftCoefficient::new(Cylinder::of_terminal(g, c, Shape::Tanh(1.0)));
        let d = density_l(&a, &w, &JumpSet::empty(), s, M, &SolverOptions::sweep()).unwrap();
        prop_assert!(d.value > 0.0 && d.value.is_finite());
    }

    #[test]
    fn deterministic_drift_gives_the_classical_exponential(seed in any::<u64>(), alpha in -2.0f64..2.0) {
        let g = grid(M);
        let w = wiener(seed);
        let none = JumpSet::empty();
        let cyl = Cylinder::constant(g.clone(), alpha);
        let d = density_l(&DriftCoefficient::new(cyl.clone()), &w, &none, 0, M, &SolverOptions::sweep()).unwrap();
        prop_assert_eq!(d.correction, 0.0);
        prop_assert_eq!(d.skorohod.to_bits(), ito_sum(&CellProcess::constant_in_time(Arc::new(cyl)), &w, &none).to_bits());
        let exact = (alpha * w.terminal() - 0.5 * alpha * alpha).exp();
        prop_assert!(common::rel_err(d.value, exact) < 1e-12);
    }

    #[test]
    fn solution_factors_recompose(seed in any::<u64>(), t in 0usize..TEMPLATES.len(), n in 1usize..=M) {
        let s = small(TEMPLATES[t]);
        let b = s.build().unwrap();
        let solver = Solver::new(&b.coeffs, Some(&b.model), s.mc.solver).unwrap();
        let p = PathSource::with_jumps(b.grid.clone(), b.model.clone(), s.eps_cut(), seed, mc::suite::SOLUTION).path(0);
        let full = solver.full_solution(&p, n).unwrap();
        prop_assert!(common::rel_err(full.sample.recomposed(), full.sample.value) < 1e-12);
        prop_assert!(full.representation_gap() < 1e-10);
        if let Some(constant) = solver.dominating_constant(n).unwrap() {
            let (lhs, rhs) = dominating_bound(&full.sample, constant, &p.jumps, &b.coeffs.v.bound);
            prop_assert!(lhs <= rhs * (1.0 + 1e-9));
        }
    }

    #[test]
    fn adapted_constant_matches_doleans(seed in any::<u64>(), n in 1usize..=M) {
        let s = small("adapted-constant");
        let b = s.build().unwrap();
        let solver = Solver::new(&b.coeffs, Some(&b.model), s.mc.solver).unwrap();
        let p = PathSource::with_jumps(b.grid.clone(), b.model.clone(), s.eps_cut(), seed, mc::suite::SOLUTION).path(0);
        let t = b.grid.node(n);
        let count = p.jumps.jumps().iter().filter(|j| j.time <= t).count();
        let exact = common::doleans(1.0, 0.2, 0.1, 0.3, 2.0, t, p.wiener.value_at(n), count);
        let got = solver.full_solution(&p, n).unwrap().sample.value;
        prop_assert!(common::rel_err(got, exact) < 1e-10);
    }

    #[test]
    fn scenario_toml_round_trips(t in 0usize..TEMPLATES.len(), blocks in 1usize..8, paths in 2usize..1_000_000, seed in any::<u64>()) {
        let mut s = template(TEMPLATES[t]).unwrap();
        s.grid.steps = 256 * blocks;
        s.mc.paths = paths;
        s.mc.seed = seed;
        let back = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }
}

