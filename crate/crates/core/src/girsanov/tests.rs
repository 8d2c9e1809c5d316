use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::functional::{Cylinder, FeatureSpec, Shape};
use crate::grid::{sample_wiener, TimeGrid};
use crate::grid_malliavin::derivative;
use crate::transform::{sensitivity_by_bump, solve_forward, solve_forward_from};

fn setup(m: usize, seed: u64) -> (Arc<TimeGrid>, WienerPath) {
    let g = Arc::new(TimeGrid::uniform(1.0, m).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = sample_wiener(&g, &mut rng);
    (g, p)
}

fn tanh_drift(g: &Arc<TimeGrid>) -> DriftCoefficient {
    DriftCoefficient::new(Cylinder::of_terminal(g.clone(), 1.0, Shape::Tanh(1.0)))
}

fn linear_drift(g: &Arc<TimeGrid>, alpha: f64) -> DriftCoefficient {
    DriftCoefficient::new(Cylinder::of_terminal(g.clone(), alpha, Shape::Identity))
}

fn two_feature_drift(g: &Arc<TimeGrid>) -> DriftCoefficient {
    let cyl = crate::functional::FunctionalSpec {
        family: crate::functional::Family::Product,
        coef: 0.4,
        scale: None,
        feature: None,
        factors: vec![
            crate::functional::FactorSpec { shape: crate::functional::Family::Sin, scale: Some(1.3), feature: FeatureSpec::terminal() },
            crate::functional::FactorSpec { shape: crate::functional::Family::Cos, scale: Some(0.7), feature: FeatureSpec::half() },
        ],
        time_slope: 0.5,
        jump_decay: 0.0,
    }
    .build(g)
    .unwrap();
    DriftCoefficient::new(cyl)
}

const NONE: JumpSet = JumpSet::empty();

#[test]
fn zero_drift_gives_unit_densities() {
    let (g, p) = setup(32, 1);
    let a = DriftCoefficient::new(Cylinder::constant(g, 0.0));
    let opts = SolverOptions::default();
    assert_eq!(density_l(&a, &p, &NONE, 0, 32, &opts).unwrap().value, 1.0);
    assert_eq!(density_lcal(&a, &p, &NONE, 0, 32).unwrap().value, 1.0);
}

#[test]
fn constant_drift_is_the_classical_exponential() {
    let (g, p) = setup(64, 2);
    let alpha = 0.7;
    let a = DriftCoefficient::new(Cylinder::constant(g.clone(), alpha));
    let opts = SolverOptions::default();
    for t in [17, 64] {
        let rec = density_l(&a, &p, &NONE, 0, t, &opts).unwrap();
        let mut ito = 0.0;
        for k in 1..=t {
            ito += alpha * p.increment(k);
        }
        let quad = 0.5 * (1..=t).map(|k| alpha * alpha * g.width(k)).sum::<f64>();
        assert_eq!(rec.correction, 0.0);
        assert_eq!(rec.trace, 0.0);
        assert_eq!(rec.log_value, ito - quad);
        let w = p.value_at(t);
        let tt = g.node(t);
        assert!((rec.value - (alpha * w - 0.5 * alpha * alpha * tt).exp()).abs() < 1e-12);
        let lc = density_lcal(&a, &p, &NONE, 0, t).unwrap();
        assert!((lc.value - (-alpha * w - 0.5 * alpha * alpha * tt).exp()).abs() < 1e-12);
        assert!(cocycle_test(&a, &p, &NONE, t / 2, t, &opts).unwrap() < 1e-13);
        assert!(inverse_relation_residual(&a, &p, &NONE, 0, t, &opts).unwrap() < 1e-13);
    }
}

#[test]
fn linear_drift_terms_match_bump_oracle() {
    let (g, p) = setup(24, 3);
    let a = linear_drift(&g, 0.8);
    let opts = SolverOptions::sweep();
    let (s, t) = (3, 24);
    let rec = density_l(&a, &p, &NONE, s, t, &opts).unwrap();
    let tr = solve_backward(&a, &p, &NONE, s, t, &opts).unwrap();
    let mut trace = 0.0;
    let mut sens = vec![vec![0.0; t + 1]; t + 1];
    for k in s + 1..=t {
        for th in s + 1..=t {
            sens[k][th] = sensitivity_by_bump(&a, &p, &NONE, s, t, th, k - 1, 1e-4, &opts).unwrap();
        }
        trace += sens[k][k] * g.width(k);
    }
    // (D_u a_k) at A_{k-1,t} ω by finite differences of the cylinder at the shifted path,
    // resolved by its own-cell value: R = D_u a_k / (1 + Δ_k D_k a_k).
    let mut corr = 0.0;
    for k in s + 1..=t {
        let shifted = tr.partial(k - 1);
        let mut cyl = a.cyl.clone();
        cyl.eval_time = g.node(k - 1);
        let opaque = crate::functional::Opaque::new(g.clone(), true, move |path, jumps| cyl.value(path, jumps));
        let own = derivative(&opaque, &shifted, &NONE, k).unwrap();
        let scale = 1.0 / (1.0 + g.width(k) * own);
        corr += 0.5 * (own * scale * g.width(k)).powi(2);
        for l in k + 1..=t {
            let d = derivative(&opaque, &shifted, &NONE, l).unwrap();
            corr += d * scale * sens[l][k] * g.width(k) * g.width(l);
        }
    }
    assert!((rec.trace - trace).abs() <= 1e-5 * trace.abs());
    assert!((rec.correction - corr).abs() <= 1e-5 * corr.abs());
    let quad = 0.5 * (s + 1..=t).map(|k| tr.drift_at(k).powi(2) * g.width(k)).sum::<f64>();
    assert!((rec.quadratic - quad).abs() < 1e-14);
}

#[test]
fn orbit_matches_generic_engine() {
    let (g, p) = setup(64, 4);
    let opts = SolverOptions::sweep();
    for a in [tanh_drift(&g), linear_drift(&g, 0.6), DriftCoefficient::new(Cylinder::constant(g.clone(), 0.3))] {
        let orbit = TerminalOrbit::new(&a, &p, &NONE, 1e-13, 200).unwrap();
        for (s, t) in [(0, 64), (10, 40), (5, 5), (0, 1)] {
            let gen = density_l(&a, &p, &NONE, s, t, &opts).unwrap();
            let fast = DensityRecord::of_l(s, t, orbit.density_l(s, t));
            assert!((gen.log_value - fast.log_value).abs() < 1e-10, "L ({s},{t}): {} vs {}", gen.log_value, fast.log_value);
            assert!((gen.correction - fast.correction).abs() < 1e-12);
            let genc = density_lcal(&a, &p, &NONE, s, t).unwrap();
            let fastc = DensityRecord::of_lcal(s, t, orbit.density_lcal(s, t));
            assert!((genc.log_value - fastc.log_value).abs() < 1e-10, "Lcal ({s},{t}): {} vs {}", genc.log_value, fastc.log_value);
            let j = log_jacobian_density(&a, &p, &NONE, s, t, &opts).unwrap();
            assert!((j - orbit.log_jacobian_density(s, t)).abs() < 1e-10);
            let tr = solve_backward(&a, &p, &NONE, s, t, &opts).unwrap();
            let inc = orbit.transformed_increments(s, t);
            for k in 1..=64 {
                assert!((tr.transformed().increment(k) - inc[k - 1]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn forward_from_node_is_forward_of_backward() {
    let (g, p) = setup(48, 5);
    let a = two_feature_drift(&g);
    let opts = SolverOptions::sweep();
    let t = 40;
    for r in [0, 7, 23, 39] {
        let back = solve_backward(&a, &p, &NONE, 0, r, &opts).unwrap().transformed();
        let composed = solve_forward(&a, &back, &NONE, t, &opts).unwrap().transformed();
        let direct = solve_forward_from(&a, &p, &NONE, r, t, &opts).unwrap().transformed();
        for j in 0..=48 {
            assert!((composed.value_at(j) - direct.value_at(j)).abs() < 1e-11);
        }
    }
}

fn determinant(mut m: Vec<f64>, n: usize) -> f64 {
    let mut det = 1.0;
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs())).unwrap();
        if piv != c {
            for k in 0..n {
                m.swap(c * n + k, piv * n + k);
            }
            det = -det;
        }
        let d = m[c * n + c];
        det *= d;
        for r in c + 1..n {
            let f = m[r * n + c] / d;
            for k in c..n {
                m[r * n + k] -= f * m[c * n + k];
            }
        }
    }
    det
}

#[test]
fn jacobian_density_matches_numerical_determinant() {
    let (g, p) = setup(8, 6);
    let opts = SolverOptions { tol: 1e-14, ..SolverOptions::sweep() };
    for a in [tanh_drift(&g), two_feature_drift(&g)] {
        let (s, t) = (1, 8);
        let m = 8;
        let h = 1e-6;
        let mut jac = vec![0.0; m * m];
        for th in 1..=m {
            let x = p.increment(th);
            let up = solve_backward(&a, &p.with_increment(th, x + h), &NONE, s, t, &opts).unwrap().transformed();
            let dn = solve_backward(&a, &p.with_increment(th, x - h), &NONE, s, t, &opts).unwrap().transformed();
            for k in 1..=m {
                jac[(k - 1) * m + th - 1] = (up.increment(k) - dn.increment(k)) / (2.0 * h);
            }
        }
        let det = determinant(jac, m);
        let tr = solve_backward(&a, &p, &NONE, s, t, &opts).unwrap();
        let gauss: f64 = (s + 1..=t)
            .map(|k| {
                let y = tr.drift_at(k);
                y * p.increment(k) - 0.5 * y * y * g.width(k)
            })
            .sum();
        let expect = gauss + det.abs().ln();
        let got = log_jacobian_density(&a, &p, &NONE, s, t, &opts).unwrap();
        assert!((got - expect).abs() < 1e-7, "{got} vs {expect}");
    }
}

#[test]
fn pathwise_relations_for_anticipating_drifts() {
    let opts = SolverOptions::sweep();
    for seed in 0..5 {
        let (g, p) = setup(128, 100 + seed);
        for a in [tanh_drift(&g), two_feature_drift(&g)] {
            let r = inverse_relation_residual(&a, &p, &NONE, 0, 128, &opts).unwrap();
            assert!(r < 1e-4, "inverse residual {r}");
            let c = cocycle_test(&a, &p, &NONE, 50, 128, &opts).unwrap();
            assert!(c < 1e-12, "cocycle residual {c}");
            assert_eq!(cocycle_test(&a, &p, &NONE, 128, 128, &opts).unwrap(), 0.0);
            assert!(density_l(&a, &p, &NONE, 0, 128, &opts).unwrap().value > 0.0);
            assert!(density_lcal(&a, &p, &NONE, 0, 128).unwrap().value > 0.0);
        }
    }
}

#[test]
fn relation_residuals_shrink_under_refinement() {
    let opts = SolverOptions::sweep();
    let mut inv = Vec::new();
    let mut coc = Vec::new();
    let ms = [32usize, 64, 128, 256];
    for &m in &ms {
        let g = Arc::new(TimeGrid::uniform(1.0, 32).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coarse = sample_wiener(&g, &mut rng);
        // Refine one Brownian path by Brownian bridges so the paths are coupled.
        let fine_g = Arc::new(TimeGrid::uniform(1.0, m).unwrap());
        let r = m / 32;
        let mut inc = Vec::with_capacity(m);
        let mut brng = ChaCha8Rng::seed_from_u64(11);
        for k in 1..=32 {
            let total = coarse.increment(k);
            let z: Vec<f64> = (0..r).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut brng)).collect::<Vec<f64>>();
            let mean = z.iter().sum::<f64>() / r as f64;
            let sd = (1.0 / m as f64).sqrt();
            for zi in z {
                inc.push(total / r as f64 + sd * (zi - mean));
            }
        }
        let p = WienerPath::from_increments(fine_g.clone(), inc).unwrap();
        let a = tanh_drift(&fine_g);
        inv.push(inverse_relation_residual(&a, &p, &NONE, 0, m, &opts).unwrap());
        coc.push(cocycle_test(&a, &p, &NONE, m / 2, m, &opts).unwrap());
    }
    let x: Vec<f64> = ms.iter().map(|&m| 1.0 / m as f64).collect();
    let si = mc::loglog_slope(&x, &inv);
    assert!(si >= 0.8, "inverse slope {si}: {inv:?}");
    // The discrete density is exactly multiplicative along the flow.
    assert!(coc.iter().all(|&c| c < 1e-12), "{coc:?}");
}

#[test]
fn normalization_and_identity_in_small_monte_carlo() {
    let g = Arc::new(TimeGrid::uniform(1.0, 64).unwrap());
    let a = tanh_drift(&g);
    let src = PathSource::wiener_only(g.clone(), 2024, mc::suite::GIRSANOV);
    let f = Cylinder::of_feature(g.clone(), 1.0, FeatureSpec::half(), Shape::Cos(1.0)).unwrap();
    let rep = girsanov_identity_test(&a, &f, 0, 64, 20_000, &src, &SolverOptions::sweep(), Engine::Auto).unwrap();
    assert!((rep.normalization.mean - 1.0).abs() < 3.0 * rep.normalization.se, "{:?}", rep.normalization);
    assert!(rep.first.z_score() < 3.0, "{:?}", rep.first);
    assert!(rep.second.z_score() < 3.0, "{:?}", rep.second);
    let mut buf = Vec::new();
    write_identity_rows(&mut buf, &[("cos_half".into(), rep)]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("test,s,t,lhs,rhs,se_lhs,se_rhs,N,m,seed"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn generic_engine_agrees_in_monte_carlo() {
    let g = Arc::new(TimeGrid::uniform(1.0, 32).unwrap());
    let a = tanh_drift(&g);
    let src = PathSource::wiener_only(g.clone(), 5, mc::suite::GIRSANOV);
    let opts = SolverOptions::sweep();
    let fast = normalization_test(&a, 0, 32, 500, &src, &opts, Engine::Auto).unwrap();
    let slow = normalization_test(&a, 0, 32, 500, &src, &opts, Engine::Generic).unwrap();
    assert!((fast.mean - slow.mean).abs() < 1e-10);
}

#[test]
fn exact_jacobian_densities_are_inverse() {
    let opts = SolverOptions { tol: 1e-14, ..SolverOptions::sweep() };
    let (g, p) = setup(64, 12);
    for a in [tanh_drift(&g), two_feature_drift(&g)] {
        for (s, t) in [(0, 64), (20, 50)] {
            let l = log_jacobian_density(&a, &p, &NONE, s, t, &opts).unwrap();
            let shifted = solve_backward(&a, &p, &NONE, s, t, &opts).unwrap().transformed();
            let lc = log_jacobian_density_lcal(&a, &shifted, &NONE, s, t).unwrap();
            assert!((l + lc).abs() < 1e-10, "{l} {lc}");
        }
    }
    let a = tanh_drift(&g);
    let orbit = TerminalOrbit::new(&a, &p, &NONE, 1e-13, 200).unwrap();
    for (s, t) in [(0, 64), (13, 31)] {
        let gen = log_jacobian_density_lcal(&a, &p, &NONE, s, t).unwrap();
        assert!((gen - orbit.log_jacobian_density_lcal(s, t)).abs() < 1e-11);
    }
}

#[test]
fn lcal_jacobian_matches_forward_map_determinant() {
    let (g, p) = setup(8, 13);
    let opts = SolverOptions::sweep();
    let a = two_feature_drift(&g);
    let (s, t, m) = (2, 8, 8);
    let h = 1e-6;
    let mut jac = vec![0.0; m * m];
    for th in 1..=m {
        let x = p.increment(th);
        let up = solve_forward_from(&a, &p.with_increment(th, x + h), &NONE, s, t, &opts).unwrap().transformed();
        let dn = solve_forward_from(&a, &p.with_increment(th, x - h), &NONE, s, t, &opts).unwrap().transformed();
        for k in 1..=m {
            jac[(k - 1) * m + th - 1] = (up.increment(k) - dn.increment(k)) / (2.0 * h);
        }
    }
    let det = determinant(jac, m);
    let fw = solve_forward_from(&a, &p, &NONE, s, t, &opts).unwrap();
    let gauss: f64 = (s + 1..=t)
        .map(|k| {
            let w = fw.drift_at(k);
            -w * p.increment(k) - 0.5 * w * w * g.width(k)
        })
        .sum();
    let got = log_jacobian_density_lcal(&a, &p, &NONE, s, t).unwrap();
    assert!((got - (gauss + det.abs().ln())).abs() < 1e-7);
}
