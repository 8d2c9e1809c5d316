use super::*;
use crate::quadrature::integrate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn power_model(eps: Vec<f64>, support: f64) -> LevyModel {
    build_model(
        LevyDensity::SymmetricPower { coefficient: 1.0, exponent: 1.5, support },
        eps,
        QuadratureOptions::default(),
        BoundFunction::QuadraticCap { beta: 0.5, k1: 1.0, k2: 0.25 },
    )
    .unwrap()
}

fn band_model(mass: f64) -> LevyModel {
    build_model(
        LevyDensity::UniformBand { lo: 1.0, hi: 2.0, mass, symmetric: false },
        vec![1.0],
        QuadratureOptions::default(),
        BoundFunction::Constant { value: 0.3 },
    )
    .unwrap()
}

#[test]
fn power_layer_intensity_matches_antiderivative() {
    let eps2 = 0.25;
    let m = power_model(vec![1.0, eps2], 1.0);
    // Layer 1 carries no mass and is dropped.
    assert_eq!(m.dropped_layers, vec![1]);
    let expected = 4.0 * (eps2.powf(-0.5) - 1.0);
    assert!((m.layers[0].intensity - expected).abs() < 1e-8 * expected);
}

#[test]
fn narrow_band_single_layer() {
    let m = build_model(
        LevyDensity::UniformBand { lo: 0.999, hi: 1.001, mass: 3.0, symmetric: false },
        vec![1.0, 0.5],
        QuadratureOptions::default(),
        BoundFunction::Zero,
    )
    .unwrap();
    let total: f64 = m.layers.iter().map(|l| l.intensity).sum();
    assert!((total - 3.0).abs() < 1e-10);
}

#[test]
fn quadratic_cap_values() {
    let g = BoundFunction::QuadraticCap { beta: 0.5, k1: 1.0, k2: 0.25 };
    assert!((g.eval(0.3) - 0.09).abs() < 1e-15);
    assert_eq!(g.eval(0.7), 0.25);
    assert_eq!(g.eval(-0.7), 0.25);
}

#[test]
fn rejects_non_square_integrable_measure() {
    let r = build_model(
        LevyDensity::SymmetricPower { coefficient: 1.0, exponent: 3.5, support: 1.0 },
        vec![1.0, 0.5],
        QuadratureOptions::default(),
        BoundFunction::Zero,
    );
    assert!(matches!(r, Err(Error::NonIntegrableMeasure(_))));
}

#[test]
fn all_empty_layers_rejected() {
    let r = build_model(
        LevyDensity::UniformBand { lo: 0.1, hi: 0.2, mass: 1.0, symmetric: true },
        vec![1.0, 0.5],
        QuadratureOptions::default(),
        BoundFunction::Zero,
    );
    assert!(matches!(r, Err(Error::EmptyLayer)));
}

#[test]
fn layer_partition_sums_to_tail_mass() {
    let eps = vec![1.0, 0.5, 0.25, 0.1, 0.05];
    let m = power_model(eps, 2.0);
    let total: f64 = m.layers.iter().map(|l| l.intensity).sum();
    // 2∫_{0.05}^{2} y^{-3/2} dy
    let oracle = 4.0 * (0.05f64.powf(-0.5) - 2f64.powf(-0.5));
    assert!((total - oracle).abs() < 1e-7 * oracle);
    assert!((m.mass_above(0.05).unwrap() - oracle).abs() < 1e-7 * oracle);
}

#[test]
fn compensator_examples() {
    let m = band_model(2.0);
    assert_eq!(compensator_integral(&m, &|_, _| 0.0, 1.0, 1.0).unwrap(), 0.0);
    let c = compensator_integral(&m, &|_, _| 1.0, 1.0, 1.0).unwrap();
    assert!((c - 2.0).abs() < 1e-12);

    // v = g against |y|^{-3/2} on |y| <= 2, above ε.
    let p = power_model(vec![1.0, 0.5, 0.25, 0.1], 2.0);
    let (beta, k1, k2): (f64, f64, f64) = (0.5, 1.0, 0.25);
    for eps in [0.1, 0.3, 0.5, 1.0] {
        let lo = eps;
        // 2∫_lo^β k1 y^{1/2} dy + 2∫_{max(lo,β)}^2 k2 y^{-3/2} dy
        let quad_part = if lo < beta { 2.0 * k1 * (2.0 / 3.0) * (beta.powf(1.5) - lo.powf(1.5)) } else { 0.0 };
        let a = lo.max(beta);
        let tail_part = 2.0 * k2 * 2.0 * (a.powf(-0.5) - 2f64.powf(-0.5));
        let oracle = 0.7 * (quad_part + tail_part);
        let v = |_: f64, y: f64| p.bound.eval(y);
        let got = compensator_integral(&p, &v, eps, 0.7).unwrap();
        assert!((got - oracle).abs() < 1e-8 * oracle, "eps {eps}: {got} vs {oracle}");
    }
}

#[test]
fn hypothesis_flags() {
    let mut m = power_model(vec![1.0, 0.5], 1.0);
    m.bound = BoundFunction::Zero;
    let r = hypothesis_report(&m).unwrap();
    assert_eq!(r.int_g, Integral::Finite(0.0));
    assert_eq!(r.int_exp_2g, Integral::Finite(0.0));
    assert_eq!(r.g_near_zero, 0.0);

    m.bound = BoundFunction::QuadraticCap { beta: 0.5, k1: 1.0, k2: 0.25 };
    let r = hypothesis_report(&m).unwrap();
    assert!(r.dominated && r.exp_integrable && r.exp2_integrable);

    m.bound = BoundFunction::InversePower { coefficient: 1.0, power: 1.0 };
    let r = hypothesis_report(&m).unwrap();
    assert!(!r.int_g2.is_finite());
    assert!(!r.dominated);
}

#[test]
fn poisson_integral_examples() {
    assert_eq!(poisson_integral(&JumpSet::empty(), &|_, _| 1.0, 0.0, 1.0), 0.0);
    let one = JumpSet::new(vec![Jump { time: 0.5, size: 2.0, layer: 1 }]).unwrap();
    assert_eq!(poisson_integral(&one, &|_, _| 1.0, 1.0, 1.0), 1.0);
    let two = JumpSet::new(vec![
        Jump { time: 0.7, size: 1.5, layer: 1 },
        Jump { time: 0.2, size: 0.5, layer: 2 },
    ])
    .unwrap();
    assert_eq!(poisson_integral(&two, &|_, y| y, 0.1, 1.0), 2.0);
    assert_eq!(poisson_integral(&two, &|_, y| y, 0.1, 0.5), 0.5);
}

#[test]
fn no_layer_above_cut_gives_no_jumps() {
    let m = power_model(vec![1.0, 0.5], 1.0);
    let g = TimeGrid::uniform(1.0, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        assert!(sample_jumps(&m, &g, &mut rng, 1.0).is_empty());
    }
}

#[test]
fn jump_count_mean() {
    let m = band_model(2.0);
    let g = TimeGrid::uniform(1.0, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 100_000;
    let total: usize = (0..n).map(|_| sample_jumps(&m, &g, &mut rng, 1.0).len()).sum();
    let mean = total as f64 / n as f64;
    assert!((mean - 2.0).abs() < 3.0 * (2.0f64 / n as f64).sqrt(), "mean {mean}");
}

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn layer_sizes_pass_ks_against_quadrature_cdf() {
    let m = power_model(vec![1.0, 0.5, 0.25, 0.1], 2.0);
    let g = TimeGrid::uniform(1.0, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut by_layer: Vec<Vec<f64>> = vec![vec![]; m.epsilons.len() + 1];
    while m.layers.iter().any(|l| by_layer[l.index].len() < 2000) {
        for j in sample_jumps(&m, &g, &mut rng, 0.1).jumps() {
            assert!(m.layers.iter().find(|l| l.index == j.layer).unwrap().contains(j.size));
            by_layer[j.layer].push(j.size);
        }
    }
    let opts = QuadratureOptions::default();
    for layer in &m.layers {
        let lam = layer.intensity;
        let (lo, hi) = (layer.lower, layer.upper.min(2.0));
        let dens = |y: f64| m.density.eval(y);
        // Independent CDF by direct quadrature.
        let cdf = |y: f64| -> f64 {
            let neg = if y <= -hi {
                0.0
            } else if y < -lo {
                integrate(dens, -hi, y, &opts).unwrap().value
            } else {
                integrate(dens, -hi, -lo, &opts).unwrap().value
            };
            let pos = if y <= lo { 0.0 } else { integrate(dens, lo, y.min(hi), &opts).unwrap().value };
            (neg + pos) / lam
        };
        let xs = by_layer[layer.index].clone();
        let n = xs.len() as f64;
        let d = ks_statistic(xs, cdf);
        // Asymptotic KS critical value at level 0.01.
        assert!(d < 1.628 / n.sqrt(), "layer {} KS {d}", layer.index);
        // The sampler's own table agrees with the quadrature CDF.
        for y in [-1.5, -0.7, -0.3, 0.12, 0.3, 0.75, 1.9] {
            if layer.contains(y) {
                let li = m.layers.iter().position(|l| l.index == layer.index).unwrap();
                assert!((m.layer_table_cdf(li, y) - cdf(y)).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn compensation_identity() {
    // E[Σ v(τ,y)] = ∫∫ v dν ds for bounded v.
    let m = power_model(vec![1.0, 0.5, 0.25], 2.0);
    let g = TimeGrid::uniform(1.0, 4).unwrap();
    let v = |s: f64, y: f64| (1.0 + s) * m.bound.eval(y) * y.signum();
    let comp = compensator_integral(&m, &v, 0.25, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let xs: Vec<f64> = (0..n)
        .map(|_| poisson_integral(&sample_jumps(&m, &g, &mut rng, 0.25), &v, 0.25, 1.0) - comp)
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    assert!(mean.abs() < 3.0 * (var / n as f64).sqrt(), "mean {mean}");
}

#[test]
fn integrals_are_deterministic() {
    let m = power_model(vec![1.0, 0.5], 2.0);
    let v = |s: f64, y: f64| s * y.cos();
    let a = compensator_integral(&m, &v, 0.5, 0.8).unwrap();
    let b = compensator_integral(&m, &v, 0.5, 0.8).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn cdf_tables_export() {
    let m = band_model(2.0);
    let mut buf = Vec::new();
    m.write_cdf_tables(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + CDF_POINTS);
    assert!(text.lines().last().unwrap().ends_with("1.000000000000e0"));
}
