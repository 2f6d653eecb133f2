use super::*;
use crate::bath::{level_energies, sample_bath, CanonicalModel, CouplingRule};
use crate::kernel::KernelKind;
use proptest::prelude::*;

fn reference_bath(n: usize, seed: u64) -> BathSpec {
    sample_bath(
        n,
        ZeemanDistribution::new(1.0, 0.2),
        &CouplingRule::Uniform(1.0),
        seed,
    )
    .unwrap()
}

fn j_even(engine: &RateEngine, w: f64) -> bool {
    let j = engine.spectral();
    j.continuum(w) >= 0.0 && j.continuum(w) == j.continuum(-w)
}

fn indicator() -> MeasurementKernel {
    MeasurementKernel::indicator(1.0).unwrap()
}

fn continuum(n: usize, seed: u64, kernel: MeasurementKernel) -> RateEngine {
    let bath = reference_bath(n, seed);
    let j = SpectralDensity::new(&bath, 0.01, 1.0).unwrap();
    RateEngine::continuum(&bath, kernel, j).unwrap()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn spectral_density_at_peak() {
    let bath = reference_bath(100, 7);
    let j = SpectralDensity::new(&bath, 0.01, 1.0).unwrap();
    let p_peak = 1.0 / (0.2 * (2.0 * PI).sqrt());
    let expected = 2.0 * PI * 1e-4 * 100.0 * p_peak;
    assert!((j.continuum(1.0) - expected).abs() < 1e-15);
    assert!((j.continuum(1.0) - 0.12533).abs() < 1e-5);
    assert_eq!(j.continuum(-0.8), j.continuum(0.8));
}

#[test]
fn continuum_needs_width() {
    let bath = BathSpec::uniform(10, 1.0).unwrap();
    let j = SpectralDensity::new(&bath, 0.01, 1.0).unwrap();
    assert!(RateEngine::continuum(&bath, indicator(), j).is_err());
}

#[test]
fn single_spin_has_one_term() {
    let bath = BathSpec::uniform(1, 1.0).unwrap();
    for kernel in [indicator(), MeasurementKernel::gaussian(0.7).unwrap()] {
        for e in [-1.0, 0.0, 1.0] {
            for ep in [-1.0, 0.0, 1.0] {
                let f = f_exact(&bath, &kernel, e, ep, 0, true).unwrap();
                let term = kernel.weight(e, 0.5) * kernel.weight(ep, -0.5);
                assert_eq!(f, term);
            }
        }
    }
    assert_eq!(f_exact(&bath, &indicator(), 1.0, 0.0, 0, true).unwrap(), 1.0);
}

#[test]
fn f_exact_matches_full_double_loop() {
    // independent oracle: all pairs of full configurations (i, j) that differ
    // by raising spin r, weighted by W(E|E_i) W(E'|E_j)
    let bath = reference_bath(12, 7);
    let k = indicator();
    let levels = level_energies(&bath).unwrap();
    let (e, ep) = (-1.0, -2.0);
    for r in 0..12 {
        let mut brute = 0.0;
        for (j, &ej) in levels.iter().enumerate() {
            if j >> r & 1 == 0 {
                let ei = levels[j | 1 << r];
                brute += k.weight(e, ei) * k.weight(ep, ej);
            }
        }
        assert_eq!(f_exact(&bath, &k, e, ep, r, true).unwrap(), brute, "spin {r}");
    }
}

#[test]
fn f_exact_at_own_splitting_and_ratio_by_hand() {
    let bath = reference_bath(8, 3);
    let k = indicator();
    for r in 0..8 {
        let own = f_exact_at(&bath, &k, -1.0, -2.0, r, bath.zeeman[r]).unwrap();
        assert_eq!(own, f_exact(&bath, &k, -1.0, -2.0, r, true).unwrap());
    }
    // ratio from a direct scan over all 2^N configurations with spin r raised by omega
    let levels = level_energies(&bath).unwrap();
    let (e, ep, w) = (-1.0, -2.0, 1.0);
    let mut count = 0.0;
    for r in 0..8 {
        let h = 0.5 * bath.zeeman[r];
        for (j, &ej) in levels.iter().enumerate() {
            if j >> r & 1 == 0 {
                // complement energy: remove spin r (currently down)
                let x = ej + h;
                count += k.weight(e, x + 0.5 * w) * k.weight(ep, x - 0.5 * w);
            }
        }
    }
    let expected = count / 8.0 / f_approx(&bath, &k, e, ep, w);
    let got = overlap_ratio(&bath, &k, e, ep, w).unwrap();
    assert!((got - expected).abs() < 1e-14 * expected, "{got} vs {expected}");
}

#[test]
fn f_approx_full_overlap_matches_half_density() {
    let bath = reference_bath(100, 7);
    let s = bath.sigma_n();
    let k = indicator();
    for e in [-1.0, 0.0, -6.0, 9.0] {
        let f = f_approx_fraction(s, &k, e, e - 1.0, 1.0);
        let quad = simpson(|x| 0.5 * normal_pdf(x, s), e - 1.0, e, 4000);
        assert!((f / quad - 1.0).abs() < 1e-10);
        let mid = 0.5 * normal_pdf(e - 0.5, s);
        assert!((f / mid - 1.0).abs() < 1e-2);
    }
}

#[test]
fn f_approx_partial_overlap_against_integrand() {
    // midpoint rule directly on g/2 W W with the kernel's own weight function
    let bath = reference_bath(30, 3);
    let s = bath.sigma_n();
    let k = indicator();
    let (e, ep, w) = (-1.0, -2.0, 0.7);
    let n = 2_000_000;
    let (a, b) = (-4.0, 2.0);
    let h = (b - a) / n as f64;
    let quad: f64 = (0..n)
        .map(|i| {
            let x = a + (i as f64 + 0.5) * h;
            0.5 * normal_pdf(x, s) * k.weight(e, x + 0.5 * w) * k.weight(ep, x - 0.5 * w)
        })
        .sum::<f64>()
        * h;
    let f = f_approx_fraction(s, &k, e, ep, w);
    assert!((f / quad - 1.0).abs() < 1e-5, "{f} vs {quad}");
}

#[test]
fn f_approx_gaussian_against_quadrature() {
    let bath = reference_bath(30, 3);
    let s = bath.sigma_n();
    let k = MeasurementKernel::gaussian(1.0).unwrap();
    for (e, ep, w) in [(-1.0, -2.0, 1.0), (0.5, 2.0, -0.8), (3.0, 3.0, 0.2)] {
        let quad = simpson(
            |x| 0.5 * normal_pdf(x, s) * k.weight(e, x + 0.5 * w) * k.weight(ep, x - 0.5 * w),
            -40.0,
            40.0,
            40_000,
        );
        let f = f_approx_fraction(s, &k, e, ep, w);
        assert!((f / quad - 1.0).abs() < 1e-9);
        let g2quad = simpson(
            |x| 0.5 * normal_pdf(x, s) * k.weight(e, x - 0.5 * w) * k.weight(ep, x - 0.5 * w),
            -40.0,
            40.0,
            40_000,
        );
        assert!((g2_approx_fraction(s, &k, e, ep, w) / g2quad - 1.0).abs() < 1e-9);
    }
}

#[test]
fn disjoint_windows_vanish() {
    let engine = continuum(100, 7, indicator());
    let s = engine.volumes().dos.sigma_n;
    let k = indicator();
    for (e, ep, w) in [(0.0, 0.0, 1.0), (-1.0, -3.0, 1.0), (2.0, 0.0, 0.9)] {
        assert_eq!(f_approx_fraction(s, &k, e, ep, w), 0.0);
        assert_eq!(engine.gamma1(e, ep, w).unwrap(), 0.0);
    }
}

#[test]
fn marginal_consistency() {
    let bath = reference_bath(100, 7);
    let s = bath.sigma_n();
    let k = indicator();
    let v = Volumes::gaussian(&bath, k);
    for (ep, w) in [(-2.0, 1.0), (3.0, -1.0), (0.0, 0.6)] {
        let total: f64 = (-60..=60)
            .map(|m| f_approx_fraction(s, &k, m as f64, ep, w))
            .sum();
        let expected = 0.5 * v.fraction(ep + 0.5 * w);
        assert!((total - expected).abs() < 1e-8 * expected.max(1e-300));
        assert!((total / expected - 1.0).abs() < 1e-8);
    }
    let kg = MeasurementKernel::gaussian(1.0).unwrap();
    let vg = Volumes::gaussian(&bath, kg);
    for (ep, w) in [(-2.0, 1.0), (1.5, -0.5)] {
        let total: f64 = kg
            .output_quadrature(ep + w, ep + w)
            .into_iter()
            .map(|(e, wt)| wt * f_approx_fraction(s, &kg, e, ep, w))
            .sum();
        let expected = 0.5 * vg.fraction(ep + 0.5 * w);
        assert!((total / expected - 1.0).abs() < 1e-8);
    }
}

#[test]
fn gamma2_identity_for_indicator() {
    let cont = continuum(100, 7, indicator());
    let bath = reference_bath(8, 7);
    let j = SpectralDensity::new(&bath, 0.05, 1.0).unwrap();
    let orc = RateEngine::oracle(&bath, indicator(), j).unwrap();
    for engine in [&cont, &orc] {
        for w in [1.0, -1.0] {
            for e in [-2.0, -1.0, 0.0, 1.0] {
                let kappa = engine.kappa(e, w).unwrap();
                for ep in [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0] {
                    let g2 = engine.gamma2(ep, e, w).unwrap();
                    if ep == e {
                        assert!((g2 - kappa).abs() <= 1e-14 * kappa.max(1e-300));
                    } else {
                        assert_eq!(g2, 0.0);
                    }
                }
            }
        }
    }
}

#[test]
fn kappa_sum_matches_closed_form() {
    for kernel in [indicator(), MeasurementKernel::gaussian(1.0).unwrap()] {
        let engine = continuum(100, 7, kernel);
        for e in [-15.0, -4.0, 0.0, 7.0] {
            for w in [1.0, -1.0, 0.5] {
                let sum = engine.kappa(e, w).unwrap();
                let closed = kappa_closed_form(&engine, e, w).unwrap();
                let tol = if kernel.kind == KernelKind::Indicator { 1e-12 } else { 1e-6 };
                assert!((sum / closed - 1.0).abs() < tol, "{kernel:?} {e} {w}");
            }
        }
    }
}

#[test]
fn rates_nonnegative() {
    let engine = continuum(100, 7, indicator());
    for e in -10..10 {
        for ep in -10..10 {
            for w in [1.0, -1.0, 0.4] {
                assert!(engine.gamma1(e as f64, ep as f64, w).unwrap() >= 0.0);
                assert!(engine.gamma2(e as f64, ep as f64, w).unwrap() >= 0.0);
            }
        }
    }
}

#[test]
fn kappa_averages() {
    let engine = continuum(100, 7, indicator());
    let v = engine.volumes();
    let grid = v.default_grid().unwrap();
    let canonical = GridCanonical::new(v, grid).unwrap();
    let energies = grid.energies();
    let z: f64 = energies.iter().map(|&e| v.fraction(e)).sum();
    let direct: f64 = energies
        .iter()
        .map(|&e| v.fraction(e) * engine.kappa(e, 1.0).unwrap())
        .sum::<f64>()
        / z;
    let kb = engine.kappa_beta(&canonical, 0.0, 1.0).unwrap();
    assert!((kb / direct - 1.0).abs() < 1e-12);

    let mut p = vec![0.0; grid.len()];
    p[grid.index_of(-5.0).unwrap()] = 1.0;
    assert_eq!(
        engine.kappa_p_averaged(&grid, &p, -1.0).unwrap(),
        engine.kappa(-5.0, -1.0).unwrap()
    );
    p[0] = 0.5;
    assert!(matches!(
        engine.kappa_p_averaged(&grid, &p, 1.0),
        Err(Error::NotNormalized { .. })
    ));
}

fn linear_fit_residual(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let worst = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).abs())
        .fold(0.0, f64::max);
    let range = ys.iter().copied().fold(f64::MIN, f64::max)
        - ys.iter().copied().fold(f64::MAX, f64::min);
    worst / range
}

#[test]
fn kappa_linear_in_energy() {
    for n in [100, 1000] {
        let engine = continuum(n, 7, indicator());
        let s = engine.volumes().dos.sigma_n;
        let m = (3.0 * s).floor() as i64;
        let xs: Vec<f64> = (-m..=m).map(|i| i as f64).collect();
        for w in [1.0, -1.0] {
            let ys: Vec<f64> = xs.iter().map(|&e| engine.kappa(e, w).unwrap()).collect();
            let res = linear_fit_residual(&xs, &ys);
            assert!(res < 0.05, "N = {n}, w = {w}: {res}");
        }
    }
}

#[test]
fn correlation_at_zero_and_hermiticity() {
    let engine = continuum(200, 7, indicator());
    let c = engine.correlation(-1.0, -2.0).unwrap();
    let c0 = c.value(0.0);
    assert_eq!(c0.im, 0.0);
    let bath = reference_bath(200, 7);
    let s = bath.sigma_n();
    let v = engine.volumes().fraction(-2.0);
    let direct: f64 = bath
        .zeeman
        .iter()
        .map(|&w| {
            f_approx_fraction(s, &indicator(), -1.0, -2.0, w)
                + f_approx_fraction(s, &indicator(), -1.0, -2.0, -w)
        })
        .sum::<f64>()
        / v;
    assert!((c0.re / direct - 1.0).abs() < 1e-12);
    for t in [0.3, 2.0, 11.0] {
        let (a, b) = (c.value(t), c.value(-t));
        assert!((a - b.conj()).norm() < 1e-12 * c0.re);
    }
}

#[test]
fn correlation_decays_for_large_bath() {
    let engine = continuum(1000, 7, indicator());
    let c = engine.correlation(-1.0, -2.0).unwrap();
    let c0 = c.value(0.0).norm();
    let t_decay = 3.0 / 0.2;
    let taus: Vec<f64> = (0..=300).map(|i| t_decay * i as f64 / 300.0).collect();
    let smallest = taus.iter().map(|&t| c.value(t).norm()).fold(f64::MAX, f64::min);
    assert!(smallest <= 0.1 * c0, "{smallest} vs {c0}");
}

#[test]
fn numerical_rate_of_single_mode() {
    // one term a e^{-i W tau}: lambda^2 int e^{i(w-W)tau} = lambda^2 a 2 sin((w-W)T)/(w-W)
    let c = CorrelationFunction {
        terms: vec![(1.0, 0.3)],
    };
    let taus = symmetric_times(50.0, 8193);
    let samples = c.sample(&taus);
    for w in [0.9, 1.05, 1.3] {
        let x: f64 = w - 1.0;
        let exact = 0.01 * 0.3 * 2.0 * (x * 50.0).sin() / x;
        let num = numerical_rate(0.1, &taus, &samples, w);
        assert!((num - exact).abs() < 1e-4 * 0.3, "{num} vs {exact}");
    }
}

#[test]
fn kms_at_symmetric_point() {
    let engine = continuum(1000, 7, indicator());
    let r = engine.kms_residual(0.0, 1.0).unwrap();
    let direct = (engine.kappa(0.0, -1.0).unwrap() / engine.kappa(0.0, 1.0).unwrap() - 1.0).abs();
    assert!((r - direct).abs() < 1e-15);
}

#[test]
fn kms_large_bath() {
    let engine = continuum(1000, 7, indicator());
    let s = engine.volumes().dos.sigma_n;
    let r = engine.kms_residual(-8.0, 1.0).unwrap();
    assert!(r < 0.05, "{r}");
    // uniform-spin estimate of the ratio
    let expected = (-8.0_f64 / 260.0).exp();
    let ratio = engine.kappa(-8.0, -1.0).unwrap() / engine.kappa(-8.0, 1.0).unwrap();
    assert!((ratio - expected).abs() < 0.01, "{ratio} vs {expected}, sigma^2 {}", s * s);
}

#[test]
fn kms_in_oracle_mode() {
    let bath = reference_bath(14, 7);
    let j = SpectralDensity::new(&bath, 0.01, 1.0).unwrap();
    let engine = RateEngine::oracle(&bath, indicator(), j).unwrap();
    let r = engine.kms_residual(-1.0, 1.0).unwrap();
    assert!(r.is_finite() && r < 0.5, "{r}");
}

#[test]
fn reduced_state_properties() {
    let bath = reference_bath(14, 7);
    let k = indicator();
    let mid = reduced_microcanonical_state(&bath, &k, 3, 0.0).unwrap();
    let w = bath.zeeman[3];
    let sigma = bath.sigma_n();
    assert!((mid.exact[0] - 0.5).abs() < w / sigma);
    assert_eq!(mid.beta.abs(), 0.0);
    for r in 0..14 {
        let st = reduced_microcanonical_state(&bath, &k, r, -2.0).unwrap();
        let levels = complement_levels(&bath, r).unwrap();
        let h = 0.5 * bath.zeeman[r];
        let up: f64 = levels.iter().map(|&x| k.weight(-2.0, x + h)).sum();
        let down: f64 = levels.iter().map(|&x| k.weight(-2.0, x - h)).sum();
        assert!((st.exact[1] / st.exact[0] - up / down).abs() < 1e-12);
        for i in 0..2 {
            assert!((st.exact[i] - st.canonical[i]).abs() < 0.05, "spin {r}: {st:?}");
        }
    }
}

#[test]
fn rate_table_matches_engine() {
    let engine = continuum(100, 7, indicator());
    let grid = EnergyGrid::symmetric(6.0, 1.0).unwrap();
    let table = RateTable::build(&engine, grid, &[1.0, -1.0]).unwrap();
    for (wi, w) in [1.0, -1.0].into_iter().enumerate() {
        for i in 0..grid.len() {
            let e = grid.energy(i);
            assert_eq!(table.kappa(wi, i), engine.kappa(e, w).unwrap());
            for j in 0..grid.len() {
                let ep = grid.energy(j);
                assert_eq!(table.gamma1(wi, i, j), engine.gamma1(e, ep, w).unwrap());
                assert_eq!(table.gamma2(wi, i, j), engine.gamma2(e, ep, w).unwrap());
            }
        }
    }
    let mut out = Vec::new();
    table.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("E,E_prime,omega,gamma1,gamma2\n"));
    assert!(text.lines().count() > 1);
}

#[test]
fn rate_table_excludes_empty_bins() {
    let bath = BathSpec::uniform(4, 1.0).unwrap();
    let j = SpectralDensity::new(&bath, 0.05, 1.0).unwrap();
    let engine = RateEngine::oracle(&bath, indicator(), j).unwrap();
    let grid = EnergyGrid::symmetric(4.0, 1.0).unwrap();
    let table = RateTable::build(&engine, grid, &[1.0]).unwrap();
    assert_eq!(table.excluded, vec![-4.0, -3.0, 3.0, 4.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn f_symmetry_exact(seed in 0u64..10_000, n in 1usize..8, e in -4i32..4, ep in -4i32..4, gauss in any::<bool>()) {
        let bath = reference_bath(n, seed);
        let k = if gauss { MeasurementKernel::gaussian(0.8).unwrap() } else { indicator() };
        for r in 0..n {
            let a = f_exact(&bath, &k, e as f64, ep as f64, r, true).unwrap();
            let b = f_exact(&bath, &k, ep as f64, e as f64, r, false).unwrap();
            prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn rates_nonnegative_everywhere(seed in 0u64..1000, e in -12.0f64..12.0, ep in -12.0f64..12.0, w in -2.0f64..2.0) {
        let bath = reference_bath(60, seed);
        let j = SpectralDensity::new(&bath, 0.01, 1.0).unwrap();
        let engine = RateEngine::continuum(&bath, indicator(), j).unwrap();
        let (e, ep) = (e.round(), ep.round());
        if engine.volumes().fraction(ep) > 0.0 {
            prop_assert!(engine.gamma1(e, ep, w).unwrap() >= 0.0);
            prop_assert!(engine.gamma2(e, ep, w).unwrap() >= 0.0);
        }
        prop_assert!(j_even(&engine, w));
    }

    #[test]
    fn f_symmetry_approx(e in -30.0f64..30.0, ep in -30.0f64..30.0, w in -3.0f64..3.0, gauss in any::<bool>()) {
        let k = if gauss { MeasurementKernel::gaussian(1.0).unwrap() } else { indicator() };
        let a = f_approx_fraction(5.0, &k, e, ep, w);
        let b = f_approx_fraction(5.0, &k, ep, e, -w);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn gamma1_uses_exact_count_in_oracle_mode() {
    let bath = reference_bath(6, 7);
    let k = indicator();
    let j = SpectralDensity::new(&bath, 0.05, 1.0).unwrap();
    let engine = RateEngine::oracle(&bath, k, j).unwrap();
    let (e, ep, w) = (0.0, -1.0, 1.0);
    let v = engine.volumes().volume(ep);
    let mut expected = 0.0;
    for r in 0..6 {
        let om = bath.zeeman[r];
        if (w - om).abs() < 0.5 {
            expected += f_exact(&bath, &k, e, ep, r, true).unwrap();
        }
    }
    expected *= 2.0 * PI * 0.05 * 0.05 / v;
    let got = engine.gamma1(e, ep, w).unwrap();
    assert!((got / expected - 1.0).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn canonical_model_used_for_kappa_beta_is_normalized() {
    let engine = continuum(100, 7, indicator());
    let v = engine.volumes();
    let c = GridCanonical::new(v, v.default_grid().unwrap()).unwrap();
    let p = c.probabilities(0.75);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(c.mean_energy(0.75) < 0.0);
}
#[test]
fn kms_residual_shrinks_with_bath_size() {
    let residuals: Vec<f64> = [50, 100, 200, 400]
        .iter()
        .map(|&n| {
            let engine = continuum(n, 7, indicator());
            let e = (-0.5 * engine.volumes().dos.sigma_n).round();
            engine.kms_residual(e, 1.0).unwrap()
        })
        .collect();
    for w in residuals.windows(2) {
        assert!(w[1] < w[0], "{residuals:?}");
    }
}
