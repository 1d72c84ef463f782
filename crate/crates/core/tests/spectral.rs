mod transforms {
    use deflicker::random::rand_tensor;
    use deflicker::spectral::*;
    use deflicker::Error;
    use deflicker::Tensor;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn naive_dft2(x: &Tensor) -> ComplexTensor {
        let (h, w, c) = x.dims3().unwrap();
        let mut out = Vec::with_capacity(h * w * c);
        for u in 0..h {
            for v in 0..w {
                for k in 0..c {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..h {
                        for j in 0..w {
                            let ang =
                                -2.0 * PI * ((u * i) as f64 / h as f64 + (v * j) as f64 / w as f64);
                            acc += x.at3(i, j, k) * Complex64::from_polar(1.0, ang);
                        }
                    }
                    out.push(acc);
                }
            }
        }
        ComplexTensor::new([h, w, c], out).unwrap()
    }

    fn brute_autocorr(x: &Tensor) -> Tensor {
        let (h, w, c) = x.dims3().unwrap();
        Tensor::from_fn_hwc(h, w, c, |ty, tx, k| {
            let mut acc = 0.0;
            for i in 0..h {
                for j in 0..w {
                    acc += x.at3(i, j, k) * x.at3((i + ty) % h, (j + tx) % w, k);
                }
            }
            acc
        })
    }

    #[test]
    fn delta_has_flat_spectrum() {
        let mut x = Tensor::zeros(&[4, 6, 1]);
        x.data_mut()[0] = 1.0;
        let z = fft2(&x).unwrap();
        for v in z.data() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_image_concentrates_in_dc() {
        let x = Tensor::full(&[5, 3, 2], 0.7);
        let z = fft2(&x).unwrap();
        for (idx, v) in z.data().iter().enumerate() {
            let expect = if idx < 2 { 0.7 * 15.0 } else { 0.0 };
            assert!((v - Complex64::new(expect, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_dft_and_roundtrips() {
        for shape in [[4, 4, 1], [7, 5, 1], [8, 8, 2], [6, 29, 1]] {
            let x = rand_tensor(&shape, 5);
            let z = fft2(&x).unwrap();
            assert!(z.max_abs_diff(&naive_dft2(&x)) < 1e-9, "{shape:?}");
            assert!(ifft2(&z).max_abs_diff(&x).unwrap() < 1e-9);
        }
    }

    #[test]
    fn real_input_spectrum_is_conjugate_symmetric() {
        let z = fft2(&rand_tensor(&[6, 7, 2], 2)).unwrap();
        assert!(z.conjugate_asymmetry() < 1e-12);
    }

    #[test]
    fn polar_examples() {
        let z = ComplexTensor::new(
            [1, 2, 1],
            vec![Complex64::new(3.0, 4.0), Complex64::new(-1.0, 0.0)],
        )
        .unwrap();
        let (a, p) = amp_phase(&z);
        assert_eq!(a.data()[0], 5.0);
        assert!((p.data()[0] - 4f64.atan2(3.0)).abs() < 1e-15);
        assert!((p.data()[0] - 0.9273).abs() < 1e-4);
        assert_eq!(p.data()[1], PI);
        assert_eq!(phase_of(Complex64::new(-1.0, -0.0)), PI);
        assert_eq!(phase_of(Complex64::new(-0.0, -0.0)), 0.0);
    }

    #[test]
    fn polar_roundtrip() {
        let z = fft2(&rand_tensor(&[5, 6, 2], 9)).unwrap();
        let (a, p) = amp_phase(&z);
        assert!(from_amp_phase(&a, &p).unwrap().max_abs_diff(&z) < 1e-10);
        assert!(p.data().iter().all(|&v| v > -PI && v <= PI));
    }

    #[test]
    fn phase_swap_identity_and_involution() {
        let a = rand_tensor(&[8, 6, 1], 1);
        let b = rand_tensor(&[8, 6, 1], 2);
        let (a1, b1) = phase_swap(&a, &a).unwrap();
        assert!(a1.max_abs_diff(&a).unwrap() < 1e-12 && b1.max_abs_diff(&a).unwrap() < 1e-12);
        let (a1, b1) = phase_swap(&a, &b).unwrap();
        // swapping again restores only the phases; amplitudes stay with a', b'
        let (a2, b2) = phase_swap(&a1, &b1).unwrap();
        assert!(a2.max_abs_diff(&a).unwrap() < 1e-8);
        assert!(b2.max_abs_diff(&b).unwrap() < 1e-8);
        assert!(phase_swap(&a, &rand_tensor(&[6, 8, 1], 3)).is_err());
    }

    #[test]
    fn phase_similarity_cases() {
        let p = rand_tensor(&[3, 3, 1], 4).scale(PI);
        let s = phase_similarity(&p, &p).unwrap();
        assert!(s.data().iter().all(|&v| v == 1.0));
        let zero = Tensor::zeros(&[1, 1, 1]);
        let pi = Tensor::full(&[1, 1, 1], PI);
        assert!(phase_similarity(&pi, &zero).unwrap().data()[0].abs() < 1e-15);
        let q = rand_tensor(&[3, 3, 1], 5).scale(PI);
        let s = phase_similarity(&p, &q).unwrap();
        for ((a, b), v) in p.data().iter().zip(q.data()).zip(s.data()) {
            assert!((v - (1.0 + (a - b).cos()) / 2.0).abs() < 1e-12);
            assert!((0.0..=1.0).contains(v));
        }
        let u = phase_similarity_unit_modulus(&p, &q).unwrap();
        assert!(u.data().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn correlation_surface_score_in_unit_range() {
        let a = fft2(&rand_tensor(&[8, 8, 1], 1)).unwrap();
        let b = fft2(&rand_tensor(&[8, 8, 1], 2)).unwrap();
        let s = phase_score(PhaseScore::CorrelationSurface, &a, &b).unwrap();
        assert!(s.data().iter().all(|v| (0.0..=1.0).contains(v)));
        // identical inputs give a delta surface: 1 at the origin, 0.5 elsewhere
        let s = phase_score(PhaseScore::CorrelationSurface, &a, &a).unwrap();
        assert!((s.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phase_correlation_recovers_shifts() {
        let a = rand_tensor(&[12, 10, 1], 8);
        assert_eq!(phase_correlation_peak(&a, &a).unwrap(), (0, 0));
        for (dy, dx) in [(3, 5), (11, 0), (0, 9)] {
            let b =
                Tensor::from_fn_hwc(12, 10, 1, |i, j, _| a.at3((i + dy) % 12, (j + dx) % 10, 0));
            assert_eq!(phase_correlation_peak(&a, &b).unwrap(), (dy, dx));
        }
        let c = Tensor::full(&[12, 10, 1], 0.3);
        assert!(matches!(
            phase_correlation_peak(&a, &c),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn autocorrelation_cases() {
        let mut imp = Tensor::zeros(&[5, 4, 1]);
        imp.data_mut()[2 * 4 + 3] = 1.0;
        let r = autocorrelation(&imp).unwrap();
        assert!((r.data()[0] - 1.0).abs() < 1e-12);
        assert!(r.data()[1..].iter().all(|v| v.abs() < 1e-12));

        let r = autocorrelation(&Tensor::full(&[4, 6, 1], 0.5)).unwrap();
        assert!(r.data().iter().all(|v| (v - 0.25 * 24.0).abs() < 1e-12));

        let x = rand_tensor(&[6, 6, 2], 3);
        let r = autocorrelation(&x).unwrap();
        assert!(r.max_abs_diff(&brute_autocorr(&x)).unwrap() < 1e-8);
    }

    #[test]
    fn autocorrelation_peaks_at_row_period() {
        // period-4 rows on a 12-row map
        let x = Tensor::from_fn_hwc(12, 5, 1, |i, j, _| {
            ((i % 4) as f64 - 1.3).powi(2) + 0.01 * j as f64
        });
        let r = autocorrelation(&x).unwrap();
        let zero_lag = r.data()[0];
        let col0: Vec<f64> = (0..12).map(|t| r.at3(t, 0, 0)).collect();
        assert!(col0.iter().all(|&v| v <= zero_lag + 1e-9));
        let best = (1..12)
            .max_by(|&a, &b| col0[a].partial_cmp(&col0[b]).unwrap())
            .unwrap();
        assert!(best == 4 || best == 8);
        assert!((col0[4] - col0[8]).abs() < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn parseval_and_linearity(seed in 0u64..200, h in 1usize..9, w in 1usize..9) {
            let x = rand_tensor(&[h, w, 2], seed);
            let y = rand_tensor(&[h, w, 2], seed + 7);
            let zx = fft2(&x).unwrap();
            for k in 0..2 {
                let e_space: f64 = x.data().iter().skip(k).step_by(2).map(|v| v * v).sum();
                let e_freq: f64 = zx.data().iter().skip(k).step_by(2).map(|v| v.norm_sqr()).sum::<f64>() / (h * w) as f64;
                proptest::prop_assert!((e_space - e_freq).abs() <= 1e-8 * e_space.max(1e-300));
            }
            let zsum = fft2(&x.scale(2.0).add(&y).unwrap()).unwrap();
            let zy = fft2(&y).unwrap();
            let combo: Vec<Complex64> = zx.data().iter().zip(zy.data()).map(|(a, b)| a * 2.0 + b).collect();
            let combo = ComplexTensor::new(zx.shape(), combo).unwrap();
            proptest::prop_assert!(zsum.max_abs_diff(&combo) < 1e-10);
        }
    }
}

mod fft {
    use deflicker::random::rng;
    use deflicker::spectral::fft::*;
    use num_complex::Complex64;
    use rand::Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        v * Complex64::from_polar(1.0, -2.0 * PI * ((j * k) % n) as f64 / n as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn factorization_products() {
        for n in 1..200 {
            let f = factorize(n);
            assert_eq!(f.iter().product::<usize>().max(1), n);
        }
        assert_eq!(factorize(48), vec![4, 4, 3]);
    }

    #[test]
    fn matches_naive_dft_for_many_lengths() {
        let mut r = rng(11);
        // covers radix 2/3/4/5/7, generic primes and Bluestein (29, 31, 97, 101, 58)
        for n in [
            1, 2, 3, 4, 5, 6, 7, 8, 9, 12, 16, 23, 29, 31, 45, 58, 64, 97, 101, 128,
        ] {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
                .collect();
            let mut fast = x.clone();
            plan(n).forward_in_place(&mut fast);
            let slow = naive_dft(&x);
            let err = fast
                .iter()
                .zip(&slow)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "n = {n}: err {err}");
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let mut r = rng(3);
        for n in [10, 37, 64] {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
                .collect();
            let mut y = x.clone();
            let p = plan(n);
            p.forward_in_place(&mut y);
            p.inverse_in_place(&mut y);
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b / n as f64).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn batched_matches_per_sequence() {
        let mut r = rng(5);
        for (n, batch) in [(12, 3), (29, 2), (16, 5), (7, 1)] {
            let data: Vec<Complex64> = (0..n * batch)
                .map(|_| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
                .collect();
            let mut fast = data.clone();
            plan(n).forward_batched(&mut fast, batch);
            for lane in 0..batch {
                let seq: Vec<Complex64> = (0..n).map(|k| data[k * batch + lane]).collect();
                let want = naive_dft(&seq);
                for k in 0..n {
                    assert!((fast[k * batch + lane] - want[k]).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn plans_are_cached() {
        assert!(Arc::ptr_eq(&plan(96), &plan(96)));
    }
}
