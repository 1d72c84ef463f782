mod haar {
    use deflicker::random::rand_tensor;
    use deflicker::wavelet::*;
    use deflicker::Tensor;

    fn energy(t: &Tensor) -> f64 {
        t.data().iter().map(|v| v * v).sum()
    }

    #[test]
    fn horizontal_edge_lands_in_lh() {
        let x = Tensor::new(vec![2, 2, 1], vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let s = haar_dwt(&x).unwrap();
        assert_eq!(
            [
                s.ll.data()[0],
                s.lh.data()[0],
                s.hl.data()[0],
                s.hh.data()[0]
            ],
            [1.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn constant_image() {
        let x = Tensor::full(&[4, 6, 2], 0.3);
        let s = haar_dwt(&x).unwrap();
        assert!(s.ll.data().iter().all(|&v| (v - 0.6).abs() < 1e-15));
        for b in [&s.lh, &s.hl, &s.hh] {
            assert_eq!(b.max_abs(), 0.0);
        }
        let e = directional_energy(&s).unwrap();
        assert_eq!(e.lh, vec![0.0; 2]);
        assert_eq!(haar_idwt(&s).unwrap().max_abs_diff(&x).unwrap(), 0.0);
    }

    #[test]
    fn zero_bands_reconstruct_zero() {
        let z = Tensor::zeros(&[3, 3, 2]);
        let s = WaveletSubbands {
            ll: z.clone(),
            lh: z.clone(),
            hl: z.clone(),
            hh: z,
        };
        assert_eq!(haar_idwt(&s).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn reconstruction_and_energy() {
        let x = rand_tensor(&[8, 8, 2], 1);
        let s = haar_dwt(&x).unwrap();
        assert!(haar_idwt(&s).unwrap().max_abs_diff(&x).unwrap() < 1e-10);
        let e: f64 = s.as_array().iter().map(|b| energy(b)).sum();
        assert!((e - energy(&x)).abs() < 1e-10 * energy(&x));
    }

    #[test]
    fn stripes_select_direction() {
        let stripes = Tensor::from_fn_hwc(32, 32, 1, |i, _, _| {
            (2.0 * std::f64::consts::PI * i as f64 / 5.0).sin()
        });
        let shares = directional_energy(&haar_dwt(&stripes).unwrap())
            .unwrap()
            .high_band_shares();
        assert!(shares[0] > 0.9, "{shares:?}");
        let rotated = stripes.transpose_hw().unwrap();
        let shares = directional_energy(&haar_dwt(&rotated).unwrap())
            .unwrap()
            .high_band_shares();
        assert!(shares[1] > 0.9, "{shares:?}");
    }

    #[test]
    fn errors() {
        assert!(haar_dwt(&Tensor::zeros(&[3, 4, 1])).is_err());
        let s = WaveletSubbands {
            ll: Tensor::zeros(&[2, 2, 1]),
            lh: Tensor::zeros(&[2, 2, 1]),
            hl: Tensor::zeros(&[2, 3, 1]),
            hh: Tensor::zeros(&[2, 2, 1]),
        };
        assert!(haar_idwt(&s).is_err());
    }

    proptest::proptest! {
        #[test]
        fn transpose_swaps_lh_and_hl(seed in 0u64..300, h in 1usize..5, w in 1usize..5) {
            let x = rand_tensor(&[2 * h, 2 * w, 2], seed);
            let s = haar_dwt(&x).unwrap();
            let t = haar_dwt(&x.transpose_hw().unwrap()).unwrap();
            proptest::prop_assert_eq!(t.lh, s.hl.transpose_hw().unwrap());
            proptest::prop_assert_eq!(t.hl, s.lh.transpose_hw().unwrap());
            proptest::prop_assert_eq!(t.ll, s.ll.transpose_hw().unwrap());
        }

        #[test]
        fn dwt_is_linear(seed in 0u64..300, a in -2.0f64..2.0) {
            let x = rand_tensor(&[6, 4, 1], seed);
            let y = rand_tensor(&[6, 4, 1], seed + 1);
            let lhs = haar_dwt(&x.scale(a).add(&y).unwrap()).unwrap();
            let (sx, sy) = (haar_dwt(&x).unwrap(), haar_dwt(&y).unwrap());
            for (l, (bx, by)) in lhs.as_array().iter().zip(sx.as_array().iter().zip(sy.as_array())) {
                let r = bx.scale(a).add(by).unwrap();
                proptest::prop_assert!(l.max_abs_diff(&r).unwrap() < 1e-12);
            }
        }
    }
}
