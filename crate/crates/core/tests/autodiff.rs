mod gradcheck {
    use deflicker::autodiff::Tape;
    use deflicker::autodiff::*;
    use deflicker::backend::Backend;
    use deflicker::random::rand_tensor;

    #[test]
    fn relative_error_floor() {
        assert_eq!(rel_error(0.0, 0.0), 0.0);
        assert!((rel_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert!((rel_error(1e-12, 0.0) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn quadratic_is_exact() {
        let x = rand_tensor(&[3, 3, 2], 5);
        let report = gradcheck(
            |t: &Tape, v: &[Var]| {
                let sq = t.mul(&v[0], &v[0])?;
                t.sum(&sq)
            },
            &[("x".into(), x)],
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error() < 1e-9, "{report:?}");
        assert_eq!(report.params[0].coords, 18);
        assert!(report.passed());
    }

    #[test]
    fn subsamples_large_parameters() {
        let x = rand_tensor(&[20, 20, 1], 1);
        let opts = GradCheckOptions {
            max_coords: 7,
            ..Default::default()
        };
        let report = gradcheck(
            |t: &Tape, v: &[Var]| t.sum(&v[0]),
            &[("x".into(), x)],
            &opts,
        )
        .unwrap();
        assert_eq!(report.params[0].coords, 7);
    }

    #[test]
    fn detects_a_wrong_rule() {
        // a deliberately broken backward (factor 3 instead of 2)
        let x = rand_tensor(&[4], 2);
        let report = gradcheck(
            |t: &Tape, v: &[Var]| {
                let y = t.record1(
                    "bad_square",
                    &[v[0]],
                    |a| a[0].mul(a[0]),
                    Box::new(|c| Ok(vec![Some(c.grad(0).mul(c.inputs[0])?.scale(3.0))])),
                )?;
                t.sum(&y)
            },
            &[("x".into(), x)],
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(!report.passed());
        assert!((report.max_rel_error() - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_scalar() {
        let x = rand_tensor(&[2, 2, 1], 2);
        let err = gradcheck(
            |t: &Tape, v: &[Var]| t.relu(&v[0]),
            &[("x".into(), x)],
            &GradCheckOptions::default(),
        );
        assert!(err.is_err());
    }
}

mod registry {
    use deflicker::autodiff::registry::*;

    #[test]
    fn every_op_passes() {
        for c in check_all(7).unwrap() {
            assert!(
                c.grad_rel_error < 1e-4,
                "{}: grad {}",
                c.name,
                c.grad_rel_error
            );
            if let Some(e) = c.adjoint_error {
                assert!(e < 1e-9, "{}: adjoint {e}", c.name);
            }
        }
    }

    #[test]
    fn names_are_unique() {
        let names: std::collections::BTreeSet<_> = registry().iter().map(|o| o.name).collect();
        assert_eq!(names.len(), registry().len());
    }
}

mod params {
    use deflicker::params::Scope;
    use deflicker::params::*;
    use deflicker::random::rng;
    use deflicker::tensor::ConvSpec;

    #[test]
    fn nested_names_and_init() {
        let mut d = Decls::new();
        d.scope("enc0", |d| {
            d.conv("q", &ConvSpec::pointwise(4, 4));
            d.param("alpha", vec![1], Init::Zeros);
        });
        d.param("norm", vec![3], Init::Ones);
        let names: Vec<_> = d.specs().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            ["enc0.q.weight", "enc0.q.bias", "enc0.alpha", "norm"]
        );
        let store = init_params(d.specs(), &mut rng(0));
        assert!(store["enc0.q.weight"].max_abs() <= 0.5);
        assert_eq!(store["enc0.alpha"].data(), [0.0]);
        assert_eq!(store["norm"].data(), [1.0; 3]);
        let s = Scope::root(&store).at("enc0");
        assert!(s.get("q.weight").is_ok());
        assert!(s.at("q").get("missing").is_err());
    }
}
