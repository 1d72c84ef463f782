mod flops {
    use deflicker::blocks::*;

    #[test]
    fn hand_summed_64x64x32() {
        let r = flops_report(64, 64, 32, 8, 2).unwrap();
        // full grid: 4096 pixels; LL grid: 1024 pixels
        assert_eq!(r.wmha.projections, 3 * 4096 * 32 * 32);
        assert_eq!(r.wmha.projections, 12_582_912);
        assert_eq!(r.wmha.scores, 4096 * 64 * 32);
        assert_eq!(r.wmha.scores, 8_388_608);
        assert_eq!(r.wmha.weighted_sum, 8_388_608);
        assert_eq!(r.wmha.core(), 29_360_128);
        assert_eq!(r.wdam.projections, 3_145_728);
        assert_eq!(r.wdam.scores, 2_097_152);
        assert_eq!(r.wdam.core(), 7_340_032);
        assert_eq!(r.modulation, 1024 * 9 * 64);
        assert_eq!(r.modulation, 589_824);
        assert_eq!(r.wavelet, 1_048_576);
        assert_eq!(r.high_band, 1024 * 9 * 96 * 96);
        assert_eq!(r.output_projection, 4_194_304);
        assert_eq!(r.core_ratio(), 0.25);
        assert!((r.block_ratio() - (7_340_032.0 + 589_824.0) / 29_360_128.0).abs() < 1e-15);
    }

    #[test]
    fn channel_scaling() {
        let a = flops_report(32, 32, 16, 4, 2).unwrap();
        let b = flops_report(32, 32, 32, 4, 2).unwrap();
        assert_eq!(b.wmha.projections, 4 * a.wmha.projections);
        assert_eq!(b.wmha.scores, 2 * a.wmha.scores);
        assert_eq!(b.wmha.weighted_sum, 2 * a.wmha.weighted_sum);
    }

    #[test]
    fn invalid_layouts() {
        assert!(flops_report(30, 32, 8, 4, 2).is_err());
        assert!(flops_report(32, 32, 9, 4, 2).is_err());
        assert!(flops_report(24, 24, 8, 8, 1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn quarter_ratio_everywhere(gh in 1usize..6, gw in 1usize..6, m in 1usize..9, heads in 1usize..5, per_head in 1usize..17) {
            let r = flops_report(2 * gh * m, 2 * gw * m, heads * per_head, m, heads).unwrap();
            proptest::prop_assert_eq!(r.core_ratio(), 0.25);
            proptest::prop_assert_eq!(4 * r.wdam.core(), r.wmha.core());
        }
    }
}

mod attention {
    use deflicker::autodiff::{gradcheck, GradCheckOptions, Tape, Var};
    use deflicker::backend::Eager;
    use deflicker::blocks::*;
    use deflicker::params::random_params;
    use deflicker::params::Decls;
    use deflicker::params::Scope;
    use deflicker::random::{rand_tensor, rng};
    use deflicker::tensor::ConvSpec;
    use deflicker::tensor::{conv2d, sigmoid, Tensor};
    use deflicker::wavelet::{haar_dwt, haar_idwt, WaveletSubbands};
    use deflicker::Backend;
    use std::collections::BTreeMap;

    fn wdam_params(c: usize, heads: usize, m: usize, seed: u64) -> BTreeMap<String, Tensor> {
        let mut d = Decls::new();
        declare_wdam(&mut d, c, heads, m);
        random_params(d.specs(), &mut rng(seed), 0.4)
    }

    fn cv(p: &BTreeMap<String, Tensor>, name: &str, s: &ConvSpec, x: &Tensor) -> Tensor {
        conv2d(
            x,
            s,
            &p[&format!("{name}.weight")],
            p.get(&format!("{name}.bias")),
        )
        .unwrap()
    }

    /// Explicit per-window, per-head, per-query loops.
    fn naive_attention(
        q: &Tensor,
        k: &Tensor,
        v: &Tensor,
        table: &Tensor,
        m: usize,
        heads: usize,
    ) -> Tensor {
        let (h, w, c) = q.dims3().unwrap();
        let d = c / heads;
        let mut out = Tensor::zeros(&[h, w, c]);
        for wy in (0..h).step_by(m) {
            for wx in (0..w).step_by(m) {
                for hd in 0..heads {
                    for qi in 0..m * m {
                        let (qy, qx) = (wy + qi / m, wx + qi % m);
                        let mut logits = vec![0.0; m * m];
                        for (kj, l) in logits.iter_mut().enumerate() {
                            let (ky, kx) = (wy + kj / m, wx + kj % m);
                            let dot: f64 = (0..d)
                                .map(|e| q.at3(qy, qx, hd * d + e) * k.at3(ky, kx, hd * d + e))
                                .sum();
                            let rel = (qy - wy + m - 1 - (ky - wy)) * (2 * m - 1)
                                + (qx - wx + m - 1 - (kx - wx));
                            *l = dot / (d as f64).sqrt() + table.data()[rel * heads + hd];
                        }
                        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
                        for e in 0..d {
                            let mut acc = 0.0;
                            for (kj, l) in logits.iter().enumerate() {
                                let (ky, kx) = (wy + kj / m, wx + kj % m);
                                acc += (l - mx).exp() / z * v.at3(ky, kx, hd * d + e);
                            }
                            out.data_mut()[(qy * w + qx) * c + hd * d + e] = acc;
                        }
                    }
                }
            }
        }
        out
    }

    fn wdam_oracle(p: &BTreeMap<String, Tensor>, x: &Tensor, heads: usize, m: usize) -> Tensor {
        let c = x.dims3().unwrap().2;
        let s = haar_dwt(x).unwrap();
        let (slh, shl) = modulation_specs(c);
        let modulation = sigmoid(
            &cv(p, "mod_lh", &slh, &s.lh)
                .add(&cv(p, "mod_hl", &shl, &s.hl))
                .unwrap(),
        );
        let pw = ConvSpec::pointwise(c, c);
        let q = cv(p, "q", &pw, &s.ll);
        let k = cv(p, "k", &pw, &s.ll);
        let v = cv(p, "v", &pw, &s.ll).mul(&modulation).unwrap();
        let ll = naive_attention(&q, &k, &v, &p["rel_bias"], m, heads);
        let cat = deflicker::tensor::concat_channels(&[&s.lh, &s.hl, &s.hh]).unwrap();
        let high = cv(p, "high", &high_spec(c), &cat);
        let sl = |i: usize| deflicker::tensor::slice_channels(&high, i * c, c).unwrap();
        let y = haar_idwt(&WaveletSubbands {
            ll,
            lh: sl(0),
            hl: sl(1),
            hh: sl(2),
        })
        .unwrap();
        cv(p, "proj", &pw, &y)
    }

    #[test]
    fn wdam_matches_naive_loops() {
        let (c, heads, m) = (8, 2, 4);
        let p = wdam_params(c, heads, m, 1);
        let x = rand_tensor(&[16, 16, c], 2);
        let got = wdam_attention(&Eager, &Scope::root(&p), &x, heads, m).unwrap();
        let want = wdam_oracle(&p, &x, heads, m);
        assert!(got.max_abs_diff(&want).unwrap() < 1e-9);
    }

    #[test]
    fn core_matches_naive_loops() {
        let (c, heads, m) = (6, 3, 2);
        let q = rand_tensor(&[4, 6, c], 3);
        let k = rand_tensor(&[4, 6, c], 4);
        let v = rand_tensor(&[4, 6, c], 5);
        let table = rand_tensor(&[9, heads], 6);
        let got = window_attention_core(&Eager, &q, &k, &v, &table, m, heads).unwrap();
        assert!(
            got.max_abs_diff(&naive_attention(&q, &k, &v, &table, m, heads))
                .unwrap()
                < 1e-12
        );
    }

    #[test]
    fn unit_window_passes_values_through() {
        let q = rand_tensor(&[3, 3, 2], 7);
        let v = rand_tensor(&[3, 3, 2], 8);
        let table = rand_tensor(&[1, 1], 9);
        let got = window_attention_core(&Eager, &q, &q, &v, &table, 1, 1).unwrap();
        assert!(got.max_abs_diff(&v).unwrap() < 1e-15);
    }

    #[test]
    fn zero_queries_average_the_window() {
        let m = 2;
        let z = Tensor::zeros(&[4, 4, 2]);
        let v = rand_tensor(&[4, 4, 2], 10);
        let got = window_attention_core(&Eager, &z, &z, &v, &Tensor::zeros(&[9, 1]), m, 1).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let (wy, wx) = (i / m * m, j / m * m);
                let mean = (v.at3(wy, wx, 1)
                    + v.at3(wy, wx + 1, 1)
                    + v.at3(wy + 1, wx, 1)
                    + v.at3(wy + 1, wx + 1, 1))
                    / 4.0;
                assert!((got.at3(i, j, 1) - mean).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identity_attention_and_high_conv_reconstruct_input() {
        // M = 1 makes attention the identity on (modulated) values; saturate the
        // modulation to 1 and make v, high and proj identities
        let (c, m) = (2, 1);
        let mut p = wdam_params(c, 1, m, 11);
        let eye = |n: usize, k: usize| {
            let mut t = Tensor::zeros(&[n, k, k, n]);
            for i in 0..n {
                t.data_mut()[((i * k + k / 2) * k + k / 2) * n + i] = 1.0;
            }
            t
        };
        p.insert("v.weight".into(), eye(c, 1));
        p.insert("v.bias".into(), Tensor::zeros(&[c]));
        p.insert("proj.weight".into(), eye(c, 1));
        p.insert("proj.bias".into(), Tensor::zeros(&[c]));
        p.insert("high.weight".into(), eye(3 * c, 3));
        p.insert("high.bias".into(), Tensor::zeros(&[3 * c]));
        p.insert("mod_lh.weight".into(), Tensor::zeros(&[c, 3, 3, 1]));
        p.insert("mod_hl.weight".into(), Tensor::zeros(&[c, 3, 3, 1]));
        p.insert("mod_hl.bias".into(), Tensor::full(&[c], 60.0));
        let x = rand_tensor(&[6, 4, c], 12);
        let y = wdam_attention(&Eager, &Scope::root(&p), &x, 1, m).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() < 1e-9);
    }

    #[test]
    fn rejects_bad_geometry() {
        let p = wdam_params(4, 2, 4, 13);
        assert!(
            wdam_attention(&Eager, &Scope::root(&p), &Tensor::zeros(&[12, 16, 4]), 2, 4).is_err()
        );
        assert!(
            wdam_attention(&Eager, &Scope::root(&p), &Tensor::zeros(&[16, 16, 4]), 3, 4).is_err()
        );
    }

    #[test]
    fn wdam_gradients_match_finite_differences() {
        let (c, heads, m) = (4, 2, 2);
        let p = wdam_params(c, heads, m, 14);
        let x = rand_tensor(&[8, 8, c], 15);
        let target = rand_tensor(&[8, 8, c], 16);
        let names: Vec<String> = p.keys().cloned().collect();
        let named: Vec<(String, Tensor)> = p.into_iter().collect();
        let report = gradcheck(
            |t: &Tape, v: &[Var]| {
                let map: BTreeMap<String, Var> =
                    names.iter().cloned().zip(v.iter().copied()).collect();
                let xv = t.constant(x.clone());
                let y = wdam_attention(t, &Scope::root(&map), &xv, heads, m)?;
                let d = t.sub(&y, &t.constant(target.clone()))?;
                t.mean(&t.mul(&d, &d)?)
            },
            &named,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed(), "{:?}", report.worst());
    }
}

mod affn {
    use deflicker::autodiff::Tape;
    use deflicker::backend::Eager;
    use deflicker::blocks::*;
    use deflicker::params::random_params;
    use deflicker::params::Decls;
    use deflicker::params::Scope;
    use deflicker::random::{rand_tensor, rng};
    use deflicker::spectral::{autocorrelation, fft2, ifft2_real_part, ComplexTensor};
    use deflicker::tensor::ConvSpec;
    use deflicker::tensor::{conv2d, gelu, slice_channels, Tensor};
    use num_complex::Complex64;
    use std::collections::BTreeMap;

    fn params(c: usize, gamma: f64, seed: u64) -> BTreeMap<String, Tensor> {
        let mut d = Decls::new();
        declare_affn(&mut d, c, gamma);
        random_params(d.specs(), &mut rng(seed), 0.3)
    }

    fn oracle(p: &BTreeMap<String, Tensor>, x: &Tensor, gamma: f64) -> Tensor {
        let c = x.dims3().unwrap().2;
        let hid = hidden_width(c, gamma);
        let [fin, dw, proj] = affn_specs(c, hid);
        let cv = |x: &Tensor, s: &ConvSpec, n: &str| {
            conv2d(
                x,
                s,
                &p[&format!("{n}.weight")],
                Some(&p[&format!("{n}.bias")]),
            )
            .unwrap()
        };
        let f = cv(x, &fin, "fin");
        let (alpha, beta) = (p["alpha"].data()[0], p["beta"].data()[0]);
        let y = fft2(&f).unwrap();
        let shifted: Vec<Complex64> = y.data().iter().map(|z| z + alpha * z.norm_sqr()).collect();
        let spatial = ifft2_real_part(&ComplexTensor::new(y.shape(), shifted).unwrap());
        let mixed = spatial
            .add(&autocorrelation(&f).unwrap().scale(beta))
            .unwrap();
        let g = gelu(&slice_channels(&mixed, 0, hid).unwrap())
            .mul(&slice_channels(&mixed, hid, hid).unwrap())
            .unwrap();
        cv(&cv(&g, &dw, "dw"), &proj, "proj")
    }

    #[test]
    fn width_rounds_up() {
        assert_eq!(hidden_width(32, 2.66), 86);
        assert_eq!(hidden_width(8, 2.66), 22);
        assert_eq!(hidden_width(10, 2.0), 20);
    }

    #[test]
    fn matches_composition_oracle() {
        let p = params(3, 2.66, 1);
        let x = rand_tensor(&[6, 8, 3], 2);
        let got = affn_forward(&Eager, &Scope::root(&p), &x, 2.66).unwrap();
        assert!(got.max_abs_diff(&oracle(&p, &x, 2.66)).unwrap() < 1e-9);
    }

    #[test]
    fn zero_mixing_is_plain_gated_ffn() {
        let mut p = params(2, 2.0, 3);
        p.insert("alpha".into(), Tensor::zeros(&[1]));
        p.insert("beta".into(), Tensor::zeros(&[1]));
        let x = rand_tensor(&[4, 4, 2], 4);
        let [fin, dw, proj] = affn_specs(2, 4);
        let f = conv2d(&x, &fin, &p["fin.weight"], Some(&p["fin.bias"])).unwrap();
        let g = gelu(&slice_channels(&f, 0, 4).unwrap())
            .mul(&slice_channels(&f, 4, 4).unwrap())
            .unwrap();
        let y = conv2d(&g, &dw, &p["dw.weight"], Some(&p["dw.bias"])).unwrap();
        let want = conv2d(&y, &proj, &p["proj.weight"], Some(&p["proj.bias"])).unwrap();
        let got = affn_forward(&Eager, &Scope::root(&p), &x, 2.0).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero_output_without_biases() {
        let mut p = params(2, 2.66, 5);
        for n in ["fin", "dw", "proj"] {
            let key = format!("{n}.bias");
            let shape = p[&key].shape().to_vec();
            p.insert(key, Tensor::zeros(&shape));
        }
        let out = affn_forward(&Eager, &Scope::root(&p), &Tensor::zeros(&[4, 4, 2]), 2.66).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn finite_for_large_inputs() {
        let mut p = params(2, 2.66, 6);
        p.insert("alpha".into(), Tensor::scalar(1.0));
        p.insert("beta".into(), Tensor::scalar(1.0));
        let x = rand_tensor(&[8, 8, 2], 7).scale(1e3);
        assert!(affn_forward(&Eager, &Scope::root(&p), &x, 2.66)
            .unwrap()
            .is_finite());
    }

    #[test]
    fn traced_forward_is_bit_identical() {
        let p = params(3, 2.66, 8);
        let x = rand_tensor(&[4, 4, 3], 9);
        let eager = affn_forward(&Eager, &Scope::root(&p), &x, 2.66).unwrap();
        let tape = Tape::new();
        let vars: BTreeMap<String, _> = p
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
            .collect();
        let xv = tape.constant(x);
        let out = affn_forward(&tape, &Scope::root(&vars), &xv, 2.66).unwrap();
        assert_eq!(*tape.value(out), eager);
    }
}

mod transformer {
    use deflicker::backend::Eager;
    use deflicker::blocks::*;
    use deflicker::params::random_params;
    use deflicker::params::Decls;
    use deflicker::params::Scope;
    use deflicker::random::{rand_tensor, rng};
    use deflicker::tensor::{layer_norm, Tensor};
    use std::collections::BTreeMap;

    fn params(kind: AttentionKind, seed: u64) -> BTreeMap<String, Tensor> {
        let mut d = Decls::new();
        declare_transformer_block(&mut d, kind, 4, 2, 2, 2.66);
        random_params(d.specs(), &mut rng(seed), 0.3)
    }

    #[test]
    fn zero_output_projections_make_identity() {
        for kind in [AttentionKind::Window, AttentionKind::Wavelet] {
            let mut p = params(kind, 1);
            for key in [
                "attn.proj.weight",
                "attn.proj.bias",
                "ffn.proj.weight",
                "ffn.proj.bias",
            ] {
                let shape = p[key].shape().to_vec();
                p.insert(key.into(), Tensor::zeros(&shape));
            }
            let x = rand_tensor(&[8, 8, 4], 2);
            let y = transformer_block(&Eager, &Scope::root(&p), &x, kind, 2, 2, 2.66).unwrap();
            assert_eq!(y, x);
        }
    }

    #[test]
    fn constant_channels_normalize_to_zero() {
        let x = Tensor::from_fn_hwc(2, 2, 4, |i, j, _| (i + j) as f64);
        let y = layer_norm(&x, &Tensor::full(&[4], 1.0), &Tensor::zeros(&[4])).unwrap();
        assert_eq!(y.max_abs(), 0.0);
    }

    #[test]
    fn matches_manual_composition() {
        for kind in [AttentionKind::Window, AttentionKind::Wavelet] {
            let p = params(kind, 3);
            let x = rand_tensor(&[8, 8, 4], 4);
            let s = Scope::root(&p);
            let n1 = layer_norm(&x, &p["norm1.weight"], &p["norm1.bias"]).unwrap();
            let attn = match kind {
                AttentionKind::Window => window_attention(&Eager, &s.at("attn"), &n1, 2, 2),
                AttentionKind::Wavelet => wdam_attention(&Eager, &s.at("attn"), &n1, 2, 2),
            }
            .unwrap();
            let y = x.add(&attn).unwrap();
            let n2 = layer_norm(&y, &p["norm2.weight"], &p["norm2.bias"]).unwrap();
            let want = y
                .add(&affn_forward(&Eager, &s.at("ffn"), &n2, 2.66).unwrap())
                .unwrap();
            let got = transformer_block(&Eager, &s, &x, kind, 2, 2, 2.66).unwrap();
            assert_eq!(got, want);
        }
    }
}

mod pfm {
    use deflicker::autodiff::Tape;
    use deflicker::backend::Eager;
    use deflicker::blocks::*;
    use deflicker::params::random_params;
    use deflicker::params::Decls;
    use deflicker::params::Scope;
    use deflicker::random::{rand_tensor, rng};
    use deflicker::spectral::{fft2, ifft2, ComplexTensor};
    use deflicker::tensor::{concat_channels, conv2d, relu, sigmoid};
    use deflicker::Tensor;
    use std::collections::BTreeMap;

    fn params(c: usize, seed: u64) -> BTreeMap<String, Tensor> {
        let mut d = Decls::new();
        declare_pfm(&mut d, c);
        random_params(d.specs(), &mut rng(seed), 0.3)
    }

    /// Step-by-step evaluation on complex spectra with explicit index loops.
    fn oracle(p: &BTreeMap<String, Tensor>, x: [&Tensor; 3]) -> Tensor {
        let (h, w, c) = x[0].dims3().unwrap();
        let z1 = fft2(x[1]).unwrap();
        let mut out = Vec::new();
        for (t, gate) in [(0, "gate0"), (2, "gate2")] {
            let zt = fft2(x[t]).unwrap();
            let s = Tensor::from_fn_hwc(h, w, c, |i, j, k| {
                let idx = (i * w + j) * c + k;
                let d = zt.data()[idx].arg() - z1.data()[idx].arg();
                (1.0 + d.cos()) / 2.0
            });
            let wt = sigmoid(
                &conv2d(
                    &s,
                    &gate_spec(c),
                    &p[&format!("{gate}.weight")],
                    Some(&p[&format!("{gate}.bias")]),
                )
                .unwrap(),
            );
            let mut z = zt.clone();
            for i in 0..h {
                for j in 0..w {
                    for k in 0..c {
                        let sym = 0.5 * (wt.at3(i, j, k) + wt.at3((h - i) % h, (w - j) % w, k));
                        z.data_mut()[(i * w + j) * c + k] *= sym;
                    }
                }
            }
            out.push(ifft2(&z));
        }
        let cat = concat_channels(&[&out[0], x[1], &out[1]]).unwrap();
        relu(
            &conv2d(
                &cat,
                &fusion_spec(c),
                &p["fusion.weight"],
                Some(&p["fusion.bias"]),
            )
            .unwrap(),
        )
    }

    #[test]
    fn matches_composition_oracle() {
        let p = params(3, 1);
        let x: Vec<Tensor> = (0..3).map(|s| rand_tensor(&[8, 6, 3], 10 + s)).collect();
        let got = pfm_fuse(&Eager, &Scope::root(&p), &x[0], &x[1], &x[2]).unwrap();
        let want = oracle(&p, [&x[0], &x[1], &x[2]]);
        assert!(got.max_abs_diff(&want).unwrap() < 1e-9);
    }

    #[test]
    fn zero_gate_halves_neighbours() {
        let c = 2;
        let mut p = params(c, 2);
        for g in ["gate0", "gate2"] {
            p.insert(
                format!("{g}.weight"),
                Tensor::zeros(&gate_spec(c).weight_shape()),
            );
            p.insert(format!("{g}.bias"), Tensor::zeros(&[c]));
        }
        // fusion conv picks the first `c` channels (the filtered X0) through a centre tap
        let mut fw = Tensor::zeros(&fusion_spec(c).weight_shape());
        for k in 0..c {
            fw.data_mut()[((k * 3 + 1) * 3 + 1) * 3 * c + k] = 1.0;
        }
        p.insert("fusion.weight".into(), fw);
        p.insert("fusion.bias".into(), Tensor::zeros(&[c]));
        let x0 = rand_tensor(&[6, 6, c], 3).map(|v| v.abs());
        let x1 = rand_tensor(&[6, 6, c], 4);
        let out = pfm_fuse(&Eager, &Scope::root(&p), &x0, &x1, &x1).unwrap();
        assert!(out.max_abs_diff(&x0.scale(0.5)).unwrap() < 1e-12);
    }

    #[test]
    fn identical_frames_have_unit_similarity() {
        let x = rand_tensor(&[8, 8, 2], 5);
        for s in pfm_similarity_maps(&x, &x, &x).unwrap() {
            assert!(s.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn similarity_is_invariant_to_positive_scaling() {
        let x: Vec<Tensor> = (0..3).map(|s| rand_tensor(&[8, 8, 2], 20 + s)).collect();
        let a = pfm_similarity_maps(&x[0], &x[1], &x[2]).unwrap();
        let scaled: Vec<Tensor> = x.iter().map(|t| t.scale(3.7)).collect();
        let b = pfm_similarity_maps(&scaled[0], &scaled[1], &scaled[2]).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!(u.max_abs_diff(v).unwrap() < 1e-9);
        }
    }

    #[test]
    fn traced_forward_is_bit_identical() {
        let p = params(2, 6);
        let x: Vec<Tensor> = (0..3).map(|s| rand_tensor(&[8, 8, 2], 30 + s)).collect();
        let eager = pfm_fuse(&Eager, &Scope::root(&p), &x[0], &x[1], &x[2]).unwrap();
        let tape = Tape::new();
        let vars: BTreeMap<String, _> = p
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
            .collect();
        let xv: Vec<_> = x.iter().map(|t| tape.constant(t.clone())).collect();
        let out = pfm_fuse(&tape, &Scope::root(&vars), &xv[0], &xv[1], &xv[2]).unwrap();
        assert_eq!(*tape.value(out), eager);
    }

    #[test]
    fn filtered_neighbour_is_real() {
        // a random (asymmetric) gate would leave an imaginary residue without symmetrization
        let x = rand_tensor(&[6, 5, 1], 9);
        let z = fft2(&x).unwrap();
        let g = rand_tensor(&[6, 5, 1], 10).map(|v| v.abs());
        let w = deflicker::backend::symmetrize_spectrum(&g).unwrap();
        let filtered = ComplexTensor::new(
            z.shape(),
            z.data().iter().zip(w.data()).map(|(a, b)| a * b).collect(),
        )
        .unwrap();
        assert!(filtered.conjugate_asymmetry() < 1e-12);
    }
}
