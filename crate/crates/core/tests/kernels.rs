use claret_core::kernels::{conv2d_same, matmul, maxpool2, softmax_rows};
use claret_core::{DType, Fill, Tensor};
use proptest::prelude::*;

fn t(dims: &[usize], v: &[f64]) -> Tensor {
    Tensor::create(dims, Fill::Values(v), DType::Double).unwrap()
}

/// Direct summation over the zero-padded receptive field.
fn naive_conv(x: &[f64], xd: [usize; 4], k: &[f64], kd: [usize; 4], b: &[f64], stride: usize) -> (Vec<f64>, [usize; 4]) {
    let [n, h, w, ci] = xd;
    let [kh, kw, _, co] = kd;
    let oh = h.div_ceil(stride);
    let ow = w.div_ceil(stride);
    let pad = |inp: usize, out: usize, k: usize| (((out - 1) * stride + k).saturating_sub(inp)) / 2;
    let (pt, pl) = (pad(h, oh, kh) as isize, pad(w, ow, kw) as isize);
    let mut out = vec![0.0; n * oh * ow * co];
    for s in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for c in 0..co {
                    let mut acc = b[c];
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let y = (oy * stride) as isize + dy as isize - pt;
                            let xx = (ox * stride) as isize + dx as isize - pl;
                            if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                continue;
                            }
                            for i in 0..ci {
                                acc += x[((s * h + y as usize) * w + xx as usize) * ci + i]
                                    * k[((dy * kw + dx) * ci + i) * co + c];
                            }
                        }
                    }
                    out[((s * oh + oy) * ow + ox) * co + c] = acc;
                }
            }
        }
    }
    (out, [n, oh, ow, co])
}

prop_compose! {
    fn conv_case()(n in 1usize..3, h in 1usize..7, w in 1usize..7, ci in 1usize..4, co in 1usize..4,
                   kh in 1usize..4, kw in 1usize..4, stride in 1usize..3)
                  (x in prop::collection::vec(-2.0f64..2.0, n * h * w * ci),
                   k in prop::collection::vec(-2.0f64..2.0, kh * kw * ci * co),
                   b in prop::collection::vec(-1.0f64..1.0, co),
                   n in Just(n), h in Just(h), w in Just(w), ci in Just(ci), co in Just(co),
                   kh in Just(kh), kw in Just(kw), stride in Just(stride))
                  -> (Vec<f64>, [usize; 4], Vec<f64>, [usize; 4], Vec<f64>, usize) {
        (x, [n, h, w, ci], k, [kh, kw, ci, co], b, stride)
    }
}

proptest! {
    #[test]
    fn conv_matches_direct_summation((x, xd, k, kd, b, stride) in conv_case()) {
        let got = conv2d_same(&t(&xd, &x), &t(&kd, &k), &t(&[kd[3]], &b), stride).unwrap();
        let (want, wd) = naive_conv(&x, xd, &k, kd, &b, stride);
        prop_assert_eq!(got.dims(), &wd[..]);
        for (g, w) in got.to_f64_vec().iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-12, "{} vs {}", g, w);
        }
    }

    #[test]
    fn stride_one_preserves_extent(h in 1usize..12, w in 1usize..12, k in 1usize..6) {
        let x = Tensor::zeros(&[1, h, w, 2], DType::Double).unwrap();
        let kern = Tensor::zeros(&[k, k, 2, 3], DType::Double).unwrap();
        let b = Tensor::zeros(&[3], DType::Double).unwrap();
        let y = conv2d_same(&x, &kern, &b, 1).unwrap();
        prop_assert_eq!(y.dims(), &[1, h, w, 3]);
    }

    #[test]
    fn softmax_rows_normalized_and_shift_invariant(
        rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 1..6),
        shift in -100.0f64..100.0,
    ) {
        let n = rows.len();
        let flat: Vec<f64> = rows.concat();
        let shifted: Vec<f64> = flat.iter().map(|v| v + shift).collect();
        let p = softmax_rows(&t(&[n, 4], &flat)).unwrap().to_f64_vec();
        let q = softmax_rows(&t(&[n, 4], &shifted)).unwrap().to_f64_vec();
        for row in p.chunks(4) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_matches_triple_loop(m in 1usize..5, k in 1usize..5, n in 1usize..5, seed in any::<u64>()) {
        let gen = |len: usize, salt: u64| -> Vec<f64> {
            (0..len).map(|i| (((i as u64 + salt) * 2654435761 ^ seed) % 1000) as f64 / 250.0 - 2.0).collect()
        };
        let (a, b) = (gen(m * k, 1), gen(k * n, 7));
        let got = matmul(&t(&[m, k], &a), &t(&[k, n], &b)).unwrap().to_f64_vec();
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|s| a[i * k + s] * b[s * n + j]).sum();
                prop_assert!((got[i * n + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_pool_halves(c in -5.0f64..5.0, h in 2usize..9, w in 2usize..9) {
        let x = Tensor::create(&[1, h, w, 2], Fill::Scalar(c), DType::Double).unwrap();
        let p = maxpool2(&x).unwrap().output;
        prop_assert_eq!(p.dims(), &[1, h / 2, w / 2, 2]);
        prop_assert!(p.to_f64_vec().iter().all(|&v| v == c));
    }
}

#[test]
fn spec_shapes() {
    let x = Tensor::zeros(&[1, 8, 8, 3], DType::Single).unwrap();
    let k = Tensor::zeros(&[3, 3, 3, 16], DType::Single).unwrap();
    let b = Tensor::zeros(&[16], DType::Single).unwrap();
    assert_eq!(conv2d_same(&x, &k, &b, 1).unwrap().dims(), &[1, 8, 8, 16]);
}
