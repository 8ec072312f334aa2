use super::*;
use proptest::prelude::*;
use rand::Rng;

fn random_cube(h: usize, w: usize, b: usize, seed: u64) -> HsiCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    HsiCube::from_fn(h, w, b, |_, _, _| rng.gen()).unwrap()
}

#[test]
fn kernel_is_the_sampled_normalized_gaussian() {
    let k = gaussian_kernel(3, 0.5).unwrap();
    assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // exp(−d²/(2·0.25)) at d² = 0, 1, 2
    let (c, e, d) = (1.0, (-2.0f64).exp(), (-4.0f64).exp());
    let total = c + 4.0 * e + 4.0 * d;
    let expect = [d, e, d, e, c, e, d, e, d].map(|v| v / total);
    for (a, b) in k.iter().zip(expect) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(gaussian_kernel(4, 0.5).is_err());
    assert!(gaussian_kernel(3, 0.0).is_err());
}

#[test]
fn blur_cases() {
    let c = HsiCube::filled(5, 4, 3, 0.42).unwrap();
    let b = gaussian_blur(&c, 3, 0.5).unwrap();
    assert!(b.data().iter().all(|v| (v - 0.42).abs() < 1e-15));

    let imp = HsiCube::from_fn(5, 5, 1, |i, j, _| if (i, j) == (2, 2) { 1.0 } else { 0.0 }).unwrap();
    let out = gaussian_blur(&imp, 3, 0.5).unwrap();
    let k = gaussian_kernel(3, 0.5).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let expect = if (1..4).contains(&i) && (1..4).contains(&j) { k[(i - 1) * 3 + j - 1] } else { 0.0 };
            assert!((out.get(i, j, 0) - expect).abs() < 1e-15);
        }
    }

    let x = random_cube(6, 7, 2, 1);
    let sharp = gaussian_blur(&x, 3, 1e-6).unwrap();
    for (a, b) in sharp.data().iter().zip(x.data()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(gaussian_blur(&x, 2, 0.5).is_err());
}

#[test]
fn blur_preserves_the_mean_of_a_periodic_extension() {
    // a cube symmetric about its edge rows/columns is a reflect-101 extension
    // of itself, so the band mean over the fundamental period is preserved
    let base = random_cube(4, 4, 2, 2);
    let n = 7;
    let fold = |i: usize| if i < 4 { i } else { 6 - i };
    let cube = HsiCube::from_fn(n, n, 2, |i, j, b| base.get(fold(i), fold(j), b)).unwrap();
    let blurred = gaussian_blur(&cube, 3, 0.5).unwrap();
    let weight = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    for b in 0..2 {
        let mean = |c: &HsiCube| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += weight(i) * weight(j) * c.get(i, j, b);
                }
            }
            s
        };
        assert!((mean(&cube) - mean(&blurred)).abs() < 1e-9);
    }
}

#[test]
fn downsample_cases() {
    let c = HsiCube::filled(8, 8, 2, 0.3).unwrap();
    let d = downsample(&c, 4, DownsampleMode::Decimate).unwrap();
    assert_eq!(d.shape(), (2, 2, 2));
    assert!(d.data().iter().all(|&v| v == 0.3));
    assert_eq!(downsample(&HsiCube::filled(64, 64, 1, 0.0).unwrap(), 4, DownsampleMode::Decimate).unwrap().shape(), (16, 16, 1));

    let ar = HsiCube::from_fn(8, 12, 2, |i, j, b| ((i * 12 + j) * 2 + b) as f64).unwrap();
    let d = downsample(&ar, 4, DownsampleMode::Decimate).unwrap();
    for i in 0..2 {
        for j in 0..3 {
            for b in 0..2 {
                assert_eq!(d.get(i, j, b), ((i * 4 * 12 + j * 4) * 2 + b) as f64);
            }
        }
    }
    let m = downsample(&ar, 2, DownsampleMode::BlockMean).unwrap();
    // a block mean of an affine ramp is its value at the block centre
    assert_eq!(m.get(1, 2, 1), ((2.5 * 12.0 + 4.5) * 2.0 + 1.0));

    let err = downsample(&HsiCube::filled(63, 63, 1, 0.0).unwrap(), 4, DownsampleMode::Decimate).unwrap_err();
    assert!(matches!(err, Error::NotDivisible { extent: 63, factor: 4, .. }));
}

#[test]
fn srf_cases() {
    let x = random_cube(3, 3, 5, 3);
    let sel = apply_srf(&x, &SpectralResponse::one_hot(5, &[4, 0]).unwrap()).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(sel.pixel(i, j), &[x.get(i, j, 4), x.get(i, j, 0)]);
        }
    }

    let srf = SpectralResponse::synthetic_rgb_even(31).unwrap();
    for o in 0..3 {
        let s: f64 = (0..31).map(|b| srf.get(b, o)).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
    let c = apply_srf(&HsiCube::filled(2, 2, 31, 0.6).unwrap(), &srf).unwrap();
    assert!(c.data().iter().all(|v| (v - 0.6).abs() < 1e-12));

    let x = random_cube(4, 4, 31, 4);
    let y = apply_srf(&x, &srf).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            for o in 0..3 {
                let dot: f64 = (0..31).map(|b| x.get(i, j, b) * srf.get(b, o)).sum();
                assert!((y.get(i, j, o) - dot).abs() < 1e-14);
            }
        }
    }
    assert!(y.range_violation() < 1e-12);
    assert!(apply_srf(&random_cube(2, 2, 8, 0), &srf).is_err());
}

#[test]
fn srf_triangles_peak_where_expected() {
    let srf = SpectralResponse::synthetic_rgb_even(31).unwrap();
    // 31 bands over 400–700 nm are 10 nm apart: peaks at bands 5, 15, 25
    for (o, peak) in [5, 15, 25].into_iter().enumerate() {
        let best = (0..31).max_by(|&a, &b| srf.get(a, o).total_cmp(&srf.get(b, o))).unwrap();
        assert_eq!(best, peak);
        assert_eq!(srf.get(peak - 5, o), 0.5 * srf.get(peak, o));
        if peak + 10 < 31 {
            assert_eq!(srf.get(peak + 10, o), 0.0);
        }
    }
    let tiny = SpectralResponse::synthetic_rgb_even(1).unwrap();
    assert!((0..3).all(|o| tiny.get(0, o) == 1.0));
}

#[test]
fn srf_table_parsing() {
    let srf = parse_srf("# camera\nR, G\n1 0\n1, 3\n\n2 1  # tail\n").unwrap();
    assert_eq!(srf.names(), &["R".to_string(), "G".to_string()]);
    assert_eq!((srf.bands_in(), srf.bands_out()), (3, 2));
    assert_eq!(srf.get(0, 0), 0.25);
    assert_eq!(srf.get(1, 1), 0.75);
    for bad in ["", "R G\n", "R G\n1\n", "R G\n1 -1\n", "R G\n1 x\n", "R G\n1 0\n2 0\n"] {
        assert!(matches!(parse_srf(bad), Err(Error::BadSrf(_))), "{bad:?}");
    }
}

#[test]
fn patch_counts_and_contents() {
    let c = random_cube(64, 64, 2, 5);
    let one = extract_patches(&c, 64, 16).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0], c);

    let big = random_cube(128, 128, 1, 6);
    assert_eq!(extract_patches(&big, 64, 64).unwrap().len(), 4);
    let ps = extract_patches(&big, 64, 32).unwrap();
    assert_eq!(ps.len(), 9);
    for (k, p) in ps.iter().enumerate() {
        let (top, left) = (k / 3 * 32, k % 3 * 32);
        for i in [0, 31, 63] {
            for j in [0, 17, 63] {
                assert_eq!(p.get(i, j, 0), big.get(top + i, left + j, 0));
            }
        }
    }
    // neighbouring patches overlap by half
    assert_eq!(ps[0].get(0, 32, 0), ps[1].get(0, 0, 0));
    assert!(extract_patches(&c, 65, 1).is_err());
    assert!(extract_patches(&c, 8, 0).is_err());
}

#[test]
fn simulation_contract() {
    let gt = synthetic_cube(64, 64, 31, 1).unwrap();
    let srf = SpectralResponse::synthetic_rgb_even(31).unwrap();
    let (lr, msi) = simulate_pair(&gt, &srf, 4).unwrap();
    assert_eq!(lr.shape(), (16, 16, 31));
    assert_eq!(msi.shape(), (64, 64, 3));
    let manual = downsample(&gaussian_blur(&gt, 3, 0.5).unwrap(), 4, DownsampleMode::Decimate).unwrap();
    assert_eq!(lr, manual);
    assert_eq!(msi, apply_srf(&gt, &srf).unwrap());
    assert_eq!(simulate_pair(&gt, &srf, 4).unwrap(), (lr, msi));

    let c = HsiCube::filled(8, 8, 31, 0.5).unwrap();
    let (lr, msi) = simulate_pair(&c, &srf, 4).unwrap();
    assert!(lr.data().iter().chain(msi.data()).all(|v| (v - 0.5).abs() < 1e-12));
}

#[test]
fn synthetic_scene_is_in_range_and_seeded() {
    let a = synthetic_cube(16, 12, 8, 3).unwrap();
    assert_eq!(a.range_violation(), 0.0);
    assert_eq!(a, synthetic_cube(16, 12, 8, 3).unwrap());
    assert_ne!(a, synthetic_cube(16, 12, 8, 4).unwrap());
    assert_eq!(a.wavelengths().unwrap().len(), 8);
}

#[test]
fn split_is_seeded_and_complete() {
    let (train, test) = train_test_split(10, 0.8, 7).unwrap();
    assert_eq!((train.len(), test.len()), (8, 2));
    let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
    all.sort();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
    assert_eq!(train_test_split(10, 0.8, 7).unwrap(), (train, test));
    assert_eq!(train_test_split(1, 0.8, 0).unwrap(), (vec![0], vec![]));
    assert!(train_test_split(3, 1.5, 0).is_err());
}

#[test]
fn cube_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.cube");
    let c = random_cube(3, 2, 4, 8).with_wavelengths(vec![400.0, 500.0, 600.0, 700.0]).unwrap();
    save_cube(&c, &path).unwrap();
    let back = load_cube(&path).unwrap();
    assert_eq!(back, c);
    assert_eq!(encode_cube(&back), encode_cube(&c));

    let tiny = HsiCube::filled(1, 1, 1, f64::MIN_POSITIVE).unwrap();
    assert_eq!(decode_cube(&encode_cube(&tiny)).unwrap(), tiny);
    assert!(matches!(load_cube(&dir.path().join("missing")), Err(Error::Io { .. })));
}

#[test]
fn cube_decode_errors_are_distinct() {
    let bytes = encode_cube(&random_cube(2, 2, 2, 9));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_cube(&bad), Err(Error::BadMagic { .. })));
    assert!(matches!(decode_cube(&bytes[..4]), Err(Error::BadMagic { .. })));
    let mut v2 = bytes.clone();
    v2[8] = 2;
    assert!(matches!(decode_cube(&v2), Err(Error::UnsupportedVersion { found: 2, .. })));
    assert!(matches!(decode_cube(&bytes[..bytes.len() - 3]), Err(Error::Truncated { .. })));
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(decode_cube(&long), Err(Error::Corrupt { .. })));
}

proptest! {
    #[test]
    fn cube_round_trip_any_extent(h in 1usize..6, w in 1usize..6, b in 1usize..5, seed in any::<u64>()) {
        let c = random_cube(h, w, b, seed);
        prop_assert_eq!(decode_cube(&encode_cube(&c)).unwrap(), c);
    }

    #[test]
    fn blur_stays_in_range(seed in any::<u64>(), h in 1usize..7, w in 1usize..7) {
        let c = random_cube(h, w, 2, seed);
        prop_assert!(gaussian_blur(&c, 3, 0.5).unwrap().range_violation() <= 1e-12);
    }
}

#[test]
fn pgm_header_and_clamping() {
    let cube = HsiCube::new(1, 3, 2, vec![-0.5, 0.0, 0.5, 0.2, 2.0, 1.0]).unwrap();
    let pgm = encode_pgm(&cube, 0).unwrap();
    let header = b"P5\n3 1\n255\n";
    assert_eq!(&pgm[..header.len()], header);
    assert_eq!(&pgm[header.len()..], &[0, 128, 255]);
    assert!(encode_pgm(&cube, 2).is_err());
}
