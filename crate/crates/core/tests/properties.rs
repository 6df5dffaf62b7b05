//! Cross-module property tests: codec round trips, entropy invariants,
//! and sampling-regime containment.

use entroscan::entropy::{
    intensity_histogram, rank_slices, select_samples, shannon_entropy, SampleSpec, SampleStrategy,
};
use entroscan::learner::softmax;
use entroscan::volume::{
    extract_slices, load_volume_bytes, write_volume, Axis, DataType, Slice, Volume,
    DEFAULT_VOX_OFFSET,
};
use proptest::prelude::*;

/// Swap every multi-byte field of a little-endian NIfTI-1 stream,
/// producing the big-endian encoding of the same volume. Independent of
/// the parser: offsets come straight from the format layout.
fn byte_swap_stream(bytes: &[u8], elem_size: usize) -> Vec<u8> {
    let mut out = bytes.to_vec();
    for at in [0usize, 32, 56, 60, 64, 108, 112, 116, 124, 128, 132, 136, 140, 144] {
        out[at..at + 4].reverse();
    }
    for i in 0..8 {
        let at = 76 + 4 * i;
        out[at..at + 4].reverse();
    }
    for i in 0..18 {
        let at = 256 + 4 * i;
        out[at..at + 4].reverse();
    }
    for at in [36usize, 68, 70, 72, 74, 120, 252, 254] {
        out[at..at + 2].reverse();
    }
    for i in 0..8 {
        let at = 40 + 2 * i;
        out[at..at + 2].reverse();
    }
    if elem_size > 1 {
        let mut at = DEFAULT_VOX_OFFSET;
        while at + elem_size <= out.len() {
            out[at..at + elem_size].reverse();
            at += elem_size;
        }
    }
    out
}

fn arb_datatype() -> impl Strategy<Value = DataType> {
    prop_oneof![
        Just(DataType::Uint8),
        Just(DataType::Int16),
        Just(DataType::Int32),
        Just(DataType::Float32),
        Just(DataType::Float64),
    ]
}

/// A volume whose values are representable in every supported datatype:
/// integers in [0, 200].
fn arb_volume() -> impl Strategy<Value = Volume> {
    (2usize..7, 2usize..7, 2usize..6).prop_flat_map(|(nx, ny, nz)| {
        proptest::collection::vec(0u8..=200, nx * ny * nz).prop_map(move |raw| {
            let data = raw.iter().map(|&v| v as f64).collect();
            Volume::new(data, (nx, ny, nz), (1.0, 1.0, 1.0), "prop").unwrap()
        })
    })
}

proptest! {
    #[test]
    fn volume_round_trips_through_every_datatype(v in arb_volume(), dt in arb_datatype()) {
        let bytes = write_volume(&v, dt);
        let native = load_volume_bytes(&bytes, "prop").unwrap();
        prop_assert_eq!(native.extents(), v.extents());
        for (a, b) in native.data().iter().zip(v.data()) {
            let tol = b.abs().max(1.0) * 1e-6;
            prop_assert!((a - b).abs() <= tol);
        }

        // Byte-swapped stream decodes identically under big-endian.
        let swapped = byte_swap_stream(&bytes, dt.byte_size());
        let big = load_volume_bytes(&swapped, "prop").unwrap();
        prop_assert_eq!(big.extents(), v.extents());
        prop_assert_eq!(big.data(), native.data());
    }

    #[test]
    fn slices_partition_every_axis(v in arb_volume()) {
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let slices = extract_slices(&v, axis);
            let total: usize = slices.iter().map(|s| s.pixels().len()).sum();
            prop_assert_eq!(total, v.data().len());
            let mut sum = 0.0;
            for s in &slices {
                sum += s.pixels().iter().sum::<f64>();
            }
            prop_assert!((sum - v.data().iter().sum::<f64>()).abs() < 1e-6);
        }
    }

    #[test]
    fn entropy_is_bounded_by_log2_bins(
        values in proptest::collection::vec(-1e3f64..1e3, 1..256),
        bins in 2usize..256,
    ) {
        let n = values.len();
        let slice = Slice::new(values, 1, n, 0, "p").unwrap();
        let h = shannon_entropy(&intensity_histogram(&slice, bins)).unwrap();
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (bins as f64).log2() + 1e-12);
    }

    #[test]
    fn entropy_is_invariant_under_bin_permutation(
        counts in proptest::collection::vec(0u64..50, 2..64),
        seed in 0u64..1000,
    ) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let h = shannon_entropy(&counts).unwrap();
        let mut permuted = counts.clone();
        permuted.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let hp = shannon_entropy(&permuted).unwrap();
        prop_assert!((h - hp).abs() < 1e-12);
    }

    #[test]
    fn entropy_absorbs_positive_affine_maps(
        values in proptest::collection::vec(0f64..100.0, 4..128),
        scale in 0.01f64..50.0,
        shift in -100f64..100.0,
    ) {
        let n = values.len();
        let mapped: Vec<f64> = values.iter().map(|&v| scale * v + shift).collect();
        let a = Slice::new(values, 1, n, 0, "p").unwrap();
        let b = Slice::new(mapped, 1, n, 0, "p").unwrap();
        let ha = intensity_histogram(&a, 256);
        let hb = intensity_histogram(&b, 256);
        prop_assert_eq!(ha, hb);
    }

    #[test]
    fn sampling_regimes_are_nested(
        seed in 0u64..500,
        n in 3usize..40,
        k in 1usize..20,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let slices: Vec<Slice> = (0..n)
            .map(|i| {
                let values: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
                Slice::new(values, 4, 4, i, "p").unwrap()
            })
            .collect();
        let pick = |strategy| {
            select_samples(&slices, &SampleSpec::new(strategy))
                .unwrap()
                .iter()
                .map(|s| s.index())
                .collect::<std::collections::BTreeSet<_>>()
        };
        let max_one = pick(SampleStrategy::MaxOne);
        let top_k = pick(SampleStrategy::TopK(k));
        let all = pick(SampleStrategy::All);
        prop_assert!(max_one.is_subset(&top_k));
        prop_assert!(top_k.is_subset(&all));
        prop_assert_eq!(all.len(), n);
    }

    #[test]
    fn ranking_never_ascends(seed in 0u64..200, n in 1usize..30) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let slices: Vec<Slice> = (0..n)
            .map(|i| {
                let values: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..1.0)).collect();
                Slice::new(values, 3, 3, i, "p").unwrap()
            })
            .collect();
        let ranked = rank_slices(&slices, 64);
        for w in ranked.windows(2) {
            prop_assert!(w[0].entropy_bits >= w[1].entropy_bits);
            if w[0].entropy_bits == w[1].entropy_bits {
                prop_assert!(w[0].index < w[1].index);
            }
        }
    }

    #[test]
    fn softmax_rows_are_stochastic(
        a in -50f64..50.0,
        b in -50f64..50.0,
        c in -50f64..50.0,
    ) {
        let p = softmax(&[a, b, c]);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalization_outputs_are_standardized(
        values in proptest::collection::vec(-1e4f64..1e4, 2..200),
    ) {
        use entroscan::preprocess::{normalize, Normalization};
        let n = values.len();
        let slice = Slice::new(values, 1, n, 0, "p").unwrap();

        let minmax = normalize(&slice, Normalization::MinMax);
        prop_assert!(minmax.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));

        let zscore = normalize(&slice, Normalization::ZScore);
        let mean = zscore.pixels().iter().sum::<f64>() / n as f64;
        let var = zscore.pixels().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        prop_assert!(mean.abs() <= 1e-9);
        let degenerate = slice.pixels().iter().all(|&v| v == slice.pixels()[0]);
        if degenerate {
            prop_assert!(zscore.pixels().iter().all(|&v| v == 0.0));
        } else {
            prop_assert!((var.sqrt() - 1.0).abs() <= 1e-9);
        }
    }
}
