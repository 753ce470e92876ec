use proptest::prelude::*;

use busenc::trace::{
    bytes_to_cache_lines, cache_lines_to_image, cache_lines_to_tensor, image_to_cache_lines, read_hex_trace,
    read_trace, tensor_f32_to_cache_lines, write_hex_trace, write_trace, Raster, TraceStream,
};
use busenc::word::{byte_position, split_cache_line};
use busenc::{simulate, Exec, RunSpec, Scheme};

fn raster() -> impl Strategy<Value = Raster> {
    (1usize..40, 1usize..20, prop::sample::select(vec![1usize, 3])).prop_flat_map(|(w, h, c)| {
        prop::collection::vec(any::<u8>(), w * h * c).prop_map(move |d| Raster::new(w, h, c, d).unwrap())
    })
}

fn through_files(s: &TraceStream) -> (TraceStream, TraceStream) {
    let mut bin = Vec::new();
    write_trace(&mut bin, s).unwrap();
    let mut hex = Vec::new();
    write_hex_trace(&mut hex, s).unwrap();
    (read_trace(&bin[..]).unwrap(), read_hex_trace(&hex[..]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn image_round_trip_under_exact_schemes(img in raster()) {
        let s = image_to_cache_lines(&img);
        prop_assert_eq!(s.len() * 64 - s.meta.pad_len as usize, img.data.len());
        let (b, h) = through_files(&s);
        prop_assert_eq!(&b, &s);
        prop_assert_eq!(&h, &s);
        for scheme in [Scheme::Org, Scheme::Dbi, Scheme::BdeOrg, Scheme::Mbdc] {
            let run = simulate(&b, &RunSpec::new(scheme), Exec::Sequential).unwrap();
            prop_assert_eq!(cache_lines_to_image(&run.received).unwrap(), img.clone());
        }
    }

    #[test]
    fn tensor_round_trip(values in prop::collection::vec(any::<u32>().prop_map(f32::from_bits), 0..100)) {
        let s = tensor_f32_to_cache_lines(&values);
        prop_assert_eq!(s.len(), values.len().div_ceil(16));
        let (b, h) = through_files(&s);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&cache_lines_to_tensor(&b).unwrap()), bits(&values));
        prop_assert_eq!(bits(&cache_lines_to_tensor(&h).unwrap()), bits(&values));
    }

    #[test]
    fn raw_round_trip(bytes in prop::collection::vec(any::<u8>(), 0..500)) {
        let s = bytes_to_cache_lines(&bytes);
        prop_assert!(!s.approx_allowed);
        let (b, h) = through_files(&s);
        prop_assert_eq!(b.payload().unwrap(), bytes.clone());
        prop_assert_eq!(h.payload().unwrap(), bytes);
    }

    #[test]
    fn pixels_land_in_single_burst_bytes(img in raster()) {
        // pixel j of the serialized image is exactly burst byte (j / 8) of chip (j % 8)
        let s = image_to_cache_lines(&img);
        for (n, line) in s.lines.iter().enumerate() {
            let words = split_cache_line(line);
            for j in 0..64 {
                let (chip, burst) = byte_position(j);
                let expected = img.data.get(n * 64 + j).copied().unwrap_or(0);
                prop_assert_eq!(words[chip].burst(burst), expected);
            }
        }
    }
}
