mod common;

use common::encoder_oracles::{check_barcode_exact, check_topdown_oracles, trajectory};
use ntt_core::encoders::{encode_barcode, encode_topdown, topdown_pixel};
use ntt_core::navsim::MapSpec;
use ntt_core::raster::GrayImage;
use proptest::prelude::*;

#[test]
fn barcode_matches_column_mean_oracle() {
    check_barcode_exact().unwrap();
}

#[test]
fn topdown_matches_hand_oracles() {
    assert_eq!(check_topdown_oracles().unwrap(), 10);
}

#[test]
fn topdown_is_deterministic() {
    let bounds = MapSpec::default_map().bounds();
    let t = trajectory(&[(10.0, 20.0), (300.0, 40.0), (120.0, 290.0)]);
    assert_eq!(encode_topdown(&t, &bounds).unwrap(), encode_topdown(&t, &bounds).unwrap());
}

proptest! {
    #[test]
    fn barcode_shifts_with_constant_offsets(w in 1usize..6, h in 1usize..6, base in proptest::collection::vec(0u8..200, 36), k in 0u8..55) {
        let px: Vec<u8> = base.iter().cycle().take(w * h).cloned().collect();
        let f = GrayImage::from_pixels(w, h, px.clone()).unwrap();
        let g = GrayImage::from_pixels(w, h, px.iter().map(|p| p + k).collect()).unwrap();
        let (a, b) = (encode_barcode(&[f]).unwrap(), encode_barcode(&[g]).unwrap());
        for u in 0..w {
            prop_assert_eq!(b.get(u, 0), a.get(u, 0) + k);
        }
    }

    #[test]
    fn topdown_translation_by_whole_cells(cx in 0usize..40, cy in 0usize..24, dc in 1usize..5, dr in 1usize..4) {
        // 10 m cells map to 6.4 x 6.25 px, so shift by 25 m / 16 m lattice steps instead,
        // which are exactly 16 x 10 px
        let bounds = MapSpec::default_map().bounds();
        let (x, y) = (cx as f64 * 10.0 + 0.3, cy as f64 * 10.0 + 0.3);
        let (sx, sy) = (dc as f64 * 25.0, dr as f64 * 16.0);
        let (p, _) = topdown_pixel(&bounds, x, y);
        let (q, clamped) = topdown_pixel(&bounds, x + sx, y + sy);
        prop_assume!(!clamped);
        prop_assert_eq!(q, (p.0 + 16 * dc, p.1 + 10 * dr));
    }
}
