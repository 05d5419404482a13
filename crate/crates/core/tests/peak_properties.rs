mod common;

use egoloc::camera::PixelPoint;
use egoloc::signal::{
    expand_peak_window, find_peaks, select_response_peaks, BBox, Detection, DetectionTimeline,
    Padding, PeakParams,
};
use proptest::prelude::*;

fn quantized_sequence() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0u8..=4, 3..=50)
        .prop_map(|v| v.into_iter().map(|q| q as f64 / 4.0).collect())
}

fn continuous_sequence() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 3..=50)
}

fn params() -> impl Strategy<Value = PeakParams> {
    (
        1usize..12,
        0.0f64..4.0,
        0.0f64..0.6,
        2usize..60,
        0.05f64..=1.0,
    )
        .prop_map(
            |(distance, width, prominence, wlen, rel_height)| PeakParams {
                median_kernel: 1,
                distance,
                width,
                prominence,
                wlen,
                rel_height,
            },
        )
}

fn timeline(scores: &[f64]) -> DetectionTimeline {
    let entries = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| Detection {
            frame: i as i64,
            bbox: BBox::centered(PixelPoint::new(i as f64, 0.0), 2.0, 2.0),
            score: s,
        })
        .collect();
    DetectionTimeline::new("q", scores.len() as i64, entries).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn matches_oracle_with_plateaus(x in quantized_sequence(), p in params()) {
        common::check_against_oracle(&x, &p).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn matches_oracle_on_continuous_scores(x in continuous_sequence(), p in params()) {
        common::check_against_oracle(&x, &p).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn peaks_satisfy_every_filter(x in continuous_sequence(), p in params()) {
        let peaks = find_peaks(&x, &p).unwrap();
        for (i, a) in peaks.iter().enumerate() {
            prop_assert!(a.index > 0 && a.index + 1 < x.len());
            prop_assert!(a.prominence >= p.prominence);
            prop_assert!(a.width >= p.width);
            for b in &peaks[i + 1..] {
                prop_assert!(b.index - a.index >= p.distance);
            }
        }
    }

    #[test]
    fn affine_rescaling_keeps_indices(
        x in quantized_sequence(),
        p in params(),
        scale_exp in -3i32..4,
        offset in -8i32..8,
        rel_quarter in 1u8..=4,
    ) {
        // Power-of-two scales and dyadic offsets keep every comparison exact.
        let a = 2f64.powi(scale_exp);
        let b = offset as f64 / 8.0;
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let p = PeakParams { rel_height: rel_quarter as f64 / 4.0, ..p };
        let q = PeakParams { prominence: a * p.prominence, ..p };
        let ix: Vec<usize> = find_peaks(&x, &p).unwrap().iter().map(|k| k.index).collect();
        let iy: Vec<usize> = find_peaks(&y, &q).unwrap().iter().map(|k| k.index).collect();
        prop_assert_eq!(ix, iy);
    }

    #[test]
    fn window_is_monotone_in_threshold(
        x in prop::collection::vec(0.01f64..1.0, 1..40),
        pick in any::<prop::sample::Index>(),
        t1 in 0.01f64..=1.0,
        t2 in 0.01f64..=1.0,
    ) {
        let peak = pick.index(x.len());
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let wide = expand_peak_window(&x, peak, lo).unwrap();
        let narrow = expand_peak_window(&x, peak, hi).unwrap();
        prop_assert!(wide.start() <= narrow.start() && narrow.end() <= wide.end());
        prop_assert!(narrow.contains(&peak));
    }

    #[test]
    fn single_bump_is_selected(len in 40usize..120, apex_frac in 0.2f64..0.8, height in 0.4f64..1.0, half in 5usize..15) {
        let apex = ((len as f64) * apex_frac) as usize;
        let scores: Vec<f64> = (0..len)
            .map(|i| (height * (1.0 - i.abs_diff(apex) as f64 / half as f64)).max(0.0))
            .collect();
        let set = select_response_peaks(&timeline(&scores), &PeakParams::default(), Padding::Replicate).unwrap();
        prop_assert_eq!(set.frames(), vec![apex as i64]);
    }
}

#[test]
fn window_with_vanishing_threshold_covers_positive_timeline() {
    let x = [0.2, 0.5, 0.9, 0.4, 0.3];
    assert_eq!(expand_peak_window(&x, 2, 1e-9).unwrap(), 0..=4);
    assert_eq!(expand_peak_window(&x, 2, 1.0).unwrap(), 2..=2);
}
