//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use egoloc::signal::PeakParams;

/// Peak as measured by the brute-force oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePeak {
    pub index: usize,
    pub prominence: f64,
    pub left_base: usize,
    pub right_base: usize,
    pub width: f64,
}

/// Every maximal run of equal samples with strictly lower neighbours on both
/// sides, reported at its floor midpoint.
pub fn oracle_candidates(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        for j in i..n - 1 {
            let flat = x[i..=j].iter().all(|&v| v == x[i]);
            if flat && x[i - 1] < x[i] && x[j + 1] < x[j] {
                out.push((i + j) / 2);
            }
        }
    }
    out
}

/// Keeps a candidate iff no already-kept candidate of higher priority
/// (height, then later index) lies closer than `distance`.
pub fn oracle_distance(x: &[f64], candidates: &[usize], distance: usize) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(b.cmp(&a)));
    let mut kept: Vec<usize> = Vec::new();
    for c in order {
        if kept.iter().all(|&k| k.abs_diff(c) >= distance) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept
}

/// Prominence with bases searched inside `peak ± wlen/2`.
pub fn oracle_prominence(x: &[f64], peak: usize, wlen: usize) -> (f64, usize, usize) {
    let h = x[peak];
    let i_min = peak.saturating_sub(wlen / 2);
    let i_max = (peak + wlen / 2).min(x.len() - 1);

    let lo = (i_min..peak)
        .filter(|&i| x[i] > h)
        .max()
        .map_or(i_min, |i| i + 1);
    let left_min = x[lo..=peak].iter().copied().fold(f64::INFINITY, f64::min);
    let left_base = (lo..=peak).filter(|&i| x[i] == left_min).max().unwrap();

    let hi = (peak + 1..=i_max)
        .filter(|&i| x[i] > h)
        .min()
        .map_or(i_max, |i| i - 1);
    let right_min = x[peak..=hi].iter().copied().fold(f64::INFINITY, f64::min);
    let right_base = (peak..=hi).filter(|&i| x[i] == right_min).min().unwrap();

    (h - left_min.max(right_min), left_base, right_base)
}

/// Width at `height − prominence · rel_height`, interpolated, bounded by the bases.
pub fn oracle_width(
    x: &[f64],
    peak: usize,
    prominence: f64,
    lb: usize,
    rb: usize,
    rel_height: f64,
) -> f64 {
    let level = x[peak] - prominence * rel_height;
    let i = (lb + 1..=peak)
        .filter(|&j| x[j] <= level)
        .max()
        .unwrap_or(lb);
    let mut left = i as f64;
    if x[i] < level {
        left += (level - x[i]) / (x[i + 1] - x[i]);
    }
    let i = (peak..rb).filter(|&j| x[j] <= level).min().unwrap_or(rb);
    let mut right = i as f64;
    if x[i] < level {
        right -= (level - x[i]) / (x[i - 1] - x[i]);
    }
    right - left
}

/// Candidates, then distance, prominence and width filters, in that order.
pub fn oracle_find_peaks(x: &[f64], p: &PeakParams) -> Vec<OraclePeak> {
    let candidates = oracle_candidates(x);
    oracle_distance(x, &candidates, p.distance)
        .into_iter()
        .filter_map(|index| {
            let (prominence, left_base, right_base) = oracle_prominence(x, index, p.wlen);
            (prominence >= p.prominence).then_some((index, prominence, left_base, right_base))
        })
        .filter_map(|(index, prominence, left_base, right_base)| {
            let width = oracle_width(x, index, prominence, left_base, right_base, p.rel_height);
            (width >= p.width).then_some(OraclePeak {
                index,
                prominence,
                left_base,
                right_base,
                width,
            })
        })
        .collect()
}

/// Compares the library's peaks against the oracle; `Err` describes the first mismatch.
pub fn check_against_oracle(x: &[f64], p: &PeakParams) -> Result<(), String> {
    let got = egoloc::signal::find_peaks(x, p).map_err(|e| e.to_string())?;
    let want = oracle_find_peaks(x, p);
    let got_idx: Vec<usize> = got.iter().map(|k| k.index).collect();
    let want_idx: Vec<usize> = want.iter().map(|k| k.index).collect();
    if got_idx != want_idx {
        return Err(format!(
            "indices {got_idx:?} != oracle {want_idx:?} for {x:?} with {p}"
        ));
    }
    for (g, w) in got.iter().zip(&want) {
        if g.prominence != w.prominence
            || g.left_base != w.left_base
            || g.right_base != w.right_base
        {
            return Err(format!(
                "peak {}: prominence/bases differ: {g:?} vs {w:?}",
                g.index
            ));
        }
        if (g.width - w.width).abs() > 1e-12 {
            return Err(format!(
                "peak {}: width {} vs oracle {}",
                g.index, g.width, w.width
            ));
        }
    }
    Ok(())
}
