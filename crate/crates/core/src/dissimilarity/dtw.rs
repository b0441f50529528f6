use crate::error::{Error, Result};

/// Dynamic time warping with squared pointwise cost.
///
/// With `band_half_width = Some(w)`, only cells with `|i - j| <= w` may be matched.
pub fn dtw(x: &[f64], y: &[f64], band_half_width: Option<usize>) -> Result<f64> {
    let (m, n) = (x.len(), y.len());
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("dtw of an empty series".into()));
    }
    let band = band_half_width.unwrap_or(usize::MAX);
    if band < m.abs_diff(n) {
        return Err(Error::InvalidArgument(format!(
            "band half-width {band} admits no path between lengths {m} and {n}"
        )));
    }
    // rolling rows over j, with an infinite border at index 0
    let mut prev = vec![f64::INFINITY; n + 1];
    let mut cur = vec![f64::INFINITY; n + 1];
    prev[0] = 0.0;
    for i in 1..=m {
        cur.fill(f64::INFINITY);
        let lo = if i > band { i - band } else { 1 };
        let hi = n.min(i.saturating_add(band));
        for j in lo..=hi {
            let d = x[i - 1] - y[j - 1];
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = d * d + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[n])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimum over every monotone lattice path of steps (1,0), (0,1), (1,1).
    fn brute_force(x: &[f64], y: &[f64], band: Option<usize>) -> f64 {
        fn walk(x: &[f64], y: &[f64], i: usize, j: usize, band: usize, acc: f64, best: &mut f64) {
            if i.abs_diff(j) > band {
                return;
            }
            let d = x[i] - y[j];
            let acc = acc + d * d;
            if i == x.len() - 1 && j == y.len() - 1 {
                *best = best.min(acc);
                return;
            }
            if i + 1 < x.len() {
                walk(x, y, i + 1, j, band, acc, best);
            }
            if j + 1 < y.len() {
                walk(x, y, i, j + 1, band, acc, best);
            }
            if i + 1 < x.len() && j + 1 < y.len() {
                walk(x, y, i + 1, j + 1, band, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(x, y, 0, 0, band.unwrap_or(usize::MAX), 0.0, &mut best);
        best
    }

    /// Literal enumeration of matchings as subsets of index pairs obeying the three rules.
    fn subset_oracle(x: &[f64], y: &[f64]) -> f64 {
        let (m, n) = (x.len(), y.len());
        let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << cells.len()) {
            let chosen: Vec<(usize, usize)> =
                cells.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &c)| c).collect();
            if !chosen.contains(&(0, 0)) || !chosen.contains(&(m - 1, n - 1)) {
                continue;
            }
            let covered = (0..m).all(|i| chosen.iter().any(|c| c.0 == i))
                && (0..n).all(|j| chosen.iter().any(|c| c.1 == j));
            let monotone = chosen.iter().all(|a| {
                chosen.iter().all(|b| !(a.0 < b.0 && a.1 > b.1) && !(a.1 < b.1 && a.0 > b.0))
            });
            if covered && monotone {
                let cost: f64 = chosen.iter().map(|&(i, j)| (x[i] - y[j]).powi(2)).sum();
                best = best.min(cost);
            }
        }
        best
    }

    fn lcg_series(seed: &mut u64, len: usize) -> Vec<f64> {
        (0..len)
            .map(|_| {
                *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((*seed >> 33) % 9) as f64 - 4.0
            })
            .collect()
    }

    #[test]
    fn hand_example() {
        assert_eq!(dtw(&[0.0, 1.0, 2.0], &[0.0, 2.0], None).unwrap(), 1.0);
        assert_eq!(brute_force(&[0.0, 1.0, 2.0], &[0.0, 2.0], None), 1.0);
    }

    #[test]
    fn path_oracle_agrees_with_literal_matching_rules() {
        let mut s = 17;
        for _ in 0..40 {
            let (m, n) = (1 + (s % 3) as usize, 1 + ((s >> 7) % 3) as usize);
            let x = lcg_series(&mut s, m);
            let y = lcg_series(&mut s, n);
            assert_eq!(brute_force(&x, &y, None), subset_oracle(&x, &y), "{x:?} {y:?}");
        }
    }

    #[test]
    fn matches_enumeration_with_and_without_band() {
        let mut s = 5;
        for _ in 0..200 {
            let (m, n) = (1 + (s % 7) as usize, 1 + ((s >> 11) % 7) as usize);
            let x = lcg_series(&mut s, m);
            let y = lcg_series(&mut s, n);
            assert_eq!(dtw(&x, &y, None).unwrap(), brute_force(&x, &y, None));
            let w = m.abs_diff(n) + (s % 3) as usize;
            assert_eq!(dtw(&x, &y, Some(w)).unwrap(), brute_force(&x, &y, Some(w)));
        }
    }

    #[test]
    fn symmetric_nonnegative_identity() {
        let mut s = 99;
        for _ in 0..50 {
            let x = lcg_series(&mut s, 6);
            let y = lcg_series(&mut s, 5);
            let a = dtw(&x, &y, None).unwrap();
            assert_eq!(a, dtw(&y, &x, None).unwrap());
            assert!(a >= 0.0);
            assert_eq!(dtw(&x, &x, None).unwrap(), 0.0);
        }
    }

    #[test]
    fn errors() {
        assert!(dtw(&[], &[1.0], None).is_err());
        assert!(dtw(&[1.0, 2.0, 3.0], &[1.0], Some(1)).is_err());
        assert!(dtw(&[1.0, 2.0, 3.0], &[1.0], Some(2)).is_ok());
    }
}
