//! Exact Euclidean distance transform (Meijster, Roerdink & Hesselink),
//! computed in integer arithmetic so results are exact square roots of
//! integer squared distances.

use crate::bev::{BevRaster, CanopyMask};
use crate::par::{self, Execution};

/// Distance, in cells, from every true cell to the nearest false cell.
/// Everything outside the grid counts as false; false cells map to 0.
pub fn edt(mask: &CanopyMask) -> BevRaster {
    edt_with(mask, Execution::default())
}

pub fn edt_with(mask: &CanopyMask, exec: Execution) -> BevRaster {
    let spec = mask.spec;
    let squared = squared_edt(&mask.mask, spec.width, spec.height, exec);
    BevRaster { spec, values: squared.into_iter().map(|d| (d as f64).sqrt()).collect() }
}

/// Integer squared distances for a row-major `width x height` mask.
pub fn squared_edt(mask: &[bool], width: usize, height: usize, exec: Execution) -> Vec<i64> {
    assert_eq!(mask.len(), width * height);
    // pad by one false cell on each side
    let (pw, ph) = (width + 2, height + 2);
    let inside = |r: usize, c: usize| r >= 1 && c >= 1 && r <= height && c <= width && mask[(r - 1) * width + (c - 1)];

    // phase 1: vertical distance to the nearest false cell, per padded column
    let columns: Vec<Vec<i64>> = par::map_range(pw, exec, |c| {
        let mut g = vec![0i64; ph];
        for r in 1..ph {
            g[r] = if inside(r, c) { g[r - 1] + 1 } else { 0 };
        }
        for r in (0..ph - 1).rev() {
            if g[r + 1] + 1 < g[r] {
                g[r] = g[r + 1] + 1;
            }
        }
        g
    });

    // phase 2: lower envelope of parabolas along each interior row
    let rows: Vec<Vec<i64>> = par::map_range(height, exec, |r| {
        let pr = r + 1;
        let g: Vec<i64> = (0..pw).map(|c| columns[c][pr]).collect();
        let row = envelope_row(&g);
        row[1..=width].to_vec()
    });
    rows.concat()
}

fn envelope_row(g: &[i64]) -> Vec<i64> {
    let m = g.len();
    let f = |x: i64, i: usize| (x - i as i64).pow(2) + g[i] * g[i];
    let sep = |i: usize, u: usize| {
        let (i64i, i64u) = (i as i64, u as i64);
        (i64u * i64u - i64i * i64i + g[u] * g[u] - g[i] * g[i]).div_euclid(2 * (i64u - i64i))
    };
    let mut s = vec![0usize; m];
    let mut t = vec![0i64; m];
    let mut q: isize = 0;
    for u in 1..m {
        while q >= 0 && f(t[q as usize], s[q as usize]) > f(t[q as usize], u) {
            q -= 1;
        }
        if q < 0 {
            q = 0;
            s[0] = u;
        } else {
            let w = 1 + sep(s[q as usize], u);
            if w < m as i64 {
                q += 1;
                s[q as usize] = u;
                t[q as usize] = w;
            }
        }
    }
    let mut out = vec![0i64; m];
    for u in (0..m).rev() {
        out[u] = f(u as i64, s[q as usize]);
        if u as i64 == t[q as usize] {
            q -= 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bev::GridSpec;

    /// O(n^2) nearest-background search including the implicit outer ring.
    fn brute(mask: &[bool], w: usize, h: usize) -> Vec<i64> {
        (0..w * h)
            .map(|i| {
                if !mask[i] {
                    return 0;
                }
                let (r, c) = ((i / w) as i64, (i % w) as i64);
                let border = (r + 1).min(c + 1).min(h as i64 - r).min(w as i64 - c);
                let mut best = border * border;
                for j in (0..w * h).filter(|&j| !mask[j]) {
                    let (rr, cc) = ((j / w) as i64, (j % w) as i64);
                    best = best.min((rr - r).pow(2) + (cc - c).pow(2));
                }
                best
            })
            .collect()
    }

    fn spec(w: usize, h: usize) -> GridSpec {
        GridSpec { width: w, height: h, cell_size_m: 1.0, origin_x_m: 0.0, origin_y_m: 0.0 }
    }

    #[test]
    fn all_false_is_zero() {
        let d = edt(&CanopyMask::new(spec(5, 4), vec![false; 20]));
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_cell_is_one() {
        let mut m = vec![false; 25];
        m[12] = true;
        assert_eq!(edt(&CanopyMask::new(spec(5, 5), m)).values[12], 1.0);
        assert_eq!(edt(&CanopyMask::new(spec(1, 1), vec![true])).values[0], 1.0);
    }

    #[test]
    fn full_block_center() {
        let d = edt(&CanopyMask::new(spec(7, 7), vec![true; 49]));
        assert_eq!(d.get(3, 3), 4.0);
        assert_eq!(d.get(0, 0), 1.0);
        assert_eq!(brute(&[true; 49], 7, 7)[24], 16);
    }

    #[test]
    fn matches_brute_force_on_pseudo_random_masks() {
        let mut state = 0x1234_5678_9abc_def0u64;
        for trial in 0..200 {
            let (w, h) = (1 + trial % 13, 1 + (trial * 7) % 11);
            let mask: Vec<bool> = (0..w * h)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    !state.is_multiple_of(4)
                })
                .collect();
            let fast = squared_edt(&mask, w, h, Execution::Sequential);
            assert_eq!(fast, brute(&mask, w, h), "{w}x{h}");
            assert_eq!(fast, squared_edt(&mask, w, h, Execution::Parallel));
        }
    }
}
