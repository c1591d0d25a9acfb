//! Neighbourhood helpers on a `w × h` pixel grid with linear index `v * w + u`.

/// Linear indices of the 8-neighbourhood of `l`. Rows are bounded; columns
/// wrap around when `wrap` is set. The pixel itself and duplicates (grids
/// narrower than three columns) are skipped.
pub fn neighbours8(l: usize, w: usize, h: usize, wrap: bool) -> impl Iterator<Item = usize> {
    let (u, v) = ((l % w) as isize, (l / w) as isize);
    let mut out = [usize::MAX; 8];
    let mut k = 0;
    for dv in -1isize..=1 {
        let vv = v + dv;
        if vv < 0 || vv >= h as isize {
            continue;
        }
        for du in -1isize..=1 {
            if dv == 0 && du == 0 {
                continue;
            }
            let mut uu = u + du;
            if wrap {
                uu = uu.rem_euclid(w as isize);
            } else if uu < 0 || uu >= w as isize {
                continue;
            }
            let q = vv as usize * w + uu as usize;
            if q != l && !out[..k].contains(&q) {
                out[k] = q;
                k += 1;
            }
        }
    }
    out.into_iter().take(k)
}

/// Whether the full 3×3 window around `l` lies inside the image
/// (horizontally always true when wrapping).
pub fn full_window(l: usize, w: usize, h: usize, wrap: bool) -> bool {
    let (u, v) = (l % w, l / w);
    let vert = v >= 1 && v + 1 < h;
    vert && (wrap || (u >= 1 && u + 1 < w))
}
