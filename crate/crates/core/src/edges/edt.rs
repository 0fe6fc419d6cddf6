use super::{DistanceField, EdgeMap};

/// Lower envelope of parabolas rooted at the finite samples of `f`,
/// evaluated at every integer position.
fn envelope_1d(f: &[f64], out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let pf = p as f64;
                    let s = ((fq + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < v.len() && z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distances via two separable envelope passes.
pub fn squared_edt(src: &EdgeMap) -> Vec<f64> {
    let (w, h) = (src.width(), src.height());
    let mut grid: Vec<f64> = src
        .bits()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    let mut v = Vec::new();
    let mut z = Vec::new();

    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        envelope_1d(&col, &mut col_out, &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0; w];
    for y in 0..h {
        let row = &grid[y * w..(y + 1) * w];
        envelope_1d(row, &mut row_out, &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    grid
}

/// Exact Euclidean distance transform of an edge map.
pub fn edt(src: &EdgeMap) -> DistanceField {
    DistanceField {
        width: src.width(),
        height: src.height(),
        values: squared_edt(src).into_iter().map(f64::sqrt).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(src: &EdgeMap) -> Vec<f64> {
        let pts: Vec<(i64, i64)> = (0..src.height())
            .flat_map(|y| (0..src.width()).map(move |x| (x, y)))
            .filter(|&(x, y)| src.get(x, y))
            .map(|(x, y)| (x as i64, y as i64))
            .collect();
        let mut out = Vec::new();
        for y in 0..src.height() as i64 {
            for x in 0..src.width() as i64 {
                let best = pts
                    .iter()
                    .map(|&(px, py)| (px - x).pow(2) + (py - y).pow(2))
                    .min();
                out.push(best.map_or(f64::INFINITY, |d| (d as f64).sqrt()));
            }
        }
        out
    }

    #[test]
    fn full_map_is_zero() {
        let e = EdgeMap::from_fn(5, 3, |_, _| true);
        assert!(edt(&e).values().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn empty_map_is_infinite() {
        let e = EdgeMap::empty(4, 4);
        assert!(edt(&e).values().iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn corner_source() {
        let e = EdgeMap::from_fn(4, 4, |x, y| x == 0 && y == 0);
        assert_eq!(edt(&e).get(3, 3), 18f64.sqrt());
    }

    #[test]
    fn matches_brute_force_on_structured_masks() {
        let masks = [
            EdgeMap::from_fn(17, 9, |x, y| (x * 7 + y * 3) % 11 == 0),
            EdgeMap::from_fn(9, 17, |x, y| x == 4 || y == 16),
            EdgeMap::from_fn(1, 7, |_, y| y == 5),
            EdgeMap::from_fn(7, 1, |x, _| x == 0),
            EdgeMap::from_fn(12, 12, |x, y| x * y == 30),
        ];
        for m in &masks {
            assert_eq!(edt(m).values(), brute(m).as_slice());
        }
    }
}
