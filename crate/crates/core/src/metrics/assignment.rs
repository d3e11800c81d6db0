//! Linear sum assignment by shortest augmenting paths (Jonker-Volgenant
//! style, dual updates after each augmentation). Costs are squared
//! Euclidean distances evaluated on the fly.

#[inline]
fn cost(a: &[[f64; 2]], b: &[[f64; 2]], i: usize, j: usize) -> f64 {
    let dv = a[i][0] - b[j][0];
    let dw = a[i][1] - b[j][1];
    dv * dv + dw * dw
}

/// Minimum mean squared matching cost between two equal-size point sets.
pub fn assignment_w2_squared(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let n = a.len();
    assert_eq!(n, b.len());
    if n == 0 {
        return 0.0;
    }

    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    let mut col4row = vec![usize::MAX; n];
    let mut row4col = vec![usize::MAX; n];

    let mut shortest = vec![0.0f64; n];
    let mut path = vec![usize::MAX; n];
    let mut seen_row = vec![false; n];
    let mut seen_col = vec![false; n];

    for cur_row in 0..n {
        for x in shortest.iter_mut() {
            *x = f64::INFINITY;
        }
        for x in seen_row.iter_mut() {
            *x = false;
        }
        for x in seen_col.iter_mut() {
            *x = false;
        }

        let mut min_val = 0.0;
        let mut i = cur_row;
        let mut sink = usize::MAX;
        while sink == usize::MAX {
            seen_row[i] = true;
            let mut lowest = f64::INFINITY;
            let mut index = usize::MAX;
            for j in 0..n {
                if seen_col[j] {
                    continue;
                }
                let r = min_val + cost(a, b, i, j) - u[i] - v[j];
                if r < shortest[j] {
                    path[j] = i;
                    shortest[j] = r;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == usize::MAX) {
                    lowest = shortest[j];
                    index = j;
                }
            }
            min_val = lowest;
            debug_assert!(min_val.is_finite(), "assignment ran out of columns");
            let j = index;
            seen_col[j] = true;
            if row4col[j] == usize::MAX {
                sink = j;
            } else {
                i = row4col[j];
            }
        }

        u[cur_row] += min_val;
        for i2 in 0..n {
            if seen_row[i2] && i2 != cur_row {
                u[i2] += min_val - shortest[col4row[i2]];
            }
        }
        for (j, &sc) in seen_col.iter().enumerate() {
            if sc {
                v[j] -= min_val - shortest[j];
            }
        }

        let mut j = sink;
        loop {
            let i2 = path[j];
            row4col[j] = i2;
            std::mem::swap(&mut col4row[i2], &mut j);
            if i2 == cur_row {
                break;
            }
        }
    }

    let total: f64 = (0..n).map(|i| cost(a, b, i, col4row[i])).sum();
    total / n as f64
}
