//! Conservative remap of 1D cell averages under a monotone affine map.
//!
//! Used for the adaptation-variable transport (whose characteristics are
//! affine) and for the voltage rescaling diagnostic. The reconstruction is
//! piecewise parabolic with the Colella-Woodward limiter, so the remap is
//! conservative, positivity-preserving and third-order accurate on smooth
//! profiles.

/// Piecewise-parabolic reconstruction coefficients for one cell:
/// `rho(xi) = left + xi * (delta + six * (1 - xi))` on `xi in [0, 1]`.
#[derive(Clone, Copy)]
pub struct Parabola {
    left: f64,
    delta: f64,
    six: f64,
}

impl Parabola {
    /// Antiderivative of the parabola in the local coordinate.
    #[inline]
    fn primitive(&self, xi: f64) -> f64 {
        let xi2 = xi * xi;
        self.left * xi + 0.5 * self.delta * xi2 + self.six * (0.5 * xi2 - xi2 * xi / 3.0)
    }
}

#[inline]
fn edge_value(m2: f64, m1: f64, p1: f64, p2: f64) -> f64 {
    ((7.0 * (m1 + p1)) - (m2 + p2)) / 12.0
}

/// Minimum of the mean-preserving parabola with edge values `l`, `r` over
/// the cell.
fn parabola_min(l: f64, r: f64, mean: f64) -> f64 {
    let six = 6.0 * (mean - 0.5 * (l + r));
    let delta = r - l;
    let mut m = l.min(r);
    // rho(xi) = l + (delta + six) xi - six xi^2; interior extremum at
    // xi* = (delta + six) / (2 six).
    if six != 0.0 {
        let xi = (delta + six) / (2.0 * six);
        if xi > 0.0 && xi < 1.0 {
            m = m.min(l + xi * (delta + six * (1.0 - xi)));
        }
    }
    m
}

fn build_parabolas(src: &[f64], out: &mut Vec<Parabola>) {
    let n = src.len();
    out.clear();
    let at = |i: isize| -> f64 {
        let j = i.clamp(0, n as isize - 1) as usize;
        src[j]
    };
    for i in 0..n as isize {
        let mean = at(i);
        let mut left = edge_value(at(i - 2), at(i - 1), at(i), at(i + 1)).max(0.0);
        let mut right = edge_value(at(i - 1), at(i), at(i + 1), at(i + 2)).max(0.0);
        // Keep the unlimited parabola when it stays nonnegative; limiting
        // everywhere would clip smooth extrema and bias the moments.
        if parabola_min(left, right, mean) < 0.0 {
            // Colella-Woodward monotonization.
            if (right - mean) * (mean - left) <= 0.0 {
                left = mean;
                right = mean;
            } else {
                let d = right - left;
                let c = mean - 0.5 * (left + right);
                if d * c > d * d / 6.0 {
                    left = 3.0 * mean - 2.0 * right;
                } else if -d * d / 6.0 > d * c {
                    right = 3.0 * mean - 2.0 * left;
                }
            }
        }
        out.push(Parabola {
            left,
            delta: right - left,
            six: 6.0 * (mean - 0.5 * (left + right)),
        });
    }
}

/// Remaps cell averages `src` (cells `[x0 + i*dx, x0 + (i+1)*dx]`) under the
/// map `x -> lambda * x + delta` with `lambda > 0`, writing cell averages of
/// the pushforward onto the same grid. Returns the mass (in `value * dx`
/// units) that left the grid.
pub fn affine_remap(
    src: &[f64],
    x0: f64,
    dx: f64,
    lambda: f64,
    delta: f64,
    out: &mut [f64],
    scratch: &mut Vec<Parabola>,
) -> f64 {
    assert!(lambda > 0.0, "affine remap requires a positive slope");
    assert_eq!(src.len(), out.len());
    let n = src.len();
    if n == 0 {
        return 0.0;
    }
    build_parabolas(src, scratch);

    let src_mass: f64 = src.iter().sum::<f64>() * dx;
    let mut kept = 0.0;
    // Pre-image of target edge j in source index coordinates.
    let pre_index = |j: usize| -> f64 {
        let edge = x0 + j as f64 * dx;
        ((edge - delta) / lambda - x0) / dx
    };
    let mut lo = pre_index(0);
    for (j, slot) in out.iter_mut().enumerate() {
        let hi = pre_index(j + 1);
        let mut mass = 0.0;
        if hi > 0.0 && lo < n as f64 {
            let a = lo.max(0.0);
            let b = hi.min(n as f64);
            if b > a {
                let ia = a.floor() as usize;
                let ib = ((b.ceil() as usize).max(ia + 1) - 1).min(n - 1);
                for (i, p) in scratch.iter().enumerate().take(ib + 1).skip(ia) {
                    let xa = (a - i as f64).clamp(0.0, 1.0);
                    let xb = (b - i as f64).clamp(0.0, 1.0);
                    if xb > xa {
                        mass += p.primitive(xb) - p.primitive(xa);
                    }
                }
            }
        }
        mass = mass.max(0.0) * dx;
        kept += mass;
        *slot = mass / dx;
        lo = hi;
    }
    (src_mass - kept).max(0.0)
}
