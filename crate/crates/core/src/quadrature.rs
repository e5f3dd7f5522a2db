//! Gauss–Legendre rules, panel integration on `[0, ∞)`-type domains, the
//! cylindrical reduction of two-centre integrals, and small least-squares fits
//! used for rate estimation.

use crate::scalar::{sphere_area, Real};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut xs = vec![0.0f64; n];
    let mut ws = vec![0.0f64; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = -x;
        xs[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs.into_iter().map(T::lit).collect(), ws.into_iter().map(T::lit).collect())
}

/// Composite Gauss–Legendre rule on consecutive breakpoints.
#[derive(Debug, Clone)]
pub struct PanelRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> PanelRule<T> {
    pub fn new(breaks: &[T], order: usize) -> Self {
        let (x, w) = gauss_legendre::<T>(order);
        let half = T::lit(0.5);
        let mut nodes = Vec::with_capacity(breaks.len() * order);
        let mut weights = Vec::with_capacity(breaks.len() * order);
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b <= a {
                continue;
            }
            let (mid, rad) = ((a + b) * half, (b - a) * half);
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + rad * *xi);
                weights.push(rad * *wi);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(T) -> T) -> T {
        self.nodes.iter().zip(&self.weights).fold(T::zero(), |acc, (&x, &w)| acc + w * f(x))
    }
}

/// Breakpoints on `[a, b]` with panels of width at most `h` and geometric
/// refinement (`levels` halvings) towards each point of `focus` inside.
pub fn graded_breaks<T: Real>(a: T, b: T, h: T, focus: &[T], levels: usize) -> Vec<T> {
    let mut pts = vec![a, b];
    let n = ((b - a) / h).ceil().to_usize().unwrap_or(1).max(1);
    let step = (b - a) / T::from_usize_lossy(n);
    for i in 1..n {
        pts.push(a + step * T::from_usize_lossy(i));
    }
    for &f in focus {
        if f >= a && f <= b {
            pts.push(f);
            let mut d = h.min(T::one()) * T::lit(0.5);
            for _ in 0..levels {
                if f - d > a {
                    pts.push(f - d);
                }
                if f + d < b {
                    pts.push(f + d);
                }
                d *= T::lit(0.5);
            }
        }
    }
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup_by(|x, y| (*x - *y).abs() <= T::epsilon() * (T::one() + x.abs()));
    pts
}

/// One centre of a two-centre integral: the radius beyond which its factor
/// is negligible and the radii where it is not smooth.
#[derive(Debug, Clone, Copy)]
pub struct Centre<'a, T> {
    pub reach: T,
    pub kinks: &'a [T],
}

impl<'a, T: Real> Centre<'a, T> {
    pub fn smooth(reach: T) -> Self {
        Self { reach, kinks: &[] }
    }
}

/// `∫_{R^d} F(|x|, |x-ξ|, cos∠(x, x-ξ)) dx` for `|ξ| = sep`.
///
/// Polar coordinates around the first centre: `r1 = |x|` and the angle `φ`
/// to `ξ`, with weight `|S^{d-2}| r1^{d-1} sin^{d-2}φ`. Angular panels are
/// placed at uniform steps of `r2 = |x-ξ|`, so both factors are resolved on
/// their own length scale and kinks of either factor fall on panel ends.
/// The cosine argument is the angle between `x` and `x-ξ` (for gradient
/// products of radial functions).
pub fn two_centre_integral<T: Real>(
    dim: usize,
    sep: T,
    c1: Centre<T>,
    c2: Centre<T>,
    order: usize,
    f: impl Fn(T, T, T) -> T,
) -> T {
    let h = T::one();
    let zero = T::zero();
    let d = sep.abs();
    if dim == 1 {
        let lo = -c1.reach.min(c2.reach - d);
        let hi = c1.reach.min(d + c2.reach);
        let mut focus = vec![zero, d];
        for &k in c1.kinks {
            focus.extend([k, -k]);
        }
        for &k in c2.kinks {
            focus.extend([d + k, d - k]);
        }
        let rule = PanelRule::new(&graded_breaks(lo, hi, h, &focus, 10), order);
        return rule.integrate(|t| {
            let r1 = t.abs();
            let r2 = (t - d).abs();
            let c = if (t < zero) == (t - d < zero) { T::one() } else { -T::one() };
            f(r1, r2, c)
        });
    }
    let r1_max = c1.reach.min(d + c2.reach);
    if r1_max <= zero {
        return zero;
    }
    let mut focus = vec![zero];
    focus.extend(c1.kinks.iter().copied());
    if d > zero {
        // Ends of the reach of the second factor along the axis.
        focus.extend([d, d - c2.reach, c2.reach - d]);
    }
    let r1_rule = PanelRule::new(&graded_breaks(zero, r1_max, h, &focus, 10), order);
    let (gx, gw) = gauss_legendre::<T>(order);
    let area = sphere_area::<T>(dim - 1);
    let pi = T::pi();
    let half = T::lit(0.5);
    let mut total = zero;
    let mut phis: Vec<T> = Vec::new();
    let (mut lo2, mut four);
    for (&r1, &w1) in r1_rule.nodes.iter().zip(&r1_rule.weights) {
        phis.clear();
        if d == zero {
            lo2 = r1 * r1;
            four = zero;
            for i in 0..=8 {
                phis.push(pi * T::from_usize_lossy(i) / T::lit(8.0));
            }
        } else {
            let r2_min = (r1 - d).abs();
            lo2 = r2_min * r2_min;
            four = T::lit(4.0) * r1 * d;
            let r2_hi = (r1 + d).min(c2.reach);
            if r2_hi <= r2_min {
                continue;
            }
            let mut r2s = graded_breaks(r2_min, r2_hi, h, &[r2_min], if r2_min < T::one() { 10 } else { 0 });
            r2s.extend(c2.kinks.iter().copied().filter(|&k| k > r2_min && k < r2_hi));
            // r2² = (r1 - d)² + 4 r1 d sin²(φ/2), inverted without the
            // cancellation of acos near φ = 0.
            phis.extend(r2s.iter().map(|&r2| {
                let q = ((r2 * r2 - lo2) / four).max(zero).min(T::one());
                (q.sqrt().asin() + q.sqrt().asin()).min(pi)
            }));
            if r1 + d <= c2.reach {
                *phis.last_mut().unwrap() = pi;
            }
            let phi_hi = *phis.last().unwrap();
            for i in 1..8 {
                let t = pi * T::from_usize_lossy(i) / T::lit(8.0);
                if t < phi_hi {
                    phis.push(t);
                }
            }
            phis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        let jac = area * r1.powi(dim as i32 - 1) * w1;
        let mut inner = zero;
        for pair in phis.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b <= a {
                continue;
            }
            let (mid, rad) = ((a + b) * half, (b - a) * half);
            for (xi, wi) in gx.iter().zip(&gw) {
                let phi = mid + rad * *xi;
                let (sn, cs) = phi.sin_cos();
                let sh = (phi * half).sin();
                let r2 = (lo2 + four * sh * sh).sqrt();
                let cosang = if r2 > zero { (r1 - d * cs) / r2 } else { T::one() };
                inner += rad * *wi * sn.powi(dim as i32 - 2) * f(r1, r2, cosang);
            }
        }
        total += jac * inner;
    }
    total
}

/// Ordinary least squares `y ≈ c0 + c1 x`; returns `(c1, c0, stderr(c1))`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    let se = if xs.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, icpt, se)
}

/// Fit `ln y ≈ c - k x + α ln x` and return `(k, α, c)`: an exponential rate
/// with an algebraic prefactor of unknown power.
pub fn exp_rate_with_power_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    // Normal equations for the basis (1, x, ln x).
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let phi = [1.0, x, x.ln()];
        let ly = y.ln();
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += phi[i] * phi[j];
            }
            b[i] += phi[i] * ly;
        }
    }
    let sol = solve3(a, b);
    (-sol[1], sol[2], sol[0])
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let mut s = b[r];
        for c in r + 1..3 {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    x
}

/// `(max - min) / |mean|` of a sequence.
pub fn relative_variation(ys: &[f64]) -> f64 {
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    (hi - lo) / mean.abs()
}

/// `n` geometrically spaced points from `a` to `b` inclusive.
pub fn geometric_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let q = (b / a).powf(1.0 / (n as f64 - 1.0));
    (0..n).map(|i| if i + 1 == n { b } else { a * q.powi(i as i32) }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for n in [1usize, 2, 5, 8, 12] {
            let (x, w) = gauss_legendre::<f64>(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let deg = 2 * n - 1;
            let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((q - exact).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn two_centre_gaussian_overlap() {
        // ∫ e^{-|x|²} e^{-|x-ξ|²} dx = (π/2)^{d/2} e^{-|ξ|²/2}
        for d in 1..=4usize {
            let sep = 1.7;
            let got = two_centre_integral::<f64>(d, sep, Centre::smooth(9.0), Centre::smooth(9.0), 10, |r1, r2, _| (-r1 * r1 - r2 * r2).exp());
            let exact = (std::f64::consts::PI / 2.0).powf(d as f64 / 2.0) * (-sep * sep / 2.0).exp();
            assert!((got - exact).abs() / exact < 1e-10, "d={d}: {got} vs {exact}");
        }
    }

    #[test]
    fn two_centre_gradient_product() {
        // ∫ ∇g(x)·∇g(x-ξ) for g = e^{-|x|²} in d = 3; by Fourier, equals
        // (π/2)^{3/2} e^{-a} (3 - 2a) with a = |ξ|²/2.
        let sep = 1.3f64;
        let got = two_centre_integral::<f64>(3, sep, Centre::smooth(9.0), Centre::smooth(9.0), 10, |r1, r2, c| {
            (2.0 * r1 * (-r1 * r1).exp()) * (2.0 * r2 * (-r2 * r2).exp()) * c
        });
        let a = sep * sep / 2.0;
        let exact = (std::f64::consts::PI / 2.0).powf(1.5) * (-a).exp() * (3.0 - 2.0 * a);
        assert!((got - exact).abs() / exact.abs() < 1e-9, "{got} vs {exact}");
    }

    #[test]
    fn two_centre_exponentials_with_cusps() {
        // Coincident centres: ∫ e^{-3|x|} dx = |S^{d-1}| Γ(d) / 3^d.
        for d in 1..=3usize {
            let got = two_centre_integral::<f64>(d, 0.0, Centre::smooth(30.0), Centre::smooth(30.0), 10, |r1, r2, _| {
                (-r1 - 2.0 * r2).exp()
            });
            let gamma = (1..d).map(|k| k as f64).product::<f64>();
            let exact = sphere_area::<f64>(d) * gamma / 3f64.powi(d as i32);
            assert!((got - exact).abs() < 1e-10 * exact, "d={d}: {got} vs {exact}");
        }
        // In d = 3, ∫ e^{-|x|} e^{-|x-ξ|} dx = π (1 + D + D²/3) e^{-D}.
        for dd in [0.5f64, 3.0, 12.0] {
            let got = two_centre_integral::<f64>(3, dd, Centre::smooth(60.0), Centre::smooth(60.0), 10, |r1, r2, _| {
                (-r1 - r2).exp()
            });
            let exact = std::f64::consts::PI * (1.0 + dd + dd * dd / 3.0) * (-dd).exp();
            assert!((got - exact).abs() < 1e-8 * exact, "D={dd}: {got} vs {exact}");
        }
    }

    #[test]
    fn two_centre_respects_kinks() {
        // Indicator of the unit ball at both centres, d = 3: lens volume.
        let kinks = [1.0];
        let c = Centre { reach: 1.0, kinks: &kinks };
        let dd = 1.2f64;
        let got = two_centre_integral::<f64>(3, dd, c, c, 10, |r1, r2, _| {
            if r1 <= 1.0 && r2 <= 1.0 { 1.0 } else { 0.0 }
        });
        let exact = std::f64::consts::PI / 12.0 * (4.0 + dd) * (2.0 - dd).powi(2);
        assert!((got - exact).abs() < 1e-10, "{got} vs {exact}");
    }

    #[test]
    fn fits_recover_parameters() {
        let xs: Vec<f64> = (0..20).map(|i| 4.0 + i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-1.5) * (-0.7 * x).exp()).collect();
        let (k, alpha, c) = exp_rate_with_power_fit(&xs, &ys);
        assert!((k - 0.7).abs() < 1e-9 && (alpha + 1.5).abs() < 1e-8 && (c - 3f64.ln()).abs() < 1e-8);
        let ly: Vec<f64> = xs.iter().map(|x| 2.0 - 0.3 * x).collect();
        let (s, i, se) = linear_fit(&xs, &ly);
        assert!((s + 0.3).abs() < 1e-12 && (i - 2.0).abs() < 1e-12 && se < 1e-12);
    }
}
