//! Small numerical kernels shared across modules: Gauss-Legendre rules,
//! golden-section minimization, and a complex banded LU with partial pivoting
//! used by the large-graph secular scan.

use num_complex::Complex64 as C64;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev-based initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // p_n(x) and derivative by recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        xs.iter().map(|x| mid + half * x).collect(),
        ws.iter().map(|w| w * half).collect(),
    )
}

/// Golden-section minimization of a unimodal function on `[a, b]` down to
/// bracket width `tol`; returns the midpoint of the final bracket and the
/// smallest observed value.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fc < fd { (c, fc) } else { (d, fd) };
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        let cand = if fc < fd { (c, fc) } else { (d, fd) };
        if cand.1 < best.1 {
            best = cand;
        }
    }
    (0.5 * (a + b), best.1)
}

/// Banded complex matrix with lower bandwidth `kl` and upper bandwidth `ku`.
/// Row `i` stores columns `[i - kl, i + kl + ku]` (the extra `kl`
/// superdiagonals absorb fill-in from partial pivoting).
#[derive(Clone, Debug)]
pub struct BandedMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    width: usize,
    data: Vec<C64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandedMatrix { n, kl, ku, width, data: vec![C64::new(0.0, 0.0); n * width] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku, "({i},{j}) outside band");
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        if j + self.kl < i || j > i + self.kl + self.ku {
            C64::new(0.0, 0.0)
        } else {
            self.data[self.idx(i, j)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// `A v` for a full-length vector.
    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.n);
        let mut out = vec![C64::new(0.0, 0.0); self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = C64::new(0.0, 0.0);
            for j in lo..=hi {
                acc += self.get(i, j) * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Adjoint (conjugate transpose) as a banded matrix with swapped bands.
    pub fn adjoint(&self) -> BandedMatrix {
        let mut out = BandedMatrix::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for j in lo..=hi {
                let v = self.get(i, j);
                if v != C64::new(0.0, 0.0) {
                    out.set(j, i, v.conj());
                }
            }
        }
        out
    }

    /// LU factorization with partial pivoting, in place.
    pub fn lu(mut self) -> Option<BandedLu> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        let mut ipiv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut pmax = self.get(k, k).norm_sqr();
            for r in (k + 1)..=last {
                let v = self.get(r, k).norm_sqr();
                if v > pmax {
                    pmax = v;
                    p = r;
                }
            }
            if pmax == 0.0 {
                return None;
            }
            ipiv[k] = p;
            if p != k {
                // both rows' storage covers columns [k, k + kl + ku]
                let hi = (k + kl + ku).min(n - 1);
                for j in k..=hi {
                    let a = self.get(k, j);
                    let b = self.get(p, j);
                    self.set(k, j, b);
                    self.set(p, j, a);
                }
            }
            let piv = self.get(k, k);
            let hi = (k + kl + ku).min(n - 1);
            for r in (k + 1)..=last {
                let m = self.get(r, k) / piv;
                self.set(r, k, m);
                if m != C64::new(0.0, 0.0) {
                    for j in (k + 1)..=hi {
                        let v = self.get(k, j);
                        if v != C64::new(0.0, 0.0) {
                            let idx = self.idx(r, j);
                            self.data[idx] -= m * v;
                        }
                    }
                }
            }
        }
        Some(BandedLu { mat: self, ipiv })
    }
}

/// Factored form returned by [`BandedMatrix::lu`].
pub struct BandedLu {
    mat: BandedMatrix,
    ipiv: Vec<usize>,
}

impl BandedLu {
    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [C64]) {
        let n = self.mat.n;
        let kl = self.mat.kl;
        let ku = self.mat.ku;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.ipiv[k];
            if p != k {
                b.swap(k, p);
            }
            let last = (k + kl).min(n - 1);
            for r in (k + 1)..=last {
                let m = self.mat.get(r, k);
                if m != C64::new(0.0, 0.0) {
                    b[r] = b[r] - m * b[k];
                }
            }
        }
        for k in (0..n).rev() {
            let hi = (k + kl + ku).min(n - 1);
            let mut s = b[k];
            for j in (k + 1)..=hi {
                let v = self.mat.get(k, j);
                if v != C64::new(0.0, 0.0) {
                    s -= v * b[j];
                }
            }
            b[k] = s / self.mat.get(k, k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [2usize, 5, 10, 16] {
            let (xs, ws) = gauss_legendre(n);
            // exact for degree 2n-1
            for deg in 0..(2 * n) {
                let approx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-12, "n={n} deg={deg}");
            }
        }
        let (xs, ws) = gauss_legendre_on(12, 0.0, std::f64::consts::PI);
        let s: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.sin()).sum();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        // location accuracy at a smooth minimum is limited to about sqrt(eps)
        let (x, fx) = golden_min(|x| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-15);
    }

    #[test]
    fn banded_lu_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &(n, kl, ku) in &[(8usize, 2usize, 3usize), (30, 4, 4), (50, 6, 2)] {
            let mut band = BandedMatrix::zeros(n, kl, ku);
            let mut dense = nalgebra::DMatrix::<C64>::zeros(n, n);
            for i in 0..n {
                for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                    let v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    band.set(i, j, v);
                    dense[(i, j)] = v;
                }
            }
            let rhs: Vec<C64> =
                (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let lu = band.lu().expect("nonsingular");
            let mut x = rhs.clone();
            lu.solve(&mut x);
            let sol = dense
                .lu()
                .solve(&nalgebra::DVector::from_vec(rhs))
                .expect("nonsingular");
            for i in 0..n {
                assert!((x[i] - sol[i]).norm() < 1e-9, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn banded_adjoint_solves_adjoint_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, kl, ku) = (20usize, 3usize, 2usize);
        let mut band = BandedMatrix::zeros(n, kl, ku);
        let mut dense = nalgebra::DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                band.set(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let rhs: Vec<C64> =
            (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let lu = band.adjoint().lu().expect("nonsingular");
        let mut x = rhs.clone();
        lu.solve(&mut x);
        let sol = dense
            .adjoint()
            .lu()
            .solve(&nalgebra::DVector::from_vec(rhs))
            .expect("nonsingular");
        for i in 0..n {
            assert!((x[i] - sol[i]).norm() < 1e-9);
        }
    }
}
