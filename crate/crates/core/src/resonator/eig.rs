//! Eigenpairs of the small upper-Hessenberg matrices produced by Arnoldi.

use num_complex::Complex64;

type C = Complex64;

/// Square matrix stored row-major.
#[derive(Debug, Clone)]
pub(crate) struct Dense {
    pub n: usize,
    pub a: Vec<C>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            a: vec![C::default(); n * n],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> C {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C) {
        self.a[i * self.n + j] = v;
    }
}

fn wilkinson_shift(a: C, b: C, c: C, d: C) -> C {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let (l1, l2) = ((a + d) * 0.5 + disc, (a + d) * 0.5 - disc);
    if (l1 - d).norm() < (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// All eigenvalues of an upper-Hessenberg matrix via shifted QR with Givens
/// rotations. Returns `None` if the iteration stalls.
pub(crate) fn hessenberg_eigenvalues(h: &Dense) -> Option<Vec<C>> {
    let n = h.n;
    let mut m = h.clone();
    let mut eig = vec![C::default(); n];
    let mut hi = n;
    let mut stall = 0usize;
    while hi > 0 {
        let top = hi - 1;
        // find the start of the active unreduced block
        let mut lo = top;
        while lo > 0 {
            let s = m.at(lo, lo).norm() + m.at(lo - 1, lo - 1).norm();
            if m.at(lo, lo - 1).norm() <= f64::EPSILON * s.max(f64::MIN_POSITIVE) {
                m.set(lo, lo - 1, C::default());
                break;
            }
            lo -= 1;
        }
        if lo == top {
            eig[top] = m.at(top, top);
            hi -= 1;
            stall = 0;
            continue;
        }
        stall += 1;
        if stall > 300 {
            return None;
        }
        let mut mu = wilkinson_shift(m.at(top - 1, top - 1), m.at(top - 1, top), m.at(top, top - 1), m.at(top, top));
        if stall % 11 == 0 {
            // exceptional shift to break cycles
            mu += C::new(0.75 * m.at(top, top - 1).norm(), 0.0);
        }
        for k in lo..=top {
            let v = m.at(k, k) - mu;
            m.set(k, k, v);
        }
        let mut rots = Vec::with_capacity(top - lo);
        for k in lo..top {
            let a = m.at(k, k);
            let b = m.at(k + 1, k);
            let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
            let (c, s) = if r == 0.0 { (C::new(1.0, 0.0), C::default()) } else { (a / r, b / r) };
            for j in k..=top {
                let x = m.at(k, j);
                let y = m.at(k + 1, j);
                m.set(k, j, c.conj() * x + s.conj() * y);
                m.set(k + 1, j, -s * x + c * y);
            }
            rots.push((c, s));
        }
        for (idx, &(c, s)) in rots.iter().enumerate() {
            let k = lo + idx;
            for i in lo..=(k + 2).min(top) {
                let x = m.at(i, k);
                let y = m.at(i, k + 1);
                m.set(i, k, x * c + y * s);
                m.set(i, k + 1, -x * s.conj() + y * c.conj());
            }
        }
        for k in lo..=top {
            let v = m.at(k, k) + mu;
            m.set(k, k, v);
        }
    }
    Some(eig)
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting; tiny
/// pivots are replaced so nearly singular systems (inverse iteration) still
/// return a usable direction.
fn solve(mut a: Dense, mut b: Vec<C>) -> Vec<C> {
    let n = a.n;
    let scale = a.a.iter().fold(0.0_f64, |m, z| m.max(z.norm())).max(f64::MIN_POSITIVE);
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a.at(i, k).norm().total_cmp(&a.at(j, k).norm()))
            .unwrap();
        if p != k {
            for j in 0..n {
                a.a.swap(k * n + j, p * n + j);
            }
            b.swap(k, p);
        }
        if a.at(k, k).norm() < f64::EPSILON * scale {
            a.set(k, k, C::new(f64::EPSILON * scale, 0.0));
        }
        let pivot = a.at(k, k);
        for i in k + 1..n {
            let f = a.at(i, k) / pivot;
            if f == C::default() {
                continue;
            }
            for j in k..n {
                let v = a.at(i, j) - f * a.at(k, j);
                a.set(i, j, v);
            }
            b[i] = b[i] - f * b[k];
        }
    }
    let mut x = vec![C::default(); n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= a.at(i, j) * x[j];
        }
        x[i] = acc / a.at(i, i);
    }
    x
}

fn normalize(v: &mut [C]) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|z| *z /= norm);
    }
}

/// Unit eigenvector for an (approximate) eigenvalue by inverse iteration.
pub(crate) fn eigenvector(h: &Dense, lambda: C) -> Vec<C> {
    let n = h.n;
    let scale = h.a.iter().fold(0.0_f64, |m, z| m.max(z.norm())).max(1e-300);
    let shift = lambda + C::new(1e-13 * scale, 1e-13 * scale);
    let mut shifted = h.clone();
    for i in 0..n {
        let v = shifted.at(i, i) - shift;
        shifted.set(i, i, v);
    }
    let mut x = vec![C::new(1.0, 0.0); n];
    normalize(&mut x);
    for _ in 0..3 {
        x = solve(shifted.clone(), x);
        normalize(&mut x);
    }
    x
}
