//! Small dense linear algebra kernels: LU with partial pivoting over real or
//! complex fields, and the real nonsymmetric eigenvalue problem via balancing,
//! Hessenberg reduction and the Francis double-shift QR iteration.

use ndarray::{Array1, Array2};
use num_complex::Complex;
use num_traits::{Float, Zero};

use crate::error::{Error, Result};
use crate::scalar::{Field, Real};

/// LU factorization `P A = L U` with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<F: Field> {
    lu: Array2<F>,
    perm: Vec<usize>,
    min_pivot: F::Real,
    max_pivot: F::Real,
}

impl<F: Field> Lu<F> {
    pub fn new(mut a: Array2<F>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidArgument("LU requires a square matrix".into()));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut min_pivot = F::Real::infinity();
        let mut max_pivot = F::Real::zero();
        for k in 0..n {
            let mut p = k;
            let mut best = a[[k, k]].modulus();
            for i in k + 1..n {
                let v = a[[i, k]].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == F::Real::zero() || !best.is_finite() {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    a.swap([k, j], [p, j]);
                }
                perm.swap(k, p);
            }
            min_pivot = min_pivot.min(best);
            max_pivot = max_pivot.max(best);
            let pivot = a[[k, k]];
            for i in k + 1..n {
                let factor = a[[i, k]] / pivot;
                a[[i, k]] = factor;
                if factor.modulus() != F::Real::zero() {
                    for j in k + 1..n {
                        let akj = a[[k, j]];
                        a[[i, j]] -= factor * akj;
                    }
                }
            }
        }
        Ok(Lu {
            lu: a,
            perm,
            min_pivot,
            max_pivot,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Smallest pivot modulus.
    pub fn min_pivot(&self) -> F::Real {
        self.min_pivot
    }

    /// Ratio of largest to smallest pivot modulus; a cheap singularity indicator.
    pub fn pivot_ratio(&self) -> F::Real {
        self.max_pivot / self.min_pivot
    }

    pub fn solve(&self, b: &Array1<F>) -> Array1<F> {
        let n = self.dim();
        let mut x: Array1<F> = Array1::from_iter(self.perm.iter().map(|&p| b[p]));
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s / self.lu[[i, i]];
        }
        x
    }

    pub fn inverse(&self) -> Array2<F> {
        let n = self.dim();
        let mut inv = Array2::from_elem((n, n), F::zero());
        let mut e = Array1::from_elem(n, F::zero());
        for j in 0..n {
            e.fill(F::zero());
            e[j] = F::one();
            let col = self.solve(&e);
            inv.column_mut(j).assign(&col);
        }
        inv
    }
}

/// Maximum absolute column sum.
pub fn norm1<F: Field>(a: &Array2<F>) -> F::Real {
    let mut best = F::Real::zero();
    for col in a.columns() {
        let s = col.iter().fold(F::Real::zero(), |acc, v| acc + v.modulus());
        best = best.max(s);
    }
    best
}

/// One-norm condition number `||A||_1 ||A^{-1}||_1`; infinite when singular.
pub fn condition_1norm<F: Field>(a: &Array2<F>) -> F::Real {
    match Lu::new(a.clone()) {
        Ok(lu) => norm1(a) * norm1(&lu.inverse()),
        Err(_) => F::Real::infinity(),
    }
}

pub fn solve<F: Field>(a: Array2<F>, b: &Array1<F>) -> Result<Array1<F>> {
    Ok(Lu::new(a)?.solve(b))
}

/// All eigenvalues of a real square matrix, unordered. Complex eigenvalues
/// come out in exact conjugate pairs.
pub fn eigenvalues<T: Real>(a: &Array2<T>) -> Result<Vec<Complex<T>>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidArgument("eigenvalues of a non-square matrix".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let mut h = a.clone();
    balance(&mut h);
    to_hessenberg(&mut h);
    hessenberg_qr(h)
}

/// Diagonal similarity scaling by powers of two so that row and column norms
/// are comparable.
fn balance<T: Real>(a: &mut Array2<T>) {
    let n = a.nrows();
    let radix = T::lit(2.0);
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = T::zero();
            let mut c = T::zero();
            for j in 0..n {
                if j != i {
                    c += a[[j, i]].abs();
                    r += a[[i, j]].abs();
                }
            }
            if c != T::zero() && r != T::zero() {
                let mut g = r / radix;
                let mut f = T::one();
                let s = c + r;
                while c < g {
                    f *= radix;
                    c *= sqrdx;
                }
                g = r * radix;
                while c > g {
                    f /= radix;
                    c /= sqrdx;
                }
                if (c + r) / f < T::lit(0.95) * s {
                    done = false;
                    let ginv = T::one() / f;
                    for j in 0..n {
                        a[[i, j]] *= ginv;
                    }
                    for j in 0..n {
                        a[[j, i]] *= f;
                    }
                }
            }
        }
    }
}

/// Reduction to upper Hessenberg form by stabilized elementary similarity
/// transformations. Entries below the subdiagonal are zeroed on exit.
fn to_hessenberg<T: Real>(a: &mut Array2<T>) {
    let n = a.nrows();
    if n < 3 {
        return;
    }
    for m in 1..n - 1 {
        let mut x = T::zero();
        let mut piv = m;
        for j in m..n {
            if a[[j, m - 1]].abs() > x.abs() {
                x = a[[j, m - 1]];
                piv = j;
            }
        }
        if piv != m {
            for j in (m - 1)..n {
                a.swap([piv, j], [m, j]);
            }
            for j in 0..n {
                a.swap([j, piv], [j, m]);
            }
        }
        if x != T::zero() {
            for i in m + 1..n {
                let mut y = a[[i, m - 1]];
                if y != T::zero() {
                    y /= x;
                    a[[i, m - 1]] = y;
                    for j in m..n {
                        let amj = a[[m, j]];
                        a[[i, j]] -= y * amj;
                    }
                    for j in 0..n {
                        let aji = a[[j, i]];
                        a[[j, m]] += y * aji;
                    }
                }
            }
        }
    }
    for i in 2..n {
        for j in 0..i - 1 {
            a[[i, j]] = T::zero();
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix. Indices inside are
/// 1-based to keep the deflation bookkeeping readable.
fn hessenberg_qr<T: Real>(h: Array2<T>) -> Result<Vec<Complex<T>>> {
    const MAX_ITS: usize = 60;
    let n = h.nrows();
    let w_ = n + 1;
    let mut a = vec![T::zero(); w_ * w_];
    for i in 0..n {
        for j in 0..n {
            a[(i + 1) * w_ + (j + 1)] = h[[i, j]];
        }
    }
    let ix = |i: usize, j: usize| i * w_ + j;
    let mut wr = vec![T::zero(); w_];
    let mut wi = vec![T::zero(); w_];

    let mut anorm = T::zero();
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += a[ix(i, j)].abs();
        }
    }
    let eps = T::epsilon();
    let half = T::lit(0.5);
    let mut nn = n;
    let mut t = T::zero();
    while nn >= 1 {
        let mut its = 0usize;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a[ix(l - 1, l - 1)].abs() + a[ix(l, l)].abs();
                if s == T::zero() {
                    s = anorm;
                }
                if a[ix(l, l - 1)].abs() <= eps * s {
                    a[ix(l, l - 1)] = T::zero();
                    break;
                }
                l -= 1;
            }
            let mut x = a[ix(nn, nn)];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = T::zero();
                nn -= 1;
            } else {
                let mut y = a[ix(nn - 1, nn - 1)];
                let mut w = a[ix(nn, nn - 1)] * a[ix(nn - 1, nn)];
                if l == nn - 1 {
                    let p = half * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= T::zero() {
                        z = p + z.copysign(p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != T::zero() {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = T::zero();
                        wi[nn] = T::zero();
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                } else {
                    if its == MAX_ITS {
                        return Err(Error::EigenFailure);
                    }
                    if its % 10 == 0 && its > 0 {
                        // exceptional shift
                        t += x;
                        for i in 1..=nn {
                            a[ix(i, i)] -= x;
                        }
                        let s = a[ix(nn, nn - 1)].abs() + a[ix(nn - 1, nn - 2)].abs();
                        x = T::lit(0.75) * s;
                        y = x;
                        w = T::lit(-0.4375) * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    let (mut p, mut q, mut r);
                    loop {
                        let z = a[ix(m, m)];
                        r = x - z;
                        let s = y - z;
                        p = (r * s - w) / a[ix(m + 1, m)] + a[ix(m, m + 1)];
                        q = a[ix(m + 1, m + 1)] - z - r - s;
                        r = a[ix(m + 2, m + 1)];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[ix(m, m - 1)].abs() * (q.abs() + r.abs());
                        let v = p.abs()
                            * (a[ix(m - 1, m - 1)].abs() + z.abs() + a[ix(m + 1, m + 1)].abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m + 2..=nn {
                        a[ix(i, i - 2)] = T::zero();
                        if i != m + 2 {
                            a[ix(i, i - 3)] = T::zero();
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = a[ix(k, k - 1)];
                            q = a[ix(k + 1, k - 1)];
                            r = T::zero();
                            if k != nn - 1 {
                                r = a[ix(k + 2, k - 1)];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != T::zero() {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = (p * p + q * q + r * r).sqrt().copysign(p);
                        if s != T::zero() {
                            if k == m {
                                if l != m {
                                    a[ix(k, k - 1)] = -a[ix(k, k - 1)];
                                }
                            } else {
                                a[ix(k, k - 1)] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            let z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                let mut pp = a[ix(k, j)] + q * a[ix(k + 1, j)];
                                if k != nn - 1 {
                                    pp += r * a[ix(k + 2, j)];
                                    a[ix(k + 2, j)] -= pp * z;
                                }
                                a[ix(k + 1, j)] -= pp * y;
                                a[ix(k, j)] -= pp * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                let mut pp = x * a[ix(i, k)] + y * a[ix(i, k + 1)];
                                if k != nn - 1 {
                                    pp += z * a[ix(i, k + 2)];
                                    a[ix(i, k + 2)] -= pp * r;
                                }
                                a[ix(i, k + 1)] -= pp * q;
                                a[ix(i, k)] -= pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 2 || l + 1 >= nn {
                break;
            }
        }
    }
    let out: Vec<Complex<T>> = (1..=n).map(|i| Complex::new(wr[i], wi[i])).collect();
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenFailure);
    }
    Ok(out)
}
