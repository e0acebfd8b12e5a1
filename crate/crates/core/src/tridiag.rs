//! Symmetric tridiagonal eigenvalues by Sturm-sequence bisection, eigenvectors
//! by inverse iteration, and a partially pivoted tridiagonal solver.

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly below
/// `lambda` (count of negative pivots in the LDL^T factorization of T - lambda I).
pub fn sturm_count(diag: &[f64], off: &[f64], lambda: f64) -> usize {
    let n = diag.len();
    if n == 0 {
        return 0;
    }
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = 0.0;
    for i in 0..n {
        q = if i == 0 {
            diag[0] - lambda
        } else {
            diag[i] - lambda - off[i - 1] * off[i - 1] / q
        };
        if q.abs() < tiny {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let r = if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - l - r);
        hi = hi.max(diag[i] + l + r);
    }
    (lo, hi)
}

/// The `k` smallest eigenvalues in ascending order.
pub fn smallest_eigenvalues(diag: &[f64], off: &[f64], k: usize) -> Vec<f64> {
    let n = diag.len();
    let k = k.min(n);
    let (glo, ghi) = gershgorin(diag, off);
    let pad = 1e-12 * (glo.abs().max(ghi.abs()).max(1.0));
    let (glo, ghi) = (glo - pad, ghi + pad);

    let mut out = Vec::with_capacity(k);
    let mut lo_prev = glo;
    for idx in 0..k {
        let mut a = lo_prev;
        let mut b = ghi;
        // Shrink the upper end quickly: doubling search from `a`.
        let mut step = (b - a).abs().max(1.0) * 1e-6;
        loop {
            let trial = a + step;
            if trial >= b {
                break;
            }
            if sturm_count(diag, off, trial) > idx {
                b = trial;
                break;
            }
            step *= 2.0;
        }
        for _ in 0..300 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if sturm_count(diag, off, mid) > idx {
                b = mid;
            } else {
                a = mid;
            }
        }
        let lam = 0.5 * (a + b);
        out.push(lam);
        lo_prev = a;
    }
    out
}

/// LU factorization with partial pivoting of a general tridiagonal matrix,
/// stored as sub-diagonal `dl`, diagonal `d`, super-diagonal `du`.
#[derive(Debug, Clone)]
pub struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    ipiv: Vec<bool>,
}

impl TridiagLu {
    pub fn factor(dl: &[f64], d: &[f64], du: &[f64]) -> Self {
        let n = d.len();
        let mut dl = dl.to_vec();
        let mut d = d.to_vec();
        let mut du = du.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut ipiv = vec![false; n];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                // no interchange
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                ipiv[i] = true;
            }
        }
        Self {
            dl,
            d,
            du,
            du2,
            ipiv,
        }
    }

    /// Solve in place. Zero pivots are replaced by a tiny value, which is the
    /// behaviour wanted for inverse iteration at a converged shift.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        let tiny = f64::EPSILON * 1e-3;
        for i in 0..n.saturating_sub(1) {
            if self.ipiv[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.dl[i] * b[i];
        }
        let piv = |v: f64| {
            if v.abs() < tiny {
                if v < 0.0 {
                    -tiny
                } else {
                    tiny
                }
            } else {
                v
            }
        };
        b[n - 1] /= piv(self.d[n - 1]);
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / piv(self.d[n - 2]);
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / piv(self.d[i]);
        }
    }
}

/// Eigenvector of the symmetric tridiagonal matrix for the (already accurate)
/// eigenvalue `lambda`, unit Euclidean norm.
pub fn inverse_iteration(diag: &[f64], off: &[f64], lambda: f64, seed: u64) -> Vec<f64> {
    let n = diag.len();
    let shifted: Vec<f64> = diag.iter().map(|d| d - lambda).collect();
    let lu = TridiagLu::factor(off, &shifted, off);
    // Deterministic, non-degenerate start vector.
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            0.5 + ((state >> 11) as f64 / (1u64 << 53) as f64)
        })
        .collect();
    for _ in 0..4 {
        lu.solve(&mut v);
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
    }
    v
}
