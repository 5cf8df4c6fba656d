//! Restarted GMRES for matrix-free linear operators.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    /// Target `||b - A x|| / ||b||`.
    pub rtol: f64,
    /// Krylov dimension before restart.
    pub restart: usize,
    /// Total operator applications.
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            rtol: 1e-6,
            restart: 60,
            max_iter: 240,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresResult {
    pub x: Vec<f64>,
    /// Relative residual estimated by the Arnoldi recurrence at exit.
    pub rel_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` from `x = 0` with modified Gram-Schmidt Arnoldi and
/// Givens rotations.
pub fn gmres<F>(mut apply: F, b: &[f64], opts: &GmresOptions) -> GmresResult
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return GmresResult {
            x,
            rel_residual: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let restart = opts.restart.max(1).min(n.max(1));
    let mut iterations = 0;
    let mut r = b.to_vec();
    let mut rel = 1.0;

    while iterations < opts.max_iter {
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= opts.rtol {
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];

        for j in 0..restart {
            if iterations >= opts.max_iter {
                break;
            }
            iterations += 1;
            let mut w = apply(&v[j]);
            let mut col = vec![0.0; j + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] = hij;
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= hij * vk;
                }
            }
            let wn = norm(&w);
            col[j + 1] = wn;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let d = col[j].hypot(col[j + 1]);
            let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (col[j] / d, col[j + 1] / d) };
            cs.push(c);
            sn.push(s);
            col[j] = d;
            col[j + 1] = 0.0;
            g.push(-s * g[j]);
            g[j] *= c;
            h.push(col);
            rel = g[j + 1].abs() / bnorm;
            if rel <= opts.rtol || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / wn).collect());
        }

        // back substitution on the triangular factor
        let k = h.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for (jj, yj) in y.iter().enumerate().skip(i + 1) {
                s -= h[jj][i] * yj;
            }
            y[i] = s / h[i][i];
        }
        for (yi, vi) in y.iter().zip(&v) {
            for (xk, vk) in x.iter_mut().zip(vi) {
                *xk += yi * vk;
            }
        }
        if rel <= opts.rtol {
            break;
        }
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    }
    GmresResult {
        x,
        rel_residual: rel,
        iterations,
        converged: rel <= opts.rtol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_system(n: usize, shift: f64, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |i, j| {
            let base: f64 = rng.random_range(-1.0..1.0) / (n as f64).sqrt();
            if i == j {
                base + shift
            } else {
                base
            }
        });
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        (a, b)
    }

    #[test]
    fn solves_nonsymmetric_system_against_lu() {
        let (a, b) = random_system(60, 3.0, 1);
        let opts = GmresOptions {
            rtol: 1e-12,
            restart: 60,
            max_iter: 60,
        };
        let res = gmres(|x| (&a * DVector::from_column_slice(x)).as_slice().to_vec(), b.as_slice(), &opts);
        assert!(res.converged);
        let oracle = a.clone().lu().solve(&b).unwrap();
        let err = (DVector::from_vec(res.x) - oracle).amax();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn restarts_still_converge() {
        let (a, b) = random_system(80, 4.0, 2);
        let opts = GmresOptions {
            rtol: 1e-10,
            restart: 8,
            max_iter: 400,
        };
        let res = gmres(|x| (&a * DVector::from_column_slice(x)).as_slice().to_vec(), b.as_slice(), &opts);
        assert!(res.converged && res.iterations > 8);
        let r = &b - &a * DVector::from_column_slice(&res.x);
        assert!(r.norm() / b.norm() <= 1e-9);
    }

    #[test]
    fn zero_rhs_and_iteration_cap() {
        let (a, _) = random_system(10, 0.0, 3);
        let zero = gmres(|x| (&a * DVector::from_column_slice(x)).as_slice().to_vec(), &[0.0; 10], &GmresOptions::default());
        assert!(zero.converged && zero.x.iter().all(|&v| v == 0.0));
        let (a, b) = random_system(50, 0.0, 4);
        let capped = gmres(
            |x| (&a * DVector::from_column_slice(x)).as_slice().to_vec(),
            b.as_slice(),
            &GmresOptions { rtol: 1e-14, restart: 5, max_iter: 5 },
        );
        assert!(!capped.converged && capped.iterations == 5);
    }
}
