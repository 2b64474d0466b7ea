//! Independent numerical oracles for the relsen test suites.
//!
//! Everything in this crate is deliberately written from scratch (dense
//! Gaussian elimination, conjugate gradient, simplex projections, an
//! equality-constrained Newton solver) so that tests can check the engine's
//! closed-form and specialized solvers against a second, unrelated route.
//! This crate must never depend on `relsen`.

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot is (numerically) zero.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot_row][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        let (upper, lower) = m.split_at_mut(col + 1);
        let pivot = &upper[col];
        let pivot_rhs = rhs[col];
        for (row, r) in lower.iter_mut().zip(rhs[col + 1..].iter_mut()) {
            let factor = row[col] / pivot[col];
            if factor == 0.0 {
                continue;
            }
            for (target, source) in row[col..].iter_mut().zip(&pivot[col..]) {
                *target -= factor * source;
            }
            *r -= factor * pivot_rhs;
        }
    }

    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Ordinary least squares `targets ~ rows * w + b` via explicitly assembled
/// normal equations and [`gauss_solve`]. Returns `(weights, bias)`.
pub fn normal_equations_fit(rows: &[Vec<f64>], targets: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = rows.len();
    assert!(n == targets.len() && n > 0);
    let d = rows[0].len();
    // Augment with an intercept column.
    let dim = d + 1;
    let mut ata = vec![vec![0.0; dim]; dim];
    let mut atb = vec![0.0; dim];
    for (row, &y) in rows.iter().zip(targets) {
        let mut aug = row.clone();
        aug.push(1.0);
        for i in 0..dim {
            for j in 0..dim {
                ata[i][j] += aug[i] * aug[j];
            }
            atb[i] += aug[i] * y;
        }
    }
    let sol = gauss_solve(&ata, &atb)?;
    let (weights, bias) = sol.split_at(d);
    Some((weights.to_vec(), bias[0]))
}

/// Minimize an unconstrained convex *quadratic* given only its gradient.
///
/// Uses conjugate gradient where matrix-vector products are recovered from
/// gradient differences (`A d = grad(x + d) - grad(x)`, exact for affine
/// gradients). Converges to machine precision for symmetric positive
/// definite quadratics.
pub fn minimize_quadratic_cg<G>(grad: G, x0: &[f64], tol: f64, max_iter: usize) -> Vec<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let g0 = grad(&x);
    let mut r: Vec<f64> = g0.iter().map(|g| -g).collect();
    let mut p = r.clone();
    let mut rs_old: f64 = r.iter().map(|v| v * v).sum();

    for _ in 0..max_iter.max(n) {
        if rs_old.sqrt() < tol {
            break;
        }
        // A p via gradient difference at the current iterate.
        let gx = grad(&x);
        let shifted: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + pi).collect();
        let gs = grad(&shifted);
        let ap: Vec<f64> = gs.iter().zip(&gx).map(|(a, b)| a - b).collect();

        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rs_old / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        for i in 0..n {
            p[i] = r[i] + (rs_new / rs_old) * p[i];
        }
        rs_old = rs_new;
    }
    x
}

/// Euclidean projection onto the probability simplex `{f: f >= 0, sum f = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projected gradient descent with a Barzilai-Borwein step seed and
/// monotone Armijo backtracking. `project` must map any point onto the
/// feasible set. Stops when the natural residual `||x - P(x - g)||_inf`
/// drops below `tol`.
pub fn projected_gradient<V, G, P>(
    value: V,
    grad: G,
    project: P,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Vec<f64>
where
    V: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = project(x0);
    let mut fx = value(&x);
    let mut g = grad(&x);
    let mut step: f64 = 1.0;

    for _ in 0..max_iter {
        let full: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - gi).collect();
        let residual = project(&full)
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        if residual < tol {
            break;
        }

        let mut s = step.clamp(1e-12, 1e12);
        let mut accepted = false;
        for _ in 0..80 {
            let trial_raw: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - s * gi).collect();
            let trial = project(&trial_raw);
            let dist2: f64 = trial.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist2 == 0.0 {
                break;
            }
            let ft = value(&trial);
            if ft.is_finite() && ft <= fx - 1e-4 / s * dist2 {
                let g_new = grad(&trial);
                // BB step from the accepted displacement.
                let sy: f64 = trial
                    .iter()
                    .zip(&x)
                    .zip(g_new.iter().zip(&g))
                    .map(|((xn, xo), (gn, go))| (xn - xo) * (gn - go))
                    .sum();
                step = if sy > 0.0 { dist2 / sy } else { s * 2.0 };
                x = trial;
                fx = ft;
                g = g_new;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    x
}

/// Minimize `-sum_i a[i] * ln(f[i])` over the probability simplex by an
/// equality-constrained Newton (Lagrangian/KKT) iteration started from the
/// uniform point. Requires all `a[i] > 0`; the optimum is then interior and
/// the iteration converges quadratically.
pub fn min_weighted_neg_log_on_simplex(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    assert!(n > 0 && a.iter().all(|&v| v > 0.0));
    let mut f = vec![1.0 / n as f64; n];
    let mut nu = a.iter().sum::<f64>(); // multiplier estimate

    let kkt_norm = |f: &[f64], nu: f64| -> f64 {
        let mut m = (f.iter().sum::<f64>() - 1.0).abs();
        for i in 0..n {
            m = m.max((-a[i] / f[i] + nu).abs());
        }
        m
    };

    for _ in 0..100 {
        if kkt_norm(&f, nu) < 1e-13 {
            break;
        }
        // Assemble the KKT system [H 1; 1^T 0] [d; dnu] = [-g - nu 1; 1 - sum f].
        let dim = n + 1;
        let mut m = vec![vec![0.0; dim]; dim];
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            m[i][i] = a[i] / (f[i] * f[i]);
            m[i][n] = 1.0;
            m[n][i] = 1.0;
            rhs[i] = a[i] / f[i] - nu;
        }
        rhs[n] = 1.0 - f.iter().sum::<f64>();
        let Some(delta) = gauss_solve(&m, &rhs) else {
            break;
        };

        // Fraction-to-boundary then backtracking on the KKT residual.
        let mut t: f64 = 1.0;
        for i in 0..n {
            if delta[i] < 0.0 {
                t = t.min(-0.99 * f[i] / delta[i]);
            }
        }
        let base = kkt_norm(&f, nu);
        let mut improved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = f.iter().zip(&delta).map(|(fi, di)| fi + t * di).collect();
            let cand_nu = nu + t * delta[n];
            if cand.iter().all(|&v| v > 0.0) && kkt_norm(&cand, cand_nu) < base {
                f = cand;
                nu = cand_nu;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    f
}

/// Unbiased (n-1 denominator) sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    assert!(n >= 2);
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
}

/// Unbiased sample standard deviation.
pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}
