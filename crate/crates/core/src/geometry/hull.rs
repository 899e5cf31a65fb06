//! Projection of a point onto the convex hull of a few neighbours.
//!
//! With `y_i = x_i - x` and `G = Y Y^T` the problem is `min a^T G a` over the
//! probability simplex. Accelerated projected gradient gets close to the
//! optimum; an active-set solve of the equality-constrained problem on the
//! support then makes the KKT conditions hold to rounding.

use nalgebra::{DMatrix, DVector};

use super::GeometryError;

/// KKT residual accepted as converged.
pub const KKT_TOLERANCE: f64 = 1e-6;
/// Projected-gradient iteration cap.
pub const MAX_ITERATIONS: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct HullProjection {
    /// Caller-supplied ids of the neighbours, aligned with `alpha`.
    pub indices: Vec<usize>,
    /// Convex weights: non-negative, summing to 1.
    pub alpha: Vec<f64>,
    pub point: Vec<f64>,
    /// `||point - x||_2`.
    pub distance: f64,
    /// Scaled KKT residual of `alpha`.
    pub residual: f64,
    pub iterations: usize,
}

/// Euclidean projection onto `{a : a >= 0, sum a = 1}` by sorting.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn gram(x: &[f64], neighbours: &[&[f32]]) -> DMatrix<f64> {
    let k = neighbours.len();
    let y: Vec<Vec<f64>> = neighbours
        .iter()
        .map(|n| n.iter().zip(x).map(|(&a, &b)| a as f64 - b).collect())
        .collect();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v: f64 = y[i].iter().zip(&y[j]).map(|(a, b)| a * b).sum();
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

fn largest_eigenvalue(g: &DMatrix<f64>) -> f64 {
    let k = g.nrows();
    let mut v = DVector::from_element(k, 1.0 / (k as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = g * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm;
        v = w / norm;
        if (next - lambda).abs() <= 1e-12 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

/// `max(|g_i - mu|` on the support, `max(0, mu - g_i)` everywhere`)` with
/// `g = 2 G a` and `mu = a . g`, scaled by `max(1, max_i G_ii)`.
pub fn kkt_residual(g: &DMatrix<f64>, alpha: &[f64]) -> f64 {
    let a = DVector::from_column_slice(alpha);
    let grad = (g * &a) * 2.0;
    let mu: f64 = alpha.iter().zip(grad.iter()).map(|(a, g)| a * g).sum();
    let mut r: f64 = 0.0;
    for (i, &gi) in grad.iter().enumerate() {
        if alpha[i] > 0.0 {
            r = r.max((gi - mu).abs());
        }
        r = r.max(mu - gi);
    }
    let scale = (0..g.nrows()).map(|i| g[(i, i)]).fold(1.0f64, f64::max);
    r / scale
}

fn objective(g: &DMatrix<f64>, a: &[f64]) -> f64 {
    let v = DVector::from_column_slice(a);
    v.dot(&(g * &v))
}

/// Minimiser of `a^T G a` subject to `sum a = 1` on `support`; other coordinates are 0.
fn solve_on_support(g: &DMatrix<f64>, support: &[usize]) -> Option<Vec<f64>> {
    let s = support.len();
    let mut m = DMatrix::zeros(s + 1, s + 1);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            m[(a, b)] = 2.0 * g[(i, j)];
        }
        m[(a, s)] = 1.0;
        m[(s, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(s + 1);
    rhs[s] = 1.0;
    let sol = m.svd(true, true).solve(&rhs, 1e-12).ok()?;
    let mut alpha = vec![0.0; g.nrows()];
    for (a, &i) in support.iter().enumerate() {
        alpha[i] = sol[a];
    }
    alpha.iter().all(|v| v.is_finite()).then_some(alpha)
}

/// Active-set refinement from the support of `start`.
fn polish(g: &DMatrix<f64>, start: &[f64]) -> Option<Vec<f64>> {
    let k = g.nrows();
    let mut support: Vec<usize> = (0..k).filter(|&i| start[i] > 1e-10).collect();
    if support.is_empty() {
        return None;
    }
    for _ in 0..2 * k + 2 {
        let mut alpha = solve_on_support(g, &support)?;
        let negative: Vec<usize> = support.iter().copied().filter(|&i| alpha[i] < 0.0).collect();
        if !negative.is_empty() {
            if negative.len() == support.len() {
                return None;
            }
            support.retain(|i| !negative.contains(i));
            continue;
        }
        for v in alpha.iter_mut() {
            *v = v.max(0.0);
        }
        let total: f64 = alpha.iter().sum();
        for v in alpha.iter_mut() {
            *v /= total;
        }
        if kkt_residual(g, &alpha) <= KKT_TOLERANCE {
            return Some(alpha);
        }
        // add the coordinate whose gradient most undercuts the support level
        let a = DVector::from_column_slice(&alpha);
        let grad = g * &a;
        let entering = (0..k)
            .filter(|i| !support.contains(i))
            .min_by(|&i, &j| grad[i].total_cmp(&grad[j]))?;
        support.push(entering);
        support.sort_unstable();
    }
    None
}

fn build(x: &[f64], neighbours: &[&[f32]], indices: &[usize], alpha: Vec<f64>, residual: f64, iterations: usize) -> HullProjection {
    let mut point = vec![0.0f64; x.len()];
    for (a, n) in alpha.iter().zip(neighbours) {
        if *a != 0.0 {
            for (p, &v) in point.iter_mut().zip(n.iter()) {
                *p += a * v as f64;
            }
        }
    }
    let distance = point.iter().zip(x).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    HullProjection {
        indices: indices.to_vec(),
        alpha,
        point,
        distance,
        residual,
        iterations,
    }
}

/// Projects `x` onto the hull of `neighbours`. `indices` label the neighbours in the result.
pub fn project_to_hull(x: &[f64], neighbours: &[&[f32]], indices: &[usize]) -> Result<HullProjection, GeometryError> {
    let k = neighbours.len();
    if k == 0 {
        return Err(GeometryError::Empty("hull projection needs at least one neighbour"));
    }
    if indices.len() != k || neighbours.iter().any(|n| n.len() != x.len()) {
        return Err(GeometryError::Dimension);
    }
    if x.iter().any(|v| !v.is_finite()) || neighbours.iter().any(|n| n.iter().any(|v| !v.is_finite())) {
        return Err(GeometryError::NonFinite);
    }
    let g = gram(x, neighbours);
    let lipschitz = 2.0 * largest_eigenvalue(&g) * 1.05;
    let mut alpha = vec![1.0 / k as f64; k];
    let mut best = (kkt_residual(&g, &alpha), alpha.clone());
    let mut iterations = 0;
    if lipschitz > 0.0 && best.0 > KKT_TOLERANCE {
        let step = 1.0 / lipschitz;
        let mut prev = alpha.clone();
        let mut t = 1.0f64;
        let mut f_prev = objective(&g, &alpha);
        while iterations < MAX_ITERATIONS {
            iterations += 1;
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            let y: Vec<f64> = alpha.iter().zip(&prev).map(|(a, p)| a + beta * (a - p)).collect();
            let grad = &g * DVector::from_column_slice(&y) * 2.0;
            let moved: Vec<f64> = y.iter().zip(grad.iter()).map(|(v, gr)| v - step * gr).collect();
            let next = project_simplex(&moved);
            let f_next = objective(&g, &next);
            prev = std::mem::replace(&mut alpha, next);
            t = t_next;
            // restart momentum when the objective rises
            if f_next > f_prev {
                t = 1.0;
                prev = alpha.clone();
            }
            f_prev = f_next;
            if iterations % 10 == 0 || iterations == MAX_ITERATIONS {
                let r = kkt_residual(&g, &alpha);
                if r < best.0 {
                    best = (r, alpha.clone());
                }
                if r <= KKT_TOLERANCE {
                    break;
                }
                if iterations % 50 == 0 {
                    if let Some(p) = polish(&g, &alpha) {
                        best = (kkt_residual(&g, &p), p);
                        break;
                    }
                }
            }
        }
    }
    if best.0 > 0.0 {
        if let Some(p) = polish(&g, &best.1) {
            let r = kkt_residual(&g, &p);
            if r <= best.0 {
                best = (r, p);
            }
        }
    }
    let (residual, alpha) = best;
    let proj = build(x, neighbours, indices, alpha, residual, iterations);
    if residual > KKT_TOLERANCE {
        return Err(GeometryError::NotConverged {
            residual,
            best: Box::new(proj),
        });
    }
    Ok(proj)
}
