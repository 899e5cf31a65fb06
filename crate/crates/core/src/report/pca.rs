use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Embedding2D, ReportError};

const OVERSAMPLE: usize = 6;
const POWER_ITERATIONS: usize = 30;
const BASIS_SEED: u64 = 0x5043_4132;

/// Top-2 principal axes of `x` (rows centred), by randomised subspace iteration
/// with a Rayleigh-Ritz step. Each axis is signed so its largest-magnitude
/// entry is positive.
fn principal_axes(x: &DMatrix<f64>) -> (DMatrix<f64>, [f64; 2]) {
    let d = x.ncols();
    let width = (2 + OVERSAMPLE).min(d);
    let mut rng = ChaCha8Rng::seed_from_u64(BASIS_SEED);
    let mut q = DMatrix::from_fn(d, width, |_, _| StandardNormal.sample(&mut rng));
    q = q.qr().q();
    for _ in 0..POWER_ITERATIONS {
        let z = x.transpose() * (x * &q);
        q = z.qr().q();
    }
    let xq = x * &q;
    let b = xq.transpose() * &xq;
    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let mut axes = DMatrix::zeros(d, 2);
    let mut values = [0.0; 2];
    for (c, &i) in order.iter().take(2).enumerate() {
        let mut v = &q * eig.eigenvectors.column(i);
        let lead = v.iter().copied().fold(0.0f64, |m, e| if e.abs() > m.abs() { e } else { m });
        if lead < 0.0 {
            v = -v;
        }
        axes.set_column(c, &v);
        values[c] = eig.eigenvalues[i].max(0.0);
    }
    (axes, values)
}

/// Projects `vectors` onto their top two principal components.
pub fn embed_pca(layer: usize, vectors: &[&[f32]], tags: &[String]) -> Result<Embedding2D, ReportError> {
    if vectors.len() < 3 {
        return Err(ReportError::Input("pca needs at least 3 vectors".into()));
    }
    if tags.len() != vectors.len() {
        return Err(ReportError::Input("one tag per vector required".into()));
    }
    let dim = vectors[0].len();
    if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
        return Err(ReportError::Input("vectors must share a non-zero dimension".into()));
    }
    let n = vectors.len();
    let mut mean = vec![0.0f64; dim];
    for v in vectors {
        for (m, &e) in mean.iter_mut().zip(v.iter()) {
            *m += e as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, dim, |r, c| vectors[r][c] as f64 - mean[c]);
    let total: f64 = x.iter().map(|v| v * v).sum();
    let mut degenerate = total == 0.0;
    let points = if degenerate {
        vec![[0.0, 0.0]; n]
    } else {
        let (axes, values) = principal_axes(&x);
        if values[0] <= 1e-12 * total {
            degenerate = true;
        }
        let p = &x * axes;
        (0..n).map(|r| [p[(r, 0)], p[(r, 1)]]).collect()
    };
    Ok(Embedding2D {
        layer,
        points,
        tags: tags.to_vec(),
        method: "pca".into(),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tags(n: usize) -> Vec<String> {
        vec!["t".to_string(); n]
    }

    fn pairwise(p: &[[f64; 2]]) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                out.push(((p[i][0] - p[j][0]).powi(2) + (p[i][1] - p[j][1]).powi(2)).sqrt());
            }
        }
        out
    }

    #[test]
    fn collinear_points_have_zero_second_coordinate() {
        let v: Vec<Vec<f32>> = (0..3).map(|i| (0..10).map(|j| (i * (j + 1)) as f32 * 0.1).collect()).collect();
        let refs: Vec<&[f32]> = v.iter().map(|x| x.as_slice()).collect();
        let e = embed_pca(0, &refs, &tags(3)).unwrap();
        for p in &e.points {
            assert!(p[1].abs() < 1e-6, "{p:?}");
        }
    }

    #[test]
    fn two_dimensional_data_is_rigidly_moved() {
        let v: Vec<Vec<f32>> = vec![vec![0.0, 0.0], vec![3.0, 1.0], vec![-1.0, 2.0], vec![0.5, -0.7]];
        let refs: Vec<&[f32]> = v.iter().map(|x| x.as_slice()).collect();
        let e = embed_pca(0, &refs, &tags(4)).unwrap();
        let orig: Vec<[f64; 2]> = v.iter().map(|x| [x[0] as f64, x[1] as f64]).collect();
        for (a, b) in pairwise(&orig).iter().zip(pairwise(&e.points)) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn planar_set_under_isometry_keeps_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let basis = DMatrix::<f64>::from_fn(100, 2, |_, _| StandardNormal.sample(&mut rng)).qr().q();
        let plane: Vec<[f64; 2]> = (0..30).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)]).collect();
        let v: Vec<Vec<f32>> = plane
            .iter()
            .map(|p| (0..100).map(|r| (basis[(r, 0)] * p[0] + basis[(r, 1)] * p[1] + 0.3) as f32).collect())
            .collect();
        let refs: Vec<&[f32]> = v.iter().map(|x| x.as_slice()).collect();
        let e = embed_pca(0, &refs, &tags(30)).unwrap();
        for (a, b) in pairwise(&plane).iter().zip(pairwise(&e.points)) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn identical_points_are_flagged() {
        let v = vec![vec![1.0f32; 5]; 4];
        let refs: Vec<&[f32]> = v.iter().map(|x| x.as_slice()).collect();
        let e = embed_pca(0, &refs, &tags(4)).unwrap();
        assert!(e.degenerate);
        assert!(e.points.iter().all(|p| *p == [0.0, 0.0]));
    }

    #[test]
    fn deterministic_and_sign_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<Vec<f32>> = (0..20).map(|_| (0..6).map(|_| rng.random::<f32>()).collect()).collect();
        let refs: Vec<&[f32]> = v.iter().map(|x| x.as_slice()).collect();
        let a = embed_pca(0, &refs, &tags(20)).unwrap();
        let b = embed_pca(0, &refs, &tags(20)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_vectors() {
        let v = [[0.0f32; 2]; 2];
        let refs: Vec<&[f32]> = v.iter().map(|x| x.as_slice()).collect();
        assert!(embed_pca(0, &refs, &tags(2)).is_err());
    }
}
