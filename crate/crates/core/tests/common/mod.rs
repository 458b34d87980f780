#![allow(dead_code)]

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

/// Normal-equations least squares via Gauss-Jordan on the augmented system.
pub fn least_squares(x: &Array2<f64>, y: &Array1<f64>) -> Vec<f64> {
    let (n, p) = x.dim();
    let mut a = Array2::<f64>::ones((n, p + 1));
    a.slice_mut(s![.., 1..]).assign(x);
    let ata = a.t().dot(&a);
    let aty = a.t().dot(y);
    let m = p + 1;
    let mut aug = Array2::<f64>::zeros((m, m + 1));
    aug.slice_mut(s![.., ..m]).assign(&ata);
    aug.column_mut(m).assign(&aty);
    for c in 0..m {
        let piv = (c..m)
            .max_by(|&i, &j| aug[[i, c]].abs().total_cmp(&aug[[j, c]].abs()))
            .unwrap();
        for col in 0..=m {
            aug.swap([c, col], [piv, col]);
        }
        for r in 0..m {
            if r != c {
                let f = aug[[r, c]] / aug[[c, c]];
                for col in 0..=m {
                    aug[[r, col]] -= f * aug[[c, col]];
                }
            }
        }
    }
    (0..m).map(|i| aug[[i, m]] / aug[[i, i]]).collect()
}
