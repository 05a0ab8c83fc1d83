use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Row-major `rows x cols` matrix with orthonormal rows (or columns, when
/// `rows > cols`), scaled by `gain`.
pub fn orthogonal<G: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut G) -> Vec<f64> {
    let (short, long) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| StandardNormal.sample(rng)).collect();
        // Two Gram-Schmidt passes keep the basis orthogonal to rounding.
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = Float::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    let mut out = vec![0.0; rows * cols];
    for (i, b) in basis.iter().enumerate() {
        for (j, &x) in b.iter().enumerate() {
            if rows <= cols {
                out[i * cols + j] = gain * x;
            } else {
                out[j * cols + i] = gain * x;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn gram(m: &[f64], rows: usize, cols: usize, by_rows: bool) -> Vec<f64> {
        let n = if by_rows { rows } else { cols };
        let get = |v: usize, i: usize| if by_rows { m[v * cols + i] } else { m[i * cols + v] };
        let len = if by_rows { cols } else { rows };
        let mut g = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                g[a * n + b] = (0..len).map(|i| get(a, i) * get(b, i)).sum();
            }
        }
        g
    }

    #[test]
    fn wide_and_tall_matrices_are_orthogonal_with_gain() {
        let mut rng = stream(3, "init", 0);
        for &(rows, cols, by_rows) in &[(4usize, 9usize, true), (9, 4, false), (6, 6, true)] {
            let m = orthogonal(rows, cols, 2.0, &mut rng);
            let g = gram(&m, rows, cols, by_rows);
            let n = rows.min(cols);
            for a in 0..n {
                for b in 0..n {
                    let want = if a == b { 4.0 } else { 0.0 };
                    assert!((g[a * n + b] - want).abs() < 1e-10);
                }
            }
        }
    }
}
