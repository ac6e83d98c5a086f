//! Deterministic, symmetric sampling of the unit sphere in control space.
//!
//! Every sample set is closed under `a -> -a`, so the sampled control set keeps
//! the symmetry `-A ⊂ A` of the continuous unit ball.

use std::f64::consts::PI;

/// Default sample count for a control space of dimension `dim`.
pub fn default_count(dim: usize) -> usize {
    match dim {
        1 => 2,
        2 => 64,
        3 => 266,
        d => 3usize.pow(d as u32) - 1,
    }
}

/// Unit directions in `R^dim`.
///
/// * `dim = 1`: `{+1, -1}`.
/// * `dim = 2`: `count` equally spaced angles (`count` is rounded up to even).
/// * `dim = 3`: both poles plus `k` latitude rings of `2k - 2` longitudes each,
///   with `k` the largest ring count such that the total does not exceed
///   `count` (266 gives 12 rings of 22).
/// * `dim >= 4`: the normalised nonzero vectors of `{-1, 0, 1}^dim`; `count`
///   is ignored.
pub fn sphere_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => {
            let n = count.max(2).div_ceil(2) * 2;
            (0..n)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / n as f64;
                    vec![th.cos(), th.sin()]
                })
                .collect()
        }
        3 => {
            let mut rings = 2usize;
            while 2 + (rings + 1) * (2 * (rings + 1) - 2) <= count {
                rings += 1;
            }
            let lon = 2 * rings - 2;
            let mut dirs = vec![vec![0.0, 0.0, 1.0]];
            for i in 1..=rings {
                let th = PI * i as f64 / (rings + 1) as f64;
                for j in 0..lon {
                    let ph = 2.0 * PI * j as f64 / lon as f64;
                    dirs.push(vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
                }
            }
            dirs.push(vec![0.0, 0.0, -1.0]);
            dirs
        }
        d => {
            let total = 3usize.pow(d as u32);
            (0..total)
                .filter_map(|mut flat| {
                    let mut v = vec![0.0; d];
                    for c in v.iter_mut() {
                        *c = (flat % 3) as f64 - 1.0;
                        flat /= 3;
                    }
                    let r = crate::norm(&v);
                    (r > 0.0).then(|| v.into_iter().map(|c| c / r).collect())
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_under_negation(dirs: &[Vec<f64>]) -> bool {
        dirs.iter().all(|d| {
            dirs.iter()
                .any(|e| d.iter().zip(e).all(|(a, b)| (a + b).abs() < 1e-12))
        })
    }

    #[test]
    fn default_sizes() {
        assert_eq!(sphere_directions(2, default_count(2)).len(), 64);
        assert_eq!(sphere_directions(3, default_count(3)).len(), 266);
        assert_eq!(sphere_directions(4, 0).len(), 80);
        assert_eq!(sphere_directions(1, 7).len(), 2);
    }

    #[test]
    fn unit_and_symmetric() {
        for dim in 1..=4 {
            let dirs = sphere_directions(dim, default_count(dim));
            assert!(dirs.iter().all(|d| (crate::norm(d) - 1.0).abs() < 1e-12));
            assert!(closed_under_negation(&dirs), "dim {dim}");
        }
        assert!(closed_under_negation(&sphere_directions(2, 7)));
    }
}
