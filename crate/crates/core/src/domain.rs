use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned closed box `[lo_1, hi_1] x ... x [lo_n, hi_n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Error::check_dim("box upper corner", lo.len(), hi.len())?;
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidParameter(format!(
                "box lower corner {lo:?} must not exceed upper corner {hi:?}"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Re-validates a box obtained by deserialization.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.lo, self.hi)
    }

    /// The cube `[-r, r]^n`.
    pub fn cube(n: usize, r: f64) -> Self {
        Self {
            lo: vec![-r; n],
            hi: vec![r; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// Coordinates where `x` sits on the boundary, with the sign of the outward normal.
    pub fn boundary_faces(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut faces = Vec::new();
        for (k, v) in x.iter().enumerate() {
            if *v == self.lo[k] {
                faces.push((k, -1.0));
            }
            if *v == self.hi[k] {
                faces.push((k, 1.0));
            }
        }
        faces
    }

    /// Scaled copy about the box centre.
    pub fn scaled(&self, factor: f64) -> Self {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| {
                let c = 0.5 * (a + b);
                let r = 0.5 * (b - a) * factor;
                (c - r, c + r)
            })
            .unzip();
        Self { lo, hi }
    }

    /// Regular lattice with `per_axis` nodes per axis, boundary included.
    pub fn lattice(&self, per_axis: usize) -> Vec<Vec<f64>> {
        self.lattice_with(per_axis, false)
    }

    /// Regular lattice of strictly interior nodes: `per_axis` subintervals per
    /// axis, nodes `1..per_axis` (boundary excluded).
    pub fn interior_lattice(&self, per_axis: usize) -> Vec<Vec<f64>> {
        self.lattice_with(per_axis, true)
    }

    fn lattice_with(&self, per_axis: usize, interior: bool) -> Vec<Vec<f64>> {
        let n = self.dim();
        let (first, count, div) = if interior {
            (1, per_axis.saturating_sub(1), per_axis.max(1))
        } else {
            (0, per_axis, per_axis.saturating_sub(1).max(1))
        };
        let axis = |k: usize, i: usize| {
            let s = (first + i) as f64 / div as f64;
            self.lo[k] + s * (self.hi[k] - self.lo[k])
        };
        let total = count.pow(n as u32);
        (0..total)
            .map(|mut flat| {
                let mut x = vec![0.0; n];
                for k in (0..n).rev() {
                    x[k] = axis(k, flat % count);
                    flat /= count;
                }
                x
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_counts_and_bounds() {
        let b = BoxDomain::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let l = b.lattice(3);
        assert_eq!(l.len(), 9);
        assert_eq!(l[0], vec![0.0, -1.0]);
        assert_eq!(l[8], vec![1.0, 1.0]);
        let i = b.interior_lattice(4);
        assert_eq!(i.len(), 9);
        assert!(i.iter().all(|x| x[0] > 0.0 && x[0] < 1.0));
        assert!(i.iter().any(|x| x[1] == 0.0));
    }

    #[test]
    fn rejects_inverted_box() {
        assert!(BoxDomain::new(vec![1.0], vec![0.0]).is_err());
        assert!(BoxDomain::new(vec![1.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn boundary_faces_report_outward_sign() {
        let b = BoxDomain::cube(2, 1.0);
        assert_eq!(b.boundary_faces(&[1.0, 0.0]), vec![(0, 1.0)]);
        assert_eq!(b.boundary_faces(&[-1.0, 1.0]), vec![(0, -1.0), (1, 1.0)]);
        assert!(b.boundary_faces(&[0.0, 0.0]).is_empty());
    }
}
