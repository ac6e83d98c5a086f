//! Dormand–Prince 5(4) embedded pair for autonomous systems `y' = f(y)`.

/// Returned by a right-hand side that is undefined at the requested state
/// (for the closed-loop field: a singular point).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RhsFailure;

pub type Rhs<'a> = dyn Fn(&[f64], &mut [f64]) -> Result<(), RhsFailure> + 'a;

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order weights minus embedded 4th-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub safety: f64,
    pub fac_min: f64,
    pub fac_max: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            safety: 0.9,
            fac_min: 0.2,
            fac_max: 5.0,
            h_min: 1e-14,
            h_max: f64::INFINITY,
        }
    }
}

/// A trial step: the 5th-order solution, `f` at that solution (FSAL) and the
/// scaled RMS error estimate (accept when `<= 1`).
#[derive(Debug, Clone)]
pub struct Step {
    pub y: Vec<f64>,
    pub f_new: Vec<f64>,
    pub err: f64,
}

impl Dopri5 {
    /// One step of size `h` from `y` with `k1 = f(y)`.
    pub fn step(&self, f: &Rhs<'_>, y: &[f64], k1: &[f64], h: f64) -> Result<Step, RhsFailure> {
        let n = y.len();
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(k1.to_vec());
        let mut stage = vec![0.0; n];
        for row in &A[1..7] {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate() {
                    acc += h * row[j] * kj[i];
                }
                stage[i] = acc;
            }
            let mut ks = vec![0.0; n];
            f(&stage, &mut ks)?;
            k.push(ks);
        }
        // stage 7 is evaluated at the 5th-order solution
        let y_new = stage;
        let mut sum = 0.0;
        for i in 0..n {
            let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * h;
            let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
            sum += (e / sc).powi(2);
        }
        let err = (sum / n.max(1) as f64).sqrt();
        Ok(Step {
            y: y_new,
            f_new: k.pop().unwrap_or_default(),
            err,
        })
    }

    /// Step-size factor after a trial with error estimate `err`.
    pub fn factor(&self, err: f64) -> f64 {
        if err == 0.0 {
            return self.fac_max;
        }
        (self.safety * err.powf(-0.2)).clamp(self.fac_min, self.fac_max)
    }

    /// Initial step heuristic (Hairer–Nørsett–Wanner, without the second probe).
    pub fn initial_step(&self, y: &[f64], f0: &[f64]) -> f64 {
        let n = y.len().max(1) as f64;
        let sc = |i: usize| self.atol + self.rtol * y[i].abs();
        let d0 = ((0..y.len()).map(|i| (y[i] / sc(i)).powi(2)).sum::<f64>() / n).sqrt();
        let d1 = ((0..y.len()).map(|i| (f0[i] / sc(i)).powi(2)).sum::<f64>() / n).sqrt();
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(self.h_max).max(self.h_min)
    }
}
