//! The bump mollifier `J_δ` and the mollified gradient `∇^δ u = ∇(J_δ * u)`.
//!
//! Fields are zero-extended outside their active nodes and integrated with
//! lumped nodal weights on a uniform lattice of spacing `h`. The kernel is
//! sampled on the same lattice and renormalized so that `Σ h² J = 1`. The
//! lattice convolution runs through a zero-padded 2D FFT; [`gradient_direct`]
//! is the plain double sum and serves as a reference.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::DIAM_Y;

#[derive(Clone, Debug, PartialEq)]
pub struct Mollifier {
    pub delta: f64,
    /// Normalization constant of the continuous kernel (`∫ J_δ = 1`).
    pub continuous_constant: f64,
}

/// What to do when `δ ≤ 2ε diam(Y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalePolicy {
    Enforce,
    Warn,
}

impl Mollifier {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Parameter(format!(
                "mollifier radius must be positive, got {delta}"
            )));
        }
        Ok(Self {
            delta,
            continuous_constant: 1.0 / profile_integral(delta),
        })
    }

    /// Whether `δ > 2ε diam(Y)`.
    pub fn admissible(&self, eps: f64) -> bool {
        self.delta > 2.0 * eps * DIAM_Y
    }

    /// Checks `δ > 2ε diam(Y)`. Under [`ScalePolicy::Warn`] a violation is
    /// returned as a message instead of an error.
    pub fn check_scale(&self, eps: f64, policy: ScalePolicy) -> Result<Option<String>> {
        if self.admissible(eps) {
            return Ok(None);
        }
        let msg = format!(
            "delta = {} violates delta > 2 eps diam(Y) = {:.6} at eps = {eps}",
            self.delta,
            2.0 * eps * DIAM_Y
        );
        match policy {
            ScalePolicy::Enforce => Err(Error::Parameter(msg)),
            ScalePolicy::Warn => Ok(Some(msg)),
        }
    }

    /// Unnormalized profile `exp(1/(|z|² − δ²))`, zero outside the ball.
    pub fn profile(&self, z: [f64; 2]) -> f64 {
        let r2 = z[0] * z[0] + z[1] * z[1];
        let d2 = self.delta * self.delta;
        if r2 >= d2 {
            0.0
        } else {
            (1.0 / (r2 - d2)).exp()
        }
    }

    /// `J_δ(z)` with the continuous normalization.
    pub fn value(&self, z: [f64; 2]) -> f64 {
        self.continuous_constant * self.profile(z)
    }

    /// Gradient of the unnormalized profile.
    pub fn profile_gradient(&self, z: [f64; 2]) -> [f64; 2] {
        let r2 = z[0] * z[0] + z[1] * z[1];
        let d2 = self.delta * self.delta;
        if r2 >= d2 {
            return [0.0, 0.0];
        }
        let s = r2 - d2;
        let f = (1.0 / s).exp() * (-2.0) / (s * s);
        [f * z[0], f * z[1]]
    }

    /// Kernel sampled on a lattice of spacing `h` and renormalized.
    pub fn kernel(&self, h: f64) -> DiscreteKernel {
        let radius = (self.delta / h).ceil() as usize;
        let w = 2 * radius + 1;
        let mut values = vec![0.0; w * w];
        let mut grad = vec![[0.0; 2]; w * w];
        let mut sum = 0.0;
        for j in 0..w {
            for i in 0..w {
                let z = [(i as f64 - radius as f64) * h, (j as f64 - radius as f64) * h];
                let v = self.profile(z);
                values[j * w + i] = v;
                grad[j * w + i] = self.profile_gradient(z);
                sum += v;
            }
        }
        let constant = 1.0 / (h * h * sum);
        values.iter_mut().for_each(|v| *v *= constant);
        let mut g2 = 0.0;
        for g in grad.iter_mut() {
            g[0] *= constant;
            g[1] *= constant;
            g2 += h * h * (g[0] * g[0] + g[1] * g[1]);
        }
        DiscreteKernel {
            h,
            radius,
            constant,
            values,
            grad,
            grad_l2: g2.sqrt(),
        }
    }
}

/// `∫_{|z|<δ} exp(1/(|z|² − δ²)) dz = π ∫₀^{δ²} exp(−1/t) dt`, composite Simpson.
fn profile_integral(delta: f64) -> f64 {
    let b = delta * delta;
    let n = 4096;
    let h = b / n as f64;
    let f = |t: f64| if t <= 0.0 { 0.0 } else { (-1.0 / t).exp() };
    let mut s = f(0.0) + f(b);
    for k in 1..n {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    std::f64::consts::PI * s * h / 3.0
}

/// `J_δ` and `∇J_δ` on a `(2R+1)²` stencil centred at the origin.
#[derive(Clone, Debug)]
pub struct DiscreteKernel {
    pub h: f64,
    pub radius: usize,
    /// Discrete normalization constant.
    pub constant: f64,
    pub values: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    /// `‖∇J_δ‖_{L²}`, the constant in `‖∇^δ u‖_∞ ≤ C_δ ‖u‖_{L²}`.
    pub grad_l2: f64,
}

impl DiscreteKernel {
    pub fn width(&self) -> usize {
        2 * self.radius + 1
    }

    /// `Σ h² J`, one up to rounding.
    pub fn mass(&self) -> f64 {
        self.h * self.h * self.values.iter().sum::<f64>()
    }

    #[inline]
    fn grad_at(&self, di: isize, dj: isize) -> [f64; 2] {
        let r = self.radius as isize;
        if di.abs() > r || dj.abs() > r {
            return [0.0, 0.0];
        }
        let w = self.width();
        self.grad[(dj + r) as usize * w + (di + r) as usize]
    }
}

/// Smallest `2^a 3^b 5^c ≥ n`.
fn smooth_size(n: usize) -> usize {
    let mut k = n.max(1);
    loop {
        let mut r = k;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return k;
        }
        k += 1;
    }
}

/// Applies `f ↦ Σ_q h² ∇J(x_p − x_q) f_q` on an `n₁ x n₂` node lattice.
pub struct LatticeConvolver {
    n: [usize; 2],
    p: [usize; 2],
    spectrum: Vec<Complex64>,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
    pub kernel_radius: usize,
    pub h: f64,
}

impl std::fmt::Debug for LatticeConvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LatticeConvolver")
            .field("n", &self.n)
            .field("p", &self.p)
            .field("kernel_radius", &self.kernel_radius)
            .finish()
    }
}

impl LatticeConvolver {
    pub fn new(kernel: &DiscreteKernel, n: [usize; 2]) -> Self {
        let r = kernel.radius;
        let p = [smooth_size(n[0] + r), smooth_size(n[1] + r)];
        let mut planner = FftPlanner::new();
        let fwd = [planner.plan_fft_forward(p[0]), planner.plan_fft_forward(p[1])];
        let inv = [planner.plan_fft_inverse(p[0]), planner.plan_fft_inverse(p[1])];
        let h2 = kernel.h * kernel.h;
        let mut buf = vec![Complex64::new(0.0, 0.0); p[0] * p[1]];
        let ri = r as isize;
        for dj in -ri..=ri {
            for di in -ri..=ri {
                let g = kernel.grad_at(di, dj);
                let i = di.rem_euclid(p[0] as isize) as usize;
                let j = dj.rem_euclid(p[1] as isize) as usize;
                buf[j * p[0] + i] = Complex64::new(h2 * g[0], h2 * g[1]);
            }
        }
        let mut conv = Self {
            n,
            p,
            spectrum: Vec::new(),
            fwd,
            inv,
            kernel_radius: r,
            h: kernel.h,
        };
        conv.forward(&mut buf);
        conv.spectrum = buf;
        conv
    }

    /// Row transforms, then column transforms; result stored transposed
    /// (`p₁` rows of length `p₂`).
    fn forward(&self, buf: &mut Vec<Complex64>) {
        self.fwd[0].process(buf);
        let t = transpose(buf, self.p[0], self.p[1]);
        *buf = t;
        self.fwd[1].process(buf);
    }

    fn inverse(&self, buf: &mut Vec<Complex64>) {
        self.inv[1].process(buf);
        let t = transpose(buf, self.p[1], self.p[0]);
        *buf = t;
        self.inv[0].process(buf);
    }

    /// Gradient of the lattice convolution at every lattice node. `f` holds
    /// weighted nodal values (row-major, `n₁` per row).
    pub fn gradient(&self, f: &[f64]) -> Vec<[f64; 2]> {
        let [n0, n1] = self.n;
        assert_eq!(f.len(), n0 * n1, "field does not match lattice");
        let [p0, p1] = self.p;
        let mut buf = vec![Complex64::new(0.0, 0.0); p0 * p1];
        for j in 0..n1 {
            for i in 0..n0 {
                buf[j * p0 + i].re = f[j * n0 + i];
            }
        }
        self.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.spectrum) {
            *b *= k;
        }
        self.inverse(&mut buf);
        let scale = 1.0 / (p0 * p1) as f64;
        let mut out = Vec::with_capacity(n0 * n1);
        for j in 0..n1 {
            for i in 0..n0 {
                let c = buf[j * p0 + i];
                out.push([c.re * scale, c.im * scale]);
            }
        }
        out
    }
}

fn transpose(buf: &[Complex64], cols: usize, rows: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); buf.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = buf[r * cols + c];
        }
    }
    out
}

/// Reference double sum for [`LatticeConvolver::gradient`].
pub fn gradient_direct(kernel: &DiscreteKernel, n: [usize; 2], f: &[f64]) -> Vec<[f64; 2]> {
    let h2 = kernel.h * kernel.h;
    let r = kernel.radius as isize;
    let mut out = vec![[0.0; 2]; n[0] * n[1]];
    for pj in 0..n[1] as isize {
        for pi in 0..n[0] as isize {
            let mut s = [0.0; 2];
            for qj in (pj - r).max(0)..=(pj + r).min(n[1] as isize - 1) {
                for qi in (pi - r).max(0)..=(pi + r).min(n[0] as isize - 1) {
                    let v = f[qj as usize * n[0] + qi as usize];
                    if v != 0.0 {
                        let g = kernel.grad_at(pi - qi, pj - qj);
                        s[0] += h2 * g[0] * v;
                        s[1] += h2 * g[1] * v;
                    }
                }
            }
            out[pj as usize * n[0] + pi as usize] = s;
        }
    }
    out
}

/// Bilinear interpolation of a node-lattice vector field at `x`. Points
/// outside the lattice are clamped to it.
pub fn interpolate_lattice(field: &[[f64; 2]], n: [usize; 2], h: f64, x: [f64; 2]) -> [f64; 2] {
    let loc = |v: f64, n: usize| {
        let s = (v / h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n.saturating_sub(2));
        (i, s - i as f64)
    };
    let (i, a) = loc(x[0], n[0]);
    let (j, b) = loc(x[1], n[1]);
    if n[0] < 2 || n[1] < 2 {
        return field[j * n[0] + i];
    }
    let f = |ii: usize, jj: usize| field[jj * n[0] + ii];
    let mut out = [0.0; 2];
    for c in 0..2 {
        out[c] = (1.0 - a) * (1.0 - b) * f(i, j)[c]
            + a * (1.0 - b) * f(i + 1, j)[c]
            + a * b * f(i + 1, j + 1)[c]
            + (1.0 - a) * b * f(i, j + 1)[c];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_kernel_has_unit_mass() {
        let k = Mollifier::new(0.25).unwrap().kernel(1.0 / 96.0);
        assert!((k.mass() - 1.0).abs() < 1e-12);
        assert!(k.values.iter().all(|&v| v >= 0.0));
        assert_eq!(k.radius, 24);
    }

    #[test]
    fn discrete_constant_tracks_continuous() {
        let m = Mollifier::new(0.25).unwrap();
        let k = m.kernel(1.0 / 200.0);
        assert!((k.constant / m.continuous_constant - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scale_condition() {
        let m = Mollifier::new(0.05).unwrap();
        assert!(m.check_scale(0.25, ScalePolicy::Enforce).is_err());
        assert!(m.check_scale(0.25, ScalePolicy::Warn).unwrap().is_some());
        let m = Mollifier::new(0.25).unwrap();
        assert!(m.check_scale(1.0 / 16.0, ScalePolicy::Enforce).unwrap().is_none());
    }

    #[test]
    fn fft_matches_direct_sum() {
        let k = Mollifier::new(0.2).unwrap().kernel(0.05);
        let n = [13, 9];
        let f: Vec<f64> = (0..n[0] * n[1]).map(|i| ((i * 7919) % 13) as f64 / 13.0).collect();
        let a = LatticeConvolver::new(&k, n).gradient(&f);
        let b = gradient_direct(&k, n, &f);
        for (x, y) in a.iter().zip(&b) {
            assert!((x[0] - y[0]).abs() < 1e-10 && (x[1] - y[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(7), 8);
        assert_eq!(smooth_size(481), 480 + 6);
        assert_eq!(smooth_size(1), 1);
    }
}
