//! Window functions on the action simplex and the exact samplers of the
//! delta and window density kernels.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::cps::StiefelPoint;

/// Heaviside step; the boundary has measure zero and maps to 0.
#[inline]
pub fn heaviside(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Hill-window exponent `B(F) = 3 / (7 (F-1)) + 60 / (7 (F+13))`.
pub fn hill_exponent(dim: usize) -> f64 {
    let f = dim as f64;
    3.0 / (7.0 * (f - 1.0)) + 60.0 / (7.0 * (f + 13.0))
}

/// `N = F (F gamma / (1 + F gamma))^(F-1)`, the cornered-window normalization.
pub fn cornered_normalization(dim: usize, gamma: f64) -> f64 {
    let f = dim as f64;
    f * (f * gamma / (1.0 + f * gamma)).powi(dim as i32 - 1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WindowKind {
    /// Density-side triangle window `h(e_n - 1) prod_{m != n} h(2 - e_n - e_m)`.
    Triangle,
    /// Observable-side triangle window `h(e_n - 1) prod_{m != n} h(1 - e_m)`.
    TriangleObs,
    /// `prod_{k != n} (e_n - e_k)^B h(e_n - e_k)`.
    HillObs,
    /// `prod_{k != n} h(e_n - e_k)`.
    HillRho,
    /// `h(e_n - 1) / N` on the sphere at `gamma`.
    Cornered { gamma: f64 },
}

/// Window value from the actions of a single frame.
pub fn window_from_actions(kind: WindowKind, e: &[f64], n: usize) -> f64 {
    let en = e[n];
    let others = e.iter().enumerate().filter(|&(k, _)| k != n).map(|(_, &v)| v);
    match kind {
        WindowKind::Triangle => heaviside(en - 1.0) * others.map(|em| heaviside(2.0 - en - em)).product::<f64>(),
        WindowKind::TriangleObs => heaviside(en - 1.0) * others.map(|em| heaviside(1.0 - em)).product::<f64>(),
        WindowKind::HillObs => {
            let b = hill_exponent(e.len());
            others.map(|ek| if en > ek { (en - ek).powf(b) } else { 0.0 }).product()
        }
        WindowKind::HillRho => others.map(|ek| heaviside(en - ek)).product(),
        WindowKind::Cornered { gamma } => heaviside(en - 1.0) / cornered_normalization(e.len(), gamma),
    }
}

/// Window value at a single-frame point.
pub fn eval_window(kind: WindowKind, point: &StiefelPoint, n: usize) -> f64 {
    window_from_actions(kind, &point.actions(0), n)
}

/// Frame `z_j = sqrt(2 e_j) exp(i theta_j)` with independent uniform angles.
pub fn frame_with_random_phases(actions: &[f64], rng: &mut (impl Rng + ?Sized)) -> Vec<C64> {
    actions
        .iter()
        .map(|&e| C64::from_polar((2.0 * e).sqrt(), 2.0 * PI * rng.random::<f64>()))
        .collect()
}

/// Actions drawn from the triangle density kernel of state `n` combined
/// with the triangle sphere weight. In action space the density is
/// `2 w_n (2 - e_n)^(2 - F)`, i.e. `s = 2 - e_n` has density `2 s` on
/// `[0, 1]` and each other `e_j` is uniform on `[0, s]`.
pub fn sample_triangle_actions(dim: usize, n: usize, rng: &mut (impl Rng + ?Sized)) -> Vec<f64> {
    let s = rng.random::<f64>().sqrt();
    (0..dim).map(|j| if j == n { 2.0 - s } else { s * rng.random::<f64>() }).collect()
}
