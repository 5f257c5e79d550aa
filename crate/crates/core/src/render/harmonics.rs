//! Real spherical harmonics, with per-(l, m) amplitude scaling to [-1, 1].
//!
//! Channel order is `l = 0..=L`, `m = -l..=l`. No Condon–Shortley phase.
//! `m > 0` uses `cos(mφ)`, `m < 0` uses `sin(|m|φ)`.

use std::f64::consts::PI;

/// Highest supported degree.
pub const MAX_DEGREE: u8 = 32;

/// Associated Legendre functions `P_l^m(x)` for `0 ≤ m ≤ l ≤ degree`,
/// packed as `[l * (l + 1) / 2 + m]`.
fn legendre_table(degree: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.resize((degree + 1) * (degree + 2) / 2, 0.0);
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for m in 0..=degree {
        if m > 0 {
            pmm *= (2 * m - 1) as f64 * s;
        }
        out[idx(m, m)] = pmm;
        if m < degree {
            let mut prev = pmm;
            let mut cur = x * (2 * m + 1) as f64 * pmm;
            out[idx(m + 1, m)] = cur;
            for l in (m + 2)..=degree {
                let next = ((2 * l - 1) as f64 * x * cur - (l + m - 1) as f64 * prev) / (l - m) as f64;
                prev = cur;
                cur = next;
                out[idx(l, m)] = cur;
            }
        }
    }
}

fn factorial_ratio(l: usize, m: usize) -> f64 {
    // (l - m)! / (l + m)!
    ((l - m + 1)..=(l + m)).fold(1.0, |acc, k| acc / k as f64)
}

/// Orthonormal normalization `N_l^m`, including the √2 of the real form for m ≠ 0.
fn normalization(l: usize, m: usize) -> f64 {
    let n = ((2 * l + 1) as f64 / (4.0 * PI) * factorial_ratio(l, m)).sqrt();
    if m == 0 {
        n
    } else {
        n * 2f64.sqrt()
    }
}

/// Maximum of `|P_l^m(x)|` over `[-1, 1]`: dense scan, then golden-section refinement.
fn legendre_peak(l: usize, m: usize) -> f64 {
    if m == 0 {
        return 1.0; // |P_l(x)| ≤ P_l(1) = 1
    }
    let mut table = Vec::new();
    let mut eval = |x: f64| {
        legendre_table(l, x, &mut table);
        table[l * (l + 1) / 2 + m].abs()
    };
    const SCAN: usize = 4096;
    let step = 2.0 / SCAN as f64;
    let (mut best_x, mut best) = (0.0, eval(0.0));
    for i in 0..=SCAN {
        let x = -1.0 + i as f64 * step;
        let v = eval(x);
        if v > best {
            best = v;
            best_x = x;
        }
    }
    let (mut a, mut b) = ((best_x - step).max(-1.0), (best_x + step).min(1.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if eval(c) > eval(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(eval(0.5 * (a + b)))
}

/// Precomputed real spherical harmonic basis up to a fixed degree.
#[derive(Debug, Clone)]
pub struct HarmonicBasis {
    degree: usize,
    /// Per packed (l, m ≥ 0): orthonormal normalization.
    norm: Vec<f64>,
    /// Per packed (l, m ≥ 0): 1 / max |P_l^m|.
    inv_peak: Vec<f64>,
}

impl HarmonicBasis {
    pub fn new(degree: u8) -> Self {
        assert!(degree <= MAX_DEGREE, "harmonic degree {degree} exceeds {MAX_DEGREE}");
        let degree = degree as usize;
        let mut norm = Vec::new();
        let mut inv_peak = Vec::new();
        for l in 0..=degree {
            for m in 0..=l {
                norm.push(normalization(l, m));
                inv_peak.push(1.0 / legendre_peak(l, m));
            }
        }
        Self { degree, norm, inv_peak }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn fill(&self, theta: f64, phi: f64, scaled: bool, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        let mut table = Vec::with_capacity(self.norm.len());
        legendre_table(self.degree, theta.cos(), &mut table);
        for l in 0..=self.degree {
            let base = l * l + l; // channel of m = 0
            for m in 0..=l {
                let k = l * (l + 1) / 2 + m;
                let amp = if scaled {
                    table[k] * self.inv_peak[k]
                } else {
                    table[k] * self.norm[k]
                };
                if m == 0 {
                    out[base] = amp;
                } else {
                    let (s, c) = (m as f64 * phi).sin_cos();
                    out[base + m] = amp * c;
                    out[base - m] = amp * s;
                }
            }
        }
    }

    /// Orthonormal real harmonics `Y_l^m(θ, φ)`.
    pub fn eval(&self, theta: f64, phi: f64, out: &mut [f64]) {
        self.fill(theta, phi, false, out);
    }

    /// Harmonics divided by their maximum magnitude over the sphere; every
    /// channel lies in `[-1, 1]`.
    pub fn eval_scaled(&self, theta: f64, phi: f64, out: &mut [f64]) {
        self.fill(theta, phi, true, out);
        for v in out.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir(theta: f64, phi: f64) -> (f64, f64, f64) {
        (theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
    }

    #[test]
    fn matches_closed_form_through_degree_two() {
        let basis = HarmonicBasis::new(2);
        let c0 = 0.5 / PI.sqrt();
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        let c2 = 0.5 * (15.0 / PI).sqrt();
        let c20 = 0.25 * (5.0 / PI).sqrt();
        let c22 = 0.25 * (15.0 / PI).sqrt();
        let mut out = vec![0.0; 9];
        for &(theta, phi) in &[(0.3, 1.1), (2.0, -2.5), (1.2, 0.1), (3.0, 3.0)] {
            basis.eval(theta, phi, &mut out);
            let (x, y, z) = dir(theta, phi);
            let expected = [
                c0,
                c1 * y,
                c1 * z,
                c1 * x,
                c2 * x * y,
                c2 * y * z,
                c20 * (3.0 * z * z - 1.0),
                c2 * x * z,
                c22 * (x * x - y * y),
            ];
            for (k, (a, b)) in out.iter().zip(expected).enumerate() {
                assert!((a - b).abs() < 1e-12, "channel {k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn orthonormal_under_quadrature() {
        // Gauss-free midpoint quadrature on a fine (θ, φ) grid.
        let degree = 3u8;
        let basis = HarmonicBasis::new(degree);
        let n = basis.len();
        let (nt, np) = (400, 800);
        let mut gram = vec![0.0; n * n];
        let mut y = vec![0.0; n];
        for i in 0..nt {
            let theta = (i as f64 + 0.5) * PI / nt as f64;
            let w = theta.sin() * (PI / nt as f64) * (2.0 * PI / np as f64);
            for j in 0..np {
                let phi = (j as f64 + 0.5) * 2.0 * PI / np as f64;
                basis.eval(theta, phi, &mut y);
                for a in 0..n {
                    for b in 0..n {
                        gram[a * n + b] += w * y[a] * y[b];
                    }
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a * n + b] - want).abs() < 1e-4, "({a},{b}) = {}", gram[a * n + b]);
            }
        }
    }

    #[test]
    fn degree_zero_scaled_is_one() {
        let basis = HarmonicBasis::new(0);
        let mut out = [0.0];
        basis.eval_scaled(1.3, -0.4, &mut out);
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn scaled_channels_reach_but_do_not_exceed_one() {
        let basis = HarmonicBasis::new(4);
        let n = basis.len();
        let mut peak = vec![0.0f64; n];
        let mut out = vec![0.0; n];
        for i in 0..=600 {
            let theta = i as f64 * PI / 600.0;
            for j in 0..360 {
                let phi = j as f64 * 2.0 * PI / 360.0;
                basis.eval_scaled(theta, phi, &mut out);
                for (p, v) in peak.iter_mut().zip(&out) {
                    assert!(v.abs() <= 1.0);
                    *p = p.max(v.abs());
                }
            }
        }
        for (k, p) in peak.iter().enumerate() {
            assert!(*p > 0.99, "channel {k} peaks at {p}");
        }
    }
}
