//! Park (dq0) transformation between abc phase quantities and
//! zero/direct/quadrature components.
//!
//! Row ordering is `(0, d, q)`: the d row carries the cosine terms and the
//! q row the sine terms. The non-power-invariant 2/3 scaling is used; the
//! induction-motor torque expression carries the matching 3/4 factor, so
//! no rescaling happens anywhere else. The stationary frame fixes the
//! transformation angle at zero.

use std::f64::consts::PI;

/// Phase separation between a, b and c: 2π/3 rad.
pub const PHASE_SEPARATION: f64 = 2.0 * PI / 3.0;

/// Transformation angle of the stationary reference frame.
pub const STATIONARY_THETA: f64 = 0.0;

/// The 3x3 matrix mapping `[f_a, f_b, f_c]` to `[f_0, f_d, f_q]`.
pub fn park_matrix(theta: f64) -> [[f64; 3]; 3] {
    let l = PHASE_SEPARATION;
    let s = 2.0 / 3.0;
    [
        [s * 0.5, s * 0.5, s * 0.5],
        [
            s * theta.cos(),
            s * (theta - l).cos(),
            s * (theta + l).cos(),
        ],
        [
            s * theta.sin(),
            s * (theta - l).sin(),
            s * (theta + l).sin(),
        ],
    ]
}

/// The exact inverse of [`park_matrix`], mapping `[f_0, f_d, f_q]` back
/// to `[f_a, f_b, f_c]`.
pub fn inverse_park_matrix(theta: f64) -> [[f64; 3]; 3] {
    let l = PHASE_SEPARATION;
    [
        [1.0, theta.cos(), theta.sin()],
        [1.0, (theta - l).cos(), (theta - l).sin()],
        [1.0, (theta + l).cos(), (theta + l).sin()],
    ]
}

pub fn abc_to_0dq(theta: f64, f_abc: [f64; 3]) -> [f64; 3] {
    mat_vec(&park_matrix(theta), f_abc)
}

pub fn dq0_to_abc(theta: f64, f_0dq: [f64; 3]) -> [f64; 3] {
    mat_vec(&inverse_park_matrix(theta), f_0dq)
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for r in 0..3 {
        out[r] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    const TOL: f64 = 1e-12;

    #[test]
    fn rows_at_theta_zero() {
        let p = park_matrix(0.0);
        let third = 1.0 / 3.0;
        for c in 0..3 {
            assert!((p[0][c] - third).abs() < TOL);
        }
        assert!((p[1][0] - 2.0 / 3.0).abs() < TOL);
        assert!((p[1][1] + third).abs() < TOL);
        assert!((p[1][2] + third).abs() < TOL);
        assert!(p[2][0].abs() < TOL);
        assert!((p[2][1] + 1.0 / 3.0_f64.sqrt()).abs() < TOL);
        assert!((p[2][2] - 1.0 / 3.0_f64.sqrt()).abs() < TOL);
    }

    #[test]
    fn balanced_peak_set_maps_to_unit_d() {
        let out = abc_to_0dq(0.0, [1.0, -0.5, -0.5]);
        assert!(out[0].abs() < TOL);
        assert!((out[1] - 1.0).abs() < TOL);
        assert!(out[2].abs() < TOL);
    }

    #[test]
    fn common_mode_is_pure_zero_sequence() {
        let out = abc_to_0dq(0.37, [1.0, 1.0, 1.0]);
        assert!((out[0] - 1.0).abs() < TOL);
        assert!(out[1].abs() < TOL);
        assert!(out[2].abs() < TOL);
    }

    #[test]
    fn inverse_columns() {
        let abc = dq0_to_abc(0.0, [0.0, 1.0, 0.0]);
        assert!((abc[0] - 1.0).abs() < TOL);
        assert!((abc[1] + 0.5).abs() < TOL);
        assert!((abc[2] + 0.5).abs() < TOL);
        assert_eq!(dq0_to_abc(0.0, [1.0, 0.0, 0.0]), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn product_is_identity_over_random_angles() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..100 {
            let theta: f64 = rng.random_range(-10.0..10.0);
            let p = park_matrix(theta);
            let pinv = inverse_park_matrix(theta);
            for r in 0..3 {
                for c in 0..3 {
                    let mut acc = 0.0;
                    for k in 0..3 {
                        acc += p[r][k] * pinv[k][c];
                    }
                    let expect = if r == c { 1.0 } else { 0.0 };
                    assert!(
                        (acc - expect).abs() < TOL,
                        "theta={theta} ({r},{c}): {acc}"
                    );
                }
            }
        }
    }

    #[test]
    fn round_trip_random_vectors() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let theta: f64 = rng.random_range(-6.3..6.3);
            let x = [
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ];
            let back = dq0_to_abc(theta, abc_to_0dq(theta, x));
            for k in 0..3 {
                assert!((back[k] - x[k]).abs() < TOL);
            }
        }
    }

    #[test]
    fn transform_is_linear() {
        let a = [1.5, -0.25, 3.0];
        let b = [-2.0, 0.75, 0.5];
        let sum = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
        let ta = abc_to_0dq(0.9, a);
        let tb = abc_to_0dq(0.9, b);
        let tsum = abc_to_0dq(0.9, sum);
        for k in 0..3 {
            assert!((tsum[k] - (ta[k] + tb[k])).abs() < 1e-14);
        }
    }

    /// Plain O(n^2) DFT magnitude at bin `k` for the frequency-mapping check.
    fn dft_mag(samples: &[f64], k: usize) -> f64 {
        let n = samples.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &s) in samples.iter().enumerate() {
            let ang = -2.0 * PI * k as f64 * i as f64 / n;
            re += s * ang.cos();
            im += s * ang.sin();
        }
        (re * re + im * im).sqrt() / n
    }

    #[test]
    fn stationary_frame_keeps_fundamental_frequency() {
        // Balanced abc cosines at bin 4 of a 256-sample window.
        let n = 256usize;
        let cycles = 4.0;
        let lam = PHASE_SEPARATION;
        let mut d = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        for i in 0..n {
            let wt = 2.0 * PI * cycles * i as f64 / n as f64;
            let abc = [wt.cos(), (wt - lam).cos(), (wt + lam).cos()];
            let f = abc_to_0dq(STATIONARY_THETA, abc);
            d.push(f[1]);
            q.push(f[2]);
        }
        // Peak stays at the same bin for both axes.
        for series in [&d, &q] {
            let peak_bin = (1..n / 2)
                .max_by(|&a, &b| dft_mag(series, a).total_cmp(&dft_mag(series, b)))
                .unwrap();
            assert_eq!(peak_bin, cycles as usize);
        }
        // 90 degree relative phase: d ~ cos, q ~ -sin, so d^2+q^2 is flat.
        for i in 0..n {
            assert!((d[i] * d[i] + q[i] * q[i] - 1.0).abs() < 1e-9);
        }
    }
}
