//! Trapezoidal companion models for inductors, capacitors and coupled
//! coils, plus the per-device history they carry between time steps.
//!
//! Each companion turns a time-derivative element into algebra at
//! `t_{n+1}`: a conductance (or equivalent resistance) seen by the new
//! unknowns, plus a source term computed purely from `t_n` state.
//! Histories advance only when a step is accepted; a rejected step leaves
//! them untouched.

/// Previous-step state of an inductor modeled as a Norton companion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InductorHistory {
    /// Branch current at `t_n` (amperes), positive from node m to n.
    pub i_prev: f64,
    /// Branch voltage at `t_n` (volts), `V_m - V_n`.
    pub v_prev: f64,
}

/// Previous-step state of a capacitor companion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CapacitorHistory {
    /// Branch voltage at `t_n` (volts).
    pub v_prev: f64,
    /// Branch current at `t_n` (amperes).
    pub i_prev: f64,
}

/// Previous-step state of a coupled coil pair.
///
/// For coil `k`, `v_self_prev[k]` is the voltage across its
/// self-inductance term and `v_mut_prev[k]` the voltage across its mutual
/// term at `t_n`; their sum is the total induced coil voltage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoupledCoilHistory {
    pub i_prev: [f64; 2],
    pub v_self_prev: [f64; 2],
    pub v_mut_prev: [f64; 2],
}

/// Norton companion of an inductor: a conductance `G = dt/2L` in parallel
/// with a history current source `I_hist`, both oriented from node m to n.
///
/// The stamped circuit satisfies `i(t_{n+1}) = I_hist + G·v(t_{n+1})`.
pub fn inductor_companion(l: f64, dt: f64, h: &InductorHistory) -> (f64, f64) {
    debug_assert!(l > 0.0 && dt > 0.0);
    let g = dt / (2.0 * l);
    (g, h.i_prev + h.v_prev * g)
}

/// Recovered inductor branch current after a solve at `t_{n+1}`.
pub fn inductor_current(l: f64, dt: f64, h: &InductorHistory, v_new: f64) -> f64 {
    let (g, i_hist) = inductor_companion(l, dt, h);
    i_hist + g * v_new
}

impl InductorHistory {
    /// History after accepting a step whose solved branch voltage is `v_new`.
    pub fn advanced(&self, l: f64, dt: f64, v_new: f64) -> InductorHistory {
        InductorHistory {
            i_prev: inductor_current(l, dt, self, v_new),
            v_prev: v_new,
        }
    }
}

/// Norton companion of a capacitor: `G = 2C/dt` in parallel with
/// `I_hist = -(i_prev + v_prev·2C/dt)`, oriented from node m to n, so that
/// `i(t_{n+1}) = G·v(t_{n+1}) + I_hist` reproduces the trapezoidal update
/// `v(t_{n+1}) = v_prev + (i_prev + i(t_{n+1}))·dt/2C`.
pub fn capacitor_companion(c: f64, dt: f64, h: &CapacitorHistory) -> (f64, f64) {
    debug_assert!(c > 0.0 && dt > 0.0);
    let g = 2.0 * c / dt;
    (g, -(h.i_prev + h.v_prev * g))
}

/// Recovered capacitor branch current after a solve at `t_{n+1}`.
pub fn capacitor_current(c: f64, dt: f64, h: &CapacitorHistory, v_new: f64) -> f64 {
    let (g, i_hist) = capacitor_companion(c, dt, h);
    g * v_new + i_hist
}

impl CapacitorHistory {
    pub fn advanced(&self, c: f64, dt: f64, v_new: f64) -> CapacitorHistory {
        CapacitorHistory {
            v_prev: v_new,
            i_prev: capacitor_current(c, dt, self, v_new),
        }
    }
}

/// Thevenin-form companion of one coil in a coupled pair:
/// `V_k(t_{n+1}) = R_EQ·I_k(t_{n+1}) + ctrl_gain·I_j(t_{n+1}) + V_hist`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoilCompanion {
    /// Self term, `2·L_self/dt` (ohms).
    pub r_eq: f64,
    /// Current-controlled voltage-source coefficient on the partner
    /// current, `2·L_mut/dt` (ohms).
    pub ctrl_gain: f64,
    /// History voltage source (volts).
    pub v_hist: f64,
}

/// Companion of coil `k` (0 or 1) of a coupled pair with self inductance
/// `l_self` (of coil k) and mutual inductance `l_mut`.
pub fn coupled_companion(
    l_self: f64,
    l_mut: f64,
    dt: f64,
    h: &CoupledCoilHistory,
    k: usize,
) -> CoilCompanion {
    debug_assert!(dt > 0.0 && k < 2);
    let j = 1 - k;
    let r_eq = 2.0 * l_self / dt;
    let ctrl_gain = 2.0 * l_mut / dt;
    let v_hist = -(r_eq * h.i_prev[k]
        + ctrl_gain * h.i_prev[j]
        + h.v_self_prev[k]
        + h.v_mut_prev[k]);
    CoilCompanion {
        r_eq,
        ctrl_gain,
        v_hist,
    }
}

impl CoupledCoilHistory {
    /// History after accepting a step with solved coil currents `i_new`.
    ///
    /// The per-term voltages are recomputed from the difference equations
    /// so that `v_self + v_mut` stays equal to the solved coil voltage.
    pub fn advanced(&self, l_self: [f64; 2], l_mut: f64, dt: f64, i_new: [f64; 2]) -> Self {
        let mut out = CoupledCoilHistory {
            i_prev: i_new,
            ..*self
        };
        for k in 0..2 {
            let j = 1 - k;
            out.v_self_prev[k] =
                2.0 * l_self[k] / dt * (i_new[k] - self.i_prev[k]) - self.v_self_prev[k];
            out.v_mut_prev[k] =
                2.0 * l_mut / dt * (i_new[j] - self.i_prev[j]) - self.v_mut_prev[k];
        }
        out
    }

    /// Total induced voltage of coil `k` implied by the stored history.
    pub fn total_voltage(&self, k: usize) -> f64 {
        self.v_self_prev[k] + self.v_mut_prev[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inductor_companion_hand_values() {
        let h = InductorHistory {
            i_prev: 2.0,
            v_prev: 10.0,
        };
        let (g, i_hist) = inductor_companion(0.5, 1e-3, &h);
        assert!((g - 1e-3).abs() < 1e-18);
        assert!((i_hist - 2.01).abs() < 1e-15);
    }

    #[test]
    fn inductor_zero_history_is_bare_conductance() {
        let (g, i_hist) = inductor_companion(0.5, 1e-3, &InductorHistory::default());
        assert!(g > 0.0);
        assert_eq!(i_hist, 0.0);
    }

    #[test]
    fn inductor_conductance_linear_in_dt() {
        let h = InductorHistory::default();
        let (g1, _) = inductor_companion(0.2, 1e-3, &h);
        let (g2, _) = inductor_companion(0.2, 5e-4, &h);
        assert_eq!(g1, 2.0 * g2);
    }

    #[test]
    fn capacitor_companion_hand_values() {
        let (g, i_hist) = capacitor_companion(1e-6, 1e-3, &CapacitorHistory::default());
        assert!((g - 2e-3).abs() < 1e-18);
        assert_eq!(i_hist, 0.0);
    }

    #[test]
    fn capacitor_companion_satisfies_trapezoidal_update() {
        // Pick arbitrary history and a new voltage; the recovered current
        // must satisfy v_new = v_prev + (i_prev + i_new) dt/2C.
        let h = CapacitorHistory {
            v_prev: 3.0,
            i_prev: -0.4,
        };
        let (c, dt) = (4.7e-6, 2e-4);
        let v_new = 3.8;
        let i_new = capacitor_current(c, dt, &h, v_new);
        let rhs = h.v_prev + (h.i_prev + i_new) * dt / (2.0 * c);
        assert!((v_new - rhs).abs() < 1e-12);
    }

    #[test]
    fn coupled_companion_hand_values() {
        let comp = coupled_companion(1.0, 0.5, 0.1, &CoupledCoilHistory::default(), 0);
        assert_eq!(comp.r_eq, 20.0);
        assert_eq!(comp.ctrl_gain, 10.0);
        assert_eq!(comp.v_hist, 0.0);
    }

    #[test]
    fn coupled_companion_decouples_without_mutual() {
        let h = CoupledCoilHistory {
            i_prev: [1.5, -2.0],
            v_self_prev: [4.0, 1.0],
            v_mut_prev: [0.0, 0.0],
        };
        let comp = coupled_companion(0.3, 0.0, 1e-2, &h, 0);
        assert_eq!(comp.ctrl_gain, 0.0);
        // Matches the single-inductor voltage-form relation
        // v = (2L/dt)(i - i_prev) - v_prev at i = i_new:
        let i_new = 1.9;
        let v = comp.r_eq * i_new + comp.v_hist;
        let expect = 2.0 * 0.3 / 1e-2 * (i_new - h.i_prev[0]) - h.v_self_prev[0];
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn coupled_reciprocity() {
        let h = CoupledCoilHistory {
            i_prev: [0.7, -0.3],
            v_self_prev: [2.0, -1.0],
            v_mut_prev: [0.5, 0.25],
        };
        let c0 = coupled_companion(0.4, 0.15, 1e-3, &h, 0);
        let c1 = coupled_companion(0.8, 0.15, 1e-3, &h, 1);
        // Mutual coefficient is shared; self terms differ with L.
        assert_eq!(c0.ctrl_gain, c1.ctrl_gain);
        assert_eq!(c0.r_eq, 2.0 * 0.4 / 1e-3);
        assert_eq!(c1.r_eq, 2.0 * 0.8 / 1e-3);
    }

    #[test]
    fn history_advance_keeps_difference_equation_residual_zero() {
        let l_self = [0.4, 0.8];
        let l_mut = 0.15;
        let dt = 1e-3;
        let mut h = CoupledCoilHistory {
            i_prev: [0.7, -0.3],
            v_self_prev: [2.0, -1.0],
            v_mut_prev: [0.5, 0.25],
        };
        let i_new = [0.9, -0.1];
        let before = h;
        h = h.advanced(l_self, l_mut, dt, i_new);
        for k in 0..2 {
            let j = 1 - k;
            // Trapezoidal recursion: L ΔI = dt/2 (V_new + V_old), per term.
            let self_resid = l_self[k] * (i_new[k] - before.i_prev[k])
                - dt / 2.0 * (h.v_self_prev[k] + before.v_self_prev[k]);
            let mut_resid = l_mut * (i_new[j] - before.i_prev[j])
                - dt / 2.0 * (h.v_mut_prev[k] + before.v_mut_prev[k]);
            assert!(self_resid.abs() < 1e-12, "coil {k}: {self_resid}");
            assert!(mut_resid.abs() < 1e-12, "coil {k}: {mut_resid}");
            // Companion evaluated at i_new equals the updated total voltage.
            let comp = coupled_companion(l_self[k], l_mut, dt, &before, k);
            let v_from_comp = comp.r_eq * i_new[k] + comp.ctrl_gain * i_new[j] + comp.v_hist;
            assert!((v_from_comp - h.total_voltage(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn inductor_recursion_chain_balances() {
        // Two consecutive accepted steps must satisfy the trapezoidal
        // relation L(i_{n+1} - i_n) = dt/2 (v_{n+1} + v_n) at machine
        // precision.
        let (l, dt) = (5e-3, 1e-4);
        let mut h = InductorHistory {
            i_prev: 2.0,
            v_prev: 0.0,
        };
        for &v_new in &[1.0, -0.5] {
            let prev = h;
            h = h.advanced(l, dt, v_new);
            let resid = l * (h.i_prev - prev.i_prev) - dt / 2.0 * (v_new + prev.v_prev);
            assert!(resid.abs() < 1e-15);
        }
    }

    #[test]
    fn linear_current_ramp_gives_exact_voltage() {
        // i(t) = a t through L must produce v = L a at every step: solve
        // the companion relation for v given the prescribed new current.
        // The t=0 history must be consistent (v(0) = L a for a ramp).
        let (l, dt, a) = (0.02, 1e-3, 3.0);
        let mut h = InductorHistory {
            i_prev: 0.0,
            v_prev: l * a,
        };
        for n in 1..=50 {
            let i_new = a * (n as f64) * dt;
            let (g, i_hist) = inductor_companion(l, dt, &h);
            let v_new = (i_new - i_hist) / g;
            assert!(
                (v_new - l * a).abs() < 1e-12,
                "step {n}: v={v_new} expected {}",
                l * a
            );
            h = h.advanced(l, dt, v_new);
        }
    }
}
