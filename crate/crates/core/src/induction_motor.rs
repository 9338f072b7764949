//! Five-variable dq-frame induction motor: four KVL loop equations
//! (ds, qs, dr, qr) plus one mechanical nodal equation.
//!
//! Electrical part, stationary frame (transformation angle zero, rotor
//! angle convention `p_beta = omega_r`):
//!
//! ```text
//! v_ds = Rs·I_ds + p ψ_ds
//! v_qs = Rs·I_qs + p ψ_qs
//!    0 = Rr·I_dr + p ψ_dr − ψ_qr·ω_r      (rotor shorted)
//!    0 = Rr·I_qr + p ψ_qr + ψ_dr·ω_r
//! ```
//!
//! with flux linkages `ψ_ds = Ls·I_ds + Lm·I_dr` etc. Mechanical part:
//! `J·p ω_r = T_E − T_L(ω_r) − D·ω_r` with
//! `T_E = (3/4)·Lm·Np·(I_dr·I_qs − I_qr·I_ds)`.
//!
//! The `p`-terms are replaced by coupled-coil companions (d and q axes
//! are independent coil pairs) and a capacitor-analog companion for the
//! inertia. The speed-voltage products and the torque are bilinear and
//! enter the system matrix through first-order Taylor linearization,
//! re-stamped on every Newton iteration.

use crate::companion::{capacitor_companion, coupled_companion, CapacitorHistory, CoupledCoilHistory};
use crate::dqframe::{inverse_park_matrix, park_matrix};
use crate::mna::{Slot, StampPart, SystemAssembly};

/// Electrical parameters plus mechanical constants of one machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImParams {
    /// Stator resistance (ohms).
    pub rs: f64,
    /// Rotor resistance (ohms).
    pub rr: f64,
    /// Stator leakage inductance (henries).
    pub lls: f64,
    /// Rotor leakage inductance (henries).
    pub llr: f64,
    /// Magnetizing inductance (henries).
    pub lm: f64,
    /// Net inertia (kg·m²) acting on the electrical rotor speed.
    pub inertia: f64,
    /// Viscous damping (N·m·s/rad).
    pub damping: f64,
    /// Pole count (positive even integer).
    pub poles: u32,
    /// Load torque polynomial `T_L(ω) = tl[0] + tl[1]·ω + tl[2]·ω²`.
    pub tl: [f64; 3],
}

impl ImParams {
    /// Total stator inductance `Ls = Lls + Lm`.
    pub fn ls(&self) -> f64 {
        self.lls + self.lm
    }

    /// Total rotor inductance `Lr = Llr + Lm`.
    pub fn lr(&self) -> f64 {
        self.llr + self.lm
    }

    pub fn load_torque(&self, omega_r: f64) -> f64 {
        self.tl[0] + self.tl[1] * omega_r + self.tl[2] * omega_r * omega_r
    }
}

/// The machine's five solution variables.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImState {
    pub i_ds: f64,
    pub i_qs: f64,
    pub i_dr: f64,
    pub i_qr: f64,
    /// Electrical rotor speed (rad/s).
    pub omega_r: f64,
}

impl ImState {
    /// Reads the five machine variables out of a solution vector whose
    /// IM block starts at `base`.
    pub fn from_vector(x: &[f64], base: usize) -> ImState {
        ImState {
            i_ds: x[base],
            i_qs: x[base + 1],
            i_dr: x[base + 2],
            i_qr: x[base + 3],
            omega_r: x[base + 4],
        }
    }
}

/// Flux linkages derived from a machine state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flux {
    pub psi_ds: f64,
    pub psi_qs: f64,
    pub psi_dr: f64,
    pub psi_qr: f64,
}

pub fn flux(state: &ImState, p: &ImParams) -> Flux {
    let (ls, lr, lm) = (p.ls(), p.lr(), p.lm);
    Flux {
        psi_ds: ls * state.i_ds + lm * state.i_dr,
        psi_qs: ls * state.i_qs + lm * state.i_qr,
        psi_dr: lr * state.i_dr + lm * state.i_ds,
        psi_qr: lr * state.i_qr + lm * state.i_qs,
    }
}

/// Electrical torque `T_E = (3/4)·Lm·Np·(I_dr·I_qs − I_qr·I_ds)` in N·m.
pub fn electrical_torque(state: &ImState, p: &ImParams) -> f64 {
    0.75 * p.lm * p.poles as f64 * (state.i_dr * state.i_qs - state.i_qr * state.i_ds)
}

/// First-order Taylor expansion of the bilinear form `f = a·x·y` around
/// the iterate `(x_k, y_k)`:
///
/// `f ≈ coeff_x·x + coeff_y·y + const_term`
///
/// with `coeff_x = a·y_k`, `coeff_y = a·x_k`, `const_term = −a·x_k·y_k`.
/// A quadratic `a·x²` is the case `x_k = y_k` with both coefficients
/// landing on the same column.
pub fn linearize_bilinear(a: f64, x_k: f64, y_k: f64) -> (f64, f64, f64) {
    (a * y_k, a * x_k, -a * x_k * y_k)
}

/// Companion-model memory of one machine.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImHistory {
    /// d-axis coil pair: coil 0 = stator (Ls), coil 1 = rotor (Lr),
    /// mutual Lm.
    pub d_axis: CoupledCoilHistory,
    /// q-axis coil pair, same layout.
    pub q_axis: CoupledCoilHistory,
    /// Mechanical capacitor analog: "voltage" is ω_r, "current" is
    /// `J·p ω_r` (the accelerating torque).
    pub mech: CapacitorHistory,
}

impl ImHistory {
    /// Cold-start history at a given initial speed: all currents and
    /// induced voltages zero, the mechanical capacitor open (DC rule).
    pub fn standstill(omega_r0: f64) -> ImHistory {
        ImHistory {
            mech: CapacitorHistory {
                v_prev: omega_r0,
                i_prev: 0.0,
            },
            ..ImHistory::default()
        }
    }

    /// History after accepting a step that solved to `state`.
    pub fn advanced(&self, p: &ImParams, dt: f64, state: &ImState) -> ImHistory {
        let self_l = [p.ls(), p.lr()];
        ImHistory {
            d_axis: self
                .d_axis
                .advanced(self_l, p.lm, dt, [state.i_ds, state.i_dr]),
            q_axis: self
                .q_axis
                .advanced(self_l, p.lm, dt, [state.i_qs, state.i_qr]),
            mech: self.mech.advanced(p.inertia, dt, state.omega_r),
        }
    }
}

/// Slot assignment of one machine inside the solution vector: five
/// consecutive indices for `(I_ds, I_qs, I_dr, I_qr, ω_r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImSlots {
    pub base: usize,
}

impl ImSlots {
    pub fn ids(&self) -> usize {
        self.base
    }
    pub fn iqs(&self) -> usize {
        self.base + 1
    }
    pub fn idr(&self) -> usize {
        self.base + 2
    }
    pub fn iqr(&self) -> usize {
        self.base + 3
    }
    pub fn omega(&self) -> usize {
        self.base + 4
    }
}

/// Stamps everything about one machine for the current iteration:
/// the iteration-independent parts once per time step via
/// [`stamp_im_linear`] plus the Newton-dependent parts via
/// [`stamp_im_nonlinear`].
pub fn stamp_im(
    asm: &mut SystemAssembly,
    slots: ImSlots,
    abc: [Slot; 3],
    p: &ImParams,
    iterate: &ImState,
    hist: &ImHistory,
    dt: f64,
) {
    stamp_im_linear(asm, slots, abc, p, hist, dt);
    stamp_im_nonlinear(asm, slots, p, iterate);
}

/// Iteration-independent machine stamps: resistances, coupled-coil and
/// inertia companions, history sources, the Park-row coupling of loop
/// voltages to abc node voltages, and the inverse-Park coupling of loop
/// currents into the abc KCL rows.
pub fn stamp_im_linear(
    asm: &mut SystemAssembly,
    slots: ImSlots,
    abc: [Slot; 3],
    p: &ImParams,
    hist: &ImHistory,
    dt: f64,
) {
    let part = StampPart::Lin;
    let park = park_matrix(0.0);
    let pinv = inverse_park_matrix(0.0);

    // Stator loops: −v_dq + Rs·I + coil companion = 0. The loop voltage
    // v_dq is the Park d (or q) row applied to the abc node voltages.
    for (row, park_row, axis_hist, partner) in [
        (slots.ids(), 1usize, &hist.d_axis, slots.idr()),
        (slots.iqs(), 2usize, &hist.q_axis, slots.iqr()),
    ] {
        for (phase, node) in abc.iter().enumerate() {
            asm.add_y(part, Some(row), *node, -park[park_row][phase]);
        }
        let comp = coupled_companion(p.ls(), p.lm, dt, axis_hist, 0);
        asm.add_y(part, Some(row), Some(row), p.rs + comp.r_eq);
        asm.add_y(part, Some(row), Some(partner), comp.ctrl_gain);
        asm.add_j(part, Some(row), -comp.v_hist);
    }

    // Rotor loops: Rr·I + coil companion + speed terms = 0 (the rotor
    // terminals are shorted, so there is no source contribution). The
    // speed terms are nonlinear and stamped separately.
    for (row, axis_hist, self_cur, partner_cur) in [
        (slots.idr(), &hist.d_axis, slots.idr(), slots.ids()),
        (slots.iqr(), &hist.q_axis, slots.iqr(), slots.iqs()),
    ] {
        let comp = coupled_companion(p.lr(), p.lm, dt, axis_hist, 1);
        asm.add_y(part, Some(row), Some(self_cur), p.rr + comp.r_eq);
        asm.add_y(part, Some(row), Some(partner_cur), comp.ctrl_gain);
        asm.add_j(part, Some(row), -comp.v_hist);
    }

    // Mechanical node: inertia companion + damping + T_L − T_E = 0.
    // T_E and the quadratic load term are Newton-dependent.
    let w = slots.omega();
    let (g_j, i_hist) = capacitor_companion(p.inertia, dt, &hist.mech);
    asm.add_y(part, Some(w), Some(w), g_j + p.damping + p.tl[1]);
    asm.add_j(part, Some(w), -i_hist - p.tl[0]);

    // Inverse-Park coupling: the machine draws i_abc = P⁻¹·(0, I_ds, I_qs)
    // out of the terminal nodes (zero-sequence current is identically 0).
    for (phase, node) in abc.iter().enumerate() {
        asm.add_y(part, *node, Some(slots.ids()), pinv[phase][1]);
        asm.add_y(part, *node, Some(slots.iqs()), pinv[phase][2]);
    }
}

/// Newton-dependent machine stamps: the four speed-voltage products in
/// the rotor loops, minus the torque bilinears and the quadratic load
/// term in the mechanical row. Coefficients are pushed even when zero so
/// the assembled pattern is identical across iterations.
pub fn stamp_im_nonlinear(
    asm: &mut SystemAssembly,
    slots: ImSlots,
    p: &ImParams,
    iterate: &ImState,
) {
    let part = StampPart::Nlin;
    let w_col = slots.omega();
    let w_k = iterate.omega_r;

    // dr row: −ω_r·(Lr·I_qr + Lm·I_qs)
    for (a, y_col, y_k) in [
        (-p.lr(), slots.iqr(), iterate.i_qr),
        (-p.lm, slots.iqs(), iterate.i_qs),
    ] {
        let (cx, cy, ct) = linearize_bilinear(a, w_k, y_k);
        asm.add_y(part, Some(slots.idr()), Some(w_col), cx);
        asm.add_y(part, Some(slots.idr()), Some(y_col), cy);
        asm.add_j(part, Some(slots.idr()), -ct);
    }
    // qr row: +ω_r·(Lr·I_dr + Lm·I_ds)
    for (a, y_col, y_k) in [
        (p.lr(), slots.idr(), iterate.i_dr),
        (p.lm, slots.ids(), iterate.i_ds),
    ] {
        let (cx, cy, ct) = linearize_bilinear(a, w_k, y_k);
        asm.add_y(part, Some(slots.iqr()), Some(w_col), cx);
        asm.add_y(part, Some(slots.iqr()), Some(y_col), cy);
        asm.add_j(part, Some(slots.iqr()), -ct);
    }

    // Mechanical row: −T_E = −k·I_dr·I_qs + k·I_qr·I_ds.
    let k_t = 0.75 * p.lm * p.poles as f64;
    for (a, x_col, x_k, y_col, y_k) in [
        (-k_t, slots.idr(), iterate.i_dr, slots.iqs(), iterate.i_qs),
        (k_t, slots.iqr(), iterate.i_qr, slots.ids(), iterate.i_ds),
    ] {
        let (cx, cy, ct) = linearize_bilinear(a, x_k, y_k);
        asm.add_y(part, Some(slots.omega()), Some(x_col), cx);
        asm.add_y(part, Some(slots.omega()), Some(y_col), cy);
        asm.add_j(part, Some(slots.omega()), -ct);
    }
    // Quadratic load torque term +tl2·ω².
    let (cx, cy, ct) = linearize_bilinear(p.tl[2], w_k, w_k);
    asm.add_y(part, Some(slots.omega()), Some(w_col), cx + cy);
    asm.add_j(part, Some(slots.omega()), -ct);
}

/// True nonlinear residuals of the five machine rows at `state`, using
/// the trapezoidal difference equations with history `hist` and the dq
/// stator terminal voltages `(v_ds, v_qs)` at the new time point.
///
/// This is the quantity Newton drives to zero; the linearized stamps are
/// its exact first-order model.
pub fn residuals(
    p: &ImParams,
    hist: &ImHistory,
    dt: f64,
    v_dq: (f64, f64),
    state: &ImState,
) -> [f64; 5] {
    let (ls, lr, lm) = (p.ls(), p.lr(), p.lm);
    let coil = |l_self: f64,
                i_new: f64,
                i_old: f64,
                v_self_old: f64,
                i_p_new: f64,
                i_p_old: f64,
                v_mut_old: f64| {
        2.0 * l_self / dt * (i_new - i_old) - v_self_old + 2.0 * lm / dt * (i_p_new - i_p_old)
            - v_mut_old
    };
    let d = &hist.d_axis;
    let q = &hist.q_axis;
    let r_ds = -v_dq.0
        + p.rs * state.i_ds
        + coil(
            ls,
            state.i_ds,
            d.i_prev[0],
            d.v_self_prev[0],
            state.i_dr,
            d.i_prev[1],
            d.v_mut_prev[0],
        );
    let r_qs = -v_dq.1
        + p.rs * state.i_qs
        + coil(
            ls,
            state.i_qs,
            q.i_prev[0],
            q.v_self_prev[0],
            state.i_qr,
            q.i_prev[1],
            q.v_mut_prev[0],
        );
    let r_dr = p.rr * state.i_dr
        + coil(
            lr,
            state.i_dr,
            d.i_prev[1],
            d.v_self_prev[1],
            state.i_ds,
            d.i_prev[0],
            d.v_mut_prev[1],
        )
        - state.omega_r * (lr * state.i_qr + lm * state.i_qs);
    let r_qr = p.rr * state.i_qr
        + coil(
            lr,
            state.i_qr,
            q.i_prev[1],
            q.v_self_prev[1],
            state.i_qs,
            q.i_prev[0],
            q.v_mut_prev[1],
        )
        + state.omega_r * (lr * state.i_dr + lm * state.i_ds);
    let r_mech = 2.0 * p.inertia / dt * (state.omega_r - hist.mech.v_prev) - hist.mech.i_prev
        + p.damping * state.omega_r
        + p.load_torque(state.omega_r)
        - electrical_torque(state, p);
    [r_ds, r_qs, r_dr, r_qr, r_mech]
}
