//! Simulation engine: DC operating-point initialization, Newton-Raphson
//! iteration over the stamped system, LTE-controlled adaptive time
//! stepping, and the outer recursive time loop.
//!
//! Each attempted step runs the step-doubling pair: one solve over `dt`
//! and two solves over `dt/2`. The difference yields the Richardson
//! error estimate, and the half-step result (the more accurate of the
//! two routes) becomes the accepted state. Companion histories advance
//! only on acceptance; a rejected step discards all work.

use std::collections::HashMap;

use thiserror::Error;

use crate::companion::{
    capacitor_companion, coupled_companion, inductor_companion, CapacitorHistory,
    CoupledCoilHistory, InductorHistory,
};
use crate::induction_motor::{
    electrical_torque, flux, stamp_im_linear, stamp_im_nonlinear, ImHistory, ImParams, ImSlots,
    ImState,
};
use crate::mna::{build_index, Slot, StampPart, SystemAssembly, UnknownIndex};
use crate::netlist::{Circuit, DeviceKind, TranDirective, ValidationError};
use crate::sparse::{norm_inf, residual_inf, CscMatrix, CscPattern, SparseError};

/// Newton and step-control knobs. The Newton tolerances quantify "no
/// considerable difference between iterations": both the update norm and
/// the true nonlinear residual must pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt0: f64,
    pub t_stop: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Dimensionless LTE tolerance for accept/reject decisions.
    pub lte_tol: f64,
    /// Infinity-norm bound on the Newton update.
    pub nr_tol_dx: f64,
    /// Infinity-norm bound on the nonlinear residual.
    pub nr_tol_resid: f64,
    pub nr_max_iter: u32,
}

impl SolverConfig {
    pub fn from_tran(t: &TranDirective) -> SolverConfig {
        SolverConfig {
            dt0: t.dt0,
            t_stop: t.t_stop,
            dt_min: t.dt_min,
            dt_max: t.dt_max,
            lte_tol: t.lte_tol,
            nr_tol_dx: 1e-8,
            nr_tol_resid: 1e-6,
            nr_max_iter: 50,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid circuit: {}", format_validation(.0))]
    Invalid(Vec<ValidationError>),
    #[error(
        "singular DC system at t=0s (unknown '{unknown}'); a floating subcircuit has no DC path to ground"
    )]
    SingularDc { unknown: String },
    #[error("singular system at t={time}s (unknown '{unknown}')")]
    Singular { time: f64, unknown: String },
    #[error(
        "Newton-Raphson failed to converge at t={time}s after {iterations} iterations \
         (residual {residual:.3e})"
    )]
    NrFailure {
        time: f64,
        iterations: u32,
        residual: f64,
    },
}

fn format_validation(errors: &[ValidationError]) -> String {
    errors
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Newton-Raphson failure detail.
#[derive(Debug, Error)]
pub enum NrError {
    #[error("did not converge in {iterations} iterations (residual {residual:.3e})")]
    MaxIterationsExceeded {
        iterations: u32,
        /// Last iterate, for diagnosis.
        last: Vec<f64>,
        residual: f64,
    },
    #[error("singular linearized system")]
    Singular(#[from] SparseError),
}

/// Iterates `x ← LU_solve(Y(x), J(x))` until the update norm and the true
/// nonlinear residual both pass. `stamp_fn` rebuilds the
/// iteration-dependent stamps at the given iterate and returns the
/// assembled system; because a first-order Taylor model is exact at its
/// anchor, `Y(x)·x − J(x)` is the true nonlinear residual at `x`.
///
/// Returns the converged point and the number of linear solves taken.
pub fn nr_solve<F>(
    mut stamp_fn: F,
    x_guess: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, u32), NrError>
where
    F: FnMut(&[f64]) -> Result<(CscMatrix, Vec<f64>), SparseError>,
{
    let mut x = x_guess.to_vec();
    let mut dx = f64::INFINITY;
    let mut resid = f64::INFINITY;
    for solves in 0..cfg.nr_max_iter {
        let (y, j) = stamp_fn(&x)?;
        resid = residual_inf(&y, &x, &j);
        if dx < cfg.nr_tol_dx && resid < cfg.nr_tol_resid {
            return Ok((x, solves));
        }
        let x_new = y.solve(&j)?;
        dx = x_new
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = x_new;
    }
    let (y, j) = stamp_fn(&x)?;
    resid = residual_inf(&y, &x, &j).min(resid);
    if dx < cfg.nr_tol_dx && resid < cfg.nr_tol_resid {
        return Ok((x, cfg.nr_max_iter));
    }
    Err(NrError::MaxIterationsExceeded {
        iterations: cfg.nr_max_iter,
        last: x,
        residual: resid,
    })
}

/// Outcome of the step-size controller for one estimated error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptOutcome {
    pub accept: bool,
    pub dt_next: f64,
    /// Set when the error still exceeds the tolerance but the step is
    /// already at the floor and must be accepted.
    pub at_floor: bool,
}

/// Accept/reject policy: reject and halve above tolerance (accepting
/// with a warning once at `dt_min`), grow by 2 below a tenth of the
/// tolerance, hold otherwise.
pub fn adapt_dt(err: f64, dt: f64, cfg: &SolverConfig) -> AdaptOutcome {
    debug_assert!(err >= 0.0);
    if err > cfg.lte_tol {
        if dt <= cfg.dt_min {
            AdaptOutcome {
                accept: true,
                dt_next: cfg.dt_min,
                at_floor: true,
            }
        } else {
            AdaptOutcome {
                accept: false,
                dt_next: (dt / 2.0).max(cfg.dt_min),
                at_floor: false,
            }
        }
    } else if err < cfg.lte_tol / 10.0 {
        AdaptOutcome {
            accept: true,
            dt_next: (2.0 * dt).min(cfg.dt_max),
            at_floor: false,
        }
    } else {
        AdaptOutcome {
            accept: true,
            dt_next: dt,
            at_floor: false,
        }
    }
}

/// A warning attached to an accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWarning {
    pub time: f64,
    pub message: String,
}

/// Time-indexed record of all unknowns plus derived quantities, along
/// with per-row solve audits.
#[derive(Debug, Clone, Default)]
pub struct Waveforms {
    pub times: Vec<f64>,
    labels: Vec<String>,
    /// Column-major storage, one vector per label.
    columns: Vec<Vec<f64>>,
    /// Post-hoc `‖Y·X − J‖∞` of the system each accepted row solved.
    pub residual_inf: Vec<f64>,
    /// Relative residual bound reference `max(1, ‖J‖∞)` per row.
    pub rhs_scale: Vec<f64>,
    /// Worst voltage-source constraint deviation per row.
    pub vsrc_deviation_inf: Vec<f64>,
    /// Newton solves used by the accepting half-step pair.
    pub nr_iterations: Vec<u32>,
    pub warnings: Vec<StepWarning>,
    /// Count of unknown columns; derived columns follow.
    pub unknown_count: usize,
}

impl Waveforms {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> usize {
        self.times.len()
    }

    pub fn column(&self, label: &str) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|k| self.columns[k].as_slice())
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    fn push_row(&mut self, time: f64, values: &[f64], audit: RowAudit) {
        debug_assert_eq!(values.len(), self.labels.len());
        self.times.push(time);
        for (col, v) in self.columns.iter_mut().zip(values) {
            col.push(*v);
        }
        self.residual_inf.push(audit.residual_inf);
        self.rhs_scale.push(audit.rhs_scale);
        self.vsrc_deviation_inf.push(audit.vsrc_deviation_inf);
        self.nr_iterations.push(audit.nr_iterations);
    }
}

#[derive(Debug, Clone, Copy)]
struct RowAudit {
    residual_inf: f64,
    rhs_scale: f64,
    vsrc_deviation_inf: f64,
    nr_iterations: u32,
}

/// Source waveform of an independent voltage source.
#[derive(Debug, Clone, Copy)]
enum SourceWave {
    Dc(f64),
    Sin { vm: f64, omega: f64, phase: f64 },
}

impl SourceWave {
    fn value(&self, t: f64) -> f64 {
        match self {
            SourceWave::Dc(v) => *v,
            SourceWave::Sin { vm, omega, phase } => vm * (omega * t + phase).cos(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct CoilSide {
    m: Slot,
    n: Slot,
    branch: usize,
    l_self: f64,
}

/// A device resolved against the unknown index, ready to stamp.
#[derive(Debug, Clone)]
enum Prepared {
    Resistor {
        m: Slot,
        n: Slot,
        ohms: f64,
    },
    Inductor {
        m: Slot,
        n: Slot,
        henries: f64,
        hist: usize,
        ic: Option<f64>,
        label: String,
    },
    Capacitor {
        m: Slot,
        n: Slot,
        farads: f64,
        hist: usize,
        ic: Option<f64>,
    },
    CoupledPair {
        sides: [CoilSide; 2],
        l_mut: f64,
        hist: usize,
    },
    Vsource {
        m: Slot,
        n: Slot,
        branch: usize,
        wave: SourceWave,
    },
    Isource {
        m: Slot,
        n: Slot,
        amps: f64,
    },
    Machine {
        abc: [Slot; 3],
        slots: ImSlots,
        params: ImParams,
        hist: usize,
        omega_r0: f64,
    },
}

/// Companion-model memory of every device with state.
#[derive(Debug, Clone, Default, PartialEq)]
struct Histories {
    inductors: Vec<InductorHistory>,
    capacitors: Vec<CapacitorHistory>,
    pairs: Vec<CoupledCoilHistory>,
    machines: Vec<ImHistory>,
}

/// Circuit compiled against its unknown index.
struct PreparedCircuit {
    index: UnknownIndex,
    devices: Vec<Prepared>,
    has_nonlinear: bool,
    derived_labels: Vec<String>,
}

fn prepare(circuit: &Circuit) -> Result<PreparedCircuit, EngineError> {
    let index = build_index(circuit);
    let mut devices = Vec::new();
    let mut n_ind = 0usize;
    let mut n_cap = 0usize;
    let mut n_pair = 0usize;
    let mut n_im = 0usize;
    let mut derived_labels = Vec::new();
    let mut has_nonlinear = false;

    // Inductor devices referenced by a K element become coupled-pair
    // branches instead of Norton companions.
    let mut coupled_inductors: HashMap<&str, (Slot, Slot, f64)> = HashMap::new();
    for device in &circuit.devices {
        if let DeviceKind::Mutual { coils, .. } = &device.kind {
            for coil in coils {
                let ind = circuit
                    .devices
                    .iter()
                    .find(|d| &d.name == coil)
                    .expect("validated coil reference");
                if let DeviceKind::Inductor { nodes, henries, .. } = &ind.kind {
                    coupled_inductors.insert(
                        coil.as_str(),
                        (index.node(&nodes[0]), index.node(&nodes[1]), *henries),
                    );
                }
            }
        }
    }

    for device in &circuit.devices {
        match &device.kind {
            DeviceKind::Resistor { nodes, ohms } => devices.push(Prepared::Resistor {
                m: index.node(&nodes[0]),
                n: index.node(&nodes[1]),
                ohms: *ohms,
            }),
            DeviceKind::Inductor { nodes, henries, ic } => {
                if coupled_inductors.contains_key(device.name.as_str()) {
                    continue;
                }
                devices.push(Prepared::Inductor {
                    m: index.node(&nodes[0]),
                    n: index.node(&nodes[1]),
                    henries: *henries,
                    hist: n_ind,
                    ic: *ic,
                    label: format!("i({})", device.name),
                });
                derived_labels.push(format!("i({})", device.name));
                n_ind += 1;
            }
            DeviceKind::Capacitor { nodes, farads, ic } => {
                devices.push(Prepared::Capacitor {
                    m: index.node(&nodes[0]),
                    n: index.node(&nodes[1]),
                    farads: *farads,
                    hist: n_cap,
                    ic: *ic,
                });
                n_cap += 1;
            }
            DeviceKind::Mutual { coils, henries } => {
                let side = |coil: &str| {
                    let (m, n, l_self) = coupled_inductors[coil];
                    CoilSide {
                        m,
                        n,
                        branch: index.coil(coil).expect("indexed coil"),
                        l_self,
                    }
                };
                devices.push(Prepared::CoupledPair {
                    sides: [side(&coils[0]), side(&coils[1])],
                    l_mut: *henries,
                    hist: n_pair,
                });
                n_pair += 1;
            }
            DeviceKind::VsourceSin {
                nodes,
                vm,
                freq,
                phase_deg,
            } => devices.push(Prepared::Vsource {
                m: index.node(&nodes[0]),
                n: index.node(&nodes[1]),
                branch: index.vsrc(&device.name),
                wave: SourceWave::Sin {
                    vm: *vm,
                    omega: 2.0 * std::f64::consts::PI * freq,
                    phase: phase_deg.to_radians(),
                },
            }),
            DeviceKind::VsourceDc { nodes, volts } => devices.push(Prepared::Vsource {
                m: index.node(&nodes[0]),
                n: index.node(&nodes[1]),
                branch: index.vsrc(&device.name),
                wave: SourceWave::Dc(*volts),
            }),
            DeviceKind::IsourceDc { nodes, amps } => devices.push(Prepared::Isource {
                m: index.node(&nodes[0]),
                n: index.node(&nodes[1]),
                amps: *amps,
            }),
            DeviceKind::InductionMotor {
                nodes,
                params,
                omega_r0,
            } => {
                has_nonlinear = true;
                devices.push(Prepared::Machine {
                    abc: [
                        index.node(&nodes[0]),
                        index.node(&nodes[1]),
                        index.node(&nodes[2]),
                    ],
                    slots: ImSlots {
                        base: index.im_base(&device.name),
                    },
                    params: *params,
                    hist: n_im,
                    omega_r0: *omega_r0,
                });
                for suffix in ["Te", "psi_ds", "psi_qs", "psi_dr", "psi_qr", "wmech"] {
                    derived_labels.push(format!("{suffix}({})", device.name));
                }
                n_im += 1;
            }
        }
    }

    Ok(PreparedCircuit {
        index,
        devices,
        has_nonlinear,
        derived_labels,
    })
}

impl PreparedCircuit {
    fn n(&self) -> usize {
        self.index.total()
    }

    fn fresh_histories(&self) -> Histories {
        let mut h = Histories::default();
        for d in &self.devices {
            match d {
                Prepared::Inductor { .. } => h.inductors.push(InductorHistory::default()),
                Prepared::Capacitor { .. } => h.capacitors.push(CapacitorHistory::default()),
                Prepared::CoupledPair { .. } => h.pairs.push(CoupledCoilHistory::default()),
                Prepared::Machine { omega_r0, .. } => {
                    h.machines.push(ImHistory::standstill(*omega_r0))
                }
                _ => {}
            }
        }
        h
    }

    /// Stamps everything that stays fixed across Newton iterations of the
    /// step ending at `t_next`.
    fn stamp_linear(&self, asm: &mut SystemAssembly, hist: &Histories, t_next: f64, dt: f64) {
        for d in &self.devices {
            match d {
                Prepared::Resistor { m, n, ohms } => asm.stamp_resistor(*m, *n, *ohms),
                Prepared::Inductor {
                    m,
                    n,
                    henries,
                    hist: k,
                    ..
                } => {
                    let (g, i_hist) = inductor_companion(*henries, dt, &hist.inductors[*k]);
                    asm.stamp_conductance(StampPart::Lin, *m, *n, g);
                    asm.stamp_current_source(*m, *n, i_hist);
                }
                Prepared::Capacitor {
                    m,
                    n,
                    farads,
                    hist: k,
                    ..
                } => {
                    let (g, i_hist) = capacitor_companion(*farads, dt, &hist.capacitors[*k]);
                    asm.stamp_conductance(StampPart::Lin, *m, *n, g);
                    asm.stamp_current_source(*m, *n, i_hist);
                }
                Prepared::CoupledPair {
                    sides,
                    l_mut,
                    hist: k,
                } => {
                    for (coil, side) in sides.iter().enumerate() {
                        let other = sides[1 - coil].branch;
                        let comp =
                            coupled_companion(side.l_self, *l_mut, dt, &hist.pairs[*k], coil);
                        let b = Some(side.branch);
                        // KCL coupling of the branch current.
                        asm.add_y(StampPart::Lin, side.m, b, 1.0);
                        asm.add_y(StampPart::Lin, side.n, b, -1.0);
                        // Branch KVL: V_m − V_n − R_EQ·i − ctrl·i_other = V_hist.
                        asm.add_y(StampPart::Lin, b, side.m, 1.0);
                        asm.add_y(StampPart::Lin, b, side.n, -1.0);
                        asm.add_y(StampPart::Lin, b, b, -comp.r_eq);
                        asm.add_y(StampPart::Lin, b, Some(other), -comp.ctrl_gain);
                        asm.add_j(StampPart::Lin, b, comp.v_hist);
                    }
                }
                Prepared::Vsource {
                    m,
                    n,
                    branch,
                    wave,
                } => asm.stamp_voltage_source(*m, *n, *branch, wave.value(t_next)),
                Prepared::Isource { m, n, amps } => asm.stamp_current_source(*m, *n, *amps),
                Prepared::Machine {
                    abc,
                    slots,
                    params,
                    hist: k,
                    ..
                } => stamp_im_linear(asm, *slots, *abc, params, &hist.machines[*k], dt),
            }
        }
    }

    fn stamp_nonlinear(&self, asm: &mut SystemAssembly, iterate: &[f64]) {
        for d in &self.devices {
            if let Prepared::Machine { slots, params, .. } = d {
                let state = ImState::from_vector(iterate, slots.base);
                stamp_im_nonlinear(asm, *slots, params, &state);
            }
        }
    }

    /// One candidate solve of the step ending at `t_next` over `dt`.
    /// Histories are not touched; the caller decides acceptance.
    fn step(
        &self,
        x_prev: &[f64],
        hist: &Histories,
        t_next: f64,
        dt: f64,
        cfg: &SolverConfig,
    ) -> Result<(Vec<f64>, u32), NrError> {
        debug_assert!(dt > 0.0);
        let mut asm = SystemAssembly::new(self.n());
        self.stamp_linear(&mut asm, hist, t_next, dt);
        if !self.has_nonlinear {
            let (y, j) = asm.assemble()?;
            let x = y.solve(&j)?;
            return Ok((x, 1));
        }
        let mut pattern: Option<CscPattern> = None;
        nr_solve(
            |iterate: &[f64]| {
                asm.clear_nlin();
                self.stamp_nonlinear(&mut asm, iterate);
                let all: Vec<_> = asm
                    .lin_triplets()
                    .iter()
                    .chain(asm.nlin_triplets())
                    .copied()
                    .collect();
                let reuse = pattern.as_ref().is_some_and(|p| p.matches(&all));
                if !reuse {
                    pattern = Some(CscPattern::build(self.n(), &all)?);
                }
                Ok(asm.assemble_with(pattern.as_ref().unwrap()))
            },
            x_prev,
            cfg,
        )
    }

    /// Histories advanced by an accepted sub-step that solved to `x`.
    fn advance_histories(&self, hist: &Histories, x: &[f64], dt: f64) -> Histories {
        let mut out = hist.clone();
        let v_at = |slot: Slot| slot.map_or(0.0, |s| x[s]);
        for d in &self.devices {
            match d {
                Prepared::Inductor {
                    m,
                    n,
                    henries,
                    hist: k,
                    ..
                } => {
                    out.inductors[*k] =
                        hist.inductors[*k].advanced(*henries, dt, v_at(*m) - v_at(*n));
                }
                Prepared::Capacitor {
                    m,
                    n,
                    farads,
                    hist: k,
                    ..
                } => {
                    out.capacitors[*k] =
                        hist.capacitors[*k].advanced(*farads, dt, v_at(*m) - v_at(*n));
                }
                Prepared::CoupledPair {
                    sides,
                    l_mut,
                    hist: k,
                } => {
                    out.pairs[*k] = hist.pairs[*k].advanced(
                        [sides[0].l_self, sides[1].l_self],
                        *l_mut,
                        dt,
                        [x[sides[0].branch], x[sides[1].branch]],
                    );
                }
                Prepared::Machine {
                    slots,
                    params,
                    hist: k,
                    ..
                } => {
                    let state = ImState::from_vector(x, slots.base);
                    out.machines[*k] = hist.machines[*k].advanced(params, dt, &state);
                }
                _ => {}
            }
        }
        out
    }

    /// Worst voltage-source constraint deviation `|V_m − V_n − V_S(t)|`.
    fn vsrc_deviation(&self, x: &[f64], t: f64) -> f64 {
        let v_at = |slot: Slot| slot.map_or(0.0, |s| x[s]);
        let mut worst: f64 = 0.0;
        for d in &self.devices {
            if let Prepared::Vsource { m, n, wave, .. } = d {
                worst = worst.max((v_at(*m) - v_at(*n) - wave.value(t)).abs());
            }
        }
        worst
    }

    /// Derived waveform values (inductor currents, torque, fluxes,
    /// mechanical speed) at an accepted state.
    fn derived_values(&self, x: &[f64], hist_after: &Histories) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.derived_labels.len());
        for d in &self.devices {
            match d {
                Prepared::Inductor { hist: k, .. } => out.push(hist_after.inductors[*k].i_prev),
                Prepared::Machine { slots, params, .. } => {
                    let state = ImState::from_vector(x, slots.base);
                    let f = flux(&state, params);
                    out.push(electrical_torque(&state, params));
                    out.push(f.psi_ds);
                    out.push(f.psi_qs);
                    out.push(f.psi_dr);
                    out.push(f.psi_qr);
                    out.push(2.0 * state.omega_r / params.poles as f64);
                }
                _ => {}
            }
        }
        out
    }

    /// Assembles the system of the step that produced `x` and returns the
    /// audit residuals (rebuilt from scratch, including the Newton
    /// stamps anchored at `x`).
    fn audit(
        &self,
        x: &[f64],
        hist: &Histories,
        t_next: f64,
        dt: f64,
        iterations: u32,
    ) -> Result<RowAudit, NrError> {
        let mut asm = SystemAssembly::new(self.n());
        self.stamp_linear(&mut asm, hist, t_next, dt);
        self.stamp_nonlinear(&mut asm, x);
        let (y, j) = asm.assemble()?;
        Ok(RowAudit {
            residual_inf: residual_inf(&y, x, &j),
            rhs_scale: norm_inf(&j).max(1.0),
            vsrc_deviation_inf: self.vsrc_deviation(x, t_next),
            nr_iterations: iterations,
        })
    }
}

/// DC operating point: sinusoidal sources at their `t = 0` value,
/// inductors shorted (their currents become extra unknowns), capacitors
/// opened, machines held at their cold-start state. Returns the solution
/// restricted to the transient unknowns plus the seeded histories.
struct DcResult {
    x0: Vec<f64>,
    histories: Histories,
    audit: RowAudit,
}

fn dc_operating_point_prepared(pc: &PreparedCircuit) -> Result<DcResult, EngineError> {
    let n = pc.n();
    // Extra DC slots: one per shorted inductor, one per capacitor with an
    // initial-condition voltage override (stamped as a DC source).
    let mut extra = 0usize;
    let mut short_slot: HashMap<usize, usize> = HashMap::new();
    let mut cap_ic_slot: HashMap<usize, usize> = HashMap::new();
    for d in &pc.devices {
        match d {
            Prepared::Inductor { hist, ic: None, .. } => {
                short_slot.insert(*hist, n + extra);
                extra += 1;
            }
            Prepared::Capacitor {
                hist,
                ic: Some(_), ..
            } => {
                cap_ic_slot.insert(*hist, n + extra);
                extra += 1;
            }
            _ => {}
        }
    }

    let n_dc = n + extra;
    let mut asm = SystemAssembly::new(n_dc);
    for d in &pc.devices {
        match d {
            Prepared::Resistor { m, n, ohms } => asm.stamp_resistor(*m, *n, *ohms),
            Prepared::Inductor {
                m, n, hist, ic, ..
            } => match ic {
                // Prescribed initial current: the rest of the DC network
                // sees exactly that draw.
                Some(i0) => asm.stamp_current_source(*m, *n, *i0),
                // Shorted: a 0 V source whose branch current is the DC
                // inductor current.
                None => asm.stamp_voltage_source(*m, *n, short_slot[hist], 0.0),
            },
            Prepared::Capacitor {
                m, n, hist, ic, ..
            } => {
                // Open at DC; an ic override pins the node pair to the
                // held voltage.
                if let Some(v0) = ic {
                    asm.stamp_voltage_source(*m, *n, cap_ic_slot[hist], *v0);
                }
            }
            Prepared::CoupledPair { sides, .. } => {
                // Both coils shorted; branch slots already exist.
                for side in sides {
                    asm.stamp_voltage_source(side.m, side.n, side.branch, 0.0);
                }
            }
            Prepared::Vsource {
                m,
                n,
                branch,
                wave,
            } => asm.stamp_voltage_source(*m, *n, *branch, wave.value(0.0)),
            Prepared::Isource { m, n, amps } => asm.stamp_current_source(*m, *n, *amps),
            Prepared::Machine {
                slots, omega_r0, ..
            } => {
                // Cold start: currents pinned to zero, speed to ω_r0; the
                // machine draws nothing from the abc nodes at t = 0.
                for s in [slots.ids(), slots.iqs(), slots.idr(), slots.iqr()] {
                    asm.add_y(StampPart::Lin, Some(s), Some(s), 1.0);
                }
                asm.add_y(StampPart::Lin, Some(slots.omega()), Some(slots.omega()), 1.0);
                asm.add_j(StampPart::Lin, Some(slots.omega()), *omega_r0);
            }
        }
    }

    let (y, j) = asm.assemble().map_err(|e| match e {
        SparseError::Singular { col } => EngineError::SingularDc {
            unknown: dc_unknown_name(pc, col, &short_slot, &cap_ic_slot),
        },
        SparseError::IndexOutOfBounds { .. } => unreachable!("stamps are index-checked"),
    })?;
    let x_dc = y.solve(&j).map_err(|e| match e {
        SparseError::Singular { col } => EngineError::SingularDc {
            unknown: dc_unknown_name(pc, col, &short_slot, &cap_ic_slot),
        },
        SparseError::IndexOutOfBounds { .. } => unreachable!(),
    })?;

    let mut histories = pc.fresh_histories();
    let v_at = |slot: Slot| slot.map_or(0.0, |s| x_dc[s]);
    for d in &pc.devices {
        match d {
            Prepared::Inductor {
                m, n, hist, ic, ..
            } => {
                // Shorted at DC: zero volts across, current from the
                // solve. A prescribed current sees whatever voltage the
                // rest of the DC network imposes at t = 0+.
                histories.inductors[*hist] = match ic {
                    Some(i0) => InductorHistory {
                        i_prev: *i0,
                        v_prev: v_at(*m) - v_at(*n),
                    },
                    None => InductorHistory {
                        i_prev: x_dc[short_slot[hist]],
                        v_prev: 0.0,
                    },
                };
            }
            Prepared::Capacitor { m, n, hist, ic, .. } => {
                // Open at DC: zero current, voltage from the solve. A
                // prescribed voltage carries the t = 0+ current of its
                // holding source so the first trapezoidal step starts
                // from a consistent derivative.
                histories.capacitors[*hist] = match ic {
                    Some(v0) => CapacitorHistory {
                        v_prev: *v0,
                        i_prev: x_dc[cap_ic_slot[hist]],
                    },
                    None => CapacitorHistory {
                        v_prev: v_at(*m) - v_at(*n),
                        i_prev: 0.0,
                    },
                };
            }
            Prepared::CoupledPair { sides, hist, .. } => {
                histories.pairs[*hist] = CoupledCoilHistory {
                    i_prev: [x_dc[sides[0].branch], x_dc[sides[1].branch]],
                    ..CoupledCoilHistory::default()
                };
            }
            _ => {}
        }
    }

    let audit = RowAudit {
        residual_inf: residual_inf(&y, &x_dc, &j),
        rhs_scale: norm_inf(&j).max(1.0),
        vsrc_deviation_inf: pc.vsrc_deviation(&x_dc, 0.0),
        nr_iterations: 1,
    };

    Ok(DcResult {
        x0: x_dc[..n].to_vec(),
        histories,
        audit,
    })
}

fn dc_unknown_name(
    pc: &PreparedCircuit,
    col: usize,
    short_slot: &HashMap<usize, usize>,
    cap_ic_slot: &HashMap<usize, usize>,
) -> String {
    if col < pc.n() {
        return pc.index.label(col).column_name();
    }
    for d in &pc.devices {
        match d {
            Prepared::Inductor { hist, label, .. } if short_slot.get(hist) == Some(&col) => {
                return label.clone();
            }
            Prepared::Capacitor { hist, .. } if cap_ic_slot.get(hist) == Some(&col) => {
                return format!("dc ic branch {col}");
            }
            _ => {}
        }
    }
    format!("slot {col}")
}

/// Standalone DC operating point of a validated circuit: the solution
/// vector over the transient unknowns at `t = 0`.
pub fn dc_operating_point(circuit: &Circuit) -> Result<Vec<f64>, EngineError> {
    crate::netlist::validate(circuit).map_err(EngineError::Invalid)?;
    let pc = prepare(circuit)?;
    Ok(dc_operating_point_prepared(&pc)?.x0)
}

/// Waveform column names a run of this circuit would produce, unknowns
/// first and derived series after, without solving anything.
pub fn column_labels(circuit: &Circuit) -> Result<Vec<String>, EngineError> {
    crate::netlist::validate(circuit).map_err(EngineError::Invalid)?;
    let pc = prepare(circuit)?;
    Ok(pc
        .index
        .labels()
        .iter()
        .map(|l| l.column_name())
        .chain(pc.derived_labels.iter().cloned())
        .collect())
}

/// The assembled first-step system (first Newton iteration, anchored at
/// the DC state), for external diffing.
pub fn first_step_system(
    circuit: &Circuit,
    cfg: &SolverConfig,
) -> Result<(CscMatrix, Vec<f64>, Vec<String>), EngineError> {
    crate::netlist::validate(circuit).map_err(EngineError::Invalid)?;
    let pc = prepare(circuit)?;
    let dc = dc_operating_point_prepared(&pc)?;
    let mut asm = SystemAssembly::new(pc.n());
    let dt = cfg.dt0;
    pc.stamp_linear(&mut asm, &dc.histories, dt, dt);
    pc.stamp_nonlinear(&mut asm, &dc.x0);
    let (y, j) = asm.assemble().map_err(|e| match e {
        SparseError::Singular { col } => EngineError::Singular {
            time: dt,
            unknown: pc.index.label(col).column_name(),
        },
        SparseError::IndexOutOfBounds { .. } => unreachable!(),
    })?;
    let labels = pc
        .index
        .labels()
        .iter()
        .map(|l| l.column_name())
        .collect();
    Ok((y, j, labels))
}

struct Attempt {
    x_half: Vec<f64>,
    hist_mid: Histories,
    err: f64,
    iterations: u32,
}

/// Runs the full transient: DC initialization, then the adaptive
/// recursive solve loop until `t_stop`.
pub fn run_transient(circuit: &Circuit, cfg: &SolverConfig) -> Result<Waveforms, EngineError> {
    crate::netlist::validate(circuit).map_err(EngineError::Invalid)?;
    let pc = prepare(circuit)?;
    let n = pc.n();

    let mut wave = Waveforms {
        labels: pc
            .index
            .labels()
            .iter()
            .map(|l| l.column_name())
            .chain(pc.derived_labels.iter().cloned())
            .collect(),
        unknown_count: n,
        ..Waveforms::default()
    };
    wave.columns = vec![Vec::new(); wave.labels.len()];

    let dc = dc_operating_point_prepared(&pc)?;
    let mut x = dc.x0;
    let mut hist = dc.histories;
    let derived0 = pc.derived_values(&x, &hist);
    let row0: Vec<f64> = x.iter().copied().chain(derived0).collect();
    wave.push_row(0.0, &row0, dc.audit);

    if cfg.t_stop <= 0.0 {
        return Ok(wave);
    }

    let nr_fail = |t: f64, e: NrError| match e {
        NrError::MaxIterationsExceeded {
            iterations,
            residual,
            ..
        } => EngineError::NrFailure {
            time: t,
            iterations,
            residual,
        },
        NrError::Singular(SparseError::Singular { col }) => EngineError::Singular {
            time: t,
            unknown: pc.index.label(col).column_name(),
        },
        NrError::Singular(SparseError::IndexOutOfBounds { .. }) => unreachable!(),
    };

    let attempt = |x: &[f64], hist: &Histories, t: f64, dt: f64| -> Result<Attempt, NrError> {
        let (x_full, it_full) = pc.step(x, hist, t + dt, dt, cfg)?;
        let half = dt / 2.0;
        let (x_h1, it_h1) = pc.step(x, hist, t + half, half, cfg)?;
        let hist_mid = pc.advance_histories(hist, &x_h1, half);
        let (x_h2, it_h2) = pc.step(&x_h1, &hist_mid, t + dt, half, cfg)?;
        // Richardson estimate for a second-order method: the half-step
        // route's error is a third of the route difference.
        let diff = x_full
            .iter()
            .zip(&x_h2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let err = diff / (3.0 * norm_inf(&x_h2).max(1.0));
        Ok(Attempt {
            x_half: x_h2,
            hist_mid,
            err,
            iterations: it_full.max(it_h1).max(it_h2),
        })
    };

    let mut t = 0.0;
    let mut dt = cfg.dt0.clamp(cfg.dt_min, cfg.dt_max);
    let mut nr_retried = false;

    while t < cfg.t_stop {
        let remaining = cfg.t_stop - t;
        // Absorb float-accumulation slivers into the final step rather
        // than taking a degenerate extra step.
        let truncated = remaining <= dt * (1.0 + 1e-9);
        let dt_step = if truncated { remaining } else { dt };

        let outcome = match attempt(&x, &hist, t, dt_step) {
            Ok(o) => o,
            Err(e) => {
                // One retry at half the step before aborting.
                let dt_retry = (dt_step / 2.0).max(cfg.dt_min);
                if nr_retried || dt_retry >= dt_step {
                    return Err(nr_fail(t + dt_step, e));
                }
                nr_retried = true;
                dt = dt_retry;
                continue;
            }
        };

        let decision = adapt_dt(outcome.err, dt_step, cfg);
        if !decision.accept {
            dt = decision.dt_next;
            continue;
        }

        let t_next = if truncated { cfg.t_stop } else { t + dt_step };
        if decision.at_floor {
            wave.warnings.push(StepWarning {
                time: t_next,
                message: format!(
                    "LTE {:.3e} exceeds tolerance {:.3e} at the dt_min floor",
                    outcome.err, cfg.lte_tol
                ),
            });
        }
        let half = dt_step / 2.0;
        let hist_next = pc.advance_histories(&outcome.hist_mid, &outcome.x_half, half);
        let audit = pc
            .audit(
                &outcome.x_half,
                &outcome.hist_mid,
                t_next,
                half,
                outcome.iterations,
            )
            .map_err(|e| nr_fail(t_next, e))?;
        x = outcome.x_half;
        hist = hist_next;
        let derived = pc.derived_values(&x, &hist);
        let row: Vec<f64> = x.iter().copied().chain(derived).collect();
        wave.push_row(t_next, &row, audit);
        t = t_next;
        if !truncated {
            dt = decision.dt_next;
        }
        nr_retried = false;
    }

    Ok(wave)
}
