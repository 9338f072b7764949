//! Modified nodal analysis: the bijection between circuit quantities and
//! solution-vector slots, plus the per-iteration accumulation of device
//! stamps into the sparse system `Y·X = J`.
//!
//! Stamps accumulate as triplets in two parts: `Lin` stamps persist for a
//! whole time step, `Nlin` stamps are discarded and re-stamped on every
//! Newton iteration. Assembly sums duplicates; ground (the reference
//! node) is handled by eliding any term whose row or column is ground.

use std::collections::HashMap;

use crate::netlist::{Circuit, DeviceKind, GROUND};
use crate::sparse::{CscMatrix, CscPattern, SparseError, Triplet};

/// A solution-vector position, or `None` for the ground reference.
pub type Slot = Option<usize>;

/// What one slot of the solution vector means.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnknownLabel {
    /// Voltage of a non-ground node.
    NodeVoltage(String),
    /// Branch current through a voltage source, positive from node m
    /// through the source to node n.
    SourceCurrent(String),
    /// Branch current through one coil of a coupled pair.
    CoilCurrent(String),
    /// One of the five machine variables of an induction motor.
    MachineVar(String, MachineVar),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachineVar {
    Ids,
    Iqs,
    Idr,
    Iqr,
    OmegaR,
}

impl MachineVar {
    pub const ALL: [MachineVar; 5] = [
        MachineVar::Ids,
        MachineVar::Iqs,
        MachineVar::Idr,
        MachineVar::Iqr,
        MachineVar::OmegaR,
    ];

    pub fn suffix(&self) -> &'static str {
        match self {
            MachineVar::Ids => "ids",
            MachineVar::Iqs => "iqs",
            MachineVar::Idr => "idr",
            MachineVar::Iqr => "iqr",
            MachineVar::OmegaR => "wr",
        }
    }
}

impl UnknownLabel {
    /// Column name used in waveform output.
    pub fn column_name(&self) -> String {
        match self {
            UnknownLabel::NodeVoltage(n) => format!("v({n})"),
            UnknownLabel::SourceCurrent(n) | UnknownLabel::CoilCurrent(n) => format!("i({n})"),
            UnknownLabel::MachineVar(n, var) => format!("{}({n})", var.suffix()),
        }
    }
}

/// Deterministic bijection between circuit quantities and slots
/// `0..N-1`: non-ground nodes in first-appearance order, then voltage
/// source branch currents, then coupled-coil branch currents, then one
/// five-slot block per induction motor.
#[derive(Debug, Clone)]
pub struct UnknownIndex {
    labels: Vec<UnknownLabel>,
    node_slot: HashMap<String, usize>,
    vsrc_slot: HashMap<String, usize>,
    coil_slot: HashMap<String, usize>,
    im_base: HashMap<String, usize>,
}

impl UnknownIndex {
    /// Dimension `N` of the system.
    pub fn total(&self) -> usize {
        self.labels.len()
    }

    /// Slot of a node name; ground maps to `None`.
    pub fn node(&self, name: &str) -> Slot {
        if name == GROUND {
            None
        } else {
            Some(self.node_slot[name])
        }
    }

    pub fn vsrc(&self, name: &str) -> usize {
        self.vsrc_slot[name]
    }

    /// Branch-current slot of a coupled inductor, if that inductor is
    /// part of a mutual pair.
    pub fn coil(&self, inductor: &str) -> Option<usize> {
        self.coil_slot.get(inductor).copied()
    }

    /// Base of the five-slot machine block.
    pub fn im_base(&self, name: &str) -> usize {
        self.im_base[name]
    }

    pub fn labels(&self) -> &[UnknownLabel] {
        &self.labels
    }

    pub fn label(&self, slot: usize) -> &UnknownLabel {
        &self.labels[slot]
    }
}

/// Builds the unknown ordering for a validated circuit.
pub fn build_index(circuit: &Circuit) -> UnknownIndex {
    let mut labels = Vec::new();
    let mut node_slot = HashMap::new();
    let mut vsrc_slot = HashMap::new();
    let mut coil_slot = HashMap::new();
    let mut im_base = HashMap::new();

    for device in &circuit.devices {
        for node in device.kind.nodes() {
            if node != GROUND && !node_slot.contains_key(node) {
                node_slot.insert(node.to_string(), labels.len());
                labels.push(UnknownLabel::NodeVoltage(node.to_string()));
            }
        }
    }
    for device in &circuit.devices {
        match &device.kind {
            DeviceKind::VsourceSin { .. } | DeviceKind::VsourceDc { .. } => {
                vsrc_slot.insert(device.name.clone(), labels.len());
                labels.push(UnknownLabel::SourceCurrent(device.name.clone()));
            }
            _ => {}
        }
    }
    for device in &circuit.devices {
        if let DeviceKind::Mutual { coils, .. } = &device.kind {
            for coil in coils {
                coil_slot.insert(coil.clone(), labels.len());
                labels.push(UnknownLabel::CoilCurrent(coil.clone()));
            }
        }
    }
    for device in &circuit.devices {
        if let DeviceKind::InductionMotor { .. } = &device.kind {
            im_base.insert(device.name.clone(), labels.len());
            for var in MachineVar::ALL {
                labels.push(UnknownLabel::MachineVar(device.name.clone(), var));
            }
        }
    }

    UnknownIndex {
        labels,
        node_slot,
        vsrc_slot,
        coil_slot,
        im_base,
    }
}

/// Which part of the system a stamp belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StampPart {
    /// Fixed for the whole time step.
    Lin,
    /// Rebuilt every Newton iteration.
    Nlin,
}

/// Triplet-form accumulation of one time step's system, split into the
/// iteration-invariant and iteration-dependent parts.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemAssembly {
    n: usize,
    triplets_lin: Vec<Triplet>,
    triplets_nlin: Vec<Triplet>,
    j_lin: Vec<f64>,
    j_nlin: Vec<f64>,
}

impl SystemAssembly {
    pub fn new(n: usize) -> SystemAssembly {
        SystemAssembly {
            n,
            triplets_lin: Vec::new(),
            triplets_nlin: Vec::new(),
            j_lin: vec![0.0; n],
            j_nlin: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Drops all Newton-dependent stamps, keeping the linear part intact
    /// for the next iteration of the same time step.
    pub fn clear_nlin(&mut self) {
        self.triplets_nlin.clear();
        self.j_nlin.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `value` at `(row, col)`; dropped if either index is ground.
    pub fn add_y(&mut self, part: StampPart, row: Slot, col: Slot, value: f64) {
        if let (Some(r), Some(c)) = (row, col) {
            debug_assert!(r < self.n && c < self.n);
            match part {
                StampPart::Lin => self.triplets_lin.push((r, c, value)),
                StampPart::Nlin => self.triplets_nlin.push((r, c, value)),
            }
        }
    }

    /// Adds `value` to the source vector at `row`; dropped if ground.
    pub fn add_j(&mut self, part: StampPart, row: Slot, value: f64) {
        if let Some(r) = row {
            debug_assert!(r < self.n);
            match part {
                StampPart::Lin => self.j_lin[r] += value,
                StampPart::Nlin => self.j_nlin[r] += value,
            }
        }
    }

    /// Conductance `G` between nodes m and n.
    pub fn stamp_conductance(&mut self, part: StampPart, m: Slot, n: Slot, g: f64) {
        self.add_y(part, m, m, g);
        self.add_y(part, n, n, g);
        self.add_y(part, m, n, -g);
        self.add_y(part, n, m, -g);
    }

    /// Resistor `R` between nodes m and n.
    pub fn stamp_resistor(&mut self, m: Slot, n: Slot, r: f64) {
        debug_assert!(r > 0.0);
        self.stamp_conductance(StampPart::Lin, m, n, 1.0 / r);
    }

    /// Independent current source driving `i` amperes from node m through
    /// the source into node n. Only the source vector changes.
    pub fn stamp_current_source(&mut self, m: Slot, n: Slot, i: f64) {
        self.add_j(StampPart::Lin, m, -i);
        self.add_j(StampPart::Lin, n, i);
    }

    /// Independent voltage source `V_m − V_n = vs` with its branch
    /// current (positive from m through the source to n) at `branch`.
    pub fn stamp_voltage_source(&mut self, m: Slot, n: Slot, branch: usize, vs: f64) {
        let b = Some(branch);
        self.add_y(StampPart::Lin, m, b, 1.0);
        self.add_y(StampPart::Lin, n, b, -1.0);
        self.add_y(StampPart::Lin, b, m, 1.0);
        self.add_y(StampPart::Lin, b, n, -1.0);
        self.add_j(StampPart::Lin, b, vs);
    }

    pub fn lin_triplets(&self) -> &[Triplet] {
        &self.triplets_lin
    }

    pub fn nlin_triplets(&self) -> &[Triplet] {
        &self.triplets_nlin
    }

    pub fn j_lin(&self) -> &[f64] {
        &self.j_lin
    }

    pub fn j_nlin(&self) -> &[f64] {
        &self.j_nlin
    }

    /// Sums duplicates into compressed form: `Y = lin + nlin`,
    /// `J = j_lin + j_nlin`.
    pub fn assemble(&self) -> Result<(CscMatrix, Vec<f64>), SparseError> {
        let pattern = self.pattern()?;
        Ok(self.assemble_with(&pattern))
    }

    /// Sparsity pattern of the current triplet sequence, reusable across
    /// Newton iterations of one time step (stamp positions are
    /// iterate-independent; only values change).
    pub fn pattern(&self) -> Result<CscPattern, SparseError> {
        let all: Vec<Triplet> = self
            .triplets_lin
            .iter()
            .chain(&self.triplets_nlin)
            .copied()
            .collect();
        CscPattern::build(self.n, &all)
    }

    /// Assembles against a previously computed pattern.
    pub fn assemble_with(&self, pattern: &CscPattern) -> (CscMatrix, Vec<f64>) {
        let all: Vec<Triplet> = self
            .triplets_lin
            .iter()
            .chain(&self.triplets_nlin)
            .copied()
            .collect();
        let y = pattern.fill(&all);
        let j = self
            .j_lin
            .iter()
            .zip(&self.j_nlin)
            .map(|(a, b)| a + b)
            .collect();
        (y, j)
    }
}
