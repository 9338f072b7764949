//! Line-oriented netlist format: parsing, validation and the canonical
//! unparsed form.
//!
//! ```text
//! * comment                                 (blank lines are skipped)
//! .title <free text>                        (optional)
//! R    <name> <n+> <n->  <ohms>
//! L    <name> <n+> <n->  <henries> [ic=<amperes>]
//! C    <name> <n+> <n->  <farads>  [ic=<volts>]
//! K    <name> <L1> <L2>  <mutual henries>
//! VSIN <name> <n+> <n->  <Vm> <freq_hz> <phase_deg>
//! VDC  <name> <n+> <n->  <volts>
//! IDC  <name> <n+> <n->  <amperes>
//! IM   <name> <na> <nb> <nc> rs= rr= lls= llr= lm= j= np=
//!                            [d=0] [tl0=0] [tl1=0] [tl2=0] [wr0=0]
//! .tran <dt0> <t_stop> [<dt_min> <dt_max> [<lte_tol>]]
//! .end
//! ```
//!
//! Keywords and device kinds are case-insensitive; node names are taken
//! verbatim and node `0` is ground. Numeric literals accept engineering
//! suffixes `k`, `meg`, `m`, `u`, `n` (case-insensitive); any alphabetic
//! tail after the suffix is ignored, so `5mH` reads as `5m`. A sinusoidal
//! source is `v(t) = Vm·cos(2π·f·t + phase)`, so its value at `t = 0` is
//! `Vm·cos(phase)` and DC initialization switches smoothly. When the
//! short `.tran` form is used, `dt_min = dt_max = dt0` (fixed-step run)
//! and `lte_tol = 1e-4`.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::induction_motor::ImParams;

/// Name of the reference node.
pub const GROUND: &str = "0";

/// Default LTE tolerance when `.tran` does not give one.
pub const DEFAULT_LTE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub title: String,
    pub devices: Vec<Device>,
    /// Node names in first-appearance order (ground included if used).
    pub node_names: Vec<String>,
    pub tran: TranDirective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub name: String,
    pub kind: DeviceKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceKind {
    Resistor {
        nodes: [String; 2],
        ohms: f64,
    },
    Inductor {
        nodes: [String; 2],
        henries: f64,
        /// Initial current override; `None` means DC operating point.
        ic: Option<f64>,
    },
    Capacitor {
        nodes: [String; 2],
        farads: f64,
        /// Initial voltage override; `None` means DC operating point.
        ic: Option<f64>,
    },
    /// Mutual coupling between two inductor devices named in `coils`.
    Mutual {
        coils: [String; 2],
        henries: f64,
    },
    VsourceSin {
        nodes: [String; 2],
        vm: f64,
        freq: f64,
        phase_deg: f64,
    },
    VsourceDc {
        nodes: [String; 2],
        volts: f64,
    },
    IsourceDc {
        nodes: [String; 2],
        amps: f64,
    },
    InductionMotor {
        nodes: [String; 3],
        params: ImParams,
        omega_r0: f64,
    },
}

impl DeviceKind {
    /// Terminal node names (the mutual element references coils, not
    /// nodes, and contributes none).
    pub fn nodes(&self) -> &[String] {
        match self {
            DeviceKind::Resistor { nodes, .. }
            | DeviceKind::Inductor { nodes, .. }
            | DeviceKind::Capacitor { nodes, .. }
            | DeviceKind::VsourceSin { nodes, .. }
            | DeviceKind::VsourceDc { nodes, .. }
            | DeviceKind::IsourceDc { nodes, .. } => nodes,
            DeviceKind::InductionMotor { nodes, .. } => nodes,
            DeviceKind::Mutual { .. } => &[],
        }
    }

    fn keyword(&self) -> &'static str {
        match self {
            DeviceKind::Resistor { .. } => "R",
            DeviceKind::Inductor { .. } => "L",
            DeviceKind::Capacitor { .. } => "C",
            DeviceKind::Mutual { .. } => "K",
            DeviceKind::VsourceSin { .. } => "VSIN",
            DeviceKind::VsourceDc { .. } => "VDC",
            DeviceKind::IsourceDc { .. } => "IDC",
            DeviceKind::InductionMotor { .. } => "IM",
        }
    }
}

/// The `.tran` analysis directive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranDirective {
    /// Initial step (seconds).
    pub dt0: f64,
    /// End of the simulated span (seconds).
    pub t_stop: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Dimensionless local-truncation-error tolerance.
    pub lte_tol: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetlistError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown device kind '{kind}'")]
    UnknownDeviceKind { line: usize, kind: String },
    #[error("line {line}: duplicate device name '{name}'")]
    DuplicateDevice { line: usize, name: String },
    #[error("missing .tran directive")]
    MissingTranDirective,
    #[error("missing .end")]
    MissingEnd,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("device '{device}': {param} must be positive, got {value}")]
    NonPositiveValue {
        device: String,
        param: &'static str,
        value: f64,
    },
    #[error("device '{device}': {param} must be non-negative, got {value}")]
    NegativeValue {
        device: String,
        param: &'static str,
        value: f64,
    },
    #[error("device '{device}': mutual inductance violates passivity (M² > L1·L2)")]
    PassivityViolation { device: String },
    #[error("device '{device}': coupled coil '{coil}' is not an inductor in this circuit")]
    UnknownCoil { device: String, coil: String },
    #[error("device '{device}': inductor '{coil}' is already coupled by another K element")]
    CoilReused { device: String, coil: String },
    #[error(
        "device '{device}': coupled inductor '{coil}' must not carry an ic override \
         (coupled-coil currents come from the DC solve)"
    )]
    IcOnCoupledInductor { device: String, coil: String },
    #[error("device '{device}': pole count must be a positive even integer, got {np}")]
    OddPoleCount { device: String, np: u32 },
    #[error("node '{node}' is dangling (referenced by fewer than two device terminals)")]
    DanglingNode { node: String },
    #[error("no device references the ground node '0'")]
    NoGroundReference,
    #[error(".tran: {message}")]
    BadTran { message: String },
}

/// Multiplier for an engineering suffix; the suffix table of the format.
pub fn suffix_factor(suffix: &str) -> Option<f64> {
    match suffix {
        "" => Some(1.0),
        "k" => Some(1e3),
        "meg" => Some(1e6),
        "m" => Some(1e-3),
        "u" => Some(1e-6),
        "n" => Some(1e-9),
        _ => None,
    }
}

/// Parses a numeric literal with an optional engineering suffix and an
/// ignored alphabetic unit tail (`100`, `5m`, `4.7u`, `1meg`, `5mH`).
pub fn parse_value(token: &str) -> Result<f64, String> {
    let lower = token.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    // Find where the mantissa ends: first alphabetic char that does not
    // continue an exponent.
    let mut split = bytes.len();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_alphabetic() {
            if c == 'e'
                && i + 1 < bytes.len()
                && (bytes[i + 1].is_ascii_digit() || bytes[i + 1] == b'+' || bytes[i + 1] == b'-')
                && i > 0
                && (bytes[i - 1].is_ascii_digit() || bytes[i - 1] == b'.')
            {
                i += 2;
                continue;
            }
            split = i;
            break;
        }
        i += 1;
    }
    let (mantissa, tail) = lower.split_at(split);
    let base: f64 = mantissa
        .parse()
        .map_err(|_| format!("invalid number '{token}'"))?;
    if tail.is_empty() {
        return Ok(base);
    }
    // Longest suffix first, then ignore any unit letters that follow.
    for s in ["meg", "k", "m", "u", "n"] {
        if let Some(rest) = tail.strip_prefix(s) {
            if rest.chars().all(|c| c.is_ascii_alphabetic()) {
                return Ok(base * suffix_factor(s).unwrap());
            }
        }
    }
    Err(format!("unknown suffix '{tail}' in '{token}'"))
}

struct LineCtx<'a> {
    line: usize,
    raw: &'a str,
}

impl LineCtx<'_> {
    fn syntax(&self, message: impl Into<String>) -> NetlistError {
        NetlistError::Syntax {
            line: self.line,
            message: message.into(),
        }
    }

    fn value(&self, token: &str) -> Result<f64, NetlistError> {
        parse_value(token).map_err(|m| self.syntax(m))
    }
}

/// Parses netlist text into a [`Circuit`]. Devices appear in file order;
/// parsing stops at `.end`. The result is structurally sound but not yet
/// checked against the electrical invariants; see [`validate`].
pub fn parse_netlist(text: &str) -> Result<Circuit, NetlistError> {
    let mut devices: Vec<Device> = Vec::new();
    let mut names_lower: HashSet<String> = HashSet::new();
    let mut title = String::new();
    let mut tran: Option<TranDirective> = None;
    let mut saw_end = false;

    for (line_no, raw) in text.lines().enumerate() {
        let ctx = LineCtx {
            line: line_no + 1,
            raw,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let keyword = tokens[0].to_ascii_uppercase();
        match keyword.as_str() {
            ".END" => {
                saw_end = true;
                break;
            }
            ".TITLE" => {
                title = line[tokens[0].len()..].trim().to_string();
            }
            ".TRAN" => {
                if tran.is_some() {
                    return Err(ctx.syntax("duplicate .tran directive"));
                }
                tran = Some(parse_tran(&ctx, &tokens)?);
            }
            k if k.starts_with('.') => {
                return Err(ctx.syntax(format!("unknown directive '{}'", tokens[0])));
            }
            _ => {
                let device = parse_device(&ctx, &keyword, &tokens)?;
                if !names_lower.insert(device.name.to_ascii_lowercase()) {
                    return Err(NetlistError::DuplicateDevice {
                        line: ctx.line,
                        name: device.name.clone(),
                    });
                }
                devices.push(device);
            }
        }
    }

    if !saw_end {
        return Err(NetlistError::MissingEnd);
    }
    let tran = tran.ok_or(NetlistError::MissingTranDirective)?;

    let mut node_names = Vec::new();
    let mut seen = HashSet::new();
    for device in &devices {
        for node in device.kind.nodes() {
            if seen.insert(node.clone()) {
                node_names.push(node.clone());
            }
        }
    }

    Ok(Circuit {
        title,
        devices,
        node_names,
        tran,
    })
}

fn parse_tran(ctx: &LineCtx, tokens: &[&str]) -> Result<TranDirective, NetlistError> {
    match tokens.len() {
        3 | 5 | 6 => {}
        _ => {
            return Err(ctx.syntax(format!(
                ".tran expects <dt0> <t_stop> [<dt_min> <dt_max> [<lte_tol>]], got: {}",
                ctx.raw.trim()
            )))
        }
    }
    let dt0 = ctx.value(tokens[1])?;
    let t_stop = ctx.value(tokens[2])?;
    let (dt_min, dt_max) = if tokens.len() >= 5 {
        (ctx.value(tokens[3])?, ctx.value(tokens[4])?)
    } else {
        (dt0, dt0)
    };
    let lte_tol = if tokens.len() == 6 {
        ctx.value(tokens[5])?
    } else {
        DEFAULT_LTE_TOL
    };
    Ok(TranDirective {
        dt0,
        t_stop,
        dt_min,
        dt_max,
        lte_tol,
    })
}

fn parse_device(ctx: &LineCtx, keyword: &str, tokens: &[&str]) -> Result<Device, NetlistError> {
    let need = |n: usize, usage: &str| -> Result<(), NetlistError> {
        if tokens.len() != n {
            Err(ctx.syntax(format!("expected '{usage}', got: {}", ctx.raw.trim())))
        } else {
            Ok(())
        }
    };
    let need_at_least = |n: usize, usage: &str| -> Result<(), NetlistError> {
        if tokens.len() < n {
            Err(ctx.syntax(format!("expected '{usage}', got: {}", ctx.raw.trim())))
        } else {
            Ok(())
        }
    };
    let node2 = |a: usize| -> [String; 2] { [tokens[a].to_string(), tokens[a + 1].to_string()] };

    let kind = match keyword {
        "R" => {
            need(5, "R <name> <n+> <n-> <ohms>")?;
            DeviceKind::Resistor {
                nodes: node2(2),
                ohms: ctx.value(tokens[4])?,
            }
        }
        "L" | "C" => {
            need_at_least(5, "L/C <name> <n+> <n-> <value> [ic=<x>]")?;
            let mut ic = None;
            for t in &tokens[5..] {
                match t.to_ascii_lowercase().strip_prefix("ic=") {
                    Some(v) => ic = Some(ctx.value(v)?),
                    None => return Err(ctx.syntax(format!("unexpected token '{t}'"))),
                }
            }
            let value = ctx.value(tokens[4])?;
            if keyword == "L" {
                DeviceKind::Inductor {
                    nodes: node2(2),
                    henries: value,
                    ic,
                }
            } else {
                DeviceKind::Capacitor {
                    nodes: node2(2),
                    farads: value,
                    ic,
                }
            }
        }
        "K" => {
            need(5, "K <name> <L1> <L2> <mutual henries>")?;
            DeviceKind::Mutual {
                coils: [tokens[2].to_string(), tokens[3].to_string()],
                henries: ctx.value(tokens[4])?,
            }
        }
        "VSIN" => {
            need(7, "VSIN <name> <n+> <n-> <Vm> <freq> <phase_deg>")?;
            DeviceKind::VsourceSin {
                nodes: node2(2),
                vm: ctx.value(tokens[4])?,
                freq: ctx.value(tokens[5])?,
                phase_deg: ctx.value(tokens[6])?,
            }
        }
        "VDC" => {
            need(5, "VDC <name> <n+> <n-> <volts>")?;
            DeviceKind::VsourceDc {
                nodes: node2(2),
                volts: ctx.value(tokens[4])?,
            }
        }
        "IDC" => {
            need(5, "IDC <name> <n+> <n-> <amperes>")?;
            DeviceKind::IsourceDc {
                nodes: node2(2),
                amps: ctx.value(tokens[4])?,
            }
        }
        "IM" => {
            need_at_least(6, "IM <name> <na> <nb> <nc> key=value...")?;
            parse_im(ctx, tokens)?
        }
        other => {
            return Err(NetlistError::UnknownDeviceKind {
                line: ctx.line,
                kind: other.to_string(),
            })
        }
    };
    Ok(Device {
        name: tokens[1].to_string(),
        kind,
    })
}

fn parse_im(ctx: &LineCtx, tokens: &[&str]) -> Result<DeviceKind, NetlistError> {
    let nodes = [
        tokens[2].to_string(),
        tokens[3].to_string(),
        tokens[4].to_string(),
    ];
    let mut rs = None;
    let mut rr = None;
    let mut lls = None;
    let mut llr = None;
    let mut lm = None;
    let mut inertia = None;
    let mut poles = None;
    let mut damping = 0.0;
    let mut tl = [0.0; 3];
    let mut omega_r0 = 0.0;
    for t in &tokens[5..] {
        let (key, value) = t
            .split_once('=')
            .ok_or_else(|| ctx.syntax(format!("expected key=value, got '{t}'")))?;
        let v = ctx.value(value)?;
        match key.to_ascii_lowercase().as_str() {
            "rs" => rs = Some(v),
            "rr" => rr = Some(v),
            "lls" => lls = Some(v),
            "llr" => llr = Some(v),
            "lm" => lm = Some(v),
            "j" => inertia = Some(v),
            "d" => damping = v,
            "np" => {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(ctx.syntax(format!("np must be a non-negative integer, got {value}")));
                }
                poles = Some(v as u32);
            }
            "tl0" => tl[0] = v,
            "tl1" => tl[1] = v,
            "tl2" => tl[2] = v,
            "wr0" => omega_r0 = v,
            other => return Err(ctx.syntax(format!("unknown IM parameter '{other}'"))),
        }
    }
    let mut missing = Vec::new();
    let mut req = |name: &'static str, v: Option<f64>| {
        if v.is_none() {
            missing.push(name);
        }
        v.unwrap_or(0.0)
    };
    let params = ImParams {
        rs: req("rs", rs),
        rr: req("rr", rr),
        lls: req("lls", lls),
        llr: req("llr", llr),
        lm: req("lm", lm),
        inertia: req("j", inertia),
        damping,
        poles: poles.unwrap_or_else(|| {
            missing.push("np");
            0
        }),
        tl,
    };
    if !missing.is_empty() {
        return Err(ctx.syntax(format!("IM missing required parameters: {}", missing.join(", "))));
    }
    Ok(DeviceKind::InductionMotor {
        nodes,
        params,
        omega_r0,
    })
}

/// Checks every electrical invariant, collecting one entry per violation.
/// Returns the circuit unchanged on success.
pub fn validate(circuit: &Circuit) -> Result<(), Vec<ValidationError>> {
    let mut errors = Vec::new();
    let positive = |errors: &mut Vec<ValidationError>, device: &str, param: &'static str, v: f64| {
        if v <= 0.0 || !v.is_finite() {
            errors.push(ValidationError::NonPositiveValue {
                device: device.to_string(),
                param,
                value: v,
            });
        }
    };
    let non_negative =
        |errors: &mut Vec<ValidationError>, device: &str, param: &'static str, v: f64| {
            if v < 0.0 || !v.is_finite() {
                errors.push(ValidationError::NegativeValue {
                    device: device.to_string(),
                    param,
                    value: v,
                });
            }
        };

    let inductance_of = |name: &str| -> Option<(f64, bool)> {
        circuit.devices.iter().find_map(|d| match &d.kind {
            DeviceKind::Inductor { henries, ic, .. } if d.name == name => {
                Some((*henries, ic.is_some()))
            }
            _ => None,
        })
    };

    let mut coupled: HashSet<&str> = HashSet::new();
    for device in &circuit.devices {
        let name = device.name.as_str();
        match &device.kind {
            DeviceKind::Resistor { ohms, .. } => positive(&mut errors, name, "R", *ohms),
            DeviceKind::Inductor { henries, .. } => positive(&mut errors, name, "L", *henries),
            DeviceKind::Capacitor { farads, .. } => positive(&mut errors, name, "C", *farads),
            DeviceKind::Mutual { coils, henries } => {
                let mut ls = [0.0f64; 2];
                let mut ok = true;
                for (k, coil) in coils.iter().enumerate() {
                    match inductance_of(coil) {
                        Some((l, has_ic)) => {
                            ls[k] = l;
                            if has_ic {
                                errors.push(ValidationError::IcOnCoupledInductor {
                                    device: name.to_string(),
                                    coil: coil.clone(),
                                });
                            }
                        }
                        None => {
                            ok = false;
                            errors.push(ValidationError::UnknownCoil {
                                device: name.to_string(),
                                coil: coil.clone(),
                            });
                        }
                    }
                    if !coupled.insert(coil.as_str()) {
                        errors.push(ValidationError::CoilReused {
                            device: name.to_string(),
                            coil: coil.clone(),
                        });
                    }
                }
                if ok && henries * henries > ls[0] * ls[1] {
                    errors.push(ValidationError::PassivityViolation {
                        device: name.to_string(),
                    });
                }
            }
            DeviceKind::VsourceSin { .. }
            | DeviceKind::VsourceDc { .. }
            | DeviceKind::IsourceDc { .. } => {}
            DeviceKind::InductionMotor { params, .. } => {
                positive(&mut errors, name, "rs", params.rs);
                positive(&mut errors, name, "rr", params.rr);
                positive(&mut errors, name, "lls", params.lls);
                positive(&mut errors, name, "llr", params.llr);
                positive(&mut errors, name, "lm", params.lm);
                positive(&mut errors, name, "j", params.inertia);
                non_negative(&mut errors, name, "d", params.damping);
                non_negative(&mut errors, name, "tl0", params.tl[0]);
                non_negative(&mut errors, name, "tl1", params.tl[1]);
                non_negative(&mut errors, name, "tl2", params.tl[2]);
                if params.poles == 0 || params.poles % 2 != 0 {
                    errors.push(ValidationError::OddPoleCount {
                        device: name.to_string(),
                        np: params.poles,
                    });
                }
            }
        }
    }

    // Node degree: every node appears in at least two terminal lists, or
    // is ground.
    let mut degree: Vec<(String, usize)> = Vec::new();
    for device in &circuit.devices {
        for node in device.kind.nodes() {
            match degree.iter_mut().find(|(n, _)| n == node) {
                Some((_, d)) => *d += 1,
                None => degree.push((node.clone(), 1)),
            }
        }
    }
    for (node, d) in &degree {
        if node != GROUND && *d < 2 {
            errors.push(ValidationError::DanglingNode { node: node.clone() });
        }
    }
    if !circuit.devices.is_empty() && !degree.iter().any(|(n, _)| n == GROUND) {
        errors.push(ValidationError::NoGroundReference);
    }

    let t = &circuit.tran;
    for (cond, message) in [
        (t.dt_min > 0.0, "dt_min must be positive"),
        (t.dt_min <= t.dt0, "dt_min must not exceed dt0"),
        (t.dt0 <= t.dt_max, "dt0 must not exceed dt_max"),
        (t.dt_max < t.t_stop, "dt_max must be below t_stop"),
        (t.lte_tol > 0.0, "lte_tol must be positive"),
    ] {
        if !cond {
            errors.push(ValidationError::BadTran {
                message: message.to_string(),
            });
        }
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Canonical text form; parsing it back yields an identical [`Circuit`].
pub fn unparse(circuit: &Circuit) -> String {
    let mut out = String::new();
    if !circuit.title.is_empty() {
        let _ = writeln!(out, ".title {}", circuit.title);
    }
    for device in &circuit.devices {
        let name = &device.name;
        let kw = device.kind.keyword();
        match &device.kind {
            DeviceKind::Resistor { nodes, ohms } => {
                let _ = writeln!(out, "{kw} {name} {} {} {}", nodes[0], nodes[1], ohms);
            }
            DeviceKind::Inductor { nodes, henries, ic } => {
                let _ = write!(out, "{kw} {name} {} {} {}", nodes[0], nodes[1], henries);
                if let Some(ic) = ic {
                    let _ = write!(out, " ic={ic}");
                }
                out.push('\n');
            }
            DeviceKind::Capacitor { nodes, farads, ic } => {
                let _ = write!(out, "{kw} {name} {} {} {}", nodes[0], nodes[1], farads);
                if let Some(ic) = ic {
                    let _ = write!(out, " ic={ic}");
                }
                out.push('\n');
            }
            DeviceKind::Mutual { coils, henries } => {
                let _ = writeln!(out, "{kw} {name} {} {} {}", coils[0], coils[1], henries);
            }
            DeviceKind::VsourceSin {
                nodes,
                vm,
                freq,
                phase_deg,
            } => {
                let _ = writeln!(
                    out,
                    "{kw} {name} {} {} {vm} {freq} {phase_deg}",
                    nodes[0], nodes[1]
                );
            }
            DeviceKind::VsourceDc { nodes, volts } => {
                let _ = writeln!(out, "{kw} {name} {} {} {volts}", nodes[0], nodes[1]);
            }
            DeviceKind::IsourceDc { nodes, amps } => {
                let _ = writeln!(out, "{kw} {name} {} {} {amps}", nodes[0], nodes[1]);
            }
            DeviceKind::InductionMotor {
                nodes,
                params: p,
                omega_r0,
            } => {
                let _ = writeln!(
                    out,
                    "{kw} {name} {} {} {} rs={} rr={} lls={} llr={} lm={} j={} d={} np={} \
                     tl0={} tl1={} tl2={} wr0={}",
                    nodes[0],
                    nodes[1],
                    nodes[2],
                    p.rs,
                    p.rr,
                    p.lls,
                    p.llr,
                    p.lm,
                    p.inertia,
                    p.damping,
                    p.poles,
                    p.tl[0],
                    p.tl[1],
                    p.tl[2],
                    omega_r0
                );
            }
        }
    }
    let t = &circuit.tran;
    let _ = writeln!(
        out,
        ".tran {} {} {} {} {}",
        t.dt0, t.t_stop, t.dt_min, t.dt_max, t.lte_tol
    );
    out.push_str(".end\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wrap(body: &str) -> String {
        format!("{body}\n.tran 1e-5 1e-3\n.end\n")
    }

    #[test]
    fn parses_resistor_line() {
        let c = parse_netlist(&wrap("R Rline 1 2 1.0\nR Rload 2 0 4")).unwrap();
        assert_eq!(c.devices.len(), 2);
        assert_eq!(
            c.devices[0].kind,
            DeviceKind::Resistor {
                nodes: ["1".into(), "2".into()],
                ohms: 1.0
            }
        );
        assert_eq!(c.node_names, vec!["1", "2", "0"]);
    }

    #[test]
    fn parses_inductor_with_suffix() {
        let c = parse_netlist(&wrap("L Lload 2 0 5m\nR R1 2 0 1")).unwrap();
        match &c.devices[0].kind {
            DeviceKind::Inductor { henries, .. } => assert_eq!(*henries, 5.0 * 1e-3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parses_sin_source() {
        let c = parse_netlist(&wrap("VSIN Va 1 0 169.7 60 0\nR R1 1 0 1")).unwrap();
        assert_eq!(
            c.devices[0].kind,
            DeviceKind::VsourceSin {
                nodes: ["1".into(), "0".into()],
                vm: 169.7,
                freq: 60.0,
                phase_deg: 0.0
            }
        );
    }

    #[test]
    fn missing_tran_is_reported() {
        let err = parse_netlist("R R1 1 0 1\n.end\n").unwrap_err();
        assert_eq!(err, NetlistError::MissingTranDirective);
    }

    #[test]
    fn missing_end_is_reported() {
        let err = parse_netlist("R R1 1 0 1\n.tran 1e-5 1e-3\n").unwrap_err();
        assert_eq!(err, NetlistError::MissingEnd);
    }

    #[test]
    fn duplicate_name_is_case_insensitive() {
        let err = parse_netlist(&wrap("R Rload 1 0 1\nL rLOAD 1 0 2m")).unwrap_err();
        match err {
            NetlistError::DuplicateDevice { name, .. } => assert_eq!(name, "rLOAD"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_kind_is_reported_with_line() {
        let err = parse_netlist(&wrap("Q Q1 1 0 model")).unwrap_err();
        assert_eq!(
            err,
            NetlistError::UnknownDeviceKind {
                line: 1,
                kind: "Q".into()
            }
        );
    }

    #[test]
    fn suffix_table() {
        assert_eq!(parse_value("5m").unwrap(), 5.0 * 1e-3);
        assert_eq!(parse_value("2k").unwrap(), 2.0 * 1e3);
        assert_eq!(parse_value("3meg").unwrap(), 3.0 * 1e6);
        assert_eq!(parse_value("4u").unwrap(), 4.0 * 1e-6);
        assert_eq!(parse_value("7n").unwrap(), 7.0 * 1e-9);
        assert_eq!(parse_value("5mH").unwrap(), 5.0 * 1e-3);
        assert_eq!(parse_value("1e-3").unwrap(), 1e-3);
        assert_eq!(parse_value("1E3").unwrap(), 1e3);
        assert!(parse_value("5x").is_err());
        assert!(parse_value("").is_err());
    }

    #[test]
    fn validate_rejects_negative_resistance() {
        let c = parse_netlist(&wrap("R Rload 1 0 -1\nR R2 1 0 1")).unwrap();
        let errs = validate(&c).unwrap_err();
        assert!(errs.iter().any(|e| matches!(
            e,
            ValidationError::NonPositiveValue { device, param: "R", .. } if device == "Rload"
        )));
    }

    #[test]
    fn validate_rejects_passivity_violation() {
        let body = "L L1 1 0 1\nL L2 1 0 1\nK K1 L1 L2 1.1\nR R1 1 0 1";
        let c = parse_netlist(&wrap(body)).unwrap();
        let errs = validate(&c).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, ValidationError::PassivityViolation { device } if device == "K1")));
    }

    #[test]
    fn validate_accepts_two_bus_rl() {
        let body = "VSIN Va 1 0 100 60 0\nR Rline 1 2 1\nL Lload 2 0 5m";
        let c = parse_netlist(&wrap(body)).unwrap();
        assert!(validate(&c).is_ok());
    }

    #[test]
    fn validate_flags_dangling_node() {
        let body = "VSIN Va 1 0 100 60 0\nR Rline 1 2 1\nL Lload 3 0 5m\nR Rx 3 0 1";
        let c = parse_netlist(&wrap(body)).unwrap();
        let errs = validate(&c).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, ValidationError::DanglingNode { node } if node == "2")));
    }

    #[test]
    fn validate_flags_odd_poles() {
        let body = "VDC V1 1 0 10\n\
                    IM M1 1 1 1 rs=1 rr=1 lls=1m llr=1m lm=10m j=0.1 np=3";
        let c = parse_netlist(&wrap(body)).unwrap();
        let errs = validate(&c).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, ValidationError::OddPoleCount { np: 3, .. })));
    }

    #[test]
    fn validate_flags_bad_tran() {
        let c = parse_netlist("R R1 1 0 1\nR R2 1 0 1\n.tran 1e-2 1e-3\n.end\n").unwrap();
        let errs = validate(&c).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, ValidationError::BadTran { .. })));
    }

    #[test]
    fn round_trip_normal_form() {
        let text = "\
.title demo circuit
VSIN Va 1 0 169.7 60 0
R Rline 1 2 1.0
L Lload 2 0 5m ic=2
C Cf 2 0 4.7u
L L1 2 3 1m
L L2 3 0 1m
K K12 L1 L2 0.5m
IM M1 1 2 3 rs=0.435 rr=0.816 lls=2m llr=2m lm=69.3m j=0.089 d=0.01 np=4 wr0=1
.tran 1e-5 0.1 1e-6 1e-4 1e-4
.end
";
        let c1 = parse_netlist(text).unwrap();
        let normal = unparse(&c1);
        let c2 = parse_netlist(&normal).unwrap();
        assert_eq!(c1, c2);
        // Normal form is a fixed point.
        assert_eq!(normal, unparse(&c2));
    }

    proptest! {
        /// Engineering-suffix parsing is exact in binary floating point.
        #[test]
        fn suffix_parse_is_exact(x in -1e6f64..1e6, s in prop::sample::select(vec!["", "k", "meg", "m", "u", "n"])) {
            let token = format!("{x}{s}");
            let parsed = parse_value(&token).unwrap();
            prop_assert_eq!(parsed, x * suffix_factor(s).unwrap());
        }

        /// The parser is total: arbitrary input yields Ok or Err, never a
        /// panic.
        #[test]
        fn parser_is_total(text in "\\PC{0,200}") {
            let _ = parse_netlist(&text);
        }

        /// Structured random device soup also never panics.
        #[test]
        fn parser_is_total_structured(lines in prop::collection::vec("[RLCKVI.][a-z0-9 .=+-]{0,30}", 0..12)) {
            let _ = parse_netlist(&lines.join("\n"));
        }
    }
}
