//! Gate-level circuits.
//!
//! Scalar depth counts CNOT gates only; single-qubit gates are free. Rotation
//! conventions are `RX(θ) = exp(-iθX/2)` and `RZ(θ) = exp(-iθZ/2)`.
//!
//! Circuits serialize to a line-oriented text form, one gate per line:
//!
//! ```text
//! # qubits 2
//! H 0
//! RZ 1,0.4
//! CNOT 0,1
//! ```

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, c, ONE, ZERO};
use crate::CMatrix;

/// Largest register for which [`Circuit::unitary`] builds a dense matrix.
pub const MAX_UNITARY_QUBITS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    /// Explicit identity; randomized compiling uses it for the trivial frame.
    I(usize),
    H(usize),
    X(usize),
    Y(usize),
    Z(usize),
    S(usize),
    Sdg(usize),
    Rx(usize, f64),
    Rz(usize, f64),
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn cnot(control: usize, target: usize) -> Gate {
        Gate::Cnot { control, target }
    }

    /// Pauli gate by index: 0 = I, 1 = X, 2 = Y, 3 = Z.
    pub fn pauli(index: usize, qubit: usize) -> Gate {
        match index {
            0 => Gate::I(qubit),
            1 => Gate::X(qubit),
            2 => Gate::Y(qubit),
            3 => Gate::Z(qubit),
            _ => panic!("pauli index {index} out of range"),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Gate::I(_) => "I",
            Gate::H(_) => "H",
            Gate::X(_) => "X",
            Gate::Y(_) => "Y",
            Gate::Z(_) => "Z",
            Gate::S(_) => "S",
            Gate::Sdg(_) => "SDG",
            Gate::Rx(..) => "RX",
            Gate::Rz(..) => "RZ",
            Gate::Cnot { .. } => "CNOT",
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::I(q) | Gate::H(q) | Gate::X(q) | Gate::Y(q) | Gate::Z(q) | Gate::S(q) | Gate::Sdg(q) => vec![q],
            Gate::Rx(q, _) | Gate::Rz(q, _) => vec![q],
            Gate::Cnot { control, target } => vec![control, target],
        }
    }

    pub fn is_entangling(&self) -> bool {
        matches!(self, Gate::Cnot { .. })
    }

    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::S(q) => Gate::Sdg(q),
            Gate::Sdg(q) => Gate::S(q),
            Gate::Rx(q, t) => Gate::Rx(q, -t),
            Gate::Rz(q, t) => Gate::Rz(q, -t),
            g => g,
        }
    }

    /// Gate matrix on its own qubits, first listed qubit most significant.
    pub fn matrix(&self) -> CMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match *self {
            Gate::I(_) => linalg::identity(2),
            Gate::H(_) => linalg::from_rows(2, &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]),
            Gate::X(_) => linalg::pauli_x(),
            Gate::Y(_) => linalg::pauli_y(),
            Gate::Z(_) => linalg::pauli_z(),
            Gate::S(_) => linalg::from_rows(2, &[ONE, ZERO, ZERO, linalg::I]),
            Gate::Sdg(_) => linalg::from_rows(2, &[ONE, ZERO, ZERO, -linalg::I]),
            Gate::Rx(_, t) => {
                let (s, co) = (t / 2.0).sin_cos();
                linalg::from_rows(2, &[c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)])
            }
            Gate::Rz(_, t) => linalg::from_rows(
                2,
                &[num_complex::Complex64::from_polar(1.0, -t / 2.0), ZERO, ZERO, num_complex::Complex64::from_polar(1.0, t / 2.0)],
            ),
            Gate::Cnot { .. } => linalg::from_rows(
                4,
                &[
                    ONE, ZERO, ZERO, ZERO, //
                    ZERO, ONE, ZERO, ZERO, //
                    ZERO, ZERO, ZERO, ONE, //
                    ZERO, ZERO, ONE, ZERO,
                ],
            ),
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let qs = self.qubits();
        if let Some(&q) = qs.iter().find(|&&q| q >= n_qubits) {
            return Err(Error::QubitOutOfRange { index: q, n_qubits });
        }
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(Error::invalid(format!("CNOT needs two distinct qubits, got {}", qs[0])));
        }
        Ok(())
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Gate::Rx(q, t) | Gate::Rz(q, t) => write!(f, "{} {q},{t}", self.kind()),
            Gate::Cnot { control, target } => write!(f, "CNOT {control},{target}"),
            _ => write!(f, "{} {}", self.kind(), self.qubits()[0]),
        }
    }
}

impl FromStr for Gate {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let (kind, args) = s.split_once(char::is_whitespace).ok_or_else(|| format!("missing operands in `{s}`"))?;
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        let qubit = |i: usize| -> std::result::Result<usize, String> {
            args.get(i)
                .ok_or_else(|| format!("missing operand {i} in `{s}`"))?
                .parse::<usize>()
                .map_err(|e| format!("bad qubit index in `{s}`: {e}"))
        };
        let angle = || -> std::result::Result<f64, String> {
            args.get(1)
                .ok_or_else(|| format!("missing angle in `{s}`"))?
                .parse::<f64>()
                .map_err(|e| format!("bad angle in `{s}`: {e}"))
        };
        let expect_args = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(format!("`{kind}` takes {n} operand(s), got {}", args.len()))
            }
        };
        let gate = match kind.to_ascii_uppercase().as_str() {
            "I" => Gate::I(qubit(0)?),
            "H" => Gate::H(qubit(0)?),
            "X" => Gate::X(qubit(0)?),
            "Y" => Gate::Y(qubit(0)?),
            "Z" => Gate::Z(qubit(0)?),
            "S" => Gate::S(qubit(0)?),
            "SDG" => Gate::Sdg(qubit(0)?),
            "RX" => Gate::Rx(qubit(0)?, angle()?),
            "RZ" => Gate::Rz(qubit(0)?, angle()?),
            "CNOT" => Gate::cnot(qubit(0)?, qubit(1)?),
            other => return Err(format!("unknown gate kind `{other}`")),
        };
        expect_args(gate.qubits().len() + usize::from(matches!(gate, Gate::Rx(..) | Gate::Rz(..))))?;
        Ok(gate)
    }
}

/// An ordered gate sequence on a fixed register.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit { n_qubits, gates: Vec::new() }
    }

    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        for g in &gates {
            g.validate(n_qubits)?;
        }
        Ok(Circuit { n_qubits, gates })
    }

    pub fn push(&mut self, gate: Gate) -> Result<&mut Self> {
        gate.validate(self.n_qubits)?;
        self.gates.push(gate);
        Ok(self)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Number of entangling (CNOT) gates.
    pub fn scalar_depth(&self) -> usize {
        self.gates.iter().filter(|g| g.is_entangling()).count()
    }

    /// `self` followed by `other`.
    pub fn then(&self, other: &Circuit) -> Result<Circuit> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, found: other.n_qubits });
        }
        let mut gates = self.gates.clone();
        gates.extend_from_slice(&other.gates);
        Ok(Circuit { n_qubits: self.n_qubits, gates })
    }

    /// Concatenates circuits on the same register.
    pub fn concat(n_qubits: usize, parts: &[Circuit]) -> Result<Circuit> {
        parts.iter().try_fold(Circuit::new(n_qubits), |acc, p| acc.then(p))
    }

    /// Relabels qubits: gate qubit `q` moves to `map[q]` on an `n_qubits` register.
    pub fn remap(&self, n_qubits: usize, map: &[usize]) -> Result<Circuit> {
        if map.len() < self.n_qubits {
            return Err(Error::invalid("qubit map shorter than the circuit register"));
        }
        let gates = self
            .gates
            .iter()
            .map(|g| match *g {
                Gate::I(q) => Gate::I(map[q]),
                Gate::H(q) => Gate::H(map[q]),
                Gate::X(q) => Gate::X(map[q]),
                Gate::Y(q) => Gate::Y(map[q]),
                Gate::Z(q) => Gate::Z(map[q]),
                Gate::S(q) => Gate::S(map[q]),
                Gate::Sdg(q) => Gate::Sdg(map[q]),
                Gate::Rx(q, t) => Gate::Rx(map[q], t),
                Gate::Rz(q, t) => Gate::Rz(map[q], t),
                Gate::Cnot { control, target } => Gate::cnot(map[control], map[target]),
            })
            .collect();
        Circuit::from_gates(n_qubits, gates)
    }

    /// Motion-reversal partner: reversed order, each gate inverted.
    pub fn inverse(&self) -> Circuit {
        Circuit { n_qubits: self.n_qubits, gates: self.gates.iter().rev().map(Gate::inverse).collect() }
    }

    /// The circuit repeated `k` times.
    pub fn power(&self, k: usize) -> Result<Circuit> {
        if k < 1 {
            return Err(Error::invalid("circuit power must be at least 1"));
        }
        Ok(Circuit { n_qubits: self.n_qubits, gates: self.gates.repeat(k) })
    }

    /// Splits the gate sequence before each boundary index.
    ///
    /// Boundaries must be strictly increasing and lie in `1..len`, so no
    /// fragment is empty.
    pub fn fragment(&self, boundaries: &[usize]) -> Result<Vec<Circuit>> {
        check_boundaries(boundaries, self.gates.len())?;
        let mut out = Vec::with_capacity(boundaries.len() + 1);
        let mut start = 0;
        for &b in boundaries.iter().chain(std::iter::once(&self.gates.len())) {
            out.push(Circuit { n_qubits: self.n_qubits, gates: self.gates[start..b].to_vec() });
            start = b;
        }
        Ok(out)
    }

    /// Noise amplification by CNOT folding: every CNOT becomes `2·round + 1`
    /// consecutive copies, for `round` in `0..=3`.
    pub fn qcna_fold(&self, round: usize) -> Result<Circuit> {
        let reps = qcna_scale(round)?;
        let mut gates = Vec::with_capacity(self.gates.len() + 2 * round * self.scalar_depth());
        for g in &self.gates {
            let n = if g.is_entangling() { reps } else { 1 };
            gates.extend(std::iter::repeat_n(*g, n));
        }
        Ok(Circuit { n_qubits: self.n_qubits, gates })
    }

    /// Randomized compiling: every CNOT is dressed with a random Pauli pair
    /// before it and the frame-propagated pair after it, leaving the circuit
    /// unitary unchanged up to a global sign.
    pub fn randomized_compile(&self, seed: u64) -> Circuit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gates = Vec::with_capacity(self.gates.len() + 4 * self.scalar_depth());
        for g in &self.gates {
            match *g {
                Gate::Cnot { control, target } => {
                    let (pc, pt) = (rng.random_range(0..4), rng.random_range(0..4));
                    let (qc, qt) = cnot_frame(pc, pt);
                    gates.push(Gate::pauli(pc, control));
                    gates.push(Gate::pauli(pt, target));
                    gates.push(*g);
                    gates.push(Gate::pauli(qc, control));
                    gates.push(Gate::pauli(qt, target));
                }
                other => gates.push(other),
            }
        }
        Circuit { n_qubits: self.n_qubits, gates }
    }

    /// Dense unitary of the whole circuit (gates applied first to last).
    pub fn unitary(&self) -> Result<CMatrix> {
        if self.n_qubits > MAX_UNITARY_QUBITS {
            return Err(Error::TooManyQubits(self.n_qubits));
        }
        let mut u = linalg::identity(1 << self.n_qubits);
        for g in &self.gates {
            linalg::apply_left(&mut u, &g.matrix(), &g.qubits(), self.n_qubits);
        }
        Ok(u)
    }

    /// Parses the text form. A `# qubits N` comment fixes the register size;
    /// otherwise it is inferred from the largest qubit index.
    pub fn parse(text: &str) -> Result<Circuit> {
        let mut declared = None;
        let mut gates = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(n) = comment.trim().strip_prefix("qubits") {
                    declared = Some(n.trim().parse::<usize>().map_err(|e| Error::Parse {
                        line: lineno + 1,
                        message: format!("bad qubit count: {e}"),
                    })?);
                }
                continue;
            }
            gates.push(line.parse::<Gate>().map_err(|message| Error::Parse { line: lineno + 1, message })?);
        }
        let inferred = gates.iter().flat_map(Gate::qubits).max().map_or(1, |q| q + 1);
        Circuit::from_gates(declared.unwrap_or(inferred), gates)
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# qubits {}", self.n_qubits)?;
        for g in &self.gates {
            writeln!(f, "{g}")?;
        }
        Ok(())
    }
}

impl FromStr for Circuit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Circuit::parse(s)
    }
}

/// Noise scale factor `2·round + 1` of a folding round.
pub fn qcna_scale(round: usize) -> Result<usize> {
    if round > 3 {
        return Err(Error::invalid(format!("QCNA round must be in 0..=3, got {round}")));
    }
    Ok(2 * round + 1)
}

pub(crate) fn check_boundaries(boundaries: &[usize], len: usize) -> Result<()> {
    let mut prev = 0;
    for &b in boundaries {
        if b <= prev || b >= len {
            return Err(Error::invalid(format!(
                "fragment boundaries must be strictly increasing within 1..{len}, got {boundaries:?}"
            )));
        }
        prev = b;
    }
    Ok(())
}

/// Pauli frame update through a CNOT: returns the pair `(P'_c, P'_t)` with
/// `CNOT · (P_c ⊗ P_t) = ± (P'_c ⊗ P'_t) · CNOT`.
///
/// In symplectic form X on the control spreads to the target and Z on the
/// target spreads back to the control.
pub fn cnot_frame(control: usize, target: usize) -> (usize, usize) {
    let (xc, zc) = symplectic(control);
    let (xt, zt) = symplectic(target);
    (from_symplectic(xc, zc ^ zt), from_symplectic(xt ^ xc, zt))
}

fn symplectic(p: usize) -> (bool, bool) {
    match p {
        0 => (false, false),
        1 => (true, false),
        2 => (true, true),
        3 => (false, true),
        _ => unreachable!(),
    }
}

fn from_symplectic(x: bool, z: bool) -> usize {
    match (x, z) {
        (false, false) => 0,
        (true, false) => 1,
        (true, true) => 2,
        (false, true) => 3,
    }
}
