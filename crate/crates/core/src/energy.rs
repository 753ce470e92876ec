//! POD termination and switching accounting.
//!
//! Termination is charged per 1-valued bit-time, switching per 1→0
//! (charging) transition on a line. Each chip drives three line groups:
//!
//! * data: 8 lanes, one bit per burst;
//! * index: 1 line carrying the 6-bit slot LSB first over bursts 0..6,
//!   idle for the last two bursts;
//! * flags: the DBI line (one flag per burst) plus two frame-type sideband
//!   lines sampled once per frame.
//!
//! Line history persists across frames of a stream and starts at 0.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::codec::{Frame, INDEX_BITS};
use crate::word::BURSTS;

/// Whether the frame-type sideband costs energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SidebandCost {
    /// Sideband lines are dedicated and counted in the flag group.
    #[default]
    Counted,
    /// Sideband rides otherwise idle address lines at no cost.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LaneState {
    data: u8,
    index: bool,
    dbi: bool,
    sideband: u8,
}

/// Counts for the three line groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupCounts {
    pub data: u64,
    pub index: u64,
    pub flags: u64,
}

impl GroupCounts {
    pub fn total(&self) -> u64 {
        self.data + self.index + self.flags
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EnergyCounters {
    pub term_data: u64,
    pub term_index: u64,
    pub term_flags: u64,
    pub sw_data: u64,
    pub sw_index: u64,
    pub sw_flags: u64,
}

impl EnergyCounters {
    pub fn termination_total(&self) -> u64 {
        self.term_data + self.term_index + self.term_flags
    }

    pub fn switching_total(&self) -> u64 {
        self.sw_data + self.sw_index + self.sw_flags
    }

    pub fn add_termination(&mut self, c: GroupCounts) {
        self.term_data += c.data;
        self.term_index += c.index;
        self.term_flags += c.flags;
    }

    pub fn add_switching(&mut self, c: GroupCounts) {
        self.sw_data += c.data;
        self.sw_index += c.index;
        self.sw_flags += c.flags;
    }
}

impl Add for EnergyCounters {
    type Output = EnergyCounters;
    fn add(self, o: EnergyCounters) -> EnergyCounters {
        EnergyCounters {
            term_data: self.term_data + o.term_data,
            term_index: self.term_index + o.term_index,
            term_flags: self.term_flags + o.term_flags,
            sw_data: self.sw_data + o.sw_data,
            sw_index: self.sw_index + o.sw_index,
            sw_flags: self.sw_flags + o.sw_flags,
        }
    }
}

impl AddAssign for EnergyCounters {
    fn add_assign(&mut self, o: EnergyCounters) {
        *self = *self + o;
    }
}

impl Sum for EnergyCounters {
    fn sum<I: Iterator<Item = EnergyCounters>>(iter: I) -> Self {
        iter.fold(EnergyCounters::default(), Add::add)
    }
}

/// Electrical constants. Termination current and line capacitance are the
/// DDR4 figures; supply voltage and bit time default to DDR4-2400.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    /// Extra current drawn while a line carries a 1 (A).
    pub i_term: f64,
    pub v_dd: f64,
    /// One bit-time (s).
    pub t_bit: f64,
    /// Capacitance charged per 1→0 transition (F).
    pub c_line: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            i_term: 13.75e-3,
            v_dd: 1.2,
            t_bit: 1.0 / 2400e6,
            c_line: 15e-12,
        }
    }
}

impl EnergyParams {
    pub fn is_valid(&self) -> bool {
        [self.i_term, self.v_dd, self.t_bit, self.c_line]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }

    pub fn joules_per_one(&self) -> f64 {
        self.i_term * self.v_dd * self.t_bit
    }

    pub fn joules_per_transition(&self) -> f64 {
        self.c_line * self.v_dd * self.v_dd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub counters: EnergyCounters,
    pub params: EnergyParams,
    /// All line groups.
    pub termination_j: f64,
    pub switching_j: f64,
    /// Data lines only.
    pub data_termination_j: f64,
    pub data_switching_j: f64,
}

impl EnergyReport {
    pub fn total_j(&self) -> f64 {
        self.termination_j + self.switching_j
    }
}

pub fn count_termination(f: &Frame, sideband: SidebandCost) -> GroupCounts {
    let side = match sideband {
        SidebandCost::Counted => f.sideband().count_ones() as u64,
        SidebandCost::Free => 0,
    };
    GroupCounts {
        data: f.payload.popcount() as u64,
        index: f.index_bits().count_ones() as u64,
        flags: f.dbi_flags.count_ones() as u64 + side,
    }
}

/// Counts 1→0 transitions produced by `f` and advances the line history.
pub fn count_switching(state: &mut LaneState, f: &Frame, sideband: SidebandCost) -> GroupCounts {
    let mut counts = GroupCounts::default();
    let index = f.index_bits();
    for b in 0..BURSTS {
        let byte = f.payload.burst(b);
        counts.data += (state.data & !byte).count_ones() as u64;
        state.data = byte;

        let idx = b < INDEX_BITS as usize && (index >> b) & 1 == 1;
        counts.index += (state.index && !idx) as u64;
        state.index = idx;

        let flag = (f.dbi_flags >> b) & 1 == 1;
        counts.flags += (state.dbi && !flag) as u64;
        state.dbi = flag;
    }
    if sideband == SidebandCost::Counted {
        let side = f.sideband();
        counts.flags += (state.sideband & !side).count_ones() as u64;
        state.sideband = side;
    }
    counts
}

pub fn to_joules(c: &EnergyCounters, p: &EnergyParams) -> EnergyReport {
    let per_one = p.joules_per_one();
    let per_sw = p.joules_per_transition();
    EnergyReport {
        counters: *c,
        params: *p,
        termination_j: c.termination_total() as f64 * per_one,
        switching_j: c.switching_total() as f64 * per_sw,
        data_termination_j: c.term_data as f64 * per_one,
        data_switching_j: c.sw_data as f64 * per_sw,
    }
}

/// Percentage reduction of `value` relative to `baseline` (positive = saving).
pub fn reduction_pct(baseline: u64, value: u64) -> f64 {
    if baseline == 0 {
        0.0
    } else {
        (baseline as f64 - value as f64) / baseline as f64 * 100.0
    }
}

/// Per-stream accumulator: one lane history plus running counters.
#[derive(Debug, Clone, Default)]
pub struct EnergyMeter {
    lanes: LaneState,
    counters: EnergyCounters,
    sideband: SidebandCost,
}

impl EnergyMeter {
    pub fn new(sideband: SidebandCost) -> Self {
        EnergyMeter {
            sideband,
            ..Default::default()
        }
    }

    pub fn observe(&mut self, f: &Frame) {
        self.counters.add_termination(count_termination(f, self.sideband));
        self.counters
            .add_switching(count_switching(&mut self.lanes, f, self.sideband));
    }

    pub fn counters(&self) -> EnergyCounters {
        self.counters
    }
}
