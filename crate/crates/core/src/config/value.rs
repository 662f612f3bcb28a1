use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Track-building command. The integer ids are the encoding table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Command {
    S,
    L,
    R,
    DY,
}

impl Command {
    pub const ALL: [Command; 4] = [Command::S, Command::L, Command::R, Command::DY];

    pub fn id(self) -> u8 {
        match self {
            Command::S => 0,
            Command::L => 1,
            Command::R => 2,
            Command::DY => 3,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Command::S => "S",
            Command::L => "L",
            Command::R => "R",
            Command::DY => "DY",
        }
    }

    pub fn is_turn(self) -> bool {
        matches!(self, Command::L | Command::R)
    }

    pub fn is_dy(self) -> bool {
        self == Command::DY
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" => Ok(Command::S),
            "L" => Ok(Command::L),
            "R" => Ok(Command::R),
            "DY" => Ok(Command::DY),
            other => Err(format!("unknown command `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParameterValue {
    Int(i64),
    Float(f64),
    /// 1-indexed members.
    Set(BTreeSet<usize>),
    Tuple(Vec<f64>),
    Vector(Vec<f64>),
    Commands(Vec<(Command, f64)>),
}

/// How a configuration came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Random,
    TrainingFailure,
    Mutated,
    Crossover,
}

/// One point in a configuration space. Values are ordered as the schema's
/// parameters. Equality compares values only; provenance is bookkeeping.
#[derive(Debug, Clone)]
pub struct EnvConfiguration {
    values: Vec<ParameterValue>,
    provenance: Provenance,
}

impl EnvConfiguration {
    /// Builds a configuration without checking it; see [`super::ConfigSchema`]
    /// helpers for checked construction.
    pub(crate) fn from_parts(values: Vec<ParameterValue>, provenance: Provenance) -> Self {
        Self { values, provenance }
    }

    pub fn values(&self) -> &[ParameterValue] {
        &self.values
    }

    pub fn value(&self, index: usize) -> &ParameterValue {
        &self.values[index]
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub(crate) fn replace(
        &self,
        index: usize,
        value: ParameterValue,
        provenance: Provenance,
    ) -> Self {
        let mut values = self.values.clone();
        values[index] = value;
        Self { values, provenance }
    }

    pub fn into_values(self) -> Vec<ParameterValue> {
        self.values
    }
}

impl PartialEq for EnvConfiguration {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}
