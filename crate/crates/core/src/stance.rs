//! Stance labels, their provenance, and partial label assignments.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::graph::Interner;

/// One of the two stance groups of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stance {
    S1,
    S2,
}

impl Stance {
    pub const ALL: [Stance; 2] = [Stance::S1, Stance::S2];

    pub fn index(self) -> usize {
        match self {
            Stance::S1 => 0,
            Stance::S2 => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Stance> {
        match index {
            0 => Some(Stance::S1),
            1 => Some(Stance::S2),
            _ => None,
        }
    }

    pub fn opposite(self) -> Stance {
        match self {
            Stance::S1 => Stance::S2,
            Stance::S2 => Stance::S1,
        }
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stance::S1 => f.write_str("S1"),
            Stance::S2 => f.write_str("S2"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StanceError {
    #[error("stance display names must be non-empty")]
    EmptyName,
    #[error("stance display names must differ, both are {0:?}")]
    DuplicateName(String),
    #[error("unknown stance name {0:?}")]
    UnknownName(String),
    #[error("unknown provenance {0:?}")]
    UnknownProvenance(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("entity id {id} outside assignment domain of size {domain}")]
    OutOfDomain { id: u32, domain: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dataset-specific display names of the two stances. Names are case-sensitive
/// and must differ from each other.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceNames {
    s1: String,
    s2: String,
}

impl StanceNames {
    pub fn new(s1: impl Into<String>, s2: impl Into<String>) -> Result<Self, StanceError> {
        let (s1, s2) = (s1.into(), s2.into());
        if s1.is_empty() || s2.is_empty() {
            return Err(StanceError::EmptyName);
        }
        if s1 == s2 {
            return Err(StanceError::DuplicateName(s1));
        }
        Ok(Self { s1, s2 })
    }

    /// "believe" / "disbelieve"
    pub fn climate() -> Self {
        Self::new("believe", "disbelieve").expect("distinct names")
    }

    /// "pro" / "anti"
    pub fn gun_control() -> Self {
        Self::new("pro", "anti").expect("distinct names")
    }

    pub fn name(&self, stance: Stance) -> &str {
        match stance {
            Stance::S1 => &self.s1,
            Stance::S2 => &self.s2,
        }
    }

    pub fn parse(&self, name: &str) -> Result<Stance, StanceError> {
        if name == self.s1 {
            Ok(Stance::S1)
        } else if name == self.s2 {
            Ok(Stance::S2)
        } else {
            Err(StanceError::UnknownName(name.to_string()))
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            s1: self.s2.clone(),
            s2: self.s1.clone(),
        }
    }
}

impl Default for StanceNames {
    fn default() -> Self {
        Self::new("s1", "s2").expect("distinct names")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Seed,
    Propagated,
    Predicted,
    Annotated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Seed => "seed",
            Provenance::Propagated => "propagated",
            Provenance::Predicted => "predicted",
            Provenance::Annotated => "annotated",
        }
    }

    pub fn parse(s: &str) -> Result<Self, StanceError> {
        match s {
            "seed" => Ok(Provenance::Seed),
            "propagated" => Ok(Provenance::Propagated),
            "predicted" => Ok(Provenance::Predicted),
            "annotated" => Ok(Provenance::Annotated),
            other => Err(StanceError::UnknownProvenance(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub stance: Stance,
    pub provenance: Provenance,
    /// Iteration at which the label was assigned (0 for seeds and external labels).
    pub iteration: u32,
}

impl Assignment {
    pub fn new(stance: Stance, provenance: Provenance, iteration: u32) -> Self {
        Self {
            stance,
            provenance,
            iteration,
        }
    }
}

/// Partial map from dense entity ids `0..domain` to a stance with provenance.
///
/// Each entity holds at most one label. Entries with [`Provenance::Seed`] are
/// never replaced through [`StanceAssignment::assign`].
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct StanceAssignment {
    slots: Vec<Option<Assignment>>,
}

impl StanceAssignment {
    pub fn new(domain: usize) -> Self {
        Self {
            slots: vec![None; domain],
        }
    }

    pub fn domain(&self) -> usize {
        self.slots.len()
    }

    pub fn get(&self, id: u32) -> Option<&Assignment> {
        self.slots.get(id as usize).and_then(Option::as_ref)
    }

    pub fn stance(&self, id: u32) -> Option<Stance> {
        self.get(id).map(|a| a.stance)
    }

    /// Sets the label of `id` unless it already holds a seed label. Returns
    /// whether the slot was written.
    pub fn assign(&mut self, id: u32, assignment: Assignment) -> Result<bool, StanceError> {
        let domain = self.slots.len();
        let slot = self
            .slots
            .get_mut(id as usize)
            .ok_or(StanceError::OutOfDomain { id, domain })?;
        if matches!(slot, Some(a) if a.provenance == Provenance::Seed) {
            return Ok(false);
        }
        *slot = Some(assignment);
        Ok(true)
    }

    pub fn clear(&mut self, id: u32) {
        if let Some(slot) = self.slots.get_mut(id as usize) {
            *slot = None;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &Assignment)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|a| (i as u32, a)))
    }

    pub fn len(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(Option::is_none)
    }

    pub fn count_by_stance(&self) -> [usize; 2] {
        let mut counts = [0usize; 2];
        for (_, a) in self.iter() {
            counts[a.stance.index()] += 1;
        }
        counts
    }

    /// Equality of membership and stance, ignoring provenance and iteration.
    pub fn same_labels(&self, other: &StanceAssignment) -> bool {
        self.slots.len() == other.slots.len()
            && self
                .slots
                .iter()
                .zip(&other.slots)
                .all(|(a, b)| a.map(|a| a.stance) == b.map(|b| b.stance))
    }

    /// Re-keys labels from one name space to another by name. Entities whose
    /// name is absent from `to` are dropped.
    pub fn transfer(&self, from: &Interner, to: &Interner) -> Self {
        let mut out = Self::new(to.len());
        for (id, a) in self.iter() {
            if let Some(t) = to.get(from.name(id)) {
                out.slots[t as usize] = Some(*a);
            }
        }
        out
    }

    /// Copy with S1 and S2 exchanged on every entry.
    pub fn mirrored(&self) -> Self {
        Self {
            slots: self
                .slots
                .iter()
                .map(|s| {
                    s.map(|a| Assignment {
                        stance: a.stance.opposite(),
                        ..a
                    })
                })
                .collect(),
        }
    }

    /// Writes `entity_id<TAB>stance<TAB>provenance<TAB>iteration` lines in id order.
    pub fn write_tsv<W: Write>(
        &self,
        mut out: W,
        names: &Interner,
        stances: &StanceNames,
    ) -> std::io::Result<()> {
        for (id, a) in self.iter() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                names.name(id),
                stances.name(a.stance),
                a.provenance.as_str(),
                a.iteration
            )?;
        }
        Ok(())
    }
}

/// One line of a label file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRecord {
    pub entity: String,
    pub stance: Option<Stance>,
    pub provenance: Provenance,
    pub iteration: u32,
}

/// Reads label files: `entity<TAB>stance` (truth files), annotation results
/// (a third column of per-tweet classes, ignored here) or the full
/// four-column assignment format. A stance column of `undetermined` yields a
/// record with no stance. Blank lines are skipped.
pub fn read_label_records<R: BufRead>(
    input: R,
    stances: &StanceNames,
    default_provenance: Provenance,
) -> Result<Vec<LabelRecord>, StanceError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| StanceError::Parse {
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if !(2..=4).contains(&cols.len()) {
            return Err(err(format!("expected 2 to 4 columns, found {}", cols.len())));
        }
        if cols[0].is_empty() {
            return Err(err("empty entity id".into()));
        }
        let stance = match cols[1] {
            "undetermined" => None,
            name => Some(stances.parse(name).map_err(|e| err(e.to_string()))?),
        };
        let (provenance, iteration) = if cols.len() == 4 {
            let p = Provenance::parse(cols[2]).map_err(|e| err(e.to_string()))?;
            let it = cols[3]
                .parse::<u32>()
                .map_err(|e| err(format!("bad iteration {:?}: {e}", cols[3])))?;
            (p, it)
        } else {
            (default_provenance, 0)
        };
        records.push(LabelRecord {
            entity: cols[0].to_string(),
            stance,
            provenance,
            iteration,
        });
    }
    Ok(records)
}

/// Projects label records onto the id space of `names`. Records for unknown
/// entities and undetermined records are skipped; the number of skipped
/// unknown entities is returned alongside.
pub fn assignment_from_records(
    records: &[LabelRecord],
    names: &Interner,
) -> (StanceAssignment, usize) {
    let mut out = StanceAssignment::new(names.len());
    let mut unknown = 0;
    for r in records {
        match (names.get(&r.entity), r.stance) {
            (Some(id), Some(stance)) => {
                out.slots[id as usize] = Some(Assignment::new(stance, r.provenance, r.iteration));
            }
            (None, _) => unknown += 1,
            (Some(_), None) => {}
        }
    }
    (out, unknown)
}
