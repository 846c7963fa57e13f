use std::collections::BTreeMap;

use super::{ProjectionKind, ProjectionSpec};
use crate::error::{Error, Result};

/// One registered projection family.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionEntry {
    pub name: &'static str,
    /// Single-letter column code used in comparison tables (E, C, P).
    pub letter: char,
    pub kind: ProjectionKind,
}

impl ProjectionEntry {
    pub fn spec_for(&self, equirect_width: usize) -> ProjectionSpec {
        ProjectionSpec::equivalent(self.kind, equirect_width)
    }
}

/// Name and letter lookup for the projection families.
#[derive(Debug, Clone)]
pub struct ProjectionRegistry {
    entries: BTreeMap<&'static str, ProjectionEntry>,
}

impl Default for ProjectionRegistry {
    fn default() -> Self {
        let mut r = ProjectionRegistry {
            entries: BTreeMap::new(),
        };
        r.register(ProjectionEntry {
            name: "equirect",
            letter: 'E',
            kind: ProjectionKind::Equirect,
        });
        r.register(ProjectionEntry {
            name: "tricyl",
            letter: 'C',
            kind: ProjectionKind::TriCylinder,
        });
        r.register(ProjectionEntry {
            name: "cubepad",
            letter: 'P',
            kind: ProjectionKind::CubePadding,
        });
        r
    }
}

impl ProjectionRegistry {
    pub fn register(&mut self, entry: ProjectionEntry) {
        self.entries.insert(entry.name, entry);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    /// Looks up by full name or table letter.
    pub fn get(&self, key: &str) -> Result<ProjectionEntry> {
        self.entries
            .values()
            .find(|e| e.name == key || (key.len() == 1 && key.starts_with(e.letter)))
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown projection '{key}' (known: {})",
                    self.names().collect::<Vec<_>>().join(", ")
                ))
            })
    }

    pub fn for_kind(&self, kind: ProjectionKind) -> ProjectionEntry {
        *self
            .entries
            .values()
            .find(|e| e.kind == kind)
            .expect("every projection kind is registered")
    }

    /// Parses a pair code such as `E+C` into two entries.
    pub fn pair(&self, code: &str) -> Result<(ProjectionEntry, ProjectionEntry)> {
        let (a, b) = code
            .split_once('+')
            .ok_or_else(|| Error::Config(format!("projection pair '{code}' must look like E+C")))?;
        let (a, b) = (self.get(a.trim())?, self.get(b.trim())?);
        if a.kind == b.kind {
            return Err(Error::Config(format!(
                "projection pair '{code}' repeats a projection"
            )));
        }
        Ok((a, b))
    }
}
