//! Species line tables: which resonance lines each chemical contributes and
//! with what relative intensity.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One resonance line of a species: chemical-shift position and relative
/// intensity weight (number of equivalent nuclei, optionally corrected for
/// the excitation profile).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesLine {
    pub freq_ppm: f64,
    /// Relative intensity weight of the line, > 0.
    pub weight: f64,
}

/// A chemical species with one or more resonance lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub name: String,
    pub lines: Vec<SpeciesLine>,
}

/// Validated table of the species expected in a mixture.
///
/// Column `j` of the signal basis corresponds to species `j` of this table;
/// line indices run over species in order, then over lines within a species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesTable {
    species: Vec<Species>,
}

impl SpeciesTable {
    /// Builds a table, checking that every species has a unique non-empty
    /// name, at least one line, strictly positive weights and finite shifts.
    pub fn new(species: Vec<Species>) -> Result<Self> {
        if species.is_empty() {
            return Err(Error::invalid("species table must contain at least one species"));
        }
        for (j, sp) in species.iter().enumerate() {
            if sp.name.trim().is_empty() {
                return Err(Error::invalid(format!("species {j} has an empty name")));
            }
            if sp.lines.is_empty() {
                return Err(Error::invalid(format!("species '{}' has no lines", sp.name)));
            }
            for (i, line) in sp.lines.iter().enumerate() {
                if !line.freq_ppm.is_finite() {
                    return Err(Error::invalid(format!(
                        "species '{}' line {i} has non-finite shift",
                        sp.name
                    )));
                }
                if !(line.weight > 0.0) || !line.weight.is_finite() {
                    return Err(Error::invalid(format!(
                        "species '{}' line {i} has weight {}; weights must be > 0",
                        sp.name, line.weight
                    )));
                }
            }
            for other in &species[..j] {
                if other.name == sp.name {
                    return Err(Error::invalid(format!("duplicate species name '{}'", sp.name)));
                }
            }
        }
        Ok(SpeciesTable { species })
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    /// Number of species `r` (one basis column each).
    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    /// Total number of lines across all species.
    pub fn total_lines(&self) -> usize {
        self.species.iter().map(|s| s.lines.len()).sum()
    }

    /// Index of the species with the given name.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    /// Iterates `(species_index, line_index_within_species, &line)` in the
    /// global line order used by flattened parameter vectors.
    pub fn lines(&self) -> impl Iterator<Item = (usize, usize, &SpeciesLine)> {
        self.species
            .iter()
            .enumerate()
            .flat_map(|(j, sp)| sp.lines.iter().enumerate().map(move |(i, l)| (j, i, l)))
    }

    /// Tabulated shifts in ppm, in global line order.
    pub fn freqs_ppm(&self) -> Vec<f64> {
        self.lines().map(|(_, _, l)| l.freq_ppm).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(ppm: f64, w: f64) -> SpeciesLine {
        SpeciesLine { freq_ppm: ppm, weight: w }
    }

    #[test]
    fn accepts_a_two_species_table() {
        let t = SpeciesTable::new(vec![
            Species { name: "a".into(), lines: vec![line(1.0, 1.0), line(2.0, 1.0)] },
            Species { name: "b".into(), lines: vec![line(3.0, 6.0)] },
        ])
        .unwrap();
        assert_eq!(t.n_species(), 2);
        assert_eq!(t.total_lines(), 3);
        assert_eq!(t.freqs_ppm(), vec![1.0, 2.0, 3.0]);
        assert_eq!(t.index_of("b"), Some(1));
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(SpeciesTable::new(vec![]).is_err());
        assert!(SpeciesTable::new(vec![Species { name: " ".into(), lines: vec![line(1.0, 1.0)] }]).is_err());
        assert!(SpeciesTable::new(vec![Species { name: "a".into(), lines: vec![] }]).is_err());
        assert!(SpeciesTable::new(vec![Species { name: "a".into(), lines: vec![line(1.0, 0.0)] }]).is_err());
        assert!(SpeciesTable::new(vec![Species { name: "a".into(), lines: vec![line(f64::NAN, 1.0)] }]).is_err());
        let dup = SpeciesTable::new(vec![
            Species { name: "a".into(), lines: vec![line(1.0, 1.0)] },
            Species { name: "a".into(), lines: vec![line(2.0, 1.0)] },
        ]);
        assert!(dup.is_err());
    }
}
