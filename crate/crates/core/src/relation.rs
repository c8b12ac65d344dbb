use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// The twelve relations of the challenge, in the order reports list them.
pub const CHALLENGE_RELATIONS: [&str; 12] = [
    "ChemicalCompoundElement",
    "CompanyParentOrganization",
    "CountryBordersWithCountry",
    "CountryOfficialLanguage",
    "PersonCauseOfDeath",
    "PersonEmployer",
    "PersonInstrument",
    "PersonLanguage",
    "PersonPlaceOfDeath",
    "PersonProfession",
    "RiverBasinsCountry",
    "StateSharesBorderState",
];

/// A relation identifier such as `PersonInstrument`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Relation(String);

impl Relation {
    pub fn new(name: impl Into<String>) -> Self {
        Relation(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Relation {
    fn from(s: &str) -> Self {
        Relation::new(s)
    }
}

/// The set of relations a run accepts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInventory(BTreeSet<Relation>);

impl RelationInventory {
    pub fn new<I, R>(relations: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: Into<Relation>,
    {
        RelationInventory(relations.into_iter().map(Into::into).collect())
    }

    pub fn challenge() -> Self {
        Self::new(CHALLENGE_RELATIONS)
    }

    pub fn contains(&self, relation: &str) -> bool {
        self.0.iter().any(|r| r.as_str() == relation)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Relation> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for RelationInventory {
    fn default() -> Self {
        Self::challenge()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn challenge_inventory_has_twelve() {
        let inv = RelationInventory::challenge();
        assert_eq!(inv.len(), 12);
        assert!(inv.contains("RiverBasinsCountry"));
        assert!(!inv.contains("PersonSpouse"));
    }
}
