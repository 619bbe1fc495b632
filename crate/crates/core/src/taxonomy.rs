//! Category, herb-role and conflict vocabularies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unrecognised {kind}: {value:?}")]
pub struct VocabularyError {
    pub kind: &'static str,
    pub value: String,
}

/// The seven record elements plus `Unknown` for entities the extractor could not place.
///
/// Declaration order is the taxonomy order used for tie-breaks and for output layout.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Disease,
    RecommendedFormula,
    HerbalIngredient,
    SymptomsPopulation,
    PulseTongue,
    Contraindication,
    PreparationMethod,
    #[default]
    Unknown,
}

impl Category {
    pub const KNOWN: [Category; 7] = [
        Category::Disease,
        Category::RecommendedFormula,
        Category::HerbalIngredient,
        Category::SymptomsPopulation,
        Category::PulseTongue,
        Category::Contraindication,
        Category::PreparationMethod,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Category::Disease => "disease",
            Category::RecommendedFormula => "recommended_formula",
            Category::HerbalIngredient => "herbal_ingredient",
            Category::SymptomsPopulation => "symptoms_population",
            Category::PulseTongue => "pulse_tongue",
            Category::Contraindication => "contraindication",
            Category::PreparationMethod => "preparation_method",
            Category::Unknown => "unknown",
        }
    }

    /// Section header text used in rendered records, summaries and answers.
    pub fn title(self) -> &'static str {
        match self {
            Category::Disease => "Disease",
            Category::RecommendedFormula => "Recommended Formulas",
            Category::HerbalIngredient => "Herbal Components",
            Category::SymptomsPopulation => "Applicable Symptoms and Population",
            Category::PulseTongue => "Pulse and Tongue Diagnosis",
            Category::Contraindication => "Contraindications",
            Category::PreparationMethod => "Preparation Methods",
            Category::Unknown => "Unclassified",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Category::Disease => "Description of disease patterns",
            Category::RecommendedFormula => "Effective herbal formulas for specific diseases",
            Category::HerbalIngredient => {
                "Composition of monarch, minister, assistant, courier herbs and their synergies"
            }
            Category::SymptomsPopulation => "Target patient profiles",
            Category::PulseTongue => "Diagnostic tongue and pulse characteristics",
            Category::Contraindication => "Usage restrictions",
            Category::PreparationMethod => "Special preparation techniques",
            Category::Unknown => "Entities without an assigned category",
        }
    }

    /// Position in taxonomy order; `Unknown` sorts last.
    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<Category> {
        Category::KNOWN.get(i).copied().or(if i == 7 { Some(Category::Unknown) } else { None })
    }

    pub fn is_known(self) -> bool {
        self != Category::Unknown
    }

    /// Matches a bracketed section title such as `Herbal Components`.
    pub fn from_title(title: &str) -> Option<Category> {
        let t = title.trim();
        Category::KNOWN.into_iter().find(|c| c.title().eq_ignore_ascii_case(t))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Category {
    type Err = VocabularyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        let c = match k.as_str() {
            "disease" | "diseases" => Category::Disease,
            "recommended_formula" | "recommended_formulas" | "formula" | "formulas" => {
                Category::RecommendedFormula
            }
            "herbal_ingredient" | "herbal_ingredients" | "herb" | "herbs" | "herbal_components" => {
                Category::HerbalIngredient
            }
            "symptoms_population" | "symptoms" | "population" => Category::SymptomsPopulation,
            "pulse_tongue" | "pulse_and_tongue" => Category::PulseTongue,
            "contraindication" | "contraindications" => Category::Contraindication,
            "preparation_method" | "preparation_methods" | "preparation" => {
                Category::PreparationMethod
            }
            "unknown" => Category::Unknown,
            _ => {
                return Err(VocabularyError { kind: "category", value: s.to_string() });
            }
        };
        Ok(c)
    }
}

/// Herb role within a formula.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Sovereign,
    Minister,
    Assistant,
    Courier,
    #[default]
    Unassigned,
}

impl Role {
    pub const ASSIGNED: [Role; 4] = [Role::Sovereign, Role::Minister, Role::Assistant, Role::Courier];

    pub fn key(self) -> &'static str {
        match self {
            Role::Sovereign => "sovereign",
            Role::Minister => "minister",
            Role::Assistant => "assistant",
            Role::Courier => "courier",
            Role::Unassigned => "unassigned",
        }
    }

    /// Label used in summaries.
    pub fn display_name(self) -> &'static str {
        match self {
            Role::Sovereign => "Monarch",
            Role::Minister => "Minister",
            Role::Assistant => "Assistant",
            Role::Courier => "Courier",
            Role::Unassigned => "Unassigned",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Role {
    type Err = VocabularyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sovereign" | "monarch" | "emperor" | "king" => Ok(Role::Sovereign),
            "minister" => Ok(Role::Minister),
            "assistant" => Ok(Role::Assistant),
            "courier" | "envoy" | "guide" => Ok(Role::Courier),
            "unassigned" | "" => Ok(Role::Unassigned),
            _ => Err(VocabularyError { kind: "role", value: s.to_string() }),
        }
    }
}

/// Tag carried by records whose sources disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictTag {
    TheoryDifference,
    SourceConflict,
    PracticalProblem,
}

impl ConflictTag {
    pub fn key(self) -> &'static str {
        match self {
            ConflictTag::TheoryDifference => "theory_difference",
            ConflictTag::SourceConflict => "source_conflict",
            ConflictTag::PracticalProblem => "practical_problem",
        }
    }
}

impl FromStr for ConflictTag {
    type Err = VocabularyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "theory_difference" => Ok(ConflictTag::TheoryDifference),
            "source_conflict" => Ok(ConflictTag::SourceConflict),
            "practical_problem" => Ok(ConflictTag::PracticalProblem),
            _ => Err(VocabularyError { kind: "conflict tag", value: s.to_string() }),
        }
    }
}
